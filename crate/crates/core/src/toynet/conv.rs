//! Same-size dilated 2D convolution with zero padding, forward and backward.

use crate::error::{Error, Result};
use crate::grid::GridF;

/// Kernel weights are laid out `[ky][kx][in][out]` so the output channels
/// of one tap are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub kernel_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub dilation: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(kernel_size: usize, in_channels: usize, out_channels: usize, dilation: usize) -> Self {
        assert!(kernel_size % 2 == 1, "kernel size must be odd");
        assert!(dilation >= 1, "dilation must be positive");
        Self {
            kernel_size,
            in_channels,
            out_channels,
            dilation,
            weight: vec![0.0; kernel_size * kernel_size * in_channels * out_channels],
            bias: vec![0.0; out_channels],
        }
    }

    /// Number of input pixels spanned along one axis.
    pub fn receptive_span(&self) -> usize {
        (self.kernel_size - 1) * self.dilation + 1
    }

    /// Reach of the kernel from its center, in pixels.
    pub fn radius(&self) -> usize {
        (self.kernel_size - 1) / 2 * self.dilation
    }

    #[inline]
    pub fn weight_index(&self, ky: usize, kx: usize, i: usize, o: usize) -> usize {
        ((ky * self.kernel_size + kx) * self.in_channels + i) * self.out_channels + o
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.kernel_size;
        if k.is_multiple_of(2) || self.dilation == 0 {
            return Err(Error::InvalidInput(format!(
                "conv layer needs an odd kernel and positive dilation (k={k}, d={})",
                self.dilation
            )));
        }
        if self.weight.len() != k * k * self.in_channels * self.out_channels
            || self.bias.len() != self.out_channels
        {
            return Err(Error::InvalidInput("conv layer tensor sizes disagree with its shape".into()));
        }
        Ok(())
    }

    /// Input offsets `(dy, dx)` of each tap, in kernel order.
    fn taps(&self) -> impl Iterator<Item = (usize, usize, isize, isize)> + '_ {
        let k = self.kernel_size;
        let half = (k / 2) as isize;
        let d = self.dilation as isize;
        (0..k).flat_map(move |ky| {
            (0..k).map(move |kx| (ky, kx, (ky as isize - half) * d, (kx as isize - half) * d))
        })
    }
}

#[inline]
fn offset(p: usize, delta: isize, len: usize) -> Option<usize> {
    let q = p as isize + delta;
    (q >= 0 && (q as usize) < len).then_some(q as usize)
}

/// `out[y][x][o] = bias[o] + sum over taps and input channels`, with taps
/// spaced `dilation` pixels apart and reads outside the image taken as zero.
pub fn dilated_conv2d(input: &GridF, layer: &ConvLayer) -> Result<GridF> {
    let (h, w, c) = input.dims();
    if c != layer.in_channels {
        return Err(Error::InvalidInput(format!(
            "conv expects {} input channels, got {c}",
            layer.in_channels
        )));
    }
    let co = layer.out_channels;
    let mut out = Vec::with_capacity(h * w * co);
    for y in 0..h {
        for x in 0..w {
            let start = out.len();
            out.extend_from_slice(&layer.bias);
            let acc = &mut out[start..];
            for (ky, kx, dy, dx) in layer.taps() {
                let (Some(yy), Some(xx)) = (offset(y, dy, h), offset(x, dx, w)) else {
                    continue;
                };
                let px = input.pixel(yy, xx);
                let base = layer.weight_index(ky, kx, 0, 0);
                for (i, &a) in px.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    let wrow = &layer.weight[base + i * co..base + (i + 1) * co];
                    for (s, &wv) in acc.iter_mut().zip(wrow) {
                        *s += a * wv;
                    }
                }
            }
        }
    }
    Ok(GridF::from_raw(h, w, co, out))
}

/// Accumulates the layer's weight and bias gradients into `grad` and, when
/// `grad_input` is given, the gradient with respect to the input.
pub(crate) fn conv_backward(
    input: &GridF,
    layer: &ConvLayer,
    grad_out: &GridF,
    grad: &mut ConvLayer,
    mut grad_input: Option<&mut [f64]>,
) {
    let (h, w, ci) = input.dims();
    let co = layer.out_channels;
    debug_assert_eq!(grad_out.dims(), (h, w, co));
    // `[ky][kx][out][in]` copy so the input-gradient update runs over
    // contiguous input channels.
    let kk = layer.kernel_size * layer.kernel_size;
    let mut transposed = vec![0.0; layer.weight.len()];
    for t in 0..kk {
        for i in 0..ci {
            for o in 0..co {
                transposed[(t * co + o) * ci + i] = layer.weight[(t * ci + i) * co + o];
            }
        }
    }
    for y in 0..h {
        for x in 0..w {
            let g = grad_out.pixel(y, x);
            for (b, &gv) in grad.bias.iter_mut().zip(g) {
                *b += gv;
            }
            for (ky, kx, dy, dx) in layer.taps() {
                let (Some(yy), Some(xx)) = (offset(y, dy, h), offset(x, dx, w)) else {
                    continue;
                };
                let px = input.pixel(yy, xx);
                let base = layer.weight_index(ky, kx, 0, 0);
                for (i, &a) in px.iter().enumerate() {
                    if a != 0.0 {
                        let gw = &mut grad.weight[base + i * co..base + (i + 1) * co];
                        for (s, &gv) in gw.iter_mut().zip(g) {
                            *s += a * gv;
                        }
                    }
                }
                if let Some(gi) = grad_input.as_deref_mut() {
                    let dst = &mut gi[(yy * w + xx) * ci..(yy * w + xx + 1) * ci];
                    let tap = &transposed[base..base + ci * co];
                    for (wcol, &gv) in tap.chunks_exact(ci).zip(g) {
                        if gv == 0.0 {
                            continue;
                        }
                        for (d, &wv) in dst.iter_mut().zip(wcol) {
                            *d += wv * gv;
                        }
                    }
                }
            }
        }
    }
}
