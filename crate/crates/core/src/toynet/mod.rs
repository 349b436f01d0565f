//! A small segmentation network: a stride-1 convolutional trunk followed by
//! parallel dilated heads whose outputs are summed into the class logits.
//!
//! ```text
//! image (HxWx1)
//!   -> conv3x3 1->16, relu -> conv3x3 16->16, relu -> conv3x3 16->16, relu
//!   -> { conv3x3 d=1, conv3x3 d=2, conv3x3 d=4 } (16->3 each)
//!   -> elementwise sum = logits (HxWx3)
//! ```

mod checkpoint;
mod conv;
mod train;

use std::hash::{Hash, Hasher};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, LayerEntry};
pub use conv::{dilated_conv2d, ConvLayer};
pub use train::{init_params, train, train_with_progress, write_loss_log, TrainConfig, TrainOutcome};

use crate::error::{Error, Result};
use crate::grid::GridF;
use crate::labelgen::NUM_CLASSES;

pub const KERNEL_SIZE: usize = 3;
pub const TRUNK_CHANNELS: usize = 16;
pub const TRUNK_DEPTH: usize = 3;
pub const HEAD_DILATIONS: [usize; 3] = [1, 2, 4];

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    /// Each trunk layer is followed by a rectifier.
    pub trunk: Vec<ConvLayer>,
    /// Heads all read the last trunk activation; their outputs are summed.
    pub heads: Vec<ConvLayer>,
}

/// Parameter gradients share the parameter layout.
pub type Gradients = NetworkParams;

impl NetworkParams {
    /// The standard architecture with all weights and biases zero.
    pub fn zeros() -> Self {
        let mut trunk = Vec::with_capacity(TRUNK_DEPTH);
        let mut c_in = 1;
        for _ in 0..TRUNK_DEPTH {
            trunk.push(ConvLayer::zeros(KERNEL_SIZE, c_in, TRUNK_CHANNELS, 1));
            c_in = TRUNK_CHANNELS;
        }
        let heads = HEAD_DILATIONS
            .iter()
            .map(|&d| ConvLayer::zeros(KERNEL_SIZE, TRUNK_CHANNELS, NUM_CLASSES, d))
            .collect();
        Self { trunk, heads }
    }

    pub fn zeros_like(&self) -> Self {
        let blank = |l: &ConvLayer| {
            ConvLayer::zeros(l.kernel_size, l.in_channels, l.out_channels, l.dilation)
        };
        Self {
            trunk: self.trunk.iter().map(blank).collect(),
            heads: self.heads.iter().map(blank).collect(),
        }
    }

    pub fn layers(&self) -> impl Iterator<Item = &ConvLayer> {
        self.trunk.iter().chain(&self.heads)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut ConvLayer> {
        self.trunk.iter_mut().chain(self.heads.iter_mut())
    }

    /// All scalars in checkpoint order: per layer, weights then biases.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers().flat_map(|l| l.weight.iter().chain(&l.bias))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn num_values(&self) -> usize {
        self.layers().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &NetworkParams) {
        for (p, &g) in self.values_mut().zip(other.values()) {
            *p += alpha * g;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trunk.is_empty() || self.heads.is_empty() {
            return Err(Error::InvalidInput("network needs a trunk and at least one head".into()));
        }
        let mut c = self.trunk[0].in_channels;
        for l in &self.trunk {
            l.validate()?;
            if l.in_channels != c {
                return Err(Error::InvalidInput("trunk channel counts do not chain".into()));
            }
            c = l.out_channels;
        }
        for l in &self.heads {
            l.validate()?;
            if l.in_channels != c || l.out_channels != self.heads[0].out_channels {
                return Err(Error::InvalidInput("head shapes do not match the trunk".into()));
            }
        }
        Ok(())
    }

    fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for l in self.layers() {
            (l.kernel_size, l.in_channels, l.out_channels, l.dilation).hash(&mut h);
        }
        for v in self.values() {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

/// Activations retained by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    fingerprint: u64,
    input: GridF,
    /// Trunk pre-activations, one per trunk layer.
    pre: Vec<GridF>,
    /// Rectified trunk outputs, one per trunk layer.
    post: Vec<GridF>,
}

impl ForwardCache {
    pub fn pre_activations(&self) -> &[GridF] {
        &self.pre
    }
}

fn relu(z: &GridF) -> GridF {
    let (h, w, c) = z.dims();
    GridF::from_raw(h, w, c, z.data().iter().map(|&v| v.max(0.0)).collect())
}

/// Runs the network, returning logits and the cache needed for backward.
pub fn forward(params: &NetworkParams, image: &GridF) -> Result<(GridF, ForwardCache)> {
    let mut pre = Vec::with_capacity(params.trunk.len());
    let mut post: Vec<GridF> = Vec::with_capacity(params.trunk.len());
    for layer in &params.trunk {
        let z = dilated_conv2d(post.last().unwrap_or(image), layer)?;
        post.push(relu(&z));
        pre.push(z);
    }
    let features = post.last().expect("trunk is non-empty");
    let mut logits = dilated_conv2d(features, &params.heads[0])?;
    for head in &params.heads[1..] {
        let out = dilated_conv2d(features, head)?;
        for (s, v) in logits.data_mut().iter_mut().zip(out.data()) {
            *s += v;
        }
    }
    let cache = ForwardCache {
        fingerprint: params.fingerprint(),
        input: image.clone(),
        pre,
        post,
    };
    Ok((logits, cache))
}

/// Logits only.
pub fn predict(params: &NetworkParams, image: &GridF) -> Result<GridF> {
    forward(params, image).map(|(logits, _)| logits)
}

/// Exact parameter gradients of a scalar loss given its gradient with
/// respect to the logits.
pub fn backward(params: &NetworkParams, cache: &ForwardCache, grad_logits: &GridF) -> Result<Gradients> {
    if cache.fingerprint != params.fingerprint() || cache.post.len() != params.trunk.len() {
        return Err(Error::InvalidState(
            "forward cache was produced with different parameters".into(),
        ));
    }
    let (h, w, _) = cache.input.dims();
    let out_c = params.heads[0].out_channels;
    if grad_logits.dims() != (h, w, out_c) {
        return Err(Error::InvalidState(format!(
            "logit gradient is {:?}, cache expects {:?}",
            grad_logits.dims(),
            (h, w, out_c)
        )));
    }
    let mut grads = params.zeros_like();
    let depth = params.trunk.len();
    let features = &cache.post[depth - 1];

    // The sum fusion passes the logit gradient unchanged to every head.
    let mut upstream = vec![0.0; features.data().len()];
    for (head, g) in params.heads.iter().zip(grads.heads.iter_mut()) {
        conv::conv_backward(features, head, grad_logits, g, Some(&mut upstream));
    }

    for k in (0..depth).rev() {
        let pre = &cache.pre[k];
        for (g, &z) in upstream.iter_mut().zip(pre.data()) {
            if z <= 0.0 {
                *g = 0.0;
            }
        }
        let (hh, ww, cc) = pre.dims();
        let grad_pre = GridF::from_raw(hh, ww, cc, upstream);
        let input = if k == 0 { &cache.input } else { &cache.post[k - 1] };
        let mut next = (k > 0).then(|| vec![0.0; input.data().len()]);
        conv::conv_backward(input, &params.trunk[k], &grad_pre, &mut grads.trunk[k], next.as_deref_mut());
        upstream = next.unwrap_or_default();
    }
    Ok(grads)
}
