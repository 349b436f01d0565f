//! Grid types shared by every stage, plus the per-pixel primitives
//! (softmax over channels, argmax, bilinear resampling).
//!
//! Real-valued grids are stored row-major with the channel index innermost,
//! so a pixel's channel vector is a contiguous slice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single-channel grid of small class labels (or gray levels).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridU8 {
    height: usize,
    width: usize,
    classes: usize,
    data: Vec<u8>,
}

impl GridU8 {
    /// `classes` is the declared class count; every value must be below it.
    pub fn new(height: usize, width: usize, classes: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::InvalidInput(format!(
                "label grid of {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v as usize >= classes) {
            return Err(Error::InvalidInput(format!(
                "label value {v} out of range for {classes} classes"
            )));
        }
        Ok(Self {
            height,
            width,
            classes,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, classes: usize, value: u8) -> Self {
        assert!((value as usize) < classes);
        Self {
            height,
            width,
            classes,
            data: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn count(&self, value: u8) -> usize {
        self.data.iter().filter(|&&v| v == value).count()
    }
}

/// A real-valued `height x width x channels` grid with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct GridF {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl GridF {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::InvalidInput(format!(
                "grid of {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value {} at flat index {i}",
                data[i]
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    /// Builds a grid from `f(y, x, c)`. Panics if `f` yields a non-finite value.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    let v = f(y, x, c);
                    assert!(v.is_finite(), "non-finite grid value at ({y},{x},{c})");
                    data.push(v);
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub(crate) fn from_raw(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.channels)
    }

    /// Copy of one channel as a single-channel grid.
    pub fn channel(&self, c: usize) -> GridF {
        assert!(c < self.channels);
        let data = self.pixels().map(|p| p[c]).collect();
        GridF::from_raw(self.height, self.width, 1, data)
    }
}

/// Axis-aligned pixel rectangle, half-open: `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BoxI {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl BoxI {
    pub fn new(x0: i64, y0: i64, x1: i64, y1: i64) -> Result<Self> {
        let b = Self { x0, y0, x1, y1 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x0 < self.x1 && self.y0 < self.y1 {
            Ok(())
        } else {
            Err(Error::InvalidAnnotation(format!(
                "empty box ({}, {}, {}, {})",
                self.x0, self.y0, self.x1, self.y1
            )))
        }
    }

    pub fn width(&self) -> i64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> i64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> i64 {
        self.width() * self.height()
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Square (Chebyshev) dilation by `r` pixels on every side.
    pub fn dilate(&self, r: i64) -> BoxI {
        BoxI {
            x0: self.x0 - r,
            y0: self.y0 - r,
            x1: self.x1 + r,
            y1: self.y1 + r,
        }
    }

    pub fn intersection(&self, other: &BoxI) -> Option<BoxI> {
        let b = BoxI {
            x0: self.x0.max(other.x0),
            y0: self.y0.max(other.y0),
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
        };
        (b.x0 < b.x1 && b.y0 < b.y1).then_some(b)
    }

    /// Clip to a `height x width` image; `None` if nothing remains.
    pub fn clip(&self, height: usize, width: usize) -> Option<BoxI> {
        self.intersection(&BoxI {
            x0: 0,
            y0: 0,
            x1: width as i64,
            y1: height as i64,
        })
    }

    /// Number of empty pixels between the boxes along the axis where they are
    /// furthest apart. Negative when the boxes overlap.
    pub fn chebyshev_gap(&self, other: &BoxI) -> i64 {
        let gx = (other.x0 - self.x1).max(self.x0 - other.x1);
        let gy = (other.y0 - self.y1).max(self.y0 - other.y1);
        gx.max(gy)
    }
}

/// Per-pixel softmax over channels with max subtraction.
pub fn softmax_channels(logits: &GridF) -> Result<GridF> {
    if logits.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("softmax of non-finite logits".into()));
    }
    let c = logits.channels;
    let mut out = vec![0.0; logits.data.len()];
    for (src, dst) in logits.data.chunks_exact(c).zip(out.chunks_exact_mut(c)) {
        softmax_into(src, dst);
    }
    Ok(GridF::from_raw(logits.height, logits.width, c, out))
}

#[inline]
pub(crate) fn softmax_into(src: &[f64], dst: &mut [f64]) {
    let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = (s - max).exp();
        sum += *d;
    }
    for d in dst.iter_mut() {
        *d /= sum;
    }
}

/// Index of the largest value; the lowest index wins ties.
#[inline]
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn argmax_channels(probs: &GridF) -> GridU8 {
    assert!(probs.channels >= 1 && probs.channels <= 256);
    let data = probs.pixels().map(|p| argmax(p) as u8).collect();
    GridU8 {
        height: probs.height,
        width: probs.width,
        classes: probs.channels,
        data,
    }
}

/// Align-corners source coordinate for output index `i`: returns the lower
/// sample, the upper sample and the fractional weight of the upper one.
#[inline]
fn source_coord(i: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    if out_len == 1 || in_len == 1 {
        return (0, 0, 0.0);
    }
    let pos = (i * (in_len - 1)) as f64 / (out_len - 1) as f64;
    let lo = (pos.floor() as usize).min(in_len - 1);
    let hi = (lo + 1).min(in_len - 1);
    (lo, hi, pos - lo as f64)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    let v = a + t * (b - a);
    // Rounding may step one ulp outside the endpoints.
    v.clamp(a.min(b), a.max(b))
}

/// Bilinear resampling under the align-corners convention: output corners
/// coincide with input corners, and channels are interpolated independently.
pub fn bilinear_resize(map: &GridF, out_h: usize, out_w: usize) -> Result<GridF> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!(
            "cannot resize to {out_h}x{out_w}"
        )));
    }
    if map.height == 0 || map.width == 0 {
        return Err(Error::InvalidArgument("cannot resize an empty map".into()));
    }
    if out_h == map.height && out_w == map.width {
        return Ok(map.clone());
    }
    let c = map.channels;
    let xs: Vec<_> = (0..out_w)
        .map(|x| source_coord(x, map.width, out_w))
        .collect();
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for y in 0..out_h {
        let (y0, y1, ty) = source_coord(y, map.height, out_h);
        for &(x0, x1, tx) in &xs {
            let p00 = map.pixel(y0, x0);
            let p01 = map.pixel(y0, x1);
            let p10 = map.pixel(y1, x0);
            let p11 = map.pixel(y1, x1);
            for ch in 0..c {
                let top = lerp(p00[ch], p01[ch], tx);
                let bottom = lerp(p10[ch], p11[ch], tx);
                out.push(lerp(top, bottom, ty));
            }
        }
    }
    Ok(GridF::from_raw(out_h, out_w, c, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn px(values: &[f64]) -> GridF {
        GridF::new(1, 1, values.len(), values.to_vec()).unwrap()
    }

    #[test]
    fn softmax_of_constant_is_uniform() {
        for c in [-7.0, 0.0, 3.5, 900.0] {
            let p = softmax_channels(&px(&[c, c, c])).unwrap();
            for &v in p.data() {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_of_zero_and_ln2() {
        let p = softmax_channels(&px(&[0.0, 2f64.ln()])).unwrap();
        assert!((p.data()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.data()[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_large_logit_does_not_overflow() {
        let p = softmax_channels(&px(&[1000.0, 0.0])).unwrap();
        assert!(p.data().iter().all(|v| v.is_finite()));
        assert!((p.data()[0] - 1.0).abs() < 1e-12);
        assert!(p.data()[1] < 1e-300 || p.data()[1] == 0.0);
    }

    #[test]
    fn grid_rejects_non_finite() {
        assert!(GridF::new(1, 1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(GridF::new(1, 1, 2, vec![0.0]).is_err());
    }

    #[test]
    fn argmax_examples() {
        let g = GridF::new(
            1,
            3,
            3,
            vec![0.6, 0.3, 0.1, 0.2, 0.7, 0.1, 0.5, 0.5, 0.0],
        )
        .unwrap();
        assert_eq!(argmax_channels(&g).data(), &[0, 1, 0]);
    }

    #[test]
    fn resize_identity_is_bit_identical() {
        let g = GridF::from_fn(5, 7, 2, |y, x, c| (y * 31 + x * 7 + c) as f64 * 0.123);
        assert_eq!(bilinear_resize(&g, 5, 7).unwrap(), g);
    }

    #[test]
    fn resize_constant_extension() {
        let g = px(&[0.25]);
        let r = bilinear_resize(&g, 2, 2).unwrap();
        assert_eq!(r.data(), &[0.25; 4]);
    }

    #[test]
    fn resize_row_align_corners() {
        let g = GridF::new(1, 2, 1, vec![0.0, 1.0]).unwrap();
        let r = bilinear_resize(&g, 1, 3).unwrap();
        assert_eq!(r.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn resize_to_zero_is_an_error() {
        let g = px(&[1.0]);
        assert!(matches!(
            bilinear_resize(&g, 0, 3),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn box_geometry() {
        let a = BoxI::new(0, 0, 10, 10).unwrap();
        let b = BoxI::new(13, 2, 20, 5).unwrap();
        assert_eq!(a.chebyshev_gap(&b), 3);
        assert_eq!(a.dilate(2), BoxI::new(-2, -2, 12, 12).unwrap());
        assert!(a.intersection(&b).is_none());
        assert_eq!(a.dilate(5).clip(8, 8), Some(BoxI::new(0, 0, 8, 8).unwrap()));
        assert!(BoxI::new(3, 0, 3, 1).is_err());
    }

    fn grid_strategy() -> impl Strategy<Value = GridF> {
        (1usize..6, 1usize..6, 1usize..4).prop_flat_map(|(h, w, c)| {
            prop::collection::vec(-50.0f64..50.0, h * w * c)
                .prop_map(move |d| GridF::new(h, w, c, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(g in grid_strategy()) {
            let p = softmax_channels(&g).unwrap();
            for row in p.pixels() {
                let s: f64 = row.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-6);
            }
        }

        #[test]
        fn argmax_is_softmax_invariant(g in grid_strategy()) {
            let p = softmax_channels(&g).unwrap();
            for (a, b) in g.pixels().zip(p.pixels()) {
                // exp is monotone, but distinct logits can collapse to equal
                // probabilities only when they are within rounding of each other.
                let ia = argmax(a);
                let ib = argmax(b);
                prop_assert!(ia == ib || (a[ia] - a[ib]).abs() < 1e-12);
            }
        }

        #[test]
        fn resize_round_trip_keeps_corners(g in grid_strategy(), oh in 1usize..12, ow in 1usize..12) {
            let up = bilinear_resize(&g, oh, ow).unwrap();
            let back = bilinear_resize(&up, g.height(), g.width()).unwrap();
            let (h, w) = (g.height(), g.width());
            // A 1-pixel intermediate axis collapses that axis onto its first sample.
            if (h == 1 || oh > 1) && (w == 1 || ow > 1) {
                for (y, x) in [(0, 0), (0, w - 1), (h - 1, 0), (h - 1, w - 1)] {
                    prop_assert_eq!(back.pixel(y, x), g.pixel(y, x));
                }
            }
        }

        #[test]
        fn resize_stays_within_input_range(g in grid_strategy(), oh in 1usize..12, ow in 1usize..12) {
            let r = bilinear_resize(&g, oh, ow).unwrap();
            for c in 0..g.channels() {
                let (lo, hi) = g.pixels().map(|p| p[c]).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                for p in r.pixels() {
                    prop_assert!(p[c] >= lo && p[c] <= hi);
                }
            }
        }
    }
}
