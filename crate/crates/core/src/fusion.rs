//! Multi-scale inference and probability voting.
//!
//! Every scale's probability map is resampled to the target size; at each
//! pixel only the scale's winning class receives a vote, weighted by its
//! probability. The fused label is the class with the largest vote total.
//! Resampled maps are not renormalized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{argmax, argmax_channels, bilinear_resize, softmax_channels, GridF, GridU8};
use crate::toynet::{predict, NetworkParams};

pub const DEFAULT_SCALES: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet {
    pub scales: Vec<f64>,
    pub target_h: usize,
    pub target_w: usize,
}

impl ScaleSet {
    /// Default scales with the target at the image's own size.
    pub fn for_image(height: usize, width: usize) -> Self {
        Self {
            scales: DEFAULT_SCALES.to_vec(),
            target_h: height,
            target_w: width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::InvalidArgument("scale set is empty".into()));
        }
        if let Some(s) = self.scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!("scale {s} is not positive")));
        }
        Ok(())
    }
}

/// `(round(s * h), round(s * w))`, rejecting scales that collapse an axis.
pub fn scaled_dims(h: usize, w: usize, s: f64) -> Result<(usize, usize)> {
    let sh = (s * h as f64).round();
    let sw = (s * w as f64).round();
    if sh < 1.0 || sw < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "scale {s} maps a {h}x{w} image to {sh}x{sw}"
        )));
    }
    Ok((sh as usize, sw as usize))
}

/// Probability maps at each scale, at their native scaled sizes.
pub fn infer_multiscale(params: &NetworkParams, image: &GridF, scales: &ScaleSet) -> Result<Vec<GridF>> {
    scales.validate()?;
    let dims = scales
        .scales
        .iter()
        .map(|&s| scaled_dims(image.height(), image.width(), s))
        .collect::<Result<Vec<_>>>()?;
    dims.into_iter()
        .map(|(h, w)| {
            let scaled = bilinear_resize(image, h, w)?;
            softmax_channels(&predict(params, &scaled)?)
        })
        .collect()
}

/// Per-class vote totals at the target size. Entry `(p, c)` is the sum over
/// scales whose upscaled argmax at `p` is `c` of that scale's probability.
pub fn vote_accumulator(maps: &[GridF], target_h: usize, target_w: usize) -> Result<GridF> {
    let Some(first) = maps.first() else {
        return Err(Error::InvalidInput("no probability maps to fuse".into()));
    };
    let c = first.channels();
    if let Some(m) = maps.iter().find(|m| m.channels() != c) {
        return Err(Error::InvalidInput(format!(
            "maps disagree on channel count ({} vs {c})",
            m.channels()
        )));
    }
    let mut acc = GridF::zeros(target_h, target_w, c);
    for map in maps {
        let up = bilinear_resize(map, target_h, target_w)?;
        for (a, p) in acc.data_mut().chunks_exact_mut(c).zip(up.pixels()) {
            let k = argmax(p);
            a[k] += p[k];
        }
    }
    Ok(acc)
}

pub fn fuse_votes(maps: &[GridF], target_h: usize, target_w: usize) -> Result<GridU8> {
    Ok(argmax_channels(&vote_accumulator(maps, target_h, target_w)?))
}

/// Multi-scale inference followed by voting at the scale set's target size.
pub fn segment(params: &NetworkParams, image: &GridF, scales: &ScaleSet) -> Result<GridU8> {
    let maps = infer_multiscale(params, image, scales)?;
    fuse_votes(&maps, scales.target_h, scales.target_w)
}
