//! Pixelwise weighted softmax loss.
//!
//! Each non-ignored pixel `p` with ground-truth class `g` contributes
//! `-(1 / n_g) * log(softmax(logits_p)[g])`, where `n_g` is the number of
//! pixels of class `g` in the same image. Every present class therefore
//! carries total weight 1 no matter how many pixels it covers. The gradient
//! is the exact derivative of that value, so the weights enter once.

use crate::error::{Error, Result};
use crate::grid::{softmax_into, GridF};
use crate::labelgen::{class_counts, LabelMap, NUM_CLASSES};

/// Per-class weights `1 / n_c`, zero for absent classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights(pub Vec<f64>);

impl ClassWeights {
    pub fn get(&self, class: u8) -> f64 {
        self.0[class as usize]
    }
}

pub fn compute_class_weights(labels: &LabelMap) -> ClassWeights {
    ClassWeights(
        class_counts(labels)
            .0
            .iter()
            .map(|&n| if n > 0 { 1.0 / n as f64 } else { 0.0 })
            .collect(),
    )
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    /// d loss / d logits, same shape as the logits.
    pub grad: GridF,
}

pub fn weighted_softmax_loss(logits: &GridF, labels: &LabelMap) -> Result<LossOutput> {
    let (h, w, c) = logits.dims();
    if (h, w) != (labels.height(), labels.width()) {
        return Err(Error::InvalidInput(format!(
            "logits are {h}x{w} but labels are {}x{}",
            labels.height(),
            labels.width()
        )));
    }
    if c != NUM_CLASSES {
        return Err(Error::InvalidInput(format!(
            "expected {NUM_CLASSES} logit channels, got {c}"
        )));
    }
    let weights = compute_class_weights(labels);
    if weights.0.iter().all(|&w| w == 0.0) {
        return Err(Error::DegenerateInput(
            "label map has no pixels outside the ignore mask".into(),
        ));
    }

    let mut grad = vec![0.0; h * w * c];
    let mut probs = [0.0; NUM_CLASSES];
    let mut loss = 0.0;
    for ((src, dst), label) in logits
        .pixels()
        .zip(grad.chunks_exact_mut(c))
        .zip(labels.iter_labels())
    {
        let Some(gt) = label else { continue };
        let gt = gt as usize;
        let wt = weights.0[gt];
        softmax_into(src, &mut probs);
        // log-softmax directly, so a saturated wrong prediction stays finite
        let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + src.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        loss -= wt * (src[gt] - log_z);
        for (k, (g, &p)) in dst.iter_mut().zip(&probs).enumerate() {
            *g = wt * (p - if k == gt { 1.0 } else { 0.0 });
        }
    }
    Ok(LossOutput {
        loss,
        grad: GridF::from_raw(h, w, c, grad),
    })
}
