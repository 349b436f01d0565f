//! Fence-separation experiment on synthetic scenes: the same network and
//! training budget with fenced 3-class labels versus plain text/background
//! labels, scored by per-word detection recall on held-out scenes.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::{match_detections, Counts, DetectionReport};
use crate::extract::extract_boxes;
use crate::fusion::{segment, ScaleSet};
use crate::grid::GridF;
use crate::labelgen::{rasterize_labels, rasterize_text_only, LabelMap};
use crate::synth::{generate_set, Scene, SynthConfig};
use crate::toynet::{train_with_progress, NetworkParams, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelScheme {
    /// Background, text and border rings.
    Fence { border_width: usize },
    /// Background and text only.
    TextOnly,
}

impl LabelScheme {
    pub fn labels(&self, scene: &Scene) -> Result<LabelMap> {
        let (h, w) = (scene.image.height(), scene.image.width());
        match *self {
            LabelScheme::Fence { border_width } => rasterize_labels(&scene.words, h, w, border_width),
            LabelScheme::TextOnly => rasterize_text_only(&scene.words, h, w),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub scenes: usize,
    pub held_out: usize,
    pub train: TrainConfig,
    /// Fence ring width for the 3-class arm.
    pub border_width: usize,
    pub scales: Vec<f64>,
    pub min_area: usize,
    pub iou_thresh: f64,
}

/// Words here are 8 to 12 px tall, so the fence is scaled down to 2 px; at
/// the 8 px default a ring is as wide as a word and swallows its neighbours.
/// Glyph texture 0.5 leaves blank runs inside words as wide as the tightest
/// gaps between them, which is where the two label schemes part ways.
impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig {
                gap_min: 3,
                gap_max: Some(10),
                texture: 0.5,
                seed: 2017,
                ..SynthConfig::default()
            },
            scenes: 200,
            held_out: 50,
            train: TrainConfig {
                learning_rate: 0.03,
                epochs: 30,
                seed: 7,
                ..TrainConfig::default()
            },
            border_width: 2,
            scales: vec![1.0],
            min_area: crate::extract::DEFAULT_MIN_AREA,
            iou_thresh: crate::eval::DEFAULT_IOU,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub scheme: LabelScheme,
    pub epoch_losses: Vec<f64>,
    pub report: DetectionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub fence: ArmResult,
    pub text_only: ArmResult,
}

pub fn train_arm(scenes: &[Scene], scheme: LabelScheme, cfg: &TrainConfig) -> Result<(NetworkParams, Vec<f64>)> {
    let data: Vec<(GridF, LabelMap)> = scenes
        .iter()
        .map(|s| Ok((s.image.clone(), scheme.labels(s)?)))
        .collect::<Result<_>>()?;
    let out = train_with_progress(&data, cfg, |epoch, loss| {
        log::info!("{scheme:?} epoch {epoch}: mean loss {loss:.5}");
    })?;
    Ok((out.params, out.epoch_losses))
}

pub fn evaluate(params: &NetworkParams, scenes: &[Scene], cfg: &ExperimentConfig) -> Result<DetectionReport> {
    let mut total = Counts::default();
    for s in scenes {
        let set = ScaleSet {
            scales: cfg.scales.clone(),
            target_h: s.image.height(),
            target_w: s.image.width(),
        };
        let labels = segment(params, &s.image, &set)?;
        let boxes = extract_boxes(&labels, cfg.min_area, 0);
        total.add(&match_detections(&boxes, &s.words, cfg.iou_thresh).counts());
    }
    Ok(DetectionReport::from_counts(&total))
}

/// Generates the scenes, holds out the last `held_out` for scoring and
/// trains both arms on the rest with identical seeds and budgets.
pub fn run_fence_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let scenes = generate_set(&cfg.synth, cfg.scenes)?;
    let split = cfg.scenes.saturating_sub(cfg.held_out);
    let (train_set, test_set) = scenes.split_at(split);
    let arm = |scheme| -> Result<ArmResult> {
        let (params, epoch_losses) = train_arm(train_set, scheme, &cfg.train)?;
        Ok(ArmResult {
            scheme,
            epoch_losses,
            report: evaluate(&params, test_set, cfg)?,
        })
    };
    Ok(ExperimentResult {
        fence: arm(LabelScheme::Fence {
            border_width: cfg.border_width,
        })?,
        text_only: arm(LabelScheme::TextOnly)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_arms_score_every_held_out_word() {
        let cfg = ExperimentConfig {
            synth: SynthConfig {
                image_h: 32,
                words_max: 2,
                ..ExperimentConfig::default().synth
            },
            scenes: 4,
            held_out: 2,
            train: TrainConfig {
                epochs: 1,
                ..ExperimentConfig::default().train
            },
            ..ExperimentConfig::default()
        };
        let held_out: usize = generate_set(&cfg.synth, 4).unwrap()[2..].iter().map(|s| s.words.len()).sum();
        let result = run_fence_experiment(&cfg).unwrap();
        for arm in [&result.fence, &result.text_only] {
            assert_eq!(arm.epoch_losses.len(), 1);
            assert_eq!(arm.report.tp + arm.report.fn_, held_out);
        }
        assert_eq!(result.fence.scheme, LabelScheme::Fence { border_width: 2 });
    }

    #[test]
    fn text_only_labels_have_no_border() {
        let scene = generate_set(&ExperimentConfig::default().synth, 1).unwrap().remove(0);
        let labels = LabelScheme::TextOnly.labels(&scene).unwrap();
        assert_eq!(labels.grid().count(crate::labelgen::BORDER), 0);
        let fenced = LabelScheme::Fence { border_width: 2 }.labels(&scene).unwrap();
        assert!(fenced.grid().count(crate::labelgen::BORDER) > 0);
    }
}
