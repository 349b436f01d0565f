//! End-to-end driver: multi-scale segmentation, box extraction and scoring
//! over a list of images, with per-image artifacts written to disk.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{match_detections, DetectionReport, DEFAULT_IOU};
use crate::extract::{extract_boxes, DEFAULT_MIN_AREA};
use crate::fusion::{segment, ScaleSet, DEFAULT_SCALES};
use crate::grid::BoxI;
use crate::io;
use crate::labelgen::read_annotations;
use crate::overlay::render_overlay;
use crate::synth;
use crate::toynet::{load_checkpoint, NetworkParams};

/// A detected box as written to `*.boxes.json`: the annotation schema
/// without a transcription, unless a recognizer supplied one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionRecord {
    #[serde(flatten)]
    pub bbox: BoxI,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

pub fn write_detections(path: &Path, boxes: &[BoxI]) -> Result<()> {
    let records: Vec<DetectionRecord> = boxes
        .iter()
        .map(|&bbox| DetectionRecord { bbox, text: None })
        .collect();
    io::write_json(path, &records)
}

pub fn read_detections(path: &Path) -> Result<Vec<DetectionRecord>> {
    let records: Vec<DetectionRecord> = io::read_json(path)?;
    for r in &records {
        r.bbox
            .validate()
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineInput {
    pub image: PathBuf,
    pub annotations: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub checkpoint: PathBuf,
    pub inputs: Vec<PipelineInput>,
    pub out_dir: PathBuf,
    pub scales: Vec<f64>,
    pub min_area: usize,
    pub expand: usize,
    pub iou_thresh: f64,
    pub overlays: bool,
}

impl PipelineConfig {
    pub fn new(checkpoint: PathBuf, inputs: Vec<PipelineInput>, out_dir: PathBuf) -> Self {
        Self {
            checkpoint,
            inputs,
            out_dir,
            scales: DEFAULT_SCALES.to_vec(),
            min_area: DEFAULT_MIN_AREA,
            expand: 0,
            iou_thresh: DEFAULT_IOU,
            overlays: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageResult {
    pub image: String,
    pub boxes: usize,
    /// Present when ground truth was available.
    pub report: Option<DetectionReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub report: DetectionReport,
    pub images: Vec<ImageResult>,
    pub failures: Vec<(PathBuf, String)>,
}

/// Inputs in a directory: the scenes of a synth manifest if there is one,
/// otherwise every `*.pgm` (sorted) paired with a same-stem `.json`.
pub fn discover_inputs(dir: &Path) -> Result<Vec<PipelineInput>> {
    let manifest_path = dir.join(synth::MANIFEST_FILE);
    if manifest_path.exists() {
        let manifest: synth::SynthManifest = io::read_json(&manifest_path)?;
        return Ok(manifest
            .scenes
            .iter()
            .map(|s| PipelineInput {
                image: dir.join(&s.image),
                annotations: Some(dir.join(&s.annotations)),
            })
            .collect());
    }
    let mut images: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    images.sort();
    Ok(images
        .into_iter()
        .map(|image| {
            let json = image.with_extension("json");
            PipelineInput {
                annotations: json.exists().then_some(json),
                image,
            }
        })
        .collect())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

fn process_one(
    params: &NetworkParams,
    cfg: &PipelineConfig,
    input: &PipelineInput,
) -> Result<ImageResult> {
    let image = io::read_gray_image(&input.image)?;
    let scales = ScaleSet {
        scales: cfg.scales.clone(),
        target_h: image.height(),
        target_w: image.width(),
    };
    let labels = segment(params, &image, &scales)?;
    let boxes = extract_boxes(&labels, cfg.min_area, cfg.expand);

    let name = stem(&input.image);
    io::write_pgm(&cfg.out_dir.join(format!("{name}.labels.pgm")), &labels)?;
    write_detections(&cfg.out_dir.join(format!("{name}.boxes.json")), &boxes)?;
    if cfg.overlays {
        render_overlay(&image, &boxes, Some(&labels))?
            .write(&cfg.out_dir.join(format!("{name}.overlay.ppm")))?;
    }

    let report = match &input.annotations {
        Some(path) => Some(match_detections(&boxes, &read_annotations(path)?, cfg.iou_thresh)),
        None => None,
    };
    Ok(ImageResult {
        image: name,
        boxes: boxes.len(),
        report,
    })
}

pub fn per_image_csv(images: &[ImageResult]) -> String {
    let mut s = String::from("image,boxes,tp,fp,fn,precision,recall,fscore\n");
    for r in images {
        match &r.report {
            Some(d) => writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.image, r.boxes, d.tp, d.fp, d.fn_, d.precision, d.recall, d.fscore
            ),
            None => writeln!(s, "{},{},,,,,,", r.image, r.boxes),
        }
        .unwrap();
    }
    s
}

/// Runs every input through the pipeline. A missing or corrupt checkpoint
/// aborts; per-image failures are collected and the rest still run. Writes
/// `report.json` and `report.csv` into the output directory at the end.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    let (params, _) = load_checkpoint(&cfg.checkpoint)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;

    let mut images = Vec::with_capacity(cfg.inputs.len());
    let mut failures = Vec::new();
    for input in &cfg.inputs {
        match process_one(&params, cfg, input) {
            Ok(result) => images.push(result),
            Err(e) => {
                log::error!("{}: {e}", input.image.display());
                failures.push((input.image.clone(), e.to_string()));
            }
        }
    }
    let report = DetectionReport::aggregate(images.iter().filter_map(|r| r.report.as_ref()));
    io::write_json(&cfg.out_dir.join("report.json"), &report)?;
    let csv_path = cfg.out_dir.join("report.csv");
    std::fs::write(&csv_path, per_image_csv(&images)).map_err(|e| Error::io(&csv_path, e))?;
    Ok(PipelineOutcome {
        report,
        images,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toynet::{save_checkpoint, TrainConfig};

    #[test]
    fn empty_input_list_gives_empty_report() {
        let dir = tempfile::tempdir().unwrap();
        let ck = dir.path().join("ck");
        save_checkpoint(&ck, &NetworkParams::zeros(), &TrainConfig::default()).unwrap();
        let cfg = PipelineConfig::new(ck, vec![], dir.path().join("out"));
        let out = run_pipeline(&cfg).unwrap();
        assert_eq!((out.report.tp, out.report.fp, out.report.fn_), (0, 0, 0));
        assert!(out.failures.is_empty());
        assert!(dir.path().join("out/report.json").exists());
    }

    #[test]
    fn missing_image_is_a_per_image_failure() {
        let dir = tempfile::tempdir().unwrap();
        let ck = dir.path().join("ck");
        save_checkpoint(&ck, &NetworkParams::zeros(), &TrainConfig::default()).unwrap();
        let inputs = vec![PipelineInput {
            image: dir.path().join("missing.pgm"),
            annotations: None,
        }];
        let out = run_pipeline(&PipelineConfig::new(ck, inputs, dir.path().join("out"))).unwrap();
        assert_eq!(out.failures.len(), 1);
        assert!(out.failures[0].1.contains("missing.pgm"));
    }

    #[test]
    fn detection_records_omit_absent_text() {
        let r = DetectionRecord {
            bbox: BoxI::new(1, 2, 3, 4).unwrap(),
            text: None,
        };
        assert_eq!(serde_json::to_string(&r).unwrap(), r#"{"x0":1,"y0":2,"x1":3,"y1":4}"#);
    }
}
