//! Detection scoring: one-to-one matching at an IoU threshold, and the
//! end-to-end variant that also checks transcriptions.

use serde::{Deserialize, Serialize};

use crate::grid::BoxI;
use crate::labelgen::WordAnnotation;

pub const DEFAULT_IOU: f64 = 0.5;

pub fn iou(a: &BoxI, b: &BoxI) -> f64 {
    let inter = a.intersection(b).map_or(0, |i| i.area());
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// What happened to one detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "gt")]
pub enum DetectionOutcome {
    /// Matched the ground-truth word at this index.
    TruePositive(usize),
    /// Box matched this ground truth but the transcription did not.
    WrongText(usize),
    FalsePositive,
    /// Best overlap was an ignored region; not scored.
    Ignored,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f_score(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn add(&mut self, other: &Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    /// Per-detection outcome, in input order. Empty for aggregated reports.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detections: Vec<DetectionOutcome>,
    /// Per-ground-truth matched detection index (`None` if missed or ignored).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gt_matches: Vec<Option<usize>>,
}

impl DetectionReport {
    pub fn from_counts(c: &Counts) -> Self {
        Self {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            precision: c.precision(),
            recall: c.recall(),
            fscore: c.f_score(),
            detections: Vec::new(),
            gt_matches: Vec::new(),
        }
    }

    pub fn counts(&self) -> Counts {
        Counts {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
        }
    }

    /// Corpus-level report from per-image reports.
    pub fn aggregate<'a>(reports: impl IntoIterator<Item = &'a DetectionReport>) -> Self {
        let mut total = Counts::default();
        for r in reports {
            total.add(&r.counts());
        }
        Self::from_counts(&total)
    }
}

/// Greedy box matching. Returns per-detection outcomes (only
/// `TruePositive`, `FalsePositive` and `Ignored`) and per-gt matches.
fn match_boxes(
    dets: &[BoxI],
    gts: &[WordAnnotation],
    thresh: f64,
) -> (Vec<DetectionOutcome>, Vec<Option<usize>>) {
    let overlaps: Vec<Vec<f64>> = dets
        .iter()
        .map(|d| gts.iter().map(|g| iou(d, &g.bbox)).collect())
        .collect();

    // A detection whose best overlap is an ignored region is set aside.
    let mut outcome = vec![DetectionOutcome::FalsePositive; dets.len()];
    for (i, row) in overlaps.iter().enumerate() {
        let mut best: Option<usize> = None;
        for (j, &v) in row.iter().enumerate() {
            if best.is_none_or(|b| v > row[b]) {
                best = Some(j);
            }
        }
        if let Some(j) = best {
            if gts[j].ignore && row[j] >= thresh {
                outcome[i] = DetectionOutcome::Ignored;
            }
        }
    }

    let mut pairs = Vec::new();
    for (i, row) in overlaps.iter().enumerate() {
        if outcome[i] == DetectionOutcome::Ignored {
            continue;
        }
        for (j, &v) in row.iter().enumerate() {
            if !gts[j].ignore && v >= thresh {
                pairs.push((v, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut gt_match = vec![None; gts.len()];
    for (_, i, j) in pairs {
        if outcome[i] == DetectionOutcome::FalsePositive && gt_match[j].is_none() {
            outcome[i] = DetectionOutcome::TruePositive(j);
            gt_match[j] = Some(i);
        }
    }
    (outcome, gt_match)
}

fn report(gts: &[WordAnnotation], detections: Vec<DetectionOutcome>, gt_matches: Vec<Option<usize>>) -> DetectionReport {
    let mut c = Counts::default();
    for d in &detections {
        match d {
            DetectionOutcome::TruePositive(_) => c.tp += 1,
            DetectionOutcome::FalsePositive | DetectionOutcome::WrongText(_) => c.fp += 1,
            DetectionOutcome::Ignored => {}
        }
    }
    c.fn_ = gts
        .iter()
        .zip(&gt_matches)
        .filter(|(g, m)| !g.ignore && m.is_none())
        .count();
    DetectionReport {
        detections,
        gt_matches,
        ..DetectionReport::from_counts(&c)
    }
}

/// Detection scoring: each detection and each ground truth is used at most
/// once; pairs are taken greedily by descending IoU, ties by detection then
/// ground-truth index.
pub fn match_detections(dets: &[BoxI], gts: &[WordAnnotation], iou_thresh: f64) -> DetectionReport {
    let (detections, gt_matches) = match_boxes(dets, gts, iou_thresh);
    report(gts, detections, gt_matches)
}

/// A word is scorable end to end when it has more than three characters,
/// all ASCII letters or digits.
pub fn is_scorable_word(text: &str) -> bool {
    text.chars().count() > 3 && text.chars().all(|c| c.is_ascii_alphanumeric())
}

/// Ground truth with unscorable transcriptions marked ignored.
pub fn end_to_end_ground_truth(gts: &[WordAnnotation]) -> Vec<WordAnnotation> {
    gts.iter()
        .map(|g| WordAnnotation {
            ignore: g.ignore || !is_scorable_word(&g.text),
            ..g.clone()
        })
        .collect()
}

/// End-to-end scoring: a box match only counts when the transcriptions agree
/// case-insensitively; otherwise the pair costs one false positive and one
/// false negative.
pub fn end_to_end_score(dets: &[(BoxI, String)], gts: &[WordAnnotation], iou_thresh: f64) -> DetectionReport {
    let gts = end_to_end_ground_truth(gts);
    let boxes: Vec<BoxI> = dets.iter().map(|(b, _)| *b).collect();
    let (mut detections, mut gt_matches) = match_boxes(&boxes, &gts, iou_thresh);
    for (i, outcome) in detections.iter_mut().enumerate() {
        if let DetectionOutcome::TruePositive(j) = *outcome {
            if !dets[i].1.eq_ignore_ascii_case(&gts[j].text) {
                *outcome = DetectionOutcome::WrongText(j);
                gt_matches[j] = None;
            }
        }
    }
    report(&gts, detections, gt_matches)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x0: i64, y0: i64, x1: i64, y1: i64) -> BoxI {
        BoxI::new(x0, y0, x1, y1).unwrap()
    }

    fn gt(bx: BoxI, text: &str) -> WordAnnotation {
        WordAnnotation::new(bx, text)
    }

    #[test]
    fn iou_examples() {
        let a = b(0, 0, 10, 10);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(20, 20, 30, 30)), 0.0);
        assert_eq!(iou(&a, &b(10, 0, 20, 10)), 0.0);
        assert!((iou(&a, &b(5, 0, 15, 10)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_inputs() {
        let r = match_detections(&[], &[], 0.5);
        assert_eq!((r.tp, r.fp, r.fn_), (0, 0, 0));
        assert_eq!((r.precision, r.recall, r.fscore), (0.0, 0.0, 0.0));
    }

    #[test]
    fn greedy_prefers_higher_overlap() {
        // det 0 overlaps both gts; det 1 fits gt 0 exactly and takes it first.
        let gts = [gt(b(0, 0, 10, 10), "aaaa"), gt(b(2, 0, 12, 10), "bbbb")];
        let dets = [b(1, 0, 11, 10), b(0, 0, 10, 10)];
        let r = match_detections(&dets, &gts, 0.5);
        assert_eq!(r.detections, vec![DetectionOutcome::TruePositive(1), DetectionOutcome::TruePositive(0)]);
        assert_eq!(r.gt_matches, vec![Some(1), Some(0)]);
    }

    #[test]
    fn ignored_pixels_do_not_count() {
        let gts = [WordAnnotation::ignored(b(0, 0, 10, 10), "###")];
        let r = match_detections(&[b(0, 0, 10, 9), b(30, 30, 40, 40)], &gts, 0.5);
        assert_eq!(r.detections, vec![DetectionOutcome::Ignored, DetectionOutcome::FalsePositive]);
        assert_eq!((r.tp, r.fp, r.fn_), (0, 1, 0));
    }

    #[test]
    fn scorable_words() {
        assert!(!is_scorable_word("the"));
        assert!(is_scorable_word("HOTEL"));
        assert!(is_scorable_word("b4ck"));
        assert!(!is_scorable_word("can't"));
        assert!(!is_scorable_word("café"));
    }

    #[test]
    fn report_serializes_with_fn_key() {
        let r = DetectionReport::from_counts(&Counts { tp: 1, fp: 0, fn_: 1 });
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["fn"], 1);
        assert_eq!(v["recall"], 0.5);
        assert!(v.get("detections").is_none());
    }
}
