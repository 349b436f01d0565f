//! Independent reference implementations used as test oracles, plus a few
//! input generators. The oracles never call the library code they are
//! compared against; `component_partition` only reshapes library output.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use wordfence_core::extract::connected_components;
use wordfence_core::grid::{BoxI, GridF, GridU8};
use wordfence_core::labelgen::{LabelMap, WordAnnotation};
use wordfence_core::toynet::{backward, forward, NetworkParams};
use wordfence_core::wsloss::weighted_softmax_loss;

pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for relative errors. Central differences with step
/// 1e-5 on losses of order 10 carry about 1e-10 of absolute roundoff, so
/// gradient entries far below this floor cannot be resolved relatively.
pub const REL_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
    (analytic - numeric).abs() / denom
}

pub fn random_labels(rng: &mut ChaCha8Rng, h: usize, w: usize, ignore_frac: f64) -> LabelMap {
    let data = (0..h * w).map(|_| rng.gen_range(0..3u8)).collect();
    let mask = (0..h * w).map(|_| rng.gen_bool(ignore_frac)).collect();
    LabelMap::new(GridU8::new(h, w, 3, data).unwrap(), mask).unwrap()
}

pub fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize, scale: f64) -> GridF {
    GridF::new(h, w, c, (0..h * w * c).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Reference weighted loss written from the definition: per-class pixel
/// counts, weights `1 / n_c`, and `-log softmax` at the labelled class.
pub fn reference_loss(logits: &GridF, labels: &LabelMap) -> f64 {
    let (h, w, c) = logits.dims();
    let mut counts = [0usize; 3];
    for y in 0..h {
        for x in 0..w {
            if !labels.is_ignored(y, x) {
                counts[labels.grid().get(y, x) as usize] += 1;
            }
        }
    }
    let mut loss = 0.0;
    for y in 0..h {
        for x in 0..w {
            if labels.is_ignored(y, x) {
                continue;
            }
            let g = labels.grid().get(y, x) as usize;
            let z: Vec<f64> = (0..c).map(|k| logits.get(y, x, k)).collect();
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += (lse - z[g]) / counts[g] as f64;
        }
    }
    loss
}

/// Largest relative error between the loss gradient and central differences.
pub fn loss_gradcheck(logits: &GridF, labels: &LabelMap) -> f64 {
    let analytic = weighted_softmax_loss(logits, labels).unwrap().grad;
    let (h, w, c) = logits.dims();
    let mut worst: f64 = 0.0;
    for i in 0..h * w * c {
        let at = |delta: f64| {
            let mut v = logits.data().to_vec();
            v[i] += delta;
            weighted_softmax_loss(&GridF::new(h, w, c, v).unwrap(), labels).unwrap().loss
        };
        let numeric = (at(FD_STEP) - at(-FD_STEP)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(analytic.data()[i], numeric));
    }
    worst
}

pub struct NetCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates whose perturbation moves a rectifier across its kink;
    /// central differences are not valid there.
    pub skipped: usize,
}

fn relu_pattern(params: &NetworkParams, image: &GridF) -> Vec<bool> {
    let (_, cache) = forward(params, image).unwrap();
    cache
        .pre_activations()
        .iter()
        .flat_map(|z| z.data().iter().map(|&v| v > 0.0))
        .collect()
}

fn net_loss(params: &NetworkParams, image: &GridF, labels: &LabelMap) -> f64 {
    let (logits, _) = forward(params, image).unwrap();
    weighted_softmax_loss(&logits, labels).unwrap().loss
}

/// Finite-difference check of every network parameter through the loss.
pub fn network_gradcheck(params: &NetworkParams, image: &GridF, labels: &LabelMap) -> NetCheck {
    let (logits, cache) = forward(params, image).unwrap();
    let grad = backward(params, &cache, &weighted_softmax_loss(&logits, labels).unwrap().grad).unwrap();
    let analytic: Vec<f64> = grad.values().copied().collect();
    let base_pattern = relu_pattern(params, image);
    let mut out = NetCheck {
        max_rel_err: 0.0,
        checked: 0,
        skipped: 0,
    };
    for (i, &a) in analytic.iter().enumerate() {
        let shifted = |delta: f64| {
            let mut p = params.clone();
            *p.values_mut().nth(i).unwrap() += delta;
            p
        };
        let plus = shifted(FD_STEP);
        let minus = shifted(-FD_STEP);
        if relu_pattern(&plus, image) != base_pattern || relu_pattern(&minus, image) != base_pattern {
            out.skipped += 1;
            continue;
        }
        let numeric = (net_loss(&plus, image, labels) - net_loss(&minus, image, labels)) / (2.0 * FD_STEP);
        out.max_rel_err = out.max_rel_err.max(rel_err(a, numeric));
        out.checked += 1;
    }
    out
}

/// Align-corners bilinear sample of channel `ch` at output pixel `(y, x)`,
/// computed from scratch for each output pixel.
fn sample(map: &GridF, out_h: usize, out_w: usize, y: usize, x: usize, ch: usize) -> f64 {
    let (h, w, _) = map.dims();
    let coord = |i: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        if n_in == 1 || n_out == 1 {
            return (0, 0, 0.0);
        }
        let s = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let lo = (s.floor() as usize).min(n_in - 1);
        (lo, (lo + 1).min(n_in - 1), s - lo as f64)
    };
    let (ya, yb, fy) = coord(y, h, out_h);
    let (xa, xb, fx) = coord(x, w, out_w);
    let top = map.get(ya, xa, ch) * (1.0 - fx) + map.get(ya, xb, ch) * fx;
    let bot = map.get(yb, xa, ch) * (1.0 - fx) + map.get(yb, xb, ch) * fx;
    top * (1.0 - fy) + bot * fy
}

/// Voting fusion from its definition: every scale votes at every target
/// pixel for its own most probable class with that class's probability;
/// the label is the class with the most accumulated weight, lowest class
/// on ties.
pub fn brute_force_fuse(maps: &[GridF], out_h: usize, out_w: usize) -> Vec<u8> {
    let c = maps[0].channels();
    let mut labels = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        for x in 0..out_w {
            let mut votes = vec![0.0; c];
            for m in maps {
                let probs: Vec<f64> = (0..c).map(|k| sample(m, out_h, out_w, y, x, k)).collect();
                let mut best = 0;
                for k in 1..c {
                    if probs[k] > probs[best] {
                        best = k;
                    }
                }
                votes[best] += probs[best];
            }
            let mut win = 0;
            for k in 1..c {
                if votes[k] > votes[win] {
                    win = k;
                }
            }
            labels.push(win as u8);
        }
    }
    labels
}

/// Component index per pixel by breadth-first flood fill with
/// 4-connectivity, `None` off the target class.
pub fn flood_fill(labels: &GridU8, target: u8) -> Vec<Option<usize>> {
    let (h, w) = (labels.height(), labels.width());
    let mut comp = vec![None; h * w];
    let mut next = 0;
    for start in 0..h * w {
        if comp[start].is_some() || labels.data()[start] != target {
            continue;
        }
        let mut queue = std::collections::VecDeque::from([start]);
        comp[start] = Some(next);
        while let Some(p) = queue.pop_front() {
            let (y, x) = (p / w, p % w);
            let mut nbrs = Vec::with_capacity(4);
            if y > 0 {
                nbrs.push(p - w);
            }
            if y + 1 < h {
                nbrs.push(p + w);
            }
            if x > 0 {
                nbrs.push(p - 1);
            }
            if x + 1 < w {
                nbrs.push(p + 1);
            }
            for q in nbrs {
                if comp[q].is_none() && labels.data()[q] == target {
                    comp[q] = Some(next);
                    queue.push_back(q);
                }
            }
        }
        next += 1;
    }
    comp
}

/// True when two labellings induce the same partition (same pixels
/// labelled, and any two pixels share a label in one iff in the other).
pub fn same_partition(a: &[Option<usize>], b: &[Option<usize>]) -> bool {
    use std::collections::HashMap;
    if a.len() != b.len() {
        return false;
    }
    let mut fwd = HashMap::new();
    let mut back = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        match (x, y) {
            (None, None) => {}
            (Some(x), Some(y)) => {
                if *fwd.entry(*x).or_insert(*y) != *y || *back.entry(*y).or_insert(*x) != *x {
                    return false;
                }
            }
            _ => return false,
        }
    }
    true
}

/// Per-pixel rasterization by direct membership tests: border if inside
/// any word's dilated box but outside that word's own box, else text if
/// inside any box, else background. Ignored words only mark the mask.
pub fn brute_rasterize(words: &[WordAnnotation], h: usize, w: usize, border: i64) -> (Vec<u8>, Vec<bool>) {
    let inside = |b: &BoxI, y: i64, x: i64, pad: i64| {
        x >= b.x0 - pad && x < b.x1 + pad && y >= b.y0 - pad && y < b.y1 + pad
    };
    let mut classes = vec![0u8; h * w];
    let mut mask = vec![false; h * w];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let i = y as usize * w + x as usize;
            let mut text = false;
            let mut ring = false;
            for word in words {
                if word.ignore {
                    if inside(&word.bbox, y, x, border) {
                        mask[i] = true;
                    }
                    continue;
                }
                if inside(&word.bbox, y, x, 0) {
                    text = true;
                } else if inside(&word.bbox, y, x, border) {
                    ring = true;
                }
            }
            classes[i] = if ring { 2 } else if text { 1 } else { 0 };
        }
    }
    (classes, mask)
}

/// Random per-pixel distributions over three classes.
pub fn random_prob_map(rng: &mut ChaCha8Rng, h: usize, w: usize) -> GridF {
    let mut data = Vec::with_capacity(h * w * 3);
    for _ in 0..h * w {
        let raw: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let s: f64 = raw.iter().sum();
        data.extend(raw.iter().map(|v| v / s));
    }
    GridF::new(h, w, 3, data).unwrap()
}

/// The library's component labelling as a partition, for comparison with
/// [`flood_fill`].
pub fn component_partition(labels: &GridU8, target: u8) -> Vec<Option<usize>> {
    let cm = connected_components(labels, target);
    (0..labels.height())
        .flat_map(|y| (0..labels.width()).map(move |x| (y, x)))
        .map(|(y, x)| match cm.id(y, x) {
            0 => None,
            id => Some(id as usize),
        })
        .collect()
}
