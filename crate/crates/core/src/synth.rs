//! Seeded synthetic scenes: glyph-textured word rectangles on a gray
//! background, with exact ground-truth boxes and random transcriptions.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoxI, GridF};
use crate::io;
use crate::labelgen::{read_annotations, write_annotations, WordAnnotation};

const BACKGROUND_LEVEL: f64 = 0.5;
const INK_LEVEL: f64 = 0.05;
const MAX_RETRIES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub image_h: usize,
    pub image_w: usize,
    pub words_min: usize,
    pub words_max: usize,
    /// Inclusive word height range.
    pub word_h: (usize, usize),
    /// Inclusive word width range.
    pub word_w: (usize, usize),
    /// Minimum Chebyshev gap between any two words.
    pub gap_min: usize,
    /// When set, every word after the first is placed beside an earlier
    /// word, mostly on the same text line, within this gap of it.
    #[serde(default)]
    pub gap_max: Option<usize>,
    pub noise_sigma: f64,
    /// Stroke density inside glyph cells, in (0, 1].
    pub texture: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            image_h: 64,
            image_w: 64,
            words_min: 2,
            words_max: 4,
            word_h: (8, 12),
            word_w: (14, 28),
            gap_min: 3,
            gap_max: None,
            noise_sigma: 0.03,
            texture: 0.6,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.image_h == 0 || self.image_w == 0 {
            return bad("image dims must be positive");
        }
        if self.words_min > self.words_max {
            return bad("words_min exceeds words_max");
        }
        if self.word_h.0 == 0 || self.word_h.0 > self.word_h.1 || self.word_w.0 < 2 || self.word_w.0 > self.word_w.1 {
            return bad("word size ranges must be non-empty with height >= 1 and width >= 2");
        }
        if self.word_h.1 > self.image_h || self.word_w.1 > self.image_w {
            return bad("words larger than the image");
        }
        if self.gap_min == 0 || self.gap_max.is_some_and(|g| g < self.gap_min) {
            return bad("need 1 <= gap_min <= gap_max");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise sigma must be finite and >= 0");
        }
        if !(self.texture > 0.0 && self.texture <= 1.0) {
            return bad("texture must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: GridF,
    pub words: Vec<WordAnnotation>,
}

fn place_words(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<BoxI>> {
    let count = rng.gen_range(config.words_min..=config.words_max);
    let mut placed: Vec<BoxI> = Vec::with_capacity(count);
    for n in 0..count {
        let mut accepted = None;
        for _ in 0..MAX_RETRIES {
            let h = rng.gen_range(config.word_h.0..=config.word_h.1) as i64;
            let w = rng.gen_range(config.word_w.0..=config.word_w.1) as i64;
            let (x0, y0) = match config.gap_max {
                Some(max) if !placed.is_empty() => {
                    let anchor = placed[rng.gen_range(0..placed.len())];
                    propose_beside(&anchor, w, h, config.gap_min as i64, max as i64, rng)
                }
                _ => (
                    rng.gen_range(0..=config.image_w as i64 - w),
                    rng.gen_range(0..=config.image_h as i64 - h),
                ),
            };
            let cand = BoxI { x0, y0, x1: x0 + w, y1: y0 + h };
            if cand.clip(config.image_h, config.image_w) != Some(cand) {
                continue;
            }
            let gaps = placed.iter().map(|p| p.chebyshev_gap(&cand));
            if gaps.clone().any(|g| g < config.gap_min as i64) {
                continue;
            }
            if let (Some(max), Some(nearest)) = (config.gap_max, gaps.min()) {
                if nearest > max as i64 {
                    continue;
                }
            }
            accepted = Some(cand);
            break;
        }
        match accepted {
            Some(b) => placed.push(b),
            None => {
                return Err(Error::Generation(format!(
                    "could not place word {} of {count} after {MAX_RETRIES} attempts (seed {})",
                    n + 1,
                    config.seed
                )))
            }
        }
    }
    Ok(placed)
}

/// Top-left corner for a `w`x`h` word next to `anchor`: usually the
/// following or preceding word on the same text line, otherwise on the line
/// above or below, with the gap drawn from `[gap_min, gap_max]`.
fn propose_beside(anchor: &BoxI, w: i64, h: i64, gap_min: i64, gap_max: i64, rng: &mut ChaCha8Rng) -> (i64, i64) {
    let gap = rng.gen_range(gap_min..=gap_max);
    if rng.gen_bool(0.75) {
        let y0 = anchor.y1 - h + rng.gen_range(-1..=1);
        let x0 = if rng.gen_bool(0.5) { anchor.x1 + gap } else { anchor.x0 - gap - w };
        (x0, y0)
    } else {
        let x0 = anchor.x0 + rng.gen_range(-w / 2..=anchor.width() / 2);
        let y0 = if rng.gen_bool(0.5) { anchor.y1 + gap } else { anchor.y0 - gap - h };
        (x0, y0)
    }
}

/// Paints glyph strokes for a word of `letters` characters into `ink`.
fn render_word(b: &BoxI, letters: usize, texture: f64, ink: &mut [bool], width: usize, rng: &mut ChaCha8Rng) {
    let (bw, bh) = (b.width() as usize, b.height() as usize);
    for k in 0..letters {
        let cx0 = k * bw / letters;
        let cx1 = (k + 1) * bw / letters;
        // one blank spacing column between letters
        let ink_end = if k + 1 < letters { cx1 - 1 } else { cx1 };
        for cx in cx0..ink_end.max(cx0 + 1) {
            let (top, bottom) = if cx == cx0 || rng.gen_bool(texture) {
                if cx == cx0 || rng.gen_bool(0.5) {
                    (0, bh)
                } else {
                    let len = rng.gen_range(bh.div_ceil(2)..=bh);
                    let top = rng.gen_range(0..=bh - len);
                    (top, top + len)
                }
            } else {
                continue;
            };
            for ry in top..bottom {
                ink[(b.y0 as usize + ry) * width + b.x0 as usize + cx] = true;
            }
        }
        for ry in 0..bh {
            if rng.gen_bool(texture * 0.25) {
                for cx in cx0..ink_end.max(cx0 + 1) {
                    ink[(b.y0 as usize + ry) * width + b.x0 as usize + cx] = true;
                }
            }
        }
    }
}

pub fn generate_scene(config: &SynthConfig) -> Result<Scene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let boxes = place_words(config, &mut rng)?;
    let (h, w) = (config.image_h, config.image_w);
    let mut ink = vec![false; h * w];
    let mut words = Vec::with_capacity(boxes.len());
    for b in boxes {
        let max_letters = (b.width() as usize / 3).clamp(2, 8);
        let letters = rng.gen_range(2..=max_letters);
        let text: String = (0..letters).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
        render_word(&b, letters, config.texture, &mut ink, w, &mut rng);
        words.push(WordAnnotation::new(b, text));
    }
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let data = ink
        .iter()
        .map(|&on| {
            let base = if on { INK_LEVEL } else { BACKGROUND_LEVEL };
            (base + noise.sample(&mut rng)).clamp(0.0, 1.0)
        })
        .collect();
    Ok(Scene {
        image: GridF::new(h, w, 1, data)?,
        words,
    })
}

/// Scene `i` of a set uses seed `config.seed + i`.
pub fn generate_set(config: &SynthConfig, count: usize) -> Result<Vec<Scene>> {
    (0..count)
        .map(|i| generate_scene(&config.with_seed(config.seed.wrapping_add(i as u64))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub image: String,
    pub annotations: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config: SynthConfig,
    pub scenes: Vec<SceneEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `scene_%05d.pgm`, `scene_%05d.json` and `manifest.json` into `dir`.
pub fn write_scene_set(dir: &Path, config: &SynthConfig, count: usize) -> Result<SynthManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut scenes = Vec::with_capacity(count);
    for i in 0..count {
        let seed = config.seed.wrapping_add(i as u64);
        let scene = generate_scene(&config.with_seed(seed))?;
        let stem = format!("scene_{i:05}");
        let entry = SceneEntry {
            image: format!("{stem}.pgm"),
            annotations: format!("{stem}.json"),
            seed,
        };
        io::write_gray_image(&dir.join(&entry.image), &scene.image)?;
        write_annotations(&dir.join(&entry.annotations), &scene.words)?;
        scenes.push(entry);
    }
    let manifest = SynthManifest {
        config: config.clone(),
        scenes,
    };
    io::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Loads every scene listed in a directory's manifest as (image path, image, words).
pub fn read_scene_set(dir: &Path) -> Result<Vec<(PathBuf, GridF, Vec<WordAnnotation>)>> {
    let manifest: SynthManifest = io::read_json(&dir.join(MANIFEST_FILE))?;
    manifest
        .scenes
        .iter()
        .map(|e| {
            let path = dir.join(&e.image);
            let image = io::read_gray_image(&path)?;
            let words = read_annotations(&dir.join(&e.annotations))?;
            Ok((path, image, words))
        })
        .collect()
}
