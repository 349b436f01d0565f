//! Ground-truth rasterization: word boxes become text pixels and each word
//! is fenced by a ring of border pixels so adjacent words stay separate.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoxI, GridU8};
use crate::io;

pub const BACKGROUND: u8 = 0;
pub const TEXT: u8 = 1;
pub const BORDER: u8 = 2;
pub const NUM_CLASSES: usize = 3;

pub const DEFAULT_BORDER_WIDTH: usize = 8;

/// One annotated word. Serialized flat as `{x0, y0, x1, y1, text, ignore}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordAnnotation {
    #[serde(flatten)]
    pub bbox: BoxI,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub ignore: bool,
}

impl WordAnnotation {
    pub fn new(bbox: BoxI, text: impl Into<String>) -> Self {
        Self {
            bbox,
            text: text.into(),
            ignore: false,
        }
    }

    pub fn ignored(bbox: BoxI, text: impl Into<String>) -> Self {
        Self {
            bbox,
            text: text.into(),
            ignore: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        if self.text.is_empty() && !self.ignore {
            return Err(Error::InvalidAnnotation(format!(
                "word at {:?} has no transcription and is not ignored",
                self.bbox
            )));
        }
        Ok(())
    }
}

pub fn read_annotations(path: &Path) -> Result<Vec<WordAnnotation>> {
    let words: Vec<WordAnnotation> = io::read_json(path)?;
    for w in &words {
        w.validate()
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    Ok(words)
}

pub fn write_annotations(path: &Path, words: &[WordAnnotation]) -> Result<()> {
    io::write_json(path, &words)
}

/// Class grid plus the mask of pixels excluded from loss and scoring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    grid: GridU8,
    ignore_mask: Vec<bool>,
}

impl LabelMap {
    pub fn new(grid: GridU8, ignore_mask: Vec<bool>) -> Result<Self> {
        if ignore_mask.len() != grid.height() * grid.width() {
            return Err(Error::InvalidInput(
                "ignore mask and class grid differ in size".into(),
            ));
        }
        if grid.classes() > NUM_CLASSES {
            return Err(Error::InvalidInput(format!(
                "label grid declares {} classes, at most {NUM_CLASSES} allowed",
                grid.classes()
            )));
        }
        Ok(Self { grid, ignore_mask })
    }

    /// A label map with nothing ignored.
    pub fn from_grid(grid: GridU8) -> Result<Self> {
        let n = grid.height() * grid.width();
        Self::new(grid, vec![false; n])
    }

    pub fn grid(&self) -> &GridU8 {
        &self.grid
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn ignore_mask(&self) -> &[bool] {
        &self.ignore_mask
    }

    #[inline]
    pub fn is_ignored(&self, y: usize, x: usize) -> bool {
        self.ignore_mask[y * self.grid.width() + x]
    }

    /// Ground-truth class per pixel, `None` where ignored.
    pub fn iter_labels(&self) -> impl Iterator<Item = Option<u8>> + '_ {
        self.grid
            .data()
            .iter()
            .zip(&self.ignore_mask)
            .map(|(&c, &ig)| (!ig).then_some(c))
    }

    /// 2x2 tiling of the map (used to probe count normalization).
    pub fn tile2x2(&self) -> LabelMap {
        let (h, w) = (self.height(), self.width());
        let mut data = Vec::with_capacity(4 * h * w);
        let mut mask = Vec::with_capacity(4 * h * w);
        for y in 0..2 * h {
            for x in 0..2 * w {
                data.push(self.grid.get(y % h, x % w));
                mask.push(self.is_ignored(y % h, x % w));
            }
        }
        LabelMap {
            grid: GridU8::new(2 * h, 2 * w, self.grid.classes(), data).unwrap(),
            ignore_mask: mask,
        }
    }
}

fn check_inputs(words: &[WordAnnotation], h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 {
        return Err(Error::InvalidArgument(format!("empty image {h}x{w}")));
    }
    for word in words {
        word.bbox.validate()?;
        if word.bbox.clip(h, w).is_none() {
            return Err(Error::InvalidAnnotation(format!(
                "box {:?} lies entirely outside the {h}x{w} image",
                word.bbox
            )));
        }
    }
    Ok(())
}

fn paint(mask: &mut [bool], w: usize, b: BoxI) {
    for y in b.y0..b.y1 {
        let row = y as usize * w;
        mask[row + b.x0 as usize..row + b.x1 as usize].fill(true);
    }
}

/// Rasterizes words into the 3-class fence labels.
///
/// Text is the union of word boxes; each word's border ring is its box
/// dilated by `border_width` (square dilation) minus the box itself. Where
/// claims collide the border wins over text, so a word that intrudes on a
/// neighbor's ring loses those pixels to the fence. Ignored words mark their
/// dilated region in the ignore mask and paint nothing into the classes.
pub fn rasterize_labels(
    words: &[WordAnnotation],
    h: usize,
    w: usize,
    border_width: usize,
) -> Result<LabelMap> {
    if border_width == 0 {
        return Err(Error::InvalidArgument("border width must be at least 1".into()));
    }
    check_inputs(words, h, w)?;
    let r = border_width as i64;
    let mut text = vec![false; h * w];
    let mut border = vec![false; h * w];
    let mut ignore = vec![false; h * w];
    for word in words {
        let Some(dilated) = word.bbox.dilate(r).clip(h, w) else {
            continue;
        };
        if word.ignore {
            paint(&mut ignore, w, dilated);
            continue;
        }
        let own = word.bbox.clip(h, w).expect("checked above");
        paint(&mut text, w, own);
        for y in dilated.y0..dilated.y1 {
            for x in dilated.x0..dilated.x1 {
                if !word.bbox.contains(x, y) {
                    border[y as usize * w + x as usize] = true;
                }
            }
        }
    }
    let data = text
        .iter()
        .zip(&border)
        .map(|(&t, &b)| match (b, t) {
            (true, _) => BORDER,
            (false, true) => TEXT,
            _ => BACKGROUND,
        })
        .collect();
    LabelMap::new(GridU8::new(h, w, NUM_CLASSES, data)?, ignore)
}

/// Plain text/background labels without fences. Ignored words mark only
/// their own box in the ignore mask.
pub fn rasterize_text_only(words: &[WordAnnotation], h: usize, w: usize) -> Result<LabelMap> {
    check_inputs(words, h, w)?;
    let mut text = vec![false; h * w];
    let mut ignore = vec![false; h * w];
    for word in words {
        let own = word.bbox.clip(h, w).expect("checked above");
        paint(if word.ignore { &mut ignore } else { &mut text }, w, own);
    }
    let data = text.iter().map(|&t| if t { TEXT } else { BACKGROUND }).collect();
    LabelMap::new(GridU8::new(h, w, NUM_CLASSES, data)?, ignore)
}

/// Per-class pixel counts over the non-ignored pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCounts(pub Vec<usize>);

impl ClassCounts {
    /// Number of classes with at least one pixel.
    pub fn present(&self) -> usize {
        self.0.iter().filter(|&&n| n > 0).count()
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

pub fn class_counts(labels: &LabelMap) -> ClassCounts {
    let mut counts = vec![0; NUM_CLASSES];
    for c in labels.iter_labels().flatten() {
        counts[c as usize] += 1;
    }
    ClassCounts(counts)
}
