//! Color overlays for visual inspection: gray image, optional class tint,
//! green box outlines.

use crate::error::{Error, Result};
use crate::grid::{BoxI, GridF, GridU8};
use crate::io::{self, quantize_gray};
use crate::labelgen::{BORDER, TEXT};

const BOX_COLOR: [u8; 3] = [0, 255, 0];
const TEXT_TINT: [u8; 3] = [255, 0, 0];
const BORDER_TINT: [u8; 3] = [0, 0, 255];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn set(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        io::encode_ppm(self.width, self.height, &self.data)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }
}

/// 60/40 blend in integer arithmetic, rounded half up.
fn blend(gray: u8, tint: [u8; 3]) -> [u8; 3] {
    tint.map(|t| ((6 * gray as u32 + 4 * t as u32 + 5) / 10) as u8)
}

pub fn render_overlay(image: &GridF, boxes: &[BoxI], labels: Option<&GridU8>) -> Result<RgbImage> {
    if image.channels() != 1 {
        return Err(Error::InvalidInput(format!(
            "overlay expects a gray image, got {} channels",
            image.channels()
        )));
    }
    let (h, w) = (image.height(), image.width());
    if let Some(l) = labels {
        if (l.height(), l.width()) != (h, w) {
            return Err(Error::InvalidInput(format!(
                "label map is {}x{}, image is {h}x{w}",
                l.height(),
                l.width()
            )));
        }
    }
    let gray = quantize_gray(image);
    let mut out = RgbImage {
        width: w,
        height: h,
        data: gray.data().iter().flat_map(|&g| [g, g, g]).collect(),
    };
    if let Some(l) = labels {
        for y in 0..h {
            for x in 0..w {
                let tint = match l.get(y, x) {
                    TEXT => TEXT_TINT,
                    BORDER => BORDER_TINT,
                    _ => continue,
                };
                out.set(y, x, blend(gray.get(y, x), tint));
            }
        }
    }
    for b in boxes {
        let Some(c) = b.clip(h, w) else {
            log::warn!("box {b:?} lies outside the {h}x{w} image; skipped");
            continue;
        };
        if c != *b {
            log::warn!("box {b:?} clipped to {c:?}");
        }
        for y in c.y0..c.y1 {
            for x in c.x0..c.x1 {
                if y == c.y0 || y == c.y1 - 1 || x == c.x0 || x == c.x1 - 1 {
                    out.set(y as usize, x as usize, BOX_COLOR);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image() -> GridF {
        GridF::from_fn(6, 7, 1, |y, x, _| ((y * 7 + x) % 5) as f64 / 4.0)
    }

    #[test]
    fn no_boxes_is_gray_passthrough() {
        let out = render_overlay(&image(), &[], None).unwrap();
        let gray = quantize_gray(&image());
        for y in 0..6 {
            for x in 0..7 {
                let g = gray.get(y, x);
                assert_eq!(out.pixel(y, x), [g, g, g]);
            }
        }
    }

    #[test]
    fn one_box_recolors_exactly_its_perimeter() {
        let b = BoxI::new(1, 1, 5, 4).unwrap();
        let plain = render_overlay(&image(), &[], None).unwrap();
        let out = render_overlay(&image(), &[b], None).unwrap();
        let mut changed = 0;
        for y in 0..6 {
            for x in 0..7 {
                let on_edge = b.contains(x, y) && (x == 1 || x == 4 || y == 1 || y == 3);
                if on_edge {
                    assert_eq!(out.pixel(y as usize, x as usize), BOX_COLOR);
                    changed += 1;
                } else {
                    assert_eq!(out.pixel(y as usize, x as usize), plain.pixel(y as usize, x as usize));
                }
            }
        }
        assert_eq!(changed, 2 * 4 + 2 * 3 - 4);
    }

    #[test]
    fn output_is_deterministic() {
        let labels = GridU8::new(6, 7, 3, (0..42).map(|i| (i % 3) as u8).collect()).unwrap();
        let boxes = [BoxI::new(-2, 0, 3, 3).unwrap(), BoxI::new(10, 10, 12, 12).unwrap()];
        let a = render_overlay(&image(), &boxes, Some(&labels)).unwrap().to_ppm();
        let b = render_overlay(&image(), &boxes, Some(&labels)).unwrap().to_ppm();
        assert_eq!(a, b);
        assert!(a.starts_with(b"P6\n7 6\n255\n"));
    }

    #[test]
    fn tint_blend() {
        assert_eq!(blend(100, TEXT_TINT), [162, 60, 60]);
    }
}
