//! Word extraction: 4-connected components of the text class, then one
//! tight box per component.

use crate::grid::{BoxI, GridU8};
use crate::labelgen::TEXT;

pub const DEFAULT_MIN_AREA: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentMap {
    pub height: usize,
    pub width: usize,
    /// Row-major component ids; 0 marks pixels outside the target class.
    pub ids: Vec<u32>,
    /// Pixel count of component `id` at index `id - 1`.
    pub sizes: Vec<usize>,
    /// Tight extent of component `id` at index `id - 1`.
    pub extents: Vec<BoxI>,
}

impl ComponentMap {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    pub fn id(&self, y: usize, x: usize) -> u32 {
        self.ids[y * self.width + x]
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        Self { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut a: u32) -> u32 {
        while self.parent[a as usize] != a {
            let up = self.parent[self.parent[a as usize] as usize];
            self.parent[a as usize] = up;
            a = up;
        }
        a
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Two-pass union-find labelling under 4-connectivity. Final ids follow the
/// raster order in which each component's first pixel is met.
pub fn connected_components(labels: &GridU8, target: u8) -> ComponentMap {
    let (h, w) = (labels.height(), labels.width());
    let mut provisional = vec![0u32; h * w];
    let mut sets = DisjointSet::new();
    for y in 0..h {
        for x in 0..w {
            if labels.get(y, x) != target {
                continue;
            }
            let up = if y > 0 { provisional[(y - 1) * w + x] } else { 0 };
            let left = if x > 0 { provisional[y * w + x - 1] } else { 0 };
            provisional[y * w + x] = match (up, left) {
                (0, 0) => sets.make(),
                (a, 0) | (0, a) => a,
                (a, b) => sets.union(a, b),
            };
        }
    }

    let mut remap = vec![0u32; sets.parent.len()];
    let mut ids = vec![0u32; h * w];
    let mut sizes = Vec::new();
    let mut extents: Vec<BoxI> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let p = provisional[y * w + x];
            if p == 0 {
                continue;
            }
            let root = sets.find(p) as usize;
            if remap[root] == 0 {
                sizes.push(0);
                extents.push(BoxI {
                    x0: x as i64,
                    y0: y as i64,
                    x1: x as i64 + 1,
                    y1: y as i64 + 1,
                });
                remap[root] = sizes.len() as u32;
            }
            let id = remap[root];
            ids[y * w + x] = id;
            let k = id as usize - 1;
            sizes[k] += 1;
            let e = &mut extents[k];
            e.x0 = e.x0.min(x as i64);
            e.x1 = e.x1.max(x as i64 + 1);
            e.y1 = e.y1.max(y as i64 + 1);
        }
    }
    ComponentMap {
        height: h,
        width: w,
        ids,
        sizes,
        extents,
    }
}

/// Components of the text class.
pub fn text_components(labels: &GridU8) -> ComponentMap {
    connected_components(labels, TEXT)
}

/// One box per component with at least `min_area` pixels, grown by `expand`
/// on every side and clipped to the image, sorted by `(y0, x0)`.
pub fn components_to_boxes(components: &ComponentMap, min_area: usize, expand: usize) -> Vec<BoxI> {
    let mut boxes: Vec<BoxI> = components
        .sizes
        .iter()
        .zip(&components.extents)
        .filter(|(&n, _)| n >= min_area)
        .filter_map(|(_, e)| e.dilate(expand as i64).clip(components.height, components.width))
        .collect();
    boxes.sort_by_key(|b| (b.y0, b.x0, b.y1, b.x1));
    boxes
}

/// Text components straight to boxes.
pub fn extract_boxes(labels: &GridU8, min_area: usize, expand: usize) -> Vec<BoxI> {
    components_to_boxes(&text_components(labels), min_area, expand)
}
