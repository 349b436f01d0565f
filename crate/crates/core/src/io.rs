//! On-disk formats.
//!
//! FTEN tensors: the magic `FTEN`, a little-endian `u32` rank, `rank`
//! little-endian `u32` dims, then the product of the dims as little-endian
//! IEEE-754 `f32` values. Grids use dims `(height, width, channels)` in
//! row-major-then-channel order. Values are stored at 32-bit precision, so
//! a grid round-trips bit-exactly only when its values are representable
//! as `f32`.
//!
//! Label maps and gray images use binary PGM (P5, maxval 255); overlays
//! use binary PPM (P6).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridF, GridU8};

pub const FTEN_MAGIC: &[u8; 4] = b"FTEN";

/// A raw FTEN tensor of arbitrary rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn from_f64(dims: Vec<u32>, values: &[f64]) -> Self {
        debug_assert_eq!(
            dims.iter().map(|&d| d as usize).product::<usize>(),
            values.len()
        );
        Self {
            dims,
            data: values.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(FTEN_MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    /// Decodes one tensor from the front of `bytes`, returning it and the
    /// number of bytes consumed. Errors carry a plain message; callers attach
    /// the file name.
    pub fn decode(bytes: &[u8]) -> std::result::Result<(Tensor, usize), String> {
        let mut r = ByteReader { bytes, pos: 0 };
        let magic = r.take(4).ok_or("truncated before magic")?;
        if magic != FTEN_MAGIC {
            return Err(format!("bad magic {magic:?}, expected \"FTEN\""));
        }
        let rank = r.u32().ok_or("truncated rank")? as usize;
        if rank > 16 {
            return Err(format!("implausible rank {rank}"));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32().ok_or("truncated dims")?);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .ok_or("dims overflow")?;
        let raw = r
            .take(count.checked_mul(4).ok_or("dims overflow")?)
            .ok_or_else(|| format!("truncated data: expected {count} floats"))?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok((Tensor { dims, data }, r.pos))
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn encode_grid(grid: &GridF) -> Vec<u8> {
    let (h, w, c) = grid.dims();
    let mut out = Vec::with_capacity(16 + 4 * grid.data().len());
    Tensor::from_f64(vec![h as u32, w as u32, c as u32], grid.data()).encode(&mut out);
    out
}

pub fn tensor_to_grid(t: &Tensor) -> std::result::Result<GridF, String> {
    let (h, w, c) = match t.dims.as_slice() {
        &[h, w] => (h, w, 1),
        &[h, w, c] => (h, w, c),
        d => return Err(format!("expected a rank-2 or rank-3 grid, got dims {d:?}")),
    };
    GridF::new(h as usize, w as usize, c as usize, t.to_f64()).map_err(|e| e.to_string())
}

pub fn write_grid(path: &Path, grid: &GridF) -> Result<()> {
    fs::write(path, encode_grid(grid)).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: &Path) -> Result<GridF> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (t, used) = Tensor::decode(&bytes).map_err(|m| Error::format(path, m))?;
    if used != bytes.len() {
        return Err(Error::format(path, "trailing bytes after tensor"));
    }
    tensor_to_grid(&t).map_err(|m| Error::format(path, m))
}

pub fn write_tensors(path: &Path, tensors: &[Tensor]) -> Result<()> {
    let mut out = Vec::new();
    for t in tensors {
        t.encode(&mut out);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a file of concatenated FTEN tensors.
pub fn read_tensors(path: &Path) -> Result<Vec<Tensor>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0;
    let mut out = Vec::new();
    while pos < bytes.len() {
        let (t, used) = Tensor::decode(&bytes[pos..])
            .map_err(|m| Error::format(path, format!("tensor {}: {m}", out.len())))?;
        out.push(t);
        pos += used;
    }
    Ok(out)
}

fn pnm_header(magic: &str, width: usize, height: usize) -> Vec<u8> {
    format!("{magic}\n{width} {height}\n255\n").into_bytes()
}

pub fn encode_pgm(grid: &GridU8) -> Vec<u8> {
    let mut out = pnm_header("P5", grid.width(), grid.height());
    out.extend_from_slice(grid.data());
    out
}

pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    assert_eq!(rgb.len(), width * height * 3);
    let mut out = pnm_header("P6", width, height);
    out.extend_from_slice(rgb);
    out
}

/// Parsed binary PNM: (magic, width, height, pixel bytes).
fn decode_pnm(bytes: &[u8]) -> std::result::Result<(&'static str, usize, usize, &[u8]), String> {
    let magic = match bytes.get(..2) {
        Some(b"P5") => "P5",
        Some(b"P6") => "P6",
        _ => return Err("not a binary PGM/PPM (expected P5 or P6)".into()),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and '#' comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err("malformed header".into());
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| "header number out of range".to_string())?;
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err("malformed header".into());
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}, expected 255"));
    }
    let per_pixel = if magic == "P5" { 1 } else { 3 };
    let need = width * height * per_pixel;
    let data = &bytes[pos..];
    if data.len() != need {
        return Err(format!("expected {need} pixel bytes, found {}", data.len()));
    }
    Ok((magic, width, height, data))
}

pub fn write_pgm(path: &Path, grid: &GridU8) -> Result<()> {
    fs::write(path, encode_pgm(grid)).map_err(|e| Error::io(path, e))
}

/// Reads a P5 file as raw bytes with a declared class count of 256.
pub fn read_pgm(path: &Path) -> Result<GridU8> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (magic, w, h, data) = decode_pnm(&bytes).map_err(|m| Error::format(path, m))?;
    if magic != "P5" {
        return Err(Error::format(path, "expected a P5 graymap"));
    }
    GridU8::new(h, w, 256, data.to_vec()).map_err(|e| Error::format(path, e.to_string()))
}

/// Reads a P5 label map, checking every value is a valid class.
pub fn read_label_pgm(path: &Path, classes: usize) -> Result<GridU8> {
    let raw = read_pgm(path)?;
    GridU8::new(raw.height(), raw.width(), classes, raw.data().to_vec())
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Reads a P6 file as (width, height, rgb bytes).
pub fn read_ppm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (magic, w, h, data) = decode_pnm(&bytes).map_err(|m| Error::format(path, m))?;
    if magic != "P6" {
        return Err(Error::format(path, "expected a P6 pixmap"));
    }
    Ok((w, h, data.to_vec()))
}

/// Gray image in [0, 1] to 8-bit levels.
pub fn quantize_gray(image: &GridF) -> GridU8 {
    assert_eq!(image.channels(), 1);
    let data = image
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    GridU8::new(image.height(), image.width(), 256, data).unwrap()
}

pub fn gray_to_grid(gray: &GridU8) -> GridF {
    let data = gray.data().iter().map(|&v| v as f64 / 255.0).collect();
    GridF::from_raw(gray.height(), gray.width(), 1, data)
}

pub fn write_gray_image(path: &Path, image: &GridF) -> Result<()> {
    write_pgm(path, &quantize_gray(image))
}

pub fn read_gray_image(path: &Path) -> Result<GridF> {
    Ok(gray_to_grid(&read_pgm(path)?))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let mut s = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    bytes.push(b'\n');
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(path, e))
}
