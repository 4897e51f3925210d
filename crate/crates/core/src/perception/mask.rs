//! Binary occupancy masks and first-order image moments.

use crate::camgeo::ImagePoint;
use crate::perception::PerceptionError;
use std::io::{Read, Write};
use std::path::Path;

/// Row-major binary raster. Dimensions match the camera image; pixel
/// centers sit at integer coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; (width * height) as usize] }
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> bool {
        self.bits[(v * self.width + u) as usize]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, on: bool) {
        self.bits[(v * self.width + u) as usize] = on;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    /// Number of set pixels (zeroth moment m00).
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Inclusive bounding box (u0, v0, u1, v1) of the set pixels.
    pub fn bounds(&self) -> Option<(u32, u32, u32, u32)> {
        let w = self.width as usize;
        let mut v0 = None;
        let mut v1 = 0u32;
        let mut u0 = self.width;
        let mut u1 = 0u32;
        for v in 0..self.height {
            let row = &self.bits[v as usize * w..(v as usize + 1) * w];
            let Some(first) = row.iter().position(|&b| b) else { continue };
            let last = row.iter().rposition(|&b| b).unwrap();
            if v0.is_none() {
                v0 = Some(v);
            }
            v1 = v;
            u0 = u0.min(first as u32);
            u1 = u1.max(last as u32);
        }
        v0.map(|v0| (u0, v0, u1, v1))
    }

    /// Coordinates of all set pixels in row-major order.
    pub fn set_pixels(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for v in 0..self.height {
            for u in 0..self.width {
                if self.get(u, v) {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// True when `self` and `other` partition `whole`: disjoint, and their
    /// union reproduces `whole` bit-exactly.
    pub fn partitions_with(&self, other: &BinaryMask, whole: &BinaryMask) -> bool {
        if !self.same_shape(other) || !self.same_shape(whole) {
            return false;
        }
        self.bits
            .iter()
            .zip(&other.bits)
            .zip(&whole.bits)
            .all(|((&a, &b), &w)| !(a && b) && ((a || b) == w))
    }
}

/// Centroid of a binary mask from image moments: `(m10/m00, m01/m00)`.
pub fn centroid(mask: &BinaryMask) -> Result<ImagePoint, PerceptionError> {
    let mut m00 = 0u64;
    let mut m10 = 0u64;
    let mut m01 = 0u64;
    for v in 0..mask.height {
        for u in 0..mask.width {
            if mask.get(u, v) {
                m00 += 1;
                m10 += u as u64;
                m01 += v as u64;
            }
        }
    }
    if m00 == 0 {
        return Err(PerceptionError::EmptyMask);
    }
    Ok(ImagePoint::new(m10 as f64 / m00 as f64, m01 as f64 / m00 as f64))
}

/// Real-valued raster in [0, 1]; prediction input to the splitter loss.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl SoftMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![0.0; (width * height) as usize] }
    }

    pub fn from_binary(mask: &BinaryMask) -> Self {
        Self {
            width: mask.width,
            height: mask.height,
            data: mask.as_slice().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn same_shape_mask(&self, mask: &BinaryMask) -> bool {
        self.width == mask.width && self.height == mask.height
    }
}

/// Write a mask as binary PGM (P5), 255 for set pixels, 0 otherwise.
pub fn write_pgm(mask: &BinaryMask, path: &Path) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P5\n{} {}\n255\n", mask.width, mask.height)?;
    let bytes: Vec<u8> = mask.as_slice().iter().map(|&b| if b { 255 } else { 0 }).collect();
    f.write_all(&bytes)
}

/// Read a binary PGM (P5); any gray value >= 128 counts as set.
pub fn read_pgm(path: &Path) -> std::io::Result<BinaryMask> {
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());

    // Header: magic, width, height, maxval, each separated by whitespace
    // (comments starting with '#' allowed), then a single whitespace byte
    // before the pixel data.
    let mut pos = 0usize;
    let mut fields: Vec<String> = Vec::new();
    while fields.len() < 4 {
        while pos < raw.len() && (raw[pos] as char).is_whitespace() {
            pos += 1;
        }
        if pos < raw.len() && raw[pos] == b'#' {
            while pos < raw.len() && raw[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < raw.len() && !(raw[pos] as char).is_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&raw[start..pos]).into_owned());
    }
    pos += 1; // single whitespace after maxval

    if fields[0] != "P5" {
        return Err(bad("expected P5 magic"));
    }
    let width: u32 = fields[1].parse().map_err(|_| bad("bad width"))?;
    let height: u32 = fields[2].parse().map_err(|_| bad("bad height"))?;
    let maxval: u32 = fields[3].parse().map_err(|_| bad("bad maxval"))?;
    if maxval == 0 || maxval > 255 {
        return Err(bad("unsupported maxval"));
    }
    let n = (width * height) as usize;
    if raw.len() < pos + n {
        return Err(bad("truncated pixel data"));
    }
    let mut mask = BinaryMask::new(width, height);
    for i in 0..n {
        if raw[pos + i] >= 128 {
            mask.bits[i] = true;
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centroid_of_2x2_block() {
        let mut m = BinaryMask::new(8, 8);
        m.set(0, 0, true);
        m.set(1, 0, true);
        m.set(0, 1, true);
        m.set(1, 1, true);
        let c = centroid(&m).unwrap();
        assert_eq!((c.u, c.v), (0.5, 0.5));
    }

    #[test]
    fn centroid_of_single_pixel() {
        let mut m = BinaryMask::new(16, 16);
        m.set(7, 3, true);
        let c = centroid(&m).unwrap();
        assert_eq!((c.u, c.v), (7.0, 3.0));
    }

    #[test]
    fn centroid_of_empty_mask_is_error() {
        assert!(matches!(centroid(&BinaryMask::new(4, 4)), Err(PerceptionError::EmptyMask)));
    }

    #[test]
    fn centroid_matches_bruteforce_mean() {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let mut m = BinaryMask::new(40, 30);
            let mut us = Vec::new();
            let mut vs = Vec::new();
            for v in 0..30 {
                for u in 0..40 {
                    if rng.random_range(0.0..1.0) < 0.2 {
                        m.set(u, v, true);
                        us.push(u as f64);
                        vs.push(v as f64);
                    }
                }
            }
            if us.is_empty() {
                continue;
            }
            let c = centroid(&m).unwrap();
            let mu = us.iter().sum::<f64>() / us.len() as f64;
            let mv = vs.iter().sum::<f64>() / vs.len() as f64;
            assert!((c.u - mu).abs() < 1e-9 && (c.v - mv).abs() < 1e-9);
        }
    }

    #[test]
    fn pgm_roundtrip() {
        let mut m = BinaryMask::new(13, 9);
        for v in 0..9 {
            for u in 0..13 {
                m.set(u, v, (u + 2 * v) % 3 == 0);
            }
        }
        let dir = std::env::temp_dir().join("nser_pgm_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.pgm");
        write_pgm(&m, &path).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(m, back);
    }
}
