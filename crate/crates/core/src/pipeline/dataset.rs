//! Image ingestion: binary PGM (P5) and the XTRT raw-tensor container.
//!
//! XTRT layout, all little-endian:
//!
//! | bytes        | content                          |
//! |--------------|----------------------------------|
//! | 4            | magic `XTRT`                     |
//! | 1            | version, `0x01`                  |
//! | 1            | rank `r` (2 = `H,W`, 3 = `C,H,W`) |
//! | 4 * r        | `u32` extents                    |
//! | 4 * prod     | `f32` payload, row-major         |

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const XTRT_MAGIC: &[u8; 4] = b"XTRT";
pub const XTRT_VERSION: u8 = 1;

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Decodes an XTRT buffer into a `[C, H, W]` tensor.
pub fn decode_xtrt(bytes: &[u8], path: &Path) -> Result<Tensor> {
    if bytes.len() < 6 || &bytes[..4] != XTRT_MAGIC {
        return Err(format_err(path, "missing XTRT magic"));
    }
    if bytes[4] != XTRT_VERSION {
        return Err(format_err(
            path,
            format!("unsupported XTRT version {}", bytes[4]),
        ));
    }
    let rank = bytes[5] as usize;
    if !(2..=3).contains(&rank) {
        return Err(format_err(
            path,
            format!("image rank must be 2 or 3, got {rank}"),
        ));
    }
    let header = 6 + 4 * rank;
    if bytes.len() < header {
        return Err(format_err(path, "truncated XTRT header"));
    }
    let mut dims: Vec<usize> = bytes[6..header]
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
        .collect();
    if dims.contains(&0) {
        return Err(format_err(path, format!("zero extent in {dims:?}")));
    }
    if rank == 2 {
        dims.insert(0, 1);
    }
    let count: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() != 4 * count {
        return Err(format_err(
            path,
            format!(
                "payload is {} bytes, dims {dims:?} need {}",
                payload.len(),
                4 * count
            ),
        ));
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(format_err(path, "payload contains non-finite values"));
    }
    Ok(Tensor::from_raw(dims, data))
}

/// Encodes a rank-2 or rank-3 tensor as XTRT (values narrowed to `f32`).
pub fn encode_xtrt(t: &Tensor) -> Result<Vec<u8>> {
    if !(2..=3).contains(&t.rank()) {
        return Err(Error::validation(format!(
            "XTRT images are rank 2 or 3, got {:?}",
            t.shape()
        )));
    }
    let mut out = Vec::with_capacity(6 + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(XTRT_MAGIC);
    out.push(XTRT_VERSION);
    out.push(t.rank() as u8);
    for &d in t.shape() {
        let d =
            u32::try_from(d).map_err(|_| Error::validation(format!("extent {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Decodes a binary (P5) PGM into a `[1, H, W]` tensor of raw sample values.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let mut pos = 0;
    let mut fields = [0usize; 4];
    for (i, slot) in fields.iter_mut().enumerate() {
        // Skip whitespace and comments up to the next token.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n' && b != b'\r') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(format_err(path, "truncated PGM header")),
            }
        }
        let start = pos;
        while bytes
            .get(pos)
            .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
        {
            pos += 1;
        }
        let token = &bytes[start..pos];
        if i == 0 {
            if token != b"P5" {
                return Err(format_err(path, "not a binary PGM (expected P5)"));
            }
            continue;
        }
        *slot = std::str::from_utf8(token)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(path, "malformed PGM header field"))?;
    }
    let [_, width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(format_err(path, "PGM has a zero dimension"));
    }
    if !(1..=65535).contains(&maxval) {
        return Err(format_err(
            path,
            format!("PGM maxval {maxval} out of range"),
        ));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(format_err(path, "missing whitespace after PGM maxval"));
    }
    pos += 1;

    let n = width * height;
    let raster = &bytes[pos..];
    let data: Vec<f64> = if maxval < 256 {
        if raster.len() < n {
            return Err(format_err(path, "truncated PGM raster"));
        }
        raster[..n].iter().map(|&b| f64::from(b)).collect()
    } else {
        if raster.len() < 2 * n {
            return Err(format_err(path, "truncated PGM raster"));
        }
        raster[..2 * n]
            .chunks_exact(2)
            .map(|b| f64::from(u16::from_be_bytes([b[0], b[1]])))
            .collect()
    };
    Ok(Tensor::from_raw(vec![1, height, width], data))
}

/// Encodes samples as P5. `maxval >= 256` switches to big-endian 16-bit.
pub fn encode_pgm(width: usize, height: usize, maxval: u16, samples: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    for &s in samples {
        if maxval < 256 {
            out.push(s as u8);
        } else {
            out.extend_from_slice(&s.to_be_bytes());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ImageFormat {
    Pgm,
    Xtrt,
}

fn format_of(path: &Path) -> Option<ImageFormat> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    match ext.as_str() {
        "pgm" => Some(ImageFormat::Pgm),
        "xtrt" => Some(ImageFormat::Xtrt),
        _ => None,
    }
}

/// Reads one image file as a `[C, H, W]` tensor of raw values.
pub fn read_image(path: &Path) -> Result<Tensor> {
    let format = format_of(path)
        .ok_or_else(|| format_err(path, "unsupported extension (expected .pgm or .xtrt)"))?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        ImageFormat::Pgm => decode_pgm(&bytes, path),
        ImageFormat::Xtrt => decode_xtrt(&bytes, path),
    }
}

/// Per-image intensity statistics recorded before z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub path: PathBuf,
    pub mean: f64,
    pub std: f64,
    /// Zero-variance image, emitted as all zeros.
    pub constant: bool,
}

/// Z-scores a whole image (all channels and pixels together).
pub fn zscore(t: &Tensor) -> (Tensor, f64, f64, bool) {
    let n = t.len() as f64;
    let mean = t.sum() / n;
    let var = t
        .data()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    if std <= 1e-12 * mean.abs().max(1.0) {
        return (Tensor::zeros(t.shape()), mean, std, true);
    }
    (t.map(|v| (v - mean) / std), mean, std, false)
}

#[derive(Debug, Clone)]
pub struct DatasetSample {
    /// z-scored `[C, H, W]` images in file-name order.
    pub images: Vec<Tensor>,
    pub records: Vec<ImageRecord>,
}

impl DatasetSample {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `(C, H, W)` shared by every image.
    pub fn image_dims(&self) -> (usize, usize, usize) {
        let s = self.images[0].shape();
        (s[0], s[1], s[2])
    }

    pub fn constant_images(&self) -> impl Iterator<Item = &ImageRecord> {
        self.records.iter().filter(|r| r.constant)
    }
}

/// Loads every `.pgm`/`.xtrt` file in `dir` (sorted by name, not recursive).
///
/// `expected` pins `(C, H, W)`; otherwise the first image sets it.
pub fn load_dataset(dir: &Path, expected: Option<(usize, usize, usize)>) -> Result<DatasetSample> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && format_of(&path).is_some() {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::validation(format!(
            "{} contains no .pgm or .xtrt images",
            dir.display()
        )));
    }

    let mut images = Vec::with_capacity(paths.len());
    let mut records = Vec::with_capacity(paths.len());
    let mut dims = expected;
    for path in paths {
        let raw = read_image(&path)?;
        let s = raw.shape();
        let got = (s[0], s[1], s[2]);
        match dims {
            None => dims = Some(got),
            Some(d) if d != got => {
                return Err(Error::validation(format!(
                    "{} is {}x{}x{}, expected {}x{}x{}",
                    path.display(),
                    got.0,
                    got.1,
                    got.2,
                    d.0,
                    d.1,
                    d.2
                )))
            }
            Some(_) => {}
        }
        let (z, mean, std, constant) = zscore(&raw);
        images.push(z);
        records.push(ImageRecord {
            path,
            mean,
            std,
            constant,
        });
    }
    Ok(DatasetSample { images, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn flat_8bit_pgm_is_constant() {
        let bytes = encode_pgm(4, 3, 255, &[128; 12]);
        let t = decode_pgm(&bytes, p()).unwrap();
        assert_eq!(t.shape(), &[1, 3, 4]);
        assert!(t.data().iter().all(|&v| v == 128.0));
        let (z, _, _, constant) = zscore(&t);
        assert!(constant);
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sixteen_bit_pgm_is_big_endian() {
        let bytes = encode_pgm(2, 1, 65535, &[0x0102, 0xFFFE]);
        assert_eq!(&bytes[bytes.len() - 4..], &[0x01, 0x02, 0xFF, 0xFE]);
        let t = decode_pgm(&bytes, p()).unwrap();
        assert_eq!(t.data(), &[258.0, 65534.0]);
    }

    #[test]
    fn pgm_header_comments() {
        let mut bytes = b"P5\n# made by hand\n2 # width\n2\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4]);
        let t = decode_pgm(&bytes, p()).unwrap();
        assert_eq!(t.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn pgm_rejects_other_magic_and_truncation() {
        assert!(decode_pgm(b"P2\n2 2\n255\n1 2 3 4", p()).is_err());
        let bytes = encode_pgm(4, 4, 255, &[7; 10]);
        assert!(decode_pgm(&bytes, p()).is_err());
    }

    #[test]
    fn xtrt_layout_is_bit_exact() {
        let t = Tensor::new(vec![1, 1, 2], vec![1.0, -2.5]).unwrap();
        let bytes = encode_xtrt(&t).unwrap();
        let mut expect = b"XTRT".to_vec();
        expect.extend_from_slice(&[1, 3]);
        for d in [1u32, 1, 2] {
            expect.extend_from_slice(&d.to_le_bytes());
        }
        expect.extend_from_slice(&1.0f32.to_le_bytes());
        expect.extend_from_slice(&(-2.5f32).to_le_bytes());
        assert_eq!(bytes, expect);
    }

    #[test]
    fn xtrt_image_64x64() {
        let data: Vec<f64> = (0..4096).map(|i| (i % 17) as f64 * 0.25).collect();
        let t = Tensor::new(vec![1, 64, 64], data).unwrap();
        let back = decode_xtrt(&encode_xtrt(&t).unwrap(), p()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn xtrt_rank2_gets_a_channel_axis() {
        let t = Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap();
        let back = decode_xtrt(&encode_xtrt(&t).unwrap(), p()).unwrap();
        assert_eq!(back.shape(), &[1, 2, 3]);
    }

    #[test]
    fn xtrt_rejects_bad_buffers() {
        let t = Tensor::new(vec![1, 2, 2], vec![0.0; 4]).unwrap();
        let good = encode_xtrt(&t).unwrap();
        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(decode_xtrt(&bad_version, p()).is_err());
        assert!(decode_xtrt(&good[..good.len() - 1], p()).is_err());
        assert!(decode_xtrt(b"XTRA\x01\x02", p()).is_err());
    }

    #[test]
    fn zscore_statistics() {
        let t = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 10.0]).unwrap();
        let (z, ..) = zscore(&t);
        let mean = z.sum() / 4.0;
        let var = z.sum_squares() / 4.0 - mean * mean;
        assert!(mean.abs() < 1e-12);
        assert!((var.sqrt() - 1.0).abs() < 1e-12);
    }
}
