//! Binary PGM (`P5`) images.
//!
//! Written with maxval 255 and `byte = round(255·v)`; read back as values in
//! `[0, 1]`. The reader also accepts 16-bit samples (maxval > 255).

use std::fs;
use std::path::Path;

use super::write_atomic;
use crate::error::{Error, Result};
use crate::projection::Silhouette;

/// Grayscale image with values in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayImage {
    pub fn from_silhouette(s: &Silhouette) -> Self {
        GrayImage {
            width: s.extent(),
            height: s.extent(),
            data: s.data().to_vec(),
        }
    }

    pub fn into_silhouette(self) -> Result<Silhouette> {
        if self.width != self.height {
            return Err(Error::invalid(
                "pgm",
                format!("expected a square image, got {}x{}", self.width, self.height),
            ));
        }
        Silhouette::new(self.width, self.data)
    }
}

pub fn quantize(v: f32) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

pub fn to_bytes(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|&v| quantize(v)));
    out
}

fn is_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | b'\x0b' | b'\x0c')
}

pub fn from_bytes(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format("pgm", 0, "expected P5 magic"));
    }
    let mut pos = 2usize;
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        // Whitespace and `#` comments may separate header fields.
        loop {
            match bytes.get(pos) {
                Some(&b) if is_space(b) => pos += 1,
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
            return Err(Error::format("pgm", start as u64, format!("expected {name}")));
        }
        *slot = std::str::from_utf8(&bytes[start..pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::format("pgm", start as u64, format!("{name} out of range")))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(Error::format("pgm", pos as u64, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format("pgm", pos as u64, format!("maxval {maxval} out of range")));
    }
    match bytes.get(pos) {
        Some(&b) if is_space(b) => pos += 1,
        _ => return Err(Error::format("pgm", pos as u64, "expected whitespace after maxval")),
    }
    let wide = maxval > 255;
    let need = width * height * if wide { 2 } else { 1 };
    if bytes.len() - pos < need {
        return Err(Error::format(
            "pgm",
            bytes.len() as u64,
            format!("truncated pixel data: need {need} bytes, have {}", bytes.len() - pos),
        ));
    }
    let raw = &bytes[pos..pos + need];
    let samples: Vec<usize> = if wide {
        raw.chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as usize)
            .collect()
    } else {
        raw.iter().map(|&b| b as usize).collect()
    };
    if let Some(p) = samples.iter().position(|&s| s > maxval) {
        let off = pos + p * if wide { 2 } else { 1 };
        return Err(Error::format("pgm", off as u64, "sample exceeds maxval"));
    }
    Ok(GrayImage {
        width,
        height,
        data: samples.iter().map(|&s| s as f32 / maxval as f32).collect(),
    })
}

pub fn save(img: &GrayImage, path: &Path) -> Result<()> {
    write_atomic(path, &to_bytes(img))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<GrayImage> {
    from_bytes(&fs::read(path)?)
}
