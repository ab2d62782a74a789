//! Netpbm greyscale/colour images (P2, P3, P5, P6).
//!
//! Samples are normalized by the header's maxval, so a byte of 128 in an
//! 8-bit file reads as 128/255.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Decodes a PGM/PPM into a `(C, H, W)` tensor in `[0, 1]`.
pub fn decode_pnm(bytes: &[u8]) -> std::result::Result<Tensor, String> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos).ok_or("empty file")?;
    let (channels, binary) = match magic.as_str() {
        "P2" => (1, false),
        "P5" => (1, true),
        "P3" => (3, false),
        "P6" => (3, true),
        other => return Err(format!("unsupported netpbm magic `{other}`")),
    };
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let tok = next_token(bytes, &mut pos).ok_or(format!("missing {name}"))?;
        *slot = tok.parse().map_err(|_| format!("bad {name} `{tok}`"))?;
    }
    let [w, h, maxval] = header;
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(format!("bad header {w}x{h} maxval {maxval}"));
    }
    let n = w * h * channels;
    let raw: Vec<usize> = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let width = if maxval < 256 { 1 } else { 2 };
        let body = bytes.get(pos..pos + n * width).ok_or("truncated raster")?;
        if width == 1 {
            body.iter().map(|&b| b as usize).collect()
        } else {
            body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as usize).collect()
        }
    } else {
        (0..n)
            .map(|_| {
                let tok = next_token(bytes, &mut pos).ok_or("truncated raster")?;
                tok.parse::<usize>().map_err(|_| format!("bad sample `{tok}`"))
            })
            .collect::<std::result::Result<_, String>>()?
    };
    if let Some(&v) = raw.iter().find(|&&v| v > maxval) {
        return Err(format!("sample {v} exceeds maxval {maxval}"));
    }
    // Interleaved HWC -> planar CHW.
    let mut data = vec![0.0f32; n];
    for (i, &v) in raw.iter().enumerate() {
        let (pix, ch) = (i / channels, i % channels);
        data[ch * w * h + pix] = v as f32 / maxval as f32;
    }
    Tensor::new(vec![channels, h, w], data).map_err(|e| e.to_string())
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes).map_err(|m| Error::format(path, m))
}

/// Encodes a 1- or 3-channel image in `[0, 1]` as binary PGM/PPM with
/// maxval 255.
pub fn encode_pnm(img: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = img.image_dims()?;
    let magic = match c {
        1 => "P5",
        3 => "P6",
        _ => return Err(Error::invalid(format!("cannot write {c}-channel image as netpbm"))),
    };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let plane = h * w;
    for p in 0..plane {
        for ch in 0..c {
            let v = img.data()[ch * plane + p].clamp(0.0, 1.0);
            out.push((v * 255.0).round() as u8);
        }
    }
    Ok(out)
}

pub fn write_pnm(path: impl AsRef<Path>, img: &Tensor) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pnm(img)?).map_err(|e| Error::io(path, e))
}

/// Min-max normalizes `values` (summed over channels) into a greyscale PGM.
pub fn heatmap_pgm(values: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = values.image_dims()?;
    let plane = h * w;
    let sums: Vec<f64> = (0..plane)
        .map(|p| (0..c).map(|ch| values.data()[ch * plane + p] as f64).sum())
        .collect();
    let lo = sums.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(sums.iter().map(|&s| ((s - lo) / span * 255.0).round() as u8));
    Ok(out)
}
