//! Binary PPM (P6) and PGM (P5) readers/writers, 8-bit only. Masks are
//! PGM files whose gray values are raw class indices.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn write_ppm(path: &Path, rgb: &[u8], height: usize, width: usize) -> Result<()> {
    assert_eq!(rgb.len(), height * width * 3, "ppm buffer size");
    let mut f = fs::File::create(path)?;
    write!(f, "P6\n{width} {height}\n255\n")?;
    f.write_all(rgb)?;
    Ok(())
}

pub fn write_pgm(path: &Path, gray: &[u8], height: usize, width: usize) -> Result<()> {
    assert_eq!(gray.len(), height * width, "pgm buffer size");
    let mut f = fs::File::create(path)?;
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(gray)?;
    Ok(())
}

fn parse_header(bytes: &[u8], magic: &str, path: &Path) -> Result<(usize, usize, usize)> {
    // magic, width, height, maxval tokens; '#' starts a comment line
    let mut pos = 0usize;
    let mut tokens: Vec<String> = Vec::new();
    while tokens.len() < 4 && pos < bytes.len() {
        let b = bytes[pos];
        if b == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else if b.is_ascii_whitespace() {
            pos += 1;
        } else {
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
                pos += 1;
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
    }
    if tokens.len() < 4 {
        return Err(err!(Data, "{}: truncated header", path.display()));
    }
    if tokens[0] != magic {
        return Err(err!(
            Data,
            "{}: expected {magic}, found {}",
            path.display(),
            tokens[0]
        ));
    }
    let width: usize = tokens[1]
        .parse()
        .map_err(|_| err!(Data, "{}: bad width", path.display()))?;
    let height: usize = tokens[2]
        .parse()
        .map_err(|_| err!(Data, "{}: bad height", path.display()))?;
    let maxval: usize = tokens[3]
        .parse()
        .map_err(|_| err!(Data, "{}: bad maxval", path.display()))?;
    if maxval != 255 {
        return Err(err!(Data, "{}: only maxval 255 is supported", path.display()));
    }
    // pos currently sits right after the maxval token; exactly one
    // whitespace byte separates the header from the raster
    Ok((height, width, pos + 1))
}

pub fn read_ppm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let (height, width, offset) = parse_header(&bytes, "P6", path)?;
    let need = height * width * 3;
    if bytes.len() < offset + need {
        return Err(err!(Data, "{}: raster truncated", path.display()));
    }
    Ok((height, width, bytes[offset..offset + need].to_vec()))
}

pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let (height, width, offset) = parse_header(&bytes, "P5", path)?;
    let need = height * width;
    if bytes.len() < offset + need {
        return Err(err!(Data, "{}: raster truncated", path.display()));
    }
    Ok((height, width, bytes[offset..offset + need].to_vec()))
}

/// Interleaved RGB bytes -> [3, H, W] tensor scaled to [0, 1].
pub fn rgb_to_tensor<T: Scalar>(rgb: &[u8], height: usize, width: usize) -> Tensor<T> {
    let mut t = Tensor::zeros(&[3, height, width]);
    for p in 0..height * width {
        for ch in 0..3 {
            t.data_mut()[ch * height * width + p] = T::of_f64(rgb[p * 3 + ch] as f64 / 255.0);
        }
    }
    t
}

/// [3, H, W] tensor in [0, 1] -> interleaved RGB bytes.
pub fn tensor_to_rgb<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let (h, w) = (t.shape()[1], t.shape()[2]);
    let mut rgb = vec![0u8; h * w * 3];
    for p in 0..h * w {
        for ch in 0..3 {
            let v = t.data()[ch * h * w + p].as_f64().clamp(0.0, 1.0);
            rgb[p * 3 + ch] = (v * 255.0).round() as u8;
        }
    }
    rgb
}
