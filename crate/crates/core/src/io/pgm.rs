//! Binary greymap (P5, 8-bit) reading and writing.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::toysplat::RenderGrid;

/// Parses a P5 image, mapping `0..=maxval` linearly onto `[0, 1]`.
pub fn decode_pgm<T: Scalar>(bytes: &[u8]) -> std::result::Result<RenderGrid<T>, String> {
    let mut pos = 0usize;
    let mut next_token = |bytes: &[u8]| -> std::result::Result<String, String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = next_token(bytes)?;
    if magic != "P5" {
        return Err(format!("unsupported magic {magic:?}, expected P5"));
    }
    let num = |s: String| s.parse::<usize>().map_err(|e| format!("bad header field {s:?}: {e}"));
    let width = num(next_token(bytes)?)?;
    let height = num(next_token(bytes)?)?;
    let maxval = num(next_token(bytes)?)?;
    if maxval == 0 || maxval > 255 {
        return Err(format!("maxval {maxval} unsupported (8-bit only)"));
    }
    // exactly one whitespace byte separates the header from the raster
    let data_start = pos + 1;
    let need = width * height;
    if bytes.len() < data_start + need {
        return Err(format!(
            "raster too short: need {need} bytes, have {}",
            bytes.len().saturating_sub(data_start)
        ));
    }
    let pixels = bytes[data_start..data_start + need]
        .iter()
        .map(|&b| T::lit((b as f64 / maxval as f64).min(1.0)))
        .collect();
    Ok(RenderGrid {
        width,
        height,
        pixels,
    })
}

/// Encodes with `[0, 1] -> [0, 255]` linear quantization, clamping outside.
pub fn encode_pgm<T: Scalar>(img: &RenderGrid<T>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|&v| {
        let v = v.to_f64_lossy();
        if v.is_nan() {
            0
        } else {
            (v.clamp(0.0, 1.0) * 255.0).round() as u8
        }
    }));
    out
}

pub fn read_pgm<T: Scalar>(path: &Path) -> Result<RenderGrid<T>> {
    let bytes = fs::read(path).map_err(|e| Error::export(path, e))?;
    decode_pgm(&bytes).map_err(|message| Error::Image {
        path: path.to_path_buf(),
        message,
    })
}

pub fn write_pgm<T: Scalar>(path: &Path, img: &RenderGrid<T>) -> Result<()> {
    fs::write(path, encode_pgm(img)).map_err(|e| Error::export(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantized_round_trip() {
        let img = RenderGrid {
            width: 3,
            height: 2,
            pixels: vec![0.0f64, 1.0, 0.5, 2.0, -1.0, 0.25],
        };
        let back: RenderGrid<f64> = decode_pgm(&encode_pgm(&img)).unwrap();
        assert_eq!(back.width, 3);
        let expect = [0.0, 1.0, 128.0 / 255.0, 1.0, 0.0, 64.0 / 255.0];
        for (a, b) in back.pixels.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1\n# depth\n100\n".to_vec();
        bytes.extend([0u8, 100]);
        let img: RenderGrid<f32> = decode_pgm(&bytes).unwrap();
        assert_eq!(img.pixels, vec![0.0, 1.0]);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(decode_pgm::<f64>(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm::<f64>(b"P5\n4 4\n255\n\x00\x00").is_err());
        assert!(decode_pgm::<f64>(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }
}
