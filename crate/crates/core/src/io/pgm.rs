use super::FormatError;
use crate::image::GrayImage;

/// Upper bound on decoded frame size.
pub const MAX_PIXELS: usize = 1 << 26;

/// Binary 16-bit PGM (`P5`, maxval 65535, big-endian samples).
pub fn encode_pgm16(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n65535\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + 2 * img.len());
    out.extend_from_slice(header.as_bytes());
    for &x in img.data() {
        let q = (x.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, FormatError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let digits = &self.bytes[start..self.pos];
        if digits.is_empty() || digits.len() > 9 {
            return Err(FormatError::Pgm(format!("bad {what}")));
        }
        // ASCII digits only, so both conversions succeed.
        Ok(std::str::from_utf8(digits).unwrap().parse().unwrap())
    }
}

/// Decodes a binary PGM (`P5`) with any maxval up to 65535.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, FormatError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(FormatError::Pgm("missing P5 magic".into()));
    }
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(FormatError::Pgm("zero dimension".into()));
    }
    if width.checked_mul(height).is_none_or(|n| n > MAX_PIXELS) {
        return Err(FormatError::Pgm(format!(
            "{width}x{height} exceeds size limit"
        )));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(FormatError::Pgm(format!("maxval {maxval} out of range")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(h.pos) {
        Some(b' ' | b'\t' | b'\n' | b'\r') => h.pos += 1,
        _ => return Err(FormatError::Pgm("header not terminated".into())),
    }
    let wide = maxval > 255;
    let sample = if wide { 2 } else { 1 };
    let need = width * height * sample;
    let raster = &bytes[h.pos..];
    if raster.len() < need {
        return Err(FormatError::Pgm(format!(
            "raster truncated: {} of {need} bytes",
            raster.len()
        )));
    }
    let scale = 1.0 / maxval as f64;
    let data = if wide {
        raster[..need]
            .chunks_exact(2)
            .map(|c| (u16::from_be_bytes([c[0], c[1]]) as f64 * scale).min(1.0))
            .collect()
    } else {
        raster[..need]
            .iter()
            .map(|&b| (b as f64 * scale).min(1.0))
            .collect()
    };
    Ok(GrayImage::from_vec(width, height, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_with_comments_and_8bit() {
        let mut bytes = b"P5 # frame\n3 # w\n2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 51, 255, 102, 153, 204]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.dims(), (3, 2));
        assert!((img.get(1, 0) - 0.2).abs() < 1e-12);
        assert_eq!(img.get(2, 0), 1.0);
    }

    #[test]
    fn rejects_malformed() {
        assert!(decode_pgm(b"P6\n1 1\n255\n\0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\0\0").is_err());
        assert!(decode_pgm(b"P5\n0 2\n255\n").is_err());
        assert!(decode_pgm(b"P5\n99999 99999\n255\n").is_err());
        assert!(decode_pgm(b"P5\n1 1\n70000\n\0\0").is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_is_within_quantisation(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
            let img = GrayImage::from_fn(w, h, |u, v| {
                let x = crate::synth::mix_seed(seed ^ (u * 31 + v) as u64);
                (x >> 11) as f64 / (1u64 << 53) as f64
            });
            let back = decode_pgm(&encode_pgm16(&img)).unwrap();
            prop_assert_eq!(back.dims(), img.dims());
            for (a, b) in img.data().iter().zip(back.data()) {
                prop_assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
            }
        }
    }
}
