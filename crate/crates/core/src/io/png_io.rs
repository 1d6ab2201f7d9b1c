use std::io::Cursor;

use super::{FormatError, MAX_PIXELS};
use crate::image::{BinaryMask, GrayImage};

fn png_err(e: impl std::fmt::Display) -> FormatError {
    FormatError::Png(e.to_string())
}

fn encode(
    width: usize,
    height: usize,
    color: png::ColorType,
    data: &[u8],
) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(data).map_err(png_err)?;
        writer.finish().map_err(png_err)?;
    }
    Ok(out)
}

pub fn encode_gray8_png(img: &GrayImage) -> Result<Vec<u8>, FormatError> {
    let data: Vec<u8> = img
        .data()
        .iter()
        .map(|&x| (x.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    encode(img.width(), img.height(), png::ColorType::Grayscale, &data)
}

/// Masks are stored as 8-bit grayscale with values {0, 255}.
pub fn encode_mask_png(mask: &BinaryMask) -> Result<Vec<u8>, FormatError> {
    let data: Vec<u8> = mask
        .bits()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    encode(
        mask.width(),
        mask.height(),
        png::ColorType::Grayscale,
        &data,
    )
}

/// `rgb` holds `width * height` triples.
pub fn encode_rgb8_png(
    width: usize,
    height: usize,
    rgb: &[[u8; 3]],
) -> Result<Vec<u8>, FormatError> {
    let data: Vec<u8> = rgb.iter().flatten().copied().collect();
    encode(width, height, png::ColorType::Rgb, &data)
}

/// Decodes any PNG to gray levels in `[0, 1]`; colour images use Rec. 601
/// luma and alpha is ignored.
pub fn decode_png_gray(bytes: &[u8]) -> Result<GrayImage, FormatError> {
    let mut dec = png::Decoder::new_with_limits(
        Cursor::new(bytes),
        png::Limits {
            bytes: 8 * MAX_PIXELS,
        },
    );
    dec.set_transformations(png::Transformations::EXPAND);
    let mut reader = dec.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| FormatError::Png("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let (w, h) = (info.width as usize, info.height as usize);
    if w == 0 || h == 0 || w.saturating_mul(h) > MAX_PIXELS {
        return Err(FormatError::Png(format!("unsupported dimensions {w}x{h}")));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(FormatError::Png("palette not expanded".into())),
    };
    let (bytes_per_sample, maxval) = match info.bit_depth {
        png::BitDepth::Sixteen => (2usize, 65535.0),
        png::BitDepth::Eight => (1, 255.0),
        other => return Err(FormatError::Png(format!("unexpected bit depth {other:?}"))),
    };
    let sample = |row: &[u8], i: usize| -> f64 {
        let x = if bytes_per_sample == 2 {
            u16::from_be_bytes([row[2 * i], row[2 * i + 1]]) as f64
        } else {
            row[i] as f64
        };
        x / maxval
    };
    let mut data = Vec::with_capacity(w * h);
    for v in 0..h {
        let row = &buf[v * info.line_size..(v + 1) * info.line_size];
        for u in 0..w {
            let base = u * channels;
            let g = if channels >= 3 {
                0.299 * sample(row, base)
                    + 0.587 * sample(row, base + 1)
                    + 0.114 * sample(row, base + 2)
            } else {
                sample(row, base)
            };
            data.push(g);
        }
    }
    Ok(GrayImage::from_vec(w, h, data))
}

/// Pixels brighter than mid-gray are positive.
pub fn decode_mask_png(bytes: &[u8]) -> Result<BinaryMask, FormatError> {
    let img = decode_png_gray(bytes)?;
    let (w, h) = img.dims();
    Ok(BinaryMask::from_vec(
        w,
        h,
        img.data().iter().map(|&x| x > 0.5).collect(),
    ))
}
