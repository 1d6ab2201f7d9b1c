//! On-disk formats: 16-bit PGM frames, PNG images and masks, and the small
//! helpers the dataset and evolution writers share.

mod pgm;
mod png_io;

use std::path::Path;

pub use pgm::{decode_pgm, encode_pgm16, MAX_PIXELS};
pub use png_io::{
    decode_mask_png, decode_png_gray, encode_gray8_png, encode_mask_png, encode_rgb8_png,
};

use crate::image::{BinaryMask, GrayImage};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("PGM: {0}")]
    Pgm(String),
    #[error("PNG: {0}")]
    Png(String),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("TOML: {0}")]
    Toml(String),
    #[error("label: {0}")]
    Label(String),
    #[error("model file: {0}")]
    Model(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> FormatError {
    FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, FormatError> {
    std::fs::read(path).map_err(|e| io_err(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Loads a grayscale image from `.pgm` or `.png`, chosen by extension.
pub fn read_image(path: &Path) -> Result<GrayImage, FormatError> {
    let bytes = read_bytes(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => decode_pgm(&bytes),
        _ => decode_png_gray(&bytes),
    }
}

pub fn read_mask(path: &Path) -> Result<BinaryMask, FormatError> {
    decode_mask_png(&read_bytes(path)?)
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<(), FormatError> {
    write_bytes(path, &encode_mask_png(mask)?)
}

pub fn write_pgm16(path: &Path, img: &GrayImage) -> Result<(), FormatError> {
    write_bytes(path, &encode_pgm16(img))
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), FormatError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}
