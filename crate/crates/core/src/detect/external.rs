//! Adapter for segmenters living in another process.
//!
//! Protocol: `<cmd> --image <pgm-path> --point <u>,<v> --out <mask-png-path>`,
//! exit status 0 on success, mask written as a PNG of the input's size.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::{clamp_prob, Capabilities, DetectError, SegmentInput, Segmenter};
use crate::image::{BinaryMask, GrayImage, Pixel};
use crate::io;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, thiserror::Error)]
pub enum ExternalError {
    #[error("empty external command")]
    EmptyCommand,
    #[error("cannot start {program}: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("external segmenter timed out after {0:?}")]
    Timeout(Duration),
    #[error("external segmenter exited with {status}: {stderr}")]
    Exit { status: String, stderr: String },
    #[error("malformed mask: {0}")]
    MalformedMask(String),
    #[error("external segmenter I/O: {0}")]
    Io(String),
}

/// Runs one external segmentation. `cmd_template` is split on whitespace
/// into program and leading arguments (no shell involved); the mask is
/// written next to the image as `<stem>.mask.png`.
pub fn external_segment(
    cmd_template: &str,
    img_path: &Path,
    point: Pixel,
    expected: (usize, usize),
    timeout: Duration,
) -> Result<BinaryMask, ExternalError> {
    let mut parts = cmd_template.split_whitespace();
    let program = parts.next().ok_or(ExternalError::EmptyCommand)?;
    let out = img_path.with_extension("mask.png");
    let err_log = img_path.with_extension("stderr.txt");
    let _ = std::fs::remove_file(&out);
    let stderr = std::fs::File::create(&err_log).map_err(|e| ExternalError::Io(e.to_string()))?;
    let mut child = Command::new(program)
        .args(parts)
        .arg("--image")
        .arg(img_path)
        .arg("--point")
        .arg(format!("{},{}", point.u, point.v))
        .arg("--out")
        .arg(&out)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(stderr)
        .spawn()
        .map_err(|source| ExternalError::Spawn {
            program: program.to_string(),
            source,
        })?;
    let status = match child
        .wait_timeout(timeout)
        .map_err(|e| ExternalError::Io(e.to_string()))?
    {
        Some(s) => s,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(ExternalError::Timeout(timeout));
        }
    };
    if !status.success() {
        let text = std::fs::read_to_string(&err_log).unwrap_or_default();
        return Err(ExternalError::Exit {
            status: status.to_string(),
            stderr: text.trim().chars().take(500).collect(),
        });
    }
    let bytes = std::fs::read(&out)
        .map_err(|e| ExternalError::MalformedMask(format!("{}: {e}", out.display())))?;
    let mask =
        io::decode_mask_png(&bytes).map_err(|e| ExternalError::MalformedMask(e.to_string()))?;
    if mask.dims() != expected {
        return Err(ExternalError::MalformedMask(format!(
            "mask is {}x{}, image is {}x{}",
            mask.width(),
            mask.height(),
            expected.0,
            expected.1
        )));
    }
    Ok(mask)
}

/// [`Segmenter`] over [`external_segment`]; each call works in a fresh
/// scratch directory that is removed afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSegmenter {
    pub command: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default)]
    pub work_dir: Option<PathBuf>,
}

fn default_timeout_secs() -> f64 {
    DEFAULT_TIMEOUT.as_secs_f64()
}

static CALLS: AtomicU64 = AtomicU64::new(0);

impl ExternalSegmenter {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            timeout_secs: default_timeout_secs(),
            work_dir: None,
        }
    }

    fn scratch(&self) -> PathBuf {
        let base = self.work_dir.clone().unwrap_or_else(std::env::temp_dir);
        let n = CALLS.fetch_add(1, Ordering::Relaxed);
        base.join(format!("stripe-ext-{}-{n}", std::process::id()))
    }
}

impl Segmenter for ExternalSegmenter {
    fn name(&self) -> String {
        format!("external({})", self.command)
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            prompted: true,
            trainable: false,
        }
    }

    fn segment(&self, input: &SegmentInput) -> Result<GrayImage, DetectError> {
        super::check_point(input.image, input.point)?;
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(DetectError::Config(format!(
                "timeout {}",
                self.timeout_secs
            )));
        }
        let dir = self.scratch();
        let img_path = dir.join("frame.pgm");
        io::write_pgm16(&img_path, input.image)?;
        let result = external_segment(
            &self.command,
            &img_path,
            input.point,
            input.image.dims(),
            Duration::from_secs_f64(self.timeout_secs),
        );
        let _ = std::fs::remove_dir_all(&dir);
        Ok(result?.to_image().map(clamp_prob))
    }
}
