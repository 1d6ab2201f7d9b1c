//! Pluggable segmenters and point-prompt region selection.
//!
//! Every segmenter maps a frame (plus a point prompt, which unprompted
//! segmenters ignore) to a per-pixel probability map strictly inside (0, 1).

mod external;
pub mod filters;
mod hough;
mod lite;
mod matched;
mod prompt;

use std::collections::HashMap;

pub use external::{external_segment, ExternalError, ExternalSegmenter, DEFAULT_TIMEOUT};
pub use hough::{hough_detect, hough_segment, HoughLine, HoughParams};
pub use lite::{
    compute_features, feature_names, lite_loss_and_gradient, lite_segment, lite_train, n_features,
    train_on_features, FeatureMap, LiteModel, TrainConfig, TrainOutcome,
};
pub use matched::{
    matched_filter_responses, matched_filter_segment, normalize_residual, FilterBank, MatchedFilter,
};
pub use prompt::{prompt_select, LocalPrompted, DEFAULT_PROMPT_RADIUS};

use crate::geometry::LossError;
use crate::image::{BinaryMask, GrayImage, Pixel, ShapeMismatch};
use crate::io::FormatError;

/// Probability maps are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-9;

pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

pub(crate) fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// A map that is "off" everywhere.
pub fn empty_map(width: usize, height: usize) -> GrayImage {
    GrayImage::filled(width, height, PROB_FLOOR)
}

#[derive(Debug, thiserror::Error)]
pub enum DetectError {
    #[error(transparent)]
    Shape(#[from] ShapeMismatch),
    #[error("kernel of {kernel} px does not fit a {width}x{height} image")]
    KernelTooLarge {
        kernel: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid segmenter configuration: {0}")]
    Config(String),
    #[error("model has not been trained")]
    Untrained,
    #[error("segmenter {0} is not trainable")]
    NotTrainable(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch} (loss trace {trace:?})")]
    Diverged { epoch: usize, trace: Vec<f64> },
    #[error("prompt {point} outside {width}x{height} frame")]
    PromptOutside {
        point: Pixel,
        width: usize,
        height: usize,
    },
    #[error("no reference mask for sample {0}")]
    UnknownSample(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    External(#[from] ExternalError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    /// Uses the point prompt itself; its output is already restricted to the
    /// prompted target.
    pub prompted: bool,
    pub trainable: bool,
}

/// One frame handed to a segmenter.
#[derive(Debug, Clone, Copy)]
pub struct SegmentInput<'a> {
    pub id: &'a str,
    pub image: &'a GrayImage,
    pub point: Pixel,
    /// Precomputed features for the frame, if the caller keeps a cache.
    pub features: Option<&'a FeatureMap>,
}

impl<'a> SegmentInput<'a> {
    pub fn new(id: &'a str, image: &'a GrayImage, point: Pixel) -> Self {
        Self {
            id,
            image,
            point,
            features: None,
        }
    }
}

/// A frame with its (pseudo-)label, used for fitting.
#[derive(Debug, Clone, Copy)]
pub struct FitSample<'a> {
    pub id: &'a str,
    pub image: &'a GrayImage,
    pub label: &'a BinaryMask,
    pub features: Option<&'a FeatureMap>,
}

pub trait Segmenter: Send + Sync {
    fn name(&self) -> String;

    fn capabilities(&self) -> Capabilities;

    fn segment(&self, input: &SegmentInput) -> Result<GrayImage, DetectError>;

    /// Refits from the current state. Only trainable segmenters implement it.
    fn fit(&mut self, samples: &[FitSample], cfg: &TrainConfig) -> Result<Vec<f64>, DetectError> {
        let _ = (samples, cfg);
        Err(DetectError::NotTrainable(self.name()))
    }

    /// The trainable model, if any, for persisting.
    fn model(&self) -> Option<&LiteModel> {
        None
    }
}

/// Test and evaluation aid: returns stored reference masks by sample id.
#[derive(Debug, Clone, Default)]
pub struct OracleSegmenter {
    masks: HashMap<String, BinaryMask>,
}

impl OracleSegmenter {
    pub fn new(masks: HashMap<String, BinaryMask>) -> Self {
        Self { masks }
    }
}

impl Segmenter for OracleSegmenter {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            prompted: true,
            trainable: false,
        }
    }

    fn segment(&self, input: &SegmentInput) -> Result<GrayImage, DetectError> {
        let mask = self
            .masks
            .get(input.id)
            .ok_or_else(|| DetectError::UnknownSample(input.id.to_string()))?;
        crate::image::check_shape(mask.dims(), input.image.dims())?;
        Ok(mask.to_image().map(clamp_prob))
    }
}

impl Segmenter for Box<dyn Segmenter> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }

    fn segment(&self, input: &SegmentInput) -> Result<GrayImage, DetectError> {
        (**self).segment(input)
    }

    fn fit(&mut self, samples: &[FitSample], cfg: &TrainConfig) -> Result<Vec<f64>, DetectError> {
        (**self).fit(samples, cfg)
    }

    fn model(&self) -> Option<&LiteModel> {
        (**self).model()
    }
}

pub(crate) fn check_point(img: &GrayImage, point: Pixel) -> Result<(), DetectError> {
    let (width, height) = img.dims();
    if point.u >= width || point.v >= height {
        return Err(DetectError::PromptOutside {
            point,
            width,
            height,
        });
    }
    Ok(())
}
