use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::filters::{dilate, gaussian_blur, mesh_background, robust_sigma, Padded};
use super::{clamp_prob, logistic, Capabilities, DetectError, SegmentInput, Segmenter};
use crate::image::GrayImage;

/// Block size of the median mesh used for background subtraction.
pub const BACKGROUND_BLOCK: usize = 32;

/// Oriented line templates, `orientations` angles evenly spaced in `[0, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterBank {
    pub orientations: usize,
    pub kernel_length: f64,
    pub kernel_sigma: f64,
}

impl Default for FilterBank {
    fn default() -> Self {
        Self {
            orientations: 8,
            kernel_length: 21.0,
            kernel_sigma: 1.5,
        }
    }
}

pub(crate) struct Kernel {
    half: usize,
    taps: Vec<(isize, isize, f64)>,
    mean: f64,
    norm: f64,
}

impl Kernel {
    fn line(angle: f64, length: f64, sigma: f64) -> Self {
        let half = (length / 2.0).ceil() as usize;
        let r = half as isize;
        let (c, s) = (angle.cos(), angle.sin());
        let mut taps = Vec::new();
        let (mut sum, mut sum2) = (0.0, 0.0);
        for dv in -r..=r {
            for du in -r..=r {
                let (x, y) = (du as f64, dv as f64);
                let along = x * c + y * s;
                let across = -x * s + y * c;
                if along.abs() > length / 2.0 {
                    continue;
                }
                let t = (-across * across / (2.0 * sigma * sigma)).exp();
                if t < 1e-3 {
                    continue;
                }
                taps.push((du, dv, t));
                sum += t;
                sum2 += t * t;
            }
        }
        let n = ((2 * half + 1) * (2 * half + 1)) as f64;
        let mean = sum / n;
        // Zero-mean, unit-energy kernel: k = (t - mean) / norm over the window.
        let norm = (sum2 - n * mean * mean).sqrt();
        Self {
            half,
            taps,
            mean,
            norm,
        }
    }

    /// Response map over a padded image, taps resolved to linear offsets.
    fn respond_all(&self, p: &Padded, w: usize, h: usize) -> GrayImage {
        let stride = p.stride as isize;
        let offsets: Vec<(isize, f64)> = self
            .taps
            .iter()
            .map(|&(du, dv, t)| (dv * stride + du, t))
            .collect();
        let mut out = Vec::with_capacity(w * h);
        for v in 0..h {
            for u in 0..w {
                let base = ((v + p.r) * p.stride + u + p.r) as isize;
                let mut acc = 0.0;
                for &(off, t) in &offsets {
                    acc += t * p.data[(base + off) as usize];
                }
                out.push((acc - self.mean * p.box_sum(u, v, self.half)) / self.norm);
            }
        }
        GrayImage::from_vec(w, h, out)
    }
}

impl FilterBank {
    pub fn validate(&self) -> Result<(), DetectError> {
        let ok = self.orientations >= 4
            && self.kernel_length.is_finite()
            && self.kernel_length >= 3.0
            && self.kernel_length <= 255.0
            && self.kernel_sigma.is_finite()
            && self.kernel_sigma > 0.0
            && self.kernel_sigma <= self.kernel_length;
        if ok {
            Ok(())
        } else {
            Err(DetectError::Config(format!("filter bank {self:?}")))
        }
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.orientations)
            .map(|k| PI * k as f64 / self.orientations as f64)
            .collect()
    }

    /// Side of the square kernel window in pixels.
    pub fn window(&self) -> usize {
        2 * (self.kernel_length / 2.0).ceil() as usize + 1
    }

    pub(crate) fn kernels(&self) -> Vec<Kernel> {
        self.angles()
            .into_iter()
            .map(|a| Kernel::line(a, self.kernel_length, self.kernel_sigma))
            .collect()
    }

    /// The zero-mean kernel for orientation `k` as a dense window, for
    /// inspection and tests.
    pub fn dense_kernel(&self, k: usize) -> GrayImage {
        let kern = Kernel::line(self.angles()[k], self.kernel_length, self.kernel_sigma);
        let side = 2 * kern.half + 1;
        let mut img = GrayImage::filled(side, side, -kern.mean / kern.norm);
        for &(du, dv, t) in &kern.taps {
            let (u, v) = (
                (du + kern.half as isize) as usize,
                (dv + kern.half as isize) as usize,
            );
            img.set(u, v, (t - kern.mean) / kern.norm);
        }
        img
    }
}

/// Background-subtracted image in units of the robust noise level.
pub fn normalize_residual(img: &GrayImage) -> GrayImage {
    let bg = mesh_background(img, BACKGROUND_BLOCK);
    let residual: Vec<f64> = img
        .data()
        .iter()
        .zip(bg.data())
        .map(|(x, b)| x - b)
        .collect();
    let sigma = robust_sigma(&residual, 1e-6);
    GrayImage::from_vec(
        img.width(),
        img.height(),
        residual.into_iter().map(|r| r / sigma).collect(),
    )
}

pub(crate) fn responses_of_normalized(z: &GrayImage, bank: &FilterBank) -> Vec<GrayImage> {
    let (w, h) = z.dims();
    let padded = Padded::new(z, bank.window() / 2);
    bank.kernels()
        .par_iter()
        .map(|k| k.respond_all(&padded, w, h))
        .collect()
}

pub(crate) fn check_fits(img: &GrayImage, bank: &FilterBank) -> Result<(), DetectError> {
    bank.validate()?;
    let (width, height) = img.dims();
    let kernel = bank.window();
    if kernel > width || kernel > height {
        return Err(DetectError::KernelTooLarge {
            kernel,
            width,
            height,
        });
    }
    Ok(())
}

/// Per-orientation matched-filter responses of the background-subtracted,
/// noise-normalised image. With unit-energy kernels, pure noise gives
/// responses of unit standard deviation.
pub fn matched_filter_responses(
    img: &GrayImage,
    bank: &FilterBank,
) -> Result<Vec<GrayImage>, DetectError> {
    check_fits(img, bank)?;
    Ok(responses_of_normalized(&normalize_residual(img), bank))
}

pub(crate) fn max_response(responses: &[GrayImage]) -> GrayImage {
    let (w, h) = responses[0].dims();
    let mut out = responses[0].clone();
    for r in &responses[1..] {
        for (o, &x) in out.data_mut().iter_mut().zip(r.data()) {
            *o = o.max(x);
        }
    }
    debug_assert_eq!(out.dims(), (w, h));
    out
}

/// Scaled distance of the smoothed residual `s` above half of its local
/// peak `m`.
pub(crate) fn half_max_margin(s: f64, m: f64) -> f64 {
    (s - 0.5 * m) / (0.05 * m.abs() + 0.25)
}

/// Matched-filter segmenter.
///
/// The probability is `logistic((max_k R_k - threshold) / scale)`. With
/// `refine`, it is further multiplied by a half-maximum test on the lightly
/// smoothed residual, which trims the filter's blur back to the stripe core.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchedFilter {
    pub bank: FilterBank,
    pub threshold: f64,
    pub scale: f64,
    pub refine: bool,
}

impl Default for MatchedFilter {
    fn default() -> Self {
        Self {
            bank: FilterBank::default(),
            threshold: 5.0,
            scale: 1.0,
            refine: true,
        }
    }
}

impl MatchedFilter {
    pub fn map(&self, img: &GrayImage) -> Result<GrayImage, DetectError> {
        check_fits(img, &self.bank)?;
        if !(self.scale > 0.0 && self.threshold.is_finite()) {
            return Err(DetectError::Config(format!("matched filter {self:?}")));
        }
        let z = normalize_residual(img);
        let best = max_response(&responses_of_normalized(&z, &self.bank));
        let mut p = best.map(|r| logistic((r - self.threshold) / self.scale));
        if self.refine {
            let zs = gaussian_blur(&z, 1.0);
            let peak = dilate(&zs, 3);
            for ((pp, &s), &m) in p.data_mut().iter_mut().zip(zs.data()).zip(peak.data()) {
                *pp *= logistic(half_max_margin(s, m));
            }
        }
        Ok(p.map(clamp_prob))
    }
}

impl Segmenter for MatchedFilter {
    fn name(&self) -> String {
        "matched-filter".into()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            prompted: false,
            trainable: false,
        }
    }

    fn segment(&self, input: &SegmentInput) -> Result<GrayImage, DetectError> {
        self.map(input.image)
    }
}

/// Plain matched-filter map with unit logistic scale.
pub fn matched_filter_segment(
    img: &GrayImage,
    bank: &FilterBank,
    threshold: f64,
) -> Result<GrayImage, DetectError> {
    MatchedFilter {
        bank: *bank,
        threshold,
        scale: 1.0,
        refine: false,
    }
    .map(img)
}
