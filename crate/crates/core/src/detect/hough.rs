use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::filters::median3;
use super::matched::normalize_residual;
use super::{clamp_prob, empty_map, logistic, Capabilities, DetectError, SegmentInput, Segmenter};
use crate::geometry::fold_angle;
use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoughParams {
    /// Binarisation level in robust noise units, after 3x3 median denoising.
    /// Lower levels let stray-light residue in, whose blobs vote for the
    /// frame diagonals.
    pub threshold_sigma: f64,
    pub theta_bins: usize,
    pub rho_step: f64,
    /// Peaks with fewer votes count as "no line".
    pub min_votes: u32,
    /// Half-width of the capsule kept around the peak line, px.
    pub band: f64,
    /// Logistic softness of the capsule edge, px.
    pub softness: f64,
    /// Largest gap along the line that still joins two runs of pixels, px.
    pub max_gap: f64,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self {
            threshold_sigma: 5.0,
            theta_bins: 180,
            rho_step: 1.0,
            min_votes: 20,
            band: 2.0,
            softness: 0.5,
            max_gap: 5.0,
        }
    }
}

impl HoughParams {
    pub fn validate(&self) -> Result<(), DetectError> {
        let ok = self.threshold_sigma.is_finite()
            && (4..=3600).contains(&self.theta_bins)
            && self.rho_step > 0.0
            && self.band > 0.0
            && self.softness > 0.0
            && self.max_gap >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(DetectError::Config(format!("hough {self:?}")))
        }
    }
}

/// Accumulator peak: the line `u cos(theta) + v sin(theta) = rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoughLine {
    /// Angle of the line normal, `[0, pi)`.
    pub theta: f64,
    pub rho: f64,
    pub votes: u32,
    /// Direction of the line itself, `[0, pi)`.
    pub direction: f64,
}

struct Detection {
    line: HoughLine,
    on: Vec<(usize, usize)>,
}

fn detect(img: &GrayImage, params: &HoughParams) -> Result<Option<Detection>, DetectError> {
    params.validate()?;
    let z = normalize_residual(&median3(img));
    let (w, h) = img.dims();
    let on: Vec<(usize, usize)> = (0..h)
        .flat_map(|v| (0..w).map(move |u| (u, v)))
        .filter(|&(u, v)| z.get(u, v) > params.threshold_sigma)
        .collect();
    if on.is_empty() {
        return Ok(None);
    }
    let diag = ((w * w + h * h) as f64).sqrt();
    let n_rho = (2.0 * diag / params.rho_step).ceil() as usize + 1;
    let trig: Vec<(f64, f64)> = (0..params.theta_bins)
        .map(|i| {
            let t = PI * i as f64 / params.theta_bins as f64;
            (t.cos(), t.sin())
        })
        .collect();
    let mut acc = vec![0u32; params.theta_bins * n_rho];
    for &(u, v) in &on {
        let (x, y) = (u as f64, v as f64);
        for (i, &(c, s)) in trig.iter().enumerate() {
            let bin = ((x * c + y * s + diag) / params.rho_step).round() as usize;
            acc[i * n_rho + bin] += 1;
        }
    }
    let (best, &votes) =
        acc.iter()
            .enumerate()
            .fold((0, &0u32), |b, (i, n)| if *n > *b.1 { (i, n) } else { b });
    if votes < params.min_votes.max(1) {
        return Ok(None);
    }
    let theta = PI * (best / n_rho) as f64 / params.theta_bins as f64;
    let rho = (best % n_rho) as f64 * params.rho_step - diag;
    Ok(Some(Detection {
        line: HoughLine {
            theta,
            rho,
            votes,
            direction: fold_angle(theta + FRAC_PI_2),
        },
        on,
    }))
}

/// Runs the Hough detector and reports the accumulator peak, if any.
pub fn hough_detect(
    img: &GrayImage,
    params: &HoughParams,
) -> Result<Option<HoughLine>, DetectError> {
    Ok(detect(img, params)?.map(|d| d.line))
}

/// Soft capsule around the peak line, intersected with the above-threshold
/// pixels. The capsule spans the longest run of supporting pixels along the
/// line (gaps up to `max_gap`).
pub fn hough_segment(img: &GrayImage, params: &HoughParams) -> Result<GrayImage, DetectError> {
    let (w, h) = img.dims();
    let Some(det) = detect(img, params)? else {
        return Ok(empty_map(w, h));
    };
    let HoughLine { theta, rho, .. } = det.line;
    let (c, s) = (theta.cos(), theta.sin());
    let offset = |u: usize, v: usize| u as f64 * c + v as f64 * s - rho;
    let along = |u: usize, v: usize| -(u as f64) * s + v as f64 * c;
    let mut ts: Vec<f64> = det
        .on
        .iter()
        .filter(|&&(u, v)| offset(u, v).abs() <= params.band)
        .map(|&(u, v)| along(u, v))
        .collect();
    ts.sort_by(f64::total_cmp);
    // Longest run by pixel count.
    let (mut best, mut start) = ((0usize, 0usize), 0usize);
    for i in 1..=ts.len() {
        if i == ts.len() || ts[i] - ts[i - 1] > params.max_gap {
            if i - start > best.1 - best.0 {
                best = (start, i);
            }
            start = i;
        }
    }
    let (t0, t1) = (ts[best.0], ts[best.1 - 1]);
    let mut map = empty_map(w, h);
    for &(u, v) in &det.on {
        let t = along(u, v).clamp(t0, t1);
        let d_along = along(u, v) - t;
        let d = (offset(u, v).powi(2) + d_along.powi(2)).sqrt();
        map.set(
            u,
            v,
            clamp_prob(logistic((params.band - d) / params.softness)),
        );
    }
    Ok(map)
}

impl Segmenter for HoughParams {
    fn name(&self) -> String {
        "hough".into()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            prompted: false,
            trainable: false,
        }
    }

    fn segment(&self, input: &SegmentInput) -> Result<GrayImage, DetectError> {
        hough_segment(input.image, self)
    }
}
