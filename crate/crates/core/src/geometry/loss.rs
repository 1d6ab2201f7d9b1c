//! Segmentation losses over probability maps with analytic gradients.
//!
//! Every loss takes the post-sigmoid probability map and a binary target and
//! returns the scalar together with `d loss / d probability` per pixel.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::components::connected_components;
use super::diameter::{angle_difference, farthest_pair};
use crate::image::{check_shape, BinaryMask, GrayImage, ShapeMismatch};

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error(transparent)]
    Shape(#[from] ShapeMismatch),
    #[error("invalid loss configuration: {0}")]
    Config(String),
}

/// Scalar loss plus its per-pixel gradient with respect to the probabilities.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub loss: f64,
    pub grad: GrayImage,
}

impl LossValue {
    fn zero(w: usize, h: usize) -> Self {
        Self {
            loss: 0.0,
            grad: GrayImage::new(w, h),
        }
    }

    /// `a * self + b * other`, applied to both loss and gradient.
    pub fn combine(&self, a: f64, other: &LossValue, b: f64) -> LossValue {
        let grad = GrayImage::from_vec(
            self.grad.width(),
            self.grad.height(),
            self.grad
                .data()
                .iter()
                .zip(other.grad.data())
                .map(|(x, y)| a * x + b * y)
                .collect(),
        );
        LossValue {
            loss: a * self.loss + b * other.loss,
            grad,
        }
    }
}

/// Weights and knobs of the combined geometric + dice loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Weight of the geometric alignment term.
    pub alpha: f64,
    /// Weight of the weighted dice term.
    pub lambda: f64,
    /// Dice smoothing constant.
    pub epsilon: f64,
    /// Probability cutoff used to extract predicted regions.
    pub binarize_threshold: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            lambda: 1.0,
            epsilon: 1.0,
            binarize_threshold: 0.5,
        }
    }
}

impl LossConfig {
    pub fn dice_only() -> Self {
        Self {
            alpha: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let ok = self.alpha >= 0.0
            && self.lambda >= 0.0
            && self.alpha + self.lambda > 0.0
            && self.epsilon > 0.0
            && self.binarize_threshold > 0.0
            && self.binarize_threshold < 1.0;
        if ok {
            Ok(())
        } else {
            Err(LossError::Config(format!("{self:?}")))
        }
    }
}

/// Angle of the label's longest line, taken from its largest region.
/// `None` when the label is empty or a single pixel.
pub fn label_angle(label: &BinaryMask) -> Option<f64> {
    let regions = connected_components(label);
    let largest = regions.first()?;
    let seg = farthest_pair(largest);
    (!seg.degenerate).then_some(seg.angle)
}

/// Geometric alignment loss.
///
/// The prediction is binarised at `threshold` and split into 8-connected
/// regions. Each region contributes its folded angle difference to the
/// label's longest line, normalised by pi/2, times its mean probability; the
/// loss is the mean contribution over regions. Angles are constants of the
/// binarisation, so the gradient flows through the mean-probability factor.
pub fn geo_alignment_loss(
    pred: &GrayImage,
    label: &BinaryMask,
    threshold: f64,
) -> Result<LossValue, LossError> {
    check_shape(pred.dims(), label.dims())?;
    let (w, h) = pred.dims();
    let Some(target) = label_angle(label) else {
        return Ok(LossValue::zero(w, h));
    };
    let regions = connected_components(&pred.threshold(threshold));
    if regions.is_empty() {
        return Ok(LossValue::zero(w, h));
    }
    let m = regions.len() as f64;
    let mut out = LossValue::zero(w, h);
    for region in &regions {
        let seg = farthest_pair(region);
        let misalignment = angle_difference(seg.angle, target) / FRAC_PI_2;
        let n = region.area() as f64;
        let mean_p = region
            .pixels
            .iter()
            .map(|p| pred.get(p.u, p.v))
            .sum::<f64>()
            / n;
        out.loss += misalignment * mean_p / m;
        let g = misalignment / (n * m);
        for p in &region.pixels {
            out.grad.set(p.u, p.v, g);
        }
    }
    Ok(out)
}

/// `1 - (2 sum(w p g) + eps) / (sum(w p^2) + sum(w g^2) + eps)`.
/// `weights` defaults to all ones.
pub fn weighted_dice_loss(
    pred: &GrayImage,
    label: &BinaryMask,
    weights: Option<&GrayImage>,
    epsilon: f64,
) -> Result<LossValue, LossError> {
    check_shape(pred.dims(), label.dims())?;
    if let Some(wm) = weights {
        check_shape(pred.dims(), wm.dims())?;
    }
    let weight = |i: usize| weights.map_or(1.0, |wm| wm.data()[i]);
    let (mut num, mut den) = (epsilon, epsilon);
    for (i, (&p, &g)) in pred.data().iter().zip(label.bits()).enumerate() {
        let wi = weight(i);
        let g = if g { 1.0 } else { 0.0 };
        num += 2.0 * wi * p * g;
        den += wi * (p * p + g * g);
    }
    let grad: Vec<f64> = pred
        .data()
        .iter()
        .zip(label.bits())
        .enumerate()
        .map(|(i, (&p, &g))| {
            let wi = weight(i);
            let g = if g { 1.0 } else { 0.0 };
            -(2.0 * wi * g * den - num * 2.0 * wi * p) / (den * den)
        })
        .collect();
    Ok(LossValue {
        loss: 1.0 - num / den,
        grad: GrayImage::from_vec(pred.width(), pred.height(), grad),
    })
}

/// Soft IoU loss `1 - (I + eps) / (sum p + sum g - I + eps)` with
/// `I = sum(p g)`.
pub fn soft_iou_loss(
    pred: &GrayImage,
    label: &BinaryMask,
    epsilon: f64,
) -> Result<LossValue, LossError> {
    check_shape(pred.dims(), label.dims())?;
    let (mut inter, mut sp, mut sg) = (0.0, 0.0, 0.0);
    for (&p, &g) in pred.data().iter().zip(label.bits()) {
        let g = if g { 1.0 } else { 0.0 };
        inter += p * g;
        sp += p;
        sg += g;
    }
    let i = inter + epsilon;
    let u = sp + sg - inter + epsilon;
    let grad: Vec<f64> = label
        .bits()
        .iter()
        .map(|&g| {
            let g = if g { 1.0 } else { 0.0 };
            -(g * u - i * (1.0 - g)) / (u * u)
        })
        .collect();
    Ok(LossValue {
        loss: 1.0 - i / u,
        grad: GrayImage::from_vec(pred.width(), pred.height(), grad),
    })
}

const FOCAL_CLAMP: f64 = 1e-7;

/// Mean binary focal loss with focusing parameter `gamma`; `gamma = 0`
/// gives binary cross-entropy.
pub fn focal_loss(
    pred: &GrayImage,
    label: &BinaryMask,
    gamma: f64,
) -> Result<LossValue, LossError> {
    check_shape(pred.dims(), label.dims())?;
    if gamma.is_nan() || gamma < 0.0 {
        return Err(LossError::Config(format!("focal gamma {gamma}")));
    }
    let n = pred.len() as f64;
    // `x^(gamma-1)` scaled by gamma, with the gamma = 0 term vanishing.
    let dpow = |x: f64| {
        if gamma == 0.0 {
            0.0
        } else {
            gamma * x.powf(gamma - 1.0)
        }
    };
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &g) in pred.data().iter().zip(label.bits()) {
        let clamped = p.clamp(FOCAL_CLAMP, 1.0 - FOCAL_CLAMP);
        let inside = clamped == p;
        if g {
            let q = 1.0 - clamped;
            loss -= q.powf(gamma) * clamped.ln();
            let d = dpow(q) * clamped.ln() - q.powf(gamma) / clamped;
            grad.push(if inside { d / n } else { 0.0 });
        } else {
            let q = 1.0 - clamped;
            loss -= clamped.powf(gamma) * q.ln();
            let d = -dpow(clamped) * q.ln() + clamped.powf(gamma) / q;
            grad.push(if inside { d / n } else { 0.0 });
        }
    }
    Ok(LossValue {
        loss: loss / n,
        grad: GrayImage::from_vec(pred.width(), pred.height(), grad),
    })
}

/// `alpha * L_geo + lambda * L_dice`, gradients combined the same way.
pub fn geodice_loss(
    pred: &GrayImage,
    label: &BinaryMask,
    cfg: &LossConfig,
) -> Result<LossValue, LossError> {
    cfg.validate()?;
    let geo = if cfg.alpha > 0.0 {
        geo_alignment_loss(pred, label, cfg.binarize_threshold)?
    } else {
        check_shape(pred.dims(), label.dims())?;
        LossValue::zero(pred.width(), pred.height())
    };
    let dice = weighted_dice_loss(pred, label, None, cfg.epsilon)?;
    Ok(geo.combine(cfg.alpha, &dice, cfg.lambda))
}

/// Training objectives available to the pixel classifier, covering the
/// ablation combinations (paired terms use a 1:1 ratio).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Objective {
    GeoDice(LossConfig),
    Dice { epsilon: f64 },
    SoftIou { epsilon: f64 },
    Focal { gamma: f64 },
    DiceFocal { epsilon: f64, gamma: f64 },
    SoftIouFocal { epsilon: f64, gamma: f64 },
}

impl Default for Objective {
    fn default() -> Self {
        Objective::GeoDice(LossConfig::default())
    }
}

impl Objective {
    pub fn evaluate(&self, pred: &GrayImage, label: &BinaryMask) -> Result<LossValue, LossError> {
        match *self {
            Objective::GeoDice(cfg) => geodice_loss(pred, label, &cfg),
            Objective::Dice { epsilon } => weighted_dice_loss(pred, label, None, epsilon),
            Objective::SoftIou { epsilon } => soft_iou_loss(pred, label, epsilon),
            Objective::Focal { gamma } => focal_loss(pred, label, gamma),
            Objective::DiceFocal { epsilon, gamma } => {
                let a = weighted_dice_loss(pred, label, None, epsilon)?;
                Ok(a.combine(1.0, &focal_loss(pred, label, gamma)?, 1.0))
            }
            Objective::SoftIouFocal { epsilon, gamma } => {
                let a = soft_iou_loss(pred, label, epsilon)?;
                Ok(a.combine(1.0, &focal_loss(pred, label, gamma)?, 1.0))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Pixel;

    fn line_mask(
        w: usize,
        h: usize,
        horizontal: bool,
        at: usize,
        range: std::ops::Range<usize>,
    ) -> BinaryMask {
        let px: Vec<Pixel> = range
            .map(|t| {
                if horizontal {
                    Pixel::new(t, at)
                } else {
                    Pixel::new(at, t)
                }
            })
            .collect();
        BinaryMask::from_pixels(w, h, &px)
    }

    fn prob_from(mask: &BinaryMask, on: f64, off: f64) -> GrayImage {
        mask.to_image().map(|x| if x > 0.5 { on } else { off })
    }

    #[test]
    fn parallel_prediction_has_zero_alignment_loss() {
        let label = line_mask(32, 32, true, 10, 2..30);
        let pred = prob_from(&line_mask(32, 32, true, 20, 5..25), 0.9, 0.1);
        let l = geo_alignment_loss(&pred, &label, 0.5).unwrap();
        assert_eq!(l.loss, 0.0);
    }

    #[test]
    fn perpendicular_prediction_costs_one() {
        let label = line_mask(32, 32, true, 10, 2..30);
        let pred = prob_from(&line_mask(32, 32, false, 20, 5..25), 1.0, 0.0);
        let l = geo_alignment_loss(&pred, &label, 0.5).unwrap();
        assert!((l.loss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alignment_loss_is_zero_without_regions() {
        let label = line_mask(16, 16, true, 3, 0..10);
        let pred = GrayImage::filled(16, 16, 0.2);
        assert_eq!(geo_alignment_loss(&pred, &label, 0.5).unwrap().loss, 0.0);
    }

    #[test]
    fn dice_limits() {
        let label = line_mask(16, 16, true, 3, 0..10);
        let same = label.to_image();
        let l = weighted_dice_loss(&same, &label, None, 1.0).unwrap();
        assert!(l.loss.abs() < 1e-12);

        let zero = GrayImage::new(16, 16);
        for eps in [1.0, 1e-3, 1e-9] {
            let l = weighted_dice_loss(&zero, &label, None, eps).unwrap();
            assert!((l.loss - (1.0 - eps / (10.0 + eps))).abs() < 1e-12);
        }
    }

    #[test]
    fn focal_gamma_zero_is_bce() {
        let label = line_mask(8, 8, true, 3, 0..6);
        let pred = GrayImage::from_fn(8, 8, |u, v| 0.05 + 0.9 * ((u * 8 + v) as f64 / 64.0));
        let f = focal_loss(&pred, &label, 0.0).unwrap();
        let bce: f64 = pred
            .data()
            .iter()
            .zip(label.bits())
            .map(|(&p, &g)| if g { -p.ln() } else { -(1.0 - p).ln() })
            .sum::<f64>()
            / 64.0;
        assert!((f.loss - bce).abs() < 1e-12);
    }

    #[test]
    fn soft_iou_perfect_is_zero() {
        let label = line_mask(16, 16, false, 7, 1..12);
        let l = soft_iou_loss(&label.to_image(), &label, 1.0).unwrap();
        assert!(l.loss.abs() < 1e-12);
    }

    #[test]
    fn geodice_without_alpha_is_scaled_dice() {
        let label = line_mask(16, 16, true, 3, 0..10);
        let pred = GrayImage::from_fn(16, 16, |u, v| 0.1 + 0.8 * ((u + v) % 5) as f64 / 5.0);
        let cfg = LossConfig {
            alpha: 0.0,
            lambda: 2.5,
            ..LossConfig::default()
        };
        let gd = geodice_loss(&pred, &label, &cfg).unwrap();
        let d = weighted_dice_loss(&pred, &label, None, cfg.epsilon).unwrap();
        assert_eq!(gd.loss, 2.5 * d.loss);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let label = BinaryMask::new(4, 4);
        let pred = GrayImage::new(5, 4);
        assert!(matches!(
            weighted_dice_loss(&pred, &label, None, 1.0),
            Err(LossError::Shape(_))
        ));
        assert!(matches!(
            geo_alignment_loss(&pred, &label, 0.5),
            Err(LossError::Shape(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        assert!(LossConfig {
            alpha: 0.0,
            lambda: 0.0,
            ..LossConfig::default()
        }
        .validate()
        .is_err());
        assert!(LossConfig {
            epsilon: 0.0,
            ..LossConfig::default()
        }
        .validate()
        .is_err());
        assert!(LossConfig {
            binarize_threshold: 1.0,
            ..LossConfig::default()
        }
        .validate()
        .is_err());
    }
}
