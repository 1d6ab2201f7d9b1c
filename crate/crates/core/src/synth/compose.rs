use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::background::render_background_with_warnings;
use super::snr::{annulus, compute_snr, snr_from_values, Snr, ANNULUS_INNER, ANNULUS_OUTER};
use super::stripe::render_stripe;
use super::{LabelSet, SceneSpec, StripeParams, SynthError};
use crate::geometry::mass_center;
use crate::image::GrayImage;

/// Ground-truth masks keep pixels where the noiseless stripe exceeds this
/// fraction of its peak.
pub const MASK_THRESHOLD: f64 = 0.5;

const BISECTION_STEPS: usize = 80;

/// A rendered, labelled frame.
#[derive(Debug, Clone)]
pub struct Frame {
    pub image: GrayImage,
    pub labels: LabelSet,
    /// SNR measured on the final image.
    pub snr: Snr,
    /// Stripe peak after calibration.
    pub peak: f64,
    pub warnings: Vec<String>,
}

/// Per-pixel noise realisation drawn once from the scene seed, so that the
/// composed image is a deterministic function of the stripe scale.
struct NoiseDraws {
    read: Vec<f64>,
    shot: Vec<f64>,
    hot: Vec<f64>,
}

impl NoiseDraws {
    fn draw(spec: &SceneSpec) -> Self {
        let n = spec.width * spec.height;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut read = Vec::with_capacity(n);
        let mut shot = Vec::with_capacity(n);
        let mut hot = Vec::with_capacity(n);
        let rate = spec.noise.hot_pixel_rate.clamp(0.0, 1.0);
        for _ in 0..n {
            read.push(rng.sample::<f64, _>(StandardNormal));
            shot.push(rng.sample::<f64, _>(StandardNormal));
            let u: f64 = rng.random();
            let level: f64 = rng.random_range(0.3..1.0);
            hot.push(if u < rate { level } else { 0.0 });
        }
        Self { read, shot, hot }
    }
}

struct Composer<'a> {
    spec: &'a SceneSpec,
    background: GrayImage,
    unit_layer: GrayImage,
    noise: NoiseDraws,
}

impl Composer<'_> {
    fn pixel(&self, i: usize, scale: f64) -> f64 {
        let signal = self.background.data()[i] + scale * self.unit_layer.data()[i];
        let n = &self.spec.noise;
        let x = signal
            + n.read_noise_sigma * self.noise.read[i]
            + (n.shot_noise_gain * signal.max(0.0)).sqrt() * self.noise.shot[i]
            + self.noise.hot[i];
        x.clamp(0.0, 1.0)
    }

    fn render(&self, scale: f64) -> GrayImage {
        let (w, h) = (self.spec.width, self.spec.height);
        GrayImage::from_vec(w, h, (0..w * h).map(|i| self.pixel(i, scale)).collect())
    }
}

/// Renders a frame and its labels, rescaling the stripe so the measured SNR
/// hits `spec.target_snr`.
///
/// When the background annulus is perfectly flat (no noise, no structure)
/// the SNR is infinite for any stripe and the requested peak is kept.
pub fn compose_and_label(spec: &SceneSpec) -> Result<Frame, SynthError> {
    if !(spec.target_snr > 0.0 && spec.target_snr.is_finite()) {
        return Err(SynthError::Config(format!(
            "target_snr {} must be positive",
            spec.target_snr
        )));
    }
    spec.stripe.validate()?;
    let unit = StripeParams {
        peak: 1.0,
        ..spec.stripe
    };
    let unit_layer = render_stripe(&unit, spec.width, spec.height)?;
    let mask = unit_layer.threshold(MASK_THRESHOLD);
    if mask.is_empty() {
        return Err(SynthError::Label("stripe mask is empty".into()));
    }
    let ring = annulus(&mask, ANNULUS_INNER, ANNULUS_OUTER);
    if ring.is_empty() {
        return Err(SynthError::Snr("background annulus is empty".into()));
    }
    let (background, warnings) = render_background_with_warnings(spec);
    let composer = Composer {
        spec,
        background,
        unit_layer,
        noise: NoiseDraws::draw(spec),
    };
    let target_idx: Vec<usize> = mask
        .bits()
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| i)
        .collect();
    let snr_at = |scale: f64| {
        let bg: Vec<f64> = ring.iter().map(|&i| composer.pixel(i, scale)).collect();
        snr_from_values(target_idx.iter().map(|&i| composer.pixel(i, scale)), &bg)
    };

    let peak = if snr_at(spec.stripe.peak).infinite {
        spec.stripe.peak
    } else {
        // Largest scale keeping the noiseless stripe pixels unclipped.
        let mut max_scale: f64 = 1.0;
        for (i, &l) in composer.unit_layer.data().iter().enumerate() {
            if l > 0.0 {
                max_scale = max_scale.min((1.0 - composer.background.data()[i]) / l);
            }
        }
        if max_scale <= 0.0 {
            return Err(SynthError::Rescale {
                target: spec.target_snr,
                max_attainable: snr_at(0.0).value,
            });
        }
        let best = snr_at(max_scale).value;
        if best < spec.target_snr {
            return Err(SynthError::Rescale {
                target: spec.target_snr,
                max_attainable: best,
            });
        }
        let (mut lo, mut hi) = (0.0, max_scale);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            let s = snr_at(mid).value;
            if (s - spec.target_snr).abs() <= 1e-9 * spec.target_snr {
                lo = mid;
                hi = mid;
                break;
            }
            if s < spec.target_snr {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let k = 0.5 * (lo + hi);
        if k <= 0.0 {
            return Err(SynthError::Rescale {
                target: spec.target_snr,
                max_attainable: best,
            });
        }
        k
    };

    let image = composer.render(peak);
    let snr = compute_snr(&image, &mask)?;
    let point = mass_center(&mask).expect("mask checked non-empty");
    let bbox = mask.bbox().expect("mask checked non-empty");
    let labels = LabelSet { point, mask, bbox };
    labels.validate()?;
    Ok(Frame {
        image,
        labels,
        snr,
        peak,
        warnings,
    })
}
