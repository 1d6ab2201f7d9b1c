//! Seeded synthesis of stripe-target frames under stray light.
//!
//! A frame is fully described by a [`SceneSpec`]: one stripe target, a
//! stray-light field, stars, cosmic-ray hits, and a sensor noise model.
//! Rendering is a pure function of the spec, so equal specs (seed included)
//! give bit-identical images and labels.

mod background;
mod compose;
mod dataset;
mod snr;
mod stripe;

use serde::{Deserialize, Serialize};

use crate::image::{BinaryMask, Pixel};

pub use background::{render_background, render_background_with_warnings, StrayLightField};
pub use compose::{compose_and_label, Frame, MASK_THRESHOLD};
pub use dataset::{
    frame_jobs, generate_frame, generate_frames, sample_scene, write_dataset, DatasetConfig,
    GeneratedFrame, LabelRecord, Manifest, ManifestEntry, Split,
};
pub use snr::{annulus, compute_snr, Snr, ANNULUS_INNER, ANNULUS_OUTER};
pub use stripe::{render_capsule, render_stripe};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("stripe does not fit in a {width}x{height} frame: extent [{u0:.2}, {u1:.2}] x [{v0:.2}, {v1:.2}]")]
    OutOfFrame {
        width: usize,
        height: usize,
        u0: f64,
        v0: f64,
        u1: f64,
        v1: f64,
    },
    #[error("invalid stripe parameters: {0}")]
    InvalidStripe(String),
    #[error(
        "target SNR {target:.3} unattainable without clipping; max attainable {max_attainable:.3}"
    )]
    Rescale { target: f64, max_attainable: f64 },
    #[error("SNR measurement: {0}")]
    Snr(String),
    #[error("generated label violates its invariants: {0}")]
    Label(String),
    #[error("invalid dataset configuration: {0}")]
    Config(String),
    #[error("frame {index} failed after {attempts} attempts: {last}")]
    Exhausted {
        index: usize,
        attempts: usize,
        last: Box<SynthError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Format(#[from] crate::io::FormatError),
}

/// Brightness variation along the stripe, as a function of the normalised
/// along-segment coordinate `t` in `[0, 1]`. All profiles peak at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Uniform,
    LinearRamp,
    GaussianBump,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::Uniform, Profile::LinearRamp, Profile::GaussianBump];

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Profile::Uniform => 1.0,
            Profile::LinearRamp => 0.75 + 0.25 * t,
            Profile::GaussianBump => 0.75 + 0.25 * (-(t - 0.5).powi(2) / (2.0 * 0.2 * 0.2)).exp(),
        }
    }
}

/// Geometry and brightness of the single stripe target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripeParams {
    /// Sub-pixel centre `(u, v)`; pixel `(i, j)` is sampled at its integer
    /// coordinates.
    pub center: (f64, f64),
    pub length: f64,
    /// Standard deviation of the Gaussian cross-section.
    pub width_sigma: f64,
    /// Direction in `[0, pi)`, measured from the `+u` axis towards `+v`.
    pub angle: f64,
    pub peak: f64,
    pub profile: Profile,
}

impl StripeParams {
    pub fn endpoints(&self) -> ((f64, f64), (f64, f64)) {
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let h = self.length / 2.0;
        (
            (self.center.0 - h * c, self.center.1 - h * s),
            (self.center.0 + h * c, self.center.1 + h * s),
        )
    }

    /// Axis-aligned extent of the rendered capsule (segment grown by 3 sigma).
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        let (a, b) = self.endpoints();
        let r = 3.0 * self.width_sigma;
        (
            a.0.min(b.0) - r,
            a.1.min(b.1) - r,
            a.0.max(b.0) + r,
            a.1.max(b.1) + r,
        )
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let ok = self.length > 0.0
            && self.width_sigma > 0.0
            && (0.0..std::f64::consts::PI).contains(&self.angle)
            && self.peak > 0.0
            && self.peak <= 1.0
            && self.center.0.is_finite()
            && self.center.1.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SynthError::InvalidStripe(format!("{self:?}")))
        }
    }
}

/// Stray-light family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Sun,
    Moon,
    Earth,
    Mixed,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Sun, Family::Moon, Family::Earth, Family::Mixed];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Sun => "sun",
            Family::Moon => "moon",
            Family::Earth => "earth",
            Family::Mixed => "mixed",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sun" => Ok(Family::Sun),
            "moon" => Ok(Family::Moon),
            "earth" => Ok(Family::Earth),
            "mixed" => Ok(Family::Mixed),
            other => Err(format!("unknown stray-light family {other:?}")),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Smooth directional glare rising towards one frame edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Glare {
    pub amplitude: f64,
    /// Direction the light comes from, radians.
    pub direction: f64,
    /// e-folding distance in pixels.
    pub falloff: f64,
}

/// Bright disk with an exponential halo (moon) or a soft limb (earth).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub amplitude: f64,
    pub center: (f64, f64),
    pub radius: f64,
    pub softness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum StrayLight {
    Sun(Glare),
    Moon(Disk),
    Earth(Disk),
    Mixed { glare: Glare, disk: Disk },
}

impl StrayLight {
    pub fn family(&self) -> Family {
        match self {
            StrayLight::Sun(_) => Family::Sun,
            StrayLight::Moon(_) => Family::Moon,
            StrayLight::Earth(_) => Family::Earth,
            StrayLight::Mixed { .. } => Family::Mixed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Star {
    pub position: (f64, f64),
    pub peak: f64,
    pub psf_sigma: f64,
}

/// Short, sharp segment left by a particle hit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosmicRay {
    pub start: (f64, f64),
    pub end: (f64, f64),
    pub peak: f64,
}

impl CosmicRay {
    pub const MAX_LENGTH: f64 = 15.0;
    pub const SIGMA: f64 = 0.5;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub read_noise_sigma: f64,
    /// Shot-noise variance per unit signal.
    pub shot_noise_gain: f64,
    /// Fraction of pixels hit by a hot-pixel offset.
    pub hot_pixel_rate: f64,
}

impl NoiseParams {
    pub const NONE: NoiseParams = NoiseParams {
        read_noise_sigma: 0.0,
        shot_noise_gain: 0.0,
        hot_pixel_rate: 0.0,
    };
}

/// Complete parametric description of one synthetic frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub stripe: StripeParams,
    /// Flat sky level under the stray light.
    pub background_level: f64,
    pub stray_light: StrayLight,
    pub stars: Vec<Star>,
    pub cosmic_rays: Vec<CosmicRay>,
    pub noise: NoiseParams,
    pub target_snr: f64,
    pub seed: u64,
}

/// The three label formats attached to every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub point: Pixel,
    pub mask: BinaryMask,
    /// `(u_min, v_min, u_max, v_max)`, inclusive.
    pub bbox: (usize, usize, usize, usize),
}

impl LabelSet {
    /// Checks point-in-mask, bbox tightness and single-region masks.
    pub fn validate(&self) -> Result<(), SynthError> {
        if !self.mask.get(self.point.u, self.point.v) {
            return Err(SynthError::Label(format!(
                "point {} outside mask",
                self.point
            )));
        }
        if self.mask.bbox() != Some(self.bbox) {
            return Err(SynthError::Label(format!(
                "bbox {:?} is not tight",
                self.bbox
            )));
        }
        let regions = crate::geometry::connected_components(&self.mask).len();
        if regions != 1 {
            return Err(SynthError::Label(format!("mask has {regions} regions")));
        }
        Ok(())
    }
}

/// SplitMix64 step, used to derive independent per-frame seeds.
pub fn mix_seed(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
