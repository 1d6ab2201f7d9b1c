use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::compose::{compose_and_label, Frame};
use super::{
    mix_seed, CosmicRay, Disk, Family, Glare, NoiseParams, Profile, SceneSpec, Star, StrayLight,
    StripeParams, SynthError,
};
use crate::io::{self, FormatError};

/// Generation settings. Every range is `[low, high]`, sampled uniformly
/// unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub width: usize,
    pub height: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub snr_range: [f64; 2],
    pub length_range: [f64; 2],
    pub width_sigma_range: [f64; 2],
    pub families: Vec<Family>,
    pub profiles: Vec<Profile>,
    pub background_range: [f64; 2],
    pub glare_amplitude_range: [f64; 2],
    pub disk_amplitude_range: [f64; 2],
    pub star_count_range: [usize; 2],
    /// Sampled log-uniformly.
    pub star_peak_range: [f64; 2],
    pub star_sigma_range: [f64; 2],
    pub cosmic_ray_count_range: [usize; 2],
    pub read_noise_range: [f64; 2],
    pub shot_noise_gain_range: [f64; 2],
    pub hot_pixel_rate: f64,
    /// Scene resamples allowed per frame when calibration fails.
    pub max_attempts: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            train: 1000,
            val: 100,
            test: 400,
            snr_range: [1.0, 10.0],
            length_range: [20.0, 100.0],
            width_sigma_range: [1.0, 2.0],
            families: Family::ALL.to_vec(),
            profiles: Profile::ALL.to_vec(),
            background_range: [0.02, 0.12],
            glare_amplitude_range: [0.05, 0.35],
            disk_amplitude_range: [0.1, 0.45],
            star_count_range: [10, 60],
            star_peak_range: [0.03, 0.6],
            star_sigma_range: [0.7, 1.6],
            cosmic_ray_count_range: [0, 3],
            read_noise_range: [0.01, 0.03],
            shot_noise_gain_range: [0.0005, 0.002],
            hot_pixel_rate: 1e-4,
            max_attempts: 20,
        }
    }
}

fn check_range(name: &str, r: [f64; 2], lo: f64, hi: f64) -> Result<(), SynthError> {
    if r[0].is_finite() && r[1].is_finite() && lo <= r[0] && r[0] <= r[1] && r[1] <= hi {
        Ok(())
    } else {
        Err(SynthError::Config(format!(
            "{name} {r:?} must satisfy {lo} <= low <= high <= {hi}"
        )))
    }
}

impl DatasetConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, FormatError> {
        toml::from_str(s).map_err(|e| FormatError::Toml(e.to_string()))
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.total() == 0 {
            return Err(SynthError::Config(
                "split counts must not all be zero".into(),
            ));
        }
        if self.width < 32 || self.height < 32 || self.width > 8192 || self.height > 8192 {
            return Err(SynthError::Config(format!(
                "frame {}x{} out of range",
                self.width, self.height
            )));
        }
        if self.families.is_empty() || self.profiles.is_empty() {
            return Err(SynthError::Config(
                "families and profiles must be non-empty".into(),
            ));
        }
        check_range("snr_range", self.snr_range, f64::MIN_POSITIVE, 1e6)?;
        check_range("length_range", self.length_range, f64::MIN_POSITIVE, 1e6)?;
        check_range("width_sigma_range", self.width_sigma_range, 0.3, 20.0)?;
        check_range("background_range", self.background_range, 0.0, 1.0)?;
        check_range(
            "glare_amplitude_range",
            self.glare_amplitude_range,
            0.0,
            1.0,
        )?;
        check_range("disk_amplitude_range", self.disk_amplitude_range, 0.0, 1.0)?;
        check_range("star_peak_range", self.star_peak_range, 1e-6, 1.0)?;
        check_range("star_sigma_range", self.star_sigma_range, 0.3, 10.0)?;
        check_range("read_noise_range", self.read_noise_range, 0.0, 1.0)?;
        check_range(
            "shot_noise_gain_range",
            self.shot_noise_gain_range,
            0.0,
            1.0,
        )?;
        if self.star_count_range[0] > self.star_count_range[1]
            || self.cosmic_ray_count_range[0] > self.cosmic_ray_count_range[1]
        {
            return Err(SynthError::Config("count ranges must be ordered".into()));
        }
        if !(0.0..=1.0).contains(&self.hot_pixel_rate) {
            return Err(SynthError::Config(
                "hot_pixel_rate must lie in [0, 1]".into(),
            ));
        }
        if self.max_attempts == 0 {
            return Err(SynthError::Config("max_attempts must be positive".into()));
        }
        let span = self.length_range[1] + 6.0 * self.width_sigma_range[1] + 2.0;
        if span >= self.width.min(self.height) as f64 {
            return Err(SynthError::Config(format!(
                "longest stripe ({span:.1} px with margins) does not fit a {}x{} frame",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn sample_glare(rng: &mut ChaCha8Rng, cfg: &DatasetConfig, scale: f64) -> Glare {
    let size = cfg.width.max(cfg.height) as f64;
    Glare {
        amplitude: scale * uniform(rng, cfg.glare_amplitude_range),
        direction: rng.random_range(0.0..2.0 * PI),
        falloff: rng.random_range(0.3..1.0) * size,
    }
}

fn sample_moon(rng: &mut ChaCha8Rng, cfg: &DatasetConfig, scale: f64) -> Disk {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let size = w.max(h);
    let radius = rng.random_range(0.08..0.25) * size;
    // Centre just inside or outside a random edge.
    let offset = rng.random_range(-0.3..1.0) * radius;
    let along = rng.random_range(0.0..1.0);
    let center = match rng.random_range(0..4) {
        0 => (along * w, -offset),
        1 => (along * w, h - 1.0 + offset),
        2 => (-offset, along * h),
        _ => (w - 1.0 + offset, along * h),
    };
    Disk {
        amplitude: scale * uniform(rng, cfg.disk_amplitude_range),
        center,
        radius,
        softness: rng.random_range(0.05..0.15) * size,
    }
}

fn sample_earth(rng: &mut ChaCha8Rng, cfg: &DatasetConfig) -> Disk {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let size = w.max(h);
    let radius = rng.random_range(1.5..3.0) * size;
    let phi = rng.random_range(0.0..2.0 * PI);
    // Limb crosses the frame somewhere between 40% inside and 10% outside
    // of the frame centre along `phi`.
    let depth = rng.random_range(-0.1..0.4) * size;
    let dist = radius - depth;
    Disk {
        amplitude: 0.8 * uniform(rng, cfg.disk_amplitude_range),
        center: (w / 2.0 - dist * phi.cos(), h / 2.0 - dist * phi.sin()),
        radius,
        softness: rng.random_range(0.02..0.08) * size,
    }
}

/// Draws a random scene of the given stray-light family.
pub fn sample_scene(cfg: &DatasetConfig, family: Family, seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (cfg.width as f64, cfg.height as f64);

    let angle = rng.random_range(0.0..PI);
    let length = uniform(&mut rng, cfg.length_range);
    let width_sigma = uniform(&mut rng, cfg.width_sigma_range);
    let ext_u = 0.5 * length * angle.cos().abs() + 3.0 * width_sigma + 1.0;
    let ext_v = 0.5 * length * angle.sin().abs() + 3.0 * width_sigma + 1.0;
    let center = (
        rng.random_range(ext_u..w - 1.0 - ext_u),
        rng.random_range(ext_v..h - 1.0 - ext_v),
    );
    let profile = cfg.profiles[rng.random_range(0..cfg.profiles.len())];
    let stripe = StripeParams {
        center,
        length,
        width_sigma,
        angle,
        peak: 0.5,
        profile,
    };

    let stray_light = match family {
        Family::Sun => StrayLight::Sun(sample_glare(&mut rng, cfg, 1.0)),
        Family::Moon => StrayLight::Moon(sample_moon(&mut rng, cfg, 1.0)),
        Family::Earth => StrayLight::Earth(sample_earth(&mut rng, cfg)),
        Family::Mixed => StrayLight::Mixed {
            glare: sample_glare(&mut rng, cfg, 0.6),
            disk: sample_moon(&mut rng, cfg, 0.6),
        },
    };

    let n_stars = rng.random_range(cfg.star_count_range[0]..=cfg.star_count_range[1]);
    let (lp0, lp1) = (cfg.star_peak_range[0].ln(), cfg.star_peak_range[1].ln());
    let stars = (0..n_stars)
        .map(|_| Star {
            position: (rng.random_range(0.0..w), rng.random_range(0.0..h)),
            peak: uniform(&mut rng, [lp0, lp1]).exp(),
            psf_sigma: uniform(&mut rng, cfg.star_sigma_range),
        })
        .collect();

    let n_rays = rng.random_range(cfg.cosmic_ray_count_range[0]..=cfg.cosmic_ray_count_range[1]);
    let cosmic_rays = (0..n_rays)
        .map(|_| {
            let start = (rng.random_range(0.0..w), rng.random_range(0.0..h));
            let len = rng.random_range(3.0..CosmicRay::MAX_LENGTH);
            let dir = rng.random_range(0.0..2.0 * PI);
            CosmicRay {
                start,
                end: (start.0 + len * dir.cos(), start.1 + len * dir.sin()),
                peak: rng.random_range(0.4..1.0),
            }
        })
        .collect();

    let noise = NoiseParams {
        read_noise_sigma: uniform(&mut rng, cfg.read_noise_range),
        shot_noise_gain: uniform(&mut rng, cfg.shot_noise_gain_range),
        hot_pixel_rate: cfg.hot_pixel_rate,
    };
    SceneSpec {
        width: cfg.width,
        height: cfg.height,
        stripe,
        background_level: uniform(&mut rng, cfg.background_range),
        stray_light,
        stars,
        cosmic_rays,
        noise,
        target_snr: uniform(&mut rng, cfg.snr_range),
        seed: rng.random(),
    }
}

/// One synthesized dataset frame and its provenance.
#[derive(Debug, Clone)]
pub struct GeneratedFrame {
    pub id: String,
    pub split: Split,
    pub family: Family,
    pub scene: SceneSpec,
    pub frame: Frame,
    /// Number of scene draws used (1 when the first draw calibrated).
    pub attempts: usize,
}

fn frame_seed(master: u64, global_index: usize) -> u64 {
    mix_seed(master ^ mix_seed(global_index as u64 + 1))
}

fn generate_one(
    cfg: &DatasetConfig,
    master: u64,
    split: Split,
    index: usize,
    global_index: usize,
) -> Result<GeneratedFrame, SynthError> {
    let family = cfg.families[index % cfg.families.len()];
    let base = frame_seed(master, global_index);
    let mut last = None;
    for attempt in 0..cfg.max_attempts {
        let scene = sample_scene(cfg, family, mix_seed(base.wrapping_add(attempt as u64)));
        match compose_and_label(&scene) {
            Ok(frame) => {
                return Ok(GeneratedFrame {
                    id: format!("{}_{index:04}", split.as_str()),
                    split,
                    family,
                    scene,
                    frame,
                    attempts: attempt + 1,
                })
            }
            Err(e @ (SynthError::Rescale { .. } | SynthError::Label(_) | SynthError::Snr(_))) => {
                log::debug!("frame {global_index} attempt {attempt}: {e}");
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(SynthError::Exhausted {
        index: global_index,
        attempts: cfg.max_attempts,
        last: Box::new(last.expect("at least one attempt")),
    })
}

/// Every `(split, index)` of the dataset, in generation order: train, val,
/// test by index.
pub fn frame_jobs(cfg: &DatasetConfig) -> Vec<(Split, usize)> {
    Split::ALL
        .into_iter()
        .flat_map(|split| {
            let n = match split {
                Split::Train => cfg.train,
                Split::Val => cfg.val,
                Split::Test => cfg.test,
            };
            (0..n).map(move |i| (split, i))
        })
        .collect()
}

/// Synthesizes one frame; equal to the matching element of
/// [`generate_frames`].
pub fn generate_frame(
    cfg: &DatasetConfig,
    seed: u64,
    split: Split,
    index: usize,
) -> Result<GeneratedFrame, SynthError> {
    cfg.validate()?;
    let offset = match split {
        Split::Train => 0,
        Split::Val => cfg.train,
        Split::Test => cfg.train + cfg.val,
    };
    generate_one(cfg, seed, split, index, offset + index)
}

/// Synthesizes every frame of every split in memory. Frames are generated
/// in parallel; the output order is that of [`frame_jobs`].
pub fn generate_frames(cfg: &DatasetConfig, seed: u64) -> Result<Vec<GeneratedFrame>, SynthError> {
    cfg.validate()?;
    frame_jobs(cfg)
        .into_par_iter()
        .enumerate()
        .map(|(global, (split, index))| generate_one(cfg, seed, split, index, global))
        .collect()
}

/// Per-image JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub point: [usize; 2],
    pub bbox: [usize; 4],
    /// Mask file name, relative to the sidecar's directory.
    pub mask: String,
    pub snr: f64,
    pub angle: f64,
    pub length: f64,
    pub stray_light: Family,
}

impl LabelRecord {
    pub fn from_json(bytes: &[u8]) -> Result<Self, FormatError> {
        let rec: LabelRecord = serde_json::from_slice(bytes)?;
        let [u0, v0, u1, v1] = rec.bbox;
        if u0 > u1 || v0 > v1 {
            return Err(FormatError::Label(format!(
                "label bbox {:?} is inverted",
                rec.bbox
            )));
        }
        if rec.mask.contains("..") || rec.mask.starts_with('/') {
            return Err(FormatError::Label(format!(
                "label mask path {:?} escapes its directory",
                rec.mask
            )));
        }
        Ok(rec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image: String,
    pub image_png: String,
    pub mask: String,
    pub label: String,
    pub stray_light: Family,
    pub snr: f64,
    pub angle: f64,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub config: DatasetConfig,
    pub train: Vec<ManifestEntry>,
    pub val: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn from_json(bytes: &[u8]) -> Result<Self, FormatError> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn split(&self, split: Split) -> &[ManifestEntry] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Writes frames under `out_dir/<split>/` and a `manifest.json` at the root.
///
/// Per frame: `<id>.pgm` (16-bit), `<id>_img.png` (8-bit), `<id>_mask.png`
/// and the `<id>.json` label sidecar.
pub fn write_dataset(
    out_dir: &Path,
    cfg: &DatasetConfig,
    seed: u64,
    frames: &[GeneratedFrame],
) -> Result<Manifest, SynthError> {
    let entries: Vec<(Split, ManifestEntry)> = frames
        .par_iter()
        .map(|g| -> Result<_, SynthError> {
            let dir = out_dir.join(g.split.as_str());
            let labels = &g.frame.labels;
            let mask_name = format!("{}_mask.png", g.id);
            io::write_pgm16(&dir.join(format!("{}.pgm", g.id)), &g.frame.image)?;
            io::write_bytes(
                &dir.join(format!("{}_img.png", g.id)),
                &io::encode_gray8_png(&g.frame.image)?,
            )?;
            io::write_mask(&dir.join(&mask_name), &labels.mask)?;
            let rec = LabelRecord {
                point: [labels.point.u, labels.point.v],
                bbox: [labels.bbox.0, labels.bbox.1, labels.bbox.2, labels.bbox.3],
                mask: mask_name.clone(),
                snr: g.frame.snr.value,
                angle: g.scene.stripe.angle,
                length: g.scene.stripe.length,
                stray_light: g.family,
            };
            io::write_json(&dir.join(format!("{}.json", g.id)), &rec)?;
            let rel = |name: String| format!("{}/{name}", g.split.as_str());
            Ok((
                g.split,
                ManifestEntry {
                    id: g.id.clone(),
                    image: rel(format!("{}.pgm", g.id)),
                    image_png: rel(format!("{}_img.png", g.id)),
                    mask: rel(mask_name),
                    label: rel(format!("{}.json", g.id)),
                    stray_light: g.family,
                    snr: rec.snr,
                    angle: rec.angle,
                    length: rec.length,
                },
            ))
        })
        .collect::<Result<_, _>>()?;
    let mut manifest = Manifest {
        version: 1,
        seed,
        config: cfg.clone(),
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (split, e) in entries {
        match split {
            Split::Train => manifest.train.push(e),
            Split::Val => manifest.val.push(e),
            Split::Test => manifest.test.push(e),
        }
    }
    io::write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
