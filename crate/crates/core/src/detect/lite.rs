//! Linear pixel classifier over a fixed filter-response feature stack.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::filters::{dilate, gaussian_blur, local_mean_std, white_tophat};
use super::matched::{
    check_fits, half_max_margin, max_response, normalize_residual, responses_of_normalized,
};
use super::{
    clamp_prob, logistic, Capabilities, DetectError, FilterBank, FitSample, MatchedFilter,
    SegmentInput, Segmenter,
};
use crate::geometry::Objective;
use crate::image::{check_shape, BinaryMask, GrayImage};
use crate::io::FormatError;

/// Features beyond the per-orientation responses: max and min response,
/// residual, smoothed residual, 7x7 local mean and std, top-hat, the
/// half-maximum contrast of the smoothed residual, and the log-odds of the
/// default refined matched filter.
const EXTRA_FEATURES: [&str; 9] = [
    "resp_max",
    "resp_min",
    "residual",
    "residual_smooth",
    "local_mean",
    "local_std",
    "tophat",
    "half_max",
    "mf_logit",
];

pub fn n_features(bank: &FilterBank) -> usize {
    bank.orientations + EXTRA_FEATURES.len()
}

pub fn feature_names(bank: &FilterBank) -> Vec<String> {
    (0..bank.orientations)
        .map(|k| format!("resp_{k}"))
        .chain(EXTRA_FEATURES.iter().map(|s| s.to_string()))
        .collect()
}

/// Per-pixel feature vectors, pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    n: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    /// `data` holds `n` values per pixel in scanline order.
    pub fn from_raw(width: usize, height: usize, n: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height * n, "feature buffer size");
        Self {
            width,
            height,
            n,
            data,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn n_features(&self) -> usize {
        self.n
    }

    pub fn pixel(&self, i: usize) -> &[f32] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn bytes(&self) -> usize {
        self.data.len() * std::mem::size_of::<f32>()
    }
}

fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}

/// Log-odds of `logistic(a) * logistic(b)`, clamped to +-30.
fn product_logit(a: f64, b: f64) -> f64 {
    let lp = log_sigmoid(a) + log_sigmoid(b);
    (lp - (-lp.exp_m1()).ln()).clamp(-30.0, 30.0)
}

/// Computes the feature stack. Every feature is `asinh`-compressed so bright
/// stars and faint stripes share a usable dynamic range.
pub fn compute_features(img: &GrayImage, bank: &FilterBank) -> Result<FeatureMap, DetectError> {
    check_fits(img, bank)?;
    let z = normalize_residual(img);
    let responses = responses_of_normalized(&z, bank);
    let rmax = max_response(&responses);
    let rmin = responses[1..]
        .iter()
        .fold(responses[0].clone(), |mut acc, r| {
            for (a, &x) in acc.data_mut().iter_mut().zip(r.data()) {
                *a = a.min(x);
            }
            acc
        });
    let zs = gaussian_blur(&z, 1.0);
    let (lmean, lstd) = local_mean_std(&z, 3);
    let tophat = white_tophat(&zs, 3);
    let peak = dilate(&zs, 3);
    let half = GrayImage::from_vec(
        z.width(),
        z.height(),
        zs.data()
            .iter()
            .zip(peak.data())
            .map(|(s, m)| s - 0.5 * m)
            .collect(),
    );
    let threshold = MatchedFilter::default().threshold;
    let mf = GrayImage::from_vec(
        z.width(),
        z.height(),
        rmax.data()
            .iter()
            .zip(zs.data())
            .zip(peak.data())
            .map(|((&r, &s), &m)| product_logit(r - threshold, half_max_margin(s, m)))
            .collect(),
    );
    let mut planes: Vec<&GrayImage> = responses.iter().collect();
    planes.extend([&rmax, &rmin, &z, &zs, &lmean, &lstd, &tophat, &half, &mf]);
    let n = planes.len();
    let mut data = vec![0f32; z.len() * n];
    for (j, plane) in planes.iter().enumerate() {
        for (i, &x) in plane.data().iter().enumerate() {
            data[i * n + j] = x.asinh() as f32;
        }
    }
    Ok(FeatureMap::from_raw(z.width(), z.height(), n, data))
}

/// Logistic regression weights over the feature stack.
#[derive(Debug, Clone, PartialEq)]
pub struct LiteModel {
    pub bank: FilterBank,
    weights: Vec<f64>,
    bias: f64,
    trained: bool,
}

const MODEL_HEADER: &str = "stripe-lite-model 1";

impl LiteModel {
    /// Untrained model with zero weights.
    pub fn new(bank: FilterBank) -> Self {
        Self {
            weights: vec![0.0; n_features(&bank)],
            bank,
            bias: 0.0,
            trained: false,
        }
    }

    pub fn from_parts(
        bank: FilterBank,
        weights: Vec<f64>,
        bias: f64,
        trained: bool,
    ) -> Result<Self, DetectError> {
        bank.validate()?;
        if weights.len() != n_features(&bank) {
            return Err(DetectError::Config(format!(
                "{} weights for {} features",
                weights.len(),
                n_features(&bank)
            )));
        }
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(DetectError::Config("non-finite weight".into()));
        }
        Ok(Self {
            bank,
            weights,
            bias,
            trained,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    fn logit(&self, f: &[f32]) -> f64 {
        self.bias
            + self
                .weights
                .iter()
                .zip(f)
                .map(|(w, &x)| w * x as f64)
                .sum::<f64>()
    }

    /// Unclamped probabilities; no trained-flag check.
    pub fn predict_features(&self, features: &FeatureMap) -> Result<GrayImage, DetectError> {
        if features.n != self.weights.len() {
            return Err(DetectError::Config(format!(
                "feature map has {} channels, model expects {}",
                features.n,
                self.weights.len()
            )));
        }
        let (w, h) = features.dims();
        let data = (0..w * h)
            .map(|i| logistic(self.logit(features.pixel(i))))
            .collect();
        Ok(GrayImage::from_vec(w, h, data))
    }

    /// Plain-text serialisation: a version header, the filter bank, then one
    /// weight per line. Floats use shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{MODEL_HEADER}\norientations {}\nkernel_length {:?}\nkernel_sigma {:?}\ntrained {}\nbias {:?}\nweights {}\n",
            self.bank.orientations,
            self.bank.kernel_length,
            self.bank.kernel_sigma,
            u8::from(self.trained),
            self.bias,
            self.weights.len()
        );
        for w in &self.weights {
            s.push_str(&format!("{w:?}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, FormatError> {
        let bad = |m: String| FormatError::Model(m);
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        if lines.next() != Some(MODEL_HEADER) {
            return Err(bad(format!("missing header '{MODEL_HEADER}'")));
        }
        let mut field = |key: &str| -> Result<String, FormatError> {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("missing '{key}'")))?;
            match line.split_once(char::is_whitespace) {
                Some((k, v)) if k == key => Ok(v.trim().to_string()),
                _ => Err(bad(format!("expected '{key} <value>', got '{line}'"))),
            }
        };
        let num = |s: String, key: &str| -> Result<f64, FormatError> {
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(format!("{key}: '{s}' is not a finite number")))
        };
        let orientations: usize = field("orientations")?
            .parse()
            .ok()
            .filter(|&k| (4..=360).contains(&k))
            .ok_or_else(|| bad("orientations must be in 4..=360".into()))?;
        let kernel_length = num(field("kernel_length")?, "kernel_length")?;
        let kernel_sigma = num(field("kernel_sigma")?, "kernel_sigma")?;
        let trained = match field("trained")?.as_str() {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("trained: '{other}'"))),
        };
        let bias = num(field("bias")?, "bias")?;
        let count: usize = field("weights")?
            .parse()
            .map_err(|_| bad("weights: bad count".into()))?;
        let bank = FilterBank {
            orientations,
            kernel_length,
            kernel_sigma,
        };
        if count != n_features(&bank) {
            return Err(bad(format!(
                "{count} weights, expected {}",
                n_features(&bank)
            )));
        }
        let mut weights = Vec::with_capacity(count);
        for i in 0..count {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("missing weight {i}")))?;
            weights.push(num(line.to_string(), "weight")?);
        }
        if let Some(extra) = lines.next() {
            return Err(bad(format!("trailing content '{extra}'")));
        }
        Self::from_parts(bank, weights, bias, trained).map_err(|e| bad(e.to_string()))
    }
}

/// Gradient-descent settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: Objective,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Seeds the initial weights of an untrained model.
    pub seed: u64,
    /// Starting bias of an untrained model (prior logit of "target").
    pub init_bias: f64,
    /// After descent, shift the bias so the model's 0.5-thresholded masks
    /// best match the training labels (mean Dice).
    pub calibrate: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::default(),
            epochs: 60,
            lr: 0.05,
            momentum: 0.9,
            seed: 0,
            init_bias: -3.0,
            calibrate: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.momentum)
            && self.init_bias.is_finite();
        if !ok {
            return Err(DetectError::Config(format!("training {self:?}")));
        }
        if let Objective::GeoDice(cfg) = self.objective {
            cfg.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: LiteModel,
    /// Mean dataset loss before each epoch's update, then once more after
    /// the last update (`epochs + 1` entries).
    pub trace: Vec<f64>,
}

/// Loss, weight gradient and bias gradient.
type LossGrad = (f64, Vec<f64>, f64);

/// Mean objective over the pairs and its gradient with respect to
/// `(weights, bias)`. Per-image terms are reduced in input order.
pub fn lite_loss_and_gradient(
    model: &LiteModel,
    pairs: &[(&FeatureMap, &BinaryMask)],
    objective: &Objective,
) -> Result<LossGrad, DetectError> {
    let nf = model.weights.len();
    let per_image: Vec<Result<LossGrad, DetectError>> = pairs
        .par_iter()
        .map(|&(features, label)| {
            check_shape(features.dims(), label.dims())?;
            let p = model.predict_features(features)?;
            let lv = objective.evaluate(&p, label)?;
            let mut gw = vec![0.0; nf];
            let mut gb = 0.0;
            for (i, (&g, &pi)) in lv.grad.data().iter().zip(p.data()).enumerate() {
                if g == 0.0 {
                    continue;
                }
                let d = g * pi * (1.0 - pi);
                gb += d;
                for (acc, &x) in gw.iter_mut().zip(features.pixel(i)) {
                    *acc += d * x as f64;
                }
            }
            Ok((lv.loss, gw, gb))
        })
        .collect();
    let n = pairs.len() as f64;
    let (mut loss, mut gw, mut gb) = (0.0, vec![0.0; nf], 0.0);
    for r in per_image {
        let (l, w, b) = r?;
        loss += l;
        gb += b;
        for (a, x) in gw.iter_mut().zip(w) {
            *a += x;
        }
    }
    gw.iter_mut().for_each(|x| *x /= n);
    Ok((loss / n, gw, gb / n))
}

/// Full-batch gradient descent with momentum on precomputed features.
pub fn train_on_features(
    model: &LiteModel,
    pairs: &[(&FeatureMap, &BinaryMask)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, DetectError> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(DetectError::EmptyDataset);
    }
    let mut model = model.clone();
    if !model.trained {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        for w in &mut model.weights {
            *w = normal.sample(&mut rng);
        }
        model.bias = cfg.init_bias;
    }
    let mut vel_w = vec![0.0; model.weights.len()];
    let mut vel_b = 0.0;
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..=cfg.epochs {
        let (loss, gw, gb) = lite_loss_and_gradient(&model, pairs, &cfg.objective)?;
        trace.push(loss);
        let finite = loss.is_finite() && gb.is_finite() && gw.iter().all(|g| g.is_finite());
        if !finite {
            return Err(DetectError::Diverged { epoch, trace });
        }
        if epoch == cfg.epochs {
            break;
        }
        for ((w, v), g) in model.weights.iter_mut().zip(&mut vel_w).zip(&gw) {
            *v = cfg.momentum * *v - cfg.lr * g;
            *w += *v;
        }
        vel_b = cfg.momentum * vel_b - cfg.lr * gb;
        model.bias += vel_b;
        if !model.bias.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
            return Err(DetectError::Diverged { epoch, trace });
        }
    }
    if cfg.calibrate {
        model.bias += calibration_offset(&model, pairs)?;
    }
    model.trained = true;
    Ok(TrainOutcome { model, trace })
}

/// Bias offsets tried by the calibration, in steps of 0.1.
const CALIBRATION_STEPS: i32 = 60;

/// Margin (px) around a label's bounding box inside which calibration
/// scores the prediction.
const CALIBRATION_MARGIN: usize = 4;

/// Bias offset in `[-6, 6]` maximising the mean Dice between the thresholded
/// prediction and the label, both restricted to the label's bounding box
/// grown by [`CALIBRATION_MARGIN`]. Clutter away from the target is left to
/// prompt selection, so it does not drag the threshold. Frames with empty
/// labels are ignored; ties go to the smallest shift.
fn calibration_offset(
    model: &LiteModel,
    pairs: &[(&FeatureMap, &BinaryMask)],
) -> Result<f64, DetectError> {
    let offsets: Vec<f64> = (-CALIBRATION_STEPS..=CALIBRATION_STEPS)
        .map(|k| k as f64 * 0.1)
        .collect();
    let per_image: Vec<Option<Vec<f64>>> = pairs
        .par_iter()
        .map(|&(features, label)| {
            check_shape(features.dims(), label.dims())?;
            let Some((u0, v0, u1, v1)) = label.bbox() else {
                return Ok(None);
            };
            let (w, h) = label.dims();
            let m = CALIBRATION_MARGIN;
            let mut window = Vec::new();
            for v in v0.saturating_sub(m)..=(v1 + m).min(h - 1) {
                for u in u0.saturating_sub(m)..=(u1 + m).min(w - 1) {
                    let i = v * w + u;
                    window.push((model.logit(features.pixel(i)), label.bits()[i]));
                }
            }
            let ng = label.count();
            Ok(Some(
                offsets
                    .iter()
                    .map(|&d| {
                        let (mut inter, mut np) = (0usize, 0usize);
                        for &(s, g) in &window {
                            let p = s + d > 0.0;
                            np += p as usize;
                            inter += (p && g) as usize;
                        }
                        2.0 * inter as f64 / (np + ng) as f64
                    })
                    .collect(),
            ))
        })
        .collect::<Result<_, DetectError>>()?;
    let scored: Vec<&Vec<f64>> = per_image.iter().flatten().collect();
    if scored.is_empty() {
        return Ok(0.0);
    }
    let mut best: (f64, f64) = (f64::NEG_INFINITY, 0.0);
    for (j, &d) in offsets.iter().enumerate() {
        let mean = scored.iter().map(|v| v[j]).sum::<f64>() / scored.len() as f64;
        if mean > best.0 || (mean == best.0 && d.abs() < best.1.abs()) {
            best = (mean, d);
        }
    }
    Ok(best.1)
}

fn features_for(
    image: &GrayImage,
    cached: Option<&FeatureMap>,
    bank: &FilterBank,
) -> Result<FeatureMap, DetectError> {
    match cached {
        Some(f) => Ok(f.clone()),
        None => compute_features(image, bank),
    }
}

/// Trains on labelled frames, computing features for those without a
/// cached map. An untrained model is first initialised from `cfg.seed`; a
/// trained one continues from its current weights.
pub fn lite_train(
    model: &LiteModel,
    samples: &[FitSample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, DetectError> {
    if samples.is_empty() {
        return Err(DetectError::EmptyDataset);
    }
    let owned: Vec<Option<FeatureMap>> = samples
        .par_iter()
        .map(|s| match s.features {
            Some(_) => Ok(None),
            None => compute_features(s.image, &model.bank).map(Some),
        })
        .collect::<Result<_, _>>()?;
    let pairs: Vec<(&FeatureMap, &BinaryMask)> = samples
        .iter()
        .zip(&owned)
        .map(|(s, o)| {
            (
                o.as_ref().or(s.features).expect("features present"),
                s.label,
            )
        })
        .collect();
    train_on_features(model, &pairs, cfg)
}

/// Probability map of a trained model.
pub fn lite_segment(model: &LiteModel, img: &GrayImage) -> Result<GrayImage, DetectError> {
    if !model.trained {
        return Err(DetectError::Untrained);
    }
    let features = compute_features(img, &model.bank)?;
    Ok(model.predict_features(&features)?.map(clamp_prob))
}

impl Segmenter for LiteModel {
    fn name(&self) -> String {
        "lite".into()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            prompted: false,
            trainable: true,
        }
    }

    fn segment(&self, input: &SegmentInput) -> Result<GrayImage, DetectError> {
        if !self.trained {
            return Err(DetectError::Untrained);
        }
        let features = features_for(input.image, input.features, &self.bank)?;
        check_shape(features.dims(), input.image.dims())?;
        Ok(self.predict_features(&features)?.map(clamp_prob))
    }

    fn fit(&mut self, samples: &[FitSample], cfg: &TrainConfig) -> Result<Vec<f64>, DetectError> {
        let out = lite_train(self, samples, cfg)?;
        *self = out.model;
        Ok(out.trace)
    }

    fn model(&self) -> Option<&LiteModel> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_logit_matches_direct_formula() {
        for &(a, b) in &[(0.0, 0.0), (2.0, -1.0), (-3.0, 4.0), (5.0, 5.0)] {
            let p = logistic(a) * logistic(b);
            assert!((product_logit(a, b) - (p / (1.0 - p)).ln()).abs() < 1e-9);
        }
        assert_eq!(product_logit(100.0, 100.0), 30.0);
        assert_eq!(product_logit(-100.0, 3.0), -30.0);
    }
    use crate::geometry::LossConfig;

    /// One informative feature: +1 on target pixels, -1 elsewhere.
    fn toy(
        w: usize,
        h: usize,
        n: usize,
        on: impl Fn(usize, usize) -> bool,
    ) -> (FeatureMap, BinaryMask) {
        let mut data = vec![0f32; w * h * n];
        let mut bits = vec![false; w * h];
        for v in 0..h {
            for u in 0..w {
                let i = v * w + u;
                bits[i] = on(u, v);
                data[i * n] = if bits[i] { 1.0 } else { -1.0 };
                data[i * n + 1] = ((i * 37 % 11) as f32 - 5.0) / 5.0;
            }
        }
        (
            FeatureMap::from_raw(w, h, n, data),
            BinaryMask::from_vec(w, h, bits),
        )
    }

    fn bank() -> FilterBank {
        FilterBank::default()
    }

    #[test]
    fn zero_model_gives_half() {
        let m = LiteModel::from_parts(bank(), vec![0.0; n_features(&bank())], 0.0, true).unwrap();
        let img = GrayImage::from_fn(40, 40, |u, v| ((u * v) % 7) as f64 / 7.0);
        let p = lite_segment(&m, &img).unwrap();
        assert!(p.data().iter().all(|&x| x == 0.5));
    }

    #[test]
    fn untrained_model_refuses() {
        let img = GrayImage::new(40, 40);
        assert!(matches!(
            lite_segment(&LiteModel::new(bank()), &img),
            Err(DetectError::Untrained)
        ));
    }

    #[test]
    fn text_roundtrip_is_exact() {
        let weights: Vec<f64> = (0..n_features(&bank()))
            .map(|i| (i as f64 * 0.37).sin() / 3.0)
            .collect();
        let m = LiteModel::from_parts(bank(), weights, -2.125e-3, true).unwrap();
        let back = LiteModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(LiteModel::from_text("stripe-lite-model 2\n").is_err());
        assert!(LiteModel::from_text(&m.to_text().replace("bias", "bais")).is_err());
        assert!(LiteModel::from_text(&format!("{}0.5\n", m.to_text())).is_err());
    }

    #[test]
    fn saturated_correct_model_has_vanishing_gradient() {
        let nf = n_features(&bank());
        let (f, label) = toy(24, 24, nf, |u, v| v == 12 && (4..20).contains(&u));
        let mut weights = vec![0.0; nf];
        weights[0] = 40.0;
        let m = LiteModel::from_parts(bank(), weights, 0.0, true).unwrap();
        let p = m.predict_features(&f).unwrap();
        assert_eq!(p.threshold(0.5), label);
        let (_, gw, gb) =
            lite_loss_and_gradient(&m, &[(&f, &label)], &Objective::default()).unwrap();
        let norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        assert!(norm < 1e-6, "{norm}");
    }

    #[test]
    fn zero_lr_keeps_weights() {
        let nf = n_features(&bank());
        let (f, label) = toy(20, 20, nf, |u, v| u == v);
        let start = LiteModel::from_parts(bank(), vec![0.1; nf], -1.0, true).unwrap();
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 5,
            calibrate: false,
            ..Default::default()
        };
        let out = train_on_features(&start, &[(&f, &label)], &cfg).unwrap();
        assert_eq!(out.model.weights, start.weights);
        assert_eq!(out.model.bias, start.bias);
        assert_eq!(out.trace.len(), 6);
    }

    #[test]
    fn calibration_recovers_shifted_bias() {
        let nf = n_features(&bank());
        let (f, label) = toy(20, 20, nf, |u, v| u == v);
        let mut weights = vec![0.0; nf];
        weights[0] = 2.0;
        // Ground-truth bias would be 0; start far below it.
        let start = LiteModel::from_parts(bank(), weights, -2.5, true).unwrap();
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 0,
            ..Default::default()
        };
        let out = train_on_features(&start, &[(&f, &label)], &cfg).unwrap();
        assert_eq!(
            out.model.predict_features(&f).unwrap().threshold(0.5),
            label
        );
    }

    #[test]
    fn training_reduces_loss_on_toy_data() {
        let nf = n_features(&bank());
        let (f, label) = toy(24, 24, nf, |u, v| v == 10 && (3..21).contains(&u));
        let out = train_on_features(
            &LiteModel::new(bank()),
            &[(&f, &label)],
            &TrainConfig::default(),
        )
        .unwrap();
        assert!(out.trace.last().unwrap() < &out.trace[0], "{:?}", out.trace);
        assert!(out.model.is_trained());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let nf = n_features(&bank());
        let (f, label) = toy(16, 16, nf, |u, v| v == 8 && (2..14).contains(&u));
        let weights: Vec<f64> = (0..nf).map(|i| if i < 2 { 0.7 } else { 0.0 }).collect();
        let m = LiteModel::from_parts(bank(), weights, -0.3, true).unwrap();
        let obj = Objective::Dice { epsilon: 1.0 };
        let (_, gw, gb) = lite_loss_and_gradient(&m, &[(&f, &label)], &obj).unwrap();
        let h = 1e-5;
        for (j, &g) in gw.iter().enumerate().take(2) {
            let mut plus = m.clone();
            plus.weights[j] += h;
            let mut minus = m.clone();
            minus.weights[j] -= h;
            let lp = lite_loss_and_gradient(&plus, &[(&f, &label)], &obj)
                .unwrap()
                .0;
            let lm = lite_loss_and_gradient(&minus, &[(&f, &label)], &obj)
                .unwrap()
                .0;
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (fd - g).abs() <= 1e-6 * fd.abs().max(1e-3),
                "{j}: {fd} vs {g}"
            );
        }
        let mut plus = m.clone();
        plus.bias += h;
        let mut minus = m.clone();
        minus.bias -= h;
        let fd = (lite_loss_and_gradient(&plus, &[(&f, &label)], &obj)
            .unwrap()
            .0
            - lite_loss_and_gradient(&minus, &[(&f, &label)], &obj)
                .unwrap()
                .0)
            / (2.0 * h);
        assert!((fd - gb).abs() <= 1e-6 * fd.abs().max(1e-3));
    }

    #[test]
    fn alpha_zero_matches_dice_only_bit_for_bit() {
        let nf = n_features(&bank());
        let (f, label) = toy(20, 20, nf, |u, v| u + 3 == v);
        let geo0 = TrainConfig {
            objective: Objective::GeoDice(LossConfig::dice_only()),
            epochs: 15,
            ..Default::default()
        };
        let dice = TrainConfig {
            objective: Objective::Dice { epsilon: 1.0 },
            ..geo0
        };
        let a = train_on_features(&LiteModel::new(bank()), &[(&f, &label)], &geo0).unwrap();
        let b = train_on_features(&LiteModel::new(bank()), &[(&f, &label)], &dice).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn nan_features_abort_with_trace() {
        let nf = n_features(&bank());
        let (mut f, label) = toy(10, 10, nf, |u, _| u == 3);
        f.data[5] = f32::NAN;
        let err = train_on_features(
            &LiteModel::new(bank()),
            &[(&f, &label)],
            &TrainConfig::default(),
        )
        .unwrap_err();
        assert!(
            matches!(err, DetectError::Diverged { epoch: 0, .. }),
            "{err}"
        );
    }
}
