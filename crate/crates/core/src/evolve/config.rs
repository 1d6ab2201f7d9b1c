use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{EvolveError, PoolSample};
use crate::detect::{
    ExternalSegmenter, FilterBank, HoughParams, LiteModel, LocalPrompted, MatchedFilter,
    OracleSegmenter, Segmenter, TrainConfig, DEFAULT_PROMPT_RADIUS,
};
use crate::geometry::DEFAULT_MIN_AREA;
use crate::io::{self, FormatError};

/// Which segmenter fills a slot of the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SegmenterSpec {
    MatchedFilter(MatchedFilter),
    Hough(HoughParams),
    /// Linear pixel classifier, optionally warm-started from a model file.
    Lite {
        #[serde(default)]
        bank: FilterBank,
        #[serde(default)]
        model: Option<PathBuf>,
    },
    External(ExternalSegmenter),
    /// Returns the pool's reference masks; for tests and upper bounds.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Teachers answer point prompts; unprompted segmenters get wrapped.
    Teacher,
    Student,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub iterations: usize,
    pub min_area: usize,
    pub seed: u64,
    /// Probability cutoff for binarising segmenter output.
    pub threshold: f64,
    pub prompt_radius: f64,
    /// Neighbourhood (px) in which prompted wrappers keep clutter.
    pub context: usize,
    pub teacher0: SegmenterSpec,
    pub teacher: SegmenterSpec,
    pub student: SegmenterSpec,
    pub teacher_train: TrainConfig,
    pub student_train: TrainConfig,
    /// Budget for caching per-frame features in memory.
    pub feature_cache_mb: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        // Short warm-started rounds: longer fits memorise label noise and
        // the loop degrades.
        let train = TrainConfig {
            epochs: 25,
            ..TrainConfig::default()
        };
        Self {
            iterations: 3,
            min_area: DEFAULT_MIN_AREA,
            seed: 0,
            threshold: 0.5,
            prompt_radius: DEFAULT_PROMPT_RADIUS,
            context: 3,
            teacher0: SegmenterSpec::MatchedFilter(MatchedFilter::default()),
            teacher: SegmenterSpec::Lite {
                bank: FilterBank::default(),
                model: None,
            },
            student: SegmenterSpec::Lite {
                bank: FilterBank::default(),
                model: None,
            },
            teacher_train: train,
            student_train: train,
            feature_cache_mb: 2048,
        }
    }
}

impl EvolutionConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, FormatError> {
        toml::from_str(s).map_err(|e| FormatError::Toml(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), EvolveError> {
        let bad = |m: String| Err(EvolveError::Config(m));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.min_area == 0 {
            return bad("min_area must be at least 1".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} outside (0, 1)", self.threshold));
        }
        if !(self.prompt_radius >= 0.0 && self.prompt_radius.is_finite()) {
            return bad(format!("prompt_radius {}", self.prompt_radius));
        }
        for (name, t) in [
            ("teacher_train", &self.teacher_train),
            ("student_train", &self.student_train),
        ] {
            t.validate()
                .map_err(|e| EvolveError::Config(format!("{name}: {e}")))?;
        }
        Ok(())
    }
}

fn load_lite(bank: &FilterBank, model: &Option<PathBuf>) -> Result<LiteModel, EvolveError> {
    match model {
        Some(path) => {
            let bytes = io::read_bytes(path)?;
            let text = String::from_utf8(bytes).map_err(|e| FormatError::Model(e.to_string()))?;
            Ok(LiteModel::from_text(&text)?)
        }
        None => {
            bank.validate()?;
            Ok(LiteModel::new(*bank))
        }
    }
}

/// Instantiates a segmenter for `role`. Teachers that ignore prompts are
/// wrapped in [`LocalPrompted`].
pub fn build_segmenter(
    spec: &SegmenterSpec,
    role: Role,
    cfg: &EvolutionConfig,
    pool: &[PoolSample],
) -> Result<Box<dyn Segmenter>, EvolveError> {
    let wrap = |inner: Box<dyn Segmenter>| -> Box<dyn Segmenter> {
        if role == Role::Teacher && !inner.capabilities().prompted {
            Box::new(LocalPrompted {
                inner,
                threshold: cfg.threshold,
                radius: cfg.prompt_radius,
                context: cfg.context,
            })
        } else {
            inner
        }
    };
    let inner: Box<dyn Segmenter> = match spec {
        SegmenterSpec::MatchedFilter(m) => Box::new(*m),
        SegmenterSpec::Hough(h) => {
            h.validate()?;
            Box::new(*h)
        }
        SegmenterSpec::Lite { bank, model } => Box::new(load_lite(bank, model)?),
        SegmenterSpec::External(e) => Box::new(e.clone()),
        SegmenterSpec::Oracle => {
            let mut masks = HashMap::new();
            for s in pool {
                let gt = s.gt.clone().ok_or_else(|| EvolveError::BadSample {
                    id: s.id.clone(),
                    reason: "oracle segmenter needs reference masks".into(),
                })?;
                masks.insert(s.id.clone(), gt);
            }
            Box::new(OracleSegmenter::new(masks))
        }
    };
    Ok(wrap(inner))
}
