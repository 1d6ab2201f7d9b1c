//! Teacher-student label evolution from single-point labels.
//!
//! Round 0 runs a fixed promptable segmenter over the pool and keeps the
//! frames whose output passes the connected-area check. Each later
//! iteration fits the teacher on the previous pseudo-labels, relabels the
//! whole pool, then trains the student on the teacher's labels and relabels
//! the pool once more.

mod config;
mod output;
mod pool;
mod rounds;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use config::{build_segmenter, EvolutionConfig, Role, SegmenterSpec};
pub use output::{
    audit_round_dir, history_to_csv, parse_history_csv, round_dir_name, write_evolution,
    write_round, RoundAudit,
};
pub use pool::{image_for, load_pool, resolve_split_dir, sidecars};
pub use rounds::{
    evolve_loop, evolve_with, init_pseudo_labels, student_round, teacher_round, EvolutionResult,
    FeatureStore, HistoryEntry, RoundContext, RoundOutcome,
};

use crate::detect::DetectError;
use crate::image::{BinaryMask, GrayImage, Pixel};
use crate::io::FormatError;
use crate::metrics::MetricsError;

/// One frame of the candidate pool.
#[derive(Debug, Clone)]
pub struct PoolSample {
    pub id: String,
    pub image: GrayImage,
    /// The human single-point label.
    pub point: Pixel,
    /// Reference mask, used only for scoring.
    pub gt: Option<BinaryMask>,
    /// Reporting group, e.g. the stray-light family.
    pub group: Option<String>,
}

/// An accepted pseudo-labelled frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Position in the pool.
    pub index: usize,
    pub id: String,
    /// Prompt carried into the next round: the original point for round 0,
    /// the label's mass center afterwards.
    pub prompt: Pixel,
    pub label: BinaryMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Init,
    Teacher,
    Student,
}

impl Origin {
    pub fn as_str(&self) -> &'static str {
        match self {
            Origin::Init => "init",
            Origin::Teacher => "teacher",
            Origin::Student => "student",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Origin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "init" => Ok(Origin::Init),
            "teacher" => Ok(Origin::Teacher),
            "student" => Ok(Origin::Student),
            other => Err(format!("unknown origin '{other}'")),
        }
    }
}

/// The accepted samples of one round, in pool order.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoDataset {
    pub round: usize,
    pub origin: Origin,
    pub samples: Vec<Sample>,
}

impl PseudoDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Sample> {
        self.samples
            .binary_search_by_key(&index, |s| s.index)
            .ok()
            .map(|i| &self.samples[i])
    }

    /// Prompts for the next round: accepted frames use their stored prompt,
    /// the rest fall back to the original point.
    pub fn next_prompts(&self, pool: &[PoolSample]) -> Vec<Pixel> {
        pool.iter()
            .enumerate()
            .map(|(i, p)| self.get(i).map_or(p.point, |s| s.prompt))
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvolveError {
    #[error("invalid evolution configuration: {0}")]
    Config(String),
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("pool sample {id}: {reason}")]
    BadSample { id: String, reason: String },
    #[error("initial pseudo-labelling accepted no sample ({rejected} rejected, {failed} failed)")]
    EmptyInit { rejected: usize, failed: usize },
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}
