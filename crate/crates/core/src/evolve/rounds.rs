use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{build_segmenter, EvolutionConfig, Role};
use super::{EvolveError, Origin, PoolSample, PseudoDataset, Sample};
use crate::detect::{
    compute_features, prompt_select, FeatureMap, FilterBank, FitSample, SegmentInput, Segmenter,
    TrainConfig,
};
use crate::geometry::{connected_area_check, mass_center};
use crate::image::{BinaryMask, GrayImage, Pixel};
use crate::metrics::{aggregate, score_pair};
use crate::synth::mix_seed;

/// Per-frame features shared by every round, kept when they fit the budget.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    bank: FilterBank,
    maps: Vec<FeatureMap>,
}

impl FeatureStore {
    /// `None` when the estimated size exceeds `budget_bytes`.
    pub fn build(
        pool: &[PoolSample],
        bank: &FilterBank,
        budget_bytes: usize,
    ) -> Result<Option<Self>, EvolveError> {
        let n = crate::detect::n_features(bank);
        let need: usize = pool.iter().map(|s| s.image.len() * n * 4).sum();
        if need > budget_bytes {
            log::warn!(
                "feature cache needs {} MiB, budget {} MiB; features will be recomputed per use",
                need >> 20,
                budget_bytes >> 20
            );
            return Ok(None);
        }
        let maps = pool
            .par_iter()
            .map(|s| compute_features(&s.image, bank))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Some(Self { bank: *bank, maps }))
    }

    pub fn get(&self, bank: &FilterBank, index: usize) -> Option<&FeatureMap> {
        (self.bank == *bank).then(|| &self.maps[index])
    }
}

/// Shared knobs of the labelling rounds.
#[derive(Debug, Clone, Copy)]
pub struct RoundContext<'a> {
    pub threshold: f64,
    pub radius: f64,
    pub min_area: usize,
    pub features: Option<&'a FeatureStore>,
}

impl<'a> RoundContext<'a> {
    pub fn from_config(cfg: &EvolutionConfig, features: Option<&'a FeatureStore>) -> Self {
        Self {
            threshold: cfg.threshold,
            radius: cfg.prompt_radius,
            min_area: cfg.min_area,
            features,
        }
    }

    fn features_for(&self, seg: &dyn Segmenter, index: usize) -> Option<&'a FeatureMap> {
        let bank = seg.model()?.bank;
        self.features?.get(&bank, index)
    }
}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub dataset: PseudoDataset,
    /// Frames whose output failed the filter.
    pub rejected: usize,
    /// Frames on which the segmenter returned an error.
    pub failed: usize,
    /// Training loss trace, when the round fitted a model.
    pub trace: Vec<f64>,
}

enum Verdict {
    Accepted(BinaryMask),
    Rejected,
    Failed(String),
}

fn judge(seg: &dyn Segmenter, map: &GrayImage, prompt: Pixel, ctx: &RoundContext) -> Verdict {
    if seg.capabilities().prompted
        && !connected_area_check(&map.threshold(ctx.threshold), ctx.min_area)
    {
        return Verdict::Rejected;
    }
    let label = prompt_select(map, prompt, ctx.threshold, ctx.radius);
    if connected_area_check(&label, ctx.min_area) {
        Verdict::Accepted(label)
    } else {
        Verdict::Rejected
    }
}

/// Runs `seg` over the whole pool with `prompts` and filters the results.
fn label_pool(
    seg: &dyn Segmenter,
    pool: &[PoolSample],
    prompts: &[Pixel],
    round: usize,
    origin: Origin,
    ctx: &RoundContext,
) -> RoundOutcome {
    let verdicts: Vec<Verdict> = pool
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let input = SegmentInput {
                id: &s.id,
                image: &s.image,
                point: prompts[i],
                features: ctx.features_for(seg, i),
            };
            match seg.segment(&input) {
                Ok(map) => judge(seg, &map, prompts[i], ctx),
                Err(e) => Verdict::Failed(e.to_string()),
            }
        })
        .collect();
    let (mut samples, mut rejected, mut failed) = (Vec::new(), 0, 0);
    for (i, v) in verdicts.into_iter().enumerate() {
        match v {
            Verdict::Accepted(label) => {
                let prompt = if origin == Origin::Init {
                    prompts[i]
                } else {
                    mass_center(&label).expect("accepted labels are non-empty")
                };
                samples.push(Sample {
                    index: i,
                    id: pool[i].id.clone(),
                    prompt,
                    label,
                });
            }
            Verdict::Rejected => rejected += 1,
            Verdict::Failed(e) => {
                log::warn!("{} on {}: {e}; sample skipped", seg.name(), pool[i].id);
                failed += 1;
            }
        }
    }
    RoundOutcome {
        dataset: PseudoDataset {
            round,
            origin,
            samples,
        },
        rejected,
        failed,
        trace: Vec::new(),
    }
}

fn check_pool(pool: &[PoolSample]) -> Result<(), EvolveError> {
    if pool.is_empty() {
        return Err(EvolveError::EmptyPool);
    }
    for s in pool {
        let (w, h) = s.image.dims();
        if s.point.u >= w || s.point.v >= h {
            return Err(EvolveError::BadSample {
                id: s.id.clone(),
                reason: format!("point {} outside {w}x{h} frame", s.point),
            });
        }
        if let Some(gt) = &s.gt {
            if gt.dims() != (w, h) {
                return Err(EvolveError::BadSample {
                    id: s.id.clone(),
                    reason: "reference mask size differs from image".into(),
                });
            }
        }
    }
    Ok(())
}

/// Round 0: the initial segmenter answers every original point prompt.
pub fn init_pseudo_labels(
    teacher0: &dyn Segmenter,
    pool: &[PoolSample],
    ctx: &RoundContext,
) -> Result<RoundOutcome, EvolveError> {
    check_pool(pool)?;
    let prompts: Vec<Pixel> = pool.iter().map(|s| s.point).collect();
    let out = label_pool(teacher0, pool, &prompts, 0, Origin::Init, ctx);
    if out.dataset.is_empty() {
        return Err(EvolveError::EmptyInit {
            rejected: out.rejected,
            failed: out.failed,
        });
    }
    Ok(out)
}

fn fit_on(
    seg: &mut dyn Segmenter,
    pool: &[PoolSample],
    data: &PseudoDataset,
    train: &TrainConfig,
    ctx: &RoundContext,
) -> Result<Vec<f64>, EvolveError> {
    let bank = seg.model().map(|m| m.bank);
    let samples: Vec<FitSample> = data
        .samples
        .iter()
        .map(|s| FitSample {
            id: &s.id,
            image: &pool[s.index].image,
            label: &s.label,
            features: bank.and_then(|b| ctx.features?.get(&b, s.index)),
        })
        .collect();
    Ok(seg.fit(&samples, train)?)
}

/// Fits a trainable teacher on `prev` (warm start), then relabels the full
/// pool. An empty result signals a stall to the caller.
pub fn teacher_round(
    teacher: &mut dyn Segmenter,
    pool: &[PoolSample],
    prev: &PseudoDataset,
    round: usize,
    train: &TrainConfig,
    ctx: &RoundContext,
) -> Result<RoundOutcome, EvolveError> {
    check_pool(pool)?;
    let trace = if teacher.capabilities().trainable {
        fit_on(teacher, pool, prev, train, ctx)?
    } else {
        Vec::new()
    };
    let prompts = prev.next_prompts(pool);
    let mut out = label_pool(teacher, pool, &prompts, round, Origin::Teacher, ctx);
    out.trace = trace;
    Ok(out)
}

/// Trains the student on the teacher's labels, then relabels the full pool
/// with prompt selection around the carried prompts.
pub fn student_round(
    student: &mut dyn Segmenter,
    pool: &[PoolSample],
    d_t: &PseudoDataset,
    round: usize,
    train: &TrainConfig,
    ctx: &RoundContext,
) -> Result<RoundOutcome, EvolveError> {
    check_pool(pool)?;
    if d_t.is_empty() {
        return Err(EvolveError::Config(
            "student round needs a non-empty teacher dataset".into(),
        ));
    }
    let trace = if student.capabilities().trainable {
        fit_on(student, pool, d_t, train, ctx)?
    } else {
        Vec::new()
    };
    let prompts = d_t.next_prompts(pool);
    let mut out = label_pool(student, pool, &prompts, round, Origin::Student, ctx);
    out.trace = trace;
    Ok(out)
}

/// One line of the evolution history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub round: usize,
    pub origin: Origin,
    pub count: usize,
    /// Mean Dice (percent) of the accepted labels against the reference
    /// masks; absent without references or accepted samples.
    pub mean_dice: Option<f64>,
}

fn history_entry(pool: &[PoolSample], data: &PseudoDataset) -> Result<HistoryEntry, EvolveError> {
    let mut scores = Vec::with_capacity(data.len());
    let mut complete = !data.is_empty();
    for s in &data.samples {
        match &pool[s.index].gt {
            Some(gt) if !gt.is_empty() => scores.push(score_pair(&s.label, gt)?),
            _ => complete = false,
        }
    }
    let mean_dice = if complete {
        Some(aggregate(&scores)?.mean_dice)
    } else {
        None
    };
    Ok(HistoryEntry {
        round: data.round,
        origin: data.origin,
        count: data.len(),
        mean_dice,
    })
}

pub struct EvolutionResult {
    pub teacher: Box<dyn Segmenter>,
    pub student: Box<dyn Segmenter>,
    pub history: Vec<HistoryEntry>,
    /// Every round's dataset, round 0 first.
    pub datasets: Vec<PseudoDataset>,
    /// Loss traces of the fits, labelled like the round directories.
    pub traces: Vec<(String, Vec<f64>)>,
    /// Set when a round accepted nothing and evolution ended early.
    pub stalled: Option<String>,
}

/// Training configs with seeds derived from the loop seed, so one seed
/// controls every run.
fn seeded(train: &TrainConfig, seed: u64, salt: u64) -> TrainConfig {
    TrainConfig {
        seed: mix_seed(seed ^ mix_seed(salt)),
        ..*train
    }
}

/// The loop over explicit segmenters.
pub fn evolve_with(
    cfg: &EvolutionConfig,
    pool: &[PoolSample],
    teacher0: &dyn Segmenter,
    mut teacher: Box<dyn Segmenter>,
    mut student: Box<dyn Segmenter>,
) -> Result<EvolutionResult, EvolveError> {
    cfg.validate()?;
    check_pool(pool)?;
    let bank = student.model().or(teacher.model()).map(|m| m.bank);
    let store = match bank {
        Some(b) => FeatureStore::build(pool, &b, cfg.feature_cache_mb << 20)?,
        None => None,
    };
    let ctx = RoundContext::from_config(cfg, store.as_ref());
    let init = init_pseudo_labels(teacher0, pool, &ctx)?;
    log::info!(
        "round 0: {} accepted, {} rejected, {} failed",
        init.dataset.len(),
        init.rejected,
        init.failed
    );
    let mut history = vec![history_entry(pool, &init.dataset)?];
    let mut datasets = vec![init.dataset];
    let mut traces = Vec::new();
    let mut stalled = None;
    for it in 1..=cfg.iterations {
        let prev = datasets.last().expect("round 0 present");
        let t = teacher_round(
            teacher.as_mut(),
            pool,
            prev,
            it,
            &seeded(&cfg.teacher_train, cfg.seed, 2 * it as u64),
            &ctx,
        )?;
        log::info!(
            "round {it}t: {} accepted, {} rejected, {} failed",
            t.dataset.len(),
            t.rejected,
            t.failed
        );
        if !t.trace.is_empty() {
            traces.push((super::round_dir_name(it, Origin::Teacher), t.trace.clone()));
        }
        history.push(history_entry(pool, &t.dataset)?);
        let empty = t.dataset.is_empty();
        datasets.push(t.dataset);
        if empty {
            stalled = Some(format!("teacher round {it} accepted no sample"));
            break;
        }
        let d_t = datasets.last().expect("just pushed");
        let s = student_round(
            student.as_mut(),
            pool,
            d_t,
            it,
            &seeded(&cfg.student_train, cfg.seed, 2 * it as u64 + 1),
            &ctx,
        )?;
        log::info!(
            "round {it}s: {} accepted, {} rejected, {} failed",
            s.dataset.len(),
            s.rejected,
            s.failed
        );
        if !s.trace.is_empty() {
            traces.push((super::round_dir_name(it, Origin::Student), s.trace.clone()));
        }
        history.push(history_entry(pool, &s.dataset)?);
        let empty = s.dataset.is_empty();
        datasets.push(s.dataset);
        if empty {
            stalled = Some(format!("student round {it} accepted no sample"));
            break;
        }
    }
    Ok(EvolutionResult {
        teacher,
        student,
        history,
        datasets,
        traces,
        stalled,
    })
}

/// Builds the configured segmenters and runs the full loop.
pub fn evolve_loop(
    cfg: &EvolutionConfig,
    pool: &[PoolSample],
) -> Result<EvolutionResult, EvolveError> {
    cfg.validate()?;
    let teacher0 = build_segmenter(&cfg.teacher0, Role::Teacher, cfg, pool)?;
    let teacher = build_segmenter(&cfg.teacher, Role::Teacher, cfg, pool)?;
    let student = build_segmenter(&cfg.student, Role::Student, cfg, pool)?;
    evolve_with(cfg, pool, teacher0.as_ref(), teacher, student)
}
