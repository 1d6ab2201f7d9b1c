use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use stripe_core::detect::{
    prompt_select, ExternalSegmenter, FilterBank, FitSample, MatchedFilter, SegmentInput,
    TrainConfig, PROB_FLOOR,
};
use stripe_core::evolve::{
    self, build_segmenter, history_to_csv, load_pool, resolve_split_dir, sidecars, write_evolution,
    EvolutionConfig, Role, SegmenterSpec,
};
use stripe_core::geometry::{
    geo_alignment_loss, geodice_loss, weighted_dice_loss, LossConfig, Objective,
};
use stripe_core::image::{GrayImage, Pixel};
use stripe_core::io::{self, FormatError};
use stripe_core::metrics::{score_pair, MetricReport, MetricsError, ScoredImage};
use stripe_core::synth::{generate_frames, write_dataset, DatasetConfig, LabelRecord, Split};
use stripe_core::BinaryMask;

use crate::overlay::render_overlay;
use crate::{
    run_record_path, Cli, CliError, Command, DetectArgs, EvaluateArgs, EvolveArgs, GenerateArgs,
    InspectArgs, LossCheckArgs, Method, MissingPolicy, ObjectiveArg, ReportFormat, TrainArgs,
};

pub(crate) fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(a) => generate(a, cli.seed),
        Command::Detect(a) => detect(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Evolve(a) => evolve(a, cli.seed),
        Command::Train(a) => train(a, cli.seed),
        Command::Inspect(a) => inspect(a),
        Command::LossCheck(a) => loss_check(a, cli.seed),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    String::from_utf8(io::read_bytes(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    toml::from_str(&read_text(path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn write_record(
    path: &Path,
    command: &str,
    seed: Option<u64>,
    args: Value,
    config: Value,
) -> Result<(), CliError> {
    let record = json!({
        "tool": "stripe",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "args": args,
        "config": config,
    });
    io::write_json(path, &record)?;
    Ok(())
}

fn to_value(v: &impl serde::Serialize) -> Value {
    serde_json::to_value(v).expect("configs serialise to JSON")
}

fn generate(a: &GenerateArgs, seed: Option<u64>) -> Result<(), CliError> {
    let seed = seed.unwrap_or(0);
    let mut cfg = match &a.config {
        Some(p) => DatasetConfig::from_toml_str(&read_text(p)?)?,
        None => DatasetConfig::default(),
    };
    cfg.train = a.train.unwrap_or(cfg.train);
    cfg.val = a.val.unwrap_or(cfg.val);
    cfg.test = a.test.unwrap_or(cfg.test);
    cfg.validate()?;
    let frames = generate_frames(&cfg, seed)?;
    write_dataset(&a.out, &cfg, seed, &frames)?;
    log::info!("wrote {} frames to {}", frames.len(), a.out.display());
    write_record(
        &run_record_path(&a.out, true),
        "generate",
        Some(seed),
        json!({ "config": a.config.as_deref().map(path_str), "out": path_str(&a.out) }),
        to_value(&cfg),
    )
}

/// A frame to segment: sidecar-labelled when a point is known.
struct InputFrame {
    id: String,
    image: PathBuf,
    point: Option<Pixel>,
}

fn list_frames(dir: &Path, split: Split) -> Result<Vec<InputFrame>, CliError> {
    let dir = resolve_split_dir(dir, split);
    let labelled = sidecars(&dir)?;
    if !labelled.is_empty() {
        return labelled
            .iter()
            .map(|p| {
                let rec = LabelRecord::from_json(&io::read_bytes(p)?)?;
                let id = p
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or_default()
                    .to_string();
                let image = evolve::image_for(p).ok_or_else(|| {
                    CliError::Data(format!("{}: no image next to the sidecar", p.display()))
                })?;
                Ok(InputFrame {
                    id,
                    image,
                    point: Some(Pixel::new(rec.point[0], rec.point[1])),
                })
            })
            .collect();
    }
    let mut frames: BTreeMap<String, PathBuf> = BTreeMap::new();
    for path in dir_files(&dir)? {
        let (Some(stem), Some(ext)) = (
            path.file_stem().and_then(|s| s.to_str()),
            path.extension().and_then(|s| s.to_str()),
        ) else {
            continue;
        };
        let id = match ext {
            "pgm" => stem.to_string(),
            "png" if !stem.ends_with("_mask") => {
                stem.strip_suffix("_img").unwrap_or(stem).to_string()
            }
            _ => continue,
        };
        // PGM frames win over PNG renderings of the same frame.
        if ext == "pgm" || !frames.contains_key(&id) {
            frames.insert(id, path);
        }
    }
    Ok(frames
        .into_iter()
        .map(|(id, image)| InputFrame {
            id,
            image,
            point: None,
        })
        .collect())
}

fn dir_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    out.sort();
    Ok(out)
}

fn detect_spec(a: &DetectArgs) -> Result<SegmenterSpec, CliError> {
    let mut spec = match (&a.config, a.method) {
        (Some(p), _) => parse_toml(p)?,
        (None, Method::MatchedFilter) => SegmenterSpec::MatchedFilter(MatchedFilter::default()),
        (None, Method::Hough) => SegmenterSpec::Hough(Default::default()),
        (None, Method::Lite) => SegmenterSpec::Lite {
            bank: FilterBank::default(),
            model: None,
        },
        (None, Method::External) => {
            let cmd = a
                .command
                .clone()
                .ok_or_else(|| CliError::Usage("--method external needs --command".into()))?;
            SegmenterSpec::External(ExternalSegmenter::new(cmd))
        }
    };
    if let (SegmenterSpec::Lite { model, .. }, Some(m)) = (&mut spec, &a.model) {
        *model = Some(m.clone());
    }
    match &spec {
        SegmenterSpec::Oracle => Err(CliError::Usage(
            "the oracle segmenter is not available for detection".into(),
        )),
        SegmenterSpec::Lite { model: None, .. } => {
            Err(CliError::Usage("the lite method needs --model".into()))
        }
        _ => Ok(spec),
    }
}

fn detect(a: &DetectArgs) -> Result<(), CliError> {
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        return Err(CliError::Usage(format!(
            "--threshold {} outside (0, 1)",
            a.threshold
        )));
    }
    let spec = detect_spec(a)?;
    let frames = list_frames(&a.input, a.split.into())?;
    if frames.is_empty() {
        return Err(CliError::Data(format!(
            "no frames under {}",
            a.input.display()
        )));
    }
    if a.prompted {
        if let Some(f) = frames.iter().find(|f| f.point.is_none()) {
            return Err(CliError::Data(format!(
                "--prompted needs a point label for frame {}",
                f.id
            )));
        }
    }
    let ecfg = EvolutionConfig {
        threshold: a.threshold,
        prompt_radius: a.radius,
        ..EvolutionConfig::default()
    };
    let role = if a.prompted {
        Role::Teacher
    } else {
        Role::Student
    };
    let segmenter = build_segmenter(&spec, role, &ecfg, &[])?;
    let results: Vec<Result<(GrayImage, BinaryMask), CliError>> = frames
        .par_iter()
        .map(|f| {
            let image = io::read_image(&f.image)?;
            let point = f.point.unwrap_or(Pixel::new(0, 0));
            let prob = segmenter.segment(&SegmentInput::new(&f.id, &image, point))?;
            let mask = if a.prompted {
                prompt_select(&prob, point, a.threshold, a.radius)
            } else {
                prob.threshold(a.threshold)
            };
            Ok((prob, mask))
        })
        .collect();
    for (f, r) in frames.iter().zip(results) {
        let (prob, mask) = r?;
        io::write_mask(&a.out.join(format!("{}.png", f.id)), &mask)?;
        if a.save_prob {
            io::write_pgm16(&a.out.join(format!("{}_prob.pgm", f.id)), &prob)?;
        }
    }
    log::info!(
        "segmented {} frames with {}",
        frames.len(),
        segmenter.name()
    );
    write_record(
        &run_record_path(&a.out, true),
        "detect",
        None,
        json!({
            "input": path_str(&a.input),
            "out": path_str(&a.out),
            "split": format!("{:?}", a.split).to_lowercase(),
            "threshold": a.threshold,
            "prompted": a.prompted,
            "radius": a.radius,
            "save_prob": a.save_prob,
        }),
        to_value(&spec),
    )
}

struct MaskEntry {
    path: PathBuf,
    group: Option<String>,
}

/// Masks of a directory by frame id. Sidecar-labelled directories use the
/// sidecars' mask files; otherwise every PNG counts, with a `_mask` suffix
/// stripped from the id and `_img` renderings skipped.
fn mask_index(dir: &Path, split: Split) -> Result<BTreeMap<String, MaskEntry>, CliError> {
    let dir = resolve_split_dir(dir, split);
    let labelled = sidecars(&dir)?;
    let mut out = BTreeMap::new();
    if !labelled.is_empty() {
        for p in labelled {
            let rec = LabelRecord::from_json(&io::read_bytes(&p)?)?;
            let id = p
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            out.insert(
                id,
                MaskEntry {
                    path: dir.join(&rec.mask),
                    group: Some(rec.stray_light.to_string()),
                },
            );
        }
        return Ok(out);
    }
    for path in dir_files(&dir)? {
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default();
        if stem.ends_with("_img") {
            continue;
        }
        let id = stem.strip_suffix("_mask").unwrap_or(stem).to_string();
        if out.contains_key(&id) {
            return Err(CliError::Data(format!(
                "{}: two masks for frame {id}",
                dir.display()
            )));
        }
        out.insert(id, MaskEntry { path, group: None });
    }
    Ok(out)
}

fn evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let split = a.split.into();
    let preds = mask_index(&a.pred, split)?;
    let gts = mask_index(&a.gt, split)?;
    if let Some(id) = preds.keys().find(|id| !gts.contains_key(*id)) {
        return Err(CliError::Data(format!(
            "prediction {id} has no reference mask"
        )));
    }
    let missing: Vec<&String> = gts.keys().filter(|id| !preds.contains_key(*id)).collect();
    let ids: Vec<&String> = match a.missing {
        MissingPolicy::Skip => preds.keys().collect(),
        MissingPolicy::Empty => gts.keys().collect(),
    };
    let scored: Vec<Result<Option<ScoredImage>, CliError>> = ids
        .par_iter()
        .map(|&id| {
            let g = &gts[id];
            let gt = io::read_mask(&g.path)?;
            let pred = match preds.get(id) {
                Some(p) => io::read_mask(&p.path)?,
                None => BinaryMask::new(gt.width(), gt.height()),
            };
            match score_pair(&pred, &gt) {
                Ok(scores) => Ok(Some(ScoredImage {
                    id: id.clone(),
                    group: g.group.clone(),
                    scores,
                })),
                Err(MetricsError::EmptyTarget) => Ok(None),
                Err(e) => Err(CliError::Data(format!("{id}: {e}"))),
            }
        })
        .collect();
    let mut per_image = Vec::new();
    let mut skipped = 0;
    for s in scored {
        match s? {
            Some(x) => per_image.push(x),
            None => skipped += 1,
        }
    }
    let report = MetricReport::build(per_image, skipped)?;
    let text = match a.report {
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Json => {
            let mut v = report.to_summary_json();
            v["missing_predictions"] = json!(missing.len());
            v["missing_policy"] = json!(format!("{:?}", a.missing).to_lowercase());
            let mut s = serde_json::to_string_pretty(&v).map_err(FormatError::from)?;
            s.push('\n');
            s
        }
    };
    if !missing.is_empty() {
        log::warn!("{} reference frames have no prediction", missing.len());
    }
    match &a.out {
        Some(out) => {
            io::write_bytes(out, text.as_bytes())?;
            write_record(
                &run_record_path(out, false),
                "evaluate",
                None,
                json!({
                    "pred": path_str(&a.pred),
                    "gt": path_str(&a.gt),
                    "report": format!("{:?}", a.report).to_lowercase(),
                    "split": format!("{:?}", a.split).to_lowercase(),
                    "missing": format!("{:?}", a.missing).to_lowercase(),
                    "out": path_str(out),
                }),
                Value::Null,
            )?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn evolve(a: &EvolveArgs, seed: Option<u64>) -> Result<(), CliError> {
    let mut cfg: EvolutionConfig = match &a.config {
        Some(p) => EvolutionConfig::from_toml_str(&read_text(p)?)?,
        None => EvolutionConfig::default(),
    };
    cfg.iterations = a.iterations.unwrap_or(cfg.iterations);
    cfg.seed = seed.unwrap_or(cfg.seed);
    cfg.validate()?;
    let pool = load_pool(&a.pool, a.split.into(), !a.no_gt)?;
    log::info!("pool of {} frames", pool.len());
    let result = evolve::evolve_loop(&cfg, &pool)?;
    write_evolution(&a.out, &result)?;
    write_record(
        &run_record_path(&a.out, true),
        "evolve",
        Some(cfg.seed),
        json!({
            "pool": path_str(&a.pool),
            "config": a.config.as_deref().map(path_str),
            "out": path_str(&a.out),
            "split": format!("{:?}", a.split).to_lowercase(),
            "no_gt": a.no_gt,
        }),
        to_value(&cfg),
    )?;
    log::info!("history:\n{}", history_to_csv(&result.history));
    match result.stalled {
        Some(why) => Err(CliError::Runtime(format!(
            "evolution stalled: {why}; partial results written to {}",
            a.out.display()
        ))),
        None => Ok(()),
    }
}

fn train(a: &TrainArgs, seed: Option<u64>) -> Result<(), CliError> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => parse_toml(p)?,
        None => TrainConfig::default(),
    };
    cfg.seed = seed.unwrap_or(cfg.seed);
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.lr = a.lr.unwrap_or(cfg.lr);
    match a.objective {
        Some(ObjectiveArg::Geodice) => cfg.objective = Objective::GeoDice(LossConfig::default()),
        Some(ObjectiveArg::Dice) => cfg.objective = Objective::GeoDice(LossConfig::dice_only()),
        None => {}
    }
    cfg.validate()?;
    let start = match &a.model {
        Some(p) => stripe_core::detect::LiteModel::from_text(&read_text(p)?)?,
        None => stripe_core::detect::LiteModel::new(FilterBank::default()),
    };
    let pool = load_pool(&a.data, a.split.into(), true)?;
    let samples: Vec<FitSample> = pool
        .iter()
        .map(|s| FitSample {
            id: &s.id,
            image: &s.image,
            label: s.gt.as_ref().expect("loaded with references"),
            features: None,
        })
        .collect();
    let out = stripe_core::detect::lite_train(&start, &samples, &cfg)?;
    io::write_bytes(&a.out, out.model.to_text().as_bytes())?;
    log::info!(
        "trained on {} frames: loss {:.5} -> {:.5}",
        samples.len(),
        out.trace.first().copied().unwrap_or(f64::NAN),
        out.trace.last().copied().unwrap_or(f64::NAN)
    );
    write_record(
        &run_record_path(&a.out, false),
        "train",
        Some(cfg.seed),
        json!({
            "data": path_str(&a.data),
            "split": format!("{:?}", a.split).to_lowercase(),
            "model": a.model.as_deref().map(path_str),
            "out": path_str(&a.out),
            "trace": out.trace,
        }),
        to_value(&cfg),
    )
}

fn inspect(a: &InspectArgs) -> Result<(), CliError> {
    let image = io::read_image(&a.image)?;
    let label = io::read_mask(&a.label)?;
    let pred = a.pred.as_deref().map(io::read_mask).transpose()?;
    let (rgb, counts) = render_overlay(&image, &label, pred.as_ref())?;
    io::write_bytes(
        &a.out,
        &io::encode_rgb8_png(image.width(), image.height(), &rgb)?,
    )?;
    write_record(
        &run_record_path(&a.out, false),
        "inspect",
        None,
        json!({
            "image": path_str(&a.image),
            "label": path_str(&a.label),
            "pred": a.pred.as_deref().map(path_str),
            "out": path_str(&a.out),
            "counts": counts,
        }),
        Value::Null,
    )
}

fn loss_check(a: &LossCheckArgs, seed: Option<u64>) -> Result<(), CliError> {
    let cfg = LossConfig {
        alpha: a.alpha,
        lambda: a.lambda,
        epsilon: a.epsilon,
        binarize_threshold: a.threshold,
    };
    cfg.validate()?;
    let pred = io::read_image(&a.pred)?.map(|p| p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR));
    let label = io::read_mask(&a.label)?;
    let total = geodice_loss(&pred, &label, &cfg)?;
    let geo = geo_alignment_loss(&pred, &label, a.threshold)?;
    let dice = weighted_dice_loss(&pred, &label, None, a.epsilon)?;
    let mut result = json!({
        "loss": total.loss,
        "geo": geo.loss,
        "dice": dice.loss,
        "alpha": a.alpha,
        "lambda": a.lambda,
        "epsilon": a.epsilon,
        "threshold": a.threshold,
        "grad_l1": total.grad.data().iter().map(|g| g.abs()).sum::<f64>(),
    });
    if a.fd_pixels > 0 {
        let seed = seed.unwrap_or(0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for _ in 0..a.fd_pixels {
            let i = rng.random_range(0..pred.len());
            let probe = |d: f64| -> Result<f64, CliError> {
                let mut p = pred.clone();
                p.data_mut()[i] += d;
                Ok(geodice_loss(&p, &label, &cfg)?.loss)
            };
            let fd = (probe(h)? - probe(-h)?) / (2.0 * h);
            let an = total.grad.data()[i];
            let scale = fd.abs().max(an.abs()).max(1e-8);
            worst = worst.max((fd - an).abs() / scale);
        }
        result["fd"] =
            json!({ "pixels": a.fd_pixels, "step": h, "seed": seed, "max_rel_error": worst });
    }
    let mut text = serde_json::to_string_pretty(&result).map_err(FormatError::from)?;
    text.push('\n');
    match &a.out {
        Some(out) => {
            io::write_bytes(out, text.as_bytes())?;
            write_record(
                &run_record_path(out, false),
                "loss-check",
                seed,
                json!({
                    "pred": path_str(&a.pred),
                    "label": path_str(&a.label),
                    "fd_pixels": a.fd_pixels,
                    "out": path_str(out),
                }),
                to_value(&cfg),
            )?;
        }
        None => print!("{text}"),
    }
    Ok(())
}
