//! Segmenter contracts: the external-process adapter against shell stubs,
//! prompt selection, model files, and the built-in detectors on frames.

use std::path::{Path, PathBuf};
use std::time::Duration;

use proptest::prelude::*;
use stripe_core::detect::{
    external_segment, hough_detect, prompt_select, DetectError, ExternalError, ExternalSegmenter,
    FilterBank, HoughParams, LiteModel, LocalPrompted, MatchedFilter, SegmentInput, Segmenter,
    DEFAULT_PROMPT_RADIUS,
};
use stripe_core::geometry::{angle_difference, connected_components};
use stripe_core::io::{encode_mask_png, write_bytes, write_pgm16};
use stripe_core::metrics::score_pair;
use stripe_core::synth::{generate_frames, DatasetConfig};
use stripe_core::{BinaryMask, GrayImage, Pixel};

/// Writes `body` as a shell script; the adapter appends
/// `--image <p> --point <u,v> --out <p>` to `sh <script> <extra...>`.
fn stub(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, format!("#!/bin/sh\nset -e\n{body}\n")).unwrap();
    p
}

/// Shell preamble that picks the flag values out of `"$@"`.
const PARSE: &str = r#"
while [ $# -gt 0 ]; do
  case "$1" in
    --image) IMG="$2"; shift 2 ;;
    --point) POINT="$2"; shift 2 ;;
    --out) OUT="$2"; shift 2 ;;
    *) EXTRA="$1"; shift ;;
  esac
done
"#;

fn bar_mask(w: usize, h: usize) -> BinaryMask {
    BinaryMask::from_vec(
        w,
        h,
        (0..w * h)
            .map(|i| i / w == h / 2 && (2..w - 2).contains(&(i % w)))
            .collect(),
    )
}

struct Env {
    dir: tempfile::TempDir,
    img: PathBuf,
}

fn env(w: usize, h: usize) -> Env {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("frame.pgm");
    write_pgm16(&img, &GrayImage::filled(w, h, 0.2)).unwrap();
    write_bytes(
        &dir.path().join("good.png"),
        &encode_mask_png(&bar_mask(w, h)).unwrap(),
    )
    .unwrap();
    write_bytes(
        &dir.path().join("small.png"),
        &encode_mask_png(&bar_mask(w - 1, h)).unwrap(),
    )
    .unwrap();
    Env { dir, img }
}

fn run(
    e: &Env,
    script: &Path,
    extra: &str,
    timeout: Duration,
) -> Result<BinaryMask, ExternalError> {
    let cmd = format!("sh {} {extra}", script.display());
    external_segment(&cmd, &e.img, Pixel::new(5, 7), (24, 16), timeout)
}

#[test]
fn external_success_and_arguments() {
    let e = env(24, 16);
    let args = e.dir.path().join("args.txt");
    let s = stub(
        e.dir.path(),
        "ok.sh",
        &format!(
            "{PARSE}\necho \"$POINT $EXTRA\" > {}\ntest -f \"$IMG\"\ncp \"$EXTRA\" \"$OUT\"",
            args.display()
        ),
    );
    let good = e.dir.path().join("good.png");
    let mask = run(&e, &s, good.to_str().unwrap(), Duration::from_secs(20)).unwrap();
    assert_eq!(mask, bar_mask(24, 16));
    assert_eq!(
        std::fs::read_to_string(&args).unwrap().trim(),
        format!("5,7 {}", good.display())
    );
}

#[test]
fn external_failures_are_typed() {
    let e = env(24, 16);
    let long = Duration::from_secs(20);

    let s = stub(
        e.dir.path(),
        "fail.sh",
        "echo 'model weights missing' >&2\nexit 3",
    );
    match run(&e, &s, "", long) {
        Err(ExternalError::Exit { stderr, .. }) => {
            assert!(stderr.contains("model weights missing"))
        }
        other => panic!("{other:?}"),
    }

    let s = stub(e.dir.path(), "slow.sh", "sleep 5");
    let t0 = std::time::Instant::now();
    assert!(matches!(
        run(&e, &s, "", Duration::from_millis(300)),
        Err(ExternalError::Timeout(_))
    ));
    assert!(t0.elapsed() < Duration::from_secs(4));

    let s = stub(
        e.dir.path(),
        "garbage.sh",
        &format!("{PARSE}\necho 'not a png' > \"$OUT\""),
    );
    assert!(matches!(
        run(&e, &s, "", long),
        Err(ExternalError::MalformedMask(_))
    ));

    let s = stub(e.dir.path(), "nothing.sh", "exit 0");
    assert!(matches!(
        run(&e, &s, "", long),
        Err(ExternalError::MalformedMask(_))
    ));

    let s = stub(
        e.dir.path(),
        "small.sh",
        &format!("{PARSE}\ncp \"$EXTRA\" \"$OUT\""),
    );
    let small = e.dir.path().join("small.png");
    assert!(matches!(
        run(&e, &s, small.to_str().unwrap(), long),
        Err(ExternalError::MalformedMask(_))
    ));

    let missing = external_segment(
        "/nonexistent/segmenter",
        &e.img,
        Pixel::new(1, 1),
        (24, 16),
        long,
    );
    assert!(matches!(missing, Err(ExternalError::Spawn { .. })));
    let empty = external_segment("   ", &e.img, Pixel::new(1, 1), (24, 16), long);
    assert!(matches!(empty, Err(ExternalError::EmptyCommand)));
}

#[test]
fn external_segmenter_cleans_up_and_checks_prompts() {
    let e = env(24, 16);
    let work = e.dir.path().join("work");
    std::fs::create_dir(&work).unwrap();
    let s = stub(
        e.dir.path(),
        "ok.sh",
        &format!("{PARSE}\ncp \"$EXTRA\" \"$OUT\""),
    );
    let seg = ExternalSegmenter {
        command: format!(
            "sh {} {}",
            s.display(),
            e.dir.path().join("good.png").display()
        ),
        timeout_secs: 20.0,
        work_dir: Some(work.clone()),
    };
    let img = GrayImage::filled(24, 16, 0.3);
    let prob = seg
        .segment(&SegmentInput::new("a", &img, Pixel::new(4, 8)))
        .unwrap();
    assert_eq!(prob.threshold(0.5), bar_mask(24, 16));
    assert_eq!(std::fs::read_dir(&work).unwrap().count(), 0);
    assert!(matches!(
        seg.segment(&SegmentInput::new("a", &img, Pixel::new(24, 0))),
        Err(DetectError::PromptOutside { .. })
    ));
    let parsed: ExternalSegmenter = toml::from_str("command = \"seg --fast\"").unwrap();
    assert_eq!(parsed, ExternalSegmenter::new("seg --fast"));
}

fn prob_strategy() -> impl Strategy<Value = (GrayImage, Pixel)> {
    (
        prop::collection::vec(prop::sample::select(vec![0.1, 0.9]), 20 * 20),
        0usize..20,
        0usize..20,
    )
        .prop_map(|(d, u, v)| (GrayImage::from_vec(20, 20, d), Pixel::new(u, v)))
}

proptest! {
    #[test]
    fn prompt_selection_is_one_region_of_the_threshold_mask((prob, point) in prob_strategy(), radius in 0.0f64..6.0) {
        let full = prob.threshold(0.5);
        let sel = prompt_select(&prob, point, 0.5, radius);
        prop_assert!(sel.bits().iter().zip(full.bits()).all(|(&s, &f)| !s || f));
        let regions = connected_components(&sel);
        prop_assert!(regions.len() <= 1);
        // It is a whole region of the thresholded map, not a piece of one.
        if let Some(r) = regions.first() {
            prop_assert!(connected_components(&full).iter().any(|f| f.pixels == r.pixels));
            let d2 = r.pixels.iter().map(|p| p.dist2(&point)).fold(f64::INFINITY, f64::min);
            prop_assert!(d2 <= radius * radius);
        }
        if full.get(point.u, point.v) {
            prop_assert!(sel.get(point.u, point.v));
        }
    }

    #[test]
    fn local_prompting_keeps_the_chosen_region((prob, point) in prob_strategy()) {
        struct Fixed(GrayImage);
        impl Segmenter for Fixed {
            fn name(&self) -> String { "fixed".into() }
            fn capabilities(&self) -> stripe_core::detect::Capabilities {
                stripe_core::detect::Capabilities { prompted: false, trainable: false }
            }
            fn segment(&self, _: &SegmentInput) -> Result<GrayImage, DetectError> { Ok(self.0.clone()) }
        }
        let wrapped = LocalPrompted::new(Fixed(prob.clone()));
        let out = wrapped.segment(&SegmentInput::new("x", &prob, point)).unwrap().threshold(0.5);
        let chosen = prompt_select(&prob, point, 0.5, DEFAULT_PROMPT_RADIUS);
        prop_assert!(chosen.bits().iter().zip(out.bits()).all(|(&c, &o)| !c || o));
        prop_assert!(out.bits().iter().zip(prob.threshold(0.5).bits()).all(|(&o, &f)| !o || f));
        if chosen.is_empty() {
            prop_assert!(out.is_empty());
        }
    }

    #[test]
    fn model_text_roundtrips(
        orientations in 4usize..12,
        weights in prop::collection::vec(-1e6f64..1e6, 21),
        bias in -50.0f64..50.0,
        trained in any::<bool>(),
    ) {
        let bank = FilterBank { orientations, ..FilterBank::default() };
        let n = stripe_core::detect::n_features(&bank);
        let w: Vec<f64> = weights.iter().cycle().take(n).copied().collect();
        let m = LiteModel::from_parts(bank, w, bias, trained).unwrap();
        prop_assert_eq!(LiteModel::from_text(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn model_parser_never_panics(text in ".{0,400}") {
        let _ = LiteModel::from_text(&text);
    }
}

#[test]
fn model_parser_rejects_edits() {
    let m = LiteModel::new(FilterBank::default());
    let text = m.to_text();
    assert!(LiteModel::from_text(&text.replace("bias 0.0", "bias NaN")).is_err());
    assert!(LiteModel::from_text(&text.replace("weights 17", "weights 16")).is_err());
    assert!(LiteModel::from_text(&format!("{text}0.5\n")).is_err());
    assert!(
        LiteModel::from_text(&text.replacen("stripe-lite-model 1", "stripe-lite-model 2", 1))
            .is_err()
    );
    assert_eq!(
        LiteModel::from_text(&format!("# saved\n{text}\n\n")).unwrap(),
        m
    );
}

#[test]
fn built_in_detectors_find_bright_stripes() {
    let cfg = DatasetConfig {
        width: 96,
        height: 96,
        train: 40,
        val: 0,
        test: 0,
        snr_range: [6.0, 10.0],
        length_range: [24.0, 60.0],
        star_count_range: [0, 4],
        ..DatasetConfig::default()
    };
    let frames = generate_frames(&cfg, 5).unwrap();
    let mf = MatchedFilter::default();
    let (mut hits, mut angles) = (0, 0);
    for g in &frames {
        let l = &g.frame.labels;
        let prob = mf.map(&g.frame.image).unwrap();
        let sel = prompt_select(&prob, l.point, 0.5, DEFAULT_PROMPT_RADIUS);
        if !sel.is_empty() && score_pair(&sel, &l.mask).unwrap().dice > 0.5 {
            hits += 1;
        }
        if let Some(line) = hough_detect(&g.frame.image, &HoughParams::default()).unwrap() {
            if angle_difference(line.direction, g.scene.stripe.angle) < 0.1 {
                angles += 1;
            }
        }
    }
    assert!(hits >= 32, "matched filter: {hits}/40");
    // Hough is the weak baseline; chance level for a 0.1 rad window is ~6%.
    assert!(angles >= 20, "hough: {angles}/40");
}

#[test]
fn untrained_model_refuses_to_segment() {
    let img = GrayImage::filled(64, 64, 0.1);
    let m = LiteModel::new(FilterBank::default());
    assert!(matches!(
        m.segment(&SegmentInput::new("a", &img, Pixel::new(3, 3))),
        Err(DetectError::Untrained)
    ));
}
