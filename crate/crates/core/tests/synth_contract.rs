//! Dataset contract: SNR calibration, label invariants, angle uniformity,
//! on-disk formats and determinism.

use std::path::Path;

use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use stripe_core::geometry::mass_center;
use stripe_core::io::{
    decode_mask_png, decode_pgm, decode_png_gray, encode_gray8_png, encode_mask_png, encode_pgm16,
};
use stripe_core::synth::{
    compose_and_label, generate_frame, generate_frames, sample_scene, write_dataset, DatasetConfig,
    Family, Glare, LabelRecord, Manifest, NoiseParams, Profile, SceneSpec, Split, StrayLight,
    StripeParams,
};
use stripe_core::{BinaryMask, GrayImage};

/// Background ring by brute force: distance to every mask pixel, not just
/// the boundary.
fn oracle_ring(mask: &BinaryMask) -> Vec<usize> {
    let (w, h) = mask.dims();
    let on = mask.pixels();
    (0..w * h)
        .filter(|&i| {
            let (u, v) = (i % w, i / w);
            if mask.get(u, v) {
                return false;
            }
            let d2 = on
                .iter()
                .map(|p| (p.u as f64 - u as f64).powi(2) + (p.v as f64 - v as f64).powi(2))
                .fold(f64::INFINITY, f64::min);
            d2 > 25.0 && d2 <= 225.0
        })
        .collect()
}

fn oracle_snr(img: &GrayImage, mask: &BinaryMask) -> f64 {
    let ring = oracle_ring(mask);
    let bg: Vec<f64> = ring.iter().map(|&i| img.data()[i]).collect();
    let mu_bg = bg.iter().sum::<f64>() / bg.len() as f64;
    let sd = (bg.iter().map(|x| (x - mu_bg).powi(2)).sum::<f64>() / bg.len() as f64).sqrt();
    let target: Vec<f64> = mask.pixels().iter().map(|p| img.get(p.u, p.v)).collect();
    (target.iter().sum::<f64>() / target.len() as f64 - mu_bg) / sd
}

fn flat_scene(seed: u64, target_snr: f64) -> SceneSpec {
    let t = (seed % 97) as f64 / 97.0;
    SceneSpec {
        width: 80,
        height: 80,
        stripe: StripeParams {
            center: (40.0 + 3.0 * t, 39.5),
            length: 24.0 + 12.0 * t,
            width_sigma: 1.2 + 0.5 * t,
            angle: t * std::f64::consts::PI,
            peak: 0.5,
            profile: Profile::ALL[seed as usize % 3],
        },
        background_level: 0.08,
        stray_light: StrayLight::Sun(Glare {
            amplitude: 0.0,
            direction: 0.0,
            falloff: 50.0,
        }),
        stars: vec![],
        cosmic_rays: vec![],
        noise: NoiseParams {
            read_noise_sigma: 0.02,
            shot_noise_gain: 0.001,
            hot_pixel_rate: 0.0,
        },
        target_snr,
        seed,
    }
}

#[test]
fn snr_calibration_matches_an_independent_measurement() {
    for seed in 0..24u64 {
        let target = [2.0, 5.0, 8.0][seed as usize % 3];
        let frame = compose_and_label(&flat_scene(seed, target)).unwrap();
        let measured = oracle_snr(&frame.image, &frame.labels.mask);
        assert!(
            (measured - frame.snr.value).abs() < 1e-9,
            "seed {seed}: {measured} vs {}",
            frame.snr.value
        );
        assert!(
            (measured / target - 1.0).abs() <= 0.10,
            "seed {seed}: {measured} for target {target}"
        );
    }
}

#[test]
fn sampled_angles_are_uniform() {
    let cfg = DatasetConfig::default();
    const BINS: usize = 18;
    let n = 1000;
    let mut counts = [0usize; BINS];
    for i in 0..n {
        let a = sample_scene(&cfg, Family::ALL[i % 4], i as u64 * 7919 + 1)
            .stripe
            .angle;
        counts[((a / std::f64::consts::PI) * BINS as f64) as usize % BINS] += 1;
    }
    let expected = n as f64 / BINS as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let p = 1.0 - ChiSquared::new((BINS - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2:.2}, p {p:.4}");
}

fn small() -> DatasetConfig {
    DatasetConfig {
        width: 72,
        height: 72,
        train: 5,
        val: 2,
        test: 3,
        length_range: [12.0, 36.0],
        star_count_range: [2, 8],
        ..DatasetConfig::default()
    }
}

#[test]
fn generated_labels_hold_their_invariants() {
    let cfg = small();
    let frames = generate_frames(&cfg, 11).unwrap();
    assert_eq!(frames.len(), 10);
    for (g, (split, index)) in frames.iter().zip(stripe_core::synth::frame_jobs(&cfg)) {
        let l = &g.frame.labels;
        l.validate().unwrap();
        assert_eq!(Some(l.point), mass_center(&l.mask));
        assert_eq!(Some(l.bbox), l.mask.bbox());
        assert_eq!(
            (g.split, g.id.clone()),
            (split, format!("{}_{index:04}", split.as_str()))
        );
        assert!(g.frame.image.data().iter().all(|x| (0.0..=1.0).contains(x)));
        let single = generate_frame(&cfg, 11, split, index).unwrap();
        assert_eq!(single.frame.image, g.frame.image);
    }
    // Families cycle through the configured list.
    let fams: Vec<Family> = frames
        .iter()
        .filter(|g| g.split == Split::Train)
        .map(|g| g.family)
        .collect();
    assert_eq!(
        fams,
        vec![
            Family::Sun,
            Family::Moon,
            Family::Earth,
            Family::Mixed,
            Family::Sun
        ]
    );
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(root).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn written_dataset_is_deterministic_and_reads_back() {
    let cfg = small();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let frames = generate_frames(&cfg, 3).unwrap();
    let manifest = write_dataset(a.path(), &cfg, 3, &frames).unwrap();
    write_dataset(b.path(), &cfg, 3, &generate_frames(&cfg, 3).unwrap()).unwrap();
    assert_eq!(tree_bytes(a.path()), tree_bytes(b.path()));

    let reread =
        Manifest::from_json(&std::fs::read(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(reread, manifest);
    assert_eq!(
        (reread.train.len(), reread.val.len(), reread.test.len()),
        (5, 2, 3)
    );
    for (entry, g) in reread
        .train
        .iter()
        .chain(&reread.val)
        .chain(&reread.test)
        .zip(&frames)
    {
        let img = decode_pgm(&std::fs::read(a.path().join(&entry.image)).unwrap()).unwrap();
        assert!(img
            .data()
            .iter()
            .zip(g.frame.image.data())
            .all(|(x, y)| (x - y).abs() <= 0.5 / 65535.0 + 1e-12));
        let mask = decode_mask_png(&std::fs::read(a.path().join(&entry.mask)).unwrap()).unwrap();
        assert_eq!(mask, g.frame.labels.mask);
        let rec =
            LabelRecord::from_json(&std::fs::read(a.path().join(&entry.label)).unwrap()).unwrap();
        assert_eq!(rec.point, [g.frame.labels.point.u, g.frame.labels.point.v]);
        assert_eq!(rec.stray_light, g.family);
    }
    let other = tempfile::tempdir().unwrap();
    write_dataset(other.path(), &cfg, 4, &generate_frames(&cfg, 4).unwrap()).unwrap();
    assert_ne!(tree_bytes(a.path()), tree_bytes(other.path()));
}

#[test]
fn label_records_reject_bad_fields() {
    let ok = br#"{"point":[3,4],"bbox":[1,2,5,6],"mask":"a_mask.png","snr":3.0,"angle":0.5,"length":20.0,"stray_light":"moon"}"#;
    assert_eq!(
        LabelRecord::from_json(ok).unwrap().stray_light,
        Family::Moon
    );
    let inverted = br#"{"point":[3,4],"bbox":[5,2,1,6],"mask":"a.png","snr":3.0,"angle":0.5,"length":20.0,"stray_light":"sun"}"#;
    assert!(LabelRecord::from_json(inverted).is_err());
    let escape = br#"{"point":[3,4],"bbox":[1,2,5,6],"mask":"../x.png","snr":3.0,"angle":0.5,"length":20.0,"stray_light":"sun"}"#;
    assert!(LabelRecord::from_json(escape).is_err());
    let family = br#"{"point":[3,4],"bbox":[1,2,5,6],"mask":"a.png","snr":3.0,"angle":0.5,"length":20.0,"stray_light":"mars"}"#;
    assert!(LabelRecord::from_json(family).is_err());
}

#[test]
fn dataset_config_toml() {
    let cfg = DatasetConfig::from_toml_str("train = 7\nsnr_range = [2.0, 4.0]\n").unwrap();
    assert_eq!((cfg.train, cfg.val, cfg.snr_range), (7, 100, [2.0, 4.0]));
    assert!(DatasetConfig::from_toml_str("trian = 7").is_err());
    let too_long = DatasetConfig {
        width: 64,
        height: 64,
        ..DatasetConfig::default()
    };
    assert!(too_long.validate().is_err());
    let empty = DatasetConfig {
        train: 0,
        val: 0,
        test: 0,
        ..DatasetConfig::default()
    };
    assert!(empty.validate().is_err());
    assert!(DatasetConfig::default().validate().is_ok());
    assert_eq!(DatasetConfig::default().total(), 1500);
}

fn image_strategy() -> impl Strategy<Value = GrayImage> {
    (1usize..20, 1usize..20).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0f64..=1.0, w * h).prop_map(move |d| GrayImage::from_vec(w, h, d))
    })
}

proptest! {
    #[test]
    fn pgm_roundtrip_within_quantisation(img in image_strategy()) {
        let back = decode_pgm(&encode_pgm16(&img)).unwrap();
        prop_assert_eq!(back.dims(), img.dims());
        for (x, y) in back.data().iter().zip(img.data()) {
            prop_assert!((x - y).abs() <= 0.5 / 65535.0 + 1e-12);
        }
        // A second pass is lossless.
        prop_assert_eq!(decode_pgm(&encode_pgm16(&back)).unwrap(), back);
    }

    #[test]
    fn png_roundtrips(img in image_strategy()) {
        let back = decode_png_gray(&encode_gray8_png(&img).unwrap()).unwrap();
        for (x, y) in back.data().iter().zip(img.data()) {
            prop_assert!((x - y).abs() <= 0.5 / 255.0 + 1e-12);
        }
        let mask = img.threshold(0.5);
        prop_assert_eq!(decode_mask_png(&encode_mask_png(&mask).unwrap()).unwrap(), mask);
    }

    #[test]
    fn decoders_reject_garbage_without_panicking(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = decode_pgm(&bytes);
        let _ = decode_png_gray(&bytes);
        let _ = decode_mask_png(&bytes);
        let _ = LabelRecord::from_json(&bytes);
        let _ = Manifest::from_json(&bytes);
    }

    #[test]
    fn pgm_header_variants(w in 1usize..9, h in 1usize..9, maxval in 1u32..=65535, comment in any::<bool>()) {
        let header = if comment {
            format!("P5 # c\n{w}\n# another\n{h} {maxval}\n")
        } else {
            format!("P5 {w} {h} {maxval}\n")
        };
        let mut bytes = header.into_bytes();
        let wide = maxval > 255;
        for i in 0..w * h {
            let s = (i as u32 * 7919) % (maxval + 1);
            if wide {
                bytes.extend_from_slice(&(s as u16).to_be_bytes());
            } else {
                bytes.push(s as u8);
            }
        }
        let img = decode_pgm(&bytes).unwrap();
        prop_assert_eq!(img.dims(), (w, h));
        for (i, &x) in img.data().iter().enumerate() {
            let expected = ((i as u32 * 7919) % (maxval + 1)) as f64 / maxval as f64;
            prop_assert!((x - expected).abs() < 1e-12);
        }
        // Truncated data is an error.
        bytes.pop();
        prop_assert!(decode_pgm(&bytes).is_err());
    }
}
