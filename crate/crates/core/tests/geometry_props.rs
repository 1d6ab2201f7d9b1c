//! Connected regions and longest lines against brute-force oracles.

use std::collections::{BTreeSet, VecDeque};
use std::f64::consts::PI;

use proptest::prelude::*;
use stripe_core::geometry::{
    angle_difference, connected_area_check, connected_components, farthest_pair, fold_angle,
    mass_center,
};
use stripe_core::{BinaryMask, Pixel};

/// Breadth-first flood fill with 8-neighbourhood; regions as pixel sets.
fn flood_fill_regions(mask: &BinaryMask) -> BTreeSet<BTreeSet<(usize, usize)>> {
    let (w, h) = mask.dims();
    let mut seen = vec![false; w * h];
    let mut out = BTreeSet::new();
    for v in 0..h {
        for u in 0..w {
            if !mask.get(u, v) || seen[v * w + u] {
                continue;
            }
            let mut region = BTreeSet::new();
            let mut queue = VecDeque::from([(u, v)]);
            seen[v * w + u] = true;
            while let Some((x, y)) = queue.pop_front() {
                region.insert((x, y));
                for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        if mask.get(nx, ny) && !seen[ny * w + nx] {
                            seen[ny * w + nx] = true;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
            out.insert(region);
        }
    }
    out
}

fn brute_diameter2(pixels: &[Pixel]) -> f64 {
    let mut best: f64 = 0.0;
    for a in pixels {
        for b in pixels {
            best = best.max(a.dist2(b));
        }
    }
    best
}

fn mask_strategy(w: usize, h: usize) -> impl Strategy<Value = BinaryMask> {
    (prop::collection::vec(any::<bool>(), w * h), 0.0f64..0.7).prop_map(move |(bits, density)| {
        // Thin the raw coin flips so sparse and dense masks both appear.
        let keep = (density * 16.0) as usize;
        let bits = bits
            .iter()
            .enumerate()
            .map(|(i, &b)| b && (i * 7 + 3) % 16 <= keep)
            .collect();
        BinaryMask::from_vec(w, h, bits)
    })
}

/// A random thick polyline: long, thin regions like stripe labels.
fn stroke_strategy() -> impl Strategy<Value = BinaryMask> {
    (
        prop::collection::vec((0usize..96, 0usize..96), 2..5),
        0usize..3,
    )
        .prop_map(|(knots, thick)| {
            let mut m = BinaryMask::new(96, 96);
            for pair in knots.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                let steps = a.0.abs_diff(b.0).max(a.1.abs_diff(b.1)).max(1);
                for s in 0..=steps {
                    let t = s as f64 / steps as f64;
                    let u = (a.0 as f64 + t * (b.0 as f64 - a.0 as f64)).round() as usize;
                    let v = (a.1 as f64 + t * (b.1 as f64 - a.1 as f64)).round() as usize;
                    for dv in 0..=thick {
                        for du in 0..=thick {
                            m.set((u + du).min(95), (v + dv).min(95), true);
                        }
                    }
                }
            }
            m
        })
}

proptest! {
    #[test]
    fn components_match_flood_fill(mask in mask_strategy(40, 40)) {
        let regions = connected_components(&mask);
        let ours: BTreeSet<BTreeSet<(usize, usize)>> = regions
            .iter()
            .map(|r| r.pixels.iter().map(|p| (p.u, p.v)).collect())
            .collect();
        prop_assert_eq!(ours, flood_fill_regions(&mask));
        // Largest first.
        prop_assert!(regions.windows(2).all(|w| w[0].area() >= w[1].area()));
        prop_assert_eq!(regions.iter().map(|r| r.area()).sum::<usize>(), mask.count());
    }

    #[test]
    fn area_check_counts_large_regions(mask in mask_strategy(24, 24), min_area in 1usize..12) {
        let large = flood_fill_regions(&mask).iter().filter(|r| r.len() >= min_area).count();
        prop_assert_eq!(connected_area_check(&mask, min_area), large == 1);
    }

    #[test]
    fn farthest_pair_is_the_diameter(mask in stroke_strategy()) {
        for region in connected_components(&mask) {
            let seg = farthest_pair(&region);
            prop_assert_eq!(seg.p1.dist2(&seg.p2), brute_diameter2(&region.pixels));
            prop_assert!(region.pixels.contains(&seg.p1) && region.pixels.contains(&seg.p2));
            prop_assert!((0.0..PI).contains(&seg.angle));
        }
    }

    #[test]
    fn mass_center_of_single_region_lies_inside(mask in stroke_strategy()) {
        let largest = connected_components(&mask).into_iter().next().unwrap();
        let single = largest.to_mask(96, 96);
        let c = mass_center(&single).unwrap();
        prop_assert!(single.get(c.u, c.v));
    }

    #[test]
    fn fold_angle_range_and_periodicity(theta in -50.0f64..50.0) {
        let a = fold_angle(theta);
        prop_assert!((0.0..PI).contains(&a));
        prop_assert!(angle_difference(a, theta) < 1e-9);
        prop_assert!(angle_difference(theta, theta + PI) < 1e-9);
    }
}

#[test]
fn large_regions_use_the_hull_path_exactly() {
    // Filled discs and rectangles exceed the exhaustive-search cutoff.
    let mut disc = BinaryMask::new(64, 64);
    for v in 0..64 {
        for u in 0..64 {
            if (u as f64 - 31.3).powi(2) + (v as f64 - 30.8).powi(2) <= 400.0 {
                disc.set(u, v, true);
            }
        }
    }
    let mut rect = BinaryMask::new(64, 64);
    for v in 10..40 {
        for u in 5..60 {
            rect.set(u, v, true);
        }
    }
    for m in [disc, rect] {
        let r = connected_components(&m).into_iter().next().unwrap();
        assert!(r.area() > 512);
        let s = farthest_pair(&r);
        assert_eq!(s.p1.dist2(&s.p2), brute_diameter2(&r.pixels));
    }
}

#[test]
fn empty_and_two_blob_masks_fail_the_area_check() {
    let empty = BinaryMask::new(10, 10);
    assert!(!connected_area_check(&empty, 1));
    let mut two = BinaryMask::new(10, 10);
    for u in 0..3 {
        two.set(u, 0, true);
        two.set(u + 6, 8, true);
    }
    assert!(!connected_area_check(&two, 3));
    // The smaller blob drops out below the threshold.
    two.set(3, 0, true);
    assert!(connected_area_check(&two, 4));
}
