use std::f64::consts::PI;

use super::components::ConnectedRegion;
use crate::image::Pixel;

/// Regions up to this area are searched exhaustively over all pixel pairs.
pub const EXHAUSTIVE_MAX_AREA: usize = 512;

/// The longest straight line inside a region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment {
    pub p1: Pixel,
    pub p2: Pixel,
    /// Direction of `p2 - p1` folded into `[0, pi)`.
    pub angle: f64,
    /// Set for single-pixel regions, whose angle is defined as 0.
    pub degenerate: bool,
}

impl LineSegment {
    pub fn length(&self) -> f64 {
        self.p1.dist2(&self.p2).sqrt()
    }
}

/// Folds any direction angle into `[0, pi)`.
pub fn fold_angle(theta: f64) -> f64 {
    let a = theta.rem_euclid(PI);
    // rem_euclid can round up to exactly PI for tiny negative inputs.
    if a >= PI {
        0.0
    } else {
        a
    }
}

/// Undirected angular difference between two line directions, in `[0, pi/2]`.
pub fn angle_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(PI);
    d.min(PI - d)
}

pub fn direction(p1: Pixel, p2: Pixel) -> f64 {
    let du = p2.u as f64 - p1.u as f64;
    let dv = p2.v as f64 - p1.v as f64;
    fold_angle(dv.atan2(du))
}

fn segment(p1: Pixel, p2: Pixel) -> LineSegment {
    LineSegment {
        p1,
        p2,
        angle: direction(p1, p2),
        degenerate: p1 == p2,
    }
}

fn exhaustive_pair(points: &[Pixel]) -> (Pixel, Pixel) {
    let mut best = (points[0], points[0]);
    let mut best_d = -1.0;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let d = a.dist2(b);
            if d > best_d {
                best_d = d;
                best = (*a, *b);
            }
        }
    }
    best
}

fn cross(o: Pixel, a: Pixel, b: Pixel) -> i64 {
    let (ox, oy) = (o.u as i64, o.v as i64);
    (a.u as i64 - ox) * (b.v as i64 - oy) - (a.v as i64 - oy) * (b.u as i64 - ox)
}

/// Andrew's monotone chain; returns hull vertices without collinear points.
fn convex_hull(points: &[Pixel]) -> Vec<Pixel> {
    let mut pts: Vec<Pixel> = points.to_vec();
    pts.sort_by_key(|p| (p.u, p.v));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Pixel> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Iterated farthest-point refinement starting from the centroid. Gives a
/// lower bound on the diameter and a good pair for elongated regions.
pub fn farthest_point_refinement(points: &[Pixel]) -> (Pixel, Pixel) {
    let n = points.len() as f64;
    let (cu, cv) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p.u as f64, b + p.v as f64));
    let (cu, cv) = (cu / n, cv / n);
    let farthest_from = |qu: f64, qv: f64| {
        let mut best = points[0];
        let mut best_d = -1.0;
        for p in points {
            let d = (p.u as f64 - qu).powi(2) + (p.v as f64 - qv).powi(2);
            if d > best_d {
                best_d = d;
                best = *p;
            }
        }
        best
    };
    let mut a = farthest_from(cu, cv);
    let mut b = farthest_from(a.u as f64, a.v as f64);
    let mut d = a.dist2(&b);
    loop {
        let c = farthest_from(b.u as f64, b.v as f64);
        let dc = b.dist2(&c);
        if dc <= d {
            break;
        }
        a = b;
        b = c;
        d = dc;
    }
    (a, b)
}

/// Endpoints of the region's longest straight line (its diameter).
///
/// Regions of at most [`EXHAUSTIVE_MAX_AREA`] pixels are searched over every
/// pair in scanline order. Larger regions start from the farthest-point
/// refinement and then close the gap by scanning the convex hull, which is
/// exact because a diameter is always realised by two hull vertices.
pub fn farthest_pair(region: &ConnectedRegion) -> LineSegment {
    let pts = &region.pixels;
    assert!(!pts.is_empty(), "farthest_pair on an empty region");
    if pts.len() == 1 {
        return segment(pts[0], pts[0]);
    }
    if pts.len() <= EXHAUSTIVE_MAX_AREA {
        let (a, b) = exhaustive_pair(pts);
        return segment(a, b);
    }
    let (mut a, mut b) = farthest_point_refinement(pts);
    let hull = convex_hull(pts);
    let (ha, hb) = exhaustive_pair(&hull);
    if ha.dist2(&hb) > a.dist2(&b) {
        a = ha;
        b = hb;
    }
    // Report endpoints in scanline order, matching the exhaustive path.
    if (b.v, b.u) < (a.v, a.u) {
        std::mem::swap(&mut a, &mut b);
    }
    segment(a, b)
}
