use super::components::connected_components;
use crate::image::{BinaryMask, Pixel};

/// Integer-rounded centroid of the positive pixels.
///
/// When the mask is a single connected region and the rounded centroid is
/// not one of its pixels (a concave region), the nearest region pixel is
/// returned instead, first in scanline order on ties. `None` for an empty
/// mask.
pub fn mass_center(mask: &BinaryMask) -> Option<Pixel> {
    let pixels = mask.pixels();
    if pixels.is_empty() {
        return None;
    }
    let n = pixels.len() as f64;
    let (su, sv) = pixels
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p.u as f64, b + p.v as f64));
    let (cu, cv) = (su / n, sv / n);
    let rounded = Pixel::new(cu.round() as usize, cv.round() as usize);
    if mask.get(rounded.u, rounded.v) || connected_components(mask).len() != 1 {
        return Some(rounded);
    }
    let mut best = pixels[0];
    let mut best_d = f64::INFINITY;
    for p in pixels {
        let d = (p.u as f64 - cu).powi(2) + (p.v as f64 - cv).powi(2);
        if d < best_d {
            best_d = d;
            best = p;
        }
    }
    Some(best)
}
