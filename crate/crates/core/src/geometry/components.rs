use crate::image::{BinaryMask, Pixel};

/// Default minimum region area accepted by [`connected_area_check`].
pub const DEFAULT_MIN_AREA: usize = 5;

/// A maximal 8-connected set of positive mask pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectedRegion {
    /// Position in the ordering returned by [`connected_components`].
    pub id: usize,
    /// Pixels in scanline order.
    pub pixels: Vec<Pixel>,
}

impl ConnectedRegion {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    /// Mean pixel position.
    pub fn centroid(&self) -> (f64, f64) {
        let n = self.pixels.len() as f64;
        let (su, sv) = self
            .pixels
            .iter()
            .fold((0.0, 0.0), |(a, b), p| (a + p.u as f64, b + p.v as f64));
        (su / n, sv / n)
    }

    pub fn to_mask(&self, width: usize, height: usize) -> BinaryMask {
        BinaryMask::from_pixels(width, height, &self.pixels)
    }
}

/// Labels every positive pixel with its 8-connected component.
///
/// Returns a label raster (`0` = background, `k + 1` = component `k`) in
/// discovery (scanline) order together with the component count.
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, usize) {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let (u, v) = ((idx % w) as isize, (idx / w) as isize);
            for dv in -1..=1isize {
                for du in -1..=1isize {
                    let (nu, nv) = (u + du, v + dv);
                    if nu < 0 || nv < 0 || nu >= w as isize || nv >= h as isize {
                        continue;
                    }
                    let n = nv as usize * w + nu as usize;
                    if mask.bits()[n] && labels[n] == 0 {
                        labels[n] = next;
                        stack.push(n);
                    }
                }
            }
        }
    }
    (labels, next as usize)
}

/// Partitions the positive pixels into maximal 8-connected regions, ordered
/// by descending area and then by the scanline position of their first pixel.
pub fn connected_components(mask: &BinaryMask) -> Vec<ConnectedRegion> {
    let (labels, count) = label_components(mask);
    let w = mask.width();
    let mut groups: Vec<Vec<Pixel>> = vec![Vec::new(); count];
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 {
            groups[l as usize - 1].push(Pixel::new(i % w, i / w));
        }
    }
    // Groups are already in first-pixel scanline order; a stable sort keeps it.
    groups.sort_by_key(|g| std::cmp::Reverse(g.len()));
    groups
        .into_iter()
        .enumerate()
        .map(|(id, pixels)| ConnectedRegion { id, pixels })
        .collect()
}

/// Accepts a mask iff it holds exactly one region of at least `min_area`
/// pixels.
pub fn connected_area_check(mask: &BinaryMask, min_area: usize) -> bool {
    connected_components(mask)
        .iter()
        .filter(|r| r.area() >= min_area)
        .count()
        == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: usize, h: usize, px: &[(usize, usize)]) -> BinaryMask {
        let px: Vec<_> = px.iter().map(|&(u, v)| Pixel::new(u, v)).collect();
        BinaryMask::from_pixels(w, h, &px)
    }

    #[test]
    fn empty_mask_has_no_regions() {
        assert!(connected_components(&BinaryMask::new(5, 5)).is_empty());
        assert!(!connected_area_check(&BinaryMask::new(5, 5), 1));
    }

    #[test]
    fn diagonal_neighbours_join() {
        let regions = connected_components(&mask(3, 3, &[(0, 0), (1, 1)]));
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].area(), 2);
    }

    #[test]
    fn ordered_by_area_then_scanline() {
        let m = mask(8, 4, &[(0, 0), (5, 0), (6, 0), (0, 3), (1, 3), (7, 3)]);
        let regions = connected_components(&m);
        let firsts: Vec<_> = regions.iter().map(|r| (r.area(), r.pixels[0])).collect();
        assert_eq!(
            firsts,
            vec![
                (2, Pixel::new(5, 0)),
                (2, Pixel::new(0, 3)),
                (1, Pixel::new(0, 0)),
                (1, Pixel::new(7, 3)),
            ]
        );
        assert!(regions.iter().enumerate().all(|(i, r)| r.id == i));
    }

    #[test]
    fn area_check_semantics() {
        let blob: Vec<(usize, usize)> = (0..8).flat_map(|u| (0..5).map(move |v| (u, v))).collect();
        assert!(connected_area_check(&mask(20, 20, &blob), DEFAULT_MIN_AREA));

        let mut two = blob.clone();
        two.extend((12..18).map(|u| (u, 15)));
        assert!(!connected_area_check(&mask(20, 20, &two), DEFAULT_MIN_AREA));

        assert!(!connected_area_check(&mask(20, 20, &[(3, 3), (4, 3)]), 5));

        // Sub-threshold specks do not count as objects.
        let mut speck = blob;
        speck.push((15, 15));
        assert!(connected_area_check(
            &mask(20, 20, &speck),
            DEFAULT_MIN_AREA
        ));
    }
}
