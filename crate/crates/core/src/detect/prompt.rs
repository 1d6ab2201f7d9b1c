use super::{
    Capabilities, DetectError, FitSample, LiteModel, SegmentInput, Segmenter, TrainConfig,
    PROB_FLOOR,
};
use crate::geometry::{connected_components, ConnectedRegion};
use crate::image::{BinaryMask, GrayImage, Pixel};

/// Fallback search radius when the prompt pixel itself is negative.
pub const DEFAULT_PROMPT_RADIUS: f64 = 10.0;

fn pick_region(
    regions: &[ConnectedRegion],
    point: Pixel,
    radius: f64,
) -> Option<&ConnectedRegion> {
    if let Some(r) = regions.iter().find(|r| r.pixels.contains(&point)) {
        return Some(r);
    }
    let r2 = radius * radius;
    let mut best: Option<(&ConnectedRegion, f64)> = None;
    for region in regions {
        let d = region
            .pixels
            .iter()
            .map(|p| p.dist2(&point))
            .fold(f64::INFINITY, f64::min);
        // Regions come largest first, so ties go to the larger one.
        if d <= r2 && best.is_none_or(|(_, bd)| d < bd) {
            best = Some((region, d));
        }
    }
    best.map(|(r, _)| r)
}

/// Binarises `prob` at `threshold` (strictly above) and keeps the single
/// connected region containing `point`, or failing that the nearest region
/// within `radius`. Returns an empty mask when nothing qualifies or the
/// point lies outside the frame.
pub fn prompt_select(prob: &GrayImage, point: Pixel, threshold: f64, radius: f64) -> BinaryMask {
    let (w, h) = prob.dims();
    if point.u >= w || point.v >= h {
        return BinaryMask::new(w, h);
    }
    let regions = connected_components(&prob.threshold(threshold));
    match pick_region(&regions, point, radius) {
        Some(r) => r.to_mask(w, h),
        None => BinaryMask::new(w, h),
    }
}

/// Point-promptable wrapper around an unprompted segmenter.
///
/// Keeps the prompted region plus every other region that comes within
/// `context` pixels (Chebyshev) of it, and suppresses the rest. Clutter
/// right next to the target therefore survives, which lets a downstream
/// connected-area check reject ambiguous frames.
#[derive(Debug, Clone)]
pub struct LocalPrompted<S> {
    pub inner: S,
    pub threshold: f64,
    pub radius: f64,
    pub context: usize,
}

impl<S> LocalPrompted<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            threshold: 0.5,
            radius: DEFAULT_PROMPT_RADIUS,
            context: 3,
        }
    }
}

impl<S: Segmenter> Segmenter for LocalPrompted<S> {
    fn name(&self) -> String {
        format!("prompted({})", self.inner.name())
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            prompted: true,
            trainable: self.inner.capabilities().trainable,
        }
    }

    fn segment(&self, input: &SegmentInput) -> Result<GrayImage, DetectError> {
        super::check_point(input.image, input.point)?;
        let mut map = self.inner.segment(input)?;
        let (w, h) = map.dims();
        let regions = connected_components(&map.threshold(self.threshold));
        let Some(chosen) = pick_region(&regions, input.point, self.radius) else {
            return Ok(map.map(|p| p.min(self.threshold)));
        };
        // Chebyshev neighbourhood of the chosen region.
        let c = self.context as isize;
        let mut near = BinaryMask::new(w, h);
        for p in &chosen.pixels {
            for dv in -c..=c {
                for du in -c..=c {
                    let (u, v) = (p.u as isize + du, p.v as isize + dv);
                    if u >= 0 && v >= 0 && (u as usize) < w && (v as usize) < h {
                        near.set(u as usize, v as usize, true);
                    }
                }
            }
        }
        for region in &regions {
            if !region.pixels.iter().any(|p| near.get(p.u, p.v)) {
                for p in &region.pixels {
                    map.set(p.u, p.v, PROB_FLOOR);
                }
            }
        }
        Ok(map)
    }

    fn fit(&mut self, samples: &[FitSample], cfg: &TrainConfig) -> Result<Vec<f64>, DetectError> {
        self.inner.fit(samples, cfg)
    }

    fn model(&self) -> Option<&LiteModel> {
        self.inner.model()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_with(w: usize, h: usize, on: &[(usize, usize)]) -> GrayImage {
        let mut m = GrayImage::filled(w, h, 0.1);
        for &(u, v) in on {
            m.set(u, v, 0.9);
        }
        m
    }

    fn rect(u0: usize, v0: usize, u1: usize, v1: usize) -> Vec<(usize, usize)> {
        (v0..=v1)
            .flat_map(|v| (u0..=u1).map(move |u| (u, v)))
            .collect()
    }

    #[test]
    fn point_inside_sole_region() {
        let px = rect(5, 5, 12, 7);
        let m = map_with(30, 30, &px);
        let sel = prompt_select(&m, Pixel::new(8, 6), 0.5, 10.0);
        assert_eq!(sel, m.threshold(0.5));
    }

    #[test]
    fn point_in_smaller_region_keeps_it() {
        let mut px = rect(2, 2, 20, 6);
        px.extend(rect(25, 20, 27, 22));
        let m = map_with(32, 32, &px);
        let sel = prompt_select(&m, Pixel::new(26, 21), 0.5, 10.0);
        assert_eq!(sel.count(), 9);
        assert!(sel.get(26, 21) && !sel.get(10, 4));
    }

    #[test]
    fn near_miss_takes_nearest_region() {
        let mut px = rect(2, 2, 6, 4);
        px.extend(rect(20, 10, 24, 12));
        let m = map_with(40, 30, &px);
        // 3 px right of the second region.
        let sel = prompt_select(&m, Pixel::new(27, 11), 0.5, 10.0);
        assert_eq!(sel.count(), 15);
        assert!(sel.get(24, 11));
        assert!(prompt_select(&m, Pixel::new(38, 28), 0.5, 10.0).is_empty());
    }

    #[test]
    fn outside_point_gives_empty() {
        let m = map_with(10, 10, &rect(1, 1, 3, 3));
        assert!(prompt_select(&m, Pixel::new(10, 3), 0.5, 10.0).is_empty());
    }

    struct Fixed(GrayImage);

    impl Segmenter for Fixed {
        fn name(&self) -> String {
            "fixed".into()
        }
        fn capabilities(&self) -> Capabilities {
            Capabilities {
                prompted: false,
                trainable: false,
            }
        }
        fn segment(&self, _: &SegmentInput) -> Result<GrayImage, DetectError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn local_prompt_keeps_nearby_clutter_only() {
        let mut px = rect(10, 10, 20, 11);
        px.extend(rect(23, 10, 24, 11)); // close clutter
        px.extend(rect(40, 40, 44, 44)); // far away
        let m = map_with(50, 50, &px);
        let seg = LocalPrompted::new(Fixed(m));
        let img = GrayImage::new(50, 50);
        let out = seg
            .segment(&SegmentInput::new("x", &img, Pixel::new(15, 10)))
            .unwrap();
        let mask = out.threshold(0.5);
        assert!(mask.get(23, 10) && mask.get(15, 11) && !mask.get(42, 42));
        assert_eq!(connected_components(&mask).len(), 2);
    }
}
