//! Detection overlays: true positives red, misses blue, false alarms yellow.

use stripe_core::image::{check_shape, BinaryMask, GrayImage, ShapeMismatch};

pub const TRUE_POSITIVE: [u8; 3] = [255, 0, 0];
pub const MISS: [u8; 3] = [0, 0, 255];
pub const FALSE_ALARM: [u8; 3] = [255, 255, 0];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct OverlayCounts {
    pub true_positive: usize,
    pub miss: usize,
    pub false_alarm: usize,
}

/// RGB pixels, scanline order. The frame is min-max stretched to gray under
/// the coloured pixels. A missing prediction counts as empty.
pub fn render_overlay(
    image: &GrayImage,
    label: &BinaryMask,
    pred: Option<&BinaryMask>,
) -> Result<(Vec<[u8; 3]>, OverlayCounts), ShapeMismatch> {
    check_shape(label.dims(), image.dims())?;
    if let Some(p) = pred {
        check_shape(p.dims(), image.dims())?;
    }
    let (lo, hi) = (image.min_value(), image.max_value());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut counts = OverlayCounts::default();
    let rgb = image
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let g = label.bits()[i];
            let p = pred.is_some_and(|m| m.bits()[i]);
            match (g, p) {
                (true, true) => {
                    counts.true_positive += 1;
                    TRUE_POSITIVE
                }
                (true, false) => {
                    counts.miss += 1;
                    MISS
                }
                (false, true) => {
                    counts.false_alarm += 1;
                    FALSE_ALARM
                }
                (false, false) => {
                    let level = (((x - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8;
                    [level; 3]
                }
            }
        })
        .collect();
    Ok((rgb, counts))
}
