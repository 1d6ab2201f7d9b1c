//! Pixel-level (Dice, mIoU) and target-level (Pd, Fa) scoring.
//!
//! A target counts as detected when its IoU with the ground truth is
//! strictly greater than one half. False alarms are predicted-positive pixels
//! outside the ground-truth target, pooled over the evaluated set and divided
//! by the pooled pixel count.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::image::{check_shape, BinaryMask, ShapeMismatch};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error(transparent)]
    Shape(#[from] ShapeMismatch),
    #[error("ground truth mask has no target pixels")]
    EmptyTarget,
    #[error("cannot aggregate an empty list of scores")]
    NoScores,
}

/// Overlap counts and derived scores for one prediction/ground-truth pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub dice: f64,
    pub iou: f64,
    pub detected: bool,
    pub false_alarm_pixels: usize,
    pub total_pixels: usize,
    pub intersection: usize,
    pub pred_pixels: usize,
    pub gt_pixels: usize,
}

pub fn score_pair(pred: &BinaryMask, gt: &BinaryMask) -> Result<PairScores, MetricsError> {
    check_shape(pred.dims(), gt.dims())?;
    let (mut inter, mut np, mut ng) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        inter += (p && g) as usize;
        np += p as usize;
        ng += g as usize;
    }
    if ng == 0 {
        return Err(MetricsError::EmptyTarget);
    }
    let union = np + ng - inter;
    Ok(PairScores {
        dice: 2.0 * inter as f64 / (np + ng) as f64,
        iou: inter as f64 / union as f64,
        // iou > 1/2 decided on integers so the boundary is exact.
        detected: 2 * inter > union,
        false_alarm_pixels: np - inter,
        total_pixels: gt.bits().len(),
        intersection: inter,
        pred_pixels: np,
        gt_pixels: ng,
    })
}

/// Aggregate metrics in the reporting units: percentages for Dice, mIoU and
/// Pd, and a raw pixel ratio for Fa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub images: usize,
    pub mean_dice: f64,
    pub miou: f64,
    pub pd: f64,
    pub fa: f64,
}

impl Summary {
    /// False-alarm rate in units of 1e-3, as usually tabulated.
    pub fn fa_e3(&self) -> f64 {
        self.fa * 1e3
    }
}

/// Summation runs in a canonical order so the result does not depend on the
/// order of `scores`.
pub fn aggregate(scores: &[PairScores]) -> Result<Summary, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::NoScores);
    }
    let mut sorted: Vec<&PairScores> = scores.iter().collect();
    sorted.sort_by(|a, b| {
        (a.intersection, a.pred_pixels, a.gt_pixels, a.total_pixels).cmp(&(
            b.intersection,
            b.pred_pixels,
            b.gt_pixels,
            b.total_pixels,
        ))
    });
    let n = sorted.len() as f64;
    let dice: f64 = sorted.iter().map(|s| s.dice).sum();
    let iou: f64 = sorted.iter().map(|s| s.iou).sum();
    let detected = sorted.iter().filter(|s| s.detected).count();
    let fa_px: usize = sorted.iter().map(|s| s.false_alarm_pixels).sum();
    let total: usize = sorted.iter().map(|s| s.total_pixels).sum();
    Ok(Summary {
        images: sorted.len(),
        mean_dice: 100.0 * dice / n,
        miou: 100.0 * iou / n,
        pd: 100.0 * detected as f64 / n,
        fa: fa_px as f64 / total as f64,
    })
}

/// Per-image scores tagged with an identifier and an optional group name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredImage {
    pub id: String,
    pub group: Option<String>,
    pub scores: PairScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub overall: Summary,
    pub groups: BTreeMap<String, Summary>,
    /// Frames skipped because their ground truth was empty.
    pub skipped_empty_gt: usize,
    pub per_image: Vec<ScoredImage>,
}

impl MetricReport {
    pub fn build(
        mut per_image: Vec<ScoredImage>,
        skipped_empty_gt: usize,
    ) -> Result<Self, MetricsError> {
        per_image.sort_by(|a, b| a.id.cmp(&b.id));
        let all: Vec<PairScores> = per_image.iter().map(|s| s.scores).collect();
        let overall = aggregate(&all)?;
        let mut grouped: BTreeMap<String, Vec<PairScores>> = BTreeMap::new();
        for s in &per_image {
            if let Some(g) = &s.group {
                grouped.entry(g.clone()).or_default().push(s.scores);
            }
        }
        let groups = grouped
            .into_iter()
            .map(|(k, v)| aggregate(&v).map(|s| (k, s)))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            overall,
            groups,
            skipped_empty_gt,
            per_image,
        })
    }

    /// Per-image CSV: `id,dice,iou,detected,fa_pixels`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,dice,iou,detected,fa_pixels\n");
        for s in &self.per_image {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.id,
                s.scores.dice,
                s.scores.iou,
                s.scores.detected as u8,
                s.scores.false_alarm_pixels
            ));
        }
        out
    }

    /// Aggregate JSON grouped by family, without the per-image list.
    pub fn to_summary_json(&self) -> serde_json::Value {
        let fmt = |s: &Summary| {
            serde_json::json!({
                "images": s.images,
                "mean_dice": s.mean_dice,
                "miou": s.miou,
                "pd": s.pd,
                "fa": s.fa,
                "fa_e3": s.fa_e3(),
            })
        };
        let groups: serde_json::Map<String, serde_json::Value> = self
            .groups
            .iter()
            .map(|(k, v)| (k.clone(), fmt(v)))
            .collect();
        serde_json::json!({
            "overall": fmt(&self.overall),
            "groups": groups,
            "skipped_empty_gt": self.skipped_empty_gt,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Pixel;

    fn row(w: usize, range: std::ops::Range<usize>) -> BinaryMask {
        let px: Vec<_> = range.map(|u| Pixel::new(u, 0)).collect();
        BinaryMask::from_pixels(w, 1, &px)
    }

    #[test]
    fn identical_masks_score_perfectly() {
        let m = row(20, 3..13);
        let s = score_pair(&m, &m).unwrap();
        assert_eq!(
            (s.dice, s.iou, s.detected, s.false_alarm_pixels),
            (1.0, 1.0, true, 0)
        );
    }

    #[test]
    fn half_overlap_counts() {
        let gt = row(30, 0..10);
        let pred = row(30, 5..15);
        let s = score_pair(&pred, &gt).unwrap();
        assert_eq!(s.dice, 0.5);
        assert!((s.iou - 1.0 / 3.0).abs() < 1e-15);
        assert!(!s.detected);
        assert_eq!(s.false_alarm_pixels, 5);
    }

    #[test]
    fn empty_gt_is_an_error() {
        assert!(matches!(
            score_pair(&row(5, 0..2), &row(5, 0..0)),
            Err(MetricsError::EmptyTarget)
        ));
        assert!(matches!(aggregate(&[]), Err(MetricsError::NoScores)));
    }

    #[test]
    fn aggregate_detection_rate() {
        let gt = row(30, 0..10);
        let good = score_pair(&gt, &gt).unwrap();
        let bad = score_pair(&row(30, 20..30), &gt).unwrap();
        let s = aggregate(&[good, bad]).unwrap();
        assert_eq!(s.pd, 50.0);
        assert_eq!(s.mean_dice, 50.0);
        assert_eq!(s.fa, 10.0 / 60.0);

        let perfect = aggregate(&[good]).unwrap();
        assert_eq!(
            (perfect.mean_dice, perfect.miou, perfect.pd, perfect.fa),
            (100.0, 100.0, 100.0, 0.0)
        );
    }

    #[test]
    fn report_groups_and_csv() {
        let gt = row(30, 0..10);
        let good = score_pair(&gt, &gt).unwrap();
        let bad = score_pair(&row(30, 20..30), &gt).unwrap();
        let report = MetricReport::build(
            vec![
                ScoredImage {
                    id: "b".into(),
                    group: Some("sun".into()),
                    scores: bad,
                },
                ScoredImage {
                    id: "a".into(),
                    group: Some("moon".into()),
                    scores: good,
                },
            ],
            1,
        )
        .unwrap();
        assert_eq!(report.groups["moon"].pd, 100.0);
        assert_eq!(report.groups["sun"].pd, 0.0);
        let csv = report.to_csv();
        assert!(csv.starts_with("id,dice,iou,detected,fa_pixels\na,1,1,1,0\nb,0,0,0,10\n"));
    }
}
