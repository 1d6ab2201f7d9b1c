use super::SynthError;
use crate::image::{check_shape, BinaryMask, GrayImage};

/// Background annulus bounds, as distances from the mask in pixels:
/// `ANNULUS_INNER < d <= ANNULUS_OUTER`.
pub const ANNULUS_INNER: f64 = 5.0;
pub const ANNULUS_OUTER: f64 = 15.0;

/// Target signal-to-noise ratio `(mu_target - mu_bg) / sigma_bg`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr {
    pub value: f64,
    pub mu_target: f64,
    pub mu_bg: f64,
    pub sigma_bg: f64,
    /// Set when `sigma_bg` is zero up to rounding; `value` is then `+-inf`, or `0` when the
    /// target equals the background.
    pub infinite: bool,
}

/// Indices of pixels whose Euclidean distance to the nearest mask pixel
/// lies in `(inner, outer]`.
pub fn annulus(mask: &BinaryMask, inner: f64, outer: f64) -> Vec<usize> {
    let (w, h) = mask.dims();
    let Some((u0, v0, u1, v1)) = mask.bbox() else {
        return Vec::new();
    };
    // The nearest mask pixel of any outside point lies on the mask boundary.
    let boundary: Vec<(isize, isize)> = mask
        .pixels()
        .into_iter()
        .filter(|p| {
            let (u, v) = (p.u as isize, p.v as isize);
            [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|&(du, dv)| {
                let (nu, nv) = (u + du, v + dv);
                nu < 0
                    || nv < 0
                    || nu >= w as isize
                    || nv >= h as isize
                    || !mask.get(nu as usize, nv as usize)
            })
        })
        .map(|p| (p.u as isize, p.v as isize))
        .collect();
    let reach = outer.ceil() as usize;
    let (inner2, outer2) = (inner * inner, outer * outer);
    let mut out = Vec::new();
    for v in v0.saturating_sub(reach)..=(v1 + reach).min(h - 1) {
        for u in u0.saturating_sub(reach)..=(u1 + reach).min(w - 1) {
            if mask.get(u, v) {
                continue;
            }
            let mut best = f64::INFINITY;
            for &(bu, bv) in &boundary {
                let d2 = ((u as isize - bu).pow(2) + (v as isize - bv).pow(2)) as f64;
                if d2 < best {
                    best = d2;
                    if best <= inner2 {
                        break;
                    }
                }
            }
            if best > inner2 && best <= outer2 {
                out.push(v * w + u);
            }
        }
    }
    out
}

pub(crate) fn snr_from_values(target: impl Iterator<Item = f64>, bg: &[f64]) -> Snr {
    let (mut st, mut nt) = (0.0, 0usize);
    for x in target {
        st += x;
        nt += 1;
    }
    let mu_target = st / nt as f64;
    let nb = bg.len() as f64;
    let mu_bg = bg.iter().sum::<f64>() / nb;
    let sigma_bg = (bg.iter().map(|x| (x - mu_bg).powi(2)).sum::<f64>() / nb).sqrt();
    let diff = mu_target - mu_bg;
    // Rounding in the mean leaves a residual spread on constant input.
    if sigma_bg <= 1e-12 * mu_bg.abs().max(1.0) {
        let value = if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        return Snr {
            value,
            mu_target,
            mu_bg,
            sigma_bg,
            infinite: true,
        };
    }
    Snr {
        value: diff / sigma_bg,
        mu_target,
        mu_bg,
        sigma_bg,
        infinite: false,
    }
}

/// Measures the target SNR of `mask` in `img` against its background annulus.
pub fn compute_snr(img: &GrayImage, mask: &BinaryMask) -> Result<Snr, SynthError> {
    check_shape(img.dims(), mask.dims()).map_err(|e| SynthError::Snr(e.to_string()))?;
    if mask.is_empty() {
        return Err(SynthError::Snr("mask has no positive pixel".into()));
    }
    let ring = annulus(mask, ANNULUS_INNER, ANNULUS_OUTER);
    if ring.is_empty() {
        return Err(SynthError::Snr("background annulus is empty".into()));
    }
    let bg: Vec<f64> = ring.iter().map(|&i| img.data()[i]).collect();
    let target = mask
        .bits()
        .iter()
        .zip(img.data())
        .filter(|(&b, _)| b)
        .map(|(_, &x)| x);
    Ok(snr_from_values(target, &bg))
}
