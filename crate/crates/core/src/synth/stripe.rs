use super::{StripeParams, SynthError};
use crate::image::GrayImage;

/// Adds `peak * weight(t) * exp(-d^2 / 2 sigma^2)` for a capsule around the
/// segment `a -> b` into `out`, where `d` is the distance to the segment and
/// `t` the clamped along-segment coordinate. Pixels farther than `3 sigma`
/// are untouched.
pub fn render_capsule(
    out: &mut GrayImage,
    a: (f64, f64),
    b: (f64, f64),
    sigma: f64,
    peak: f64,
    weight: impl Fn(f64) -> f64,
) {
    let (w, h) = out.dims();
    if w == 0 || h == 0 {
        return;
    }
    let reach = 3.0 * sigma;
    let (du, dv) = (b.0 - a.0, b.1 - a.1);
    let len2 = du * du + dv * dv;
    let u0 = (a.0.min(b.0) - reach).floor().max(0.0) as usize;
    let v0 = (a.1.min(b.1) - reach).floor().max(0.0) as usize;
    let u1 = ((a.0.max(b.0) + reach).ceil().max(0.0) as usize).min(w - 1);
    let v1 = ((a.1.max(b.1) + reach).ceil().max(0.0) as usize).min(h - 1);
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for v in v0..=v1 {
        for u in u0..=u1 {
            let (qu, qv) = (u as f64 - a.0, v as f64 - a.1);
            let t = if len2 > 1e-18 {
                ((qu * du + qv * dv) / len2).clamp(0.0, 1.0)
            } else {
                0.5
            };
            let (eu, ev) = (qu - t * du, qv - t * dv);
            let d2 = eu * eu + ev * ev;
            if d2 > reach * reach {
                continue;
            }
            let idx = v * w + u;
            out.data_mut()[idx] += peak * weight(t) * (-d2 * inv2s2).exp();
        }
    }
}

/// Renders the additive stripe layer for a `w x h` frame.
pub fn render_stripe(spec: &StripeParams, w: usize, h: usize) -> Result<GrayImage, SynthError> {
    spec.validate()?;
    let (u0, v0, u1, v1) = spec.extent();
    if u0 < 0.0 || v0 < 0.0 || u1 > (w as f64 - 1.0) || v1 > (h as f64 - 1.0) {
        return Err(SynthError::OutOfFrame {
            width: w,
            height: h,
            u0,
            v0,
            u1,
            v1,
        });
    }
    let mut out = GrayImage::new(w, h);
    let (a, b) = spec.endpoints();
    let profile = spec.profile;
    render_capsule(&mut out, a, b, spec.width_sigma, spec.peak, |t| {
        profile.eval(t)
    });
    Ok(out)
}
