use super::stripe::render_capsule;
use super::{CosmicRay, Disk, Glare, SceneSpec, Star, StrayLight};
use crate::image::GrayImage;

/// Stray-light field evaluated per pixel.
pub trait StrayLightField {
    fn eval(&self, u: f64, v: f64, w: usize, h: usize) -> f64;
}

impl StrayLightField for Glare {
    fn eval(&self, u: f64, v: f64, w: usize, h: usize) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        let (c, s) = (self.direction.cos(), self.direction.sin());
        // Distance inside the frame from the lit edge, measured along the
        // light direction.
        let corners = [
            (0.0, 0.0),
            (w as f64 - 1.0, 0.0),
            (0.0, h as f64 - 1.0),
            (w as f64 - 1.0, h as f64 - 1.0),
        ];
        let lit = corners
            .iter()
            .map(|&(x, y)| x * c + y * s)
            .fold(f64::NEG_INFINITY, f64::max);
        let depth = lit - (u * c + v * s);
        self.amplitude * (-depth / self.falloff).exp()
    }
}

fn disk_radius(d: &Disk, u: f64, v: f64) -> f64 {
    ((u - d.center.0).powi(2) + (v - d.center.1).powi(2)).sqrt()
}

/// Moon: flat disk plus an exponential halo.
struct MoonDisk<'a>(&'a Disk);

impl StrayLightField for MoonDisk<'_> {
    fn eval(&self, u: f64, v: f64, _w: usize, _h: usize) -> f64 {
        let d = self.0;
        let r = disk_radius(d, u, v);
        if r <= d.radius {
            d.amplitude
        } else {
            d.amplitude * (-(r - d.radius) / d.softness).exp()
        }
    }
}

/// Earth: large body with a logistic limb.
struct EarthLimb<'a>(&'a Disk);

impl StrayLightField for EarthLimb<'_> {
    fn eval(&self, u: f64, v: f64, _w: usize, _h: usize) -> f64 {
        let d = self.0;
        let r = disk_radius(d, u, v);
        d.amplitude / (1.0 + ((r - d.radius) / d.softness).exp())
    }
}

fn clamp_param(name: &str, value: f64, lo: f64, hi: f64, warnings: &mut Vec<String>) -> f64 {
    if value.is_nan() {
        warnings.push(format!("{name} is NaN, set to {lo}"));
        return lo;
    }
    let c = value.clamp(lo, hi);
    if c != value {
        warnings.push(format!("{name} = {value} clamped to {c}"));
    }
    c
}

fn sanitize_glare(g: &Glare, warnings: &mut Vec<String>) -> Glare {
    Glare {
        amplitude: clamp_param("glare.amplitude", g.amplitude, 0.0, 1.0, warnings),
        direction: if g.direction.is_finite() {
            g.direction
        } else {
            0.0
        },
        falloff: clamp_param("glare.falloff", g.falloff, 1.0, 1e6, warnings),
    }
}

fn sanitize_disk(d: &Disk, warnings: &mut Vec<String>) -> Disk {
    Disk {
        amplitude: clamp_param("disk.amplitude", d.amplitude, 0.0, 1.0, warnings),
        center: (
            clamp_param("disk.center.u", d.center.0, -1e6, 1e6, warnings),
            clamp_param("disk.center.v", d.center.1, -1e6, 1e6, warnings),
        ),
        radius: clamp_param("disk.radius", d.radius, 0.0, 1e6, warnings),
        softness: clamp_param("disk.softness", d.softness, 0.5, 1e6, warnings),
    }
}

fn sanitize(spec: &SceneSpec, warnings: &mut Vec<String>) -> SceneSpec {
    let mut s = spec.clone();
    s.background_level = clamp_param("background_level", s.background_level, 0.0, 1.0, warnings);
    s.stray_light = match &spec.stray_light {
        StrayLight::Sun(g) => StrayLight::Sun(sanitize_glare(g, warnings)),
        StrayLight::Moon(d) => StrayLight::Moon(sanitize_disk(d, warnings)),
        StrayLight::Earth(d) => StrayLight::Earth(sanitize_disk(d, warnings)),
        StrayLight::Mixed { glare, disk } => StrayLight::Mixed {
            glare: sanitize_glare(glare, warnings),
            disk: sanitize_disk(disk, warnings),
        },
    };
    s.stars = spec
        .stars
        .iter()
        .map(|st| Star {
            position: st.position,
            peak: clamp_param("star.peak", st.peak, 0.0, 1.0, warnings),
            psf_sigma: clamp_param("star.psf_sigma", st.psf_sigma, 0.3, 10.0, warnings),
        })
        .collect();
    s.cosmic_rays = spec
        .cosmic_rays
        .iter()
        .map(|cr| {
            let (du, dv) = (cr.end.0 - cr.start.0, cr.end.1 - cr.start.1);
            let len = (du * du + dv * dv).sqrt();
            let end = if len > CosmicRay::MAX_LENGTH {
                warnings.push(format!(
                    "cosmic ray length {len:.2} clamped to {}",
                    CosmicRay::MAX_LENGTH
                ));
                let k = CosmicRay::MAX_LENGTH / len;
                (cr.start.0 + du * k, cr.start.1 + dv * k)
            } else {
                cr.end
            };
            CosmicRay {
                start: cr.start,
                end,
                peak: clamp_param("cosmic_ray.peak", cr.peak, 0.0, 1.0, warnings),
            }
        })
        .collect();
    s
}

/// Renders stray light, stars and cosmic rays, returning the clamp warnings
/// produced while sanitising the parameters.
pub fn render_background_with_warnings(spec: &SceneSpec) -> (GrayImage, Vec<String>) {
    let mut warnings = Vec::new();
    let s = sanitize(spec, &mut warnings);
    let (w, h) = (s.width, s.height);
    let base = s.background_level;
    let mut img = match &s.stray_light {
        StrayLight::Sun(g) => {
            GrayImage::from_fn(w, h, |u, v| base + g.eval(u as f64, v as f64, w, h))
        }
        StrayLight::Moon(d) => {
            let f = MoonDisk(d);
            GrayImage::from_fn(w, h, |u, v| base + f.eval(u as f64, v as f64, w, h))
        }
        StrayLight::Earth(d) => {
            let f = EarthLimb(d);
            GrayImage::from_fn(w, h, |u, v| base + f.eval(u as f64, v as f64, w, h))
        }
        StrayLight::Mixed { glare, disk } => {
            let f = MoonDisk(disk);
            GrayImage::from_fn(w, h, |u, v| {
                let (x, y) = (u as f64, v as f64);
                base + glare.eval(x, y, w, h) + f.eval(x, y, w, h)
            })
        }
    };
    for star in &s.stars {
        render_capsule(
            &mut img,
            star.position,
            star.position,
            star.psf_sigma,
            star.peak,
            |_| 1.0,
        );
    }
    for cr in &s.cosmic_rays {
        render_capsule(
            &mut img,
            cr.start,
            cr.end,
            CosmicRay::SIGMA,
            cr.peak,
            |_| 1.0,
        );
    }
    for w in &warnings {
        log::warn!("scene {}: {w}", spec.seed);
    }
    (img, warnings)
}

/// Noiseless background layer: stray light, stars and cosmic rays.
pub fn render_background(spec: &SceneSpec) -> GrayImage {
    render_background_with_warnings(spec).0
}
