//! Image filters shared by the segmenters.

use crate::image::GrayImage;

/// Median of a scratch buffer (reordered in place). Empty input gives 0.
pub fn median_in_place(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mid = values.len() / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Robust noise estimate: 1.4826 x median absolute deviation, floored at
/// `floor`.
pub fn robust_sigma(data: &[f64], floor: f64) -> f64 {
    let mut scratch = data.to_vec();
    let med = median_in_place(&mut scratch);
    for (s, &x) in scratch.iter_mut().zip(data) {
        *s = (x - med).abs();
    }
    (1.4826 * median_in_place(&mut scratch)).max(floor)
}

/// Smooth background from block medians on a `block` x `block` mesh,
/// bilinearly interpolated between block centres.
pub fn mesh_background(img: &GrayImage, block: usize) -> GrayImage {
    let (w, h) = img.dims();
    let nu = w.div_ceil(block).max(1);
    let nv = h.div_ceil(block).max(1);
    let mut grid = vec![0.0; nu * nv];
    let mut scratch = Vec::with_capacity(block * block);
    for bv in 0..nv {
        for bu in 0..nu {
            scratch.clear();
            for v in bv * block..((bv + 1) * block).min(h) {
                for u in bu * block..((bu + 1) * block).min(w) {
                    scratch.push(img.get(u, v));
                }
            }
            grid[bv * nu + bu] = median_in_place(&mut scratch);
        }
    }
    // Block centres in pixel coordinates.
    let centre = |b: usize, n: usize, size: usize| {
        let lo = b * block;
        let hi = ((b + 1) * block).min(size);
        let _ = n;
        0.5 * (lo + hi - 1) as f64
    };
    let locate = |x: f64, n: usize, size: usize| -> (usize, usize, f64) {
        if n == 1 {
            return (0, 0, 0.0);
        }
        let first = centre(0, n, size);
        let last = centre(n - 1, n, size);
        if x <= first {
            return (0, 0, 0.0);
        }
        if x >= last {
            return (n - 1, n - 1, 0.0);
        }
        let mut i = 0;
        while i + 1 < n && centre(i + 1, n, size) < x {
            i += 1;
        }
        let (c0, c1) = (centre(i, n, size), centre(i + 1, n, size));
        (i, i + 1, (x - c0) / (c1 - c0))
    };
    let cols: Vec<_> = (0..w).map(|u| locate(u as f64, nu, w)).collect();
    let rows: Vec<_> = (0..h).map(|v| locate(v as f64, nv, h)).collect();
    GrayImage::from_fn(w, h, |u, v| {
        let (u0, u1, fu) = cols[u];
        let (v0, v1, fv) = rows[v];
        let g = |a: usize, b: usize| grid[b * nu + a];
        let top = g(u0, v0) + fu * (g(u1, v0) - g(u0, v0));
        let bottom = g(u0, v1) + fu * (g(u1, v1) - g(u0, v1));
        top + fv * (bottom - top)
    })
}

/// 3x3 median with replicated borders.
pub fn median3(img: &GrayImage) -> GrayImage {
    let (w, h) = img.dims();
    let mut win = [0.0; 9];
    GrayImage::from_fn(w, h, |u, v| {
        let mut k = 0;
        for dv in -1..=1isize {
            for du in -1..=1isize {
                win[k] = img.get_clamped(u as isize + du, v as isize + dv);
                k += 1;
            }
        }
        median_in_place(&mut win)
    })
}

/// Image padded by `r` pixels on every side with replicated borders.
pub struct Padded {
    pub r: usize,
    pub stride: usize,
    pub data: Vec<f64>,
    /// Summed-area table with one extra leading row and column.
    integral: Vec<f64>,
}

impl Padded {
    pub fn new(img: &GrayImage, r: usize) -> Self {
        let (w, h) = img.dims();
        let (pw, ph) = (w + 2 * r, h + 2 * r);
        let mut data = Vec::with_capacity(pw * ph);
        for pv in 0..ph {
            for pu in 0..pw {
                data.push(img.get_clamped(pu as isize - r as isize, pv as isize - r as isize));
            }
        }
        let mut integral = vec![0.0; (pw + 1) * (ph + 1)];
        for pv in 0..ph {
            let mut row = 0.0;
            for pu in 0..pw {
                row += data[pv * pw + pu];
                integral[(pv + 1) * (pw + 1) + pu + 1] = integral[pv * (pw + 1) + pu + 1] + row;
            }
        }
        Self {
            r,
            stride: pw,
            data,
            integral,
        }
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize, du: isize, dv: isize) -> f64 {
        let pu = (u + self.r) as isize + du;
        let pv = (v + self.r) as isize + dv;
        self.data[pv as usize * self.stride + pu as usize]
    }

    /// Sum over the `(2 half + 1)^2` window centred at image pixel `(u, v)`;
    /// requires `half <= r`.
    #[inline]
    pub fn box_sum(&self, u: usize, v: usize, half: usize) -> f64 {
        let s = self.stride + 1;
        let (u0, v0) = (u + self.r - half, v + self.r - half);
        let (u1, v1) = (u + self.r + half + 1, v + self.r + half + 1);
        self.integral[v1 * s + u1] - self.integral[v0 * s + u1] - self.integral[v1 * s + u0]
            + self.integral[v0 * s + u0]
    }
}

/// Local mean and standard deviation over a `(2 half + 1)^2` window.
pub fn local_mean_std(img: &GrayImage, half: usize) -> (GrayImage, GrayImage) {
    let (w, h) = img.dims();
    let p = Padded::new(img, half);
    let sq = Padded::new(&img.map(|x| x * x), half);
    let n = ((2 * half + 1) * (2 * half + 1)) as f64;
    let mean = GrayImage::from_fn(w, h, |u, v| p.box_sum(u, v, half) / n);
    let std = GrayImage::from_fn(w, h, |u, v| {
        let m = mean.get(u, v);
        (sq.box_sum(u, v, half) / n - m * m).max(0.0).sqrt()
    });
    (mean, std)
}

fn separable_extreme(img: &GrayImage, half: usize, pick: fn(f64, f64) -> f64) -> GrayImage {
    let (w, h) = img.dims();
    let r = half as isize;
    let pass1 = GrayImage::from_fn(w, h, |u, v| {
        (-r..=r)
            .map(|d| img.get_clamped(u as isize + d, v as isize))
            .fold(img.get(u, v), pick)
    });
    GrayImage::from_fn(w, h, |u, v| {
        (-r..=r)
            .map(|d| pass1.get_clamped(u as isize, v as isize + d))
            .fold(pass1.get(u, v), pick)
    })
}

/// Grey erosion with a `(2 half + 1)` square structuring element.
pub fn erode(img: &GrayImage, half: usize) -> GrayImage {
    separable_extreme(img, half, f64::min)
}

/// Grey dilation with a `(2 half + 1)` square structuring element.
pub fn dilate(img: &GrayImage, half: usize) -> GrayImage {
    separable_extreme(img, half, f64::max)
}

/// White top-hat: image minus its opening.
pub fn white_tophat(img: &GrayImage, half: usize) -> GrayImage {
    let opened = dilate(&erode(img, half), half);
    GrayImage::from_vec(
        img.width(),
        img.height(),
        img.data()
            .iter()
            .zip(opened.data())
            .map(|(a, b)| a - b)
            .collect(),
    )
}

/// Separable Gaussian blur truncated at 3 sigma.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    let r = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = taps.iter().sum();
    let (w, h) = img.dims();
    let pass1 = GrayImage::from_fn(w, h, |u, v| {
        (-r..=r)
            .zip(&taps)
            .map(|(d, t)| t * img.get_clamped(u as isize + d, v as isize))
            .sum::<f64>()
            / norm
    });
    GrayImage::from_fn(w, h, |u, v| {
        (-r..=r)
            .zip(&taps)
            .map(|(d, t)| t * pass1.get_clamped(u as isize, v as isize + d))
            .sum::<f64>()
            / norm
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_background_of_constant_is_constant() {
        let img = GrayImage::filled(70, 45, 0.37);
        let bg = mesh_background(&img, 16);
        assert!(bg.data().iter().all(|&x| (x - 0.37).abs() < 1e-15));
    }

    #[test]
    fn mesh_background_follows_gradient() {
        let img = GrayImage::from_fn(128, 128, |u, _| u as f64 / 128.0);
        let bg = mesh_background(&img, 32);
        for u in 16..112 {
            assert!((bg.get(u, 60) - img.get(u, 60)).abs() < 0.01, "{u}");
        }
    }

    #[test]
    fn median3_removes_impulse() {
        let mut img = GrayImage::filled(9, 9, 0.2);
        img.set(4, 4, 1.0);
        assert_eq!(median3(&img).get(4, 4), 0.2);
    }

    #[test]
    fn box_sum_matches_direct() {
        let img = GrayImage::from_fn(13, 11, |u, v| ((u * 7 + v * 3) % 5) as f64);
        let p = Padded::new(&img, 3);
        for (u, v) in [(0, 0), (6, 5), (12, 10)] {
            let mut direct = 0.0;
            for dv in -3..=3 {
                for du in -3..=3 {
                    direct += img.get_clamped(u as isize + du, v as isize + dv);
                }
            }
            assert!((p.box_sum(u, v, 3) - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn tophat_keeps_thin_ridges_only() {
        let img = GrayImage::from_fn(
            30,
            30,
            |u, v| if v == 15 { 1.0 } else { 0.1 + 0.001 * u as f64 },
        );
        let th = white_tophat(&img, 3);
        assert!((th.get(10, 15) - 0.9).abs() < 0.02);
        assert!(th.get(10, 5).abs() < 1e-12);
    }

    #[test]
    fn robust_sigma_ignores_outliers() {
        let mut data: Vec<f64> = (0..1001).map(|i| (i % 3) as f64 - 1.0).collect();
        data[0] = 1e6;
        let s = robust_sigma(&data, 1e-9);
        assert!((s - 1.4826).abs() < 1e-9);
    }
}
