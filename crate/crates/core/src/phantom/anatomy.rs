use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{ScalarField2D, Spacing};

/// Settings for [`gen_oval_anatomy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OvalSpec {
    /// Inclusive range for the number of ellipses.
    pub n_ovals: (usize, usize),
    /// Intensity range inside the ellipses, a subset of (0, 1].
    pub intensity: (f64, f64),
    /// Standard deviation of the edge blur in pixels.
    pub blur_px: f64,
}

impl Default for OvalSpec {
    fn default() -> Self {
        Self {
            n_ovals: (2, 5),
            intensity: (0.35, 1.0),
            blur_px: 0.8,
        }
    }
}

/// Union of randomly placed, rotated filled ellipses with softened edges.
///
/// Each ellipse carries a gentle linear intensity ramp; overlapping ellipses
/// combine by maximum so values stay in `[0, 1]`.
pub fn gen_oval_anatomy(
    seed: u64,
    height: usize,
    width: usize,
    spacing_mm: Spacing,
    spec: &OvalSpec,
) -> Result<ScalarField2D> {
    if height < 32 || width < 32 {
        return Err(Error::InvalidInput(format!(
            "anatomy grid must be at least 32x32, got {height}x{width}"
        )));
    }
    let (lo, hi) = spec.intensity;
    if !(0.0 < lo && lo <= hi && hi <= 1.0) || spec.n_ovals.0 > spec.n_ovals.1 {
        return Err(Error::InvalidInput(format!("invalid oval spec {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(spec.n_ovals.0..=spec.n_ovals.1);
    let (hf, wf) = (height as f64, width as f64);
    let size = hf.min(wf);
    let mut img = vec![0.0f64; height * width];
    for _ in 0..n {
        let cx = rng.random_range(0.3..0.7) * wf;
        let cy = rng.random_range(0.3..0.7) * hf;
        let ra = rng.random_range(0.1..0.26) * size;
        let rb = rng.random_range(0.08..0.2) * size;
        let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let level = rng.random_range(lo..=hi);
        let ramp: f64 = rng.random_range(-0.15..0.15);
        let (s, c) = theta.sin_cos();
        for y in 0..height {
            for x in 0..width {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let u = (c * dx + s * dy) / ra;
                let v = (-s * dx + c * dy) / rb;
                if u * u + v * v <= 1.0 {
                    let value = (level * (1.0 + ramp * u)).clamp(0.0, 1.0);
                    let px = &mut img[y * width + x];
                    *px = px.max(value);
                }
            }
        }
    }
    if spec.blur_px > 0.0 {
        img = gaussian_blur(&img, height, width, spec.blur_px);
        img.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
    ScalarField2D::new(height, width, img, spacing_mm)
}

/// Separable Gaussian blur with edge clamping. The kernel is normalised, so
/// values stay inside the input range.
pub(crate) fn gaussian_blur(data: &[f64], height: usize, width: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let pass = |src: &[f64], along_x: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for y in 0..height as isize {
            for x in 0..width as isize {
                let mut acc = 0.0;
                for (k, &wk) in kernel.iter().enumerate() {
                    let o = k as isize - radius;
                    let (sx, sy) = if along_x {
                        ((x + o).clamp(0, width as isize - 1), y)
                    } else {
                        (x, (y + o).clamp(0, height as isize - 1))
                    };
                    acc += wk * src[sy as usize * width + sx as usize];
                }
                out[y as usize * width + x as usize] = acc;
            }
        }
        out
    };
    let tmp = pass(data, true);
    pass(&tmp, false)
}
