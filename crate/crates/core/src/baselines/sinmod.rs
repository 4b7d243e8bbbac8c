use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::filter;
use crate::error::{Error, Result};
use crate::field::interp::sample_clamped;
use crate::field::{ScalarField2D, VectorField2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SinModOptions {
    /// Side of the squared-cosine smoothing window, in pixels (odd).
    pub kernel_size: usize,
    pub quality_exponent: f64,
    /// Local frequencies below this (cycles/px) mark a pixel as unusable.
    pub frequency_floor: f64,
    /// Pass-band radius as a fraction of the tag frequency.
    pub band_radius: f64,
    /// Exponent of the frequency skew: the high filter is weighted by
    /// `(k/k_c)^skew`, the low filter by `(k_c/k)^skew`.
    pub skew: f64,
}

impl Default for SinModOptions {
    fn default() -> Self {
        Self {
            kernel_size: 15,
            quality_exponent: 8.0,
            frequency_floor: 1e-4,
            band_radius: 0.5,
            skew: 1.0,
        }
    }
}

impl SinModOptions {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_size % 2 == 0 {
            return Err(Error::InvalidConfig(format!("kernel size {} must be odd", self.kernel_size)));
        }
        if !(self.band_radius > 0.0 && self.band_radius < 1.0) {
            return Err(Error::InvalidConfig(format!("band radius {} outside (0, 1)", self.band_radius)));
        }
        if !(self.skew > 0.0 && self.quality_exponent >= 0.0 && self.frequency_floor >= 0.0) {
            return Err(Error::InvalidConfig(format!("invalid SinMod options {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinModResult {
    /// Lagrangian displacement of every frame relative to frame 0.
    pub displacements: Vec<VectorField2D>,
}

/// Per-pixel output along one tag axis.
struct AxisEstimate {
    displacement: Vec<f64>,
    frequency: Vec<f64>,
    quality: Vec<f64>,
}

/// Normalised separable squared-cosine window.
fn kernel(size: usize) -> Vec<f64> {
    let r = (size / 2) as f64;
    let k: Vec<f64> = (0..size)
        .map(|i| {
            let c = (PI * (i as f64 - r) / (size as f64 + 1.0)).cos();
            c * c
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable smoothing with border renormalisation.
fn smooth(data: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let pass = |src: &[f64], along_x: bool| {
        let mut out = vec![0.0; src.len()];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (j, &kj) in k.iter().enumerate() {
                    let o = j as isize - r;
                    let (sx, sy) = if along_x { (x + o, y) } else { (x, y + o) };
                    if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                        continue;
                    }
                    acc += kj * src[sy as usize * w + sx as usize];
                    norm += kj;
                }
                out[y as usize * w + x as usize] = acc / norm;
            }
        }
        out
    };
    pass(&pass(data, true), false)
}

/// Displacement along one axis between `prev` and `next`, with the filters
/// centred at `center` (cycles/px, as `(fx, fy)`).
fn axis_estimate(prev: &ScalarField2D, next: &ScalarField2D, center: (f64, f64), opts: &SinModOptions) -> AxisEstimate {
    let (h, w) = prev.shape();
    let kc = center.0.hypot(center.1);
    let (ux, uy) = (center.0 / kc, center.1 / kc);
    let radius = opts.band_radius * kc;
    let band = |fx: f64, fy: f64| {
        let d = (fx - center.0).hypot(fy - center.1);
        if d >= radius {
            return None;
        }
        let c = (0.5 * PI * d / radius).cos();
        // Projection on the tag axis; positive inside the band.
        Some((c * c, fx * ux + fy * uy))
    };
    let low = |fx, fy| band(fx, fy).map_or(0.0, |(b, k)| b * (kc / k).powf(opts.skew));
    let high = |fx, fy| band(fx, fy).map_or(0.0, |(b, k)| b * (k / kc).powf(opts.skew));

    let p_l = filter(prev, low);
    let p_h = filter(prev, high);
    let n_l = filter(next, low);
    let n_h = filter(next, high);

    let k = kernel(opts.kernel_size);
    let sq = |a: &[Complex64], b: &[Complex64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x.norm_sqr() + y.norm_sqr()).collect() };
    let power_low = smooth(&sq(&p_l, &n_l), h, w, &k);
    let power_high = smooth(&sq(&p_h, &n_h), h, w, &k);
    let power_prev = smooth(&sq(&p_l, &p_h), h, w, &k);
    let power_next = smooth(&sq(&n_l, &n_h), h, w, &k);
    let cross: Vec<Complex64> = (0..h * w).map(|i| p_l[i] * n_l[i].conj() + p_h[i] * n_h[i].conj()).collect();
    let cross_re = smooth(&cross.iter().map(|c| c.re).collect::<Vec<_>>(), h, w, &k);
    let cross_im = smooth(&cross.iter().map(|c| c.im).collect::<Vec<_>>(), h, w, &k);

    let mut displacement = vec![0.0; h * w];
    let mut frequency = vec![0.0; h * w];
    let mut quality = vec![0.0; h * w];
    for i in 0..h * w {
        // Amplitudes scale as (k/k_c)^±skew, so the power ratio is (k/k_c)^(4·skew).
        let ratio = power_high[i] / power_low[i];
        let f = if ratio.is_finite() && ratio > 0.0 {
            kc * ratio.powf(0.25 / opts.skew)
        } else {
            0.0
        };
        frequency[i] = f;
        if f < opts.frequency_floor {
            continue;
        }
        let c = Complex64::new(cross_re[i], cross_im[i]);
        displacement[i] = c.arg() / (2.0 * PI * f);
        let denom = 0.5 * (power_prev[i] + power_next[i]);
        if denom > 0.0 {
            quality[i] = (c.norm() / denom).min(1.0).powf(opts.quality_exponent);
        }
    }
    AxisEstimate {
        displacement,
        frequency,
        quality,
    }
}

/// Quality-weighted smoothing of a displacement component.
fn weighted(est: &AxisEstimate, h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let num: Vec<f64> = est.displacement.iter().zip(&est.quality).map(|(d, q)| d * q).collect();
    let num = smooth(&num, h, w, k);
    let den = smooth(&est.quality, h, w, k);
    num.iter()
        .zip(&den)
        .map(|(&n, &d)| if d > 1e-12 { n / d } else { 0.0 })
        .collect()
}

/// Displacement carrying the tag pattern of `prev` onto `next`, sampled at
/// the pixel positions of `prev`. `frequency_h` / `frequency_v` are the tag
/// frequencies (cycles/px) of the horizontal and vertical tag images.
#[allow(clippy::too_many_arguments)]
pub fn sinmod_pair(
    prev_h: &ScalarField2D,
    prev_v: &ScalarField2D,
    next_h: &ScalarField2D,
    next_v: &ScalarField2D,
    frequency_h: f64,
    frequency_v: f64,
    opts: &SinModOptions,
) -> Result<VectorField2D> {
    opts.validate()?;
    let (h, w) = prev_h.shape();
    for f in [prev_v, next_h, next_v] {
        if f.shape() != (h, w) {
            return Err(Error::shape(format!("{h}x{w}"), format!("{:?}", f.shape())));
        }
    }
    for f in [frequency_h, frequency_v] {
        if !(f > 0.0 && f < 0.5) {
            return Err(Error::InvalidInput(format!("tag frequency {f} cycles/px outside (0, 0.5)")));
        }
    }
    let k = kernel(opts.kernel_size);
    let ex = axis_estimate(prev_v, next_v, (frequency_v, 0.0), opts);
    let ey = axis_estimate(prev_h, next_h, (0.0, frequency_h), opts);
    VectorField2D::new(h, w, weighted(&ex, h, w, &k), weighted(&ey, h, w, &k), prev_h.spacing_mm())
}

/// Local tag frequency (cycles/px) of a single image, from the same filter
/// pair used for tracking.
pub fn local_frequency(image: &ScalarField2D, center: (f64, f64), opts: &SinModOptions) -> Vec<f64> {
    axis_estimate(image, image, center, opts).frequency
}

/// Tracks a sequence by estimating motion between adjacent frames and
/// composing the steps into displacements relative to frame 0.
pub fn sinmod_track(
    frames_h: &[ScalarField2D],
    frames_v: &[ScalarField2D],
    frequency_h: f64,
    frequency_v: f64,
    opts: &SinModOptions,
) -> Result<SinModResult> {
    if frames_h.is_empty() || frames_h.len() != frames_v.len() {
        return Err(Error::InvalidInput(format!(
            "need matching non-empty frame lists, got {} and {}",
            frames_h.len(),
            frames_v.len()
        )));
    }
    let (h, w) = frames_h[0].shape();
    let sp = frames_h[0].spacing_mm();
    let mut displacements = vec![VectorField2D::zeros(h, w, sp)?];
    for t in 1..frames_h.len() {
        let step = sinmod_pair(
            &frames_h[t - 1],
            &frames_v[t - 1],
            &frames_h[t],
            &frames_v[t],
            frequency_h,
            frequency_v,
            opts,
        )?;
        let prev = &displacements[t - 1];
        let total = VectorField2D::from_fn(h, w, sp, |x, y| {
            let (px, py) = prev.get(x, y);
            let (qx, qy) = (x as f64 + px, y as f64 + py);
            let sx = sample_clamped(step.dx(), h, w, qx, qy);
            let sy = sample_clamped(step.dy(), h, w, qx, qy);
            (px + sx, py + sy)
        })?;
        displacements.push(total);
    }
    Ok(SinModResult { displacements })
}
