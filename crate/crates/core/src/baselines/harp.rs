use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{filter, wrap};
use crate::error::{Error, Result};
use crate::field::interp::sample_clamped;
use crate::field::{ScalarField2D, VectorField2D};
use crate::phantom::Orientation;

/// One-sided circular band-pass around a harmonic peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandpassSpec {
    /// Peak position `(fx, fy)` in cycles/px.
    pub center: (f64, f64),
    /// Pass-band radius in cycles/px.
    pub radius: f64,
    /// Width of the raised-cosine roll-off outside the radius, in frequency
    /// bins of the longer image axis.
    pub edge_bins: f64,
}

impl BandpassSpec {
    /// Filter for a tag orientation: centred on the tag frequency along the
    /// varying axis, radius half the tag frequency, 2-bin soft edge.
    pub fn for_tags(orientation: Orientation, frequency_per_px: f64) -> Result<Self> {
        if !(frequency_per_px > 0.0 && frequency_per_px < 0.5) {
            return Err(Error::InvalidInput(format!(
                "tag frequency {frequency_per_px} cycles/px outside (0, 0.5)"
            )));
        }
        let center = match orientation {
            Orientation::Vertical => (frequency_per_px, 0.0),
            Orientation::Horizontal => (0.0, frequency_per_px),
        };
        Ok(Self {
            center,
            radius: 0.5 * frequency_per_px,
            edge_bins: 2.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) || !(self.edge_bins >= 0.0) {
            return Err(Error::InvalidInput(format!("invalid band-pass {self:?}")));
        }
        Ok(())
    }

    /// Response at frequency `(fx, fy)` for an image whose longer side has `n` pixels.
    pub(crate) fn response(&self, fx: f64, fy: f64, n: usize) -> f64 {
        let d = (fx - self.center.0).hypot(fy - self.center.1);
        let edge = self.edge_bins / n as f64;
        if d <= self.radius {
            1.0
        } else if d < self.radius + edge {
            0.5 * (1.0 + (PI * (d - self.radius) / edge).cos())
        } else {
            0.0
        }
    }
}

/// Complex band-pass output of a tagged image.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseImage {
    /// Wrapped phase in `(-π, π]`.
    pub phase: ScalarField2D,
    pub magnitude: ScalarField2D,
    center: (f64, f64),
    /// Output demodulated by the filter centre, smooth enough to interpolate.
    baseband_re: Vec<f64>,
    baseband_im: Vec<f64>,
}

impl PhaseImage {
    fn carrier(&self, x: f64, y: f64) -> f64 {
        2.0 * PI * (self.center.0 * x + self.center.1 * y)
    }

    /// Interpolated complex value at a fractional pixel position.
    pub fn sample(&self, x: f64, y: f64) -> Complex64 {
        let (h, w) = self.phase.shape();
        let re = sample_clamped(&self.baseband_re, h, w, x, y);
        let im = sample_clamped(&self.baseband_im, h, w, x, y);
        Complex64::new(re, im) * Complex64::from_polar(1.0, self.carrier(x, y))
    }

    /// Interpolated wrapped phase.
    pub fn phase_at(&self, x: f64, y: f64) -> f64 {
        self.sample(x, y).arg()
    }

    /// Phase gradient (rad/px) by wrapped central differences.
    fn gradient_at(&self, x: f64, y: f64) -> (f64, f64) {
        const H: f64 = 0.5;
        let gx = wrap(self.phase_at(x + H, y) - self.phase_at(x - H, y)) / (2.0 * H);
        let gy = wrap(self.phase_at(x, y + H) - self.phase_at(x, y - H)) / (2.0 * H);
        (gx, gy)
    }
}

/// Harmonic phase of `image` through the band-pass `spec`.
pub fn harp_phase(image: &ScalarField2D, spec: &BandpassSpec) -> Result<PhaseImage> {
    spec.validate()?;
    let (h, w) = image.shape();
    let n = h.max(w);
    let z = filter(image, |fx, fy| spec.response(fx, fy, n));
    let sp = image.spacing_mm();
    let phase = ScalarField2D::new(h, w, z.iter().map(|c| c.arg()).collect(), sp)?;
    let magnitude = ScalarField2D::new(h, w, z.iter().map(|c| c.norm()).collect(), sp)?;
    let mut re = Vec::with_capacity(h * w);
    let mut im = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let arg = -2.0 * PI * (spec.center.0 * x as f64 + spec.center.1 * y as f64);
            let b = z[y * w + x] * Complex64::from_polar(1.0, arg);
            re.push(b.re);
            im.push(b.im);
        }
    }
    Ok(PhaseImage {
        phase,
        magnitude,
        center: spec.center,
        baseband_re: re,
        baseband_im: im,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarpOptions {
    pub max_iterations: usize,
    /// Longest Newton step in pixels.
    pub max_step_px: f64,
    /// Phase residual (rad) accepted as converged.
    pub tolerance: f64,
    /// Residual (rad) above which an unconverged point counts as divergent.
    pub divergence: f64,
}

impl Default for HarpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 30,
            max_step_px: 1.0,
            tolerance: 1e-6,
            divergence: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarpResult {
    /// Lagrangian displacement of every frame relative to frame 0.
    pub displacements: Vec<VectorField2D>,
    /// Pixels per frame that were singular or divergent and refilled.
    pub flagged: Vec<usize>,
}

/// Tracks every pixel of frame 0 through the sequence by following its pair
/// of harmonic phases. Each frame starts from the previous frame's result.
pub fn harp_track(
    frames_h: &[ScalarField2D],
    frames_v: &[ScalarField2D],
    spec_h: &BandpassSpec,
    spec_v: &BandpassSpec,
    opts: &HarpOptions,
) -> Result<HarpResult> {
    if frames_h.is_empty() || frames_h.len() != frames_v.len() {
        return Err(Error::InvalidInput(format!(
            "need matching non-empty frame lists, got {} and {}",
            frames_h.len(),
            frames_v.len()
        )));
    }
    let (h, w) = frames_h[0].shape();
    let sp = frames_h[0].spacing_mm();
    for f in frames_h.iter().chain(frames_v) {
        if f.shape() != (h, w) {
            return Err(Error::shape(format!("{h}x{w}"), format!("{:?}", f.shape())));
        }
    }
    let ref_h = harp_phase(&frames_h[0], spec_h)?;
    let ref_v = harp_phase(&frames_v[0], spec_v)?;
    let targets: Vec<(f64, f64)> = (0..h * w)
        .map(|i| (ref_h.phase.data()[i], ref_v.phase.data()[i]))
        .collect();

    let mut displacements = vec![VectorField2D::zeros(h, w, sp)?];
    let mut flagged = vec![0];
    for t in 1..frames_h.len() {
        let ph = harp_phase(&frames_h[t], spec_h)?;
        let pv = harp_phase(&frames_v[t], spec_v)?;
        let prev = &displacements[t - 1];
        let mut dx = vec![f64::NAN; h * w];
        let mut dy = vec![f64::NAN; h * w];
        let mut bad = 0;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let start = (x as f64 + prev.dx()[i], y as f64 + prev.dy()[i]);
                match newton(&ph, &pv, targets[i], start, (h, w), opts) {
                    Some((px, py)) => {
                        dx[i] = px - x as f64;
                        dy[i] = py - y as f64;
                    }
                    None => bad += 1,
                }
            }
        }
        fill_by_median(&mut dx, &mut dy, h, w);
        displacements.push(VectorField2D::new(h, w, dx, dy, sp)?);
        flagged.push(bad);
    }
    Ok(HarpResult {
        displacements,
        flagged,
    })
}

/// Damped Newton search for the point whose phases equal `target`.
fn newton(
    ph: &PhaseImage,
    pv: &PhaseImage,
    target: (f64, f64),
    start: (f64, f64),
    (h, w): (usize, usize),
    opts: &HarpOptions,
) -> Option<(f64, f64)> {
    let (xmax, ymax) = ((w - 1) as f64, (h - 1) as f64);
    let (mut x, mut y) = (start.0.clamp(0.0, xmax), start.1.clamp(0.0, ymax));
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        let rh = wrap(ph.phase_at(x, y) - target.0);
        let rv = wrap(pv.phase_at(x, y) - target.1);
        residual = rh.hypot(rv);
        if residual < opts.tolerance {
            return Some((x, y));
        }
        let (a, b) = ph.gradient_at(x, y);
        let (c, d) = pv.gradient_at(x, y);
        let det = a * d - b * c;
        // Singular relative to the scale of the gradients.
        if det.abs() <= 1e-6 * (a * a + b * b + c * c + d * d) || !det.is_finite() {
            return None;
        }
        let mut sx = -(d * rh - b * rv) / det;
        let mut sy = -(-c * rh + a * rv) / det;
        let len = sx.hypot(sy);
        if len > opts.max_step_px {
            sx *= opts.max_step_px / len;
            sy *= opts.max_step_px / len;
        }
        x = (x + sx).clamp(0.0, xmax);
        y = (y + sy).clamp(0.0, ymax);
        if len < 1e-9 {
            break;
        }
    }
    let rh = wrap(ph.phase_at(x, y) - target.0);
    let rv = wrap(pv.phase_at(x, y) - target.1);
    residual = residual.min(rh.hypot(rv));
    (residual < opts.divergence).then_some((x, y))
}

/// Replaces NaN entries by the component-wise median of valid 3×3
/// neighbours, growing inwards until every entry is filled. A field with no
/// valid entry becomes zero.
pub(crate) fn fill_by_median(dx: &mut [f64], dy: &mut [f64], h: usize, w: usize) {
    if dx.iter().all(|v| v.is_nan()) {
        dx.iter_mut().for_each(|v| *v = 0.0);
        dy.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    loop {
        let holes: Vec<usize> = (0..h * w).filter(|&i| dx[i].is_nan()).collect();
        if holes.is_empty() {
            return;
        }
        let mut updates = Vec::with_capacity(holes.len());
        for &i in &holes {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            let mut nx = Vec::with_capacity(8);
            let mut ny = Vec::with_capacity(8);
            for yy in (y - 1).max(0)..=(y + 1).min(h as isize - 1) {
                for xx in (x - 1).max(0)..=(x + 1).min(w as isize - 1) {
                    let j = yy as usize * w + xx as usize;
                    if !dx[j].is_nan() {
                        nx.push(dx[j]);
                        ny.push(dy[j]);
                    }
                }
            }
            if !nx.is_empty() {
                updates.push((i, median(&mut nx), median(&mut ny)));
            }
        }
        for (i, mx, my) in updates {
            dx[i] = mx;
            dy[i] = my;
        }
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn response_profile() {
        let s = BandpassSpec::for_tags(Orientation::Vertical, 0.25).unwrap();
        assert_eq!(s.response(0.25, 0.0, 64), 1.0);
        assert_eq!(s.response(0.25 + 0.125, 0.0, 64), 1.0);
        let mid = s.response(0.25 + 0.125 + 1.0 / 64.0, 0.0, 64);
        assert!((mid - 0.5).abs() < 1e-12);
        assert_eq!(s.response(0.0, 0.0, 64), 0.0);
        assert_eq!(s.response(-0.25, 0.0, 64), 0.0);
    }

    #[test]
    fn median_fill() {
        let (h, w) = (3, 3);
        let mut dx = vec![1.0, 2.0, 3.0, 4.0, f64::NAN, 6.0, 7.0, 8.0, 9.0];
        let mut dy = dx.clone();
        fill_by_median(&mut dx, &mut dy, h, w);
        assert_eq!(dx[4], 5.0);
        let mut dx = vec![f64::NAN; 4];
        let mut dy = vec![f64::NAN; 4];
        fill_by_median(&mut dx, &mut dy, 2, 2);
        assert_eq!(dx, vec![0.0; 4]);
    }
}
