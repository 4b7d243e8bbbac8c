//! Fourier-domain reference trackers: harmonic-phase (HARP) tracking and
//! sine-wave modelling (SinMod).

mod harp;
mod sinmod;

pub use harp::{harp_phase, harp_track, BandpassSpec, HarpOptions, HarpResult, PhaseImage};
pub use sinmod::{local_frequency, sinmod_pair, sinmod_track, SinModOptions, SinModResult};

use rustfft::num_complex::Complex64;

use crate::fft::{bin_frequency, fft2, forward_real};
use crate::field::ScalarField2D;

/// Applies the real frequency response `response(fx, fy)` (cycles/px) to
/// `image` and returns the complex result.
pub(crate) fn filter(image: &ScalarField2D, response: impl Fn(f64, f64) -> f64) -> Vec<Complex64> {
    let (h, w) = image.shape();
    let mut spec = forward_real(image.data(), h, w);
    for y in 0..h {
        let fy = bin_frequency(y, h);
        for x in 0..w {
            spec[y * w + x] *= response(bin_frequency(x, w), fy);
        }
    }
    fft2(&mut spec, h, w, true);
    spec
}

/// Wraps an angle into `(-π, π]`.
pub(crate) fn wrap(a: f64) -> f64 {
    use std::f64::consts::PI;
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}
