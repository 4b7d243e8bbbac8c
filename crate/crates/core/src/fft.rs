//! Row-major 2D FFT on top of `rustfft`.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place 2D transform of an `h×w` row-major buffer. The inverse is
/// normalised by `1/(h·w)`.
pub(crate) fn fft2(buf: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    debug_assert_eq!(buf.len(), h * w);
    let mut planner = FftPlanner::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row.process(buf);
    let mut column = vec![Complex64::default(); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = buf[y * w + x];
        }
        col.process(&mut column);
        for y in 0..h {
            buf[y * w + x] = column[y];
        }
    }
    if inverse {
        let s = 1.0 / (h * w) as f64;
        buf.iter_mut().for_each(|c| *c *= s);
    }
}

pub(crate) fn forward_real(data: &[f64], h: usize, w: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut buf, h, w, false);
    buf
}

/// Signed frequency (cycles per sample) of FFT bin `k` on an axis of length `n`.
pub(crate) fn bin_frequency(k: usize, n: usize) -> f64 {
    let k = k as f64;
    let n_f = n as f64;
    if k < n_f / 2.0 {
        k / n_f
    } else {
        (k - n_f) / n_f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let data: Vec<f64> = (0..24).map(|i| ((i * 7) % 5) as f64 - 1.5).collect();
        let mut buf = forward_real(&data, 4, 6);
        fft2(&mut buf, 4, 6, true);
        for (c, &v) in buf.iter().zip(&data) {
            assert!((c.re - v).abs() < 1e-12 && c.im.abs() < 1e-12);
        }
    }

    #[test]
    fn dc_bin_is_sum() {
        let data = vec![0.5; 12];
        let buf = forward_real(&data, 3, 4);
        assert!((buf[0].re - 6.0).abs() < 1e-12);
        assert!(buf[1..].iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn signed_bins() {
        assert_eq!(bin_frequency(0, 8), 0.0);
        assert_eq!(bin_frequency(3, 8), 0.375);
        assert_eq!(bin_frequency(4, 8), -0.5);
        assert_eq!(bin_frequency(7, 8), -0.125);
    }
}
