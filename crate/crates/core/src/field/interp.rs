use super::{ScalarField2D, VectorField2D};
use crate::error::{Error, Result};

/// Cell origin and fractional offset for a clamped coordinate on an axis of
/// length `n` (n >= 2). The origin never exceeds `n - 2`, so the last node is
/// reached with a fraction of exactly one.
#[inline]
pub(crate) fn cell(c: f64, n: usize) -> (usize, f64) {
    let c = c.clamp(0.0, (n - 1) as f64);
    let i = (c.floor() as usize).min(n - 2);
    (i, c - i as f64)
}

#[inline]
pub(crate) fn sample_clamped(data: &[f64], h: usize, w: usize, x: f64, y: f64) -> f64 {
    let (x0, fx) = cell(x, w);
    let (y0, fy) = cell(y, h);
    let r0 = y0 * w + x0;
    let r1 = r0 + w;
    let top = (1.0 - fx) * data[r0] + fx * data[r0 + 1];
    let bottom = (1.0 - fx) * data[r1] + fx * data[r1 + 1];
    (1.0 - fy) * top + fy * bottom
}

/// Bilinear interpolation of `field` at pixel coordinates `(x, y)`.
/// Coordinates outside the grid are clamped to the border first.
pub fn bilinear_sample(field: &ScalarField2D, coords: &[(f64, f64)]) -> Result<Vec<f64>> {
    coords
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            if !(x.is_finite() && y.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "coordinate {i} is not finite: ({x}, {y})"
                )));
            }
            Ok(field.sample(x, y))
        })
        .collect()
}

/// `field ∘ (id + disp)`: the output at `x` is the input sampled at `x + disp(x)`.
pub fn warp(field: &ScalarField2D, disp: &VectorField2D) -> Result<ScalarField2D> {
    field.check_same_grid(disp.shape())?;
    let (h, w) = field.shape();
    let data = field.data();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = disp.get(x, y);
            out.push(sample_clamped(data, h, w, x as f64 + u, y as f64 + v));
        }
    }
    ScalarField2D::new(h, w, out, field.spacing_mm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ramp(h: usize, w: usize, slope: f64) -> ScalarField2D {
        ScalarField2D::from_fn(h, w, (1.0, 1.0), |x, _| slope * x as f64).unwrap()
    }

    #[test]
    fn node_identity() {
        let f = ScalarField2D::from_fn(8, 8, (1.0, 1.0), |x, y| (x * 10 + y) as f64).unwrap();
        let v = bilinear_sample(&f, &[(3.0, 5.0), (7.0, 7.0), (0.0, 0.0)]).unwrap();
        assert_eq!(v, vec![f.get(3, 5), f.get(7, 7), f.get(0, 0)]);
    }

    #[test]
    fn midpoint_is_average() {
        let f = ramp(4, 4, 1.0);
        let v = bilinear_sample(&f, &[(0.5, 2.0)]).unwrap();
        assert_eq!(v[0], 0.5);
    }

    #[test]
    fn out_of_range_clamps() {
        let f = ScalarField2D::from_fn(4, 4, (1.0, 1.0), |x, y| (x + 4 * y) as f64 + 1.0).unwrap();
        let v = bilinear_sample(&f, &[(-2.7, 0.0), (10.0, 10.0)]).unwrap();
        assert_eq!(v[0], f.get(0, 0));
        assert_eq!(v[1], f.get(3, 3));
    }

    #[test]
    fn non_finite_coordinate_is_rejected() {
        let f = ramp(4, 4, 1.0);
        assert!(matches!(
            bilinear_sample(&f, &[(f64::NAN, 0.0)]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn zero_displacement_is_identity() {
        let f = ScalarField2D::from_fn(6, 7, (1.0, 1.0), |x, y| ((x * 3 + y * 5) % 7) as f64).unwrap();
        let d = VectorField2D::zeros(6, 7, (1.0, 1.0)).unwrap();
        assert_eq!(warp(&f, &d).unwrap(), f);
    }

    #[test]
    fn unit_shift_on_linear_field() {
        let s = 0.37;
        let f = ramp(8, 8, s);
        let d = VectorField2D::constant(8, 8, (1.0, 1.0), (1.0, 0.0)).unwrap();
        let g = warp(&f, &d).unwrap();
        for y in 0..8 {
            for x in 0..7 {
                assert!((g.get(x, y) - f.get(x, y) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (h, w) = (8, 8);
        let f = ScalarField2D::from_fn(h, w, (1.0, 1.0), |_, _| rng.random_range(-1.0..1.0)).unwrap();
        let d = VectorField2D::from_fn(h, w, (1.0, 1.0), |_, _| {
            (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0))
        })
        .unwrap();
        let g = warp(&f, &d).unwrap();

        // Oracle: weights from the four surrounding nodes, computed directly.
        for y in 0..h {
            for x in 0..w {
                let (u, v) = d.get(x, y);
                let px = (x as f64 + u).clamp(0.0, (w - 1) as f64);
                let py = (y as f64 + v).clamp(0.0, (h - 1) as f64);
                let mut acc = 0.0;
                for yy in 0..h {
                    for xx in 0..w {
                        let wx = (1.0 - (px - xx as f64).abs()).max(0.0);
                        let wy = (1.0 - (py - yy as f64).abs()).max(0.0);
                        acc += wx * wy * f.get(xx, yy);
                    }
                }
                assert!((g.get(x, y) - acc).abs() < 1e-12);
            }
        }
    }
}
