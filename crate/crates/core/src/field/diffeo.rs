use super::interp::sample_clamped;
use super::{check_finite, Mask, Spacing, VectorField2D};
use crate::error::Result;

/// Squaring steps used by the exponential map unless configured otherwise.
pub const DEFAULT_SQUARING_STEPS: usize = 7;

/// A deformation and its inverse, both stored as displacement fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Diffeo {
    pub forward: VectorField2D,
    pub inverse: VectorField2D,
    pub n_squaring_steps: usize,
}

impl Diffeo {
    pub fn identity(height: usize, width: usize, spacing_mm: Spacing) -> Result<Self> {
        Ok(Self {
            forward: VectorField2D::zeros(height, width, spacing_mm)?,
            inverse: VectorField2D::zeros(height, width, spacing_mm)?,
            n_squaring_steps: 0,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.forward.shape()
    }

    /// Largest norm of the displacement of `φ ∘ φ⁻¹` over `mask`.
    pub fn inverse_residual(&self, mask: &Mask) -> Result<f64> {
        Ok(compose(&self.forward, &self.inverse)?.max_norm_masked(mask))
    }
}

/// Displacement of `(id + outer) ∘ (id + inner)`:
/// `d(x) = inner(x) + outer(x + inner(x))`.
pub fn compose(outer: &VectorField2D, inner: &VectorField2D) -> Result<VectorField2D> {
    outer.check_same_grid(inner.shape())?;
    let (h, w) = outer.shape();
    let n = h * w;
    let mut dx = Vec::with_capacity(n);
    let mut dy = Vec::with_capacity(n);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = inner.get(x, y);
            let (px, py) = (x as f64 + u, y as f64 + v);
            dx.push(u + sample_clamped(outer.dx(), h, w, px, py));
            dy.push(v + sample_clamped(outer.dy(), h, w, px, py));
        }
    }
    VectorField2D::new(h, w, dx, dy, outer.spacing_mm())
}

fn squaring(velocity: &VectorField2D, n_steps: usize) -> Result<VectorField2D> {
    let mut d = velocity.scaled(1.0 / (1u64 << n_steps) as f64)?;
    for _ in 0..n_steps {
        d = compose(&d, &d)?;
    }
    Ok(d)
}

/// Exponential of a stationary velocity field by scaling and squaring.
///
/// The inverse is integrated identically from the negated velocity.
pub fn exp_map(velocity: &VectorField2D, n_steps: usize) -> Result<Diffeo> {
    if n_steps == 0 || n_steps > 30 {
        return Err(crate::Error::InvalidInput(format!(
            "squaring steps must be in 1..=30, got {n_steps}"
        )));
    }
    check_finite("velocity dx", velocity.dx())?;
    check_finite("velocity dy", velocity.dy())?;
    Ok(Diffeo {
        forward: squaring(velocity, n_steps)?,
        inverse: squaring(&velocity.negated()?, n_steps)?,
        n_squaring_steps: n_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::jacobian_determinant;

    const SP: Spacing = (1.0, 1.0);

    fn rotation_disp(n: usize, angle: f64) -> VectorField2D {
        let c = (n as f64 - 1.0) / 2.0;
        let (s, co) = angle.sin_cos();
        VectorField2D::from_fn(n, n, SP, |x, y| {
            let (rx, ry) = (x as f64 - c, y as f64 - c);
            (co * rx - s * ry - rx, s * rx + co * ry - ry)
        })
        .unwrap()
    }

    fn disk(n: usize, radius: f64) -> Mask {
        let c = (n as f64 - 1.0) / 2.0;
        let data = (0..n * n)
            .map(|i| {
                let (x, y) = ((i % n) as f64, (i / n) as f64);
                (x - c).hypot(y - c) <= radius
            })
            .collect();
        Mask::new(n, n, data).unwrap()
    }

    #[test]
    fn identity_is_neutral() {
        let d = VectorField2D::from_fn(9, 9, SP, |x, y| {
            (0.3 * (x as f64 * 0.4).sin(), 0.2 * (y as f64 * 0.3).cos())
        })
        .unwrap();
        let zero = VectorField2D::zeros(9, 9, SP).unwrap();
        assert_eq!(compose(&zero, &d).unwrap(), d);
        assert_eq!(compose(&d, &zero).unwrap(), d);
    }

    #[test]
    fn translations_add() {
        let a = VectorField2D::constant(16, 16, SP, (1.25, -0.5)).unwrap();
        let b = VectorField2D::constant(16, 16, SP, (-0.75, 2.0)).unwrap();
        let c = compose(&a, &b).unwrap();
        let interior = Mask::interior(16, 16, 3);
        for y in 0..16 {
            for x in 0..16 {
                if interior.get(x, y) {
                    let (u, v) = c.get(x, y);
                    assert!((u - 0.5).abs() < 1e-12 && (v - 1.5).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn two_five_degree_rotations_make_ten() {
        let n = 64;
        let r5 = rotation_disp(n, 5f64.to_radians());
        let r10 = rotation_disp(n, 10f64.to_radians());
        let c = compose(&r5, &r5).unwrap();
        let mask = disk(n, 28.0);
        let mut worst: f64 = 0.0;
        for y in 0..n {
            for x in 0..n {
                if mask.get(x, y) {
                    let (a, b) = c.get(x, y);
                    let (p, q) = r10.get(x, y);
                    worst = worst.max((a - p).hypot(b - q));
                }
            }
        }
        assert!(worst < 0.05, "max error {worst}");
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let v = VectorField2D::zeros(12, 12, SP).unwrap();
        let phi = exp_map(&v, DEFAULT_SQUARING_STEPS).unwrap();
        assert_eq!(phi.forward.max_norm(), 0.0);
        assert_eq!(phi.inverse.max_norm(), 0.0);
    }

    #[test]
    fn constant_velocity_integrates_to_translation() {
        let v = VectorField2D::constant(32, 32, SP, (1.7, -2.3)).unwrap();
        let phi = exp_map(&v, DEFAULT_SQUARING_STEPS).unwrap();
        let interior = Mask::interior(32, 32, 4);
        for y in 0..32 {
            for x in 0..32 {
                if interior.get(x, y) {
                    let (u, w) = phi.forward.get(x, y);
                    assert!((u - 1.7).abs() < 1e-6 && (w + 2.3).abs() < 1e-6);
                    let (u, w) = phi.inverse.get(x, y);
                    assert!((u + 1.7).abs() < 1e-6 && (w - 2.3).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn rotational_velocity_matches_analytic_rotation() {
        let n = 64;
        let omega = 0.26;
        let c = (n as f64 - 1.0) / 2.0;
        let v = VectorField2D::from_fn(n, n, SP, |x, y| {
            (-omega * (y as f64 - c), omega * (x as f64 - c))
        })
        .unwrap();
        let phi = exp_map(&v, 7).unwrap();
        let truth = rotation_disp(n, omega);
        let mask = disk(n, 24.0);
        let mut worst: f64 = 0.0;
        for y in 0..n {
            for x in 0..n {
                if mask.get(x, y) {
                    let (a, b) = phi.forward.get(x, y);
                    let (p, q) = truth.get(x, y);
                    worst = worst.max((a - p).hypot(b - q));
                }
            }
        }
        assert!(worst < 0.1, "max error {worst}");
        let jac = jacobian_determinant(&phi.forward);
        assert!(jac.data().iter().all(|&j| j > 0.0));
    }

    #[test]
    fn rejects_bad_steps() {
        let v = VectorField2D::zeros(4, 4, SP).unwrap();
        assert!(exp_map(&v, 0).is_err());
    }
}
