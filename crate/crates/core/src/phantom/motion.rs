use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Diffeo, Spacing, VectorField2D};

/// Fixed-point iterations allowed when inverting a B-spline deformation.
const MAX_INVERSE_ITERS: usize = 200;
const INVERSE_TOL_PX: f64 = 1e-6;

/// Cubic B-spline free-form deformation on a regular control lattice.
///
/// Control point `(i, j)` sits at pixel `((i - 1)·s, (j - 1)·s)`, so the
/// lattice extends one spacing beyond the image on the low side and two on
/// the high side, which keeps slightly out-of-grid evaluations well defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineField {
    pub control_spacing_px: f64,
    pub nx: usize,
    pub ny: usize,
    pub cdx: Vec<f64>,
    pub cdy: Vec<f64>,
}

fn cubic_basis(t: f64) -> [f64; 4] {
    let u = 1.0 - t;
    [
        u * u * u / 6.0,
        (3.0 * t * t * t - 6.0 * t * t + 4.0) / 6.0,
        (-3.0 * t * t * t + 3.0 * t * t + 3.0 * t + 1.0) / 6.0,
        t * t * t / 6.0,
    ]
}

impl BSplineField {
    fn lattice(height: usize, width: usize, spacing: f64) -> (usize, usize) {
        let cells = |n: usize| ((n - 1) as f64 / spacing).ceil() as usize;
        (cells(width) + 4, cells(height) + 4)
    }

    /// Random control displacements, uniform in `[-max, max]` per component.
    ///
    /// `max_control_disp_px` may not exceed `0.4 · control_spacing_px`, the
    /// margin below which a cubic B-spline deformation stays invertible.
    pub fn random(
        seed: u64,
        height: usize,
        width: usize,
        control_spacing_px: f64,
        max_control_disp_px: f64,
    ) -> Result<Self> {
        if !(control_spacing_px >= 2.0 && control_spacing_px.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "control spacing must be at least 2 px, got {control_spacing_px}"
            )));
        }
        if !(0.0..=0.4 * control_spacing_px).contains(&max_control_disp_px) {
            return Err(Error::InvalidConfig(format!(
                "control displacement {max_control_disp_px} px exceeds 0.4 x spacing {control_spacing_px} px"
            )));
        }
        let (nx, ny) = Self::lattice(height, width, control_spacing_px);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || {
            (0..nx * ny)
                .map(|_| {
                    if max_control_disp_px == 0.0 {
                        0.0
                    } else {
                        rng.random_range(-max_control_disp_px..=max_control_disp_px)
                    }
                })
                .collect::<Vec<_>>()
        };
        let cdx = draw();
        let cdy = draw();
        Ok(Self {
            control_spacing_px,
            nx,
            ny,
            cdx,
            cdy,
        })
    }

    /// Displacement at a continuous pixel position.
    pub fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        let s = self.control_spacing_px;
        let locate = |c: f64, n: usize| {
            let u = c / s;
            let i = u.floor().clamp(0.0, (n - 4) as f64);
            (i as usize, u - i)
        };
        let (ix, tx) = locate(x, self.nx);
        let (iy, ty) = locate(y, self.ny);
        let (bx, by) = (cubic_basis(tx), cubic_basis(ty));
        let (mut dx, mut dy) = (0.0, 0.0);
        for (l, wy) in by.iter().enumerate() {
            let row = (iy + l) * self.nx + ix;
            for (k, wx) in bx.iter().enumerate() {
                let w = wx * wy;
                dx += w * self.cdx[row + k];
                dy += w * self.cdy[row + k];
            }
        }
        (dx, dy)
    }

    /// Forward and inverse displacement of `id + scale · field`. The inverse
    /// comes from the fixed point `e(x) = -scale · field(x + e(x))`.
    pub fn diffeo(&self, scale: f64, height: usize, width: usize, spacing_mm: Spacing) -> Result<Diffeo> {
        let mut fx = Vec::with_capacity(height * width);
        let mut fy = Vec::with_capacity(height * width);
        let mut ix = Vec::with_capacity(height * width);
        let mut iy = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                let (xf, yf) = (x as f64, y as f64);
                let (dx, dy) = self.eval(xf, yf);
                fx.push(scale * dx);
                fy.push(scale * dy);
                let (mut ex, mut ey) = (-scale * dx, -scale * dy);
                let mut converged = scale == 0.0;
                for _ in 0..MAX_INVERSE_ITERS {
                    let (dx, dy) = self.eval(xf + ex, yf + ey);
                    let (nx, ny) = (-scale * dx, -scale * dy);
                    let step = (nx - ex).hypot(ny - ey);
                    (ex, ey) = (nx, ny);
                    if step < INVERSE_TOL_PX {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    return Err(Error::Numeric(format!(
                        "B-spline inverse did not converge at pixel ({x}, {y})"
                    )));
                }
                ix.push(ex);
                iy.push(ey);
            }
        }
        Ok(Diffeo {
            forward: VectorField2D::new(height, width, fx, fy, spacing_mm)?,
            inverse: VectorField2D::new(height, width, ix, iy, spacing_mm)?,
            n_squaring_steps: 0,
        })
    }
}

/// Ground-truth motion families. Every motion grows linearly in time from
/// the identity at the first frame to its full extent at the last frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    Static,
    /// Total translation in pixels reached at the last frame.
    Translation { dx: f64, dy: f64 },
    /// Rotation about `center` (pixel coordinates), in degrees at the last frame.
    Rotation { angle_deg: f64, center: (f64, f64) },
    BSpline(BSplineField),
}

impl Motion {
    /// Deformation at fraction `s ∈ [0, 1]` of the full motion.
    pub fn at(&self, s: f64, height: usize, width: usize, spacing_mm: Spacing) -> Result<Diffeo> {
        match self {
            Motion::Static => Diffeo::identity(height, width, spacing_mm),
            Motion::Translation { dx, dy } => Ok(Diffeo {
                forward: VectorField2D::constant(height, width, spacing_mm, (s * dx, s * dy))?,
                inverse: VectorField2D::constant(height, width, spacing_mm, (-s * dx, -s * dy))?,
                n_squaring_steps: 0,
            }),
            Motion::Rotation { angle_deg, center } => {
                let theta = (s * angle_deg).to_radians();
                Ok(Diffeo {
                    forward: rotation_field(theta, *center, height, width, spacing_mm)?,
                    inverse: rotation_field(-theta, *center, height, width, spacing_mm)?,
                    n_squaring_steps: 0,
                })
            }
            Motion::BSpline(field) => field.diffeo(s, height, width, spacing_mm),
        }
    }

    /// One deformation per frame, linear in frame index.
    pub fn frames(&self, n_frames: usize, height: usize, width: usize, spacing_mm: Spacing) -> Result<Vec<Diffeo>> {
        if n_frames == 0 {
            return Err(Error::InvalidInput("motion needs at least one frame".into()));
        }
        let denom = (n_frames - 1).max(1) as f64;
        (0..n_frames)
            .map(|i| self.at(i as f64 / denom, height, width, spacing_mm))
            .collect()
    }
}

/// Displacement of a rotation by `theta` radians about `center`.
pub fn rotation_field(
    theta: f64,
    center: (f64, f64),
    height: usize,
    width: usize,
    spacing_mm: Spacing,
) -> Result<VectorField2D> {
    let (s, c) = theta.sin_cos();
    VectorField2D::from_fn(height, width, spacing_mm, |x, y| {
        let (rx, ry) = (x as f64 - center.0, y as f64 - center.1);
        (c * rx - s * ry - rx, s * rx + c * ry - ry)
    })
}
