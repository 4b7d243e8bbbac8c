//! Dense 2D fields on a regular pixel grid.
//!
//! Images, phase maps and strain maps are [`ScalarField2D`]; displacement and
//! velocity fields are [`VectorField2D`] stored in pixel units. Coordinates are
//! `(x, y)` with `x` the column index and `y` the row index; storage is
//! row-major.

mod diffeo;
pub(crate) mod interp;
mod metrics;
mod strain;

pub use diffeo::{compose, exp_map, Diffeo, DEFAULT_SQUARING_STEPS};
pub use interp::{bilinear_sample, warp};
pub(crate) use interp::cell as interp_cell;
pub use metrics::{emps, epe, quantile_sorted, Summary};
pub use strain::{jacobian_determinant, max_principal_strain, spatial_gradient};

use crate::error::{Error, Result};

/// Physical pixel size in millimetres, `(sx, sy)`.
pub type Spacing = (f64, f64);

fn check_grid(height: usize, width: usize) -> Result<()> {
    if height < 2 || width < 2 {
        return Err(Error::InvalidInput(format!(
            "grid must be at least 2x2, got {height}x{width}"
        )));
    }
    Ok(())
}

fn check_spacing(spacing: Spacing) -> Result<()> {
    if !(spacing.0 > 0.0 && spacing.1 > 0.0 && spacing.0.is_finite() && spacing.1.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "pixel spacing must be positive, got {spacing:?}"
        )));
    }
    Ok(())
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("{name} has non-finite value at index {i}")));
    }
    Ok(())
}

/// H×W grid of real values with physical pixel spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    height: usize,
    width: usize,
    data: Vec<f64>,
    spacing_mm: Spacing,
}

impl ScalarField2D {
    pub fn new(height: usize, width: usize, data: Vec<f64>, spacing_mm: Spacing) -> Result<Self> {
        check_grid(height, width)?;
        check_spacing(spacing_mm)?;
        if data.len() != height * width {
            return Err(Error::shape(
                format!("{} values", height * width),
                format!("{} values", data.len()),
            ));
        }
        check_finite("scalar field", &data)?;
        Ok(Self {
            height,
            width,
            data,
            spacing_mm,
        })
    }

    pub fn zeros(height: usize, width: usize, spacing_mm: Spacing) -> Result<Self> {
        Self::new(height, width, vec![0.0; height * width], spacing_mm)
    }

    /// Builds a field by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        height: usize,
        width: usize,
        spacing_mm: Spacing,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(height, width, data, spacing_mm)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn spacing_mm(&self) -> Spacing {
        self.spacing_mm
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Bilinear value at a continuous coordinate, clamped to the grid.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        interp::sample_clamped(&self.data, self.height, self.width, x, y)
    }

    /// Applies `f` to every value, keeping grid and spacing.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.height,
            self.width,
            self.data.iter().map(|&v| f(v)).collect(),
            self.spacing_mm,
        )
    }

    /// Elementwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_grid(other.shape())?;
        Self::new(
            self.height,
            self.width,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            self.spacing_mm,
        )
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Summary statistics over the pixels where `mask` is set.
    pub fn summary(&self, mask: &Mask) -> Result<Summary> {
        self.check_same_grid(mask.shape())?;
        let values: Vec<f64> = self
            .data
            .iter()
            .zip(mask.data())
            .filter_map(|(&v, &m)| m.then_some(v))
            .collect();
        Ok(Summary::of(&values))
    }

    pub(crate) fn check_same_grid(&self, other: (usize, usize)) -> Result<()> {
        if self.shape() != other {
            return Err(Error::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.0, other.1),
            ));
        }
        Ok(())
    }
}

/// H×W grid of 2-vectors in pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField2D {
    height: usize,
    width: usize,
    dx: Vec<f64>,
    dy: Vec<f64>,
    spacing_mm: Spacing,
}

impl VectorField2D {
    pub fn new(
        height: usize,
        width: usize,
        dx: Vec<f64>,
        dy: Vec<f64>,
        spacing_mm: Spacing,
    ) -> Result<Self> {
        check_grid(height, width)?;
        check_spacing(spacing_mm)?;
        let n = height * width;
        if dx.len() != n || dy.len() != n {
            return Err(Error::shape(
                format!("{n} values per component"),
                format!("dx: {}, dy: {}", dx.len(), dy.len()),
            ));
        }
        check_finite("vector field dx", &dx)?;
        check_finite("vector field dy", &dy)?;
        Ok(Self {
            height,
            width,
            dx,
            dy,
            spacing_mm,
        })
    }

    pub fn zeros(height: usize, width: usize, spacing_mm: Spacing) -> Result<Self> {
        let n = height * width;
        Self::new(height, width, vec![0.0; n], vec![0.0; n], spacing_mm)
    }

    pub fn constant(height: usize, width: usize, spacing_mm: Spacing, v: (f64, f64)) -> Result<Self> {
        let n = height * width;
        Self::new(height, width, vec![v.0; n], vec![v.1; n], spacing_mm)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        spacing_mm: Spacing,
        mut f: impl FnMut(usize, usize) -> (f64, f64),
    ) -> Result<Self> {
        let n = height * width;
        let mut dx = Vec::with_capacity(n);
        let mut dy = Vec::with_capacity(n);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = f(x, y);
                dx.push(u);
                dy.push(v);
            }
        }
        Self::new(height, width, dx, dy, spacing_mm)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn spacing_mm(&self) -> Spacing {
        self.spacing_mm
    }

    pub fn dx(&self) -> &[f64] {
        &self.dx
    }

    pub fn dy(&self) -> &[f64] {
        &self.dy
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.dx[i], self.dy[i])
    }

    /// Bilinear vector value at a continuous coordinate, clamped to the grid.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> (f64, f64) {
        (
            interp::sample_clamped(&self.dx, self.height, self.width, x, y),
            interp::sample_clamped(&self.dy, self.height, self.width, x, y),
        )
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        self.map_components(|v| v * s)
    }

    /// Applies `f` to both components of every vector.
    pub fn map_components(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.height,
            self.width,
            self.dx.iter().map(|&v| f(v)).collect(),
            self.dy.iter().map(|&v| f(v)).collect(),
            self.spacing_mm,
        )
    }

    /// Componentwise sum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_grid(other.shape())?;
        Self::new(
            self.height,
            self.width,
            self.dx.iter().zip(&other.dx).map(|(a, b)| a + b).collect(),
            self.dy.iter().zip(&other.dy).map(|(a, b)| a + b).collect(),
            self.spacing_mm,
        )
    }

    /// Mean displacement over `mask`.
    pub fn mean_masked(&self, mask: &Mask) -> (f64, f64) {
        let n = mask.count().max(1) as f64;
        let mut acc = (0.0, 0.0);
        for (i, _) in mask.data().iter().enumerate().filter(|(_, &m)| m) {
            acc.0 += self.dx[i];
            acc.1 += self.dy[i];
        }
        (acc.0 / n, acc.1 / n)
    }

    pub fn negated(&self) -> Result<Self> {
        self.scaled(-1.0)
    }

    /// Per-pixel Euclidean norm.
    pub fn magnitude(&self) -> ScalarField2D {
        let data = self
            .dx
            .iter()
            .zip(&self.dy)
            .map(|(u, v)| u.hypot(*v))
            .collect();
        ScalarField2D {
            height: self.height,
            width: self.width,
            data,
            spacing_mm: self.spacing_mm,
        }
    }

    pub fn max_norm(&self) -> f64 {
        self.dx
            .iter()
            .zip(&self.dy)
            .fold(0.0, |m, (u, v)| m.max(u.hypot(*v)))
    }

    /// Largest vector norm among pixels where `mask` is set.
    pub fn max_norm_masked(&self, mask: &Mask) -> f64 {
        self.dx
            .iter()
            .zip(&self.dy)
            .zip(mask.data())
            .filter(|(_, &m)| m)
            .fold(0.0, |m, ((u, v), _)| m.max(u.hypot(*v)))
    }

    pub(crate) fn check_same_grid(&self, other: (usize, usize)) -> Result<()> {
        if self.shape() != other {
            return Err(Error::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.0, other.1),
            ));
        }
        Ok(())
    }
}

/// Boolean pixel mask on a grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(
                format!("{} mask entries", height * width),
                format!("{}", data.len()),
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![true; height * width],
        }
    }

    /// Pixels at least `margin` pixels away from every border.
    pub fn interior(height: usize, width: usize, margin: usize) -> Self {
        let mut data = vec![false; height * width];
        for y in margin..height.saturating_sub(margin) {
            for x in margin..width.saturating_sub(margin) {
                data[y * width + x] = true;
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    /// Pixels whose value exceeds `threshold`.
    pub fn threshold(field: &ScalarField2D, threshold: f64) -> Self {
        Self {
            height: field.height(),
            width: field.width(),
            data: field.data().iter().map(|&v| v > threshold).collect(),
        }
    }

    /// Binary erosion with a square structuring element of half-width `radius`.
    /// Pixels within `radius` of the border are cleared.
    pub fn eroded(&self, radius: usize) -> Self {
        if radius == 0 {
            return self.clone();
        }
        let (h, w) = (self.height, self.width);
        let mut out = vec![false; h * w];
        for y in radius..h.saturating_sub(radius) {
            for x in radius..w.saturating_sub(radius) {
                let mut keep = true;
                'scan: for yy in y - radius..=y + radius {
                    for xx in x - radius..=x + radius {
                        if !self.data[yy * w + xx] {
                            keep = false;
                            break 'scan;
                        }
                    }
                }
                out[y * w + x] = keep;
            }
        }
        Self {
            height: h,
            width: w,
            data: out,
        }
    }

    pub fn and(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }
}
