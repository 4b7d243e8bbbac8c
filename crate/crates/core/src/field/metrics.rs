use serde::{Deserialize, Serialize};

use super::{max_principal_strain, ScalarField2D, VectorField2D};
use crate::error::Result;

/// End-point error: per-pixel Euclidean norm of `d_gt − d_est`.
pub fn epe(d_gt: &VectorField2D, d_est: &VectorField2D) -> Result<ScalarField2D> {
    d_gt.check_same_grid(d_est.shape())?;
    let (h, w) = d_gt.shape();
    let data = (0..h * w)
        .map(|i| {
            let (ex, ey) = (d_gt.dx()[i] - d_est.dx()[i], d_gt.dy()[i] - d_est.dy()[i]);
            (ex * ex + ey * ey).sqrt()
        })
        .collect();
    ScalarField2D::new(h, w, data, d_gt.spacing_mm())
}

/// Absolute error of the maximum principal strain.
pub fn emps(d_gt: &VectorField2D, d_est: &VectorField2D) -> Result<ScalarField2D> {
    d_gt.check_same_grid(d_est.shape())?;
    max_principal_strain(d_gt).zip_with(&max_principal_strain(d_est), |a, b| (a - b).abs())
}

/// Mean, median and quartiles of a sample. Quantiles interpolate linearly
/// between order statistics. An empty sample yields NaN statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                median: f64::NAN,
                q1: f64::NAN,
                q3: f64::NAN,
                n: 0,
            };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            median: quantile_sorted(&sorted, 0.5),
            q1: quantile_sorted(&sorted, 0.25),
            q3: quantile_sorted(&sorted, 0.75),
            n: values.len(),
        }
    }
}

/// Linear-interpolation quantile of an ascending, non-empty slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}
