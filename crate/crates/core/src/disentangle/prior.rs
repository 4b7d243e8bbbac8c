use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::field::ScalarField2D;

/// Maps a latent vector to an anatomy image with values in `[0, 1]`.
///
/// Implementations must build `decode` and `penalty` from differentiable tape
/// operations so the latent can be optimised jointly with the tag
/// parameters.
pub trait AnatomyPrior {
    fn latent_len(&self) -> usize;

    /// Latent whose decoding approximates `estimate` (values may fall outside
    /// `[0, 1]`; implementations clamp as needed).
    fn latent_from_estimate(&self, estimate: &ScalarField2D) -> Result<Vec<f64>>;

    /// Decoded anatomy as a flat `H·W` tensor in row-major order.
    fn decode(&self, tape: &mut Tape, latent: Var) -> Result<Var>;

    /// Regularisation added to the data term; `None` for no penalty.
    fn penalty(&self, tape: &mut Tape, latent: Var, decoded: Var) -> Result<Option<Var>>;

    /// Non-differentiable decode for export.
    fn decode_values(&self, latent: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let z = tape.constant(latent.to_vec(), &[latent.len()])?;
        let a = self.decode(&mut tape, z)?;
        Ok(tape.value(a).to_vec())
    }
}

/// One latent per pixel squashed by a logistic function, regularised by the
/// total variation of the decoded image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelGridPrior {
    pub height: usize,
    pub width: usize,
    pub tv_weight: f64,
}

/// Smoothing of `|t| ≈ sqrt(t² + ε)` in the total variation.
const TV_EPS: f64 = 1e-8;
/// Latent values are kept where the logistic still has usable slope.
const ESTIMATE_CLAMP: f64 = 0.01;

impl PixelGridPrior {
    pub fn new(height: usize, width: usize, tv_weight: f64) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::InvalidInput(format!("grid {height}x{width} too small")));
        }
        if !(tv_weight >= 0.0 && tv_weight.is_finite()) {
            return Err(Error::InvalidConfig(format!("invalid TV weight {tv_weight}")));
        }
        Ok(Self {
            height,
            width,
            tv_weight,
        })
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl AnatomyPrior for PixelGridPrior {
    fn latent_len(&self) -> usize {
        self.height * self.width
    }

    fn latent_from_estimate(&self, estimate: &ScalarField2D) -> Result<Vec<f64>> {
        if estimate.shape() != (self.height, self.width) {
            return Err(Error::shape(
                format!("{}x{}", self.height, self.width),
                format!("{:?}", estimate.shape()),
            ));
        }
        Ok(estimate
            .data()
            .iter()
            .map(|&v| logit(v.clamp(ESTIMATE_CLAMP, 1.0 - ESTIMATE_CLAMP)))
            .collect())
    }

    fn decode(&self, tape: &mut Tape, latent: Var) -> Result<Var> {
        tape.sigmoid(latent)
    }

    fn penalty(&self, tape: &mut Tape, _latent: Var, decoded: Var) -> Result<Option<Var>> {
        if self.tv_weight == 0.0 {
            return Ok(None);
        }
        let (h, w) = (self.height, self.width);
        let img = tape.reshape(decoded, &[h, w])?;
        let mut total = None;
        for axis in [0, 1] {
            let n = if axis == 0 { h } else { w };
            let hi = tape.slice(img, axis, 1, n)?;
            let lo = tape.slice(img, axis, 0, n - 1)?;
            let d = tape.sub(hi, lo)?;
            let d = tape.square(d)?;
            let d = tape.add_scalar(d, TV_EPS)?;
            let d = tape.sqrt(d)?;
            let s = tape.sum(d)?;
            total = Some(match total {
                None => s,
                Some(t) => tape.add(t, s)?,
            });
        }
        let tv = total.expect("two axes");
        Ok(Some(tape.scale(tv, self.tv_weight)?))
    }
}
