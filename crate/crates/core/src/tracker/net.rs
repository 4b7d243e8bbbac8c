use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::field::{Spacing, VectorField2D};

/// Fully connected layer, `y = x·W + b` with `W` stored `in × out` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Coordinate network mapping normalised pixel positions in `[-1, 1]²` to a
/// velocity in pixels. Hidden layers use `tanh`; the output layer starts at
/// zero so a fresh network encodes the identity deformation.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityNet {
    pub layers: Vec<Linear>,
}

/// Tape handles of the network parameters, in layer order (weight, bias).
pub(crate) struct NetVars {
    pub(crate) params: Vec<Var>,
}

impl VelocityNet {
    /// Glorot-uniform hidden layers and a zero output layer.
    pub fn new(seed: u64, hidden_width: usize, hidden_layers: usize) -> Result<Self> {
        if hidden_width == 0 || hidden_layers == 0 {
            return Err(Error::InvalidConfig(format!(
                "network needs at least one hidden layer of positive width, got {hidden_layers}x{hidden_width}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(hidden_layers + 1);
        let mut inputs = 2;
        for _ in 0..hidden_layers {
            let limit = (6.0 / (inputs + hidden_width) as f64).sqrt();
            layers.push(Linear {
                inputs,
                outputs: hidden_width,
                weight: (0..inputs * hidden_width).map(|_| rng.random_range(-limit..limit)).collect(),
                bias: vec![0.0; hidden_width],
            });
            inputs = hidden_width;
        }
        layers.push(Linear {
            inputs,
            outputs: 2,
            weight: vec![0.0; inputs * 2],
            bias: vec![0.0; 2],
        });
        Ok(Self { layers })
    }

    /// Zeroes the output layer, keeping the hidden features.
    pub fn reset_output(&mut self) {
        if let Some(last) = self.layers.last_mut() {
            last.weight.iter_mut().for_each(|w| *w = 0.0);
            last.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Flat parameter views in the order used by [`VelocityNet::record`].
    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight[..], &mut l.bias[..]])
            .collect()
    }

    /// Records the parameters on `tape` as trainable leaves.
    pub(crate) fn record(&self, tape: &mut Tape) -> Result<NetVars> {
        let mut params = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            params.push(tape.param(l.weight.clone(), &[l.inputs, l.outputs])?);
            params.push(tape.param(l.bias.clone(), &[l.outputs])?);
        }
        Ok(NetVars { params })
    }

    /// Differentiable forward pass of `inputs` (`N×2`).
    pub(crate) fn forward(&self, tape: &mut Tape, vars: &NetVars, inputs: Var) -> Result<Var> {
        let mut x = inputs;
        let last = self.layers.len() - 1;
        for i in 0..self.layers.len() {
            let y = tape.matmul(x, vars.params[2 * i])?;
            let y = tape.add(y, vars.params[2 * i + 1])?;
            x = if i < last { tape.tanh(y)? } else { y };
        }
        Ok(x)
    }

    /// Velocity at every pixel of an `height × width` grid.
    pub fn velocity_field(&self, height: usize, width: usize, spacing_mm: Spacing) -> Result<VectorField2D> {
        let mut tape = Tape::new();
        let inputs = tape.constant(normalized_grid(height, width), &[height * width, 2])?;
        let vars = self.record_constant(&mut tape)?;
        let out = self.forward(&mut tape, &vars, inputs)?;
        let v = tape.value(out);
        let dx = v.iter().step_by(2).copied().collect();
        let dy = v.iter().skip(1).step_by(2).copied().collect();
        VectorField2D::new(height, width, dx, dy, spacing_mm)
    }

    fn record_constant(&self, tape: &mut Tape) -> Result<NetVars> {
        let mut params = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            params.push(tape.constant(l.weight.clone(), &[l.inputs, l.outputs])?);
            params.push(tape.constant(l.bias.clone(), &[l.outputs])?);
        }
        Ok(NetVars { params })
    }

    /// Upper bound on the Lipschitz constant of the map from pixel
    /// coordinates to velocity: product of layer Frobenius norms times the
    /// coordinate normalisation slope (`tanh` is 1-Lipschitz).
    pub fn lipschitz_bound(&self, height: usize, width: usize) -> f64 {
        let slope = 2.0 / ((height.min(width) - 1) as f64);
        self.layers
            .iter()
            .map(|l| l.weight.iter().map(|w| w * w).sum::<f64>().sqrt())
            .product::<f64>()
            * slope
    }
}

/// Pixel centres mapped affinely to `[-1, 1]²`, as an `N×2` row-major list.
pub(crate) fn normalized_grid(height: usize, width: usize) -> Vec<f64> {
    let sx = 2.0 / (width - 1) as f64;
    let sy = 2.0 / (height - 1) as f64;
    let mut out = Vec::with_capacity(2 * height * width);
    for y in 0..height {
        for x in 0..width {
            out.push(x as f64 * sx - 1.0);
            out.push(y as f64 * sy - 1.0);
        }
    }
    out
}
