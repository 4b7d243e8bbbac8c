use super::{Tape, Var};
use crate::error::{Error, Result};

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_err: f64,
    /// Input index and element of the worst entry.
    pub worst: (usize, usize),
    pub n_checked: usize,
}

/// Checks the gradient of the scalar built by `build` with respect to every
/// element of every input, using central differences with step `h`.
///
/// `floor` keeps near-zero gradients from dominating the relative error.
pub fn check_gradients<F>(inputs: &[(Vec<f64>, Vec<usize>)], h: f64, floor: f64, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Vec<f64>]| -> Result<f64> {
        let mut t = Tape::new();
        let vars = vals
            .iter()
            .zip(inputs)
            .map(|(v, (_, s))| t.constant(v.clone(), s))
            .collect::<Result<Vec<_>>>()?;
        let out = build(&mut t, &vars)?;
        t.item(out)
    };

    let mut t = Tape::new();
    let vars = inputs
        .iter()
        .map(|(v, s)| t.param(v.clone(), s))
        .collect::<Result<Vec<_>>>()?;
    let out = build(&mut t, &vars)?;
    t.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| t.grad(v).map(<[f64]>::to_vec).ok_or(Error::GraphConsumed))
        .collect::<Result<_>>()?;

    let mut vals: Vec<Vec<f64>> = inputs.iter().map(|(v, _)| v.clone()).collect();
    let mut report = GradCheck {
        max_rel_err: 0.0,
        worst: (0, 0),
        n_checked: 0,
    };
    for k in 0..vals.len() {
        for i in 0..vals[k].len() {
            let x = vals[k][i];
            vals[k][i] = x + h;
            let up = eval(&vals)?;
            vals[k][i] = x - h;
            let down = eval(&vals)?;
            vals[k][i] = x;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[k][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (k, i);
            }
            report.n_checked += 1;
        }
    }
    Ok(report)
}
