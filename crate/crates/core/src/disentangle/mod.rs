//! Joint estimation of the anatomy and the tag parameters from the two
//! first-frame tagged images.

mod prior;

pub use prior::{AnatomyPrior, PixelGridPrior};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, Tape, Var};
use crate::error::{Error, Result};
use crate::field::ScalarField2D;
use crate::phantom::{Orientation, TagParams};

/// Starting tag parameters: `A = 0.45`, `B = 0.55`, both phases `2π`, and the
/// frequency read from the nominal tag period.
pub fn init_tag_params(tag_period_hint_mm: f64) -> Result<TagParams> {
    if !(tag_period_hint_mm > 0.0 && tag_period_hint_mm.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "tag period hint must be positive, got {tag_period_hint_mm}"
        )));
    }
    Ok(TagParams {
        amplitude: 0.45,
        offset: 0.55,
        frequency: 1.0 / tag_period_hint_mm,
        phase_h: 2.0 * PI,
        phase_v: 2.0 * PI,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisentangleOptions {
    pub iterations: usize,
    pub lr_latent: f64,
    /// Learning rate of the phases and the raw amplitude/offset.
    pub lr_tag: f64,
    /// Learning rate of the relative frequency correction.
    pub lr_frequency: f64,
    pub tv_weight: f64,
    /// Half-width of the relative frequency search around the hint.
    pub frequency_search: f64,
    pub frequency_steps: usize,
}

impl Default for DisentangleOptions {
    fn default() -> Self {
        Self {
            iterations: 600,
            lr_latent: 1e-2,
            lr_tag: 1e-2,
            lr_frequency: 1e-3,
            tv_weight: 1e-3,
            frequency_search: 0.05,
            frequency_steps: 11,
        }
    }
}

impl DisentangleOptions {
    pub fn validate(&self) -> Result<()> {
        let lrs = [self.lr_latent, self.lr_tag, self.lr_frequency];
        if lrs.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidConfig(format!("invalid learning rates {lrs:?}")));
        }
        if !(0.0..0.5).contains(&self.frequency_search) || self.frequency_steps == 0 {
            return Err(Error::InvalidConfig("invalid frequency search settings".into()));
        }
        if !(self.tv_weight >= 0.0 && self.tv_weight.is_finite()) {
            return Err(Error::InvalidConfig(format!("invalid TV weight {}", self.tv_weight)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisentangleResult {
    pub anatomy: ScalarField2D,
    pub params: TagParams,
    /// Best objective value reached (the returned iterate).
    pub final_loss: f64,
    /// Objective value at every iteration.
    pub loss_history: Vec<f64>,
    /// Set when the inputs carried no signal.
    pub degenerate: bool,
}

/// `(ã₀ · p̃₀ʰ, ã₀ · p̃₀ᵛ)` with the unclipped estimated pattern.
pub fn reconstruct_t0(result: &DisentangleResult) -> Result<(ScalarField2D, ScalarField2D)> {
    let a = &result.anatomy;
    let sp = a.spacing_mm();
    let make = |o: Orientation| {
        ScalarField2D::from_fn(a.height(), a.width(), sp, |x, y| {
            a.get(x, y) * result.params.value_at(o, x as f64, y as f64, sp)
        })
    };
    Ok((make(Orientation::Horizontal)?, make(Orientation::Vertical)?))
}

fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

/// Per-pixel least-squares anatomy for fixed tag patterns, and its
/// objective (without the prior term).
fn profile_fit(g_h: &[f64], g_v: &[f64], p_h: &[f64], p_v: &[f64]) -> (Vec<f64>, f64) {
    let mut loss = 0.0;
    let a = (0..g_h.len())
        .map(|i| {
            let den = p_h[i] * p_h[i] + p_v[i] * p_v[i];
            let a = if den > 1e-12 {
                ((g_h[i] * p_h[i] + g_v[i] * p_v[i]) / den).clamp(0.0, 1.0)
            } else {
                0.0
            };
            loss += (g_h[i] - a * p_h[i]).powi(2) + (g_v[i] - a * p_v[i]).powi(2);
            a
        })
        .collect();
    (a, loss)
}

/// Raw optimisation variables of the tag parameters.
#[derive(Debug, Clone, Copy)]
struct RawTag {
    /// `A = softplus(amp)`.
    amp: f64,
    offset: f64,
    /// `μ = μ_ref · (1 + rel_freq)`.
    rel_freq: f64,
    phase_h: f64,
    phase_v: f64,
}

impl RawTag {
    fn params(&self, freq_ref: f64) -> TagParams {
        TagParams {
            amplitude: softplus(self.amp),
            offset: self.offset,
            frequency: freq_ref * (1.0 + self.rel_freq),
            phase_h: self.phase_h,
            phase_v: self.phase_v,
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Solves `min Σᵢ ‖gᵢ − decode(z) · pᵢ(θ)‖² + penalty(z)` over the latent
/// `z` and the tag parameters `θ`, starting from `init`.
///
/// The tag parameters are first refined by a coarse search over the
/// frequency (around `init.frequency`) and the two phases (four quadrants
/// each), scoring each candidate with the per-pixel optimal anatomy. The
/// best-loss iterate of the subsequent Adam run is returned.
pub fn disentangle(
    g0_h: &ScalarField2D,
    g0_v: &ScalarField2D,
    prior: &dyn AnatomyPrior,
    init: &TagParams,
    opts: &DisentangleOptions,
) -> Result<DisentangleResult> {
    opts.validate()?;
    init.validate()?;
    if g0_h.shape() != g0_v.shape() || g0_h.spacing_mm() != g0_v.spacing_mm() {
        return Err(Error::shape(format!("{:?}", g0_h.shape()), format!("{:?}", g0_v.shape())));
    }
    if prior.latent_len() == 0 {
        return Err(Error::InvalidInput("prior has an empty latent".into()));
    }
    let (h, w) = g0_h.shape();
    let sp = g0_h.spacing_mm();
    let n = h * w;
    let degenerate = g0_h.max_abs().max(g0_v.max_abs()) < 1e-12;
    if degenerate {
        log::warn!("disentangle: both input images are zero; the anatomy is unidentifiable");
    }

    // Phase arguments without the phase: 2π·μ_ref·position_mm.
    let freq_ref = init.frequency;
    let base_v: Vec<f64> = (0..n).map(|i| 2.0 * PI * freq_ref * (i % w) as f64 * sp.0).collect();
    let base_h: Vec<f64> = (0..n).map(|i| 2.0 * PI * freq_ref * (i / w) as f64 * sp.1).collect();
    let pattern = |base: &[f64], p: &TagParams, phase: f64| -> Vec<f64> {
        let scale = p.frequency / freq_ref;
        base.iter().map(|&b| p.amplitude * (b * scale + phase).sin() + p.offset).collect()
    };

    // Coarse multi-start.
    let mut best: Option<(f64, TagParams, Vec<f64>)> = None;
    let steps = opts.frequency_steps;
    for k in 0..steps {
        let rel = if steps == 1 {
            0.0
        } else {
            -opts.frequency_search + 2.0 * opts.frequency_search * k as f64 / (steps - 1) as f64
        };
        for qh in 0..4 {
            for qv in 0..4 {
                let cand = TagParams {
                    frequency: freq_ref * (1.0 + rel),
                    phase_h: init.phase_h + qh as f64 * PI / 2.0,
                    phase_v: init.phase_v + qv as f64 * PI / 2.0,
                    ..*init
                };
                let p_h = pattern(&base_h, &cand, cand.phase_h);
                let p_v = pattern(&base_v, &cand, cand.phase_v);
                let (a, loss) = profile_fit(g0_h.data(), g0_v.data(), &p_h, &p_v);
                if best.as_ref().is_none_or(|b| loss < b.0) {
                    best = Some((loss, cand, a));
                }
            }
        }
    }
    let (_, start, a_est) = best.expect("at least one candidate");
    let estimate = ScalarField2D::new(h, w, a_est, sp)?;

    let mut latent = prior.latent_from_estimate(&estimate)?;
    if latent.len() != prior.latent_len() {
        return Err(Error::shape(
            format!("{} latent values", prior.latent_len()),
            format!("{}", latent.len()),
        ));
    }
    let mut raw = RawTag {
        amp: softplus_inverse(start.amplitude.max(1e-6)),
        offset: start.offset,
        rel_freq: start.frequency / freq_ref - 1.0,
        phase_h: start.phase_h,
        phase_v: start.phase_v,
    };

    let mut adam_latent = AdamState::new(opts.lr_latent);
    let mut adam_tag = AdamState::new(opts.lr_tag);
    let mut adam_freq = AdamState::new(opts.lr_frequency);
    let mut history = Vec::with_capacity(opts.iterations);
    let mut best_iter = (f64::INFINITY, latent.clone(), raw);

    for it in 0..opts.iterations.max(1) {
        let mut t = Tape::new();
        let z = t.param(latent.clone(), &[latent.len()])?;
        let amp = t.param(vec![raw.amp], &[])?;
        let off = t.param(vec![raw.offset], &[])?;
        let rel = t.param(vec![raw.rel_freq], &[])?;
        let ph = t.param(vec![raw.phase_h], &[])?;
        let pv = t.param(vec![raw.phase_v], &[])?;

        let decoded = prior.decode(&mut t, z)?;
        if t.shape(decoded).iter().product::<usize>() != n {
            return Err(Error::shape(format!("{n} decoded pixels"), format!("{:?}", t.shape(decoded))));
        }
        let a = t.reshape(decoded, &[n])?;
        let amplitude = t.softplus(amp)?;
        let scale = t.add_scalar(rel, 1.0)?;
        let mut loss: Option<Var> = None;
        for (base, phase, g) in [(&base_h, ph, g0_h), (&base_v, pv, g0_v)] {
            let b = t.constant(base.clone(), &[n])?;
            let arg = t.mul(b, scale)?;
            let arg = t.add(arg, phase)?;
            let s = t.sin(arg)?;
            let s = t.mul(s, amplitude)?;
            let p = t.add(s, off)?;
            let rec = t.mul(a, p)?;
            let obs = t.constant(g.data().to_vec(), &[n])?;
            let r = t.sub(rec, obs)?;
            let r = t.square(r)?;
            let term = t.sum(r)?;
            loss = Some(match loss {
                None => term,
                Some(l) => t.add(l, term)?,
            });
        }
        let mut loss = loss.expect("two orientations");
        if let Some(pen) = prior.penalty(&mut t, z, decoded)? {
            loss = t.add(loss, pen)?;
        }
        let value = t.item(loss)?;
        if !value.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at iteration {it}")));
        }
        history.push(value);
        if value < best_iter.0 {
            best_iter = (value, latent.clone(), raw);
        }
        if it + 1 >= opts.iterations {
            break;
        }
        t.backward(loss)?;
        let grad = |v: Var| t.grad(v).map(<[f64]>::to_vec).ok_or(Error::GraphConsumed);
        let g_z = grad(z)?;
        let g_tag = [grad(amp)?[0], grad(off)?[0], grad(ph)?[0], grad(pv)?[0]];
        let g_rel = grad(rel)?[0];

        adam_latent.step(&mut [&mut latent], &[&g_z])?;
        let mut tag = [raw.amp, raw.offset, raw.phase_h, raw.phase_v];
        adam_tag.step(&mut [&mut tag], &[&g_tag])?;
        let mut freq = [raw.rel_freq];
        adam_freq.step(&mut [&mut freq], &[&[g_rel]])?;
        raw = RawTag {
            amp: tag[0],
            offset: tag[1],
            rel_freq: freq[0],
            phase_h: tag[2],
            phase_v: tag[3],
        };
    }

    let (final_loss, latent, raw) = best_iter;
    let mut params = raw.params(freq_ref);
    params.phase_h = params.phase_h.rem_euclid(2.0 * PI);
    params.phase_v = params.phase_v.rem_euclid(2.0 * PI);
    let anatomy = ScalarField2D::new(h, w, prior.decode_values(&latent)?, sp)?;
    Ok(DisentangleResult {
        anatomy,
        params,
        final_loss,
        loss_history: history,
        degenerate,
    })
}
