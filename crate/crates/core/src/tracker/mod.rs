//! Lagrangian motion estimation: a coordinate network produces a stationary
//! velocity field, its exponential map gives the deformation, and the
//! network is fitted so the warped anatomy times the warped, faded tag
//! pattern reproduces each observed frame.

mod net;

pub use net::{Linear, VelocityNet};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, Tape, Var};
use crate::disentangle::DisentangleResult;
use crate::error::{Error, Result};
use crate::field::{exp_map, warp, Diffeo, Mask, ScalarField2D, VectorField2D, DEFAULT_SQUARING_STEPS};
use crate::phantom::{Orientation, TagParams, TaggedSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackOptions {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    /// Iteration cap per frame.
    pub iterations: usize,
    pub lr_net: f64,
    pub lr_fading: f64,
    pub n_squaring_steps: usize,
    /// Stop once the best loss improved by less than `plateau_tol`
    /// (relative) over the last `plateau_window` iterations; 0 disables.
    pub plateau_window: usize,
    pub plateau_tol: f64,
    pub seed: u64,
    /// Start each frame's `(A_t, B_t)` from the previous frame instead of 0.5.
    pub warm_start_fading: bool,
    /// Restrict the loss to pixels where the reference anatomy exceeds this
    /// level; `None` uses the whole image.
    pub mask_threshold: Option<f64>,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self::paper()
    }
}

impl TrackOptions {
    /// Network and schedule of the original method: 3×128 tanh layers, up to
    /// 2000 iterations per frame.
    pub fn paper() -> Self {
        Self {
            hidden_width: 128,
            hidden_layers: 3,
            iterations: 2000,
            lr_net: 1e-4,
            lr_fading: 5e-2,
            n_squaring_steps: DEFAULT_SQUARING_STEPS,
            plateau_window: 200,
            plateau_tol: 1e-6,
            seed: 0,
            warm_start_fading: false,
            mask_threshold: None,
        }
    }

    /// Reduced network and iteration cap for single-core runs on 64×64 grids.
    pub fn desk() -> Self {
        Self {
            hidden_width: 32,
            iterations: 250,
            lr_net: 3e-3,
            plateau_window: 40,
            plateau_tol: 1e-4,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 || self.hidden_layers == 0 {
            return Err(Error::InvalidConfig("network must have a hidden layer".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be positive".into()));
        }
        if !(1..=30).contains(&self.n_squaring_steps) {
            return Err(Error::InvalidConfig(format!(
                "squaring steps must be in 1..=30, got {}",
                self.n_squaring_steps
            )));
        }
        for (name, v) in [("lr_net", self.lr_net), ("lr_fading", self.lr_fading), ("plateau_tol", self.plateau_tol)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Time-varying tag amplitude and offset of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingState {
    pub amplitude: f64,
    pub offset: f64,
}

impl Default for FadingState {
    fn default() -> Self {
        Self {
            amplitude: 0.5,
            offset: 0.5,
        }
    }
}

/// Fixed quantities every frame is explained by: the reference anatomy, the
/// frozen tag geometry, and the inverse pre-imaging displacement applied to
/// the pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub anatomy: ScalarField2D,
    pub params: TagParams,
    pub pre_inverse: Option<VectorField2D>,
}

impl Reference {
    pub fn from_disentangled(d: &DisentangleResult) -> Self {
        Self {
            anatomy: d.anatomy.clone(),
            params: d.params,
            pre_inverse: None,
        }
    }

    fn pattern_position(&self, qx: f64, qy: f64) -> (f64, f64) {
        match &self.pre_inverse {
            Some(e) => {
                let (ex, ey) = e.sample(qx, qy);
                (qx + ex, qy + ey)
            }
            None => (qx, qy),
        }
    }
}

/// Pieces of a reconstructed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub warped_anatomy: ScalarField2D,
    pub pattern_h: ScalarField2D,
    pub pattern_v: ScalarField2D,
    pub frame_h: ScalarField2D,
    pub frame_v: ScalarField2D,
}

/// `g̃ = (ã ∘ φ⁻¹) · (p̂ ∘ φ₀⁻¹ ∘ φ⁻¹)` with faded amplitude and offset.
pub fn reconstruct_frame(reference: &Reference, fading: FadingState, inverse: &VectorField2D) -> Result<Reconstruction> {
    let a = &reference.anatomy;
    if inverse.shape() != a.shape() {
        return Err(Error::shape(format!("{:?}", a.shape()), format!("{:?}", inverse.shape())));
    }
    let (h, w) = a.shape();
    let sp = a.spacing_mm();
    let params = reference.params.with_contrast(fading.amplitude, fading.offset);
    let warped_anatomy = warp(a, inverse)?;
    let pattern = |o: Orientation| {
        ScalarField2D::from_fn(h, w, sp, |x, y| {
            let (ux, uy) = inverse.get(x, y);
            let (px, py) = reference.pattern_position(x as f64 + ux, y as f64 + uy);
            params.value_at(o, px, py, sp)
        })
    };
    let pattern_h = pattern(Orientation::Horizontal)?;
    let pattern_v = pattern(Orientation::Vertical)?;
    let frame_h = warped_anatomy.zip_with(&pattern_h, |a, p| a * p)?;
    let frame_v = warped_anatomy.zip_with(&pattern_v, |a, p| a * p)?;
    Ok(Reconstruction {
        warped_anatomy,
        pattern_h,
        pattern_v,
        frame_h,
        frame_v,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub diffeo: Diffeo,
    pub fading: FadingState,
    /// Loss of the returned (best) iterate.
    pub loss: f64,
    pub loss_history: Vec<f64>,
    pub reconstruction: Reconstruction,
    pub tag_params: TagParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianResult {
    /// One entry per sequence frame; entry 0 holds the pre-imaging fit.
    pub frames: Vec<FrameResult>,
    pub pre_imaging: Diffeo,
    /// Reference anatomy after removing the pre-imaging deformation.
    pub reference: Reference,
}

impl LagrangianResult {
    /// Forward displacement of every frame.
    pub fn displacements(&self) -> Vec<&VectorField2D> {
        self.frames.iter().map(|f| &f.diffeo.forward).collect()
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

/// Constant tensors shared by every iteration of one frame.
struct FrameContext<'a> {
    height: usize,
    width: usize,
    grid_in: Vec<f64>,
    pixels: Vec<f64>,
    reference: &'a Reference,
    targets: [Vec<f64>; 2],
    weights: Option<Vec<f64>>,
}

impl<'a> FrameContext<'a> {
    fn new(reference: &'a Reference, g_h: &ScalarField2D, g_v: &ScalarField2D, mask: Option<&Mask>) -> Result<Self> {
        let (h, w) = reference.anatomy.shape();
        if g_h.shape() != (h, w) || g_v.shape() != (h, w) {
            return Err(Error::shape(format!("{h}x{w} frames"), format!("{:?}", g_h.shape())));
        }
        let mut pixels = Vec::with_capacity(2 * h * w);
        for y in 0..h {
            for x in 0..w {
                pixels.push(x as f64);
                pixels.push(y as f64);
            }
        }
        Ok(Self {
            height: h,
            width: w,
            grid_in: net::normalized_grid(h, w),
            pixels,
            reference,
            targets: [g_h.data().to_vec(), g_v.data().to_vec()],
            weights: mask.map(|m| m.data().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()),
        })
    }

    /// Splits an `N×2` displacement into two `H×W` component images.
    fn components(&self, tape: &mut Tape, d: Var) -> Result<(Var, Var)> {
        let (h, w) = (self.height, self.width);
        let dx = tape.slice(d, 1, 0, 1)?;
        let dy = tape.slice(d, 1, 1, 2)?;
        Ok((tape.reshape(dx, &[h, w])?, tape.reshape(dy, &[h, w])?))
    }

    /// Samples both components of the `H×W` images at `coords` and stacks
    /// them back into `N×2`.
    fn sample_pair(&self, tape: &mut Tape, (cx, cy): (Var, Var), coords: Var) -> Result<Var> {
        let n = self.height * self.width;
        let sx = tape.grid_sample(cx, coords)?;
        let sy = tape.grid_sample(cy, coords)?;
        let sx = tape.reshape(sx, &[n, 1])?;
        let sy = tape.reshape(sy, &[n, 1])?;
        tape.concat(&[sx, sy], 1)
    }

    /// Loss of the reconstruction for the given network and fading leaves.
    fn loss(
        &self,
        tape: &mut Tape,
        net: &VelocityNet,
        vars: &net::NetVars,
        amp_raw: Var,
        offset: Var,
        n_steps: usize,
    ) -> Result<Var> {
        let (h, w) = (self.height, self.width);
        let n = h * w;
        let sp = self.reference.anatomy.spacing_mm();
        let input = tape.constant(self.grid_in.clone(), &[n, 2])?;
        let velocity = net.forward(tape, vars, input)?;

        // Inverse map by scaling and squaring of the negated velocity.
        let mut d = tape.scale(velocity, -1.0 / (1u64 << n_steps) as f64)?;
        let pixels = tape.constant(self.pixels.clone(), &[n, 2])?;
        for _ in 0..n_steps {
            let comps = self.components(tape, d)?;
            let coords = tape.add(pixels, d)?;
            let s = self.sample_pair(tape, comps, coords)?;
            d = tape.add(d, s)?;
        }
        let q = tape.add(pixels, d)?;

        let anatomy = tape.constant(self.reference.anatomy.data().to_vec(), &[h, w])?;
        let warped = tape.grid_sample(anatomy, q)?;
        let r = match &self.reference.pre_inverse {
            Some(e) => {
                let ex = tape.constant(e.dx().to_vec(), &[h, w])?;
                let ey = tape.constant(e.dy().to_vec(), &[h, w])?;
                let s = self.sample_pair(tape, (ex, ey), q)?;
                tape.add(q, s)?
            }
            None => q,
        };
        let amplitude = tape.softplus(amp_raw)?;
        let p = &self.reference.params;
        let mut total: Option<Var> = None;
        for (k, (axis, phase, step)) in [(1usize, p.phase_h, sp.1), (0, p.phase_v, sp.0)].into_iter().enumerate() {
            let pos = tape.slice(r, 1, axis, axis + 1)?;
            let pos = tape.reshape(pos, &[n])?;
            let arg = tape.scale(pos, 2.0 * PI * p.frequency * step)?;
            let arg = tape.add_scalar(arg, phase)?;
            let s = tape.sin(arg)?;
            let s = tape.mul(s, amplitude)?;
            let pattern = tape.add(s, offset)?;
            let rec = tape.mul(warped, pattern)?;
            let target = tape.constant(self.targets[k].clone(), &[n])?;
            let res = tape.sub(rec, target)?;
            let mut sq = tape.square(res)?;
            if let Some(wts) = &self.weights {
                let m = tape.constant(wts.clone(), &[n])?;
                sq = tape.mul(sq, m)?;
            }
            let term = tape.sum(sq)?;
            total = Some(match total {
                None => term,
                Some(t) => tape.add(t, term)?,
            });
        }
        Ok(total.expect("two orientations"))
    }
}

/// Fits one frame starting from `net` and `fading`; returns the result and
/// the best network (the warm start for the next frame).
pub fn track_frame(
    net: &VelocityNet,
    fading: FadingState,
    g_h: &ScalarField2D,
    g_v: &ScalarField2D,
    reference: &Reference,
    opts: &TrackOptions,
) -> Result<(FrameResult, VelocityNet)> {
    opts.validate()?;
    let mask = opts
        .mask_threshold
        .map(|t| Mask::threshold(&reference.anatomy, t));
    let ctx = FrameContext::new(reference, g_h, g_v, mask.as_ref())?;
    let mut net = net.clone();
    let mut amp_raw = softplus_inverse(fading.amplitude.max(1e-6));
    let mut offset = fading.offset;
    let mut adam_net = AdamState::new(opts.lr_net);
    let mut adam_fading = AdamState::new(opts.lr_fading);

    let mut history = Vec::with_capacity(opts.iterations);
    let mut best_curve = Vec::with_capacity(opts.iterations);
    let mut best = (f64::INFINITY, net.clone(), amp_raw, offset);
    for it in 0..opts.iterations {
        let mut tape = Tape::new();
        let vars = net.record(&mut tape)?;
        let a = tape.param(vec![amp_raw], &[])?;
        let b = tape.param(vec![offset], &[])?;
        let loss = ctx.loss(&mut tape, &net, &vars, a, b, opts.n_squaring_steps)?;
        let value = tape.item(loss)?;
        history.push(value);
        if value < best.0 {
            best = (value, net.clone(), amp_raw, offset);
        }
        best_curve.push(best.0);
        let w = opts.plateau_window;
        if w > 0 && it >= w && best_curve[it - w] - best.0 <= opts.plateau_tol * best.0 {
            break;
        }
        if it + 1 == opts.iterations {
            break;
        }
        tape.backward(loss)?;
        let grads: Vec<Vec<f64>> = vars
            .params
            .iter()
            .map(|&v| tape.grad(v).map(<[f64]>::to_vec).ok_or(Error::GraphConsumed))
            .collect::<Result<_>>()?;
        let g_fading = [
            tape.grad(a).ok_or(Error::GraphConsumed)?[0],
            tape.grad(b).ok_or(Error::GraphConsumed)?[0],
        ];
        let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        adam_net.step(&mut net.param_slices_mut(), &grad_refs)?;
        let mut f = [amp_raw, offset];
        adam_fading.step(&mut [&mut f], &[&g_fading])?;
        [amp_raw, offset] = f;
    }

    let (loss, net, amp_raw, offset) = best;
    let (h, w) = reference.anatomy.shape();
    let velocity = net.velocity_field(h, w, reference.anatomy.spacing_mm())?;
    let diffeo = exp_map(&velocity, opts.n_squaring_steps)?;
    let fading = FadingState {
        amplitude: softplus(amp_raw),
        offset,
    };
    let reconstruction = reconstruct_frame(reference, fading, &diffeo.inverse)?;
    Ok((
        FrameResult {
            diffeo,
            fading,
            loss,
            loss_history: history,
            reconstruction,
            tag_params: reference.params,
        },
        net,
    ))
}

/// Tracks every frame of `seq` against the first-frame disentanglement.
///
/// Frame 0 is fitted first; its deformation is the pre-imaging deformation,
/// which is then folded into the reference anatomy and pattern. Later frames
/// are fitted in order, each network warm-started from the previous frame.
pub fn track_sequence(seq: &TaggedSequence, disentangled: &DisentangleResult, opts: &TrackOptions) -> Result<LagrangianResult> {
    opts.validate()?;
    seq.validate()?;
    if seq.shape() != disentangled.anatomy.shape() {
        return Err(Error::shape(
            format!("{:?} sequence", seq.shape()),
            format!("{:?} disentangled anatomy", disentangled.anatomy.shape()),
        ));
    }
    let base = Reference::from_disentangled(disentangled);
    let fresh = VelocityNet::new(opts.seed, opts.hidden_width, opts.hidden_layers)?;
    let (first, mut net) = track_frame(&fresh, FadingState::default(), &seq.frames_h[0], &seq.frames_v[0], &base, opts)?;
    log::debug!("frame 0 (pre-imaging): loss {:.6e}", first.loss);
    let pre_imaging = first.diffeo.clone();
    let reference = Reference {
        anatomy: warp(&base.anatomy, &pre_imaging.inverse)?,
        params: base.params,
        pre_inverse: Some(pre_imaging.inverse.clone()),
    };
    net.reset_output();
    let mut fading = first.fading;
    let mut frames = vec![first];
    for t in 1..seq.len() {
        let start = if opts.warm_start_fading { fading } else { FadingState::default() };
        let (res, next) = track_frame(&net, start, &seq.frames_h[t], &seq.frames_v[t], &reference, opts)?;
        log::debug!(
            "frame {t}: loss {:.6e} after {} iterations, A {:.3} B {:.3}",
            res.loss,
            res.loss_history.len(),
            res.fading.amplitude,
            res.fading.offset
        );
        fading = res.fading;
        net = next;
        frames.push(res);
    }
    Ok(LagrangianResult {
        frames,
        pre_imaging,
        reference,
    })
}
