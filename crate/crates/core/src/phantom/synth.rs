use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::pattern::{FadingParams, FadingPreset, Orientation, TagParams};
use crate::error::{Error, Result};
use crate::field::{warp, Diffeo, ScalarField2D, Spacing};

/// A tagged image sequence: `T` frames, each with a horizontal and a vertical
/// tag image, plus acquisition metadata and optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedSequence {
    pub frames_h: Vec<ScalarField2D>,
    pub frames_v: Vec<ScalarField2D>,
    pub times_s: Vec<f64>,
    pub tag_period_mm: f64,
    pub spacing_mm: Spacing,
    pub fading: FadingPreset,
    pub seed: u64,
    pub noise_sigma: f64,
    /// Lagrangian ground truth per frame (forward maps frame 0 to frame t).
    pub ground_truth: Option<Vec<Diffeo>>,
    pub anatomy: Option<ScalarField2D>,
    pub tag_params: Option<TagParams>,
}

impl TaggedSequence {
    pub fn len(&self) -> usize {
        self.frames_h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames_h.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.frames_h[0].shape()
    }

    pub fn frame(&self, t: usize, orientation: Orientation) -> &ScalarField2D {
        match orientation {
            Orientation::Horizontal => &self.frames_h[t],
            Orientation::Vertical => &self.frames_v[t],
        }
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.frames_h.len();
        if n == 0 || self.frames_v.len() != n || self.times_s.len() != n {
            return Err(Error::InvalidInput(format!(
                "sequence needs matching non-empty frame lists and times ({} h, {} v, {} times)",
                n,
                self.frames_v.len(),
                self.times_s.len()
            )));
        }
        if self.times_s.windows(2).any(|w| !(w[1] > w[0])) || !self.times_s.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidInput("frame times must be strictly increasing".into()));
        }
        if !(self.tag_period_mm > 0.0 && self.tag_period_mm.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid tag period {}", self.tag_period_mm)));
        }
        let shape = self.frames_h[0].shape();
        let same = |f: &ScalarField2D| f.shape() == shape;
        if !self.frames_h.iter().all(same) || !self.frames_v.iter().all(same) {
            return Err(Error::shape(format!("{shape:?} frames"), "frames of differing shape"));
        }
        if let Some(gt) = &self.ground_truth {
            if gt.len() != n || gt.iter().any(|d| d.shape() != shape) {
                return Err(Error::shape(
                    format!("{n} ground-truth deformations on {shape:?}"),
                    format!("{} deformations", gt.len()),
                ));
            }
        }
        if let Some(a) = &self.anatomy {
            if a.shape() != shape {
                return Err(Error::shape(format!("{shape:?} anatomy"), format!("{:?}", a.shape())));
            }
        }
        Ok(())
    }
}

/// Uniform frame times starting at zero.
pub fn uniform_times(n_frames: usize, dt_s: f64) -> Vec<f64> {
    (0..n_frames).map(|i| i as f64 * dt_s).collect()
}

/// Rounds to the precision of the on-disk container.
fn to_f32_precision(f: &ScalarField2D) -> Result<ScalarField2D> {
    f.map(|v| v as f32 as f64)
}

/// Synthesises `g_t = (a ∘ φ_t⁻¹) · (p_t ∘ φ_t⁻¹)` for both tag orientations.
///
/// The anatomy is warped by bilinear sampling; the faded pattern is
/// evaluated analytically at the deformed positions and clipped at zero.
/// Gaussian noise of standard deviation `noise_sigma` is added last. All
/// stored fields are rounded to single precision so a saved sequence loads
/// back unchanged.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_sequence(
    anatomy: &ScalarField2D,
    params: &TagParams,
    fading: &FadingParams,
    motion: &[Diffeo],
    times_s: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<TaggedSequence> {
    params.validate()?;
    if motion.len() != times_s.len() {
        return Err(Error::InvalidInput(format!(
            "need an inverse deformation for each of {} frames, got {}",
            times_s.len(),
            motion.len()
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("invalid noise level {noise_sigma}")));
    }
    let (h, w) = anatomy.shape();
    let sp = anatomy.spacing_mm();
    let noise = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut frames_h = Vec::with_capacity(motion.len());
    let mut frames_v = Vec::with_capacity(motion.len());
    for (d, &t) in motion.iter().zip(times_s) {
        if d.shape() != (h, w) {
            return Err(Error::shape(format!("{h}x{w} deformation"), format!("{:?}", d.shape())));
        }
        let warped = warp(anatomy, &d.inverse)?;
        let (a_t, b_t) = fading.fade(params, t);
        let faded = params.with_contrast(a_t, b_t);
        for orientation in Orientation::BOTH {
            let img = ScalarField2D::from_fn(h, w, sp, |x, y| {
                let (ux, uy) = d.inverse.get(x, y);
                let p = faded
                    .value_at(orientation, x as f64 + ux, y as f64 + uy, sp)
                    .max(0.0);
                let mut v = warped.get(x, y) * p;
                if noise_sigma > 0.0 {
                    v += noise.sample(&mut rng);
                }
                v
            })?;
            let img = to_f32_precision(&img)?;
            match orientation {
                Orientation::Horizontal => frames_h.push(img),
                Orientation::Vertical => frames_v.push(img),
            }
        }
    }
    let ground_truth = motion
        .iter()
        .map(|d| {
            Ok(Diffeo {
                forward: d.forward.map_components(|v| v as f32 as f64)?,
                inverse: d.inverse.map_components(|v| v as f32 as f64)?,
                n_squaring_steps: d.n_squaring_steps,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let seq = TaggedSequence {
        frames_h,
        frames_v,
        times_s: times_s.to_vec(),
        tag_period_mm: params.period_mm(),
        spacing_mm: sp,
        fading: fading.preset,
        seed,
        noise_sigma,
        ground_truth: Some(ground_truth),
        anatomy: Some(to_f32_precision(anatomy)?),
        tag_params: Some(*params),
    };
    seq.validate()?;
    Ok(seq)
}
