//! Synthetic tagged sequences with known anatomy, tag parameters, fading and
//! Lagrangian ground-truth motion.

mod anatomy;
mod io;
mod motion;
mod pattern;
mod spectrum;
mod synth;

pub use anatomy::{gen_oval_anatomy, OvalSpec};
pub use io::{load_sequence, save_sequence, sibling, GroundTruthFiles, SequenceMeta};
pub use motion::{rotation_field, BSplineField, Motion};
pub use pattern::{tag_pattern, FadingParams, FadingPreset, Orientation, TagParams};
pub use spectrum::{harmonic_peak, spectral_profile, HarmonicPeak};
pub use synth::{synthesize_sequence, uniform_times, TaggedSequence};

use serde::{Deserialize, Serialize};

use crate::field::Spacing;

/// Acquisition geometry of a simulated sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub height: usize,
    pub width: usize,
    pub spacing_mm: Spacing,
    pub n_frames: usize,
    pub frame_interval_s: f64,
}

impl Geometry {
    /// 128×128 at 2 mm, 100 frames 11 ms apart.
    pub fn paper() -> Self {
        Self {
            height: 128,
            width: 128,
            spacing_mm: (2.0, 2.0),
            n_frames: 100,
            frame_interval_s: 0.011,
        }
    }

    /// 64×64 at 2 mm, 20 frames spanning the same 1.045 s.
    pub fn desk() -> Self {
        Self {
            height: 64,
            width: 64,
            spacing_mm: (2.0, 2.0),
            n_frames: 20,
            frame_interval_s: 0.055,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        uniform_times(self.n_frames, self.frame_interval_s)
    }
}
