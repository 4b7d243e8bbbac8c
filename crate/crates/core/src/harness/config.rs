use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{HarpOptions, SinModOptions};
use crate::disentangle::DisentangleOptions;
use crate::error::{Error, Result};
use crate::phantom::FadingPreset;
use crate::tracker::TrackOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Brite,
    Harp,
    Sinmod,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Brite, Method::Harp, Method::Sinmod];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Brite => "brite",
            Method::Harp => "harp",
            Method::Sinmod => "sinmod",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "brite" => Ok(Method::Brite),
            "harp" => Ok(Method::Harp),
            "sinmod" => Ok(Method::Sinmod),
            _ => Err(Error::InvalidConfig(format!("unknown method {s:?}"))),
        }
    }
}

/// Motions simulated for every tag period and fading preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionSuite {
    /// Number of random non-rigid (B-spline) deformations.
    pub nonrigid_seeds: usize,
    pub control_spacing_px: f64,
    /// Largest control-point displacement reached at the last frame.
    pub max_control_disp_px: f64,
    /// Final rotation angle; `None` skips the rotation sequence.
    pub rotation_deg: Option<f64>,
    pub include_static: bool,
}

impl Default for MotionSuite {
    fn default() -> Self {
        Self {
            nonrigid_seeds: 20,
            control_spacing_px: 16.0,
            max_control_disp_px: 6.0,
            rotation_deg: Some(15.0),
            include_static: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Image side in pixels (square grids).
    pub grid_size: usize,
    pub spacing_mm: f64,
    pub n_frames: usize,
    pub frame_interval_s: f64,
    pub tag_periods_mm: Vec<f64>,
    pub fading_presets: Vec<FadingPreset>,
    pub motions: MotionSuite,
    pub methods: Vec<Method>,
    /// Simulated tag amplitude and offset at the tagging time.
    pub tag_amplitude: f64,
    pub tag_offset: f64,
    pub noise_sigma: f64,
    /// Metrics are computed on every `frames_every`-th frame and on the last frame.
    pub frames_every: usize,
    pub disentangle: DisentangleOptions,
    pub tracker: TrackOptions,
    pub harp: HarpOptions,
    pub sinmod: SinModOptions,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// 64×64, 20 frames, reduced tracker iterations; runs on a single core.
    pub fn desk() -> Self {
        Self {
            grid_size: 64,
            spacing_mm: 2.0,
            n_frames: 20,
            frame_interval_s: 0.055,
            tag_periods_mm: vec![9.0, 12.0, 18.0, 26.0],
            fading_presets: vec![FadingPreset::Fa5, FadingPreset::Fa10],
            motions: MotionSuite {
                nonrigid_seeds: 2,
                max_control_disp_px: 5.0,
                ..MotionSuite::default()
            },
            methods: Method::ALL.to_vec(),
            tag_amplitude: 0.45,
            tag_offset: 0.55,
            noise_sigma: 0.01,
            frames_every: 5,
            disentangle: DisentangleOptions::default(),
            tracker: TrackOptions::desk(),
            harp: HarpOptions::default(),
            sinmod: SinModOptions::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }

    /// Full-size grid: 128×128, 100 frames at 11 ms, 20 non-rigid motions and
    /// 2000 tracker iterations per frame. Slow.
    pub fn paper() -> Self {
        Self {
            grid_size: 128,
            n_frames: 100,
            frame_interval_s: 0.011,
            motions: MotionSuite {
                max_control_disp_px: 6.0,
                ..MotionSuite::default()
            },
            tracker: TrackOptions::paper(),
            ..Self::desk()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.tag_periods_mm.is_empty() || self.fading_presets.is_empty() {
            return bad("tag period and fading preset lists must be non-empty".into());
        }
        if let Some(p) = self.tag_periods_mm.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return bad(format!("tag period {p} must be positive"));
        }
        if self.grid_size < 32 {
            return bad(format!("grid size {} below 32", self.grid_size));
        }
        if !(self.spacing_mm > 0.0 && self.spacing_mm.is_finite()) {
            return bad(format!("invalid spacing {}", self.spacing_mm));
        }
        // Tags must stay below the Nyquist frequency with room for the band-pass.
        if let Some(p) = self.tag_periods_mm.iter().find(|&&p| p < 3.0 * self.spacing_mm) {
            return bad(format!("tag period {p} mm under-sampled at {} mm spacing", self.spacing_mm));
        }
        if self.n_frames == 0 || !(self.frame_interval_s > 0.0 && self.frame_interval_s.is_finite()) {
            return bad("need at least one frame and a positive frame interval".into());
        }
        if self.frames_every == 0 {
            return bad("frames_every must be at least 1".into());
        }
        if !(self.tag_amplitude >= 0.0 && self.tag_offset >= 0.0 && self.tag_amplitude.is_finite() && self.tag_offset.is_finite()) {
            return bad("tag amplitude and offset must be non-negative".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("invalid noise level {}", self.noise_sigma));
        }
        let m = &self.motions;
        if m.nonrigid_seeds == 0 && m.rotation_deg.is_none() && !m.include_static {
            return bad("motion suite is empty".into());
        }
        if m.nonrigid_seeds > 0 && !(m.max_control_disp_px >= 0.0 && m.max_control_disp_px <= 0.4 * m.control_spacing_px) {
            return bad(format!(
                "control displacement {} px exceeds 0.4 x spacing {} px",
                m.max_control_disp_px, m.control_spacing_px
            ));
        }
        if let Some(a) = m.rotation_deg {
            if !a.is_finite() {
                return bad("rotation angle must be finite".into());
            }
        }
        self.disentangle.validate()?;
        self.tracker.validate()?;
        self.sinmod.validate()?;
        Ok(())
    }

    /// Indices of the frames that receive metrics.
    pub fn evaluated_frames(&self) -> Vec<usize> {
        let last = self.n_frames - 1;
        let mut out: Vec<usize> = (0..self.n_frames).step_by(self.frames_every).collect();
        if out.last() != Some(&last) {
            out.push(last);
        }
        out
    }
}
