use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField2D, Spacing};

/// Sinusoidal tag parameters shared by the horizontal and vertical patterns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagParams {
    pub amplitude: f64,
    pub offset: f64,
    /// Spatial frequency in cycles per millimetre.
    pub frequency: f64,
    pub phase_h: f64,
    pub phase_v: f64,
}

impl TagParams {
    pub fn from_period(period_mm: f64, amplitude: f64, offset: f64) -> Result<Self> {
        if !(period_mm > 0.0 && period_mm.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "tag period must be positive, got {period_mm}"
            )));
        }
        Ok(Self {
            amplitude,
            offset,
            frequency: 1.0 / period_mm,
            phase_h: 0.0,
            phase_v: 0.0,
        })
    }

    pub fn period_mm(&self) -> f64 {
        1.0 / self.frequency
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.amplitude, self.offset, self.frequency, self.phase_h, self.phase_v]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.amplitude < 0.0 || self.frequency <= 0.0 {
            return Err(Error::InvalidInput(format!("invalid tag parameters {self:?}")));
        }
        Ok(())
    }

    /// The same pattern with a different amplitude and offset.
    pub fn with_contrast(&self, amplitude: f64, offset: f64) -> Self {
        Self {
            amplitude,
            offset,
            ..*self
        }
    }

    /// Unclipped pattern value at a pixel position (fractional allowed).
    pub fn value_at(&self, orientation: Orientation, x_px: f64, y_px: f64, spacing_mm: Spacing) -> f64 {
        let arg = match orientation {
            Orientation::Vertical => 2.0 * PI * self.frequency * x_px * spacing_mm.0 + self.phase_v,
            Orientation::Horizontal => 2.0 * PI * self.frequency * y_px * spacing_mm.1 + self.phase_h,
        };
        self.amplitude * arg.sin() + self.offset
    }

    /// Tag frequency in cycles per pixel along the varying axis.
    pub fn frequency_per_px(&self, orientation: Orientation, spacing_mm: Spacing) -> f64 {
        match orientation {
            Orientation::Vertical => self.frequency * spacing_mm.0,
            Orientation::Horizontal => self.frequency * spacing_mm.1,
        }
    }
}

/// Tag line orientation. Vertical tags vary along x, horizontal tags along y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    #[serde(rename = "h")]
    Horizontal,
    #[serde(rename = "v")]
    Vertical,
}

impl Orientation {
    pub const BOTH: [Orientation; 2] = [Orientation::Horizontal, Orientation::Vertical];
}

/// Tag pattern image; negative values are clipped to zero.
pub fn tag_pattern(
    params: &TagParams,
    orientation: Orientation,
    height: usize,
    width: usize,
    spacing_mm: Spacing,
) -> Result<ScalarField2D> {
    params.validate()?;
    ScalarField2D::from_fn(height, width, spacing_mm, |x, y| {
        params
            .value_at(orientation, x as f64, y as f64, spacing_mm)
            .max(0.0)
    })
}

/// Named fading presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FadingPreset {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "FA5")]
    Fa5,
    #[serde(rename = "FA10")]
    Fa10,
}

impl fmt::Display for FadingPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FadingPreset::None => "none",
            FadingPreset::Fa5 => "FA5",
            FadingPreset::Fa10 => "FA10",
        })
    }
}

impl FromStr for FadingPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FadingPreset::None),
            "FA5" => Ok(FadingPreset::Fa5),
            "FA10" => Ok(FadingPreset::Fa10),
            other => Err(Error::InvalidConfig(format!("unknown fading preset {other:?}"))),
        }
    }
}

/// Exponential amplitude decay and offset saturation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingParams {
    pub tau_amplitude_s: f64,
    pub offset_steady: f64,
    pub tau_offset_s: f64,
    pub preset: FadingPreset,
}

impl FadingParams {
    pub fn preset(preset: FadingPreset) -> Self {
        match preset {
            FadingPreset::None => Self {
                tau_amplitude_s: f64::INFINITY,
                offset_steady: 0.0,
                tau_offset_s: f64::INFINITY,
                preset,
            },
            FadingPreset::Fa5 => Self {
                tau_amplitude_s: 0.9,
                offset_steady: 0.75,
                tau_offset_s: 0.9,
                preset,
            },
            FadingPreset::Fa10 => Self {
                tau_amplitude_s: 0.45,
                offset_steady: 0.85,
                tau_offset_s: 0.45,
                preset,
            },
        }
    }

    /// `(A_t, B_t)` at time `t` seconds after tagging.
    pub fn fade(&self, params: &TagParams, t: f64) -> (f64, f64) {
        let t = t.max(0.0);
        let a = params.amplitude * (-t / self.tau_amplitude_s).exp();
        let decay = (-t / self.tau_offset_s).exp();
        let b = if decay == 1.0 {
            params.offset
        } else {
            self.offset_steady - (self.offset_steady - params.offset) * decay
        };
        (a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft;

    #[test]
    fn constant_when_amplitude_is_zero() {
        let p = TagParams::from_period(12.0, 0.0, 1.0).unwrap();
        let img = tag_pattern(&p, Orientation::Vertical, 8, 8, (2.0, 2.0)).unwrap();
        assert!(img.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn periodic_along_varying_axis() {
        let mut p = TagParams::from_period(12.0, 0.45, 0.55).unwrap();
        p.phase_v = 0.3;
        p.phase_h = -1.1;
        let sp = (2.0, 2.0);
        let shift = 1.0 / p.frequency / sp.0;
        for i in 0..50 {
            let x = i as f64 * 0.37;
            let v = Orientation::Vertical;
            let h = Orientation::Horizontal;
            assert!((p.value_at(v, x, 3.0, sp) - p.value_at(v, x + shift, 3.0, sp)).abs() < 1e-12);
            assert!((p.value_at(h, 3.0, x, sp) - p.value_at(h, 3.0, x + shift, sp)).abs() < 1e-12);
            assert_eq!(p.value_at(v, x, 0.0, sp), p.value_at(v, x, 17.0, sp));
        }
    }

    #[test]
    fn fft_peak_matches_tag_frequency() {
        let p = TagParams::from_period(12.0, 0.45, 0.55).unwrap();
        let (h, w) = (48, 48);
        let img = tag_pattern(&p, Orientation::Vertical, h, w, (2.0, 2.0)).unwrap();
        let spec = fft::forward_real(img.data(), h, w);
        // Strongest non-DC bin on the zero-vertical-frequency row.
        let k = (1..w / 2).max_by(|&a, &b| spec[a].norm().total_cmp(&spec[b].norm())).unwrap();
        assert_eq!(fft::bin_frequency(k, w), 1.0 / 6.0);
    }

    #[test]
    fn fading_endpoints_and_monotonicity() {
        let p = TagParams::from_period(12.0, 0.45, 0.55).unwrap();
        for preset in [FadingPreset::Fa5, FadingPreset::Fa10] {
            let f = FadingParams::preset(preset);
            assert_eq!(f.fade(&p, 0.0), (0.45, 0.55));
            let (a, b) = f.fade(&p, 1e4);
            assert!(a < 1e-12 && (b - f.offset_steady).abs() < 1e-12);
            let mut prev = f.fade(&p, 0.0);
            for i in 1..=110 {
                let cur = f.fade(&p, i as f64 * 0.01);
                assert!(cur.0 < prev.0);
                assert!(cur.1 > prev.1);
                prev = cur;
            }
        }
        let none = FadingParams::preset(FadingPreset::None);
        assert_eq!(none.fade(&p, 0.7), (0.45, 0.55));
    }

    #[test]
    fn preset_names_round_trip() {
        for p in [FadingPreset::None, FadingPreset::Fa5, FadingPreset::Fa10] {
            assert_eq!(p.to_string().parse::<FadingPreset>().unwrap(), p);
        }
        assert!("FA7".parse::<FadingPreset>().is_err());
    }
}
