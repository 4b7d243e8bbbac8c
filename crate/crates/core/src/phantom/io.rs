use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pattern::{FadingPreset, TagParams};
use super::synth::TaggedSequence;
use crate::error::{Error, Result};
use crate::field::{Diffeo, Spacing};
use crate::tagseq::Container;

/// Sidecar metadata stored next to a TAGSEQ file as `<name>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceMeta {
    pub spacing_mm: Spacing,
    pub tag_period_mm: f64,
    pub times_s: Vec<f64>,
    pub fading_preset: FadingPreset,
    pub seed: u64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub tag_params: Option<TagParams>,
    /// File names (relative to the sidecar) of the ground-truth forward and
    /// inverse displacement containers.
    #[serde(default)]
    pub ground_truth: Option<GroundTruthFiles>,
    #[serde(default)]
    pub anatomy: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthFiles {
    pub forward: String,
    pub inverse: String,
}

impl SequenceMeta {
    /// Parses and validates sidecar JSON.
    pub fn from_json(text: &str) -> Result<Self> {
        let meta: Self = serde_json::from_str(text)?;
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        let (sx, sy) = self.spacing_mm;
        if !(sx > 0.0 && sy > 0.0 && sx.is_finite() && sy.is_finite()) {
            return Err(Error::Format(format!("invalid spacing {:?}", self.spacing_mm)));
        }
        if !(self.tag_period_mm > 0.0 && self.tag_period_mm.is_finite()) {
            return Err(Error::Format(format!("invalid tag period {}", self.tag_period_mm)));
        }
        if self.times_s.is_empty()
            || !self.times_s.iter().all(|t| t.is_finite())
            || self.times_s.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(Error::Format("times_s must be non-empty and strictly increasing".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Format(format!("invalid noise level {}", self.noise_sigma)));
        }
        let names = self
            .ground_truth
            .iter()
            .flat_map(|g| [&g.forward, &g.inverse])
            .chain(self.anatomy.iter());
        for name in names {
            check_relative_name(name)?;
        }
        if let Some(p) = &self.tag_params {
            p.validate().map_err(|e| Error::Format(e.to_string()))?;
        }
        Ok(())
    }
}

/// Referenced files must be plain names in the sidecar's directory.
fn check_relative_name(name: &str) -> Result<()> {
    let p = Path::new(name);
    let plain = p.components().count() == 1
        && matches!(p.components().next(), Some(std::path::Component::Normal(_)));
    if !plain {
        return Err(Error::Format(format!("referenced file {name:?} must be a plain file name")));
    }
    Ok(())
}

/// `dir/name.tagseq` → `dir/name.<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn file_name(path: &Path) -> String {
    path.file_name().unwrap_or_default().to_string_lossy().into_owned()
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes the frames to `path`, the sidecar `<name>.meta.json`, and, when
/// present, ground truth and anatomy containers next to it.
pub fn save_sequence(seq: &TaggedSequence, path: &Path) -> Result<()> {
    seq.validate()?;
    let frames: Vec<Vec<_>> = (0..seq.len())
        .map(|t| vec![&seq.frames_h[t], &seq.frames_v[t]])
        .collect();
    write_bytes(path, &Container::from_scalar_frames(&frames)?.encode()?)?;

    let ground_truth = match &seq.ground_truth {
        Some(gt) => {
            let fwd_path = sibling(path, "gt_forward.tagseq");
            let inv_path = sibling(path, "gt_inverse.tagseq");
            let fwd: Vec<_> = gt.iter().map(|d| &d.forward).collect();
            let inv: Vec<_> = gt.iter().map(|d| &d.inverse).collect();
            write_bytes(&fwd_path, &Container::from_vector_fields(&fwd)?.encode()?)?;
            write_bytes(&inv_path, &Container::from_vector_fields(&inv)?.encode()?)?;
            Some(GroundTruthFiles {
                forward: file_name(&fwd_path),
                inverse: file_name(&inv_path),
            })
        }
        None => None,
    };
    let anatomy = match &seq.anatomy {
        Some(a) => {
            let p = sibling(path, "anatomy.tagseq");
            write_bytes(&p, &Container::from_scalar_frames(&[vec![a]])?.encode()?)?;
            Some(file_name(&p))
        }
        None => None,
    };
    let meta = SequenceMeta {
        spacing_mm: seq.spacing_mm,
        tag_period_mm: seq.tag_period_mm,
        times_s: seq.times_s.clone(),
        fading_preset: seq.fading,
        seed: seq.seed,
        noise_sigma: seq.noise_sigma,
        tag_params: seq.tag_params,
        ground_truth,
        anatomy,
    };
    let json = serde_json::to_string_pretty(&meta)?;
    write_bytes(&sibling(path, "meta.json"), json.as_bytes())
}

pub fn load_sequence(path: &Path) -> Result<TaggedSequence> {
    let meta_path = sibling(path, "meta.json");
    let text = String::from_utf8(read_bytes(&meta_path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", meta_path.display())))?;
    let meta = SequenceMeta::from_json(&text)?;
    let c = Container::decode(&read_bytes(path)?)?;
    if c.channels != 2 {
        return Err(Error::Format(format!("tag sequence needs 2 channels, found {}", c.channels)));
    }
    if c.frames != meta.times_s.len() {
        return Err(Error::Format(format!(
            "{} frames in container but {} frame times",
            c.frames,
            meta.times_s.len()
        )));
    }
    let sp = meta.spacing_mm;
    let mut frames_h = Vec::with_capacity(c.frames);
    let mut frames_v = Vec::with_capacity(c.frames);
    for t in 0..c.frames {
        frames_h.push(c.scalar_field(t, 0, sp)?);
        frames_v.push(c.scalar_field(t, 1, sp)?);
    }
    let dir = path.parent().unwrap_or(Path::new(""));
    let ground_truth = match &meta.ground_truth {
        Some(files) => {
            let fwd = Container::decode(&read_bytes(&dir.join(&files.forward))?)?;
            let inv = Container::decode(&read_bytes(&dir.join(&files.inverse))?)?;
            if fwd.frames != c.frames || inv.frames != c.frames {
                return Err(Error::Format("ground truth frame count differs from sequence".into()));
            }
            let gt = (0..c.frames)
                .map(|t| {
                    Ok(Diffeo {
                        forward: fwd.vector_field(t, sp)?,
                        inverse: inv.vector_field(t, sp)?,
                        n_squaring_steps: 0,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Some(gt)
        }
        None => None,
    };
    let anatomy = match &meta.anatomy {
        Some(name) => Some(Container::decode(&read_bytes(&dir.join(name))?)?.scalar_field(0, 0, sp)?),
        None => None,
    };
    let seq = TaggedSequence {
        frames_h,
        frames_v,
        times_s: meta.times_s,
        tag_period_mm: meta.tag_period_mm,
        spacing_mm: sp,
        fading: meta.fading_preset,
        seed: meta.seed,
        noise_sigma: meta.noise_sigma,
        ground_truth,
        anatomy,
        tag_params: meta.tag_params,
    };
    seq.validate().map_err(|e| Error::Format(e.to_string()))?;
    Ok(seq)
}
