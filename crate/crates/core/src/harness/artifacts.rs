//! On-disk forms of intermediate results: displacement sequences,
//! disentanglement output and per-frame tracking state.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::disentangle::DisentangleResult;
use crate::error::{Error, Result};
use crate::field::{Spacing, VectorField2D};
use crate::phantom::{sibling, TagParams};
use crate::tagseq::Container;
use crate::tracker::{FadingState, LagrangianResult};

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Writes one two-channel frame per displacement field.
pub fn save_displacements(path: &Path, fields: &[VectorField2D]) -> Result<()> {
    let refs: Vec<&VectorField2D> = fields.iter().collect();
    write(path, &Container::from_vector_fields(&refs)?.encode()?)
}

pub fn load_displacements(path: &Path, spacing_mm: Spacing) -> Result<Vec<VectorField2D>> {
    let c = Container::decode(&read(path)?)?;
    if c.channels != 2 {
        return Err(Error::Format(format!("displacements need 2 channels, found {}", c.channels)));
    }
    (0..c.frames).map(|t| c.vector_field(t, spacing_mm)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisentangleMeta {
    pub spacing_mm: Spacing,
    pub params: TagParams,
    pub final_loss: f64,
    pub loss_history: Vec<f64>,
    pub degenerate: bool,
}

/// Anatomy to `path` (single-frame TAGSEQ), everything else to
/// `<name>.disentangle.json`.
pub fn save_disentangled(path: &Path, d: &DisentangleResult) -> Result<()> {
    write(path, &Container::from_scalar_frames(&[vec![&d.anatomy]])?.encode()?)?;
    let meta = DisentangleMeta {
        spacing_mm: d.anatomy.spacing_mm(),
        params: d.params,
        final_loss: d.final_loss,
        loss_history: d.loss_history.clone(),
        degenerate: d.degenerate,
    };
    write(&sibling(path, "disentangle.json"), serde_json::to_string_pretty(&meta)?.as_bytes())
}

pub fn load_disentangled(path: &Path) -> Result<DisentangleResult> {
    let meta: DisentangleMeta = serde_json::from_str(&read_text(&sibling(path, "disentangle.json"))?)?;
    meta.params.validate()?;
    let c = Container::decode(&read(path)?)?;
    if c.frames != 1 || c.channels != 1 {
        return Err(Error::Format(format!(
            "anatomy needs one single-channel frame, found {} x {}",
            c.frames, c.channels
        )));
    }
    Ok(DisentangleResult {
        anatomy: c.scalar_field(0, 0, meta.spacing_mm)?,
        params: meta.params,
        final_loss: meta.final_loss,
        loss_history: meta.loss_history,
        degenerate: meta.degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    pub frame: usize,
    pub fading: FadingState,
    pub loss: f64,
    pub iterations: usize,
}

/// Forward displacements to `path`, inverses to `<name>.inverse.tagseq`,
/// per-frame fading and losses to `<name>.frames.json`.
pub fn save_tracking(path: &Path, result: &LagrangianResult) -> Result<()> {
    let fwd: Vec<VectorField2D> = result.frames.iter().map(|f| f.diffeo.forward.clone()).collect();
    let inv: Vec<VectorField2D> = result.frames.iter().map(|f| f.diffeo.inverse.clone()).collect();
    save_displacements(path, &fwd)?;
    save_displacements(&sibling(path, "inverse.tagseq"), &inv)?;
    let frames: Vec<FrameSummary> = result
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| FrameSummary {
            frame: i,
            fading: f.fading,
            loss: f.loss,
            iterations: f.loss_history.len(),
        })
        .collect();
    write(&sibling(path, "frames.json"), serde_json::to_string_pretty(&frames)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField2D;

    #[test]
    fn disentangled_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.tagseq");
        let anatomy = ScalarField2D::from_fn(6, 5, (2.0, 1.5), |x, y| (x * 3 + y) as f64 * 0.25).unwrap();
        let d = DisentangleResult {
            anatomy,
            params: TagParams::from_period(12.0, 0.4, 0.6).unwrap(),
            final_loss: 0.5,
            loss_history: vec![1.0, 0.5],
            degenerate: false,
        };
        save_disentangled(&path, &d).unwrap();
        assert_eq!(load_disentangled(&path).unwrap(), d);
    }

    #[test]
    fn displacement_round_trip_and_channel_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.tagseq");
        let f = VectorField2D::from_fn(4, 7, (2.0, 2.0), |x, y| (x as f64 * 0.5, -(y as f64))).unwrap();
        save_displacements(&path, &[f.clone(), f.scaled(2.0).unwrap()]).unwrap();
        let back = load_displacements(&path, (2.0, 2.0)).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], f);
        let a = ScalarField2D::zeros(4, 7, (2.0, 2.0)).unwrap();
        write(&path, &Container::from_scalar_frames(&[vec![&a]]).unwrap().encode().unwrap()).unwrap();
        assert!(load_displacements(&path, (2.0, 2.0)).is_err());
    }
}
