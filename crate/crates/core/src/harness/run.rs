use std::fs;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use super::metrics::{evaluate_frame, foreground_mask, write_metrics_csv, MetricsRecord, RecordKey};
use crate::baselines::{harp_track, sinmod_track, BandpassSpec};
use crate::disentangle::{disentangle, init_tag_params, DisentangleResult, PixelGridPrior};
use crate::error::{Error, Result};
use crate::field::{ScalarField2D, VectorField2D};
use crate::phantom::{
    gen_oval_anatomy, synthesize_sequence, uniform_times, BSplineField, FadingParams, FadingPreset, Motion, Orientation,
    OvalSpec, TagParams, TaggedSequence,
};
use crate::tracker::{track_sequence, LagrangianResult};

/// One simulated sequence of the experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub tag_period_mm: f64,
    pub preset: FadingPreset,
    pub motion_id: String,
    pub motion: Motion,
    /// Seed of the acquisition noise.
    pub noise_seed: u64,
}

/// Quantities shared by every cell: the anatomy and the tag phases.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub anatomy: ScalarField2D,
    pub anatomy_seed: u64,
    pub phase_h: f64,
    pub phase_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub cell: usize,
    pub motion_id: String,
    pub tag_period_mm: f64,
    pub preset: FadingPreset,
    pub method: Option<Method>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSeeds {
    pub cell: usize,
    pub motion_id: String,
    pub tag_period_mm: f64,
    pub preset: FadingPreset,
    pub noise_seed: u64,
}

/// Everything needed to reproduce a run. Contains no timestamps, so two
/// runs with the same configuration produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub crate_version: String,
    pub config: ExperimentConfig,
    pub anatomy_seed: u64,
    pub cells: Vec<CellSeeds>,
    pub n_records: usize,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub manifest: Manifest,
}

fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

// Stream 0 draws the scene, stream 1 the non-rigid motions, streams from 2 on the per-cell noise.
const SCENE_STREAM: u64 = 0;
const MOTION_STREAM: u64 = 1;
const CELL_STREAM_BASE: u64 = 2;

pub fn make_scene(cfg: &ExperimentConfig) -> Result<Scene> {
    let mut rng = stream_rng(cfg.seed, SCENE_STREAM);
    let anatomy_seed = rng.next_u64();
    let phase_h = rng.random_range(0.0..std::f64::consts::TAU);
    let phase_v = rng.random_range(0.0..std::f64::consts::TAU);
    let sp = (cfg.spacing_mm, cfg.spacing_mm);
    let anatomy = gen_oval_anatomy(anatomy_seed, cfg.grid_size, cfg.grid_size, sp, &OvalSpec::default())?;
    Ok(Scene {
        anatomy,
        anatomy_seed,
        phase_h,
        phase_v,
    })
}

/// Motion suite shared by all tag periods and presets.
pub fn make_motions(cfg: &ExperimentConfig) -> Result<Vec<(String, Motion)>> {
    let m = &cfg.motions;
    let n = cfg.grid_size;
    let mut out = Vec::new();
    if m.include_static {
        out.push(("static".to_string(), Motion::Static));
    }
    if let Some(angle_deg) = m.rotation_deg {
        let c = (n as f64 - 1.0) / 2.0;
        out.push((
            "rotation".to_string(),
            Motion::Rotation {
                angle_deg,
                center: (c, c),
            },
        ));
    }
    let mut rng = stream_rng(cfg.seed, MOTION_STREAM);
    for i in 0..m.nonrigid_seeds {
        let field = BSplineField::random(rng.next_u64(), n, n, m.control_spacing_px, m.max_control_disp_px)?;
        out.push((format!("nonrigid-{i}"), Motion::BSpline(field)));
    }
    Ok(out)
}

/// Grid cells in a fixed order: tag period, then preset, then motion.
pub fn plan_cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let motions = make_motions(cfg)?;
    let mut cells = Vec::new();
    for &tp in &cfg.tag_periods_mm {
        for &preset in &cfg.fading_presets {
            for (id, motion) in &motions {
                let index = cells.len();
                let noise_seed = stream_rng(cfg.seed, CELL_STREAM_BASE + index as u64).next_u64();
                cells.push(Cell {
                    index,
                    tag_period_mm: tp,
                    preset,
                    motion_id: id.clone(),
                    motion: motion.clone(),
                    noise_seed,
                });
            }
        }
    }
    Ok(cells)
}

pub fn simulate_cell(cfg: &ExperimentConfig, scene: &Scene, cell: &Cell) -> Result<TaggedSequence> {
    let n = cfg.grid_size;
    let sp = (cfg.spacing_mm, cfg.spacing_mm);
    let mut params = TagParams::from_period(cell.tag_period_mm, cfg.tag_amplitude, cfg.tag_offset)?;
    params.phase_h = scene.phase_h;
    params.phase_v = scene.phase_v;
    let motion = cell.motion.frames(cfg.n_frames, n, n, sp)?;
    let times = uniform_times(cfg.n_frames, cfg.frame_interval_s);
    synthesize_sequence(
        &scene.anatomy,
        &params,
        &FadingParams::preset(cell.preset),
        &motion,
        &times,
        cfg.noise_sigma,
        cell.noise_seed,
    )
}

/// Disentangles frame 0 with the nominal tag period as hint.
pub fn run_disentangle(cfg: &ExperimentConfig, seq: &TaggedSequence) -> Result<DisentangleResult> {
    let (h, w) = seq.shape();
    let prior = PixelGridPrior::new(h, w, cfg.disentangle.tv_weight)?;
    let init = init_tag_params(seq.tag_period_mm)?;
    disentangle(&seq.frames_h[0], &seq.frames_v[0], &prior, &init, &cfg.disentangle)
}

pub fn run_brite(cfg: &ExperimentConfig, seq: &TaggedSequence) -> Result<(DisentangleResult, LagrangianResult)> {
    let d = run_disentangle(cfg, seq)?;
    let tracked = track_sequence(seq, &d, &cfg.tracker)?;
    Ok((d, tracked))
}

/// Tag frequency of the sequence in cycles per pixel along each tag axis.
fn nominal_frequencies(seq: &TaggedSequence) -> Result<(f64, f64)> {
    let p = TagParams::from_period(seq.tag_period_mm, 1.0, 1.0)?;
    Ok((
        p.frequency_per_px(Orientation::Horizontal, seq.spacing_mm),
        p.frequency_per_px(Orientation::Vertical, seq.spacing_mm),
    ))
}

/// Lagrangian displacements of every frame estimated by `method`.
pub fn run_method(cfg: &ExperimentConfig, method: Method, seq: &TaggedSequence) -> Result<Vec<VectorField2D>> {
    match method {
        Method::Brite => {
            let (_, tracked) = run_brite(cfg, seq)?;
            Ok(tracked.frames.into_iter().map(|f| f.diffeo.forward).collect())
        }
        Method::Harp => {
            let (fh, fv) = nominal_frequencies(seq)?;
            let spec_h = BandpassSpec::for_tags(Orientation::Horizontal, fh)?;
            let spec_v = BandpassSpec::for_tags(Orientation::Vertical, fv)?;
            Ok(harp_track(&seq.frames_h, &seq.frames_v, &spec_h, &spec_v, &cfg.harp)?.displacements)
        }
        Method::Sinmod => {
            let (fh, fv) = nominal_frequencies(seq)?;
            Ok(sinmod_track(&seq.frames_h, &seq.frames_v, fh, fv, &cfg.sinmod)?.displacements)
        }
    }
}

/// Metrics of one method's displacements on the evaluated frames of `seq`.
pub fn evaluate_sequence(
    cfg: &ExperimentConfig,
    method: Method,
    motion_id: &str,
    seq: &TaggedSequence,
    displacements: &[VectorField2D],
) -> Result<Vec<MetricsRecord>> {
    let truth = seq
        .ground_truth
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("sequence has no ground truth".into()))?;
    let anatomy = seq
        .anatomy
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("sequence has no anatomy".into()))?;
    if displacements.len() != seq.len() {
        return Err(Error::InvalidInput(format!(
            "{} displacement fields for {} frames",
            displacements.len(),
            seq.len()
        )));
    }
    let mask = foreground_mask(anatomy);
    let preset = seq.fading.to_string();
    let frames: Vec<usize> = evaluated_frames(seq.len(), cfg.frames_every);
    frames
        .into_iter()
        .map(|t| {
            let key = RecordKey {
                method: method.as_str(),
                tag_period_mm: seq.tag_period_mm,
                preset: &preset,
                motion_id,
                time_s: seq.times_s[t],
            };
            evaluate_frame(key, &truth[t].forward, &displacements[t], &mask)
        })
        .collect()
}

fn evaluated_frames(n: usize, every: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..n).step_by(every.max(1)).collect();
    if out.last() != Some(&(n - 1)) {
        out.push(n - 1);
    }
    out
}

struct CellOutcome {
    records: Vec<MetricsRecord>,
    failures: Vec<Failure>,
}

fn run_cell(cfg: &ExperimentConfig, scene: &Scene, cell: &Cell) -> CellOutcome {
    let failure = |method: Option<Method>, e: Error| Failure {
        cell: cell.index,
        motion_id: cell.motion_id.clone(),
        tag_period_mm: cell.tag_period_mm,
        preset: cell.preset,
        method,
        error: e.to_string(),
    };
    let seq = match simulate_cell(cfg, scene, cell) {
        Ok(s) => s,
        Err(e) => {
            return CellOutcome {
                records: Vec::new(),
                failures: vec![failure(None, e)],
            }
        }
    };
    let mut out = CellOutcome {
        records: Vec::new(),
        failures: Vec::new(),
    };
    for &method in &cfg.methods {
        let result = run_method(cfg, method, &seq).and_then(|d| evaluate_sequence(cfg, method, &cell.motion_id, &seq, &d));
        match result {
            Ok(mut r) => out.records.append(&mut r),
            Err(e) => {
                log::warn!("cell {} ({}) {method}: {e}", cell.index, cell.motion_id);
                out.failures.push(failure(Some(method), e));
            }
        }
    }
    log::info!(
        "cell {} done: TP {} {} {}",
        cell.index,
        cell.tag_period_mm,
        cell.preset,
        cell.motion_id
    );
    out
}

/// Runs every cell of the grid and collects the metrics in grid order.
///
/// Cells run in parallel on the rayon pool; within a cell the methods and
/// frames run sequentially. Failures of a cell or method are recorded in the
/// manifest and do not abort the run.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let scene = make_scene(cfg)?;
    let cells = plan_cells(cfg)?;
    let outcomes: Vec<CellOutcome> = cells.par_iter().map(|c| run_cell(cfg, &scene, c)).collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for mut o in outcomes {
        records.append(&mut o.records);
        failures.append(&mut o.failures);
    }
    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        anatomy_seed: scene.anatomy_seed,
        cells: cells
            .iter()
            .map(|c| CellSeeds {
                cell: c.index,
                motion_id: c.motion_id.clone(),
                tag_period_mm: c.tag_period_mm,
                preset: c.preset,
                noise_seed: c.noise_seed,
            })
            .collect(),
        n_records: records.len(),
        failures,
    };
    Ok(RunOutput { records, manifest })
}

/// Runs the grid and writes `metrics.csv` and `manifest.json` into the
/// configured output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    prepare_dir(dir)?;
    let out = run_grid(cfg)?;
    write_run(dir, &out)?;
    Ok(out)
}

pub fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    // Fail before the (long) run rather than after it.
    let probe = dir.join(".write_probe");
    fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

pub fn write_run(dir: &Path, out: &RunOutput) -> Result<()> {
    let csv_path = dir.join("metrics.csv");
    fs::write(&csv_path, write_metrics_csv(&out.records)?).map_err(|e| Error::io(&csv_path, e))?;
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&out.manifest)?;
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))
}
