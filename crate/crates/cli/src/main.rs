use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use brite::harness::artifacts::{load_disentangled, load_displacements, save_disentangled, save_displacements, save_tracking};
use brite::harness::run::{
    make_motions, make_scene, prepare_dir, run_disentangle, run_method, simulate_cell, write_run, Cell,
};
use brite::harness::{report, run_grid, write_metrics_csv, ExperimentConfig, Method};
use brite::phantom::{load_sequence, save_sequence, FadingPreset, Motion, TaggedSequence};
use brite::tracker::track_sequence;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "brite", version, about = "Brightness-invariant tracking of tagged image sequences")]
struct Cli {
    /// Experiment configuration (JSON); overrides --scale.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Scale::Desk)]
    scale: Scale,
    #[arg(long, global = true)]
    frames_every: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Desk,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Harp,
    Sinmod,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one tagged sequence with ground truth.
    Simulate {
        #[arg(long, default_value_t = 12.0)]
        tag_period: f64,
        /// none, FA5 or FA10.
        #[arg(long, default_value = "FA5")]
        preset: String,
        /// static, rotation, nonrigid-<i>, or translation:<dx>,<dy> (pixels at the last frame).
        #[arg(long, default_value = "static")]
        motion: String,
    },
    /// Separate anatomy and tag pattern in the first frame of a sequence.
    Disentangle {
        sequence: PathBuf,
    },
    /// Track a sequence; disentangles first unless a result is given.
    Track {
        sequence: PathBuf,
        #[arg(long)]
        disentangled: Option<PathBuf>,
    },
    /// Run a baseline tracker.
    Baseline {
        sequence: PathBuf,
        #[arg(long, value_enum)]
        method: Baseline,
    },
    /// Compare displacements with the ground truth of a sequence.
    Evaluate {
        sequence: PathBuf,
        displacements: PathBuf,
        #[arg(long, default_value = "brite")]
        method: String,
        #[arg(long, default_value = "single")]
        motion_id: String,
    },
    /// Summary tables and plots from a metrics CSV.
    Report {
        csv: PathBuf,
    },
    /// Run the full experiment grid.
    Run,
}

impl Cli {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => match self.scale {
                Scale::Desk => ExperimentConfig::desk(),
                Scale::Paper => ExperimentConfig::paper(),
            },
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(k) = self.frames_every {
            cfg.frames_every = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_motion(cfg: &ExperimentConfig, spec: &str) -> Result<Motion> {
    if let Some(rest) = spec.strip_prefix("translation:") {
        let (dx, dy) = rest.split_once(',').context("translation needs <dx>,<dy>")?;
        return Ok(Motion::Translation {
            dx: dx.trim().parse()?,
            dy: dy.trim().parse()?,
        });
    }
    let mut cfg = cfg.clone();
    if let Some(i) = spec.strip_prefix("nonrigid-") {
        let i: usize = i.parse()?;
        cfg.motions.nonrigid_seeds = cfg.motions.nonrigid_seeds.max(i + 1);
    }
    if spec == "rotation" && cfg.motions.rotation_deg.is_none() {
        cfg.motions.rotation_deg = Some(15.0);
    }
    cfg.motions.include_static = true;
    make_motions(&cfg)?
        .into_iter()
        .find(|(id, _)| id == spec)
        .map(|(_, m)| m)
        .with_context(|| format!("unknown motion {spec:?}"))
}

fn load(path: &Path) -> Result<TaggedSequence> {
    load_sequence(path).with_context(|| format!("loading {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = cli.experiment()?;
    let out = cfg.output_dir.clone();
    match &cli.command {
        Command::Simulate {
            tag_period,
            preset,
            motion,
        } => {
            prepare_dir(&out)?;
            let preset: FadingPreset = preset.parse()?;
            let cell = Cell {
                index: 0,
                tag_period_mm: *tag_period,
                preset,
                motion_id: motion.clone(),
                motion: parse_motion(&cfg, motion)?,
                noise_seed: cfg.seed,
            };
            let seq = simulate_cell(&cfg, &make_scene(&cfg)?, &cell)?;
            let path = out.join("sequence.tagseq");
            save_sequence(&seq, &path)?;
            println!("{}", path.display());
        }
        Command::Disentangle { sequence } => {
            prepare_dir(&out)?;
            let seq = load(sequence)?;
            let d = run_disentangle(&cfg, &seq)?;
            log::info!(
                "tag period {:.3} mm, loss {:.4e}{}",
                d.params.period_mm(),
                d.final_loss,
                if d.degenerate { " (degenerate input)" } else { "" }
            );
            let path = out.join("disentangled.tagseq");
            save_disentangled(&path, &d)?;
            println!("{}", path.display());
        }
        Command::Track { sequence, disentangled } => {
            prepare_dir(&out)?;
            let seq = load(sequence)?;
            let d = match disentangled {
                Some(p) => load_disentangled(p)?,
                None => run_disentangle(&cfg, &seq)?,
            };
            let result = track_sequence(&seq, &d, &cfg.tracker)?;
            let path = out.join("brite.tagseq");
            save_tracking(&path, &result)?;
            println!("{}", path.display());
        }
        Command::Baseline { sequence, method } => {
            prepare_dir(&out)?;
            let seq = load(sequence)?;
            let method = match method {
                Baseline::Harp => Method::Harp,
                Baseline::Sinmod => Method::Sinmod,
            };
            let disp = run_method(&cfg, method, &seq)?;
            let path = out.join(format!("{method}.tagseq"));
            save_displacements(&path, &disp)?;
            println!("{}", path.display());
        }
        Command::Evaluate {
            sequence,
            displacements,
            method,
            motion_id,
        } => {
            prepare_dir(&out)?;
            let seq = load(sequence)?;
            let method: Method = method.parse()?;
            let disp = load_displacements(displacements, seq.spacing_mm)?;
            let records = brite::harness::run::evaluate_sequence(&cfg, method, motion_id, &seq, &disp)?;
            let path = out.join("metrics.csv");
            fs::write(&path, write_metrics_csv(&records)?).with_context(|| format!("writing {}", path.display()))?;
            for r in &records {
                println!("t={:.3}s EPE mean {:.4} median {:.4} eMPS median {:.5}", r.time_s, r.epe_mean, r.epe_median, r.emps_median);
            }
        }
        Command::Report { csv } => {
            let result = report(csv, &out)?;
            for r in &result.ranking {
                println!(
                    "TP {} {} #{} {} EPE {:.4} eMPS {:.5}",
                    r.tag_period_mm, r.preset, r.rank, r.method, r.epe_median, r.emps_median
                );
            }
        }
        Command::Run => {
            prepare_dir(&out)?;
            let result = run_grid(&cfg)?;
            write_run(&out, &result)?;
            if !result.manifest.failures.is_empty() {
                log::warn!("{} failed cell/method combinations, see manifest.json", result.manifest.failures.len());
            }
            report(&out.join("metrics.csv"), &out.join("report"))?;
            println!("{} records written to {}", result.records.len(), out.join("metrics.csv").display());
        }
    }
    Ok(())
}
