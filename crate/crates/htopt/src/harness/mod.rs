//! Experiment orchestration: configuration, data ingestion, runs, studies,
//! and plot-data emission.

pub mod config;
pub mod figures;
pub mod idx;
pub mod noise_study;
pub mod plot;

pub use config::{
    desk_preset, load_config, parse_config, resolve, serialize_config, validate_config, AutoOr,
    ExperimentConfig, ResolvedExperiment,
};
pub use figures::{reproduce, DataContext, Preset};
pub use idx::{image_to_signal, load_idx_images, IdxImages};
pub use noise_study::{gaussian_control, noise_study, NoiseStudyReport};

use crate::container;
use crate::dssm::{run, Method, RunRecord};
use crate::error::Result;
use crate::metrics::write_metrics_file;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Everything a finished run leaves on disk.
#[derive(Debug)]
pub struct RunArtifacts {
    pub record: RunRecord,
    pub metrics_path: PathBuf,
    pub states_path: PathBuf,
    pub meta_path: PathBuf,
}

#[derive(Debug, Serialize)]
struct RunMeta<'a> {
    config: &'a ExperimentConfig,
    seed: u64,
    method: &'a str,
    constants: crate::objectives::Constants,
    mu: f64,
    inner_max_iters: usize,
    inner_tol: f64,
    lambda: f64,
    schedule_accepted: bool,
    schedule_conditions: &'a [crate::dssm::ScheduleCondition],
    resolved_clip_scale: f64,
    completed: bool,
    wall_seconds: f64,
    warnings: &'a [String],
    version: &'static str,
}

/// Resolve the config, execute the run, and write `metrics.csv`,
/// `final_states.bin`, and `meta.json` under `out_dir`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    seed: u64,
    out_dir: &Path,
    data: &DataContext,
) -> Result<RunArtifacts> {
    std::fs::create_dir_all(out_dir)?;
    let signal = match (cfg.problem.kind, cfg.problem.signal) {
        (config::ProblemKind::PhaseRetrieval, config::SignalKind::Mnist) => {
            data.mnist_signal(cfg.problem.mnist_index.unwrap_or(0), cfg.problem.n)?
        }
        _ => None,
    };
    let resolved = resolve(cfg, seed, signal)?;
    let record = run(
        &resolved.instance,
        &resolved.mixing,
        &resolved.schedule,
        Some(&resolved.moreau),
        resolved.oracle.clone(),
        Method::Clipped,
        &resolved.opts,
    )?;

    let metrics_path = out_dir.join("metrics.csv");
    write_metrics_file(&metrics_path, &record.rows)?;

    let states_path = out_dir.join("final_states.bin");
    container::write_matrices_file(&states_path, &[&record.final_states])?;

    let meta = RunMeta {
        config: cfg,
        seed,
        method: Method::Clipped.label(),
        constants: resolved.instance.constants,
        mu: resolved.moreau.mu,
        inner_max_iters: resolved.moreau.inner_max_iters,
        inner_tol: resolved.moreau.inner_tol,
        lambda: resolved.lambda,
        schedule_accepted: record.schedule_verdict.accepted,
        schedule_conditions: &record.schedule_verdict.conditions,
        resolved_clip_scale: resolved.schedule.clip_scale,
        completed: record.completed,
        wall_seconds: record.wall.as_secs_f64(),
        warnings: &resolved.warnings,
        version: env!("CARGO_PKG_VERSION"),
    };
    let meta_path = out_dir.join("meta.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).unwrap())?;

    Ok(RunArtifacts {
        record,
        metrics_path,
        states_path,
        meta_path,
    })
}
