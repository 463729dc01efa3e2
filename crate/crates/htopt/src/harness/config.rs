//! Experiment configuration: a TOML file with sections
//! {problem, topology, noise, schedule, moreau, run}.

use crate::dssm::{validate_schedule, RunOptions, ScheduleSpec};
use crate::error::{HtoptError, Result};
use crate::moreau::MoreauConfig;
use crate::noise::{NoiseFamily, NoiseSpec};
use crate::objectives::OracleMode;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Duration;

/// A numeric setting that can also be the keyword "auto".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AutoOr {
    Value(f64),
    Auto(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoKeyword {
    Auto,
}

impl AutoOr {
    pub const AUTO: AutoOr = AutoOr::Auto(AutoKeyword::Auto);

    pub fn resolve(&self, auto_value: f64) -> f64 {
        match self {
            AutoOr::Value(v) => *v,
            AutoOr::Auto(_) => auto_value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    PhaseRetrieval,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Random,
    Mnist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSection {
    pub kind: ProblemKind,
    pub n: usize,
    pub n_agents: usize,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "default_signal")]
    pub signal: SignalKind,
    #[serde(default)]
    pub mnist_index: Option<usize>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_signal() -> SignalKind {
    SignalKind::Random
}

fn default_batch() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Ring,
    Complete,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySection {
    pub kind: TopologyKind,
    pub n_agents: usize,
    #[serde(default)]
    pub weights_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSection {
    pub family: NoiseFamily,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_alpha() -> f64 {
    2.0
}

fn default_gamma() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSection {
    pub step_scale: f64,
    pub step_exponent: f64,
    /// "auto" resolves to 2 C0 of the generated instance.
    pub clip_scale: AutoOr,
    pub clip_exponent: f64,
    /// Assumed noise moment order for the validity conditions; defaults to
    /// the noise section's alpha (or 2 when the noise family is none).
    #[serde(default)]
    pub tail_index: Option<f64>,
    #[serde(default)]
    pub override_rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoreauSection {
    pub mu: AutoOr,
    #[serde(default = "default_inner_iters")]
    pub inner_max_iters: usize,
    #[serde(default = "default_inner_tol")]
    pub inner_tol: f64,
}

fn default_inner_iters() -> usize {
    2000
}

fn default_inner_tol() -> f64 {
    1e-5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    pub rounds: usize,
    #[serde(default = "default_measure_every")]
    pub measure_every: usize,
    #[serde(default = "default_moreau_every")]
    pub moreau_every: usize,
    #[serde(default)]
    pub max_seconds: Option<f64>,
}

fn default_measure_every() -> usize {
    10
}

fn default_moreau_every() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub topology: TopologySection,
    pub noise: NoiseSection,
    pub schedule: ScheduleSection,
    pub moreau: MoreauSection,
    pub run: RunSection,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| HtoptError::Config(format!("config parse error: {e}")))
}

pub fn serialize_config(c: &ExperimentConfig) -> String {
    toml::to_string_pretty(c).expect("config serializes")
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

impl ExperimentConfig {
    /// The assumed tail index used by the schedule validator.
    pub fn resolved_tail_index(&self) -> f64 {
        self.schedule.tail_index.unwrap_or(match self.noise.family {
            NoiseFamily::None => 2.0,
            _ => self.noise.alpha,
        })
    }
}

/// Cross-reference consistency checks. Returns the warning list on success.
pub fn validate_config(c: &ExperimentConfig) -> Result<Vec<String>> {
    let mut warnings = Vec::new();
    if c.topology.n_agents != c.problem.n_agents {
        return Err(HtoptError::Config(format!(
            "topology.n_agents = {} disagrees with problem.n_agents = {}",
            c.topology.n_agents, c.problem.n_agents
        )));
    }
    if c.topology.kind == TopologyKind::Ring && c.topology.n_agents < 3 {
        return Err(HtoptError::Config("ring topology needs n_agents >= 3".into()));
    }
    if c.topology.kind == TopologyKind::Custom && c.topology.weights_file.is_none() {
        return Err(HtoptError::Config(
            "custom topology needs a weights_file".into(),
        ));
    }
    match c.problem.kind {
        ProblemKind::PhaseRetrieval => {
            let m = c.problem.m.ok_or_else(|| {
                HtoptError::Config("phase_retrieval needs problem.m".into())
            })?;
            if c.problem.batch_size == 0 || c.problem.batch_size > m {
                return Err(HtoptError::Config(format!(
                    "batch_size {} outside 1..={m}",
                    c.problem.batch_size
                )));
            }
            if c.problem.n_agents * m < 3 * c.problem.n {
                warnings.push(format!(
                    "N*m = {} below the 3n = {} recovery threshold",
                    c.problem.n_agents * m,
                    3 * c.problem.n
                ));
            }
        }
        ProblemKind::Quadratic => {
            if c.problem.m.is_some() {
                warnings.push("problem.m is ignored for the quadratic kind".into());
            }
            if c.problem.signal == SignalKind::Mnist {
                return Err(HtoptError::Config(
                    "mnist signal only applies to phase_retrieval".into(),
                ));
            }
        }
    }
    if c.noise.family != NoiseFamily::None && !(c.noise.alpha > 1.0 && c.noise.alpha <= 2.0) {
        return Err(HtoptError::Config(format!(
            "noise.alpha {} outside (1, 2]",
            c.noise.alpha
        )));
    }
    if c.noise.family != NoiseFamily::None && c.noise.gamma <= 0.0 {
        return Err(HtoptError::Config("noise.gamma must be positive".into()));
    }
    let tail = c.resolved_tail_index();
    if !(tail > 1.0 && tail <= 2.0) {
        return Err(HtoptError::Config(format!(
            "schedule tail index {tail} outside (1, 2]"
        )));
    }
    if let AutoOr::Value(v) = c.moreau.mu {
        if v <= 0.0 {
            return Err(HtoptError::Config("moreau.mu must be positive".into()));
        }
    }
    if let AutoOr::Value(v) = c.schedule.clip_scale {
        if v <= 0.0 {
            return Err(HtoptError::Config("schedule.clip_scale must be positive".into()));
        }
    }
    if c.run.measure_every == 0 {
        return Err(HtoptError::Config("run.measure_every must be >= 1".into()));
    }
    Ok(warnings)
}

/// Runnable pieces resolved from a validated config.
pub struct ResolvedExperiment {
    pub instance: crate::objectives::ObjectiveInstance,
    pub mixing: crate::topology::MixingSchedule,
    pub schedule: ScheduleSpec,
    pub schedule_verdict: crate::dssm::ScheduleVerdict,
    pub moreau: MoreauConfig,
    pub oracle: OracleMode,
    pub opts: RunOptions,
    pub lambda: f64,
    pub warnings: Vec<String>,
}

/// Build the instance, topology, schedule, and solver configs for a run.
/// `signal_override` carries an externally loaded ground-truth signal (the
/// MNIST path resolution lives in the harness front-end).
pub fn resolve(
    config: &ExperimentConfig,
    seed: u64,
    signal_override: Option<ndarray::Array1<f64>>,
) -> Result<ResolvedExperiment> {
    let mut warnings = validate_config(config)?;

    let instance = match config.problem.kind {
        ProblemKind::PhaseRetrieval => {
            let source = match signal_override {
                Some(s) => crate::objectives::SignalSource::Given(s),
                None => crate::objectives::SignalSource::Random,
            };
            crate::objectives::gen_phase_retrieval(
                config.problem.n,
                config.problem.n_agents,
                config.problem.m.unwrap(),
                crate::rng::RngStream::new(seed, 0, crate::rng::Purpose::Instance),
                source,
            )?
        }
        ProblemKind::Quadratic => crate::objectives::gen_quadratic_test(
            config.problem.n,
            config.problem.n_agents,
            crate::rng::RngStream::new(seed, 0, crate::rng::Purpose::Instance),
        )?,
    };
    warnings.extend(instance.warnings.iter().cloned());

    let matrix = match config.topology.kind {
        TopologyKind::Ring => crate::topology::ring_mixing(config.topology.n_agents)?,
        TopologyKind::Complete => crate::topology::complete_mixing(config.topology.n_agents)?,
        TopologyKind::Custom => {
            let path = config.topology.weights_file.as_ref().unwrap();
            let m = crate::topology::parse_weights_text(&std::fs::read_to_string(path)?)?;
            if m.n_agents() != config.topology.n_agents {
                return Err(HtoptError::Config(format!(
                    "weights file has {} agents, config says {}",
                    m.n_agents(),
                    config.topology.n_agents
                )));
            }
            let report = crate::topology::validate_mixing(
                &m,
                0.0,
                crate::topology::STOCHASTICITY_TOL.max(1e-9),
            )?;
            if !report.passed() {
                return Err(HtoptError::Config(format!(
                    "custom weights fail validation: {:?}",
                    report.violations
                )));
            }
            m
        }
    };
    let mixing = crate::topology::MixingSchedule::Static(matrix);
    let lambda = mixing.contraction_lambda()?;

    let oracle = match config.noise.family {
        NoiseFamily::None => {
            let full = match config.problem.kind {
                ProblemKind::PhaseRetrieval => {
                    config.problem.batch_size >= config.problem.m.unwrap()
                }
                ProblemKind::Quadratic => true,
            };
            if full {
                OracleMode::FullBatch
            } else {
                OracleMode::MiniBatch {
                    batch_size: config.problem.batch_size,
                }
            }
        }
        family => OracleMode::Synthetic(NoiseSpec::new(
            family,
            config.noise.alpha,
            config.noise.gamma,
            config.problem.n,
        )?),
    };

    let schedule = ScheduleSpec::new(
        config.schedule.step_scale,
        config.schedule.step_exponent,
        config
            .schedule
            .clip_scale
            .resolve(2.0 * instance.constants.c0),
        config.schedule.clip_exponent,
        config.resolved_tail_index(),
    )?;
    let schedule_verdict = validate_schedule(&schedule);

    let moreau = match config.moreau.mu {
        AutoOr::Auto(_) => MoreauConfig {
            inner_max_iters: config.moreau.inner_max_iters,
            inner_tol: config.moreau.inner_tol,
            ..MoreauConfig::auto(instance.constants.weak_convexity)
        },
        AutoOr::Value(mu) => {
            let cfg = MoreauConfig::new(mu, config.moreau.inner_max_iters, config.moreau.inner_tol)?;
            cfg.validate_for(instance.constants.weak_convexity)?;
            cfg
        }
    };

    let opts = RunOptions {
        rounds: config.run.rounds,
        measure_every: config.run.measure_every,
        moreau_every: config.run.moreau_every,
        seed,
        override_rejected_schedule: config.schedule.override_rejected,
        wall_budget: config.run.max_seconds.map(Duration::from_secs_f64),
    };

    Ok(ResolvedExperiment {
        instance,
        mixing,
        schedule,
        schedule_verdict,
        moreau,
        oracle,
        opts,
        lambda,
        warnings,
    })
}

/// Desk-scale default preset (n = 49, N = 7, m = 21, so N m = 3n).
pub fn desk_preset() -> ExperimentConfig {
    ExperimentConfig {
        problem: ProblemSection {
            kind: ProblemKind::PhaseRetrieval,
            n: 49,
            n_agents: 7,
            m: Some(21),
            signal: SignalKind::Random,
            mnist_index: None,
            batch_size: 3,
        },
        topology: TopologySection {
            kind: TopologyKind::Ring,
            n_agents: 7,
            weights_file: None,
        },
        noise: NoiseSection {
            family: NoiseFamily::None,
            alpha: 2.0,
            gamma: 1.0,
        },
        schedule: ScheduleSection {
            step_scale: 0.3,
            step_exponent: 0.75,
            clip_scale: AutoOr::AUTO,
            clip_exponent: 0.2,
            tail_index: Some(2.0),
            override_rejected: false,
        },
        moreau: MoreauSection {
            mu: AutoOr::AUTO,
            inner_max_iters: 2000,
            inner_tol: 1e-3,
        },
        run: RunSection {
            rounds: 5000,
            measure_every: 10,
            moreau_every: 100,
            max_seconds: None,
        },
    }
}
