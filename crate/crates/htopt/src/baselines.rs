//! Comparison baselines: DPSM (deterministic distributed projected
//! subgradient) and stoDPSM (stochastic, unclipped). Both reuse the clipped
//! round engine with the clip factor forced to 1.

use crate::dssm::{Engine, Method, RunOptions, ScheduleSpec, StepInfo};
use crate::error::Result;
use crate::metrics::recovery_error;
use crate::moreau::{prox, envelope_gradient_from, MoreauConfig};
use crate::objectives::{eval_global, ObjectiveInstance, OracleMode};
use crate::topology::MixingSchedule;
use ndarray::Axis;
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Dpsm,
    StoDpsm,
}

impl BaselineKind {
    pub fn method(self) -> Method {
        match self {
            BaselineKind::Dpsm => Method::Dpsm,
            BaselineKind::StoDpsm => Method::StoDpsm,
        }
    }
}

/// One baseline round at the given stepsize: x_i <- P(v_i - alpha g_i) with
/// the full deterministic subgradient (dpsm) or the unclipped stochastic
/// subgradient (stodpsm).
pub fn baseline_step(kind: BaselineKind, engine: &mut Engine, alpha_k: f64) -> Result<StepInfo> {
    engine.step_as(kind.method(), alpha_k, f64::INFINITY)
}

/// Per-method, per-seed endpoint measurements.
#[derive(Debug, Clone)]
pub struct CompareRow {
    pub method: Method,
    pub seed: u64,
    pub final_f: f64,
    pub final_moreau: f64,
    pub final_recovery: Option<f64>,
}

/// Method configuration for a comparison sweep.
#[derive(Debug, Clone)]
pub struct MethodSpec {
    pub method: Method,
    pub schedule: ScheduleSpec,
    pub oracle: OracleMode,
}

#[derive(Debug, Clone)]
pub struct CompareMedians {
    pub method: Method,
    pub final_f: f64,
    pub final_moreau: f64,
    pub final_recovery: Option<f64>,
}

#[derive(Debug)]
pub struct CompareOutcome {
    pub rows: Vec<CompareRow>,
    pub medians: Vec<CompareMedians>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Run every method over the common seed list: same seed means the same
/// shared random initialization (and the same oracle draws where the modes
/// coincide). Seeds run in parallel; results are reduced in fixed order.
pub fn compare(
    inst: &ObjectiveInstance,
    mixing: &MixingSchedule,
    methods: &[MethodSpec],
    moreau: &MoreauConfig,
    rounds: usize,
    seeds: &[u64],
) -> Result<CompareOutcome> {
    let mut jobs = Vec::new();
    for ms in methods {
        for &seed in seeds {
            jobs.push((ms.clone(), seed));
        }
    }
    let rows: Vec<CompareRow> = jobs
        .par_iter()
        .map(|(ms, seed)| -> Result<CompareRow> {
            let mut engine = Engine::new(
                inst,
                mixing,
                &ms.schedule,
                ms.oracle.clone(),
                ms.method,
                *seed,
            )?;
            for _ in 0..rounds {
                engine.step()?;
            }
            let mean = engine.states().mean_axis(Axis(0)).expect("states");
            let final_f = eval_global(inst, mean.view())?;
            let p = prox(mean.view(), moreau, inst, &inst.constraint)?;
            let g = envelope_gradient_from(&p, mean.view(), moreau.mu);
            let final_moreau = g.dot(&g).sqrt();
            let final_recovery = match inst.ground_truth() {
                Some(t) => Some(recovery_error(mean.view(), t)?),
                None => None,
            };
            Ok(CompareRow {
                method: ms.method,
                seed: *seed,
                final_f,
                final_moreau,
                final_recovery,
            })
        })
        .collect::<Result<_>>()?;

    let mut medians = Vec::new();
    for ms in methods {
        let sel: Vec<&CompareRow> = rows.iter().filter(|r| r.method == ms.method).collect();
        if sel.is_empty() {
            continue;
        }
        medians.push(CompareMedians {
            method: ms.method,
            final_f: median(sel.iter().map(|r| r.final_f).collect()),
            final_moreau: median(sel.iter().map(|r| r.final_moreau).collect()),
            final_recovery: if sel.iter().all(|r| r.final_recovery.is_some()) {
                Some(median(
                    sel.iter().map(|r| r.final_recovery.unwrap()).collect(),
                ))
            } else {
                None
            },
        });
    }
    Ok(CompareOutcome { rows, medians })
}

pub const SUMMARY_HEADER: &str = "method,seed,final_f,final_moreau,final_recovery";

pub fn write_summary<W: Write>(mut w: W, rows: &[CompareRow]) -> Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for r in rows {
        let rec = match r.final_recovery {
            Some(v) => format!("{v}"),
            None => "NA".into(),
        };
        writeln!(
            w,
            "{},{},{},{},{}",
            r.method.label(),
            r.seed,
            r.final_f,
            r.final_moreau,
            rec
        )?;
    }
    Ok(())
}

pub fn write_summary_file(path: &Path, rows: &[CompareRow]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_summary(std::io::BufWriter::new(f), rows)
}

pub fn write_medians_file(path: &Path, medians: &[CompareMedians]) -> Result<()> {
    let mut out = String::from("method,median_final_f,median_final_moreau,median_final_recovery\n");
    for m in medians {
        let rec = match m.final_recovery {
            Some(v) => format!("{v}"),
            None => "NA".into(),
        };
        out.push_str(&format!(
            "{},{},{},{}\n",
            m.method.label(),
            m.final_f,
            m.final_moreau,
            rec
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Convenience used by tests and the harness: a full run record for one
/// baseline at a fixed schedule.
pub fn run_baseline(
    inst: &ObjectiveInstance,
    mixing: &MixingSchedule,
    kind: BaselineKind,
    schedule: &ScheduleSpec,
    oracle: OracleMode,
    opts: &RunOptions,
) -> Result<crate::dssm::RunRecord> {
    let opts = RunOptions {
        override_rejected_schedule: true,
        ..opts.clone()
    };
    crate::dssm::run(inst, mixing, schedule, None, oracle, kind.method(), &opts)
}
