//! The clipped distributed stochastic subgradient method: power-law
//! step/clipping schedules with their validity conditions, the synchronous
//! round engine, and the clipping-bias check.

use crate::error::{HtoptError, Result};
use crate::metrics::{recovery_error, MetricsRow};
use crate::moreau::{envelope_gradient_from, prox, MoreauConfig};
use crate::noise::{sample_noise, NoiseSpec};
use crate::objectives::{
    project, stochastic_subgradient, subgradient, ObjectiveInstance, OracleMode, OracleSample,
};
use crate::topology::{mix, MixingSchedule};
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

/// Power-law stepsize and clipping schedules:
/// alpha_k = a (k+1)^(-p), tau_k = c (k+1)^q.
///
/// `tail_index` is the assumed noise moment order used by the validity
/// conditions. Exponents outside the convergent ranges are representable on
/// purpose; the validator rejects them and the run engine demands an
/// explicit override to execute a rejected schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub step_scale: f64,
    pub step_exponent: f64,
    pub clip_scale: f64,
    pub clip_exponent: f64,
    pub tail_index: f64,
}

impl ScheduleSpec {
    pub fn new(
        step_scale: f64,
        step_exponent: f64,
        clip_scale: f64,
        clip_exponent: f64,
        tail_index: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("step_scale", step_scale),
            ("step_exponent", step_exponent),
            ("clip_scale", clip_scale),
            ("clip_exponent", clip_exponent),
            ("tail_index", tail_index),
        ] {
            if !v.is_finite() {
                return Err(HtoptError::Parameter(format!("{name} must be finite")));
            }
        }
        if step_scale <= 0.0 || clip_scale <= 0.0 {
            return Err(HtoptError::Parameter(
                "step_scale and clip_scale must be positive".into(),
            ));
        }
        if step_exponent < 0.0 || clip_exponent < 0.0 {
            return Err(HtoptError::Parameter(
                "exponents must be nonnegative".into(),
            ));
        }
        if !(tail_index > 1.0 && tail_index <= 2.0) {
            return Err(HtoptError::Parameter(format!(
                "tail_index {tail_index} outside (1, 2]"
            )));
        }
        Ok(Self {
            step_scale,
            step_exponent,
            clip_scale,
            clip_exponent,
            tail_index,
        })
    }

    /// The worked example accompanying the convergence theorem:
    /// alpha_k = 1/(k+1), tau_k = 2 C0 (k+1)^0.4.
    pub fn remark_example(c0: f64, tail_index: f64) -> Result<Self> {
        Self::new(1.0, 1.0, 2.0 * c0, 0.4, tail_index)
    }

    pub fn alpha_at(&self, k: usize) -> f64 {
        self.step_scale * ((k + 1) as f64).powf(-self.step_exponent)
    }

    pub fn tau_at(&self, k: usize) -> f64 {
        self.clip_scale * ((k + 1) as f64).powf(self.clip_exponent)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleCondition {
    pub name: String,
    pub satisfied: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleVerdict {
    pub accepted: bool,
    pub conditions: Vec<ScheduleCondition>,
}

impl ScheduleVerdict {
    pub fn failed_names(&self) -> Vec<&str> {
        self.conditions
            .iter()
            .filter(|c| !c.satisfied)
            .map(|c| c.name.as_str())
            .collect()
    }
}

/// Evaluate the six convergence conditions for the power-law family:
/// divergent step sum (p <= 1), vanishing steps (p > 0), step ratio -> 1
/// (automatic), summable alpha^2 tau^2 (2p - 2q > 1), summable
/// alpha tau^(2-2a) (p + q(2a-2) > 1), and clipping radius increasing to
/// infinity (q > 0).
pub fn validate_schedule(s: &ScheduleSpec) -> ScheduleVerdict {
    let p = s.step_exponent;
    let q = s.clip_exponent;
    let a = s.tail_index;
    let mut conditions = Vec::new();
    let mut push = |name: &str, satisfied: bool, detail: String| {
        conditions.push(ScheduleCondition {
            name: name.to_string(),
            satisfied,
            detail,
        });
    };
    push(
        "step_sum_diverges",
        p <= 1.0,
        format!("sum alpha_k = inf requires p <= 1, p = {p}"),
    );
    push(
        "step_vanishes",
        p > 0.0,
        format!("alpha_k -> 0 requires p > 0, p = {p}"),
    );
    push(
        "step_ratio_to_one",
        true,
        "alpha_(k+1)/alpha_k -> 1 automatically for power laws".into(),
    );
    push(
        "step_clip_square_summable",
        2.0 * p - 2.0 * q > 1.0,
        format!(
            "sum alpha_k^2 tau_k^2 < inf requires 2p - 2q > 1, got {}",
            2.0 * p - 2.0 * q
        ),
    );
    push(
        "bias_term_summable",
        p + q * (2.0 * a - 2.0) > 1.0,
        format!(
            "sum alpha_k tau_k^(2-2a) < inf requires p + q(2a-2) > 1, got {}",
            p + q * (2.0 * a - 2.0)
        ),
    );
    push(
        "clip_increases_to_infinity",
        q > 0.0,
        format!("tau_k increasing to inf requires q > 0, q = {q}"),
    );
    ScheduleVerdict {
        accepted: conditions.iter().all(|c| c.satisfied),
        conditions,
    }
}

/// Rescale `g` to norm at most `tau`, preserving direction. The scale factor
/// min(1, tau/||g||) is taken as 1 when ||g|| = 0.
pub fn clip(g: ArrayView1<f64>, tau: f64) -> Result<Array1<f64>> {
    if !(tau > 0.0) {
        return Err(HtoptError::Parameter(format!(
            "clipping threshold must be positive, got {tau}"
        )));
    }
    let norm = g.dot(&g).sqrt();
    if norm <= tau {
        Ok(g.to_owned())
    } else {
        Ok(g.to_owned() * (tau / norm))
    }
}

/// Aggregate consensus error ||Delta_k|| = sqrt(sum_i ||x_i - x_bar||^2).
pub fn consensus_error(states: &Array2<f64>) -> f64 {
    let mean = states.mean_axis(Axis(0)).expect("nonempty state matrix");
    let mut acc = 0.0;
    for row in states.rows() {
        let d = &row.to_owned() - &mean;
        acc += d.dot(&d);
    }
    acc.sqrt()
}

/// Which update rule the round engine applies. The baselines are the same
/// round with the clipping factor forced to 1 (and, for the deterministic
/// one, the oracle replaced by the full subgradient).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Clipped,
    Dpsm,
    StoDpsm,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Clipped => "clipped",
            Method::Dpsm => "dpsm",
            Method::StoDpsm => "stodpsm",
        }
    }
}

/// Diagnostics for one completed round.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub alpha: f64,
    pub tau: f64,
    /// Per-agent ||x_{i,k+1} - v_{i,k}||; bounded by alpha_k tau_k for the
    /// clipped method.
    pub displacements: Vec<f64>,
}

/// Synchronous round engine: all agents mix round-k states, then update
/// independently. Per-agent RNG streams keep runs bit-reproducible no
/// matter how many worker threads execute the agent loop.
pub struct Engine<'a> {
    inst: &'a ObjectiveInstance,
    mixing: &'a MixingSchedule,
    schedule: &'a ScheduleSpec,
    oracle: OracleMode,
    method: Method,
    states: Array2<f64>,
    rngs: Vec<ChaCha8Rng>,
    round: usize,
}

/// Shared random feasible initialization: every agent starts at the same
/// point.
pub fn shared_init(inst: &ObjectiveInstance, seed: u64) -> Array2<f64> {
    let mut rng = crate::rng::RngStream::new(seed, 0, crate::rng::Purpose::Init).rng();
    let x0 = match &inst.constraint {
        crate::objectives::ConstraintSet::UnitBall { dimension } => {
            crate::rng::sample_unit_sphere(&mut rng, *dimension)
        }
        crate::objectives::ConstraintSet::Ball { radius, dimension } => {
            crate::rng::sample_unit_sphere(&mut rng, *dimension) * *radius
        }
        c => c.sample(&mut rng),
    };
    let mut states = Array2::zeros((inst.n_agents, inst.dimension));
    for mut row in states.rows_mut() {
        row.assign(&x0);
    }
    states
}

impl<'a> Engine<'a> {
    pub fn new(
        inst: &'a ObjectiveInstance,
        mixing: &'a MixingSchedule,
        schedule: &'a ScheduleSpec,
        oracle: OracleMode,
        method: Method,
        seed: u64,
    ) -> Result<Self> {
        let states = shared_init(inst, seed);
        Self::with_states(inst, mixing, schedule, oracle, method, seed, states)
    }

    pub fn with_states(
        inst: &'a ObjectiveInstance,
        mixing: &'a MixingSchedule,
        schedule: &'a ScheduleSpec,
        oracle: OracleMode,
        method: Method,
        seed: u64,
        states: Array2<f64>,
    ) -> Result<Self> {
        if mixing.n_agents() != inst.n_agents {
            return Err(HtoptError::Shape(format!(
                "topology has {} agents, instance has {}",
                mixing.n_agents(),
                inst.n_agents
            )));
        }
        if states.dim() != (inst.n_agents, inst.dimension) {
            return Err(HtoptError::Shape("bad initial state shape".into()));
        }
        if let OracleMode::Synthetic(spec) = &oracle {
            if spec.dimension != inst.dimension {
                return Err(HtoptError::Shape(
                    "synthetic noise dimension disagrees with the instance".into(),
                ));
            }
        }
        let rngs = (0..inst.n_agents)
            .map(|i| crate::rng::RngStream::new(seed, i, crate::rng::Purpose::Oracle).rng())
            .collect();
        Ok(Self {
            inst,
            mixing,
            schedule,
            oracle,
            method,
            states,
            rngs,
            round: 0,
        })
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn states(&self) -> &Array2<f64> {
        &self.states
    }

    pub fn mean_state(&self) -> Array1<f64> {
        self.states.mean_axis(Axis(0)).expect("nonempty states")
    }

    /// Execute one synchronous round of the update law.
    pub fn step(&mut self) -> Result<StepInfo> {
        let k = self.round;
        let alpha = self.schedule.alpha_at(k);
        let tau = self.schedule.tau_at(k);
        self.step_as(self.method, alpha, tau)
    }

    /// One round with explicit method, stepsize, and clipping radius. The
    /// baselines drive this directly so the only behavioral difference from
    /// the clipped method is the clip factor.
    pub fn step_as(&mut self, method: Method, alpha: f64, tau: f64) -> Result<StepInfo> {
        let k = self.round;
        let mixed = mix(self.mixing.matrix_at(k), &self.states)?;
        let inst = self.inst;
        let oracle = &self.oracle;
        let rows: Vec<(Array1<f64>, f64)> = self
            .rngs
            .par_iter_mut()
            .enumerate()
            .map(|(i, rng)| -> Result<(Array1<f64>, f64)> {
                let v = mixed.row(i);
                let g = match method {
                    Method::Dpsm => subgradient(inst, i, v).map_err(|e| HtoptError::Oracle {
                        agent: i,
                        cause: e.to_string(),
                    })?,
                    Method::Clipped | Method::StoDpsm => {
                        let sample = OracleSample::draw(oracle, inst, i, rng).map_err(|e| {
                            HtoptError::Oracle {
                                agent: i,
                                cause: e.to_string(),
                            }
                        })?;
                        let raw = stochastic_subgradient(inst, i, v, &sample).map_err(|e| {
                            HtoptError::Oracle {
                                agent: i,
                                cause: e.to_string(),
                            }
                        })?;
                        if method == Method::Clipped {
                            clip(raw.view(), tau)?
                        } else {
                            raw
                        }
                    }
                };
                let target = &v.to_owned() - &(g * alpha);
                let x = project(&inst.constraint, target.view());
                let disp = (&x - &v.to_owned()).mapv(|z| z * z).sum().sqrt();
                Ok((x, disp))
            })
            .collect::<Result<_>>()?;
        let mut displacements = Vec::with_capacity(rows.len());
        for (i, (x, d)) in rows.into_iter().enumerate() {
            self.states.row_mut(i).assign(&x);
            displacements.push(d);
        }
        self.round += 1;
        Ok(StepInfo {
            alpha,
            tau,
            displacements,
        })
    }
}

/// Run controls for the orchestrated experiment loop.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub rounds: usize,
    /// Record a metrics row every this many rounds (plus rounds 0 and K).
    pub measure_every: usize,
    /// Evaluate the Moreau gradient on rows whose index is a multiple of
    /// this cadence; 0 disables Moreau evaluation.
    pub moreau_every: usize,
    pub seed: u64,
    pub override_rejected_schedule: bool,
    pub wall_budget: Option<Duration>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            rounds: 1000,
            measure_every: 10,
            moreau_every: 100,
            seed: 0,
            override_rejected_schedule: false,
            wall_budget: None,
        }
    }
}

#[derive(Debug)]
pub struct RunRecord {
    pub rows: Vec<MetricsRow>,
    pub final_states: Array2<f64>,
    pub schedule_verdict: ScheduleVerdict,
    pub completed: bool,
    pub wall: Duration,
}

/// Execute `opts.rounds` rounds, recording metrics on the configured
/// cadence. Rejected schedules need the explicit override flag; the verdict
/// travels with the record either way.
pub fn run(
    inst: &ObjectiveInstance,
    mixing: &MixingSchedule,
    schedule: &ScheduleSpec,
    moreau_cfg: Option<&MoreauConfig>,
    oracle: OracleMode,
    method: Method,
    opts: &RunOptions,
) -> Result<RunRecord> {
    let verdict = validate_schedule(schedule);
    if !verdict.accepted && !opts.override_rejected_schedule {
        return Err(HtoptError::Precondition(format!(
            "schedule rejected on {:?}; set the override flag to run it anyway",
            verdict.failed_names()
        )));
    }
    let start = Instant::now();
    let mut engine = Engine::new(inst, mixing, schedule, oracle, method, opts.seed)?;
    let truth = inst.ground_truth().map(|t| t.to_owned());
    let measure_every = opts.measure_every.max(1);
    let mut rows = Vec::new();
    let mut completed = true;

    let record =
        |k: usize, engine: &Engine| -> Result<MetricsRow> {
            let mean = engine.mean_state();
            let f_bar = crate::objectives::eval_global(inst, mean.view())?;
            let consensus = consensus_error(engine.states());
            let (mg, mc) = match (moreau_cfg, opts.moreau_every) {
                (Some(cfg), every) if every > 0 && k % every == 0 => {
                    let p = prox(mean.view(), cfg, inst, &inst.constraint)?;
                    let g = envelope_gradient_from(&p, mean.view(), cfg.mu);
                    (Some(g.dot(&g).sqrt()), Some(p.certificate))
                }
                _ => (None, None),
            };
            let rec = match &truth {
                Some(t) => Some(recovery_error(mean.view(), t.view())?),
                None => None,
            };
            Ok(MetricsRow {
                k,
                alpha_k: schedule.alpha_at(k),
                tau_k: schedule.tau_at(k),
                f_bar,
                consensus_err: consensus,
                moreau_grad_norm: mg,
                moreau_cert: mc,
                recovery_err: rec,
            })
        };

    for k in 0..opts.rounds {
        if k % measure_every == 0 {
            rows.push(record(k, &engine)?);
        }
        if let Some(budget) = opts.wall_budget {
            if start.elapsed() > budget {
                completed = false;
                break;
            }
        }
        engine.step()?;
    }
    if completed {
        rows.push(record(opts.rounds, &engine)?);
    }
    Ok(RunRecord {
        rows,
        final_states: engine.states().clone(),
        schedule_verdict: verdict,
        completed,
        wall: start.elapsed(),
    })
}

/// Monte-Carlo check of the clipping bias bound ||B|| <= (2 gamma)^a
/// tau^(1-a) that holds once tau >= 2 C0.
#[derive(Debug, Clone)]
pub struct BiasReport {
    pub bias_norm: f64,
    pub bound: f64,
    pub standard_error: f64,
    pub n_samples: usize,
    pub pass: bool,
}

pub fn verify_clipping_bias(
    spec: &NoiseSpec,
    g: ArrayView1<f64>,
    tau: f64,
    n_samples: usize,
    stream: crate::rng::RngStream,
) -> Result<BiasReport> {
    let gnorm = g.dot(&g).sqrt();
    if tau < 2.0 * gnorm {
        return Err(HtoptError::Precondition(format!(
            "bias bound hypothesis needs tau >= 2 ||G||: tau = {tau}, ||G|| = {gnorm}"
        )));
    }
    if spec.dimension != g.len() {
        return Err(HtoptError::Shape(
            "noise dimension disagrees with the base gradient".into(),
        ));
    }
    let mut rng = stream.rng();
    let d = g.len();
    let mut mean = vec![0.0_f64; d];
    let mut m2 = vec![0.0_f64; d];
    for t in 0..n_samples {
        let z = sample_noise(spec, &mut rng);
        let mut noisy: Array1<f64> = g.to_owned();
        for (ni, zi) in noisy.iter_mut().zip(z.iter()) {
            *ni += zi;
        }
        let clipped = clip(noisy.view(), tau)?;
        // Welford accumulation per component
        let tn = (t + 1) as f64;
        for c in 0..d {
            let delta = clipped[c] - mean[c];
            mean[c] += delta / tn;
            m2[c] += delta * (clipped[c] - mean[c]);
        }
    }
    let n = n_samples as f64;
    let mut bias_sq = 0.0;
    let mut se_sq = 0.0;
    for c in 0..d {
        let b = mean[c] - g[c];
        bias_sq += b * b;
        se_sq += m2[c] / (n - 1.0) / n;
    }
    let bias_norm = bias_sq.sqrt();
    let standard_error = se_sq.sqrt();
    let bound = (2.0 * spec.scale).powf(spec.tail_index) * tau.powf(1.0 - spec.tail_index);
    Ok(BiasReport {
        bias_norm,
        bound,
        standard_error,
        n_samples,
        pass: bias_norm <= bound + 3.0 * standard_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseFamily;
    use crate::objectives::{gen_quadratic_test, quadratic_with_centers, ConstraintSet};
    use crate::rng::{Purpose, RngStream};
    use crate::topology::{ring_mixing, MixingSchedule};
    use ndarray::array;

    #[test]
    fn clip_examples() {
        let c = clip(array![3.0, 4.0].view(), 2.5).unwrap();
        assert!((c[0] - 1.5).abs() < 1e-15 && (c[1] - 2.0).abs() < 1e-15);
        let c = clip(array![0.1, 0.0].view(), 1.0).unwrap();
        assert_eq!(c, array![0.1, 0.0]);
        let c = clip(array![0.0, 0.0].view(), 7.0).unwrap();
        assert_eq!(c, array![0.0, 0.0]);
        assert!(matches!(
            clip(array![1.0].view(), 0.0),
            Err(HtoptError::Parameter(_))
        ));
    }

    #[test]
    fn schedule_validation_matches_worked_examples() {
        // accepted: p = 1, q = 0.4, tail 1.5
        let s = ScheduleSpec::new(1.0, 1.0, 2.0, 0.4, 1.5).unwrap();
        assert!(validate_schedule(&s).accepted);
        // rejected: q = 0.6 breaks square summability
        let s = ScheduleSpec::new(1.0, 1.0, 2.0, 0.6, 1.5).unwrap();
        let v = validate_schedule(&s);
        assert!(!v.accepted);
        assert!(v.failed_names().contains(&"step_clip_square_summable"));
        // rejected: q = 0 keeps tau bounded
        let s = ScheduleSpec::new(1.0, 1.0, 2.0, 0.0, 1.5).unwrap();
        let v = validate_schedule(&s);
        assert!(!v.accepted);
        assert!(v.failed_names().contains(&"clip_increases_to_infinity"));
    }

    #[test]
    fn schedule_sequences() {
        let s = ScheduleSpec::remark_example(5.0, 1.5).unwrap();
        assert!((s.alpha_at(0) - 1.0).abs() < 1e-15);
        assert!((s.alpha_at(9) - 0.1).abs() < 1e-15);
        assert!((s.tau_at(0) - 10.0).abs() < 1e-15);
        assert!(s.tau_at(100) > s.tau_at(10));
    }

    #[test]
    fn consensus_error_examples() {
        let equal = array![[0.5, 0.5], [0.5, 0.5]];
        assert_eq!(consensus_error(&equal), 0.0);
        let two = array![[1.0, 0.0], [0.0, 0.0]];
        assert!((consensus_error(&two) - 0.5_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_objective_keeps_consensus_states() {
        // identical centers at the shared start: gradient zero, states fixed
        let inst = quadratic_with_centers(
            Array2::zeros((4, 3)),
            ConstraintSet::Box {
                lo: -2.0,
                hi: 2.0,
                dimension: 3,
            },
        )
        .unwrap();
        let mixing = MixingSchedule::Static(ring_mixing(4).unwrap());
        let schedule = ScheduleSpec::new(1.0, 1.0, 10.0, 0.4, 1.5).unwrap();
        let mut states = Array2::zeros((4, 3));
        states.fill(0.0);
        let mut engine = Engine::with_states(
            &inst,
            &mixing,
            &schedule,
            OracleMode::FullBatch,
            Method::Clipped,
            0,
            states.clone(),
        )
        .unwrap();
        engine.step().unwrap();
        assert_eq!(engine.states(), &states);
    }

    #[test]
    fn single_agent_reduces_to_projected_gradient() {
        let inst = quadratic_with_centers(
            array![[1.0, -1.0]],
            ConstraintSet::Box {
                lo: -2.0,
                hi: 2.0,
                dimension: 2,
            },
        )
        .unwrap();
        let mixing = MixingSchedule::Static(
            crate::topology::MixingMatrix::from_weights(array![[1.0]]).unwrap(),
        );
        let schedule = ScheduleSpec::new(0.5, 0.0, 1e9, 0.1, 1.5).unwrap();
        let start = array![[0.0, 0.0]];
        let mut engine = Engine::with_states(
            &inst,
            &mixing,
            &schedule,
            OracleMode::FullBatch,
            Method::Clipped,
            0,
            start,
        )
        .unwrap();
        engine.step().unwrap();
        // x <- x - 0.5 (x - c) = 0.5 c
        assert!((engine.states()[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((engine.states()[[0, 1]] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn displacement_cap_and_feasibility() {
        let inst = crate::objectives::gen_phase_retrieval(
            10,
            5,
            6,
            RngStream::new(3, 0, Purpose::Instance),
            crate::objectives::SignalSource::Random,
        )
        .unwrap();
        let mixing = MixingSchedule::Static(ring_mixing(5).unwrap());
        // small clip radius so clipping actually binds
        let schedule = ScheduleSpec::new(0.2, 0.6, 0.5, 0.1, 1.5).unwrap();
        let mut engine = Engine::new(
            &inst,
            &mixing,
            &schedule,
            OracleMode::MiniBatch { batch_size: 1 },
            Method::Clipped,
            7,
        )
        .unwrap();
        for _ in 0..50 {
            let info = engine.step().unwrap();
            let cap = info.alpha * info.tau + 1e-12;
            for d in &info.displacements {
                assert!(*d <= cap, "displacement {d} above alpha tau = {cap}");
            }
            for row in engine.states().rows() {
                assert!(inst.constraint.contains(row, 1e-12));
            }
        }
    }

    #[test]
    fn quadratic_run_reaches_projected_centroid() {
        let inst = gen_quadratic_test(4, 5, RngStream::new(11, 0, Purpose::Instance)).unwrap();
        let mixing = MixingSchedule::Static(ring_mixing(5).unwrap());
        let schedule = ScheduleSpec::new(
            1.0,
            1.0,
            2.0 * inst.constants.c0,
            0.4,
            1.5,
        )
        .unwrap();
        let opts = RunOptions {
            rounds: 5000,
            measure_every: 500,
            moreau_every: 0,
            seed: 3,
            ..Default::default()
        };
        let rec = run(
            &inst,
            &mixing,
            &schedule,
            None,
            OracleMode::FullBatch,
            Method::Clipped,
            &opts,
        )
        .unwrap();
        let mean = rec.final_states.mean_axis(Axis(0)).unwrap();
        let target = inst.quadratic_minimizer().unwrap();
        let err = (&mean - &target).mapv(|v| v * v).sum().sqrt();
        assert!(err <= 1e-2, "distance to projected centroid {err}");
        assert!(rec.completed);
    }

    #[test]
    fn pure_noise_mean_displacement_capped() {
        // f == 0 via identical zero centers; pure heavy-tailed noise drives
        // the update, so the mean moves at most alpha tau per round.
        let inst = quadratic_with_centers(
            Array2::zeros((3, 4)),
            ConstraintSet::Box {
                lo: -50.0,
                hi: 50.0,
                dimension: 4,
            },
        )
        .unwrap();
        let mixing = MixingSchedule::Static(ring_mixing(3).unwrap());
        let schedule = ScheduleSpec::new(0.5, 1.0, 1.0, 0.4, 1.5).unwrap();
        let spec = NoiseSpec::new(NoiseFamily::SymmetricPareto, 1.5, 2.0, 4).unwrap();
        let mut engine = Engine::with_states(
            &inst,
            &mixing,
            &schedule,
            OracleMode::Synthetic(spec),
            Method::Clipped,
            5,
            Array2::zeros((3, 4)),
        )
        .unwrap();
        let mut prev = engine.mean_state();
        for _ in 0..200 {
            let info = engine.step().unwrap();
            let mean = engine.mean_state();
            let step = (&mean - &prev).mapv(|v| v * v).sum().sqrt();
            assert!(step <= info.alpha * info.tau + 1e-12);
            prev = mean;
        }
    }

    #[test]
    fn run_requires_override_for_rejected_schedule() {
        let inst = gen_quadratic_test(3, 4, RngStream::new(2, 0, Purpose::Instance)).unwrap();
        let mixing = MixingSchedule::Static(ring_mixing(4).unwrap());
        let schedule = ScheduleSpec::new(0.01, 0.0, 1e6, 0.0, 1.5).unwrap();
        let opts = RunOptions {
            rounds: 10,
            ..Default::default()
        };
        let err = run(
            &inst,
            &mixing,
            &schedule,
            None,
            OracleMode::FullBatch,
            Method::Dpsm,
            &opts,
        );
        assert!(matches!(err, Err(HtoptError::Precondition(_))));
        let opts = RunOptions {
            override_rejected_schedule: true,
            ..opts
        };
        let rec = run(
            &inst,
            &mixing,
            &schedule,
            None,
            OracleMode::FullBatch,
            Method::Dpsm,
            &opts,
        )
        .unwrap();
        assert!(!rec.schedule_verdict.accepted);
        assert!(rec.completed);
    }

    #[test]
    fn wall_budget_marks_incomplete() {
        let inst = gen_quadratic_test(16, 6, RngStream::new(2, 0, Purpose::Instance)).unwrap();
        let mixing = MixingSchedule::Static(ring_mixing(6).unwrap());
        let schedule = ScheduleSpec::new(1.0, 1.0, 2.0 * inst.constants.c0, 0.4, 1.5).unwrap();
        let opts = RunOptions {
            rounds: 10_000_000,
            measure_every: 1000,
            moreau_every: 0,
            wall_budget: Some(Duration::from_millis(50)),
            ..Default::default()
        };
        let rec = run(
            &inst,
            &mixing,
            &schedule,
            None,
            OracleMode::FullBatch,
            Method::Clipped,
            &opts,
        )
        .unwrap();
        assert!(!rec.completed);
    }

    #[test]
    fn bias_report_none_noise_is_exact_zero() {
        let spec = NoiseSpec::none(3);
        let g = array![0.5, -0.25, 0.1];
        let rep = verify_clipping_bias(
            &spec,
            g.view(),
            4.0,
            10_000,
            RngStream::new(0, 0, Purpose::Probe),
        )
        .unwrap();
        assert_eq!(rep.bias_norm, 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn bias_precondition_requires_large_tau() {
        let spec = NoiseSpec::none(2);
        let g = array![3.0, 0.0];
        assert!(matches!(
            verify_clipping_bias(&spec, g.view(), 4.0, 100, RngStream::new(0, 0, Purpose::Probe)),
            Err(HtoptError::Precondition(_))
        ));
    }

    #[test]
    fn bias_bound_holds_for_pareto() {
        let spec = NoiseSpec::new(NoiseFamily::SymmetricPareto, 1.5, 1.0, 4).unwrap();
        let g = Array1::zeros(4);
        let rep = verify_clipping_bias(
            &spec,
            g.view(),
            4.0,
            200_000,
            RngStream::new(1, 0, Purpose::Probe),
        )
        .unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!((rep.bound - 2.0_f64.powf(1.5) * 4.0_f64.powf(-0.5)).abs() < 1e-12);
    }
}
