//! Weakly convex objective instances with deterministic and stochastic
//! subgradient oracles, constraint sets, and constant estimation.

use crate::container;
use crate::error::{HtoptError, Result};
use crate::noise::{sample_noise, NoiseSpec};
use crate::rng::{sample_unit_ball, sample_unit_sphere, Purpose, RngStream};
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Compact convex constraint set with a cheap Euclidean projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSet {
    UnitBall { dimension: usize },
    Ball { radius: f64, dimension: usize },
    Box { lo: f64, hi: f64, dimension: usize },
}

impl ConstraintSet {
    pub fn dimension(&self) -> usize {
        match self {
            ConstraintSet::UnitBall { dimension }
            | ConstraintSet::Ball { dimension, .. }
            | ConstraintSet::Box { dimension, .. } => *dimension,
        }
    }

    pub fn contains(&self, x: ArrayView1<f64>, tol: f64) -> bool {
        match self {
            ConstraintSet::UnitBall { .. } => x.dot(&x).sqrt() <= 1.0 + tol,
            ConstraintSet::Ball { radius, .. } => x.dot(&x).sqrt() <= radius + tol,
            ConstraintSet::Box { lo, hi, .. } => {
                x.iter().all(|v| *v >= lo - tol && *v <= hi + tol)
            }
        }
    }

    /// Uniform sample from the set, used by the probing estimators.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Array1<f64> {
        match self {
            ConstraintSet::UnitBall { dimension } => sample_unit_ball(rng, *dimension),
            ConstraintSet::Ball { radius, dimension } => {
                sample_unit_ball(rng, *dimension) * *radius
            }
            ConstraintSet::Box { lo, hi, dimension } => {
                Array1::from_iter((0..*dimension).map(|_| rng.gen_range(*lo..*hi)))
            }
        }
    }
}

/// Euclidean projection onto the set. Nonexpansive and idempotent.
pub fn project(c: &ConstraintSet, x: ArrayView1<f64>) -> Array1<f64> {
    match c {
        ConstraintSet::UnitBall { .. } => {
            let norm = x.dot(&x).sqrt();
            if norm <= 1.0 {
                x.to_owned()
            } else {
                x.to_owned() / norm
            }
        }
        ConstraintSet::Ball { radius, .. } => {
            let norm = x.dot(&x).sqrt();
            if norm <= *radius {
                x.to_owned()
            } else {
                x.to_owned() * (*radius / norm)
            }
        }
        ConstraintSet::Box { lo, hi, .. } => x.mapv(|v| v.clamp(*lo, *hi)),
    }
}

/// Estimated problem constants. `c0` bounds every deterministic subgradient
/// norm on the constraint set; `lipschitz` and `weak_convexity` are sampled
/// estimates inflated by a 1.5x safety factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c0: f64,
    pub lipschitz: f64,
    pub weak_convexity: f64,
}

#[derive(Debug, Clone)]
pub enum ObjectiveData {
    /// Per-agent Gaussian measurement matrices W_i (m x n) and observations
    /// y_i; the local loss is the mean absolute residual of squared inner
    /// products.
    PhaseRetrieval {
        measurements: Vec<Array2<f64>>,
        observations: Vec<Array1<f64>>,
        signal: Option<Array1<f64>>,
    },
    /// Smooth convex sanity problem f_i(x) = 0.5 ||x - c_i||^2 with known
    /// minimizer: the projected centroid of the rows of `centers`.
    Quadratic { centers: Array2<f64> },
}

#[derive(Debug, Clone)]
pub struct ObjectiveInstance {
    pub n_agents: usize,
    pub dimension: usize,
    pub data: ObjectiveData,
    pub constants: Constants,
    pub constraint: ConstraintSet,
    pub warnings: Vec<String>,
    pub seed: Option<u64>,
}

/// Where the ground-truth signal of a phase-retrieval instance comes from.
#[derive(Debug, Clone)]
pub enum SignalSource {
    Random,
    Given(Array1<f64>),
}

impl ObjectiveInstance {
    pub fn measurements_per_agent(&self) -> Option<usize> {
        match &self.data {
            ObjectiveData::PhaseRetrieval { observations, .. } => {
                observations.first().map(|y| y.len())
            }
            ObjectiveData::Quadratic { .. } => None,
        }
    }

    pub fn ground_truth(&self) -> Option<ArrayView1<'_, f64>> {
        match &self.data {
            ObjectiveData::PhaseRetrieval { signal, .. } => signal.as_ref().map(|s| s.view()),
            ObjectiveData::Quadratic { centers } => {
                // known minimizer: projected centroid; exposed for recovery metrics
                let _ = centers;
                None
            }
        }
    }

    /// Closed-form minimizer of the quadratic test problem.
    pub fn quadratic_minimizer(&self) -> Option<Array1<f64>> {
        match &self.data {
            ObjectiveData::Quadratic { centers } => {
                let centroid = centers.mean_axis(ndarray::Axis(0)).unwrap();
                Some(project(&self.constraint, centroid.view()))
            }
            _ => None,
        }
    }
}

/// Local objective value f_i(theta).
pub fn eval_local(inst: &ObjectiveInstance, agent: usize, theta: ArrayView1<f64>) -> Result<f64> {
    if theta.len() != inst.dimension {
        return Err(HtoptError::Shape(format!(
            "theta has dimension {}, instance expects {}",
            theta.len(),
            inst.dimension
        )));
    }
    match &inst.data {
        ObjectiveData::PhaseRetrieval {
            measurements,
            observations,
            ..
        } => {
            let t = measurements[agent].dot(&theta);
            let m = t.len() as f64;
            Ok(t.iter()
                .zip(observations[agent].iter())
                .map(|(ti, yi)| (ti * ti - yi).abs())
                .sum::<f64>()
                / m)
        }
        ObjectiveData::Quadratic { centers } => {
            let d = &theta.to_owned() - &centers.row(agent);
            Ok(0.5 * d.dot(&d))
        }
    }
}

/// Global objective value f(theta) = (1/N) sum_i f_i(theta).
pub fn eval_global(inst: &ObjectiveInstance, theta: ArrayView1<f64>) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..inst.n_agents {
        acc += eval_local(inst, i, theta)?;
    }
    Ok(acc / inst.n_agents as f64)
}

/// Deterministic full-batch subgradient of f_i at theta, with sign(0) := 0.
pub fn subgradient(
    inst: &ObjectiveInstance,
    agent: usize,
    theta: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    if theta.len() != inst.dimension {
        return Err(HtoptError::Shape(format!(
            "theta has dimension {}, instance expects {}",
            theta.len(),
            inst.dimension
        )));
    }
    match &inst.data {
        ObjectiveData::PhaseRetrieval {
            measurements,
            observations,
            ..
        } => {
            let w = &measurements[agent];
            let t = w.dot(&theta);
            let m = t.len();
            let mut coef = Array1::zeros(m);
            for j in 0..m {
                let r = t[j] * t[j] - observations[agent][j];
                let s = if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                coef[j] = 2.0 * t[j] * s / m as f64;
            }
            Ok(w.t().dot(&coef))
        }
        ObjectiveData::Quadratic { centers } => Ok(&theta.to_owned() - &centers.row(agent)),
    }
}

/// Subgradient of the global objective (1/N) sum_i f_i.
pub fn subgradient_global(inst: &ObjectiveInstance, theta: ArrayView1<f64>) -> Result<Array1<f64>> {
    let mut acc = Array1::zeros(inst.dimension);
    for i in 0..inst.n_agents {
        acc = acc + subgradient(inst, i, theta)?;
    }
    Ok(acc / inst.n_agents as f64)
}

/// How the stochastic oracle perturbs the deterministic subgradient.
#[derive(Debug, Clone)]
pub enum OracleMode {
    /// No randomness: the oracle returns the full-batch subgradient.
    FullBatch,
    /// Uniform with-replacement mini-batch over the agent's measurements.
    MiniBatch { batch_size: usize },
    /// Full-batch subgradient plus additive synthetic noise.
    Synthetic(NoiseSpec),
}

/// One realized oracle draw.
#[derive(Debug, Clone)]
pub struct OracleSample {
    pub agent: usize,
    pub batch_indices: Vec<usize>,
    pub noise: Option<Vec<f64>>,
}

impl OracleSample {
    pub fn draw(
        mode: &OracleMode,
        inst: &ObjectiveInstance,
        agent: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        match mode {
            OracleMode::FullBatch => Ok(Self {
                agent,
                batch_indices: (0..inst.measurements_per_agent().unwrap_or(1)).collect(),
                noise: None,
            }),
            OracleMode::MiniBatch { batch_size } => {
                let m = inst.measurements_per_agent().ok_or_else(|| {
                    HtoptError::Parameter(
                        "mini-batch oracle needs a measurement-based instance".into(),
                    )
                })?;
                if *batch_size == 0 || *batch_size > m {
                    return Err(HtoptError::Parameter(format!(
                        "batch size {batch_size} outside 1..={m}"
                    )));
                }
                // a full-size batch is the exact index set; smaller batches
                // sample uniformly with replacement (unbiased)
                let batch_indices = if *batch_size == m {
                    (0..m).collect()
                } else {
                    (0..*batch_size).map(|_| rng.gen_range(0..m)).collect()
                };
                Ok(Self {
                    agent,
                    batch_indices,
                    noise: None,
                })
            }
            OracleMode::Synthetic(spec) => Ok(Self {
                agent,
                batch_indices: (0..inst.measurements_per_agent().unwrap_or(1)).collect(),
                noise: Some(sample_noise(spec, rng)),
            }),
        }
    }
}

/// Stochastic subgradient at theta realized by `sample`. A full-index batch
/// with no noise coincides with the deterministic subgradient.
pub fn stochastic_subgradient(
    inst: &ObjectiveInstance,
    agent: usize,
    theta: ArrayView1<f64>,
    sample: &OracleSample,
) -> Result<Array1<f64>> {
    if sample.batch_indices.is_empty() {
        return Err(HtoptError::Parameter("empty oracle batch".into()));
    }
    let mut g = match &inst.data {
        ObjectiveData::PhaseRetrieval {
            measurements,
            observations,
            ..
        } => {
            let w = &measurements[agent];
            let m = w.nrows();
            let b = sample.batch_indices.len() as f64;
            let mut g = Array1::zeros(inst.dimension);
            for &j in &sample.batch_indices {
                if j >= m {
                    return Err(HtoptError::Parameter(format!(
                        "batch index {j} out of range 0..{m}"
                    )));
                }
                let t = w.row(j).dot(&theta);
                let r = t * t - observations[agent][j];
                let s = if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                g.scaled_add(2.0 * t * s / b, &w.row(j));
            }
            g
        }
        ObjectiveData::Quadratic { centers } => &theta.to_owned() - &centers.row(agent),
    };
    if let Some(noise) = &sample.noise {
        if noise.len() != g.len() {
            return Err(HtoptError::Shape("noise dimension mismatch".into()));
        }
        for (gi, ni) in g.iter_mut().zip(noise.iter()) {
            *gi += ni;
        }
    }
    Ok(g)
}

/// Analytic C0 for the instance on its constraint set.
fn analytic_c0(data: &ObjectiveData, constraint: &ConstraintSet) -> f64 {
    match data {
        ObjectiveData::PhaseRetrieval { measurements, .. } => {
            // |<w, theta>| <= ||w|| on the unit ball, so each term is at most
            // 2 ||w||^2 / m.
            let radius = match constraint {
                ConstraintSet::UnitBall { .. } => 1.0,
                ConstraintSet::Ball { radius, .. } => *radius,
                ConstraintSet::Box { lo, hi, dimension } => {
                    let corner = lo.abs().max(hi.abs());
                    corner * (*dimension as f64).sqrt()
                }
            };
            measurements
                .iter()
                .map(|w| {
                    let m = w.nrows() as f64;
                    2.0 * radius * w.iter().map(|v| v * v).sum::<f64>() / m
                })
                .fold(0.0, f64::max)
        }
        ObjectiveData::Quadratic { centers } => {
            let n = centers.ncols();
            (0..centers.nrows())
                .map(|i| {
                    let c = centers.row(i);
                    match constraint {
                        ConstraintSet::UnitBall { .. } => 1.0 + c.dot(&c).sqrt(),
                        ConstraintSet::Ball { radius, .. } => radius + c.dot(&c).sqrt(),
                        ConstraintSet::Box { lo, hi, .. } => (0..n)
                            .map(|k| {
                                let d = (lo - c[k]).abs().max((hi - c[k]).abs());
                                d * d
                            })
                            .sum::<f64>()
                            .sqrt(),
                    }
                })
                .fold(0.0, f64::max)
        }
    }
}

/// Sampled Lipschitz and weak-convexity constants plus the analytic C0.
///
/// Probing uses segments at log-uniform half-lengths (1e-3 .. 2) so short
/// segments can expose local negative curvature that long chords average
/// away; each estimate is inflated by 1.5x.
pub fn estimate_constants(
    inst_data: &ObjectiveData,
    constraint: &ConstraintSet,
    n_agents: usize,
    dimension: usize,
    n_probe: usize,
    stream: RngStream,
) -> Result<Constants> {
    if n_probe < 100 {
        return Err(HtoptError::Precondition(format!(
            "need at least 100 probes, got {n_probe}"
        )));
    }
    let probe_inst = ObjectiveInstance {
        n_agents,
        dimension,
        data: inst_data.clone(),
        constants: Constants {
            c0: 0.0,
            lipschitz: 0.0,
            weak_convexity: 0.0,
        },
        constraint: constraint.clone(),
        warnings: Vec::new(),
        seed: None,
    };
    let mut rng = stream.rng();
    let mut lip: f64 = 0.0;
    let mut rho: f64 = 0.0;
    for _ in 0..n_probe {
        let agent = rng.gen_range(0..n_agents);
        let center = constraint.sample(&mut rng);
        let dir = sample_unit_sphere(&mut rng, dimension);
        let half: f64 = 10.0_f64.powf(rng.gen_range(-3.0..0.3));
        let u = project(constraint, (&center + &(&dir * half)).view());
        let v = project(constraint, (&center - &(&dir * half)).view());
        let duv = (&u - &v).dot(&(&u - &v)).sqrt();
        if duv < 1e-12 {
            continue;
        }
        let fu = eval_local(&probe_inst, agent, u.view())?;
        let fv = eval_local(&probe_inst, agent, v.view())?;
        lip = lip.max((fu - fv).abs() / duv);
        for t in [0.25, 0.5, 0.75] {
            let mid = &u * t + &v * (1.0 - t);
            let fm = eval_local(&probe_inst, agent, mid.view())?;
            let violation = fm - t * fu - (1.0 - t) * fv;
            rho = rho.max(2.0 * violation / (t * (1.0 - t) * duv * duv));
        }
    }
    Ok(Constants {
        c0: analytic_c0(inst_data, constraint),
        lipschitz: 1.5 * lip,
        weak_convexity: 1.5 * rho.max(0.0),
    })
}

/// Generate a phase-retrieval instance: W_i rows i.i.d. standard Gaussian,
/// exact observations y = <w, signal>^2, constraint the unit ball. A nonzero
/// given signal is normalized to unit norm so recovery is feasible.
pub fn gen_phase_retrieval(
    n: usize,
    n_agents: usize,
    m: usize,
    stream: RngStream,
    signal: SignalSource,
) -> Result<ObjectiveInstance> {
    if n == 0 || n_agents == 0 || m == 0 {
        return Err(HtoptError::Parameter(
            "dimensions and agent/measurement counts must be positive".into(),
        ));
    }
    let mut rng = stream.rng();
    let truth = match signal {
        SignalSource::Random => sample_unit_sphere(&mut rng, n),
        SignalSource::Given(s) => {
            if s.len() != n {
                return Err(HtoptError::Shape(format!(
                    "signal has dimension {}, expected {n}",
                    s.len()
                )));
            }
            let norm = s.dot(&s).sqrt();
            if norm == 0.0 {
                s
            } else {
                s / norm
            }
        }
    };
    let mut measurements = Vec::with_capacity(n_agents);
    let mut observations = Vec::with_capacity(n_agents);
    for _ in 0..n_agents {
        let w = Array2::from_shape_fn((m, n), |_| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let y = w.dot(&truth).mapv(|t| t * t);
        measurements.push(w);
        observations.push(y);
    }
    let mut warnings = Vec::new();
    if n_agents * m < 3 * n {
        warnings.push(format!(
            "N*m = {} below the 3n = {} recovery threshold; run allowed, recovery not guaranteed",
            n_agents * m,
            3 * n
        ));
    }
    let data = ObjectiveData::PhaseRetrieval {
        measurements,
        observations,
        signal: Some(truth),
    };
    let constraint = ConstraintSet::UnitBall { dimension: n };
    let constants = estimate_constants(
        &data,
        &constraint,
        n_agents,
        n,
        1000,
        RngStream::new(stream.seed, stream.agent, Purpose::Probe),
    )?;
    Ok(ObjectiveInstance {
        n_agents,
        dimension: n,
        data,
        constants,
        constraint,
        warnings,
        seed: Some(stream.seed),
    })
}

/// Assemble a phase-retrieval instance from explicit parts.
pub fn phase_retrieval_from_parts(
    measurements: Vec<Array2<f64>>,
    observations: Vec<Array1<f64>>,
    signal: Option<Array1<f64>>,
    constraint: ConstraintSet,
) -> Result<ObjectiveInstance> {
    if measurements.is_empty() || measurements.len() != observations.len() {
        return Err(HtoptError::Shape(
            "need matching, nonempty measurement and observation lists".into(),
        ));
    }
    let n = measurements[0].ncols();
    let n_agents = measurements.len();
    for (w, y) in measurements.iter().zip(observations.iter()) {
        if w.ncols() != n || w.nrows() != y.len() {
            return Err(HtoptError::Shape("inconsistent per-agent shapes".into()));
        }
    }
    let data = ObjectiveData::PhaseRetrieval {
        measurements,
        observations,
        signal,
    };
    let constants = estimate_constants(
        &data,
        &constraint,
        n_agents,
        n,
        1000,
        RngStream::new(0, 0, Purpose::Probe),
    )?;
    Ok(ObjectiveInstance {
        n_agents,
        dimension: n,
        data,
        constants,
        constraint,
        warnings: Vec::new(),
        seed: None,
    })
}

/// The default box half-width for the quadratic test problem. Centers are
/// drawn from U(-1,1)^n so the centroid is strictly interior.
pub const QUADRATIC_BOX_HALF_WIDTH: f64 = 2.0;

/// Smooth convex sanity instance with a known minimizer.
pub fn gen_quadratic_test(n: usize, n_agents: usize, stream: RngStream) -> Result<ObjectiveInstance> {
    let mut rng = stream.rng();
    let centers = Array2::from_shape_fn((n_agents, n), |_| rng.gen_range(-1.0..1.0));
    quadratic_with_centers(
        centers,
        ConstraintSet::Box {
            lo: -QUADRATIC_BOX_HALF_WIDTH,
            hi: QUADRATIC_BOX_HALF_WIDTH,
            dimension: n,
        },
    )
    .map(|mut inst| {
        inst.seed = Some(stream.seed);
        inst
    })
}

pub fn quadratic_with_centers(
    centers: Array2<f64>,
    constraint: ConstraintSet,
) -> Result<ObjectiveInstance> {
    let (n_agents, n) = centers.dim();
    if n_agents == 0 || n == 0 {
        return Err(HtoptError::Parameter("centers must be nonempty".into()));
    }
    if constraint.dimension() != n {
        return Err(HtoptError::Shape(
            "constraint dimension disagrees with centers".into(),
        ));
    }
    let data = ObjectiveData::Quadratic { centers };
    let constants = estimate_constants(
        &data,
        &constraint,
        n_agents,
        n,
        500,
        RngStream::new(1, 0, Purpose::Probe),
    )?;
    Ok(ObjectiveInstance {
        n_agents,
        dimension: n,
        data,
        constants,
        constraint,
        warnings: Vec::new(),
        seed: None,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceMeta {
    kind: String,
    n_agents: usize,
    dimension: usize,
    measurements_per_agent: Option<usize>,
    constants: Constants,
    constraint: ConstraintSet,
    signal_present: bool,
    warnings: Vec<String>,
    seed: Option<u64>,
}

/// Persist the instance: matrices in the binary container, constants and
/// shape information in a JSON sidecar at `<path>.meta.json`.
pub fn save_instance(inst: &ObjectiveInstance, path: &Path) -> Result<()> {
    let (kind, mats): (String, Vec<Array2<f64>>) = match &inst.data {
        ObjectiveData::PhaseRetrieval {
            measurements,
            observations,
            signal,
        } => {
            let mut mats = Vec::new();
            match signal {
                Some(s) => mats.push(
                    Array2::from_shape_vec((1, s.len()), s.to_vec())
                        .expect("signal row reshape"),
                ),
                None => mats.push(Array2::zeros((0, 0))),
            }
            for w in measurements {
                mats.push(w.clone());
            }
            for y in observations {
                mats.push(
                    Array2::from_shape_vec((1, y.len()), y.to_vec())
                        .expect("observation row reshape"),
                );
            }
            ("phase_retrieval".into(), mats)
        }
        ObjectiveData::Quadratic { centers } => ("quadratic".into(), vec![centers.clone()]),
    };
    let refs: Vec<&Array2<f64>> = mats.iter().collect();
    container::write_matrices_file(path, &refs)?;
    let meta = InstanceMeta {
        kind,
        n_agents: inst.n_agents,
        dimension: inst.dimension,
        measurements_per_agent: inst.measurements_per_agent(),
        constants: inst.constants,
        constraint: inst.constraint.clone(),
        signal_present: matches!(
            &inst.data,
            ObjectiveData::PhaseRetrieval { signal: Some(_), .. }
        ),
        warnings: inst.warnings.clone(),
        seed: inst.seed,
    };
    let sidecar = sidecar_path(path);
    std::fs::write(sidecar, serde_json::to_string_pretty(&meta).unwrap())?;
    Ok(())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    std::path::PathBuf::from(s)
}

pub fn load_instance(path: &Path) -> Result<ObjectiveInstance> {
    let meta: InstanceMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)
        .map_err(|e| HtoptError::Format(format!("bad instance sidecar: {e}")))?;
    let mats = container::read_matrices_file(path)?;
    let data = match meta.kind.as_str() {
        "phase_retrieval" => {
            let expect = 1 + 2 * meta.n_agents;
            if mats.len() != expect {
                return Err(HtoptError::Format(format!(
                    "expected {expect} matrices, found {}",
                    mats.len()
                )));
            }
            let signal = if meta.signal_present {
                Some(mats[0].row(0).to_owned())
            } else {
                None
            };
            let measurements = mats[1..1 + meta.n_agents].to_vec();
            let observations = mats[1 + meta.n_agents..]
                .iter()
                .map(|m| m.row(0).to_owned())
                .collect();
            ObjectiveData::PhaseRetrieval {
                measurements,
                observations,
                signal,
            }
        }
        "quadratic" => ObjectiveData::Quadratic {
            centers: mats
                .into_iter()
                .next()
                .ok_or_else(|| HtoptError::Format("missing centers matrix".into()))?,
        },
        other => return Err(HtoptError::Format(format!("unknown instance kind {other}"))),
    };
    Ok(ObjectiveInstance {
        n_agents: meta.n_agents,
        dimension: meta.dimension,
        data,
        constants: meta.constants,
        constraint: meta.constraint,
        warnings: meta.warnings,
        seed: meta.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn desk_instance() -> ObjectiveInstance {
        gen_phase_retrieval(
            49,
            7,
            21,
            RngStream::new(42, 0, Purpose::Instance),
            SignalSource::Random,
        )
        .unwrap()
    }

    #[test]
    fn paper_and_desk_configurations() {
        let desk = desk_instance();
        assert_eq!(desk.n_agents * desk.measurements_per_agent().unwrap(), 147);
        assert!(desk.warnings.is_empty(), "7*21 = 3*49 meets the threshold");
        let small = gen_phase_retrieval(
            49,
            7,
            20,
            RngStream::new(1, 0, Purpose::Instance),
            SignalSource::Random,
        )
        .unwrap();
        assert!(!small.warnings.is_empty(), "below threshold must warn");
    }

    #[test]
    fn zero_signal_gives_zero_objective() {
        let inst = gen_phase_retrieval(
            5,
            2,
            8,
            RngStream::new(3, 0, Purpose::Instance),
            SignalSource::Given(Array1::zeros(5)),
        )
        .unwrap();
        let theta = Array1::zeros(5);
        for i in 0..2 {
            assert_eq!(eval_local(&inst, i, theta.view()).unwrap(), 0.0);
        }
    }

    #[test]
    fn truth_and_negated_truth_are_zeros() {
        let inst = desk_instance();
        let truth = inst.ground_truth().unwrap().to_owned();
        let neg = truth.mapv(|v| -v);
        for i in 0..inst.n_agents {
            assert!(eval_local(&inst, i, truth.view()).unwrap() < 1e-24);
            assert!(eval_local(&inst, i, neg.view()).unwrap() < 1e-24);
        }
        // subgradient vanishes at the truth: all residuals are exactly zero
        let g = subgradient(&inst, 0, truth.view()).unwrap();
        assert_eq!(g.dot(&g), 0.0);
    }

    #[test]
    fn single_measurement_hand_arithmetic() {
        let inst = phase_retrieval_from_parts(
            vec![array![[1.0, 0.0]]],
            vec![array![1.0]],
            None,
            ConstraintSet::UnitBall { dimension: 2 },
        )
        .unwrap();
        let f = eval_local(&inst, 0, array![0.0, 1.0].view()).unwrap();
        assert!((f - 1.0).abs() < 1e-15);
        // w=(1,0), y=0, theta=(t,0): f = t^2, gradient (2t, 0)
        let inst0 = phase_retrieval_from_parts(
            vec![array![[1.0, 0.0]]],
            vec![array![0.0]],
            None,
            ConstraintSet::UnitBall { dimension: 2 },
        )
        .unwrap();
        let g = subgradient(&inst0, 0, array![0.4, 0.0].view()).unwrap();
        assert!((g[0] - 0.8).abs() < 1e-15 && g[1] == 0.0);
        // C0 example: single unit-norm measurement on the unit ball
        assert!((inst0.constants.c0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn subgradient_bounded_by_c0() {
        let inst = desk_instance();
        let mut rng = RngStream::new(9, 0, Purpose::Probe).rng();
        for _ in 0..1000 {
            let theta = inst.constraint.sample(&mut rng);
            for i in 0..inst.n_agents {
                let g = subgradient(&inst, i, theta.view()).unwrap();
                let norm = g.dot(&g).sqrt();
                assert!(norm <= inst.constants.c0, "{norm} > {}", inst.constants.c0);
            }
        }
    }

    #[test]
    fn directional_derivative_consistency() {
        // f(theta + h d) - f(theta) >= h <g, d> - (rho/2) h^2 for small h
        let inst = desk_instance();
        let mut rng = RngStream::new(11, 0, Purpose::Probe).rng();
        let rho = inst.constants.weak_convexity;
        for _ in 0..100 {
            let theta = sample_unit_ball(&mut rng, inst.dimension) * 0.9;
            let d = sample_unit_sphere(&mut rng, inst.dimension);
            let g = subgradient(&inst, 0, theta.view()).unwrap();
            let h = 1e-4;
            let plus = &theta + &(&d * h);
            let f0 = eval_local(&inst, 0, theta.view()).unwrap();
            let f1 = eval_local(&inst, 0, plus.view()).unwrap();
            assert!(
                f1 - f0 >= h * g.dot(&d) - 0.5 * rho * h * h - 1e-10,
                "weak-convexity lower bound violated"
            );
        }
    }

    #[test]
    fn minibatch_unbiased_for_full_subgradient() {
        let inst = desk_instance();
        let mut rng = RngStream::new(13, 0, Purpose::Oracle).rng();
        let theta = sample_unit_ball(&mut rng, inst.dimension);
        let full = subgradient(&inst, 2, theta.view()).unwrap();
        let mode = OracleMode::MiniBatch { batch_size: 1 };
        let n_draws = 10_000;
        let mut acc = Array1::<f64>::zeros(inst.dimension);
        let mut acc_sq = Array1::<f64>::zeros(inst.dimension);
        for _ in 0..n_draws {
            let s = OracleSample::draw(&mode, &inst, 2, &mut rng).unwrap();
            let g = stochastic_subgradient(&inst, 2, theta.view(), &s).unwrap();
            acc_sq = acc_sq + g.mapv(|v| v * v);
            acc = acc + g;
        }
        let mean = acc / n_draws as f64;
        let meansq = acc_sq / n_draws as f64;
        for k in 0..inst.dimension {
            let var = (meansq[k] - mean[k] * mean[k]).max(0.0);
            let se = (var / n_draws as f64).sqrt();
            assert!(
                (mean[k] - full[k]).abs() <= 3.0 * se + 1e-9,
                "component {k}: {} vs {} (se {se})",
                mean[k],
                full[k]
            );
        }
    }

    #[test]
    fn full_batch_sample_is_exact_and_none_noise_is_identity() {
        let inst = desk_instance();
        let mut rng = RngStream::new(17, 0, Purpose::Oracle).rng();
        let theta = sample_unit_ball(&mut rng, inst.dimension);
        let full = subgradient(&inst, 0, theta.view()).unwrap();
        let s = OracleSample::draw(&OracleMode::FullBatch, &inst, 0, &mut rng).unwrap();
        let g = stochastic_subgradient(&inst, 0, theta.view(), &s).unwrap();
        assert_eq!(g, full);
        let s = OracleSample::draw(
            &OracleMode::Synthetic(NoiseSpec::none(inst.dimension)),
            &inst,
            0,
            &mut rng,
        )
        .unwrap();
        let g = stochastic_subgradient(&inst, 0, theta.view(), &s).unwrap();
        assert_eq!(g, full);
    }

    #[test]
    fn projection_cases() {
        let ball = ConstraintSet::UnitBall { dimension: 2 };
        let p = project(&ball, array![3.0, 4.0].view());
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        let q = project(&ball, array![0.1, 0.2].view());
        assert_eq!(q, array![0.1, 0.2]);
        let bx = ConstraintSet::Box {
            lo: 0.0,
            hi: 1.0,
            dimension: 2,
        };
        let r = project(&bx, array![-1.0, 2.0].view());
        assert_eq!(r, array![0.0, 1.0]);
    }

    #[test]
    fn projection_nonexpansive_and_idempotent() {
        let mut rng = RngStream::new(23, 0, Purpose::Probe).rng();
        for c in [
            ConstraintSet::UnitBall { dimension: 4 },
            ConstraintSet::Ball {
                radius: 0.7,
                dimension: 4,
            },
            ConstraintSet::Box {
                lo: -0.3,
                hi: 0.9,
                dimension: 4,
            },
        ] {
            for _ in 0..1000 {
                let x = Array1::from_iter((0..4).map(|_| rng.gen_range(-3.0..3.0)));
                let y = Array1::from_iter((0..4).map(|_| rng.gen_range(-3.0..3.0)));
                let px = project(&c, x.view());
                let py = project(&c, y.view());
                let dxy = (&x - &y).dot(&(&x - &y)).sqrt();
                let dp = (&px - &py).dot(&(&px - &py)).sqrt();
                assert!(dp <= dxy + 1e-12);
                let ppx = project(&c, px.view());
                assert!((&ppx - &px).dot(&(&ppx - &px)).sqrt() < 1e-15);
            }
        }
    }

    #[test]
    fn weak_convexity_inequality_with_estimated_rho() {
        let inst = desk_instance();
        let rho = inst.constants.weak_convexity;
        let mut rng = RngStream::new(29, 0, Purpose::Probe).rng();
        for _ in 0..1000 {
            let x = inst.constraint.sample(&mut rng);
            let y = inst.constraint.sample(&mut rng);
            let dxy2 = (&x - &y).dot(&(&x - &y));
            let fx = eval_global(&inst, x.view()).unwrap();
            let fy = eval_global(&inst, y.view()).unwrap();
            for t in [0.25, 0.5, 0.75] {
                let mid = &x * t + &y * (1.0 - t);
                let fm = eval_global(&inst, mid.view()).unwrap();
                assert!(
                    fm <= t * fx + (1.0 - t) * fy + 0.5 * rho * t * (1.0 - t) * dxy2 + 1e-10,
                    "Lemma-1 style inequality violated at t={t}"
                );
            }
        }
    }

    #[test]
    fn subgradient_inequality_sampled() {
        let inst = desk_instance();
        let rho = inst.constants.weak_convexity;
        let mut rng = RngStream::new(31, 0, Purpose::Probe).rng();
        for _ in 0..300 {
            let x = inst.constraint.sample(&mut rng);
            let y = inst.constraint.sample(&mut rng);
            let g = subgradient_global(&inst, x.view()).unwrap();
            let fx = eval_global(&inst, x.view()).unwrap();
            let fy = eval_global(&inst, y.view()).unwrap();
            let dyx = &y - &x;
            assert!(
                fy >= fx + g.dot(&dyx) - 0.5 * rho * dyx.dot(&dyx) - 1e-10,
                "subgradient inequality violated"
            );
        }
    }

    #[test]
    fn quadratic_constants_and_minimizer() {
        let inst = gen_quadratic_test(6, 4, RngStream::new(7, 0, Purpose::Instance)).unwrap();
        assert!(
            inst.constants.weak_convexity <= 1e-9,
            "convex instance should have near-zero rho, got {}",
            inst.constants.weak_convexity
        );
        let centers = array![[1.0, 0.0], [0.0, 1.0]];
        let inst2 = quadratic_with_centers(
            centers,
            ConstraintSet::Box {
                lo: -2.0,
                hi: 2.0,
                dimension: 2,
            },
        )
        .unwrap();
        let min = inst2.quadratic_minimizer().unwrap();
        assert!((min[0] - 0.5).abs() < 1e-15 && (min[1] - 0.5).abs() < 1e-15);
        // identical centers: minimizer is that center
        let c = array![[0.3, -0.4], [0.3, -0.4]];
        let inst3 = quadratic_with_centers(
            c,
            ConstraintSet::UnitBall { dimension: 2 },
        )
        .unwrap();
        let min3 = inst3.quadratic_minimizer().unwrap();
        assert!((min3[0] - 0.3).abs() < 1e-15 && (min3[1] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn lipschitz_spot_check() {
        let inst = desk_instance();
        let lip = inst.constants.lipschitz;
        let mut rng = RngStream::new(37, 0, Purpose::Probe).rng();
        for _ in 0..500 {
            let x = inst.constraint.sample(&mut rng);
            let y = inst.constraint.sample(&mut rng);
            let d = (&x - &y).dot(&(&x - &y)).sqrt();
            if d < 1e-9 {
                continue;
            }
            for i in 0..inst.n_agents {
                let fx = eval_local(&inst, i, x.view()).unwrap();
                let fy = eval_local(&inst, i, y.view()).unwrap();
                assert!((fx - fy).abs() <= lip * d + 1e-10);
            }
        }
    }

    #[test]
    fn persistence_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("instance.bin");
        let inst = gen_phase_retrieval(
            6,
            3,
            5,
            RngStream::new(99, 0, Purpose::Instance),
            SignalSource::Random,
        )
        .unwrap();
        save_instance(&inst, &path).unwrap();
        let loaded = load_instance(&path).unwrap();
        assert_eq!(loaded.n_agents, 3);
        assert_eq!(loaded.dimension, 6);
        assert_eq!(loaded.constants, inst.constants);
        let mut rng = RngStream::new(100, 0, Purpose::Probe).rng();
        let theta = sample_unit_ball(&mut rng, 6);
        for i in 0..3 {
            assert_eq!(
                eval_local(&inst, i, theta.view()).unwrap(),
                eval_local(&loaded, i, theta.view()).unwrap()
            );
        }
        let q = gen_quadratic_test(3, 2, RngStream::new(5, 0, Purpose::Instance)).unwrap();
        let qpath = dir.path().join("quad.bin");
        save_instance(&q, &qpath).unwrap();
        let ql = load_instance(&qpath).unwrap();
        assert_eq!(ql.quadratic_minimizer(), q.quadratic_minimizer());
    }
}
