//! Moreau envelope, proximal mapping, and the stationarity metric.
//!
//! The envelope gradient norm is the convergence measure reported by the
//! experiment harness: every prox evaluation is approximate, so each metric
//! carries the inner-solver certificate alongside.

use crate::error::{HtoptError, Result};
use crate::objectives::{eval_global, project, subgradient_global, ConstraintSet, ObjectiveInstance};
use ndarray::{Array1, ArrayView1};

/// Probe step for the projected-gradient-mapping certificate.
pub const CERT_PROBE_STEP: f64 = 1e-3;

/// Anything the inner solver can minimize: a weakly convex global objective
/// with a selected subgradient.
pub trait Objective {
    fn dimension(&self) -> usize;
    fn value(&self, x: ArrayView1<f64>) -> f64;
    fn subgradient(&self, x: ArrayView1<f64>) -> Array1<f64>;
    /// Estimated weak-convexity modulus rho_hat.
    fn weak_convexity(&self) -> f64;
}

impl Objective for ObjectiveInstance {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn value(&self, x: ArrayView1<f64>) -> f64 {
        eval_global(self, x).expect("dimension checked by caller")
    }

    fn subgradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        subgradient_global(self, x).expect("dimension checked by caller")
    }

    fn weak_convexity(&self) -> f64 {
        self.constants.weak_convexity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerSolverKind {
    /// Projected subgradient with the strong-convexity stepsize
    /// 2/(sigma (t+2)) and tail averaging over the last half.
    ProjectedSubgradient,
}

#[derive(Debug, Clone, Copy)]
pub struct MoreauConfig {
    pub mu: f64,
    pub inner_max_iters: usize,
    pub inner_tol: f64,
    pub solver: InnerSolverKind,
}

impl MoreauConfig {
    pub fn new(mu: f64, inner_max_iters: usize, inner_tol: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(HtoptError::Parameter(format!("mu must be positive, got {mu}")));
        }
        if inner_max_iters == 0 || inner_tol <= 0.0 {
            return Err(HtoptError::Parameter(
                "inner solver needs a positive budget and tolerance".into(),
            ));
        }
        Ok(Self {
            mu,
            inner_max_iters,
            inner_tol,
            solver: InnerSolverKind::ProjectedSubgradient,
        })
    }

    /// Default mu = 1/(4 (rho_hat + 1)), strictly inside the admissible
    /// interval mu < 1/(2 (rho + 1)) with a 2x margin.
    pub fn auto(rho_hat: f64) -> Self {
        Self {
            mu: 1.0 / (4.0 * (rho_hat + 1.0)),
            inner_max_iters: 2000,
            inner_tol: 1e-5,
            solver: InnerSolverKind::ProjectedSubgradient,
        }
    }

    /// The inner problem is (1/mu - rho)-strongly convex; reject configs
    /// where that modulus is not positive or the mu * rho margin is thin.
    pub fn validate_for(&self, rho_hat: f64) -> Result<()> {
        if self.mu * rho_hat >= 0.5 {
            return Err(HtoptError::Parameter(format!(
                "mu * rho_hat = {} leaves less than the required 2x margin below 1",
                self.mu * rho_hat
            )));
        }
        Ok(())
    }
}

/// Approximate proximal point with its optimality certificate.
#[derive(Debug, Clone)]
pub struct ProxResult {
    pub x_hat: Array1<f64>,
    /// Projected-gradient-mapping residual at the probe step.
    pub certificate: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn gradient_mapping_residual<O: Objective>(
    obj: &O,
    omega: &ConstraintSet,
    base: ArrayView1<f64>,
    y: &Array1<f64>,
    mu: f64,
) -> f64 {
    let mut g = obj.subgradient(y.view());
    for ((gi, yi), xi) in g.iter_mut().zip(y.iter()).zip(base.iter()) {
        *gi += (yi - xi) / mu;
    }
    let stepped = y - &(g * CERT_PROBE_STEP);
    let projected = project(omega, stepped.view());
    let diff = y - &projected;
    diff.dot(&diff).sqrt() / CERT_PROBE_STEP
}

/// Approximately minimize psi(y) = f(y) + ||y - x||^2 / (2 mu) over omega.
///
/// psi is (1/mu - rho)-strongly convex; the solver is projected subgradient
/// with stepsize 2/(sigma (t+2)) and tail averaging over the latter half of
/// the iterates, checked for convergence in blocks so smooth inner problems
/// can stop early.
pub fn prox<O: Objective>(
    x: ArrayView1<f64>,
    cfg: &MoreauConfig,
    obj: &O,
    omega: &ConstraintSet,
) -> Result<ProxResult> {
    if x.len() != obj.dimension() {
        return Err(HtoptError::Shape(format!(
            "prox base point has dimension {}, objective expects {}",
            x.len(),
            obj.dimension()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(HtoptError::Parameter("prox base point must be finite".into()));
    }
    let rho = obj.weak_convexity();
    cfg.validate_for(rho)?;
    let sigma = 1.0 / cfg.mu - rho;
    if sigma <= 0.0 {
        return Err(HtoptError::Parameter(format!(
            "inner problem not strongly convex: 1/mu - rho = {sigma}"
        )));
    }

    let block = 250usize.min(cfg.inner_max_iters.max(1));
    let mut y = project(omega, x);
    let mut block_sums: Vec<Array1<f64>> = Vec::new();
    let mut current = Array1::<f64>::zeros(x.len());
    let mut in_block = 0usize;
    let mut iterations = 0usize;

    let tail_average = |block_sums: &[Array1<f64>], block: usize| -> Option<Array1<f64>> {
        let b = block_sums.len();
        if b == 0 {
            return None;
        }
        let from = b / 2;
        let mut acc = Array1::<f64>::zeros(block_sums[0].len());
        for s in &block_sums[from..] {
            acc += s;
        }
        Some(acc / ((b - from) * block) as f64)
    };

    let mut result: Option<(Array1<f64>, f64)> = None;
    for t in 0..cfg.inner_max_iters {
        let mut g = obj.subgradient(y.view());
        for ((gi, yi), xi) in g.iter_mut().zip(y.iter()).zip(x.iter()) {
            *gi += (yi - xi) / cfg.mu;
        }
        let eta = 2.0 / (sigma * (t + 2) as f64);
        let stepped = &y - &(g * eta);
        y = project(omega, stepped.view());
        current += &y;
        in_block += 1;
        iterations = t + 1;
        if in_block == block {
            block_sums.push(std::mem::replace(&mut current, Array1::zeros(x.len())));
            in_block = 0;
            if let Some(avg) = tail_average(&block_sums, block) {
                let cert = gradient_mapping_residual(obj, omega, x, &avg, cfg.mu);
                let done = cert <= cfg.inner_tol;
                result = Some((avg, cert));
                if done {
                    break;
                }
            }
        }
    }
    let (x_hat, certificate) = match result {
        Some(r) => r,
        None => {
            // budget smaller than one block: fall back to the last iterate
            let cert = gradient_mapping_residual(obj, omega, x, &y, cfg.mu);
            (y, cert)
        }
    };
    Ok(ProxResult {
        converged: certificate <= cfg.inner_tol,
        x_hat,
        certificate,
        iterations,
    })
}

/// Envelope value phi_mu(x) = f(x_hat) + ||x_hat - x||^2 / (2 mu).
pub fn envelope_value<O: Objective>(
    x: ArrayView1<f64>,
    cfg: &MoreauConfig,
    obj: &O,
    omega: &ConstraintSet,
) -> Result<f64> {
    let p = prox(x, cfg, obj, omega)?;
    Ok(envelope_value_from(&p, x, cfg.mu, obj))
}

pub fn envelope_value_from<O: Objective>(
    p: &ProxResult,
    x: ArrayView1<f64>,
    mu: f64,
    obj: &O,
) -> f64 {
    let d = &p.x_hat - &x;
    obj.value(p.x_hat.view()) + d.dot(&d) / (2.0 * mu)
}

/// Envelope gradient (x - x_hat) / mu.
pub fn envelope_gradient<O: Objective>(
    x: ArrayView1<f64>,
    cfg: &MoreauConfig,
    obj: &O,
    omega: &ConstraintSet,
) -> Result<Array1<f64>> {
    let p = prox(x, cfg, obj, omega)?;
    Ok(envelope_gradient_from(&p, x, cfg.mu))
}

pub fn envelope_gradient_from(p: &ProxResult, x: ArrayView1<f64>, mu: f64) -> Array1<f64> {
    (&x.to_owned() - &p.x_hat) / mu
}

/// Near-stationarity certificate: both quantities equal (1/mu)||x - x_hat||.
#[derive(Debug, Clone)]
pub struct StationarityReport {
    pub grad_norm: f64,
    pub dist_bound: f64,
    pub certificate: f64,
    pub converged: bool,
}

pub fn stationarity<O: Objective>(
    x: ArrayView1<f64>,
    cfg: &MoreauConfig,
    obj: &O,
    omega: &ConstraintSet,
) -> Result<StationarityReport> {
    let p = prox(x, cfg, obj, omega)?;
    let g = envelope_gradient_from(&p, x, cfg.mu);
    let gn = g.dot(&g).sqrt();
    let d = &x.to_owned() - &p.x_hat;
    Ok(StationarityReport {
        grad_norm: gn,
        dist_bound: d.dot(&d).sqrt() / cfg.mu,
        certificate: p.certificate,
        converged: p.converged,
    })
}

/// Lemma-2-style contraction measurement for the proximal mapping.
#[derive(Debug, Clone)]
pub struct ContractionReport {
    pub distance_in: f64,
    pub distance_out: f64,
    pub measured_ratio: f64,
    pub lipschitz_bound: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Verify ||prox(x1) - prox(x2)|| <= ||x1 - x2|| / (1 - mu rho) + 2 slack,
/// where slack = (cert1 + cert2) / sigma approximates the solver-induced
/// displacement of each proximal point.
pub fn prox_contraction_check<O: Objective>(
    x1: ArrayView1<f64>,
    x2: ArrayView1<f64>,
    cfg: &MoreauConfig,
    obj: &O,
    omega: &ConstraintSet,
) -> Result<ContractionReport> {
    let rho = obj.weak_convexity();
    let sigma = 1.0 / cfg.mu - rho;
    let p1 = prox(x1, cfg, obj, omega)?;
    let p2 = prox(x2, cfg, obj, omega)?;
    let din = (&x1.to_owned() - &x2.to_owned()).mapv(|v| v * v).sum().sqrt();
    let dout = (&p1.x_hat - &p2.x_hat).mapv(|v| v * v).sum().sqrt();
    let lipschitz_bound = 1.0 / (1.0 - cfg.mu * rho);
    let slack = (p1.certificate + p2.certificate) / sigma;
    let pass = dout <= lipschitz_bound * din + 2.0 * slack;
    Ok(ContractionReport {
        distance_in: din,
        distance_out: dout,
        measured_ratio: if din > 0.0 { dout / din } else { 0.0 },
        lipschitz_bound,
        slack,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{
        gen_phase_retrieval, quadratic_with_centers, SignalSource,
    };
    use crate::rng::{sample_unit_ball, Purpose, RngStream};
    use ndarray::{array, Array2};

    /// f(y) = 0.5 ||y||^2 as an instance (all centers at the origin).
    fn half_norm_sq(n: usize) -> ObjectiveInstance {
        quadratic_with_centers(
            Array2::zeros((1, n)),
            ConstraintSet::Box {
                lo: -100.0,
                hi: 100.0,
                dimension: n,
            },
        )
        .unwrap()
    }

    struct AbsValue;
    impl Objective for AbsValue {
        fn dimension(&self) -> usize {
            1
        }
        fn value(&self, x: ArrayView1<f64>) -> f64 {
            x[0].abs()
        }
        fn subgradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
            array![x[0].signum() * if x[0] == 0.0 { 0.0 } else { 1.0 }]
        }
        fn weak_convexity(&self) -> f64 {
            0.0
        }
    }

    struct Constant(f64);
    impl Objective for Constant {
        fn dimension(&self) -> usize {
            2
        }
        fn value(&self, _x: ArrayView1<f64>) -> f64 {
            self.0
        }
        fn subgradient(&self, _x: ArrayView1<f64>) -> Array1<f64> {
            Array1::zeros(2)
        }
        fn weak_convexity(&self) -> f64 {
            0.0
        }
    }

    /// Smooth weakly convex 2-D test function: pseudo-Huber plus a cosine
    /// ripple (Hessian of the ripple bounded by 0.3).
    struct SmoothWc;
    impl Objective for SmoothWc {
        fn dimension(&self) -> usize {
            2
        }
        fn value(&self, x: ArrayView1<f64>) -> f64 {
            let d0 = x[0] - 0.3;
            let d1 = x[1] + 0.2;
            (1.0 + d0 * d0 + d1 * d1).sqrt() + 0.3 * x[0].cos()
        }
        fn subgradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
            let d0 = x[0] - 0.3;
            let d1 = x[1] + 0.2;
            let r = (1.0 + d0 * d0 + d1 * d1).sqrt();
            array![d0 / r - 0.3 * x[0].sin(), d1 / r]
        }
        fn weak_convexity(&self) -> f64 {
            0.45
        }
    }

    fn big_box(n: usize) -> ConstraintSet {
        ConstraintSet::Box {
            lo: -100.0,
            hi: 100.0,
            dimension: n,
        }
    }

    #[test]
    fn quadratic_prox_closed_form() {
        let inst = half_norm_sq(4);
        let cfg = MoreauConfig::new(0.25, 2000, 1e-7).unwrap();
        let mut rng = RngStream::new(3, 0, Purpose::Probe).rng();
        for _ in 0..10 {
            let x = sample_unit_ball(&mut rng, 4);
            let p = prox(x.view(), &cfg, &inst, &inst.constraint).unwrap();
            let expect = &x / (1.0 + cfg.mu);
            let err = (&p.x_hat - &expect).mapv(|v| v * v).sum().sqrt();
            assert!(err <= 1e-6, "prox error {err}");
            let g = envelope_gradient_from(&p, x.view(), cfg.mu);
            let gerr = (&g - &(&x / (1.0 + cfg.mu)))
                .mapv(|v| v * v)
                .sum()
                .sqrt();
            assert!(gerr <= 1e-6, "gradient identity error {gerr}");
        }
        // x = 0: envelope value 0
        let v = envelope_value(Array1::zeros(4).view(), &cfg, &inst, &inst.constraint).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn abs_value_soft_thresholding() {
        let cfg = MoreauConfig::new(0.3, 4000, 1e-7).unwrap();
        let omega = ConstraintSet::Box {
            lo: -100.0,
            hi: 100.0,
            dimension: 1,
        };
        for x0 in [1.5_f64, -0.9, 0.1, -0.05, 0.0] {
            let x = array![x0];
            let p = prox(x.view(), &cfg, &AbsValue, &omega).unwrap();
            let expect = x0.signum() * (x0.abs() - cfg.mu).max(0.0);
            assert!(
                (p.x_hat[0] - expect).abs() < 1e-4,
                "soft threshold at {x0}: {} vs {expect}",
                p.x_hat[0]
            );
        }
    }

    #[test]
    fn constant_function_envelope() {
        let cfg = MoreauConfig::new(0.2, 500, 1e-6).unwrap();
        let omega = big_box(2);
        let x = array![0.7, -0.3];
        let v = envelope_value(x.view(), &cfg, &Constant(2.5), &omega).unwrap();
        assert!((v - 2.5).abs() < 1e-9, "constant envelope {v}");
        let g = envelope_gradient(x.view(), &cfg, &Constant(2.5), &omega).unwrap();
        assert!(g.dot(&g).sqrt() < 1e-6);
    }

    #[test]
    fn envelope_below_objective() {
        let inst = gen_phase_retrieval(
            8,
            3,
            9,
            RngStream::new(5, 0, Purpose::Instance),
            SignalSource::Random,
        )
        .unwrap();
        let cfg = MoreauConfig::auto(inst.constants.weak_convexity);
        let mut rng = RngStream::new(6, 0, Purpose::Probe).rng();
        for _ in 0..20 {
            let x = inst.constraint.sample(&mut rng);
            let v = envelope_value(x.view(), &cfg, &inst, &inst.constraint).unwrap();
            let f = crate::objectives::eval_global(&inst, x.view()).unwrap();
            assert!(v <= f + 1e-9, "envelope {v} above objective {f}");
        }
    }

    #[test]
    fn finite_difference_matches_gradient_on_smooth_function() {
        let cfg = MoreauConfig::new(1.0 / (4.0 * 1.45), 3000, 1e-9).unwrap();
        let omega = big_box(2);
        let mut rng = RngStream::new(8, 0, Purpose::Probe).rng();
        for _ in 0..5 {
            let x = array![
                rand::Rng::gen_range(&mut rng, -1.0..1.0),
                rand::Rng::gen_range(&mut rng, -1.0..1.0)
            ];
            let g = envelope_gradient(x.view(), &cfg, &SmoothWc, &omega).unwrap();
            let h = 1e-4;
            for c in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += h;
                xm[c] -= h;
                let vp = envelope_value(xp.view(), &cfg, &SmoothWc, &omega).unwrap();
                let vm = envelope_value(xm.view(), &cfg, &SmoothWc, &omega).unwrap();
                let fd = (vp - vm) / (2.0 * h);
                let rel = (fd - g[c]).abs() / g[c].abs().max(1e-9);
                assert!(rel <= 1e-3, "coordinate {c}: fd {fd} vs grad {}", g[c]);
            }
        }
    }

    #[test]
    fn stationarity_at_minimizer_and_identity() {
        let inst = half_norm_sq(3);
        let cfg = MoreauConfig::new(0.25, 2000, 1e-6).unwrap();
        let x0 = Array1::zeros(3);
        let rep = stationarity(x0.view(), &cfg, &inst, &inst.constraint).unwrap();
        assert!(rep.grad_norm <= cfg.inner_tol / cfg.mu);
        assert_eq!(rep.grad_norm, rep.dist_bound);
        // fixed-point region: prox of an (approximate) fixed point stays put
        let p = prox(x0.view(), &cfg, &inst, &inst.constraint).unwrap();
        let p2 = prox(p.x_hat.view(), &cfg, &inst, &inst.constraint).unwrap();
        let drift = (&p2.x_hat - &p.x_hat).mapv(|v| v * v).sum().sqrt();
        assert!(drift <= 10.0 * cfg.inner_tol * cfg.mu + 1e-12);
    }

    #[test]
    fn stationarity_at_phase_retrieval_truth() {
        let inst = gen_phase_retrieval(
            10,
            3,
            10,
            RngStream::new(9, 0, Purpose::Instance),
            SignalSource::Random,
        )
        .unwrap();
        let cfg = MoreauConfig::auto(inst.constants.weak_convexity);
        let truth = inst.ground_truth().unwrap().to_owned();
        let rep = stationarity(truth.view(), &cfg, &inst, &inst.constraint).unwrap();
        assert!(
            rep.grad_norm <= 10.0 * cfg.inner_tol / cfg.mu,
            "grad norm {} at the exact signal",
            rep.grad_norm
        );
    }

    #[test]
    fn contraction_identical_points_and_convex_case() {
        let inst = half_norm_sq(3);
        let cfg = MoreauConfig::new(0.2, 1500, 1e-6).unwrap();
        let x = array![0.5, -0.25, 1.0];
        let rep =
            prox_contraction_check(x.view(), x.view(), &cfg, &inst, &inst.constraint).unwrap();
        assert_eq!(rep.measured_ratio, 0.0);
        assert!(rep.pass);
        let mut rng = RngStream::new(12, 0, Purpose::Probe).rng();
        for _ in 0..50 {
            let a = sample_unit_ball(&mut rng, 3);
            let b = sample_unit_ball(&mut rng, 3);
            let rep =
                prox_contraction_check(a.view(), b.view(), &cfg, &inst, &inst.constraint).unwrap();
            assert!(rep.pass, "convex contraction failed: {rep:?}");
            assert!(rep.measured_ratio <= 1.0 + 2.0 * rep.slack.max(1e-9) + 1e-6);
        }
    }

    #[test]
    fn contraction_on_desk_phase_retrieval_sample() {
        let inst = gen_phase_retrieval(
            49,
            7,
            21,
            RngStream::new(42, 0, Purpose::Instance),
            SignalSource::Random,
        )
        .unwrap();
        let cfg = MoreauConfig {
            inner_max_iters: 2000,
            inner_tol: 1e-4,
            ..MoreauConfig::auto(inst.constants.weak_convexity)
        };
        let mut rng = RngStream::new(13, 0, Purpose::Probe).rng();
        for _ in 0..20 {
            let a = inst.constraint.sample(&mut rng);
            let b = inst.constraint.sample(&mut rng);
            let rep =
                prox_contraction_check(a.view(), b.view(), &cfg, &inst, &inst.constraint).unwrap();
            assert!(rep.pass, "contraction report {rep:?}");
        }
    }

    #[test]
    fn inner_objective_decrease_is_monotone_in_budget() {
        let inst = gen_phase_retrieval(
            12,
            3,
            12,
            RngStream::new(21, 0, Purpose::Instance),
            SignalSource::Random,
        )
        .unwrap();
        let mut rng = RngStream::new(22, 0, Purpose::Probe).rng();
        let x = inst.constraint.sample(&mut rng);
        let mut last = f64::INFINITY;
        for iters in [250, 500, 1000, 2000, 4000] {
            let cfg = MoreauConfig {
                inner_max_iters: iters,
                inner_tol: 1e-12,
                ..MoreauConfig::auto(inst.constants.weak_convexity)
            };
            let p = prox(x.view(), &cfg, &inst, &inst.constraint).unwrap();
            let psi = envelope_value_from(&p, x.view(), cfg.mu, &inst);
            assert!(
                psi <= last + 1e-9,
                "tail-averaged inner objective rose: {psi} after {last}"
            );
            last = psi;
        }
    }

    #[test]
    fn config_validation() {
        assert!(MoreauConfig::new(-0.1, 100, 1e-5).is_err());
        assert!(MoreauConfig::new(0.2, 0, 1e-5).is_err());
        let cfg = MoreauConfig::new(0.4, 100, 1e-5).unwrap();
        assert!(cfg.validate_for(2.0).is_err());
        assert!(cfg.validate_for(1.0).is_ok());
        let auto = MoreauConfig::auto(3.0);
        assert!(auto.mu * (3.0 + 1.0) < 0.5);
        assert!(auto.validate_for(3.0).is_ok());
    }

    #[test]
    fn non_convergence_is_flagged_not_fatal() {
        let inst = gen_phase_retrieval(
            16,
            3,
            16,
            RngStream::new(31, 0, Purpose::Instance),
            SignalSource::Random,
        )
        .unwrap();
        let cfg = MoreauConfig {
            inner_max_iters: 300,
            inner_tol: 1e-12,
            ..MoreauConfig::auto(inst.constants.weak_convexity)
        };
        let mut rng = RngStream::new(32, 0, Purpose::Probe).rng();
        let x = inst.constraint.sample(&mut rng);
        let p = prox(x.view(), &cfg, &inst, &inst.constraint).unwrap();
        assert!(!p.converged);
        assert!(p.certificate > cfg.inner_tol);
        assert!(inst.constraint.contains(p.x_hat.view(), 1e-9));
    }
}
