//! Communication topology: doubly stochastic mixing matrices and
//! time-varying schedules.

use crate::error::{HtoptError, Result};
use ndarray::{Array1, Array2};

/// Absolute tolerance for row/column stochasticity checks. Built-in matrices
/// are assembled from exact rationals, so only rounding noise is present.
pub const STOCHASTICITY_TOL: f64 = 1e-12;

/// One round's weighted adjacency matrix. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    weights: Array2<f64>,
}

/// Outcome of a structural validation. Violations are report content, not
/// errors: a failing matrix is still a matrix.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn note(&mut self, msg: String) {
        self.violations.push(msg);
    }
}

impl MixingMatrix {
    /// Wrap a square nonnegative weight matrix. Structural requirements
    /// (squareness, nonnegativity, finiteness) are enforced here; the
    /// stochasticity conditions are checked by [`validate_mixing`].
    pub fn from_weights(weights: Array2<f64>) -> Result<Self> {
        let (r, c) = weights.dim();
        if r != c || r == 0 {
            return Err(HtoptError::InvalidTopology(format!(
                "weight matrix must be square and nonempty, got {r}x{c}"
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(HtoptError::InvalidTopology(
                "weights must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { weights })
    }

    pub fn n_agents(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    /// Support graph: `support[i][j]` iff agent i listens to agent j.
    pub fn support(&self) -> Vec<Vec<bool>> {
        let n = self.n_agents();
        (0..n)
            .map(|i| (0..n).map(|j| self.weights[[i, j]] > 0.0).collect())
            .collect()
    }
}

/// Ring of `n_agents` nodes: each node averages itself and its two immediate
/// neighbours with weight 1/3.
pub fn ring_mixing(n_agents: usize) -> Result<MixingMatrix> {
    if n_agents < 3 {
        return Err(HtoptError::InvalidTopology(format!(
            "ring topology needs at least 3 agents, got {n_agents}"
        )));
    }
    let mut w = Array2::zeros((n_agents, n_agents));
    for i in 0..n_agents {
        let prev = (i + n_agents - 1) % n_agents;
        let next = (i + 1) % n_agents;
        w[[i, prev]] += 1.0 / 3.0;
        w[[i, i]] += 1.0 / 3.0;
        w[[i, next]] += 1.0 / 3.0;
    }
    MixingMatrix::from_weights(w)
}

/// Complete graph with uniform weights 1/N.
pub fn complete_mixing(n_agents: usize) -> Result<MixingMatrix> {
    if n_agents == 0 {
        return Err(HtoptError::InvalidTopology("need at least one agent".into()));
    }
    MixingMatrix::from_weights(Array2::from_elem(
        (n_agents, n_agents),
        1.0 / n_agents as f64,
    ))
}

/// Parse a custom weight matrix: first line N, then N rows of N
/// space-separated decimals.
pub fn parse_weights_text(text: &str) -> Result<MixingMatrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let n: usize = lines
        .next()
        .ok_or_else(|| HtoptError::Format("empty weights file".into()))?
        .trim()
        .parse()
        .map_err(|e| HtoptError::Format(format!("bad agent count: {e}")))?;
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        let line = lines
            .next()
            .ok_or_else(|| HtoptError::Format(format!("missing row {i}")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| HtoptError::Format(format!("row {i}: {e}")))?;
        if vals.len() != n {
            return Err(HtoptError::Format(format!(
                "row {i} has {} entries, expected {n}",
                vals.len()
            )));
        }
        for (j, v) in vals.into_iter().enumerate() {
            w[[i, j]] = v;
        }
    }
    MixingMatrix::from_weights(w)
}

/// Check row sums, column sums, the weight floor eta, and self-loops.
pub fn validate_mixing(m: &MixingMatrix, eta: f64, tol: f64) -> Result<ValidationReport> {
    if tol <= 0.0 {
        return Err(HtoptError::Parameter("tolerance must be positive".into()));
    }
    let n = m.n_agents();
    let w = m.weights();
    let mut report = ValidationReport::default();
    for i in 0..n {
        let rs: f64 = w.row(i).sum();
        if (rs - 1.0).abs() > tol {
            report.note(format!("row-stochasticity: row {i} sums to {rs}"));
        }
    }
    for j in 0..n {
        let cs: f64 = w.column(j).sum();
        if (cs - 1.0).abs() > tol {
            report.note(format!("column-stochasticity: column {j} sums to {cs}"));
        }
    }
    for i in 0..n {
        for j in 0..n {
            let a = w[[i, j]];
            if a > 0.0 && a < eta {
                report.note(format!(
                    "weight floor: a[{i},{j}] = {a} is positive but below eta = {eta}"
                ));
            }
        }
    }
    for i in 0..n {
        if w[[i, i]] <= 0.0 {
            report.note(format!("self-loop: diagonal entry {i} is not positive"));
        }
    }
    Ok(report)
}

/// Apply one round of mixing: row i of the output is sum_j a_ij * states[j].
pub fn mix(m: &MixingMatrix, states: &Array2<f64>) -> Result<Array2<f64>> {
    if states.nrows() != m.n_agents() {
        return Err(HtoptError::Shape(format!(
            "states have {} rows, matrix expects {}",
            states.nrows(),
            m.n_agents()
        )));
    }
    Ok(m.weights().dot(states))
}

/// Second-largest singular value of the weight matrix, computed by power
/// iteration on `M - (1/N) 1 1^T`. Governs the geometric consensus decay.
///
/// Returns 1.0 for non-mixing matrices (identity); callers treat any value
/// >= 1 as "no contraction".
pub fn spectral_gap(m: &MixingMatrix) -> Result<f64> {
    let report = validate_mixing(m, 0.0, STOCHASTICITY_TOL)?;
    let stochastic_ok = report
        .violations
        .iter()
        .all(|v| !v.starts_with("row-stochasticity") && !v.starts_with("column-stochasticity"));
    if !stochastic_ok {
        return Err(HtoptError::Precondition(format!(
            "spectral_gap requires a doubly stochastic matrix: {:?}",
            report.violations
        )));
    }
    let n = m.n_agents();
    if n == 1 {
        return Ok(0.0);
    }
    let w = m.weights();
    // B v = A v - mean(v) * 1; sigma_max(B) equals sigma_2(A).
    let apply_b = |v: &Array1<f64>| -> Array1<f64> {
        let av = w.dot(v);
        let mean = v.sum() / n as f64;
        av - mean
    };
    let apply_bt = |v: &Array1<f64>| -> Array1<f64> {
        let atv = w.t().dot(v);
        let mean = v.sum() / n as f64;
        atv - mean
    };
    // Deterministic start with zero mean and a component on every mode.
    let mut v: Array1<f64> =
        Array1::from_iter((0..n).map(|i| ((i + 1) as f64 * 0.7391).sin()));
    let mean = v.sum() / n as f64;
    v -= mean;
    let norm = v.dot(&v).sqrt();
    if norm == 0.0 {
        return Ok(0.0);
    }
    v /= norm;
    let mut sigma2 = 0.0_f64;
    for _ in 0..2000 {
        let bv = apply_b(&v);
        let mut btbv = apply_bt(&bv);
        let mean = btbv.sum() / n as f64;
        btbv -= mean; // keep iterates orthogonal to the consensus direction
        let norm = btbv.dot(&btbv).sqrt();
        if norm < 1e-300 {
            return Ok(0.0);
        }
        btbv /= norm;
        let new_sigma2 = {
            let bv = apply_b(&btbv);
            bv.dot(&bv)
        };
        let done = (new_sigma2 - sigma2).abs() <= 1e-14 * new_sigma2.max(1.0);
        sigma2 = new_sigma2;
        v = btbv;
        if done {
            break;
        }
    }
    Ok(sigma2.sqrt().min(1.0))
}

/// Time-indexed schedule of mixing matrices.
#[derive(Debug, Clone)]
pub enum MixingSchedule {
    /// The same matrix every round.
    Static(MixingMatrix),
    /// Cycles through the given matrices; `period_b` is the declared bound
    /// on the intercommunication interval.
    Cyclic {
        matrices: Vec<MixingMatrix>,
        period_b: usize,
    },
}

impl MixingSchedule {
    pub fn matrix_at(&self, round: usize) -> &MixingMatrix {
        match self {
            MixingSchedule::Static(m) => m,
            MixingSchedule::Cyclic { matrices, .. } => &matrices[round % matrices.len()],
        }
    }

    pub fn period_b(&self) -> usize {
        match self {
            MixingSchedule::Static(_) => 1,
            MixingSchedule::Cyclic { period_b, .. } => *period_b,
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self, MixingSchedule::Static(_))
    }

    pub fn n_agents(&self) -> usize {
        self.matrix_at(0).n_agents()
    }

    /// Conservative contraction factor: the maximum spectral gap over one
    /// period of the schedule.
    pub fn contraction_lambda(&self) -> Result<f64> {
        match self {
            MixingSchedule::Static(m) => spectral_gap(m),
            MixingSchedule::Cyclic { matrices, .. } => {
                let mut lam = 0.0_f64;
                for m in matrices {
                    lam = lam.max(spectral_gap(m)?);
                }
                Ok(lam)
            }
        }
    }
}

/// Boolean transitive closure (reachability) of a directed support graph.
fn strongly_connected(adj: &[Vec<bool>]) -> bool {
    let n = adj.len();
    let mut reach = adj.to_vec();
    for i in 0..n {
        reach[i][i] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    (0..n).all(|i| (0..n).all(|j| reach[i][j]))
}

/// Verify that every window of `period_b` consecutive rounds within the
/// horizon has a strongly connected union graph.
pub fn check_b_connectivity(schedule: &MixingSchedule, horizon: usize) -> Result<ValidationReport> {
    let b = schedule.period_b();
    if horizon < b {
        return Err(HtoptError::Precondition(format!(
            "horizon {horizon} shorter than the intercommunication bound {b}"
        )));
    }
    let n = schedule.n_agents();
    let mut report = ValidationReport::default();
    // Window contents repeat with the schedule's period; scanning one period
    // of start offsets covers every window in the horizon.
    let period = match schedule {
        MixingSchedule::Static(_) => 1,
        MixingSchedule::Cyclic { matrices, .. } => matrices.len(),
    };
    let scan_to = (horizon - b).min(period - 1);
    for start in 0..=scan_to {
        let mut union = vec![vec![false; n]; n];
        for k in start..start + b {
            let sup = schedule.matrix_at(k).support();
            for i in 0..n {
                for j in 0..n {
                    union[i][j] |= sup[i][j];
                }
            }
        }
        if !strongly_connected(&union) {
            report.note(format!(
                "window [{start}, {}) has a disconnected union graph",
                start + b
            ));
        }
    }
    Ok(report)
}
