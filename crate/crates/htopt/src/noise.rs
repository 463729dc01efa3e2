//! Heavy-tailed gradient-noise generation and tail diagnostics.
//!
//! The supported families all produce zero-median symmetric vectors whose
//! tail index equals the configured `tail_index`; for tail indices below 2
//! the component distribution has infinite variance. The per-family internal
//! scale is calibrated from `scale` (the gamma of the moment bound) with a
//! 0.9 headroom factor; see [`NoiseSpec::new`].

use crate::error::{HtoptError, Result};
use crate::rng::{Purpose, RngStream};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use std::f64::consts::PI;

pub const DEFAULT_HILL_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    AlphaStable,
    SymmetricPareto,
    Gaussian,
    None,
}

/// Noise configuration plus the calibrated internal component scale.
#[derive(Debug, Clone)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub tail_index: f64,
    pub scale: f64,
    pub dimension: usize,
    component_scale: f64,
}

impl NoiseSpec {
    /// Validate parameters and calibrate the internal scale.
    ///
    /// Calibration targets the first moment of the vector norm,
    /// E||z|| = 0.9 * gamma (the alpha-th moment itself is infinite for an
    /// exact-tail family): gaussian uses the literal second-moment rule
    /// sigma = 0.9 gamma / sqrt(d), pareto the analytic rule
    /// s = 0.9 gamma (alpha-1) / (alpha sqrt(d)), and the alpha-stable family
    /// is Monte-Carlo calibrated with a fixed internal stream.
    pub fn new(family: NoiseFamily, tail_index: f64, scale: f64, dimension: usize) -> Result<Self> {
        if family == NoiseFamily::None {
            return Ok(Self {
                family,
                tail_index: 2.0,
                scale: 0.0,
                dimension,
                component_scale: 0.0,
            });
        }
        if tail_index <= 1.0 {
            return Err(HtoptError::UnsupportedRegime(format!(
                "tail index {tail_index} <= 1: the noise mean would not exist"
            )));
        }
        if tail_index > 2.0 {
            return Err(HtoptError::Parameter(format!(
                "tail index {tail_index} outside (1, 2]"
            )));
        }
        if scale <= 0.0 {
            return Err(HtoptError::Parameter("scale must be positive".into()));
        }
        if dimension == 0 {
            return Err(HtoptError::Parameter("dimension must be positive".into()));
        }
        let tail_index = if family == NoiseFamily::Gaussian {
            2.0
        } else {
            tail_index
        };
        let d = dimension as f64;
        let target = 0.9 * scale;
        let component_scale = match family {
            NoiseFamily::Gaussian => target / d.sqrt(),
            NoiseFamily::SymmetricPareto => target * (tail_index - 1.0) / (tail_index * d.sqrt()),
            NoiseFamily::AlphaStable => {
                let mut rng = RngStream::new(0xC0FF_EE00, 0, Purpose::Calibration).rng();
                let trials = 50_000usize;
                let mut acc = 0.0;
                for _ in 0..trials {
                    let mut sq = 0.0;
                    for _ in 0..dimension {
                        let x = sample_stable_standard(&mut rng, tail_index);
                        sq += x * x;
                    }
                    acc += sq.sqrt();
                }
                target / (acc / trials as f64)
            }
            NoiseFamily::None => 0.0,
        };
        Ok(Self {
            family,
            tail_index,
            scale,
            dimension,
            component_scale,
        })
    }

    pub fn none(dimension: usize) -> Self {
        Self::new(NoiseFamily::None, 2.0, 1.0, dimension).expect("none spec is always valid")
    }

    pub fn component_scale(&self) -> f64 {
        self.component_scale
    }
}

/// One standard symmetric alpha-stable draw via the Chambers–Mallows–Stuck
/// transform (skew 0, unit scale). Degenerates to N(0, 2) at alpha = 2.
fn sample_stable_standard(rng: &mut ChaCha8Rng, alpha: f64) -> f64 {
    if (alpha - 2.0).abs() < 1e-12 {
        let z: f64 = StandardNormal.sample(rng);
        return std::f64::consts::SQRT_2 * z;
    }
    let u: f64 = rng.gen_range(-PI / 2.0..PI / 2.0);
    let w: f64 = Exp1.sample(rng);
    let num = (alpha * u).sin();
    let den = u.cos().powf(1.0 / alpha);
    let tail = ((u - alpha * u).cos() / w).powf((1.0 - alpha) / alpha);
    num / den * tail
}

/// One standard symmetric Pareto draw: random sign times U^(-1/alpha),
/// density exponent -(alpha + 1) on magnitudes above 1.
fn sample_pareto_standard(rng: &mut ChaCha8Rng, alpha: f64) -> f64 {
    let u: f64 = loop {
        let u = rng.gen::<f64>();
        if u > 0.0 {
            break u;
        }
    };
    let mag = u.powf(-1.0 / alpha);
    if rng.gen::<bool>() {
        mag
    } else {
        -mag
    }
}

/// Draw one noise vector of `spec.dimension` components.
pub fn sample_noise(spec: &NoiseSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = spec.dimension;
    let s = spec.component_scale;
    match spec.family {
        NoiseFamily::None => vec![0.0; d],
        NoiseFamily::Gaussian => (0..d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                s * z
            })
            .collect(),
        NoiseFamily::SymmetricPareto => (0..d)
            .map(|_| s * sample_pareto_standard(rng, spec.tail_index))
            .collect(),
        NoiseFamily::AlphaStable => (0..d)
            .map(|_| s * sample_stable_standard(rng, spec.tail_index))
            .collect(),
    }
}

/// Monte-Carlo check of the alpha-th moment bound E||z||^alpha <= gamma^alpha.
#[derive(Debug, Clone)]
pub struct MomentReport {
    pub empirical_alpha_moment: f64,
    pub bound: f64,
    pub standard_error: f64,
    pub pass: bool,
}

pub fn verify_moment_bound(
    spec: &NoiseSpec,
    n_samples: usize,
    stream: RngStream,
) -> Result<MomentReport> {
    if n_samples < 10_000 {
        return Err(HtoptError::Precondition(format!(
            "need at least 10^4 samples, got {n_samples}"
        )));
    }
    let mut rng = stream.rng();
    let alpha = spec.tail_index;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..n_samples {
        let z = sample_noise(spec, &mut rng);
        let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        let v = norm.powf(alpha);
        sum += v;
        sumsq += v * v;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(0.0);
    let se = (var / n).sqrt();
    let bound = spec.scale.powf(alpha);
    let pass = mean <= bound * (1.0 + 3.0 * se / bound);
    Ok(MomentReport {
        empirical_alpha_moment: mean,
        bound,
        standard_error: se,
        pass,
    })
}

/// Hill estimator of the tail index from the top order statistics of the
/// absolute values: k / sum_{i=1..k} ln(|x|_(i) / |x|_(k+1)).
pub fn hill_tail_index(samples: &[f64], top_fraction: f64) -> Result<f64> {
    if samples.len() < 100 {
        return Err(HtoptError::Precondition(format!(
            "need at least 100 samples, got {}",
            samples.len()
        )));
    }
    if !(top_fraction > 0.0 && top_fraction <= 0.5) {
        return Err(HtoptError::Parameter(format!(
            "top_fraction {top_fraction} outside (0, 0.5]"
        )));
    }
    let mut mags: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let k = ((top_fraction * samples.len() as f64).ceil() as usize).max(1);
    let pivot = mags[k];
    if pivot <= 0.0 {
        return Err(HtoptError::DegenerateSample(
            "reference order statistic is zero".into(),
        ));
    }
    let log_sum: f64 = mags[..k].iter().map(|m| (m / pivot).ln()).sum();
    if log_sum <= 0.0 {
        return Err(HtoptError::DegenerateSample(
            "top order statistics are all equal".into(),
        ));
    }
    Ok(k as f64 / log_sum)
}

/// Log-log empirical complementary CDF over the sorted unique magnitudes.
/// Rows are (log10 magnitude, log10 P(|X| >= magnitude)); zero magnitudes
/// are dropped (they have no finite log).
pub fn ccdf_loglog_table(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(HtoptError::Precondition("empty sample set".into()));
    }
    let mut mags: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = mags.len() as f64;
    let mut rows = Vec::new();
    let mut i = 0;
    while i < mags.len() {
        let m = mags[i];
        let mut j = i;
        while j < mags.len() && mags[j] == m {
            j += 1;
        }
        // count of samples >= m is everything from i onward
        let ccdf = (mags.len() - i) as f64 / n;
        if m > 0.0 {
            rows.push((m.log10(), ccdf.log10()));
        }
        i = j;
    }
    Ok(rows)
}

/// Least-squares slope of a log-log CCDF table restricted to magnitudes
/// within `decades` of the largest one. Heavy tails show up as a slope
/// near -alpha.
pub fn ccdf_tail_slope(table: &[(f64, f64)], decades: f64) -> Result<f64> {
    let max_lm = table
        .iter()
        .map(|r| r.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let pts: Vec<&(f64, f64)> = table.iter().filter(|r| r.0 >= max_lm - decades).collect();
    if pts.len() < 2 {
        return Err(HtoptError::DegenerateSample(
            "fewer than two table rows in the requested decade window".into(),
        ));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|r| r.0).sum();
    let sy: f64 = pts.iter().map(|r| r.1).sum();
    let sxx: f64 = pts.iter().map(|r| r.0 * r.0).sum();
    let sxy: f64 = pts.iter().map(|r| r.0 * r.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(HtoptError::DegenerateSample(
            "all magnitudes equal in the decade window".into(),
        ));
    }
    Ok((n * sxy - sx * sy) / denom)
}
