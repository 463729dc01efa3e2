//! Gradient-noise study: samples mini-batch subgradient deviations at a
//! fixed probe point and emits the histogram, log-log CCDF, and Hill
//! estimate, plus a synthetic heavy-tailed comparison table.

use crate::error::{HtoptError, Result};
use crate::noise::{
    ccdf_loglog_table, hill_tail_index, sample_noise, NoiseFamily, NoiseSpec,
    DEFAULT_HILL_FRACTION,
};
use crate::objectives::{
    stochastic_subgradient, subgradient, ObjectiveInstance, OracleMode, OracleSample,
};
use crate::rng::{Purpose, RngStream};
use ndarray::ArrayView1;
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
pub struct NoiseStudyReport {
    pub n_draws: usize,
    pub batch_size: usize,
    pub hill_top_fraction: f64,
    pub hill_estimate: f64,
    pub max_distance: f64,
    pub median_distance: f64,
    pub files: Vec<PathBuf>,
}

/// Histogram with `bins` linear bins over [0, q99] plus an overflow bin.
fn write_histogram(path: &Path, samples: &[f64], bins: usize) -> Result<()> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let hi = sorted[((0.99 * (sorted.len() - 1) as f64) as usize).min(sorted.len() - 1)];
    let hi = if hi > 0.0 {
        hi
    } else {
        *sorted.last().unwrap_or(&1.0)
    };
    let width = hi / bins as f64;
    let mut counts = vec![0usize; bins + 1];
    for &s in samples {
        let b = if width > 0.0 {
            ((s / width) as usize).min(bins)
        } else {
            0
        };
        counts[b] += 1;
    }
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (b, c) in counts.iter().enumerate() {
        let lo = b as f64 * width;
        let hi_edge = if b == bins {
            f64::INFINITY
        } else {
            (b + 1) as f64 * width
        };
        out.push_str(&format!("{lo},{hi_edge},{c}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_ccdf(path: &Path, table: &[(f64, f64)]) -> Result<()> {
    let mut out = String::from("log10_magnitude,log10_ccdf\n");
    for (m, c) in table {
        out.push_str(&format!("{m},{c}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Draw `n_draws` mini-batch subgradients at the fixed probe point (cycling
/// through the agents) and record each draw's distance to that agent's
/// full-batch subgradient.
pub fn sample_noise_distances(
    inst: &ObjectiveInstance,
    theta_probe: ArrayView1<f64>,
    n_draws: usize,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !inst.constraint.contains(theta_probe, 1e-9) {
        return Err(HtoptError::Precondition(
            "probe point must be feasible".into(),
        ));
    }
    let n_agents = inst.n_agents;
    let fulls: Vec<_> = (0..n_agents)
        .map(|i| subgradient(inst, i, theta_probe))
        .collect::<Result<_>>()?;
    let mode = OracleMode::MiniBatch { batch_size };
    let mut rngs: Vec<_> = (0..n_agents)
        .map(|i| RngStream::new(seed, i, Purpose::NoiseStudy).rng())
        .collect();
    let mut distances = Vec::with_capacity(n_draws);
    for t in 0..n_draws {
        let agent = t % n_agents;
        let sample = OracleSample::draw(&mode, inst, agent, &mut rngs[agent])?;
        let g = stochastic_subgradient(inst, agent, theta_probe, &sample)?;
        let d = (&g - &fulls[agent]).mapv(|v| v * v).sum().sqrt();
        distances.push(d);
    }
    Ok(distances)
}

/// Run the study and write its files under `out_dir`:
/// `noise_hist.csv`, `noise_ccdf.csv`, `levy_squared_hist.csv`,
/// `noise_study.json`.
pub fn noise_study(
    inst: &ObjectiveInstance,
    theta_probe: ArrayView1<f64>,
    n_draws: usize,
    batch_size: usize,
    levy_alpha: f64,
    out_dir: &Path,
    seed: u64,
) -> Result<NoiseStudyReport> {
    std::fs::create_dir_all(out_dir)?;
    let distances = sample_noise_distances(inst, theta_probe, n_draws, batch_size, seed)?;
    let mut files = Vec::new();

    let hist = out_dir.join("noise_hist.csv");
    write_histogram(&hist, &distances, 60)?;
    files.push(hist);

    let positive: Vec<f64> = distances.iter().cloned().filter(|d| *d > 0.0).collect();
    let (hill_estimate, ccdf) = if positive.len() >= 100 {
        let est = hill_tail_index(&positive, DEFAULT_HILL_FRACTION)?;
        (est, ccdf_loglog_table(&positive)?)
    } else {
        (f64::NAN, Vec::new())
    };
    if !ccdf.is_empty() {
        let p = out_dir.join("noise_ccdf.csv");
        write_ccdf(&p, &ccdf)?;
        files.push(p);
    }

    // Synthetic comparison: squared norms of alpha-stable noise vectors,
    // i.e. sums of squared stable components.
    let spec = NoiseSpec::new(NoiseFamily::AlphaStable, levy_alpha, 1.0, inst.dimension)?;
    let mut rng = RngStream::new(seed, 0, Purpose::NoiseStudy).rng();
    let levy: Vec<f64> = (0..n_draws)
        .map(|_| {
            let z = sample_noise(&spec, &mut rng);
            z.iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    let levy_path = out_dir.join("levy_squared_hist.csv");
    write_histogram(&levy_path, &levy, 60)?;
    files.push(levy_path);

    let mut sorted = distances.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let report = NoiseStudyReport {
        n_draws,
        batch_size,
        hill_top_fraction: DEFAULT_HILL_FRACTION,
        hill_estimate,
        max_distance: *sorted.last().unwrap_or(&0.0),
        median_distance: sorted[sorted.len() / 2],
        files: files.clone(),
    };
    let meta = out_dir.join("noise_study.json");
    std::fs::write(&meta, serde_json::to_string_pretty(&report).unwrap())?;
    Ok(NoiseStudyReport {
        files: {
            let mut f = files;
            f.push(meta);
            f
        },
        ..report
    })
}

/// Control study: norms of synthetic gaussian noise vectors of the same
/// dimension. Returns the Hill estimate and writes the control CCDF.
pub fn gaussian_control(
    dimension: usize,
    gamma: f64,
    n_draws: usize,
    out_dir: &Path,
    seed: u64,
) -> Result<f64> {
    std::fs::create_dir_all(out_dir)?;
    let spec = NoiseSpec::new(NoiseFamily::Gaussian, 2.0, gamma, dimension)?;
    let mut rng = RngStream::new(seed, 1, Purpose::NoiseStudy).rng();
    let norms: Vec<f64> = (0..n_draws)
        .map(|_| {
            let z = sample_noise(&spec, &mut rng);
            z.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .collect();
    let est = hill_tail_index(&norms, DEFAULT_HILL_FRACTION)?;
    write_ccdf(
        &out_dir.join("gaussian_control_ccdf.csv"),
        &ccdf_loglog_table(&norms)?,
    )?;
    Ok(est)
}
