//! Figure-reproduction presets: the noise study, reconstructed-image grids,
//! and method-comparison convergence curves, all at desk scale by default
//! with the paper-scale setup behind a flag.

use crate::dssm::{run, Method, RunOptions, ScheduleSpec};
use crate::error::{HtoptError, Result};
use crate::harness::idx::{image_to_signal, load_idx_images};
use crate::harness::noise_study::{gaussian_control, noise_study};
use crate::harness::plot::{write_line_chart, write_pgm, Series};
use crate::metrics::MetricsRow;
use crate::objectives::{gen_phase_retrieval, ObjectiveInstance, OracleMode, SignalSource};
use crate::rng::{sample_unit_ball, Purpose, RngStream};
use crate::topology::{ring_mixing, MixingSchedule};
use ndarray::{Array1, ArrayView1};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig1,
    Fig2,
    Fig3,
}

impl std::str::FromStr for Preset {
    type Err = HtoptError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Preset::Fig1),
            "fig2" => Ok(Preset::Fig2),
            "fig3" => Ok(Preset::Fig3),
            other => Err(HtoptError::Parameter(format!(
                "unknown preset {other}; expected fig1, fig2, or fig3"
            ))),
        }
    }
}

/// Where external data lives and whether a missing dataset is fatal.
#[derive(Debug, Clone, Default)]
pub struct DataContext {
    pub data_dir: Option<PathBuf>,
    pub synthetic_fallback: bool,
}

pub const DATA_DIR_ENV: &str = "HTOPT_DATA_DIR";
pub const MNIST_IMAGES_FILE: &str = "train-images-idx3-ubyte";

impl DataContext {
    pub fn mnist_images_path(&self) -> PathBuf {
        let base = self
            .data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"));
        base.join(MNIST_IMAGES_FILE)
    }

    /// Load the requested MNIST image as a unit-norm signal, or fall back
    /// to a random signal when allowed.
    pub fn mnist_signal(&self, index: usize, dimension: usize) -> Result<Option<Array1<f64>>> {
        let path = self.mnist_images_path();
        if !path.exists() {
            if self.synthetic_fallback {
                return Ok(None);
            }
            return Err(HtoptError::Config(format!(
                "MNIST images not found at {}; supply --data-dir DIR (or set {DATA_DIR_ENV}), \
                 or pass --synthetic-fallback to use a random signal",
                path.display()
            )));
        }
        let idx = load_idx_images(&path)?;
        if idx.images.is_empty() {
            return Err(HtoptError::Format("empty MNIST image file".into()));
        }
        let img = &idx.images[index % idx.images.len()];
        if img.len() != dimension {
            return Err(HtoptError::Shape(format!(
                "MNIST image has {} pixels, instance expects {dimension}",
                img.len()
            )));
        }
        Ok(Some(image_to_signal(img)))
    }
}

struct PresetScale {
    n: usize,
    n_agents: usize,
    m: usize,
}

fn scale(full: bool) -> PresetScale {
    if full {
        PresetScale {
            n: 784,
            n_agents: 28,
            m: 84,
        }
    } else {
        PresetScale {
            n: 49,
            n_agents: 7,
            m: 21,
        }
    }
}

fn preset_instance(
    sc: &PresetScale,
    data: &DataContext,
    seed: u64,
    mnist_index: usize,
) -> Result<(ObjectiveInstance, Vec<String>)> {
    let mut warnings = Vec::new();
    let signal = match data.mnist_signal(mnist_index, sc.n) {
        Ok(Some(s)) => SignalSource::Given(s),
        Ok(None) => {
            warnings.push("MNIST data not found; using a random unit signal".into());
            SignalSource::Random
        }
        Err(e) => return Err(e),
    };
    let inst = gen_phase_retrieval(
        sc.n,
        sc.n_agents,
        sc.m,
        RngStream::new(seed, 0, Purpose::Instance),
        signal,
    )?;
    Ok((inst, warnings))
}

/// Map a signal estimate to grayscale bytes, aligning its sign with the
/// truth (measurements are sign-blind) and min-max scaling.
pub fn render_signal(theta: ArrayView1<f64>, truth: Option<ArrayView1<f64>>) -> Vec<u8> {
    let mut v = theta.to_owned();
    if let Some(t) = truth {
        if v.dot(&t) < 0.0 {
            v.mapv_inplace(|x| -x);
        }
    }
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-300);
    v.iter()
        .map(|&x| (((x - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

fn desk_clipped_schedule(c0: f64) -> Result<ScheduleSpec> {
    ScheduleSpec::new(0.3, 0.75, 2.0 * c0, 0.2, 2.0)
}

fn desk_dpsm_schedule(c0: f64) -> Result<ScheduleSpec> {
    // decaying-step baseline; q = 0 keeps tau fixed but baselines never clip
    ScheduleSpec::new(0.3, 0.5, 2.0 * c0, 0.0, 2.0)
}

/// Constant stepsize 30/(N K) used by the image-reconstruction figure; it
/// fails the validity conditions on purpose and is run under the override.
fn constant_step_schedule(n_agents: usize, rounds: usize, c0: f64) -> Result<ScheduleSpec> {
    ScheduleSpec::new(
        30.0 / (n_agents as f64 * rounds as f64),
        0.0,
        2.0 * c0,
        0.0,
        2.0,
    )
}

fn method_runs(
    inst: &ObjectiveInstance,
    mixing: &MixingSchedule,
    rounds: usize,
    measure_every: usize,
    seed: u64,
    constant_step: bool,
) -> Result<Vec<(Method, Vec<MetricsRow>, Array1<f64>)>> {
    let c0 = inst.constants.c0;
    let batch = OracleMode::MiniBatch { batch_size: 3 };
    let configs: Vec<(Method, ScheduleSpec, OracleMode)> = if constant_step {
        let s = constant_step_schedule(inst.n_agents, rounds, c0)?;
        vec![
            (Method::Clipped, s, batch.clone()),
            (Method::Dpsm, s, OracleMode::FullBatch),
            (Method::StoDpsm, s, batch),
        ]
    } else {
        vec![
            (Method::Clipped, desk_clipped_schedule(c0)?, batch.clone()),
            (Method::Dpsm, desk_dpsm_schedule(c0)?, OracleMode::FullBatch),
            (Method::StoDpsm, desk_clipped_schedule(c0)?, batch),
        ]
    };
    let mut out = Vec::new();
    for (method, schedule, oracle) in configs {
        let opts = RunOptions {
            rounds,
            measure_every,
            moreau_every: 0,
            seed,
            override_rejected_schedule: true,
            wall_budget: None,
        };
        let rec = run(inst, mixing, &schedule, None, oracle, method, &opts)?;
        let mean = rec
            .final_states
            .mean_axis(ndarray::Axis(0))
            .expect("states");
        out.push((method, rec.rows, mean));
    }
    Ok(out)
}

/// Run one preset, writing its plot-ready CSVs and rendering under
/// `out_dir`. Returns the file list.
pub fn reproduce(
    preset: Preset,
    out_dir: &Path,
    full_scale: bool,
    data: &DataContext,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let sc = scale(full_scale);
    let mut files = Vec::new();
    match preset {
        Preset::Fig1 => {
            let (inst, warnings) = preset_instance(&sc, data, seed, 0)?;
            let mut rng = RngStream::new(seed, 0, Purpose::Probe).rng();
            let probe = sample_unit_ball(&mut rng, inst.dimension);
            let report = noise_study(&inst, probe.view(), 10_000, 1, 1.5, out_dir, seed)?;
            files.extend(report.files.clone());
            let gauss = gaussian_control(inst.dimension, 1.0, 10_000, out_dir, seed)?;
            files.push(out_dir.join("gaussian_control_ccdf.csv"));
            // overlay chart of the two CCDFs
            let read_ccdf = |p: &Path| -> Result<Vec<(f64, f64)>> {
                let text = std::fs::read_to_string(p)?;
                Ok(text
                    .lines()
                    .skip(1)
                    .filter_map(|l| {
                        let mut it = l.split(',');
                        Some((it.next()?.parse().ok()?, it.next()?.parse().ok()?))
                    })
                    .collect())
            };
            let series = vec![
                Series {
                    label: "minibatch subgradient noise".into(),
                    points: read_ccdf(&out_dir.join("noise_ccdf.csv"))?,
                },
                Series {
                    label: "gaussian control".into(),
                    points: read_ccdf(&out_dir.join("gaussian_control_ccdf.csv"))?,
                },
            ];
            let svg = out_dir.join("fig1_loglog.svg");
            write_line_chart(
                &svg,
                "Subgradient noise tail vs gaussian control",
                "log10 magnitude",
                "log10 CCDF",
                &series,
                false,
            )?;
            files.push(svg);
            let meta = out_dir.join("fig1_meta.json");
            std::fs::write(
                &meta,
                serde_json::to_string_pretty(&serde_json::json!({
                    "preset": "fig1",
                    "hill_estimate": report.hill_estimate,
                    "gaussian_control_hill": gauss,
                    "n_draws": report.n_draws,
                    "warnings": warnings,
                    "version": env!("CARGO_PKG_VERSION"),
                }))
                .unwrap(),
            )?;
            files.push(meta);
        }
        Preset::Fig2 => {
            let (inst, warnings) = preset_instance(&sc, data, seed, 0)?;
            let side = (inst.dimension as f64).sqrt() as usize;
            if side * side != inst.dimension {
                return Err(HtoptError::Parameter(
                    "image rendering needs a square dimension".into(),
                ));
            }
            let mixing = MixingSchedule::Static(ring_mixing(inst.n_agents)?);
            let rounds = if full_scale { 20_000 } else { 4000 };
            let truth = inst.ground_truth().map(|t| t.to_owned());
            let original = render_signal(truth.as_ref().unwrap().view(), None);
            let orig_path = out_dir.join("fig2_original.pgm");
            write_pgm(&orig_path, side, side, &original)?;
            files.push(orig_path);
            let runs = method_runs(&inst, &mixing, rounds, rounds.max(1), seed, true)?;
            let mut summary = serde_json::Map::new();
            for (method, rows, mean) in &runs {
                let img = render_signal(mean.view(), truth.as_ref().map(|t| t.view()));
                let p = out_dir.join(format!("fig2_recon_{}.pgm", method.label()));
                write_pgm(&p, side, side, &img)?;
                files.push(p);
                if let Some(last) = rows.last() {
                    if let Some(rec) = last.recovery_err {
                        summary.insert(method.label().into(), serde_json::json!(rec));
                    }
                }
            }
            let meta = out_dir.join("fig2_meta.json");
            std::fs::write(
                &meta,
                serde_json::to_string_pretty(&serde_json::json!({
                    "preset": "fig2",
                    "rounds": rounds,
                    "final_recovery": summary,
                    "step_rule": "constant 30/(N K), run with the schedule override",
                    "warnings": warnings,
                    "version": env!("CARGO_PKG_VERSION"),
                }))
                .unwrap(),
            )?;
            files.push(meta);
        }
        Preset::Fig3 => {
            let (inst, warnings) = preset_instance(&sc, data, seed, 0)?;
            let mixing = MixingSchedule::Static(ring_mixing(inst.n_agents)?);
            let rounds = if full_scale { 20_000 } else { 5000 };
            let runs = method_runs(&inst, &mixing, rounds, 50, seed, false)?;
            // three-curve CSV over rounds: recovery error per method
            let ks: Vec<usize> = runs[0].1.iter().map(|r| r.k).collect();
            let mut csv = String::from("k,clipped,dpsm,stodpsm\n");
            for (row_i, k) in ks.iter().enumerate() {
                let mut line = format!("{k}");
                for (_, rows, _) in &runs {
                    let v = rows
                        .get(row_i)
                        .and_then(|r| r.recovery_err)
                        .map(|v| format!("{v}"))
                        .unwrap_or_else(|| "NA".into());
                    line.push_str(&format!(",{v}"));
                }
                csv.push_str(&line);
                csv.push('\n');
            }
            let csv_path = out_dir.join("fig3_curves.csv");
            std::fs::write(&csv_path, csv)?;
            files.push(csv_path);
            let series: Vec<Series> = runs
                .iter()
                .map(|(method, rows, _)| Series {
                    label: method.label().into(),
                    points: rows
                        .iter()
                        .filter_map(|r| r.recovery_err.map(|v| (r.k as f64, v)))
                        .collect(),
                })
                .collect();
            let svg = out_dir.join("fig3_curves.svg");
            write_line_chart(
                &svg,
                "Recovery error by method",
                "round",
                "relative recovery error",
                &series,
                true,
            )?;
            files.push(svg);
            let meta = out_dir.join("fig3_meta.json");
            std::fs::write(
                &meta,
                serde_json::to_string_pretty(&serde_json::json!({
                    "preset": "fig3",
                    "rounds": rounds,
                    "warnings": warnings,
                    "version": env!("CARGO_PKG_VERSION"),
                }))
                .unwrap(),
            )?;
            files.push(meta);
        }
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_preset_is_usage_error() {
        assert!("fig9".parse::<Preset>().is_err());
        assert!("fig1".parse::<Preset>().is_ok());
    }

    #[test]
    fn missing_mnist_without_fallback_names_the_path() {
        let data = DataContext {
            data_dir: Some(PathBuf::from("/nonexistent")),
            synthetic_fallback: false,
        };
        let err = data.mnist_signal(0, 49).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("/nonexistent") && msg.contains(MNIST_IMAGES_FILE));
    }

    #[test]
    fn render_signal_aligns_sign() {
        let truth = ndarray::array![1.0, 0.0, -0.5];
        let est = ndarray::array![-0.9, 0.0, 0.45];
        let img = render_signal(est.view(), Some(truth.view()));
        // after flipping, the largest coordinate maps to 255
        assert_eq!(img[0], 255);
        assert_eq!(img[2], 0);
    }
}
