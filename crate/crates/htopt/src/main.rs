use clap::{Parser, Subcommand};
use htopt::baselines::{compare, write_medians_file, write_summary_file, MethodSpec};
use htopt::dssm::Method;
use htopt::harness::config::{ProblemKind, SignalKind};
use htopt::harness::{
    load_config, reproduce, resolve, run_experiment, validate_config, DataContext,
    ExperimentConfig, Preset,
};
use htopt::objectives::OracleMode;
use htopt::rng::{sample_unit_ball, Purpose, RngStream};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "htopt",
    about = "Distributed clipped stochastic subgradient simulator under heavy-tailed noise",
    version
)]
struct Cli {
    /// Worker threads for per-agent and per-seed parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one experiment and write metrics.csv, final_states.bin, meta.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Use a random signal when the MNIST file is missing.
        #[arg(long)]
        synthetic_fallback: bool,
    },
    /// Run several methods over a common seed list and write summary.csv.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated subset of clipped,dpsm,stodpsm.
        #[arg(long, default_value = "clipped,dpsm,stodpsm")]
        methods: String,
        /// Number of seeds (base..base+N) shared by every method.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        synthetic_fallback: bool,
    },
    /// Sample subgradient noise at a fixed probe point and write tail diagnostics.
    NoiseStudy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        synthetic_fallback: bool,
    },
    /// Reproduce a figure preset (fig1, fig2, fig3) at desk scale.
    Reproduce {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        out: PathBuf,
        /// Paper-scale problem sizes (n=784, N=28, m=84).
        #[arg(long)]
        full_scale: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        synthetic_fallback: bool,
    },
    /// Parse and cross-check a config file.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_signal(
    cfg: &ExperimentConfig,
    data: &DataContext,
) -> htopt::Result<Option<ndarray::Array1<f64>>> {
    match (cfg.problem.kind, cfg.problem.signal) {
        (ProblemKind::PhaseRetrieval, SignalKind::Mnist) => {
            data.mnist_signal(cfg.problem.mnist_index.unwrap_or(0), cfg.problem.n)
        }
        _ => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not configure {n} worker threads: {e}");
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> htopt::Result<()> {
    match cmd {
        Command::Run {
            config,
            seed,
            out,
            data_dir,
            synthetic_fallback,
        } => {
            let cfg = load_config(&config)?;
            let data = DataContext {
                data_dir,
                synthetic_fallback,
            };
            let art = run_experiment(&cfg, seed, &out, &data)?;
            println!(
                "run complete: {} rounds, {} metric rows, wall {:.2}s",
                cfg.run.rounds,
                art.record.rows.len(),
                art.record.wall.as_secs_f64()
            );
            println!("  metrics: {}", art.metrics_path.display());
            println!("  states:  {}", art.states_path.display());
            println!("  meta:    {}", art.meta_path.display());
            if !art.record.completed {
                println!("  note: wall budget hit, record flagged incomplete");
            }
            Ok(())
        }
        Command::Compare {
            config,
            methods,
            seeds,
            seed,
            out,
            data_dir,
            synthetic_fallback,
        } => {
            let cfg = load_config(&config)?;
            let data = DataContext {
                data_dir,
                synthetic_fallback,
            };
            let signal = load_signal(&cfg, &data)?;
            let resolved = resolve(&cfg, seed, signal)?;
            let mut specs = Vec::new();
            for tag in methods.split(',') {
                let method = match tag.trim() {
                    "clipped" => Method::Clipped,
                    "dpsm" => Method::Dpsm,
                    "stodpsm" => Method::StoDpsm,
                    other => {
                        return Err(htopt::HtoptError::Parameter(format!(
                            "unknown method {other}; expected clipped, dpsm, stodpsm"
                        )))
                    }
                };
                let oracle = match method {
                    Method::Dpsm => OracleMode::FullBatch,
                    _ => resolved.oracle.clone(),
                };
                specs.push(MethodSpec {
                    method,
                    schedule: resolved.schedule,
                    oracle,
                });
            }
            let seed_list: Vec<u64> = (0..seeds).map(|s| seed + s).collect();
            let outcome = compare(
                &resolved.instance,
                &resolved.mixing,
                &specs,
                &resolved.moreau,
                cfg.run.rounds,
                &seed_list,
            )?;
            std::fs::create_dir_all(&out)?;
            write_summary_file(&out.join("summary.csv"), &outcome.rows)?;
            write_medians_file(&out.join("medians.csv"), &outcome.medians)?;
            for m in &outcome.medians {
                let rec = m
                    .final_recovery
                    .map(|v| format!("{v:.4}"))
                    .unwrap_or_else(|| "NA".into());
                println!(
                    "{:<8} median final_f {:.6} | moreau {:.6} | recovery {rec}",
                    m.method.label(),
                    m.final_f,
                    m.final_moreau
                );
            }
            Ok(())
        }
        Command::NoiseStudy {
            config,
            draws,
            seed,
            out,
            data_dir,
            synthetic_fallback,
        } => {
            let cfg = load_config(&config)?;
            let data = DataContext {
                data_dir,
                synthetic_fallback,
            };
            let signal = load_signal(&cfg, &data)?;
            let resolved = resolve(&cfg, seed, signal)?;
            let mut rng = RngStream::new(seed, 0, Purpose::Probe).rng();
            let probe = sample_unit_ball(&mut rng, resolved.instance.dimension);
            let levy_alpha = if cfg.noise.family == htopt::noise::NoiseFamily::None {
                1.5
            } else {
                cfg.noise.alpha
            };
            let report = htopt::harness::noise_study(
                &resolved.instance,
                probe.view(),
                draws,
                cfg.problem.batch_size,
                levy_alpha,
                &out,
                seed,
            )?;
            println!(
                "noise study: {} draws, batch {}, Hill estimate {:.3}",
                report.n_draws, report.batch_size, report.hill_estimate
            );
            for f in &report.files {
                println!("  wrote {}", f.display());
            }
            Ok(())
        }
        Command::Reproduce {
            preset,
            out,
            full_scale,
            seed,
            data_dir,
            synthetic_fallback,
        } => {
            let preset: Preset = preset.parse()?;
            let data = DataContext {
                data_dir,
                synthetic_fallback,
            };
            let files = reproduce(preset, &out, full_scale, &data, seed)?;
            for f in &files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::ValidateConfig { config } => {
            let cfg = load_config(&config)?;
            let warnings = validate_config(&cfg)?;
            println!("config ok");
            for w in warnings {
                println!("warning: {w}");
            }
            Ok(())
        }
    }
}
