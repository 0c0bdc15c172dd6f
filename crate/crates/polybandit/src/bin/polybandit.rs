//! Batch experiment CLI: seeded runs, sweeps with log-log slope fits, the
//! hard-case comparison table, and trace merging.
//!
//! Exit codes: 0 success, 2 config error, 3 algorithm failure.

use anyhow::Context;
use clap::{Parser, Subcommand};
use polybandit::harness::{self, Axis, ExperimentConfig, Metric};
use polybandit::noiseless::TieBreak;
use polybandit::{env::ModelKind, Error};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "polybandit", about = "Structured-polynomial bandit benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment for one seed and write the trace CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Output CSV path (default: <name>-<seed>.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a grid over one axis and fit the log-log slope of the medians.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: String,
        /// Axis values, comma separated.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Metric: final-regret | samples-to-eps | total-samples.
        #[arg(long, default_value = "final-regret")]
        metric: String,
        /// Summary CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hard-case demonstration: UCB vertex plays vs random identification.
    Hardcase {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        p: u32,
        #[arg(long, default_value = "adversarial")]
        tiebreak: String,
        #[arg(long, default_value = "20")]
        seeds: u64,
        /// CSV output path for the two-row table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge trace CSVs into a side-by-side comparison file.
    Report {
        /// Trace CSV paths.
        traces: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_threads() {
    if let Ok(v) = std::env::var("POLYBANDIT_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() {
    init_threads();
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Error>().is_none_or(is_config_error) {
                2
            } else {
                3
            }
        }
    };
    std::process::exit(code);
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_)
            | Error::InvalidParameter(_)
            | Error::InvalidModel(_)
            | Error::DimensionMismatch { .. }
            | Error::Io(_)
    )
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let cfg = ExperimentConfig::from_toml(&text)?;
            let trace = harness::run(&cfg, seed)?;
            let path = out.unwrap_or_else(|| PathBuf::from(format!("{}-{}.csv", cfg.name, seed)));
            trace.save(&path)?;
            println!(
                "{}: seed {} steps {} final_regret {:.6} -> {}",
                cfg.name,
                seed,
                trace.steps,
                trace.final_regret,
                path.display()
            );
            if !trace.extras.is_null() {
                println!("extras: {}", trace.extras);
            }
            Ok(())
        }
        Command::Sweep { config, axis, values, metric, out } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let cfg = ExperimentConfig::from_toml(&text)?;
            let axis: Axis = axis.parse()?;
            let metric = match metric.as_str() {
                "final-regret" => Metric::FinalRegret,
                "samples-to-eps" => Metric::SamplesToEps,
                "total-samples" => Metric::TotalSamples,
                other => anyhow::bail!("unknown metric {other}"),
            };
            let summary = harness::sweep(&cfg, axis, &values, metric)?;
            let mut table = String::from("axis_value,median,censored\n");
            for p in &summary.points {
                println!(
                    "axis {:>10}: median {:.4} (censored {})",
                    p.axis_value, p.median_metric, p.censored
                );
                table.push_str(&format!("{},{},{}\n", p.axis_value, p.median_metric, p.censored));
            }
            println!("slope {:.4} +- {:.4}", summary.slope, summary.slope_stderr);
            if let Some(path) = out {
                std::fs::write(&path, table)?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Hardcase { d, p, tiebreak, seeds, out } => {
            let tb = match tiebreak.as_str() {
                "adversarial" => TieBreak::Adversarial,
                "lex" => TieBreak::Lexicographic,
                "uniform" => TieBreak::Uniform(0),
                other => anyhow::bail!("unknown tiebreak {other}"),
            };
            let mut ucb_plays = Vec::new();
            let mut random_plays = Vec::new();
            for seed in 0..seeds {
                let model = polybandit::env::make_random_model(
                    ModelKind::HardCase,
                    d,
                    1,
                    p,
                    &polybandit::env::SpectrumSpec::Explicit(vec![1.0]),
                    seed,
                )?;
                let tb_seeded = if let TieBreak::Uniform(_) = tb { TieBreak::Uniform(seed) } else { tb };
                let run = polybandit::noiseless::ucb_hard_case_run(&model, tb_seeded, 1000)?;
                anyhow::ensure!(run.all_vertex_plays, "UCB left the vertex set");
                ucb_plays.push(run.plays as f64);
                let mut session = polybandit::env::BanditSession::new(model, 0.0, seed);
                let ident = polybandit::noiseless::identify_finite_class(&mut session, seed)?;
                random_plays.push(ident.actions_used as f64);
            }
            let med = |v: &[f64]| polybandit::util::median(v);
            println!("strategy,median_plays,max_plays");
            let table = format!(
                "strategy,median_plays,max_plays\nucb,{},{}\nrandom,{},{}\n",
                med(&ucb_plays),
                ucb_plays.iter().cloned().fold(0.0f64, f64::max),
                med(&random_plays),
                random_plays.iter().cloned().fold(0.0f64, f64::max),
            );
            print!("{}", table.lines().skip(1).collect::<Vec<_>>().join("\n"));
            println!();
            if let Some(path) = out {
                std::fs::write(&path, table)?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Report { traces, out } => {
            anyhow::ensure!(!traces.is_empty(), "no traces given");
            let mut named = Vec::new();
            for path in &traces {
                let rows = harness::read_trace_csv(path)?;
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "trace".into());
                named.push((name, rows));
            }
            let mut buf = Vec::new();
            harness::report(&named, &mut buf)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, buf)?;
                    println!("wrote {}", path.display());
                }
                None => {
                    print!("{}", String::from_utf8_lossy(&buf));
                }
            }
            Ok(())
        }
    }
}
