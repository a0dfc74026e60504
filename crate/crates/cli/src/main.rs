use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shepherd_core::harness::batch::assert_thresholds;
use shepherd_core::harness::train::describe;
use shepherd_core::harness::{export_plots, resolve_output, run_batch, train, BatchSummary, ExperimentConfig};
use shepherd_core::Result;

/// Train, evaluate and benchmark herding policies.
#[derive(Parser)]
#[command(name = "shepherd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config file (`key = value` lines).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set sim.beta=0`. Repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (relative paths resolve under $SHEPHERD_OUT when set).
    #[arg(short, long)]
    out: Option<String>,
    #[arg(short = 'n', long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Exit non-zero unless the scenario's acceptance thresholds hold.
    #[arg(long = "assert")]
    check: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train a driving (drive-1v1) or selection (select-2v5) policy.
    Train(Common),
    /// Evaluate a policy stack over seeded episodes.
    Eval(EvalArgs),
    /// Learned stack against the heuristic on matched seeds.
    Benchmark(EvalArgs),
    /// Moving-goal tracking with unchanged weights.
    Track(EvalArgs),
    /// Large swarm with topological sensing.
    Scale(EvalArgs),
    /// Export tidy data and a plotting script for a batch directory.
    Plots {
        /// Directory written by eval/benchmark/track/scale or train.
        dir: PathBuf,
    },
}

fn config(c: &Common, scenario: Option<&str>) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let mut sets = Vec::new();
    if let Some(s) = scenario {
        sets.push(format!("scenario={s}"));
    }
    if let Some(o) = &c.out {
        sets.push(format!("output_dir={o}"));
    }
    if let Some(n) = c.episodes {
        sets.push(format!("episodes={n}"));
        sets.push(format!("train.episodes={n}"));
    }
    if let Some(s) = c.seed {
        sets.push(format!("seed_base={s}"));
        sets.push(format!("train.seed={s}"));
    }
    sets.extend(c.overrides.iter().cloned());
    cfg.apply_overrides(&sets)?;
    Ok(cfg)
}

fn report(cfg: &ExperimentConfig, summaries: &[BatchSummary], check: bool) -> bool {
    let out = resolve_output(&cfg.output_dir());
    for s in summaries {
        println!(
            "{}: {} episodes, success {:.3}, gathered {:.3}, median t_g {:.2}s, median t_s {:.2}s, median d_g {:.1}m, median psi_g {:.3}",
            s.label,
            s.rows.len(),
            s.success_rate(),
            s.gathering_rate(),
            s.median(|r| r.t_g),
            s.median(|r| r.t_s),
            s.median(|r| r.d_g),
            s.median(|r| r.psi_g),
        );
        println!("  -> {}", out.join(&s.label).join("metrics.csv").display());
    }
    if !check {
        return true;
    }
    let mut ok = true;
    for c in assert_thresholds(cfg, summaries) {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.pass;
    }
    ok
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train(c) => {
            let cfg = config(&c, None)?;
            let r = train(&cfg)?;
            print!("{}", describe(&r));
            Ok(true)
        }
        Command::Eval(a) => {
            let cfg = config(&a.common, None)?;
            let s = run_batch(&cfg)?;
            Ok(report(&cfg, &s, a.check))
        }
        Command::Benchmark(a) => {
            let cfg = config(&a.common, Some("benchmark"))?;
            let s = run_batch(&cfg)?;
            Ok(report(&cfg, &s, a.check))
        }
        Command::Track(a) => {
            let cfg = config(&a.common, Some("track"))?;
            let s = run_batch(&cfg)?;
            for r in &s[0].rows {
                println!("  seed {}: tracking fraction {:.3}", r.seed, r.track_frac);
            }
            Ok(report(&cfg, &s, a.check))
        }
        Command::Scale(a) => {
            let cfg = config(&a.common, Some("scale-5v50"))?;
            let s = run_batch(&cfg)?;
            for r in &s[0].rows {
                println!("  seed {}: max containment {:.3}, t_g {:.2}s", r.seed, r.chi_max, r.t_g);
            }
            Ok(report(&cfg, &s, a.check))
        }
        Command::Plots { dir } => {
            let out = export_plots(&resolve_output(&dir))?;
            println!("wrote {}", out.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
