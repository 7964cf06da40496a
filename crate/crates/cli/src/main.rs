use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use factorguard::experiment::{
    cmd_bounds, cmd_gen, cmd_learn_weights, cmd_run, cmd_sweep, io, report, ExperimentConfig, ExperimentError, Timings,
};

const OUT_DIR_ENV: &str = "FACTORGUARD_OUT_DIR";

/// Detect and repair logic-violating concept explanations on a synthetic benchmark.
#[derive(Parser)]
#[command(name = "factorguard", version)]
struct Cli {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config value, e.g. `--partial attack.budgets=[1,2]`. Repeatable.
    #[arg(long = "partial", value_name = "KEY=VALUE", global = true)]
    partials: Vec<String>,

    /// Output directory; overrides the config. Without it, `output_dir` from the
    /// config applies, then the FACTORGUARD_OUT_DIR environment variable, then `out`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Print per-phase wall-clock durations to stderr.
    #[arg(long, global = true)]
    timing: bool,

    /// Identify only; never intervene (equivalent to `--partial repair.enabled=false`).
    #[arg(long, global = true)]
    no_repair: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or load) the dataset and rules and write them out.
    Gen,
    /// Fit rule weights by maximum likelihood and write the weights sidecar.
    LearnWeights,
    /// Attack, identify, repair and report metrics for every budget.
    Run,
    /// Compare bound values with measured post-repair accuracy.
    Bounds,
    /// Factor-ratio sweep and rule-family ablation at the largest budget.
    Sweep,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        // the library message already includes its source
        let err = anyhow::Error::msg(e.to_string());
        if e.is_config_error() {
            Failure::Config(err)
        } else {
            Failure::Runtime(err)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(Failure::Config)?,
        None => String::new(),
    };
    let mut overrides = cli.partials.clone();
    if cli.no_repair {
        overrides.push("repair.enabled=false".into());
    }
    if let Some(dir) = &cli.out_dir {
        overrides.push(format!("output_dir={:?}", dir.to_string_lossy()));
    }
    let env_default = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    Ok(ExperimentConfig::from_toml_with_output(&text, &overrides, env_default.as_deref())?)
}

fn log_failures(splits: &[factorguard::experiment::SplitDetail]) {
    for split in splits {
        for (index, msg) in &split.failures {
            eprintln!("warning: {} instance {index}: {msg}", split.label);
        }
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")
            .map_err(Failure::Config)?;
    }
    let cfg = load_config(cli)?;
    let mut t = Timings::default();
    let out = cfg.output_dir.display();
    match cli.command {
        Command::Gen => {
            let summary = cmd_gen(&cfg, &mut t)?;
            println!("{summary}");
            println!("wrote {} and {} to {out}", io::INSTANCES_FILE, io::RULES_FILE);
        }
        Command::LearnWeights => {
            let fit = cmd_learn_weights(&cfg, &mut t)?;
            println!("nll: {:.6} ({} epochs)", fit.nll, fit.nll_trace.len() - 1);
            println!("wrote {} to {out}", io::WEIGHTS_FILE);
        }
        Command::Run => {
            let report = cmd_run(&cfg, &mut t)?;
            log_failures(&report.splits);
            print!("{}", report::metrics_csv(&report.rows));
            println!("wrote {} and {} to {out}", io::REPORT_CSV, io::REPORT_JSON);
        }
        Command::Bounds => {
            let bounds = cmd_bounds(&cfg, &mut t)?;
            for (b, checks) in &bounds.checks {
                let ok = checks.iter().filter(|c| c.satisfied).count();
                println!("B={b}: accuracy >= bound - {} for {ok}/{} concepts", cfg.eval.bound_slack, checks.len());
            }
            if let Some(v) = &bounds.explicit {
                let shown = |x: Option<f64>| x.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
                println!(
                    "lemma2: {}  theorem1: {}  theorem2: {}",
                    shown(v.lemma2),
                    shown(v.theorem1),
                    shown(v.theorem2)
                );
            }
            println!("wrote {}, {} and {} to {out}", io::BOUNDS_CSV, io::BOUNDS_TABLE_CSV, io::BOUNDS_JSON);
        }
        Command::Sweep => {
            let rows = cmd_sweep(&cfg, &mut t)?;
            print!("{}", report::cell_means_csv(&factorguard::evaluation::cell_means(&rows)));
            println!("wrote {} and {} to {out}", io::SWEEP_CSV, io::SWEEP_JSON);
        }
    }
    if cli.timing {
        for (phase, d) in &t.phases {
            eprintln!("{phase:>24}: {:.3}s", d.as_secs_f64());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
