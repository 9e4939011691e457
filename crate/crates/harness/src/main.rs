use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use iwpriv_harness::config::{ExperimentConfig, ExperimentKind};
use iwpriv_harness::selftest::run_selftest;
use iwpriv_harness::{run_to_files, HarnessError};

#[derive(Parser)]
#[command(name = "iwpriv", version, about = "Private information-weighted regression and bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the information matrix and report residuals and the price of privacy.
    SolveInfo(RunArgs),
    /// One-off estimator runs.
    Regress(RunArgs),
    /// Contextual bandit regret.
    Bandit(RunArgs),
    /// Rate sweeps over a T grid with log-log slope fits.
    Sweep(RunArgs),
    /// Information-weighted vs sufficient-statistic regression on low-variance covariates.
    Separation(RunArgs),
    /// Fast built-in end-to-end checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the unsplit per-channel noise constants even where they overspend the budget.
    #[arg(long)]
    paper_constants: bool,
    /// Worker threads; 0 means one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<bool, HarnessError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out = Some(out);
    }
    if args.paper_constants {
        cfg.privacy.paper_constants = true;
    }
    let cfg = cfg.resolve(Some(kind))?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.csv", cfg.name)));
    let res = run_to_files(&cfg, &out, args.threads)?;
    for fit in &res.slopes {
        println!("{} {}: slope {:.4} (r2 {:.3}, {} points)", fit.algo, fit.metric, fit.slope, fit.r2, fit.points);
    }
    for (algo, l) in &res.ledgers {
        if !l.within_declared() {
            eprintln!("warning: {algo} spent ({}, {}) against a declared ({}, {})", l.max_alpha, l.max_beta, l.declared_alpha, l.declared_beta);
        }
    }
    println!("wrote {} rows to {}", res.rows.len(), out.display());
    for f in &res.failures {
        eprintln!("failed: {} {}: {}", f.run_id, f.algo, f.message);
    }
    Ok(res.failures.is_empty())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Selftest { threads } => {
            let checks = run_selftest(threads);
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            return ExitCode::from(if checks.iter().all(|c| c.passed) { 0 } else { 3 });
        }
        Command::SolveInfo(a) => (ExperimentKind::SolveInfo, a),
        Command::Regress(a) => (ExperimentKind::Regress, a),
        Command::Bandit(a) => (ExperimentKind::Bandit, a),
        Command::Sweep(a) => (ExperimentKind::Sweep, a),
        Command::Separation(a) => (ExperimentKind::Separation, a),
    };
    match run(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        // Rows were written; some tasks failed numerically.
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
