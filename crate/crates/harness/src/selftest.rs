//! Quick end-to-end checks behind the `selftest` subcommand.

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::metrics::Metric;
use crate::output::write_csv;
use crate::run::run_experiment;
use crate::slope::fit_loglog;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

const POINT_MASS: &str = r#"
version = 1
name = "selftest-point-mass"
t_grid = [8]
record_wall_time = false
metrics = ["l2_err", "winv_err"]

[privacy]
alpha = 1.0
beta = 0.05

[distribution]
kind = "finite"
atoms = [[1.0]]
probs = [1.0]

[[estimators]]
algo = "iw-dp-fixed-p"
"#;

const ALL_ESTIMATORS: &str = r#"
version = 1
name = "selftest-ledger"
seed = 11
t_grid = [4096]
record_wall_time = false

[privacy]
alpha = 1.0
beta = 0.05
admissibility = { c = 1.0, enforce = false }

[distribution]
kind = "sphere"
dim = 2

[[estimators]]
algo = "ssp-ols"
[[estimators]]
algo = "iw-ldp"
[[estimators]]
algo = "iw-dp"
[[estimators]]
algo = "iw-ldp-fixed-p"
[[estimators]]
algo = "iw-dp-fixed-p"
[[estimators]]
algo = "glm-iw-ldp"
[[estimators]]
algo = "glm-iw-dp"
[[estimators]]
algo = "dp-sgd"
[[estimators]]
algo = "ldp-clipped-sgd"
"#;

const SOLVE: &str = r#"
version = 1
name = "selftest-solve"
t_grid = [100, 10000]
record_wall_time = false
metrics = ["residual", "pop_ratio"]

[privacy]
alpha = 1.0
beta = 0.05

[distribution]
kind = "simple"
cov_diag = [0.5, 0.2, 0.05]

[solve]
model = "dp"
"#;

fn load(text: &str, kind: ExperimentKind) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).and_then(|c| c.resolve(Some(kind))).expect("built-in configs are valid")
}

fn check(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> Check {
    match f() {
        Ok(detail) => Check { name, passed: true, detail },
        Err(detail) => Check { name, passed: false, detail },
    }
}

/// Runs every check; `threads` sizes the worker pool.
pub fn run_selftest(threads: usize) -> Vec<Check> {
    let mut out = Vec::new();
    out.push(check("point-mass sweep emits one row per metric", || {
        let cfg = load(POINT_MASS, ExperimentKind::Sweep);
        let res = run_experiment(&cfg, threads).map_err(|e| e.to_string())?;
        match res.rows.len() {
            2 => Ok("2 rows".into()),
            n => Err(format!("{n} rows")),
        }
    }));
    out.push(check("identical config and seed give identical CSV bytes", || {
        let cfg = load(ALL_ESTIMATORS, ExperimentKind::Sweep);
        let bytes = || -> Result<Vec<u8>, String> {
            let res = run_experiment(&cfg, threads).map_err(|e| e.to_string())?;
            let mut buf = Vec::new();
            write_csv(&res.rows, &mut buf).map_err(|e| e.to_string())?;
            Ok(buf)
        };
        let (a, b) = (bytes()?, bytes()?);
        if a == b {
            Ok(format!("{} bytes", a.len()))
        } else {
            Err("outputs differ".into())
        }
    }));
    out.push(check("every estimator's ledger stays within (alpha, beta)", || {
        let cfg = load(ALL_ESTIMATORS, ExperimentKind::Sweep);
        let res = run_experiment(&cfg, threads).map_err(|e| e.to_string())?;
        if let Some(f) = res.failures.first() {
            return Err(format!("{} failed: {}", f.algo, f.message));
        }
        let over: Vec<_> = res.ledgers.iter().filter(|(_, l)| !l.within_declared()).map(|(a, _)| a.clone()).collect();
        if res.ledgers.len() != cfg.estimators.len() {
            return Err(format!("{} ledgers for {} estimators", res.ledgers.len(), cfg.estimators.len()));
        }
        if over.is_empty() {
            Ok(format!("{} estimators", res.ledgers.len()))
        } else {
            Err(format!("over budget: {}", over.join(", ")))
        }
    }));
    out.push(check("exact solver converges", || {
        let cfg = load(SOLVE, ExperimentKind::SolveInfo);
        let res = run_experiment(&cfg, threads).map_err(|e| e.to_string())?;
        if let Some(f) = res.failures.first() {
            return Err(f.message.clone());
        }
        let worst = res
            .rows
            .iter()
            .filter(|r| r.metric == Metric::Residual.name())
            .map(|r| r.value)
            .fold(0.0, f64::max);
        if worst <= 1e-8 {
            Ok(format!("residual {worst:.1e}"))
        } else {
            Err(format!("residual {worst:.1e}"))
        }
    }));
    out.push(check("slope fit recovers T^(-1/2)", || {
        let pts: Vec<(usize, f64)> = [10usize, 100, 1000].iter().map(|&t| (t, 1.0 / (t as f64).sqrt())).collect();
        let (slope, _, r2, ..) = fit_loglog(&pts).map_err(|e| e.to_string())?;
        if (slope + 0.5).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12 {
            Ok(format!("slope {slope}"))
        } else {
            Err(format!("slope {slope}, r2 {r2}"))
        }
    }));
    out
}
