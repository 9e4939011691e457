//! Task expansion and execution for every experiment kind.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use iwpriv::bandits::{
    gap_instance, run_elimination_bandit, run_gap_instance, square_cb, BanditEnv, EliminationConfig, PrivacyModel,
    RegressionOracle, RegretTrace, SquareCbConfig,
};
use iwpriv::covariates::{sample_dataset, CovariateDistribution, Dataset, MomentOracle};
use iwpriv::estimators::{
    dp_sgd_improper, glm_iw_dp, glm_iw_ldp, iw_regression_dp, iw_regression_dp_fixed_p, iw_regression_ldp,
    iw_regression_ldp_fixed_p, ldp_clipped_sgd, simple_ldp_1d, ssp_ols, ClippedSgdParams, EstimateReport, Setup,
};
use iwpriv::info_matrix::{price_of_privacy, solve_exact, Model, SolveOptions};
use iwpriv::link::GlmLink;
use iwpriv::privacy::{PrivacyBudget, PrivacyLedger, RngStream};

use crate::config::{BanditAlgo, EstimatorSpec, ExperimentConfig, ExperimentKind};
use crate::metrics::{evaluate, Metric, Moments};
use crate::moments::oracle_for;
use crate::output::{BanditDiagnostics, Failure, LedgerSummary, ResultRow, Sidecar};
use crate::slope::{fit_loglog_slope, SlopeFit};
use crate::HarnessError;

/// Everything one experiment produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
    pub ledgers: BTreeMap<String, LedgerSummary>,
    pub slopes: Vec<SlopeFit>,
    pub failures: Vec<Failure>,
    /// Regret trace of the first replication of a bandit run.
    pub trace: Option<RegretTrace>,
    pub bandit: Vec<BanditDiagnostics>,
}

impl RunOutput {
    pub fn sidecar(&self, csv: &str) -> Sidecar {
        Sidecar {
            csv: csv.into(),
            config: self.config.clone(),
            ledgers: self.ledgers.clone(),
            slopes: self.slopes.clone(),
            failures: self.failures.clone(),
            bandit: self.bandit.clone(),
        }
    }

    pub fn values(&self, algo: &str, metric: Metric, t: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.algo == algo && r.metric == metric.name() && r.t == t)
            .map(|r| r.value)
            .collect()
    }

    pub fn slope(&self, algo: &str, metric: Metric) -> Option<&SlopeFit> {
        self.slopes.iter().find(|s| s.algo == algo && s.metric == metric.name())
    }
}

/// What one task hands back to the serialized sink.
#[derive(Default)]
struct TaskOutput {
    rows: Vec<ResultRow>,
    ledgers: Vec<(String, PrivacyLedger)>,
    failures: Vec<Failure>,
    trace: Option<RegretTrace>,
    bandit: Option<BanditDiagnostics>,
}

impl TaskOutput {
    fn fail(&mut self, run_id: &str, seed: u64, t: usize, algo: &str, message: String) {
        log::warn!("{run_id} {algo}: {message}");
        self.rows.push(row(run_id, seed, t, algo, Metric::Error, 1.0, 0.0));
        self.failures.push(Failure { run_id: run_id.into(), algo: algo.into(), message });
    }
}

fn row(run_id: &str, seed: u64, t: usize, algo: &str, metric: Metric, value: f64, wall_ms: f64) -> ResultRow {
    ResultRow { run_id: run_id.into(), seed, t, algo: algo.into(), metric: metric.name().into(), value, wall_ms }
}

fn elapsed_ms(start: Instant, record: bool) -> f64 {
    if record {
        (start.elapsed().as_secs_f64() * 1e6).round() / 1e3
    } else {
        0.0
    }
}

/// Task index → stream: replication `rep` at grid point `ti`.
fn task_stream(seed: u64, task: usize) -> RngStream {
    RngStream::new(seed).split(task as u64)
}

/// Frozen measures live on streams far from the task streams.
fn measure_stream(seed: u64, ti: usize) -> RngStream {
    RngStream::new(seed).split(u64::MAX - ti as u64)
}

/// Runs a resolved config on a pool of `threads` workers (0 = one per core).
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<RunOutput, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("threads: {e}")))?;
    pool.install(|| run_in_pool(cfg))
}

fn run_in_pool(cfg: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    let kind = cfg.kind();
    let budget = cfg.privacy.budget()?;
    let tasks: Vec<TaskOutput> = match kind {
        ExperimentKind::Regress | ExperimentKind::Sweep | ExperimentKind::Separation => {
            let grid = EstimationGrid::new(cfg)?;
            let n = cfg.t_grid.len() * cfg.replications;
            (0..n).into_par_iter().map(|task| grid.run_task(cfg, &budget, task)).collect()
        }
        ExperimentKind::SolveInfo => {
            let n = cfg.t_grid.len() * cfg.replications;
            (0..n).into_par_iter().map(|task| solve_task(cfg, &budget, task)).collect()
        }
        ExperimentKind::Bandit => {
            (0..cfg.replications).into_par_iter().map(|rep| bandit_task(cfg, &budget, rep)).collect()
        }
    };
    let mut out = RunOutput {
        config: cfg.clone(),
        rows: Vec::new(),
        ledgers: BTreeMap::new(),
        slopes: Vec::new(),
        failures: Vec::new(),
        trace: None,
        bandit: Vec::new(),
    };
    for task in tasks {
        out.rows.extend(task.rows);
        out.failures.extend(task.failures);
        for (algo, ledger) in task.ledgers {
            out.ledgers.entry(algo).or_insert_with(|| LedgerSummary::new(budget.alpha(), budget.beta())).add(&ledger);
        }
        if out.trace.is_none() {
            out.trace = task.trace;
        }
        out.bandit.extend(task.bandit);
    }
    if cfg.fit_slopes && kind != ExperimentKind::Regress && cfg.t_grid.len() >= 3 {
        let mut pairs: Vec<(String, String)> = out
            .rows
            .iter()
            .filter(|r| r.metric != Metric::Error.name())
            .map(|r| (r.algo.clone(), r.metric.clone()))
            .collect();
        pairs.dedup();
        pairs.sort();
        pairs.dedup();
        for (algo, metric) in pairs {
            match fit_loglog_slope(&out.rows, &algo, &metric) {
                Ok(fit) => out.slopes.push(fit),
                Err(e) => log::warn!("no slope for {algo}/{metric}: {e}"),
            }
        }
        for fit in &out.slopes {
            let id = format!("{}/slope/{}", cfg.name, fit.metric);
            out.rows.push(row(&id, cfg.seed, 0, &fit.algo, Metric::Slope, fit.slope, 0.0));
        }
    }
    Ok(out)
}

/// Per-T state shared by every replication of an estimation sweep.
struct EstimationGrid {
    dists: Vec<CovariateDistribution>,
    /// Exact or frozen measures, built when a metric or estimator needs one.
    measures: Vec<Option<MomentOracle>>,
}

impl EstimationGrid {
    fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let spec = cfg.distribution.as_ref().expect("resolved");
        let alpha = cfg.privacy.alpha;
        let mut dists = Vec::with_capacity(cfg.t_grid.len());
        for &t in &cfg.t_grid {
            if spec.depends_on_t() || dists.is_empty() {
                dists.push(spec.build(t, alpha)?);
            } else {
                dists.push(dists[0].clone());
            }
        }
        let need = cfg.metrics.iter().any(|m| m.needs_moments()) || cfg.estimators.iter().any(|e| e.needs_oracle());
        let measures = if need {
            dists
                .par_iter()
                .enumerate()
                .map(|(ti, d)| oracle_for(d, cfg.mc_samples, &mut measure_stream(cfg.seed, ti)).map(Some))
                .collect::<Result<Vec<_>, _>>()?
        } else {
            vec![None; dists.len()]
        };
        Ok(Self { dists, measures })
    }

    fn run_task(&self, cfg: &ExperimentConfig, budget: &PrivacyBudget, task: usize) -> TaskOutput {
        let (ti, rep) = (task / cfg.replications, task % cfg.replications);
        let t = cfg.t_grid[ti];
        let run_id = format!("{}/T{t}/r{rep}", cfg.name);
        let dist = &self.dists[ti];
        let mut out = TaskOutput::default();
        let rng = task_stream(cfg.seed, task);
        let labels = cfg.labels.mechanism(dist.dim, dist.bound);
        let data = match sample_dataset(dist, &labels, t, &mut rng.split(0)) {
            Ok(d) => d,
            Err(e) => {
                out.fail(&run_id, cfg.seed, t, "data", e.to_string());
                return out;
            }
        };
        let link = cfg.labels.link(dist.bound);
        let mut setup = Setup::new(*budget, cfg.privacy.delta, dist.bound);
        setup.noise = cfg.privacy.noise;
        setup.paper_constants = cfg.privacy.paper_constants;
        setup.admissibility = cfg.privacy.admissibility;
        let moments = self.measures[ti].as_ref().map(|m| Moments::new(dist, m.clone()));
        for (i, spec) in cfg.estimators.iter().enumerate() {
            let algo = spec.name();
            let start = Instant::now();
            let res = run_estimator(spec, &data, &setup, &link, self.measures[ti].as_ref(), &mut rng.split(1 + i as u64));
            let wall = elapsed_ms(start, cfg.record_wall_time);
            let rep_ = match res {
                Ok(r) => r,
                Err(e) => {
                    out.fail(&run_id, cfg.seed, t, algo, e);
                    continue;
                }
            };
            for &metric in &cfg.metrics {
                match evaluate(metric, &rep_, &labels.theta_star, moments.as_ref()) {
                    Ok(v) => out.rows.push(row(&run_id, cfg.seed, t, algo, metric, v, wall)),
                    Err(e) => out.fail(&run_id, cfg.seed, t, algo, e),
                }
            }
            out.ledgers.push((algo.to_string(), rep_.ledger));
        }
        out
    }
}

/// Dispatches one estimator.
pub fn run_estimator(
    spec: &EstimatorSpec,
    data: &Dataset,
    setup: &Setup,
    link: &GlmLink,
    measure: Option<&MomentOracle>,
    rng: &mut RngStream,
) -> Result<EstimateReport, String> {
    let oracle = || measure.ok_or_else(|| format!("{} needs the covariate measure", spec.name()));
    let res = match spec {
        EstimatorSpec::SimpleLdp1d => simple_ldp_1d(data, setup, rng),
        EstimatorSpec::SspOls { noise, lambda } => ssp_ols(data, setup, *noise, *lambda, rng),
        EstimatorSpec::IwLdp => iw_regression_ldp(data, setup, None, rng),
        EstimatorSpec::IwDp { tuning } => iw_regression_dp(data, setup, *tuning, rng),
        EstimatorSpec::IwLdpFixedP => iw_regression_ldp_fixed_p(data, oracle()?, setup, rng),
        EstimatorSpec::IwDpFixedP => iw_regression_dp_fixed_p(data, oracle()?, setup, rng),
        EstimatorSpec::GlmIwLdp => glm_iw_ldp(data, link, setup, None, rng),
        EstimatorSpec::GlmIwDp { tuning } => glm_iw_dp(data, link, setup, *tuning, rng),
        EstimatorSpec::DpSgd { eta } => dp_sgd_improper(data, setup, *eta, rng),
        EstimatorSpec::LdpClippedSgd { epochs, eta, clip_r } => {
            let params = (epochs.is_some() || eta.is_some() || clip_r.is_some()).then(|| {
                let mut p = ClippedSgdParams::default_for(data.len(), &setup.budget, setup.delta);
                p.epochs = epochs.unwrap_or(p.epochs);
                p.eta = eta.unwrap_or(p.eta);
                p.clip_r = clip_r.unwrap_or(p.clip_r);
                p
            });
            ldp_clipped_sgd(data, setup, params, rng)
        }
    };
    res.map_err(|e| e.to_string())
}

fn solve_task(cfg: &ExperimentConfig, budget: &PrivacyBudget, task: usize) -> TaskOutput {
    let (ti, rep) = (task / cfg.replications, task % cfg.replications);
    let t = cfg.t_grid[ti];
    let solve = cfg.solve.as_ref().expect("resolved");
    let algo = match solve.model {
        Model::Ldp => "solve-ldp",
        Model::Dp => "solve-dp",
    };
    let run_id = format!("{}/T{t}/r{rep}", cfg.name);
    let mut out = TaskOutput::default();
    let start = Instant::now();
    let dist = match cfg.distribution.as_ref().expect("resolved").build(t, cfg.privacy.alpha) {
        Ok(d) => d,
        Err(e) => {
            out.fail(&run_id, cfg.seed, t, algo, e.to_string());
            return out;
        }
    };
    // Replications of a continuous law differ only through the frozen sample.
    let oracle = match oracle_for(&dist, cfg.mc_samples, &mut task_stream(cfg.seed, task)) {
        Ok(o) => o,
        Err(e) => {
            out.fail(&run_id, cfg.seed, t, algo, e.to_string());
            return out;
        }
    };
    let tf = t as f64;
    let lambda = solve.lambda.unwrap_or(1.0 / tf.sqrt());
    let gamma = solve.gamma.unwrap_or(1.0 / (budget.alpha() * tf.sqrt()));
    let opts = SolveOptions { max_iters: solve.max_iters, tol: solve.tol, init: None };
    for &metric in &cfg.metrics {
        let value = match metric {
            Metric::Residual => solve_exact(solve.model, &oracle, lambda, gamma, &opts)
                .map(|(w, _)| w.residual.unwrap_or(f64::NAN))
                .map_err(|e| e.to_string()),
            Metric::PopRatio => price_of_privacy(&oracle, t, budget).map_err(|e| e.to_string()),
            other => Err(format!("{} is not a solver metric", other.name())),
        };
        let wall = elapsed_ms(start, cfg.record_wall_time);
        match value {
            Ok(v) => out.rows.push(row(&run_id, cfg.seed, t, algo, metric, v, wall)),
            Err(e) => out.fail(&run_id, cfg.seed, t, algo, e),
        }
    }
    out
}

fn bandit_algo_name(cfg: &ExperimentConfig) -> String {
    let b = cfg.bandit.as_ref().expect("resolved");
    let model = match b.model {
        PrivacyModel::Jdp => "jdp",
        PrivacyModel::Ldp => "ldp",
    };
    match b.algo {
        BanditAlgo::Elimination => format!("elimination-{model}"),
        BanditAlgo::Gap => format!("gap-{model}"),
        BanditAlgo::SquareCb => match b.oracle {
            RegressionOracle::DpSgd => "squarecb-dp-sgd".into(),
            RegressionOracle::LdpClippedSgd => "squarecb-ldp-clipped-sgd".into(),
        },
    }
}

fn bandit_env(cfg: &ExperimentConfig, horizon: usize, rng: &RngStream) -> Result<BanditEnv, String> {
    let b = cfg.bandit.as_ref().expect("resolved");
    if b.algo == BanditAlgo::Gap {
        return gap_instance(b.dim, b.n_actions, b.n_contexts, b.delta_min, &mut rng.split(0)).map_err(|e| e.to_string());
    }
    let features = match &cfg.distribution {
        Some(spec) => spec.build(horizon, cfg.privacy.alpha).map_err(|e| e.to_string())?,
        None => CovariateDistribution::sphere_uniform(b.dim, 1.0).map_err(|e| e.to_string())?,
    };
    let theta = cfg.labels.theta.clone().unwrap_or_else(|| {
        let mut e1 = vec![0.0; b.dim];
        e1[0] = 1.0 / features.bound;
        e1
    });
    BanditEnv::generative(theta, b.n_actions, features).map_err(|e| e.to_string())
}

fn bandit_task(cfg: &ExperimentConfig, budget: &PrivacyBudget, rep: usize) -> TaskOutput {
    let b = cfg.bandit.as_ref().expect("resolved");
    let horizon = *cfg.t_grid.last().expect("resolved");
    let algo = bandit_algo_name(cfg);
    let run_id = format!("{}/r{rep}", cfg.name);
    let mut out = TaskOutput::default();
    let rng = task_stream(cfg.seed, rep);
    let env = match bandit_env(cfg, horizon, &rng) {
        Ok(e) => e,
        Err(e) => {
            out.fail(&run_id, cfg.seed, horizon, &algo, e);
            return out;
        }
    };
    let start = Instant::now();
    let run_rng = rng.split(1);
    let result = match b.algo {
        BanditAlgo::Elimination | BanditAlgo::Gap => {
            let ecfg = EliminationConfig {
                model: b.model,
                delta: b.delta,
                c_lambda: b.c_lambda,
                c_gamma: b.c_gamma,
                max_over: b.max_over,
                ldp_estimator: b.ldp_estimator,
                noise: cfg.privacy.noise,
                paper_constants: cfg.privacy.paper_constants,
                admissibility: cfg.privacy.admissibility,
            };
            let r = if b.algo == BanditAlgo::Gap {
                run_gap_instance(&env, budget, horizon, &ecfg, &run_rng)
            } else {
                run_elimination_bandit(&env, budget, horizon, &ecfg, &run_rng)
            };
            r.map(|run| {
                let failed: Vec<_> = run.epochs.iter().filter_map(|e| e.error.as_ref().map(|m| (e.epoch, m))).collect();
                for (epoch, msg) in &failed {
                    log::info!("{run_id}: epoch {epoch} kept its previous policy: {msg}");
                }
                let diag = BanditDiagnostics {
                    run_id: run_id.clone(),
                    optimal_survived: Some(run.optimal_survived),
                    ci_events_held: Some(run.ci_events_held),
                    spanner_violations: run.spanner_violations,
                    failed_epochs: failed.len(),
                };
                (run.trace, run.ledger, diag)
            })
        }
        BanditAlgo::SquareCb => {
            let scfg = SquareCbConfig {
                oracle: b.oracle,
                delta: b.delta,
                rate_constant: b.rate_constant,
                noise: cfg.privacy.noise,
                admissibility: cfg.privacy.admissibility,
            };
            square_cb(&env, budget, horizon, &scfg, &run_rng).map(|run| {
                let diag = BanditDiagnostics {
                    run_id: run_id.clone(),
                    optimal_survived: None,
                    ci_events_held: None,
                    spanner_violations: 0,
                    failed_epochs: run.epochs.iter().filter(|e| e.error.is_some()).count(),
                };
                (run.trace, run.ledger, diag)
            })
        }
    };
    let wall = elapsed_ms(start, cfg.record_wall_time);
    match result {
        Ok((trace, ledger, diag)) => {
            out.bandit = Some(diag);
            for &t in &cfg.t_grid {
                out.rows.push(row(&run_id, cfg.seed, t, &algo, Metric::Regret, trace.cum_regret_at(t), wall));
            }
            out.ledgers.push((algo, ledger));
            if rep == 0 {
                out.trace = Some(trace);
            }
        }
        Err(e) => out.fail(&run_id, cfg.seed, horizon, &algo, e.to_string()),
    }
    out
}
