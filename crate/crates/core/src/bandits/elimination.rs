use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::env::{BanditEnv, Context, OPTIMAL_TOL};
use super::spanner::{barycentric_spanner, SPANNER_C};
use super::trace::RegretTrace;
use super::{doubling_schedule, BanditError, Result};
use crate::covariates::{Dataset, DatasetMeta};
use crate::estimators::{glm_iw_ldp, iw_regression_dp, iw_regression_ldp, DpTuning, EstimateReport, Setup};
use crate::info_matrix::{Admissibility, SpectralDpParams};
use crate::linalg::{dot, norm, SymMatrix};
use crate::link::GlmLink;
use crate::privacy::{NoiseMode, PrivacyBudget, PrivacyLedger, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PrivacyModel {
    /// Joint DP: the learner sees raw rewards, estimates are private.
    #[default]
    Jdp,
    /// Local DP: every observation is privatized on release.
    Ldp,
}

/// Which set the elimination threshold max f̂ − CI ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MaxOver {
    /// Every action, as in the algorithm as stated.
    #[default]
    AllActions,
    /// Only the actions that survived the previous round.
    Survivors,
}

/// Per-epoch regression in the local model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LdpEstimator {
    /// LDP-SGD on the information-weighted objective.
    #[default]
    Glm,
    /// Privatized weighted statistics and constrained least squares.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EliminationConfig {
    pub model: PrivacyModel,
    /// Failure probability handed to every epoch; 1/T when unset.
    pub delta: Option<f64>,
    /// Constant in λ^(j) = c_λ·√(d_A·log(1/δ)/N^(j)) (central model).
    pub c_lambda: f64,
    /// Constant in γ^(j) = c_γ·(σ√(d + log(1/δ)) + log(1/δ))/(λ^(j)N^(j)).
    pub c_gamma: f64,
    pub max_over: MaxOver,
    pub ldp_estimator: LdpEstimator,
    pub noise: NoiseMode,
    pub paper_constants: bool,
    pub admissibility: Admissibility,
}

impl Default for EliminationConfig {
    fn default() -> Self {
        Self {
            model: PrivacyModel::Jdp,
            delta: None,
            c_lambda: 1.0,
            c_gamma: 1.0,
            max_over: MaxOver::AllActions,
            ldp_estimator: LdpEstimator::Glm,
            noise: NoiseMode::Private,
            paper_constants: false,
            admissibility: Admissibility::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub start: usize,
    pub len: usize,
    pub estimated: bool,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    /// Mean clipped CI of the played actions under the newest estimate in force.
    pub mean_ci: Option<f64>,
    /// Fraction of rounds whose played CI is at least Δ_min/(8·d_A); gap instances only.
    pub clip_fraction: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditRun {
    pub trace: RegretTrace,
    pub epochs: Vec<EpochSummary>,
    pub ledger: PrivacyLedger,
    /// Some optimal arm survived elimination in every round.
    pub optimal_survived: bool,
    /// Every estimate in force covered f* within its CI on every context seen.
    pub ci_events_held: bool,
    pub spanner_checks: usize,
    pub spanner_violations: usize,
}

/// Keeps a ∈ `survivors` with f̂(a) + CI(a) ≥ max_{a'} (f̂(a') − CI(a')).
/// `fhat` and `ci` are indexed by action. Never returns an empty set: if
/// every survivor fails, the one with the largest upper bound is kept.
pub fn eliminate(survivors: &[usize], fhat: &[f64], ci: &[f64], over: MaxOver) -> Vec<usize> {
    let lcb = |a: usize| fhat[a] - ci[a];
    let ucb = |a: usize| fhat[a] + ci[a];
    let threshold = match over {
        MaxOver::AllActions => (0..fhat.len()).map(lcb).fold(f64::NEG_INFINITY, f64::max),
        MaxOver::Survivors => survivors.iter().map(|&a| lcb(a)).fold(f64::NEG_INFINITY, f64::max),
    };
    let kept: Vec<usize> = survivors.iter().copied().filter(|&a| ucb(a) >= threshold).collect();
    if !kept.is_empty() || survivors.is_empty() {
        return kept;
    }
    let best = survivors.iter().copied().max_by(|&a, &b| ucb(a).total_cmp(&ucb(b))).unwrap();
    vec![best]
}

/// f̂(φ) = ν(⟨φ, θ̂⟩) with CI(φ) = min{8λ‖Mφ‖, 2}, M = W or U.
#[derive(Debug, Clone)]
struct Estimate {
    theta: Vec<f64>,
    weight: SymMatrix,
    ci_scale: f64,
}

impl Estimate {
    fn from_report(rep: EstimateReport) -> Result<Self> {
        let weight = rep.weight.ok_or_else(|| BanditError::Config("estimator returned no weight".into()))?;
        Ok(Self { theta: rep.theta_hat, weight: weight.matrix, ci_scale: 8.0 * rep.lambda_used })
    }

    fn fhat(&self, link: &GlmLink, phi: &[f64]) -> f64 {
        link.nu(dot(phi, &self.theta))
    }

    /// The unclipped norm b(φ) = 8λ‖Mφ‖.
    fn width(&self, phi: &[f64]) -> f64 {
        self.ci_scale * norm(&self.weight.mul_vec(phi))
    }

    fn ci(&self, phi: &[f64]) -> f64 {
        self.width(phi).min(2.0)
    }
}

#[derive(Debug, Clone)]
struct Plan {
    spanner: Vec<usize>,
    optimal_ok: bool,
    ci_ok: bool,
    spanner_ok: Option<bool>,
}

fn plan(env: &BanditEnv, ctx: &Context, estimates: &[&Estimate], over: MaxOver) -> Plan {
    let k = env.n_actions;
    let f_star = env.rewards(ctx);
    let best = f_star.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut survivors: Vec<usize> = (0..k).collect();
    let mut ci_ok = true;
    for est in estimates {
        let fhat: Vec<f64> = (0..k).map(|a| est.fhat(&env.link, ctx.phi(a))).collect();
        let ci: Vec<f64> = (0..k).map(|a| est.ci(ctx.phi(a))).collect();
        ci_ok &= (0..k).all(|a| (fhat[a] - f_star[a]).abs() <= ci[a]);
        survivors = eliminate(&survivors, &fhat, &ci, over);
    }
    let optimal_ok = survivors.iter().any(|&a| best - f_star[a] <= OPTIMAL_TOL);
    let feats: Vec<Vec<f64>> = survivors.iter().map(|&a| ctx.phi(a).to_vec()).collect();
    let spanner: Vec<usize> = barycentric_spanner(&feats).into_iter().map(|i| survivors[i]).collect();
    // A norm is subadditive, so a C-spanner gives b(φ_a) ≤ C·Σ_{spanner} b.
    let spanner_ok = estimates.last().map(|est| {
        let worst = survivors.iter().map(|&a| est.width(ctx.phi(a))).fold(0.0, f64::max);
        let sum: f64 = spanner.iter().map(|&a| est.width(ctx.phi(a))).sum();
        worst <= SPANNER_C * sum * (1.0 + 1e-9) + 1e-12
    });
    Plan { spanner, optimal_ok, ci_ok, spanner_ok }
}

fn estimate_epoch(
    env: &BanditEnv,
    data: &Dataset,
    budget: &PrivacyBudget,
    delta: f64,
    d_a: usize,
    cfg: &EliminationConfig,
    rng: &mut RngStream,
) -> std::result::Result<(EstimateReport, f64), String> {
    let mut setup = Setup::new(*budget, delta, env.bound);
    setup.noise = cfg.noise;
    setup.paper_constants = cfg.paper_constants;
    setup.admissibility = cfg.admissibility;
    let n = data.len();
    let rep = match cfg.model {
        PrivacyModel::Jdp => {
            let log_inv = (1.0 / delta).ln();
            let lambda = cfg.c_lambda * (d_a.max(1) as f64 * log_inv / n as f64).sqrt();
            let rate = cfg.c_gamma * (budget.sigma() * (env.dim as f64 + log_inv).sqrt() + log_inv) / (lambda * n as f64);
            let floor = SpectralDpParams::admissible(n / 2, env.dim, env.bound, delta, lambda, budget, cfg.admissibility).gamma;
            // Nudged up so the estimator's own admissibility check never fails by rounding.
            let gamma = rate.max(floor * (1.0 + 1e-12));
            iw_regression_dp(data, &setup, DpTuning::Manual { gamma, lambda, epochs: None }, rng)
        }
        PrivacyModel::Ldp => match cfg.ldp_estimator {
            LdpEstimator::Glm => glm_iw_ldp(data, &env.link, &setup, None, rng),
            LdpEstimator::Linear => iw_regression_ldp(data, &setup, None, rng),
        },
    };
    rep.map(|r| {
        let g = r.gamma_used;
        (r, g)
    })
    .map_err(|e| e.to_string())
}

/// Epoch-based action elimination. In epoch j the policy plays uniformly
/// on a spanner of the actions that survive the estimates of epochs
/// 1..j−1; the epoch's data then feeds one private regression. Estimator
/// failures leave the previous policy in place.
pub fn run_elimination_bandit(
    env: &BanditEnv,
    budget: &PrivacyBudget,
    horizon: usize,
    cfg: &EliminationConfig,
    rng: &RngStream,
) -> Result<BanditRun> {
    env.validate()?;
    if horizon == 0 {
        return Err(BanditError::Config("horizon must be positive".into()));
    }
    let delta = cfg.delta.unwrap_or(1.0 / horizon as f64);
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BanditError::Config(format!("delta must lie in (0, 1), got {delta}")));
    }
    let d_a = env.action_dim();
    let clip_threshold = env.certified_gap().map(|g| g / (8.0 * d_a.max(1) as f64));
    let mut ctx_rng = rng.split(0);
    let mut act_rng = rng.split(1);
    let mut rew_rng = rng.split(2);
    let mut trace = RegretTrace::with_capacity(horizon);
    let mut ledger = PrivacyLedger::new();
    let mut estimates: Vec<Estimate> = Vec::new();
    let mut summaries = Vec::new();
    let (mut optimal_survived, mut ci_events_held) = (true, true);
    let (mut spanner_checks, mut spanner_violations) = (0, 0);
    let mut switches = 0;
    for (j, epoch) in doubling_schedule(horizon).into_iter().enumerate() {
        let in_force: Vec<&Estimate> = estimates.iter().collect();
        let mut cache: HashMap<usize, Plan> = HashMap::new();
        let mut rows = Vec::with_capacity(epoch.len());
        let (mut ci_sum, mut clipped) = (0.0, 0usize);
        for _ in epoch.clone() {
            let ctx = env.sample_context(&mut ctx_rng)?;
            let p = match ctx.index {
                Some(i) => cache.entry(i).or_insert_with(|| plan(env, &ctx, &in_force, cfg.max_over)).clone(),
                None => plan(env, &ctx, &in_force, cfg.max_over),
            };
            optimal_survived &= p.optimal_ok;
            ci_events_held &= p.ci_ok;
            if let Some(ok) = p.spanner_ok {
                spanner_checks += 1;
                spanner_violations += usize::from(!ok);
            }
            let a = p.spanner[act_rng.below(p.spanner.len())];
            let f_star = env.rewards(&ctx);
            let best = f_star.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            trace.push(a, best - f_star[a], j, switches);
            if let Some(est) = in_force.last() {
                let ci = est.ci(ctx.phi(a));
                ci_sum += ci;
                if clip_threshold.is_some_and(|th| ci >= th) {
                    clipped += 1;
                }
            }
            rows.push((ctx.phi(a).to_vec(), env.draw_reward(&ctx, a, &mut rew_rng)));
        }
        let mut summary = EpochSummary {
            epoch: j,
            start: epoch.start,
            len: epoch.len(),
            estimated: false,
            lambda: None,
            gamma: None,
            mean_ci: (!in_force.is_empty()).then(|| ci_sum / epoch.len() as f64),
            clip_fraction: clip_threshold.filter(|_| !in_force.is_empty()).map(|_| clipped as f64 / epoch.len() as f64),
            error: None,
        };
        // Planning never consults the epoch-0 estimate, nor the last one, so
        // neither is computed.
        if j > 0 && epoch.end < horizon {
            let data = Dataset::from_rows(&rows, DatasetMeta::default());
            let mut est_rng = rng.split(3 + j as u64);
            match estimate_epoch(env, &data, budget, delta, d_a, cfg, &mut est_rng) {
                Ok((rep, gamma)) => {
                    ledger.absorb(&rep.ledger, epoch.start);
                    summary.lambda = Some(rep.lambda_used);
                    summary.gamma = Some(gamma);
                    match Estimate::from_report(rep) {
                        Ok(est) => {
                            estimates.push(est);
                            summary.estimated = true;
                            switches += 1;
                        }
                        Err(e) => summary.error = Some(e.to_string()),
                    }
                }
                Err(e) => {
                    log::info!("epoch {j}: estimator failed ({e}); keeping the previous policy");
                    summary.error = Some(e);
                }
            }
        }
        summaries.push(summary);
    }
    Ok(BanditRun {
        trace,
        epochs: summaries,
        ledger,
        optimal_survived,
        ci_events_held,
        spanner_checks,
        spanner_violations,
    })
}

/// Elimination on an environment whose finite context set certifies a gap.
pub fn run_gap_instance(
    env: &BanditEnv,
    budget: &PrivacyBudget,
    horizon: usize,
    cfg: &EliminationConfig,
    rng: &RngStream,
) -> Result<BanditRun> {
    if env.certified_gap().is_none() {
        return Err(BanditError::Env("the environment does not certify a positive gap".into()));
    }
    run_elimination_bandit(env, budget, horizon, cfg, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandits::gap_instance;
    use crate::covariates::CovariateDistribution;
    use proptest::prelude::*;

    fn budget() -> PrivacyBudget {
        PrivacyBudget::new(1.0, 0.05).unwrap()
    }

    fn sphere_env(seed: u64) -> BanditEnv {
        let mut rng = RngStream::new(seed);
        let mut theta: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let n = norm(&theta);
        theta.iter_mut().for_each(|v| *v /= n);
        BanditEnv::generative(theta, 5, CovariateDistribution::sphere_uniform(3, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn wide_intervals_eliminate_nothing() {
        let all = [0, 1, 2];
        assert_eq!(eliminate(&all, &[0.9, -0.5, 0.1], &[2.0, 2.0, 2.0], MaxOver::AllActions), vec![0, 1, 2]);
    }

    #[test]
    fn clear_loser_is_eliminated() {
        assert_eq!(eliminate(&[0, 1], &[0.9, 0.1], &[0.05, 0.05], MaxOver::AllActions), vec![0]);
    }

    #[test]
    fn elimination_never_empties_the_set() {
        // Arm 0 holds the best lower bound but was removed earlier.
        let kept = eliminate(&[1, 2], &[0.9, 0.1, 0.2], &[0.01, 0.01, 0.01], MaxOver::AllActions);
        assert_eq!(kept, vec![2]);
        let kept = eliminate(&[1, 2], &[0.9, 0.1, 0.2], &[0.01, 0.01, 0.01], MaxOver::Survivors);
        assert_eq!(kept, vec![2]);
    }

    proptest! {
        #[test]
        fn valid_intervals_keep_the_optimal_arm(
            f in prop::collection::vec(-1.0f64..1.0, 2..8),
            ci in prop::collection::vec(0.0f64..0.5, 8),
            u in prop::collection::vec(-1.0f64..1.0, 8),
        ) {
            let k = f.len();
            let fhat: Vec<f64> = (0..k).map(|a| f[a] + u[a] * ci[a]).collect();
            let best = (0..k).fold(0, |b, a| if f[a] > f[b] { a } else { b });
            let all: Vec<usize> = (0..k).collect();
            prop_assert!(eliminate(&all, &fhat, &ci[..k], MaxOver::AllActions).contains(&best));
        }
    }

    #[test]
    fn single_action_has_no_regret() {
        let env = BanditEnv::generative(vec![0.5, 0.0], 1, CovariateDistribution::sphere_uniform(2, 1.0).unwrap()).unwrap();
        let run = run_elimination_bandit(&env, &budget(), 200, &EliminationConfig::default(), &RngStream::new(1)).unwrap();
        assert_eq!(run.trace.cum_regret(), 0.0);
        assert!(run.trace.rounds.iter().all(|r| r.action == 0));
    }

    #[test]
    fn jdp_run_invariants_and_ledger() {
        let env = sphere_env(4);
        let t = 1 << 12;
        let run = run_elimination_bandit(&env, &budget(), t, &EliminationConfig::default(), &RngStream::new(9)).unwrap();
        assert_eq!(run.trace.len(), t);
        assert!(run.trace.rounds.windows(2).all(|w| w[1].cum_regret >= w[0].cum_regret));
        let max_switches = (t as f64).log2().ceil() as usize + 1;
        assert!(run.trace.switches() <= max_switches);
        assert!(run.trace.switches() <= run.epochs.len());
        assert_eq!(run.spanner_violations, 0);
        // Epochs use disjoint data, so the per-record total is one budget.
        let (a, b) = run.ledger.totals();
        assert!((a - 1.0).abs() < 1e-12 && b <= 0.05 + 1e-15, "{a} {b}");
        for e in run.epochs.iter().filter(|e| e.estimated) {
            assert!((e.start..e.start + e.len).all(|i| run.ledger.touches(i) >= 1));
        }
    }

    #[test]
    fn zero_noise_jdp_eliminates_without_losing_the_optimum() {
        let env = sphere_env(5);
        let cfg = EliminationConfig { noise: NoiseMode::ZeroNoise, c_lambda: 0.1, ..Default::default() };
        let t = (1 << 15) - 1;
        let run = run_elimination_bandit(&env, &budget(), t, &cfg, &RngStream::new(2)).unwrap();
        assert!(run.optimal_survived && run.ci_events_held);
        let (last, middle) = run.epochs.split_last().unwrap();
        assert!(middle.iter().skip(3).all(|e| e.estimated) && !last.estimated);
        // Early epochs play a spanner blindly; the last one must do clearly better.
        let late = (run.trace.cum_regret() - run.trace.cum_regret_at(last.start)) / last.len as f64;
        let early = run.trace.cum_regret_at(1023) / 1023.0;
        assert!(late < 0.8 * early, "late {late} early {early}");
    }

    #[test]
    fn ldp_run_privatizes_each_record_at_most_once() {
        let env = sphere_env(6);
        let cfg = EliminationConfig { model: PrivacyModel::Ldp, ..Default::default() };
        let run = run_elimination_bandit(&env, &budget(), 1 << 11, &cfg, &RngStream::new(3)).unwrap();
        assert!(run.epochs.iter().any(|e| e.error.is_some()));
        let estimated: Vec<_> = run.epochs.iter().filter(|e| e.estimated).collect();
        assert!(!estimated.is_empty());
        for e in estimated {
            // Records left over by the spectral batches are never released.
            assert!((e.start..e.start + e.len).all(|i| run.ledger.touches(i) <= 1));
            let second_half = e.start + e.len / 2..e.start + e.len;
            assert!(second_half.into_iter().all(|i| run.ledger.touches(i) == 1));
        }
        let (a, _) = run.ledger.totals();
        assert!((a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dominant_arm_regret_flattens() {
        // Arm 0 has f* = 1 and the others f* = −1 in every context.
        let contexts = vec![vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![-1.0, 0.0]]];
        let env = BanditEnv::finite(vec![1.0, 0.0], contexts, vec![1.0]).unwrap();
        assert_eq!(env.certified_gap(), Some(2.0));
        let run = run_gap_instance(&env, &budget(), 1 << 12, &EliminationConfig::default(), &RngStream::new(1)).unwrap();
        let late = run.trace.cum_regret() - run.trace.cum_regret_at(1 << 11);
        assert!(late == 0.0, "regret in the last epoch {late}");
    }

    #[test]
    fn gap_instance_reports_clip_fractions() {
        let env = gap_instance(2, 3, 8, 0.3, &mut RngStream::new(2)).unwrap();
        let run = run_gap_instance(&env, &budget(), 1 << 11, &EliminationConfig::default(), &RngStream::new(4)).unwrap();
        let fr: Vec<f64> = run.epochs.iter().filter_map(|e| e.clip_fraction).collect();
        assert!(!fr.is_empty() && fr.iter().all(|f| (0.0..=1.0).contains(f)));
        let sphere = sphere_env(1);
        assert!(run_gap_instance(&sphere, &budget(), 10, &EliminationConfig::default(), &RngStream::new(4)).is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        let env = sphere_env(8);
        let go = || run_elimination_bandit(&env, &budget(), 700, &EliminationConfig::default(), &RngStream::new(5)).unwrap();
        assert_eq!(go(), go());
    }
}
