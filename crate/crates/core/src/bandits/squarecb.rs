use serde::{Deserialize, Serialize};

use super::env::BanditEnv;
use super::trace::RegretTrace;
use super::{doubling_schedule, BanditError, Result};
use crate::covariates::{Dataset, DatasetMeta};
use crate::estimators::{dp_sgd_improper, ldp_clipped_sgd, ClippedSgdParams, Setup};
use crate::info_matrix::Admissibility;
use crate::linalg::dot;
use crate::privacy::{NoiseMode, PrivacyBudget, PrivacyLedger, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RegressionOracle {
    /// Central DP-SGD with output perturbation.
    #[default]
    DpSgd,
    /// Locally private clipped batch gradient descent.
    LdpClippedSgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareCbConfig {
    pub oracle: RegressionOracle,
    /// Overall failure probability; 1/T when unset.
    pub delta: Option<f64>,
    /// Multiplies the oracle's analytic error rate.
    pub rate_constant: f64,
    pub noise: NoiseMode,
    pub admissibility: Admissibility,
}

impl Default for SquareCbConfig {
    fn default() -> Self {
        Self {
            oracle: RegressionOracle::DpSgd,
            delta: None,
            rate_constant: 1.0,
            noise: NoiseMode::Private,
            admissibility: Admissibility::default(),
        }
    }
}

/// Analytic L2 error rate of the oracle after `n` samples at confidence δ:
/// DP-SGD (log n·log(1/δ)/n)^{1/4} + (σ·log(1/δ)/n)^{1/3};
/// clipped LDP-SGD (σ²·log(n/δ)/n)^{1/6}. log n is floored at 1 so the
/// rate is non-increasing from n = 1.
pub fn oracle_rate(oracle: RegressionOracle, n: usize, delta: f64, sigma: f64) -> f64 {
    let nf = n.max(1) as f64;
    let log_inv = (1.0 / delta).ln();
    match oracle {
        RegressionOracle::DpSgd => (nf.ln().max(1.0) * log_inv / nf).powf(0.25) + (sigma * log_inv / nf).cbrt(),
        RegressionOracle::LdpClippedSgd => (sigma * sigma * (nf / delta).ln() / nf).powf(1.0 / 6.0),
    }
}

/// Inverse-gap weighting: p(a) = 1/(|A| + γ(f̂(â) − f̂(a))) off the greedy
/// arm â (the first maximizer), the remainder on â.
pub fn igw_probabilities(fhat: &[f64], gamma: f64) -> Vec<f64> {
    let k = fhat.len();
    let greedy = (0..k).fold(0, |b, a| if fhat[a] > fhat[b] { a } else { b });
    let mut p: Vec<f64> = fhat.iter().map(|f| 1.0 / (k as f64 + gamma * (fhat[greedy] - f))).collect();
    p[greedy] = 0.0;
    p[greedy] = 1.0 - p.iter().sum::<f64>();
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareCbEpoch {
    pub epoch: usize,
    pub start: usize,
    pub len: usize,
    pub gamma: f64,
    pub fitted: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareCbRun {
    pub trace: RegretTrace,
    pub epochs: Vec<SquareCbEpoch>,
    pub ledger: PrivacyLedger,
}

/// SquareCB over the doubling schedule: inverse-gap-weighted play on the
/// current linear fit, refit by the private oracle after every epoch.
pub fn square_cb(
    env: &BanditEnv,
    budget: &PrivacyBudget,
    horizon: usize,
    cfg: &SquareCbConfig,
    rng: &RngStream,
) -> Result<SquareCbRun> {
    env.validate()?;
    if horizon == 0 {
        return Err(BanditError::Config("horizon must be positive".into()));
    }
    let delta = cfg.delta.unwrap_or(1.0 / horizon as f64);
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BanditError::Config(format!("delta must lie in (0, 1), got {delta}")));
    }
    let schedule = doubling_schedule(horizon);
    let big_j = schedule.len() as f64;
    let delta_epoch = delta / (2.0 * big_j * big_j);
    let k = env.n_actions;
    let mut setup = Setup::new(*budget, delta_epoch, env.bound);
    setup.noise = cfg.noise;
    setup.admissibility = cfg.admissibility;
    let mut ctx_rng = rng.split(0);
    let mut act_rng = rng.split(1);
    let mut rew_rng = rng.split(2);
    let mut trace = RegretTrace::with_capacity(horizon);
    let mut ledger = PrivacyLedger::new();
    let mut theta = vec![0.0; env.dim];
    let mut epochs = Vec::new();
    let mut switches = 0;
    let mut cdf = vec![0.0; k];
    for (j, epoch) in schedule.iter().enumerate() {
        let gamma = match j {
            0 => 1.0,
            _ => {
                let prev = schedule[j - 1].len();
                (k as f64).sqrt() / (cfg.rate_constant * oracle_rate(cfg.oracle, prev, delta_epoch, budget.sigma()))
            }
        };
        let mut rows = Vec::with_capacity(epoch.len());
        for _ in epoch.clone() {
            let ctx = env.sample_context(&mut ctx_rng)?;
            let fhat: Vec<f64> = ctx.features.iter().map(|phi| dot(phi, &theta)).collect();
            let p = igw_probabilities(&fhat, gamma);
            let mut acc = 0.0;
            for (c, pa) in cdf.iter_mut().zip(&p) {
                acc += pa;
                *c = acc;
            }
            let a = act_rng.categorical(&cdf);
            let f_star = env.rewards(&ctx);
            let best = f_star.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            trace.push(a, best - f_star[a], j, switches);
            rows.push((ctx.phi(a).to_vec(), env.draw_reward(&ctx, a, &mut rew_rng)));
        }
        if epoch.end == horizon {
            // Nothing is played after the last epoch, so it is not fitted.
            epochs.push(SquareCbEpoch { epoch: j, start: epoch.start, len: epoch.len(), gamma, fitted: false, error: None });
            break;
        }
        let data = Dataset::from_rows(&rows, DatasetMeta::default());
        let mut fit_rng = rng.split(3 + j as u64);
        let fit = match cfg.oracle {
            RegressionOracle::DpSgd => dp_sgd_improper(&data, &setup, None, &mut fit_rng),
            RegressionOracle::LdpClippedSgd => {
                let params = ClippedSgdParams::default_for(data.len(), budget, delta_epoch);
                ldp_clipped_sgd(&data, &setup, Some(params), &mut fit_rng)
            }
        };
        let mut summary = SquareCbEpoch { epoch: j, start: epoch.start, len: epoch.len(), gamma, fitted: false, error: None };
        match fit {
            Ok(rep) => {
                ledger.absorb(&rep.ledger, epoch.start);
                theta = rep.theta_hat;
                summary.fitted = true;
                switches += 1;
            }
            Err(e) => {
                log::info!("epoch {j}: regression oracle failed ({e}); keeping the previous fit");
                summary.error = Some(e.to_string());
            }
        }
        epochs.push(summary);
    }
    Ok(SquareCbRun { trace, epochs, ledger })
}
