//! Dimension-free estimators: central DP-SGD with output perturbation and
//! locally private clipped batch gradient descent.

use serde::{Deserialize, Serialize};

use super::{EstimateError, EstimateReport, Result, Setup};
use crate::covariates::Dataset;
use crate::linalg::{axpy, clip, dot, project_ball_in_place};
use crate::privacy::{PrivacyBudget, Privatizer, RngStream};

/// η = min{1/(2√T), (σ²·T·log(1/δ))^{−1/3}}.
pub fn default_dp_sgd_eta(t: usize, budget: &PrivacyBudget, delta: f64) -> f64 {
    let tf = t as f64;
    let s2 = budget.sigma().powi(2);
    (0.5 / tf.sqrt()).min((1.0 / (s2 * tf * (1.0 / delta).ln())).cbrt())
}

/// Average of the projected SGD iterates θ_1 = 0, …, θ_T on the square loss.
pub fn dp_sgd_average(data: &Dataset, eta: f64) -> Vec<f64> {
    let (t, d) = (data.len(), data.dim);
    let mut theta = vec![0.0; d];
    let mut avg = vec![0.0; d];
    for i in 0..t {
        axpy(1.0 / t as f64, &theta, &mut avg);
        let x = data.x(i);
        let r = dot(x, &theta) - data.y(i);
        axpy(-eta * r, x, &mut theta);
        project_ball_in_place(&mut theta, 1.0);
    }
    avg
}

/// Single-pass projected SGD on the unit ball, averaged and released through
/// one Gaussian channel with half-diameter 2η. Needs ‖x‖ ≤ 1.
pub fn dp_sgd_improper(data: &Dataset, setup: &Setup, eta: Option<f64>, rng: &mut RngStream) -> Result<EstimateReport> {
    setup.check(data.dim, data.len(), 1)?;
    if setup.bound > 1.0 {
        return Err(EstimateError::Config(format!("DP-SGD needs covariates in the unit ball, bound is {}", setup.bound)));
    }
    let t = data.len();
    let eta = eta.unwrap_or_else(|| default_dp_sgd_eta(t, &setup.budget, setup.delta));
    if !(eta > 0.0 && eta <= 0.5) {
        return Err(EstimateError::Config(format!("eta must lie in (0, 1/2], got {eta}")));
    }
    let mut theta = dp_sgd_average(data, eta);
    let mut priv_ = Privatizer::new(setup.noise);
    priv_.gauss("dp-sgd-output", &mut theta, 2.0 * eta, &setup.budget, 0..t, rng)?;
    let mut rep = EstimateReport::new(theta, priv_.ledger);
    rep.diag("eta", eta);
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClippedSgdParams {
    pub epochs: usize,
    pub eta: f64,
    /// Clipping radius R for ⟨θ, x⟩.
    pub clip_r: f64,
}

/// K = max{1, round(¼·(T/(σ²·log(T/δ)))^{1/3})}.
pub fn default_clipped_epochs(t: usize, budget: &PrivacyBudget, delta: f64) -> usize {
    let tf = t as f64;
    let k = 0.25 * (tf / (budget.sigma().powi(2) * (tf / delta).ln())).cbrt();
    (k.round() as usize).max(1)
}

impl ClippedSgdParams {
    pub fn default_for(t: usize, budget: &PrivacyBudget, delta: f64) -> Self {
        Self { epochs: default_clipped_epochs(t, budget, delta), eta: 1.0, clip_r: 2.0 }
    }
}

/// R ≥ 1 + η(B_δ + 4ε_N) with B_δ = 6(R+1)q, ε_N = (R+1)q and
/// q = √(K·log(K/δ)/N), N = ⌊T/K⌋.
pub fn clipped_sgd_admissible(params: &ClippedSgdParams, t: usize, delta: f64) -> bool {
    let k = params.epochs;
    if k == 0 || t < k {
        return false;
    }
    let n = (t / k) as f64;
    let kf = k as f64;
    let q = (kf * (kf / delta).ln().max(0.0) / n).sqrt();
    let r1 = params.clip_r + 1.0;
    params.clip_r >= 1.0 + params.eta * (6.0 * r1 * q + 4.0 * r1 * q)
}

/// Largest admissible K for the given η and R, or 0 when none is.
pub fn max_admissible_epochs(t: usize, delta: f64, eta: f64, clip_r: f64) -> usize {
    let mut best = 0;
    for k in 1..=t {
        if clipped_sgd_admissible(&ClippedSgdParams { epochs: k, eta, clip_r }, t, delta) {
            best = k;
        } else if best > 0 {
            break;
        }
    }
    best
}

/// K epochs of batch gradient descent on the square loss with the
/// prediction clipped to [−R, R]; every sample's gradient is privatized once
/// (half-diameter (R+1)·B) and the update is not projected.
pub fn ldp_clipped_sgd(
    data: &Dataset,
    setup: &Setup,
    params: Option<ClippedSgdParams>,
    rng: &mut RngStream,
) -> Result<EstimateReport> {
    setup.check(data.dim, data.len(), 1)?;
    let (t, d) = (data.len(), data.dim);
    let p = params.unwrap_or_else(|| ClippedSgdParams::default_for(t, &setup.budget, setup.delta));
    if p.epochs == 0 || p.epochs > t {
        return Err(EstimateError::Config(format!("need 1 <= K <= T, got K = {}", p.epochs)));
    }
    if !clipped_sgd_admissible(&p, t, setup.delta) {
        let max_epochs = max_admissible_epochs(t, setup.delta, p.eta, p.clip_r);
        if setup.admissibility.enforce {
            return Err(EstimateError::InadmissibleEpochs { epochs: p.epochs, max_epochs });
        }
        log::warn!("clipped SGD with K = {} is inadmissible (largest admissible K is {max_epochs})", p.epochs);
    }
    let n = t / p.epochs;
    let mut priv_ = Privatizer::new(setup.noise);
    let delta_g = (p.clip_r + 1.0) * setup.bound;
    let mut theta = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut batch = vec![0.0; d];
    let mut clipped = 0usize;
    for k in 0..p.epochs {
        batch.iter_mut().for_each(|v| *v = 0.0);
        for i in k * n..(k + 1) * n {
            let x = data.x(i);
            let pred = dot(&theta, x);
            if pred.abs() > p.clip_r {
                clipped += 1;
            }
            let r = clip(pred, p.clip_r) - data.y(i);
            g.iter_mut().zip(x).for_each(|(o, v)| *o = r * v);
            priv_.gauss("ldp-clipped-sgd", &mut g, delta_g, &setup.budget, i..i + 1, rng)?;
            axpy(1.0, &g, &mut batch);
        }
        axpy(-p.eta / n as f64, &batch, &mut theta);
    }
    let mut rep = EstimateReport::new(theta, priv_.ledger);
    rep.diag("epochs", p.epochs as f64);
    rep.diag("batch_size", n as f64);
    rep.diag("clip_fraction", clipped as f64 / (p.epochs * n) as f64);
    Ok(rep)
}
