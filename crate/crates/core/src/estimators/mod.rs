//! Private regression estimators and the small solvers they share.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covariates::CovariateError;
use crate::info_matrix::{Admissibility, InfoError, InfoWeight};
use crate::linalg::{norm, singular_values, Eigen, LinalgError};
use crate::privacy::{NoiseMode, PrivacyBudget, PrivacyError, PrivacyLedger};

mod glm;
mod linear;
mod sgd;

pub use glm::{dp_erm, glm_iw_dp, glm_iw_ldp, ldp_sgd, ErmDiagnostics, GlmDpTuning};
pub use linear::{
    iw_regression_dp, iw_regression_dp_fixed_p, iw_regression_ldp, iw_regression_ldp_fixed_p, ldp_weighted_stage,
    dp_weighted_stage, simple_ldp_1d, ssp_ols, DpTuning, SspNoise,
};
pub use sgd::{
    clipped_sgd_admissible, default_clipped_epochs, default_dp_sgd_eta, dp_sgd_average, dp_sgd_improper, ldp_clipped_sgd,
    max_admissible_epochs, ClippedSgdParams,
};

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error(transparent)]
    Info(#[from] InfoError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Covariate(#[from] CovariateError),
    #[error("singular values of (Psi + lambda I) U lie in [{lo}, {hi}], outside [1/4, 4]")]
    Stability { lo: f64, hi: f64 },
    #[error("Psi + lambda I is numerically singular")]
    Singular,
    #[error("solver residual {residual} exceeds the required {required}")]
    InexactWeight { residual: f64, required: f64 },
    #[error("clipped SGD with {epochs} epochs violates the step-size condition; largest admissible K is {max_epochs}")]
    InadmissibleEpochs { epochs: usize, max_epochs: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, EstimateError>;

/// Settings shared by every estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    pub budget: PrivacyBudget,
    /// Failure probability δ of the high-probability guarantees.
    pub delta: f64,
    /// Covariate norm bound B.
    pub bound: f64,
    pub noise: NoiseMode,
    /// Use the unsplit per-channel noise constants even where they
    /// overspend the budget; the ledger then reports the real cost.
    pub paper_constants: bool,
    pub admissibility: Admissibility,
    /// Known misspecification level ε_apx, reported as a √d·ε_apx error term.
    pub eps_apx: f64,
}

impl Setup {
    pub fn new(budget: PrivacyBudget, delta: f64, bound: f64) -> Self {
        Self {
            budget,
            delta,
            bound,
            noise: NoiseMode::Private,
            paper_constants: false,
            admissibility: Admissibility::default(),
            eps_apx: 0.0,
        }
    }

    pub fn zero_noise(mut self) -> Self {
        self.noise = NoiseMode::ZeroNoise;
        self
    }

    fn check(&self, data_dim: usize, t: usize, min_t: usize) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(EstimateError::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.bound > 0.0) {
            return Err(EstimateError::Config(format!("bound must be positive, got {}", self.bound)));
        }
        if data_dim == 0 {
            return Err(EstimateError::Config("empty dataset".into()));
        }
        if t < min_t {
            return Err(EstimateError::Config(format!("need at least {min_t} samples, got {t}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub theta_hat: Vec<f64>,
    pub weight: Option<InfoWeight>,
    pub lambda_used: f64,
    pub gamma_used: f64,
    /// c in CI(x) = c·‖weight·x‖.
    pub ci_scale: Option<f64>,
    pub ledger: PrivacyLedger,
    pub diagnostics: BTreeMap<String, f64>,
}

impl EstimateReport {
    fn new(theta_hat: Vec<f64>, ledger: PrivacyLedger) -> Self {
        Self {
            theta_hat,
            weight: None,
            lambda_used: 0.0,
            gamma_used: 0.0,
            ci_scale: None,
            ledger,
            diagnostics: BTreeMap::new(),
        }
    }

    fn diag(&mut self, key: &str, v: f64) {
        self.diagnostics.insert(key.to_string(), v);
    }

    /// Confidence radius c·‖weight·x‖, when the estimator provides one.
    pub fn ci(&self, x: &[f64]) -> Option<f64> {
        match (&self.weight, self.ci_scale) {
            (Some(w), Some(c)) => Some(w.ci(x, c)),
            _ => None,
        }
    }

    /// ‖weight⁻¹(θ̂ − θ)‖.
    pub fn weighted_error(&self, theta: &[f64]) -> Result<f64> {
        let w = self.weight.as_ref().ok_or_else(|| EstimateError::Config("estimate carries no weight".into()))?;
        let diff: Vec<f64> = self.theta_hat.iter().zip(theta).map(|(a, b)| a - b).collect();
        Ok(norm(&w.matrix.solve_spd(&diff)?))
    }
}

/// Result of the ball-constrained least squares solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ClsSolution {
    pub theta: Vec<f64>,
    pub iterations: usize,
    /// Norm of the gradient mapping at `theta`; zero for interior solutions.
    pub gradient_mapping: f64,
    pub converged: bool,
}

pub const CLS_TOL: f64 = 1e-10;
pub const CLS_MAX_ITERS: usize = 500_000;

/// argmin over ‖θ‖ ≤ r of ‖Aθ − b‖: the unconstrained solution when it is
/// feasible, otherwise projected gradient descent with step 1/(2 s_max²)
/// until the gradient mapping falls below [`CLS_TOL`].
pub fn constrained_least_squares(a: &DMatrix<f64>, b: &[f64], r: f64) -> Result<ClsSolution> {
    let d = b.len();
    let bv = nalgebra::DVector::from_column_slice(b);
    if let Some(x) = a.clone().lu().solve(&bv) {
        let x: Vec<f64> = x.iter().copied().collect();
        if x.iter().all(|v| v.is_finite()) && norm(&x) <= r {
            return Ok(ClsSolution { theta: x, iterations: 0, gradient_mapping: 0.0, converged: true });
        }
    }
    let s_max = singular_values(a)?[0];
    if !(s_max > 0.0) {
        return Ok(ClsSolution { theta: vec![0.0; d], iterations: 0, gradient_mapping: 0.0, converged: true });
    }
    let eta = 1.0 / (2.0 * s_max * s_max);
    let gram = a.transpose() * a;
    let atb = a.transpose() * &bv;
    let mut theta = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut next = vec![0.0; d];
    for it in 1..=CLS_MAX_ITERS {
        for i in 0..d {
            grad[i] = (0..d).map(|j| gram[(i, j)] * theta[j]).sum::<f64>() - atb[i];
        }
        for i in 0..d {
            next[i] = theta[i] - eta * grad[i];
        }
        let n = norm(&next);
        if n > r {
            next.iter_mut().for_each(|v| *v *= r / n);
        }
        let gm = theta.iter().zip(&next).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / eta;
        std::mem::swap(&mut theta, &mut next);
        if gm <= CLS_TOL {
            return Ok(ClsSolution { theta, iterations: it, gradient_mapping: gm, converged: true });
        }
        if it == CLS_MAX_ITERS {
            log::warn!("constrained least squares stopped at gradient mapping {gm}");
            return Ok(ClsSolution { theta, iterations: it, gradient_mapping: gm, converged: false });
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Euclidean projection onto the ellipsoid {z : ‖Mz‖ ≤ 1}, given the
/// eigen-decomposition of the symmetric positive-definite M.
pub fn project_ellipsoid(eig: &Eigen, v: &[f64]) -> Vec<f64> {
    let d = v.len();
    let q = &eig.vectors;
    let vh: Vec<f64> = (0..d).map(|c| (0..d).map(|r| q[(r, c)] * v[r]).sum()).collect();
    let l2: Vec<f64> = eig.values.iter().map(|l| l * l).collect();
    let phi = |mu: f64| -> f64 { vh.iter().zip(&l2).map(|(x, s)| s * x * x / ((1.0 + mu * s) * (1.0 + mu * s))).sum() };
    if phi(0.0) <= 1.0 {
        return v.to_vec();
    }
    let mut hi = 1.0;
    while phi(hi) > 1.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let zh: Vec<f64> = vh.iter().zip(&l2).map(|(x, s)| x / (1.0 + hi * s)).collect();
    (0..d).map(|r| (0..d).map(|c| q[(r, c)] * zh[c]).sum()).collect()
}

/// Per-statistic budget when two channels touch every record: α/2 each, or
/// the full α with the published constants (composing to 2α).
fn split_budget(setup: &Setup) -> PrivacyBudget {
    if setup.paper_constants {
        setup.budget
    } else {
        setup.budget.share(2)
    }
}

/// `out += w·(Mx) xᵀ`.
fn add_weighted_design(out: &mut DMatrix<f64>, mx: &[f64], x: &[f64], w: f64) {
    let d = x.len();
    for j in 0..d {
        let s = w * x[j];
        if s == 0.0 {
            continue;
        }
        for i in 0..d {
            out[(i, j)] += mx[i] * s;
        }
    }
}
