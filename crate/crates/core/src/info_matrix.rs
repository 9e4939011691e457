//! Information matrices U* and W*: the operators F^LDP and F^DP, the exact
//! spectral fixed-point solver, and its private batched variants.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covariates::{Dataset, MomentOracle};
use crate::linalg::{norm, LinalgError, SymMatrix, EIGEN_FLOOR};
use crate::privacy::{PrivacyBudget, PrivacyError, Privatizer, RngStream};

#[derive(Debug, Error)]
pub enum InfoError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error("weight matrix is not positive definite (min eigenvalue {0})")]
    NotPositiveDefinite(f64),
    #[error("dimension mismatch: weight is {weight}x{weight}, data has dimension {data}")]
    Dimension { weight: usize, data: usize },
    #[error("spectral iteration stalled at residual {residual} after {iters} iterations")]
    NoConvergence { residual: f64, iters: usize, trace: SpectralTrace },
    #[error("lambda = {lambda} is below the admissible minimum {min_lambda}")]
    InadmissibleLambda { lambda: f64, min_lambda: f64 },
    #[error("gamma*lambda = {product} is below the admissible minimum {min_product}")]
    InadmissibleGammaLambda { product: f64, min_product: f64 },
    #[error("{epochs} epochs need at least {epochs} samples, got {samples}")]
    TooFewSamples { epochs: usize, samples: usize },
    #[error("invalid parameter: {0}")]
    BadParam(String),
}

pub type Result<T> = std::result::Result<T, InfoError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Ldp,
    Dp,
}

/// A weight matrix U (or W) with the regularizers it was solved for.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfoWeight {
    pub matrix: SymMatrix,
    pub lambda: f64,
    /// Zero in the local model.
    pub gamma: f64,
    pub model: Model,
    /// ‖F(matrix) − I‖_op, when it has been evaluated against a measure.
    pub residual: Option<f64>,
    /// (λ_min, λ_max) of F(matrix), when evaluated.
    pub f_eig: Option<(f64, f64)>,
    pub min_eig: f64,
    pub max_eig: f64,
}

impl InfoWeight {
    pub fn new(matrix: SymMatrix, model: Model, lambda: f64, gamma: f64) -> Result<Self> {
        let vals = matrix.eigenvalues()?;
        let (max_eig, min_eig) = (vals[0], vals[vals.len() - 1]);
        if !(min_eig > 0.0) {
            return Err(InfoError::NotPositiveDefinite(min_eig));
        }
        Ok(Self { matrix, lambda, gamma, model, residual: None, f_eig: None, min_eig, max_eig })
    }

    /// Applies the model's operator under `oracle` and stores the diagnostics.
    pub fn evaluate(&mut self, oracle: &MomentOracle) -> Result<SymMatrix> {
        let f = match self.model {
            Model::Ldp => apply_f_ldp(&self.matrix, self.lambda, oracle)?,
            Model::Dp => apply_f_dp(&self.matrix, self.gamma, self.lambda, oracle)?,
        };
        let step = SpectralStep::of(&f)?;
        self.residual = Some(step.residual);
        self.f_eig = Some((step.lambda_min, step.lambda_max));
        Ok(f)
    }

    /// ½I ⪯ F ⪯ 2I under `oracle`.
    pub fn sandwich_holds(&mut self, oracle: &MomentOracle) -> Result<bool> {
        self.evaluate(oracle)?;
        let (lo, hi) = self.f_eig.expect("set by evaluate");
        Ok(lo >= 0.5 && hi <= 2.0)
    }

    /// `c·‖matrix·x‖`.
    pub fn ci(&self, x: &[f64], c: f64) -> f64 {
        c * norm(&self.matrix.mul_vec(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralStep {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// ‖F − I‖_op.
    pub residual: f64,
}

impl SpectralStep {
    pub fn of(f: &SymMatrix) -> Result<Self> {
        let v = f.eigenvalues()?;
        let (lambda_max, lambda_min) = (v[0], v[v.len() - 1]);
        Ok(Self { lambda_min, lambda_max, residual: (lambda_max - 1.0).abs().max((1.0 - lambda_min).abs()) })
    }
}

/// Spectral diagnostics of F^(k), one entry per iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectralTrace {
    pub steps: Vec<SpectralStep>,
}

impl SpectralTrace {
    /// Checks λ_min(F^(k+1)) ≥ g(λ_min(F^(k))) − tol and the mirrored upper
    /// bound, with g = √· (LDP) or min{√·, 1} / max{√·, 1} (DP).
    pub fn contracts(&self, model: Model, tol: f64) -> bool {
        self.steps.windows(2).all(|w| {
            let (a, b) = (w[0], w[1]);
            let (lo, hi) = match model {
                Model::Ldp => (a.lambda_min.max(0.0).sqrt(), a.lambda_max.sqrt()),
                Model::Dp => (a.lambda_min.max(0.0).sqrt().min(1.0), a.lambda_max.sqrt().max(1.0)),
            };
            b.lambda_min >= lo - tol && b.lambda_max <= hi + tol
        })
    }

    pub fn last(&self) -> Option<&SpectralStep> {
        self.steps.last()
    }
}

fn check_pd(u: &SymMatrix) -> Result<()> {
    let m = u.min_eig()?;
    if !(m > 0.0) {
        return Err(InfoError::NotPositiveDefinite(m));
    }
    Ok(())
}

/// F^LDP(U) = E[UxxᵀU/‖Ux‖·1{x≠0}] + λU.
pub fn apply_f_ldp(u: &SymMatrix, lambda: f64, oracle: &MomentOracle) -> Result<SymMatrix> {
    check_pd(u)?;
    Ok(oracle.ldp_moment(u).add(&u.scale(lambda)))
}

/// F^DP(W) = E[WxxᵀW/(1+γ‖Wx‖)] + λW.
pub fn apply_f_dp(w: &SymMatrix, gamma: f64, lambda: f64, oracle: &MomentOracle) -> Result<SymMatrix> {
    check_pd(w)?;
    Ok(oracle.dp_moment(w, gamma).add(&w.scale(lambda)))
}

/// U ← sym(F^{−1/2}U) = (U F^{−1} U)^{1/2}.
pub fn spectral_update(u: &SymMatrix, f: &SymMatrix) -> Result<SymMatrix> {
    let finv = f.power(-1.0, EIGEN_FLOOR)?;
    Ok(u.congruence(&finv).power(0.5, 0.0)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub tol: f64,
    /// Starting point; the identity when absent.
    pub init: Option<SymMatrix>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { max_iters: 60, tol: 1e-9, init: None }
    }
}

fn apply(model: Model, u: &SymMatrix, gamma: f64, lambda: f64, oracle: &MomentOracle) -> Result<SymMatrix> {
    match model {
        Model::Ldp => apply_f_ldp(u, lambda, oracle),
        Model::Dp => apply_f_dp(u, gamma, lambda, oracle),
    }
}

/// Solves F(U) = I by the exact spectral iteration. `gamma` is ignored for
/// the local model.
pub fn solve_exact(
    model: Model,
    oracle: &MomentOracle,
    lambda: f64,
    gamma: f64,
    opts: &SolveOptions,
) -> Result<(InfoWeight, SpectralTrace)> {
    if !(lambda > 0.0) {
        return Err(InfoError::BadParam(format!("lambda must be positive, got {lambda}")));
    }
    if !(gamma >= 0.0) {
        return Err(InfoError::BadParam(format!("gamma must be non-negative, got {gamma}")));
    }
    let gamma = if model == Model::Ldp { 0.0 } else { gamma };
    let mut u = opts.init.clone().unwrap_or_else(|| SymMatrix::identity(oracle.dim));
    if u.dim() != oracle.dim {
        return Err(InfoError::Dimension { weight: u.dim(), data: oracle.dim });
    }
    let mut trace = SpectralTrace::default();
    for _ in 0..=opts.max_iters {
        let f = apply(model, &u, gamma, lambda, oracle)?;
        let step = SpectralStep::of(&f)?;
        trace.steps.push(step);
        if step.residual <= opts.tol {
            let mut w = InfoWeight::new(u, model, lambda, gamma)?;
            w.residual = Some(step.residual);
            w.f_eig = Some((step.lambda_min, step.lambda_max));
            return Ok((w, trace));
        }
        if trace.steps.len() > opts.max_iters {
            break;
        }
        u = spectral_update(&u, &f)?;
    }
    let residual = trace.last().map_or(f64::INFINITY, |s| s.residual);
    Err(InfoError::NoConvergence { residual, iters: opts.max_iters, trace })
}

/// Runs the exact iteration for a fixed schedule of regularizers, one step
/// per entry, returning the final matrix (before evaluation) and the trace.
pub fn exact_schedule(
    model: Model,
    oracle: &MomentOracle,
    lambdas: &[f64],
    gamma: f64,
) -> Result<(SymMatrix, SpectralTrace)> {
    let mut u = SymMatrix::identity(oracle.dim);
    let mut trace = SpectralTrace::default();
    for &l in lambdas {
        let f = apply(model, &u, gamma, l, oracle)?;
        trace.steps.push(SpectralStep::of(&f)?);
        u = spectral_update(&u, &f)?;
    }
    Ok((u, trace))
}

/// Constant C of the admissibility preconditions, and whether a violation
/// is an error or a warning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub c: f64,
    pub enforce: bool,
}

/// C used by strict mode.
pub const STRICT_C: f64 = 4.0;

impl Default for Admissibility {
    fn default() -> Self {
        Self { c: 1.0, enforce: true }
    }
}

impl Admissibility {
    pub fn strict() -> Self {
        Self { c: STRICT_C, enforce: true }
    }

    pub fn warn_only(c: f64) -> Self {
        Self { c, enforce: false }
    }
}

fn loglog_inv(x: f64) -> f64 {
    let l = (1.0 / x).ln();
    if l > 1.0 {
        l.ln()
    } else {
        0.0
    }
}

/// Smallest admissible λ for the local iteration: C·K·B·σ·√((d + log(K/δ))/N).
pub fn min_lambda_ldp(adm: &Admissibility, k: usize, b: f64, sigma: f64, d: usize, delta: f64, n: usize) -> f64 {
    let k = k as f64;
    adm.c * k * b * sigma * ((d as f64 + (k / delta).ln()) / n as f64).sqrt()
}

/// Smallest admissible γλ for the central iteration: C·σ·B·√(d + log(K/δ))/N.
pub fn min_gamma_lambda_dp(adm: &Admissibility, k: usize, b: f64, sigma: f64, d: usize, delta: f64, n: usize) -> f64 {
    adm.c * sigma * b * (d as f64 + (k as f64 / delta).ln()).sqrt() / n as f64
}

/// max{⌈loglog(1/λ^(0))⌉, 12} with λ^(0) = λ/(2K+1), resolved by fixed point.
pub fn default_epochs_ldp(lambda: f64) -> usize {
    let mut k = 12usize;
    loop {
        let need = loglog_inv(lambda / (2 * k + 1) as f64).ceil() as usize;
        if need <= k {
            return k;
        }
        k = need;
    }
}

/// max{⌈loglog(1/λ)⌉, 4}.
pub fn default_epochs_dp(lambda: f64) -> usize {
    (loglog_inv(lambda).ceil() as usize).max(4)
}

/// λ^(k) = (2k+1)/(2K+1)·λ for k = 0..K.
pub fn ldp_schedule(lambda: f64, k: usize) -> Vec<f64> {
    (0..=k).map(|i| (2 * i + 1) as f64 / (2 * k + 1) as f64 * lambda).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralLdpParams {
    pub epochs: usize,
    pub lambda: f64,
    pub delta: f64,
    /// Covariate norm bound B.
    pub bound: f64,
    pub admissibility: Admissibility,
}

impl SpectralLdpParams {
    /// Parameters for `t` samples with λ at its admissible minimum.
    pub fn admissible(t: usize, d: usize, bound: f64, delta: f64, budget: &PrivacyBudget, adm: Admissibility) -> Self {
        let mut k = 12;
        let mut lambda = 0.0;
        for _ in 0..4 {
            lambda = min_lambda_ldp(&adm, k, bound, budget.sigma(), d, delta, (t / k).max(1));
            k = default_epochs_ldp(lambda);
        }
        Self { epochs: k, lambda, delta, bound, admissibility: adm }
    }

    pub fn check(&self, t: usize, d: usize, budget: &PrivacyBudget) -> Result<()> {
        let k = self.epochs;
        if k == 0 || t < k {
            return Err(InfoError::TooFewSamples { epochs: k, samples: t });
        }
        let min_lambda = min_lambda_ldp(&self.admissibility, k, self.bound, budget.sigma(), d, self.delta, t / k);
        if self.lambda < min_lambda {
            if self.admissibility.enforce {
                return Err(InfoError::InadmissibleLambda { lambda: self.lambda, min_lambda });
            }
            log::warn!("lambda = {} below admissible minimum {min_lambda}", self.lambda);
        }
        if self.lambda > 1.0 {
            log::info!("lambda = {} exceeds 1; the sandwich guarantee is only meaningful for lambda <= 1", self.lambda);
        }
        let need = default_epochs_ldp(self.lambda);
        if k < need {
            log::warn!("{k} epochs is fewer than the recommended {need}");
        }
        Ok(())
    }
}

/// Privately approximates the local spectral iteration on batches of
/// `data`. Every sample is privatized exactly once. `base` is the index of
/// `data`'s first record in the caller's ledger.
pub fn spectral_iteration_ldp(
    data: &Dataset,
    budget: &PrivacyBudget,
    params: &SpectralLdpParams,
    priv_: &mut Privatizer,
    base: usize,
    rng: &mut RngStream,
) -> Result<(InfoWeight, SpectralTrace)> {
    let d = data.dim;
    params.check(data.len(), d, budget)?;
    let k_epochs = params.epochs;
    let n = data.len() / k_epochs;
    let lambdas = ldp_schedule(params.lambda, k_epochs);
    let mut u = SymMatrix::identity(d);
    let mut trace = SpectralTrace::default();
    let mut v = SymMatrix::zeros(d);
    let (mut s, mut ux) = (vec![0.0; d], vec![0.0; d]);
    for k in 0..k_epochs {
        let half = u.power(0.5, 0.0)?;
        let mut h = SymMatrix::zeros(d);
        for t in k * n..(k + 1) * n {
            let x = data.x(t);
            u.mul_vec_into(x, &mut ux);
            half.mul_vec_into(x, &mut s);
            let un = norm(&ux);
            v.scale_assign(0.0);
            if un > 0.0 {
                v.add_outer(&s, 1.0 / un);
            }
            priv_.sym_gauss("spectral-ldp", &mut v, params.bound, budget, base + t..base + t + 1, rng)?;
            h.add_assign(&v);
        }
        h.scale_assign(1.0 / n as f64);
        // The population moment is PSD, so clipping the noise off costs no
        // privacy and keeps F ⪰ λU when λ is small against the noise.
        let h = h.psd_part()?;
        let f = half.congruence(&h).add(&u.scale(lambdas[k]));
        trace.steps.push(SpectralStep::of(&f)?);
        u = spectral_update(&u, &f)?;
    }
    Ok((InfoWeight::new(u, Model::Ldp, lambdas[k_epochs], 0.0)?, trace))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralDpParams {
    pub epochs: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub delta: f64,
    pub bound: f64,
    pub admissibility: Admissibility,
}

impl SpectralDpParams {
    /// Parameters for `t` samples at the given λ, with γ at its admissible minimum.
    pub fn admissible(
        t: usize,
        d: usize,
        bound: f64,
        delta: f64,
        lambda: f64,
        budget: &PrivacyBudget,
        adm: Admissibility,
    ) -> Self {
        let k = default_epochs_dp(lambda);
        let gl = min_gamma_lambda_dp(&adm, k, bound, budget.sigma(), d, delta, (t / k).max(1));
        Self { epochs: k, gamma: gl / lambda, lambda, delta, bound, admissibility: adm }
    }

    pub fn check(&self, t: usize, d: usize, budget: &PrivacyBudget) -> Result<()> {
        let k = self.epochs;
        if k == 0 || t < k {
            return Err(InfoError::TooFewSamples { epochs: k, samples: t });
        }
        if !(self.lambda > 0.0) || !(self.gamma >= 0.0) {
            return Err(InfoError::BadParam(format!("need lambda > 0, gamma >= 0; got {}, {}", self.lambda, self.gamma)));
        }
        let min_product = min_gamma_lambda_dp(&self.admissibility, k, self.bound, budget.sigma(), d, self.delta, t / k);
        let product = self.gamma * self.lambda;
        if product < min_product && self.gamma > 0.0 {
            if self.admissibility.enforce {
                return Err(InfoError::InadmissibleGammaLambda { product, min_product });
            }
            log::warn!("gamma*lambda = {product} below admissible minimum {min_product}");
        }
        let need = default_epochs_dp(self.lambda);
        if k < need {
            log::warn!("{k} epochs is fewer than the recommended {need}");
        }
        Ok(())
    }
}

/// Privately approximates the central spectral iteration: one privatized
/// batch statistic per epoch, on disjoint batches.
///
/// γ = 0 has unbounded sensitivity; it runs without noise and marks the
/// ledger as noise-free.
pub fn spectral_iteration_dp(
    data: &Dataset,
    budget: &PrivacyBudget,
    params: &SpectralDpParams,
    priv_: &mut Privatizer,
    base: usize,
    rng: &mut RngStream,
) -> Result<(InfoWeight, SpectralTrace)> {
    let d = data.dim;
    params.check(data.len(), d, budget)?;
    let (k_epochs, gamma, lambda) = (params.epochs, params.gamma, params.lambda);
    let n = data.len() / k_epochs;
    let mut w = SymMatrix::identity(d);
    let mut trace = SpectralTrace::default();
    let (mut s, mut wx) = (vec![0.0; d], vec![0.0; d]);
    for k in 0..k_epochs {
        let half = w.power(0.5, 0.0)?;
        let mut h = SymMatrix::zeros(d);
        for t in k * n..(k + 1) * n {
            let x = data.x(t);
            w.mul_vec_into(x, &mut wx);
            half.mul_vec_into(x, &mut s);
            h.add_outer(&s, 1.0 / (1.0 + gamma * norm(&wx)));
        }
        h.scale_assign(1.0 / n as f64);
        let records = base + k * n..base + (k + 1) * n;
        if gamma > 0.0 {
            priv_.sym_gauss("spectral-dp", &mut h, params.bound / (gamma * n as f64), budget, records, rng)?;
        } else {
            log::warn!("gamma = 0: spectral iteration runs without privacy");
            priv_.ledger.noise_free = true;
        }
        let h = h.psd_part()?;
        let f = half.congruence(&h).add(&w.scale(lambda));
        trace.steps.push(SpectralStep::of(&f)?);
        w = spectral_update(&w, &f)?;
    }
    Ok((InfoWeight::new(w, Model::Dp, lambda, gamma)?, trace))
}

/// tr(Σ W*²)/d at γ* = √(log(1/β)/(α²t)), λ* = 1/√t.
pub fn price_of_privacy(oracle: &MomentOracle, t: usize, budget: &PrivacyBudget) -> Result<f64> {
    let t = t as f64;
    let gamma = ((1.0 / budget.beta()).ln() / (budget.alpha().powi(2) * t)).sqrt();
    let lambda = 1.0 / t.sqrt();
    let (w, _) = solve_exact(Model::Dp, oracle, lambda, gamma, &SolveOptions::default())?;
    let w2 = w.matrix.power(2.0, 0.0)?;
    let sigma = oracle.covariance();
    let tr: f64 = (sigma.matmul(&w2)).trace();
    Ok(tr / oracle.dim as f64)
}
