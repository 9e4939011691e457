//! GLM estimators: LDP-SGD on the information-weighted objective, and the
//! central DP-ERM with its verification gate.

use serde::{Deserialize, Serialize};

use super::{project_ellipsoid, split_budget, EstimateError, EstimateReport, Result, Setup};
use crate::covariates::Dataset;
use crate::info_matrix::{
    default_epochs_dp, spectral_iteration_dp, spectral_iteration_ldp, InfoWeight, SpectralDpParams, SpectralLdpParams,
};
use crate::linalg::{axpy, dot, norm, SymMatrix, EIGEN_FLOOR};
use crate::link::GlmLink;
use crate::privacy::{Privatizer, RngStream};

fn check_link(link: &GlmLink) -> Result<()> {
    if !(link.mu > 0.0) {
        return Err(EstimateError::Config(format!("link curvature floor must be positive, got {}", link.mu)));
    }
    Ok(())
}

/// Projected private SGD over {w : ‖Uw‖ ≤ 1} with η_t = 2/(μ_ν t), one
/// privatized gradient per sample. Returns w_N.
pub fn ldp_sgd(
    data: &Dataset,
    weight: &InfoWeight,
    link: &GlmLink,
    setup: &Setup,
    priv_: &mut Privatizer,
    base: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    check_link(link)?;
    let (n, d) = (data.len(), data.dim);
    let (u, lambda, mu) = (&weight.matrix, weight.lambda, link.mu);
    let mut w = vec![0.0; d];
    let mut ux = vec![0.0; d];
    let mut uw = vec![0.0; d];
    let mut g = vec![0.0; d];
    for t in 0..n {
        u.mul_vec_into(data.x(t), &mut ux);
        let un = norm(&ux);
        let r = link.nu(dot(&ux, &w)) - data.y(t);
        let c = if un > 0.0 { r / un } else { 0.0 };
        g.iter_mut().zip(&ux).for_each(|(o, v)| *o = c * v);
        // The regularizer gradient does not depend on the record, so only
        // the data term is privatized; its half-diameter is 2.
        priv_.gauss("ldp-sgd", &mut g, 2.0, &setup.budget, base + t..base + t + 1, rng)?;
        u.mul_vec_into(&w, &mut uw);
        axpy(lambda * mu, &uw, &mut g);
        let eta = 2.0 / (mu * (t + 1) as f64);
        axpy(-eta, &g, &mut w);
        u.mul_vec_into(&w, &mut uw);
        let s = norm(&uw).max(1.0);
        w.iter_mut().for_each(|v| *v /= s);
    }
    Ok(w)
}

/// LDP GLM regression: U from the first half, LDP-SGD on the second,
/// θ̂ = U·w_N.
pub fn glm_iw_ldp(
    data: &Dataset,
    link: &GlmLink,
    setup: &Setup,
    params: Option<SpectralLdpParams>,
    rng: &mut RngStream,
) -> Result<EstimateReport> {
    setup.check(data.dim, data.len(), 2)?;
    check_link(link)?;
    let (t, d) = (data.len(), data.dim);
    let n = t / 2;
    let (first, second) = data.split_at(n);
    let params = params.unwrap_or_else(|| {
        SpectralLdpParams::admissible(n, d, setup.bound, setup.delta, &setup.budget, setup.admissibility)
    });
    let mut priv_ = Privatizer::new(setup.noise);
    let (weight, trace) = spectral_iteration_ldp(&first, &setup.budget, &params, &mut priv_, 0, rng)?;
    let w = ldp_sgd(&second, &weight, link, setup, &mut priv_, n, rng)?;
    let mut rep = EstimateReport::new(weight.matrix.mul_vec(&w), priv_.ledger);
    rep.lambda_used = weight.lambda;
    rep.diag("epochs", params.epochs as f64);
    if let Some(last) = trace.last() {
        rep.diag("last_residual", last.residual);
    }
    rep.weight = Some(weight);
    Ok(rep)
}

/// (γ, λ) for the central GLM estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GlmDpTuning {
    /// λ = √(d/(μ_ν²T)) and the smallest γ meeting both admissibility conditions.
    Default,
    Manual { gamma: f64, lambda: f64 },
}

/// Smallest admissible γλ for DP-ERM: C·(B + 1/μ_ν)·σ·√(d + log(K/δ))/T.
fn min_gamma_lambda_glm(setup: &Setup, mu: f64, k: usize, d: usize, t: usize) -> f64 {
    let log_term = (d as f64 + (k as f64 / setup.delta).ln()).sqrt();
    setup.admissibility.c * (setup.bound + 1.0 / mu) * setup.budget.sigma() * log_term / t as f64
}

/// Private ERM on the reweighted GLM loss over {w : ‖Ww‖ ≤ 1}.
///
/// H̃ is a privatized weighted second moment; if H̃ ⪰ ¼W⁻¹ fails the
/// estimate is 0. Otherwise the objective (with the H̃ − H correction) is
/// minimized to within Δ_N/4 and the minimizer is privatized.
pub fn dp_erm(
    data: &Dataset,
    weight: &InfoWeight,
    link: &GlmLink,
    setup: &Setup,
    priv_: &mut Privatizer,
    base: usize,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, ErmDiagnostics)> {
    check_link(link)?;
    let (n, d) = (data.len(), data.dim);
    let (w, gamma, lambda, mu) = (&weight.matrix, weight.gamma, weight.lambda, link.mu);
    if !(gamma > 0.0) {
        return Err(EstimateError::Config("DP-ERM needs gamma > 0".into()));
    }
    let nf = n as f64;
    let half = w.power(0.5, 0.0)?;
    let mut wxs = vec![0.0; n * d];
    let mut cs = vec![0.0; n];
    let mut h = SymMatrix::zeros(d);
    let mut hx = vec![0.0; d];
    for t in 0..n {
        let x = data.x(t);
        let wx = &mut wxs[t * d..(t + 1) * d];
        w.mul_vec_into(x, wx);
        cs[t] = 1.0 / (1.0 + gamma * norm(wx));
        half.mul_vec_into(x, &mut hx);
        h.add_outer(&hx, cs[t] / nf);
    }
    let h = h.shift(lambda);
    let budget = split_budget(setup);
    let k = if setup.paper_constants { 2.0 } else { 1.0 };
    let mut h_tilde = h.clone();
    let records = base..base + n;
    priv_.sym_gauss("dp-erm-h", &mut h_tilde, k * setup.bound / (gamma * nf), &budget, records.clone(), rng)?;
    let mut diag = ErmDiagnostics::default();
    let winv = w.power(-1.0, EIGEN_FLOOR)?;
    if !winv.scale(0.25).loewner_le(&h_tilde, 0.0)? {
        diag.gate_failed = true;
        return Ok((vec![0.0; d], diag));
    }
    let reg = half.congruence(&h_tilde.sub(&h).shift(lambda)).scale(mu);
    let objective = |v: &[f64]| -> f64 {
        let mut s = 0.0;
        for t in 0..n {
            s += cs[t] * link.loss(dot(&wxs[t * d..(t + 1) * d], v), data.y(t));
        }
        s / nf + 0.5 * reg.quad_form(v)
    };
    let gradient = |v: &[f64], out: &mut [f64]| {
        reg.mul_vec_into(v, out);
        for t in 0..n {
            let wx = &wxs[t * d..(t + 1) * d];
            let r = cs[t] * (link.nu(dot(wx, v)) - data.y(t)) / nf;
            axpy(r, wx, out);
        }
    };
    let delta_n = 32.0 * (1.0 / mu + setup.bound) / (gamma * nf);
    let eig = w.eig()?;
    // The gate makes the objective (μ_ν/4)-strongly convex; for step 1/L the
    // gradient mapping G bounds the distance to the minimizer by 2‖G‖/(μ_ν/4).
    let target = (delta_n / 4.0).min(1e-9);
    let strong = mu / 4.0;
    let mut v = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut step_l: f64 = 1.0;
    let mut f = objective(&v);
    for it in 0..GD_MAX_ITERS {
        gradient(&v, &mut g);
        let (next, fnext) = loop {
            let trial: Vec<f64> = v.iter().zip(&g).map(|(a, b)| a - b / step_l).collect();
            let next = project_ellipsoid(&eig, &trial);
            let diff: Vec<f64> = next.iter().zip(&v).map(|(a, b)| a - b).collect();
            let fnext = objective(&next);
            let accept = fnext <= f + dot(&g, &diff) + 0.5 * step_l * dot(&diff, &diff) + 1e-15 * f.abs();
            if accept || step_l > 1e30 {
                break (next, fnext);
            }
            step_l *= 2.0;
        };
        let gm = next.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() * step_l;
        diag.iterations = it + 1;
        diag.gradient_mapping = gm;
        if 2.0 * gm / strong <= target {
            break;
        }
        v = next;
        f = fnext;
        step_l = (step_l / 2.0).max(1e-12);
    }
    diag.delta_n = delta_n;
    priv_.gauss("dp-erm-w", &mut v, k * delta_n, &budget, records, rng)?;
    Ok((w.mul_vec(&v), diag))
}

const GD_MAX_ITERS: usize = 100_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErmDiagnostics {
    pub gate_failed: bool,
    pub iterations: usize,
    pub gradient_mapping: f64,
    pub delta_n: f64,
}

/// Central-DP GLM regression: (W, γ, λ) from the first half, DP-ERM on the second.
pub fn glm_iw_dp(
    data: &Dataset,
    link: &GlmLink,
    setup: &Setup,
    tuning: GlmDpTuning,
    rng: &mut RngStream,
) -> Result<EstimateReport> {
    setup.check(data.dim, data.len(), 2)?;
    check_link(link)?;
    let (t, d) = (data.len(), data.dim);
    let n0 = t / 2;
    let (first, second) = data.split_at(n0);
    let (lambda, manual_gamma) = match tuning {
        GlmDpTuning::Default => ((d as f64 / (link.mu * link.mu * t as f64)).sqrt(), None),
        GlmDpTuning::Manual { gamma, lambda } => (lambda, Some(gamma)),
    };
    let k = default_epochs_dp(lambda);
    let mut params =
        SpectralDpParams::admissible(n0, d, setup.bound, setup.delta, lambda, &setup.budget, setup.admissibility);
    let min_glm = min_gamma_lambda_glm(setup, link.mu, k, d, t);
    params.gamma = match manual_gamma {
        Some(g) => g,
        None => params.gamma.max(min_glm / lambda),
    };
    if params.gamma * lambda < min_glm {
        if setup.admissibility.enforce {
            return Err(EstimateError::Config(format!(
                "gamma*lambda = {} is below the admissible minimum {min_glm}",
                params.gamma * lambda
            )));
        }
        log::warn!("gamma*lambda = {} below admissible minimum {min_glm}", params.gamma * lambda);
    }
    let mut priv_ = Privatizer::new(setup.noise);
    let (weight, trace) = spectral_iteration_dp(&first, &setup.budget, &params, &mut priv_, 0, rng)?;
    let (theta, erm) = dp_erm(&second, &weight, link, setup, &mut priv_, n0, rng)?;
    let mut rep = EstimateReport::new(theta, priv_.ledger);
    rep.lambda_used = weight.lambda;
    rep.gamma_used = weight.gamma;
    rep.diag("epochs", params.epochs as f64);
    if let Some(last) = trace.last() {
        rep.diag("last_residual", last.residual);
    }
    rep.diag("gate_failed", if erm.gate_failed { 1.0 } else { 0.0 });
    rep.diag("gd_iterations", erm.iterations as f64);
    rep.diag("delta_n", erm.delta_n);
    rep.weight = Some(weight);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariates::{moment_oracle, CovariateDistribution, DatasetMeta};
    use crate::info_matrix::{solve_exact, Model, SolveOptions};
    use crate::privacy::PrivacyBudget;

    fn setup() -> Setup {
        Setup::new(PrivacyBudget::new(1.0, 0.05).unwrap(), 0.05, 1.0).zero_noise()
    }

    fn atoms() -> (Vec<Vec<f64>>, Vec<f64>) {
        (vec![vec![1.0, 0.0], vec![0.0, 0.8], vec![0.6, 0.6]], vec![0.5, 0.25, 0.25])
    }

    fn replicated(reps: usize, theta: &[f64]) -> Dataset {
        let (xs, _) = atoms();
        let pattern = [0usize, 0, 1, 2];
        let rows: Vec<(Vec<f64>, f64)> =
            (0..reps).flat_map(|_| pattern.iter().map(|&i| (xs[i].clone(), dot(&xs[i], theta)))).collect();
        Dataset::from_rows(&rows, DatasetMeta::default())
    }

    fn exact(model: Model, lambda: f64, gamma: f64) -> InfoWeight {
        let (xs, ps) = atoms();
        let oracle = moment_oracle(&CovariateDistribution::finite(xs, ps, 1.0).unwrap()).unwrap();
        solve_exact(model, &oracle, lambda, gamma, &SolveOptions { tol: 1e-13, ..Default::default() }).unwrap().0
    }

    #[test]
    fn dp_erm_identity_link_matches_normal_equations() {
        let theta = [0.25, -0.15];
        let data = replicated(50, &theta);
        let weight = exact(Model::Dp, 0.05, 0.5);
        let s = setup();
        let link = GlmLink::identity(1.0);
        let mut p = Privatizer::new(s.noise);
        let (th, diag) = dp_erm(&data, &weight, &link, &s, &mut p, 0, &mut RngStream::new(1)).unwrap();
        assert!(!diag.gate_failed);
        // Independent route: the objective is quadratic with Hessian
        // (1/n)Σ c·Wx(Wx)ᵀ + λW and linear term (1/n)Σ c·y·Wx.
        let w = &weight.matrix;
        let n = data.len() as f64;
        let mut hess = w.scale(weight.lambda);
        let mut lin = vec![0.0; 2];
        for t in 0..data.len() {
            let wx = w.mul_vec(data.x(t));
            let c = 1.0 / (1.0 + weight.gamma * norm(&wx));
            hess.add_outer(&wx, c / n);
            axpy(c * data.y(t) / n, &wx, &mut lin);
        }
        let v = hess.solve_spd(&lin).unwrap();
        assert!(norm(&w.mul_vec(&v)) < 1.0);
        let want = w.mul_vec(&v);
        for (a, b) in th.iter().zip(&want) {
            assert!((a - b).abs() < 1e-6, "{th:?} vs {want:?}");
        }
        assert_eq!(p.ledger.totals(), (1.0, 0.05));
    }

    #[test]
    fn dp_erm_gate_rejects_a_tiny_weight() {
        let data = replicated(10, &[0.2, 0.2]);
        let weight = InfoWeight::new(SymMatrix::identity(2).scale(0.01), Model::Dp, 0.05, 0.5).unwrap();
        let s = setup();
        let mut p = Privatizer::new(s.noise);
        let (th, diag) =
            dp_erm(&data, &weight, &GlmLink::identity(1.0), &s, &mut p, 0, &mut RngStream::new(1)).unwrap();
        assert!(diag.gate_failed);
        assert_eq!(th, vec![0.0, 0.0]);
    }

    #[test]
    fn ldp_sgd_approaches_the_regularized_minimizer() {
        let theta = [0.3, -0.2];
        let data = replicated(2000, &theta);
        let weight = exact(Model::Ldp, 0.05, 0.0);
        let u = &weight.matrix;
        let s = setup();
        let link = GlmLink::identity(1.0);
        let mut p = Privatizer::new(s.noise);
        let w = ldp_sgd(&data, &weight, &link, &s, &mut p, 0, &mut RngStream::new(1)).unwrap();
        // Minimizer of (1/n)Σ [½⟨Ux, w⟩² − y⟨Ux, w⟩]/‖Ux‖ + ½λμ·wᵀUw.
        let n = data.len() as f64;
        let mut hess = u.scale(weight.lambda * link.mu);
        let mut lin = vec![0.0; 2];
        for t in 0..data.len() {
            let ux = u.mul_vec(data.x(t));
            let un = norm(&ux);
            hess.add_outer(&ux, 1.0 / (un * n));
            axpy(data.y(t) / (un * n), &ux, &mut lin);
        }
        let w_star = hess.solve_spd(&lin).unwrap();
        let gap: f64 = w.iter().zip(&w_star).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(gap < 0.02, "{w:?} vs {w_star:?}");
        assert_eq!(p.ledger.totals(), (1.0, 0.025));
    }

    #[test]
    fn glm_ldp_with_identity_link_tracks_the_linear_estimator() {
        let theta = [0.3, -0.2];
        let data = replicated(2000, &theta);
        let s = setup();
        let params = SpectralLdpParams {
            epochs: 12,
            lambda: 0.05,
            delta: 0.05,
            bound: 1.0,
            admissibility: crate::info_matrix::Admissibility::warn_only(1.0),
        };
        let glm = glm_iw_ldp(&data, &GlmLink::identity(1.0), &s, Some(params.clone()), &mut RngStream::new(3)).unwrap();
        let lin = super::super::iw_regression_ldp(&data, &s, Some(params), &mut RngStream::new(3)).unwrap();
        for (a, b) in glm.theta_hat.iter().zip(&lin.theta_hat) {
            assert!((a - b).abs() < 0.05, "{:?} vs {:?}", glm.theta_hat, lin.theta_hat);
        }
    }

    #[test]
    fn glm_dp_default_runs_and_fills_diagnostics() {
        let data = replicated(500, &[0.2, 0.1]);
        let rep = glm_iw_dp(&data, &GlmLink::logistic_scaled(1.0), &setup(), GlmDpTuning::Default, &mut RngStream::new(2))
            .unwrap();
        assert!(rep.gamma_used > 0.0 && rep.lambda_used > 0.0);
        assert!(rep.diagnostics.contains_key("gate_failed"));
        assert!(rep.theta_hat.iter().all(|v| v.is_finite()));
    }
}
