//! Linear-model estimators: the one-dimensional LDP estimator, the SSP
//! baseline and information-weighted regression in both privacy models.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{add_weighted_design, constrained_least_squares, split_budget, EstimateError, EstimateReport, Result, Setup};
use crate::covariates::{Dataset, MomentOracle};
use crate::info_matrix::{
    solve_exact, spectral_iteration_dp, spectral_iteration_ldp, InfoWeight, Model, SolveOptions, SpectralDpParams,
    SpectralLdpParams,
};
use crate::linalg::{axpy, clip, norm, singular_values};
use crate::privacy::{Privatizer, RngStream};

fn weight_from_exact(model: Model, oracle: &MomentOracle, lambda: f64, gamma: f64) -> Result<InfoWeight> {
    let (w, _) = solve_exact(model, oracle, lambda, gamma, &SolveOptions::default())?;
    let residual = w.residual.unwrap_or(f64::INFINITY);
    let required = (lambda * w.min_eig).min(1.0);
    if residual > required {
        return Err(EstimateError::InexactWeight { residual, required });
    }
    Ok(w)
}

/// One-dimensional LDP regression through Laplace-privatized sign(x)·y and |x|.
pub fn simple_ldp_1d(data: &Dataset, setup: &Setup, rng: &mut RngStream) -> Result<EstimateReport> {
    if data.dim != 1 {
        return Err(EstimateError::Config(format!("simple_ldp_1d needs d = 1, got {}", data.dim)));
    }
    setup.check(data.dim, data.len(), 1)?;
    let t = data.len();
    let alpha = setup.budget.alpha();
    let eps = if setup.paper_constants { alpha } else { alpha / 2.0 };
    let mut priv_ = Privatizer::new(setup.noise);
    let mut psi = 0.0;
    for i in 0..t {
        let x = data.x(i)[0];
        let s = if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
        psi += priv_.laplace("simple-ldp-sign", s * data.y(i), 2.0, eps, i..i + 1, rng)?;
    }
    let mut big_psi = 0.0;
    for i in 0..t {
        big_psi += priv_.laplace("simple-ldp-abs", data.x(i)[0].abs(), 2.0, eps, i..i + 1, rng)?;
    }
    let (psi, big_psi) = (psi / t as f64, big_psi / t as f64);
    let theta = if big_psi > 0.0 { clip(psi / big_psi, 1.0) } else { 0.0 };
    let mut rep = EstimateReport::new(vec![theta], priv_.ledger);
    rep.diag("psi_hat", psi);
    rep.diag("big_psi_hat", big_psi);
    rep.diag("degenerate_denominator", if big_psi > 0.0 { 0.0 } else { 1.0 });
    Ok(rep)
}

/// How the SSP perturbation τ is calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SspNoise {
    /// Every client adds N(0, σ²B²) to x·y, so τ = σB√T.
    Local,
    /// One Gaussian draw on the sum, τ = σB.
    Central,
    /// Caller-chosen τ; the ledger records the sensitivity τ/σ it covers.
    Fixed { tau: f64 },
}

/// Sufficient-statistic perturbation: noisy Σ x·y, exact Σ x xᵀ (covariates
/// are treated as public), then ball-constrained ridge least squares.
pub fn ssp_ols(data: &Dataset, setup: &Setup, noise: SspNoise, lambda: f64, rng: &mut RngStream) -> Result<EstimateReport> {
    setup.check(data.dim, data.len(), 1)?;
    if !(lambda >= 0.0) {
        return Err(EstimateError::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    let (t, d) = (data.len(), data.dim);
    let mut priv_ = Privatizer::new(setup.noise);
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut stat = vec![0.0; d];
    let mut xy = vec![0.0; d];
    for i in 0..t {
        let x = data.x(i);
        add_weighted_design(&mut gram, x, x, 1.0);
        xy.iter_mut().zip(x).for_each(|(o, v)| *o = v * data.y(i));
        if noise == SspNoise::Local {
            priv_.gauss("ssp-local", &mut xy, setup.bound, &setup.budget, i..i + 1, rng)?;
        }
        axpy(1.0, &xy, &mut stat);
    }
    let tau = match noise {
        SspNoise::Local => setup.budget.sigma() * setup.bound * (t as f64).sqrt(),
        SspNoise::Central => {
            priv_.gauss("ssp-central", &mut stat, setup.bound, &setup.budget, 0..t, rng)?;
            setup.budget.sigma() * setup.bound
        }
        SspNoise::Fixed { tau } => {
            priv_.gauss("ssp-fixed", &mut stat, tau / setup.budget.sigma(), &setup.budget, 0..t, rng)?;
            tau
        }
    };
    // The argmin is scale invariant; normalizing by T keeps the solver's
    // absolute tolerance meaningful.
    let s = 1.0 / t as f64;
    let mut a = gram * s;
    for i in 0..d {
        a[(i, i)] += lambda * s;
    }
    stat.iter_mut().for_each(|v| *v *= s);
    let sol = constrained_least_squares(&a, &stat, 1.0)?;
    let mut rep = EstimateReport::new(sol.theta, priv_.ledger);
    rep.lambda_used = lambda;
    rep.diag("tau", tau);
    rep.diag("cls_iterations", sol.iterations as f64);
    rep.diag("cls_converged", if sol.converged { 1.0 } else { 0.0 });
    Ok(rep)
}

/// Second stage of local IW regression on `data` with a fixed weight:
/// privatize ψ_t = Ux·y/‖Ux‖ and Ψ_t = Uxxᵀ/‖Ux‖, then solve the
/// ball-constrained least squares. `base` is `data`'s first ledger index.
pub fn ldp_weighted_stage(
    data: &Dataset,
    weight: &InfoWeight,
    setup: &Setup,
    priv_: &mut Privatizer,
    base: usize,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, BTreeMap<String, f64>)> {
    let (n, d) = (data.len(), data.dim);
    if weight.matrix.dim() != d {
        return Err(EstimateError::Config(format!("weight is {0}x{0}, data has dimension {d}", weight.matrix.dim())));
    }
    let budget = split_budget(setup);
    // Half-diameters at the shared budget; the published 2 and 2B at the
    // full budget give identical noise.
    let (dpsi, dbig) = if setup.paper_constants { (2.0, 2.0 * setup.bound) } else { (1.0, setup.bound) };
    let u = &weight.matrix;
    let mut ux = vec![0.0; d];
    let mut psi = vec![0.0; d];
    let mut v = vec![0.0; d];
    for t in 0..n {
        u.mul_vec_into(data.x(t), &mut ux);
        let un = norm(&ux);
        let c = if un > 0.0 { data.y(t) / un } else { 0.0 };
        v.iter_mut().zip(&ux).for_each(|(o, x)| *o = c * x);
        priv_.gauss("iw-ldp-psi", &mut v, dpsi, &budget, base + t..base + t + 1, rng)?;
        axpy(1.0, &v, &mut psi);
    }
    let mut big = DMatrix::<f64>::zeros(d, d);
    let mut m = DMatrix::<f64>::zeros(d, d);
    for t in 0..n {
        let x = data.x(t);
        u.mul_vec_into(x, &mut ux);
        let un = norm(&ux);
        m.fill(0.0);
        if un > 0.0 {
            add_weighted_design(&mut m, &ux, x, 1.0 / un);
        }
        priv_.gauss("iw-ldp-big-psi", m.as_mut_slice(), dbig, &budget, base + t..base + t + 1, rng)?;
        big += &m;
    }
    let s = 1.0 / n as f64;
    psi.iter_mut().for_each(|v| *v *= s);
    big *= s;
    for i in 0..d {
        big[(i, i)] += weight.lambda;
    }
    let sv = singular_values(&(&big * u.as_matrix()))?;
    let (hi, lo) = (sv[0], sv[d - 1]);
    if !(lo >= 0.25 && hi <= 4.0) {
        return Err(EstimateError::Stability { lo, hi });
    }
    let sol = constrained_least_squares(&big, &psi, 1.0)?;
    let mut diag = BTreeMap::new();
    diag.insert("sv_min".into(), lo);
    diag.insert("sv_max".into(), hi);
    diag.insert("cls_iterations".into(), sol.iterations as f64);
    diag.insert("cls_converged".into(), if sol.converged { 1.0 } else { 0.0 });
    Ok((sol.theta, diag))
}

/// Locally private IW regression: the weight U from the first half, the
/// weighted least squares on the second.
pub fn iw_regression_ldp(
    data: &Dataset,
    setup: &Setup,
    params: Option<SpectralLdpParams>,
    rng: &mut RngStream,
) -> Result<EstimateReport> {
    setup.check(data.dim, data.len(), 2)?;
    let (t, d) = (data.len(), data.dim);
    let n = t / 2;
    let (first, second) = data.split_at(n);
    let params = params.unwrap_or_else(|| {
        SpectralLdpParams::admissible(n, d, setup.bound, setup.delta, &setup.budget, setup.admissibility)
    });
    let mut priv_ = Privatizer::new(setup.noise);
    let (weight, trace) = spectral_iteration_ldp(&first, &setup.budget, &params, &mut priv_, 0, rng)?;
    let (theta, diag) = ldp_weighted_stage(&second, &weight, setup, &mut priv_, n, rng)?;
    let lambda = weight.lambda;
    let mut rep = EstimateReport::new(theta, priv_.ledger);
    rep.diagnostics = diag;
    rep.diag("epochs", params.epochs as f64);
    if let Some(last) = trace.last() {
        rep.diag("last_residual", last.residual);
    }
    rep.lambda_used = lambda;
    rep.ci_scale = Some(8.0 * lambda);
    rep.weight = Some(weight);
    Ok(rep)
}

/// IW regression with U solved exactly against a known distribution; one
/// pure-LDP sphere-mechanism report per sample.
pub fn iw_regression_ldp_fixed_p(
    data: &Dataset,
    oracle: &MomentOracle,
    setup: &Setup,
    rng: &mut RngStream,
) -> Result<EstimateReport> {
    setup.check(data.dim, data.len(), 1)?;
    let (t, d) = (data.len(), data.dim);
    let alpha = setup.budget.alpha();
    let lambda = 1.0 / (alpha * (t as f64).sqrt());
    let weight = weight_from_exact(Model::Ldp, oracle, lambda, 0.0)?;
    let u = &weight.matrix;
    let mut priv_ = Privatizer::new(setup.noise);
    let mut ux = vec![0.0; d];
    let mut mean = vec![0.0; d];
    for i in 0..t {
        u.mul_vec_into(data.x(i), &mut ux);
        let un = norm(&ux);
        let c = if un > 0.0 { data.y(i) / un } else { 0.0 };
        ux.iter_mut().for_each(|v| *v *= c);
        let out = priv_.djw("iw-ldp-fixed-djw", &ux, alpha, i..i + 1, rng)?;
        axpy(1.0 / t as f64, &out, &mut mean);
    }
    let mut rep = EstimateReport::new(u.mul_vec(&mean), priv_.ledger);
    rep.lambda_used = lambda;
    rep.diag("residual", weight.residual.unwrap_or(f64::NAN));
    rep.weight = Some(weight);
    Ok(rep)
}

/// How (γ, λ) are chosen for central IW regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DpTuning {
    /// λ = 1/√T and the smallest admissible γ.
    Standard,
    /// λ = √(d·log(1/δ)/T) and γ = max{C·B·σ/√T, smallest admissible γ}.
    L1,
    Manual { gamma: f64, lambda: f64, epochs: Option<usize> },
}

fn dp_params(t_total: usize, n0: usize, d: usize, setup: &Setup, tuning: DpTuning) -> SpectralDpParams {
    let (b, delta, adm) = (setup.bound, setup.delta, setup.admissibility);
    let tf = t_total as f64;
    match tuning {
        DpTuning::Standard => SpectralDpParams::admissible(n0, d, b, delta, 1.0 / tf.sqrt(), &setup.budget, adm),
        DpTuning::L1 => {
            let lambda = (d as f64 * (1.0 / delta).ln() / tf).sqrt();
            let mut p = SpectralDpParams::admissible(n0, d, b, delta, lambda, &setup.budget, adm);
            p.gamma = p.gamma.max(adm.c * b * setup.budget.sigma() / tf.sqrt());
            p
        }
        DpTuning::Manual { gamma, lambda, epochs } => {
            let mut p = SpectralDpParams::admissible(n0, d, b, delta, lambda, &setup.budget, adm);
            p.gamma = gamma;
            if let Some(k) = epochs {
                p.epochs = k;
            }
            p
        }
    }
}

/// Second stage of central IW regression: weighted statistics ψ, Ψ on
/// `data`, each privatized once, then θ̂ = (Ψ̃ + λI)⁻¹ψ̃.
pub fn dp_weighted_stage(
    data: &Dataset,
    weight: &InfoWeight,
    setup: &Setup,
    priv_: &mut Privatizer,
    base: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let (n, d) = (data.len(), data.dim);
    if weight.matrix.dim() != d {
        return Err(EstimateError::Config(format!("weight is {0}x{0}, data has dimension {d}", weight.matrix.dim())));
    }
    let (w, gamma) = (&weight.matrix, weight.gamma);
    let mut psi = vec![0.0; d];
    let mut big = DMatrix::<f64>::zeros(d, d);
    let mut wx = vec![0.0; d];
    for t in 0..n {
        let x = data.x(t);
        w.mul_vec_into(x, &mut wx);
        let c = 1.0 / (1.0 + gamma * norm(&wx));
        axpy(c * data.y(t), &wx, &mut psi);
        add_weighted_design(&mut big, &wx, x, c);
    }
    let s = 1.0 / n as f64;
    psi.iter_mut().for_each(|v| *v *= s);
    big *= s;
    let records = base..base + n;
    if gamma > 0.0 {
        // Half-diameters of the two means; the published 2/(γT), 2B/(γT)
        // coincide with them for |D₁| = T/2.
        let budget = split_budget(setup);
        let scale = 1.0 / (gamma * n as f64);
        priv_.gauss("iw-dp-psi", &mut psi, scale, &budget, records.clone(), rng)?;
        priv_.gauss("iw-dp-big-psi", big.as_mut_slice(), setup.bound * scale, &budget, records, rng)?;
    } else {
        log::warn!("gamma = 0: weighted statistics released without noise");
        priv_.ledger.noise_free = true;
    }
    for i in 0..d {
        big[(i, i)] += weight.lambda;
    }
    let theta = big
        .lu()
        .solve(&nalgebra::DVector::from_column_slice(&psi))
        .ok_or(EstimateError::Singular)?;
    let theta: Vec<f64> = theta.iter().copied().collect();
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(EstimateError::Singular);
    }
    Ok(theta)
}

/// Central-DP IW regression: (W, γ, λ) from the first half, the weighted
/// linear solve on the second.
pub fn iw_regression_dp(data: &Dataset, setup: &Setup, tuning: DpTuning, rng: &mut RngStream) -> Result<EstimateReport> {
    setup.check(data.dim, data.len(), 2)?;
    let (t, d) = (data.len(), data.dim);
    let n0 = t / 2;
    let (first, second) = data.split_at(n0);
    let params = dp_params(t, n0, d, setup, tuning);
    let mut priv_ = Privatizer::new(setup.noise);
    let (weight, trace) = spectral_iteration_dp(&first, &setup.budget, &params, &mut priv_, 0, rng)?;
    let theta = dp_weighted_stage(&second, &weight, setup, &mut priv_, n0, rng)?;
    let mut rep = EstimateReport::new(theta, priv_.ledger);
    rep.lambda_used = weight.lambda;
    rep.gamma_used = weight.gamma;
    rep.ci_scale = Some(8.0 * weight.lambda);
    rep.diag("epochs", params.epochs as f64);
    if let Some(last) = trace.last() {
        rep.diag("last_residual", last.residual);
    }
    if setup.eps_apx > 0.0 {
        rep.diag("misspec_term", (d as f64).sqrt() * setup.eps_apx);
    }
    rep.weight = Some(weight);
    Ok(rep)
}

/// Central-DP IW regression with W solved exactly against a known
/// distribution; a single privatized weighted mean.
pub fn iw_regression_dp_fixed_p(
    data: &Dataset,
    oracle: &MomentOracle,
    setup: &Setup,
    rng: &mut RngStream,
) -> Result<EstimateReport> {
    setup.check(data.dim, data.len(), 1)?;
    let (t, d) = (data.len(), data.dim);
    let tf = t as f64;
    let budget = setup.budget;
    let lambda = 1.0 / tf.sqrt();
    let gamma = ((1.0 / budget.beta()).ln() / (budget.alpha().powi(2) * tf)).sqrt();
    let weight = weight_from_exact(Model::Dp, oracle, lambda, gamma)?;
    let w = &weight.matrix;
    let mut psi = vec![0.0; d];
    let mut wx = vec![0.0; d];
    for i in 0..t {
        w.mul_vec_into(data.x(i), &mut wx);
        let c = data.y(i) / (1.0 + gamma * norm(&wx));
        axpy(c / tf, &wx, &mut psi);
    }
    let mut priv_ = Privatizer::new(setup.noise);
    priv_.gauss("iw-dp-fixed-psi", &mut psi, 1.0 / (gamma * tf), &budget, 0..t, rng)?;
    let mut rep = EstimateReport::new(w.mul_vec(&psi), priv_.ledger);
    rep.lambda_used = lambda;
    rep.gamma_used = gamma;
    rep.diag("residual", weight.residual.unwrap_or(f64::NAN));
    if setup.eps_apx > 0.0 {
        rep.diag("misspec_term", (d as f64).sqrt() * setup.eps_apx);
    }
    rep.weight = Some(weight);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariates::{moment_oracle, sample_dataset, CovariateDistribution, DatasetMeta, LabelMechanism};
    use crate::info_matrix::Admissibility;
    use crate::linalg::{dot, SymMatrix};
    use crate::privacy::PrivacyBudget;

    fn setup(alpha: f64) -> Setup {
        Setup::new(PrivacyBudget::new(alpha, 0.05).unwrap(), 0.05, 1.0)
    }

    /// Rows `atoms[i]` repeated `counts[i]` times with noiseless linear labels.
    fn replicated(atoms: &[Vec<f64>], counts: &[usize], theta: &[f64]) -> Dataset {
        let mut rows = Vec::new();
        for (a, &c) in atoms.iter().zip(counts) {
            for _ in 0..c {
                rows.push((a.clone(), dot(a, theta)));
            }
        }
        Dataset::from_rows(&rows, DatasetMeta::default())
    }

    fn three_atoms() -> (Vec<Vec<f64>>, Vec<usize>, MomentOracle) {
        let atoms = vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.6, 0.0], vec![0.3, 0.3, 0.5]];
        let counts = vec![2, 1, 1];
        let dist = CovariateDistribution::finite(atoms.clone(), vec![0.5, 0.25, 0.25], 1.0).unwrap();
        (atoms, counts, moment_oracle(&dist).unwrap())
    }

    #[test]
    fn simple_1d_noise_free_recovers_theta() {
        let rows: Vec<(Vec<f64>, f64)> = (0..10).map(|_| (vec![1.0], 0.37)).collect();
        let data = Dataset::from_rows(&rows, DatasetMeta::default());
        let rep = simple_ldp_1d(&data, &setup(1.0).zero_noise(), &mut RngStream::new(1)).unwrap();
        assert!((rep.theta_hat[0] - 0.37).abs() < 1e-12);
    }

    #[test]
    fn simple_1d_privatized_means_are_unbiased() {
        // x uniform on {−0.5, 0.2, 1}, θ* = 0.6, Rademacher labels.
        let dist = CovariateDistribution::finite(vec![vec![-0.5], vec![0.2], vec![1.0]], vec![1.0 / 3.0; 3], 1.0).unwrap();
        let mut rng = RngStream::new(7);
        let data = sample_dataset(&dist, &LabelMechanism::rademacher(vec![0.6]), 200_000, &mut rng).unwrap();
        let rep = simple_ldp_1d(&data, &setup(1.0), &mut rng).unwrap();
        let e_abs = (0.5 + 0.2 + 1.0) / 3.0;
        // Laplace scale 4 per sample: the std of a mean over 2e5 is about 0.013.
        assert!((rep.diagnostics["psi_hat"] - 0.6 * e_abs).abs() < 0.06);
        assert!((rep.diagnostics["big_psi_hat"] - e_abs).abs() < 0.06);
    }

    #[test]
    fn simple_1d_ledger_and_degenerate_denominator() {
        let rows: Vec<(Vec<f64>, f64)> = (0..4).map(|_| (vec![0.0], 1.0)).collect();
        let data = Dataset::from_rows(&rows, DatasetMeta::default());
        let rep = simple_ldp_1d(&data, &setup(0.5).zero_noise(), &mut RngStream::new(1)).unwrap();
        assert_eq!(rep.theta_hat, vec![0.0]);
        assert_eq!(rep.diagnostics["degenerate_denominator"], 1.0);
        assert_eq!(rep.ledger.totals(), (0.5, 0.0));
        let mut literal = setup(0.5).zero_noise();
        literal.paper_constants = true;
        let rep = simple_ldp_1d(&data, &literal, &mut RngStream::new(1)).unwrap();
        assert_eq!(rep.ledger.totals(), (1.0, 0.0));
    }

    #[test]
    fn ssp_without_noise_is_constrained_ridge() {
        let rows = vec![
            (vec![1.0, 0.0], 0.3),
            (vec![0.0, 1.0], -0.2),
            (vec![0.6, 0.8], 0.1),
            (vec![0.5, -0.5], 0.4),
        ];
        let data = Dataset::from_rows(&rows, DatasetMeta::default());
        let lambda = 0.7;
        let rep = ssp_ols(&data, &setup(1.0), SspNoise::Fixed { tau: 0.0 }, lambda, &mut RngStream::new(3)).unwrap();
        let mut g = SymMatrix::zeros(2);
        let mut b = vec![0.0; 2];
        for (x, y) in &rows {
            g.add_outer(x, 1.0);
            axpy(*y, x, &mut b);
        }
        let ridge = g.shift(lambda).solve_spd(&b).unwrap();
        for (a, r) in rep.theta_hat.iter().zip(&ridge) {
            assert!((a - r).abs() < 1e-8);
        }
        // λ = 0 on a full-rank design is OLS.
        let rep = ssp_ols(&data, &setup(1.0), SspNoise::Fixed { tau: 0.0 }, 0.0, &mut RngStream::new(3)).unwrap();
        let ols = g.solve_spd(&b).unwrap();
        for (a, r) in rep.theta_hat.iter().zip(&ols) {
            assert!((a - r).abs() < 1e-8);
        }
    }

    #[test]
    fn ssp_local_noise_scale_and_ledger() {
        let rows: Vec<(Vec<f64>, f64)> = (0..100).map(|_| (vec![1.0], 0.5)).collect();
        let data = Dataset::from_rows(&rows, DatasetMeta::default());
        let s = setup(1.0);
        let rep = ssp_ols(&data, &s, SspNoise::Local, 1.0, &mut RngStream::new(3)).unwrap();
        assert!((rep.diagnostics["tau"] - s.budget.sigma() * 10.0).abs() < 1e-12);
        assert_eq!(rep.ledger.entries.len(), 1);
        assert_eq!(rep.ledger.totals(), (1.0, 0.025));
    }

    #[test]
    fn ldp_stage_with_exact_weight_has_bias_minus_lambda_theta() {
        let (atoms, counts, oracle) = three_atoms();
        let theta = [0.3, -0.2, 0.1];
        let lambda = 0.05;
        let (u, _) = solve_exact(Model::Ldp, &oracle, lambda, 0.0, &SolveOptions { tol: 1e-13, ..Default::default() }).unwrap();
        let data = replicated(&atoms, &counts, &theta);
        let s = setup(1.0).zero_noise();
        let mut p = Privatizer::new(s.noise);
        let (th, diag) = ldp_weighted_stage(&data, &u, &s, &mut p, 0, &mut RngStream::new(1)).unwrap();
        // (Ψ + λI)U = F(U) = I, so U⁻¹(θ̂ − θ*) = −λθ*.
        let err = u.matrix.solve_spd(&sub(&th, &theta)).unwrap();
        for (e, t) in err.iter().zip(&theta) {
            assert!((e + lambda * t).abs() < 1e-8, "{err:?}");
        }
        assert!(norm(&err) <= 8.0 * lambda);
        assert!(diag["sv_min"] >= 0.25 && diag["sv_max"] <= 4.0);
    }

    fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x - y).collect()
    }

    #[test]
    fn ldp_point_mass_recovers_within_8_lambda() {
        let rows: Vec<(Vec<f64>, f64)> = (0..2400).map(|_| (vec![1.0], 0.5)).collect();
        let data = Dataset::from_rows(&rows, DatasetMeta::default());
        let params = SpectralLdpParams {
            epochs: 12,
            lambda: 0.05,
            delta: 0.05,
            bound: 1.0,
            admissibility: Admissibility::warn_only(1.0),
        };
        let rep = iw_regression_ldp(&data, &setup(1.0).zero_noise(), Some(params), &mut RngStream::new(2)).unwrap();
        assert!(rep.weighted_error(&[0.5]).unwrap() <= 8.0 * rep.lambda_used);
        assert_eq!(rep.ci_scale, Some(8.0 * rep.lambda_used));
    }

    #[test]
    fn ldp_ledger_composes_to_the_budget() {
        let dist = CovariateDistribution::sphere_uniform(3, 1.0).unwrap();
        let mut rng = RngStream::new(11);
        let data = sample_dataset(&dist, &LabelMechanism::rademacher(vec![0.2, 0.1, 0.0]), 4000, &mut rng).unwrap();
        let mut s = setup(1.0);
        s.admissibility = Admissibility::warn_only(1.0);
        let params = SpectralLdpParams { epochs: 12, lambda: 0.5, delta: 0.05, bound: 1.0, admissibility: s.admissibility };
        let rep = iw_regression_ldp(&data, &s, Some(params.clone()), &mut rng);
        if let Ok(rep) = rep {
            let (a, b) = rep.ledger.totals();
            assert!((a - 1.0).abs() < 1e-12 && (b - 0.05).abs() < 1e-12);
            // The spectral half uses each record once, bar the 2000 mod 12 left
            // over by the epoch split; the weighted half queries each record twice.
            let expected = |t: usize| if t >= 2000 { 2 } else { usize::from(t < 12 * (2000 / 12)) };
            assert!((0..4000).all(|t| rep.ledger.touches(t) == expected(t)));
        }
        let spectral_only = {
            let mut p = Privatizer::new(s.noise);
            let (first, _) = data.split_at(2000);
            spectral_iteration_ldp(&first, &s.budget, &params, &mut p, 0, &mut rng).unwrap();
            p.ledger
        };
        assert_eq!(spectral_only.totals(), (1.0, 0.025));
    }

    #[test]
    fn fixed_p_ldp_noise_free_bias() {
        let (atoms, counts, oracle) = three_atoms();
        let theta = [0.3, -0.2, 0.1];
        // T = 400 replicas of the 4-row pattern: λ = 1/(α√T) = 0.05.
        let counts: Vec<usize> = counts.iter().map(|c| c * 100).collect();
        let data = replicated(&atoms, &counts, &theta);
        let rep = iw_regression_ldp_fixed_p(&data, &oracle, &setup(1.0).zero_noise(), &mut RngStream::new(1)).unwrap();
        let u = &rep.weight.as_ref().unwrap().matrix;
        let bias = norm(&sub(&rep.theta_hat, &theta));
        assert!(bias <= 2.0 * rep.lambda_used * u.op_norm().unwrap() + 1e-10, "bias {bias}");
        assert_eq!(rep.ledger.totals(), (1.0, 0.0));
    }

    #[test]
    fn fixed_p_ldp_point_mass_closed_form() {
        let oracle = moment_oracle(&CovariateDistribution::finite(vec![vec![1.0]], vec![1.0], 1.0).unwrap()).unwrap();
        let rows: Vec<(Vec<f64>, f64)> = (0..100).map(|_| (vec![1.0], 0.4)).collect();
        let data = Dataset::from_rows(&rows, DatasetMeta::default());
        let rep = iw_regression_ldp_fixed_p(&data, &oracle, &setup(1.0).zero_noise(), &mut RngStream::new(1)).unwrap();
        // u(1 + λ) = 1 and ψ = y, so θ̂ = y/(1 + λ) with λ = 0.1.
        assert!((rep.theta_hat[0] - 0.4 / 1.1).abs() < 1e-9);
    }

    #[test]
    fn dp_stage_with_exact_weight_has_bias_minus_lambda_theta() {
        let (atoms, counts, oracle) = three_atoms();
        let theta = [0.3, -0.2, 0.1];
        let (lambda, gamma) = (0.05, 0.8);
        let opts = SolveOptions { tol: 1e-13, ..Default::default() };
        let (w, _) = solve_exact(Model::Dp, &oracle, lambda, gamma, &opts).unwrap();
        let data = replicated(&atoms, &counts, &theta);
        let s = setup(1.0).zero_noise();
        let mut p = Privatizer::new(s.noise);
        let th = dp_weighted_stage(&data, &w, &s, &mut p, 0, &mut RngStream::new(1)).unwrap();
        let err = w.matrix.solve_spd(&sub(&th, &theta)).unwrap();
        for (e, t) in err.iter().zip(&theta) {
            assert!((e + lambda * t).abs() < 1e-8, "{err:?}");
        }
    }

    #[test]
    fn dp_ledger_composes_to_the_budget() {
        let dist = CovariateDistribution::sphere_uniform(3, 1.0).unwrap();
        let mut rng = RngStream::new(5);
        let data = sample_dataset(&dist, &LabelMechanism::rademacher(vec![0.2, 0.1, 0.0]), 4000, &mut rng).unwrap();
        let rep = iw_regression_dp(&data, &setup(1.0), DpTuning::Standard, &mut rng).unwrap();
        let (a, b) = rep.ledger.totals();
        assert!((a - 1.0).abs() < 1e-12 && (b - 0.05).abs() < 1e-12);
        assert!(rep.gamma_used > 0.0);
        assert_eq!(rep.ci_scale, Some(8.0 / 4000f64.sqrt()));
        let mut literal = setup(1.0);
        literal.paper_constants = true;
        let rep = iw_regression_dp(&data, &literal, DpTuning::Standard, &mut RngStream::new(5)).unwrap();
        assert!((rep.ledger.totals().0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_p_dp_point_mass_closed_form() {
        let oracle = moment_oracle(&CovariateDistribution::finite(vec![vec![1.0]], vec![1.0], 1.0).unwrap()).unwrap();
        let rows: Vec<(Vec<f64>, f64)> = (0..100).map(|_| (vec![1.0], -0.3)).collect();
        let data = Dataset::from_rows(&rows, DatasetMeta::default());
        let s = setup(1.0).zero_noise();
        let rep = iw_regression_dp_fixed_p(&data, &oracle, &s, &mut RngStream::new(1)).unwrap();
        let (lambda, gamma) = (0.1, (20f64.ln() / 100.0).sqrt());
        let (a, b) = (1.0 + lambda * gamma, lambda - gamma);
        let w = (-b + (b * b + 4.0 * a).sqrt()) / (2.0 * a);
        assert!((rep.theta_hat[0] - w * w * -0.3 / (1.0 + gamma * w)).abs() < 1e-9);
        assert!((rep.gamma_used - gamma).abs() < 1e-15);
    }

    #[test]
    fn reports_are_deterministic_and_serialize() {
        let dist = CovariateDistribution::sphere_uniform(2, 1.0).unwrap();
        let mut rng = RngStream::new(9);
        let data = sample_dataset(&dist, &LabelMechanism::rademacher(vec![0.3, 0.1]), 2000, &mut rng).unwrap();
        let run = || iw_regression_dp(&data, &setup(1.0), DpTuning::L1, &mut RngStream::new(4)).unwrap();
        let (a, b) = (run(), run());
        let ja = serde_json::to_string(&a).unwrap();
        assert_eq!(ja, serde_json::to_string(&b).unwrap());
        let back: EstimateReport = serde_json::from_str(&ja).unwrap();
        assert_eq!(back.theta_hat, a.theta_hat);
        assert_eq!(back.ledger, a.ledger);
    }
}
