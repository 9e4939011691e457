//! Covariate distributions, label mechanisms, dataset generation and
//! exact moment oracles for finite-support distributions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, norm, LinalgError, SymMatrix};
use crate::link::GlmLink;
use crate::privacy::RngStream;

#[derive(Debug, Error)]
pub enum CovariateError {
    #[error("trace of the target covariance {trace} exceeds B² = {b2}")]
    TraceTooLarge { trace: f64, b2: f64 },
    #[error("no unit e with eᵀΣe = ρ² for ρ = {rho}; feasible ρ lie in [{lo}, {hi}]")]
    InfeasiblePerturbation { rho: f64, lo: f64, hi: f64 },
    #[error("probabilities sum to {0}, expected 1")]
    BadProbabilities(f64),
    #[error("atom {index} has norm {norm} > B = {bound}")]
    AtomOutsideBall { index: usize, norm: f64, bound: f64 },
    #[error("exact moments need a finite-support distribution; use a frozen empirical measure")]
    UnsupportedOracle,
    #[error("label mean {mean} at a support point leaves [-1, 1]")]
    LabelOutOfRange { mean: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("bound B must be >= 1, got {0}")]
    BadBound(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, CovariateError>;

/// A finitely supported distribution: atoms with probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSupport {
    pub atoms: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CovariateKind {
    FiniteSupport(FiniteSupport),
    /// N(0, Σ_gen) rescaled onto the ball of radius B when it leaves it.
    ClippedGaussian { cov_gen: SymMatrix },
    /// Uniform on the sphere of radius B.
    SphereUniform,
    /// Uniform on {±B/√d}^d.
    ProductRademacher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateDistribution {
    pub kind: CovariateKind,
    pub dim: usize,
    pub bound: f64,
}

impl CovariateDistribution {
    pub fn finite(atoms: Vec<Vec<f64>>, probs: Vec<f64>, bound: f64) -> Result<Self> {
        if bound < 1.0 {
            return Err(CovariateError::BadBound(bound));
        }
        let dim = atoms.first().map(|a| a.len()).unwrap_or(0);
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 || probs.iter().any(|&p| p < 0.0) || atoms.len() != probs.len() {
            return Err(CovariateError::BadProbabilities(total));
        }
        for (i, a) in atoms.iter().enumerate() {
            if a.len() != dim {
                return Err(CovariateError::DimensionMismatch { expected: dim, got: a.len() });
            }
            let n = norm(a);
            if n > bound * (1.0 + 1e-12) {
                return Err(CovariateError::AtomOutsideBall { index: i, norm: n, bound });
            }
        }
        Ok(Self { kind: CovariateKind::FiniteSupport(FiniteSupport { atoms, probs }), dim, bound })
    }

    pub fn sphere_uniform(dim: usize, bound: f64) -> Result<Self> {
        if bound < 1.0 {
            return Err(CovariateError::BadBound(bound));
        }
        Ok(Self { kind: CovariateKind::SphereUniform, dim, bound })
    }

    pub fn product_rademacher(dim: usize, bound: f64) -> Result<Self> {
        if bound < 1.0 {
            return Err(CovariateError::BadBound(bound));
        }
        Ok(Self { kind: CovariateKind::ProductRademacher, dim, bound })
    }

    pub fn clipped_gaussian(cov_gen: SymMatrix, bound: f64) -> Result<Self> {
        if bound < 1.0 {
            return Err(CovariateError::BadBound(bound));
        }
        let dim = cov_gen.dim();
        Ok(Self { kind: CovariateKind::ClippedGaussian { cov_gen }, dim, bound })
    }

    pub fn as_finite(&self) -> Option<&FiniteSupport> {
        match &self.kind {
            CovariateKind::FiniteSupport(f) => Some(f),
            _ => None,
        }
    }

    /// A reusable sampler with precomputed tables.
    pub fn sampler(&self) -> Result<Sampler<'_>> {
        let table = match &self.kind {
            CovariateKind::FiniteSupport(f) => {
                let mut acc = 0.0;
                SamplerTable::Cdf(f.probs.iter().map(|p| {
                    acc += p;
                    acc
                }).collect())
            }
            CovariateKind::ClippedGaussian { cov_gen } => {
                let root = cov_gen.power(0.5, 0.0)?;
                SamplerTable::Root(root)
            }
            _ => SamplerTable::None,
        };
        Ok(Sampler { dist: self, table })
    }
}

enum SamplerTable {
    None,
    Cdf(Vec<f64>),
    Root(SymMatrix),
}

pub struct Sampler<'a> {
    dist: &'a CovariateDistribution,
    table: SamplerTable,
}

impl Sampler<'_> {
    /// Writes one draw into `out`.
    pub fn sample_into(&self, rng: &mut RngStream, out: &mut [f64]) {
        let d = self.dist.dim;
        let b = self.dist.bound;
        match (&self.dist.kind, &self.table) {
            (CovariateKind::FiniteSupport(f), SamplerTable::Cdf(cdf)) => {
                out.copy_from_slice(&f.atoms[rng.categorical(cdf)]);
            }
            (CovariateKind::ClippedGaussian { .. }, SamplerTable::Root(root)) => {
                let z: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
                root.mul_vec_into(&z, out);
                let n = norm(out);
                if n > b {
                    out.iter_mut().for_each(|v| *v *= b / n);
                }
            }
            (CovariateKind::SphereUniform, _) => loop {
                for v in out.iter_mut() {
                    *v = rng.normal();
                }
                let n = norm(out);
                if n > 0.0 {
                    out.iter_mut().for_each(|v| *v *= b / n);
                    break;
                }
            },
            (CovariateKind::ProductRademacher, _) => {
                let s = b / (d as f64).sqrt();
                for v in out.iter_mut() {
                    *v = if rng.bernoulli(0.5) { s } else { -s };
                }
            }
            _ => unreachable!("sampler table matches its distribution"),
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        let mut out = vec![0.0; self.dist.dim];
        self.sample_into(rng, &mut out);
        out
    }
}

/// Bounded additive misspecification: E[y|x] = ⟨x,θ*⟩ + eps·sin(freq·⟨x,θ*⟩).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Misspec {
    pub eps: f64,
    pub freq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LabelKind {
    /// y ∈ {±1} with mean equal to the regression function.
    Rademacher,
    /// y = mean + uniform noise of half-width level·(1 − |mean|).
    BoundedNoise { level: f64 },
    /// Rademacher labels with mean ν(⟨x, θ*⟩).
    Glm { link: GlmLink },
    /// y equals the regression function exactly.
    Noiseless,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMechanism {
    pub theta_star: Vec<f64>,
    pub kind: LabelKind,
    #[serde(default)]
    pub misspec: Option<Misspec>,
}

impl LabelMechanism {
    pub fn rademacher(theta_star: Vec<f64>) -> Self {
        Self { theta_star, kind: LabelKind::Rademacher, misspec: None }
    }

    pub fn noiseless(theta_star: Vec<f64>) -> Self {
        Self { theta_star, kind: LabelKind::Noiseless, misspec: None }
    }

    /// E[y | x].
    pub fn mean(&self, x: &[f64]) -> f64 {
        let s = dot(x, &self.theta_star);
        let base = match &self.kind {
            LabelKind::Glm { link } => link.nu(s),
            _ => s,
        };
        match self.misspec {
            Some(m) => base + m.eps * (m.freq * s).sin(),
            None => base,
        }
    }

    pub fn draw(&self, x: &[f64], rng: &mut RngStream) -> f64 {
        let m = self.mean(x).clamp(-1.0, 1.0);
        match &self.kind {
            LabelKind::Noiseless => m,
            LabelKind::Rademacher | LabelKind::Glm { .. } => {
                if rng.bernoulli(0.5 * (1.0 + m)) {
                    1.0
                } else {
                    -1.0
                }
            }
            LabelKind::BoundedNoise { level } => {
                let half = level * (1.0 - m.abs());
                m + half * (2.0 * rng.uniform() - 1.0)
            }
        }
    }

    /// Checks that the regression function stays in [−1, 1] on the support.
    pub fn validate(&self, dist: &CovariateDistribution) -> Result<()> {
        if self.theta_star.len() != dist.dim {
            return Err(CovariateError::DimensionMismatch { expected: dist.dim, got: self.theta_star.len() });
        }
        if let Some(f) = dist.as_finite() {
            for a in &f.atoms {
                let m = self.mean(a);
                if m.abs() > 1.0 + 1e-12 {
                    return Err(CovariateError::LabelOutOfRange { mean: m });
                }
            }
        } else {
            let worst = dist.bound * norm(&self.theta_star) + self.misspec.map(|m| m.eps.abs()).unwrap_or(0.0);
            if worst > 1.0 + 1e-12 {
                return Err(CovariateError::LabelOutOfRange { mean: worst });
            }
        }
        Ok(())
    }

    /// L2 size of the misspecification under the oracle's measure.
    pub fn misspec_l2(&self, oracle: &MomentOracle) -> f64 {
        match self.misspec {
            None => 0.0,
            Some(m) => oracle
                .iter()
                .map(|(x, p)| {
                    let v = m.eps * (m.freq * dot(x, &self.theta_star)).sin();
                    p * v * v
                })
                .sum::<f64>()
                .sqrt(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub dist_id: String,
    pub theta_star: Vec<f64>,
    pub seed: u64,
}

/// Rows stored flat, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub dim: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn from_rows(rows: &[(Vec<f64>, f64)], meta: DatasetMeta) -> Self {
        let dim = rows.first().map(|r| r.0.len()).unwrap_or(0);
        let mut xs = Vec::with_capacity(rows.len() * dim);
        let mut ys = Vec::with_capacity(rows.len());
        for (x, y) in rows {
            xs.extend_from_slice(x);
            ys.push(*y);
        }
        Self { dim, xs, ys, meta }
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn x(&self, t: usize) -> &[f64] {
        &self.xs[t * self.dim..(t + 1) * self.dim]
    }

    pub fn y(&self, t: usize) -> f64 {
        self.ys[t]
    }

    /// Rows `range` as a new dataset (copied).
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            dim: self.dim,
            xs: self.xs[range.start * self.dim..range.end * self.dim].to_vec(),
            ys: self.ys[range.clone()].to_vec(),
            meta: self.meta.clone(),
        }
    }

    /// Splits into `[0, mid)` and `[mid, T)`.
    pub fn split_at(&self, mid: usize) -> (Dataset, Dataset) {
        (self.slice(0..mid), self.slice(mid..self.len()))
    }
}

/// `t` i.i.d. rows.
pub fn sample_dataset(
    dist: &CovariateDistribution,
    labels: &LabelMechanism,
    t: usize,
    rng: &mut RngStream,
) -> Result<Dataset> {
    labels.validate(dist)?;
    let sampler = dist.sampler()?;
    let d = dist.dim;
    let mut xs = vec![0.0; t * d];
    let mut ys = Vec::with_capacity(t);
    for row in 0..t {
        let x = &mut xs[row * d..(row + 1) * d];
        sampler.sample_into(rng, x);
        ys.push(labels.draw(x, rng));
    }
    let dist_id = match &dist.kind {
        CovariateKind::FiniteSupport(f) => format!("finite-{}", f.atoms.len()),
        CovariateKind::ClippedGaussian { .. } => "clipped-gaussian".into(),
        CovariateKind::SphereUniform => "sphere-uniform".into(),
        CovariateKind::ProductRademacher => "product-rademacher".into(),
    };
    Ok(Dataset {
        dim: d,
        xs,
        ys,
        meta: DatasetMeta { dist_id, theta_star: labels.theta_star.clone(), seed: rng.seed() },
    })
}

/// p_{Σ*,B}: atoms B·e_j with probability ρ_j/B², plus 0 with the remaining mass,
/// where (ρ_j, e_j) is the eigensystem of Σ*. Diagonal inputs use the standard basis.
pub fn make_simple_distribution(cov_star: &SymMatrix, b: f64) -> Result<CovariateDistribution> {
    let d = cov_star.dim();
    let trace = cov_star.trace();
    if trace > b * b * (1.0 + 1e-12) {
        return Err(CovariateError::TraceTooLarge { trace, b2: b * b });
    }
    let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || cov_star.get(i, j) == 0.0));
    let (rhos, vecs): (Vec<f64>, Vec<Vec<f64>>) = if diagonal {
        (0..d)
            .map(|j| {
                let mut e = vec![0.0; d];
                e[j] = 1.0;
                (cov_star.get(j, j), e)
            })
            .unzip()
    } else {
        let e = cov_star.eig()?;
        (0..d).map(|j| (e.values[j], e.vectors.column(j).iter().copied().collect())).unzip()
    };
    let mut atoms = Vec::new();
    let mut probs = Vec::new();
    let mut used = 0.0;
    for (rho, e) in rhos.into_iter().zip(vecs) {
        if rho <= 0.0 {
            continue;
        }
        let p = rho / (b * b);
        atoms.push(e.iter().map(|v| v * b).collect());
        probs.push(p);
        used += p;
    }
    let rest = 1.0 - used;
    if rest > 1e-15 {
        atoms.push(vec![0.0; d]);
        probs.push(rest);
    } else if let Some(last) = probs.last_mut() {
        // Absorb roundoff so the probabilities sum to one.
        *last += rest;
    }
    CovariateDistribution::finite(atoms, probs, b)
}

/// (1−ρ)p + ρδ_e for a unit e with eᵀΣe = ρ², where e interpolates between the
/// extreme eigenvectors of Σ.
pub fn make_perturbed_distribution(p: &CovariateDistribution, rho: f64) -> Result<CovariateDistribution> {
    let fs = p.as_finite().ok_or(CovariateError::UnsupportedOracle)?;
    if rho == 0.0 {
        log::warn!("perturbation with rho = 0 leaves the distribution unchanged");
        return Ok(p.clone());
    }
    let sigma = moment_oracle(p)?.covariance();
    let eig = sigma.eig()?;
    let d = p.dim;
    let (lmax, lmin) = (eig.values[0], eig.values[d - 1]);
    let (lo, hi) = (lmin.max(0.0).sqrt(), lmax.max(0.0).sqrt());
    let target = rho * rho;
    if !(rho > 0.0 && rho <= 1.0) || target < lmin - 1e-15 || target > lmax + 1e-15 {
        return Err(CovariateError::InfeasiblePerturbation { rho, lo, hi });
    }
    let vmax: Vec<f64> = eig.vectors.column(0).iter().copied().collect();
    let vmin: Vec<f64> = eig.vectors.column(d - 1).iter().copied().collect();
    let e_of = |s: f64| -> Vec<f64> {
        let v: Vec<f64> = vmin.iter().zip(&vmax).map(|(a, b)| s.cos() * a + s.sin() * b).collect();
        let n = norm(&v);
        v.into_iter().map(|x| x / n).collect()
    };
    // e(s)ᵀΣe(s) = λmin·cos²s + λmax·sin²s for orthonormal eigenvectors.
    let frac = if lmax - lmin > 1e-15 { ((target - lmin) / (lmax - lmin)).clamp(0.0, 1.0) } else { 0.0 };
    // Snap roundoff in ρ² onto the endpoint eigenvectors.
    let frac = if frac < 1e-12 { 0.0 } else if frac > 1.0 - 1e-12 { 1.0 } else { frac };
    let angle = frac.sqrt().asin();
    let mut e = e_of(angle);
    // Canonical sign: first non-negligible coordinate positive.
    if e.iter().find(|v| v.abs() > 1e-12).is_some_and(|&v| v < 0.0) {
        e.iter_mut().for_each(|v| *v = -*v);
    }
    let mut atoms = fs.atoms.clone();
    let mut probs: Vec<f64> = fs.probs.iter().map(|q| (1.0 - rho) * q).collect();
    match atoms.iter().position(|x| x.iter().zip(&e).all(|(u, v)| (u - v).abs() <= 1e-9)) {
        Some(i) => probs[i] += rho,
        None => {
            atoms.push(e);
            probs.push(rho);
        }
    }
    let total: f64 = probs.iter().sum();
    let last = probs.len() - 1;
    probs[last] += 1.0 - total;
    CovariateDistribution::finite(atoms, probs, p.bound.max(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    Exact,
    /// Uniform weights over a frozen sample of this size.
    FrozenEmpirical { samples: usize },
}

/// Exact expectations over a finite measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentOracle {
    pub dim: usize,
    pub atoms: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
    pub kind: OracleKind,
}

pub fn moment_oracle(dist: &CovariateDistribution) -> Result<MomentOracle> {
    let f = dist.as_finite().ok_or(CovariateError::UnsupportedOracle)?;
    Ok(MomentOracle { dim: dist.dim, atoms: f.atoms.clone(), probs: f.probs.clone(), kind: OracleKind::Exact })
}

impl MomentOracle {
    /// Uniform measure over the given points.
    pub fn empirical(dim: usize, points: Vec<Vec<f64>>) -> Self {
        let n = points.len();
        Self {
            dim,
            probs: vec![1.0 / n as f64; n],
            atoms: points,
            kind: OracleKind::FrozenEmpirical { samples: n },
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.atoms.iter().map(|a| a.as_slice()).zip(self.probs.iter().copied())
    }

    pub fn covariance(&self) -> SymMatrix {
        let mut s = SymMatrix::zeros(self.dim);
        for (x, p) in self.iter() {
            s.add_outer(x, p);
        }
        s
    }

    /// E|⟨x, θ⟩|.
    pub fn mean_abs_proj(&self, theta: &[f64]) -> f64 {
        self.iter().map(|(x, p)| p * dot(x, theta).abs()).sum()
    }

    /// E[Uxxᵀ U/‖Ux‖ · 1{Ux ≠ 0}].
    pub fn ldp_moment(&self, u: &SymMatrix) -> SymMatrix {
        let mut s = SymMatrix::zeros(self.dim);
        let mut ux = vec![0.0; self.dim];
        for (x, p) in self.iter() {
            u.mul_vec_into(x, &mut ux);
            let n = norm(&ux);
            if n > 0.0 {
                s.add_outer(&ux, p / n);
            }
        }
        s
    }

    /// E[Wx xᵀW/(1 + γ‖Wx‖)].
    pub fn dp_moment(&self, w: &SymMatrix, gamma: f64) -> SymMatrix {
        let mut s = SymMatrix::zeros(self.dim);
        let mut wx = vec![0.0; self.dim];
        for (x, p) in self.iter() {
            w.mul_vec_into(x, &mut wx);
            let n = norm(&wx);
            s.add_outer(&wx, p / (1.0 + gamma * n));
        }
        s
    }

    /// E[U x xᵀ/‖Ux‖] (not symmetric).
    pub fn ldp_design(&self, u: &SymMatrix) -> DMatrix<f64> {
        self.weighted_design(u, |n| if n > 0.0 { 1.0 / n } else { 0.0 })
    }

    /// E[W x xᵀ/(1 + γ‖Wx‖)] (not symmetric).
    pub fn dp_design(&self, w: &SymMatrix, gamma: f64) -> DMatrix<f64> {
        self.weighted_design(w, |n| 1.0 / (1.0 + gamma * n))
    }

    fn weighted_design(&self, u: &SymMatrix, weight: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d = self.dim;
        let mut out = DMatrix::zeros(d, d);
        let mut ux = vec![0.0; d];
        for (x, p) in self.iter() {
            u.mul_vec_into(x, &mut ux);
            let c = p * weight(norm(&ux));
            if c == 0.0 {
                continue;
            }
            for i in 0..d {
                for j in 0..d {
                    out[(i, j)] += c * ux[i] * x[j];
                }
            }
        }
        out
    }

    /// E[U x · m(x)/‖Ux‖] for a regression function m.
    pub fn ldp_cross(&self, u: &SymMatrix, m: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.weighted_cross(u, m, |n| if n > 0.0 { 1.0 / n } else { 0.0 })
    }

    /// E[W x · m(x)/(1 + γ‖Wx‖)].
    pub fn dp_cross(&self, w: &SymMatrix, gamma: f64, m: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.weighted_cross(w, m, |n| 1.0 / (1.0 + gamma * n))
    }

    fn weighted_cross(&self, u: &SymMatrix, m: impl Fn(&[f64]) -> f64, weight: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let mut ux = vec![0.0; self.dim];
        for (x, p) in self.iter() {
            u.mul_vec_into(x, &mut ux);
            let c = p * m(x) * weight(norm(&ux));
            for (o, v) in out.iter_mut().zip(&ux) {
                *o += c * v;
            }
        }
        out
    }

    /// Largest atom norm.
    pub fn max_norm(&self) -> f64 {
        self.atoms.iter().map(|a| norm(a)).fold(0.0, f64::max)
    }
}

/// Pseudo-inverse of a PSD matrix, dropping eigenvalues below `rel_tol·λ_max`.
pub fn pseudo_inverse(m: &SymMatrix, rel_tol: f64) -> Result<SymMatrix> {
    let e = m.eig()?;
    let d = m.dim();
    let cutoff = rel_tol * e.values[0].abs().max(f64::MIN_POSITIVE);
    let mut out = DMatrix::zeros(d, d);
    for (c, &v) in e.values.iter().enumerate() {
        if v > cutoff {
            let col = e.vectors.column(c);
            out += col * col.transpose() / v;
        }
    }
    Ok(SymMatrix::from_matrix(out)?)
}

/// κ_c(p): the smallest threshold M among atom Σ†-norms with
/// E[xxᵀ 1{‖x‖_{Σ†} ≤ M}] ⪰ c·Σ. Returns ∞ when none qualifies.
pub fn kappa_p(oracle: &MomentOracle, c: f64) -> Result<f64> {
    let sigma = oracle.covariance();
    let pinv = pseudo_inverse(&sigma, 1e-12)?;
    let norms: Vec<f64> = oracle.atoms.iter().map(|x| pinv.quad_form(x).max(0.0).sqrt()).collect();
    let mut candidates = norms.clone();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let target = sigma.scale(c);
    for m in candidates {
        let mut trunc = SymMatrix::zeros(oracle.dim);
        for ((x, p), &n) in oracle.iter().zip(&norms) {
            if n <= m {
                trunc.add_outer(x, p);
            }
        }
        if trunc.sub(&target).min_eig()? >= -1e-10 {
            return Ok(m);
        }
    }
    Ok(f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_distribution_point_mass() {
        let p = make_simple_distribution(&SymMatrix::diag(&[1.0]), 1.0).unwrap();
        let f = p.as_finite().unwrap();
        assert_eq!(f.atoms, vec![vec![1.0]]);
        assert_eq!(f.probs, vec![1.0]);
    }

    #[test]
    fn simple_distribution_quarter_identity() {
        let p = make_simple_distribution(&SymMatrix::scaled_identity(2, 0.25), 1.0).unwrap();
        let f = p.as_finite().unwrap();
        assert_eq!(f.atoms, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert_eq!(f.probs, vec![0.25, 0.25, 0.5]);
        let cov = moment_oracle(&p).unwrap().covariance();
        assert!(cov.max_abs_diff(&SymMatrix::scaled_identity(2, 0.25)) < 1e-15);
    }

    #[test]
    fn simple_distribution_reproduces_general_covariance() {
        let cov = SymMatrix::from_rows(&[vec![0.3, 0.1], vec![0.1, 0.2]]).unwrap();
        let p = make_simple_distribution(&cov, 1.0).unwrap();
        let back = moment_oracle(&p).unwrap().covariance();
        assert!(back.max_abs_diff(&cov) < 1e-12);
        assert!(matches!(
            make_simple_distribution(&SymMatrix::diag(&[0.8, 0.8]), 1.0),
            Err(CovariateError::TraceTooLarge { .. })
        ));
    }

    #[test]
    fn perturbed_distribution_hits_min_eigen_direction() {
        let p = make_simple_distribution(&SymMatrix::diag(&[0.04, 0.5]), 1.0).unwrap();
        // ρ² must equal λ_min = 0.04.
        let q = make_perturbed_distribution(&p, 0.2).unwrap();
        let f = q.as_finite().unwrap();
        let i = f.atoms.iter().position(|a| (a[0].abs() - 1.0).abs() < 1e-9 && a[1].abs() < 1e-6).unwrap();
        assert!((f.probs[i] - (0.8 * 0.04 + 0.2)).abs() < 1e-9);
        assert!((f.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perturbed_distribution_interior_and_infeasible() {
        let p = make_simple_distribution(&SymMatrix::diag(&[0.04, 0.5]), 1.0).unwrap();
        let rho = 0.5;
        let q = make_perturbed_distribution(&p, rho).unwrap();
        let f = q.as_finite().unwrap();
        let e = f.atoms.last().unwrap();
        let sigma = moment_oracle(&p).unwrap().covariance();
        assert!((sigma.quad_form(e) - rho * rho).abs() < 1e-11);
        assert!((norm(e) - 1.0).abs() < 1e-12);
        match make_perturbed_distribution(&p, 0.9) {
            Err(CovariateError::InfeasiblePerturbation { lo, hi, .. }) => {
                assert!((lo - 0.2).abs() < 1e-12 && (hi - 0.5f64.sqrt()).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(make_perturbed_distribution(&p, 0.0).unwrap(), p);
    }

    #[test]
    fn dataset_point_mass_noiseless() {
        let p = CovariateDistribution::finite(vec![vec![0.5, 0.5]], vec![1.0], 1.0).unwrap();
        let l = LabelMechanism::noiseless(vec![0.2, 0.4]);
        let ds = sample_dataset(&p, &l, 3, &mut RngStream::new(1)).unwrap();
        assert_eq!(ds.len(), 3);
        for t in 0..3 {
            assert_eq!(ds.x(t), &[0.5, 0.5]);
            assert!((ds.y(t) - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn samplers_respect_bounds() {
        let mut rng = RngStream::new(4);
        let dists = vec![
            CovariateDistribution::sphere_uniform(4, 2.0).unwrap(),
            CovariateDistribution::product_rademacher(4, 1.5).unwrap(),
            CovariateDistribution::clipped_gaussian(SymMatrix::scaled_identity(4, 4.0), 1.0).unwrap(),
        ];
        for dist in &dists {
            let l = LabelMechanism::rademacher(vec![0.1, 0.0, 0.0, 0.1]);
            let ds = sample_dataset(dist, &l, 2000, &mut rng).unwrap();
            for t in 0..ds.len() {
                assert!(norm(ds.x(t)) <= dist.bound * (1.0 + 1e-12));
                assert!(ds.y(t).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn oracle_single_atom_and_isotropic() {
        let p = CovariateDistribution::finite(vec![vec![1.0]], vec![1.0], 1.0).unwrap();
        let o = moment_oracle(&p).unwrap();
        let u = SymMatrix::diag(&[0.7]);
        assert!((o.ldp_moment(&u).get(0, 0) - 0.7).abs() < 1e-15);
        let iso = CovariateDistribution::finite(
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            vec![1.0 / 3.0; 3],
            1.0,
        )
        .unwrap();
        let o = moment_oracle(&iso).unwrap();
        let m = o.ldp_moment(&SymMatrix::scaled_identity(3, 2.5));
        assert!(m.max_abs_diff(&SymMatrix::scaled_identity(3, 2.5 / 3.0)) < 1e-15);
    }

    #[test]
    fn zero_atom_contributes_nothing() {
        let p = CovariateDistribution::finite(vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![0.5, 0.5], 1.0).unwrap();
        let o = moment_oracle(&p).unwrap();
        let m = o.ldp_moment(&SymMatrix::identity(2));
        assert!(m.max_abs_diff(&SymMatrix::diag(&[0.5, 0.0])) < 1e-15);
        assert!(moment_oracle(&CovariateDistribution::sphere_uniform(2, 1.0).unwrap()).is_err());
    }

    #[test]
    fn kappa_examples() {
        let p = CovariateDistribution::finite(vec![vec![1.0, 0.0]], vec![1.0], 1.0).unwrap();
        assert!((kappa_p(&moment_oracle(&p).unwrap(), 0.5).unwrap() - 1.0).abs() < 1e-12);
        let rho = [0.3, 0.1, 0.02];
        let q = make_simple_distribution(&SymMatrix::diag(&rho), 1.0).unwrap();
        let o = moment_oracle(&q).unwrap();
        let k_half = kappa_p(&o, 0.5).unwrap();
        assert!((k_half - 1.0 / 0.02f64.sqrt()).abs() < 1e-9);
        assert!((kappa_p(&o, 1.0).unwrap() - k_half).abs() < 1e-12);
    }

    #[test]
    fn sign_identity_one_dimension() {
        // E[sign(x) y] = θ*·E|x| for the Rademacher model.
        let p = CovariateDistribution::finite(vec![vec![-1.0], vec![0.5], vec![0.0]], vec![0.3, 0.5, 0.2], 1.0).unwrap();
        let l = LabelMechanism::rademacher(vec![0.6]);
        let ds = sample_dataset(&p, &l, 1_000_000, &mut RngStream::new(8)).unwrap();
        let emp: f64 = (0..ds.len()).map(|t| ds.x(t)[0].signum() * (ds.x(t)[0] != 0.0) as u8 as f64 * ds.y(t)).sum::<f64>()
            / ds.len() as f64;
        let exact = 0.6 * (0.3 + 0.25);
        assert!((emp - exact).abs() < 4e-3, "{emp} vs {exact}");
    }

    #[test]
    fn rademacher_conditional_means() {
        let p = CovariateDistribution::finite(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.5, 0.5], 1.0).unwrap();
        let l = LabelMechanism::rademacher(vec![0.6, -0.3]);
        let ds = sample_dataset(&p, &l, 200_000, &mut RngStream::new(3)).unwrap();
        for (j, target) in [(0usize, 0.6), (1usize, -0.3)] {
            let ys: Vec<f64> = (0..ds.len()).filter(|&t| ds.x(t)[j] == 1.0).map(|t| ds.y(t)).collect();
            let n = ys.len() as f64;
            let m = ys.iter().sum::<f64>() / n;
            let band = 3.0 * ((1.0 - target * target) / n).sqrt();
            assert!((m - target).abs() <= band, "{m} vs {target} ± {band}");
        }
    }

    #[test]
    fn sampler_covariance_matches_oracle() {
        // ρ = 1/(α√T) at α = 1, T = 16; smaller ρ needs more than 1e6 draws for 1%.
        let rho = 0.25;
        let p = make_simple_distribution(&SymMatrix::scaled_identity(3, rho), 3f64.sqrt()).unwrap();
        let sampler = p.sampler().unwrap();
        let mut rng = RngStream::new(12);
        let n = 1_000_000;
        let mut acc = SymMatrix::zeros(3);
        let mut x = vec![0.0; 3];
        for _ in 0..n {
            sampler.sample_into(&mut rng, &mut x);
            acc.add_outer(&x, 1.0 / n as f64);
        }
        for j in 0..3 {
            assert!((acc.get(j, j) / rho - 1.0).abs() < 0.01, "{}", acc.get(j, j));
        }
    }

    #[test]
    fn misspecification_is_bounded_and_reported() {
        let p = CovariateDistribution::finite(vec![vec![1.0], vec![-1.0]], vec![0.5, 0.5], 1.0).unwrap();
        let mut l = LabelMechanism::rademacher(vec![0.5]);
        l.misspec = Some(Misspec { eps: 0.1, freq: 3.0 });
        l.validate(&p).unwrap();
        let o = moment_oracle(&p).unwrap();
        assert!((l.misspec_l2(&o) - 0.1 * 1.5f64.sin().abs()).abs() < 1e-12);
    }
}
