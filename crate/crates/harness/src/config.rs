//! Versioned TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use iwpriv::bandits::{LdpEstimator, MaxOver, PrivacyModel, RegressionOracle};
use iwpriv::covariates::{make_perturbed_distribution, make_simple_distribution, CovariateDistribution, LabelKind, LabelMechanism};
use iwpriv::estimators::{DpTuning, GlmDpTuning, SspNoise};
use iwpriv::info_matrix::{Admissibility, Model};
use iwpriv::linalg::SymMatrix;
use iwpriv::link::GlmLink;
use iwpriv::privacy::{NoiseMode, PrivacyBudget};

use crate::metrics::Metric;
use crate::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SolveInfo,
    Regress,
    Bandit,
    Sweep,
    Separation,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::SolveInfo => "solve-info",
            Self::Regress => "regress",
            Self::Bandit => "bandit",
            Self::Sweep => "sweep",
            Self::Separation => "separation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    /// May be left out when the CLI subcommand names the kind.
    #[serde(default)]
    pub kind: Option<ExperimentKind>,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: usize,
    pub t_grid: Vec<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Wall-clock milliseconds per row. Turn off for byte-identical reruns.
    #[serde(default = "yes")]
    pub record_wall_time: bool,
    /// Append a `slope` row per (algorithm, metric) when the grid allows a fit.
    #[serde(default = "yes")]
    pub fit_slopes: bool,
    pub privacy: PrivacyConfig,
    #[serde(default)]
    pub distribution: Option<DistributionSpec>,
    /// Sample count of the frozen empirical measure used for continuous supports.
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default)]
    pub labels: LabelSpec,
    #[serde(default)]
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default)]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub bandit: Option<BanditSpec>,
    #[serde(default)]
    pub solve: Option<SolveSpec>,
}

fn default_name() -> String {
    "run".into()
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Failure probability handed to the estimators.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub noise: NoiseMode,
    #[serde(default)]
    pub paper_constants: bool,
    #[serde(default)]
    pub admissibility: Admissibility,
}

fn default_delta() -> f64 {
    0.05
}

impl PrivacyConfig {
    pub fn budget(&self) -> Result<PrivacyBudget, HarnessError> {
        PrivacyBudget::new(self.alpha, self.beta).map_err(|e| HarnessError::Config(format!("privacy: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DistributionSpec {
    Finite {
        atoms: Vec<Vec<f64>>,
        probs: Vec<f64>,
        #[serde(default = "unit")]
        bound: f64,
    },
    Sphere {
        dim: usize,
        #[serde(default = "unit")]
        bound: f64,
    },
    ProductRademacher {
        dim: usize,
        #[serde(default = "unit")]
        bound: f64,
    },
    /// Gaussian with diagonal covariance, rescaled onto the ball.
    ClippedGaussian {
        cov_diag: Vec<f64>,
        #[serde(default = "unit")]
        bound: f64,
    },
    /// Atoms B·e_j carrying the given second moments, plus 0.
    Simple {
        cov_diag: Vec<f64>,
        #[serde(default = "unit")]
        bound: f64,
    },
    /// The simple distribution with Σ* = ρI. Without `rho`, ρ = 1/(α√T) at each grid point.
    SimpleIsotropic {
        dim: usize,
        #[serde(default = "unit")]
        bound: f64,
        #[serde(default)]
        rho: Option<f64>,
    },
    /// (1−ρ)·base + ρ·δ_e. Without `rho`, ρ = 1/(α√T) at each grid point.
    Perturbed {
        base: Box<DistributionSpec>,
        #[serde(default)]
        rho: Option<f64>,
    },
}

fn unit() -> f64 {
    1.0
}

impl DistributionSpec {
    pub fn dim(&self) -> usize {
        match self {
            Self::Finite { atoms, .. } => atoms.first().map_or(0, |a| a.len()),
            Self::Sphere { dim, .. } | Self::ProductRademacher { dim, .. } | Self::SimpleIsotropic { dim, .. } => *dim,
            Self::ClippedGaussian { cov_diag, .. } | Self::Simple { cov_diag, .. } => cov_diag.len(),
            Self::Perturbed { base, .. } => base.dim(),
        }
    }

    /// Whether the built distribution changes with T.
    pub fn depends_on_t(&self) -> bool {
        match self {
            Self::SimpleIsotropic { rho, .. } => rho.is_none(),
            Self::Perturbed { rho, base } => rho.is_none() || base.depends_on_t(),
            _ => false,
        }
    }

    /// The distribution used at sample size `t`.
    pub fn build(&self, t: usize, alpha: f64) -> Result<CovariateDistribution, HarnessError> {
        let err = |e: iwpriv::covariates::CovariateError| HarnessError::Config(format!("distribution: {e}"));
        match self {
            Self::Finite { atoms, probs, bound } => {
                CovariateDistribution::finite(atoms.clone(), probs.clone(), *bound).map_err(err)
            }
            Self::Sphere { dim, bound } => CovariateDistribution::sphere_uniform(*dim, *bound).map_err(err),
            Self::ProductRademacher { dim, bound } => {
                CovariateDistribution::product_rademacher(*dim, *bound).map_err(err)
            }
            Self::ClippedGaussian { cov_diag, bound } => {
                CovariateDistribution::clipped_gaussian(SymMatrix::diag(cov_diag), *bound).map_err(err)
            }
            Self::Simple { cov_diag, bound } => make_simple_distribution(&SymMatrix::diag(cov_diag), *bound).map_err(err),
            Self::SimpleIsotropic { dim, bound, rho } => {
                let rho = rho.unwrap_or(1.0 / (alpha * (t as f64).sqrt()));
                make_simple_distribution(&SymMatrix::scaled_identity(*dim, rho), *bound).map_err(err)
            }
            Self::Perturbed { base, rho } => {
                let p = base.build(t, alpha)?;
                let rho = rho.unwrap_or(1.0 / (alpha * (t as f64).sqrt()));
                make_perturbed_distribution(&p, rho).map_err(err)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LinkName {
    #[default]
    Identity,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LabelNoise {
    #[default]
    Rademacher,
    Noiseless,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct LabelSpec {
    #[serde(default)]
    pub noise: LabelNoise,
    /// θ*; defaults to (1/(2B√d))·(1, …, 1).
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    #[serde(default)]
    pub link: LinkName,
}

impl LabelSpec {
    pub fn theta(&self, dim: usize, bound: f64) -> Vec<f64> {
        self.theta.clone().unwrap_or_else(|| vec![0.5 / (bound * (dim as f64).sqrt()); dim])
    }

    pub fn link(&self, bound: f64) -> GlmLink {
        match self.link {
            LinkName::Identity => GlmLink::identity(bound),
            LinkName::Logistic => GlmLink::logistic_scaled(bound),
        }
    }

    pub fn mechanism(&self, dim: usize, bound: f64) -> LabelMechanism {
        let theta = self.theta(dim, bound);
        match (self.link, self.noise) {
            (LinkName::Identity, LabelNoise::Rademacher) => LabelMechanism::rademacher(theta),
            (LinkName::Identity, LabelNoise::Noiseless) => LabelMechanism::noiseless(theta),
            // Noiseless GLM labels are rejected by `resolve`.
            (LinkName::Logistic, _) => {
                LabelMechanism { theta_star: theta, kind: LabelKind::Glm { link: self.link(bound) }, misspec: None }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimatorSpec {
    #[serde(rename = "simple-ldp-1d")]
    SimpleLdp1d,
    SspOls {
        #[serde(default = "local_ssp")]
        noise: SspNoise,
        #[serde(default)]
        lambda: f64,
    },
    IwLdp,
    IwDp {
        #[serde(default = "standard_dp")]
        tuning: DpTuning,
    },
    IwLdpFixedP,
    IwDpFixedP,
    GlmIwLdp,
    GlmIwDp {
        #[serde(default = "default_glm")]
        tuning: GlmDpTuning,
    },
    DpSgd {
        #[serde(default)]
        eta: Option<f64>,
    },
    LdpClippedSgd {
        #[serde(default)]
        epochs: Option<usize>,
        #[serde(default)]
        eta: Option<f64>,
        #[serde(default)]
        clip_r: Option<f64>,
    },
}

fn local_ssp() -> SspNoise {
    SspNoise::Local
}

fn standard_dp() -> DpTuning {
    DpTuning::Standard
}

fn default_glm() -> GlmDpTuning {
    GlmDpTuning::Default
}

impl EstimatorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::SimpleLdp1d => "simple-ldp-1d",
            Self::SspOls { .. } => "ssp-ols",
            Self::IwLdp => "iw-ldp",
            Self::IwDp { .. } => "iw-dp",
            Self::IwLdpFixedP => "iw-ldp-fixed-p",
            Self::IwDpFixedP => "iw-dp-fixed-p",
            Self::GlmIwLdp => "glm-iw-ldp",
            Self::GlmIwDp { .. } => "glm-iw-dp",
            Self::DpSgd { .. } => "dp-sgd",
            Self::LdpClippedSgd { .. } => "ldp-clipped-sgd",
        }
    }

    /// The information-matrix model whose weight the estimator reports, if any.
    pub fn weight_model(&self) -> Option<Model> {
        match self {
            Self::IwLdp | Self::IwLdpFixedP | Self::GlmIwLdp => Some(Model::Ldp),
            Self::IwDp { .. } | Self::IwDpFixedP | Self::GlmIwDp { .. } => Some(Model::Dp),
            _ => None,
        }
    }

    pub fn needs_oracle(&self) -> bool {
        matches!(self, Self::IwLdpFixedP | Self::IwDpFixedP)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BanditAlgo {
    #[default]
    Elimination,
    Gap,
    SquareCb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditSpec {
    #[serde(default)]
    pub algo: BanditAlgo,
    #[serde(default)]
    pub model: PrivacyModel,
    #[serde(default)]
    pub oracle: RegressionOracle,
    pub dim: usize,
    pub n_actions: usize,
    /// Finite contexts for the gap instance.
    #[serde(default = "default_contexts")]
    pub n_contexts: usize,
    #[serde(default = "default_gap")]
    pub delta_min: f64,
    #[serde(default = "unit")]
    pub c_lambda: f64,
    #[serde(default = "unit")]
    pub c_gamma: f64,
    #[serde(default)]
    pub max_over: MaxOver,
    #[serde(default)]
    pub ldp_estimator: LdpEstimator,
    /// Multiplies the SquareCB oracle rate.
    #[serde(default = "unit")]
    pub rate_constant: f64,
    /// Overrides the default δ = 1/T.
    #[serde(default)]
    pub delta: Option<f64>,
    /// RegretTrace CSV of the first replication.
    #[serde(default)]
    pub trace_out: Option<PathBuf>,
}

fn default_contexts() -> usize {
    8
}

fn default_gap() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSpec {
    pub model: Model,
    /// Defaults to 1/√T.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Defaults to 1/(α√T); ignored in the local model.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
}

fn default_tol() -> f64 {
    1e-9
}

fn default_iters() -> usize {
    60
}

fn default_mc() -> usize {
    10_000
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    /// Fills defaults that depend on the kind and checks every field.
    pub fn resolve(mut self, kind: Option<ExperimentKind>) -> Result<Self, HarnessError> {
        let bad = |path: &str, msg: String| Err(HarnessError::Config(format!("{path}: {msg}")));
        match (self.kind, kind) {
            (Some(a), Some(b)) if a != b => {
                return bad("kind", format!("config is `{}` but the command is `{}`", a.name(), b.name()))
            }
            (None, None) => return bad("kind", "missing".into()),
            (None, k) => self.kind = k,
            _ => {}
        }
        if self.version != SCHEMA_VERSION {
            return bad("version", format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.version));
        }
        if self.replications == 0 {
            return bad("replications", "must be at least 1".into());
        }
        if self.t_grid.is_empty() {
            return bad("t_grid", "must not be empty".into());
        }
        if self.t_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("t_grid", "must be strictly increasing".into());
        }
        if self.t_grid[0] == 0 {
            return bad("t_grid", "sample sizes must be positive".into());
        }
        self.privacy.budget()?;
        if !(self.privacy.delta > 0.0 && self.privacy.delta < 1.0) {
            return bad("privacy.delta", format!("must lie in (0, 1), got {}", self.privacy.delta));
        }
        if self.mc_samples == 0 {
            return bad("mc_samples", "must be at least 1".into());
        }
        let kind = self.kind.expect("set above");
        match kind {
            ExperimentKind::Separation => {
                if self.distribution.is_none() {
                    self.distribution = Some(DistributionSpec::SimpleIsotropic { dim: 3, bound: 1.0, rho: None });
                }
                if self.estimators.is_empty() {
                    self.estimators = vec![EstimatorSpec::IwLdp, EstimatorSpec::SspOls { noise: SspNoise::Local, lambda: 0.0 }];
                }
                if self.metrics.is_empty() {
                    self.metrics = vec![Metric::L1Err];
                }
            }
            ExperimentKind::Regress | ExperimentKind::Sweep => {
                if self.estimators.is_empty() {
                    return bad("estimators", "at least one estimator is required".into());
                }
                if self.metrics.is_empty() {
                    self.metrics = vec![Metric::L2Err];
                }
            }
            ExperimentKind::SolveInfo => {
                if self.solve.is_none() {
                    return bad("solve", "required for solve-info".into());
                }
                if self.metrics.is_empty() {
                    self.metrics = vec![Metric::Residual];
                }
            }
            ExperimentKind::Bandit => {
                let Some(b) = &self.bandit else {
                    return bad("bandit", "required for bandit runs".into());
                };
                if b.dim == 0 || b.n_actions == 0 {
                    return bad("bandit", "dim and n_actions must be positive".into());
                }
                if let Some(dist) = &self.distribution {
                    if b.algo == BanditAlgo::Gap {
                        return bad("distribution", "the gap instance draws its own contexts".into());
                    }
                    if dist.dim() != b.dim {
                        return bad("distribution", format!("dimension {} but bandit.dim is {}", dist.dim(), b.dim));
                    }
                    dist.build(*self.t_grid.last().unwrap(), self.privacy.alpha)?;
                }
                if self.metrics.is_empty() {
                    self.metrics = vec![Metric::Regret];
                }
            }
        }
        if kind != ExperimentKind::Bandit {
            let Some(dist) = &self.distribution else {
                return bad("distribution", "required".into());
            };
            let d = dist.dim();
            if d == 0 {
                return bad("distribution", "dimension must be positive".into());
            }
            if self.labels.link == LinkName::Logistic && self.labels.noise == LabelNoise::Noiseless {
                return bad("labels.noise", "noiseless labels need the identity link".into());
            }
            if let Some(theta) = &self.labels.theta {
                if theta.len() != d {
                    return bad("labels.theta", format!("length {} but the distribution has dimension {d}", theta.len()));
                }
            }
            // Build once at the first grid point so bad parameters surface as config errors.
            dist.build(self.t_grid[0], self.privacy.alpha)?;
        }
        for (i, m) in self.metrics.iter().enumerate() {
            if !m.applies_to(kind) {
                return bad(&format!("metrics[{i}]"), format!("`{}` is not produced by {} runs", m.name(), kind.name()));
            }
        }
        Ok(self)
    }

    pub fn kind(&self) -> ExperimentKind {
        self.kind.expect("resolved configs carry a kind")
    }
}
