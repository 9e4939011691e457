//! Metric registry and the error measures computed from one estimate.

use serde::{Deserialize, Serialize};

use iwpriv::covariates::{CovariateDistribution, CovariateKind, MomentOracle};
use iwpriv::estimators::EstimateReport;
use iwpriv::info_matrix::Model;
use iwpriv::linalg::{dot, norm, sub};

use crate::config::ExperimentKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// ‖θ̂ − θ*‖₂.
    L2Err,
    /// (θ̂ − θ*)ᵀ Σ (θ̂ − θ*).
    SigmaErr,
    /// E|⟨x, θ̂ − θ*⟩|.
    L1Err,
    /// ‖U⁻¹(θ̂ − θ*)‖ with the estimator's own local weight.
    UinvErr,
    /// ‖W⁻¹(θ̂ − θ*)‖ with the estimator's own central weight.
    WinvErr,
    /// Cumulative regret at T.
    Regret,
    /// ‖F(U) − I‖_op of an exact solve.
    Residual,
    PopRatio,
    /// Fitted log-log slope of another metric.
    Slope,
    /// A failed task; the value is 1.
    Error,
}

pub const REGISTRY: [Metric; 10] = [
    Metric::L2Err,
    Metric::SigmaErr,
    Metric::L1Err,
    Metric::UinvErr,
    Metric::WinvErr,
    Metric::Regret,
    Metric::Residual,
    Metric::PopRatio,
    Metric::Slope,
    Metric::Error,
];

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Self::L2Err => "l2_err",
            Self::SigmaErr => "sigma_err",
            Self::L1Err => "l1_err",
            Self::UinvErr => "uinv_err",
            Self::WinvErr => "winv_err",
            Self::Regret => "regret",
            Self::Residual => "residual",
            Self::PopRatio => "pop_ratio",
            Self::Slope => "slope",
            Self::Error => "error",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        REGISTRY.into_iter().find(|m| m.name() == name)
    }

    /// Whether a config may request this metric for runs of `kind`.
    pub fn applies_to(self, kind: ExperimentKind) -> bool {
        use ExperimentKind::*;
        match self {
            Self::L2Err | Self::SigmaErr | Self::L1Err | Self::UinvErr | Self::WinvErr => {
                matches!(kind, Regress | Sweep | Separation)
            }
            Self::Regret => kind == Bandit,
            Self::Residual | Self::PopRatio => kind == SolveInfo,
            Self::Slope | Self::Error => false,
        }
    }

    pub fn needs_moments(self) -> bool {
        matches!(self, Self::SigmaErr | Self::L1Err)
    }
}

/// Second-moment information used by `sigma_err` and `l1_err`.
#[derive(Debug, Clone)]
pub enum Moments {
    /// Σ = (B²/d)·I with E|⟨x, v⟩| computed from the frozen measure.
    Isotropic { scale: f64, measure: MomentOracle },
    Measure(MomentOracle),
}

impl Moments {
    pub fn new(dist: &CovariateDistribution, measure: MomentOracle) -> Self {
        match dist.kind {
            CovariateKind::SphereUniform | CovariateKind::ProductRademacher => {
                Self::Isotropic { scale: dist.bound * dist.bound / dist.dim as f64, measure }
            }
            _ => Self::Measure(measure),
        }
    }

    pub fn measure(&self) -> &MomentOracle {
        match self {
            Self::Isotropic { measure, .. } | Self::Measure(measure) => measure,
        }
    }

    pub fn sigma_norm_sq(&self, v: &[f64]) -> f64 {
        match self {
            Self::Isotropic { scale, .. } => scale * dot(v, v),
            Self::Measure(m) => m.iter().map(|(x, p)| p * dot(x, v).powi(2)).sum(),
        }
    }

    pub fn l1(&self, v: &[f64]) -> f64 {
        self.measure().mean_abs_proj(v)
    }
}

/// Value of `metric` for one estimate, or a message saying why it is undefined.
pub fn evaluate(
    metric: Metric,
    rep: &EstimateReport,
    theta_star: &[f64],
    moments: Option<&Moments>,
) -> Result<f64, String> {
    let diff = sub(&rep.theta_hat, theta_star);
    let weighted = |model: Model| -> Result<f64, String> {
        match &rep.weight {
            Some(w) if w.model == model => rep.weighted_error(theta_star).map_err(|e| e.to_string()),
            _ => Err(format!("{} needs an estimator with a {model:?} weight", metric.name())),
        }
    };
    match metric {
        Metric::L2Err => Ok(norm(&diff)),
        Metric::SigmaErr => moments.map(|m| m.sigma_norm_sq(&diff)).ok_or_else(|| "no moments".into()),
        Metric::L1Err => moments.map(|m| m.l1(&diff)).ok_or_else(|| "no moments".into()),
        Metric::UinvErr => weighted(Model::Ldp),
        Metric::WinvErr => weighted(Model::Dp),
        other => Err(format!("{} is not an estimation metric", other.name())),
    }
}
