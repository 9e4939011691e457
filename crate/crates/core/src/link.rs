//! GLM link functions ν with their integrals ∫₀ᵗ ν and curvature floor μ_ν.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("tabulated link needs matching grids of length >= 2 (t: {t}, nu: {nu}, integral: {int})")]
    BadTable { t: usize, nu: usize, int: usize },
    #[error("tabulated link is not strictly increasing at grid point {0}")]
    NotMonotone(usize),
    #[error("tabulated integral disagrees with the trapezoid rule at grid point {index} by {gap}")]
    BadIntegral { index: usize, gap: f64 },
    #[error("tabulated grid must contain 0 and cover [-{0}, {0}]")]
    BadRange(f64),
    #[error("link leaves [-1, 1] on [-B, B]")]
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LinkKind {
    Identity,
    /// ν(t) = tanh(t/2).
    LogisticScaled,
    /// Piecewise-linear ν through `(t[i], nu[i])`; `integral[i]` is ∫₀^{t[i]} ν.
    Tabulated { t: Vec<f64>, nu: Vec<f64>, integral: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmLink {
    pub kind: LinkKind,
    /// Radius B of the argument range on which μ_ν is computed.
    pub bound: f64,
    /// min ν' over [−B, B].
    pub mu: f64,
}

impl GlmLink {
    pub fn identity(bound: f64) -> Self {
        Self { kind: LinkKind::Identity, bound, mu: 1.0 }
    }

    pub fn logistic_scaled(bound: f64) -> Self {
        let th = (bound / 2.0).tanh();
        Self { kind: LinkKind::LogisticScaled, bound, mu: 0.5 * (1.0 - th * th) }
    }

    pub fn tabulated(t: Vec<f64>, nu: Vec<f64>, integral: Vec<f64>, bound: f64) -> Result<Self, LinkError> {
        if t.len() < 2 || t.len() != nu.len() || t.len() != integral.len() {
            return Err(LinkError::BadTable { t: t.len(), nu: nu.len(), int: integral.len() });
        }
        if t[0] > -bound || t[t.len() - 1] < bound {
            return Err(LinkError::BadRange(bound));
        }
        let zero = t.iter().position(|&v| v == 0.0).ok_or(LinkError::BadRange(bound))?;
        let mut mu = f64::INFINITY;
        for i in 1..t.len() {
            if !(t[i] > t[i - 1]) || !(nu[i] > nu[i - 1]) {
                return Err(LinkError::NotMonotone(i));
            }
            if t[i] > -bound && t[i - 1] < bound {
                mu = mu.min((nu[i] - nu[i - 1]) / (t[i] - t[i - 1]));
            }
        }
        // Integrals must agree with the trapezoid rule, anchored at t = 0.
        let mut acc = vec![0.0; t.len()];
        for i in zero + 1..t.len() {
            acc[i] = acc[i - 1] + 0.5 * (nu[i] + nu[i - 1]) * (t[i] - t[i - 1]);
        }
        for i in (0..zero).rev() {
            acc[i] = acc[i + 1] - 0.5 * (nu[i] + nu[i + 1]) * (t[i + 1] - t[i]);
        }
        for i in 0..t.len() {
            let gap = (acc[i] - integral[i]).abs();
            if gap > 1e-6 * (1.0 + acc[i].abs()) {
                return Err(LinkError::BadIntegral { index: i, gap });
            }
        }
        let link = Self { kind: LinkKind::Tabulated { t, nu, integral: acc }, bound, mu };
        if link.nu(-bound).abs() > 1.0 + 1e-12 || link.nu(bound).abs() > 1.0 + 1e-12 {
            return Err(LinkError::Unbounded);
        }
        Ok(link)
    }

    pub fn nu(&self, s: f64) -> f64 {
        match &self.kind {
            LinkKind::Identity => s,
            LinkKind::LogisticScaled => (s / 2.0).tanh(),
            LinkKind::Tabulated { t, nu, .. } => {
                let i = segment(t, s);
                let w = (s - t[i]) / (t[i + 1] - t[i]);
                nu[i] + w * (nu[i + 1] - nu[i])
            }
        }
    }

    /// ∫₀ˢ ν.
    pub fn integral(&self, s: f64) -> f64 {
        match &self.kind {
            LinkKind::Identity => 0.5 * s * s,
            LinkKind::LogisticScaled => 2.0 * (s / 2.0).cosh().ln(),
            LinkKind::Tabulated { t, nu, integral } => {
                let i = segment(t, s);
                let v = self.nu(s);
                integral[i] + 0.5 * (nu[i] + v) * (s - t[i])
            }
        }
    }

    /// Integral loss ℓ(s, y) = −y·s + ∫₀ˢ ν.
    pub fn loss(&self, s: f64, y: f64) -> f64 {
        -y * s + self.integral(s)
    }

    /// Finite-difference check that ν' ≥ μ on a grid over [−B, B].
    pub fn verify_curvature(&self, points: usize) -> bool {
        let b = self.bound;
        let h = 2.0 * b / points as f64;
        (0..points).all(|i| {
            let s = -b + i as f64 * h;
            (self.nu(s + h) - self.nu(s)) / h >= self.mu * (1.0 - 1e-9)
        })
    }
}

/// Index i with t[i] ≤ s ≤ t[i+1], extrapolating on the end segments.
fn segment(t: &[f64], s: f64) -> usize {
    let i = t.partition_point(|&v| v <= s);
    i.saturating_sub(1).min(t.len() - 2)
}
