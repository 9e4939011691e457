use serde::{Deserialize, Serialize};

use super::{BanditError, Result};
use crate::covariates::CovariateDistribution;
use crate::linalg::{dot, norm, SymMatrix};
use crate::link::GlmLink;
use crate::privacy::RngStream;

/// How contexts are drawn. A context is the |A| × d table of action features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ContextModel {
    /// A fixed list of contexts drawn with the given probabilities.
    Finite { contexts: Vec<Vec<Vec<f64>>>, probs: Vec<f64> },
    /// Fresh features every round: each action's feature is an independent
    /// draw from `features`.
    Generative { features: CovariateDistribution },
}

/// Observation noise around f*(x, a).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RewardNoise {
    /// r ∈ {−1, +1} with mean f*.
    #[default]
    Rademacher,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditEnv {
    pub dim: usize,
    pub n_actions: usize,
    pub bound: f64,
    pub theta_star: Vec<f64>,
    pub link: GlmLink,
    pub contexts: ContextModel,
    pub noise: RewardNoise,
}

/// One drawn context. `index` is set for finite context sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub index: Option<usize>,
    pub features: Vec<Vec<f64>>,
}

impl Context {
    pub fn phi(&self, a: usize) -> &[f64] {
        &self.features[a]
    }
}

impl BanditEnv {
    /// Linear rewards with features drawn independently per action.
    pub fn generative(theta_star: Vec<f64>, n_actions: usize, features: CovariateDistribution) -> Result<Self> {
        let env = Self {
            dim: features.dim,
            n_actions,
            bound: features.bound,
            link: GlmLink::identity(features.bound),
            theta_star,
            contexts: ContextModel::Generative { features },
            noise: RewardNoise::Rademacher,
        };
        env.validate()?;
        Ok(env)
    }

    /// Linear rewards over a finite context set.
    pub fn finite(theta_star: Vec<f64>, contexts: Vec<Vec<Vec<f64>>>, probs: Vec<f64>) -> Result<Self> {
        let first = contexts.first().ok_or_else(|| BanditError::Env("no contexts".into()))?;
        let n_actions = first.len();
        let dim = first.first().map_or(0, |v| v.len());
        let bound = contexts.iter().flatten().map(|v| norm(v)).fold(0.0, f64::max);
        let env = Self {
            dim,
            n_actions,
            bound,
            link: GlmLink::identity(bound.max(f64::MIN_POSITIVE)),
            theta_star,
            contexts: ContextModel::Finite { contexts, probs },
            noise: RewardNoise::Rademacher,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.n_actions == 0 {
            return Err(BanditError::Env("need at least one action and dimension".into()));
        }
        if self.theta_star.len() != self.dim {
            return Err(BanditError::Env(format!("theta* has length {}, features have {}", self.theta_star.len(), self.dim)));
        }
        match &self.contexts {
            ContextModel::Finite { contexts, probs } => {
                if contexts.len() != probs.len() {
                    return Err(BanditError::Env("one probability per context".into()));
                }
                let total: f64 = probs.iter().sum();
                if probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                    return Err(BanditError::Env(format!("context probabilities must sum to 1, got {total}")));
                }
                for ctx in contexts {
                    if ctx.len() != self.n_actions || ctx.iter().any(|v| v.len() != self.dim) {
                        return Err(BanditError::Env("every context needs |A| features of length d".into()));
                    }
                    for phi in ctx {
                        if norm(phi) > self.bound * (1.0 + 1e-12) {
                            return Err(BanditError::Env(format!("feature norm {} exceeds bound {}", norm(phi), self.bound)));
                        }
                        if self.mean_reward(phi).abs() > 1.0 + 1e-12 {
                            return Err(BanditError::Env("|f*(x, a)| must be at most 1".into()));
                        }
                    }
                }
            }
            ContextModel::Generative { features } => {
                if features.dim != self.dim {
                    return Err(BanditError::Env("feature distribution dimension mismatch".into()));
                }
                if self.bound * norm(&self.theta_star) > 1.0 + 1e-12 {
                    return Err(BanditError::Env("need B·‖θ*‖ ≤ 1 so that |f*| ≤ 1".into()));
                }
            }
        }
        Ok(())
    }

    pub fn mean_reward(&self, phi: &[f64]) -> f64 {
        self.link.nu(dot(phi, &self.theta_star))
    }

    pub fn sample_context(&self, rng: &mut RngStream) -> Result<Context> {
        match &self.contexts {
            ContextModel::Finite { contexts, probs } => {
                let mut acc = 0.0;
                let cdf: Vec<f64> = probs.iter().map(|p| {
                    acc += p;
                    acc
                }).collect();
                let i = rng.categorical(&cdf);
                Ok(Context { index: Some(i), features: contexts[i].clone() })
            }
            ContextModel::Generative { features } => {
                let sampler = features.sampler().map_err(|e| BanditError::Env(e.to_string()))?;
                Ok(Context { index: None, features: (0..self.n_actions).map(|_| sampler.sample(rng)).collect() })
            }
        }
    }

    pub fn rewards(&self, ctx: &Context) -> Vec<f64> {
        ctx.features.iter().map(|phi| self.mean_reward(phi)).collect()
    }

    pub fn draw_reward(&self, ctx: &Context, a: usize, rng: &mut RngStream) -> f64 {
        let f = self.mean_reward(ctx.phi(a));
        match self.noise {
            RewardNoise::None => f,
            RewardNoise::Rademacher => {
                if rng.bernoulli(((1.0 + f) / 2.0).clamp(0.0, 1.0)) {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// d_A: the largest rank of a context's feature set. For generative
    /// contexts this is the generic value min(d, |A|).
    pub fn action_dim(&self) -> usize {
        match &self.contexts {
            ContextModel::Finite { contexts, .. } => contexts.iter().map(|c| feature_rank(c)).max().unwrap_or(0),
            ContextModel::Generative { .. } => self.dim.min(self.n_actions),
        }
    }

    /// Smallest gap between an optimal and a suboptimal arm over the finite
    /// context set, or `None` for generative contexts or when every arm is
    /// optimal everywhere.
    pub fn certified_gap(&self) -> Option<f64> {
        let ContextModel::Finite { contexts, probs } = &self.contexts else {
            return None;
        };
        let mut gap = f64::INFINITY;
        for (ctx, p) in contexts.iter().zip(probs) {
            if *p == 0.0 {
                continue;
            }
            let f: Vec<f64> = ctx.iter().map(|phi| self.mean_reward(phi)).collect();
            let best = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in &f {
                if best - v > OPTIMAL_TOL {
                    gap = gap.min(best - v);
                }
            }
        }
        gap.is_finite().then_some(gap)
    }
}

/// Arms within this of the best mean reward count as optimal.
pub const OPTIMAL_TOL: f64 = 1e-12;

/// Rank of a feature set, with a relative eigenvalue cutoff.
pub fn feature_rank(features: &[Vec<f64>]) -> usize {
    span_basis(features).map_or(0, |b| b.len())
}

/// Orthonormal basis of span(features) (as rows), or `None` when all are zero.
pub(crate) fn span_basis(features: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let d = features.first()?.len();
    let mut s = SymMatrix::zeros(d);
    for v in features {
        s.add_outer(v, 1.0);
    }
    let eig = s.eig().ok()?;
    let top = eig.values.iter().cloned().fold(0.0, f64::max);
    if top <= 0.0 {
        return None;
    }
    let basis: Vec<Vec<f64>> = eig
        .values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > RANK_TOL * top)
        .map(|(i, _)| eig.vectors.column(i).iter().cloned().collect())
        .collect();
    Some(basis)
}

const RANK_TOL: f64 = 1e-10;

/// A finite instance with a certified gap: `n_contexts` contexts whose
/// action features are uniform on the unit sphere, resampled until every
/// suboptimal arm trails the optimum by at least `delta_min`.
pub fn gap_instance(
    dim: usize,
    n_actions: usize,
    n_contexts: usize,
    delta_min: f64,
    rng: &mut RngStream,
) -> Result<BanditEnv> {
    if n_actions < 2 || !(delta_min > 0.0 && delta_min < 2.0) {
        return Err(BanditError::Env("gap instance needs |A| ≥ 2 and 0 < Δ_min < 2".into()));
    }
    let mut theta = vec![0.0; dim];
    theta[0] = 1.0;
    let sphere = CovariateDistribution::sphere_uniform(dim, 1.0).map_err(|e| BanditError::Env(e.to_string()))?;
    let sampler = sphere.sampler().map_err(|e| BanditError::Env(e.to_string()))?;
    let mut contexts = Vec::with_capacity(n_contexts);
    let mut tries = 0usize;
    while contexts.len() < n_contexts {
        tries += 1;
        if tries > 1_000_000 {
            return Err(BanditError::Env(format!("could not realize a gap of {delta_min}")));
        }
        let ctx: Vec<Vec<f64>> = (0..n_actions).map(|_| sampler.sample(rng)).collect();
        let mut f: Vec<f64> = ctx.iter().map(|phi| dot(phi, &theta)).collect();
        f.sort_by(|a, b| b.total_cmp(a));
        if f[0] - f[1] >= delta_min {
            contexts.push(ctx);
        }
    }
    let probs = vec![1.0 / n_contexts as f64; n_contexts];
    BanditEnv::finite(theta, contexts, probs)
}
