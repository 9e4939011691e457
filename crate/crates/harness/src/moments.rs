//! Frozen empirical measures standing in for continuous covariate laws.

use iwpriv::covariates::{moment_oracle, CovariateDistribution, MomentOracle};
use iwpriv::privacy::RngStream;

use crate::HarnessError;

/// Smallest sample count accepted for a frozen measure.
pub const MIN_MC_SAMPLES: usize = 10_000;

/// Uniform measure on `samples` fresh draws from `dist`. The measure is fixed
/// by `rng`, so every F-application of one solve sees the same points.
pub fn estimate_moments_mc(
    dist: &CovariateDistribution,
    samples: usize,
    rng: &mut RngStream,
) -> Result<MomentOracle, HarnessError> {
    if samples < MIN_MC_SAMPLES {
        return Err(HarnessError::Config(format!("mc_samples: need at least {MIN_MC_SAMPLES}, got {samples}")));
    }
    let sampler = dist.sampler().map_err(|e| HarnessError::Numerical(e.to_string()))?;
    let points = (0..samples).map(|_| sampler.sample(rng)).collect();
    Ok(MomentOracle::empirical(dist.dim, points))
}

/// The exact oracle for finite supports, a frozen measure otherwise.
pub fn oracle_for(dist: &CovariateDistribution, samples: usize, rng: &mut RngStream) -> Result<MomentOracle, HarnessError> {
    match dist.as_finite() {
        Some(_) => moment_oracle(dist).map_err(|e| HarnessError::Numerical(e.to_string())),
        None => estimate_moments_mc(dist, samples, rng),
    }
}
