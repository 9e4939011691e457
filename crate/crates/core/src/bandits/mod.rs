//! Private contextual bandits: action elimination over spanners (central
//! and local models) and SquareCB with private regression oracles.

mod elimination;
mod env;
mod spanner;
mod squarecb;
mod trace;

use std::ops::Range;

pub use elimination::{
    eliminate, run_elimination_bandit, run_gap_instance, BanditRun, EliminationConfig, EpochSummary, LdpEstimator,
    MaxOver, PrivacyModel,
};
pub use env::{feature_rank, gap_instance, BanditEnv, Context, ContextModel, RewardNoise, OPTIMAL_TOL};
pub use spanner::{barycentric_spanner, spanner_coefficients, spanner_constant, SPANNER_C};
pub use squarecb::{igw_probabilities, oracle_rate, square_cb, RegressionOracle, SquareCbConfig, SquareCbEpoch, SquareCbRun};
pub use trace::{RegretTrace, RoundRecord, TraceRow};

#[derive(Debug, thiserror::Error)]
pub enum BanditError {
    #[error("invalid environment: {0}")]
    Env(String),
    #[error("invalid bandit configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, BanditError>;

/// Epoch j covers rounds [2^j − 1, 2^{j+1} − 1), so 2^{j+1} − 1 rounds have
/// been played when it ends. The last epoch is cut at the horizon.
pub fn doubling_schedule(horizon: usize) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut j = 0u32;
    loop {
        let start = (1usize << j) - 1;
        if start >= horizon {
            break;
        }
        out.push(start..((1usize << (j + 1)) - 1).min(horizon));
        j += 1;
    }
    out
}
