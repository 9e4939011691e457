//! Information-weighted private regression.
//!
//! Local and central differential-privacy estimators for linear models and
//! GLMs built on the information matrices U* and W*, plus the private
//! contextual-bandit algorithms that use them.

pub mod bandits;
pub mod covariates;
pub mod estimators;
pub mod info_matrix;
pub mod linalg;
pub mod link;
pub mod privacy;
