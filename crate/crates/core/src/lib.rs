//! Two-armed Bayesian bandit laboratory: Thompson Sampling in online
//! optimization form, the squared-regret optimal policy, a covariance
//! regularizer fix, and a Monte Carlo regret harness.

pub mod benefit_table;
pub mod cli;
pub mod numerics;
pub mod policies;
pub mod posterior;
pub mod sim;
