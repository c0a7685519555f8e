//! Simulation and nonparametric estimation for non-homogeneous marked
//! renewal processes observed along a single trajectory.
//!
//! A process is given by its jump rate `λ(x, t)`, transition kernel and
//! deterministic censorship `t*(x)` ([`model`]). The embedded chain of marks
//! and sojourns is simulated in [`simulate`]; the cumulative rate is
//! estimated cell by cell with a Nelson-Aalen type estimator ([`estimate`])
//! and smoothed into a jump-rate estimate ([`smooth`]).

pub mod counting;
pub mod error;
pub mod estimate;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod partition;
pub mod quad;
pub mod simulate;
pub mod smooth;

pub use error::{Error, Result};
