//! Distributed clipped stochastic subgradient methods for non-smooth,
//! weakly convex optimization under heavy-tailed gradient noise, plus the
//! measurement apparatus (Moreau-envelope stationarity, consensus tracking,
//! tail diagnostics, schedule validation) needed to study them empirically.

pub mod baselines;
pub mod container;
pub mod dssm;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod moreau;
pub mod noise;
pub mod objectives;
pub mod rng;
pub mod topology;

pub use error::{HtoptError, Result};
