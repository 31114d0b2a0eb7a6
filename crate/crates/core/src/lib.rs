//! Greedy A-, E- and D-optimal Bayesian experimental design with
//! approximate-supermodularity certificates and brute-force oracles.

pub mod certificates;
pub mod criteria;
pub mod datagen;
pub mod error;
pub mod greedy;
pub mod io;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod par;
pub mod sweep;

pub use criteria::Criterion;
pub use error::{Error, Result};
pub use greedy::{greedy_design, GreedyTrace};
pub use model::{Design, DesignState, Experiment, ExperimentId, Pool};
