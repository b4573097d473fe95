//! Simulation, regime classification and drift estimation for the
//! second-order Gaussian autoregression in continuous time.

pub mod cli;
pub mod error;
pub mod estimate;
pub mod io;
pub mod limit;
pub mod model;
pub mod montecarlo;
mod quad;
pub mod regime;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{ModelParams, Regime, RootPair};
