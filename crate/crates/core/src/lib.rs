//! Simulation and analysis toolkit for a cavity-enhanced narrow-band
//! photon-pair source: quasi-phase-matching tuning curves, cavity
//! arithmetic, biphoton time-correlation functions with detector-response
//! convolution, Monte Carlo coincidence counting, and pair-rate estimation.

pub mod analysis;
pub mod cavity;
pub mod correlation;
pub mod detection;
pub mod error;
pub mod phase_matching;

pub use error::{Error, Result};
