//! Pair-rate and brightness estimators, loss-budget arithmetic, and
//! nonlinear least-squares fits for the curve shapes the experiment uses.

pub mod fit;
pub mod optimizer;
pub mod rates;

pub use fit::{fit, FitModel, FitResult};
pub use rates::{
    estimate_rate_cavity, estimate_rate_single_pass, spectral_brightness, PerSecPerMilliwatt,
    PerSecPerMwPerMhz, Rate, RateEstimate, RateUnit, ReportedSource, REPORTED_SOURCES,
};
