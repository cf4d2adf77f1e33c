//! Zero-inflation and overdispersion tests for count data based on expected
//! extreme order statistics.
//!
//! Count laws ([`DistributionSpec`]) are parametrized by their mean. The
//! [`extremes`] module evaluates expected maxima and minima of `k` copies,
//! [`estimation`] fits the Poisson, ZIP and NB null models, [`hypothesis`]
//! builds the Δ and Λ tests on top of them, [`selection`] picks the
//! subsample size `k`, and [`harness`] runs Monte Carlo level/power studies.

pub mod distributions;
pub mod error;
pub mod estimation;
pub mod extremes;
pub mod harness;
pub mod hypothesis;
pub mod numerics;
pub mod random;
pub mod selection;

pub use distributions::{CountSample, DistributionSpec, Family};
pub use error::{Error, Result};
pub use estimation::{FitResult, NullFamily};
pub use extremes::{DiscrepancySpec, Side};
pub use hypothesis::{BootstrapConfig, NullRefit, TestMethod, TestResult};
pub use numerics::SeriesTolerance;
pub use random::RandomStream;
