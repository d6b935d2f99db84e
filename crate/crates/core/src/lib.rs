//! Rayleigh-normal distributions and optimal approximate conversion between
//! i.i.d. probability distributions.
//!
//! The crate is layered bottom-up:
//!
//! - [`normal`]: Gaussian CDF, quantile and density-ratio helpers.
//! - [`rayleigh`]: the family `Z_v`, its roots, quantile and optimizer profile.
//! - [`distributions`]: finite distributions and log-domain block
//!   representations of i.i.d. powers.
//! - [`conversion`]: majorization and deterministic conversion fidelities,
//!   closed forms and brute-force oracles, maximum convertible copy numbers.
//! - [`asymptotics`]: second-order expansions and the convergence harness.
//! - [`locc`]: Schmidt spectra and LOCC conversion / cloning counts.

pub mod asymptotics;
pub mod conversion;
pub mod distributions;
pub mod error;
pub mod locc;
pub mod normal;
pub mod quadrature;
pub mod rayleigh;

pub use distributions::{BlockDistribution, FiniteDistribution};
pub use error::{Error, Result};
pub use normal::GaussParams;
pub use rayleigh::{z_cdf, z_quantile, RNParams};
