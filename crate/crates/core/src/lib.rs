//! Grey Bergomi (gBergomi) stochastic volatility toolkit.
//!
//! The crate is organised bottom-up:
//!
//! * [`specfun`]: Mittag-Leffler, M-Wright, Gauss hypergeometric;
//! * [`ggbm`]: generalised grey Brownian motion laws and Volterra covariances;
//! * [`model`]: the gBergomi parameter set, forward variance and VIX functionals;
//! * [`montecarlo`]: VIX and spot simulation engines (Cholesky and Markovian);
//! * [`asymptotics`]: short-time ATM level/skew/curvature limits;
//! * [`pricing`]: Black-Scholes, implied volatility and smile fitting;
//! * [`calibration`]: joint SPX/VIX calibration.

pub mod asymptotics;
pub mod calibration;
pub mod error;
pub mod ggbm;
pub mod linalg;
pub mod model;
pub mod pricing;
pub mod montecarlo;
pub mod quadrature;
pub mod rng;
pub mod specfun;

pub use error::{Error, Result};
