//! Scalar special functions used throughout the model.
//!
//! Gamma and log-Gamma are delegated to `statrs`; the Mittag-Leffler
//! function, the M-Wright law and the Gauss hypergeometric function are
//! implemented here for the parameter ranges the model induces.

mod hypergeometric;
mod mittag_leffler;
mod mwright;

pub use hypergeometric::gauss_2f1;
pub use mittag_leffler::{ln_mittag_leffler, mittag_leffler, MittagLeffler};
pub use mwright::{m_wright_density, m_wright_moment, sample_m_wright, GreyLaw};

use std::f64::consts::PI;

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// `1/Γ(x)`, zero at the poles.
pub fn recip_gamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    if x < 0.5 {
        // reflection: 1/Γ(x) = Γ(1-x) sin(πx) / π
        return gamma(1.0 - x) * (PI * x).sin() / PI;
    }
    1.0 / gamma(x)
}

/// Kahan-compensated accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recip_gamma_poles_and_reflection() {
        assert_eq!(recip_gamma(0.0), 0.0);
        assert_eq!(recip_gamma(-3.0), 0.0);
        // Γ(-1/2) = -2√π
        let expected = -1.0 / (2.0 * PI.sqrt());
        assert!((recip_gamma(-0.5) - expected).abs() < 1e-14);
        assert!((recip_gamma(5.0) - 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn kahan_recovers_small_terms() {
        let mut k = Kahan::default();
        k.add(1.0);
        for _ in 0..1000 {
            k.add(1e-16);
        }
        assert!((k.value() - (1.0 + 1e-13)).abs() < 1e-16);
    }
}
