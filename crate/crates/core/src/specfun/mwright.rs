//! The one-sided M-Wright law `Y_β`, the mixing variable of grey noise.
//!
//! Its Laplace transform is `E_β(-s)` and `E[Y^κ] = Γ(1+κ)/Γ(1+βκ)`.
//! Samples come from the Kanter representation of a one-sided β-stable
//! variate `S`: `Y = S^{-β} = (E / A(U))^{1-β}` with `E ~ Exp(1)`,
//! `U ~ Uniform(0, π)` and Zolotarev's function
//! `A(u) = (sin βu / sin u)^{1/(1-β)} · sin((1-β)u) / sin βu`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, OpenClosed01};
use serde::{Deserialize, Serialize};

use super::{ln_gamma, MittagLeffler};
use crate::error::{domain, Error, Result};
use crate::quadrature::{integrate, QuadTol};

const DENSITY_MAX_TERMS: usize = 300;
/// Largest tolerated ratio between the biggest series term and the sum.
const DENSITY_CANCELLATION_LIMIT: f64 = 1e3;

/// Law of the mixing variable `Y_β`, `β ∈ (0, 1]`. `β = 1` is the point mass at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreyLaw {
    beta: f64,
}

impl GreyLaw {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return domain(format!("M-Wright index must lie in (0, 1], got {beta}"));
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_degenerate(&self) -> bool {
        self.beta == 1.0
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        m_wright_density(self.beta, x)
    }

    pub fn moment(&self, kappa: f64) -> Result<f64> {
        m_wright_moment(self, kappa)
    }

    /// `E[exp(-s Y)] = E_β(-s)`.
    pub fn laplace(&self, s: f64) -> Result<f64> {
        MittagLeffler::new(self.beta)?.eval(-s)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_m_wright(self, rng)
    }
}

/// `ln A(u)` for Zolotarev's function.
fn ln_zolotarev(beta: f64, u: f64) -> f64 {
    let sb = (beta * u).sin().ln();
    let s = u.sin().ln();
    let sc = ((1.0 - beta) * u).sin().ln();
    (sb - s) / (1.0 - beta) + sc - sb
}

/// Density of `Y_β` at `x ≥ 0`, for `β ∈ (0, 1)`.
pub fn m_wright_density(beta: f64, x: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return domain(format!(
            "M-Wright density needs β in (0, 1) (β = 1 is a point mass), got {beta}"
        ));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return domain(format!("M-Wright density needs x ≥ 0, got {x}"));
    }
    match density_series(beta, x) {
        Ok(v) => Ok(v),
        Err(_) => density_kanter(beta, x),
    }
}

/// `Σ (-x)ⁿ / (n! Γ(1-β-βn))`, rewritten via reflection as
/// `Σ (-x)ⁿ sin(πβ(n+1)) Γ(β(n+1)) / (π n!)`.
fn density_series(beta: f64, x: f64) -> Result<f64> {
    let ln_x = if x > 0.0 { x.ln() } else { f64::NEG_INFINITY };
    let mut acc = super::Kahan::default();
    let mut max_mag = 0.0_f64;
    for n in 0..DENSITY_MAX_TERMS {
        let nf = n as f64;
        let arg = beta * (nf + 1.0);
        let ln_mag = if n == 0 {
            ln_gamma(arg) - PI.ln()
        } else {
            nf * ln_x + ln_gamma(arg) - ln_gamma(nf + 1.0) - PI.ln()
        };
        let mag = ln_mag.exp();
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        acc.add(sign * (PI * arg).sin() * mag);
        max_mag = max_mag.max(mag);
        if n > 0 && mag < 1e-17 * acc.value().abs() {
            if max_mag > DENSITY_CANCELLATION_LIMIT * acc.value().abs() {
                return Err(Error::NonConvergence {
                    what: "M-Wright series (cancellation)",
                    terms: n,
                    partial: acc.value(),
                });
            }
            return Ok(acc.value().max(0.0));
        }
        if x == 0.0 {
            return Ok(acc.value());
        }
    }
    Err(Error::NonConvergence {
        what: "M-Wright series",
        terms: DENSITY_MAX_TERMS,
        partial: acc.value(),
    })
}

/// Density from the Kanter representation:
/// `M_β(y) = (1/π) ∫₀^π A(u)/(1-β) · y^{β/(1-β)} · exp(-A(u) y^{1/(1-β)}) du`.
fn density_kanter(beta: f64, y: f64) -> Result<f64> {
    if y == 0.0 {
        return density_series(beta, 0.0);
    }
    let p = 1.0 / (1.0 - beta);
    let ln_y = y.ln();
    let scale = (p * ln_y).exp();
    let integrand = |u: f64| {
        let ln_a = ln_zolotarev(beta, u);
        let a = ln_a.exp();
        (ln_a + p.ln() + beta * p * ln_y - a * scale).exp()
    };
    match integrate(integrand, 0.0, PI, QuadTol::new(1e-300, 1e-13)) {
        Ok(r) => Ok(r.value / PI),
        // far tail: a needle-thin peak far below any resolvable density
        Err(Error::NonConvergence { partial, .. }) if partial < 1e-200 => Ok(partial / PI),
        Err(e) => Err(e),
    }
}

/// `E[Y_β^κ] = Γ(1+κ)/Γ(1+βκ)` for `κ > -1`.
pub fn m_wright_moment(law: &GreyLaw, kappa: f64) -> Result<f64> {
    if !(kappa > -1.0) || !kappa.is_finite() {
        return domain(format!("M-Wright moments exist for κ > -1, got {kappa}"));
    }
    if law.is_degenerate() || kappa == 0.0 {
        return Ok(1.0);
    }
    Ok((ln_gamma(1.0 + kappa) - ln_gamma(1.0 + law.beta * kappa)).exp())
}

/// One draw of `Y_β`; exactly 1 for `β = 1`.
///
/// Always consumes the same amount of randomness, so streams stay aligned
/// across values of β.
pub fn sample_m_wright<R: Rng + ?Sized>(law: &GreyLaw, rng: &mut R) -> f64 {
    let r: f64 = OpenClosed01.sample(rng);
    let e: f64 = Exp1.sample(rng);
    if law.is_degenerate() {
        return 1.0;
    }
    let beta = law.beta;
    // u = π gives sin u = 0 and A = ∞; pull it into the open interval.
    let u = (PI * r).min(PI * (1.0 - f64::EPSILON));
    ((1.0 - beta) * (e.ln() - ln_zolotarev(beta, u))).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gaussian_special_case() {
        let inv_sqrt_pi = 1.0 / PI.sqrt();
        assert!((m_wright_density(0.5, 0.0).unwrap() - inv_sqrt_pi).abs() < 1e-14);
        let at_two = (-1.0f64).exp() * inv_sqrt_pi;
        assert!((m_wright_density(0.5, 2.0).unwrap() - at_two).abs() < 1e-13);
    }

    #[test]
    fn kanter_and_series_agree_where_both_work() {
        for beta in [0.3, 0.6, 0.8] {
            for x in [0.2, 0.5, 0.9] {
                let s = density_series(beta, x).unwrap();
                let k = density_kanter(beta, x).unwrap();
                assert!(((s - k) / s).abs() < 1e-10, "beta={beta} x={x}: {s} vs {k}");
            }
        }
    }

    #[test]
    fn density_domain() {
        assert!(m_wright_density(1.0, 1.0).is_err());
        assert!(m_wright_density(0.5, -0.1).is_err());
        assert!(GreyLaw::new(0.0).is_err());
        assert!(GreyLaw::new(1.0001).is_err());
    }

    #[test]
    fn moments() {
        let law = GreyLaw::new(0.9).unwrap();
        assert_eq!(m_wright_moment(&law, 0.0).unwrap(), 1.0);
        let one = GreyLaw::new(1.0).unwrap();
        assert_eq!(m_wright_moment(&one, 3.7).unwrap(), 1.0);
        let half = GreyLaw::new(0.5).unwrap();
        let expected = 2.0 / PI.sqrt();
        assert!((m_wright_moment(&half, 1.0).unwrap() - expected).abs() < 1e-14);
        assert!(m_wright_moment(&half, -1.0).is_err());
    }

    #[test]
    fn degenerate_sampler() {
        let law = GreyLaw::new(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            assert_eq!(law.sample(&mut rng), 1.0);
        }
    }

    #[test]
    fn samples_are_positive_and_finite() {
        let law = GreyLaw::new(0.11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let y = law.sample(&mut rng);
            assert!(y.is_finite() && y >= 0.0);
        }
    }
}
