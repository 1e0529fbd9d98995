//! Short-time at-the-money limits for VIX and SPX options.
//!
//! All formulas assume a flat forward variance curve `ξ0`, so `VIX₀² = ξ0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{ModelParams, VixConvention};
use crate::quadrature::{integrate, QuadTol};
use crate::specfun::{gamma, ln_gamma, MittagLeffler};

/// Inputs of the closed-form limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticInputs {
    /// Flat forward variance.
    pub xi0: f64,
    pub hurst: f64,
    pub beta: f64,
    pub eta: f64,
    /// VIX window.
    pub delta: f64,
    /// Market expiry used to scale curvature and skew targets.
    pub t_mkt: f64,
}

impl AsymptoticInputs {
    pub fn new(xi0: f64, hurst: f64, beta: f64, eta: f64, delta: f64, t_mkt: f64) -> Result<Self> {
        let a = Self {
            xi0,
            hurst,
            beta,
            eta,
            delta,
            t_mkt,
        };
        a.validate()?;
        Ok(a)
    }

    /// Takes `ξ0` from a flat curve; any other curve is refused.
    pub fn from_model(p: &ModelParams, conv: &VixConvention, t_mkt: f64) -> Result<Self> {
        let xi0 = p.xi0.flat_level().ok_or_else(|| {
            Error::Domain(format!(
                "short-time limits need a flat forward variance curve, got {}",
                p.xi0.label()
            ))
        })?;
        Self::new(xi0, p.hurst, p.beta, p.eta, conv.delta, t_mkt)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.xi0, self.hurst, self.beta, self.eta, self.delta, self.t_mkt]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return domain("asymptotic inputs must be finite");
        }
        if !(self.xi0 > 0.0) {
            return domain(format!("ξ0 must be positive, got {}", self.xi0));
        }
        if !(self.hurst > 0.0 && self.hurst < 0.5) {
            return domain(format!("short-time limits need H in (0, 1/2), got {}", self.hurst));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return domain(format!("β must lie in (0, 1], got {}", self.beta));
        }
        if !(self.eta >= 0.0) {
            return domain(format!("η must be non-negative, got {}", self.eta));
        }
        if !(self.delta > 0.0) {
            return domain(format!("Δ must be positive, got {}", self.delta));
        }
        if !(self.t_mkt > 0.0) {
            return domain(format!("market expiry must be positive, got {}", self.t_mkt));
        }
        Ok(())
    }

    /// `𝔠 = 1/Γ(H+1/2)`
    pub fn c(&self) -> f64 {
        1.0 / gamma(self.hurst + 0.5)
    }

    fn check_curvature_regime(&self) -> Result<()> {
        if !(self.hurst < 1.0 / 6.0) {
            return domain(format!("the curvature limit needs H in (0, 1/6), got {}", self.hurst));
        }
        Ok(())
    }
}

/// `E[√Y_β] = √π / (2Γ(1+β/2))`
fn mean_sqrt_y(beta: f64) -> f64 {
    PI.sqrt() / (2.0 * gamma(1.0 + beta / 2.0))
}

/// `J1 = ξ0 η𝔠 · √π/(2Γ(1+β/2)) · Δ^{H+1/2}/(H+1/2)`
pub fn j1(a: &AsymptoticInputs) -> Result<f64> {
    a.validate()?;
    let hp = a.hurst + 0.5;
    Ok(a.xi0 * a.eta * a.c() * mean_sqrt_y(a.beta) * a.delta.powf(hp) / hp)
}

/// `J2 = ξ0 η²𝔠² Δ^{2H} / (2H Γ(1+β))`
pub fn j2(a: &AsymptoticInputs) -> Result<f64> {
    a.validate()?;
    let ec = a.eta * a.c();
    Ok(a.xi0 * ec * ec * a.delta.powf(2.0 * a.hurst) / (gamma(1.0 + a.beta) * 2.0 * a.hurst))
}

/// `3√π / (4Γ(1+3β/2)(3H-1/2))`
fn j3_prefactor(a: &AsymptoticInputs) -> Result<f64> {
    if a.hurst == 1.0 / 6.0 {
        return domain("J3 has a pole at H = 1/6");
    }
    Ok(3.0 * PI.sqrt() / (4.0 * gamma(1.0 + 1.5 * a.beta) * (3.0 * a.hurst - 0.5)))
}

/// `J3(T) = ξ0 η³𝔠³ · 3√π/(4Γ(1+3β/2)(3H-1/2)) · ((T+Δ)^{3H-1/2} - T^{3H-1/2})`
pub fn j3(t: f64, a: &AsymptoticInputs) -> Result<f64> {
    a.validate()?;
    if !(t > 0.0) || !t.is_finite() {
        return domain(format!("J3 needs T > 0, got {t}"));
    }
    let e = 3.0 * a.hurst - 0.5;
    let ec = a.eta * a.c();
    Ok(a.xi0 * ec.powi(3) * j3_prefactor(a)? * ((t + a.delta).powf(e) - t.powf(e)))
}

/// `lim_{T↓0} T^{1/2-3H} J3(T) = -ξ0 η³𝔠³ · 3√π/(4Γ(1+3β/2)(3H-1/2))` for `H < 1/6`.
pub fn j3_scaled_limit(a: &AsymptoticInputs) -> Result<f64> {
    a.validate()?;
    a.check_curvature_regime()?;
    let ec = a.eta * a.c();
    Ok(-a.xi0 * ec.powi(3) * j3_prefactor(a)?)
}

/// `∫_0^Δ E[D_0 V_r] dr` with the model's own normaliser `E_β(𝔟 r^{2H})`.
///
/// Agrees with [`j1`] at `β = 1`. For `β < 1` the closed form averages `√Y_β`
/// alone, while the model weights it by `exp(𝔟 Y r^{2H}) / E_β(𝔟 r^{2H})`.
pub fn j1_model(a: &AsymptoticInputs) -> Result<f64> {
    a.validate()?;
    let hp = a.hurst + 0.5;
    let ec = a.eta * a.c();
    let b = ec * ec / (4.0 * a.hurst);
    let ml = MittagLeffler::new(a.beta)?;
    let beta = a.beta;
    // E[√Y e^{sY}] = Σ s^k/k! Γ(k+3/2)/Γ(1+β(k+1/2))
    let weighted = |s: f64| -> Result<f64> {
        if s == 0.0 {
            return Ok(mean_sqrt_y(beta));
        }
        let ls = s.ln();
        let mut sum = 0.0;
        let mut prev = f64::NEG_INFINITY;
        for k in 0..10_000 {
            let kf = k as f64;
            let lt = kf * ls - ln_gamma(kf + 1.0) + ln_gamma(kf + 1.5) - ln_gamma(1.0 + beta * (kf + 0.5));
            let t = lt.exp();
            sum += t;
            if lt < prev && t < 1e-16 * sum {
                return Ok(sum);
            }
            prev = lt;
        }
        Err(Error::NonConvergence {
            what: "E[√Y exp(sY)] series",
            terms: 10_000,
            partial: sum,
        })
    };
    // u = r^{H+1/2}/(H+1/2) absorbs the kernel singularity
    let mut err = None;
    let upper = a.delta.powf(hp) / hp;
    let r = integrate(
        |u| {
            let r = (hp * u).powf(1.0 / hp);
            let s = b * r.powf(2.0 * a.hurst);
            match (weighted(s), ml.eval(s)) {
                (Ok(w), Ok(e)) => w / e,
                (Err(e), _) | (_, Err(e)) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        0.0,
        upper,
        QuadTol::new(1e-15, 1e-12),
    );
    if let Some(e) = err {
        return Err(e);
    }
    Ok(a.xi0 * ec * r?.value)
}

/// `lim_{T↓0} I_T = J1 / (2Δ VIX₀²)`
pub fn vix_atm_level_limit(a: &AsymptoticInputs) -> Result<f64> {
    Ok(j1(a)? / (2.0 * a.delta * a.xi0))
}

/// `lim_{T↓0} S_T = J2/(2J1) - J1/(2Δ VIX₀²)`
pub fn vix_atm_skew_limit(a: &AsymptoticInputs) -> Result<f64> {
    a.validate()?;
    // J2/(2J1) with the common factor ξ0 η𝔠 cancelled, so η = 0 gives 0
    let hp = a.hurst + 0.5;
    let ratio = a.eta * a.c() * a.delta.powf(2.0 * a.hurst) * hp
        / (gamma(1.0 + a.beta) * 4.0 * a.hurst * mean_sqrt_y(a.beta) * a.delta.powf(hp));
    Ok(ratio - vix_atm_level_limit(a)?)
}

/// `lim_{T↓0} T^{1/2-3H} C_T = 2Δ VIX₀² / (3 J1²) · lim T^{1/2-3H} J3(T)`, `H < 1/6`.
pub fn vix_atm_curvature_scaled_limit(a: &AsymptoticInputs) -> Result<f64> {
    a.validate()?;
    a.check_curvature_regime()?;
    let j1 = j1(a)?;
    if j1 == 0.0 {
        return domain("the curvature limit divides by J1 = 0 (η = 0)");
    }
    Ok(2.0 * a.delta * a.xi0 / (3.0 * j1 * j1) * j3_scaled_limit(a)?)
}

/// `lim_{T↓0} Î_T = √ξ0`
pub fn spx_atm_level_limit(a: &AsymptoticInputs) -> Result<f64> {
    a.validate()?;
    Ok(a.xi0.sqrt())
}

/// `ρη𝔠√π / ((2H+1)(2H+3)Γ(1+β/2))`, the SPX skew coefficient.
pub fn spx_skew_scaled_limit(a: &AsymptoticInputs, rho: f64) -> Result<f64> {
    a.validate()?;
    if !(-1.0..=1.0).contains(&rho) {
        return domain(format!("ρ must lie in [-1, 1], got {rho}"));
    }
    let h = a.hurst;
    Ok(rho * a.eta * a.c() * PI.sqrt() / ((2.0 * h + 1.0) * (2.0 * h + 3.0) * gamma(1.0 + a.beta / 2.0)))
}

/// Level, skew and scaled curvature of the VIX smile in the short-time limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VixLimits {
    pub level: f64,
    pub skew: f64,
    /// `None` outside `H < 1/6`.
    pub curvature_scaled: Option<f64>,
}

pub fn vix_limits(a: &AsymptoticInputs) -> Result<VixLimits> {
    let curvature_scaled = if a.hurst < 1.0 / 6.0 && a.eta > 0.0 {
        Some(vix_atm_curvature_scaled_limit(a)?)
    } else {
        None
    };
    Ok(VixLimits {
        level: vix_atm_level_limit(a)?,
        skew: vix_atm_skew_limit(a)?,
        curvature_scaled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ForwardCurve, Scenario};
    use proptest::prelude::*;

    fn reference(beta: f64) -> AsymptoticInputs {
        AsymptoticInputs::new(0.235 * 0.235, 0.07, beta, 1.23, 1.0 / 12.0, 0.094).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn rough_bergomi_reductions() {
        let a = reference(1.0);
        let (xi0, eta, h, d) = (a.xi0, a.eta, a.hurst, a.delta);
        let c = a.c();
        let hp = h + 0.5;
        assert!(rel(j1(&a).unwrap(), xi0 * eta * c * d.powf(hp) / hp) < 1e-14);
        assert!(rel(j2(&a).unwrap(), xi0 * eta * eta * c * c * d.powf(2.0 * h) / (2.0 * h)) < 1e-14);
        let skew = eta * d.powf(h - 0.5) / (2.0 * gamma(hp)) * (hp / (2.0 * h) - 1.0 / hp);
        assert!(rel(vix_atm_skew_limit(&a).unwrap(), skew) < 1e-13);
        let level = eta * c / 2.0 * d.powf(h - 0.5) / hp;
        assert!(rel(vix_atm_level_limit(&a).unwrap(), level) < 1e-14);
    }

    #[test]
    fn vanishing_vol_of_vol() {
        let mut a = reference(0.9);
        a.eta = 0.0;
        assert_eq!(j1(&a).unwrap(), 0.0);
        assert_eq!(j2(&a).unwrap(), 0.0);
        assert_eq!(j3(0.01, &a).unwrap(), 0.0);
        assert_eq!(vix_atm_level_limit(&a).unwrap(), 0.0);
        assert_eq!(vix_atm_skew_limit(&a).unwrap(), 0.0);
        assert!(vix_atm_curvature_scaled_limit(&a).is_err());
        assert_eq!(spx_atm_level_limit(&a).unwrap(), 0.235);
    }

    #[test]
    fn skew_is_positive_at_reference_parameters() {
        for beta in [0.3, 0.6, 0.9, 1.0] {
            assert!(vix_atm_skew_limit(&reference(beta)).unwrap() > 0.0);
        }
        assert!(spx_skew_scaled_limit(&reference(0.9), -1.0).unwrap() < 0.0);
        assert_eq!(spx_skew_scaled_limit(&reference(0.9), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn j3_scaled_limit_matches_small_t() {
        // the relative gap is exactly (T/(T+Δ))^{1/2-3H}, slow for small H
        let a = reference(0.9);
        let lim = j3_scaled_limit(&a).unwrap();
        for t in [1e-6f64, 1e-8, 1e-10] {
            let e = 0.5 - 3.0 * a.hurst;
            let scaled = t.powf(e) * j3(t, &a).unwrap();
            let gap = (t / (t + a.delta)).powf(e);
            assert!((rel(scaled, lim) - gap).abs() < 1e-9, "T = {t}");
        }
        let t: f64 = 1e-8;
        assert!(rel(t.powf(0.29) * j3(t, &a).unwrap(), lim) < 1e-2);
    }

    #[test]
    fn regime_boundaries_raise() {
        assert!(AsymptoticInputs::new(0.04, 0.5, 1.0, 1.0, 1.0 / 12.0, 0.1).is_err());
        let mut a = reference(0.9);
        a.hurst = 1.0 / 6.0;
        assert!(j3(0.1, &a).is_err());
        assert!(vix_atm_curvature_scaled_limit(&a).is_err());
        a.hurst = 0.3;
        assert!(vix_atm_curvature_scaled_limit(&a).is_err());
        assert!(j3(0.1, &a).unwrap().is_finite());
        assert!(vix_limits(&a).unwrap().curvature_scaled.is_none());
    }

    #[test]
    fn spx_skew_near_brownian_limit() {
        // β = 1, H → 1/2: ρη√π/(2·4·Γ(3/2)) = ρη/4
        let a = AsymptoticInputs::new(0.04, 0.5 - 1e-12, 1.0, 0.8, 1.0 / 12.0, 0.1).unwrap();
        assert!((spx_skew_scaled_limit(&a, -0.5).unwrap() - (-0.5 * 0.8 / 4.0)).abs() < 1e-10);
    }

    #[test]
    fn refuses_non_flat_curves() {
        let conv = VixConvention::default();
        let p = ModelParams::new(0.07, 0.9, 1.23, -0.9, ForwardCurve::scenario(Scenario::Two)).unwrap();
        assert!(matches!(AsymptoticInputs::from_model(&p, &conv, 0.1), Err(Error::Domain(_))));
        let p = ModelParams::new(0.07, 0.9, 1.23, -0.9, ForwardCurve::scenario(Scenario::One)).unwrap();
        assert_eq!(AsymptoticInputs::from_model(&p, &conv, 0.1).unwrap().xi0, 0.235 * 0.235);
    }

    #[test]
    fn model_j1_reference() {
        // mpmath: series for E[√Y e^{sY}] and E_β, adaptive quadrature in r
        let a = reference(0.9);
        assert!(rel(j1_model(&a).unwrap(), 0.019_694_215_290_555_3) < 1e-9);
        assert!(rel(j1(&a).unwrap(), 0.018_516_369_381_001_3) < 1e-12);
        let b = reference(1.0);
        assert!(rel(j1_model(&b).unwrap(), j1(&b).unwrap()) < 1e-10);
    }

    #[test]
    fn j1_mixture_oracle() {
        // J1 = ξ0 η𝔠 E[√Y] ∫_0^Δ r^{H-1/2} dr, with E[√Y] estimated from the sampler
        use crate::rng::{mean_and_stderr, path_rng};
        use crate::specfun::{sample_m_wright, GreyLaw};
        let a = reference(0.9);
        let law = GreyLaw::new(0.9).unwrap();
        let draws: Vec<f64> = (0..200_000u64)
            .map(|i| sample_m_wright(&law, &mut path_rng(5, i)).sqrt())
            .collect();
        let (m, se) = mean_and_stderr(&draws).unwrap();
        let hp = a.hurst + 0.5;
        let scale = a.xi0 * a.eta * a.c() * a.delta.powf(hp) / hp;
        assert!((scale * m - j1(&a).unwrap()).abs() < 3.0 * scale * se);
    }

    proptest! {
        #[test]
        fn limits_continuous_in_beta(beta in 0.05f64..0.999) {
            let (a, b) = (reference(beta), reference(beta + 1e-3));
            let la = vix_limits(&a).unwrap();
            let lb = vix_limits(&b).unwrap();
            prop_assert!(rel(la.level, lb.level) < 1e-2);
            prop_assert!((la.skew - lb.skew).abs() < 1e-2 * la.skew.abs().max(1.0));
            prop_assert!(rel(la.curvature_scaled.unwrap(), lb.curvature_scaled.unwrap()) < 1e-2);
        }
    }
}
