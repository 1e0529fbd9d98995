//! One-parameter Mittag-Leffler function `E_β(z) = Σ zⁿ / Γ(βn + 1)` on the real line.
//!
//! Three regimes:
//!
//! * `z ≥ 0` below a per-β crossover: Kahan-summed Taylor series;
//! * `z` above the crossover: `(1/β) exp(z^{1/β}) - Σ_k z^{-k} / Γ(1 - βk)`;
//! * `z < -1`: the Laplace-type representation
//!   `E_β(-x) = sin(βπ)/(βπ) ∫₀^∞ exp(-(xv)^{1/β}) / (v² + 2v cos βπ + 1) dv`,
//!   which avoids the cancellation of the alternating series. It is evaluated
//!   after an arctangent substitution that flattens the kernel's peak near β = 1.
//!
//! The crossover is the smallest argument at which series and asymptotic
//! expansion agree to `1e-10`, located once per β by bisection and cached.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use super::{ln_gamma, recip_gamma, Kahan};
use crate::error::{domain, Error, Result};
use crate::quadrature::{integrate, integrate_with_breaks, QuadTol};

const SERIES_REL_TOL: f64 = 1e-16;
const SERIES_MAX_TERMS: usize = 500;
const CROSSOVER_AGREEMENT: f64 = 1e-10;
const NEGATIVE_SERIES_LIMIT: f64 = 1.0;
const ASYMPTOTIC_MAX_TERMS: usize = 12;
/// Upper end of the search for the crossover, expressed as `z^{1/β}`.
const CROSSOVER_EXPONENT_MAX: f64 = 60.0;
/// `exp(-TAIL_EXPONENT)` is below 1e-18; used as a quadrature break point.
const TAIL_EXPONENT: f64 = 41.5;

const LN_MAX: f64 = 709.782_712_893_384;

/// Mittag-Leffler evaluator for a fixed β with its series/asymptotic crossover.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MittagLeffler {
    beta: f64,
    crossover: f64,
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 1.0) {
        return domain(format!("Mittag-Leffler index must lie in (0, 1], got {beta}"));
    }
    Ok(())
}

fn crossover_cache() -> &'static Mutex<HashMap<u64, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl MittagLeffler {
    pub fn new(beta: f64) -> Result<Self> {
        check_beta(beta)?;
        if beta == 1.0 {
            return Ok(Self {
                beta,
                crossover: f64::INFINITY,
            });
        }
        let key = beta.to_bits();
        if let Some(&crossover) = crossover_cache().lock().expect("cache poisoned").get(&key) {
            return Ok(Self { beta, crossover });
        }
        let crossover = find_crossover(beta);
        crossover_cache()
            .lock()
            .expect("cache poisoned")
            .insert(key, crossover);
        Ok(Self { beta, crossover })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Argument above which the asymptotic expansion is used.
    pub fn crossover(&self) -> f64 {
        self.crossover
    }

    pub fn eval(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return domain(format!("Mittag-Leffler argument must be finite, got {z}"));
        }
        if z == 0.0 {
            return Ok(1.0);
        }
        if self.beta == 1.0 {
            if z > LN_MAX {
                return Err(Error::Overflow(format!("E_1({z}) exceeds the floating range")));
            }
            return Ok(z.exp());
        }
        if z < 0.0 {
            return negative_argument(self.beta, -z);
        }
        if z <= self.crossover {
            return positive_series(self.beta, z);
        }
        let ln = ln_asymptotic(self.beta, z);
        if ln > LN_MAX {
            return Err(Error::Overflow(format!(
                "E_{}({z}) ~ exp({ln:.3e}) exceeds the floating range",
                self.beta
            )));
        }
        Ok(ln.exp())
    }

    /// `ln E_β(z)`, finite even where `E_β(z)` itself overflows.
    pub fn ln_eval(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return domain(format!("Mittag-Leffler argument must be finite, got {z}"));
        }
        if self.beta == 1.0 {
            return Ok(z);
        }
        if z > self.crossover {
            return Ok(ln_asymptotic(self.beta, z));
        }
        Ok(self.eval(z)?.ln())
    }
}

/// `E_β(z)` for `β ∈ (0, 1]` and real `z`.
pub fn mittag_leffler(beta: f64, z: f64) -> Result<f64> {
    MittagLeffler::new(beta)?.eval(z)
}

/// `ln E_β(z)`.
pub fn ln_mittag_leffler(beta: f64, z: f64) -> Result<f64> {
    MittagLeffler::new(beta)?.ln_eval(z)
}

fn positive_series(beta: f64, z: f64) -> Result<f64> {
    let ln_z = z.ln();
    let mut acc = Kahan::default();
    acc.add(1.0);
    for n in 1..SERIES_MAX_TERMS {
        let nf = n as f64;
        let ln_term = nf * ln_z - ln_gamma(beta * nf + 1.0);
        if ln_term > LN_MAX {
            return Err(Error::Overflow(format!("E_{beta}({z}) series term overflows")));
        }
        let term = ln_term.exp();
        acc.add(term);
        if term < SERIES_REL_TOL * acc.value() {
            return Ok(acc.value());
        }
    }
    Err(Error::NonConvergence {
        what: "Mittag-Leffler series",
        terms: SERIES_MAX_TERMS,
        partial: acc.value(),
    })
}

fn ln_asymptotic(beta: f64, z: f64) -> f64 {
    let p = z.powf(1.0 / beta);
    let mut corr = 0.0;
    let mut prev = f64::INFINITY;
    for k in 1..=ASYMPTOTIC_MAX_TERMS {
        let term = z.powi(-(k as i32)) * recip_gamma(1.0 - beta * k as f64);
        if term.abs() > prev && term != 0.0 {
            break;
        }
        if term != 0.0 {
            prev = term.abs();
        }
        corr += term;
    }
    p - beta.ln() + (-beta * (-p).exp() * corr).ln_1p()
}

fn negative_argument(beta: f64, x: f64) -> Result<f64> {
    if x <= NEGATIVE_SERIES_LIMIT {
        let mut acc = Kahan::default();
        acc.add(1.0);
        let mut power = 1.0;
        for n in 1..SERIES_MAX_TERMS {
            power *= -x;
            let term = power * recip_gamma(beta * n as f64 + 1.0);
            acc.add(term);
            if term.abs() < SERIES_REL_TOL * acc.value().abs() {
                return Ok(acc.value());
            }
        }
        return Err(Error::NonConvergence {
            what: "Mittag-Leffler series",
            terms: SERIES_MAX_TERMS,
            partial: acc.value(),
        });
    }
    // With v + cos βπ = sin βπ · tan θ the Cauchy-type kernel becomes dθ and
    // E_β(-x) = (1/βπ) ∫_{π/2-βπ}^{π/2} exp(-(x v(θ))^{1/β}) dθ.
    let (s, c) = (beta * PI).sin_cos();
    let inv_beta = 1.0 / beta;
    let lo = 0.5 * PI - beta * PI;
    let hi = 0.5 * PI;
    let theta_of = |v: f64| ((v + c) / s).atan();
    let integrand = |theta: f64| {
        let v = (s * theta.tan() - c).max(0.0);
        (-(x * v).powf(inv_beta)).exp()
    };
    // beyond v_cut the integrand is below exp(-TAIL_EXPONENT)
    let v_cut = TAIL_EXPONENT.powf(beta) / x;
    let mut breaks = vec![lo];
    for v in [v_cut.min(1.0), v_cut] {
        let th = theta_of(v);
        if th > *breaks.last().unwrap() && th < hi {
            breaks.push(th);
        }
    }
    let cut = *breaks.last().unwrap();
    let body = integrate_with_breaks(integrand, &breaks, QuadTol::new(1e-300, 1e-13))?;
    let tail = if cut > lo {
        integrate(integrand, cut, hi, QuadTol::new(1e-16 * body.value, 1e-13))?.value
    } else {
        0.0
    };
    let integral = body.value + tail;
    Ok(integral / (beta * PI))
}

fn find_crossover(beta: f64) -> f64 {
    // Predicate is true once the asymptotic form is accurate (or the series no
    // longer converges within its term budget).
    let use_asymptotic = |p: f64| -> bool {
        let z = p.powf(beta);
        match positive_series(beta, z) {
            Ok(series) => {
                let asym = ln_asymptotic(beta, z).exp();
                ((asym - series) / series).abs() <= CROSSOVER_AGREEMENT
            }
            Err(_) => true,
        }
    };
    let (mut lo, mut hi) = (1.0_f64, CROSSOVER_EXPONENT_MAX);
    if !use_asymptotic(hi) {
        return hi.powf(beta);
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if use_asymptotic(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    hi.powf(beta)
}
