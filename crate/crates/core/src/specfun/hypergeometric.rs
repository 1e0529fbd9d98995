//! Gauss hypergeometric function `₂F₁(a, b; c; u)` for real `u ≤ 1`.
//!
//! Only the ranges induced by the Volterra covariances are targeted:
//! negative arguments are mapped into `[0, 1)` by Pfaff's transformation,
//! arguments close to one go through the `1 - u` connection formula.

use super::{gamma, recip_gamma, Kahan};
use crate::error::{domain, Error, Result};

const SERIES_RADIUS: f64 = 0.75;
const SERIES_REL_TOL: f64 = 1e-17;
const SERIES_MAX_TERMS: usize = 5_000;
const SLOW_SERIES_MAX_TERMS: usize = 2_000_000;
const NEAR_INTEGER: f64 = 1e-7;

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.floor()
}

fn near_integer(x: f64) -> bool {
    (x - x.round()).abs() < NEAR_INTEGER
}

/// Direct Taylor series around zero.
fn series(a: f64, b: f64, c: f64, u: f64, max_terms: usize) -> Result<f64> {
    let mut acc = Kahan::default();
    let mut term = 1.0;
    acc.add(term);
    for n in 0..max_terms {
        let nf = n as f64;
        term *= (a + nf) * (b + nf) / ((c + nf) * (nf + 1.0)) * u;
        acc.add(term);
        if term == 0.0 {
            return Ok(acc.value());
        }
        if term.abs() < SERIES_REL_TOL * acc.value().abs() && n > 2 {
            return Ok(acc.value());
        }
    }
    // Slowly converging tail: accept if the last term is already negligible.
    if term.abs() < 1e-12 * acc.value().abs() {
        return Ok(acc.value());
    }
    Err(Error::NonConvergence {
        what: "hypergeometric series",
        terms: max_terms,
        partial: acc.value(),
    })
}

/// `₂F₁(a, b; c; u)` for `u ∈ [0, 1)`.
fn unit_interval(a: f64, b: f64, c: f64, u: f64) -> Result<f64> {
    if u <= SERIES_RADIUS || is_nonpositive_integer(a) || is_nonpositive_integer(b) {
        return series(a, b, c, u, SERIES_MAX_TERMS);
    }
    let s = c - a - b;
    if near_integer(s) {
        return series(a, b, c, u, SLOW_SERIES_MAX_TERMS);
    }
    let w = 1.0 - u;
    let first = gamma(c) * gamma(s) * recip_gamma(c - a) * recip_gamma(c - b);
    let second = gamma(c) * gamma(-s) * recip_gamma(a) * recip_gamma(b);
    let mut value = 0.0;
    if first != 0.0 {
        value += first * series(a, b, 1.0 - s, w, SERIES_MAX_TERMS)?;
    }
    if second != 0.0 {
        value += second * w.powf(s) * series(c - a, c - b, 1.0 + s, w, SERIES_MAX_TERMS)?;
    }
    Ok(value)
}

/// Gauss hypergeometric function for real parameters and `u ≤ 1`.
pub fn gauss_2f1(a: f64, b: f64, c: f64, u: f64) -> Result<f64> {
    if is_nonpositive_integer(c) {
        return domain(format!("₂F₁ undefined for c = {c}"));
    }
    if !u.is_finite() || u > 1.0 {
        return domain(format!("₂F₁ implemented for u ≤ 1, got {u}"));
    }
    if u == 0.0 {
        return Ok(1.0);
    }
    if u == 1.0 {
        if is_nonpositive_integer(a) || is_nonpositive_integer(b) {
            return series(a, b, c, 1.0, SERIES_MAX_TERMS);
        }
        let s = c - a - b;
        if s <= 0.0 {
            return domain(format!("₂F₁ diverges at u = 1 when c - a - b = {s} ≤ 0"));
        }
        // Gauss's summation theorem.
        return Ok(gamma(c) * gamma(s) * recip_gamma(c - a) * recip_gamma(c - b));
    }
    if u > 0.0 {
        return unit_interval(a, b, c, u);
    }
    if is_nonpositive_integer(a) || is_nonpositive_integer(b) {
        return series(a, b, c, u, SERIES_MAX_TERMS);
    }
    // Pfaff: ₂F₁(a, b; c; u) = (1-u)^{-a} ₂F₁(a, c-b; c; u/(u-1)).
    let w = u / (u - 1.0);
    Ok((1.0 - u).powf(-a) * unit_interval(a, c - b, c, w)?)
}
