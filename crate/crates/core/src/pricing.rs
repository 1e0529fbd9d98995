//! Black-Scholes prices, implied volatility, smiles from samples and the
//! arctan smile parameterisation `σ(x) = a·arctan(bx + c) + d`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{domain, Error, Result};
use crate::linalg::{Cholesky, SymMatrix};
use crate::montecarlo::{Payoff, Samples};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Black-Scholes inputs in log coordinates, without rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsInputs {
    pub t: f64,
    /// log-price
    pub x: f64,
    /// log-strike
    pub k: f64,
    pub sigma: f64,
    pub maturity: f64,
}

impl BsInputs {
    pub fn new(t: f64, x: f64, k: f64, sigma: f64, maturity: f64) -> Result<Self> {
        let i = Self {
            t,
            x,
            k,
            sigma,
            maturity,
        };
        i.validate()?;
        Ok(i)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.maturity >= self.t) || !self.t.is_finite() || !self.maturity.is_finite() {
            return domain(format!("need t ≤ T, got t = {}, T = {}", self.t, self.maturity));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return domain(format!("volatility must be non-negative, got {}", self.sigma));
        }
        if self.x.is_nan() || self.k.is_nan() {
            return domain("log-price and log-strike must not be NaN");
        }
        Ok(())
    }

    /// `σ√(T-t)`
    pub fn total_vol(&self) -> f64 {
        self.sigma * (self.maturity - self.t).sqrt()
    }
}

/// Call price `e^x N(d+) - e^k N(d-)`, or the intrinsic value when `σ√(T-t) = 0`.
pub fn bs_call(i: &BsInputs) -> Result<f64> {
    i.validate()?;
    Ok(call_unchecked(i.x, i.k, i.total_vol()))
}

/// Put by parity.
pub fn bs_put(i: &BsInputs) -> Result<f64> {
    i.validate()?;
    Ok(put_unchecked(i.x, i.k, i.total_vol()))
}

/// `∂ price / ∂σ`
pub fn bs_vega(i: &BsInputs) -> Result<f64> {
    i.validate()?;
    let tau = i.maturity - i.t;
    let s = i.total_vol();
    if s == 0.0 {
        return Ok(0.0);
    }
    let dp = (i.x - i.k) / s + 0.5 * s;
    Ok(i.x.exp() * norm_pdf(dp) * tau.sqrt())
}

fn call_unchecked(x: f64, k: f64, s: f64) -> f64 {
    if s == 0.0 {
        return (x.exp() - k.exp()).max(0.0);
    }
    let dp = (x - k) / s + 0.5 * s;
    let dm = dp - s;
    if x > k {
        // in the money: intrinsic plus the put's time value keeps small vols accurate
        (x.exp() - k.exp()) + put_unchecked(x, k, s)
    } else {
        x.exp() * norm_cdf(dp) - k.exp() * norm_cdf(dm)
    }
}

fn put_unchecked(x: f64, k: f64, s: f64) -> f64 {
    if s == 0.0 {
        return (k.exp() - x.exp()).max(0.0);
    }
    let dp = (x - k) / s + 0.5 * s;
    let dm = dp - s;
    (k.exp() * norm_cdf(-dm) - x.exp() * norm_cdf(-dp)).max(0.0)
}

/// Out-of-the-money price: put for `k < x`, call otherwise.
fn otm_unchecked(x: f64, k: f64, s: f64) -> f64 {
    if k < x {
        put_unchecked(x, k, s)
    } else {
        let dp = (x - k) / s + 0.5 * s;
        (x.exp() * norm_cdf(dp) - k.exp() * norm_cdf(dp - s)).max(0.0)
    }
}

const VOL_LO: f64 = 1e-8;
const VOL_HI: f64 = 5.0;

/// Implied volatility of a call price.
///
/// Bisection on `[1e-8, 5]` (widened if needed) followed by a safeguarded
/// Newton polish. Works on the out-of-the-money side through parity so that
/// in-the-money time values are not lost to the intrinsic value.
pub fn implied_vol(price: f64, t: f64, x: f64, k: f64, maturity: f64) -> Result<f64> {
    BsInputs::new(t, x, k, 0.0, maturity)?;
    let fwd = x.exp();
    let intrinsic = (fwd - k.exp()).max(0.0);
    if !price.is_finite() {
        return domain(format!("price must be finite, got {price}"));
    }
    let slack = 4.0 * f64::EPSILON * fwd;
    if price < intrinsic - slack {
        return Err(Error::OutOfBand {
            price,
            bound: "below the intrinsic value (e^x - e^k)+",
        });
    }
    if price >= fwd {
        return Err(Error::OutOfBand {
            price,
            bound: "at or above the forward e^x",
        });
    }
    let otm = if k < x {
        // the subtraction loses a few ulps of the forward; treat that as no time value
        let tv = price - intrinsic;
        if tv <= slack {
            0.0
        } else {
            tv
        }
    } else {
        price
    };
    implied_vol_otm(otm, t, x, k, maturity)
}

/// Implied volatility from the out-of-the-money price (put for `k < x`, call
/// for `k ≥ x`).
pub fn implied_vol_otm(otm_price: f64, t: f64, x: f64, k: f64, maturity: f64) -> Result<f64> {
    BsInputs::new(t, x, k, 0.0, maturity)?;
    let tau = maturity - t;
    let cap = if k < x { k.exp() } else { x.exp() };
    if !(otm_price >= 0.0) {
        return Err(Error::OutOfBand {
            price: otm_price,
            bound: "negative time value",
        });
    }
    if otm_price >= cap {
        return Err(Error::OutOfBand {
            price: otm_price,
            bound: "time value at or above its supremum",
        });
    }
    if otm_price == 0.0 || tau == 0.0 {
        return Ok(0.0);
    }
    let sqrt_tau = tau.sqrt();
    let f = |sigma: f64| otm_unchecked(x, k, sigma * sqrt_tau) - otm_price;
    let mut lo = VOL_LO;
    let mut hi = VOL_HI;
    if f(lo) > 0.0 {
        // below the smallest resolvable vol
        return Ok(0.0);
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::NonConvergence {
                what: "implied volatility bracket",
                terms: 0,
                partial: hi,
            });
        }
    }
    // bisect in log-vol to a coarse bracket
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-4 {
            break;
        }
    }
    let mut sigma = 0.5 * (lo + hi);
    for _ in 0..100 {
        let g = f(sigma);
        if g == 0.0 {
            break;
        }
        if g < 0.0 {
            lo = lo.max(sigma);
        } else {
            hi = hi.min(sigma);
        }
        let s = sigma * sqrt_tau;
        let dp = (x - k) / s + 0.5 * s;
        let vega = x.exp() * norm_pdf(dp) * sqrt_tau;
        let mut next = sigma - g / vega;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let done = (next - sigma).abs() <= 1e-15 * sigma;
        sigma = next;
        if done || hi - lo <= 1e-15 * sigma {
            break;
        }
    }
    Ok(sigma)
}

/// One point of an implied volatility smile estimated from samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmilePoint {
    pub strike: f64,
    /// `ln(K / F)`
    pub log_moneyness: f64,
    pub price: f64,
    pub price_stderr: f64,
    /// `None` when the price falls outside the no-arbitrage band.
    pub implied_vol: Option<f64>,
    /// Delta-method standard error `SE(price) / vega`.
    pub vol_stderr: Option<f64>,
}

/// Call prices and implied vols of a terminal-value sample at `strikes`,
/// undiscounted, against `forward`.
pub fn smile_from_samples(samples: &Samples, forward: f64, strikes: &[f64]) -> Result<Vec<SmilePoint>> {
    if !(forward > 0.0) {
        return domain(format!("forward must be positive, got {forward}"));
    }
    let maturity = samples.maturity;
    let x = forward.ln();
    strikes
        .iter()
        .map(|&strike| {
            if !(strike > 0.0) {
                return domain(format!("strikes must be positive, got {strike}"));
            }
            let k = strike.ln();
            let r = samples.price(Payoff::Call { strike })?;
            let vol = implied_vol(r.estimate, 0.0, x, k, maturity).ok();
            let vol_stderr = vol.and_then(|v| {
                let vega = bs_vega(&BsInputs::new(0.0, x, k, v, maturity).ok()?).ok()?;
                (vega > 0.0).then(|| r.stderr / vega)
            });
            Ok(SmilePoint {
                strike,
                log_moneyness: k - x,
                price: r.estimate,
                price_stderr: r.stderr,
                implied_vol: vol,
                vol_stderr,
            })
        })
        .collect()
}

/// Abscissa of a smile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmileCoordinate {
    /// Strike `K`.
    #[default]
    Strike,
    /// Log-strike `k = ln K`.
    LogStrike,
    /// `k - ln F`.
    LogMoneyness,
}

/// Fitted `σ(x) = a·arctan(bx + c) + d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmileFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub coordinate: SmileCoordinate,
    /// Euclidean norm of the residuals.
    pub residual_norm: f64,
    /// Whether the fitted vol stays positive over the fitted range.
    pub positive_on_range: bool,
}

impl SmileFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.a * (self.b * x + self.c).atan() + self.d
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let u = self.b * x + self.c;
        self.a * self.b / (1.0 + u * u)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let u = self.b * x + self.c;
        -2.0 * self.a * self.b * self.b * u / (1.0 + u * u).powi(2)
    }
}

/// Residuals and Jacobian of the scaled problem `σ = a·atan(b'z + c') + d`.
fn residuals(p: &[f64; 4], z: &[f64], y: &[f64], r: &mut [f64], jac: Option<&mut [[f64; 4]]>) -> f64 {
    let [a, b, c, d] = *p;
    let mut cost = 0.0;
    let mut jac = jac;
    for i in 0..z.len() {
        let u = b * z[i] + c;
        r[i] = a * u.atan() + d - y[i];
        cost += r[i] * r[i];
        if let Some(j) = jac.as_deref_mut() {
            let w = 1.0 / (1.0 + u * u);
            j[i] = [u.atan(), a * z[i] * w, a * w, 1.0];
        }
    }
    cost
}

/// Least squares for `(a, d)` at fixed `(b', c')`.
fn linear_part(b: f64, c: f64, z: &[f64], y: &[f64]) -> Option<([f64; 4], f64)> {
    let n = z.len() as f64;
    let (mut s_ff, mut s_f, mut s_fy, mut s_y) = (0.0, 0.0, 0.0, 0.0);
    for (zi, yi) in z.iter().zip(y) {
        let f = (b * zi + c).atan();
        s_ff += f * f;
        s_f += f;
        s_fy += f * yi;
        s_y += yi;
    }
    let det = s_ff * n - s_f * s_f;
    if det.abs() < 1e-14 * s_ff.max(1.0) * n {
        return None;
    }
    let a = (s_fy * n - s_f * s_y) / det;
    let d = (s_ff * s_y - s_f * s_fy) / det;
    let p = [a, b, c, d];
    let mut r = vec![0.0; z.len()];
    let cost = residuals(&p, z, y, &mut r, None);
    Some((p, cost))
}

fn levenberg_marquardt(start: [f64; 4], z: &[f64], y: &[f64]) -> ([f64; 4], f64) {
    let m = z.len();
    let mut p = start;
    let mut r = vec![0.0; m];
    let mut jac = vec![[0.0; 4]; m];
    let mut cost = residuals(&p, z, y, &mut r, Some(&mut jac));
    let mut lambda = 1e-3;
    let mut trial_r = vec![0.0; m];
    for _ in 0..1000 {
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for i in 0..m {
            for u in 0..4 {
                jtr[u] += jac[i][u] * r[i];
                for v in 0..4 {
                    jtj[u][v] += jac[i][u] * jac[i][v];
                }
            }
        }
        let grad = jtr.iter().map(|g| g.abs()).fold(0.0, f64::max);
        if cost == 0.0 || grad < 1e-300 {
            break;
        }
        let mut improved = false;
        while lambda < 1e16 {
            let a = SymMatrix::from_fn(4, |u, v| {
                let scale = jtj[u][u].max(1e-12);
                jtj[u][v] + if u == v { lambda * scale } else { 0.0 }
            });
            let Ok(l) = Cholesky::factor(&a) else {
                lambda *= 10.0;
                continue;
            };
            let step = solve_cholesky(&l, &jtr);
            let trial = [p[0] - step[0], p[1] - step[1], p[2] - step[2], p[3] - step[3]];
            let trial_cost = residuals(&trial, z, y, &mut trial_r, None);
            if trial_cost < cost {
                let rel_step = (0..4)
                    .map(|u| (trial[u] - p[u]).abs() / (p[u].abs() + 1e-12))
                    .fold(0.0, f64::max);
                let rel_gain = (cost - trial_cost) / cost;
                p = trial;
                cost = residuals(&p, z, y, &mut r, Some(&mut jac));
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if rel_step < 1e-15 || rel_gain < 1e-15 {
                    return (p, cost);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (p, cost)
}

fn solve_cholesky(l: &Cholesky, rhs: &[f64; 4]) -> [f64; 4] {
    let mut w = [0.0; 4];
    for i in 0..4 {
        let mut s = rhs[i];
        for j in 0..i {
            s -= l.get(i, j) * w[j];
        }
        w[i] = s / l.get(i, i);
    }
    let mut out = [0.0; 4];
    for i in (0..4).rev() {
        let mut s = w[i];
        for j in i + 1..4 {
            s -= l.get(j, i) * out[j];
        }
        out[i] = s / l.get(i, i);
    }
    out
}

/// Least-squares arctan fit of `(x, σ)` points.
///
/// The abscissae are centred and scaled to `[-1, 1]`; starting points come
/// from a fixed grid over `(b, c)` with `(a, d)` solved linearly, and the best
/// few are polished by Levenberg-Marquardt. The result is deterministic.
pub fn fit_arctan_smile(points: &[(f64, f64)], coordinate: SmileCoordinate) -> Result<SmileFit> {
    if points.len() < 4 {
        return Err(Error::Invalid(format!("need at least 4 points, got {}", points.len())));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return domain("smile points must be finite");
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 4 {
        return Err(Error::RankDeficient(format!(
            "the arctan form has 4 parameters but only {} distinct abscissae",
            xs.len()
        )));
    }
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let z: Vec<f64> = points.iter().map(|p| (p.0 - centre) / half).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();

    let mut starts: Vec<([f64; 4], f64)> = Vec::new();
    for bi in 0..20 {
        let b = 1e-3 * 2f64.powi(bi);
        for ci in -12..=12 {
            let c = b * ci as f64 / 8.0;
            if let Some(s) = linear_part(b, c, &z, &y) {
                starts.push(s);
            }
        }
    }
    if starts.is_empty() {
        return Err(Error::RankDeficient("no admissible starting point".into()));
    }
    starts.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (mut best, mut best_cost) = (starts[0].0, starts[0].1);
    for (s, _) in starts.iter().take(6) {
        let (p, cost) = levenberg_marquardt(*s, &z, &y);
        if cost < best_cost {
            best = p;
            best_cost = cost;
        }
    }
    // back to the original abscissa: b'z + c' = (b'/h) x + (c' - b' m / h)
    let [a, bs, cs, d] = best;
    let fit = SmileFit {
        a,
        b: bs / half,
        c: cs - bs * centre / half,
        d,
        coordinate,
        residual_norm: best_cost.sqrt(),
        positive_on_range: true,
    };
    let positive = points.iter().all(|p| fit.eval(p.0) > 0.0) && fit.eval(lo) > 0.0 && fit.eval(hi) > 0.0;
    Ok(SmileFit {
        positive_on_range: positive,
        ..fit
    })
}

/// ATM level, skew and curvature in log-strike, as in the short-time limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtmMetrics {
    pub level: f64,
    /// `∂_k σ` at `k = ln F`
    pub skew: f64,
    /// `∂²_k σ` at `k = ln F`
    pub curvature: f64,
    /// First and second derivatives in the fit's own coordinate.
    pub raw_skew: f64,
    pub raw_curvature: f64,
}

/// Analytic ATM metrics of a fit at forward `F`. Strike fits are converted to
/// log-strike with `∂_k = K ∂_K` and `∂²_k = K ∂_K + K² ∂²_K`.
pub fn atm_metrics(fit: &SmileFit, forward: f64) -> Result<AtmMetrics> {
    if !(forward > 0.0) {
        return domain(format!("forward must be positive, got {forward}"));
    }
    let x = match fit.coordinate {
        SmileCoordinate::Strike => forward,
        SmileCoordinate::LogStrike => forward.ln(),
        SmileCoordinate::LogMoneyness => 0.0,
    };
    let level = fit.eval(x);
    let d1 = fit.derivative(x);
    let d2 = fit.second_derivative(x);
    let (skew, curvature) = match fit.coordinate {
        SmileCoordinate::Strike => (forward * d1, forward * d1 + forward * forward * d2),
        _ => (d1, d2),
    };
    Ok(AtmMetrics {
        level,
        skew,
        curvature,
        raw_skew: d1,
        raw_curvature: d2,
    })
}

/// Which VIX level the market ATM point refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AtmReference {
    /// The VIX futures price for the option expiry.
    #[default]
    Futures,
    /// Spot VIX.
    Spot,
}

/// Natural cubic spline through `(x_i, y_i)`, for inspecting data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// second derivatives at the knots
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Invalid("a spline needs at least two points".into()));
        }
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pts.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Invalid("spline abscissae must be distinct".into()));
        }
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let n = xs.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system for interior second derivatives
            let mut diag = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            let mut upper = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
                if i > 1 {
                    let w = h0 / diag[i - 1];
                    diag[i] -= w * upper[i - 1];
                    rhs[i] -= w * rhs[i - 1];
                }
            }
            for i in (1..n - 1).rev() {
                m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
            }
        }
        Ok(Self { xs, ys, m })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MartingaleRegime;
    use crate::montecarlo::EngineTag;
    use proptest::prelude::*;

    fn samples(values: Vec<f64>, maturity: f64) -> Samples {
        Samples {
            values,
            maturity,
            antithetic: false,
            seed: 0,
            engine: EngineTag::External,
            martingale: MartingaleRegime::Guaranteed,
            rbergomi_equivalent: false,
        }
    }

    #[test]
    fn call_examples() {
        let i = BsInputs::new(0.0, 0.0, -1.0, 0.0, 1.0).unwrap();
        assert!((bs_call(&i).unwrap() - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        let i = BsInputs::new(0.0, 0.0, 0.0, 0.2, 1.0).unwrap();
        // 2Φ(0.1) - 1, Φ(0.1) from mpmath
        assert!((bs_call(&i).unwrap() - (2.0 * 0.539_827_837_277_028_9 - 1.0)).abs() < 1e-14);
        let i = BsInputs::new(0.0, 0.3, -50.0, 0.4, 2.0).unwrap();
        assert!((bs_call(&i).unwrap() - 0.3f64.exp()).abs() < 1e-12);
        assert!(BsInputs::new(1.0, 0.0, 0.0, 0.2, 0.5).is_err());
    }

    #[test]
    fn implied_vol_examples() {
        let i = BsInputs::new(0.0, 0.1, 0.0, 0.3, 0.5).unwrap();
        let p = bs_call(&i).unwrap();
        assert!((implied_vol(p, 0.0, 0.1, 0.0, 0.5).unwrap() - 0.3).abs() < 1e-12);
        let intrinsic = 0.1f64.exp() - 1.0;
        assert_eq!(implied_vol(intrinsic, 0.0, 0.1, 0.0, 0.5).unwrap(), 0.0);
        match implied_vol(0.5 * intrinsic, 0.0, 0.1, 0.0, 0.5) {
            Err(Error::OutOfBand { bound, .. }) => assert!(bound.contains("intrinsic")),
            other => panic!("{other:?}"),
        }
        match implied_vol(2.0, 0.0, 0.1, 0.0, 0.5) {
            Err(Error::OutOfBand { bound, .. }) => assert!(bound.contains("forward")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_samples_have_zero_vol() {
        let s = samples(vec![1.0; 50], 0.5);
        let smile = smile_from_samples(&s, 1.0, &[0.8, 1.0, 1.2]).unwrap();
        for p in smile {
            assert_eq!(p.implied_vol, Some(0.0));
        }
    }

    #[test]
    fn lognormal_samples_give_flat_smile() {
        use crate::rng::path_rng;
        use rand_distr::{Distribution, StandardNormal};
        let (sigma, t) = (0.25, 0.5);
        let sd = sigma * f64::sqrt(t);
        let mut rng = path_rng(3, 0);
        let values = (0..200_000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (sd * z - 0.5 * sd * sd).exp()
            })
            .collect();
        let s = samples(values, t);
        for p in smile_from_samples(&s, 1.0, &[0.8, 0.9, 1.0, 1.1, 1.25]).unwrap() {
            let v = p.implied_vol.unwrap();
            assert!((v - sigma).abs() < 3.0 * p.vol_stderr.unwrap(), "{p:?}");
        }
    }

    #[test]
    fn arctan_recovery() {
        let truth = [1.913, 0.746, -2.113, 0.761];
        let pts: Vec<(f64, f64)> = (0..30)
            .map(|i| {
                let x = 2.5 + 3.5 * i as f64 / 29.0;
                (x, truth[0] * (truth[1] * x + truth[2]).atan() + truth[3])
            })
            .collect();
        let fit = fit_arctan_smile(&pts, SmileCoordinate::Strike).unwrap();
        let got = [fit.a, fit.b, fit.c, fit.d];
        for (g, t) in got.iter().zip(truth) {
            assert!((g - t).abs() < 1e-6, "{got:?}");
        }
        assert!(fit.residual_norm < 1e-10);
        assert!(fit.positive_on_range);
    }

    #[test]
    fn flat_and_degenerate_fits() {
        let pts: Vec<(f64, f64)> = (0..8).map(|i| (i as f64, 0.4)).collect();
        let fit = fit_arctan_smile(&pts, SmileCoordinate::Strike).unwrap();
        for x in [0.0, 3.5, 7.0] {
            assert!((fit.eval(x) - 0.4).abs() < 1e-10);
        }
        assert!(fit.a.abs() * fit.b.abs() < 1e-8);
        let dup = [(1.0, 0.3), (1.0, 0.31), (2.0, 0.4), (3.0, 0.5), (3.0, 0.52)];
        assert!(matches!(fit_arctan_smile(&dup, SmileCoordinate::Strike), Err(Error::RankDeficient(_))));
        assert!(fit_arctan_smile(&dup[..3], SmileCoordinate::Strike).is_err());
    }

    #[test]
    fn linear_trend_is_captured() {
        let pts: Vec<(f64, f64)> = (0..11).map(|i| (-0.1 + 0.02 * i as f64, 0.5 + 0.3 * (-0.1 + 0.02 * i as f64))).collect();
        let fit = fit_arctan_smile(&pts, SmileCoordinate::LogMoneyness).unwrap();
        for p in &pts[1..10] {
            assert!((fit.eval(p.0) - p.1).abs() < 1e-6);
        }
    }

    #[test]
    fn atm_metric_examples() {
        let flat = SmileFit {
            a: 0.0,
            b: 1.0,
            c: 0.3,
            d: 0.5,
            coordinate: SmileCoordinate::LogMoneyness,
            residual_norm: 0.0,
            positive_on_range: true,
        };
        let m = atm_metrics(&flat, 1.3).unwrap();
        assert_eq!((m.level, m.skew, m.curvature), (0.5, 0.0, 0.0));
        let infl = SmileFit {
            a: 0.7,
            b: 2.0,
            c: 0.0,
            ..flat
        };
        let m = atm_metrics(&infl, 1.3).unwrap();
        assert_eq!(m.skew, 1.4);
        assert_eq!(m.curvature, 0.0);
    }

    #[test]
    fn atm_metrics_match_finite_differences() {
        let fit = SmileFit {
            a: 1.913,
            b: 0.746,
            c: -2.113,
            d: 0.761,
            coordinate: SmileCoordinate::Strike,
            residual_norm: 0.0,
            positive_on_range: true,
        };
        let f = 3.1;
        let m = atm_metrics(&fit, f).unwrap();
        // σ as a function of log-strike
        let g = |k: f64| fit.eval(k.exp());
        let k0 = f.ln();
        let h = 1e-4;
        let central = |h: f64| (g(k0 + h) - g(k0 - h)) / (2.0 * h);
        let fd1 = (4.0 * central(h / 2.0) - central(h)) / 3.0;
        let fd2 = (g(k0 + h) - 2.0 * g(k0) + g(k0 - h)) / (h * h);
        assert!((m.skew - fd1).abs() < 1e-8, "{} {}", m.skew, fd1);
        assert!((m.curvature - fd2).abs() < 1e-6, "{} {}", m.curvature, fd2);
        let raw = |h: f64| (fit.eval(f + h) - fit.eval(f - h)) / (2.0 * h);
        let raw1 = (4.0 * raw(h / 2.0) - raw(h)) / 3.0;
        assert!((m.raw_skew - raw1).abs() < 1e-8);
    }

    #[test]
    fn spline_interpolates() {
        let pts: Vec<(f64, f64)> = (0..9).map(|i| (i as f64 * 0.5, (i as f64 * 0.5).sin())).collect();
        let s = CubicSpline::new(&pts).unwrap();
        for p in &pts {
            assert!((s.eval(p.0) - p.1).abs() < 1e-14);
        }
        assert!((s.eval(1.25) - 1.25f64.sin()).abs() < 2e-3);
        let line = CubicSpline::new(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]).unwrap();
        assert!((line.eval(1.5) - 4.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn round_trip(sigma in 0.01f64..3.0, m in -2.0f64..2.0, t in 0.01f64..2.0) {
            let i = BsInputs::new(0.0, m, 0.0, sigma, t).unwrap();
            let otm = otm_unchecked(m, 0.0, i.total_vol());
            prop_assume!(otm > 1e-280);
            let v = implied_vol_otm(otm, 0.0, m, 0.0, t).unwrap();
            prop_assert!((v - sigma).abs() < 1e-8, "{v} vs {sigma}");
        }

        #[test]
        fn call_increasing_in_vol(s1 in 0.01f64..2.0, ds in 0.001f64..1.0, m in -1.0f64..1.0) {
            let a = bs_call(&BsInputs::new(0.0, m, 0.0, s1, 1.0).unwrap()).unwrap();
            let b = bs_call(&BsInputs::new(0.0, m, 0.0, s1 + ds, 1.0).unwrap()).unwrap();
            prop_assert!(b >= a);
        }
    }
}
