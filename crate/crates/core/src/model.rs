//! The grey Bergomi model: parameters, forward variance and VIX functionals.
//!
//! Variance: `V_t = ξ0(t) / E_β(𝔟 t^{2H}) · exp(η𝔠 √Y_β 𝒱_t)` with
//! `𝔠 = 1/Γ(H+1/2)` and `𝔟 = η²𝔠²/(4H)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::montecarlo::McConfig;
use crate::quadrature::{integrate, integrate_to_infinity, QuadTol};
use crate::rng::{mean_and_stderr, path_rng};
use crate::specfun::{gamma, ln_gamma, GreyLaw, MittagLeffler, Kahan};

const LN_MAX: f64 = 709.782_712_893_384;
const LN_MIN: f64 = -745.133_219_101_941;

/// Default VIX accrual window: one month.
pub const DEFAULT_VIX_WINDOW: f64 = 1.0 / 12.0;

/// ζ-series relative tolerance and term cap.
pub const ZETA_TOL: f64 = 1e-12;
pub const ZETA_MAX_TERMS: usize = 1000;
const ZETA_LOG_MAX_TERMS: usize = 50_000_000;
/// Above this ratio between the largest term and the sum, the series has lost
/// too many digits to cancellation and the integral representation is used.
const ZETA_CANCELLATION_LIMIT: f64 = 1e5;

/// The three forward variance scenarios used for the VIX futures bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// `ξ0(t) = 0.235²`
    One,
    /// `ξ0(t) = 0.235² (1+t)²`
    Two,
    /// `ξ0(t) = 0.235² √(1+t)`
    Three,
}

const SCENARIO_LEVEL: f64 = 0.235;

#[derive(Clone)]
enum CurveKind {
    Flat(f64),
    Scenario(Scenario),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// Initial forward variance curve `t ↦ ξ0(t) > 0`.
#[derive(Clone)]
pub struct ForwardCurve {
    kind: CurveKind,
    label: String,
}

impl fmt::Debug for ForwardCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForwardCurve").field("label", &self.label).finish()
    }
}

impl ForwardCurve {
    pub fn flat(xi0: f64) -> Result<Self> {
        if !(xi0 > 0.0) || !xi0.is_finite() {
            return domain(format!("flat forward variance must be positive, got {xi0}"));
        }
        Ok(Self {
            kind: CurveKind::Flat(xi0),
            label: format!("flat({xi0})"),
        })
    }

    /// Flat curve `ξ0 = VIX₀²`.
    pub fn from_vix(vix: f64) -> Result<Self> {
        let mut c = Self::flat(vix * vix)?;
        c.label = format!("flat-from-vix({vix})");
        Ok(c)
    }

    pub fn scenario(s: Scenario) -> Self {
        let label = match s {
            Scenario::One => "scenario-1",
            Scenario::Two => "scenario-2",
            Scenario::Three => "scenario-3",
        };
        Self {
            kind: CurveKind::Scenario(s),
            label: label.into(),
        }
    }

    /// Arbitrary positive curve. Positivity is checked at evaluation.
    pub fn custom<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            kind: CurveKind::Custom(Arc::new(f)),
            label: label.into(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The level if the curve is constant.
    pub fn flat_level(&self) -> Option<f64> {
        match self.kind {
            CurveKind::Flat(x) => Some(x),
            CurveKind::Scenario(Scenario::One) => Some(SCENARIO_LEVEL * SCENARIO_LEVEL),
            _ => None,
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let base = SCENARIO_LEVEL * SCENARIO_LEVEL;
        let v = match &self.kind {
            CurveKind::Flat(x) => *x,
            CurveKind::Scenario(Scenario::One) => base,
            CurveKind::Scenario(Scenario::Two) => base * (1.0 + t) * (1.0 + t),
            CurveKind::Scenario(Scenario::Three) => base * (1.0 + t).sqrt(),
            CurveKind::Custom(f) => f(t),
        };
        if !(v > 0.0) || !v.is_finite() {
            return domain(format!("forward variance curve {} is not positive at t = {t}: {v}", self.label));
        }
        Ok(v)
    }
}

/// Whether martingality of the spot is guaranteed for the chosen correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MartingaleRegime {
    /// `ρ ≤ 0`
    Guaranteed,
    /// `ρ > 0`: prices are computed but martingality is not established.
    Unverified,
}

/// The gBergomi parameter set.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub hurst: f64,
    pub beta: f64,
    pub eta: f64,
    pub rho: f64,
    pub xi0: ForwardCurve,
}

impl ModelParams {
    pub fn new(hurst: f64, beta: f64, eta: f64, rho: f64, xi0: ForwardCurve) -> Result<Self> {
        let p = Self {
            hurst,
            beta,
            eta,
            rho,
            xi0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return domain(format!("H must lie in (0, 1), got {}", self.hurst));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return domain(format!("β must lie in (0, 1], got {}", self.beta));
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return domain(format!("η must be non-negative, got {}", self.eta));
        }
        if !(self.rho >= -1.0 && self.rho <= 1.0) {
            return domain(format!("ρ must lie in [-1, 1], got {}", self.rho));
        }
        Ok(())
    }

    /// `𝔠 = 1/Γ(H+1/2)`
    pub fn c(&self) -> f64 {
        1.0 / gamma(self.hurst + 0.5)
    }

    pub fn h_plus(&self) -> f64 {
        self.hurst + 0.5
    }

    pub fn h_minus(&self) -> f64 {
        self.hurst - 0.5
    }

    /// `𝔟 = η²𝔠²/(4H)`
    pub fn b(&self) -> f64 {
        let ec = self.eta * self.c();
        ec * ec / (4.0 * self.hurst)
    }

    pub fn law(&self) -> GreyLaw {
        GreyLaw::new(self.beta).expect("β validated")
    }

    pub fn mittag_leffler(&self) -> Result<MittagLeffler> {
        MittagLeffler::new(self.beta)
    }

    pub fn martingale_regime(&self) -> MartingaleRegime {
        if self.rho <= 0.0 {
            MartingaleRegime::Guaranteed
        } else {
            MartingaleRegime::Unverified
        }
    }

    /// `β = 1` reduces the model to rough Bergomi.
    pub fn is_rbergomi(&self) -> bool {
        self.beta == 1.0
    }
}

/// VIX accrual convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VixConvention {
    pub delta: f64,
}

impl Default for VixConvention {
    fn default() -> Self {
        Self {
            delta: DEFAULT_VIX_WINDOW,
        }
    }
}

impl VixConvention {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return domain(format!("VIX window must be positive, got {delta}"));
        }
        Ok(Self { delta })
    }
}

/// How the mixing variable enters the forward variance of the VIX engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum VixMixing {
    /// `Y_β` averaged out of ζ and of the future Gaussian part separately.
    #[default]
    Series,
    /// Forward variance conditional on the path's own `Y_β`.
    ConditionalOnY,
}

/// `ln E_β(𝔟 t^{2H})`.
pub fn ln_wick_normalizer(t: f64, p: &ModelParams) -> Result<f64> {
    if !(t >= 0.0) {
        return domain(format!("time must be non-negative, got {t}"));
    }
    p.mittag_leffler()?.ln_eval(p.b() * t.powf(2.0 * p.hurst))
}

/// `E_β(𝔟 t^{2H})`, the normaliser making `E[V_t] = ξ0(t)`.
pub fn wick_blacklozenge_normalizer(t: f64, p: &ModelParams) -> Result<f64> {
    if !(t >= 0.0) {
        return domain(format!("time must be non-negative, got {t}"));
    }
    p.mittag_leffler()?.eval(p.b() * t.powf(2.0 * p.hurst))
}

fn exp_checked(ln: f64, what: &str) -> Result<f64> {
    if ln > LN_MAX {
        return Err(Error::Overflow(format!("{what}: ln value {ln:.6e} exceeds the floating range")));
    }
    if ln < LN_MIN {
        return Err(Error::Overflow(format!("{what}: ln value {ln:.6e} underflows to zero")));
    }
    Ok(ln.exp())
}

/// `V_t = ξ0(t) exp(η𝔠 √Y 𝒱_t) / E_β(𝔟 t^{2H})`.
pub fn variance_given_factors(t: f64, sqrt_y: f64, volterra_value: f64, p: &ModelParams) -> Result<f64> {
    if !(sqrt_y >= 0.0) {
        return domain(format!("√Y must be non-negative, got {sqrt_y}"));
    }
    let ln = p.xi0.eval(t)?.ln() + p.eta * p.c() * sqrt_y * volterra_value - ln_wick_normalizer(t, p)?;
    if ln > LN_MAX {
        return Err(Error::Overflow(format!("variance at t = {t}: ln value {ln:.6e}")));
    }
    Ok(ln.exp())
}

/// `ζ(v) = Σ_k (η𝔠 v)^k / k! · Γ(1+k/2)/Γ(1+βk/2) = E[exp(η𝔠 √Y_β v)]`
/// with the coefficient ratios precomputed.
#[derive(Debug, Clone)]
pub struct ZetaSeries {
    beta: f64,
    a: f64,
    tol: f64,
    /// `ratio[k] = c_k / c_{k-1}` without the power of `a v`.
    ratio: Vec<f64>,
    /// `ln c_k` for the log-domain fallback.
    ln_coef: Vec<f64>,
}

impl ZetaSeries {
    pub fn new(p: &ModelParams) -> Result<Self> {
        Self::with_tolerance(p, ZETA_TOL)
    }

    pub fn with_tolerance(p: &ModelParams, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return domain(format!("ζ tolerance must be positive, got {tol}"));
        }
        let beta = p.beta;
        let ln_coef: Vec<f64> = (0..ZETA_MAX_TERMS)
            .map(|k| {
                let k = k as f64;
                ln_gamma(1.0 + k / 2.0) - ln_gamma(1.0 + beta * k / 2.0) - ln_gamma(k + 1.0)
            })
            .collect();
        let mut ratio = vec![1.0; ZETA_MAX_TERMS];
        for k in 1..ZETA_MAX_TERMS {
            ratio[k] = (ln_coef[k] - ln_coef[k - 1]).exp();
        }
        Ok(Self {
            beta,
            a: p.eta * p.c(),
            tol,
            ratio,
            ln_coef,
        })
    }

    /// `ln ζ(v)`.
    pub fn ln_eval(&self, v: f64) -> Result<f64> {
        let x = self.a * v;
        if self.beta == 1.0 || x == 0.0 {
            return Ok(x);
        }
        if !x.is_finite() {
            return domain(format!("ζ argument must be finite, got {v}"));
        }
        match self.fast(x)? {
            Some(sum) => Ok(sum.ln()),
            None if x > 0.0 => self.ln_positive(x),
            None => Ok(zeta_kanter(self.beta, x)?.ln()),
        }
    }

    pub fn eval(&self, v: f64) -> Result<f64> {
        exp_checked(self.ln_eval(v)?, "ζ-series")
    }

    /// Direct summation; `None` when it overflows or cancels too much.
    fn fast(&self, x: f64) -> Result<Option<f64>> {
        let mut acc = Kahan::default();
        acc.add(1.0);
        let mut term = 1.0_f64;
        let mut max_term = 1.0_f64;
        for k in 1..ZETA_MAX_TERMS {
            let next = term * x * self.ratio[k];
            let decreasing = next.abs() <= term.abs();
            term = next;
            if !term.is_finite() {
                return Ok(None);
            }
            acc.add(term);
            max_term = max_term.max(term.abs());
            let sum = acc.value();
            if decreasing && term.abs() < self.tol * sum.abs() {
                if !(sum > 0.0) || max_term > ZETA_CANCELLATION_LIMIT * sum {
                    return Ok(None);
                }
                return Ok(Some(sum));
            }
        }
        Err(Error::NonConvergence {
            what: "ζ-series",
            terms: ZETA_MAX_TERMS,
            partial: acc.value(),
        })
    }

    /// Log-domain summation for large positive arguments (all terms positive).
    /// The peak term sits near `k ≈ x^{2/(1+β)}`, so the term count is not capped
    /// by the precomputed table.
    fn ln_positive(&self, x: f64) -> Result<f64> {
        let lx = x.ln();
        let ln_coef = |k: usize| -> f64 {
            match self.ln_coef.get(k) {
                Some(c) => *c,
                None => {
                    let k = k as f64;
                    ln_gamma(1.0 + k / 2.0) - ln_gamma(1.0 + self.beta * k / 2.0) - ln_gamma(k + 1.0)
                }
            }
        };
        // running log-sum-exp: sum = exp(peak) * scaled
        let mut peak = 0.0_f64;
        let mut scaled = 1.0_f64;
        let mut prev = 0.0_f64;
        for k in 1..ZETA_LOG_MAX_TERMS {
            let lt = ln_coef(k) + k as f64 * lx;
            if lt > peak {
                scaled = scaled * (peak - lt).exp() + 1.0;
                peak = lt;
            } else {
                scaled += (lt - peak).exp();
            }
            if lt < prev && lt - peak < self.tol.ln() + scaled.ln() {
                return Ok(peak + scaled.ln());
            }
            prev = lt;
        }
        Err(Error::NonConvergence {
            what: "ζ-series (log domain)",
            terms: ZETA_LOG_MAX_TERMS,
            partial: peak + scaled.ln(),
        })
    }
}

/// `E[exp(x √Y_β)]` from the Kanter representation `Y = (E / A(U))^{1-β}`:
/// a double integral over `U ∈ (0, π)` and `E ∈ (0, ∞)`.
fn zeta_kanter(beta: f64, x: f64) -> Result<f64> {
    let gamma_exp = 0.5 * (1.0 - beta);
    let outer = |u: f64| -> f64 {
        let ln_a = {
            let sb = (beta * u).sin().ln();
            let s = u.sin().ln();
            let sc = ((1.0 - beta) * u).sin().ln();
            (sb - s) / (1.0 - beta) + sc - sb
        };
        let inner = |e: f64| -> f64 {
            if e <= 0.0 {
                return if x < 0.0 { 1.0 } else { 0.0 };
            }
            let sqrt_y = (gamma_exp * (e.ln() - ln_a)).exp();
            (-e + x * sqrt_y).exp()
        };
        integrate_to_infinity(inner, 0.0, QuadTol::new(1e-300, 1e-12))
            .map(|r| r.value)
            .unwrap_or(f64::NAN)
    };
    let r = integrate(outer, 0.0, PI, QuadTol::new(1e-300, 1e-11))?;
    Ok(r.value / PI)
}

/// `ζ(v)` at tolerance `tol`.
pub fn zeta_series(v: f64, p: &ModelParams, tol: f64) -> Result<f64> {
    ZetaSeries::with_tolerance(p, tol)?.eval(v)
}

/// `ln ξ_T(t)`; see [`forward_variance`].
pub fn ln_forward_variance(maturity: f64, t: f64, v: f64, p: &ModelParams) -> Result<f64> {
    if !(t >= maturity) || !(maturity >= 0.0) {
        return domain(format!("forward variance needs 0 ≤ T ≤ t, got T = {maturity}, t = {t}"));
    }
    let ml = p.mittag_leffler()?;
    let two_h = 2.0 * p.hurst;
    let ln_prefactor = p.xi0.eval(t)?.ln() - ml.ln_eval(p.b() * t.powf(two_h))?
        + ml.ln_eval(p.b() * (t - maturity).powf(two_h))?;
    Ok(ln_prefactor + ZetaSeries::new(p)?.ln_eval(v)?)
}

/// `ξ_T(t) = ξ0(t) / E_β(𝔟 t^{2H}) · ζ_T(t) · E_β(𝔟 (t-T)^{2H})` given `v = 𝒱ᵗ_T`.
pub fn forward_variance(maturity: f64, t: f64, v: f64, p: &ModelParams) -> Result<f64> {
    exp_checked(ln_forward_variance(maturity, t, v, p)?, "forward variance")
}

/// Deterministic part of `ln ξ_T(τ_j)` on a VIX grid, reused across paths.
#[derive(Debug, Clone)]
pub struct VixWindow {
    pub maturity: f64,
    pub grid: Vec<f64>,
    pub ln_prefactor: Vec<f64>,
    /// `𝔟(τ_j - T)^{2H}`; times `Y` it is the log-MGF of the future Gaussian part.
    pub future_var: Vec<f64>,
    /// `ln E_β(𝔟 τ_j^{2H})`
    pub ln_normalizer: Vec<f64>,
    pub ln_xi0: Vec<f64>,
    pub delta: f64,
}

impl VixWindow {
    pub fn new(maturity: f64, grid: &[f64], p: &ModelParams, conv: &VixConvention) -> Result<Self> {
        check_window(maturity, grid, conv)?;
        let ml = p.mittag_leffler()?;
        let two_h = 2.0 * p.hurst;
        let b = p.b();
        let mut ln_prefactor = Vec::with_capacity(grid.len());
        let mut future_var = Vec::with_capacity(grid.len());
        let mut ln_normalizer = Vec::with_capacity(grid.len());
        let mut ln_xi0 = Vec::with_capacity(grid.len());
        for &t in grid {
            let ln_norm = ml.ln_eval(b * t.powf(two_h))?;
            let lag = b * (t - maturity).powf(two_h);
            let lx = p.xi0.eval(t)?.ln();
            ln_prefactor.push(lx - ln_norm + ml.ln_eval(lag)?);
            future_var.push(lag);
            ln_normalizer.push(ln_norm);
            ln_xi0.push(lx);
        }
        Ok(Self {
            maturity,
            grid: grid.to_vec(),
            ln_prefactor,
            future_var,
            ln_normalizer,
            ln_xi0,
            delta: conv.delta,
        })
    }

    /// Trapezoid average of `exp(ln_q[j])` over the window, in log space.
    pub fn vix_squared_from_ln(&self, ln_q: &[f64]) -> Result<f64> {
        let peak = ln_q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Error::Overflow(format!("forward variance on the VIX window: ln peak {peak}")));
        }
        let mut acc = 0.0;
        for j in 0..self.grid.len() - 1 {
            let h = self.grid[j + 1] - self.grid[j];
            acc += 0.5 * h * ((ln_q[j] - peak).exp() + (ln_q[j + 1] - peak).exp());
        }
        exp_checked(peak + (acc / self.delta).ln(), "VIX²")
    }
}

fn check_window(maturity: f64, grid: &[f64], conv: &VixConvention) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::Grid("VIX grid needs at least two points".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Grid("VIX grid must be strictly increasing".into()));
    }
    let tol = 1e-12 * (1.0 + maturity);
    let end = maturity + conv.delta;
    if (grid[0] - maturity).abs() > tol || (grid[grid.len() - 1] - end).abs() > tol {
        return Err(Error::Grid(format!(
            "VIX grid must cover [{maturity}, {end}], got [{}, {}]",
            grid[0],
            grid[grid.len() - 1]
        )));
    }
    Ok(())
}

/// Uniform grid with `n` points on `[T, T+Δ]`.
pub fn vix_grid(maturity: f64, n: usize, conv: &VixConvention) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|j| {
            if j == n - 1 {
                maturity + conv.delta
            } else {
                maturity + conv.delta * j as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// `VIX²_T = (1/Δ) ∫_T^{T+Δ} ξ_T(s) ds` by the trapezoid rule on `grid`,
/// given `v[j] = 𝒱^{τ_j}_T`.
pub fn vix_squared_from_path(
    maturity: f64,
    grid: &[f64],
    v: &[f64],
    p: &ModelParams,
    conv: &VixConvention,
) -> Result<f64> {
    if v.len() != grid.len() {
        return Err(Error::Grid(format!(
            "{} Volterra values for {} grid points",
            v.len(),
            grid.len()
        )));
    }
    let window = VixWindow::new(maturity, grid, p, conv)?;
    let zeta = ZetaSeries::new(p)?;
    let ln_q = window
        .ln_prefactor
        .iter()
        .zip(v)
        .map(|(lp, &vj)| Ok(lp + zeta.ln_eval(vj)?))
        .collect::<Result<Vec<f64>>>()?;
    window.vix_squared_from_ln(&ln_q)
}

/// `√((1/Δ) ∫_T^{T+Δ} ξ0(s) ds)`.
pub fn vix_futures_upper_bound(maturity: f64, p: &ModelParams, conv: &VixConvention) -> Result<f64> {
    if !(maturity >= 0.0) {
        return domain(format!("maturity must be non-negative, got {maturity}"));
    }
    let mut err = None;
    let r = integrate(
        |s| match p.xi0.eval(s) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                f64::NAN
            }
        },
        maturity,
        maturity + conv.delta,
        QuadTol::new(1e-15, 1e-13),
    );
    if let Some(e) = err {
        return Err(e);
    }
    Ok((r?.value / conv.delta).sqrt())
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Composite 15-point Kronrod nodes and weights on `[a, b]`, graded towards `a`
/// where `(s-T)^{2H}` is not smooth.
fn graded_rule(a: f64, b: f64) -> Vec<(f64, f64)> {
    const XGK: [f64; 8] = [
        0.991_455_371_120_812_6,
        0.949_107_912_342_758_5,
        0.864_864_423_359_769_1,
        0.741_531_185_599_394_4,
        0.586_087_235_467_691_1,
        0.405_845_151_377_397_2,
        0.207_784_955_007_898_5,
        0.0,
    ];
    const WGK: [f64; 8] = [
        0.022_935_322_010_529_22,
        0.063_092_092_629_978_55,
        0.104_790_010_322_250_18,
        0.140_653_259_715_525_92,
        0.169_004_726_639_267_9,
        0.190_350_578_064_785_4,
        0.204_432_940_075_298_9,
        0.209_482_141_084_727_83,
    ];
    let width = b - a;
    let mut breaks = vec![a];
    for e in (0..10).rev() {
        breaks.push(a + width * 4f64.powi(-(e as i32) - 1) * 4.0);
    }
    breaks.dedup();
    let mut rule = Vec::new();
    for w in breaks.windows(2) {
        let c = 0.5 * (w[0] + w[1]);
        let h = 0.5 * (w[1] - w[0]);
        for j in 0..7 {
            rule.push((c - h * XGK[j], h * WGK[j]));
            rule.push((c + h * XGK[j], h * WGK[j]));
        }
        rule.push((c, h * WGK[7]));
    }
    rule
}

/// Lower bound `(1/Δ)∫ √(ξ0(s) E_β(𝔟(s-T)^{2H}) / E_β(𝔟 s^{2H})) · E[√ζ_T(s)] ds`.
///
/// `E[√ζ_T(s)]` is estimated from `mc.n_paths` standard normals `z`, shared
/// across `s`, with `𝒱ˢ_T = sd(s)·z`; the outer integral uses a fixed graded
/// Kronrod rule, so the estimate is an average of per-draw integrals.
pub fn vix_futures_lower_bound(
    maturity: f64,
    p: &ModelParams,
    conv: &VixConvention,
    mc: &McConfig,
) -> Result<Estimate> {
    if !(maturity >= 0.0) {
        return domain(format!("maturity must be non-negative, got {maturity}"));
    }
    let ml = p.mittag_leffler()?;
    let two_h = 2.0 * p.hurst;
    let b = p.b();
    let rule = graded_rule(maturity, maturity + conv.delta);
    let mut weights = Vec::with_capacity(rule.len());
    let mut sds = Vec::with_capacity(rule.len());
    for &(s, w) in &rule {
        let ln = p.xi0.eval(s)?.ln() + ml.ln_eval(b * (s - maturity).powf(two_h))?
            - ml.ln_eval(b * s.powf(two_h))?;
        weights.push(w * exp_checked(0.5 * ln, "lower-bound prefactor")? / conv.delta);
        let var = (s.powf(two_h) - (s - maturity).powf(two_h)) / two_h;
        sds.push(var.max(0.0).sqrt());
    }
    let zeta = ZetaSeries::new(p)?;
    let n = mc.n_paths;
    let per_draw = crate::rng::par_map_indexed(n, mc.workers, |i| {
        let mut rng = path_rng(mc.seed, i as u64);
        let z: f64 = StandardNormal.sample(&mut rng);
        let mut acc = 0.0;
        for (w, sd) in weights.iter().zip(&sds) {
            acc += w * (0.5 * zeta.ln_eval(sd * z)?).exp();
        }
        Ok(acc)
    })?;
    let (value, stderr) = mean_and_stderr(&per_draw)?;
    Ok(Estimate { value, stderr })
}

/// Short-time limit of the skew-stickiness ratio, `H + 3/2`.
pub fn ssr_short_time_limit(hurst: f64) -> Result<f64> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return domain(format!("H must lie in (0, 1), got {hurst}"));
    }
    Ok(hurst + 1.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::mittag_leffler;
    use proptest::prelude::*;

    fn reference(beta: f64) -> ModelParams {
        ModelParams::new(0.07, beta, 1.23, -0.9, ForwardCurve::scenario(Scenario::One)).unwrap()
    }

    #[test]
    fn derived_constants() {
        let p = reference(0.9);
        assert!((p.c() - 1.0 / gamma(0.57)).abs() < 1e-15);
        assert!((p.b() - 1.23f64.powi(2) * p.c().powi(2) / 0.28).abs() < 1e-14);
        assert_eq!(p.martingale_regime(), MartingaleRegime::Guaranteed);
        let mut q = p.clone();
        q.rho = 0.3;
        assert_eq!(q.martingale_regime(), MartingaleRegime::Unverified);
        assert!(ModelParams::new(0.0, 0.5, 1.0, 0.0, ForwardCurve::flat(0.04).unwrap()).is_err());
    }

    #[test]
    fn scenarios() {
        let base = 0.235f64 * 0.235;
        assert_eq!(ForwardCurve::scenario(Scenario::One).eval(3.0).unwrap(), base);
        assert_eq!(ForwardCurve::scenario(Scenario::Two).eval(1.0).unwrap(), base * 4.0);
        assert_eq!(ForwardCurve::scenario(Scenario::Three).eval(3.0).unwrap(), base * 2.0);
        assert_eq!(ForwardCurve::from_vix(0.2).unwrap().flat_level(), Some(0.2 * 0.2));
        assert!(ForwardCurve::custom("neg", |_| -1.0).eval(0.0).is_err());
    }

    #[test]
    fn normalizer() {
        let p = reference(0.9);
        assert_eq!(wick_blacklozenge_normalizer(0.0, &p).unwrap(), 1.0);
        let rb = reference(1.0);
        let t: f64 = 0.7;
        let expected = (rb.b() * t.powf(0.14)).exp();
        assert!((wick_blacklozenge_normalizer(t, &rb).unwrap() - expected).abs() < 1e-14 * expected);
        let expected = mittag_leffler(0.9, p.b()).unwrap();
        assert_eq!(wick_blacklozenge_normalizer(1.0, &p).unwrap(), expected);
    }

    #[test]
    fn variance_examples() {
        let p = reference(0.9);
        assert_eq!(variance_given_factors(0.0, 1.7, 0.0, &p).unwrap(), 0.235 * 0.235);
        let v = variance_given_factors(1.0, 1.0, 0.3, &p).unwrap();
        let expected = 0.235f64.powi(2) * (1.23 * p.c() * 0.3).exp() / mittag_leffler(0.9, p.b()).unwrap();
        assert!((v - expected).abs() < 1e-14 * expected);
        assert!(variance_given_factors(1.0, -1.0, 0.3, &p).is_err());
        let mut wild = reference(1.0);
        wild.eta = 10.0;
        assert!(matches!(variance_given_factors(1.0, 1.0, 1000.0, &wild), Err(Error::Overflow(_))));
    }

    #[test]
    fn zeta_reduces_to_exponential() {
        let mut p = reference(1.0);
        p.eta = 1.0 / p.c();
        let z = zeta_series(0.5, &p, 1e-12).unwrap();
        assert!((z - 0.5f64.exp()).abs() < 1e-15);
        assert_eq!(zeta_series(0.0, &reference(0.9), 1e-12).unwrap(), 1.0);
    }

    #[test]
    fn zeta_matches_moment_series_and_kanter() {
        // Both representations of E[exp(x √Y)] where the series is well conditioned.
        let p = reference(0.6);
        let zs = ZetaSeries::new(&p).unwrap();
        for v in [-1.5, -0.5, 0.7, 2.0] {
            let series = zs.eval(v).unwrap();
            let kanter = zeta_kanter(0.6, p.eta * p.c() * v).unwrap();
            assert!(((series - kanter) / series).abs() < 1e-9, "v={v}: {series} vs {kanter}");
        }
    }

    #[test]
    fn zeta_far_negative_uses_integral() {
        let p = reference(0.9);
        let zs = ZetaSeries::new(&p).unwrap();
        let v = -30.0;
        let z = zs.eval(v).unwrap();
        let kanter = zeta_kanter(0.9, p.eta * p.c() * v).unwrap();
        assert!(z > 0.0 && z < 1e-3);
        assert!((z - kanter).abs() < 1e-14 * kanter);
    }

    #[test]
    fn zeta_large_positive_in_log_domain() {
        let p = ModelParams::new(0.015, 0.11, 2.0, -1.0, ForwardCurve::flat(0.04).unwrap()).unwrap();
        let zs = ZetaSeries::new(&p).unwrap();
        let ln = zs.ln_eval(60.0).unwrap();
        assert!(ln.is_finite() && ln > LN_MAX);
        assert!(matches!(zs.eval(60.0), Err(Error::Overflow(_))));
    }

    #[test]
    fn forward_variance_boundaries() {
        let p = ModelParams::new(0.07, 0.9, 1.23, -0.9, ForwardCurve::scenario(Scenario::Two)).unwrap();
        let xi = forward_variance(0.0, 0.4, 0.0, &p).unwrap();
        let expected = p.xi0.eval(0.4).unwrap();
        assert!((xi - expected).abs() < 1e-15 * expected);
        assert!(forward_variance(0.5, 0.4, 0.0, &p).is_err());
    }

    #[test]
    fn vix_of_flat_noiseless_model() {
        let mut p = reference(1.0);
        p.eta = 0.0;
        let conv = VixConvention::default();
        let grid = vix_grid(0.25, 50, &conv);
        let v = vec![0.0; grid.len()];
        let vix2 = vix_squared_from_path(0.25, &grid, &v, &p, &conv).unwrap();
        assert!((vix2 - 0.235f64.powi(2)).abs() < 1e-15);
        assert!(vix_squared_from_path(0.25, &grid[1..], &v[1..], &p, &conv).is_err());
    }

    #[test]
    fn zero_path_vix_matches_quadrature() {
        let p = reference(0.9);
        let conv = VixConvention::default();
        let m = 0.25;
        let grid = vix_grid(m, 2001, &conv);
        let v = vec![0.0; grid.len()];
        let vix2 = vix_squared_from_path(m, &grid, &v, &p, &conv).unwrap();
        let f = |s: f64| {
            0.235f64.powi(2) * mittag_leffler(0.9, p.b() * (s - m).powf(0.14)).unwrap()
                / mittag_leffler(0.9, p.b() * s.powf(0.14)).unwrap()
        };
        let exact = integrate(f, m, m + conv.delta, QuadTol::new(1e-16, 1e-12)).unwrap().value / conv.delta;
        // trapezoid error is dominated by the (s-T)^{0.14} cusp at the left end
        assert!(((vix2 - exact) / exact).abs() < 1e-4, "{vix2} vs {exact}");
    }

    #[test]
    fn upper_bounds() {
        let conv = VixConvention::default();
        let p1 = reference(0.9);
        for t in [0.0, 0.5, 2.0] {
            assert!((vix_futures_upper_bound(t, &p1, &conv).unwrap() - 0.235).abs() < 1e-14);
        }
        let mut p2 = p1.clone();
        p2.xi0 = ForwardCurve::scenario(Scenario::Two);
        // ∫₁^{1+Δ} (1+t)² dt = ((2+Δ)³ - 8)/3
        let d = conv.delta;
        let exact = 0.235 * (((2.0 + d).powi(3) - 8.0) / 3.0 / d).sqrt();
        assert!((vix_futures_upper_bound(1.0, &p2, &conv).unwrap() - exact).abs() < 1e-14);
        let mut p3 = p1.clone();
        p3.xi0 = ForwardCurve::scenario(Scenario::Three);
        let exact = 0.235 * ((2.0 / 3.0) * ((1.0 + d).powf(1.5) - 1.0) / d).sqrt();
        assert!((vix_futures_upper_bound(0.0, &p3, &conv).unwrap() - exact).abs() < 1e-14);
    }

    #[test]
    fn lower_bound_at_zero_maturity_is_deterministic() {
        let p = ModelParams::new(0.07, 0.9, 1.23, -0.9, ForwardCurve::scenario(Scenario::Three)).unwrap();
        let conv = VixConvention::default();
        let mc = McConfig::new(1000, 3);
        let lb = vix_futures_lower_bound(0.0, &p, &conv, &mc).unwrap();
        let exact = integrate(|s| p.xi0.eval(s).unwrap().sqrt(), 0.0, conv.delta, QuadTol::default())
            .unwrap()
            .value
            / conv.delta;
        assert!((lb.value - exact).abs() < 1e-12, "{} vs {exact}", lb.value);
        assert!(lb.stderr < 1e-15);
    }

    #[test]
    fn lower_bound_lognormal_case() {
        // β = 1: E[√ζ] = exp(η²𝔠² Var/8), so the integrand is ξ0^{1/2} exp(-η²𝔠² Var/8).
        let p = reference(1.0);
        let conv = VixConvention::default();
        let m = 0.25;
        let mc = McConfig::new(20_000, 5);
        let lb = vix_futures_lower_bound(m, &p, &conv, &mc).unwrap();
        let ec2 = (p.eta * p.c()).powi(2);
        let f = |s: f64| {
            let var = (s.powf(0.14) - (s - m).powf(0.14)) / 0.14;
            0.235 * (-ec2 * var / 8.0).exp()
        };
        let exact = integrate(f, m, m + conv.delta, QuadTol::new(1e-15, 1e-12)).unwrap().value / conv.delta;
        assert!((lb.value - exact).abs() < 3.0 * lb.stderr + 1e-9, "{} ± {} vs {exact}", lb.value, lb.stderr);
    }

    #[test]
    fn ssr() {
        assert_eq!(ssr_short_time_limit(0.5).unwrap(), 2.0);
        assert!((ssr_short_time_limit(0.07).unwrap() - 1.57).abs() < 1e-15);
        assert!((ssr_short_time_limit(0.015).unwrap() - 1.515).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn zeta_positive(v in -5.0f64..5.0, beta in 0.05f64..1.0) {
            let p = reference(beta);
            prop_assert!(zeta_series(v, &p, 1e-12).unwrap() > 0.0);
        }

        #[test]
        fn zeta_monotone_in_v(v in -4.0f64..4.0, beta in 0.2f64..1.0) {
            let zs = ZetaSeries::new(&reference(beta)).unwrap();
            prop_assert!(zs.ln_eval(v + 0.01).unwrap() > zs.ln_eval(v).unwrap());
        }
    }
}
