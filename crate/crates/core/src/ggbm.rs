//! Generalised grey Brownian motion and the Riemann-Liouville Volterra process.
//!
//! `𝒱_t = ∫₀ᵗ (t-u)^{H-1/2} dB_u` and its truncation `𝒱ᵗ_T = ∫₀^T (t-u)^{H-1/2} dB_u`
//! are the Gaussian layer of the model. The grey motion is the mixture
//! `√Y_β · B^{α/2}` and only enters through the laws below.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::{Cholesky, SymMatrix};
use crate::specfun::{gamma, gauss_2f1, ln_gamma, MittagLeffler};

/// Parameters `(β, α)` of a grey Brownian motion; `α = 2H` in the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreyMotionParams {
    beta: f64,
    alpha: f64,
}

impl GreyMotionParams {
    pub fn new(beta: f64, alpha: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return domain(format!("β must lie in (0, 1], got {beta}"));
        }
        if !(alpha > 0.0 && alpha < 2.0) {
            return domain(format!("α must lie in (0, 2), got {alpha}"));
        }
        Ok(Self { beta, alpha })
    }

    pub fn from_hurst(hurst: f64, beta: f64) -> Result<Self> {
        Self::new(beta, 2.0 * hurst)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

fn check_time(t: f64, name: &str) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return domain(format!("{name} must be a finite non-negative time, got {t}"));
    }
    Ok(())
}

fn check_hurst(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 1.0) {
        return domain(format!("Hurst exponent must lie in (0, 1), got {h}"));
    }
    Ok(())
}

/// `E[B_t B_s] = (t^α + s^α - |t-s|^α) / (2 Γ(1+β))`.
pub fn ggbm_covariance(t: f64, s: f64, p: &GreyMotionParams) -> Result<f64> {
    check_time(t, "t")?;
    check_time(s, "s")?;
    let a = p.alpha;
    Ok((t.powf(a) + s.powf(a) - (t - s).abs().powf(a)) / (2.0 * gamma(1.0 + p.beta)))
}

/// `E[B_t^{2n}] = (2n)! t^{nα} / (2ⁿ Γ(βn+1))`.
pub fn ggbm_even_moment(t: f64, n: u32, p: &GreyMotionParams) -> Result<f64> {
    check_time(t, "t")?;
    if n == 0 {
        return domain("moment order n must be at least 1");
    }
    let nf = n as f64;
    let ln = ln_gamma(2.0 * nf + 1.0) - nf * 2f64.ln() - ln_gamma(p.beta * nf + 1.0);
    Ok(ln.exp() * t.powf(nf * p.alpha))
}

/// Characteristic function of an increment over a lag `δ`: `E_β(-u²|δ|^α/2)`.
pub fn ggbm_char(u: f64, delta: f64, p: &GreyMotionParams) -> Result<f64> {
    MittagLeffler::new(p.beta)?.eval(-0.5 * u * u * delta.abs().powf(p.alpha))
}

/// Moment generating function of an increment: `E_β(u²|δ|^α/2)`.
pub fn ggbm_mgf(u: f64, delta: f64, p: &GreyMotionParams) -> Result<f64> {
    MittagLeffler::new(p.beta)?.eval(0.5 * u * u * delta.abs().powf(p.alpha))
}

/// `E[𝒱ᵗ_T 𝒱ˢ_T] = ∫₀^T [(t-u)(s-u)]^{H-1/2} du` for `t, s ≥ T`.
pub fn volterra_cov_forward(t: f64, s: f64, maturity: f64, h: f64) -> Result<f64> {
    check_hurst(h)?;
    check_time(maturity, "T")?;
    let (t, s) = if t <= s { (t, s) } else { (s, t) };
    if t < maturity {
        return domain(format!("forward covariance needs t, s ≥ T, got t = {t} < T = {maturity}"));
    }
    if maturity == 0.0 {
        return Ok(0.0);
    }
    let hp = h + 0.5;
    let hm = h - 0.5;
    if t == s {
        return Ok((t.powf(2.0 * h) - (t - maturity).powf(2.0 * h)) / (2.0 * h));
    }
    let d = s - t;
    let f = |u: f64| gauss_2f1(-hm, hp, 1.0 + hp, u);
    let head = t.powf(hp) * f(-t / d)?;
    let tail = if t > maturity {
        (t - maturity).powf(hp) * f((maturity - t) / d)?
    } else {
        0.0
    };
    Ok(d.powf(hm) / hp * (head - tail))
}

/// `E[𝒱_t 𝒱_s]`; zero when either time is zero.
pub fn volterra_cov_spot(t: f64, s: f64, h: f64) -> Result<f64> {
    check_hurst(h)?;
    check_time(t, "t")?;
    check_time(s, "s")?;
    let (t, s) = if t <= s { (t, s) } else { (s, t) };
    if t == 0.0 {
        return Ok(0.0);
    }
    if t == s {
        return Ok(t.powf(2.0 * h) / (2.0 * h));
    }
    let hp = h + 0.5;
    let hm = h - 0.5;
    Ok(t.powf(hp) * s.powf(hm) / hp * gauss_2f1(-hm, 1.0, 1.0 + hp, t / s)?)
}

/// `Cov(𝒱_t, B_b - B_a) = ∫_a^{b∧t} (t-u)^{H-1/2} du`.
pub fn volterra_brownian_cross_cov(t: f64, a: f64, b: f64, h: f64) -> Result<f64> {
    check_hurst(h)?;
    check_time(t, "t")?;
    check_time(a, "a")?;
    if !(b > a) {
        return domain(format!("increment needs a < b, got [{a}, {b}]"));
    }
    if a >= t {
        return Ok(0.0);
    }
    let hp = h + 0.5;
    Ok(((t - a).powf(hp) - (t - b.min(t)).powf(hp)) / hp)
}

/// Which Gaussian vector a [`CovMatrix`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CovKind {
    /// `(𝒱^{τ_j}_T)_j` on a grid in `[T, ∞)`.
    Forward { maturity: f64 },
    /// `(ΔB_1, 𝒱_{t_1}, ΔB_2, 𝒱_{t_2}, …)` with `ΔB_i = B_{t_i} - B_{t_{i-1}}`, `t_0 = 0`.
    SpotIncrements,
}

/// Covariance of a Gaussian vector on a time grid, with a lazily computed factor.
#[derive(Debug)]
pub struct CovMatrix {
    grid: Vec<f64>,
    kind: CovKind,
    hurst: f64,
    entries: SymMatrix,
    factor: OnceLock<Result<Cholesky>>,
}

impl CovMatrix {
    /// Times carrying a random value (zero-variance points removed).
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn kind(&self) -> CovKind {
        self.kind
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn entries(&self) -> &SymMatrix {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.dim()
    }

    /// Cholesky factor, computed on first use.
    pub fn factor(&self) -> Result<&Cholesky> {
        self.factor
            .get_or_init(|| Cholesky::factor(&self.entries))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Index of `𝒱_{t_i}` inside the vector (spot kind), or `i` (forward kind).
    pub fn volterra_index(&self, i: usize) -> usize {
        match self.kind {
            CovKind::Forward { .. } => i,
            CovKind::SpotIncrements => 2 * i + 1,
        }
    }

    /// Index of `ΔB_i` (spot kind only).
    pub fn increment_index(&self, i: usize) -> usize {
        2 * i
    }
}

fn check_increasing(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Grid("empty grid".into()));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::Grid("grid contains non-finite times".into()));
    }
    if let Some(w) = grid.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::Grid(format!(
            "grid must be strictly increasing, found {} followed by {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Builds the covariance of the Volterra values on `grid`.
///
/// Points with zero variance (`t = 0`, or every point when `T = 0`) are dropped;
/// the caller treats them as exact zeros.
pub fn build_cov_matrix(grid: &[f64], kind: CovKind, h: f64) -> Result<CovMatrix> {
    check_hurst(h)?;
    check_increasing(grid)?;
    let entries;
    let kept: Vec<f64>;
    match kind {
        CovKind::Forward { maturity } => {
            check_time(maturity, "T")?;
            if grid[0] < maturity {
                return Err(Error::Grid(format!(
                    "forward grid starts at {} before the maturity {maturity}",
                    grid[0]
                )));
            }
            kept = if maturity == 0.0 { Vec::new() } else { grid.to_vec() };
            let n = kept.len();
            let mut m = SymMatrix::zeros(n);
            for i in 0..n {
                for j in 0..=i {
                    m.set(i, j, volterra_cov_forward(kept[j], kept[i], maturity, h)?);
                }
            }
            entries = m;
        }
        CovKind::SpotIncrements => {
            if grid[0] < 0.0 {
                return Err(Error::Grid("spot grid must start at t ≥ 0".into()));
            }
            kept = grid.iter().copied().filter(|&t| t > 0.0).collect();
            let n = kept.len();
            let left = |i: usize| if i == 0 { 0.0 } else { kept[i - 1] };
            let mut m = SymMatrix::zeros(2 * n);
            for i in 0..n {
                m.set(2 * i, 2 * i, kept[i] - left(i));
                for j in 0..=i {
                    m.set(2 * i + 1, 2 * j + 1, volterra_cov_spot(kept[j], kept[i], h)?);
                }
                for j in 0..n {
                    let c = volterra_brownian_cross_cov(kept[i], left(j), kept[j], h)?;
                    m.set(2 * i + 1, 2 * j, c);
                }
            }
            entries = m;
        }
    }
    Ok(CovMatrix {
        grid: kept,
        kind,
        hurst: h,
        entries,
        factor: OnceLock::new(),
    })
}
