//! VIX simulation: full Cholesky on the first `l+1` window points, then the
//! adjacent-correlation recursion, then trapezoidal integration of `ξ_T`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{flatten_pairs, EngineTag, McConfig, Samples};
use crate::error::Result;
use crate::ggbm::{build_cov_matrix, volterra_cov_forward, CovKind};
use crate::linalg::Cholesky;
use crate::model::{ModelParams, VixConvention, VixMixing, VixWindow, ZetaSeries};
use crate::rng::par_map_indexed;
use crate::specfun::sample_m_wright;

/// Gaussian sampler for `(𝒱^{τ_j}_T)_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum VixEngine {
    /// Full Cholesky on `l+1` points, adjacent-correlation recursion after.
    #[default]
    Truncated,
    /// Full Cholesky on the whole window.
    FullCholesky,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VixOptions {
    pub engine: VixEngine,
    pub mixing: VixMixing,
    pub convention: VixConvention,
}

struct Recursion {
    /// `σ_j ρ_{j-1,j} / σ_{j-1}`
    carry: Vec<f64>,
    /// `σ_j √(1 - ρ²_{j-1,j})`
    shock: Vec<f64>,
}

/// Draws the Volterra vector for one path from standard normals `z`.
struct VolterraSampler {
    head: Option<Cholesky>,
    head_len: usize,
    tail: Recursion,
    n: usize,
}

impl VolterraSampler {
    fn new(grid: &[f64], maturity: f64, hurst: f64, head_len: usize) -> Result<Self> {
        let n = grid.len();
        if maturity == 0.0 {
            return Ok(Self {
                head: None,
                head_len: 0,
                tail: Recursion {
                    carry: vec![],
                    shock: vec![],
                },
                n,
            });
        }
        let head_len = head_len.min(n);
        let cov = build_cov_matrix(&grid[..head_len], CovKind::Forward { maturity }, hurst)?;
        let head = cov.factor()?.clone();
        let sd: Vec<f64> = grid
            .iter()
            .map(|&t| volterra_cov_forward(t, t, maturity, hurst).map(f64::sqrt))
            .collect::<Result<_>>()?;
        let mut carry = Vec::with_capacity(n - head_len);
        let mut shock = Vec::with_capacity(n - head_len);
        for j in head_len..n {
            let c = volterra_cov_forward(grid[j - 1], grid[j], maturity, hurst)?;
            let rho = (c / (sd[j - 1] * sd[j])).clamp(-1.0, 1.0);
            carry.push(sd[j] * rho / sd[j - 1]);
            shock.push(sd[j] * (1.0 - rho * rho).max(0.0).sqrt());
        }
        Ok(Self {
            head: Some(head),
            head_len,
            tail: Recursion { carry, shock },
            n,
        })
    }

    fn fill(&self, z: &[f64], sign: f64, v: &mut [f64]) {
        let Some(head) = &self.head else {
            v.iter_mut().for_each(|x| *x = 0.0);
            return;
        };
        for i in 0..self.head_len {
            let row = head.row(i);
            v[i] = sign * row.iter().zip(z).map(|(l, z)| l * z).sum::<f64>();
        }
        for j in self.head_len..self.n {
            let k = j - self.head_len;
            v[j] = self.tail.carry[k] * v[j - 1] + self.tail.shock[k] * sign * z[j];
        }
    }
}

/// VIX_T samples with the default options (truncated Cholesky, series mixing, Δ = 1/12).
pub fn simulate_vix(p: &ModelParams, maturity: f64, grid: &[f64], mc: &McConfig) -> Result<Samples> {
    simulate_vix_with(p, maturity, grid, mc, &VixOptions::default())
}

pub fn simulate_vix_with(
    p: &ModelParams,
    maturity: f64,
    grid: &[f64],
    mc: &McConfig,
    opts: &VixOptions,
) -> Result<Samples> {
    mc.validate()?;
    p.validate()?;
    let window = VixWindow::new(maturity, grid, p, &opts.convention)?;
    let n = grid.len();
    let (head_len, engine) = match opts.engine {
        VixEngine::FullCholesky => (n, EngineTag::VixFullCholesky),
        VixEngine::Truncated => (
            mc.truncation_l + 1,
            EngineTag::VixTruncatedCholesky { l: mc.truncation_l },
        ),
    };
    let sampler = VolterraSampler::new(grid, maturity, p.hurst, head_len)?;
    let zeta = ZetaSeries::new(p)?;
    let law = p.law();
    let ec = p.eta * p.c();
    let signs: &[f64] = if mc.antithetic { &[1.0, -1.0] } else { &[1.0] };

    let per_draw = par_map_indexed(mc.draws(), mc.workers, |i| {
        let (mut primary, _) = mc.streams(i);
        let y = sample_m_wright(&law, &mut primary);
        let sqrt_y = y.sqrt();
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut primary)).collect();
        let mut v = vec![0.0; n];
        let mut ln_q = vec![0.0; n];
        let mut out = Vec::with_capacity(signs.len());
        for &sign in signs {
            sampler.fill(&z, sign, &mut v);
            for j in 0..n {
                ln_q[j] = match opts.mixing {
                    VixMixing::Series => window.ln_prefactor[j] + zeta.ln_eval(v[j])?,
                    VixMixing::ConditionalOnY => {
                        window.ln_xi0[j] - window.ln_normalizer[j]
                            + ec * sqrt_y * v[j]
                            + y * window.future_var[j]
                    }
                };
            }
            out.push(vec![window.vix_squared_from_ln(&ln_q)?.sqrt()]);
        }
        Ok(out)
    })?;
    let values = flatten_pairs(per_draw).into_iter().map(|r| r[0]).collect();
    Ok(Samples {
        values,
        maturity,
        antithetic: mc.antithetic,
        seed: mc.seed,
        engine,
        martingale: p.martingale_regime(),
        rbergomi_equivalent: p.is_rbergomi(),
    })
}
