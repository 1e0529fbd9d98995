//! Spot simulation by joint Cholesky of `(ΔB_i, 𝒱_{t_i})` and an Euler step on `ln S`.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{flatten_pairs, EngineTag, McConfig, Samples};
use crate::error::{Error, Result};
use crate::ggbm::{build_cov_matrix, CovKind};
use crate::model::{ln_wick_normalizer, ModelParams};
use crate::rng::par_map_indexed;
use crate::specfun::sample_m_wright;

pub(crate) fn check_spot_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::Grid("spot grid needs at least two points".into()));
    }
    if grid[0] != 0.0 {
        return Err(Error::Grid(format!("spot grid must start at 0, got {}", grid[0])));
    }
    if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Grid("spot grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// `ln ξ0(t_i) - ln E_β(𝔟 t_i^{2H})` on the grid.
pub(crate) fn ln_variance_base(grid: &[f64], p: &ModelParams) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&t| Ok(p.xi0.eval(t)?.ln() - ln_wick_normalizer(t, p)?))
        .collect()
}

/// Primary-stream normals shared by the spot engines: `ΔB` then `B⊥`, one per step.
pub(crate) struct PrimaryDraw {
    pub sqrt_y: f64,
    pub db: Vec<f64>,
    pub dw: Vec<f64>,
}

pub(crate) fn draw_primary(p: &ModelParams, rng: &mut ChaCha8Rng, steps: usize) -> PrimaryDraw {
    let y = sample_m_wright(&p.law(), rng);
    let db = (0..steps).map(|_| StandardNormal.sample(rng)).collect();
    let dw = (0..steps).map(|_| StandardNormal.sample(rng)).collect();
    PrimaryDraw {
        sqrt_y: y.sqrt(),
        db,
        dw,
    }
}

/// Euler recursion for `ln S` given `𝒱` at the left end of each step and the
/// unit-normal increments; records `S` at the requested step indices.
pub(crate) struct EulerStepper<'a> {
    pub grid: &'a [f64],
    pub ln_base: &'a [f64],
    pub ec: f64,
    pub rho: f64,
    pub observe: &'a [usize],
}

impl EulerStepper<'_> {
    /// `volterra[i] = 𝒱_{t_i}`, `db[i]` and `dw[i]` are unit normals of step `i → i+1`.
    pub fn run(&self, sqrt_y: f64, volterra: &[f64], db: &[f64], dw: &[f64], sign: f64) -> Result<Vec<f64>> {
        let rho_bar = (1.0 - self.rho * self.rho).max(0.0).sqrt();
        let mut ln_s = 0.0_f64;
        let mut path = Vec::with_capacity(self.observe.len());
        let mut next = 0;
        for i in 0..self.grid.len() {
            while next < self.observe.len() && self.observe[next] == i {
                path.push(ln_s.exp());
                next += 1;
            }
            if i + 1 == self.grid.len() {
                break;
            }
            let dt = self.grid[i + 1] - self.grid[i];
            let ln_v = self.ln_base[i] + self.ec * sqrt_y * volterra[i];
            let v = ln_v.exp();
            if !v.is_finite() {
                return Err(Error::Overflow(format!(
                    "instantaneous variance at t = {}: ln value {ln_v:.6e}",
                    self.grid[i]
                )));
            }
            let shock = sign * dt.sqrt() * (self.rho * db[i] + rho_bar * dw[i]);
            ln_s += -0.5 * v * dt + v.sqrt() * shock;
        }
        Ok(path)
    }
}

pub(crate) fn check_observe(grid: &[f64], observe: &[usize]) -> Result<()> {
    if observe.is_empty() {
        return Err(Error::Invalid("no observation indices".into()));
    }
    if observe.windows(2).any(|w| w[1] <= w[0]) || *observe.last().unwrap() >= grid.len() {
        return Err(Error::Invalid(format!(
            "observation indices must be increasing and below {}",
            grid.len()
        )));
    }
    Ok(())
}

pub(crate) fn to_samples(
    rows: Vec<Vec<f64>>,
    grid: &[f64],
    observe: &[usize],
    p: &ModelParams,
    mc: &McConfig,
    engine: EngineTag,
) -> Vec<Samples> {
    observe
        .iter()
        .enumerate()
        .map(|(k, &idx)| Samples {
            values: rows.iter().map(|r| r[k]).collect(),
            maturity: grid[idx],
            antithetic: mc.antithetic,
            seed: mc.seed,
            engine,
            martingale: p.martingale_regime(),
            rbergomi_equivalent: p.is_rbergomi(),
        })
        .collect()
}

/// Terminal spot `S_T` (with `S_0 = 1`) on `grid = [0 = t_0 < … < t_n = T]`.
pub fn simulate_spot(p: &ModelParams, grid: &[f64], mc: &McConfig) -> Result<Samples> {
    check_spot_grid(grid)?;
    let mut out = simulate_spot_observed(p, grid, mc, &[grid.len() - 1])?;
    Ok(out.pop().expect("one observation"))
}

/// Spot at each grid index in `observe`, from the same paths.
pub fn simulate_spot_observed(
    p: &ModelParams,
    grid: &[f64],
    mc: &McConfig,
    observe: &[usize],
) -> Result<Vec<Samples>> {
    mc.validate()?;
    p.validate()?;
    check_spot_grid(grid)?;
    check_observe(grid, observe)?;
    let steps = grid.len() - 1;
    let cov = build_cov_matrix(&grid[1..], CovKind::SpotIncrements, p.hurst)?;
    let l = cov.factor()?;
    let ln_base = ln_variance_base(grid, p)?;
    let stepper = EulerStepper {
        grid,
        ln_base: &ln_base,
        ec: p.eta * p.c(),
        rho: p.rho,
        observe,
    };
    let signs: &[f64] = if mc.antithetic { &[1.0, -1.0] } else { &[1.0] };
    let per_draw = par_map_indexed(mc.draws(), mc.workers, |i| {
        let (mut primary, mut residual) = mc.streams(i);
        let draw = draw_primary(p, &mut primary, steps);
        let mut z = vec![0.0; 2 * steps];
        for k in 0..steps {
            z[cov.increment_index(k)] = draw.db[k];
            z[cov.volterra_index(k)] = StandardNormal.sample(&mut residual);
        }
        let mut x = vec![0.0; 2 * steps];
        l.mul_vec(&z, &mut x);
        let mut volterra = vec![0.0; grid.len()];
        for k in 0..steps {
            volterra[k + 1] = x[cov.volterra_index(k)];
        }
        // x[increment_index(k)] = √Δt_k · db[k] exactly, so the stepper uses db.
        let mut out = Vec::with_capacity(signs.len());
        for &sign in signs {
            let v: Vec<f64> = volterra.iter().map(|v| sign * v).collect();
            out.push(stepper.run(draw.sqrt_y, &v, &draw.db, &draw.dw, sign)?);
        }
        Ok(out)
    })?;
    let rows = flatten_pairs(per_draw);
    Ok(to_samples(rows, grid, observe, p, mc, EngineTag::SpotCholesky))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ForwardCurve, Scenario};
    use crate::montecarlo::{GridSpec, Payoff};

    fn params(beta: f64, rho: f64) -> ModelParams {
        ModelParams::new(0.07, beta, 1.23, rho, ForwardCurve::scenario(Scenario::One)).unwrap()
    }

    #[test]
    fn increment_rows_are_diagonal() {
        let grid = GridSpec::new(0.0, 0.5, 12).unwrap().points();
        let cov = build_cov_matrix(&grid[1..], CovKind::SpotIncrements, 0.07).unwrap();
        let l = cov.factor().unwrap();
        for k in 0..12 {
            let r = cov.increment_index(k);
            let dt = grid[k + 1] - grid[k];
            for j in 0..r {
                assert!(l.get(r, j).abs() < 1e-12, "row {r} col {j}: {}", l.get(r, j));
            }
            assert!((l.get(r, r) - dt.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn spot_is_a_martingale() {
        let p = params(0.9, -0.9);
        let grid = GridSpec::new(0.0, 0.5, 60).unwrap().points();
        let s = simulate_spot(&p, &grid, &McConfig::new(20_000, 3)).unwrap();
        let m = s.mean().unwrap();
        assert!((m.estimate - 1.0).abs() < 3.0 * m.stderr, "{m:?}");
    }

    #[test]
    fn zero_vol_of_vol_is_black_scholes() {
        let p = ModelParams::new(0.1, 0.8, 0.0, -0.5, ForwardCurve::flat(0.04).unwrap()).unwrap();
        let grid = GridSpec::new(0.0, 1.0, 20).unwrap().points();
        let s = simulate_spot(&p, &grid, &McConfig::new(40_000, 5).with_antithetic(true)).unwrap();
        let c = s.price(Payoff::Call { strike: 1.0 }).unwrap();
        // σ = 0.2, T = 1: 2Φ(0.1) - 1
        let exact = 2.0 * 0.539_827_837_277_028_9 - 1.0;
        assert!((c.estimate - exact).abs() < 3.0 * c.stderr, "{c:?} vs {exact}");
    }

    #[test]
    fn observed_matches_terminal() {
        let p = params(0.7, -0.5);
        let grid = GridSpec::new(0.0, 0.2, 10).unwrap().points();
        let mc = McConfig::new(100, 8);
        let term = simulate_spot(&p, &grid, &mc).unwrap();
        let obs = simulate_spot_observed(&p, &grid, &mc, &[0, 5, 10]).unwrap();
        assert_eq!(obs.len(), 3);
        assert!(obs[0].values.iter().all(|&v| v == 1.0));
        assert_eq!(obs[2].values, term.values);
        assert_eq!(obs[1].maturity, grid[5]);
    }

    #[test]
    fn rejects_bad_grids() {
        let p = params(0.9, -0.9);
        let mc = McConfig::new(10, 0);
        assert!(simulate_spot(&p, &[0.1, 0.2], &mc).is_err());
        assert!(simulate_spot(&p, &[0.0, 0.2, 0.2], &mc).is_err());
        assert!(simulate_spot_observed(&p, &[0.0, 0.1], &mc, &[2]).is_err());
    }
}
