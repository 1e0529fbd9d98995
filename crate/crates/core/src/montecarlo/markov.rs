//! Markovian approximation of the Volterra process: `𝒱_t ≈ Σ_i w_i X^i_t` with
//! Ornstein-Uhlenbeck factors `dX^i = -x_i X^i dt + dB`.
//!
//! The kernel `t^{H-1/2} = ∫_0^∞ e^{-xt} x^{-H-1/2} dx / Γ(1/2-H)` is discretised by
//! matching the mass and first moment of that measure on geometric intervals.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use super::spot::{check_observe, check_spot_grid, draw_primary, ln_variance_base, to_samples, EulerStepper};
use super::{flatten_pairs, EngineTag, McConfig, Samples};
use crate::error::{domain, Result};
use crate::linalg::{PivotedCholesky, SymMatrix};
use crate::model::ModelParams;
use crate::rng::par_map_indexed;
use crate::specfun::gamma;

/// Quadrature nodes of the kernel measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovNodes {
    pub hurst: f64,
    pub weights: Vec<f64>,
    /// Mean-reversion speeds `x_i ≥ 0`.
    pub speeds: Vec<f64>,
}

impl MarkovNodes {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `Σ_i w_i e^{-x_i t}`
    pub fn kernel(&self, t: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.speeds)
            .map(|(w, x)| w * (-x * t).exp())
            .sum()
    }

    /// Sup-relative kernel error `max |K̂(t)/t^{H-1/2} - 1|` on `[from, to]`,
    /// sampled on a dense geometric grid.
    pub fn kernel_error(&self, from: f64, to: f64) -> Result<f64> {
        if !(from > 0.0 && to > from) {
            return domain(format!("need 0 < from < to, got [{from}, {to}]"));
        }
        let hm = self.hurst - 0.5;
        let n = 4000;
        let ratio = (to / from).ln();
        Ok((0..=n)
            .map(|k| {
                let t = from * (ratio * k as f64 / n as f64).exp();
                (self.kernel(t) / t.powf(hm) - 1.0).abs()
            })
            .fold(0.0, f64::max))
    }

    /// Relative L² kernel error on `[0, horizon]`, in closed form.
    pub fn kernel_l2_error(&self, horizon: f64) -> Result<f64> {
        if !(horizon > 0.0) {
            return domain(format!("horizon must be positive, got {horizon}"));
        }
        let hp = self.hurst + 0.5;
        let t = horizon;
        let mut approx = 0.0;
        let mut cross = 0.0;
        for (wi, xi) in self.weights.iter().zip(&self.speeds) {
            for (wj, xj) in self.weights.iter().zip(&self.speeds) {
                approx += wi * wj * decay_integral(xi + xj, t);
            }
            // ∫_0^T e^{-xt} t^{H-1/2} dt
            cross += wi
                * if *xi == 0.0 {
                    t.powf(hp) / hp
                } else {
                    xi.powf(-hp) * gamma(hp) * gamma_lr(hp, xi * t)
                };
        }
        let exact = t.powf(2.0 * self.hurst) / (2.0 * self.hurst);
        Ok(((approx - 2.0 * cross + exact).max(0.0) / exact).sqrt())
    }
}

/// Nodes for horizon 1 and a finest time step of `1e-3`.
pub fn markovian_nodes(hurst: f64, n: usize) -> Result<MarkovNodes> {
    markovian_nodes_on(hurst, n, 1e-3, 1.0)
}

/// `n` nodes resolving the kernel between the time step `dt` and the horizon.
///
/// Interval edges are `[0, geomspace(x_lo, x_hi, n)]` with
/// `x_lo = 1.5 / (horizon · n^0.7)` and `x_hi = n^0.55 / dt`; on each interval
/// the weight is the measure's mass and the speed its mean.
pub fn markovian_nodes_on(hurst: f64, n: usize, dt: f64, horizon: f64) -> Result<MarkovNodes> {
    if !(hurst > 0.0 && hurst <= 0.5) {
        return domain(format!("the Markovian engine needs H in (0, 1/2], got {hurst}"));
    }
    if n < 1 {
        return domain("at least one node is needed");
    }
    if !(dt > 0.0 && horizon >= dt) {
        return domain(format!("need 0 < dt ≤ horizon, got dt = {dt}, horizon = {horizon}"));
    }
    let nf = n as f64;
    let x_lo = 1.5 / (horizon * nf.powf(0.7));
    let x_hi = (nf.powf(0.55) / dt).max(x_lo * 2.0);
    markovian_nodes_between(hurst, n, x_lo, x_hi)
}

/// Nodes used by [`simulate_spot_markovian`]: the partition range is chosen to
/// keep the L² kernel error on the whole of `[0, horizon]` small, which is what
/// controls the variance of the simulated Volterra process. The upper edge grows
/// like `10^{3.3√n}`, far beyond any time step; the exact per-step update makes
/// such speeds harmless.
pub fn simulation_nodes(hurst: f64, n: usize, horizon: f64) -> Result<MarkovNodes> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return domain(format!("horizon must be positive, got {horizon}"));
    }
    let nf = n.max(1) as f64;
    let x_lo = 13.0 / (horizon * nf.powf(0.85));
    let x_hi = 10f64.powf(3.3 * nf.sqrt() - 0.6).max(100.0 * x_lo) / horizon;
    markovian_nodes_between(hurst, n, x_lo, x_hi)
}

/// `n` nodes from the partition `[0, geomspace(x_lo, x_hi, n)]` of the speed axis.
pub fn markovian_nodes_between(hurst: f64, n: usize, x_lo: f64, x_hi: f64) -> Result<MarkovNodes> {
    if !(hurst > 0.0 && hurst <= 0.5) {
        return domain(format!("the Markovian engine needs H in (0, 1/2], got {hurst}"));
    }
    if n < 1 {
        return domain("at least one node is needed");
    }
    if !(x_lo > 0.0 && x_hi > x_lo && x_hi.is_finite()) {
        return domain(format!("need 0 < x_lo < x_hi, got {x_lo}, {x_hi}"));
    }
    if hurst == 0.5 {
        return Ok(MarkovNodes {
            hurst,
            weights: vec![1.0],
            speeds: vec![0.0],
        });
    }
    let nf = n as f64;
    let mut edges = vec![0.0];
    if n == 1 {
        edges.push(x_hi);
    } else {
        let r = (x_hi / x_lo).ln() / (nf - 1.0);
        edges.extend((0..n).map(|k| x_lo * (r * k as f64).exp()));
    }
    let a = 0.5 - hurst;
    let g = gamma(a);
    let mut weights = Vec::with_capacity(n);
    let mut speeds = Vec::with_capacity(n);
    for e in edges.windows(2) {
        let w = (e[1].powf(a) - e[0].powf(a)) / (a * g);
        let m1 = (e[1].powf(a + 1.0) - e[0].powf(a + 1.0)) / ((a + 1.0) * g);
        weights.push(w);
        speeds.push(m1 / w);
    }
    Ok(MarkovNodes {
        hurst,
        weights,
        speeds,
    })
}

/// `(1 - e^{-xΔ}) / x`, equal to `Δ` at `x = 0`.
fn decay_integral(x: f64, dt: f64) -> f64 {
    if x == 0.0 {
        dt
    } else {
        -(-x * dt).exp_m1() / x
    }
}

/// Factor of the covariance of `(ΔB, ε_1, …, ε_N)` over one step, where
/// `ε_i = ∫ e^{-x_i(t+Δ-s)} dB_s`. Nearby speeds make the matrix numerically
/// singular, hence the pivoted factorisation; `ΔB` is pivoted first so that it
/// is driven by the first normal alone.
fn step_factor(speeds: &[f64], dt: f64) -> Result<PivotedCholesky> {
    let n = speeds.len() + 1;
    let a = SymMatrix::from_fn(n, |i, j| match (i, j) {
        (0, 0) => dt,
        (i, 0) => decay_integral(speeds[i - 1], dt),
        (i, j) => decay_integral(speeds[i - 1] + speeds[j - 1], dt),
    });
    PivotedCholesky::factor(&a, 1e-15, 1)
}

/// Spot engine on the Markovian approximation with `n_nodes` factors built by
/// [`simulation_nodes`] for the grid's horizon.
pub fn simulate_spot_markovian(p: &ModelParams, grid: &[f64], mc: &McConfig, n_nodes: usize) -> Result<Samples> {
    check_spot_grid(grid)?;
    let observe = [grid.len() - 1];
    let mut out = simulate_markovian_observed(p, grid, mc, n_nodes, &observe)?;
    Ok(out.pop().expect("one observation"))
}

pub(crate) fn simulate_markovian_observed(
    p: &ModelParams,
    grid: &[f64],
    mc: &McConfig,
    n_nodes: usize,
    observe: &[usize],
) -> Result<Vec<Samples>> {
    check_spot_grid(grid)?;
    let nodes = simulation_nodes(p.hurst, n_nodes, grid[grid.len() - 1])?;
    simulate_with_nodes(p, grid, mc, &nodes, observe)
}

/// Spot engine on caller-supplied nodes.
pub fn simulate_spot_markovian_with(p: &ModelParams, grid: &[f64], mc: &McConfig, nodes: &MarkovNodes) -> Result<Samples> {
    check_spot_grid(grid)?;
    let mut out = simulate_with_nodes(p, grid, mc, nodes, &[grid.len() - 1])?;
    Ok(out.pop().expect("one observation"))
}

fn simulate_with_nodes(
    p: &ModelParams,
    grid: &[f64],
    mc: &McConfig,
    nodes: &MarkovNodes,
    observe: &[usize],
) -> Result<Vec<Samples>> {
    mc.validate()?;
    p.validate()?;
    check_spot_grid(grid)?;
    check_observe(grid, observe)?;
    if nodes.hurst != p.hurst {
        return domain(format!("nodes built for H = {}, model has H = {}", nodes.hurst, p.hurst));
    }
    let steps = grid.len() - 1;
    let m = nodes.len();

    let mut factors: Vec<(f64, PivotedCholesky)> = Vec::new();
    let mut step_idx = Vec::with_capacity(steps);
    for w in grid.windows(2) {
        let dt = w[1] - w[0];
        let hit = factors.iter().position(|(d, _)| (d - dt).abs() <= 1e-13 * dt);
        let k = match hit {
            Some(k) => k,
            None => {
                factors.push((dt, step_factor(&nodes.speeds, dt)?));
                factors.len() - 1
            }
        };
        step_idx.push(k);
    }
    let decay: Vec<Vec<f64>> = factors
        .iter()
        .map(|(dt, _)| nodes.speeds.iter().map(|x| (-x * dt).exp()).collect())
        .collect();

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
        let mut volterra = vec![0.0; grid.len()];
        let mut state = vec![0.0; m];
        let mut z = vec![0.0; m + 1];
        let mut eps = vec![0.0; m + 1];
        for k in 0..steps {
            let (dt, l) = &factors[step_idx[k]];
            z[0] = draw.db[k];
            for zj in z.iter_mut().skip(1) {
                *zj = StandardNormal.sample(&mut residual);
            }
            l.mul_vec(&z, &mut eps);
            debug_assert!((eps[0] - dt.sqrt() * draw.db[k]).abs() < 1e-12);
            let d = &decay[step_idx[k]];
            let mut v = 0.0;
            for j in 0..m {
                state[j] = d[j] * state[j] + eps[j + 1];
                v += nodes.weights[j] * state[j];
            }
            volterra[k + 1] = v;
        }
        let mut out = Vec::with_capacity(signs.len());
        for &sign in signs {
            let v: Vec<f64> = volterra.iter().map(|v| sign * v).collect();
            out.push(stepper.run(draw.sqrt_y, &v, &draw.db, &draw.dw, sign)?);
        }
        Ok(out)
    })?;
    let rows = flatten_pairs(per_draw);
    Ok(to_samples(rows, grid, observe, p, mc, EngineTag::SpotMarkovian { nodes: m }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ForwardCurve, Scenario};
    use crate::montecarlo::{simulate_spot, GridSpec, Payoff};


    #[test]
    fn brownian_case_is_one_node() {
        let n = markovian_nodes(0.5, 10).unwrap();
        assert_eq!(n.weights, vec![1.0]);
        assert_eq!(n.speeds, vec![0.0]);
        assert!(markovian_nodes(0.6, 10).is_err());
    }

    #[test]
    fn l2_error_decreases_with_nodes() {
        let e: Vec<f64> = [4, 8, 16, 32]
            .iter()
            .map(|&n| simulation_nodes(0.1, n, 1.0).unwrap().kernel_l2_error(1.0).unwrap())
            .collect();
        assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
        let one = markovian_nodes(0.5, 3).unwrap();
        assert!(one.kernel_l2_error(2.0).unwrap() < 1e-7);
    }

    #[test]
    fn step_covariance_is_psd() {
        let n = markovian_nodes_on(0.07, 20, 1.0 / 312.0, 1.0).unwrap();
        let l = step_factor(&n.speeds, 1.0 / 312.0).unwrap();
        assert!((l.get(0, 0) - (1.0f64 / 312.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn spec_kernel_accuracy() {
        let e20 = markovian_nodes(0.07, 20).unwrap().kernel_error(1e-3, 1.0).unwrap();
        let e40 = markovian_nodes(0.07, 40).unwrap().kernel_error(1e-3, 1.0).unwrap();
        assert!(e20 < 1e-2, "{e20}");
        assert!(e40 < e20);
    }

    #[test]
    fn brownian_engine_matches_cholesky_exactly() {
        // H = 1/2: one node with speed 0 reproduces 𝒱 = B exactly, and both
        // engines see the same increments. The Cholesky side needs a diagonal
        // jitter there (𝒱 and the increments are collinear), hence the tolerance.
        let p = ModelParams::new(0.5, 0.9, 0.8, -0.6, ForwardCurve::flat(0.04).unwrap()).unwrap();
        let grid = GridSpec::new(0.0, 0.25, 20).unwrap().points();
        let mc = McConfig::new(200, 4);
        let a = simulate_spot(&p, &grid, &mc).unwrap();
        let b = simulate_spot_markovian(&p, &grid, &mc, 1).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-5 * x, "{x} vs {y}");
        }
    }

    #[test]
    fn gap_to_cholesky_shrinks_with_nodes() {
        let p = ModelParams::new(0.1, 0.9, 1.0, -0.7, ForwardCurve::scenario(Scenario::One)).unwrap();
        let grid = GridSpec::new(0.0, 0.5, 80).unwrap().points();
        let mc = McConfig::new(4_000, 11);
        let k = Payoff::Call { strike: 1.0 };
        let exact = simulate_spot(&p, &grid, &mc).unwrap().price(k).unwrap().estimate;
        let gaps: Vec<f64> = [5, 20, 60]
            .iter()
            .map(|&n| {
                let m = simulate_spot_markovian(&p, &grid, &mc, n).unwrap().price(k).unwrap();
                (m.estimate - exact).abs()
            })
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    }
}
