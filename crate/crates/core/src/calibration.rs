//! Two-stage calibration: `(H, β, η)` from the ATM VIX level, skew and
//! curvature limits, then `ρ` from the ATM SPX skew. Also a grid search of
//! Monte Carlo smiles against a market smile.

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    spx_skew_scaled_limit, vix_atm_curvature_scaled_limit, vix_atm_level_limit, vix_atm_skew_limit,
    AsymptoticInputs,
};
use crate::error::{domain, Error, Result};
use crate::pricing::SmilePoint;
use crate::rng::par_map_indexed;

/// Market ATM quantities at one expiry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketTargets {
    /// ATM VIX implied vol.
    pub level: f64,
    /// ATM VIX skew in log-strike.
    pub skew: f64,
    /// ATM VIX curvature in log-strike.
    pub curvature: f64,
    /// ATM SPX skew in log-strike.
    pub spx_skew: f64,
    pub t_mkt: f64,
    /// Spot VIX; sets `ξ0 = vix_spot²`.
    pub vix_spot: f64,
}

impl MarketTargets {
    pub fn validate(&self) -> Result<()> {
        let all = [self.level, self.skew, self.curvature, self.spx_skew, self.t_mkt, self.vix_spot];
        if all.iter().any(|x| !x.is_finite()) {
            return domain("market targets must be finite");
        }
        if !(self.t_mkt > 0.0) {
            return domain(format!("market expiry must be positive, got {}", self.t_mkt));
        }
        if !(self.level > 0.0) {
            return domain(format!("ATM implied vol must be positive, got {}", self.level));
        }
        if !(self.vix_spot > 0.0) {
            return domain(format!("spot VIX must be positive, got {}", self.vix_spot));
        }
        Ok(())
    }

    /// Targets produced by the short-time limits themselves at `(H, β, η, ρ)`.
    pub fn from_limits(
        params: VixParams,
        rho: f64,
        t_mkt: f64,
        vix_spot: f64,
        delta: f64,
    ) -> Result<Self> {
        let a = params.inputs(vix_spot, delta, t_mkt)?;
        let h = params.hurst;
        Ok(Self {
            level: vix_atm_level_limit(&a)?,
            skew: vix_atm_skew_limit(&a)?,
            curvature: vix_atm_curvature_scaled_limit(&a)? * t_mkt.powf(3.0 * h - 0.5),
            spx_skew: spx_skew_scaled_limit(&a, rho)? * t_mkt.powf(spx_skew_exponent(h)),
            t_mkt,
            vix_spot,
        })
    }
}

/// Power of `T` in the short-time SPX skew, `T^{H-1/2}`.
pub fn spx_skew_exponent(hurst: f64) -> f64 {
    hurst - 0.5
}

/// Point of the VIX stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VixParams {
    pub hurst: f64,
    pub beta: f64,
    pub eta: f64,
}

impl VixParams {
    pub fn new(hurst: f64, beta: f64, eta: f64) -> Self {
        Self { hurst, beta, eta }
    }

    fn inputs(&self, vix_spot: f64, delta: f64, t_mkt: f64) -> Result<AsymptoticInputs> {
        AsymptoticInputs::new(vix_spot * vix_spot, self.hurst, self.beta, self.eta, delta, t_mkt)
    }

    fn as_vec(&self) -> Vec<f64> {
        vec![self.hurst, self.beta, self.eta]
    }

    fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

/// Closed interval with a grid resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        Self { lo, hi, points }
    }

    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => vec![],
            1 => vec![0.5 * (self.lo + self.hi)],
            n => (0..n)
                .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }

    fn spacing(&self) -> f64 {
        if self.points > 1 {
            (self.hi - self.lo) / (self.points - 1) as f64
        } else {
            0.5 * (self.hi - self.lo)
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) || self.points == 0 {
            return Err(Error::Invalid(format!(
                "bad {name} axis [{}, {}] with {} points",
                self.lo, self.hi, self.points
            )));
        }
        Ok(())
    }
}

/// Search settings for the VIX stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpec {
    pub hurst: Axis,
    pub beta: Axis,
    pub eta: Axis,
    /// Best grid points handed to the simplex polish.
    pub starts: usize,
    /// Standard deviation of simplex costs at which the polish stops.
    pub tolerance: f64,
    pub max_iters: u64,
    /// Weights of the level, skew and curvature terms.
    pub weights: [f64; 3],
    /// VIX window in years.
    pub delta: f64,
    pub workers: usize,
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self {
            hurst: Axis::new(0.01, 0.16, 20),
            beta: Axis::new(0.05, 1.0, 20),
            eta: Axis::new(0.05, 4.0, 20),
            starts: 5,
            tolerance: 1e-10,
            max_iters: 2000,
            weights: [1.0; 3],
            delta: 1.0 / 12.0,
            workers: 1,
        }
    }
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        self.hurst.validate("H")?;
        self.beta.validate("β")?;
        self.eta.validate("η")?;
        if !(self.hurst.lo > 0.0 && self.hurst.hi < 1.0 / 6.0) {
            return Err(Error::Invalid(format!(
                "H search range must lie inside (0, 1/6), got [{}, {}]",
                self.hurst.lo, self.hurst.hi
            )));
        }
        if !(self.beta.lo > 0.0 && self.beta.hi <= 1.0) {
            return Err(Error::Invalid("β search range must lie inside (0, 1]".into()));
        }
        if !(self.eta.lo > 0.0) {
            return Err(Error::Invalid("η search range must be positive".into()));
        }
        if self.starts == 0 || !(self.tolerance >= 0.0) || self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Invalid("need starts ≥ 1, tolerance ≥ 0 and weights ≥ 0".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Invalid("Δ must be positive".into()));
        }
        Ok(())
    }

    fn lower(&self) -> [f64; 3] {
        [self.hurst.lo, self.beta.lo, self.eta.lo]
    }

    fn upper(&self) -> [f64; 3] {
        [self.hurst.hi, self.beta.hi, self.eta.hi]
    }
}

/// Level, skew and curvature residuals, model minus market, with the
/// market curvature scaled by `T_mkt^{3H-1/2}` at the candidate `H`.
pub fn vix_residuals(params: VixParams, targets: &MarketTargets, delta: f64) -> Result<[f64; 3]> {
    let a = params.inputs(targets.vix_spot, delta, targets.t_mkt)?;
    let scale = targets.t_mkt.powf(3.0 * params.hurst - 0.5);
    Ok([
        vix_atm_level_limit(&a)? - targets.level,
        vix_atm_skew_limit(&a)? - targets.skew,
        vix_atm_curvature_scaled_limit(&a)? - targets.curvature / scale,
    ])
}

/// Weighted sum of squared residuals; `+∞` outside the parameter domain.
pub fn vix_objective(params: VixParams, targets: &MarketTargets, weights: [f64; 3], delta: f64) -> f64 {
    match vix_residuals(params, targets, delta) {
        Ok(r) => r.iter().zip(weights).map(|(r, w)| w * r * r).sum(),
        Err(_) => f64::INFINITY,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VixCalibration {
    pub params: VixParams,
    pub objective: f64,
    pub residuals: [f64; 3],
    /// Objective evaluations, grid included.
    pub evaluations: u64,
    /// Whether the best polish met its tolerance.
    pub converged: bool,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy)]
struct BoxedObjective<'a> {
    targets: &'a MarketTargets,
    spec: &'a SearchSpec,
}

impl BoxedObjective<'_> {
    /// Clamp into the box and add the distance moved, so the simplex stays inside.
    fn project(&self, p: &[f64]) -> (Vec<f64>, f64) {
        let (lo, hi) = (self.spec.lower(), self.spec.upper());
        let mut dist = 0.0;
        let q = p
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = x.clamp(lo[i], hi[i]);
                dist += (x - c).abs();
                c
            })
            .collect();
        (q, dist)
    }
}

impl CostFunction for BoxedObjective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        if p.iter().any(|x| x.is_nan()) {
            return Ok(f64::INFINITY);
        }
        let (q, dist) = self.project(p);
        let f = vix_objective(VixParams::from_slice(&q), self.targets, self.spec.weights, self.spec.delta);
        Ok(f + dist)
    }
}

/// Coarse grid over `(H, β, η)` followed by a Nelder-Mead polish from the
/// best `spec.starts` grid points. Deterministic for a given spec.
pub fn calibrate_vix(targets: &MarketTargets, spec: &SearchSpec) -> Result<VixCalibration> {
    targets.validate()?;
    spec.validate()?;
    let (hs, bs, es) = (spec.hurst.values(), spec.beta.values(), spec.eta.values());
    let n = hs.len() * bs.len() * es.len();
    let point = |i: usize| {
        let (ih, rest) = (i / (bs.len() * es.len()), i % (bs.len() * es.len()));
        VixParams::new(hs[ih], bs[rest / es.len()], es[rest % es.len()])
    };
    let costs = par_map_indexed(n, spec.workers, |i| {
        Ok(vix_objective(point(i), targets, spec.weights, spec.delta))
    })?;
    let mut order: Vec<usize> = (0..n).filter(|&i| costs[i].is_finite()).collect();
    if order.is_empty() {
        return Err(Error::Invalid("the objective is infinite on the whole grid".into()));
    }
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));

    let mut evaluations = n as u64;
    let mut best = (point(order[0]), costs[order[0]], false);
    let mut warnings = Vec::new();
    let steps = [spec.hurst.spacing(), spec.beta.spacing(), spec.eta.spacing()];
    let objective = BoxedObjective { targets, spec };
    for &start in order.iter().take(spec.starts) {
        let x0 = point(start).as_vec();
        let (lo, hi) = (spec.lower(), spec.upper());
        let mut simplex = vec![x0.clone()];
        for k in 0..3 {
            let mut v = x0.clone();
            // step inwards so the initial simplex stays in the box
            let step = 0.5 * steps[k];
            v[k] = if v[k] + step <= hi[k] { v[k] + step } else { v[k] - step };
            v[k] = v[k].clamp(lo[k], hi[k]);
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(spec.tolerance)
            .map_err(|e| Error::Invalid(e.to_string()))?;
        let res = Executor::new(objective, solver)
            .configure(|s| s.max_iters(spec.max_iters))
            .run();
        let state = match res {
            Ok(r) => r.state,
            Err(e) => {
                warnings.push(format!("polish from grid point {start} failed: {e}"));
                continue;
            }
        };
        evaluations += state.get_func_counts().values().sum::<u64>();
        let converged = matches!(
            state.get_termination_status(),
            TerminationStatus::Terminated(TerminationReason::SolverConverged)
        );
        if let Some(p) = state.get_best_param() {
            let (q, _) = objective.project(p);
            let params = VixParams::from_slice(&q);
            let cost = vix_objective(params, targets, spec.weights, spec.delta);
            if cost < best.1 || (cost == best.1 && converged && !best.2) {
                best = (params, cost, converged);
            }
        }
    }
    if !best.2 {
        warnings.push("simplex polish did not reach its tolerance; returning the best point found".into());
    }
    let residuals = vix_residuals(best.0, targets, spec.delta)?;
    Ok(VixCalibration {
        params: best.0,
        objective: best.1,
        residuals,
        evaluations,
        converged: best.2,
        warnings,
    })
}

/// Admissible correlations. The default keeps `ρ ≤ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoBounds {
    pub lo: f64,
    pub hi: f64,
}

impl Default for RhoBounds {
    fn default() -> Self {
        Self { lo: -1.0, hi: 0.0 }
    }
}

impl RhoBounds {
    pub fn allow_positive() -> Self {
        Self { lo: -1.0, hi: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoCalibration {
    pub rho: f64,
    /// Model minus target in the scaled SPX skew.
    pub residual: f64,
    /// Whether the unconstrained solution fell outside the bounds.
    pub clamped: bool,
}

/// Least-squares `ρ` matching the SPX skew limit to `spx_skew / T_mkt^{H-1/2}`.
/// The limit is linear in `ρ`, so this is a clamped division.
pub fn calibrate_rho(
    params: VixParams,
    targets: &MarketTargets,
    delta: f64,
    bounds: RhoBounds,
) -> Result<RhoCalibration> {
    targets.validate()?;
    if !(-1.0 <= bounds.lo && bounds.lo <= bounds.hi && bounds.hi <= 1.0) {
        return Err(Error::Invalid(format!("bad ρ bounds [{}, {}]", bounds.lo, bounds.hi)));
    }
    let a = params.inputs(targets.vix_spot, delta, targets.t_mkt)?;
    let slope = spx_skew_scaled_limit(&a, 1.0)?;
    let target = targets.spx_skew / targets.t_mkt.powf(spx_skew_exponent(params.hurst));
    let free = if slope != 0.0 { target / slope } else { 0.0 };
    let rho = free.clamp(bounds.lo, bounds.hi);
    Ok(RhoCalibration {
        rho,
        residual: rho * slope - target,
        clamped: rho != free,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub hurst: f64,
    pub beta: f64,
    pub eta: f64,
    pub rho: f64,
    pub objective: f64,
    pub vix_residuals: [f64; 3],
    pub rho_residual: f64,
    pub rho_clamped: bool,
    pub evaluations: u64,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// VIX stage, then `ρ` with `(H, β, η)` frozen.
pub fn calibrate(targets: &MarketTargets, spec: &SearchSpec, bounds: RhoBounds) -> Result<CalibrationResult> {
    let vix = calibrate_vix(targets, spec)?;
    let rho = calibrate_rho(vix.params, targets, spec.delta, bounds)?;
    Ok(CalibrationResult {
        hurst: vix.params.hurst,
        beta: vix.params.beta,
        eta: vix.params.eta,
        rho: rho.rho,
        objective: vix.objective,
        vix_residuals: vix.residuals,
        rho_residual: rho.residual,
        rho_clamped: rho.clamped,
        evaluations: vix.evaluations,
        converged: vix.converged,
        warnings: vix.warnings,
    })
}

/// Distance between a model smile and a market smile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmileMetric {
    /// Root mean square implied vol error.
    #[default]
    Rmse,
    /// Largest absolute implied vol error.
    MaxAbs,
}

impl SmileMetric {
    fn eval(&self, errors: &[f64]) -> f64 {
        match self {
            Self::Rmse => (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt(),
            Self::MaxAbs => errors.iter().fold(0.0, |m, e| m.max(e.abs())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint<P> {
    pub params: P,
    /// `None` when pricing failed or no strike had an implied vol.
    pub error: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch<P> {
    pub points: Vec<GridPoint<P>>,
    /// Index into `points` of the smallest error; ties go to the earliest point.
    pub best: Option<usize>,
}

impl<P> GridSearch<P> {
    pub fn best_point(&self) -> Option<&GridPoint<P>> {
        self.best.map(|i| &self.points[i])
    }
}

/// Price the model smile at every grid point and compare implied vols with
/// `market` (`(strike, vol)` pairs) at common strikes.
///
/// `pricer` must be deterministic (fixed seed). Failures are recorded per
/// point and do not stop the search.
pub fn grid_search_smile<P, F>(
    grid: &[P],
    market: &[(f64, f64)],
    metric: SmileMetric,
    workers: usize,
    pricer: F,
) -> Result<GridSearch<P>>
where
    P: Clone + Send + Sync,
    F: Fn(&P, &[f64]) -> Result<Vec<SmilePoint>> + Sync + Send,
{
    if grid.is_empty() {
        return Err(Error::Invalid("empty parameter grid".into()));
    }
    if market.is_empty() {
        return Err(Error::Invalid("empty market smile".into()));
    }
    let strikes: Vec<f64> = market.iter().map(|m| m.0).collect();
    let points = par_map_indexed(grid.len(), workers, |i| {
        let params = grid[i].clone();
        let point = match pricer(&params, &strikes) {
            Ok(smile) => {
                let errors: Vec<f64> = market
                    .iter()
                    .filter_map(|&(k, vol)| {
                        let model = smile.iter().find(|p| p.strike == k)?.implied_vol?;
                        Some(model - vol)
                    })
                    .collect();
                if errors.is_empty() {
                    GridPoint {
                        params,
                        error: None,
                        failure: Some("no strike with both implied vols".into()),
                    }
                } else {
                    GridPoint {
                        params,
                        error: Some(metric.eval(&errors)),
                        failure: None,
                    }
                }
            }
            Err(e) => GridPoint {
                params,
                error: None,
                failure: Some(e.to_string()),
            },
        };
        Ok(point)
    })?;
    let best = points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.error.map(|e| (i, e)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i);
    Ok(GridSearch { points, best })
}
