use std::path::Path;

use anyhow::{anyhow, bail, Context};
use gbergomi_core::asymptotics::{
    spx_atm_level_limit, spx_skew_scaled_limit, vix_limits, AsymptoticInputs,
};
use gbergomi_core::calibration::{calibrate, vix_residuals, CalibrationResult, MarketTargets, RhoBounds, VixParams};
use gbergomi_core::model::{
    ssr_short_time_limit, vix_futures_lower_bound, vix_futures_upper_bound, vix_grid, ForwardCurve,
};
use gbergomi_core::montecarlo::{
    simulate_spot, simulate_spot_markovian, simulate_vix_with, GridSpec, McResult, Samples, VixEngine,
    VixOptions,
};
use gbergomi_core::pricing::{
    atm_metrics, fit_arctan_smile, implied_vol, smile_from_samples, AtmMetrics, AtmReference, SmileCoordinate,
    SmileFit,
};
use gbergomi_core::specfun::{m_wright_density, mittag_leffler, GreyLaw};
use serde::{Deserialize, Serialize};

use crate::config::{scenario, RunConfig, SpotEngine, SweepAxis, Target};
use crate::output::Outputs;
use crate::{Classify, Outcome};

fn samples(cfg: &RunConfig, target: Target, maturity: f64) -> Outcome<Samples> {
    let p = cfg.model.params().input()?;
    let mc = cfg.mc.config();
    match target {
        Target::Vix => {
            if cfg.mc.engine == SpotEngine::Markovian {
                return Err(anyhow!("the Markovian engine simulates the spot only; use engine = \"cholesky\" for VIX"))
                    .input();
            }
            let conv = cfg.vix.convention().input()?;
            let grid = vix_grid(maturity, cfg.vix.points, &conv);
            let opts = VixOptions {
                engine: VixEngine::Truncated,
                mixing: cfg.vix.mixing.into(),
                convention: conv,
            };
            simulate_vix_with(&p, maturity, &grid, &mc, &opts).numerical()
        }
        Target::Spot => {
            let grid = GridSpec::new(0.0, maturity, cfg.mc.spot_steps(maturity)).input()?.points();
            match cfg.mc.engine {
                SpotEngine::Cholesky => simulate_spot(&p, &grid, &mc),
                SpotEngine::Markovian => simulate_spot_markovian(&p, &grid, &mc, cfg.mc.nodes),
            }
            .numerical()
        }
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    target: Target,
    maturity: f64,
    curve: String,
    mean: McResult,
}

#[derive(Serialize)]
struct SampleRow {
    path: usize,
    value: f64,
}

pub fn simulate(cfg: &RunConfig) -> Outcome<()> {
    let task = &cfg.simulate;
    let s = samples(cfg, task.target, task.maturity)?;
    let mean = s.mean().numerical()?;
    let mut out = Outputs::new(cfg, "simulate").input()?;
    out.json(
        "simulate",
        &SimulateSummary {
            target: task.target,
            maturity: task.maturity,
            curve: cfg.model.curve().input()?.label().to_string(),
            mean,
        },
    )
    .input()?;
    if task.write_samples {
        let rows: Vec<SampleRow> = s.values.iter().enumerate().map(|(path, &value)| SampleRow { path, value }).collect();
        out.csv("samples", &rows).input()?;
    }
    out.report();
    Ok(())
}

#[derive(Serialize)]
struct SmileRow {
    strike: f64,
    relative_strike: f64,
    log_moneyness: f64,
    price: f64,
    price_stderr: f64,
    implied_vol: Option<f64>,
    vol_stderr: Option<f64>,
    fitted_vol: Option<f64>,
}

#[derive(Serialize)]
struct PriceSummary {
    target: Target,
    maturity: f64,
    /// Mean of the simulated underlying, used as the forward.
    forward: McResult,
    atm_reference: AtmReference,
    atm_level: f64,
    fit: Option<SmileFit>,
    atm: Option<AtmMetrics>,
    warnings: Vec<String>,
}

pub fn price(cfg: &RunConfig) -> Outcome<()> {
    let task = &cfg.price;
    let s = samples(cfg, task.target, task.maturity)?;
    let forward = s.mean().numerical()?;
    let atm_level = match (task.target, task.atm_reference) {
        (_, AtmReference::Futures) | (Target::Spot, AtmReference::Spot) => forward.estimate,
        (Target::Vix, AtmReference::Spot) => cfg.model.curve().input()?.eval(0.0).numerical()?.sqrt(),
    };
    let strikes: Vec<f64> = task.relative_strikes.iter().map(|k| k * atm_level).collect();
    let smile = smile_from_samples(&s, forward.estimate, &strikes).numerical()?;
    let mut warnings = Vec::new();
    if task.target == Target::Vix && task.atm_reference == AtmReference::Spot {
        warnings.push("ATM taken at spot VIX; implied vols still use the futures as forward".into());
    }
    let (fit, atm) = if task.fit {
        let pts: Vec<(f64, f64)> = smile.iter().filter_map(|p| Some((p.strike, p.implied_vol?))).collect();
        match fit_arctan_smile(&pts, SmileCoordinate::Strike) {
            Ok(fit) => {
                if !fit.positive_on_range {
                    warnings.push("fitted smile is not positive on the strike range".into());
                }
                (Some(fit), Some(atm_metrics(&fit, atm_level).numerical()?))
            }
            Err(e) => {
                warnings.push(format!("no arctan fit: {e}"));
                (None, None)
            }
        }
    } else {
        (None, None)
    };
    let rows: Vec<SmileRow> = smile
        .iter()
        .zip(&task.relative_strikes)
        .map(|(p, &rel)| SmileRow {
            strike: p.strike,
            relative_strike: rel,
            log_moneyness: p.log_moneyness,
            price: p.price,
            price_stderr: p.price_stderr,
            implied_vol: p.implied_vol,
            vol_stderr: p.vol_stderr,
            fitted_vol: fit.map(|f| f.eval(p.strike)),
        })
        .collect();
    let mut out = Outputs::new(cfg, "price").input()?;
    out.csv("smile", &rows).input()?;
    out.json(
        "price",
        &PriceSummary {
            target: task.target,
            maturity: task.maturity,
            forward,
            atm_reference: task.atm_reference,
            atm_level,
            fit,
            atm,
            warnings,
        },
    )
    .input()?;
    out.report();
    Ok(())
}

#[derive(Serialize)]
struct BoundsRow {
    scenario: u8,
    maturity: f64,
    lower: f64,
    lower_stderr: f64,
    upper: f64,
    mc_estimate: f64,
    mc_stderr: f64,
    /// Lower ≤ MC ≤ upper with three standard errors of slack.
    inside: bool,
}

pub fn bounds(cfg: &RunConfig) -> Outcome<()> {
    let conv = cfg.vix.convention().input()?;
    let mc = cfg.mc.config();
    let opts = VixOptions {
        engine: VixEngine::Truncated,
        mixing: cfg.vix.mixing.into(),
        convention: conv,
    };
    let mut rows = Vec::new();
    for &s in &cfg.bounds.scenarios {
        let p = cfg.model.params_with(ForwardCurve::scenario(scenario(s).input()?)).input()?;
        for &t in &cfg.bounds.maturities {
            let lower = vix_futures_lower_bound(t, &p, &conv, &mc).numerical()?;
            let upper = vix_futures_upper_bound(t, &p, &conv).numerical()?;
            let grid = vix_grid(t, cfg.vix.points, &conv);
            let f = simulate_vix_with(&p, t, &grid, &mc, &opts).numerical()?.mean().numerical()?;
            let slack = 3.0 * f.stderr;
            rows.push(BoundsRow {
                scenario: s,
                maturity: t,
                lower: lower.value,
                lower_stderr: lower.stderr,
                upper,
                mc_estimate: f.estimate,
                mc_stderr: f.stderr,
                inside: lower.value <= f.estimate + slack && f.estimate - slack <= upper,
            });
        }
    }
    let mut out = Outputs::new(cfg, "bounds").input()?;
    out.csv("bounds", &rows).input()?;
    out.report();
    Ok(())
}

#[derive(Serialize)]
struct AsymptoticsRow {
    hurst: f64,
    beta: f64,
    eta: f64,
    rho: f64,
    vix_level: f64,
    vix_skew: f64,
    /// `lim T^{1/2-3H} C_T`, empty for `H ≥ 1/6`.
    vix_curvature_scaled: Option<f64>,
    spx_level: f64,
    spx_skew_coefficient: f64,
    ssr: f64,
}

pub fn asymptotics(cfg: &RunConfig) -> Outcome<()> {
    let task = &cfg.asymptotics;
    let p = cfg.model.params().input()?;
    let base = AsymptoticInputs::from_model(&p, &cfg.vix.convention().input()?, task.t_mkt).input()?;
    let values: Vec<f64> = if task.points == 1 {
        vec![task.from]
    } else {
        (0..task.points)
            .map(|i| task.from + (task.to - task.from) * i as f64 / (task.points - 1) as f64)
            .collect()
    };
    let inputs = values
        .iter()
        .map(|&v| {
            let mut a = base;
            match task.sweep {
                SweepAxis::Beta => a.beta = v,
                SweepAxis::Hurst => a.hurst = v,
                SweepAxis::Eta => a.eta = v,
            }
            a.validate().map(|_| a)
        })
        .collect::<Result<Vec<_>, _>>()
        .input()?;
    let mut rows = Vec::with_capacity(inputs.len());
    for a in inputs {
        let lim = vix_limits(&a).numerical()?;
        rows.push(AsymptoticsRow {
            hurst: a.hurst,
            beta: a.beta,
            eta: a.eta,
            rho: p.rho,
            vix_level: lim.level,
            vix_skew: lim.skew,
            vix_curvature_scaled: lim.curvature_scaled,
            spx_level: spx_atm_level_limit(&a).numerical()?,
            spx_skew_coefficient: spx_skew_scaled_limit(&a, p.rho).numerical()?,
            ssr: ssr_short_time_limit(a.hurst).numerical()?,
        });
    }
    let mut out = Outputs::new(cfg, "asymptotics").input()?;
    out.csv("asymptotics", &rows).input()?;
    out.report();
    Ok(())
}

#[derive(Debug, Deserialize)]
struct QuoteRow {
    strike: f64,
    maturity: f64,
    #[serde(default)]
    implied_vol: Option<f64>,
    #[serde(default)]
    mid_price: Option<f64>,
}

/// `(strike, implied vol)` pairs of one expiry, with that expiry.
fn read_smile(path: &Path, forward: Option<f64>) -> anyhow::Result<(Vec<(f64, f64)>, f64)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening market file {}", path.display()))?;
    let mut maturity = None;
    let mut pts = Vec::new();
    for (i, row) in reader.deserialize::<QuoteRow>().enumerate() {
        let row = row.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        match maturity {
            None => maturity = Some(row.maturity),
            Some(t) if t != row.maturity => {
                bail!("{}: one expiry per file, found {t} and {}", path.display(), row.maturity)
            }
            _ => {}
        }
        let vol = match (row.implied_vol, row.mid_price) {
            (Some(v), _) => v,
            (None, Some(price)) => {
                let f = forward.ok_or_else(|| anyhow!("{}: mid prices need a forward", path.display()))?;
                implied_vol(price, 0.0, f.ln(), row.strike.ln(), row.maturity)
                    .with_context(|| format!("{}: row {}", path.display(), i + 1))?
            }
            (None, None) => bail!("{}: row {} has neither implied_vol nor mid_price", path.display(), i + 1),
        };
        pts.push((row.strike, vol));
    }
    let t = maturity.ok_or_else(|| anyhow!("{}: no quotes", path.display()))?;
    Ok((pts, t))
}

#[derive(Serialize)]
struct OverlayRow {
    market: &'static str,
    strike: f64,
    market_vol: f64,
    fitted_vol: f64,
}

#[derive(Serialize)]
struct CalibrationSummary {
    targets: MarketTargets,
    atm_reference: AtmReference,
    vix_fit: Option<SmileFit>,
    spx_fit: Option<SmileFit>,
    calibration: CalibrationResult,
}

#[derive(Serialize)]
struct ResidualRow {
    quantity: &'static str,
    target: f64,
    residual: f64,
}

pub fn calibrate_cmd(cfg: &RunConfig) -> Outcome<()> {
    let task = &cfg.calibrate;
    let mut overlay = Vec::new();
    let mut fits = (None, None);
    let targets = match task.targets {
        Some(t) => t,
        None => {
            let vix_path = task.vix_smile.as_ref().ok_or_else(|| anyhow!("calibrate needs `targets` or `vix_smile`")).input()?;
            let spx_path = task.spx_smile.as_ref().ok_or_else(|| anyhow!("calibrate needs `spx_smile` with `vix_smile`")).input()?;
            let vix_spot = cfg.model.vix_spot.ok_or_else(|| anyhow!("calibrate from smiles needs model.vix_spot")).input()?;
            let atm = match task.atm_reference {
                AtmReference::Futures => task
                    .vix_futures
                    .ok_or_else(|| anyhow!("atm_reference = \"futures\" needs calibrate.vix_futures"))
                    .input()?,
                AtmReference::Spot => vix_spot,
            };
            let (vix_pts, t_vix) = read_smile(vix_path, task.vix_futures).input()?;
            let (spx_pts, t_spx) = read_smile(spx_path, Some(task.spx_forward)).input()?;
            if t_vix != t_spx {
                return Err(anyhow!("VIX and SPX smiles must share one expiry, got {t_vix} and {t_spx}")).input();
            }
            let vix_fit = fit_arctan_smile(&vix_pts, SmileCoordinate::Strike).numerical()?;
            let spx_fit = fit_arctan_smile(&spx_pts, SmileCoordinate::Strike).numerical()?;
            let v = atm_metrics(&vix_fit, atm).numerical()?;
            let s = atm_metrics(&spx_fit, task.spx_forward).numerical()?;
            for (market, pts, fit) in [("vix", &vix_pts, &vix_fit), ("spx", &spx_pts, &spx_fit)] {
                for &(strike, vol) in pts.iter() {
                    overlay.push(OverlayRow {
                        market,
                        strike,
                        market_vol: vol,
                        fitted_vol: fit.eval(strike),
                    });
                }
            }
            fits = (Some(vix_fit), Some(spx_fit));
            MarketTargets {
                level: v.level,
                skew: v.skew,
                curvature: v.curvature,
                spx_skew: s.skew,
                t_mkt: t_vix,
                vix_spot,
            }
        }
    };
    targets.validate().input()?;
    let bounds = if task.allow_positive_rho {
        RhoBounds::allow_positive()
    } else {
        RhoBounds::default()
    };
    let result = calibrate(&targets, &task.search, bounds).numerical()?;
    let r = vix_residuals(
        VixParams::new(result.hurst, result.beta, result.eta),
        &targets,
        task.search.delta,
    )
    .numerical()?;
    let residuals = [
        ResidualRow { quantity: "vix_level", target: targets.level, residual: r[0] },
        ResidualRow { quantity: "vix_skew", target: targets.skew, residual: r[1] },
        ResidualRow { quantity: "vix_curvature", target: targets.curvature, residual: r[2] },
        ResidualRow { quantity: "spx_skew", target: targets.spx_skew, residual: result.rho_residual },
    ];
    let mut out = Outputs::new(cfg, "calibrate").input()?;
    out.json(
        "calibration",
        &CalibrationSummary {
            targets,
            atm_reference: task.atm_reference,
            vix_fit: fits.0,
            spx_fit: fits.1,
            calibration: result,
        },
    )
    .input()?;
    out.csv("residuals", &residuals).input()?;
    if !overlay.is_empty() {
        out.csv("overlay", &overlay).input()?;
    }
    out.report();
    Ok(())
}

/// Tables of `E_β`, `M_β` and `E[Y^κ]` on stdout.
pub fn specfun(beta: f64, xs: &[f64], kappas: &[f64]) -> Outcome<()> {
    let law = GreyLaw::new(beta).input()?;
    println!("x,mittag_leffler,m_wright_density");
    for &x in xs {
        let ml = mittag_leffler(beta, x).numerical()?;
        let density = if beta < 1.0 && x >= 0.0 {
            m_wright_density(beta, x).numerical()?.to_string()
        } else {
            String::new()
        };
        println!("{x},{ml},{density}");
    }
    println!();
    println!("kappa,moment");
    for &k in kappas {
        println!("{k},{}", law.moment(k).numerical()?);
    }
    Ok(())
}
