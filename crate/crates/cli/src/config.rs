//! Run configuration: one TOML file, every table optional, unknown keys rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::ValueEnum;
use gbergomi_core::calibration::{MarketTargets, SearchSpec};
use gbergomi_core::model::{ForwardCurve, ModelParams, Scenario, VixConvention, VixMixing};
use gbergomi_core::montecarlo::{McConfig, DEFAULT_STEPS_PER_YEAR, DEFAULT_TRUNCATION, DEFAULT_VIX_POINTS};
use gbergomi_core::pricing::AtmReference;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub mc: McBlock,
    pub vix: VixBlock,
    pub simulate: SimulateTask,
    pub price: PriceTask,
    pub bounds: BoundsTask,
    pub asymptotics: AsymptoticsTask,
    pub calibrate: CalibrateTask,
    pub io: IoBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    pub hurst: f64,
    pub beta: f64,
    pub eta: f64,
    pub rho: f64,
    /// 1, 2 or 3. Mutually exclusive with `vix_spot`.
    pub scenario: Option<u8>,
    /// Flat curve `ξ0 = vix_spot²`.
    pub vix_spot: Option<f64>,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            hurst: 0.07,
            beta: 0.9,
            eta: 1.23,
            rho: -0.9,
            scenario: None,
            vix_spot: None,
        }
    }
}

pub fn scenario(n: u8) -> anyhow::Result<Scenario> {
    Ok(match n {
        1 => Scenario::One,
        2 => Scenario::Two,
        3 => Scenario::Three,
        _ => bail!("scenario must be 1, 2 or 3, got {n}"),
    })
}

impl ModelBlock {
    pub fn curve(&self) -> anyhow::Result<ForwardCurve> {
        match (self.scenario, self.vix_spot) {
            (Some(_), Some(_)) => bail!("model: give either `scenario` or `vix_spot`, not both"),
            (None, Some(v)) => Ok(ForwardCurve::from_vix(v)?),
            (Some(s), None) => Ok(ForwardCurve::scenario(scenario(s)?)),
            (None, None) => Ok(ForwardCurve::scenario(Scenario::One)),
        }
    }

    pub fn params(&self) -> anyhow::Result<ModelParams> {
        self.params_with(self.curve()?)
    }

    pub fn params_with(&self, curve: ForwardCurve) -> anyhow::Result<ModelParams> {
        Ok(ModelParams::new(self.hurst, self.beta, self.eta, self.rho, curve)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SpotEngine {
    #[default]
    Cholesky,
    Markovian,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McBlock {
    pub n_paths: usize,
    pub seed: u64,
    pub antithetic: bool,
    pub workers: usize,
    /// Full-Cholesky block size of the VIX engine.
    pub truncation: usize,
    pub steps_per_year: usize,
    pub engine: SpotEngine,
    /// Markovian nodes.
    pub nodes: usize,
}

impl Default for McBlock {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            seed: 42,
            antithetic: false,
            workers: 1,
            truncation: DEFAULT_TRUNCATION,
            steps_per_year: DEFAULT_STEPS_PER_YEAR,
            engine: SpotEngine::Cholesky,
            nodes: 20,
        }
    }
}

impl McBlock {
    pub fn config(&self) -> McConfig {
        let mut mc = McConfig::new(self.n_paths, self.seed)
            .with_antithetic(self.antithetic)
            .with_workers(self.workers);
        mc.truncation_l = self.truncation;
        mc
    }

    pub fn spot_steps(&self, maturity: f64) -> usize {
        ((maturity * self.steps_per_year as f64).ceil() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mixing {
    #[default]
    Series,
    ConditionalOnY,
}

impl From<Mixing> for VixMixing {
    fn from(m: Mixing) -> Self {
        match m {
            Mixing::Series => VixMixing::Series,
            Mixing::ConditionalOnY => VixMixing::ConditionalOnY,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VixBlock {
    pub delta: f64,
    pub points: usize,
    pub mixing: Mixing,
}

impl Default for VixBlock {
    fn default() -> Self {
        Self {
            delta: VixConvention::default().delta,
            points: DEFAULT_VIX_POINTS,
            mixing: Mixing::Series,
        }
    }
}

impl VixBlock {
    pub fn convention(&self) -> anyhow::Result<VixConvention> {
        Ok(VixConvention::new(self.delta)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    #[default]
    Vix,
    Spot,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateTask {
    pub target: Target,
    pub maturity: f64,
    /// Write every terminal sample, not just the summary.
    pub write_samples: bool,
}

impl Default for SimulateTask {
    fn default() -> Self {
        Self {
            target: Target::Vix,
            maturity: 0.094,
            write_samples: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceTask {
    pub target: Target,
    pub maturity: f64,
    /// Strikes as multiples of the ATM reference.
    pub relative_strikes: Vec<f64>,
    pub atm_reference: AtmReference,
    pub fit: bool,
}

impl Default for PriceTask {
    fn default() -> Self {
        Self {
            target: Target::Vix,
            maturity: 0.094,
            relative_strikes: (0..13).map(|i| 0.85 + 0.05 * i as f64).collect(),
            atm_reference: AtmReference::Futures,
            fit: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsTask {
    pub maturities: Vec<f64>,
    pub scenarios: Vec<u8>,
}

impl Default for BoundsTask {
    fn default() -> Self {
        Self {
            maturities: vec![1.0 / 12.0, 0.25, 0.5, 0.75, 1.0],
            scenarios: vec![1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    #[default]
    Beta,
    Hurst,
    Eta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsymptoticsTask {
    pub sweep: SweepAxis,
    pub from: f64,
    pub to: f64,
    pub points: usize,
    pub t_mkt: f64,
}

impl Default for AsymptoticsTask {
    fn default() -> Self {
        Self {
            sweep: SweepAxis::Beta,
            from: 0.1,
            to: 1.0,
            points: 10,
            t_mkt: 0.094,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateTask {
    /// ATM targets given directly; otherwise they come from the smile files.
    pub targets: Option<MarketTargets>,
    /// VIX options, `strike,maturity,implied_vol` or `strike,maturity,mid_price`.
    pub vix_smile: Option<PathBuf>,
    /// SPX options, same schema.
    pub spx_smile: Option<PathBuf>,
    /// VIX futures for the option expiry; needed when the ATM reference is the futures.
    pub vix_futures: Option<f64>,
    pub spx_forward: f64,
    pub atm_reference: AtmReference,
    pub allow_positive_rho: bool,
    pub search: SearchSpec,
}

impl Default for CalibrateTask {
    fn default() -> Self {
        Self {
            targets: None,
            vix_smile: None,
            spx_smile: None,
            vix_futures: None,
            spx_forward: 1.0,
            atm_reference: AtmReference::Futures,
            allow_positive_rho: false,
            search: SearchSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoBlock {
    pub out_dir: PathBuf,
    pub prefix: String,
}

impl Default for IoBlock {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("."),
            prefix: "gbergomi".into(),
        }
    }
}

impl IoBlock {
    pub fn path(&self, stem: &str, ext: &str) -> PathBuf {
        self.out_dir.join(format!("{}_{stem}.{ext}", self.prefix))
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Checks everything that can be checked before computing.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.model.params()?;
        self.mc.config().validate()?;
        self.vix.convention()?;
        if self.vix.points < 2 {
            bail!("vix.points must be at least 2");
        }
        if self.mc.steps_per_year == 0 {
            bail!("mc.steps_per_year must be positive");
        }
        if self.mc.engine == SpotEngine::Markovian && self.mc.nodes == 0 {
            bail!("mc.nodes must be positive for the Markovian engine");
        }
        for (name, t) in [("simulate", self.simulate.maturity), ("price", self.price.maturity)] {
            if !(t > 0.0) || !t.is_finite() {
                bail!("{name}.maturity must be positive, got {t}");
            }
        }
        if self.price.relative_strikes.iter().any(|k| !(*k > 0.0)) {
            bail!("price.relative_strikes must be positive");
        }
        if self.bounds.maturities.iter().any(|t| !(*t >= 0.0)) {
            bail!("bounds.maturities must be non-negative");
        }
        for s in &self.bounds.scenarios {
            scenario(*s)?;
        }
        if self.asymptotics.points == 0 || !(self.asymptotics.from <= self.asymptotics.to) {
            bail!("asymptotics needs points ≥ 1 and from ≤ to");
        }
        self.calibrate.search.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}
