//! Monte Carlo engines: VIX by truncated Cholesky, spot by joint Cholesky of
//! `(ΔB, 𝒱)`, and spot by a Markovian (sum of exponentials) approximation.
//!
//! Every path owns two ChaCha8 streams. The primary stream feeds `Y_β`, the
//! Brownian increments `ΔB` and the orthogonal increments `B⊥`; the residual
//! stream feeds whatever else an engine needs. Engines therefore share their
//! driving noise at equal seeds, which keeps cross-engine and cross-β
//! comparisons tight.

mod markov;
mod spot;
mod vix;

pub use markov::{
    markovian_nodes, markovian_nodes_between, markovian_nodes_on, simulate_spot_markovian,
    simulate_spot_markovian_with, simulation_nodes, MarkovNodes,
};
pub use spot::{simulate_spot, simulate_spot_observed};
pub use vix::{simulate_vix, simulate_vix_with, VixEngine, VixOptions};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MartingaleRegime;
use crate::rng::{mean_and_stderr, path_rng};

/// Default number of points on the VIX window.
pub const DEFAULT_VIX_POINTS: usize = 100;
/// Default spot time steps per year.
pub const DEFAULT_STEPS_PER_YEAR: usize = 312;
/// Default size of the initial full-Cholesky block.
pub const DEFAULT_TRUNCATION: usize = 8;

const RESIDUAL_STREAM_KEY: u64 = 0x9e37_79b9_7f4a_7c15;

/// Monte Carlo configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Pair each Gaussian draw with its negative; `Y_β` is shared within a pair.
    pub antithetic: bool,
    pub truncation_l: usize,
    pub workers: usize,
}

impl McConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self {
            n_paths,
            seed,
            antithetic: false,
            truncation_l: DEFAULT_TRUNCATION,
            workers: 1,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn with_antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(Error::Invalid(format!("need at least 2 paths, got {}", self.n_paths)));
        }
        if self.antithetic && self.n_paths % 2 != 0 {
            return Err(Error::Invalid("antithetic sampling needs an even path count".into()));
        }
        if self.truncation_l < 1 {
            return Err(Error::Invalid("truncation_l must be at least 1".into()));
        }
        if self.workers < 1 {
            return Err(Error::Invalid("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of independent draws (pairs when antithetic).
    pub(crate) fn draws(&self) -> usize {
        if self.antithetic {
            self.n_paths / 2
        } else {
            self.n_paths
        }
    }

    pub(crate) fn streams(&self, draw: usize) -> (ChaCha8Rng, ChaCha8Rng) {
        (
            path_rng(self.seed, draw as u64),
            path_rng(self.seed ^ RESIDUAL_STREAM_KEY, draw as u64),
        )
    }
}

/// Uniform time grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub end: f64,
    pub n_steps: usize,
}

impl GridSpec {
    pub fn new(start: f64, end: f64, n_steps: usize) -> Result<Self> {
        if !(end > start) || !start.is_finite() || !end.is_finite() {
            return Err(Error::Grid(format!("grid needs start < end, got [{start}, {end}]")));
        }
        if n_steps < 1 {
            return Err(Error::Grid("grid needs at least one step".into()));
        }
        Ok(Self { start, end, n_steps })
    }

    /// `[0, T]` at the default 312 steps per year (at least one step).
    pub fn spot_default(maturity: f64) -> Result<Self> {
        let n = (maturity * DEFAULT_STEPS_PER_YEAR as f64).ceil().max(1.0) as usize;
        Self::new(0.0, maturity, n)
    }

    pub fn points(&self) -> Vec<f64> {
        let h = (self.end - self.start) / self.n_steps as f64;
        (0..=self.n_steps)
            .map(|i| {
                if i == self.n_steps {
                    self.end
                } else {
                    self.start + h * i as f64
                }
            })
            .collect()
    }
}

/// Which engine produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "kebab-case")]
pub enum EngineTag {
    VixTruncatedCholesky { l: usize },
    VixFullCholesky,
    SpotCholesky,
    SpotMarkovian { nodes: usize },
    /// Samples supplied from outside the crate.
    External,
}

/// Simulated values of one quantity (VIX_T or S_T) with their provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    pub values: Vec<f64>,
    pub maturity: f64,
    /// Consecutive values form antithetic pairs.
    pub antithetic: bool,
    pub seed: u64,
    pub engine: EngineTag,
    pub martingale: MartingaleRegime,
    pub rbergomi_equivalent: bool,
}

impl Samples {
    /// Values that are i.i.d. across the sample: pair means when antithetic.
    fn independent<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        if self.antithetic {
            self.values
                .chunks_exact(2)
                .map(|p| 0.5 * (f(p[0]) + f(p[1])))
                .collect()
        } else {
            self.values.iter().map(|&v| f(v)).collect()
        }
    }

    pub fn price(&self, payoff: Payoff) -> Result<McResult> {
        let xs = self.independent(|v| payoff.apply(v));
        let (estimate, stderr) = mean_and_stderr(&xs)?;
        Ok(McResult {
            estimate,
            stderr,
            n_paths: self.values.len(),
            seed: Some(self.seed),
            engine: self.engine,
            martingale: Some(self.martingale),
            rbergomi_equivalent: self.rbergomi_equivalent,
        })
    }

    /// Sample mean with standard error (the VIX future for VIX samples).
    pub fn mean(&self) -> Result<McResult> {
        self.price(Payoff::Underlying)
    }
}

/// European payoff on a simulated terminal value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payoff {
    Underlying,
    Call { strike: f64 },
    Put { strike: f64 },
}

impl Payoff {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Payoff::Underlying => x,
            Payoff::Call { strike } => (x - strike).max(0.0),
            Payoff::Put { strike } => (strike - x).max(0.0),
        }
    }
}

/// A Monte Carlo price with standard error and provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub estimate: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub seed: Option<u64>,
    pub engine: EngineTag,
    pub martingale: Option<MartingaleRegime>,
    pub rbergomi_equivalent: bool,
}

/// Mean payoff over i.i.d. samples with standard error `sd/√n`.
pub fn price_from_samples(samples: &[f64], payoff: Payoff) -> Result<McResult> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let xs: Vec<f64> = samples.iter().map(|&v| payoff.apply(v)).collect();
    let (estimate, stderr) = mean_and_stderr(&xs)?;
    Ok(McResult {
        estimate,
        stderr,
        n_paths: samples.len(),
        seed: None,
        engine: EngineTag::External,
        martingale: None,
        rbergomi_equivalent: false,
    })
}

/// Flattens per-draw outputs (one or two paths each) into per-path rows.
pub(crate) fn flatten_pairs(per_draw: Vec<Vec<Vec<f64>>>) -> Vec<Vec<f64>> {
    per_draw.into_iter().flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_samples() {
        let r = price_from_samples(&[1.5; 100], Payoff::Underlying).unwrap();
        assert_eq!(r.estimate, 1.5);
        assert_eq!(r.stderr, 0.0);
        assert!(matches!(price_from_samples(&[], Payoff::Underlying), Err(Error::EmptySample)));
    }

    #[test]
    fn lognormal_call_matches_black_scholes() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z - 0.5).exp()
            })
            .collect();
        let r = price_from_samples(&xs, Payoff::Call { strike: 1.0 }).unwrap();
        // σ = 1, T = 1, at the money: 2Φ(1/2) - 1
        let exact = 2.0 * 0.691_462_461_274_013_1 - 1.0;
        assert!((r.estimate - exact).abs() < 3.0 * r.stderr, "{} ± {}", r.estimate, r.stderr);
        let fwd = price_from_samples(&xs, Payoff::Call { strike: 0.0 }).unwrap();
        assert!((fwd.estimate - 1.0).abs() < 3.0 * fwd.stderr);
    }

    #[test]
    fn grid_points() {
        let g = GridSpec::new(0.0, 1.0, 4).unwrap().points();
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(GridSpec::spot_default(1.0).unwrap().n_steps, 312);
        assert_eq!(GridSpec::spot_default(0.001).unwrap().n_steps, 1);
        assert!(GridSpec::new(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(McConfig::new(1, 0).validate().is_err());
        assert!(McConfig::new(11, 0).with_antithetic(true).validate().is_err());
        assert!(McConfig::new(10, 0).with_antithetic(true).validate().is_ok());
    }
}
