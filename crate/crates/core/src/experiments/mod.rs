//! Synthetic newsvendor and portfolio experiments.
//!
//! Each experiment pairs a convex loss with a synthetic covariate-label
//! generator. Learners are tuned by cross-validation on the training data,
//! then prescriptions are assessed either by bootstrap disappointment or by
//! their cost on freshly generated test data.

mod cv;
mod newsvendor;
mod portfolio;
mod sweeps;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, SupervisedSample};

pub use cv::{cross_validate, h_grid, k_grid, CvChoice, LearnerFamily, ProximityKind};
pub use newsvendor::{
    newsvendor_loss, newsvendor_oracle_quantile, NewsvendorLoss, NewsvendorModel, NewsvendorSpec,
};
pub use portfolio::{portfolio_loss, PortfolioLoss, PortfolioModel, PortfolioSpec};
pub use sweeps::{
    newsvendor_sweep, out_of_sample_eval, portfolio_sweep, NewsvendorSweep, OosReport,
    PortfolioRow, PortfolioSweep, RadiusGrid, SweepRow,
};

/// How the second parameter of `N(μ, ·)` in the model descriptions is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceConvention {
    /// The parameter is a variance.
    #[default]
    Variance,
    /// The parameter is a standard deviation.
    Std,
}

impl VarianceConvention {
    /// Standard deviation corresponding to the stated parameter.
    pub fn std(self, param: f64) -> f64 {
        match self {
            VarianceConvention::Variance => param.sqrt(),
            VarianceConvention::Std => param,
        }
    }
}

impl fmt::Display for VarianceConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarianceConvention::Variance => "variance",
            VarianceConvention::Std => "std",
        })
    }
}

impl FromStr for VarianceConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variance" => Ok(VarianceConvention::Variance),
            "std" => Ok(VarianceConvention::Std),
            _ => Err(Error::InvalidParameter(format!(
                "unknown variance convention '{s}'"
            ))),
        }
    }
}

/// A joint covariate-label distribution that can be sampled.
pub trait SyntheticModel: Send + Sync {
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;
    fn sample_covariates(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    fn sample_label(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64>;

    /// Context of interest.
    fn context(&self) -> Vec<f64>;

    /// `n` independent samples, reproducible under `(seed, stream)`.
    fn sample(&self, n: usize, seed: u64, stream: u64) -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let samples = (0..n)
            .map(|_| {
                let x = self.sample_covariates(&mut rng);
                let y = self.sample_label(&x, &mut rng);
                SupervisedSample::new(x, y)
            })
            .collect();
        Dataset::new(samples)
    }
}

/// Experiment selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentName {
    Newsvendor,
    Portfolio,
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentName::Newsvendor => "newsvendor",
            ExperimentName::Portfolio => "portfolio",
        })
    }
}

impl FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "newsvendor" => Ok(ExperimentName::Newsvendor),
            "portfolio" => Ok(ExperimentName::Portfolio),
            _ => Err(Error::InvalidParameter(format!("unknown experiment '{s}'"))),
        }
    }
}
