//! Newsvendor loss, quantile oracle and demand generator.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{SyntheticModel, VarianceConvention};
use crate::error::{Error, Result};
use crate::model::{BlockKind, ContextualDistribution, DecisionBlock, Loss};

/// Back-order and holding costs per unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewsvendorSpec {
    pub b: f64,
    pub h: f64,
}

impl Default for NewsvendorSpec {
    fn default() -> Self {
        Self { b: 10.0, h: 1.0 }
    }
}

impl NewsvendorSpec {
    pub fn new(b: f64, h: f64) -> Result<Self> {
        if !(b > 0.0 && h > 0.0 && b.is_finite() && h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "newsvendor costs b={b}, h={h} must be positive"
            )));
        }
        Ok(Self { b, h })
    }

    pub fn loss(self) -> NewsvendorLoss {
        NewsvendorLoss {
            b: self.b,
            h: self.h,
        }
    }

    /// Critical ratio `b / (b + h)`.
    pub fn critical_ratio(self) -> f64 {
        self.b / (self.b + self.h)
    }
}

/// `b·(y - z)⁺ + h·(z - y)⁺`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewsvendorLoss {
    pub b: f64,
    pub h: f64,
}

/// The loss with `b = 10`, `h = 1`.
pub fn newsvendor_loss() -> NewsvendorLoss {
    NewsvendorSpec::default().loss()
}

impl Loss for NewsvendorLoss {
    fn dim_z(&self) -> usize {
        1
    }

    fn dim_y(&self) -> Option<usize> {
        Some(1)
    }

    fn value(&self, z: &[f64], y: &[f64]) -> f64 {
        self.b * (y[0] - z[0]).max(0.0) + self.h * (z[0] - y[0]).max(0.0)
    }

    /// Uses the left derivative `-b` at the kink.
    fn subgradient(&self, z: &[f64], y: &[f64], g: &mut [f64]) {
        g[0] = if z[0] > y[0] { self.h } else { -self.b };
    }

    fn blocks(&self, labels: &[Vec<f64>]) -> Vec<DecisionBlock> {
        let lo = labels.iter().map(|y| y[0]).fold(f64::INFINITY, f64::min);
        let hi = labels
            .iter()
            .map(|y| y[0])
            .fold(f64::NEG_INFINITY, f64::max);
        let (center, radius) = if lo <= hi {
            (0.5 * (lo + hi), 0.5 * (hi - lo) + 1.0)
        } else {
            (0.0, 1.0)
        };
        vec![DecisionBlock {
            range: 0..1,
            kind: BlockKind::Free,
            center: vec![center],
            radius,
        }]
    }
}

/// Smallest label whose cumulative weight reaches `b / (b + h)`.
pub fn newsvendor_oracle_quantile(
    dist: &ContextualDistribution,
    spec: NewsvendorSpec,
) -> Result<f64> {
    if dist.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut pts: Vec<(f64, f64)> = dist
        .labels
        .iter()
        .map(|y| y[0])
        .zip(dist.weights.iter().copied())
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let target = spec.critical_ratio();
    let mut cum = 0.0;
    for &(y, w) in &pts {
        cum += w;
        if cum >= target - 1e-12 {
            return Ok(y);
        }
    }
    Ok(pts.last().expect("nonempty").0)
}

/// Demand driven by temperature and a weekend indicator.
///
/// Covariates are `(temperature, weekend flag)`; the day is uniform over the
/// week, with Saturday and Sunday counted as weekend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewsvendorModel {
    pub convention: VarianceConvention,
}

impl NewsvendorModel {
    pub fn new(convention: VarianceConvention) -> Self {
        Self { convention }
    }

    pub fn conditional_mean(temperature: f64, weekend: bool) -> f64 {
        100.0 + (temperature - 20.0) + if weekend { 20.0 } else { 0.0 }
    }

    pub fn demand_std(&self) -> f64 {
        self.convention.std(16.0)
    }

    pub fn temperature_std(&self) -> f64 {
        self.convention.std(4.0)
    }
}

impl SyntheticModel for NewsvendorModel {
    fn dim_x(&self) -> usize {
        2
    }

    fn dim_y(&self) -> usize {
        1
    }

    fn sample_covariates(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let t = Normal::new(20.0, self.temperature_std())
            .expect("valid normal")
            .sample(rng);
        let day = rng.random_range(0..7);
        vec![t, if day >= 5 { 1.0 } else { 0.0 }]
    }

    fn sample_label(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mean = Self::conditional_mean(x[0], x[1] > 0.5);
        vec![Normal::new(mean, self.demand_std())
            .expect("valid normal")
            .sample(rng)]
    }

    /// 15 °C on a Friday.
    fn context(&self) -> Vec<f64> {
        vec![15.0, 0.0]
    }
}
