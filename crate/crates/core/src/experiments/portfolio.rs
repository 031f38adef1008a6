//! Conditional value-at-risk portfolio loss and return generator.

use nalgebra::{Matrix6, Vector6};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{SyntheticModel, VarianceConvention};
use crate::error::{Error, Result};
use crate::model::{BlockKind, DecisionBlock, Loss};

/// Risk level and return trade-off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortfolioSpec {
    pub eps: f64,
    pub lambda: f64,
}

impl Default for PortfolioSpec {
    fn default() -> Self {
        Self {
            eps: 0.05,
            lambda: 1.0,
        }
    }
}

impl PortfolioSpec {
    pub fn new(eps: f64, lambda: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) || !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "portfolio parameters eps={eps}, lambda={lambda} out of range"
            )));
        }
        Ok(Self { eps, lambda })
    }

    pub fn loss(self) -> PortfolioLoss {
        PortfolioLoss {
            eps: self.eps,
            lambda: self.lambda,
        }
    }
}

/// `β + (1/ε)(-zᵀy - β)⁺ - λ·zᵀy` over weights `z` in the simplex and a free `β`.
///
/// The decision vector is `(z_1, …, z_6, β)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortfolioLoss {
    pub eps: f64,
    pub lambda: f64,
}

/// The loss with `ε = 0.05`, `λ = 1`.
pub fn portfolio_loss() -> PortfolioLoss {
    PortfolioSpec::default().loss()
}

pub const ASSETS: usize = 6;

fn ret(z: &[f64], y: &[f64]) -> f64 {
    z[..ASSETS].iter().zip(y).map(|(a, b)| a * b).sum()
}

impl Loss for PortfolioLoss {
    fn dim_z(&self) -> usize {
        ASSETS + 1
    }

    fn dim_y(&self) -> Option<usize> {
        Some(ASSETS)
    }

    fn value(&self, z: &[f64], y: &[f64]) -> f64 {
        let r = ret(z, y);
        let beta = z[ASSETS];
        beta + (-r - beta).max(0.0) / self.eps - self.lambda * r
    }

    fn subgradient(&self, z: &[f64], y: &[f64], g: &mut [f64]) {
        let r = ret(z, y);
        let beta = z[ASSETS];
        let active = -r - beta > 0.0;
        let c = if active {
            1.0 / self.eps + self.lambda
        } else {
            self.lambda
        };
        for (gi, yi) in g[..ASSETS].iter_mut().zip(y) {
            *gi = -c * yi;
        }
        g[ASSETS] = if active { 1.0 - 1.0 / self.eps } else { 1.0 };
    }

    fn blocks(&self, labels: &[Vec<f64>]) -> Vec<DecisionBlock> {
        let top = labels
            .iter()
            .flat_map(|y| y.iter())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        vec![
            DecisionBlock {
                range: 0..ASSETS,
                kind: BlockKind::Simplex,
                center: vec![1.0 / ASSETS as f64; ASSETS],
                radius: 1.0,
            },
            DecisionBlock {
                range: ASSETS..ASSETS + 1,
                kind: BlockKind::Free,
                center: vec![0.0],
                radius: top + 1.0,
            },
        ]
    }
}

/// Returns driven by market level, inflation and geopolitical chatter.
///
/// Covariates are `(sap500, inflation, #war)`; the log of `#war` is normal.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioModel {
    pub convention: VarianceConvention,
    pub mu: Vector6<f64>,
    /// Lower-triangular factor `L` with `Σ = L Lᵀ`.
    pub factor: Matrix6<f64>,
}

impl PortfolioModel {
    pub fn new(convention: VarianceConvention) -> Self {
        let mu = Vector6::new(86.8625, 71.6059, 75.3759, 97.6258, 52.7854, 84.8973);
        #[rustfmt::skip]
        let factor = Matrix6::new(
            136.687, 0.0, 0.0, 0.0, 0.0, 0.0,
            8.79766, 142.279, 0.0, 0.0, 0.0, 0.0,
            16.1504, 15.0637, 122.613, 0.0, 0.0, 0.0,
            18.4944, 15.6961, 26.344, 139.148, 0.0, 0.0,
            3.41394, 16.5922, 14.8795, 13.9914, 151.732, 0.0,
            24.8156, 18.7292, 17.1574, 6.36536, 24.7703, 144.672,
        );
        Self {
            convention,
            mu,
            factor,
        }
    }

    pub fn covariance(&self) -> Matrix6<f64> {
        self.factor * self.factor.transpose()
    }

    /// Conditional mean return vector at covariates `x`.
    pub fn conditional_mean(&self, x: &[f64]) -> Vector6<f64> {
        let shift = 0.1 * (x[0] - 1000.0) + 1000.0 * x[1] + 10.0 * (x[2] + 1.0).ln();
        self.mu.add_scalar(shift)
    }
}

impl SyntheticModel for PortfolioModel {
    fn dim_x(&self) -> usize {
        3
    }

    fn dim_y(&self) -> usize {
        ASSETS
    }

    fn sample_covariates(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let c = self.convention;
        let sap = Normal::new(1000.0, c.std(50.0))
            .expect("valid normal")
            .sample(rng);
        let infl = Normal::new(0.02, c.std(0.01))
            .expect("valid normal")
            .sample(rng);
        let logwar = Normal::new(0.0, c.std(1.0))
            .expect("valid normal")
            .sample(rng);
        vec![sap, infl, logwar.exp()]
    }

    fn sample_label(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let e = Vector6::from_fn(|_, _| StandardNormal.sample(rng));
        (self.conditional_mean(x) + self.factor * e)
            .iter()
            .copied()
            .collect()
    }

    /// `(970, 0, 10)`.
    fn context(&self) -> Vec<f64> {
        vec![970.0, 0.0, 10.0]
    }
}
