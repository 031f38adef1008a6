//! Smoother kernels and bandwidth selection.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;

/// Nonnegative kernel weighting samples by scaled covariate distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoother {
    Uniform,
    Epanechnikov,
    Tricubic,
    Gaussian,
    /// Constant weight one, i.e. no smoothing at all.
    Naive,
}

impl Smoother {
    pub const ALL: [Smoother; 5] = [
        Smoother::Uniform,
        Smoother::Epanechnikov,
        Smoother::Tricubic,
        Smoother::Gaussian,
        Smoother::Naive,
    ];

    /// Kernel value at a point of Euclidean norm `u` (already scaled by h).
    pub fn at_norm(self, u: f64) -> f64 {
        match self {
            Smoother::Uniform => {
                if u <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            Smoother::Epanechnikov => {
                if u <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            Smoother::Tricubic => {
                if u <= 1.0 {
                    let t = 1.0 - u * u * u;
                    70.0 / 81.0 * t * t * t
                } else {
                    0.0
                }
            }
            Smoother::Gaussian => (-0.5 * u * u).exp() / (2.0 * PI).sqrt(),
            Smoother::Naive => 1.0,
        }
    }

    /// Natural logarithm of the kernel value; `-inf` outside the support.
    ///
    /// The Gaussian is evaluated analytically so far-away points keep a
    /// finite relative weight instead of underflowing to zero.
    pub fn ln_at_norm(self, u: f64) -> f64 {
        match self {
            Smoother::Gaussian => -0.5 * u * u - 0.5 * (2.0 * PI).ln(),
            s => s.at_norm(u).ln(),
        }
    }

    pub fn has_compact_support(self) -> bool {
        matches!(
            self,
            Smoother::Uniform | Smoother::Epanechnikov | Smoother::Tricubic
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Smoother::Uniform => "uniform",
            Smoother::Epanechnikov => "epanechnikov",
            Smoother::Tricubic => "tricubic",
            Smoother::Gaussian => "gaussian",
            Smoother::Naive => "naive",
        }
    }
}

impl fmt::Display for Smoother {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Smoother {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Smoother::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown smoother '{s}'")))
    }
}

/// Strictly positive smoothing scale.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h.is_finite() {
            Ok(Self(h))
        } else {
            Err(Error::InvalidBandwidth(h))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `S(dx / h)`.
pub fn evaluate_scaled(s: Smoother, h: Bandwidth, dx: &[f64]) -> f64 {
    s.at_norm(norm(dx) / h.value())
}

/// `ln S(dx / h)`.
pub fn ln_evaluate_scaled(s: Smoother, h: Bandwidth, dx: &[f64]) -> f64 {
    s.ln_at_norm(norm(dx) / h.value())
}

/// Log smoother weights of covariates relative to a context.
pub fn ln_weights<'a, I>(s: Smoother, h: Bandwidth, xs: I, xbar: &[f64]) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    xs.into_iter()
        .map(|x| {
            let d2: f64 = x.iter().zip(xbar).map(|(a, b)| (a - b) * (a - b)).sum();
            s.ln_at_norm(d2.sqrt() / h.value())
        })
        .collect()
}

/// Mean of the per-coordinate sample standard deviations of the covariates.
pub fn covariate_spread(data: &Dataset) -> Result<f64> {
    let n = data.n();
    if n < 2 {
        return Err(Error::TooFewSamples {
            required: 2,
            got: n,
        });
    }
    let d = data.dim_x();
    let mut total = 0.0;
    for c in 0..d {
        let mean = data.samples().iter().map(|s| s.x[c]).sum::<f64>() / n as f64;
        let var = data
            .samples()
            .iter()
            .map(|s| (s.x[c] - mean).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        total += var.sqrt();
    }
    let sigma = total / d as f64;
    if sigma > 0.0 {
        Ok(sigma)
    } else {
        Err(Error::DegenerateCovariates)
    }
}

/// Rule of thumb `h = σ · n^(-1/(dim_x + 1))`.
///
/// σ is the mean of the coordinate-wise sample standard deviations; use
/// [`bandwidth_rule_with_spread`] to supply a different spread.
pub fn bandwidth_rule_of_thumb(data: &Dataset) -> Result<Bandwidth> {
    bandwidth_rule_with_spread(covariate_spread(data)?, data.n(), data.dim_x())
}

pub fn bandwidth_rule_with_spread(sigma: f64, n: usize, dim_x: usize) -> Result<Bandwidth> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::DegenerateCovariates);
    }
    Bandwidth::new(sigma * (n as f64).powf(-1.0 / (dim_x as f64 + 1.0)))
}
