//! Distances between empirical models on a common support.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

type GenFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Model distance function.
#[derive(Clone)]
pub enum ModelDistance {
    /// Relative entropy `Σ m ln(m / mref)`.
    Bootstrap,
    /// `Σ (m - mref)² / mref`.
    Pearson,
    /// `Σ mref ln(mref / m)`.
    Burg,
    /// `Σ mref f(m / mref)` for a convex `f` with `f(1) = 0`.
    FDivergence { name: String, f: Arc<GenFn> },
    /// Optimal transport distance; recognized but not supported.
    Wasserstein,
}

impl fmt::Debug for ModelDistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl PartialEq for ModelDistance {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ModelDistance::FDivergence { f: a, .. }, ModelDistance::FDivergence { f: b, .. }) => {
                Arc::ptr_eq(a, b)
            }
            _ => std::mem::discriminant(self) == std::mem::discriminant(other),
        }
    }
}

impl ModelDistance {
    pub fn f_divergence<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        ModelDistance::FDivergence {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            ModelDistance::Bootstrap => "bootstrap",
            ModelDistance::Pearson => "pearson",
            ModelDistance::Burg => "burg",
            ModelDistance::FDivergence { name, .. } => name,
            ModelDistance::Wasserstein => "wasserstein",
        }
    }

    pub fn evaluate(&self, m: &[f64], mref: &[f64]) -> Result<f64> {
        check_weights(m, mref)?;
        match self {
            ModelDistance::Bootstrap => Ok(m
                .iter()
                .zip(mref)
                .map(|(&p, &q)| {
                    if p == 0.0 {
                        0.0
                    } else if q == 0.0 {
                        f64::INFINITY
                    } else {
                        p * (p / q).ln()
                    }
                })
                .sum()),
            ModelDistance::Pearson => Ok(m
                .iter()
                .zip(mref)
                .map(|(&p, &q)| {
                    if q == 0.0 {
                        if p == 0.0 {
                            0.0
                        } else {
                            f64::INFINITY
                        }
                    } else {
                        (p - q).powi(2) / q
                    }
                })
                .sum()),
            ModelDistance::Burg => Ok(m
                .iter()
                .zip(mref)
                .map(|(&p, &q)| {
                    if q == 0.0 {
                        0.0
                    } else if p == 0.0 {
                        f64::INFINITY
                    } else {
                        q * (q / p).ln()
                    }
                })
                .sum()),
            ModelDistance::FDivergence { f, .. } => {
                if mref.iter().any(|&q| q <= 0.0) {
                    return Err(Error::InvalidWeights(
                        "f-divergence needs a strictly positive reference".into(),
                    ));
                }
                Ok(m.iter().zip(mref).map(|(&p, &q)| q * f(p / q)).sum())
            }
            ModelDistance::Wasserstein => Err(Error::UnsupportedDistance("wasserstein")),
        }
    }

    /// Generator `f` with derivatives, for the generic primal solver.
    pub(crate) fn generator(&self) -> Result<Generator> {
        Ok(match self {
            ModelDistance::Bootstrap => Generator::Kl,
            ModelDistance::Pearson => Generator::Pearson,
            ModelDistance::Burg => Generator::Burg,
            ModelDistance::FDivergence { f, .. } => Generator::Custom(f.clone()),
            ModelDistance::Wasserstein => return Err(Error::UnsupportedDistance("wasserstein")),
        })
    }
}

impl FromStr for ModelDistance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bootstrap" | "kl" => Ok(ModelDistance::Bootstrap),
            "pearson" => Ok(ModelDistance::Pearson),
            "burg" => Ok(ModelDistance::Burg),
            "wasserstein" => Ok(ModelDistance::Wasserstein),
            _ => Err(Error::InvalidParameter(format!("unknown distance '{s}'"))),
        }
    }
}

fn check_weights(m: &[f64], mref: &[f64]) -> Result<()> {
    if m.len() != mref.len() {
        return Err(Error::DimensionMismatch {
            expected: mref.len(),
            got: m.len(),
        });
    }
    if m.iter().chain(mref).any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidWeights(
            "weights must be finite and nonnegative".into(),
        ));
    }
    Ok(())
}

/// Relative entropy of `m` with respect to `mref`, with `0 ln 0 = 0`.
pub fn bootstrap_distance(m: &[f64], mref: &[f64]) -> Result<f64> {
    ModelDistance::Bootstrap.evaluate(m, mref)
}

/// Any distance of the family by kind.
pub fn table2_distance(kind: &ModelDistance, m: &[f64], mref: &[f64]) -> Result<f64> {
    kind.evaluate(m, mref)
}

/// Convex generator of an f-divergence with its first two derivatives.
#[derive(Clone)]
pub(crate) enum Generator {
    Kl,
    Pearson,
    Burg,
    Custom(Arc<GenFn>),
}

impl Generator {
    pub fn f(&self, t: f64) -> f64 {
        match self {
            Generator::Kl => {
                if t == 0.0 {
                    0.0
                } else {
                    t * t.ln()
                }
            }
            Generator::Pearson => (t - 1.0).powi(2),
            Generator::Burg => -t.ln(),
            Generator::Custom(f) => f(t),
        }
    }

    pub fn df(&self, t: f64) -> f64 {
        match self {
            Generator::Kl => t.ln() + 1.0,
            Generator::Pearson => 2.0 * (t - 1.0),
            Generator::Burg => -1.0 / t,
            Generator::Custom(f) => {
                let h = fd_step(t);
                (f(t + h) - f(t - h)) / (2.0 * h)
            }
        }
    }

    pub fn d2f(&self, t: f64) -> f64 {
        match self {
            Generator::Kl => 1.0 / t,
            Generator::Pearson => 2.0,
            Generator::Burg => 1.0 / (t * t),
            Generator::Custom(f) => {
                let h = fd_step(t).max(1e-4 * t.min(1.0));
                ((f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h)).max(0.0)
            }
        }
    }
}

fn fd_step(t: f64) -> f64 {
    (1e-6 * t.max(1.0)).min(0.5 * t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bootstrap_examples() {
        assert_eq!(bootstrap_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        let d = bootstrap_distance(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
        assert!((d - (0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln())).abs() < 1e-15);
        assert!((d - 0.143841).abs() < 1e-6);
        assert!((bootstrap_distance(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(bootstrap_distance(&[-0.1, 1.1], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn zero_log_zero() {
        assert_eq!(
            bootstrap_distance(&[0.0, 1.0], &[0.5, 0.5]).unwrap(),
            2f64.ln()
        );
        assert!(bootstrap_distance(&[0.0, 1.0], &[0.5, 0.5])
            .unwrap()
            .is_finite());
    }

    #[test]
    fn pearson_and_burg() {
        let p = ModelDistance::Pearson
            .evaluate(&[0.5, 0.5], &[0.25, 0.75])
            .unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            ModelDistance::Pearson
                .evaluate(&[0.2, 0.8], &[0.2, 0.8])
                .unwrap(),
            0.0
        );
        assert_eq!(
            ModelDistance::Burg
                .evaluate(&[0.0, 1.0], &[0.5, 0.5])
                .unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn wasserstein_unsupported() {
        assert_eq!(
            ModelDistance::Wasserstein.evaluate(&[1.0], &[1.0]),
            Err(Error::UnsupportedDistance("wasserstein"))
        );
        assert_eq!(
            "pearson".parse::<ModelDistance>().unwrap(),
            ModelDistance::Pearson
        );
        assert!("hellinger".parse::<ModelDistance>().is_err());
    }

    #[test]
    fn generator_derivatives() {
        let custom = Generator::Custom(Arc::new(|t: f64| t * t.ln()));
        for t in [0.1, 0.5, 1.0, 3.0] {
            assert!((custom.df(t) - Generator::Kl.df(t)).abs() < 1e-6);
            assert!((custom.d2f(t) - Generator::Kl.d2f(t)).abs() < 1e-3 * Generator::Kl.d2f(t));
        }
    }

    fn simplex(raw: &[f64]) -> Vec<f64> {
        let s: f64 = raw.iter().sum();
        raw.iter().map(|v| v / s).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn family_properties(
            a in prop::collection::vec(0.01f64..1.0, 4),
            b in prop::collection::vec(0.01f64..1.0, 4),
            r in prop::collection::vec(0.01f64..1.0, 4),
            lam in 0.0f64..1.0,
        ) {
            let (m1, m2, mref) = (simplex(&a), simplex(&b), simplex(&r));
            let kl = ModelDistance::f_divergence("kl", |t: f64| t * t.ln());
            let chi = ModelDistance::f_divergence("chi2", |t: f64| t * t - 1.0);
            let mix: Vec<f64> = m1.iter().zip(&m2).map(|(x, y)| lam * x + (1.0 - lam) * y).collect();
            for d in [ModelDistance::Bootstrap, ModelDistance::Pearson, ModelDistance::Burg, kl.clone()] {
                let d1 = d.evaluate(&m1, &mref).unwrap();
                let d2 = d.evaluate(&m2, &mref).unwrap();
                prop_assert!(d1 >= -1e-15);
                prop_assert!(d.evaluate(&mref, &mref).unwrap().abs() <= 1e-15);
                prop_assert!(d.evaluate(&mix, &mref).unwrap() <= lam * d1 + (1.0 - lam) * d2 + 1e-9);
            }
            let kl_direct = bootstrap_distance(&m1, &mref).unwrap();
            prop_assert!((kl.evaluate(&m1, &mref).unwrap() - kl_direct).abs() <= 1e-12);
            let pearson = ModelDistance::Pearson.evaluate(&m1, &mref).unwrap();
            prop_assert!((chi.evaluate(&m1, &mref).unwrap() - pearson).abs() <= 1e-12);
        }

        #[test]
        fn discrimination(r in prop::collection::vec(0.05f64..1.0, 3), eps in 1e-6f64..1e-2) {
            let mref = simplex(&r);
            let mut m = mref.clone();
            let shift = eps * m[0].min(m[1]);
            m[0] += shift;
            m[1] -= shift;
            for d in [ModelDistance::Bootstrap, ModelDistance::Pearson, ModelDistance::Burg] {
                prop_assert!(d.evaluate(&m, &mref).unwrap() > 0.0);
            }
        }
    }
}
