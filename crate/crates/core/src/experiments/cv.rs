//! Hyperparameter selection by k-fold cross-validation of the prediction error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{
    mahalanobis_proximity, Formulation, Learner, NnLearner, NwLearner, ProximityFn,
};
use crate::model::{Dataset, EmpiricalModel};
use crate::smoothers::{bandwidth_rule_of_thumb, Bandwidth, Smoother};

/// Proximity used by nearest-neighbors learners, fitted to training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProximityKind {
    Euclidean,
    #[default]
    Mahalanobis,
}

impl ProximityKind {
    pub fn fit(self, data: &Dataset) -> Result<ProximityFn> {
        match self {
            ProximityKind::Euclidean => Ok(ProximityFn::squared_euclidean()),
            ProximityKind::Mahalanobis => mahalanobis_proximity(data),
        }
    }
}

/// A learner family whose bandwidth (and neighbor count) are to be tuned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LearnerFamily {
    pub formulation: Formulation,
    pub smoother: Smoother,
    pub proximity: ProximityKind,
}

impl LearnerFamily {
    /// Gaussian-smoothed Nadaraya-Watson.
    pub fn nw_gaussian() -> Self {
        Self {
            formulation: Formulation::Nw,
            smoother: Smoother::Gaussian,
            proximity: ProximityKind::Euclidean,
        }
    }

    /// Classical nearest neighbors under the Mahalanobis distance.
    pub fn nn_mahalanobis() -> Self {
        Self {
            formulation: Formulation::Nn,
            smoother: Smoother::Naive,
            proximity: ProximityKind::Mahalanobis,
        }
    }

    pub fn of(formulation: Formulation) -> Self {
        match formulation {
            Formulation::Nw => Self::nw_gaussian(),
            Formulation::Nn => Self::nn_mahalanobis(),
        }
    }

    /// Learner on `data` with the given hyperparameters.
    pub fn build(&self, data: &Dataset, h: Bandwidth, k: usize) -> Result<Learner> {
        Ok(match self.formulation {
            Formulation::Nw => Learner::Nw(NwLearner::new(self.smoother, h)),
            Formulation::Nn => Learner::Nn(NnLearner::new(
                self.smoother,
                h,
                k,
                self.proximity.fit(data)?,
            )),
        })
    }

    fn tunes_bandwidth(&self) -> bool {
        self.smoother != Smoother::Naive
    }
}

/// Selected hyperparameters and their cross-validated mean squared error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CvChoice {
    pub bandwidth: Bandwidth,
    pub k: Option<usize>,
    pub mse: f64,
}

/// Bandwidths `h0·2^e` for `e = -3..=3`.
pub fn h_grid(h0: f64) -> Vec<f64> {
    (-3..=3).map(|e| h0 * 2f64.powi(e)).collect()
}

/// Neighbor counts around `√n`, always including `round(√n)`.
pub fn k_grid(n: usize) -> Vec<usize> {
    let root = (n as f64).sqrt();
    let mut ks: Vec<usize> = [0.25, 0.5, 1.0, 2.0, 4.0]
        .iter()
        .map(|f| ((root * f).round() as usize).clamp(1, n))
        .collect();
    ks.dedup();
    ks
}

/// Mean squared prediction error of one hyperparameter choice over the folds.
fn fold_mse(
    family: &LearnerFamily,
    data: &Dataset,
    folds: usize,
    h: Bandwidth,
    k: usize,
) -> Result<Option<f64>> {
    let n = data.n();
    let mut total = 0.0;
    let mut count = 0usize;
    for f in 0..folds {
        let train_idx: Vec<usize> = (0..n).filter(|i| i % folds != f).collect();
        let train = data.select(&train_idx)?;
        let kf = ((k as f64 * train.n() as f64 / n as f64).round() as usize).clamp(1, train.n());
        let learner = family.build(&train, h, kf)?;
        let m = EmpiricalModel::from_dataset(&train);
        for s in data.samples().iter().skip(f).step_by(folds) {
            let dist = match learner.contextualize(&m, &s.x) {
                Ok(d) => d,
                Err(Error::EmptyContextWindow) => return Ok(None),
                Err(e) => return Err(e),
            };
            total += dist
                .mean()
                .iter()
                .zip(&s.y)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
            count += 1;
        }
    }
    Ok(Some(total / count as f64))
}

/// Grid search of the bandwidth (and neighbor count) minimizing the
/// cross-validated squared prediction error of the learner's mean.
///
/// Grid points at which some held-out context has an empty window are dropped.
pub fn cross_validate(family: &LearnerFamily, data: &Dataset, folds: usize) -> Result<CvChoice> {
    let n = data.n();
    if folds < 2 || folds >= n {
        return Err(Error::InvalidParameter(format!(
            "need 2 <= folds < n, got folds={folds}, n={n}"
        )));
    }
    let hs = if family.tunes_bandwidth() {
        h_grid(bandwidth_rule_of_thumb(data)?.value())
    } else {
        vec![1.0]
    };
    let ks = match family.formulation {
        Formulation::Nw => vec![n],
        Formulation::Nn => k_grid(n),
    };
    let mut best: Option<CvChoice> = None;
    for &h in &hs {
        let bw = Bandwidth::new(h)?;
        for &k in &ks {
            if let Some(mse) = fold_mse(family, data, folds, bw, k)? {
                if best.is_none_or(|b| mse < b.mse) {
                    let k = (family.formulation == Formulation::Nn).then_some(k);
                    best = Some(CvChoice {
                        bandwidth: bw,
                        k,
                        mse,
                    });
                }
            }
        }
    }
    best.ok_or(Error::EmptyContextWindow)
}
