//! Bootstrap resampling and empirical disappointment of prescriptions.
//!
//! A prescription disappoints on a resample when its nominal cost under the
//! learner fitted to the resample exceeds the budgeted training cost. Each
//! resample draws from its own stream of a counter-based generator, so
//! results do not depend on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::divergences::ModelDistance;
use crate::error::{Error, Result};
use crate::learners::{Formulation, Learner};
use crate::model::{expected_loss, Dataset, EmpiricalModel, Loss};
use crate::nominal::Prescription;
use crate::robust::{min_radii, nn_bound, nw_bound, MinRadii};

/// Number of resamples and the base seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapPlan {
    pub m: usize,
    pub seed: u64,
    /// Keep the per-resample nominal costs in the report.
    pub keep_costs: bool,
}

impl BootstrapPlan {
    pub fn new(m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter(
                "at least one resample is required".into(),
            ));
        }
        Ok(Self {
            m,
            seed,
            keep_costs: false,
        })
    }
}

/// Outcome of a disappointment estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisappointmentReport {
    pub empirical_b: f64,
    /// Theoretical bound for the prescription's radius (bootstrap distance).
    pub bound_b: f64,
    pub m: usize,
    pub seed: u64,
    /// Resamples with an empty context window, counted as disappointments.
    pub empty_windows: usize,
    /// Per-resample nominal costs (`NaN` for empty windows), if requested.
    pub costs: Option<Vec<f64>>,
}

fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Indices of `n` uniform draws with replacement from `0..n`.
pub fn resample_indices(n: usize, seed: u64, index: u64) -> Vec<usize> {
    let mut rng = stream_rng(seed, index);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// One bootstrap resample of the training data.
pub fn resample(data: &Dataset, seed: u64) -> Dataset {
    resample_stream(data, seed, 0)
}

/// The `index`-th resample of a plan with base `seed`.
pub fn resample_stream(data: &Dataset, seed: u64, index: u64) -> Dataset {
    let idx = resample_indices(data.n(), seed, index);
    data.select(&idx).expect("resample indices are in range")
}

/// Theoretical disappointment bound of a formulation at radius `r`.
pub fn bound_curve(
    formulation: Formulation,
    r: f64,
    n: usize,
    radii: Option<&MinRadii>,
) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "radius {r} must be nonnegative"
        )));
    }
    match formulation {
        Formulation::Nw => Ok(nw_bound(r, n)),
        Formulation::Nn => {
            let radii = radii.ok_or_else(|| {
                Error::InvalidParameter("nearest-neighbors bound needs minimum radii".into())
            })?;
            Ok(nn_bound(r, n, radii))
        }
    }
}

enum Outcome {
    Cost(f64),
    Empty,
}

/// Fraction of bootstrap resamples on which the prescription disappoints.
pub fn estimate_disappointment<L: Loss + ?Sized>(
    prescription: &Prescription,
    learner: &Learner,
    loss: &L,
    data: &Dataset,
    xbar: &[f64],
    plan: &BootstrapPlan,
) -> Result<DisappointmentReport> {
    let n = data.n();
    let bound_b = match learner {
        Learner::Nw(_) => nw_bound(prescription.radius, n),
        Learner::Nn(l) => {
            let m = EmpiricalModel::from_dataset(data);
            nn_bound(
                prescription.radius,
                n,
                &min_radii(&ModelDistance::Bootstrap, l, &m, xbar)?,
            )
        }
    };
    let z = &prescription.z;
    let outcomes: Vec<Outcome> = (0..plan.m)
        .into_par_iter()
        .map(|b| {
            let mb = EmpiricalModel::from_dataset(&resample_stream(data, plan.seed, b as u64));
            match learner.contextualize(&mb, xbar) {
                Ok(dist) => Ok(Outcome::Cost(expected_loss(loss, z, &dist)?)),
                Err(Error::EmptyContextWindow) => Ok(Outcome::Empty),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let mut disappointed = 0;
    let mut empty_windows = 0;
    for o in &outcomes {
        match o {
            Outcome::Cost(c) if *c > prescription.cost => disappointed += 1,
            Outcome::Cost(_) => {}
            Outcome::Empty => {
                disappointed += 1;
                empty_windows += 1;
            }
        }
    }
    let costs = plan.keep_costs.then(|| {
        outcomes
            .iter()
            .map(|o| match o {
                Outcome::Cost(c) => *c,
                Outcome::Empty => f64::NAN,
            })
            .collect()
    });
    Ok(DisappointmentReport {
        empirical_b: disappointed as f64 / plan.m as f64,
        bound_b,
        m: plan.m,
        seed: plan.seed,
        empty_windows,
        costs,
    })
}

/// One row of the disappointment CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisappointmentRow {
    pub n: usize,
    pub r: f64,
    pub empirical_b: f64,
    pub bound_b: f64,
    pub m: usize,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SolveStatus;
    use crate::learners::NwLearner;
    use crate::model::FnLoss;
    use crate::nominal::SolveDiagnostics;
    use crate::smoothers::{Bandwidth, Smoother};

    fn data(n: usize) -> Dataset {
        Dataset::from_rows(
            (0..n).map(|i| vec![i as f64]).collect(),
            (0..n).map(|i| vec![(i % 7) as f64]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_sample_and_determinism() {
        let d = data(1);
        assert_eq!(resample(&d, 9), d);
        let d = data(30);
        assert_eq!(resample_stream(&d, 4, 7), resample_stream(&d, 4, 7));
        assert_ne!(resample_stream(&d, 4, 7), resample_stream(&d, 4, 8));
    }

    #[test]
    fn multiplicities_average_one() {
        let n = 10;
        let reps = 10_000;
        let mut counts = vec![0usize; n];
        for b in 0..reps {
            for i in resample_indices(n, 42, b) {
                counts[i] += 1;
            }
        }
        for c in counts {
            let mean = c as f64 / reps as f64;
            assert!((mean - 1.0).abs() < 0.05, "{mean}");
        }
    }

    #[test]
    fn infinite_budget_never_disappoints() {
        let d = data(20);
        let loss = FnLoss {
            dim: 1,
            value: |z: &[f64], y: &[f64]| (z[0] - y[0]).abs(),
            grad: |z: &[f64], y: &[f64], g: &mut [f64]| g[0] = (z[0] - y[0]).signum(),
            radius: 10.0,
        };
        let p = Prescription {
            z: vec![3.0],
            cost: f64::INFINITY,
            radius: 0.0,
            active_j: None,
            diagnostics: SolveDiagnostics {
                iterations: 0,
                final_step: 0.0,
                status: SolveStatus::Trivial,
            },
        };
        let l = Learner::Nw(NwLearner::new(
            Smoother::Gaussian,
            Bandwidth::new(3.0).unwrap(),
        ));
        let rep = estimate_disappointment(
            &p,
            &l,
            &loss,
            &d,
            &[10.0],
            &BootstrapPlan::new(50, 1).unwrap(),
        )
        .unwrap();
        assert_eq!(rep.empirical_b, 0.0);
        assert_eq!(rep.bound_b, 1.0);
    }

    #[test]
    fn bound_examples() {
        assert!(
            (bound_curve(Formulation::Nw, 100f64.ln() / 200.0, 200, None).unwrap() - 0.01).abs()
                < 1e-15
        );
        assert_eq!(bound_curve(Formulation::Nw, 0.0, 200, None).unwrap(), 1.0);
        let radii = MinRadii {
            r_star: vec![0.0; 4],
        };
        let b = bound_curve(Formulation::Nn, 0.2, 10, Some(&radii)).unwrap();
        assert!((b - 4.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert!(bound_curve(Formulation::Nn, 0.2, 10, None).is_err());
    }
}
