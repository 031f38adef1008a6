//! Out-of-sample evaluation and experiment sweeps over sample sizes and seeds.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::cv::{cross_validate, LearnerFamily};
use super::newsvendor::{NewsvendorModel, NewsvendorSpec};
use super::portfolio::{PortfolioModel, PortfolioSpec};
use super::{SyntheticModel, VarianceConvention};
use crate::bootstrap::{estimate_disappointment, BootstrapPlan};
use crate::engine::SolveSettings;
use crate::error::{Error, Result};
use crate::learners::{Formulation, Learner, NnLearner};
use crate::model::{expected_loss, Dataset, EmpiricalModel, Loss};
use crate::nominal::{nominal_prescribe, Prescription};
use crate::robust::{robust_prescribe, RobustConfig};

/// Independent seed for one (seed, sample size, purpose) cell.
fn cell_seed(seed: u64, n: usize, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 8) | tag);
    rng.next_u64()
}

const DATA: u64 = 0;
const RESAMPLES: u64 = 1;
const TEST: u64 = 2;

/// Mean out-of-sample cost with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OosReport {
    pub mean: f64,
    pub std_err: f64,
    /// Test sets with a nonempty context window.
    pub count: usize,
    pub empty_windows: usize,
}

/// Learner adapted to a data set of `size` samples.
///
/// Nearest-neighbors learners keep the fraction `k/n` of the training data.
fn rescaled(learner: &Learner, n_train: usize, size: usize) -> Learner {
    match learner {
        Learner::Nw(_) => learner.clone(),
        Learner::Nn(l) => {
            let k = ((l.k as f64 * size as f64 / n_train as f64).round() as usize).clamp(1, size);
            Learner::Nn(NnLearner { k, ..l.clone() })
        }
    }
}

/// Mean nominal contextual cost of decision `z` over freshly generated test sets.
#[allow(clippy::too_many_arguments)]
pub fn out_of_sample_eval<L, G>(
    z: &[f64],
    learner: &Learner,
    n_train: usize,
    loss: &L,
    model: &G,
    xbar: &[f64],
    test_sets: usize,
    size: usize,
    seed: u64,
) -> Result<OosReport>
where
    L: Loss + ?Sized,
    G: SyntheticModel + ?Sized,
{
    if test_sets == 0 || size == 0 {
        return Err(Error::InvalidParameter(
            "test sets and their size must be positive".into(),
        ));
    }
    let learner = rescaled(learner, n_train, size);
    let costs: Vec<Option<f64>> = (0..test_sets)
        .into_par_iter()
        .map(|t| {
            let m = EmpiricalModel::from_dataset(&model.sample(size, seed, t as u64)?);
            match learner.contextualize(&m, xbar) {
                Ok(dist) => Ok(Some(expected_loss(loss, z, &dist)?)),
                Err(Error::EmptyContextWindow) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let vals: Vec<f64> = costs.iter().flatten().copied().collect();
    let count = vals.len();
    if count == 0 {
        return Err(Error::EmptyContextWindow);
    }
    let mean = vals.iter().sum::<f64>() / count as f64;
    let var = if count > 1 {
        vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64
    } else {
        0.0
    };
    Ok(OosReport {
        mean,
        std_err: (var / count as f64).sqrt(),
        count,
        empty_windows: test_sets - count,
    })
}

/// Robustness radii of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RadiusGrid {
    Radii(Vec<f64>),
    /// Target disappointments, calibrated per formulation and sample size.
    Targets(Vec<f64>),
}

impl RadiusGrid {
    fn configs(&self) -> Result<Vec<(RobustConfig, Option<f64>)>> {
        match self {
            RadiusGrid::Radii(rs) => rs
                .iter()
                .map(|&r| Ok((RobustConfig::with_radius(r)?, None)))
                .collect(),
            RadiusGrid::Targets(bs) => bs
                .iter()
                .map(|&b| Ok((RobustConfig::with_target(b)?, Some(b))))
                .collect(),
        }
    }
}

/// Bootstrap-disappointment sweep of the newsvendor problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewsvendorSweep {
    pub n_grid: Vec<usize>,
    pub radii: RadiusGrid,
    pub m: usize,
    pub seeds: Vec<u64>,
    pub convention: VarianceConvention,
    pub folds: usize,
    pub formulations: Vec<Formulation>,
    pub settings: SolveSettings,
}

impl Default for NewsvendorSweep {
    fn default() -> Self {
        Self {
            n_grid: vec![50, 100, 200],
            radii: RadiusGrid::Targets(vec![0.1, 0.01]),
            m: 2000,
            seeds: (0..10).collect(),
            convention: VarianceConvention::Variance,
            folds: 10,
            formulations: vec![Formulation::Nw, Formulation::Nn],
            settings: SolveSettings::default(),
        }
    }
}

/// One disappointment measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub formulation: Formulation,
    pub robust: bool,
    pub n: usize,
    pub r: f64,
    pub target_b: Option<f64>,
    pub empirical_b: f64,
    pub bound_b: f64,
    pub m: usize,
    pub seed: u64,
    pub empty_windows: usize,
}

fn tuned_learner(formulation: Formulation, data: &Dataset, folds: usize) -> Result<Learner> {
    let family = LearnerFamily::of(formulation);
    let choice = cross_validate(&family, data, folds)?;
    family.build(data, choice.bandwidth, choice.k.unwrap_or(data.n()))
}

/// Nominal and robust newsvendor prescriptions with their bootstrap disappointment.
pub fn newsvendor_sweep(cfg: &NewsvendorSweep) -> Result<Vec<SweepRow>> {
    let model = NewsvendorModel::new(cfg.convention);
    let loss = NewsvendorSpec::default().loss();
    let xbar = model.context();
    let robust_cfgs = cfg.radii.configs()?;
    let cells: Vec<(usize, u64)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s)))
        .collect();
    let rows: Vec<Vec<SweepRow>> = cells
        .par_iter()
        .map(|&(n, seed)| {
            let data = model.sample(n, cell_seed(seed, n, DATA), 0)?;
            let m = EmpiricalModel::from_dataset(&data);
            let plan = BootstrapPlan::new(cfg.m, cell_seed(seed, n, RESAMPLES))?;
            let mut out = Vec::new();
            for &f in &cfg.formulations {
                let learner = tuned_learner(f, &data, cfg.folds)?;
                let mut runs: Vec<(Prescription, bool, Option<f64>)> = vec![(
                    nominal_prescribe(&learner, &loss, &m, &xbar, &cfg.settings)?,
                    false,
                    None,
                )];
                for (rc, b) in &robust_cfgs {
                    runs.push((
                        robust_prescribe(rc, &learner, &loss, &m, &xbar, &cfg.settings)?,
                        true,
                        *b,
                    ));
                }
                for (p, robust, target_b) in runs {
                    let rep = estimate_disappointment(&p, &learner, &loss, &data, &xbar, &plan)?;
                    out.push(SweepRow {
                        formulation: f,
                        robust,
                        n,
                        r: p.radius,
                        target_b,
                        empirical_b: rep.empirical_b,
                        bound_b: rep.bound_b,
                        m: cfg.m,
                        seed,
                        empty_windows: rep.empty_windows,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Out-of-sample cost sweep of the portfolio problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortfolioSweep {
    pub n_grid: Vec<usize>,
    pub target_b: f64,
    pub seeds: Vec<u64>,
    pub test_sets: usize,
    pub test_size: usize,
    pub convention: VarianceConvention,
    pub folds: usize,
    pub formulations: Vec<Formulation>,
    pub settings: SolveSettings,
}

impl Default for PortfolioSweep {
    fn default() -> Self {
        Self {
            n_grid: vec![20, 50, 100, 200],
            target_b: 0.01,
            seeds: (0..10).collect(),
            test_sets: 200,
            test_size: 200,
            convention: VarianceConvention::Variance,
            folds: 10,
            formulations: vec![Formulation::Nw, Formulation::Nn],
            settings: SolveSettings::default(),
        }
    }
}

/// Out-of-sample cost of one prescription.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortfolioRow {
    pub formulation: Formulation,
    pub robust: bool,
    pub n: usize,
    pub seed: u64,
    pub r: f64,
    pub train_cost: f64,
    pub oos_mean: f64,
    pub oos_se: f64,
}

/// Nominal and robust portfolio prescriptions with their out-of-sample cost.
///
/// Nominal and robust decisions of a cell are scored on the same test sets.
pub fn portfolio_sweep(cfg: &PortfolioSweep) -> Result<Vec<PortfolioRow>> {
    let model = PortfolioModel::new(cfg.convention);
    let loss = PortfolioSpec::default().loss();
    let xbar = model.context();
    let robust_cfg = RobustConfig::with_target(cfg.target_b)?;
    let cells: Vec<(usize, u64)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s)))
        .collect();
    let rows: Vec<Vec<PortfolioRow>> = cells
        .par_iter()
        .map(|&(n, seed)| {
            let data = model.sample(n, cell_seed(seed, n, DATA), 0)?;
            let m = EmpiricalModel::from_dataset(&data);
            let test_seed = cell_seed(seed, n, TEST);
            let mut out = Vec::new();
            for &f in &cfg.formulations {
                let learner = tuned_learner(f, &data, cfg.folds)?;
                let nominal = nominal_prescribe(&learner, &loss, &m, &xbar, &cfg.settings)?;
                let robust =
                    robust_prescribe(&robust_cfg, &learner, &loss, &m, &xbar, &cfg.settings)?;
                for (p, is_robust) in [(nominal, false), (robust, true)] {
                    let oos = out_of_sample_eval(
                        &p.z,
                        &learner,
                        n,
                        &loss,
                        &model,
                        &xbar,
                        cfg.test_sets,
                        cfg.test_size,
                        test_seed,
                    )?;
                    out.push(PortfolioRow {
                        formulation: f,
                        robust: is_robust,
                        n,
                        seed,
                        r: p.radius,
                        train_cost: p.cost,
                        oos_mean: oos.mean,
                        oos_se: oos.std_err,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}
