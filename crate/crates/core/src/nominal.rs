//! Nominal prescriptions: minimize the expected loss under a learned distribution.

use serde::Serialize;

use crate::engine::{minimize_convex, Minimum, SolveSettings, SolveStatus};
use crate::error::Result;
use crate::learners::Learner;
use crate::model::{
    expected_loss, expected_loss_and_subgradient, ContextualDistribution, EmpiricalModel, Loss,
};

/// Solver bookkeeping attached to a prescription.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub final_step: f64,
    pub status: SolveStatus,
}

impl From<&Minimum> for SolveDiagnostics {
    fn from(m: &Minimum) -> Self {
        Self {
            iterations: m.iterations,
            final_step: m.final_step,
            status: m.status,
        }
    }
}

/// A decision with its budgeted training cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prescription {
    pub z: Vec<f64>,
    /// Nominal or robust training cost at `z`.
    pub cost: f64,
    /// Robustness radius used (zero for nominal prescriptions).
    pub radius: f64,
    /// Active neighborhood size for nearest-neighbors formulations.
    pub active_j: Option<usize>,
    pub diagnostics: SolveDiagnostics,
}

/// Minimizes the expected loss under a fixed label distribution.
pub fn prescribe_distribution<L: Loss + ?Sized>(
    loss: &L,
    dist: &ContextualDistribution,
    settings: &SolveSettings,
) -> Result<Prescription> {
    let blocks = loss.blocks(&dist.labels);
    let min = minimize_convex(
        |z| expected_loss_and_subgradient(loss, z, dist),
        &blocks,
        settings,
    )?;
    let cost = expected_loss(loss, &min.x, dist)?;
    Ok(Prescription {
        z: min.x.clone(),
        cost,
        radius: 0.0,
        active_j: None,
        diagnostics: SolveDiagnostics::from(&min),
    })
}

/// Sample average prescription over raw training labels.
pub fn saa_prescribe<L: Loss + ?Sized>(
    loss: &L,
    labels: &[Vec<f64>],
    settings: &SolveSettings,
) -> Result<Prescription> {
    prescribe_distribution(
        loss,
        &ContextualDistribution::uniform(labels.to_vec())?,
        settings,
    )
}

/// Prescription minimizing the learner's predicted cost at `xbar`.
pub fn nominal_prescribe<L: Loss + ?Sized>(
    learner: &Learner,
    loss: &L,
    m: &EmpiricalModel,
    xbar: &[f64],
    settings: &SolveSettings,
) -> Result<Prescription> {
    let dist = learner.contextualize(m, xbar)?;
    let mut p = prescribe_distribution(loss, &dist, settings)?;
    if let Learner::Nn(l) = learner {
        p.active_j = Some(l.chain(m, xbar)?.select(l.k, m.n())?);
    }
    Ok(p)
}
