//! Robust costs and prescriptions over divergence balls around the training model.
//!
//! With the bootstrap (relative-entropy) distance, costs are computed from a
//! low-dimensional dual; other f-divergences go through a primal barrier
//! solver. Nearest-neighbors costs are the maximum of partial costs over the
//! neighborhood index `j`, where partial costs of neighborhoods the ball
//! cannot reach are reported as `-inf`.

mod primal;
mod tilt;

use serde::Serialize;

use crate::divergences::ModelDistance;
use crate::engine::{minimize_convex, SolveSettings};
use crate::error::{Error, Result};
use crate::learners::{Formulation, Learner, NeighborhoodChain, NnLearner, NwLearner};
use crate::model::{EmpiricalModel, Loss};
use crate::nominal::{Prescription, SolveDiagnostics};
use primal::{min_block_divergence, Blk, PrimalRatio};
use tilt::{block_projection, Pt, Shape, TiltProblem, TiltSolution, FEAS_TOL};

/// How the robustness radius is specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RadiusSpec {
    Radius(f64),
    /// Target bootstrap disappointment, converted to a radius per formulation.
    TargetDisappointment(f64),
}

/// Distance and radius of the ambiguity set.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustConfig {
    pub distance: ModelDistance,
    pub radius: RadiusSpec,
}

impl RobustConfig {
    /// Bootstrap-distance ball of the given radius.
    pub fn with_radius(r: f64) -> Result<Self> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "radius {r} must be finite and nonnegative"
            )));
        }
        Ok(Self {
            distance: ModelDistance::Bootstrap,
            radius: RadiusSpec::Radius(r),
        })
    }

    /// Bootstrap-distance ball calibrated for a target disappointment `b ∈ (0, 1]`.
    pub fn with_target(b: f64) -> Result<Self> {
        if !(b > 0.0 && b <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "target disappointment {b} must lie in (0, 1]"
            )));
        }
        Ok(Self {
            distance: ModelDistance::Bootstrap,
            radius: RadiusSpec::TargetDisappointment(b),
        })
    }

    pub fn distance(mut self, d: ModelDistance) -> Self {
        self.distance = d;
        self
    }
}

/// Dual multipliers of the robust cost (zero where not applicable).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DualVars {
    pub alpha: f64,
    pub nu: f64,
    pub eta1: f64,
    pub eta2: f64,
}

/// Robust cost at a fixed decision, with the worst-case model.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustEvaluation {
    pub cost: f64,
    pub radius: f64,
    /// Worst-case model weights aligned with the training support; empty if infeasible.
    pub worst_case: Vec<f64>,
    /// Learner weights under the worst-case model, as (support index, weight).
    pub contextual: Vec<(usize, f64)>,
    pub dual: DualVars,
    pub active_j: Option<usize>,
    /// The worst case puts all learner weight on the largest losses.
    pub saturated: bool,
    /// Normalization factor of the learner under the worst-case model.
    pub s: f64,
}

impl RobustEvaluation {
    fn infeasible(radius: f64, j: usize) -> Self {
        Self {
            cost: f64::NEG_INFINITY,
            radius,
            worst_case: Vec::new(),
            contextual: Vec::new(),
            dual: DualVars::default(),
            active_j: Some(j),
            saturated: false,
            s: 0.0,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.cost > f64::NEG_INFINITY
    }

    /// The worst-case model as an empirical model on the training support.
    pub fn worst_case_model(&self, m: &EmpiricalModel) -> Result<EmpiricalModel> {
        m.reweighted(&self.worst_case)
    }

    /// Subgradient of the robust cost in the decision (Danskin's rule).
    pub fn subgradient<L: Loss + ?Sized>(
        &self,
        loss: &L,
        m: &EmpiricalModel,
        z: &[f64],
    ) -> Vec<f64> {
        let mut g = vec![0.0; z.len()];
        let mut gi = vec![0.0; z.len()];
        for &(i, p) in &self.contextual {
            loss.subgradient(z, &m.support()[i].y, &mut gi);
            for (a, b) in g.iter_mut().zip(&gi) {
                *a += p * b;
            }
        }
        g
    }
}

/// Minimum radii `r*_j` for `j = 1..=|support|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinRadii {
    pub r_star: Vec<f64>,
}

impl MinRadii {
    /// Radius needed to reach neighborhood `j` (1-based).
    pub fn get(&self, j: usize) -> f64 {
        self.r_star[j - 1]
    }

    pub fn len(&self) -> usize {
        self.r_star.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_star.is_empty()
    }
}

/// Smoother weights scaled to a maximum of one, and the log of the scale.
fn scaled_weights(ln_s: &[f64]) -> Result<(Vec<f64>, f64)> {
    let top = ln_s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::EmptyContextWindow);
    }
    Ok((ln_s.iter().map(|v| (v - top).exp()).collect(), top))
}

fn check_z<L: Loss + ?Sized>(loss: &L, z: &[f64]) -> Result<()> {
    if z.len() != loss.dim_z() {
        return Err(Error::DimensionMismatch {
            expected: loss.dim_z(),
            got: z.len(),
        });
    }
    Ok(())
}

/// Learner weights `∝ w·Q` over the given support indices.
fn contextual_weights(idx: &[usize], w: &[f64], q: &[f64]) -> (Vec<(usize, f64)>, f64) {
    let total: f64 = idx.iter().map(|&i| w[i] * q[i]).sum();
    let ctx = idx
        .iter()
        .filter(|&&i| w[i] * q[i] > 0.0)
        .map(|&i| (i, w[i] * q[i] / total))
        .collect();
    (ctx, total)
}

/// Prepared robust Nadaraya-Watson problem at one context.
pub struct NwRobust<'a> {
    m: &'a EmpiricalModel,
    w: Vec<f64>,
    ln_scale: f64,
    r: f64,
    distance: ModelDistance,
}

impl<'a> NwRobust<'a> {
    pub fn new(
        cfg: &RobustConfig,
        learner: &NwLearner,
        m: &'a EmpiricalModel,
        xbar: &[f64],
    ) -> Result<Self> {
        let (w, ln_scale) = scaled_weights(&learner.ln_smoother(m, xbar)?)?;
        let r = match cfg.radius {
            RadiusSpec::Radius(r) => r,
            RadiusSpec::TargetDisappointment(b) => {
                calibrate_radius(Formulation::Nw, b, m.n(), None)?
            }
        };
        if let ModelDistance::Wasserstein = cfg.distance {
            return Err(Error::UnsupportedDistance("wasserstein"));
        }
        Ok(Self {
            m,
            w,
            ln_scale,
            r,
            distance: cfg.distance.clone(),
        })
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn evaluate<L: Loss + ?Sized>(&self, loss: &L, z: &[f64]) -> Result<RobustEvaluation> {
        check_z(loss, z)?;
        let m = self.m;
        let idx: Vec<usize> = (0..m.len()).collect();
        let losses: Vec<f64> = m.support().iter().map(|s| loss.value(z, &s.y)).collect();
        let nominal = |cost: f64| {
            let q = m.prob().to_vec();
            let (contextual, total) = contextual_weights(&idx, &self.w, &q);
            RobustEvaluation {
                cost,
                radius: self.r,
                worst_case: q,
                contextual,
                dual: DualVars {
                    alpha: cost,
                    ..Default::default()
                },
                active_j: None,
                saturated: false,
                s: 1.0 / (total * self.ln_scale.exp()),
            }
        };
        if (0..m.len()).any(|i| self.w[i] > 0.0 && losses[i] == f64::INFINITY) {
            return Ok(nominal(f64::INFINITY));
        }
        if self.r == 0.0 {
            let (ctx, _) = contextual_weights(&idx, &self.w, m.prob());
            let cost = ctx.iter().map(|&(i, p)| p * losses[i]).sum();
            return Ok(nominal(cost));
        }
        let (q, dual, saturated, tilt_cost) = match &self.distance {
            ModelDistance::Bootstrap => {
                let pts = (0..m.len())
                    .map(|i| Pt {
                        idx: i,
                        log_m: m.prob()[i].ln(),
                        w: self.w[i],
                        loss: losses[i],
                        blk: 0,
                    })
                    .collect();
                let prob = TiltProblem {
                    pts,
                    log_mass_c: f64::NEG_INFINITY,
                    shape: Shape::Free,
                    r: self.r,
                };
                let sol = prob.solve().ok_or(Error::EmptyContextWindow)?;
                let q = scatter(&sol, &prob, m, &[]);
                (q, dual_of(&sol), sol.saturated, Some(sol.cost))
            }
            other => {
                let blk = vec![Blk::A; m.len()];
                let p = PrimalRatio {
                    gen: other.generator()?,
                    mass: m.prob(),
                    w: &self.w,
                    loss: &losses,
                    blk: &blk,
                    shape: Shape::Free,
                    r: self.r,
                };
                let (_, q) = p.solve()?.ok_or(Error::EmptyContextWindow)?;
                (q, DualVars::default(), false, None)
            }
        };
        let (contextual, total) = contextual_weights(&idx, &self.w, &q);
        let cost = match tilt_cost {
            Some(c) => c,
            None => contextual.iter().map(|&(i, p)| p * losses[i]).sum(),
        };
        Ok(RobustEvaluation {
            cost,
            radius: self.r,
            worst_case: q,
            contextual,
            dual,
            active_j: None,
            saturated,
            s: 1.0 / (total * self.ln_scale.exp()),
        })
    }
}

fn dual_of(sol: &TiltSolution) -> DualVars {
    DualVars {
        alpha: sol.alpha,
        nu: sol.nu,
        eta1: sol.eta1,
        eta2: sol.eta2,
    }
}

/// Worst-case weights on the full support from a tilt solution.
/// `c_idx` lists the support points of block C.
fn scatter(
    sol: &TiltSolution,
    prob: &TiltProblem,
    m: &EmpiricalModel,
    c_idx: &[usize],
) -> Vec<f64> {
    let mut q = vec![0.0; m.len()];
    for (p, v) in prob.pts.iter().zip(&sol.q_pts) {
        q[p.idx] = *v;
    }
    if sol.q_c > 0.0 && !c_idx.is_empty() {
        let mc: f64 = c_idx.iter().map(|&i| m.prob()[i]).sum();
        for &i in c_idx {
            q[i] = sol.q_c * m.prob()[i] / mc;
        }
    }
    let total: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= total);
    q
}

/// Prepared robust nearest-neighbors problem at one context.
pub struct NnRobust<'a> {
    m: &'a EmpiricalModel,
    chain: NeighborhoodChain,
    w: Vec<f64>,
    ln_scale: f64,
    /// Suffix masses in chain order: `tail[j]` is the mass beyond the j nearest points.
    tail: Vec<f64>,
    j0: usize,
    u: f64,
    l: f64,
    radii: MinRadii,
    r: f64,
    distance: ModelDistance,
}

impl<'a> NnRobust<'a> {
    pub fn new(
        cfg: &RobustConfig,
        learner: &NnLearner,
        m: &'a EmpiricalModel,
        xbar: &[f64],
    ) -> Result<Self> {
        if let ModelDistance::Wasserstein = cfg.distance {
            return Err(Error::UnsupportedDistance("wasserstein"));
        }
        let chain = learner.chain(m, xbar)?;
        let n = m.n();
        let j0 = chain.select(learner.k, n)?;
        let ln_s = learner.ln_smoother(m, xbar)?;
        let (w, ln_scale) = scaled_weights(&ln_s)?;
        if chain.prefix(j0).iter().all(|&i| w[i] == 0.0) {
            return Err(Error::EmptyContextWindow);
        }
        let mut tail = vec![0.0; m.len() + 1];
        for pos in (0..m.len()).rev() {
            tail[pos] = tail[pos + 1] + m.prob()[chain.order()[pos]];
        }
        let u = (learner.k - 1) as f64 / n as f64;
        let l = learner.k as f64 / n as f64;
        let radii = radii_for(&cfg.distance, m, &chain, &tail, u, l)?;
        let r = match cfg.radius {
            RadiusSpec::Radius(r) => r,
            RadiusSpec::TargetDisappointment(b) => {
                calibrate_radius(Formulation::Nn, b, n, Some(&radii))?
            }
        };
        Ok(Self {
            m,
            chain,
            w,
            ln_scale,
            tail,
            j0,
            u,
            l,
            radii,
            r,
            distance: cfg.distance.clone(),
        })
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn chain(&self) -> &NeighborhoodChain {
        &self.chain
    }

    pub fn min_radii(&self) -> &MinRadii {
        &self.radii
    }

    /// Neighborhood index selected by the training model.
    pub fn nominal_j(&self) -> usize {
        self.j0
    }

    fn losses<L: Loss + ?Sized>(&self, loss: &L, z: &[f64], upto: usize) -> Vec<f64> {
        let mut out = vec![f64::NAN; self.m.len()];
        for &i in self.chain.prefix(upto) {
            out[i] = loss.value(z, &self.m.support()[i].y);
        }
        out
    }

    /// Partial robust cost for neighborhood `j`; `-inf` when the ball cannot reach it.
    pub fn partial<L: Loss + ?Sized>(
        &self,
        loss: &L,
        z: &[f64],
        j: usize,
    ) -> Result<RobustEvaluation> {
        check_z(loss, z)?;
        if j == 0 || j > self.m.len() {
            return Err(Error::InvalidParameter(format!(
                "neighborhood index {j} out of range"
            )));
        }
        let losses = self.losses(loss, z, j);
        self.partial_with(&losses, j)
    }

    fn partial_with(&self, losses: &[f64], j: usize) -> Result<RobustEvaluation> {
        let m = self.m;
        let prefix = self.chain.prefix(j);
        let feasible = if self.r == 0.0 {
            j == self.j0
        } else {
            self.r > self.radii.get(j)
        };
        if !feasible || prefix.iter().all(|&i| self.w[i] == 0.0) {
            return Ok(RobustEvaluation::infeasible(self.r, j));
        }
        let ln_scale = self.ln_scale.exp();
        if prefix
            .iter()
            .any(|&i| self.w[i] > 0.0 && losses[i] == f64::INFINITY)
        {
            let (contextual, total) = contextual_weights(prefix, &self.w, m.prob());
            return Ok(RobustEvaluation {
                cost: f64::INFINITY,
                radius: self.r,
                worst_case: m.prob().to_vec(),
                contextual,
                dual: DualVars::default(),
                active_j: Some(j),
                saturated: false,
                s: 1.0 / (total * ln_scale),
            });
        }
        if self.r == 0.0 {
            let q = m.prob().to_vec();
            let (contextual, total) = contextual_weights(prefix, &self.w, &q);
            let cost = contextual.iter().map(|&(i, p)| p * losses[i]).sum();
            return Ok(RobustEvaluation {
                cost,
                radius: 0.0,
                worst_case: q,
                contextual,
                dual: DualVars {
                    alpha: cost,
                    ..Default::default()
                },
                active_j: Some(j),
                saturated: false,
                s: 1.0 / (total * ln_scale),
            });
        }
        let c_idx = &self.chain.order()[j..];
        let (q, dual, saturated, tilt_cost) = match &self.distance {
            ModelDistance::Bootstrap => {
                let pts = prefix
                    .iter()
                    .enumerate()
                    .map(|(pos, &i)| Pt {
                        idx: i,
                        log_m: m.prob()[i].ln(),
                        w: self.w[i],
                        loss: losses[i],
                        blk: usize::from(pos + 1 == j),
                    })
                    .collect();
                let prob = TiltProblem {
                    pts,
                    log_mass_c: self.tail[j].ln(),
                    shape: Shape::Nn {
                        u: self.u,
                        l: self.l,
                    },
                    r: self.r,
                };
                let Some(sol) = prob.solve() else {
                    return Ok(RobustEvaluation::infeasible(self.r, j));
                };
                (
                    scatter(&sol, &prob, m, c_idx),
                    dual_of(&sol),
                    sol.saturated,
                    Some(sol.cost),
                )
            }
            other => {
                let ranks = self.chain.ranks();
                let blk: Vec<Blk> = ranks
                    .iter()
                    .map(|&pos| {
                        if pos + 1 < j {
                            Blk::A
                        } else if pos + 1 == j {
                            Blk::B
                        } else {
                            Blk::C
                        }
                    })
                    .collect();
                let w: Vec<f64> = (0..m.len())
                    .map(|i| if blk[i] == Blk::C { 0.0 } else { self.w[i] })
                    .collect();
                let ls: Vec<f64> = (0..m.len())
                    .map(|i| if blk[i] == Blk::C { 0.0 } else { losses[i] })
                    .collect();
                let p = PrimalRatio {
                    gen: other.generator()?,
                    mass: m.prob(),
                    w: &w,
                    loss: &ls,
                    blk: &blk,
                    shape: Shape::Nn {
                        u: self.u,
                        l: self.l,
                    },
                    r: self.r,
                };
                match p.solve()? {
                    Some((_, q)) => (q, DualVars::default(), false, None),
                    None => return Ok(RobustEvaluation::infeasible(self.r, j)),
                }
            }
        };
        let (contextual, total) = contextual_weights(prefix, &self.w, &q);
        let cost = match tilt_cost {
            Some(c) => c,
            None => contextual.iter().map(|&(i, p)| p * losses[i]).sum(),
        };
        Ok(RobustEvaluation {
            cost,
            radius: self.r,
            worst_case: q,
            contextual,
            dual,
            active_j: Some(j),
            saturated,
            s: 1.0 / (total * ln_scale),
        })
    }

    /// Robust cost: the largest partial cost over all reachable neighborhoods.
    pub fn evaluate<L: Loss + ?Sized>(&self, loss: &L, z: &[f64]) -> Result<RobustEvaluation> {
        check_z(loss, z)?;
        let losses = self.losses(loss, z, self.m.len());
        let mut best: Option<RobustEvaluation> = None;
        for j in 1..=self.m.len() {
            let e = self.partial_with(&losses, j)?;
            if e.is_feasible() && best.as_ref().is_none_or(|b| e.cost > b.cost) {
                best = Some(e);
            }
        }
        Ok(best.expect("the training neighborhood is always reachable"))
    }
}

fn radii_for(
    distance: &ModelDistance,
    m: &EmpiricalModel,
    chain: &NeighborhoodChain,
    tail: &[f64],
    u: f64,
    l: f64,
) -> Result<MinRadii> {
    let shape = Shape::Nn { u, l };
    let mut r_star = Vec::with_capacity(m.len());
    for (j, &outside) in tail.iter().enumerate().take(m.len() + 1).skip(1) {
        let masses = [chain.mass(j - 1), m.prob()[chain.order()[j - 1]], outside];
        if masses[0] <= u + FEAS_TOL && masses[0] + masses[1] >= l - FEAS_TOL {
            r_star.push(0.0);
            continue;
        }
        let v = match distance {
            ModelDistance::Bootstrap => {
                block_projection(masses.map(f64::ln), shape).map(|(_, v)| v)
            }
            other => min_block_divergence(&other.generator()?, masses, shape)?.map(|(_, v)| v),
        };
        r_star.push(v.unwrap_or(f64::INFINITY).max(0.0));
    }
    Ok(MinRadii { r_star })
}

/// Minimum radii of all neighborhoods of the nearest-neighbors learner.
pub fn min_radii(
    distance: &ModelDistance,
    learner: &NnLearner,
    m: &EmpiricalModel,
    xbar: &[f64],
) -> Result<MinRadii> {
    let cfg = RobustConfig {
        distance: distance.clone(),
        radius: RadiusSpec::Radius(0.0),
    };
    Ok(NnRobust::new(&cfg, learner, m, xbar)?.radii)
}

/// Theoretical disappointment bound of the Nadaraya-Watson formulation.
pub fn nw_bound(r: f64, n: usize) -> f64 {
    (-(n as f64) * r).exp()
}

/// Theoretical disappointment bound of the nearest-neighbors formulation.
pub fn nn_bound(r: f64, n: usize, radii: &MinRadii) -> f64 {
    radii
        .r_star
        .iter()
        .map(|&rs| (-(n as f64) * r.max(rs)).exp())
        .sum()
}

/// Radius guaranteeing bootstrap disappointment at most `target_b`.
///
/// Nadaraya-Watson: `ln(1/b)/n`. Nearest neighbors: the smallest radius
/// whose bound [`nn_bound`] is at most `b`, by bisection.
pub fn calibrate_radius(
    formulation: Formulation,
    target_b: f64,
    n: usize,
    radii: Option<&MinRadii>,
) -> Result<f64> {
    if !(target_b > 0.0 && target_b <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target disappointment {target_b} must lie in (0, 1]"
        )));
    }
    if n == 0 {
        return Err(Error::EmptyData);
    }
    match formulation {
        Formulation::Nw => Ok((1.0 / target_b).ln() / n as f64),
        Formulation::Nn => {
            let radii = radii.ok_or_else(|| {
                Error::InvalidParameter("nearest-neighbors calibration needs minimum radii".into())
            })?;
            if nn_bound(0.0, n, radii) <= target_b {
                return Ok(0.0);
            }
            let (mut lo, mut hi) = (0.0, (radii.len() as f64 / target_b).ln() / n as f64);
            assert!(nn_bound(hi, n, radii) <= target_b * (1.0 + 1e-12));
            while hi - lo > 1e-15 * hi.max(1e-300) {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if nn_bound(mid, n, radii) <= target_b {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok(hi)
        }
    }
}

/// Robust Nadaraya-Watson cost at decision `z`.
pub fn robust_nw_cost<L: Loss + ?Sized>(
    cfg: &RobustConfig,
    learner: &NwLearner,
    loss: &L,
    m: &EmpiricalModel,
    xbar: &[f64],
    z: &[f64],
) -> Result<RobustEvaluation> {
    NwRobust::new(cfg, learner, m, xbar)?.evaluate(loss, z)
}

/// Partial robust nearest-neighbors cost for neighborhood `j`.
pub fn robust_nn_partial_cost<L: Loss + ?Sized>(
    cfg: &RobustConfig,
    learner: &NnLearner,
    loss: &L,
    m: &EmpiricalModel,
    xbar: &[f64],
    j: usize,
    z: &[f64],
) -> Result<RobustEvaluation> {
    NnRobust::new(cfg, learner, m, xbar)?.partial(loss, z, j)
}

/// Robust nearest-neighbors cost at decision `z`.
pub fn robust_nn_cost<L: Loss + ?Sized>(
    cfg: &RobustConfig,
    learner: &NnLearner,
    loss: &L,
    m: &EmpiricalModel,
    xbar: &[f64],
    z: &[f64],
) -> Result<RobustEvaluation> {
    NnRobust::new(cfg, learner, m, xbar)?.evaluate(loss, z)
}

/// Prepared robust problem of either formulation.
pub enum RobustProblem<'a> {
    Nw(NwRobust<'a>),
    Nn(NnRobust<'a>),
}

impl<'a> RobustProblem<'a> {
    pub fn new(
        cfg: &RobustConfig,
        learner: &Learner,
        m: &'a EmpiricalModel,
        xbar: &[f64],
    ) -> Result<Self> {
        Ok(match learner {
            Learner::Nw(l) => RobustProblem::Nw(NwRobust::new(cfg, l, m, xbar)?),
            Learner::Nn(l) => RobustProblem::Nn(NnRobust::new(cfg, l, m, xbar)?),
        })
    }

    pub fn radius(&self) -> f64 {
        match self {
            RobustProblem::Nw(p) => p.radius(),
            RobustProblem::Nn(p) => p.radius(),
        }
    }

    pub fn evaluate<L: Loss + ?Sized>(&self, loss: &L, z: &[f64]) -> Result<RobustEvaluation> {
        match self {
            RobustProblem::Nw(p) => p.evaluate(loss, z),
            RobustProblem::Nn(p) => p.evaluate(loss, z),
        }
    }

    fn model(&self) -> &EmpiricalModel {
        match self {
            RobustProblem::Nw(p) => p.m,
            RobustProblem::Nn(p) => p.m,
        }
    }

    /// Minimizes the robust cost over the decision set.
    pub fn prescribe<L: Loss + ?Sized>(
        &self,
        loss: &L,
        settings: &SolveSettings,
    ) -> Result<Prescription> {
        let m = self.model();
        let labels: Vec<Vec<f64>> = m.support().iter().map(|s| s.y.clone()).collect();
        let blocks = loss.blocks(&labels);
        let min = minimize_convex(
            |z| {
                let e = self.evaluate(loss, z)?;
                let g = e.subgradient(loss, m, z);
                Ok((e.cost, g))
            },
            &blocks,
            settings,
        )?;
        let e = self.evaluate(loss, &min.x)?;
        Ok(Prescription {
            z: min.x.clone(),
            cost: e.cost,
            radius: self.radius(),
            active_j: e.active_j,
            diagnostics: SolveDiagnostics::from(&min),
        })
    }
}

/// Robust prescription minimizing the worst-case learner cost at `xbar`.
pub fn robust_prescribe<L: Loss + ?Sized>(
    cfg: &RobustConfig,
    learner: &Learner,
    loss: &L,
    m: &EmpiricalModel,
    xbar: &[f64],
    settings: &SolveSettings,
) -> Result<Prescription> {
    RobustProblem::new(cfg, learner, m, xbar)?.prescribe(loss, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::ProximityFn;
    use crate::model::{Dataset, FnLoss};
    use crate::smoothers::{Bandwidth, Smoother};

    fn identity_loss() -> impl Loss {
        FnLoss {
            dim: 1,
            value: |_: &[f64], y: &[f64]| y[0],
            grad: |_: &[f64], _: &[f64], g: &mut [f64]| g[0] = 0.0,
            radius: 1.0,
        }
    }

    fn model(points: &[(f64, f64)]) -> EmpiricalModel {
        let d = Dataset::from_rows(
            points.iter().map(|p| vec![p.0]).collect(),
            points.iter().map(|p| vec![p.1]).collect(),
        )
        .unwrap();
        EmpiricalModel::from_dataset(&d)
    }

    #[test]
    fn nw_two_labels_at_ln2() {
        let m = model(&[(0.0, 0.0), (1.0, 1.0)]);
        let l = NwLearner::new(Smoother::Naive, Bandwidth::new(1.0).unwrap());
        let e = robust_nw_cost(
            &RobustConfig::with_radius(2f64.ln()).unwrap(),
            &l,
            &identity_loss(),
            &m,
            &[0.0],
            &[0.0],
        )
        .unwrap();
        assert_eq!(e.cost, 1.0);
        assert!(e.saturated);
        let wc = e.worst_case_model(&m).unwrap();
        assert_eq!(wc.len(), 1);
    }

    #[test]
    fn nw_zero_radius_is_nominal() {
        let m = model(&[(0.0, 0.0), (1.0, 1.0), (0.5, 4.0)]);
        let l = NwLearner::new(Smoother::Gaussian, Bandwidth::new(0.7).unwrap());
        let e = robust_nw_cost(
            &RobustConfig::with_radius(0.0).unwrap(),
            &l,
            &identity_loss(),
            &m,
            &[0.2],
            &[0.0],
        )
        .unwrap();
        let d = l.contextualize(&m, &[0.2]).unwrap();
        let nominal: f64 = d.labels.iter().zip(&d.weights).map(|(y, w)| y[0] * w).sum();
        assert!((e.cost - nominal).abs() < 1e-12);
    }

    #[test]
    fn nn_radii_examples() {
        let prox = ProximityFn::squared_euclidean();
        let m = model(&[(0.0, 0.0), (1.0, 1.0)]);
        let h = Bandwidth::new(1.0).unwrap();
        let r1 = min_radii(
            &ModelDistance::Bootstrap,
            &NnLearner::new(Smoother::Naive, h, 1, prox.clone()),
            &m,
            &[0.0],
        )
        .unwrap();
        assert_eq!(r1.get(1), 0.0);
        let r2 = min_radii(
            &ModelDistance::Bootstrap,
            &NnLearner::new(Smoother::Naive, h, 2, prox),
            &m,
            &[0.0],
        )
        .unwrap();
        assert!((r2.get(1) - 2f64.ln()).abs() < 1e-12);
        assert_eq!(r2.get(2), 0.0);
    }

    #[test]
    fn calibration() {
        let r = calibrate_radius(Formulation::Nw, 0.01, 100, None).unwrap();
        assert!((r - 0.046052).abs() < 1e-6);
        assert_eq!(
            calibrate_radius(Formulation::Nw, 1.0, 100, None).unwrap(),
            0.0
        );
        assert!((nw_bound((100f64).ln() / 200.0, 200) - 0.01).abs() < 1e-15);
        assert_eq!(nw_bound(0.0, 50), 1.0);
        let radii = MinRadii {
            r_star: vec![0.0, 0.02, 0.3, 0.05],
        };
        let n = 40;
        let b = 0.05;
        let r = calibrate_radius(Formulation::Nn, b, n, Some(&radii)).unwrap();
        assert!(nn_bound(r, n, &radii) <= b);
        assert!(nn_bound(r - 1e-10, n, &radii) > b);
        let zeros = MinRadii {
            r_star: vec![0.0; 3],
        };
        assert!((nn_bound(0.1, 10, &zeros) - 3.0 * (-1.0f64).exp()).abs() < 1e-15);
    }
}
