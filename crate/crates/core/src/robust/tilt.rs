//! Relative-entropy dual of the robust ratio cost.
//!
//! The robust cost is the largest value of `Σ w L Q / Σ w Q` over models `Q`
//! within relative entropy `r` of the training model, optionally restricted
//! by the two prefix-mass constraints of the nearest-neighbors learner.
//! Support points fall in three blocks: `A` (the j-1 nearest points), `B`
//! (the j-th point) and `C` (the rest, outside the ratio). For a multiplier
//! `ν` the inner supremum tilts the weights inside each block by
//! `exp(w (L - α) / ν)` and projects the block masses onto the constraint
//! polytope; the block problem has a closed-form solution on one of four
//! faces. The cost is `min_ν α*(ν)` where `α*(ν)` is the root in `α` of a
//! convex decreasing function.

use crate::engine::{brent_minimize, lse};

/// Feasibility slack for the prefix-mass constraints.
pub(crate) const FEAS_TOL: f64 = 1e-12;

/// Constraints on the block masses `(q_A, q_B, q_C)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Shape {
    /// No constraint; only block A is used.
    Free,
    /// `q_A ≤ u` and `q_A + q_B ≥ l`.
    Nn { u: f64, l: f64 },
}

/// A support point that takes part in the ratio.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Pt {
    pub idx: usize,
    pub log_m: f64,
    /// Smoother weight scaled so the largest weight is one.
    pub w: f64,
    pub loss: f64,
    /// 0 for block A, 1 for block B.
    pub blk: usize,
}

/// Input of one robust ratio problem.
#[derive(Debug, Clone)]
pub(crate) struct TiltProblem {
    pub pts: Vec<Pt>,
    /// Log of the training mass outside the ratio (block C).
    pub log_mass_c: f64,
    pub shape: Shape,
    pub r: f64,
}

/// Solution of a robust ratio problem.
#[derive(Debug, Clone)]
pub(crate) struct TiltSolution {
    pub cost: f64,
    /// Worst-case mass of each ratio point, aligned with `pts`.
    pub q_pts: Vec<f64>,
    /// Worst-case total mass of block C.
    pub q_c: f64,
    pub alpha: f64,
    pub nu: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub saturated: bool,
}

/// Minimizes `Σ q_b (ln q_b - lz_b)` over feasible block masses summing to one.
///
/// `lz` are log block weights, not necessarily normalized. Returns the
/// minimizer and the minimum, or `None` when no feasible point has finite value.
pub(crate) fn block_projection(lz: [f64; 3], shape: Shape) -> Option<([f64; 3], f64)> {
    let tot = lse(&lz);
    if tot == f64::NEG_INFINITY || tot.is_nan() {
        return None;
    }
    let lp = lz.map(|v| v - tot);
    let p = lp.map(f64::exp);
    let Shape::Nn { u, l } = shape else {
        return Some((p, -tot));
    };
    let value = |q: &[f64; 3]| -> f64 {
        let mut v = 0.0;
        for b in 0..3 {
            if q[b] > 0.0 {
                if lz[b] == f64::NEG_INFINITY {
                    return f64::INFINITY;
                }
                v += q[b] * (q[b].ln() - lz[b]);
            }
        }
        v
    };
    let feasible = |q: &[f64; 3]| q[0] <= u + FEAS_TOL && q[0] + q[1] >= l - FEAS_TOL;
    let mut cands = vec![p];
    let lbc = lse(&[lp[1], lp[2]]);
    if lbc > f64::NEG_INFINITY {
        cands.push([
            u,
            (1.0 - u) * (lp[1] - lbc).exp(),
            (1.0 - u) * (lp[2] - lbc).exp(),
        ]);
    }
    let lab = lse(&[lp[0], lp[1]]);
    if lab > f64::NEG_INFINITY {
        cands.push([l * (lp[0] - lab).exp(), l * (lp[1] - lab).exp(), 1.0 - l]);
    }
    cands.push([u, l - u, 1.0 - l]);
    cands
        .into_iter()
        .filter(feasible)
        .map(|q| (q, value(&q)))
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Per-block log partition function and tilted mean weight.
struct BlockStats {
    lz: [f64; 3],
    mean_w: [f64; 2],
}

impl TiltProblem {
    fn reachable(&self, p: &Pt) -> bool {
        p.w > 0.0 && !(p.blk == 0 && matches!(self.shape, Shape::Nn { u, .. } if u <= 0.0))
    }

    fn stats(&self, alpha: f64, nu: f64) -> BlockStats {
        let mut mx = [f64::NEG_INFINITY; 2];
        for p in &self.pts {
            let e = p.log_m + p.w * (p.loss - alpha) / nu;
            mx[p.blk] = mx[p.blk].max(e);
        }
        let mut s0 = [0.0; 2];
        let mut s1 = [0.0; 2];
        for p in &self.pts {
            let e = (p.log_m + p.w * (p.loss - alpha) / nu - mx[p.blk]).exp();
            s0[p.blk] += e;
            s1[p.blk] += e * p.w;
        }
        let mut lz = [f64::NEG_INFINITY, f64::NEG_INFINITY, self.log_mass_c];
        let mut mean_w = [0.0; 2];
        for b in 0..2 {
            if s0[b] > 0.0 {
                lz[b] = mx[b] + s0[b].ln();
                mean_w[b] = s1[b] / s0[b];
            }
        }
        BlockStats { lz, mean_w }
    }

    /// Constraint function `H(α, ν)` and its derivative in `α`.
    fn h(&self, alpha: f64, nu: f64) -> Option<(f64, f64, [f64; 3], BlockStats)> {
        let st = self.stats(alpha, nu);
        let (q, v) = block_projection(st.lz, self.shape)?;
        let dh = -(q[0] * st.mean_w[0] + q[1] * st.mean_w[1]) / nu;
        Some((self.r - v, dh, q, st))
    }

    /// Smallest `α` with `H(α, ν) ≤ 0`, by Newton's method from the left.
    fn alpha_star(&self, nu: f64, alpha_lo: f64, scale: f64) -> f64 {
        let mut a = alpha_lo;
        for _ in 0..500 {
            let Some((h, dh, _, _)) = self.h(a, nu) else {
                return f64::INFINITY;
            };
            if !h.is_finite() {
                return f64::INFINITY;
            }
            if h <= 0.0 {
                return a;
            }
            if !(dh < 0.0) {
                return f64::INFINITY;
            }
            let step = -h / dh;
            a += step;
            if step <= 4.0 * f64::EPSILON * (a.abs() + scale) {
                return a;
            }
        }
        a
    }

    /// Solves the robust ratio problem; `None` when no feasible model exists.
    pub fn solve(&self) -> Option<TiltSolution> {
        let reach: Vec<&Pt> = self.pts.iter().filter(|p| self.reachable(p)).collect();
        if reach.is_empty() {
            return None;
        }
        // Feasibility: the training model's own block masses must be strictly inside the ball.
        let mut lm = [f64::NEG_INFINITY, f64::NEG_INFINITY, self.log_mass_c];
        for (b, slot) in lm.iter_mut().take(2).enumerate() {
            let v: Vec<f64> = self
                .pts
                .iter()
                .filter(|p| p.blk == b)
                .map(|p| p.log_m)
                .collect();
            *slot = lse(&v);
        }
        let (_, rmin) = block_projection(lm, self.shape)?;
        if !(self.r > rmin) {
            return None;
        }
        let lmax = reach
            .iter()
            .map(|p| p.loss)
            .fold(f64::NEG_INFINITY, f64::max);
        let lmin = reach.iter().map(|p| p.loss).fold(f64::INFINITY, f64::min);
        if let Some(sol) = self.saturated(lmax) {
            return Some(sol);
        }
        let scale = (lmax - lmin).max(f64::MIN_POSITIVE);
        let tc = scale.ln();
        let f = |t: f64| self.alpha_star(t.exp(), lmin, scale);
        let (t, alpha) = brent_minimize(f, tc - 25.0, tc + 25.0, 1e-11, 300);
        let nu = t.exp();
        let (_, _, q, st) = self.h(alpha, nu)?;
        let q_pts = self
            .pts
            .iter()
            .map(|p| q[p.blk] * (p.log_m + p.w * (p.loss - alpha) / nu - st.lz[p.blk]).exp())
            .collect();
        let lp = {
            let tot = lse(&st.lz);
            st.lz.map(|v| v - tot)
        };
        let ratio = |a: usize, b: usize| -> f64 {
            if q[a] > 0.0 && q[b] > 0.0 && lp[a].is_finite() && lp[b].is_finite() {
                (nu * ((q[a].ln() - lp[a]) - (q[b].ln() - lp[b]))).max(0.0)
            } else {
                0.0
            }
        };
        let (eta1, eta2) = match self.shape {
            Shape::Free => (0.0, 0.0),
            Shape::Nn { .. } => (ratio(1, 2), ratio(1, 0)),
        };
        Some(TiltSolution {
            cost: alpha,
            q_pts,
            q_c: q[2],
            alpha,
            nu,
            eta1,
            eta2,
            saturated: false,
        })
    }

    /// Worst case concentrated on the largest-loss points, if within the radius.
    fn saturated(&self, lmax: f64) -> Option<TiltSolution> {
        let in_s = |p: &Pt| !self.reachable(p) || p.loss >= lmax;
        let mut lm = [f64::NEG_INFINITY, f64::NEG_INFINITY, self.log_mass_c];
        let mut top_block = [false; 2];
        for b in 0..2 {
            let v: Vec<f64> = self
                .pts
                .iter()
                .filter(|p| p.blk == b && in_s(p))
                .map(|p| p.log_m)
                .collect();
            lm[b] = lse(&v);
            top_block[b] = self
                .pts
                .iter()
                .any(|p| p.blk == b && self.reachable(p) && p.loss >= lmax);
        }
        let (q, tau) = block_projection(lm, self.shape)?;
        let reaches_top = (top_block[0] && q[0] > 0.0) || (top_block[1] && q[1] > 0.0);
        if !(self.r >= tau && reaches_top) {
            return None;
        }
        let q_pts = self
            .pts
            .iter()
            .map(|p| {
                if in_s(p) {
                    q[p.blk] * (p.log_m - lm[p.blk]).exp()
                } else {
                    0.0
                }
            })
            .collect();
        Some(TiltSolution {
            cost: lmax,
            q_pts,
            q_c: q[2],
            alpha: lmax,
            nu: 0.0,
            eta1: 0.0,
            eta2: 0.0,
            saturated: true,
        })
    }
}
