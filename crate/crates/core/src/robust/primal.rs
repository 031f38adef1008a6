//! Primal robust ratio cost for any f-divergence, by a log-barrier method.
//!
//! The ratio objective is linearized with the substitution `P = s·Q`,
//! `s = 1 / Σ w Q`, giving a concave maximization of `Σ w L P` over the
//! cone of `(P, s)` with `Σ w P = 1`, `Σ P = s`, the perspective of the
//! divergence bounded by `r·s`, and the prefix-mass constraints scaled by
//! `s`. Problems are small (one variable per support point), so dense
//! Newton steps on the KKT system are cheap.

use nalgebra::{DMatrix, DVector};

use super::tilt::{Shape, FEAS_TOL};
use crate::divergences::Generator;
use crate::error::{Error, Result};

type Oracle<'a> = Box<dyn Fn(&DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) + 'a>;

/// Minimizes `obj` subject to `g_k ≤ 0`, `x_i > 0` for `positive`, and `A x = A x0`,
/// starting from a strictly feasible `x0`.
fn barrier_minimize(
    obj: &Oracle<'_>,
    cons: &[Oracle<'_>],
    positive: &[usize],
    a: &DMatrix<f64>,
    x0: DVector<f64>,
) -> Result<DVector<f64>> {
    let n = x0.len();
    let p = a.nrows();
    let m_total = (cons.len() + positive.len()) as f64;
    let mut x = x0;
    let mut t = 1.0;
    let phi = |x: &DVector<f64>, t: f64| -> Option<f64> {
        let mut v = t * obj(x).0;
        for c in cons {
            let g = c(x).0;
            if !(g < 0.0) {
                return None;
            }
            v -= (-g).ln();
        }
        for &i in positive {
            if !(x[i] > 0.0) {
                return None;
            }
            v -= x[i].ln();
        }
        Some(v)
    };
    for _outer in 0..60 {
        for _inner in 0..200 {
            let (_, g0, h0) = obj(&x);
            let mut grad = g0 * t;
            let mut hess = h0 * t;
            for c in cons {
                let (g, dg, d2g) = c(&x);
                grad += &dg / (-g);
                hess += &dg * dg.transpose() / (g * g) + d2g / (-g);
            }
            for &i in positive {
                grad[i] -= 1.0 / x[i];
                hess[(i, i)] += 1.0 / (x[i] * x[i]);
            }
            let mut kkt = DMatrix::zeros(n + p, n + p);
            kkt.view_mut((0, 0), (n, n)).copy_from(&hess);
            kkt.view_mut((n, 0), (p, n)).copy_from(a);
            kkt.view_mut((0, n), (n, p)).copy_from(&a.transpose());
            let mut rhs = DVector::zeros(n + p);
            rhs.rows_mut(0, n).copy_from(&(-&grad));
            let sol = kkt
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::DualDivergence("singular barrier system".into()))?;
            let dx = sol.rows(0, n).into_owned();
            let dec = -grad.dot(&dx);
            if !(dec > 1e-14) {
                break;
            }
            let f0 = phi(&x, t)
                .ok_or_else(|| Error::DualDivergence("barrier iterate left the domain".into()))?;
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..100 {
                let cand = &x + &dx * step;
                if let Some(f1) = phi(&cand, t) {
                    if f1 <= f0 - 0.25 * step * dec {
                        x = cand;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved || dec < 1e-12 {
                break;
            }
        }
        let scale = obj(&x).0.abs().max(1.0);
        if m_total / t < 1e-11 * scale {
            break;
        }
        t *= 20.0;
    }
    Ok(x)
}

/// Which block each support point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Blk {
    A,
    B,
    C,
}

/// Robust ratio problem over the full support in primal form.
pub(crate) struct PrimalRatio<'a> {
    pub gen: Generator,
    pub mass: &'a [f64],
    /// Ratio weights (zero for points outside the ratio).
    pub w: &'a [f64],
    pub loss: &'a [f64],
    pub blk: &'a [Blk],
    pub shape: Shape,
    pub r: f64,
}

/// Optimal block masses minimizing `Σ m_b f(q_b / m_b)` over the polytope.
pub(crate) fn min_block_divergence(
    gen: &Generator,
    m: [f64; 3],
    shape: Shape,
) -> Result<Option<([f64; 3], f64)>> {
    let (u, l) = match shape {
        Shape::Free => return Ok(Some((m, 0.0))),
        Shape::Nn { u, l } => (u, l),
    };
    let forced = [m[0] == 0.0 || u <= 0.0, false, m[2] == 0.0 || l >= 1.0];
    let f0 = gen.f(0.0);
    let forced_cost: f64 = (0..3)
        .filter(|&b| forced[b] && m[b] > 0.0)
        .map(|b| m[b] * f0)
        .sum();
    if !forced_cost.is_finite() {
        return Ok(None);
    }
    if m[1] == 0.0 {
        return Ok(None);
    }
    // If the reference masses are feasible the minimum is zero.
    if m[0] <= u + FEAS_TOL && m[0] + m[1] >= l - FEAS_TOL {
        return Ok(Some((m, 0.0)));
    }
    let free: Vec<usize> = (0..3).filter(|&b| !forced[b]).collect();
    if free.len() == 1 {
        let mut q = [0.0; 3];
        q[free[0]] = 1.0;
        let feasible = q[0] <= u + FEAS_TOL && q[0] + q[1] >= l - FEAS_TOL;
        let v = forced_cost + m[free[0]] * gen.f(1.0 / m[free[0]]);
        return Ok(if feasible && v.is_finite() {
            Some((q, v))
        } else {
            None
        });
    }
    let pos = |b: usize| free.iter().position(|&c| c == b);
    let mut x0 = DVector::zeros(free.len());
    let qa = if forced[0] { 0.0 } else { 0.5 * u };
    let qc = if forced[2] { 0.0 } else { 0.5 * (1.0 - l) };
    let init = [qa, 1.0 - qa - qc, qc];
    for (k, &b) in free.iter().enumerate() {
        x0[k] = init[b];
    }
    let obj: Oracle = Box::new(|x: &DVector<f64>| {
        let k = x.len();
        let mut v = forced_cost;
        let mut g = DVector::zeros(k);
        let mut h = DMatrix::zeros(k, k);
        for (i, &b) in free.iter().enumerate() {
            let t = x[i] / m[b];
            v += m[b] * gen.f(t);
            g[i] = gen.df(t);
            h[(i, i)] = gen.d2f(t) / m[b];
        }
        (v, g, h)
    });
    let mut cons: Vec<Oracle> = Vec::new();
    if let Some(ia) = pos(0) {
        let k = free.len();
        cons.push(Box::new(move |x: &DVector<f64>| {
            let mut g = DVector::zeros(k);
            g[ia] = 1.0;
            (x[ia] - u, g, DMatrix::zeros(k, k))
        }));
    }
    if !forced[2] {
        let k = free.len();
        let ia = pos(0);
        let ib = pos(1).expect("block B is never forced");
        cons.push(Box::new(move |x: &DVector<f64>| {
            let mut g = DVector::zeros(k);
            g[ib] = -1.0;
            let mut v = l - x[ib];
            if let Some(ia) = ia {
                g[ia] = -1.0;
                v -= x[ia];
            }
            (v, g, DMatrix::zeros(k, k))
        }));
    }
    let positive: Vec<usize> = (0..free.len()).collect();
    let a = DMatrix::from_element(1, free.len(), 1.0);
    let x = barrier_minimize(&obj, &cons, &positive, &a, x0)?;
    let mut q = [0.0; 3];
    for (k, &b) in free.iter().enumerate() {
        q[b] = x[k];
    }
    let v = obj(&x).0;
    Ok(Some((q, v)))
}

impl PrimalRatio<'_> {
    fn block_masses(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for (i, b) in self.blk.iter().enumerate() {
            m[*b as usize] += self.mass[i];
        }
        m
    }

    /// Minimum divergence to the constraint set and the block masses attaining it.
    pub fn min_radius(&self) -> Result<Option<([f64; 3], f64)>> {
        min_block_divergence(&self.gen, self.block_masses(), self.shape)
    }

    /// Robust cost and worst-case model, or `None` when the radius is too small.
    pub fn solve(&self) -> Result<Option<(f64, Vec<f64>)>> {
        let mb = self.block_masses();
        let Some((qmin, rmin)) = self.min_radius()? else {
            return Ok(None);
        };
        if !(self.r > rmin) {
            return Ok(None);
        }
        let (u, l) = match self.shape {
            Shape::Free => (1.0, 0.0),
            Shape::Nn { u, l } => (u, l),
        };
        let is_nn = matches!(self.shape, Shape::Nn { .. });
        let forced = |b: Blk| match b {
            Blk::A => is_nn && (u <= 0.0 || mb[0] == 0.0),
            Blk::B => false,
            Blk::C => is_nn && (l >= 1.0 || mb[2] == 0.0),
        };
        let vars: Vec<usize> = (0..self.mass.len())
            .filter(|&i| !forced(self.blk[i]))
            .collect();
        let forced_mass: f64 = (0..self.mass.len())
            .filter(|&i| forced(self.blk[i]))
            .map(|i| self.mass[i])
            .sum();
        let f0 = self.gen.f(0.0);
        let forced_cost = if forced_mass > 0.0 {
            forced_mass * f0
        } else {
            0.0
        };
        if !forced_cost.is_finite() {
            return Ok(None);
        }

        // Strictly feasible start: blend the closest model with an interior one.
        let qa = if is_nn && !forced(Blk::A) {
            0.5 * u
        } else {
            0.0
        };
        let qc = if is_nn && !forced(Blk::C) {
            0.5 * (1.0 - l)
        } else {
            0.0
        };
        let q_int = if is_nn { [qa, 1.0 - qa - qc, qc] } else { mb };
        let spread = |q: [f64; 3]| -> Vec<f64> {
            (0..self.mass.len())
                .map(|i| {
                    let b = self.blk[i] as usize;
                    if mb[b] > 0.0 {
                        q[b] * self.mass[i] / mb[b]
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        let (q_lo, q_hi) = (spread(qmin), spread(q_int));
        let div = |q: &[f64]| -> f64 {
            (0..q.len())
                .map(|i| self.mass[i] * self.gen.f(q[i] / self.mass[i]))
                .sum()
        };
        let d_hi = div(&q_hi);
        let lam = if d_hi > rmin {
            (0.5 * (self.r - rmin) / (d_hi - rmin)).min(0.5)
        } else {
            0.5
        };
        let q0: Vec<f64> = q_lo
            .iter()
            .zip(&q_hi)
            .map(|(a, b)| (1.0 - lam) * a + lam * b)
            .collect();
        let denom: f64 = (0..q0.len()).map(|i| self.w[i] * q0[i]).sum();
        if !(denom > 0.0) {
            return Ok(None);
        }
        let nv = vars.len();
        let mut x0 = DVector::zeros(nv + 1);
        for (k, &i) in vars.iter().enumerate() {
            x0[k] = q0[i] / denom;
        }
        x0[nv] = 1.0 / denom;

        let c: Vec<f64> = vars.iter().map(|&i| self.w[i] * self.loss[i]).collect();
        let obj: Oracle = Box::new(|x: &DVector<f64>| {
            let v = -(0..nv).map(|k| c[k] * x[k]).sum::<f64>();
            let mut g = DVector::zeros(nv + 1);
            for k in 0..nv {
                g[k] = -c[k];
            }
            (v, g, DMatrix::zeros(nv + 1, nv + 1))
        });
        let mut cons: Vec<Oracle> = Vec::new();
        cons.push(Box::new(|x: &DVector<f64>| {
            let s = x[nv];
            let mut v = s * (forced_cost - self.r);
            let mut g = DVector::zeros(nv + 1);
            let mut h = DMatrix::zeros(nv + 1, nv + 1);
            g[nv] = forced_cost - self.r;
            for (k, &i) in vars.iter().enumerate() {
                let mi = self.mass[i];
                let t = x[k] / (s * mi);
                let (f, df, d2f) = (self.gen.f(t), self.gen.df(t), self.gen.d2f(t));
                v += s * mi * f;
                g[k] = df;
                g[nv] += mi * (f - t * df);
                h[(k, k)] = d2f / (s * mi);
                h[(k, nv)] = -d2f * t / s;
                h[(nv, k)] = -d2f * t / s;
                h[(nv, nv)] += mi * t * t * d2f / s;
            }
            (v, g, h)
        }));
        if is_nn && !forced(Blk::A) {
            let idx: Vec<usize> = (0..nv).filter(|&k| self.blk[vars[k]] == Blk::A).collect();
            cons.push(Box::new(move |x: &DVector<f64>| {
                let mut g = DVector::zeros(nv + 1);
                let mut v = -u * x[nv];
                g[nv] = -u;
                for &k in &idx {
                    v += x[k];
                    g[k] = 1.0;
                }
                (v, g, DMatrix::zeros(nv + 1, nv + 1))
            }));
        }
        if is_nn && !forced(Blk::C) {
            let idx: Vec<usize> = (0..nv).filter(|&k| self.blk[vars[k]] != Blk::C).collect();
            cons.push(Box::new(move |x: &DVector<f64>| {
                let mut g = DVector::zeros(nv + 1);
                let mut v = l * x[nv];
                g[nv] = l;
                for &k in &idx {
                    v -= x[k];
                    g[k] = -1.0;
                }
                (v, g, DMatrix::zeros(nv + 1, nv + 1))
            }));
        }
        let mut a = DMatrix::zeros(2, nv + 1);
        for (k, &i) in vars.iter().enumerate() {
            a[(0, k)] = self.w[i];
            a[(1, k)] = 1.0;
        }
        a[(1, nv)] = -1.0;
        let positive: Vec<usize> = (0..=nv).collect();
        let x = barrier_minimize(&obj, &cons, &positive, &a, x0)?;
        let s = x[nv];
        let mut q = vec![0.0; self.mass.len()];
        for (k, &i) in vars.iter().enumerate() {
            q[i] = x[k] / s;
        }
        let total: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= total);
        let num: f64 = (0..q.len()).map(|i| self.w[i] * self.loss[i] * q[i]).sum();
        let den: f64 = (0..q.len()).map(|i| self.w[i] * q[i]).sum();
        Ok(Some((num / den, q)))
    }
}
