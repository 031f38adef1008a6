//! Independent primal oracle for worst-case learner costs.
//!
//! Maximizes `Σ w L Q / Σ w Q` over models `Q` on the training support with
//! `Σ Q ln(Q/M) ≤ r` and, for nearest neighbors, the prefix-mass limits.
//! The ratio is handled by Dinkelbach iterations; each parametric problem
//! `max Σ w (L - λ) Q` is a smooth convex program solved by a log-barrier
//! Newton method directly in `Q`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::{DMatrix, DVector};

/// Block of a support point relative to neighborhood `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    /// Among the `j - 1` nearest points.
    Inner,
    /// The `j`-th nearest point.
    Edge,
    /// Beyond the `j`-th point (not in the ratio).
    Outer,
}

#[derive(Debug, Clone)]
pub struct RatioInstance {
    pub mass: Vec<f64>,
    pub w: Vec<f64>,
    pub loss: Vec<f64>,
    pub part: Vec<Part>,
    /// `Some((u, l))`: `Q(inner) ≤ u` and `Q(inner ∪ edge) ≥ l`.
    pub limits: Option<(f64, f64)>,
    pub r: f64,
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub cost: f64,
    pub q: Vec<f64>,
    pub min_divergence: f64,
}

struct Problem<'a> {
    inst: &'a RatioInstance,
    vars: Vec<usize>,
}

impl Problem<'_> {
    fn kl(&self, q: &DVector<f64>) -> f64 {
        self.vars
            .iter()
            .enumerate()
            .map(|(k, &i)| q[k] * (q[k] / self.inst.mass[i]).ln())
            .sum()
    }

    /// Linear constraints `a·q ≤ b`.
    fn linear(&self) -> Vec<(DVector<f64>, f64)> {
        let mut out = Vec::new();
        if let Some((u, l)) = self.inst.limits {
            let inner = DVector::from_iterator(
                self.vars.len(),
                self.vars
                    .iter()
                    .map(|&i| f64::from(self.inst.part[i] == Part::Inner)),
            );
            if inner.sum() > 0.0 {
                out.push((inner, u));
            }
            let in_ratio = DVector::from_iterator(
                self.vars.len(),
                self.vars
                    .iter()
                    .map(|&i| -f64::from(self.inst.part[i] != Part::Outer)),
            );
            if self.vars.iter().any(|&i| self.inst.part[i] == Part::Outer) {
                out.push((in_ratio, -l));
            }
        }
        out
    }
}

/// Value, gradient and Hessian of a smooth objective.
type Objective<'a> = dyn Fn(&DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) + 'a;

/// Barrier Newton minimization of `t·f + barriers` with `Σ q = 1`.
///
/// `obj` returns value, gradient and Hessian; `kl_cap` adds `-ln(cap - KL)`.
fn barrier_solve(
    p: &Problem<'_>,
    obj: &Objective<'_>,
    kl_cap: Option<f64>,
    mut q: DVector<f64>,
) -> DVector<f64> {
    let k = q.len();
    let lin = p.linear();
    let n_cons = (k + lin.len() + usize::from(kl_cap.is_some())) as f64;
    let phi = |q: &DVector<f64>, t: f64| -> Option<f64> {
        if q.iter().any(|&v| !(v > 0.0)) {
            return None;
        }
        let mut v = t * obj(q).0 - q.iter().map(|x| x.ln()).sum::<f64>();
        for (a, b) in &lin {
            let s = b - a.dot(q);
            if !(s > 0.0) {
                return None;
            }
            v -= s.ln();
        }
        if let Some(cap) = kl_cap {
            let s = cap - p.kl(q);
            if !(s > 0.0) {
                return None;
            }
            v -= s.ln();
        }
        Some(v)
    };
    let mut t = 1.0;
    while n_cons / t > 1e-14 {
        for _ in 0..100 {
            let (_, g0, h0) = obj(&q);
            let mut g = g0 * t;
            let mut h = h0 * t;
            for i in 0..k {
                g[i] -= 1.0 / q[i];
                h[(i, i)] += 1.0 / (q[i] * q[i]);
            }
            for (a, b) in &lin {
                let s = b - a.dot(&q);
                g += a / s;
                h += a * a.transpose() / (s * s);
            }
            if let Some(cap) = kl_cap {
                let s = cap - p.kl(&q);
                let dk = DVector::from_iterator(
                    k,
                    p.vars
                        .iter()
                        .enumerate()
                        .map(|(j, &i)| (q[j] / p.inst.mass[i]).ln() + 1.0),
                );
                g += &dk / s;
                h += &dk * dk.transpose() / (s * s);
                for i in 0..k {
                    h[(i, i)] += 1.0 / (q[i] * s);
                }
            }
            // Newton step in the reduced space, eliminating the largest coordinate.
            let piv = q.imax();
            let free: Vec<usize> = (0..k).filter(|&i| i != piv).collect();
            let dq = if free.is_empty() {
                DVector::zeros(k)
            } else {
                let m = free.len();
                let gr = DVector::from_iterator(m, free.iter().map(|&i| g[i] - g[piv]));
                let hr = DMatrix::from_fn(m, m, |a, b| {
                    let (i, j) = (free[a], free[b]);
                    h[(i, j)] - h[(i, piv)] - h[(piv, j)] + h[(piv, piv)]
                });
                let Some(d) = hr.lu().solve(&(-gr)) else {
                    break;
                };
                let mut dq = DVector::zeros(k);
                for (a, &i) in free.iter().enumerate() {
                    dq[i] = d[a];
                }
                dq[piv] = -d.sum();
                dq
            };
            let dec = -g.dot(&dq);
            if !(dec > 1e-15) {
                break;
            }
            let f0 = phi(&q, t).expect("iterate stays feasible");
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..80 {
                let mut cand = &q + &dq * step;
                cand[piv] = 1.0 - (0..k).filter(|&i| i != piv).map(|i| cand[i]).sum::<f64>();
                if let Some(f1) = phi(&cand, t) {
                    if f1 <= f0 - 0.3 * step * dec {
                        q = cand;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        t *= 10.0;
    }
    q
}

/// Worst-case ratio, or `None` when the radius does not exceed the minimum divergence.
pub fn primal_worst_case(inst: &RatioInstance) -> Option<OracleSolution> {
    let (u, l) = inst.limits.unwrap_or((1.0, 0.0));
    let has_limits = inst.limits.is_some();
    let forced = |i: usize| {
        inst.mass[i] == 0.0
            || (has_limits && inst.part[i] == Part::Inner && u <= 0.0)
            || (has_limits && inst.part[i] == Part::Outer && l >= 1.0)
    };
    let vars: Vec<usize> = (0..inst.mass.len()).filter(|&i| !forced(i)).collect();
    let p = Problem {
        inst,
        vars: vars.clone(),
    };
    let k = vars.len();
    let in_ratio: Vec<bool> = vars
        .iter()
        .map(|&i| inst.part[i] != Part::Outer && inst.w[i] > 0.0)
        .collect();
    if !in_ratio.iter().any(|&b| b) {
        return None;
    }

    // Interior point of the prefix-mass polytope.
    let count = |pt: Part| vars.iter().filter(|&&i| inst.part[i] == pt).count() as f64;
    let (na, nb, nc) = (count(Part::Inner), count(Part::Edge), count(Part::Outer));
    let qa = if na > 0.0 { 0.5 * u } else { 0.0 };
    let qc = if nc > 0.0 { 0.5 * (1.0 - l) } else { 0.0 };
    let qb = 1.0 - qa - qc;
    let q_int = DVector::from_iterator(
        k,
        vars.iter().map(|&i| match (has_limits, inst.part[i]) {
            (false, _) => 1.0 / k as f64,
            (true, Part::Inner) => qa / na,
            (true, Part::Edge) => qb / nb,
            (true, Part::Outer) => qc / nc,
        }),
    );

    // Phase one: closest feasible model.
    let kl_obj = |q: &DVector<f64>| {
        let v = p.kl(q);
        let g = DVector::from_iterator(
            k,
            vars.iter()
                .enumerate()
                .map(|(j, &i)| (q[j] / inst.mass[i]).ln() + 1.0),
        );
        let h = DMatrix::from_diagonal(&q.map(|x| 1.0 / x));
        (v, g, h)
    };
    let q_close = barrier_solve(&p, &kl_obj, None, q_int.clone());
    let rmin = p.kl(&q_close);
    if !(inst.r > rmin + 1e-12) {
        return None;
    }
    let d_int = p.kl(&q_int);
    let theta = if d_int > rmin {
        (0.5 * (inst.r - rmin) / (d_int - rmin)).min(0.5)
    } else {
        0.5
    };
    let mut q = &q_close * (1.0 - theta) + &q_int * theta;

    let ratio = |q: &DVector<f64>| {
        let num: f64 = vars
            .iter()
            .enumerate()
            .filter(|(j, _)| in_ratio[*j])
            .map(|(j, &i)| inst.w[i] * inst.loss[i] * q[j])
            .sum();
        let den: f64 = vars
            .iter()
            .enumerate()
            .filter(|(j, _)| in_ratio[*j])
            .map(|(j, &i)| inst.w[i] * q[j])
            .sum();
        num / den
    };
    let mut lambda = ratio(&q);
    for _ in 0..60 {
        let c = DVector::from_iterator(
            k,
            vars.iter().enumerate().map(|(j, &i)| {
                if in_ratio[j] {
                    -inst.w[i] * (inst.loss[i] - lambda)
                } else {
                    0.0
                }
            }),
        );
        let lin_obj = |x: &DVector<f64>| (c.dot(x), c.clone(), DMatrix::zeros(k, k));
        let next = barrier_solve(&p, &lin_obj, Some(inst.r), q.clone());
        let new_lambda = ratio(&next);
        q = next;
        if (new_lambda - lambda).abs() <= 1e-13 * lambda.abs().max(1.0) {
            lambda = new_lambda;
            break;
        }
        lambda = new_lambda;
    }
    let mut full = vec![0.0; inst.mass.len()];
    for (j, &i) in vars.iter().enumerate() {
        full[i] = q[j];
    }
    Some(OracleSolution {
        cost: lambda,
        q: full,
        min_divergence: rmin,
    })
}

/// Coarse check for three-point supports: best ratio over a `1/steps` grid of the simplex.
pub fn grid_worst_case(inst: &RatioInstance, steps: usize) -> Option<f64> {
    assert_eq!(inst.mass.len(), 3);
    let mut best: Option<f64> = None;
    for a in 0..=steps {
        for b in 0..=steps - a {
            let q = [
                a as f64 / steps as f64,
                b as f64 / steps as f64,
                (steps - a - b) as f64 / steps as f64,
            ];
            let kl: f64 = (0..3)
                .map(|i| {
                    if q[i] == 0.0 {
                        0.0
                    } else if inst.mass[i] == 0.0 {
                        f64::INFINITY
                    } else {
                        q[i] * (q[i] / inst.mass[i]).ln()
                    }
                })
                .sum();
            if kl > inst.r {
                continue;
            }
            if let Some((u, l)) = inst.limits {
                let qa: f64 = (0..3)
                    .filter(|&i| inst.part[i] == Part::Inner)
                    .map(|i| q[i])
                    .sum();
                let qab: f64 = (0..3)
                    .filter(|&i| inst.part[i] != Part::Outer)
                    .map(|i| q[i])
                    .sum();
                if qa > u + 1e-12 || qab < l - 1e-12 {
                    continue;
                }
            }
            let num: f64 = (0..3)
                .filter(|&i| inst.part[i] != Part::Outer)
                .map(|i| inst.w[i] * inst.loss[i] * q[i])
                .sum();
            let den: f64 = (0..3)
                .filter(|&i| inst.part[i] != Part::Outer)
                .map(|i| inst.w[i] * q[i])
                .sum();
            if den > 0.0 {
                let v = num / den;
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
    }
    best
}
