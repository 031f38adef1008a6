//! Small numerical kit shared by the prescriptors.
//!
//! Scalar problems use bisection, golden-section and Brent searches.
//! Multi-dimensional convex problems use a deep-cut ellipsoid method by
//! default, which needs only values and subgradients and certifies its own
//! optimality gap; a projected subgradient method with iterate averaging is
//! available as an alternative.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{project_blocks, BlockKind, DecisionBlock};

/// `ln Σ exp(v_i)`, returning `-inf` for an empty slice or all `-inf` inputs.
pub fn lse(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return m;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `ln Σ exp(lw_i + e_i)` over (log-weight, exponent) pairs.
pub fn log_sum_exp(terms: &[(f64, f64)]) -> Result<f64> {
    if terms.is_empty() {
        return Err(Error::EmptyData);
    }
    let v: Vec<f64> = terms.iter().map(|(lw, e)| lw + e).collect();
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFinite("log_sum_exp"));
    }
    Ok(lse(&v))
}

/// Tolerances and budgets for the solvers in this module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSettings {
    /// Relative optimality gap (multi-dimensional) or function tolerance.
    pub tol_obj: f64,
    /// Relative decision tolerance for scalar searches.
    pub tol_x: f64,
    pub max_iter: usize,
    pub method: Method,
    /// Step multiplier of the subgradient method.
    pub step_scale: f64,
    /// Independent restarts of the subgradient method.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self {
            tol_obj: 1e-8,
            tol_x: 1e-9,
            max_iter: 10_000,
            method: Method::Auto,
            step_scale: 1.0,
            restarts: 1,
            seed: 0,
        }
    }
}

/// Choice of multi-dimensional solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Golden section for one free coordinate, ellipsoid otherwise.
    Auto,
    Ellipsoid,
    Subgradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Converged,
    /// The decision set is a single point.
    Trivial,
}

/// Output of a minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Final bracket width, certified gap or step length, depending on the method.
    pub final_step: f64,
    pub status: SolveStatus,
}

/// Root of a monotone function by bisection.
pub fn bisect_root<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol_x: f64,
    tol_f: f64,
) -> Result<f64> {
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let (mut fa, fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(Error::NoBracket { lo: a, hi: b });
    }
    for _ in 0..400 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm.abs() <= tol_f || (b - a) <= tol_x {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a unimodal function on `[a, b]`.
/// Returns the best point evaluated and its value.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol_x: f64) -> (f64, f64) {
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut best = if fd < fc { (d, fd) } else { (c, fc) };
    for _ in 0..300 {
        let width = b - a;
        if width <= tol_x * (1.0 + a.abs().max(b.abs()))
            || width <= 4.0 * f64::EPSILON * a.abs().max(b.abs())
        {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            if fc < best.1 || (fc == best.1 && c < best.0) {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            if fd < best.1 {
                best = (d, fd);
            }
        }
    }
    best
}

/// Brent's parabolic-interpolation minimizer on `[a, b]`.
pub fn brent_minimize<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    const CGOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + CGOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs() + tol;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Minimizes a convex scalar function: grows a bracket geometrically from
/// `x0` with initial step `step`, then runs golden section inside it.
pub fn minimize_scalar<F>(mut f: F, x0: f64, step: f64, tol_x: f64) -> Result<Minimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    let step = if step > 0.0 && step.is_finite() {
        step
    } else {
        1.0
    };
    let mut first_err = None;
    let mut evals = 0usize;
    let mut g = |x: f64| -> f64 {
        evals += 1;
        match f(x) {
            Ok(v) if !v.is_nan() => v,
            Ok(_) => f64::INFINITY,
            Err(e) => {
                first_err.get_or_insert(e);
                f64::INFINITY
            }
        }
    };
    let found = grow_bracket(&mut g, x0, step).map(|(lo, hi)| {
        let (x, v) = golden_section(&mut g, lo, hi, tol_x);
        (x, v, hi - lo)
    });
    if let Some(e) = first_err {
        return Err(e);
    }
    let (x, value, width) = found.ok_or(Error::Unbounded)?;
    if !value.is_finite() {
        return Err(Error::NotConverged {
            iterations: evals,
            best_x: vec![x],
            best_value: value,
        });
    }
    Ok(Minimum {
        x: vec![x],
        value,
        iterations: evals,
        final_step: width,
        status: SolveStatus::Converged,
    })
}

/// Finds `lo < hi` enclosing a minimizer of a convex function.
fn grow_bracket<G: FnMut(f64) -> f64>(g: &mut G, x0: f64, step: f64) -> Option<(f64, f64)> {
    let f0 = g(x0);
    let fr = g(x0 + step);
    let (dir, f1) = if fr < f0 {
        (1.0, fr)
    } else {
        let fl = g(x0 - step);
        if fl >= f0 {
            return Some((x0 - step, x0 + step));
        }
        (-1.0, fl)
    };
    let (mut prev, mut cur, mut fcur) = (x0, x0 + dir * step, f1);
    let mut s = step;
    for _ in 0..200 {
        s *= 2.0;
        let next = cur + dir * s;
        let fnext = g(next);
        if fnext >= fcur {
            return Some((prev.min(next), prev.max(next)));
        }
        prev = cur;
        cur = next;
        fcur = fnext;
    }
    None
}

/// Euclidean projection onto the probability simplex (sort-based algorithm).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            tau = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - tau).max(0.0)).collect();
    let s: f64 = out.iter().sum();
    if s > 0.0 && (s - 1.0).abs() > 0.0 {
        for x in &mut out {
            *x /= s;
        }
    }
    out
}

/// Central finite-difference gradient.
pub fn finite_difference_gradient<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x: &[f64],
    h: f64,
) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let xi = xp[i];
            xp[i] = xi + h;
            let fp = f(&xp);
            xp[i] = xi - h;
            let fm = f(&xp);
            xp[i] = xi;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn feasible_start(blocks: &[DecisionBlock], dim: usize) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    for b in blocks {
        match b.kind {
            BlockKind::Simplex => {
                let m = b.range.len() as f64;
                x[b.range.clone()].iter_mut().for_each(|v| *v = 1.0 / m);
            }
            BlockKind::Free => {
                for (i, c) in b.range.clone().zip(b.center.iter()) {
                    x[i] = *c;
                }
            }
        }
    }
    x
}

/// Minimizes a convex function over a product of free and simplex blocks.
///
/// `oracle` returns the value and one subgradient. Free blocks must carry a
/// radius enclosing a minimizer around their center.
pub fn minimize_convex<F>(
    mut oracle: F,
    blocks: &[DecisionBlock],
    settings: &SolveSettings,
) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let dim = blocks.iter().map(|b| b.range.end).max().unwrap_or(0);
    let reduced: usize = blocks
        .iter()
        .map(|b| {
            if b.kind == BlockKind::Simplex {
                b.range.len() - 1
            } else {
                b.range.len()
            }
        })
        .sum();
    let x0 = feasible_start(blocks, dim);
    if reduced == 0 {
        let (value, _) = oracle(&x0)?;
        return Ok(Minimum {
            x: x0,
            value,
            iterations: 1,
            final_step: 0.0,
            status: SolveStatus::Trivial,
        });
    }
    let scalar_free = blocks.len() == 1 && blocks[0].kind == BlockKind::Free && dim == 1;
    match settings.method {
        Method::Auto if scalar_free => {
            let b = &blocks[0];
            let step = (b.radius * 0.05).max(1e-8);
            minimize_scalar(
                |z| oracle(&[z]).map(|r| r.0),
                b.center[0],
                step,
                settings.tol_x * 1e-3,
            )
        }
        Method::Auto | Method::Ellipsoid => ellipsoid(oracle, blocks, x0, reduced, settings),
        Method::Subgradient => {
            let mut best = subgradient(&mut oracle, blocks, x0.clone(), settings)?;
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
            for _ in 1..settings.restarts.max(1) {
                let mut start = x0.clone();
                for b in blocks {
                    for i in b.range.clone() {
                        start[i] += b.radius.max(1e-3) * rng.random_range(-0.5..0.5);
                    }
                }
                project_blocks(blocks, &mut start);
                let run = subgradient(&mut oracle, blocks, start, settings)?;
                if run.value < best.value {
                    best = run;
                }
            }
            Ok(best)
        }
    }
}

fn ellipsoid<F>(
    mut oracle: F,
    blocks: &[DecisionBlock],
    x0: Vec<f64>,
    n_eff: usize,
    settings: &SolveSettings,
) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let dim = x0.len();
    let nb = blocks.len() as f64;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for b in blocks {
        let r2 = nb
            * match b.kind {
                BlockKind::Simplex => 1.0,
                BlockKind::Free => b.radius.max(1e-12).powi(2),
            };
        let m = b.range.len() as f64;
        for i in b.range.clone() {
            for j in b.range.clone() {
                let p = match b.kind {
                    BlockKind::Simplex => f64::from(u8::from(i == j)) - 1.0 / m,
                    BlockKind::Free => f64::from(u8::from(i == j)),
                };
                h[(i, j)] = r2 * p;
            }
        }
    }
    let n = n_eff as f64;
    let mut x = DVector::from_vec(x0);
    let mut best_x: Option<Vec<f64>> = None;
    let mut best = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut gap = f64::INFINITY;
    while iterations < settings.max_iter {
        iterations += 1;
        // Most violated nonnegativity constraint of a simplex block, if any.
        let mut cut: Option<(DVector<f64>, f64)> = None;
        let mut worst = 0.0;
        for b in blocks.iter().filter(|b| b.kind == BlockKind::Simplex) {
            for i in b.range.clone() {
                if x[i] < worst {
                    worst = x[i];
                    let mut g = DVector::zeros(dim);
                    g[i] = -1.0;
                    cut = Some((g, -x[i]));
                }
            }
        }
        let (g, excess) = match cut {
            Some(c) => c,
            None => {
                let xs = x.as_slice().to_vec();
                let (f, g) = oracle(&xs)?;
                if !f.is_finite() {
                    return Err(Error::NotConverged {
                        iterations,
                        best_x: xs,
                        best_value: f,
                    });
                }
                if f < best {
                    best = f;
                    best_x = Some(xs);
                }
                let g = DVector::from_vec(g);
                let width = g.dot(&(&h * &g)).max(0.0).sqrt();
                lower = lower.max(f - width);
                gap = best - lower;
                if gap <= settings.tol_obj * best.abs().max(1.0) || width == 0.0 {
                    break;
                }
                (g, f - best)
            }
        };
        let hg = &h * &g;
        let ghg = g.dot(&hg);
        if !(ghg > 0.0) || !ghg.is_finite() {
            break;
        }
        let s = ghg.sqrt();
        let alpha = excess / s;
        if alpha >= 1.0 {
            // The cut leaves nothing: the incumbent is optimal to working precision.
            gap = 0.0;
            break;
        }
        let gt = hg / s;
        if n_eff == 1 {
            x -= &gt * ((1.0 + alpha) / 2.0);
            h *= ((1.0 - alpha) / 2.0).powi(2);
        } else {
            let tau = (1.0 + n * alpha) / (n + 1.0);
            let delta = n * n * (1.0 - alpha * alpha) / (n * n - 1.0);
            let sigma = 2.0 * (1.0 + n * alpha) / ((n + 1.0) * (1.0 + alpha));
            x -= &gt * tau;
            h = (&h - &gt * gt.transpose() * sigma) * delta;
            h = (&h + h.transpose()) * 0.5;
        }
    }
    let Some(mut bx) = best_x else {
        return Err(Error::NotConverged {
            iterations,
            best_x: x.as_slice().to_vec(),
            best_value: f64::INFINITY,
        });
    };
    if gap > settings.tol_obj * best.abs().max(1.0) && iterations >= settings.max_iter {
        return Err(Error::NotConverged {
            iterations,
            best_x: bx,
            best_value: best,
        });
    }
    // Remove round-off drift of the simplex sums.
    let drifted = blocks.iter().any(|b| {
        b.kind == BlockKind::Simplex && (bx[b.range.clone()].iter().sum::<f64>() - 1.0).abs() > 0.0
    });
    if drifted {
        project_blocks(blocks, &mut bx);
        let (f, _) = oracle(&bx)?;
        best = f;
    }
    Ok(Minimum {
        x: bx,
        value: best,
        iterations,
        final_step: gap.max(0.0),
        status: SolveStatus::Converged,
    })
}

fn subgradient<F>(
    oracle: &mut F,
    blocks: &[DecisionBlock],
    mut x: Vec<f64>,
    settings: &SolveSettings,
) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut sum_sq = vec![0.0; blocks.len()];
    let mut avg = x.clone();
    let mut weight = 0.0;
    let mut best_x = x.clone();
    let mut best = f64::INFINITY;
    let mut last_improvement = 0;
    let mut step_len = 0.0;
    let window = (settings.max_iter / 10).max(200);
    for it in 0..settings.max_iter {
        let (f, g) = oracle(&x)?;
        if f < best - settings.tol_obj * best.abs().max(1.0) {
            last_improvement = it;
        }
        if f < best {
            best = f;
            best_x = x.clone();
        }
        if it % 25 == 24 {
            let (fa, _) = oracle(&avg)?;
            if fa < best {
                if fa < best - settings.tol_obj * best.abs().max(1.0) {
                    last_improvement = it;
                }
                best = fa;
                best_x = avg.clone();
            }
        }
        if it - last_improvement > window {
            return Ok(Minimum {
                x: best_x,
                value: best,
                iterations: it + 1,
                final_step: step_len,
                status: SolveStatus::Converged,
            });
        }
        step_len = 0.0;
        for (k, b) in blocks.iter().enumerate() {
            let gb = &g[b.range.clone()];
            sum_sq[k] += gb.iter().map(|v| v * v).sum::<f64>();
            if sum_sq[k] == 0.0 {
                continue;
            }
            let diam = match b.kind {
                BlockKind::Simplex => std::f64::consts::SQRT_2,
                BlockKind::Free => 2.0 * b.radius.max(1e-12),
            };
            let eta = settings.step_scale * diam / sum_sq[k].sqrt();
            for i in b.range.clone() {
                x[i] -= eta * g[i];
            }
            step_len = f64::max(step_len, eta * gb.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        project_blocks(blocks, &mut x);
        weight += 1.0;
        for (a, xi) in avg.iter_mut().zip(&x) {
            *a += (xi - *a) / weight;
        }
    }
    Err(Error::NotConverged {
        iterations: settings.max_iter,
        best_x,
        best_value: best,
    })
}
