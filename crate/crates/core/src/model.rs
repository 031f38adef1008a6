//! Datasets, empirical models, contextual distributions and losses.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::ops::Range;

use crate::error::{Error, Result};

/// One covariate-label observation.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl SupervisedSample {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }

    fn bit_key(&self) -> Vec<u64> {
        self.x
            .iter()
            .chain(self.y.iter())
            .map(|v| v.to_bits())
            .collect()
    }
}

/// Lexicographic total order on two float slices.
pub fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (u, v) in a.iter().zip(b) {
        match u.total_cmp(v) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// An ordered, dimension-consistent collection of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<SupervisedSample>,
    dim_x: usize,
    dim_y: usize,
}

impl Dataset {
    pub fn new(samples: Vec<SupervisedSample>) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyData)?;
        let (dim_x, dim_y) = (first.x.len(), first.y.len());
        if dim_x == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        if dim_y == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        for s in &samples {
            if s.x.len() != dim_x {
                return Err(Error::DimensionMismatch {
                    expected: dim_x,
                    got: s.x.len(),
                });
            }
            if s.y.len() != dim_y {
                return Err(Error::DimensionMismatch {
                    expected: dim_y,
                    got: s.y.len(),
                });
            }
            if s.x.iter().chain(&s.y).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("dataset"));
            }
        }
        Ok(Self {
            samples,
            dim_x,
            dim_y,
        })
    }

    /// Convenience constructor from parallel covariate and label rows.
    pub fn from_rows(xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                got: ys.len(),
            });
        }
        Self::new(
            xs.into_iter()
                .zip(ys)
                .map(|(x, y)| SupervisedSample { x, y })
                .collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    pub fn samples(&self) -> &[SupervisedSample] {
        &self.samples
    }

    pub fn labels(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.y.clone()).collect()
    }

    /// Sub-dataset made of the given indices (repetitions allowed).
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        Self::new(idx.iter().map(|&i| self.samples[i].clone()).collect())
    }
}

/// A finitely supported distribution over distinct samples.
///
/// `n` records the size of the dataset the model was fitted on; it is
/// needed by the nearest-neighbors learner, which reasons in multiples of 1/n.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalModel {
    support: Vec<SupervisedSample>,
    prob: Vec<f64>,
    n: usize,
}

impl EmpiricalModel {
    /// Multiplicity-weighted model of a dataset. The support is sorted
    /// lexicographically by (x, y) so the result does not depend on sample order.
    pub fn from_dataset(data: &Dataset) -> Self {
        let mut counts: HashMap<Vec<u64>, (usize, usize)> = HashMap::new();
        for (i, s) in data.samples.iter().enumerate() {
            counts.entry(s.bit_key()).or_insert((i, 0)).1 += 1;
        }
        let mut entries: Vec<(usize, usize)> = counts.into_values().collect();
        entries.sort_by(|a, b| {
            let (sa, sb) = (&data.samples[a.0], &data.samples[b.0]);
            lex_cmp(&sa.x, &sb.x).then_with(|| lex_cmp(&sa.y, &sb.y))
        });
        let n = data.n();
        let support = entries
            .iter()
            .map(|&(i, _)| data.samples[i].clone())
            .collect();
        let prob = entries.iter().map(|&(_, c)| c as f64 / n as f64).collect();
        Self { support, prob, n }
    }

    /// Model with explicit support and weights. Zero weights are dropped.
    pub fn from_parts(support: Vec<SupervisedSample>, prob: Vec<f64>, n: usize) -> Result<Self> {
        if support.len() != prob.len() {
            return Err(Error::DimensionMismatch {
                expected: support.len(),
                got: prob.len(),
            });
        }
        if prob.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidWeights(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = prob.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {total}, not 1"
            )));
        }
        let (support, prob): (Vec<_>, Vec<_>) = support
            .into_iter()
            .zip(prob)
            .filter(|(_, p)| *p > 0.0)
            .unzip();
        if support.is_empty() {
            return Err(Error::EmptyData);
        }
        let mut keys: Vec<Vec<u64>> = support.iter().map(|s| s.bit_key()).collect();
        keys.sort();
        keys.dedup();
        if keys.len() != support.len() {
            return Err(Error::InvalidWeights(
                "support points must be distinct".into(),
            ));
        }
        let total: f64 = prob.iter().sum();
        let prob = prob.into_iter().map(|p| p / total).collect();
        Ok(Self {
            support,
            prob,
            n: n.max(1),
        })
    }

    /// The same support with new weights (e.g. a worst-case model).
    pub fn reweighted(&self, prob: &[f64]) -> Result<Self> {
        Self::from_parts(self.support.clone(), prob.to_vec(), self.n)
    }

    pub fn support(&self) -> &[SupervisedSample] {
        &self.support
    }

    pub fn prob(&self) -> &[f64] {
        &self.prob
    }

    /// Number of training samples the model was built from.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn dim_x(&self) -> usize {
        self.support[0].x.len()
    }

    pub fn dim_y(&self) -> usize {
        self.support[0].y.len()
    }

    /// Distribution of labels, ignoring covariates.
    pub fn label_marginal(&self) -> ContextualDistribution {
        ContextualDistribution {
            labels: self.support.iter().map(|s| s.y.clone()).collect(),
            weights: self.prob.clone(),
        }
    }
}

/// Weighted label distribution output by a learner at a context.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualDistribution {
    pub labels: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl ContextualDistribution {
    pub fn new(labels: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyData);
        }
        if labels.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidWeights(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { labels, weights })
    }

    /// Uniform distribution over the given labels (duplicates count twice).
    pub fn uniform(labels: Vec<Vec<f64>>) -> Result<Self> {
        let w = 1.0 / labels.len().max(1) as f64;
        let weights = vec![w; labels.len()];
        Self::new(labels, weights)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim_y(&self) -> usize {
        self.labels[0].len()
    }

    /// Weighted mean label.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim_y()];
        for (y, w) in self.labels.iter().zip(&self.weights) {
            for (mi, yi) in m.iter_mut().zip(y) {
                *mi += w * yi;
            }
        }
        m
    }
}

/// Shape of one block of decision coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Unconstrained real coordinates.
    Free,
    /// Coordinates constrained to the probability simplex.
    Simplex,
}

/// A contiguous block of decision coordinates with a rough size hint.
///
/// For free blocks `radius` bounds the distance from `center` to any
/// minimizer; solvers use it to size their initial search region.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionBlock {
    pub range: Range<usize>,
    pub kind: BlockKind,
    pub center: Vec<f64>,
    pub radius: f64,
}

/// A loss function convex in the decision for every label.
pub trait Loss: Send + Sync {
    /// Number of decision coordinates.
    fn dim_z(&self) -> usize;

    /// Number of label coordinates, if fixed by the loss.
    fn dim_y(&self) -> Option<usize> {
        None
    }

    /// Loss value; `f64::INFINITY` stands for an infeasible outcome.
    fn value(&self, z: &[f64], y: &[f64]) -> f64;

    /// Writes one subgradient in z into `g`.
    fn subgradient(&self, z: &[f64], y: &[f64], g: &mut [f64]);

    /// Decision blocks, sized using the labels the loss will be averaged over.
    fn blocks(&self, labels: &[Vec<f64>]) -> Vec<DecisionBlock>;

    /// Euclidean projection onto the feasible set.
    fn project(&self, z: &mut [f64]) {
        project_blocks(&self.blocks(&[]), z);
    }
}

/// Projects each simplex block of `z` onto the probability simplex.
pub fn project_blocks(blocks: &[DecisionBlock], z: &mut [f64]) {
    for b in blocks {
        if b.kind == BlockKind::Simplex {
            let p = crate::engine::project_simplex(&z[b.range.clone()]);
            z[b.range.clone()].copy_from_slice(&p);
        }
    }
}

/// Loss assembled from closures, handy for tests and ad-hoc problems.
pub struct FnLoss<V, G>
where
    V: Fn(&[f64], &[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync,
{
    pub dim: usize,
    pub value: V,
    pub grad: G,
    /// Radius hint for the free decision region around the origin.
    pub radius: f64,
}

impl<V, G> Loss for FnLoss<V, G>
where
    V: Fn(&[f64], &[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync,
{
    fn dim_z(&self) -> usize {
        self.dim
    }

    fn value(&self, z: &[f64], y: &[f64]) -> f64 {
        (self.value)(z, y)
    }

    fn subgradient(&self, z: &[f64], y: &[f64], g: &mut [f64]) {
        (self.grad)(z, y, g)
    }

    fn blocks(&self, _labels: &[Vec<f64>]) -> Vec<DecisionBlock> {
        vec![DecisionBlock {
            range: 0..self.dim,
            kind: BlockKind::Free,
            center: vec![0.0; self.dim],
            radius: self.radius,
        }]
    }
}

/// Expected loss `Σ w·L(z, y)`; infinite if any weighted term is infinite.
pub fn expected_loss<L: Loss + ?Sized>(
    loss: &L,
    z: &[f64],
    dist: &ContextualDistribution,
) -> Result<f64> {
    if z.len() != loss.dim_z() {
        return Err(Error::DimensionMismatch {
            expected: loss.dim_z(),
            got: z.len(),
        });
    }
    if let Some(d) = loss.dim_y() {
        if dist.dim_y() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: dist.dim_y(),
            });
        }
    }
    let mut total = 0.0;
    for (y, &w) in dist.labels.iter().zip(&dist.weights) {
        if w > 0.0 {
            let v = loss.value(z, y);
            if v == f64::INFINITY {
                return Ok(f64::INFINITY);
            }
            total += w * v;
        }
    }
    Ok(total)
}

/// Expected loss together with the weighted subgradient.
pub fn expected_loss_and_subgradient<L: Loss + ?Sized>(
    loss: &L,
    z: &[f64],
    dist: &ContextualDistribution,
) -> Result<(f64, Vec<f64>)> {
    let value = expected_loss(loss, z, dist)?;
    let mut g = vec![0.0; z.len()];
    let mut gi = vec![0.0; z.len()];
    for (y, &w) in dist.labels.iter().zip(&dist.weights) {
        if w > 0.0 {
            loss.subgradient(z, y, &mut gi);
            for (a, b) in g.iter_mut().zip(&gi) {
                *a += w * b;
            }
        }
    }
    Ok((value, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs_loss() -> impl Loss {
        FnLoss {
            dim: 1,
            value: |z: &[f64], y: &[f64]| (z[0] - y[0]).abs(),
            grad: |z: &[f64], y: &[f64], g: &mut [f64]| g[0] = (z[0] - y[0]).signum(),
            radius: 10.0,
        }
    }

    fn ds(points: &[(f64, f64)]) -> Dataset {
        Dataset::from_rows(
            points.iter().map(|p| vec![p.0]).collect(),
            points.iter().map(|p| vec![p.1]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_point_model() {
        let m = EmpiricalModel::from_dataset(&ds(&[(0.0, 1.0)]));
        assert_eq!(m.len(), 1);
        assert_eq!(m.prob(), &[1.0]);
    }

    #[test]
    fn multiplicities() {
        let m = EmpiricalModel::from_dataset(&ds(&[(0.0, 1.0), (0.0, 1.0), (1.0, 2.0)]));
        assert_eq!(m.len(), 2);
        assert!((m.prob()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.prob()[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.n(), 3);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert_eq!(Dataset::new(vec![]), Err(Error::EmptyData));
    }

    #[test]
    fn non_finite_rejected() {
        let r = Dataset::from_rows(vec![vec![f64::NAN]], vec![vec![1.0]]);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let r = Dataset::from_rows(vec![vec![1.0], vec![1.0, 2.0]], vec![vec![1.0], vec![1.0]]);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn permutation_and_duplication_invariance() {
        let a = ds(&[(0.0, 1.0), (2.0, 1.0), (1.0, 5.0)]);
        let b = ds(&[(1.0, 5.0), (0.0, 1.0), (2.0, 1.0)]);
        let ma = EmpiricalModel::from_dataset(&a);
        let mb = EmpiricalModel::from_dataset(&b);
        assert_eq!(ma, mb);
        let doubled = ds(&[
            (0.0, 1.0),
            (2.0, 1.0),
            (1.0, 5.0),
            (0.0, 1.0),
            (2.0, 1.0),
            (1.0, 5.0),
        ]);
        let md = EmpiricalModel::from_dataset(&doubled);
        assert_eq!(md.support(), ma.support());
        for (p, q) in md.prob().iter().zip(ma.prob()) {
            assert!((p - q).abs() < 1e-15);
        }
    }

    #[test]
    fn expected_loss_examples() {
        let l = abs_loss();
        let d = ContextualDistribution::uniform(vec![vec![-1.0], vec![1.0]]).unwrap();
        assert_eq!(expected_loss(&l, &[0.0], &d).unwrap(), 1.0);
        let d = ContextualDistribution::new(vec![vec![1.0], vec![3.0]], vec![0.25, 0.75]).unwrap();
        assert!((expected_loss(&l, &[1.0], &d).unwrap() - 1.5).abs() < 1e-15);
        assert!(matches!(
            expected_loss(&l, &[1.0, 2.0], &d),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn infinite_loss_propagates() {
        let l = FnLoss {
            dim: 1,
            value: |z: &[f64], y: &[f64]| if y[0] > z[0] { f64::INFINITY } else { 0.0 },
            grad: |_: &[f64], _: &[f64], g: &mut [f64]| g[0] = 0.0,
            radius: 1.0,
        };
        let d = ContextualDistribution::new(vec![vec![0.0], vec![2.0]], vec![0.5, 0.5]).unwrap();
        assert_eq!(expected_loss(&l, &[1.0], &d).unwrap(), f64::INFINITY);
        let d = ContextualDistribution::new(vec![vec![0.0], vec![2.0]], vec![1.0, 0.0]).unwrap();
        assert_eq!(expected_loss(&l, &[1.0], &d).unwrap(), 0.0);
    }

    #[test]
    fn reweighting_drops_zeros() {
        let m = EmpiricalModel::from_dataset(&ds(&[(0.0, 1.0), (1.0, 2.0)]));
        let w = m.reweighted(&[1.0, 0.0]).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.n(), 2);
        assert!(m.reweighted(&[0.7, 0.7]).is_err());
    }
}
