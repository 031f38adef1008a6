//! Nadaraya-Watson and nearest-neighbors contextual learners.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{lex_cmp, ContextualDistribution, Dataset, EmpiricalModel, SupervisedSample};
use crate::smoothers::{ln_weights, Bandwidth, Smoother};

/// Mass tolerance used when selecting the active neighborhood.
pub const MASS_TOL: f64 = 1e-9;

/// Secondary ordering applied to samples at equal distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Lexicographic on labels, then on covariates.
    #[default]
    LabelsFirst,
    /// Lexicographic on covariates, then on labels.
    CovariatesFirst,
}

type BaseFn = dyn Fn(&SupervisedSample, &[f64]) -> f64 + Send + Sync;

/// Distance of a sample to a context, made discriminating by a tiebreak.
#[derive(Clone)]
pub struct ProximityFn {
    base: Arc<BaseFn>,
    pub tiebreak: TieBreak,
    name: String,
}

impl fmt::Debug for ProximityFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProximityFn")
            .field("name", &self.name)
            .field("tiebreak", &self.tiebreak)
            .finish()
    }
}

impl ProximityFn {
    pub fn new<F>(name: impl Into<String>, base: F, tiebreak: TieBreak) -> Self
    where
        F: Fn(&SupervisedSample, &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            base: Arc::new(base),
            tiebreak,
            name: name.into(),
        }
    }

    /// Squared Euclidean distance between covariates and context.
    pub fn squared_euclidean() -> Self {
        Self::new(
            "squared-euclidean",
            |m, xbar| m.x.iter().zip(xbar).map(|(a, b)| (a - b) * (a - b)).sum(),
            TieBreak::LabelsFirst,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn distance(&self, m: &SupervisedSample, xbar: &[f64]) -> f64 {
        (self.base)(m, xbar)
    }

    /// Total order on (distance, tiebreak).
    pub fn compare(
        &self,
        a: &SupervisedSample,
        da: f64,
        b: &SupervisedSample,
        db: f64,
    ) -> Ordering {
        da.total_cmp(&db).then_with(|| match self.tiebreak {
            TieBreak::LabelsFirst => lex_cmp(&a.y, &b.y).then_with(|| lex_cmp(&a.x, &b.x)),
            TieBreak::CovariatesFirst => lex_cmp(&a.x, &b.x).then_with(|| lex_cmp(&a.y, &b.y)),
        })
    }
}

/// Empirical covariance of the covariates with 1/n normalization.
pub fn covariate_covariance(data: &Dataset) -> DMatrix<f64> {
    let (n, d) = (data.n() as f64, data.dim_x());
    let mut mean = DVector::zeros(d);
    for s in data.samples() {
        mean += DVector::from_column_slice(&s.x);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for s in data.samples() {
        let c = DVector::from_column_slice(&s.x) - &mean;
        cov += &c * c.transpose();
    }
    cov / n
}

/// Mahalanobis distance `(x - x̄)ᵀ Σ⁻¹ (x - x̄)` with the empirical covariance
/// of the data, ties broken lexicographically on labels then covariates.
pub fn mahalanobis_proximity(data: &Dataset) -> Result<ProximityFn> {
    mahalanobis_from_covariance(covariate_covariance(data))
}

/// Same as [`mahalanobis_proximity`] with `eps·I` added to the covariance.
pub fn mahalanobis_proximity_regularized(data: &Dataset, eps: f64) -> Result<ProximityFn> {
    let d = data.dim_x();
    mahalanobis_from_covariance(covariate_covariance(data) + DMatrix::identity(d, d) * eps)
}

fn mahalanobis_from_covariance(cov: DMatrix<f64>) -> Result<ProximityFn> {
    let eig = cov.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= max * 1e-13 {
        return Err(Error::SingularCovariance);
    }
    let inv = cov.cholesky().ok_or(Error::SingularCovariance)?.inverse();
    let d = inv.nrows();
    Ok(ProximityFn::new(
        "mahalanobis",
        move |m, xbar| {
            let mut total = 0.0;
            for i in 0..d {
                let di = m.x[i] - xbar[i];
                for j in 0..d {
                    total += di * inv[(i, j)] * (m.x[j] - xbar[j]);
                }
            }
            total
        },
        TieBreak::LabelsFirst,
    ))
}

/// Support points ordered by proximity to a context, with prefix masses.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodChain {
    order: Vec<usize>,
    cum: Vec<f64>,
    distances: Vec<f64>,
}

impl NeighborhoodChain {
    /// Number of support points; prefixes run from 0 to this value.
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Support indices from nearest to farthest.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// The `j` nearest support indices.
    pub fn prefix(&self, j: usize) -> &[usize] {
        &self.order[..j]
    }

    /// Probability mass of the `j`-th prefix under the model the chain was built on.
    pub fn mass(&self, j: usize) -> f64 {
        self.cum[j]
    }

    pub fn cumulative_masses(&self) -> &[f64] {
        &self.cum
    }

    /// Distances in chain order.
    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    /// Position of every support index in the chain.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = vec![0; self.order.len()];
        for (pos, &i) in self.order.iter().enumerate() {
            r[i] = pos;
        }
        r
    }

    /// Active neighborhood of the nearest-neighbors learner with `k` of `n`.
    pub fn select(&self, k: usize, n: usize) -> Result<usize> {
        select_prefix(&self.cum, k, n)
    }
}

/// Smallest `j ≥ 1` with prefix mass at least k/n, checking that the
/// (j-1)-prefix carries at most (k-1)/n.
pub fn select_prefix(cum: &[f64], k: usize, n: usize) -> Result<usize> {
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "k = {k} must lie in 1..={n}"
        )));
    }
    let need = k as f64 / n as f64;
    let allow = (k - 1) as f64 / n as f64;
    let j = (1..cum.len())
        .find(|&j| cum[j] >= need - MASS_TOL)
        .unwrap_or(cum.len() - 1);
    assert!(
        cum[j - 1] <= allow + MASS_TOL,
        "no valid neighborhood: prefix mass {} exceeds {allow}",
        cum[j - 1]
    );
    Ok(j)
}

/// Orders the support of `m` by proximity to `xbar`.
pub fn build_neighborhoods(d: &ProximityFn, m: &EmpiricalModel, xbar: &[f64]) -> NeighborhoodChain {
    let dist: Vec<f64> = m.support().iter().map(|s| d.distance(s, xbar)).collect();
    let mut order: Vec<usize> = (0..m.len()).collect();
    order.sort_by(|&a, &b| d.compare(&m.support()[a], dist[a], &m.support()[b], dist[b]));
    let mut cum = Vec::with_capacity(order.len() + 1);
    cum.push(0.0);
    let mut acc = 0.0;
    for &i in &order {
        acc += m.prob()[i];
        cum.push(acc);
    }
    let distances = order.iter().map(|&i| dist[i]).collect();
    NeighborhoodChain {
        order,
        cum,
        distances,
    }
}

/// Kernel-weighted learner.
#[derive(Debug, Clone)]
pub struct NwLearner {
    pub smoother: Smoother,
    pub bandwidth: Bandwidth,
}

impl NwLearner {
    pub fn new(smoother: Smoother, bandwidth: Bandwidth) -> Self {
        Self {
            smoother,
            bandwidth,
        }
    }

    /// Log smoother weight of every support point.
    pub fn ln_smoother(&self, m: &EmpiricalModel, xbar: &[f64]) -> Result<Vec<f64>> {
        check_context(m, xbar)?;
        Ok(ln_weights(
            self.smoother,
            self.bandwidth,
            m.support().iter().map(|s| s.x.as_slice()),
            xbar,
        ))
    }

    pub fn contextualize(
        &self,
        m: &EmpiricalModel,
        xbar: &[f64],
    ) -> Result<ContextualDistribution> {
        let ls = self.ln_smoother(m, xbar)?;
        weighted_labels(m, (0..m.len()).map(|i| (i, ls[i])))
    }
}

/// Nearest-neighbors learner working in multiples of 1/n of probability mass.
#[derive(Debug, Clone)]
pub struct NnLearner {
    pub smoother: Smoother,
    pub bandwidth: Bandwidth,
    pub k: usize,
    pub proximity: ProximityFn,
}

impl NnLearner {
    pub fn new(smoother: Smoother, bandwidth: Bandwidth, k: usize, proximity: ProximityFn) -> Self {
        Self {
            smoother,
            bandwidth,
            k,
            proximity,
        }
    }

    pub fn chain(&self, m: &EmpiricalModel, xbar: &[f64]) -> Result<NeighborhoodChain> {
        check_context(m, xbar)?;
        Ok(build_neighborhoods(&self.proximity, m, xbar))
    }

    pub fn ln_smoother(&self, m: &EmpiricalModel, xbar: &[f64]) -> Result<Vec<f64>> {
        check_context(m, xbar)?;
        Ok(ln_weights(
            self.smoother,
            self.bandwidth,
            m.support().iter().map(|s| s.x.as_slice()),
            xbar,
        ))
    }

    pub fn contextualize(
        &self,
        m: &EmpiricalModel,
        xbar: &[f64],
    ) -> Result<ContextualDistribution> {
        let chain = self.chain(m, xbar)?;
        self.contextualize_with_chain(m, xbar, &chain)
    }

    pub fn contextualize_with_chain(
        &self,
        m: &EmpiricalModel,
        xbar: &[f64],
        chain: &NeighborhoodChain,
    ) -> Result<ContextualDistribution> {
        let j = chain.select(self.k, m.n())?;
        let ls = self.ln_smoother(m, xbar)?;
        weighted_labels(m, chain.prefix(j).iter().map(|&i| (i, ls[i])))
    }
}

/// Either learner.
#[derive(Debug, Clone)]
pub enum Learner {
    Nw(NwLearner),
    Nn(NnLearner),
}

impl Learner {
    pub fn contextualize(
        &self,
        m: &EmpiricalModel,
        xbar: &[f64],
    ) -> Result<ContextualDistribution> {
        match self {
            Learner::Nw(l) => l.contextualize(m, xbar),
            Learner::Nn(l) => l.contextualize(m, xbar),
        }
    }

    pub fn smoother(&self) -> Smoother {
        match self {
            Learner::Nw(l) => l.smoother,
            Learner::Nn(l) => l.smoother,
        }
    }

    pub fn kind(&self) -> Formulation {
        match self {
            Learner::Nw(_) => Formulation::Nw,
            Learner::Nn(_) => Formulation::Nn,
        }
    }
}

/// Which learner a formulation is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Nw,
    Nn,
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Formulation::Nw => "nw",
            Formulation::Nn => "nn",
        })
    }
}

fn check_context(m: &EmpiricalModel, xbar: &[f64]) -> Result<()> {
    if xbar.len() != m.dim_x() {
        return Err(Error::DimensionMismatch {
            expected: m.dim_x(),
            got: xbar.len(),
        });
    }
    if xbar.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("context"));
    }
    Ok(())
}

/// Normalized `S·M` weights over the given (index, ln S) pairs; zero weights dropped.
fn weighted_labels<I>(m: &EmpiricalModel, items: I) -> Result<ContextualDistribution>
where
    I: Iterator<Item = (usize, f64)>,
{
    let items: Vec<(usize, f64)> = items.map(|(i, ls)| (i, ls + m.prob()[i].ln())).collect();
    let top = items.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::EmptyContextWindow);
    }
    let mut labels = Vec::new();
    let mut weights = Vec::new();
    for (i, lw) in items {
        let w = (lw - top).exp();
        if w > 0.0 {
            labels.push(m.support()[i].y.clone());
            weights.push(w);
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    ContextualDistribution::new(labels, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(points: &[(f64, f64)]) -> EmpiricalModel {
        let data = Dataset::from_rows(
            points.iter().map(|p| vec![p.0]).collect(),
            points.iter().map(|p| vec![p.1]).collect(),
        )
        .unwrap();
        EmpiricalModel::from_dataset(&data)
    }

    fn h(v: f64) -> Bandwidth {
        Bandwidth::new(v).unwrap()
    }

    #[test]
    fn nw_window_picks_nearest() {
        let m = model(&[(0.0, 1.0), (1.0, 2.0)]);
        let d = NwLearner::new(Smoother::Uniform, h(0.5))
            .contextualize(&m, &[0.0])
            .unwrap();
        assert_eq!(d.labels, vec![vec![1.0]]);
        assert_eq!(d.weights, vec![1.0]);
    }

    #[test]
    fn nw_wide_window_is_marginal() {
        let m = model(&[(0.0, 1.0), (1.0, 2.0), (1.0, 2.0), (0.3, 5.0)]);
        for s in [Smoother::Uniform, Smoother::Naive] {
            let d = NwLearner::new(s, h(100.0))
                .contextualize(&m, &[0.2])
                .unwrap();
            let marg = m.label_marginal();
            for (a, b) in d.weights.iter().zip(&marg.weights) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn nw_empty_window() {
        let m = model(&[(0.0, 1.0), (1.0, 2.0)]);
        let r = NwLearner::new(Smoother::Epanechnikov, h(0.1)).contextualize(&m, &[5.0]);
        assert_eq!(r, Err(Error::EmptyContextWindow));
    }

    #[test]
    fn nw_far_gaussian_context_stays_finite() {
        let m = model(&[(0.0, 1.0), (1.0, 2.0)]);
        let d = NwLearner::new(Smoother::Gaussian, h(0.01))
            .contextualize(&m, &[100.0])
            .unwrap();
        assert_eq!(d.labels, vec![vec![2.0]]);
    }

    #[test]
    fn chain_basics() {
        let m = model(&[(0.2, 1.0)]);
        let c = build_neighborhoods(&ProximityFn::squared_euclidean(), &m, &[0.0]);
        assert_eq!(c.len(), 1);
        assert_eq!(c.cumulative_masses().len(), 2);

        let m = model(&[(0.3, 1.0), (0.1, 2.0), (0.2, 3.0)]);
        let c = build_neighborhoods(&ProximityFn::squared_euclidean(), &m, &[0.0]);
        let xs: Vec<f64> = c.order().iter().map(|&i| m.support()[i].x[0]).collect();
        assert_eq!(xs, vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn equidistant_tiebreak_by_label() {
        let m = model(&[(1.0, 5.0), (-1.0, 3.0)]);
        let c1 = build_neighborhoods(&ProximityFn::squared_euclidean(), &m, &[0.0]);
        let c2 = build_neighborhoods(&ProximityFn::squared_euclidean(), &m, &[0.0]);
        assert_eq!(c1, c2);
        assert_eq!(m.support()[c1.order()[0]].y, vec![3.0]);
    }

    #[test]
    fn nn_examples() {
        let prox = ProximityFn::squared_euclidean();
        let m = model(&[(0.1, 7.0), (0.2, 8.0), (0.3, 9.0)]);
        let d = NnLearner::new(Smoother::Naive, h(1.0), 1, prox.clone())
            .contextualize(&m, &[0.0])
            .unwrap();
        assert_eq!(d.labels, vec![vec![7.0]]);

        // Nearest point seen twice out of four samples.
        let m = model(&[(0.1, 7.0), (0.1, 7.0), (0.2, 8.0), (0.3, 9.0)]);
        let c = build_neighborhoods(&prox, &m, &[0.0]);
        assert_eq!(c.select(2, 4).unwrap(), 1);
        assert_eq!(c.select(3, 4).unwrap(), 2);
        assert_eq!(c.select(4, 4).unwrap(), 3);
        assert!(c.select(5, 4).is_err());
    }

    #[test]
    fn mahalanobis_examples() {
        let data = Dataset::from_rows(
            vec![
                vec![2.0, 0.0],
                vec![-2.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, -1.0],
            ],
            vec![vec![0.0]; 4],
        )
        .unwrap();
        // Covariance diag(2, 0.5).
        let p = mahalanobis_proximity(&data).unwrap();
        let s = SupervisedSample::new(vec![2.0, 0.0], vec![0.0]);
        assert!((p.distance(&s, &[0.0, 0.0]) - 2.0).abs() < 1e-12);

        let data = Dataset::from_rows(
            vec![
                vec![4.0, 0.0],
                vec![-4.0, 0.0],
                vec![0.0, 2.0],
                vec![0.0, -2.0],
            ],
            vec![vec![0.0]; 4],
        )
        .unwrap();
        // Hand example with covariance diag(4, 1).
        let p =
            mahalanobis_from_covariance(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0])))
                .unwrap();
        assert!((p.distance(&s, &[0.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!(mahalanobis_proximity(&data).is_ok());

        let flat =
            Dataset::from_rows(vec![vec![1.0, 1.0], vec![2.0, 2.0]], vec![vec![0.0]; 2]).unwrap();
        assert_eq!(
            mahalanobis_proximity(&flat).unwrap_err(),
            Error::SingularCovariance
        );
        assert!(mahalanobis_proximity_regularized(&flat, 1e-3).is_ok());
    }

    fn random_model(seed: &[(u8, u8)]) -> EmpiricalModel {
        let pts: Vec<(f64, f64)> = seed
            .iter()
            .map(|&(a, b)| (a as f64 / 4.0, b as f64))
            .collect();
        model(&pts)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn nn_selection_and_nesting(pts in prop::collection::vec((0u8..6, 0u8..4), 1..12), kf in 0.0f64..1.0, xb in -1.0f64..3.0) {
            let m = random_model(&pts);
            let n = m.n();
            let k = 1 + ((n - 1) as f64 * kf).round() as usize;
            let prox = ProximityFn::squared_euclidean();
            let c = build_neighborhoods(&prox, &m, &[xb]);
            prop_assert_eq!(c.len(), m.len());
            for j in 1..=c.len() {
                prop_assert!(c.prefix(j - 1).iter().all(|i| c.prefix(j).contains(i)));
                prop_assert!(c.mass(j) >= c.mass(j - 1));
            }
            let j = c.select(k, n).unwrap();
            prop_assert!(c.mass(j) >= k as f64 / n as f64 - 1e-12);
            prop_assert!(c.mass(j - 1) <= (k - 1) as f64 / n as f64 + 1e-12);
            let d = NnLearner::new(Smoother::Gaussian, h(0.7), k, prox).contextualize(&m, &[xb]).unwrap();
            prop_assert!((d.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            prop_assert!(d.weights.iter().all(|w| *w >= 0.0));
        }

        #[test]
        fn naive_full_neighborhood_is_marginal(pts in prop::collection::vec((0u8..6, 0u8..4), 1..12), xb in -1.0f64..3.0) {
            let m = random_model(&pts);
            let marg = m.label_marginal();
            let nn = NnLearner::new(Smoother::Naive, h(1.0), m.n(), ProximityFn::squared_euclidean());
            let nw = NwLearner::new(Smoother::Naive, h(1.0));
            for d in [nn.contextualize(&m, &[xb]).unwrap(), nw.contextualize(&m, &[xb]).unwrap()] {
                // Compare as label -> weight maps.
                let mut want: Vec<(Vec<f64>, f64)> = marg.labels.iter().cloned().zip(marg.weights.iter().copied()).collect();
                let mut got: Vec<(Vec<f64>, f64)> = d.labels.iter().cloned().zip(d.weights.iter().copied()).collect();
                want.sort_by(|a, b| lex_cmp(&a.0, &b.0).then(a.1.total_cmp(&b.1)));
                got.sort_by(|a, b| lex_cmp(&a.0, &b.0).then(a.1.total_cmp(&b.1)));
                prop_assert_eq!(want.len(), got.len());
                for (a, b) in want.iter().zip(&got) {
                    prop_assert_eq!(&a.0, &b.0);
                    prop_assert!((a.1 - b.1).abs() <= 1e-12);
                }
            }
        }
    }
}
