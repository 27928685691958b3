//! Validated finite chains, distributions and total-variation metrics.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Default tolerance on row sums (and distribution sums) at ingestion.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Largest `‖πP − π‖_∞` accepted by the stationarity guard.
pub const STATIONARY_RESIDUAL: f64 = 1e-9;

/// Ordered, distinct state labels. Cloning shares the label storage.
#[derive(Clone)]
pub struct StateSpace {
    labels: Arc<[String]>,
}

impl StateSpace {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::EmptyStateSpace);
        }
        let mut seen = std::collections::HashSet::with_capacity(labels.len());
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        Ok(Self { labels: labels.into() })
    }

    /// States labelled `"0"`, `"1"`, ... `"n-1"`.
    pub fn indexed(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| i.to_string()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownState(label.to_string()))
    }

    pub fn check_index(&self, index: usize) -> Result<usize> {
        if index < self.len() {
            Ok(index)
        } else {
            Err(Error::StateOutOfRange { index, size: self.len() })
        }
    }
}

impl PartialEq for StateSpace {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.labels, &other.labels) || self.labels == other.labels
    }
}

impl fmt::Debug for StateSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.labels.iter()).finish()
    }
}

// Rows whose floating-point sum is 1 up to summation rounding are kept
// bit-for-bit, so re-ingesting an already-normalized matrix is the identity.
fn normalize_in_place(values: &mut [f64]) {
    let sum: f64 = values.iter().sum();
    let rounding = values.len() as f64 * f64::EPSILON;
    if (sum - 1.0).abs() > rounding {
        values.iter_mut().for_each(|v| *v /= sum);
    }
}

/// Row-stochastic square matrix over a labelled state space.
#[derive(Clone, PartialEq)]
pub struct StochasticMatrix {
    space: StateSpace,
    entries: Matrix,
}

/// Checks `raw` is square, non-negative and row-stochastic within `tolerance`;
/// accepted rows are renormalized.
pub fn validate_stochastic(
    raw: &[Vec<f64>],
    labels: &[String],
    tolerance: f64,
) -> Result<StochasticMatrix> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tolerance}")));
    }
    let n = raw.len();
    for (row, r) in raw.iter().enumerate() {
        if r.len() != n {
            return Err(Error::NonSquare { row, len: r.len(), expected: n });
        }
    }
    if labels.len() != n {
        return Err(Error::LabelCount { labels: labels.len(), size: n });
    }
    let space = StateSpace::new(labels.iter().cloned())?;
    for (row, r) in raw.iter().enumerate() {
        for (col, &value) in r.iter().enumerate() {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::NegativeEntry { row, col, value });
            }
        }
    }
    let worst = raw
        .iter()
        .enumerate()
        .map(|(i, r)| (i, r.iter().sum::<f64>()))
        .fold(None, |acc: Option<(usize, f64)>, (i, s)| match acc {
            Some((_, best)) if (best - 1.0).abs() >= (s - 1.0).abs() => acc,
            _ => Some((i, s)),
        });
    if let Some((row, sum)) = worst {
        if (sum - 1.0).abs() > tolerance {
            return Err(Error::RowSumOutOfTolerance { row, sum, tolerance });
        }
    }
    let mut entries = Matrix::from_rows(raw);
    for i in 0..n {
        normalize_in_place(entries.row_mut(i));
    }
    Ok(StochasticMatrix { space, entries })
}

impl StochasticMatrix {
    /// Validates rows against the default tolerance.
    pub fn new(space: StateSpace, rows: &[Vec<f64>]) -> Result<Self> {
        validate_stochastic(rows, space.labels(), ROW_SUM_TOLERANCE)
    }

    /// Validated matrix with states labelled by index.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(StateSpace::indexed(rows.len())?, rows)
    }

    /// Wraps a product of stochastic matrices; closure under products makes
    /// re-validation unnecessary.
    pub(crate) fn from_parts(space: StateSpace, entries: Matrix) -> Self {
        debug_assert_eq!(space.len(), entries.rows());
        Self { space, entries }
    }

    pub fn identity(space: StateSpace) -> Self {
        let n = space.len();
        Self { space, entries: Matrix::identity(n) }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn n(&self) -> usize {
        self.space.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.entries.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries.to_rows()
    }

    pub fn is_positive(&self) -> bool {
        self.entries.as_slice().iter().all(|&v| v > 0.0)
    }

    /// Smallest entry of the matrix.
    pub fn min_entry(&self) -> f64 {
        self.entries.as_slice().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn product(&self, other: &Self) -> Result<Self> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch);
        }
        Ok(Self::from_parts(self.space.clone(), self.entries.matmul(&other.entries)))
    }

    /// `P^k` by binary exponentiation; `P^0` is the identity.
    pub fn power(&self, mut k: u64) -> Self {
        let mut result: Option<Matrix> = None;
        let mut base = self.entries.clone();
        while k > 0 {
            if k & 1 == 1 {
                result = Some(match result {
                    None => base.clone(),
                    Some(r) => r.matmul(&base),
                });
            }
            k >>= 1;
            if k > 0 {
                base = base.matmul(&base);
            }
        }
        let entries = result.unwrap_or_else(|| Matrix::identity(self.n()));
        Self::from_parts(self.space.clone(), entries)
    }

    /// `σ P^steps`.
    pub fn evolve(&self, sigma: &Distribution, steps: u64) -> Result<Distribution> {
        if sigma.space != self.space {
            return Err(Error::SpaceMismatch);
        }
        let mut probs = sigma.probs.clone();
        for _ in 0..steps {
            probs = self.entries.left_mul(&probs);
        }
        Ok(Distribution { space: self.space.clone(), probs })
    }

    /// Distribution in row `i`, i.e. the law after one step from state `i`.
    pub fn row_distribution(&self, i: usize) -> Distribution {
        Distribution { space: self.space.clone(), probs: self.row(i).to_vec() }
    }

    /// `‖πP − π‖_∞`.
    pub fn stationarity_residual(&self, pi: &Distribution) -> Result<f64> {
        if pi.space != self.space {
            return Err(Error::SpaceMismatch);
        }
        let next = self.entries.left_mul(&pi.probs);
        Ok(next.iter().zip(&pi.probs).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub(crate) fn ensure_stationary(&self, pi: &Distribution) -> Result<()> {
        let residual = self.stationarity_residual(pi)?;
        if residual > STATIONARY_RESIDUAL {
            return Err(Error::NotStationary { residual });
        }
        Ok(())
    }

    /// Matrix whose every row is `pi`.
    pub fn rank_one(pi: &Distribution) -> Self {
        let n = pi.len();
        let entries = Matrix::from_fn(n, n, |_, j| pi.probs[j]);
        Self::from_parts(pi.space.clone(), entries)
    }
}

impl fmt::Debug for StochasticMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StochasticMatrix")
            .field("states", &self.space)
            .field("rows", &self.entries.to_rows())
            .finish()
    }
}

/// Probability row vector.
#[derive(Clone, PartialEq)]
pub struct Distribution {
    space: StateSpace,
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(space: StateSpace, probs: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(space, probs, ROW_SUM_TOLERANCE)
    }

    pub fn with_tolerance(space: StateSpace, mut probs: Vec<f64>, tolerance: f64) -> Result<Self> {
        if probs.len() != space.len() {
            return Err(Error::LabelCount { labels: space.len(), size: probs.len() });
        }
        if let Some((col, &value)) =
            probs.iter().enumerate().find(|(_, &v)| !(v >= 0.0) || !v.is_finite())
        {
            return Err(Error::NegativeEntry { row: 0, col, value });
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > tolerance {
            return Err(Error::NotNormalized { sum, tolerance });
        }
        normalize_in_place(&mut probs);
        Ok(Self { space, probs })
    }

    /// Normalizes non-negative weights with a positive total.
    pub fn from_weights(space: StateSpace, weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidParameter(format!("weights sum to {total}")));
        }
        let probs = weights.iter().map(|w| w / total).collect();
        Self::new(space, probs)
    }

    pub fn point_mass(space: StateSpace, state: usize) -> Result<Self> {
        space.check_index(state)?;
        let mut probs = vec![0.0; space.len()];
        probs[state] = 1.0;
        Ok(Self { space, probs })
    }

    pub fn uniform(space: StateSpace) -> Self {
        let n = space.len();
        Self { space, probs: vec![1.0 / n as f64; n] }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// `max_x |self(x) − other(x)|`; both sides must share a state space.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch);
        }
        Ok(self.probs.iter().zip(&other.probs).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

impl fmt::Debug for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.probs.iter()).finish()
    }
}

impl Serialize for Distribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(self.len()))?;
        for (label, p) in self.space.labels().iter().zip(&self.probs) {
            map.serialize_entry(label, p)?;
        }
        map.end()
    }
}

/// Total-variation distance, a value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct TvDistance(f64);

impl TvDistance {
    pub fn value(self) -> f64 {
        self.0
    }
}

fn half_l1(a: &[f64], b: &[f64]) -> f64 {
    let d = 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    d.clamp(0.0, 1.0)
}

/// `½ Σ |μ(x) − ν(x)|`.
pub fn tv_distance(mu: &Distribution, nu: &Distribution) -> Result<TvDistance> {
    if mu.space != nu.space {
        return Err(Error::SpaceMismatch);
    }
    Ok(TvDistance(half_l1(&mu.probs, &nu.probs)))
}

/// Worst-case total-variation distance between the rows of `pt` and `pi`.
pub(crate) fn worst_row_tv(pt: &Matrix, pi: &[f64]) -> f64 {
    (0..pt.rows()).map(|x| half_l1(pt.row(x), pi)).fold(0.0, f64::max)
}

/// `d(t) = max_x ‖P^t(x,·) − π‖_TV`.
pub fn distance_from_stationary(p: &StochasticMatrix, pi: &Distribution, t: u64) -> Result<f64> {
    p.ensure_stationary(pi)?;
    Ok(worst_row_tv(p.power(t).matrix(), &pi.probs))
}

/// `d(0), d(1), ..., d(horizon)` by successive multiplication.
pub fn distance_curve(p: &StochasticMatrix, pi: &Distribution, horizon: u64) -> Result<Vec<f64>> {
    p.ensure_stationary(pi)?;
    let mut pt = Matrix::identity(p.n());
    let mut out = Vec::with_capacity(horizon as usize + 1);
    out.push(worst_row_tv(&pt, &pi.probs));
    for _ in 0..horizon {
        pt = pt.matmul(p.matrix());
        out.push(worst_row_tv(&pt, &pi.probs));
    }
    Ok(out)
}

/// Smallest entry of `p`.
pub fn min_entry(p: &StochasticMatrix) -> f64 {
    p.min_entry()
}
