//! Discrete probability and information-theory primitives.
//!
//! All information quantities are in bits. The conventions `0 log 0 = 0` and
//! `0 log (0/0) = 0` hold everywhere.
//!
//! | Function | Quantity |
//! |----------|----------|
//! | [`entropy`] | H(p) = -Σ p log₂ p |
//! | [`kl_divergence`] | D[p‖q] = Σ p log₂(p/q) |
//! | [`mutual_information`] | I(X;Y) = D[p(x,y) ‖ p(x)p(y)] |
//! | [`bayes_invert`] | q(i\|j) ∝ p(i) c(j\|i) |

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a distribution at construction.
pub const NORMALIZATION_TOL: f64 = 1e-9;

fn validate_weights(entries: ArrayView1<'_, f64>) -> Result<()> {
    if entries.is_empty() {
        return Err(Error::Empty);
    }
    let mut sum = 0.0;
    for (index, &value) in entries.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::InvalidEntry { index, value });
        }
        sum += value;
    }
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized { sum });
    }
    Ok(())
}

/// A probability vector over a finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Array1<f64>);

impl ProbVector {
    pub fn new(entries: impl Into<Array1<f64>>) -> Result<Self> {
        let entries = entries.into();
        validate_weights(entries.view())?;
        Ok(Self(entries))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty);
        }
        Ok(Self(Array1::from_elem(n, 1.0 / n as f64)))
    }

    pub fn point_mass(n: usize, index: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: index + 1,
            });
        }
        let mut entries = Array1::zeros(n);
        entries[index] = 1.0;
        Ok(Self(entries))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice().expect("contiguous")
    }

    pub fn into_array(self) -> Array1<f64> {
        self.0
    }
}

/// A row-stochastic matrix: one probability vector per conditioning value.
///
/// Shape is `(n_cond, n_support)` and cannot change after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDistribution(Array2<f64>);

impl ConditionalDistribution {
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::Empty);
        }
        for row in matrix.rows() {
            validate_weights(row)?;
        }
        Ok(Self(matrix))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows_to_matrix(rows)?)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(Array2::eye(n))
    }

    pub fn uniform(n_cond: usize, n_support: usize) -> Result<Self> {
        if n_support == 0 {
            return Err(Error::Empty);
        }
        Self::new(Array2::from_elem(
            (n_cond, n_support),
            1.0 / n_support as f64,
        ))
    }

    pub fn n_cond(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_support(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.0
    }

    /// Sum of absolute elementwise differences.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        check_shape(self.shape(), other.shape())?;
        Ok(self
            .0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .sum())
    }

    /// Maximum absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        check_shape(self.shape(), other.shape())?;
        Ok(self
            .0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// A joint distribution over a product support.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution(Array2<f64>);

impl JointDistribution {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty);
        }
        let flat = entries.iter().copied().collect::<Array1<f64>>();
        validate_weights(flat.view())?;
        Ok(Self(entries))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows_to_matrix(rows)?)
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn marginal_rows(&self) -> Array1<f64> {
        self.0.sum_axis(Axis(1))
    }

    pub fn marginal_cols(&self) -> Array1<f64> {
        self.0.sum_axis(Axis(0))
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.t().to_owned())
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let n_cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n_cols) {
        return Err(Error::RaggedRows);
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), n_cols), flat).map_err(|_| Error::RaggedRows)
}

fn check_shape(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected.0 != found.0 {
        return Err(Error::DimensionMismatch {
            expected: expected.0,
            found: found.0,
        });
    }
    if expected.1 != found.1 {
        return Err(Error::DimensionMismatch {
            expected: expected.1,
            found: found.1,
        });
    }
    Ok(())
}

pub(crate) fn xlog2x(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// Entropy in bits of unchecked non-negative weights.
pub(crate) fn entropy_of<'a>(weights: impl IntoIterator<Item = &'a f64>) -> f64 {
    -weights.into_iter().map(|&p| xlog2x(p)).sum::<f64>()
}

pub fn entropy(p: &ProbVector) -> f64 {
    entropy_of(p.as_slice()).max(0.0)
}

pub fn kl_divergence(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    let mut total = 0.0;
    for (index, (&pi, &qi)) in p.as_slice().iter().zip(q.as_slice()).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::AbsoluteContinuityViolation { index, p: pi });
        }
        total += pi * (pi.log2() - qi.log2());
    }
    Ok(total.max(0.0))
}

/// Mutual information of unchecked non-negative joint weights summing to one.
pub(crate) fn mutual_information_of(joint: &Array2<f64>) -> f64 {
    let rows = joint.sum_axis(Axis(1));
    let cols = joint.sum_axis(Axis(0));
    let mut total = 0.0;
    for ((i, j), &pij) in joint.indexed_iter() {
        if pij > 0.0 {
            // log form: the product of two tiny marginals can underflow
            total += pij * (pij.log2() - rows[i].log2() - cols[j].log2());
        }
    }
    total.max(0.0)
}

pub fn mutual_information(joint: &JointDistribution) -> f64 {
    mutual_information_of(joint.entries())
}

pub fn joint_from_prior_and_channel(
    prior: &ProbVector,
    channel: &ConditionalDistribution,
) -> Result<JointDistribution> {
    if prior.len() != channel.n_cond() {
        return Err(Error::DimensionMismatch {
            expected: channel.n_cond(),
            found: prior.len(),
        });
    }
    let p = prior.as_array().view().insert_axis(Axis(1));
    Ok(JointDistribution(channel.matrix() * &p))
}

/// Posterior `q(i|j) ∝ prior_i · channel[i][j]`, one row per `j`.
///
/// A `j` with zero total mass gets the prior as its row.
pub fn bayes_invert(
    prior: &ProbVector,
    channel: &ConditionalDistribution,
) -> Result<ConditionalDistribution> {
    let joint = joint_from_prior_and_channel(prior, channel)?;
    Ok(ConditionalDistribution(posterior_rows(
        joint.entries(),
        prior.as_array(),
    )))
}

/// Normalizes the columns of a joint-like matrix into rows of a posterior,
/// falling back to `fallback` for columns with no mass.
pub(crate) fn posterior_rows(joint: &Array2<f64>, fallback: &Array1<f64>) -> Array2<f64> {
    let mut posterior = joint.t().to_owned();
    for mut row in posterior.rows_mut() {
        let total = row.sum();
        if total > 0.0 {
            row /= total;
        } else {
            row.assign(fallback);
        }
    }
    posterior
}

/// What [`row_normalize_with`] does with an all-zero row.
#[derive(Debug, Clone, Copy)]
pub enum ZeroRowPolicy<'a> {
    Reject,
    Fill(&'a ProbVector),
}

/// Entries below this are zeroed by [`flush_tiny`], so that no product of
/// two entries can underflow into subnormals, which slow matrix products by
/// an order of magnitude. The perturbation is far below every tolerance.
pub(crate) const FLUSH_BELOW: f64 = 1e-150;

pub(crate) fn flush_tiny(mut m: Array2<f64>) -> Array2<f64> {
    m.mapv_inplace(|v| if v.abs() < FLUSH_BELOW { 0.0 } else { v });
    m
}

pub fn row_normalize(raw: Array2<f64>) -> Result<ConditionalDistribution> {
    row_normalize_with(raw, ZeroRowPolicy::Reject)
}

pub fn row_normalize_with(
    mut raw: Array2<f64>,
    policy: ZeroRowPolicy<'_>,
) -> Result<ConditionalDistribution> {
    if let ZeroRowPolicy::Fill(fill) = policy {
        if fill.len() != raw.ncols() {
            return Err(Error::DimensionMismatch {
                expected: raw.ncols(),
                found: fill.len(),
            });
        }
    }
    for (i, mut row) in raw.rows_mut().into_iter().enumerate() {
        if let Some((index, &value)) = row
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
        {
            return Err(Error::InvalidEntry { index, value });
        }
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.mapv_inplace(|v| v / total);
        } else {
            match policy {
                ZeroRowPolicy::Reject => return Err(Error::ZeroRow { row: i }),
                ZeroRowPolicy::Fill(fill) => row.assign(fill.as_array()),
            }
        }
    }
    ConditionalDistribution::new(raw)
}
