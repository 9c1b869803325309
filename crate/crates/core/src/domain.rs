//! The noisy sim-max numerosity domain: states `0..n` on a line, a prior over
//! states, Gaussian similarity payoffs, and a similarity-based confusion
//! channel.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::probkit::{row_normalize, ConditionalDistribution, ProbVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    #[default]
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainParams {
    pub n: usize,
    pub gamma: f64,
    pub alpha: f64,
    #[serde(default)]
    pub prior: PriorKind,
}

impl DomainParams {
    pub fn new(n: usize, gamma: f64, alpha: f64) -> Result<Self> {
        let params = Self {
            n,
            gamma,
            alpha,
            prior: PriorKind::Uniform,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        if !(self.gamma >= 0.0) {
            return Err(invalid("gamma", format!("must be >= 0, got {}", self.gamma)));
        }
        if !(self.alpha >= 0.0) {
            return Err(invalid("alpha", format!("must be >= 0, got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self {
            gamma,
            ..self.clone()
        }
    }
}

/// `exp(-gamma (x - x')^2)` on raw state indices.
pub fn similarity(x: usize, x_prime: usize, gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(invalid("gamma", format!("must be >= 0, got {gamma}")));
    }
    Ok(similarity_unchecked(x, x_prime, gamma))
}

fn similarity_unchecked(x: usize, x_prime: usize, sharpness: f64) -> f64 {
    let d = x as f64 - x_prime as f64;
    if sharpness == 0.0 {
        return 1.0;
    }
    (-sharpness * d * d).exp()
}

fn similarity_matrix(n: usize, sharpness: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(i, j)| similarity_unchecked(i, j, sharpness))
}

/// Utility `u(x, x')` as an `n × n` matrix.
pub fn build_utility_matrix(params: &DomainParams) -> Result<Array2<f64>> {
    params.validate()?;
    Ok(similarity_matrix(params.n, params.gamma))
}

/// Confusion channel `p(x'|x)`: similarity rows at sharpness `alpha`,
/// normalized over the `n` states (no wraparound at the ends).
pub fn build_confusion_matrix(params: &DomainParams) -> Result<ConditionalDistribution> {
    params.validate()?;
    row_normalize(similarity_matrix(params.n, params.alpha))
}

/// One fully specified game instance.
///
/// The single confusion matrix is used in every direction: row `x` is read
/// both as `p(x_o | x_a = x)` and as the belief `p(x_a | x_o = x)`.
#[derive(Debug, Clone)]
pub struct GameDomain {
    pub params: DomainParams,
    pub prior: ProbVector,
    pub utility: Array2<f64>,
    pub confusion: ConditionalDistribution,
}

impl GameDomain {
    pub fn n(&self) -> usize {
        self.params.n
    }
}

pub fn build_domain(params: &DomainParams) -> Result<GameDomain> {
    params.validate()?;
    let prior = match params.prior {
        PriorKind::Uniform => ProbVector::uniform(params.n)?,
    };
    Ok(GameDomain {
        params: params.clone(),
        prior,
        utility: build_utility_matrix(params)?,
        confusion: build_confusion_matrix(params)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_examples() {
        assert_eq!(similarity(7, 7, 3.0).unwrap(), 1.0);
        assert_eq!(similarity(0, 99, 0.0).unwrap(), 1.0);
        let s = similarity(0, 2, 0.5).unwrap();
        assert!((s - (-2.0f64).exp()).abs() < 1e-15);
        assert!((s - 0.13534).abs() < 1e-5);
        assert!(similarity(0, 1, -0.1).is_err());
    }

    #[test]
    fn utility_examples() {
        let p = DomainParams::new(4, 0.0, 0.5).unwrap();
        assert!(build_utility_matrix(&p).unwrap().iter().all(|&u| u == 1.0));

        let p = DomainParams::new(5, 1e4, 0.5).unwrap();
        let u = build_utility_matrix(&p).unwrap();
        assert_eq!(u, Array2::eye(5));

        let p = DomainParams::new(3, 0.5, 0.5).unwrap();
        let u = build_utility_matrix(&p).unwrap();
        let expected = [
            [1.0, 0.6065, 0.1353],
            [0.6065, 1.0, 0.6065],
            [0.1353, 0.6065, 1.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!((u[[i, j]] - expected[i][j]).abs() < 1e-4);
                assert_eq!(u[[i, j]], u[[j, i]]);
            }
        }
    }

    #[test]
    fn confusion_examples() {
        let p = DomainParams::new(6, 0.1, 1e4).unwrap();
        assert_eq!(build_confusion_matrix(&p).unwrap().matrix(), &Array2::eye(6));

        let p = DomainParams::new(4, 0.1, 0.0).unwrap();
        let c = build_confusion_matrix(&p).unwrap();
        assert!(c.matrix().iter().all(|&v| (v - 0.25).abs() < 1e-15));

        let p = DomainParams::new(3, 0.1, 0.5).unwrap();
        let c = build_confusion_matrix(&p).unwrap();
        let row: Vec<f64> = c.row(0).to_vec();
        let expected = [0.5741, 0.3482, 0.0777];
        for (a, b) in row.iter().zip(expected) {
            assert!((a - b).abs() < 1e-4, "{row:?}");
        }
    }

    #[test]
    fn confusion_matches_brute_force_renormalization() {
        for n in 1..=10 {
            for &alpha in &[0.0, 0.25, 0.5, 2.0] {
                let p = DomainParams::new(n, 1.0, alpha).unwrap();
                let c = build_confusion_matrix(&p).unwrap();
                for x in 0..n {
                    let weights: Vec<f64> =
                        (0..n).map(|y| similarity(x, y, alpha).unwrap()).collect();
                    let z: f64 = weights.iter().sum();
                    for y in 0..n {
                        assert_eq!(c.matrix()[[x, y]], weights[y] / z);
                    }
                }
            }
        }
    }

    #[test]
    fn confusion_row_max_on_diagonal_and_interior_symmetry() {
        let d = build_domain(&DomainParams::new(100, 0.1, 0.5).unwrap()).unwrap();
        let c = d.confusion.matrix();
        for x in 0..100 {
            let row = c.row(x);
            let argmax = (0..100).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(argmax, x);
        }
        // sigma = 1, so five states away from either end is interior
        for x in 5..95 {
            for k in 1..=5 {
                assert!((c[[x, x - k]] - c[[x, x + k]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn utility_decreases_with_distance() {
        let u = build_utility_matrix(&DomainParams::new(30, 0.01, 0.5).unwrap()).unwrap();
        for d in 1..30 {
            assert!(u[[0, d]] < u[[0, d - 1]]);
        }
    }

    #[test]
    fn domain_examples() {
        let d = build_domain(&DomainParams::new(1, 2.0, 0.5).unwrap()).unwrap();
        assert_eq!(d.prior.as_slice(), &[1.0]);
        assert_eq!(d.utility, ndarray::array![[1.0]]);
        assert_eq!(d.confusion.matrix(), &ndarray::array![[1.0]]);

        let d = build_domain(&DomainParams::new(100, 1.0, 0.5).unwrap()).unwrap();
        assert!(d.prior.as_slice().iter().all(|&p| p == 0.01));
        // interior rows are a unit-width discretized Gaussian
        let row = d.confusion.row(50);
        let mean: f64 = (0..100).map(|x| x as f64 * row[x]).sum();
        let var: f64 = (0..100).map(|x| (x as f64 - mean).powi(2) * row[x]).sum();
        assert!((mean - 50.0).abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-6, "variance {var}");
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(DomainParams::new(0, 1.0, 0.5).is_err());
        assert!(DomainParams::new(3, -1.0, 0.5).is_err());
        assert!(DomainParams::new(3, 1.0, f64::NAN).is_err());
    }
}
