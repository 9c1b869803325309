//! Comparison systems: meaning permutations of evolved encoders, and the
//! finite-population replicator-mutator dynamic of Nowak & Krakauer (1999).

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::probkit::ConditionalDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationParams {
    pub tau: f64,
    pub seed: u64,
}

impl PermutationParams {
    pub fn new(tau: f64, seed: u64) -> Result<Self> {
        let params = Self { tau, seed };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(invalid("tau", format!("must be > 0, got {}", self.tau)));
        }
        Ok(())
    }
}

/// Draws the meaning permutation used by [`permute_encoder`].
///
/// Meanings are visited in ascending order; meaning `m` takes a not yet
/// assigned `m'` with probability `∝ exp(-(m - m')² / τ)` over the
/// remaining candidates. `result[m]` is the source row for `m`.
pub fn sample_permutation<R: Rng + ?Sized>(n: usize, tau: f64, rng: &mut R) -> Result<Vec<usize>> {
    if !(tau > 0.0) {
        return Err(invalid("tau", format!("must be > 0, got {tau}")));
    }
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut perm = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for m in 0..n {
        let logits = remaining.iter().map(|&c| {
            let d = m as f64 - c as f64;
            -d * d / tau
        });
        // subtract the best logit so the closest candidate has weight 1
        let top = logits.clone().fold(f64::NEG_INFINITY, f64::max);
        weights.clear();
        weights.extend(logits.map(|l| (l - top).exp()));
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = weights.len() - 1;
        for (k, &w) in weights.iter().enumerate() {
            if u < w {
                pick = k;
                break;
            }
            u -= w;
        }
        perm.push(remaining.remove(pick));
    }
    Ok(perm)
}

/// Replaces each row `m` of `encoder` by row `π(m)` for a sampled
/// temperature-controlled permutation `π`.
pub fn permute_encoder(
    encoder: &ConditionalDistribution,
    params: &PermutationParams,
) -> Result<ConditionalDistribution> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let perm = sample_permutation(encoder.n_cond(), params.tau, &mut rng)?;
    apply_permutation(encoder, &perm)
}

pub fn apply_permutation(
    encoder: &ConditionalDistribution,
    perm: &[usize],
) -> Result<ConditionalDistribution> {
    let source = encoder.matrix();
    let mut out = Array2::zeros(source.raw_dim());
    for (m, &from) in perm.iter().enumerate() {
        out.row_mut(m).assign(&source.row(from));
    }
    ConditionalDistribution::new(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NK99Params {
    pub pop_size: usize,
    pub generations: usize,
    pub samples: usize,
    pub n_meanings: usize,
    pub n_words: usize,
    pub seed: u64,
}

impl Default for NK99Params {
    fn default() -> Self {
        Self {
            pop_size: 20,
            generations: 100,
            samples: 10,
            n_meanings: 100,
            n_words: 100,
            seed: 0,
        }
    }
}

impl NK99Params {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pop_size", self.pop_size),
            ("generations", self.generations),
            ("samples", self.samples),
            ("n_meanings", self.n_meanings),
            ("n_words", self.n_words),
        ] {
            if v == 0 {
                return Err(invalid(name, "must be at least 1"));
            }
        }
        Ok(())
    }
}

/// One individual's association matrices: `sender[m][w] = S(w|m)` and
/// `receiver[w][m] = R(m|w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub sender: Array2<f64>,
    pub receiver: Array2<f64>,
}

impl Individual {
    fn random<R: Rng + ?Sized>(n_meanings: usize, n_words: usize, rng: &mut R) -> Self {
        let mut sender = Array2::from_shape_fn((n_meanings, n_words), |_| open_unit(rng));
        let mut receiver = Array2::from_shape_fn((n_words, n_meanings), |_| open_unit(rng));
        normalize_rows(&mut sender);
        normalize_rows(&mut receiver);
        Self { sender, receiver }
    }
}

/// Uniform on the open interval (0, 1).
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

fn normalize_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let total: f64 = row.iter().sum();
        row.mapv_inplace(|v| v / total);
    }
}

/// `Σ_m Σ_w S(w|m) R'(m|w)`: expected number of meanings recovered when
/// `speaker` talks to `listener`.
fn one_way_payoff(speaker: &Individual, listener: &Individual) -> f64 {
    let mut total = 0.0;
    for ((m, w), &s) in speaker.sender.indexed_iter() {
        total += s * listener.receiver[[w, m]];
    }
    total
}

/// Symmetric payoff `½ Σ_m Σ_w [S(w|m) R'(m|w) + S'(w|m) R(m|w)]`.
pub fn nk99_fitness(a: &Individual, b: &Individual) -> f64 {
    0.5 * (one_way_payoff(a, b) + one_way_payoff(b, a))
}

#[derive(Debug, Clone)]
pub struct NK99Outcome {
    pub mean_sender: ConditionalDistribution,
    pub mean_receiver: ConditionalDistribution,
    /// Mean raw payoff per individual, one entry per generation.
    pub mean_fitness: Vec<f64>,
    pub population: Vec<Individual>,
}

/// Child row: `samples` categorical draws from the parent row, as
/// normalized counts.
fn sample_row<R: Rng + ?Sized>(parent: ndarray::ArrayView1<f64>, samples: usize, rng: &mut R) -> Vec<f64> {
    let mut counts = vec![0.0; parent.len()];
    let dist = WeightedIndex::new(parent.iter().copied()).expect("parent rows are normalized");
    for _ in 0..samples {
        counts[dist.sample(rng)] += 1.0;
    }
    counts.iter_mut().for_each(|c| *c /= samples as f64);
    counts
}

fn offspring<R: Rng + ?Sized>(parent: &Individual, samples: usize, rng: &mut R) -> Individual {
    let resample = |m: &Array2<f64>, rng: &mut R| {
        let mut out = Array2::zeros(m.raw_dim());
        for (i, row) in m.rows().into_iter().enumerate() {
            let child = sample_row(row, samples, rng);
            out.row_mut(i).assign(&ndarray::Array1::from(child));
        }
        out
    };
    let sender = resample(&parent.sender, rng);
    let receiver = resample(&parent.receiver, rng);
    Individual { sender, receiver }
}

/// Total payoff of every individual: each ordered pair `(i, j)`, `i ≠ j`,
/// credits `F(i, j)` to `i` and `F(j, i)` to `j`.
pub fn nk99_payoffs(population: &[Individual]) -> Vec<f64> {
    let n = population.len();
    let mut one_way = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                one_way[[i, j]] = one_way_payoff(&population[i], &population[j]);
            }
        }
    }
    let mut totals = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let f = 0.5 * (one_way[[i, j]] + one_way[[j, i]]);
                totals[i] += f;
                totals[j] += f;
            }
        }
    }
    totals
}

/// Runs the replicator-mutator dynamic for `params.generations` rounds.
pub fn nk99_simulate(params: &NK99Params) -> Result<NK99Outcome> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut population: Vec<Individual> = (0..params.pop_size)
        .map(|_| Individual::random(params.n_meanings, params.n_words, &mut rng))
        .collect();
    let mut mean_fitness = Vec::with_capacity(params.generations);
    for _ in 0..params.generations {
        let payoffs = nk99_payoffs(&population);
        let total: f64 = payoffs.iter().sum();
        mean_fitness.push(total / params.pop_size as f64);
        let parents = if total > 0.0 {
            WeightedIndex::new(&payoffs).expect("payoffs are non-negative with positive sum")
        } else {
            WeightedIndex::new(vec![1.0; params.pop_size]).expect("uniform weights")
        };
        population = (0..params.pop_size)
            .map(|_| {
                let p = parents.sample(&mut rng);
                offspring(&population[p], params.samples, &mut rng)
            })
            .collect();
    }
    let average = |pick: fn(&Individual) -> &Array2<f64>| {
        let mut acc = Array2::zeros(pick(&population[0]).raw_dim());
        for ind in &population {
            acc += pick(ind);
        }
        acc / params.pop_size as f64
    };
    let mut mean_sender = average(|i| &i.sender);
    let mut mean_receiver = average(|i| &i.receiver);
    normalize_rows(&mut mean_sender);
    normalize_rows(&mut mean_receiver);
    Ok(NK99Outcome {
        mean_sender: ConditionalDistribution::new(mean_sender)?,
        mean_receiver: ConditionalDistribution::new(mean_receiver)?,
        mean_fitness,
        population,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn encoder(n: usize, seed: u64) -> ConditionalDistribution {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Array2::from_shape_fn((n, n), |_| open_unit(&mut rng));
        normalize_rows(&mut m);
        ConditionalDistribution::new(m).unwrap()
    }

    fn is_permutation(p: &[usize]) -> bool {
        let mut seen = vec![false; p.len()];
        p.iter().all(|&i| i < p.len() && !std::mem::replace(&mut seen[i], true))
    }

    #[test]
    fn tiny_tau_recovers_identity() {
        let enc = encoder(30, 1);
        let out = permute_encoder(&enc, &PermutationParams::new(1e-6, 9).unwrap()).unwrap();
        assert_eq!(out, enc);
    }

    #[test]
    fn huge_tau_is_close_to_uniform() {
        // position of meaning 0's source over many draws should be uniform
        let n = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = vec![0usize; n];
        let draws = 20_000;
        for _ in 0..draws {
            let p = sample_permutation(n, 1e12, &mut rng).unwrap();
            assert!(is_permutation(&p));
            counts[p[0]] += 1;
        }
        for c in counts {
            let f = c as f64 / draws as f64;
            assert!((f - 0.2).abs() < 0.015, "{f}");
        }
    }

    #[test]
    fn permutation_keeps_row_multiset() {
        let enc = encoder(12, 2);
        for seed in 0..20 {
            let out = permute_encoder(&enc, &PermutationParams::new(10.0, seed).unwrap()).unwrap();
            let mut a: Vec<Vec<u64>> = enc.matrix().rows().into_iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
            let mut b: Vec<Vec<u64>> = out.matrix().rows().into_iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rejects_bad_tau() {
        assert!(PermutationParams::new(0.0, 0).is_err());
        assert!(PermutationParams::new(f64::NAN, 0).is_err());
    }

    fn bijective(n: usize) -> Individual {
        Individual {
            sender: Array2::eye(n),
            receiver: Array2::eye(n),
        }
    }

    #[test]
    fn fitness_examples() {
        let a = bijective(6);
        assert_eq!(nk99_fitness(&a, &a), 6.0);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = Individual::random(6, 4, &mut rng);
        let c = Individual::random(6, 4, &mut rng);
        let flat = Individual {
            sender: b.sender.clone(),
            receiver: Array2::from_elem((4, 6), 1.0 / 6.0),
        };
        let flat2 = Individual {
            sender: c.sender.clone(),
            receiver: Array2::from_elem((4, 6), 1.0 / 6.0),
        };
        // a flat listener recovers each meaning with probability 1/|M|
        assert!((nk99_fitness(&flat, &flat2) - 1.0).abs() < 1e-12);
        assert_eq!(nk99_fitness(&b, &c), nk99_fitness(&c, &b));
    }

    fn small(seed: u64) -> NK99Params {
        NK99Params {
            pop_size: 6,
            generations: 15,
            samples: 4,
            n_meanings: 8,
            n_words: 8,
            seed,
        }
    }

    #[test]
    fn simulation_is_reproducible_and_stochastic() {
        let a = nk99_simulate(&small(4)).unwrap();
        let b = nk99_simulate(&small(4)).unwrap();
        assert_eq!(a.mean_sender, b.mean_sender);
        assert_eq!(a.mean_fitness, b.mean_fitness);
        let c = nk99_simulate(&small(5)).unwrap();
        assert_ne!(a.mean_sender, c.mean_sender);
    }

    #[test]
    fn offspring_rows_have_at_most_d_support_points() {
        let out = nk99_simulate(&small(7)).unwrap();
        for ind in &out.population {
            for row in ind.sender.rows().into_iter().chain(ind.receiver.rows()) {
                assert!((row.sum() - 1.0).abs() < 1e-12);
                assert!(row.iter().filter(|&&v| v > 0.0).count() <= 4);
                for &v in row {
                    // empirical frequencies of four draws
                    assert_eq!((v * 4.0).fract(), 0.0);
                }
            }
        }
    }

    #[test]
    fn fitness_stays_in_range() {
        let p = small(8);
        let out = nk99_simulate(&p).unwrap();
        let hi = (p.n_meanings * (p.pop_size - 1) * 2) as f64;
        assert_eq!(out.mean_fitness.len(), p.generations);
        assert!(out.mean_fitness.iter().all(|&f| (0.0..=hi).contains(&f)));
    }

    #[test]
    fn single_individual_only_copies_itself() {
        let p = NK99Params {
            pop_size: 1,
            generations: 3,
            samples: 1,
            n_meanings: 5,
            n_words: 5,
            seed: 1,
        };
        let out = nk99_simulate(&p).unwrap();
        // one draw per row makes every row a point mass, and no payoff when alone
        assert!(out.mean_fitness.iter().all(|&f| f == 0.0));
        for row in out.mean_sender.matrix().rows() {
            assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
        }
    }

    #[test]
    fn many_samples_reproduce_the_parent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let parent = Individual::random(4, 4, &mut rng);
        let child = offspring(&parent, 200_000, &mut rng);
        let gap = (&child.sender - &parent.sender).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(gap < 0.01, "{gap}");
    }

    #[test]
    fn rejects_zero_params() {
        let p = NK99Params {
            samples: 0,
            ..NK99Params::default()
        };
        assert!(nk99_simulate(&p).is_err());
    }
}
