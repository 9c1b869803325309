//! The imprecise conditional imitation dynamic.
//!
//! Two infinite populations, Senders `S(w|x_o)` and Receivers `R(x̂_o|w)`,
//! update synchronously: each new strategy frequency is proportional to the
//! probability that a noisy imitator adopts it times its expected utility
//! against the other population.
//!
//! Every quantity is a short chain of `n × n` products. With `C` the
//! confusion matrix and `U` the utility matrix, the per-domain constants are
//! `V = C U` (utility smoothed by the Receiver's realization noise),
//! `K = C Vᵀ` and `C²`, after which
//!
//! ```text
//! P_S  = C (C S)          EU_S = K Rᵀ
//! P_R  = R C²             EU_R = S_post Vᵀ
//! ```
//!
//! where `S_post(x_a|w) ∝ Pr(x_a) (C S)[x_a, w]`.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::domain::GameDomain;
use crate::error::{invalid, Error, Result};
use crate::ib::{information_plane, IBCurve, IBProblem};
use crate::probkit::{flush_tiny, posterior_rows, row_normalize, ConditionalDistribution};

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationPair {
    pub sender: ConditionalDistribution,
    pub receiver: ConditionalDistribution,
    pub step: u64,
}

impl PopulationPair {
    pub fn new(sender: ConditionalDistribution, receiver: ConditionalDistribution) -> Result<Self> {
        if sender.n_support() != receiver.n_cond() {
            return Err(Error::DimensionMismatch {
                expected: sender.n_support(),
                found: receiver.n_cond(),
            });
        }
        if receiver.n_support() != sender.n_cond() {
            return Err(Error::DimensionMismatch {
                expected: sender.n_cond(),
                found: receiver.n_support(),
            });
        }
        Ok(Self {
            sender,
            receiver,
            step: 0,
        })
    }

    /// Sum over both matrices of absolute elementwise differences.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        Ok(self.sender.l1_distance(&other.sender)? + self.receiver.l1_distance(&other.receiver)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub max_steps: u64,
    pub convergence_tol: f64,
    pub record_every: u64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            max_steps: 100_000,
            convergence_tol: 1e-5,
            record_every: 10,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(invalid("max_steps", "must be at least 1"));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(invalid("convergence_tol", "must be positive"));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every", "must be at least 1"));
        }
        Ok(())
    }
}

/// One persisted row of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: u64,
    pub complexity_bits: f64,
    pub accuracy_bits: f64,
    pub expected_utility: f64,
    pub epsilon_bits: Option<f64>,
    pub fitted_beta: Option<f64>,
}

fn check_square(m: &ConditionalDistribution, n: usize) -> Result<()> {
    for dim in [m.n_cond(), m.n_support()] {
        if dim != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: dim,
            });
        }
    }
    Ok(())
}

/// Per-domain constants for fast updates; borrow one of these for a whole run.
#[derive(Debug, Clone)]
pub struct ImitationDynamics<'a> {
    domain: &'a GameDomain,
    confusion: Array2<f64>,
    confusion_sq: Array2<f64>,
    smoothed_utility: Array2<f64>,
    sender_kernel: Array2<f64>,
}

impl<'a> ImitationDynamics<'a> {
    pub fn new(domain: &'a GameDomain) -> Self {
        let c = flush_tiny(domain.confusion.matrix().clone());
        let smoothed_utility = flush_tiny(c.dot(&flush_tiny(domain.utility.clone())));
        let sender_kernel = flush_tiny(c.dot(&smoothed_utility.t()));
        Self {
            domain,
            confusion_sq: flush_tiny(c.dot(&c)),
            confusion: c,
            smoothed_utility,
            sender_kernel,
        }
    }

    pub fn domain(&self) -> &GameDomain {
        self.domain
    }

    fn n(&self) -> usize {
        self.domain.n()
    }

    /// `EU_S(x_o, w)`, states × words.
    pub fn sender_expected_utility(&self, receiver: &ConditionalDistribution) -> Result<Array2<f64>> {
        check_square(receiver, self.n())?;
        Ok(self.sender_kernel.dot(&receiver.matrix().t()))
    }

    /// `P_S(w | x_o^im)`, states × words.
    pub fn sender_imitation_probability(&self, sender: &ConditionalDistribution) -> Result<Array2<f64>> {
        check_square(sender, self.n())?;
        Ok(self.confusion_sq.dot(sender.matrix()))
    }

    /// `S_post(x_a | w)`, words × states. Unused words get the prior.
    pub fn sender_posterior(&self, sender: &ConditionalDistribution) -> Result<Array2<f64>> {
        check_square(sender, self.n())?;
        let observed = flush_tiny(self.confusion.dot(sender.matrix()));
        Ok(self.posterior_from_observed(&observed))
    }

    fn posterior_from_observed(&self, observed: &Array2<f64>) -> Array2<f64> {
        let prior = self.domain.prior.as_array();
        let joint = observed * &prior.view().insert_axis(Axis(1));
        posterior_rows(&joint, prior)
    }

    /// `EU_R(w, x̂_o)`, words × states.
    pub fn receiver_expected_utility(&self, sender: &ConditionalDistribution) -> Result<Array2<f64>> {
        let posterior = self.sender_posterior(sender)?;
        Ok(posterior.dot(&self.smoothed_utility.t()))
    }

    /// `P_R(x̂_o^im | w)`, words × states.
    pub fn receiver_imitation_probability(
        &self,
        receiver: &ConditionalDistribution,
    ) -> Result<Array2<f64>> {
        check_square(receiver, self.n())?;
        Ok(receiver.matrix().dot(&self.confusion_sq))
    }

    /// One synchronous update of both populations from the time-t pair.
    pub fn step(&self, pair: &PopulationPair) -> Result<PopulationPair> {
        check_square(&pair.sender, self.n())?;
        check_square(&pair.receiver, self.n())?;
        let c = &self.confusion;
        let observed = flush_tiny(c.dot(pair.sender.matrix()));

        let sender_raw = c.dot(&observed) * self.sender_kernel.dot(&pair.receiver.matrix().t());
        let posterior = self.posterior_from_observed(&observed);
        let receiver_raw = pair.receiver.matrix().dot(&self.confusion_sq)
            * posterior.dot(&self.smoothed_utility.t());

        Ok(PopulationPair {
            sender: row_normalize(flush_tiny(sender_raw))?,
            receiver: row_normalize(flush_tiny(receiver_raw))?,
            step: pair.step + 1,
        })
    }

    /// Expected similarity between the actual and the finally realized state.
    pub fn team_expected_utility(&self, pair: &PopulationPair) -> Result<f64> {
        check_square(&pair.sender, self.n())?;
        check_square(&pair.receiver, self.n())?;
        let observed = self.confusion.dot(pair.sender.matrix());
        let realized = pair.receiver.matrix().dot(&self.smoothed_utility);
        let prior = self.domain.prior.as_slice();
        let mut total = 0.0;
        for (x, &p) in prior.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let diag: f64 = observed
                .row(x)
                .iter()
                .zip(realized.column(x).iter())
                .map(|(a, b)| a * b)
                .sum();
            total += p * diag;
        }
        Ok(total.clamp(0.0, 1.0))
    }
}

pub fn sender_expected_utility(
    domain: &GameDomain,
    receiver: &ConditionalDistribution,
) -> Result<Array2<f64>> {
    ImitationDynamics::new(domain).sender_expected_utility(receiver)
}

pub fn sender_imitation_probability(
    domain: &GameDomain,
    sender: &ConditionalDistribution,
) -> Result<ConditionalDistribution> {
    let raw = ImitationDynamics::new(domain).sender_imitation_probability(sender)?;
    row_normalize(raw)
}

pub fn receiver_expected_utility(
    domain: &GameDomain,
    sender: &ConditionalDistribution,
) -> Result<Array2<f64>> {
    ImitationDynamics::new(domain).receiver_expected_utility(sender)
}

pub fn receiver_imitation_probability(
    domain: &GameDomain,
    receiver: &ConditionalDistribution,
) -> Result<ConditionalDistribution> {
    let raw = ImitationDynamics::new(domain).receiver_imitation_probability(receiver)?;
    row_normalize(raw)
}

pub fn step(pair: &PopulationPair, domain: &GameDomain) -> Result<PopulationPair> {
    ImitationDynamics::new(domain).step(pair)
}

pub fn team_expected_utility(pair: &PopulationPair, domain: &GameDomain) -> Result<f64> {
    ImitationDynamics::new(domain).team_expected_utility(pair)
}

fn random_stochastic(n: usize, rng: &mut impl Rng) -> Result<ConditionalDistribution> {
    let raw = Array2::from_shape_simple_fn((n, n), || rng.sample::<f64, _>(Exp1));
    row_normalize(raw)
}

/// Both matrices with rows drawn uniformly from the simplex.
pub fn random_population_with(n: usize, rng: &mut impl Rng) -> Result<PopulationPair> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let sender = random_stochastic(n, rng)?;
    let receiver = random_stochastic(n, rng)?;
    PopulationPair::new(sender, receiver)
}

pub fn random_population(n: usize, seed: u64) -> Result<PopulationPair> {
    random_population_with(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Computes the metrics recorded along a trajectory.
pub trait TrajectoryProbe {
    fn measure(&mut self, dynamics: &ImitationDynamics<'_>, pair: &PopulationPair) -> Result<TrajectoryRecord>;
}

/// Information-plane coordinates of the Sender population, team expected
/// utility, and (when a bound is supplied) efficiency loss.
#[derive(Debug, Clone)]
pub struct PlaneProbe<'c> {
    problem: IBProblem,
    curve: Option<&'c IBCurve>,
}

impl<'c> PlaneProbe<'c> {
    pub fn new(problem: IBProblem, curve: Option<&'c IBCurve>) -> Self {
        Self { problem, curve }
    }
}

impl TrajectoryProbe for PlaneProbe<'_> {
    fn measure(&mut self, dynamics: &ImitationDynamics<'_>, pair: &PopulationPair) -> Result<TrajectoryRecord> {
        let (complexity, accuracy) = information_plane(&pair.sender, &self.problem)?;
        let fit = self.curve.map(|c| c.efficiency_at(complexity, accuracy));
        Ok(TrajectoryRecord {
            step: pair.step,
            complexity_bits: complexity,
            accuracy_bits: accuracy,
            expected_utility: dynamics.team_expected_utility(pair)?,
            epsilon_bits: fit.map(|f| f.epsilon),
            fitted_beta: fit.map(|f| f.fitted_beta),
        })
    }
}

#[derive(Debug, Clone)]
pub enum InitialCondition {
    Pair(PopulationPair),
    Seed(u64),
}

#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub final_pair: PopulationPair,
    pub trajectory: Vec<TrajectoryRecord>,
    pub converged: bool,
    pub steps_taken: u64,
    /// Convergence metric of the last step taken.
    pub final_metric: f64,
}

/// Runs the dynamic until the combined L1 change of one step drops below
/// `convergence_tol` or `max_steps` is reached.
///
/// Records step 0, step 1, every `record_every`-th step and the final step.
pub fn simulate(
    domain: &GameDomain,
    config: &SimConfig,
    init: InitialCondition,
    probe: &mut impl TrajectoryProbe,
) -> Result<SimulationOutcome> {
    config.validate()?;
    let dynamics = ImitationDynamics::new(domain);
    let mut pair = match init {
        InitialCondition::Pair(p) => p,
        InitialCondition::Seed(seed) => random_population(domain.n(), seed)?,
    };
    let mut trajectory = vec![probe.measure(&dynamics, &pair)?];
    let mut converged = false;
    let mut metric = f64::INFINITY;
    let start = pair.step;
    while pair.step - start < config.max_steps {
        let next = dynamics.step(&pair)?;
        metric = next.distance(&pair)?;
        pair = next;
        converged = metric < config.convergence_tol;
        let taken = pair.step - start;
        let last = converged || taken == config.max_steps;
        if last || taken == 1 || taken % config.record_every == 0 {
            trajectory.push(probe.measure(&dynamics, &pair)?);
        }
        if converged {
            break;
        }
    }
    Ok(SimulationOutcome {
        steps_taken: pair.step - start,
        final_pair: pair,
        trajectory,
        converged,
        final_metric: metric,
    })
}
