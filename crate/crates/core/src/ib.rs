//! Information Bottleneck bound and efficiency evaluation.
//!
//! An [`IBProblem`] pairs a need distribution `p(m)` over meanings with a
//! belief channel `m(x)` over world states. For an encoder `q(w|m)`:
//!
//! - complexity is `I(M;W)`,
//! - accuracy is `I(W;X)`, which equals `I(M;X) - E[D[m ‖ m̂_w]]` under the
//!   Bayesian decoder `m̂_w(x) = Σ_m q(m|w) m(x)`,
//! - the objective is `F_β = I(M;W) - β I(W;X)`.
//!
//! The bound is traced with the self-consistent IB updates, annealing from
//! the largest β down and warm-starting each solve from the previous one.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::GameDomain;
use crate::error::{invalid, Error, Result};
use crate::probkit::{
    mutual_information_of, posterior_rows, ConditionalDistribution, ProbVector,
};

#[derive(Debug, Clone)]
pub struct IBProblem {
    need: ProbVector,
    belief: ConditionalDistribution,
    n_words: usize,
    ceiling: f64,
}

impl IBProblem {
    /// Builds a problem whose encoders use as many words as there are meanings.
    pub fn new(need: ProbVector, belief: ConditionalDistribution) -> Result<Self> {
        let n_words = need.len();
        Self::with_words(need, belief, n_words)
    }

    pub fn with_words(
        need: ProbVector,
        belief: ConditionalDistribution,
        n_words: usize,
    ) -> Result<Self> {
        if need.len() != belief.n_cond() {
            return Err(Error::DimensionMismatch {
                expected: belief.n_cond(),
                found: need.len(),
            });
        }
        if n_words == 0 {
            return Err(invalid("n_words", "must be at least 1"));
        }
        // negligible tails would otherwise feed subnormals into every round
        let belief = crate::probkit::row_normalize(crate::probkit::flush_tiny(belief.matrix().clone()))?;
        let joint = belief.matrix() * &need.as_array().view().insert_axis(Axis(1));
        let ceiling = mutual_information_of(&joint);
        Ok(Self {
            need,
            belief,
            n_words,
            ceiling,
        })
    }

    /// Uniform need over observed states, confusion rows as beliefs.
    pub fn from_domain(domain: &GameDomain) -> Result<Self> {
        Self::new(domain.prior.clone(), domain.confusion.clone())
    }

    pub fn need(&self) -> &ProbVector {
        &self.need
    }

    pub fn belief(&self) -> &ConditionalDistribution {
        &self.belief
    }

    pub fn n_meanings(&self) -> usize {
        self.need.len()
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    pub fn n_states(&self) -> usize {
        self.belief.n_support()
    }

    /// `I(M;X)`, the largest accuracy any encoder can reach.
    pub fn ceiling(&self) -> f64 {
        self.ceiling
    }

    fn check_encoder(&self, encoder: &ConditionalDistribution) -> Result<()> {
        if encoder.n_cond() != self.n_meanings() {
            return Err(Error::DimensionMismatch {
                expected: self.n_meanings(),
                found: encoder.n_cond(),
            });
        }
        Ok(())
    }

    /// `p(m, w) = p(m) q(w|m)`.
    fn encoder_joint(&self, encoder: &ConditionalDistribution) -> Array2<f64> {
        encoder.matrix() * &self.need.as_array().view().insert_axis(Axis(1))
    }

    /// Word marginal `q(w)` and decoder rows `m̂_w` (words × states).
    /// Unused words decode to the need-weighted mean belief.
    pub fn decoder(&self, encoder: &ConditionalDistribution) -> Result<(Array1<f64>, Array2<f64>)> {
        self.check_encoder(encoder)?;
        let joint = self.encoder_joint(encoder);
        Ok(self.decoder_from_joint(&joint))
    }

    fn decoder_from_joint(&self, joint: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
        let marginal = joint.sum_axis(Axis(0));
        let posterior = posterior_rows(joint, self.need.as_array());
        (marginal, posterior.dot(self.belief.matrix()))
    }
}

fn plain_complexity(joint: &Array2<f64>) -> f64 {
    mutual_information_of(joint)
}

/// `I(M;W)` for an encoder under a need distribution.
pub fn complexity(encoder: &ConditionalDistribution, need: &ProbVector) -> Result<f64> {
    if encoder.n_cond() != need.len() {
        return Err(Error::DimensionMismatch {
            expected: need.len(),
            found: encoder.n_cond(),
        });
    }
    let joint = encoder.matrix() * &need.as_array().view().insert_axis(Axis(1));
    Ok(plain_complexity(&joint))
}

/// `I(W;X)` from the word–state joint `p(w,x) = Σ_m p(m) q(w|m) m(x)`.
pub fn accuracy(encoder: &ConditionalDistribution, problem: &IBProblem) -> Result<f64> {
    problem.check_encoder(encoder)?;
    let joint = problem.encoder_joint(encoder);
    Ok(accuracy_from_joint(&joint, problem))
}

fn accuracy_from_joint(joint: &Array2<f64>, problem: &IBProblem) -> f64 {
    let word_state = joint.t().dot(problem.belief.matrix());
    mutual_information_of(&word_state)
}

/// Accuracy through the distortion route: `I(M;X) - E_q[D[m ‖ m̂_w]]`.
pub fn accuracy_via_distortion(
    encoder: &ConditionalDistribution,
    problem: &IBProblem,
) -> Result<f64> {
    let (_, decoder) = problem.decoder(encoder)?;
    let belief = problem.belief.matrix();
    let mut expected = 0.0;
    for m in 0..problem.n_meanings() {
        let pm = problem.need.as_slice()[m];
        for w in 0..problem.n_words {
            let weight = pm * encoder.matrix()[[m, w]];
            if weight == 0.0 {
                continue;
            }
            let mut d = 0.0;
            for x in 0..problem.n_states() {
                let b = belief[[m, x]];
                if b > 0.0 {
                    d += b * (b.log2() - decoder[[w, x]].log2());
                }
            }
            expected += weight * d;
        }
    }
    Ok(problem.ceiling - expected)
}

/// Complexity and accuracy in one pass.
pub fn information_plane(
    encoder: &ConditionalDistribution,
    problem: &IBProblem,
) -> Result<(f64, f64)> {
    problem.check_encoder(encoder)?;
    let joint = problem.encoder_joint(encoder);
    Ok((plain_complexity(&joint), accuracy_from_joint(&joint, problem)))
}

/// `F_β[q] = I(M;W) - β I(W;X)`.
pub fn objective(encoder: &ConditionalDistribution, problem: &IBProblem, beta: f64) -> Result<f64> {
    let (c, a) = information_plane(encoder, problem)?;
    Ok(c - beta * a)
}

/// Expected KL distortion `D[m ‖ m̂_w]` in nats, meanings × words.
/// `+inf` where `m̂_w` misses part of the support of `m`.
fn distortion_nats(problem: &IBProblem, decoder: &Array2<f64>) -> Array2<f64> {
    let belief = problem.belief.matrix();
    let neg_entropy: Array1<f64> = belief
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|&b| if b > 0.0 { b * b.ln() } else { 0.0 }).sum())
        .collect();
    let log_decoder = decoder.mapv(|v| if v > 0.0 { v.ln() } else { 0.0 });
    let cross = belief.dot(&log_decoder.t());
    let support = belief.mapv(|b| if b > 0.0 { 1.0 } else { 0.0 });
    let holes = decoder.mapv(|v| if v > 0.0 { 0.0 } else { 1.0 });
    let misses = support.dot(&holes.t());
    let mut d = cross;
    for ((m, w), v) in d.indexed_iter_mut() {
        *v = if misses[[m, w]] > 0.0 {
            f64::INFINITY
        } else {
            (neg_entropy[m] - *v).max(0.0)
        };
    }
    d
}

/// One round of the self-consistent updates at fixed β: word marginal,
/// Bayesian decoder, then `q(w|m) ∝ q(w) exp(-β D[m ‖ m̂_w])`.
pub fn ib_fixed_point_step(
    encoder: &ConditionalDistribution,
    problem: &IBProblem,
    beta: f64,
) -> Result<ConditionalDistribution> {
    if !(beta >= 1.0) || !beta.is_finite() {
        return Err(invalid("beta", format!("must be a finite value >= 1, got {beta}")));
    }
    problem.check_encoder(encoder)?;
    if encoder.n_support() != problem.n_words {
        return Err(Error::DimensionMismatch {
            expected: problem.n_words,
            found: encoder.n_support(),
        });
    }
    let joint = problem.encoder_joint(encoder);
    let (marginal, decoder) = problem.decoder_from_joint(&joint);
    let distortion = distortion_nats(problem, &decoder);

    let log_marginal = marginal.mapv(|q| if q > 0.0 { q.ln() } else { f64::NEG_INFINITY });
    let mut next = Array2::zeros(encoder.shape());
    for (m, mut row) in next.rows_mut().into_iter().enumerate() {
        let d = distortion.row(m);
        let logits: Vec<f64> = (0..problem.n_words)
            .map(|w| log_marginal[w] - beta * d[w])
            .collect();
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            let best = (0..problem.n_words)
                .min_by(|&a, &b| d[a].total_cmp(&d[b]))
                .unwrap_or(0);
            row[best] = 1.0;
            continue;
        }
        let mut total = 0.0;
        for (w, &l) in logits.iter().enumerate() {
            let v = (l - top).exp();
            let v = if v < crate::probkit::FLUSH_BELOW { 0.0 } else { v };
            row[w] = v;
            total += v;
        }
        row /= total;
    }
    ConditionalDistribution::new(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Stop when the largest encoder change in a round falls below this.
    pub tol: f64,
    pub max_rounds: usize,
    /// Amplitude of the uniform noise added to the identity at the top β.
    pub init_noise: f64,
    pub seed: u64,
    /// Assert that `F_β` never increases across rounds (slow).
    pub check_monotone: bool,
    /// Words whose posteriors `q(m|w)` agree to within this (max abs) are
    /// merged into one. Zero disables merging.
    pub merge_tol: f64,
    /// Words whose largest `q(w|m)` falls below this are dropped and the
    /// rows renormalized. Zero disables pruning.
    pub prune_tol: f64,
    /// Interleave squared-extrapolation jumps with the plain updates.
    pub accelerate: bool,
    /// After each solve, try merging word pairs that lower `F_β` and
    /// re-solving; the result is kept only if it improves the objective.
    pub agglomerate: bool,
    /// Fail the whole bound when any β hits `max_rounds`. Otherwise the
    /// last iterate is kept and the point is flagged as not converged.
    pub strict: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_rounds: 5000,
            init_noise: 1e-3,
            seed: 0,
            check_monotone: false,
            merge_tol: 1e-6,
            prune_tol: 1e-8,
            accelerate: true,
            agglomerate: true,
            strict: false,
        }
    }
}

/// Folds every used word into the first earlier word with the same
/// posterior `q(m|w)` (within `tol`). Returns `None` if nothing merged.
///
/// Words with identical posteriors are interchangeable: combining them
/// leaves complexity, accuracy and the fixed point unchanged, while
/// removing the near-neutral direction that makes the iteration crawl.
pub fn merge_duplicate_words(
    encoder: &ConditionalDistribution,
    problem: &IBProblem,
    tol: f64,
) -> Result<Option<ConditionalDistribution>> {
    problem.check_encoder(encoder)?;
    let joint = problem.encoder_joint(encoder);
    let marginal = joint.sum_axis(Axis(0));
    let posterior = posterior_rows(&joint, problem.need.as_array());
    let alive: Vec<usize> = (0..marginal.len()).filter(|&w| marginal[w] > 0.0).collect();
    let mut reps: Vec<usize> = Vec::new();
    let mut target: Vec<(usize, usize)> = Vec::new();
    for &w in &alive {
        let row = posterior.row(w);
        let hit = reps.iter().copied().find(|&r| {
            posterior
                .row(r)
                .iter()
                .zip(row.iter())
                .all(|(a, b)| (a - b).abs() < tol)
        });
        match hit {
            Some(r) => target.push((w, r)),
            None => reps.push(w),
        }
    }
    if target.is_empty() {
        return Ok(None);
    }
    let mut merged = encoder.matrix().clone();
    for (from, to) in target {
        let col = merged.column(from).to_owned();
        merged.column_mut(to).zip_mut_with(&col, |a, b| *a += b);
        merged.column_mut(from).fill(0.0);
    }
    Ok(Some(ConditionalDistribution::new(merged)?))
}

/// Greedily merges pairs of words while a merge lowers `F_β`. Returns
/// `None` if no merge helps.
///
/// Merging words `a` and `b` with usage `p_a`, `p_b` changes the objective
/// by `-(p_a + p_b) (JS_π[q(m|a), q(m|b)] - β JS_π[q(x|a), q(x|b)])`, with
/// `π = p_a / (p_a + p_b)` and `JS_π` the π-weighted Jensen-Shannon
/// divergence. At low β the fixed-point iteration only folds redundant
/// words together over tens of thousands of rounds; this one-shot
/// agglomeration step does it directly.
pub fn merge_beneficial_words(
    encoder: &ConditionalDistribution,
    problem: &IBProblem,
    beta: f64,
) -> Result<Option<ConditionalDistribution>> {
    problem.check_encoder(encoder)?;
    let mut joint = problem.encoder_joint(encoder);
    let mut merged_any = false;
    loop {
        let usage = joint.sum_axis(Axis(0));
        let alive: Vec<usize> = (0..usage.len()).filter(|&w| usage[w] > 0.0).collect();
        let posterior = posterior_rows(&joint, problem.need.as_array());
        let decoder = posterior.dot(problem.belief.matrix());
        let h_post: Vec<f64> = alive.iter().map(|&w| entropy_bits(posterior.row(w).iter().copied())).collect();
        let h_dec: Vec<f64> = alive.iter().map(|&w| entropy_bits(decoder.row(w).iter().copied())).collect();
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..alive.len() {
            for j in i + 1..alive.len() {
                let (a, b) = (alive[i], alive[j]);
                let total = usage[a] + usage[b];
                let pi = usage[a] / total;
                let js = |rows: &Array2<f64>, ha: f64, hb: f64| {
                    let mixed = rows.row(a).into_iter().zip(rows.row(b)).map(|(x, y)| pi * x + (1.0 - pi) * y);
                    entropy_bits(mixed) - pi * ha - (1.0 - pi) * hb
                };
                let change = -total
                    * (js(&posterior, h_post[i], h_post[j]) - beta * js(&decoder, h_dec[i], h_dec[j]));
                if change < -BENEFICIAL_MERGE_MIN && best.is_none_or(|(c, _, _)| change < c) {
                    best = Some((change, a, b));
                }
            }
        }
        let Some((_, a, b)) = best else { break };
        let col = joint.column(b).to_owned();
        joint.column_mut(a).zip_mut_with(&col, |x, y| *x += y);
        joint.column_mut(b).fill(0.0);
        merged_any = true;
    }
    if !merged_any {
        return Ok(None);
    }
    let need = problem.need.as_array();
    let rows = Array2::from_shape_fn(joint.dim(), |(m, w)| joint[[m, w]] / need[m]);
    clip_to_simplex(rows)
}

fn entropy_bits(p: impl Iterator<Item = f64>) -> f64 {
    -p.filter(|&v| v > 0.0).map(|v| v * v.log2()).sum::<f64>()
}

/// Zeroes every word whose largest `q(w|m)` is below `tol` (but not yet
/// zero) and renormalizes the rows. Returns `None` if nothing changed.
///
/// A word that is losing its support decays only geometrically, with a
/// ratio that approaches 1 near the β where it dies.
pub fn prune_faint_words(
    encoder: &ConditionalDistribution,
    tol: f64,
) -> Result<Option<ConditionalDistribution>> {
    let m = encoder.matrix();
    let faint: Vec<usize> = (0..m.ncols())
        .filter(|&w| {
            let top = m.column(w).iter().copied().fold(0.0, f64::max);
            top > 0.0 && top < tol
        })
        .collect();
    if faint.is_empty() {
        return Ok(None);
    }
    let mut pruned = m.clone();
    for w in faint {
        pruned.column_mut(w).fill(0.0);
    }
    clip_to_simplex(pruned)
}

/// Iterates the IB updates at one β from `init` until the encoder settles;
/// errors if it has not settled after `max_rounds`.
pub fn solve_at_beta(
    init: ConditionalDistribution,
    problem: &IBProblem,
    beta: f64,
    settings: &SolverSettings,
) -> Result<(ConditionalDistribution, usize)> {
    match solve_capped(init, problem, beta, settings)? {
        (enc, rounds, true) => Ok((enc, rounds)),
        (_, rounds, false) => Err(Error::NonConvergence { beta, rounds }),
    }
}

/// Like [`solve_at_beta`], but returns the last iterate at the round cap
/// together with a convergence flag.
pub fn solve_capped(
    init: ConditionalDistribution,
    problem: &IBProblem,
    beta: f64,
    settings: &SolverSettings,
) -> Result<(ConditionalDistribution, usize, bool)> {
    problem.check_encoder(&init)?;
    if init.n_support() != problem.n_words {
        return Err(Error::DimensionMismatch {
            expected: problem.n_words,
            found: init.n_support(),
        });
    }
    // Unused words stay unused under the update, so solve on the live ones.
    let weights = init.matrix().sum_axis(Axis(0));
    let live: Vec<usize> = (0..problem.n_words).filter(|&w| weights[w] > 0.0).collect();
    if live.len() < problem.n_words {
        let narrow = IBProblem {
            n_words: live.len(),
            ..problem.clone()
        };
        let compact = ConditionalDistribution::new(init.matrix().select(Axis(1), &live))?;
        let (solved, rounds, converged) = solve_live(compact, &narrow, beta, settings)?;
        let mut full = Array2::zeros((problem.n_meanings(), problem.n_words));
        for (k, &w) in live.iter().enumerate() {
            full.column_mut(w).assign(&solved.matrix().column(k));
        }
        return Ok((ConditionalDistribution::new(full)?, rounds, converged));
    }
    solve_live(init, problem, beta, settings)
}

fn solve_live(
    init: ConditionalDistribution,
    problem: &IBProblem,
    beta: f64,
    settings: &SolverSettings,
) -> Result<(ConditionalDistribution, usize, bool)> {
    let mut solver = Iteration {
        problem,
        beta,
        settings,
        rounds: 0,
        last_objective: if settings.check_monotone {
            objective(&init, problem, beta)?
        } else {
            0.0
        },
    };
    let mut current = init;
    let mut cycle = 0usize;
    while solver.rounds < settings.max_rounds {
        if cycle % MERGE_EVERY == 0 {
            let mut touched = false;
            if settings.prune_tol > 0.0 {
                if let Some(pruned) = prune_faint_words(&current, settings.prune_tol)? {
                    current = pruned;
                    touched = true;
                }
            }
            if settings.merge_tol > 0.0 {
                if let Some(merged) = merge_duplicate_words(&current, problem, settings.merge_tol)? {
                    current = merged;
                    touched = true;
                }
            }
            if touched {
                solver.reset_objective(&current)?;
            }
        }
        cycle += 1;
        let (x1, converged) = solver.step(&current)?;
        if converged {
            return Ok((x1, solver.rounds, true));
        }
        if !settings.accelerate || solver.rounds >= settings.max_rounds {
            current = x1;
            continue;
        }
        let (x2, converged) = solver.step(&x1)?;
        if converged {
            return Ok((x2, solver.rounds, true));
        }
        current = match squared_extrapolation(&current, &x1, &x2, problem, beta)? {
            Some(jump) => {
                solver.reset_objective(&jump)?;
                jump
            }
            None => x2,
        };
    }
    Ok((current, solver.rounds, false))
}

/// Plain fixed-point rounds with the convergence test and optional
/// monotonicity assertion.
struct Iteration<'a> {
    problem: &'a IBProblem,
    beta: f64,
    settings: &'a SolverSettings,
    rounds: usize,
    last_objective: f64,
}

impl Iteration<'_> {
    fn step(&mut self, x: &ConditionalDistribution) -> Result<(ConditionalDistribution, bool)> {
        let next = ib_fixed_point_step(x, self.problem, self.beta)?;
        self.rounds += 1;
        if self.settings.check_monotone {
            let f = objective(&next, self.problem, self.beta)?;
            assert!(
                f <= self.last_objective + 1e-9,
                "objective increased at beta {}: {} -> {f}",
                self.beta,
                self.last_objective
            );
            self.last_objective = f;
        }
        let change = next.max_abs_diff(x)?;
        Ok((next, change < self.settings.tol))
    }

    fn reset_objective(&mut self, x: &ConditionalDistribution) -> Result<()> {
        if self.settings.check_monotone {
            self.last_objective = objective(x, self.problem, self.beta)?;
        }
        Ok(())
    }
}

/// One SQUAREM jump from `x0` given two plain iterates `x1`, `x2`.
///
/// Near a bifurcation the plain map contracts very slowly along a few
/// directions (a word losing its support, or a saddle being left). The
/// squared extrapolation `x0 - 2αr + α²v` with `α = -|r|/|v|` skips most of
/// that crawl. The jump is clipped to the simplex, shortened toward the
/// plain iterate until it beats `F_β(x2)`, and discarded otherwise, so the
/// objective still never increases.
fn squared_extrapolation(
    x0: &ConditionalDistribution,
    x1: &ConditionalDistribution,
    x2: &ConditionalDistribution,
    problem: &IBProblem,
    beta: f64,
) -> Result<Option<ConditionalDistribution>> {
    let r = x1.matrix() - x0.matrix();
    let v = x2.matrix() - x1.matrix() - &r;
    let norm = |a: &Array2<f64>| a.iter().map(|e| e * e).sum::<f64>().sqrt();
    let (rn, vn) = (norm(&r), norm(&v));
    if rn == 0.0 || vn == 0.0 {
        return Ok(None);
    }
    let mut alpha = (-rn / vn).max(-MAX_JUMP);
    if alpha > -1.0 {
        return Ok(None);
    }
    let baseline = objective(x2, problem, beta)?;
    while alpha < -1.0 {
        let raw = x0.matrix() - &(&r * (2.0 * alpha)) + &(&v * (alpha * alpha));
        if let Some(jump) = clip_to_simplex(raw)? {
            if objective(&jump, problem, beta)? < baseline {
                return Ok(Some(jump));
            }
        }
        alpha = (alpha - 1.0) / 2.0;
        if alpha > -1.5 {
            break;
        }
    }
    Ok(None)
}

const MERGE_EVERY: usize = 5;
/// Merge-then-re-solve attempts per β.
const MAX_AGGLOMERATIONS: usize = 8;
/// Smallest objective gain (bits) worth a merge.
const BENEFICIAL_MERGE_MIN: f64 = 1e-12;
/// Noise (per entry, before renormalizing) added to each upward warm start.
const FORWARD_NOISE: f64 = 1e-3;
/// Separates the upward sweep's RNG stream from the initial encoder's.
const FORWARD_SEED_TAG: u64 = 0x6f72_7761_7264;
/// Passes of neighbour re-solving after the annealing sweep.
const MAX_POLISH_SWEEPS: usize = 8;
/// Objective gain (bits) that justifies re-solving from a neighbour.
const POLISH_MIN_GAIN: f64 = 1e-9;
const MAX_JUMP: f64 = 1e4;

fn clip_to_simplex(mut raw: Array2<f64>) -> Result<Option<ConditionalDistribution>> {
    raw.mapv_inplace(|v| v.max(0.0));
    for mut row in raw.rows_mut() {
        let total: f64 = row.iter().sum();
        if !(total > 0.0) {
            return Ok(None);
        }
        row.mapv_inplace(|v| v / total);
    }
    ConditionalDistribution::new(raw).map(Some)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IBPoint {
    pub beta: f64,
    pub complexity: f64,
    pub accuracy: f64,
    pub objective: f64,
    /// Present for freshly solved curves, absent for curves read from disk.
    pub encoder: Option<ConditionalDistribution>,
    pub rounds: usize,
    /// Whether the solver settled before its round cap.
    pub converged: bool,
}

/// Points along the bound, sorted by β ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct IBCurve {
    pub points: Vec<IBPoint>,
    pub ceiling: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyLoss {
    pub epsilon: f64,
    pub fitted_beta: f64,
}

impl IBCurve {
    pub fn new(mut points: Vec<IBPoint>, ceiling: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty);
        }
        points.sort_by(|a, b| a.beta.total_cmp(&b.beta));
        Ok(Self { points, ceiling })
    }

    pub fn betas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.beta).collect()
    }

    /// `min_β (F_β[q] - F*_β) / β` over the curve's β grid, for a system at
    /// the given information-plane coordinates. Ties go to the lower β.
    pub fn efficiency_at(&self, complexity: f64, accuracy: f64) -> EfficiencyLoss {
        let mut best = EfficiencyLoss {
            epsilon: f64::INFINITY,
            fitted_beta: self.points[0].beta,
        };
        for p in &self.points {
            let gap = (complexity - p.beta * accuracy - p.objective) / p.beta;
            if gap < best.epsilon {
                best = EfficiencyLoss {
                    epsilon: gap,
                    fitted_beta: p.beta,
                };
            }
        }
        best
    }

    /// Accuracy of the piecewise-linear frontier at `complexity`, flat at the
    /// highest curve accuracy beyond the last point.
    pub fn accuracy_at(&self, complexity: f64) -> f64 {
        let pts = &self.points;
        if complexity <= pts[0].complexity {
            // chord from the origin, which every problem attains
            if pts[0].complexity <= 0.0 {
                return pts[0].accuracy;
            }
            return pts[0].accuracy * complexity.max(0.0) / pts[0].complexity;
        }
        for pair in pts.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if complexity <= b.complexity {
                let span = b.complexity - a.complexity;
                if span <= 0.0 {
                    return b.accuracy.max(a.accuracy);
                }
                let t = (complexity - a.complexity) / span;
                return a.accuracy + t * (b.accuracy - a.accuracy);
            }
        }
        pts.iter().map(|p| p.accuracy).fold(0.0, f64::max)
    }

    /// Checks monotonicity in β and concavity of the frontier; returns a
    /// description of every violation found.
    pub fn check_shape(&self, tol: f64) -> Vec<String> {
        let mut problems = Vec::new();
        for pair in self.points.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.complexity < a.complexity - tol {
                problems.push(format!(
                    "complexity decreases between beta {} and {}: {} -> {}",
                    a.beta, b.beta, a.complexity, b.complexity
                ));
            }
            if b.accuracy < a.accuracy - tol {
                problems.push(format!(
                    "accuracy decreases between beta {} and {}: {} -> {}",
                    a.beta, b.beta, a.accuracy, b.accuracy
                ));
            }
        }
        // collapse points that coincide on the plane before taking chords
        let mut distinct: Vec<(f64, f64)> = Vec::new();
        for p in &self.points {
            match distinct.last() {
                Some(&(c, _)) if p.complexity - c <= 1e-9 => {
                    let last = distinct.last_mut().expect("non-empty");
                    last.1 = last.1.max(p.accuracy);
                }
                _ => distinct.push((p.complexity, p.accuracy)),
            }
        }
        let slopes: Vec<f64> = distinct
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect();
        for (i, s) in slopes.windows(2).enumerate() {
            // compare accuracy gains on a common scale so tiny chords do not blow up
            let span = distinct[i + 2].0 - distinct[i + 1].0;
            if (s[1] - s[0]) * span > tol {
                problems.push(format!(
                    "chord slope increases at complexity {}: {} -> {}",
                    distinct[i + 1].0, s[0], s[1]
                ));
            }
        }
        problems
    }
}

fn near_identity(n_meanings: usize, n_words: usize, noise: f64, seed: u64) -> Result<ConditionalDistribution> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = Array2::from_shape_fn((n_meanings, n_words), |(m, w)| {
        let base = if m % n_words == w { 1.0 } else { 0.0 };
        base + noise * rng.random::<f64>()
    });
    crate::probkit::row_normalize(raw)
}

/// Traces the bound over `schedule`. A reverse deterministic-annealing sweep
/// (high β to low, warm-started from a near-identity encoder) is followed by
/// an upward sweep from a near-uniform encoder and a neighbour polish; each
/// point keeps the lowest objective found. Every candidate is an actual
/// encoder, so each point stays an upper bound on `F*_β`.
pub fn compute_ib_bound(
    problem: &IBProblem,
    schedule: &[f64],
    settings: &SolverSettings,
) -> Result<IBCurve> {
    if schedule.is_empty() {
        return Err(invalid("schedule", "must be non-empty"));
    }
    if schedule.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("schedule", "must be sorted ascending"));
    }
    if let Some(&bad) = schedule.iter().find(|&&b| !(b >= 1.0) || !b.is_finite()) {
        return Err(invalid("schedule", format!("beta {bad} is not a finite value >= 1")));
    }

    if problem.n_meanings() == 1 {
        let encoder = ConditionalDistribution::new(Array2::from_shape_fn(
            (1, problem.n_words),
            |(_, w)| if w == 0 { 1.0 } else { 0.0 },
        ))?;
        let point = IBPoint {
            beta: schedule[0],
            complexity: 0.0,
            accuracy: 0.0,
            objective: 0.0,
            encoder: Some(encoder),
            rounds: 0,
            converged: true,
        };
        return IBCurve::new(vec![point], problem.ceiling);
    }

    let mut current = near_identity(
        problem.n_meanings(),
        problem.n_words,
        settings.init_noise,
        settings.seed,
    )?;
    let mut points = Vec::with_capacity(schedule.len());
    for &beta in schedule.iter().rev() {
        let (encoder, rounds, converged) = solve_with_merges(current, problem, beta, settings)?;
        if !converged && settings.strict {
            return Err(Error::NonConvergence { beta, rounds });
        }
        let (c, a) = information_plane(&encoder, problem)?;
        points.push(IBPoint {
            beta,
            complexity: c,
            accuracy: a,
            objective: c - beta * a,
            encoder: Some(encoder.clone()),
            rounds,
            converged,
        });
        current = encoder;
    }
    forward_pass(&mut points, problem, settings)?;
    polish_with_neighbours(&mut points, problem, settings)?;
    IBCurve::new(points, problem.ceiling)
}

/// Anneals upward from a near-uniform encoder, re-perturbing the warm start
/// at every β so words can split, and keeps any point that beats the
/// reverse sweep. At low β the reverse sweep's near-deterministic encoders
/// sit on a branch far above the soft optimum; the upward sweep reaches it.
fn forward_pass(points: &mut [IBPoint], problem: &IBProblem, settings: &SolverSettings) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ FORWARD_SEED_TAG);
    let (n, k) = (problem.n_meanings(), problem.n_words);
    let mut current = Array2::from_elem((n, k), 1.0 / k as f64);
    // points run from high β to low β
    for point in points.iter_mut().rev() {
        let beta = point.beta;
        let noise = FORWARD_NOISE;
        let start = crate::probkit::row_normalize(current.mapv(|v| v + noise * rng.random::<f64>()))?;
        let (encoder, rounds, converged) = solve_capped(start, problem, beta, settings)?;
        let (c, a) = information_plane(&encoder, problem)?;
        if c - beta * a < point.objective - POLISH_MIN_GAIN {
            if !converged && settings.strict {
                return Err(Error::NonConvergence { beta, rounds });
            }
            *point = IBPoint {
                beta,
                complexity: c,
                accuracy: a,
                objective: c - beta * a,
                encoder: Some(encoder.clone()),
                rounds: point.rounds + rounds,
                converged,
            };
        } else {
            point.rounds += rounds;
        }
        current = encoder.matrix().clone();
    }
    Ok(())
}

/// Solves at `beta`, then repeatedly tries merging words whenever that
/// lowers `F_β` and re-solving. A merged start is kept only if its solved
/// objective beats the current one, so a branch that has not yet split is
/// never collapsed prematurely.
fn solve_with_merges(
    init: ConditionalDistribution,
    problem: &IBProblem,
    beta: f64,
    settings: &SolverSettings,
) -> Result<(ConditionalDistribution, usize, bool)> {
    let (mut best, mut rounds, mut converged) = solve_capped(init, problem, beta, settings)?;
    if !settings.agglomerate {
        return Ok((best, rounds, converged));
    }
    let mut best_objective = objective(&best, problem, beta)?;
    for _ in 0..MAX_AGGLOMERATIONS {
        let Some(merged) = merge_beneficial_words(&best, problem, beta)? else { break };
        let (candidate, extra, ok) = solve_capped(merged, problem, beta, settings)?;
        rounds += extra;
        let value = objective(&candidate, problem, beta)?;
        if value >= best_objective - POLISH_MIN_GAIN {
            break;
        }
        best = candidate;
        best_objective = value;
        converged = ok;
    }
    Ok((best, rounds, converged))
}

/// Sweeps over the annealed points, re-solving any β at which a neighbour's
/// encoder already scores a lower objective. Annealing alone can stay on a
/// branch past the β where another branch becomes optimal.
fn polish_with_neighbours(
    points: &mut [IBPoint],
    problem: &IBProblem,
    settings: &SolverSettings,
) -> Result<()> {
    for _ in 0..MAX_POLISH_SWEEPS {
        let mut improved = false;
        for i in 0..points.len() {
            for j in [i.wrapping_sub(1), i + 1] {
                let Some(neighbour) = points.get(j) else { continue };
                let beta = points[i].beta;
                let borrowed = neighbour.complexity - beta * neighbour.accuracy;
                if borrowed >= points[i].objective - POLISH_MIN_GAIN {
                    continue;
                }
                let Some(start) = neighbour.encoder.clone() else { continue };
                let (encoder, rounds, converged) = solve_with_merges(start, problem, beta, settings)?;
                if !converged && settings.strict {
                    return Err(Error::NonConvergence { beta, rounds });
                }
                let (c, a) = information_plane(&encoder, problem)?;
                if c - beta * a < points[i].objective - POLISH_MIN_GAIN {
                    let previous = points[i].rounds;
                    points[i] = IBPoint {
                        beta,
                        complexity: c,
                        accuracy: a,
                        objective: c - beta * a,
                        encoder: Some(encoder),
                        rounds: previous + rounds,
                        converged,
                    };
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(())
}

/// Efficiency loss ε and the best-fitting β of an arbitrary encoder.
pub fn efficiency_loss(
    encoder: &ConditionalDistribution,
    problem: &IBProblem,
    curve: &IBCurve,
) -> Result<EfficiencyLoss> {
    let (c, a) = information_plane(encoder, problem)?;
    Ok(curve.efficiency_at(c, a))
}
