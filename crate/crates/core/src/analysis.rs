//! Post-hoc evaluation of evolved and baseline systems.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::GameDomain;
use crate::dynamics::{team_expected_utility, PopulationPair};
use crate::error::{invalid, Error, Result};
use crate::ib::{information_plane, IBCurve, IBProblem};
use crate::probkit::{posterior_rows, ConditionalDistribution, ProbVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Imitation,
    Permutation,
    Nk99,
    IbOptimal,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Imitation => "imitation",
            SourceKind::Permutation => "permutation",
            SourceKind::Nk99 => "nk99",
            SourceKind::IbOptimal => "ib_optimal",
        }
    }
}

impl std::fmt::Display for SourceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "imitation" => Ok(SourceKind::Imitation),
            "permutation" => Ok(SourceKind::Permutation),
            "nk99" => Ok(SourceKind::Nk99),
            "ib_optimal" => Ok(SourceKind::IbOptimal),
            other => Err(invalid("source_kind", format!("unknown kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemEvaluation {
    pub source_kind: SourceKind,
    /// Game precision the system evolved under; absent for NK99.
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub complexity: f64,
    pub accuracy: f64,
    pub expected_utility: Option<f64>,
    pub epsilon: f64,
    pub fitted_beta: f64,
}

/// Tags attached to an evaluation that do not affect the numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub source_kind: SourceKind,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
}

/// Places `encoder` on the information plane, fits it to `curve`, and, when
/// a receiver is given, scores the pair in the game.
pub fn evaluate_system(
    encoder: &ConditionalDistribution,
    problem: &IBProblem,
    curve: &IBCurve,
    domain: &GameDomain,
    receiver: Option<&ConditionalDistribution>,
    provenance: Provenance,
) -> Result<SystemEvaluation> {
    let (complexity, accuracy) = information_plane(encoder, problem)?;
    let fit = curve.efficiency_at(complexity, accuracy);
    let expected_utility = match receiver {
        Some(r) => {
            let pair = PopulationPair::new(encoder.clone(), r.clone())?;
            Some(team_expected_utility(&pair, domain)?)
        }
        None => None,
    };
    Ok(SystemEvaluation {
        source_kind: provenance.source_kind,
        gamma: provenance.gamma,
        seed: provenance.seed,
        complexity,
        accuracy,
        expected_utility,
        epsilon: fit.epsilon,
        fitted_beta: fit.fitted_beta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeMap {
    pub modal_word: Vec<usize>,
    pub modal_prob: Vec<f64>,
    /// `Σ_m p(m|w) m` under uniform need; `None` for unused words.
    pub mean_referent: Vec<Option<f64>>,
}

impl ModeMap {
    /// Word labels renumbered by ascending mean referent (ties by index);
    /// unused words get no label.
    pub fn canonical_labels(&self) -> Vec<Option<usize>> {
        let mut used: Vec<(usize, f64)> = self
            .mean_referent
            .iter()
            .enumerate()
            .filter_map(|(w, r)| r.map(|r| (w, r)))
            .collect();
        used.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let mut labels = vec![None; self.mean_referent.len()];
        for (rank, (w, _)) in used.into_iter().enumerate() {
            labels[w] = Some(rank);
        }
        labels
    }

    /// Modal words after [`canonical_labels`](Self::canonical_labels).
    pub fn canonical_modal_word(&self) -> Vec<usize> {
        let labels = self.canonical_labels();
        self.modal_word
            .iter()
            .map(|&w| labels[w].expect("a modal word is always used"))
            .collect()
    }

    /// True when every canonical category covers a contiguous run of meanings.
    pub fn is_contiguous(&self) -> bool {
        self.canonical_modal_word().windows(2).all(|w| w[0] <= w[1])
    }
}

pub fn mode_map(encoder: &ConditionalDistribution) -> Result<ModeMap> {
    let m = encoder.matrix();
    let mut modal_word = Vec::with_capacity(m.nrows());
    let mut modal_prob = Vec::with_capacity(m.nrows());
    for row in m.rows() {
        let mut best = 0;
        for (w, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = w;
            }
        }
        modal_word.push(best);
        modal_prob.push(row[best]);
    }
    let need = ProbVector::uniform(m.nrows())?;
    let joint = m * &need.as_array().view().insert_axis(ndarray::Axis(1));
    let usage = joint.sum_axis(ndarray::Axis(0));
    let posterior = posterior_rows(&joint, need.as_array());
    let mean_referent = (0..m.ncols())
        .map(|w| {
            (usage[w] > 0.0).then(|| {
                posterior
                    .row(w)
                    .iter()
                    .enumerate()
                    .map(|(i, p)| i as f64 * p)
                    .sum()
            })
        })
        .collect();
    Ok(ModeMap {
        modal_word,
        modal_prob,
        mean_referent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    /// Share of label permutations whose |ρ| reaches the observed |ρ|.
    pub p_value: f64,
}

pub const SPEARMAN_RESAMPLES: usize = 10_000;

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let (mut va, mut vb) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    (cov / (va * vb).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman's ρ with a permutation-test p-value over
/// [`SPEARMAN_RESAMPLES`] shuffles.
pub fn spearman_rank_correlation(xs: &[f64], ys: &[f64]) -> Result<Spearman> {
    spearman_with(xs, ys, SPEARMAN_RESAMPLES, 0)
}

pub fn spearman_with(xs: &[f64], ys: &[f64], resamples: usize, seed: u64) -> Result<Spearman> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(invalid("xs", format!("need at least 3 pairs, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(invalid("xs", "values must be finite"));
    }
    let (rx, mut ry) = (average_ranks(xs), average_ranks(ys));
    let constant = |r: &[f64]| r.iter().all(|&v| v == r[0]);
    if constant(&rx) || constant(&ry) {
        return Err(Error::Degenerate("rank correlation of a constant sequence".into()));
    }
    let rho = pearson(&rx, &ry);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..resamples {
        ry.shuffle(&mut rng);
        if pearson(&rx, &ry).abs() >= rho.abs() - 1e-12 {
            hits += 1;
        }
    }
    let p_value = if resamples == 0 {
        f64::NAN
    } else {
        hits as f64 / resamples as f64
    };
    Ok(Spearman { rho, p_value })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaBetaRow {
    pub gamma: f64,
    pub mean_fitted_beta: f64,
    pub mean_epsilon: f64,
    pub count: usize,
}

/// Seed-averaged fitted β and ε per γ, sorted by γ. Evaluations without a
/// γ are skipped.
pub fn gamma_beta_table(evaluations: &[SystemEvaluation]) -> Result<Vec<GammaBetaRow>> {
    let mut groups: BTreeMap<u64, (f64, f64, f64, usize)> = BTreeMap::new();
    for e in evaluations {
        let Some(g) = e.gamma else { continue };
        if !(g >= 0.0) {
            return Err(invalid("gamma", format!("must be >= 0, got {g}")));
        }
        // non-negative floats order like their bit patterns
        let slot = groups.entry(g.to_bits()).or_insert((g, 0.0, 0.0, 0));
        slot.1 += e.fitted_beta;
        slot.2 += e.epsilon;
        slot.3 += 1;
    }
    if groups.is_empty() {
        return Err(Error::Empty);
    }
    Ok(groups
        .into_values()
        .map(|(gamma, beta, eps, count)| GammaBetaRow {
            gamma,
            mean_fitted_beta: beta / count as f64,
            mean_epsilon: eps / count as f64,
            count,
        })
        .collect())
}
