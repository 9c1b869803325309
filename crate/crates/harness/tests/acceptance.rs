//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion's outcome differs from
//! `KNOWN_FAILURES`.
//!
//! Criteria 4-7 and 9 read one desk-preset sweep (n = 100, 10 γ × 2 seeds),
//! which is computed once into a temporary directory.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::Array2;
use oracle::{max_abs_diff, to_rows, NaiveGame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simmax_core::analysis::Spearman;
use simmax_core::baselines::{permute_encoder, PermutationParams};
use simmax_core::domain::{build_domain, DomainParams};
use simmax_core::dynamics::{
    random_population_with, receiver_expected_utility, receiver_imitation_probability,
    sender_expected_utility, sender_imitation_probability, step, team_expected_utility,
};
use simmax_core::grid::log_space;
use simmax_core::ib::{compute_ib_bound, complexity, information_plane, IBProblem, SolverSettings};
use simmax_core::probkit::row_normalize;
use simmax_harness::commands::{self, AnalysisSummary, Workspace};
use simmax_harness::{ExperimentConfig, Preset};

type Outcome = Result<String, String>;

/// Criteria this implementation does not meet at desk scale. They still
/// print FAIL with their measurements; the run only errors on outcomes
/// that differ from this list.
const KNOWN_FAILURES: &[(usize, &str)] = &[
    (
        5,
        "every converged desk system lies below the first non-trivial point of the 200-beta grid, \
         so all fitted betas tie at 1 and the rank correlation is undefined",
    ),
    (
        7,
        "for gamma >= 1e-3 synonymous words keep trading frequency; the step metric decays \
         roughly like t^-0.75 and is still ~1e-4 at 100000 steps",
    ),
];

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn problem(n: usize, gamma: f64, alpha: f64) -> IBProblem {
    let domain = build_domain(&DomainParams::new(n, gamma, alpha).unwrap()).unwrap();
    IBProblem::from_domain(&domain).unwrap()
}

fn within(limit: Duration, start: Instant) -> (bool, String) {
    let took = start.elapsed();
    (took < limit, format!("{:.2} s", took.as_secs_f64()))
}

fn ceiling() -> Outcome {
    let start = Instant::now();
    let c = problem(100, 1.0, 0.5).ceiling();
    let (fast, took) = within(Duration::from_secs(1), start);
    ensure((c - 4.61).abs() <= 0.05 && fast, format!("ceiling {c:.4} bits in {took}"))
}

fn bound_validity(sweep: &Sweep) -> Outcome {
    let start = Instant::now();
    let toy = problem(4, 1.0, 0.5);
    let betas = log_space(1.0, 1e7, 795).unwrap();
    let curve = compute_ib_bound(&toy, &betas, &SolverSettings::default()).map_err(|e| e.to_string())?;
    let toy_shape = curve.check_shape(1e-6);
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100_000 {
        // random support size, so low-complexity encoders are sampled too
        let k = rng.random_range(1..=4);
        let raw = Array2::from_shape_fn((4, 4), |(_, w)| if w < k { -rng.random::<f64>().ln() } else { 0.0 });
        let enc = row_normalize(raw).unwrap();
        let (c, a) = information_plane(&enc, &toy).unwrap();
        worst = worst.max(a - curve.accuracy_at(c));
    }
    let (fast, took) = within(Duration::from_secs(60), start);
    let desk_shape = sweep.bound.curve.check_shape(1e-6);
    ensure(
        toy_shape.is_empty() && desk_shape.is_empty() && worst <= 1e-4 && fast,
        format!(
            "toy shape {toy_shape:?}, desk shape {desk_shape:?}, worst excess {worst:.2e} over 1e5 encoders, {took}"
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0AC1E);
    let mut worst: f64 = 0.0;
    for draw in 0..100 {
        let n = rng.random_range(1..=5);
        let gamma = if draw % 10 == 0 { 0.0 } else { 10f64.powf(rng.random_range(-8.0..1.0)) };
        let alpha = 10f64.powf(rng.random_range(-2.0..1.0));
        let domain = build_domain(&DomainParams::new(n, gamma, alpha).unwrap()).unwrap();
        let naive = NaiveGame::new(n, gamma, alpha);
        let pair = random_population_with(n, &mut rng).unwrap();
        let (s, r) = (to_rows(pair.sender.matrix()), to_rows(pair.receiver.matrix()));
        let norm = |m: oracle::Mat| -> oracle::Mat {
            m.into_iter()
                .map(|row| {
                    let z: f64 = row.iter().sum();
                    row.into_iter().map(|v| v / z).collect()
                })
                .collect()
        };
        let next = step(&pair, &domain).unwrap();
        let (ns, nr) = naive.step(&s, &r);
        let errors = [
            max_abs_diff(&naive.sender_eu(&r), &sender_expected_utility(&domain, &pair.receiver).unwrap()),
            max_abs_diff(&naive.receiver_eu(&s), &receiver_expected_utility(&domain, &pair.sender).unwrap()),
            max_abs_diff(
                &norm(naive.sender_imitation(&s)),
                sender_imitation_probability(&domain, &pair.sender).unwrap().matrix(),
            ),
            max_abs_diff(
                &norm(naive.receiver_imitation(&r)),
                receiver_imitation_probability(&domain, &pair.receiver).unwrap().matrix(),
            ),
            max_abs_diff(&ns, next.sender.matrix()),
            max_abs_diff(&nr, next.receiver.matrix()),
            (naive.team_eu(&s, &r) - team_expected_utility(&pair, &domain).unwrap()).abs(),
        ];
        worst = errors.iter().fold(worst, |w, &e| w.max(e));
    }
    let (fast, took) = within(Duration::from_secs(60), start);
    ensure(worst < 1e-12 && fast, format!("max deviation {worst:.2e} over 100 draws, {took}"))
}

/// Missing statistics become NaN, which fails every comparison.
fn value(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

fn near_optimality(s: &AnalysisSummary) -> Outcome {
    let (im, perm, nk) = (&s.imitation, &s.permutation_high_tau, &s.nk99);
    let (mean, min) = (value(im.mean_epsilon), value(im.min_epsilon));
    let (perm_mean, nk_mean) = (value(perm.mean_epsilon), value(nk.mean_epsilon));
    ensure(
        min >= -1e-6 && mean < perm_mean && mean < nk_mean,
        format!(
            "emergent eps mean {mean:.4} (min {min:.2e}, {} systems), permuted(tau>=10) {perm_mean:.4} ({}), NK99 {nk_mean:.4} ({})",
            im.count, perm.count, nk.count
        ),
    )
}

fn gamma_gradient(s: &AnalysisSummary) -> Outcome {
    let c = &s.correlations;
    let rho = |r: &Option<_>| value(r.as_ref().map(|r: &Spearman| r.rho));
    let (rc, ra, rb) = (rho(&c.gamma_vs_complexity), rho(&c.gamma_vs_accuracy), rho(&c.gamma_vs_fitted_beta));
    ensure(
        rc >= 0.9 && ra >= 0.9 && rb >= 0.9,
        format!("rho complexity {rc:.3}, accuracy {ra:.3}, fitted beta {rb:.3} over {} systems", c.n_systems),
    )
}

fn accuracy_limit(s: &AnalysisSummary) -> Outcome {
    let max = value(s.max_accuracy_bits);
    ensure(max < 4.0, format!("max emergent accuracy {max:.4} bits (ceiling {:.4})", s.ceiling_bits))
}

fn convergence(sweep: &Sweep) -> Outcome {
    let total = sweep.runs.len();
    let early = sweep.runs.iter().filter(|r| r.converged && r.steps < 40_000).count();
    ensure(
        total > 0 && early * 10 >= total * 9,
        format!("{early}/{total} runs converged before 40000 steps"),
    )
}

fn gamma_zero_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6A);
    let mut worst: f64 = 0.0;
    for n in [1, 2, 5, 20, 100] {
        let domain = build_domain(&DomainParams::new(n, 0.0, 0.5).unwrap()).unwrap();
        let pair = random_population_with(n, &mut rng).unwrap();
        let next = step(&pair, &domain).unwrap();
        let ps = sender_imitation_probability(&domain, &pair.sender).unwrap();
        let pr = receiver_imitation_probability(&domain, &pair.receiver).unwrap();
        worst = worst
            .max(next.sender.max_abs_diff(&ps).unwrap())
            .max(next.receiver.max_abs_diff(&pr).unwrap());
    }
    ensure(worst <= 1e-12, format!("max deviation from imitation {worst:.2e}"))
}

fn permutation_sanity(sweep: &Sweep) -> Outcome {
    let problem = &sweep.bound.problem;
    let mut worst_complexity: f64 = 0.0;
    let mut lines = Vec::new();
    let mut ok = true;
    for tau in [10.0, 100.0, 1000.0] {
        let (mut before, mut after) = (0.0, 0.0);
        for (k, run) in sweep.runs.iter().filter(|r| r.converged).enumerate() {
            let enc = commands::read_sender(&sweep.dir, &run.label).map_err(|e| e.to_string())?;
            let c0 = complexity(&enc, problem.need()).unwrap();
            let (_, a0) = information_plane(&enc, problem).unwrap();
            for draw in 0..100u64 {
                let params = PermutationParams::new(tau, ((k as u64) << 32) | draw).unwrap();
                let permuted = permute_encoder(&enc, &params).unwrap();
                let (c, a) = information_plane(&permuted, problem).unwrap();
                worst_complexity = worst_complexity.max((c - c0).abs());
                before += a0;
                after += a;
            }
        }
        ok &= after <= before + 1e-9 * before.abs().max(1.0);
        lines.push(format!("tau {tau}: mean accuracy change {:.2e}", (after - before) / before.max(1.0)));
    }
    ensure(
        ok && worst_complexity <= 1e-12,
        format!("complexity drift {worst_complexity:.2e}; {}", lines.join(", ")),
    )
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn identical(a: &Path, b: &Path) -> std::result::Result<usize, String> {
    let (ta, tb) = (tree(a), tree(b));
    if ta.keys().ne(tb.keys()) {
        return Err(format!("{} and {} hold different files", a.display(), b.display()));
    }
    for (path, bytes) in &ta {
        if bytes != &tb[path] {
            return Err(format!("{} differs", path.display()));
        }
    }
    Ok(ta.len())
}

fn determinism(sweep: &Sweep, scratch: &Path) -> Outcome {
    // a complete small sweep, twice, with different worker counts
    let mut small = ExperimentConfig::preset(Preset::Desk);
    small.domain.n = 8;
    small.gammas.count = 3;
    small.ib.betas.count = 40;
    small.baselines.nk99.runs = 2;
    small.baselines.nk99.generations = 20;
    let mut files = 0;
    for (name, workers) in [("first", 1), ("second", 2)] {
        let ws = Workspace::new(small.clone(), Some(scratch.join(name)), Some(workers)).map_err(|e| e.to_string())?;
        commands::sweep(&ws).map_err(|e| e.to_string())?;
    }
    files += identical(&scratch.join("first"), &scratch.join("second"))?;

    // one desk run repeated against the same bound
    let rerun = scratch.join("rerun");
    copy_dir(&sweep.dir.join("bound"), &rerun.join("bound"));
    let ws = Workspace::new(sweep.config.clone(), Some(rerun.clone()), Some(1)).map_err(|e| e.to_string())?;
    let bound = commands::ensure_bound(&ws).map_err(|e| e.to_string())?;
    let run = &sweep.runs[sweep.runs.len() / 2];
    commands::simulate_run(&ws, &bound, run.gamma, run.seed).map_err(|e| e.to_string())?;
    let label = &run.label;
    files += identical(&sweep.dir.join("runs").join(label), &rerun.join("runs").join(label))?;
    files += identical(&sweep.dir.join("bound"), &rerun.join("bound"))?;
    Ok(format!("{files} files byte-identical across reruns"))
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let path = entry.unwrap().path();
        let target = to.join(path.file_name().unwrap());
        if path.is_dir() {
            copy_dir(&path, &target);
        } else {
            fs::copy(&path, &target).unwrap();
        }
    }
}

struct Sweep {
    dir: PathBuf,
    config: ExperimentConfig,
    bound: commands::Bound,
    runs: Vec<commands::RunSummary>,
    summary: AnalysisSummary,
}

fn desk_sweep(dir: PathBuf) -> Result<Sweep, String> {
    let start = Instant::now();
    let config = ExperimentConfig::preset(Preset::Desk);
    let ws = Workspace::new(config.clone(), Some(dir.clone()), None).map_err(|e| e.to_string())?;
    let outcome = commands::sweep(&ws).map_err(|e| e.to_string())?;
    let bound = commands::ensure_bound(&ws).map_err(|e| e.to_string())?;
    let summary = outcome.analysis.ok_or("no analysis: no run converged")?;
    eprintln!(
        "desk sweep: {} runs, {} failures, {:.0} s",
        outcome.runs.len(),
        outcome.failures.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(Sweep {
        dir,
        config,
        bound,
        runs: outcome.runs,
        summary,
    })
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().expect("temporary directory");
    let sweep = desk_sweep(scratch.path().join("desk"));
    let needs_sweep = |f: &dyn Fn(&Sweep) -> Outcome| match &sweep {
        Ok(s) => f(s),
        Err(e) => Err(format!("desk sweep failed: {e}")),
    };
    let results: Vec<(&str, Outcome)> = vec![
        ("accuracy ceiling", ceiling()),
        ("IB bound validity", needs_sweep(&bound_validity)),
        ("oracle equivalence", oracle_equivalence()),
        ("near-optimality of emergent systems", needs_sweep(&|s| near_optimality(&s.summary))),
        ("gamma gradient", needs_sweep(&|s| gamma_gradient(&s.summary))),
        ("accuracy limit under noisy imitation", needs_sweep(&|s| accuracy_limit(&s.summary))),
        ("convergence behaviour", needs_sweep(&convergence)),
        ("gamma = 0 reduction", gamma_zero_reduction()),
        ("permutation baseline sanity", needs_sweep(&permutation_sanity)),
        ("determinism", needs_sweep(&|s| determinism(s, scratch.path()))),
    ];
    let mut unexpected = 0;
    for (k, (name, outcome)) in results.iter().enumerate() {
        let criterion = k + 1;
        let known = KNOWN_FAILURES.iter().find(|(c, _)| *c == criterion).map(|(_, why)| *why);
        let line = match (outcome, known) {
            (Ok(d), None) => format!("PASS: {name}: {d}"),
            (Ok(d), Some(_)) => {
                unexpected += 1;
                format!("PASS (listed as a known failure, update the list): {name}: {d}")
            }
            (Err(d), Some(why)) => format!("FAIL (known: {why}): {name}: {d}"),
            (Err(d), None) => {
                unexpected += 1;
                format!("FAIL: {name}: {d}")
            }
        };
        println!("criterion {criterion:>2} {line}");
    }
    let failed = results.iter().filter(|(_, o)| o.is_err()).count();
    println!("{} of {} criteria pass, {unexpected} unexpected outcomes", results.len() - failed, results.len());
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
