//! The experiment pipeline: bound, runs, baselines, analysis, sweep.
//!
//! Output layout under the output directory:
//!
//! ```text
//! bound/        curve.csv, optional encoders/, manifest.json
//! runs/<label>/ trajectory.csv, sender.csv, receiver.csv, evaluation.csv,
//!               mode_map.csv, manifest.json
//! baselines/    permutation.csv, nk99.csv, nk99/run_<k>/..., manifest.json
//! analysis/     plane.csv, gamma_beta.csv, correlations.json, summary.json,
//!               mode_maps.csv, manifest.json
//! failures.csv, manifest.json   (sweep only)
//! ```

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use simmax_core::analysis::{
    evaluate_system, gamma_beta_table, mode_map, spearman_rank_correlation, Provenance, SourceKind,
    Spearman, SystemEvaluation, SPEARMAN_RESAMPLES,
};
use simmax_core::baselines::{nk99_simulate, permute_encoder, PermutationParams};
use simmax_core::domain::{build_domain, GameDomain};
use simmax_core::dynamics::{simulate, InitialCondition, PlaneProbe};
use simmax_core::ib::{compute_ib_bound, IBCurve, IBPoint, IBProblem};
use simmax_core::probkit::{ConditionalDistribution, NORMALIZATION_TOL};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::io::{
    malformed, matrix_csv, num, opt_num, parse_matrix, read_table, read_text, ArtifactDir, Manifest,
    CURVE_HEADER, MANIFEST_NAME, MODE_MAP_HEADER, PLANE_HEADER, TRAJECTORY_HEADER,
};
use crate::seeds;

/// Smallest τ whose permutations count as scrambled in the summary.
const PERMUTATION_SUMMARY_MIN_TAU: f64 = 10.0;

/// A validated config bound to an output directory and a thread count.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub workers: usize,
}

impl Workspace {
    pub fn new(config: ExperimentConfig, out: Option<PathBuf>, workers: Option<usize>) -> Result<Self> {
        config.validate()?;
        let workers = match workers.or(config.workers) {
            Some(0) => return Err(HarnessError::Config("workers must be at least 1".into())),
            Some(w) => w,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let out = out.unwrap_or_else(|| config.output_dir.clone());
        Ok(Self { config, out, workers })
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| HarnessError::Config(format!("cannot start {} workers: {e}", self.workers)))
    }

    /// Config as echoed into manifests, without execution-only fields.
    fn echo(&self) -> serde_json::Value {
        let mut c = self.config.clone();
        c.workers = None;
        c.output_dir = PathBuf::new();
        serde_json::to_value(c).expect("config serializes")
    }

    /// Placeholder-γ domain; the IB problem and NK99 scoring ignore γ.
    fn neutral_domain(&self) -> Result<GameDomain> {
        Ok(build_domain(&self.config.domain.params(1.0)?)?)
    }
}

fn constants(config: &ExperimentConfig) -> serde_json::Value {
    json!({
        "normalization_tol": NORMALIZATION_TOL,
        "ib_solver": config.ib.solver,
        "ib_annealing": "reverse, from a near-identity encoder at the largest beta",
        "unused_word_decoder": "need-weighted mean belief",
        "dynamics_update": "simultaneous sender and receiver",
        "convergence_metric": "L1 change of sender plus receiver",
        "permutation_draw_order": "ascending meaning index",
        "nk99_offspring": "per-row categorical draws, normalized counts",
        "nk99_fitness": "symmetric mean of both role pairings",
        "spearman_resamples": SPEARMAN_RESAMPLES,
        "spearman_p_value": "share of label permutations with |rho| at least observed",
        "log_base": 2,
    })
}

fn log(msg: impl AsRef<str>) {
    eprintln!("[simmax] {}", msg.as_ref());
}

// ---------------------------------------------------------------- bound

/// The IB problem of the configured domain and its bound.
#[derive(Debug, Clone)]
pub struct Bound {
    pub problem: IBProblem,
    pub curve: IBCurve,
}

fn bound_key(config: &ExperimentConfig) -> serde_json::Value {
    json!({"domain": config.domain, "betas": config.ib.betas, "solver": config.ib.solver})
}

/// Computes the bound and writes `bound/`.
pub fn ib_bound(ws: &Workspace) -> Result<Bound> {
    let started = Instant::now();
    let domain = ws.neutral_domain()?;
    let problem = IBProblem::from_domain(&domain)?;
    let betas = ws.config.ib.betas.values()?;
    log(format!("bound: {} beta values, n = {}", betas.len(), problem.n_meanings()));
    let curve = compute_ib_bound(&problem, &betas, &ws.config.ib.solver)?;

    let mut dir = ArtifactDir::create(ws.out.join("bound"))?;
    dir.write("curve.csv", curve_csv(&curve))?;
    if ws.config.ib.export_encoders {
        for (i, p) in curve.points.iter().enumerate() {
            if let Some(enc) = &p.encoder {
                dir.write(&format!("encoders/beta_{i:04}.csv"), matrix_csv(enc.matrix()))?;
            }
        }
    }
    let rounds: Vec<usize> = curve.points.iter().map(|p| p.rounds).collect();
    let shape = curve.check_shape(1e-6);
    let unconverged: Vec<f64> = curve.points.iter().filter(|p| !p.converged).map(|p| p.beta).collect();
    dir.finish(
        "ib_bound",
        ws.echo(),
        json!({
            "key": bound_key(&ws.config),
            "ceiling_bits": curve.ceiling,
            "points": curve.points.len(),
            "solver_rounds": rounds,
            "unconverged_betas": unconverged,
            "shape_violations": shape,
        }),
        constants(&ws.config),
    )?;
    log(format!(
        "bound: done in {:.1} s, {} solver rounds",
        started.elapsed().as_secs_f64(),
        rounds.iter().sum::<usize>()
    ));
    Ok(Bound { problem, curve })
}

/// Reuses `bound/` when its manifest matches this config and its files
/// are intact; otherwise recomputes it.
pub fn ensure_bound(ws: &Workspace) -> Result<Bound> {
    let dir = ws.out.join("bound");
    if let Some(bound) = load_bound(ws, &dir)? {
        log("bound: reusing checksummed bound/");
        return Ok(bound);
    }
    ib_bound(ws)
}

fn load_bound(ws: &Workspace, dir: &Path) -> Result<Option<Bound>> {
    if !dir.join(MANIFEST_NAME).exists() {
        return Ok(None);
    }
    let manifest = Manifest::read(dir)?;
    if manifest.details.get("key") != Some(&bound_key(&ws.config)) || manifest.verify(dir).is_err() {
        return Ok(None);
    }
    let problem = IBProblem::from_domain(&ws.neutral_domain()?)?;
    let rounds: Vec<usize> = manifest
        .details
        .get("solver_rounds")
        .and_then(|r| serde_json::from_value(r.clone()).ok())
        .unwrap_or_default();
    let curve = read_curve(&dir.join("curve.csv"), &rounds, problem.ceiling())?;
    Ok(Some(Bound { problem, curve }))
}

fn curve_csv(curve: &IBCurve) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for p in &curve.points {
        out += &format!("{},{},{},{}\n", num(p.beta), num(p.complexity), num(p.accuracy), num(p.objective));
    }
    out
}

fn read_curve(path: &Path, rounds: &[usize], ceiling: f64) -> Result<IBCurve> {
    let rows = read_table(path, CURVE_HEADER)?;
    let mut points = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let f = |k: usize| parse_f64(&r[k], path);
        points.push(IBPoint {
            beta: f(0)?,
            complexity: f(1)?,
            accuracy: f(2)?,
            objective: f(3)?,
            encoder: None,
            rounds: rounds.get(i).copied().unwrap_or(0),
            converged: true,
        });
    }
    Ok(IBCurve::new(points, ceiling)?)
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.parse().map_err(|_| malformed(path, &format!("not a number: {s:?}")))
}

fn parse_opt_f64(s: &str, path: &Path) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(s, path).map(Some)
    }
}

// ---------------------------------------------------------------- runs

/// One imitation run as recorded in its directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub gamma: f64,
    pub seed: u64,
    pub converged: bool,
    pub steps: u64,
    pub evaluation: SystemEvaluation,
}

pub fn run_label(gamma: f64, seed: u64) -> String {
    format!("g{gamma:e}_s{seed}")
}

/// Runs the imitation dynamic at (γ, seed) and writes `runs/<label>/`.
pub fn simulate_run(ws: &Workspace, bound: &Bound, gamma: f64, seed: u64) -> Result<RunSummary> {
    let started = Instant::now();
    let label = run_label(gamma, seed);
    let domain = build_domain(&ws.config.domain.params(gamma)?)?;
    let init_seed = seeds::init_seed(ws.config.master_seed, gamma, seed);
    let sim = ws.config.sim.sim_config(init_seed);
    let mut probe = PlaneProbe::new(bound.problem.clone(), Some(&bound.curve));
    let outcome = simulate(&domain, &sim, InitialCondition::Seed(init_seed), &mut probe)?;
    let pair = &outcome.final_pair;
    let evaluation = evaluate_system(
        &pair.sender,
        &bound.problem,
        &bound.curve,
        &domain,
        Some(&pair.receiver),
        Provenance {
            source_kind: SourceKind::Imitation,
            gamma: Some(gamma),
            seed: Some(seed),
        },
    )?;

    let mut dir = ArtifactDir::create(ws.out.join("runs").join(&label))?;
    let mut traj = format!("{TRAJECTORY_HEADER}\n");
    for r in &outcome.trajectory {
        traj += &format!(
            "{},{},{},{},{},{}\n",
            r.step,
            num(r.complexity_bits),
            num(r.accuracy_bits),
            num(r.expected_utility),
            opt_num(r.epsilon_bits),
            opt_num(r.fitted_beta)
        );
    }
    dir.write("trajectory.csv", traj)?;
    dir.write("sender.csv", matrix_csv(pair.sender.matrix()))?;
    dir.write("receiver.csv", matrix_csv(pair.receiver.matrix()))?;
    dir.write(
        "evaluation.csv",
        format!(
            "{PLANE_HEADER}\n{}\n",
            plane_row(&evaluation, Some(outcome.converged), Some(outcome.steps_taken))
        ),
    )?;
    dir.write("mode_map.csv", mode_map_csv(&pair.sender)?)?;
    dir.finish(
        "run",
        ws.echo(),
        json!({
            "gamma": gamma,
            "seed": seed,
            "init_seed": init_seed,
            "converged": outcome.converged,
            "steps_taken": outcome.steps_taken,
            "final_metric": outcome.final_metric,
        }),
        constants(&ws.config),
    )?;
    log(format!(
        "run {label}: {} after {} steps ({:.1} s), eps = {:.4}",
        if outcome.converged { "converged" } else { "stopped" },
        outcome.steps_taken,
        started.elapsed().as_secs_f64(),
        evaluation.epsilon
    ));
    Ok(RunSummary {
        label,
        gamma,
        seed,
        converged: outcome.converged,
        steps: outcome.steps_taken,
        evaluation,
    })
}

fn mode_map_csv(sender: &ConditionalDistribution) -> Result<String> {
    let mm = mode_map(sender)?;
    let mut out = format!("{MODE_MAP_HEADER}\n");
    for (m, (w, p)) in mm.modal_word.iter().zip(&mm.modal_prob).enumerate() {
        out += &format!("{m},{w},{}\n", num(*p));
    }
    Ok(out)
}

fn plane_row(e: &SystemEvaluation, converged: Option<bool>, steps: Option<u64>) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        e.source_kind,
        opt_num(e.gamma),
        e.seed.map(|s| s.to_string()).unwrap_or_default(),
        num(e.complexity),
        num(e.accuracy),
        num(e.epsilon),
        num(e.fitted_beta),
        opt_num(e.expected_utility),
        converged.map(|c| c.to_string()).unwrap_or_default(),
        steps.map(|s| s.to_string()).unwrap_or_default(),
    )
}

/// A parsed plane-table row.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneRow {
    pub evaluation: SystemEvaluation,
    pub converged: Option<bool>,
    pub steps: Option<u64>,
}

fn parse_plane_row(fields: &[String], path: &Path) -> Result<PlaneRow> {
    let bad = |what: &str| malformed(path, &format!("bad {what} field"));
    let source_kind: SourceKind = fields[0].parse().map_err(|_| bad("source_kind"))?;
    let opt_u64 = |s: &str, what: &str| -> Result<Option<u64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| bad(what))
        }
    };
    let converged = match fields[8].as_str() {
        "" => None,
        "true" => Some(true),
        "false" => Some(false),
        _ => return Err(bad("converged")),
    };
    Ok(PlaneRow {
        evaluation: SystemEvaluation {
            source_kind,
            gamma: parse_opt_f64(&fields[1], path)?,
            seed: opt_u64(&fields[2], "seed")?,
            complexity: parse_f64(&fields[3], path)?,
            accuracy: parse_f64(&fields[4], path)?,
            epsilon: parse_f64(&fields[5], path)?,
            fitted_beta: parse_f64(&fields[6], path)?,
            expected_utility: parse_opt_f64(&fields[7], path)?,
        },
        converged,
        steps: opt_u64(&fields[9], "steps")?,
    })
}

pub fn read_plane(path: &Path) -> Result<Vec<PlaneRow>> {
    read_table(path, PLANE_HEADER)?
        .iter()
        .map(|f| parse_plane_row(f, path))
        .collect()
}

/// Every run directory under `out/runs` with an intact manifest, in
/// (γ, seed) order.
pub fn collect_runs(out: &Path) -> Result<Vec<RunSummary>> {
    let runs_dir = out.join("runs");
    let Ok(entries) = std::fs::read_dir(&runs_dir) else {
        return Ok(Vec::new());
    };
    let mut runs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| HarnessError::io(&runs_dir, e))?.path();
        if !path.join(MANIFEST_NAME).exists() {
            continue;
        }
        runs.push(read_run(&path)?);
    }
    runs.sort_by(|a, b| a.gamma.total_cmp(&b.gamma).then(a.seed.cmp(&b.seed)));
    Ok(runs)
}

fn read_run(dir: &Path) -> Result<RunSummary> {
    let manifest = Manifest::read(dir)?;
    manifest.verify(dir)?;
    let eval_path = dir.join("evaluation.csv");
    let rows = read_plane(&eval_path)?;
    let [row] = rows.as_slice() else {
        return Err(malformed(&eval_path, "expected exactly one row"));
    };
    let (Some(gamma), Some(seed), Some(converged), Some(steps)) =
        (row.evaluation.gamma, row.evaluation.seed, row.converged, row.steps)
    else {
        return Err(malformed(&eval_path, "run row lacks gamma, seed or status"));
    };
    let label = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(RunSummary {
        label,
        gamma,
        seed,
        converged,
        steps,
        evaluation: row.evaluation.clone(),
    })
}

/// Final sender strategy of a run.
pub fn read_sender(out: &Path, label: &str) -> Result<ConditionalDistribution> {
    let path = out.join("runs").join(label).join("sender.csv");
    let m = parse_matrix(&read_text(&path)?, &path)?;
    ConditionalDistribution::new(m).map_err(|e| malformed(&path, &e.to_string()))
}

// ---------------------------------------------------------------- baselines

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSummary {
    pub permutations: usize,
    pub nk99_runs: usize,
}

/// Baselines over every converged run found under `runs/`.
pub fn baselines(ws: &Workspace, bound: &Bound) -> Result<BaselineSummary> {
    let runs = collect_runs(&ws.out)?;
    baselines_for(ws, bound, &runs)
}

fn baselines_for(ws: &Workspace, bound: &Bound, runs: &[RunSummary]) -> Result<BaselineSummary> {
    let started = Instant::now();
    let converged: Vec<&RunSummary> = runs.iter().filter(|r| r.converged).collect();
    if converged.is_empty() {
        return Err(HarnessError::MissingInput(format!(
            "no converged runs under {}",
            ws.out.join("runs").display()
        )));
    }
    let taus = ws.config.baselines.taus.values()?;
    let domain = ws.neutral_domain()?;
    let master = ws.config.master_seed;
    let pool = ws.pool()?;

    let jobs: Vec<(&RunSummary, f64)> = converged
        .iter()
        .flat_map(|r| taus.iter().map(move |&t| (*r, t)))
        .collect();
    let senders: Vec<ConditionalDistribution> = converged
        .iter()
        .map(|r| read_sender(&ws.out, &r.label))
        .collect::<Result<_>>()?;
    let permuted: Vec<Result<String>> = pool.install(|| {
        jobs.par_iter()
            .enumerate()
            .map(|(j, &(run, tau))| {
                let sender = &senders[j / taus.len()];
                let params = PermutationParams::new(tau, seeds::permutation_seed(master, run.gamma, run.seed, tau))?;
                let enc = permute_encoder(sender, &params)?;
                let e = evaluate_system(
                    &enc,
                    &bound.problem,
                    &bound.curve,
                    &domain,
                    None,
                    Provenance {
                        source_kind: SourceKind::Permutation,
                        gamma: Some(run.gamma),
                        seed: Some(run.seed),
                    },
                )?;
                Ok(format!("{},{}", num(tau), plane_row(&e, None, None)))
            })
            .collect()
    });
    let mut perm_csv = format!("tau,{PLANE_HEADER}\n");
    for row in permuted {
        perm_csv += &row?;
        perm_csv.push('\n');
    }

    let nk = &ws.config.baselines.nk99;
    let nk_results: Vec<Result<_>> = pool.install(|| {
        (0..nk.runs)
            .into_par_iter()
            .map(|k| {
                let params = nk.params(ws.config.domain.n, seeds::nk99_seed(master, k as u64));
                let outcome = nk99_simulate(&params)?;
                let e = evaluate_system(
                    &outcome.mean_sender,
                    &bound.problem,
                    &bound.curve,
                    &domain,
                    None,
                    Provenance {
                        source_kind: SourceKind::Nk99,
                        gamma: None,
                        seed: Some(k as u64),
                    },
                )?;
                Ok((outcome, e))
            })
            .collect()
    });

    let mut dir = ArtifactDir::create(ws.out.join("baselines"))?;
    dir.write("permutation.csv", perm_csv)?;
    let mut nk_csv = format!("{PLANE_HEADER}\n");
    for (k, res) in nk_results.into_iter().enumerate() {
        let (outcome, e) = res?;
        nk_csv += &plane_row(&e, None, None);
        nk_csv.push('\n');
        let sub = format!("nk99/run_{k}");
        dir.write(&format!("{sub}/sender.csv"), matrix_csv(outcome.mean_sender.matrix()))?;
        dir.write(&format!("{sub}/receiver.csv"), matrix_csv(outcome.mean_receiver.matrix()))?;
        let mut fit = String::from("generation,mean_fitness\n");
        for (g, f) in outcome.mean_fitness.iter().enumerate() {
            fit += &format!("{g},{}\n", num(*f));
        }
        dir.write(&format!("{sub}/fitness.csv"), fit)?;
    }
    dir.write("nk99.csv", nk_csv)?;
    let labels: Vec<&str> = converged.iter().map(|r| r.label.as_str()).collect();
    dir.finish(
        "baselines",
        ws.echo(),
        json!({"source_runs": labels, "taus": taus, "nk99_runs": nk.runs}),
        constants(&ws.config),
    )?;
    log(format!(
        "baselines: {} permutations, {} NK99 runs in {:.1} s",
        jobs.len(),
        nk.runs,
        started.elapsed().as_secs_f64()
    ));
    Ok(BaselineSummary {
        permutations: jobs.len(),
        nk99_runs: nk.runs,
    })
}

// ---------------------------------------------------------------- analysis

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub n_systems: usize,
    pub gamma_vs_complexity: Option<Spearman>,
    pub gamma_vs_accuracy: Option<Spearman>,
    pub gamma_vs_fitted_beta: Option<Spearman>,
    pub gamma_vs_epsilon: Option<Spearman>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub count: usize,
    pub mean_epsilon: Option<f64>,
    pub max_epsilon: Option<f64>,
    pub min_epsilon: Option<f64>,
}

impl GroupStats {
    fn of<'a>(evals: impl Iterator<Item = &'a SystemEvaluation>) -> Self {
        let eps: Vec<f64> = evals.map(|e| e.epsilon).collect();
        if eps.is_empty() {
            return Self::default();
        }
        Self {
            count: eps.len(),
            mean_epsilon: Some(eps.iter().sum::<f64>() / eps.len() as f64),
            max_epsilon: eps.iter().copied().reduce(f64::max),
            min_epsilon: eps.iter().copied().reduce(f64::min),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub runs: usize,
    pub converged_runs: usize,
    /// Largest step count among converged runs.
    pub max_steps_to_converge: Option<u64>,
    pub ceiling_bits: f64,
    pub max_accuracy_bits: Option<f64>,
    pub imitation: GroupStats,
    pub permutation_high_tau: GroupStats,
    pub permutation_all: GroupStats,
    pub nk99: GroupStats,
    /// Converged runs whose mode map, relabeled by mean referent, is
    /// monotone in the meaning.
    pub contiguous_mode_maps: usize,
    pub correlations: Correlations,
}

/// Aggregates everything found under `dir` into `dir/analysis/`. The
/// manifest echoes the config recorded with the bound.
pub fn analyze(dir: &Path) -> Result<AnalysisSummary> {
    let runs = collect_runs(dir)?;
    analyze_runs(dir, &runs)
}

fn analyze_runs(dir: &Path, runs: &[RunSummary]) -> Result<AnalysisSummary> {
    if runs.is_empty() {
        return Err(HarnessError::MissingInput(format!("no runs under {}", dir.join("runs").display())));
    }
    let bound_dir = dir.join("bound");
    let bound_manifest = Manifest::read(&bound_dir)
        .map_err(|_| HarnessError::MissingInput(format!("no bound under {}", bound_dir.display())))?;
    bound_manifest.verify(&bound_dir)?;
    let ceiling = bound_manifest
        .details
        .get("ceiling_bits")
        .and_then(serde_json::Value::as_f64)
        .ok_or_else(|| malformed(&bound_dir.join(MANIFEST_NAME), "missing ceiling_bits"))?;
    let curve = read_curve(&bound_dir.join("curve.csv"), &[], ceiling)?;

    let mut plane = format!("{PLANE_HEADER}\n");
    for r in runs {
        plane += &plane_row(&r.evaluation, Some(r.converged), Some(r.steps));
        plane.push('\n');
    }

    let perm_path = dir.join("baselines").join("permutation.csv");
    let mut permutations: Vec<(f64, SystemEvaluation)> = Vec::new();
    if perm_path.exists() {
        let header = format!("tau,{PLANE_HEADER}");
        for f in read_table(&perm_path, &header)? {
            let tau = parse_f64(&f[0], &perm_path)?;
            permutations.push((tau, parse_plane_row(&f[1..], &perm_path)?.evaluation));
        }
    }
    let nk_path = dir.join("baselines").join("nk99.csv");
    let nk99: Vec<SystemEvaluation> = if nk_path.exists() {
        read_plane(&nk_path)?.into_iter().map(|r| r.evaluation).collect()
    } else {
        Vec::new()
    };
    for (_, e) in &permutations {
        plane += &plane_row(e, None, None);
        plane.push('\n');
    }
    for e in &nk99 {
        plane += &plane_row(e, None, None);
        plane.push('\n');
    }
    for p in &curve.points {
        let fit = curve.efficiency_at(p.complexity, p.accuracy);
        let e = SystemEvaluation {
            source_kind: SourceKind::IbOptimal,
            gamma: None,
            seed: None,
            complexity: p.complexity,
            accuracy: p.accuracy,
            expected_utility: None,
            epsilon: fit.epsilon,
            fitted_beta: fit.fitted_beta,
        };
        plane += &plane_row(&e, None, None);
        plane.push('\n');
    }

    let converged: Vec<&RunSummary> = runs.iter().filter(|r| r.converged).collect();
    let conv_evals: Vec<SystemEvaluation> = converged.iter().map(|r| r.evaluation.clone()).collect();
    let mut gamma_beta = String::from("gamma,mean_fitted_beta,mean_epsilon,count\n");
    if !conv_evals.is_empty() {
        for row in gamma_beta_table(&conv_evals)? {
            gamma_beta += &format!(
                "{},{},{},{}\n",
                num(row.gamma),
                num(row.mean_fitted_beta),
                num(row.mean_epsilon),
                row.count
            );
        }
    }

    let gammas: Vec<f64> = conv_evals.iter().map(|e| e.gamma.unwrap_or(f64::NAN)).collect();
    let corr = |ys: Vec<f64>| spearman_rank_correlation(&gammas, &ys).ok();
    let correlations = Correlations {
        n_systems: conv_evals.len(),
        gamma_vs_complexity: corr(conv_evals.iter().map(|e| e.complexity).collect()),
        gamma_vs_accuracy: corr(conv_evals.iter().map(|e| e.accuracy).collect()),
        gamma_vs_fitted_beta: corr(conv_evals.iter().map(|e| e.fitted_beta).collect()),
        gamma_vs_epsilon: corr(conv_evals.iter().map(|e| e.epsilon).collect()),
    };

    let mut modes = String::from("gamma,seed,meaning,modal_word,canonical_word,modal_prob\n");
    let mut contiguous = 0;
    for r in &converged {
        let mm = mode_map(&read_sender(dir, &r.label)?)?;
        if mm.is_contiguous() {
            contiguous += 1;
        }
        let canon = mm.canonical_modal_word();
        for (m, ((w, p), c)) in mm.modal_word.iter().zip(&mm.modal_prob).zip(&canon).enumerate() {
            modes += &format!("{},{},{m},{w},{c},{}\n", num(r.gamma), r.seed, num(*p));
        }
    }

    let summary = AnalysisSummary {
        runs: runs.len(),
        converged_runs: converged.len(),
        max_steps_to_converge: converged.iter().map(|r| r.steps).max(),
        ceiling_bits: ceiling,
        max_accuracy_bits: runs.iter().map(|r| r.evaluation.accuracy).reduce(f64::max),
        imitation: GroupStats::of(conv_evals.iter()),
        permutation_high_tau: GroupStats::of(
            permutations
                .iter()
                .filter(|(t, _)| *t >= PERMUTATION_SUMMARY_MIN_TAU)
                .map(|(_, e)| e),
        ),
        permutation_all: GroupStats::of(permutations.iter().map(|(_, e)| e)),
        nk99: GroupStats::of(nk99.iter()),
        contiguous_mode_maps: contiguous,
        correlations: correlations.clone(),
    };

    let mut out = ArtifactDir::create(dir.join("analysis"))?;
    out.write("plane.csv", plane)?;
    out.write("gamma_beta.csv", gamma_beta)?;
    out.write("mode_maps.csv", modes)?;
    out.write("correlations.json", pretty(&correlations))?;
    out.write("summary.json", pretty(&summary))?;
    let labels: Vec<&str> = runs.iter().map(|r| r.label.as_str()).collect();
    out.finish(
        "analysis",
        bound_manifest.config.clone(),
        json!({"runs": labels, "permutation_rows": permutations.len(), "nk99_rows": nk99.len()}),
        bound_manifest.constants.clone(),
    )?;
    Ok(summary)
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("summary serializes");
    s.push('\n');
    s
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub runs: Vec<RunSummary>,
    pub failures: Vec<(String, String)>,
    pub analysis: Option<AnalysisSummary>,
}

/// Bound, every (γ, seed) run in parallel, baselines, aggregation.
///
/// Failed runs are listed in `failures.csv` and the sweep still finishes;
/// the caller turns a non-empty failure list into a partial-failure exit.
pub fn sweep(ws: &Workspace) -> Result<SweepSummary> {
    let started = Instant::now();
    let bound = ensure_bound(ws)?;
    let gammas = ws.config.gammas.values()?;
    let jobs: Vec<(f64, u64)> = gammas
        .iter()
        .flat_map(|&g| ws.config.seeds.iter().map(move |&s| (g, s)))
        .collect();
    log(format!("sweep: {} runs on {} workers", jobs.len(), ws.workers));
    let results: Vec<Result<RunSummary>> = ws
        .pool()?
        .install(|| jobs.par_iter().map(|&(g, s)| simulate_run(ws, &bound, g, s)).collect());

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (&(g, s), res) in jobs.iter().zip(results) {
        match res {
            Ok(r) => runs.push(r),
            Err(e) => {
                log(format!("run {} failed: {e}", run_label(g, s)));
                failures.push((run_label(g, s), e.to_string()));
            }
        }
    }

    let mut root = ArtifactDir::create(&ws.out)?;
    let mut fail_csv = String::from("label,error\n");
    for (label, err) in &failures {
        fail_csv += &format!("{label},\"{}\"\n", err.replace('"', "'"));
    }
    root.write("failures.csv", fail_csv)?;

    let have_baselines = if runs.iter().any(|r| r.converged) {
        baselines_for(ws, &bound, &runs)?;
        true
    } else {
        log("sweep: no converged runs, skipping baselines");
        false
    };
    let analysis = if runs.is_empty() {
        None
    } else {
        Some(analyze_runs(&ws.out, &runs)?)
    };

    root.adopt(&format!("bound/{MANIFEST_NAME}"))?;
    for r in &runs {
        root.adopt(&format!("runs/{}/{MANIFEST_NAME}", r.label))?;
    }
    if have_baselines {
        root.adopt(&format!("baselines/{MANIFEST_NAME}"))?;
    }
    if analysis.is_some() {
        root.adopt(&format!("analysis/{MANIFEST_NAME}"))?;
    }
    root.finish(
        "sweep",
        ws.echo(),
        json!({"runs": jobs.len(), "failed": failures.len()}),
        constants(&ws.config),
    )?;
    log(format!("sweep: done in {:.1} s", started.elapsed().as_secs_f64()));
    Ok(SweepSummary {
        runs,
        failures,
        analysis,
    })
}
