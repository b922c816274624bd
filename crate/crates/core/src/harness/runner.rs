//! Runs every (seed, solver, repeat) of an experiment and writes traces,
//! sidecars, a summary and a long-format plot file.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{build_problem, ExperimentConfig, ModelKind, Problem, SolverKind, SolverSpec, StepKind};
use super::trace::{trace_csv_bytes, write_atomic, TraceRow};
use crate::baselines::{cgls_run, gradient_descent_run, randomized_kaczmarz_run, sinkhorn_run, StepRule};
use crate::objectives::SmoothObjective;
use crate::regularized_newton::{run_ron, HessianModel, LemmaViolation, RonConfig};
use crate::{rng, Error, Result};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub output_dir: PathBuf,
    /// Worker threads; 1 runs everything on the calling thread.
    pub jobs: usize,
}

/// Min / median / max over runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Envelope {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Some(Self {
            min: v[0],
            median,
            max: v[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub solver: String,
    pub seed: u64,
    pub repeat: usize,
    pub run_seed: u64,
    pub trace_file: String,
    pub status: String,
    pub failure: Option<String>,
    pub converged: bool,
    pub iterations: usize,
    pub iterations_to_tol: Option<usize>,
    pub flops_to_tol: Option<u64>,
    pub final_error: Option<f64>,
    pub final_flops: u64,
    /// Sum of the per-step flop charges; equals `final_flops`.
    pub ledger_flops: u64,
    pub lemma_violations: usize,
    #[serde(skip)]
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub solver: String,
    pub tol: f64,
    pub runs: usize,
    pub failures: usize,
    pub reached_tol: usize,
    pub iterations_to_tol: Option<Envelope>,
    pub flops_to_tol: Option<Envelope>,
    pub final_error: Option<Envelope>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub version: String,
    pub rng: String,
    pub metric: String,
    pub seed_manifest: Vec<serde_json::Value>,
    pub solvers: Vec<SolverSummary>,
    /// Solver names ordered by median iterations-to-tol; solvers that never
    /// reached their tolerance come last.
    pub ranking_by_iterations: Vec<String>,
    pub ranking_by_flops: Vec<String>,
    pub runs: Vec<RunRecord>,
}

impl ExperimentSummary {
    pub fn failed_runs(&self) -> usize {
        self.runs.iter().filter(|r| r.failure.is_some()).count()
    }

    pub fn solver(&self, name: &str) -> Option<&SolverSummary> {
        self.solvers.iter().find(|s| s.solver == name)
    }
}

struct RunOutput {
    rows: Vec<TraceRow>,
    failure: Option<Error>,
    converged: bool,
    violations: Vec<LemmaViolation>,
    extra: serde_json::Value,
}

fn tol_of(spec: &SolverSpec, cfg: &ExperimentConfig) -> f64 {
    spec.tol.unwrap_or_else(|| cfg.problem.default_tol())
}

fn execute(spec: &SolverSpec, problem: &Problem, tol: f64, run_seed: u64) -> Result<RunOutput> {
    let (objective, theta0): (&dyn SmoothObjective, _) = match problem {
        Problem::Eot { dual, theta0 } => (dual, theta0),
        Problem::LeastSquares { ls, x0 } => (ls, x0),
    };
    let eot = matches!(problem, Problem::Eot { .. });
    let lipschitz_hessian = || -> Result<f64> {
        let lh = spec
            .lipschitz_hessian
            .unwrap_or_else(|| objective.suggested_lipschitz_hessian(theta0));
        if lh.is_finite() {
            Ok(lh)
        } else {
            Err(Error::Overflow(format!(
                "the Hessian Lipschitz estimate at the initial point is {lh}; set lipschitz_hessian or start closer to zero"
            )))
        }
    };
    match spec.kind {
        SolverKind::Ron => {
            let model = match spec.model {
                Some(ModelKind::Rpc) => HessianModel::Rpc {
                    rank: spec.rank.unwrap_or(1),
                },
                Some(ModelKind::ExactDense) => HessianModel::ExactDense,
                Some(ModelKind::ScaledIdentity) | None => HessianModel::ScaledIdentity {
                    lipschitz: spec.lipschitz.unwrap_or(1.0),
                },
            };
            let lh = lipschitz_hessian()?;
            let mut cfg = RonConfig::new(model, lh);
            cfg.max_iters = spec.max_iters;
            cfg.assert_lemmas = spec.assert_lemmas;
            cfg.seed = run_seed;
            if eot {
                cfg.grad_tol = tol;
            } else {
                cfg.grad_tol = 0.0;
                cfg.value_tol = Some(tol);
            }
            let run = run_ron(objective, theta0, &cfg)?;
            Ok(RunOutput {
                rows: run.trace.iter().map(TraceRow::from).collect(),
                extra: json!({
                    "model": model.label(),
                    "lipschitz_hessian": lh,
                    "lambda_floor": run.lambda_floor,
                    "violations": run.violations.iter().take(20).collect::<Vec<_>>(),
                }),
                failure: run.failure,
                converged: run.converged,
                violations: run.violations,
            })
        }
        SolverKind::Sinkhorn => {
            let Problem::Eot { dual, .. } = problem else {
                return Err(Error::Config("sinkhorn needs an eot problem".into()));
            };
            let (trace, _) = sinkhorn_run(dual, spec.max_iters, tol)?;
            Ok(baseline_output(trace, json!({})))
        }
        SolverKind::GradientDescent => {
            let lipschitz = spec.lipschitz.unwrap_or(1.0);
            let rule = match spec.step {
                Some(StepKind::RonIdentity) => StepRule::RonIdentity {
                    lipschitz,
                    lipschitz_hessian: lipschitz_hessian()?,
                    lambda_floor: None,
                },
                _ => StepRule::Fixed { lipschitz },
            };
            let gd_tol = if eot { tol } else { 0.0 };
            let mut trace = gradient_descent_run(objective, theta0, rule, spec.max_iters, gd_tol)?;
            if !eot {
                truncate_at_value(&mut trace, tol);
            }
            Ok(baseline_output(trace, json!({ "step_rule": rule })))
        }
        SolverKind::Kaczmarz | SolverKind::Cgls => {
            let Problem::LeastSquares { ls, x0 } = problem else {
                return Err(Error::Config("kaczmarz and cgls need a least_squares problem".into()));
            };
            let trace = if spec.kind == SolverKind::Kaczmarz {
                randomized_kaczmarz_run(ls, x0, spec.max_iters, tol, run_seed)?
            } else {
                cgls_run(ls, x0, spec.max_iters, tol)?
            };
            Ok(baseline_output(trace, json!({})))
        }
    }
}

fn truncate_at_value(trace: &mut crate::baselines::BaselineTrace, tol: f64) {
    if let Some(pos) = trace.rows.iter().position(|r| r.f_value <= tol) {
        trace.rows.truncate(pos + 1);
        if let Some(last) = trace.rows.last_mut() {
            last.step_norm = None;
        }
        trace.converged = true;
    }
}

fn baseline_output(trace: crate::baselines::BaselineTrace, extra: serde_json::Value) -> RunOutput {
    RunOutput {
        rows: trace.rows.iter().map(TraceRow::from).collect(),
        failure: trace.failure,
        converged: trace.converged,
        violations: Vec::new(),
        extra,
    }
}

fn error_of(row: &TraceRow, eot: bool) -> f64 {
    if eot {
        row.grad_norm
    } else {
        row.f
    }
}

/// Index of the first row whose error is at most `tol`.
pub fn first_below(rows: &[TraceRow], tol: f64, eot: bool) -> Option<usize> {
    rows.iter().position(|r| error_of(r, eot) <= tol)
}

struct Job {
    solver_idx: usize,
    seed_idx: usize,
    repeat: usize,
}

fn trace_name(solver: &str, seed: u64, repeat: usize) -> String {
    let safe: String = solver
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}_seed{seed}_rep{repeat}")
}

/// Runs the experiment described by `cfg`, writing into `opts.output_dir`:
/// `traces/<solver>_seed<s>_rep<r>.csv` (+ `.json` sidecar), `summary.json`
/// and `plot.csv`.
///
/// Per-run failures are recorded in the summary; only configuration and IO
/// problems are returned as errors.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let problems: Vec<Problem> = cfg
        .seeds
        .iter()
        .map(|&s| build_problem(&cfg.problem, s))
        .collect::<Result<_>>()?;
    let eot = cfg.problem.is_eot();
    let trace_dir = opts.output_dir.join("traces");
    std::fs::create_dir_all(&trace_dir).map_err(|e| Error::io(&trace_dir, e))?;

    let mut jobs = Vec::new();
    for seed_idx in 0..cfg.seeds.len() {
        for solver_idx in 0..cfg.solvers.len() {
            for repeat in 0..cfg.repeats {
                jobs.push(Job {
                    solver_idx,
                    seed_idx,
                    repeat,
                });
            }
        }
    }

    let run_job = |job: &Job| -> Result<RunRecord> {
        let spec = &cfg.solvers[job.solver_idx];
        let seed = cfg.seeds[job.seed_idx];
        let run_seed = rng::run_seed(seed, job.solver_idx, job.repeat);
        let tol = tol_of(spec, cfg);
        let name = spec.label();
        let out = execute(spec, &problems[job.seed_idx], tol, run_seed);
        let (mut rows, failure, converged, violations, extra) = match out {
            Ok(o) => (o.rows, o.failure.map(|e| e.to_string()), o.converged, o.violations, o.extra),
            Err(e) => (Vec::new(), Some(e.to_string()), false, Vec::new(), json!({})),
        };
        if !cfg.record_wall_time {
            for r in &mut rows {
                r.wall_time_s = 0.0;
            }
        }
        let stem = trace_name(&name, seed, job.repeat);
        let csv_path = trace_dir.join(format!("{stem}.csv"));
        write_atomic(&csv_path, &trace_csv_bytes(&rows)?)?;
        let hit = first_below(&rows, tol, eot);
        let final_flops = rows.last().map_or(0, |r| r.flops);
        let ledger_flops = rows
            .windows(2)
            .map(|w| w[1].flops - w[0].flops)
            .sum::<u64>()
            + rows.first().map_or(0, |r| r.flops);
        let record = RunRecord {
            solver: name.clone(),
            seed,
            repeat: job.repeat,
            run_seed,
            trace_file: format!("traces/{stem}.csv"),
            status: if failure.is_some() { "failed" } else { "ok" }.into(),
            failure,
            converged,
            iterations: rows.len().saturating_sub(1),
            iterations_to_tol: hit,
            flops_to_tol: hit.map(|i| rows[i].flops),
            final_error: rows.last().map(|r| error_of(r, eot)),
            final_flops,
            ledger_flops,
            lemma_violations: violations.len(),
            rows,
        };
        let sidecar = json!({
            "solver": name,
            "spec": spec,
            "metric": cfg.problem.metric(),
            "tol": tol,
            "seed": seed,
            "repeat": job.repeat,
            "run_seed": run_seed,
            "problem": cfg.problem,
            "rng": rng::GENERATOR,
            "version": env!("CARGO_PKG_VERSION"),
            "build_profile": if cfg!(debug_assertions) { "debug" } else { "release" },
            "status": record.status,
            "failure": record.failure,
            "converged": converged,
            "lemma_violation_count": violations.len(),
            "details": extra,
        });
        let json_path = trace_dir.join(format!("{stem}.json"));
        write_atomic(&json_path, serde_json::to_string_pretty(&sidecar)?.as_bytes())?;
        Ok(record)
    };

    let records: Vec<RunRecord> = if opts.jobs <= 1 {
        jobs.iter().map(run_job).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(run_job).collect::<Result<_>>())?
    };

    let summary = summarize(cfg, records);
    write_atomic(
        &opts.output_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    write_atomic(&opts.output_dir.join("plot.csv"), &plot_csv(cfg, &summary)?)?;
    Ok(summary)
}

fn summarize(cfg: &ExperimentConfig, runs: Vec<RunRecord>) -> ExperimentSummary {
    let mut solvers = Vec::new();
    for spec in &cfg.solvers {
        let name = spec.label();
        let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.solver == name).collect();
        let iters: Vec<f64> = mine.iter().filter_map(|r| r.iterations_to_tol.map(|v| v as f64)).collect();
        let flops: Vec<f64> = mine.iter().filter_map(|r| r.flops_to_tol.map(|v| v as f64)).collect();
        let finals: Vec<f64> = mine.iter().filter_map(|r| r.final_error).collect();
        solvers.push(SolverSummary {
            solver: name,
            tol: tol_of(spec, cfg),
            runs: mine.len(),
            failures: mine.iter().filter(|r| r.failure.is_some()).count(),
            reached_tol: iters.len(),
            iterations_to_tol: Envelope::of(&iters),
            flops_to_tol: Envelope::of(&flops),
            final_error: Envelope::of(&finals),
        });
    }
    let rank = |key: &dyn Fn(&SolverSummary) -> Option<f64>| -> Vec<String> {
        let mut order: Vec<&SolverSummary> = solvers.iter().collect();
        order.sort_by(|a, b| match (key(a), key(b)) {
            (Some(x), Some(y)) => x.total_cmp(&y).then_with(|| a.solver.cmp(&b.solver)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.solver.cmp(&b.solver),
        });
        order.iter().map(|s| s.solver.clone()).collect()
    };
    let ranking_by_iterations = rank(&|s| s.iterations_to_tol.map(|e| e.median));
    let ranking_by_flops = rank(&|s| s.flops_to_tol.map(|e| e.median));
    let seed_manifest = cfg
        .seeds
        .iter()
        .map(|&seed| {
            let runs: Vec<_> = cfg
                .solvers
                .iter()
                .enumerate()
                .flat_map(|(i, s)| {
                    (0..cfg.repeats).map(move |j| {
                        json!({ "solver": s.label(), "repeat": j, "run_seed": rng::run_seed(seed, i, j) })
                    })
                })
                .collect();
            json!({
                "seed": seed,
                "problem_seed": rng::derive_seed(seed, rng::PROBLEM_STREAM),
                "runs": runs,
            })
        })
        .collect();
    ExperimentSummary {
        name: cfg.name.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
        rng: rng::GENERATOR.into(),
        metric: cfg.problem.metric().into(),
        seed_manifest,
        solvers,
        ranking_by_iterations,
        ranking_by_flops,
        runs,
    }
}

/// Long format `solver,run,axis,x,y`: every trace on the `iter` and `flops`
/// axes, plus `min`/`median`/`max` envelopes over runs on the `iter` axis
/// for stochastic solvers (runs that stopped early carry their last value).
fn plot_csv(cfg: &ExperimentConfig, summary: &ExperimentSummary) -> Result<Vec<u8>> {
    let eot = cfg.problem.is_eot();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["solver", "run", "axis", "x", "y"])?;
    for spec in &cfg.solvers {
        let name = spec.label();
        let runs: Vec<&RunRecord> = summary.runs.iter().filter(|r| r.solver == name).collect();
        for r in &runs {
            let run = format!("seed{}-rep{}", r.seed, r.repeat);
            for row in &r.rows {
                let y = error_of(row, eot);
                w.serialize((&name, &run, "iter", row.iter as f64, y))?;
                w.serialize((&name, &run, "flops", row.flops as f64, y))?;
            }
        }
        let longest = runs.iter().map(|r| r.rows.len()).max().unwrap_or(0);
        if spec.is_stochastic() && runs.len() > 1 {
            for it in 0..longest {
                let ys: Vec<f64> = runs
                    .iter()
                    .filter_map(|r| r.rows.get(it).or(r.rows.last()).map(|row| error_of(row, eot)))
                    .collect();
                if let Some(env) = Envelope::of(&ys) {
                    for (label, y) in [("min", env.min), ("median", env.median), ("max", env.max)] {
                        w.serialize((&name, label, "iter", it as f64, y))?;
                    }
                }
            }
        }
    }
    w.into_inner()
        .map_err(|e| Error::Config(format!("flushing plot buffer: {e}")))
}

/// Default output directory: `<root>/<config name>`.
pub fn default_output_dir(root: &Path, cfg: &ExperimentConfig) -> PathBuf {
    root.join(&cfg.name)
}
