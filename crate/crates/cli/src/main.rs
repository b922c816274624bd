use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ron_core::checks::{run_suite, CheckOptions, Suite};
use ron_core::harness::{
    build_report, consistent_rhs, default_output_dir, gaussian_marginal, grid_l1_cost, random_cost,
    read_matrix_market, run_experiment, sv_profile_matrix, uniform_marginal, write_csv_matrix, write_csv_vector,
    write_matrix_market, ExperimentConfig, RunOptions, SvProfile,
};
use ron_core::objectives::DesignMatrix;
use ron_core::Error;

/// Environment variable naming the root directory for run outputs.
const OUTPUT_ROOT_ENV: &str = "RONBENCH_OUT";

/// Benchmarks for regularized Newton with randomized Hessian sketches.
#[derive(Parser, Debug)]
#[command(name = "ronbench", version, about, long_about = None)]
struct Cli {
    /// More output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every solver of an experiment config and write traces plus summary.json.
    ///
    /// Output goes to --out, else the config's output_dir, else
    /// $RONBENCH_OUT/<name>, else ./runs/<name>. Exit status is 0 when every
    /// run succeeded, 2 when any run failed and 1 on config errors.
    Run(RunArgs),
    /// Write a generated marginal, cost matrix or test matrix plus a
    /// <out>.meta.json sidecar.
    Gen(GenArgs),
    /// Run invariant suites; exits 0 only if every selected suite passes.
    Check(CheckArgs),
    /// Summarize a directory of trace CSVs into report.csv and report_plot.csv.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum number of runs executed concurrently.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root for default output directories.
    #[arg(long = "output-root", env = OUTPUT_ROOT_ENV, hide_env_values = true)]
    output_root: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(subcommand)]
    kind: GenKind,
    /// Destination file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overwrite existing files.
    #[arg(long, global = true)]
    force: bool,
    /// Seed for randomized generators.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum GenKind {
    /// Discretized Gaussian on a midpoint grid of [0, 1] (CSV, one value per line).
    GaussianMarginal {
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0.5)]
        mean: f64,
        #[arg(long)]
        sigma: f64,
    },
    /// Uniform marginal (CSV, one value per line).
    UniformMarginal {
        #[arg(long)]
        size: usize,
    },
    /// Cost matrix with Unif[0, 1) entries (CSV).
    RandomCost {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
    },
    /// Pixelwise l1 distances on a grid (CSV).
    GridCost {
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        /// Keep raw distances instead of scaling into [0, 1].
        #[arg(long)]
        raw: bool,
    },
    /// Dense matrix with a prescribed singular-value profile (Matrix Market).
    SvMatrix {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        /// fast, medium or slow.
        #[arg(long)]
        profile: String,
    },
    /// Consistent right-hand side b = A x for a Matrix Market matrix (CSV).
    Rhs {
        #[arg(long)]
        matrix: PathBuf,
    },
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Suite to run (repeatable); all suites by default.
    #[arg(long = "suite", value_parser = parse_suite)]
    suites: Vec<Suite>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multiplies the Hessian Lipschitz constant of the lemma suite.
    #[arg(long, default_value_t = 1.0)]
    lipschitz_scale: f64,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directory holding trace CSVs (searched recursively).
    dir: PathBuf,
    /// Target error for the iterations/flops-to-tol columns.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Where to write report.csv and report_plot.csv; defaults to the trace directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    Suite::parse(s).map_err(|e| e.to_string())
}

/// Exit statuses.
const OK: u8 = 0;
const USAGE: u8 = 1;
const FAILED: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { OK });
        }
    };
    let code = match cli.command {
        Command::Run(args) => cmd_run(args, cli.verbose),
        Command::Gen(args) => cmd_gen(args),
        Command::Check(args) => cmd_check(args, cli.verbose),
        Command::Report(args) => cmd_report(args),
    };
    ExitCode::from(code)
}

fn fail(code: u8, err: impl std::fmt::Display) -> u8 {
    eprintln!("error: {err}");
    code
}

fn cmd_run(args: RunArgs, verbose: u8) -> u8 {
    let mut cfg = match ExperimentConfig::load(&args.config).and_then(|c| c.validate().map(|_| c)) {
        Ok(c) => c,
        Err(e) => return fail(USAGE, e),
    };
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    let output_dir = args
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| {
            let root = args.output_root.unwrap_or_else(|| PathBuf::from("runs"));
            default_output_dir(&root, &cfg)
        });
    let opts = RunOptions {
        output_dir: output_dir.clone(),
        jobs: args.jobs as usize,
    };
    let summary = match run_experiment(&cfg, &opts) {
        Ok(s) => s,
        // Problem construction rejects bad parameters before anything runs.
        Err(e @ (Error::Config(_) | Error::InvalidArgument(_) | Error::Parse { .. } | Error::DimensionMismatch { .. })) => {
            return fail(USAGE, e)
        }
        Err(e) => return fail(FAILED, e),
    };

    println!("experiment {} ({} metric), output in {}", summary.name, summary.metric, output_dir.display());
    println!(
        "{:<22} {:>5} {:>6} {:>8} {:>12} {:>14} {:>12}",
        "solver", "runs", "failed", "reached", "iters(med)", "flops(med)", "final(med)"
    );
    let fmt_env = |e: Option<&ron_core::harness::Envelope>, prec: bool| match e {
        Some(e) if prec => format!("{:.3e}", e.median),
        Some(e) => format!("{}", e.median),
        None => "-".into(),
    };
    for s in &summary.solvers {
        println!(
            "{:<22} {:>5} {:>6} {:>8} {:>12} {:>14} {:>12}",
            s.solver,
            s.runs,
            s.failures,
            s.reached_tol,
            fmt_env(s.iterations_to_tol.as_ref(), false),
            fmt_env(s.flops_to_tol.as_ref(), true),
            fmt_env(s.final_error.as_ref(), true),
        );
    }
    if verbose > 0 {
        for r in &summary.runs {
            println!(
                "  {} seed={} repeat={} status={} iters={} flops={}{}",
                r.solver,
                r.seed,
                r.repeat,
                r.status,
                r.iterations,
                r.final_flops,
                r.failure.as_deref().map(|f| format!(" failure: {f}")).unwrap_or_default()
            );
        }
    }
    println!("ranking by flops: {}", summary.ranking_by_flops.join(" < "));

    let failed = summary.failed_runs();
    if failed > 0 {
        for r in summary.runs.iter().filter(|r| r.failure.is_some()) {
            eprintln!(
                "run failed: {} seed={} repeat={}: {}",
                r.solver,
                r.seed,
                r.repeat,
                r.failure.as_deref().unwrap_or("")
            );
        }
        return FAILED;
    }
    OK
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn cmd_gen(args: GenArgs) -> u8 {
    let Some(out) = args.out else {
        return fail(USAGE, "gen needs --out");
    };
    let meta_path = sidecar_path(&out);
    if !args.force {
        for p in [&out, &meta_path] {
            if p.exists() {
                return fail(USAGE, format!("{} exists; pass --force to overwrite", p.display()));
            }
        }
    }
    let seed = args.seed;
    let (kind, params, written) = match &args.kind {
        GenKind::GaussianMarginal { size, mean, sigma } => (
            "gaussian_marginal",
            serde_json::json!({ "size": size, "mean": mean, "sigma": sigma }),
            gaussian_marginal(*size, *mean, *sigma).and_then(|v| write_csv_vector(&out, &v)),
        ),
        GenKind::UniformMarginal { size } => (
            "uniform_marginal",
            serde_json::json!({ "size": size }),
            uniform_marginal(*size).and_then(|v| write_csv_vector(&out, &v)),
        ),
        GenKind::RandomCost { rows, cols } => (
            "random_cost",
            serde_json::json!({ "rows": rows, "cols": cols }),
            if *rows == 0 || *cols == 0 {
                Err(Error::InvalidArgument("cost dimensions must be >= 1".into()))
            } else {
                write_csv_matrix(&out, &random_cost(*rows, *cols, seed))
            },
        ),
        GenKind::GridCost { height, width, raw } => (
            "grid_cost",
            serde_json::json!({ "height": height, "width": width, "normalized": !raw }),
            grid_l1_cost(*height, *width, !raw).and_then(|c| write_csv_matrix(&out, &c)),
        ),
        GenKind::SvMatrix { rows, cols, profile } => (
            "sv_matrix",
            serde_json::json!({ "rows": rows, "cols": cols, "profile": profile }),
            SvProfile::parse(profile)
                .and_then(|p| sv_profile_matrix(*rows, *cols, &p, seed))
                .and_then(|a| write_matrix_market(&out, &DesignMatrix::from(a))),
        ),
        GenKind::Rhs { matrix } => (
            "consistent_rhs",
            serde_json::json!({ "matrix": matrix }),
            read_matrix_market(matrix).and_then(|a| write_csv_vector(&out, &consistent_rhs(&a, seed))),
        ),
    };
    if let Err(e) = written {
        return fail(USAGE, e);
    }
    let meta = serde_json::json!({
        "kind": kind,
        "seed": seed,
        "params": params,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n";
    if let Err(e) = std::fs::write(&meta_path, text) {
        return fail(FAILED, format!("{}: {e}", meta_path.display()));
    }
    println!("wrote {} and {}", out.display(), meta_path.display());
    OK
}

fn cmd_check(args: CheckArgs, verbose: u8) -> u8 {
    let suites = if args.suites.is_empty() { Suite::ALL.to_vec() } else { args.suites };
    let opts = CheckOptions {
        seed: args.seed,
        lipschitz_scale: args.lipschitz_scale,
    };
    let mut all = true;
    for suite in suites {
        let report = run_suite(suite, &opts);
        all &= report.passed();
        if verbose > 0 || !report.passed() {
            print!("{report}");
        } else {
            println!("[PASS] suite {}", report.suite.name());
        }
    }
    if all {
        OK
    } else {
        FAILED
    }
}

fn cmd_report(args: ReportArgs) -> u8 {
    let report = match build_report(&args.dir, args.tol) {
        Ok(r) => r,
        Err(e) => return fail(USAGE, e),
    };
    print!("{}", report.render_table());
    let out = args.out.unwrap_or_else(|| args.dir.clone());
    let written = std::fs::create_dir_all(&out)
        .map_err(|e| Error::io(&out, e))
        .and_then(|_| report.table_csv())
        .and_then(|t| std::fs::write(out.join("report.csv"), t).map_err(|e| Error::io(&out, e)))
        .and_then(|_| report.plot_csv())
        .and_then(|p| std::fs::write(out.join("report_plot.csv"), p).map_err(|e| Error::io(&out, e)));
    if let Err(e) = written {
        return fail(FAILED, e);
    }
    OK
}
