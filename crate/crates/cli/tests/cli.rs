use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ron_core::harness::{read_csv_vector, read_matrix_market, SvProfile};
use ron_core::linalg::singular_values;

fn ronbench(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ronbench"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RONBENCH_OUT")
        .output()
        .expect("spawn ronbench")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn shipped_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

const SMALL_EOT: &str = r#"
name = "small-eot"
seeds = [0, 1]

[problem]
kind = "eot"
epsilon = 0.2
row_marginal = { kind = "uniform", size = 20 }
col_marginal = { kind = "uniform", size = 20 }
cost = { kind = "random_uniform" }

[[solvers]]
kind = "ron"
model = "rpc"
rank = 20
max_iters = 100

[[solvers]]
kind = "sinkhorn"
max_iters = 2000
"#;

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(csv_files(&p));
        } else if p.extension().is_some_and(|e| e == "csv") {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn demo_config_runs_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = shipped_config("demo_eot.toml");
    let out = ronbench(&["run", "--config", cfg.to_str().unwrap(), "--out", "demo"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("ron-rpc-k100"));
    assert!(tmp.path().join("demo/summary.json").is_file());
}

#[test]
fn missing_config_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ronbench(&["run", "--config", "absent.toml"], tmp.path());
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("absent.toml"));
}

#[test]
fn invalid_config_reports_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "name = \"x\"\nseeds = [0]\n\n[problem\n").unwrap();
    let out = ronbench(&["run", "--config", "bad.toml"], tmp.path());
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("line 4"), "{}", stderr(&out));
}

#[test]
fn overflowing_run_exits_2_and_records_the_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL_EOT.replace("epsilon = 0.2", "epsilon = 0.2\ninit_value = 400.0");
    fs::write(tmp.path().join("overflow.toml"), text).unwrap();
    let out = ronbench(&["run", "--config", "overflow.toml", "--out", "o"], tmp.path());
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let summary = fs::read_to_string(tmp.path().join("o/summary.json")).unwrap();
    assert!(summary.contains("overflow"), "{summary}");
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("small.toml"), SMALL_EOT).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ronbench"))
        .args(["run", "--config", "small.toml"])
        .current_dir(tmp.path())
        .env("RONBENCH_OUT", "results")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(tmp.path().join("results/small-eot/summary.json").is_file());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("small.toml"), SMALL_EOT).unwrap();
    for (dir, jobs) in [("a", "1"), ("b", "3")] {
        let out = ronbench(
            &["run", "--config", "small.toml", "--seed", "7", "--jobs", jobs, "--out", dir],
            tmp.path(),
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let rep = ronbench(&["report", dir], tmp.path());
        assert_eq!(code(&rep), 0, "{}", stderr(&rep));
    }
    let a = csv_files(&tmp.path().join("a"));
    let b = csv_files(&tmp.path().join("b"));
    assert!(a.len() >= 4);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{} differs", x.display());
    }
}

#[test]
fn full_check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ronbench(&["check"], tmp.path());
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    for suite in ["rpc", "woodbury", "finite-diff", "lemmas", "oracle"] {
        assert!(stdout(&out).contains(&format!("[PASS] suite {suite}")));
    }
}

#[test]
fn tiny_lipschitz_constant_fails_the_descent_check() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ronbench(&["check", "--suite", "lemmas", "--lipschitz-scale", "1e-12"], tmp.path());
    assert_ne!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("[FAIL] suite lemmas"), "{text}");
    assert!(text.contains("descent"), "{text}");
    assert!(text.contains("lhs = "), "{text}");
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ronbench(&["check", "--suite", "nonsense"], tmp.path());
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("nonsense"));
}

#[test]
fn unknown_flag_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ronbench(&["check", "--frobnicate"], tmp.path());
    assert_eq!(code(&out), 1);
}

#[test]
fn flat_gaussian_marginal_sums_to_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ronbench(
        &["gen", "gaussian-marginal", "--size", "3", "--sigma", "100", "--out", "m.csv"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = read_csv_vector(&tmp.path().join("m.csv")).unwrap();
    assert_eq!(v.len(), 3);
    assert!((v.sum() - 1.0).abs() < 1e-12);
    assert!(v.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-4));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("m.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 0);
    assert_eq!(meta["params"]["size"], 3);
    assert!(meta["version"].is_string());
}

#[test]
fn sv_matrix_has_the_requested_spectrum() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ronbench(
        &["gen", "sv-matrix", "--rows", "60", "--cols", "20", "--profile", "fast", "--seed", "3", "--out", "a.mtx"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let a = read_matrix_market(tmp.path().join("a.mtx")).unwrap().to_dense();
    assert_eq!(a.shape(), (60, 20));
    let got = singular_values(&a);
    let want = SvProfile::Fast.values(20).unwrap();
    for (s, w) in got.iter().zip(&want) {
        assert!((s - w).abs() <= 1e-10 * w, "{s} vs {w}");
    }
}

#[test]
fn gen_refuses_to_overwrite_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["gen", "random-cost", "--rows", "2", "--cols", "3", "--out", "c.csv"];
    assert_eq!(code(&ronbench(&args, tmp.path())), 0);
    let first = fs::read(tmp.path().join("c.csv")).unwrap();
    let again = ronbench(&args, tmp.path());
    assert_eq!(code(&again), 1);
    assert!(stderr(&again).contains("--force"));
    let forced = ronbench(
        &["gen", "random-cost", "--rows", "2", "--cols", "3", "--seed", "1", "--out", "c.csv", "--force"],
        tmp.path(),
    );
    assert_eq!(code(&forced), 0);
    assert_ne!(fs::read(tmp.path().join("c.csv")).unwrap(), first);
}

#[test]
fn gen_rejects_invalid_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ronbench(
        &["gen", "gaussian-marginal", "--size", "3", "--sigma", "-1", "--out", "m.csv"],
        tmp.path(),
    );
    assert_eq!(code(&out), 1);
    assert!(!tmp.path().join("m.csv").exists());
    let out = ronbench(&["gen", "sv-matrix", "--rows", "2", "--cols", "4", "--profile", "fast", "--out", "a.mtx"], tmp.path());
    assert_eq!(code(&out), 1);
}

const TRACE_HEADER: &str = "iter,f,grad_norm,lambda_sqrt,rho,step_norm,flops,wall_time_s\n";

fn write_trace(dir: &Path, name: &str, rows: &[(f64, u64)]) {
    let mut text = TRACE_HEADER.to_string();
    for (i, (g, flops)) in rows.iter().enumerate() {
        text.push_str(&format!("{i},1.0,{g:?},,,,{flops},0.0\n"));
    }
    fs::write(dir.join(name), text).unwrap();
}

/// Solvers of report.csv in order of first appearance.
fn report_solvers(dir: &Path) -> Vec<String> {
    let table = fs::read_to_string(dir.join("report.csv")).unwrap();
    let mut out: Vec<String> = Vec::new();
    for line in table.lines().skip(1) {
        let solver = line.split(',').next().unwrap().to_string();
        if out.last() != Some(&solver) {
            out.push(solver);
        }
    }
    out
}

#[test]
fn report_of_a_single_trace_has_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    write_trace(tmp.path(), "solo_seed0_rep0.csv", &[(1.0, 10), (1e-9, 20)]);
    let out = ronbench(&["report", "."], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(report_solvers(tmp.path()), ["solo"]);
    let table = stdout(&out);
    assert_eq!(table.lines().skip(1).filter(|l| !l.trim().is_empty()).count(), 1, "{table}");
    assert!(tmp.path().join("report_plot.csv").is_file());
}

#[test]
fn report_rows_are_sorted_by_flops() {
    let tmp = tempfile::tempdir().unwrap();
    write_trace(tmp.path(), "slow_seed0_rep0.csv", &[(1.0, 10), (1e-9, 5000)]);
    write_trace(tmp.path(), "fast_seed0_rep0.csv", &[(1.0, 10), (1e-9, 50)]);
    write_trace(tmp.path(), "never_seed0_rep0.csv", &[(1.0, 10), (0.5, 20)]);
    let out = ronbench(&["report", "."], tmp.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(report_solvers(tmp.path()), ["fast", "slow", "never"]);
}

#[test]
fn malformed_trace_row_is_reported_with_its_row_number() {
    let tmp = tempfile::tempdir().unwrap();
    write_trace(tmp.path(), "ok_seed0_rep0.csv", &[(1.0, 10)]);
    fs::write(
        tmp.path().join("bad_seed0_rep0.csv"),
        format!("{TRACE_HEADER}0,1.0,1.0,,,,10,0.0\n1,1.0,oops,,,,20,0.0\n"),
    )
    .unwrap();
    let out = ronbench(&["report", "."], tmp.path());
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("bad_seed0_rep0.csv:3"), "{}", stderr(&out));
}

#[test]
fn empty_report_directory_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ronbench(&["report", "."], tmp.path());
    assert_eq!(code(&out), 1);
}
