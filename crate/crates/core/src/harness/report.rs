//! Tables of iterations and flops to each tolerance decade, built from a
//! directory of trace files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::runner::Envelope;
use super::trace::{read_trace_csv, TraceRow};
use crate::{Error, Result};

/// Tolerances `1e0, 1e-1, …, 1e-12`.
pub fn tolerance_decades() -> Vec<f64> {
    (0..=12).map(|k| 10f64.powi(-k)).collect()
}

#[derive(Debug, Clone)]
pub struct LoadedTrace {
    pub path: PathBuf,
    pub solver: String,
    pub run: String,
    /// `grad_norm` or `ls_error` (the `f` column).
    pub metric: String,
    pub rows: Vec<TraceRow>,
}

impl LoadedTrace {
    pub fn error(&self, row: &TraceRow) -> f64 {
        if self.metric == "ls_error" {
            row.f
        } else {
            row.grad_norm
        }
    }

    fn first_below(&self, tol: f64) -> Option<&TraceRow> {
        self.rows.iter().find(|r| self.error(r) <= tol)
    }
}

#[derive(Debug, Clone)]
pub struct ReportRow {
    pub solver: String,
    pub runs: usize,
    /// Per decade: median iterations and flops over the runs that reached it.
    pub decades: Vec<(f64, Option<f64>, Option<f64>)>,
    pub iterations_to_tol: Option<Envelope>,
    pub flops_to_tol: Option<Envelope>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub tol: f64,
    pub rows: Vec<ReportRow>,
    pub traces: Vec<LoadedTrace>,
}

fn trace_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let nested = dir.join("traces");
    let root = if nested.is_dir() { nested } else { dir.to_path_buf() };
    let entries = fs::read_dir(&root).map_err(|e| Error::io(&root, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(&root, e))?.path();
        let is_csv = p.extension().is_some_and(|e| e == "csv");
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if is_csv && stem != "plot" && !stem.starts_with("report") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn load(path: &Path) -> Result<LoadedTrace> {
    let rows = read_trace_csv(path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let (mut solver, mut metric) = match stem.find("_seed") {
        Some(i) => (stem[..i].to_string(), "grad_norm".to_string()),
        None => (stem.clone(), "grad_norm".to_string()),
    };
    let sidecar = path.with_extension("json");
    if sidecar.is_file() {
        let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        if let Some(s) = v.get("solver").and_then(|s| s.as_str()) {
            solver = s.to_string();
        }
        if let Some(m) = v.get("metric").and_then(|s| s.as_str()) {
            metric = m.to_string();
        }
    }
    let run = stem.get(solver.len()..).unwrap_or("").trim_start_matches('_').to_string();
    Ok(LoadedTrace {
        path: path.to_path_buf(),
        solver,
        run,
        metric,
        rows,
    })
}

/// Loads every trace under `dir` (or `dir/traces`) and tabulates it.
/// `plot.csv` and files named `report*.csv` are skipped.
/// Rows are sorted by median flops-to-`tol`; solvers that never reach it
/// come last.
pub fn build_report(dir: &Path, tol: f64) -> Result<Report> {
    let files = trace_files(dir)?;
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no trace CSV files found in {}",
            dir.display()
        )));
    }
    let traces: Vec<LoadedTrace> = files.iter().map(|p| load(p)).collect::<Result<_>>()?;
    let mut by_solver: BTreeMap<String, Vec<&LoadedTrace>> = BTreeMap::new();
    for t in &traces {
        by_solver.entry(t.solver.clone()).or_default().push(t);
    }
    let mut rows = Vec::new();
    for (solver, runs) in by_solver {
        let at = |tol: f64| -> (Vec<f64>, Vec<f64>) {
            let hits: Vec<&TraceRow> = runs.iter().filter_map(|t| t.first_below(tol)).collect();
            (
                hits.iter().map(|r| r.iter as f64).collect(),
                hits.iter().map(|r| r.flops as f64).collect(),
            )
        };
        let decades = tolerance_decades()
            .into_iter()
            .map(|d| {
                let (it, fl) = at(d);
                (d, Envelope::of(&it).map(|e| e.median), Envelope::of(&fl).map(|e| e.median))
            })
            .collect();
        let (it, fl) = at(tol);
        rows.push(ReportRow {
            solver,
            runs: runs.len(),
            decades,
            iterations_to_tol: Envelope::of(&it),
            flops_to_tol: Envelope::of(&fl),
        });
    }
    rows.sort_by(|a, b| {
        let key = |r: &ReportRow| r.flops_to_tol.map(|e| e.median);
        match (key(a), key(b)) {
            (Some(x), Some(y)) => x.total_cmp(&y).then_with(|| a.solver.cmp(&b.solver)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.solver.cmp(&b.solver),
        }
    });
    Ok(Report { tol, rows, traces })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4e}"))
}

impl Report {
    /// Human-readable table: one line per solver with iterations and flops
    /// to `tol`, then flops to each decade reached by some solver.
    pub fn render_table(&self) -> String {
        let reached: Vec<usize> = (0..tolerance_decades().len())
            .filter(|&k| self.rows.iter().any(|r| r.decades[k].2.is_some()))
            .collect();
        let mut out = format!(
            "{:<24} {:>5} {:>12} {:>12}",
            "solver",
            "runs",
            format!("iters@{:.0e}", self.tol),
            format!("flops@{:.0e}", self.tol)
        );
        for &k in &reached {
            out.push_str(&format!(" {:>11}", format!("flops@{:.0e}", tolerance_decades()[k])));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{:<24} {:>5} {:>12} {:>12}",
                r.solver,
                r.runs,
                r.iterations_to_tol.map_or_else(|| "-".into(), |e| format!("{}", e.median)),
                fmt_opt(r.flops_to_tol.map(|e| e.median)),
            ));
            for &k in &reached {
                out.push_str(&format!(" {:>11}", fmt_opt(r.decades[k].2)));
            }
            out.push('\n');
        }
        out
    }

    /// `solver,tol,runs_reached,iterations,flops` for every decade.
    pub fn table_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["solver", "tol", "iterations", "flops"])?;
        for r in &self.rows {
            for (tol, it, fl) in &r.decades {
                w.serialize((&r.solver, tol, it, fl))?;
            }
        }
        w.into_inner()
            .map_err(|e| Error::Config(format!("flushing report buffer: {e}")))
    }

    /// Long format `solver,run,axis,x,y` of every loaded trace.
    pub fn plot_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["solver", "run", "axis", "x", "y"])?;
        for t in &self.traces {
            for row in &t.rows {
                let y = t.error(row);
                w.serialize((&t.solver, &t.run, "iter", row.iter as f64, y))?;
                w.serialize((&t.solver, &t.run, "flops", row.flops as f64, y))?;
            }
        }
        w.into_inner()
            .map_err(|e| Error::Config(format!("flushing plot buffer: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::trace::write_trace_csv;

    fn rows(errs: &[f64], flops_per: u64) -> Vec<TraceRow> {
        errs.iter()
            .enumerate()
            .map(|(i, &e)| TraceRow {
                iter: i,
                f: e,
                grad_norm: e,
                lambda_sqrt: None,
                rho: None,
                step_norm: None,
                flops: (i as u64 + 1) * flops_per,
                wall_time_s: 0.0,
            })
            .collect()
    }

    #[test]
    fn single_trace_gives_one_row() {
        let dir = tempfile::tempdir().unwrap();
        write_trace_csv(&dir.path().join("a_seed1_rep0.csv"), &rows(&[1.0, 1e-3, 1e-9], 10)).unwrap();
        let r = build_report(dir.path(), 1e-8).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].solver, "a");
        assert_eq!(r.rows[0].flops_to_tol.unwrap().median, 30.0);
        assert!(r.render_table().lines().count() == 2);
    }

    #[test]
    fn rows_are_sorted_by_flops_to_tol() {
        let dir = tempfile::tempdir().unwrap();
        write_trace_csv(&dir.path().join("slow_seed1_rep0.csv"), &rows(&[1.0, 1e-9], 100)).unwrap();
        write_trace_csv(&dir.path().join("fast_seed1_rep0.csv"), &rows(&[1.0, 1e-9], 5)).unwrap();
        write_trace_csv(&dir.path().join("never_seed1_rep0.csv"), &rows(&[1.0, 0.5], 1)).unwrap();
        let r = build_report(dir.path(), 1e-8).unwrap();
        let names: Vec<&str> = r.rows.iter().map(|x| x.solver.as_str()).collect();
        assert_eq!(names, ["fast", "slow", "never"]);
    }

    #[test]
    fn empty_and_malformed_inputs_fail() {
        let dir = tempfile::tempdir().unwrap();
        assert!(build_report(dir.path(), 1e-8).is_err());
        fs::write(
            dir.path().join("bad_seed0_rep0.csv"),
            "iter,f,grad_norm,lambda_sqrt,rho,step_norm,flops,wall_time_s\n0,1,1,,,,1,0\n1,x,1,,,,2,0\n",
        )
        .unwrap();
        let e = build_report(dir.path(), 1e-8).unwrap_err();
        assert!(e.to_string().contains("row 2"), "{e}");
    }
}
