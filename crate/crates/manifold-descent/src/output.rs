//! CSV and JSON writers.
//!
//! Floats are written with 17 significant digits so values round-trip.
//! Missing values are empty CSV cells and `null` in JSON.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use manifold_descent_core::{DiagnosticsReport, MethodSpec, Trajectory};
use serde::Serialize;

use crate::bench::{PersistRow, RunRecord};

pub const SUMMARY_HEADER: [&str; 15] = [
    "label",
    "family",
    "alpha",
    "beta",
    "mu",
    "s",
    "lambda",
    "gamma",
    "delta",
    "seed",
    "settling_time",
    "fitted_rate",
    "terminal_gap",
    "verdicts",
    "wall_ms",
];

pub const PERSIST_HEADER: [&str; 7] = [
    "delta",
    "label",
    "family",
    "runs",
    "diverged",
    "median_distance",
    "max_distance",
];

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn trajectory_header(dim: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..dim).map(|i| format!("x1_{i}")));
    h.extend((0..dim).map(|i| format!("x2_{i}")));
    h.extend(["f", "grad_norm", "psi_norm", "S", "V_basic", "V_exp"].map(String::from));
    h
}

/// Trajectory as CSV, one row per recorded sample. First-order runs have
/// NaN velocity columns.
pub fn trajectory_csv(traj: &Trajectory) -> Result<String> {
    let n = traj.dim();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(trajectory_header(n))?;
    for k in 0..traj.len() {
        let st = &traj.states[k];
        let mut row = Vec::with_capacity(2 * n + 7);
        row.push(fmt_f64(traj.times[k]));
        row.extend(st.x1.iter().map(|v| fmt_f64(*v)));
        if st.is_second_order() {
            row.extend(st.x2.iter().map(|v| fmt_f64(*v)));
        } else {
            row.extend((0..n).map(|_| fmt_f64(f64::NAN)));
        }
        for col in [
            &traj.f_vals,
            &traj.grad_norms,
            &traj.psi_norms,
            &traj.storage_vals,
            &traj.lyap_basic,
            &traj.lyap_exp,
        ] {
            row.push(fmt_f64(col[k]));
        }
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

#[derive(Serialize)]
struct TrajectoryJson<'a> {
    method: &'a MethodSpec,
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
    terminated_by: &'static str,
}

pub fn trajectory_json(traj: &Trajectory) -> Result<String> {
    let n = traj.dim();
    let rows = (0..traj.len())
        .map(|k| {
            let st = &traj.states[k];
            let mut row = vec![traj.times[k]];
            row.extend(&st.x1);
            if st.is_second_order() {
                row.extend(&st.x2);
            } else {
                row.extend(std::iter::repeat_n(f64::NAN, n));
            }
            row.extend([
                traj.f_vals[k],
                traj.grad_norms[k],
                traj.psi_norms[k],
                traj.storage_vals[k],
                traj.lyap_basic[k],
                traj.lyap_exp[k],
            ]);
            row
        })
        .collect();
    let doc = TrajectoryJson {
        method: &traj.method,
        columns: trajectory_header(n),
        rows,
        terminated_by: traj.terminated_by.name(),
    };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

#[derive(Serialize)]
struct ReportJson<'a> {
    method: &'a MethodSpec,
    samples: usize,
    final_time: f64,
    #[serde(flatten)]
    report: &'a DiagnosticsReport,
}

pub fn report_json(traj: &Trajectory, report: &DiagnosticsReport) -> Result<String> {
    let doc = ReportJson {
        method: &traj.method,
        samples: traj.len(),
        final_time: traj.final_time(),
        report,
    };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

pub fn summary_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER)?;
    for r in records {
        w.write_record([
            r.label.clone(),
            r.family.name().to_string(),
            fmt_opt(r.alpha),
            fmt_opt(r.beta),
            fmt_opt(r.mu),
            fmt_opt(r.s),
            fmt_opt(r.lambda),
            fmt_opt(r.gamma),
            fmt_f64(r.delta),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            fmt_f64(r.settling_time),
            fmt_opt(r.fitted_rate),
            fmt_f64(r.terminal_gap),
            r.verdicts.clone(),
            fmt_opt(r.wall_ms),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn summary_json(records: &[RunRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(records)? + "\n")
}

pub fn persist_csv(rows: &[PersistRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(PERSIST_HEADER)?;
    for r in rows {
        w.write_record([
            fmt_f64(r.delta),
            r.label.clone(),
            r.family.name().to_string(),
            r.runs.to_string(),
            r.diverged.to_string(),
            fmt_f64(r.median_distance),
            fmt_f64(r.max_distance),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn persist_json(rows: &[PersistRow]) -> Result<String> {
    Ok(serde_json::to_string_pretty(rows)? + "\n")
}

/// Writes `(file name, contents)` pairs into `dir`, creating it.
pub fn write_all(dir: &Path, files: &[(String, String)]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, body) in files {
        let path = dir.join(name);
        let mut f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        f.write_all(body.as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
