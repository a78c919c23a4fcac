use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::matrix_io::write_matrix;
use crate::error::{CdlError, Result};
use crate::evaluation::EvalReport;
use crate::model::TrainingTrace;
use crate::Matrix;

pub const REPORT_FILE: &str = "report.json";
pub const TRACE_FILE: &str = "trace.csv";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// Loss trace as CSV. Row 0 holds the loss after initialization.
pub fn render_trace_csv(trace: &TrainingTrace) -> String {
    let mut out = String::from("iteration,total,seen,unseen,prototype,step1,step2,step3,step4,step5,step6\n");
    let init = trace.initial;
    let _ = writeln!(
        out,
        "0,{:?},{:?},{:?},{:?},,,,,,",
        init.total, init.seen, init.unseen, init.prototype
    );
    for r in &trace.iterations {
        let steps: Vec<String> = r.step_totals.iter().map(|s| opt(*s)).collect();
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{}",
            r.iteration,
            r.loss.total,
            r.loss.seen,
            r.loss.unseen,
            r.loss.prototype,
            steps.join(",")
        );
    }
    out
}

pub fn write_trace_csv(trace: &TrainingTrace, path: &Path) -> Result<()> {
    fs::write(path, render_trace_csv(trace)).map_err(|e| CdlError::io(path, e))
}

/// Writes `report.json`, `trace.csv` and any requested matrices (as text
/// matrix files under `matrices/`) into `dir`.
pub fn export_report(
    report: &EvalReport,
    trace: &TrainingTrace,
    dir: &Path,
    matrices: &[(&str, &Matrix)],
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CdlError::io(dir, e))?;
    let path = dir.join(REPORT_FILE);
    let mut json = serde_json::to_string_pretty(report).map_err(|e| CdlError::Json {
        path: path.clone(),
        source: e,
    })?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| CdlError::io(&path, e))?;
    write_trace_csv(trace, &dir.join(TRACE_FILE))?;
    if !matrices.is_empty() {
        let mdir = dir.join("matrices");
        fs::create_dir_all(&mdir).map_err(|e| CdlError::io(&mdir, e))?;
        for (name, m) in matrices {
            write_matrix(&mdir.join(format!("{name}.txt")), m)?;
        }
    }
    Ok(())
}
