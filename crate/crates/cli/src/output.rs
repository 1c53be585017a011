//! Output-file handling: atomic writes and the CSV formats.
//!
//! Floats are written with Rust's shortest round-trip formatting so that
//! re-ingesting and re-emitting a column is byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use dmpnet::learning::Demonstration;
use dmpnet::simulate::Trajectory;

use crate::error::{CliError, Result};

/// Writes a file atomically: temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|source| CliError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    tmp.write_all(contents.as_bytes())
        .map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
    tmp.persist(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e.error,
    })?;
    Ok(())
}

/// Trajectory CSV: header `t,state_0,...,state_{n-1}`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let dim = traj.dim();
    let mut out = String::from("t");
    for i in 0..dim {
        let _ = write!(out, ",state_{i}");
    }
    out.push('\n');
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let _ = write!(out, "{t}");
        for v in s.iter() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Event-log CSV: header `t,event`.
pub fn events_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,event\n");
    for e in &traj.events {
        let _ = writeln!(out, "{},{}", e.time, e.label);
    }
    out
}

/// Demonstration CSV: header `t,y,ydot[,yddot]`.
pub fn demonstration_csv(demo: &Demonstration) -> String {
    let with_acc = demo.yddot.is_some();
    let mut out = String::from(if with_acc { "t,y,ydot,yddot\n" } else { "t,y,ydot\n" });
    for i in 0..demo.times.len() {
        let _ = write!(out, "{},{},{}", demo.times[i], demo.y[i], demo.ydot[i]);
        if let Some(ydd) = &demo.yddot {
            let _ = write!(out, ",{}", ydd[i]);
        }
        out.push('\n');
    }
    out
}

/// Laplacian spectrum CSV: header `index,eigenvalue` (non-increasing).
pub fn spectrum_csv(eigenvalues: &[f64]) -> String {
    let mut out = String::from("index,eigenvalue\n");
    for (i, v) in eigenvalues.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, v);
    }
    out
}

/// Eigen-report CSV for metric-synthesis builds.
pub fn eigen_report_csv(rows: &[(usize, f64, f64, f64, f64)]) -> String {
    let mut out = String::from("point,lambda1,lambda2,ms_residual,structure_residual\n");
    for (i, l1, l2, res, sr) in rows {
        let _ = writeln!(out, "{i},{l1},{l2},{res},{sr}");
    }
    out
}

/// Reads a demonstration CSV (`t,y,ydot[,yddot]`).
pub fn read_demonstration_csv(
    path: &Path,
    params: dmpnet::learning::DmpParams,
) -> Result<Demonstration> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
        .clone();
    let has_acc = headers.len() >= 4;
    if headers.len() < 3 {
        return Err(CliError::Config {
            path: path.display().to_string(),
            message: "expected header t,y,ydot[,yddot]".into(),
        });
    }
    let mut times = Vec::new();
    let mut y = Vec::new();
    let mut ydot = Vec::new();
    let mut yddot = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Config {
            path: path.display().to_string(),
            message: format!("record {}: {e}", line + 2),
        })?;
        let field = |idx: usize| -> Result<f64> {
            record
                .get(idx)
                .ok_or_else(|| CliError::Config {
                    path: path.display().to_string(),
                    message: format!("record {}: missing field {idx}", line + 2),
                })?
                .trim()
                .parse::<f64>()
                .map_err(|e| CliError::Config {
                    path: path.display().to_string(),
                    message: format!("record {}: {e}", line + 2),
                })
        };
        times.push(field(0)?);
        y.push(field(1)?);
        ydot.push(field(2)?);
        if has_acc {
            yddot.push(field(3)?);
        }
    }
    Ok(Demonstration::new(
        times,
        y,
        ydot,
        if has_acc { Some(yddot) } else { None },
        params,
    )?)
}

/// Per-scenario output directory layout.
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(out_dir: &Path, scenario_name: &str) -> Self {
        Self {
            root: out_dir.join(scenario_name),
        }
    }

    pub fn trajectory(&self) -> PathBuf {
        self.root.join("trajectory.csv")
    }

    pub fn events(&self) -> PathBuf {
        self.root.join("events.csv")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn spectrum(&self) -> PathBuf {
        self.root.join("laplacian_spectrum.csv")
    }

    pub fn certificate(&self, label: &str, index: usize) -> PathBuf {
        self.root
            .join("certificates")
            .join(format!("{index:02}_{label}.json"))
    }

    pub fn eigen_report(&self, index: usize) -> PathBuf {
        self.root
            .join("certificates")
            .join(format!("{index:02}_metric_synthesis.csv"))
    }

    pub fn plot(&self, name: &str) -> PathBuf {
        self.root.join("plots").join(format!("{name}.svg"))
    }

    pub fn weights(&self) -> PathBuf {
        self.root.join("weights.json")
    }
}
