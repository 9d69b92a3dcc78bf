//! File formats: CSV for time series and sweeps, JSON for reports and the
//! manifest. Floats in CSV use 17 significant digits, which round-trips
//! every `f64`; JSON uses serde_json's shortest round-trip form.

use std::path::{Path, PathBuf};

use qec_core::{BlochTrajectory, ControlStrategy, LearnResult, ParetoPoint, TimeGrid};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("writing to memory cannot fail")
}

/// `t,u_1,...,u_M`, one row per slice, `t` at the slice's left endpoint.
pub fn export_controls(u: &ControlStrategy, grid: &TimeGrid) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((1..=u.channels()).map(|m| format!("u_{m}")));
    w.write_record(&header).expect("in-memory write");
    for q in 0..u.slices() {
        let mut row = vec![num(grid.start(q))];
        row.extend(u.column(q).into_iter().map(num));
        w.write_record(&row).expect("in-memory write");
    }
    finish(w)
}

/// Parses a control CSV back into slice times and the control.
pub fn read_control_csv(text: &str) -> Result<(Vec<f64>, ControlStrategy), String> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    let channels = header.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=channels).map(|m| format!("u_{m}")))
        .collect();
    if channels == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(format!("header must be `{}`", expected.join(",")));
    }
    let mut times = Vec::new();
    let mut columns = vec![Vec::new(); channels];
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| format!("row {}: `{s}`: {e}", i + 1))
        };
        times.push(parse(&rec[0])?);
        for (m, col) in columns.iter_mut().enumerate() {
            col.push(parse(&rec[m + 1])?);
        }
    }
    if times.is_empty() {
        return Err("no data rows".into());
    }
    let u = ControlStrategy::from_channels(&columns).map_err(|e| e.to_string())?;
    Ok((times, u))
}

/// `k,J,J_<label>...` for every recorded iterate.
pub fn export_history(result: &LearnResult) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["k".to_string(), "J".to_string()];
    header.extend(result.classes.iter().map(|c| format!("J_{}", c.as_str())));
    w.write_record(&header).expect("in-memory write");
    for (k, j) in result.objective_history.iter().enumerate() {
        let mut row = vec![k.to_string(), num(*j)];
        row.extend(result.per_class_history.iter().map(|h| num(h[k])));
        w.write_record(&row).expect("in-memory write");
    }
    finish(w)
}

/// Long format: one row per member and slice boundary.
pub fn export_bloch(trajectories: &[BlochTrajectory]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["member", "class", "eps0", "epsu", "t", "x", "y", "z"])
        .expect("in-memory write");
    for (i, tr) in trajectories.iter().enumerate() {
        for (t, [x, y, z]) in tr.times.iter().zip(&tr.points) {
            w.write_record([
                i.to_string(),
                tr.member.label.as_str().to_string(),
                num(tr.member.eps0),
                num(tr.member.epsu),
                num(*t),
                num(*x),
                num(*y),
                num(*z),
            ])
            .expect("in-memory write");
        }
    }
    finish(w)
}

/// One row per sweep point; failed points leave accuracy and iterations empty.
pub fn export_sweep(points: &[ParetoPoint]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["disp", "diff", "accuracy", "iterations", "converged", "error"])
        .expect("in-memory write");
    for p in points {
        w.write_record([
            num(p.disp),
            num(p.diff),
            p.accuracy.map(num).unwrap_or_default(),
            p.iterations.map(|n| n.to_string()).unwrap_or_default(),
            p.converged.to_string(),
            p.error.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// A file produced by a run, held in memory until the run succeeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn of(artifacts: &[Artifact]) -> Self {
        Self {
            files: artifacts
                .iter()
                .map(|a| ManifestEntry {
                    path: a.name.clone(),
                    bytes: a.bytes.len(),
                    sha256: sha256_hex(&a.bytes),
                })
                .collect(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes every artifact and then the manifest. Returns the written paths,
/// manifest last.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::with_capacity(artifacts.len() + 1);
    for a in artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes).map_err(io_err(&path))?;
        written.push(path);
    }
    let manifest = serde_json::to_vec_pretty(&Manifest::of(artifacts)).expect("manifest serializes");
    let path = dir.join(MANIFEST);
    std::fs::write(&path, manifest).map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_csv_shape() {
        let grid = TimeGrid::new(5.0, 500).unwrap();
        let u = ControlStrategy::sine(2, &grid);
        let text = String::from_utf8(export_controls(&u, &grid)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,u_1,u_2");
        assert_eq!(lines.len(), 501);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 3));
        assert!(lines[1].starts_with("0.0000000000000000e0,"));
    }

    #[test]
    fn control_csv_round_trips_bitwise() {
        let grid = TimeGrid::new(3.7, 37).unwrap();
        let values: Vec<f64> = (0..74)
            .map(|i| (i as f64 * 0.731).sin() * 1e3 / (i as f64 + 0.3))
            .collect();
        let u = ControlStrategy::new(2, 37, values).unwrap();
        let text = String::from_utf8(export_controls(&u, &grid)).unwrap();
        let (times, back) = read_control_csv(&text).unwrap();
        assert_eq!(back, u);
        for (q, t) in times.iter().enumerate() {
            assert_eq!(t.to_bits(), grid.start(q).to_bits());
        }
    }

    #[test]
    fn control_csv_rejects_bad_header() {
        assert!(read_control_csv("t,u_2\n0,1\n").is_err());
        assert!(read_control_csv("t\n0\n").is_err());
        assert!(read_control_csv("t,u_1\n").is_err());
    }

    #[test]
    fn sweep_csv_leaves_failed_points_blank() {
        let p = ParetoPoint {
            disp: 0.1,
            diff: 0.2,
            accuracy: None,
            iterations: None,
            converged: false,
            error: Some("boom".into()),
        };
        let text = String::from_utf8(export_sweep(&[p])).unwrap();
        assert_eq!(text.lines().nth(1).unwrap().split(',').nth(2), Some(""));
    }
}
