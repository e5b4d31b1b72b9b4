//! CSV and JSON emission. Every file is written to a temporary sibling and
//! renamed into place.

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use viforge::{IterationRecord, Termination};

pub const TRAJECTORY_HEADER: [&str; 10] = [
    "t", "k", "mu", "gap", "rel_err", "feas", "nat_res", "sigma", "eps_surr", "elapsed_ms",
];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn csv_error(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

pub fn trajectory_csv(records: &[IterationRecord], timing: bool) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRAJECTORY_HEADER).map_err(csv_error)?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            r.k.to_string(),
            fmt_float(r.mu),
            fmt_opt(r.gap),
            fmt_opt(r.rel_err),
            fmt_float(r.feas),
            fmt_opt(r.nat_res),
            fmt_float(r.sigma),
            fmt_float(r.eps_surr),
            fmt_float(if timing { r.elapsed_ms } else { 0.0 }),
        ])
        .map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub seed: u64,
    pub termination: Termination,
    pub iterations: usize,
    pub target_rel_err: Option<f64>,
    pub iterations_to_target: Option<usize>,
    pub final_record: Option<IterationRecord>,
    pub final_x: Vec<f64>,
    pub wall_ms: f64,
    pub trajectory: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub problem: String,
    pub dim: usize,
    pub runs: Vec<RunSummary>,
}

pub fn summary_json(s: &Summary) -> io::Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(s).map_err(io::Error::other)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// One aggregated sweep row per (point, method).
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub point: usize,
    pub seed: u64,
    pub assignment: Vec<String>,
    pub method: String,
    pub budget: Option<usize>,
    pub target_rel_err: Option<f64>,
    pub outcome: Result<RunSummary, String>,
}

pub fn sweep_csv(paths: &[String], rows: &[SweepRow], timing: bool) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = vec!["point".into(), "seed".into()];
    header.extend(paths.iter().cloned());
    header.extend(
        [
            "method",
            "status",
            "termination",
            "iterations",
            "iterations_to_target",
            "target_rel_err",
            "budget",
            "cpu_ms",
            "final_rel_err",
            "final_gap",
            "final_feas",
            "final_nat_res",
            "error",
        ]
        .map(String::from),
    );
    w.write_record(&header).map_err(csv_error)?;
    for row in rows {
        let mut rec: Vec<String> = vec![row.point.to_string(), row.seed.to_string()];
        rec.extend(row.assignment.iter().cloned());
        rec.push(row.method.clone());
        let target = fmt_opt(row.target_rel_err);
        let budget = row.budget.map(|b| b.to_string()).unwrap_or_default();
        match &row.outcome {
            Ok(s) => {
                let last = s.final_record.as_ref();
                rec.extend([
                    "ok".to_string(),
                    termination_name(s.termination).to_string(),
                    s.iterations.to_string(),
                    s.iterations_to_target.map(|i| i.to_string()).unwrap_or_default(),
                    target,
                    budget,
                    fmt_float(if timing { s.wall_ms } else { 0.0 }),
                    fmt_opt(last.and_then(|r| r.rel_err)),
                    fmt_opt(last.and_then(|r| r.gap)),
                    fmt_opt(last.map(|r| r.feas)),
                    fmt_opt(last.and_then(|r| r.nat_res)),
                    String::new(),
                ]);
            }
            Err(e) => {
                rec.extend(["failed".to_string(), String::new(), String::new(), String::new(), target, budget]);
                rec.extend(std::iter::repeat_n(String::new(), 5));
                rec.push(e.clone());
            }
        }
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

pub fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Completed => "completed",
        Termination::Tolerance => "tolerance",
        Termination::Budget => "budget",
        Termination::Diverged => "diverged",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(k: usize) -> IterationRecord {
        IterationRecord {
            t: 0,
            k,
            mu: 0.1,
            gap: Some(1.0 / 3.0),
            rel_err: None,
            feas: 2e-300,
            nat_res: Some(0.0),
            sigma: f64::MIN_POSITIVE,
            eps_surr: 123456.789,
            lyapunov: 0.0,
            elapsed_ms: 1.5,
        }
    }

    #[test]
    fn floats_round_trip_through_text() {
        for v in [0.1, 1.0 / 3.0, 2e-300, f64::MAX, -5e-324, 123456.789] {
            let s = fmt_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
            let digits = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(digits.len(), 17, "{s}");
        }
    }

    #[test]
    fn trajectory_header_and_missing_values() {
        let text = String::from_utf8(trajectory_csv(&[record(0), record(1)], false).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,k,mu,gap,rel_err,feas,nat_res,sigma,eps_surr,elapsed_ms");
        assert_eq!(lines.len(), 3);
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields[4], "");
        assert_eq!(fields[9], fmt_float(0.0));
    }

    #[test]
    fn summary_round_trips() {
        let s = Summary {
            problem: "2d-bg".into(),
            dim: 2,
            runs: vec![RunSummary {
                method: "acvi".into(),
                seed: 7,
                termination: Termination::Tolerance,
                iterations: 2,
                target_rel_err: Some(0.02),
                iterations_to_target: Some(2),
                final_record: Some(record(1)),
                final_x: vec![0.1, 1.0 / 3.0, -2e-300],
                wall_ms: 0.123456789,
                trajectory: "acvi.csv".into(),
            }],
        };
        let bytes = summary_json(&s).unwrap();
        let back: Summary = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.txt");
        atomic_write(&path, b"one").unwrap();
        atomic_write(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
