//! CSV traces.
//!
//! `steps.csv`: `k, t_seconds, topology_index, x1..x{n_x}, u1..u{n_u},
//! xhat1..xhat{n_x}, stage_cost`, one row per recorded step.
//!
//! `switches.csv`: `k, score_L0..score_L{m-1}, chosen, rho_bar_chosen`, one
//! row per switch instant; scores of decertified topologies are empty.
//!
//! Floats are written in shortest round-trip form, so re-reading a file
//! recovers the recorded values exactly.

use std::path::{Path, PathBuf};

use nalgebra::DVector;

use super::sim::{StepRecord, Trace};
use crate::error::{Error, Result};

pub const STEPS_FILE: &str = "steps.csv";
pub const SWITCHES_FILE: &str = "switches.csv";

pub fn steps_header(nx: usize, nu: usize) -> Vec<String> {
    let mut h = vec!["k".to_string(), "t_seconds".into(), "topology_index".into()];
    h.extend((1..=nx).map(|i| format!("x{i}")));
    h.extend((1..=nu).map(|i| format!("u{i}")));
    h.extend((1..=nx).map(|i| format!("xhat{i}")));
    h.push("stage_cost".into());
    h
}

pub fn switches_header(n_topologies: usize) -> Vec<String> {
    let mut h = vec!["k".to_string()];
    h.extend((0..n_topologies).map(|i| format!("score_L{i}")));
    h.push("chosen".into());
    h.push("rho_bar_chosen".into());
    h
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Store(format!("{other:?}")),
    })
}

/// Writes both CSV files into `dir`, returning their paths.
pub fn export(trace: &Trace, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let steps_path = dir.join(STEPS_FILE);
    let switches_path = dir.join(SWITCHES_FILE);

    let (nx, nu) = trace.steps.first().map_or((0, 0), |s| (s.x.len(), s.u.len()));
    let mut w = writer(&steps_path)?;
    w.write_record(steps_header(nx, nu))?;
    for s in &trace.steps {
        let mut row = vec![s.k.to_string(), (s.k as f64 * trace.dt).to_string(), s.topology.to_string()];
        row.extend(s.x.iter().chain(s.u.iter()).chain(s.x_hat.iter()).map(f64::to_string));
        row.push(s.stage_cost.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(&steps_path, e))?;

    let mut w = writer(&switches_path)?;
    w.write_record(switches_header(trace.n_topologies))?;
    for d in &trace.switches {
        let mut row = vec![d.k.to_string()];
        row.extend(
            (0..trace.n_topologies).map(|i| d.scores.get(&i).map_or(String::new(), |s| s.score.to_string())),
        );
        row.push(d.chosen.to_string());
        row.push(d.chosen_score().map_or(String::new(), |s| s.rho_bar.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(&switches_path, e))?;
    Ok((steps_path, switches_path))
}

/// Reads `steps.csv` back. The broadcast flag is not part of the file and
/// comes back `false`.
pub fn import_steps(path: impl AsRef<Path>, nx: usize, nu: usize) -> Result<Vec<StepRecord>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != steps_header(nx, nu) {
        return Err(Error::Store(format!("{}: unexpected header {header:?}", path.display())));
    }
    let bad = |row: usize, what: &str| Error::Store(format!("{}: row {row}: bad {what}", path.display()));
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> { rec[i].parse().map_err(|_| bad(row, &header[i])) };
        let vec_at = |o: usize, n: usize| -> Result<DVector<f64>> {
            Ok(DVector::from_vec((o..o + n).map(num).collect::<Result<_>>()?))
        };
        out.push(StepRecord {
            k: rec[0].parse().map_err(|_| bad(row, "k"))?,
            topology: rec[2].parse().map_err(|_| bad(row, "topology_index"))?,
            x: vec_at(3, nx)?,
            u: vec_at(3 + nx, nu)?,
            x_hat: vec_at(3 + nx + nu, nx)?,
            stage_cost: num(3 + 2 * nx + nu)?,
            broadcast: false,
        });
    }
    Ok(out)
}
