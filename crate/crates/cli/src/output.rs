use std::fs;
use std::io;
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;
use vem_core::evolution::{HistoryRecord, Snapshot};
use vem_core::Trajectory;

/// 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn columns(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |k| format!("{prefix}{k}"))
}

pub fn write_trajectory(path: &Path, traj: &Trajectory, mu: &[DVector<f64>], lambda: &[DVector<f64>]) -> io::Result<()> {
    let n = traj.x[0].len();
    let m = traj.u[0].len();
    let r = mu.first().map_or(0, |v| v.len());
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(columns("x", n))
        .chain(columns("u", m))
        .chain(columns("mu", r))
        .chain(columns("lambda", n))
        .collect();
    w.write_record(&header)?;
    for (i, t) in traj.grid.times().into_iter().enumerate() {
        let mut row = vec![num(t)];
        row.extend(traj.x[i].iter().map(|v| num(*v)));
        row.extend(traj.u[i].iter().map(|v| num(*v)));
        if let Some(mu) = mu.get(i) {
            row.extend(mu.iter().map(|v| num(*v)));
        }
        match lambda.get(i) {
            Some(l) => row.extend(l.iter().map(|v| num(*v))),
            None => row.extend((0..n).map(|_| "nan".to_string())),
        }
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn write_history(path: &Path, history: &[HistoryRecord]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["tau", "J", "tf", "g_norm", "maxC", "pu_pc_inf", "transversality"])?;
    for h in history {
        w.write_record([h.tau, h.cost, h.tf, h.g_norm, h.max_violation, h.pu_pc_inf, h.transversality].map(num))?;
    }
    w.flush()
}

fn write_states(path: &Path, traj: &Trajectory) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> =
        std::iter::once("t".to_string()).chain(columns("x", traj.x[0].len())).chain(columns("u", traj.u[0].len())).collect();
    w.write_record(&header)?;
    for (i, t) in traj.grid.times().into_iter().enumerate() {
        let mut row = vec![num(t)];
        row.extend(traj.x[i].iter().chain(traj.u[i].iter()).map(|v| num(*v)));
        w.write_record(&row)?;
    }
    w.flush()
}

/// One CSV per snapshot plus `index.csv` mapping files to `τ`.
pub fn write_snapshots(dir: &Path, snapshots: &[Snapshot]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut index = csv::Writer::from_path(dir.join("index.csv"))?;
    index.write_record(["file", "tau"])?;
    for (k, s) in snapshots.iter().enumerate() {
        let name = format!("snapshot_{k:02}.csv");
        write_states(&dir.join(&name), &s.trajectory)?;
        index.write_record([name, num(s.tau)])?;
    }
    index.flush()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    fs::write(path, text + "\n")
}
