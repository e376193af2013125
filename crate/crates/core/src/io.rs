//! Trajectory files: one CSV per run (nodes as rows, snapshots as columns) plus a JSON sidecar.
//!
//! The CSV opens with a `#` comment carrying the crate version and scenario fingerprint.
//! Floats are written in shortest round-trip form, so reading back is exact.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::background::FlowMode;
use crate::error::{Error, Result};
use crate::flow::{RunStats, Snapshot, SolverConfig, Trajectory};
use crate::grid::{GridSpec, RadialGrid};
use crate::oracle::KeSolution;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything in a trajectory except the node values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub version: String,
    pub mode: FlowMode,
    pub eps: f64,
    pub n: usize,
    pub lambda: f64,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub fingerprint: String,
    pub times: Vec<f64>,
    pub stats: RunStats,
    pub csv: String,
    pub limit: Option<LimitSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSummary {
    pub residual_norm: f64,
    pub newton_iterations: usize,
}

/// File stem of the run at `eps`, e.g. `normalized_eps0.0125`.
pub fn run_stem(mode: FlowMode, eps: f64) -> String {
    format!("{}_eps{eps:?}", mode.as_str())
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`, returning the CSV path.
pub fn write_trajectory(
    dir: &Path,
    stem: &str,
    traj: &Trajectory,
    grid: &RadialGrid,
    limit: Option<&KeSolution>,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut file = BufWriter::new(File::create(&csv_path)?);
    writeln!(file, "# kflow {VERSION} fingerprint={} mode={} eps={:?}", traj.fingerprint, traj.mode, traj.eps)?;
    {
        let mut w = csv::Writer::from_writer(&mut file);
        let mut header = vec!["y".to_string(), "rho".to_string()];
        header.extend(traj.snapshots.iter().map(|s| format!("u@t={:?}", s.t)));
        header.extend(traj.snapshots.iter().map(|s| format!("udot@t={:?}", s.t)));
        if limit.is_some() {
            header.push("u@t=inf".into());
        }
        w.write_record(&header)?;
        for i in 0..grid.len() {
            let mut row = vec![format!("{:e}", grid.y()[i]), format!("{:e}", grid.rho()[i])];
            row.extend(traj.snapshots.iter().map(|s| format!("{:e}", s.u[i])));
            row.extend(traj.snapshots.iter().map(|s| format!("{:e}", s.udot[i])));
            if let Some(l) = limit {
                row.push(format!("{:e}", l.u_inf[i]));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    file.flush()?;

    let sidecar = Sidecar {
        version: VERSION.into(),
        mode: traj.mode,
        eps: traj.eps,
        n: traj.n,
        lambda: traj.lambda,
        grid: traj.grid.clone(),
        solver: traj.solver,
        fingerprint: traj.fingerprint.clone(),
        times: traj.times(),
        stats: traj.stats.clone(),
        csv: format!("{stem}.csv"),
        limit: limit.map(|l| LimitSummary { residual_norm: l.residual_norm, newton_iterations: l.newton_iterations }),
    };
    std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(csv_path)
}

/// Reads a run back from its sidecar; also returns the limit column if present.
pub fn read_trajectory(sidecar_path: &Path) -> Result<(Trajectory, Option<Vec<f64>>)> {
    let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
    let dir = sidecar_path.parent().unwrap_or(Path::new("."));
    let text = std::fs::read_to_string(dir.join(&sidecar.csv))?;
    let first = text.lines().next().unwrap_or("");
    let tag = format!("fingerprint={}", sidecar.fingerprint);
    if !first.starts_with("# kflow") || !first.contains(&tag) {
        return Err(Error::Format(format!("{}: header does not match sidecar fingerprint", sidecar.csv)));
    }
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let k = sidecar.times.len();
    let header = reader.headers()?.clone();
    let has_limit = header.iter().next_back() == Some("u@t=inf");
    if header.len() != 2 + 2 * k + usize::from(has_limit) {
        return Err(Error::Format(format!("{}: expected {} snapshot columns", sidecar.csv, k)));
    }
    let mut u = vec![Vec::new(); k];
    let mut udot = vec![Vec::new(); k];
    let mut limit = Vec::new();
    for record in reader.records() {
        let record = record?;
        let parse = |j: usize| -> Result<f64> {
            record[j].parse::<f64>().map_err(|_| Error::Format(format!("bad number `{}`", &record[j])))
        };
        for j in 0..k {
            u[j].push(parse(2 + j)?);
            udot[j].push(parse(2 + k + j)?);
        }
        if has_limit {
            limit.push(parse(2 + 2 * k)?);
        }
    }
    if u.first().is_some_and(|c| c.len() != sidecar.grid.m) {
        return Err(Error::Format(format!("{}: expected {} rows", sidecar.csv, sidecar.grid.m)));
    }
    let snapshots =
        sidecar.times.iter().zip(u.into_iter().zip(udot)).map(|(&t, (u, udot))| Snapshot { t, u, udot }).collect();
    let traj = Trajectory {
        mode: sidecar.mode,
        eps: sidecar.eps,
        n: sidecar.n,
        lambda: sidecar.lambda,
        grid: sidecar.grid,
        solver: sidecar.solver,
        fingerprint: sidecar.fingerprint,
        snapshots,
        stats: sidecar.stats,
    };
    Ok((traj, has_limit.then_some(limit)))
}

/// Sidecar files in `dir`, sorted by name.
pub fn list_sidecars(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "json")
                && p.file_stem().is_some_and(|s| s.to_string_lossy().contains("_eps"))
        })
        .collect();
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{cheng_yau_f, metric_preset, BackgroundFamily, DefiningFunction, Preset};
    use crate::flow::FlowProblem;
    use std::sync::Arc;

    fn sample() -> (Trajectory, Arc<RadialGrid>) {
        let grid = Arc::new(RadialGrid::new(1, 1.0, 6.0, 51).unwrap());
        let df = DefiningFunction::from_preset(Preset::Ball { radius: 1.0 }, grid.clone()).unwrap();
        let phi0 = metric_preset(Preset::Euclidean { c: 0.5 }, &df).unwrap();
        let family = BackgroundFamily::domain(FlowMode::Normalized, &df, phi0).unwrap();
        let problem = FlowProblem::new(family, cheng_yau_f(&df, 1).unwrap()).unwrap();
        let cfg = SolverConfig { horizon: 0.1, snapshots_per_unit: 30.0, ..SolverConfig::default() };
        let mut traj = problem.run(0.1, &cfg, &[]).unwrap();
        traj.fingerprint = "abc123".into();
        (traj, grid)
    }

    #[test]
    fn round_trip_is_exact() {
        let (traj, grid) = sample();
        let dir = tempfile::tempdir().unwrap();
        let stem = run_stem(traj.mode, traj.eps);
        let limit = KeSolution {
            u_inf: grid.rho().iter().map(|r| r * 0.25).collect(),
            residual_norm: 1e-12,
            newton_iterations: 3,
            residual_history: vec![1.0, 1e-12],
        };
        write_trajectory(dir.path(), &stem, &traj, &grid, Some(&limit)).unwrap();
        let (back, lim) = read_trajectory(&dir.path().join(format!("{stem}.json"))).unwrap();
        assert_eq!(back, traj);
        assert_eq!(lim.unwrap(), limit.u_inf);
        assert_eq!(list_sidecars(dir.path()).unwrap().len(), 1);
    }

    #[test]
    fn header_carries_fingerprint() {
        let (traj, grid) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = write_trajectory(dir.path(), "run_eps0.1", &traj, &grid, None).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.starts_with(&format!("# kflow {VERSION}")));
        assert!(first.contains("fingerprint=abc123"));
        assert!(text.lines().nth(1).unwrap().starts_with("y,rho,u@t=0.0,"));
    }

    #[test]
    fn tampered_header_is_rejected() {
        let (traj, grid) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = write_trajectory(dir.path(), "run_eps0.1", &traj, &grid, None).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replacen("abc123", "zzz", 1);
        std::fs::write(&path, text).unwrap();
        assert!(matches!(read_trajectory(&dir.path().join("run_eps0.1.json")), Err(Error::Format(_))));
    }
}
