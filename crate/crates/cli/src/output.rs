//! Atomic file output and the CSV/JSON schemas.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use tempfile::NamedTempFile;

use asymflow_core::analysis::Trajectory;

/// Version of the JSON summary layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Writes `bytes` to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("cannot write in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// `t, coord_0, …, coord_{n−1}, phi, slope, speed`.
pub fn trajectory_csv(traj: &Trajectory) -> Result<Vec<u8>> {
    let dim = traj.points.first().map_or(0, |x| x.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((0..dim).map(|i| format!("coord_{i}")));
    header.extend(["phi", "slope", "speed"].map(String::from));
    w.write_record(&header)?;
    for i in 0..traj.len() {
        let mut row = vec![traj.times[i]];
        row.extend(traj.points[i].iter());
        row.extend([traj.phi_values[i], traj.slope_values[i], traj.speed_values[i]]);
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    Ok(w.into_inner()?)
}

/// One row of the step-size sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub tau: f64,
    pub sup_error: f64,
    pub energy_residual: f64,
    pub runtime_ms: u64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(["tau", "sup_error", "energy_residual", "runtime_ms"])?;
    }
    Ok(w.into_inner()?)
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}
