//! Output rendering: CSV trajectory and event tables, long-format snapshot
//! dumps, and JSON reports.
//!
//! Floats are written with 16 significant digits so rendered output is a
//! faithful round-trip of the computed doubles. Quantities that are
//! undefined at a row (W on negative density) appear as NaN in CSV and null
//! in JSON.

use serde::Serialize;
use std::io::{self, Write};
use std::path::Path;

use crate::error::Result;
use crate::integrator::Trajectory;
use crate::truncation::LevelEvent;

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub const TRAJECTORY_HEADER: &str = "t,mass_u,l1_u,l2_u,gradv_l2,gradv_h1_running_integral,W,E,min_u,min_v,regime,truncation_level";

pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &Trajectory) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for r in &traj.scalars {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt(r.t),
            fmt(r.mass_u),
            fmt(r.l1_u),
            fmt(r.l2_u),
            fmt(r.gradv_l2),
            fmt(r.gradv_h1_integral),
            fmt(r.lyapunov_w),
            fmt(r.energy_e),
            fmt(r.min_u),
            fmt(r.min_v),
            r.regime.as_str(),
            r.truncation_level,
        )?;
    }
    Ok(())
}

pub const EVENTS_HEADER: &str = "level,tau_star,trigger_kind,tau_bar,reached_T";

pub fn write_events_csv<W: Write>(mut w: W, events: &[LevelEvent]) -> io::Result<()> {
    writeln!(w, "{EVENTS_HEADER}")?;
    for ev in events {
        writeln!(
            w,
            "{},{},{},{},{}",
            ev.level,
            fmt(ev.tau_star),
            ev.trigger.map_or("none", |t| t.as_str()),
            fmt(ev.tau_bar),
            ev.reached_t,
        )?;
    }
    Ok(())
}

/// Long-format field dump: one row per (recording time, node).
pub fn write_snapshots_csv<W: Write>(mut w: W, traj: &Trajectory) -> io::Result<()> {
    writeln!(w, "t,x,u,v")?;
    for (t, state) in traj.snapshot_series() {
        let grid = state.u.grid();
        let u = state.u.values();
        let v = state.v.values();
        for j in 0..u.len() {
            writeln!(w, "{},{},{},{}", fmt(t), fmt(grid.node(j)), fmt(u[j]), fmt(v[j]))?;
        }
    }
    Ok(())
}

fn create(path: &Path) -> Result<std::fs::File> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(std::fs::File::create(path)?)
}

pub fn trajectory_csv_to_path(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut f = io::BufWriter::new(create(path)?);
    write_trajectory_csv(&mut f, traj)?;
    f.flush()?;
    Ok(())
}

pub fn events_csv_to_path(path: &Path, events: &[LevelEvent]) -> Result<()> {
    let mut f = io::BufWriter::new(create(path)?);
    write_events_csv(&mut f, events)?;
    f.flush()?;
    Ok(())
}

pub fn snapshots_csv_to_path(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut f = io::BufWriter::new(create(path)?);
    write_snapshots_csv(&mut f, traj)?;
    f.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline. Non-finite floats render as null.
pub fn json_to_path<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = io::BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

pub fn json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
