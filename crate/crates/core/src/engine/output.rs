//! CSV, JSON and gnuplot outputs.
//!
//! File layout of a run directory:
//! - `slots.csv`: one [`SlotRecord`] per slot and user, header row first.
//! - `trace.csv`: one [`TraceRecord`] per optimizer iteration.
//! - `drift.csv`: one [`DriftRecord`] per slot.
//! - `summary.json`: the episode [`Summary`].
//! - `convergence.dat`, `aois.dat`, `queues.dat` with matching `.gp` scripts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::engine::episode::{DriftRecord, EpisodeResult, SlotRecord, Summary, TraceRecord};
use crate::error::Result;

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

pub const SLOT_HEADER: [&str; 13] = [
    "slot",
    "user",
    "alpha",
    "length",
    "queue",
    "last_update",
    "aois",
    "mismatch",
    "rate_bps_hz",
    "delay_s",
    "g_delivered",
    "power_w",
    "delivered",
];

pub const TRACE_HEADER: [&str; 7] = ["slot", "call", "iteration", "objective", "std_error", "power", "budget_residual"];

pub const DRIFT_HEADER: [&str; 6] = ["slot", "gamma_before", "gamma_after", "bound", "holds", "min_telescoping_slack"];

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(summary)? + "\n")?;
    Ok(())
}

/// Write every CSV, the summary and the plot files into `dir` (created if missing).
pub fn write_run(result: &EpisodeResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(&dir.join("slots.csv"), &result.records, &SLOT_HEADER)?;
    write_csv(&dir.join("trace.csv"), &result.trace, &TRACE_HEADER)?;
    write_csv(&dir.join("drift.csv"), &result.drift, &DRIFT_HEADER)?;
    write_summary(&dir.join("summary.json"), &result.summary)?;
    emit_plots(&result.records, &result.trace, result.config.num_users, dir)
}

/// `iteration objective` of the first optimizer call in the episode.
pub fn convergence_dat(trace: &[TraceRecord]) -> String {
    let mut out = String::from("# iteration objective\n");
    if let Some(first) = trace.first() {
        for r in trace.iter().take_while(|r| r.slot == first.slot && r.call == first.call) {
            let _ = writeln!(out, "{} {}", r.iteration, r.objective);
        }
    }
    out
}

/// `slot total_aois`, the sum over users in user order.
pub fn aois_dat(records: &[SlotRecord]) -> String {
    let mut out = String::from("# slot total_aois\n");
    for group in records.chunk_by(|a, b| a.slot == b.slot) {
        let total: f64 = group.iter().map(|r| r.aois).sum();
        let _ = writeln!(out, "{} {}", group[0].slot, total);
    }
    out
}

/// `slot Q_1 … Q_U`.
pub fn queues_dat(records: &[SlotRecord], users: usize) -> String {
    let mut out = String::from("# slot");
    for i in 1..=users {
        let _ = write!(out, " q{i}");
    }
    out.push('\n');
    for group in records.chunk_by(|a, b| a.slot == b.slot) {
        let _ = write!(out, "{}", group[0].slot);
        for r in group {
            let _ = write!(out, " {}", r.queue);
        }
        out.push('\n');
    }
    out
}

fn script(dat: &str, title: &str, xlabel: &str, ylabel: &str, columns: usize) -> String {
    let mut s = format!(
        "set terminal pngcairo size 800,500\nset output '{stem}.png'\nset title '{title}'\n\
         set xlabel '{xlabel}'\nset ylabel '{ylabel}'\nset key outside\nplot ",
        stem = dat.trim_end_matches(".dat"),
    );
    let series: Vec<String> = (2..=columns.max(2))
        .map(|c| format!("'{dat}' using 1:{c} with lines title columnhead({c})"))
        .collect();
    s.push_str(&series.join(", \\\n     "));
    s.push('\n');
    s
}

/// Gnuplot data and scripts for the convergence, AoIS and queue traces.
pub fn emit_plots(records: &[SlotRecord], trace: &[TraceRecord], users: usize, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("convergence.dat"), convergence_dat(trace))?;
    fs::write(dir.join("aois.dat"), aois_dat(records))?;
    fs::write(dir.join("queues.dat"), queues_dat(records, users))?;
    fs::write(dir.join("convergence.gp"), script("convergence.dat", "Optimizer objective", "iteration", "objective", 2))?;
    fs::write(dir.join("aois.gp"), script("aois.dat", "Total AoIS", "slot", "AoIS", 2))?;
    fs::write(dir.join("queues.gp"), script("queues.dat", "Virtual queues", "slot", "Q", users + 1))?;
    Ok(())
}

/// Rebuild the plot files of a run directory from its CSV outputs into `out`.
pub fn plots_from_csv(run_dir: &Path, out: &Path) -> Result<()> {
    let records: Vec<SlotRecord> = read_csv(&run_dir.join("slots.csv"))?;
    let trace: Vec<TraceRecord> = read_csv(&run_dir.join("trace.csv"))?;
    let users = records.iter().map(|r| r.user + 1).max().unwrap_or(0);
    emit_plots(&records, &trace, users, out)
}

/// Parsed `drift.csv`.
pub fn read_drift(path: &Path) -> Result<Vec<DriftRecord>> {
    read_csv(path)
}
