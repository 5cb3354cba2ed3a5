//! Trace JSONL and metrics CSV files.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use vtree_core::kernel::{Accounting, RunOutput};
use vtree_core::metrics::MetricsReport;
use vtree_core::trace::TraceRecord;

use crate::error::SimError;

/// One JSON object per line, in record order.
pub fn write_trace<W: Write>(mut w: W, trace: &[TraceRecord]) -> std::io::Result<()> {
    for r in trace {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_trace_file(path: &Path, trace: &[TraceRecord]) -> Result<(), SimError> {
    let f = File::create(path).map_err(|e| SimError::io(path, e))?;
    write_trace(BufWriter::new(f), trace).map_err(|e| SimError::io(path, e))
}

pub fn read_trace<R: BufRead>(r: R) -> std::io::Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("line {}: {e}", i + 1),
            )
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRecord>, SimError> {
    let f = File::open(path).map_err(|e| SimError::io(path, e))?;
    read_trace(BufReader::new(f)).map_err(|e| SimError::io(path, e))
}

/// Long-format CSV: `kind,id,name,value`.
///
/// `summary` rows carry run-wide figures (id empty), `msg` rows are keyed by
/// `origin:seq`, `recovery` rows by region (value `unrestored` when the
/// region never got back to `T_min`), `accounting` rows balance the queue.
pub fn metrics_csv(report: &MetricsReport, acc: &Accounting) -> String {
    let mut s = String::from("kind,id,name,value\n");
    let mut row = |kind: &str, id: &str, name: &str, value: &dyn std::fmt::Display| {
        let _ = writeln!(s, "{kind},{id},{name},{value}");
    };
    let unrestored = report
        .recovery
        .iter()
        .filter(|r| r.rounds.is_none())
        .count();
    let summary: [(&str, &dyn std::fmt::Display); 19] = [
        ("messages", &report.messages.len()),
        ("broadcasts", &report.broadcasts),
        ("tree_forwards", &report.tree_forwards),
        ("internal_tree_hops", &report.internal_tree_hops),
        ("worker_relays", &report.worker_relays),
        ("reports", &report.reports),
        ("region_crossings", &report.region_crossings),
        ("max_hop_alg2", &report.max_hop_alg2),
        ("max_hop_alg3", &report.max_hop_alg3),
        ("regions_total", &report.regions_total),
        ("regions_live", &report.regions_live),
        ("live_fraction", &report.live_fraction()),
        ("containment_violations", &report.containment_violations),
        ("probes", &report.probes),
        ("evaluations", &report.evaluations),
        ("jammed", &report.jammed),
        ("route_failures", &report.route_failures),
        ("maintenance_rounds", &report.maintenance_rounds),
        ("recovery_unrestored", &unrestored),
    ];
    for (name, v) in summary {
        row("summary", "", name, v);
    }
    for (id, m) in &report.messages {
        let id = id.to_string();
        row("msg", &id, "injected_at", &m.injected_at.as_units());
        row("msg", &id, "goals", &m.goals);
        row("msg", &id, "delivered", &m.delivered.len());
        row("msg", &id, "max_hop", &m.max_hop);
        if let Some(l) = m.max_latency() {
            row("msg", &id, "max_latency", &l.as_units());
        }
        row("msg", &id, "route_failures", &m.route_failures);
    }
    for r in &report.recovery {
        let id = r.region.0.to_string();
        match r.rounds {
            Some(n) => row("recovery", &id, "rounds", &n),
            None => row("recovery", &id, "rounds", &"unrestored"),
        }
    }
    let accounting: [(&str, u64); 10] = [
        ("created", acc.created),
        ("handled", acc.handled),
        ("jammed", acc.jammed),
        ("tombstoned", acc.tombstoned),
        ("cancelled", acc.cancelled),
        ("suppressed", acc.suppressed),
        ("rerouted", acc.rerouted),
        ("route_failed", acc.route_failed),
        ("parked", acc.parked),
        ("in_flight", acc.in_flight),
    ];
    for (name, v) in accounting {
        row("accounting", "", name, &v);
    }
    s
}

/// The one-line summary printed by `vtree run`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub status: &'static str,
    pub trace_records: usize,
    pub messages: usize,
    pub goals: u64,
    pub delivered: u64,
    pub broadcasts: u64,
    pub tree_forwards: u64,
    pub region_crossings: u64,
    pub max_hop: u32,
    pub live_fraction: f64,
    pub containment_violations: u64,
    pub recovery_breaches: usize,
    pub recovery_unrestored: usize,
}

impl RunSummary {
    pub fn new(out: &RunOutput) -> Self {
        let r = &out.report;
        Self {
            status: "ok",
            trace_records: out.trace.len(),
            messages: r.messages.len(),
            goals: r.messages.values().map(|m| m.goals as u64).sum(),
            delivered: r.messages.values().map(|m| m.delivered.len() as u64).sum(),
            broadcasts: r.broadcasts,
            tree_forwards: r.tree_forwards,
            region_crossings: r.region_crossings,
            max_hop: r.max_hop_alg2.max(r.max_hop_alg3),
            live_fraction: r.live_fraction(),
            containment_violations: r.containment_violations,
            recovery_breaches: r.recovery.len(),
            recovery_unrestored: r.recovery.iter().filter(|s| s.rounds.is_none()).count(),
        }
    }
}

/// Writes `trace.jsonl` and `metrics.csv` into `dir`, creating it if needed.
pub fn write_run(dir: &Path, out: &RunOutput) -> Result<(), SimError> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    write_trace_file(&dir.join("trace.jsonl"), &out.trace)?;
    let csv_path = dir.join("metrics.csv");
    std::fs::write(&csv_path, metrics_csv(&out.report, &out.accounting))
        .map_err(|e| SimError::io(&csv_path, e))
}
