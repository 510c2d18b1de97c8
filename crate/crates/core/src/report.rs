//! Markdown tables and CDF exports built from the CSV datasets.
//!
//! The forwarding table has one row per slice × load (the three standard
//! loads always appear, other load labels follow in sorted order); cells
//! without samples print `no data`. Delays are printed in whole microseconds.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::codec::Slice;
use crate::dataset::{DatasetError, PairRecord, PfcpRecord};
use crate::pfcp::{MsgClass, PfcpTransaction};
use crate::stats::{DelayStats, StatsError};
use crate::synth::LoadLevel;

/// Reference line drawn on PFCP CDFs: the 2 ms orchestration budget.
pub const ORCHESTRATION_BUDGET_NS: u64 = 2_000_000;

pub const NO_DATA: &str = "no data";

/// CDF series of one forwarding cell: slice, load label, `(delay_ns, fraction)` points.
pub type ForwardingCdf = (Slice, String, Vec<(u64, f64)>);
/// CDF series of one PFCP cell: load label, message class, points.
pub type PfcpCdf = (String, MsgClass, Vec<(u64, f64)>);

/// Load label ordered Light < Medium < Heavy < anything else (by name).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LoadLabel(pub String);

impl LoadLabel {
    fn rank(&self) -> usize {
        LoadLevel::ALL.iter().position(|l| l.as_str() == self.0).unwrap_or(LoadLevel::ALL.len())
    }
}

impl Ord for LoadLabel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank().cmp(&other.rank()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for LoadLabel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn standard_loads() -> impl Iterator<Item = LoadLabel> {
    LoadLevel::ALL.iter().map(|l| LoadLabel(l.as_str().to_owned()))
}

fn us(ns: u64) -> u64 {
    (ns + 500) / 1000
}

fn cell(v: Option<u64>) -> String {
    v.map_or_else(|| NO_DATA.to_owned(), |v| v.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ForwardingRow {
    pub slice: Slice,
    pub load: String,
    pub n: u64,
    pub p50_us: Option<u64>,
    pub p99_us: Option<u64>,
}

/// Per-slice, per-load forwarding delay statistics.
#[derive(Debug, Clone, Default)]
pub struct ForwardingTable {
    cells: BTreeMap<(Slice, LoadLabel), DelayStats>,
}

impl ForwardingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, slice: Slice, load: &str, delay_ns: u64) {
        self.cells.entry((slice, LoadLabel(load.to_owned()))).or_default().record(delay_ns);
    }

    pub fn insert_stats(&mut self, slice: Slice, load: &str, stats: &DelayStats) -> Result<(), StatsError> {
        self.cells.entry((slice, LoadLabel(load.to_owned()))).or_default().merge(stats)
    }

    pub fn from_records<I>(records: I) -> Result<Self, DatasetError>
    where
        I: IntoIterator<Item = Result<PairRecord, DatasetError>>,
    {
        let mut t = Self::new();
        for r in records {
            let r = r?;
            t.add(r.slice, &r.load, r.pair.delay);
        }
        Ok(t)
    }

    pub fn stats(&self, slice: Slice, load: &str) -> Option<&DelayStats> {
        self.cells.get(&(slice, LoadLabel(load.to_owned())))
    }

    fn loads(&self) -> BTreeSet<LoadLabel> {
        standard_loads().chain(self.cells.keys().map(|(_, l)| l.clone())).collect()
    }

    pub fn rows(&self) -> Vec<ForwardingRow> {
        let loads = self.loads();
        let mut rows = Vec::new();
        for slice in Slice::ALL {
            for load in &loads {
                let stats = self.cells.get(&(slice, load.clone())).filter(|s| !s.is_empty());
                rows.push(ForwardingRow {
                    slice,
                    load: load.0.clone(),
                    n: stats.map_or(0, DelayStats::count),
                    p50_us: stats.and_then(|s| s.quantile(0.5).ok()).map(us),
                    p99_us: stats.and_then(|s| s.quantile(0.99).ok()).map(us),
                });
            }
        }
        rows
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Slice | Load | N | P50 (µs) | P99 (µs) |\n|---|---|---:|---:|---:|\n");
        for r in self.rows() {
            let _ = writeln!(out, "| {} | {} | {} | {} | {} |", r.slice, r.load, r.n, cell(r.p50_us), cell(r.p99_us));
        }
        out
    }

    /// CDF points for every populated cell.
    pub fn cdfs(&self, resolution: usize) -> Result<Vec<ForwardingCdf>, StatsError> {
        self.cells
            .iter()
            .filter(|(_, s)| !s.is_empty())
            .map(|((slice, load), s)| Ok((*slice, load.0.clone(), s.cdf_points(resolution)?)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PfcpRow {
    pub load: String,
    pub msg_class: MsgClass,
    pub n: u64,
    pub mean_us: Option<u64>,
    pub p99_us: Option<u64>,
}

/// Per-load, per-class PFCP round-trip statistics.
#[derive(Debug, Clone, Default)]
pub struct PfcpTable {
    cells: BTreeMap<(LoadLabel, MsgClass), DelayStats>,
    excluded_retransmitted: u64,
}

impl PfcpTable {
    pub fn from_records<I>(records: I, include_retransmitted: bool) -> Result<Self, DatasetError>
    where
        I: IntoIterator<Item = Result<PfcpRecord, DatasetError>>,
    {
        let mut t = Self::default();
        for r in records {
            let r = r?;
            t.add(&r.load, &r.transaction, include_retransmitted);
        }
        Ok(t)
    }

    /// Adds one transaction; retransmitted ones are only counted as excluded
    /// unless `include_retransmitted` is set.
    pub fn add(&mut self, load: &str, tx: &PfcpTransaction, include_retransmitted: bool) {
        if !tx.counts_for_stats(include_retransmitted) {
            self.excluded_retransmitted += 1;
            return;
        }
        self.cells.entry((LoadLabel(load.to_owned()), tx.msg_class)).or_default().record(tx.rtt);
    }

    pub fn excluded_retransmitted(&self) -> u64 {
        self.excluded_retransmitted
    }

    pub fn stats(&self, load: &str, class: MsgClass) -> Option<&DelayStats> {
        self.cells.get(&(LoadLabel(load.to_owned()), class))
    }

    /// Rows for one message class over the standard loads plus any observed.
    pub fn rows(&self, class: MsgClass) -> Vec<PfcpRow> {
        let loads: BTreeSet<LoadLabel> = standard_loads().chain(self.cells.keys().map(|(l, _)| l.clone())).collect();
        loads
            .into_iter()
            .map(|load| {
                let stats = self.cells.get(&(load.clone(), class)).filter(|s| !s.is_empty());
                PfcpRow {
                    load: load.0,
                    msg_class: class,
                    n: stats.map_or(0, DelayStats::count),
                    mean_us: stats.and_then(DelayStats::mean).map(|m| us(m.round() as u64)),
                    p99_us: stats.and_then(|s| s.quantile(0.99).ok()).map(us),
                }
            })
            .collect()
    }

    /// Session-modification table, followed by one for every other class
    /// that has data.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        for class in MsgClass::ALL {
            let rows = self.rows(class);
            if class != MsgClass::Modification && rows.iter().all(|r| r.n == 0) {
                continue;
            }
            if !out.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(out, "PFCP session {}:\n", class.as_str().to_lowercase());
            out.push_str("| Load | N | Mean (µs) | P99 (µs) |\n|---|---:|---:|---:|\n");
            for r in rows {
                let _ = writeln!(out, "| {} | {} | {} | {} |", r.load, r.n, cell(r.mean_us), cell(r.p99_us));
            }
        }
        if self.excluded_retransmitted > 0 {
            let _ = writeln!(out, "\n{} retransmitted transactions excluded.", self.excluded_retransmitted);
        }
        out
    }

    pub fn cdfs(&self, resolution: usize) -> Result<Vec<PfcpCdf>, StatsError> {
        self.cells
            .iter()
            .filter(|(_, s)| !s.is_empty())
            .map(|((load, class), s)| Ok((load.0.clone(), *class, s.cdf_points(resolution)?)))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CdfMeta {
    pub reference_line_ns: u64,
    pub reference_label: &'static str,
}

impl CdfMeta {
    pub fn pfcp() -> Self {
        Self { reference_line_ns: ORCHESTRATION_BUDGET_NS, reference_label: "2 ms orchestration budget" }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metadata serialises");
        s.push('\n');
        s
    }
}

/// File-name-safe form of a label: ASCII alphanumerics kept, the rest `_`.
pub fn file_label(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_has_no_data_rows() {
        let md = ForwardingTable::new().to_markdown();
        assert_eq!(md.lines().count(), 2 + 9);
        assert!(md.contains("| eMBB | Light | 0 | no data | no data |"));
        assert!(md.contains("| mMTC | Heavy | 0 | no data | no data |"));
    }

    #[test]
    fn degenerate_cell_prints_exactly() {
        let mut t = ForwardingTable::new();
        for _ in 0..100 {
            t.add(Slice::Embb, "Heavy", 30_000);
        }
        t.add(Slice::Urllc, "custom", 65_000);
        let md = t.to_markdown();
        assert!(md.contains("| eMBB | Heavy | 100 | 30 | 30 |"), "{md}");
        // Non-standard loads are listed after the standard three.
        let pos = |needle: &str| md.find(needle).unwrap();
        assert!(pos("| URLLC | Heavy |") < pos("| URLLC | custom | 1 | 65 | 65 |"));
    }

    #[test]
    fn load_ordering() {
        let mut v: Vec<LoadLabel> =
            ["zeta", "Heavy", "Light", "alpha", "Medium"].iter().map(|s| LoadLabel(s.to_string())).collect();
        v.sort();
        let names: Vec<_> = v.iter().map(|l| l.0.as_str()).collect();
        assert_eq!(names, ["Light", "Medium", "Heavy", "alpha", "zeta"]);
    }

    #[test]
    fn pfcp_table_excludes_retransmissions() {
        let tx = |seq, rtt, retransmitted| {
            Ok(PfcpRecord {
                load: "Light".into(),
                transaction: PfcpTransaction {
                    sequence: seq,
                    msg_class: MsgClass::Modification,
                    request_type: 52,
                    t_send: 1,
                    t_recv: 1 + rtt,
                    rtt,
                    retransmitted,
                },
            })
        };
        let t = PfcpTable::from_records([tx(1, 120_000, false), tx(2, 130_000, false), tx(3, 900_000, true)], false)
            .unwrap();
        let md = t.to_markdown();
        assert!(md.contains("| Light | 2 | 125 | 130 |"), "{md}");
        assert!(md.contains("| Heavy | 0 | no data | no data |"));
        assert!(md.contains("1 retransmitted transactions excluded."));
        assert_eq!(t.cdfs(2).unwrap().len(), 1);
    }

    #[test]
    fn meta_and_labels() {
        assert!(CdfMeta::pfcp().to_json().contains("\"reference_line_ns\": 2000000"));
        assert_eq!(file_label("eMBB"), "embb");
        assert_eq!(file_label("a/b c"), "a_b_c");
    }
}
