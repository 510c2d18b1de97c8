//! Streaming replay: trace lines in, matched pairs / PFCP transactions /
//! statistics out, with bounded memory regardless of input length.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::codec::{parse_trace_line, ProbeEvent, Slice};
use crate::dataset::{DatasetError, PairWriter, PfcpWriter};
use crate::matcher::{MatchAccounting, MatchedPair, Matcher, MatcherConfig, MatcherError};
use crate::pfcp::{MsgClass, PfcpAccounting, PfcpTracker, PfcpTransaction};
use crate::stats::{DelayStats, DelaySummary};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Matcher(#[from] MatcherError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub matcher: MatcherConfig,
    pub pfcp_timeout: Duration,
    /// Whether retransmitted PFCP transactions enter RTT statistics.
    pub include_retransmitted: bool,
    /// Value written to the `load` column of both datasets.
    pub load: String,
    /// Longer lines are counted malformed without being buffered in full.
    pub max_line_len: usize,
}

impl PipelineConfig {
    pub const DEFAULT_MAX_LINE_LEN: usize = 4096;
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            matcher: MatcherConfig::default(),
            pfcp_timeout: PfcpTracker::DEFAULT_TIMEOUT,
            include_retransmitted: false,
            load: "-".into(),
            max_line_len: Self::DEFAULT_MAX_LINE_LEN,
        }
    }
}

/// Everything a replay produced besides the row-level datasets.
#[derive(Debug, Clone, Default)]
pub struct PipelineSummary {
    pub lines: u64,
    pub malformed: u64,
    pub interrupted: bool,
    pub matching: MatchAccounting,
    pub pfcp: PfcpAccounting,
    pub slice_stats: BTreeMap<Slice, DelayStats>,
    pub pfcp_stats: BTreeMap<MsgClass, DelayStats>,
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    lines: u64,
    malformed: u64,
    interrupted: bool,
    matcher: &'a MatchAccounting,
    pfcp: &'a PfcpAccounting,
    slices: BTreeMap<&'static str, DelaySummary>,
    pfcp_classes: BTreeMap<&'static str, DelaySummary>,
}

impl PipelineSummary {
    /// Accounting summary as pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let json = SummaryJson {
            lines: self.lines,
            malformed: self.malformed,
            interrupted: self.interrupted,
            matcher: &self.matching,
            pfcp: &self.pfcp,
            slices: self.slice_stats.iter().filter_map(|(s, d)| Some((s.as_str(), d.summary()?))).collect(),
            pfcp_classes: self.pfcp_stats.iter().filter_map(|(c, d)| Some((c.as_str(), d.summary()?))).collect(),
        };
        let mut s = serde_json::to_string_pretty(&json).expect("summary serialises");
        s.push('\n');
        s
    }
}

pub struct Pipeline<W: Write> {
    config: PipelineConfig,
    matcher: Matcher,
    tracker: PfcpTracker,
    pairs: Option<PairWriter<W>>,
    transactions: Option<PfcpWriter<W>>,
    summary: PipelineSummary,
    pfcp_clock: u64,
}

impl<W: Write> Pipeline<W> {
    /// `pairs` and `transactions` receive the two CSV datasets; either may be
    /// omitted when only statistics are wanted.
    pub fn new(config: PipelineConfig, pairs: Option<W>, transactions: Option<W>) -> Result<Self, PipelineError> {
        Ok(Self {
            matcher: Matcher::new(config.matcher)?,
            tracker: PfcpTracker::new(),
            pairs: pairs.map(PairWriter::new).transpose()?,
            transactions: transactions.map(PfcpWriter::new).transpose()?,
            summary: PipelineSummary::default(),
            pfcp_clock: 0,
            config,
        })
    }

    /// Parses and processes one trace line. Blank lines are ignored; lines
    /// that do not parse are counted as malformed and otherwise skipped.
    pub fn push_line(&mut self, line: &str) -> Result<(), PipelineError> {
        if line.trim().is_empty() {
            return Ok(());
        }
        self.summary.lines += 1;
        match parse_trace_line(line) {
            Ok(ev) => self.push_event(&ev),
            Err(_) => {
                self.record_malformed();
                Ok(())
            }
        }
    }

    fn record_malformed(&mut self) {
        self.summary.malformed += 1;
        self.matcher.record_malformed();
    }

    pub fn push_event(&mut self, ev: &ProbeEvent) -> Result<(), PipelineError> {
        match ev {
            ProbeEvent::Pfcp { ts, .. } => {
                self.pfcp_clock = self.pfcp_clock.max(*ts);
                self.tracker.timeout_sweep(self.pfcp_clock, self.config.pfcp_timeout);
                let tx = self.tracker.on_event(ev).expect("PFCP event");
                if let Some(tx) = tx {
                    self.on_transaction(&tx)?;
                }
            }
            _ => {
                if let Some(pair) = self.matcher.on_event(ev)? {
                    self.on_pair(&pair)?;
                }
            }
        }
        Ok(())
    }

    fn on_pair(&mut self, pair: &MatchedPair) -> Result<(), PipelineError> {
        let slice = pair.namespace.slice().expect("UPF namespace");
        if let Some(w) = &mut self.pairs {
            w.write(slice, &self.config.load, pair)?;
        }
        self.summary.slice_stats.entry(slice).or_default().record(pair.delay);
        Ok(())
    }

    fn on_transaction(&mut self, tx: &PfcpTransaction) -> Result<(), PipelineError> {
        if let Some(w) = &mut self.transactions {
            w.write(&self.config.load, tx)?;
        }
        if tx.counts_for_stats(self.config.include_retransmitted) {
            self.summary.pfcp_stats.entry(tx.msg_class).or_default().record(tx.rtt);
        }
        Ok(())
    }

    /// Reads `input` line by line until EOF or until `interrupt` is raised.
    pub fn run<R: BufRead>(&mut self, mut input: R, interrupt: Option<&AtomicBool>) -> Result<(), PipelineError> {
        let mut buf = Vec::with_capacity(256);
        loop {
            if interrupt.is_some_and(|f| f.load(Ordering::Relaxed)) {
                self.summary.interrupted = true;
                return Ok(());
            }
            match read_bounded_line(&mut input, &mut buf, self.config.max_line_len)? {
                LineRead::Eof => {
                    // Interruptible sources report EOF once the flag is raised.
                    self.summary.interrupted |= interrupt.is_some_and(|f| f.load(Ordering::Relaxed));
                    return Ok(());
                }
                LineRead::TooLong => {
                    self.summary.lines += 1;
                    self.record_malformed();
                }
                LineRead::Line => match std::str::from_utf8(&buf) {
                    Ok(line) => self.push_line(line)?,
                    Err(_) => {
                        self.summary.lines += 1;
                        self.record_malformed();
                    }
                },
            }
        }
    }

    /// Resolves what can be resolved at the last observed timestamp, flushes
    /// the datasets and returns the summary. Entries still inside their
    /// window stay pending.
    pub fn finish(mut self) -> Result<(PipelineSummary, Option<W>, Option<W>), PipelineError> {
        self.matcher.flush(self.matcher.clock())?;
        self.tracker.timeout_sweep(self.pfcp_clock, self.config.pfcp_timeout);
        let mut summary = self.summary;
        summary.matching = self.matcher.accounting();
        summary.pfcp = self.tracker.accounting();
        let pairs = self.pairs.map(PairWriter::into_inner).transpose()?;
        let transactions = self.transactions.map(PfcpWriter::into_inner).transpose()?;
        Ok((summary, pairs, transactions))
    }
}

enum LineRead {
    Eof,
    Line,
    TooLong,
}

/// Reads one LF-terminated line into `buf` (without the LF), never holding
/// more than `max` bytes of it.
fn read_bounded_line<R: BufRead>(r: &mut R, buf: &mut Vec<u8>, max: usize) -> io::Result<LineRead> {
    buf.clear();
    let mut too_long = false;
    let mut any = false;
    loop {
        let chunk = match r.fill_buf() {
            Ok(c) => c,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        if chunk.is_empty() {
            return Ok(match (any, too_long) {
                (false, _) => LineRead::Eof,
                (true, true) => LineRead::TooLong,
                (true, false) => LineRead::Line,
            });
        }
        any = true;
        let (piece, consumed, done) = match chunk.iter().position(|&b| b == b'\n') {
            Some(i) => (&chunk[..i], i + 1, true),
            None => (chunk, chunk.len(), false),
        };
        if !too_long {
            if buf.len() + piece.len() > max {
                too_long = true;
                buf.clear();
            } else {
                buf.extend_from_slice(piece);
            }
        }
        r.consume(consumed);
        if done {
            return Ok(if too_long { LineRead::TooLong } else { LineRead::Line });
        }
    }
}

/// Replays a whole trace with default sinks discarded; convenience for tests
/// and benchmarks.
pub fn replay_events<'a, I>(config: PipelineConfig, events: I) -> Result<PipelineSummary, PipelineError>
where
    I: IntoIterator<Item = &'a ProbeEvent>,
{
    let mut p: Pipeline<io::Sink> = Pipeline::new(config, None, None)?;
    for ev in events {
        p.push_event(ev)?;
    }
    Ok(p.finish()?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::read_pairs;

    const TRACE: &str = "\
M1 ns=upf1 key=00000000deadbeef teid=0000abcd ts=1000000
garbage line
<idle>-0 [003] ..s. 4711.002: bpf_trace_printk: TCBPF: M3 ns=upf1 key=00000000deadbeef ts=1030000

P4 dir=S seq=7 mt=52 ts=1
P4 dir=R seq=7 mt=53 ts=125001
";

    #[test]
    fn replays_mixed_trace() {
        let cfg = PipelineConfig { load: "Heavy".into(), ..Default::default() };
        let mut p = Pipeline::new(cfg, Some(Vec::new()), Some(Vec::new())).unwrap();
        p.run(TRACE.as_bytes(), None).unwrap();
        let (s, pairs, pfcp) = p.finish().unwrap();
        assert_eq!((s.lines, s.malformed), (5, 1));
        assert_eq!(s.matching.matched, 1);
        assert_eq!(s.matching.malformed, 1);
        assert_eq!(s.pfcp.transactions, 1);
        assert!(s.matching.conservation_holds() && s.pfcp.conservation_holds());
        let rows = read_pairs(&pairs.unwrap()[..]).unwrap();
        assert_eq!(rows[0].pair.delay, 30_000);
        assert_eq!(rows[0].load, "Heavy");
        assert!(String::from_utf8(pfcp.unwrap()).unwrap().ends_with("\nHeavy,Modification,7,1,125001,125000,0\n"));
        assert_eq!(s.slice_stats[&Slice::Embb].count(), 1);
        assert_eq!(s.pfcp_stats[&MsgClass::Modification].count(), 1);
        let json = s.to_json();
        assert!(json.contains("\"matched\": 1"), "{json}");
    }

    #[test]
    fn empty_input() {
        let mut p = Pipeline::new(PipelineConfig::default(), Some(Vec::new()), Some(Vec::new())).unwrap();
        p.run(&b""[..], None).unwrap();
        let (s, pairs, _) = p.finish().unwrap();
        assert_eq!(s.lines, 0);
        assert_eq!(s.matching, MatchAccounting::default());
        assert_eq!(pairs.unwrap(), b"slice,load,upf,teid,flow_key,t_m1_ns,t_m3_ns,delay_ns\n");
    }

    #[test]
    fn overlong_and_binary_lines_are_malformed() {
        let cfg = PipelineConfig { max_line_len: 64, ..Default::default() };
        let mut input = vec![b'x'; 10_000];
        input.extend_from_slice(b"\n\xff\xfe\nM3 ns=upf2 key=00000000deadbeef ts=5\n");
        let mut p: Pipeline<Vec<u8>> = Pipeline::new(cfg, None, None).unwrap();
        p.run(&input[..], None).unwrap();
        let (s, _, _) = p.finish().unwrap();
        assert_eq!((s.lines, s.malformed), (3, 2));
        assert_eq!(s.matching.m3_total, 1);
    }

    #[test]
    fn interrupt_stops_cleanly() {
        let flag = AtomicBool::new(true);
        let mut p: Pipeline<Vec<u8>> = Pipeline::new(PipelineConfig::default(), None, None).unwrap();
        p.run(TRACE.as_bytes(), Some(&flag)).unwrap();
        let (s, _, _) = p.finish().unwrap();
        assert!(s.interrupted);
        assert_eq!(s.lines, 0);
    }

    #[test]
    fn retransmissions_excluded_by_default() {
        let events = [
            ProbeEvent::Pfcp { dir: crate::codec::Direction::Send, sequence: 1, message_type: 52, ts: 10 },
            ProbeEvent::Pfcp { dir: crate::codec::Direction::Send, sequence: 1, message_type: 52, ts: 20 },
            ProbeEvent::Pfcp { dir: crate::codec::Direction::Recv, sequence: 1, message_type: 53, ts: 30 },
        ];
        let s = replay_events(PipelineConfig::default(), &events).unwrap();
        assert_eq!(s.pfcp.transactions, 1);
        assert!(s.pfcp_stats.is_empty());
        let cfg = PipelineConfig { include_retransmitted: true, ..Default::default() };
        let s = replay_events(cfg, &events).unwrap();
        assert_eq!(s.pfcp_stats[&MsgClass::Modification].count(), 1);
    }
}
