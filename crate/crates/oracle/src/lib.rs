//! Brute-force reference implementations used only by tests.
//!
//! Every structure here is a flat `Vec` searched linearly, so each event costs
//! O(buffered entries) and the whole run O(n²). Nothing is shared with the
//! streaming implementations beyond the plain data types.

use std::fmt::Write as _;
use std::time::Duration;

use slicelat::codec::{parse_trace_line, Direction, Namespace, ProbeEvent};
use slicelat::pfcp::{MsgClass, PfcpAccounting, PfcpTransaction};
use slicelat::{FlowKey, MatchAccounting, MatchedPair, MatcherConfig};

fn ns_of(d: Duration) -> u64 {
    u64::try_from(d.as_nanos()).unwrap_or(u64::MAX)
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    id: u64,
    ts: u64,
    key: FlowKey,
    teid: u32,
}

#[derive(Debug, Default)]
struct NsState {
    clock: u64,
    m1: Vec<Entry>,
    m3: Vec<Entry>,
    acct: MatchAccounting,
}

/// O(n²) reference for the forwarding-event matcher.
#[derive(Debug)]
pub struct BruteForceMatcher {
    window: u64,
    slack: u64,
    capacity: usize,
    next_id: u64,
    state: Vec<(Namespace, NsState)>,
    malformed: u64,
}

impl BruteForceMatcher {
    pub fn new(cfg: &MatcherConfig) -> Self {
        Self {
            window: ns_of(cfg.window),
            slack: ns_of(cfg.reorder_slack),
            capacity: cfg.capacity,
            next_id: 0,
            state: Vec::new(),
            malformed: 0,
        }
    }

    fn ns(&mut self, ns: Namespace) -> &mut NsState {
        let pos = match self.state.iter().position(|(n, _)| *n == ns) {
            Some(p) => p,
            None => {
                self.state.push((ns, NsState::default()));
                self.state.len() - 1
            }
        };
        &mut self.state[pos].1
    }

    fn expire(st: &mut NsState, window: u64, slack: u64) {
        let clock = st.clock;
        let before = st.m1.len();
        st.m1.retain(|e| clock - e.ts <= window + slack);
        st.acct.m1_expired += (before - st.m1.len()) as u64;
        let before = st.m3.len();
        st.m3.retain(|e| clock - e.ts <= slack);
        st.acct.m3_orphaned += (before - st.m3.len()) as u64;
    }

    fn remove_oldest(list: &mut Vec<Entry>) {
        let oldest = (0..list.len()).min_by_key(|&i| list[i].id).expect("non-empty");
        list.remove(oldest);
    }

    /// Feeds one forwarding event; PFCP events are ignored.
    pub fn on_event(&mut self, ev: &ProbeEvent) -> Option<MatchedPair> {
        let (window, slack, capacity) = (self.window, self.slack, self.capacity);
        let id = self.next_id;
        match *ev {
            ProbeEvent::M1 { ns, flow_key, teid, ts } => {
                let st = self.ns(ns);
                st.acct.m1_total += 1;
                st.clock = st.clock.max(ts);
                Self::expire(st, window, slack);
                let mut found: Option<usize> = None;
                for (i, e) in st.m3.iter().enumerate() {
                    if e.key == flow_key && e.ts >= ts && e.ts - ts <= window && found.is_none_or(|f| e.id < st.m3[f].id) {
                        found = Some(i);
                    }
                }
                if let Some(i) = found {
                    let m3 = st.m3.remove(i);
                    st.acct.matched += 1;
                    return Some(MatchedPair { namespace: ns, teid, flow_key, t_m1: ts, t_m3: m3.ts, delay: m3.ts - ts });
                }
                if st.m1.len() >= capacity {
                    Self::remove_oldest(&mut st.m1);
                    st.acct.m1_evicted += 1;
                }
                st.m1.push(Entry { id, ts, key: flow_key, teid });
                self.next_id += 1;
                None
            }
            ProbeEvent::M3 { ns, flow_key, ts } => {
                let st = self.ns(ns);
                st.acct.m3_total += 1;
                st.clock = st.clock.max(ts);
                Self::expire(st, window, slack);
                let mut found: Option<usize> = None;
                for (i, e) in st.m1.iter().enumerate() {
                    if e.key == flow_key
                        && e.ts <= ts
                        && ts - e.ts <= window
                        && found.is_none_or(|f| (e.ts, e.id) < (st.m1[f].ts, st.m1[f].id))
                    {
                        found = Some(i);
                    }
                }
                if let Some(i) = found {
                    let m1 = st.m1.remove(i);
                    st.acct.matched += 1;
                    return Some(MatchedPair {
                        namespace: ns,
                        teid: m1.teid,
                        flow_key,
                        t_m1: m1.ts,
                        t_m3: ts,
                        delay: ts - m1.ts,
                    });
                }
                if st.m3.len() >= capacity {
                    Self::remove_oldest(&mut st.m3);
                    st.acct.m3_orphaned += 1;
                }
                st.m3.push(Entry { id, ts, key: flow_key, teid: 0 });
                self.next_id += 1;
                None
            }
            ProbeEvent::Pfcp { .. } => None,
        }
    }

    pub fn record_malformed(&mut self) {
        self.malformed += 1;
    }

    /// Largest timestamp seen in any namespace.
    pub fn clock(&self) -> u64 {
        self.state.iter().map(|(_, s)| s.clock).max().unwrap_or(0)
    }

    /// Advances every namespace clock to `now` and expires what is due.
    pub fn flush(&mut self, now: u64) {
        let (window, slack) = (self.window, self.slack);
        for (_, st) in &mut self.state {
            st.clock = st.clock.max(now);
            Self::expire(st, window, slack);
        }
    }

    pub fn accounting(&self) -> MatchAccounting {
        let mut a = MatchAccounting { malformed: self.malformed, ..Default::default() };
        for (_, st) in &self.state {
            a.m1_total += st.acct.m1_total;
            a.m3_total += st.acct.m3_total;
            a.matched += st.acct.matched;
            a.m1_evicted += st.acct.m1_evicted;
            a.m1_expired += st.acct.m1_expired;
            a.m3_orphaned += st.acct.m3_orphaned;
            a.pending_m1 += st.m1.len() as u64;
            a.pending_m3 += st.m3.len() as u64;
        }
        let denom = a.m1_total.max(a.m3_total);
        a.match_rate = if denom == 0 { 0.0 } else { a.matched as f64 / denom as f64 };
        a
    }
}

/// Matches a whole event list and flushes at the final clock.
pub fn match_events(events: &[ProbeEvent], cfg: &MatcherConfig) -> (Vec<MatchedPair>, MatchAccounting) {
    let mut m = BruteForceMatcher::new(cfg);
    let pairs = events.iter().filter_map(|e| m.on_event(e)).collect();
    m.flush(m.clock());
    (pairs, m.accounting())
}

#[derive(Debug, Clone, Copy)]
struct PendingReq {
    seq: u32,
    t_send: u64,
    mt: u8,
    retransmitted: bool,
}

/// O(n²) reference for PFCP transaction pairing with a timeout sweep before
/// every event.
#[derive(Debug)]
pub struct BruteForcePfcp {
    timeout: u64,
    clock: u64,
    last_seq: Option<u32>,
    pending: Vec<PendingReq>,
    acct: PfcpAccounting,
}

impl BruteForcePfcp {
    pub fn new(timeout: Duration) -> Self {
        Self { timeout: ns_of(timeout), clock: 0, last_seq: None, pending: Vec::new(), acct: PfcpAccounting::default() }
    }

    fn sweep(&mut self) {
        let (clock, timeout) = (self.clock, self.timeout);
        let before = self.pending.len();
        self.pending.retain(|p| clock.saturating_sub(p.t_send) <= timeout);
        self.acct.lost += (before - self.pending.len()) as u64;
    }

    pub fn on_event(&mut self, ev: &ProbeEvent) -> Option<PfcpTransaction> {
        let ProbeEvent::Pfcp { dir, sequence, message_type, ts } = *ev else {
            return None;
        };
        self.clock = self.clock.max(ts);
        self.sweep();
        match dir {
            Direction::Send => {
                if let Some(last) = self.last_seq {
                    if sequence < last && last - sequence > (1 << 23) {
                        self.acct.lost += self.pending.len() as u64;
                        self.pending.clear();
                    }
                }
                self.last_seq = Some(sequence);
                if let Some(p) = self.pending.iter_mut().find(|p| p.seq == sequence) {
                    p.retransmitted = true;
                    self.acct.retransmissions += 1;
                } else {
                    self.acct.sends += 1;
                    self.pending.push(PendingReq { seq: sequence, t_send: ts, mt: message_type, retransmitted: false });
                }
                None
            }
            Direction::Recv => {
                self.acct.recvs += 1;
                let pos = self
                    .pending
                    .iter()
                    .position(|p| p.seq == sequence && p.mt.wrapping_add(1) == message_type && ts >= p.t_send);
                let Some(pos) = pos else {
                    self.acct.orphans += 1;
                    return None;
                };
                let p = self.pending.remove(pos);
                self.acct.transactions += 1;
                if p.retransmitted {
                    self.acct.retransmitted_transactions += 1;
                }
                Some(PfcpTransaction {
                    sequence,
                    msg_class: MsgClass::from_request(p.mt),
                    request_type: p.mt,
                    t_send: p.t_send,
                    t_recv: ts,
                    rtt: ts - p.t_send,
                    retransmitted: p.retransmitted,
                })
            }
        }
    }

    pub fn finish(&mut self) {
        self.sweep();
    }

    pub fn accounting(&self) -> PfcpAccounting {
        PfcpAccounting { pending: self.pending.len() as u64, ..self.acct }
    }
}

/// Nearest-rank quantile of an ascending slice: the `ceil(q·n)`-th value.
pub fn exact_quantile(sorted: &[u64], q: f64) -> u64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Reference CSV outputs for a trace: `(pairs_csv, pfcp_csv, accounting)`.
///
/// Formats are written out by hand here, independently of the crate's CSV
/// writers, so golden files catch format drift as well as matching drift.
pub fn reference_replay(
    trace: &str,
    load: &str,
    cfg: &MatcherConfig,
    pfcp_timeout: Duration,
) -> (String, String, MatchAccounting, PfcpAccounting) {
    let mut m = BruteForceMatcher::new(cfg);
    let mut p = BruteForcePfcp::new(pfcp_timeout);
    let mut pairs = String::from("slice,load,upf,teid,flow_key,t_m1_ns,t_m3_ns,delay_ns\n");
    let mut pfcp = String::from("load,msg_class,seq,t_send_ns,t_recv_ns,rtt_ns,retransmitted\n");
    for line in trace.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let Ok(ev) = parse_trace_line(line) else {
            m.record_malformed();
            continue;
        };
        if let ProbeEvent::Pfcp { .. } = ev {
            if let Some(t) = p.on_event(&ev) {
                let _ = writeln!(
                    pfcp,
                    "{load},{},{},{},{},{},{}",
                    t.msg_class,
                    t.sequence,
                    t.t_send,
                    t.t_recv,
                    t.rtt,
                    u8::from(t.retransmitted)
                );
            }
        } else if let Some(x) = m.on_event(&ev) {
            let _ = writeln!(
                pairs,
                "{},{load},{},{:08x},{:016x},{},{},{}",
                x.namespace.slice().expect("UPF").as_str(),
                x.namespace.as_str(),
                x.teid,
                x.flow_key.0,
                x.t_m1,
                x.t_m3,
                x.delay
            );
        }
    }
    m.flush(m.clock());
    p.finish();
    (pairs, pfcp, m.accounting(), p.accounting())
}
