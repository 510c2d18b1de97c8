//! Streaming M1/M3 correlation into N3→N6 forwarding-delay pairs.
//!
//! Each UPF namespace owns an independent [`NamespaceMatcher`]:
//!
//! * M1 events wait in a bounded FIFO (`capacity` entries). A full FIFO
//!   evicts its oldest entry, which is counted as `m1_evicted`.
//! * An M3 event pairs with the buffered M1 of equal flow key whose delay
//!   `t_m3 - t_m1` lies in `[0, window]`, preferring the smallest `t_m1` and
//!   then the earliest insertion.
//! * An M3 with no partner is held for `reorder_slack`, because per-CPU trace
//!   buffers can interleave an M3 ahead of its M1. An M1 arriving while a
//!   compatible M3 is held pairs with the earliest such M3.
//!
//! Every event first advances the namespace clock to the largest timestamp
//! seen so far and expires stale state: an M1 is expired once the clock is
//! more than `window + reorder_slack` past it, and a held M3 is orphaned once
//! the clock is more than `reorder_slack` past it. [`Matcher::flush`] applies
//! the same rule at an explicit stream time.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::AddAssign;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{FlowKey, Namespace, ProbeEvent, ProbePoint};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatcherError {
    #[error("invalid matcher config: {0}")]
    InvalidConfig(&'static str),
    #[error("{0:?} event routed to the forwarding matcher")]
    WrongEventKind(ProbePoint),
    #[error("forwarding event from non-UPF namespace {0}")]
    WrongNamespace(Namespace),
    #[error("stream clock regressed from {clock} ns to {now} ns")]
    ClockRegression { clock: u64, now: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatcherConfig {
    /// Largest accepted forwarding delay, inclusive.
    pub window: Duration,
    /// Buffered M1 entries per namespace.
    pub capacity: usize,
    /// How long an M3 may precede its M1 in stream order.
    pub reorder_slack: Duration,
}

impl MatcherConfig {
    pub const DEFAULT_WINDOW: Duration = Duration::from_millis(10);
    pub const DEFAULT_CAPACITY: usize = 500;
    pub const DEFAULT_REORDER_SLACK: Duration = Duration::from_millis(1);

    /// A 1 ns window is accepted; it only pairs events whose timestamps differ
    /// by 0 or 1 ns.
    pub fn validate(&self) -> Result<(), MatcherError> {
        if self.window.is_zero() {
            return Err(MatcherError::InvalidConfig("window must be > 0"));
        }
        if self.capacity == 0 {
            return Err(MatcherError::InvalidConfig("capacity must be > 0"));
        }
        if self.reorder_slack >= self.window {
            return Err(MatcherError::InvalidConfig("reorder_slack must be < window"));
        }
        Ok(())
    }

    pub fn window_ns(&self) -> u64 {
        duration_ns(self.window)
    }

    pub fn reorder_slack_ns(&self) -> u64 {
        duration_ns(self.reorder_slack)
    }
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            window: Self::DEFAULT_WINDOW,
            capacity: Self::DEFAULT_CAPACITY,
            reorder_slack: Self::DEFAULT_REORDER_SLACK,
        }
    }
}

pub(crate) fn duration_ns(d: Duration) -> u64 {
    u64::try_from(d.as_nanos()).unwrap_or(u64::MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MatchedPair {
    pub namespace: Namespace,
    pub teid: u32,
    pub flow_key: FlowKey,
    pub t_m1: u64,
    pub t_m3: u64,
    pub delay: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expiration {
    M1Expired { ns: Namespace, flow_key: FlowKey, teid: u32, ts: u64 },
    M3Orphaned { ns: Namespace, flow_key: FlowKey, ts: u64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchAccounting {
    pub m1_total: u64,
    pub m3_total: u64,
    pub matched: u64,
    pub m1_evicted: u64,
    pub m1_expired: u64,
    pub m3_orphaned: u64,
    pub pending_m1: u64,
    pub pending_m3: u64,
    pub malformed: u64,
    /// `matched / max(m1_total, m3_total)`, 0 when no events were seen.
    pub match_rate: f64,
}

impl MatchAccounting {
    pub fn conservation_holds(&self) -> bool {
        self.matched + self.m1_evicted + self.m1_expired + self.pending_m1 == self.m1_total
            && self.matched + self.m3_orphaned + self.pending_m3 == self.m3_total
    }

    fn finish(mut self) -> Self {
        let denom = self.m1_total.max(self.m3_total);
        self.match_rate = if denom == 0 { 0.0 } else { self.matched as f64 / denom as f64 };
        self
    }
}

impl AddAssign for MatchAccounting {
    fn add_assign(&mut self, o: Self) {
        self.m1_total += o.m1_total;
        self.m3_total += o.m3_total;
        self.matched += o.matched;
        self.m1_evicted += o.m1_evicted;
        self.m1_expired += o.m1_expired;
        self.m3_orphaned += o.m3_orphaned;
        self.pending_m1 += o.pending_m1;
        self.pending_m3 += o.pending_m3;
        self.malformed += o.malformed;
        *self = self.finish();
    }
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    ts: u64,
    key: FlowKey,
    teid: u32,
}

/// Entries indexed three ways: arrival order (eviction), timestamp order
/// (expiry) and flow key (matching).
#[derive(Debug, Default)]
struct KeyedQueue {
    by_id: BTreeMap<u64, Slot>,
    by_time: BTreeSet<(u64, u64)>,
    by_key: HashMap<FlowKey, Vec<u64>>,
}

impl KeyedQueue {
    fn len(&self) -> usize {
        self.by_id.len()
    }

    fn push(&mut self, id: u64, slot: Slot) {
        self.by_time.insert((slot.ts, id));
        self.by_key.entry(slot.key).or_default().push(id);
        self.by_id.insert(id, slot);
    }

    fn remove(&mut self, id: u64) -> Slot {
        let slot = self.by_id.remove(&id).expect("queue index out of sync");
        self.by_time.remove(&(slot.ts, id));
        if let Some(ids) = self.by_key.get_mut(&slot.key) {
            if let Some(pos) = ids.iter().position(|&i| i == id) {
                ids.remove(pos);
            }
            if ids.is_empty() {
                self.by_key.remove(&slot.key);
            }
        }
        slot
    }

    fn pop_oldest(&mut self) -> Option<Slot> {
        let (&id, _) = self.by_id.first_key_value()?;
        Some(self.remove(id))
    }

    /// Removes every entry with `ts < cutoff`, in timestamp order.
    fn drain_before(&mut self, cutoff: u64, mut f: impl FnMut(Slot)) {
        while let Some(&(ts, id)) = self.by_time.first() {
            if ts >= cutoff {
                break;
            }
            f(self.remove(id));
        }
    }

    /// Best candidate among entries sharing `key`, by `rank` (smallest wins).
    fn best<R: Ord>(&self, key: FlowKey, mut rank: impl FnMut(u64, &Slot) -> Option<R>) -> Option<u64> {
        self.by_key
            .get(&key)?
            .iter()
            .filter_map(|&id| rank(id, &self.by_id[&id]).map(|r| (r, id)))
            .min()
            .map(|(_, id)| id)
    }
}

/// Matcher state for one UPF namespace. Single writer.
#[derive(Debug)]
pub struct NamespaceMatcher {
    ns: Namespace,
    window: u64,
    slack: u64,
    capacity: usize,
    clock: u64,
    next_id: u64,
    m1: KeyedQueue,
    held_m3: KeyedQueue,
    acct: MatchAccounting,
}

impl NamespaceMatcher {
    pub fn new(ns: Namespace, config: &MatcherConfig) -> Result<Self, MatcherError> {
        config.validate()?;
        if !ns.is_upf() {
            return Err(MatcherError::WrongNamespace(ns));
        }
        Ok(Self {
            ns,
            window: config.window_ns(),
            slack: config.reorder_slack_ns(),
            capacity: config.capacity,
            clock: 0,
            next_id: 0,
            m1: KeyedQueue::default(),
            held_m3: KeyedQueue::default(),
            acct: MatchAccounting::default(),
        })
    }

    pub fn namespace(&self) -> Namespace {
        self.ns
    }

    /// Largest timestamp seen (or flushed to) so far.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn buffered_m1(&self) -> usize {
        self.m1.len()
    }

    pub fn held_m3(&self) -> usize {
        self.held_m3.len()
    }

    pub fn on_event(&mut self, event: &ProbeEvent) -> Result<Option<MatchedPair>, MatcherError> {
        match *event {
            ProbeEvent::M1 { ns, flow_key, teid, ts } => {
                self.check_ns(ns)?;
                Ok(self.on_m1(flow_key, teid, ts))
            }
            ProbeEvent::M3 { ns, flow_key, ts } => {
                self.check_ns(ns)?;
                Ok(self.on_m3(flow_key, ts))
            }
            ProbeEvent::Pfcp { .. } => Err(MatcherError::WrongEventKind(event.point())),
        }
    }

    fn check_ns(&self, ns: Namespace) -> Result<(), MatcherError> {
        if ns == self.ns {
            Ok(())
        } else {
            Err(MatcherError::WrongNamespace(ns))
        }
    }

    fn next_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn on_m1(&mut self, key: FlowKey, teid: u32, ts: u64) -> Option<MatchedPair> {
        self.acct.m1_total += 1;
        self.advance(ts, None);

        let window = self.window;
        let held = self.held_m3.best(key, |id, m3| {
            (m3.ts >= ts && m3.ts - ts <= window).then_some(id)
        });
        if let Some(id) = held {
            let m3 = self.held_m3.remove(id);
            return Some(self.pair(key, teid, ts, m3.ts));
        }

        if self.m1.len() >= self.capacity {
            self.m1.pop_oldest();
            self.acct.m1_evicted += 1;
        }
        let id = self.next_id();
        self.m1.push(id, Slot { ts, key, teid });
        None
    }

    pub fn on_m3(&mut self, key: FlowKey, ts: u64) -> Option<MatchedPair> {
        self.acct.m3_total += 1;
        self.advance(ts, None);

        let window = self.window;
        let best = self.m1.best(key, |_, m1| (m1.ts <= ts && ts - m1.ts <= window).then_some(m1.ts));
        if let Some(id) = best {
            let m1 = self.m1.remove(id);
            return Some(self.pair(key, m1.teid, m1.ts, ts));
        }

        if self.held_m3.len() >= self.capacity {
            self.held_m3.pop_oldest();
            self.acct.m3_orphaned += 1;
        }
        let id = self.next_id();
        self.held_m3.push(id, Slot { ts, key, teid: 0 });
        None
    }

    fn pair(&mut self, flow_key: FlowKey, teid: u32, t_m1: u64, t_m3: u64) -> MatchedPair {
        self.acct.matched += 1;
        MatchedPair { namespace: self.ns, teid, flow_key, t_m1, t_m3, delay: t_m3 - t_m1 }
    }

    fn advance(&mut self, now: u64, mut out: Option<&mut Vec<Expiration>>) {
        self.clock = self.clock.max(now);
        let ns = self.ns;
        let acct = &mut self.acct;
        self.m1.drain_before(self.clock.saturating_sub(self.window + self.slack), |s| {
            acct.m1_expired += 1;
            if let Some(out) = out.as_deref_mut() {
                out.push(Expiration::M1Expired { ns, flow_key: s.key, teid: s.teid, ts: s.ts });
            }
        });
        self.held_m3.drain_before(self.clock.saturating_sub(self.slack), |s| {
            acct.m3_orphaned += 1;
            if let Some(out) = out.as_deref_mut() {
                out.push(Expiration::M3Orphaned { ns, flow_key: s.key, ts: s.ts });
            }
        });
    }

    fn check_flush(&self, now: u64) -> Result<(), MatcherError> {
        if now.saturating_add(self.slack) < self.clock {
            return Err(MatcherError::ClockRegression { clock: self.clock, now });
        }
        Ok(())
    }

    pub fn flush(&mut self, now: u64) -> Result<Vec<Expiration>, MatcherError> {
        self.check_flush(now)?;
        let mut out = Vec::new();
        self.advance(now, Some(&mut out));
        Ok(out)
    }

    /// End of stream: everything still buffered is resolved as expired (M1)
    /// or orphaned (M3).
    pub fn drain(&mut self) -> Vec<Expiration> {
        let mut out = Vec::new();
        let ns = self.ns;
        while let Some(s) = self.m1.pop_oldest() {
            self.acct.m1_expired += 1;
            out.push(Expiration::M1Expired { ns, flow_key: s.key, teid: s.teid, ts: s.ts });
        }
        while let Some(s) = self.held_m3.pop_oldest() {
            self.acct.m3_orphaned += 1;
            out.push(Expiration::M3Orphaned { ns, flow_key: s.key, ts: s.ts });
        }
        out
    }

    pub fn accounting(&self) -> MatchAccounting {
        MatchAccounting {
            pending_m1: self.m1.len() as u64,
            pending_m3: self.held_m3.len() as u64,
            ..self.acct
        }
        .finish()
    }
}

/// Routes forwarding events to one [`NamespaceMatcher`] per UPF.
#[derive(Debug)]
pub struct Matcher {
    config: MatcherConfig,
    namespaces: Vec<NamespaceMatcher>,
    malformed: u64,
}

impl Matcher {
    pub fn new(config: MatcherConfig) -> Result<Self, MatcherError> {
        let namespaces = Namespace::UPFS
            .iter()
            .map(|&ns| NamespaceMatcher::new(ns, &config))
            .collect::<Result<_, _>>()?;
        Ok(Self { config, namespaces, malformed: 0 })
    }

    pub fn config(&self) -> &MatcherConfig {
        &self.config
    }

    pub fn namespace(&self, ns: Namespace) -> Option<&NamespaceMatcher> {
        self.namespaces.get(ns.index()).filter(|_| ns.is_upf())
    }

    pub fn on_event(&mut self, event: &ProbeEvent) -> Result<Option<MatchedPair>, MatcherError> {
        if let ProbeEvent::Pfcp { .. } = event {
            return Err(MatcherError::WrongEventKind(event.point()));
        }
        let ns = event.namespace();
        if !ns.is_upf() {
            return Err(MatcherError::WrongNamespace(ns));
        }
        self.namespaces[ns.index()].on_event(event)
    }

    /// Counts a trace line that could not be parsed.
    pub fn record_malformed(&mut self) {
        self.malformed += 1;
    }

    pub fn flush(&mut self, now: u64) -> Result<Vec<Expiration>, MatcherError> {
        for m in &self.namespaces {
            m.check_flush(now)?;
        }
        let mut out = Vec::new();
        for m in &mut self.namespaces {
            out.extend(m.flush(now)?);
        }
        Ok(out)
    }

    pub fn drain(&mut self) -> Vec<Expiration> {
        self.namespaces.iter_mut().flat_map(|m| m.drain()).collect()
    }

    /// Largest clock across namespaces.
    pub fn clock(&self) -> u64 {
        self.namespaces.iter().map(|m| m.clock).max().unwrap_or(0)
    }

    pub fn accounting(&self) -> MatchAccounting {
        let mut total = MatchAccounting { malformed: self.malformed, ..Default::default() };
        for m in &self.namespaces {
            total += m.accounting();
        }
        total
    }
}
