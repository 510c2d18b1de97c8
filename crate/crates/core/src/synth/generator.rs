use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet, VecDeque};
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DelaySampler, ImpairmentModel, LoadCondition, SliceProfile, SynthError, Transport};
use crate::codec::{flow_key_for, FiveTuple, Namespace, ProbeEvent, Slice, IPPROTO_TCP, IPPROTO_UDP};
use crate::matcher::{duration_ns, MatchedPair};

/// Timestamp of the first generated packet.
pub const START_NS: u64 = 1_000_000;

/// One item of a generated stream: a probe event, or the ground-truth pair
/// for a packet whose M1 and M3 were both emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Emission {
    Event(ProbeEvent),
    Truth(MatchedPair),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SyntheticTrace {
    pub events: Vec<ProbeEvent>,
    pub ground_truth: Vec<MatchedPair>,
}

impl FromIterator<Emission> for SyntheticTrace {
    fn from_iter<I: IntoIterator<Item = Emission>>(iter: I) -> Self {
        let mut trace = SyntheticTrace::default();
        for e in iter {
            match e {
                Emission::Event(ev) => trace.events.push(ev),
                Emission::Truth(p) => trace.ground_truth.push(p),
            }
        }
        trace
    }
}

struct Pending {
    key: u64,
    seq: u64,
    event: ProbeEvent,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        (self.key, self.seq) == (other.key, other.seq)
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.key, self.seq).cmp(&(other.key, other.seq))
    }
}

struct Source {
    ns: Namespace,
    tuples: Vec<FiveTuple>,
    ip_ids: Vec<u16>,
    base_teid: u32,
    len_range: (u16, u16),
    sampler: DelaySampler,
    burst_len: u64,
    burst_period_ns: f64,
    intra_burst_ns: f64,
    jitter_ns: f64,
    next: u64,
    count: u64,
}

impl Source {
    fn new(profile: &SliceProfile, load: &LoadCondition) -> Result<Self, SynthError> {
        profile.validate()?;
        let period = 1e9 / profile.packet_rate;
        let burst_len = profile.transport.burst_len();
        let intra = profile.transport.burst_spacing_ns().min(period);
        let jitter = 0.2 * if burst_len > 1 { intra } else { period };
        let count = (profile.packet_rate * load.duration().as_secs_f64()).round() as u64;
        let idx = profile.slice as u8;
        let (tuples, ip_ids) = (0..profile.flows)
            .map(|f| {
                let src = Ipv4Addr::from(u32::from(Ipv4Addr::new(10, 60 + idx, 0, 0)) + f + 2);
                let (protocol, src_port, dst_port) = match profile.transport {
                    Transport::UdpCbr => (IPPROTO_UDP, 40_000 + (f % 20_000) as u16, 5201),
                    Transport::UdpCalls => (IPPROTO_UDP, 5060, 5060),
                    Transport::TcpLike => (IPPROTO_TCP, 40_000 + (f % 20_000) as u16, 80),
                };
                let tuple = FiveTuple { src_addr: src, dst_addr: Ipv4Addr::new(10, 46, 0, idx + 2), protocol, src_port, dst_port };
                (tuple, (f.wrapping_mul(977) & 0xffff) as u16)
            })
            .unzip();
        Ok(Source {
            ns: profile.slice.namespace(),
            tuples,
            ip_ids,
            base_teid: profile.base_teid,
            len_range: profile.packet_len,
            sampler: profile.delay_model.sampler()?,
            burst_len,
            burst_period_ns: period * burst_len as f64,
            intra_burst_ns: intra,
            jitter_ns: jitter,
            next: 0,
            count,
        })
    }

    /// Lower bound on the arrival time of packet `i`; non-decreasing in `i`.
    fn nominal(&self, i: u64) -> u64 {
        let burst = (i / self.burst_len) as f64 * self.burst_period_ns;
        let within = (i % self.burst_len) as f64 * self.intra_burst_ns;
        START_NS + (burst + within) as u64
    }

    fn active(&self) -> bool {
        self.next < self.count
    }
}

/// Streaming trace generator.
///
/// Packets of every profile are produced in nominal-time order from a single
/// ChaCha8 stream seeded with `seed`; events wait in a heap keyed by their
/// (possibly perturbed) order key until no future packet can precede them, so
/// memory stays bounded by the in-flight delay horizon rather than the run
/// length.
pub struct TraceGenerator {
    rng: ChaCha8Rng,
    sources: Vec<Source>,
    impairments: ImpairmentModel,
    reorder_jitter_ns: u64,
    heap: BinaryHeap<Reverse<Pending>>,
    ready: VecDeque<Emission>,
    seq: u64,
}

impl TraceGenerator {
    pub fn new(
        profiles: &[SliceProfile],
        load: &LoadCondition,
        impairments: &ImpairmentModel,
        seed: u64,
    ) -> Result<Self, SynthError> {
        impairments.validate()?;
        if profiles.is_empty() {
            return Err(SynthError::InvalidProfile("at least one slice profile is required".into()));
        }
        let mut seen = HashSet::new();
        if !profiles.iter().all(|p| seen.insert(p.slice)) {
            return Err(SynthError::InvalidProfile("duplicate slice profile".into()));
        }
        let sources = profiles.iter().map(|p| Source::new(p, load)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            sources,
            impairments: *impairments,
            reorder_jitter_ns: duration_ns(impairments.reorder_jitter),
            heap: BinaryHeap::new(),
            ready: VecDeque::new(),
            seq: 0,
        })
    }

    /// Caps every profile at `packets` logical packets (the run length still
    /// caps it first if shorter).
    pub fn with_packet_limit(mut self, packets: u64) -> Self {
        for s in &mut self.sources {
            s.count = s.count.min(packets);
        }
        self
    }

    /// Logical packets this generator will produce in total.
    pub fn packet_count(&self) -> u64 {
        self.sources.iter().map(|s| s.count).sum()
    }

    fn push(&mut self, key: u64, event: ProbeEvent) {
        self.heap.push(Reverse(Pending { key, seq: self.seq, event }));
        self.seq += 1;
    }

    fn order_key(&mut self, ts: u64) -> u64 {
        let reordered = self.rng.random::<f64>() < self.impairments.reorder_prob;
        let extra = self.rng.random_range(0..=self.reorder_jitter_ns);
        if reordered {
            ts + extra
        } else {
            ts
        }
    }

    fn generate_packet(&mut self, which: usize) {
        let imp = self.impairments;
        let src = &mut self.sources[which];
        let i = src.next;
        src.next += 1;
        let flow = (i % src.tuples.len() as u64) as usize;
        let tuple = src.tuples[flow];
        let ip_id = src.ip_ids[flow];
        src.ip_ids[flow] = ip_id.wrapping_add(1);
        let teid = src.base_teid + flow as u32;
        let ns = src.ns;
        let (lo, hi) = src.len_range;
        let (jitter, sampler, nominal) = (src.jitter_ns, src.sampler, src.nominal(i));

        let rng = &mut self.rng;
        let t_m1 = nominal + (rng.random::<f64>() * jitter) as u64;
        let len = rng.random_range(lo..=hi);
        let delay = sampler.sample(rng);
        let t_m3 = t_m1 + delay;
        let m1_lost = rng.random::<f64>() < imp.m1_loss_prob;
        let m3_lost = rng.random::<f64>() < imp.m3_loss_prob;
        let flow_key = flow_key_for(&tuple, ip_id, len);

        let k1 = self.order_key(t_m1);
        let k3 = self.order_key(t_m3);
        let dup1 = self.rng.random::<f64>() < imp.duplicate_prob;
        let dup3 = self.rng.random::<f64>() < imp.duplicate_prob;

        let m1 = ProbeEvent::M1 { ns, flow_key, teid, ts: t_m1 };
        let m3 = ProbeEvent::M3 { ns, flow_key, ts: t_m3 };
        if !m1_lost {
            self.push(k1, m1);
            if dup1 {
                self.push(k1, m1);
            }
        }
        if !m3_lost {
            self.push(k3, m3);
            if dup3 {
                self.push(k3, m3);
            }
        }
        if !m1_lost && !m3_lost {
            self.ready.push_back(Emission::Truth(MatchedPair { namespace: ns, teid, flow_key, t_m1, t_m3, delay }));
        }
    }
}

impl Iterator for TraceGenerator {
    type Item = Emission;

    fn next(&mut self) -> Option<Emission> {
        loop {
            if let Some(e) = self.ready.pop_front() {
                return Some(e);
            }
            let next_source = self
                .sources
                .iter()
                .enumerate()
                .filter(|(_, s)| s.active())
                .map(|(i, s)| (s.nominal(s.next), i))
                .min();
            let releasable = match (self.heap.peek(), next_source) {
                (Some(Reverse(top)), Some((watermark, _))) => top.key <= watermark,
                (Some(_), None) => true,
                (None, _) => false,
            };
            if releasable {
                let Reverse(p) = self.heap.pop().expect("peeked");
                return Some(Emission::Event(p.event));
            }
            match next_source {
                Some((_, i)) => self.generate_packet(i),
                None => return None,
            }
        }
    }
}

/// Generates a complete trace for one slice profile.
pub fn generate(
    profile: &SliceProfile,
    load: &LoadCondition,
    impairments: &ImpairmentModel,
    seed: u64,
) -> Result<SyntheticTrace, SynthError> {
    Ok(TraceGenerator::new(std::slice::from_ref(profile), load, impairments, seed)?.collect())
}

/// Default profiles for all three slices under `load`.
pub fn default_profiles(load: &LoadCondition) -> Vec<SliceProfile> {
    Slice::ALL.iter().map(|&s| SliceProfile::for_slice(s, load)).collect()
}
