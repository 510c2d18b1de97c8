use std::time::Duration;

use proptest::prelude::*;

use slicelat::codec::{emit_trace_line, parse_trace_line, Direction, FlowKey, Namespace, ProbeEvent};
use slicelat::par::Execution;
use slicelat::pfcp::PfcpTracker;
use slicelat::{DelayStats, Matcher, MatcherConfig};
use slicelat_oracle::{exact_quantile, match_events, BruteForcePfcp};

fn forwarding_event() -> impl Strategy<Value = ProbeEvent> {
    // Few keys and a narrow time range so collisions, reordering, expiry and
    // eviction all occur.
    (0..3usize, 0..4u64, any::<bool>(), 1..40_000_000u64, 0..4u32).prop_map(|(ns, key, m1, ts, teid)| {
        let ns = Namespace::UPFS[ns];
        if m1 {
            ProbeEvent::M1 { ns, flow_key: FlowKey(key), teid, ts }
        } else {
            ProbeEvent::M3 { ns, flow_key: FlowKey(key), ts }
        }
    })
}

fn nearly_sorted(max: usize) -> impl Strategy<Value = Vec<ProbeEvent>> {
    prop::collection::vec(forwarding_event(), 0..max).prop_map(|mut v| {
        // Sort by a coarse bucket: mostly ordered, locally shuffled.
        v.sort_by_key(|e| e.timestamp() / 3_000_000);
        v
    })
}

fn any_event() -> impl Strategy<Value = ProbeEvent> {
    let ns = prop::sample::select(Namespace::UPFS.to_vec());
    prop_oneof![
        (ns.clone(), any::<u64>(), any::<u32>(), 1..=u64::MAX)
            .prop_map(|(ns, k, teid, ts)| ProbeEvent::M1 { ns, flow_key: FlowKey(k), teid, ts }),
        (ns, any::<u64>(), 1..=u64::MAX).prop_map(|(ns, k, ts)| ProbeEvent::M3 { ns, flow_key: FlowKey(k), ts }),
        (any::<bool>(), 0..(1u32 << 24), any::<u8>(), 1..=u64::MAX).prop_map(|(s, sequence, message_type, ts)| {
            ProbeEvent::Pfcp { dir: if s { Direction::Send } else { Direction::Recv }, sequence, message_type, ts }
        }),
    ]
}

fn config() -> impl Strategy<Value = MatcherConfig> {
    (1u64..20, 1usize..12, 0u64..3).prop_map(|(w, capacity, s)| MatcherConfig {
        window: Duration::from_millis(w),
        capacity,
        reorder_slack: Duration::from_micros(s * 400).min(Duration::from_millis(w) / 2),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn trace_lines_round_trip(e in any_event()) {
        let line = emit_trace_line(&e).unwrap();
        prop_assert_eq!(parse_trace_line(&line).unwrap(), e);
        let raw = format!("  task-1 [000] .... 1.0: bpf_trace_printk: TCBPF: {line}\n");
        prop_assert_eq!(parse_trace_line(&raw).unwrap(), e);
    }

    #[test]
    fn trace_parser_never_panics(s in "\\PC{0,120}") {
        let _ = parse_trace_line(&s);
    }

    #[test]
    fn matcher_agrees_with_oracle(events in nearly_sorted(300), cfg in config()) {
        let mut m = Matcher::new(cfg).unwrap();
        let mut got: Vec<_> = events.iter().filter_map(|e| m.on_event(e).unwrap()).collect();
        m.flush(m.clock()).unwrap();
        let (mut want, want_acct) = match_events(&events, &cfg);
        got.sort();
        want.sort();
        prop_assert_eq!(got, want);
        let acct = m.accounting();
        prop_assert_eq!(acct, want_acct);
        prop_assert!(acct.conservation_holds());
        prop_assert!(acct.match_rate <= 1.0);
    }

    #[test]
    fn drain_resolves_everything(events in nearly_sorted(200), cfg in config()) {
        let mut m = Matcher::new(cfg).unwrap();
        for e in &events {
            m.on_event(e).unwrap();
        }
        m.drain();
        let a = m.accounting();
        prop_assert_eq!((a.pending_m1, a.pending_m3), (0, 0));
        prop_assert!(a.conservation_holds());
    }

    #[test]
    fn pfcp_agrees_with_oracle(
        raw in prop::collection::vec((any::<bool>(), 0u32..6, prop::sample::select(vec![50u8, 51, 52, 53, 54, 55]), 1u64..3_000_000_000), 0..200)
    ) {
        let mut events: Vec<ProbeEvent> = raw
            .into_iter()
            .map(|(s, sequence, message_type, ts)| ProbeEvent::Pfcp {
                dir: if s { Direction::Send } else { Direction::Recv },
                sequence,
                message_type,
                ts,
            })
            .collect();
        events.sort_by_key(ProbeEvent::timestamp);
        let mut t = PfcpTracker::new();
        let mut o = BruteForcePfcp::new(PfcpTracker::DEFAULT_TIMEOUT);
        let mut clock = 0;
        for e in &events {
            clock = clock.max(e.timestamp());
            t.timeout_sweep(clock, PfcpTracker::DEFAULT_TIMEOUT);
            prop_assert_eq!(t.on_event(e).unwrap(), o.on_event(e));
        }
        prop_assert_eq!(t.accounting(), o.accounting());
        prop_assert!(t.accounting().conservation_holds());
    }

    #[test]
    fn histogram_quantiles_within_one_bin(samples in prop::collection::vec(0u64..50_000_000, 1..2_000), q in 0.0f64..=1.0) {
        let stats = DelayStats::from_samples(&samples, Execution::Sequential);
        let mut sorted = samples.clone();
        sorted.sort_unstable();
        let exact = exact_quantile(&sorted, q);
        let got = stats.quantile(q).unwrap();
        let width = stats.layout().bin_width(exact);
        prop_assert!(got >= exact && got - exact < width.max(1), "got {} exact {} width {}", got, exact, width);
    }

    #[test]
    fn merge_equals_bulk_ingest(a in prop::collection::vec(0u64..1u64 << 40, 0..500), b in prop::collection::vec(0u64..1u64 << 40, 0..500)) {
        let mut left = DelayStats::from_samples(&a, Execution::Sequential);
        left.merge(&DelayStats::from_samples(&b, Execution::Sequential)).unwrap();
        let all: Vec<u64> = a.iter().chain(&b).copied().collect();
        let bulk = DelayStats::from_samples(&all, Execution::Parallel);
        prop_assert_eq!(left, bulk);
    }
}
