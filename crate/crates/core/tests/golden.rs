//! Golden pipeline: a bundled 1000-line trace must replay to byte-identical
//! CSVs. The expected files are produced by the brute-force reference, not by
//! the streaming pipeline under test.
//!
//! Regenerate with `cargo test -p slicelat --test golden -- --ignored`.

use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use slicelat::codec::{emit_trace_line, ProbeEvent};
use slicelat::pipeline::{Pipeline, PipelineConfig};
use slicelat::synth::{
    default_profiles, generate_pfcp, Emission, ImpairmentModel, LoadCondition, PfcpModel, TraceGenerator,
};
use slicelat::MatcherConfig;

const LINES: usize = 1000;
const LOAD: &str = "Medium";

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn build_trace() -> String {
    let load = LoadCondition::medium().with_duration(Duration::from_secs(2));
    let imp = ImpairmentModel {
        m1_loss_prob: 0.02,
        m3_loss_prob: 0.03,
        reorder_prob: 0.04,
        reorder_jitter: Duration::from_millis(3),
        duplicate_prob: 0.01,
    };
    let mut events: Vec<ProbeEvent> = TraceGenerator::new(&default_profiles(&load), &load, &imp, 2024)
        .unwrap()
        .filter_map(|e| match e {
            Emission::Event(ev) => Some(ev),
            Emission::Truth(_) => None,
        })
        .take(LINES - 40)
        .collect();
    let span = events.iter().map(ProbeEvent::timestamp).max().unwrap();

    // Dense PFCP traffic over the same span, including retransmissions.
    let pfcp = PfcpModel { rate: 2_000.0, retransmit_prob: 0.2, ..Default::default() };
    let pfcp_events = generate_pfcp(&load, &pfcp, 7).unwrap().events;
    events.extend(pfcp_events.into_iter().filter(|e| e.timestamp() <= span).take(30));
    events.sort_by_key(ProbeEvent::timestamp);

    let mut lines: Vec<String> = events
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let body = emit_trace_line(e).unwrap();
            if i % 7 == 3 {
                format!("      slicelat-4711  [002] ..s1. {}.{:06}: bpf_trace_printk: TCBPF: {body}", i, i * 37 % 1_000_000)
            } else {
                body
            }
        })
        .collect();
    let junk = [
        "M1 ns=upf1 key=00000000DEADBEEF teid=0000abcd ts=5",
        "M3 ns=upf4 key=00000000deadbeef ts=5",
        "P4 dir=X seq=1 mt=52 ts=5",
        "M1 ns=upf1 key=00000000deadbeef teid=0000abcd ts=05",
        "hello world",
        "TCBPF:",
        "M3 ns=upf2 key=00000000deadbeef ts=0",
        "P4 dir=S seq=16777216 mt=52 ts=9",
        "M3 ns=upf2 key=00000000deadbeef",
        "M1 ns=smf key=00000000deadbeef teid=0000abcd ts=5",
    ];
    for (k, j) in junk.iter().enumerate() {
        lines.insert(50 + k * 90, (*j).to_owned());
    }
    lines.truncate(LINES);
    assert_eq!(lines.len(), LINES);
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

fn replay(trace: &str) -> (Vec<u8>, Vec<u8>, String) {
    let cfg = PipelineConfig { load: LOAD.into(), ..Default::default() };
    let mut p = Pipeline::new(cfg, Some(Vec::new()), Some(Vec::new())).unwrap();
    p.run(trace.as_bytes(), None).unwrap();
    let (summary, pairs, pfcp) = p.finish().unwrap();
    (pairs.unwrap(), pfcp.unwrap(), summary.to_json())
}

#[test]
#[ignore = "rewrites the bundled golden fixtures"]
fn regenerate_golden_fixtures() {
    let trace = build_trace();
    let (pairs, pfcp, _, _) = slicelat_oracle::reference_replay(
        &trace,
        LOAD,
        &MatcherConfig::default(),
        slicelat::PfcpTracker::DEFAULT_TIMEOUT,
    );
    let dir = fixtures();
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join("golden_trace.txt"), &trace).unwrap();
    fs::write(dir.join("golden_pairs.csv"), pairs).unwrap();
    fs::write(dir.join("golden_pfcp.csv"), pfcp).unwrap();
    let (_, _, json) = replay(&trace);
    fs::write(dir.join("golden_accounting.json"), json).unwrap();
}

#[test]
fn generator_still_produces_the_bundled_trace() {
    let bundled = fs::read_to_string(fixtures().join("golden_trace.txt")).unwrap();
    assert_eq!(build_trace(), bundled);
}

#[test]
fn golden_pipeline_is_byte_identical() {
    let dir = fixtures();
    let trace = fs::read_to_string(dir.join("golden_trace.txt")).unwrap();
    assert_eq!(trace.lines().count(), LINES);
    let want_pairs = fs::read(dir.join("golden_pairs.csv")).unwrap();
    let want_pfcp = fs::read(dir.join("golden_pfcp.csv")).unwrap();
    let want_json = fs::read_to_string(dir.join("golden_accounting.json")).unwrap();

    let first = replay(&trace);
    let second = replay(&trace);
    assert_eq!(first, second);
    assert_eq!(first.0, want_pairs);
    assert_eq!(first.1, want_pfcp);
    assert_eq!(first.2, want_json);
}

#[test]
fn golden_accounting_matches_reference() {
    let trace = fs::read_to_string(fixtures().join("golden_trace.txt")).unwrap();
    let (_, _, m, p) = slicelat_oracle::reference_replay(
        &trace,
        LOAD,
        &MatcherConfig::default(),
        slicelat::PfcpTracker::DEFAULT_TIMEOUT,
    );
    let cfg = PipelineConfig { load: LOAD.into(), ..Default::default() };
    let mut pipe: Pipeline<Vec<u8>> = Pipeline::new(cfg, None, None).unwrap();
    pipe.run(trace.as_bytes(), None).unwrap();
    let (s, _, _) = pipe.finish().unwrap();
    assert_eq!(s.matching, m);
    assert_eq!(s.pfcp, p);
    assert_eq!(s.malformed, 10);
    assert!(m.conservation_holds() && p.conservation_holds());
    assert!(m.matched > 0 && m.m1_expired + m.m3_orphaned > 0 && p.retransmissions > 0);
}
