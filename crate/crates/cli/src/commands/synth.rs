use std::fs::File;
use std::hash::{BuildHasher, BuildHasherDefault, DefaultHasher};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use slicelat::codec::write_trace_line;
use slicelat::dataset::{PairWriter, PfcpWriter};
use slicelat::par::{self, Execution};
use slicelat::pipeline::{Pipeline, PipelineSummary};
use slicelat::report::file_label;
use slicelat::synth::{generate_pfcp, Emission, LoadCondition, LoadLevel, SliceProfile, TraceGenerator};
use slicelat::ProbeEvent;

use crate::commands::{
    create, emit, ensure_dir, stats_json, write_string, ACCOUNTING_FILE, PAIRS_FILE, PFCP_FILE, STATS_FILE,
};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::SynthArgs;

pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const PFCP_GROUND_TRUTH_FILE: &str = "pfcp_ground_truth.csv";
pub const TRACE_FILE: &str = "trace.txt";

/// Offset separating the PFCP generator's seed from the forwarding one.
const PFCP_SEED_OFFSET: u64 = 0x5046_4350;

/// Seed of the forwarding trace for `level`; each load level gets its own
/// stream so levels can be generated independently and in parallel.
pub fn level_seed(seed: u64, level: LoadLevel) -> u64 {
    seed.wrapping_add(LoadLevel::ALL.iter().position(|&l| l == level).expect("known level") as u64)
}

/// Order-independent digest of the lines written through a writer, used to
/// compare datasets as multisets without holding them in memory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct LineDigest {
    lines: u64,
    sum: u64,
    xor: u64,
    sum_sq: u64,
}

impl LineDigest {
    fn add(&mut self, line: &[u8]) {
        let h = BuildHasherDefault::<DefaultHasher>::default().hash_one(line);
        self.lines += 1;
        self.sum = self.sum.wrapping_add(h);
        self.xor ^= h;
        self.sum_sq = self.sum_sq.wrapping_add(h.wrapping_mul(h));
    }
}

struct DigestWriter<W> {
    inner: W,
    line: Vec<u8>,
    digest: LineDigest,
}

impl<W: Write> DigestWriter<W> {
    fn new(inner: W) -> Self {
        Self { inner, line: Vec::new(), digest: LineDigest::default() }
    }
}

impl<W: Write> Write for DigestWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        for &b in &buf[..n] {
            if b == b'\n' {
                self.digest.add(&self.line);
                self.line.clear();
            } else {
                self.line.push(b);
            }
        }
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

type Sink = DigestWriter<BufWriter<File>>;

fn sink(path: &Path) -> Result<Sink, CliError> {
    Ok(DigestWriter::new(create(path)?))
}

fn finish_sink(mut w: Sink, path: &Path) -> Result<LineDigest, CliError> {
    w.flush().map_err(CliError::io(path))?;
    Ok(w.digest)
}

#[derive(Debug)]
struct LoadOutcome {
    level: LoadLevel,
    dir: PathBuf,
    summary: PipelineSummary,
    truth_pairs: u64,
    pairs_exact: bool,
    pfcp_exact: bool,
}

fn run_level(cfg: &ExperimentConfig, level: LoadLevel) -> Result<LoadOutcome, CliError> {
    let s = &cfg.synth;
    let load = LoadCondition::new(level).with_duration(s.duration);
    let profiles: Vec<SliceProfile> = s.slices.iter().map(|&sl| SliceProfile::for_slice(sl, &load)).collect();
    let config_err = |e: slicelat::synth::SynthError| CliError::Config(e.to_string());
    let generator = TraceGenerator::new(&profiles, &load, &s.impairments, level_seed(s.seed, level)).map_err(config_err)?;
    let pfcp = generate_pfcp(&load, &s.pfcp, level_seed(s.seed, level).wrapping_add(PFCP_SEED_OFFSET)).map_err(config_err)?;

    let dir = cfg.out.join(file_label(level.as_str()));
    ensure_dir(&dir)?;
    let label = level.as_str();
    let mut pipeline_cfg = cfg.pipeline.clone();
    pipeline_cfg.load = label.to_owned();

    let (pairs_path, pfcp_path) = (dir.join(PAIRS_FILE), dir.join(PFCP_FILE));
    let mut pipeline = Pipeline::new(pipeline_cfg, Some(sink(&pairs_path)?), Some(sink(&pfcp_path)?))
        .map_err(CliError::pipeline(&dir))?;
    let truth_path = dir.join(GROUND_TRUTH_FILE);
    let mut truth = PairWriter::new(sink(&truth_path)?).map_err(CliError::dataset(&truth_path))?;
    let trace_path = dir.join(TRACE_FILE);
    let mut trace = if s.emit_trace { Some(create(&trace_path)?) } else { None };

    let mut push = |ev: &ProbeEvent, pipeline: &mut Pipeline<Sink>| -> Result<(), CliError> {
        if let Some(t) = &mut trace {
            write_trace_line(t, ev).map_err(CliError::io(&trace_path))?;
        }
        pipeline.push_event(ev).map_err(CliError::pipeline(&dir))
    };

    // PFCP events are interleaved into the forwarding stream by timestamp.
    let mut control = pfcp.events.iter().peekable();
    let mut truth_pairs = 0u64;
    for emission in generator {
        match emission {
            Emission::Event(ev) => {
                while let Some(c) = control.next_if(|c| c.timestamp() <= ev.timestamp()) {
                    push(c, &mut pipeline)?;
                }
                push(&ev, &mut pipeline)?;
            }
            Emission::Truth(pair) => {
                let slice = pair.namespace.slice().expect("UPF namespace");
                truth.write(slice, label, &pair).map_err(CliError::dataset(&truth_path))?;
                truth_pairs += 1;
            }
        }
    }
    for c in control {
        push(c, &mut pipeline)?;
    }
    if let Some(mut t) = trace {
        t.flush().map_err(CliError::io(&trace_path))?;
    }

    let (summary, pairs, transactions) = pipeline.finish().map_err(CliError::pipeline(&dir))?;
    let pairs_digest = finish_sink(pairs.expect("pairs sink"), &pairs_path)?;
    let pfcp_digest = finish_sink(transactions.expect("pfcp sink"), &pfcp_path)?;
    let truth_digest = finish_sink(truth.into_inner().map_err(CliError::dataset(&truth_path))?, &truth_path)?;

    let pfcp_truth_path = dir.join(PFCP_GROUND_TRUTH_FILE);
    let mut pfcp_truth = PfcpWriter::new(sink(&pfcp_truth_path)?).map_err(CliError::dataset(&pfcp_truth_path))?;
    for tx in &pfcp.transactions {
        pfcp_truth.write(label, tx).map_err(CliError::dataset(&pfcp_truth_path))?;
    }
    let pfcp_truth_digest =
        finish_sink(pfcp_truth.into_inner().map_err(CliError::dataset(&pfcp_truth_path))?, &pfcp_truth_path)?;

    write_string(&dir.join(ACCOUNTING_FILE), &summary.to_json())?;
    write_string(&dir.join(STATS_FILE), &stats_json(&summary))?;
    Ok(LoadOutcome {
        level,
        dir,
        summary,
        truth_pairs,
        pairs_exact: pairs_digest == truth_digest,
        pfcp_exact: pfcp_digest == pfcp_truth_digest,
    })
}

pub fn run(mut cfg: ExperimentConfig, args: SynthArgs) -> Result<(), CliError> {
    let s = &mut cfg.synth;
    if !args.loads.is_empty() {
        s.loads = args.loads;
    }
    if !args.slices.is_empty() {
        s.slices = args.slices;
    }
    let imp = &mut s.impairments;
    for (slot, v) in [
        (&mut imp.m1_loss_prob, args.m1_loss),
        (&mut imp.m3_loss_prob, args.m3_loss),
        (&mut imp.reorder_prob, args.reorder),
        (&mut imp.duplicate_prob, args.duplicate),
        (&mut s.pfcp.rate, args.pfcp_rate),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    if let Some(j) = args.reorder_jitter {
        s.impairments.reorder_jitter = j;
    }
    if let Some(d) = args.duration {
        s.duration = d;
    }
    s.emit_trace |= args.emit_trace;
    s.loads.dedup();
    cfg.validate()?;
    if cfg.synth.loads.is_empty() || cfg.synth.slices.is_empty() {
        return Err(CliError::Config("at least one load level and one slice are required".into()));
    }

    let exec = if args.sequential { Execution::Sequential } else { Execution::Parallel };
    let outcomes = par::map(exec, &cfg.synth.loads, |&level| run_level(&cfg, level));
    let lossless = cfg.synth.impairments.is_none();
    let mut diverged = Vec::new();
    for outcome in outcomes {
        let o = outcome?;
        let verdict = match (o.pairs_exact && o.pfcp_exact, lossless) {
            (true, _) => "identical to ground truth",
            (false, true) => "DIVERGES from ground truth",
            (false, false) => "differs from ground truth (impairments active)",
        };
        emit(&format!(
            "{}: match_rate={:.6} matched={} ground_truth={} pfcp_transactions={} self_check: {verdict} [{}]\n",
            o.level,
            o.summary.matching.match_rate,
            o.summary.matching.matched,
            o.truth_pairs,
            o.summary.pfcp.transactions,
            o.dir.display()
        ))?;
        if lossless && !(o.pairs_exact && o.pfcp_exact) {
            diverged.push(o.level.to_string());
        }
    }
    if !diverged.is_empty() {
        return Err(CliError::SelfCheck(format!(
            "matched output differs from ground truth for {} with impairments disabled",
            diverged.join(", ")
        )));
    }
    Ok(())
}
