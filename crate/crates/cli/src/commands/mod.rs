pub mod attach;
pub mod replay;
pub mod report;
pub mod stats;
pub mod synth;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::Serialize;
use slicelat::pipeline::{Pipeline, PipelineConfig, PipelineSummary};
use slicelat::DelayStats;

use crate::error::CliError;

pub const PAIRS_FILE: &str = "pairs.csv";
pub const PFCP_FILE: &str = "pfcp.csv";
pub const ACCOUNTING_FILE: &str = "accounting.json";
pub const STATS_FILE: &str = "stats.json";

pub fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(CliError::io(path))
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(CliError::io(path))
}

pub fn write_string(path: &Path, s: &str) -> Result<(), CliError> {
    fs::write(path, s).map_err(CliError::io(path))
}

/// Flag raised by SIGINT/SIGTERM. Only the first call installs the handler.
pub fn interrupt_flag() -> Arc<AtomicBool> {
    static FLAG: std::sync::OnceLock<Arc<AtomicBool>> = std::sync::OnceLock::new();
    FLAG.get_or_init(|| {
        let flag = Arc::new(AtomicBool::new(false));
        let f = Arc::clone(&flag);
        // Without a handler the default disposition still terminates the
        // process, so failure here only costs the partial-output guarantee.
        if let Err(e) = ctrlc::set_handler(move || f.store(true, Ordering::Relaxed)) {
            eprintln!("slicelat: warning: cannot install interrupt handler: {e}");
        }
        flag
    })
    .clone()
}

#[derive(Serialize)]
struct StatsJson<'a> {
    slices: BTreeMap<&'static str, &'a DelayStats>,
    pfcp_classes: BTreeMap<&'static str, &'a DelayStats>,
}

/// Mergeable histograms of a run, for later aggregation across runs.
pub fn stats_json(summary: &PipelineSummary) -> String {
    let json = StatsJson {
        slices: summary.slice_stats.iter().map(|(s, d)| (s.as_str(), d)).collect(),
        pfcp_classes: summary.pfcp_stats.iter().map(|(c, d)| (c.as_str(), d)).collect(),
    };
    let mut s = serde_json::to_string(&json).expect("stats serialise");
    s.push('\n');
    s
}

/// Streams `inputs` through one pipeline into `pairs.csv`, `pfcp.csv`,
/// `accounting.json` and `stats.json` under `out`. Stops early, still writing
/// everything seen so far, once `interrupt` is raised.
pub fn run_pipeline(
    config: PipelineConfig,
    out: &Path,
    inputs: Vec<(PathBuf, Box<dyn BufRead>)>,
    interrupt: Option<&AtomicBool>,
) -> Result<PipelineSummary, CliError> {
    ensure_dir(out)?;
    let pairs_path = out.join(PAIRS_FILE);
    let pfcp_path = out.join(PFCP_FILE);
    let pairs: Box<dyn Write> = Box::new(create(&pairs_path)?);
    let pfcp: Box<dyn Write> = Box::new(create(&pfcp_path)?);
    let mut pipeline = Pipeline::new(config, Some(pairs), Some(pfcp)).map_err(CliError::pipeline(out))?;
    for (path, reader) in inputs {
        pipeline.run(reader, interrupt).map_err(CliError::pipeline(&path))?;
        if interrupt.is_some_and(|f| f.load(Ordering::Relaxed)) {
            break;
        }
    }
    let (summary, pairs, pfcp) = pipeline.finish().map_err(CliError::pipeline(out))?;
    if let Some(mut w) = pairs {
        w.flush().map_err(CliError::io(&pairs_path))?;
    }
    if let Some(mut w) = pfcp {
        w.flush().map_err(CliError::io(&pfcp_path))?;
    }
    write_string(&out.join(ACCOUNTING_FILE), &summary.to_json())?;
    write_string(&out.join(STATS_FILE), &stats_json(&summary))?;
    Ok(summary)
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
pub fn emit(s: &str) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    match out.write_all(s.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(CliError::Io { path: "<stdout>".into(), source: e }),
        _ => Ok(()),
    }
}

pub fn print_summary(label: &str, s: &PipelineSummary) {
    let m = &s.matching;
    eprintln!(
        "{label}: lines={} malformed={} matched={} match_rate={:.6} pfcp_transactions={}{}",
        s.lines,
        s.malformed,
        m.matched,
        m.match_rate,
        s.pfcp.transactions,
        if s.interrupted { " (interrupted)" } else { "" }
    );
}

/// Byte stream fed by a reader thread; reports EOF once `interrupt` is
/// raised even while the underlying source is idle.
pub struct InterruptibleReader {
    rx: Receiver<io::Result<Vec<u8>>>,
    chunk: Vec<u8>,
    pos: usize,
    interrupt: Arc<AtomicBool>,
}

impl InterruptibleReader {
    pub fn spawn<R: Read + Send + 'static>(mut source: R, interrupt: Arc<AtomicBool>) -> Self {
        // Bounded hand-off keeps memory fixed when the consumer falls behind;
        // the kernel buffer absorbs the backlog meanwhile.
        let (tx, rx) = mpsc::sync_channel(64);
        thread::spawn(move || loop {
            let mut buf = vec![0; 1 << 16];
            match source.read(&mut buf) {
                Ok(0) => return,
                Ok(n) => {
                    buf.truncate(n);
                    if tx.send(Ok(buf)).is_err() {
                        return;
                    }
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => {
                    let _ = tx.send(Err(e));
                    return;
                }
            }
        });
        Self { rx, chunk: Vec::new(), pos: 0, interrupt }
    }
}

impl Read for InterruptibleReader {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        while self.pos == self.chunk.len() {
            if self.interrupt.load(Ordering::Relaxed) {
                return Ok(0);
            }
            match self.rx.recv_timeout(Duration::from_millis(100)) {
                Ok(chunk) => {
                    self.chunk = chunk?;
                    self.pos = 0;
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => return Ok(0),
            }
        }
        let n = out.len().min(self.chunk.len() - self.pos);
        out[..n].copy_from_slice(&self.chunk[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interruptible_reader_stops_on_flag() {
        let mut r = InterruptibleReader::spawn(&b"abc"[..], Arc::new(AtomicBool::new(false)));
        let mut s = String::new();
        r.read_to_string(&mut s).unwrap();
        assert_eq!(s, "abc");

        // A source that never produces data still ends once interrupted.
        let (_keep, rx) = std::os::unix::net::UnixStream::pair().unwrap();
        let mut r = InterruptibleReader::spawn(rx, Arc::new(AtomicBool::new(true)));
        assert_eq!(r.read(&mut [0; 8]).unwrap(), 0);
    }
}
