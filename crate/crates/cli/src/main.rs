mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use slicelat::synth::LoadLevel;
use slicelat::Slice;

use crate::config::{ConfigFile, ExperimentConfig, Mode};
use crate::error::CliError;

/// Per-slice UPF forwarding latency and PFCP round-trip measurement.
#[derive(Debug, Parser)]
#[command(name = "slicelat", version, about)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Matching window for M1/M3 correlation (e.g. "10ms").
    #[arg(long, global = true, value_parser = humantime::parse_duration)]
    window: Option<Duration>,
    /// Pending M1 entries kept per namespace.
    #[arg(long, global = true)]
    capacity: Option<usize>,
    /// Tolerated out-of-order arrival between probe points (e.g. "1ms").
    #[arg(long, global = true, value_parser = humantime::parse_duration)]
    reorder_slack: Option<Duration>,
    /// Seed for synthetic generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Attach probes to running UPF namespaces and stream live events.
    Attach(AttachArgs),
    /// Replay recorded trace files ("-" for stdin) into datasets.
    Replay(ReplayArgs),
    /// Generate synthetic traces with ground truth and run them through the pipeline.
    Synth(SynthArgs),
    /// Print aggregate statistics of pair and PFCP datasets as JSON.
    Stats(StatsArgs),
    /// Render latency tables and CDF series from datasets.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Trace files, processed in order as one stream; "-" reads stdin.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Load label written to the datasets.
    #[arg(long)]
    pub load: Option<String>,
    /// Outstanding PFCP requests older than this are discarded.
    #[arg(long, value_parser = humantime::parse_duration)]
    pub pfcp_timeout: Option<Duration>,
    /// Count retransmitted PFCP transactions in RTT statistics.
    #[arg(long)]
    pub include_retransmitted: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Load levels to generate (comma separated).
    #[arg(long = "load", value_delimiter = ',')]
    pub loads: Vec<LoadLevel>,
    /// Slices to generate (comma separated).
    #[arg(long = "slice", value_delimiter = ',')]
    pub slices: Vec<Slice>,
    /// Run length per load level.
    #[arg(long, value_parser = humantime::parse_duration)]
    pub duration: Option<Duration>,
    #[arg(long)]
    pub m1_loss: Option<f64>,
    #[arg(long)]
    pub m3_loss: Option<f64>,
    /// Probability that an event is delayed in the output stream.
    #[arg(long)]
    pub reorder: Option<f64>,
    /// Maximum extra delay of a reordered event.
    #[arg(long, value_parser = humantime::parse_duration)]
    pub reorder_jitter: Option<Duration>,
    #[arg(long)]
    pub duplicate: Option<f64>,
    /// PFCP modification requests per second.
    #[arg(long)]
    pub pfcp_rate: Option<f64>,
    /// Also write the generated trace lines.
    #[arg(long)]
    pub emit_trace: bool,
    /// Process load levels one after another instead of in parallel.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Pair datasets.
    #[arg(long = "pairs")]
    pub pairs: Vec<PathBuf>,
    /// PFCP transaction datasets.
    #[arg(long = "pfcp")]
    pub pfcp: Vec<PathBuf>,
    #[arg(long)]
    pub include_retransmitted: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Pair datasets.
    #[arg(long = "pairs")]
    pub pairs: Vec<PathBuf>,
    /// PFCP transaction datasets.
    #[arg(long = "pfcp")]
    pub pfcp: Vec<PathBuf>,
    /// Points per CDF series.
    #[arg(long)]
    pub cdf_points: Option<usize>,
    #[arg(long)]
    pub include_retransmitted: bool,
}

#[derive(Debug, Args)]
pub struct AttachArgs {
    /// UPF process to attach to, as upfN=PID (repeatable).
    #[arg(long = "pid", value_parser = commands::attach::parse_pid_arg)]
    pub pids: Vec<(slicelat::Namespace, u32)>,
    /// Compiled classifier object with m1_upfN / m3_upfN sections.
    #[arg(long)]
    pub probe_object: Option<PathBuf>,
    /// N3-facing interface inside each UPF namespace.
    #[arg(long)]
    pub n3_iface: Option<String>,
    /// TUN interface inside each UPF namespace.
    #[arg(long)]
    pub tun_iface: Option<String>,
    /// Kernel trace buffer size in KB.
    #[arg(long)]
    pub buffer_kb: Option<u64>,
    /// Tracefs mount point.
    #[arg(long)]
    pub tracing_dir: Option<PathBuf>,
    /// Load label written to the datasets.
    #[arg(long)]
    pub load: Option<String>,
    /// Print the attach plan without touching the system.
    #[arg(long)]
    pub dry_run: bool,
}

fn resolve(global: &GlobalArgs, mode: Mode) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig { mode: Some(mode), ..Default::default() };
    if let Some(path) = &global.config {
        cfg.apply_file(ConfigFile::load(path)?)?;
    }
    let m = &mut cfg.pipeline.matcher;
    if let Some(v) = global.window {
        m.window = v;
    }
    if let Some(v) = global.capacity {
        m.capacity = v;
    }
    if let Some(v) = global.reorder_slack {
        m.reorder_slack = v;
    }
    if let Some(v) = global.seed {
        cfg.synth.seed = v;
    }
    if let Some(v) = &global.out {
        cfg.out = v.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Replay(args) => commands::replay::run(resolve(&cli.global, Mode::Replay)?, args),
        Command::Synth(args) => commands::synth::run(resolve(&cli.global, Mode::Synth)?, args),
        Command::Stats(args) => commands::stats::run(resolve(&cli.global, Mode::Replay)?, args),
        Command::Report(args) => commands::report::run(resolve(&cli.global, Mode::Replay)?, args),
        Command::Attach(args) => commands::attach::run(resolve(&cli.global, Mode::Live)?, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("slicelat: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
