//! Experiment configuration: built-in defaults, then an optional TOML file,
//! then command-line flags, each layer overriding the previous one.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Deserializer};
use slicelat::pipeline::PipelineConfig;
use slicelat::synth::{ImpairmentModel, LoadLevel, PfcpModel};
use slicelat::{Namespace, Slice};

use crate::error::CliError;

fn duration<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
    let s = String::deserialize(d)?;
    humantime::parse_duration(&s).map(Some).map_err(serde::de::Error::custom)
}

fn load_levels<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<LoadLevel>>, D::Error> {
    let v = Vec::<String>::deserialize(d)?;
    v.iter().map(|s| s.parse().map_err(serde::de::Error::custom)).collect::<Result<_, _>>().map(Some)
}

fn slices<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<Slice>>, D::Error> {
    let v = Vec::<String>::deserialize(d)?;
    v.iter().map(|s| s.parse().map_err(serde::de::Error::custom)).collect::<Result<_, _>>().map(Some)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatcherSection {
    #[serde(default, deserialize_with = "duration")]
    pub window: Option<Duration>,
    pub capacity: Option<usize>,
    #[serde(default, deserialize_with = "duration")]
    pub reorder_slack: Option<Duration>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub load: Option<String>,
    #[serde(default, deserialize_with = "duration")]
    pub pfcp_timeout: Option<Duration>,
    pub include_retransmitted: Option<bool>,
    pub max_line_len: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub seed: Option<u64>,
    #[serde(default, deserialize_with = "load_levels")]
    pub loads: Option<Vec<LoadLevel>>,
    #[serde(default, deserialize_with = "slices")]
    pub slices: Option<Vec<Slice>>,
    #[serde(default, deserialize_with = "duration")]
    pub duration: Option<Duration>,
    pub m1_loss: Option<f64>,
    pub m3_loss: Option<f64>,
    pub reorder: Option<f64>,
    #[serde(default, deserialize_with = "duration")]
    pub reorder_jitter: Option<Duration>,
    pub duplicate: Option<f64>,
    pub pfcp_rate: Option<f64>,
    pub pfcp_retransmit_prob: Option<f64>,
    pub emit_trace: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    pub cdf_points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttachSection {
    pub probe_object: Option<PathBuf>,
    pub n3_iface: Option<String>,
    pub tun_iface: Option<String>,
    pub buffer_kb: Option<u64>,
    pub tracing_dir: Option<PathBuf>,
    #[serde(default)]
    pub pids: BTreeMap<String, u32>,
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub matcher: MatcherSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(default)]
    pub attach: AttachSection,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Replay,
    Synth,
    Live,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub seed: u64,
    pub loads: Vec<LoadLevel>,
    pub slices: Vec<Slice>,
    pub duration: Duration,
    pub impairments: ImpairmentModel,
    pub pfcp: PfcpModel,
    pub emit_trace: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttachSettings {
    pub probe_object: PathBuf,
    pub n3_iface: String,
    pub tun_iface: String,
    pub buffer_kb: u64,
    pub tracing_dir: PathBuf,
    pub pids: BTreeMap<Namespace, u32>,
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    pub pipeline: PipelineConfig,
    pub synth: SynthSettings,
    pub cdf_points: usize,
    pub attach: AttachSettings,
    pub out: PathBuf,
}

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_CDF_POINTS: usize = 200;
/// Kernel trace buffer size requested before streaming (32 MB).
pub const DEFAULT_TRACE_BUFFER_KB: u64 = 32_768;

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: None,
            pipeline: PipelineConfig::default(),
            synth: SynthSettings {
                seed: DEFAULT_SEED,
                loads: LoadLevel::ALL.to_vec(),
                slices: Slice::ALL.to_vec(),
                duration: slicelat::synth::LoadCondition::DEFAULT_DURATION,
                impairments: ImpairmentModel::none(),
                pfcp: PfcpModel::default(),
                emit_trace: false,
            },
            cdf_points: DEFAULT_CDF_POINTS,
            attach: AttachSettings {
                probe_object: PathBuf::from("upf_measure.o"),
                n3_iface: "eth0".into(),
                tun_iface: "ogstun".into(),
                buffer_kb: DEFAULT_TRACE_BUFFER_KB,
                tracing_dir: PathBuf::from("/sys/kernel/tracing"),
                pids: BTreeMap::new(),
            },
            out: PathBuf::from("slicelat-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn apply_file(&mut self, f: ConfigFile) -> Result<(), CliError> {
        let m = &mut self.pipeline.matcher;
        set(&mut m.window, f.matcher.window);
        set(&mut m.capacity, f.matcher.capacity);
        set(&mut m.reorder_slack, f.matcher.reorder_slack);

        let p = &mut self.pipeline;
        set(&mut p.load, f.pipeline.load);
        set(&mut p.pfcp_timeout, f.pipeline.pfcp_timeout);
        set(&mut p.include_retransmitted, f.pipeline.include_retransmitted);
        set(&mut p.max_line_len, f.pipeline.max_line_len);

        let s = &mut self.synth;
        set(&mut s.seed, f.synth.seed);
        set(&mut s.loads, f.synth.loads);
        set(&mut s.slices, f.synth.slices);
        set(&mut s.duration, f.synth.duration);
        set(&mut s.impairments.m1_loss_prob, f.synth.m1_loss);
        set(&mut s.impairments.m3_loss_prob, f.synth.m3_loss);
        set(&mut s.impairments.reorder_prob, f.synth.reorder);
        set(&mut s.impairments.reorder_jitter, f.synth.reorder_jitter);
        set(&mut s.impairments.duplicate_prob, f.synth.duplicate);
        set(&mut s.pfcp.rate, f.synth.pfcp_rate);
        set(&mut s.pfcp.retransmit_prob, f.synth.pfcp_retransmit_prob);
        set(&mut s.emit_trace, f.synth.emit_trace);

        set(&mut self.cdf_points, f.report.cdf_points);

        let a = &mut self.attach;
        set(&mut a.probe_object, f.attach.probe_object);
        set(&mut a.n3_iface, f.attach.n3_iface);
        set(&mut a.tun_iface, f.attach.tun_iface);
        set(&mut a.buffer_kb, f.attach.buffer_kb);
        set(&mut a.tracing_dir, f.attach.tracing_dir);
        for (ns, pid) in f.attach.pids {
            let ns: Namespace = ns.parse().map_err(|e| CliError::Config(format!("attach.pids: {e}")))?;
            a.pids.insert(ns, pid);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.pipeline.matcher.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.synth.impairments.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.synth.pfcp.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.cdf_points == 0 {
            return Err(CliError::Config("cdf_points must be at least 1".into()));
        }
        if self.pipeline.max_line_len == 0 {
            return Err(CliError::Config("max_line_len must be at least 1".into()));
        }
        if self.attach.pids.keys().any(|ns| !ns.is_upf()) {
            return Err(CliError::Config("attach.pids keys must be upf1, upf2 or upf3".into()));
        }
        Ok(())
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

#[cfg(test)]
mod tests {
    use slicelat::{MatcherConfig, PfcpTracker};

    use super::*;

    #[test]
    fn defaults() {
        let c = ExperimentConfig::default();
        assert_eq!(c.pipeline.matcher, MatcherConfig::default());
        assert_eq!(c.pipeline.pfcp_timeout, PfcpTracker::DEFAULT_TIMEOUT);
        assert_eq!(c.synth.duration, Duration::from_secs(600));
        assert_eq!(c.attach.buffer_kb, 32_768);
        c.validate().unwrap();
    }

    #[test]
    fn file_overrides() {
        let f = ConfigFile::parse(
            r#"
[matcher]
window = "5ms"
capacity = 64

[synth]
loads = ["heavy"]
slices = ["urllc", "eMBB"]
duration = "2s"
m3_loss = 0.01

[attach.pids]
upf2 = 4242
"#,
        )
        .unwrap();
        let mut c = ExperimentConfig::default();
        c.apply_file(f).unwrap();
        assert_eq!(c.pipeline.matcher.window, Duration::from_millis(5));
        assert_eq!(c.pipeline.matcher.capacity, 64);
        assert_eq!(c.synth.loads, vec![LoadLevel::Heavy]);
        assert_eq!(c.synth.slices, vec![Slice::Urllc, Slice::Embb]);
        assert_eq!(c.synth.impairments.m3_loss_prob, 0.01);
        assert_eq!(c.attach.pids[&Namespace::Upf2], 4242);
    }

    #[test]
    fn readme_example_parses() {
        let readme = include_str!("../../../README.md");
        let start = readme.find("```toml\n").expect("toml block") + "```toml\n".len();
        let block = &readme[start..start + readme[start..].find("```").unwrap()];
        let mut c = ExperimentConfig::default();
        c.apply_file(ConfigFile::parse(block).unwrap()).unwrap();
        c.validate().unwrap();
        assert_eq!(c.pipeline.load, "Heavy");
        assert_eq!(c.attach.pids.len(), 3);
        assert_eq!(c.synth.pfcp.retransmit_prob, 0.02);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ConfigFile::parse("[matcher]\nwindw = \"5ms\"\n").is_err());
        assert!(ConfigFile::parse("[matcher]\nwindow = \"soon\"\n").is_err());
        let mut c = ExperimentConfig::default();
        c.apply_file(ConfigFile::parse("[matcher]\ncapacity = 0\n").unwrap()).unwrap();
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        let mut c = ExperimentConfig::default();
        assert!(c.apply_file(ConfigFile::parse("[attach.pids]\nsmf = 1\n").unwrap()).is_ok());
        assert!(c.validate().is_err());
    }
}
