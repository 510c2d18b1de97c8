use serde::Serialize;
use slicelat::stats::DelaySummary;
use slicelat::{MsgClass, Slice};

use crate::commands::emit;
use crate::commands::report::load_tables;
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::StatsArgs;

#[derive(Serialize)]
struct ForwardingCell {
    slice: Slice,
    load: String,
    #[serde(flatten)]
    summary: DelaySummary,
}

#[derive(Serialize)]
struct PfcpCell {
    load: String,
    msg_class: MsgClass,
    #[serde(flatten)]
    summary: DelaySummary,
}

#[derive(Serialize)]
struct StatsOutput {
    forwarding: Vec<ForwardingCell>,
    pfcp: Vec<PfcpCell>,
    pfcp_retransmitted_excluded: u64,
}

pub fn run(cfg: ExperimentConfig, args: StatsArgs) -> Result<(), CliError> {
    let include = cfg.pipeline.include_retransmitted || args.include_retransmitted;
    let (fwd, ctl) = load_tables(&args.pairs, &args.pfcp, include)?;
    let forwarding = fwd
        .rows()
        .into_iter()
        .filter_map(|r| {
            let summary = fwd.stats(r.slice, &r.load)?.summary()?;
            Some(ForwardingCell { slice: r.slice, load: r.load, summary })
        })
        .collect();
    let pfcp = MsgClass::ALL
        .iter()
        .flat_map(|&class| ctl.rows(class))
        .filter_map(|r| {
            let summary = ctl.stats(&r.load, r.msg_class)?.summary()?;
            Some(PfcpCell { load: r.load, msg_class: r.msg_class, summary })
        })
        .collect();
    let out = StatsOutput { forwarding, pfcp, pfcp_retransmitted_excluded: ctl.excluded_retransmitted() };
    let mut json = serde_json::to_string_pretty(&out).expect("stats serialise");
    json.push('\n');
    emit(&json)
}
