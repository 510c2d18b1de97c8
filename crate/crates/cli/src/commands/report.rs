use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use slicelat::dataset::{pair_records, pfcp_records, write_cdf};
use slicelat::report::{file_label, CdfMeta, ForwardingTable, PfcpTable};

use crate::commands::{create, emit, ensure_dir, write_string};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::ReportArgs;

pub const REPORT_FILE: &str = "report.md";
pub const CDF_DIR: &str = "cdf";

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(CliError::io(path))
}

/// Loads and validates every dataset; the first malformed record aborts with
/// a schema error naming its file.
pub fn load_tables(
    pairs: &[PathBuf],
    pfcp: &[PathBuf],
    include_retransmitted: bool,
) -> Result<(ForwardingTable, PfcpTable), CliError> {
    let mut fwd = ForwardingTable::new();
    for path in pairs {
        for r in pair_records(open(path)?).map_err(CliError::dataset(path))? {
            let r = r.map_err(CliError::dataset(path))?;
            fwd.add(r.slice, &r.load, r.pair.delay);
        }
    }
    let mut ctl = PfcpTable::default();
    for path in pfcp {
        for r in pfcp_records(open(path)?).map_err(CliError::dataset(path))? {
            let r = r.map_err(CliError::dataset(path))?;
            ctl.add(&r.load, &r.transaction, include_retransmitted);
        }
    }
    Ok((fwd, ctl))
}

pub fn render(fwd: &ForwardingTable, ctl: &PfcpTable) -> String {
    format!(
        "# UPF forwarding delay (M1 to M3)\n\n{}\n# PFCP round-trip time\n\n{}",
        fwd.to_markdown(),
        ctl.to_markdown()
    )
}

pub fn run(mut cfg: ExperimentConfig, args: ReportArgs) -> Result<(), CliError> {
    if let Some(n) = args.cdf_points {
        cfg.cdf_points = n;
    }
    cfg.pipeline.include_retransmitted |= args.include_retransmitted;
    cfg.validate()?;
    let (fwd, ctl) = load_tables(&args.pairs, &args.pfcp, cfg.pipeline.include_retransmitted)?;

    let cdf_dir = cfg.out.join(CDF_DIR);
    ensure_dir(&cdf_dir)?;
    let stats_err = |e: slicelat::stats::StatsError| CliError::Config(e.to_string());
    for (slice, load, points) in fwd.cdfs(cfg.cdf_points).map_err(stats_err)? {
        let path = cdf_dir.join(format!("forwarding_{}_{}.csv", file_label(slice.as_str()), file_label(&load)));
        write_cdf(create(&path)?, &points).map_err(CliError::dataset(&path))?;
    }
    let meta = CdfMeta::pfcp().to_json();
    for (load, class, points) in ctl.cdfs(cfg.cdf_points).map_err(stats_err)? {
        let stem = format!("pfcp_{}_{}", file_label(class.as_str()), file_label(&load));
        let path = cdf_dir.join(format!("{stem}.csv"));
        write_cdf(create(&path)?, &points).map_err(CliError::dataset(&path))?;
        write_string(&cdf_dir.join(format!("{stem}.meta.json")), &meta)?;
    }

    let report = render(&fwd, &ctl);
    write_string(&cfg.out.join(REPORT_FILE), &report)?;
    emit(&report)
}
