use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use crate::commands::{interrupt_flag, print_summary, run_pipeline, InterruptibleReader};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::ReplayArgs;

pub fn open_input(path: &Path, interrupt: &Arc<AtomicBool>) -> Result<Box<dyn BufRead>, CliError> {
    if path == Path::new("-") {
        // Reading stdin can block indefinitely; the reader thread lets an
        // interrupt end the stream anyway.
        return Ok(Box::new(BufReader::new(InterruptibleReader::spawn(io::stdin(), Arc::clone(interrupt)))));
    }
    let f = File::open(path).map_err(CliError::io(path))?;
    Ok(Box::new(BufReader::with_capacity(1 << 16, f)))
}

pub fn run(mut cfg: ExperimentConfig, args: ReplayArgs) -> Result<(), CliError> {
    if let Some(load) = args.load {
        cfg.pipeline.load = load;
    }
    if let Some(t) = args.pfcp_timeout {
        cfg.pipeline.pfcp_timeout = t;
    }
    cfg.pipeline.include_retransmitted |= args.include_retransmitted;
    cfg.validate()?;

    // Open everything first so an unreadable input fails before any output
    // is created.
    let interrupt = interrupt_flag();
    let inputs = args
        .inputs
        .iter()
        .map(|p| Ok((p.clone(), open_input(p, &interrupt)?)))
        .collect::<Result<Vec<(PathBuf, Box<dyn BufRead>)>, CliError>>()?;
    let summary = run_pipeline(cfg.pipeline, &cfg.out, inputs, Some(&interrupt))?;
    print_summary("replay", &summary);
    Ok(())
}
