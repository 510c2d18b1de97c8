use std::io;
use std::path::{Path, PathBuf};

use slicelat::dataset::DatasetError;
use slicelat::pipeline::PipelineError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Schema { path: PathBuf, source: DatasetError },
    #[error("configuration: {0}")]
    Config(String),
    #[error("self-check failed: {0}")]
    SelfCheck(String),
    #[error("insufficient privilege: {0}")]
    Privilege(String),
    #[error("network namespace of process {pid} not found ({})", path.display())]
    NamespaceNotFound { pid: u32, path: PathBuf },
    #[error("interface {iface} not found in the namespace of process {pid}")]
    InterfaceNotFound { iface: String, pid: u32 },
    #[error("probe load failed: {0}")]
    ProbeLoad(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 3,
            CliError::Schema { .. } => 4,
            CliError::Config(_) => 5,
            CliError::SelfCheck(_) => 6,
            CliError::Privilege(_) => 10,
            CliError::NamespaceNotFound { .. } => 11,
            CliError::InterfaceNotFound { .. } => 12,
            CliError::ProbeLoad(_) => 13,
        }
    }

    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(io::Error) -> CliError {
        let path = path.as_ref().to_path_buf();
        move |source| CliError::Io { path, source }
    }

    pub fn dataset(path: impl AsRef<Path>) -> impl FnOnce(DatasetError) -> CliError {
        let path = path.as_ref().to_path_buf();
        move |e| match e {
            DatasetError::Io(source) => CliError::Io { path, source },
            source => CliError::Schema { path, source },
        }
    }

    pub fn pipeline(path: impl AsRef<Path>) -> impl FnOnce(PipelineError) -> CliError {
        let path = path.as_ref().to_path_buf();
        move |e| match e {
            PipelineError::Io(source) => CliError::Io { path, source },
            PipelineError::Dataset(d) => CliError::dataset(path)(d),
            PipelineError::Matcher(m) => CliError::Config(m.to_string()),
        }
    }
}
