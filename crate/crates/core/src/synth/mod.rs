//! Deterministic synthetic probe traces with ground truth.
//!
//! All randomness comes from one ChaCha8 generator seeded explicitly, so a
//! `(profiles, load, impairments, seed)` tuple always yields the same stream.
//! Model parameters are this crate's own qualitative choices; they aim for the
//! right order of magnitude, not for reproducing any measured platform.

mod generator;
mod model;
mod pfcp;
mod profile;

use thiserror::Error;

pub use generator::{default_profiles, generate, Emission, SyntheticTrace, TraceGenerator, START_NS};
pub use model::{DelayModel, DelaySampler};
pub use pfcp::{generate_pfcp, PfcpModel, PfcpTrace};
pub use profile::{
    ImpairmentModel, LoadCondition, LoadLevel, SliceProfile, Transport, EMBB_PACKET_LEN, MMTC_PACKET_RATE,
    URLLC_PACKETS_PER_CALL,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
}
