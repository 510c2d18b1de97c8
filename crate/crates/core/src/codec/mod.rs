//! Wire formats: GTP-U outer header, inner IPv4 five-tuple and flow key, PFCP
//! header, and the line-oriented probe event trace grammar.
//!
//! Every parser here is a pure function over a borrowed byte slice. None of
//! them index past the end of the slice they are given; all length checks
//! happen before the corresponding read.

mod event;
mod gtpu;
mod ipv4;
pub mod pfcp;
mod trace;

pub use event::{Direction, Namespace, ProbeEvent, ProbePoint, Slice, UnknownName};
pub use gtpu::{parse_gtpu, GtpuHeader, GTPU_MSG_GPDU};
pub use ipv4::{extract_flow_key, flow_key_for, FiveTuple, FlowKey, IPPROTO_ICMP, IPPROTO_TCP, IPPROTO_UDP};
pub use pfcp::{parse_pfcp, PfcpHeader};
pub use trace::{emit_trace_line, parse_trace_line, write_trace_line, TRACE_MARKER};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("truncated header: need {needed} bytes, have {available}")]
    TruncatedHeader { needed: usize, available: usize },
    #[error("unsupported GTP version {0}")]
    UnsupportedVersion(u8),
    #[error("GTP-U message type {0:#04x} is not a G-PDU")]
    NotGpdu(u8),
    #[error("malformed GTP-U extension header chain")]
    BadExtensionHeader,
    #[error("truncated packet: need {needed} bytes, have {available}")]
    TruncatedPacket { needed: usize, available: usize },
    #[error("unsupported IP version {0}")]
    UnsupportedIpVersion(u8),
    #[error("invalid IPv4 header length {0} (words)")]
    BadIpHeaderLength(u8),
    #[error("unknown PFCP version {0}")]
    UnknownVersion(u8),
    #[error("PFCP SEID flag {seid_present} inconsistent with message type {message_type}")]
    InconsistentSeidFlag { message_type: u8, seid_present: bool },
    #[error("malformed trace line: {0}")]
    MalformedLine(String),
    #[error("invalid event: {0}")]
    InvalidEvent(&'static str),
}
