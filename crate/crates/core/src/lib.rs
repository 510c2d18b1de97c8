//! Per-slice 5G user-plane latency measurement.
//!
//! The crate turns probe events captured inside UPF network namespaces into
//! forwarding-delay and N4 round-trip datasets:
//!
//! * [`codec`] parses GTP-U, inner IPv4, PFCP headers and the trace grammar.
//! * [`matcher`] correlates M1 (N3 arrival) with M3 (TUN delivery) events.
//! * [`pfcp`] pairs PFCP requests and responses into transactions.
//! * [`stats`] keeps mergeable histogram statistics and CDFs.
//! * [`synth`] generates deterministic synthetic traces with ground truth.
//! * [`pipeline`], [`dataset`] and [`report`] tie these together for replay
//!   and reporting.

pub mod codec;
pub mod dataset;
pub mod matcher;
pub mod par;
pub mod pfcp;
pub mod pipeline;
pub mod report;
pub mod stats;
pub mod synth;

pub use codec::{FlowKey, Namespace, ProbeEvent, Slice};
pub use matcher::{MatchAccounting, MatchedPair, Matcher, MatcherConfig};
pub use par::Execution;
pub use pfcp::{MsgClass, PfcpTracker, PfcpTransaction};
pub use stats::DelayStats;
