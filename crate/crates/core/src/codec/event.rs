use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CodecError, FlowKey};

/// Network namespace a probe event was observed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Namespace {
    Upf1,
    Upf2,
    Upf3,
    Smf,
}

impl Namespace {
    pub const UPFS: [Namespace; 3] = [Namespace::Upf1, Namespace::Upf2, Namespace::Upf3];

    pub fn as_str(self) -> &'static str {
        match self {
            Namespace::Upf1 => "upf1",
            Namespace::Upf2 => "upf2",
            Namespace::Upf3 => "upf3",
            Namespace::Smf => "smf",
        }
    }

    pub fn is_upf(self) -> bool {
        !matches!(self, Namespace::Smf)
    }

    /// Slice served by this UPF on the reference platform (upf1 eMBB, upf2
    /// URLLC, upf3 mMTC).
    pub fn slice(self) -> Option<Slice> {
        match self {
            Namespace::Upf1 => Some(Slice::Embb),
            Namespace::Upf2 => Some(Slice::Urllc),
            Namespace::Upf3 => Some(Slice::Mmtc),
            Namespace::Smf => None,
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {kind} `{value}`")]
pub struct UnknownName {
    pub kind: &'static str,
    pub value: String,
}

impl FromStr for Namespace {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "upf1" => Ok(Namespace::Upf1),
            "upf2" => Ok(Namespace::Upf2),
            "upf3" => Ok(Namespace::Upf3),
            "smf" => Ok(Namespace::Smf),
            _ => Err(UnknownName { kind: "namespace", value: s.to_owned() }),
        }
    }
}

/// Network slice archetype.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Slice {
    #[serde(rename = "eMBB")]
    Embb,
    #[serde(rename = "URLLC")]
    Urllc,
    #[serde(rename = "mMTC")]
    Mmtc,
}

impl Slice {
    pub const ALL: [Slice; 3] = [Slice::Embb, Slice::Urllc, Slice::Mmtc];

    pub fn as_str(self) -> &'static str {
        match self {
            Slice::Embb => "eMBB",
            Slice::Urllc => "URLLC",
            Slice::Mmtc => "mMTC",
        }
    }

    pub fn namespace(self) -> Namespace {
        match self {
            Slice::Embb => Namespace::Upf1,
            Slice::Urllc => Namespace::Upf2,
            Slice::Mmtc => Namespace::Upf3,
        }
    }
}

impl fmt::Display for Slice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Slice {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "embb" => Ok(Slice::Embb),
            "urllc" => Ok(Slice::Urllc),
            "mmtc" => Ok(Slice::Mmtc),
            _ => Err(UnknownName { kind: "slice", value: s.to_owned() }),
        }
    }
}

/// Direction of a PFCP syscall observed on the SMF socket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Send,
    Recv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProbePoint {
    M1,
    M3,
    PfcpSend,
    PfcpRecv,
}

/// A timestamped observation from one measurement point.
///
/// `M1` is GTP-U arrival on the N3 interface, `M3` is decapsulated delivery
/// on the TUN interface, `Pfcp` is a send or receive on the SMF's N4 socket
/// (always attributed to the `smf` namespace). Timestamps are nanoseconds on
/// one monotonic clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProbeEvent {
    M1 { ns: Namespace, flow_key: FlowKey, teid: u32, ts: u64 },
    M3 { ns: Namespace, flow_key: FlowKey, ts: u64 },
    Pfcp { dir: Direction, sequence: u32, message_type: u8, ts: u64 },
}

impl ProbeEvent {
    pub fn point(&self) -> ProbePoint {
        match self {
            ProbeEvent::M1 { .. } => ProbePoint::M1,
            ProbeEvent::M3 { .. } => ProbePoint::M3,
            ProbeEvent::Pfcp { dir: Direction::Send, .. } => ProbePoint::PfcpSend,
            ProbeEvent::Pfcp { dir: Direction::Recv, .. } => ProbePoint::PfcpRecv,
        }
    }

    pub fn timestamp(&self) -> u64 {
        match *self {
            ProbeEvent::M1 { ts, .. } | ProbeEvent::M3 { ts, .. } | ProbeEvent::Pfcp { ts, .. } => ts,
        }
    }

    pub fn namespace(&self) -> Namespace {
        match *self {
            ProbeEvent::M1 { ns, .. } | ProbeEvent::M3 { ns, .. } => ns,
            ProbeEvent::Pfcp { .. } => Namespace::Smf,
        }
    }

    pub fn flow_key(&self) -> Option<FlowKey> {
        match *self {
            ProbeEvent::M1 { flow_key, .. } | ProbeEvent::M3 { flow_key, .. } => Some(flow_key),
            ProbeEvent::Pfcp { .. } => None,
        }
    }

    pub fn teid(&self) -> Option<u32> {
        match *self {
            ProbeEvent::M1 { teid, .. } => Some(teid),
            _ => None,
        }
    }

    /// Checks the invariants the trace grammar relies on.
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.timestamp() == 0 {
            return Err(CodecError::InvalidEvent("timestamp must be > 0"));
        }
        match *self {
            ProbeEvent::M1 { ns, .. } | ProbeEvent::M3 { ns, .. } if !ns.is_upf() => {
                Err(CodecError::InvalidEvent("forwarding events must come from a UPF namespace"))
            }
            ProbeEvent::Pfcp { sequence, .. } if sequence >= 1 << 24 => {
                Err(CodecError::InvalidEvent("PFCP sequence exceeds 24 bits"))
            }
            _ => Ok(()),
        }
    }
}
