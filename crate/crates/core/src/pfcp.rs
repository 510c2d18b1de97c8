//! N4 round-trip measurement: pairs PFCP requests sent by the SMF with the
//! responses it receives, keyed by the 24-bit sequence number.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::pfcp::{
    MSG_SESSION_DELETION_REQUEST, MSG_SESSION_ESTABLISHMENT_REQUEST, MSG_SESSION_MODIFICATION_REQUEST,
};
use crate::codec::{Direction, ProbeEvent, ProbePoint, UnknownName};
use crate::matcher::duration_ns;

const SEQ_SPACE: u32 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PfcpError {
    #[error("{0:?} event routed to the PFCP tracker")]
    WrongEventKind(ProbePoint),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MsgClass {
    Establishment,
    Modification,
    Deletion,
    Other,
}

impl MsgClass {
    pub const ALL: [MsgClass; 4] =
        [MsgClass::Establishment, MsgClass::Modification, MsgClass::Deletion, MsgClass::Other];

    /// Classifies by the request message type.
    pub fn from_request(message_type: u8) -> Self {
        match message_type {
            MSG_SESSION_ESTABLISHMENT_REQUEST => MsgClass::Establishment,
            MSG_SESSION_MODIFICATION_REQUEST => MsgClass::Modification,
            MSG_SESSION_DELETION_REQUEST => MsgClass::Deletion,
            _ => MsgClass::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MsgClass::Establishment => "Establishment",
            MsgClass::Modification => "Modification",
            MsgClass::Deletion => "Deletion",
            MsgClass::Other => "Other",
        }
    }
}

impl fmt::Display for MsgClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MsgClass {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MsgClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownName { kind: "message class", value: s.to_owned() })
    }
}

/// Response type paired with a request type (`request + 1` across PFCP).
pub fn response_type(request_type: u8) -> u8 {
    request_type.wrapping_add(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PfcpTransaction {
    pub sequence: u32,
    pub msg_class: MsgClass,
    pub request_type: u8,
    /// First send; retransmissions do not move it.
    pub t_send: u64,
    pub t_recv: u64,
    pub rtt: u64,
    pub retransmitted: bool,
}

impl PfcpTransaction {
    /// Whether the transaction belongs in RTT statistics. Retransmitted
    /// transactions are ambiguous (either copy may have been answered) and are
    /// excluded unless explicitly requested.
    pub fn counts_for_stats(&self, include_retransmitted: bool) -> bool {
        include_retransmitted || !self.retransmitted
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PfcpAccounting {
    /// Distinct requests (retransmissions excluded).
    pub sends: u64,
    pub retransmissions: u64,
    pub recvs: u64,
    pub transactions: u64,
    pub retransmitted_transactions: u64,
    pub orphans: u64,
    pub lost: u64,
    pub pending: u64,
}

impl PfcpAccounting {
    pub fn conservation_holds(&self) -> bool {
        self.sends == self.transactions + self.pending + self.lost
            && self.recvs == self.transactions + self.orphans
    }
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    t_send: u64,
    message_type: u8,
    retransmitted: bool,
}

#[derive(Debug, Default)]
pub struct PfcpTracker {
    pending: HashMap<u32, Pending>,
    last_send_seq: Option<u32>,
    acct: PfcpAccounting,
}

impl PfcpTracker {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(1);

    pub fn new() -> Self {
        Self::default()
    }

    pub fn on_event(&mut self, event: &ProbeEvent) -> Result<Option<PfcpTransaction>, PfcpError> {
        let ProbeEvent::Pfcp { dir, sequence, message_type, ts } = *event else {
            return Err(PfcpError::WrongEventKind(event.point()));
        };
        Ok(match dir {
            Direction::Send => {
                self.on_send(sequence, message_type, ts);
                None
            }
            Direction::Recv => self.on_recv(sequence, message_type, ts),
        })
    }

    fn on_send(&mut self, seq: u32, message_type: u8, ts: u64) {
        if let Some(last) = self.last_send_seq {
            // Sequence numbers restarted near zero after running high: start a
            // fresh transaction space.
            if seq < last && last - seq > SEQ_SPACE / 2 {
                self.acct.lost += self.pending.len() as u64;
                self.pending.clear();
            }
        }
        self.last_send_seq = Some(seq);

        match self.pending.get_mut(&seq) {
            Some(p) => {
                p.retransmitted = true;
                self.acct.retransmissions += 1;
            }
            None => {
                self.acct.sends += 1;
                self.pending.insert(seq, Pending { t_send: ts, message_type, retransmitted: false });
            }
        }
    }

    fn on_recv(&mut self, seq: u32, message_type: u8, ts: u64) -> Option<PfcpTransaction> {
        self.acct.recvs += 1;
        let answered = self
            .pending
            .get(&seq)
            .is_some_and(|p| response_type(p.message_type) == message_type && ts >= p.t_send);
        if !answered {
            self.acct.orphans += 1;
            return None;
        }
        let p = self.pending.remove(&seq).expect("checked above");
        self.acct.transactions += 1;
        if p.retransmitted {
            self.acct.retransmitted_transactions += 1;
        }
        Some(PfcpTransaction {
            sequence: seq,
            msg_class: MsgClass::from_request(p.message_type),
            request_type: p.message_type,
            t_send: p.t_send,
            t_recv: ts,
            rtt: ts - p.t_send,
            retransmitted: p.retransmitted,
        })
    }

    /// Drops requests whose first send is more than `timeout` before `now`,
    /// counting them lost. Returns how many were dropped.
    pub fn timeout_sweep(&mut self, now: u64, timeout: Duration) -> usize {
        let limit = duration_ns(timeout);
        let before = self.pending.len();
        self.pending.retain(|_, p| now.saturating_sub(p.t_send) <= limit);
        let expired = before - self.pending.len();
        self.acct.lost += expired as u64;
        expired
    }

    pub fn accounting(&self) -> PfcpAccounting {
        PfcpAccounting { pending: self.pending.len() as u64, ..self.acct }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn send(seq: u32, mt: u8, ts: u64) -> ProbeEvent {
        ProbeEvent::Pfcp { dir: Direction::Send, sequence: seq, message_type: mt, ts }
    }

    fn recv(seq: u32, mt: u8, ts: u64) -> ProbeEvent {
        ProbeEvent::Pfcp { dir: Direction::Recv, sequence: seq, message_type: mt, ts }
    }

    #[test]
    fn modification_round_trip() {
        let mut t = PfcpTracker::new();
        assert_eq!(t.on_event(&send(7, 52, 1)).unwrap(), None);
        let tx = t.on_event(&recv(7, 53, 125_001)).unwrap().unwrap();
        assert_eq!(tx.msg_class, MsgClass::Modification);
        assert_eq!(tx.rtt, 125_000);
        assert!(!tx.retransmitted);
        assert!(t.accounting().conservation_holds());
    }

    #[test]
    fn retransmission_keeps_first_send() {
        let mut t = PfcpTracker::new();
        t.on_event(&send(9, 52, 1)).unwrap();
        t.on_event(&send(9, 52, 50_001)).unwrap();
        let tx = t.on_event(&recv(9, 53, 80_001)).unwrap().unwrap();
        assert!(tx.retransmitted);
        assert_eq!(tx.rtt, 80_000);
        assert!(!tx.counts_for_stats(false));
        assert!(tx.counts_for_stats(true));
        let a = t.accounting();
        assert_eq!((a.sends, a.retransmissions, a.transactions), (1, 1, 1));
        assert!(a.conservation_holds());
    }

    #[test]
    fn orphans() {
        let mut t = PfcpTracker::new();
        assert_eq!(t.on_event(&recv(3, 53, 10)).unwrap(), None);
        // Wrong response type for the pending request.
        t.on_event(&send(4, 50, 10)).unwrap();
        assert_eq!(t.on_event(&recv(4, 53, 20)).unwrap(), None);
        let a = t.accounting();
        assert_eq!((a.orphans, a.pending), (2, 1));
        assert!(a.conservation_holds());
    }

    #[test]
    fn sweep() {
        let mut t = PfcpTracker::new();
        assert_eq!(t.timeout_sweep(10, PfcpTracker::DEFAULT_TIMEOUT), 0);
        t.on_event(&send(1, 52, 1)).unwrap();
        t.on_event(&send(2, 52, 1_500_000_000)).unwrap();
        assert_eq!(t.timeout_sweep(2_000_000_000, PfcpTracker::DEFAULT_TIMEOUT), 1);
        assert_eq!(t.timeout_sweep(2_000_000_000, PfcpTracker::DEFAULT_TIMEOUT), 0);
        let a = t.accounting();
        assert_eq!((a.lost, a.pending), (1, 1));
        assert!(a.conservation_holds());
    }

    #[test]
    fn sequence_wrap_sweeps_old_space() {
        let mut t = PfcpTracker::new();
        t.on_event(&send(SEQ_SPACE - 2, 52, 1)).unwrap();
        t.on_event(&send(SEQ_SPACE - 1, 52, 2)).unwrap();
        t.on_event(&recv(SEQ_SPACE - 1, 53, 3)).unwrap().unwrap();
        t.on_event(&send(0, 52, 4)).unwrap();
        let a = t.accounting();
        assert_eq!((a.lost, a.pending, a.transactions), (1, 1, 1));
        assert!(t.on_event(&recv(0, 53, 9)).unwrap().is_some());
        assert!(t.accounting().conservation_holds());
    }

    #[test]
    fn classes() {
        assert_eq!(MsgClass::from_request(50), MsgClass::Establishment);
        assert_eq!(MsgClass::from_request(54), MsgClass::Deletion);
        assert_eq!(MsgClass::from_request(1), MsgClass::Other);
        assert_eq!("Modification".parse::<MsgClass>().unwrap(), MsgClass::Modification);
    }

    #[test]
    fn rejects_forwarding_events() {
        let mut t = PfcpTracker::new();
        let e = ProbeEvent::M3 { ns: crate::codec::Namespace::Upf1, flow_key: Default::default(), ts: 1 };
        assert_eq!(t.on_event(&e), Err(PfcpError::WrongEventKind(ProbePoint::M3)));
    }
}
