use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{DelayModel, SynthError};
use crate::codec::{Slice, UnknownName};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LoadLevel {
    Light,
    Medium,
    Heavy,
}

impl LoadLevel {
    pub const ALL: [LoadLevel; 3] = [LoadLevel::Light, LoadLevel::Medium, LoadLevel::Heavy];

    pub fn as_str(self) -> &'static str {
        match self {
            LoadLevel::Light => "Light",
            LoadLevel::Medium => "Medium",
            LoadLevel::Heavy => "Heavy",
        }
    }
}

impl fmt::Display for LoadLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LoadLevel {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LoadLevel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownName { kind: "load", value: s.to_owned() })
    }
}

/// One row of the load table: eMBB iperf3 rate, URLLC SIPp call rate and run
/// length. Only the duration may be changed after construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadCondition {
    level: LoadLevel,
    embb_rate_mbps: u32,
    urllc_calls_per_s: u32,
    duration: Duration,
}

impl LoadCondition {
    pub const DEFAULT_DURATION: Duration = Duration::from_secs(600);

    pub fn new(level: LoadLevel) -> Self {
        let (embb_rate_mbps, urllc_calls_per_s) = match level {
            LoadLevel::Light => (5, 2),
            LoadLevel::Medium => (20, 4),
            LoadLevel::Heavy => (50, 8),
        };
        Self { level, embb_rate_mbps, urllc_calls_per_s, duration: Self::DEFAULT_DURATION }
    }

    pub fn light() -> Self {
        Self::new(LoadLevel::Light)
    }

    pub fn medium() -> Self {
        Self::new(LoadLevel::Medium)
    }

    pub fn heavy() -> Self {
        Self::new(LoadLevel::Heavy)
    }

    pub fn with_duration(mut self, duration: Duration) -> Self {
        self.duration = duration;
        self
    }

    pub fn level(&self) -> LoadLevel {
        self.level
    }

    pub fn embb_rate_mbps(&self) -> u32 {
        self.embb_rate_mbps
    }

    pub fn urllc_calls_per_s(&self) -> u32 {
        self.urllc_calls_per_s
    }

    pub fn duration(&self) -> Duration {
        self.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transport {
    /// Constant-bit-rate UDP (iperf3).
    UdpCbr,
    /// Short UDP exchanges grouped per call (SIP signalling).
    UdpCalls,
    /// Windowed bursts of TCP segments.
    TcpLike,
}

impl Transport {
    /// Packets per arrival burst.
    pub(crate) fn burst_len(self) -> u64 {
        match self {
            Transport::UdpCbr => 1,
            Transport::UdpCalls => URLLC_PACKETS_PER_CALL as u64,
            Transport::TcpLike => 10,
        }
    }

    /// Spacing between packets inside one burst, capped by the mean period.
    pub(crate) fn burst_spacing_ns(self) -> f64 {
        match self {
            Transport::UdpCbr => 0.0,
            Transport::UdpCalls => 2_000_000.0,
            Transport::TcpLike => 12_000.0,
        }
    }
}

/// Inner IPv4 length of an eMBB iperf3 datagram.
pub const EMBB_PACKET_LEN: u16 = 1400;
/// Uplink packets per URLLC call (INVITE, ACK, BYE).
pub const URLLC_PACKETS_PER_CALL: u32 = 3;
/// mMTC uplink packet rate; the load table does not vary it.
pub const MMTC_PACKET_RATE: f64 = 8_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceProfile {
    pub slice: Slice,
    pub transport: Transport,
    /// Packets per second.
    pub packet_rate: f64,
    pub delay_model: DelayModel,
    /// Concurrent flows; each has its own TEID and five-tuple.
    pub flows: u32,
    /// Inclusive range of inner IPv4 total lengths.
    pub packet_len: (u16, u16),
    pub base_teid: u32,
}

const MAX_DELAY_NS: f64 = 5_000_000.0;

impl SliceProfile {
    /// Default profile for `slice` under `load`.
    ///
    /// Delay parameters are qualitative: medians in the tens of microseconds,
    /// 99th percentiles in the hundreds to low thousands, with the eMBB tail
    /// growing at heavy load and a wide Pareto tail for mMTC.
    pub fn for_slice(slice: Slice, load: &LoadCondition) -> Self {
        match slice {
            Slice::Embb => {
                let (median, tail) = match load.level() {
                    LoadLevel::Light => (60_000.0, 0.010),
                    LoadLevel::Medium => (40_000.0, 0.006),
                    LoadLevel::Heavy => (30_000.0, 0.030),
                };
                SliceProfile {
                    slice,
                    transport: Transport::UdpCbr,
                    packet_rate: f64::from(load.embb_rate_mbps()) * 1e6 / (8.0 * f64::from(EMBB_PACKET_LEN)),
                    delay_model: DelayModel::lognormal(median, 0.6, MAX_DELAY_NS).with_tail(tail, 150_000.0, 1.6),
                    flows: 1,
                    packet_len: (EMBB_PACKET_LEN, EMBB_PACKET_LEN),
                    base_teid: 0x0000_0100,
                }
            }
            Slice::Urllc => SliceProfile {
                slice,
                transport: Transport::UdpCalls,
                packet_rate: f64::from(load.urllc_calls_per_s() * URLLC_PACKETS_PER_CALL),
                delay_model: DelayModel::lognormal(65_000.0, 0.5, MAX_DELAY_NS).with_tail(0.01, 150_000.0, 2.0),
                flows: 4,
                packet_len: (200, 900),
                base_teid: 0x0000_0200,
            },
            Slice::Mmtc => SliceProfile {
                slice,
                transport: Transport::TcpLike,
                packet_rate: MMTC_PACKET_RATE,
                delay_model: DelayModel::lognormal(22_000.0, 0.4, MAX_DELAY_NS).with_tail(0.04, 100_000.0, 1.1),
                flows: 16,
                packet_len: (52, 1500),
                base_teid: 0x0000_0300,
            },
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.packet_rate.is_finite() && self.packet_rate > 0.0) {
            return Err(SynthError::InvalidProfile("packet_rate must be > 0".into()));
        }
        if self.flows == 0 {
            return Err(SynthError::InvalidProfile("flows must be > 0".into()));
        }
        if self.packet_len.0 < 28 || self.packet_len.0 > self.packet_len.1 {
            return Err(SynthError::InvalidProfile("packet_len must be an ordered range of at least 28 bytes".into()));
        }
        self.delay_model.validate()
    }
}

/// Stream impairments applied on top of the ideal trace.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImpairmentModel {
    pub m1_loss_prob: f64,
    pub m3_loss_prob: f64,
    /// Probability that an event is displaced later in stream order.
    pub reorder_prob: f64,
    /// Largest stream-order displacement of a reordered event.
    pub reorder_jitter: Duration,
    pub duplicate_prob: f64,
}

impl ImpairmentModel {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_none(&self) -> bool {
        self.m1_loss_prob == 0.0
            && self.m3_loss_prob == 0.0
            && self.reorder_prob == 0.0
            && self.duplicate_prob == 0.0
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, p) in [
            ("m1_loss_prob", self.m1_loss_prob),
            ("m3_loss_prob", self.m3_loss_prob),
            ("reorder_prob", self.reorder_prob),
            ("duplicate_prob", self.duplicate_prob),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(SynthError::InvalidProfile(format!("{name} must be in [0, 1)")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_table() {
        let rows: Vec<_> = LoadLevel::ALL
            .iter()
            .map(|&l| {
                let c = LoadCondition::new(l);
                (c.embb_rate_mbps(), c.urllc_calls_per_s(), c.duration().as_secs())
            })
            .collect();
        assert_eq!(rows, vec![(5, 2, 600), (20, 4, 600), (50, 8, 600)]);
        assert_eq!("heavy".parse::<LoadLevel>().unwrap(), LoadLevel::Heavy);
    }

    #[test]
    fn default_profiles_validate() {
        for level in LoadLevel::ALL {
            for slice in Slice::ALL {
                SliceProfile::for_slice(slice, &LoadCondition::new(level)).validate().unwrap();
            }
        }
        let embb = SliceProfile::for_slice(Slice::Embb, &LoadCondition::light());
        assert!((embb.packet_rate - 446.428_571).abs() < 1e-3);
    }

    #[test]
    fn invalid_profiles() {
        let mut p = SliceProfile::for_slice(Slice::Urllc, &LoadCondition::light());
        p.packet_rate = 0.0;
        assert!(p.validate().is_err());
        let bad = ImpairmentModel { m3_loss_prob: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
