use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use super::CodecError;

pub const IPPROTO_ICMP: u8 = 1;
pub const IPPROTO_TCP: u8 = 6;
pub const IPPROTO_UDP: u8 = 17;

const IPV4_MIN_HEADER: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FiveTuple {
    pub src_addr: Ipv4Addr,
    pub dst_addr: Ipv4Addr,
    pub protocol: u8,
    /// Zero unless `protocol` is TCP or UDP.
    pub src_port: u16,
    pub dst_port: u16,
}

impl FiveTuple {
    pub fn has_ports(protocol: u8) -> bool {
        protocol == IPPROTO_TCP || protocol == IPPROTO_UDP
    }
}

/// 64-bit per-packet correlation digest shared by M1 and M3.
///
/// Computed over the inner IPv4 packet only, so it is the same whether the
/// packet was reached by stripping a GTP-U header or read straight off the TUN
/// device. See [`flow_key_for`] for the exact mixing function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FlowKey(pub u64);

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl fmt::LowerHex for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::LowerHex::fmt(&self.0, f)
    }
}

impl FromStr for FlowKey {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s, 16).map(FlowKey)
    }
}

const FLOW_KEY_SEED: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^= k >> 33;
    k
}

/// The flow key mixing function.
///
/// ```text
/// w0 = src_addr << 32 | dst_addr
/// w1 = src_port << 48 | dst_port << 32 | ip_id << 16 | total_length
/// w2 = protocol
/// h  = fmix64(fmix64(fmix64(SEED ^ w0) ^ w1) ^ w2)
/// ```
///
/// `fmix64` is the MurmurHash3 64-bit finaliser and `SEED` is
/// `0x9e3779b97f4a7c15`. Three multiplies per word keep it cheap enough for a
/// per-packet kernel hook; it is not collision resistant against an adversary.
pub fn flow_key_for(tuple: &FiveTuple, ip_id: u16, total_length: u16) -> FlowKey {
    let w0 = (u64::from(u32::from(tuple.src_addr)) << 32) | u64::from(u32::from(tuple.dst_addr));
    let w1 = (u64::from(tuple.src_port) << 48)
        | (u64::from(tuple.dst_port) << 32)
        | (u64::from(ip_id) << 16)
        | u64::from(total_length);
    let w2 = u64::from(tuple.protocol);
    let mut h = fmix64(FLOW_KEY_SEED ^ w0);
    h = fmix64(h ^ w1);
    FlowKey(fmix64(h ^ w2))
}

/// Reads the IPv4 header at `buf[offset..]` and derives its five-tuple and
/// flow key. Use offset 0 for a TUN capture and the GTP-U inner offset for an
/// N3 capture.
pub fn extract_flow_key(buf: &[u8], offset: usize) -> Result<(FiveTuple, FlowKey), CodecError> {
    let pkt = buf.get(offset..).unwrap_or(&[]);
    let truncated = |needed: usize| CodecError::TruncatedPacket {
        needed: offset.saturating_add(needed),
        available: buf.len(),
    };
    let Some(&vihl) = pkt.first() else {
        return Err(truncated(IPV4_MIN_HEADER));
    };
    let version = vihl >> 4;
    if version != 4 {
        return Err(CodecError::UnsupportedIpVersion(version));
    }
    if pkt.len() < IPV4_MIN_HEADER {
        return Err(truncated(IPV4_MIN_HEADER));
    }
    let ihl = vihl & 0x0F;
    if ihl < 5 {
        return Err(CodecError::BadIpHeaderLength(ihl));
    }
    let header_len = usize::from(ihl) * 4;
    if pkt.len() < header_len {
        return Err(truncated(header_len));
    }

    let total_length = u16::from_be_bytes([pkt[2], pkt[3]]);
    let ip_id = u16::from_be_bytes([pkt[4], pkt[5]]);
    let protocol = pkt[9];
    let src_addr = Ipv4Addr::new(pkt[12], pkt[13], pkt[14], pkt[15]);
    let dst_addr = Ipv4Addr::new(pkt[16], pkt[17], pkt[18], pkt[19]);

    let (src_port, dst_port) = if FiveTuple::has_ports(protocol) {
        if pkt.len() < header_len + 4 {
            return Err(truncated(header_len + 4));
        }
        let l4 = &pkt[header_len..header_len + 4];
        (u16::from_be_bytes([l4[0], l4[1]]), u16::from_be_bytes([l4[2], l4[3]]))
    } else {
        (0, 0)
    };

    let tuple = FiveTuple { src_addr, dst_addr, protocol, src_port, dst_port };
    Ok((tuple, flow_key_for(&tuple, ip_id, total_length)))
}
