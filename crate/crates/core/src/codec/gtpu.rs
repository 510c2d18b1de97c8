//! GTP-U (version 1) outer header.
//!
//! ```text
//!  0       1       2       3       4 ..... 7    8 .. 9   10     11
//! +-------+-------+-------+-------+----------+--------+------+--------+
//! |V|P|*|E|S|N| type  |  length   |   TEID   | seq no | N-PDU| next ext|
//! +-------+-------+-------+-------+----------+--------+------+--------+
//!                                             \_____ present iff E|S|N ____/
//! ```
//!
//! `length` counts the bytes following the first eight, so it includes the
//! optional four-byte block when present.

use super::CodecError;

pub const GTPU_MSG_GPDU: u8 = 0xFF;

const GTPU_MIN_HEADER: usize = 8;
const GTPU_OPT_HEADER: usize = 12;
const FLAG_E: u8 = 0x04;
const FLAG_S: u8 = 0x02;
const FLAG_PN: u8 = 0x01;
// Extension chains longer than this are treated as malformed.
const MAX_EXTENSIONS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GtpuHeader {
    pub version: u8,
    pub protocol_type: bool,
    pub message_type: u8,
    pub payload_length: u16,
    pub teid: u32,
    /// 8, or 12 when any of the E/S/PN option flags is set.
    pub header_length: usize,
    /// Offset of the inner packet: `header_length` plus any chained
    /// extension headers.
    pub inner_offset: usize,
}

/// Parses the GTP-U header at the start of an N3 UDP payload.
///
/// Version and length are checked before the message type, so a G-PDU check
/// only fails on an otherwise well-formed header. `NotGpdu` lets callers skip
/// echo and error-indication traffic without treating it as corruption.
pub fn parse_gtpu(buf: &[u8]) -> Result<GtpuHeader, CodecError> {
    if buf.len() < GTPU_MIN_HEADER {
        return Err(CodecError::TruncatedHeader { needed: GTPU_MIN_HEADER, available: buf.len() });
    }
    let flags = buf[0];
    let version = flags >> 5;
    if version != 1 {
        return Err(CodecError::UnsupportedVersion(version));
    }
    let message_type = buf[1];
    if message_type != GTPU_MSG_GPDU {
        return Err(CodecError::NotGpdu(message_type));
    }
    let payload_length = u16::from_be_bytes([buf[2], buf[3]]);
    let teid = u32::from_be_bytes([buf[4], buf[5], buf[6], buf[7]]);

    let has_options = flags & (FLAG_E | FLAG_S | FLAG_PN) != 0;
    let header_length = if has_options { GTPU_OPT_HEADER } else { GTPU_MIN_HEADER };
    if buf.len() < header_length {
        return Err(CodecError::TruncatedHeader { needed: header_length, available: buf.len() });
    }

    let mut inner_offset = header_length;
    if flags & FLAG_E != 0 {
        let mut next = buf[GTPU_OPT_HEADER - 1];
        let mut hops = 0;
        while next != 0 {
            if hops == MAX_EXTENSIONS {
                return Err(CodecError::BadExtensionHeader);
            }
            let Some(&len_words) = buf.get(inner_offset) else {
                return Err(CodecError::TruncatedHeader { needed: inner_offset + 1, available: buf.len() });
            };
            if len_words == 0 {
                return Err(CodecError::BadExtensionHeader);
            }
            let end = inner_offset + 4 * len_words as usize;
            if buf.len() < end {
                return Err(CodecError::TruncatedHeader { needed: end, available: buf.len() });
            }
            next = buf[end - 1];
            inner_offset = end;
            hops += 1;
        }
    }

    Ok(GtpuHeader {
        version,
        protocol_type: flags & 0x10 != 0,
        message_type,
        payload_length,
        teid,
        header_length,
        inner_offset,
    })
}
