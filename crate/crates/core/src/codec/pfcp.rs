//! PFCP header (version 1). Information elements are not decoded.
//!
//! Node-level messages carry no SEID and an 8-byte header; session-level
//! messages (type 50 and above) set the S flag and carry a 16-byte header.

use super::CodecError;

pub const MSG_SESSION_ESTABLISHMENT_REQUEST: u8 = 50;
pub const MSG_SESSION_ESTABLISHMENT_RESPONSE: u8 = 51;
pub const MSG_SESSION_MODIFICATION_REQUEST: u8 = 52;
pub const MSG_SESSION_MODIFICATION_RESPONSE: u8 = 53;
pub const MSG_SESSION_DELETION_REQUEST: u8 = 54;
pub const MSG_SESSION_DELETION_RESPONSE: u8 = 55;

const NODE_HEADER_LEN: usize = 8;
const SESSION_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PfcpHeader {
    pub message_type: u8,
    pub message_length: u16,
    pub sequence: u32,
    pub seid_present: bool,
    pub seid: Option<u64>,
}

pub fn is_session_message(message_type: u8) -> bool {
    message_type >= MSG_SESSION_ESTABLISHMENT_REQUEST
}

pub fn parse_pfcp(buf: &[u8]) -> Result<PfcpHeader, CodecError> {
    if buf.len() < NODE_HEADER_LEN {
        return Err(CodecError::TruncatedHeader { needed: NODE_HEADER_LEN, available: buf.len() });
    }
    let version = buf[0] >> 5;
    if version != 1 {
        return Err(CodecError::UnknownVersion(version));
    }
    let seid_present = buf[0] & 0x01 != 0;
    let message_type = buf[1];
    if seid_present != is_session_message(message_type) {
        return Err(CodecError::InconsistentSeidFlag { message_type, seid_present });
    }
    let message_length = u16::from_be_bytes([buf[2], buf[3]]);

    let (seid, seq_at) = if seid_present {
        if buf.len() < SESSION_HEADER_LEN {
            return Err(CodecError::TruncatedHeader { needed: SESSION_HEADER_LEN, available: buf.len() });
        }
        let mut raw = [0u8; 8];
        raw.copy_from_slice(&buf[4..12]);
        (Some(u64::from_be_bytes(raw)), 12)
    } else {
        (None, 4)
    };
    let sequence = u32::from_be_bytes([0, buf[seq_at], buf[seq_at + 1], buf[seq_at + 2]]);

    Ok(PfcpHeader { message_type, message_length, sequence, seid_present, seid })
}
