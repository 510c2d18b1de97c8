//! Canonical probe-event trace lines.
//!
//! ```text
//! M1 ns=<id> key=<16 hex> teid=<8 hex> ts=<decimal ns>
//! M3 ns=<id> key=<16 hex> ts=<decimal ns>
//! P4 dir=<S|R> seq=<decimal> mt=<decimal> ts=<decimal ns>
//! ```
//!
//! Hex is lowercase and fixed width, fields are separated by single spaces
//! and lines end in LF. Raw kernel trace output is accepted too: anything up
//! to and including the `TCBPF:` marker is dropped before matching.

use std::io;

use super::{CodecError, Direction, FlowKey, Namespace, ProbeEvent};

pub const TRACE_MARKER: &str = "TCBPF:";

fn malformed(line: &str) -> CodecError {
    const MAX: usize = 80;
    let mut shown: String = line.chars().take(MAX).collect();
    if line.chars().nth(MAX).is_some() {
        shown.push('…');
    }
    CodecError::MalformedLine(shown)
}

fn field<'a>(token: Option<&'a str>, name: &str) -> Option<&'a str> {
    token?.strip_prefix(name)?.strip_prefix('=')
}

fn hex_fixed(s: &str, width: usize) -> Option<u64> {
    if s.len() != width || !s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
        return None;
    }
    u64::from_str_radix(s, 16).ok()
}

/// Plain decimal: digits only, no sign, no leading zeros.
fn decimal(s: &str) -> Option<u64> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || (s.len() > 1 && s.starts_with('0')) {
        return None;
    }
    s.parse().ok()
}

pub fn parse_trace_line(line: &str) -> Result<ProbeEvent, CodecError> {
    let trimmed = line.strip_suffix('\n').unwrap_or(line);
    let trimmed = trimmed.strip_suffix('\r').unwrap_or(trimmed);
    let body = match trimmed.find(TRACE_MARKER) {
        Some(at) => trimmed[at + TRACE_MARKER.len()..].trim_start_matches(' ').trim_end(),
        None => trimmed,
    };
    parse_body(body).ok_or_else(|| malformed(line))
}

fn parse_body(body: &str) -> Option<ProbeEvent> {
    let mut tokens = body.split(' ');
    let event = match tokens.next()? {
        "M1" => {
            let ns: Namespace = field(tokens.next(), "ns")?.parse().ok()?;
            let flow_key = FlowKey(hex_fixed(field(tokens.next(), "key")?, 16)?);
            let teid = hex_fixed(field(tokens.next(), "teid")?, 8)? as u32;
            let ts = decimal(field(tokens.next(), "ts")?)?;
            ProbeEvent::M1 { ns, flow_key, teid, ts }
        }
        "M3" => {
            let ns: Namespace = field(tokens.next(), "ns")?.parse().ok()?;
            let flow_key = FlowKey(hex_fixed(field(tokens.next(), "key")?, 16)?);
            let ts = decimal(field(tokens.next(), "ts")?)?;
            ProbeEvent::M3 { ns, flow_key, ts }
        }
        "P4" => {
            let dir = match field(tokens.next(), "dir")? {
                "S" => Direction::Send,
                "R" => Direction::Recv,
                _ => return None,
            };
            let sequence = u32::try_from(decimal(field(tokens.next(), "seq")?)?).ok()?;
            let message_type = u8::try_from(decimal(field(tokens.next(), "mt")?)?).ok()?;
            let ts = decimal(field(tokens.next(), "ts")?)?;
            ProbeEvent::Pfcp { dir, sequence, message_type, ts }
        }
        _ => return None,
    };
    if tokens.next().is_some() || event.validate().is_err() {
        return None;
    }
    Some(event)
}

/// Canonical line for `event`, without the trailing LF.
pub fn emit_trace_line(event: &ProbeEvent) -> Result<String, CodecError> {
    event.validate()?;
    Ok(match *event {
        ProbeEvent::M1 { ns, flow_key, teid, ts } => {
            format!("M1 ns={ns} key={flow_key} teid={teid:08x} ts={ts}")
        }
        ProbeEvent::M3 { ns, flow_key, ts } => format!("M3 ns={ns} key={flow_key} ts={ts}"),
        ProbeEvent::Pfcp { dir, sequence, message_type, ts } => {
            let d = match dir {
                Direction::Send => 'S',
                Direction::Recv => 'R',
            };
            format!("P4 dir={d} seq={sequence} mt={message_type} ts={ts}")
        }
    })
}

/// Writes the canonical line for `event` followed by LF.
pub fn write_trace_line<W: io::Write>(out: &mut W, event: &ProbeEvent) -> io::Result<()> {
    let line = emit_trace_line(event).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    out.write_all(line.as_bytes())?;
    out.write_all(b"\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    const M1_LINE: &str = "M1 ns=upf1 key=00000000deadbeef teid=0000002a ts=1000000";
    const RAW_M3: &str =
        "<idle>-0 [003] ..s. 4711.002: bpf_trace_printk: TCBPF: M3 ns=upf1 key=00000000deadbeef ts=1000500";

    #[test]
    fn parses_canonical_m1() {
        let e = parse_trace_line(M1_LINE).unwrap();
        assert_eq!(
            e,
            ProbeEvent::M1 { ns: Namespace::Upf1, flow_key: FlowKey(0xdead_beef), teid: 42, ts: 1_000_000 }
        );
        assert_eq!(emit_trace_line(&e).unwrap(), M1_LINE);
    }

    #[test]
    fn strips_kernel_prefix() {
        let e = parse_trace_line(RAW_M3).unwrap();
        assert_eq!(e, ProbeEvent::M3 { ns: Namespace::Upf1, flow_key: FlowKey(0xdead_beef), ts: 1_000_500 });
        assert_eq!(emit_trace_line(&e).unwrap(), "M3 ns=upf1 key=00000000deadbeef ts=1000500");
    }

    #[test]
    fn pfcp_lines() {
        let e = parse_trace_line("P4 dir=R seq=17 mt=53 ts=125000\n").unwrap();
        assert_eq!(
            e,
            ProbeEvent::Pfcp { dir: Direction::Recv, sequence: 17, message_type: 53, ts: 125_000 }
        );
        assert_eq!(emit_trace_line(&e).unwrap(), "P4 dir=R seq=17 mt=53 ts=125000");
    }

    #[test]
    fn max_teid_is_full_width() {
        let e = ProbeEvent::M1 { ns: Namespace::Upf3, flow_key: FlowKey(1), teid: u32::MAX, ts: 9 };
        assert_eq!(emit_trace_line(&e).unwrap(), "M1 ns=upf3 key=0000000000000001 teid=ffffffff ts=9");
    }

    #[test]
    fn zero_timestamp_rejected() {
        let e = ProbeEvent::Pfcp { dir: Direction::Send, sequence: 7, message_type: 52, ts: 0 };
        assert!(matches!(emit_trace_line(&e), Err(CodecError::InvalidEvent(_))));
        assert!(parse_trace_line("P4 dir=S seq=7 mt=52 ts=0").is_err());
    }

    #[test]
    fn malformed_variants() {
        for bad in [
            "garbage",
            "",
            "M1 ns=upf1 key=00000000DEADBEEF teid=0000002a ts=1",
            "M1 ns=upf1 key=deadbeef teid=0000002a ts=1",
            "M1 ns=upf1  key=00000000deadbeef teid=0000002a ts=1",
            "M1 ns=upf9 key=00000000deadbeef teid=0000002a ts=1",
            "M1 ns=smf key=00000000deadbeef teid=0000002a ts=1",
            "M3 ns=upf1 key=00000000deadbeef ts=01",
            "M3 ns=upf1 key=00000000deadbeef ts=+1",
            "M3 ns=upf1 key=00000000deadbeef ts=1 extra",
            "P4 dir=X seq=1 mt=52 ts=1",
            "P4 dir=S seq=16777216 mt=52 ts=1",
            "P4 dir=S seq=1 mt=256 ts=1",
            "kworker: TCBPF:",
        ] {
            assert!(
                matches!(parse_trace_line(bad), Err(CodecError::MalformedLine(_))),
                "accepted {bad:?}"
            );
        }
    }
}
