//! CSV datasets: matched pairs, PFCP transactions and CDF exports.
//!
//! Headers are fixed; hex fields are lowercase and fixed width, everything
//! else is a plain decimal integer, and rows end in LF.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::codec::{FlowKey, Namespace, Slice};
use crate::matcher::MatchedPair;
use crate::pfcp::{MsgClass, PfcpTransaction};

pub const PAIRS_HEADER: [&str; 8] = ["slice", "load", "upf", "teid", "flow_key", "t_m1_ns", "t_m3_ns", "delay_ns"];
pub const PFCP_HEADER: [&str; 7] = ["load", "msg_class", "seq", "t_send_ns", "t_recv_ns", "rtt_ns", "retransmitted"];
pub const CDF_HEADER: [&str; 2] = ["delay_ns", "cum_fraction"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("schema error at record {record}: {reason}")]
    Schema { record: u64, reason: String },
}

impl From<csv::Error> for DatasetError {
    fn from(e: csv::Error) -> Self {
        let record = e.position().map_or(0, |p| p.record());
        match e.into_kind() {
            csv::ErrorKind::Io(io) => DatasetError::Io(io),
            other => DatasetError::Schema { record, reason: format!("{other:?}") },
        }
    }
}

fn schema(record: u64, reason: impl Into<String>) -> DatasetError {
    DatasetError::Schema { record, reason: reason.into() }
}

/// One row of the matched-pair dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRecord {
    pub slice: Slice,
    pub load: String,
    pub pair: MatchedPair,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PfcpRecord {
    pub load: String,
    pub transaction: PfcpTransaction,
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(r)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, want: &[&str]) -> Result<(), DatasetError> {
    let got = rdr.headers()?;
    if got.iter().ne(want.iter().copied()) {
        return Err(schema(0, format!("expected header {:?}, found {:?}", want.join(","), got.iter().collect::<Vec<_>>().join(","))));
    }
    Ok(())
}

fn field(rec: &csv::StringRecord, i: usize, n: u64) -> Result<&str, DatasetError> {
    rec.get(i).ok_or_else(|| schema(n, format!("missing column {i}")))
}

fn decimal(s: &str, what: &str, n: u64) -> Result<u64, DatasetError> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(schema(n, format!("{what}: not a decimal integer: {s:?}")));
    }
    s.parse().map_err(|_| schema(n, format!("{what}: out of range: {s:?}")))
}

fn hex(s: &str, width: usize, what: &str, n: u64) -> Result<u64, DatasetError> {
    if s.len() != width || !s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
        return Err(schema(n, format!("{what}: expected {width} lowercase hex digits, found {s:?}")));
    }
    u64::from_str_radix(s, 16).map_err(|_| schema(n, format!("{what}: bad hex")))
}

pub struct PairWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> PairWriter<W> {
    /// Writes the header immediately, so an empty dataset is still a valid file.
    pub fn new(w: W) -> Result<Self, DatasetError> {
        let mut inner = writer(w);
        inner.write_record(PAIRS_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, slice: Slice, load: &str, p: &MatchedPair) -> Result<(), DatasetError> {
        self.inner.write_record([
            slice.as_str(),
            load,
            p.namespace.as_str(),
            &format!("{:08x}", p.teid),
            &p.flow_key.to_string(),
            &p.t_m1.to_string(),
            &p.t_m3.to_string(),
            &p.delay.to_string(),
        ])?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), DatasetError> {
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W, DatasetError> {
        self.inner.into_inner().map_err(|e| DatasetError::Io(e.into_error()))
    }
}

pub struct PfcpWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> PfcpWriter<W> {
    pub fn new(w: W) -> Result<Self, DatasetError> {
        let mut inner = writer(w);
        inner.write_record(PFCP_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, load: &str, t: &PfcpTransaction) -> Result<(), DatasetError> {
        self.inner.write_record([
            load,
            t.msg_class.as_str(),
            &t.sequence.to_string(),
            &t.t_send.to_string(),
            &t.t_recv.to_string(),
            &t.rtt.to_string(),
            if t.retransmitted { "1" } else { "0" },
        ])?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), DatasetError> {
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W, DatasetError> {
        self.inner.into_inner().map_err(|e| DatasetError::Io(e.into_error()))
    }
}

/// Streams validated rows from a matched-pair CSV.
pub fn pair_records<R: Read>(r: R) -> Result<impl Iterator<Item = Result<PairRecord, DatasetError>>, DatasetError> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &PAIRS_HEADER)?;
    Ok(rdr.into_records().enumerate().map(|(i, rec)| parse_pair(&rec?, i as u64 + 1)))
}

pub fn read_pairs<R: Read>(r: R) -> Result<Vec<PairRecord>, DatasetError> {
    pair_records(r)?.collect()
}

fn parse_pair(rec: &csv::StringRecord, n: u64) -> Result<PairRecord, DatasetError> {
    let slice: Slice = field(rec, 0, n)?.parse().map_err(|e| schema(n, format!("{e}")))?;
    let load = field(rec, 1, n)?.to_owned();
    let namespace: Namespace = field(rec, 2, n)?.parse().map_err(|e| schema(n, format!("{e}")))?;
    if namespace.slice() != Some(slice) {
        return Err(schema(n, format!("upf {namespace} does not serve slice {slice}")));
    }
    let teid = hex(field(rec, 3, n)?, 8, "teid", n)? as u32;
    let flow_key = FlowKey(hex(field(rec, 4, n)?, 16, "flow_key", n)?);
    let t_m1 = decimal(field(rec, 5, n)?, "t_m1_ns", n)?;
    let t_m3 = decimal(field(rec, 6, n)?, "t_m3_ns", n)?;
    let delay = decimal(field(rec, 7, n)?, "delay_ns", n)?;
    if t_m3.checked_sub(t_m1) != Some(delay) {
        return Err(schema(n, "delay_ns != t_m3_ns - t_m1_ns"));
    }
    Ok(PairRecord { slice, load, pair: MatchedPair { namespace, teid, flow_key, t_m1, t_m3, delay } })
}

pub fn pfcp_records<R: Read>(r: R) -> Result<impl Iterator<Item = Result<PfcpRecord, DatasetError>>, DatasetError> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &PFCP_HEADER)?;
    Ok(rdr.into_records().enumerate().map(|(i, rec)| parse_pfcp(&rec?, i as u64 + 1)))
}

pub fn read_pfcp<R: Read>(r: R) -> Result<Vec<PfcpRecord>, DatasetError> {
    pfcp_records(r)?.collect()
}

fn parse_pfcp(rec: &csv::StringRecord, n: u64) -> Result<PfcpRecord, DatasetError> {
    let load = field(rec, 0, n)?.to_owned();
    let msg_class: MsgClass = field(rec, 1, n)?.parse().map_err(|e| schema(n, format!("{e}")))?;
    let sequence = decimal(field(rec, 2, n)?, "seq", n)?;
    if sequence >= 1 << 24 {
        return Err(schema(n, "seq exceeds 24 bits"));
    }
    let t_send = decimal(field(rec, 3, n)?, "t_send_ns", n)?;
    let t_recv = decimal(field(rec, 4, n)?, "t_recv_ns", n)?;
    let rtt = decimal(field(rec, 5, n)?, "rtt_ns", n)?;
    if t_recv.checked_sub(t_send) != Some(rtt) {
        return Err(schema(n, "rtt_ns != t_recv_ns - t_send_ns"));
    }
    let retransmitted = match field(rec, 6, n)? {
        "0" => false,
        "1" => true,
        other => return Err(schema(n, format!("retransmitted must be 0 or 1, found {other:?}"))),
    };
    // The request type is not stored; reconstruct the canonical one per class.
    let request_type = match msg_class {
        MsgClass::Establishment => crate::codec::pfcp::MSG_SESSION_ESTABLISHMENT_REQUEST,
        MsgClass::Modification => crate::codec::pfcp::MSG_SESSION_MODIFICATION_REQUEST,
        MsgClass::Deletion => crate::codec::pfcp::MSG_SESSION_DELETION_REQUEST,
        MsgClass::Other => 0,
    };
    Ok(PfcpRecord {
        load,
        transaction: PfcpTransaction {
            sequence: sequence as u32,
            msg_class,
            request_type,
            t_send,
            t_recv,
            rtt,
            retransmitted,
        },
    })
}

/// Writes `(delay_ns, cum_fraction)` points with six decimal places.
pub fn write_cdf<W: Write>(w: W, points: &[(u64, f64)]) -> Result<(), DatasetError> {
    let mut wtr = writer(w);
    wtr.write_record(CDF_HEADER)?;
    for (d, f) in points {
        wtr.write_record([d.to_string(), format!("{f:.6}")])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_cdf<R: Read>(r: R) -> Result<Vec<(u64, f64)>, DatasetError> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &CDF_HEADER)?;
    rdr.into_records()
        .enumerate()
        .map(|(i, rec)| {
            let (rec, n) = (rec?, i as u64 + 1);
            let d = decimal(field(&rec, 0, n)?, "delay_ns", n)?;
            let f: f64 = field(&rec, 1, n)?.parse().map_err(|_| schema(n, "cum_fraction is not a number"))?;
            if !(0.0..=1.0).contains(&f) {
                return Err(schema(n, "cum_fraction outside [0, 1]"));
            }
            Ok((d, f))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> MatchedPair {
        MatchedPair {
            namespace: Namespace::Upf1,
            teid: 0xabcd,
            flow_key: FlowKey(0xdead_beef),
            t_m1: 1_000_000,
            t_m3: 1_030_000,
            delay: 30_000,
        }
    }

    #[test]
    fn pairs_bit_exact() {
        let mut w = PairWriter::new(Vec::new()).unwrap();
        w.write(Slice::Embb, "Heavy", &pair()).unwrap();
        let bytes = w.into_inner().unwrap();
        assert_eq!(
            String::from_utf8(bytes.clone()).unwrap(),
            "slice,load,upf,teid,flow_key,t_m1_ns,t_m3_ns,delay_ns\n\
             eMBB,Heavy,upf1,0000abcd,00000000deadbeef,1000000,1030000,30000\n"
        );
        let back = read_pairs(&bytes[..]).unwrap();
        assert_eq!(back, vec![PairRecord { slice: Slice::Embb, load: "Heavy".into(), pair: pair() }]);
    }

    #[test]
    fn empty_pairs_file_has_header() {
        let bytes = PairWriter::new(Vec::new()).unwrap().into_inner().unwrap();
        assert_eq!(bytes, b"slice,load,upf,teid,flow_key,t_m1_ns,t_m3_ns,delay_ns\n");
        assert!(read_pairs(&bytes[..]).unwrap().is_empty());
    }

    #[test]
    fn malformed_pairs() {
        let head = "slice,load,upf,teid,flow_key,t_m1_ns,t_m3_ns,delay_ns\n";
        for body in [
            "eMBB,Heavy,upf1,0000ABCD,00000000deadbeef,1000000,1030000,30000\n",
            "eMBB,Heavy,upf2,0000abcd,00000000deadbeef,1000000,1030000,30000\n",
            "eMBB,Heavy,upf1,0000abcd,00000000deadbeef,1000000,1030000,30001\n",
            "eMBB,Heavy,upf1,0000abcd,00000000deadbeef,1000000,1030000\n",
            "eMBB,Heavy,upf1,0000abcd,00000000deadbeef,-1,1030000,30000\n",
        ] {
            let input = format!("{head}{body}");
            assert!(matches!(read_pairs(input.as_bytes()), Err(DatasetError::Schema { .. })), "{body}");
        }
        assert!(matches!(read_pairs("a,b\n".as_bytes()), Err(DatasetError::Schema { .. })));
    }

    #[test]
    fn pfcp_round_trip() {
        let t = PfcpTransaction {
            sequence: 7,
            msg_class: MsgClass::Modification,
            request_type: 52,
            t_send: 1,
            t_recv: 125_001,
            rtt: 125_000,
            retransmitted: true,
        };
        let mut w = PfcpWriter::new(Vec::new()).unwrap();
        w.write("Light", &t).unwrap();
        let bytes = w.into_inner().unwrap();
        assert_eq!(
            String::from_utf8(bytes.clone()).unwrap(),
            "load,msg_class,seq,t_send_ns,t_recv_ns,rtt_ns,retransmitted\nLight,Modification,7,1,125001,125000,1\n"
        );
        assert_eq!(read_pfcp(&bytes[..]).unwrap(), vec![PfcpRecord { load: "Light".into(), transaction: t }]);
        let bad = "load,msg_class,seq,t_send_ns,t_recv_ns,rtt_ns,retransmitted\nLight,Modification,7,1,125001,125000,yes\n";
        assert!(read_pfcp(bad.as_bytes()).is_err());
    }

    #[test]
    fn cdf_round_trip() {
        let mut out = Vec::new();
        write_cdf(&mut out, &[(10, 0.5), (20, 1.0)]).unwrap();
        assert_eq!(String::from_utf8(out.clone()).unwrap(), "delay_ns,cum_fraction\n10,0.500000\n20,1.000000\n");
        assert_eq!(read_cdf(&out[..]).unwrap(), vec![(10, 0.5), (20, 1.0)]);
    }
}
