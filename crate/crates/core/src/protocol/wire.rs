//! Framed messages: `u32` payload length, `u8` type, payload. All integers
//! little-endian.

use std::io::{Read, Write};

use crate::dldp::RangeKind;
use crate::he::HeParams;
use crate::varpir::EncodingParams;

use super::cost::Scheme;
use super::ProtocolError;

/// Upper bound on a single frame, well above a full plaintext download of a
/// few million pairs.
pub const MAX_FRAME: usize = 1 << 30;

pub mod msg {
    pub const INIT_REQ: u8 = 0x01;
    pub const INIT_RESP: u8 = 0x02;
    pub const GALOIS_KEYS: u8 = 0x03;
    pub const KEYS_ACK: u8 = 0x04;
    pub const QUERY_PLAIN: u8 = 0x10;
    pub const QUERY_VARPIR: u8 = 0x11;
    pub const RESP_PLAIN: u8 = 0x20;
    pub const RESP_VARPIR: u8 = 0x21;
    pub const STALE_VERSION: u8 = 0x22;
    pub const ADMIN_UPDATE_VALUE: u8 = 0x30;
    pub const ADMIN_BATCH_UPDATE: u8 = 0x31;
    pub const ADMIN_ACK: u8 = 0x32;
    pub const ERROR: u8 = 0x7F;
}

pub mod code {
    pub const MALFORMED: u16 = 1;
    pub const UNKNOWN_TYPE: u16 = 2;
    pub const BAD_RANGE: u16 = 3;
    pub const NO_KEYS: u16 = 4;
    pub const VERSION_GONE: u16 = 5;
    pub const FUTURE_VERSION: u16 = 6;
    pub const COMPUTE: u16 = 7;
    pub const UPDATE_REJECTED: u16 = 8;
    pub const NOT_ADMIN: u16 = 9;
}

/// Offline-phase parameters shipped to a new client.
#[derive(Clone, Debug, PartialEq)]
pub struct InitBundle {
    pub n: u64,
    pub kv_bits: u32,
    pub version: u64,
    pub schemes: Vec<Scheme>,
    pub he_params: HeParams,
    pub encoding: EncodingParams,
    pub pgm_blob: Vec<u8>,
    pub c_fhe_per_plaintext: f64,
    pub c_full_run: f64,
    pub bandwidth_hint: f64,
    pub rtt_hint: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    InitReq,
    InitResp(InitBundle),
    GaloisKeys(Vec<u8>),
    KeysAck,
    QueryPlain { version: u64, kind: RangeKind, l: u64, r: u64 },
    QueryVarPir { version: u64, kind: RangeKind, l_pt: u64, r_pt: u64, cts: Vec<Vec<u8>> },
    RespPlain(Vec<u8>),
    RespVarPir(Vec<u8>),
    Stale { version: u64, pgm_blob: Vec<u8>, inner: Box<Message> },
    AdminUpdateValue { key: u64, value: Vec<u8> },
    AdminBatchUpdate { inserts: Vec<(u64, Vec<u8>)>, deletes: Vec<u64> },
    AdminAck { version: u64 },
    Error { code: u16, message: String },
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn blob(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], ProtocolError> {
        if self.0.len() < len {
            return Err(ProtocolError::Malformed("payload truncated".into()));
        }
        let (head, rest) = self.0.split_at(len);
        self.0 = rest;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8, ProtocolError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, ProtocolError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, ProtocolError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, ProtocolError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, ProtocolError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn blob(&mut self) -> Result<Vec<u8>, ProtocolError> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }
    fn kind(&mut self) -> Result<RangeKind, ProtocolError> {
        let c = self.u8()?;
        RangeKind::from_code(c).ok_or_else(|| ProtocolError::Malformed(format!("range kind {c}")))
    }
    fn rest(&mut self) -> &'a [u8] {
        std::mem::take(&mut self.0)
    }
    fn finish(&self) -> Result<(), ProtocolError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(ProtocolError::Malformed(format!("{} trailing bytes", self.0.len())))
        }
    }
}

impl InitBundle {
    fn write(&self, w: &mut Writer) {
        w.u64(self.n);
        w.u32(self.kv_bits);
        w.u64(self.version);
        w.u8(self.schemes.len() as u8);
        for s in &self.schemes {
            w.u8(s.code());
        }
        let he = &self.he_params;
        w.u32(he.ring_degree as u32);
        w.u64(he.plain_modulus);
        for q in he.cipher_moduli {
            w.u64(q);
        }
        w.f64(he.noise_stddev);
        w.u32(he.decomp_log);
        w.blob(&self.encoding.to_bytes());
        w.blob(&self.pgm_blob);
        w.f64(self.c_fhe_per_plaintext);
        w.f64(self.c_full_run);
        w.f64(self.bandwidth_hint);
        w.f64(self.rtt_hint);
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, ProtocolError> {
        let n = r.u64()?;
        let kv_bits = r.u32()?;
        let version = r.u64()?;
        let count = r.u8()?;
        let schemes = (0..count)
            .map(|_| {
                let c = r.u8()?;
                Scheme::from_code(c).ok_or_else(|| ProtocolError::Malformed(format!("scheme {c}")))
            })
            .collect::<Result<_, _>>()?;
        let he_params = HeParams {
            ring_degree: r.u32()? as usize,
            plain_modulus: r.u64()?,
            cipher_moduli: [r.u64()?, r.u64()?],
            noise_stddev: r.f64()?,
            decomp_log: r.u32()?,
        };
        let encoding = EncodingParams::from_bytes(&r.blob()?)?;
        Ok(InitBundle {
            n,
            kv_bits,
            version,
            schemes,
            he_params,
            encoding,
            pgm_blob: r.blob()?,
            c_fhe_per_plaintext: r.f64()?,
            c_full_run: r.f64()?,
            bandwidth_hint: r.f64()?,
            rtt_hint: r.f64()?,
        })
    }
}

impl Message {
    pub fn type_code(&self) -> u8 {
        match self {
            Message::InitReq => msg::INIT_REQ,
            Message::InitResp(_) => msg::INIT_RESP,
            Message::GaloisKeys(_) => msg::GALOIS_KEYS,
            Message::KeysAck => msg::KEYS_ACK,
            Message::QueryPlain { .. } => msg::QUERY_PLAIN,
            Message::QueryVarPir { .. } => msg::QUERY_VARPIR,
            Message::RespPlain(_) => msg::RESP_PLAIN,
            Message::RespVarPir(_) => msg::RESP_VARPIR,
            Message::Stale { .. } => msg::STALE_VERSION,
            Message::AdminUpdateValue { .. } => msg::ADMIN_UPDATE_VALUE,
            Message::AdminBatchUpdate { .. } => msg::ADMIN_BATCH_UPDATE,
            Message::AdminAck { .. } => msg::ADMIN_ACK,
            Message::Error { .. } => msg::ERROR,
        }
    }

    pub fn error(code: u16, message: impl Into<String>) -> Self {
        Message::Error { code, message: message.into() }
    }

    fn payload(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        match self {
            Message::InitReq | Message::KeysAck => {}
            Message::InitResp(b) => b.write(&mut w),
            Message::GaloisKeys(b) | Message::RespPlain(b) | Message::RespVarPir(b) => w.0.extend_from_slice(b),
            Message::QueryPlain { version, kind, l, r } => {
                w.u64(*version);
                w.u8(kind.code());
                w.u64(*l);
                w.u64(*r);
            }
            Message::QueryVarPir { version, kind, l_pt, r_pt, cts } => {
                w.u64(*version);
                w.u8(kind.code());
                w.u64(*l_pt);
                w.u64(*r_pt);
                w.u16(cts.len() as u16);
                for c in cts {
                    w.blob(c);
                }
            }
            Message::Stale { version, pgm_blob, inner } => {
                w.u64(*version);
                w.blob(pgm_blob);
                w.0.extend_from_slice(&inner.to_frame());
            }
            Message::AdminUpdateValue { key, value } => {
                w.u64(*key);
                w.blob(value);
            }
            Message::AdminBatchUpdate { inserts, deletes } => {
                w.u32(inserts.len() as u32);
                for (k, v) in inserts {
                    w.u64(*k);
                    w.blob(v);
                }
                w.u32(deletes.len() as u32);
                for k in deletes {
                    w.u64(*k);
                }
            }
            Message::AdminAck { version } => w.u64(*version),
            Message::Error { code, message } => {
                w.u16(*code);
                w.0.extend_from_slice(message.as_bytes());
            }
        }
        w.0
    }

    /// Length prefix, type byte, payload.
    pub fn to_frame(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut out = Vec::with_capacity(5 + payload.len());
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.push(self.type_code());
        out.extend_from_slice(&payload);
        out
    }

    pub fn decode(ty: u8, payload: &[u8]) -> Result<Self, ProtocolError> {
        let mut r = Reader(payload);
        let m = match ty {
            msg::INIT_REQ => Message::InitReq,
            msg::KEYS_ACK => Message::KeysAck,
            msg::INIT_RESP => Message::InitResp(InitBundle::read(&mut r)?),
            msg::GALOIS_KEYS => Message::GaloisKeys(r.rest().to_vec()),
            msg::RESP_PLAIN => Message::RespPlain(r.rest().to_vec()),
            msg::RESP_VARPIR => Message::RespVarPir(r.rest().to_vec()),
            msg::QUERY_PLAIN => Message::QueryPlain { version: r.u64()?, kind: r.kind()?, l: r.u64()?, r: r.u64()? },
            msg::QUERY_VARPIR => {
                let version = r.u64()?;
                let kind = r.kind()?;
                let l_pt = r.u64()?;
                let r_pt = r.u64()?;
                let count = r.u16()?;
                let cts = (0..count).map(|_| r.blob()).collect::<Result<_, _>>()?;
                Message::QueryVarPir { version, kind, l_pt, r_pt, cts }
            }
            msg::STALE_VERSION => {
                let version = r.u64()?;
                let pgm_blob = r.blob()?;
                let inner = Message::from_frame(r.rest())?;
                Message::Stale { version, pgm_blob, inner: Box::new(inner) }
            }
            msg::ADMIN_UPDATE_VALUE => Message::AdminUpdateValue { key: r.u64()?, value: r.blob()? },
            msg::ADMIN_BATCH_UPDATE => {
                let count = r.u32()?;
                let inserts = (0..count).map(|_| Ok((r.u64()?, r.blob()?))).collect::<Result<_, ProtocolError>>()?;
                let count = r.u32()?;
                let deletes = (0..count).map(|_| r.u64()).collect::<Result<_, _>>()?;
                Message::AdminBatchUpdate { inserts, deletes }
            }
            msg::ADMIN_ACK => Message::AdminAck { version: r.u64()? },
            msg::ERROR => {
                let code = r.u16()?;
                let message = String::from_utf8_lossy(r.rest()).into_owned();
                Message::Error { code, message }
            }
            other => return Err(ProtocolError::UnknownType(other)),
        };
        r.finish()?;
        Ok(m)
    }

    /// Parses one complete frame.
    pub fn from_frame(frame: &[u8]) -> Result<Self, ProtocolError> {
        if frame.len() < 5 {
            return Err(ProtocolError::Malformed("frame shorter than its header".into()));
        }
        let len = u32::from_le_bytes(frame[..4].try_into().unwrap()) as usize;
        if frame.len() != 5 + len {
            return Err(ProtocolError::Malformed(format!("frame announces {len} bytes, carries {}", frame.len() - 5)));
        }
        Self::decode(frame[4], &frame[5..])
    }
}

pub fn write_frame<W: Write>(w: &mut W, frame: &[u8]) -> std::io::Result<()> {
    w.write_all(frame)?;
    w.flush()
}

/// Reads one frame, or `None` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, ProtocolError> {
    let mut header = [0u8; 5];
    match r.read_exact(&mut header[..1]) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    r.read_exact(&mut header[1..])?;
    let len = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
    if len > MAX_FRAME {
        return Err(ProtocolError::Malformed(format!("frame of {len} bytes")));
    }
    let mut frame = Vec::with_capacity(5 + len);
    frame.extend_from_slice(&header);
    frame.resize(5 + len, 0);
    r.read_exact(&mut frame[5..])?;
    Ok(Some(frame))
}
