//! Datagram protocol, little-endian throughout.
//!
//! ```text
//! command (66 bytes)
//!   "SHW1" | type u8 = 1 | seq u32 | position 3f64 | quat wxyz 4f64 | trigger u8
//!
//! state (variable)
//!   "SHW1" | type u8 = 2 | tick u64 | sim_time f64 | position 3f64 | quat wxyz 4f64
//!   | wrench 6f64 | tensions 8f64 | status u8 | trigger u8
//!   | contact count u8 { point 3f32 | normal 3f32 | depth f32 }
//!   | bead count u16 { position 3f32 }
//! ```
//!
//! Status: 0 solver not run, 1 optimal, 2 scaled to capability, 3 failed.
//! Tensions are zero when the solver produced none.

use byteorder::{ByteOrder, LittleEndian as LE};
use thiserror::Error;

use super::sim::{FrameStatus, HapticFrame};

pub const MAGIC: [u8; 4] = *b"SHW1";
pub const TYPE_COMMAND: u8 = 1;
pub const TYPE_STATE: u8 = 2;
pub const COMMAND_LEN: usize = 4 + 1 + 4 + 7 * 8 + 1;
const STATE_FIXED_LEN: usize = 4 + 1 + 8 + 8 + 7 * 8 + 6 * 8 + 8 * 8 + 1 + 1;
pub const MAX_CONTACTS: usize = u8::MAX as usize;
pub const MAX_BEAD_SAMPLES: usize = u16::MAX as usize;
/// Largest state packet the encoder can produce.
pub const MAX_STATE_LEN: usize = STATE_FIXED_LEN + 1 + MAX_CONTACTS * 28 + 2 + MAX_BEAD_SAMPLES * 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("packet too short: {0} bytes")]
    Truncated(usize),
    #[error("bad magic")]
    BadMagic,
    #[error("unexpected packet type {0}")]
    BadType(u8),
    #[error("packet length {got} does not match its contents ({expected})")]
    Length { got: usize, expected: usize },
    #[error("invalid field: {0}")]
    InvalidField(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CommandPacket {
    pub seq: u32,
    pub position: [f64; 3],
    /// w, x, y, z
    pub quaternion: [f64; 4],
    pub trigger: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WireContact {
    pub point: [f32; 3],
    pub normal: [f32; 3],
    pub depth: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatePacket {
    pub tick: u64,
    pub sim_time: f64,
    pub position: [f64; 3],
    pub quaternion: [f64; 4],
    pub wrench: [f64; 6],
    pub tensions: [f64; 8],
    pub status: u8,
    pub trigger: bool,
    pub contacts: Vec<WireContact>,
    pub bead_delta: Vec<[f32; 3]>,
}

fn put_f64s(buf: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        let mut b = [0u8; 8];
        LE::write_f64(&mut b, *x);
        buf.extend_from_slice(&b);
    }
}

fn put_f32s(buf: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        let mut b = [0u8; 4];
        LE::write_f32(&mut b, *x);
        buf.extend_from_slice(&b);
    }
}

fn header(bytes: &[u8], expected_type: u8) -> Result<(), ProtocolError> {
    if bytes.len() < 5 {
        return Err(ProtocolError::Truncated(bytes.len()));
    }
    if bytes[..4] != MAGIC {
        return Err(ProtocolError::BadMagic);
    }
    if bytes[4] != expected_type {
        return Err(ProtocolError::BadType(bytes[4]));
    }
    Ok(())
}

fn flag(b: u8) -> Result<bool, ProtocolError> {
    match b {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(ProtocolError::InvalidField("trigger")),
    }
}

fn f64s<const N: usize>(bytes: &[u8]) -> [f64; N] {
    std::array::from_fn(|i| LE::read_f64(&bytes[8 * i..]))
}

fn f32s<const N: usize>(bytes: &[u8]) -> [f32; N] {
    std::array::from_fn(|i| LE::read_f32(&bytes[4 * i..]))
}

impl CommandPacket {
    pub fn encode(&self) -> [u8; COMMAND_LEN] {
        let mut buf = Vec::with_capacity(COMMAND_LEN);
        buf.extend_from_slice(&MAGIC);
        buf.push(TYPE_COMMAND);
        buf.extend_from_slice(&self.seq.to_le_bytes());
        put_f64s(&mut buf, &self.position);
        put_f64s(&mut buf, &self.quaternion);
        buf.push(self.trigger as u8);
        buf.try_into().expect("fixed size")
    }

    /// Parses a command. Non-finite numbers and zero quaternions are
    /// rejected; the quaternion is otherwise passed through unnormalized.
    pub fn decode(bytes: &[u8]) -> Result<Self, ProtocolError> {
        header(bytes, TYPE_COMMAND)?;
        if bytes.len() != COMMAND_LEN {
            return Err(ProtocolError::Length {
                got: bytes.len(),
                expected: COMMAND_LEN,
            });
        }
        let seq = LE::read_u32(&bytes[5..9]);
        let position: [f64; 3] = f64s(&bytes[9..33]);
        let quaternion: [f64; 4] = f64s(&bytes[33..65]);
        let trigger = flag(bytes[65])?;
        if !position.iter().chain(&quaternion).all(|x| x.is_finite()) {
            return Err(ProtocolError::InvalidField("non-finite number"));
        }
        if quaternion.iter().map(|x| x * x).sum::<f64>() < 1e-12 {
            return Err(ProtocolError::InvalidField("zero quaternion"));
        }
        Ok(Self {
            seq,
            position,
            quaternion,
            trigger,
        })
    }
}

impl StatePacket {
    /// Wire view of a frame. Contacts beyond 255 and bead samples beyond
    /// 65535 are dropped (neither happens in practice).
    pub fn from_frame(f: &HapticFrame) -> Self {
        let p = f.pose.position;
        Self {
            tick: f.tick,
            sim_time: f.sim_time,
            position: [p.x, p.y, p.z],
            quaternion: f.pose.quaternion_wxyz(),
            wrench: f.wrench.into(),
            tensions: f.tensions.map_or([0.0; 8], |t| t.0),
            status: f.status.code(),
            trigger: f.trigger,
            contacts: f
                .contacts
                .iter()
                .take(MAX_CONTACTS)
                .map(|c| WireContact {
                    point: c.point.map(|x| x as f32).into(),
                    normal: c.normal.map(|x| x as f32).into(),
                    depth: c.depth as f32,
                })
                .collect(),
            bead_delta: f
                .bead_delta
                .iter()
                .take(MAX_BEAD_SAMPLES)
                .map(|s| s.position.map(|x| x as f32).into())
                .collect(),
        }
    }

    pub fn encoded_len(&self) -> usize {
        STATE_FIXED_LEN + 1 + self.contacts.len() * 28 + 2 + self.bead_delta.len() * 12
    }

    pub fn encode(&self) -> Vec<u8> {
        assert!(self.contacts.len() <= MAX_CONTACTS && self.bead_delta.len() <= MAX_BEAD_SAMPLES);
        let mut buf = Vec::with_capacity(self.encoded_len());
        buf.extend_from_slice(&MAGIC);
        buf.push(TYPE_STATE);
        buf.extend_from_slice(&self.tick.to_le_bytes());
        put_f64s(&mut buf, &[self.sim_time]);
        put_f64s(&mut buf, &self.position);
        put_f64s(&mut buf, &self.quaternion);
        put_f64s(&mut buf, &self.wrench);
        put_f64s(&mut buf, &self.tensions);
        buf.push(self.status);
        buf.push(self.trigger as u8);
        buf.push(self.contacts.len() as u8);
        for c in &self.contacts {
            put_f32s(&mut buf, &c.point);
            put_f32s(&mut buf, &c.normal);
            put_f32s(&mut buf, &[c.depth]);
        }
        buf.extend_from_slice(&(self.bead_delta.len() as u16).to_le_bytes());
        for s in &self.bead_delta {
            put_f32s(&mut buf, s);
        }
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ProtocolError> {
        header(bytes, TYPE_STATE)?;
        if bytes.len() < STATE_FIXED_LEN + 1 {
            return Err(ProtocolError::Truncated(bytes.len()));
        }
        let mut at = 5;
        let mut take = |n: usize| {
            let s = &bytes[at..at + n];
            at += n;
            s
        };
        let tick = LE::read_u64(take(8));
        let sim_time = LE::read_f64(take(8));
        let position = f64s(take(24));
        let quaternion = f64s(take(32));
        let wrench = f64s(take(48));
        let tensions = f64s(take(64));
        let status = take(1)[0];
        if FrameStatus::from_code(status).is_none() {
            return Err(ProtocolError::InvalidField("status"));
        }
        let trigger = flag(take(1)[0])?;
        let n_contacts = take(1)[0] as usize;
        let bead_at = STATE_FIXED_LEN + 1 + n_contacts * 28;
        if bytes.len() < bead_at + 2 {
            return Err(ProtocolError::Truncated(bytes.len()));
        }
        let n_bead = LE::read_u16(&bytes[bead_at..]) as usize;
        let expected = bead_at + 2 + n_bead * 12;
        if bytes.len() != expected {
            return Err(ProtocolError::Length {
                got: bytes.len(),
                expected,
            });
        }
        let contacts = (0..n_contacts)
            .map(|_| {
                let c = take(28);
                WireContact {
                    point: f32s(&c[0..12]),
                    normal: f32s(&c[12..24]),
                    depth: LE::read_f32(&c[24..28]),
                }
            })
            .collect();
        take(2);
        let bead_delta = (0..n_bead).map(|_| f32s(take(12))).collect();
        Ok(Self {
            tick,
            sim_time,
            position,
            quaternion,
            wrench,
            tensions,
            status,
            trigger,
            contacts,
            bead_delta,
        })
    }
}
