//! Frame log: length-prefixed little-endian binary records, a JSON-lines
//! export, and a SHA-256 digest of the binary form.
//!
//! Record layout (after a `u32` byte length):
//!
//! ```text
//! tick u64 | sim_time f64 | position 3f64 | quat wxyz 4f64 | velocity 6f64
//! wrench 6f64 | wrench_scale f64 | status u8 | infeasible u8 | trigger u8
//! has_tensions u8 [tensions 8f64] | junction_gap f64
//! contacts u32 { point 3f64 normal 3f64 depth f64 primitive u64 has_toi u8 [toi f64] }
//! has_sweep u8 [contact]
//! bead_delta u32 { position 3f64 time f64 }
//! ```
//!
//! Wall-clock step cost is deliberately not recorded.

use std::io::{Cursor, Read};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use nalgebra::{Quaternion, UnitQuaternion, Vector3, Vector6};
use sha2::{Digest, Sha256};

use super::sim::{FrameStatus, HapticFrame};
use super::HapticError;
use crate::rig::GripPose;
use crate::scene::{Contact, PuttySample, Vec3};
use crate::tension::Tensions;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameLog {
    pub frames: Vec<HapticFrame>,
}

fn put_vec(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.write_f64::<LE>(*x).unwrap();
    }
}

fn put_contact(out: &mut Vec<u8>, c: &Contact) {
    put_vec(out, c.point.as_slice());
    put_vec(out, c.normal.as_slice());
    out.write_f64::<LE>(c.depth).unwrap();
    out.write_u64::<LE>(c.primitive as u64).unwrap();
    match c.time_of_impact {
        Some(t) => {
            out.push(1);
            out.write_f64::<LE>(t).unwrap();
        }
        None => out.push(0),
    }
}

pub fn encode_frame(f: &HapticFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(512);
    out.write_u64::<LE>(f.tick).unwrap();
    out.write_f64::<LE>(f.sim_time).unwrap();
    put_vec(&mut out, f.pose.position.as_slice());
    put_vec(&mut out, &f.pose.quaternion_wxyz());
    put_vec(&mut out, f.velocity.as_slice());
    put_vec(&mut out, f.wrench.as_slice());
    out.write_f64::<LE>(f.wrench_scale).unwrap();
    out.push(f.status.code());
    out.push(f.infeasible as u8);
    out.push(f.trigger as u8);
    match &f.tensions {
        Some(t) => {
            out.push(1);
            put_vec(&mut out, &t.0);
        }
        None => out.push(0),
    }
    out.write_f64::<LE>(f.junction_gap).unwrap();
    out.write_u32::<LE>(f.contacts.len() as u32).unwrap();
    for c in &f.contacts {
        put_contact(&mut out, c);
    }
    match &f.sweep {
        Some(c) => {
            out.push(1);
            put_contact(&mut out, c);
        }
        None => out.push(0),
    }
    out.write_u32::<LE>(f.bead_delta.len() as u32).unwrap();
    for s in &f.bead_delta {
        put_vec(&mut out, s.position.as_slice());
        out.write_f64::<LE>(s.time).unwrap();
    }
    out
}

struct Reader<'a>(Cursor<&'a [u8]>);

impl Reader<'_> {
    fn f64(&mut self) -> std::io::Result<f64> {
        self.0.read_f64::<LE>()
    }
    fn vec3(&mut self) -> std::io::Result<Vec3> {
        Ok(Vector3::new(self.f64()?, self.f64()?, self.f64()?))
    }
    fn flag(&mut self) -> std::io::Result<bool> {
        match self.0.read_u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "bad flag")),
        }
    }
    fn contact(&mut self) -> std::io::Result<Contact> {
        let point = self.vec3()?;
        let normal = self.vec3()?;
        let depth = self.f64()?;
        let primitive = self.0.read_u64::<LE>()? as usize;
        let time_of_impact = if self.flag()? { Some(self.f64()?) } else { None };
        Ok(Contact {
            point,
            normal,
            depth,
            primitive,
            time_of_impact,
        })
    }
}

pub fn decode_frame(bytes: &[u8]) -> Result<HapticFrame, HapticError> {
    let bad = |e: std::io::Error| HapticError::Log(format!("truncated or corrupt record: {e}"));
    let mut r = Reader(Cursor::new(bytes));
    let tick = r.0.read_u64::<LE>().map_err(bad)?;
    let sim_time = r.f64().map_err(bad)?;
    let position = r.vec3().map_err(bad)?;
    let mut q = [0.0; 4];
    for x in &mut q {
        *x = r.f64().map_err(bad)?;
    }
    let mut velocity = Vector6::zeros();
    for x in velocity.iter_mut() {
        *x = r.f64().map_err(bad)?;
    }
    let mut wrench = Vector6::zeros();
    for x in wrench.iter_mut() {
        *x = r.f64().map_err(bad)?;
    }
    let wrench_scale = r.f64().map_err(bad)?;
    let status = FrameStatus::from_code(r.0.read_u8().map_err(bad)?)
        .ok_or_else(|| HapticError::Log("unknown status code".into()))?;
    let infeasible = r.flag().map_err(bad)?;
    let trigger = r.flag().map_err(bad)?;
    let tensions = if r.flag().map_err(bad)? {
        let mut t = [0.0; 8];
        for x in &mut t {
            *x = r.f64().map_err(bad)?;
        }
        Some(Tensions(t))
    } else {
        None
    };
    let junction_gap = r.f64().map_err(bad)?;
    let n = r.0.read_u32::<LE>().map_err(bad)? as usize;
    let mut contacts = Vec::with_capacity(n.min(64));
    for _ in 0..n {
        contacts.push(r.contact().map_err(bad)?);
    }
    let sweep = if r.flag().map_err(bad)? { Some(r.contact().map_err(bad)?) } else { None };
    let n = r.0.read_u32::<LE>().map_err(bad)? as usize;
    let mut bead_delta = Vec::with_capacity(n.min(64));
    for _ in 0..n {
        bead_delta.push(PuttySample {
            position: r.vec3().map_err(bad)?,
            time: r.f64().map_err(bad)?,
        });
    }
    if r.0.position() as usize != bytes.len() {
        return Err(HapticError::Log("trailing bytes in record".into()));
    }
    Ok(HapticFrame {
        tick,
        sim_time,
        // stored quaternions are already unit; keep them bit-exact
        pose: GripPose::from_parts(
            position,
            UnitQuaternion::new_unchecked(Quaternion::new(q[0], q[1], q[2], q[3])),
        ),
        velocity,
        contacts,
        sweep,
        wrench,
        wrench_scale,
        tensions,
        status,
        infeasible,
        trigger,
        bead_delta,
        junction_gap,
        step_compute_time: 0.0,
    })
}

impl FrameLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, frame: HapticFrame) {
        self.frames.push(frame);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for f in &self.frames {
            let rec = encode_frame(f);
            out.write_u32::<LE>(rec.len() as u32).unwrap();
            out.extend_from_slice(&rec);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HapticError> {
        let mut cur = Cursor::new(bytes);
        let mut frames = Vec::new();
        while (cur.position() as usize) < bytes.len() {
            let len = cur
                .read_u32::<LE>()
                .map_err(|_| HapticError::Log("truncated length prefix".into()))?
                as usize;
            let mut rec = vec![0u8; len];
            cur.read_exact(&mut rec)
                .map_err(|_| HapticError::Log("truncated record".into()))?;
            frames.push(decode_frame(&rec)?);
        }
        Ok(Self { frames })
    }

    /// SHA-256 of [`FrameLog::to_bytes`].
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes()).into()
    }

    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest())
    }

    /// One JSON object per line; floats print in shortest round-trip form.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for f in &self.frames {
            s.push_str(&serde_json::to_string(f).expect("frames serialize"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> Result<Self, HapticError> {
        let frames = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| HapticError::Log(format!("line {}: {e}", i + 1)))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { frames })
    }
}
