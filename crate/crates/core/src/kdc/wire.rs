//! KEYMGMT payloads. All integers big-endian.
//!
//! ```text
//! KeyRequest  01 | session u64 | nonce u64 | held generation u32
//!                | id_len u8 | requester | id_len u8 | peer
//!                | env_len u16 | envelope
//! KeyGrant    02 | session u64 | generation u32
//!                | 2 x ( id_len u8 | recipient | wrapped key (113) )
//! Rejection   03 | session u64 | cause u8
//! ```
//!
//! The request envelope seals every byte before `env_len` to the KDC.

use super::{KdcError, KeyGrant, KeyRequest};
use crate::crypto::{WrappedKey, WRAPPED_KEY_LEN};
use crate::SessionId;

pub const REQUEST_LABEL: &[u8] = b"vpvn key request v1";

const TAG_REQUEST: u8 = 0x01;
const TAG_GRANT: u8 = 0x02;
const TAG_REJECTION: u8 = 0x03;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RejectionCause {
    Unauthorized = 1,
    Replay = 2,
    UnknownSession = 3,
    NotAParty = 4,
    SessionIdInUse = 5,
    StaleGeneration = 6,
}

impl RejectionCause {
    fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            1 => RejectionCause::Unauthorized,
            2 => RejectionCause::Replay,
            3 => RejectionCause::UnknownSession,
            4 => RejectionCause::NotAParty,
            5 => RejectionCause::SessionIdInUse,
            6 => RejectionCause::StaleGeneration,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rejection {
    pub session: SessionId,
    pub cause: RejectionCause,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)]
pub enum KdcMessage {
    Request(KeyRequest),
    Grant(KeyGrant),
    Rejection(Rejection),
}

fn put_id(out: &mut Vec<u8>, id: &str) {
    out.push(id.len() as u8);
    out.extend_from_slice(id.as_bytes());
}

impl KeyRequest {
    pub(super) fn body_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.requester.len() + self.peer.len());
        out.push(TAG_REQUEST);
        out.extend_from_slice(&self.session.0.to_be_bytes());
        out.extend_from_slice(&self.nonce.to_be_bytes());
        out.extend_from_slice(&self.held_generation.to_be_bytes());
        put_id(&mut out, &self.requester);
        put_id(&mut out, &self.peer);
        out
    }
}

impl KdcMessage {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            KdcMessage::Request(r) => {
                let mut out = r.body_bytes();
                out.extend_from_slice(&(r.envelope.len() as u16).to_be_bytes());
                out.extend_from_slice(&r.envelope);
                out
            }
            KdcMessage::Grant(g) => {
                let mut out = vec![TAG_GRANT];
                out.extend_from_slice(&g.session.0.to_be_bytes());
                out.extend_from_slice(&g.generation.to_be_bytes());
                for w in &g.wrapped {
                    put_id(&mut out, &w.recipient);
                    out.extend_from_slice(&w.to_bytes());
                }
                out
            }
            KdcMessage::Rejection(r) => {
                let mut out = vec![TAG_REJECTION];
                out.extend_from_slice(&r.session.0.to_be_bytes());
                out.push(r.cause as u8);
                out
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, KdcError> {
        let mut r = Reader { bytes, pos: 0 };
        let msg = match r.u8()? {
            TAG_REQUEST => {
                let session = SessionId(r.u64()?);
                let nonce = r.u64()?;
                let held_generation = r.u32()?;
                let requester = r.id()?;
                let peer = r.id()?;
                let len = r.u16()? as usize;
                let envelope = r.take(len)?.to_vec();
                KdcMessage::Request(KeyRequest {
                    requester,
                    peer,
                    nonce,
                    session,
                    held_generation,
                    envelope,
                })
            }
            TAG_GRANT => {
                let session = SessionId(r.u64()?);
                let generation = r.u32()?;
                let mut one = || -> Result<WrappedKey, KdcError> {
                    let id = r.id()?;
                    let blob = r.take(WRAPPED_KEY_LEN)?;
                    Ok(WrappedKey::from_bytes(blob, &id, session, generation)?)
                };
                let a = one()?;
                let b = one()?;
                KdcMessage::Grant(KeyGrant {
                    session,
                    generation,
                    wrapped: [a, b],
                })
            }
            TAG_REJECTION => {
                let session = SessionId(r.u64()?);
                let cause = RejectionCause::from_byte(r.u8()?)
                    .ok_or(KdcError::MalformedRequest("unknown rejection cause"))?;
                KdcMessage::Rejection(Rejection { session, cause })
            }
            _ => return Err(KdcError::MalformedRequest("unknown message type")),
        };
        if r.pos != bytes.len() {
            return Err(KdcError::MalformedRequest("trailing bytes"));
        }
        Ok(msg)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], KdcError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(KdcError::MalformedRequest("truncated message"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, KdcError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, KdcError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, KdcError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, KdcError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn id(&mut self) -> Result<String, KdcError> {
        let n = self.u8()? as usize;
        if n == 0 {
            return Err(KdcError::MalformedRequest("empty subscriber id"));
        }
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| KdcError::MalformedRequest("subscriber id is not UTF-8"))
    }
}
