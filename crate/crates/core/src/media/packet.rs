//! Packet framing.
//!
//! ```text
//!  0        1        2        3        4                               12
//! +--------+--------+--------+--------+--------------------------------+
//! | ver=01 |  type  | flags  | rsvd=0 |        session id (u64)        |
//! +--------+--------+--------+--------+--------------------------------+
//! 12                              20                 24
//! +--------------------------------+-----------------+
//! |         sequence (u64)         | payload len u32 |  payload [+ tag]
//! +--------------------------------+-----------------+
//! ```
//!
//! Flags: bits 0-2 priority, bits 3-4 QoS class, bit 5 encrypted, bits 6-7
//! zero. All integers big-endian. The payload length excludes the 16-byte tag
//! that follows an encrypted payload.

use thiserror::Error;

use crate::crypto::TAG_LEN;
use crate::SessionId;

pub const HEADER_LEN: usize = 24;
pub const VERSION: u8 = 0x01;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("unsupported version {0:#04x}")]
    BadVersion(u8),
    #[error("truncated frame: need {needed} bytes, have {got}")]
    Truncated { needed: usize, got: usize },
    #[error("length field says {declared} payload bytes, frame carries {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("reserved bits are not zero")]
    NonzeroReserved,
    #[error("unknown packet type {0}")]
    BadType(u8),
    #[error("encrypted flag on a non-media packet")]
    EncryptedNonMedia,
    #[error("flag field out of range")]
    BadFlags,
    #[error("payload does not fit a 32-bit length")]
    TooLarge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PacketType {
    Signaling = 0,
    Audio = 1,
    Video = 2,
    KeyMgmt = 3,
}

impl PacketType {
    pub fn is_media(self) -> bool {
        matches!(self, PacketType::Audio | PacketType::Video)
    }

    fn from_byte(b: u8) -> Result<Self, FrameError> {
        Ok(match b {
            0 => PacketType::Signaling,
            1 => PacketType::Audio,
            2 => PacketType::Video,
            3 => PacketType::KeyMgmt,
            other => return Err(FrameError::BadType(other)),
        })
    }
}

/// Cleartext processing hints plus the encrypted marker.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Flags {
    priority: u8,
    qos: u8,
    pub encrypted: bool,
}

impl Flags {
    /// `priority` 0-7, `qos` 0-3.
    pub fn new(priority: u8, qos: u8) -> Result<Self, FrameError> {
        if priority > 7 || qos > 3 {
            return Err(FrameError::BadFlags);
        }
        Ok(Self {
            priority,
            qos,
            encrypted: false,
        })
    }

    pub fn priority(&self) -> u8 {
        self.priority
    }

    pub fn qos(&self) -> u8 {
        self.qos
    }

    pub fn with_encrypted(self, encrypted: bool) -> Self {
        Self { encrypted, ..self }
    }

    pub fn to_byte(self) -> u8 {
        self.priority | (self.qos << 3) | ((self.encrypted as u8) << 5)
    }

    pub fn from_byte(b: u8) -> Result<Self, FrameError> {
        if b & 0xc0 != 0 {
            return Err(FrameError::NonzeroReserved);
        }
        Ok(Self {
            priority: b & 0x07,
            qos: (b >> 3) & 0x03,
            encrypted: b & 0x20 != 0,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PacketHeader {
    pub packet_type: PacketType,
    pub flags: Flags,
    pub session: SessionId,
    pub sequence: u64,
    pub payload_len: u32,
}

impl PacketHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0] = VERSION;
        b[1] = self.packet_type as u8;
        b[2] = self.flags.to_byte();
        b[3] = 0;
        b[4..12].copy_from_slice(&self.session.0.to_be_bytes());
        b[12..20].copy_from_slice(&self.sequence.to_be_bytes());
        b[20..24].copy_from_slice(&self.payload_len.to_be_bytes());
        b
    }

    /// Parses only the fixed header, as a router reading priority and QoS
    /// would. Does not look at the payload.
    pub fn peek(bytes: &[u8]) -> Result<Self, FrameError> {
        if bytes.len() < HEADER_LEN {
            return Err(FrameError::Truncated {
                needed: HEADER_LEN,
                got: bytes.len(),
            });
        }
        if bytes[0] != VERSION {
            return Err(FrameError::BadVersion(bytes[0]));
        }
        if bytes[3] != 0 {
            return Err(FrameError::NonzeroReserved);
        }
        let packet_type = PacketType::from_byte(bytes[1])?;
        let flags = Flags::from_byte(bytes[2])?;
        if flags.encrypted && !packet_type.is_media() {
            return Err(FrameError::EncryptedNonMedia);
        }
        Ok(Self {
            packet_type,
            flags,
            session: SessionId(u64::from_be_bytes(bytes[4..12].try_into().unwrap())),
            sequence: u64::from_be_bytes(bytes[12..20].try_into().unwrap()),
            payload_len: u32::from_be_bytes(bytes[20..24].try_into().unwrap()),
        })
    }

    fn wire_payload_len(&self) -> usize {
        self.payload_len as usize + if self.flags.encrypted { TAG_LEN } else { 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MediaPacket {
    pub header: PacketHeader,
    /// Plaintext, or ciphertext followed by the tag when encrypted.
    pub payload: Vec<u8>,
}

impl MediaPacket {
    /// Cleartext packet with a consistent length field.
    pub fn new(
        packet_type: PacketType,
        flags: Flags,
        session: SessionId,
        sequence: u64,
        payload: Vec<u8>,
    ) -> Result<Self, FrameError> {
        let payload_len = u32::try_from(payload.len()).map_err(|_| FrameError::TooLarge)?;
        Ok(Self {
            header: PacketHeader {
                packet_type,
                flags: Flags {
                    encrypted: false,
                    ..flags
                },
                session,
                sequence,
                payload_len,
            },
            payload,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&self.header.to_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FrameError> {
        let header = PacketHeader::peek(bytes)?;
        let actual = bytes.len() - HEADER_LEN;
        let expected = header.wire_payload_len();
        if actual != expected {
            return Err(FrameError::LengthMismatch {
                declared: expected,
                actual,
            });
        }
        Ok(Self {
            header,
            payload: bytes[HEADER_LEN..].to_vec(),
        })
    }
}
