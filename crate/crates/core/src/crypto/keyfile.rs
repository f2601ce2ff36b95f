//! Binary key files.
//!
//! ```text
//! magic "VPVK" (4) | format 0x01 | kind (0x01 private, 0x02 public) | length u16 BE | key bytes
//! ```
//!
//! Private files hold the 32-byte scalar, public files the 65-byte
//! uncompressed point.

use super::{CryptoError, KeyPair, PublicPoint, PUBLIC_POINT_LEN, SCALAR_LEN};

pub const KEY_FILE_MAGIC: [u8; 4] = *b"VPVK";
const FORMAT: u8 = 1;
const KIND_PRIVATE: u8 = 1;
const KIND_PUBLIC: u8 = 2;

#[derive(Clone, Debug, PartialEq)]
pub enum KeyFile {
    Private(KeyPair),
    Public(PublicPoint),
}

impl KeyFile {
    pub fn encode(&self) -> Vec<u8> {
        let (kind, body): (u8, Vec<u8>) = match self {
            KeyFile::Private(pair) => (KIND_PRIVATE, pair.secret_bytes().to_vec()),
            KeyFile::Public(point) => (KIND_PUBLIC, point.to_bytes().to_vec()),
        };
        let mut out = Vec::with_capacity(8 + body.len());
        out.extend_from_slice(&KEY_FILE_MAGIC);
        out.push(FORMAT);
        out.push(kind);
        out.extend_from_slice(&(body.len() as u16).to_be_bytes());
        out.extend_from_slice(&body);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < 8 || bytes[..4] != KEY_FILE_MAGIC {
            return Err(CryptoError::Malformed("not a key file"));
        }
        if bytes[4] != FORMAT {
            return Err(CryptoError::Malformed("unsupported key file format"));
        }
        let len = u16::from_be_bytes([bytes[6], bytes[7]]) as usize;
        let body = &bytes[8..];
        if body.len() != len {
            return Err(CryptoError::Malformed("key file length mismatch"));
        }
        match (bytes[5], len) {
            (KIND_PRIVATE, SCALAR_LEN) => KeyPair::from_secret_bytes(body).map(KeyFile::Private),
            (KIND_PUBLIC, PUBLIC_POINT_LEN) => PublicPoint::from_bytes(body).map(KeyFile::Public),
            _ => Err(CryptoError::Malformed("unknown key kind")),
        }
    }
}
