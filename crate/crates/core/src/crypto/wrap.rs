//! ECIES over P-256.
//!
//! Envelope layout: `ephemeral point (65) ‖ ciphertext ‖ tag (16)`. The
//! key-encryption key is HKDF-SHA256 of the ECDH x-coordinate, salted with
//! `ephemeral point ‖ recipient point` and bound to a purpose label. Each KEK
//! encrypts exactly one message, so the AES-256-GCM nonce is fixed at zero.

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::Aes256Gcm;
use hkdf::Hkdf;
use p256::ecdh::diffie_hellman;
use rand_core::{CryptoRng, RngCore};
use sha2::Sha256;
use zeroize::Zeroize;

use super::{CryptoError, KeyPair, PublicPoint, SessionKey, KEY_LEN, PUBLIC_POINT_LEN, TAG_LEN};
use crate::SessionId;

/// Bytes an envelope adds to its plaintext.
pub const ENVELOPE_OVERHEAD: usize = PUBLIC_POINT_LEN + TAG_LEN;

/// Serialized [`WrappedKey`]: `ephemeral point (65) ‖ ciphertext (32) ‖ tag (16)`.
pub const WRAPPED_KEY_LEN: usize = PUBLIC_POINT_LEN + KEY_LEN + TAG_LEN;

const WRAP_LABEL: &[u8] = b"vpvn session key wrap v1";
const ZERO_NONCE: [u8; 12] = [0; 12];

fn kek(shared: &[u8], ephemeral: &[u8; PUBLIC_POINT_LEN], recipient: &PublicPoint, label: &[u8]) -> [u8; 32] {
    let mut salt = [0u8; 2 * PUBLIC_POINT_LEN];
    salt[..PUBLIC_POINT_LEN].copy_from_slice(ephemeral);
    salt[PUBLIC_POINT_LEN..].copy_from_slice(&recipient.to_bytes());
    let mut out = [0u8; 32];
    Hkdf::<Sha256>::new(Some(&salt), shared)
        .expand(label, &mut out)
        .expect("32 bytes is a valid HKDF-SHA256 length");
    out
}

/// Encrypts `plaintext` to `recipient`; only the matching private scalar
/// opens it.
pub fn seal_envelope<R: RngCore + CryptoRng>(
    recipient: &PublicPoint,
    label: &[u8],
    aad: &[u8],
    plaintext: &[u8],
    rng: &mut R,
) -> Result<Vec<u8>, CryptoError> {
    let ephemeral = KeyPair::generate(rng)?;
    let eph_bytes = ephemeral.public().to_bytes();
    let shared = diffie_hellman(ephemeral.secret().to_nonzero_scalar(), recipient.inner().as_affine());
    let mut key = kek(shared.raw_secret_bytes(), &eph_bytes, recipient, label);
    let sealed = Aes256Gcm::new((&key).into())
        .encrypt((&ZERO_NONCE).into(), Payload { msg: plaintext, aad })
        .expect("AEAD input within length limits");
    key.zeroize();

    let mut out = Vec::with_capacity(ENVELOPE_OVERHEAD + plaintext.len());
    out.extend_from_slice(&eph_bytes);
    out.extend_from_slice(&sealed);
    Ok(out)
}

/// Opens an envelope. A wrong key, a tampered byte and an invalid
/// ephemeral point all report [`CryptoError::IntegrityFailure`].
pub fn open_envelope(recipient: &KeyPair, label: &[u8], aad: &[u8], blob: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if blob.len() < ENVELOPE_OVERHEAD {
        return Err(CryptoError::Malformed("envelope shorter than its overhead"));
    }
    let (eph, sealed) = blob.split_at(PUBLIC_POINT_LEN);
    let ephemeral = PublicPoint::from_bytes(eph).map_err(|_| CryptoError::IntegrityFailure)?;
    let eph_bytes: [u8; PUBLIC_POINT_LEN] = eph.try_into().unwrap();
    let shared = diffie_hellman(recipient.secret().to_nonzero_scalar(), ephemeral.inner().as_affine());
    let mut key = kek(shared.raw_secret_bytes(), &eph_bytes, recipient.public(), label);
    let opened = Aes256Gcm::new((&key).into())
        .decrypt((&ZERO_NONCE).into(), Payload { msg: sealed, aad })
        .map_err(|_| CryptoError::IntegrityFailure);
    key.zeroize();
    opened
}

/// A session key encrypted to one party.
///
/// Only `ephemeral ‖ ciphertext ‖ tag` goes on the wire as the 113-byte blob.
/// Recipient id, session id and generation travel alongside it in the grant
/// and are bound to the blob as associated data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WrappedKey {
    pub recipient: String,
    pub session: SessionId,
    pub generation: u32,
    blob: [u8; WRAPPED_KEY_LEN],
}

impl WrappedKey {
    pub fn to_bytes(&self) -> [u8; WRAPPED_KEY_LEN] {
        self.blob
    }

    pub fn from_bytes(blob: &[u8], recipient: &str, session: SessionId, generation: u32) -> Result<Self, CryptoError> {
        let blob = blob
            .try_into()
            .map_err(|_| CryptoError::Malformed("wrapped key must be 113 bytes"))?;
        Ok(Self {
            recipient: recipient.to_string(),
            session,
            generation,
            blob,
        })
    }

    pub fn ephemeral(&self) -> &[u8] {
        &self.blob[..PUBLIC_POINT_LEN]
    }

    pub fn ciphertext(&self) -> &[u8] {
        &self.blob[PUBLIC_POINT_LEN..PUBLIC_POINT_LEN + KEY_LEN]
    }

    pub fn tag(&self) -> &[u8] {
        &self.blob[PUBLIC_POINT_LEN + KEY_LEN..]
    }
}

fn wrap_aad(recipient: &str, session: SessionId, generation: u32) -> Vec<u8> {
    let mut aad = Vec::with_capacity(12 + recipient.len());
    aad.extend_from_slice(&session.0.to_be_bytes());
    aad.extend_from_slice(&generation.to_be_bytes());
    aad.extend_from_slice(recipient.as_bytes());
    aad
}

pub fn wrap_session_key<R: RngCore + CryptoRng>(
    key: &SessionKey,
    recipient_id: &str,
    recipient: &PublicPoint,
    rng: &mut R,
) -> Result<WrappedKey, CryptoError> {
    let aad = wrap_aad(recipient_id, key.session(), key.generation());
    let blob = seal_envelope(recipient, WRAP_LABEL, &aad, key.material(), rng)?;
    WrappedKey::from_bytes(&blob, recipient_id, key.session(), key.generation())
}

pub fn unwrap_session_key(wrapped: &WrappedKey, recipient: &KeyPair) -> Result<SessionKey, CryptoError> {
    let aad = wrap_aad(&wrapped.recipient, wrapped.session, wrapped.generation);
    let mut material = open_envelope(recipient, WRAP_LABEL, &aad, &wrapped.blob)?;
    let key: [u8; KEY_LEN] = material
        .as_slice()
        .try_into()
        .map_err(|_| CryptoError::Malformed("unwrapped key length"))?;
    material.zeroize();
    Ok(SessionKey::from_parts(key, wrapped.session, wrapped.generation))
}
