//! Cryptographic primitives.
//!
//! - Subscriber key pairs on NIST P-256, public points serialized as 65-byte
//!   uncompressed SEC1.
//! - Session keys: 256-bit AES keys tagged with a session id and a
//!   generation index.
//! - Key wrapping: ECIES over P-256 (ephemeral ECDH, HKDF-SHA256, AES-256-GCM).
//! - Payload sealing: AES-256-GCM with 96-bit nonces built from a direction
//!   byte and a 64-bit sequence number, guarded against reuse.
//!
//! Every operation takes its randomness from the caller, so a seeded
//! generator replays a whole run bit for bit.

mod keyfile;
mod wrap;

pub use keyfile::{KeyFile, KEY_FILE_MAGIC};
pub use wrap::{
    open_envelope, seal_envelope, unwrap_session_key, wrap_session_key, WrappedKey, ENVELOPE_OVERHEAD,
    WRAPPED_KEY_LEN,
};

use std::fmt;

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::Aes256Gcm;
use chacha20poly1305::ChaCha20Poly1305;
use p256::elliptic_curve::sec1::ToEncodedPoint;
use p256::{PublicKey, SecretKey};
use rand_core::{CryptoRng, RngCore};
use thiserror::Error;
use zeroize::Zeroize;

use crate::SessionId;

pub const KEY_LEN: usize = 32;
pub const TAG_LEN: usize = 16;
pub const NONCE_LEN: usize = 12;
pub const PUBLIC_POINT_LEN: usize = 65;
pub const SCALAR_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("entropy source failed")]
    EntropyFailure,
    #[error("invalid public point")]
    InvalidPublicPoint,
    #[error("integrity check failed")]
    IntegrityFailure,
    #[error("malformed input: {0}")]
    Malformed(&'static str),
    #[error("nonce reuse: generation {generation}, {direction:?} sequence {sequence}")]
    NonceReuse {
        generation: u32,
        direction: Direction,
        sequence: u64,
    },
}

/// Validated point on P-256.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PublicPoint(PublicKey);

impl PublicPoint {
    /// Accepts uncompressed SEC1 only; rejects points off the curve.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != PUBLIC_POINT_LEN || bytes[0] != 0x04 {
            return Err(CryptoError::InvalidPublicPoint);
        }
        PublicKey::from_sec1_bytes(bytes)
            .map(Self)
            .map_err(|_| CryptoError::InvalidPublicPoint)
    }

    pub fn to_bytes(&self) -> [u8; PUBLIC_POINT_LEN] {
        let point = self.0.to_encoded_point(false);
        point.as_bytes().try_into().expect("uncompressed P-256 point")
    }

    pub(crate) fn inner(&self) -> &PublicKey {
        &self.0
    }
}

impl fmt::Debug for PublicPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.to_bytes();
        write!(f, "PublicPoint(")?;
        for byte in &b[1..9] {
            write!(f, "{byte:02x}")?;
        }
        write!(f, "..)")
    }
}

/// Long-term (or ephemeral) P-256 key pair.
#[derive(Clone)]
pub struct KeyPair {
    secret: SecretKey,
    public: PublicPoint,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("public", &self.public).finish_non_exhaustive()
    }
}

impl PartialEq for KeyPair {
    fn eq(&self, other: &Self) -> bool {
        self.public == other.public && self.secret_bytes() == other.secret_bytes()
    }
}

impl KeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Result<Self, CryptoError> {
        // Rejection sampling; a 32-byte draw is out of range with
        // probability about 2^-32.
        for _ in 0..8 {
            let mut bytes = [0u8; SCALAR_LEN];
            rng.try_fill_bytes(&mut bytes).map_err(|_| CryptoError::EntropyFailure)?;
            let parsed = Self::from_secret_bytes(&bytes);
            bytes.zeroize();
            if let Ok(pair) = parsed {
                return Ok(pair);
            }
        }
        Err(CryptoError::EntropyFailure)
    }

    pub fn from_secret_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let secret = SecretKey::from_slice(bytes).map_err(|_| CryptoError::Malformed("private scalar"))?;
        let public = PublicPoint(secret.public_key());
        Ok(Self { secret, public })
    }

    pub fn public(&self) -> &PublicPoint {
        &self.public
    }

    pub fn secret_bytes(&self) -> [u8; SCALAR_LEN] {
        self.secret.to_bytes().into()
    }

    pub(crate) fn secret(&self) -> &SecretKey {
        &self.secret
    }
}

/// Temporary AES-256 key of one session generation.
#[derive(Clone, PartialEq, Eq)]
pub struct SessionKey {
    material: [u8; KEY_LEN],
    session: SessionId,
    generation: u32,
}

impl Drop for SessionKey {
    fn drop(&mut self) {
        self.material.zeroize();
    }
}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionKey")
            .field("session", &self.session)
            .field("generation", &self.generation)
            .finish_non_exhaustive()
    }
}

impl SessionKey {
    /// Fresh key with generation index 1.
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R, session: SessionId) -> Result<Self, CryptoError> {
        Self::generate_generation(rng, session, 1)
    }

    pub fn generate_generation<R: RngCore + CryptoRng>(
        rng: &mut R,
        session: SessionId,
        generation: u32,
    ) -> Result<Self, CryptoError> {
        let mut material = [0u8; KEY_LEN];
        rng.try_fill_bytes(&mut material).map_err(|_| CryptoError::EntropyFailure)?;
        Ok(Self {
            material,
            session,
            generation,
        })
    }

    pub fn from_parts(material: [u8; KEY_LEN], session: SessionId, generation: u32) -> Self {
        Self {
            material,
            session,
            generation,
        }
    }

    pub fn material(&self) -> &[u8; KEY_LEN] {
        &self.material
    }

    pub fn session(&self) -> SessionId {
        self.session
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }
}

/// Which party of a session sealed a packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Initiator = 0,
    Responder = 1,
}

impl Direction {
    pub fn opposite(self) -> Self {
        match self {
            Direction::Initiator => Direction::Responder,
            Direction::Responder => Direction::Initiator,
        }
    }
}

/// `direction ‖ 00 00 00 ‖ sequence (big-endian)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Nonce([u8; NONCE_LEN]);

impl Nonce {
    pub fn as_bytes(&self) -> &[u8; NONCE_LEN] {
        &self.0
    }

    pub fn direction(&self) -> Direction {
        if self.0[0] == 0 {
            Direction::Initiator
        } else {
            Direction::Responder
        }
    }

    pub fn sequence(&self) -> u64 {
        u64::from_be_bytes(self.0[4..].try_into().unwrap())
    }
}

pub fn derive_nonce(direction: Direction, sequence: u64) -> Nonce {
    let mut n = [0u8; NONCE_LEN];
    n[0] = direction as u8;
    n[4..].copy_from_slice(&sequence.to_be_bytes());
    Nonce(n)
}

/// Authenticated cipher protecting media payloads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum CipherSuite {
    #[default]
    Aes256Gcm,
    ChaCha20Poly1305,
}

impl CipherSuite {
    fn seal(self, key: &[u8; KEY_LEN], nonce: &Nonce, aad: &[u8], plaintext: &[u8]) -> Vec<u8> {
        let payload = Payload { msg: plaintext, aad };
        let out = match self {
            CipherSuite::Aes256Gcm => Aes256Gcm::new(key.into()).encrypt(nonce.as_bytes().into(), payload),
            CipherSuite::ChaCha20Poly1305 => {
                ChaCha20Poly1305::new(key.into()).encrypt(nonce.as_bytes().into(), payload)
            }
        };
        out.expect("AEAD input within length limits")
    }

    fn open(self, key: &[u8; KEY_LEN], nonce: &Nonce, aad: &[u8], sealed: &[u8]) -> Result<Vec<u8>, CryptoError> {
        if sealed.len() < TAG_LEN {
            return Err(CryptoError::Malformed("sealed payload shorter than its tag"));
        }
        let payload = Payload { msg: sealed, aad };
        match self {
            CipherSuite::Aes256Gcm => Aes256Gcm::new(key.into()).decrypt(nonce.as_bytes().into(), payload),
            CipherSuite::ChaCha20Poly1305 => ChaCha20Poly1305::new(key.into()).decrypt(nonce.as_bytes().into(), payload),
        }
        .map_err(|_| CryptoError::IntegrityFailure)
    }
}

/// Per-session high-water marks of sealed sequence numbers, one per
/// direction, reset whenever a new key generation is used.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NonceGuard {
    generation: u32,
    last: [Option<u64>; 2],
}

impl NonceGuard {
    pub fn new() -> Self {
        Self::default()
    }

    fn claim(&mut self, generation: u32, nonce: &Nonce) -> Result<(), CryptoError> {
        if generation != self.generation {
            self.generation = generation;
            self.last = [None, None];
        }
        let direction = nonce.direction();
        let sequence = nonce.sequence();
        let slot = &mut self.last[direction as usize];
        if slot.is_some_and(|last| sequence <= last) {
            return Err(CryptoError::NonceReuse {
                generation,
                direction,
                sequence,
            });
        }
        *slot = Some(sequence);
        Ok(())
    }
}

/// AES-256-GCM seal; output is `ciphertext ‖ 16-byte tag`.
pub fn seal_payload(
    key: &SessionKey,
    guard: &mut NonceGuard,
    nonce: Nonce,
    aad: &[u8],
    plaintext: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    seal_payload_with(CipherSuite::Aes256Gcm, key, guard, nonce, aad, plaintext)
}

pub fn seal_payload_with(
    suite: CipherSuite,
    key: &SessionKey,
    guard: &mut NonceGuard,
    nonce: Nonce,
    aad: &[u8],
    plaintext: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    guard.claim(key.generation, &nonce)?;
    Ok(suite.seal(&key.material, &nonce, aad, plaintext))
}

pub fn open_payload(key: &SessionKey, nonce: Nonce, aad: &[u8], sealed: &[u8]) -> Result<Vec<u8>, CryptoError> {
    open_payload_with(CipherSuite::Aes256Gcm, key, nonce, aad, sealed)
}

pub fn open_payload_with(
    suite: CipherSuite,
    key: &SessionKey,
    nonce: Nonce,
    aad: &[u8],
    sealed: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    suite.open(&key.material, &nonce, aad, sealed)
}

/// True if `needle` occurs contiguously in `haystack`.
pub fn contains_subslice(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    struct Broken;

    impl RngCore for Broken {
        fn next_u32(&mut self) -> u32 {
            0
        }
        fn next_u64(&mut self) -> u64 {
            0
        }
        fn fill_bytes(&mut self, _: &mut [u8]) {}
        fn try_fill_bytes(&mut self, _: &mut [u8]) -> Result<(), rand_core::Error> {
            Err(rand_core::Error::new("unplugged"))
        }
    }
    impl CryptoRng for Broken {}

    #[test]
    fn keypairs_follow_the_seed() {
        assert_eq!(KeyPair::generate(&mut rng(1)).unwrap(), KeyPair::generate(&mut rng(1)).unwrap());
        assert_ne!(
            KeyPair::generate(&mut rng(1)).unwrap().public(),
            KeyPair::generate(&mut rng(2)).unwrap().public()
        );
    }

    #[test]
    fn entropy_failure_surfaces() {
        assert_eq!(KeyPair::generate(&mut Broken).unwrap_err(), CryptoError::EntropyFailure);
        assert_eq!(
            SessionKey::generate(&mut Broken, SessionId(1)).unwrap_err(),
            CryptoError::EntropyFailure
        );
    }

    #[test]
    fn public_point_round_trip_and_validation() {
        let pair = KeyPair::generate(&mut rng(3)).unwrap();
        let bytes = pair.public().to_bytes();
        assert_eq!(PublicPoint::from_bytes(&bytes).unwrap(), *pair.public());
        let mut off = bytes;
        off[64] ^= 1;
        assert_eq!(PublicPoint::from_bytes(&off), Err(CryptoError::InvalidPublicPoint));
        assert_eq!(PublicPoint::from_bytes(&bytes[..33]), Err(CryptoError::InvalidPublicPoint));
    }

    #[test]
    fn session_keys() {
        let k = SessionKey::generate(&mut rng(4), SessionId(9)).unwrap();
        assert_eq!(k.material().len(), 32);
        assert_eq!(k.generation(), 1);
        assert_eq!(k, SessionKey::generate(&mut rng(4), SessionId(9)).unwrap());
        let mut r = rng(5);
        let keys: std::collections::BTreeSet<[u8; 32]> = (0..1000)
            .map(|_| *SessionKey::generate(&mut r, SessionId(1)).unwrap().material())
            .collect();
        assert_eq!(keys.len(), 1000);
    }

    #[test]
    fn nonce_layout() {
        assert_eq!(derive_nonce(Direction::Initiator, 0).as_bytes(), &[0u8; 12]);
        assert_eq!(
            derive_nonce(Direction::Responder, 1).as_bytes(),
            &[1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1]
        );
        let n = derive_nonce(Direction::Responder, 0xdead_beef);
        assert_eq!((n.direction(), n.sequence()), (Direction::Responder, 0xdead_beef));
    }

    #[test]
    fn nonces_are_injective() {
        let mut r = rng(6);
        let mut seen = std::collections::HashMap::new();
        for _ in 0..10_000 {
            let d = if r.next_u32() & 1 == 0 {
                Direction::Initiator
            } else {
                Direction::Responder
            };
            let s = r.next_u64() >> (r.next_u32() % 64);
            let prev = seen.insert(derive_nonce(d, s), (d, s));
            assert!(prev.is_none_or(|p| p == (d, s)));
        }
    }

    #[test]
    fn seal_open() {
        let key = SessionKey::generate(&mut rng(7), SessionId(1)).unwrap();
        let mut guard = NonceGuard::new();
        let n = derive_nonce(Direction::Initiator, 0);
        let sealed = seal_payload(&key, &mut guard, n, b"hdr", b"").unwrap();
        assert_eq!(sealed.len(), TAG_LEN);
        assert_eq!(open_payload(&key, n, b"hdr", &sealed).unwrap(), b"");

        let n1 = derive_nonce(Direction::Initiator, 1);
        let sealed = seal_payload(&key, &mut guard, n1, b"hdr", b"frame").unwrap();
        assert_ne!(&sealed[..5], b"frame");
        assert_eq!(open_payload(&key, n1, b"hdr", &sealed).unwrap(), b"frame");
        assert_eq!(open_payload(&key, n1, b"hdR", &sealed), Err(CryptoError::IntegrityFailure));
        assert_eq!(open_payload(&key, n, b"hdr", &sealed), Err(CryptoError::IntegrityFailure));
        assert!(matches!(
            open_payload(&key, n1, b"hdr", &sealed[..15]),
            Err(CryptoError::Malformed(_))
        ));
    }

    #[test]
    fn nonce_reuse_is_refused_per_generation() {
        let mut r = rng(8);
        let g1 = SessionKey::generate(&mut r, SessionId(1)).unwrap();
        let g2 = SessionKey::generate_generation(&mut r, SessionId(1), 2).unwrap();
        let mut guard = NonceGuard::new();
        let n = derive_nonce(Direction::Initiator, 5);
        seal_payload(&g1, &mut guard, n, b"", b"x").unwrap();
        assert!(matches!(
            seal_payload(&g1, &mut guard, n, b"", b"x"),
            Err(CryptoError::NonceReuse { sequence: 5, .. })
        ));
        seal_payload(&g1, &mut guard, derive_nonce(Direction::Responder, 5), b"", b"x").unwrap();
        seal_payload(&g2, &mut guard, n, b"", b"x").unwrap();
    }

    #[test]
    fn older_generation_cannot_open() {
        let mut r = rng(9);
        let g1 = SessionKey::generate(&mut r, SessionId(1)).unwrap();
        let g2 = SessionKey::generate_generation(&mut r, SessionId(1), 2).unwrap();
        let n = derive_nonce(Direction::Initiator, 0);
        let sealed = seal_payload(&g2, &mut NonceGuard::new(), n, b"", b"after rekey").unwrap();
        assert_eq!(open_payload(&g1, n, b"", &sealed), Err(CryptoError::IntegrityFailure));
    }

    #[test]
    fn suites_are_not_interchangeable() {
        let key = SessionKey::generate(&mut rng(10), SessionId(1)).unwrap();
        let n = derive_nonce(Direction::Initiator, 0);
        let a = seal_payload_with(CipherSuite::Aes256Gcm, &key, &mut NonceGuard::new(), n, b"", b"same").unwrap();
        let c =
            seal_payload_with(CipherSuite::ChaCha20Poly1305, &key, &mut NonceGuard::new(), n, b"", b"same").unwrap();
        assert_ne!(a, c);
        assert_eq!(
            open_payload_with(CipherSuite::ChaCha20Poly1305, &key, n, b"", &c).unwrap(),
            b"same"
        );
        assert!(open_payload_with(CipherSuite::ChaCha20Poly1305, &key, n, b"", &a).is_err());
    }
}
