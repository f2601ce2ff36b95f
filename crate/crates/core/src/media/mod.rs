//! The encryption/decryption layer between call signaling and the media
//! codecs. AUDIO and VIDEO payloads are sealed with the session key; the
//! 24-byte header stays readable and is bound to the ciphertext as associated
//! data. SIGNALING and KEYMGMT packets pass through untouched.

mod packet;

pub use packet::{Flags, FrameError, MediaPacket, PacketHeader, PacketType, HEADER_LEN, VERSION};

use thiserror::Error;

use crate::crypto::{
    derive_nonce, open_payload_with, seal_payload_with, CipherSuite, CryptoError, Direction, NonceGuard,
    SessionKey, TAG_LEN,
};
use crate::replay::ReplayWindow;
use crate::SessionId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntegrityCause {
    /// Tag did not verify: tampering, wrong key or wrong generation.
    Authentication,
    /// Sequence number already used or behind the replay window.
    Replay,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MediaError {
    #[error("no session key installed")]
    NoSessionKey,
    #[error("rekey required before more media can be sealed")]
    RekeyRequired,
    #[error("integrity failure ({0:?})")]
    IntegrityFailure(IntegrityCause),
    #[error("stale key generation {offered} (current {current})")]
    StaleGeneration { current: u32, offered: u32 },
    #[error("packet belongs to session {got}, state is {expected}")]
    WrongSession { expected: SessionId, got: SessionId },
    #[error("media packet arrived without encryption")]
    Unencrypted,
    #[error("packet is already encrypted")]
    AlreadyEncrypted,
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// When a sender must stop and obtain a new session key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RekeyPolicy {
    pub max_packets: u64,
    pub max_bytes: u64,
}

impl Default for RekeyPolicy {
    fn default() -> Self {
        Self {
            max_packets: 10_000,
            max_bytes: 64 * 1024 * 1024,
        }
    }
}

/// One party's view of a session: its key, its own direction for sealing,
/// its send counter and the replay window for the peer's packets.
#[derive(Clone, Debug)]
pub struct SessionState {
    session: SessionId,
    direction: Direction,
    suite: CipherSuite,
    key: Option<SessionKey>,
    next_sequence: u64,
    replay: ReplayWindow,
    guard: NonceGuard,
    packets_since_rekey: u64,
    bytes_since_rekey: u64,
    received_since_rekey: u64,
    policy: RekeyPolicy,
    receive_limit: Option<u64>,
}

impl SessionState {
    pub fn new(session: SessionId, direction: Direction, policy: RekeyPolicy) -> Self {
        Self {
            session,
            direction,
            suite: CipherSuite::default(),
            key: None,
            next_sequence: 0,
            replay: ReplayWindow::strict(),
            guard: NonceGuard::new(),
            packets_since_rekey: 0,
            bytes_since_rekey: 0,
            received_since_rekey: 0,
            policy,
            receive_limit: None,
        }
    }

    pub fn with_suite(mut self, suite: CipherSuite) -> Self {
        self.suite = suite;
        self
    }

    /// Tolerate reordering of up to `size` packets (0 = strict).
    pub fn with_replay_window(mut self, size: u32) -> Self {
        self.replay = ReplayWindow::new(size);
        self
    }

    /// Ask for a rekey after this many packets received under one key.
    pub fn with_receive_limit(mut self, limit: Option<u64>) -> Self {
        self.receive_limit = limit;
        self
    }

    pub fn session(&self) -> SessionId {
        self.session
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn suite(&self) -> CipherSuite {
        self.suite
    }

    pub fn generation(&self) -> Option<u32> {
        self.key.as_ref().map(SessionKey::generation)
    }

    pub fn key(&self) -> Option<&SessionKey> {
        self.key.as_ref()
    }

    pub fn packets_since_rekey(&self) -> u64 {
        self.packets_since_rekey
    }

    pub fn next_sequence(&self) -> u64 {
        self.next_sequence
    }

    pub fn policy(&self) -> RekeyPolicy {
        self.policy
    }

    /// Sender-side check before encryption.
    pub fn rekey_due(&self) -> bool {
        self.packets_since_rekey >= self.policy.max_packets || self.bytes_since_rekey >= self.policy.max_bytes
    }

    /// Receiver-side check after decryption.
    pub fn receive_rekey_due(&self) -> bool {
        self.receive_limit
            .is_some_and(|limit| self.received_since_rekey >= limit)
    }

    /// Replaces the key with a newer generation and resets the rekey counters.
    pub fn install_key(&mut self, key: SessionKey) -> Result<(), MediaError> {
        if key.session() != self.session {
            return Err(MediaError::WrongSession {
                expected: self.session,
                got: key.session(),
            });
        }
        if let Some(current) = self.generation() {
            if key.generation() <= current {
                return Err(MediaError::StaleGeneration {
                    current,
                    offered: key.generation(),
                });
            }
        }
        self.key = Some(key);
        self.packets_since_rekey = 0;
        self.bytes_since_rekey = 0;
        self.received_since_rekey = 0;
        Ok(())
    }
}

pub fn rekey_due(state: &SessionState) -> bool {
    state.rekey_due()
}

pub fn install_key(state: &mut SessionState, key: SessionKey) -> Result<(), MediaError> {
    state.install_key(key)
}

/// Seals a media packet under the session key, assigning the session id and
/// the next sequence number. Signaling and key-management packets are
/// returned unchanged.
pub fn protect(packet: &MediaPacket, state: &mut SessionState) -> Result<MediaPacket, MediaError> {
    if !packet.header.packet_type.is_media() {
        return Ok(packet.clone());
    }
    if packet.header.flags.encrypted {
        return Err(MediaError::AlreadyEncrypted);
    }
    let key = state.key.as_ref().ok_or(MediaError::NoSessionKey)?;
    if state.rekey_due() {
        return Err(MediaError::RekeyRequired);
    }

    let header = PacketHeader {
        flags: packet.header.flags.with_encrypted(true),
        session: state.session,
        sequence: state.next_sequence,
        payload_len: u32::try_from(packet.payload.len()).map_err(|_| FrameError::TooLarge)?,
        ..packet.header
    };
    let nonce = derive_nonce(state.direction, header.sequence);
    let sealed = seal_payload_with(
        state.suite,
        key,
        &mut state.guard,
        nonce,
        &header.to_bytes(),
        &packet.payload,
    )?;

    state.next_sequence += 1;
    state.packets_since_rekey += 1;
    state.bytes_since_rekey += packet.payload.len() as u64;
    Ok(MediaPacket {
        header,
        payload: sealed,
    })
}

/// Opens a media packet sealed by the peer. Signaling and key-management
/// packets are returned unchanged.
pub fn unprotect(packet: &MediaPacket, state: &mut SessionState) -> Result<MediaPacket, MediaError> {
    if !packet.header.packet_type.is_media() {
        return Ok(packet.clone());
    }
    if !packet.header.flags.encrypted {
        return Err(MediaError::Unencrypted);
    }
    if packet.header.session != state.session {
        return Err(MediaError::WrongSession {
            expected: state.session,
            got: packet.header.session,
        });
    }
    let key = state.key.as_ref().ok_or(MediaError::NoSessionKey)?;
    if packet.payload.len() < TAG_LEN || packet.payload.len() - TAG_LEN != packet.header.payload_len as usize {
        return Err(FrameError::LengthMismatch {
            declared: packet.header.payload_len as usize + TAG_LEN,
            actual: packet.payload.len(),
        }
        .into());
    }
    let sequence = packet.header.sequence;
    if !state.replay.is_fresh(sequence) {
        return Err(MediaError::IntegrityFailure(IntegrityCause::Replay));
    }
    let nonce = derive_nonce(state.direction.opposite(), sequence);
    let plaintext = open_payload_with(state.suite, key, nonce, &packet.header.to_bytes(), &packet.payload)
        .map_err(|_| MediaError::IntegrityFailure(IntegrityCause::Authentication))?;

    state.replay.accept(sequence);
    state.received_since_rekey += 1;
    Ok(MediaPacket {
        header: PacketHeader {
            flags: packet.header.flags.with_encrypted(false),
            ..packet.header
        },
        payload: plaintext,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::contains_subslice;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    const SID: SessionId = SessionId(0x5e55);

    fn pair(policy: RekeyPolicy) -> (SessionState, SessionState, ChaCha20Rng) {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let key = SessionKey::generate(&mut rng, SID).unwrap();
        let mut tx = SessionState::new(SID, Direction::Initiator, policy);
        let mut rx = SessionState::new(SID, Direction::Responder, policy);
        tx.install_key(key.clone()).unwrap();
        rx.install_key(key).unwrap();
        (tx, rx, rng)
    }

    fn video(seq: u64, payload: &[u8]) -> MediaPacket {
        MediaPacket::new(PacketType::Video, Flags::new(6, 1).unwrap(), SID, seq, payload.to_vec()).unwrap()
    }

    #[test]
    fn signaling_passes_byte_identical() {
        let (mut tx, mut rx, _) = pair(RekeyPolicy::default());
        let p = MediaPacket::new(PacketType::Signaling, Flags::new(7, 3).unwrap(), SessionId(0), 0, b"SETUP".to_vec())
            .unwrap();
        let out = protect(&p, &mut tx).unwrap();
        assert_eq!(out.encode(), p.encode());
        assert_eq!(unprotect(&out, &mut rx).unwrap().encode(), p.encode());
        assert_eq!(tx.next_sequence(), 0);
    }

    #[test]
    fn video_round_trip() {
        let (mut tx, mut rx, _) = pair(RekeyPolicy::default());
        let p = video(0, b"keyframe bytes");
        let sealed = protect(&p, &mut tx).unwrap();
        assert!(sealed.header.flags.encrypted);
        assert_eq!(sealed.header.payload_len as usize, p.payload.len());
        assert_eq!(sealed.payload.len(), p.payload.len() + TAG_LEN);
        assert!(!contains_subslice(&sealed.payload, &p.payload));
        let wire = MediaPacket::decode(&sealed.encode()).unwrap();
        assert_eq!(unprotect(&wire, &mut rx).unwrap(), p);
    }

    #[test]
    fn policy_exhaustion_requires_rekey() {
        let policy = RekeyPolicy {
            max_packets: 3,
            max_bytes: u64::MAX,
        };
        let (mut tx, _, mut rng) = pair(policy);
        assert!(!rekey_due(&tx));
        for i in 0..3 {
            protect(&video(i, b"x"), &mut tx).unwrap();
        }
        assert!(rekey_due(&tx));
        assert_eq!(protect(&video(3, b"x"), &mut tx), Err(MediaError::RekeyRequired));
        tx.install_key(SessionKey::generate_generation(&mut rng, SID, 2).unwrap())
            .unwrap();
        assert!(!rekey_due(&tx));
        protect(&video(3, b"x"), &mut tx).unwrap();
    }

    #[test]
    fn byte_budget_counts_too() {
        let policy = RekeyPolicy {
            max_packets: u64::MAX,
            max_bytes: 10,
        };
        let (mut tx, _, _) = pair(policy);
        protect(&video(0, &[0; 10]), &mut tx).unwrap();
        assert!(tx.rekey_due());
    }

    #[test]
    fn tampering_is_detected() {
        let (mut tx, mut rx, _) = pair(RekeyPolicy::default());
        let sealed = protect(&video(0, b"payload"), &mut tx).unwrap();

        let mut t = sealed.clone();
        t.payload[2] ^= 0x10;
        assert_eq!(
            unprotect(&t, &mut rx),
            Err(MediaError::IntegrityFailure(IntegrityCause::Authentication))
        );

        let mut t = sealed.clone();
        t.header.flags = Flags::new(1, 1).unwrap().with_encrypted(true);
        assert_eq!(
            unprotect(&t, &mut rx),
            Err(MediaError::IntegrityFailure(IntegrityCause::Authentication))
        );
        unprotect(&sealed, &mut rx).unwrap();
    }

    #[test]
    fn replays_are_refused() {
        let (mut tx, mut rx, _) = pair(RekeyPolicy::default());
        let a = protect(&video(0, b"a"), &mut tx).unwrap();
        let b = protect(&video(0, b"b"), &mut tx).unwrap();
        unprotect(&b, &mut rx).unwrap();
        assert_eq!(
            unprotect(&a, &mut rx),
            Err(MediaError::IntegrityFailure(IntegrityCause::Replay))
        );
        assert_eq!(
            unprotect(&b, &mut rx),
            Err(MediaError::IntegrityFailure(IntegrityCause::Replay))
        );
    }

    #[test]
    fn reorder_window_admits_late_packets_once() {
        let (mut tx, rx, _) = pair(RekeyPolicy::default());
        let mut rx = rx.with_replay_window(64);
        let sealed: Vec<_> = (0..5).map(|i| protect(&video(0, &[i]), &mut tx).unwrap()).collect();
        for i in [4, 1, 0, 3, 2] {
            assert_eq!(unprotect(&sealed[i], &mut rx).unwrap().payload, vec![i as u8]);
        }
        assert!(unprotect(&sealed[3], &mut rx).is_err());
    }

    #[test]
    fn generations_only_move_forward() {
        let (mut tx, mut rx, mut rng) = pair(RekeyPolicy::default());
        let old = protect(&video(0, b"before"), &mut tx).unwrap();
        let g2 = SessionKey::generate_generation(&mut rng, SID, 2).unwrap();
        tx.install_key(g2.clone()).unwrap();
        rx.install_key(g2).unwrap();
        let g1 = SessionKey::generate(&mut rng, SID).unwrap();
        assert_eq!(
            rx.install_key(g1),
            Err(MediaError::StaleGeneration { current: 2, offered: 1 })
        );
        // Sealed under generation 1, so it no longer opens.
        let mut fresh = rx.clone().with_replay_window(0);
        assert_eq!(
            unprotect(&old, &mut fresh),
            Err(MediaError::IntegrityFailure(IntegrityCause::Authentication))
        );
        let new = protect(&video(0, b"after"), &mut tx).unwrap();
        assert_eq!(unprotect(&new, &mut rx).unwrap().payload, b"after");
    }

    #[test]
    fn missing_key() {
        let mut s = SessionState::new(SID, Direction::Initiator, RekeyPolicy::default());
        assert_eq!(protect(&video(0, b"x"), &mut s), Err(MediaError::NoSessionKey));
    }

    #[test]
    fn receive_limit() {
        let (mut tx, rx, _) = pair(RekeyPolicy::default());
        let mut rx = rx.with_receive_limit(Some(2));
        for i in 0..2 {
            assert!(!rx.receive_rekey_due());
            let s = protect(&video(0, &[i]), &mut tx).unwrap();
            unprotect(&s, &mut rx).unwrap();
        }
        assert!(rx.receive_rekey_due());
    }
}
