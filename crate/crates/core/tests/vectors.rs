use serde::Deserialize;

use vpvn_core::crypto::{
    derive_nonce, open_payload_with, seal_payload_with, CipherSuite, Direction, NonceGuard, SessionKey,
};
use vpvn_core::media::{protect, unprotect, MediaPacket, RekeyPolicy, SessionState};
use vpvn_core::SessionId;

#[derive(Deserialize)]
struct Vectors {
    vector: Vec<Vector>,
}

#[derive(Deserialize)]
struct Vector {
    suite: String,
    key: String,
    direction: u8,
    session: u64,
    sequence: u64,
    header: String,
    plaintext: String,
    sealed: String,
}

struct Case {
    suite: CipherSuite,
    key: [u8; 32],
    direction: Direction,
    session: SessionId,
    sequence: u64,
    header: Vec<u8>,
    plaintext: Vec<u8>,
    sealed: Vec<u8>,
}

fn cases() -> Vec<Case> {
    let v: Vectors = toml::from_str(include_str!("../testdata/aead_vectors.toml")).unwrap();
    v.vector
        .into_iter()
        .map(|v| Case {
            suite: match v.suite.as_str() {
                "aes-256-gcm" => CipherSuite::Aes256Gcm,
                "chacha20-poly1305" => CipherSuite::ChaCha20Poly1305,
                other => panic!("suite {other}"),
            },
            key: hex::decode(&v.key).unwrap().try_into().unwrap(),
            direction: if v.direction == 0 { Direction::Initiator } else { Direction::Responder },
            session: SessionId(v.session),
            sequence: v.sequence,
            header: hex::decode(&v.header).unwrap(),
            plaintext: hex::decode(&v.plaintext).unwrap(),
            sealed: hex::decode(&v.sealed).unwrap(),
        })
        .collect()
}

#[test]
fn payload_aead_matches_reference() {
    let cases = cases();
    assert_eq!(cases.len(), 5);
    for c in &cases {
        let key = SessionKey::from_parts(c.key, c.session, 1);
        let nonce = derive_nonce(c.direction, c.sequence);
        let mut guard = NonceGuard::new();
        let sealed = seal_payload_with(c.suite, &key, &mut guard, nonce, &c.header, &c.plaintext).unwrap();
        assert_eq!(hex::encode(&sealed), hex::encode(&c.sealed));
        let opened = open_payload_with(c.suite, &key, nonce, &c.header, &c.sealed).unwrap();
        assert_eq!(opened, c.plaintext);
    }
}

#[test]
fn media_layer_matches_reference() {
    for c in cases().iter().filter(|c| c.sequence == 0) {
        let mut wire = c.header.clone();
        wire.extend_from_slice(&c.sealed);
        let expected = MediaPacket::decode(&wire).unwrap();

        let key = SessionKey::from_parts(c.key, c.session, 1);
        let mut tx = SessionState::new(c.session, c.direction, RekeyPolicy::default()).with_suite(c.suite);
        tx.install_key(key.clone()).unwrap();
        let clear = MediaPacket::new(
            expected.header.packet_type,
            expected.header.flags.with_encrypted(false),
            c.session,
            0,
            c.plaintext.clone(),
        )
        .unwrap();
        let sealed = protect(&clear, &mut tx).unwrap();
        assert_eq!(hex::encode(sealed.encode()), hex::encode(&wire));

        let mut rx = SessionState::new(c.session, c.direction.opposite(), RekeyPolicy::default()).with_suite(c.suite);
        rx.install_key(key).unwrap();
        assert_eq!(unprotect(&expected, &mut rx).unwrap(), clear);
    }
}
