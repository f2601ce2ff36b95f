//! Key Distribution Centre: subscriber registry, authorization, session-key
//! generation and delivery of the key wrapped to both parties.

mod wire;

pub use wire::{KdcMessage, Rejection, RejectionCause, REQUEST_LABEL};

use std::collections::{BTreeMap, BTreeSet};

use rand_core::{CryptoRng, RngCore};
use thiserror::Error;

use crate::crypto::{
    open_envelope, seal_envelope, unwrap_session_key, wrap_session_key, CryptoError, KeyPair, PublicPoint,
    SessionKey, WrappedKey,
};
use crate::replay::ReplayWindow;
use crate::vpvn::EventKind;
use crate::SessionId;

/// Nonces a requester may reorder before the KDC refuses them as replays.
pub const NONCE_WINDOW: u32 = 64;
/// Longest subscriber id the wire format carries.
pub const MAX_ID_LEN: usize = 255;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum KdcError {
    #[error("subscriber {0} is already registered")]
    DuplicateSubscriber(String),
    #[error("subscriber id {0:?} is empty or too long")]
    InvalidId(String),
    #[error("unknown subscriber {0}")]
    UnknownSubscriber(String),
    #[error("malformed request: {0}")]
    MalformedRequest(&'static str),
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("{requester} is not a party to session {session}")]
    NotAParty { session: SessionId, requester: String },
    #[error("{requester} is no longer authorized to reach {peer}")]
    Unauthorized { requester: String, peer: String },
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Point,
    Gateway,
}

/// Peers a subscriber may open sessions to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AccessRights {
    All,
    Peers(BTreeSet<String>),
}

impl AccessRights {
    pub fn none() -> Self {
        AccessRights::Peers(BTreeSet::new())
    }

    pub fn peers<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        AccessRights::Peers(ids.into_iter().map(Into::into).collect())
    }

    pub fn permits(&self, peer: &str) -> bool {
        match self {
            AccessRights::All => true,
            AccessRights::Peers(set) => set.contains(peer),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubscriberRecord {
    pub id: String,
    pub role: Role,
    pub public: PublicPoint,
    pub rights: AccessRights,
}

/// A key request as it travels to the KDC. The envelope is the request body
/// sealed to the KDC public key; the KDC refuses a request whose cleartext
/// fields disagree with the sealed copy.
///
/// `held_generation` is the key generation the requester already has: 0 for
/// a new session, the current generation for a rekey. A retransmission whose
/// grant was already issued gets the same grant back.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyRequest {
    pub requester: String,
    pub peer: String,
    pub nonce: u64,
    pub session: SessionId,
    pub held_generation: u32,
    pub envelope: Vec<u8>,
}

impl KeyRequest {
    pub fn seal<R: RngCore + CryptoRng>(
        requester: &str,
        peer: &str,
        nonce: u64,
        session: SessionId,
        held_generation: u32,
        kdc: &PublicPoint,
        rng: &mut R,
    ) -> Result<Self, KdcError> {
        let mut req = Self {
            requester: requester.to_string(),
            peer: peer.to_string(),
            nonce,
            session,
            held_generation,
            envelope: Vec::new(),
        };
        check_id(requester)?;
        check_id(peer)?;
        req.envelope = seal_envelope(kdc, REQUEST_LABEL, &[], &req.body_bytes(), rng)?;
        Ok(req)
    }

    pub fn is_rekey(&self) -> bool {
        self.held_generation > 0
    }
}

/// One session key wrapped to each party.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyGrant {
    pub session: SessionId,
    pub generation: u32,
    /// Initiator's copy first, responder's second.
    pub wrapped: [WrappedKey; 2],
}

impl KeyGrant {
    pub fn for_party(&self, id: &str) -> Option<&WrappedKey> {
        self.wrapped.iter().find(|w| w.recipient == id)
    }

    pub fn unwrap_for(&self, id: &str, pair: &KeyPair) -> Result<SessionKey, KdcError> {
        let w = self
            .for_party(id)
            .ok_or_else(|| KdcError::NotAParty {
                session: self.session,
                requester: id.to_string(),
            })?;
        Ok(unwrap_session_key(w, pair)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)]
pub enum KdcResponse {
    Grant(KeyGrant),
    Rejected(Rejection),
}

/// What handling one request produced: the reply and the protocol events the
/// KDC observed, in order. Timestamps and node ids are added by the caller.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KdcOutcome {
    pub response: KdcResponse,
    pub events: Vec<EventKind>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionRecord {
    pub initiator: String,
    pub responder: String,
    pub generation: u32,
    last_grant: Option<KeyGrant>,
}

impl SessionRecord {
    fn has_party(&self, id: &str) -> bool {
        self.initiator == id || self.responder == id
    }

    fn pairs(&self, a: &str, b: &str) -> bool {
        (self.initiator == a && self.responder == b) || (self.initiator == b && self.responder == a)
    }
}

#[derive(Debug)]
pub struct Kdc {
    keypair: KeyPair,
    registry: BTreeMap<String, SubscriberRecord>,
    nonces: BTreeMap<String, ReplayWindow>,
    sessions: BTreeMap<SessionId, SessionRecord>,
}

fn check_id(id: &str) -> Result<(), KdcError> {
    if id.is_empty() || id.len() > MAX_ID_LEN {
        return Err(KdcError::InvalidId(id.to_string()));
    }
    Ok(())
}

const GRANT_EVENTS: [EventKind; 5] = [
    EventKind::AuthDecided(true),
    EventKind::KeyGenerated,
    EventKind::KeyWrapped,
    EventKind::KeyWrapped,
    EventKind::KeyDelivered,
];

const REJECT_EVENTS: [EventKind; 2] = [EventKind::AuthDecided(false), EventKind::RequestRejected];

impl Kdc {
    pub fn new(keypair: KeyPair) -> Self {
        Self {
            keypair,
            registry: BTreeMap::new(),
            nonces: BTreeMap::new(),
            sessions: BTreeMap::new(),
        }
    }

    pub fn public(&self) -> &PublicPoint {
        self.keypair.public()
    }

    pub fn register_subscriber(&mut self, record: SubscriberRecord) -> Result<(), KdcError> {
        check_id(&record.id)?;
        if self.registry.contains_key(&record.id) {
            return Err(KdcError::DuplicateSubscriber(record.id));
        }
        self.nonces.insert(record.id.clone(), ReplayWindow::new(NONCE_WINDOW));
        self.registry.insert(record.id.clone(), record);
        Ok(())
    }

    pub fn set_rights(&mut self, id: &str, rights: AccessRights) -> Result<(), KdcError> {
        let rec = self
            .registry
            .get_mut(id)
            .ok_or_else(|| KdcError::UnknownSubscriber(id.to_string()))?;
        rec.rights = rights;
        Ok(())
    }

    pub fn subscriber(&self, id: &str) -> Option<&SubscriberRecord> {
        self.registry.get(id)
    }

    pub fn registry_len(&self) -> usize {
        self.registry.len()
    }

    pub fn session(&self, id: SessionId) -> Option<&SessionRecord> {
        self.sessions.get(&id)
    }

    /// True iff both ids are registered and `peer` is in the requester's
    /// access rights.
    pub fn authorize(&self, requester: &str, peer: &str) -> bool {
        requester != peer
            && self.registry.contains_key(peer)
            && self
                .registry
                .get(requester)
                .is_some_and(|r| r.rights.permits(peer))
    }

    pub fn handle_key_request<R: RngCore + CryptoRng>(
        &mut self,
        req: &KeyRequest,
        rng: &mut R,
    ) -> Result<KdcOutcome, KdcError> {
        let body = open_envelope(&self.keypair, REQUEST_LABEL, &[], &req.envelope)
            .map_err(|_| KdcError::MalformedRequest("envelope failed integrity"))?;
        if body != req.body_bytes() {
            return Err(KdcError::MalformedRequest("cleartext fields differ from envelope"));
        }

        let fresh = self
            .nonces
            .get_mut(&req.requester)
            .map(|w| w.accept(req.nonce));
        if fresh == Some(false) {
            return Ok(rejected(req.session, RejectionCause::Replay, Vec::new()));
        }

        if let Some(record) = self.sessions.get(&req.session) {
            if req.held_generation + 1 == record.generation && record.pairs(&req.requester, &req.peer) {
                if let Some(grant) = &record.last_grant {
                    return Ok(KdcOutcome {
                        response: KdcResponse::Grant(grant.clone()),
                        events: Vec::new(),
                    });
                }
            }
            if !req.is_rekey() {
                return Ok(rejected(req.session, RejectionCause::SessionIdInUse, Vec::new()));
            }
            if req.held_generation != record.generation {
                return Ok(rejected(req.session, RejectionCause::StaleGeneration, Vec::new()));
            }
        }

        if req.is_rekey() {
            return Ok(match self.rekey(req.session, &req.requester, rng) {
                Ok(grant) => granted(grant),
                Err(KdcError::Unauthorized { .. }) => {
                    rejected(req.session, RejectionCause::Unauthorized, REJECT_EVENTS.to_vec())
                }
                Err(KdcError::UnknownSession(_)) => rejected(req.session, RejectionCause::UnknownSession, Vec::new()),
                Err(KdcError::NotAParty { .. }) => rejected(req.session, RejectionCause::NotAParty, Vec::new()),
                Err(other) => return Err(other),
            });
        }

        if !self.authorize(&req.requester, &req.peer) {
            return Ok(rejected(req.session, RejectionCause::Unauthorized, REJECT_EVENTS.to_vec()));
        }
        let mut record = SessionRecord {
            initiator: req.requester.clone(),
            responder: req.peer.clone(),
            generation: 1,
            last_grant: None,
        };
        let grant = self.issue(req.session, &record, rng)?;
        record.last_grant = Some(grant.clone());
        self.sessions.insert(req.session, record);
        Ok(granted(grant))
    }

    /// Issues the next key generation for an existing session. The original
    /// initiator's rights are checked again.
    pub fn rekey<R: RngCore + CryptoRng>(
        &mut self,
        session: SessionId,
        requester: &str,
        rng: &mut R,
    ) -> Result<KeyGrant, KdcError> {
        let record = self.sessions.get(&session).ok_or(KdcError::UnknownSession(session))?;
        if !record.has_party(requester) {
            return Err(KdcError::NotAParty {
                session,
                requester: requester.to_string(),
            });
        }
        if !self.authorize(&record.initiator, &record.responder) {
            return Err(KdcError::Unauthorized {
                requester: record.initiator.clone(),
                peer: record.responder.clone(),
            });
        }
        let mut next = SessionRecord {
            generation: record.generation + 1,
            ..record.clone()
        };
        let grant = self.issue(session, &next, rng)?;
        next.last_grant = Some(grant.clone());
        self.sessions.insert(session, next);
        Ok(grant)
    }

    fn issue<R: RngCore + CryptoRng>(
        &self,
        session: SessionId,
        record: &SessionRecord,
        rng: &mut R,
    ) -> Result<KeyGrant, KdcError> {
        let key = SessionKey::generate_generation(rng, session, record.generation)?;
        let mut wrap = |id: &str| -> Result<WrappedKey, KdcError> {
            let sub = self
                .registry
                .get(id)
                .ok_or_else(|| KdcError::UnknownSubscriber(id.to_string()))?;
            Ok(wrap_session_key(&key, id, &sub.public, rng)?)
        };
        let a = wrap(&record.initiator)?;
        let b = wrap(&record.responder)?;
        Ok(KeyGrant {
            session,
            generation: record.generation,
            wrapped: [a, b],
        })
    }
}

fn granted(grant: KeyGrant) -> KdcOutcome {
    KdcOutcome {
        response: KdcResponse::Grant(grant),
        events: GRANT_EVENTS.to_vec(),
    }
}

fn rejected(session: SessionId, cause: RejectionCause, events: Vec<EventKind>) -> KdcOutcome {
    KdcOutcome {
        response: KdcResponse::Rejected(Rejection { session, cause }),
        events,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::contains_subslice;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    struct Fixture {
        rng: ChaCha20Rng,
        kdc: Kdc,
        keys: BTreeMap<String, KeyPair>,
    }

    fn fixture() -> Fixture {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let mut kdc = Kdc::new(KeyPair::generate(&mut rng).unwrap());
        let mut keys = BTreeMap::new();
        for (id, role, rights) in [
            ("site-a", Role::Gateway, AccessRights::All),
            ("site-b", Role::Gateway, AccessRights::All),
            ("site-c", Role::Gateway, AccessRights::All),
            ("point-a", Role::Point, AccessRights::peers(["site-a"])),
            ("point-b", Role::Point, AccessRights::All),
        ] {
            let pair = KeyPair::generate(&mut rng).unwrap();
            kdc.register_subscriber(SubscriberRecord {
                id: id.into(),
                role,
                public: *pair.public(),
                rights,
            })
            .unwrap();
            keys.insert(id.to_string(), pair);
        }
        Fixture { rng, kdc, keys }
    }

    fn request(f: &mut Fixture, from: &str, to: &str, nonce: u64, sid: u64) -> KeyRequest {
        KeyRequest::seal(from, to, nonce, SessionId(sid), 0, f.kdc.public(), &mut f.rng).unwrap()
    }

    #[test]
    fn registry() {
        let mut f = fixture();
        assert_eq!(f.kdc.registry_len(), 5);
        let dup = f.kdc.subscriber("site-a").unwrap().clone();
        assert_eq!(
            f.kdc.register_subscriber(dup),
            Err(KdcError::DuplicateSubscriber("site-a".into()))
        );
    }

    #[test]
    fn authorization() {
        let f = fixture();
        assert!(f.kdc.authorize("point-a", "site-a"));
        assert!(!f.kdc.authorize("point-a", "point-b"));
        assert!(!f.kdc.authorize("nobody", "site-a"));
        assert!(!f.kdc.authorize("site-a", "nobody"));
        assert!(f.kdc.authorize("point-b", "point-a"));
    }

    #[test]
    fn grant_delivers_one_key_to_both() {
        let mut f = fixture();
        let req = request(&mut f, "point-a", "site-a", 1, 77);
        let out = f.kdc.handle_key_request(&req, &mut f.rng).unwrap();
        assert_eq!(out.events, GRANT_EVENTS.to_vec());
        let KdcResponse::Grant(g) = out.response else {
            panic!("expected grant")
        };
        assert_eq!(g.generation, 1);
        let ka = g.unwrap_for("point-a", &f.keys["point-a"]).unwrap();
        let kb = g.unwrap_for("site-a", &f.keys["site-a"]).unwrap();
        assert_eq!(ka.material(), kb.material());
        let wire = KdcMessage::Grant(g.clone()).encode();
        assert!(!contains_subslice(&wire, ka.material()));
        // Each copy opens only with its own recipient's key.
        assert!(g.unwrap_for("point-a", &f.keys["site-a"]).is_err());
    }

    #[test]
    fn unauthorized_pair_is_rejected() {
        let mut f = fixture();
        let req = request(&mut f, "point-a", "point-b", 1, 78);
        let out = f.kdc.handle_key_request(&req, &mut f.rng).unwrap();
        assert_eq!(out.events, REJECT_EVENTS.to_vec());
        assert_eq!(
            out.response,
            KdcResponse::Rejected(Rejection {
                session: SessionId(78),
                cause: RejectionCause::Unauthorized
            })
        );
        assert!(f.kdc.session(SessionId(78)).is_none());
    }

    #[test]
    fn replayed_nonce_is_rejected() {
        let mut f = fixture();
        let req = request(&mut f, "point-a", "site-a", 9, 79);
        f.kdc.handle_key_request(&req, &mut f.rng).unwrap();
        let out = f.kdc.handle_key_request(&req, &mut f.rng).unwrap();
        assert_eq!(
            out.response,
            KdcResponse::Rejected(Rejection {
                session: SessionId(79),
                cause: RejectionCause::Replay
            })
        );
        assert!(out.events.is_empty());
    }

    #[test]
    fn tampered_request_is_malformed() {
        let mut f = fixture();
        let mut req = request(&mut f, "point-a", "site-a", 1, 80);
        req.envelope[70] ^= 1;
        assert!(matches!(
            f.kdc.handle_key_request(&req, &mut f.rng),
            Err(KdcError::MalformedRequest(_))
        ));
        let mut req = request(&mut f, "point-a", "site-a", 2, 80);
        req.peer = "site-b".into();
        assert!(matches!(
            f.kdc.handle_key_request(&req, &mut f.rng),
            Err(KdcError::MalformedRequest(_))
        ));
    }

    #[test]
    fn grants_are_fresh() {
        let mut f = fixture();
        let mut keys = Vec::new();
        for (nonce, sid) in [(1, 90), (2, 91)] {
            let req = request(&mut f, "site-a", "site-b", nonce, sid);
            let KdcResponse::Grant(g) = f.kdc.handle_key_request(&req, &mut f.rng).unwrap().response else {
                panic!()
            };
            keys.push(g.unwrap_for("site-a", &f.keys["site-a"]).unwrap());
        }
        assert_ne!(keys[0].material(), keys[1].material());
    }

    #[test]
    fn rekey_advances_generation() {
        let mut f = fixture();
        let req = request(&mut f, "site-a", "site-b", 1, 92);
        f.kdc.handle_key_request(&req, &mut f.rng).unwrap();
        let g = f.kdc.rekey(SessionId(92), "site-b", &mut f.rng).unwrap();
        assert_eq!(g.generation, 2);
        assert_eq!(f.kdc.session(SessionId(92)).unwrap().generation, 2);
        assert!(matches!(
            f.kdc.rekey(SessionId(92), "site-c", &mut f.rng),
            Err(KdcError::NotAParty { .. })
        ));
        assert_eq!(
            f.kdc.rekey(SessionId(1), "site-a", &mut f.rng),
            Err(KdcError::UnknownSession(SessionId(1)))
        );
    }

    #[test]
    fn rekey_request_over_the_wire() {
        let mut f = fixture();
        let req = request(&mut f, "site-a", "site-b", 1, 93);
        f.kdc.handle_key_request(&req, &mut f.rng).unwrap();
        let rk = KeyRequest::seal("site-a", "site-b", 2, SessionId(93), 1, f.kdc.public(), &mut f.rng).unwrap();
        let out = f.kdc.handle_key_request(&rk, &mut f.rng).unwrap();
        assert_eq!(out.events, GRANT_EVENTS.to_vec());
        assert!(matches!(out.response, KdcResponse::Grant(KeyGrant { generation: 2, .. })));

        f.kdc.set_rights("site-a", AccessRights::none()).unwrap();
        let rk = KeyRequest::seal("site-b", "site-a", 1, SessionId(93), 2, f.kdc.public(), &mut f.rng).unwrap();
        let out = f.kdc.handle_key_request(&rk, &mut f.rng).unwrap();
        assert_eq!(out.events, REJECT_EVENTS.to_vec());
    }

    #[test]
    fn retransmission_gets_the_same_grant() {
        let mut f = fixture();
        let first = request(&mut f, "site-a", "site-b", 1, 95);
        let a = f.kdc.handle_key_request(&first, &mut f.rng).unwrap();
        let again = request(&mut f, "site-a", "site-b", 2, 95);
        let b = f.kdc.handle_key_request(&again, &mut f.rng).unwrap();
        assert_eq!(a.response, b.response);
        assert!(b.events.is_empty());
        assert_eq!(f.kdc.session(SessionId(95)).unwrap().generation, 1);

        let stale = KeyRequest::seal("site-a", "site-b", 3, SessionId(95), 7, f.kdc.public(), &mut f.rng).unwrap();
        let out = f.kdc.handle_key_request(&stale, &mut f.rng).unwrap();
        assert!(matches!(
            out.response,
            KdcResponse::Rejected(Rejection {
                cause: RejectionCause::StaleGeneration,
                ..
            })
        ));
    }

    #[test]
    fn session_ids_are_not_reused() {
        let mut f = fixture();
        let req = request(&mut f, "site-a", "site-b", 1, 94);
        f.kdc.handle_key_request(&req, &mut f.rng).unwrap();
        let req = request(&mut f, "site-c", "site-b", 1, 94);
        let out = f.kdc.handle_key_request(&req, &mut f.rng).unwrap();
        assert!(matches!(
            out.response,
            KdcResponse::Rejected(Rejection {
                cause: RejectionCause::SessionIdInUse,
                ..
            })
        ));
    }
}
