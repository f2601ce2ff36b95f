//! Deterministic discrete-event simulation of a VPVN: point endpoints,
//! crypto gateways with cleartext inner users, one KDC, and lossy links.
//!
//! Media flows from a session's initiator to its responder, one frame in
//! flight at a time. Every byte that crosses a link or an inner segment is
//! captured for eavesdropper checks.

mod config;
mod report;

pub use config::{
    build_topology, CipherName, Hop, LinkSpec, MediaKind, NodeRole, NodeSpec, PolicySpec, ScenarioConfig, SessionSpec,
    Topology,
};
pub use report::{DeliveryStats, SessionReport, SessionStatus, SimulationReport};

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::crypto::{Direction, KeyPair};
use crate::kdc::{Kdc, KdcMessage, KdcResponse, KeyRequest, RejectionCause, Role, SubscriberRecord};
use crate::media::{self, Flags, MediaError, MediaPacket, PacketType, RekeyPolicy, SessionState};
use crate::vpvn::{conformance_check, EventKind, Mode, ProtocolEvent};
use crate::SessionId;

/// Waits between KEYMGMT retransmissions, in ticks.
pub const RETRY_BACKOFF: [u64; 3] = [1, 2, 4];

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("topology has no kdc")]
    NoKdc,
    #[error("{a} cannot reach {b}")]
    Disconnected { a: String, b: String },
    #[error("unknown subscriber {0}")]
    UnknownNode(String),
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("unknown link {0}")]
    UnknownLink(String),
    #[error("session {session} rejected by the kdc ({cause:?})")]
    Rejected { session: SessionId, cause: RejectionCause },
    #[error("kdc unreachable for session {0}")]
    KdcUnreachable(SessionId),
    #[error("{gateway} has no live session {session}")]
    NoGatewaySession { gateway: String, session: SessionId },
    #[error("session {0} is not open")]
    SessionClosed(SessionId),
    #[error(transparent)]
    Media(#[from] MediaError),
}

/// Bytes seen on one link or inner segment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Capture {
    pub time: u64,
    pub from: String,
    pub to: String,
    pub bytes: Vec<u8>,
}

/// Segment name for the cleartext hop between an inner user and its gateway.
pub fn inner_segment(user: &str) -> String {
    format!("inner:{user}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    Initiator,
    Responder,
}

struct Frame {
    kind: PacketType,
    payload: Vec<u8>,
    index: u32,
    last: bool,
}

struct SessionRun {
    spec: SessionSpec,
    id: SessionId,
    status: SessionStatus,
    initiator_state: Option<SessionState>,
    responder_state: Option<SessionState>,
    log: Vec<ProtocolEvent>,
    stats: DeliveryStats,
    forward_failures: u64,
    next_index: u32,
    signaled: bool,
    policy: RekeyPolicy,
    payload_rng: ChaCha20Rng,
}

impl SessionRun {
    fn party(&self, side: Side) -> &str {
        match side {
            Side::Initiator => &self.spec.initiator,
            Side::Responder => &self.spec.responder,
        }
    }

    fn state(&self, side: Side) -> Option<&SessionState> {
        match side {
            Side::Initiator => self.initiator_state.as_ref(),
            Side::Responder => self.responder_state.as_ref(),
        }
    }

    fn state_mut(&mut self, side: Side) -> &mut Option<SessionState> {
        match side {
            Side::Initiator => &mut self.initiator_state,
            Side::Responder => &mut self.responder_state,
        }
    }

    fn generation(&self) -> u32 {
        [Side::Initiator, Side::Responder]
            .into_iter()
            .filter_map(|s| self.state(s).and_then(SessionState::generation))
            .max()
            .unwrap_or(0)
    }

    fn emit(&mut self, time: u64, node: &str, kind: EventKind) {
        self.log.push(ProtocolEvent::new(time, node, self.id, kind));
    }
}

enum Round {
    Done(u64),
    Rejected(RejectionCause),
    Lost,
}

pub struct Simulator {
    topo: Topology,
    kdc: Kdc,
    keys: BTreeMap<String, KeyPair>,
    crypto_rng: ChaCha20Rng,
    net_rng: ChaCha20Rng,
    taps: BTreeMap<String, Vec<Capture>>,
    sessions: Vec<SessionRun>,
    nonces: BTreeMap<String, u64>,
    deliveries: BTreeMap<String, Vec<Vec<u8>>>,
}

fn keymgmt(session: SessionId, sequence: u64, payload: Vec<u8>) -> MediaPacket {
    MediaPacket::new(PacketType::KeyMgmt, Flags::new(7, 3).unwrap(), session, sequence, payload)
        .expect("key management messages are small")
}

fn media_flags(kind: PacketType) -> Flags {
    match kind {
        PacketType::Audio => Flags::new(6, 3),
        _ => Flags::new(4, 2),
    }
    .unwrap()
}

impl Simulator {
    /// Generates every subscriber's key pair and registers it at the KDC.
    pub fn new(topo: Topology) -> Self {
        let seed = topo.seed();
        let mut crypto_rng = ChaCha20Rng::seed_from_u64(seed);
        let mut net_rng = ChaCha20Rng::seed_from_u64(seed);
        net_rng.set_stream(1);

        let gen = |rng: &mut ChaCha20Rng| KeyPair::generate(rng).expect("seeded generator does not fail");
        let mut kdc = Kdc::new(gen(&mut crypto_rng));
        let mut keys = BTreeMap::new();
        for n in topo.subscribers() {
            let pair = gen(&mut crypto_rng);
            let role = if n.role == NodeRole::Gateway {
                Role::Gateway
            } else {
                Role::Point
            };
            kdc.register_subscriber(SubscriberRecord {
                id: n.id.clone(),
                role,
                public: *pair.public(),
                rights: topo.rights_of(&n.id),
            })
            .expect("ids were validated");
            keys.insert(n.id.clone(), pair);
        }

        let mut taps: BTreeMap<String, Vec<Capture>> = topo.links().iter().map(|l| (l.name(), Vec::new())).collect();
        for n in &topo.config().nodes {
            for u in &n.inner {
                taps.insert(inner_segment(u), Vec::new());
            }
        }

        let mut sim = Self {
            topo,
            kdc,
            keys,
            crypto_rng,
            net_rng,
            taps,
            sessions: Vec::new(),
            nonces: BTreeMap::new(),
            deliveries: BTreeMap::new(),
        };
        for spec in sim.topo.config().sessions.clone() {
            sim.add_session(spec);
        }
        sim
    }

    fn add_session(&mut self, spec: SessionSpec) -> usize {
        let idx = self.sessions.len();
        let mut payload_rng = ChaCha20Rng::seed_from_u64(self.topo.seed());
        payload_rng.set_stream(2 + idx as u64);
        let mut policy = self.topo.policy();
        if let Some(m) = spec.max_packets {
            policy.max_packets = m;
        }
        self.sessions.push(SessionRun {
            id: SessionId(self.crypto_rng.next_u64()),
            spec,
            status: SessionStatus::Pending,
            initiator_state: None,
            responder_state: None,
            log: Vec::new(),
            stats: DeliveryStats::default(),
            forward_failures: 0,
            next_index: 0,
            signaled: false,
            policy,
            payload_rng,
        });
        idx
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn kdc(&self) -> &Kdc {
        &self.kdc
    }

    pub fn keypair(&self, id: &str) -> Option<&KeyPair> {
        self.keys.get(id)
    }

    fn index(&self, sid: SessionId) -> Result<usize, SimError> {
        self.sessions
            .iter()
            .position(|s| s.id == sid)
            .ok_or(SimError::UnknownSession(sid))
    }

    pub fn session_id(&self, name: &str) -> Option<SessionId> {
        self.sessions.iter().find(|s| s.spec.name == name).map(|s| s.id)
    }

    pub fn session_log(&self, sid: SessionId) -> Option<&[ProtocolEvent]> {
        self.sessions.iter().find(|s| s.id == sid).map(|s| s.log.as_slice())
    }

    pub fn session_status(&self, sid: SessionId) -> Option<SessionStatus> {
        self.sessions.iter().find(|s| s.id == sid).map(|s| s.status)
    }

    /// The media-layer state held by `party` for a session, if it ever
    /// received a key.
    pub fn session_state(&self, sid: SessionId, party: &str) -> Option<&SessionState> {
        let run = self.sessions.iter().find(|s| s.id == sid)?;
        if run.spec.initiator == party {
            run.initiator_state.as_ref()
        } else if run.spec.responder == party {
            run.responder_state.as_ref()
        } else {
            None
        }
    }

    /// Exact bytes that crossed a link (named `a-b` as configured) or an
    /// inner segment (see [`inner_segment`]).
    pub fn wire_tap(&self, segment: &str) -> Result<&[Capture], SimError> {
        self.taps
            .get(segment)
            .map(Vec::as_slice)
            .ok_or_else(|| SimError::UnknownLink(segment.to_string()))
    }

    pub fn captures(&self) -> impl Iterator<Item = (&str, &Capture)> {
        self.taps
            .iter()
            .flat_map(|(name, caps)| caps.iter().map(move |c| (name.as_str(), c)))
    }

    pub fn deliveries(&self, endpoint: &str) -> &[Vec<u8>] {
        self.deliveries.get(endpoint).map_or(&[], Vec::as_slice)
    }

    fn nominal_latency(&self, from: &str, to: &str) -> u64 {
        self.topo
            .route(from, to)
            .map_or(0, |hops| hops.iter().map(|h| self.topo.link(h.link).latency).sum())
    }

    /// Carries bytes hop by hop, applying loss, corruption and jitter.
    fn transmit(&mut self, from: &str, to: &str, mut bytes: Vec<u8>, at: u64) -> Option<(u64, Vec<u8>)> {
        let hops = self.topo.route(from, to)?;
        let mut t = at;
        for hop in hops {
            let link = self.topo.link(hop.link);
            if link.corrupt > 0.0 && !bytes.is_empty() && self.net_rng.gen_bool(link.corrupt) {
                let bit = self.net_rng.gen_range(0..bytes.len() * 8);
                bytes[bit / 8] ^= 1 << (bit % 8);
            }
            self.taps.get_mut(&link.name()).unwrap().push(Capture {
                time: t,
                from: hop.from,
                to: hop.to,
                bytes: bytes.clone(),
            });
            if link.loss > 0.0 && self.net_rng.gen_bool(link.loss) {
                return None;
            }
            t += link.latency;
            if link.reorder > 0 {
                t += self.net_rng.gen_range(0..=link.reorder);
            }
        }
        Some((t, bytes))
    }

    fn inner_hop(&mut self, user: &str, gateway: &str, outbound: bool, bytes: &[u8], at: u64) {
        let (from, to) = if outbound { (user, gateway) } else { (gateway, user) };
        self.taps.get_mut(&inner_segment(user)).unwrap().push(Capture {
            time: at,
            from: from.to_string(),
            to: to.to_string(),
            bytes: bytes.to_vec(),
        });
    }

    fn next_nonce(&mut self, id: &str) -> u64 {
        let n = self.nonces.entry(id.to_string()).or_insert(0);
        *n += 1;
        *n
    }

    /// Requests a key for the session and installs it at both parties.
    /// Emits SessionRequested once; retransmissions after a loss are silent.
    fn handshake(&mut self, idx: usize, by: Side, at: u64) -> Result<u64, SessionStatus> {
        let run = &mut self.sessions[idx];
        let requester = run.party(by).to_string();
        let peer = run
            .party(match by {
                Side::Initiator => Side::Responder,
                Side::Responder => Side::Initiator,
            })
            .to_string();
        let held = run.state(by).and_then(SessionState::generation).unwrap_or(0);
        run.emit(at, &requester, EventKind::SessionRequested);
        let (sid, initiator, responder) = (run.id, run.spec.initiator.clone(), run.spec.responder.clone());

        let kdc = self.topo.kdc().to_string();
        let rtt = self.nominal_latency(&requester, &kdc)
            + self
                .nominal_latency(&kdc, &initiator)
                .max(self.nominal_latency(&kdc, &responder));
        let mut t = at;
        for attempt in 0..=RETRY_BACKOFF.len() {
            let nonce = self.next_nonce(&requester);
            let req = KeyRequest::seal(&requester, &peer, nonce, sid, held, self.kdc.public(), &mut self.crypto_rng)
                .expect("validated ids and a seeded generator");
            let packet = keymgmt(sid, nonce, KdcMessage::Request(req).encode());
            match self.kdc_round(idx, &requester, packet, t) {
                Round::Done(done) => return Ok(done),
                Round::Rejected(cause) => return Err(SessionStatus::Rejected(cause)),
                Round::Lost => {}
            }
            if let Some(wait) = RETRY_BACKOFF.get(attempt) {
                t += rtt + wait;
            }
        }
        Err(SessionStatus::KdcUnreachable)
    }

    fn kdc_round(&mut self, idx: usize, requester: &str, packet: MediaPacket, at: u64) -> Round {
        let kdc = self.topo.kdc().to_string();
        let sid = self.sessions[idx].id;
        let Some((ta, bytes)) = self.transmit(requester, &kdc, packet.encode(), at) else {
            return Round::Lost;
        };
        let Some(KdcMessage::Request(req)) = MediaPacket::decode(&bytes)
            .ok()
            .and_then(|p| KdcMessage::decode(&p.payload).ok())
        else {
            return Round::Lost;
        };
        let Ok(outcome) = self.kdc.handle_key_request(&req, &mut self.crypto_rng) else {
            return Round::Lost;
        };
        for e in outcome.events {
            self.sessions[idx].emit(ta, &kdc, e);
        }
        match outcome.response {
            KdcResponse::Rejected(r) => {
                let reply = keymgmt(sid, 0, KdcMessage::Rejection(r).encode()).encode();
                let heard = self
                    .transmit(&kdc, requester, reply, ta)
                    .and_then(|(_, b)| MediaPacket::decode(&b).ok())
                    .and_then(|p| KdcMessage::decode(&p.payload).ok());
                match heard {
                    Some(KdcMessage::Rejection(r)) => Round::Rejected(r.cause),
                    _ => Round::Lost,
                }
            }
            KdcResponse::Grant(grant) => {
                let reply = keymgmt(sid, 0, KdcMessage::Grant(grant).encode()).encode();
                let mut done = ta;
                let mut ok = true;
                for side in [Side::Initiator, Side::Responder] {
                    let party = self.sessions[idx].party(side).to_string();
                    match self.transmit(&kdc, &party, reply.clone(), ta) {
                        Some((tp, b)) if self.accept_grant(idx, side, &b) => done = done.max(tp),
                        _ => ok = false,
                    }
                }
                if ok {
                    Round::Done(done)
                } else {
                    Round::Lost
                }
            }
        }
    }

    /// The party unwraps its own copy and installs it.
    fn accept_grant(&mut self, idx: usize, side: Side, bytes: &[u8]) -> bool {
        let Some(KdcMessage::Grant(grant)) = MediaPacket::decode(bytes)
            .ok()
            .and_then(|p| KdcMessage::decode(&p.payload).ok())
        else {
            return false;
        };
        let run = &mut self.sessions[idx];
        let party = run.party(side).to_string();
        let Ok(key) = grant.unwrap_for(&party, &self.keys[&party]) else {
            return false;
        };
        let (sid, policy, suite, rx_limit) = (run.id, run.policy, run.spec.cipher.into(), run.spec.rx_max_packets);
        let state = run.state_mut(side).get_or_insert_with(|| match side {
            Side::Initiator => SessionState::new(sid, Direction::Initiator, policy).with_suite(suite),
            Side::Responder => SessionState::new(sid, Direction::Responder, policy)
                .with_suite(suite)
                .with_receive_limit(rx_limit),
        });
        if state.generation() >= Some(key.generation()) {
            return true;
        }
        state.install_key(key).is_ok()
    }

    /// Opens a session outside any scenario file.
    pub fn establish_session(&mut self, initiator: &str, responder: &str) -> Result<SessionId, SimError> {
        for id in [initiator, responder] {
            if !self.keys.contains_key(id) {
                return Err(SimError::UnknownNode(id.to_string()));
            }
        }
        let name = format!("adhoc-{}", self.sessions.len() + 1);
        let idx = self.add_session(SessionSpec::new(&name, initiator, responder, 0));
        self.open(idx, 0)?;
        Ok(self.sessions[idx].id)
    }

    fn open(&mut self, idx: usize, at: u64) -> Result<u64, SimError> {
        let sid = self.sessions[idx].id;
        match self.handshake(idx, Side::Initiator, at) {
            Ok(done) => {
                self.sessions[idx].status = SessionStatus::Established;
                Ok(done)
            }
            Err(status) => {
                self.sessions[idx].status = status;
                Err(match status {
                    SessionStatus::Rejected(cause) => SimError::Rejected { session: sid, cause },
                    _ => SimError::KdcUnreachable(sid),
                })
            }
        }
    }

    /// Sends frames over an established session in order. SIGNALING entries
    /// pass in the clear; the last media frame ends the session.
    pub fn send_media(&mut self, sid: SessionId, frames: &[(PacketType, Vec<u8>)]) -> Result<DeliveryStats, SimError> {
        let idx = self.index(sid)?;
        if self.sessions[idx].status != SessionStatus::Established {
            return Err(SimError::SessionClosed(sid));
        }
        let media_total = frames.iter().filter(|(k, _)| k.is_media()).count();
        let mut t = self.sessions[idx].log.last().map_or(0, |e| e.time);
        let mut media_seen = 0;
        for (kind, payload) in frames {
            if self.sessions[idx].status != SessionStatus::Established {
                break;
            }
            if kind.is_media() {
                media_seen += 1;
                let index = self.sessions[idx].next_index;
                let frame = Frame {
                    kind: *kind,
                    payload: payload.clone(),
                    index,
                    last: media_seen == media_total,
                };
                t = self.send_frame(idx, frame, t);
            } else {
                t = self.send_clear(idx, *kind, payload.clone(), t);
            }
        }
        Ok(self.sessions[idx].stats)
    }

    /// Applies the media layer at a gateway: cleartext from an inner user is
    /// sealed, sealed traffic for an inner user is opened.
    pub fn gateway_forward(
        &mut self,
        gateway: &str,
        sid: SessionId,
        packet: &MediaPacket,
    ) -> Result<MediaPacket, SimError> {
        let idx = self.index(sid)?;
        let none = || SimError::NoGatewaySession {
            gateway: gateway.to_string(),
            session: sid,
        };
        if self.topo.role(gateway) != Some(NodeRole::Gateway) {
            return Err(none());
        }
        let run = &self.sessions[idx];
        let side = if run.spec.initiator == gateway {
            Side::Initiator
        } else if run.spec.responder == gateway {
            Side::Responder
        } else {
            return Err(none());
        };
        if run.status != SessionStatus::Established || run.state(side).is_none_or(|s| s.key().is_none()) {
            return Err(none());
        }
        Ok(self.apply_layer(idx, side, packet)?)
    }

    fn apply_layer(&mut self, idx: usize, side: Side, packet: &MediaPacket) -> Result<MediaPacket, MediaError> {
        let state = self.sessions[idx]
            .state_mut(side)
            .as_mut()
            .ok_or(MediaError::NoSessionKey)?;
        if packet.header.flags.encrypted {
            media::unprotect(packet, state)
        } else {
            media::protect(packet, state)
        }
    }

    fn send_clear(&mut self, idx: usize, kind: PacketType, payload: Vec<u8>, at: u64) -> u64 {
        let run = &self.sessions[idx];
        let (from, to, sid) = (run.spec.initiator.clone(), run.spec.responder.clone(), run.id);
        let Ok(packet) = MediaPacket::new(kind, Flags::new(7, 3).unwrap(), sid, 0, payload) else {
            return at;
        };
        let wire = self
            .apply_layer(idx, Side::Initiator, &packet)
            .expect("non-media packets pass through");
        match self.transmit(&from, &to, wire.encode(), at) {
            Some((ta, bytes)) => {
                if let Ok(p) = MediaPacket::decode(&bytes) {
                    let _ = self.apply_layer(idx, Side::Responder, &p);
                }
                ta
            }
            None => at + 2 * self.nominal_latency(&from, &to) + 1,
        }
    }

    fn signal_once(&mut self, idx: usize, at: u64) -> u64 {
        let run = &mut self.sessions[idx];
        if run.signaled {
            return at;
        }
        run.signaled = true;
        let (n, name) = (run.spec.signaling, run.spec.name.clone());
        let mut t = at;
        for k in 0..n {
            t = self.send_clear(idx, PacketType::Signaling, format!("SETUP {name} {k}").into_bytes(), t);
        }
        t
    }

    fn rekey(&mut self, idx: usize, by: Side, kind: EventKind, at: u64) -> Option<u64> {
        let run = &mut self.sessions[idx];
        let node = run.party(by).to_string();
        run.emit(at, &node, kind);
        match self.handshake(idx, by, at) {
            Ok(done) => Some(done),
            Err(status) => {
                self.sessions[idx].status = status;
                None
            }
        }
    }

    /// One frame, stop-and-wait. Returns when the sender may send the next.
    fn send_frame(&mut self, idx: usize, frame: Frame, at: u64) -> u64 {
        let mut t = self.signal_once(idx, at);
        let run = &mut self.sessions[idx];
        run.next_index = frame.index + 1;
        let (init, resp) = (run.spec.initiator.clone(), run.spec.responder.clone());
        let (from_user, to_user, forward_to) =
            (run.spec.from_user.clone(), run.spec.to_user.clone(), run.spec.forward_to.clone());
        let forced = run.spec.force_rekey_before.contains(&frame.index);

        let Ok(mut packet) = MediaPacket::new(frame.kind, media_flags(frame.kind), SessionId(0), 0, frame.payload)
        else {
            return t;
        };
        if let Some(user) = &from_user {
            let bytes = packet.encode();
            self.inner_hop(user, &init, true, &bytes, t);
            packet = MediaPacket::decode(&bytes).expect("inner segment is lossless");
        }

        if forced {
            match self.rekey(idx, Side::Initiator, EventKind::RekeyBeforeEncrypt, t) {
                Some(done) => t = done,
                None => return t,
            }
        }
        let sealed = loop {
            match self.apply_layer(idx, Side::Initiator, &packet) {
                Ok(sealed) => break sealed,
                Err(MediaError::RekeyRequired) => match self.rekey(idx, Side::Initiator, EventKind::RekeyBeforeEncrypt, t)
                {
                    Some(done) => t = done,
                    None => return t,
                },
                Err(_) => return t,
            }
        };

        let run = &mut self.sessions[idx];
        run.emit(t, &init, EventKind::FrameEncrypted);
        run.emit(t, &init, EventKind::FrameSent);
        run.stats.sent += 1;

        let Some((ta, bytes)) = self.transmit(&init, &resp, sealed.encode(), t) else {
            self.sessions[idx].stats.dropped += 1;
            return t + 2 * self.nominal_latency(&init, &resp) + 1;
        };
        let Ok(arrived) = MediaPacket::decode(&bytes) else {
            self.sessions[idx].stats.integrity_failed += 1;
            return ta;
        };
        self.sessions[idx].emit(ta, &resp, EventKind::FrameReceived);
        let plain = match self.apply_layer(idx, Side::Responder, &arrived) {
            Ok(p) if !p.header.flags.encrypted => p,
            _ => {
                self.sessions[idx].stats.integrity_failed += 1;
                return ta;
            }
        };
        let run = &mut self.sessions[idx];
        run.stats.delivered += 1;
        run.emit(ta, &resp, EventKind::FrameDecrypted);

        let mut next = ta;
        let rx_due = run.responder_state.as_ref().is_some_and(SessionState::receive_rekey_due);
        if rx_due && !frame.last {
            match self.rekey(idx, Side::Responder, EventKind::RekeyAfterDecrypt, ta) {
                Some(done) => next = done,
                None => return ta,
            }
        } else {
            run.emit(ta, &resp, EventKind::KeyStillValid);
            if frame.last {
                run.emit(ta, &resp, EventKind::SessionEnd);
                run.status = SessionStatus::Completed;
            } else {
                run.emit(ta, &resp, EventKind::SessionContinue);
            }
        }

        if let Some(user) = to_user {
            self.inner_hop(&user, &resp, false, &plain.encode(), ta);
            self.deliveries.entry(user).or_default().push(plain.payload);
        } else if let Some(target) = forward_to {
            let tidx = self.sessions.iter().position(|s| s.spec.name == target).unwrap();
            if self.sessions[tidx].status == SessionStatus::Established {
                let onward = Frame {
                    kind: plain.header.packet_type,
                    payload: plain.payload,
                    index: self.sessions[tidx].next_index,
                    last: frame.last,
                };
                next = next.max(self.send_frame(tidx, onward, ta));
            } else {
                self.sessions[idx].forward_failures += 1;
            }
        } else {
            self.deliveries.entry(resp).or_default().push(plain.payload);
        }
        next
    }

    fn scripted_frame(&mut self, idx: usize, index: u32) -> Frame {
        let run = &mut self.sessions[idx];
        let mut payload = vec![0u8; run.spec.size];
        run.payload_rng.fill_bytes(&mut payload);
        Frame {
            kind: run.spec.kind.packet_type(),
            payload,
            index,
            last: index + 1 == run.spec.frames,
        }
    }

    /// Runs every scenario session that has not started yet, in virtual-time
    /// order, and returns the report.
    pub fn run(&mut self) -> SimulationReport {
        let mut queue = BinaryHeap::new();
        let mut seq = 0u64;
        let mut push = |q: &mut BinaryHeap<_>, t: u64, idx: usize, step: Option<u32>| {
            q.push(Reverse((t, seq, idx, step)));
            seq += 1;
        };
        for idx in 0..self.sessions.len() {
            if self.sessions[idx].status == SessionStatus::Pending {
                push(&mut queue, 0, idx, None);
            }
        }
        while let Some(Reverse((t, _, idx, step))) = queue.pop() {
            match step {
                None => {
                    if let Ok(done) = self.open(idx, t) {
                        if self.sessions[idx].spec.frames > 0 {
                            push(&mut queue, done, idx, Some(0));
                        }
                    }
                }
                Some(i) => {
                    if self.sessions[idx].status != SessionStatus::Established {
                        continue;
                    }
                    let frame = self.scripted_frame(idx, i);
                    let next = self.send_frame(idx, frame, t);
                    if i + 1 < self.sessions[idx].spec.frames {
                        push(&mut queue, next, idx, Some(i + 1));
                    }
                }
            }
        }
        self.report()
    }

    fn reliable(&self, idx: usize) -> bool {
        let spec = &self.sessions[idx].spec;
        let kdc = self.topo.kdc();
        let ok = |a: &str, b: &str| self.topo.route_is_reliable(a, b);
        let direct = ok(&spec.initiator, kdc)
            && ok(kdc, &spec.initiator)
            && ok(kdc, &spec.responder)
            && ok(&spec.responder, kdc)
            && ok(&spec.initiator, &spec.responder);
        let upstream = self
            .sessions
            .iter()
            .position(|s| s.spec.forward_to.as_deref() == Some(spec.name.as_str()));
        direct && upstream.is_none_or(|u| self.reliable(u))
    }

    pub fn report(&self) -> SimulationReport {
        let sessions = (0..self.sessions.len())
            .map(|idx| {
                let run = &self.sessions[idx];
                let verdict = self.reliable(idx).then(|| {
                    let mode = match run.status {
                        SessionStatus::Completed | SessionStatus::Rejected(_) => Mode::Complete,
                        _ => Mode::Prefix,
                    };
                    conformance_check(&run.log, mode).expect("a session log holds one session")
                });
                SessionReport {
                    name: run.spec.name.clone(),
                    session: run.id,
                    initiator: run.spec.initiator.clone(),
                    responder: run.spec.responder.clone(),
                    status: run.status,
                    generation: run.generation(),
                    log: run.log.clone(),
                    stats: run.stats,
                    forward_failures: run.forward_failures,
                    verdict,
                }
            })
            .collect();
        SimulationReport {
            seed: self.topo.seed(),
            sessions,
            deliveries: self.deliveries.clone(),
        }
    }
}

/// Builds, runs and reports a scenario.
pub fn run_scenario(config: &ScenarioConfig) -> Result<SimulationReport, SimError> {
    let topo = build_topology(config)?;
    Ok(Simulator::new(topo).run())
}

