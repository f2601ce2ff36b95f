use std::fmt;
use std::str::FromStr;

use super::{tag, ModelError};
use crate::enet::Tag;
use crate::SessionId;

/// Observable protocol step. Each kind corresponds to exactly one
/// (transition, branch) of EN_VPVN.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    SessionRequested,
    AuthDecided(bool),
    KeyGenerated,
    RequestRejected,
    KeyWrapped,
    KeyDelivered,
    RekeyBeforeEncrypt,
    FrameEncrypted,
    FrameSent,
    FrameReceived,
    FrameDecrypted,
    RekeyAfterDecrypt,
    KeyStillValid,
    SessionContinue,
    SessionEnd,
}

impl EventKind {
    pub const ALL: [EventKind; 16] = [
        EventKind::SessionRequested,
        EventKind::AuthDecided(true),
        EventKind::AuthDecided(false),
        EventKind::KeyGenerated,
        EventKind::RequestRejected,
        EventKind::KeyWrapped,
        EventKind::KeyDelivered,
        EventKind::RekeyBeforeEncrypt,
        EventKind::FrameEncrypted,
        EventKind::FrameSent,
        EventKind::FrameReceived,
        EventKind::FrameDecrypted,
        EventKind::RekeyAfterDecrypt,
        EventKind::KeyStillValid,
        EventKind::SessionContinue,
        EventKind::SessionEnd,
    ];

    pub fn firing(self) -> (&'static str, Tag) {
        use EventKind::*;
        match self {
            SessionRequested => ("t1", tag::ONLY),
            AuthDecided(true) => ("t2", tag::AUTHORIZED),
            AuthDecided(false) => ("t2", tag::REJECTED),
            KeyGenerated => ("t3", tag::ONLY),
            RequestRejected => ("t4", tag::ONLY),
            KeyWrapped => ("t5", tag::ONLY),
            KeyDelivered => ("t6", tag::ONLY),
            FrameEncrypted => ("t7", tag::KEY_VALID),
            RekeyBeforeEncrypt => ("t7", tag::REKEY),
            FrameSent => ("t8", tag::ONLY),
            FrameReceived => ("t9", tag::ONLY),
            FrameDecrypted => ("t10", tag::ONLY),
            KeyStillValid => ("t11", tag::KEY_VALID),
            RekeyAfterDecrypt => ("t11", tag::REKEY),
            SessionContinue => ("t12", tag::CONTINUE),
            SessionEnd => ("t12", tag::END),
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::AuthDecided(true) => f.write_str("AuthDecided(ok)"),
            EventKind::AuthDecided(false) => f.write_str("AuthDecided(fail)"),
            other => write!(f, "{other:?}"),
        }
    }
}

impl FromStr for EventKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| ModelError::UnknownEventKind(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ProtocolEvent {
    /// Virtual time in ticks.
    pub time: u64,
    pub node: String,
    pub session: SessionId,
    pub kind: EventKind,
}

impl ProtocolEvent {
    pub fn new(time: u64, node: &str, session: SessionId, kind: EventKind) -> Self {
        Self {
            time,
            node: node.to_string(),
            session,
            kind,
        }
    }
}

impl fmt::Display for ProtocolEvent {
    /// `timestamp node session kind`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.time, self.node, self.session, self.kind)
    }
}

/// Parses an event log, one event per line. Blank lines and lines starting
/// with `#` are skipped.
pub fn parse_log(text: &str) -> Result<Vec<ProtocolEvent>, ModelError> {
    let mut events = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |reason: &str| ModelError::MalformedLine {
            line: n + 1,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [time, node, session, kind] = fields[..] else {
            return Err(malformed("expected `timestamp node session kind`"));
        };
        events.push(ProtocolEvent {
            time: time.parse().map_err(|_| malformed("bad timestamp"))?,
            node: node.to_string(),
            session: session.parse().map_err(|_| malformed("bad session id"))?,
            kind: kind.parse()?,
        });
    }
    Ok(events)
}

pub fn format_log(events: &[ProtocolEvent]) -> String {
    events.iter().map(|e| format!("{e}\n")).collect()
}
