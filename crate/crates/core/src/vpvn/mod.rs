//! The EN_VPVN net: a single session token travelling from a key request at
//! the peripheral position `bp1` through authorization, key generation and
//! wrapping, key delivery, and the per-frame encrypt/send/receive/decrypt
//! cycle, until the end-of-work check absorbs it.
//!
//! Arc table (branch tags in brackets):
//!
//! | transition | primitive        | from | to                                   |
//! |------------|------------------|------|--------------------------------------|
//! | t1         | Ident            | bp1  | b1                                   |
//! | t2 (br1)   | CheckAuthorities | b1   | b2 [1 authorized], b3 [0 rejected]   |
//! | t3         | GenSKey          | b2   | b4                                   |
//! | t4         | EndInit          | b3   | absorbed                             |
//! | t5         | ECCSKey          | b4   | b5                                   |
//! | t6         | SendSKey         | b5   | b6                                   |
//! | t7 (br2)   | Encrypt          | b6   | b7 [0 key valid], bp1 [1 rekey]      |
//! | t8         | Send             | b7   | b8                                   |
//! | t9         | Receive          | b8   | b9                                   |
//! | t10        | Decrypt          | b9   | b10                                  |
//! | t11 (br3)  | CheckSKey        | b10  | b11 [0 key valid], bp1 [1 rekey]     |
//! | t12 (br4)  | Quit             | b11  | absorbed [1 end], b6 [0 continue]    |
//!
//! Rekey branches return the token to `bp1`, so a rekey re-runs the whole
//! request cycle t1, t2, t3, t5, t6.

mod conformance;
mod events;

pub use conformance::{conformance_check, project_events, Mode, ProjectedFiring, Rejection, Verdict};
pub use events::{format_log, parse_log, EventKind, ProtocolEvent};

use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::enet::{Net, NetDefinition, OutputArc, Procedures, Tag, Token, TransitionDef, Value};
use crate::SessionId;

pub const BP1: &str = "bp1";
pub const INTERNAL_POSITIONS: [&str; 11] = ["b1", "b2", "b3", "b4", "b5", "b6", "b7", "b8", "b9", "b10", "b11"];
pub const RESOLVERS: [&str; 4] = ["br1", "br2", "br3", "br4"];
pub const TRANSITIONS: [&str; 12] = ["t1", "t2", "t3", "t4", "t5", "t6", "t7", "t8", "t9", "t10", "t11", "t12"];

/// Branch tags of the switched transitions.
pub mod tag {
    use crate::enet::Tag;

    pub const ONLY: Tag = 0;
    pub const REJECTED: Tag = 0;
    pub const AUTHORIZED: Tag = 1;
    pub const KEY_VALID: Tag = 0;
    pub const REKEY: Tag = 1;
    pub const CONTINUE: Tag = 0;
    pub const END: Tag = 1;
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown resolving position `{0}`")]
    UnknownResolver(String),
    #[error("unknown event kind `{0}`")]
    UnknownEventKind(String),
    #[error("malformed event line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("log mixes sessions {0} and {1}")]
    MixedSessions(SessionId, SessionId),
    #[error("precondition violated: {0}")]
    Precondition(&'static str),
    #[error("token lacks attribute `{0}`")]
    MissingAttribute(&'static str),
}

fn simple(id: &str, from: &str, to: &str, procedure: &str) -> TransitionDef {
    TransitionDef {
        id: id.into(),
        inputs: vec![from.into()],
        outputs: vec![OutputArc::to(tag::ONLY, to)],
        resolver: None,
        procedure: procedure.into(),
    }
}

fn switched(id: &str, from: &str, resolver: &str, procedure: &str, outputs: [OutputArc; 2]) -> TransitionDef {
    TransitionDef {
        id: id.into(),
        inputs: vec![from.into()],
        outputs: outputs.into(),
        resolver: Some(resolver.into()),
        procedure: procedure.into(),
    }
}

/// The EN_VPVN definition with Mo = {bp1}.
pub fn en_vpvn() -> NetDefinition {
    use tag::*;
    let transitions = vec![
        simple("t1", "bp1", "b1", "Ident"),
        switched(
            "t2",
            "b1",
            "br1",
            "CheckAuthorities",
            [OutputArc::to(AUTHORIZED, "b2"), OutputArc::to(REJECTED, "b3")],
        ),
        simple("t3", "b2", "b4", "GenSKey"),
        TransitionDef {
            id: "t4".into(),
            inputs: vec!["b3".into()],
            outputs: vec![OutputArc::absorb(ONLY)],
            resolver: None,
            procedure: "EndInit".into(),
        },
        simple("t5", "b4", "b5", "ECCSKey"),
        simple("t6", "b5", "b6", "SendSKey"),
        switched(
            "t7",
            "b6",
            "br2",
            "Encrypt",
            [OutputArc::to(KEY_VALID, "b7"), OutputArc::to(REKEY, BP1)],
        ),
        simple("t8", "b7", "b8", "Send"),
        simple("t9", "b8", "b9", "Receive"),
        simple("t10", "b9", "b10", "Decrypt"),
        switched(
            "t11",
            "b10",
            "br3",
            "CheckSKey",
            [OutputArc::to(KEY_VALID, "b11"), OutputArc::to(REKEY, BP1)],
        ),
        switched("t12", "b11", "br4", "Quit", [OutputArc::absorb(END), OutputArc::to(CONTINUE, "b6")]),
    ];
    NetDefinition {
        positions: std::iter::once(BP1)
            .chain(INTERNAL_POSITIONS)
            .map(String::from)
            .collect(),
        peripheral: vec![BP1.into()],
        resolving: RESOLVERS.iter().map(|s| s.to_string()).collect(),
        transitions,
        initial: vec![BP1.into()],
    }
}

/// EN_VPVN with identity procedures, built once.
pub fn en_vpvn_net() -> &'static Net {
    static NET: OnceLock<Net> = OnceLock::new();
    NET.get_or_init(|| Net::build(en_vpvn()).expect("EN_VPVN is well formed"))
}

/// EN_VPVN whose transitions run the session-token primitives.
pub fn en_vpvn_with(procedures: VpvnProcedures) -> Net {
    Net::build_with(en_vpvn(), Arc::new(procedures)).expect("EN_VPVN is well formed")
}

/// Attributes of the EN_VPVN token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionToken {
    pub requester: String,
    pub peer: String,
    pub session: SessionId,
    pub authorized: bool,
    pub rekey_needed: bool,
    pub end_of_work: bool,
    pub frames_remaining: u64,
    pub generation: u32,
    pub packets_since_rekey: u64,
    /// Sender-side limit checked before encryption; 0 disables it.
    pub max_packets: u64,
    /// Receiver-side limit checked after decryption; 0 disables it.
    pub rx_max_packets: u64,
}

impl SessionToken {
    pub fn new(requester: &str, peer: &str, session: SessionId, frames: u64) -> Self {
        Self {
            requester: requester.into(),
            peer: peer.into(),
            session,
            authorized: false,
            rekey_needed: false,
            end_of_work: false,
            frames_remaining: frames,
            generation: 0,
            packets_since_rekey: 0,
            max_packets: 0,
            rx_max_packets: 0,
        }
    }

    pub fn to_token(&self) -> Token {
        let int = |v: u64| Value::Int(v as i64);
        Token::new()
            .with("requester", Value::Id(self.requester.clone()))
            .with("peer", Value::Id(self.peer.clone()))
            .with("session", Value::Id(self.session.to_string()))
            .with("authorized", Value::Bool(self.authorized))
            .with("rekey_needed", Value::Bool(self.rekey_needed))
            .with("end_of_work", Value::Bool(self.end_of_work))
            .with("frames_remaining", int(self.frames_remaining))
            .with("generation", int(self.generation as u64))
            .with("packets_since_rekey", int(self.packets_since_rekey))
            .with("max_packets", int(self.max_packets))
            .with("rx_max_packets", int(self.rx_max_packets))
    }

    pub fn from_token(token: &Token) -> Result<Self, ModelError> {
        let id = |k: &'static str| token.get_id(k).map(str::to_string).ok_or(ModelError::MissingAttribute(k));
        let flag = |k: &'static str| token.get_bool(k).ok_or(ModelError::MissingAttribute(k));
        let int = |k: &'static str| token.get_int(k).map(|v| v as u64).ok_or(ModelError::MissingAttribute(k));
        Ok(Self {
            requester: id("requester")?,
            peer: id("peer")?,
            session: id("session")?
                .parse()
                .map_err(|_| ModelError::MissingAttribute("session"))?,
            authorized: flag("authorized")?,
            rekey_needed: flag("rekey_needed")?,
            end_of_work: flag("end_of_work")?,
            frames_remaining: int("frames_remaining")?,
            generation: int("generation")? as u32,
            packets_since_rekey: int("packets_since_rekey")?,
            max_packets: int("max_packets")?,
            rx_max_packets: int("rx_max_packets")?,
        })
    }
}

type Authorizer = dyn Fn(&str, &str) -> bool + Send + Sync;

/// The twelve primitives as transforms of [`SessionToken`] attributes.
#[derive(Clone)]
pub struct VpvnProcedures {
    authorizer: Arc<Authorizer>,
}

impl VpvnProcedures {
    pub fn new(authorizer: impl Fn(&str, &str) -> bool + Send + Sync + 'static) -> Self {
        Self {
            authorizer: Arc::new(authorizer),
        }
    }

    pub fn allow_all() -> Self {
        Self::new(|_, _| true)
    }

    const NAMES: [&'static str; 12] = [
        "Ident",
        "CheckAuthorities",
        "GenSKey",
        "EndInit",
        "ECCSKey",
        "SendSKey",
        "Encrypt",
        "Send",
        "Receive",
        "Decrypt",
        "CheckSKey",
        "Quit",
    ];
}

impl Procedures for VpvnProcedures {
    fn knows(&self, name: &str) -> bool {
        Self::NAMES.contains(&name)
    }

    fn apply(&self, name: &str, token: &mut Token) {
        let Ok(mut s) = SessionToken::from_token(token) else {
            return;
        };
        match name {
            "CheckAuthorities" => s.authorized = (self.authorizer)(&s.requester, &s.peer),
            "GenSKey" => {
                s.generation += 1;
                s.packets_since_rekey = 0;
                s.rekey_needed = false;
            }
            "EndInit" => s.end_of_work = true,
            "Encrypt" => {
                s.rekey_needed = s.max_packets > 0 && s.packets_since_rekey >= s.max_packets;
                if !s.rekey_needed {
                    s.packets_since_rekey += 1;
                }
            }
            "Send" => s.frames_remaining = s.frames_remaining.saturating_sub(1),
            "CheckSKey" => {
                s.rekey_needed =
                    s.frames_remaining > 0 && s.rx_max_packets > 0 && s.packets_since_rekey >= s.rx_max_packets;
            }
            "Quit" => s.end_of_work = s.end_of_work || s.frames_remaining == 0,
            _ => {}
        }
        *token = s.to_token();
    }
}

/// Answer of a resolving position for a session token.
pub fn resolve(resolver: &str, token: &SessionToken) -> Result<Tag, ModelError> {
    let on = match resolver {
        "br1" => token.authorized,
        "br2" | "br3" => token.rekey_needed,
        "br4" => token.end_of_work || token.frames_remaining == 0,
        other => return Err(ModelError::UnknownResolver(other.to_string())),
    };
    Ok(on as Tag)
}

/// Resolver callback for [`Net::run`] that reads session-token attributes.
pub fn token_resolver(resolver: &str, token: &Token) -> Tag {
    SessionToken::from_token(token)
        .and_then(|s| resolve(resolver, &s))
        .unwrap_or(0)
}

/// Firings of a conformant session with `frames` media frames and `rekeys`
/// rekeys requested before encryption.
pub fn happy_path_length(frames: usize, rekeys: usize) -> Result<usize, ModelError> {
    if frames == 0 {
        return Err(ModelError::Precondition("frames must be at least 1"));
    }
    Ok(5 + 6 * frames + 6 * rekeys)
}
