use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::kdc::RejectionCause;
use crate::vpvn::{ProtocolEvent, Verdict};
use crate::SessionId;

/// Media frames from initiator to responder. Signaling and key management
/// are not counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DeliveryStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub integrity_failed: u64,
}

impl DeliveryStats {
    pub fn balanced(&self) -> bool {
        self.sent == self.delivered + self.dropped + self.integrity_failed
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SessionStatus {
    Pending,
    Established,
    Completed,
    Rejected(RejectionCause),
    KdcUnreachable,
}

impl fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionStatus::Pending => f.write_str("pending"),
            SessionStatus::Established => f.write_str("established"),
            SessionStatus::Completed => f.write_str("completed"),
            SessionStatus::Rejected(c) => write!(f, "rejected({c:?})"),
            SessionStatus::KdcUnreachable => f.write_str("kdc-unreachable"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionReport {
    pub name: String,
    pub session: SessionId,
    pub initiator: String,
    pub responder: String,
    pub status: SessionStatus,
    pub generation: u32,
    pub log: Vec<ProtocolEvent>,
    pub stats: DeliveryStats,
    /// Frames decrypted at a gateway that had no live onward session.
    pub forward_failures: u64,
    /// `None` when the session crossed a lossy or corrupting link.
    pub verdict: Option<Verdict>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SimulationReport {
    pub seed: u64,
    pub sessions: Vec<SessionReport>,
    /// Media payloads as received, keyed by the endpoint or inner user.
    pub deliveries: BTreeMap<String, Vec<Vec<u8>>>,
}

impl SimulationReport {
    pub fn session(&self, name: &str) -> Option<&SessionReport> {
        self.sessions.iter().find(|s| s.name == name)
    }

    /// Every checked session was accepted.
    pub fn all_conform(&self) -> bool {
        self.sessions
            .iter()
            .all(|s| s.verdict.as_ref().is_none_or(Verdict::is_accept))
    }

    pub fn conservation_holds(&self) -> bool {
        self.sessions.iter().all(|s| s.stats.balanced())
    }

    /// Text form: each session's event log followed by its stats and verdict.
    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# seed {}", self.seed).unwrap();
        for s in &self.sessions {
            writeln!(
                out,
                "## session {} {} {} -> {} {} generation={}",
                s.name, s.session, s.initiator, s.responder, s.status, s.generation
            )
            .unwrap();
            for e in &s.log {
                writeln!(out, "{e}").unwrap();
            }
            let st = &s.stats;
            write!(
                out,
                "# stats {}->{} sent={} delivered={} dropped={} integrity_failed={}",
                s.initiator, s.responder, st.sent, st.delivered, st.dropped, st.integrity_failed
            )
            .unwrap();
            if s.forward_failures > 0 {
                write!(out, " forward_failures={}", s.forward_failures).unwrap();
            }
            out.push('\n');
            match &s.verdict {
                Some(v) => writeln!(out, "# verdict {v}").unwrap(),
                None => writeln!(out, "# verdict not checked (lossy path)").unwrap(),
            }
        }
        out
    }
}
