use std::fmt;

use super::{en_vpvn_net, EventKind, ModelError, ProtocolEvent};
use crate::enet::{Tag, Token};

/// A firing claimed by one or more events of a log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProjectedFiring {
    pub transition: &'static str,
    pub tag: Tag,
    /// Index of the first event that produced this firing.
    pub event_index: usize,
}

/// Maps a single-session log onto EN_VPVN firings.
///
/// A grant wraps the session key once per party, so a run of consecutive
/// `KeyWrapped` events is one ECCSKey firing (t5). Every other event is one
/// firing.
pub fn project_events(log: &[ProtocolEvent]) -> Result<Vec<ProjectedFiring>, ModelError> {
    let mut out: Vec<ProjectedFiring> = Vec::with_capacity(log.len());
    let mut previous: Option<EventKind> = None;
    for (i, event) in log.iter().enumerate() {
        if event.session != log[0].session {
            return Err(ModelError::MixedSessions(log[0].session, event.session));
        }
        if event.kind == EventKind::KeyWrapped && previous == Some(EventKind::KeyWrapped) {
            continue;
        }
        let (transition, tag) = event.kind.firing();
        out.push(ProjectedFiring {
            transition,
            tag,
            event_index: i,
        });
        previous = Some(event.kind);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// The log must end with the token absorbed.
    Complete,
    /// The log may stop anywhere along a legal run.
    Prefix,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejection {
    /// 1-based index of the offending firing; one past the end when a
    /// complete log stops early.
    pub step: usize,
    pub event_index: Option<usize>,
    /// Firings that would have been legal at that point.
    pub expected: Vec<(String, Tag)>,
    pub offending: Option<(String, Tag)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(Rejection),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Accept => f.write_str("ACCEPT"),
            Verdict::Reject(r) => {
                let expected: Vec<String> = r.expected.iter().map(|(t, g)| format!("{t}/{g}")).collect();
                write!(f, "REJECT at step {}", r.step)?;
                if let Some(i) = r.event_index {
                    write!(f, " (event {})", i + 1)?;
                }
                match &r.offending {
                    Some((t, g)) => write!(f, ": fired {t}/{g}")?,
                    None => f.write_str(": log ends before the session does")?,
                }
                write!(f, "; enabled: [{}]", expected.join(", "))
            }
        }
    }
}

/// Replays the projection of `log` on EN_VPVN from Mo, resolving every switch
/// by the branch its event claims.
pub fn conformance_check(log: &[ProtocolEvent], mode: Mode) -> Result<Verdict, ModelError> {
    let firings = project_events(log)?;
    let net = en_vpvn_net();
    let mut marking = net.initial_marking(Token::new());
    for (i, f) in firings.iter().enumerate() {
        match net.fire(&marking, f.transition, f.tag) {
            Ok((next, _)) => marking = next,
            Err(_) => {
                return Ok(Verdict::Reject(Rejection {
                    step: i + 1,
                    event_index: Some(f.event_index),
                    expected: net.enabled_any(&marking),
                    offending: Some((f.transition.to_string(), f.tag)),
                }))
            }
        }
    }
    if mode == Mode::Complete && !marking.is_empty() {
        return Ok(Verdict::Reject(Rejection {
            step: firings.len() + 1,
            event_index: None,
            expected: net.enabled_any(&marking),
            offending: None,
        }));
    }
    Ok(Verdict::Accept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SessionId;
    use EventKind::*;

    fn log(kinds: &[EventKind]) -> Vec<ProtocolEvent> {
        kinds
            .iter()
            .enumerate()
            .map(|(i, k)| ProtocolEvent::new(i as u64, "n", SessionId(1), *k))
            .collect()
    }

    const HAPPY: [EventKind; 12] = [
        SessionRequested,
        AuthDecided(true),
        KeyGenerated,
        KeyWrapped,
        KeyWrapped,
        KeyDelivered,
        FrameEncrypted,
        FrameSent,
        FrameReceived,
        FrameDecrypted,
        KeyStillValid,
        SessionEnd,
    ];

    #[test]
    fn single_event_projection() {
        let p = project_events(&log(&[SessionRequested])).unwrap();
        assert_eq!(
            p,
            vec![ProjectedFiring {
                transition: "t1",
                tag: 0,
                event_index: 0
            }]
        );
    }

    #[test]
    fn happy_log_projects_to_eleven_firings() {
        let p = project_events(&log(&HAPPY)).unwrap();
        let ids: Vec<_> = p.iter().map(|f| f.transition).collect();
        assert_eq!(ids, ["t1", "t2", "t3", "t5", "t6", "t7", "t8", "t9", "t10", "t11", "t12"]);
        assert_eq!(conformance_check(&log(&HAPPY), Mode::Complete), Ok(Verdict::Accept));
    }

    #[test]
    fn starting_with_frame_sent_projects_but_rejects_at_step_one() {
        let l = log(&[FrameSent]);
        assert_eq!(project_events(&l).unwrap()[0].transition, "t8");
        let Verdict::Reject(r) = conformance_check(&l, Mode::Prefix).unwrap() else {
            panic!("accepted");
        };
        assert_eq!(r.step, 1);
        assert_eq!(r.expected, vec![("t1".to_string(), 0)]);
        assert_eq!(r.offending, Some(("t8".to_string(), 0)));
    }

    #[test]
    fn receive_before_send_is_rejected_there() {
        let mut kinds = HAPPY.to_vec();
        kinds.swap(7, 8);
        let Verdict::Reject(r) = conformance_check(&log(&kinds), Mode::Complete).unwrap() else {
            panic!("accepted");
        };
        assert_eq!(r.event_index, Some(7));
        assert_eq!(r.offending, Some(("t9".to_string(), 0)));
    }

    #[test]
    fn missing_key_delivery_rejects_at_encrypt() {
        let kinds: Vec<_> = HAPPY.iter().copied().filter(|k| *k != KeyDelivered).collect();
        let Verdict::Reject(r) = conformance_check(&log(&kinds), Mode::Complete).unwrap() else {
            panic!("accepted");
        };
        assert_eq!(r.offending, Some(("t7".to_string(), 0)));
        assert_eq!(r.expected, vec![("t6".to_string(), 0)]);
    }

    #[test]
    fn prefix_mode() {
        assert_eq!(conformance_check(&[], Mode::Prefix), Ok(Verdict::Accept));
        assert!(!conformance_check(&[], Mode::Complete).unwrap().is_accept());
        assert_eq!(conformance_check(&log(&HAPPY[..6]), Mode::Prefix), Ok(Verdict::Accept));
        let Verdict::Reject(r) = conformance_check(&log(&HAPPY[..6]), Mode::Complete).unwrap() else {
            panic!("accepted");
        };
        assert_eq!(r.step, 6);
        assert_eq!(r.offending, None);
    }

    #[test]
    fn rejection_and_rekey_paths() {
        let rejected = log(&[SessionRequested, AuthDecided(false), RequestRejected]);
        assert_eq!(conformance_check(&rejected, Mode::Complete), Ok(Verdict::Accept));

        let mut rekey = HAPPY[..6].to_vec();
        rekey.push(RekeyBeforeEncrypt);
        rekey.extend_from_slice(&HAPPY);
        assert_eq!(conformance_check(&log(&rekey), Mode::Complete), Ok(Verdict::Accept));

        let mut after = HAPPY[..10].to_vec();
        after.push(RekeyAfterDecrypt);
        after.extend_from_slice(&HAPPY[..6]);
        after.extend_from_slice(&HAPPY[6..]);
        assert_eq!(conformance_check(&log(&after), Mode::Complete), Ok(Verdict::Accept));
    }

    #[test]
    fn mixed_sessions_are_refused() {
        let mut l = log(&HAPPY);
        l[3].session = SessionId(2);
        assert_eq!(
            conformance_check(&l, Mode::Complete),
            Err(ModelError::MixedSessions(SessionId(1), SessionId(2)))
        );
    }
}
