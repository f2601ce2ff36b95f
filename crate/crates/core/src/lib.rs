//! Virtual private video networks: selective media encryption under cleartext
//! signaling, session keys distributed by a key distribution centre over
//! elliptic-curve key wrapping, and an executable evaluation-net model that
//! every simulated protocol run is checked against.
//!
//! Module map:
//!
//! - [`enet`]: generic evaluation-net engine (firing, runs, reachability).
//! - [`vpvn`]: the EN_VPVN net, protocol events and the trace conformance checker.
//! - [`crypto`]: P-256 key pairs, session-key wrapping, AES-256-GCM payload sealing.
//! - [`kdc`]: the key distribution centre and its wire messages.
//! - [`media`]: packet framing and the encryption/decryption layer.
//! - [`sim`]: deterministic discrete-event simulator for the three VPVN architectures.

#![forbid(unsafe_code)]

pub mod crypto;
pub mod enet;
pub mod kdc;
pub mod media;
pub mod replay;
pub mod sim;
pub mod vpvn;

use std::fmt;
use std::str::FromStr;

/// Opaque 64-bit session identifier, printed as 16 hex digits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SessionId(pub u64);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for SessionId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s, 16).map(SessionId)
    }
}
