//! Scenario files and topology validation.
//!
//! A scenario is TOML:
//!
//! ```toml
//! seed = 7
//!
//! [[nodes]]
//! id = "kdc"
//! role = "kdc"
//!
//! [[nodes]]
//! id = "site-a"
//! role = "gateway"
//! inner = ["a1"]
//!
//! [[links]]
//! a = "site-a"
//! b = "kdc"
//! latency = 2      # ticks, default 1
//! loss = 0.0       # per-hop drop probability
//! reorder = 0      # extra random delay of 0..=reorder ticks
//! corrupt = 0.0    # per-hop single-bit-flip probability
//!
//! [acl]
//! site-a = ["*"]
//!
//! [policy]
//! max_packets = 10000
//! max_bytes = 67108864
//!
//! [[sessions]]
//! name = "s1"
//! initiator = "site-a"
//! responder = "site-b"
//! frames = 3
//! size = 160
//! kind = "video"          # or "audio"
//! signaling = 1           # cleartext SIGNALING packets before media
//! from_user = "a1"        # inner user feeding the initiating gateway
//! to_user = "b1"          # inner user behind the responding gateway
//! forward_to = "s2"       # hand decrypted frames to another session
//! force_rekey_before = [2]
//! max_packets = 10        # overrides [policy]
//! rx_max_packets = 5      # receiver asks for a rekey after this many
//! cipher = "aes-256-gcm"  # or "chacha20-poly1305"
//! ```
//!
//! Subscribers not listed under `[acl]` may not open any session.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Deserialize;

use super::SimError;
use crate::crypto::CipherSuite;
use crate::media::{PacketType, RekeyPolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Point,
    Gateway,
    Kdc,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub role: NodeRole,
    #[serde(default)]
    pub inner: Vec<String>,
}

fn one() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    #[serde(default = "one")]
    pub latency: u64,
    #[serde(default)]
    pub loss: f64,
    #[serde(default)]
    pub reorder: u64,
    #[serde(default)]
    pub corrupt: f64,
}

impl LinkSpec {
    pub fn name(&self) -> String {
        format!("{}-{}", self.a, self.b)
    }

    pub fn is_reliable(&self) -> bool {
        self.loss == 0.0 && self.corrupt == 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    #[serde(default = "default_max_packets")]
    pub max_packets: u64,
    #[serde(default = "default_max_bytes")]
    pub max_bytes: u64,
}

fn default_max_packets() -> u64 {
    RekeyPolicy::default().max_packets
}

fn default_max_bytes() -> u64 {
    RekeyPolicy::default().max_bytes
}

impl Default for PolicySpec {
    fn default() -> Self {
        Self {
            max_packets: default_max_packets(),
            max_bytes: default_max_bytes(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Audio,
    #[default]
    Video,
}

impl MediaKind {
    pub fn packet_type(self) -> PacketType {
        match self {
            MediaKind::Audio => PacketType::Audio,
            MediaKind::Video => PacketType::Video,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
pub enum CipherName {
    #[default]
    #[serde(rename = "aes-256-gcm")]
    Aes256Gcm,
    #[serde(rename = "chacha20-poly1305")]
    ChaCha20Poly1305,
}

impl From<CipherName> for CipherSuite {
    fn from(c: CipherName) -> Self {
        match c {
            CipherName::Aes256Gcm => CipherSuite::Aes256Gcm,
            CipherName::ChaCha20Poly1305 => CipherSuite::ChaCha20Poly1305,
        }
    }
}

fn default_size() -> usize {
    160
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSpec {
    pub name: String,
    pub initiator: String,
    pub responder: String,
    #[serde(default)]
    pub frames: u32,
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(default)]
    pub kind: MediaKind,
    #[serde(default)]
    pub signaling: u32,
    pub from_user: Option<String>,
    pub to_user: Option<String>,
    pub forward_to: Option<String>,
    #[serde(default)]
    pub force_rekey_before: Vec<u32>,
    pub max_packets: Option<u64>,
    pub rx_max_packets: Option<u64>,
    #[serde(default)]
    pub cipher: CipherName,
}

impl SessionSpec {
    pub fn new(name: &str, initiator: &str, responder: &str, frames: u32) -> Self {
        Self {
            name: name.into(),
            initiator: initiator.into(),
            responder: responder.into(),
            frames,
            size: default_size(),
            kind: MediaKind::default(),
            signaling: 0,
            from_user: None,
            to_user: None,
            forward_to: None,
            force_rekey_before: Vec::new(),
            max_packets: None,
            rx_max_packets: None,
            cipher: CipherName::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub acl: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default)]
    pub sessions: Vec<SessionSpec>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Schema(e.message().to_string()))
    }
}

/// One step along a route.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hop {
    pub link: usize,
    pub from: String,
    pub to: String,
}

/// A validated scenario.
#[derive(Clone, Debug)]
pub struct Topology {
    config: ScenarioConfig,
    kdc: String,
    adjacency: BTreeMap<String, Vec<(String, usize)>>,
    gateway_of: BTreeMap<String, String>,
}

fn schema<T>(msg: impl Into<String>) -> Result<T, SimError> {
    Err(SimError::Schema(msg.into()))
}

fn probability_ok(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

pub fn build_topology(config: &ScenarioConfig) -> Result<Topology, SimError> {
    let mut names = BTreeSet::new();
    let mut roles = BTreeMap::new();
    let mut gateway_of = BTreeMap::new();
    for n in &config.nodes {
        if n.id.is_empty() || n.id.len() > crate::kdc::MAX_ID_LEN {
            return schema(format!("node id {:?} is empty or too long", n.id));
        }
        if !names.insert(n.id.clone()) {
            return schema(format!("duplicate id {}", n.id));
        }
        roles.insert(n.id.clone(), n.role);
        if !n.inner.is_empty() && n.role != NodeRole::Gateway {
            return schema(format!("{} has inner users but is not a gateway", n.id));
        }
        for u in &n.inner {
            if gateway_of.insert(u.clone(), n.id.clone()).is_some() {
                return schema(format!("inner user {u} attached to more than one gateway"));
            }
        }
    }
    for u in gateway_of.keys() {
        if names.contains(u) {
            return schema(format!("inner user {u} collides with a node id"));
        }
    }
    let kdcs: Vec<_> = config.nodes.iter().filter(|n| n.role == NodeRole::Kdc).collect();
    let kdc = match kdcs.as_slice() {
        [] => return Err(SimError::NoKdc),
        [k] => k.id.clone(),
        _ => return schema("more than one kdc"),
    };

    let mut adjacency: BTreeMap<String, Vec<(String, usize)>> =
        names.iter().map(|n| (n.clone(), Vec::new())).collect();
    let mut seen_links = BTreeSet::new();
    for (i, l) in config.links.iter().enumerate() {
        for end in [&l.a, &l.b] {
            if !names.contains(end) {
                return schema(format!("link {} names unknown node {end}", l.name()));
            }
        }
        if l.a == l.b {
            return schema(format!("link {} is a self-loop", l.name()));
        }
        let key = if l.a < l.b { (&l.a, &l.b) } else { (&l.b, &l.a) };
        if !seen_links.insert(key) {
            return schema(format!("duplicate link {}", l.name()));
        }
        if !probability_ok(l.loss) || !probability_ok(l.corrupt) {
            return schema(format!("link {} has a probability outside [0, 1]", l.name()));
        }
        adjacency.get_mut(&l.a).unwrap().push((l.b.clone(), i));
        adjacency.get_mut(&l.b).unwrap().push((l.a.clone(), i));
    }
    for v in adjacency.values_mut() {
        v.sort();
    }

    for (id, peers) in &config.acl {
        if roles.get(id).is_none_or(|r| *r == NodeRole::Kdc) {
            return schema(format!("acl entry for unknown subscriber {id}"));
        }
        for p in peers {
            if p != "*" && roles.get(p).is_none_or(|r| *r == NodeRole::Kdc) {
                return schema(format!("acl of {id} names unknown subscriber {p}"));
            }
        }
    }

    let topo = Topology {
        config: config.clone(),
        kdc,
        adjacency,
        gateway_of,
    };

    for id in names.iter().filter(|n| **n != topo.kdc) {
        if topo.route(id, &topo.kdc).is_none() {
            return Err(SimError::Disconnected {
                a: id.clone(),
                b: topo.kdc.clone(),
            });
        }
    }

    let by_name: BTreeMap<_, _> = config.sessions.iter().map(|s| (s.name.as_str(), s)).collect();
    if by_name.len() != config.sessions.len() {
        return schema("duplicate session name");
    }
    for s in &config.sessions {
        for party in [&s.initiator, &s.responder] {
            match roles.get(party) {
                None => return schema(format!("session {} names unknown node {party}", s.name)),
                Some(NodeRole::Kdc) => return schema(format!("session {}: the kdc cannot be a party", s.name)),
                Some(_) => {}
            }
        }
        if s.initiator == s.responder {
            return schema(format!("session {} connects a node to itself", s.name));
        }
        if let Some(u) = &s.from_user {
            if topo.gateway_of.get(u) != Some(&s.initiator) {
                return schema(format!("session {}: {u} is not an inner user of {}", s.name, s.initiator));
            }
        }
        if let Some(u) = &s.to_user {
            if topo.gateway_of.get(u) != Some(&s.responder) {
                return schema(format!("session {}: {u} is not an inner user of {}", s.name, s.responder));
            }
        }
        if let Some(t) = &s.forward_to {
            let Some(target) = by_name.get(t.as_str()) else {
                return schema(format!("session {} forwards to unknown session {t}", s.name));
            };
            if roles[&s.responder] != NodeRole::Gateway || target.initiator != s.responder {
                return schema(format!(
                    "session {} can only forward to a session that starts at its gateway responder",
                    s.name
                ));
            }
            if target.frames != 0 || target.from_user.is_some() || target.forward_to.is_some() {
                return schema(format!("session {t} is fed by {} and cannot carry its own frames", s.name));
            }
            if s.to_user.is_some() {
                return schema(format!("session {} both forwards and delivers to an inner user", s.name));
            }
        }
        if s.size > u16::MAX as usize {
            return schema(format!("session {}: frame size above 65535", s.name));
        }
        if topo.route(&s.initiator, &s.responder).is_none() {
            return Err(SimError::Disconnected {
                a: s.initiator.clone(),
                b: s.responder.clone(),
            });
        }
    }
    let fed: Vec<_> = config.sessions.iter().filter_map(|s| s.forward_to.as_deref()).collect();
    if fed.iter().collect::<BTreeSet<_>>().len() != fed.len() {
        return schema("a session is fed by more than one upstream session");
    }
    Ok(topo)
}

impl Topology {
    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn kdc(&self) -> &str {
        &self.kdc
    }

    pub fn node_count(&self) -> usize {
        self.config.nodes.len()
    }

    pub fn role(&self, id: &str) -> Option<NodeRole> {
        self.config.nodes.iter().find(|n| n.id == id).map(|n| n.role)
    }

    pub fn subscribers(&self) -> impl Iterator<Item = &NodeSpec> {
        self.config.nodes.iter().filter(|n| n.role != NodeRole::Kdc)
    }

    pub fn gateway_of(&self, user: &str) -> Option<&str> {
        self.gateway_of.get(user).map(String::as_str)
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.config.links
    }

    pub fn link(&self, i: usize) -> &LinkSpec {
        &self.config.links[i]
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.config.links.iter().position(|l| l.name() == name)
    }

    pub fn policy(&self) -> RekeyPolicy {
        RekeyPolicy {
            max_packets: self.config.policy.max_packets,
            max_bytes: self.config.policy.max_bytes,
        }
    }

    /// Fewest-hop route; ties go to the lexicographically smaller neighbour.
    pub fn route(&self, from: &str, to: &str) -> Option<Vec<Hop>> {
        if !self.adjacency.contains_key(from) || !self.adjacency.contains_key(to) {
            return None;
        }
        let mut prev: BTreeMap<&str, (&str, usize)> = BTreeMap::new();
        let mut queue = VecDeque::from([from]);
        let mut seen = BTreeSet::from([from]);
        while let Some(n) = queue.pop_front() {
            if n == to {
                break;
            }
            for (m, link) in &self.adjacency[n] {
                if seen.insert(m.as_str()) {
                    prev.insert(m, (n, *link));
                    queue.push_back(m);
                }
            }
        }
        if !seen.contains(to) {
            return None;
        }
        let mut hops = Vec::new();
        let mut at = to;
        while at != from {
            let (p, link) = prev[at];
            hops.push(Hop {
                link,
                from: p.to_string(),
                to: at.to_string(),
            });
            at = p;
        }
        hops.reverse();
        Some(hops)
    }

    pub fn route_is_reliable(&self, from: &str, to: &str) -> bool {
        self.route(from, to)
            .is_some_and(|hops| hops.iter().all(|h| self.link(h.link).is_reliable()))
    }

    pub(super) fn rights_of(&self, id: &str) -> crate::kdc::AccessRights {
        match self.config.acl.get(id) {
            None => crate::kdc::AccessRights::none(),
            Some(peers) if peers.iter().any(|p| p == "*") => crate::kdc::AccessRights::All,
            Some(peers) => crate::kdc::AccessRights::peers(peers.iter().cloned()),
        }
    }
}
