//! Flow rules, rule sets and their canonical byte form.
//!
//! The wire/JSON layout is the stats-API style used by REST controllers:
//!
//! ```json
//! {"actions":["OUTPUT:2"],"dpid":1,"match":{"in_port":1,"nw_dst":"10.0.0.2","nw_proto":6,"nw_src":"10.0.0.1"},"priority":10,"version":1}
//! ```
//!
//! Canonical bytes are that JSON with keys in lexicographic order and no
//! whitespace. Struct fields below are declared in key order so that
//! `serde_json::to_vec` emits the canonical form directly.

use std::cmp::Reverse;
use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::digest::Digest;

pub type PortId = u32;

/// Datapath id of a switch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SwitchId(pub u32);

impl fmt::Display for SwitchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Header fields a rule can match on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PacketFields {
    pub in_port: PortId,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub proto: u8,
}

/// Partial match record; absent fields are wildcards.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Match {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub in_port: Option<PortId>,
    #[serde(rename = "nw_dst", skip_serializing_if = "Option::is_none", default)]
    pub dst_addr: Option<Ipv4Addr>,
    #[serde(rename = "nw_proto", skip_serializing_if = "Option::is_none", default)]
    pub proto: Option<u8>,
    #[serde(rename = "nw_src", skip_serializing_if = "Option::is_none", default)]
    pub src_addr: Option<Ipv4Addr>,
}

impl Match {
    pub fn any() -> Self {
        Self::default()
    }

    pub fn matches(&self, p: &PacketFields) -> bool {
        self.in_port.is_none_or(|v| v == p.in_port)
            && self.src_addr.is_none_or(|v| v == p.src)
            && self.dst_addr.is_none_or(|v| v == p.dst)
            && self.proto.is_none_or(|v| v == p.proto)
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("match serialization is infallible")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Forward(PortId),
    Drop,
    Flood,
    ToController,
}

impl Action {
    fn to_actions(self) -> Vec<String> {
        match self {
            Action::Forward(p) => vec![format!("OUTPUT:{p}")],
            Action::Drop => Vec::new(),
            Action::Flood => vec!["OUTPUT:FLOOD".to_string()],
            Action::ToController => vec!["OUTPUT:CONTROLLER".to_string()],
        }
    }

    fn from_actions(actions: &[String]) -> Result<Action, String> {
        match actions {
            [] => Ok(Action::Drop),
            [one] => match one.strip_prefix("OUTPUT:") {
                Some("FLOOD") => Ok(Action::Flood),
                Some("CONTROLLER") => Ok(Action::ToController),
                Some(port) => port
                    .parse::<PortId>()
                    .map(Action::Forward)
                    .map_err(|_| format!("invalid output port `{port}`")),
                None => Err(format!("unsupported action `{one}`")),
            },
            _ => Err("at most one action per rule is supported".to_string()),
        }
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_actions().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        Action::from_actions(&raw).map_err(serde::de::Error::custom)
    }
}

fn default_version() -> u64 {
    1
}

/// One match-action entry.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowRule {
    #[serde(rename = "actions")]
    pub action: Action,
    pub dpid: SwitchId,
    #[serde(rename = "match")]
    pub matcher: Match,
    pub priority: u16,
    #[serde(default = "default_version")]
    pub version: u64,
}

impl FlowRule {
    pub fn new(dpid: SwitchId, priority: u16, matcher: Match, action: Action) -> Self {
        Self {
            action,
            dpid,
            matcher,
            priority,
            version: 1,
        }
    }

    pub fn key(&self) -> RuleKey {
        RuleKey {
            dpid: self.dpid,
            priority: Reverse(self.priority),
            matcher: self.matcher.canonical_bytes(),
        }
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("rule serialization is infallible")
    }
}

/// Identity of a rule inside a rule set; also its canonical sort key
/// (dpid ascending, priority descending, match bytes ascending).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RuleKey {
    pub dpid: SwitchId,
    pub priority: Reverse<u16>,
    pub matcher: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleSetError {
    #[error("duplicate rule for dpid {dpid}, priority {priority}")]
    Duplicate { dpid: SwitchId, priority: u16 },
}

/// A set of flow rules with at most one rule per (dpid, priority, match).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RuleSet {
    rules: BTreeMap<RuleKey, FlowRule>,
}

impl RuleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rules<I: IntoIterator<Item = FlowRule>>(rules: I) -> Result<Self, RuleSetError> {
        let mut set = RuleSet::new();
        for r in rules {
            set.insert(r)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, rule: FlowRule) -> Result<(), RuleSetError> {
        let key = rule.key();
        if self.rules.contains_key(&key) {
            return Err(RuleSetError::Duplicate {
                dpid: rule.dpid,
                priority: rule.priority,
            });
        }
        self.rules.insert(key, rule);
        Ok(())
    }

    /// Inserts or replaces the rule with the same key.
    pub fn upsert(&mut self, rule: FlowRule) {
        self.rules.insert(rule.key(), rule);
    }

    pub fn remove(&mut self, key: &RuleKey) -> Option<FlowRule> {
        self.rules.remove(key)
    }

    pub fn contains(&self, rule: &FlowRule) -> bool {
        self.rules.get(&rule.key()) == Some(rule)
    }

    pub fn get(&self, key: &RuleKey) -> Option<&FlowRule> {
        self.rules.get(key)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Rules in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = &FlowRule> {
        self.rules.values()
    }

    /// Rules belonging to one switch.
    pub fn slice(&self, dpid: SwitchId) -> RuleSet {
        RuleSet {
            rules: self
                .rules
                .iter()
                .filter(|(k, _)| k.dpid == dpid)
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Canonical JSON array of the rules.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + self.rules.len() * 96);
        out.push(b'[');
        for (i, rule) in self.rules.values().enumerate() {
            if i > 0 {
                out.push(b',');
            }
            serde_json::to_writer(&mut out, rule).expect("rule serialization is infallible");
        }
        out.push(b']');
        out
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&self.canonical_bytes())
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<RuleSet, String> {
        let rules: Vec<FlowRule> = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
        RuleSet::from_rules(rules).map_err(|e| e.to_string())
    }
}

impl Serialize for RuleSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.rules.values())
    }
}

impl<'de> Deserialize<'de> for RuleSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rules = Vec::<FlowRule>::deserialize(d)?;
        RuleSet::from_rules(rules).map_err(serde::de::Error::custom)
    }
}

impl<'a> IntoIterator for &'a RuleSet {
    type Item = &'a FlowRule;
    type IntoIter = std::collections::btree_map::Values<'a, RuleKey, FlowRule>;

    fn into_iter(self) -> Self::IntoIter {
        self.rules.values()
    }
}
