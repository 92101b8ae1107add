//! OpenFlow-style switches: priority matching, flow dumps, hashing and
//! verification against the ledger.

mod ids;
mod rules;
mod topology;
mod verification;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::digest::Digest;
use crate::time::SimTime;

pub use ids::{ids_forwarding_check, reference_action, weighting_check, TapRecord};
pub use rules::{
    Action, FlowRule, Match, PacketFields, PortId, RuleKey, RuleSet, RuleSetError, SwitchId,
};
pub use topology::{Fabric, Host, HostId, HostKind, Neighbor, Unreachable};
pub use verification::{run_verification_round, VerificationReport};

/// Per-switch packet counters. Monotone within a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub matched: u64,
    pub forwarded: u64,
    pub dropped: u64,
    pub to_controller: u64,
}

#[derive(Clone, Debug)]
struct CompiledRule {
    rule: FlowRule,
    key: RuleKey,
    bytes: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct Switch {
    pub id: SwitchId,
    table: RuleSet,
    /// Table ordered for first-match lookup: priority desc, then rule bytes asc.
    compiled: Vec<CompiledRule>,
    pub ports: BTreeMap<PortId, Neighbor>,
    blocked_ports: BTreeSet<PortId>,
    pub isolated: bool,
    pub compromised: bool,
    pub counters: Counters,
    pub miss_action: Action,
    idle_timeout: Option<SimTime>,
    reactive_hits: BTreeMap<RuleKey, SimTime>,
}

impl Switch {
    pub fn new(id: SwitchId) -> Self {
        Self {
            id,
            table: RuleSet::new(),
            compiled: Vec::new(),
            ports: BTreeMap::new(),
            blocked_ports: BTreeSet::new(),
            isolated: false,
            compromised: false,
            counters: Counters::default(),
            miss_action: Action::Drop,
            idle_timeout: None,
            reactive_hits: BTreeMap::new(),
        }
    }

    pub fn table(&self) -> &RuleSet {
        &self.table
    }

    /// Replaces the whole table with the rules for this dpid.
    pub fn install_rules(&mut self, rules: &RuleSet) {
        self.table = rules.slice(self.id);
        self.reactive_hits.clear();
        self.recompile();
    }

    /// Direct mutable access to the table, bypassing the controller. Used to
    /// model tampering; the caller decides whether to flag the switch.
    pub fn with_table_mut<R>(&mut self, f: impl FnOnce(&mut RuleSet) -> R) -> R {
        let out = f(&mut self.table);
        self.recompile();
        out
    }

    /// Installs a flow entry on behalf of a reactive controller. The entry
    /// expires after the configured idle timeout without hits.
    pub fn install_reactive(&mut self, rule: FlowRule, now: SimTime) {
        let key = rule.key();
        self.table.upsert(rule);
        self.reactive_hits.insert(key, now);
        self.recompile();
    }

    pub fn set_idle_timeout(&mut self, timeout: Option<SimTime>) {
        self.idle_timeout = timeout;
    }

    pub fn block_port(&mut self, port: PortId) {
        self.blocked_ports.insert(port);
    }

    pub fn unblock_port(&mut self, port: PortId) {
        self.blocked_ports.remove(&port);
    }

    pub fn is_port_blocked(&self, port: PortId) -> bool {
        self.blocked_ports.contains(&port)
    }

    fn recompile(&mut self) {
        let mut compiled: Vec<CompiledRule> = self
            .table
            .iter()
            .map(|r| CompiledRule {
                key: r.key(),
                bytes: r.canonical_bytes(),
                rule: r.clone(),
            })
            .collect();
        compiled.sort_by(|a, b| {
            b.rule
                .priority
                .cmp(&a.rule.priority)
                .then_with(|| a.bytes.cmp(&b.bytes))
        });
        self.compiled = compiled;
    }

    /// Highest-priority matching rule without touching counters.
    pub fn lookup(&self, p: &PacketFields) -> Option<&FlowRule> {
        self.compiled
            .iter()
            .find(|c| c.rule.matcher.matches(p))
            .map(|c| &c.rule)
    }

    /// Match-action step with counter updates.
    pub fn forward_packet(&mut self, p: &PacketFields) -> Action {
        self.forward_packet_at(p, SimTime::ZERO)
    }

    /// Like [`Switch::forward_packet`], expiring idle reactive entries relative to `now`.
    pub fn forward_packet_at(&mut self, p: &PacketFields, now: SimTime) -> Action {
        let hit = loop {
            let Some(idx) = self.compiled.iter().position(|c| c.rule.matcher.matches(p)) else {
                break None;
            };
            let key = self.compiled[idx].key.clone();
            match (self.idle_timeout, self.reactive_hits.get(&key).copied()) {
                (Some(timeout), Some(last)) if now.saturating_sub(last) > timeout => {
                    self.reactive_hits.remove(&key);
                    self.table.remove(&key);
                    self.compiled.remove(idx);
                }
                (_, Some(_)) => {
                    self.reactive_hits.insert(key, now);
                    break Some(self.compiled[idx].rule.action);
                }
                _ => break Some(self.compiled[idx].rule.action),
            }
        };
        let action = match hit {
            Some(a) => {
                self.counters.matched += 1;
                a
            }
            None => self.miss_action,
        };
        let action = match action {
            Action::Forward(port) if self.blocked_ports.contains(&port) => Action::Drop,
            a => a,
        };
        match action {
            Action::Forward(_) | Action::Flood => self.counters.forwarded += 1,
            Action::Drop => self.counters.dropped += 1,
            Action::ToController => self.counters.to_controller += 1,
        }
        action
    }

    /// Canonical serialization of the switch's actual table.
    pub fn dump_flows(&self) -> Vec<u8> {
        self.table.canonical_bytes()
    }

    pub fn flow_table_hash(&self) -> Digest {
        Digest::of(&self.dump_flows())
    }

    /// Compares the table hash with the digest expected from the ledger.
    pub fn verify(&self, expected: Digest) -> Verdict {
        verify_switch(self, expected)
    }
}

pub fn dump_flows(switch: &Switch) -> Vec<u8> {
    switch.dump_flows()
}

pub fn flow_table_hash(switch: &Switch) -> Digest {
    switch.flow_table_hash()
}

pub fn verify_switch(switch: &Switch, expected: Digest) -> Verdict {
    let observed = switch.flow_table_hash();
    if observed == expected {
        Verdict::Consistent
    } else {
        Verdict::Inconsistent(Inconsistency::Digest { observed, expected })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Inconsistency {
    Digest {
        observed: Digest,
        expected: Digest,
    },
    Forwarding {
        #[serde(serialize_with = "ser_fields")]
        packet: PacketFields,
        #[serde(serialize_with = "ser_action")]
        expected: Action,
        #[serde(serialize_with = "ser_action")]
        observed: Action,
    },
    Weighting {
        rule_index: usize,
        expected: u64,
        observed: u64,
    },
}

fn ser_action<S: serde::Serializer>(a: &Action, s: S) -> Result<S::Ok, S::Error> {
    a.serialize(s)
}

fn ser_fields<S: serde::Serializer>(p: &PacketFields, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeStruct;
    let mut st = s.serialize_struct("PacketFields", 4)?;
    st.serialize_field("in_port", &p.in_port)?;
    st.serialize_field("nw_src", &p.src.to_string())?;
    st.serialize_field("nw_dst", &p.dst.to_string())?;
    st.serialize_field("nw_proto", &p.proto)?;
    st.end()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", content = "details", rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Inconsistent(Inconsistency),
}

impl Verdict {
    pub fn is_consistent(&self) -> bool {
        matches!(self, Verdict::Consistent)
    }
}
