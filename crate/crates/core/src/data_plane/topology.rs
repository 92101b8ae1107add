//! Switch fabric: switches, attached hosts and the port map between them.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::{Action, FlowRule, Match, PacketFields, PortId, RuleSet, Switch, SwitchId};

/// Priority of the proactive destination-based routing rules.
pub const ROUTE_PRIORITY: u16 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HostId(pub u32);

impl HostId {
    pub fn addr(self) -> Ipv4Addr {
        Ipv4Addr::from(0x0A00_0000 | (self.0 + 1))
    }
}

impl fmt::Display for HostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HostKind {
    Cloud,
    Gateway,
    Bot,
    Server,
}

#[derive(Clone, Debug)]
pub struct Host {
    pub id: HostId,
    pub kind: HostKind,
    pub name: String,
    pub switch: SwitchId,
    pub port: PortId,
}

impl Host {
    pub fn addr(&self) -> Ipv4Addr {
        self.id.addr()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Neighbor {
    Switch { id: SwitchId, port: PortId },
    Host(HostId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("no path from {src} to {dst}")]
pub struct Unreachable {
    pub src: HostId,
    pub dst: HostId,
}

#[derive(Clone, Debug, Default)]
pub struct Fabric {
    pub switches: BTreeMap<SwitchId, Switch>,
    pub hosts: BTreeMap<HostId, Host>,
}

impl Fabric {
    /// `n` switches numbered 1..=n, chained in a line.
    pub fn line(n: u32) -> Self {
        let mut f = Fabric::default();
        for i in 1..=n {
            f.switches.insert(SwitchId(i), Switch::new(SwitchId(i)));
        }
        for i in 1..n {
            f.connect(SwitchId(i), SwitchId(i + 1));
        }
        f
    }

    fn next_port(&self, s: SwitchId) -> PortId {
        self.switches[&s].ports.keys().next_back().map_or(1, |p| p + 1)
    }

    pub fn connect(&mut self, a: SwitchId, b: SwitchId) {
        let pa = self.next_port(a);
        let pb = self.next_port(b);
        self.switches
            .get_mut(&a)
            .expect("unknown switch")
            .ports
            .insert(pa, Neighbor::Switch { id: b, port: pb });
        self.switches
            .get_mut(&b)
            .expect("unknown switch")
            .ports
            .insert(pb, Neighbor::Switch { id: a, port: pa });
    }

    pub fn add_host(&mut self, kind: HostKind, name: impl Into<String>, switch: SwitchId) -> HostId {
        let id = HostId(self.hosts.len() as u32);
        let port = self.next_port(switch);
        self.switches
            .get_mut(&switch)
            .expect("unknown switch")
            .ports
            .insert(port, Neighbor::Host(id));
        self.hosts.insert(
            id,
            Host {
                id,
                kind,
                name: name.into(),
                switch,
                port,
            },
        );
        id
    }

    pub fn switch(&self, id: SwitchId) -> Option<&Switch> {
        self.switches.get(&id)
    }

    pub fn switch_mut(&mut self, id: SwitchId) -> Option<&mut Switch> {
        self.switches.get_mut(&id)
    }

    pub fn switch_ids(&self) -> impl Iterator<Item = SwitchId> + '_ {
        self.switches.keys().copied()
    }

    pub fn hosts_of_kind(&self, kind: HostKind) -> impl Iterator<Item = &Host> + '_ {
        self.hosts.values().filter(move |h| h.kind == kind)
    }

    pub fn host_by_addr(&self, addr: Ipv4Addr) -> Option<&Host> {
        let raw = u32::from(addr);
        if raw & 0xFFFF_0000 != 0x0A00_0000 || raw & 0xFFFF == 0 {
            return None;
        }
        self.hosts.get(&HostId((raw & 0xFFFF) - 1))
    }

    /// Output port at `from` on a shortest path toward `dst`, avoiding
    /// isolated switches. Ties go to the lowest port.
    pub fn route_port(&self, from: SwitchId, dst: HostId) -> Option<PortId> {
        let host = self.hosts.get(&dst)?;
        if from == host.switch {
            return Some(host.port);
        }
        let sw = self.switches.get(&from)?;
        if sw.isolated {
            return None;
        }
        // BFS backwards from the destination's switch gives hop distances.
        let mut dist: BTreeMap<SwitchId, u32> = BTreeMap::new();
        let mut queue = VecDeque::new();
        if self.switches[&host.switch].isolated {
            return None;
        }
        dist.insert(host.switch, 0);
        queue.push_back(host.switch);
        while let Some(s) = queue.pop_front() {
            let d = dist[&s];
            for n in self.switches[&s].ports.values() {
                if let Neighbor::Switch { id, .. } = n {
                    if !self.switches[id].isolated && !dist.contains_key(id) {
                        dist.insert(*id, d + 1);
                        queue.push_back(*id);
                    }
                }
            }
        }
        let mine = *dist.get(&from)?;
        sw.ports.iter().find_map(|(port, n)| match n {
            Neighbor::Switch { id, .. } if dist.get(id) == Some(&(mine - 1)) => Some(*port),
            _ => None,
        })
    }

    /// Proactive destination-based routes for every host at every switch.
    pub fn routing_rules(&self) -> RuleSet {
        let mut set = RuleSet::new();
        for s in self.switches.keys() {
            for h in self.hosts.values() {
                if let Some(port) = self.route_port(*s, h.id) {
                    let rule = FlowRule::new(
                        *s,
                        ROUTE_PRIORITY,
                        Match {
                            dst_addr: Some(h.addr()),
                            ..Match::any()
                        },
                        Action::Forward(port),
                    );
                    set.insert(rule).expect("one route per (switch, host)");
                }
            }
        }
        set
    }

    /// Installs each non-isolated switch's slice of `rules`.
    pub fn install(&mut self, rules: &RuleSet) {
        for sw in self.switches.values_mut().filter(|s| !s.isolated) {
            sw.install_rules(rules);
        }
    }

    /// Peer-side `(switch, port)` pairs that face `target`.
    pub fn facing_ports(&self, target: SwitchId) -> Vec<(SwitchId, PortId)> {
        let Some(sw) = self.switches.get(&target) else {
            return Vec::new();
        };
        sw.ports
            .values()
            .filter_map(|n| match n {
                Neighbor::Switch { id, port } => Some((*id, *port)),
                Neighbor::Host(_) => None,
            })
            .collect()
    }

    /// Marks `target` (un)isolated and (un)blocks every peer interface facing it.
    pub fn set_isolated(&mut self, target: SwitchId, isolated: bool) {
        for (peer, port) in self.facing_ports(target) {
            let sw = self.switches.get_mut(&peer).expect("peer exists");
            if isolated {
                sw.block_port(port);
            } else {
                sw.unblock_port(port);
            }
        }
        if let Some(sw) = self.switches.get_mut(&target) {
            sw.isolated = isolated;
        }
    }

    /// Static walk of the forwarding decisions from `src` to `dst` (no
    /// counters touched). Table misses that go to the controller follow the
    /// controller's shortest-path route.
    pub fn trace_route(&self, src: HostId, dst: HostId, proto: u8) -> Result<Vec<SwitchId>, Unreachable> {
        let err = Unreachable { src, dst };
        let (Some(s), Some(d)) = (self.hosts.get(&src), self.hosts.get(&dst)) else {
            return Err(err);
        };
        let mut fields = PacketFields {
            in_port: s.port,
            src: s.addr(),
            dst: d.addr(),
            proto,
        };
        let mut at = s.switch;
        let mut path = Vec::new();
        for _ in 0..=self.switches.len() {
            let sw = &self.switches[&at];
            if sw.isolated {
                return Err(err);
            }
            path.push(at);
            let action = sw.lookup(&fields).map(|r| r.action).unwrap_or(sw.miss_action);
            let port = match action {
                Action::Forward(p) => p,
                Action::ToController => self.route_port(at, dst).ok_or(err)?,
                Action::Drop | Action::Flood => return Err(err),
            };
            if sw.is_port_blocked(port) {
                return Err(err);
            }
            match sw.ports.get(&port) {
                Some(Neighbor::Host(h)) if *h == dst => return Ok(path),
                Some(Neighbor::Switch { id, port: remote }) => {
                    at = *id;
                    fields.in_port = *remote;
                }
                _ => return Err(err),
            }
        }
        Err(err)
    }
}
