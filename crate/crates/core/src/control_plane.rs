//! Controller cluster: versions rules on the control chain, pushes them to
//! switches, and isolates switches that fail verification.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data_plane::{Action, Fabric, FlowRule, Match, RuleKey, RuleSet, SwitchId};
use crate::ledger::{Block, Chain, LedgerError, Timestamp};
use crate::time::SimTime;

/// Header timestamps are this base plus whole simulated seconds.
pub const EPOCH_BASE: Timestamp = 1_700_000_000;
/// Priority of the drop rules synthesized around an isolated switch.
pub const ISOLATION_PRIORITY: u16 = u16::MAX;

pub fn ledger_timestamp(now: SimTime) -> Timestamp {
    EPOCH_BASE.saturating_add(now.whole_secs().min(u32::MAX as u64) as u32)
}

/// Work units charged per handled message; a CPU-utilization proxy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkCosts {
    pub packet_in: u64,
    pub block_mined: u64,
    pub verification: u64,
}

impl Default for WorkCosts {
    fn default() -> Self {
        Self {
            packet_in: 1,
            block_mined: 5,
            verification: 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Controller {
    pub id: u32,
    pub chain_replica: Chain,
    pub connected_switches: BTreeSet<SwitchId>,
    pub work_units: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRequest {
    pub principal: String,
    pub signature_token: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessDecision {
    Granted,
    Denied,
}

/// Static principal list with shared-secret tokens.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Registry(pub BTreeMap<String, String>);

impl Registry {
    pub fn with(mut self, principal: &str, token: &str) -> Self {
        self.0.insert(principal.to_string(), token.to_string());
        self
    }
}

/// Pure: the same request and registry always give the same decision.
pub fn grant_access(request: &AccessRequest, registry: &Registry) -> AccessDecision {
    match registry.0.get(&request.principal) {
        Some(token) if *token == request.signature_token => AccessDecision::Granted,
        _ => AccessDecision::Denied,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AccessLogEntry {
    pub time: f64,
    pub principal: String,
    pub decision: AccessDecision,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IsolationAction {
    Isolate,
    Reinstate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IsolationEvent {
    pub time: f64,
    pub switch: SwitchId,
    pub action: IsolationAction,
}

#[derive(Debug, thiserror::Error)]
pub enum ControlError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("switch {0} is already isolated")]
    AlreadyIsolated(SwitchId),
    #[error("switch {0} is not isolated")]
    NotIsolated(SwitchId),
    #[error("switch {0} is not registered")]
    UnknownSwitch(SwitchId),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub controllers: u32,
    pub difficulty: u32,
    pub verification_period_s: f64,
    pub broadcast_hop_delay_s: f64,
    pub costs: WorkCosts,
    pub registry: Registry,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            controllers: 5,
            difficulty: crate::ledger::DEFAULT_DIFFICULTY,
            verification_period_s: 5.0,
            broadcast_hop_delay_s: 0.002,
            costs: WorkCosts::default(),
            registry: Registry::default().with("admin", "distb-admin"),
        }
    }
}

/// A block plus the simulated time at which its broadcast has reached
/// every controller and switch.
#[derive(Clone, Debug)]
pub struct Broadcast {
    pub block: Block,
    pub completes_at: SimTime,
}

#[derive(Clone, Debug)]
struct IsolationRecord {
    synthesized: Vec<RuleKey>,
}

#[derive(Clone, Debug)]
pub struct ControllerCluster {
    pub controllers: Vec<Controller>,
    control_chain: Chain,
    data_chain: Chain,
    pub verification_period: SimTime,
    pub hop_delay: SimTime,
    pub costs: WorkCosts,
    pub registry: Registry,
    isolated: BTreeMap<SwitchId, IsolationRecord>,
    isolation_orders: usize,
    access_log: Vec<AccessLogEntry>,
    isolation_log: Vec<IsolationEvent>,
}

impl ControllerCluster {
    /// Mines both genesis blocks, hands every controller a replica and
    /// installs `initial` on the fabric. Switches are assigned to
    /// controllers round-robin.
    pub fn new(config: &ClusterConfig, fabric: &mut Fabric, initial: RuleSet) -> Result<Self, ControlError> {
        assert!(config.controllers >= 1, "cluster needs at least one controller");
        assert!(config.verification_period_s > 0.0, "verification period must be positive");
        let ts = ledger_timestamp(SimTime::ZERO);
        let control_chain = Chain::control(initial.clone(), config.difficulty, ts)?;
        let data_chain = Chain::data(config.difficulty, ts)?;
        let n = config.controllers;
        let mut controllers: Vec<Controller> = (0..n)
            .map(|id| Controller {
                id,
                chain_replica: control_chain.clone(),
                connected_switches: BTreeSet::new(),
                work_units: 0,
            })
            .collect();
        for (i, s) in fabric.switch_ids().enumerate() {
            controllers[i % n as usize].connected_switches.insert(s);
        }
        fabric.install(&initial);
        Ok(Self {
            controllers,
            control_chain,
            data_chain,
            verification_period: SimTime::from_secs_f64(config.verification_period_s),
            hop_delay: SimTime::from_secs_f64(config.broadcast_hop_delay_s),
            costs: config.costs,
            registry: config.registry.clone(),
            isolated: BTreeMap::new(),
            isolation_orders: 0,
            access_log: Vec::new(),
            isolation_log: Vec::new(),
        })
    }

    pub fn control_chain(&self) -> &Chain {
        &self.control_chain
    }

    pub fn data_chain(&self) -> &Chain {
        &self.data_chain
    }

    /// Rule set in force at the control-chain head.
    pub fn effective_rules(&self) -> &RuleSet {
        self.control_chain
            .effective_rules()
            .expect("control genesis carries rules")
    }

    pub fn is_isolated(&self, s: SwitchId) -> bool {
        self.isolated.contains_key(&s)
    }

    pub fn isolated_switches(&self) -> impl Iterator<Item = SwitchId> + '_ {
        self.isolated.keys().copied()
    }

    pub fn isolation_order_count(&self) -> usize {
        self.isolation_orders
    }

    pub fn access_log(&self) -> &[AccessLogEntry] {
        &self.access_log
    }

    pub fn isolation_log(&self) -> &[IsolationEvent] {
        &self.isolation_log
    }

    pub fn total_work_units(&self) -> u64 {
        self.controllers.iter().map(|c| c.work_units).sum()
    }

    /// Controller that owns switch `s`.
    pub fn owner_of(&self, s: SwitchId) -> usize {
        self.controllers
            .iter()
            .position(|c| c.connected_switches.contains(&s))
            .unwrap_or(0)
    }

    pub fn charge_packet_in(&mut self, s: SwitchId) {
        let i = self.owner_of(s);
        self.controllers[i].work_units += self.costs.packet_in;
    }

    pub(crate) fn charge_verification(&mut self, s: SwitchId) {
        let i = self.owner_of(s);
        self.controllers[i].work_units += self.costs.verification;
    }

    fn charge_mining(&mut self, block_index: u64) {
        let i = (block_index % self.controllers.len() as u64) as usize;
        self.controllers[i].work_units += self.costs.block_mined;
    }

    /// Checks and logs an access request against the cluster registry.
    pub fn authorize(&mut self, request: &AccessRequest, now: SimTime) -> AccessDecision {
        let decision = grant_access(request, &self.registry);
        self.access_log.push(AccessLogEntry {
            time: now.as_secs_f64(),
            principal: request.principal.clone(),
            decision,
        });
        decision
    }

    /// Every replica agrees on the head block hash.
    pub fn controllers_consistent(&self) -> bool {
        let mut heads = self.controllers.iter().map(|c| c.chain_replica.head().block_hash);
        let first = heads.next();
        heads.all(|h| Some(h) == first)
    }

    fn broadcast(&mut self, fabric: &mut Fabric, block: Block, now: SimTime) -> Result<Broadcast, ControlError> {
        self.charge_mining(block.index);
        for c in &mut self.controllers {
            c.chain_replica
                .push_validated(block.clone())
                .map_err(LedgerError::from)?;
        }
        let rules = self.effective_rules().clone();
        fabric.install(&rules);
        // miner -> peer controllers -> switches
        let hops = if self.controllers.len() > 1 { 2 } else { 1 };
        Ok(Broadcast {
            block,
            completes_at: now + SimTime::from_nanos(self.hop_delay.as_nanos() * hops),
        })
    }

    /// Keeps the drop rules of currently isolated switches in force.
    fn with_isolation_rules(&self, mut rules: RuleSet, fabric: &Fabric) -> RuleSet {
        for target in self.isolated.keys() {
            for rule in isolation_rules(fabric, *target) {
                rules.upsert(rule);
            }
        }
        rules
    }

    /// Versions `rules` on the control chain and pushes them to every
    /// replica and every non-isolated switch.
    pub fn submit_rule_update(
        &mut self,
        fabric: &mut Fabric,
        rules: RuleSet,
        now: SimTime,
    ) -> Result<Broadcast, ControlError> {
        let rules = self.with_isolation_rules(rules, fabric);
        let block = self
            .control_chain
            .append_rules(rules, ledger_timestamp(now))?
            .clone();
        self.broadcast(fabric, block, now)
    }

    /// Drops traffic on every peer port facing `target`, records the order
    /// on-chain and cuts the target's links.
    pub fn isolate_switch(
        &mut self,
        fabric: &mut Fabric,
        target: SwitchId,
        now: SimTime,
    ) -> Result<Broadcast, ControlError> {
        if fabric.switch(target).is_none() {
            return Err(ControlError::UnknownSwitch(target));
        }
        if self.isolated.contains_key(&target) {
            return Err(ControlError::AlreadyIsolated(target));
        }
        let mut new_rules = self.effective_rules().clone();
        let mut synthesized = Vec::new();
        for rule in isolation_rules(fabric, target) {
            let key = rule.key();
            if new_rules.insert(rule).is_ok() {
                synthesized.push(key);
            }
        }
        let block = self
            .control_chain
            .append_isolation(target, new_rules, ledger_timestamp(now))?
            .clone();
        self.isolated.insert(target, IsolationRecord { synthesized });
        self.isolation_orders += 1;
        fabric.set_isolated(target, true);
        self.isolation_log.push(IsolationEvent {
            time: now.as_secs_f64(),
            switch: target,
            action: IsolationAction::Isolate,
        });
        self.broadcast(fabric, block, now)
    }

    /// Removes the isolation drop rules with a new rule version and
    /// reinstalls the switch's legitimate table.
    pub fn reinstate_switch(
        &mut self,
        fabric: &mut Fabric,
        target: SwitchId,
        now: SimTime,
    ) -> Result<Broadcast, ControlError> {
        let Some(record) = self.isolated.get(&target) else {
            return Err(ControlError::NotIsolated(target));
        };
        let mut rules = self.effective_rules().clone();
        for key in &record.synthesized {
            rules.remove(key);
        }
        let block = self
            .control_chain
            .append_rules(rules, ledger_timestamp(now))?
            .clone();
        self.isolated.remove(&target);
        fabric.set_isolated(target, false);
        if let Some(sw) = fabric.switch_mut(target) {
            sw.compromised = false;
        }
        self.isolation_log.push(IsolationEvent {
            time: now.as_secs_f64(),
            switch: target,
            action: IsolationAction::Reinstate,
        });
        self.broadcast(fabric, block, now)
    }

    pub(crate) fn data_chain_mut(&mut self) -> &mut Chain {
        &mut self.data_chain
    }

    pub(crate) fn note_data_block(&mut self, index: u64) {
        self.charge_mining(index);
    }

    #[doc(hidden)]
    pub fn replica_mut(&mut self, i: usize) -> &mut Chain {
        &mut self.controllers[i].chain_replica
    }
}

/// Priority-max drops on each peer port that faces `target`.
pub fn isolation_rules(fabric: &Fabric, target: SwitchId) -> Vec<FlowRule> {
    fabric
        .facing_ports(target)
        .into_iter()
        .map(|(peer, port)| {
            FlowRule::new(
                peer,
                ISOLATION_PRIORITY,
                Match {
                    in_port: Some(port),
                    ..Match::any()
                },
                Action::Drop,
            )
        })
        .collect()
}

pub fn write_access_log<W: Write>(entries: &[AccessLogEntry], w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    if entries.is_empty() {
        wtr.write_record(["time", "principal", "decision"])?;
    }
    for e in entries {
        wtr.serialize(e)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_isolation_log<W: Write>(entries: &[IsolationEvent], w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    if entries.is_empty() {
        wtr.write_record(["time", "switch", "action"])?;
    }
    for e in entries {
        wtr.serialize(e)?;
    }
    wtr.flush()?;
    Ok(())
}
