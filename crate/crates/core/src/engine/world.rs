//! The simulated world and its event loop.
//!
//! Links are FIFO servers: a packet's departure time is fixed when it is
//! admitted, so each hop costs one event. Switch processing delay is folded
//! into the arrival event at the next switch.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::net::Ipv4Addr;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{ChProtocol, Mode, ScenarioConfig};
use super::scheduler::Scheduler;
use super::EngineError;
use crate::control_plane::{write_access_log, write_isolation_log, ClusterConfig, ControllerCluster};
use crate::data_plane::{
    run_verification_round, Action, Fabric, FlowRule, HostId, HostKind, Match, Neighbor, PacketFields, PortId,
    RuleSet, Switch, SwitchId,
};
use crate::iot::{
    baseline_round, default_k, partition_clusters, place_nodes, random_waypoint_step, select_cluster_heads,
    transmit_round, Area, BaseStation, Cluster, EnergyLedger, NodeId, Point, RoundParams, SensorNode,
    WaypointState,
};
use crate::ledger::write_chain;
use crate::metrics::{self, EnergyLedgerTotals, MetricsReport};
use crate::rng::RngRoot;
use crate::time::SimTime;
use crate::traffic::{random_mutation, tamper_switch, write_trace, AttackSchedule, Packet, PacketKind};

/// Priority of controller-installed per-source drop rules.
pub const MITIGATION_PRIORITY: u16 = 60_000;
/// Priority of reactively installed microflow entries.
pub const REACTIVE_PRIORITY: u16 = 1;
pub const MOBILITY_STEP_S: f64 = 1.0;
const PROTO_UDP: u8 = 17;
const PROTO_TCP: u8 = 6;
const TAMPER_ATTEMPTS: usize = 16;

/// Address of an IoT node as seen by the fabric once a gateway relays it.
pub fn iot_addr(node: NodeId) -> Ipv4Addr {
    Ipv4Addr::new(10, 1, (node >> 8) as u8, (node & 0xFF) as u8)
}

/// Each bot runs the shared schedule shifted by a seeded phase of at most
/// one inter-packet gap at this rate.
fn first_positive_rate(curve: &[(f64, f64)]) -> f64 {
    curve.iter().map(|p| p.1).find(|r| *r > 0.0).unwrap_or(0.0)
}

/// FIFO single server with a bounded number of customers in system.
#[derive(Clone, Debug, Default)]
struct Fifo {
    busy_until: SimTime,
    departures: VecDeque<SimTime>,
}

impl Fifo {
    /// Admits a job arriving at `at` (non-decreasing across calls) and
    /// returns its departure time, or `None` when full.
    fn admit(&mut self, at: SimTime, service: SimTime, capacity: usize) -> Option<SimTime> {
        while self.departures.front().is_some_and(|d| *d <= at) {
            self.departures.pop_front();
        }
        if self.departures.len() >= capacity {
            return None;
        }
        let done = at.max(self.busy_until) + service;
        self.busy_until = done;
        self.departures.push_back(done);
        Some(done)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum LinkEnd {
    Switch(SwitchId, PortId),
    Host(HostId),
}

#[derive(Clone, Copy, Debug)]
enum Flow {
    Plain,
    RtrRequest,
    RtrResponse { issued: SimTime },
    File { idx: usize },
}

#[derive(Clone, Debug)]
struct InFlight {
    fields: PacketFields,
    kind: PacketKind,
    size: u32,
    trace: Option<usize>,
    flow: Flow,
}

#[derive(Clone, Copy, Debug)]
enum Punt {
    TableMiss,
    MeterExcess,
}

#[derive(Debug)]
enum Event {
    Inject { pkt: u32, host: HostId },
    Arrive { pkt: u32, switch: SwitchId, in_port: PortId },
    Deliver { pkt: u32 },
    ControllerDone { pkt: u32, switch: SwitchId, in_port: PortId, cause: Punt },
    PacketOut { pkt: u32, switch: SwitchId, port: PortId, rule: Option<Box<FlowRule>> },
    IotRound { cluster: usize },
    Mobility,
    Verify,
    Tamper { idx: usize },
    Rtr { gateway: usize },
    BotEmit { bot: usize },
    FileStart { idx: usize },
    Sample,
}

#[derive(Clone, Copy, Debug)]
enum DropReason {
    Queue,
    Table,
    Isolated,
    Controller,
    Meter,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PacketCounts {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
}

impl PacketCounts {
    pub fn in_flight(&self) -> u64 {
        self.sent - self.delivered - self.dropped
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub events: u64,
    pub cbr: PacketCounts,
    pub rtr: PacketCounts,
    pub file: PacketCounts,
    pub attack: PacketCounts,
    pub drops_queue: u64,
    pub drops_table: u64,
    pub drops_isolated: u64,
    pub drops_controller: u64,
    pub drops_meter: u64,
    pub packet_ins: u64,
    pub mitigation_rules: u64,
    pub verification_rounds: u64,
}

/// One cluster's data round.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundRecord {
    pub time: f64,
    pub cluster: u32,
    pub head: Option<NodeId>,
    /// Radio debits during the round, including failed ones.
    pub energy_j: f64,
    pub delay_s: Option<f64>,
    pub delivered: bool,
    pub payloads: u32,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TamperRecord {
    pub time: f64,
    pub switch: SwitchId,
    pub applied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileRecord {
    pub bytes: u64,
    pub started: f64,
    pub chunks: u64,
    pub delivered: u64,
    pub response_s: Option<f64>,
}

pub struct World {
    pub config: ScenarioConfig,
    pub fabric: Fabric,
    pub cluster: ControllerCluster,
    pub gateways: Vec<HostId>,
    pub cloud: HostId,
    pub bots: Vec<HostId>,
    pub gateway_positions: Vec<Point>,
    pub nodes: Vec<SensorNode>,
    pub clusters: Vec<Cluster>,
    pub energy: EnergyLedger,
    pub protocol: ChProtocol,
    pub rounds: Vec<RoundRecord>,
    pub tampers: Vec<TamperRecord>,
    pub files: Vec<FileRecord>,
    pub rtt_samples: Vec<f64>,
    pub stats: RunStats,
    area: Area,
    params: RoundParams,
    waypoints: Vec<WaypointState>,
    sched: Scheduler<Event>,
    links: BTreeMap<LinkEnd, Fifo>,
    controller_queues: Vec<Fifo>,
    slab: Vec<Option<InFlight>>,
    free: Vec<u32>,
    trace: Vec<Packet>,
    next_packet_id: u64,
    meter: BTreeMap<(SwitchId, Ipv4Addr), (u64, u32)>,
    mitigated: BTreeSet<(SwitchId, Ipv4Addr)>,
    exempt: BTreeSet<Ipv4Addr>,
    bot_times: Vec<SimTime>,
    bot_offsets: Vec<SimTime>,
    bot_cursors: Vec<usize>,
    attack_size: u32,
    attack_target: Option<HostId>,
    file_ends: Vec<(HostId, HostId)>,
    file_last: Vec<SimTime>,
    work_samples: Vec<(f64, u64)>,
    rng_sizes: ChaCha8Rng,
    rng_baseline: ChaCha8Rng,
    rng_mobility: ChaCha8Rng,
    rng_tamper: ChaCha8Rng,
    horizon: SimTime,
}

/// A finished run.
pub struct Simulation {
    pub report: MetricsReport,
    pub world: World,
}

impl World {
    /// Assembles topology, controllers and IoT field, and schedules the
    /// initial events. Nothing runs yet.
    pub fn build(config: ScenarioConfig) -> Result<World, EngineError> {
        config.validate()?;
        let root = RngRoot::new(config.seed);
        let topo = config.topology.clone();

        let mut fabric = Fabric::default();
        for i in 1..=topo.switches {
            fabric.switches.insert(SwitchId(i), Switch::new(SwitchId(i)));
        }
        for (a, b) in topo.link_list() {
            fabric.connect(SwitchId(a), SwitchId(b));
        }
        let gateways: Vec<HostId> = topo
            .gateways
            .iter()
            .enumerate()
            .map(|(i, s)| fabric.add_host(HostKind::Gateway, format!("gw{}", i + 1), SwitchId(*s)))
            .collect();
        let cloud = fabric.add_host(HostKind::Cloud, "cloud", SwitchId(topo.cloud));
        let bots: Vec<HostId> = match &config.attack {
            Some(a) => (1..=a.bots)
                .map(|i| fabric.add_host(HostKind::Bot, format!("bot{i}"), SwitchId(topo.bots)))
                .collect(),
            None => Vec::new(),
        };

        let initial = match config.mode {
            Mode::Distb => fabric.routing_rules(),
            Mode::OpenflowOnly => RuleSet::new(),
        };
        let cc = ClusterConfig {
            controllers: config.controllers.count,
            difficulty: config.difficulty,
            verification_period_s: config.verification_period_s,
            broadcast_hop_delay_s: config.controllers.hop_delay_s,
            costs: config.controllers.costs,
            registry: config.controllers.registry.clone(),
        };
        let cluster = ControllerCluster::new(&cc, &mut fabric, initial)?;
        if config.mode == Mode::OpenflowOnly {
            let idle = SimTime::from_secs_f64(config.network.idle_timeout_s);
            for sw in fabric.switches.values_mut() {
                sw.miss_action = Action::ToController;
                sw.set_idle_timeout(Some(idle));
            }
        }

        let mut links = BTreeMap::new();
        for sw in fabric.switches.values() {
            for p in sw.ports.keys() {
                links.insert(LinkEnd::Switch(sw.id, *p), Fifo::default());
            }
        }
        for h in fabric.hosts.keys() {
            links.insert(LinkEnd::Host(*h), Fifo::default());
        }

        let area = Area::square(config.area_m);
        let (elo, ehi) = config.energy_range_j;
        let nodes = place_nodes(config.node_count, area, elo..=ehi, &mut root.stream("iot.place"));
        let k = config.iot.clusters.unwrap_or_else(|| default_k(nodes.len()));
        let kseed: u64 = root.stream("iot.kmeans").random();
        let clusters = partition_clusters(&nodes, k, kseed)?;
        let mut rng_mobility = root.stream("iot.mobility");
        let waypoints = if config.mobility {
            (0..nodes.len()).map(|_| WaypointState::new(&area, &mut rng_mobility)).collect()
        } else {
            Vec::new()
        };
        let g = gateways.len() as f64;
        let gateway_positions = (0..gateways.len())
            .map(|i| Point::new(config.area_m * (2.0 * i as f64 + 1.0) / (2.0 * g), config.area_m / 2.0))
            .collect();
        let protocol = match (config.iot.ch_protocol, config.mode) {
            (ChProtocol::Auto, Mode::Distb) => ChProtocol::Alg1,
            (ChProtocol::Auto, Mode::OpenflowOnly) => ChProtocol::Baseline,
            (p, _) => p,
        };
        let params = RoundParams {
            data_rate_bps: config.data_rate_bps,
            request_bits: config.iot.request_bits,
            gate: config.gate_semantics,
            backoff_slot_s: config.iot.backoff_slot_s,
            backoff_max_slots: config.iot.backoff_max_slots,
            cca_s: config.iot.cca_s,
            ..RoundParams::default()
        };

        let exempt = fabric
            .hosts
            .values()
            .filter(|h| matches!(h.kind, HostKind::Gateway | HostKind::Cloud | HostKind::Server))
            .map(|h| h.addr())
            .collect();
        let horizon = SimTime::from_secs_f64(config.duration_s);
        let (bot_times, attack_size, attack_target) = match &config.attack {
            Some(a) => {
                let sched = AttackSchedule {
                    start_s: a.start_s,
                    rate_curve: a.rate_curve.clone(),
                    targets: Vec::new(),
                };
                let target = fabric
                    .hosts
                    .values()
                    .find(|h| h.name == a.target)
                    .map(|h| h.id)
                    .expect("validated target");
                (
                    sched.emission_times(horizon),
                    a.packet_size.unwrap_or(config.packet_size_range.1),
                    Some(target),
                )
            }
            None => (Vec::new(), 0, None),
        };
        let host_named = |name: &str| fabric.hosts.values().find(|h| h.name == name).map(|h| h.id);
        let file_ends = config
            .file_transfer
            .iter()
            .map(|f| (host_named(&f.src).expect("validated"), host_named(&f.dst).expect("validated")))
            .collect();

        let rate = config.attack.as_ref().map_or(0.0, |a| first_positive_rate(&a.rate_curve));
        let gap = if rate > 0.0 { 1.0 / rate } else { 0.0 };
        let bot_count = bots.len();
        let bot_offsets = (0..bot_count as u64)
            .map(|b| SimTime::from_secs_f64(root.indexed_stream("attack.phase", b).random_range(0.0..=gap)))
            .collect();

        let mut w = World {
            controller_queues: vec![Fifo::default(); config.controllers.count as usize],
            fabric,
            cluster,
            gateways,
            cloud,
            bots,
            gateway_positions,
            nodes,
            clusters,
            energy: EnergyLedger::default(),
            protocol,
            rounds: Vec::new(),
            tampers: Vec::new(),
            files: Vec::new(),
            rtt_samples: Vec::new(),
            stats: RunStats::default(),
            area,
            params,
            waypoints,
            sched: Scheduler::new(),
            links,
            slab: Vec::new(),
            free: Vec::new(),
            trace: Vec::new(),
            next_packet_id: 0,
            meter: BTreeMap::new(),
            mitigated: BTreeSet::new(),
            exempt,
            bot_offsets,
            bot_cursors: vec![0; bot_count],
            bot_times,
            attack_size,
            attack_target,
            file_ends,
            file_last: Vec::new(),
            work_samples: Vec::new(),
            rng_sizes: root.stream("iot.sizes"),
            rng_baseline: root.stream("iot.baseline"),
            rng_mobility,
            rng_tamper: root.stream("tamper"),
            horizon,
            config,
        };
        w.schedule_initial();
        Ok(w)
    }

    fn schedule_initial(&mut self) {
        let c = &self.config;
        let interval = c.report_interval_s;
        let k = self.clusters.len();
        let mut initial = Vec::new();
        for i in 0..k {
            initial.push((interval * i as f64 / k as f64, Event::IotRound { cluster: i }));
        }
        if c.mobility {
            initial.push((MOBILITY_STEP_S, Event::Mobility));
        }
        if c.mode == Mode::Distb {
            initial.push((c.verification_period_s, Event::Verify));
        }
        for (idx, t) in c.tamper.iter().enumerate() {
            initial.push((t.at_s, Event::Tamper { idx }));
        }
        let g = self.gateways.len();
        for gateway in 0..g {
            let at = c.network.rtr_interval_s * (gateway as f64 + 0.5) / g as f64;
            initial.push((at, Event::Rtr { gateway }));
        }
        for (idx, f) in c.file_transfer.iter().enumerate() {
            initial.push((f.at_s, Event::FileStart { idx }));
        }
        initial.push((c.metrics.bandwidth_window_s, Event::Sample));
        for (t, e) in initial {
            self.sched.schedule(SimTime::from_secs_f64(t), e);
        }
        if let Some(t) = self.bot_times.first().copied() {
            for bot in 0..self.bots.len() {
                self.sched.schedule(t + self.bot_offsets[bot], Event::BotEmit { bot });
            }
        }
    }

    pub fn horizon(&self) -> SimTime {
        self.horizon
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    /// Non-attack packets in creation order.
    pub fn trace(&self) -> &[Packet] {
        &self.trace
    }

    /// Runs every event due at or before the horizon and computes the report.
    pub fn run(mut self) -> Result<Simulation, EngineError> {
        while let Some((now, ev)) = self.sched.pop_until(self.horizon) {
            self.handle(now, ev)?;
        }
        self.stats.events = self.sched.executed();
        let report = self.report()?;
        Ok(Simulation { report, world: self })
    }

    fn handle(&mut self, now: SimTime, ev: Event) -> Result<(), EngineError> {
        match ev {
            Event::Inject { pkt, host } => self.inject(now, pkt, host),
            Event::Arrive { pkt, switch, in_port } => self.arrive(now, pkt, switch, in_port),
            Event::Deliver { pkt } => self.deliver(now, pkt),
            Event::ControllerDone {
                pkt,
                switch,
                in_port,
                cause,
            } => self.controller_done(now, pkt, switch, in_port, cause)?,
            Event::PacketOut { pkt, switch, port, rule } => {
                let sw = self.fabric.switch_mut(switch).expect("known switch");
                if let Some(rule) = rule {
                    sw.install_reactive(*rule, now);
                }
                if sw.isolated {
                    self.drop_packet(pkt, DropReason::Isolated);
                } else {
                    self.transmit(now, pkt, switch, port);
                }
            }
            Event::IotRound { cluster } => self.iot_round(now, cluster),
            Event::Mobility => {
                for (n, wp) in self.nodes.iter_mut().zip(self.waypoints.iter_mut()) {
                    n.position = random_waypoint_step(n.position, wp, MOBILITY_STEP_S, &self.area, &mut self.rng_mobility);
                }
                self.sched.schedule(now + SimTime::from_secs_f64(MOBILITY_STEP_S), Event::Mobility);
            }
            Event::Verify => {
                run_verification_round(&mut self.cluster, &mut self.fabric, now)?;
                self.stats.verification_rounds += 1;
                self.sched.schedule(now + self.cluster.verification_period, Event::Verify);
            }
            Event::Tamper { idx } => self.tamper(now, idx),
            Event::Rtr { gateway } => {
                let gw = self.gateways[gateway];
                let pkt = self.new_packet(
                    PacketKind::RtrControl,
                    gw.addr(),
                    self.cloud.addr(),
                    self.config.network.rtr_size_bytes,
                    PROTO_UDP,
                    Flow::RtrRequest,
                    now,
                );
                self.inject(now, pkt, gw);
                let next = now + SimTime::from_secs_f64(self.config.network.rtr_interval_s);
                self.sched.schedule(next, Event::Rtr { gateway });
            }
            Event::BotEmit { bot } => {
                let target = self.attack_target.expect("attack configured");
                let host = self.bots[bot];
                let pkt = self.new_packet(
                    PacketKind::AttackFlood,
                    host.addr(),
                    target.addr(),
                    self.attack_size,
                    PROTO_UDP,
                    Flow::Plain,
                    now,
                );
                self.inject(now, pkt, host);
                self.bot_cursors[bot] += 1;
                if let Some(t) = self.bot_times.get(self.bot_cursors[bot]).copied() {
                    let at = t + self.bot_offsets[bot];
                    if at <= self.horizon {
                        self.sched.schedule(at, Event::BotEmit { bot });
                    }
                }
            }
            Event::FileStart { idx } => self.file_start(now, idx),
            Event::Sample => {
                self.work_samples.push((now.as_secs_f64(), self.cluster.total_work_units()));
                let next = now + SimTime::from_secs_f64(self.config.metrics.bandwidth_window_s);
                self.sched.schedule(next, Event::Sample);
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn new_packet(
        &mut self,
        kind: PacketKind,
        src: Ipv4Addr,
        dst: Ipv4Addr,
        size: u32,
        proto: u8,
        flow: Flow,
        sent_at: SimTime,
    ) -> u32 {
        let id = self.next_packet_id;
        self.next_packet_id += 1;
        let trace = (kind != PacketKind::AttackFlood).then(|| {
            self.trace.push(Packet {
                id,
                kind,
                src,
                dst,
                size,
                sent_at,
                delivered_at: None,
            });
            self.trace.len() - 1
        });
        self.counts_mut(kind).sent += 1;
        let entry = InFlight {
            fields: PacketFields {
                in_port: 0,
                src,
                dst,
                proto,
            },
            kind,
            size,
            trace,
            flow,
        };
        match self.free.pop() {
            Some(slot) => {
                self.slab[slot as usize] = Some(entry);
                slot
            }
            None => {
                self.slab.push(Some(entry));
                (self.slab.len() - 1) as u32
            }
        }
    }

    fn take(&mut self, pkt: u32) -> InFlight {
        self.free.push(pkt);
        self.slab[pkt as usize].take().expect("live packet")
    }

    fn packet(&self, pkt: u32) -> &InFlight {
        self.slab[pkt as usize].as_ref().expect("live packet")
    }

    fn counts_mut(&mut self, kind: PacketKind) -> &mut PacketCounts {
        match kind {
            PacketKind::CbrData => &mut self.stats.cbr,
            PacketKind::RtrControl => &mut self.stats.rtr,
            PacketKind::FileChunk => &mut self.stats.file,
            PacketKind::AttackFlood => &mut self.stats.attack,
        }
    }

    fn drop_packet(&mut self, pkt: u32, reason: DropReason) {
        let p = self.take(pkt);
        self.counts_mut(p.kind).dropped += 1;
        let s = &mut self.stats;
        match reason {
            DropReason::Queue => s.drops_queue += 1,
            DropReason::Table => s.drops_table += 1,
            DropReason::Isolated => s.drops_isolated += 1,
            DropReason::Controller => s.drops_controller += 1,
            DropReason::Meter => s.drops_meter += 1,
        }
    }

    fn serialization(&self, pkt: u32) -> SimTime {
        SimTime::transmission(self.packet(pkt).size as u64 * 8, self.config.data_rate_bps)
    }

    fn switch_delay(&self) -> SimTime {
        SimTime::from_secs_f64(self.config.network.switch_delay_s)
    }

    fn inject(&mut self, now: SimTime, pkt: u32, host: HostId) {
        let ser = self.serialization(pkt);
        let cap = self.config.network.queue_capacity;
        let h = &self.fabric.hosts[&host];
        let (switch, in_port) = (h.switch, h.port);
        let link = self.links.get_mut(&LinkEnd::Host(host)).expect("host uplink");
        match link.admit(now, ser, cap) {
            Some(dep) => {
                let at = dep + self.switch_delay();
                self.sched.schedule(at, Event::Arrive { pkt, switch, in_port });
            }
            None => self.drop_packet(pkt, DropReason::Queue),
        }
    }

    fn transmit(&mut self, now: SimTime, pkt: u32, switch: SwitchId, port: PortId) {
        let ser = self.serialization(pkt);
        let cap = self.config.network.queue_capacity;
        let Some(link) = self.links.get_mut(&LinkEnd::Switch(switch, port)) else {
            self.drop_packet(pkt, DropReason::Table);
            return;
        };
        let Some(dep) = link.admit(now, ser, cap) else {
            self.drop_packet(pkt, DropReason::Queue);
            return;
        };
        match self.fabric.switches[&switch].ports[&port] {
            Neighbor::Switch { id, port: remote } => {
                let at = dep + self.switch_delay();
                self.sched.schedule(
                    at,
                    Event::Arrive {
                        pkt,
                        switch: id,
                        in_port: remote,
                    },
                );
            }
            Neighbor::Host(_) => self.sched.schedule(dep, Event::Deliver { pkt }),
        }
    }

    fn metered(&mut self, now: SimTime, switch: SwitchId, in_port: PortId, src: Ipv4Addr) -> bool {
        if self.config.mode != Mode::Distb || !self.config.mitigation.is_on() {
            return false;
        }
        let ingress = matches!(self.fabric.switches[&switch].ports.get(&in_port), Some(Neighbor::Host(_)));
        if !ingress || self.exempt.contains(&src) || self.mitigated.contains(&(switch, src)) {
            return false;
        }
        let window = now.whole_secs();
        let e = self.meter.entry((switch, src)).or_insert((window, 0));
        if e.0 != window {
            *e = (window, 0);
        }
        e.1 += 1;
        e.1 as f64 > self.config.network.meter_cap_pps
    }

    fn arrive(&mut self, now: SimTime, pkt: u32, switch: SwitchId, in_port: PortId) {
        if self.fabric.switches[&switch].isolated {
            self.drop_packet(pkt, DropReason::Isolated);
            return;
        }
        let src = {
            let p = self.slab[pkt as usize].as_mut().expect("live packet");
            p.fields.in_port = in_port;
            p.fields.src
        };
        if self.metered(now, switch, in_port, src) {
            self.punt(now, pkt, switch, in_port, Punt::MeterExcess);
            return;
        }
        let fields = self.packet(pkt).fields;
        let action = self
            .fabric
            .switch_mut(switch)
            .expect("known switch")
            .forward_packet_at(&fields, now);
        match action {
            Action::Forward(port) => self.transmit(now, pkt, switch, port),
            Action::ToController => self.punt(now, pkt, switch, in_port, Punt::TableMiss),
            Action::Drop | Action::Flood => self.drop_packet(pkt, DropReason::Table),
        }
    }

    fn punt(&mut self, now: SimTime, pkt: u32, switch: SwitchId, in_port: PortId, cause: Punt) {
        self.stats.packet_ins += 1;
        let net = &self.config.network;
        let arrival = now + SimTime::from_secs_f64(net.control_latency_s);
        let service = SimTime::from_secs_f64(net.controller_service_s);
        let cap = net.controller_queue;
        let owner = self.cluster.owner_of(switch);
        match self.controller_queues[owner].admit(arrival, service, cap) {
            Some(done) => self.sched.schedule(
                done,
                Event::ControllerDone {
                    pkt,
                    switch,
                    in_port,
                    cause,
                },
            ),
            None => self.drop_packet(pkt, DropReason::Controller),
        }
    }

    fn controller_done(
        &mut self,
        now: SimTime,
        pkt: u32,
        switch: SwitchId,
        in_port: PortId,
        cause: Punt,
    ) -> Result<(), EngineError> {
        self.cluster.charge_packet_in(switch);
        let fields = self.packet(pkt).fields;
        match cause {
            Punt::MeterExcess => {
                self.drop_packet(pkt, DropReason::Meter);
                if self.mitigated.insert((switch, fields.src)) {
                    let mut rules = self.cluster.effective_rules().clone();
                    rules.upsert(FlowRule::new(
                        switch,
                        MITIGATION_PRIORITY,
                        Match {
                            src_addr: Some(fields.src),
                            ..Match::any()
                        },
                        Action::Drop,
                    ));
                    self.cluster.submit_rule_update(&mut self.fabric, rules, now)?;
                    self.stats.mitigation_rules += 1;
                }
            }
            Punt::TableMiss => {
                let port = self
                    .fabric
                    .host_by_addr(fields.dst)
                    .map(|h| h.id)
                    .and_then(|dst| self.fabric.route_port(switch, dst));
                let Some(port) = port else {
                    self.drop_packet(pkt, DropReason::Table);
                    return Ok(());
                };
                let rule = (self.config.mode == Mode::OpenflowOnly).then(|| {
                    Box::new(FlowRule::new(
                        switch,
                        REACTIVE_PRIORITY,
                        Match {
                            in_port: Some(in_port),
                            src_addr: Some(fields.src),
                            dst_addr: Some(fields.dst),
                            ..Match::any()
                        },
                        Action::Forward(port),
                    ))
                });
                let at = now + SimTime::from_secs_f64(self.config.network.control_latency_s);
                self.sched.schedule(at, Event::PacketOut { pkt, switch, port, rule });
            }
        }
        Ok(())
    }

    fn deliver(&mut self, now: SimTime, pkt: u32) {
        let p = self.take(pkt);
        self.counts_mut(p.kind).delivered += 1;
        if let Some(i) = p.trace {
            self.trace[i].delivered_at = Some(now);
        }
        match p.flow {
            Flow::Plain => {}
            Flow::RtrRequest => {
                let sent = self.trace[p.trace.expect("traced")].sent_at;
                let resp = self.new_packet(
                    PacketKind::RtrControl,
                    p.fields.dst,
                    p.fields.src,
                    p.size,
                    PROTO_UDP,
                    Flow::RtrResponse { issued: sent },
                    now,
                );
                self.inject(now, resp, self.cloud);
            }
            Flow::RtrResponse { issued } => self.rtt_samples.push((now - issued).as_secs_f64()),
            Flow::File { idx } => {
                let store = SimTime::from_secs_f64(self.config.network.store_latency_s);
                self.file_last[idx] = self.file_last[idx].max(now);
                let f = &mut self.files[idx];
                f.delivered += 1;
                if f.delivered == f.chunks {
                    let done = self.file_last[idx] + store;
                    f.response_s = Some(done.as_secs_f64() - f.started);
                }
            }
        }
    }

    fn iot_round(&mut self, now: SimTime, c: usize) {
        let alive = |w: &World| w.clusters[c].members.iter().any(|m| w.nodes[*m as usize].alive);
        if !alive(self) {
            return;
        }
        self.clusters[c].refresh_centroid(&self.nodes);
        let centroid = self.clusters[c].centroid;
        let gw = (0..self.gateways.len())
            .min_by(|a, b| {
                let da = self.gateway_positions[*a].dist2(centroid);
                let db = self.gateway_positions[*b].dist2(centroid);
                da.total_cmp(&db)
            })
            .expect("at least one gateway");
        let station = BaseStation {
            position: self.gateway_positions[gw],
            energy_budget_j: self.config.iot.beta_j,
        };
        let (lo, hi) = self.config.packet_size_range;
        let size = self.rng_sizes.random_range(lo..=hi);
        let bits = size as u64 * 8;
        let before = self.energy.total_debits_pj();
        let result = match self.protocol {
            ChProtocol::Baseline => baseline_round(
                &mut self.nodes,
                &self.clusters[c],
                &station,
                bits,
                &self.params,
                &mut self.rng_baseline,
                now,
                &mut self.energy,
            ),
            _ => select_cluster_heads(&mut self.nodes, std::slice::from_mut(&mut self.clusters[c]), self.config.iot.band)
                .and_then(|_| {
                    transmit_round(
                        &mut self.nodes,
                        &self.clusters[c],
                        &station,
                        bits,
                        &self.params,
                        now,
                        &mut self.energy,
                    )
                }),
        };
        let energy_j = crate::iot::pj_to_joules(self.energy.total_debits_pj() - before);
        let record = match &result {
            Ok(r) => RoundRecord {
                time: now.as_secs_f64(),
                cluster: self.clusters[c].id,
                head: Some(r.head),
                energy_j,
                delay_s: r.delivered.then_some(r.end_to_end_delay),
                delivered: r.delivered,
                payloads: r.payloads,
                failure: None,
            },
            Err(e) => RoundRecord {
                time: now.as_secs_f64(),
                cluster: self.clusters[c].id,
                head: None,
                energy_j,
                delay_s: None,
                delivered: false,
                payloads: 0,
                failure: Some(e.to_string()),
            },
        };
        self.rounds.push(record);
        if let Ok(r) = result {
            if r.delivered {
                let at = now + SimTime::from_secs_f64(r.end_to_end_delay);
                let host = self.gateways[gw];
                for _ in 0..r.payloads {
                    let pkt = self.new_packet(
                        PacketKind::CbrData,
                        iot_addr(r.head),
                        self.cloud.addr(),
                        size,
                        PROTO_UDP,
                        Flow::Plain,
                        at,
                    );
                    self.sched.schedule(at, Event::Inject { pkt, host });
                }
            }
        }
        if alive(self) {
            let next = now + SimTime::from_secs_f64(self.config.report_interval_s);
            self.sched.schedule(next, Event::IotRound { cluster: c });
        }
    }

    fn tamper(&mut self, now: SimTime, idx: usize) {
        let t = self.config.tamper[idx].clone();
        let id = SwitchId(t.switch);
        let sw = self.fabric.switch_mut(id).expect("validated switch");
        let mut applied = false;
        if !sw.isolated {
            for _ in 0..TAMPER_ATTEMPTS {
                let m = random_mutation(sw, t.mutation, &mut self.rng_tamper);
                if tamper_switch(sw, &m).is_ok() {
                    applied = true;
                    break;
                }
            }
        }
        self.tampers.push(TamperRecord {
            time: now.as_secs_f64(),
            switch: id,
            applied,
        });
    }

    fn file_start(&mut self, now: SimTime, idx: usize) {
        let bytes = self.config.file_transfer[idx].bytes;
        let (src, dst) = self.file_ends[idx];
        let max = self.config.packet_size_range.1 as u64;
        let chunks = bytes.div_ceil(max);
        while self.files.len() <= idx {
            self.files.push(FileRecord {
                bytes: 0,
                started: 0.0,
                chunks: 0,
                delivered: 0,
                response_s: None,
            });
            self.file_last.push(SimTime::ZERO);
        }
        self.files[idx] = FileRecord {
            bytes,
            started: now.as_secs_f64(),
            chunks,
            delivered: 0,
            response_s: None,
        };
        let mut at = now;
        let mut left = bytes;
        while left > 0 {
            let size = left.min(max);
            left -= size;
            let pkt = self.new_packet(
                PacketKind::FileChunk,
                src.addr(),
                dst.addr(),
                size as u32,
                PROTO_TCP,
                Flow::File { idx },
                at,
            );
            self.sched.schedule(at, Event::Inject { pkt, host: src });
            at += SimTime::transmission(size * 8, self.config.data_rate_bps);
        }
    }

    fn report(&self) -> Result<MetricsReport, EngineError> {
        let c = &self.config;
        let m = &c.metrics;
        let duration = c.duration_s;
        let throughput_bps = metrics::throughput(&self.trace, duration)?;
        let overhead_ratio = metrics::comm_overhead(self.stats.rtr.sent, self.stats.cbr.delivered).ok();
        let blocks_stored = (self.cluster.control_chain().len() + self.cluster.data_chain().len()) as u64;
        let energy = metrics::energy_report(
            &EnergyLedgerTotals {
                work_units: self.cluster.total_work_units(),
                iot_debits_pj: self.energy.total_debits_pj(),
                blocks_stored,
            },
            &m.energy,
        );
        let mut prev = 0;
        let per_window: Vec<(f64, u64)> = self
            .work_samples
            .iter()
            .map(|(t, cum)| {
                let units = cum - prev;
                prev = *cum;
                (t - m.bandwidth_window_s, units)
            })
            .collect();
        let tx = (self.cluster.control_chain().len() + self.cluster.data_chain().len() - 2) as u64;
        let gas = metrics::gas_model(tx, &m.gas)?;
        let mut files: Vec<(u64, f64)> = self.files.iter().filter_map(|f| f.response_s.map(|r| (f.bytes, r))).collect();
        files.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));

        let ok_rounds: Vec<&RoundRecord> = self.rounds.iter().filter(|r| r.failure.is_none()).collect();
        let delays: Vec<f64> = self.rounds.iter().filter_map(|r| r.delay_s).collect();
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let s = &self.stats;
        let mut summary = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            summary.insert(k.to_string(), v);
        };
        put("mode", c.mode.as_str().into());
        put("seed", c.seed.to_string());
        put("ch_protocol", format!("{:?}", self.protocol).to_lowercase());
        put("events", s.events.to_string());
        for (name, pc) in [("cbr", s.cbr), ("rtr", s.rtr), ("file", s.file), ("attack", s.attack)] {
            put(&format!("{name}_sent"), pc.sent.to_string());
            put(&format!("{name}_delivered"), pc.delivered.to_string());
            put(&format!("{name}_dropped"), pc.dropped.to_string());
            put(&format!("{name}_in_flight"), pc.in_flight().to_string());
        }
        put("drops_queue", s.drops_queue.to_string());
        put("drops_table", s.drops_table.to_string());
        put("drops_isolated", s.drops_isolated.to_string());
        put("drops_controller", s.drops_controller.to_string());
        put("drops_meter", s.drops_meter.to_string());
        put("packet_ins", s.packet_ins.to_string());
        put("mitigation_rules", s.mitigation_rules.to_string());
        put("verification_rounds", s.verification_rounds.to_string());
        put("isolations", self.cluster.isolation_order_count().to_string());
        put("control_chain_len", self.cluster.control_chain().len().to_string());
        put("data_chain_len", self.cluster.data_chain().len().to_string());
        put("work_units", self.cluster.total_work_units().to_string());
        put("iot_rounds_ok", ok_rounds.len().to_string());
        put("iot_rounds_failed", (self.rounds.len() - ok_rounds.len()).to_string());
        put("iot_dead_nodes", self.nodes.iter().filter(|n| !n.alive).count().to_string());
        put("mean_round_energy_j", mean(&self.rounds.iter().map(|r| r.energy_j).collect::<Vec<_>>()).to_string());
        put("mean_round_delay_s", mean(&delays).to_string());
        put("mean_rtt_s", mean(&self.rtt_samples).to_string());
        if c.mode == Mode::OpenflowOnly {
            put("label", "openflow-only (BCF stand-in)".into());
        }

        Ok(MetricsReport {
            node_count: c.node_count,
            duration_s: duration,
            throughput_bps,
            overhead_ratio,
            bandwidth_series: metrics::bandwidth_series(&self.trace, m.bandwidth_window_s, duration),
            latency_by_size: metrics::latency_by_size(&self.trace, m.latency_bucket_bytes),
            response_times: files,
            energy_by_component: energy,
            cpu_series: metrics::cpu_series(&per_window, m.bandwidth_window_s, m.cpu_capacity_units_per_s),
            gas_total: gas.gas_total,
            tx_processing_times: gas.processing_times,
            summary,
        })
    }
}

/// Extra artifacts written next to the metric CSVs.
pub const RUN_FILES: [&str; 7] = [
    "trace.csv",
    "rounds.csv",
    "iot_energy.csv",
    "access_log.csv",
    "isolation_log.csv",
    "control_chain.bin",
    "data_chain.bin",
];

impl Simulation {
    /// Writes the report plus trace, IoT rounds, logs and both chains.
    pub fn write_outputs(&self, dir: &Path) -> Result<(), EngineError> {
        metrics::emit_report(&self.report, dir)?;
        let w = &self.world;
        let create = |name: &str| fs::File::create(dir.join(name));
        write_trace(&w.trace, create("trace.csv")?)?;
        let mut rounds = csv::Writer::from_writer(create("rounds.csv")?);
        if w.rounds.is_empty() {
            rounds.write_record(["time", "cluster", "head", "energy_j", "delay_s", "delivered", "payloads", "failure"])?;
        }
        for r in &w.rounds {
            rounds.serialize(r)?;
        }
        rounds.flush()?;
        w.energy.write_csv(create("iot_energy.csv")?)?;
        write_access_log(w.cluster.access_log(), create("access_log.csv")?)?;
        write_isolation_log(w.cluster.isolation_log(), create("isolation_log.csv")?)?;
        write_chain(&mut create("control_chain.bin")?, w.cluster.control_chain())?;
        write_chain(&mut create("data_chain.bin")?, w.cluster.data_chain())?;
        Ok(())
    }
}
