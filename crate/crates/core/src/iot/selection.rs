use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BaseStation, Cluster, DebitReason, EnergyLedger, IotError, NodeId, RadioModel, Role, SensorNode};
use crate::time::SimTime;

/// Relative width of the lowest-distance band, δ.
pub const DEFAULT_BAND: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateSemantics {
    /// Send iff β > head energy, exactly as the algorithm states it.
    AsWritten,
    /// Send iff the head can pay for the data transmission.
    BudgetCheck,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoundParams {
    pub radio: RadioModel,
    pub data_rate_bps: f64,
    pub request_bits: u64,
    pub gate: GateSemantics,
    /// CSMA-CA backoff slot used by the baseline MAC.
    pub backoff_slot_s: f64,
    pub backoff_max_slots: u32,
    pub cca_s: f64,
}

impl Default for RoundParams {
    fn default() -> Self {
        Self {
            radio: RadioModel::default(),
            data_rate_bps: 12e6,
            request_bits: 256,
            gate: GateSemantics::AsWritten,
            backoff_slot_s: 320e-6,
            backoff_max_slots: 7,
            cca_s: 128e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundResult {
    pub cluster: u32,
    pub head: NodeId,
    /// Joules spent per node this round.
    pub energy_spent: BTreeMap<NodeId, f64>,
    pub end_to_end_delay: f64,
    pub delivered: bool,
    /// Payloads that reached the head, its own included.
    pub payloads: u32,
    /// Members that died trying to transmit this round.
    pub dead: Vec<NodeId>,
}

impl RoundResult {
    pub fn total_energy_j(&self) -> f64 {
        self.energy_spent.values().sum()
    }
}

pub fn gravity_distance(node: &SensorNode, cluster: &Cluster) -> f64 {
    node.position.dist(cluster.centroid)
}

/// Ascending by energy with the textbook selection sort: find the minimum
/// of the unsorted tail and swap it to the front.
pub fn selection_sort_by_energy(list: &mut [&SensorNode]) {
    let n = list.len();
    for i in 0..n.saturating_sub(1) {
        let mut min = i;
        for j in i + 1..n {
            if list[j].energy_pj < list[min].energy_pj {
                min = j;
            }
        }
        list.swap(i, min);
    }
}

fn pick_head(nodes: &[SensorNode], cluster: &Cluster, band: f64) -> Result<NodeId, IotError> {
    let mut sorted: Vec<&SensorNode> = cluster
        .members
        .iter()
        .map(|m| &nodes[*m as usize])
        .filter(|n| n.alive)
        .collect();
    if sorted.is_empty() {
        return Err(IotError::EmptyCluster(cluster.id));
    }
    selection_sort_by_energy(&mut sorted);
    let dist: Vec<f64> = sorted.iter().map(|n| gravity_distance(n, cluster)).collect();
    let lds = dist.iter().copied().fold(f64::INFINITY, f64::min);
    let limit = lds * (1.0 + band);
    let mut best: Option<(usize, &SensorNode)> = None;
    for (i, n) in sorted.iter().enumerate() {
        if dist[i] > limit {
            continue;
        }
        let better = match best {
            None => true,
            Some((j, b)) => {
                n.energy_pj > b.energy_pj
                    || (n.energy_pj == b.energy_pj
                        && (dist[i] < dist[j] || (dist[i] == dist[j] && n.id < b.id)))
            }
        };
        if better {
            best = Some((i, n));
        }
    }
    Ok(best.expect("the LDS node is always in the band").1.id)
}

/// Elects one head per cluster: the most energetic live member whose
/// gravity distance is within `(1 + band)` of the lowest one. Ties go to
/// the closer node, then the lower id.
pub fn select_cluster_heads(
    nodes: &mut [SensorNode],
    clusters: &mut [Cluster],
    band: f64,
) -> Result<Vec<(u32, NodeId)>, IotError> {
    let mut out = Vec::with_capacity(clusters.len());
    for c in clusters.iter_mut() {
        let head = pick_head(nodes, c, band)?;
        for m in &c.members {
            nodes[*m as usize].role = Role::Member;
        }
        nodes[head as usize].role = Role::ClusterHead;
        c.head = Some(head);
        out.push((c.id, head));
    }
    Ok(out)
}

struct Debits<'a> {
    ledger: &'a mut EnergyLedger,
    now: f64,
    spent: BTreeMap<NodeId, u64>,
}

impl Debits<'_> {
    /// Takes `pj` from the node, or marks it dead and leaves its energy.
    fn pay(&mut self, node: &mut SensorNode, pj: u64, reason: DebitReason) -> bool {
        if !node.alive || node.energy_pj < pj {
            node.alive = false;
            return false;
        }
        node.energy_pj -= pj;
        *self.spent.entry(node.id).or_default() += pj;
        if pj > 0 {
            self.ledger.record(self.now, node.id, pj, reason);
        }
        true
    }
}

enum Mac<'r, R: Rng> {
    Tdma,
    Csma(&'r RoundParams, &'r mut R),
}

impl<R: Rng> Mac<'_, R> {
    fn access_delay(&mut self) -> f64 {
        match self {
            Mac::Tdma => 0.0,
            Mac::Csma(p, rng) => rng.random_range(0..=p.backoff_max_slots) as f64 * p.backoff_slot_s + p.cca_s,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_round<R: Rng>(
    nodes: &mut [SensorNode],
    cluster: &Cluster,
    head: NodeId,
    station: &BaseStation,
    payload_bits: u64,
    params: &RoundParams,
    gate: Option<GateSemantics>,
    mut mac: Mac<'_, R>,
    now: SimTime,
    ledger: &mut EnergyLedger,
) -> Result<RoundResult, IotError> {
    let radio = params.radio;
    let rate = params.data_rate_bps;
    let mut d = Debits {
        ledger,
        now: now.as_secs_f64(),
        spent: BTreeMap::new(),
    };
    if !nodes[head as usize].alive {
        return Err(IotError::DeadNode(head));
    }
    let head_pos = nodes[head as usize].position;
    let mut delay = 0.0;
    let mut payloads = 1u32;
    let mut dead = Vec::new();
    for m in cluster.members.iter().copied().filter(|m| *m != head) {
        let member = &mut nodes[m as usize];
        if !member.alive {
            continue;
        }
        let cost = radio.tx_pj(payload_bits, member.position.dist(head_pos));
        delay += mac.access_delay();
        if !d.pay(member, cost, DebitReason::MemberTx) {
            dead.push(m);
            continue;
        }
        delay += payload_bits as f64 / rate;
        if !d.pay(&mut nodes[head as usize], radio.rx_pj(payload_bits), DebitReason::HeadRx) {
            return Err(IotError::DeadNode(head));
        }
        payloads += 1;
    }
    let to_station = head_pos.dist(station.position);
    delay += mac.access_delay();
    if !d.pay(
        &mut nodes[head as usize],
        radio.tx_pj(params.request_bits, to_station),
        DebitReason::Request,
    ) {
        return Err(IotError::DeadNode(head));
    }
    delay += params.request_bits as f64 / rate;

    let data_bits = payload_bits * payloads as u64;
    let data_cost = radio.tx_pj(data_bits, to_station);
    let h = &nodes[head as usize];
    let send = match gate {
        None => true,
        Some(GateSemantics::AsWritten) => station.energy_budget_j > h.energy_j(),
        Some(GateSemantics::BudgetCheck) => h.energy_pj >= data_cost,
    };
    let mut delivered = false;
    if send {
        delay += mac.access_delay();
        if !d.pay(&mut nodes[head as usize], data_cost, DebitReason::DataTx) {
            return Err(IotError::DeadNode(head));
        }
        delay += data_bits as f64 / rate;
        delivered = true;
    }
    Ok(RoundResult {
        cluster: cluster.id,
        head,
        energy_spent: d
            .spent
            .into_iter()
            .map(|(k, v)| (k, super::pj_to_joules(v)))
            .collect(),
        end_to_end_delay: delay,
        delivered,
        payloads,
        dead,
    })
}

/// One data round under the elected head: members send to the head in
/// their TDMA slots, the head asks the station, then sends the aggregate
/// if the gate allows.
pub fn transmit_round(
    nodes: &mut [SensorNode],
    cluster: &Cluster,
    station: &BaseStation,
    payload_bits: u64,
    params: &RoundParams,
    now: SimTime,
    ledger: &mut EnergyLedger,
) -> Result<RoundResult, IotError> {
    let head = cluster.head.ok_or(IotError::NoHead(cluster.id))?;
    run_round::<rand_chacha::ChaCha8Rng>(
        nodes,
        cluster,
        head,
        station,
        payload_bits,
        params,
        Some(params.gate),
        Mac::Tdma,
        now,
        ledger,
    )
}

/// Comparison protocol: a uniformly random live head each round, no
/// station gate, and contention-based channel access.
pub fn baseline_round<R: Rng>(
    nodes: &mut [SensorNode],
    cluster: &Cluster,
    station: &BaseStation,
    payload_bits: u64,
    params: &RoundParams,
    rng: &mut R,
    now: SimTime,
    ledger: &mut EnergyLedger,
) -> Result<RoundResult, IotError> {
    let alive: Vec<NodeId> = cluster
        .members
        .iter()
        .copied()
        .filter(|m| nodes[*m as usize].alive)
        .collect();
    if alive.is_empty() {
        return Err(IotError::EmptyCluster(cluster.id));
    }
    let head = alive[rng.random_range(0..alive.len())];
    run_round(
        nodes,
        cluster,
        head,
        station,
        payload_bits,
        params,
        None,
        Mac::Csma(params, rng),
        now,
        ledger,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iot::{partition_clusters, test_nodes, total_energy_pj, Point};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cluster_of(nodes: &[SensorNode]) -> Cluster {
        let mut c = Cluster {
            id: 0,
            members: nodes.iter().map(|n| n.id).collect(),
            head: None,
            centroid: Point::default(),
        };
        c.refresh_centroid(nodes);
        c
    }

    fn station() -> BaseStation {
        BaseStation {
            position: Point::new(0.0, 0.0),
            energy_budget_j: 50.0,
        }
    }

    #[test]
    fn selection_sort_orders_ascending() {
        let nodes: Vec<SensorNode> = [5.0, 1.0, 4.0, 1.0, 3.0]
            .iter()
            .enumerate()
            .map(|(i, e)| SensorNode::new(i as u32, Point::default(), *e))
            .collect();
        let mut list: Vec<&SensorNode> = nodes.iter().collect();
        selection_sort_by_energy(&mut list);
        let e: Vec<f64> = list.iter().map(|n| n.energy_j()).collect();
        assert_eq!(e, vec![1.0, 1.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn singleton_is_head() {
        let mut nodes = vec![SensorNode::new(0, Point::new(3.0, 4.0), 12.0)];
        let mut cs = vec![cluster_of(&nodes)];
        assert_eq!(select_cluster_heads(&mut nodes, &mut cs, DEFAULT_BAND).unwrap(), vec![(0, 0)]);
        assert_eq!(nodes[0].role, Role::ClusterHead);
    }

    #[test]
    fn equal_energy_in_band_lower_id_wins() {
        // square around the centroid: all four equidistant
        let pos = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
        let energies = [3.0, 9.0, 9.0, 5.0];
        let mut nodes: Vec<SensorNode> = (0..4)
            .map(|i| SensorNode::new(i, Point::new(pos[i as usize].0, pos[i as usize].1), energies[i as usize]))
            .collect();
        let mut cs = vec![cluster_of(&nodes)];
        let heads = select_cluster_heads(&mut nodes, &mut cs, DEFAULT_BAND).unwrap();
        assert_eq!(heads, vec![(0, 1)]);
    }

    #[test]
    fn empty_cluster() {
        let mut nodes = vec![SensorNode::new(0, Point::default(), 1.0)];
        nodes[0].alive = false;
        let mut cs = vec![cluster_of(&nodes)];
        assert_eq!(
            select_cluster_heads(&mut nodes, &mut cs, DEFAULT_BAND),
            Err(IotError::EmptyCluster(0))
        );
    }

    #[test]
    fn gravity_distance_hand_values() {
        let nodes = vec![
            SensorNode::new(0, Point::new(0.0, 0.0), 1.0),
            SensorNode::new(1, Point::new(2.0, 0.0), 1.0),
        ];
        let c = cluster_of(&nodes);
        assert_eq!(gravity_distance(&nodes[0], &c), 1.0);
        assert_eq!(gravity_distance(&nodes[1], &c), 1.0);
    }

    #[test]
    fn five_node_round_matches_closed_form() {
        let e0 = 12.0;
        let pts = [(0.0, 0.0), (10.0, 0.0), (0.0, 20.0), (-30.0, 0.0), (0.0, -40.0)];
        let mut nodes: Vec<SensorNode> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| SensorNode::new(i as u32, Point::new(p.0, p.1), e0))
            .collect();
        let mut c = cluster_of(&nodes);
        c.head = Some(0);
        let bs = BaseStation {
            position: Point::new(100.0, 0.0),
            energy_budget_j: 50.0,
        };
        let p = RoundParams::default();
        let mut ledger = EnergyLedger::default();
        let b = 512 * 8;
        let r = transmit_round(&mut nodes, &c, &bs, b, &p, SimTime::ZERO, &mut ledger).unwrap();
        let (el, ea) = (50e-9, 100e-12);
        let bf = b as f64;
        let members: f64 = [10.0f64, 20.0, 30.0, 40.0].iter().map(|d| el * bf + ea * bf * d * d).sum();
        let rx = 4.0 * el * bf;
        let req = el * 256.0 + ea * 256.0 * 100.0 * 100.0;
        let data = el * 5.0 * bf + ea * 5.0 * bf * 100.0 * 100.0;
        let expected = members + rx + req + data;
        assert!((r.total_energy_j() - expected).abs() < 1e-9, "{} vs {}", r.total_energy_j(), expected);
        assert!(r.delivered);
        assert_eq!(r.payloads, 5);
        let rate = 12e6;
        let want_delay = 4.0 * bf / rate + 256.0 / rate + 5.0 * bf / rate;
        assert!((r.end_to_end_delay - want_delay).abs() < 1e-15);
    }

    #[test]
    fn zero_payload_costs_only_request() {
        let mut nodes = test_nodes(5, 1);
        let mut cs = vec![cluster_of(&nodes)];
        select_cluster_heads(&mut nodes, &mut cs, DEFAULT_BAND).unwrap();
        let p = RoundParams::default();
        let mut ledger = EnergyLedger::default();
        let r = transmit_round(&mut nodes, &cs[0], &station(), 0, &p, SimTime::ZERO, &mut ledger).unwrap();
        let head = cs[0].head.unwrap();
        let d = nodes[head as usize].position.dist(station().position);
        assert!((r.total_energy_j() - p.radio.energy_tx(256, d)).abs() < 1e-12);
    }

    #[test]
    fn as_written_gate_blocks_rich_head() {
        let mut nodes = test_nodes(4, 2);
        let mut cs = vec![cluster_of(&nodes)];
        select_cluster_heads(&mut nodes, &mut cs, DEFAULT_BAND).unwrap();
        let bs = BaseStation {
            energy_budget_j: 1.0,
            ..station()
        };
        let mut ledger = EnergyLedger::default();
        let r = transmit_round(&mut nodes, &cs[0], &bs, 800, &RoundParams::default(), SimTime::ZERO, &mut ledger)
            .unwrap();
        assert!(!r.delivered);
    }

    #[test]
    fn member_without_energy_dies_and_stops_paying() {
        let mut nodes = test_nodes(3, 3);
        let mut cs = vec![cluster_of(&nodes)];
        select_cluster_heads(&mut nodes, &mut cs, DEFAULT_BAND).unwrap();
        let head = cs[0].head.unwrap();
        let victim = cs[0].members.iter().copied().find(|m| *m != head).unwrap();
        nodes[victim as usize].energy_pj = 1;
        let p = RoundParams::default();
        let mut ledger = EnergyLedger::default();
        let r = transmit_round(&mut nodes, &cs[0], &station(), 4000, &p, SimTime::ZERO, &mut ledger).unwrap();
        assert_eq!(r.dead, vec![victim]);
        assert!(!r.energy_spent.contains_key(&victim));
        let r2 = transmit_round(&mut nodes, &cs[0], &station(), 4000, &p, SimTime::from_secs(1), &mut ledger)
            .unwrap();
        assert!(!r2.energy_spent.contains_key(&victim));
        assert!(r2.dead.is_empty());
    }

    #[test]
    fn broke_head_is_dead_node() {
        let mut nodes = test_nodes(3, 3);
        let mut cs = vec![cluster_of(&nodes)];
        select_cluster_heads(&mut nodes, &mut cs, DEFAULT_BAND).unwrap();
        let head = cs[0].head.unwrap();
        nodes[head as usize].energy_pj = 10;
        let mut ledger = EnergyLedger::default();
        let err = transmit_round(&mut nodes, &cs[0], &station(), 4000, &RoundParams::default(), SimTime::ZERO, &mut ledger)
            .unwrap_err();
        assert_eq!(err, IotError::DeadNode(head));
    }

    #[test]
    fn baseline_singleton_matches_gated_energy() {
        let mk = || vec![SensorNode::new(0, Point::new(30.0, 40.0), 12.0)];
        let p = RoundParams::default();
        let mut a = mk();
        let mut cs = vec![cluster_of(&a)];
        select_cluster_heads(&mut a, &mut cs, DEFAULT_BAND).unwrap();
        let mut l = EnergyLedger::default();
        let r1 = transmit_round(&mut a, &cs[0], &station(), 1000, &p, SimTime::ZERO, &mut l).unwrap();
        let mut b = mk();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r2 = baseline_round(&mut b, &cs[0], &station(), 1000, &p, &mut rng, SimTime::ZERO, &mut l).unwrap();
        assert_eq!(r1.energy_spent, r2.energy_spent);
    }

    #[test]
    fn energy_is_conserved_across_rounds() {
        let mut nodes = test_nodes(40, 8);
        let start = total_energy_pj(&nodes);
        let mut cs = partition_clusters(&nodes, 4, 8).unwrap();
        let mut ledger = EnergyLedger::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = RoundParams::default();
        for t in 0..50 {
            if select_cluster_heads(&mut nodes, &mut cs, DEFAULT_BAND).is_err() {
                break;
            }
            for c in &cs {
                // far heads die here; what they paid before dying still counts
                let _ = transmit_round(&mut nodes, c, &station(), 4096, &p, SimTime::from_secs(t), &mut ledger);
                let _ = baseline_round(&mut nodes, c, &station(), 4096, &p, &mut rng, SimTime::from_secs(t), &mut ledger);
            }
        }
        assert!(nodes.iter().any(|n| !n.alive));
        assert_eq!(start - total_energy_pj(&nodes), ledger.total_debits_pj());
    }
}
