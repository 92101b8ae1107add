//! IoT perception layer: node placement, k-means clustering, cluster-head
//! selection, radio energy accounting and mobility.

mod kmeans;
mod mobility;
mod radio;
mod selection;

use std::io::Write;
use std::ops::RangeInclusive;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use kmeans::{default_k, partition_clusters, wcss, MAX_ITERATIONS};
pub use mobility::{random_waypoint_step, Area, WaypointState, PAUSE_MAX_S, SPEED_RANGE};
pub use radio::{energy_rx, energy_tx, joules_to_pj, pj_to_joules, RadioModel};
pub use selection::{
    baseline_round, gravity_distance, select_cluster_heads, selection_sort_by_energy, transmit_round,
    GateSemantics, RoundParams, RoundResult, DEFAULT_BAND,
};

pub type NodeId = u32;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist2(self, o: Point) -> f64 {
        let (dx, dy) = (self.x - o.x, self.y - o.y);
        dx * dx + dy * dy
    }

    pub fn dist(self, o: Point) -> f64 {
        self.dist2(o).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Member,
    ClusterHead,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SensorNode {
    pub id: NodeId,
    pub position: Point,
    /// Residual energy in picojoules.
    pub energy_pj: u64,
    /// Carried for reporting only.
    pub trust_j: f64,
    pub role: Role,
    /// False once a debit could not be paid; the residual stays put.
    pub alive: bool,
}

pub const DEFAULT_TRUST_J: f64 = 5.0;

impl SensorNode {
    pub fn new(id: NodeId, position: Point, energy_j: f64) -> Self {
        Self {
            id,
            position,
            energy_pj: joules_to_pj(energy_j),
            trust_j: DEFAULT_TRUST_J,
            role: Role::Member,
            alive: true,
        }
    }

    pub fn energy_j(&self) -> f64 {
        pj_to_joules(self.energy_pj)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cluster {
    pub id: u32,
    /// Sorted node ids.
    pub members: Vec<NodeId>,
    pub head: Option<NodeId>,
    pub centroid: Point,
}

impl Cluster {
    /// Recomputes the centroid from current member positions.
    pub fn refresh_centroid(&mut self, nodes: &[SensorNode]) {
        let n = self.members.len() as f64;
        let (sx, sy) = self
            .members
            .iter()
            .map(|m| nodes[*m as usize].position)
            .fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
        self.centroid = Point::new(sx / n, sy / n);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub position: Point,
    /// β in the selection algorithm.
    pub energy_budget_j: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IotError {
    #[error("k = {k} outside 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("cluster {0} has no live members")]
    EmptyCluster(u32),
    #[error("cluster {0} has no head")]
    NoHead(u32),
    #[error("node {0} cannot pay for its transmission")]
    DeadNode(NodeId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DebitReason {
    MemberTx,
    HeadRx,
    Request,
    DataTx,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyEntry {
    pub time: f64,
    pub node: NodeId,
    #[serde(rename = "delta_J")]
    pub delta_j: f64,
    pub reason: DebitReason,
}

/// Every debit made to any node, in order.
#[derive(Clone, Debug, Default)]
pub struct EnergyLedger {
    entries: Vec<EnergyEntry>,
    total_pj: u64,
}

impl EnergyLedger {
    pub(crate) fn record(&mut self, time: f64, node: NodeId, pj: u64, reason: DebitReason) {
        self.total_pj += pj;
        self.entries.push(EnergyEntry {
            time,
            node,
            delta_j: -pj_to_joules(pj),
            reason,
        });
    }

    pub fn entries(&self) -> &[EnergyEntry] {
        &self.entries
    }

    pub fn total_debits_pj(&self) -> u64 {
        self.total_pj
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        if self.entries.is_empty() {
            wtr.write_record(["time", "node", "delta_j", "reason"])?;
        }
        for e in &self.entries {
            wtr.serialize(e)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn total_energy_pj(nodes: &[SensorNode]) -> u64 {
    nodes.iter().map(|n| n.energy_pj).sum()
}

/// Uniform placement with uniform initial energies.
pub fn place_nodes(n: usize, area: Area, energy_j: RangeInclusive<f64>, rng: &mut impl Rng) -> Vec<SensorNode> {
    (0..n)
        .map(|i| {
            let p = Point::new(rng.random_range(0.0..=area.width), rng.random_range(0.0..=area.height));
            let e = rng.random_range(energy_j.clone());
            SensorNode::new(i as NodeId, p, e)
        })
        .collect()
}

#[cfg(test)]
pub(crate) fn test_nodes(n: usize, seed: u64) -> Vec<SensorNode> {
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    place_nodes(n, Area::square(1000.0), 12.0..=15.0, &mut rng)
}
