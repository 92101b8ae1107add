//! Workload and attack generators: CBR sources, request/response probes,
//! file transfers, flood ramps and switch tampering.

use std::io::Write;
use std::net::Ipv4Addr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data_plane::{Fabric, FlowRule, HostId, Neighbor, RuleKey, RuleSetError, Switch, Unreachable};
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketKind {
    CbrData,
    RtrControl,
    AttackFlood,
    FileChunk,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Packet {
    pub id: u64,
    pub kind: PacketKind,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    /// Bytes.
    pub size: u32,
    pub sent_at: SimTime,
    pub delivered_at: Option<SimTime>,
}

impl Packet {
    pub fn bits(&self) -> u64 {
        self.size as u64 * 8
    }
}

#[derive(Serialize)]
struct TraceRow<'a> {
    id: u64,
    kind: PacketKind,
    src: String,
    dst: String,
    size: u32,
    sent: f64,
    delivered: Option<f64>,
    #[serde(skip)]
    _p: std::marker::PhantomData<&'a ()>,
}

/// `id,kind,src,dst,size,sent,delivered`; `delivered` is empty for packets
/// that never arrived.
pub fn write_trace<W: Write>(packets: &[Packet], w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    if packets.is_empty() {
        wtr.write_record(["id", "kind", "src", "dst", "size", "sent", "delivered"])?;
    }
    for p in packets {
        wtr.serialize(TraceRow {
            id: p.id,
            kind: p.kind,
            src: p.src.to_string(),
            dst: p.dst.to_string(),
            size: p.size,
            sent: p.sent_at.as_secs_f64(),
            delivered: p.delivered_at.map(SimTime::as_secs_f64),
            _p: std::marker::PhantomData,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

/// Emission times at exactly `k / rate` for `k = 0, 1, ...` below
/// `duration`, each with a size drawn uniformly from `size_range`.
pub fn cbr_source(
    rate_pps: f64,
    size_range: (u32, u32),
    duration: SimTime,
    rng: &mut impl Rng,
) -> Vec<(SimTime, u32)> {
    if rate_pps <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for k in 0u64.. {
        let t = SimTime::from_secs_f64(k as f64 / rate_pps);
        if t >= duration {
            break;
        }
        out.push((t, rng.random_range(size_range.0..=size_range.1)));
    }
    out
}

/// Flood schedule: a piecewise-linear rate curve (per source) starting at
/// `start_s`. Before the first point the rate is zero; after the last it
/// holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSchedule {
    pub start_s: f64,
    /// `(seconds after start, packets/s)`, increasing in time.
    pub rate_curve: Vec<(f64, f64)>,
    #[serde(default)]
    pub targets: Vec<HostId>,
}

impl AttackSchedule {
    pub fn ramp(start_s: f64, from_pps: f64, to_pps: f64, over_s: f64) -> Self {
        Self {
            start_s,
            rate_curve: vec![(0.0, from_pps), (over_s, to_pps)],
            targets: Vec::new(),
        }
    }

    pub fn is_valid(&self) -> bool {
        !self.rate_curve.is_empty()
            && self.rate_curve.iter().all(|(t, r)| *r >= 0.0 && t.is_finite() && r.is_finite())
            && self.rate_curve.windows(2).all(|w| w[0].0 < w[1].0)
    }

    /// Instantaneous rate at absolute time `t_s`.
    pub fn rate_at(&self, t_s: f64) -> f64 {
        let rel = t_s - self.start_s;
        let c = &self.rate_curve;
        if rel < c[0].0 {
            return 0.0;
        }
        for w in c.windows(2) {
            let ((t0, r0), (t1, r1)) = (w[0], w[1]);
            if rel <= t1 {
                return r0 + (r1 - r0) * (rel - t0) / (t1 - t0);
            }
        }
        c[c.len() - 1].1
    }

    pub fn peak_rate(&self) -> f64 {
        self.rate_curve.iter().map(|p| p.1).fold(0.0, f64::max)
    }

    /// Time from which the curve holds its last rate.
    pub fn plateau_start_s(&self) -> f64 {
        self.start_s + self.rate_curve[self.rate_curve.len() - 1].0
    }

    /// Emission times of one source up to `until`: the k-th packet leaves
    /// when the integrated rate reaches k.
    pub fn emission_times(&self, until: SimTime) -> Vec<SimTime> {
        let end = until.as_secs_f64() - self.start_s;
        let mut out = Vec::new();
        let mut pts = self.rate_curve.clone();
        let last = pts[pts.len() - 1];
        if end > last.0 {
            pts.push((end, last.1));
        }
        let mut acc = 0.0f64; // packets emitted before the current segment
        let mut k = 0u64;
        for w in pts.windows(2) {
            let ((t0, r0), (t1, r1)) = (w[0], w[1]);
            let slope = (r1 - r0) / (t1 - t0);
            let seg = (r0 + r1) / 2.0 * (t1 - t0);
            while (k as f64) < acc + seg {
                let need = k as f64 - acc;
                // solve r0*x + slope*x^2/2 = need for x in [0, t1-t0]
                let x = if slope.abs() < 1e-12 {
                    need / r0
                } else {
                    (-r0 + (r0 * r0 + 2.0 * slope * need).max(0.0).sqrt()) / slope
                };
                let t = self.start_s + t0 + x;
                if t >= until.as_secs_f64() {
                    return out;
                }
                out.push(SimTime::from_secs_f64(t));
                k += 1;
            }
            acc += seg;
        }
        out
    }
}

/// One request/response round trip on an idle fabric. Each switch adds
/// `hop_delay`; every link serializes `size` bytes at `rate_bps`. Counts
/// two packets into `rtr_packets`.
pub fn rtr_exchange(
    fabric: &Fabric,
    client: HostId,
    server: HostId,
    size: u32,
    rate_bps: f64,
    hop_delay: SimTime,
    rtr_packets: &mut u64,
) -> Result<SimTime, Unreachable> {
    let there = fabric.trace_route(client, server, 17)?;
    let back = fabric.trace_route(server, client, 17)?;
    let ser = SimTime::transmission(size as u64 * 8, rate_bps);
    let leg = |switches: usize| {
        SimTime::from_nanos(ser.as_nanos() * (switches as u64 + 1) + hop_delay.as_nanos() * switches as u64)
    };
    *rtr_packets += 2;
    Ok(leg(there.len()) + leg(back.len()))
}

/// Chunks `file_bytes` into packets of at most `max_packet` bytes and
/// pipelines them store-and-forward over the route on an idle fabric.
/// Returns the time from first send to the last chunk's arrival plus the
/// sink's store latency.
pub fn file_transfer(
    fabric: &Fabric,
    src: HostId,
    dst: HostId,
    file_bytes: u64,
    max_packet: u32,
    rate_bps: f64,
    hop_delay: SimTime,
    store_latency: SimTime,
) -> Result<SimTime, Unreachable> {
    assert!(file_bytes > 0, "empty file");
    let path = fabric.trace_route(src, dst, 6)?;
    let links = path.len() + 1;
    let mut busy = vec![SimTime::ZERO; links];
    let mut last = SimTime::ZERO;
    let mut remaining = file_bytes;
    while remaining > 0 {
        let size = remaining.min(max_packet as u64);
        remaining -= size;
        let ser = SimTime::transmission(size * 8, rate_bps);
        let mut t = SimTime::ZERO;
        for (i, b) in busy.iter_mut().enumerate() {
            let start = t.max(*b);
            *b = start + ser;
            t = *b;
            if i + 1 < links {
                t += hop_delay;
            }
        }
        last = t;
    }
    Ok(last + store_latency)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TamperMutation {
    AddRule { rule: FlowRule },
    DropRule { key: RuleKey },
    EditPriority { key: RuleKey, new_priority: u16 },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TamperError {
    #[error(transparent)]
    Duplicate(#[from] RuleSetError),
    #[error("no such rule on switch")]
    NoSuchRule,
}

/// Edits the switch's local table behind the ledger's back and flags it
/// compromised. A rejected mutation leaves the switch untouched.
pub fn tamper_switch(switch: &mut Switch, mutation: &TamperMutation) -> Result<(), TamperError> {
    let res = switch.with_table_mut(|t| match mutation {
        TamperMutation::AddRule { rule } => t.insert(rule.clone()).map_err(TamperError::from),
        TamperMutation::DropRule { key } => t.remove(key).map(|_| ()).ok_or(TamperError::NoSuchRule),
        TamperMutation::EditPriority { key, new_priority } => {
            let mut rule = t.get(key).cloned().ok_or(TamperError::NoSuchRule)?;
            rule.priority = *new_priority;
            if t.contains(&rule) || t.get(&rule.key()).is_some() {
                return Err(TamperError::Duplicate(RuleSetError::Duplicate {
                    dpid: rule.dpid,
                    priority: rule.priority,
                }));
            }
            t.remove(key);
            t.insert(rule).map_err(TamperError::from)
        }
    });
    if res.is_ok() {
        switch.compromised = true;
    }
    res
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationKind {
    AddRule,
    DropRule,
    EditPriority,
}

/// A random mutation that changes the switch's table: a new rule, a
/// removed rule or a shifted priority. `kind` pins the flavour; an empty
/// table always gets a new rule.
pub fn random_mutation(switch: &Switch, kind: Option<MutationKind>, rng: &mut impl Rng) -> TamperMutation {
    let rules: Vec<&FlowRule> = switch.table().iter().collect();
    let host_ports: Vec<u32> = switch
        .ports
        .iter()
        .filter(|(_, n)| matches!(n, Neighbor::Host(_)))
        .map(|(p, _)| *p)
        .collect();
    let choice = match (rules.is_empty(), kind) {
        (true, _) | (false, Some(MutationKind::AddRule)) => 0,
        (false, Some(MutationKind::DropRule)) => 1,
        (false, Some(MutationKind::EditPriority)) => 2,
        (false, None) => rng.random_range(0..3),
    };
    match choice {
        1 => TamperMutation::DropRule {
            key: rules[rng.random_range(0..rules.len())].key(),
        },
        2 => loop {
            let r = rules[rng.random_range(0..rules.len())];
            let p: u16 = rng.random_range(1..=u16::MAX - 1);
            let mut moved = r.clone();
            moved.priority = p;
            if p != r.priority && switch.table().get(&moved.key()).is_none() {
                break TamperMutation::EditPriority {
                    key: r.key(),
                    new_priority: p,
                };
            }
        },
        _ => loop {
            let port = host_ports
                .first()
                .copied()
                .unwrap_or_else(|| rng.random_range(1..=4));
            let rule = FlowRule::new(
                switch.id,
                rng.random_range(200..60000),
                crate::data_plane::Match {
                    src_addr: Some(Ipv4Addr::new(10, 9, rng.random(), rng.random())),
                    ..crate::data_plane::Match::any()
                },
                crate::data_plane::Action::Forward(port),
            );
            if switch.table().get(&rule.key()).is_none() {
                break TamperMutation::AddRule { rule };
            }
        },
    }
}
