//! Reported quantities: throughput, communication overhead, bandwidth and
//! latency series, per-component energy, CPU proxy and the gas model.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control_plane::EPOCH_BASE;
use crate::data_plane::SwitchId;
use crate::digest::Digest;
use crate::ledger::{BlockPayload, Chain, LedgerError};
use crate::traffic::{Packet, PacketKind};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("simulation time must be positive")]
    ZeroDuration,
    #[error("overhead is undefined with zero CBR packets received")]
    ZeroCbr,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

fn delivered_cbr(packets: &[Packet]) -> impl Iterator<Item = &Packet> {
    packets
        .iter()
        .filter(|p| p.kind == PacketKind::CbrData && p.delivered_at.is_some())
}

/// Delivered CBR bits divided by the simulation time, in bits/s.
pub fn throughput(packets: &[Packet], simulation_time_s: f64) -> Result<f64, MetricsError> {
    if simulation_time_s.is_nan() || simulation_time_s <= 0.0 {
        return Err(MetricsError::ZeroDuration);
    }
    let bits: u64 = delivered_cbr(packets).map(Packet::bits).sum();
    Ok(bits as f64 / simulation_time_s)
}

/// RTR packets (both directions) per CBR packet received.
pub fn comm_overhead(rtr_packets: u64, cbr_received: u64) -> Result<f64, MetricsError> {
    if cbr_received == 0 {
        return Err(MetricsError::ZeroCbr);
    }
    Ok(rtr_packets as f64 / cbr_received as f64)
}

/// Delivered CBR bits per consecutive window of `window_s` seconds, keyed by
/// window start. Covers `[0, horizon_s)`.
pub fn bandwidth_series(packets: &[Packet], window_s: f64, horizon_s: f64) -> Vec<(f64, f64)> {
    assert!(window_s > 0.0, "window must be positive");
    let n = (horizon_s / window_s).ceil().max(0.0) as usize;
    let mut bits = vec![0u64; n];
    for p in delivered_cbr(packets) {
        let t = p.delivered_at.expect("filtered").as_secs_f64();
        let i = (t / window_s).floor() as usize;
        if i < n {
            bits[i] += p.bits();
        }
    }
    bits.iter()
        .enumerate()
        .map(|(i, b)| (i as f64 * window_s, *b as f64 / window_s))
        .collect()
}

/// Mean one-way latency of delivered CBR packets grouped by size bucket
/// (bucket lower edge in bytes).
pub fn latency_by_size(packets: &[Packet], bucket_bytes: u32) -> Vec<(u32, f64)> {
    let mut acc: BTreeMap<u32, (f64, u64)> = BTreeMap::new();
    for p in delivered_cbr(packets) {
        let lat = (p.delivered_at.expect("filtered").saturating_sub(p.sent_at)).as_secs_f64();
        let e = acc.entry(p.size / bucket_bytes * bucket_bytes).or_default();
        e.0 += lat;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Component {
    Controllers,
    IoTDevices,
    CloudStorage,
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Component::Controllers => "Controllers",
            Component::IoTDevices => "IoTDevices",
            Component::CloudStorage => "CloudStorage",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyCosts {
    pub joules_per_work_unit: f64,
    pub joules_per_block: f64,
}

impl Default for EnergyCosts {
    fn default() -> Self {
        Self {
            joules_per_work_unit: 1e-3,
            joules_per_block: 0.5e-3,
        }
    }
}

/// What the energy report is computed from.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyLedgerTotals {
    pub work_units: u64,
    pub iot_debits_pj: u64,
    pub blocks_stored: u64,
}

pub fn energy_report(totals: &EnergyLedgerTotals, costs: &EnergyCosts) -> BTreeMap<Component, f64> {
    BTreeMap::from([
        (Component::Controllers, totals.work_units as f64 * costs.joules_per_work_unit),
        (Component::IoTDevices, crate::iot::pj_to_joules(totals.iot_debits_pj)),
        (Component::CloudStorage, totals.blocks_stored as f64 * costs.joules_per_block),
    ])
}

/// Work units per window scaled to percent of `capacity_units_per_s`,
/// clipped to 100.
pub fn cpu_series(units_per_window: &[(f64, u64)], window_s: f64, capacity_units_per_s: f64) -> Vec<(f64, f64)> {
    units_per_window
        .iter()
        .map(|(t, u)| (*t, (100.0 * *u as f64 / window_s / capacity_units_per_s).min(100.0)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GasParams {
    /// Gas per transaction, g₀.
    pub gas_per_tx: u64,
    /// Fixed controller processing time per transaction, t₀.
    pub base_time_s: f64,
    pub tx_per_block: u64,
    /// Simulated cost of one header hash.
    pub hash_time_s: f64,
    pub difficulty: u32,
}

impl Default for GasParams {
    fn default() -> Self {
        Self {
            gas_per_tx: 21_000,
            base_time_s: 0.005,
            tx_per_block: 10,
            hash_time_s: 1e-6,
            difficulty: crate::ledger::DEFAULT_DIFFICULTY,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GasResult {
    pub gas_total: u64,
    /// `(tx index, seconds)`.
    pub processing_times: Vec<(u64, f64)>,
    /// Mining time of each block, seconds.
    pub block_mining_s: Vec<f64>,
}

/// Packs `transactions` into blocks, mines them, and charges each
/// transaction t₀ plus its block's mining time.
pub fn gas_model(transactions: u64, p: &GasParams) -> Result<GasResult, MetricsError> {
    let mut chain = Chain::data(p.difficulty, EPOCH_BASE)?;
    let mut processing_times = Vec::with_capacity(transactions as usize);
    let mut block_mining_s = Vec::new();
    let mut tx = 0u64;
    while tx < transactions {
        let end = (tx + p.tx_per_block).min(transactions);
        let record: BTreeMap<SwitchId, Digest> = (tx..end)
            .map(|i| (SwitchId(i as u32), Digest::of(&i.to_le_bytes())))
            .collect();
        let block = chain.append(
            BlockPayload::DumpRecord {
                switch_digests: record,
            },
            EPOCH_BASE,
        )?;
        let mining = block.mining_attempts() as f64 * p.hash_time_s;
        block_mining_s.push(mining);
        processing_times.extend((tx..end).map(|i| (i, p.base_time_s + mining)));
        tx = end;
    }
    Ok(GasResult {
        gas_total: p.gas_per_tx * transactions,
        processing_times,
        block_mining_s,
    })
}

/// Least-squares slope of integer points, computed in exact integer
/// arithmetic and divided once at the end.
pub fn fit_slope(points: &[(u64, u64)]) -> f64 {
    let n = points.len() as i128;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0i128, 0i128, 0i128, 0i128);
    for (x, y) in points {
        let (x, y) = (*x as i128, *y as i128);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let num = n * sxy - sx * sy;
    let den = n * sxx - sx * sx;
    if den == 0 {
        return f64::NAN;
    }
    if num % den == 0 {
        (num / den) as f64
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricsReport {
    pub node_count: usize,
    pub duration_s: f64,
    pub throughput_bps: f64,
    /// `None` when no CBR packet was received.
    pub overhead_ratio: Option<f64>,
    pub bandwidth_series: Vec<(f64, f64)>,
    pub latency_by_size: Vec<(u32, f64)>,
    pub response_times: Vec<(u64, f64)>,
    pub energy_by_component: BTreeMap<Component, f64>,
    pub cpu_series: Vec<(f64, f64)>,
    pub gas_total: u64,
    pub tx_processing_times: Vec<(u64, f64)>,
    /// Extra key=value lines for the summary file.
    pub summary: BTreeMap<String, String>,
}

fn write_rows<W: Write, R: Serialize>(w: W, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<(), MetricsError> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(header)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// File names written by [`emit_report`].
pub const REPORT_FILES: [&str; 8] = [
    "throughput.csv",
    "bandwidth.csv",
    "energy.csv",
    "gas.csv",
    "latency.csv",
    "response.csv",
    "cpu.csv",
    "summary.txt",
];

/// Writes one CSV per series and a `key=value` summary into `dir`.
pub fn emit_report(report: &MetricsReport, dir: &Path) -> Result<(), MetricsError> {
    fs::create_dir_all(dir)?;
    let f = |name: &str| fs::File::create(dir.join(name));
    write_rows(
        f("throughput.csv")?,
        &["nodes", "throughput_bps", "throughput_mbps"],
        [(report.node_count, report.throughput_bps, report.throughput_bps / 1e6)],
    )?;
    write_rows(f("bandwidth.csv")?, &["t_s", "bits_per_s"], &report.bandwidth_series)?;
    write_rows(
        f("energy.csv")?,
        &["component", "joules"],
        report.energy_by_component.iter().map(|(c, j)| (c.to_string(), *j)),
    )?;
    let gas_rows: Vec<(u64, u64, f64)> = report
        .tx_processing_times
        .iter()
        .map(|(i, t)| (*i, (i + 1) * report.gas_per_tx(), *t))
        .collect();
    write_rows(f("gas.csv")?, &["tx", "gas", "proc_time_s"], gas_rows)?;
    write_rows(f("latency.csv")?, &["bytes", "latency_s"], &report.latency_by_size)?;
    write_rows(f("response.csv")?, &["file_bytes", "response_s"], &report.response_times)?;
    write_rows(f("cpu.csv")?, &["t_s", "cpu_pct"], &report.cpu_series)?;

    let mut s = f("summary.txt")?;
    writeln!(s, "nodes={}", report.node_count)?;
    writeln!(s, "duration_s={}", report.duration_s)?;
    writeln!(s, "throughput_bps={}", report.throughput_bps)?;
    match report.overhead_ratio {
        Some(r) => writeln!(s, "overhead_ratio={r}")?,
        None => writeln!(s, "overhead_ratio=undefined")?,
    }
    for (c, j) in &report.energy_by_component {
        writeln!(s, "energy_{c}_j={j}")?;
    }
    writeln!(s, "gas_total={}", report.gas_total)?;
    for (k, v) in &report.summary {
        writeln!(s, "{k}={v}")?;
    }
    Ok(())
}

impl MetricsReport {
    /// Gas per transaction implied by the totals (0 without transactions).
    pub fn gas_per_tx(&self) -> u64 {
        self.gas_total
            .checked_div(self.tx_processing_times.len() as u64)
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::SimTime;
    use std::net::Ipv4Addr;

    fn pkt(id: u64, kind: PacketKind, size: u32, sent_ms: u64, delivered_ms: Option<u64>) -> Packet {
        Packet {
            id,
            kind,
            src: Ipv4Addr::new(10, 0, 0, 1),
            dst: Ipv4Addr::new(10, 0, 0, 2),
            size,
            sent_at: SimTime::from_millis(sent_ms),
            delivered_at: delivered_ms.map(SimTime::from_millis),
        }
    }

    #[test]
    fn throughput_reference_case() {
        let ps: Vec<Packet> = (0..1000).map(|i| pkt(i, PacketKind::CbrData, 512, i, Some(i + 5))).collect();
        assert_eq!(throughput(&ps, 500.0).unwrap(), 8192.0);
        assert_eq!(throughput(&[], 500.0).unwrap(), 0.0);
        assert!(matches!(throughput(&ps, 0.0), Err(MetricsError::ZeroDuration)));
    }

    #[test]
    fn attack_and_lost_packets_do_not_count() {
        let ps = vec![
            pkt(0, PacketKind::AttackFlood, 512, 0, Some(1)),
            pkt(1, PacketKind::CbrData, 100, 0, None),
            pkt(2, PacketKind::RtrControl, 100, 0, Some(3)),
            pkt(3, PacketKind::CbrData, 125, 0, Some(3)),
        ];
        assert_eq!(throughput(&ps, 1.0).unwrap(), 1000.0);
    }

    #[test]
    fn overhead_cases() {
        assert_eq!(comm_overhead(0, 10).unwrap(), 0.0);
        assert_eq!(comm_overhead(50, 200).unwrap(), 0.25);
        assert!(matches!(comm_overhead(5, 0), Err(MetricsError::ZeroCbr)));
    }

    #[test]
    fn flat_bandwidth() {
        let ps: Vec<Packet> = (0..100)
            .map(|i| pkt(i, PacketKind::CbrData, 512, i * 100, Some(i * 100 + 1)))
            .collect();
        let s = bandwidth_series(&ps, 1.0, 10.0);
        assert_eq!(s.len(), 10);
        assert!(s.iter().all(|(_, b)| *b == 40_960.0));
        assert!(bandwidth_series(&[], 1.0, 3.0).iter().all(|(_, b)| *b == 0.0));
    }

    #[test]
    fn energy_split() {
        let r = energy_report(
            &EnergyLedgerTotals {
                work_units: 10,
                iot_debits_pj: 2_000_000_000_000,
                blocks_stored: 4,
            },
            &EnergyCosts::default(),
        );
        assert_eq!(r[&Component::Controllers], 0.01);
        assert_eq!(r[&Component::IoTDevices], 2.0);
        assert_eq!(r[&Component::CloudStorage], 0.002);
    }

    #[test]
    fn gas_is_linear() {
        let p = GasParams {
            difficulty: 6,
            ..GasParams::default()
        };
        assert_eq!(gas_model(0, &p).unwrap().gas_total, 0);
        let g = |n| gas_model(n, &p).unwrap().gas_total;
        assert_eq!(g(40), 2 * g(20));
        let pts: Vec<(u64, u64)> = [100, 400, 800].iter().map(|n| (*n, g(*n))).collect();
        assert_eq!(fit_slope(&pts), 21_000.0);
        let r = gas_model(25, &p).unwrap();
        assert_eq!(r.processing_times.len(), 25);
        assert_eq!(r.block_mining_s.len(), 3);
        assert!(r.processing_times.iter().all(|(_, t)| *t > 0.005));
    }

    #[test]
    fn report_files_and_headers() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&MetricsReport::default(), dir.path()).unwrap();
        for f in REPORT_FILES {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let bw = fs::read_to_string(dir.path().join("bandwidth.csv")).unwrap();
        assert_eq!(bw, "t_s,bits_per_s\n");
        let th = fs::read_to_string(dir.path().join("throughput.csv")).unwrap();
        assert_eq!(th, "nodes,throughput_bps,throughput_mbps\n0,0.0,0.0\n");
    }
}
