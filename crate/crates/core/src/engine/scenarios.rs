//! Canned experiments. Each sweep runs independent scenarios in parallel;
//! every run is single-threaded and seeded, so results do not depend on
//! scheduling.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{AttackConfig, ChProtocol, FileTransferConfig, Mode, Preset, ScenarioConfig, Toggle};
use super::world::{Simulation, World};
use super::EngineError;
use crate::metrics::{self, Component, GasParams};
use crate::traffic::PacketKind;

pub const FIG7_NODE_COUNTS: [usize; 5] = [10, 20, 30, 40, 50];
pub const FILE_SIZES: [u64; 4] = [64_000, 256_000, 1_000_000, 4_000_000];
const FILE_STARTS_S: [f64; 4] = [1.0, 5.0, 10.0, 20.0];
const RESPONSE_DURATION_S: f64 = 30.0;
pub const GAS_SWEEP: [u64; 3] = [100, 400, 800];

pub const DDOS_START_S: f64 = 10.0;
pub const DDOS_FROM_PPS: f64 = 190.0;
pub const DDOS_TO_PPS: f64 = 1400.0;
pub const DDOS_RAMP_S: f64 = 100.0;
pub const DDOS_PLATEAU_S: f64 = 20.0;
/// Packets sent this close to the horizon may still be in flight.
const DDOS_TAIL_S: f64 = 2.0;

fn run(config: ScenarioConfig) -> Result<Simulation, EngineError> {
    World::build(config)?.run()
}

fn with_mode(base: &ScenarioConfig, mode: Mode) -> ScenarioConfig {
    let mut c = base.clone();
    c.mode = mode;
    c
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThroughputRow {
    pub nodes: usize,
    pub mode: Mode,
    pub throughput_bps: f64,
}

/// Throughput for each node count in both modes.
pub fn throughput_vs_nodes(base: &ScenarioConfig, counts: &[usize]) -> Result<Vec<ThroughputRow>, EngineError> {
    let jobs: Vec<(usize, Mode)> = counts
        .iter()
        .flat_map(|n| [(*n, Mode::Distb), (*n, Mode::OpenflowOnly)])
        .collect();
    jobs.par_iter()
        .map(|(n, mode)| {
            let mut c = with_mode(base, *mode);
            c.node_count = *n;
            let sim = run(c)?;
            Ok(ThroughputRow {
                nodes: *n,
                mode: *mode,
                throughput_bps: sim.report.throughput_bps,
            })
        })
        .collect()
}

/// The attack ramp applied to `base`, optionally with mitigation.
pub fn ddos_config(base: &ScenarioConfig, mode: Mode, mitigation: Toggle) -> ScenarioConfig {
    let mut c = with_mode(base, mode);
    c.mitigation = mitigation;
    c.attack = Some(AttackConfig::ramp(DDOS_START_S, DDOS_FROM_PPS, DDOS_TO_PPS, DDOS_RAMP_S));
    c.duration_s = DDOS_START_S + DDOS_RAMP_S + DDOS_PLATEAU_S;
    c
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DdosOutcome {
    pub mode: Mode,
    pub mitigation: Toggle,
    /// CBR bits/s offered during the plateau.
    pub nominal_bps: f64,
    /// CBR bits/s delivered out of the plateau's offered traffic.
    pub peak_bps: f64,
    pub bandwidth_series: Vec<(f64, f64)>,
    pub cpu_series: Vec<(f64, f64)>,
    pub summary: BTreeMap<String, String>,
}

impl DdosOutcome {
    pub fn peak_ratio(&self) -> f64 {
        if self.nominal_bps == 0.0 {
            0.0
        } else {
            self.peak_bps / self.nominal_bps
        }
    }

    fn from_sim(sim: &Simulation) -> Self {
        let c = &sim.world.config;
        let from = c.duration_s - DDOS_PLATEAU_S;
        let to = c.duration_s - DDOS_TAIL_S;
        let (mut offered, mut delivered) = (0u64, 0u64);
        for p in sim.world.trace() {
            let t = p.sent_at.as_secs_f64();
            if p.kind != PacketKind::CbrData || t < from || t >= to {
                continue;
            }
            offered += p.bits();
            if p.delivered_at.is_some() {
                delivered += p.bits();
            }
        }
        let span = to - from;
        DdosOutcome {
            mode: c.mode,
            mitigation: c.mitigation,
            nominal_bps: offered as f64 / span,
            peak_bps: delivered as f64 / span,
            bandwidth_series: sim.report.bandwidth_series.clone(),
            cpu_series: sim.report.cpu_series.clone(),
            summary: sim.report.summary.clone(),
        }
    }
}

/// Mitigated distb run and unmitigated openflow-only run under the same ramp.
pub fn ddos(base: &ScenarioConfig) -> Result<(DdosOutcome, DdosOutcome), EngineError> {
    let (a, b) = rayon::join(
        || run(ddos_config(base, Mode::Distb, Toggle::On)),
        || run(ddos_config(base, Mode::OpenflowOnly, Toggle::Off)),
    );
    Ok((DdosOutcome::from_sim(&a?), DdosOutcome::from_sim(&b?)))
}

/// Attack rate per bot at absolute time `t`, by linear interpolation.
pub fn attack_rate_at(attack: &AttackConfig, t: f64) -> f64 {
    let rel = t - attack.start_s;
    let curve = &attack.rate_curve;
    if rel < 0.0 || curve.is_empty() {
        return 0.0;
    }
    match curve.iter().position(|(x, _)| *x > rel) {
        Some(0) => curve[0].1,
        Some(i) => {
            let ((x0, y0), (x1, y1)) = (curve[i - 1], curve[i]);
            y0 + (y1 - y0) * (rel - x0) / (x1 - x0)
        }
        None => curve[curve.len() - 1].1,
    }
}

/// File transfers of increasing size, spaced so they do not overlap.
pub fn response_config(base: &ScenarioConfig) -> ScenarioConfig {
    let mut c = base.clone();
    c.file_transfer = FILE_SIZES
        .iter()
        .zip(FILE_STARTS_S)
        .map(|(bytes, at_s)| FileTransferConfig {
            at_s,
            bytes: *bytes,
            src: "gw1".into(),
            dst: "cloud".into(),
        })
        .collect();
    c.duration_s = RESPONSE_DURATION_S;
    c
}

/// `(file bytes, response seconds)` for each transfer.
pub fn response_times(base: &ScenarioConfig) -> Result<Vec<(u64, f64)>, EngineError> {
    Ok(run(response_config(base))?.report.response_times)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ChSeries {
    /// Mean radio energy per cluster-round attempt, failed attempts included.
    pub mean_energy_j: f64,
    /// Mean end-to-end delay over delivered rounds.
    pub mean_delay_s: f64,
    pub attempts: usize,
    pub delivered: usize,
    /// Per round index: (mean energy, mean delay over delivered).
    pub per_round: Vec<(f64, Option<f64>)>,
}

fn ch_run(base: &ScenarioConfig, protocol: ChProtocol, rounds: usize) -> Result<ChSeries, EngineError> {
    let mut c = base.clone();
    c.iot.ch_protocol = protocol;
    c.attack = None;
    c.tamper.clear();
    c.file_transfer.clear();
    // the last round starts strictly before the horizon
    c.duration_s = c.report_interval_s * rounds as f64 - c.report_interval_s / 2.0;
    let sim = run(c)?;
    let interval = sim.world.config.report_interval_s;
    let mut per_round = vec![(0.0, 0usize, 0.0, 0usize); rounds];
    for r in &sim.world.rounds {
        let i = ((r.time / interval) as usize).min(rounds - 1);
        per_round[i].0 += r.energy_j;
        per_round[i].1 += 1;
        if let Some(d) = r.delay_s {
            per_round[i].2 += d;
            per_round[i].3 += 1;
        }
    }
    let rs = &sim.world.rounds;
    let delays: Vec<f64> = rs.iter().filter_map(|r| r.delay_s).collect();
    Ok(ChSeries {
        mean_energy_j: if rs.is_empty() {
            0.0
        } else {
            rs.iter().map(|r| r.energy_j).sum::<f64>() / rs.len() as f64
        },
        mean_delay_s: if delays.is_empty() {
            0.0
        } else {
            delays.iter().sum::<f64>() / delays.len() as f64
        },
        attempts: rs.len(),
        delivered: delays.len(),
        per_round: per_round
            .into_iter()
            .map(|(e, n, d, m)| {
                let e = if n == 0 { 0.0 } else { e / n as f64 };
                (e, (m > 0).then(|| d / m as f64))
            })
            .collect(),
    })
}

/// Energy-aware head selection against the contention baseline on the same field.
pub fn ch_comparison(base: &ScenarioConfig, rounds: usize) -> Result<(ChSeries, ChSeries), EngineError> {
    assert!(rounds > 0, "need at least one round");
    let (a, b) = rayon::join(
        || ch_run(base, ChProtocol::Alg1, rounds),
        || ch_run(base, ChProtocol::Baseline, rounds),
    );
    Ok((a?, b?))
}

/// Rows of `(tx, gas, processing time)` for each transaction count.
pub fn gas_sweep(params: &GasParams, counts: &[u64]) -> Result<Vec<(u64, u64, f64)>, EngineError> {
    counts
        .par_iter()
        .map(|n| {
            let g = metrics::gas_model(*n, params)?;
            let mean = if g.processing_times.is_empty() {
                0.0
            } else {
                g.processing_times.iter().map(|(_, t)| t).sum::<f64>() / g.processing_times.len() as f64
            };
            Ok((*n, g.gas_total, mean))
        })
        .collect()
}

pub const P1_FIGURES: [&str; 6] = [
    "fig7_throughput_vs_nodes.csv",
    "fig8_ddos_bandwidth.csv",
    "fig9_response_time.csv",
    "fig10_bandwidth_vs_attack_rate.csv",
    "fig11_latency_vs_size.csv",
    "fig12_cpu_under_ddos.csv",
];

pub const P2_FIGURES: [&str; 5] = [
    "throughput_vs_time.csv",
    "energy_split.csv",
    "gas.csv",
    "ch_energy.csv",
    "ch_delay.csv",
];

pub const CH_ROUNDS: usize = 200;

fn csv_out(dir: &Path, name: &str) -> Result<csv::Writer<fs::File>, EngineError> {
    Ok(csv::Writer::from_writer(fs::File::create(dir.join(name))?))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Aligns two `(key, value)` series on their keys.
fn zip_series<K: Ord + Copy>(a: &[(K, f64)], b: &[(K, f64)]) -> Vec<(K, Option<f64>, Option<f64>)> {
    let mut m: BTreeMap<K, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for (k, v) in a {
        m.entry(*k).or_default().0 = Some(*v);
    }
    for (k, v) in b {
        m.entry(*k).or_default().1 = Some(*v);
    }
    m.into_iter().map(|(k, (x, y))| (k, x, y)).collect()
}

fn keyed(v: &[(f64, f64)]) -> Vec<(u64, f64)> {
    v.iter().map(|(t, x)| (t.to_bits(), *x)).collect()
}

/// Runs the figure sweeps for a preset and writes one CSV per figure.
/// Returns the written paths.
pub fn figures(preset: Preset, base: &ScenarioConfig, dir: &Path) -> Result<Vec<PathBuf>, EngineError> {
    fs::create_dir_all(dir)?;
    match preset {
        Preset::P2 => figures_p2(base, dir),
        _ => figures_p1(base, dir),
    }
}

fn figures_p1(base: &ScenarioConfig, dir: &Path) -> Result<Vec<PathBuf>, EngineError> {
    let ((rows, attacked), (resp, normal)) = rayon::join(
        || (throughput_vs_nodes(base, &FIG7_NODE_COUNTS), ddos(base)),
        || {
            rayon::join(
                || {
                    rayon::join(
                        || response_times(&with_mode(base, Mode::Distb)),
                        || response_times(&with_mode(base, Mode::OpenflowOnly)),
                    )
                },
                || {
                    rayon::join(
                        || run(with_mode(base, Mode::Distb)),
                        || run(with_mode(base, Mode::OpenflowOnly)),
                    )
                },
            )
        },
    );
    let rows = rows?;
    let (ddos_on, ddos_off) = attacked?;
    let (resp_d, resp_o) = (resp.0?, resp.1?);
    let (norm_d, norm_o) = (normal.0?, normal.1?);

    let mut w = csv_out(dir, P1_FIGURES[0])?;
    w.write_record(["nodes", "mode", "throughput_bps", "throughput_mbps"])?;
    for r in &rows {
        w.write_record([
            r.nodes.to_string(),
            r.mode.as_str().to_string(),
            r.throughput_bps.to_string(),
            (r.throughput_bps / 1e6).to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv_out(dir, P1_FIGURES[1])?;
    w.write_record(["t_s", "distb_bps", "bcf_bps"])?;
    for (k, a, b) in zip_series(&keyed(&ddos_on.bandwidth_series), &keyed(&ddos_off.bandwidth_series)) {
        w.write_record([f64::from_bits(k).to_string(), opt(a), opt(b)])?;
    }
    w.flush()?;

    let mut w = csv_out(dir, P1_FIGURES[2])?;
    w.write_record(["file_bytes", "distb_s", "bcf_s"])?;
    let rd: Vec<(u64, f64)> = resp_d;
    for (k, a, b) in zip_series(&rd, &resp_o) {
        w.write_record([k.to_string(), opt(a), opt(b)])?;
    }
    w.flush()?;

    let attack = ddos_config(base, Mode::Distb, Toggle::On).attack.expect("ramp");
    let window = base.metrics.bandwidth_window_s;
    let mut w = csv_out(dir, P1_FIGURES[3])?;
    w.write_record(["t_s", "attack_pps", "distb_bps", "bcf_bps"])?;
    for (k, a, b) in zip_series(&keyed(&ddos_on.bandwidth_series), &keyed(&ddos_off.bandwidth_series)) {
        let t = f64::from_bits(k);
        if t + window <= attack.start_s {
            continue;
        }
        let rate = attack_rate_at(&attack, t + window / 2.0);
        w.write_record([t.to_string(), rate.to_string(), opt(a), opt(b)])?;
    }
    w.flush()?;

    let mut w = csv_out(dir, P1_FIGURES[4])?;
    w.write_record(["bytes", "distb_s", "bcf_s"])?;
    let ld: Vec<(u32, f64)> = norm_d.report.latency_by_size.clone();
    for (k, a, b) in zip_series(&ld, &norm_o.report.latency_by_size) {
        w.write_record([k.to_string(), opt(a), opt(b)])?;
    }
    w.flush()?;

    let mut w = csv_out(dir, P1_FIGURES[5])?;
    w.write_record(["t_s", "distb_cpu_pct", "bcf_cpu_pct"])?;
    for (k, a, b) in zip_series(&keyed(&ddos_on.cpu_series), &keyed(&ddos_off.cpu_series)) {
        w.write_record([f64::from_bits(k).to_string(), opt(a), opt(b)])?;
    }
    w.flush()?;

    Ok(P1_FIGURES.iter().map(|n| dir.join(n)).collect())
}

fn figures_p2(base: &ScenarioConfig, dir: &Path) -> Result<Vec<PathBuf>, EngineError> {
    let ((d, o), (ch, gas)) = rayon::join(
        || rayon::join(|| run(with_mode(base, Mode::Distb)), || run(with_mode(base, Mode::OpenflowOnly))),
        || {
            rayon::join(
                || ch_comparison(base, CH_ROUNDS),
                || gas_sweep(&base.metrics.gas, &GAS_SWEEP),
            )
        },
    );
    let (d, o) = (d?, o?);
    let (alg1, baseline) = ch?;

    let mut w = csv_out(dir, P2_FIGURES[0])?;
    w.write_record(["t_s", "distb_bps", "bcf_bps"])?;
    for (k, a, b) in zip_series(&keyed(&d.report.bandwidth_series), &keyed(&o.report.bandwidth_series)) {
        w.write_record([f64::from_bits(k).to_string(), opt(a), opt(b)])?;
    }
    w.flush()?;

    let mut w = csv_out(dir, P2_FIGURES[1])?;
    w.write_record(["component", "distb_j", "bcf_j"])?;
    for c in [Component::Controllers, Component::IoTDevices, Component::CloudStorage] {
        let get = |s: &Simulation| s.report.energy_by_component.get(&c).copied().unwrap_or(0.0);
        w.write_record([c.to_string(), get(&d).to_string(), get(&o).to_string()])?;
    }
    w.flush()?;

    let mut w = csv_out(dir, P2_FIGURES[2])?;
    w.write_record(["tx", "gas", "proc_time_s"])?;
    for (tx, g, t) in gas? {
        w.write_record([tx.to_string(), g.to_string(), t.to_string()])?;
    }
    w.flush()?;

    for (name, pick) in [
        (P2_FIGURES[3], (|r: &(f64, Option<f64>)| Some(r.0)) as fn(&(f64, Option<f64>)) -> Option<f64>),
        (P2_FIGURES[4], |r: &(f64, Option<f64>)| r.1),
    ] {
        let mut w = csv_out(dir, name)?;
        let unit = if name == P2_FIGURES[3] { "j" } else { "s" };
        w.write_record(["round".to_string(), format!("alg1_{unit}"), format!("baseline_{unit}")])?;
        for (i, (a, b)) in alg1.per_round.iter().zip(&baseline.per_round).enumerate() {
            w.write_record([i.to_string(), opt(pick(a)), opt(pick(b))])?;
        }
        w.flush()?;
    }

    Ok(P2_FIGURES.iter().map(|n| dir.join(n)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_interpolation() {
        let a = AttackConfig::ramp(10.0, 190.0, 1400.0, 100.0);
        assert_eq!(attack_rate_at(&a, 5.0), 0.0);
        assert_eq!(attack_rate_at(&a, 10.0), 190.0);
        assert!((attack_rate_at(&a, 60.0) - 795.0).abs() < 1e-9);
        assert_eq!(attack_rate_at(&a, 125.0), 1400.0);
    }

    #[test]
    fn single_count_gives_two_rows() {
        let mut base = ScenarioConfig::p1();
        base.duration_s = 5.0;
        let rows = throughput_vs_nodes(&base, &[10]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].mode, Mode::Distb);
        assert_eq!(rows[1].mode, Mode::OpenflowOnly);
    }
}
