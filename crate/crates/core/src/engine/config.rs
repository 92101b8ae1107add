//! Scenario configuration: TOML schema, presets and validation.

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control_plane::{Registry, WorkCosts};
use crate::iot::{GateSemantics, DEFAULT_BAND};
use crate::ledger::MAX_DIFFICULTY;
use crate::metrics::{EnergyCosts, GasParams};
use crate::traffic::MutationKind;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Field path the error refers to, if any.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Io { .. } => None,
            ConfigError::Parse { path, .. } => Some(path),
            ConfigError::Invalid { field, .. } => Some(field),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    P1,
    P2,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Ledger-versioned proactive rules, verification rounds, energy-aware heads.
    Distb,
    /// Reactive controller, no ledger blocks, no verification.
    OpenflowOnly,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Distb => "distb",
            Mode::OpenflowOnly => "openflow-only",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Toggle {
    On,
    Off,
}

impl Toggle {
    pub fn is_on(self) -> bool {
        self == Toggle::On
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChProtocol {
    /// `alg1` in distb mode, `baseline` in openflow-only mode.
    Auto,
    Alg1,
    Baseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub start_s: f64,
    /// `(seconds after start, packets/s per bot)`.
    pub rate_curve: Vec<(f64, f64)>,
    #[serde(default = "default_bots")]
    pub bots: u32,
    /// Defaults to the top of the packet size range.
    #[serde(default)]
    pub packet_size: Option<u32>,
    #[serde(default = "default_target")]
    pub target: String,
}

fn default_bots() -> u32 {
    8
}

fn default_target() -> String {
    "cloud".into()
}

impl AttackConfig {
    /// Linear ramp `from → to` per bot over `over_s`, then a plateau.
    pub fn ramp(start_s: f64, from_pps: f64, to_pps: f64, over_s: f64) -> Self {
        Self {
            start_s,
            rate_curve: vec![(0.0, from_pps), (over_s, to_pps)],
            bots: default_bots(),
            packet_size: None,
            target: default_target(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TamperConfig {
    pub at_s: f64,
    pub switch: u32,
    /// Random kind when absent.
    #[serde(default)]
    pub mutation: Option<MutationKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileTransferConfig {
    pub at_s: f64,
    pub bytes: u64,
    #[serde(default = "default_file_src")]
    pub src: String,
    #[serde(default = "default_target")]
    pub dst: String,
}

fn default_file_src() -> String {
    "gw1".into()
}

/// Switch graph and host placement. Hosts are named `gw1..`, `cloud` and
/// `bot1..`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyConfig {
    /// Another TOML file holding this table. Replaces the inline values.
    pub file: Option<PathBuf>,
    pub switches: u32,
    /// Undirected switch links; a line `1-2-..-n` when absent.
    pub links: Option<Vec<(u32, u32)>>,
    /// Attachment switch of each gateway.
    pub gateways: Vec<u32>,
    pub cloud: u32,
    /// Attachment switch of the attack bots.
    pub bots: u32,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            file: None,
            switches: 4,
            links: None,
            gateways: vec![1, 2],
            cloud: 4,
            bots: 3,
        }
    }
}

impl TopologyConfig {
    pub fn link_list(&self) -> Vec<(u32, u32)> {
        match &self.links {
            Some(l) => l.clone(),
            None => (1..self.switches).map(|i| (i, i + 1)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    pub count: u32,
    pub hop_delay_s: f64,
    pub costs: WorkCosts,
    pub registry: Registry,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let c = crate::control_plane::ClusterConfig::default();
        Self {
            count: c.controllers,
            hop_delay_s: c.broadcast_hop_delay_s,
            costs: c.costs,
            registry: c.registry,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Lookup and forwarding time per switch traversal.
    pub switch_delay_s: f64,
    /// Per-link FIFO capacity in packets; tail-drop beyond.
    pub queue_capacity: usize,
    /// One-way switch-controller latency.
    pub control_latency_s: f64,
    pub controller_service_s: f64,
    pub controller_queue: usize,
    /// Idle timeout of reactively installed entries.
    pub idle_timeout_s: f64,
    /// Per-source admission cap at the ingress switch when mitigation is on.
    pub meter_cap_pps: f64,
    pub store_latency_s: f64,
    pub rtr_interval_s: f64,
    pub rtr_size_bytes: u32,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            switch_delay_s: 0.002,
            queue_capacity: 1000,
            control_latency_s: 0.002,
            controller_service_s: 0.0005,
            controller_queue: 1000,
            idle_timeout_s: 10.0,
            meter_cap_pps: 200.0,
            store_latency_s: 0.003,
            rtr_interval_s: 1.0,
            rtr_size_bytes: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IotConfig {
    pub ch_protocol: ChProtocol,
    pub band: f64,
    pub request_bits: u64,
    /// Base-station energy budget β.
    pub beta_j: f64,
    /// `⌈n/10⌉` when absent.
    pub clusters: Option<usize>,
    pub backoff_slot_s: f64,
    pub backoff_max_slots: u32,
    pub cca_s: f64,
}

impl Default for IotConfig {
    fn default() -> Self {
        let p = crate::iot::RoundParams::default();
        Self {
            ch_protocol: ChProtocol::Auto,
            band: DEFAULT_BAND,
            request_bits: p.request_bits,
            beta_j: 50.0,
            clusters: None,
            backoff_slot_s: p.backoff_slot_s,
            backoff_max_slots: p.backoff_max_slots,
            cca_s: p.cca_s,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub bandwidth_window_s: f64,
    pub latency_bucket_bytes: u32,
    /// Work units per second that count as 100 % CPU.
    pub cpu_capacity_units_per_s: f64,
    pub energy: EnergyCosts,
    pub gas: GasParams,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            bandwidth_window_s: 1.0,
            latency_bucket_bytes: 64,
            cpu_capacity_units_per_s: 200.0,
            energy: EnergyCosts::default(),
            gas: GasParams::default(),
        }
    }
}

/// A fully resolved scenario.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub preset: Preset,
    pub mode: Mode,
    pub node_count: usize,
    pub duration_s: f64,
    pub area_m: f64,
    pub data_rate_bps: f64,
    pub packet_size_range: (u32, u32),
    pub energy_range_j: (f64, f64),
    pub difficulty: u32,
    pub verification_period_s: f64,
    pub gate_semantics: GateSemantics,
    pub mitigation: Toggle,
    pub mobility: bool,
    pub report_interval_s: f64,
    pub attack: Option<AttackConfig>,
    pub tamper: Vec<TamperConfig>,
    pub file_transfer: Vec<FileTransferConfig>,
    pub topology: TopologyConfig,
    pub controllers: ControllerSection,
    pub network: NetworkConfig,
    pub iot: IotConfig,
    pub metrics: MetricsConfig,
}

impl ScenarioConfig {
    /// Defaults of a named preset. `Custom` starts from `P1`.
    pub fn preset(preset: Preset) -> Self {
        let mut c = Self {
            seed: 1,
            preset,
            mode: Mode::Distb,
            node_count: 50,
            duration_s: 500.0,
            area_m: 1000.0,
            data_rate_bps: 12e6,
            packet_size_range: (100, 512),
            energy_range_j: (12.0, 15.0),
            difficulty: crate::ledger::DEFAULT_DIFFICULTY,
            verification_period_s: 5.0,
            gate_semantics: GateSemantics::AsWritten,
            mitigation: Toggle::On,
            mobility: false,
            report_interval_s: 1.0,
            attack: None,
            tamper: Vec::new(),
            file_transfer: Vec::new(),
            topology: TopologyConfig::default(),
            controllers: ControllerSection::default(),
            network: NetworkConfig::default(),
            iot: IotConfig::default(),
            metrics: MetricsConfig::default(),
        };
        if preset == Preset::P2 {
            c.node_count = 100;
            c.area_m = 3000.0;
            c.data_rate_bps = 10e6;
            c.packet_size_range = (128, 1024);
            c.energy_range_j = (10.0, 12.0);
            c.mobility = true;
        }
        c
    }

    pub fn p1() -> Self {
        Self::preset(Preset::P1)
    }

    pub fn p2() -> Self {
        Self::preset(Preset::P2)
    }

    /// Reads and resolves a config file. A relative `topology.file` is
    /// taken relative to the config's directory.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, path.parent())
    }

    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
            path: "<document>".into(),
            message: e.message().to_string(),
        })?;
        let raw: RawConfig = serde_path_to_error::deserialize(table).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().message().to_string(),
        })?;
        raw.resolve(base_dir)
    }

    /// Host names the topology creates.
    pub fn host_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.topology.gateways.len()).map(|i| format!("gw{i}")).collect();
        names.push("cloud".into());
        if let Some(a) = &self.attack {
            names.extend((1..=a.bots).map(|i| format!("bot{i}")));
        }
        names
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.duration_s) {
            return Err(inv("duration_s", "must be positive"));
        }
        if self.node_count == 0 {
            return Err(inv("node_count", "must be at least 1"));
        }
        if !pos(self.area_m) {
            return Err(inv("area_m", "must be positive"));
        }
        if !pos(self.data_rate_bps) {
            return Err(inv("data_rate_bps", "must be positive"));
        }
        let (lo, hi) = self.packet_size_range;
        if lo == 0 || lo > hi {
            return Err(inv("packet_size_range", "need 1 <= low <= high"));
        }
        let (elo, ehi) = self.energy_range_j;
        if !(pos(elo) && ehi.is_finite() && elo <= ehi) {
            return Err(inv("energy_range_j", "need 0 < low <= high"));
        }
        if self.difficulty > MAX_DIFFICULTY {
            return Err(inv("difficulty", format!("at most {MAX_DIFFICULTY}")));
        }
        if !pos(self.verification_period_s) {
            return Err(inv("verification_period_s", "must be positive"));
        }
        if !pos(self.report_interval_s) {
            return Err(inv("report_interval_s", "must be positive"));
        }
        self.validate_topology()?;
        let hosts = self.host_names();
        if let Some(a) = &self.attack {
            let sched = crate::traffic::AttackSchedule {
                start_s: a.start_s,
                rate_curve: a.rate_curve.clone(),
                targets: Vec::new(),
            };
            if !(a.start_s.is_finite() && a.start_s >= 0.0) {
                return Err(inv("attack.start_s", "must be non-negative"));
            }
            if !sched.is_valid() {
                return Err(inv(
                    "attack.rate_curve",
                    "need at least one point, non-negative rates and increasing times",
                ));
            }
            if a.bots == 0 {
                return Err(inv("attack.bots", "must be at least 1"));
            }
            if a.packet_size == Some(0) {
                return Err(inv("attack.packet_size", "must be positive"));
            }
            if !hosts.contains(&a.target) {
                return Err(inv("attack.target", format!("unknown host {:?}", a.target)));
            }
        }
        for (i, t) in self.tamper.iter().enumerate() {
            if !(t.at_s.is_finite() && t.at_s >= 0.0) {
                return Err(inv(format!("tamper[{i}].at_s"), "must be non-negative"));
            }
            if t.switch == 0 || t.switch > self.topology.switches {
                return Err(inv(format!("tamper[{i}].switch"), "unknown switch"));
            }
        }
        for (i, f) in self.file_transfer.iter().enumerate() {
            if !(f.at_s.is_finite() && f.at_s >= 0.0) {
                return Err(inv(format!("file_transfer[{i}].at_s"), "must be non-negative"));
            }
            if f.bytes == 0 {
                return Err(inv(format!("file_transfer[{i}].bytes"), "must be positive"));
            }
            for (name, field) in [(&f.src, "src"), (&f.dst, "dst")] {
                if !hosts.contains(name) {
                    return Err(inv(format!("file_transfer[{i}].{field}"), format!("unknown host {name:?}")));
                }
            }
            if f.src == f.dst {
                return Err(inv(format!("file_transfer[{i}].dst"), "same as src"));
            }
        }
        if self.controllers.count == 0 {
            return Err(inv("controllers.count", "must be at least 1"));
        }
        if !(self.controllers.hop_delay_s.is_finite() && self.controllers.hop_delay_s >= 0.0) {
            return Err(inv("controllers.hop_delay_s", "must be non-negative"));
        }
        let n = &self.network;
        for (v, field) in [
            (n.switch_delay_s, "network.switch_delay_s"),
            (n.control_latency_s, "network.control_latency_s"),
            (n.controller_service_s, "network.controller_service_s"),
            (n.store_latency_s, "network.store_latency_s"),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(inv(field, "must be non-negative"));
            }
        }
        for (v, field) in [
            (n.idle_timeout_s, "network.idle_timeout_s"),
            (n.meter_cap_pps, "network.meter_cap_pps"),
            (n.rtr_interval_s, "network.rtr_interval_s"),
        ] {
            if !pos(v) {
                return Err(inv(field, "must be positive"));
            }
        }
        if n.queue_capacity == 0 {
            return Err(inv("network.queue_capacity", "must be at least 1"));
        }
        if n.controller_queue == 0 {
            return Err(inv("network.controller_queue", "must be at least 1"));
        }
        if n.rtr_size_bytes == 0 {
            return Err(inv("network.rtr_size_bytes", "must be positive"));
        }
        let iot = &self.iot;
        if !(iot.band.is_finite() && iot.band >= 0.0) {
            return Err(inv("iot.band", "must be non-negative"));
        }
        if !(iot.beta_j.is_finite() && iot.beta_j >= 0.0) {
            return Err(inv("iot.beta_j", "must be non-negative"));
        }
        if let Some(k) = iot.clusters {
            if k == 0 || k > self.node_count {
                return Err(inv("iot.clusters", format!("need 1 <= k <= node_count ({})", self.node_count)));
            }
        }
        let m = &self.metrics;
        if !pos(m.bandwidth_window_s) {
            return Err(inv("metrics.bandwidth_window_s", "must be positive"));
        }
        if m.latency_bucket_bytes == 0 {
            return Err(inv("metrics.latency_bucket_bytes", "must be positive"));
        }
        if !pos(m.cpu_capacity_units_per_s) {
            return Err(inv("metrics.cpu_capacity_units_per_s", "must be positive"));
        }
        if m.gas.tx_per_block == 0 {
            return Err(inv("metrics.gas.tx_per_block", "must be positive"));
        }
        if m.gas.difficulty > MAX_DIFFICULTY {
            return Err(inv("metrics.gas.difficulty", format!("at most {MAX_DIFFICULTY}")));
        }
        Ok(())
    }

    fn validate_topology(&self) -> Result<(), ConfigError> {
        let t = &self.topology;
        if t.switches == 0 {
            return Err(inv("topology.switches", "must be at least 1"));
        }
        let ok = |s: u32| (1..=t.switches).contains(&s);
        if t.gateways.is_empty() {
            return Err(inv("topology.gateways", "need at least one gateway"));
        }
        if let Some(i) = t.gateways.iter().position(|s| !ok(*s)) {
            return Err(inv(format!("topology.gateways[{i}]"), "unknown switch"));
        }
        if !ok(t.cloud) {
            return Err(inv("topology.cloud", "unknown switch"));
        }
        if !ok(t.bots) {
            return Err(inv("topology.bots", "unknown switch"));
        }
        let links = t.link_list();
        let mut seen = BTreeSet::new();
        for (i, (a, b)) in links.iter().enumerate() {
            if !ok(*a) || !ok(*b) || a == b {
                return Err(inv(format!("topology.links[{i}]"), "endpoints must be two distinct known switches"));
            }
            if !seen.insert((*a.min(b), *a.max(b))) {
                return Err(inv(format!("topology.links[{i}]"), "duplicate link"));
            }
        }
        // connectivity
        let mut reached = BTreeSet::from([1u32]);
        let mut queue = VecDeque::from([1u32]);
        while let Some(s) = queue.pop_front() {
            for (a, b) in &links {
                let other = if *a == s {
                    *b
                } else if *b == s {
                    *a
                } else {
                    continue;
                };
                if reached.insert(other) {
                    queue.push_back(other);
                }
            }
        }
        if reached.len() != t.switches as usize {
            return Err(inv("topology.links", "switch graph is not connected"));
        }
        Ok(())
    }
}

/// On-disk form. Preset-dependent fields are optional and fall back to the
/// preset; `custom` requires them.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema: u32,
    seed: Option<u64>,
    preset: Option<Preset>,
    mode: Option<Mode>,
    node_count: Option<usize>,
    duration_s: Option<f64>,
    area_m: Option<f64>,
    data_rate_bps: Option<f64>,
    packet_size_range: Option<(u32, u32)>,
    energy_range_j: Option<(f64, f64)>,
    mobility: Option<bool>,
    difficulty: Option<u32>,
    verification_period_s: Option<f64>,
    gate_semantics: Option<GateSemantics>,
    mitigation: Option<Toggle>,
    report_interval_s: Option<f64>,
    attack: Option<AttackConfig>,
    #[serde(default)]
    tamper: Vec<TamperConfig>,
    #[serde(default)]
    file_transfer: Vec<FileTransferConfig>,
    topology: Option<TopologyConfig>,
    #[serde(default)]
    controllers: ControllerSection,
    #[serde(default)]
    network: NetworkConfig,
    #[serde(default)]
    iot: IotConfig,
    #[serde(default)]
    metrics: MetricsConfig,
}

impl RawConfig {
    fn resolve(self, base_dir: Option<&Path>) -> Result<ScenarioConfig, ConfigError> {
        if self.schema != SCHEMA_VERSION {
            return Err(ConfigError::invalid(
                "schema",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema),
            ));
        }
        let preset = self.preset.unwrap_or(Preset::P1);
        if preset == Preset::Custom {
            let required = [
                ("node_count", self.node_count.is_none()),
                ("duration_s", self.duration_s.is_none()),
                ("area_m", self.area_m.is_none()),
                ("data_rate_bps", self.data_rate_bps.is_none()),
                ("packet_size_range", self.packet_size_range.is_none()),
                ("energy_range_j", self.energy_range_j.is_none()),
            ];
            if let Some((field, _)) = required.iter().find(|(_, missing)| *missing) {
                return Err(ConfigError::invalid(*field, "required with preset = \"custom\""));
            }
        }
        let mut c = ScenarioConfig::preset(preset);
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        take!(
            seed,
            mode,
            node_count,
            duration_s,
            area_m,
            data_rate_bps,
            packet_size_range,
            energy_range_j,
            mobility,
            difficulty,
            verification_period_s,
            gate_semantics,
            mitigation,
            report_interval_s
        );
        c.attack = self.attack;
        c.tamper = self.tamper;
        c.file_transfer = self.file_transfer;
        c.controllers = self.controllers;
        c.network = self.network;
        c.iot = self.iot;
        c.metrics = self.metrics;
        if let Some(t) = self.topology {
            c.topology = match &t.file {
                None => t,
                Some(file) => {
                    let path = match base_dir {
                        Some(d) if file.is_relative() => d.join(file),
                        _ => file.clone(),
                    };
                    let text = fs::read_to_string(&path).map_err(|source| ConfigError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
                        path: "topology.file".into(),
                        message: e.message().to_string(),
                    })?;
                    let mut loaded: TopologyConfig =
                        serde_path_to_error::deserialize(table).map_err(|e| ConfigError::Parse {
                            path: format!("topology.file:{}", e.path()),
                            message: e.inner().message().to_string(),
                        })?;
                    if loaded.file.is_some() {
                        return Err(ConfigError::invalid("topology.file", "nested topology files are not supported"));
                    }
                    loaded.file = None;
                    loaded
                }
            };
        }
        c.validate()?;
        Ok(c)
    }
}

fn inv(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::invalid(field, reason)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_is_p1() {
        let c = ScenarioConfig::from_toml_str("schema = 1\n", None).unwrap();
        assert_eq!(c, ScenarioConfig::p1());
    }

    #[test]
    fn presets_differ() {
        let p2 = ScenarioConfig::from_toml_str("schema = 1\npreset = \"p2\"\nseed = 9\n", None).unwrap();
        assert_eq!(p2.area_m, 3000.0);
        assert_eq!(p2.packet_size_range, (128, 1024));
        assert_eq!(p2.seed, 9);
        assert!(p2.mobility);
    }

    #[test]
    fn zero_duration_names_the_field() {
        let e = ScenarioConfig::from_toml_str("schema = 1\nduration_s = 0.0\n", None).unwrap_err();
        assert_eq!(e.field(), Some("duration_s"));
    }

    #[test]
    fn type_errors_carry_paths() {
        let e = ScenarioConfig::from_toml_str("schema = 1\n[network]\nqueue_capacity = \"big\"\n", None).unwrap_err();
        assert_eq!(e.field(), Some("network.queue_capacity"));
        let e = ScenarioConfig::from_toml_str("schema = 1\n[[tamper]]\nat_s = 1.0\nswitch = 9\n", None).unwrap_err();
        assert_eq!(e.field(), Some("tamper[0].switch"));
    }

    #[test]
    fn unknown_keys_and_schema() {
        assert!(ScenarioConfig::from_toml_str("schema = 1\nnodes = 3\n", None).is_err());
        let e = ScenarioConfig::from_toml_str("schema = 2\n", None).unwrap_err();
        assert_eq!(e.field(), Some("schema"));
        let e = ScenarioConfig::from_toml_str("seed = 1\n", None).unwrap_err();
        assert!(matches!(e, ConfigError::Parse { .. }));
    }

    #[test]
    fn custom_requires_preset_fields() {
        let e = ScenarioConfig::from_toml_str("schema = 1\npreset = \"custom\"\nnode_count = 5\n", None).unwrap_err();
        assert_eq!(e.field(), Some("duration_s"));
    }

    #[test]
    fn disconnected_topology_rejected() {
        let doc = "schema = 1\n[topology]\nswitches = 4\nlinks = [[1, 2], [3, 4]]\n";
        let e = ScenarioConfig::from_toml_str(doc, None).unwrap_err();
        assert_eq!(e.field(), Some("topology.links"));
    }

    #[test]
    fn topology_from_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("topo.toml"), "switches = 3\ngateways = [1]\ncloud = 3\nbots = 2\n").unwrap();
        fs::write(dir.path().join("run.toml"), "schema = 1\n[topology]\nfile = \"topo.toml\"\n").unwrap();
        let c = ScenarioConfig::from_file(&dir.path().join("run.toml")).unwrap();
        assert_eq!(c.topology.switches, 3);
        assert_eq!(c.topology.link_list(), vec![(1, 2), (2, 3)]);
        assert_eq!(c.topology.file, None);
    }

    #[test]
    fn attack_section() {
        let doc = "schema = 1\n[attack]\nstart_s = 10.0\nrate_curve = [[0.0, 190.0], [100.0, 1400.0]]\n";
        let c = ScenarioConfig::from_toml_str(doc, None).unwrap();
        assert_eq!(c.attack.unwrap().bots, 8);
        let bad = "schema = 1\n[attack]\nstart_s = 10.0\nrate_curve = [[5.0, 190.0], [1.0, 1400.0]]\n";
        let e = ScenarioConfig::from_toml_str(bad, None).unwrap_err();
        assert_eq!(e.field(), Some("attack.rate_curve"));
    }
}
