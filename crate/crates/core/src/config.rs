//! Scenario files.
//!
//! A scenario is a TOML document. Every tuning key may be omitted; omitted
//! keys take the defaults below and are listed in [`ScenarioConfig::defaulted`]
//! so the run header can report them.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::{BandMode, Thresholds};
use crate::energy::{Energy, EnergyModel};
use crate::error::ConfigError;
use crate::protocol::{SensingKind, SleepSchedule};
use crate::sim::attacker::{AttackKind, AttackerModel, Compromise, CompromiseKind};
use crate::time::{SimTime, TICKS_PER_UNIT};
use crate::topology::{ElectionParams, NodeCategory, NodeId, NodeSpec, Position};

/// Keys accepted by `--vary`, fully qualified.
pub const KNOWN_KEYS: &[&str] = &[
    "radio_range",
    "mu",
    "k_mn",
    "z_zo",
    "detection_enabled",
    "band_mode",
    "thresholds.th_token",
    "thresholds.th_min",
    "thresholds.th_max",
    "thresholds.th_energy",
    "thresholds.warning_block_threshold",
    "thresholds.t_interval",
    "thresholds.false_detection_threshold",
    "thresholds.ticket_rate_threshold",
    "thresholds.flow_factor",
    "thresholds.lifetime_threshold",
    "duty_cycle.period",
    "duty_cycle.sleep_start",
    "duty_cycle.sleep_end",
    "duty_cycle.wake_hold",
    "energy.cost_tx",
    "energy.cost_rx",
    "energy.cost_sense",
    "energy.cost_detect",
    "energy.cost_idle_per_time",
    "energy.cost_sleep_per_time",
    "energy.initial_energy_simple",
    "energy.initial_energy_intelligent",
    "energy.initial_energy_base",
    "sim.duration",
    "sim.seed",
    "sim.reconfigure_interval",
    "sim.hop_latency",
    "sim.timer_t",
    "sim.query_offset",
    "sim.query_period",
    "attacker.rate",
    "attacker.start",
    "attacker.stop",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeRef {
    Id(u32),
    Name(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    radio_range: Option<f64>,
    mu: Option<f64>,
    k_mn: Option<usize>,
    z_zo: Option<usize>,
    detection_enabled: Option<bool>,
    band_mode: Option<BandMode>,
    nodes: Vec<RawNode>,
    #[serde(default)]
    thresholds: RawThresholds,
    #[serde(default)]
    duty_cycle: RawDuty,
    #[serde(default)]
    energy: RawEnergy,
    #[serde(default)]
    sim: RawSim,
    attacker: Option<RawAttacker>,
    #[serde(default)]
    compromise: Vec<RawCompromise>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: u32,
    name: Option<String>,
    x: f64,
    y: f64,
    category: Option<NodeCategory>,
    initial_energy: Option<f64>,
    join_at: Option<f64>,
    sensing: Option<SensingKind>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThresholds {
    th_token: Option<u32>,
    th_min: Option<u32>,
    th_max: Option<u32>,
    th_energy: Option<f64>,
    warning_block_threshold: Option<f64>,
    t_interval: Option<f64>,
    false_detection_threshold: Option<u32>,
    ticket_rate_threshold: Option<f64>,
    flow_factor: Option<f64>,
    lifetime_threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDuty {
    period: Option<f64>,
    sleep_start: Option<f64>,
    sleep_end: Option<f64>,
    wake_hold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnergy {
    cost_tx: Option<f64>,
    cost_rx: Option<f64>,
    cost_sense: Option<f64>,
    cost_detect: Option<f64>,
    cost_idle_per_time: Option<f64>,
    cost_sleep_per_time: Option<f64>,
    initial_energy_simple: Option<f64>,
    initial_energy_intelligent: Option<f64>,
    initial_energy_base: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    duration: Option<f64>,
    seed: Option<u64>,
    reconfigure_interval: Option<f64>,
    hop_latency: Option<f64>,
    timer_t: Option<f64>,
    query_offset: Option<f64>,
    query_period: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAttacker {
    #[serde(default)]
    kind: AttackKind,
    targets: Vec<NodeRef>,
    rate: f64,
    start: Option<f64>,
    stop: Option<f64>,
    source_id: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCompromise {
    node: NodeRef,
    kind: CompromiseKind,
    #[serde(default)]
    from: f64,
    inflate: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub id: NodeId,
    pub name: Option<String>,
    pub x: f64,
    pub y: f64,
    pub category: Option<NodeCategory>,
    pub initial_energy: Option<Energy>,
    pub join_at: SimTime,
    pub sensing: Option<SensingKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub duration: SimTime,
    pub seed: Option<u64>,
    pub reconfigure_interval: SimTime,
    pub hop_latency: SimTime,
    pub timer_t: SimTime,
    /// Offset of the gateway's per-zone query inside each query period.
    pub query_offset: SimTime,
    pub query_period: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub nodes: Vec<NodeConfig>,
    pub radio_range: f64,
    pub mu: f64,
    pub k_mn: usize,
    pub z_zo: usize,
    pub thresholds: Thresholds,
    pub duty_cycle: SleepSchedule,
    /// How long an unscheduled wake-up keeps a sensing node awake.
    pub wake_hold: SimTime,
    pub energy: EnergyModel,
    pub attacker: Option<AttackerModel>,
    pub compromises: Vec<Compromise>,
    pub sim: SimParams,
    pub detection_enabled: bool,
    pub band_mode: BandMode,
    /// Keys that were absent from the file and took their default.
    pub defaulted: Vec<String>,
}

struct Defaults<'a> {
    section: &'a str,
    out: &'a mut Vec<String>,
}

impl Defaults<'_> {
    fn or<T>(&mut self, value: Option<T>, key: &str, default: T) -> T {
        match value {
            Some(v) => v,
            None => {
                if self.section.is_empty() {
                    self.out.push(key.to_string());
                } else {
                    self.out.push(format!("{}.{}", self.section, key));
                }
                default
            }
        }
    }
}

fn time_units(field: &str, v: f64) -> Result<SimTime, ConfigError> {
    if !v.is_finite() || v < 0.0 {
        return Err(ConfigError::invalid(field, "must be a finite non-negative time"));
    }
    Ok(SimTime::from_units(v))
}

fn energy_units(field: &str, v: f64) -> Result<Energy, ConfigError> {
    if !v.is_finite() || v < 0.0 {
        return Err(ConfigError::invalid(field, "must be a finite non-negative energy"));
    }
    Ok(Energy::from_units(v))
}

fn lookup(nodes: &[NodeConfig], r: &NodeRef, field: &str) -> Result<NodeId, ConfigError> {
    let found = match r {
        NodeRef::Id(id) => nodes.iter().find(|n| n.id.0 == *id),
        NodeRef::Name(name) => nodes.iter().find(|n| n.name.as_deref() == Some(name.as_str())),
    };
    found
        .map(|n| n.id)
        .ok_or_else(|| ConfigError::invalid(field, format!("unknown node {r:?}")))
}

impl ScenarioConfig {
    /// Parsing straight from text keeps line and column in error messages.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::from_raw(raw)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn from_raw(raw: RawScenario) -> Result<Self, ConfigError> {
        let mut defaulted = Vec::new();
        let mut top = Defaults { section: "", out: &mut defaulted };
        let name = raw.name.unwrap_or_else(|| "scenario".to_string());
        let radio_range = top.or(raw.radio_range, "radio_range", 30.0);
        let mu = top.or(raw.mu, "mu", 2.0);
        let k_mn = top.or(raw.k_mn, "k_mn", 6);
        let z_zo = top.or(raw.z_zo, "z_zo", 2);
        let detection_enabled = top.or(raw.detection_enabled, "detection_enabled", true);
        let band_mode = top.or(raw.band_mode, "band_mode", BandMode::Outside);

        if raw.nodes.is_empty() {
            return Err(ConfigError::NoNodes);
        }
        if !(radio_range.is_finite() && radio_range > 0.0) {
            return Err(ConfigError::invalid("radio_range", "must be positive"));
        }
        if !(mu.is_finite() && mu > 1.0) {
            return Err(ConfigError::invalid("mu", "must exceed 1"));
        }
        if k_mn == 0 {
            return Err(ConfigError::invalid("k_mn", "must be at least 1"));
        }
        if z_zo == 0 {
            return Err(ConfigError::invalid("z_zo", "must be at least 1"));
        }

        let mut nodes = Vec::with_capacity(raw.nodes.len());
        let mut seen = BTreeSet::new();
        for (i, n) in raw.nodes.iter().enumerate() {
            let field = format!("nodes[{i}]");
            if !seen.insert(n.id) {
                return Err(ConfigError::DuplicateNode(NodeId(n.id)));
            }
            if !(n.x.is_finite() && n.y.is_finite()) {
                return Err(ConfigError::invalid(field, "coordinates must be finite"));
            }
            let initial_energy = match n.initial_energy {
                Some(e) if !(e.is_finite() && e > 0.0) => {
                    return Err(ConfigError::invalid(format!("{field}.initial_energy"), "must be positive"));
                }
                Some(e) => Some(Energy::from_units(e)),
                None => None,
            };
            if n.category.is_none() && initial_energy.is_none() {
                return Err(ConfigError::invalid(field, "needs a category or an initial_energy"));
            }
            nodes.push(NodeConfig {
                id: NodeId(n.id),
                name: n.name.clone(),
                x: n.x,
                y: n.y,
                category: n.category,
                initial_energy,
                join_at: time_units(&format!("{field}.join_at"), n.join_at.unwrap_or(0.0))?,
                sensing: n.sensing,
            });
        }
        if !nodes.iter().any(|n| n.category == Some(NodeCategory::Base)) {
            return Err(ConfigError::NoGateway);
        }

        let th = raw.thresholds;
        let mut d = Defaults { section: "thresholds", out: &mut defaulted };
        let thresholds = Thresholds {
            th_token: d.or(th.th_token, "th_token", 3),
            th_min: d.or(th.th_min, "th_min", 1),
            th_max: d.or(th.th_max, "th_max", 3),
            th_energy: energy_units("thresholds.th_energy", d.or(th.th_energy, "th_energy", 995.0))?,
            warning_block_threshold: d.or(th.warning_block_threshold, "warning_block_threshold", 3.0),
            t_interval: time_units("thresholds.t_interval", d.or(th.t_interval, "t_interval", 100.0))?,
            false_detection_threshold: d.or(th.false_detection_threshold, "false_detection_threshold", 8),
            ticket_rate_threshold: d.or(th.ticket_rate_threshold, "ticket_rate_threshold", 0.1),
            flow_factor: d.or(th.flow_factor, "flow_factor", 3.0),
            lifetime_threshold: d.or(th.lifetime_threshold, "lifetime_threshold", 0.5),
        };
        thresholds
            .validate()
            .map_err(|reason| ConfigError::invalid("thresholds", reason))?;

        let dc = raw.duty_cycle;
        let mut d = Defaults { section: "duty_cycle", out: &mut defaulted };
        let duty_cycle = SleepSchedule {
            sleep_start: time_units("duty_cycle.sleep_start", d.or(dc.sleep_start, "sleep_start", 0.0))?,
            sleep_end: time_units("duty_cycle.sleep_end", d.or(dc.sleep_end, "sleep_end", 80.0))?,
            period: time_units("duty_cycle.period", d.or(dc.period, "period", 100.0))?,
        };
        if !duty_cycle.is_valid() {
            return Err(ConfigError::invalid(
                "duty_cycle",
                "need sleep_start < sleep_end <= sleep_start + period",
            ));
        }
        let wake_hold = time_units("duty_cycle.wake_hold", d.or(dc.wake_hold, "wake_hold", 1.0))?;

        let en = raw.energy;
        let mut d = Defaults { section: "energy", out: &mut defaulted };
        let per_tick = |field: &str, v: f64| -> Result<Energy, ConfigError> {
            if !v.is_finite() || v < 0.0 {
                return Err(ConfigError::invalid(field, "must be non-negative"));
            }
            Ok(Energy::from_units(v / TICKS_PER_UNIT as f64))
        };
        let simple = d.or(en.initial_energy_simple, "initial_energy_simple", 1000.0);
        let energy = EnergyModel {
            cost_tx: energy_units("energy.cost_tx", d.or(en.cost_tx, "cost_tx", 3.0))?,
            cost_rx: energy_units("energy.cost_rx", d.or(en.cost_rx, "cost_rx", 2.0))?,
            cost_sense: energy_units("energy.cost_sense", d.or(en.cost_sense, "cost_sense", 1.0))?,
            cost_detect: energy_units("energy.cost_detect", d.or(en.cost_detect, "cost_detect", 1.0))?,
            idle_per_tick: per_tick(
                "energy.cost_idle_per_time",
                d.or(en.cost_idle_per_time, "cost_idle_per_time", 0.1),
            )?,
            sleep_per_tick: per_tick(
                "energy.cost_sleep_per_time",
                d.or(en.cost_sleep_per_time, "cost_sleep_per_time", 0.01),
            )?,
            initial_simple: energy_units("energy.initial_energy_simple", simple)?,
            initial_intelligent: energy_units(
                "energy.initial_energy_intelligent",
                d.or(en.initial_energy_intelligent, "initial_energy_intelligent", mu * simple),
            )?,
            initial_base: energy_units(
                "energy.initial_energy_base",
                d.or(en.initial_energy_base, "initial_energy_base", mu * simple),
            )?,
        };
        if energy.sleep_per_tick >= energy.idle_per_tick {
            return Err(ConfigError::invalid(
                "energy.cost_sleep_per_time",
                "must be below cost_idle_per_time",
            ));
        }
        if energy.initial_simple == Energy::ZERO {
            return Err(ConfigError::invalid("energy.initial_energy_simple", "must be positive"));
        }

        let s = raw.sim;
        let mut d = Defaults { section: "sim", out: &mut defaulted };
        let duration = time_units("sim.duration", d.or(s.duration, "duration", 1000.0))?;
        if duration == SimTime::ZERO {
            return Err(ConfigError::invalid("sim.duration", "must be positive"));
        }
        let hop_latency = time_units("sim.hop_latency", d.or(s.hop_latency, "hop_latency", 1.0))?;
        if hop_latency == SimTime::ZERO {
            return Err(ConfigError::invalid("sim.hop_latency", "must be positive"));
        }
        let reconfigure_interval = match s.reconfigure_interval {
            Some(v) => time_units("sim.reconfigure_interval", v)?,
            None => {
                d.out.push("sim.reconfigure_interval".into());
                SimTime(duration.0 / 4)
            }
        };
        let timer_t = match s.timer_t {
            Some(v) => time_units("sim.timer_t", v)?,
            None => {
                d.out.push("sim.timer_t".into());
                SimTime(hop_latency.0 * 2)
            }
        };
        let query_period = match s.query_period {
            Some(v) => time_units("sim.query_period", v)?,
            None => {
                d.out.push("sim.query_period".into());
                duty_cycle.period
            }
        };
        if query_period == SimTime::ZERO {
            return Err(ConfigError::invalid("sim.query_period", "must be positive"));
        }
        let query_offset = time_units("sim.query_offset", d.or(s.query_offset, "query_offset", 85.0))?;
        if query_offset >= query_period {
            return Err(ConfigError::invalid("sim.query_offset", "must lie inside the query period"));
        }
        let sim = SimParams {
            duration,
            seed: s.seed,
            reconfigure_interval,
            hop_latency,
            timer_t,
            query_offset,
            query_period,
        };

        let attacker = match raw.attacker {
            None => None,
            Some(a) => {
                if !(a.rate.is_finite() && a.rate >= 0.0) {
                    return Err(ConfigError::invalid("attacker.rate", "must be a non-negative number"));
                }
                let targets = a
                    .targets
                    .iter()
                    .map(|r| lookup(&nodes, r, "attacker.targets"))
                    .collect::<Result<Vec<_>, _>>()?;
                let start = time_units("attacker.start", a.start.unwrap_or(0.0))?;
                let stop = match a.stop {
                    Some(v) => time_units("attacker.stop", v)?,
                    None => duration,
                };
                if stop < start {
                    return Err(ConfigError::invalid("attacker.stop", "must not precede start"));
                }
                let max_id = nodes.iter().map(|n| n.id.0).max().unwrap_or(0);
                let source = NodeId(a.source_id.unwrap_or(max_id + 100));
                if nodes.iter().any(|n| n.id == source) {
                    return Err(ConfigError::invalid("attacker.source_id", "collides with a deployed node"));
                }
                Some(AttackerModel {
                    kind: a.kind,
                    targets,
                    rate: a.rate,
                    start,
                    stop,
                    source,
                })
            }
        };

        let compromises = raw
            .compromise
            .iter()
            .enumerate()
            .map(|(i, c)| {
                Ok(Compromise {
                    node: lookup(&nodes, &c.node, &format!("compromise[{i}].node"))?,
                    kind: c.kind,
                    from: time_units(&format!("compromise[{i}].from"), c.from)?,
                    inflate: c.inflate.unwrap_or(10),
                })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;

        Ok(ScenarioConfig {
            name,
            nodes,
            radio_range,
            mu,
            k_mn,
            z_zo,
            thresholds,
            duty_cycle,
            wake_hold,
            energy,
            attacker,
            compromises,
            sim,
            detection_enabled,
            band_mode,
            defaulted,
        })
    }

    pub fn node_specs(&self) -> Vec<NodeSpec> {
        self.nodes
            .iter()
            .map(|n| NodeSpec {
                id: n.id,
                name: n.name.clone(),
                pos: Position { x: n.x, y: n.y },
                category: n.category,
                initial_energy: n.initial_energy,
                join_at: n.join_at,
                sensing: n.sensing,
            })
            .collect()
    }

    pub fn election_params(&self) -> ElectionParams {
        ElectionParams {
            k_mn: self.k_mn,
            z_zo: self.z_zo,
            mu: self.mu,
            timer_t: self.sim.timer_t,
            hop_latency: self.sim.hop_latency,
        }
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.sim
            .seed
            .ok_or_else(|| ConfigError::invalid("sim.seed", "a seed is required (set it in the file or pass --seed)"))
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.nodes
            .iter()
            .find(|n| n.name.as_deref() == Some(name))
            .map(|n| n.id)
    }
}

/// A parsed but unresolved scenario document, used to apply overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDoc {
    table: toml::Table,
}

impl ScenarioDoc {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Ok(ScenarioDoc { table })
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn resolve(&self) -> Result<ScenarioConfig, ConfigError> {
        let raw: RawScenario = toml::Value::Table(self.table.clone())
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        ScenarioConfig::from_raw(raw)
    }

    /// Sets `key` (short or dotted) to `value`, parsed as a TOML scalar.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let full = resolve_key(key)?;
        let parsed = parse_scalar(value);
        let (section, field) = match full.split_once('.') {
            Some((s, f)) => (Some(s), f),
            None => (None, full.as_str()),
        };
        let target = match section {
            None => &mut self.table,
            Some(s) => {
                if s == "attacker" && !self.table.contains_key("attacker") {
                    return Err(ConfigError::invalid(full.clone(), "scenario has no attacker section"));
                }
                self.table
                    .entry(s.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| ConfigError::invalid(s, "is not a table"))?
            }
        };
        target.insert(field.to_string(), parsed);
        Ok(())
    }

    pub fn with(&self, key: &str, value: &str) -> Result<Self, ConfigError> {
        let mut doc = self.clone();
        doc.set(key, value)?;
        Ok(doc)
    }
}

/// Maps a short key such as `th_token` to its qualified form.
pub fn resolve_key(key: &str) -> Result<String, ConfigError> {
    if KNOWN_KEYS.contains(&key) {
        return Ok(key.to_string());
    }
    let mut hits = KNOWN_KEYS
        .iter()
        .filter(|k| k.rsplit('.').next() == Some(key));
    match (hits.next(), hits.next()) {
        (Some(k), None) => Ok(k.to_string()),
        _ => Err(ConfigError::UnknownKey(key.to_string())),
    }
}

fn parse_scalar(v: &str) -> toml::Value {
    let v = v.trim();
    if let Ok(b) = v.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = v.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    match v {
        "inf" | "+inf" => return toml::Value::Float(f64::INFINITY),
        _ => {}
    }
    if let Ok(f) = v.parse::<f64>() {
        return toml::Value::Float(f);
    }
    toml::Value::String(v.trim_matches('"').to_string())
}

/// Splits `key=v1,v2,...`.
pub fn parse_vary(spec: &str) -> Result<(String, Vec<String>), ConfigError> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::invalid("--vary", "expected key=v1,v2,..."))?;
    let key = resolve_key(key.trim())?;
    let values: Vec<String> = values
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if values.is_empty() {
        return Err(ConfigError::invalid("--vary", "no values given"));
    }
    Ok((key, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [[nodes]]
        id = 1
        x = 0.0
        y = 0.0
        category = "base"

        [[nodes]]
        id = 2
        x = 10.0
        y = 0.0
        category = "simple"
    "#;

    #[test]
    fn defaults_are_applied_and_listed() {
        let c = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.thresholds.th_token, 3);
        assert!(c.defaulted.iter().any(|k| k == "thresholds.th_token"));
        assert_eq!(c.energy.initial_intelligent, Energy::from_units(2000.0));
        assert_eq!(c.sim.reconfigure_interval, SimTime::from_units(250.0));
        assert_eq!(c.sim.timer_t, SimTime::from_units(2.0));
        assert_eq!(c.energy.idle_per_tick, Energy(100));
        assert!(c.seed().is_err());
    }

    #[test]
    fn explicit_key_is_not_listed_as_defaulted() {
        let text = format!("{MINIMAL}\n[thresholds]\nth_token = 5\n");
        let c = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(c.thresholds.th_token, 5);
        assert!(!c.defaulted.iter().any(|k| k == "thresholds.th_token"));
    }

    #[test]
    fn unknown_field_is_rejected_with_position() {
        let text = format!("{MINIMAL}\n[thresholds]\nth_tokn = 5\n");
        match ScenarioConfig::from_toml_str(&text) {
            Err(ConfigError::Parse(msg)) => assert!(msg.contains("th_tokn"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = MINIMAL.replace("id = 2", "id = 1");
        assert!(matches!(
            ScenarioConfig::from_toml_str(&text),
            Err(ConfigError::DuplicateNode(NodeId(1)))
        ));
    }

    #[test]
    fn inverted_band_rejected() {
        let text = format!("{MINIMAL}\n[thresholds]\nth_min = 4\nth_max = 3\n");
        assert!(matches!(
            ScenarioConfig::from_toml_str(&text),
            Err(ConfigError::Invalid { .. })
        ));
    }

    #[test]
    fn vary_keys() {
        assert_eq!(resolve_key("th_token").unwrap(), "thresholds.th_token");
        assert_eq!(resolve_key("sim.seed").unwrap(), "sim.seed");
        assert!(matches!(resolve_key("bogus"), Err(ConfigError::UnknownKey(_))));
        let (k, v) = parse_vary("detection_enabled=true,false").unwrap();
        assert_eq!(k, "detection_enabled");
        assert_eq!(v, vec!["true", "false"]);

        let doc = ScenarioDoc::parse(MINIMAL).unwrap();
        let c = doc.with("th_token", "5").unwrap().resolve().unwrap();
        assert_eq!(c.thresholds.th_token, 5);
        let c = doc.with("warning_block_threshold", "inf").unwrap().resolve().unwrap();
        assert!(c.thresholds.warning_block_threshold.is_infinite());
        let c = doc.with("detection_enabled", "false").unwrap().resolve().unwrap();
        assert!(!c.detection_enabled);
        assert!(doc.with("attacker.rate", "2").is_err());
    }
}
