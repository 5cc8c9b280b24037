//! Browser bindings. Every entry point returns a JSON string so the page can
//! stay plain JavaScript.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use segnet_core::casestudy::{check_trace, Step};
use segnet_core::config::ScenarioConfig;
use segnet_core::fixtures;
use segnet_core::replay::replay;
use segnet_core::sim::kernel::{run_with_seed, RunResult};
use segnet_core::trace::{Justification, TraceEvent};

#[derive(Serialize)]
struct NodeView {
    id: u32,
    name: String,
    x: f64,
    y: f64,
    role: String,
    disposition: String,
    energy: f64,
    initial: f64,
}

#[derive(Serialize)]
struct BlockView {
    time: f64,
    node: String,
    by: String,
    rule: &'static str,
}

#[derive(Serialize)]
struct RunView {
    seed: u64,
    radio_range: f64,
    nodes: Vec<NodeView>,
    blocks: Vec<BlockView>,
    metrics: Vec<(&'static str, String)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<Vec<Step>>,
}

#[derive(Serialize)]
struct Failure {
    error: String,
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}"))
}

fn fail(e: impl ToString) -> String {
    to_json(&Failure { error: e.to_string() })
}

fn view(cfg: &ScenarioConfig, res: &RunResult) -> RunView {
    let name = |id| res.network.name(id);
    let blocks = res
        .trace
        .iter()
        .filter_map(|r| match &r.event {
            TraceEvent::Block { node, by, justification } => Some(BlockView {
                time: r.time,
                node: name(*node),
                by: name(*by),
                rule: match justification {
                    Justification::WarningThreshold { .. } => "warning threshold",
                    Justification::ZoWatchdog { .. } => "zone owner watchdog",
                    Justification::MnWatchdog { .. } => "monitor watchdog",
                    Justification::CoWatchdog { .. } => "cluster owner watchdog",
                },
            }),
            _ => None,
        })
        .collect();
    let nodes = res
        .network
        .nodes()
        .map(|n| NodeView {
            id: n.id.0,
            name: n.name.clone(),
            x: n.pos.x,
            y: n.pos.y,
            role: n.desig.to_string(),
            disposition: format!("{:?}", n.disposition).to_lowercase(),
            energy: n.energy.as_units(),
            initial: n.initial_energy.as_units(),
        })
        .collect();
    RunView {
        seed: res.seed,
        radio_range: cfg.radio_range,
        nodes,
        blocks,
        metrics: res.metrics.rows(),
        steps: None,
    }
}

fn run_fixture(name: &str, seed: Option<u64>, detection: bool, tweak: impl FnOnce(&mut ScenarioConfig)) -> String {
    let mut cfg = match fixtures::load(name) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    cfg.detection_enabled = detection;
    tweak(&mut cfg);
    let seed = match seed.map_or_else(|| cfg.seed(), Ok) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    match run_with_seed(&cfg, seed) {
        Ok(res) => to_json(&view(&cfg, &res)),
        Err(e) => fail(e),
    }
}

/// Names of the bundled scenarios.
#[wasm_bindgen]
pub fn fixture_names() -> String {
    to_json(&fixtures::ALL.iter().map(|(n, _)| *n).collect::<Vec<_>>())
}

/// Runs the fourteen-node walkthrough. A non-finite or negative
/// `block_threshold` keeps the scenario's own value.
#[wasm_bindgen]
pub fn case_study(detection: bool, with_attacker: bool, block_threshold: f64) -> String {
    let mut cfg = match fixtures::load("case_study") {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    cfg.detection_enabled = detection;
    if !with_attacker {
        cfg.attacker = None;
    }
    if block_threshold >= 0.0 {
        cfg.thresholds.warning_block_threshold = block_threshold;
    }
    let seed = match cfg.seed() {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    match run_with_seed(&cfg, seed) {
        Ok(res) => {
            let mut v = view(&cfg, &res);
            v.steps = Some(check_trace(&res.trace));
            to_json(&v)
        }
        Err(e) => fail(e),
    }
}

/// Runs a bundled scenario with an explicit seed.
#[wasm_bindgen]
pub fn run_scenario(name: &str, seed: u64, detection: bool) -> String {
    run_fixture(name, Some(seed), detection, |_| {})
}

#[derive(Serialize)]
struct ReplayView {
    records: usize,
    checked: usize,
    flipped: usize,
    divergences: Vec<String>,
}

/// Runs a bundled scenario, inverts the first `flips` monitor verdicts in
/// its trace and replays the result.
#[wasm_bindgen]
pub fn tamper_and_replay(name: &str, flips: u32) -> String {
    let cfg = match fixtures::load(name) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let mut trace = match cfg.seed().map_err(|e| e.to_string()).and_then(|s| {
        run_with_seed(&cfg, s).map_err(|e| e.to_string())
    }) {
        Ok(r) => r.trace,
        Err(e) => return fail(e),
    };
    let mut flipped = 0;
    for r in trace.iter_mut() {
        if flipped as u32 >= flips {
            break;
        }
        if let TraceEvent::Observe { ticketed, compromised: false, .. } = &mut r.event {
            *ticketed = !*ticketed;
            flipped += 1;
        }
    }
    match replay(&trace, &cfg) {
        Ok(rep) => to_json(&ReplayView {
            records: rep.records,
            checked: rep.checked,
            flipped,
            divergences: rep
                .divergences
                .iter()
                .map(|d| format!("record {}: {} {}", d.seq, d.kind, d.detail))
                .collect(),
        }),
        Err(e) => fail(e),
    }
}
