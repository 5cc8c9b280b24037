//! Step-by-step walkthrough check for the fourteen-node case study.
//!
//! Roles are looked up by node name in the run header: A is the flooded
//! sensing node, E its zone owner, G and H the monitors that hear E, M the
//! cluster owner and N the gateway. D, F, I and J carry the honest packet.

use std::collections::BTreeMap;
use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::detection::Action;
use crate::protocol::{MessageKind, PacketId, PacketStatus};
use crate::sim::kernel::{run, RunResult, SimError};
use crate::topology::{Disposition, NodeId};
use crate::trace::{Justification, TraceEvent, TraceRecord};

pub const RUNTIME_BUDGET: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum StepOutcome {
    Pass { seq: Option<u64> },
    Fail { reason: String },
    NotReached,
    NoAttack,
}

impl StepOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            StepOutcome::Pass { .. } => "PASS",
            StepOutcome::Fail { .. } => "FAIL",
            StepOutcome::NotReached => "NOT-REACHED",
            StepOutcome::NoAttack => "NO-ATTACK",
        }
    }

    /// NoAttack counts as success: the step does not apply.
    pub fn ok(&self) -> bool {
        matches!(self, StepOutcome::Pass { .. } | StepOutcome::NoAttack)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub name: String,
    pub outcome: StepOutcome,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<12} {}", self.outcome.label(), self.name)?;
        match &self.outcome {
            StepOutcome::Pass { seq: Some(s) } => write!(f, " (record {s})"),
            StepOutcome::Fail { reason } => write!(f, ": {reason}"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseStudyReport {
    pub steps: Vec<Step>,
    pub runtime_ms: f64,
}

impl CaseStudyReport {
    pub fn passed(&self) -> bool {
        self.steps.iter().all(|s| s.outcome.ok())
    }
}

fn pass(seq: u64) -> StepOutcome {
    StepOutcome::Pass { seq: Some(seq) }
}

fn fail(reason: impl Into<String>) -> StepOutcome {
    StepOutcome::Fail { reason: reason.into() }
}

struct Names(BTreeMap<String, NodeId>);

impl Names {
    fn get(&self, name: &str) -> Result<NodeId, StepOutcome> {
        self.0
            .get(name)
            .copied()
            .ok_or_else(|| fail(format!("no node named {name}")))
    }
}

fn first(trace: &[TraceRecord], pred: impl Fn(&TraceEvent) -> bool) -> Option<&TraceRecord> {
    trace.iter().find(|r| pred(&r.event))
}

fn p1(trace: &[TraceRecord], a: NodeId) -> Option<PacketId> {
    let fake = first(trace, |e| {
        matches!(e, TraceEvent::Decision { origin, action: Action::DropFake, .. } if *origin == a)
    });
    let suspected = || {
        first(trace, |e| {
            matches!(e, TraceEvent::Stamp { origin, status: PacketStatus::Suspected, .. } if *origin == a)
        })
    };
    match fake.or_else(suspected).map(|r| &r.event) {
        Some(TraceEvent::Decision { pkt, .. }) | Some(TraceEvent::Stamp { pkt, .. }) => Some(*pkt),
        _ => None,
    }
}

fn step_stamp(trace: &[TraceRecord], pkt: PacketId, e: NodeId) -> StepOutcome {
    match first(trace, |ev| matches!(ev, TraceEvent::Stamp { pkt: p, .. } if *p == pkt)) {
        Some(r) => match &r.event {
            TraceEvent::Stamp { zo, status, .. } if *zo == e && *status == PacketStatus::Suspected => pass(r.seq),
            TraceEvent::Stamp { zo, status, .. } => fail(format!("stamped {status:?} by {zo}")),
            _ => unreachable!(),
        },
        None => fail("P1 was never stamped"),
    }
}

fn step_tickets(trace: &[TraceRecord], pkt: PacketId, m: NodeId, issuers: [NodeId; 2]) -> StepOutcome {
    let mut last = None;
    for want in issuers {
        match first(trace, |e| {
            matches!(e, TraceEvent::TicketReceived { receiver, issuer, subject_packet: Some(p), matched: true, .. }
                if *receiver == m && *issuer == want && *p == pkt)
        }) {
            Some(r) => last = last.max(Some(r.seq)),
            None => return fail(format!("no matched ticket from {want}")),
        }
    }
    StepOutcome::Pass { seq: last }
}

fn step_drop(trace: &[TraceRecord], pkt: PacketId, m: NodeId, a: NodeId) -> StepOutcome {
    let Some(d) = first(trace, |e| matches!(e, TraceEvent::Decision { pkt: p, .. } if *p == pkt)) else {
        return fail("no decision on P1");
    };
    match &d.event {
        TraceEvent::Decision { co, action: Action::DropFake, .. } if *co == m => {}
        TraceEvent::Decision { co, action, .. } => return fail(format!("{co} decided {action:?}")),
        _ => unreachable!(),
    }
    match trace[d.seq as usize..].iter().find(|r| {
        matches!(r.event, TraceEvent::Disposition { node, disposition: Disposition::Observed } if node == a)
    }) {
        Some(r) => pass(r.seq),
        None => fail("A never marked observed"),
    }
}

fn step_block(trace: &[TraceRecord], a: NodeId, m: NodeId) -> StepOutcome {
    match first(trace, |e| matches!(e, TraceEvent::Block { node, .. } if *node == a)) {
        None => StepOutcome::NotReached,
        Some(r) => match &r.event {
            TraceEvent::Block {
                by,
                justification: Justification::WarningThreshold { .. },
                ..
            } if *by == m => pass(r.seq),
            TraceEvent::Block { by, justification, .. } => {
                fail(format!("blocked by {by} under {justification:?}"))
            }
            _ => unreachable!(),
        },
    }
}

fn step_honest(trace: &[TraceRecord], names: &Names, after: f64) -> Result<StepOutcome, StepOutcome> {
    let [d, f, i, j, m, n] = ["D", "F", "I", "J", "M", "N"].map(|s| names.get(s));
    let (d, f, i, j, m, n) = (d?, f?, i?, j?, m?, n?);
    let Some(TraceEvent::PacketCreated { pkt, .. }) = trace
        .iter()
        .find(|r| r.time >= after && matches!(r.event, TraceEvent::PacketCreated { origin, .. } if origin == d))
        .map(|r| &r.event)
    else {
        return Ok(StepOutcome::NotReached);
    };
    let pkt = *pkt;
    let ours = |e: &TraceEvent| match e {
        TraceEvent::Stamp { pkt: p, .. }
        | TraceEvent::Observe { pkt: p, .. }
        | TraceEvent::Decision { pkt: p, .. }
        | TraceEvent::PacketDelivered { pkt: p, .. } => *p == pkt,
        TraceEvent::Send { pkt: Some(p), .. } => *p == pkt,
        _ => false,
    };
    let recs: Vec<&TraceRecord> = trace.iter().filter(|r| ours(&r.event)).collect();
    let has = |pred: &dyn Fn(&TraceEvent) -> bool| recs.iter().any(|r| pred(&r.event));
    if !has(&|e| matches!(e, TraceEvent::Stamp { zo, status: PacketStatus::Genuine, .. } if *zo == f)) {
        return Ok(fail(format!("P2 ({pkt:?}) not stamped genuine by F")));
    }
    if !has(&|e| {
        matches!(e, TraceEvent::Send { src, dst, msg_kind: MessageKind::DataPacket, .. } if *src == f && *dst == m)
    }) {
        return Ok(fail("P2 not relayed by F"));
    }
    for mn in [i, j] {
        if !has(&|e| matches!(e, TraceEvent::Observe { mn: o, ticketed: false, .. } if *o == mn)) {
            return Ok(fail(format!("P2 not observed cleanly by {mn}")));
        }
    }
    if !has(&|e| matches!(e, TraceEvent::Decision { co, action: Action::Forward, .. } if *co == m)) {
        return Ok(fail("P2 not forwarded by M"));
    }
    match recs
        .iter()
        .find(|r| matches!(r.event, TraceEvent::PacketDelivered { gn, .. } if gn == n))
    {
        Some(r) => Ok(pass(r.seq)),
        None => Ok(fail("P2 never reached N")),
    }
}

pub const STEP_NAMES: [&str; 5] = [
    "P1 from A stamped suspected by E",
    "P1 ticketed to M by G and H",
    "P1 dropped as fake and A observed",
    "A blocked once warnings exceed the threshold",
    "P2 from D relayed by F, observed by I and J, delivered to N",
];

/// Walks the trace through the five protocol steps.
pub fn check_trace(trace: &[TraceRecord]) -> Vec<Step> {
    let names = Names(
        trace
            .iter()
            .find_map(|r| match &r.event {
                TraceEvent::RunHeader { nodes, .. } => {
                    Some(nodes.iter().map(|n| (n.name.clone(), n.id)).collect())
                }
                _ => None,
            })
            .unwrap_or_default(),
    );
    let attacked = trace.iter().any(|r| {
        matches!(&r.event, TraceEvent::RunHeader { attacked, .. } if !attacked.is_empty())
    });
    let mut outcomes: Vec<StepOutcome> = Vec::new();
    let mut p1_time = 0.0;
    let lookup = || -> Result<[NodeId; 5], StepOutcome> {
        Ok([names.get("A")?, names.get("E")?, names.get("G")?, names.get("H")?, names.get("M")?])
    };
    match lookup() {
        Err(o) => outcomes.extend(std::iter::repeat_n(o, 4)),
        Ok(_) if !attacked => {
            let ticket = first(trace, |e| matches!(e, TraceEvent::TicketReceived { .. }));
            let o = match ticket {
                Some(r) => fail(format!("ticket at record {} without an attack", r.seq)),
                None => StepOutcome::NoAttack,
            };
            outcomes.extend(std::iter::repeat_n(o, 4));
        }
        Ok([a, e, g, h, m]) => match p1(trace, a) {
            None => outcomes.extend(std::iter::repeat_n(StepOutcome::NotReached, 4)),
            Some(pkt) => {
                p1_time = first(trace, |ev| matches!(ev, TraceEvent::PacketCreated { pkt: p, .. } if *p == pkt))
                    .map_or(0.0, |r| r.time);
                outcomes.push(step_stamp(trace, pkt, e));
                outcomes.push(step_tickets(trace, pkt, m, [g, h]));
                outcomes.push(step_drop(trace, pkt, m, a));
                outcomes.push(step_block(trace, a, m));
            }
        },
    }
    outcomes.push(step_honest(trace, &names, p1_time).unwrap_or_else(|o| o));
    STEP_NAMES
        .iter()
        .zip(outcomes)
        .map(|(name, outcome)| Step {
            name: name.to_string(),
            outcome,
        })
        .collect()
}

/// Runs the scenario twice, checks the walkthrough, byte-identity of the two
/// traces and the runtime budget.
pub fn run_case_study(cfg: &ScenarioConfig) -> Result<(CaseStudyReport, RunResult), SimError> {
    let started = Instant::now();
    let first_run = run(cfg)?;
    let elapsed = started.elapsed();
    let second = run(cfg)?;
    let mut steps = check_trace(&first_run.trace);
    steps.push(Step {
        name: "re-run yields a byte-identical trace".into(),
        outcome: if first_run.trace_jsonl() == second.trace_jsonl() {
            StepOutcome::Pass { seq: None }
        } else {
            fail("traces differ")
        },
    });
    steps.push(Step {
        name: format!("single run within {} ms", RUNTIME_BUDGET.as_millis()),
        outcome: if elapsed < RUNTIME_BUDGET {
            StepOutcome::Pass { seq: None }
        } else {
            fail(format!("took {} ms", elapsed.as_millis()))
        },
    });
    Ok((
        CaseStudyReport {
            steps,
            runtime_ms: elapsed.as_secs_f64() * 1000.0,
        },
        first_run,
    ))
}
