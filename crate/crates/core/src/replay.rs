//! Trace re-evaluation.
//!
//! Rebuilds every detection verdict in a trace from the records that precede
//! it, using only the pure decision functions and its own window bookkeeping.
//! The kernel's ledger is never consulted.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::detection::{
    anomaly_detect, confirm_intrusion, decide_action, flow_abnormal, should_block, watchdog_mn, Action,
    TicketReason, FLOW_HISTORY,
};
use crate::protocol::{MessageKind, PacketId, PacketStatus};
use crate::time::SimTime;
use crate::topology::{Disposition, NodeId, Position};
use crate::trace::{Justification, TraceEvent, TraceRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub seq: u64,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub records: usize,
    /// Verdicts re-evaluated.
    pub checked: usize,
    /// Verdicts skipped because the acting node was declared compromised.
    pub skipped: usize,
    pub divergences: Vec<Divergence>,
    pub warnings: Vec<String>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.divergences.is_empty()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("trace has no run header")]
    NoHeader,
    #[error("seed mismatch: trace {trace}, scenario {scenario}")]
    Seed { trace: u64, scenario: u64 },
    #[error("node set mismatch: {0}")]
    Nodes(String),
    #[error("threshold mismatch on {0}")]
    Thresholds(String),
}

fn in_window(at: SimTime, now: SimTime, span: SimTime) -> bool {
    at <= now && at.0 + span.0 > now.0
}

#[derive(Default)]
struct Cluster {
    co: NodeId,
    mns: Vec<NodeId>,
    zones: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

struct Oracle<'a> {
    cfg: &'a ScenarioConfig,
    span: SimTime,
    gn: NodeId,
    compromised: BTreeSet<NodeId>,
    positions: BTreeMap<NodeId, Position>,
    detection: bool,

    clusters: Vec<Cluster>,
    pending_retain: bool,
    disposition: BTreeMap<NodeId, Disposition>,
    module: BTreeMap<NodeId, bool>,

    coins: BTreeMap<NodeId, u32>,
    observed: BTreeMap<(NodeId, NodeId), Vec<SimTime>>,
    false_flags: BTreeMap<(NodeId, NodeId), Vec<SimTime>>,
    /// Packet-level tickets about each subject: (time, issuer).
    tickets: BTreeMap<NodeId, Vec<(SimTime, NodeId)>>,
    /// Matched ticket issuers per (receiver, packet).
    packet_issuers: BTreeMap<(NodeId, PacketId), BTreeSet<NodeId>>,
    zo_reports: BTreeMap<NodeId, Vec<(SimTime, NodeId)>>,
    co_reports: BTreeMap<NodeId, Vec<(SimTime, NodeId)>>,
    reporting: BTreeMap<NodeId, Vec<(SimTime, NodeId)>>,
    sole_issuer: BTreeMap<NodeId, Vec<SimTime>>,
    flow_current: BTreeMap<(NodeId, NodeId), u32>,
    flow_history: BTreeMap<(NodeId, NodeId), Vec<u32>>,

    /// Blocks that the preceding verdict makes mandatory, awaiting their record.
    expected: Vec<(NodeId, &'static str, u64)>,
    report: ReplayReport,
}

fn rule_name(j: &Justification) -> &'static str {
    match j {
        Justification::WarningThreshold { .. } => "warning_threshold",
        Justification::ZoWatchdog { .. } => "zo_watchdog",
        Justification::MnWatchdog { .. } => "mn_watchdog",
        Justification::CoWatchdog { .. } => "co_watchdog",
    }
}

fn distinct_in<T: Copy + Ord>(items: &[(SimTime, T)], now: SimTime, span: SimTime) -> (u32, BTreeSet<T>) {
    let live: Vec<T> = items.iter().filter(|(t, _)| in_window(*t, now, span)).map(|(_, v)| *v).collect();
    (live.len() as u32, live.into_iter().collect())
}

impl<'a> Oracle<'a> {
    fn diverge(&mut self, r: &TraceRecord, detail: String) {
        self.report.divergences.push(Divergence {
            seq: r.seq,
            kind: r.event.kind_name().to_string(),
            detail,
        });
    }

    fn communicating(&self, n: NodeId) -> bool {
        !matches!(
            self.disposition.get(&n),
            Some(Disposition::Blocked) | Some(Disposition::Dead)
        )
    }

    fn module_on(&self, n: NodeId) -> bool {
        self.module.get(&n).copied().unwrap_or(false)
    }

    fn in_range(&self, a: NodeId, b: NodeId) -> bool {
        match (self.positions.get(&a), self.positions.get(&b)) {
            (Some(x), Some(y)) => x.distance(y) <= self.cfg.radio_range,
            _ => false,
        }
    }

    fn zone_of(&self, zo: NodeId) -> Option<&BTreeSet<NodeId>> {
        self.clusters.iter().find_map(|c| c.zones.get(&zo))
    }

    fn apply_retain(&mut self) {
        if !self.pending_retain {
            return;
        }
        self.pending_retain = false;
        let pairs: BTreeSet<(NodeId, NodeId)> = self
            .clusters
            .iter()
            .flat_map(|c| c.mns.iter().map(move |m| (*m, c.co)))
            .collect();
        self.flow_current.retain(|k, _| pairs.contains(k));
        self.flow_history.retain(|k, _| pairs.contains(k));
    }

    fn flush_expected(&mut self, r: &TraceRecord) {
        for (node, rule, at) in std::mem::take(&mut self.expected) {
            self.report.divergences.push(Divergence {
                seq: at,
                kind: "missing_block".into(),
                detail: format!("{rule} should have blocked {node} (noticed at record {})", r.seq),
            });
        }
    }

    fn step(&mut self, r: &TraceRecord) {
        let now = r.at();
        let checkpoint = matches!(
            r.event,
            TraceEvent::Stamp { .. }
                | TraceEvent::Observe { .. }
                | TraceEvent::Decision { .. }
                | TraceEvent::FlowCheck { .. }
                | TraceEvent::TicketReceived { .. }
                | TraceEvent::WindowRollover { .. }
                | TraceEvent::RunEnd { .. }
        );
        if checkpoint {
            self.flush_expected(r);
        }
        match &r.event {
            TraceEvent::Reconfigure { .. } => {
                self.clusters.clear();
                self.pending_retain = true;
            }
            TraceEvent::ClusterFormed { co, mns, zones, .. } => self.clusters.push(Cluster {
                co: *co,
                mns: mns.clone(),
                zones: zones
                    .iter()
                    .map(|z| (z.zo, z.members.iter().copied().collect()))
                    .collect(),
            }),
            TraceEvent::Disposition { node, disposition } => {
                self.disposition.insert(*node, *disposition);
            }
            TraceEvent::Death { node } => {
                self.disposition.insert(*node, Disposition::Dead);
                self.module.insert(*node, false);
            }
            TraceEvent::DetectionModule { node, enabled } => {
                self.module.insert(*node, *enabled);
            }
            TraceEvent::WindowRollover { .. } => {
                self.coins.clear();
            }
            TraceEvent::CoinIssued { sn, .. } | TraceEvent::CoinUnsolicited { sn, .. } => {
                *self.coins.entry(*sn).or_default() += 1;
            }
            TraceEvent::Stamp {
                zo,
                origin,
                status,
                in_sleep,
                wake_count,
                unknown_origin,
                compromised,
                ..
            } => {
                if *compromised {
                    self.check_compromised(r, *zo);
                    return;
                }
                self.report.checked += 1;
                let in_zone = self.zone_of(*zo).is_some_and(|m| m.contains(origin));
                let count = self.coins.get(origin).copied().unwrap_or(0);
                let v = anomaly_detect(in_zone, &self.cfg.duty_cycle, now, count, self.cfg.thresholds.th_token);
                if count != *wake_count {
                    self.diverge(r, format!("wake count {wake_count}, expected {count}"));
                }
                if v.status != *status || v.in_sleep != *in_sleep || v.unknown_origin != *unknown_origin {
                    self.diverge(
                        r,
                        format!(
                            "stamp {status:?} (sleep {in_sleep}, unknown {unknown_origin}), expected {:?} (sleep {}, unknown {})",
                            v.status, v.in_sleep, v.unknown_origin
                        ),
                    );
                }
            }
            TraceEvent::Observe {
                mn,
                origin,
                count,
                residual,
                ticketed,
                compromised,
                ..
            } => {
                let span = self.span;
                let seen = self.observed.entry((*mn, *origin)).or_default();
                seen.push(now);
                let derived = seen.iter().filter(|t| in_window(**t, now, span)).count() as u32;
                if *compromised {
                    self.check_compromised(r, *mn);
                    return;
                }
                self.report.checked += 1;
                if derived != *count {
                    self.diverge(r, format!("window count {count}, expected {derived}"));
                }
                let expect = confirm_intrusion(derived, *residual, &self.cfg.thresholds, self.cfg.band_mode);
                if expect != *ticketed {
                    self.diverge(r, format!("ticketed {ticketed}, expected {expect}"));
                }
            }
            TraceEvent::FalseDetection { mn, zo, count, .. } => {
                self.report.checked += 1;
                let span = self.span;
                let w = self.false_flags.entry((*mn, *zo)).or_default();
                w.push(now);
                let derived = w.iter().filter(|t| in_window(**t, now, span)).count();
                if derived > self.cfg.thresholds.false_detection_threshold as usize {
                    w.clear();
                }
                if derived != *count {
                    self.diverge(r, format!("false detections {count}, expected {derived}"));
                }
            }
            TraceEvent::TicketReceived {
                receiver,
                issuer,
                subject_node,
                subject_packet,
                reason,
                matched,
            } => self.on_ticket(r, *receiver, *issuer, *subject_node, *subject_packet, *reason, *matched),
            TraceEvent::Decision {
                co,
                pkt,
                origin,
                status,
                issuers,
                action,
                warning_count,
                warning_issuers,
            } => {
                self.report.checked += 1;
                let derived = self.packet_issuers.remove(&(*co, *pkt)).unwrap_or_default();
                let recorded: BTreeSet<NodeId> = issuers.iter().copied().collect();
                if recorded != derived {
                    self.diverge(r, format!("issuers {recorded:?}, expected {derived:?}"));
                }
                let expect = decide_action(status.unwrap_or(PacketStatus::Genuine), &derived);
                if expect != *action {
                    self.diverge(r, format!("action {action:?}, expected {expect:?}"));
                }
                for mn in &derived {
                    self.reporting.entry(*co).or_default().push((now, *mn));
                }
                if derived.len() == 1 {
                    let mn = *derived.iter().next().expect("one issuer");
                    self.sole_issuer.entry(mn).or_default().push(now);
                }

                let (count, evidence) =
                    distinct_in(self.tickets.get(origin).map_or(&[][..], |v| v.as_slice()), now, self.span);
                if count != *warning_count || evidence.len() != *warning_issuers {
                    self.diverge(
                        r,
                        format!(
                            "warning evidence {warning_count}/{warning_issuers}, expected {count}/{}",
                            evidence.len()
                        ),
                    );
                }
                let blockable = matches!(
                    self.disposition.get(origin).copied().unwrap_or(Disposition::Normal),
                    Disposition::Normal | Disposition::Observed
                );
                if blockable
                    && should_block(count, evidence.len(), self.cfg.thresholds.warning_block_threshold)
                {
                    self.expected.push((*origin, "warning_threshold", r.seq));
                }
                if let Some((culprit, _, _)) = self.mn_watchdog(*co, now) {
                    if self.communicating(culprit) {
                        self.expected.push((culprit, "mn_watchdog", r.seq));
                    }
                }
            }
            TraceEvent::Send { src, dst, msg_kind, .. } => {
                self.apply_retain();
                if self.detection && *dst == self.gn && *msg_kind == MessageKind::DataPacket {
                    let watchers: Vec<NodeId> = self
                        .clusters
                        .iter()
                        .find(|c| c.co == *src)
                        .map(|c| c.mns.clone())
                        .unwrap_or_default();
                    for mn in watchers {
                        if self.communicating(mn) && self.module_on(mn) && self.in_range(mn, *src) {
                            *self.flow_current.entry((mn, *src)).or_default() += 1;
                        }
                    }
                }
            }
            TraceEvent::FlowCheck {
                mn,
                co,
                volume,
                history,
                abnormal,
            } => {
                self.apply_retain();
                self.report.checked += 1;
                let derived = self.flow_current.remove(&(*mn, *co)).unwrap_or(0);
                let hist = self.flow_history.entry((*mn, *co)).or_default();
                let before = hist.clone();
                hist.push(derived);
                if hist.len() > FLOW_HISTORY {
                    hist.remove(0);
                }
                if derived != *volume || before != *history {
                    self.diverge(
                        r,
                        format!("flow {volume} over {history:?}, expected {derived} over {before:?}"),
                    );
                }
                let expect = flow_abnormal(&before, derived, self.cfg.thresholds.flow_factor);
                if expect != *abnormal {
                    self.diverge(r, format!("abnormal {abnormal}, expected {expect}"));
                }
            }
            TraceEvent::Block { node, justification, .. } => self.on_block(r, *node, justification),
            _ => {}
        }
        // Flow state of pairs dropped by a re-election is discarded as soon as
        // the new assignment is complete.
        if !matches!(
            r.event,
            TraceEvent::Reconfigure { .. }
                | TraceEvent::ClusterFormed { .. }
                | TraceEvent::Degraded { .. }
                | TraceEvent::Unreachable { .. }
        ) {
            self.apply_retain();
        }
    }

    fn check_compromised(&mut self, r: &TraceRecord, node: NodeId) {
        self.report.skipped += 1;
        if !self.compromised.contains(&node) {
            self.diverge(r, format!("{node} acts as compromised but is not declared so"));
        }
    }

    fn mn_watchdog(&self, co: NodeId, now: SimTime) -> Option<(NodeId, usize, f64)> {
        let cluster = self.clusters.iter().find(|c| c.co == co)?;
        let (_, reporting) = distinct_in(self.reporting.get(&co).map_or(&[][..], |v| v.as_slice()), now, self.span);
        let unc: BTreeMap<NodeId, usize> = cluster
            .mns
            .iter()
            .map(|mn| {
                let n = self
                    .sole_issuer
                    .get(mn)
                    .map_or(0, |v| v.iter().filter(|t| in_window(**t, now, self.span)).count());
                (*mn, n)
            })
            .collect();
        watchdog_mn(cluster.mns.len(), &reporting, &unc, &self.cfg.thresholds)
    }

    #[allow(clippy::too_many_arguments)]
    fn on_ticket(
        &mut self,
        r: &TraceRecord,
        receiver: NodeId,
        issuer: NodeId,
        subject: NodeId,
        packet: Option<PacketId>,
        reason: TicketReason,
        matched: bool,
    ) {
        let now = r.at();
        match reason {
            TicketReason::PacketCountAnomaly | TicketReason::LowResidualEnergy => {
                self.tickets.entry(subject).or_default().push((now, issuer));
                if matched {
                    if let Some(p) = packet {
                        self.packet_issuers.entry((receiver, p)).or_default().insert(issuer);
                    }
                }
            }
            TicketReason::ZoFalseDetection => {
                self.zo_reports.entry(subject).or_default().push((now, issuer));
                let (_, reporters) = distinct_in(&self.zo_reports[&subject], now, self.span);
                let still_zo = self
                    .clusters
                    .iter()
                    .any(|c| c.co == receiver && c.zones.contains_key(&subject));
                if reporters.len() >= 2 && still_zo && self.communicating(subject) {
                    self.expected.push((subject, "zo_watchdog", r.seq));
                }
            }
            TicketReason::CoFlowAnomaly => {
                if receiver != self.gn {
                    return;
                }
                self.co_reports.entry(subject).or_default().push((now, issuer));
                let (_, reporters) = distinct_in(&self.co_reports[&subject], now, self.span);
                let still_co = self.clusters.iter().any(|c| c.co == subject);
                if reporters.len() >= 2 && still_co && self.communicating(subject) {
                    self.expected.push((subject, "co_watchdog", r.seq));
                }
            }
        }
    }

    fn on_block(&mut self, r: &TraceRecord, node: NodeId, j: &Justification) {
        self.report.checked += 1;
        let now = r.at();
        let rule = rule_name(j);
        match self.expected.iter().position(|(n, ru, _)| *n == node && *ru == rule) {
            Some(i) => {
                self.expected.remove(i);
            }
            None => self.diverge(r, format!("{rule} block of {node} is not warranted by the preceding records")),
        }
        match j {
            Justification::WarningThreshold { count, issuers } => {
                let (c, ev) = distinct_in(self.tickets.get(&node).map_or(&[][..], |v| v.as_slice()), now, self.span);
                let rec: BTreeSet<NodeId> = issuers.iter().copied().collect();
                if c != *count || ev != rec {
                    self.diverge(r, format!("justification {count}/{rec:?}, expected {c}/{ev:?}"));
                }
            }
            Justification::ZoWatchdog { reporters } => {
                let (_, d) = distinct_in(self.zo_reports.get(&node).map_or(&[][..], |v| v.as_slice()), now, self.span);
                if d != reporters.iter().copied().collect::<BTreeSet<_>>() {
                    self.diverge(r, format!("reporters {reporters:?}, expected {d:?}"));
                }
            }
            Justification::CoWatchdog { reporters } => {
                let (_, d) = distinct_in(self.co_reports.get(&node).map_or(&[][..], |v| v.as_slice()), now, self.span);
                if d != reporters.iter().copied().collect::<BTreeSet<_>>() {
                    self.diverge(r, format!("reporters {reporters:?}, expected {d:?}"));
                }
            }
            Justification::MnWatchdog {
                uncorroborated,
                reporting,
                total_mns,
            } => {
                let co = self.clusters.iter().find(|c| c.mns.contains(&node)).map(|c| c.co);
                let derived = co.and_then(|co| {
                    let (_, rep) =
                        distinct_in(self.reporting.get(&co).map_or(&[][..], |v| v.as_slice()), now, self.span);
                    let total = self.clusters.iter().find(|c| c.co == co).map_or(0, |c| c.mns.len());
                    self.mn_watchdog(co, now).map(|w| (w, rep, total))
                });
                match derived {
                    Some(((culprit, n, _), rep, total))
                        if culprit == node
                            && n == *uncorroborated
                            && total == *total_mns
                            && rep == reporting.iter().copied().collect::<BTreeSet<_>>() => {}
                    other => self.diverge(r, format!("monitor watchdog evidence does not re-derive: {other:?}")),
                }
                self.sole_issuer.remove(&node);
                for w in self.reporting.values_mut() {
                    w.retain(|(_, m)| *m != node);
                }
            }
        }
    }
}

/// Checks that `trace` was produced from `cfg`.
pub fn check_match(trace: &[TraceRecord], cfg: &ScenarioConfig) -> Result<(), ReplayError> {
    let Some(TraceEvent::RunHeader {
        seed, nodes, thresholds, ..
    }) = trace.iter().map(|r| &r.event).find(|e| matches!(e, TraceEvent::RunHeader { .. }))
    else {
        return Err(ReplayError::NoHeader);
    };
    if let Some(s) = cfg.sim.seed {
        if s != *seed {
            return Err(ReplayError::Seed { trace: *seed, scenario: s });
        }
    }
    let ours: BTreeMap<NodeId, Position> = cfg.nodes.iter().map(|n| (n.id, Position { x: n.x, y: n.y })).collect();
    let theirs: BTreeMap<NodeId, Position> = nodes.iter().map(|n| (n.id, Position { x: n.x, y: n.y })).collect();
    if ours.keys().ne(theirs.keys()) {
        let a: Vec<u32> = ours.keys().map(|n| n.0).collect();
        let b: Vec<u32> = theirs.keys().map(|n| n.0).collect();
        return Err(ReplayError::Nodes(format!("scenario {a:?}, trace {b:?}")));
    }
    if let Some((id, _)) = ours.iter().find(|(id, p)| theirs[*id] != **p) {
        return Err(ReplayError::Nodes(format!("node {id} has moved")));
    }
    let expected = crate::sim::kernel::threshold_rows(cfg);
    for (k, v) in thresholds {
        if let Some((_, mine)) = expected.iter().find(|(ek, _)| ek == k) {
            if mine != v {
                return Err(ReplayError::Thresholds(k.clone()));
            }
        }
    }
    Ok(())
}

/// Re-evaluates every verdict in `trace` against the rules configured in `cfg`.
pub fn replay(trace: &[TraceRecord], cfg: &ScenarioConfig) -> Result<ReplayReport, ReplayError> {
    if trace.is_empty() {
        return Ok(ReplayReport {
            warnings: vec!["trace is empty".into()],
            ..ReplayReport::default()
        });
    }
    check_match(trace, cfg)?;
    let (gn, compromised, positions, detection) = trace
        .iter()
        .find_map(|r| match &r.event {
            TraceEvent::RunHeader {
                gn,
                compromised,
                nodes,
                detection_enabled,
                ..
            } => Some((
                *gn,
                compromised.iter().copied().collect(),
                nodes.iter().map(|n| (n.id, Position { x: n.x, y: n.y })).collect(),
                *detection_enabled,
            )),
            _ => None,
        })
        .ok_or(ReplayError::NoHeader)?;
    let mut o = Oracle {
        cfg,
        span: cfg.thresholds.t_interval,
        gn,
        compromised,
        positions,
        detection,
        clusters: Vec::new(),
        pending_retain: false,
        disposition: BTreeMap::new(),
        module: BTreeMap::new(),
        coins: BTreeMap::new(),
        observed: BTreeMap::new(),
        false_flags: BTreeMap::new(),
        tickets: BTreeMap::new(),
        packet_issuers: BTreeMap::new(),
        zo_reports: BTreeMap::new(),
        co_reports: BTreeMap::new(),
        reporting: BTreeMap::new(),
        sole_issuer: BTreeMap::new(),
        flow_current: BTreeMap::new(),
        flow_history: BTreeMap::new(),
        expected: Vec::new(),
        report: ReplayReport::default(),
    };
    for r in trace {
        o.step(r);
    }
    if let Some(last) = trace.last() {
        o.flush_expected(last);
    }
    o.report.records = trace.len();
    if !trace.iter().any(|r| matches!(r.event, TraceEvent::RunEnd { .. })) {
        o.report.warnings.push("trace has no run_end record".into());
    }
    Ok(o.report)
}

/// A breach of the corroboration rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub seq: u64,
    pub detail: String,
}

fn header_threshold(trace: &[TraceRecord], key: &str) -> Option<f64> {
    trace.iter().find_map(|r| match &r.event {
        TraceEvent::RunHeader { thresholds, .. } => thresholds
            .iter()
            .find(|(k, _)| k == key)
            .and_then(|(_, v)| v.parse::<f64>().ok()),
        _ => None,
    })
}

/// Corroboration audit: every fake-drop rests on tickets from two or more
/// distinct monitors, and every block carries a justification that satisfies
/// its rule. Thresholds are read from the trace's own header.
pub fn audit(trace: &[TraceRecord]) -> Vec<Violation> {
    let mut out = Vec::new();
    let wbt = header_threshold(trace, "warning_block_threshold");
    let fdt = header_threshold(trace, "false_detection_threshold");
    let rate = header_threshold(trace, "ticket_rate_threshold");
    let mut matched: BTreeMap<(NodeId, PacketId), BTreeSet<NodeId>> = BTreeMap::new();
    for r in trace {
        let mut bad = |d: String| out.push(Violation { seq: r.seq, detail: d });
        match &r.event {
            TraceEvent::TicketReceived {
                receiver,
                issuer,
                subject_packet: Some(p),
                matched: true,
                ..
            } => {
                matched.entry((*receiver, *p)).or_default().insert(*issuer);
            }
            TraceEvent::Decision {
                co,
                pkt,
                issuers,
                action: Action::DropFake,
                ..
            } => {
                let listed: BTreeSet<NodeId> = issuers.iter().copied().collect();
                let received = matched.get(&(*co, *pkt)).cloned().unwrap_or_default();
                if listed.len() < 2 || received.len() < 2 || !listed.is_subset(&received) {
                    bad(format!("fake drop of {pkt:?} rests on {listed:?} (received {received:?})"));
                }
            }
            TraceEvent::Block { node, justification, .. } => match justification {
                Justification::WarningThreshold { count, issuers } => {
                    let distinct: BTreeSet<NodeId> = issuers.iter().copied().collect();
                    let over = wbt.is_some_and(|t| (*count as f64) > t);
                    if !over || distinct.len() < 2 {
                        bad(format!("block of {node}: {count} tickets from {distinct:?}"));
                    }
                }
                Justification::ZoWatchdog { reporters } | Justification::CoWatchdog { reporters } => {
                    let distinct: BTreeSet<NodeId> = reporters.iter().copied().collect();
                    if distinct.len() < 2 {
                        bad(format!("watchdog block of {node} with reporters {distinct:?}"));
                    }
                }
                Justification::MnWatchdog {
                    uncorroborated,
                    reporting,
                    total_mns,
                } => {
                    let share = if *total_mns == 0 {
                        0.0
                    } else {
                        reporting.len() as f64 / *total_mns as f64
                    };
                    let ok = fdt.is_some_and(|t| *uncorroborated as f64 > t)
                        && rate.is_some_and(|t| share > t)
                        && reporting.contains(node);
                    if !ok {
                        bad(format!(
                            "monitor block of {node}: {uncorroborated} uncorroborated, {}/{total_mns} reporting",
                            reporting.len()
                        ));
                    }
                }
            },
            _ => {}
        }
    }
    out
}
