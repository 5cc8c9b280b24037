//! The event loop.

use std::collections::{BTreeMap, BTreeSet};

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::detection::{
    anomaly_detect, co_block_confirmed, confirm_intrusion, decide_action, flow_abnormal, should_block,
    watchdog_mn, zo_block_confirmed, zo_false_detection_exceeded, Action, DetectionLedger, TicketReason,
    WarningTicket,
};
use crate::energy::{self, Activity, ChargeOutcome, EnergyLedger};
use crate::error::{ConfigError, ElectionError};
use crate::protocol::{
    observers, should_park, CoinId, CoinLedger, Message, MessageBody, MessageId, Packet, PacketId,
    PacketStatus, Profile,
};
use crate::sim::attacker::{attacker_step, AttackOutcome, CompromiseKind};
use crate::sim::metrics::{compute_metrics, GroundTruth, Metrics};
use crate::sim::queue::EventQueue;
use crate::time::SimTime;
use crate::topology::{
    deploy, elect_roles, reconfigure, Designation, Disposition, ElectionNote, ElectionParams, Network,
    NodeCategory, NodeId, PowerMode, RoleAssignment,
};
use crate::trace::{DropReason, Justification, NodeInfo, ReconfigureCause, TraceEvent, TraceRecord, ZoneRecord};

/// Forged coin ids live above this offset so they never collide with
/// legitimate ones.
const FORGED_COIN_BASE: u64 = 1 << 40;

#[derive(Debug, Error)]
pub enum SimErrorKind {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("initial election failed: {0}")]
    Election(#[from] ElectionError),
}

/// A failed run, with whatever trace was produced before the failure.
#[derive(Debug, Error)]
#[error("{kind}")]
pub struct SimError {
    pub kind: SimErrorKind,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub trace: Vec<TraceRecord>,
    pub metrics: Metrics,
    pub network: Network,
    pub assignment: RoleAssignment,
    pub energy: EnergyLedger,
}

impl RunResult {
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.trace {
            out.push_str(&crate::trace::to_line(r));
            out.push('\n');
        }
        out
    }

    pub fn death_time(&self, node: NodeId) -> Option<f64> {
        self.trace.iter().find_map(|r| match r.event {
            TraceEvent::Death { node: n } if n == node => Some(r.time),
            _ => None,
        })
    }

    pub fn block_time(&self, node: NodeId) -> Option<f64> {
        self.trace.iter().find_map(|r| match r.event {
            TraceEvent::Block { node: n, .. } if n == node => Some(r.time),
            _ => None,
        })
    }
}

#[derive(Debug, Clone)]
enum Event {
    End,
    Deliver(MessageId),
    Overhear { mn: NodeId, co: NodeId, zo: NodeId, packet: Packet },
    CoDecision { co: NodeId, pkt: PacketId },
    DutyBoundary { asleep: bool },
    HoldExpire(NodeId),
    Query,
    Reconfigure,
    Attack(NodeId),
    Rollover,
    Join(NodeId),
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    seed: u64,
    params: ElectionParams,
    network: Network,
    assignment: RoleAssignment,
    energy: EnergyLedger,
    coins: CoinLedger,
    det: DetectionLedger,
    queue: EventQueue<Event>,
    rng: ChaCha8Rng,
    trace: Vec<TraceRecord>,
    now: SimTime,
    next_msg: u64,
    next_pkt: u64,
    next_coin: u64,
    next_forged: u64,
    in_flight: BTreeMap<MessageId, Message>,
    pending: BTreeMap<PacketId, Packet>,
    awake_until: BTreeMap<NodeId, SimTime>,
    sent: u64,
    delivered: u64,
    dropped: u64,
    rollovers: u64,
    finishing: bool,
    finished: bool,
}

/// Runs a scenario with the seed from its file.
pub fn run(cfg: &ScenarioConfig) -> Result<RunResult, SimError> {
    let seed = cfg.seed().map_err(|e| SimError {
        kind: e.into(),
        trace: Vec::new(),
    })?;
    run_with_seed(cfg, seed)
}

pub fn run_with_seed(cfg: &ScenarioConfig, seed: u64) -> Result<RunResult, SimError> {
    let network = deploy(&cfg.node_specs(), cfg.radio_range, cfg.duty_cycle, |c| {
        cfg.energy.initial_for(c)
    })
    .map_err(|e| SimError {
        kind: e.into(),
        trace: Vec::new(),
    })?;
    let mut sim = Sim {
        cfg,
        seed,
        params: cfg.election_params(),
        network,
        assignment: RoleAssignment::default(),
        energy: EnergyLedger::default(),
        coins: CoinLedger::default(),
        det: DetectionLedger::new(cfg.thresholds.t_interval),
        queue: EventQueue::default(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        trace: Vec::new(),
        now: SimTime::ZERO,
        next_msg: 0,
        next_pkt: 0,
        next_coin: 0,
        next_forged: 0,
        in_flight: BTreeMap::new(),
        pending: BTreeMap::new(),
        awake_until: BTreeMap::new(),
        sent: 0,
        delivered: 0,
        dropped: 0,
        rollovers: 0,
        finishing: false,
        finished: false,
    };
    if let Err(e) = sim.init() {
        return Err(SimError {
            kind: e.into(),
            trace: sim.trace,
        });
    }
    sim.event_loop();
    let truth = GroundTruth::from_trace(&sim.trace).unwrap_or_default();
    let metrics = compute_metrics(&sim.trace, &truth);
    info!(
        "run finished at t={} with {} trace records",
        sim.now,
        sim.trace.len()
    );
    Ok(RunResult {
        seed,
        trace: sim.trace,
        metrics,
        network: sim.network,
        assignment: sim.assignment,
        energy: sim.energy,
    })
}

pub fn threshold_rows(cfg: &ScenarioConfig) -> Vec<(String, String)> {
    let t = &cfg.thresholds;
    vec![
        ("th_token".into(), t.th_token.to_string()),
        ("th_min".into(), t.th_min.to_string()),
        ("th_max".into(), t.th_max.to_string()),
        ("th_energy".into(), t.th_energy.as_units().to_string()),
        ("warning_block_threshold".into(), t.warning_block_threshold.to_string()),
        ("t_interval".into(), t.t_interval.as_units().to_string()),
        ("false_detection_threshold".into(), t.false_detection_threshold.to_string()),
        ("ticket_rate_threshold".into(), t.ticket_rate_threshold.to_string()),
        ("flow_factor".into(), t.flow_factor.to_string()),
        ("lifetime_threshold".into(), t.lifetime_threshold.to_string()),
    ]
}

impl<'a> Sim<'a> {
    fn emit(&mut self, event: TraceEvent) {
        if self.finished {
            return;
        }
        let seq = self.trace.len() as u64;
        self.trace.push(TraceRecord {
            time: self.now.as_units(),
            seq,
            event,
        });
    }

    fn latency(&self) -> SimTime {
        self.cfg.sim.hop_latency
    }

    fn detection_on(&self) -> bool {
        self.cfg.detection_enabled
    }

    fn compromised(&self, node: NodeId, kind: CompromiseKind) -> Option<u32> {
        self.cfg
            .compromises
            .iter()
            .find(|c| c.applies(node, kind, self.now))
            .map(|c| c.inflate)
    }

    // ---------------------------------------------------------------- setup

    fn init(&mut self) -> Result<(), ElectionError> {
        let cfg = self.cfg;
        let nodes: Vec<NodeInfo> = self
            .network
            .nodes()
            .map(|n| NodeInfo {
                id: n.id,
                name: n.name.clone(),
                x: n.pos.x,
                y: n.pos.y,
                category: n.category,
            })
            .collect();
        let mut compromised: Vec<NodeId> = cfg.compromises.iter().map(|c| c.node).collect();
        compromised.sort();
        compromised.dedup();
        let mut attacked: Vec<NodeId> = cfg.attacker.as_ref().map(|a| a.targets.clone()).unwrap_or_default();
        attacked.sort();
        attacked.dedup();
        self.emit(TraceEvent::RunHeader {
            scenario: cfg.name.clone(),
            seed: self.seed,
            gn: self.network.gn,
            nodes,
            detection_enabled: cfg.detection_enabled,
            band_mode: cfg.band_mode,
            thresholds: threshold_rows(cfg),
            defaulted: cfg.defaulted.clone(),
            attacked,
            attacker_source: cfg.attacker.as_ref().map(|a| a.source),
            compromised,
        });

        let joined: Vec<(NodeId, crate::energy::Energy)> = self
            .network
            .nodes()
            .filter(|n| n.joined)
            .map(|n| (n.id, n.energy))
            .collect();
        for (id, e) in joined {
            self.energy.open(id, e, SimTime::ZERO);
        }

        // Fixed-order scheduling: end first so that nothing runs at `duration`.
        let duration = cfg.sim.duration;
        self.queue.push(duration, Event::End);
        let late: Vec<(NodeId, SimTime)> = cfg
            .nodes
            .iter()
            .filter(|n| n.join_at > SimTime::ZERO && n.join_at < duration)
            .map(|n| (n.id, n.join_at))
            .collect();
        for (id, at) in late {
            self.queue.push(at, Event::Join(id));
        }
        if let Some(att) = &cfg.attacker {
            let step = att.interval();
            for target in att.targets.clone() {
                let phase = SimTime(self.rng.gen_range(0..step.0));
                if let Some(first) = att.schedule(phase).next() {
                    self.queue.push(first, Event::Attack(target));
                }
            }
        }
        self.queue.push(self.cfg.duty_cycle.sleep_start, Event::DutyBoundary { asleep: true });
        self.queue.push(self.cfg.duty_cycle.sleep_end, Event::DutyBoundary { asleep: false });
        self.queue.push(cfg.sim.query_offset, Event::Query);
        if cfg.sim.reconfigure_interval > SimTime::ZERO && cfg.sim.reconfigure_interval < duration {
            self.queue.push(cfg.sim.reconfigure_interval, Event::Reconfigure);
        }
        self.queue.push(cfg.thresholds.t_interval, Event::Rollover);

        self.sample_energy();
        self.elect(ReconfigureCause::Init, None)
    }

    // ---------------------------------------------------------------- loop

    fn event_loop(&mut self) {
        while let Some((t, _, ev)) = self.queue.pop() {
            self.now = t;
            match ev {
                Event::End => {
                    self.finish();
                }
                Event::Deliver(id) => self.deliver(id),
                Event::Overhear { mn, co, zo, packet } => self.overhear(mn, co, zo, packet),
                Event::CoDecision { co, pkt } => self.co_decide(co, pkt),
                Event::DutyBoundary { asleep } => self.duty_boundary(asleep),
                Event::HoldExpire(node) => self.hold_expire(node),
                Event::Query => self.query(),
                Event::Reconfigure => {
                    self.elect_logged(ReconfigureCause::Periodic, None);
                    let next = t + self.cfg.sim.reconfigure_interval;
                    if next < self.cfg.sim.duration {
                        self.queue.push(next, Event::Reconfigure);
                    }
                }
                Event::Attack(target) => self.attack(target),
                Event::Rollover => self.rollover(),
                Event::Join(node) => self.join(node),
            }
            if self.finished {
                break;
            }
        }
    }

    fn finish(&mut self) {
        if self.finished || self.finishing {
            return;
        }
        self.finishing = true;
        for (_, _, ev) in self.queue.drain_ordered() {
            if let Event::Deliver(id) = ev {
                if let Some(msg) = self.in_flight.remove(&id) {
                    self.drop_msg(&msg, DropReason::RunEnded);
                }
            }
        }
        self.settle_all();
        self.sample_energy();
        self.emit(TraceEvent::RunEnd {
            sent: self.sent,
            delivered: self.delivered,
            dropped: self.dropped,
        });
        self.finished = true;
    }

    // ---------------------------------------------------------------- energy

    fn settle(&mut self, id: NodeId) {
        let now = self.now;
        let model = &self.cfg.energy;
        let outcome = match self.network.node_mut(id) {
            Some(node) if node.joined => energy::settle(node, &mut self.energy, model, now),
            _ => return,
        };
        if outcome == ChargeOutcome::Depleted {
            self.on_death(id);
        }
    }

    fn settle_all(&mut self) {
        let ids: Vec<NodeId> = self.network.ids().collect();
        for id in ids {
            self.settle(id);
            if self.finished {
                return;
            }
        }
    }

    /// Charges an activity. Returns false if the node is (now) dead.
    fn spend(&mut self, id: NodeId, activity: Activity) -> bool {
        self.settle(id);
        let amount = self.cfg.energy.cost(activity);
        let now = self.now;
        let outcome = match self.network.node_mut(id) {
            Some(node) => energy::charge(node, &mut self.energy, now, activity, amount),
            None => return false,
        };
        match outcome {
            ChargeOutcome::Charged(_) => true,
            ChargeOutcome::Depleted => {
                self.on_death(id);
                false
            }
            ChargeOutcome::AlreadyDead => false,
        }
    }

    fn on_death(&mut self, id: NodeId) {
        debug!("node {id} died at {}", self.now);
        self.emit(TraceEvent::Death { node: id });
        let frac = energy::network_alive_fraction(&self.network);
        if !self.finishing && energy::check_deactivation(frac, self.cfg.thresholds.lifetime_threshold) {
            info!("network deactivated at {} (alive fraction {frac})", self.now);
            self.emit(TraceEvent::Deactivated { alive_fraction: frac });
            self.finish();
        }
    }

    fn sample_energy(&mut self) {
        let samples: Vec<(NodeId, crate::energy::Energy)> = self
            .network
            .nodes()
            .filter(|n| n.joined)
            .map(|n| (n.id, energy::residual_energy(n)))
            .collect();
        for (node, energy) in samples {
            self.emit(TraceEvent::EnergySample { node, energy });
        }
    }

    // ---------------------------------------------------------------- power

    fn duty_cycled(&self, id: NodeId) -> bool {
        self.network
            .node(id)
            .is_some_and(|n| n.category == NodeCategory::Simple && n.id != self.network.gn)
    }

    /// Scheduled phase of the duty cycle, half-open `[sleep_start, sleep_end)`.
    fn duty_asleep(&self, t: SimTime) -> bool {
        let s = &self.cfg.duty_cycle;
        let phase = t.0 % s.period.0;
        s.sleep_start.0 <= phase && phase < s.sleep_end.0
    }

    fn set_power(&mut self, id: NodeId, mode: PowerMode) {
        let current = match self.network.node(id) {
            Some(n) if n.is_alive() => n.power_mode,
            _ => return,
        };
        if current == mode {
            return;
        }
        self.settle(id);
        if let Some(n) = self.network.node_mut(id) {
            if !n.is_alive() {
                return;
            }
            n.power_mode = mode;
        }
        self.emit(TraceEvent::PowerMode { node: id, mode });
    }

    fn wants_sleep(&self, id: NodeId) -> bool {
        let Some(n) = self.network.node(id) else {
            return false;
        };
        if n.disposition == Disposition::Blocked || n.parked {
            return true;
        }
        self.duty_cycled(id) && self.duty_asleep(self.now)
    }

    fn held(&self, id: NodeId) -> bool {
        self.awake_until.get(&id).is_some_and(|t| *t > self.now)
    }

    /// Brings every live node's power mode in line with its current schedule.
    fn sync_power(&mut self) {
        let ids: Vec<NodeId> = self.network.nodes().filter(|n| n.joined && n.is_alive()).map(|n| n.id).collect();
        for id in ids {
            if self.wants_sleep(id) {
                if !self.held(id) {
                    self.set_power(id, PowerMode::Asleep);
                }
            } else {
                self.set_power(id, PowerMode::Awake);
            }
        }
    }

    fn duty_boundary(&mut self, asleep: bool) {
        let ids: Vec<NodeId> = self
            .network
            .nodes()
            .filter(|n| n.joined && n.is_alive() && n.category == NodeCategory::Simple && n.id != self.network.gn)
            .map(|n| n.id)
            .collect();
        for id in ids {
            if asleep {
                if !self.held(id) {
                    self.set_power(id, PowerMode::Asleep);
                }
            } else if !self.wants_sleep(id) {
                self.set_power(id, PowerMode::Awake);
            }
        }
        let s = self.cfg.duty_cycle;
        let at = if asleep { s.sleep_start } else { s.sleep_end };
        let next = SimTime(self.now.0 - self.now.0 % s.period.0 + s.period.0 + at.0 % s.period.0);
        let next = if next <= self.now { next + s.period } else { next };
        self.queue.push(next, Event::DutyBoundary { asleep });
    }

    fn hold_expire(&mut self, id: NodeId) {
        if self.held(id) {
            return;
        }
        if self.wants_sleep(id) {
            self.set_power(id, PowerMode::Asleep);
        }
    }

    fn wake_on_delivery(&mut self, id: NodeId) {
        let asleep = self.network.node(id).is_some_and(|n| n.power_mode == PowerMode::Asleep);
        let until = self.now + self.cfg.wake_hold;
        let prev = self.awake_until.insert(id, until);
        if asleep {
            self.set_power(id, PowerMode::Awake);
        }
        if prev.is_none_or(|p| p < until) {
            self.queue.push(until, Event::HoldExpire(id));
        }
    }

    // ---------------------------------------------------------------- messages

    fn send(&mut self, src: NodeId, dst: NodeId, body: MessageBody) -> Option<MessageId> {
        self.send_observed(src, dst, body, &[])
    }

    /// Sends a message; `overhear` schedules monitor observations of the same
    /// transmission, which are processed before the delivery itself.
    fn send_observed(
        &mut self,
        src: NodeId,
        dst: NodeId,
        body: MessageBody,
        overhear: &[(NodeId, NodeId)],
    ) -> Option<MessageId> {
        if !self.network.can_communicate(src) {
            return None;
        }
        let id = self.post(src, dst, body, false, overhear);
        self.spend(src, Activity::Tx);
        Some(id)
    }

    fn post(
        &mut self,
        src: NodeId,
        dst: NodeId,
        body: MessageBody,
        forged: bool,
        overhear: &[(NodeId, NodeId)],
    ) -> MessageId {
        let id = MessageId(self.next_msg);
        if self.finished {
            return id;
        }
        self.next_msg += 1;
        let (pkt, fabricated) = match &body {
            MessageBody::DataPacket { packet } => (Some(packet.pkt_id), packet.fabricated),
            _ => (None, false),
        };
        self.emit(TraceEvent::Send {
            msg: id.0,
            src,
            dst,
            msg_kind: body.kind(),
            forged,
            pkt,
            fabricated,
        });
        self.sent += 1;
        let at = self.now + self.latency();
        if let MessageBody::DataPacket { packet } = &body {
            for (mn, co) in overhear {
                self.queue.push(
                    at,
                    Event::Overhear {
                        mn: *mn,
                        co: *co,
                        zo: src,
                        packet: packet.clone(),
                    },
                );
            }
        }
        self.in_flight.insert(
            id,
            Message {
                id,
                src,
                dst,
                sent_at: self.now,
                forged,
                body,
            },
        );
        self.queue.push(at, Event::Deliver(id));
        id
    }

    fn drop_msg(&mut self, msg: &Message, reason: DropReason) {
        self.dropped += 1;
        self.emit(TraceEvent::Drop {
            msg: msg.id.0,
            src: msg.src,
            dst: msg.dst,
            msg_kind: msg.body.kind(),
            forged: msg.forged,
            reason,
        });
    }

    fn deliver(&mut self, id: MessageId) {
        let Some(msg) = self.in_flight.remove(&id) else {
            return;
        };
        if !msg.forged && !self.network.can_communicate(msg.src) {
            self.drop_msg(&msg, DropReason::SrcDown);
            return;
        }
        let reason = match self.network.node(msg.dst) {
            None => Some(DropReason::DstUnknown),
            Some(n) if !n.joined => Some(DropReason::DstUnknown),
            Some(n) if n.disposition == Disposition::Dead => Some(DropReason::DstDead),
            Some(n) if n.disposition == Disposition::Blocked => Some(DropReason::DstBlocked),
            _ => None,
        };
        if let Some(r) = reason {
            self.drop_msg(&msg, r);
            return;
        }
        self.settle(msg.dst);
        if !self.network.can_communicate(msg.dst) {
            self.drop_msg(&msg, DropReason::DstDead);
            return;
        }
        self.delivered += 1;
        self.emit(TraceEvent::Deliver {
            msg: msg.id.0,
            src: msg.src,
            dst: msg.dst,
            msg_kind: msg.body.kind(),
            forged: msg.forged,
        });
        if !self.spend(msg.dst, Activity::Rx) {
            return;
        }
        if !matches!(msg.body, MessageBody::SleepSignal) {
            self.wake_on_delivery(msg.dst);
        }
        let (src, dst) = (msg.src, msg.dst);
        match msg.body {
            MessageBody::Hello { ack_requested, .. } => {
                if ack_requested {
                    self.send(dst, src, MessageBody::Ack);
                }
            }
            MessageBody::EnergyQuery => {
                let energy = self.network.node(dst).map(|n| n.energy).unwrap_or_default();
                self.send(dst, src, MessageBody::EnergyReport { energy });
            }
            MessageBody::Ack | MessageBody::EnergyReport { .. } | MessageBody::BlockNotice { .. } => {}
            MessageBody::SensingQuery { target_zone } => {
                if dst == target_zone {
                    self.zo_issue_coins(dst);
                } else {
                    self.send(dst, target_zone, MessageBody::SensingQuery { target_zone });
                }
            }
            MessageBody::WakeUpCoin { coin_id, .. } => self.sn_on_coin(dst, coin_id),
            MessageBody::DataPacket { packet } => self.on_data(src, dst, packet),
            MessageBody::WarningTicket { ticket } => self.on_ticket(dst, ticket),
            MessageBody::SleepSignal => self.set_power(dst, PowerMode::Asleep),
        }
    }

    // ---------------------------------------------------------------- data path

    fn query(&mut self) {
        let gn = self.network.gn;
        let targets: Vec<(NodeId, NodeId)> = self
            .assignment
            .clusters
            .iter()
            .flat_map(|c| c.zos.iter().map(move |z| (c.co, *z)))
            .collect();
        for (co, zo) in targets {
            self.send(gn, co, MessageBody::SensingQuery { target_zone: zo });
        }
        let next = self.now + self.cfg.sim.query_period;
        self.queue.push(next, Event::Query);
    }

    fn zo_issue_coins(&mut self, zo: NodeId) {
        let members: Vec<NodeId> = self
            .assignment
            .cluster_of_zo(zo)
            .and_then(|c| c.zones.get(&zo))
            .map(|m| m.iter().copied().collect())
            .unwrap_or_default();
        for sn in members {
            if self
                .network
                .node(sn)
                .is_some_and(|n| n.disposition == Disposition::Blocked)
            {
                continue;
            }
            if !self.network.can_communicate(zo) {
                return;
            }
            let coin = CoinId(self.next_coin);
            self.next_coin += 1;
            self.coins.issue(sn, coin, self.now);
            self.emit(TraceEvent::CoinIssued { zo, sn, coin });
            self.send(zo, sn, MessageBody::WakeUpCoin { coin_id: coin, issuer: zo });
        }
    }

    fn sn_on_coin(&mut self, sn: NodeId, coin: CoinId) {
        let parked = self.network.node(sn).is_some_and(|n| n.parked);
        let zo = if parked { None } else { self.assignment.zone_owner(sn) };
        let Some(zo) = zo else {
            self.emit(TraceEvent::UnsolicitedWake { node: sn, coin });
            return;
        };
        if !self.spend(sn, Activity::Sense) {
            return;
        }
        let node = self.network.node(sn).expect("live node");
        let packet = Packet {
            pkt_id: PacketId(self.next_pkt),
            origin: sn,
            status: None,
            payload_kind: node.sensing,
            created_at: self.now,
            receipt_times: Vec::new(),
            trigger_coin: coin,
            reported_energy: node.energy,
            fabricated: false,
        };
        self.next_pkt += 1;
        self.emit(TraceEvent::PacketCreated {
            pkt: packet.pkt_id,
            origin: sn,
            zo,
        });
        self.send(sn, zo, MessageBody::DataPacket { packet });
    }

    fn on_data(&mut self, from: NodeId, at: NodeId, mut packet: Packet) {
        packet.receipt_times.push(self.now);
        if at == self.network.gn {
            if !packet.fabricated {
                self.emit(TraceEvent::PacketDelivered {
                    pkt: packet.pkt_id,
                    origin: packet.origin,
                    gn: at,
                });
            }
            return;
        }
        if self.assignment.cluster_of_co(at).is_some() && from != packet.origin {
            self.co_receive(at, packet);
        } else if self.assignment.cluster_of_zo(at).is_some() {
            self.zo_receive(at, packet);
        } else {
            debug!("node {at} holds no role for packet {:?}; discarded", packet.pkt_id);
        }
    }

    fn zo_receive(&mut self, zo: NodeId, mut packet: Packet) {
        let Some(cluster) = self.assignment.cluster_of_zo(zo) else {
            return;
        };
        let co = cluster.co;
        let in_zone = cluster.zones.get(&zo).is_some_and(|m| m.contains(&packet.origin));
        let module = self.network.node(zo).is_some_and(|n| n.detection_module_enabled);
        if self.detection_on() && module {
            let origin = packet.origin;
            if !self.coins.is_known(packet.trigger_coin) {
                self.coins.record_unsolicited(origin);
                self.emit(TraceEvent::CoinUnsolicited {
                    zo,
                    sn: origin,
                    coin: packet.trigger_coin,
                });
            }
            let schedule = self
                .network
                .node(origin)
                .map(|n| n.sleep_schedule)
                .unwrap_or(self.cfg.duty_cycle);
            let wake_count = self.coins.wake_count(origin);
            let verdict = anomaly_detect(in_zone, &schedule, self.now, wake_count, self.cfg.thresholds.th_token);
            let compromised = self.compromised(zo, CompromiseKind::ZoFalseFlag).is_some();
            let status = if compromised {
                PacketStatus::Suspected
            } else {
                verdict.status
            };
            packet.status = Some(status);
            self.emit(TraceEvent::Stamp {
                zo,
                pkt: packet.pkt_id,
                origin,
                status,
                in_sleep: verdict.in_sleep,
                wake_count,
                unknown_origin: verdict.unknown_origin,
                compromised,
            });
            if !self.spend(zo, Activity::Detect) {
                return;
            }
        }
        let overhear: Vec<(NodeId, NodeId)> = if self.detection_on() {
            observers(&self.assignment, &self.network, co, zo)
                .into_iter()
                .map(|mn| (mn, co))
                .collect()
        } else {
            Vec::new()
        };
        self.send_observed(zo, co, MessageBody::DataPacket { packet }, &overhear);
    }

    fn overhear(&mut self, mn: NodeId, co: NodeId, zo: NodeId, packet: Packet) {
        let active = self.network.can_communicate(mn)
            && self.network.node(mn).is_some_and(|n| n.detection_module_enabled)
            && self.assignment.cluster_of_mn(mn).is_some_and(|c| c.co == co);
        if !active {
            return;
        }
        if !self.spend(mn, Activity::Rx) || !self.spend(mn, Activity::Detect) {
            return;
        }
        let th = &self.cfg.thresholds;
        let origin = packet.origin;
        let count = self.det.observe_packet(mn, origin, packet.pkt_id, self.now);
        let honest = confirm_intrusion(count, packet.reported_energy, th, self.cfg.band_mode);
        let compromised = self.compromised(mn, CompromiseKind::MnFalseTicket).is_some();
        let ticketed = honest || compromised;
        let status = packet.status.unwrap_or(PacketStatus::Genuine);
        self.emit(TraceEvent::Observe {
            mn,
            zo,
            co,
            pkt: packet.pkt_id,
            origin,
            status,
            count,
            residual: packet.reported_energy,
            ticketed,
            compromised,
        });
        if ticketed {
            let ticket = WarningTicket {
                issuer: mn,
                subject_node: origin,
                subject_packet: Some(packet.pkt_id),
                issued_at: self.now,
                reason: TicketReason::PacketCountAnomaly,
            };
            self.send(mn, co, MessageBody::WarningTicket { ticket });
        } else if status == PacketStatus::Suspected {
            let n = self.det.record_false_detection(mn, zo, packet.pkt_id, self.now);
            self.emit(TraceEvent::FalseDetection {
                mn,
                zo,
                pkt: packet.pkt_id,
                count: n,
            });
            if zo_false_detection_exceeded(n, th.false_detection_threshold) {
                self.det.reset_false_detection(mn, zo);
                let ticket = WarningTicket {
                    issuer: mn,
                    subject_node: zo,
                    subject_packet: None,
                    issued_at: self.now,
                    reason: TicketReason::ZoFalseDetection,
                };
                self.send(mn, co, MessageBody::WarningTicket { ticket });
            }
        }
    }

    fn co_receive(&mut self, co: NodeId, packet: Packet) {
        let module = self.network.node(co).is_some_and(|n| n.detection_module_enabled);
        if self.detection_on() && module {
            self.det.open_packet(packet.pkt_id);
            let pkt = packet.pkt_id;
            self.pending.insert(pkt, packet);
            let at = self.now + self.latency();
            self.queue.push(at, Event::CoDecision { co, pkt });
        } else {
            self.co_forward(co, packet);
        }
    }

    fn co_forward(&mut self, co: NodeId, packet: Packet) {
        let gn = self.network.gn;
        let extra = self.compromised(co, CompromiseKind::CoFlowInflate).unwrap_or(0);
        let mut outgoing = vec![packet.clone()];
        for _ in 0..extra {
            let mut fake = packet.clone();
            fake.pkt_id = PacketId(self.next_pkt);
            self.next_pkt += 1;
            fake.fabricated = true;
            outgoing.push(fake);
        }
        let watchers: Vec<NodeId> = if self.detection_on() {
            self.assignment
                .cluster_of_co(co)
                .map(|c| c.mns.clone())
                .unwrap_or_default()
        } else {
            Vec::new()
        };
        for p in outgoing {
            if self.send(co, gn, MessageBody::DataPacket { packet: p }).is_none() {
                break;
            }
            for mn in &watchers {
                let active = self.network.can_communicate(*mn)
                    && self.network.node(*mn).is_some_and(|n| n.detection_module_enabled)
                    && self.network.in_range(*mn, co);
                if active {
                    self.det.observe_flow(*mn, co);
                }
            }
        }
    }

    fn co_decide(&mut self, co: NodeId, pkt: PacketId) {
        let Some(packet) = self.pending.remove(&pkt) else {
            return;
        };
        let issuers = self.det.close_packet(pkt);
        if !self.network.can_communicate(co) {
            debug!("owner {co} went down holding packet {pkt:?}");
            return;
        }
        if !self.spend(co, Activity::Detect) {
            return;
        }
        self.det.record_decision_issuers(co, pkt, &issuers, self.now);
        let status = packet.status.unwrap_or(PacketStatus::Genuine);
        let action = decide_action(status, &issuers);
        let origin = packet.origin;
        let (count, evidence) = self.det.warning_evidence(origin, self.now);
        self.emit(TraceEvent::Decision {
            co,
            pkt,
            origin,
            status: packet.status,
            issuers: issuers.iter().copied().collect(),
            action,
            warning_count: count,
            warning_issuers: evidence.len(),
        });
        if action == Action::DropFake {
            let normal = self
                .network
                .node(origin)
                .is_some_and(|n| n.disposition == Disposition::Normal);
            if normal {
                if let Some(n) = self.network.node_mut(origin) {
                    n.disposition = Disposition::Observed;
                }
                self.emit(TraceEvent::Disposition {
                    node: origin,
                    disposition: Disposition::Observed,
                });
            }
        }
        let blockable = self
            .network
            .node(origin)
            .is_some_and(|n| matches!(n.disposition, Disposition::Normal | Disposition::Observed));
        if blockable && should_block(count, evidence.len(), self.cfg.thresholds.warning_block_threshold) {
            self.block(
                origin,
                co,
                Justification::WarningThreshold {
                    count,
                    issuers: evidence.into_iter().collect(),
                },
            );
        }

        if let Some(cluster) = self.assignment.cluster_of_co(co) {
            let mns = cluster.mns.clone();
            let reporting = self.det.reporting_mns(co, self.now);
            let unc = self.det.uncorroborated(&mns, self.now);
            if let Some((culprit, n, _rate)) = watchdog_mn(mns.len(), &reporting, &unc, &self.cfg.thresholds) {
                if self.network.can_communicate(culprit) {
                    self.block(
                        culprit,
                        co,
                        Justification::MnWatchdog {
                            uncorroborated: n,
                            reporting: reporting.iter().copied().collect(),
                            total_mns: mns.len(),
                        },
                    );
                    self.det.forget_mn(culprit);
                    self.elect_logged(ReconfigureCause::Watchdog, Some(culprit));
                }
            }
        }

        if action == Action::Forward && self.network.can_communicate(co) {
            self.co_forward(co, packet);
        }
    }

    fn on_ticket(&mut self, receiver: NodeId, ticket: WarningTicket) {
        let matched = match ticket.reason {
            TicketReason::PacketCountAnomaly | TicketReason::LowResidualEnergy => {
                self.det.receive_ticket(&ticket, self.now)
            }
            _ => true,
        };
        self.emit(TraceEvent::TicketReceived {
            receiver,
            issuer: ticket.issuer,
            subject_node: ticket.subject_node,
            subject_packet: ticket.subject_packet,
            reason: ticket.reason,
            matched,
        });
        if !matched {
            warn!("ticket from {} references unknown packet", ticket.issuer);
        }
        match ticket.reason {
            TicketReason::ZoFalseDetection => {
                let zo = ticket.subject_node;
                let reporters = self.det.report_zo(zo, ticket.issuer, self.now);
                let still_zo = self.assignment.cluster_of_zo(zo).is_some_and(|c| c.co == receiver);
                if zo_block_confirmed(reporters.len()) && still_zo && self.network.can_communicate(zo) {
                    self.block(
                        zo,
                        receiver,
                        Justification::ZoWatchdog {
                            reporters: reporters.into_iter().collect(),
                        },
                    );
                    self.elect_logged(ReconfigureCause::Watchdog, Some(zo));
                }
            }
            TicketReason::CoFlowAnomaly if receiver == self.network.gn => {
                let co = ticket.subject_node;
                let reporters = self.det.report_co(co, ticket.issuer, self.now);
                let still_co = self.assignment.cluster_of_co(co).is_some();
                if co_block_confirmed(reporters.len()) && still_co && self.network.can_communicate(co) {
                    self.block(
                        co,
                        receiver,
                        Justification::CoWatchdog {
                            reporters: reporters.into_iter().collect(),
                        },
                    );
                    self.elect_logged(ReconfigureCause::Watchdog, Some(co));
                }
            }
            _ => {}
        }
    }

    fn block(&mut self, node: NodeId, by: NodeId, justification: Justification) {
        self.settle(node);
        let was_module = match self.network.node_mut(node) {
            Some(n) if n.can_communicate() => {
                n.disposition = Disposition::Blocked;
                std::mem::replace(&mut n.detection_module_enabled, false)
            }
            _ => return,
        };
        info!("node {node} blocked by {by} at {}", self.now);
        self.emit(TraceEvent::Block { node, by, justification });
        self.emit(TraceEvent::Disposition {
            node,
            disposition: Disposition::Blocked,
        });
        if was_module {
            self.emit(TraceEvent::DetectionModule { node, enabled: false });
        }
        self.set_power(node, PowerMode::Asleep);

        let gn = self.network.gn;
        let mut notify: BTreeSet<NodeId> = BTreeSet::new();
        for c in &self.assignment.clusters {
            let involved = c.co == by || c.co == node || c.mns.contains(&node) || c.zos.contains(&node)
                || c.zones.values().any(|m| m.contains(&node));
            if involved {
                notify.insert(c.co);
                notify.extend(c.mns.iter().copied());
                notify.extend(c.zos.iter().copied());
            }
        }
        notify.insert(gn);
        notify.remove(&node);
        notify.remove(&by);
        for dst in notify {
            if self.network.can_communicate(dst) {
                self.send(by, dst, MessageBody::BlockNotice { subject: node });
            }
        }
    }

    // ---------------------------------------------------------------- roles

    fn elect_logged(&mut self, cause: ReconfigureCause, subject: Option<NodeId>) {
        if let Err(e) = self.elect(cause, subject) {
            warn!("reconfiguration failed: {e}");
        }
    }

    fn elect(&mut self, cause: ReconfigureCause, subject: Option<NodeId>) -> Result<(), ElectionError> {
        self.settle_all();
        if self.finished {
            return Ok(());
        }
        let before: BTreeMap<NodeId, (Designation, bool)> = self
            .network
            .nodes()
            .map(|n| (n.id, (n.desig, n.detection_module_enabled)))
            .collect();
        let result = match cause {
            ReconfigureCause::Init => elect_roles(&mut self.network, &self.params, &mut self.rng),
            _ => reconfigure(&mut self.network, &self.assignment, &self.params, &mut self.rng)
                .map(|r| r.election),
        };
        self.emit(TraceEvent::Reconfigure { cause, subject });
        let election = match result {
            Ok(e) => e,
            Err(e) => {
                self.emit(TraceEvent::Degraded { detail: e.to_string() });
                self.assignment = RoleAssignment {
                    gn: self.network.gn,
                    ..RoleAssignment::default()
                };
                self.det.retain_flow_pairs(&BTreeSet::new());
                if cause == ReconfigureCause::Init {
                    return Err(e);
                }
                self.emit_role_changes(&before);
                return Ok(());
            }
        };
        if !self.detection_on() {
            for n in self.network.nodes_mut() {
                n.detection_module_enabled = false;
            }
        }
        self.assignment = election.assignment;
        for note in election.notes {
            match note {
                ElectionNote::Unreachable { node } => self.emit(TraceEvent::Unreachable { node }),
                other => self.emit(TraceEvent::Degraded {
                    detail: serde_json::to_string(&other).expect("notes serialize"),
                }),
            }
        }
        let clusters = self.assignment.clusters.clone();
        let mut pairs = BTreeSet::new();
        for c in &clusters {
            self.emit(TraceEvent::ClusterFormed {
                co: c.co,
                mns: c.mns.clone(),
                zos: c.zos.clone(),
                zones: c
                    .zones
                    .iter()
                    .map(|(zo, m)| ZoneRecord {
                        zo: *zo,
                        members: m.iter().copied().collect(),
                    })
                    .collect(),
            });
            for mn in &c.mns {
                pairs.insert((*mn, c.co));
            }
        }
        self.det.retain_flow_pairs(&pairs);
        self.emit_role_changes(&before);
        self.sync_power();
        self.control_traffic();
        Ok(())
    }

    fn emit_role_changes(&mut self, before: &BTreeMap<NodeId, (Designation, bool)>) {
        let after: Vec<(NodeId, Designation, bool)> = self
            .network
            .nodes()
            .map(|n| (n.id, n.desig, n.detection_module_enabled))
            .collect();
        let init = self.trace.iter().all(|r| !matches!(r.event, TraceEvent::RoleAssigned { .. }));
        for (id, desig, module) in after {
            let (old_desig, old_module) = before.get(&id).copied().unwrap_or((Designation::Unassigned, false));
            if init || old_desig != desig {
                self.emit(TraceEvent::RoleAssigned { node: id, desig });
            }
            if old_module != module {
                self.emit(TraceEvent::DetectionModule { node: id, enabled: module });
            }
        }
    }

    /// Discovery and role-announcement traffic that accompanies an election.
    fn control_traffic(&mut self) {
        let gn = self.network.gn;
        let g_neighbors: Vec<NodeId> = self.assignment.g_neighbors.iter().copied().collect();
        let profile = |n: NodeId, d: Designation| Profile { node: n, desig: d };
        for n in &g_neighbors {
            self.send(
                gn,
                *n,
                MessageBody::Hello {
                    profile: profile(gn, Designation::Gn),
                    ack_requested: true,
                },
            );
            self.send(gn, *n, MessageBody::EnergyQuery);
        }
        let clusters = self.assignment.clusters.clone();
        for c in clusters {
            for m in &c.members {
                self.send(
                    c.co,
                    *m,
                    MessageBody::Hello {
                        profile: profile(c.co, Designation::Co),
                        ack_requested: true,
                    },
                );
            }
            for (zo, members) in &c.zones {
                for m in members {
                    self.send(
                        *zo,
                        *m,
                        MessageBody::Hello {
                            profile: profile(*zo, Designation::Zo),
                            ack_requested: true,
                        },
                    );
                }
            }
        }
    }

    fn join(&mut self, id: NodeId) {
        let Some(n) = self.network.node_mut(id) else {
            return;
        };
        if n.joined {
            return;
        }
        n.joined = true;
        let initial = n.energy;
        let parked = should_park(self.now, self.cfg.sim.reconfigure_interval);
        n.parked = parked;
        self.energy.open(id, initial, self.now);
        self.network.refresh_neighbors();
        self.emit(TraceEvent::NodeJoin { node: id, parked });
        if parked {
            self.set_power(id, PowerMode::Asleep);
            let gn = self.network.gn;
            self.send(gn, id, MessageBody::SleepSignal);
        } else if self.wants_sleep(id) {
            self.set_power(id, PowerMode::Asleep);
        }
    }

    // ---------------------------------------------------------------- attack, windows

    fn attack(&mut self, target: NodeId) {
        let Some(model) = self.cfg.attacker.as_ref() else {
            return;
        };
        match attacker_step(model, &self.network, target, self.now) {
            AttackOutcome::Inject => {
                let coin = CoinId(FORGED_COIN_BASE + self.next_forged);
                self.next_forged += 1;
                let source = model.source;
                self.post(
                    source,
                    target,
                    MessageBody::WakeUpCoin {
                        coin_id: coin,
                        issuer: source,
                    },
                    true,
                    &[],
                );
            }
            AttackOutcome::TargetDead => {
                self.emit(TraceEvent::AttackNoop { target });
                return;
            }
            AttackOutcome::Inactive => return,
        }
        let next = self.now + model.interval();
        if next < model.stop {
            self.queue.push(next, Event::Attack(target));
        }
    }

    fn rollover(&mut self) {
        self.settle_all();
        if self.finished {
            return;
        }
        self.rollovers += 1;
        self.emit(TraceEvent::WindowRollover { index: self.rollovers });
        self.coins.rollover(self.now);
        if self.detection_on() {
            let gn = self.network.gn;
            let pairs: Vec<(NodeId, NodeId)> = self
                .assignment
                .clusters
                .iter()
                .flat_map(|c| c.mns.iter().map(move |mn| (*mn, c.co)))
                .collect();
            for (mn, co) in pairs {
                let active = self.network.can_communicate(mn)
                    && self.network.node(mn).is_some_and(|n| n.detection_module_enabled);
                if !active {
                    continue;
                }
                let (history, volume) = self.det.close_flow_window(mn, co);
                let abnormal = flow_abnormal(&history, volume, self.cfg.thresholds.flow_factor);
                self.emit(TraceEvent::FlowCheck {
                    mn,
                    co,
                    volume,
                    history,
                    abnormal,
                });
                if abnormal {
                    let ticket = WarningTicket {
                        issuer: mn,
                        subject_node: co,
                        subject_packet: None,
                        issued_at: self.now,
                        reason: TicketReason::CoFlowAnomaly,
                    };
                    self.send(mn, gn, MessageBody::WarningTicket { ticket });
                }
            }
        }
        self.sample_energy();
        let next = self.now + self.cfg.thresholds.t_interval;
        if next < self.cfg.sim.duration {
            self.queue.push(next, Event::Rollover);
        }
    }
}
