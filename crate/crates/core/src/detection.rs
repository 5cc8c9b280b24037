//! Three-stage intrusion detection: zone-owner anomaly stamping, monitor-node
//! confirmation and cluster-owner action, plus watchdogs over the role holders
//! themselves.
//!
//! The decision functions are pure. [`DetectionLedger`] keeps the sliding
//! windows they are evaluated over.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::energy::Energy;
use crate::protocol::{in_sleep_window, PacketId, PacketStatus, SleepSchedule};
use crate::time::SimTime;
use crate::topology::NodeId;

/// How the packet-count band in the confirmation stage is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandMode {
    /// Ticket when the count is outside `[th_min, th_max]`.
    #[default]
    Outside,
    /// Ticket when the count is strictly between `th_min` and `th_max`.
    Inside,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub th_token: u32,
    pub th_min: u32,
    pub th_max: u32,
    pub th_energy: Energy,
    /// May be infinite, which disables threshold blocking.
    pub warning_block_threshold: f64,
    pub t_interval: SimTime,
    pub false_detection_threshold: u32,
    pub ticket_rate_threshold: f64,
    pub flow_factor: f64,
    pub lifetime_threshold: f64,
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), String> {
        if self.th_min >= self.th_max {
            return Err("th_min must be below th_max".into());
        }
        if self.th_token < 1 {
            return Err("th_token must be at least 1".into());
        }
        if !(self.ticket_rate_threshold > 0.0 && self.ticket_rate_threshold <= 1.0) {
            return Err("ticket_rate_threshold must lie in (0, 1]".into());
        }
        if !(self.flow_factor > 1.0) {
            return Err("flow_factor must exceed 1".into());
        }
        if self.t_interval == SimTime::ZERO {
            return Err("t_interval must be positive".into());
        }
        if self.warning_block_threshold.is_nan() || self.warning_block_threshold < 0.0 {
            return Err("warning_block_threshold must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.lifetime_threshold) {
            return Err("lifetime_threshold must lie in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TicketReason {
    PacketCountAnomaly,
    LowResidualEnergy,
    ZoFalseDetection,
    CoFlowAnomaly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarningTicket {
    pub issuer: NodeId,
    pub subject_node: NodeId,
    pub subject_packet: Option<PacketId>,
    pub issued_at: SimTime,
    pub reason: TicketReason,
}

// ---------------------------------------------------------------------------
// stage 1: zone owner

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StampVerdict {
    pub status: PacketStatus,
    pub in_sleep: bool,
    pub unknown_origin: bool,
}

/// Suspected iff the packet arrived inside the origin's sleep window, the
/// origin saw more than `th_token` wake-ups this interval, or the origin is
/// not a member of the zone.
pub fn anomaly_detect(
    origin_in_zone: bool,
    schedule: &SleepSchedule,
    t1: SimTime,
    wake_count: u32,
    th_token: u32,
) -> StampVerdict {
    let in_sleep = in_sleep_window(schedule, t1);
    let suspected = !origin_in_zone || in_sleep || wake_count > th_token;
    StampVerdict {
        status: if suspected {
            PacketStatus::Suspected
        } else {
            PacketStatus::Genuine
        },
        in_sleep,
        unknown_origin: !origin_in_zone,
    }
}

// ---------------------------------------------------------------------------
// stage 2: monitor node

pub fn count_out_of_band(count: u32, th_min: u32, th_max: u32, mode: BandMode) -> bool {
    match mode {
        BandMode::Outside => count < th_min || count > th_max,
        BandMode::Inside => th_min < count && count < th_max,
    }
}

/// A ticket is due when the windowed packet count is anomalous and the
/// origin's residual energy is below `th_energy`.
pub fn confirm_intrusion(
    window_count: u32,
    residual: Energy,
    thresholds: &Thresholds,
    mode: BandMode,
) -> bool {
    count_out_of_band(window_count, thresholds.th_min, thresholds.th_max, mode)
        && residual < thresholds.th_energy
}

// ---------------------------------------------------------------------------
// stage 3: cluster owner

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Forward,
    DropErroneous,
    DropFake,
}

/// Tickets from two or more distinct monitors reject the packet whatever its
/// status; a suspected packet with no ticket is erroneous; anything else is
/// forwarded.
pub fn decide_action(status: PacketStatus, issuers: &BTreeSet<NodeId>) -> Action {
    if issuers.len() >= 2 {
        Action::DropFake
    } else if status == PacketStatus::Suspected && issuers.is_empty() {
        Action::DropErroneous
    } else {
        Action::Forward
    }
}

/// cnt(Warning) rule. The windowed count must strictly exceed the threshold
/// and the tickets must come from at least two distinct monitors.
pub fn should_block(window_tickets: u32, distinct_issuers: usize, threshold: f64) -> bool {
    (window_tickets as f64) > threshold && distinct_issuers >= 2
}

// ---------------------------------------------------------------------------
// watchdogs

/// ZO watchdog, monitor side: too many un-ticketed suspected packets.
pub fn zo_false_detection_exceeded(false_count: usize, threshold: u32) -> bool {
    false_count > threshold as usize
}

/// ZO watchdog, owner side: act on reports from at least two monitors.
pub fn zo_block_confirmed(distinct_reporters: usize) -> bool {
    distinct_reporters >= 2
}

/// MN watchdog. When the share of monitors that reported within the window
/// exceeds `ticket_rate_threshold`, the monitor with the most uncorroborated
/// tickets above `false_detection_threshold` is named (lowest id on ties).
pub fn watchdog_mn(
    total_mns: usize,
    reporting: &BTreeSet<NodeId>,
    uncorroborated: &BTreeMap<NodeId, usize>,
    thresholds: &Thresholds,
) -> Option<(NodeId, usize, f64)> {
    if total_mns == 0 || reporting.is_empty() {
        return None;
    }
    let rate = reporting.len() as f64 / total_mns as f64;
    if rate <= thresholds.ticket_rate_threshold {
        return None;
    }
    uncorroborated
        .iter()
        .filter(|(_, c)| **c > thresholds.false_detection_threshold as usize)
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(mn, c)| (*mn, *c, rate))
}

/// Number of closed windows the flow baseline is averaged over.
pub const FLOW_HISTORY: usize = 4;

/// CO flow watchdog: the closing window's forward volume exceeds
/// `flow_factor` times the mean of the previous [`FLOW_HISTORY`] windows.
/// Without a full history there is no baseline and nothing is flagged.
pub fn flow_abnormal(history: &[u32], volume: u32, flow_factor: f64) -> bool {
    if history.len() < FLOW_HISTORY {
        return false;
    }
    let recent = &history[history.len() - FLOW_HISTORY..];
    let mean = recent.iter().map(|v| *v as f64).sum::<f64>() / FLOW_HISTORY as f64;
    volume as f64 > flow_factor * mean
}

/// CO flow watchdog, gateway side: more than one monitor must report.
pub fn co_block_confirmed(distinct_reporters: usize) -> bool {
    distinct_reporters >= 2
}

// ---------------------------------------------------------------------------
// ledger

/// Timestamped entries covering the half-open span `(now - span, now]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlidingWindow<T> {
    span: SimTime,
    items: VecDeque<(SimTime, T)>,
}

impl<T> SlidingWindow<T> {
    pub fn new(span: SimTime) -> Self {
        SlidingWindow {
            span,
            items: VecDeque::new(),
        }
    }

    pub fn push(&mut self, at: SimTime, item: T) {
        self.prune(at);
        self.items.push_back((at, item));
    }

    pub fn prune(&mut self, now: SimTime) {
        while let Some((t, _)) = self.items.front() {
            if t.0 + self.span.0 <= now.0 {
                self.items.pop_front();
            } else {
                break;
            }
        }
    }

    pub fn count(&mut self, now: SimTime) -> usize {
        self.prune(now);
        self.items.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter().map(|(_, v)| v)
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }
}

impl<T: Ord + Clone> SlidingWindow<T> {
    pub fn distinct(&mut self, now: SimTime) -> BTreeSet<T> {
        self.prune(now);
        self.items.iter().map(|(_, v)| v.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionLedger {
    span: SimTime,
    /// count(p_i from N_i) as seen by each monitor.
    mn_packets: BTreeMap<(NodeId, NodeId), SlidingWindow<PacketId>>,
    /// Tickets received by the cluster owner about each sensing node.
    co_tickets: BTreeMap<NodeId, SlidingWindow<NodeId>>,
    /// Ticket issuers per packet awaiting the owner's decision.
    pending: BTreeMap<PacketId, BTreeSet<NodeId>>,
    /// Un-ticketed suspected packets per (monitor, zone owner).
    zo_false: BTreeMap<(NodeId, NodeId), SlidingWindow<PacketId>>,
    /// False-detection reports received by the owner about each zone owner.
    zo_reports: BTreeMap<NodeId, SlidingWindow<NodeId>>,
    /// Packets where a monitor was the sole ticket issuer.
    mn_uncorroborated: BTreeMap<NodeId, SlidingWindow<PacketId>>,
    /// Ticket issuers seen by each cluster owner.
    mn_reporting: BTreeMap<NodeId, SlidingWindow<NodeId>>,
    /// Current-window CO forward volume per (monitor, cluster owner).
    flow_current: BTreeMap<(NodeId, NodeId), u32>,
    flow_history: BTreeMap<(NodeId, NodeId), Vec<u32>>,
    /// Flow-anomaly reports received by the gateway about each cluster owner.
    co_reports: BTreeMap<NodeId, SlidingWindow<NodeId>>,
}

impl DetectionLedger {
    pub fn new(span: SimTime) -> Self {
        DetectionLedger {
            span,
            mn_packets: BTreeMap::new(),
            co_tickets: BTreeMap::new(),
            pending: BTreeMap::new(),
            zo_false: BTreeMap::new(),
            zo_reports: BTreeMap::new(),
            mn_uncorroborated: BTreeMap::new(),
            mn_reporting: BTreeMap::new(),
            flow_current: BTreeMap::new(),
            flow_history: BTreeMap::new(),
            co_reports: BTreeMap::new(),
        }
    }

    fn window<K: Ord, T>(
        map: &mut BTreeMap<K, SlidingWindow<T>>,
        key: K,
        span: SimTime,
    ) -> &mut SlidingWindow<T> {
        map.entry(key).or_insert_with(|| SlidingWindow::new(span))
    }

    /// Records an observed packet and returns the monitor's windowed count for
    /// its origin, this packet included.
    pub fn observe_packet(&mut self, mn: NodeId, origin: NodeId, pkt: PacketId, at: SimTime) -> u32 {
        let w = Self::window(&mut self.mn_packets, (mn, origin), self.span);
        w.push(at, pkt);
        w.count(at) as u32
    }

    pub fn open_packet(&mut self, pkt: PacketId) {
        self.pending.entry(pkt).or_default();
    }

    /// Registers a packet-level ticket at the owner. Returns false when the
    /// packet is unknown to the owner.
    pub fn receive_ticket(&mut self, ticket: &WarningTicket, at: SimTime) -> bool {
        Self::window(&mut self.co_tickets, ticket.subject_node, self.span).push(at, ticket.issuer);
        match ticket.subject_packet.and_then(|p| self.pending.get_mut(&p)) {
            Some(issuers) => {
                issuers.insert(ticket.issuer);
                true
            }
            None => false,
        }
    }

    pub fn close_packet(&mut self, pkt: PacketId) -> BTreeSet<NodeId> {
        self.pending.remove(&pkt).unwrap_or_default()
    }

    pub fn is_pending(&self, pkt: PacketId) -> bool {
        self.pending.contains_key(&pkt)
    }

    /// Windowed ticket count and distinct issuers about `origin`.
    pub fn warning_count(&mut self, origin: NodeId, now: SimTime) -> (u32, usize) {
        let w = Self::window(&mut self.co_tickets, origin, self.span);
        let n = w.count(now) as u32;
        (n, w.distinct(now).len())
    }

    /// Windowed ticket count about `origin` together with the distinct issuers.
    pub fn warning_evidence(&mut self, origin: NodeId, now: SimTime) -> (u32, BTreeSet<NodeId>) {
        let w = Self::window(&mut self.co_tickets, origin, self.span);
        (w.count(now) as u32, w.distinct(now))
    }

    /// Records a false detection by `zo` as seen by `mn`; returns the windowed
    /// count.
    pub fn record_false_detection(&mut self, mn: NodeId, zo: NodeId, pkt: PacketId, at: SimTime) -> usize {
        let w = Self::window(&mut self.zo_false, (mn, zo), self.span);
        w.push(at, pkt);
        w.count(at)
    }

    pub fn reset_false_detection(&mut self, mn: NodeId, zo: NodeId) {
        if let Some(w) = self.zo_false.get_mut(&(mn, zo)) {
            w.clear();
        }
    }

    pub fn report_zo(&mut self, zo: NodeId, mn: NodeId, at: SimTime) -> BTreeSet<NodeId> {
        let w = Self::window(&mut self.zo_reports, zo, self.span);
        w.push(at, mn);
        w.distinct(at)
    }

    /// Bookkeeping after a decision: every issuer is a reporter, a sole issuer
    /// is uncorroborated.
    pub fn record_decision_issuers(&mut self, co: NodeId, pkt: PacketId, issuers: &BTreeSet<NodeId>, at: SimTime) {
        for mn in issuers {
            Self::window(&mut self.mn_reporting, co, self.span).push(at, *mn);
        }
        if issuers.len() == 1 {
            let mn = *issuers.iter().next().expect("one issuer");
            Self::window(&mut self.mn_uncorroborated, mn, self.span).push(at, pkt);
        }
    }

    pub fn reporting_mns(&mut self, co: NodeId, now: SimTime) -> BTreeSet<NodeId> {
        Self::window(&mut self.mn_reporting, co, self.span).distinct(now)
    }

    pub fn uncorroborated(&mut self, mns: &[NodeId], now: SimTime) -> BTreeMap<NodeId, usize> {
        mns.iter()
            .map(|mn| {
                let c = Self::window(&mut self.mn_uncorroborated, *mn, self.span).count(now);
                (*mn, c)
            })
            .collect()
    }

    pub fn forget_mn(&mut self, mn: NodeId) {
        self.mn_uncorroborated.remove(&mn);
        for w in self.mn_reporting.values_mut() {
            w.items.retain(|(_, m)| *m != mn);
        }
    }

    pub fn observe_flow(&mut self, mn: NodeId, co: NodeId) {
        *self.flow_current.entry((mn, co)).or_default() += 1;
    }

    /// Closes the current flow window for (monitor, owner), returning the
    /// previous history and the closing volume.
    pub fn close_flow_window(&mut self, mn: NodeId, co: NodeId) -> (Vec<u32>, u32) {
        let volume = self.flow_current.remove(&(mn, co)).unwrap_or(0);
        let hist = self.flow_history.entry((mn, co)).or_default();
        let before = hist.clone();
        hist.push(volume);
        if hist.len() > FLOW_HISTORY {
            hist.remove(0);
        }
        (before, volume)
    }

    /// Drops flow state for (monitor, owner) pairs that no longer exist.
    pub fn retain_flow_pairs(&mut self, pairs: &BTreeSet<(NodeId, NodeId)>) {
        self.flow_current.retain(|k, _| pairs.contains(k));
        self.flow_history.retain(|k, _| pairs.contains(k));
    }

    pub fn report_co(&mut self, co: NodeId, mn: NodeId, at: SimTime) -> BTreeSet<NodeId> {
        let w = Self::window(&mut self.co_reports, co, self.span);
        w.push(at, mn);
        w.distinct(at)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn th() -> Thresholds {
        Thresholds {
            th_token: 3,
            th_min: 1,
            th_max: 3,
            th_energy: Energy::from_units(995.0),
            warning_block_threshold: 3.0,
            t_interval: SimTime::from_units(100.0),
            false_detection_threshold: 5,
            ticket_rate_threshold: 0.1,
            flow_factor: 3.0,
            lifetime_threshold: 0.5,
        }
    }

    fn sched() -> SleepSchedule {
        SleepSchedule::default()
    }

    #[test]
    fn stamp_sleep_window_packet_suspected() {
        let v = anomaly_detect(true, &sched(), SimTime::from_units(40.0), 1, 3);
        assert_eq!(v.status, PacketStatus::Suspected);
        assert!(v.in_sleep);
    }

    #[test]
    fn stamp_clean_packet_genuine() {
        let v = anomaly_detect(true, &sched(), SimTime::from_units(89.0), 3, 3);
        assert_eq!(v.status, PacketStatus::Genuine);
    }

    #[test]
    fn stamp_wakeup_flood_suspected_in_awake_window() {
        let v = anomaly_detect(true, &sched(), SimTime::from_units(89.0), 5, 3);
        assert_eq!(v.status, PacketStatus::Suspected);
        assert!(!v.in_sleep);
    }

    #[test]
    fn stamp_unknown_origin_suspected() {
        let v = anomaly_detect(false, &sched(), SimTime::from_units(89.0), 0, 3);
        assert_eq!(v.status, PacketStatus::Suspected);
        assert!(v.unknown_origin);
    }

    #[test]
    fn confirmation_needs_both_conditions() {
        let t = th();
        let low = Energy::from_units(900.0);
        let high = Energy::from_units(999.0);
        assert!(confirm_intrusion(4, low, &t, BandMode::Outside));
        assert!(!confirm_intrusion(2, low, &t, BandMode::Outside));
        assert!(!confirm_intrusion(4, high, &t, BandMode::Outside));
        assert!(confirm_intrusion(0, low, &t, BandMode::Outside));
        // literal-reading switch
        assert!(confirm_intrusion(2, low, &t, BandMode::Inside));
        assert!(!confirm_intrusion(4, low, &t, BandMode::Inside));
    }

    #[test]
    fn action_rules() {
        let none = BTreeSet::new();
        let one: BTreeSet<NodeId> = [NodeId(7)].into();
        let two: BTreeSet<NodeId> = [NodeId(7), NodeId(8)].into();
        assert_eq!(decide_action(PacketStatus::Suspected, &two), Action::DropFake);
        assert_eq!(decide_action(PacketStatus::Genuine, &two), Action::DropFake);
        assert_eq!(decide_action(PacketStatus::Genuine, &none), Action::Forward);
        assert_eq!(decide_action(PacketStatus::Suspected, &none), Action::DropErroneous);
        assert_eq!(decide_action(PacketStatus::Suspected, &one), Action::Forward);
    }

    #[test]
    fn block_threshold_is_strict() {
        assert!(should_block(4, 2, 3.0));
        assert!(!should_block(3, 2, 3.0));
        assert!(!should_block(10, 1, 3.0), "a single issuer never blocks");
        assert!(!should_block(1000, 6, f64::INFINITY));
    }

    #[test]
    fn zo_watchdog_boundary() {
        assert!(zo_false_detection_exceeded(6, 5));
        assert!(!zo_false_detection_exceeded(5, 5));
        assert!(!zo_block_confirmed(1));
        assert!(zo_block_confirmed(2));
    }

    #[test]
    fn mn_watchdog_names_uncorroborated_issuer() {
        let t = th();
        let mns: Vec<NodeId> = (1..=6).map(NodeId).collect();
        let reporting: BTreeSet<NodeId> = [NodeId(3)].into();
        let mut unc: BTreeMap<NodeId, usize> = mns.iter().map(|m| (*m, 0)).collect();
        unc.insert(NodeId(3), 10);
        let hit = watchdog_mn(6, &reporting, &unc, &t).unwrap();
        assert_eq!(hit.0, NodeId(3));
        assert_eq!(hit.1, 10);

        // corroborated reporters accrue no uncorroborated count
        let both: BTreeSet<NodeId> = [NodeId(1), NodeId(2)].into();
        let clean: BTreeMap<NodeId, usize> = mns.iter().map(|m| (*m, 0)).collect();
        assert!(watchdog_mn(6, &both, &clean, &t).is_none());
        assert!(watchdog_mn(6, &BTreeSet::new(), &clean, &t).is_none());
    }

    #[test]
    fn flow_watchdog() {
        assert!(flow_abnormal(&[4, 4, 4, 4], 40, 3.0));
        assert!(!flow_abnormal(&[4, 4, 4, 4], 12, 3.0));
        assert!(!flow_abnormal(&[4, 4, 4], 40, 3.0), "no baseline yet");
        assert!(!flow_abnormal(&[4, 4, 4, 4], 4, 3.0));
        assert!(!co_block_confirmed(1));
        assert!(co_block_confirmed(2));
    }

    #[test]
    fn ledger_ticket_reconciliation() {
        let mut l = DetectionLedger::new(SimTime::from_units(100.0));
        let pkt = PacketId(9);
        l.open_packet(pkt);
        for mn in [NodeId(7), NodeId(8), NodeId(7)] {
            let t = WarningTicket {
                issuer: mn,
                subject_node: NodeId(1),
                subject_packet: Some(pkt),
                issued_at: SimTime(5),
                reason: TicketReason::PacketCountAnomaly,
            };
            assert!(l.receive_ticket(&t, SimTime(5)));
        }
        assert_eq!(l.close_packet(pkt).len(), 2);
        assert_eq!(l.warning_count(NodeId(1), SimTime(5)), (3, 2));
        let stray = WarningTicket {
            issuer: NodeId(7),
            subject_node: NodeId(1),
            subject_packet: Some(PacketId(1234)),
            issued_at: SimTime(6),
            reason: TicketReason::PacketCountAnomaly,
        };
        assert!(!l.receive_ticket(&stray, SimTime(6)));
    }

    #[test]
    fn window_is_half_open() {
        let mut w = SlidingWindow::new(SimTime(100));
        w.push(SimTime(0), 1);
        w.push(SimTime(50), 2);
        assert_eq!(w.count(SimTime(99)), 2);
        assert_eq!(w.count(SimTime(100)), 1);
        assert_eq!(w.count(SimTime(150)), 0);
    }

    proptest! {
        // Forgetting old entries can only shrink the evidence.
        #[test]
        fn forgetting_is_monotone(times in proptest::collection::vec(0u64..10_000, 1..60), probe in 0u64..20_000) {
            let mut sorted = times.clone();
            sorted.sort();
            let mut w = SlidingWindow::new(SimTime(1000));
            for (i, t) in sorted.iter().enumerate() {
                w.push(SimTime(*t), NodeId((i % 3) as u32));
            }
            let last = *sorted.last().unwrap();
            let now = SimTime(last.max(probe));
            let before = w.count(SimTime(last));
            let distinct_before = w.distinct(SimTime(last)).len();
            let after = w.count(now);
            let distinct_after = w.distinct(now).len();
            prop_assert!(after <= before);
            prop_assert!(distinct_after <= distinct_before);
            prop_assert!(!should_block(after as u32, distinct_after, 3.0) || should_block(before as u32, distinct_before, 3.0));
        }
    }
}
