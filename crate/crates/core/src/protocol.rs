//! Message vocabulary, duty-cycle schedule, wake-up coin bookkeeping and the
//! SN -> ZO -> CO -> GN routing hierarchy.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::detection::WarningTicket;
use crate::energy::Energy;
use crate::error::ProtocolError;
use crate::time::SimTime;
use crate::topology::{Designation, Network, NodeId, RoleAssignment};

/// Periodic sleep window of a sensing node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SleepSchedule {
    pub sleep_start: SimTime,
    pub sleep_end: SimTime,
    pub period: SimTime,
}

impl Default for SleepSchedule {
    fn default() -> Self {
        SleepSchedule {
            sleep_start: SimTime::ZERO,
            sleep_end: SimTime::from_units(80.0),
            period: SimTime::from_units(100.0),
        }
    }
}

impl SleepSchedule {
    pub fn is_valid(&self) -> bool {
        self.period > SimTime::ZERO
            && self.sleep_start < self.sleep_end
            && self.sleep_end <= self.sleep_start + self.period
            && self.sleep_end <= self.period
    }

    /// Start of the cycle containing `t`.
    pub fn cycle_start(&self, t: SimTime) -> SimTime {
        SimTime(t.0 - t.0 % self.period.0)
    }
}

/// True iff `t` falls in the closed sleep window `[sleep_start, sleep_end]`
/// of its cycle.
pub fn in_sleep_window(schedule: &SleepSchedule, t: SimTime) -> bool {
    let phase = SimTime(t.0 % schedule.period.0);
    schedule.sleep_start <= phase && phase <= schedule.sleep_end
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingKind {
    Temperature,
    Humidity,
    Light,
    Pressure,
    Rainfall,
    WindSpeed,
}

impl SensingKind {
    const ALL: [SensingKind; 6] = [
        SensingKind::Temperature,
        SensingKind::Humidity,
        SensingKind::Light,
        SensingKind::Pressure,
        SensingKind::Rainfall,
        SensingKind::WindSpeed,
    ];

    pub fn from_index(i: usize) -> SensingKind {
        Self::ALL[i % Self::ALL.len()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoinId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PacketId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MessageId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketStatus {
    Genuine,
    Suspected,
}

impl PacketStatus {
    pub fn bit(self) -> u8 {
        match self {
            PacketStatus::Genuine => 0,
            PacketStatus::Suspected => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub pkt_id: PacketId,
    /// The sensing node that produced the reading.
    pub origin: NodeId,
    /// Stamped once, by the origin's zone owner.
    pub status: Option<PacketStatus>,
    pub payload_kind: SensingKind,
    pub created_at: SimTime,
    /// Receipt time at each hop; the first entry is T1 at the zone owner.
    pub receipt_times: Vec<SimTime>,
    /// The wake-up coin this packet answers.
    pub trigger_coin: CoinId,
    /// Residual energy of the origin when it replied.
    pub reported_energy: Energy,
    /// Extra copy injected by a compromised cluster owner (ground truth only).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fabricated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub node: NodeId,
    pub desig: Designation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MessageBody {
    Hello { profile: Profile, ack_requested: bool },
    Ack,
    EnergyQuery,
    EnergyReport { energy: Energy },
    SensingQuery { target_zone: NodeId },
    WakeUpCoin { coin_id: CoinId, issuer: NodeId },
    DataPacket { packet: Packet },
    WarningTicket { ticket: WarningTicket },
    SleepSignal,
    BlockNotice { subject: NodeId },
}

impl MessageBody {
    pub fn kind(&self) -> MessageKind {
        match self {
            MessageBody::Hello { .. } => MessageKind::Hello,
            MessageBody::Ack => MessageKind::Ack,
            MessageBody::EnergyQuery => MessageKind::EnergyQuery,
            MessageBody::EnergyReport { .. } => MessageKind::EnergyReport,
            MessageBody::SensingQuery { .. } => MessageKind::SensingQuery,
            MessageBody::WakeUpCoin { .. } => MessageKind::WakeUpCoin,
            MessageBody::DataPacket { .. } => MessageKind::DataPacket,
            MessageBody::WarningTicket { .. } => MessageKind::WarningTicket,
            MessageBody::SleepSignal => MessageKind::SleepSignal,
            MessageBody::BlockNotice { .. } => MessageKind::BlockNotice,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Hello,
    Ack,
    EnergyQuery,
    EnergyReport,
    SensingQuery,
    WakeUpCoin,
    DataPacket,
    WarningTicket,
    SleepSignal,
    BlockNotice,
}

impl MessageKind {
    pub fn is_data(self) -> bool {
        self == MessageKind::DataPacket
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub id: MessageId,
    pub src: NodeId,
    pub dst: NodeId,
    pub sent_at: SimTime,
    /// Injected by the attacker. Invisible to in-network nodes.
    pub forged: bool,
    pub body: MessageBody,
}

/// Wake-up coins issued per sensing node and unsolicited wake-ups observed,
/// counted over the current interval.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoinLedger {
    issued: BTreeMap<NodeId, Vec<(CoinId, SimTime)>>,
    unsolicited: BTreeMap<NodeId, u32>,
    known: BTreeSet<CoinId>,
    window_start: SimTime,
}

impl CoinLedger {
    pub fn issue(&mut self, sn: NodeId, coin: CoinId, at: SimTime) {
        self.issued.entry(sn).or_default().push((coin, at));
        self.known.insert(coin);
    }

    /// Whether `coin` was issued by a legitimate zone owner at any time.
    pub fn is_known(&self, coin: CoinId) -> bool {
        self.known.contains(&coin)
    }

    pub fn record_unsolicited(&mut self, sn: NodeId) {
        *self.unsolicited.entry(sn).or_default() += 1;
    }

    pub fn issued_count(&self, sn: NodeId) -> u32 {
        self.issued.get(&sn).map_or(0, |v| v.len() as u32)
    }

    pub fn unsolicited_count(&self, sn: NodeId) -> u32 {
        self.unsolicited.get(&sn).copied().unwrap_or(0)
    }

    /// cnt(wakeup(t_interval)): issued plus unsolicited in the current window.
    pub fn wake_count(&self, sn: NodeId) -> u32 {
        self.issued_count(sn) + self.unsolicited_count(sn)
    }

    pub fn window_start(&self) -> SimTime {
        self.window_start
    }

    /// Resets the per-interval counts. Coin identities stay known.
    pub fn rollover(&mut self, at: SimTime) {
        self.issued.clear();
        self.unsolicited.clear();
        self.window_start = at;
    }
}

/// GN -> CO -> ZO path for a sensing query addressed to `zone`.
pub fn query_route(
    assignment: &RoleAssignment,
    network: &Network,
    zone: NodeId,
) -> Result<[NodeId; 3], ProtocolError> {
    let cluster = assignment
        .cluster_of_zo(zone)
        .ok_or_else(|| ProtocolError::NoRoute(format!("{zone} is not a zone owner")))?;
    let route = [assignment.gn, cluster.co, zone];
    for hop in route {
        if !network.can_communicate(hop) {
            return Err(ProtocolError::Unavailable(hop));
        }
    }
    Ok(route)
}

/// Next hop up the hierarchy for a data packet currently held by `holder`.
pub fn next_hop(
    assignment: &RoleAssignment,
    holder: NodeId,
) -> Result<NodeId, ProtocolError> {
    if let Some(zo) = assignment.zone_owner(holder) {
        return Ok(zo);
    }
    if let Some(c) = assignment.cluster_of_zo(holder) {
        return Ok(c.co);
    }
    if assignment.cluster_of_co(holder).is_some() {
        return Ok(assignment.gn);
    }
    Err(ProtocolError::NoRoute(format!("{holder} has no uplink")))
}

/// Monitor nodes that overhear a transmission from `sender`: the cluster's
/// MNs within radio range of the sender that can still communicate.
pub fn observers(
    assignment: &RoleAssignment,
    network: &Network,
    co: NodeId,
    sender: NodeId,
) -> Vec<NodeId> {
    assignment
        .cluster_of_co(co)
        .map(|c| {
            c.mns
                .iter()
                .copied()
                .filter(|mn| *mn != sender && network.can_communicate(*mn) && network.in_range(*mn, sender))
                .collect()
        })
        .unwrap_or_default()
}

/// A late joiner is parked unless it arrives exactly on a reconfiguration
/// instant, which counts as the start of a new cycle.
pub fn should_park(join_at: SimTime, reconfigure_interval: SimTime) -> bool {
    if join_at == SimTime::ZERO {
        return false;
    }
    if reconfigure_interval == SimTime::ZERO {
        return true;
    }
    !join_at.0.is_multiple_of(reconfigure_interval.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(start: f64, end: f64, period: f64) -> SleepSchedule {
        SleepSchedule {
            sleep_start: SimTime::from_units(start),
            sleep_end: SimTime::from_units(end),
            period: SimTime::from_units(period),
        }
    }

    #[test]
    fn sleep_window_closed_interval() {
        let s = sched(0.0, 5.0, 10.0);
        assert!(in_sleep_window(&s, SimTime::from_units(3.0)));
        assert!(in_sleep_window(&s, SimTime::from_units(5.0)));
        assert!(!in_sleep_window(&s, SimTime::from_units(7.0)));
        assert!(in_sleep_window(&s, SimTime::from_units(13.0)));
    }

    #[test]
    fn schedule_validity() {
        assert!(sched(0.0, 80.0, 100.0).is_valid());
        assert!(!sched(50.0, 20.0, 100.0).is_valid());
        assert!(!sched(0.0, 5.0, 0.0).is_valid());
    }

    #[test]
    fn coin_ledger_counts_and_resets() {
        let mut l = CoinLedger::default();
        let sn = NodeId(1);
        l.issue(sn, CoinId(1), SimTime(10));
        l.record_unsolicited(sn);
        l.record_unsolicited(sn);
        assert_eq!(l.wake_count(sn), 3);
        l.rollover(SimTime(100));
        assert_eq!(l.wake_count(sn), 0);
        assert!(l.is_known(CoinId(1)));
        assert!(!l.is_known(CoinId(2)));
    }

    #[test]
    fn parking_boundary() {
        let every = SimTime::from_units(250.0);
        assert!(should_park(SimTime::from_units(50.0), every));
        assert!(!should_park(SimTime::from_units(250.0), every));
        assert!(!should_park(SimTime::ZERO, every));
    }
}
