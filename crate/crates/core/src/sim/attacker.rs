//! Adversary models: the external sleep-deprivation intruder and scripted
//! misbehaviour of compromised role holders.

use serde::{Deserialize, Serialize};

use crate::time::SimTime;
use crate::topology::{Network, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    #[default]
    SleepDeprivation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackerModel {
    pub kind: AttackKind,
    pub targets: Vec<NodeId>,
    /// Forged wake-ups per time unit, per target.
    pub rate: f64,
    /// Active over `[start, stop)`.
    pub start: SimTime,
    pub stop: SimTime,
    /// Pseudo-identity stamped on forged messages. Not part of the topology.
    pub source: NodeId,
}

impl AttackerModel {
    /// Spacing between injections at one target, at least one tick.
    pub fn interval(&self) -> SimTime {
        let per = SimTime::from_units(1.0 / self.rate);
        SimTime(per.0.max(1))
    }

    pub fn is_active(&self, t: SimTime) -> bool {
        self.rate > 0.0 && t >= self.start && t < self.stop
    }

    /// Injection instants for one target given its phase offset.
    pub fn schedule(&self, phase: SimTime) -> impl Iterator<Item = SimTime> + '_ {
        let step = self.interval();
        let first = self.start + SimTime(phase.0 % step.0);
        (0u64..)
            .map(move |k| SimTime(first.0 + k * step.0))
            .take_while(move |t| self.rate > 0.0 && *t < self.stop)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum AttackOutcome {
    Inject,
    TargetDead,
    Inactive,
}

/// What the intruder does to `target` at `t`.
pub fn attacker_step(model: &AttackerModel, network: &Network, target: NodeId, t: SimTime) -> AttackOutcome {
    if !model.is_active(t) {
        return AttackOutcome::Inactive;
    }
    match network.node(target) {
        Some(n) if n.is_alive() => AttackOutcome::Inject,
        _ => AttackOutcome::TargetDead,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompromiseKind {
    /// Zone owner stamps every packet suspected.
    ZoFalseFlag,
    /// Monitor tickets every packet it observes.
    MnFalseTicket,
    /// Cluster owner injects extra fabricated traffic towards the gateway.
    CoFlowInflate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Compromise {
    pub node: NodeId,
    pub kind: CompromiseKind,
    pub from: SimTime,
    /// Extra packets per forwarded packet (flow inflation only).
    pub inflate: u32,
}

impl Compromise {
    pub fn applies(&self, node: NodeId, kind: CompromiseKind, t: SimTime) -> bool {
        self.node == node && self.kind == kind && t >= self.from
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(rate: f64, start: f64, stop: f64) -> AttackerModel {
        AttackerModel {
            kind: AttackKind::SleepDeprivation,
            targets: vec![NodeId(1)],
            rate,
            start: SimTime::from_units(start),
            stop: SimTime::from_units(stop),
            source: NodeId(9999),
        }
    }

    #[test]
    fn rate_times_duration() {
        let m = model(5.0, 0.0, 10.0);
        for phase in [0u64, 1, 77, 199] {
            assert_eq!(m.schedule(SimTime(phase)).count(), 50, "phase {phase}");
        }
    }

    #[test]
    fn inactive_window_injects_nothing() {
        let m = model(5.0, 10.0, 10.0);
        assert_eq!(m.schedule(SimTime::ZERO).count(), 0);
        assert!(!m.is_active(SimTime::from_units(10.0)));
        assert!(!m.is_active(SimTime::from_units(5.0)));
    }
}
