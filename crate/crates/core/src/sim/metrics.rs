//! Run scoring. Everything here is derived from the trace alone, so the
//! numbers always reconcile with the emitted records.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::detection::Action;
use crate::energy::Energy;
use crate::protocol::MessageKind;
use crate::topology::{Disposition, NodeId};
use crate::trace::{TraceEvent, TraceRecord};

/// Ground truth for scoring, normally read from the run header.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub gn: NodeId,
    pub nodes: BTreeSet<NodeId>,
    pub attacked: BTreeSet<NodeId>,
    pub compromised: BTreeSet<NodeId>,
}

impl GroundTruth {
    pub fn from_trace(trace: &[TraceRecord]) -> Option<Self> {
        trace.iter().find_map(|r| match &r.event {
            TraceEvent::RunHeader {
                gn,
                nodes,
                attacked,
                compromised,
                ..
            } => Some(GroundTruth {
                gn: *gn,
                nodes: nodes.iter().map(|n| n.id).collect(),
                attacked: attacked.iter().copied().collect(),
                compromised: compromised.iter().copied().collect(),
            }),
            _ => None,
        })
    }

    fn clean(&self) -> BTreeSet<NodeId> {
        self.nodes
            .iter()
            .copied()
            .filter(|n| *n != self.gn && !self.attacked.contains(n) && !self.compromised.contains(n))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyPoint {
    pub node: NodeId,
    pub time: f64,
    pub energy: Energy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub detection_rate: f64,
    pub false_positive_rate: f64,
    pub packets_generated: u64,
    pub packets_delivered: u64,
    pub packets_dropped_fake: u64,
    pub packets_dropped_erroneous: u64,
    pub packet_overhead: f64,
    pub network_lifetime: f64,
    pub deactivated: bool,
    pub warning_tickets: u64,
    pub blocked_nodes: u64,
    pub dead_nodes: u64,
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub messages_dropped: u64,
    pub energy_series: Vec<EnergyPoint>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(trace: &[TraceRecord], truth: &GroundTruth) -> Metrics {
    let mut flagged: BTreeSet<NodeId> = BTreeSet::new();
    let mut blocked: BTreeSet<NodeId> = BTreeSet::new();
    let mut m = Metrics {
        detection_rate: 0.0,
        false_positive_rate: 0.0,
        packets_generated: 0,
        packets_delivered: 0,
        packets_dropped_fake: 0,
        packets_dropped_erroneous: 0,
        packet_overhead: 0.0,
        network_lifetime: 0.0,
        deactivated: false,
        warning_tickets: 0,
        blocked_nodes: 0,
        dead_nodes: 0,
        messages_sent: 0,
        messages_delivered: 0,
        messages_dropped: 0,
        energy_series: Vec::new(),
    };
    let (mut control, mut data) = (0usize, 0usize);
    let mut end = None;
    for r in trace {
        match &r.event {
            TraceEvent::Send { msg_kind, forged, .. } => {
                m.messages_sent += 1;
                if !forged {
                    if msg_kind.is_data() {
                        data += 1;
                    } else {
                        control += 1;
                    }
                }
                if *msg_kind == MessageKind::WarningTicket {
                    m.warning_tickets += 1;
                }
            }
            TraceEvent::Deliver { .. } => m.messages_delivered += 1,
            TraceEvent::Drop { .. } => m.messages_dropped += 1,
            TraceEvent::PacketCreated { .. } => m.packets_generated += 1,
            TraceEvent::PacketDelivered { .. } => m.packets_delivered += 1,
            TraceEvent::Decision { action, .. } => match action {
                Action::DropFake => m.packets_dropped_fake += 1,
                Action::DropErroneous => m.packets_dropped_erroneous += 1,
                Action::Forward => {}
            },
            TraceEvent::Disposition { node, disposition } => {
                if matches!(disposition, Disposition::Observed | Disposition::Blocked) {
                    flagged.insert(*node);
                }
            }
            TraceEvent::Block { node, .. } => {
                flagged.insert(*node);
                blocked.insert(*node);
            }
            TraceEvent::Death { .. } => m.dead_nodes += 1,
            TraceEvent::EnergySample { node, energy } => m.energy_series.push(EnergyPoint {
                node: *node,
                time: r.time,
                energy: *energy,
            }),
            TraceEvent::Deactivated { .. } => {
                m.deactivated = true;
                end.get_or_insert(r.time);
            }
            TraceEvent::RunEnd { .. } => {
                end.get_or_insert(r.time);
            }
            _ => {}
        }
    }
    m.blocked_nodes = blocked.len() as u64;
    m.network_lifetime = end.unwrap_or_else(|| trace.last().map_or(0.0, |r| r.time));
    m.packet_overhead = ratio(control, data);
    if !truth.attacked.is_empty() {
        let detected = truth.attacked.iter().filter(|n| flagged.contains(n)).count();
        m.detection_rate = ratio(detected, truth.attacked.len());
    }
    let clean = truth.clean();
    m.false_positive_rate = ratio(clean.iter().filter(|n| flagged.contains(n)).count(), clean.len());
    m
}

fn num(v: f64) -> String {
    if v.is_finite() && v.fract() == 0.0 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

impl Metrics {
    /// `(name, value)` rows in a fixed order.
    pub fn rows(&self) -> Vec<(&'static str, String)> {
        vec![
            ("detection_rate", num(self.detection_rate)),
            ("false_positive_rate", num(self.false_positive_rate)),
            ("packets_generated", self.packets_generated.to_string()),
            ("packets_delivered", self.packets_delivered.to_string()),
            ("packets_dropped_fake", self.packets_dropped_fake.to_string()),
            ("packets_dropped_erroneous", self.packets_dropped_erroneous.to_string()),
            ("packet_overhead", num(self.packet_overhead)),
            ("network_lifetime", num(self.network_lifetime)),
            ("deactivated", self.deactivated.to_string()),
            ("warning_tickets", self.warning_tickets.to_string()),
            ("blocked_nodes", self.blocked_nodes.to_string()),
            ("dead_nodes", self.dead_nodes.to_string()),
            ("messages_sent", self.messages_sent.to_string()),
            ("messages_delivered", self.messages_delivered.to_string()),
            ("messages_dropped", self.messages_dropped.to_string()),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (k, v) in self.rows() {
            let _ = writeln!(out, "{k},{v}");
        }
        out
    }

    pub fn energy_csv(&self) -> String {
        let mut out = String::from("node,time,energy\n");
        for p in &self.energy_series {
            let _ = writeln!(out, "{},{},{}", p.node.0, num(p.time), p.energy.as_units());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::MessageKind;

    fn send(seq: u64, kind: MessageKind) -> TraceRecord {
        TraceRecord {
            time: 1.0,
            seq,
            event: TraceEvent::Send {
                msg: seq,
                src: NodeId(1),
                dst: NodeId(2),
                msg_kind: kind,
                forged: false,
                pkt: None,
                fabricated: false,
            },
        }
    }

    #[test]
    fn overhead_is_control_over_data() {
        let mut trace: Vec<TraceRecord> = (0..10).map(|i| send(i, MessageKind::Hello)).collect();
        trace.extend((10..15).map(|i| send(i, MessageKind::DataPacket)));
        let m = compute_metrics(&trace, &GroundTruth::default());
        assert_eq!(m.packet_overhead, 2.0);
        assert_eq!(m.messages_sent, 15);
    }

    #[test]
    fn vacuous_detection_rate_is_zero() {
        let truth = GroundTruth {
            gn: NodeId(1),
            nodes: [NodeId(1), NodeId(2)].into(),
            ..Default::default()
        };
        let m = compute_metrics(&[], &truth);
        assert_eq!(m.detection_rate, 0.0);
        assert_eq!(m.false_positive_rate, 0.0);
    }

    #[test]
    fn blocked_attacked_node_is_detected() {
        let truth = GroundTruth {
            gn: NodeId(9),
            nodes: [NodeId(1), NodeId(2), NodeId(9)].into(),
            attacked: [NodeId(1)].into(),
            ..Default::default()
        };
        let trace = vec![TraceRecord {
            time: 5.0,
            seq: 0,
            event: TraceEvent::Disposition {
                node: NodeId(1),
                disposition: Disposition::Blocked,
            },
        }];
        let m = compute_metrics(&trace, &truth);
        assert_eq!(m.detection_rate, 1.0);
        assert_eq!(m.false_positive_rate, 0.0);
        assert!(m.to_csv().contains("detection_rate,1.0\n"));
    }
}
