//! Line-delimited JSON trace records.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::detection::{Action, BandMode, TicketReason};
use crate::energy::Energy;
use crate::error::TraceError;
use crate::protocol::{CoinId, MessageKind, PacketId, PacketStatus};
use crate::time::SimTime;
use crate::topology::{Designation, Disposition, NodeCategory, NodeId, PowerMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Simulation time in abstract units.
    pub time: f64,
    pub seq: u64,
    #[serde(flatten)]
    pub event: TraceEvent,
}

impl TraceRecord {
    pub fn at(&self) -> SimTime {
        SimTime::from_units(self.time)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub id: NodeId,
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub category: NodeCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneRecord {
    pub zo: NodeId,
    pub members: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    DstDead,
    DstBlocked,
    DstUnknown,
    SrcDown,
    RunEnded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconfigureCause {
    Init,
    Periodic,
    Watchdog,
}

/// Why a node was blocked. Each variant carries what the replay needs to
/// re-derive the verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Justification {
    WarningThreshold { count: u32, issuers: Vec<NodeId> },
    ZoWatchdog { reporters: Vec<NodeId> },
    MnWatchdog { uncorroborated: usize, reporting: Vec<NodeId>, total_mns: usize },
    CoWatchdog { reporters: Vec<NodeId> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    RunHeader {
        scenario: String,
        seed: u64,
        gn: NodeId,
        nodes: Vec<NodeInfo>,
        detection_enabled: bool,
        band_mode: BandMode,
        /// Threshold values in abstract units, as text so that `inf` survives.
        thresholds: Vec<(String, String)>,
        defaulted: Vec<String>,
        attacked: Vec<NodeId>,
        attacker_source: Option<NodeId>,
        compromised: Vec<NodeId>,
    },
    Send {
        msg: u64,
        src: NodeId,
        dst: NodeId,
        msg_kind: MessageKind,
        forged: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pkt: Option<PacketId>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        fabricated: bool,
    },
    Deliver {
        msg: u64,
        src: NodeId,
        dst: NodeId,
        msg_kind: MessageKind,
        forged: bool,
    },
    Drop {
        msg: u64,
        src: NodeId,
        dst: NodeId,
        msg_kind: MessageKind,
        forged: bool,
        reason: DropReason,
    },
    Reconfigure {
        cause: ReconfigureCause,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subject: Option<NodeId>,
    },
    ClusterFormed {
        co: NodeId,
        mns: Vec<NodeId>,
        zos: Vec<NodeId>,
        zones: Vec<ZoneRecord>,
    },
    RoleAssigned {
        node: NodeId,
        desig: Designation,
    },
    DetectionModule {
        node: NodeId,
        enabled: bool,
    },
    Degraded {
        detail: String,
    },
    Unreachable {
        node: NodeId,
    },
    PowerMode {
        node: NodeId,
        mode: PowerMode,
    },
    Disposition {
        node: NodeId,
        disposition: Disposition,
    },
    Block {
        node: NodeId,
        by: NodeId,
        justification: Justification,
    },
    Death {
        node: NodeId,
    },
    NodeJoin {
        node: NodeId,
        parked: bool,
    },
    UnsolicitedWake {
        node: NodeId,
        coin: CoinId,
    },
    AttackNoop {
        target: NodeId,
    },
    CoinIssued {
        zo: NodeId,
        sn: NodeId,
        coin: CoinId,
    },
    CoinUnsolicited {
        zo: NodeId,
        sn: NodeId,
        coin: CoinId,
    },
    Stamp {
        zo: NodeId,
        pkt: PacketId,
        origin: NodeId,
        status: PacketStatus,
        in_sleep: bool,
        wake_count: u32,
        unknown_origin: bool,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        compromised: bool,
    },
    Observe {
        mn: NodeId,
        zo: NodeId,
        co: NodeId,
        pkt: PacketId,
        origin: NodeId,
        status: PacketStatus,
        count: u32,
        residual: Energy,
        ticketed: bool,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        compromised: bool,
    },
    FalseDetection {
        mn: NodeId,
        zo: NodeId,
        pkt: PacketId,
        count: usize,
    },
    TicketReceived {
        receiver: NodeId,
        issuer: NodeId,
        subject_node: NodeId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subject_packet: Option<PacketId>,
        reason: TicketReason,
        matched: bool,
    },
    Decision {
        co: NodeId,
        pkt: PacketId,
        origin: NodeId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        status: Option<PacketStatus>,
        issuers: Vec<NodeId>,
        action: Action,
        warning_count: u32,
        warning_issuers: usize,
    },
    FlowCheck {
        mn: NodeId,
        co: NodeId,
        volume: u32,
        history: Vec<u32>,
        abnormal: bool,
    },
    PacketDelivered {
        pkt: PacketId,
        origin: NodeId,
        gn: NodeId,
    },
    PacketCreated {
        pkt: PacketId,
        origin: NodeId,
        zo: NodeId,
    },
    WindowRollover {
        index: u64,
    },
    EnergySample {
        node: NodeId,
        energy: Energy,
    },
    Deactivated {
        alive_fraction: f64,
    },
    RunEnd {
        sent: u64,
        delivered: u64,
        dropped: u64,
    },
}

impl TraceEvent {
    pub fn kind_name(&self) -> &'static str {
        match self {
            TraceEvent::RunHeader { .. } => "run_header",
            TraceEvent::Send { .. } => "send",
            TraceEvent::Deliver { .. } => "deliver",
            TraceEvent::Drop { .. } => "drop",
            TraceEvent::Reconfigure { .. } => "reconfigure",
            TraceEvent::ClusterFormed { .. } => "cluster_formed",
            TraceEvent::RoleAssigned { .. } => "role_assigned",
            TraceEvent::DetectionModule { .. } => "detection_module",
            TraceEvent::Degraded { .. } => "degraded",
            TraceEvent::Unreachable { .. } => "unreachable",
            TraceEvent::PowerMode { .. } => "power_mode",
            TraceEvent::Disposition { .. } => "disposition",
            TraceEvent::Block { .. } => "block",
            TraceEvent::Death { .. } => "death",
            TraceEvent::NodeJoin { .. } => "node_join",
            TraceEvent::UnsolicitedWake { .. } => "unsolicited_wake",
            TraceEvent::AttackNoop { .. } => "attack_noop",
            TraceEvent::CoinIssued { .. } => "coin_issued",
            TraceEvent::CoinUnsolicited { .. } => "coin_unsolicited",
            TraceEvent::Stamp { .. } => "stamp",
            TraceEvent::Observe { .. } => "observe",
            TraceEvent::FalseDetection { .. } => "false_detection",
            TraceEvent::TicketReceived { .. } => "ticket_received",
            TraceEvent::Decision { .. } => "decision",
            TraceEvent::FlowCheck { .. } => "flow_check",
            TraceEvent::PacketDelivered { .. } => "packet_delivered",
            TraceEvent::PacketCreated { .. } => "packet_created",
            TraceEvent::WindowRollover { .. } => "window_rollover",
            TraceEvent::EnergySample { .. } => "energy_sample",
            TraceEvent::Deactivated { .. } => "deactivated",
            TraceEvent::RunEnd { .. } => "run_end",
        }
    }
}

pub fn to_line(record: &TraceRecord) -> String {
    serde_json::to_string(record).expect("trace records always serialize")
}

pub fn write_jsonl<W: Write>(records: &[TraceRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        out.write_all(to_line(r).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads a trace written by [`write_jsonl`]. A final line that is not
/// newline-terminated and does not parse is reported as truncated.
pub fn read_jsonl<R: BufRead>(mut input: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut records = Vec::new();
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = input.read_line(&mut buf)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let terminated = buf.ends_with('\n');
        let text = buf.trim_end_matches(['\n', '\r']);
        if text.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TraceRecord>(text) {
            Ok(r) => records.push(r),
            Err(_) if !terminated => return Err(TraceError::Truncated { line: line_no }),
            Err(e) => {
                return Err(TraceError::Malformed {
                    line: line_no,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(records)
}
