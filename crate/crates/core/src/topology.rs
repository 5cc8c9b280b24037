//! Deployment, neighbour discovery, node classification and role election.
//!
//! Everything here is a pure transformation of a [`Network`] snapshot; the
//! simulation kernel decides when to call it and traces the outcome.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::energy::Energy;
use crate::error::{ConfigError, ElectionError, ProtocolError};
use crate::protocol::{SensingKind, SleepSchedule};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
#[derive(Default)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeCategory {
    Base,
    Intelligent,
    Simple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Designation {
    #[serde(rename = "GN")]
    Gn,
    #[serde(rename = "CO")]
    Co,
    #[serde(rename = "MN")]
    Mn,
    #[serde(rename = "ZO")]
    Zo,
    #[serde(rename = "SN")]
    Sn,
    Unassigned,
}

impl fmt::Display for Designation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Designation::Gn => "GN",
            Designation::Co => "CO",
            Designation::Mn => "MN",
            Designation::Zo => "ZO",
            Designation::Sn => "SN",
            Designation::Unassigned => "Unassigned",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMode {
    Awake,
    Asleep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Normal,
    Observed,
    Blocked,
    Dead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub id: NodeId,
    pub name: String,
    pub pos: Position,
    pub category: NodeCategory,
    pub desig: Designation,
    /// Residual energy.
    pub energy: Energy,
    pub initial_energy: Energy,
    pub maturity: bool,
    pub neighbors: BTreeSet<NodeId>,
    pub power_mode: PowerMode,
    pub disposition: Disposition,
    pub sleep_schedule: SleepSchedule,
    pub detection_module_enabled: bool,
    pub sensing: SensingKind,
    /// Deployed and reachable by discovery.
    pub joined: bool,
    /// Joined mid duty cycle and told to sleep until the next reconfiguration.
    pub parked: bool,
}

impl NodeState {
    pub fn new(
        id: NodeId,
        pos: Position,
        category: NodeCategory,
        energy: Energy,
        sleep_schedule: SleepSchedule,
    ) -> Self {
        NodeState {
            id,
            name: id.0.to_string(),
            pos,
            category,
            desig: Designation::Unassigned,
            energy,
            initial_energy: energy,
            maturity: false,
            neighbors: BTreeSet::new(),
            power_mode: PowerMode::Awake,
            disposition: Disposition::Normal,
            sleep_schedule,
            detection_module_enabled: false,
            sensing: SensingKind::from_index(id.0 as usize),
            joined: false,
            parked: false,
        }
    }

    pub fn degree(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_alive(&self) -> bool {
        self.disposition != Disposition::Dead
    }

    /// May originate and receive messages.
    pub fn can_communicate(&self) -> bool {
        self.joined && !matches!(self.disposition, Disposition::Dead | Disposition::Blocked)
    }

    /// May take part in an election.
    pub fn is_eligible(&self) -> bool {
        self.can_communicate() && !self.parked
    }
}

/// Per-node deployment input.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub name: Option<String>,
    pub pos: Position,
    pub category: Option<NodeCategory>,
    pub initial_energy: Option<Energy>,
    pub join_at: SimTime,
    pub sensing: Option<SensingKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    nodes: BTreeMap<NodeId, NodeState>,
    pub radio_range: f64,
    pub gn: NodeId,
}

impl Network {
    pub fn nodes(&self) -> impl Iterator<Item = &NodeState> {
        self.nodes.values()
    }

    pub fn nodes_mut(&mut self) -> impl Iterator<Item = &mut NodeState> {
        self.nodes.values_mut()
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeState> {
        self.nodes.get(&id)
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut NodeState> {
        self.nodes.get_mut(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        match (self.nodes.get(&a), self.nodes.get(&b)) {
            (Some(x), Some(y)) => x.pos.distance(&y.pos),
            _ => f64::INFINITY,
        }
    }

    /// Closed-ball disk model: a node exactly at radio range is a neighbour.
    pub fn in_range(&self, a: NodeId, b: NodeId) -> bool {
        self.distance(a, b) <= self.radio_range
    }

    pub fn can_communicate(&self, id: NodeId) -> bool {
        self.nodes.get(&id).is_some_and(NodeState::can_communicate)
    }

    pub fn is_eligible(&self, id: NodeId) -> bool {
        self.nodes.get(&id).is_some_and(NodeState::is_eligible)
    }

    pub fn name(&self, id: NodeId) -> String {
        self.nodes
            .get(&id)
            .map(|n| n.name.clone())
            .unwrap_or_else(|| id.to_string())
    }

    pub fn id_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.values().find(|n| n.name == name).map(|n| n.id)
    }

    /// Recomputes every node's neighbour set over the nodes that can currently
    /// communicate.
    pub fn refresh_neighbors(&mut self) {
        let live: Vec<(NodeId, Position)> = self
            .nodes
            .values()
            .filter(|n| n.can_communicate())
            .map(|n| (n.id, n.pos))
            .collect();
        let range = self.radio_range;
        for node in self.nodes.values_mut() {
            node.neighbors = if node.can_communicate() {
                live.iter()
                    .filter(|(id, pos)| *id != node.id && node.pos.distance(pos) <= range)
                    .map(|(id, _)| *id)
                    .collect()
            } else {
                BTreeSet::new()
            };
        }
    }
}

/// Instantiates the network. The lowest-id base node becomes the gateway;
/// nodes with `join_at > 0` are created but not yet joined.
pub fn deploy(
    specs: &[NodeSpec],
    radio_range: f64,
    schedule: SleepSchedule,
    initial_for: impl Fn(NodeCategory) -> Energy,
) -> Result<Network, ConfigError> {
    if specs.is_empty() {
        return Err(ConfigError::NoNodes);
    }
    if !(radio_range.is_finite() && radio_range > 0.0) {
        return Err(ConfigError::invalid("radio_range", "must be a positive number"));
    }
    let mut nodes = BTreeMap::new();
    for spec in specs {
        if !(spec.pos.x.is_finite() && spec.pos.y.is_finite()) {
            return Err(ConfigError::invalid(
                format!("nodes[{}]", spec.id.0),
                "coordinates must be finite",
            ));
        }
        let category = spec.category.unwrap_or(NodeCategory::Simple);
        let energy = spec.initial_energy.unwrap_or_else(|| initial_for(category));
        let mut node = NodeState::new(spec.id, spec.pos, category, energy, schedule);
        if let Some(name) = &spec.name {
            node.name = name.clone();
        }
        if let Some(kind) = spec.sensing {
            node.sensing = kind;
        }
        node.joined = spec.join_at == SimTime::ZERO;
        if nodes.insert(spec.id, node).is_some() {
            return Err(ConfigError::DuplicateNode(spec.id));
        }
    }
    let gn = nodes
        .values()
        .find(|n| n.category == NodeCategory::Base)
        .map(|n| n.id)
        .ok_or(ConfigError::NoGateway)?;
    let gw = nodes.get_mut(&gn).expect("gateway present");
    gw.desig = Designation::Gn;
    gw.joined = true;
    let mut network = Network {
        nodes,
        radio_range,
        gn,
    };
    network.refresh_neighbors();
    Ok(network)
}

/// Nodes that answer `origin`'s broadcast before the timer expires. An ack
/// needs one hop out and one hop back.
pub fn discover_neighbors(
    network: &Network,
    origin: NodeId,
    timer_t: SimTime,
    hop_latency: SimTime,
) -> Result<BTreeSet<NodeId>, ProtocolError> {
    let node = network
        .node(origin)
        .ok_or(ProtocolError::UnknownNode(origin))?;
    if !node.can_communicate() {
        return Err(ProtocolError::Unavailable(origin));
    }
    if node.power_mode == PowerMode::Asleep {
        return Err(ProtocolError::Asleep(origin));
    }
    let round_trip = hop_latency + hop_latency;
    if round_trip > timer_t {
        return Ok(BTreeSet::new());
    }
    Ok(network
        .nodes()
        .filter(|n| n.id != origin && n.is_eligible() && network.in_range(origin, n.id))
        .map(|n| n.id)
        .collect())
}

/// Splits members into intelligent and simple nodes: intelligent iff
/// `E_N > E_GN / mu`.
pub fn classify_nodes(
    gn_energy: Energy,
    members: &[(NodeId, Energy)],
    mu: f64,
) -> (BTreeSet<NodeId>, BTreeSet<NodeId>) {
    let mut intelligent = BTreeSet::new();
    let mut simple = BTreeSet::new();
    for &(id, e) in members {
        if e.0 as f64 * mu > gn_energy.0 as f64 {
            intelligent.insert(id);
        } else {
            simple.insert(id);
        }
    }
    (intelligent, simple)
}

/// Picks the cluster owner among `candidates`.
///
/// A candidate qualifies when its degree and residual energy both reach the
/// maxima over `g_neighbors`. Fresh (maturity 0) qualifiers are preferred and
/// remaining ties are broken by a seeded draw. When nobody qualifies on both
/// criteria the candidates are ranked by (maturity, degree desc, energy desc,
/// id asc).
pub fn select_co<R: Rng>(
    network: &Network,
    g_neighbors: &BTreeSet<NodeId>,
    candidates: &BTreeSet<NodeId>,
    rng: &mut R,
) -> Result<NodeId, ElectionError> {
    let cands: Vec<&NodeState> = candidates.iter().filter_map(|id| network.node(*id)).collect();
    if cands.is_empty() {
        return Err(ElectionError::NoCoCandidate);
    }
    let pool: Vec<&NodeState> = g_neighbors.iter().filter_map(|id| network.node(*id)).collect();
    let max_deg = pool.iter().map(|n| n.degree()).max().unwrap_or(0);
    let max_energy = pool.iter().map(|n| n.energy).max().unwrap_or(Energy::ZERO);
    let qualified: Vec<&NodeState> = cands
        .iter()
        .copied()
        .filter(|n| n.degree() >= max_deg && n.energy >= max_energy)
        .collect();
    if !qualified.is_empty() {
        let fresh: Vec<&NodeState> = qualified.iter().copied().filter(|n| !n.maturity).collect();
        let pick_from = if fresh.is_empty() { qualified } else { fresh };
        if pick_from.len() == 1 {
            return Ok(pick_from[0].id);
        }
        let idx = rng.gen_range(0..pick_from.len());
        return Ok(pick_from[idx].id);
    }
    Ok(cands
        .iter()
        .min_by_key(|n| (n.maturity, Reverse(n.degree()), Reverse(n.energy), n.id))
        .expect("non-empty")
        .id)
}

/// C_neighbor and its simple subset SneighborCO.
pub fn form_cluster(
    network: &Network,
    co: NodeId,
    timer_t: SimTime,
    hop_latency: SimTime,
    exclude: &BTreeSet<NodeId>,
) -> (BTreeSet<NodeId>, BTreeSet<NodeId>) {
    let members: BTreeSet<NodeId> = discover_neighbors(network, co, timer_t, hop_latency)
        .unwrap_or_default()
        .into_iter()
        .filter(|id| *id != network.gn && !exclude.contains(id))
        .collect();
    if members.is_empty() {
        warn!("cluster owner {co} formed an empty cluster");
    }
    let simple = members
        .iter()
        .copied()
        .filter(|id| network.node(*id).is_some_and(|n| n.category == NodeCategory::Simple))
        .collect();
    (members, simple)
}

fn intelligent_members<'a>(
    network: &'a Network,
    co: NodeId,
    members: impl IntoIterator<Item = &'a NodeId>,
) -> Vec<&'a NodeState> {
    members
        .into_iter()
        .filter_map(|id| network.node(*id))
        .filter(|n| {
            n.id != co
                && n.id != network.gn
                && n.category == NodeCategory::Intelligent
                && n.is_eligible()
        })
        .collect()
}

/// Monitor nodes: intelligent cluster members ranked by (distance to CO asc,
/// energy desc, id asc). Returns a warning when fewer than `k` are available.
pub fn select_mns(
    network: &Network,
    co: NodeId,
    cluster: &BTreeSet<NodeId>,
    k: usize,
) -> (Vec<NodeId>, Option<String>) {
    let mut ranked = intelligent_members(network, co, cluster);
    ranked.sort_by(|a, b| {
        network
            .distance(a.id, co)
            .total_cmp(&network.distance(b.id, co))
            .then_with(|| b.energy.cmp(&a.energy))
            .then_with(|| a.id.cmp(&b.id))
    });
    let warning = (ranked.len() < k).then(|| {
        format!(
            "degraded monitoring: cluster of {co} has {} monitor candidates, wanted {k}",
            ranked.len()
        )
    });
    (ranked.into_iter().take(k).map(|n| n.id).collect(), warning)
}

/// Zone owners: intelligent non-monitor cluster members ranked by (degree
/// desc, energy desc, id asc).
pub fn select_zos(
    network: &Network,
    co: NodeId,
    cluster: &BTreeSet<NodeId>,
    mns: &[NodeId],
    z: usize,
) -> Result<Vec<NodeId>, ElectionError> {
    let mut ranked: Vec<&NodeState> = intelligent_members(network, co, cluster)
        .into_iter()
        .filter(|n| !mns.contains(&n.id))
        .collect();
    if ranked.is_empty() || z == 0 {
        return Err(ElectionError::NoZoCandidate { co });
    }
    ranked.sort_by_key(|n| (Reverse(n.degree()), Reverse(n.energy), n.id));
    Ok(ranked.into_iter().take(z).map(|n| n.id).collect())
}

/// Assigns every eligible simple node to its nearest in-range zone owner
/// (lower id on ties). Simple nodes out of range of every ZO are returned as
/// unreachable.
pub fn form_zones(
    network: &Network,
    zos: &[NodeId],
) -> (BTreeMap<NodeId, BTreeSet<NodeId>>, BTreeSet<NodeId>) {
    let mut zones: BTreeMap<NodeId, BTreeSet<NodeId>> =
        zos.iter().map(|z| (*z, BTreeSet::new())).collect();
    let mut unreachable = BTreeSet::new();
    for node in network.nodes() {
        if node.id == network.gn || node.category != NodeCategory::Simple || !node.is_eligible() {
            continue;
        }
        let owner = zos
            .iter()
            .filter(|z| network.in_range(**z, node.id))
            .min_by(|a, b| {
                network
                    .distance(**a, node.id)
                    .total_cmp(&network.distance(**b, node.id))
                    .then_with(|| a.cmp(b))
            });
        match owner {
            Some(zo) => {
                zones.entry(*zo).or_default().insert(node.id);
            }
            None => {
                unreachable.insert(node.id);
            }
        }
    }
    (zones, unreachable)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub co: NodeId,
    pub mns: Vec<NodeId>,
    pub zos: Vec<NodeId>,
    /// C_neighbor
    pub members: BTreeSet<NodeId>,
    /// SneighborCO
    pub simple_members: BTreeSet<NodeId>,
    /// ZO_neighbor per zone owner.
    pub zones: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub gn: NodeId,
    pub g_neighbors: BTreeSet<NodeId>,
    pub intelligent_set: BTreeSet<NodeId>,
    pub simple_set: BTreeSet<NodeId>,
    pub clusters: Vec<Cluster>,
    pub unreachable: BTreeSet<NodeId>,
}


impl RoleAssignment {
    pub fn cluster_of_co(&self, co: NodeId) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.co == co)
    }

    pub fn cluster_of_zo(&self, zo: NodeId) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.zos.contains(&zo))
    }

    pub fn cluster_of_mn(&self, mn: NodeId) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.mns.contains(&mn))
    }

    /// The zone owner responsible for a sensing node.
    pub fn zone_owner(&self, sn: NodeId) -> Option<NodeId> {
        self.clusters
            .iter()
            .flat_map(|c| c.zones.iter())
            .find(|(_, members)| members.contains(&sn))
            .map(|(zo, _)| *zo)
    }

    pub fn role_holders(&self) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        for c in &self.clusters {
            out.insert(c.co);
            out.extend(c.mns.iter().copied());
            out.extend(c.zos.iter().copied());
        }
        out
    }

    pub fn designation_of(&self, id: NodeId) -> Option<Designation> {
        if id == self.gn {
            return Some(Designation::Gn);
        }
        for c in &self.clusters {
            if c.co == id {
                return Some(Designation::Co);
            }
            if c.mns.contains(&id) {
                return Some(Designation::Mn);
            }
            if c.zos.contains(&id) {
                return Some(Designation::Zo);
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ElectionParams {
    pub k_mn: usize,
    pub z_zo: usize,
    pub mu: f64,
    pub timer_t: SimTime,
    pub hop_latency: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "note", rename_all = "snake_case")]
pub enum ElectionNote {
    DegradedMonitoring { co: NodeId, wanted: usize, got: usize },
    EmptyCluster { co: NodeId },
    Unreachable { node: NodeId },
    ClusterSkipped { candidate: NodeId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Election {
    pub assignment: RoleAssignment,
    pub notes: Vec<ElectionNote>,
}

fn clear_roles(network: &mut Network) {
    let gn = network.gn;
    for node in network.nodes_mut() {
        node.detection_module_enabled = false;
        if node.id == gn {
            node.desig = Designation::Gn;
        } else if node.category == NodeCategory::Simple {
            node.desig = Designation::Sn;
        } else {
            node.desig = Designation::Unassigned;
        }
    }
}

/// Runs the full election: discovery from the gateway, classification, one or
/// more clusters (CO, monitors, zone owners) and zone formation. Designations,
/// maturity and detection-module flags are written back into `network`.
///
/// On error every role is cleared.
pub fn elect_roles<R: Rng>(
    network: &mut Network,
    params: &ElectionParams,
    rng: &mut R,
) -> Result<Election, ElectionError> {
    network.refresh_neighbors();
    let gn = network.gn;
    let gn_energy = network
        .node(gn)
        .map(|n| n.initial_energy)
        .ok_or(ElectionError::GatewayUnavailable(gn))?;

    let members: Vec<(NodeId, Energy)> = network
        .nodes()
        .filter(|n| n.id != gn && n.joined && n.is_alive())
        .map(|n| (n.id, n.initial_energy))
        .collect();
    let (intelligent_set, simple_set) = classify_nodes(gn_energy, &members, params.mu);
    for node in network.nodes_mut() {
        if intelligent_set.contains(&node.id) {
            node.category = NodeCategory::Intelligent;
        } else if simple_set.contains(&node.id) {
            node.category = NodeCategory::Simple;
        }
    }
    clear_roles(network);

    let g_neighbors = match discover_neighbors(network, gn, params.timer_t, params.hop_latency) {
        Ok(set) => set,
        Err(_) => return Err(ElectionError::GatewayUnavailable(gn)),
    };

    let mut notes = Vec::new();
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut clustered: BTreeSet<NodeId> = BTreeSet::new();
    let mut skipped: BTreeSet<NodeId> = BTreeSet::new();

    loop {
        let pool: BTreeSet<NodeId> = g_neighbors
            .iter()
            .copied()
            .filter(|id| !clustered.contains(id) && network.is_eligible(*id))
            .collect();
        let candidates: BTreeSet<NodeId> = pool
            .iter()
            .copied()
            .filter(|id| intelligent_set.contains(id) && !skipped.contains(id))
            .collect();
        if candidates.is_empty() {
            if clusters.is_empty() {
                clear_roles(network);
                return Err(ElectionError::NoCoCandidate);
            }
            break;
        }
        let co = select_co(network, &pool, &candidates, rng)?;
        let mut exclude = clustered.clone();
        exclude.insert(co);
        let (members, simple_members) =
            form_cluster(network, co, params.timer_t, params.hop_latency, &exclude);
        let available = intelligent_members(network, co, &members).len();

        if !clusters.is_empty() && available < 2 {
            // Not enough intelligent members for a monitor and a zone owner.
            skipped.insert(co);
            notes.push(ElectionNote::ClusterSkipped { candidate: co });
            continue;
        }
        if members.is_empty() {
            notes.push(ElectionNote::EmptyCluster { co });
        }
        if available == 0 {
            clear_roles(network);
            return Err(ElectionError::NoMnCandidate { co });
        }

        // Keep enough intelligent members back for the zone owners.
        let reserve = params.z_zo.min(available.saturating_sub(1));
        let k_eff = params.k_mn.min(available - reserve).max(1);
        let (mns, _) = select_mns(network, co, &members, k_eff);
        if mns.len() < params.k_mn {
            warn!("degraded monitoring: cluster of {co} has {} of {} monitor nodes", mns.len(), params.k_mn);
            notes.push(ElectionNote::DegradedMonitoring {
                co,
                wanted: params.k_mn,
                got: mns.len(),
            });
        }
        let zos = match select_zos(network, co, &members, &mns, params.z_zo) {
            Ok(z) => z,
            Err(e) => {
                clear_roles(network);
                return Err(e);
            }
        };

        clustered.insert(co);
        clustered.extend(members.iter().copied());
        clusters.push(Cluster {
            co,
            mns,
            zos,
            members,
            simple_members,
            zones: BTreeMap::new(),
        });
    }

    let all_zos: Vec<NodeId> = clusters.iter().flat_map(|c| c.zos.iter().copied()).collect();
    let (mut zones, unreachable) = form_zones(network, &all_zos);
    for c in &mut clusters {
        for zo in &c.zos {
            c.zones.insert(*zo, zones.remove(zo).unwrap_or_default());
        }
    }
    for node in &unreachable {
        warn!("sensing node {node} is out of range of every zone owner");
        notes.push(ElectionNote::Unreachable { node: *node });
    }

    for c in &clusters {
        if let Some(n) = network.node_mut(c.co) {
            n.desig = Designation::Co;
            n.maturity = true;
            n.detection_module_enabled = true;
        }
        for (ids, desig) in [(&c.mns, Designation::Mn), (&c.zos, Designation::Zo)] {
            for id in ids {
                if let Some(n) = network.node_mut(*id) {
                    n.desig = desig;
                    n.detection_module_enabled = true;
                }
            }
        }
    }

    Ok(Election {
        assignment: RoleAssignment {
            gn,
            g_neighbors,
            intelligent_set,
            simple_set,
            clusters,
            unreachable,
        },
        notes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconfiguration {
    pub election: Election,
    /// Outgoing role holders whose detection module was switched off.
    pub disabled: BTreeSet<NodeId>,
    /// Incoming role holders whose detection module was switched on.
    pub enabled: BTreeSet<NodeId>,
}

/// Re-runs the election over the current network, excluding Blocked and Dead
/// nodes. Parked late joiners are admitted first.
pub fn reconfigure<R: Rng>(
    network: &mut Network,
    previous: &RoleAssignment,
    params: &ElectionParams,
    rng: &mut R,
) -> Result<Reconfiguration, ElectionError> {
    for node in network.nodes_mut() {
        if node.joined && node.parked {
            node.parked = false;
        }
    }
    let old = previous.role_holders();
    let election = elect_roles(network, params, rng)?;
    let new = election.assignment.role_holders();
    Ok(Reconfiguration {
        disabled: old.difference(&new).copied().collect(),
        enabled: new.difference(&old).copied().collect(),
        election,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(id: u32, x: f64, y: f64, category: NodeCategory) -> NodeSpec {
        NodeSpec {
            id: NodeId(id),
            name: None,
            pos: Position { x, y },
            category: Some(category),
            initial_energy: None,
            join_at: SimTime::ZERO,
            sensing: None,
        }
    }

    fn energy_for(c: NodeCategory) -> Energy {
        match c {
            NodeCategory::Simple => Energy::from_units(1000.0),
            _ => Energy::from_units(2000.0),
        }
    }

    fn net(specs: &[NodeSpec]) -> Network {
        deploy(specs, 10.0, SleepSchedule::default(), energy_for).unwrap()
    }

    fn params() -> ElectionParams {
        ElectionParams {
            k_mn: 1,
            z_zo: 1,
            mu: 2.0,
            timer_t: SimTime::from_units(2.0),
            hop_latency: SimTime::from_units(1.0),
        }
    }

    #[test]
    fn deploy_rejects_duplicates_and_empty() {
        let dup = [
            spec(1, 0.0, 0.0, NodeCategory::Base),
            spec(3, 1.0, 0.0, NodeCategory::Simple),
            spec(3, 2.0, 0.0, NodeCategory::Simple),
        ];
        assert!(matches!(
            deploy(&dup, 10.0, SleepSchedule::default(), energy_for),
            Err(ConfigError::DuplicateNode(NodeId(3)))
        ));
        assert!(matches!(
            deploy(&[], 10.0, SleepSchedule::default(), energy_for),
            Err(ConfigError::NoNodes)
        ));
    }

    #[test]
    fn single_gateway_is_valid() {
        let n = net(&[spec(1, 0.0, 0.0, NodeCategory::Base)]);
        assert_eq!(n.len(), 1);
        assert_eq!(n.node(n.gn).unwrap().desig, Designation::Gn);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut n2 = n.clone();
        assert_eq!(
            elect_roles(&mut n2, &params(), &mut rng).unwrap_err(),
            ElectionError::NoCoCandidate
        );
    }

    #[test]
    fn fresh_nodes_are_awake_and_unassigned() {
        let n = net(&[
            spec(1, 0.0, 0.0, NodeCategory::Base),
            spec(2, 5.0, 0.0, NodeCategory::Intelligent),
        ]);
        let two = n.node(NodeId(2)).unwrap();
        assert_eq!(two.desig, Designation::Unassigned);
        assert_eq!(two.power_mode, PowerMode::Awake);
        assert!(!two.maturity);
        assert_eq!(two.energy, Energy::from_units(2000.0));
    }

    #[test]
    fn discovery_uses_closed_ball() {
        let n = net(&[
            spec(1, 0.0, 0.0, NodeCategory::Base),
            spec(2, 10.0, 0.0, NodeCategory::Simple),
            spec(3, 10.0001, 0.0, NodeCategory::Simple),
        ]);
        let found = discover_neighbors(&n, NodeId(1), SimTime(2000), SimTime(1000)).unwrap();
        assert_eq!(found, BTreeSet::from([NodeId(2)]));
    }

    #[test]
    fn discovery_from_isolated_or_dead_origin() {
        let mut n = net(&[
            spec(1, 0.0, 0.0, NodeCategory::Base),
            spec(2, 50.0, 0.0, NodeCategory::Simple),
        ]);
        assert!(discover_neighbors(&n, NodeId(2), SimTime(2000), SimTime(1000))
            .unwrap()
            .is_empty());
        n.node_mut(NodeId(2)).unwrap().disposition = Disposition::Dead;
        assert_eq!(
            discover_neighbors(&n, NodeId(2), SimTime(2000), SimTime(1000)),
            Err(ProtocolError::Unavailable(NodeId(2)))
        );
    }

    #[test]
    fn classification_threshold() {
        let e = |u| Energy::from_units(u);
        let members = [(NodeId(1), e(80.0)), (NodeId(2), e(50.0)), (NodeId(3), e(10.0))];
        let (intel, simple) = classify_nodes(e(100.0), &members, 2.0);
        assert_eq!(intel, BTreeSet::from([NodeId(1)]));
        assert_eq!(simple, BTreeSet::from([NodeId(2), NodeId(3)]));
    }

    #[test]
    fn single_co_candidate_matures() {
        let mut n = net(&[
            spec(1, 0.0, 0.0, NodeCategory::Base),
            spec(2, 5.0, 0.0, NodeCategory::Intelligent),
            spec(3, 10.0, 0.0, NodeCategory::Intelligent),
            spec(4, 12.0, 0.0, NodeCategory::Intelligent),
            spec(5, 15.0, 3.0, NodeCategory::Simple),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let el = elect_roles(&mut n, &params(), &mut rng).unwrap();
        let co = el.assignment.clusters[0].co;
        assert_eq!(co, NodeId(3));
        assert!(n.node(co).unwrap().maturity);
        assert_eq!(n.node(co).unwrap().desig, Designation::Co);
    }

    #[test]
    fn identical_co_candidates_draw_is_seeded() {
        let n = net(&[
            spec(1, 0.0, 0.0, NodeCategory::Base),
            spec(2, 5.0, 0.0, NodeCategory::Intelligent),
            spec(3, -5.0, 0.0, NodeCategory::Intelligent),
        ]);
        let g: BTreeSet<NodeId> = [NodeId(2), NodeId(3)].into();
        let pick = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            select_co(&n, &g, &g, &mut rng).unwrap()
        };
        assert_eq!(pick(42), pick(42));
        let picks: BTreeSet<NodeId> = (0..32).map(pick).collect();
        assert_eq!(picks.len(), 2, "both candidates reachable across seeds");
    }

    #[test]
    fn co_fallback_ranks_lexicographically() {
        // Node 2 has the highest degree, node 3 the highest energy: nobody
        // reaches both maxima, so rank by degree first.
        let mut n = net(&[
            spec(1, 0.0, 0.0, NodeCategory::Base),
            spec(2, 5.0, 0.0, NodeCategory::Intelligent),
            spec(3, -5.0, 0.0, NodeCategory::Intelligent),
            spec(4, 12.0, 0.0, NodeCategory::Simple),
        ]);
        n.node_mut(NodeId(3)).unwrap().energy = Energy::from_units(2500.0);
        let g: BTreeSet<NodeId> = [NodeId(2), NodeId(3)].into();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_co(&n, &g, &g, &mut rng).unwrap(), NodeId(2));
    }

    #[test]
    fn empty_candidates_is_election_error() {
        let n = net(&[spec(1, 0.0, 0.0, NodeCategory::Base)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            select_co(&n, &BTreeSet::new(), &BTreeSet::new(), &mut rng),
            Err(ElectionError::NoCoCandidate)
        );
    }

    #[test]
    fn isolated_co_has_empty_cluster() {
        let n = net(&[
            spec(1, 0.0, 0.0, NodeCategory::Base),
            spec(2, 100.0, 0.0, NodeCategory::Intelligent),
        ]);
        let (c, s) = form_cluster(&n, NodeId(2), SimTime(2000), SimTime(1000), &BTreeSet::new());
        assert!(c.is_empty() && s.is_empty());
    }

    #[test]
    fn simple_member_in_both_cluster_sets() {
        let n = net(&[
            spec(1, 0.0, 0.0, NodeCategory::Base),
            spec(2, 5.0, 0.0, NodeCategory::Intelligent),
            spec(3, 8.0, 0.0, NodeCategory::Simple),
        ]);
        let (c, s) = form_cluster(&n, NodeId(2), SimTime(2000), SimTime(1000), &BTreeSet::new());
        assert!(c.contains(&NodeId(3)) && s.contains(&NodeId(3)));
        assert!(!c.contains(&NodeId(1)), "gateway is never a cluster member");
    }

    #[test]
    fn mn_rank_prefers_energy_on_equal_distance() {
        let mut n = net(&[
            spec(1, 0.0, 0.0, NodeCategory::Base),
            spec(2, 5.0, 0.0, NodeCategory::Intelligent),
            spec(3, 5.0, 4.0, NodeCategory::Intelligent),
            spec(4, 5.0, -4.0, NodeCategory::Intelligent),
        ]);
        n.node_mut(NodeId(4)).unwrap().energy = Energy::from_units(2100.0);
        let cluster: BTreeSet<NodeId> = [NodeId(3), NodeId(4)].into();
        let (mns, warn) = select_mns(&n, NodeId(2), &cluster, 1);
        assert_eq!(mns, vec![NodeId(4)]);
        assert!(warn.is_none());
    }

    #[test]
    fn mn_shortfall_returns_all_with_warning() {
        let n = net(&[
            spec(1, 0.0, 0.0, NodeCategory::Base),
            spec(2, 5.0, 0.0, NodeCategory::Intelligent),
            spec(3, 5.0, 4.0, NodeCategory::Intelligent),
            spec(4, 5.0, -4.0, NodeCategory::Simple),
        ]);
        let cluster: BTreeSet<NodeId> = [NodeId(3), NodeId(4)].into();
        let (mns, warn) = select_mns(&n, NodeId(2), &cluster, 2);
        assert_eq!(mns, vec![NodeId(3)]);
        assert!(warn.is_some());
    }

    #[test]
    fn zo_rank_by_degree_then_id() {
        let n = net(&[
            spec(1, 0.0, 0.0, NodeCategory::Base),
            spec(2, 5.0, 0.0, NodeCategory::Intelligent),
            spec(3, 9.0, 0.0, NodeCategory::Intelligent),
            spec(4, 1.0, 0.0, NodeCategory::Intelligent),
            spec(5, 17.0, 0.0, NodeCategory::Simple),
        ]);
        // node 3 reaches 1,2,4,5; node 4 reaches 1,2,3
        let cluster: BTreeSet<NodeId> = [NodeId(3), NodeId(4)].into();
        assert_eq!(
            select_zos(&n, NodeId(2), &cluster, &[], 1).unwrap(),
            vec![NodeId(3)]
        );
        // symmetric pair: equal degree and energy, lower id wins
        let m = net(&[
            spec(1, 0.0, 0.0, NodeCategory::Base),
            spec(2, 0.0, 5.0, NodeCategory::Intelligent),
            spec(7, 3.0, 0.0, NodeCategory::Intelligent),
            spec(6, -3.0, 0.0, NodeCategory::Intelligent),
        ]);
        let cluster: BTreeSet<NodeId> = [NodeId(6), NodeId(7)].into();
        assert_eq!(
            select_zos(&m, NodeId(2), &cluster, &[], 1).unwrap(),
            vec![NodeId(6)]
        );
        assert_eq!(
            select_zos(&m, NodeId(2), &BTreeSet::new(), &[], 1),
            Err(ElectionError::NoZoCandidate { co: NodeId(2) })
        );
    }

    #[test]
    fn zones_nearest_owner_and_unreachable() {
        let n = net(&[
            spec(1, 0.0, 0.0, NodeCategory::Base),
            spec(2, -4.0, 20.0, NodeCategory::Intelligent),
            spec(3, 4.0, 20.0, NodeCategory::Intelligent),
            spec(4, 0.0, 20.0, NodeCategory::Simple),
            spec(5, 100.0, 0.0, NodeCategory::Simple),
        ]);
        let (zones, unreachable) = form_zones(&n, &[NodeId(3), NodeId(2)]);
        assert!(zones[&NodeId(2)].contains(&NodeId(4)), "tie goes to lower id");
        assert!(zones[&NodeId(3)].is_empty());
        assert_eq!(unreachable, BTreeSet::from([NodeId(5)]));
    }
}
