//! Case-study expectations. Neighbourhoods are recomputed here by brute force
//! from the fixture's coordinates, independently of the topology module.

use std::collections::BTreeSet;

use segnet_core::config::ScenarioConfig;
use segnet_core::detection::Action;
use segnet_core::energy::Energy;
use segnet_core::fixtures;
use segnet_core::protocol::{MessageKind, PacketStatus};
use segnet_core::sim::kernel::run;
use segnet_core::topology::{Designation, Disposition, NodeId};
use segnet_core::trace::{TraceEvent, TraceRecord};

fn case() -> ScenarioConfig {
    fixtures::load("case_study").unwrap()
}

fn id(cfg: &ScenarioConfig, name: &str) -> NodeId {
    cfg.node_id(name).unwrap()
}

fn names(cfg: &ScenarioConfig, list: &str) -> BTreeSet<NodeId> {
    list.chars().map(|c| id(cfg, &c.to_string())).collect()
}

/// Everyone within radio range of `name`, by direct distance check.
fn brute_neighbours(cfg: &ScenarioConfig, name: &str) -> BTreeSet<NodeId> {
    let me = cfg.nodes.iter().find(|n| n.name.as_deref() == Some(name)).unwrap();
    cfg.nodes
        .iter()
        .filter(|n| n.id != me.id)
        .filter(|n| ((n.x - me.x).powi(2) + (n.y - me.y).powi(2)).sqrt() <= cfg.radio_range)
        .map(|n| n.id)
        .collect()
}

#[test]
fn roles_match_the_walkthrough() {
    let cfg = case();
    let res = run(&cfg).unwrap();
    assert_eq!(res.network.len(), 14);
    let role = |n: &str| res.network.node(id(&cfg, n)).unwrap().desig;
    assert_eq!(role("N"), Designation::Gn);
    assert_eq!(role("M"), Designation::Co);
    for n in ["G", "H", "I", "J", "K", "L"] {
        assert_eq!(role(n), Designation::Mn, "{n}");
    }
    for n in ["E", "F"] {
        assert_eq!(role(n), Designation::Zo, "{n}");
    }
    for n in ["B", "C", "D"] {
        assert_eq!(role(n), Designation::Sn, "{n}");
    }
    let cluster = &res.assignment.clusters[0];
    assert_eq!(cluster.zones[&id(&cfg, "E")], names(&cfg, "AB"));
    assert_eq!(cluster.zones[&id(&cfg, "F")], names(&cfg, "CD"));
}

#[test]
fn neighbourhoods_match_brute_force() {
    let cfg = case();
    let res = run(&cfg).unwrap();
    assert!(brute_neighbours(&cfg, "N").contains(&id(&cfg, "M")));
    let members = &res.assignment.clusters[0].members;
    assert!(members.is_superset(&names(&cfg, "EFGHIJKL")));
    let mut expected = brute_neighbours(&cfg, "M");
    expected.remove(&id(&cfg, "N"));
    assert_eq!(expected, *members, "the gateway is never a cluster member");
    // Only G and H hear E; only I and J hear F.
    let mns = names(&cfg, "GHIJKL");
    let hear = |zo: &str| -> BTreeSet<NodeId> { brute_neighbours(&cfg, zo).intersection(&mns).copied().collect() };
    assert_eq!(hear("E"), names(&cfg, "GH"));
    assert_eq!(hear("F"), names(&cfg, "IJ"));
    for n in ["A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K", "L", "N"] {
        assert_eq!(res.network.node(id(&cfg, n)).unwrap().neighbors, brute_neighbours(&cfg, n), "{n}");
    }
}

fn first(t: &[TraceRecord], f: impl Fn(&TraceEvent) -> bool) -> &TraceRecord {
    t.iter().find(|r| f(&r.event)).expect("record present")
}

#[test]
fn query_coin_and_packet_path() {
    let cfg = case();
    let res = run(&cfg).unwrap();
    let t = &res.trace;
    let (a, e, m, n) = (id(&cfg, "A"), id(&cfg, "E"), id(&cfg, "M"), id(&cfg, "N"));
    let send = |src, dst, kind| {
        move |ev: &TraceEvent| matches!(ev, TraceEvent::Send { src: s, dst: d, msg_kind: k, forged: false, .. } if *s == src && *d == dst && *k == kind)
    };
    let q1 = first(t, send(n, m, MessageKind::SensingQuery)).seq;
    let q2 = first(t, |ev| send(m, e, MessageKind::SensingQuery)(ev)).seq;
    let coin = first(t, |ev| send(e, a, MessageKind::WakeUpCoin)(ev)).seq;
    let data = first(t, |ev| send(a, e, MessageKind::DataPacket)(ev)).seq;
    assert!(q1 < q2 && q2 < coin && coin < data);
}

#[test]
fn flooded_packet_is_dropped_and_honest_one_forwarded() {
    let cfg = case();
    let res = run(&cfg).unwrap();
    let t = &res.trace;
    let (a, d, e, f, m, n) = ["A", "D", "E", "F", "M", "N"].map(|x| id(&cfg, x)).into();
    let fake = first(t, |ev| matches!(ev, TraceEvent::Decision { origin, action: Action::DropFake, .. } if *origin == a));
    let TraceEvent::Decision { pkt: p1, issuers, co, .. } = &fake.event else { unreachable!() };
    assert_eq!(*co, m);
    assert_eq!(issuers.iter().copied().collect::<BTreeSet<_>>(), names(&cfg, "GH"));
    let stamp = first(t, |ev| matches!(ev, TraceEvent::Stamp { pkt, .. } if pkt == p1));
    assert!(matches!(stamp.event, TraceEvent::Stamp { zo, status: PacketStatus::Suspected, .. } if zo == e));
    assert!(t.iter().any(|r| r.seq > fake.seq
        && matches!(r.event, TraceEvent::Disposition { node, disposition: Disposition::Observed } if node == a)));
    assert!(t.iter().any(|r| matches!(r.event, TraceEvent::Block { node, by, .. } if node == a && by == m)));

    // The first packet D sends after the flood starts goes D, F, M, N untouched.
    let p2 = t
        .iter()
        .filter(|r| r.seq > fake.seq)
        .find_map(|r| match r.event {
            TraceEvent::PacketCreated { pkt, origin, .. } if origin == d => Some(pkt),
            _ => None,
        })
        .expect("D keeps reporting");
    let on_p2 = |ev: &TraceEvent| match ev {
        TraceEvent::Stamp { pkt, .. }
        | TraceEvent::Observe { pkt, .. }
        | TraceEvent::Decision { pkt, .. }
        | TraceEvent::PacketDelivered { pkt, .. } => *pkt == p2,
        _ => false,
    };
    let events: Vec<&TraceEvent> = t.iter().map(|r| &r.event).filter(|ev| on_p2(ev)).collect();
    assert!(events.iter().any(|ev| matches!(ev, TraceEvent::Stamp { zo, status: PacketStatus::Genuine, .. } if *zo == f)));
    let watchers: BTreeSet<NodeId> = events
        .iter()
        .filter_map(|ev| match ev {
            TraceEvent::Observe { mn, ticketed: false, .. } => Some(*mn),
            _ => None,
        })
        .collect();
    assert_eq!(watchers, names(&cfg, "IJ"));
    assert!(events.iter().any(|ev| matches!(ev, TraceEvent::Decision { action: Action::Forward, co, .. } if *co == m)));
    assert!(events.iter().any(|ev| matches!(ev, TraceEvent::PacketDelivered { gn, .. } if *gn == n)));
}

#[test]
fn intelligent_nodes_carry_mu_times_the_energy() {
    let text = "mu = 2.0\n[energy]\ninitial_energy_simple = 100.0\n\n[[nodes]]\nid = 1\nx = 0.0\ny = 0.0\ncategory = \"base\"\n\n\
                [[nodes]]\nid = 2\nx = 5.0\ny = 0.0\ncategory = \"intelligent\"\n\n[[nodes]]\nid = 3\nx = 9.0\ny = 0.0\ncategory = \"simple\"\n";
    let cfg = ScenarioConfig::from_toml_str(text).unwrap();
    assert_eq!(cfg.energy.initial_simple, Energy::from_units(100.0));
    assert_eq!(cfg.energy.initial_intelligent, Energy::from_units(200.0));
}

#[test]
fn whole_result_is_reproducible() {
    let cfg = case();
    let a = serde_json::to_string(&run(&cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&run(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn undefended_a_dies_sooner() {
    let cfg = case();
    let a = id(&cfg, "A");
    let with = run(&cfg).unwrap();
    let mut off = cfg.clone();
    off.detection_enabled = false;
    let without = run(&off).unwrap();
    let died = without.death_time(a).expect("A dies undefended");
    assert!(with.death_time(a).is_none_or(|t| t > died));
}
