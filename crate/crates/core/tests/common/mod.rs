//! Helpers shared by the integration suites: the seven-rule overlap
//! fixture, an independent reachability-closure oracle, and a textbook
//! Move-To-Front reference.

#![allow(dead_code)]

use std::collections::HashSet;
use std::net::Ipv4Addr;

use salc_core::rules::{Action, FieldRange, Packet, Rule, Ruleset};
use salc_core::{DepDag, NodeId};

pub fn ip(a: u8, b: u8, c: u8, d: u8) -> u32 {
    u32::from(Ipv4Addr::new(a, b, c, d))
}

pub fn tcp_packet(src: u32, dst: u32, sport: u16, dport: u16) -> Packet {
    Packet { protocol: 6, src_ip: src, dst_ip: dst, src_port: sport, dst_port: dport }
}

/// Seven rules: three exact hosts on port 80, a /24 deny rule covering
/// them, and three wildcard rules on other ports overlapping the /24.
/// Ids and priorities are 1..=7 in table order; id 4 is the /24 rule.
pub fn overlap_ruleset() -> Ruleset {
    let mut rules = Vec::new();
    for (id, host) in [(1u32, 1u8), (2, 2), (3, 3)] {
        rules.push(Rule {
            id: NodeId(id),
            priority: id,
            protocol: FieldRange::exact(6),
            src_ip: FieldRange::exact(ip(10, 1, 1, host)),
            dst_ip: FieldRange::exact(ip(20, 1, 1, 1)),
            src_port: FieldRange::full_port(),
            dst_port: FieldRange::exact(80),
            action: Action::Accept,
        });
    }
    rules.push(Rule {
        id: NodeId(4),
        priority: 4,
        protocol: FieldRange::exact(6),
        src_ip: FieldRange::from_ipv4_prefix(ip(10, 1, 1, 0), 24).unwrap(),
        dst_ip: FieldRange::exact(ip(20, 1, 1, 1)),
        src_port: FieldRange::full_port(),
        dst_port: FieldRange::full_port(),
        action: Action::Deny,
    });
    for (id, dport) in [(5u32, 445u32), (6, 17), (7, 18)] {
        rules.push(Rule {
            id: NodeId(id),
            priority: id,
            protocol: FieldRange::exact(6),
            src_ip: FieldRange::full_ipv4(),
            dst_ip: FieldRange::full_ipv4(),
            src_port: FieldRange::full_port(),
            dst_port: FieldRange::exact(dport),
            action: Action::Accept,
        });
    }
    Ruleset::new(rules).unwrap()
}

/// Floyd–Warshall-style reachability closure, independent of the DFS used
/// by `DepDag::reachable`.
pub fn closure_oracle(dag: &DepDag) -> HashSet<(NodeId, NodeId)> {
    let nodes = dag.nodes().to_vec();
    let n = nodes.len();
    let idx = |id: NodeId| nodes.iter().position(|&v| v == id).unwrap();
    let mut reach = vec![vec![false; n]; n];
    for (u, v) in dag.edges() {
        reach[idx(u)][idx(v)] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                let via: Vec<usize> = (0..n).filter(|&j| reach[k][j]).collect();
                for j in via {
                    reach[i][j] = true;
                }
            }
        }
    }
    let mut set = HashSet::new();
    for i in 0..n {
        for j in 0..n {
            if reach[i][j] {
                set.insert((nodes[i], nodes[j]));
            }
        }
    }
    set
}

/// Textbook Move-To-Front on a plain vector.
pub struct MtfOracle {
    pub order: Vec<NodeId>,
}

impl MtfOracle {
    pub fn new(order: Vec<NodeId>) -> Self {
        MtfOracle { order }
    }

    pub fn access(&mut self, id: NodeId) {
        let i = self.order.iter().position(|&v| v == id).expect("known node");
        self.order.remove(i);
        self.order.insert(0, id);
    }
}
