//! Self-adjusting list packet classification.
//!
//! Match-action rules live in a linear list whose order must respect a
//! dependency DAG derived from rule overlap and priority: a rule must stay
//! in front of every lower-priority rule whose match domain overlaps its
//! own. After each lookup the matched rule is moved toward the head by the
//! Move-Recursively-Forward (MRF) rearrangement, which never violates the
//! precedence constraints.
//!
//! The crate is organized around the moving parts of that design:
//!
//! * [`rules`] — 5-tuple match-action rules, packet matching, overlap and
//!   dependency detection, and the filter-file format.
//! * [`dag`] — the precedence DAG: construction, reachability, transitive
//!   reduction, feasibility checks, and structure statistics.
//! * [`list`] — the self-adjusting list itself: configurations, the cost
//!   model (access `alpha * position`, unit-cost transpositions), MRF
//!   accesses, insertions, and deletions.
//! * [`classifier`] — packet-facing variants (memoryless, stored-graph,
//!   static baseline) with traversal and memory accounting.
//! * [`oracle`] — verification machinery: inversion counting, a brute-force
//!   offline optimum, per-event audits, and an adversarial trace.
//! * [`workload`] — trace parsing and seeded ruleset/trace generators with
//!   controllable locality.

pub mod classifier;
pub mod dag;
pub mod list;
pub mod oracle;
pub mod rules;
pub mod workload;

use std::fmt;

/// Identifier of a rule, shared with the list node that stores it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub use classifier::{Classification, Classifier, ClassifierError, ClassifierVariant, TraversalStats};
pub use dag::{DagError, DagStats, DepDag};
pub use list::{
    cost_from_int, cost_to_f64, insert_transitive, insert_with_repair, mrf_access, static_access,
    transpose_adjacent, Alpha, Cost, CostLedger, CostModel, DagProvider, DependencyProvider,
    ListConfig, ListError, MrfOutcome, NewNode, RepairOutcome, RulesetProvider,
};
pub use oracle::{
    adversarial_trace, count_inversions, kendall_tau, opt_offline, potential, run_mrf,
    run_with_audit, AccessEventAudit, AdversarialOutcome, AdversaryPolicy, MrfRun, OptResult,
    OracleError, RandomInstance,
};
pub use rules::{
    parse_classbench_ruleset, Action, FieldRange, Packet, ParseError, Rule, RuleError, Ruleset,
};
pub use workload::{
    gen_runs_trace, gen_synthetic_ruleset, gen_trace, gen_uniform_trace, gen_zipf_trace,
    parse_classbench_trace, LocalityKind, LocalityParams, Request, SyntheticRuleset, Trace,
    TraceMeta, WorkloadError,
};

#[cfg(test)]
pub(crate) mod testutil {
    use crate::rules::{Action, FieldRange, Packet, Rule, Ruleset};
    use crate::NodeId;

    /// The seven-rule overlap fixture used across module tests: three exact
    /// source hosts on port 80, a /24 deny rule covering them, and three
    /// wildcard rules on other ports that all overlap the /24.
    pub(crate) struct OverlapFixture {
        pub rs: Ruleset,
        pub r1: NodeId,
        pub r2: NodeId,
        pub r3: NodeId,
        pub x: NodeId,
        pub r4: NodeId,
        pub r5: NodeId,
        pub r6: NodeId,
    }

    pub(crate) fn ip(a: u8, b: u8, c: u8, d: u8) -> u32 {
        u32::from(std::net::Ipv4Addr::new(a, b, c, d))
    }

    fn host_rule(id: u32, priority: u32, src: u32, dport: u16, action: Action) -> Rule {
        Rule {
            id: NodeId(id),
            priority,
            protocol: FieldRange::exact(6),
            src_ip: FieldRange::exact(src),
            dst_ip: FieldRange::exact(ip(20, 1, 1, 1)),
            src_port: FieldRange::full_port(),
            dst_port: FieldRange::exact(dport as u32),
            action,
        }
    }

    pub(crate) fn overlap_fixture() -> OverlapFixture {
        let mut rules = vec![
            host_rule(1, 1, ip(10, 1, 1, 1), 80, Action::Accept),
            host_rule(2, 2, ip(10, 1, 1, 2), 80, Action::Accept),
            host_rule(3, 3, ip(10, 1, 1, 3), 80, Action::Accept),
        ];
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
        for (id, dport) in [(5u32, 445u16), (6, 17), (7, 18)] {
            rules.push(Rule {
                id: NodeId(id),
                priority: id,
                protocol: FieldRange::exact(6),
                src_ip: FieldRange::full_ipv4(),
                dst_ip: FieldRange::full_ipv4(),
                src_port: FieldRange::full_port(),
                dst_port: FieldRange::exact(dport as u32),
                action: Action::Accept,
            });
        }
        OverlapFixture {
            rs: Ruleset::new(rules).unwrap(),
            r1: NodeId(1),
            r2: NodeId(2),
            r3: NodeId(3),
            x: NodeId(4),
            r4: NodeId(5),
            r5: NodeId(6),
            r6: NodeId(7),
        }
    }

    pub(crate) fn tcp_packet(src: u32, dst: u32, sport: u16, dport: u16) -> Packet {
        Packet {
            protocol: 6,
            src_ip: src,
            dst_ip: dst,
            src_port: sport,
            dst_port: dport,
        }
    }
}
