//! Invariant and property tests: algebraic laws of the rule relations, a
//! naive step interpreter checking the rearrangement procedure, feasibility
//! preservation under random operation sequences, provider equivalence on
//! reduced graphs, the potential bookkeeping identity, and mutation tests
//! that prove the verification machinery actually catches broken variants.

mod common;

use std::collections::HashSet;

use num_rational::Ratio;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use salc_core::list::{self, CostLedger, CostModel, DagProvider, ListConfig, NewNode, RulesetProvider};
use salc_core::oracle::{self, opt_offline, potential, run_with_audit};
use salc_core::rules::{Action, FieldRange, Packet, Rule, Ruleset};
use salc_core::workload::{self, LocalityParams};
use salc_core::{Alpha, DepDag, DependencyProvider, NodeId};

fn small_range() -> impl Strategy<Value = FieldRange> {
    (0u32..16, 0u32..16).prop_map(|(a, b)| FieldRange::new(a.min(b), a.max(b)).unwrap())
}

fn toy_rule(id: u32) -> impl Strategy<Value = Rule> {
    (small_range(), small_range(), small_range(), small_range(), small_range()).prop_map(
        move |(protocol, src_ip, dst_ip, src_port, dst_port)| Rule {
            id: NodeId(id),
            priority: id,
            protocol,
            src_ip,
            dst_ip,
            src_port,
            dst_port,
            action: Action::Accept,
        },
    )
}

fn toy_packet() -> impl Strategy<Value = Packet> {
    (0u8..16, 0u32..16, 0u32..16, 0u16..16, 0u16..16).prop_map(
        |(protocol, src_ip, dst_ip, src_port, dst_port)| Packet {
            protocol,
            src_ip,
            dst_ip,
            src_port,
            dst_port,
        },
    )
}

proptest! {
    #[test]
    fn overlap_is_symmetric_and_reflexive(a in toy_rule(1), b in toy_rule(2)) {
        prop_assert!(a.overlaps(&a));
        prop_assert_eq!(a.overlaps(&b), b.overlaps(&a));
    }

    #[test]
    fn dependency_is_irreflexive_and_antisymmetric(a in toy_rule(1), b in toy_rule(2)) {
        prop_assert!(!a.depends_on(&a));
        prop_assert!(!(a.depends_on(&b) && b.depends_on(&a)));
    }

    #[test]
    fn common_match_implies_overlap(a in toy_rule(1), b in toy_rule(2), p in toy_packet()) {
        if a.matches(&p) && b.matches(&p) {
            prop_assert!(a.overlaps(&b));
        }
    }

    #[test]
    fn prefix_roundtrip(addr in any::<u32>(), len in 0u8..=32) {
        let range = FieldRange::from_ipv4_prefix(addr, len).unwrap();
        let (lo, back) = range.to_ipv4_prefix().unwrap();
        prop_assert_eq!(back, len);
        prop_assert_eq!(lo, range.lo());
        let mask = if len == 0 { 0 } else { u32::MAX << (32 - len) };
        prop_assert_eq!(lo, addr & mask);
    }
}

/// Exhaustive best-match check over a 4-bit toy grid.
#[test]
fn best_match_exhaustive_on_toy_domain() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let rules: Vec<Rule> = (1..=6u32)
            .map(|id| {
                let range = |rng: &mut ChaCha8Rng| {
                    let a = rng.gen_range(0u32..16);
                    let b = rng.gen_range(0u32..16);
                    FieldRange::new(a.min(b), a.max(b)).unwrap()
                };
                Rule {
                    id: NodeId(id),
                    priority: id,
                    protocol: range(&mut rng),
                    src_ip: range(&mut rng),
                    dst_ip: range(&mut rng),
                    src_port: range(&mut rng),
                    dst_port: range(&mut rng),
                    action: Action::Accept,
                }
            })
            .collect();
        let rs = Ruleset::new(rules).unwrap();
        for src_ip in 0..16u32 {
            for dst_port in 0..16u16 {
                for (protocol, src_port, dst_ip) in [(0u8, 0u16, 0u32), (7, 5, 3), (15, 15, 15)] {
                    let pkt = Packet { protocol, src_ip, dst_ip, src_port, dst_port };
                    let oracle = rs
                        .rules()
                        .iter()
                        .filter(|r| r.matches(&pkt))
                        .min_by_key(|r| r.priority)
                        .map(|r| r.id);
                    assert_eq!(rs.highest_priority_match(&pkt), oracle);
                }
            }
        }
    }
}

#[test]
fn priority_order_is_always_feasible() {
    for (n, density, seed) in [(16usize, 0.2, 1u64), (32, 0.5, 2), (64, 0.9, 3)] {
        let synth = workload::gen_synthetic_ruleset(n, density, seed).unwrap();
        let dag = DepDag::from_ruleset(&synth.ruleset);
        let cfg = ListConfig::new(synth.ruleset.ids().collect()).unwrap();
        assert!(dag.validate_feasible(&cfg).unwrap());
    }
}

#[test]
fn reachability_matches_closure_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..60 {
        let n = rng.gen_range(2..=8);
        let inst = oracle::random_instance(n, 0, rng.gen_range(0.1..0.9), &mut rng);
        let closure = common::closure_oracle(&inst.dag);
        for &u in inst.dag.nodes() {
            for &v in inst.dag.nodes() {
                assert_eq!(
                    inst.dag.reachable(u, v).unwrap(),
                    closure.contains(&(u, v)),
                    "reachable({u}, {v}) disagrees with the closure oracle"
                );
            }
        }
    }
}

#[test]
fn reduction_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for _ in 0..60 {
        let n = rng.gen_range(2..=8);
        let inst = oracle::random_instance(n, 0, rng.gen_range(0.1..0.9), &mut rng);
        let once = inst.dag.transitive_reduction();
        let twice = once.transitive_reduction();
        let mut a = once.edges();
        let mut b = twice.edges();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }
}

/// A naive interpreter of the rearrangement procedure: direct dependency by
/// scanning stored edges, movement by explicit adjacent swaps on a plain
/// vector. Independent of the list's rotate-based implementation.
fn naive_mrf(order: &mut [NodeId], dag: &DepDag, y: NodeId) -> (u64, Vec<NodeId>) {
    let mut swaps = 0;
    let mut chain = Vec::new();
    let mut current = y;
    loop {
        chain.push(current);
        let pos = order.iter().position(|&v| v == current).unwrap();
        let deps = dag.dependencies_of(current).unwrap();
        let blocker = (0..pos).rev().find(|&p| deps.contains(&order[p]));
        let target = blocker.map(|p| p + 1).unwrap_or(0);
        let mut at = pos;
        while at > target {
            order.swap(at - 1, at);
            at -= 1;
            swaps += 1;
        }
        match blocker {
            None => break,
            Some(p) => current = order[p],
        }
    }
    chain.reverse();
    (swaps, chain)
}

#[test]
fn mrf_matches_naive_step_interpreter() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..200 {
        let n = rng.gen_range(2..=12);
        let inst = oracle::random_instance(n, 20, rng.gen_range(0.0..0.7), &mut rng);
        let provider = DagProvider::new(&inst.dag);
        let mut cfg = inst.initial.clone();
        let mut naive_order = inst.initial.order().to_vec();
        let model = CostModel::unit();
        let mut ledger = CostLedger::new();
        for &request in &inst.requests {
            let out = list::mrf_access(&mut cfg, &provider, request, &model, &mut ledger).unwrap();
            let (swaps, chain) = naive_mrf(&mut naive_order, &inst.dag, request);
            assert_eq!(cfg.order(), &naive_order[..]);
            assert_eq!(out.transpositions, swaps);
            assert_eq!(out.d_sequence, chain);
        }
    }
}

#[test]
fn moved_chain_keeps_relative_order_and_access_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..150 {
        let n = rng.gen_range(2..=10);
        let inst = oracle::random_instance(n, 15, 0.4, &mut rng);
        let provider = DagProvider::new(&inst.dag);
        let mut cfg = inst.initial.clone();
        let model = CostModel::unit();
        let mut ledger = CostLedger::new();
        for &request in &inst.requests {
            let before = cfg.clone();
            let out = list::mrf_access(&mut cfg, &provider, request, &model, &mut ledger).unwrap();
            let pre: Vec<usize> =
                out.d_sequence.iter().map(|&d| before.position(d).unwrap()).collect();
            let post: Vec<usize> =
                out.d_sequence.iter().map(|&d| cfg.position(d).unwrap()).collect();
            assert!(pre.windows(2).all(|w| w[0] < w[1]), "chain pre-order");
            assert!(post.windows(2).all(|w| w[0] < w[1]), "chain post-order");
            assert!(
                cfg.position(request).unwrap() <= before.position(request).unwrap(),
                "an access never pushes its own node back"
            );
        }
    }
}

#[test]
fn feasibility_preserved_under_random_operations() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    for _ in 0..80 {
        let n = rng.gen_range(2..=8);
        let inst = oracle::random_instance(n, 0, 0.3, &mut rng);
        let mut dag = inst.dag;
        let mut cfg = inst.initial;
        let model = CostModel::unit();
        let mut ledger = CostLedger::new();
        let mut next_id = n as u32 + 1;
        for _ in 0..60 {
            match rng.gen_range(0..4) {
                0 => {
                    let y = cfg.order()[rng.gen_range(0..cfg.len())];
                    let provider = DagProvider::new(&dag);
                    list::mrf_access(&mut cfg, &provider, y, &model, &mut ledger).unwrap();
                }
                1 if cfg.len() >= 2 => {
                    let i = rng.gen_range(1..cfg.len());
                    // Blocked swaps must leave the list untouched.
                    let _ = list::transpose_adjacent(&mut cfg, i, &dag);
                }
                2 => {
                    let present = cfg.order().to_vec();
                    let dependencies: Vec<NodeId> =
                        present.iter().copied().filter(|_| rng.gen_bool(0.3)).collect();
                    let dependents: Vec<NodeId> = present
                        .iter()
                        .copied()
                        .filter(|id| !dependencies.contains(id) && rng.gen_bool(0.3))
                        .collect();
                    let node = NewNode { id: NodeId(next_id), dependencies, dependents };
                    if list::insert_with_repair(&mut cfg, &mut dag, &node, &mut ledger).is_ok() {
                        next_id += 1;
                    }
                }
                _ if cfg.len() >= 2 => {
                    let y = cfg.order()[rng.gen_range(0..cfg.len())];
                    list::delete(&mut cfg, &mut dag, y, &model, &mut ledger).unwrap();
                }
                _ => {}
            }
            assert!(dag.validate_feasible(&cfg).unwrap(), "infeasible after an operation");
        }
    }
}

/// The stored full relation, its transitive reduction, and the on-the-fly
/// rule relation must agree on every direct-dependency query.
#[test]
fn direct_dependency_agrees_across_providers() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    for seed in 0..12u64 {
        let n = 24;
        let synth = workload::gen_synthetic_ruleset(n, 0.3 + 0.05 * seed as f64 % 0.7, seed).unwrap();
        let rs = synth.ruleset;
        let full = DepDag::from_ruleset(&rs);
        let reduced = full.transitive_reduction();
        let memoryless = RulesetProvider::new(&rs);
        let stored = DagProvider::new(&full);
        let reduced_provider = DagProvider::new(&reduced);

        // Walk the list through random accesses to reach varied feasible
        // configurations, comparing the three providers at each step.
        let mut cfg = ListConfig::new(rs.ids().collect()).unwrap();
        let model = CostModel::unit();
        let mut ledger = CostLedger::new();
        let node_ids: Vec<NodeId> = rs.ids().collect();
        for _ in 0..40 {
            for &y in &node_ids {
                let a = list::direct_dependency(&cfg, &memoryless, y).unwrap();
                let b = list::direct_dependency(&cfg, &stored, y).unwrap();
                let c = list::direct_dependency(&cfg, &reduced_provider, y).unwrap();
                assert_eq!(a, b);
                assert_eq!(b, c, "reduction must not change the direct dependency");
            }
            let y = node_ids[rng.gen_range(0..node_ids.len())];
            list::mrf_access(&mut cfg, &memoryless, y, &model, &mut ledger).unwrap();
        }
    }
}

#[test]
fn deletion_and_reinsertion_charges_are_symmetric() {
    let nodes: Vec<NodeId> = (1..=5).map(NodeId).collect();
    let mut dag = DepDag::empty(nodes.clone()).unwrap();
    let mut cfg = ListConfig::new(nodes).unwrap();
    let model = CostModel::unit();

    let mut ledger = CostLedger::new();
    list::delete(&mut cfg, &mut dag, NodeId(3), &model, &mut ledger).unwrap();
    assert_eq!(ledger.access_cost(), Ratio::from_integer(3), "delete charges its position");
    assert_eq!(ledger.transpositions(), 0);

    let mut ledger = CostLedger::new();
    let node = NewNode { id: NodeId(3), dependencies: vec![], dependents: vec![] };
    list::insert_transitive(&mut cfg, &mut dag, &node, &mut ledger).unwrap();
    assert_eq!(ledger.access_cost(), Ratio::from_integer(5), "insert charges the new length");
    assert_eq!(ledger.transpositions(), 0);
}

/// Bookkeeping identity: summing per-event potential changes telescopes to
/// the final potential, with both algorithms starting from the same list.
#[test]
fn potential_changes_telescope() {
    let mut rng = ChaCha8Rng::seed_from_u64(59);
    for _ in 0..40 {
        let n = rng.gen_range(2..=5);
        let m = rng.gen_range(1..=10);
        let inst = oracle::random_instance(n, m, 0.3, &mut rng);
        let opt = opt_offline(&inst.dag, &inst.initial, &inst.requests, Alpha::one()).unwrap();

        let provider = DagProvider::new(&inst.dag);
        let model = CostModel::unit();
        let mut ledger = CostLedger::new();
        let mut cfg = inst.initial.clone();
        let mut phi = potential(&cfg, &inst.initial, Alpha::one()).unwrap();
        assert_eq!(phi, Ratio::from_integer(0), "identical initial lists");
        let mut delta_sum: i64 = 0;
        let mut opt_cfg = inst.initial.clone();
        let phi_i64 = |c: Ratio<u64>| i64::try_from(*c.numer()).unwrap();
        for (t, &request) in inst.requests.iter().enumerate() {
            // The optimum's pre-access transition, with MRF's list fixed.
            let after_move = potential(&cfg, &opt.witness[t], Alpha::one()).unwrap();
            delta_sum += phi_i64(after_move) - phi_i64(phi);
            phi = after_move;
            opt_cfg = opt.witness[t].clone();
            // The access event, with the optimum's list fixed.
            list::mrf_access(&mut cfg, &provider, request, &model, &mut ledger).unwrap();
            let after_access = potential(&cfg, &opt_cfg, Alpha::one()).unwrap();
            delta_sum += phi_i64(after_access) - phi_i64(phi);
            phi = after_access;
        }
        let final_phi = potential(&cfg, &opt_cfg, Alpha::one()).unwrap();
        assert_eq!(delta_sum, phi_i64(final_phi), "sum of deltas equals phi(m) - phi(0)");
    }
}

/// A deliberately broken variant that respects dependencies but skips the
/// recursive part: the blocker chain stays in place.
fn skip_recursion_access(cfg: &mut ListConfig, dag: &DepDag, y: NodeId) {
    let pos = cfg.position(y).unwrap();
    let deps = dag.dependencies_of(y).unwrap();
    let blocker = (1..pos).rev().find(|&p| deps.contains(&cfg.node_at(p).unwrap()));
    let target = blocker.map(|p| p + 1).unwrap_or(1);
    let order = cfg.order().to_vec();
    let mut new_order = order.clone();
    let moved = new_order.remove(pos - 1);
    new_order.insert(target - 1, moved);
    *cfg = ListConfig::new(new_order).unwrap();
}

/// The audit machinery must flag the skip-recursion fault: without moving
/// the blocker chain, some event destroys fewer inversions than `l`.
#[test]
fn mutation_skipping_recursion_is_caught() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut caught = false;
    'search: for _ in 0..300 {
        let n = rng.gen_range(3..=5);
        let m = rng.gen_range(4..=12);
        let inst = oracle::random_instance(n, m, 0.3, &mut rng);
        if inst.dag.edge_count() == 0 {
            continue;
        }
        let opt = opt_offline(&inst.dag, &inst.initial, &inst.requests, Alpha::one()).unwrap();
        let mut cfg = inst.initial.clone();
        for (t, &request) in inst.requests.iter().enumerate() {
            let opt_cfg = &opt.witness[t];
            let before = cfg.clone();
            skip_recursion_access(&mut cfg, &inst.dag, request);
            let sigma_pos = before.position(request).unwrap();
            let l = before
                .order()
                .iter()
                .filter(|&&v| {
                    v != request
                        && before.position(v).unwrap() < sigma_pos
                        && opt_cfg.position(v).unwrap() > opt_cfg.position(request).unwrap()
                })
                .count() as u64;
            let mut destroyed = 0u64;
            for i in 0..before.order().len() {
                for j in i + 1..before.order().len() {
                    let (u, v) = (before.order()[i], before.order()[j]);
                    let opt_uv = opt_cfg.position(u).unwrap() < opt_cfg.position(v).unwrap();
                    let was = !opt_uv;
                    let is = opt_uv != (cfg.position(u).unwrap() < cfg.position(v).unwrap());
                    if was && !is {
                        destroyed += 1;
                    }
                }
            }
            if destroyed < l {
                caught = true;
                break 'search;
            }
        }
    }
    assert!(caught, "the audit bounds failed to catch the skip-recursion fault");
}

/// A variant that ignores dependencies entirely must trip the feasibility
/// check.
#[test]
fn mutation_ignoring_dependencies_is_caught() {
    let mut rng = ChaCha8Rng::seed_from_u64(67);
    let mut caught = false;
    'search: for _ in 0..100 {
        let inst = oracle::random_instance(5, 10, 0.4, &mut rng);
        if inst.dag.edge_count() == 0 {
            continue;
        }
        let mut order = inst.initial.order().to_vec();
        for &request in &inst.requests {
            let at = order.iter().position(|&v| v == request).unwrap();
            order.remove(at);
            order.insert(0, request);
            let cfg = ListConfig::new(order.clone()).unwrap();
            if !inst.dag.validate_feasible(&cfg).unwrap() {
                caught = true;
                break 'search;
            }
        }
    }
    assert!(caught, "move-to-front without dependencies went unnoticed");
}

/// Audits against a corrupted witness must fail loudly rather than pass.
#[test]
fn audit_rejects_mismatched_node_sets() {
    let nodes: Vec<NodeId> = (1..=4).map(NodeId).collect();
    let dag = DepDag::empty(nodes.clone()).unwrap();
    let initial = ListConfig::new(nodes).unwrap();
    let requests = [NodeId(2), NodeId(3)];
    let opt = opt_offline(&dag, &initial, &requests, Alpha::one()).unwrap();
    let bad: Vec<ListConfig> = vec![
        opt.witness[0].clone(),
        ListConfig::new((5..=8).map(NodeId).collect()).unwrap(),
    ];
    assert!(run_with_audit(&dag, &initial, &requests, Alpha::one(), &bad).is_err());
}

/// Zipf rank-frequency slope on a long trace stays near the exponent.
#[test]
fn zipf_trace_follows_the_exponent() {
    let s = 1.0;
    let synth = workload::gen_synthetic_ruleset(64, 0.0, 71).unwrap();
    let trace = workload::gen_zipf_trace(
        &synth.ruleset,
        &LocalityParams::zipf(s, 71).unwrap(),
        100_000,
    )
    .unwrap();
    let mut counts = std::collections::HashMap::new();
    for (_, expected) in trace.packets() {
        *counts.entry(expected.unwrap()).or_insert(0u64) += 1;
    }
    let mut freqs: Vec<u64> = counts.values().copied().collect();
    freqs.sort_unstable_by(|a, b| b.cmp(a));
    // Log-log regression over ranks with enough mass.
    let points: Vec<(f64, f64)> = freqs
        .iter()
        .enumerate()
        .filter(|(_, &f)| f >= 10)
        .map(|(i, &f)| (((i + 1) as f64).ln(), (f as f64).ln()))
        .collect();
    assert!(points.len() >= 10, "need enough ranks for the fit");
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    assert!(
        (slope + s).abs() <= 0.15,
        "regression slope {slope:.3} should be near -{s}"
    );
}

/// Feasibility also holds on every configuration of the optimum's witness,
/// and the closure constraints follow from the stored ones.
#[test]
fn witness_configurations_respect_the_closure() {
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    for _ in 0..30 {
        let n = rng.gen_range(2..=5);
        let inst = oracle::random_instance(n, 8, 0.4, &mut rng);
        let opt = opt_offline(&inst.dag, &inst.initial, &inst.requests, Alpha::one()).unwrap();
        let closure = common::closure_oracle(&inst.dag);
        for w in &opt.witness {
            assert!(inst.dag.validate_feasible(w).unwrap());
            for &(u, v) in &closure {
                assert!(
                    w.position(v).unwrap() < w.position(u).unwrap(),
                    "closure constraint violated by a witness configuration"
                );
            }
        }
    }
}

/// The memoryless provider equals the stored full relation edge for edge.
#[test]
fn memoryless_relation_equals_built_graph() {
    let mut seen_edge = false;
    for seed in 0..6u64 {
        let synth = workload::gen_synthetic_ruleset(20, 0.4, seed).unwrap();
        let rs = synth.ruleset;
        let dag = DepDag::from_ruleset(&rs);
        let provider = RulesetProvider::new(&rs);
        let ids: Vec<NodeId> = rs.ids().collect();
        let mut edges = HashSet::new();
        for &u in &ids {
            for &v in &ids {
                if u != v && provider.is_dependency(u, v) {
                    edges.insert((u, v));
                    seen_edge = true;
                }
            }
        }
        let stored: HashSet<(NodeId, NodeId)> = dag.edges().into_iter().collect();
        assert_eq!(edges, stored);
    }
    assert!(seen_edge);
}
