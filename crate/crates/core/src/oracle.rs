//! Verification machinery.
//!
//! Everything here exists to check the list algorithms rather than to serve
//! packets: inversion counting between two configurations, the potential
//! function, Kendall tau distance, a brute-force offline optimum over
//! feasible permutations (desk scale only), per-access audits against the
//! optimum's witness run, and the adversarial request trace that exhibits
//! the general-cost-model lower bound.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use itertools::Itertools;
use num_rational::Ratio;
use thiserror::Error;

use crate::dag::{DagError, DepDag};
use crate::list::{
    mrf_access, static_access, Alpha, Cost, CostLedger, CostModel, DagProvider, ListConfig,
    ListError, MrfOutcome,
};
use crate::NodeId;

/// Hard cap for the exhaustive offline optimum.
pub const OPT_MAX_NODES: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("configurations hold different node sets")]
    NodeSetMismatch,
    #[error("instance too large: {n} nodes exceeds the exhaustive limit {max}")]
    TooLarge { n: usize, max: usize },
    #[error("request to unknown node {0}")]
    UnknownRequest(NodeId),
    #[error("initial configuration violates the dependency graph")]
    InfeasibleInitial,
    #[error("witness length {witness} does not match request count {requests}")]
    WitnessMismatch { witness: usize, requests: usize },
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    List(#[from] ListError),
}

/// Number of ordered pairs `(u, v)` with `u` before `v` in `a` but `v`
/// before `u` in `b`.
pub fn count_inversions(a: &ListConfig, b: &ListConfig) -> Result<u64, OracleError> {
    if !a.same_nodes(b) {
        return Err(OracleError::NodeSetMismatch);
    }
    let order = a.order();
    let mut count = 0;
    for i in 0..order.len() {
        let bi = b.position(order[i]).unwrap();
        for &later in &order[i + 1..] {
            if b.position(later).unwrap() < bi {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Potential between an online and an offline configuration:
/// `(1 + alpha) * inversions`, which is twice the inversion count in the
/// basic model.
pub fn potential(a: &ListConfig, b: &ListConfig, alpha: Alpha) -> Result<Cost, OracleError> {
    let inversions = count_inversions(a, b)?;
    Ok((Ratio::from_integer(1) + alpha.ratio()) * Ratio::from_integer(inversions))
}

/// Minimal number of adjacent transpositions transforming `a` into `b`,
/// which equals the inversion count. A minimal sorting sequence only ever
/// swaps pairs ordered differently in the two configurations, so when both
/// endpoints are feasible every intermediate configuration is feasible too.
pub fn kendall_tau(a: &ListConfig, b: &ListConfig) -> Result<u64, OracleError> {
    count_inversions(a, b)
}

/// Offline optimum for an access-only request sequence.
#[derive(Clone, Debug)]
pub struct OptResult {
    pub total_cost: Cost,
    /// Configuration in which each request is served, in request order.
    pub witness: Vec<ListConfig>,
}

/// Minimum over all strategies of
/// `sum_t [ kendall_tau(pi_{t-1}, pi_t) + alpha * pos_{pi_t}(sigma_t) ]`
/// with every `pi_t` feasible. Rearrangement is coalesced into the
/// pre-access transition, which is lossless because kendall tau obeys the
/// triangle inequality. Computed by dynamic programming over feasible
/// permutations; the min-plus transition is a multi-source shortest-path
/// pass over the adjacent-transposition graph, whose distances equal
/// kendall tau between feasible endpoints.
pub fn opt_offline(
    dag: &DepDag,
    initial: &ListConfig,
    requests: &[NodeId],
    alpha: Alpha,
) -> Result<OptResult, OracleError> {
    let n = initial.len();
    if n > OPT_MAX_NODES {
        return Err(OracleError::TooLarge { n, max: OPT_MAX_NODES });
    }
    if dag.node_count() != n || initial.order().iter().any(|&id| !dag.contains(id)) {
        return Err(OracleError::NodeSetMismatch);
    }
    if !dag.validate_feasible(initial)? {
        return Err(OracleError::InfeasibleInitial);
    }
    let nodes: Vec<NodeId> = initial.order().to_vec();
    let dense: HashMap<NodeId, u8> = nodes
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i as u8))
        .collect();
    let requests_dense: Vec<u8> = requests
        .iter()
        .map(|id| dense.get(id).copied().ok_or(OracleError::UnknownRequest(*id)))
        .collect::<Result<_, _>>()?;
    if requests.is_empty() {
        return Ok(OptResult { total_cost: Ratio::from_integer(0), witness: Vec::new() });
    }

    // Precedence pairs (v, u): v must be positioned before u.
    let constraints: Vec<(u8, u8)> = dag
        .edges()
        .into_iter()
        .map(|(u, v)| (dense[&v], dense[&u]))
        .collect();

    let perms: Vec<Vec<u8>> = (0..n as u8)
        .permutations(n)
        .filter(|perm| {
            let mut pos = [0u8; OPT_MAX_NODES];
            for (i, &d) in perm.iter().enumerate() {
                pos[d as usize] = i as u8;
            }
            constraints.iter().all(|&(v, u)| pos[v as usize] < pos[u as usize])
        })
        .collect();
    let key_of = |perm: &[u8]| -> u32 {
        perm.iter().rev().fold(0u32, |acc, &d| (acc << 4) | u32::from(d))
    };
    let perm_ids: HashMap<u32, u32> = perms
        .iter()
        .enumerate()
        .map(|(i, p)| (key_of(p), i as u32))
        .collect();
    // 1-based position of every node in every feasible permutation.
    let positions: Vec<Vec<u64>> = perms
        .iter()
        .map(|perm| {
            let mut pos = vec![0u64; n];
            for (i, &d) in perm.iter().enumerate() {
                pos[d as usize] = i as u64 + 1;
            }
            pos
        })
        .collect();
    let neighbors: Vec<Vec<u32>> = perms
        .iter()
        .map(|perm| {
            let mut out = Vec::new();
            let mut scratch = perm.clone();
            for s in 0..n.saturating_sub(1) {
                scratch.swap(s, s + 1);
                if let Some(&id) = perm_ids.get(&key_of(&scratch)) {
                    out.push(id);
                }
                scratch.swap(s, s + 1);
            }
            out
        })
        .collect();

    // Integer costs scaled by alpha's denominator: swap = q, access = p * i.
    let p = *alpha.ratio().numer();
    let q = *alpha.ratio().denom();

    let initial_id = perm_ids[&key_of(
        &initial
            .order()
            .iter()
            .map(|id| dense[id])
            .collect::<Vec<u8>>(),
    )];
    let mut cur = vec![u64::MAX; perms.len()];
    cur[initial_id as usize] = 0;
    let mut seeds_per_stage: Vec<Vec<u32>> = Vec::with_capacity(requests_dense.len());

    for &sigma in &requests_dense {
        let (dist, from) = multi_source_shortest(&neighbors, &cur, q);
        let mut next = vec![u64::MAX; perms.len()];
        for (pid, d) in dist.iter().enumerate() {
            if *d != u64::MAX {
                next[pid] = d + p * positions[pid][sigma as usize];
            }
        }
        seeds_per_stage.push(from);
        cur = next;
    }

    let (best_id, &best_cost) = cur
        .iter()
        .enumerate()
        .min_by_key(|&(_, c)| *c)
        .expect("at least the initial permutation is reachable");
    let m = requests_dense.len();
    let mut witness_ids = vec![0u32; m];
    witness_ids[m - 1] = best_id as u32;
    for t in (1..m).rev() {
        witness_ids[t - 1] = seeds_per_stage[t][witness_ids[t] as usize];
    }
    let witness = witness_ids
        .iter()
        .map(|&pid| {
            ListConfig::new(
                perms[pid as usize]
                    .iter()
                    .map(|&d| nodes[d as usize])
                    .collect(),
            )
            .expect("permutation of distinct nodes")
        })
        .collect();
    Ok(OptResult { total_cost: Ratio::new(best_cost, q), witness })
}

/// Multi-source Dijkstra over unit-weight (scaled to `edge_cost`) edges.
/// Returns the best seed cost plus distance for every vertex, and the seed
/// that achieves it.
fn multi_source_shortest(
    neighbors: &[Vec<u32>],
    seeds: &[u64],
    edge_cost: u64,
) -> (Vec<u64>, Vec<u32>) {
    let mut dist = seeds.to_vec();
    let mut from: Vec<u32> = (0..seeds.len() as u32).collect();
    let mut heap = BinaryHeap::new();
    for (i, &c) in seeds.iter().enumerate() {
        if c != u64::MAX {
            heap.push(Reverse((c, i as u32)));
        }
    }
    while let Some(Reverse((d, v))) = heap.pop() {
        if d > dist[v as usize] {
            continue;
        }
        for &w in &neighbors[v as usize] {
            let nd = d + edge_cost;
            if nd < dist[w as usize] {
                dist[w as usize] = nd;
                from[w as usize] = from[v as usize];
                heap.push(Reverse((nd, w)));
            }
        }
    }
    (dist, from)
}

/// One full run of the rearranging algorithm over an abstract instance.
#[derive(Clone, Debug)]
pub struct MrfRun {
    pub total_cost: Cost,
    pub final_config: ListConfig,
    pub outcomes: Vec<MrfOutcome>,
}

/// Runs MRF (stored-graph provider over `dag`) on an access-only request
/// sequence and reports the paid-model total: access cost plus one unit per
/// transposition.
pub fn run_mrf(
    dag: &DepDag,
    initial: &ListConfig,
    requests: &[NodeId],
    alpha: Alpha,
) -> Result<MrfRun, OracleError> {
    let mut cfg = initial.clone();
    let provider = DagProvider::new(dag);
    let model = CostModel::new(alpha);
    let mut ledger = CostLedger::new();
    let mut outcomes = Vec::with_capacity(requests.len());
    for &request in requests {
        outcomes.push(mrf_access(&mut cfg, &provider, request, &model, &mut ledger)?);
    }
    Ok(MrfRun { total_cost: ledger.total_cost(), final_config: cfg, outcomes })
}

/// Per-access audit of one MRF request against a fixed configuration of the
/// offline optimum.
///
/// `d_sequence` lists the nodes the request moved, head-first; the accessed
/// node is always the last entry. `k` counts the nodes in front of the
/// accessed node in both lists, `l` those in front only in MRF's list;
/// `created` and `destroyed` count the inversions the rearrangement added
/// and removed.
#[derive(Clone, Debug)]
pub struct AccessEventAudit {
    pub request: NodeId,
    pub d_sequence: Vec<NodeId>,
    pub delta: usize,
    pub k: u64,
    pub l: u64,
    pub created: u64,
    pub destroyed: u64,
    pub pre_position: usize,
}

impl AccessEventAudit {
    /// The three per-event bounds: `created <= k`, `destroyed >= l`, and
    /// `created - destroyed <= k - l`.
    pub fn bounds_hold(&self) -> bool {
        self.created <= self.k
            && self.destroyed >= self.l
            && self.created + self.l <= self.destroyed + self.k
    }

    /// Structural identities: the accessed node closes the moved chain and
    /// `k + l + 1` equals its pre-access position.
    pub fn invariants_hold(&self) -> bool {
        self.d_sequence.last() == Some(&self.request)
            && self.delta == self.d_sequence.len()
            && self.k + self.l + 1 == self.pre_position as u64
    }
}

/// Replays MRF on `requests`, auditing every access event against the
/// optimum's witness configuration at that time.
pub fn run_with_audit(
    dag: &DepDag,
    initial: &ListConfig,
    requests: &[NodeId],
    alpha: Alpha,
    witness: &[ListConfig],
) -> Result<Vec<AccessEventAudit>, OracleError> {
    if witness.len() != requests.len() {
        return Err(OracleError::WitnessMismatch {
            witness: witness.len(),
            requests: requests.len(),
        });
    }
    let mut cfg = initial.clone();
    let provider = DagProvider::new(dag);
    let model = CostModel::new(alpha);
    let mut ledger = CostLedger::new();
    let mut audits = Vec::with_capacity(requests.len());
    for (t, &request) in requests.iter().enumerate() {
        let opt_cfg = &witness[t];
        if !opt_cfg.same_nodes(&cfg) {
            return Err(OracleError::NodeSetMismatch);
        }
        let before = cfg.clone();
        let outcome = mrf_access(&mut cfg, &provider, request, &model, &mut ledger)?;
        let sigma_mrf = outcome.pre_position;
        let sigma_opt = opt_cfg.position(request).unwrap();
        let mut k = 0;
        let mut l = 0;
        for &node in before.order() {
            if node == request {
                continue;
            }
            if before.position(node).unwrap() < sigma_mrf {
                if opt_cfg.position(node).unwrap() < sigma_opt {
                    k += 1;
                } else {
                    l += 1;
                }
            }
        }
        let (created, destroyed) = inversion_delta(&before, &cfg, opt_cfg);
        audits.push(AccessEventAudit {
            request,
            delta: outcome.d_sequence.len(),
            d_sequence: outcome.d_sequence,
            k,
            l,
            created,
            destroyed,
            pre_position: sigma_mrf,
        });
    }
    Ok(audits)
}

/// Counts the unordered pairs whose inversion status (relative order differs
/// from `opt`) flipped between `before` and `after`.
fn inversion_delta(before: &ListConfig, after: &ListConfig, opt: &ListConfig) -> (u64, u64) {
    let order = before.order();
    let mut created = 0;
    let mut destroyed = 0;
    for i in 0..order.len() {
        for j in i + 1..order.len() {
            let (u, v) = (order[i], order[j]);
            let opt_uv = opt.position(u).unwrap() < opt.position(v).unwrap();
            let was = opt_uv != (before.position(u).unwrap() < before.position(v).unwrap());
            let is = opt_uv != (after.position(u).unwrap() < after.position(v).unwrap());
            match (was, is) {
                (false, true) => created += 1,
                (true, false) => destroyed += 1,
                _ => {}
            }
        }
    }
    (created, destroyed)
}

/// Which algorithm the tail-chasing adversary plays against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdversaryPolicy {
    Mrf,
    StaticList,
}

/// Outcome of an adversarial run: every request targeted the subject's
/// current tail; the comparator charges `n + alpha` per request (move the
/// requested node to the front, then access it there).
#[derive(Clone, Debug)]
pub struct AdversarialOutcome {
    pub requests: Vec<NodeId>,
    pub measured_cost: Cost,
    pub comparator_cost: Cost,
}

impl AdversarialOutcome {
    pub fn ratio(&self) -> f64 {
        crate::list::cost_to_f64(self.measured_cost) / crate::list::cost_to_f64(self.comparator_cost)
    }
}

/// Lower bound on the competitive ratio of any deterministic algorithm in
/// the general cost model: `n * alpha / (n + alpha)`.
pub fn deterministic_lower_bound(n: usize, alpha: Alpha) -> f64 {
    let n = n as f64;
    let a = alpha.to_f64();
    n * a / (n + a)
}

/// Plays the tail-chasing adversary for `m` requests against a fresh
/// `n`-node list with no dependencies.
pub fn adversarial_trace(n: usize, m: usize, alpha: Alpha, policy: AdversaryPolicy) -> AdversarialOutcome {
    assert!(n >= 1, "adversary needs at least one node");
    let nodes: Vec<NodeId> = (1..=n as u32).map(NodeId).collect();
    let dag = DepDag::empty(nodes.clone()).expect("distinct nodes");
    let mut cfg = ListConfig::new(nodes).expect("distinct nodes");
    let provider = DagProvider::new(&dag);
    let model = CostModel::new(alpha);
    let mut ledger = CostLedger::new();
    let mut requests = Vec::with_capacity(m);
    for _ in 0..m {
        let tail = cfg.node_at(n).unwrap();
        requests.push(tail);
        match policy {
            AdversaryPolicy::Mrf => {
                mrf_access(&mut cfg, &provider, tail, &model, &mut ledger).unwrap();
            }
            AdversaryPolicy::StaticList => {
                static_access(&cfg, tail, &model, &mut ledger).unwrap();
            }
        }
    }
    let comparator_cost =
        Ratio::from_integer((n * m) as u64) + alpha.ratio() * Ratio::from_integer(m as u64);
    AdversarialOutcome { requests, measured_cost: ledger.total_cost(), comparator_cost }
}

/// A seeded random instance for the verification sweeps: a DAG drawn with
/// the given edge probability (oriented along the identity order, so the
/// identity configuration is always feasible), the identity initial
/// configuration, and uniform access requests.
#[derive(Clone, Debug)]
pub struct RandomInstance {
    pub dag: DepDag,
    pub initial: ListConfig,
    pub requests: Vec<NodeId>,
}

pub fn random_instance(
    n: usize,
    m: usize,
    edge_prob: f64,
    rng: &mut impl rand::Rng,
) -> RandomInstance {
    let nodes: Vec<NodeId> = (1..=n as u32).map(NodeId).collect();
    let mut edges = Vec::new();
    for j in 1..n {
        for i in 0..j {
            if rng.gen_bool(edge_prob) {
                edges.push((nodes[j], nodes[i]));
            }
        }
    }
    let dag = DepDag::new(nodes.clone(), edges).expect("edges follow the identity order");
    let initial = ListConfig::new(nodes.clone()).expect("distinct nodes");
    let requests = (0..m).map(|_| nodes[rng.gen_range(0..n)]).collect();
    RandomInstance { dag, initial, requests }
}
