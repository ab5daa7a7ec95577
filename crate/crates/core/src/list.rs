//! The self-adjusting list with precedence constraints.
//!
//! A configuration is an order over node ids, 1-based positions counted
//! from the head. Accessing the node at position `i` costs `alpha * i`;
//! every adjacent transposition costs 1 (paid exchange model), including
//! moves of the accessed node.
//!
//! The rearrangement procedure is Move-Recursively-Forward: the accessed
//! node moves forward until it meets its furthest dependency, which then
//! runs forward recursively; a node with no dependency goes to the head.
//! With an empty dependency graph this is exactly Move-To-Front.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::ToPrimitive;

use thiserror::Error;

use crate::dag::{DagError, DepDag};
use crate::rules::Ruleset;
use crate::NodeId;

/// Exact cost value: integer transposition units plus rational access units.
pub type Cost = Ratio<u64>;

pub fn cost_to_f64(cost: Cost) -> f64 {
    cost.to_f64().unwrap_or(f64::NAN)
}

pub fn cost_from_int(value: u64) -> Cost {
    Ratio::from_integer(value)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ListError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("duplicate node {0}")]
    DuplicateNode(NodeId),
    #[error("position {0} out of range")]
    PositionOutOfRange(usize),
    #[error("transposing {left} and {right} violates a precedence constraint")]
    InfeasibleTransposition { left: NodeId, right: NodeId },
    #[error("no gap-free slot for {0}: revealed constraints are not transitive, use insert_with_repair")]
    NonTransitiveInsert(NodeId),
    #[error("revealed constraints for {0} contradict existing order constraints")]
    InsertCycle(NodeId),
    #[error("alpha must be a rational at least 1")]
    AlphaOutOfRange,
    #[error(transparent)]
    Dag(#[from] DagError),
}

/// Access-cost multiplier, a rational constant `>= 1` fixed per run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Alpha(Ratio<u64>);

impl Alpha {
    pub fn new(numer: u64, denom: u64) -> Result<Self, ListError> {
        if denom == 0 || numer < denom {
            return Err(ListError::AlphaOutOfRange);
        }
        Ok(Alpha(Ratio::new(numer, denom)))
    }

    pub fn from_int(value: u64) -> Result<Self, ListError> {
        Self::new(value, 1)
    }

    pub fn one() -> Self {
        Alpha(Ratio::from_integer(1))
    }

    pub fn ratio(self) -> Ratio<u64> {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        cost_to_f64(self.0)
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl FromStr for Alpha {
    type Err = ListError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        let numer: u64 = n.parse().map_err(|_| ListError::AlphaOutOfRange)?;
        let denom: u64 = d.parse().map_err(|_| ListError::AlphaOutOfRange)?;
        Alpha::new(numer, denom)
    }
}

/// Cost model: access at position `i` costs `alpha * i`; every adjacent
/// transposition costs [`CostModel::TRANSPOSITION_COST`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostModel {
    alpha: Alpha,
}

impl CostModel {
    pub const TRANSPOSITION_COST: u64 = 1;

    pub fn new(alpha: Alpha) -> Self {
        CostModel { alpha }
    }

    /// The basic model with `alpha = 1`.
    pub fn unit() -> Self {
        CostModel { alpha: Alpha::one() }
    }

    pub fn alpha(&self) -> Alpha {
        self.alpha
    }

    pub fn access_cost(&self, position: usize) -> Cost {
        self.alpha.0 * Ratio::from_integer(position as u64)
    }
}

/// Per-request charge recorded in a [`CostLedger`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RequestCharge {
    pub access: Cost,
    pub transpositions: u64,
}

/// Accumulated costs of one algorithm run: access units, unit-cost
/// transpositions, and the per-request breakdown. All components are
/// monotone nondecreasing by construction.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CostLedger {
    access_cost: Cost,
    transpositions: u64,
    requests: Vec<RequestCharge>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, access: Cost, transpositions: u64) {
        self.access_cost += access;
        self.transpositions += transpositions;
        self.requests.push(RequestCharge { access, transpositions });
    }

    pub fn access_cost(&self) -> Cost {
        self.access_cost
    }

    pub fn transpositions(&self) -> u64 {
        self.transpositions
    }

    /// Access cost plus one unit per transposition.
    pub fn total_cost(&self) -> Cost {
        self.access_cost + Ratio::from_integer(self.transpositions * CostModel::TRANSPOSITION_COST)
    }

    pub fn requests(&self) -> &[RequestCharge] {
        &self.requests
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }
}

/// A list configuration: an order over node ids plus a position index.
/// Positions are 1-based; the head is position 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ListConfig {
    order: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
}

impl ListConfig {
    pub fn new(order: Vec<NodeId>) -> Result<Self, ListError> {
        let mut index = HashMap::with_capacity(order.len());
        for (i, &id) in order.iter().enumerate() {
            if index.insert(id, i).is_some() {
                return Err(ListError::DuplicateNode(id));
            }
        }
        Ok(ListConfig { order, index })
    }

    /// 1-based position of `id`, if present.
    pub fn position(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).map(|&i| i + 1)
    }

    /// Node at 1-based position `pos`.
    pub fn node_at(&self, pos: usize) -> Option<NodeId> {
        if pos == 0 {
            return None;
        }
        self.order.get(pos - 1).copied()
    }

    pub fn order(&self) -> &[NodeId] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn same_nodes(&self, other: &ListConfig) -> bool {
        self.len() == other.len() && self.order.iter().all(|&id| other.contains(id))
    }

    fn reindex_from(&mut self, start: usize) {
        for i in start..self.order.len() {
            self.index.insert(self.order[i], i);
        }
    }

    /// Moves the node at 1-based `from` forward to `to` (`to <= from`),
    /// shifting the overtaken nodes back one slot. Returns the number of
    /// adjacent transpositions performed.
    fn move_forward(&mut self, from: usize, to: usize) -> u64 {
        debug_assert!(to >= 1 && to <= from && from <= self.order.len());
        self.order[to - 1..from].rotate_right(1);
        for i in to - 1..from {
            self.index.insert(self.order[i], i);
        }
        (from - to) as u64
    }

    fn insert_at(&mut self, pos: usize, id: NodeId) {
        debug_assert!(pos >= 1 && pos <= self.order.len() + 1);
        self.order.insert(pos - 1, id);
        self.reindex_from(pos - 1);
    }

    fn remove_entry(&mut self, id: NodeId) -> usize {
        let i = self.index.remove(&id).expect("caller checked presence");
        self.order.remove(i);
        self.reindex_from(i);
        i + 1
    }

    fn assign(&mut self, order: Vec<NodeId>) {
        self.index.clear();
        for (i, &id) in order.iter().enumerate() {
            self.index.insert(id, i);
        }
        self.order = order;
    }
}

/// Answers whether `v` must precede `u`. The answers must be a subset of
/// the true constraint closure and contain at least every edge whose
/// endpoints have no constrained node between them; both the on-the-fly
/// rule relation and any stored (possibly reduced) graph qualify.
pub trait DependencyProvider {
    fn is_dependency(&self, u: NodeId, v: NodeId) -> bool;
}

/// Memoryless provider: recomputes rule overlap and priority on the fly,
/// storing nothing besides the list itself.
pub struct RulesetProvider<'a> {
    rs: &'a Ruleset,
}

impl<'a> RulesetProvider<'a> {
    pub fn new(rs: &'a Ruleset) -> Self {
        RulesetProvider { rs }
    }
}

impl DependencyProvider for RulesetProvider<'_> {
    fn is_dependency(&self, u: NodeId, v: NodeId) -> bool {
        match (self.rs.get(u), self.rs.get(v)) {
            (Some(a), Some(b)) => a.depends_on(b),
            _ => false,
        }
    }
}

/// Stored-graph provider: looks the relation up in a dependency DAG,
/// typically the transitive reduction.
pub struct DagProvider<'a> {
    dag: &'a DepDag,
}

impl<'a> DagProvider<'a> {
    pub fn new(dag: &'a DepDag) -> Self {
        DagProvider { dag }
    }
}

impl DependencyProvider for DagProvider<'_> {
    fn is_dependency(&self, u: NodeId, v: NodeId) -> bool {
        self.dag.has_edge(u, v)
    }
}

/// Outcome of one MRF access: the accessed node's position before the
/// access, the chain of moved nodes head-first (the accessed node is always
/// last), the transpositions charged, and how many dependency queries the
/// provider answered.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MrfOutcome {
    pub pre_position: usize,
    pub d_sequence: Vec<NodeId>,
    pub transpositions: u64,
    pub dependency_probes: u64,
}

/// Swaps the nodes at positions `i` and `i + 1` (1-based). Fails when the
/// pair is constrained in the fixed direction; in a feasible configuration
/// an adjacent pair can only be constrained by a direct edge.
pub fn transpose_adjacent(cfg: &mut ListConfig, i: usize, dag: &DepDag) -> Result<(), ListError> {
    if i == 0 || i >= cfg.len() {
        return Err(ListError::PositionOutOfRange(i));
    }
    let left = cfg.order[i - 1];
    let right = cfg.order[i];
    if dag.has_edge(right, left) {
        return Err(ListError::InfeasibleTransposition { left, right });
    }
    cfg.order.swap(i - 1, i);
    cfg.index.insert(left, i);
    cfg.index.insert(right, i - 1);
    Ok(())
}

fn furthest_dependency<P: DependencyProvider>(
    cfg: &ListConfig,
    provider: &P,
    y: NodeId,
    pos: usize,
    probes: &mut u64,
) -> Option<(NodeId, usize)> {
    for p in (1..pos).rev() {
        let candidate = cfg.node_at(p).expect("position within range");
        *probes += 1;
        if provider.is_dependency(y, candidate) {
            return Some((candidate, p));
        }
    }
    None
}

/// The dependency of `y` located at the largest position before it — the
/// first node that blocks `y`'s forward motion. `None` when `y` has no
/// dependency present in the list.
pub fn direct_dependency<P: DependencyProvider>(
    cfg: &ListConfig,
    provider: &P,
    y: NodeId,
) -> Result<Option<NodeId>, ListError> {
    let pos = cfg.position(y).ok_or(ListError::UnknownNode(y))?;
    let mut probes = 0;
    Ok(furthest_dependency(cfg, provider, y, pos, &mut probes).map(|(id, _)| id))
}

/// Serves an access to `y`: charges `alpha * pos(y)`, then applies the MRF
/// rearrangement. Every node of the moved chain lands one place behind its
/// own furthest dependency, so the transpositions for one request never
/// exceed the accessed node's pre-access position.
pub fn mrf_access<P: DependencyProvider>(
    cfg: &mut ListConfig,
    provider: &P,
    y: NodeId,
    model: &CostModel,
    ledger: &mut CostLedger,
) -> Result<MrfOutcome, ListError> {
    let pre_position = cfg.position(y).ok_or(ListError::UnknownNode(y))?;
    let access = model.access_cost(pre_position);
    let mut transpositions = 0;
    let mut dependency_probes = 0;
    let mut chain = Vec::new();
    let mut current = y;
    loop {
        chain.push(current);
        let pos = cfg.position(current).expect("chain nodes stay in the list");
        match furthest_dependency(cfg, provider, current, pos, &mut dependency_probes) {
            None => {
                transpositions += cfg.move_forward(pos, 1);
                break;
            }
            Some((blocker, blocker_pos)) => {
                transpositions += cfg.move_forward(pos, blocker_pos + 1);
                current = blocker;
            }
        }
    }
    chain.reverse();
    ledger.record(access, transpositions);
    Ok(MrfOutcome {
        pre_position,
        d_sequence: chain,
        transpositions,
        dependency_probes,
    })
}

/// Static baseline: charges `alpha * pos(y)` and leaves the list untouched.
/// Returns the accessed position.
pub fn static_access(
    cfg: &ListConfig,
    y: NodeId,
    model: &CostModel,
    ledger: &mut CostLedger,
) -> Result<usize, ListError> {
    let pos = cfg.position(y).ok_or(ListError::UnknownNode(y))?;
    ledger.record(model.access_cost(pos), 0);
    Ok(pos)
}

/// A node to insert together with its revealed edges: the present nodes
/// that must precede it and the present nodes it must precede.
#[derive(Clone, Debug)]
pub struct NewNode {
    pub id: NodeId,
    pub dependencies: Vec<NodeId>,
    pub dependents: Vec<NodeId>,
}

fn check_insert_endpoints(cfg: &ListConfig, node: &NewNode) -> Result<(), ListError> {
    if cfg.contains(node.id) {
        return Err(ListError::DuplicateNode(node.id));
    }
    for &v in node.dependencies.iter().chain(&node.dependents) {
        if !cfg.contains(v) {
            return Err(ListError::UnknownNode(v));
        }
    }
    Ok(())
}

fn gap_free_slot(cfg: &ListConfig, node: &NewNode) -> Option<usize> {
    let slot = node
        .dependencies
        .iter()
        .map(|&v| cfg.position(v).unwrap())
        .max()
        .unwrap_or(0)
        + 1;
    let blocked = node
        .dependents
        .iter()
        .any(|&w| cfg.position(w).unwrap() < slot);
    (!blocked).then_some(slot)
}

fn apply_insert(
    cfg: &mut ListConfig,
    dag: &mut DepDag,
    node: &NewNode,
    slot: usize,
) -> Result<(), ListError> {
    dag.insert_node(node.id, &node.dependencies, &node.dependents)?;
    cfg.insert_at(slot, node.id);
    Ok(())
}

/// Inserts `node` right behind its furthest dependency (at the head when it
/// has none) without any rearrangement, charging the list length after
/// insertion. Requires a gap-free slot, which the transitivity assumption
/// guarantees; otherwise fails and the caller should use
/// [`insert_with_repair`].
pub fn insert_transitive(
    cfg: &mut ListConfig,
    dag: &mut DepDag,
    node: &NewNode,
    ledger: &mut CostLedger,
) -> Result<usize, ListError> {
    check_insert_endpoints(cfg, node)?;
    let slot = gap_free_slot(cfg, node).ok_or(ListError::NonTransitiveInsert(node.id))?;
    apply_insert(cfg, dag, node, slot)?;
    ledger.record(Ratio::from_integer(cfg.len() as u64), 0);
    Ok(slot)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RepairOutcome {
    pub slot: usize,
    pub repair_transpositions: u64,
}

/// Insertion that tolerates non-transitive reveals. When a gap-free slot
/// exists this is exactly [`insert_transitive`]. Otherwise the pre-existing
/// nodes are stably partitioned into the block that must precede `node`
/// (its revealed dependencies plus everything that must precede them)
/// followed by the rest; the transpositions charged equal the Kendall tau
/// distance between the old and new orders, on top of the insertion cost.
pub fn insert_with_repair(
    cfg: &mut ListConfig,
    dag: &mut DepDag,
    node: &NewNode,
    ledger: &mut CostLedger,
) -> Result<RepairOutcome, ListError> {
    check_insert_endpoints(cfg, node)?;
    if let Some(slot) = gap_free_slot(cfg, node) {
        apply_insert(cfg, dag, node, slot)?;
        ledger.record(Ratio::from_integer(cfg.len() as u64), 0);
        return Ok(RepairOutcome { slot, repair_transpositions: 0 });
    }

    let mut preceding = std::collections::HashSet::new();
    for &v in &node.dependencies {
        preceding.insert(v);
        preceding.extend(dag.dependency_closure_of(v)?);
    }
    let mut following = std::collections::HashSet::new();
    for &w in &node.dependents {
        following.insert(w);
        following.extend(dag.dependent_closure_of(w)?);
    }
    if preceding.intersection(&following).next().is_some() {
        return Err(ListError::InsertCycle(node.id));
    }

    // Kendall tau of the stable two-block partition: one inversion per
    // (non-block, block) pair currently in that order.
    let mut block = Vec::new();
    let mut rest = Vec::new();
    let mut repair_transpositions = 0u64;
    for &id in cfg.order() {
        if preceding.contains(&id) {
            repair_transpositions += rest.len() as u64;
            block.push(id);
        } else {
            rest.push(id);
        }
    }
    let slot = block.len() + 1;
    let mut new_order = block;
    new_order.push(node.id);
    new_order.extend(rest);

    dag.insert_node(node.id, &node.dependencies, &node.dependents)?;
    cfg.assign(new_order);
    ledger.record(Ratio::from_integer(cfg.len() as u64), repair_transpositions);
    Ok(RepairOutcome { slot, repair_transpositions })
}

/// Deletes `y`: charges the access `alpha * pos(y)`, removes the node from
/// the list and its edges from the governing graph. No transpositions.
pub fn delete(
    cfg: &mut ListConfig,
    dag: &mut DepDag,
    y: NodeId,
    model: &CostModel,
    ledger: &mut CostLedger,
) -> Result<(), ListError> {
    let pos = cfg.position(y).ok_or(ListError::UnknownNode(y))?;
    dag.remove_node(y)?;
    cfg.remove_entry(y);
    ledger.record(model.access_cost(pos), 0);
    Ok(())
}
