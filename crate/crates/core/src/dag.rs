//! The precedence DAG over list nodes.
//!
//! An edge `(u, v)` means `v` is a dependency of `u`: `v` must be in front
//! of `u` in every list configuration. The constraint relation is the
//! reachability closure of the stored edge set, so a reduced graph with the
//! same closure governs the same set of feasible orders.

use std::collections::HashMap;

use thiserror::Error;

use crate::list::ListConfig;
use crate::rules::Ruleset;
use crate::NodeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DagError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("duplicate node {0}")]
    DuplicateNode(NodeId),
    #[error("dependency cycle involving node {0}")]
    Cycle(NodeId),
    #[error("list and graph hold different node sets")]
    NodeMismatch,
}

/// Structure statistics of a dependency graph.
///
/// `max_depth` is the length (in edges) of the longest dependency chain and
/// `avg_out_degree` the mean number of stored edges per node; both are
/// computed on the stored edge set. `avg_ancestors` is the mean size of a
/// node's reachable-dependency set, always computed on the closure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DagStats {
    pub max_depth: usize,
    pub avg_out_degree: f64,
    pub avg_ancestors: f64,
}

/// Dependency DAG with per-node neighbor lists in both directions.
/// Immutable in spirit: updates rebuild the adjacency, which keeps every
/// construction path behind the same acyclicity check.
#[derive(Clone, Debug)]
pub struct DepDag {
    nodes: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    deps: Vec<Vec<usize>>,
    dependents: Vec<Vec<usize>>,
    edge_count: usize,
}

impl DepDag {
    /// Builds a DAG from nodes and `(u, v)` edges ("v must precede u").
    /// Rejects duplicate nodes, edges touching unknown nodes, and cycles.
    pub fn new(
        nodes: impl IntoIterator<Item = NodeId>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self, DagError> {
        let nodes: Vec<NodeId> = nodes.into_iter().collect();
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, &id) in nodes.iter().enumerate() {
            if index.insert(id, i).is_some() {
                return Err(DagError::DuplicateNode(id));
            }
        }
        let mut deps = vec![Vec::new(); nodes.len()];
        let mut dependents = vec![Vec::new(); nodes.len()];
        for (u, v) in edges {
            let ui = *index.get(&u).ok_or(DagError::UnknownNode(u))?;
            let vi = *index.get(&v).ok_or(DagError::UnknownNode(v))?;
            deps[ui].push(vi);
        }
        let mut edge_count = 0;
        for (ui, list) in deps.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            edge_count += list.len();
            for &vi in list.iter() {
                dependents[vi].push(ui);
            }
        }
        let dag = DepDag { nodes, index, deps, dependents, edge_count };
        dag.dependency_order()?;
        Ok(dag)
    }

    /// A DAG with no edges.
    pub fn empty(nodes: impl IntoIterator<Item = NodeId>) -> Result<Self, DagError> {
        Self::new(nodes, std::iter::empty())
    }

    /// Builds the dependency graph of a ruleset: edge `(a, b)` iff rule `a`
    /// depends on rule `b`. Acyclic by construction since edges always point
    /// from lower to higher priority.
    pub fn from_ruleset(rs: &Ruleset) -> Self {
        let rules = rs.rules();
        let mut edges = Vec::new();
        for (j, a) in rules.iter().enumerate() {
            for b in &rules[..j] {
                if a.overlaps(b) {
                    edges.push((a.id, b.id));
                }
            }
        }
        Self::new(rs.ids(), edges).expect("priority-oriented edges cannot form a cycle")
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        match (self.index.get(&u), self.index.get(&v)) {
            (Some(&ui), Some(&vi)) => self.deps[ui].binary_search(&vi).is_ok(),
            _ => false,
        }
    }

    /// Direct dependencies of `u` (out-neighbors: nodes that must precede it).
    pub fn dependencies_of(&self, u: NodeId) -> Result<Vec<NodeId>, DagError> {
        let ui = self.dense(u)?;
        Ok(self.deps[ui].iter().map(|&vi| self.nodes[vi]).collect())
    }

    /// Direct dependents of `u` (in-neighbors: nodes it must precede).
    pub fn dependents_of(&self, u: NodeId) -> Result<Vec<NodeId>, DagError> {
        let ui = self.dense(u)?;
        Ok(self.dependents[ui].iter().map(|&vi| self.nodes[vi]).collect())
    }

    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.edge_count);
        for (ui, list) in self.deps.iter().enumerate() {
            for &vi in list {
                out.push((self.nodes[ui], self.nodes[vi]));
            }
        }
        out
    }

    fn dense(&self, id: NodeId) -> Result<usize, DagError> {
        self.index.get(&id).copied().ok_or(DagError::UnknownNode(id))
    }

    /// True iff a directed path `u -> ... -> v` exists, i.e. `v` transitively
    /// precedes `u`. Irreflexive: a node never reaches itself in a DAG.
    pub fn reachable(&self, u: NodeId, v: NodeId) -> Result<bool, DagError> {
        let ui = self.dense(u)?;
        let vi = self.dense(v)?;
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = self.deps[ui].clone();
        while let Some(w) = stack.pop() {
            if w == vi {
                return Ok(true);
            }
            if !seen[w] {
                seen[w] = true;
                stack.extend(self.deps[w].iter().copied());
            }
        }
        Ok(false)
    }

    /// All nodes that must precede `id`, i.e. its reachable-dependency set.
    pub fn dependency_closure_of(&self, id: NodeId) -> Result<Vec<NodeId>, DagError> {
        self.directed_closure_of(id, true)
    }

    /// All nodes that `id` must precede.
    pub fn dependent_closure_of(&self, id: NodeId) -> Result<Vec<NodeId>, DagError> {
        self.directed_closure_of(id, false)
    }

    fn directed_closure_of(&self, id: NodeId, forward: bool) -> Result<Vec<NodeId>, DagError> {
        let start = self.dense(id)?;
        let adj = if forward { &self.deps } else { &self.dependents };
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = adj[start].clone();
        let mut out = Vec::new();
        while let Some(w) = stack.pop() {
            if !seen[w] {
                seen[w] = true;
                out.push(self.nodes[w]);
                stack.extend(adj[w].iter().copied());
            }
        }
        Ok(out)
    }

    /// Order in which every node appears after all of its dependencies.
    /// Fails with the offending node when the edge set has a cycle.
    fn dependency_order(&self) -> Result<Vec<usize>, DagError> {
        let n = self.nodes.len();
        let mut remaining: Vec<usize> = self.deps.iter().map(Vec::len).collect();
        let mut queue: Vec<usize> = (0..n).filter(|&i| remaining[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        let mut head = 0;
        while head < queue.len() {
            let u = queue[head];
            head += 1;
            order.push(u);
            for &w in &self.dependents[u] {
                remaining[w] -= 1;
                if remaining[w] == 0 {
                    queue.push(w);
                }
            }
        }
        if order.len() < n {
            let stuck = (0..n).find(|&i| remaining[i] > 0).unwrap();
            return Err(DagError::Cycle(self.nodes[stuck]));
        }
        Ok(order)
    }

    fn closure(&self) -> BitMatrix {
        let n = self.nodes.len();
        let mut closure = BitMatrix::new(n);
        for &u in &self.dependency_order().expect("construction checked acyclicity") {
            for &v in &self.deps[u] {
                closure.or_row(u, v);
                closure.set(u, v);
            }
        }
        closure
    }

    /// Minimum equivalent DAG: the unique smallest edge set with the same
    /// reachability relation. An edge `(u, v)` is redundant iff some other
    /// dependency of `u` already reaches `v`.
    pub fn transitive_reduction(&self) -> DepDag {
        let closure = self.closure();
        let mut edges = Vec::new();
        for (ui, list) in self.deps.iter().enumerate() {
            for &vi in list {
                let redundant = list
                    .iter()
                    .any(|&wi| wi != vi && closure.get(wi, vi));
                if !redundant {
                    edges.push((self.nodes[ui], self.nodes[vi]));
                }
            }
        }
        DepDag::new(self.nodes.clone(), edges).expect("subset of an acyclic edge set")
    }

    /// True iff every edge `(u, v)` has `v` positioned before `u` in `cfg`.
    /// The list must hold exactly this graph's node set.
    pub fn validate_feasible(&self, cfg: &ListConfig) -> Result<bool, DagError> {
        if cfg.len() != self.nodes.len() || self.nodes.iter().any(|&id| !cfg.contains(id)) {
            return Err(DagError::NodeMismatch);
        }
        for (ui, list) in self.deps.iter().enumerate() {
            let up = cfg.position(self.nodes[ui]).unwrap();
            for &vi in list {
                if cfg.position(self.nodes[vi]).unwrap() >= up {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    pub fn stats(&self) -> DagStats {
        let n = self.nodes.len();
        if n == 0 {
            return DagStats { max_depth: 0, avg_out_degree: 0.0, avg_ancestors: 0.0 };
        }
        let order = self.dependency_order().expect("construction checked acyclicity");
        let mut depth = vec![0usize; n];
        let mut max_depth = 0;
        for &u in &order {
            depth[u] = self.deps[u].iter().map(|&v| depth[v] + 1).max().unwrap_or(0);
            max_depth = max_depth.max(depth[u]);
        }
        let closure = self.closure();
        let total_ancestors: u64 = (0..n).map(|u| closure.row_count(u)).sum();
        DagStats {
            max_depth,
            avg_out_degree: self.edge_count as f64 / n as f64,
            avg_ancestors: total_ancestors as f64 / n as f64,
        }
    }

    /// Rebuilds the graph with `id` added, with edges to its dependencies
    /// and from its dependents. Fails before mutating when the new edges
    /// would close a cycle.
    pub fn insert_node(
        &mut self,
        id: NodeId,
        dependencies: &[NodeId],
        dependents: &[NodeId],
    ) -> Result<(), DagError> {
        if self.contains(id) {
            return Err(DagError::DuplicateNode(id));
        }
        for &v in dependencies.iter().chain(dependents) {
            self.dense(v)?;
        }
        // A new cycle must pass through `id`: some dependency would have to
        // reach (be preceded by) some dependent.
        for &v in dependencies {
            for &w in dependents {
                if v == w || self.reachable(v, w)? {
                    return Err(DagError::Cycle(id));
                }
            }
        }
        let mut nodes = self.nodes.clone();
        nodes.push(id);
        let mut edges = self.edges();
        edges.extend(dependencies.iter().map(|&v| (id, v)));
        edges.extend(dependents.iter().map(|&w| (w, id)));
        *self = DepDag::new(nodes, edges)?;
        Ok(())
    }

    /// Rebuilds the graph without `id` and without its incident edges.
    pub fn remove_node(&mut self, id: NodeId) -> Result<(), DagError> {
        self.dense(id)?;
        let nodes: Vec<NodeId> = self.nodes.iter().copied().filter(|&v| v != id).collect();
        let edges: Vec<(NodeId, NodeId)> = self
            .edges()
            .into_iter()
            .filter(|&(u, v)| u != id && v != id)
            .collect();
        *self = DepDag::new(nodes, edges)?;
        Ok(())
    }

    /// Edge-list dump, one `u v` pair per line, sorted for stable output.
    pub fn dump_edges(&self) -> String {
        let mut edges = self.edges();
        edges.sort_unstable();
        let mut out = String::new();
        for (u, v) in edges {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }
}

/// Square bit matrix backing reachability rows.
struct BitMatrix {
    words: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    fn new(n: usize) -> Self {
        let words = n.div_ceil(64);
        BitMatrix { words, bits: vec![0; words * n] }
    }

    fn set(&mut self, row: usize, col: usize) {
        self.bits[row * self.words + col / 64] |= 1 << (col % 64);
    }

    fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.words + col / 64] & (1 << (col % 64)) != 0
    }

    fn or_row(&mut self, dst: usize, src: usize) {
        for w in 0..self.words {
            let v = self.bits[src * self.words + w];
            self.bits[dst * self.words + w] |= v;
        }
    }

    fn row_count(&self, row: usize) -> u64 {
        self.bits[row * self.words..(row + 1) * self.words]
            .iter()
            .map(|w| u64::from(w.count_ones()))
            .sum()
    }
}
