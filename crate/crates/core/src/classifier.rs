//! Packet-facing classifier over the self-adjusting list.
//!
//! Three variants share the lookup path and differ in rearrangement and
//! cost counting:
//!
//! * memoryless — dependencies recomputed from the rules on the fly, swap
//!   work counted at par with lookups (`alpha = 1`);
//! * stored-graph ("fast") — dependencies looked up in the transitive
//!   reduction kept in memory; a swap is a pointer comparison, so counted
//!   rearrangement cost is discounted by `alpha` (default 5);
//! * static list — no rearrangement, the baseline.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use thiserror::Error;

use crate::dag::DepDag;
use crate::list::{
    self, Alpha, Cost, CostLedger, CostModel, DagProvider, ListConfig, ListError, NewNode,
    RulesetProvider,
};
use crate::rules::{Action, Packet, Rule, RuleError, Ruleset};
use crate::NodeId;

/// Fixed accounting sizes: every rule payload is 48 bytes (5 ranges x 2
/// bounds x 4 bytes plus id/priority/action), and every pointer 4 bytes.
pub const RULE_PAYLOAD_BYTES: u64 = 48;
pub const POINTER_BYTES: u64 = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClassifierError {
    #[error("classifier requires a nonempty ruleset")]
    EmptyRuleset,
    #[error("unknown rule {0}")]
    UnknownRule(NodeId),
    #[error(transparent)]
    List(#[from] ListError),
    #[error(transparent)]
    Rule(#[from] RuleError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ClassifierVariant {
    MrfMemoryless,
    MrfFast,
    StaticList,
}

impl ClassifierVariant {
    pub const ALL: [ClassifierVariant; 3] = [
        ClassifierVariant::MrfMemoryless,
        ClassifierVariant::MrfFast,
        ClassifierVariant::StaticList,
    ];

    /// Default access multiplier: the stored-graph variant counts a packet
    /// match as five comparisons against one per swap.
    pub fn default_alpha(self) -> Alpha {
        match self {
            ClassifierVariant::MrfFast => Alpha::from_int(5).unwrap(),
            _ => Alpha::one(),
        }
    }
}

impl fmt::Display for ClassifierVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ClassifierVariant::MrfMemoryless => "mrf-memoryless",
            ClassifierVariant::MrfFast => "mrf-fast",
            ClassifierVariant::StaticList => "static-list",
        };
        write!(f, "{name}")
    }
}

impl FromStr for ClassifierVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "memoryless" | "mrf" | "mrf-memoryless" => Ok(ClassifierVariant::MrfMemoryless),
            "fast" | "mrf-fast" => Ok(ClassifierVariant::MrfFast),
            "static" | "static-list" => Ok(ClassifierVariant::StaticList),
            other => Err(format!("unknown variant `{other}`")),
        }
    }
}

/// Node-count metrics for one request (or an aggregate of requests).
/// `dependency_probes` counts provider queries during rearrangement; it is
/// reported as a diagnostic and never enters the counted cost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TraversalStats {
    pub lookup_nodes: u64,
    pub swap_nodes: u64,
    pub dependency_probes: u64,
}

impl TraversalStats {
    /// Evaluation metric: lookup nodes plus swapped nodes, the latter
    /// divided by the variant's access multiplier.
    pub fn counted_cost(&self, alpha: Alpha) -> Cost {
        Ratio::from_integer(self.lookup_nodes) + Ratio::from_integer(self.swap_nodes) / alpha.ratio()
    }

    pub fn merge(&mut self, other: &TraversalStats) {
        self.lookup_nodes += other.lookup_nodes;
        self.swap_nodes += other.swap_nodes;
        self.dependency_probes += other.dependency_probes;
    }
}

/// Result of classifying one packet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Classification {
    pub action: Action,
    pub rule: Option<NodeId>,
    pub stats: TraversalStats,
}

/// A self-adjusting (or static) list classifier. Single-writer: `classify`
/// mutates the list order; distinct instances are independent.
#[derive(Clone)]
pub struct Classifier {
    ruleset: Ruleset,
    variant: ClassifierVariant,
    model: CostModel,
    full_dag: DepDag,
    reduced_dag: Option<DepDag>,
    cfg: ListConfig,
    ledger: CostLedger,
    totals: TraversalStats,
    requests: u64,
}

impl Classifier {
    /// Builds a classifier with the variant's default alpha.
    pub fn new(ruleset: Ruleset, variant: ClassifierVariant) -> Result<Self, ClassifierError> {
        let alpha = variant.default_alpha();
        Self::with_alpha(ruleset, variant, alpha)
    }

    pub fn with_alpha(
        ruleset: Ruleset,
        variant: ClassifierVariant,
        alpha: Alpha,
    ) -> Result<Self, ClassifierError> {
        if ruleset.is_empty() {
            return Err(ClassifierError::EmptyRuleset);
        }
        let full_dag = DepDag::from_ruleset(&ruleset);
        let reduced_dag = match variant {
            ClassifierVariant::MrfFast => Some(full_dag.transitive_reduction()),
            _ => None,
        };
        let cfg = ListConfig::new(ruleset.ids().collect()).expect("ruleset ids are unique");
        Ok(Classifier {
            ruleset,
            variant,
            model: CostModel::new(alpha),
            full_dag,
            reduced_dag,
            cfg,
            ledger: CostLedger::new(),
            totals: TraversalStats::default(),
            requests: 0,
        })
    }

    pub fn variant(&self) -> ClassifierVariant {
        self.variant
    }

    pub fn alpha(&self) -> Alpha {
        self.model.alpha()
    }

    pub fn ruleset(&self) -> &Ruleset {
        &self.ruleset
    }

    pub fn config(&self) -> &ListConfig {
        &self.cfg
    }

    pub fn dag(&self) -> &DepDag {
        &self.full_dag
    }

    pub fn reduced_dag(&self) -> Option<&DepDag> {
        self.reduced_dag.as_ref()
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    /// Aggregate stats since construction or the last reset.
    pub fn totals(&self) -> TraversalStats {
        self.totals
    }

    pub fn requests(&self) -> u64 {
        self.requests
    }

    /// Aggregate counted cost under this variant's formula.
    pub fn counted_cost_total(&self) -> Cost {
        self.totals.counted_cost(self.counting_alpha())
    }

    fn counting_alpha(&self) -> Alpha {
        match self.variant {
            ClassifierVariant::MrfFast => self.model.alpha(),
            _ => Alpha::one(),
        }
    }

    /// Scans from the head for the first matching rule, applies the
    /// variant's rearrangement to it, and reports the action. A miss scans
    /// the whole list, reports [`Action::Default`], and does not rearrange.
    pub fn classify(&mut self, pkt: &Packet) -> Classification {
        let matched = self
            .cfg
            .order()
            .iter()
            .enumerate()
            .find(|(_, id)| self.ruleset.get(**id).expect("list mirrors ruleset").matches(pkt))
            .map(|(i, &id)| (i as u64 + 1, id));
        match matched {
            None => {
                let stats = TraversalStats {
                    lookup_nodes: self.cfg.len() as u64,
                    ..TraversalStats::default()
                };
                self.totals.merge(&stats);
                self.requests += 1;
                Classification { action: Action::Default, rule: None, stats }
            }
            Some((lookup, id)) => {
                let action = self.ruleset.get(id).unwrap().action.clone();
                let (swaps, probes) = self.rearrange(id);
                let stats = TraversalStats {
                    lookup_nodes: lookup,
                    swap_nodes: swaps,
                    dependency_probes: probes,
                };
                self.totals.merge(&stats);
                self.requests += 1;
                Classification { action, rule: Some(id), stats }
            }
        }
    }

    /// Serves an abstract access request to a node id, bypassing matching.
    pub fn access_node(&mut self, id: NodeId) -> Result<TraversalStats, ClassifierError> {
        let pos = self.cfg.position(id).ok_or(ClassifierError::UnknownRule(id))?;
        let (swaps, probes) = self.rearrange(id);
        let stats = TraversalStats {
            lookup_nodes: pos as u64,
            swap_nodes: swaps,
            dependency_probes: probes,
        };
        self.totals.merge(&stats);
        self.requests += 1;
        Ok(stats)
    }

    fn rearrange(&mut self, id: NodeId) -> (u64, u64) {
        match self.variant {
            ClassifierVariant::StaticList => {
                list::static_access(&self.cfg, id, &self.model, &mut self.ledger)
                    .expect("node present");
                (0, 0)
            }
            ClassifierVariant::MrfMemoryless => {
                let provider = RulesetProvider::new(&self.ruleset);
                let out = list::mrf_access(&mut self.cfg, &provider, id, &self.model, &mut self.ledger)
                    .expect("node present");
                (out.transpositions, out.dependency_probes)
            }
            ClassifierVariant::MrfFast => {
                let provider = DagProvider::new(self.reduced_dag.as_ref().expect("built for fast"));
                let out = list::mrf_access(&mut self.cfg, &provider, id, &self.model, &mut self.ledger)
                    .expect("node present");
                (out.transpositions, out.dependency_probes)
            }
        }
    }

    /// Inserts a rule with a unique id and priority. The revealed edges are
    /// derived from overlap against the current rules; a gap-free slot is
    /// used when one exists, otherwise the order is repaired. Returns stats
    /// charging the insertion (list length) as lookup work plus any repair
    /// transpositions.
    pub fn insert_rule(&mut self, rule: Rule) -> Result<TraversalStats, ClassifierError> {
        let mut dependencies = Vec::new();
        let mut dependents = Vec::new();
        for existing in self.ruleset.rules() {
            if existing.overlaps(&rule) {
                if existing.priority < rule.priority {
                    dependencies.push(existing.id);
                } else {
                    dependents.push(existing.id);
                }
            }
        }
        let node = NewNode { id: rule.id, dependencies, dependents };
        let mut rules = self.ruleset.rules().to_vec();
        rules.push(rule);
        let ruleset = Ruleset::new(rules)?;

        let repair = match list::insert_transitive(&mut self.cfg, &mut self.full_dag, &node, &mut self.ledger)
        {
            Ok(_) => 0,
            Err(ListError::NonTransitiveInsert(_)) => {
                list::insert_with_repair(&mut self.cfg, &mut self.full_dag, &node, &mut self.ledger)?
                    .repair_transpositions
            }
            Err(e) => return Err(e.into()),
        };
        self.ruleset = ruleset;
        if self.variant == ClassifierVariant::MrfFast {
            self.reduced_dag = Some(self.full_dag.transitive_reduction());
        }
        let stats = TraversalStats {
            lookup_nodes: self.cfg.len() as u64,
            swap_nodes: repair,
            dependency_probes: 0,
        };
        self.totals.merge(&stats);
        self.requests += 1;
        Ok(stats)
    }

    /// Deletes a rule: accesses it (charging its position), then removes it
    /// from the list, the graphs, and the ruleset.
    pub fn delete_rule(&mut self, id: NodeId) -> Result<TraversalStats, ClassifierError> {
        let pos = self.cfg.position(id).ok_or(ClassifierError::UnknownRule(id))?;
        list::delete(&mut self.cfg, &mut self.full_dag, id, &self.model, &mut self.ledger)?;
        let rules: Vec<Rule> = self
            .ruleset
            .rules()
            .iter()
            .filter(|r| r.id != id)
            .cloned()
            .collect();
        self.ruleset = Ruleset::new(rules)?;
        if self.variant == ClassifierVariant::MrfFast {
            self.reduced_dag = Some(self.full_dag.transitive_reduction());
        }
        let stats = TraversalStats { lookup_nodes: pos as u64, ..TraversalStats::default() };
        self.totals.merge(&stats);
        self.requests += 1;
        Ok(stats)
    }

    /// Deterministic memory accounting: rule payloads plus one list link per
    /// node; the stored-graph variant adds one pointer per reduced edge and
    /// one neighbor-list head per node.
    pub fn memory_footprint(&self) -> u64 {
        let n = self.cfg.len() as u64;
        let base = n * (RULE_PAYLOAD_BYTES + POINTER_BYTES);
        match &self.reduced_dag {
            Some(reduced) => base + POINTER_BYTES * (reduced.edge_count() as u64 + n),
            None => base,
        }
    }

    /// Restores priority order and clears ledgers and stats.
    pub fn reset(&mut self) {
        self.cfg = ListConfig::new(self.ruleset.ids().collect()).expect("ruleset ids are unique");
        self.ledger.clear();
        self.totals = TraversalStats::default();
        self.requests = 0;
    }
}
