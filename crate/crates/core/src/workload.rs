//! Workload production and ingestion.
//!
//! Traces are sequences of requests: packets, or abstract operations on
//! node ids (access / insert / delete). The text format is one request per
//! line — packet lines are whitespace-separated decimal integers
//! `srcIP dstIP sport dport proto [filterIdx]`, abstract lines are `A id`,
//! `I <rule line>`, `D id` — with `#` comment lines skipped. A trailing
//! `filterIdx` is the 0-based index of the expected matching rule in the
//! ruleset's priority order, retained for validation.
//!
//! Generators are pure functions of their inputs and seed. Packet
//! generators target a rule's exclusive region (its match box minus every
//! higher-priority overlapping box) so the intended rule is the true best
//! match; when the exclusive region cannot be hit the packet falls back to
//! the box corner and the annotation records the actual best match.

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::rules::{
    parse_rule_line, to_classbench_line, Action, FieldRange, Packet, ParseError, Rule, Ruleset,
};
use crate::NodeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("generator requires a nonempty ruleset")]
    EmptyRuleset,
    #[error("ruleset too large for the synthetic construction: {0} rules (limit {1})")]
    TooManyRules(usize, usize),
    #[error("rule {0} not present in the ruleset")]
    UnknownRule(NodeId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LocalityKind {
    Zipf,
    Runs,
    Uniform,
}

impl fmt::Display for LocalityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            LocalityKind::Zipf => "zipf",
            LocalityKind::Runs => "runs",
            LocalityKind::Uniform => "uniform",
        };
        write!(f, "{name}")
    }
}

impl FromStr for LocalityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "zipf" => Ok(LocalityKind::Zipf),
            "runs" => Ok(LocalityKind::Runs),
            "uniform" => Ok(LocalityKind::Uniform),
            other => Err(format!("unknown locality kind `{other}`")),
        }
    }
}

/// Locality knobs for trace generation. The seed is mandatory: all
/// generation is deterministic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalityParams {
    pub kind: LocalityKind,
    pub zipf_s: f64,
    pub run_len_mean: f64,
    pub seed: u64,
}

impl LocalityParams {
    pub fn zipf(s: f64, seed: u64) -> Result<Self, WorkloadError> {
        if !s.is_finite() || s <= 0.0 {
            return Err(WorkloadError::InvalidParams(format!("zipf exponent must be > 0, got {s}")));
        }
        Ok(LocalityParams { kind: LocalityKind::Zipf, zipf_s: s, run_len_mean: 1.0, seed })
    }

    pub fn runs(mean_len: f64, seed: u64) -> Result<Self, WorkloadError> {
        if !mean_len.is_finite() || mean_len < 1.0 {
            return Err(WorkloadError::InvalidParams(format!(
                "mean run length must be >= 1, got {mean_len}"
            )));
        }
        Ok(LocalityParams { kind: LocalityKind::Runs, zipf_s: 1.0, run_len_mean: mean_len, seed })
    }

    pub fn uniform(seed: u64) -> Self {
        LocalityParams { kind: LocalityKind::Uniform, zipf_s: 1.0, run_len_mean: 1.0, seed }
    }

    /// Compact label for metrics output.
    pub fn label(&self) -> String {
        match self.kind {
            LocalityKind::Zipf => format!("zipf(s={})", self.zipf_s),
            LocalityKind::Runs => format!("runs(mean={})", self.run_len_mean),
            LocalityKind::Uniform => "uniform".to_string(),
        }
    }
}

/// One trace request.
#[derive(Clone, Debug, PartialEq)]
pub enum Request {
    /// A packet to classify. `expected` is the annotated best-match rule,
    /// when known.
    Packet { packet: Packet, expected: Option<NodeId> },
    Access(NodeId),
    Insert(Box<Rule>),
    Delete(NodeId),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceMeta {
    pub seed: u64,
    pub generator: String,
    pub params: String,
    /// Packets that could not be placed in their rule's exclusive region.
    pub fallback_packets: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub requests: Vec<Request>,
    pub meta: TraceMeta,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn packets(&self) -> impl Iterator<Item = (&Packet, Option<NodeId>)> {
        self.requests.iter().filter_map(|r| match r {
            Request::Packet { packet, expected } => Some((packet, *expected)),
            _ => None,
        })
    }
}

/// Parses a trace. Packet lines carry decimal header values and an optional
/// 0-based expected-rule index; abstract lines are `A id`, `I <rule line>`,
/// and `D id`. Inserted rules get the next free id and lowest priority.
pub fn parse_classbench_trace(text: &str, rs: &Ruleset) -> Result<Trace, ParseError> {
    let mut requests = Vec::new();
    let mut known_ids: Vec<NodeId> = rs.ids().collect();
    let mut next_fresh: u32 = known_ids.iter().map(|id| id.0).max().unwrap_or(0) + 1;
    let mut next_priority: u32 = rs.rules().iter().map(|r| r.priority).max().unwrap_or(0) + 1;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| ParseError::Malformed { line: lineno, msg };
        if let Some(rest) = line.strip_prefix("A ") {
            let id = parse_node_id(rest, lineno)?;
            if !known_ids.contains(&id) {
                return Err(bad(format!("access to unknown node {id}")));
            }
            requests.push(Request::Access(id));
        } else if let Some(rest) = line.strip_prefix("D ") {
            let id = parse_node_id(rest, lineno)?;
            let at = known_ids
                .iter()
                .position(|&k| k == id)
                .ok_or_else(|| bad(format!("deletion of unknown node {id}")))?;
            known_ids.remove(at);
            requests.push(Request::Delete(id));
        } else if let Some(rest) = line.strip_prefix("I ") {
            let rule = parse_rule_line(rest.trim(), lineno, NodeId(next_fresh), next_priority)?;
            known_ids.push(rule.id);
            next_fresh += 1;
            next_priority += 1;
            requests.push(Request::Insert(Box::new(rule)));
        } else {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 && fields.len() != 6 {
                return Err(bad("expected 5 or 6 whitespace-separated integers".to_string()));
            }
            let parse = |tok: &str, what: &str, max: u64| -> Result<u64, ParseError> {
                let v: u64 = tok
                    .parse()
                    .map_err(|_| ParseError::Malformed {
                        line: lineno,
                        msg: format!("bad {what} `{tok}`"),
                    })?;
                if v > max {
                    return Err(ParseError::Malformed {
                        line: lineno,
                        msg: format!("{what} {v} out of range"),
                    });
                }
                Ok(v)
            };
            let src_ip = parse(fields[0], "source address", u64::from(u32::MAX))? as u32;
            let dst_ip = parse(fields[1], "destination address", u64::from(u32::MAX))? as u32;
            let src_port = parse(fields[2], "source port", 0xffff)? as u16;
            let dst_port = parse(fields[3], "destination port", 0xffff)? as u16;
            let protocol = parse(fields[4], "protocol", 0xff)? as u8;
            let expected = match fields.get(5) {
                None => None,
                Some(tok) => {
                    let idx = parse(tok, "filter index", u64::MAX)? as usize;
                    let rule = rs.rules().get(idx).ok_or_else(|| ParseError::Malformed {
                        line: lineno,
                        msg: format!("filter index {idx} out of range"),
                    })?;
                    Some(rule.id)
                }
            };
            requests.push(Request::Packet {
                packet: Packet { protocol, src_ip, dst_ip, src_port, dst_port },
                expected,
            });
        }
    }
    Ok(Trace {
        requests,
        meta: TraceMeta { generator: "file".to_string(), ..TraceMeta::default() },
    })
}

fn parse_node_id(token: &str, lineno: usize) -> Result<NodeId, ParseError> {
    token
        .trim()
        .parse::<u32>()
        .map(NodeId)
        .map_err(|_| ParseError::Malformed { line: lineno, msg: format!("bad node id `{token}`") })
}

/// Serializes a trace in the text format. Expected-match annotations are
/// written as 0-based indexes into `rs`; annotations naming rules absent
/// from `rs` are dropped.
pub fn write_trace(trace: &Trace, rs: &Ruleset) -> Result<String, WorkloadError> {
    let mut out = String::new();
    out.push_str(&format!("# generator: {}\n", trace.meta.generator));
    out.push_str(&format!("# seed: {}\n", trace.meta.seed));
    if !trace.meta.params.is_empty() {
        out.push_str(&format!("# params: {}\n", trace.meta.params));
    }
    out.push_str(&format!("# fallback_packets: {}\n", trace.meta.fallback_packets));
    for request in &trace.requests {
        match request {
            Request::Packet { packet, expected } => {
                out.push_str(&format!(
                    "{} {} {} {} {}",
                    packet.src_ip, packet.dst_ip, packet.src_port, packet.dst_port, packet.protocol
                ));
                if let Some(idx) = expected.and_then(|id| rs.index_of(id)) {
                    out.push_str(&format!(" {idx}"));
                }
                out.push('\n');
            }
            Request::Access(id) => out.push_str(&format!("A {id}\n")),
            Request::Delete(id) => out.push_str(&format!("D {id}\n")),
            Request::Insert(rule) => {
                let line = to_classbench_line(rule)
                    .map_err(|e| WorkloadError::InvalidParams(e.to_string()))?;
                out.push_str(&format!("I {line}\n"));
            }
        }
    }
    Ok(out)
}

/// A packet annotation that disagrees with the ground-truth best match.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceWarning {
    pub request_index: usize,
    pub expected: Option<NodeId>,
    pub found: Option<NodeId>,
}

/// Cross-checks every annotated packet against `highest_priority_match`.
pub fn validate_annotations(trace: &Trace, rs: &Ruleset) -> Vec<TraceWarning> {
    let mut warnings = Vec::new();
    for (i, request) in trace.requests.iter().enumerate() {
        if let Request::Packet { packet, expected: Some(expected) } = request {
            let found = rs.highest_priority_match(packet);
            if found != Some(*expected) {
                warnings.push(TraceWarning { request_index: i, expected: Some(*expected), found });
            }
        }
    }
    warnings
}

const EXCLUSIVE_SAMPLE_TRIES: usize = 32;

fn sample_in_range(range: &FieldRange, rng: &mut ChaCha8Rng) -> u32 {
    rng.gen_range(range.lo()..=range.hi())
}

/// Draws a packet matching `rule`, preferring a uniform point of the rule's
/// exclusive region. Returns the packet and whether the rule is its true
/// best match.
fn synth_packet(rs: &Ruleset, rule: &Rule, rng: &mut ChaCha8Rng) -> (Packet, bool) {
    for _ in 0..EXCLUSIVE_SAMPLE_TRIES {
        let pkt = Packet {
            protocol: sample_in_range(&rule.protocol, rng) as u8,
            src_ip: sample_in_range(&rule.src_ip, rng),
            dst_ip: sample_in_range(&rule.dst_ip, rng),
            src_port: sample_in_range(&rule.src_port, rng) as u16,
            dst_port: sample_in_range(&rule.dst_port, rng) as u16,
        };
        if rs.highest_priority_match(&pkt) == Some(rule.id) {
            return (pkt, true);
        }
    }
    // The low corner is exclusive for the nested synthetic construction;
    // for arbitrary rulesets it may still match a higher-priority rule.
    let corner = Packet {
        protocol: rule.protocol.lo() as u8,
        src_ip: rule.src_ip.lo(),
        dst_ip: rule.dst_ip.lo(),
        src_port: rule.src_port.lo() as u16,
        dst_port: rule.dst_port.lo() as u16,
    };
    let exclusive = rs.highest_priority_match(&corner) == Some(rule.id);
    (corner, exclusive)
}

fn packet_trace<F>(
    rs: &Ruleset,
    params: &LocalityParams,
    m: usize,
    mut pick_rule: F,
    rng: &mut ChaCha8Rng,
    param_label: String,
) -> Trace
where
    F: FnMut(&mut ChaCha8Rng) -> usize,
{
    let mut requests = Vec::with_capacity(m);
    let mut fallback_packets = 0;
    for _ in 0..m {
        let rule = &rs.rules()[pick_rule(rng)];
        let (packet, exclusive) = synth_packet(rs, rule, rng);
        let expected = if exclusive {
            Some(rule.id)
        } else {
            fallback_packets += 1;
            rs.highest_priority_match(&packet)
        };
        requests.push(Request::Packet { packet, expected });
    }
    Trace {
        requests,
        meta: TraceMeta {
            seed: params.seed,
            generator: params.kind.to_string(),
            params: param_label,
            fallback_packets,
        },
    }
}

/// Zipf-distributed rule popularity: ranks follow `1 / r^s` over a seeded
/// random permutation of the rules.
pub fn gen_zipf_trace(rs: &Ruleset, params: &LocalityParams, m: usize) -> Result<Trace, WorkloadError> {
    if params.kind != LocalityKind::Zipf {
        return Err(WorkloadError::InvalidParams("expected ZIPF params".to_string()));
    }
    if !params.zipf_s.is_finite() || params.zipf_s <= 0.0 {
        return Err(WorkloadError::InvalidParams("zipf exponent must be > 0".to_string()));
    }
    if rs.is_empty() {
        return Err(WorkloadError::EmptyRuleset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut rank_to_rule: Vec<usize> = (0..rs.len()).collect();
    rank_to_rule.shuffle(&mut rng);
    let weights: Vec<f64> = (1..=rs.len()).map(|r| (r as f64).powf(-params.zipf_s)).collect();
    let dist = WeightedIndex::new(&weights)
        .map_err(|e| WorkloadError::InvalidParams(e.to_string()))?;
    let label = format!("s={}", params.zipf_s);
    Ok(packet_trace(rs, params, m, |rng| rank_to_rule[dist.sample(rng)], &mut rng, label))
}

fn geometric_len(mean: f64, rng: &mut ChaCha8Rng) -> usize {
    if mean <= 1.0 {
        return 1;
    }
    let p = 1.0 / mean;
    let u: f64 = rng.gen();
    1 + ((1.0 - u).ln() / (1.0 - p).ln()).floor() as usize
}

/// Repeat-run locality: geometric-length runs of one rule's packets, the
/// rule of each run drawn uniformly.
pub fn gen_runs_trace(rs: &Ruleset, params: &LocalityParams, m: usize) -> Result<Trace, WorkloadError> {
    if params.kind != LocalityKind::Runs {
        return Err(WorkloadError::InvalidParams("expected RUNS params".to_string()));
    }
    if rs.is_empty() {
        return Err(WorkloadError::EmptyRuleset);
    }
    let mean = params.run_len_mean;
    let n = rs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut remaining_in_run = 0usize;
    let mut current = 0usize;
    let label = format!("mean={mean}");
    Ok(packet_trace(
        rs,
        params,
        m,
        move |rng| {
            if remaining_in_run == 0 {
                remaining_in_run = geometric_len(mean, rng);
                current = rng.gen_range(0..n);
            }
            remaining_in_run -= 1;
            current
        },
        &mut rng,
        label,
    ))
}

/// Low-locality baseline: every packet matches a uniformly random rule.
pub fn gen_uniform_trace(rs: &Ruleset, params: &LocalityParams, m: usize) -> Result<Trace, WorkloadError> {
    if params.kind != LocalityKind::Uniform {
        return Err(WorkloadError::InvalidParams("expected UNIFORM params".to_string()));
    }
    if rs.is_empty() {
        return Err(WorkloadError::EmptyRuleset);
    }
    let n = rs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    Ok(packet_trace(rs, params, m, |rng| rng.gen_range(0..n), &mut rng, String::new()))
}

pub fn gen_trace(rs: &Ruleset, params: &LocalityParams, m: usize) -> Result<Trace, WorkloadError> {
    match params.kind {
        LocalityKind::Zipf => gen_zipf_trace(rs, params, m),
        LocalityKind::Runs => gen_runs_trace(rs, params, m),
        LocalityKind::Uniform => gen_uniform_trace(rs, params, m),
    }
}

/// A generated ruleset together with how much pairwise overlap it achieved.
#[derive(Clone, Debug)]
pub struct SyntheticRuleset {
    pub ruleset: Ruleset,
    pub requested_density: f64,
    pub achieved_density: f64,
}

const MAX_SYNTHETIC_RULES: usize = 60_000;

/// Builds `n` rules so that approximately `overlap_density * n(n-1)/2`
/// unordered pairs overlap. Rules are grouped into chains of nested port
/// ranges inside disjoint /24 source subnets: all pairs within a group
/// overlap, no pairs across groups do, and every rule keeps a nonempty
/// exclusive slice of the port space for the trace generators. Group sizes
/// are chosen greedily to hit the requested pair count; the rules of
/// different groups are interleaved by a seeded shuffle.
pub fn gen_synthetic_ruleset(
    n: usize,
    overlap_density: f64,
    seed: u64,
) -> Result<SyntheticRuleset, WorkloadError> {
    if n == 0 {
        return Err(WorkloadError::InvalidParams("need at least one rule".to_string()));
    }
    if n > MAX_SYNTHETIC_RULES {
        return Err(WorkloadError::TooManyRules(n, MAX_SYNTHETIC_RULES));
    }
    if !(0.0..=1.0).contains(&overlap_density) {
        return Err(WorkloadError::InvalidParams(format!(
            "overlap density must be in [0, 1], got {overlap_density}"
        )));
    }
    let total_pairs = n * (n - 1) / 2;
    let target = (overlap_density * total_pairs as f64).round() as usize;

    let mut sizes = Vec::new();
    let mut remaining = n;
    let mut pairs_left = target;
    while remaining > 0 {
        let mut k = 1;
        while k < remaining && (k + 1) * k / 2 <= pairs_left {
            k += 1;
        }
        sizes.push(k);
        pairs_left -= k * (k - 1) / 2;
        remaining -= k;
    }
    let achieved_pairs: usize = sizes.iter().map(|&k| k * (k - 1) / 2).sum();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Interleave the groups while keeping each group's most-specific-first
    // internal order, so that nested rules keep usable exclusive regions.
    let mut tags: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(g, &k)| std::iter::repeat_n(g, k))
        .collect();
    tags.shuffle(&mut rng);

    let mut next_depth = vec![0usize; sizes.len()];
    let mut rules = Vec::with_capacity(n);
    for (i, &g) in tags.iter().enumerate() {
        let k = sizes[g];
        let depth = next_depth[g];
        next_depth[g] += 1;
        let step = (0x10000 / k) as u32;
        let port_lo = (k - 1 - depth) as u32 * step;
        let src_ip = FieldRange::from_ipv4_prefix((10 << 24) | ((g as u32) << 8), 24)
            .expect("valid prefix length");
        rules.push(Rule {
            id: NodeId(i as u32 + 1),
            priority: i as u32 + 1,
            protocol: FieldRange::exact(6),
            src_ip,
            dst_ip: FieldRange::full_ipv4(),
            src_port: FieldRange::new(port_lo, 0xffff).expect("lo below port max"),
            dst_port: FieldRange::full_port(),
            action: Action::Accept,
        });
    }
    let ruleset = Ruleset::new(rules).expect("ids and priorities are sequential");
    let achieved_density = if total_pairs == 0 {
        0.0
    } else {
        achieved_pairs as f64 / total_pairs as f64
    };
    Ok(SyntheticRuleset { ruleset, requested_density: overlap_density, achieved_density })
}
