//! Five-tuple match-action rules.
//!
//! A rule matches a packet when every header value falls inside the rule's
//! per-dimension range. Two rules overlap when all five range intersections
//! are nonempty, and a rule depends on every higher-priority rule it
//! overlaps: that rule must stay in front of it in any list order.
//!
//! The module also reads and writes the common filter-file format: one rule
//! per line,
//! `@srcIP/len dstIP/len sportLo : sportHi dportLo : dportHi proto/mask`,
//! with `#` comment lines skipped and trailing flag fields ignored.

use std::collections::HashMap;
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use thiserror::Error;

use crate::NodeId;

const PORT_MAX: u32 = 0xffff;
const PROTO_MAX: u32 = 0xff;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuleError {
    #[error("invalid range: lo {lo} exceeds hi {hi}")]
    InvalidRange { lo: u32, hi: u32 },
    #[error("invalid prefix length {0}")]
    InvalidPrefixLen(u8),
    #[error("protocol mask {0:#04x} unsupported (only 0x00 and 0xff)")]
    BadProtocolMask(u8),
    #[error("duplicate rule id {0}")]
    DuplicateId(NodeId),
    #[error("duplicate priority {0}")]
    DuplicatePriority(u32),
    #[error("rule {0} not expressible in the filter format: {1}")]
    NotPrefixRange(NodeId, &'static str),
}

/// Parse failures carry the 1-based line number of the offending line.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("no rules in input")]
    EmptyRuleset,
}

/// Inclusive value range for one match dimension.
///
/// IPv4 dimensions span the full 32-bit space, ports 16 bits, protocol
/// 8 bits; a wildcard is the full range of its dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FieldRange {
    lo: u32,
    hi: u32,
}

impl FieldRange {
    pub fn new(lo: u32, hi: u32) -> Result<Self, RuleError> {
        if lo > hi {
            return Err(RuleError::InvalidRange { lo, hi });
        }
        Ok(FieldRange { lo, hi })
    }

    pub fn exact(value: u32) -> Self {
        FieldRange { lo: value, hi: value }
    }

    pub fn full_ipv4() -> Self {
        FieldRange { lo: 0, hi: u32::MAX }
    }

    pub fn full_port() -> Self {
        FieldRange { lo: 0, hi: PORT_MAX }
    }

    pub fn full_proto() -> Self {
        FieldRange { lo: 0, hi: PROTO_MAX }
    }

    /// Range covered by `addr/len`. Host bits of `addr` below the prefix are
    /// masked off, so the resulting `lo` always has its low `32 - len` bits
    /// zero.
    pub fn from_ipv4_prefix(addr: u32, len: u8) -> Result<Self, RuleError> {
        if len > 32 {
            return Err(RuleError::InvalidPrefixLen(len));
        }
        let mask = if len == 0 { 0 } else { u32::MAX << (32 - len) };
        let lo = addr & mask;
        Ok(FieldRange { lo, hi: lo | !mask })
    }

    /// Inverse of [`FieldRange::from_ipv4_prefix`]: `Some((addr, len))` when
    /// the range is exactly one prefix.
    pub fn to_ipv4_prefix(&self) -> Option<(u32, u8)> {
        let span = u64::from(self.hi) - u64::from(self.lo) + 1;
        if !span.is_power_of_two() {
            return None;
        }
        if u64::from(self.lo) & (span - 1) != 0 {
            return None;
        }
        Some((self.lo, 32 - span.trailing_zeros() as u8))
    }

    pub fn lo(&self) -> u32 {
        self.lo
    }

    pub fn hi(&self) -> u32 {
        self.hi
    }

    pub fn contains(&self, value: u32) -> bool {
        self.lo <= value && value <= self.hi
    }

    pub fn intersects(&self, other: &FieldRange) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

/// Five header values matched against a rule's ranges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Packet {
    pub protocol: u8,
    pub src_ip: u32,
    pub dst_ip: u32,
    pub src_port: u16,
    pub dst_port: u16,
}

/// Opaque action label. `Default` is the distinguished table-miss action a
/// classifier reports when no rule matches; rules themselves normally carry
/// one of the other variants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    Accept,
    Deny,
    Default,
    Label(String),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Accept => write!(f, "ACCEPT"),
            Action::Deny => write!(f, "DENY"),
            Action::Default => write!(f, "DEFAULT"),
            Action::Label(s) => write!(f, "{s}"),
        }
    }
}

/// A prioritized 5-tuple match-action rule. Smaller `priority` means higher
/// priority, i.e. earlier in the original table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub id: NodeId,
    pub priority: u32,
    pub protocol: FieldRange,
    pub src_ip: FieldRange,
    pub dst_ip: FieldRange,
    pub src_port: FieldRange,
    pub dst_port: FieldRange,
    pub action: Action,
}

impl Rule {
    fn ranges(&self) -> [&FieldRange; 5] {
        [&self.protocol, &self.src_ip, &self.dst_ip, &self.src_port, &self.dst_port]
    }

    /// True iff every packet value lies within the corresponding range.
    pub fn matches(&self, pkt: &Packet) -> bool {
        self.protocol.contains(u32::from(pkt.protocol))
            && self.src_ip.contains(pkt.src_ip)
            && self.dst_ip.contains(pkt.dst_ip)
            && self.src_port.contains(u32::from(pkt.src_port))
            && self.dst_port.contains(u32::from(pkt.dst_port))
    }

    /// True iff the match domains intersect in all five dimensions, i.e.
    /// some packet matches both rules.
    pub fn overlaps(&self, other: &Rule) -> bool {
        self.ranges()
            .iter()
            .zip(other.ranges())
            .all(|(a, b)| a.intersects(b))
    }

    /// True iff `other` must precede `self` in every list configuration:
    /// the rules overlap and `other` has higher priority.
    pub fn depends_on(&self, other: &Rule) -> bool {
        other.priority < self.priority && self.overlaps(other)
    }
}

/// Rules held in priority order with unique ids and priorities. Immutable
/// after construction, so it can be shared read-only across workers.
#[derive(Clone, Debug)]
pub struct Ruleset {
    rules: Vec<Rule>,
    by_id: HashMap<NodeId, usize>,
}

impl Ruleset {
    /// Builds a ruleset, sorting by priority. Duplicate ids or priorities
    /// are rejected.
    pub fn new(mut rules: Vec<Rule>) -> Result<Self, RuleError> {
        rules.sort_by_key(|r| r.priority);
        for pair in rules.windows(2) {
            if pair[0].priority == pair[1].priority {
                return Err(RuleError::DuplicatePriority(pair[0].priority));
            }
        }
        let mut by_id = HashMap::with_capacity(rules.len());
        for (i, rule) in rules.iter().enumerate() {
            if by_id.insert(rule.id, i).is_some() {
                return Err(RuleError::DuplicateId(rule.id));
            }
        }
        Ok(Ruleset { rules, by_id })
    }

    /// Rules in priority order (highest priority first).
    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn get(&self, id: NodeId) -> Option<&Rule> {
        self.by_id.get(&id).map(|&i| &self.rules[i])
    }

    /// 0-based position of `id` in priority order.
    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.by_id.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.rules.iter().map(|r| r.id)
    }

    /// Id of the matching rule with the smallest priority value, i.e. the
    /// ground-truth best match; `None` when nothing matches.
    pub fn highest_priority_match(&self, pkt: &Packet) -> Option<NodeId> {
        self.rules.iter().find(|r| r.matches(pkt)).map(|r| r.id)
    }
}

/// Parses the filter-file format. Priorities are assigned by rule-line order
/// (first rule line = priority 1 = highest), ids equal priorities, and every
/// parsed rule carries [`Action::Accept`] since the format has no action
/// column.
pub fn parse_classbench_ruleset(text: &str) -> Result<Ruleset, ParseError> {
    let mut rules = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let k = rules.len() as u32 + 1;
        rules.push(parse_rule_line(line, lineno + 1, NodeId(k), k)?);
    }
    if rules.is_empty() {
        return Err(ParseError::EmptyRuleset);
    }
    Ok(Ruleset::new(rules).expect("line-ordered ids and priorities are unique"))
}

fn malformed(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Malformed { line, msg: msg.into() }
}

fn parse_prefix(token: &str, line: usize) -> Result<FieldRange, ParseError> {
    let (addr, len) = token
        .split_once('/')
        .ok_or_else(|| malformed(line, format!("expected addr/len, got `{token}`")))?;
    let addr = Ipv4Addr::from_str(addr)
        .map_err(|_| malformed(line, format!("bad IPv4 address `{addr}`")))?;
    let len: u8 = len
        .parse()
        .map_err(|_| malformed(line, format!("bad prefix length `{len}`")))?;
    FieldRange::from_ipv4_prefix(u32::from(addr), len).map_err(|e| malformed(line, e.to_string()))
}

fn parse_port(token: &str, line: usize) -> Result<u32, ParseError> {
    let v: u32 = token
        .parse()
        .map_err(|_| malformed(line, format!("bad port `{token}`")))?;
    if v > PORT_MAX {
        return Err(malformed(line, format!("port {v} out of range")));
    }
    Ok(v)
}

fn parse_hex_byte(token: &str, line: usize) -> Result<u8, ParseError> {
    let hex = token
        .strip_prefix("0x")
        .or_else(|| token.strip_prefix("0X"))
        .ok_or_else(|| malformed(line, format!("expected 0x-prefixed byte, got `{token}`")))?;
    u8::from_str_radix(hex, 16).map_err(|_| malformed(line, format!("bad hex byte `{token}`")))
}

pub(crate) fn parse_rule_line(
    line: &str,
    lineno: usize,
    id: NodeId,
    priority: u32,
) -> Result<Rule, ParseError> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() < 9 {
        return Err(malformed(lineno, "expected at least 9 fields"));
    }
    let src_tok = tokens[0]
        .strip_prefix('@')
        .ok_or_else(|| malformed(lineno, "rule line must start with `@`"))?;
    let src_ip = parse_prefix(src_tok, lineno)?;
    let dst_ip = parse_prefix(tokens[1], lineno)?;
    if tokens[3] != ":" || tokens[6] != ":" {
        return Err(malformed(lineno, "port ranges must use `lo : hi`"));
    }
    let sp_lo = parse_port(tokens[2], lineno)?;
    let sp_hi = parse_port(tokens[4], lineno)?;
    let dp_lo = parse_port(tokens[5], lineno)?;
    let dp_hi = parse_port(tokens[7], lineno)?;
    let src_port = FieldRange::new(sp_lo, sp_hi).map_err(|e| malformed(lineno, e.to_string()))?;
    let dst_port = FieldRange::new(dp_lo, dp_hi).map_err(|e| malformed(lineno, e.to_string()))?;
    let (proto_tok, mask_tok) = tokens[8]
        .split_once('/')
        .ok_or_else(|| malformed(lineno, "expected proto/mask"))?;
    let value = parse_hex_byte(proto_tok, lineno)?;
    let mask = parse_hex_byte(mask_tok, lineno)?;
    let protocol = match mask {
        0xff => FieldRange::exact(u32::from(value)),
        0x00 => FieldRange::full_proto(),
        other => return Err(malformed(lineno, RuleError::BadProtocolMask(other).to_string())),
    };
    Ok(Rule {
        id,
        priority,
        protocol,
        src_ip,
        dst_ip,
        src_port,
        dst_port,
        action: Action::Accept,
    })
}

/// Serializes one rule as a filter-format line. Fails when an IP range is
/// not a single prefix or the protocol is neither exact nor wildcard.
pub fn to_classbench_line(rule: &Rule) -> Result<String, RuleError> {
    let (src, src_len) = rule
        .src_ip
        .to_ipv4_prefix()
        .ok_or(RuleError::NotPrefixRange(rule.id, "source IP range is not a prefix"))?;
    let (dst, dst_len) = rule
        .dst_ip
        .to_ipv4_prefix()
        .ok_or(RuleError::NotPrefixRange(rule.id, "destination IP range is not a prefix"))?;
    let proto = if rule.protocol == FieldRange::full_proto() {
        "0x00/0x00".to_string()
    } else if rule.protocol.lo() == rule.protocol.hi() {
        format!("0x{:02x}/0xff", rule.protocol.lo())
    } else {
        return Err(RuleError::NotPrefixRange(rule.id, "protocol range is neither exact nor wildcard"));
    };
    Ok(format!(
        "@{}/{} {}/{} {} : {} {} : {} {}",
        Ipv4Addr::from(src),
        src_len,
        Ipv4Addr::from(dst),
        dst_len,
        rule.src_port.lo(),
        rule.src_port.hi(),
        rule.dst_port.lo(),
        rule.dst_port.hi(),
        proto
    ))
}

/// Serializes a whole ruleset in priority order.
pub fn write_classbench_ruleset(rs: &Ruleset) -> Result<String, RuleError> {
    let mut out = String::new();
    for rule in rs.rules() {
        out.push_str(&to_classbench_line(rule)?);
        out.push('\n');
    }
    Ok(out)
}
