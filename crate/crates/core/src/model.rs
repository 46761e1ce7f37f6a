//! Channel networks, transactions and the capital semantics of a payment
//! channel.
//!
//! A channel between `left < right` holds capital on each side. Moving a
//! value from one endpoint to the other debits that endpoint's side and
//! credits the opposite side; the total never changes and no side may go
//! negative. Routing entries use the same orientation: `+1` moves value from
//! `left` toward `right`, `-1` the other way.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::amount::{format_amount, Amount};

/// Opening cost of a single channel.
pub const CHANNEL_OPENING_COST: i128 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Unordered node pair in canonical orientation (`lo < hi`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeKey {
    pub lo: NodeId,
    pub hi: NodeId,
}

impl EdgeKey {
    /// Panics on a self loop.
    pub fn new(a: NodeId, b: NodeId) -> Self {
        assert_ne!(a, b, "self loop {a}");
        if a < b {
            EdgeKey { lo: a, hi: b }
        } else {
            EdgeKey { lo: b, hi: a }
        }
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.lo == n || self.hi == n
    }

    pub fn other(&self, n: NodeId) -> Option<NodeId> {
        if n == self.lo {
            Some(self.hi)
        } else if n == self.hi {
            Some(self.lo)
        } else {
            None
        }
    }

    /// `+1` if a transfer from `from` to `to` runs in canonical direction.
    pub fn sign(&self, from: NodeId, to: NodeId) -> i8 {
        debug_assert_eq!(EdgeKey::new(from, to), *self);
        if from == self.lo {
            1
        } else {
            -1
        }
    }
}

impl fmt::Display for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("transaction value must be positive, got {}", format_amount(.0))]
    NonPositiveValue(Amount),
    #[error("transaction sender and receiver are both {0}")]
    SelfTransaction(NodeId),
    #[error("capital must be non-negative")]
    NegativeCapital,
    #[error("node {node} is not an endpoint of channel {edge}")]
    NotAnEndpoint { node: NodeId, edge: EdgeKey },
    #[error("insufficient capital on the {side} side of channel {edge}: holds {}, needs {}", format_amount(.available), format_amount(.needed))]
    InsufficientCapital {
        edge: EdgeKey,
        side: NodeId,
        available: Amount,
        needed: Amount,
    },
    #[error("no channel between {0} and {1}")]
    MissingChannel(NodeId, NodeId),
    #[error("path needs at least two nodes")]
    PathTooShort,
    #[error("node {node} is outside the network of {node_count} nodes")]
    UnknownNode { node: NodeId, node_count: usize },
    #[error("channel {0} already exists")]
    DuplicateChannel(EdgeKey),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Transaction {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub value: Amount,
}

impl Transaction {
    pub fn new(sender: NodeId, receiver: NodeId, value: Amount) -> Result<Self, ModelError> {
        if !value.is_positive() {
            return Err(ModelError::NonPositiveValue(value));
        }
        if sender == receiver {
            return Err(ModelError::SelfTransaction(sender));
        }
        Ok(Transaction {
            sender,
            receiver,
            value,
        })
    }

    /// Shorthand for fixtures and tests; panics on invalid input.
    pub fn unit(sender: u32, receiver: u32, value: i128) -> Self {
        Transaction::new(NodeId(sender), NodeId(receiver), Amount::from_integer(value)).expect("valid transaction")
    }

    pub fn edge(&self) -> EdgeKey {
        EdgeKey::new(self.sender, self.receiver)
    }
}

/// Distinct nodes taking part in `txs`, ascending.
pub fn participants(txs: &[Transaction]) -> Vec<NodeId> {
    let set: BTreeSet<NodeId> = txs.iter().flat_map(|t| [t.sender, t.receiver]).collect();
    set.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChannelState {
    pub left: NodeId,
    pub right: NodeId,
    pub cap_left: Amount,
    pub cap_right: Amount,
}

impl ChannelState {
    /// Builds a channel in canonical orientation; `cap_a` belongs to `a`.
    pub fn new(a: NodeId, b: NodeId, cap_a: Amount, cap_b: Amount) -> Result<Self, ModelError> {
        if cap_a.is_negative() || cap_b.is_negative() {
            return Err(ModelError::NegativeCapital);
        }
        if a == b {
            return Err(ModelError::SelfTransaction(a));
        }
        Ok(if a < b {
            ChannelState {
                left: a,
                right: b,
                cap_left: cap_a,
                cap_right: cap_b,
            }
        } else {
            ChannelState {
                left: b,
                right: a,
                cap_left: cap_b,
                cap_right: cap_a,
            }
        })
    }

    pub fn key(&self) -> EdgeKey {
        EdgeKey {
            lo: self.left,
            hi: self.right,
        }
    }

    pub fn capital_of(&self, node: NodeId) -> Option<&Amount> {
        if node == self.left {
            Some(&self.cap_left)
        } else if node == self.right {
            Some(&self.cap_right)
        } else {
            None
        }
    }

    pub fn total(&self) -> Amount {
        self.cap_left + self.cap_right
    }

    /// Moves `value` from the `from` side to the other side.
    pub fn apply_transfer(&self, from: NodeId, value: &Amount) -> Result<ChannelState, ModelError> {
        if !value.is_positive() {
            return Err(ModelError::NonPositiveValue(*value));
        }
        let (available, debit_left) = if from == self.left {
            (&self.cap_left, true)
        } else if from == self.right {
            (&self.cap_right, false)
        } else {
            return Err(ModelError::NotAnEndpoint {
                node: from,
                edge: self.key(),
            });
        };
        if available < value {
            return Err(ModelError::InsufficientCapital {
                edge: self.key(),
                side: from,
                available: *available,
                needed: *value,
            });
        }
        let mut next = self.clone();
        if debit_left {
            next.cap_left -= value;
            next.cap_right += value;
        } else {
            next.cap_right -= value;
            next.cap_left += value;
        }
        Ok(next)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChannelNetwork {
    node_count: usize,
    channels: BTreeMap<EdgeKey, ChannelState>,
}

impl ChannelNetwork {
    pub fn new(node_count: usize) -> Self {
        ChannelNetwork {
            node_count,
            channels: BTreeMap::new(),
        }
    }

    /// Network over `0..node_count` with the given edges and zero capital.
    pub fn with_edges(node_count: usize, edges: impl IntoIterator<Item = EdgeKey>) -> Result<Self, ModelError> {
        let mut net = ChannelNetwork::new(node_count);
        for e in edges {
            net.open(ChannelState::new(e.lo, e.hi, Amount::zero(), Amount::zero())?)?;
        }
        Ok(net)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Grows the node set so that `node` is a valid id.
    pub fn ensure_node(&mut self, node: NodeId) {
        self.node_count = self.node_count.max(node.index() + 1);
    }

    pub fn open(&mut self, channel: ChannelState) -> Result<(), ModelError> {
        for n in [channel.left, channel.right] {
            if n.index() >= self.node_count {
                return Err(ModelError::UnknownNode {
                    node: n,
                    node_count: self.node_count,
                });
            }
        }
        let key = channel.key();
        if self.channels.contains_key(&key) {
            return Err(ModelError::DuplicateChannel(key));
        }
        self.channels.insert(key, channel);
        Ok(())
    }

    pub fn channel(&self, a: NodeId, b: NodeId) -> Option<&ChannelState> {
        if a == b {
            return None;
        }
        self.channels.get(&EdgeKey::new(a, b))
    }

    pub fn channel_mut(&mut self, key: &EdgeKey) -> Option<&mut ChannelState> {
        self.channels.get_mut(key)
    }

    pub fn channels(&self) -> impl Iterator<Item = &ChannelState> {
        self.channels.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeKey> + '_ {
        self.channels.keys().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.channels.len()
    }

    pub fn neighbors(&self, node: NodeId) -> Vec<NodeId> {
        self.channels.keys().filter_map(|e| e.other(node)).collect()
    }

    /// Capital locked on channel sides, excluding opening costs.
    pub fn locked_capital(&self) -> Amount {
        self.channels.values().map(ChannelState::total).sum()
    }

    /// Locked capital plus one opening cost per channel.
    pub fn total_capital(&self) -> Amount {
        self.locked_capital() + Amount::from_integer(CHANNEL_OPENING_COST * self.channels.len() as i128)
    }

    /// Moves `value` hop by hop along `path`. On failure the network is left
    /// untouched.
    pub fn route_path(&mut self, path: &[NodeId], value: &Amount) -> Result<(), ModelError> {
        if path.len() < 2 {
            return Err(ModelError::PathTooShort);
        }
        let mut updated = Vec::with_capacity(path.len() - 1);
        for hop in path.windows(2) {
            let (from, to) = (hop[0], hop[1]);
            let channel = self.channel(from, to).ok_or(ModelError::MissingChannel(from, to))?;
            // A simple path touches every channel once, so transfers on
            // distinct hops are independent.
            updated.push(channel.apply_transfer(from, value)?);
        }
        for c in updated {
            self.channels.insert(c.key(), c);
        }
        Ok(())
    }
}

/// Total capital of a network: locked capital plus opening costs.
pub fn total_capital(network: &ChannelNetwork) -> Amount {
    network.total_capital()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Strategy {
    decisions: Vec<bool>,
}

impl Strategy {
    pub fn new(decisions: Vec<bool>) -> Self {
        Strategy { decisions }
    }

    pub fn none(n: usize) -> Self {
        Strategy {
            decisions: vec![false; n],
        }
    }

    pub fn all(n: usize) -> Self {
        Strategy {
            decisions: vec![true; n],
        }
    }

    pub fn from_indices(n: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Strategy::none(n);
        for i in indices {
            s.decisions[i] = true;
        }
        s
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn accepted(&self, i: usize) -> bool {
        self.decisions[i]
    }

    pub fn set(&mut self, i: usize, accept: bool) {
        self.decisions[i] = accept;
    }

    pub fn accepted_count(&self) -> usize {
        self.decisions.iter().filter(|d| **d).count()
    }

    pub fn accepted_indices(&self) -> Vec<usize> {
        self.decisions
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.then_some(i))
            .collect()
    }

    pub fn decisions(&self) -> &[bool] {
        &self.decisions
    }

    pub fn bitstring(&self) -> String {
        self.decisions.iter().map(|d| if *d { '1' } else { '0' }).collect()
    }
}

/// Per-edge signed usage of every transaction.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Routing {
    tx_count: usize,
    usage: BTreeMap<EdgeKey, Vec<i8>>,
}

impl Routing {
    pub fn new(tx_count: usize) -> Self {
        Routing {
            tx_count,
            usage: BTreeMap::new(),
        }
    }

    /// Records that transaction `tx` crosses the channel from `from` to `to`.
    /// The entry is stored against the canonical orientation.
    pub fn set_hop(&mut self, tx: usize, from: NodeId, to: NodeId) {
        let key = EdgeKey::new(from, to);
        let sign = key.sign(from, to);
        self.set(key, tx, sign);
    }

    pub fn set(&mut self, edge: EdgeKey, tx: usize, sign: i8) {
        assert!((-1..=1).contains(&sign));
        let n = self.tx_count;
        self.usage.entry(edge).or_insert_with(|| vec![0; n])[tx] = sign;
    }

    pub fn set_path(&mut self, tx: usize, path: &[NodeId]) {
        for hop in path.windows(2) {
            self.set_hop(tx, hop[0], hop[1]);
        }
    }

    pub fn from_paths(tx_count: usize, paths: &[(usize, Vec<NodeId>)]) -> Self {
        let mut r = Routing::new(tx_count);
        for (tx, path) in paths {
            r.set_path(*tx, path);
        }
        r
    }

    pub fn tx_count(&self) -> usize {
        self.tx_count
    }

    pub fn entry(&self, edge: &EdgeKey, tx: usize) -> i8 {
        self.usage.get(edge).map_or(0, |v| v[tx])
    }

    pub fn edges(&self) -> impl Iterator<Item = (&EdgeKey, &[i8])> {
        self.usage.iter().map(|(k, v)| (k, v.as_slice()))
    }
}

/// Profit `base - eps * accepted` with `eps -> 0`.
///
/// Compared lexicographically: larger `base` wins, and at equal `base` the
/// value with fewer accepted transactions wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ProfitValue {
    pub base: i64,
    pub accepted: u64,
}

impl ProfitValue {
    pub fn new(accepted: usize, edges: usize) -> Self {
        ProfitValue {
            base: accepted as i64 - edges as i64,
            accepted: accepted as u64,
        }
    }
}

impl Ord for ProfitValue {
    fn cmp(&self, other: &Self) -> Ordering {
        self.base
            .cmp(&other.base)
            .then_with(|| other.accepted.cmp(&self.accepted))
    }
}

impl PartialOrd for ProfitValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ProfitValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}eps", self.base, self.accepted)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct FlowViolation {
    pub edge: EdgeKey,
    /// 1-based prefix length at which the bound first breaks.
    pub prefix: usize,
    pub balance: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoutingDefect {
    LengthMismatch { expected: usize, found: usize },
    UnknownEdge(EdgeKey),
    RejectedButRouted { tx: usize, edge: EdgeKey },
    NotAPath { tx: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub accepted: usize,
    pub edges: usize,
    pub profit_target: i64,
    pub flow_violations: Vec<FlowViolation>,
    pub capital: Amount,
    pub capital_budget: Amount,
    pub routing_defects: Vec<RoutingDefect>,
}

impl ValidationReport {
    pub fn profit_ok(&self) -> bool {
        self.accepted as i64 - self.edges as i64 >= self.profit_target
    }

    pub fn flow_ok(&self) -> bool {
        self.flow_violations.is_empty()
    }

    pub fn capital_ok(&self) -> bool {
        self.capital <= self.capital_budget
    }

    pub fn routing_ok(&self) -> bool {
        self.routing_defects.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        self.profit_ok() && self.flow_ok() && self.capital_ok() && self.routing_ok()
    }
}

/// Checks a full solution: profit target, per-prefix capital bounds
/// on every channel, the total capital budget, and routing well-formedness.
/// Violations are collected, never raised.
pub fn validate_solution(
    txs: &[Transaction],
    strategy: &Strategy,
    network: &ChannelNetwork,
    routing: &Routing,
    capital_budget: &Amount,
    profit_target: i64,
) -> ValidationReport {
    let mut routing_defects = Vec::new();
    if strategy.len() != txs.len() {
        routing_defects.push(RoutingDefect::LengthMismatch {
            expected: txs.len(),
            found: strategy.len(),
        });
    }
    if routing.tx_count() != txs.len() {
        routing_defects.push(RoutingDefect::LengthMismatch {
            expected: txs.len(),
            found: routing.tx_count(),
        });
    }
    let flow_violations = if routing_defects.is_empty() {
        routing_defects.extend(routing_defects_of(txs, strategy, network, routing));
        flow_violations_prefix_sums(txs, network, routing)
    } else {
        Vec::new()
    };
    ValidationReport {
        accepted: strategy.accepted_count(),
        edges: network.edge_count(),
        profit_target,
        flow_violations,
        capital: network.total_capital(),
        capital_budget: *capital_budget,
        routing_defects,
    }
}

fn routing_defects_of(
    txs: &[Transaction],
    strategy: &Strategy,
    network: &ChannelNetwork,
    routing: &Routing,
) -> Vec<RoutingDefect> {
    let mut defects = Vec::new();
    for (edge, entries) in routing.edges() {
        let used = entries.iter().any(|e| *e != 0);
        if used && network.channel(edge.lo, edge.hi).is_none() {
            defects.push(RoutingDefect::UnknownEdge(*edge));
        }
        for (i, e) in entries.iter().enumerate() {
            if *e != 0 && !strategy.accepted(i) {
                defects.push(RoutingDefect::RejectedButRouted { tx: i, edge: *edge });
            }
        }
    }
    for (i, tx) in txs.iter().enumerate() {
        if strategy.accepted(i) && !is_single_path(tx, i, routing) {
            defects.push(RoutingDefect::NotAPath { tx: i });
        }
    }
    defects
}

/// The arcs used by `tx` must form exactly one simple directed path from
/// sender to receiver.
fn is_single_path(tx: &Transaction, i: usize, routing: &Routing) -> bool {
    let mut next: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut arcs = 0usize;
    for (edge, entries) in routing.edges() {
        let (from, to) = match entries[i] {
            1 => (edge.lo, edge.hi),
            -1 => (edge.hi, edge.lo),
            _ => continue,
        };
        arcs += 1;
        if next.insert(from, to).is_some() {
            return false;
        }
    }
    let mut at = tx.sender;
    let mut seen = BTreeSet::from([at]);
    let mut walked = 0usize;
    while let Some(&to) = next.get(&at) {
        walked += 1;
        if !seen.insert(to) {
            return false;
        }
        at = to;
    }
    at == tx.receiver && walked == arcs && arcs > 0
}

/// Closed form of the capital bounds: every prefix sum of signed usage on an
/// edge must lie in `[-cap_right, cap_left]`. Reports the first breaking
/// prefix per edge.
pub fn flow_violations_prefix_sums(
    txs: &[Transaction],
    network: &ChannelNetwork,
    routing: &Routing,
) -> Vec<FlowViolation> {
    let mut out = Vec::new();
    for (edge, entries) in routing.edges() {
        let Some(channel) = network.channel(edge.lo, edge.hi) else {
            continue;
        };
        let mut sum = Amount::zero();
        for (j, (sign, tx)) in entries.iter().zip(txs).enumerate() {
            match sign {
                1 => sum += tx.value,
                -1 => sum -= tx.value,
                _ => continue,
            }
            if sum > channel.cap_left || -sum > channel.cap_right {
                out.push(FlowViolation {
                    edge: *edge,
                    prefix: j + 1,
                    balance: sum,
                });
                break;
            }
        }
    }
    out
}

/// Same check as [`flow_violations_prefix_sums`], obtained by replaying the
/// transfers on the channels themselves.
pub fn flow_violations_by_simulation(
    txs: &[Transaction],
    network: &ChannelNetwork,
    routing: &Routing,
) -> Vec<FlowViolation> {
    let mut out = Vec::new();
    for (edge, entries) in routing.edges() {
        let Some(initial) = network.channel(edge.lo, edge.hi) else {
            continue;
        };
        let mut channel = initial.clone();
        for (j, (sign, tx)) in entries.iter().zip(txs).enumerate() {
            let from = match sign {
                1 => edge.lo,
                -1 => edge.hi,
                _ => continue,
            };
            match channel.apply_transfer(from, &tx.value) {
                Ok(next) => channel = next,
                Err(_) => {
                    // Net canonical flow so far is what the right side gained.
                    let flow = channel.cap_right - initial.cap_right;
                    let balance = if from == edge.lo {
                        flow + tx.value
                    } else {
                        flow - tx.value
                    };
                    out.push(FlowViolation {
                        edge: *edge,
                        prefix: j + 1,
                        balance,
                    });
                    break;
                }
            }
        }
    }
    out
}
