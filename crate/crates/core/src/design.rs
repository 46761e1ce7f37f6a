//! Network design when every profitable transaction must be executed.
//!
//! With unlimited capital the best network is a forest. For a fixed forest
//! and transaction order the minimal capital follows from replaying the
//! sequence: every channel side needs exactly the deepest deficit its
//! running balance ever reaches ([`TokenLedger`]). Stars over the
//! participants are within a factor two of the best tree.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use num_traits::{Signed, Zero};
use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use thiserror::Error;

use crate::amount::Amount;
use crate::model::{participants, ChannelNetwork, ChannelState, EdgeKey, ModelError, NodeId, ProfitValue, Transaction};

/// Default guards of the exhaustive searches.
pub const EXACT_MAX_NODES: usize = 7;
pub const EXACT_MAX_TXS: usize = 16;
pub const PROFIT_ORACLE_MAX_NODES: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DesignError {
    #[error("the network is not a forest")]
    NotAForest,
    #[error("transaction {tx} connects nodes that are not connected in the network")]
    DisconnectedEndpoints { tx: usize },
    #[error("{what} {size} exceeds the limit {limit}")]
    InstanceTooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignResult {
    /// Forest with capitals assigned.
    pub network: ChannelNetwork,
    /// Indices of executed transactions, ascending.
    pub executed: Vec<usize>,
    pub profit: ProfitValue,
    /// Capital locked on channel sides.
    pub locked: Amount,
    /// Locked capital plus opening costs.
    pub capital: Amount,
}

impl DesignResult {
    fn new(network: ChannelNetwork, executed: Vec<usize>) -> Self {
        let profit = ProfitValue::new(executed.len(), network.edge_count());
        DesignResult {
            locked: network.locked_capital(),
            capital: network.total_capital(),
            network,
            executed,
            profit,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct SideBalance {
    balance: Amount,
    minimum: Amount,
}

/// Running balance and historical minimum of every channel side, starting
/// from zero capital.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenLedger {
    sides: BTreeMap<EdgeKey, [SideBalance; 2]>,
}

impl TokenLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Moves `value` from `from` to `to` over their channel and returns the
    /// additional capital this forces on the `from` side.
    pub fn charge(&mut self, from: NodeId, to: NodeId, value: &Amount) -> Amount {
        let key = EdgeKey::new(from, to);
        let sides = self.sides.entry(key).or_default();
        let (out, into) = if from == key.lo { (0, 1) } else { (1, 0) };
        sides[into].balance += value;
        let side = &mut sides[out];
        side.balance -= value;
        if side.balance < side.minimum {
            let extra = side.minimum - side.balance;
            side.minimum = side.balance;
            extra
        } else {
            Amount::zero()
        }
    }

    /// Charges every hop of `path` and returns the added capital.
    pub fn charge_path(&mut self, path: &[NodeId], value: &Amount) -> Amount {
        path.windows(2).map(|hop| self.charge(hop[0], hop[1], value)).sum()
    }

    /// Capital needed on the `(lo, hi)` sides of `edge`.
    pub fn required(&self, edge: &EdgeKey) -> (Amount, Amount) {
        match self.sides.get(edge) {
            Some([lo, hi]) => (-lo.minimum, -hi.minimum),
            None => (Amount::zero(), Amount::zero()),
        }
    }

    pub fn total_required(&self) -> Amount {
        self.sides.values().map(|[lo, hi]| -lo.minimum - hi.minimum).sum()
    }

    /// Copies the required capitals onto the channels of `skeleton`.
    pub fn apply_to(&self, skeleton: &ChannelNetwork) -> ChannelNetwork {
        let mut out = ChannelNetwork::new(skeleton.node_count());
        for e in skeleton.edges() {
            let (lo, hi) = self.required(&e);
            out.open(ChannelState::new(e.lo, e.hi, lo, hi).expect("non-negative requirement"))
                .expect("edge copied from a valid network");
        }
        out
    }
}

/// Adjacency of a forest, validated to be acyclic.
#[derive(Debug, Clone)]
pub struct Forest {
    adjacency: HashMap<NodeId, Vec<NodeId>>,
}

impl Forest {
    pub fn new(edges: impl IntoIterator<Item = EdgeKey>) -> Result<Self, DesignError> {
        let edges: Vec<EdgeKey> = edges.into_iter().collect();
        let max = edges.iter().map(|e| e.hi.index() + 1).max().unwrap_or(0);
        let mut uf = UnionFind::<usize>::new(max);
        let mut adjacency: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
        for e in &edges {
            if !uf.union(e.lo.index(), e.hi.index()) {
                return Err(DesignError::NotAForest);
            }
            adjacency.entry(e.lo).or_default().push(e.hi);
            adjacency.entry(e.hi).or_default().push(e.lo);
        }
        for list in adjacency.values_mut() {
            list.sort();
        }
        Ok(Forest { adjacency })
    }

    /// The unique path from `from` to `to`, if they are connected.
    pub fn path(&self, from: NodeId, to: NodeId) -> Option<Vec<NodeId>> {
        if from == to {
            return Some(vec![from]);
        }
        let mut parent: HashMap<NodeId, NodeId> = HashMap::new();
        let mut queue = VecDeque::from([from]);
        parent.insert(from, from);
        while let Some(at) = queue.pop_front() {
            for &next in self.adjacency.get(&at).map(Vec::as_slice).unwrap_or(&[]) {
                if parent.contains_key(&next) {
                    continue;
                }
                parent.insert(next, at);
                if next == to {
                    let mut path = vec![to];
                    let mut cur = to;
                    while cur != from {
                        cur = parent[&cur];
                        path.push(cur);
                    }
                    path.reverse();
                    return Some(path);
                }
                queue.push_back(next);
            }
        }
        None
    }
}

/// Replays `txs` along the unique forest paths of `tree` and returns the
/// resulting ledger.
pub fn replay_ledger(tree: &ChannelNetwork, txs: &[Transaction]) -> Result<TokenLedger, DesignError> {
    let forest = Forest::new(tree.edges())?;
    let mut ledger = TokenLedger::new();
    for (i, t) in txs.iter().enumerate() {
        let path = forest
            .path(t.sender, t.receiver)
            .ok_or(DesignError::DisconnectedEndpoints { tx: i })?;
        ledger.charge_path(&path, &t.value);
    }
    Ok(ledger)
}

/// Minimal capital assignment letting `tree` execute `txs` in order.
/// Capitals already present on `tree` are ignored.
pub fn assign_capital_tree(tree: &ChannelNetwork, txs: &[Transaction]) -> Result<ChannelNetwork, DesignError> {
    let ledger = replay_ledger(tree, txs)?;
    let mut out = ledger.apply_to(tree);
    for t in txs {
        out.ensure_node(t.sender);
        out.ensure_node(t.receiver);
    }
    Ok(out)
}

fn node_span(txs: &[Transaction]) -> usize {
    txs.iter()
        .map(|t| t.sender.max(t.receiver).index() + 1)
        .max()
        .unwrap_or(0)
}

/// Linear scan for the profit-maximizing forest: count transactions per
/// node pair, then walk the pairs in order of first appearance and open a
/// channel for every pair seen at least twice unless it closes a cycle.
/// Every transaction whose endpoints end up connected is executed.
///
/// The cycle check uses union-find, so the scan is linear up to the inverse
/// Ackermann factor.
pub fn build_max_profit_forest(txs: &[Transaction]) -> DesignResult {
    let mut order: Vec<EdgeKey> = Vec::new();
    let mut counts: HashMap<EdgeKey, usize> = HashMap::new();
    for t in txs {
        let e = t.edge();
        let c = counts.entry(e).or_insert(0);
        if *c == 0 {
            order.push(e);
        }
        *c += 1;
    }
    let span = node_span(txs);
    let mut uf = UnionFind::<usize>::new(span);
    let mut edges = Vec::new();
    for e in order {
        if counts[&e] >= 2 && uf.union(e.lo.index(), e.hi.index()) {
            edges.push(e);
        }
    }
    let executed: Vec<usize> = txs
        .iter()
        .enumerate()
        .filter(|(_, t)| uf.equiv(t.sender.index(), t.receiver.index()))
        .map(|(i, _)| i)
        .collect();
    let chosen: Vec<Transaction> = executed.iter().map(|&i| txs[i].clone()).collect();
    let skeleton = ChannelNetwork::with_edges(span, edges).expect("edges within span");
    let network = assign_capital_tree(&skeleton, &chosen).expect("forest connects executed transactions");
    DesignResult::new(network, executed)
}

/// Star with `center` as hub over every participant of `txs`, executing all
/// of them. A center outside the participants becomes a fresh hub.
pub fn build_star(txs: &[Transaction], center: NodeId) -> DesignResult {
    let nodes = participants(txs);
    if nodes.is_empty() {
        return DesignResult::new(ChannelNetwork::new(0), Vec::new());
    }
    let span = node_span(txs).max(center.index() + 1);
    let edges = nodes.iter().filter(|&&n| n != center).map(|&n| EdgeKey::new(n, center));
    let skeleton = ChannelNetwork::with_edges(span, edges).expect("edges within span");
    let network = assign_capital_tree(&skeleton, txs).expect("a star connects all participants");
    DesignResult::new(network, (0..txs.len()).collect())
}

/// Star centers tried by [`best_star`]: every participant, then one fresh
/// hub.
pub fn star_centers(txs: &[Transaction]) -> Vec<NodeId> {
    let mut centers = participants(txs);
    centers.push(NodeId(node_span(txs) as u32));
    centers
}

/// Cheapest star by total capital. Ties go to the earlier center of
/// [`star_centers`].
pub fn best_star(txs: &[Transaction]) -> (NodeId, DesignResult) {
    star_centers(txs)
        .into_par_iter()
        .map(|c| (c, build_star(txs, c)))
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(|best, cand| if cand.1.capital < best.1.capital { cand } else { best })
        .expect("at least the fresh hub")
}

/// Which forests [`exact_min_capital_in`] searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForestScope {
    /// Every forest on the participants connecting each transaction's
    /// endpoints.
    AnyForest,
    /// Spanning trees of the participants only.
    SpanningTree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactLimits {
    pub max_nodes: usize,
    pub max_txs: usize,
}

impl Default for ExactLimits {
    fn default() -> Self {
        ExactLimits {
            max_nodes: EXACT_MAX_NODES,
            max_txs: EXACT_MAX_TXS,
        }
    }
}

/// Minimum total capital over every forest able to execute all of `txs`.
pub fn exact_min_capital(txs: &[Transaction]) -> Result<DesignResult, DesignError> {
    exact_min_capital_in(txs, ForestScope::AnyForest, ExactLimits::default())
}

/// Minimum total capital over the spanning trees of the participants.
pub fn exact_min_capital_spanning(txs: &[Transaction]) -> Result<DesignResult, DesignError> {
    exact_min_capital_in(txs, ForestScope::SpanningTree, ExactLimits::default())
}

/// Exhaustive search over forests. Candidates are compared by total capital
/// and then by their sorted edge list, so the answer does not depend on the
/// evaluation order.
pub fn exact_min_capital_in(
    txs: &[Transaction],
    scope: ForestScope,
    limits: ExactLimits,
) -> Result<DesignResult, DesignError> {
    let nodes = participants(txs);
    if nodes.len() > limits.max_nodes {
        return Err(DesignError::InstanceTooLarge {
            what: "node count",
            size: nodes.len(),
            limit: limits.max_nodes,
        });
    }
    if txs.len() > limits.max_txs {
        return Err(DesignError::InstanceTooLarge {
            what: "transaction count",
            size: txs.len(),
            limit: limits.max_txs,
        });
    }
    let span = node_span(txs);
    let candidates = enumerate_forests(&nodes);
    let need_edges = nodes.len().saturating_sub(1);
    let best = candidates
        .into_par_iter()
        .filter(|f| scope == ForestScope::AnyForest || f.len() == need_edges)
        .filter_map(|edges| {
            let skeleton = ChannelNetwork::with_edges(span, edges.iter().copied()).ok()?;
            let network = assign_capital_tree(&skeleton, txs).ok()?;
            Some((network.total_capital(), edges, network))
        })
        .min_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let (_, _, network) = best.expect("the path through all participants executes everything");
    Ok(DesignResult::new(network, (0..txs.len()).collect()))
}

/// All forests over `nodes` as sorted edge lists.
pub fn enumerate_forests(nodes: &[NodeId]) -> Vec<Vec<EdgeKey>> {
    let mut pairs = Vec::new();
    for (i, &a) in nodes.iter().enumerate() {
        for &b in &nodes[i + 1..] {
            pairs.push(EdgeKey::new(a, b));
        }
    }
    let index: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut out = Vec::new();
    let mut current = Vec::new();
    let comp: Vec<usize> = (0..nodes.len()).collect();
    grow_forests(&pairs, &index, 0, comp, &mut current, &mut out);
    out
}

fn grow_forests(
    pairs: &[EdgeKey],
    index: &HashMap<NodeId, usize>,
    at: usize,
    comp: Vec<usize>,
    current: &mut Vec<EdgeKey>,
    out: &mut Vec<Vec<EdgeKey>>,
) {
    if at == pairs.len() {
        out.push(current.clone());
        return;
    }
    let e = pairs[at];
    let (a, b) = (comp[index[&e.lo]], comp[index[&e.hi]]);
    if a != b {
        let merged: Vec<usize> = comp.iter().map(|&c| if c == b { a } else { c }).collect();
        current.push(e);
        grow_forests(pairs, index, at + 1, merged, current, out);
        current.pop();
    }
    grow_forests(pairs, index, at + 1, comp, current, out);
}

/// Best achievable profit with unlimited capital, by exhaustive search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfitOptimum {
    pub profit: ProfitValue,
    pub executed: Vec<usize>,
    /// Connected components of an optimal network (singletons omitted).
    pub components: Vec<Vec<NodeId>>,
}

/// Maximizes profit over every network on the participants.
///
/// Only the partition of nodes into connected components matters: a
/// component of `k` nodes costs at least `k - 1` channels and executes the
/// transactions inside it. Enumerates all set partitions.
pub fn exact_max_profit(txs: &[Transaction]) -> Result<ProfitOptimum, DesignError> {
    let nodes = participants(txs);
    if nodes.len() > PROFIT_ORACLE_MAX_NODES {
        return Err(DesignError::InstanceTooLarge {
            what: "node count",
            size: nodes.len(),
            limit: PROFIT_ORACLE_MAX_NODES,
        });
    }
    let index: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let ends: Vec<(usize, usize)> = txs.iter().map(|t| (index[&t.sender], index[&t.receiver])).collect();
    let mut labels = vec![0usize; nodes.len()];
    let mut best: Option<(ProfitValue, Vec<usize>)> = None;
    partitions(&mut labels, 0, 0, &mut |labels: &[usize], groups: usize| {
        let mut sizes = vec![0usize; groups];
        for &l in labels {
            sizes[l] += 1;
        }
        let edges: usize = sizes.iter().map(|s| s - 1).sum();
        let accepted = ends.iter().filter(|(a, b)| labels[*a] == labels[*b]).count();
        let p = ProfitValue::new(accepted, edges);
        if best.as_ref().is_none_or(|(b, _)| p > *b) {
            best = Some((p, labels.to_vec()));
        }
    });
    let (profit, labels) = best.unwrap_or((ProfitValue::default(), Vec::new()));
    let executed = ends
        .iter()
        .enumerate()
        .filter(|(_, (a, b))| labels[*a] == labels[*b])
        .map(|(i, _)| i)
        .collect();
    let mut groups: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(*l).or_default().push(nodes[i]);
    }
    let components = groups.into_values().filter(|g| g.len() > 1).collect();
    Ok(ProfitOptimum {
        profit,
        executed,
        components,
    })
}

/// Restricted growth strings: `labels[i] <= max(labels[..i]) + 1`.
fn partitions(labels: &mut Vec<usize>, at: usize, used: usize, visit: &mut impl FnMut(&[usize], usize)) {
    if at == labels.len() {
        visit(labels, used);
        return;
    }
    for l in 0..=used {
        labels[at] = l;
        partitions(labels, at + 1, used.max(l + 1), visit);
    }
}

/// Indices of the transactions executed by [`build_max_profit_forest`].
pub fn executed_by_forest(txs: &[Transaction]) -> BTreeSet<usize> {
    build_max_profit_forest(txs).executed.into_iter().collect()
}

/// Capital on each side in closed form: the largest prefix deficit of the
/// net flow on every edge. Independent of [`TokenLedger`].
pub fn prefix_deficits(
    tree: &ChannelNetwork,
    txs: &[Transaction],
) -> Result<BTreeMap<EdgeKey, (Amount, Amount)>, DesignError> {
    let forest = Forest::new(tree.edges())?;
    let mut flows: BTreeMap<EdgeKey, Vec<Amount>> = tree.edges().map(|e| (e, Vec::new())).collect();
    for (i, t) in txs.iter().enumerate() {
        let path = forest
            .path(t.sender, t.receiver)
            .ok_or(DesignError::DisconnectedEndpoints { tx: i })?;
        for hop in path.windows(2) {
            let key = EdgeKey::new(hop[0], hop[1]);
            let signed = if hop[0] == key.lo { t.value } else { -t.value };
            flows.get_mut(&key).expect("tree edge").push(signed);
        }
    }
    Ok(flows
        .into_iter()
        .map(|(e, seq)| {
            let mut sum = Amount::zero();
            let (mut max, mut min) = (Amount::zero(), Amount::zero());
            for f in seq {
                sum += f;
                max = max.max(sum);
                min = min.min(sum);
            }
            debug_assert!(!max.is_negative() && !min.is_positive());
            (e, (max, -min))
        })
        .collect())
}
