//! Routing feasibility on a fixed graph under a capital budget.
//!
//! Once every transaction has a path, the minimal capitals are the replay
//! minima of the [`TokenLedger`], so the search only branches over path
//! choices. Required capital never decreases along a replay, which lets a
//! branch be cut as soon as it exceeds the budget.

use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::amount::{amount, Amount};
use crate::design::TokenLedger;
use crate::model::{ChannelNetwork, EdgeKey, NodeId, Routing, Transaction};

pub const MAX_TXS: usize = 16;
pub const MAX_PATHS_PER_PAIR: usize = 8;
pub const PARTITION_BRUTE_MAX: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RestrictedError {
    #[error("{what} {size} exceeds the limit {limit}")]
    InstanceTooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },
    #[error("transaction {tx} uses node {node}, which is not in the graph")]
    UnknownNode { tx: usize, node: NodeId },
    #[error("a partition instance needs at least one element")]
    EmptyPartition,
    #[error("partition sizes must be positive")]
    NonPositiveSize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestrictedInstance {
    /// Capitals on this network are ignored.
    pub graph: ChannelNetwork,
    pub txs: Vec<Transaction>,
    /// Locked capital only; the channels already exist.
    pub budget: Amount,
}

impl RestrictedInstance {
    pub fn new(graph: ChannelNetwork, txs: Vec<Transaction>, budget: Amount) -> Result<Self, RestrictedError> {
        for (i, t) in txs.iter().enumerate() {
            for node in [t.sender, t.receiver] {
                if node.index() >= graph.node_count() {
                    return Err(RestrictedError::UnknownNode { tx: i, node });
                }
            }
        }
        Ok(RestrictedInstance { graph, txs, budget })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchLimits {
    pub max_txs: usize,
    pub max_paths_per_pair: usize,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits {
            max_txs: MAX_TXS,
            max_paths_per_pair: MAX_PATHS_PER_PAIR,
        }
    }
}

/// A feasible routing with its minimal capitals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingCertificate {
    pub paths: Vec<Vec<NodeId>>,
    pub routing: Routing,
    /// The input graph with replay-minimal capitals.
    pub network: ChannelNetwork,
    pub locked: Amount,
}

/// Simple paths from `from` to `to`, depth first with neighbors in
/// ascending order. Fails once more than `limit` paths exist.
pub fn simple_paths(
    graph: &ChannelNetwork,
    from: NodeId,
    to: NodeId,
    limit: usize,
) -> Result<Vec<Vec<NodeId>>, RestrictedError> {
    fn walk(
        graph: &ChannelNetwork,
        to: NodeId,
        path: &mut Vec<NodeId>,
        out: &mut Vec<Vec<NodeId>>,
        limit: usize,
    ) -> Result<(), RestrictedError> {
        let at = *path.last().expect("path starts at the sender");
        if at == to {
            if out.len() == limit {
                return Err(RestrictedError::InstanceTooLarge {
                    what: "simple path count",
                    size: limit + 1,
                    limit,
                });
            }
            out.push(path.clone());
            return Ok(());
        }
        for next in graph.neighbors(at) {
            if !path.contains(&next) {
                path.push(next);
                walk(graph, to, path, out, limit)?;
                path.pop();
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(graph, to, &mut vec![from], &mut out, limit)?;
    Ok(out)
}

/// Decides whether every transaction can be routed within the budget. The
/// first feasible path assignment in canonical order is returned.
pub fn feasible_routing(inst: &RestrictedInstance) -> Result<Option<RoutingCertificate>, RestrictedError> {
    feasible_routing_with(inst, SearchLimits::default(), None)
}

/// Same decision with each pair's path list shuffled under `seed`.
pub fn feasible_routing_shuffled(
    inst: &RestrictedInstance,
    seed: u64,
) -> Result<Option<RoutingCertificate>, RestrictedError> {
    feasible_routing_with(inst, SearchLimits::default(), Some(seed))
}

pub fn feasible_routing_with(
    inst: &RestrictedInstance,
    limits: SearchLimits,
    shuffle_seed: Option<u64>,
) -> Result<Option<RoutingCertificate>, RestrictedError> {
    if inst.txs.len() > limits.max_txs {
        return Err(RestrictedError::InstanceTooLarge {
            what: "transaction count",
            size: inst.txs.len(),
            limit: limits.max_txs,
        });
    }
    let mut rng = shuffle_seed.map(ChaCha8Rng::seed_from_u64);
    let mut options = Vec::with_capacity(inst.txs.len());
    for t in &inst.txs {
        let mut paths = simple_paths(&inst.graph, t.sender, t.receiver, limits.max_paths_per_pair)?;
        if let Some(rng) = rng.as_mut() {
            paths.shuffle(rng);
        }
        options.push(paths);
    }
    let mut chosen = Vec::with_capacity(inst.txs.len());
    let found = search(inst, &options, TokenLedger::new(), &mut chosen);
    Ok(found.then(|| certificate(inst, &options, &chosen)))
}

fn search(
    inst: &RestrictedInstance,
    options: &[Vec<Vec<NodeId>>],
    ledger: TokenLedger,
    chosen: &mut Vec<usize>,
) -> bool {
    let i = chosen.len();
    if i == inst.txs.len() {
        return true;
    }
    for (k, path) in options[i].iter().enumerate() {
        let mut next = ledger.clone();
        next.charge_path(path, &inst.txs[i].value);
        if next.total_required() > inst.budget {
            continue;
        }
        chosen.push(k);
        if search(inst, options, next, chosen) {
            return true;
        }
        chosen.pop();
    }
    false
}

fn certificate(inst: &RestrictedInstance, options: &[Vec<Vec<NodeId>>], chosen: &[usize]) -> RoutingCertificate {
    let paths: Vec<Vec<NodeId>> = chosen.iter().enumerate().map(|(i, &k)| options[i][k].clone()).collect();
    let mut ledger = TokenLedger::new();
    let mut routing = Routing::new(inst.txs.len());
    for (i, path) in paths.iter().enumerate() {
        ledger.charge_path(path, &inst.txs[i].value);
        routing.set_path(i, path);
    }
    RoutingCertificate {
        locked: ledger.total_required(),
        network: ledger.apply_to(&inst.graph),
        paths,
        routing,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionInstance {
    pub sizes: Vec<u64>,
}

impl PartitionInstance {
    pub fn new(sizes: Vec<u64>) -> Result<Self, RestrictedError> {
        if sizes.is_empty() {
            return Err(RestrictedError::EmptyPartition);
        }
        if sizes.contains(&0) {
            return Err(RestrictedError::NonPositiveSize);
        }
        Ok(PartitionInstance { sizes })
    }
}

/// Gadget nodes.
pub const GADGET_B: NodeId = NodeId(0);
pub const GADGET_C: NodeId = NodeId(1);
pub const GADGET_D: NodeId = NodeId(2);
pub const GADGET_E: NodeId = NodeId(3);

/// Builds the four-node cycle `e-b-d-c-e` with budget `2v`, four
/// transactions of value `v/2` and one `e -> d` transaction per element.
/// Sizes are doubled first so that `v/2` is integral; doubling does not
/// change whether a partition exists.
pub fn partition_reduce(p: &PartitionInstance) -> RestrictedInstance {
    let sizes: Vec<i128> = p.sizes.iter().map(|&s| 2 * s as i128).collect();
    let v: i128 = sizes.iter().sum();
    let (b, c, d, e) = (GADGET_B, GADGET_C, GADGET_D, GADGET_E);
    let graph = ChannelNetwork::with_edges(
        4,
        [
            EdgeKey::new(e, b),
            EdgeKey::new(b, d),
            EdgeKey::new(d, c),
            EdgeKey::new(e, c),
        ],
    )
    .expect("gadget edges are distinct");
    let half = amount(v / 2);
    let tx = |s: NodeId, r: NodeId, value: Amount| Transaction::new(s, r, value).expect("valid gadget transaction");
    let mut txs = vec![tx(d, b, half), tx(b, e, half), tx(d, c, half), tx(c, e, half)];
    txs.extend(sizes.iter().map(|&s| tx(e, d, amount(s))));
    RestrictedInstance {
        graph,
        txs,
        budget: amount(2 * v),
    }
}

/// Whether the sizes split into two halves of equal sum (subset-sum table).
pub fn partition_brute(p: &PartitionInstance) -> Result<bool, RestrictedError> {
    if p.sizes.len() > PARTITION_BRUTE_MAX {
        return Err(RestrictedError::InstanceTooLarge {
            what: "element count",
            size: p.sizes.len(),
            limit: PARTITION_BRUTE_MAX,
        });
    }
    let total: u64 = p.sizes.iter().sum();
    if total % 2 == 1 {
        return Ok(false);
    }
    let half = (total / 2) as usize;
    let mut reachable = vec![false; half + 1];
    reachable[0] = true;
    for &s in &p.sizes {
        let s = s as usize;
        for x in (s..=half).rev() {
            reachable[x] |= reachable[x - s];
        }
    }
    Ok(reachable[half])
}

/// Capital of a certificate as the budget check sees it.
pub fn locked_capital(cert: &RoutingCertificate) -> Amount {
    cert.network.channels().fold(Amount::zero(), |acc, c| acc + c.total())
}
