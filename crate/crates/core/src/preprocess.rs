//! Input pruning and profitable-transaction classification.
//!
//! A node taking part in fewer than two transactions never pays for the
//! channel that would connect it, so its transaction can be dropped. Dropping
//! one transaction may leave another node with a single participation, so
//! the removal runs to a fixpoint.

use std::collections::{BTreeMap, BTreeSet};

use crate::design::build_max_profit_forest;
use crate::model::{NodeId, Transaction};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneReport {
    /// Surviving transactions in input order.
    pub kept: Vec<Transaction>,
    /// Input indices of the kept transactions.
    pub kept_indices: Vec<usize>,
    /// Removed transactions in removal order, with the node that caused it.
    pub removed: Vec<(Transaction, NodeId)>,
    /// Input indices of the removed transactions, in removal order.
    pub removed_indices: Vec<usize>,
    /// Number of rounds that removed at least one transaction.
    pub rounds: usize,
}

/// Repeatedly drops every transaction touching a node that participates in
/// exactly one live transaction. Each round collects all such nodes first,
/// so rounds measure the cascade depth.
pub fn prune_single_participation(txs: &[Transaction]) -> PruneReport {
    let mut alive = vec![true; txs.len()];
    let mut incident: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    for (i, t) in txs.iter().enumerate() {
        incident.entry(t.sender).or_default().push(i);
        incident.entry(t.receiver).or_default().push(i);
    }
    let mut degree: BTreeMap<NodeId, usize> = incident.iter().map(|(n, list)| (*n, list.len())).collect();
    let mut frontier: BTreeSet<NodeId> = degree.iter().filter(|(_, d)| **d == 1).map(|(n, _)| *n).collect();
    let mut removed = Vec::new();
    let mut removed_indices = Vec::new();
    let mut rounds = 0;
    while !frontier.is_empty() {
        rounds += 1;
        let mut doomed: BTreeMap<usize, NodeId> = BTreeMap::new();
        for &n in &frontier {
            if degree[&n] != 1 {
                continue;
            }
            let i = incident[&n]
                .iter()
                .copied()
                .find(|&i| alive[i])
                .expect("degree one means one live transaction");
            // Frontier iterates in id order, so the lower endpoint wins.
            doomed.entry(i).or_insert(n);
        }
        let mut next = BTreeSet::new();
        for (i, cause) in doomed {
            alive[i] = false;
            removed.push((txs[i].clone(), cause));
            removed_indices.push(i);
            for n in [txs[i].sender, txs[i].receiver] {
                let d = degree.get_mut(&n).expect("known node");
                *d -= 1;
                if *d == 1 {
                    next.insert(n);
                }
            }
        }
        frontier = next;
    }
    let kept_indices: Vec<usize> = (0..txs.len()).filter(|&i| alive[i]).collect();
    PruneReport {
        kept: kept_indices.iter().map(|&i| txs[i].clone()).collect(),
        kept_indices,
        removed,
        removed_indices,
        rounds,
    }
}

/// Indices of the transactions executed by the profit-maximizing forest.
pub fn classify_profitable(txs: &[Transaction]) -> BTreeSet<usize> {
    build_max_profit_forest(txs).executed.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: u32, r: u32, v: i128) -> Transaction {
        Transaction::unit(s, r, v)
    }

    #[test]
    fn isolated_pair_is_removed() {
        let r = prune_single_participation(&[t(0, 1, 1), t(0, 1, 1), t(2, 3, 1)]);
        assert_eq!(r.kept, vec![t(0, 1, 1), t(0, 1, 1)]);
        assert_eq!(r.removed, vec![(t(2, 3, 1), NodeId(2))]);
        assert_eq!(r.rounds, 1);
    }

    #[test]
    fn triangle_is_kept() {
        let txs = [t(0, 1, 1), t(1, 2, 1), t(2, 0, 1)];
        let r = prune_single_participation(&txs);
        assert_eq!(r.kept, txs.to_vec());
        assert_eq!(r.rounds, 0);
    }

    #[test]
    fn removal_cascades() {
        let txs = [
            t(0, 1, 1),
            t(1, 2, 1),
            t(2, 3, 1),
            t(3, 0, 1),
            t(4, 0, 1),
            t(4, 5, 1),
            t(5, 6, 1),
        ];
        let r = prune_single_participation(&txs);
        assert_eq!(r.kept, txs[..4].to_vec());
        assert_eq!(
            r.removed,
            vec![
                (t(5, 6, 1), NodeId(6)),
                (t(4, 5, 1), NodeId(5)),
                (t(4, 0, 1), NodeId(4)),
            ]
        );
        assert_eq!(r.removed_indices, vec![6, 5, 4]);
        assert_eq!(r.rounds, 3);
    }

    #[test]
    fn profitable_transactions() {
        let cc = [t(1, 2, 1), t(1, 2, 1), t(3, 4, 1), t(3, 4, 1), t(1, 3, 1)];
        assert_eq!(classify_profitable(&cc), BTreeSet::from([0, 1, 2, 3]));
        assert_eq!(classify_profitable(&[t(0, 1, 3), t(0, 1, 3)]), BTreeSet::from([0, 1]));
        assert!(classify_profitable(&[t(0, 1, 3)]).is_empty());
    }
}
