use std::collections::BTreeMap;

use num_traits::Zero;
use pcn_design::amount::{amount, Amount};
use pcn_design::model::{validate_solution, ChannelNetwork, EdgeKey, NodeId, Strategy as Selection, Transaction};
use pcn_design::restricted::{
    feasible_routing, feasible_routing_shuffled, partition_brute, partition_reduce, PartitionInstance,
    RestrictedInstance,
};
use proptest::prelude::*;

fn paths_between(graph: &ChannelNetwork, from: NodeId, to: NodeId) -> Vec<Vec<NodeId>> {
    fn walk(graph: &ChannelNetwork, to: NodeId, path: &mut Vec<NodeId>, out: &mut Vec<Vec<NodeId>>) {
        let at = *path.last().unwrap();
        if at == to {
            out.push(path.clone());
            return;
        }
        for n in graph.neighbors(at) {
            if !path.contains(&n) {
                path.push(n);
                walk(graph, to, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(graph, to, &mut vec![from], &mut out);
    out
}

/// Cheapest locked capital over every combination of simple paths, or
/// `None` when some pair is disconnected.
fn brute_min_capital(graph: &ChannelNetwork, txs: &[Transaction]) -> Option<Amount> {
    let options: Vec<Vec<Vec<NodeId>>> = txs.iter().map(|t| paths_between(graph, t.sender, t.receiver)).collect();
    if options.iter().any(Vec::is_empty) {
        return None;
    }
    let mut best: Option<Amount> = None;
    let mut choice = vec![0usize; txs.len()];
    loop {
        // Running balance per directed side, starting from zero.
        let mut running: BTreeMap<(NodeId, NodeId), Amount> = BTreeMap::new();
        let mut deficit: BTreeMap<(NodeId, NodeId), Amount> = BTreeMap::new();
        for (i, t) in txs.iter().enumerate() {
            for hop in options[i][choice[i]].windows(2) {
                let out = running.entry((hop[0], hop[1])).or_insert_with(Amount::zero);
                *out -= t.value;
                let low = *out;
                let d = deficit.entry((hop[0], hop[1])).or_insert_with(Amount::zero);
                *d = (*d).max(-low);
                *running.entry((hop[1], hop[0])).or_insert_with(Amount::zero) += t.value;
            }
        }
        let total: Amount = deficit.values().sum();
        best = Some(best.map_or(total, |b| b.min(total)));
        // Odometer step.
        let mut i = 0;
        loop {
            if i == txs.len() {
                return best;
            }
            choice[i] += 1;
            if choice[i] < options[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

fn instance() -> impl Strategy<Value = (ChannelNetwork, Vec<Transaction>, i128)> {
    (3u32..=5).prop_flat_map(|n| {
        let pairs: Vec<(u32, u32)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        let m = pairs.len();
        (
            Just(n),
            prop::sample::subsequence(pairs, 2..=m.min(6)),
            prop::collection::vec((0..n, 1..n, 1i128..=5), 0..=6),
            0i128..=20,
        )
            .prop_map(|(n, edges, raw, budget)| {
                let graph = ChannelNetwork::with_edges(
                    n as usize,
                    edges.into_iter().map(|(a, b)| EdgeKey::new(NodeId(a), NodeId(b))),
                )
                .unwrap();
                let txs = raw
                    .into_iter()
                    .map(|(s, off, v)| Transaction::unit(s, (s + off) % n, v))
                    .collect();
                (graph, txs, budget)
            })
    })
}

fn subset_splits(sizes: &[u64]) -> bool {
    let total: u64 = sizes.iter().sum();
    (0u32..1 << sizes.len()).any(|mask| {
        let part: u64 = (0..sizes.len()).filter(|i| mask >> i & 1 == 1).map(|i| sizes[i]).sum();
        2 * part == total
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn decision_matches_path_enumeration((graph, txs, budget) in instance()) {
        let inst = RestrictedInstance::new(graph.clone(), txs.clone(), amount(budget)).unwrap();
        let found = feasible_routing(&inst).unwrap();
        let brute = brute_min_capital(&graph, &txs).is_some_and(|c| c <= amount(budget));
        prop_assert_eq!(found.is_some(), brute);
        if let Some(cert) = found {
            prop_assert!(cert.locked <= amount(budget));
            let report = validate_solution(
                &txs,
                &Selection::all(txs.len()),
                &cert.network,
                &cert.routing,
                &(amount(budget) + amount(graph.edge_count() as i128)),
                txs.len() as i64 - graph.edge_count() as i64,
            );
            prop_assert!(report.flow_ok() && report.routing_ok() && report.capital_ok(), "{:?}", report);
        }
    }

    #[test]
    fn path_order_does_not_change_the_answer((graph, txs, budget) in instance(), seed in any::<u64>()) {
        let inst = RestrictedInstance::new(graph, txs, amount(budget)).unwrap();
        let plain = feasible_routing(&inst).unwrap().is_some();
        prop_assert_eq!(feasible_routing_shuffled(&inst, seed).unwrap().is_some(), plain);
    }

    #[test]
    fn partition_gadget_decides_partition(sizes in prop::collection::vec(1u64..=8, 1..=10)) {
        prop_assume!(sizes.iter().sum::<u64>() <= 40);
        let p = PartitionInstance::new(sizes.clone()).unwrap();
        let expected = subset_splits(&sizes);
        prop_assert_eq!(partition_brute(&p).unwrap(), expected);
        let routed = feasible_routing(&partition_reduce(&p)).unwrap();
        prop_assert_eq!(routed.is_some(), expected);
    }
}

#[test]
fn partition_examples() {
    for (sizes, yes) in [
        (vec![1, 1], true),
        (vec![1, 1, 1], false),
        (vec![3], false),
        (vec![3, 34, 4, 12, 5, 2], false),
    ] {
        let p = PartitionInstance::new(sizes.clone()).unwrap();
        assert_eq!(partition_brute(&p).unwrap(), yes, "{sizes:?}");
        assert_eq!(
            feasible_routing(&partition_reduce(&p)).unwrap().is_some(),
            yes,
            "{sizes:?}"
        );
    }
}

#[test]
fn empty_trace_needs_nothing() {
    let graph = ChannelNetwork::with_edges(2, [EdgeKey::new(NodeId(0), NodeId(1))]).unwrap();
    let inst = RestrictedInstance::new(graph, Vec::new(), Amount::zero()).unwrap();
    assert_eq!(feasible_routing(&inst).unwrap().unwrap().locked, Amount::zero());
}
