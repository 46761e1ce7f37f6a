//! Named instances with known answers, shared by tests and the CLI.
//!
//! Node labels follow the hand-drawn constructions literally (`v1` is node
//! 1), so node 0 is unused in those fixtures. On disk a fixture is a trace
//! `name.csv`, a sidecar `name.expected` of `key=value` lines and, when the
//! fixture comes with a network, an edge list `name.graph.csv`.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::amount::{amount, Amount};
use crate::model::{EdgeKey, NodeId, Transaction};
use crate::online::{adversary_sequence, AdversaryBranch, ADVERSARY_CAPACITY};
use crate::restricted::{partition_brute, partition_reduce, PartitionInstance};
use crate::trace::{write_expected, write_graph, write_trace};

pub const NAMES: [&str; 6] = [
    "lemma2_cycle",
    "lemma_cc",
    "fig1_star_gap",
    "adversary_seq1",
    "adversary_seq2",
    "partition_gadget",
];

pub const CYCLE_DEFAULT_A: u64 = 12;
pub const ADVERSARY_DEFAULT_LEN: usize = 6;
pub const PARTITION_DEFAULT: [u64; 2] = [1, 1];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FixtureError {
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
    #[error("bad parameter for fixture `{name}`: {message}")]
    BadParameter { name: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixture {
    pub name: String,
    pub txs: Vec<Transaction>,
    pub expected: BTreeMap<String, Amount>,
    /// Network that comes with the instance, if any.
    pub graph: Option<Vec<EdgeKey>>,
    pub provenance: &'static str,
}

impl Fixture {
    fn new(name: &str, txs: Vec<Transaction>, provenance: &'static str) -> Self {
        Fixture {
            name: name.to_string(),
            txs,
            expected: BTreeMap::new(),
            graph: None,
            provenance,
        }
    }

    fn expect(mut self, key: &str, value: Amount) -> Self {
        self.expected.insert(key.to_string(), value);
        self
    }

    pub fn expected(&self, key: &str) -> Option<&Amount> {
        self.expected.get(key)
    }

    pub fn trace_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.csv", self.name))
    }

    pub fn expected_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.expected", self.name))
    }

    pub fn graph_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.graph.csv", self.name))
    }

    /// Writes the trace, the sidecar and the graph (if any) into `dir`.
    pub fn write_to(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let header = format!("# {}: {}\n", self.name, self.provenance);
        let mut written = vec![self.trace_path(dir), self.expected_path(dir)];
        fs::write(&written[0], header.clone() + &write_trace(&self.txs))?;
        fs::write(&written[1], header.clone() + &write_expected(&self.expected))?;
        if let Some(edges) = &self.graph {
            let path = self.graph_path(dir);
            fs::write(&path, header + &write_graph(edges))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn unit(s: u32, r: u32) -> Transaction {
    Transaction::unit(s, r, 1)
}

fn edges(pairs: &[(u32, u32)]) -> Vec<EdgeKey> {
    pairs.iter().map(|&(a, b)| EdgeKey::new(NodeId(a), NodeId(b))).collect()
}

/// Six blocks of `a` unit transactions around a six-cycle: `v2->v1`,
/// `v2->v3`, `v4->v3`, `v4->v5`, `v6->v5`, `v6->v1`. The cycle with `a` on
/// every sender side executes all of them within budget `6a + 6`, which no
/// spanning tree can match for `a > 11`.
pub fn lemma2_cycle(a: u64) -> Fixture {
    let a_count = a as usize;
    let blocks = [(2, 1), (2, 3), (4, 3), (4, 5), (6, 5), (6, 1)];
    let txs = blocks
        .iter()
        .flat_map(|&(s, r)| std::iter::repeat_n(unit(s, r), a_count))
        .collect();
    let a = amount(a as i128);
    let mut f = Fixture::new(
        "lemma2_cycle",
        txs,
        "cycle whose profit no spanning tree reaches within the same capital",
    )
    .expect("a", a)
    .expect("accepted", amount(6) * a)
    .expect("edges", amount(6))
    .expect("cycle_profit", amount(6) * a - amount(6))
    .expect("budget", amount(6) * a + amount(6));
    f.graph = Some(edges(&[(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (1, 6)]));
    f
}

/// Two busy pairs joined by one bridging transaction, which is not worth a
/// third channel.
pub fn lemma_cc() -> Fixture {
    Fixture::new(
        "lemma_cc",
        vec![unit(1, 2), unit(1, 2), unit(3, 4), unit(3, 4), unit(1, 3)],
        "disconnected design beats every connected one",
    )
    .expect("profit_base", amount(2))
    .expect("accepted", amount(4))
    .expect("edges", amount(2))
}

/// Ten unit transactions on seven nodes whose best tree locks 6 while every
/// star locks at least 7. The cheapest star, centred on node 4, locks 8.
pub fn fig1_star_gap() -> Fixture {
    let txs = vec![
        unit(4, 2),
        unit(4, 7),
        unit(2, 6),
        unit(5, 2),
        unit(6, 5),
        unit(4, 5),
        unit(3, 2),
        unit(2, 1),
        unit(1, 3),
        unit(3, 4),
    ];
    let mut f = Fixture::new("fig1_star_gap", txs, "no star is an optimal design")
        .expect("optimal_capital", amount(6))
        .expect("star_capital_lower_bound", amount(7))
        .expect("best_star_capital", amount(8));
    f.graph = Some(edges(&[(1, 2), (2, 3), (2, 4), (4, 7), (4, 5), (5, 6)]));
    f
}

fn adversary_fixture(name: &str, branch: AdversaryBranch, len: usize, offline: usize) -> Fixture {
    let txs = adversary_sequence(branch, len)
        .into_iter()
        .map(|v| {
            if v > amount(0) {
                Transaction::new(NodeId(0), NodeId(1), v)
            } else {
                Transaction::new(NodeId(1), NodeId(0), -v)
            }
            .expect("nonzero adversary value")
        })
        .collect();
    Fixture::new(name, txs, "adaptive adversary sequence on a 5/5 channel")
        .expect("cap_send", amount(ADVERSARY_CAPACITY))
        .expect("cap_recv", amount(ADVERSARY_CAPACITY))
        .expect("offline_accepted", amount(offline as i128))
}

/// `1, 5, -10, 10, ...`: served to a policy that accepts the first value.
/// Offline, everything but the first transaction fits.
pub fn adversary_seq1(len: usize) -> Fixture {
    adversary_fixture(
        "adversary_seq1",
        AdversaryBranch::AcceptedFirst,
        len,
        len.saturating_sub(1),
    )
}

/// `1, 4, -10, 10, ...`: served to a policy that denies the first value.
/// Offline, everything fits.
pub fn adversary_seq2(len: usize) -> Fixture {
    adversary_fixture("adversary_seq2", AdversaryBranch::DeniedFirst, len, len)
}

/// Four-node cycle gadget turning a partition question into a routing
/// question. Sizes are doubled, as in [`partition_reduce`].
pub fn partition_gadget(sizes: &[u64]) -> Result<Fixture, FixtureError> {
    let p = PartitionInstance::new(sizes.to_vec()).map_err(|e| FixtureError::BadParameter {
        name: "partition_gadget".into(),
        message: e.to_string(),
    })?;
    let feasible = partition_brute(&p).map_err(|e| FixtureError::BadParameter {
        name: "partition_gadget".into(),
        message: e.to_string(),
    })?;
    let inst = partition_reduce(&p);
    let mut f = Fixture::new(
        "partition_gadget",
        inst.txs,
        "routing on a fixed four-cycle encodes a partition",
    )
    .expect("budget", inst.budget)
    .expect("feasible", amount(i128::from(feasible)));
    f.graph = Some(inst.graph.edges().collect());
    Ok(f)
}

/// Loads a fixture by name. A parameter may follow a colon:
/// `lemma2_cycle:13`, `adversary_seq1:20`, `partition_gadget:3,1,1,2,2,1`.
pub fn load(query: &str) -> Result<Fixture, FixtureError> {
    let (name, param) = match query.split_once(':') {
        Some((n, p)) => (n, Some(p)),
        None => (query, None),
    };
    let bad = |message: String| FixtureError::BadParameter {
        name: name.to_string(),
        message,
    };
    let number = |p: &str| {
        p.trim()
            .parse::<u64>()
            .map_err(|_| bad(format!("`{p}` is not a non-negative integer")))
    };
    match (name, param) {
        ("lemma2_cycle", p) => {
            let a = p.map(number).transpose()?.unwrap_or(CYCLE_DEFAULT_A);
            if a <= 11 {
                return Err(bad(format!("a must exceed 11, got {a}")));
            }
            Ok(lemma2_cycle(a))
        }
        ("lemma_cc", None) => Ok(lemma_cc()),
        ("fig1_star_gap", None) => Ok(fig1_star_gap()),
        ("adversary_seq1" | "adversary_seq2", p) => {
            let len = p.map(number).transpose()?.map_or(ADVERSARY_DEFAULT_LEN, |n| n as usize);
            if len < 2 {
                return Err(bad(format!("length must be at least 2, got {len}")));
            }
            Ok(if name == "adversary_seq1" {
                adversary_seq1(len)
            } else {
                adversary_seq2(len)
            })
        }
        ("partition_gadget", p) => {
            let sizes = match p {
                Some(list) => list.split(',').map(number).collect::<Result<Vec<_>, _>>()?,
                None => PARTITION_DEFAULT.to_vec(),
            };
            partition_gadget(&sizes)
        }
        ("lemma_cc" | "fig1_star_gap", Some(_)) => Err(bad("takes no parameter".into())),
        _ => Err(FixtureError::UnknownFixture(query.to_string())),
    }
}

/// Every registered fixture with default parameters.
pub fn all() -> Vec<Fixture> {
    NAMES
        .iter()
        .map(|n| load(n).expect("registered fixture loads"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_defaults() {
        let f = load("fig1_star_gap").unwrap();
        assert_eq!(f.txs.len(), 10);
        assert_eq!(f.expected("optimal_capital"), Some(&amount(6)));
        assert_eq!(f.expected("best_star_capital"), Some(&amount(8)));
        let l = load("lemma2_cycle").unwrap();
        assert_eq!(l.txs.len(), 72);
        assert_eq!(l.expected("cycle_profit"), Some(&amount(66)));
        assert_eq!(l.expected("budget"), Some(&amount(78)));
        let c = load("lemma_cc").unwrap();
        assert_eq!(c.expected("profit_base"), Some(&amount(2)));
        assert_eq!(c.expected("accepted"), Some(&amount(4)));
        assert_eq!(all().len(), NAMES.len());
    }

    #[test]
    fn parameters() {
        assert_eq!(load("lemma2_cycle:13").unwrap().expected("budget"), Some(&amount(84)));
        assert!(matches!(
            load("lemma2_cycle:11"),
            Err(FixtureError::BadParameter { .. })
        ));
        assert_eq!(load("adversary_seq2:20").unwrap().txs.len(), 20);
        let g = load("partition_gadget:3,1,1,2,2,1").unwrap();
        assert_eq!(g.txs.len(), 10);
        assert_eq!(g.expected("feasible"), Some(&amount(1)));
        assert_eq!(load("nope"), Err(FixtureError::UnknownFixture("nope".into())));
        assert!(load("lemma_cc:1").is_err());
    }

    #[test]
    fn adversary_fixture_is_a_two_node_trace() {
        let f = adversary_seq1(4);
        assert_eq!(
            f.txs,
            vec![
                Transaction::unit(0, 1, 1),
                Transaction::unit(0, 1, 5),
                Transaction::unit(1, 0, 10),
                Transaction::unit(0, 1, 10),
            ]
        );
    }
}
