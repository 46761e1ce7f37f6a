//! Text formats: transaction traces, edge lists and `key=value` sidecars.
//!
//! Traces hold one `sender,receiver,value` per line. Blank lines and lines
//! starting with `#` are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::amount::{format_amount, parse_amount, Amount};
use crate::model::{EdgeKey, NodeId, Transaction};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.trim();
        (!line.is_empty() && !line.starts_with('#')).then_some((i + 1, line))
    })
}

fn parse_node(field: &str, line: usize) -> Result<NodeId, ParseError> {
    field.trim().parse::<u32>().map(NodeId).map_err(|_| ParseError {
        line,
        message: format!("invalid node id `{}`", field.trim()),
    })
}

pub fn parse_trace(text: &str) -> Result<Vec<Transaction>, ParseError> {
    content_lines(text)
        .map(|(line, content)| {
            let fields: Vec<&str> = content.split(',').collect();
            if fields.len() != 3 {
                return Err(ParseError {
                    line,
                    message: format!("expected `sender,receiver,value`, got `{content}`"),
                });
            }
            let sender = parse_node(fields[0], line)?;
            let receiver = parse_node(fields[1], line)?;
            let value = parse_amount(fields[2]).map_err(|e| ParseError {
                line,
                message: e.to_string(),
            })?;
            Transaction::new(sender, receiver, value).map_err(|e| ParseError {
                line,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_trace(txs: &[Transaction]) -> String {
    let mut out = String::new();
    for t in txs {
        let _ = writeln!(out, "{},{},{}", t.sender, t.receiver, format_amount(&t.value));
    }
    out
}

/// Edge list, one `u,v` per line. Duplicate edges are rejected.
pub fn parse_graph(text: &str) -> Result<Vec<EdgeKey>, ParseError> {
    let mut edges = Vec::new();
    for (line, content) in content_lines(text) {
        let fields: Vec<&str> = content.split(',').collect();
        if fields.len() != 2 {
            return Err(ParseError {
                line,
                message: format!("expected `u,v`, got `{content}`"),
            });
        }
        let u = parse_node(fields[0], line)?;
        let v = parse_node(fields[1], line)?;
        if u == v {
            return Err(ParseError {
                line,
                message: format!("self loop on {u}"),
            });
        }
        let e = EdgeKey::new(u, v);
        if edges.contains(&e) {
            return Err(ParseError {
                line,
                message: format!("duplicate edge {e}"),
            });
        }
        edges.push(e);
    }
    Ok(edges)
}

pub fn write_graph(edges: &[EdgeKey]) -> String {
    let mut out = String::new();
    for e in edges {
        let _ = writeln!(out, "{},{}", e.lo, e.hi);
    }
    out
}

pub fn parse_expected(text: &str) -> Result<BTreeMap<String, Amount>, ParseError> {
    let mut map = BTreeMap::new();
    for (line, content) in content_lines(text) {
        let (key, value) = content.split_once('=').ok_or_else(|| ParseError {
            line,
            message: format!("expected `key=value`, got `{content}`"),
        })?;
        let value = parse_amount(value).map_err(|e| ParseError {
            line,
            message: e.to_string(),
        })?;
        map.insert(key.trim().to_string(), value);
    }
    Ok(map)
}

pub fn write_expected(expected: &BTreeMap<String, Amount>) -> String {
    let mut out = String::new();
    for (k, v) in expected {
        let _ = writeln!(out, "{k}={}", format_amount(v));
    }
    out
}

/// Reproducible random trace: `count` transactions between distinct nodes
/// drawn uniformly from `0..nodes`, integer values uniform in `lo..=hi`.
pub fn generate_uniform(nodes: u32, count: usize, seed: u64, lo: u64, hi: u64) -> Vec<Transaction> {
    assert!(nodes >= 2, "need at least two nodes");
    assert!(1 <= lo && lo <= hi, "values must satisfy 1 <= lo <= hi");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let s = rng.random_range(0..nodes);
            let mut r = rng.random_range(0..nodes - 1);
            if r >= s {
                r += 1;
            }
            let v = rng.random_range(lo..=hi);
            Transaction::new(NodeId(s), NodeId(r), Amount::from_integer(v as i128)).expect("distinct endpoints")
        })
        .collect()
}
