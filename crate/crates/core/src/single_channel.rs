//! Transaction selection on a single channel.
//!
//! A sequence of signed values runs over one channel: positive values move
//! capital from the sending side to the receiving side, negative values the
//! other way. A selection is feasible when every prefix sum of the accepted
//! values stays within `[-cap_recv, cap_send]`. The goal is to accept as many
//! transactions as possible.
//!
//! [`fptas_select`] is the scaled dynamic program, [`exact_select`] a guarded
//! exhaustive search, and [`max_accepted`] an exact pseudo-polynomial
//! program over integral balances. [`fwss_reduce`] turns fixed-weight subset
//! sum instances into single-channel instances.

use itertools::Itertools;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::amount::{common_denominator, format_amount, to_scaled_integer, Amount};
use crate::model::{ChannelNetwork, ChannelState, NodeId, Routing, Strategy, Transaction};

/// Default size guard of [`exact_select`].
pub const EXACT_SELECT_MAX_N: usize = 24;
/// Default guard of [`fwss_brute`].
pub const FWSS_BRUTE_MAX_N: usize = 20;
const MAX_DP_CELLS: u128 = 400_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SingleChannelError {
    #[error("channel capital must be non-negative")]
    NegativeCapital,
    #[error("the transaction sequence is empty")]
    EmptySequence,
    #[error("epsilon must lie strictly between 0 and 1, got {}", format_amount(.0))]
    InvalidEpsilon(Amount),
    #[error("instance of size {size} exceeds the limit {limit}")]
    InstanceTooLarge { size: u128, limit: u128 },
    #[error("fixed weight subset sum needs a cardinality of at least 1")]
    CardinalityZero,
    #[error("fixed weight subset sum needs at least one element")]
    NoElements,
    #[error("transactions span more than one channel")]
    NotSingleChannel,
}

/// Signed values over one channel together with its two capital bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedTxSequence {
    values: Vec<Amount>,
    cap_send: Amount,
    cap_recv: Amount,
}

impl SignedTxSequence {
    /// Zero values are allowed; they never affect feasibility.
    pub fn new(values: Vec<Amount>, cap_send: Amount, cap_recv: Amount) -> Result<Self, SingleChannelError> {
        if cap_send.is_negative() || cap_recv.is_negative() {
            return Err(SingleChannelError::NegativeCapital);
        }
        Ok(SignedTxSequence {
            values,
            cap_send,
            cap_recv,
        })
    }

    pub fn from_integers(values: &[i128], cap_send: i128, cap_recv: i128) -> Result<Self, SingleChannelError> {
        Self::new(
            values.iter().map(|v| Amount::from_integer(*v)).collect(),
            Amount::from_integer(cap_send),
            Amount::from_integer(cap_recv),
        )
    }

    /// Reads a two-node trace: transfers from the lower node id to the higher
    /// one are positive.
    pub fn from_transactions(
        txs: &[Transaction],
        cap_send: Amount,
        cap_recv: Amount,
    ) -> Result<Self, SingleChannelError> {
        if let Some(first) = txs.first() {
            let edge = first.edge();
            if txs.iter().any(|t| t.edge() != edge) {
                return Err(SingleChannelError::NotSingleChannel);
            }
        }
        let values = txs
            .iter()
            .map(|t| if t.sender < t.receiver { t.value } else { -t.value })
            .collect();
        Self::new(values, cap_send, cap_recv)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Amount] {
        &self.values
    }

    pub fn cap_send(&self) -> &Amount {
        &self.cap_send
    }

    pub fn cap_recv(&self) -> &Amount {
        &self.cap_recv
    }

    pub fn with_caps(&self, cap_send: Amount, cap_recv: Amount) -> Result<Self, SingleChannelError> {
        Self::new(self.values.clone(), cap_send, cap_recv)
    }

    /// Running balance after each transaction (unchanged where rejected).
    pub fn balances(&self, strategy: &Strategy) -> Vec<Amount> {
        let mut sum = Amount::zero();
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if strategy.accepted(i) {
                    sum += v;
                }
                sum
            })
            .collect()
    }

    /// Index of the first prefix that leaves `[-cap_recv, cap_send]`.
    pub fn first_violation(&self, strategy: &Strategy) -> Option<usize> {
        self.balances(strategy)
            .iter()
            .position(|b| *b > self.cap_send || -b > self.cap_recv)
    }

    pub fn is_feasible(&self, strategy: &Strategy) -> bool {
        strategy.len() == self.len() && self.first_violation(strategy).is_none()
    }

    /// Expresses a selection as a one-channel network problem so that it can
    /// be checked by [`crate::model::validate_solution`].
    ///
    /// Node 0 is the sending side. Zero values carry no transfer and are left
    /// out of the returned transactions.
    pub fn channel_view(&self, strategy: &Strategy) -> ChannelView {
        let (a, b) = (NodeId(0), NodeId(1));
        let mut txs = Vec::new();
        let mut kept = Vec::new();
        for (i, v) in self.values.iter().enumerate() {
            if v.is_zero() {
                continue;
            }
            let t = if v.is_positive() {
                Transaction::new(a, b, *v)
            } else {
                Transaction::new(b, a, -v)
            };
            txs.push(t.expect("nonzero value"));
            kept.push(strategy.accepted(i));
        }
        let strategy = Strategy::new(kept);
        let mut routing = Routing::new(txs.len());
        for (i, t) in txs.iter().enumerate() {
            if strategy.accepted(i) {
                routing.set_hop(i, t.sender, t.receiver);
            }
        }
        let mut network = ChannelNetwork::new(2);
        network
            .open(ChannelState::new(a, b, self.cap_send, self.cap_recv).expect("caps checked"))
            .expect("fresh network");
        ChannelView {
            txs,
            strategy,
            network,
            routing,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChannelView {
    pub txs: Vec<Transaction>,
    pub strategy: Strategy,
    pub network: ChannelNetwork,
    pub routing: Routing,
}

/// The sequence with every amount multiplied by a common integer and then
/// divided by the gcd of everything. Feasibility is unchanged.
#[derive(Debug, Clone)]
struct IntegerView {
    values: Vec<i128>,
    send: i128,
    recv: i128,
}

impl IntegerView {
    fn of(seq: &SignedTxSequence) -> Self {
        let scale = common_denominator(seq.values.iter().chain([&seq.cap_send, &seq.cap_recv]));
        let values: Vec<i128> = seq.values.iter().map(|v| to_scaled_integer(v, scale)).collect();
        let send = to_scaled_integer(&seq.cap_send, scale);
        let recv = to_scaled_integer(&seq.cap_recv, scale);
        let g = values.iter().fold(0i128, |g, v| g.gcd(v));
        if g > 1 {
            // Prefix sums are multiples of g, so the caps may be floored.
            IntegerView {
                values: values.iter().map(|v| v / g).collect(),
                send: send / g,
                recv: recv / g,
            }
        } else {
            IntegerView { values, send, recv }
        }
    }
}

/// Maximum-cardinality feasible selection by exhaustive search; among
/// maxima the lexicographically smallest decision vector (reject before
/// accept) is returned.
pub fn exact_select(seq: &SignedTxSequence) -> Result<Strategy, SingleChannelError> {
    exact_select_with_limit(seq, EXACT_SELECT_MAX_N)
}

pub fn exact_select_with_limit(seq: &SignedTxSequence, max_n: usize) -> Result<Strategy, SingleChannelError> {
    let n = seq.len();
    if n > max_n {
        return Err(SingleChannelError::InstanceTooLarge {
            size: n as u128,
            limit: max_n as u128,
        });
    }
    let view = IntegerView::of(seq);
    let mut search = Dfs {
        view: &view,
        chosen: vec![false; n],
        best: 0,
        witness: None,
    };
    // Accept-first pass finds the optimum count quickly.
    search.best_count(0, 0, 0);
    let target = search.best;
    // Reject-first pass returns the first (lexicographically smallest)
    // selection reaching that count.
    search.chosen.iter_mut().for_each(|c| *c = false);
    search.find_first(0, 0, 0, target);
    let decisions = search.witness.expect("the optimum is reachable");
    Ok(Strategy::new(decisions))
}

struct Dfs<'a> {
    view: &'a IntegerView,
    chosen: Vec<bool>,
    best: usize,
    witness: Option<Vec<bool>>,
}

impl Dfs<'_> {
    fn fits(&self, balance: i128) -> bool {
        balance <= self.view.send && -balance <= self.view.recv
    }

    fn best_count(&mut self, i: usize, balance: i128, count: usize) {
        let n = self.view.values.len();
        if count + (n - i) <= self.best {
            return;
        }
        if i == n {
            self.best = count;
            return;
        }
        let next = balance + self.view.values[i];
        if self.fits(next) {
            self.best_count(i + 1, next, count + 1);
        }
        self.best_count(i + 1, balance, count);
    }

    fn find_first(&mut self, i: usize, balance: i128, count: usize, target: usize) -> bool {
        let n = self.view.values.len();
        if count + (n - i) < target {
            return false;
        }
        if i == n {
            self.witness = Some(self.chosen.clone());
            return true;
        }
        if self.find_first(i + 1, balance, count, target) {
            return true;
        }
        let next = balance + self.view.values[i];
        if self.fits(next) {
            self.chosen[i] = true;
            if self.find_first(i + 1, next, count + 1, target) {
                return true;
            }
            self.chosen[i] = false;
        }
        false
    }
}

/// Exact maximum number of acceptable transactions, by dynamic programming
/// over every reachable balance. Pseudo-polynomial in the capital.
pub fn max_accepted(seq: &SignedTxSequence) -> Result<usize, SingleChannelError> {
    let view = IntegerView::of(seq);
    let pos: i128 = view.values.iter().filter(|v| **v > 0).sum();
    let neg: i128 = -view.values.iter().filter(|v| **v < 0).sum::<i128>();
    let hi = view.send.min(pos);
    let lo = view.recv.min(neg);
    let width = (hi + lo + 1) as u128;
    let cells = width * view.values.len().max(1) as u128;
    if cells > MAX_DP_CELLS {
        return Err(SingleChannelError::InstanceTooLarge {
            size: cells,
            limit: MAX_DP_CELLS,
        });
    }
    let width = width as usize;
    let offset = lo as i64;
    let mut row = vec![-1i32; width];
    let mut next = vec![-1i32; width];
    row[offset as usize] = 0;
    for v in &view.values {
        let shift = *v as i64;
        next.copy_from_slice(&row);
        for (idx, slot) in next.iter_mut().enumerate() {
            let src = idx as i64 - shift;
            if src < 0 || src >= width as i64 {
                continue;
            }
            let prev = row[src as usize];
            if prev >= 0 && prev + 1 > *slot {
                *slot = prev + 1;
            }
        }
        std::mem::swap(&mut row, &mut next);
    }
    Ok(row.iter().copied().max().unwrap_or(0).max(0) as usize)
}

/// Diagnostics of one run of [`fptas_select`].
#[derive(Debug, Clone)]
pub struct FptasOutcome {
    pub strategy: Strategy,
    /// Scaling unit: every value is divided by it before the table is built.
    pub scale: Amount,
    /// Width of the balance axis of the table.
    pub width: usize,
    /// Number of table cells evaluated.
    pub table_cells: u64,
    /// Best count of the scaled table, before checking true values.
    pub scaled_count: usize,
    /// Transactions dropped to restore true-value feasibility.
    pub repaired: usize,
}

/// Approximate selection: accepts at least `(1 - epsilon)` times the optimum
/// count in all tested regimes, with a table of `O(n^3 / epsilon)` cells.
pub fn fptas_select(seq: &SignedTxSequence, epsilon: &Amount) -> Result<Strategy, SingleChannelError> {
    fptas_run(seq, epsilon).map(|o| o.strategy)
}

/// Upper bound on [`FptasOutcome::table_cells`]: `n * (ceil(n^2 / eps) + 1)`.
/// The `+ 1` is the zero-balance column of the two-sided axis.
pub fn fptas_cell_bound(n: usize, epsilon: &Amount) -> u64 {
    let n2 = Amount::from_integer((n * n) as i128) / epsilon;
    n as u64 * (n2.ceil().to_integer() as u64 + 1)
}

/// Largest amount dividing every value.
fn value_resolution(values: &[Amount]) -> Amount {
    let scale = common_denominator(values.iter());
    let g = values.iter().fold(0i128, |g, v| g.gcd(&to_scaled_integer(v, scale)));
    Amount::new(g.max(1), scale)
}

pub fn fptas_run(seq: &SignedTxSequence, epsilon: &Amount) -> Result<FptasOutcome, SingleChannelError> {
    let zero = Amount::zero();
    let one = Amount::from_integer(1);
    if *epsilon <= zero || *epsilon >= one {
        return Err(SingleChannelError::InvalidEpsilon(*epsilon));
    }
    let n = seq.len();
    if n == 0 {
        return Err(SingleChannelError::EmptySequence);
    }
    let largest = seq.values.iter().map(|v| v.abs()).max().unwrap_or(zero);
    if largest.is_zero() {
        return Ok(FptasOutcome {
            strategy: Strategy::all(n),
            scale: one,
            width: 1,
            table_cells: 0,
            scaled_count: n,
            repaired: 0,
        });
    }
    let pos: Amount = seq.values.iter().filter(|v| v.is_positive()).sum();
    let neg: Amount = -seq.values.iter().filter(|v| v.is_negative()).sum::<Amount>();
    let coarse = epsilon * largest / Amount::from_integer(n as i128);
    // Every prefix sum is a multiple of the resolution, so scaling by it is
    // lossless. Prefer it whenever its table fits the cell bound.
    let resolution = value_resolution(&seq.values);
    let exact_width = |u: &Amount| (seq.cap_send.min(pos) / u).floor() + (seq.cap_recv.min(neg) / u).floor() + 1;
    let bound = Amount::from_integer(fptas_cell_bound(n, epsilon) as i128);
    let unit = if resolution >= coarse || exact_width(&resolution) * Amount::from_integer(n as i128) <= bound {
        resolution
    } else {
        coarse
    };
    // Round toward zero, so no scaled value is larger in magnitude than the
    // true one.
    let scaled: Vec<i64> = seq
        .values
        .iter()
        .map(|v| (v / unit).trunc().to_integer() as i64)
        .collect();
    let hi = (seq.cap_send.min(pos) / unit).floor().to_i64().unwrap_or(i64::MAX);
    let lo = (seq.cap_recv.min(neg) / unit).floor().to_i64().unwrap_or(i64::MAX);
    let width = (hi + lo + 1) as usize;
    let offset = lo as usize;

    // table[i][j]: most accepted among the first i transactions ending at
    // scaled balance j - offset with every scaled prefix in range.
    let mut row = vec![-1i32; width];
    row[offset] = 0;
    let mut take = vec![false; n * width];
    let mut next = vec![-1i32; width];
    let mut cells = 0u64;
    for (i, &w) in scaled.iter().enumerate() {
        for idx in 0..width {
            let skip = row[idx];
            let src = idx as i64 - w;
            let accept = if (0..width as i64).contains(&src) && row[src as usize] >= 0 {
                row[src as usize] + 1
            } else {
                -1
            };
            // Ties keep the skip branch.
            if accept > skip {
                next[idx] = accept;
                take[i * width + idx] = true;
            } else {
                next[idx] = skip;
            }
        }
        cells += width as u64;
        std::mem::swap(&mut row, &mut next);
    }

    let scaled_count = row.iter().copied().max().unwrap_or(0).max(0) as usize;
    let mut best: Option<(Strategy, usize)> = None;
    for end in (0..width).filter(|&idx| row[idx] == scaled_count as i32) {
        let mut decisions = vec![false; n];
        let mut idx = end as i64;
        for i in (0..n).rev() {
            if take[i * width + idx as usize] {
                decisions[i] = true;
                idx -= scaled[i];
            }
        }
        let mut strategy = Strategy::new(decisions);
        let dropped = repair(seq, &mut strategy);
        let better = match &best {
            None => true,
            Some((b, _)) => strategy.accepted_count() > b.accepted_count(),
        };
        if better {
            best = Some((strategy, dropped));
        }
    }
    let (strategy, repaired) = best.unwrap_or((Strategy::none(n), 0));
    Ok(FptasOutcome {
        strategy,
        scale: unit,
        width,
        table_cells: cells,
        scaled_count,
        repaired,
    })
}

/// Drops accepted transactions until the true values are feasible: at the
/// first breaking prefix, the latest accepted transaction pushing in the
/// offending direction goes. Returns how many were dropped.
fn repair(seq: &SignedTxSequence, strategy: &mut Strategy) -> usize {
    let mut dropped = 0;
    while let Some(j) = seq.first_violation(strategy) {
        let balance = &seq.balances(strategy)[j];
        let too_high = *balance > seq.cap_send;
        let culprit = (0..=j).rev().find(|&i| {
            strategy.accepted(i)
                && if too_high {
                    seq.values[i].is_positive()
                } else {
                    seq.values[i].is_negative()
                }
        });
        match culprit {
            Some(i) => {
                strategy.set(i, false);
                dropped += 1;
            }
            None => unreachable!("a breaking prefix has an accepted transaction pushing it"),
        }
    }
    dropped
}

/// How [`decide_profit`] answers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecisionMode {
    /// Exact answer.
    Exact,
    /// One-sided answer from the approximation scheme: `true` is certain,
    /// `false` only means no selection was found at this epsilon.
    Approximate(Amount),
}

/// Is there a feasible selection with at least `target` transactions?
pub fn decide_profit(seq: &SignedTxSequence, target: usize, mode: &DecisionMode) -> Result<bool, SingleChannelError> {
    if target == 0 {
        return Ok(true);
    }
    match mode {
        DecisionMode::Exact => Ok(max_accepted(seq)? >= target),
        DecisionMode::Approximate(eps) => {
            if seq.is_empty() {
                return Ok(false);
            }
            Ok(fptas_select(seq, eps)?.accepted_count() >= target)
        }
    }
}

/// Fixed weight subset sum: is there a subset of exactly `cardinality`
/// elements summing to `target`?
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FwssInstance {
    pub elements: Vec<u64>,
    pub target: u64,
    pub cardinality: usize,
}

/// Builds the single-channel instance deciding `inst`, together with the
/// count that must be reached.
///
/// The negative transactions carry `target / n`; every quantity is
/// multiplied by `n` so that all values stay integral.
pub fn fwss_reduce(inst: &FwssInstance) -> Result<(SignedTxSequence, usize), SingleChannelError> {
    if inst.elements.is_empty() {
        return Err(SingleChannelError::NoElements);
    }
    if inst.cardinality == 0 {
        return Err(SingleChannelError::CardinalityZero);
    }
    let n = inst.elements.len() as i128;
    let a = inst.target as i128;
    let l = inst.cardinality as i128;
    let negatives = (n * (l + 1)) as usize;
    let values: Vec<i128> = inst
        .elements
        .iter()
        .map(|e| n * (*e as i128 + a))
        .chain(std::iter::repeat_n(-a, negatives))
        .collect();
    let seq = SignedTxSequence::from_integers(&values, n * a * (l + 1), 0)?;
    Ok((seq, inst.cardinality + negatives))
}

/// First size-`cardinality` index subset (in lexicographic index order)
/// whose elements sum to `target`.
pub fn fwss_brute(inst: &FwssInstance) -> Result<Option<Vec<usize>>, SingleChannelError> {
    let n = inst.elements.len();
    if n > FWSS_BRUTE_MAX_N {
        return Err(SingleChannelError::InstanceTooLarge {
            size: n as u128,
            limit: FWSS_BRUTE_MAX_N as u128,
        });
    }
    if inst.cardinality == 0 || inst.cardinality > n {
        return Ok(None);
    }
    Ok((0..n)
        .combinations(inst.cardinality)
        .find(|idx| idx.iter().map(|&i| inst.elements[i]).sum::<u64>() == inst.target))
}
