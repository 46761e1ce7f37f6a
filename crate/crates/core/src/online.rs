//! Online channel provisioning around a hub, and the adaptive adversary
//! that defeats every online single-channel policy.
//!
//! The hub opens a spoke to each new node with capacity `v` on both sides
//! and refunds a spoke (adding `v` to both sides) whenever the side a
//! transaction must use holds less than `v`. Opening and refunding cost 1
//! each. The transfer itself executes after capacity has been ensured.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};

use crate::amount::{amount, log2_floor, Amount};
use crate::design::{best_star, TokenLedger};
use crate::model::{participants, NodeId, Strategy, Transaction};
use crate::single_channel::{exact_select, SignedTxSequence, SingleChannelError};

/// Capacities of one spoke, seen from the hub.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spoke {
    /// Spoke node towards the hub.
    pub to_hub: Amount,
    /// Hub towards the spoke node.
    pub from_hub: Amount,
    pub refunds_to_hub: u32,
    pub refunds_from_hub: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Open,
    RefundToHub,
    RefundFromHub,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OnlineEvent {
    pub step: usize,
    pub node: NodeId,
    pub kind: EventKind,
    /// Added to each side of the spoke.
    pub amount: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OnlineStarState {
    pub hub: NodeId,
    pub spokes: BTreeMap<NodeId, Spoke>,
    pub event_cost: u64,
    pub executed_count: usize,
    pub events: Vec<OnlineEvent>,
}

impl OnlineStarState {
    pub fn new(hub: NodeId) -> Self {
        OnlineStarState {
            hub,
            spokes: BTreeMap::new(),
            event_cost: 0,
            executed_count: 0,
            events: Vec::new(),
        }
    }

    /// Ensures capacity on both spokes and executes `tx`. A transaction
    /// endpoint equal to the hub has no spoke and is skipped.
    pub fn step(&mut self, tx: &Transaction) {
        let v = &tx.value;
        assert!(v.is_positive(), "transaction values are positive");
        let step = self.executed_count;
        if tx.sender != self.hub {
            self.ensure(step, tx.sender, v, true);
            let s = self.spokes.get_mut(&tx.sender).expect("ensured");
            s.to_hub -= v;
            s.from_hub += v;
        }
        if tx.receiver != self.hub {
            self.ensure(step, tx.receiver, v, false);
            let r = self.spokes.get_mut(&tx.receiver).expect("ensured");
            r.from_hub -= v;
            r.to_hub += v;
        }
        self.executed_count += 1;
    }

    fn ensure(&mut self, step: usize, node: NodeId, v: &Amount, outgoing: bool) {
        let kind = match self.spokes.get_mut(&node) {
            None => {
                self.spokes.insert(
                    node,
                    Spoke {
                        to_hub: *v,
                        from_hub: *v,
                        refunds_to_hub: 0,
                        refunds_from_hub: 0,
                    },
                );
                EventKind::Open
            }
            Some(s) => {
                let side = if outgoing { &s.to_hub } else { &s.from_hub };
                if side >= v {
                    return;
                }
                s.to_hub += v;
                s.from_hub += v;
                if outgoing {
                    s.refunds_to_hub += 1;
                    EventKind::RefundToHub
                } else {
                    s.refunds_from_hub += 1;
                    EventKind::RefundFromHub
                }
            }
        };
        self.event_cost += 1;
        self.events.push(OnlineEvent {
            step,
            node,
            kind,
            amount: *v,
        });
    }

    pub fn residual(&self) -> Amount {
        self.spokes.values().map(|s| s.to_hub + s.from_hub).sum()
    }

    /// Residual capacities plus one unit per open and refund.
    pub fn capital(&self) -> Amount {
        self.residual() + amount(self.event_cost as i128)
    }
}

pub fn online_step(state: &OnlineStarState, tx: &Transaction) -> OnlineStarState {
    let mut next = state.clone();
    next.step(tx);
    next
}

/// First id above every participant, used as the hub.
pub fn fresh_hub(txs: &[Transaction]) -> NodeId {
    NodeId(txs.iter().map(|t| t.sender.0.max(t.receiver.0) + 1).max().unwrap_or(0))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OnlineRun {
    pub state: OnlineStarState,
    pub capital: Amount,
    pub event_cost: u64,
}

pub fn run_online(txs: &[Transaction]) -> OnlineRun {
    let mut state = OnlineStarState::new(fresh_hub(txs));
    for t in txs {
        state.step(t);
    }
    OnlineRun {
        capital: state.capital(),
        event_cost: state.event_cost,
        state,
    }
}

/// Refund bound for a spoke side that needs `needed` capital over the whole
/// stream: `floor(log2(needed)) + 1`, and zero when nothing is needed.
pub fn refund_bound(needed: &Amount) -> u32 {
    log2_floor(needed).map_or(0, |k| (k + 1).max(0) as u32)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpokeReport {
    pub node: NodeId,
    pub refunds_to_hub: u32,
    pub refunds_from_hub: u32,
    /// Capital the side needs when the whole stream is known in advance.
    pub needed_to_hub: Amount,
    pub needed_from_hub: Amount,
}

impl SpokeReport {
    pub fn bound_to_hub(&self) -> u32 {
        refund_bound(&self.needed_to_hub)
    }

    pub fn bound_from_hub(&self) -> u32 {
        refund_bound(&self.needed_from_hub)
    }

    pub fn within_bound(&self) -> bool {
        self.refunds_to_hub <= self.bound_to_hub() && self.refunds_from_hub <= self.bound_from_hub()
    }
}

/// Per-spoke refund counts next to the offline requirement of the same
/// star, replayed with the full stream known.
pub fn spoke_reports(txs: &[Transaction], run: &OnlineRun) -> Vec<SpokeReport> {
    let hub = run.state.hub;
    let mut ledger = TokenLedger::new();
    for t in txs {
        ledger.charge_path(&[t.sender, hub, t.receiver], &t.value);
    }
    run.state
        .spokes
        .iter()
        .map(|(&node, spoke)| {
            let key = crate::model::EdgeKey::new(node, hub);
            let (lo, hi) = ledger.required(&key);
            let (needed_to_hub, needed_from_hub) = if node == key.lo { (lo, hi) } else { (hi, lo) };
            SpokeReport {
                node,
                refunds_to_hub: spoke.refunds_to_hub,
                refunds_from_hub: spoke.refunds_from_hub,
                needed_to_hub,
                needed_from_hub,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompetitiveReport {
    pub online_capital: Amount,
    pub event_cost: u64,
    /// Total capital of the cheapest offline star.
    pub offline_capital: Amount,
    /// Locked capital of the cheapest offline star.
    pub offline_edges: Amount,
    /// `online_capital / offline_capital`, zero for an empty stream.
    pub ratio: Amount,
    /// Nodes of the online network, hub included.
    pub nodes: usize,
    /// `(nodes - 1) * (ceil(log2 offline_edges) + 1) + 4 * offline_edges`.
    pub log_bound: Amount,
    pub spokes: Vec<SpokeReport>,
}

impl CompetitiveReport {
    pub fn refund_bound_ok(&self) -> bool {
        self.spokes.iter().all(SpokeReport::within_bound)
    }

    pub fn log_bound_ok(&self) -> bool {
        self.online_capital <= self.log_bound
    }
}

fn log2_ceil(a: &Amount) -> i64 {
    match log2_floor(a) {
        None => 0,
        Some(k) => {
            let exact = if k >= 0 {
                *a == amount(1i128 << k)
            } else {
                *a == Amount::new(1, 1i128 << (-k))
            };
            if exact {
                k
            } else {
                k + 1
            }
        }
    }
}

pub fn competitive_report(txs: &[Transaction]) -> CompetitiveReport {
    let run = run_online(txs);
    let (_, offline) = best_star(txs);
    let nodes = participants(txs).len() + usize::from(!txs.is_empty());
    let log_term = if offline.locked.is_positive() {
        (log2_ceil(&offline.locked) + 1).max(0)
    } else {
        0
    };
    let log_bound = amount(nodes.saturating_sub(1) as i128 * log_term as i128) + amount(4) * offline.locked;
    let ratio = if offline.capital.is_zero() {
        Amount::zero()
    } else {
        run.capital / offline.capital
    };
    CompetitiveReport {
        spokes: spoke_reports(txs, &run),
        online_capital: run.capital,
        event_cost: run.event_cost,
        offline_capital: offline.capital,
        offline_edges: offline.locked,
        ratio,
        nodes,
        log_bound,
    }
}

/// Capacity of each side of the adversary's channel.
pub const ADVERSARY_CAPACITY: i128 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversaryBranch {
    /// The first transaction was accepted: `1, 5, -10, 10, ...`.
    AcceptedFirst,
    /// The first transaction was denied: `1, 4, -10, 10, ...`.
    DeniedFirst,
}

/// The adversary's value at `step` once the branch is known. Step 0 is
/// always 1.
pub fn adversary_value(step: usize, branch: AdversaryBranch) -> Amount {
    match step {
        0 => amount(1),
        1 => match branch {
            AdversaryBranch::AcceptedFirst => amount(5),
            AdversaryBranch::DeniedFirst => amount(4),
        },
        s if s % 2 == 0 => amount(-10),
        _ => amount(10),
    }
}

/// Full sequence of one branch.
pub fn adversary_sequence(branch: AdversaryBranch, len: usize) -> Vec<Amount> {
    (0..len).map(|i| adversary_value(i, branch)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversaryTranscript {
    pub branch: AdversaryBranch,
    /// Signed values as revealed.
    pub values: Vec<Amount>,
    /// What the policy asked for.
    pub requested: Vec<bool>,
    /// What actually executed: requested and within capacity.
    pub executed: Strategy,
    pub accepted: usize,
    /// Best offline count on the realized sequence.
    pub offline: usize,
}

/// Plays the adaptive adversary against `policy`, which sees the step index
/// and the revealed signed value. A request the channel cannot carry is
/// denied.
pub fn adversary_stream(
    mut policy: impl FnMut(usize, &Amount) -> bool,
    len: usize,
) -> Result<AdversaryTranscript, SingleChannelError> {
    let cap = amount(ADVERSARY_CAPACITY);
    let mut balance = Amount::zero();
    let mut branch = AdversaryBranch::DeniedFirst;
    let mut values = Vec::with_capacity(len);
    let mut requested = Vec::with_capacity(len);
    let mut executed = Vec::with_capacity(len);
    for step in 0..len {
        let v = adversary_value(step, branch);
        let want = policy(step, &v);
        let next = balance + v;
        let ok = want && next <= cap && next >= -cap;
        if ok {
            balance = next;
        }
        if step == 0 && ok {
            branch = AdversaryBranch::AcceptedFirst;
        }
        values.push(v);
        requested.push(want);
        executed.push(ok);
    }
    let seq = SignedTxSequence::new(values.clone(), cap, cap)?;
    let offline = if len == 0 {
        0
    } else {
        exact_select(&seq)?.accepted_count()
    };
    let executed = Strategy::new(executed);
    Ok(AdversaryTranscript {
        branch,
        accepted: executed.accepted_count(),
        values,
        requested,
        executed,
        offline,
    })
}

/// Deterministic policies for the adversary game.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Policy {
    AlwaysAccept,
    AlwaysDeny,
    /// Decision per step; steps past the table accept.
    Table(Vec<bool>),
}

impl Policy {
    pub fn decide(&self, step: usize) -> bool {
        match self {
            Policy::AlwaysAccept => true,
            Policy::AlwaysDeny => false,
            Policy::Table(t) => t.get(step).copied().unwrap_or(true),
        }
    }

    /// Every decision table of length `k`, in binary counting order.
    pub fn all_tables(k: usize) -> Vec<Policy> {
        (0..1u32 << k)
            .map(|mask| Policy::Table((0..k).map(|i| mask >> (k - 1 - i) & 1 == 1).collect()))
            .collect()
    }
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "always-accept" => Ok(Policy::AlwaysAccept),
            "always-deny" => Ok(Policy::AlwaysDeny),
            _ => {
                let bits = s
                    .strip_prefix("table:")
                    .ok_or_else(|| format!("unknown policy `{s}`"))?;
                bits.chars()
                    .map(|c| match c {
                        '1' => Ok(true),
                        '0' => Ok(false),
                        _ => Err(format!("table bits must be 0 or 1, got `{c}`")),
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map(Policy::Table)
            }
        }
    }
}
