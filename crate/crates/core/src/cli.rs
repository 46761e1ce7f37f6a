//! The `pcn` command line.
//!
//! Machine mode (the default) prints one `key=value` per line; keys may
//! repeat for list-like results. Amounts print as integers or `p/q`.
//!
//! Exit codes: 0 on success, 2 on usage errors, 1 when a size guard rejects
//! the input, a file cannot be read or parsed, or a restricted instance is
//! infeasible.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use itertools::Itertools;

use crate::amount::{format_amount, parse_amount, Amount};
use crate::design::{
    best_star, build_max_profit_forest, build_star, exact_min_capital_in, DesignResult, ExactLimits, ForestScope,
    EXACT_MAX_NODES, EXACT_MAX_TXS,
};
use crate::fixtures;
use crate::model::{ChannelNetwork, NodeId, Transaction};
use crate::online::{adversary_stream, competitive_report, run_online, EventKind, Policy};
use crate::preprocess::prune_single_participation;
use crate::restricted::{
    feasible_routing_with, partition_brute, partition_reduce, PartitionInstance, RestrictedInstance, SearchLimits,
    MAX_PATHS_PER_PAIR, MAX_TXS,
};
use crate::single_channel::{
    decide_profit, exact_select_with_limit, fptas_run, fwss_brute, fwss_reduce, DecisionMode, FwssInstance,
    SignedTxSequence, EXACT_SELECT_MAX_N,
};
use crate::trace::{generate_uniform, parse_graph, parse_trace, write_graph, write_trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Machine,
    Text,
}

#[derive(Debug, Parser)]
#[command(name = "pcn", version, about = "Payment channel network design toolkit")]
#[command(arg_required_else_help = true)]
pub struct RunConfig {
    /// Output mode.
    #[arg(long, global = true, value_enum, default_value_t = Format::Machine)]
    pub format: Format,
    /// Worker threads for exhaustive searches; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

fn amount_arg(s: &str) -> Result<Amount, String> {
    parse_amount(s).map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Drop transactions touching a node with a single participation.
    Prune { trace: PathBuf },
    /// Select transactions on a single channel (two-node trace).
    SingleChannel(SingleChannelArgs),
    /// Profit-maximizing forest with minimal capitals.
    Design { trace: PathBuf },
    /// Star network executing every transaction.
    Star(StarArgs),
    /// Exhaustive oracles.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Can all transactions be routed on a given graph within a budget?
    Restricted(RestrictedArgs),
    /// Instance generators from hardness reductions.
    #[command(subcommand)]
    Reduce(ReduceCommand),
    /// Online hub provisioning, or the adaptive adversary game.
    Online(OnlineArgs),
    /// Reproducible random trace on standard output.
    Gen(GenArgs),
    /// Print or write a registered fixture.
    Fixture(FixtureArgs),
}

#[derive(Debug, Args)]
pub struct SingleChannelArgs {
    /// Capital bounding transfers from the lower node id to the higher one.
    #[arg(long, value_parser = amount_arg)]
    pub cap_send: Amount,
    /// Capital bounding transfers in the other direction.
    #[arg(long, value_parser = amount_arg)]
    pub cap_recv: Amount,
    /// Exhaustive search instead of the approximation scheme.
    #[arg(long, conflicts_with = "epsilon")]
    pub exact: bool,
    /// Approximation parameter in (0, 1). When omitted, short traces are
    /// solved exactly and longer ones use 1/10.
    #[arg(long, value_parser = amount_arg)]
    pub epsilon: Option<Amount>,
    /// Decide whether at least this many transactions fit.
    #[arg(long)]
    pub decide: Option<usize>,
    /// Longest trace searched exhaustively.
    #[arg(long, default_value_t = EXACT_SELECT_MAX_N)]
    pub max_exact_n: usize,
    pub trace: PathBuf,
}

#[derive(Debug, Args)]
pub struct StarArgs {
    /// Hub node id.
    #[arg(long, required_unless_present = "best", conflicts_with = "best")]
    pub center: Option<u32>,
    /// Try every participant and one fresh hub.
    #[arg(long)]
    pub best: bool,
    pub trace: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Minimum total capital over all forests executing every transaction.
    MinCapital {
        /// Search spanning trees only.
        #[arg(long)]
        spanning: bool,
        /// Largest node count searched.
        #[arg(long, default_value_t = EXACT_MAX_NODES)]
        max_exact_n: usize,
        /// Longest trace searched.
        #[arg(long, default_value_t = EXACT_MAX_TXS)]
        max_txs: usize,
        trace: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RestrictedArgs {
    /// Edge list, one `u,v` per line.
    #[arg(long)]
    pub graph: PathBuf,
    /// Locked capital available; opening costs are not counted.
    #[arg(long, value_parser = amount_arg)]
    pub budget: Amount,
    /// Longest trace searched.
    #[arg(long, default_value_t = MAX_TXS)]
    pub max_exact_n: usize,
    /// Most simple paths allowed between one sender and receiver.
    #[arg(long, default_value_t = MAX_PATHS_PER_PAIR)]
    pub max_paths: usize,
    /// Shuffle path enumeration with this seed.
    #[arg(long)]
    pub seed: Option<u64>,
    pub trace: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum ReduceCommand {
    /// Partition sizes to a routing instance on a four-node cycle.
    Partition {
        #[arg(value_delimiter = ',', required = true)]
        sizes: Vec<u64>,
        /// Write `graph.csv` and `trace.csv` here instead of printing them.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fixed weight subset sum to a single-channel instance.
    Fwss {
        #[arg(long, value_delimiter = ',', required = true)]
        elements: Vec<u64>,
        #[arg(long)]
        target: u64,
        #[arg(long)]
        cardinality: usize,
        /// Write `trace.csv` here instead of printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct OnlineArgs {
    /// Play the adaptive adversary instead of reading a trace.
    #[arg(long, conflicts_with_all = ["report", "trace"], requires = "policy")]
    pub adversary: bool,
    /// `always-accept`, `always-deny` or `table:BITS`.
    #[arg(long, requires = "adversary")]
    pub policy: Option<Policy>,
    /// Number of revealed transactions.
    #[arg(long, default_value_t = 20, requires = "adversary")]
    pub len: usize,
    /// Compare against the best offline star.
    #[arg(long)]
    pub report: bool,
    #[arg(required_unless_present = "adversary")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Node ids are drawn from `0..NODES`.
    #[arg(long)]
    pub nodes: u32,
    /// Number of transactions.
    #[arg(long)]
    pub txs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Value distribution, `uniform:LO,HI`.
    #[arg(long, default_value = "uniform:1,10")]
    pub dist: String,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    /// Fixture name, optionally with a parameter (`lemma2_cycle:13`).
    #[arg(required_unless_present = "all")]
    pub name: Option<String>,
    /// Every registered fixture with default parameters.
    #[arg(long, conflicts_with = "name", requires = "write")]
    pub all: bool,
    /// Write trace, sidecar and graph files into this directory.
    #[arg(long)]
    pub write: Option<PathBuf>,
}

/// Failure that maps to exit code 1 without being an error of the tool.
#[derive(Debug)]
struct Rejected(String);

impl std::fmt::Display for Rejected {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Rejected {}

/// Ordered `key=value` output.
#[derive(Debug, Default)]
struct Report {
    lines: Vec<(String, String)>,
    raw: Option<String>,
}

impl Report {
    fn put(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    fn amount(&mut self, key: &str, value: &Amount) {
        self.put(key, format_amount(value));
    }

    fn render(&self, format: Format) -> String {
        if let Some(raw) = &self.raw {
            return raw.clone();
        }
        let mut out = String::new();
        match format {
            Format::Machine => {
                for (k, v) in &self.lines {
                    out.push_str(&format!("{k}={v}\n"));
                }
            }
            Format::Text => {
                let width = self.lines.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
                for (k, v) in &self.lines {
                    out.push_str(&format!("{:width$}  {v}\n", k.replace('_', " ")));
                }
            }
        }
        out
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_trace(path: &Path) -> Result<Vec<Transaction>> {
    parse_trace(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).join(",")
}

fn design_report(r: &mut Report, d: &DesignResult) {
    r.put("edges", d.network.edge_count());
    for c in d.network.channels() {
        r.put(
            "channel",
            format!(
                "{},{},{},{}",
                c.left,
                c.right,
                format_amount(&c.cap_left),
                format_amount(&c.cap_right)
            ),
        );
    }
    r.put("accepted", d.executed.len());
    r.put("executed", join(&d.executed));
    r.put("profit_base", d.profit.base);
    r.amount("capital", &d.locked);
    r.amount("total_capital", &d.capital);
}

/// Parses `args` (program name first), runs the command and writes the
/// result to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return code;
        }
    };
    let result = match config.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| dispatch(&config)),
            Err(e) => Err(anyhow!("cannot start thread pool: {e}")),
        },
        None => dispatch(&config),
    };
    match result {
        Ok(report) => {
            let _ = out.write_all(report.render(config.format).as_bytes());
            0
        }
        Err(e) => {
            if let Some(Rejected(partial)) = e.downcast_ref::<Rejected>() {
                let _ = out.write_all(partial.as_bytes());
                return 1;
            }
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}

fn dispatch(config: &RunConfig) -> Result<Report> {
    let mut r = Report::default();
    match &config.command {
        Command::Prune { trace } => {
            let txs = load_trace(trace)?;
            let p = prune_single_participation(&txs);
            r.put("kept", p.kept.len());
            r.put("removed", p.removed.len());
            r.put("rounds", p.rounds);
            r.put("kept_indices", join(&p.kept_indices));
            for (i, (_, cause)) in p.removed_indices.iter().zip(&p.removed) {
                r.put("removed_tx", format!("{i},{cause}"));
            }
        }
        Command::SingleChannel(a) => single_channel(&mut r, a)?,
        Command::Design { trace } => {
            let txs = load_trace(trace)?;
            design_report(&mut r, &build_max_profit_forest(&txs));
        }
        Command::Star(a) => {
            let txs = load_trace(&a.trace)?;
            let (center, d) = match a.center {
                Some(c) => (NodeId(c), build_star(&txs, NodeId(c))),
                None => best_star(&txs),
            };
            r.put("center", center);
            design_report(&mut r, &d);
        }
        Command::Oracle(OracleCommand::MinCapital {
            spanning,
            max_exact_n,
            max_txs,
            trace,
        }) => {
            let txs = load_trace(trace)?;
            let scope = if *spanning {
                ForestScope::SpanningTree
            } else {
                ForestScope::AnyForest
            };
            let limits = ExactLimits {
                max_nodes: *max_exact_n,
                max_txs: *max_txs,
            };
            let d = exact_min_capital_in(&txs, scope, limits).map_err(|e| Rejected(format!("rejected={e}\n")))?;
            design_report(&mut r, &d);
        }
        Command::Restricted(a) => restricted(&mut r, a, config.format)?,
        Command::Reduce(ReduceCommand::Partition { sizes, out }) => {
            let p = PartitionInstance::new(sizes.clone())?;
            let inst = partition_reduce(&p);
            r.amount("budget", &inst.budget);
            if let Ok(yes) = partition_brute(&p) {
                r.put("partition", if yes { "yes" } else { "no" });
            }
            let edges: Vec<_> = inst.graph.edges().collect();
            bundle(&mut r, out.as_deref(), &inst.txs, Some(&edges))?;
        }
        Command::Reduce(ReduceCommand::Fwss {
            elements,
            target,
            cardinality,
            out,
        }) => {
            let inst = FwssInstance {
                elements: elements.clone(),
                target: *target,
                cardinality: *cardinality,
            };
            let (seq, need) = fwss_reduce(&inst)?;
            r.amount("cap_send", seq.cap_send());
            r.amount("cap_recv", seq.cap_recv());
            r.put("target_accepted", need);
            if let Ok(found) = fwss_brute(&inst) {
                r.put("fwss", if found.is_some() { "yes" } else { "no" });
            }
            let txs: Vec<Transaction> = seq
                .values()
                .iter()
                .filter(|v| **v != Amount::from_integer(0))
                .map(|v| {
                    if *v > Amount::from_integer(0) {
                        Transaction::new(NodeId(0), NodeId(1), *v)
                    } else {
                        Transaction::new(NodeId(1), NodeId(0), -v)
                    }
                })
                .collect::<Result<_, _>>()?;
            if txs.len() != seq.len() {
                r.put("dropped_zero_values", seq.len() - txs.len());
            }
            bundle(&mut r, out.as_deref(), &txs, None)?;
        }
        Command::Online(a) => online(&mut r, a)?,
        Command::Gen(a) => {
            let (lo, hi) = a
                .dist
                .strip_prefix("uniform:")
                .and_then(|rest| rest.split_once(','))
                .and_then(|(lo, hi)| Some((lo.trim().parse::<u64>().ok()?, hi.trim().parse::<u64>().ok()?)))
                .ok_or_else(|| anyhow!("--dist must look like uniform:LO,HI"))?;
            if a.nodes < 2 || lo == 0 || lo > hi {
                bail!("need --nodes >= 2 and 1 <= LO <= HI");
            }
            r.raw = Some(write_trace(&generate_uniform(a.nodes, a.txs, a.seed, lo, hi)));
        }
        Command::Fixture(a) => {
            let list = match &a.name {
                Some(n) => vec![fixtures::load(n)?],
                None => fixtures::all(),
            };
            for f in list {
                r.put("fixture", &f.name);
                r.put("provenance", f.provenance);
                r.put("transactions", f.txs.len());
                for (k, v) in &f.expected {
                    r.amount(k, v);
                }
                if let Some(dir) = &a.write {
                    for p in f.write_to(dir)? {
                        r.put("wrote", p.display());
                    }
                }
            }
        }
    }
    Ok(r)
}

fn bundle(
    r: &mut Report,
    out: Option<&Path>,
    txs: &[Transaction],
    edges: Option<&[crate::model::EdgeKey]>,
) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let trace = dir.join("trace.csv");
            fs::write(&trace, write_trace(txs))?;
            r.put("wrote", trace.display());
            if let Some(edges) = edges {
                let graph = dir.join("graph.csv");
                fs::write(&graph, write_graph(edges))?;
                r.put("wrote", graph.display());
            }
        }
        None => {
            for e in edges.unwrap_or(&[]) {
                r.put("edge", e);
            }
            for t in txs {
                r.put("tx", format!("{},{},{}", t.sender, t.receiver, format_amount(&t.value)));
            }
        }
    }
    Ok(())
}

fn single_channel(r: &mut Report, a: &SingleChannelArgs) -> Result<()> {
    let txs = load_trace(&a.trace)?;
    let seq = SignedTxSequence::from_transactions(&txs, a.cap_send, a.cap_recv)?;
    let guard = |e: crate::single_channel::SingleChannelError| -> anyhow::Error {
        match e {
            crate::single_channel::SingleChannelError::InstanceTooLarge { .. } => {
                Rejected(format!("rejected={e}\n")).into()
            }
            other => other.into(),
        }
    };
    if let Some(target) = a.decide {
        let mode = match a.epsilon {
            Some(eps) => DecisionMode::Approximate(eps),
            None => DecisionMode::Exact,
        };
        let yes = decide_profit(&seq, target, &mode).map_err(guard)?;
        r.put("mode", if a.epsilon.is_some() { "approximate" } else { "exact" });
        r.put("target", target);
        r.put("decision", if yes { "yes" } else { "no" });
        return Ok(());
    }
    if a.exact || a.epsilon.is_none() && seq.len() <= a.max_exact_n {
        let s = exact_select_with_limit(&seq, a.max_exact_n).map_err(guard)?;
        r.put("mode", "exact");
        r.put("accepted", s.accepted_count());
        r.put("strategy", s.bitstring());
    } else {
        let eps = a.epsilon.unwrap_or_else(|| Amount::new(1, 10));
        let o = fptas_run(&seq, &eps).map_err(guard)?;
        r.put("mode", "fptas");
        r.amount("epsilon", &eps);
        r.put("accepted", o.strategy.accepted_count());
        r.put("strategy", o.strategy.bitstring());
        r.amount("scale", &o.scale);
        r.put("table_cells", o.table_cells);
        r.put("repaired", o.repaired);
    }
    Ok(())
}

fn restricted(r: &mut Report, a: &RestrictedArgs, format: Format) -> Result<()> {
    let txs = load_trace(&a.trace)?;
    let edges = parse_graph(&read(&a.graph)?).with_context(|| format!("in {}", a.graph.display()))?;
    let span = edges.iter().map(|e| e.hi.index() + 1).max().unwrap_or(0);
    let graph = ChannelNetwork::with_edges(span, edges)?;
    let inst = RestrictedInstance::new(graph, txs, a.budget)?;
    let limits = SearchLimits {
        max_txs: a.max_exact_n,
        max_paths_per_pair: a.max_paths,
    };
    let found = feasible_routing_with(&inst, limits, a.seed).map_err(|e| Rejected(format!("rejected={e}\n")))?;
    r.amount("budget", &inst.budget);
    match found {
        Some(cert) => {
            r.put("feasible", "yes");
            r.amount("capital", &cert.locked);
            for (i, p) in cert.paths.iter().enumerate() {
                r.put("path", format!("{i}:{}", p.iter().join(">")));
            }
            for c in cert.network.channels() {
                r.put(
                    "channel",
                    format!(
                        "{},{},{},{}",
                        c.left,
                        c.right,
                        format_amount(&c.cap_left),
                        format_amount(&c.cap_right)
                    ),
                );
            }
            Ok(())
        }
        None => {
            r.put("feasible", "no");
            Err(Rejected(r.render(format)).into())
        }
    }
}

fn online(r: &mut Report, a: &OnlineArgs) -> Result<()> {
    if a.adversary {
        let policy = a.policy.clone().expect("required by clap");
        if a.len < 2 {
            bail!("--len must be at least 2");
        }
        let t = adversary_stream(|step, _| policy.decide(step), a.len)?;
        r.put("branch", format!("{:?}", t.branch));
        r.put("values", join(t.values.iter().map(format_amount)));
        r.put("executed", t.executed.bitstring());
        r.put("accepted", t.accepted);
        r.put("offline", t.offline);
        return Ok(());
    }
    let txs = load_trace(a.trace.as_deref().expect("required by clap"))?;
    if a.report {
        let c = competitive_report(&txs);
        r.amount("online_capital", &c.online_capital);
        r.put("event_cost", c.event_cost);
        r.amount("offline_capital", &c.offline_capital);
        r.amount("offline_edges", &c.offline_edges);
        r.amount("ratio", &c.ratio);
        r.amount("log_bound", &c.log_bound);
        r.put("log_bound_ok", c.log_bound_ok());
        r.put("refund_bound_ok", c.refund_bound_ok());
        for s in &c.spokes {
            r.put(
                "spoke",
                format!(
                    "{},{},{},{},{},{},{}",
                    s.node,
                    s.refunds_to_hub,
                    s.refunds_from_hub,
                    format_amount(&s.needed_to_hub),
                    format_amount(&s.needed_from_hub),
                    s.bound_to_hub(),
                    s.bound_from_hub()
                ),
            );
        }
        return Ok(());
    }
    let run = run_online(&txs);
    r.put("hub", run.state.hub);
    r.put("executed", run.state.executed_count);
    r.put("event_cost", run.event_cost);
    r.amount("residual", &run.state.residual());
    r.amount("capital", &run.capital);
    for e in &run.state.events {
        let kind = match e.kind {
            EventKind::Open => "open",
            EventKind::RefundToHub => "refund_to_hub",
            EventKind::RefundFromHub => "refund_from_hub",
        };
        r.put(
            "event",
            format!("{},{},{},{}", e.step, e.node, kind, format_amount(&e.amount)),
        );
    }
    Ok(())
}
