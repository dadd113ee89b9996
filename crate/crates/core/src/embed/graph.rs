//! Per-trader transaction graphs and cut-value neighbourhood sampling.
//!
//! A transaction graph is the complete graph over one trader's swaps with
//! edge weight `|Δt|` in seconds. It is never stored densely: weights come
//! from the sorted timestamp list on demand.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::error::{Error, Result};
use crate::events::{AgentId, EventLog, PoolId, TimeWindow};

/// Characters reserved for WL feature encoding.
pub const LABEL_SEPARATOR: char = '|';
pub const NEIGHBOUR_SEPARATOR: char = ',';

#[derive(Clone, Debug, PartialEq)]
pub struct TransactionGraph {
    pub lt_id: AgentId,
    /// `(timestamp, pool label)` in time order.
    pub nodes: Vec<(i64, String)>,
}

impl TransactionGraph {
    pub fn new(lt_id: AgentId, mut nodes: Vec<(i64, String)>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "transaction graph of {lt_id} needs at least 2 swaps, got {}",
                nodes.len()
            )));
        }
        if let Some((_, l)) = nodes
            .iter()
            .find(|(_, l)| l.contains(LABEL_SEPARATOR) || l.contains(NEIGHBOUR_SEPARATOR))
        {
            return Err(Error::InvalidInput(format!(
                "pool label `{l}` contains a reserved character"
            )));
        }
        nodes.sort_by_key(|(ts, _)| *ts);
        Ok(TransactionGraph { lt_id, nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight(&self, s: usize, r: usize) -> f64 {
        (self.nodes[s].0 - self.nodes[r].0).abs() as f64
    }

    pub fn cut_params(&self) -> CutParams {
        let ts: Vec<i64> = self.nodes.iter().map(|(t, _)| *t).collect();
        let min_w = ts.windows(2).map(|p| p[1] - p[0]).min().unwrap_or(0) as f64;
        let max_w = (ts[ts.len() - 1] - ts[0]) as f64;
        CutParams {
            min_w,
            max_w,
            n_nodes: ts.len(),
        }
    }
}

/// Extremes of one graph's edge weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutParams {
    pub min_w: f64,
    pub max_w: f64,
    pub n_nodes: usize,
}

/// Probability of keeping an edge of weight `w`: a half-normal density in the
/// shifted, scaled weight `(w - min_w) / (max_w / n_nodes)`, normalised so that
/// the lightest edge is kept with probability 1.
pub fn cut_value(w: f64, p: &CutParams) -> f64 {
    if p.max_w <= 0.0 {
        return 1.0;
    }
    let scaled = (w - p.min_w) / (p.max_w / p.n_nodes as f64);
    // H(scaled) / H(0) with H(u) = sqrt(2/pi) exp(-u^2 / 2)
    (-0.5 * scaled * scaled).exp()
}

/// Samples each node's neighbour set: `r` joins `N(s)` when a uniform draw
/// falls below the cut-value of edge `(s, r)`. Draws for node `s` come from a
/// substream keyed by `(seed, lt_id, s)` in ascending `r` order.
pub fn sample_neighbourhoods(g: &TransactionGraph, seed: u64) -> Vec<Vec<usize>> {
    let params = g.cut_params();
    (0..g.len())
        .map(|s| {
            let mut rng = crate::stream!(seed, "neighbourhood", g.lt_id.as_str(), s);
            (0..g.len())
                .filter(|&r| {
                    if r == s {
                        return false;
                    }
                    let u: f64 = rng.random();
                    u < cut_value(g.weight(s, r), &params)
                })
                .collect()
        })
        .collect()
}

/// Liquidity takers whose swap count over `pools` and `w` lies in
/// `[min_txns, max_txns]`.
pub fn filter_lts(
    log: &EventLog,
    pools: &BTreeSet<PoolId>,
    w: &TimeWindow,
    min_txns: usize,
    max_txns: usize,
) -> Result<BTreeSet<AgentId>> {
    if min_txns < 2 || min_txns > max_txns {
        return Err(Error::Config(format!(
            "trader bounds [{min_txns}, {max_txns}] are invalid"
        )));
    }
    let mut counts: BTreeMap<&AgentId, usize> = BTreeMap::new();
    for s in log.swaps.iter().filter(|s| w.contains(s.ts) && pools.contains(&s.pool)) {
        *counts.entry(&s.origin).or_default() += 1;
    }
    Ok(counts
        .into_iter()
        .filter(|(_, c)| (min_txns..=max_txns).contains(c))
        .map(|(a, _)| a.clone())
        .collect())
}

/// One transaction graph per trader, in trader order, labelling nodes by pool id.
pub fn transaction_graphs(
    log: &EventLog,
    lts: &BTreeSet<AgentId>,
    pools: &BTreeSet<PoolId>,
    w: &TimeWindow,
) -> Result<Vec<TransactionGraph>> {
    let mut nodes: BTreeMap<&AgentId, Vec<(i64, String)>> =
        lts.iter().map(|a| (a, Vec::new())).collect();
    for s in log.swaps.iter().filter(|s| w.contains(s.ts) && pools.contains(&s.pool)) {
        if let Some(v) = nodes.get_mut(&s.origin) {
            v.push((s.ts, s.pool.0.clone()));
        }
    }
    nodes
        .into_iter()
        .map(|(lt, n)| TransactionGraph::new(lt.clone(), n))
        .collect()
}
