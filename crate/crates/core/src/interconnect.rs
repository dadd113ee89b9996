//! Pool interconnectedness: common-agent similarity graphs, giant components
//! under weight thresholds, bridge-transaction flows and centrality.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{AgentId, EventLog, PoolId, SwapEvent, TimeWindow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    /// Liquidity taker: swap events.
    Lt,
    /// Liquidity provider: mint and burn events.
    Lp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Identity {
    Origin,
    Sender,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentMeasure {
    pub role: Role,
    pub identity: Identity,
}

impl AgentMeasure {
    pub fn new(role: Role, identity: Identity) -> Self {
        AgentMeasure { role, identity }
    }

    pub fn label(&self) -> &'static str {
        match (self.role, self.identity) {
            (Role::Lt, Identity::Origin) => "lt_origin",
            (Role::Lt, Identity::Sender) => "lt_sender",
            (Role::Lp, Identity::Origin) => "lp_origin",
            (Role::Lp, Identity::Sender) => "lp_sender",
        }
    }
}

/// Undirected pool-similarity graph. Only pairs with a positive weight are
/// stored; absent pairs have weight 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoolGraph {
    pub nodes: BTreeSet<PoolId>,
    /// Keyed by `(a, b)` with `a < b`.
    pub edges: BTreeMap<(PoolId, PoolId), u64>,
}

impl PoolGraph {
    pub fn new(nodes: impl IntoIterator<Item = PoolId>) -> Self {
        PoolGraph {
            nodes: nodes.into_iter().collect(),
            edges: BTreeMap::new(),
        }
    }

    /// Sets the weight of an unordered pair. Self-loops and zero weights are ignored.
    pub fn set_weight(&mut self, a: &PoolId, b: &PoolId, w: u64) {
        if a == b || w == 0 {
            return;
        }
        let key = if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        self.nodes.insert(a.clone());
        self.nodes.insert(b.clone());
        self.edges.insert(key, w);
    }

    pub fn weight(&self, a: &PoolId, b: &PoolId) -> u64 {
        let key = if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        self.edges.get(&key).copied().unwrap_or(0)
    }

    pub fn max_weight(&self) -> u64 {
        self.edges.values().copied().max().unwrap_or(0)
    }

    /// Undirected weighted view keeping edges with `weight >= threshold`.
    pub fn to_weighted(&self, threshold: u64) -> WeightedGraph {
        WeightedGraph::from_edges(
            self.nodes.iter().cloned(),
            self.edges
                .iter()
                .filter(|(_, w)| **w >= threshold)
                .map(|((a, b), w)| (a.clone(), b.clone(), *w as f64)),
        )
    }
}

/// Directed bridge-flow graph; up to two edges per pool pair.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BridgeGraph {
    pub nodes: BTreeSet<PoolId>,
    /// `(from, to)` → number of bridge transactions.
    pub edges: BTreeMap<(PoolId, PoolId), u64>,
}

impl BridgeGraph {
    pub fn total(&self) -> u64 {
        self.edges.values().sum()
    }

    /// Undirected view of the edges with `count >= min_count`. A pair linked in
    /// both directions carries the summed count.
    pub fn undirected(&self, min_count: u64) -> WeightedGraph {
        let mut merged: BTreeMap<(PoolId, PoolId), f64> = BTreeMap::new();
        for ((a, b), c) in &self.edges {
            if *c == 0 || *c < min_count {
                continue;
            }
            let key = if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
            *merged.entry(key).or_default() += *c as f64;
        }
        WeightedGraph::from_edges(
            self.nodes.iter().cloned(),
            merged.into_iter().map(|((a, b), w)| (a, b, w)),
        )
    }
}

/// Undirected weighted graph with dense node indices, used for component and
/// centrality computations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightedGraph {
    pub nodes: Vec<PoolId>,
    pub adj: Vec<Vec<(usize, f64)>>,
}

impl WeightedGraph {
    pub fn from_edges(
        nodes: impl IntoIterator<Item = PoolId>,
        edges: impl IntoIterator<Item = (PoolId, PoolId, f64)>,
    ) -> Self {
        let mut set: BTreeSet<PoolId> = nodes.into_iter().collect();
        let edges: Vec<_> = edges.into_iter().collect();
        for (a, b, _) in &edges {
            set.insert(a.clone());
            set.insert(b.clone());
        }
        let nodes: Vec<PoolId> = set.into_iter().collect();
        let index: HashMap<&PoolId, usize> = nodes.iter().enumerate().map(|(i, p)| (p, i)).collect();
        let mut adj = vec![Vec::new(); nodes.len()];
        for (a, b, w) in &edges {
            if a == b {
                continue;
            }
            let (i, j) = (index[a], index[b]);
            adj[i].push((j, *w));
            adj[j].push((i, *w));
        }
        WeightedGraph { nodes, adj }
    }

    /// Restriction to the given node set.
    pub fn induced(&self, keep: &BTreeSet<PoolId>) -> WeightedGraph {
        let edges = self.adj.iter().enumerate().flat_map(|(i, nbrs)| {
            nbrs.iter()
                .filter(move |(j, _)| i < *j)
                .filter(move |(j, _)| keep.contains(&self.nodes[i]) && keep.contains(&self.nodes[*j]))
                .map(move |(j, w)| (self.nodes[i].clone(), self.nodes[*j].clone(), *w))
        });
        WeightedGraph::from_edges(keep.iter().cloned(), edges)
    }

    /// Connected components as sorted node-index lists, isolated vertices included.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.nodes.len()];
        let mut out = Vec::new();
        for start in 0..self.nodes.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &(v, _) in &self.adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Largest component among vertices with at least one edge. Equal sizes
    /// resolve to the component holding the smallest pool id.
    pub fn giant_component(&self) -> BTreeSet<PoolId> {
        // Node indices follow pool-id order, so comp[0] is the smallest id.
        self.components()
            .into_iter()
            .filter(|c| c.len() > 1)
            .min_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])))
            .map(|c| c.into_iter().map(|i| self.nodes[i].clone()).collect())
            .unwrap_or_default()
    }
}

fn agents_by_pool(
    log: &EventLog,
    pools: &BTreeSet<PoolId>,
    w: &TimeWindow,
    m: AgentMeasure,
) -> BTreeMap<PoolId, HashSet<AgentId>> {
    let mut out: BTreeMap<PoolId, HashSet<AgentId>> =
        pools.iter().map(|p| (p.clone(), HashSet::new())).collect();
    let mut add = |pool: &PoolId, origin: &AgentId, sender: &AgentId| {
        if let Some(set) = out.get_mut(pool) {
            set.insert(match m.identity {
                Identity::Origin => origin.clone(),
                Identity::Sender => sender.clone(),
            });
        }
    };
    match m.role {
        Role::Lt => {
            for s in log.swaps.iter().filter(|s| w.contains(s.ts)) {
                add(&s.pool, &s.origin, &s.sender);
            }
        }
        Role::Lp => {
            for l in log.liquidity.iter().filter(|l| w.contains(l.ts)) {
                add(&l.pool, &l.origin, &l.sender);
            }
        }
    }
    out
}

/// Weights every pool pair by the number of distinct agents active on both.
pub fn build_common_agent_graph(
    log: &EventLog,
    pools: &BTreeSet<PoolId>,
    w: &TimeWindow,
    m: AgentMeasure,
) -> Result<PoolGraph> {
    if let Some(p) = pools.iter().find(|p| !log.pools.contains_key(*p)) {
        return Err(Error::UnknownPool(p.to_string()));
    }
    let agents = agents_by_pool(log, pools, w, m);
    let sets: Vec<(&PoolId, &HashSet<AgentId>)> = agents.iter().collect();
    let mut g = PoolGraph::new(pools.iter().cloned());
    for (i, (p, a)) in sets.iter().enumerate() {
        for (q, b) in &sets[i + 1..] {
            let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
            let common = small.iter().filter(|x| large.contains(*x)).count() as u64;
            g.set_weight(p, q, common);
        }
    }
    Ok(g)
}

pub fn giant_component(g: &PoolGraph, threshold: u64) -> BTreeSet<PoolId> {
    g.to_weighted(threshold).giant_component()
}

/// Giant-component size at each threshold, in the given order.
pub fn threshold_sweep(g: &PoolGraph, thresholds: &[u64]) -> Result<Vec<(u64, usize)>> {
    if thresholds.windows(2).any(|t| t[0] > t[1]) {
        return Err(Error::InvalidInput("thresholds must be ascending".into()));
    }
    Ok(thresholds
        .iter()
        .map(|&t| (t, giant_component(g, t).len()))
        .collect())
}

/// One entry of a per-token flow list: -1 when the trader bought the token
/// from `pool`, +1 when it sold the token into it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Flow<'a> {
    pub sign: i8,
    pub pool: &'a PoolId,
}

fn token_flows<'a>(log: &'a EventLog, swap: &'a SwapEvent) -> Option<[(&'a str, Flow<'a>); 2]> {
    let meta = log.pools.get(&swap.pool)?;
    // Positive amounts flowed into the pool, i.e. were sold by the trader.
    let sign = |amount: f64| if amount > 0.0 { 1 } else { -1 };
    Some([
        (meta.token0.as_str(), Flow { sign: sign(swap.amount0), pool: &swap.pool }),
        (meta.token1.as_str(), Flow { sign: sign(swap.amount1), pool: &swap.pool }),
    ])
}

/// Counts one bridge per adjacent (buy, sell) pair in every per-token flow list
/// of every multi-swap transaction inside the window.
pub fn extract_bridges(log: &EventLog, pools: &BTreeSet<PoolId>, w: &TimeWindow) -> BridgeGraph {
    let mut txns: BTreeMap<&str, Vec<&SwapEvent>> = BTreeMap::new();
    for s in log.swaps.iter().filter(|s| w.contains(s.ts)) {
        txns.entry(&s.txn_id).or_default().push(s);
    }
    let mut edges: BTreeMap<(PoolId, PoolId), u64> = BTreeMap::new();
    for (_, mut actions) in txns {
        if actions.len() < 2 {
            continue;
        }
        actions.sort_by_key(|s| s.log_index);
        let mut flows: BTreeMap<&str, Vec<Flow>> = BTreeMap::new();
        for s in actions {
            for (token, flow) in token_flows(log, s).into_iter().flatten() {
                flows.entry(token).or_default().push(flow);
            }
        }
        for list in flows.values() {
            for pair in list.windows(2) {
                let (buy, sell) = (&pair[0], &pair[1]);
                if buy.sign == -1
                    && sell.sign == 1
                    && buy.pool != sell.pool
                    && pools.contains(buy.pool)
                    && pools.contains(sell.pool)
                {
                    *edges
                        .entry((buy.pool.clone(), sell.pool.clone()))
                        .or_default() += 1;
                }
            }
        }
    }
    BridgeGraph {
        nodes: pools.clone(),
        edges,
    }
}

pub fn bridge_giant_component(bg: &BridgeGraph, min_count: u64) -> BTreeSet<PoolId> {
    bg.undirected(min_count).giant_component()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Centrality {
    pub scores: BTreeMap<PoolId, f64>,
    pub eigenvalue: f64,
    pub iterations: usize,
}

pub const CENTRALITY_TOLERANCE: f64 = 1e-10;
pub const CENTRALITY_MAX_ITER: usize = 10_000;

/// Principal eigenvector of the weighted adjacency matrix by power iteration,
/// L2-normalised.
///
/// Iterates with `A + I`, which has the same eigenvectors but a strictly
/// dominant leading eigenvalue, so bipartite graphs (stars, paths) converge
/// instead of oscillating.
pub fn eigenvector_centrality(g: &WeightedGraph) -> Result<Centrality> {
    let n = g.nodes.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty graph".into()));
    }
    let comps = g.components().len();
    if comps > 1 {
        return Err(Error::Disconnected { components: comps });
    }
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    while iterations < CENTRALITY_MAX_ITER {
        iterations += 1;
        for (i, nbrs) in g.adj.iter().enumerate() {
            next[i] = x[i] + nbrs.iter().map(|&(j, w)| w * x[j]).sum::<f64>();
        }
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        next.iter_mut().for_each(|v| *v /= norm);
        let delta = x
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut x, &mut next);
        if delta < CENTRALITY_TOLERANCE {
            break;
        }
    }
    let eigenvalue = g
        .adj
        .iter()
        .enumerate()
        .map(|(i, nbrs)| x[i] * nbrs.iter().map(|&(j, w)| w * x[j]).sum::<f64>())
        .sum();
    Ok(Centrality {
        scores: g.nodes.iter().cloned().zip(x.into_iter().map(|v| v.max(0.0))).collect(),
        eigenvalue,
        iterations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentOverlap {
    /// Origins that both swapped and provided liquidity on the pool.
    pub common: usize,
    pub lt_count: usize,
    pub lp_count: usize,
    pub lt_ratio: f64,
    pub lp_ratio: f64,
}

pub fn agent_overlap(
    log: &EventLog,
    pools: &BTreeSet<PoolId>,
    w: &TimeWindow,
) -> Result<BTreeMap<PoolId, AgentOverlap>> {
    if let Some(p) = pools.iter().find(|p| !log.pools.contains_key(*p)) {
        return Err(Error::UnknownPool(p.to_string()));
    }
    let lts = agents_by_pool(log, pools, w, AgentMeasure::new(Role::Lt, Identity::Origin));
    let lps = agents_by_pool(log, pools, w, AgentMeasure::new(Role::Lp, Identity::Origin));
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(pools
        .iter()
        .map(|p| {
            let (lt, lp) = (&lts[p], &lps[p]);
            let common = lt.intersection(lp).count();
            (
                p.clone(),
                AgentOverlap {
                    common,
                    lt_count: lt.len(),
                    lp_count: lp.len(),
                    lt_ratio: ratio(common, lt.len()),
                    lp_ratio: ratio(common, lp.len()),
                },
            )
        })
        .collect())
}
