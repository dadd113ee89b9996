//! Sequential pool filtering: a coarse metadata pass followed by per-window
//! activity and liquidity checks.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{proxy_tvl_series, EventLog, PoolId, PoolMeta, TimeWindow};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub min_txn_count: u64,
    pub min_pools_per_token: usize,
    pub tvl_threshold: f64,
    pub windows: Vec<TimeWindow>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            min_txn_count: 1000,
            min_pools_per_token: 3,
            tvl_threshold: 1_000_000.0,
            windows: Vec::new(),
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_txn_count == 0 || self.min_pools_per_token == 0 || !(self.tvl_threshold > 0.0)
        {
            return Err(Error::Config("selection thresholds must be positive".into()));
        }
        for w in &self.windows {
            w.validate()?;
        }
        Ok(())
    }
}

/// Which window predicates a candidate pool satisfied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub prior_txns: u64,
    pub enough_prior_txns: bool,
    pub tvl_at_start: f64,
    pub tvl_at_end: f64,
    pub liquid_at_start: bool,
    pub liquid_at_end: bool,
    /// Threshold held at two consecutive liquidity events.
    pub sustained_liquidity: bool,
}

impl Provenance {
    pub fn passed(&self) -> bool {
        self.enough_prior_txns && self.liquid_at_start && self.liquid_at_end && self.sustained_liquidity
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolUniverse {
    pub window: String,
    pub pools: BTreeSet<PoolId>,
    /// One entry per candidate, passing or not.
    pub provenance: BTreeMap<PoolId, Provenance>,
}

/// Keeps pools with enough lifetime transactions whose two tokens each trade
/// in enough of the surviving pools.
pub fn coarse_filter<'a>(
    metas: impl IntoIterator<Item = &'a PoolMeta>,
    cfg: &SelectionConfig,
) -> BTreeSet<PoolId> {
    let active: Vec<&PoolMeta> = metas
        .into_iter()
        .filter(|m| m.txn_count >= cfg.min_txn_count)
        .collect();
    let mut token_pools: HashMap<&str, usize> = HashMap::new();
    for m in &active {
        for t in m.tokens() {
            *token_pools.entry(t).or_default() += 1;
        }
    }
    active
        .iter()
        .filter(|m| {
            m.tokens()
                .iter()
                .all(|t| token_pools[t] >= cfg.min_pools_per_token)
        })
        .map(|m| m.pool_id.clone())
        .collect()
}

pub fn window_filter(
    log: &EventLog,
    candidates: &BTreeSet<PoolId>,
    w: &TimeWindow,
    cfg: &SelectionConfig,
) -> Result<PoolUniverse> {
    let mut provenance = BTreeMap::new();
    for pool in candidates {
        let tvl = proxy_tvl_series(log, pool)?;
        let prior_txns = (log.swaps_of(pool).filter(|s| s.ts < w.start).count()
            + log.liquidity_of(pool).filter(|l| l.ts < w.start).count()) as u64;
        let tvl_at_start = tvl.value_at(w.start);
        let tvl_at_end = tvl.value_at(w.end);
        let history: Vec<f64> = tvl
            .points
            .iter()
            .take_while(|(ts, _)| *ts <= w.end)
            .map(|(_, v)| *v)
            .collect();
        let sustained_liquidity = history
            .windows(2)
            .any(|p| p[0] >= cfg.tvl_threshold && p[1] >= cfg.tvl_threshold);
        provenance.insert(
            pool.clone(),
            Provenance {
                prior_txns,
                enough_prior_txns: prior_txns >= cfg.min_txn_count,
                tvl_at_start,
                tvl_at_end,
                liquid_at_start: tvl_at_start >= cfg.tvl_threshold,
                liquid_at_end: tvl_at_end >= cfg.tvl_threshold,
                sustained_liquidity,
            },
        );
    }
    let pools = provenance
        .iter()
        .filter(|(_, p)| p.passed())
        .map(|(id, _)| id.clone())
        .collect();
    Ok(PoolUniverse {
        window: w.label.clone(),
        pools,
        provenance,
    })
}
