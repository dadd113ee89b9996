//! Synthetic event logs with planted ground truth: trader archetypes with
//! disjoint pool alphabets and distinct burst structures, and pools whose
//! daily state follows the crypto law with a known slope.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cluster::MarketState;
use crate::error::{Error, Result};
use crate::events::{
    classify_pool, day_label, parse_day, AgentId, EventLog, FeeTier, LiquidityEvent, LiquidityKind,
    PoolId, PoolMeta, SwapEvent, TimeWindow, TokenClasses, SECONDS_PER_DAY,
};

/// Daily relationship between volume and the pool state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    /// `P_vol = r_pool · n_fee · T_liq / V_stab`, times `1 + noise · ε`.
    Law { r_pool: f64 },
    /// `P_vol` drawn independently of the state, at the scale `r_pool` would give.
    Noise { r_pool: f64 },
    /// Law before `day` (counted from the first analysed day), noise from it on.
    Switch { r_pool: f64, day: usize },
}

impl Regime {
    pub fn r_pool(&self) -> f64 {
        match *self {
            Regime::Law { r_pool } | Regime::Noise { r_pool } | Regime::Switch { r_pool, .. } => r_pool,
        }
    }

    fn lawful_on(&self, day: usize) -> bool {
        match *self {
            Regime::Law { .. } => true,
            Regime::Noise { .. } => false,
            Regime::Switch { day: d, .. } => day < d,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthPool {
    pub token0: String,
    pub token1: String,
    pub fee_tier: u32,
    pub regime: Regime,
    /// Typical day-end proxyTVL; daily values vary in `[0.5, 1.5]` times this.
    pub tvl: f64,
    /// Typical execution rate (token0 per token1).
    pub base_rate: f64,
    /// Swaps per day by one-off traders.
    pub background_per_day: usize,
    /// Swaps before the first analysed day.
    pub warmup_swaps: usize,
}

impl SynthPool {
    pub fn id(&self) -> PoolId {
        PoolId(format!("{}-{}/{}", self.token0, self.token1, self.fee_tier))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    pub name: String,
    /// Pool ids this archetype trades on.
    pub pools: Vec<String>,
    /// Inclusive range of swaps per burst.
    pub burst_size: [usize; 2],
    /// Inclusive range of seconds between swaps inside a burst.
    pub gap_secs: [i64; 2],
    pub usd_scale: f64,
    /// Router contract used as the swap sender.
    pub router: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    /// First analysed day, `YYYY-MM-DD`.
    pub start: String,
    pub days: usize,
    pub warmup_days: usize,
    /// Multiplicative volume noise for lawful days.
    pub noise: f64,
    pub pools: Vec<SynthPool>,
    pub archetypes: Vec<Archetype>,
    pub lts_per_archetype: usize,
    /// Inclusive range of swaps per planted trader.
    pub lt_swaps: [usize; 2],
    /// Two-leg arbitrage transactions per day.
    pub arbitrage_per_day: usize,
    pub lp_agents: usize,
}

/// Slope that gives a daily volume of `volume` at the pool's typical state
/// with a relative rate spread of 1%.
pub fn slope_for_volume(volume: f64, fee_tier: u32, tvl: f64, base_rate: f64) -> f64 {
    volume * fee_tier as f64 / (tvl * base_rate * TYPICAL_SPREAD)
}

const TYPICAL_SPREAD: f64 = 0.01;

fn pool(t0: &str, t1: &str, fee: u32, regime: fn(f64) -> Regime, volume: f64, tvl: f64, rate: f64, bg: usize) -> SynthPool {
    SynthPool {
        token0: t0.into(),
        token1: t1.into(),
        fee_tier: fee,
        regime: regime(slope_for_volume(volume, fee, tvl, rate)),
        tvl,
        base_rate: rate,
        background_per_day: bg,
        warmup_swaps: 1200,
    }
}

fn law(r_pool: f64) -> Regime {
    Regime::Law { r_pool }
}

fn noise(r_pool: f64) -> Regime {
    Regime::Noise { r_pool }
}

fn switch_at_40(r_pool: f64) -> Regime {
    Regime::Switch { r_pool, day: 40 }
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let mut pools = vec![
            pool("USDC", "USDT", 100, noise, 8e6, 2e8, 1.0, 8),
            pool("DAI", "USDC", 100, noise, 5e6, 3e8, 1.0, 8),
            pool("DAI", "USDT", 500, noise, 1e6, 2e7, 1.0, 6),
            pool("USDC", "WETH", 500, law, 2e8, 2e8, 3000.0, 12),
            pool("USDC", "WETH", 3000, law, 5e7, 2e8, 3000.0, 10),
            pool("WETH", "USDT", 3000, law, 2e7, 8e7, 3e-4, 8),
            pool("DAI", "WETH", 3000, law, 8e6, 4e7, 3000.0, 6),
            pool("WBTC", "WETH", 500, law, 1e7, 1e8, 0.07, 6),
            pool("WBTC", "WETH", 3000, law, 4e6, 8e7, 0.07, 6),
            pool("WBTC", "USDC", 3000, law, 3e6, 5e7, 2e-5, 5),
            pool("SHIB", "WETH", 10000, law, 2e6, 2e7, 4e-9, 6),
            pool("SHIB", "USDC", 10000, law, 5e5, 6e6, 1e-5, 5),
            pool("SHIB", "USDT", 10000, noise, 3e5, 5e6, 1e-5, 4),
            pool("UNI", "WETH", 3000, law, 2e6, 3e7, 0.004, 6),
            pool("UNI", "USDC", 3000, law, 1e6, 1e7, 8.0, 5),
            pool("UNI", "WETH", 10000, switch_at_40, 4e5, 6e6, 0.004, 4),
            // only one pool trades PEPE, so the token-count rule drops it
            pool("PEPE", "WETH", 10000, law, 2e5, 3e6, 1e-9, 4),
        ];
        let mut thin = pool("LINK", "WETH", 3000, law, 1e5, 2e6, 0.005, 1);
        thin.warmup_swaps = 20;
        pools.push(thin);
        let archetype = |name: &str, pools: &[&str], burst: [usize; 2], gap: [i64; 2], usd: f64, router: &str| Archetype {
            name: name.into(),
            pools: pools.iter().map(|p| p.to_string()).collect(),
            burst_size: burst,
            gap_secs: gap,
            usd_scale: usd,
            router: router.into(),
        };
        SyntheticSpec {
            seed: 7,
            start: "2022-01-03".into(),
            days: 90,
            warmup_days: 5,
            noise: 0.05,
            pools,
            archetypes: vec![
                archetype(
                    "stable-router",
                    &["USDC-USDT/100", "DAI-USDC/100", "DAI-USDT/500"],
                    [3, 5],
                    [5, 40],
                    50_000.0,
                    "router-v3",
                ),
                archetype(
                    "eth-ecosystem",
                    &["USDC-WETH/500", "WETH-USDT/3000", "DAI-WETH/3000", "WBTC-WETH/500"],
                    [2, 4],
                    [60, 300],
                    5_000.0,
                    "router-universal",
                ),
                archetype(
                    "exotic-hunter",
                    &["SHIB-WETH/10000", "SHIB-USDC/10000", "UNI-WETH/3000", "UNI-USDC/3000"],
                    [1, 3],
                    [300, 900],
                    800.0,
                    "aggregator",
                ),
            ],
            lts_per_archetype: 20,
            lt_swaps: [400, 440],
            arbitrage_per_day: 6,
            lp_agents: 12,
        }
    }
}

impl SyntheticSpec {
    /// A trader-free spec with one lawful, one noisy and one switching pool,
    /// for checking the crypto-law fits in isolation.
    pub fn law_fixture(seed: u64, days: usize, switch_day: usize, noise_level: f64) -> Self {
        let base = SyntheticSpec::default();
        let mut pools: Vec<SynthPool> = base.pools[..].iter().filter(|p| {
            matches!(p.id().as_str(), "WBTC-WETH/3000" | "USDC-USDT/100" | "UNI-WETH/10000")
        }).cloned().collect();
        for p in pools.iter_mut() {
            if let Regime::Switch { day, .. } = &mut p.regime {
                *day = switch_day;
            }
        }
        SyntheticSpec {
            seed,
            days,
            noise: noise_level,
            pools,
            archetypes: Vec::new(),
            lts_per_archetype: 0,
            arbitrage_per_day: 0,
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if parse_day(&self.start).is_none() {
            return bad(format!("start `{}` is not a YYYY-MM-DD date", self.start));
        }
        if self.days == 0 {
            return bad("days must be positive".into());
        }
        if !(self.noise >= 0.0) {
            return bad(format!("noise must be non-negative, got {}", self.noise));
        }
        if self.lt_swaps[0] < 2 || self.lt_swaps[0] > self.lt_swaps[1] {
            return bad("lt_swaps must be an ascending range starting at 2 or more".into());
        }
        let mut ids = BTreeMap::new();
        for p in &self.pools {
            FeeTier::try_from(p.fee_tier).map_err(Error::Config)?;
            if !(p.tvl > 0.0) || !(p.base_rate > 0.0) || !(p.regime.r_pool() > 0.0) {
                return bad(format!("pool {} needs positive tvl, rate and slope", p.id()));
            }
            if ids.insert(p.id(), ()).is_some() {
                return bad(format!("duplicate pool {}", p.id()));
            }
        }
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for a in &self.archetypes {
            if a.pools.is_empty() || a.burst_size[0] == 0 || a.burst_size[0] > a.burst_size[1] {
                return bad(format!("archetype {} has an empty alphabet or burst range", a.name));
            }
            if a.gap_secs[0] < 0 || a.gap_secs[0] > a.gap_secs[1] || !(a.usd_scale > 0.0) {
                return bad(format!("archetype {} has an invalid gap range or scale", a.name));
            }
            for p in &a.pools {
                if !ids.contains_key(&PoolId(p.clone())) {
                    return bad(format!("archetype {} uses unknown pool {p}", a.name));
                }
                if let Some(other) = owner.insert(p, &a.name) {
                    return bad(format!("pool {p} is shared by archetypes {other} and {}", a.name));
                }
            }
        }
        if self.lp_agents == 0 {
            return bad("need at least one liquidity provider".into());
        }
        Ok(())
    }

    pub fn start_day(&self) -> i64 {
        parse_day(&self.start).expect("validated")
    }

    /// The analysed period `[start, start + days)`.
    pub fn window(&self, label: &str) -> TimeWindow {
        let s = self.start_day() * SECONDS_PER_DAY;
        TimeWindow {
            label: label.into(),
            start: s,
            end: s + self.days as i64 * SECONDS_PER_DAY,
        }
    }

    pub fn token_classes() -> TokenClasses {
        TokenClasses::new(["USDC", "USDT", "DAI"], ["WETH", "WBTC"]).expect("disjoint")
    }
}

/// Ground truth written next to the generated files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub start: String,
    pub days: usize,
    pub archetypes: Vec<String>,
    /// Trader id to archetype index.
    pub lt_archetype: BTreeMap<String, usize>,
    pub pools: BTreeMap<String, PlantedPool>,
    pub events: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedPool {
    pub class: String,
    pub regime: Regime,
    pub txn_count: u64,
}

pub const POOLS_FILE: &str = "pools.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const TOKEN_CLASSES_FILE: &str = "token_classes.json";
pub const CALENDAR_FILE: &str = "calendar.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

struct PlannedSwap {
    ts: i64,
    txn_id: String,
    log_index: u32,
    origin: AgentId,
    sender: AgentId,
    /// Relative USD weight before the day's volume is imposed.
    weight: f64,
    /// +1 when token1 flows into the pool.
    direction: f64,
}

/// Builds the event log and ground truth in memory.
pub fn generate(spec: &SyntheticSpec) -> Result<(EventLog, SynthManifest)> {
    spec.validate()?;
    let seed = spec.seed;
    let day0 = spec.start_day();
    let t_start = day0 * SECONDS_PER_DAY;
    let t_origin = t_start - spec.warmup_days as i64 * SECONDS_PER_DAY;
    let index: BTreeMap<PoolId, usize> = spec.pools.iter().enumerate().map(|(i, p)| (p.id(), i)).collect();
    let mut planned: Vec<Vec<Vec<PlannedSwap>>> = spec
        .pools
        .iter()
        .map(|_| (0..spec.days).map(|_| Vec::new()).collect())
        .collect();

    // planted traders
    let mut lt_archetype = BTreeMap::new();
    let span = spec.days as i64 * SECONDS_PER_DAY;
    for _ in 0..spec.lts_per_archetype {
        for (a, arch) in spec.archetypes.iter().enumerate() {
            let n_lt = lt_archetype.len();
            let id = format!("lt{n_lt:04}");
            lt_archetype.insert(id.clone(), a);
            let mut rng = crate::stream!(seed, "trader", id.as_str());
            let target = rng.random_range(spec.lt_swaps[0]..=spec.lt_swaps[1]);
            let mut made = 0;
            let mut burst = 0;
            while made < target {
                let size = rng.random_range(arch.burst_size[0]..=arch.burst_size[1]).min(target - made);
                let room = span - (size as i64) * arch.gap_secs[1] - 1;
                let mut ts = rng.random_range(0..room.max(1));
                for k in 0..size {
                    if k > 0 {
                        ts += rng.random_range(arch.gap_secs[0]..=arch.gap_secs[1]);
                    }
                    let p = index[&PoolId(arch.pools[rng.random_range(0..arch.pools.len())].clone())];
                    let day = (ts / SECONDS_PER_DAY) as usize;
                    planned[p][day].push(PlannedSwap {
                        ts: t_start + ts,
                        txn_id: format!("{id}-{burst}-{k}"),
                        log_index: 0,
                        origin: AgentId(id.clone()),
                        sender: AgentId(arch.router.clone()),
                        weight: arch.usd_scale * rng.random_range(0.5..1.5),
                        direction: if rng.random::<bool>() { 1.0 } else { -1.0 },
                    });
                }
                made += size;
                burst += 1;
            }
        }
    }

    // two-leg arbitrage across pools sharing a token
    let mut pairs = Vec::new();
    for (i, p) in spec.pools.iter().enumerate() {
        for (j, q) in spec.pools.iter().enumerate() {
            if i != j {
                for t in [&p.token0, &p.token1] {
                    if t == &q.token0 || t == &q.token1 {
                        pairs.push((i, j, t.clone()));
                    }
                }
            }
        }
    }
    if !pairs.is_empty() {
        for day in 0..spec.days {
            let mut rng = crate::stream!(seed, "arbitrage", day);
            for k in 0..spec.arbitrage_per_day {
                let (buy, sell, token) = &pairs[rng.random_range(0..pairs.len())];
                let ts = t_start + day as i64 * SECONDS_PER_DAY + rng.random_range(0..SECONDS_PER_DAY);
                let txn = format!("arb-{day}-{k}");
                let origin = AgentId(format!("arb-{day}-{k}"));
                let weight = 20_000.0 * rng.random_range(0.5..1.5);
                for (leg, &p) in [*buy, *sell].iter().enumerate() {
                    // leg 0 takes `token` out of the pool, leg 1 puts it in
                    let token_is_1 = &spec.pools[p].token1 == token;
                    let into_pool = leg == 1;
                    let direction = if token_is_1 == into_pool { 1.0 } else { -1.0 };
                    planned[p][day].push(PlannedSwap {
                        ts,
                        txn_id: txn.clone(),
                        log_index: leg as u32,
                        origin: origin.clone(),
                        sender: AgentId("arb-contract".into()),
                        weight,
                        direction,
                    });
                }
            }
        }
    }

    let lps: Vec<AgentId> = (0..spec.lp_agents).map(|i| AgentId(format!("lp{i:02}"))).collect();
    let classes = SyntheticSpec::token_classes();
    let mut log = EventLog::default();
    let mut planted = BTreeMap::new();
    for (pi, (p, days)) in spec.pools.iter().zip(planned).enumerate() {
        let id = p.id();
        let fee = FeeTier::try_from(p.fee_tier).map_err(Error::Config)?;
        let n_fee = 1.0 / p.fee_tier as f64;
        let mut count = 0u64;

        // warm-up activity and the opening deposit
        log.liquidity.push(LiquidityEvent {
            txn_id: format!("{id}-open"),
            log_index: 0,
            ts: t_origin,
            pool: id.clone(),
            origin: lps[pi % lps.len()].clone(),
            sender: AgentId("position-manager".into()),
            kind: LiquidityKind::Mint,
            amount_usd: p.tvl,
        });
        count += 1;
        let warm_span = (t_start - t_origin - 1).max(1);
        for i in 0..p.warmup_swaps {
            let ts = t_origin + 1 + (i as i64 * warm_span) / p.warmup_swaps as i64;
            log.swaps.push(swap(&id, ts, format!("{id}-w{i}"), 0, AgentId(format!("w-{pi}-{i}")), AgentId("router-v3".into()), 1000.0, 1.0, p.base_rate));
            count += 1;
        }

        let mut tvl = p.tvl;
        for (d, mut list) in days.into_iter().enumerate() {
            let mut drng = crate::stream!(seed, "pool-day", id.as_str(), d);
            let day_start = t_start + d as i64 * SECONDS_PER_DAY;
            for i in 0..p.background_per_day {
                list.push(PlannedSwap {
                    ts: day_start + drng.random_range(0..SECONDS_PER_DAY),
                    txn_id: format!("{id}-{d}-{i}"),
                    log_index: 0,
                    origin: AgentId(format!("bg-{pi}-{d}-{i}")),
                    sender: AgentId(["router-v3", "router-universal", "aggregator"][i % 3].into()),
                    weight: 2_000.0 * drng.random_range(0.5..1.5),
                    direction: if drng.random::<bool>() { 1.0 } else { -1.0 },
                });
            }
            list.sort_by(|a, b| (a.ts, &a.txn_id, a.log_index).cmp(&(b.ts, &b.txn_id, b.log_index)));

            let target_tvl = p.tvl * drng.random_range(0.5..1.5);
            let spread = TYPICAL_SPREAD * drng.random_range(0.5..1.5);
            let sigma = p.base_rate * spread;
            let volume = if p.regime.lawful_on(d) {
                let eps: f64 = drng.sample(StandardNormal);
                let factor = (1.0 + spec.noise * eps).max(0.05);
                p.regime.r_pool() * n_fee * target_tvl * sigma * factor
            } else {
                p.regime.r_pool() * n_fee * p.tvl * p.base_rate * TYPICAL_SPREAD * drng.random_range(0.5..1.5)
            };

            let z = standard_scores(&mut drng, list.len());
            let total_weight: f64 = list.iter().map(|s| s.weight).sum();
            for (s, z) in list.into_iter().zip(z) {
                let usd = volume * s.weight / total_weight;
                let rate = p.base_rate + sigma * z;
                count += 1;
                let mut ev = swap(&id, s.ts, s.txn_id, s.log_index, s.origin, s.sender, usd, s.direction, rate);
                ev.recipient = ev.origin.clone();
                log.swaps.push(ev);
            }

            // liquidity: an optional round trip, then the move to the day-end target
            let lp_sender = AgentId("position-manager".into());
            if drng.random::<f64>() < 0.5 {
                let size = p.tvl * drng.random_range(0.01..0.1);
                let ts = day_start + drng.random_range(0..SECONDS_PER_DAY / 2);
                let who = lps[drng.random_range(0..lps.len())].clone();
                for (k, kind) in [LiquidityKind::Mint, LiquidityKind::Burn].into_iter().enumerate() {
                    log.liquidity.push(LiquidityEvent {
                        txn_id: format!("{id}-{d}-rt{k}"),
                        log_index: 0,
                        ts: ts + k as i64 * 600,
                        pool: id.clone(),
                        origin: who.clone(),
                        sender: lp_sender.clone(),
                        kind,
                        amount_usd: size,
                    });
                    count += 1;
                }
            }
            let delta = target_tvl - tvl;
            if delta != 0.0 {
                log.liquidity.push(LiquidityEvent {
                    txn_id: format!("{id}-{d}-lp"),
                    log_index: 0,
                    ts: day_start + SECONDS_PER_DAY / 2 + drng.random_range(0..SECONDS_PER_DAY / 2),
                    pool: id.clone(),
                    origin: lps[drng.random_range(0..lps.len())].clone(),
                    sender: lp_sender,
                    kind: if delta > 0.0 { LiquidityKind::Mint } else { LiquidityKind::Burn },
                    amount_usd: delta.abs(),
                });
                count += 1;
            }
            tvl = target_tvl;
        }

        let meta = PoolMeta {
            pool_id: id.clone(),
            token0: p.token0.clone(),
            token1: p.token1.clone(),
            fee_tier: fee,
            created_at: t_origin,
            txn_count: count,
        };
        planted.insert(
            id.0.clone(),
            PlantedPool {
                class: classify_pool(&meta, &classes).name().into(),
                regime: p.regime.clone(),
                txn_count: count,
            },
        );
        log.pools.insert(id, meta);
    }
    log.sort();
    let manifest = SynthManifest {
        seed,
        start: spec.start.clone(),
        days: spec.days,
        archetypes: spec.archetypes.iter().map(|a| a.name.clone()).collect(),
        lt_archetype,
        pools: planted,
        events: log.swaps.len() + log.liquidity.len(),
    };
    Ok((log, manifest))
}

#[allow(clippy::too_many_arguments)]
fn swap(pool: &PoolId, ts: i64, txn_id: String, log_index: u32, origin: AgentId, sender: AgentId, usd: f64, direction: f64, rate: f64) -> SwapEvent {
    // token1 is priced at one dollar; token0 moves the other way at `rate`
    let amount1 = direction * usd;
    SwapEvent {
        txn_id,
        log_index,
        ts,
        pool: pool.clone(),
        recipient: origin.clone(),
        origin,
        sender,
        amount_usd: usd,
        amount0: -amount1 * rate,
        amount1,
        exec_rate: rate,
    }
}

/// `n` draws rescaled to population mean 0 and standard deviation 1
/// (all zeros when `n < 2`).
fn standard_scores<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    loop {
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mean = z.iter().sum::<f64>() / n as f64;
        let sd = (z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if sd > 1e-9 {
            return z.into_iter().map(|x| (x - mean) / sd).collect();
        }
    }
}

/// Weekends closed; weekdays up or down at random.
pub fn market_calendar(spec: &SyntheticSpec) -> BTreeMap<i64, MarketState> {
    let first = spec.start_day() - spec.warmup_days as i64;
    let mut rng = crate::stream!(spec.seed, "calendar");
    (first..spec.start_day() + spec.days as i64)
        .map(|day| {
            // day 0 (1970-01-01) was a Thursday
            let weekday = (day + 3).rem_euclid(7);
            let state = if weekday >= 5 {
                MarketState::Closed
            } else if rng.random::<bool>() {
                MarketState::Up
            } else {
                MarketState::Down
            };
            (day, state)
        })
        .collect()
}

/// Paths of a generated fixture.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthFiles {
    pub pools: PathBuf,
    pub events: PathBuf,
    pub token_classes: PathBuf,
    pub calendar: PathBuf,
    pub manifest: PathBuf,
}

impl SynthFiles {
    pub fn in_dir(dir: &Path) -> Self {
        SynthFiles {
            pools: dir.join(POOLS_FILE),
            events: dir.join(EVENTS_FILE),
            token_classes: dir.join(TOKEN_CLASSES_FILE),
            calendar: dir.join(CALENDAR_FILE),
            manifest: dir.join(MANIFEST_FILE),
        }
    }
}

/// Writes pool metadata, events, token classes, a market calendar and the
/// ground-truth manifest into `dir`.
pub fn generate_synthetic(spec: &SyntheticSpec, dir: &Path) -> Result<(SynthFiles, SynthManifest)> {
    let (log, manifest) = generate(spec)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = SynthFiles::in_dir(dir);
    log.write_pool_meta(&files.pools)?;
    log.write_events(&files.events)?;
    let classes = serde_json::to_string_pretty(&SyntheticSpec::token_classes())?;
    fs::write(&files.token_classes, classes + "\n").map_err(|e| Error::io(&files.token_classes, e))?;
    let mut cal = String::from("date,state\n");
    for (day, state) in market_calendar(spec) {
        let s = match state {
            MarketState::Up => "up",
            MarketState::Down => "down",
            MarketState::Closed => "closed",
        };
        cal.push_str(&format!("{},{s}\n", day_label(day)));
    }
    fs::write(&files.calendar, cal).map_err(|e| Error::io(&files.calendar, e))?;
    let m = serde_json::to_string_pretty(&manifest)?;
    fs::write(&files.manifest, m + "\n").map_err(|e| Error::io(&files.manifest, e))?;
    Ok((files, manifest))
}
