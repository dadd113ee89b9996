//! Pool metadata, swap/mint/burn event streams, and the series derived from
//! them (proxy TVL, exchange rate, pool class).
//!
//! Event files are UTF-8 JSON lines. Every record carries `type`, `txn_id`,
//! `log_index`, `ts`, `pool`, `origin`, `sender` and `amount_usd`; swaps add
//! `recipient`, `amount0`, `amount1` and `exec_rate`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: i64 = 86_400;

/// UTC day index (days since the Unix epoch) of a timestamp.
pub fn day_of(ts: i64) -> i64 {
    ts.div_euclid(SECONDS_PER_DAY)
}

/// `YYYY-MM-DD` rendering of a day index.
pub fn day_label(day: i64) -> String {
    chrono::DateTime::from_timestamp(day * SECONDS_PER_DAY, 0)
        .map(|d| d.format("%Y-%m-%d").to_string())
        .unwrap_or_else(|| format!("day{day}"))
}

/// Parses `YYYY-MM-DD` into a day index.
pub fn parse_day(s: &str) -> Option<i64> {
    let date = chrono::NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()?;
    let secs = date.and_hms_opt(0, 0, 0)?.and_utc().timestamp();
    Some(day_of(secs))
}

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }
    };
}

string_id!(PoolId);
string_id!(AgentId);

/// Per-swap fee in hundredths of a basis point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct FeeTier(u32);

impl FeeTier {
    pub const ALL: [FeeTier; 4] = [FeeTier(100), FeeTier(500), FeeTier(3000), FeeTier(10000)];

    pub fn value(self) -> u32 {
        self.0
    }

    /// Position in [`FeeTier::ALL`].
    pub fn index(self) -> usize {
        FeeTier::ALL.iter().position(|t| *t == self).unwrap_or(0)
    }
}

impl TryFrom<u32> for FeeTier {
    type Error = String;

    fn try_from(v: u32) -> std::result::Result<Self, String> {
        match v {
            100 | 500 | 3000 | 10000 => Ok(FeeTier(v)),
            _ => Err(format!("fee tier {v} is not one of 100, 500, 3000, 10000")),
        }
    }
}

impl From<FeeTier> for u32 {
    fn from(t: FeeTier) -> u32 {
        t.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolMeta {
    #[serde(rename = "pool")]
    pub pool_id: PoolId,
    pub token0: String,
    pub token1: String,
    pub fee_tier: FeeTier,
    pub created_at: i64,
    pub txn_count: u64,
}

impl PoolMeta {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.token0 == self.token1 {
            return Err(format!(
                "pool {} trades {} against itself",
                self.pool_id, self.token0
            ));
        }
        Ok(())
    }

    pub fn tokens(&self) -> [&str; 2] {
        [&self.token0, &self.token1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwapEvent {
    pub txn_id: String,
    pub log_index: u32,
    pub ts: i64,
    pub pool: PoolId,
    pub origin: AgentId,
    pub sender: AgentId,
    pub recipient: AgentId,
    pub amount_usd: f64,
    /// Token0 received by the pool (negative when the pool paid token0 out).
    pub amount0: f64,
    pub amount1: f64,
    /// Token0 per token1.
    pub exec_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LiquidityKind {
    Mint,
    Burn,
}

impl LiquidityKind {
    pub fn sign(self) -> f64 {
        match self {
            LiquidityKind::Mint => 1.0,
            LiquidityKind::Burn => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiquidityEvent {
    pub txn_id: String,
    pub log_index: u32,
    pub ts: i64,
    pub pool: PoolId,
    pub origin: AgentId,
    pub sender: AgentId,
    pub kind: LiquidityKind,
    pub amount_usd: f64,
}

/// Half-open time interval `[start, end)` in UTC seconds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub label: String,
    pub start: i64,
    pub end: i64,
}

impl TimeWindow {
    pub fn new(label: impl Into<String>, start: i64, end: i64) -> Result<Self> {
        let w = TimeWindow {
            label: label.into(),
            start,
            end,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.start >= self.end {
            return Err(Error::Config(format!(
                "window {} has start {} >= end {}",
                self.label, self.start, self.end
            )));
        }
        Ok(())
    }

    pub fn contains(&self, ts: i64) -> bool {
        ts >= self.start && ts < self.end
    }

    /// UTC day indices touched by the window.
    pub fn days(&self) -> std::ops::RangeInclusive<i64> {
        day_of(self.start)..=day_of(self.end - 1)
    }

    pub fn day_count(&self) -> usize {
        (day_of(self.end - 1) - day_of(self.start) + 1) as usize
    }

    pub fn overlaps(&self, other: &TimeWindow) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PoolClass {
    #[serde(rename = "SS")]
    Ss,
    #[serde(rename = "ECOSYS")]
    Ecosys,
    #[serde(rename = "EXOTIC")]
    Exotic,
}

impl PoolClass {
    pub const ALL: [PoolClass; 3] = [PoolClass::Ss, PoolClass::Ecosys, PoolClass::Exotic];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PoolClass::Ss => "SS",
            PoolClass::Ecosys => "ECOSYS",
            PoolClass::Exotic => "EXOTIC",
        }
    }
}

/// Stablecoin and BTC/ETH-pegged symbol sets.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenClasses {
    pub stable: BTreeSet<String>,
    pub pegged: BTreeSet<String>,
}

impl TokenClasses {
    pub fn new<S: Into<String>>(
        stable: impl IntoIterator<Item = S>,
        pegged: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let classes = TokenClasses {
            stable: stable.into_iter().map(Into::into).collect(),
            pegged: pegged.into_iter().map(Into::into).collect(),
        };
        classes.validate()?;
        Ok(classes)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(sym) = self.stable.intersection(&self.pegged).next() {
            return Err(Error::Config(format!(
                "token {sym} is listed as both stable and pegged"
            )));
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let classes: TokenClasses = serde_json::from_str(&text)?;
        classes.validate()?;
        Ok(classes)
    }
}

pub fn classify_pool(meta: &PoolMeta, classes: &TokenClasses) -> PoolClass {
    let stable = |t: &str| classes.stable.contains(t);
    let ecosys = |t: &str| classes.stable.contains(t) || classes.pegged.contains(t);
    if stable(&meta.token0) && stable(&meta.token1) {
        PoolClass::Ss
    } else if ecosys(&meta.token0) && ecosys(&meta.token1) {
        PoolClass::Ecosys
    } else {
        PoolClass::Exotic
    }
}

/// Right-continuous step function of cumulative mint minus burn USD.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TvlSeries {
    pub points: Vec<(i64, f64)>,
}

impl TvlSeries {
    /// Value of the last point at or before `t`; 0 before the first event.
    pub fn value_at(&self, t: i64) -> f64 {
        let idx = self.points.partition_point(|(ts, _)| *ts <= t);
        if idx == 0 {
            0.0
        } else {
            self.points[idx - 1].1
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|(_, v)| *v)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    pub pools: BTreeMap<PoolId, PoolMeta>,
    pub swaps: Vec<SwapEvent>,
    pub liquidity: Vec<LiquidityEvent>,
}

/// Counts gathered while reading a line-oriented input file.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IngestReport {
    pub lines: usize,
    pub records: usize,
    /// 1-based line numbers that could not be parsed.
    pub malformed: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum EventRecord {
    Swap {
        txn_id: String,
        log_index: u32,
        ts: i64,
        pool: PoolId,
        origin: AgentId,
        sender: AgentId,
        recipient: AgentId,
        amount_usd: f64,
        amount0: f64,
        amount1: f64,
        exec_rate: f64,
    },
    Mint {
        txn_id: String,
        log_index: u32,
        ts: i64,
        pool: PoolId,
        origin: AgentId,
        sender: AgentId,
        amount_usd: f64,
    },
    Burn {
        txn_id: String,
        log_index: u32,
        ts: i64,
        pool: PoolId,
        origin: AgentId,
        sender: AgentId,
        amount_usd: f64,
    },
}

enum Event {
    Swap(SwapEvent),
    Liquidity(LiquidityEvent),
}

impl EventRecord {
    fn into_event(self) -> std::result::Result<Event, String> {
        let liquidity = |kind, txn_id, log_index, ts, pool, origin, sender, amount_usd: f64| {
            if !(amount_usd >= 0.0 && amount_usd.is_finite()) {
                return Err(format!("amount_usd must be non-negative, got {amount_usd}"));
            }
            Ok(Event::Liquidity(LiquidityEvent {
                txn_id,
                log_index,
                ts,
                pool,
                origin,
                sender,
                kind,
                amount_usd,
            }))
        };
        match self {
            EventRecord::Swap {
                txn_id,
                log_index,
                ts,
                pool,
                origin,
                sender,
                recipient,
                amount_usd,
                amount0,
                amount1,
                exec_rate,
            } => {
                if !(amount_usd >= 0.0 && amount_usd.is_finite()) {
                    return Err(format!("amount_usd must be non-negative, got {amount_usd}"));
                }
                if !(amount0 * amount1 < 0.0) {
                    return Err(format!(
                        "amount0 ({amount0}) and amount1 ({amount1}) must have opposite signs"
                    ));
                }
                if !(exec_rate > 0.0 && exec_rate.is_finite()) {
                    return Err(format!("exec_rate must be positive, got {exec_rate}"));
                }
                Ok(Event::Swap(SwapEvent {
                    txn_id,
                    log_index,
                    ts,
                    pool,
                    origin,
                    sender,
                    recipient,
                    amount_usd,
                    amount0,
                    amount1,
                    exec_rate,
                }))
            }
            EventRecord::Mint {
                txn_id,
                log_index,
                ts,
                pool,
                origin,
                sender,
                amount_usd,
            } => liquidity(
                LiquidityKind::Mint,
                txn_id,
                log_index,
                ts,
                pool,
                origin,
                sender,
                amount_usd,
            ),
            EventRecord::Burn {
                txn_id,
                log_index,
                ts,
                pool,
                origin,
                sender,
                amount_usd,
            } => liquidity(
                LiquidityKind::Burn,
                txn_id,
                log_index,
                ts,
                pool,
                origin,
                sender,
                amount_usd,
            ),
        }
    }

    fn from_swap(s: &SwapEvent) -> Self {
        EventRecord::Swap {
            txn_id: s.txn_id.clone(),
            log_index: s.log_index,
            ts: s.ts,
            pool: s.pool.clone(),
            origin: s.origin.clone(),
            sender: s.sender.clone(),
            recipient: s.recipient.clone(),
            amount_usd: s.amount_usd,
            amount0: s.amount0,
            amount1: s.amount1,
            exec_rate: s.exec_rate,
        }
    }

    fn from_liquidity(l: &LiquidityEvent) -> Self {
        let (txn_id, log_index, ts, pool, origin, sender, amount_usd) = (
            l.txn_id.clone(),
            l.log_index,
            l.ts,
            l.pool.clone(),
            l.origin.clone(),
            l.sender.clone(),
            l.amount_usd,
        );
        match l.kind {
            LiquidityKind::Mint => EventRecord::Mint {
                txn_id,
                log_index,
                ts,
                pool,
                origin,
                sender,
                amount_usd,
            },
            LiquidityKind::Burn => EventRecord::Burn {
                txn_id,
                log_index,
                ts,
                pool,
                origin,
                sender,
                amount_usd,
            },
        }
    }
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l)))
}

/// Reads the pool metadata file (one JSON object per line).
pub fn read_pool_meta(path: &Path) -> Result<(Vec<PoolMeta>, IngestReport)> {
    let mut report = IngestReport::default();
    let mut metas = Vec::new();
    let mut seen = HashSet::new();
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        report.lines += 1;
        if line.trim().is_empty() {
            continue;
        }
        let meta: PoolMeta = match serde_json::from_str(&line) {
            Ok(m) => m,
            Err(_) => {
                report.malformed.push(line_no);
                continue;
            }
        };
        let reject = |reason: String| Error::Record {
            path: path.to_owned(),
            line: line_no,
            reason,
        };
        meta.validate().map_err(reject)?;
        if !seen.insert(meta.pool_id.clone()) {
            return Err(reject(format!("duplicate pool {}", meta.pool_id)));
        }
        report.records += 1;
        metas.push(meta);
    }
    Ok((metas, report))
}

/// Reads an event file against a set of declared pools, returning a sorted,
/// validated log.
pub fn ingest_events(
    path: &Path,
    pools: impl IntoIterator<Item = PoolMeta>,
) -> Result<(EventLog, IngestReport)> {
    let mut log = EventLog {
        pools: pools.into_iter().map(|m| (m.pool_id.clone(), m)).collect(),
        ..EventLog::default()
    };
    let mut report = IngestReport::default();
    let mut keys = HashSet::new();
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        report.lines += 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: EventRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(_) => {
                report.malformed.push(line_no);
                continue;
            }
        };
        let reject = |reason: String| Error::Record {
            path: path.to_owned(),
            line: line_no,
            reason,
        };
        let event = record.into_event().map_err(reject)?;
        let (pool, key) = match &event {
            Event::Swap(s) => (&s.pool, (s.txn_id.clone(), s.log_index)),
            Event::Liquidity(l) => (&l.pool, (l.txn_id.clone(), l.log_index)),
        };
        if !log.pools.contains_key(pool) {
            return Err(reject(format!("undeclared pool {pool}")));
        }
        if !keys.insert(key.clone()) {
            return Err(reject(format!(
                "duplicate (txn_id, log_index) = ({}, {})",
                key.0, key.1
            )));
        }
        match event {
            Event::Swap(s) => log.swaps.push(s),
            Event::Liquidity(l) => log.liquidity.push(l),
        }
        report.records += 1;
    }
    log.sort();
    Ok((log, report))
}

impl EventLog {
    /// Loads pool metadata and events. Malformed lines of both files are
    /// merged into the returned report.
    pub fn load(pools_path: &Path, events_path: &Path) -> Result<(EventLog, IngestReport)> {
        let (metas, meta_report) = read_pool_meta(pools_path)?;
        let (log, mut report) = ingest_events(events_path, metas)?;
        report.lines += meta_report.lines;
        report.records += meta_report.records;
        report.malformed.extend(meta_report.malformed);
        Ok((log, report))
    }

    /// Sorts both event sequences by `(ts, txn_id, log_index)`.
    pub fn sort(&mut self) {
        self.swaps
            .sort_by(|a, b| (a.ts, &a.txn_id, a.log_index).cmp(&(b.ts, &b.txn_id, b.log_index)));
        self.liquidity
            .sort_by(|a, b| (a.ts, &a.txn_id, a.log_index).cmp(&(b.ts, &b.txn_id, b.log_index)));
    }

    pub fn meta(&self, pool: &PoolId) -> Result<&PoolMeta> {
        self.pools
            .get(pool)
            .ok_or_else(|| Error::UnknownPool(pool.to_string()))
    }

    pub fn swaps_of<'a>(&'a self, pool: &'a PoolId) -> impl Iterator<Item = &'a SwapEvent> + 'a {
        self.swaps.iter().filter(move |s| &s.pool == pool)
    }

    pub fn liquidity_of<'a>(
        &'a self,
        pool: &'a PoolId,
    ) -> impl Iterator<Item = &'a LiquidityEvent> + 'a {
        self.liquidity.iter().filter(move |l| &l.pool == pool)
    }

    pub fn swaps_in<'a>(
        &'a self,
        pool: &'a PoolId,
        w: &'a TimeWindow,
    ) -> impl Iterator<Item = &'a SwapEvent> + 'a {
        self.swaps_of(pool).filter(move |s| w.contains(s.ts))
    }

    pub fn liquidity_in<'a>(
        &'a self,
        pool: &'a PoolId,
        w: &'a TimeWindow,
    ) -> impl Iterator<Item = &'a LiquidityEvent> + 'a {
        self.liquidity_of(pool).filter(move |l| w.contains(l.ts))
    }

    /// Writes events back out as JSON lines, merged in `(ts, txn_id, log_index)` order.
    pub fn write_events(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut records: Vec<((i64, &str, u32), EventRecord)> = self
            .swaps
            .iter()
            .map(|s| ((s.ts, s.txn_id.as_str(), s.log_index), EventRecord::from_swap(s)))
            .chain(self.liquidity.iter().map(|l| {
                (
                    (l.ts, l.txn_id.as_str(), l.log_index),
                    EventRecord::from_liquidity(l),
                )
            }))
            .collect();
        records.sort_by(|a, b| a.0.cmp(&b.0));
        for (_, rec) in records {
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_pool_meta(&self, path: &Path) -> Result<()> {
        write_pool_meta(self.pools.values(), path)
    }
}

pub fn write_pool_meta<'a>(metas: impl IntoIterator<Item = &'a PoolMeta>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for meta in metas {
        serde_json::to_writer(&mut out, meta)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn proxy_tvl_series(log: &EventLog, pool: &PoolId) -> Result<TvlSeries> {
    log.meta(pool)?;
    let mut total = 0.0;
    let points = log
        .liquidity_of(pool)
        .map(|l| {
            total += l.kind.sign() * l.amount_usd;
            (l.ts, total)
        })
        .collect();
    Ok(TvlSeries { points })
}

/// Execution rates of the pool's swaps inside the window, in time order.
pub fn exchange_rate_series(log: &EventLog, pool: &PoolId, w: &TimeWindow) -> Vec<f64> {
    log.swaps_in(pool, w).map(|s| s.exec_rate).collect()
}
