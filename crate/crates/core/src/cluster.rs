//! k-means++ with elbow selection, the adjusted Rand index, and behavioural
//! profiles of clustered liquidity takers.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{day_of, parse_day, AgentId, EventLog, FeeTier, PoolClass, PoolId, TimeWindow};

pub const MAX_LLOYD_ITERATIONS: usize = 300;
pub const DEFAULT_RESTARTS: usize = 5;
pub const DEFAULT_ELBOW_THRESHOLD: f64 = 0.10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Clustering {
    pub labels: Vec<usize>,
    pub k: usize,
    pub inertia: f64,
    pub centroids: Vec<Vec<f64>>,
    /// Inertia after every assignment step, ending with the final value.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn validate_points(points: &[Vec<f64>], k: usize) -> Result<usize> {
    let d = points.first().map(|p| p.len()).unwrap_or(0);
    if points.is_empty() || d == 0 {
        return Err(Error::InvalidInput("need at least one point of dimension >= 1".into()));
    }
    if k == 0 || k > points.len() {
        return Err(Error::InvalidInput(format!(
            "k = {k} must lie in [1, {}]",
            points.len()
        )));
    }
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::InvalidInput("points have differing dimensions".into()));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite coordinate".into()));
    }
    Ok(d)
}

/// D²-weighted seeding.
fn seed_centroids<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if *d > 0.0 && target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|d| *d > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn cost(points: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum()
}

/// Lloyd iterations from the given centroids until the assignment stops
/// changing.
fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> Clustering {
    let k = centroids.len();
    let d = points[0].len();
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_LLOYD_ITERATIONS {
        iterations += 1;
        trace.push(cost(points, &labels, &centroids));

        let mut sizes = vec![0usize; k];
        for &l in &labels {
            sizes[l] += 1;
        }
        // Repair empty clusters with the point farthest from its centroid.
        while let Some(empty) = sizes.iter().position(|&s| s == 0) {
            let far = (0..points.len())
                .filter(|&i| sizes[labels[i]] > 1)
                .max_by(|&a, &b| {
                    sq_dist(&points[a], &centroids[labels[a]])
                        .total_cmp(&sq_dist(&points[b], &centroids[labels[b]]))
                        .then(b.cmp(&a))
                })
                .expect("k <= n leaves a cluster with two points");
            sizes[labels[far]] -= 1;
            labels[far] = empty;
            sizes[empty] = 1;
        }
        let mut sums = vec![vec![0.0; d]; k];
        for (p, &l) in points.iter().zip(&labels) {
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for (c, (s, &n)) in centroids.iter_mut().zip(sums.iter().zip(&sizes)) {
            *c = s.iter().map(|x| x / n as f64).collect();
        }

        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    let inertia = cost(points, &labels, &centroids);
    trace.push(inertia);
    debug_assert!(trace
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12));
    Clustering {
        labels,
        k,
        inertia,
        centroids,
        inertia_trace: trace,
        iterations,
    }
}

/// One k-means++ run: D² seeding from a seeded stream, then Lloyd iterations
/// (at most 300).
pub fn kmeans_pp(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Clustering> {
    validate_points(points, k)?;
    let mut rng = crate::stream!(seed, "kmeans++", k);
    let centroids = seed_centroids(points, k, &mut rng);
    Ok(lloyd(points, centroids))
}

/// Lowest-inertia clustering over `restarts` seeded runs, plus (when given) a
/// warm start from a `k - 1` solution extended by its worst-fit point.
pub fn kmeans_best(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    restarts: usize,
    previous: Option<&Clustering>,
) -> Result<Clustering> {
    validate_points(points, k)?;
    let mut best: Option<Clustering> = None;
    let mut consider = |c: Clustering| {
        if best.as_ref().is_none_or(|b| c.inertia < b.inertia) {
            best = Some(c);
        }
    };
    for r in 0..restarts.max(1) {
        let mut rng = crate::stream!(seed, "kmeans++", k, r);
        consider(lloyd(points, seed_centroids(points, k, &mut rng)));
    }
    if let Some(prev) = previous.filter(|p| p.k + 1 == k) {
        let far = (0..points.len())
            .max_by(|&a, &b| {
                sq_dist(&points[a], &prev.centroids[prev.labels[a]])
                    .total_cmp(&sq_dist(&points[b], &prev.centroids[prev.labels[b]]))
                    .then(b.cmp(&a))
            })
            .unwrap_or(0);
        let mut init = prev.centroids.clone();
        init.push(points[far].clone());
        consider(lloyd(points, init));
    }
    Ok(best.expect("at least one restart"))
}

/// Best-of-restarts clusterings for every k in `ks` (ascending). Inertia is
/// non-increasing in k because each k also starts from the k - 1 optimum.
pub fn inertia_curve(
    points: &[Vec<f64>],
    ks: std::ops::RangeInclusive<usize>,
    seed: u64,
    restarts: usize,
) -> Result<Vec<Clustering>> {
    let mut out: Vec<Clustering> = Vec::new();
    for k in ks {
        let c = kmeans_best(points, k, seed, restarts, out.last())?;
        out.push(c);
    }
    Ok(out)
}

/// Smallest k whose relative improvement `(I(k) - I(k+1)) / I(k)` is at most
/// `threshold`; otherwise the k with the largest second difference.
pub fn elbow_select(inertias: &BTreeMap<usize, f64>, threshold: f64) -> Result<usize> {
    let ks: Vec<usize> = inertias.keys().copied().collect();
    if ks.len() < 3 || ks.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::InvalidInput(
            "elbow selection needs at least 3 consecutive k values".into(),
        ));
    }
    let vals: Vec<f64> = inertias.values().copied().collect();
    for i in 0..vals.len() - 1 {
        let rel = if vals[i] > 0.0 { (vals[i] - vals[i + 1]) / vals[i] } else { 0.0 };
        if rel <= threshold {
            return Ok(ks[i]);
        }
    }
    let mut best = (ks[1], f64::NEG_INFINITY);
    for i in 1..vals.len() - 1 {
        let d2 = vals[i - 1] - 2.0 * vals[i] + vals[i + 1];
        if d2 > best.1 {
            best = (ks[i], d2);
        }
    }
    Ok(best.0)
}

fn comb2(n: u64) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index<A: Ord, B: Ord>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput("labelings cover different item counts".into()));
    }
    if a.len() < 2 {
        return Err(Error::InvalidInput("ARI needs at least 2 items".into()));
    }
    let mut table: BTreeMap<(&A, &B), u64> = BTreeMap::new();
    let mut rows: BTreeMap<&A, u64> = BTreeMap::new();
    let mut cols: BTreeMap<&B, u64> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| comb2(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| comb2(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| comb2(n)).sum();
    let expected = sum_a * sum_b / comb2(a.len() as u64);
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Shannon entropy in nats; zero proportions contribute nothing.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarketState {
    Up,
    Down,
    Closed,
}

/// Daily market direction of a reference index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MarketCalendar {
    pub days: BTreeMap<i64, MarketState>,
}

impl MarketCalendar {
    /// Reads a `date,state` CSV with `YYYY-MM-DD` dates and `up`/`down`/`closed` states.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
        let mut days = BTreeMap::new();
        for (i, row) in rdr.deserialize::<(String, MarketState)>().enumerate() {
            let (date, state) = row.map_err(|e| Error::Record {
                path: path.to_owned(),
                line: i + 2,
                reason: e.to_string(),
            })?;
            let day = parse_day(&date).ok_or_else(|| Error::Record {
                path: path.to_owned(),
                line: i + 2,
                reason: format!("bad date `{date}`"),
            })?;
            days.insert(day, state);
        }
        Ok(MarketCalendar { days })
    }

    pub fn state(&self, day: i64) -> Option<MarketState> {
        self.days.get(&day).copied()
    }
}

/// Behavioural summary of one liquidity taker.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LtProfile {
    pub avg_usd: f64,
    pub median_usd: f64,
    pub avg_dt: f64,
    pub median_dt: f64,
    pub prop_ss: f64,
    pub prop_ecosys: f64,
    pub prop_exotic: f64,
    pub class_entropy: f64,
    pub prop_fee_100: f64,
    pub prop_fee_500: f64,
    pub prop_fee_3000: f64,
    pub prop_fee_10000: f64,
    pub fee_entropy: f64,
    pub prop_market_up: f64,
    pub prop_market_down: f64,
    pub prop_market_closed: f64,
}

impl LtProfile {
    pub const COLUMNS: [&'static str; 16] = [
        "avg_usd",
        "median_usd",
        "avg_dt",
        "median_dt",
        "prop_SS",
        "prop_ECOSYS",
        "prop_EXOTIC",
        "class_entropy",
        "prop_fee_100",
        "prop_fee_500",
        "prop_fee_3000",
        "prop_fee_10000",
        "fee_entropy",
        "prop_market_up",
        "prop_market_down",
        "prop_market_closed",
    ];

    pub fn values(&self) -> [f64; 16] {
        [
            self.avg_usd,
            self.median_usd,
            self.avg_dt,
            self.median_dt,
            self.prop_ss,
            self.prop_ecosys,
            self.prop_exotic,
            self.class_entropy,
            self.prop_fee_100,
            self.prop_fee_500,
            self.prop_fee_3000,
            self.prop_fee_10000,
            self.fee_entropy,
            self.prop_market_up,
            self.prop_market_down,
            self.prop_market_closed,
        ]
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

fn proportions<const N: usize>(counts: [usize; N]) -> [f64; N] {
    let total: usize = counts.iter().sum();
    counts.map(|c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
}

pub fn lt_features(
    log: &EventLog,
    lt_ids: &BTreeSet<AgentId>,
    pools: &BTreeSet<PoolId>,
    w: &TimeWindow,
    class_map: &BTreeMap<PoolId, PoolClass>,
    calendar: &MarketCalendar,
) -> Result<BTreeMap<AgentId, LtProfile>> {
    if let Some(p) = pools.iter().find(|p| !class_map.contains_key(*p)) {
        return Err(Error::InvalidInput(format!("pool {p} has no class")));
    }
    let mut swaps: BTreeMap<&AgentId, Vec<&crate::events::SwapEvent>> =
        lt_ids.iter().map(|a| (a, Vec::new())).collect();
    for s in log.swaps.iter().filter(|s| w.contains(s.ts) && pools.contains(&s.pool)) {
        if let Some(v) = swaps.get_mut(&s.origin) {
            v.push(s);
        }
    }
    let mut out = BTreeMap::new();
    for (lt, list) in swaps {
        if list.is_empty() {
            return Err(Error::InvalidInput(format!("trader {lt} has no swaps in window {}", w.label)));
        }
        let usd: Vec<f64> = list.iter().map(|s| s.amount_usd).collect();
        let dts: Vec<f64> = list.windows(2).map(|p| (p[1].ts - p[0].ts) as f64).collect();
        let mut class_counts = [0usize; 3];
        let mut fee_counts = [0usize; 4];
        let mut market_counts = [0usize; 3];
        for s in &list {
            class_counts[class_map[&s.pool].index()] += 1;
            let fee: FeeTier = log.meta(&s.pool)?.fee_tier;
            fee_counts[fee.index()] += 1;
            let day = day_of(s.ts);
            let state = calendar.state(day).ok_or_else(|| {
                Error::InvalidInput(format!("market calendar has no entry for {}", crate::events::day_label(day)))
            })?;
            market_counts[state as usize] += 1;
        }
        let classes = proportions(class_counts);
        let fees = proportions(fee_counts);
        let market = proportions(market_counts);
        out.insert(
            lt.clone(),
            LtProfile {
                avg_usd: mean(&usd),
                median_usd: median(&usd),
                avg_dt: mean(&dts),
                median_dt: median(&dts),
                prop_ss: classes[0],
                prop_ecosys: classes[1],
                prop_exotic: classes[2],
                class_entropy: entropy(&classes),
                prop_fee_100: fees[0],
                prop_fee_500: fees[1],
                prop_fee_3000: fees[2],
                prop_fee_10000: fees[3],
                fee_entropy: entropy(&fees),
                prop_market_up: market[0],
                prop_market_down: market[1],
                prop_market_closed: market[2],
            },
        );
    }
    Ok(out)
}

/// Per-cluster feature means (rows = clusters, columns = [`LtProfile::COLUMNS`]).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterProfiles {
    pub sizes: Vec<usize>,
    pub means: Vec<Vec<f64>>,
}

pub fn profile_clusters(
    ids: &[AgentId],
    clustering: &Clustering,
    profiles: &BTreeMap<AgentId, LtProfile>,
) -> Result<ClusterProfiles> {
    if ids.len() != clustering.labels.len() {
        return Err(Error::InvalidInput("ids and labels differ in length".into()));
    }
    let cols = LtProfile::COLUMNS.len();
    let mut sums = vec![vec![0.0; cols]; clustering.k];
    let mut sizes = vec![0usize; clustering.k];
    for (id, &l) in ids.iter().zip(&clustering.labels) {
        let p = profiles
            .get(id)
            .ok_or_else(|| Error::InvalidInput(format!("no profile for {id}")))?;
        sizes[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p.values()) {
            *s += v;
        }
    }
    let means = sums
        .into_iter()
        .zip(&sizes)
        .map(|(row, &n)| row.into_iter().map(|s| if n == 0 { 0.0 } else { s / n as f64 }).collect())
        .collect();
    Ok(ClusterProfiles { sizes, means })
}
