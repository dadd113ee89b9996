//! Thirteen-feature pool characterization, Spearman correlations and
//! (kernel) PCA projections.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{day_of, AgentId, EventLog, FeeTier, LiquidityKind, PoolId, TimeWindow};

pub const FEATURE_NAMES: [&str; 13] = [
    "SdailyLT",
    "LdailyLP",
    "SstdP",
    "SavgUSD",
    "LavgUSDmint",
    "LavgUSDburn",
    "SdailyVol",
    "LdailyVolMint",
    "LdailyVolBurn",
    "SdailyTxn",
    "LdailyTxn",
    "SdailyS",
    "Sdaily1txn",
];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoolFeatureRow {
    pub s_daily_lt: f64,
    pub l_daily_lp: f64,
    /// `None` when the pool has no swaps in the window.
    pub s_std_p: Option<f64>,
    pub s_avg_usd: f64,
    pub l_avg_usd_mint: f64,
    pub l_avg_usd_burn: f64,
    pub s_daily_vol: f64,
    pub l_daily_vol_mint: f64,
    pub l_daily_vol_burn: f64,
    pub s_daily_txn: f64,
    pub l_daily_txn: f64,
    pub s_daily_s: f64,
    pub s_daily_1txn: f64,
    pub fee_tier: u32,
}

impl PoolFeatureRow {
    /// The 13 features in [`FEATURE_NAMES`] order; only `SstdP` can be missing.
    pub fn cells(&self) -> [Option<f64>; 13] {
        [
            Some(self.s_daily_lt),
            Some(self.l_daily_lp),
            self.s_std_p,
            Some(self.s_avg_usd),
            Some(self.l_avg_usd_mint),
            Some(self.l_avg_usd_burn),
            Some(self.s_daily_vol),
            Some(self.l_daily_vol_mint),
            Some(self.l_daily_vol_burn),
            Some(self.s_daily_txn),
            Some(self.l_daily_txn),
            Some(self.s_daily_s),
            Some(self.s_daily_1txn),
        ]
    }

    /// All 13 features, or `None` if `SstdP` is undefined.
    pub fn values(&self) -> Option<[f64; 13]> {
        self.s_std_p?;
        Some(self.cells().map(|c| c.unwrap_or_default()))
    }
}

/// Population standard deviation; 0 for a single value.
pub fn population_std(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    Some((v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt())
}

fn mean_or_zero(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn compute_pool_features(
    log: &EventLog,
    pools: &BTreeSet<PoolId>,
    w: &TimeWindow,
) -> Result<BTreeMap<PoolId, PoolFeatureRow>> {
    w.validate()?;
    let days = w.day_count() as f64;
    let mut out = BTreeMap::new();
    for pool in pools {
        let fee: FeeTier = log.meta(pool)?.fee_tier;
        let mut daily_lt: BTreeMap<i64, BTreeSet<&AgentId>> = BTreeMap::new();
        let mut daily_senders: BTreeMap<i64, BTreeSet<&AgentId>> = BTreeMap::new();
        let mut daily_lp: BTreeMap<i64, BTreeSet<&AgentId>> = BTreeMap::new();
        let mut per_origin: BTreeMap<&AgentId, usize> = BTreeMap::new();
        let mut rates = Vec::new();
        let mut swap_usd = 0.0;
        for s in log.swaps_in(pool, w) {
            let d = day_of(s.ts);
            daily_lt.entry(d).or_default().insert(&s.origin);
            daily_senders.entry(d).or_default().insert(&s.sender);
            *per_origin.entry(&s.origin).or_default() += 1;
            rates.push(s.exec_rate);
            swap_usd += s.amount_usd;
        }
        let (mut mint_usd, mut mints, mut burn_usd, mut burns) = (0.0, 0usize, 0.0, 0usize);
        for l in log.liquidity_in(pool, w) {
            daily_lp.entry(day_of(l.ts)).or_default().insert(&l.origin);
            match l.kind {
                LiquidityKind::Mint => {
                    mint_usd += l.amount_usd;
                    mints += 1;
                }
                LiquidityKind::Burn => {
                    burn_usd += l.amount_usd;
                    burns += 1;
                }
            }
        }
        let distinct_days = |m: &BTreeMap<i64, BTreeSet<&AgentId>>| {
            m.values().map(|s| s.len()).sum::<usize>() as f64 / days
        };
        out.insert(
            pool.clone(),
            PoolFeatureRow {
                s_daily_lt: distinct_days(&daily_lt),
                l_daily_lp: distinct_days(&daily_lp),
                s_std_p: population_std(&rates),
                s_avg_usd: mean_or_zero(swap_usd, rates.len()),
                l_avg_usd_mint: mean_or_zero(mint_usd, mints),
                l_avg_usd_burn: mean_or_zero(burn_usd, burns),
                s_daily_vol: swap_usd / days,
                l_daily_vol_mint: mint_usd / days,
                l_daily_vol_burn: burn_usd / days,
                s_daily_txn: rates.len() as f64 / days,
                l_daily_txn: (mints + burns) as f64 / days,
                s_daily_s: distinct_days(&daily_senders),
                s_daily_1txn: per_origin.values().filter(|&&c| c == 1).count() as f64 / days,
                fee_tier: fee.value(),
            },
        );
    }
    Ok(out)
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman correlation between the columns of `rows`. Entries involving a
/// constant column are `None`, including its diagonal.
pub fn spearman_matrix(rows: &[Vec<f64>]) -> Result<Vec<Vec<Option<f64>>>> {
    let d = check_matrix(rows, 3)?;
    let ranked: Vec<Vec<f64>> = (0..d)
        .map(|j| average_ranks(&rows.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    let mut out = vec![vec![None; d]; d];
    for i in 0..d {
        for j in i..d {
            let c = if i == j {
                pearson(&ranked[i], &ranked[i]).map(|_| 1.0)
            } else {
                pearson(&ranked[i], &ranked[j])
            };
            out[i][j] = c;
            out[j][i] = c;
        }
    }
    Ok(out)
}

fn check_matrix(rows: &[Vec<f64>], min_rows: usize) -> Result<usize> {
    if rows.len() < min_rows {
        return Err(Error::InvalidInput(format!(
            "need at least {min_rows} rows, got {}",
            rows.len()
        )));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidInput("rows must share a positive width".into()));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature value".into()));
    }
    Ok(d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf,
    Cosine,
}

impl Kernel {
    pub const ALL: [Kernel; 3] = [Kernel::Linear, Kernel::Rbf, Kernel::Cosine];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Linear => "linear",
            Kernel::Rbf => "rbf",
            Kernel::Cosine => "cosine",
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Kernel::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown kernel `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Projection {
    /// One row per input row, `dims` coordinates each.
    pub coords: Vec<Vec<f64>>,
    /// All eigenvalues, non-negative and descending.
    pub spectrum: Vec<f64>,
}

impl Projection {
    pub fn explained_ratio(&self) -> Vec<f64> {
        let total: f64 = self.spectrum.iter().sum();
        self.spectrum.iter().map(|l| if total > 0.0 { l / total } else { 0.0 }).collect()
    }
}

/// Column-wise standardization to zero mean and unit population variance.
/// Constant columns become zero.
pub fn standardize(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let d = rows.first().map_or(0, |r| r.len());
    let mut out = rows.to_vec();
    for j in 0..d {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let sd = (rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
        for r in out.iter_mut() {
            r[j] = if sd > 0.0 { (r[j] - mean) / sd } else { 0.0 };
        }
    }
    out
}

/// Descending eigenpairs of a symmetric matrix with each eigenvector's first
/// nonzero entry made positive.
fn sorted_eigen(m: DMatrix<f64>) -> Vec<(f64, Vec<f64>)> {
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, Vec<f64>)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
            (l, v)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

fn rank_of(spectrum: &[f64]) -> usize {
    let max = spectrum.first().copied().unwrap_or(0.0);
    spectrum.iter().filter(|&&l| l > 1e-10 * max.max(f64::MIN_POSITIVE)).count()
}

/// Projects standardized rows onto the top `dims` principal components.
/// Kernel spectra are eigenvalues of the double-centred kernel matrix divided
/// by the row count, so the linear kernel reproduces the covariance spectrum.
/// `rbf_gamma` defaults to `1 / width`.
pub fn pca_project(rows: &[Vec<f64>], kernel: Kernel, dims: usize, rbf_gamma: Option<f64>) -> Result<Projection> {
    let d = check_matrix(rows, dims + 1)?;
    if dims == 0 {
        return Err(Error::InvalidInput("dims must be positive".into()));
    }
    let x = standardize(rows);
    if x.iter().flatten().all(|v| *v == 0.0) {
        return Err(Error::InvalidInput("all rows are identical".into()));
    }
    let n = x.len();
    let (spectrum, coords) = match kernel {
        Kernel::Linear => {
            let xm = DMatrix::from_fn(n, d, |i, j| x[i][j]);
            let cov = (xm.transpose() * &xm) / n as f64;
            let pairs = sorted_eigen(cov);
            let spectrum: Vec<f64> = pairs.iter().map(|p| p.0.max(0.0)).collect();
            check_rank(&spectrum, dims)?;
            let coords = x
                .iter()
                .map(|r| {
                    pairs[..dims]
                        .iter()
                        .map(|(_, v)| r.iter().zip(v).map(|(a, b)| a * b).sum())
                        .collect()
                })
                .collect();
            (spectrum, coords)
        }
        Kernel::Rbf | Kernel::Cosine => {
            let gamma = rbf_gamma.unwrap_or(1.0 / d as f64);
            if kernel == Kernel::Rbf && !(gamma > 0.0) {
                return Err(Error::Config(format!("rbf gamma must be positive, got {gamma}")));
            }
            let norms: Vec<f64> = x.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
            if kernel == Kernel::Cosine && norms.contains(&0.0) {
                return Err(Error::InvalidInput(
                    "cosine kernel undefined for a row equal to the column means".into(),
                ));
            }
            let k = DMatrix::from_fn(n, n, |i, j| match kernel {
                Kernel::Rbf => (-gamma * x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).exp(),
                _ => x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum::<f64>() / (norms[i] * norms[j]),
            });
            let kc = double_centre(&k);
            let pairs = sorted_eigen(kc);
            let spectrum: Vec<f64> = pairs.iter().map(|p| (p.0 / n as f64).max(0.0)).collect();
            check_rank(&spectrum, dims)?;
            let coords = (0..n)
                .map(|i| {
                    pairs[..dims]
                        .iter()
                        .map(|(l, a)| a[i] * l.max(0.0).sqrt())
                        .collect()
                })
                .collect();
            (spectrum, coords)
        }
    };
    Ok(Projection { coords, spectrum })
}

fn check_rank(spectrum: &[f64], dims: usize) -> Result<()> {
    let rank = rank_of(spectrum);
    if dims > rank {
        return Err(Error::InvalidInput(format!(
            "requested {dims} components but the data has rank {rank}"
        )));
    }
    Ok(())
}

/// `K - 1K - K1 + 1K1` with `1` the all-`1/n` matrix.
pub fn double_centre(k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    let row_means: Vec<f64> = (0..n).map(|i| k.row(i).sum() / n as f64).collect();
    let col_means: Vec<f64> = (0..n).map(|j| k.column(j).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    DMatrix::from_fn(n, n, |i, j| k[(i, j)] - row_means[i] - col_means[j] + grand)
}
