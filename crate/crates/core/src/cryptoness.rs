//! The ideal crypto law `P_vol · V_stab = n_fee · R_pool · T_liq`: daily
//! state rows, outlier filtering, zero-intercept fits and their diagnostics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{day_of, proxy_tvl_series, EventLog, PoolId, TimeWindow, SECONDS_PER_DAY};
use crate::poolfeat::population_std;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DailyLawRow {
    pub day: i64,
    pub p_vol: f64,
    pub v_stab: f64,
    pub t_liq: f64,
    pub n_fee: f64,
}

impl DailyLawRow {
    pub fn x(&self) -> f64 {
        self.n_fee * self.t_liq / self.v_stab
    }

    pub fn y(&self) -> f64 {
        self.p_vol
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LawRows {
    pub rows: Vec<DailyLawRow>,
    /// Days in the window with fewer than two swaps or a constant rate.
    pub dropped_days: usize,
    /// Kept rows whose proxyTVL is not positive.
    pub nonpositive_tliq: usize,
}

/// One row per UTC day of `w` with at least two swaps and a non-constant
/// execution rate. `T_liq` is the proxyTVL at the last second of the day.
pub fn daily_law_rows(log: &EventLog, pool: &PoolId, w: &TimeWindow) -> Result<LawRows> {
    let fee = log.meta(pool)?.fee_tier;
    let tvl = proxy_tvl_series(log, pool)?;
    let mut by_day: BTreeMap<i64, (f64, Vec<f64>)> = BTreeMap::new();
    for s in log.swaps_in(pool, w) {
        let e = by_day.entry(day_of(s.ts)).or_default();
        e.0 += s.amount_usd;
        e.1.push(s.exec_rate);
    }
    let mut out = LawRows::default();
    for day in w.days() {
        let Some((p_vol, rates)) = by_day.get(&day) else {
            out.dropped_days += 1;
            continue;
        };
        let std = population_std(rates).unwrap_or(0.0);
        if rates.len() < 2 || !(std > 0.0) {
            out.dropped_days += 1;
            continue;
        }
        let t_liq = tvl.value_at((day + 1) * SECONDS_PER_DAY - 1);
        if t_liq <= 0.0 {
            out.nonpositive_tliq += 1;
        }
        out.rows.push(DailyLawRow {
            day,
            p_vol: *p_vol,
            v_stab: 1.0 / std,
            t_liq,
            n_fee: 1.0 / fee.value() as f64,
        });
    }
    Ok(out)
}

/// Drops rows with `|z| > threshold` in any of `P_vol`, `V_stab`, `T_liq`
/// (population statistics, one pass). Constant variables are not scored.
pub fn zscore_filter(rows: &[DailyLawRow], threshold: f64) -> Result<Vec<DailyLawRow>> {
    if rows.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "z-score filtering needs at least 3 rows, got {}",
            rows.len()
        )));
    }
    let getters: [fn(&DailyLawRow) -> f64; 3] = [|r| r.p_vol, |r| r.v_stab, |r| r.t_liq];
    let stats: Vec<(f64, f64)> = getters
        .iter()
        .map(|g| {
            let v: Vec<f64> = rows.iter().map(g).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (mean, population_std(&v).unwrap_or(0.0))
        })
        .collect();
    Ok(rows
        .iter()
        .filter(|r| {
            getters
                .iter()
                .zip(&stats)
                .all(|(g, &(mean, sd))| sd == 0.0 || ((g(r) - mean) / sd).abs() <= threshold)
        })
        .copied()
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawFit {
    pub r_pool: f64,
    pub xi: f64,
    pub n_obs: usize,
}

/// Zero-intercept least squares of `y = P_vol` on `x = n_fee · T_liq / V_stab`.
/// The cryptoness is `1 - SS_res / SS_tot` with `SS_tot` taken about the mean
/// of `y`, so it can be negative.
pub fn fit_crypto_law(rows: &[DailyLawRow]) -> Result<LawFit> {
    if rows.len() < 3 {
        return Err(Error::InvalidInput(format!("a fit needs at least 3 rows, got {}", rows.len())));
    }
    let (mut sxy, mut sxx, mut sy) = (0.0, 0.0, 0.0);
    for r in rows {
        sxy += r.x() * r.y();
        sxx += r.x() * r.x();
        sy += r.y();
    }
    if !(sxx > 0.0) || !sxx.is_finite() {
        return Err(Error::Undefined("sum of squared regressors is zero".into()));
    }
    let r_pool = sxy / sxx;
    let mean_y = sy / rows.len() as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for r in rows {
        ss_res += (r.y() - r_pool * r.x()).powi(2);
        ss_tot += (r.y() - mean_y).powi(2);
    }
    if ss_tot == 0.0 {
        return Err(Error::Undefined("daily volume is constant; cryptoness undefined".into()));
    }
    Ok(LawFit {
        r_pool,
        xi: 1.0 - ss_res / ss_tot,
        n_obs: rows.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WindowFit {
    pub start_day: i64,
    pub end_day: i64,
    pub fit: LawFit,
    /// `max(xi, 0)`.
    pub xi_clamped: f64,
}

/// Fits over day windows `[s, s + window_days)` for `s` stepping by
/// `step_days` from the first row's day while the window ends on or before
/// the last row's day. Each window is z-filtered once before fitting;
/// windows with fewer than 3 surviving rows or an undefined fit are skipped.
pub fn sliding_cryptoness(
    rows: &[DailyLawRow],
    window_days: usize,
    step_days: usize,
    z_threshold: f64,
) -> Result<Vec<WindowFit>> {
    if window_days == 0 || step_days == 0 {
        return Err(Error::Config("window and step must be at least one day".into()));
    }
    if rows.windows(2).any(|p| p[1].day <= p[0].day) {
        return Err(Error::InvalidInput("law rows must be sorted by day".into()));
    }
    let (Some(first), Some(last)) = (rows.first(), rows.last()) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    let mut start = first.day;
    while start + window_days as i64 - 1 <= last.day {
        let end = start + window_days as i64 - 1;
        let lo = rows.partition_point(|r| r.day < start);
        let hi = rows.partition_point(|r| r.day <= end);
        let window = &rows[lo..hi];
        if window.len() >= 3 {
            let kept = zscore_filter(window, z_threshold)?;
            if kept.len() >= 3 {
                if let Ok(fit) = fit_crypto_law(&kept) {
                    out.push(WindowFit {
                        start_day: start,
                        end_day: end,
                        fit,
                        xi_clamped: fit.xi.max(0.0),
                    });
                }
            }
        }
        start += step_days as i64;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Isotherms {
    /// `n_bins + 1` equally spaced proxyTVL edges.
    pub edges: Vec<f64>,
    /// `(P_vol, V_stab)` points per bin.
    pub bins: Vec<Vec<(f64, f64)>>,
    /// The two most populated bins, ascending.
    pub flagged: [usize; 2],
}

impl Isotherms {
    /// Mean `P_vol · V_stab` of a bin, `None` when empty.
    pub fn mean_pv(&self, bin: usize) -> Option<f64> {
        let b = &self.bins[bin];
        (!b.is_empty()).then(|| b.iter().map(|(p, v)| p * v).sum::<f64>() / b.len() as f64)
    }
}

/// Equal-width proxyTVL bins over `[min T_liq, max T_liq]`; the maximum
/// falls in the last bin.
pub fn isotherm_bins(rows: &[DailyLawRow], n_bins: usize) -> Result<Isotherms> {
    if n_bins < 2 {
        return Err(Error::Config(format!("need at least 2 bins, got {n_bins}")));
    }
    let lo = rows.iter().map(|r| r.t_liq).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.t_liq).fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::InvalidInput("proxyTVL range is degenerate".into()));
    }
    let width = (hi - lo) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins).map(|i| lo + width * i as f64).collect();
    let mut bins = vec![Vec::new(); n_bins];
    for r in rows {
        let b = (((r.t_liq - lo) / width) as usize).min(n_bins - 1);
        bins[b].push((r.p_vol, r.v_stab));
    }
    let mut order: Vec<usize> = (0..n_bins).collect();
    order.sort_by(|&a, &b| bins[b].len().cmp(&bins[a].len()).then(a.cmp(&b)));
    let mut flagged = [order[0], order[1]];
    flagged.sort_unstable();
    Ok(Isotherms { edges, bins, flagged })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OpChange {
    pub swap: Option<f64>,
    pub mint: Option<f64>,
    pub burn: Option<f64>,
    /// Mean of the defined kinds.
    pub average: Option<f64>,
}

/// Relative change of average daily operation counts between a focus window
/// and a disjoint baseline.
pub fn op_change(log: &EventLog, pool: &PoolId, focus: &TimeWindow, baseline: &TimeWindow) -> Result<OpChange> {
    log.meta(pool)?;
    focus.validate()?;
    baseline.validate()?;
    if focus.overlaps(baseline) {
        return Err(Error::InvalidInput(format!(
            "windows {} and {} overlap",
            focus.label, baseline.label
        )));
    }
    let daily = |w: &TimeWindow| {
        let swaps = log.swaps_in(pool, w).count() as f64;
        let (mut mints, mut burns) = (0.0, 0.0);
        for l in log.liquidity_in(pool, w) {
            match l.kind {
                crate::events::LiquidityKind::Mint => mints += 1.0,
                crate::events::LiquidityKind::Burn => burns += 1.0,
            }
        }
        let d = w.day_count() as f64;
        [swaps / d, mints / d, burns / d]
    };
    let f = daily(focus);
    let b = daily(baseline);
    let change: Vec<Option<f64>> = f
        .iter()
        .zip(&b)
        .map(|(f, b)| (*b > 0.0).then(|| (f - b) / b))
        .collect();
    let defined: Vec<f64> = change.iter().flatten().copied().collect();
    Ok(OpChange {
        swap: change[0],
        mint: change[1],
        burn: change[2],
        average: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RpoolSummary {
    pub values: Vec<f64>,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    /// `floor(log10 |median|)`.
    pub magnitude: Option<i32>,
}

/// Slopes of windows whose cryptoness exceeds `xi_floor`.
pub fn rpool_distribution(fits: &[WindowFit], xi_floor: f64) -> RpoolSummary {
    let values: Vec<f64> = fits.iter().filter(|f| f.fit.xi > xi_floor).map(|f| f.fit.r_pool).collect();
    if values.is_empty() {
        return RpoolSummary { values, mean: None, median: None, magnitude: None };
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let median = crate::cluster::median(&values);
    RpoolSummary {
        magnitude: (median != 0.0).then(|| median.abs().log10().floor() as i32),
        values,
        mean: Some(mean),
        median: Some(median),
    }
}
