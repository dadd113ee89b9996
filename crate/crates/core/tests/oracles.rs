//! Library results against brute-force recomputations over raw events.

mod common;

use std::collections::BTreeSet;

use common::{random_log, DAY0};
use dexlens_core::cryptoness::{daily_law_rows, op_change, rpool_distribution, sliding_cryptoness, DailyLawRow};
use dexlens_core::embed::filter_lts;
use dexlens_core::events::{LiquidityKind, SECONDS_PER_DAY};
use dexlens_core::interconnect::{agent_overlap, build_common_agent_graph, AgentMeasure, Identity, Role};
use dexlens_core::poolfeat::{compute_pool_features, pca_project, Kernel};
use dexlens_core::{AgentId, EventLog, PoolId, TimeWindow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 6] = [1, 2, 3, 17, 99, 2024];

/// Days 3 to 12 of a 15-day log, so both window edges cut through events.
fn inner_window() -> TimeWindow {
    TimeWindow::new("W", (DAY0 + 3) * SECONDS_PER_DAY, (DAY0 + 12) * SECONDS_PER_DAY).unwrap()
}

fn log(seed: u64) -> EventLog {
    random_log(seed, 7, 25, 600, 15)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// (pool, origin, sender) of every event of one role inside the window.
fn touches(log: &EventLog, w: &TimeWindow, role: Role) -> Vec<(PoolId, AgentId, AgentId)> {
    match role {
        Role::Lt => log
            .swaps
            .iter()
            .filter(|s| s.ts >= w.start && s.ts < w.end)
            .map(|s| (s.pool.clone(), s.origin.clone(), s.sender.clone()))
            .collect(),
        Role::Lp => log
            .liquidity
            .iter()
            .filter(|l| l.ts >= w.start && l.ts < w.end)
            .map(|l| (l.pool.clone(), l.origin.clone(), l.sender.clone()))
            .collect(),
    }
}

#[test]
fn common_agent_weights_match_pairwise_intersection() {
    let w = inner_window();
    for seed in SEEDS {
        let log = log(seed);
        let pools: BTreeSet<PoolId> = log.pools.keys().cloned().collect();
        for role in [Role::Lt, Role::Lp] {
            for identity in [Identity::Origin, Identity::Sender] {
                let g = build_common_agent_graph(&log, &pools, &w, AgentMeasure::new(role, identity)).unwrap();
                let ev = touches(&log, &w, role);
                let agent = |e: &(PoolId, AgentId, AgentId)| match identity {
                    Identity::Origin => e.1.clone(),
                    Identity::Sender => e.2.clone(),
                };
                let all_agents: BTreeSet<AgentId> = ev.iter().map(agent).collect();
                for p in &pools {
                    for q in &pools {
                        if p >= q {
                            continue;
                        }
                        let mut expected = 0;
                        for a in &all_agents {
                            let on = |pool: &PoolId| ev.iter().any(|e| &e.0 == pool && &agent(e) == a);
                            if on(p) && on(q) {
                                expected += 1;
                            }
                        }
                        assert_eq!(g.weight(p, q), expected, "{p} {q} {role:?} {identity:?}");
                    }
                }
            }
        }
    }
}

#[test]
fn agent_overlap_matches_set_intersection() {
    let w = inner_window();
    for seed in SEEDS {
        let log = log(seed);
        let pools: BTreeSet<PoolId> = log.pools.keys().cloned().collect();
        let got = agent_overlap(&log, &pools, &w).unwrap();
        let lt = touches(&log, &w, Role::Lt);
        let lp = touches(&log, &w, Role::Lp);
        for p in &pools {
            let takers: BTreeSet<&AgentId> = lt.iter().filter(|e| &e.0 == p).map(|e| &e.1).collect();
            let providers: BTreeSet<&AgentId> = lp.iter().filter(|e| &e.0 == p).map(|e| &e.1).collect();
            let common = takers.iter().filter(|a| providers.contains(*a)).count();
            let o = &got[p];
            assert_eq!((o.common, o.lt_count, o.lp_count), (common, takers.len(), providers.len()));
            let ratio = |n: usize| if n == 0 { 0.0 } else { common as f64 / n as f64 };
            assert_eq!(o.lt_ratio, ratio(takers.len()));
            assert_eq!(o.lp_ratio, ratio(providers.len()));
        }
    }
}

#[test]
fn trader_filter_matches_swap_counts() {
    let w = inner_window();
    for seed in SEEDS {
        let log = log(seed);
        let pools: BTreeSet<PoolId> = log.pools.keys().step_by(2).cloned().collect();
        for (lo, hi) in [(2, 5), (3, 3), (4, 100)] {
            let got = filter_lts(&log, &pools, &w, lo, hi).unwrap();
            let agents: BTreeSet<&AgentId> = log.swaps.iter().map(|s| &s.origin).collect();
            let expected: BTreeSet<AgentId> = agents
                .into_iter()
                .filter(|a| {
                    let n = log
                        .swaps
                        .iter()
                        .filter(|s| &s.origin == *a && pools.contains(&s.pool) && s.ts >= w.start && s.ts < w.end)
                        .count();
                    n >= lo && n <= hi
                })
                .cloned()
                .collect();
            assert_eq!(got, expected);
        }
    }
}

#[test]
fn pool_features_match_daily_group_by() {
    let w = inner_window();
    let days = 9.0;
    for seed in SEEDS {
        let log = log(seed);
        let pools: BTreeSet<PoolId> = log.pools.keys().cloned().collect();
        let got = compute_pool_features(&log, &pools, &w).unwrap();
        for p in &pools {
            let swaps: Vec<_> = log.swaps.iter().filter(|s| &s.pool == p && w.contains(s.ts)).collect();
            let liq: Vec<_> = log.liquidity.iter().filter(|l| &l.pool == p && w.contains(l.ts)).collect();
            let day = |ts: i64| ts.div_euclid(SECONDS_PER_DAY);
            // distinct (day, agent) pairs per day, averaged over the window
            let daily_distinct = |pairs: BTreeSet<(i64, &AgentId)>| pairs.len() as f64 / days;
            let row = &got[p];
            assert!(close(row.s_daily_lt, daily_distinct(swaps.iter().map(|s| (day(s.ts), &s.origin)).collect())));
            assert!(close(row.s_daily_s, daily_distinct(swaps.iter().map(|s| (day(s.ts), &s.sender)).collect())));
            assert!(close(row.l_daily_lp, daily_distinct(liq.iter().map(|l| (day(l.ts), &l.origin)).collect())));
            let usd: f64 = swaps.iter().map(|s| s.amount_usd).sum();
            assert!(close(row.s_daily_vol, usd / days));
            assert!(close(row.s_daily_txn, swaps.len() as f64 / days));
            if swaps.is_empty() {
                assert_eq!(row.s_std_p, None);
                assert_eq!(row.s_avg_usd, 0.0);
            } else {
                let n = swaps.len() as f64;
                let mean = swaps.iter().map(|s| s.exec_rate).sum::<f64>() / n;
                let var = swaps.iter().map(|s| (s.exec_rate - mean).powi(2)).sum::<f64>() / n;
                assert!(close(row.s_std_p.unwrap(), var.sqrt()));
                assert!(close(row.s_avg_usd, usd / n));
            }
            for (kind, avg, daily) in [
                (LiquidityKind::Mint, row.l_avg_usd_mint, row.l_daily_vol_mint),
                (LiquidityKind::Burn, row.l_avg_usd_burn, row.l_daily_vol_burn),
            ] {
                let amounts: Vec<f64> = liq.iter().filter(|l| l.kind == kind).map(|l| l.amount_usd).collect();
                let sum: f64 = amounts.iter().sum();
                assert!(close(daily, sum / days));
                assert!(close(avg, if amounts.is_empty() { 0.0 } else { sum / amounts.len() as f64 }));
            }
            assert!(close(row.l_daily_txn, liq.len() as f64 / days));
            let one_timers = swaps
                .iter()
                .map(|s| &s.origin)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .filter(|a| swaps.iter().filter(|s| &s.origin == *a).count() == 1)
                .count();
            assert!(close(row.s_daily_1txn, one_timers as f64 / days));
            assert_eq!(row.fee_tier, log.pools[p].fee_tier.value());
        }
    }
}

#[test]
fn law_rows_match_daily_aggregation() {
    let w = inner_window();
    for seed in SEEDS {
        let mut log = log(seed);
        // repeat some rates so constant-rate days occur
        for s in log.swaps.iter_mut().filter(|s| s.ts % 5 == 0) {
            s.exec_rate = 1.5;
        }
        for p in log.pools.keys() {
            let got = daily_law_rows(&log, p, &w).unwrap();
            let fee = log.pools[p].fee_tier.value() as f64;
            let mut expected = Vec::new();
            let mut dropped = 0;
            for d in DAY0 + 3..DAY0 + 12 {
                let (lo, hi) = (d * SECONDS_PER_DAY, (d + 1) * SECONDS_PER_DAY);
                let day: Vec<_> = log.swaps.iter().filter(|s| &s.pool == p && s.ts >= lo && s.ts < hi).collect();
                let rates: Vec<f64> = day.iter().map(|s| s.exec_rate).collect();
                let n = rates.len() as f64;
                let mean = rates.iter().sum::<f64>() / n;
                let sd = (rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
                if rates.len() < 2 || !(sd > 0.0) {
                    dropped += 1;
                    continue;
                }
                let t_liq: f64 = log
                    .liquidity
                    .iter()
                    .filter(|l| &l.pool == p && l.ts < hi)
                    .map(|l| l.kind.sign() * l.amount_usd)
                    .sum();
                expected.push(DailyLawRow {
                    day: d,
                    p_vol: day.iter().map(|s| s.amount_usd).sum(),
                    v_stab: 1.0 / sd,
                    t_liq,
                    n_fee: 1.0 / fee,
                });
            }
            assert_eq!(got.dropped_days, dropped);
            assert_eq!(got.rows.len(), expected.len());
            for (g, e) in got.rows.iter().zip(&expected) {
                assert_eq!(g.day, e.day);
                assert!(close(g.p_vol, e.p_vol) && close(g.v_stab, e.v_stab) && close(g.t_liq, e.t_liq));
                assert_eq!(g.n_fee, e.n_fee);
            }
            assert_eq!(got.nonpositive_tliq, expected.iter().filter(|r| r.t_liq <= 0.0).count());
        }
    }
}

#[test]
fn op_change_matches_daily_counts() {
    let focus = TimeWindow::new("F", (DAY0 + 8) * SECONDS_PER_DAY, (DAY0 + 15) * SECONDS_PER_DAY).unwrap();
    let base = TimeWindow::new("B", DAY0 * SECONDS_PER_DAY, (DAY0 + 4) * SECONDS_PER_DAY).unwrap();
    for seed in SEEDS {
        let log = log(seed);
        for p in log.pools.keys() {
            let got = op_change(&log, p, &focus, &base).unwrap();
            let per_day = |w: &TimeWindow, days: f64| {
                let swaps = log.swaps.iter().filter(|s| &s.pool == p && s.ts >= w.start && s.ts < w.end).count();
                let kind = |k| log.liquidity.iter().filter(|l| &l.pool == p && l.kind == k && w.contains(l.ts)).count();
                [swaps, kind(LiquidityKind::Mint), kind(LiquidityKind::Burn)].map(|c| c as f64 / days)
            };
            let (f, b) = (per_day(&focus, 7.0), per_day(&base, 4.0));
            let expected: Vec<Option<f64>> = (0..3).map(|i| (b[i] > 0.0).then(|| (f[i] - b[i]) / b[i])).collect();
            for (g, e) in [got.swap, got.mint, got.burn].into_iter().zip(&expected) {
                match (g, e) {
                    (Some(g), Some(e)) => assert!(close(g, *e)),
                    (g, e) => assert_eq!(g, *e),
                }
            }
            let defined: Vec<f64> = expected.iter().flatten().copied().collect();
            match got.average {
                Some(a) => assert!(close(a, defined.iter().sum::<f64>() / defined.len() as f64)),
                None => assert!(defined.is_empty()),
            }
        }
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

#[test]
fn cosine_kernel_spectrum_matches_jacobi() {
    for seed in SEEDS {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (n, d) = (9, 5);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random_range(-3.0..3.0)).collect()).collect();
        let got = pca_project(&rows, Kernel::Cosine, 3, None).unwrap();

        // standardize with population statistics
        let mut z = rows.clone();
        for j in 0..d {
            let mean = rows.iter().map(|x| x[j]).sum::<f64>() / n as f64;
            let sd = (rows.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            for i in 0..n {
                z[i][j] = (rows[i][j] - mean) / sd;
            }
        }
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let k: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| dot(&z[i], &z[j]) / (dot(&z[i], &z[i]) * dot(&z[j], &z[j])).sqrt()).collect())
            .collect();
        let row_mean: Vec<f64> = k.iter().map(|row| row.iter().sum::<f64>() / n as f64).collect();
        let all_mean = row_mean.iter().sum::<f64>() / n as f64;
        let centred: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| k[i][j] - row_mean[i] - row_mean[j] + all_mean).collect())
            .collect();
        let expected: Vec<f64> = jacobi_eigenvalues(centred).into_iter().map(|l| (l / n as f64).max(0.0)).collect();
        assert_eq!(got.spectrum.len(), expected.len());
        for (g, e) in got.spectrum.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-8, "{g} vs {e}");
        }
    }
}

#[test]
fn two_slope_law_gives_a_bimodal_rpool() {
    let (low, high) = (40.0, 400.0);
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<DailyLawRow> = (0..120)
        .map(|d| {
            let v_stab = r.random_range(1.0..10.0);
            let t_liq = r.random_range(1e6..5e6);
            let n_fee = 1.0 / 500.0;
            let slope = if d < 60 { low } else { high };
            let p_vol = slope * n_fee * t_liq / v_stab * (1.0 + 0.02 * r.random_range(-1.0..1.0));
            DailyLawRow { day: DAY0 + d, p_vol, v_stab, t_liq, n_fee }
        })
        .collect();
    let fits = sliding_cryptoness(&rows, 20, 1, 3.0).unwrap();
    let summary = rpool_distribution(&fits, 0.3);
    let near = |target: f64| summary.values.iter().filter(|v| ((*v - target) / target).abs() < 0.03).count();
    // 41 windows lie wholly inside each regime
    assert!(near(low) >= 41 && near(high) >= 41, "{} {}", near(low), near(high));
    let between = summary.values.len() - near(low) - near(high);
    assert!(between <= 19, "{between} retained slopes between the modes");
    let mid = summary.values.iter().filter(|v| **v > 2.0 * low && **v < 0.5 * high).count();
    assert!(mid < near(low) / 4 && mid < near(high) / 4);
}
