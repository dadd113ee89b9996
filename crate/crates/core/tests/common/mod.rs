#![allow(dead_code)]

use dexlens_core::events::{FeeTier, LiquidityEvent, LiquidityKind, PoolMeta, SwapEvent, SECONDS_PER_DAY};
use dexlens_core::{AgentId, EventLog, PoolId, TimeWindow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOKENS: [&str; 6] = ["USDC", "USDT", "WETH", "WBTC", "UNI", "SHIB"];
pub const DAY0: i64 = 19_000;

pub fn window(days: i64) -> TimeWindow {
    TimeWindow::new("W", DAY0 * SECONDS_PER_DAY, (DAY0 + days) * SECONDS_PER_DAY).unwrap()
}

/// A random but valid log over `days` days: pools over a small token set,
/// swaps grouped into transactions of one to four actions, and mints/burns.
pub fn random_log(seed: u64, n_pools: usize, n_agents: usize, n_txns: usize, days: i64) -> EventLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = EventLog::default();
    while log.pools.len() < n_pools {
        let a = rng.random_range(0..TOKENS.len());
        let b = (a + rng.random_range(1..TOKENS.len())) % TOKENS.len();
        let fee = FeeTier::ALL[rng.random_range(0..4)];
        let id = PoolId(format!("{}-{}/{}", TOKENS[a], TOKENS[b], fee.value()));
        log.pools.insert(
            id.clone(),
            PoolMeta {
                pool_id: id,
                token0: TOKENS[a].into(),
                token1: TOKENS[b].into(),
                fee_tier: fee,
                created_at: DAY0 * SECONDS_PER_DAY,
                txn_count: rng.random_range(0..5000),
            },
        );
    }
    let pools: Vec<PoolId> = log.pools.keys().cloned().collect();
    let span = days * SECONDS_PER_DAY;
    for t in 0..n_txns {
        let ts = DAY0 * SECONDS_PER_DAY + rng.random_range(0..span);
        let origin = AgentId(format!("a{}", rng.random_range(0..n_agents)));
        let sender = AgentId(format!("r{}", rng.random_range(0..3)));
        let txn_id = format!("t{t:05}");
        if rng.random_bool(0.2) {
            let kind = if rng.random_bool(0.6) { LiquidityKind::Mint } else { LiquidityKind::Burn };
            log.liquidity.push(LiquidityEvent {
                txn_id,
                log_index: 0,
                ts,
                pool: pools[rng.random_range(0..pools.len())].clone(),
                origin,
                sender,
                kind,
                amount_usd: rng.random_range(1.0..1e6),
            });
            continue;
        }
        let actions = rng.random_range(1..=4);
        for i in 0..actions {
            let into0 = rng.random_bool(0.5);
            let a0: f64 = rng.random_range(0.1..100.0);
            let a1: f64 = rng.random_range(0.1..100.0);
            log.swaps.push(SwapEvent {
                txn_id: txn_id.clone(),
                log_index: (i * 3 + rng.random_range(0..3)) as u32,
                ts,
                pool: pools[rng.random_range(0..pools.len())].clone(),
                origin: origin.clone(),
                sender: sender.clone(),
                recipient: origin.clone(),
                amount_usd: rng.random_range(1.0..1e5),
                amount0: if into0 { a0 } else { -a0 },
                amount1: if into0 { -a1 } else { a1 },
                exec_rate: a0 / a1,
            });
        }
    }
    log.sort();
    log
}
