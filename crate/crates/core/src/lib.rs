//! Liquidity-taker and pool analytics over decentralized-exchange event logs.

pub mod cluster;
pub mod cryptoness;
pub mod embed;
pub mod error;
pub mod events;
pub mod interconnect;
pub mod pipeline;
pub mod poolfeat;
pub mod rng;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};
pub use events::{
    AgentId, EventLog, FeeTier, LiquidityEvent, LiquidityKind, PoolClass, PoolId, PoolMeta,
    SwapEvent, TimeWindow, TokenClasses,
};
