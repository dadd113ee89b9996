//! Whole-graph embeddings of liquidity takers.
//!
//! Each trader becomes a complete time-weighted graph of their swaps. Node
//! neighbourhoods are sampled by cut-value, relabelled with depth-1 WL
//! features, and the resulting feature bags train one vector per trader.

mod graph;
mod train;
mod wl;

use rayon::prelude::*;

pub use graph::{
    cut_value, filter_lts, sample_neighbourhoods, transaction_graphs, CutParams, TransactionGraph,
    LABEL_SEPARATOR, NEIGHBOUR_SEPARATOR,
};
pub use train::{
    initial_vector, train_embeddings, EmbeddingMatrix, GraphDocument, TrainConfig, Vocabulary,
    MIN_LR_FRACTION,
};
pub use wl::{depth1_label, wl_relabel, WlFeature};

/// Samples neighbourhoods and extracts WL features for every graph. Output
/// order follows the input and does not depend on the thread count.
pub fn build_corpus(graphs: &[TransactionGraph], seed: u64) -> Vec<GraphDocument> {
    graphs
        .par_iter()
        .map(|g| {
            let nbrs = sample_neighbourhoods(g, seed);
            GraphDocument {
                lt_id: g.lt_id.clone(),
                features: wl_relabel(g, &nbrs),
            }
        })
        .collect()
}
