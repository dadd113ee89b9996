//! Distributed bag-of-features training of whole-graph vectors with negative
//! sampling.
//!
//! Each graph is a document and each WL feature occurrence a word. For every
//! kept occurrence `f` of graph `g` the step maximises
//! `log σ(v_g · u_f) + Σ log σ(-v_g · u_n)` over negatives `n` drawn from the
//! count^0.75 distribution.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::wl::WlFeature;
use crate::error::{Error, Result};
use crate::events::AgentId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub min_feature_count: usize,
    pub downsample_rate: f64,
    pub wl_depth: usize,
    pub negatives_per_positive: usize,
    pub rng_seed: u64,
    /// 1 is deterministic; more workers share feature vectors without locks.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 16,
            epochs: 10,
            initial_lr: 0.025,
            min_feature_count: 5,
            downsample_rate: 1e-4,
            wl_depth: 1,
            negatives_per_positive: 5,
            rng_seed: 1,
            workers: 1,
        }
    }
}

/// Final learning rate as a fraction of the initial one.
pub const MIN_LR_FRACTION: f64 = 0.1;

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.min_feature_count == 0 || self.negatives_per_positive == 0 {
            return Err(Error::Config("dim, min_feature_count and negatives must be positive".into()));
        }
        if !(self.initial_lr > 0.0) || !(self.downsample_rate >= 0.0) {
            return Err(Error::Config("learning rate must be positive and downsample rate non-negative".into()));
        }
        if self.wl_depth != 1 {
            return Err(Error::Config(format!("wl_depth must be 1, got {}", self.wl_depth)));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphDocument {
    pub lt_id: AgentId,
    pub features: Vec<WlFeature>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    /// Sorted by descending count, then token.
    pub tokens: Vec<WlFeature>,
    pub counts: Vec<u64>,
    #[serde(skip)]
    index: HashMap<WlFeature, usize>,
}

impl Vocabulary {
    pub fn build(docs: &[GraphDocument], min_count: usize) -> Vocabulary {
        let mut counts: BTreeMap<&WlFeature, u64> = BTreeMap::new();
        for d in docs {
            for f in &d.features {
                *counts.entry(f).or_default() += 1;
            }
        }
        let mut kept: Vec<(&WlFeature, u64)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count as u64)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens: Vec<WlFeature> = kept.iter().map(|(f, _)| (*f).clone()).collect();
        let index = tokens.iter().cloned().enumerate().map(|(i, f)| (f, i)).collect();
        Vocabulary {
            tokens,
            counts: kept.iter().map(|(_, c)| *c).collect(),
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, f: &WlFeature) -> Option<usize> {
        self.index.get(f).copied()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Probability of keeping one occurrence of each token under frequent-token
    /// subsampling: `(sqrt(c / t) + 1) t / c` with `t = rate · total`, capped at 1.
    pub fn keep_probabilities(&self, rate: f64) -> Vec<f64> {
        if rate <= 0.0 {
            return vec![1.0; self.len()];
        }
        let threshold = rate * self.total() as f64;
        self.counts
            .iter()
            .map(|&c| {
                let c = c as f64;
                (((c / threshold).sqrt() + 1.0) * threshold / c).min(1.0)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub lt_ids: Vec<AgentId>,
    pub dim: usize,
    /// One row per graph, in input order.
    pub vectors: Vec<Vec<f64>>,
    pub vocab: Vocabulary,
    pub feature_vectors: Vec<Vec<f64>>,
    /// Mean loss per update in the last epoch.
    pub final_loss: f64,
}

/// Seeded starting vector of graph `index`: uniform in `[-0.5, 0.5) / dim`.
pub fn initial_vector(seed: u64, index: usize, dim: usize) -> Vec<f64> {
    let mut rng = crate::stream!(seed, "init", index);
    (0..dim).map(|_| (rng.random::<f64>() - 0.5) / dim as f64).collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln σ(x)` without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// Shared output weights. Workers read and write rows without locking.
struct SharedRows {
    data: Vec<AtomicU64>,
    dim: usize,
}

impl SharedRows {
    fn zeros(rows: usize, dim: usize) -> Self {
        SharedRows {
            data: (0..rows * dim).map(|_| AtomicU64::new(0f64.to_bits())).collect(),
            dim,
        }
    }

    fn load(&self, row: usize, out: &mut [f64]) {
        for (o, a) in out.iter_mut().zip(&self.data[row * self.dim..(row + 1) * self.dim]) {
            *o = f64::from_bits(a.load(Ordering::Relaxed));
        }
    }

    fn add_scaled(&self, row: usize, scale: f64, v: &[f64]) {
        for (a, x) in self.data[row * self.dim..(row + 1) * self.dim].iter().zip(v) {
            let cur = f64::from_bits(a.load(Ordering::Relaxed));
            a.store((cur + scale * x).to_bits(), Ordering::Relaxed);
        }
    }

    fn into_rows(self) -> Vec<Vec<f64>> {
        let dim = self.dim;
        let flat: Vec<f64> = self.data.into_iter().map(|a| f64::from_bits(a.into_inner())).collect();
        flat.chunks(dim).map(|c| c.to_vec()).collect()
    }
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    docs: &'a [Vec<usize>],
    keep: &'a [f64],
    noise: &'a WeightedIndex<f64>,
    output: &'a SharedRows,
}

#[derive(Default)]
struct LossTally {
    sum: f64,
    updates: u64,
}

impl Trainer<'_> {
    fn lr(&self, epoch: usize, doc: usize) -> f64 {
        let total = (self.cfg.epochs * self.docs.len()) as f64;
        let progress = (epoch * self.docs.len() + doc) as f64 / total;
        self.cfg.initial_lr * (1.0 - (1.0 - MIN_LR_FRACTION) * progress)
    }

    /// Trains the document vectors `vectors` (graphs `first..first+len`) for one epoch.
    fn epoch(&self, epoch: usize, first: usize, vectors: &mut [Vec<f64>], tally: &mut LossTally) -> Result<()> {
        let dim = self.cfg.dim;
        let mut row = vec![0.0; dim];
        let mut grad = vec![0.0; dim];
        for (offset, v) in vectors.iter_mut().enumerate() {
            let doc = first + offset;
            let lr = self.lr(epoch, doc);
            let mut rng = crate::stream!(self.cfg.rng_seed, "train", epoch, doc);
            let mut doc_loss = 0.0;
            for &f in &self.docs[doc] {
                if self.keep[f] < 1.0 && rng.random::<f64>() > self.keep[f] {
                    continue;
                }
                grad.iter_mut().for_each(|g| *g = 0.0);
                let mut step = |target: usize, label: f64, v: &[f64], grad: &mut [f64]| -> f64 {
                    self.output.load(target, &mut row);
                    let dot: f64 = v.iter().zip(&row).map(|(a, b)| a * b).sum();
                    let g = (label - sigmoid(dot)) * lr;
                    for (acc, u) in grad.iter_mut().zip(&row) {
                        *acc += g * u;
                    }
                    self.output.add_scaled(target, g, v);
                    if label > 0.5 {
                        neg_log_sigmoid(dot)
                    } else {
                        neg_log_sigmoid(-dot)
                    }
                };
                doc_loss += step(f, 1.0, v, &mut grad);
                tally.updates += 1;
                for _ in 0..self.cfg.negatives_per_positive {
                    let n = self.noise.sample(&mut rng);
                    if n == f {
                        continue;
                    }
                    doc_loss += step(n, 0.0, v, &mut grad);
                    tally.updates += 1;
                }
                for (x, g) in v.iter_mut().zip(&grad) {
                    *x += g;
                }
            }
            if !doc_loss.is_finite() || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    graph: doc,
                    loss: doc_loss,
                });
            }
            tally.sum += doc_loss;
        }
        Ok(())
    }
}

pub fn train_embeddings(corpus: &[GraphDocument], cfg: &TrainConfig) -> Result<EmbeddingMatrix> {
    cfg.validate()?;
    if corpus.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 graphs to train, got {}",
            corpus.len()
        )));
    }
    let vocab = Vocabulary::build(corpus, cfg.min_feature_count);
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary {
            min_count: cfg.min_feature_count,
        });
    }
    let docs: Vec<Vec<usize>> = corpus
        .iter()
        .map(|d| d.features.iter().filter_map(|f| vocab.get(f)).collect())
        .collect();
    let keep = vocab.keep_probabilities(cfg.downsample_rate);
    let noise = WeightedIndex::new(vocab.counts.iter().map(|&c| (c as f64).powf(0.75)))
        .map_err(|e| Error::InvalidInput(format!("noise distribution: {e}")))?;
    let output = SharedRows::zeros(vocab.len(), cfg.dim);
    let mut vectors: Vec<Vec<f64>> = (0..corpus.len())
        .map(|i| initial_vector(cfg.rng_seed, i, cfg.dim))
        .collect();

    let trainer = Trainer {
        cfg,
        docs: &docs,
        keep: &keep,
        noise: &noise,
        output: &output,
    };
    let mut final_loss = 0.0;
    for epoch in 0..cfg.epochs {
        let mut tally = LossTally::default();
        if cfg.workers == 1 {
            trainer.epoch(epoch, 0, &mut vectors, &mut tally)?;
        } else {
            let chunk = corpus.len().div_ceil(cfg.workers);
            let results: Vec<Result<LossTally>> = std::thread::scope(|scope| {
                let handles: Vec<_> = vectors
                    .chunks_mut(chunk)
                    .enumerate()
                    .map(|(w, part)| {
                        let trainer = &trainer;
                        scope.spawn(move || {
                            let mut t = LossTally::default();
                            trainer.epoch(epoch, w * chunk, part, &mut t).map(|_| t)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("training worker panicked"))
                    .collect()
            });
            for r in results {
                let t = r?;
                tally.sum += t.sum;
                tally.updates += t.updates;
            }
        }
        final_loss = if tally.updates == 0 { 0.0 } else { tally.sum / tally.updates as f64 };
    }

    Ok(EmbeddingMatrix {
        lt_ids: corpus.iter().map(|d| d.lt_id.clone()).collect(),
        dim: cfg.dim,
        vectors,
        vocab,
        feature_vectors: output.into_rows(),
        final_loss,
    })
}
