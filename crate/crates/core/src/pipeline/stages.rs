use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::table::{num, opt, Table};
use super::{Context, RunConfig, Stage, StageRecord};
use crate::cluster::{
    adjusted_rand_index, elbow_select, inertia_curve, lt_features, profile_clusters, LtProfile,
    MarketCalendar,
};
use crate::cryptoness::{
    daily_law_rows, fit_crypto_law, isotherm_bins, op_change, rpool_distribution,
    sliding_cryptoness, zscore_filter,
};
use crate::embed::{build_corpus, filter_lts, train_embeddings, transaction_graphs};
use crate::error::{Error, Result};
use crate::events::{classify_pool, day_label, AgentId, PoolId, TimeWindow, TokenClasses};
use crate::interconnect::{
    agent_overlap, bridge_giant_component, build_common_agent_graph, eigenvector_centrality,
    extract_bridges, giant_component, threshold_sweep, AgentMeasure, Identity, Role,
};
use crate::poolfeat::{compute_pool_features, pca_project, spearman_matrix, FEATURE_NAMES};
use crate::selection::{coarse_filter, window_filter, PoolUniverse};

pub fn universe_path(label: &str) -> String {
    format!("select/universe_{label}.json")
}

pub fn embeddings_path(label: &str, dim: usize) -> String {
    format!("embed/{label}/embeddings_d{dim}.csv")
}

/// Files a stage must have written for its dependants to run.
pub(super) fn artifacts(cfg: &RunConfig, s: Stage, windows: &[TimeWindow]) -> Vec<PathBuf> {
    let root = &cfg.output_dir;
    windows
        .iter()
        .flat_map(|w| match s {
            Stage::Select => vec![root.join(universe_path(&w.label))],
            Stage::Embed => cfg
                .embed
                .dims
                .iter()
                .map(|&d| root.join(embeddings_path(&w.label, d)))
                .collect(),
            _ => Vec::new(),
        })
        .collect()
}

pub fn read_universe(root: &Path, label: &str) -> Result<PoolUniverse> {
    let path = root.join(universe_path(label));
    let text = std::fs::read_to_string(&path).map_err(|_| Error::MissingArtifact(path.clone()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Trader ids and vectors from an embeddings CSV.
pub fn read_embeddings(root: &Path, label: &str, dim: usize) -> Result<(Vec<AgentId>, Vec<Vec<f64>>)> {
    let path = root.join(embeddings_path(label, dim));
    if !path.is_file() {
        return Err(Error::MissingArtifact(path));
    }
    let mut rdr = csv::Reader::from_path(&path)?;
    let mut ids = Vec::new();
    let mut vectors = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |reason: String| Error::Record {
            path: path.clone(),
            line: i + 2,
            reason,
        };
        if rec.len() != dim + 1 {
            return Err(bad(format!("expected {} fields, found {}", dim + 1, rec.len())));
        }
        ids.push(AgentId(rec[0].to_owned()));
        let v = rec
            .iter()
            .skip(1)
            .map(|x| x.parse::<f64>().map_err(|e| bad(e.to_string())))
            .collect::<Result<Vec<f64>>>()?;
        vectors.push(v);
    }
    Ok((ids, vectors))
}

pub(super) fn run_stage(s: Stage, ctx: &mut Context<'_>) -> Result<StageRecord> {
    match s {
        Stage::Select => select(ctx),
        Stage::Interconnect => interconnect(ctx),
        Stage::Embed => embed(ctx),
        Stage::Cluster => cluster(ctx),
        Stage::Poolfeat => poolfeat(ctx),
        Stage::Cryptoness => cryptoness(ctx),
    }
}

fn select(ctx: &mut Context<'_>) -> Result<StageRecord> {
    let mut rec = StageRecord::default();
    let cfg = ctx.cfg.select.config(ctx.windows.clone());
    let candidates = coarse_filter(ctx.log.pools.values(), &cfg);
    rec.add("pools", ctx.log.pools.len());
    rec.add("candidates", candidates.len());
    for w in &ctx.windows {
        let u = window_filter(ctx.log, &candidates, w, &cfg)?;
        rec.add(format!("universe_{}", w.label), u.pools.len());
        ctx.out.json(Stage::Select, &universe_path(&w.label), &u, u.pools.len())?;
    }
    Ok(rec)
}

#[derive(Serialize)]
struct MeasureComponent {
    threshold: u64,
    giant: BTreeSet<PoolId>,
    sweep: Vec<(u64, usize)>,
}

#[derive(Serialize)]
struct BridgeComponent {
    min_count: u64,
    total: u64,
    giant: BTreeSet<PoolId>,
    eigenvalue: Option<f64>,
}

#[derive(Serialize)]
struct Components {
    window: String,
    measures: BTreeMap<&'static str, MeasureComponent>,
    bridges: BridgeComponent,
}

fn edge_table<'a>(edges: impl Iterator<Item = (&'a PoolId, &'a PoolId, u64)>) -> Table {
    let mut t = Table::new(["src", "dst", "weight"]);
    for (a, b, w) in edges {
        t.push(vec![a.to_string(), b.to_string(), w.to_string()]);
    }
    t
}

fn interconnect(ctx: &mut Context<'_>) -> Result<StageRecord> {
    let mut rec = StageRecord::default();
    let opts = &ctx.cfg.interconnect;
    let all_pools: BTreeSet<PoolId> = ctx.log.pools.keys().cloned().collect();
    for w in &ctx.windows {
        let l = &w.label;
        let u = read_universe(ctx.out.root(), l)?;
        let mut measures = BTreeMap::new();
        for (role, identity) in [
            (Role::Lt, Identity::Origin),
            (Role::Lt, Identity::Sender),
            (Role::Lp, Identity::Origin),
            (Role::Lp, Identity::Sender),
        ] {
            let m = AgentMeasure::new(role, identity);
            let g = build_common_agent_graph(ctx.log, &u.pools, w, m)?;
            let threshold = match identity {
                Identity::Origin => opts.origin_threshold,
                Identity::Sender => opts.sender_threshold,
            };
            let t = edge_table(g.edges.iter().map(|((a, b), c)| (a, b, *c)));
            ctx.out.table(Stage::Interconnect, &format!("interconnect/{l}/common_{}.csv", m.label()), &t)?;
            let giant = giant_component(&g, threshold);
            rec.add(format!("giant_{}_{l}", m.label()), giant.len());
            measures.insert(
                m.label(),
                MeasureComponent {
                    threshold,
                    giant,
                    sweep: threshold_sweep(&g, &opts.sweep)?,
                },
            );
        }

        // Bridges may pass through pools outside the universe.
        let bg = extract_bridges(ctx.log, &all_pools, w);
        rec.add(format!("bridges_{l}"), bg.total() as usize);
        let t = edge_table(bg.edges.iter().map(|((a, b), c)| (a, b, *c)));
        ctx.out.table(Stage::Interconnect, &format!("interconnect/{l}/bridges.csv"), &t)?;
        let giant = bridge_giant_component(&bg, opts.bridge_min_count);
        let mut centrality = Table::new(["pool", "score"]);
        let mut eigenvalue = None;
        if giant.len() >= 2 {
            let c = eigenvector_centrality(&bg.undirected(opts.bridge_min_count).induced(&giant))?;
            let mut scores: Vec<(&PoolId, f64)> = c.scores.iter().map(|(p, s)| (p, *s)).collect();
            scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
            for (p, s) in scores {
                centrality.push(vec![p.to_string(), num(s)]);
            }
            eigenvalue = Some(c.eigenvalue);
        } else {
            rec.note(format!("{l}: bridge giant component has fewer than 2 pools; no centrality"));
        }
        ctx.out.table(Stage::Interconnect, &format!("interconnect/{l}/centrality.csv"), &centrality)?;
        let comps = Components {
            window: l.clone(),
            measures,
            bridges: BridgeComponent {
                min_count: opts.bridge_min_count,
                total: bg.total(),
                giant,
                eigenvalue,
            },
        };
        ctx.out.json(Stage::Interconnect, &format!("interconnect/{l}/components.json"), &comps, 5)?;

        let mut t = Table::new(["pool", "common", "lt_count", "lp_count", "lt_ratio", "lp_ratio"]);
        for (p, o) in agent_overlap(ctx.log, &u.pools, w)? {
            t.push(vec![
                p.to_string(),
                o.common.to_string(),
                o.lt_count.to_string(),
                o.lp_count.to_string(),
                num(o.lt_ratio),
                num(o.lp_ratio),
            ]);
        }
        ctx.out.table(Stage::Interconnect, &format!("interconnect/{l}/overlap.csv"), &t)?;
    }
    Ok(rec)
}

#[derive(Serialize)]
struct VocabEntry<'a> {
    feature: &'a str,
    count: u64,
}

fn embed(ctx: &mut Context<'_>) -> Result<StageRecord> {
    let mut rec = StageRecord::default();
    let opts = &ctx.cfg.embed;
    for w in &ctx.windows {
        let l = &w.label;
        let u = read_universe(ctx.out.root(), l)?;
        let lts = filter_lts(ctx.log, &u.pools, w, opts.min_txns, opts.max_txns)?;
        rec.add(format!("traders_{l}"), lts.len());
        let header = |dim: usize| {
            std::iter::once("lt_id".to_owned()).chain((0..dim).map(|i| format!("v{i}")))
        };
        if lts.len() < 2 {
            rec.note(format!("{l}: {} traders in bounds; nothing to embed", lts.len()));
            for &dim in &opts.dims {
                ctx.out.table(Stage::Embed, &embeddings_path(l, dim), &Table::new(header(dim)))?;
            }
            continue;
        }
        let graphs = transaction_graphs(ctx.log, &lts, &u.pools, w)?;
        let corpus = build_corpus(&graphs, ctx.cfg.seed);
        rec.add(
            format!("feature_occurrences_{l}"),
            corpus.iter().map(|d| d.features.len()).sum(),
        );
        for (i, &dim) in opts.dims.iter().enumerate() {
            let m = train_embeddings(&corpus, &opts.train_config(dim, ctx.cfg.seed, ctx.cfg.workers))?;
            let mut t = Table::new(header(dim));
            for (id, v) in m.lt_ids.iter().zip(&m.vectors) {
                t.push(std::iter::once(id.to_string()).chain(v.iter().map(|x| num(*x))).collect());
            }
            ctx.out.table(Stage::Embed, &embeddings_path(l, dim), &t)?;
            if i == 0 {
                rec.add(format!("vocabulary_{l}"), m.vocab.len());
                let entries: Vec<VocabEntry> = m
                    .vocab
                    .tokens
                    .iter()
                    .zip(&m.vocab.counts)
                    .map(|(f, c)| VocabEntry { feature: &f.0, count: *c })
                    .collect();
                ctx.out.json(Stage::Embed, &format!("embed/{l}/vocab.json"), &entries, entries.len())?;
            }
        }
    }
    Ok(rec)
}

fn class_map(ctx: &Context<'_>) -> Result<BTreeMap<PoolId, crate::events::PoolClass>> {
    let classes = TokenClasses::from_file(&ctx.cfg.inputs.token_classes)?;
    Ok(ctx
        .log
        .pools
        .iter()
        .map(|(id, m)| (id.clone(), classify_pool(m, &classes)))
        .collect())
}

fn cluster(ctx: &mut Context<'_>) -> Result<StageRecord> {
    let mut rec = StageRecord::default();
    let opts = &ctx.cfg.cluster;
    let dims = &ctx.cfg.embed.dims;
    let calendar_path = ctx
        .cfg
        .inputs
        .calendar
        .as_ref()
        .ok_or_else(|| Error::Config("the cluster stage needs inputs.calendar".into()))?;
    let calendar = MarketCalendar::from_csv(calendar_path)?;
    let classes = class_map(ctx)?;
    for w in &ctx.windows {
        let l = &w.label;
        let u = read_universe(ctx.out.root(), l)?;
        let mut embeddings = Vec::new();
        for &dim in dims {
            embeddings.push(read_embeddings(ctx.out.root(), l, dim)?);
        }
        let ids = embeddings[0].0.clone();
        if embeddings.iter().any(|(other, _)| *other != ids) {
            return Err(Error::InvalidInput(format!("{l}: embeddings list different traders")));
        }
        if ids.len() < opts.k_max {
            rec.note(format!("{l}: {} traders, fewer than k_max = {}", ids.len(), opts.k_max));
            continue;
        }
        let lt_set: BTreeSet<AgentId> = ids.iter().cloned().collect();
        let profiles = lt_features(ctx.log, &lt_set, &u.pools, w, &classes, &calendar)?;
        let mut t = Table::new(std::iter::once("lt_id").chain(LtProfile::COLUMNS));
        for (id, p) in &profiles {
            t.push(std::iter::once(id.to_string()).chain(p.values().map(num)).collect());
        }
        ctx.out.table(Stage::Cluster, &format!("cluster/{l}/lt_features.csv"), &t)?;

        let mut curves = Vec::new();
        let mut elbows = Vec::new();
        for (dim, (_, points)) in dims.iter().zip(&embeddings) {
            let curve = inertia_curve(points, opts.k_min..=opts.k_max, ctx.cfg.seed, opts.restarts)?;
            let inertias: BTreeMap<usize, f64> = curve.iter().map(|c| (c.k, c.inertia)).collect();
            let elbow = elbow_select(&inertias, opts.elbow_threshold)?;
            rec.add(format!("elbow_{l}_d{dim}"), elbow);
            let mut t = Table::new(["k", "inertia", "elbow"]);
            for c in &curve {
                t.push(vec![c.k.to_string(), num(c.inertia), u8::from(c.k == elbow).to_string()]);
            }
            ctx.out.table(Stage::Cluster, &format!("cluster/{l}/inertia_d{dim}.csv"), &t)?;
            curves.push(curve);
            elbows.push(elbow);
        }
        // All dimensions are labelled with the same k so they can be compared.
        let k = opts.k.unwrap_or(elbows[0]);
        rec.add(format!("k_{l}"), k);
        let chosen: Vec<_> = curves.iter().map(|c| &c[k - opts.k_min]).collect();
        for (dim, c) in dims.iter().zip(&chosen) {
            let mut t = Table::new(["lt_id", "cluster"]);
            for (id, label) in ids.iter().zip(&c.labels) {
                t.push(vec![id.to_string(), label.to_string()]);
            }
            ctx.out.table(Stage::Cluster, &format!("cluster/{l}/labels_d{dim}.csv"), &t)?;
            let prof = profile_clusters(&ids, c, &profiles)?;
            let mut t = Table::new(["cluster", "size"].into_iter().chain(LtProfile::COLUMNS));
            for (j, (size, means)) in prof.sizes.iter().zip(&prof.means).enumerate() {
                t.push(
                    [j.to_string(), size.to_string()]
                        .into_iter()
                        .chain(means.iter().map(|m| num(*m)))
                        .collect(),
                );
            }
            ctx.out.table(Stage::Cluster, &format!("cluster/{l}/profiles_d{dim}.csv"), &t)?;
        }
        let mut t = Table::new(std::iter::once("dim".to_owned()).chain(dims.iter().map(|d| d.to_string())));
        for (i, a) in chosen.iter().enumerate() {
            let mut row = vec![dims[i].to_string()];
            for b in &chosen {
                row.push(num(adjusted_rand_index(&a.labels, &b.labels)?));
            }
            t.push(row);
        }
        ctx.out.table(Stage::Cluster, &format!("cluster/{l}/ari.csv"), &t)?;
    }
    Ok(rec)
}

fn poolfeat(ctx: &mut Context<'_>) -> Result<StageRecord> {
    let mut rec = StageRecord::default();
    let opts = &ctx.cfg.poolfeat;
    for w in &ctx.windows {
        let l = &w.label;
        let u = read_universe(ctx.out.root(), l)?;
        let rows = compute_pool_features(ctx.log, &u.pools, w)?;
        let mut t = Table::new(std::iter::once("pool").chain(FEATURE_NAMES).chain(["SfeeTier"]));
        let mut valid = Vec::new();
        for (p, r) in &rows {
            let mut cells = vec![p.to_string()];
            cells.extend(r.cells().map(opt));
            match r.values() {
                Some(v) => valid.push((p, v, r.fee_tier)),
                None => rec.note(format!("{l}: {p} has no swaps; left out of correlations and projections")),
            }
            cells.push(r.fee_tier.to_string());
            t.push(cells);
        }
        ctx.out.table(Stage::Poolfeat, &format!("poolfeat/{l}/features.csv"), &t)?;
        rec.add(format!("pools_{l}"), rows.len());

        if valid.len() < opts.dims + 1 {
            rec.note(format!("{l}: {} complete pools; too few for correlations and projections", valid.len()));
            continue;
        }
        let with_fee: Vec<Vec<f64>> = valid
            .iter()
            .map(|(_, v, fee)| v.iter().copied().chain([*fee as f64]).collect())
            .collect();
        let names: Vec<&str> = FEATURE_NAMES.iter().copied().chain(["SfeeTier"]).collect();
        let rho = spearman_matrix(&with_fee)?;
        let mut t = Table::new(std::iter::once("feature").chain(names.iter().copied()));
        for (name, row) in names.iter().zip(&rho) {
            t.push(std::iter::once(name.to_string()).chain(row.iter().map(|r| opt(*r))).collect());
        }
        ctx.out.table(Stage::Poolfeat, &format!("poolfeat/{l}/spearman.csv"), &t)?;

        let inputs: Vec<Vec<f64>> = if opts.include_fee_tier {
            with_fee
        } else {
            valid.iter().map(|(_, v, _)| v.to_vec()).collect()
        };
        for &kernel in &opts.kernels {
            let proj = pca_project(&inputs, kernel, opts.dims, opts.rbf_gamma)?;
            let mut t = Table::new(["component", "eigenvalue", "explained_ratio"]);
            for (i, (ev, ratio)) in proj.spectrum.iter().zip(proj.explained_ratio()).enumerate() {
                t.push(vec![(i + 1).to_string(), num(*ev), num(ratio)]);
            }
            ctx.out.table(Stage::Poolfeat, &format!("poolfeat/{l}/spectrum_{}.csv", kernel.name()), &t)?;
            let mut t = Table::new(
                std::iter::once("pool".to_owned())
                    .chain((1..=opts.dims).map(|i| format!("pc{i}")))
                    .chain(["fee_tier".to_owned()]),
            );
            for ((p, _, fee), c) in valid.iter().zip(&proj.coords) {
                t.push(
                    std::iter::once(p.to_string())
                        .chain(c.iter().map(|x| num(*x)))
                        .chain([fee.to_string()])
                        .collect(),
                );
            }
            ctx.out.table(Stage::Poolfeat, &format!("poolfeat/{l}/projection_{}.csv", kernel.name()), &t)?;
        }
    }
    Ok(rec)
}

fn cryptoness(ctx: &mut Context<'_>) -> Result<StageRecord> {
    let mut rec = StageRecord::default();
    let opts = &ctx.cfg.cryptoness;
    for w in &ctx.windows {
        let l = &w.label;
        let u = read_universe(ctx.out.root(), l)?;
        let mut law = Table::new(["pool", "date", "p_vol", "v_stab", "t_liq", "n_fee", "x", "kept"]);
        let mut fits = Table::new(["pool", "r_pool", "xi", "n_obs"]);
        let mut sliding = Table::new(["pool", "start", "end", "r_pool", "xi", "xi_clamped", "n_obs"]);
        let mut iso = Table::new(["pool", "bin", "t_liq_lo", "t_liq_hi", "p_vol", "v_stab", "flagged"]);
        let mut rpool = Table::new(["pool", "retained", "mean", "median", "magnitude"]);
        for p in &u.pools {
            let rows = daily_law_rows(ctx.log, p, w)?;
            rec.add(format!("law_rows_{l}"), rows.rows.len());
            rec.add(format!("dropped_days_{l}"), rows.dropped_days);
            let kept = zscore_filter(&rows.rows, opts.z_threshold)?;
            rec.add(format!("outliers_{l}"), rows.rows.len() - kept.len());
            let kept_days: BTreeSet<i64> = kept.iter().map(|r| r.day).collect();
            for r in &rows.rows {
                law.push(vec![
                    p.to_string(),
                    day_label(r.day),
                    num(r.p_vol),
                    num(r.v_stab),
                    num(r.t_liq),
                    num(r.n_fee),
                    num(r.x()),
                    u8::from(kept_days.contains(&r.day)).to_string(),
                ]);
            }
            match fit_crypto_law(&kept) {
                Ok(f) => fits.push(vec![p.to_string(), num(f.r_pool), num(f.xi), f.n_obs.to_string()]),
                Err(e @ (Error::Undefined(_) | Error::InvalidInput(_))) => {
                    rec.note(format!("{l}: {p}: no fit: {e}"));
                }
                Err(e) => return Err(e),
            }
            let series = sliding_cryptoness(&rows.rows, opts.window_days, opts.step_days, opts.z_threshold)?;
            rec.add(format!("sliding_fits_{l}"), series.len());
            for s in &series {
                sliding.push(vec![
                    p.to_string(),
                    day_label(s.start_day),
                    day_label(s.end_day),
                    num(s.fit.r_pool),
                    num(s.fit.xi),
                    num(s.xi_clamped),
                    s.fit.n_obs.to_string(),
                ]);
            }
            let d = rpool_distribution(&series, opts.xi_floor);
            rpool.push(vec![
                p.to_string(),
                d.values.len().to_string(),
                opt(d.mean),
                opt(d.median),
                d.magnitude.map(|m| m.to_string()).unwrap_or_default(),
            ]);
            match isotherm_bins(&kept, opts.isotherm_bins) {
                Ok(b) => {
                    for (i, bin) in b.bins.iter().enumerate() {
                        for (pv, vs) in bin {
                            iso.push(vec![
                                p.to_string(),
                                i.to_string(),
                                num(b.edges[i]),
                                num(b.edges[i + 1]),
                                num(*pv),
                                num(*vs),
                                u8::from(b.flagged.contains(&i)).to_string(),
                            ]);
                        }
                    }
                }
                Err(e @ Error::InvalidInput(_)) => rec.note(format!("{l}: {p}: no isotherms: {e}")),
                Err(e) => return Err(e),
            }
        }
        rec.add(format!("fits_{l}"), fits.len());
        for (name, t) in [
            ("law_rows", &law),
            ("fits", &fits),
            ("sliding", &sliding),
            ("isotherms", &iso),
            ("rpool", &rpool),
        ] {
            ctx.out.table(Stage::Cryptoness, &format!("cryptoness/{l}/{name}.csv"), t)?;
        }
    }
    if let Some(oc) = &opts.op_change {
        let focus = ctx.cfg.window(&oc.focus)?;
        let baseline = ctx.cfg.window(&oc.baseline)?;
        let u = read_universe(ctx.out.root(), &focus.label)?;
        let mut t = Table::new(["pool", "swap", "mint", "burn", "average"]);
        for p in &u.pools {
            let c = op_change(ctx.log, p, &focus, &baseline)?;
            t.push(vec![p.to_string(), opt(c.swap), opt(c.mint), opt(c.burn), opt(c.average)]);
        }
        ctx.out.table(Stage::Cryptoness, "cryptoness/opchange.csv", &t)?;
    }
    Ok(rec)
}
