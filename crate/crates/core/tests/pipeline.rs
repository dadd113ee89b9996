use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use dexlens_core::cluster::adjusted_rand_index;
use dexlens_core::pipeline::{
    read_universe, run_pipeline, synthetic_run_config, Manifest, RunConfig, Stage, MANIFEST_FILE,
};
use dexlens_core::synth::{generate_synthetic, SynthManifest, SyntheticSpec};
use dexlens_core::Error;

fn stages(s: &[Stage]) -> BTreeSet<Stage> {
    s.iter().copied().collect()
}

fn fixture(dir: &Path) -> (RunConfig, SynthManifest) {
    let spec = SyntheticSpec::default();
    let (_, truth) = generate_synthetic(&spec, dir).unwrap();
    let mut cfg = synthetic_run_config(&spec);
    cfg.resolve_paths(dir);
    (cfg, truth)
}

/// Every file under `root`, relative path to bytes.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut todo = vec![root.to_owned()];
    while let Some(d) = todo.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                todo.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_owned(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(str::to_owned).collect()
}

#[test]
fn select_on_empty_log() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("events.jsonl"), "").unwrap();
    fs::write(d.join("pools.jsonl"), "").unwrap();
    fs::write(d.join("classes.json"), r#"{"stable": [], "pegged": []}"#).unwrap();
    let text = r#"
        [inputs]
        events = "events.jsonl"
        pools = "pools.jsonl"
        token_classes = "classes.json"
        [[windows]]
        label = "A"
        start = "2022-01-01"
        end = "2022-07-01"
    "#;
    let cfg = RunConfig::from_toml(text, d).unwrap();
    let report = run_pipeline(&cfg, &stages(&[Stage::Select])).unwrap();
    let u = read_universe(&d.join("out"), "A").unwrap();
    assert!(u.pools.is_empty());
    let m: Manifest =
        serde_json::from_str(&fs::read_to_string(d.join("out").join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(m, report.manifest);
    assert_eq!(m.seed, cfg.seed);
    assert_eq!(m.outputs.len(), 1);
    assert_eq!(m.outputs["select/universe_A.json"].rows, 0);
    assert_eq!(m.inputs["events"].bytes, 0);
}

#[test]
fn full_run_on_synthetic_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, truth) = fixture(dir.path());
    let report = run_pipeline(&cfg, &stages(&Stage::ALL)).unwrap();
    assert_eq!(report.order, Stage::ALL.to_vec());
    let out = &cfg.output_dir;

    // every manifest entry exists with the recorded hash, and nothing else was written
    let files = snapshot(out);
    for (rel, rec) in &report.manifest.outputs {
        let bytes = &files[Path::new(rel)];
        assert_eq!(hex::encode(<sha2::Sha256 as sha2::Digest>::digest(bytes)), rec.sha256, "{rel}");
    }
    assert_eq!(files.len(), report.manifest.outputs.len() + 2);

    for w in ["A", "A1", "A2"] {
        let p = |rel: &str| out.join(rel.replace("{w}", w));
        assert_eq!(header(&p("interconnect/{w}/common_lt_origin.csv")), ["src", "dst", "weight"]);
        assert_eq!(header(&p("interconnect/{w}/bridges.csv")), ["src", "dst", "weight"]);
        let emb = header(&p("embed/{w}/embeddings_d16.csv"));
        assert_eq!(emb.len(), 17);
        assert_eq!((emb[0].as_str(), emb[16].as_str()), ("lt_id", "v15"));
        assert_eq!(header(&p("cluster/{w}/labels_d32.csv")), ["lt_id", "cluster"]);
        assert_eq!(header(&p("cluster/{w}/ari.csv")), ["dim", "16", "32"]);
        assert_eq!(header(&p("poolfeat/{w}/projection_cosine.csv")), ["pool", "pc1", "pc2", "pc3", "fee_tier"]);
        assert_eq!(header(&p("cryptoness/{w}/fits.csv")), ["pool", "r_pool", "xi", "n_obs"]);
        assert_eq!(header(&p("poolfeat/{w}/spearman.csv")).len(), 15);
    }

    // planted archetypes come back as the reference clustering
    let mut r = csv::Reader::from_path(out.join("cluster/A/labels_d16.csv")).unwrap();
    let (mut found, mut planted) = (Vec::new(), Vec::new());
    for row in r.records() {
        let row = row.unwrap();
        found.push(row[1].parse::<usize>().unwrap());
        planted.push(truth.lt_archetype[&row[0]]);
    }
    assert_eq!(found.len(), 60);
    assert!(adjusted_rand_index(&found, &planted).unwrap() >= 0.9);
    assert_eq!(report.manifest.stages[&Stage::Cluster].counts["k_A"], 3);

    // the lawful and stable-pair pools separate by cryptoness
    let mut r = csv::Reader::from_path(out.join("cryptoness/A/fits.csv")).unwrap();
    let xi: BTreeMap<String, f64> = r
        .records()
        .map(|row| {
            let row = row.unwrap();
            (row[0].to_owned(), row[2].parse().unwrap())
        })
        .collect();
    assert!(xi["WBTC-WETH/3000"] > 0.95);
    assert!(xi["USDC-USDT/100"] < 0.0);
}

#[test]
fn staged_runs_match_run_all() {
    let dir = tempfile::tempdir().unwrap();
    let (mut cfg, _) = fixture(dir.path());
    cfg.windows.truncate(1);
    cfg.cryptoness.op_change = None;
    cfg.output_dir = dir.path().join("all");
    run_pipeline(&cfg, &stages(&Stage::ALL)).unwrap();
    let all = snapshot(&cfg.output_dir);

    cfg.output_dir = dir.path().join("staged");
    for s in [Stage::Select, Stage::Embed, Stage::Cluster, Stage::Interconnect, Stage::Cryptoness, Stage::Poolfeat] {
        run_pipeline(&cfg, &stages(&[s])).unwrap();
    }
    let mut staged = snapshot(&cfg.output_dir);
    let mut all = all;
    // timings differ by nature; the manifest records the same stages either way
    all.remove(Path::new("timings.json"));
    staged.remove(Path::new("timings.json"));
    assert_eq!(all.keys().collect::<Vec<_>>(), staged.keys().collect::<Vec<_>>());
    for (k, v) in &all {
        assert!(staged[k] == *v, "{} differs", k.display());
    }
}

#[test]
fn missing_upstream_and_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = fixture(dir.path());
    match run_pipeline(&cfg, &stages(&[Stage::Cluster])) {
        Err(e @ Error::MissingArtifact(_)) => assert!(e.is_validation()),
        other => panic!("{other:?}"),
    }
    assert!(!cfg.output_dir.join(MANIFEST_FILE).exists());

    let mut bad = cfg.clone();
    bad.inputs.calendar = None;
    assert!(run_pipeline(&bad, &stages(&[Stage::Select, Stage::Embed, Stage::Cluster]))
        .unwrap_err()
        .is_validation());
    let mut bad = cfg.clone();
    bad.inputs.events = dir.path().join("absent.jsonl");
    assert!(run_pipeline(&bad, &stages(&[Stage::Select])).unwrap_err().is_validation());
    assert!(run_pipeline(&cfg, &BTreeSet::new()).unwrap_err().is_validation());
}
