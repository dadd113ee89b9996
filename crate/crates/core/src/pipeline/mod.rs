//! Configured runs over an event log: stage ordering, report files and the
//! run manifest.
//!
//! Every stage reads its upstream results from the output directory, so a
//! stage can be rerun on its own once its dependencies have been written.

mod config;
mod stages;
mod table;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::events::{EventLog, IngestReport};

pub use config::{
    ClusterOptions, CryptonessOptions, EmbedOptions, Inputs, InterconnectOptions, OpChangeWindows,
    PoolFeatOptions, RunConfig, SelectOptions, WindowDef,
};
pub use stages::{embeddings_path, read_embeddings, read_universe, universe_path};
pub use table::Table;

pub const MANIFEST_FILE: &str = "manifest.json";
/// Wall-clock stage timings. Kept apart from the manifest so that reruns
/// produce identical bundles.
pub const TIMINGS_FILE: &str = "timings.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Select,
    Interconnect,
    Embed,
    Cluster,
    Poolfeat,
    Cryptoness,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Select,
        Stage::Interconnect,
        Stage::Embed,
        Stage::Cluster,
        Stage::Poolfeat,
        Stage::Cryptoness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Select => "select",
            Stage::Interconnect => "interconnect",
            Stage::Embed => "embed",
            Stage::Cluster => "cluster",
            Stage::Poolfeat => "poolfeat",
            Stage::Cryptoness => "cryptoness",
        }
    }

    /// Stages whose outputs this one reads.
    pub fn dependencies(self) -> &'static [Stage] {
        match self {
            Stage::Select => &[],
            Stage::Interconnect | Stage::Embed | Stage::Poolfeat | Stage::Cryptoness => &[Stage::Select],
            Stage::Cluster => &[Stage::Embed],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Topological order of `requested` under `deps`, ties broken by `Stage`
/// order. Fails on a cycle.
pub fn execution_order(
    requested: &BTreeSet<Stage>,
    deps: impl Fn(Stage) -> Vec<Stage>,
) -> Result<Vec<Stage>> {
    let mut indegree: BTreeMap<Stage, usize> = requested.iter().map(|s| (*s, 0)).collect();
    let mut dependents: BTreeMap<Stage, Vec<Stage>> = BTreeMap::new();
    for &s in requested {
        for d in deps(s).into_iter().filter(|d| requested.contains(d)) {
            *indegree.get_mut(&s).expect("requested") += 1;
            dependents.entry(d).or_default().push(s);
        }
    }
    let mut ready: BTreeSet<Stage> = indegree.iter().filter(|(_, n)| **n == 0).map(|(s, _)| *s).collect();
    let mut order = Vec::new();
    while let Some(s) = ready.pop_first() {
        order.push(s);
        for t in dependents.remove(&s).unwrap_or_default() {
            let n = indegree.get_mut(&t).expect("requested");
            *n -= 1;
            if *n == 0 {
                ready.insert(t);
            }
        }
    }
    if order.len() != requested.len() {
        return Err(Error::Config("stage dependencies form a cycle".into()));
    }
    Ok(order)
}

/// Counts and remarks a stage reports about its run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub counts: BTreeMap<String, u64>,
    /// Items skipped and why.
    pub notes: Vec<String>,
}

impl StageRecord {
    pub fn add(&mut self, key: impl Into<String>, n: usize) {
        *self.counts.entry(key.into()).or_default() += n as u64;
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub stage: Stage,
    pub sha256: String,
    /// Data rows (CSV) or top-level entries (JSON).
    pub rows: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestCounts {
    pub lines: usize,
    pub records: usize,
    pub malformed: usize,
}

impl From<&IngestReport> for IngestCounts {
    fn from(r: &IngestReport) -> Self {
        IngestCounts {
            lines: r.lines,
            records: r.records,
            malformed: r.malformed.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub workers: usize,
    pub config_hash: String,
    pub inputs: BTreeMap<String, InputRecord>,
    pub ingest: IngestCounts,
    pub stages: BTreeMap<Stage, StageRecord>,
    /// Keyed by path relative to the output directory.
    pub outputs: BTreeMap<String, OutputRecord>,
}

/// Files written by a run, tracked for the manifest.
pub struct Bundle {
    root: PathBuf,
    outputs: BTreeMap<String, OutputRecord>,
}

impl Bundle {
    fn new(root: &Path) -> Self {
        Bundle {
            root: root.to_owned(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, stage: Stage, rel: &str, bytes: &[u8], rows: usize) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.outputs.insert(
            rel.to_owned(),
            OutputRecord {
                stage,
                sha256: hex::encode(Sha256::digest(bytes)),
                rows,
            },
        );
        Ok(())
    }

    pub fn table(&mut self, stage: Stage, rel: &str, t: &Table) -> Result<()> {
        self.write(stage, rel, &t.to_csv()?, t.len())
    }

    pub fn json<T: Serialize>(&mut self, stage: Stage, rel: &str, value: &T, rows: usize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(stage, rel, text.as_bytes(), rows)
    }
}

fn hash_file(path: &Path) -> Result<InputRecord> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(InputRecord {
        file: path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

/// Outcome of [`run_pipeline`].
#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub order: Vec<Stage>,
    pub manifest: Manifest,
    pub timings: BTreeMap<Stage, f64>,
    pub output_dir: PathBuf,
}

pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub log: &'a EventLog,
    pub windows: Vec<crate::events::TimeWindow>,
    pub out: Bundle,
}

/// Runs `requested` stages in dependency order. Dependencies that are not
/// requested must already have their outputs in the output directory.
pub fn run_pipeline(cfg: &RunConfig, requested: &BTreeSet<Stage>) -> Result<RunReport> {
    cfg.validate()?;
    cfg.check_inputs()?;
    if requested.is_empty() {
        return Err(Error::Config("no stages requested".into()));
    }
    if requested.contains(&Stage::Cluster) && cfg.inputs.calendar.is_none() {
        return Err(Error::Config("the cluster stage needs inputs.calendar".into()));
    }
    let order = execution_order(requested, |s| s.dependencies().to_vec())?;
    let windows = cfg.time_windows()?;
    for &s in &order {
        for dep in upstream(s).into_iter().filter(|d| !requested.contains(d)) {
            for path in stages::artifacts(cfg, dep, &windows) {
                if !path.is_file() {
                    return Err(Error::MissingArtifact(path));
                }
            }
        }
    }

    let (log, ingest) = EventLog::load(&cfg.inputs.pools, &cfg.inputs.events)?;
    let mut inputs = BTreeMap::new();
    inputs.insert("events".to_owned(), hash_file(&cfg.inputs.events)?);
    inputs.insert("pools".to_owned(), hash_file(&cfg.inputs.pools)?);
    inputs.insert("token_classes".to_owned(), hash_file(&cfg.inputs.token_classes)?);
    if let Some(c) = &cfg.inputs.calendar {
        inputs.insert("calendar".to_owned(), hash_file(c)?);
    }
    let config_hash = cfg.settings_hash()?;

    let root = &cfg.output_dir;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let manifest_path = root.join(MANIFEST_FILE);
    // Keep earlier stages' entries when they were produced from the same
    // settings and inputs.
    let previous: Option<Manifest> = fs::read_to_string(&manifest_path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .filter(|m: &Manifest| m.config_hash == config_hash && m.inputs == inputs);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut ctx = Context {
        cfg,
        log: &log,
        windows,
        out: Bundle::new(root),
    };
    let mut records = BTreeMap::new();
    let mut timings = BTreeMap::new();
    for &s in &order {
        let t = Instant::now();
        let rec = pool.install(|| stages::run_stage(s, &mut ctx))?;
        timings.insert(s, t.elapsed().as_secs_f64());
        records.insert(s, rec);
    }

    let mut manifest = previous.unwrap_or(Manifest {
        seed: cfg.seed,
        workers: cfg.workers,
        config_hash,
        inputs,
        ingest: IngestCounts::default(),
        stages: BTreeMap::new(),
        outputs: BTreeMap::new(),
    });
    manifest.workers = cfg.workers;
    manifest.ingest = IngestCounts::from(&ingest);
    manifest.outputs.retain(|_, o| !requested.contains(&o.stage));
    manifest.outputs.extend(ctx.out.outputs);
    manifest.stages.extend(records);

    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    let timing_names: BTreeMap<&str, f64> = timings.iter().map(|(s, t)| (s.name(), *t)).collect();
    let timings_path = root.join(TIMINGS_FILE);
    fs::write(&timings_path, serde_json::to_string_pretty(&timing_names)? + "\n")
        .map_err(|e| Error::io(&timings_path, e))?;

    Ok(RunReport {
        order,
        manifest,
        timings,
        output_dir: root.clone(),
    })
}

/// Config for analysing a fixture written by
/// [`generate_synthetic`](crate::synth::generate_synthetic) into `dir`:
/// the whole period as window `A`, its halves as `A1` and `A2`, and graph
/// thresholds scaled to the fixture's size. Paths are relative to `dir`.
pub fn synthetic_run_config(spec: &crate::synth::SyntheticSpec) -> RunConfig {
    use crate::events::day_label;
    use crate::synth::{CALENDAR_FILE, EVENTS_FILE, POOLS_FILE, TOKEN_CLASSES_FILE};
    let first = spec.start_day();
    let mid = first + spec.days as i64 / 2;
    let end = first + spec.days as i64;
    let window = |label: &str, a: i64, b: i64| WindowDef {
        label: label.into(),
        start: day_label(a),
        end: day_label(b),
    };
    RunConfig {
        output_dir: PathBuf::from("out"),
        seed: spec.seed,
        inputs: Inputs {
            events: EVENTS_FILE.into(),
            pools: POOLS_FILE.into(),
            token_classes: TOKEN_CLASSES_FILE.into(),
            calendar: Some(CALENDAR_FILE.into()),
        },
        windows: vec![window("A", first, end), window("A1", first, mid), window("A2", mid, end)],
        interconnect: InterconnectOptions {
            origin_threshold: SYNTH_ORIGIN_THRESHOLD,
            sender_threshold: SYNTH_SENDER_THRESHOLD,
            sweep: vec![0, 1, 2, 5, 10, 15, 20, 30, 50],
            bridge_min_count: SYNTH_BRIDGE_MIN_COUNT,
        },
        cryptoness: CryptonessOptions {
            op_change: Some(OpChangeWindows {
                focus: "A2".into(),
                baseline: "A1".into(),
            }),
            ..Default::default()
        },
        ..Default::default()
    }
}

const SYNTH_ORIGIN_THRESHOLD: u64 = 15;
const SYNTH_SENDER_THRESHOLD: u64 = 1;
const SYNTH_BRIDGE_MIN_COUNT: u64 = 5;

/// All stages `s` depends on, directly or not.
fn upstream(s: Stage) -> BTreeSet<Stage> {
    let mut out = BTreeSet::new();
    let mut todo: Vec<Stage> = s.dependencies().to_vec();
    while let Some(d) = todo.pop() {
        if out.insert(d) {
            todo.extend_from_slice(d.dependencies());
        }
    }
    out
}
