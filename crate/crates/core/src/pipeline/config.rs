use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::{DEFAULT_ELBOW_THRESHOLD, DEFAULT_RESTARTS};
use crate::embed::TrainConfig;
use crate::error::{Error, Result};
use crate::events::{parse_day, TimeWindow, SECONDS_PER_DAY};
use crate::poolfeat::Kernel;
use crate::selection::SelectionConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub events: PathBuf,
    pub pools: PathBuf,
    pub token_classes: PathBuf,
    /// `date,state` market calendar; only the cluster stage reads it.
    pub calendar: Option<PathBuf>,
}

/// A labelled analysis window given as whole UTC days.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowDef {
    pub label: String,
    /// First day, `YYYY-MM-DD`.
    pub start: String,
    /// First day after the window.
    pub end: String,
}

impl WindowDef {
    pub fn to_window(&self) -> Result<TimeWindow> {
        let day = |s: &str| {
            parse_day(s).ok_or_else(|| {
                Error::Config(format!("window {}: `{s}` is not a YYYY-MM-DD date", self.label))
            })
        };
        TimeWindow::new(
            self.label.clone(),
            day(&self.start)? * SECONDS_PER_DAY,
            day(&self.end)? * SECONDS_PER_DAY,
        )
    }
}

/// Parses `LABEL:START:END`.
impl FromStr for WindowDef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let [label, start, end] = parts[..] else {
            return Err(Error::Config(format!("window `{s}` is not LABEL:START:END")));
        };
        let w = WindowDef {
            label: label.into(),
            start: start.into(),
            end: end.into(),
        };
        w.to_window()?;
        Ok(w)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectOptions {
    pub min_txn_count: u64,
    pub min_pools_per_token: usize,
    pub tvl_threshold: f64,
}

impl Default for SelectOptions {
    fn default() -> Self {
        let d = SelectionConfig::default();
        SelectOptions {
            min_txn_count: d.min_txn_count,
            min_pools_per_token: d.min_pools_per_token,
            tvl_threshold: d.tvl_threshold,
        }
    }
}

impl SelectOptions {
    pub fn config(&self, windows: Vec<TimeWindow>) -> SelectionConfig {
        SelectionConfig {
            min_txn_count: self.min_txn_count,
            min_pools_per_token: self.min_pools_per_token,
            tvl_threshold: self.tvl_threshold,
            windows,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterconnectOptions {
    /// Minimum common origins for an edge of the origin graphs.
    pub origin_threshold: u64,
    /// Minimum common senders for an edge of the sender graphs.
    pub sender_threshold: u64,
    /// Ascending thresholds reported in the giant-component sweep.
    pub sweep: Vec<u64>,
    /// Minimum bridge transactions for a bridge edge.
    pub bridge_min_count: u64,
}

impl Default for InterconnectOptions {
    fn default() -> Self {
        InterconnectOptions {
            origin_threshold: 2000,
            sender_threshold: 100,
            sweep: vec![0, 1, 10, 100, 1000, 2000, 10_000],
            bridge_min_count: 800,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedOptions {
    pub min_txns: usize,
    pub max_txns: usize,
    /// One embedding per dimension; the first is the reference for clustering.
    pub dims: Vec<usize>,
    pub epochs: usize,
    pub initial_lr: f64,
    pub min_feature_count: usize,
    pub downsample_rate: f64,
    pub negatives_per_positive: usize,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        let t = TrainConfig::default();
        EmbedOptions {
            min_txns: 60,
            max_txns: 15_000,
            dims: vec![16, 32],
            epochs: t.epochs,
            initial_lr: t.initial_lr,
            min_feature_count: t.min_feature_count,
            downsample_rate: t.downsample_rate,
            negatives_per_positive: t.negatives_per_positive,
        }
    }
}

impl EmbedOptions {
    pub fn train_config(&self, dim: usize, seed: u64, workers: usize) -> TrainConfig {
        TrainConfig {
            dim,
            epochs: self.epochs,
            initial_lr: self.initial_lr,
            min_feature_count: self.min_feature_count,
            downsample_rate: self.downsample_rate,
            wl_depth: 1,
            negatives_per_positive: self.negatives_per_positive,
            rng_seed: seed,
            workers,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterOptions {
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub elbow_threshold: f64,
    /// Fixed cluster count; when absent the elbow of the reference dimension decides.
    pub k: Option<usize>,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            k_min: 1,
            k_max: 8,
            restarts: DEFAULT_RESTARTS,
            elbow_threshold: DEFAULT_ELBOW_THRESHOLD,
            k: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolFeatOptions {
    pub kernels: Vec<Kernel>,
    pub dims: usize,
    /// RBF bandwidth; defaults to one over the feature count.
    pub rbf_gamma: Option<f64>,
    /// Append the fee tier to the PCA inputs.
    pub include_fee_tier: bool,
}

impl Default for PoolFeatOptions {
    fn default() -> Self {
        PoolFeatOptions {
            kernels: Kernel::ALL.to_vec(),
            dims: 3,
            rbf_gamma: None,
            include_fee_tier: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpChangeWindows {
    pub focus: String,
    pub baseline: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CryptonessOptions {
    pub z_threshold: f64,
    pub window_days: usize,
    pub step_days: usize,
    pub isotherm_bins: usize,
    /// Sliding fits at or below this cryptoness are left out of the R_pool summary.
    pub xi_floor: f64,
    pub op_change: Option<OpChangeWindows>,
}

impl Default for CryptonessOptions {
    fn default() -> Self {
        CryptonessOptions {
            z_threshold: 3.0,
            window_days: 30,
            step_days: 1,
            isotherm_bins: 10,
            xi_floor: 0.3,
            op_change: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Thread count for every parallel step; 1 gives reproducible output.
    pub workers: usize,
    pub inputs: Inputs,
    pub windows: Vec<WindowDef>,
    pub select: SelectOptions,
    pub interconnect: InterconnectOptions,
    pub embed: EmbedOptions,
    pub cluster: ClusterOptions,
    pub poolfeat: PoolFeatOptions,
    pub cryptoness: CryptonessOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: PathBuf::from("out"),
            seed: 1,
            workers: 1,
            inputs: Inputs::default(),
            windows: Vec::new(),
            select: SelectOptions::default(),
            interconnect: InterconnectOptions::default(),
            embed: EmbedOptions::default(),
            cluster: ClusterOptions::default(),
            poolfeat: PoolFeatOptions::default(),
            cryptoness: CryptonessOptions::default(),
        }
    }
}

fn config_err(m: impl Into<String>) -> Error {
    Error::Config(m.into())
}

impl RunConfig {
    /// Parses TOML, resolving relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.inputs.events);
        fix(&mut self.inputs.pools);
        fix(&mut self.inputs.token_classes);
        if let Some(c) = self.inputs.calendar.as_mut() {
            fix(c);
        }
    }

    pub fn time_windows(&self) -> Result<Vec<TimeWindow>> {
        self.windows.iter().map(WindowDef::to_window).collect()
    }

    pub fn window(&self, label: &str) -> Result<TimeWindow> {
        self.windows
            .iter()
            .find(|w| w.label == label)
            .ok_or_else(|| config_err(format!("no window labelled `{label}`")))?
            .to_window()
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(config_err("workers must be at least 1"));
        }
        if self.windows.is_empty() {
            return Err(config_err("at least one window is required"));
        }
        let mut labels = BTreeSet::new();
        for w in &self.windows {
            let ok = !w.label.is_empty()
                && w.label.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !ok {
                return Err(config_err(format!(
                    "window label `{}` must be non-empty ASCII letters, digits, `-` or `_`",
                    w.label
                )));
            }
            if !labels.insert(w.label.as_str()) {
                return Err(config_err(format!("duplicate window label `{}`", w.label)));
            }
            w.to_window()?;
        }
        self.select.config(self.time_windows()?).validate()?;

        let ic = &self.interconnect;
        if ic.sweep.windows(2).any(|p| p[0] > p[1]) {
            return Err(config_err("interconnect.sweep must be ascending"));
        }

        let e = &self.embed;
        if e.min_txns < 2 || e.min_txns > e.max_txns {
            return Err(config_err(format!(
                "embed trader bounds [{}, {}] are invalid",
                e.min_txns, e.max_txns
            )));
        }
        if e.dims.is_empty() {
            return Err(config_err("embed.dims must list at least one dimension"));
        }
        if e.dims.iter().collect::<BTreeSet<_>>().len() != e.dims.len() {
            return Err(config_err("embed.dims must be distinct"));
        }
        for &d in &e.dims {
            e.train_config(d, self.seed, self.workers).validate()?;
        }

        let c = &self.cluster;
        if c.k_min == 0 || c.k_max < c.k_min + 2 {
            return Err(config_err("cluster needs 1 <= k_min and at least three k values"));
        }
        if c.restarts == 0 || !(c.elbow_threshold > 0.0 && c.elbow_threshold < 1.0) {
            return Err(config_err("cluster restarts must be positive and elbow_threshold in (0, 1)"));
        }
        if let Some(k) = c.k {
            if !(c.k_min..=c.k_max).contains(&k) {
                return Err(config_err(format!("cluster.k = {k} is outside [k_min, k_max]")));
            }
        }

        let p = &self.poolfeat;
        if p.kernels.is_empty() || p.dims == 0 {
            return Err(config_err("poolfeat needs at least one kernel and one dimension"));
        }
        if p.rbf_gamma.is_some_and(|g| !(g > 0.0)) {
            return Err(config_err("poolfeat.rbf_gamma must be positive"));
        }

        let cr = &self.cryptoness;
        if !(cr.z_threshold > 0.0) {
            return Err(config_err("cryptoness.z_threshold must be positive"));
        }
        if cr.window_days < 3 || cr.step_days == 0 || cr.isotherm_bins < 2 {
            return Err(config_err(
                "cryptoness needs window_days >= 3, step_days >= 1 and isotherm_bins >= 2",
            ));
        }
        if let Some(oc) = &cr.op_change {
            let (f, b) = (self.window(&oc.focus)?, self.window(&oc.baseline)?);
            if f.overlaps(&b) {
                return Err(config_err(format!(
                    "op_change windows {} and {} overlap",
                    f.label, b.label
                )));
            }
        }
        Ok(())
    }

    /// Every input file named by the config must exist.
    pub fn check_inputs(&self) -> Result<()> {
        let i = &self.inputs;
        let named = [("events", Some(&i.events)), ("pools", Some(&i.pools)), ("token_classes", Some(&i.token_classes)), ("calendar", i.calendar.as_ref())];
        for (name, path) in named {
            let Some(path) = path else { continue };
            if path.as_os_str().is_empty() {
                return Err(config_err(format!("inputs.{name} is not set")));
            }
            if !path.is_file() {
                return Err(config_err(format!("inputs.{name}: {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    /// SHA-256 of the analysis settings. Paths are left out so that moving the
    /// inputs or the output directory does not change it; input contents are
    /// hashed separately.
    pub fn settings_hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(m) = v.as_object_mut() {
            m.remove("inputs");
            m.remove("output_dir");
        }
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&v)?)))
    }
}
