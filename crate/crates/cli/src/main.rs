use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dexlens_core::pipeline::{run_pipeline, synthetic_run_config, OpChangeWindows, RunConfig, Stage, WindowDef};
use dexlens_core::poolfeat::Kernel;
use dexlens_core::synth::{generate_synthetic, SyntheticSpec};
use dexlens_core::{Error, Result};

/// Pool universe selection, interconnectedness, trader embeddings and
/// crypto-law diagnostics over DEX event logs.
#[derive(Parser)]
#[command(name = "dexlens", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic fixture with planted ground truth and a matching config.toml.
    Synth(SynthArgs),
    /// Select per-window pool universes.
    Select(RunArgs),
    /// Common-agent graphs, bridges and centrality.
    Interconnect(RunArgs),
    /// Train trader embeddings.
    Embed(RunArgs),
    /// Cluster trader embeddings and profile the clusters.
    Cluster(RunArgs),
    /// Pool features, Spearman correlations and kernel PCA.
    Poolfeat(RunArgs),
    /// Crypto-law fits, sliding cryptoness, isotherms and opChange.
    Cryptoness(RunArgs),
    /// Every stage in dependency order.
    RunAll(RunArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Directory for the generated files.
    #[arg(long)]
    out: PathBuf,
    /// JSON file with a full synthetic spec; defaults to the built-in fixture.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    days: Option<usize>,
    /// Multiplicative volume noise on lawful pools.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    lts_per_archetype: Option<usize>,
}

fn op_change(s: &str) -> std::result::Result<OpChangeWindows, String> {
    let (focus, baseline) = s.split_once(':').ok_or("expected FOCUS:BASELINE")?;
    Ok(OpChangeWindows {
        focus: focus.into(),
        baseline: baseline.into(),
    })
}

/// Run settings. A config file supplies defaults; every flag overrides the
/// matching config field.
#[derive(Args)]
struct RunArgs {
    /// TOML run config; relative paths inside it resolve against its directory.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Threads for parallel steps; 1 is the reproducible mode.
    #[arg(long)]
    workers: Option<usize>,

    #[arg(long, help_heading = "Inputs")]
    events: Option<PathBuf>,
    #[arg(long, help_heading = "Inputs")]
    pools: Option<PathBuf>,
    #[arg(long, help_heading = "Inputs")]
    token_classes: Option<PathBuf>,
    #[arg(long, help_heading = "Inputs")]
    calendar: Option<PathBuf>,
    /// Analysis window as LABEL:START:END with YYYY-MM-DD days, END exclusive.
    /// Repeatable; replaces the config's windows.
    #[arg(long = "window", help_heading = "Inputs")]
    windows: Vec<WindowDef>,

    #[arg(long, help_heading = "Select")]
    min_txn_count: Option<u64>,
    #[arg(long, help_heading = "Select")]
    min_pools_per_token: Option<usize>,
    #[arg(long, help_heading = "Select")]
    tvl_threshold: Option<f64>,

    #[arg(long, help_heading = "Interconnect")]
    origin_threshold: Option<u64>,
    #[arg(long, help_heading = "Interconnect")]
    sender_threshold: Option<u64>,
    /// Comma-separated ascending thresholds.
    #[arg(long, value_delimiter = ',', help_heading = "Interconnect")]
    sweep: Option<Vec<u64>>,
    #[arg(long, help_heading = "Interconnect")]
    bridge_min_count: Option<u64>,

    #[arg(long, help_heading = "Embed")]
    min_txns: Option<usize>,
    #[arg(long, help_heading = "Embed")]
    max_txns: Option<usize>,
    /// Comma-separated embedding dimensions; the first is the reference.
    #[arg(long, value_delimiter = ',', help_heading = "Embed")]
    dims: Option<Vec<usize>>,
    #[arg(long, help_heading = "Embed")]
    epochs: Option<usize>,
    #[arg(long, help_heading = "Embed")]
    initial_lr: Option<f64>,
    #[arg(long, help_heading = "Embed")]
    min_feature_count: Option<usize>,
    #[arg(long, help_heading = "Embed")]
    downsample_rate: Option<f64>,
    #[arg(long, help_heading = "Embed")]
    negatives_per_positive: Option<usize>,

    #[arg(long, help_heading = "Cluster")]
    k_min: Option<usize>,
    #[arg(long, help_heading = "Cluster")]
    k_max: Option<usize>,
    #[arg(long, help_heading = "Cluster")]
    restarts: Option<usize>,
    #[arg(long, help_heading = "Cluster")]
    elbow_threshold: Option<f64>,
    /// Fixed cluster count instead of the elbow choice.
    #[arg(long, help_heading = "Cluster")]
    k: Option<usize>,

    /// Comma-separated subset of linear, rbf, cosine.
    #[arg(long, value_delimiter = ',', help_heading = "Poolfeat")]
    kernels: Option<Vec<Kernel>>,
    #[arg(long, help_heading = "Poolfeat")]
    pca_dims: Option<usize>,
    #[arg(long, help_heading = "Poolfeat")]
    rbf_gamma: Option<f64>,
    #[arg(long, help_heading = "Poolfeat")]
    include_fee_tier: Option<bool>,

    #[arg(long, help_heading = "Cryptoness")]
    z_threshold: Option<f64>,
    #[arg(long, help_heading = "Cryptoness")]
    window_days: Option<usize>,
    #[arg(long, help_heading = "Cryptoness")]
    step_days: Option<usize>,
    #[arg(long, help_heading = "Cryptoness")]
    isotherm_bins: Option<usize>,
    #[arg(long, help_heading = "Cryptoness")]
    xi_floor: Option<f64>,
    /// Window labels as FOCUS:BASELINE.
    #[arg(long, value_parser = op_change, help_heading = "Cryptoness")]
    op_change: Option<OpChangeWindows>,
}

fn set<T>(field: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *field = v;
    }
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        set(&mut c.output_dir, self.output_dir);
        set(&mut c.seed, self.seed);
        set(&mut c.workers, self.workers);
        set(&mut c.inputs.events, self.events);
        set(&mut c.inputs.pools, self.pools);
        set(&mut c.inputs.token_classes, self.token_classes);
        if self.calendar.is_some() {
            c.inputs.calendar = self.calendar;
        }
        if !self.windows.is_empty() {
            c.windows = self.windows;
        }
        set(&mut c.select.min_txn_count, self.min_txn_count);
        set(&mut c.select.min_pools_per_token, self.min_pools_per_token);
        set(&mut c.select.tvl_threshold, self.tvl_threshold);
        set(&mut c.interconnect.origin_threshold, self.origin_threshold);
        set(&mut c.interconnect.sender_threshold, self.sender_threshold);
        set(&mut c.interconnect.sweep, self.sweep);
        set(&mut c.interconnect.bridge_min_count, self.bridge_min_count);
        set(&mut c.embed.min_txns, self.min_txns);
        set(&mut c.embed.max_txns, self.max_txns);
        set(&mut c.embed.dims, self.dims);
        set(&mut c.embed.epochs, self.epochs);
        set(&mut c.embed.initial_lr, self.initial_lr);
        set(&mut c.embed.min_feature_count, self.min_feature_count);
        set(&mut c.embed.downsample_rate, self.downsample_rate);
        set(&mut c.embed.negatives_per_positive, self.negatives_per_positive);
        set(&mut c.cluster.k_min, self.k_min);
        set(&mut c.cluster.k_max, self.k_max);
        set(&mut c.cluster.restarts, self.restarts);
        set(&mut c.cluster.elbow_threshold, self.elbow_threshold);
        if self.k.is_some() {
            c.cluster.k = self.k;
        }
        set(&mut c.poolfeat.kernels, self.kernels);
        set(&mut c.poolfeat.dims, self.pca_dims);
        if self.rbf_gamma.is_some() {
            c.poolfeat.rbf_gamma = self.rbf_gamma;
        }
        set(&mut c.poolfeat.include_fee_tier, self.include_fee_tier);
        set(&mut c.cryptoness.z_threshold, self.z_threshold);
        set(&mut c.cryptoness.window_days, self.window_days);
        set(&mut c.cryptoness.step_days, self.step_days);
        set(&mut c.cryptoness.isotherm_bins, self.isotherm_bins);
        set(&mut c.cryptoness.xi_floor, self.xi_floor);
        if self.op_change.is_some() {
            c.cryptoness.op_change = self.op_change;
        }
        Ok(c)
    }
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => SyntheticSpec::default(),
    };
    set(&mut spec.seed, args.seed);
    set(&mut spec.days, args.days);
    set(&mut spec.noise, args.noise);
    set(&mut spec.lts_per_archetype, args.lts_per_archetype);
    spec.validate()?;
    let (files, manifest) = generate_synthetic(&spec, &args.out)?;
    let config = args.out.join("config.toml");
    write(&config, synthetic_run_config(&spec).to_toml()?)?;
    write(&args.out.join("spec.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
    println!(
        "wrote {} events over {} pools and {} traders to {}",
        manifest.events,
        manifest.pools.len(),
        manifest.lt_archetype.len(),
        args.out.display()
    );
    println!("ground truth: {}", files.manifest.display());
    println!("run with: dexlens run-all --config {}", config.display());
    Ok(())
}

fn write(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn run(args: RunArgs, stages: &[Stage]) -> Result<()> {
    let cfg = args.into_config()?;
    let requested: BTreeSet<Stage> = stages.iter().copied().collect();
    let report = run_pipeline(&cfg, &requested)?;
    for s in &report.order {
        let rec = &report.manifest.stages[s];
        println!("{s}: {:.2}s", report.timings[s]);
        for note in &rec.notes {
            println!("  note: {note}");
        }
    }
    println!(
        "{} files in {}",
        report.manifest.outputs.len(),
        report.output_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Select(a) => run(a, &[Stage::Select]),
        Command::Interconnect(a) => run(a, &[Stage::Interconnect]),
        Command::Embed(a) => run(a, &[Stage::Embed]),
        Command::Cluster(a) => run(a, &[Stage::Cluster]),
        Command::Poolfeat(a) => run(a, &[Stage::Poolfeat]),
        Command::Cryptoness(a) => run(a, &[Stage::Cryptoness]),
        Command::RunAll(a) => run(a, &Stage::ALL),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
