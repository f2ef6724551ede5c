//! The `mea-netinfer` command-line workflows.
//!
//! Every command resolves a [`RunConfig`] (defaults, then `--config` file,
//! then flags), writes its outputs under `out`, and finishes by writing
//! `run.cfg` (the merged configuration as a config file) and
//! `manifest.json` (command, values, per-key provenance and the list of
//! output files). `mea-netinfer replay <manifest.json>` re-runs a command
//! from its manifest.

pub mod bench;
pub mod config;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    compare_to_reference, cosine_similarity, degree_profile, posterior_metric_distribution,
    summarize_chain, summarize_metrics, threshold_network, write_metrics_csv, ChainSummary,
    DetectionReport, MetricSummary,
};
use crate::error::{Error, Result};
use crate::hierarchy::{
    infer_hierarchical, merge_region_posteriors, plan_grid_split, plan_split, read_layout,
    write_layout, MergedSummary, RegionLayout,
};
use crate::model::io::{read_matrix, read_network, write_matrix, write_network, write_vector};
use crate::model::{sample_signed_network, simulate_spike_train, NetworkSample};
use crate::sampler::chain_io::CHAIN_FILE;
use crate::sampler::{read_chain, run_gibbs, run_gibbs_from, write_chain};
use crate::spikedata::{
    default_grid, linear_geometry, read_spike_train, write_spike_train, SpikeTrain,
};

pub use bench::{run_bench, BenchReport, BenchSettings};
pub use config::{RunConfig, Source};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUN_CONFIG_FILE: &str = "run.cfg";
pub const TRAIN_FILE: &str = "train.measpikes";
pub const TRUTH_DIR: &str = "truth";
pub const SUMMARY_DIR: &str = "summary";
pub const EDGE_PROB_FILE: &str = "edge_prob.csv";
pub const MEAN_WEIGHT_FILE: &str = "mean_weight.csv";
pub const WEIGHT_LOWER_FILE: &str = "weight_lower.csv";
pub const WEIGHT_UPPER_FILE: &str = "weight_upper.csv";
pub const MEAN_BIAS_FILE: &str = "mean_bias.csv";
const MANIFEST_FORMAT: &str = "mea-netinfer manifest v1";

#[derive(Debug, Parser)]
#[command(
    name = "mea-netinfer",
    version,
    about = "Bayesian functional connectivity inference for MEA spike trains"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sampler worker threads (0 = all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Override any configuration key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw or load a ground-truth network and simulate a spike train.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of electrodes.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        bins: Option<usize>,
        /// Simulate from this network directory.
        #[arg(long)]
        truth_dir: Option<PathBuf>,
    },
    /// Sample the posterior network of a spike train.
    Infer {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Network directory used as the initial state.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
    },
    /// Two-level inference over regions of the array.
    SplitInfer {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        layout: Option<PathBuf>,
        /// Block grid such as `2x2`.
        #[arg(long)]
        grid_split: Option<String>,
        #[arg(long)]
        regions: Option<usize>,
        #[arg(long)]
        overlap: Option<usize>,
        /// Regions sampled concurrently (0 = all cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
    },
    /// Posterior distribution of graph metrics.
    Metrics {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        chain: Option<PathBuf>,
        #[arg(long)]
        theta_w: Option<f64>,
    },
    /// Cosine similarity and edge detection against a truth or reference.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Chain, summary or network directory.
        #[arg(long)]
        estimate: Option<PathBuf>,
        /// Network directory.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// CSV of reference edges `source,target`.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Time Gibbs sweeps over array sizes.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated electrode counts.
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Re-run a command from its manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

/// Command names as recorded in manifests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Generate,
    Infer,
    SplitInfer,
    Metrics,
    Compare,
    Bench,
}

/// Record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub command: CommandKind,
    pub version: String,
    pub config: BTreeMap<String, String>,
    pub provenance: BTreeMap<String, String>,
    /// Output files relative to the output directory, sorted.
    pub outputs: Vec<String>,
}

fn flag<T: ToString>(key: &'static str, value: &Option<T>) -> Option<(&'static str, String)> {
    value.as_ref().map(|v| (key, v.to_string()))
}

fn path_flag(key: &'static str, value: &Option<PathBuf>) -> Option<(&'static str, String)> {
    value.as_ref().map(|v| (key, v.display().to_string()))
}

/// Merge defaults, the `--config` file and command-line flags.
pub fn resolve_config(
    common: &CommonArgs,
    specific: &[Option<(&'static str, String)>],
) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.merge_file(path)?;
    }
    let shared = [
        flag("seed", &common.seed),
        path_flag("out", &common.out),
        flag("threads", &common.threads),
    ];
    for (k, v) in shared.iter().chain(specific).flatten() {
        cfg.set(k, v, Source::Flag)?;
    }
    for assignment in &common.set {
        let (k, v) = config::parse_assignment(assignment)?;
        cfg.set(&k, &v, Source::Flag)?;
    }
    Ok(cfg)
}

/// Parse arguments into the command to run and its configuration.
pub fn resolve(cli: &Cli) -> Result<(CommandKind, RunConfig)> {
    Ok(match &cli.command {
        Command::Generate {
            common,
            n,
            bins,
            truth_dir,
        } => (
            CommandKind::Generate,
            resolve_config(
                common,
                &[
                    flag("n_electrodes", n),
                    flag("bins", bins),
                    path_flag("truth_dir", truth_dir),
                ],
            )?,
        ),
        Command::Infer {
            common,
            input,
            init,
            iterations,
            burn_in,
        } => (
            CommandKind::Infer,
            resolve_config(
                common,
                &[
                    path_flag("input", input),
                    path_flag("init_dir", init),
                    flag("iterations", iterations),
                    flag("burn_in", burn_in),
                ],
            )?,
        ),
        Command::SplitInfer {
            common,
            input,
            layout,
            grid_split,
            regions,
            overlap,
            jobs,
            iterations,
            burn_in,
        } => (
            CommandKind::SplitInfer,
            resolve_config(
                common,
                &[
                    path_flag("input", input),
                    path_flag("layout", layout),
                    flag("grid_split", grid_split),
                    flag("regions", regions),
                    flag("overlap", overlap),
                    flag("jobs", jobs),
                    flag("iterations", iterations),
                    flag("burn_in", burn_in),
                ],
            )?,
        ),
        Command::Metrics {
            common,
            chain,
            theta_w,
        } => (
            CommandKind::Metrics,
            resolve_config(
                common,
                &[path_flag("chain", chain), flag("theta_w", theta_w)],
            )?,
        ),
        Command::Compare {
            common,
            estimate,
            truth,
            reference,
        } => (
            CommandKind::Compare,
            resolve_config(
                common,
                &[
                    path_flag("estimate", estimate),
                    path_flag("truth", truth),
                    path_flag("reference", reference),
                ],
            )?,
        ),
        Command::Bench {
            common,
            sizes,
            bins,
        } => (
            CommandKind::Bench,
            resolve_config(
                common,
                &[flag("bench_sizes", sizes), flag("bench_bins", bins)],
            )?,
        ),
        Command::Replay {
            manifest,
            out,
            threads,
            set,
        } => {
            let (kind, mut cfg) = config_from_manifest(manifest)?;
            if let Some(out) = out {
                cfg.set("out", &out.display().to_string(), Source::Flag)?;
            }
            if let Some(t) = threads {
                cfg.set("threads", &t.to_string(), Source::Flag)?;
            }
            for assignment in set {
                let (k, v) = config::parse_assignment(assignment)?;
                cfg.set(&k, &v, Source::Flag)?;
            }
            (kind, cfg)
        }
    })
}

/// Rebuild the configuration recorded in a manifest.
pub fn config_from_manifest(path: &Path) -> Result<(CommandKind, RunConfig)> {
    let file =
        File::open(path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    let manifest: Manifest = serde_json::from_reader(BufReader::new(file))?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(Error::Config(format!(
            "{}: unsupported manifest format {:?}",
            path.display(),
            manifest.format
        )));
    }
    let mut cfg = RunConfig::default();
    let source = Source::Manifest(path.display().to_string());
    for (k, v) in &manifest.config {
        cfg.set(k, v, source.clone())?;
    }
    Ok((manifest.command, cfg))
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let run = resolve(&cli).and_then(|(kind, cfg)| {
        execute(kind, &cfg)?;
        println!("{}", cfg.value("out"));
        Ok(())
    });
    match run {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Run one command with a resolved configuration.
pub fn execute(kind: CommandKind, cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir()?;
    std::fs::create_dir_all(&out)?;
    match kind {
        CommandKind::Generate => cmd_generate(cfg, &out)?,
        CommandKind::Infer => cmd_infer(cfg, &out)?,
        CommandKind::SplitInfer => cmd_split_infer(cfg, &out)?,
        CommandKind::Metrics => cmd_metrics(cfg, &out)?,
        CommandKind::Compare => cmd_compare(cfg, &out)?,
        CommandKind::Bench => cmd_bench(cfg, &out)?,
    }
    write_manifest(kind, cfg, &out)
}

fn list_outputs(root: &Path) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let mut pending = vec![root.to_path_buf()];
    while let Some(dir) = pending.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                pending.push(path);
            } else if let Ok(rel) = path.strip_prefix(root) {
                let rel = rel.to_string_lossy().replace('\\', "/");
                if rel != MANIFEST_FILE && rel != RUN_CONFIG_FILE {
                    files.push(rel);
                }
            }
        }
    }
    files.sort();
    Ok(files)
}

fn write_manifest(kind: CommandKind, cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::write(out.join(RUN_CONFIG_FILE), cfg.to_text())?;
    let manifest = Manifest {
        format: MANIFEST_FORMAT.to_string(),
        command: kind,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.values(),
        provenance: cfg.provenance(),
        outputs: list_outputs(out)?,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn open_input(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))
}

/// Read a MEASPIKES file.
pub fn load_train(path: &Path) -> Result<SpikeTrain> {
    read_spike_train(BufReader::new(open_input(path)?))
}

fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let hp = cfg.hyper_params()?;
    let seed: u64 = cfg.get("seed")?;
    let truth = match cfg.path("truth_dir") {
        Some(dir) => read_network(&dir)?,
        None => sample_signed_network(
            cfg.get("n_electrodes")?,
            cfg.get("truth_rho")?,
            cfg.get("truth_weight")?,
            cfg.get("truth_bias")?,
            seed,
        )?,
    };
    let n = truth.n_electrodes();
    let geometry = match cfg.value("geometry") {
        "grid" => default_grid(n),
        "linear" => linear_geometry(n),
        other => {
            return Err(Error::Config(format!(
                "geometry = {other:?}: expected grid or linear"
            )))
        }
    };
    let train = simulate_spike_train(
        &truth,
        cfg.get("bins")?,
        cfg.get("bin_ms")?,
        &hp,
        seed,
        Some(geometry),
    )?;
    write_network(&out.join(TRUTH_DIR), &truth)?;
    write_spike_train(&train, BufWriter::new(File::create(out.join(TRAIN_FILE))?))?;
    Ok(())
}

/// Write posterior summary matrices into `dir`; masked entries become `NA`.
pub fn write_summary(dir: &Path, s: &ChainSummary, mask: Option<&DMatrix<bool>>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_matrix(File::create(dir.join(EDGE_PROB_FILE))?, &s.edge_prob, mask)?;
    write_matrix(
        File::create(dir.join(MEAN_WEIGHT_FILE))?,
        &s.mean_weight,
        mask,
    )?;
    write_matrix(
        File::create(dir.join(WEIGHT_LOWER_FILE))?,
        &s.weight_lower,
        mask,
    )?;
    write_matrix(
        File::create(dir.join(WEIGHT_UPPER_FILE))?,
        &s.weight_upper,
        mask,
    )?;
    write_vector(File::create(dir.join(MEAN_BIAS_FILE))?, &s.mean_bias)
}

fn write_merged(dir: &Path, m: &MergedSummary) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_matrix(
        File::create(dir.join(EDGE_PROB_FILE))?,
        &m.edge_prob,
        Some(&m.estimated),
    )?;
    write_matrix(
        File::create(dir.join(MEAN_WEIGHT_FILE))?,
        &m.mean_weight,
        Some(&m.estimated),
    )?;
    write_vector(File::create(dir.join(MEAN_BIAS_FILE))?, &m.mean_bias)
}

fn write_chain_with_summary(dir: &Path, chain: &crate::sampler::PosteriorChain) -> Result<()> {
    write_chain(dir, chain)?;
    write_summary(&dir.join(SUMMARY_DIR), &summarize_chain(chain)?, None)
}

fn cmd_infer(cfg: &RunConfig, out: &Path) -> Result<()> {
    let hp = cfg.hyper_params()?;
    let sc = cfg.sampler_config()?;
    let train = load_train(&cfg.required_path("input")?)?;
    let chain = match cfg.path("init_dir") {
        Some(dir) => run_gibbs_from(&train, &hp, &sc, &read_network(&dir)?)?,
        None => run_gibbs(&train, &hp, &sc)?,
    };
    write_chain_with_summary(out, &chain)
}

fn region_dir(r: usize) -> String {
    format!("region_{r}")
}

/// The layout a split-infer run uses: an explicit file, a block grid, or a
/// region count.
pub fn resolve_layout(cfg: &RunConfig, train: &SpikeTrain) -> Result<RegionLayout> {
    let overlap: usize = cfg.get("overlap")?;
    let regions: usize = cfg.get("regions")?;
    let mut layout = if let Some(path) = cfg.path("layout") {
        read_layout(&path)?
    } else if let Some((rows, cols)) = cfg.grid_split()? {
        plan_grid_split(train.geometry(), rows, cols, overlap)?
    } else if regions > 0 {
        plan_split(train.geometry(), regions, overlap)?
    } else {
        return Err(Error::Config(
            "split-infer needs `layout`, `grid_split` or `regions`".into(),
        ));
    };
    if cfg.path("layout").is_none() || *cfg.source("aggregation") != Source::Default {
        layout.aggregation = cfg.aggregation()?;
    }
    layout.validate(train.n_electrodes())?;
    Ok(layout)
}

fn cmd_split_infer(cfg: &RunConfig, out: &Path) -> Result<()> {
    let hp = cfg.hyper_params()?;
    let sc = cfg.sampler_config()?;
    let train = load_train(&cfg.required_path("input")?)?;
    let layout = resolve_layout(cfg, &train)?;
    write_layout(&out.join("layout.json"), &layout)?;
    let result = infer_hierarchical(&train, &layout, &hp, &sc, cfg.get("jobs")?)?;
    for (r, chain) in result.regions.iter().enumerate() {
        write_chain_with_summary(&out.join(region_dir(r)), chain)?;
    }
    write_chain_with_summary(&out.join("regional"), &result.regional)?;
    let merged = merge_region_posteriors(&result.regions, &layout, train.n_electrodes())?;
    write_merged(&out.join("merged"), &merged)
}

/// Posterior graph-metric report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub theta_w: f64,
    pub theta_a: f64,
    pub n_samples: usize,
    pub summary: MetricSummary,
}

fn cmd_metrics(cfg: &RunConfig, out: &Path) -> Result<()> {
    let theta_w: f64 = cfg.get("theta_w")?;
    let theta_a: f64 = cfg.get("theta_a")?;
    let chain = read_chain(&cfg.required_path("chain")?)?;
    let metrics = posterior_metric_distribution(&chain, theta_w, theta_a)?;
    write_metrics_csv(
        &metrics,
        BufWriter::new(File::create(out.join("metrics.csv"))?),
    )?;
    let report = MetricsReport {
        theta_w,
        theta_a,
        n_samples: metrics.len(),
        summary: summarize_metrics(&metrics)?,
    };
    write_json(&out.join("metrics_summary.json"), &report)?;
    let summary = summarize_chain(&chain)?;
    let graph = threshold_network(&summary.mean_weight, &summary.edge_prob, theta_w, theta_a)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(out.join("degrees.csv"))?));
    w.write_record(["electrode", "indegree", "outdegree"])?;
    for (e, (i, o)) in degree_profile(&graph).into_iter().enumerate() {
        w.write_record([e.to_string(), i.to_string(), o.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Edge-probability and mean-weight matrices from a chain, summary or
/// network directory. Masked (`NA`) entries are NaN.
pub fn load_estimate(dir: &Path) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if dir.join(CHAIN_FILE).exists() {
        let s = summarize_chain(&read_chain(dir)?)?;
        return Ok((s.edge_prob, s.mean_weight));
    }
    if dir.join(EDGE_PROB_FILE).exists() {
        let p = read_matrix(open_input(&dir.join(EDGE_PROB_FILE))?)?;
        let w = read_matrix(open_input(&dir.join(MEAN_WEIGHT_FILE))?)?;
        return Ok((p, w));
    }
    if dir.join(SUMMARY_DIR).join(EDGE_PROB_FILE).exists() {
        return load_estimate(&dir.join(SUMMARY_DIR));
    }
    let net = read_network(dir)?;
    Ok((net.adjacency_f64(), net.effective_weights()))
}

/// Read reference edges from a `source,target` CSV with a header row.
pub fn read_reference_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(open_input(path)?));
    let mut edges = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<usize> {
            rec.get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    line: i + 2,
                    reason: "expected `source,target` electrode indices".into(),
                })
        };
        edges.push((field(0)?, field(1)?));
    }
    Ok(edges)
}

/// Comparison of an estimate against a truth and/or reference edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub theta_w: f64,
    pub theta_a: f64,
    /// Cosine of the edge-probability matrix against the true adjacency.
    pub cosine_a: Option<f64>,
    /// Cosine of the mean weights against the true weights.
    pub cosine_w: Option<f64>,
    pub truth_detection: Option<DetectionReport>,
    pub reference_detection: Option<DetectionReport>,
}

fn zero_masked(m: &DMatrix<f64>, mask: &DMatrix<bool>) -> DMatrix<f64> {
    m.zip_map(mask, |v, keep| if keep { v } else { 0.0 })
}

fn cmd_compare(cfg: &RunConfig, out: &Path) -> Result<()> {
    let theta_w: f64 = cfg.get("theta_w")?;
    let theta_a: f64 = cfg.get("theta_a")?;
    let (prob, weight) = load_estimate(&cfg.required_path("estimate")?)?;
    let truth: Option<NetworkSample> = cfg.path("truth").map(|d| read_network(&d)).transpose()?;
    let reference = cfg
        .path("reference")
        .map(|p| read_reference_edges(&p))
        .transpose()?;
    if truth.is_none() && reference.is_none() {
        return Err(Error::Config("compare needs `truth` or `reference`".into()));
    }
    let mask = prob
        .map(|v| !v.is_nan())
        .zip_map(&weight, |k, w| k && !w.is_nan());
    let prob = zero_masked(&prob, &mask);
    let weight = zero_masked(&weight, &mask);
    let graph = threshold_network(&weight, &prob, theta_w, theta_a)?;
    let mut report = CompareReport {
        theta_w,
        theta_a,
        cosine_a: None,
        cosine_w: None,
        truth_detection: None,
        reference_detection: None,
    };
    if let Some(truth) = &truth {
        if truth.n_electrodes() != prob.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "estimate has {} electrodes, truth has {}",
                prob.nrows(),
                truth.n_electrodes()
            )));
        }
        report.cosine_a = Some(cosine_similarity(
            &prob,
            &zero_masked(&truth.adjacency_f64(), &mask),
        )?);
        report.cosine_w = Some(cosine_similarity(
            &weight,
            &zero_masked(&truth.effective_weights(), &mask),
        )?);
        let edges: Vec<(usize, usize)> = (0..truth.n_electrodes())
            .flat_map(|m| (0..truth.n_electrodes()).map(move |n| (m, n)))
            .filter(|&(m, n)| truth.has_edge(m, n) && mask[(m, n)])
            .collect();
        if !edges.is_empty() {
            report.truth_detection = Some(compare_to_reference(&graph, &edges)?);
        }
    }
    if let Some(edges) = &reference {
        report.reference_detection = Some(compare_to_reference(&graph, edges)?);
    }
    write_json(&out.join("compare.json"), &report)
}

/// Bench settings from the `bench_*` keys.
pub fn bench_settings(cfg: &RunConfig) -> Result<BenchSettings> {
    Ok(BenchSettings {
        sizes: cfg.usize_list("bench_sizes")?,
        bins: cfg.get("bench_bins")?,
        warmup: cfg.get("bench_warmup")?,
        sweeps: cfg.get("bench_sweeps")?,
        regions: cfg.get("bench_regions")?,
        in_degree: cfg.get("bench_in_degree")?,
        weight: cfg.get("bench_weight")?,
        bias: cfg.get("bench_bias")?,
    })
}

fn cmd_bench(cfg: &RunConfig, out: &Path) -> Result<()> {
    let report = run_bench(
        &bench_settings(cfg)?,
        &cfg.hyper_params()?,
        &cfg.sampler_config()?,
    )?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(out.join("bench.csv"))?));
    w.write_record(["n_electrodes", "mean_sweep_s", "edges"])?;
    for t in &report.timings {
        w.write_record([
            t.n_electrodes.to_string(),
            t.mean_sweep_s.to_string(),
            t.edges.to_string(),
        ])?;
    }
    w.flush()?;
    write_json(&out.join("bench.json"), &report)
}
