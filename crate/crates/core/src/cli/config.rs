//! Flat `key = value` run configuration with per-key provenance.
//!
//! Values are merged in the order built-in defaults, config file, command
//! line; the last writer wins and is recorded as the key's source. Every key
//! must be one of [`KEYS`]; anything else is rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::Aggregation;
use crate::model::{FilterMode, HyperParams, NiwPrior};
use crate::sampler::{PgMethod, SamplerConfig, ScanOrder};

/// Every accepted key with its default value and a one-line description.
/// An empty default means "unset".
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "master RNG seed"),
    ("threads", "0", "sampler worker threads (0 = all cores)"),
    (
        "jobs",
        "0",
        "regions sampled concurrently by split-infer (0 = all cores)",
    ),
    ("out", "run", "output directory"),
    // model priors
    ("rho", "0.5", "prior edge probability"),
    ("tau_ms", "15", "kernel time constant in ms"),
    ("window_bins", "100", "kernel length T in bins"),
    (
        "filter",
        "truncated",
        "history filter: truncated | recursive",
    ),
    ("mu_w", "1", "weight prior mean"),
    ("s_w", "1", "weight prior variance"),
    ("mu_b", "0", "bias prior mean"),
    ("s_b", "1", "bias prior variance"),
    ("niw_mean", "0", "NIW hyperprior mean m0"),
    ("niw_kappa", "1", "NIW hyperprior kappa0"),
    ("niw_scale", "1", "NIW hyperprior scale Psi"),
    ("niw_dof", "3", "NIW hyperprior degrees of freedom nu"),
    // sampler
    ("iterations", "1000", "Gibbs sweeps"),
    (
        "burn_in",
        "500",
        "sweeps discarded before retaining samples",
    ),
    ("thin", "1", "keep every k-th post-burn-in sweep"),
    (
        "resample_hypers",
        "false",
        "resample weight/bias priors from the NIW hyperprior",
    ),
    ("allow_self_edges", "true", "allow m -> m connections"),
    (
        "scan",
        "systematic",
        "source order within a row: systematic | random",
    ),
    (
        "pg_method",
        "exact",
        "Polya-Gamma sampler: exact | truncated-sum",
    ),
    ("pg_terms", "200", "terms kept by the truncated-sum sampler"),
    // inputs
    ("input", "", "spike train file (MEASPIKES)"),
    (
        "init_dir",
        "",
        "network directory used as the initial state",
    ),
    // generate
    ("n_electrodes", "4", "electrodes in a generated array"),
    ("bins", "60000", "bins to simulate"),
    ("bin_ms", "1", "bin width in ms"),
    (
        "geometry",
        "grid",
        "generated electrode layout: grid | linear",
    ),
    (
        "truth_dir",
        "",
        "network directory to simulate from instead of a random truth",
    ),
    (
        "truth_rho",
        "0.3",
        "edge probability of a random truth (no self-edges)",
    ),
    (
        "truth_weight",
        "1",
        "magnitude of random truth weights (sign is random)",
    ),
    (
        "truth_bias",
        "-2",
        "bias of every electrode in a random truth",
    ),
    // split-infer
    ("layout", "", "region layout JSON file"),
    ("grid_split", "", "block grid as ROWSxCOLS, e.g. 2x2"),
    (
        "regions",
        "0",
        "number of regions when no grid or layout is given",
    ),
    (
        "overlap",
        "0",
        "electrodes shared by adjacent regions (even)",
    ),
    (
        "aggregation",
        "any-spike",
        "super-electrode rule: any-spike | mean-threshold:<theta>",
    ),
    // metrics / compare
    ("chain", "", "chain directory to analyze"),
    (
        "theta_w",
        "0.05",
        "minimum |mean weight| kept when thresholding",
    ),
    (
        "theta_a",
        "0.5",
        "minimum edge probability kept when thresholding summaries",
    ),
    (
        "estimate",
        "",
        "chain, summary or network directory to compare",
    ),
    ("truth", "", "network directory holding the reference truth"),
    ("reference", "", "CSV of reference edges (source,target)"),
    // bench
    ("bench_sizes", "16,32,64,128", "array sizes timed by bench"),
    ("bench_bins", "3000", "bins simulated per bench size"),
    ("bench_warmup", "40", "untimed sweeps before timing"),
    ("bench_sweeps", "10", "timed sweeps per size"),
    (
        "bench_regions",
        "4",
        "regions of the per-region timing at the largest size",
    ),
    (
        "bench_in_degree",
        "2",
        "inputs per electrode in the bench truth",
    ),
    ("bench_weight", "1", "magnitude of bench truth weights"),
    (
        "bench_bias",
        "-3",
        "bias of every electrode in the bench truth",
    ),
];

/// Where a configuration value came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Default,
    File(String),
    Flag,
    Manifest(String),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Default => write!(f, "default"),
            Source::File(p) => write!(f, "file:{p}"),
            Source::Flag => write!(f, "flag"),
            Source::Manifest(p) => write!(f, "manifest:{p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    source: Source,
}

/// Merged settings of one command invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    entries: BTreeMap<String, Entry>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let entries = KEYS
            .iter()
            .map(|&(k, v, _)| {
                (
                    k.to_string(),
                    Entry {
                        value: v.to_string(),
                        source: Source::Default,
                    },
                )
            })
            .collect();
        RunConfig { entries }
    }
}

/// Parse flat `key = value` text. `#` starts a comment; blank lines are
/// skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Split a `key=value` command-line assignment.
pub fn parse_assignment(text: &str) -> Result<(String, String)> {
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("`{text}` is not of the form key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

impl RunConfig {
    /// Set one key; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str, source: Source) -> Result<()> {
        let entry = self
            .entries
            .get_mut(key)
            .ok_or_else(|| Error::Config(format!("unknown configuration key `{key}`")))?;
        entry.value = value.to_string();
        entry.source = source;
        Ok(())
    }

    /// Merge a config file over the current values.
    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let source = Source::File(path.display().to_string());
        for (k, v) in parse_config_text(&text)? {
            self.set(&k, &v, source.clone())?;
        }
        Ok(())
    }

    pub fn value(&self, key: &str) -> &str {
        &self
            .entries
            .get(key)
            .unwrap_or_else(|| panic!("configuration key `{key}` is not declared"))
            .value
    }

    pub fn source(&self, key: &str) -> &Source {
        &self.entries[key].source
    }

    /// Parse a value, naming the key on failure.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.value(key);
        raw.parse::<T>()
            .map_err(|e| Error::Config(format!("{key} = {raw:?}: {e}")))
    }

    /// Path-valued key; `None` when unset.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let raw = self.value(key);
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    /// Path-valued key that must be set.
    pub fn required_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| Error::Config(format!("`{key}` must be set")))
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        self.required_path("out")
    }

    /// Current values keyed by name.
    pub fn values(&self) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .map(|(k, e)| (k.clone(), e.value.clone()))
            .collect()
    }

    /// Source of every value, keyed by name.
    pub fn provenance(&self) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .map(|(k, e)| (k.clone(), e.source.to_string()))
            .collect()
    }

    /// The merged configuration as a config file that reproduces it.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, e) in &self.entries {
            s.push_str(&format!("{k} = {}\n", e.value));
        }
        s
    }

    pub fn hyper_params(&self) -> Result<HyperParams> {
        let filter = match self.value("filter") {
            "truncated" => FilterMode::Truncated,
            "recursive" => FilterMode::Recursive,
            other => {
                return Err(Error::Config(format!(
                    "filter = {other:?}: expected truncated or recursive"
                )))
            }
        };
        let hp = HyperParams {
            rho: self.get("rho")?,
            tau_ms: self.get("tau_ms")?,
            window_bins: self.get("window_bins")?,
            niw: NiwPrior {
                mean: self.get("niw_mean")?,
                kappa: self.get("niw_kappa")?,
                scale: self.get("niw_scale")?,
                dof: self.get("niw_dof")?,
            },
            mu_w: self.get("mu_w")?,
            s_w: self.get("s_w")?,
            mu_b: self.get("mu_b")?,
            s_b: self.get("s_b")?,
            filter,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig> {
        let scan = match self.value("scan") {
            "systematic" => ScanOrder::Systematic,
            "random" => ScanOrder::Random,
            other => {
                return Err(Error::Config(format!(
                    "scan = {other:?}: expected systematic or random"
                )))
            }
        };
        let pg_method = match self.value("pg_method") {
            "exact" => PgMethod::Exact,
            "truncated-sum" => PgMethod::TruncatedSum {
                terms: self.get("pg_terms")?,
            },
            other => {
                return Err(Error::Config(format!(
                    "pg_method = {other:?}: expected exact or truncated-sum"
                )))
            }
        };
        let cfg = SamplerConfig {
            n_iterations: self.get("iterations")?,
            burn_in: self.get("burn_in")?,
            seed: self.get("seed")?,
            resample_hypers: self.get("resample_hypers")?,
            allow_self_edges: self.get("allow_self_edges")?,
            parallel_width: self.get("threads")?,
            thin: self.get("thin")?,
            scan,
            pg_method,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn aggregation(&self) -> Result<Aggregation> {
        let raw = self.value("aggregation");
        if raw == "any-spike" {
            return Ok(Aggregation::AnySpike);
        }
        raw.strip_prefix("mean-threshold:")
            .and_then(|t| t.trim().parse::<f64>().ok())
            .map(Aggregation::MeanThreshold)
            .ok_or_else(|| {
                Error::Config(format!(
                    "aggregation = {raw:?}: expected any-spike or mean-threshold:<theta>"
                ))
            })
    }

    /// `grid_split` as `(block_rows, block_cols)`, if set.
    pub fn grid_split(&self) -> Result<Option<(usize, usize)>> {
        let raw = self.value("grid_split");
        if raw.is_empty() {
            return Ok(None);
        }
        let parsed = raw
            .split_once(['x', 'X'])
            .and_then(|(r, c)| Some((r.trim().parse().ok()?, c.trim().parse().ok()?)));
        parsed
            .map(Some)
            .ok_or_else(|| Error::Config(format!("grid_split = {raw:?}: expected ROWSxCOLS")))
    }

    /// Comma-separated list of integers.
    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>> {
        self.value(key)
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Config(format!("{key}: {s:?}: {e}")))
            })
            .collect()
    }
}
