//! Chain files.
//!
//! A chain is stored as `chain.jsonl`, one retained sample per line,
//!
//! ```text
//! {"iter":k,"loglik":v,"A":[[m,n],...],"W":[[m,n,w],...],"b":[...]}
//! ```
//!
//! listing only the included edges, plus `chain_meta.json` with the sampler
//! configuration, hyperparameters, electrode mapping and the per-sweep
//! log-likelihood trace. Reading a written chain yields the same edges,
//! included weights and biases; the weights of absent edges are not stored
//! and read back as 0.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::gibbs::{PosteriorChain, SamplerConfig};
use crate::error::{Error, Result};
use crate::model::{HyperParams, NetworkSample};

pub const CHAIN_FILE: &str = "chain.jsonl";
pub const CHAIN_META_FILE: &str = "chain_meta.json";
const FORMAT: &str = "mea-netinfer chain v1";

#[derive(Debug, Serialize, Deserialize)]
struct SampleLine {
    iter: usize,
    loglik: f64,
    #[serde(rename = "A")]
    adjacency: Vec<(usize, usize)>,
    #[serde(rename = "W")]
    weights: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
}

/// Contents of `chain_meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub format: String,
    pub n_electrodes: usize,
    pub n_samples: usize,
    pub electrodes: Vec<usize>,
    pub ids: Vec<String>,
    pub config: SamplerConfig,
    pub hyper: HyperParams,
    pub sweep_loglik: Vec<f64>,
}

impl ChainMeta {
    pub fn of(chain: &PosteriorChain) -> Self {
        ChainMeta {
            format: FORMAT.to_string(),
            n_electrodes: chain.n_electrodes(),
            n_samples: chain.len(),
            electrodes: chain.electrodes.clone(),
            ids: chain.ids.clone(),
            config: chain.config.clone(),
            hyper: chain.hyper.clone(),
            sweep_loglik: chain.sweep_loglik.clone(),
        }
    }
}

/// Write the samples as JSON lines.
pub fn write_chain_jsonl<W: Write>(chain: &PosteriorChain, sink: W) -> Result<()> {
    let mut out = BufWriter::new(sink);
    for ((sample, &iter), &loglik) in chain
        .samples
        .iter()
        .zip(&chain.iterations)
        .zip(&chain.loglik_trace)
    {
        let n = sample.n_electrodes();
        let mut adjacency = Vec::new();
        let mut weights = Vec::new();
        for m in 0..n {
            for t in 0..n {
                if sample.has_edge(m, t) {
                    adjacency.push((m, t));
                    weights.push((m, t, sample.weights[(m, t)]));
                }
            }
        }
        let line = SampleLine {
            iter,
            loglik,
            adjacency,
            weights,
            b: sample.bias.iter().copied().collect(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Write `chain.jsonl` and `chain_meta.json` into `dir`.
pub fn write_chain(dir: &Path, chain: &PosteriorChain) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_chain_jsonl(chain, File::create(dir.join(CHAIN_FILE))?)?;
    let mut meta = BufWriter::new(File::create(dir.join(CHAIN_META_FILE))?);
    serde_json::to_writer_pretty(&mut meta, &ChainMeta::of(chain))?;
    meta.write_all(b"\n")?;
    meta.flush()?;
    Ok(())
}

/// Read a chain written by [`write_chain`].
pub fn read_chain(dir: &Path) -> Result<PosteriorChain> {
    let open = |name: &str| {
        let path = dir.join(name);
        File::open(&path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))
    };
    let meta: ChainMeta = serde_json::from_reader(BufReader::new(open(CHAIN_META_FILE)?))?;
    if meta.format != FORMAT {
        return Err(Error::parse(
            1,
            format!("unsupported chain format {:?}", meta.format),
        ));
    }
    let n = meta.n_electrodes;
    let mut chain = PosteriorChain {
        samples: Vec::new(),
        iterations: Vec::new(),
        loglik_trace: Vec::new(),
        sweep_loglik: meta.sweep_loglik,
        config: meta.config,
        hyper: meta.hyper,
        electrodes: meta.electrodes,
        ids: meta.ids,
    };
    for (i, line) in BufReader::new(open(CHAIN_FILE)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: SampleLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(i + 1, format!("bad chain record: {e}")))?;
        if s.b.len() != n {
            return Err(Error::parse(
                i + 1,
                format!("expected {n} biases, found {}", s.b.len()),
            ));
        }
        let mut adjacency = DMatrix::<u8>::zeros(n, n);
        let mut weights = DMatrix::<f64>::zeros(n, n);
        for &(m, t) in &s.adjacency {
            if m >= n || t >= n {
                return Err(Error::parse(i + 1, format!("edge ({m}, {t}) out of range")));
            }
            adjacency[(m, t)] = 1;
        }
        for &(m, t, w) in &s.weights {
            if m >= n || t >= n {
                return Err(Error::parse(
                    i + 1,
                    format!("weight ({m}, {t}) out of range"),
                ));
            }
            weights[(m, t)] = w;
        }
        chain.samples.push(NetworkSample {
            adjacency,
            weights,
            bias: DVector::from_vec(s.b),
        });
        chain.iterations.push(s.iter);
        chain.loglik_trace.push(s.loglik);
    }
    if chain.samples.len() != meta.n_samples {
        return Err(Error::InvalidTrain(format!(
            "chain metadata announces {} samples, file holds {}",
            meta.n_samples,
            chain.samples.len()
        )));
    }
    Ok(chain)
}
