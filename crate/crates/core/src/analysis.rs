//! Posterior summaries, ground-truth comparison and graph topology.
//!
//! Graph metrics treat the thresholded network as an undirected simple graph
//! (an edge in either direction links two electrodes; self-edges are
//! ignored). Shortest paths are averaged over ordered pairs that are
//! reachable, and the share of reachable pairs is reported separately.

use std::collections::{BTreeSet, VecDeque};
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::PosteriorChain;

/// Default magnitude threshold on posterior mean weights.
pub const DEFAULT_THETA_W: f64 = 0.05;
/// Default threshold on posterior edge probabilities.
pub const DEFAULT_THETA_A: f64 = 0.5;

/// Elementwise posterior summary of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary {
    /// Mean of `A`.
    pub edge_prob: DMatrix<f64>,
    /// Mean of `A ∘ W`.
    pub mean_weight: DMatrix<f64>,
    /// 2.5% and 97.5% empirical quantiles of `A ∘ W`.
    pub weight_lower: DMatrix<f64>,
    pub weight_upper: DMatrix<f64>,
    pub mean_bias: DVector<f64>,
    pub n_samples: usize,
}

/// Empirical quantile of sorted data, interpolating linearly between order
/// statistics (`h = (n - 1) p`).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Posterior means and central 95% weight intervals.
pub fn summarize_chain(chain: &PosteriorChain) -> Result<ChainSummary> {
    let first = chain
        .samples
        .first()
        .ok_or_else(|| Error::Undefined("cannot summarize an empty chain".into()))?;
    let n = first.n_electrodes();
    let count = chain.len() as f64;
    let mut edge_prob = DMatrix::zeros(n, n);
    let mut mean_weight = DMatrix::zeros(n, n);
    let mut mean_bias = DVector::zeros(n);
    for s in &chain.samples {
        if s.n_electrodes() != n {
            return Err(Error::DimensionMismatch(
                "chain samples differ in size".into(),
            ));
        }
        edge_prob += s.adjacency_f64();
        mean_weight += s.effective_weights();
        mean_bias += &s.bias;
    }
    edge_prob /= count;
    mean_weight /= count;
    mean_bias /= count;

    let mut weight_lower = DMatrix::zeros(n, n);
    let mut weight_upper = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(chain.len());
    for m in 0..n {
        for t in 0..n {
            values.clear();
            values.extend(chain.samples.iter().map(|s| {
                if s.has_edge(m, t) {
                    s.weights[(m, t)]
                } else {
                    0.0
                }
            }));
            values.sort_by(f64::total_cmp);
            weight_lower[(m, t)] = quantile(&values, 0.025);
            weight_upper[(m, t)] = quantile(&values, 0.975);
        }
    }
    Ok(ChainSummary {
        edge_prob,
        mean_weight,
        weight_lower,
        weight_upper,
        mean_bias,
        n_samples: chain.len(),
    })
}

/// Cosine of the angle between two matrices viewed as flat vectors.
pub fn cosine_similarity(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "cannot compare {:?} with {:?} matrices",
            a.shape(),
            b.shape()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Undefined(
            "cosine similarity with an all-zero matrix".into(),
        ));
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Binary directed graph on `n` nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiGraph {
    n: usize,
    edges: Vec<bool>,
}

impl DiGraph {
    pub fn empty(n: usize) -> Self {
        DiGraph {
            n,
            edges: vec![false; n * n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = DiGraph::empty(n);
        for &(m, t) in edges {
            if m >= n || t >= n {
                return Err(Error::OutOfRange(format!(
                    "edge ({m}, {t}) in a {n}-node graph"
                )));
            }
            g.add_edge(m, t);
        }
        Ok(g)
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn add_edge(&mut self, m: usize, t: usize) {
        self.edges[m * self.n + t] = true;
    }

    pub fn has_edge(&self, m: usize, t: usize) -> bool {
        self.edges[m * self.n + t]
    }

    /// All directed edges `(source, target)`, self-edges included.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|m| (0..self.n).map(move |t| (m, t)))
            .filter(|&(m, t)| self.has_edge(m, t))
            .collect()
    }

    /// Directed edges between distinct nodes.
    pub fn n_connections(&self) -> usize {
        self.edges().iter().filter(|(m, t)| m != t).count()
    }

    /// Neighbor lists of the symmetrized simple graph.
    pub fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        (0..self.n)
            .map(|u| {
                (0..self.n)
                    .filter(|&v| v != u && (self.has_edge(u, v) || self.has_edge(v, u)))
                    .collect()
            })
            .collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |m, t| {
            f64::from(u8::from(self.has_edge(m, t)))
        })
    }
}

/// Keep edge `m -> n` iff `|w_mean| >= theta_w` and `a_mean >= theta_a`.
pub fn threshold_network(
    w_mean: &DMatrix<f64>,
    a_mean: &DMatrix<f64>,
    theta_w: f64,
    theta_a: f64,
) -> Result<DiGraph> {
    if w_mean.shape() != a_mean.shape() || w_mean.nrows() != w_mean.ncols() {
        return Err(Error::DimensionMismatch(
            "weight and probability matrices must be square and of equal size".into(),
        ));
    }
    let n = w_mean.nrows();
    let mut g = DiGraph::empty(n);
    for m in 0..n {
        for t in 0..n {
            if w_mean[(m, t)].abs() >= theta_w && a_mean[(m, t)] >= theta_a {
                g.add_edge(m, t);
            }
        }
    }
    Ok(g)
}

/// Topology of a thresholded network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphMetrics {
    /// Directed edges between distinct electrodes.
    pub n_connections: usize,
    pub avg_clustering: f64,
    /// Mean shortest-path length over reachable ordered pairs (0 if none).
    pub avg_path_length: f64,
    /// Share of ordered pairs of distinct nodes that are connected.
    pub reachable_fraction: f64,
}

pub fn graph_metrics(g: &DiGraph) -> GraphMetrics {
    let n = g.n_nodes();
    let nbrs = g.undirected_neighbors();
    let linked = |u: usize, v: usize| u != v && (g.has_edge(u, v) || g.has_edge(v, u));

    let mut clustering = 0.0;
    for list in &nbrs {
        let d = list.len();
        if d < 2 {
            continue;
        }
        let mut links = 0usize;
        for (i, &u) in list.iter().enumerate() {
            for &v in &list[i + 1..] {
                if linked(u, v) {
                    links += 1;
                }
            }
        }
        clustering += links as f64 / (d * (d - 1) / 2) as f64;
    }

    let mut total = 0usize;
    let mut reachable = 0usize;
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        dist.fill(usize::MAX);
        dist[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &v in &nbrs[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    total += dist[v];
                    reachable += 1;
                    queue.push_back(v);
                }
            }
        }
    }
    let pairs = n * n.saturating_sub(1);
    GraphMetrics {
        n_connections: g.n_connections(),
        avg_clustering: if n == 0 { 0.0 } else { clustering / n as f64 },
        avg_path_length: if reachable == 0 {
            0.0
        } else {
            total as f64 / reachable as f64
        },
        reachable_fraction: if pairs == 0 {
            0.0
        } else {
            reachable as f64 / pairs as f64
        },
    }
}

/// In- and out-degree of every node, self-edges excluded.
pub fn degree_profile(g: &DiGraph) -> Vec<(usize, usize)> {
    let mut deg = vec![(0, 0); g.n_nodes()];
    for (m, t) in g.edges() {
        if m != t {
            deg[t].0 += 1;
            deg[m].1 += 1;
        }
    }
    deg
}

/// Agreement of a network with a list of reference connections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// Share of reference edges present in the network.
    pub fraction: f64,
    pub missed: Vec<(usize, usize)>,
    /// Network edges (between distinct nodes) absent from the reference.
    pub extra: usize,
}

pub fn compare_to_reference(g: &DiGraph, reference: &[(usize, usize)]) -> Result<DetectionReport> {
    let reference: BTreeSet<(usize, usize)> = reference.iter().copied().collect();
    if reference.is_empty() {
        return Err(Error::Undefined(
            "detection rate of an empty reference".into(),
        ));
    }
    let n = g.n_nodes();
    if let Some(&(m, t)) = reference.iter().find(|&&(m, t)| m >= n || t >= n) {
        return Err(Error::OutOfRange(format!(
            "reference edge ({m}, {t}) in a {n}-node graph"
        )));
    }
    let missed: Vec<(usize, usize)> = reference
        .iter()
        .copied()
        .filter(|&(m, t)| !g.has_edge(m, t))
        .collect();
    let extra = g
        .edges()
        .into_iter()
        .filter(|&(m, t)| m != t && !reference.contains(&(m, t)))
        .count();
    Ok(DetectionReport {
        fraction: (reference.len() - missed.len()) as f64 / reference.len() as f64,
        missed,
        extra,
    })
}

/// Graph metrics of every retained sample, each thresholded on its own
/// `A ∘ W`.
pub fn posterior_metric_distribution(
    chain: &PosteriorChain,
    theta_w: f64,
    theta_a: f64,
) -> Result<Vec<GraphMetrics>> {
    if chain.is_empty() {
        return Err(Error::Undefined("metrics of an empty chain".into()));
    }
    chain
        .samples
        .par_iter()
        .map(|s| {
            let g =
                threshold_network(&s.effective_weights(), &s.adjacency_f64(), theta_w, theta_a)?;
            Ok(graph_metrics(&g))
        })
        .collect()
}

/// Mean and central 95% interval of one statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Interval {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            lower: quantile(&sorted, 0.025),
            upper: quantile(&sorted, 0.975),
        }
    }

    /// Whether the two intervals share no point.
    pub fn disjoint(&self, other: &Interval) -> bool {
        self.upper < other.lower || other.upper < self.lower
    }
}

/// Posterior distribution summary of each graph metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n_connections: Interval,
    pub avg_clustering: Interval,
    pub avg_path_length: Interval,
    pub reachable_fraction: Interval,
}

pub fn summarize_metrics(metrics: &[GraphMetrics]) -> Result<MetricSummary> {
    if metrics.is_empty() {
        return Err(Error::Undefined("summary of an empty metric list".into()));
    }
    let col =
        |f: fn(&GraphMetrics) -> f64| Interval::of(&metrics.iter().map(f).collect::<Vec<_>>());
    Ok(MetricSummary {
        n_connections: col(|m| m.n_connections as f64),
        avg_clustering: col(|m| m.avg_clustering),
        avg_path_length: col(|m| m.avg_path_length),
        reachable_fraction: col(|m| m.reachable_fraction),
    })
}

/// Write per-sample metrics as CSV.
pub fn write_metrics_csv<W: Write>(metrics: &[GraphMetrics], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "sample",
        "n_connections",
        "avg_clustering",
        "avg_path_length",
        "reachable_fraction",
    ])?;
    for (i, m) in metrics.iter().enumerate() {
        w.write_record([
            i.to_string(),
            m.n_connections.to_string(),
            m.avg_clustering.to_string(),
            m.avg_path_length.to_string(),
            m.reachable_fraction.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
