//! Autoregressive Bernoulli network model.
//!
//! The activation of target electrode `n` in bin `t` is
//!
//! ```text
//! psi[t][n] = b[n] + sum_m A[m->n] * W[m->n] * F[t][m]
//! F[t][m]   = sum_{d=1..T} exp(-d * bin_ms / tau_ms) * X[t-d][m]
//! ```
//!
//! and each bin is an independent Bernoulli draw with probability
//! `sigmoid(psi[t][n])` given the past.

pub mod io;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::streams::{self, Purpose};
use crate::spikedata::{GridPos, SpikeTrain};

/// One realization of the latent network.
///
/// `adjacency[(m, n)]` and `weights[(m, n)]` describe the edge from source
/// `m` to target `n`. Weights of absent edges are kept (the sampler refreshes
/// them from the prior) but never affect activations.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSample {
    pub adjacency: DMatrix<u8>,
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl NetworkSample {
    /// Empty network (no edges, zero weights) with the given biases.
    pub fn empty(bias: Vec<f64>) -> Self {
        let n = bias.len();
        NetworkSample {
            adjacency: DMatrix::zeros(n, n),
            weights: DMatrix::zeros(n, n),
            bias: DVector::from_vec(bias),
        }
    }

    pub fn new(adjacency: DMatrix<u8>, weights: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        let n = bias.len();
        if adjacency.shape() != (n, n) || weights.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "adjacency {:?} and weights {:?} for {} biases",
                adjacency.shape(),
                weights.shape(),
                n
            )));
        }
        if adjacency.iter().any(|&a| a > 1) {
            return Err(Error::InvalidTrain(
                "adjacency entries must be 0 or 1".into(),
            ));
        }
        if !weights.iter().chain(bias.iter()).all(|v| v.is_finite()) {
            return Err(Error::Undefined("non-finite weight or bias".into()));
        }
        Ok(NetworkSample {
            adjacency,
            weights,
            bias,
        })
    }

    pub fn n_electrodes(&self) -> usize {
        self.bias.len()
    }

    /// Set edge `m -> n` with weight `w`.
    pub fn set_edge(&mut self, m: usize, n: usize, w: f64) {
        self.adjacency[(m, n)] = 1;
        self.weights[(m, n)] = w;
    }

    pub fn has_edge(&self, m: usize, n: usize) -> bool {
        self.adjacency[(m, n)] != 0
    }

    /// `A ∘ W`: weights of present edges, zero elsewhere.
    pub fn effective_weights(&self) -> DMatrix<f64> {
        self.weights
            .zip_map(&self.adjacency, |w, a| if a != 0 { w } else { 0.0 })
    }

    pub fn adjacency_f64(&self) -> DMatrix<f64> {
        self.adjacency.map(f64::from)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&a| a != 0).count()
    }

    /// Present incoming edges of target `n` as `(source, weight)`.
    pub fn incoming(&self, n: usize) -> Vec<(usize, f64)> {
        (0..self.n_electrodes())
            .filter(|&m| self.has_edge(m, n))
            .map(|m| (m, self.weights[(m, n)]))
            .collect()
    }

    /// Sub-network on the given electrodes, in the given order.
    pub fn subset(&self, electrodes: &[usize]) -> NetworkSample {
        let k = electrodes.len();
        NetworkSample {
            adjacency: DMatrix::from_fn(k, k, |i, j| {
                self.adjacency[(electrodes[i], electrodes[j])]
            }),
            weights: DMatrix::from_fn(k, k, |i, j| self.weights[(electrodes[i], electrodes[j])]),
            bias: DVector::from_iterator(k, electrodes.iter().map(|&e| self.bias[e])),
        }
    }
}

/// How the spike history is filtered into regressors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    /// Exact convolution truncated at `window_bins` lags.
    #[default]
    Truncated,
    /// First-order recursion without truncation. Approximate: lags beyond the
    /// window still contribute.
    Recursive,
}

/// Normal-Inverse-Wishart prior over a scalar Gaussian's mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NiwPrior {
    pub mean: f64,
    pub kappa: f64,
    pub scale: f64,
    pub dof: f64,
}

impl Default for NiwPrior {
    fn default() -> Self {
        NiwPrior {
            mean: 0.0,
            kappa: 1.0,
            scale: 1.0,
            dof: 3.0,
        }
    }
}

/// Model priors and the autoregressive kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Prior edge probability.
    pub rho: f64,
    /// Kernel time constant in milliseconds.
    pub tau_ms: f64,
    /// Number of lags `T` in the autoregressive window.
    pub window_bins: usize,
    pub niw: NiwPrior,
    /// Weight prior mean and variance (fixed mode, or starting values when
    /// hyperparameters are resampled).
    pub mu_w: f64,
    pub s_w: f64,
    /// Bias prior mean and variance.
    pub mu_b: f64,
    pub s_b: f64,
    #[serde(default)]
    pub filter: FilterMode,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self::synthetic()
    }
}

impl HyperParams {
    /// Settings used for synthetic experiments: `T = 100`, `mu_w = 1`,
    /// `S_b = 1`, with `rho = 0.5`, `S_w = 1`, `mu_b = 0`.
    pub fn synthetic() -> Self {
        HyperParams {
            rho: 0.5,
            tau_ms: 15.0,
            window_bins: 100,
            niw: NiwPrior::default(),
            mu_w: 1.0,
            s_w: 1.0,
            mu_b: 0.0,
            s_b: 1.0,
            filter: FilterMode::Truncated,
        }
    }

    /// Settings used for recorded cultures: sparser prior and a negative
    /// baseline (`rho = 0.1`, `mu_b = -2`).
    pub fn real_data() -> Self {
        HyperParams {
            rho: 0.1,
            mu_b: -2.0,
            ..Self::synthetic()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(0.0..=1.0).contains(&self.rho) {
            return bad("rho must lie in [0, 1]");
        }
        if !(self.tau_ms.is_finite() && self.tau_ms > 0.0) {
            return bad("tau_ms must be positive");
        }
        if self.window_bins == 0 {
            return bad("window must be at least 1 bin");
        }
        if !(self.niw.kappa > 0.0 && self.niw.scale > 0.0 && self.niw.dof > 0.0)
            || !self.niw.mean.is_finite()
        {
            return bad("NIW prior needs kappa > 0, scale > 0, dof > 0");
        }
        if !(self.s_w > 0.0 && self.s_b > 0.0 && self.s_w.is_finite() && self.s_b.is_finite()) {
            return bad("prior variances s_w and s_b must be positive");
        }
        if !(self.mu_w.is_finite() && self.mu_b.is_finite()) {
            return bad("prior means must be finite");
        }
        Ok(())
    }

    /// Kernel weights `exp(-d * bin_ms / tau_ms)` for lags `d = 1..=T`
    /// (index 0 holds lag 1).
    pub fn kernel(&self, bin_ms: f64) -> Vec<f64> {
        (1..=self.window_bins)
            .map(|d| (-(d as f64) * bin_ms / self.tau_ms).exp())
            .collect()
    }
}

/// Filtered spike history `F[t][m]`, stored per source electrode.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredRegressors {
    n_bins: usize,
    // columns[m][t]
    columns: Vec<Vec<f64>>,
}

impl FilteredRegressors {
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_electrodes(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub fn get(&self, t: usize, m: usize) -> f64 {
        self.columns[m][t]
    }

    /// Regressor of source `m` over all bins.
    #[inline]
    pub fn source(&self, m: usize) -> &[f64] {
        &self.columns[m]
    }

    /// Restrict to the given sources, in order.
    pub fn subset(&self, sources: &[usize]) -> FilteredRegressors {
        FilteredRegressors {
            n_bins: self.n_bins,
            columns: sources.iter().map(|&m| self.columns[m].clone()).collect(),
        }
    }
}

/// Filter every electrode's spike history with the exponential kernel.
///
/// In the default truncated mode this is exactly the `T`-lag convolution;
/// the first bins see only the history that exists.
pub fn filter_spike_history(train: &SpikeTrain, hp: &HyperParams) -> FilteredRegressors {
    let n_bins = train.n_bins();
    let columns = (0..train.n_electrodes())
        .map(|m| match hp.filter {
            FilterMode::Truncated => {
                let kernel = hp.kernel(train.bin_ms());
                let mut col = vec![0.0; n_bins];
                for s in train.spike_bins(m) {
                    for (k, &kv) in kernel.iter().enumerate() {
                        let t = s + k + 1;
                        if t >= n_bins {
                            break;
                        }
                        col[t] += kv;
                    }
                }
                col
            }
            FilterMode::Recursive => {
                let decay = (-train.bin_ms() / hp.tau_ms).exp();
                let mut col = vec![0.0; n_bins];
                for t in 1..n_bins {
                    let prev = if train.get(t - 1, m) { 1.0 } else { 0.0 };
                    col[t] = decay * (col[t - 1] + prev);
                }
                col
            }
        })
        .collect();
    FilteredRegressors { n_bins, columns }
}

/// Activation `psi[t][n]` of target `n` in bin `t`.
pub fn activation(net: &NetworkSample, f: &FilteredRegressors, t: usize, n: usize) -> Result<f64> {
    let n_e = net.n_electrodes();
    if n >= n_e || t >= f.n_bins() {
        return Err(Error::OutOfRange(format!(
            "activation ({t}, {n}) outside {} bins x {n_e} electrodes",
            f.n_bins()
        )));
    }
    if f.n_electrodes() != n_e {
        return Err(Error::DimensionMismatch(format!(
            "{} regressors for a {n_e}-electrode network",
            f.n_electrodes()
        )));
    }
    let drive: f64 = (0..n_e)
        .filter(|&m| net.has_edge(m, n))
        .map(|m| net.weights[(m, n)] * f.get(t, m))
        .sum();
    Ok(net.bias[n] + drive)
}

/// Activations of target `n` for every bin.
pub fn activation_series(net: &NetworkSample, f: &FilteredRegressors, n: usize) -> Vec<f64> {
    let mut psi = vec![net.bias[n]; f.n_bins()];
    for (m, w) in net.incoming(n) {
        for (p, &x) in psi.iter_mut().zip(f.source(m)) {
            *p += w * x;
        }
    }
    psi
}

/// Logistic function, evaluated without overflow for any finite input.
#[inline]
pub fn firing_probability(psi: f64) -> f64 {
    if psi >= 0.0 {
        1.0 / (1.0 + (-psi).exp())
    } else {
        let e = psi.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Bernoulli log-mass of observation `x` under activation `psi`:
/// `x ln σ(psi) + (1 - x) ln(1 - σ(psi))`.
#[inline]
pub fn bernoulli_log_mass(x: bool, psi: f64) -> f64 {
    if x {
        -softplus(-psi)
    } else {
        -softplus(psi)
    }
}

/// Log-likelihood of target `n`'s spikes given its activation series.
pub fn electrode_log_likelihood(spikes: &[u8], psi: &[f64]) -> f64 {
    spikes
        .iter()
        .zip(psi)
        .map(|(&x, &p)| bernoulli_log_mass(x != 0, p))
        .sum()
}

/// Log-likelihood of the whole train under `net`.
pub fn log_likelihood(net: &NetworkSample, train: &SpikeTrain, hp: &HyperParams) -> Result<f64> {
    if net.n_electrodes() != train.n_electrodes() {
        return Err(Error::DimensionMismatch(format!(
            "{}-electrode network for a {}-electrode train",
            net.n_electrodes(),
            train.n_electrodes()
        )));
    }
    let f = filter_spike_history(train, hp);
    Ok((0..train.n_electrodes())
        .map(|n| electrode_log_likelihood(&train.electrode(n), &activation_series(net, &f, n)))
        .sum())
}

/// Random signed ground truth without self-edges: each `m -> n` is present
/// with probability `edge_prob` and carries `+weight` or `-weight` with equal
/// probability; every bias is `bias`. Target `n` uses its own stream.
pub fn sample_signed_network(
    n: usize,
    edge_prob: f64,
    weight: f64,
    bias: f64,
    seed: u64,
) -> Result<NetworkSample> {
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::Config(format!(
            "edge probability {edge_prob} outside [0, 1]"
        )));
    }
    let mut net = NetworkSample::empty(vec![bias; n]);
    for target in 0..n {
        let mut rng = streams::stream(seed, Purpose::Truth, 0, target as u64);
        for source in 0..n {
            let present = rng.random::<f64>() < edge_prob;
            let positive = rng.random::<bool>();
            if present && source != target {
                net.set_edge(source, target, if positive { weight } else { -weight });
            }
        }
    }
    Ok(net)
}

/// Draw a spike train from the generative model by ancestral sampling.
///
/// Bins are generated in order; bin `t` depends only on bins before it.
/// Electrode `n` draws its uniforms from its own stream, so the result is a
/// pure function of `(net, n_bins, hp, seed)`.
pub fn simulate_spike_train(
    net: &NetworkSample,
    n_bins: usize,
    bin_ms: f64,
    hp: &HyperParams,
    seed: u64,
    geometry: Option<Vec<GridPos>>,
) -> Result<SpikeTrain> {
    if n_bins == 0 {
        return Err(Error::InvalidTrain("n_bins must be at least 1".into()));
    }
    let n_e = net.n_electrodes();
    let incoming: Vec<Vec<(usize, f64)>> = (0..n_e).map(|n| net.incoming(n)).collect();
    let mut rngs: Vec<_> = (0..n_e)
        .map(|n| streams::stream(seed, Purpose::Simulate, 0, n as u64))
        .collect();
    let mut data = vec![0u8; n_bins * n_e];
    let mut current = vec![0.0; n_e];

    match hp.filter {
        FilterMode::Truncated => {
            let kernel = hp.kernel(bin_ms);
            let slots = kernel.len() + 1;
            // future[slot * n_e + m] accumulates F for bin slot (mod slots)
            let mut future = vec![0.0; slots * n_e];
            for t in 0..n_bins {
                let slot = t % slots;
                current.copy_from_slice(&future[slot * n_e..(slot + 1) * n_e]);
                future[slot * n_e..(slot + 1) * n_e].fill(0.0);
                draw_bin(t, &current, net, &incoming, &mut rngs, &mut data);
                for m in 0..n_e {
                    if data[t * n_e + m] == 0 {
                        continue;
                    }
                    for (k, &kv) in kernel.iter().enumerate() {
                        let s = (t + k + 1) % slots;
                        future[s * n_e + m] += kv;
                    }
                }
            }
        }
        FilterMode::Recursive => {
            let decay = (-bin_ms / hp.tau_ms).exp();
            for t in 0..n_bins {
                if t > 0 {
                    for m in 0..n_e {
                        let prev = f64::from(data[(t - 1) * n_e + m]);
                        current[m] = decay * (current[m] + prev);
                    }
                }
                draw_bin(t, &current, net, &incoming, &mut rngs, &mut data);
            }
        }
    }
    SpikeTrain::from_dense(n_e, n_bins, bin_ms, data, geometry, None)
}

fn draw_bin<R: Rng>(
    t: usize,
    regressors: &[f64],
    net: &NetworkSample,
    incoming: &[Vec<(usize, f64)>],
    rngs: &mut [R],
    data: &mut [u8],
) {
    let n_e = regressors.len();
    for n in 0..n_e {
        let psi = net.bias[n]
            + incoming[n]
                .iter()
                .map(|&(m, w)| w * regressors[m])
                .sum::<f64>();
        let u: f64 = rngs[n].random();
        data[t * n_e + n] = u8::from(u < firing_probability(psi));
    }
}
