//! Collapsed Gibbs sampler over `(A, W, b)`.
//!
//! Each sweep runs four steps:
//!
//! 1. draw `omega[t][n] ~ PG(1, psi[t][n])`, making the likelihood of every
//!    target's coefficients Gaussian;
//! 2. for every target `n` (rows in parallel): scan the sources, drawing
//!    `A[m->n]` with `W[m->n]` integrated out, then draw the included weights
//!    and `b[n]` jointly from their Gaussian conditional and refresh the
//!    weights of absent edges from the prior;
//! 3. optionally resample the prior hyperparameters;
//! 4. record the log-likelihood.
//!
//! Given `omega`, target `n` only involves column `n` of `A` and `W` and
//! `b[n]`, so rows are conditionally independent. Every row draws from its
//! own `(iteration, target)` stream, which makes a run a pure function of its
//! seed regardless of how many threads execute it.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::niw::{resample_niw_hyperparameters, GaussianPrior, HyperState};
use super::polya_gamma::{sample_pg, PgMethod};
use super::streams::{stream, Purpose};
use crate::error::{Error, Result};
use crate::model::{
    electrode_log_likelihood, filter_spike_history, firing_probability, FilteredRegressors,
    HyperParams, NetworkSample,
};
use crate::spikedata::SpikeTrain;

/// Order in which the sources of a row are visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScanOrder {
    /// Ascending source index.
    #[default]
    Systematic,
    /// A fresh random permutation per row and sweep.
    Random,
}

/// MCMC run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Total number of sweeps, burn-in included.
    pub n_iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub resample_hypers: bool,
    pub allow_self_edges: bool,
    /// Maximum number of rows updated concurrently; 0 uses every core.
    /// Results do not depend on this value, so serialized chains omit it.
    #[serde(skip)]
    pub parallel_width: usize,
    pub thin: usize,
    #[serde(default)]
    pub scan: ScanOrder,
    #[serde(default)]
    pub pg_method: PgMethod,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_iterations: 1000,
            burn_in: 500,
            seed: 0,
            resample_hypers: false,
            allow_self_edges: true,
            parallel_width: 0,
            thin: 1,
            scan: ScanOrder::Systematic,
            pg_method: PgMethod::Exact,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iterations {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than n_iterations ({})",
                self.burn_in, self.n_iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if let PgMethod::TruncatedSum { terms: 0 } = self.pg_method {
            return Err(Error::Config(
                "truncated-sum sampler needs at least 1 term".into(),
            ));
        }
        Ok(())
    }

    /// Number of samples a completed run retains.
    pub fn retained(&self) -> usize {
        (self.n_iterations - self.burn_in).div_ceil(self.thin)
    }
}

/// Retained samples of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChain {
    pub samples: Vec<NetworkSample>,
    /// Sweep index (0-based) of each retained sample.
    pub iterations: Vec<usize>,
    /// Log-likelihood of each retained sample.
    pub loglik_trace: Vec<f64>,
    /// Log-likelihood after every sweep, burn-in included.
    pub sweep_loglik: Vec<f64>,
    pub config: SamplerConfig,
    pub hyper: HyperParams,
    /// Global electrode index of each local electrode.
    pub electrodes: Vec<usize>,
    pub ids: Vec<String>,
}

impl PosteriorChain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_electrodes(&self) -> usize {
        self.electrodes.len()
    }
}

/// Augmentation variables `omega[t][n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryState {
    // columns[n][t]
    columns: Vec<Vec<f64>>,
}

impl AuxiliaryState {
    pub fn get(&self, t: usize, n: usize) -> f64 {
        self.columns[n][t]
    }

    /// All bins of electrode `n`.
    pub fn electrode(&self, n: usize) -> &[f64] {
        &self.columns[n]
    }
}

/// Draw `omega[t][n] ~ PG(1, psi[t][n])` for the activations implied by `net`.
pub fn resample_auxiliary(
    net: &NetworkSample,
    f: &FilteredRegressors,
    seed: u64,
    iteration: u64,
    method: PgMethod,
) -> AuxiliaryState {
    let columns = (0..net.n_electrodes())
        .into_par_iter()
        .map(|n| {
            let psi = crate::model::activation_series(net, f, n);
            let mut omega = vec![0.0; psi.len()];
            draw_omega(&psi, &mut omega, seed, iteration, n, method);
            omega
        })
        .collect();
    AuxiliaryState { columns }
}

fn draw_omega(
    psi: &[f64],
    omega: &mut [f64],
    seed: u64,
    iteration: u64,
    n: usize,
    method: PgMethod,
) {
    let mut rng = stream(seed, Purpose::Auxiliary, iteration, n as u64);
    for (o, &p) in omega.iter_mut().zip(psi) {
        *o = sample_pg(p, method, &mut rng);
    }
}

/// Log posterior odds of including an edge, with its weight integrated out.
///
/// Given the augmentation, the likelihood of the edge weight `w` relative to
/// `w = 0` is `exp(linear * w - precision * w^2 / 2)`; integrating it against
/// the Gaussian prior gives the evidence ratio.
pub fn collapsed_log_odds(precision: f64, linear: f64, prior: GaussianPrior, rho: f64) -> f64 {
    if rho >= 1.0 {
        return f64::INFINITY;
    }
    if rho <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let post_prec = precision + 1.0 / prior.var;
    let eta = linear + prior.mean / prior.var;
    let log_bf = -0.5 * (prior.var * post_prec).ln() + 0.5 * eta * eta / post_prec
        - 0.5 * prior.mean * prior.mean / prior.var;
    (rho / (1.0 - rho)).ln() + log_bf
}

/// Log odds of including the edge with regressor `regressor` into a target
/// whose activation without that edge is `offset`, given augmentation
/// `omega` and the target's spikes.
pub fn edge_log_odds(
    regressor: &[f64],
    omega: &[f64],
    spikes: &[u8],
    offset: &[f64],
    prior: GaussianPrior,
    rho: f64,
) -> f64 {
    let mut precision = 0.0;
    let mut linear = 0.0;
    for t in 0..regressor.len() {
        let kappa = f64::from(spikes[t]) - 0.5;
        precision += omega[t] * regressor[t] * regressor[t];
        linear += regressor[t] * (kappa - omega[t] * offset[t]);
    }
    collapsed_log_odds(precision, linear, prior, rho)
}

/// Sampler state of one target electrode: its incoming edges and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct RowState {
    /// `included[m]` is `A[m->n]`.
    pub included: Vec<bool>,
    /// `weights[m]` is `W[m->n]`.
    pub weights: Vec<f64>,
    pub bias: f64,
    psi: Vec<f64>,
    loglik: f64,
}

impl RowState {
    /// Build the state of target `n` and evaluate its activations.
    pub fn new(
        included: Vec<bool>,
        weights: Vec<f64>,
        bias: f64,
        f: &FilteredRegressors,
        spikes: &[u8],
    ) -> Self {
        let mut row = RowState {
            included,
            weights,
            bias,
            psi: Vec::new(),
            loglik: 0.0,
        };
        row.refresh(f, spikes);
        row
    }

    /// Activations `psi[t]` of this target.
    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    fn refresh(&mut self, f: &FilteredRegressors, spikes: &[u8]) {
        self.psi.clear();
        self.psi.resize(f.n_bins(), self.bias);
        for (m, (&a, &w)) in self.included.iter().zip(&self.weights).enumerate() {
            if a {
                for (p, &x) in self.psi.iter_mut().zip(f.source(m)) {
                    *p += w * x;
                }
            }
        }
        self.loglik = electrode_log_likelihood(spikes, &self.psi);
    }
}

/// `sum_t F[t][m] * (x[t] - 1/2)` for every source `m`, followed by
/// `sum_t (x[t] - 1/2)` for the constant regressor.
pub fn kappa_products(f: &FilteredRegressors, spikes: &[u8]) -> Vec<f64> {
    let mut out: Vec<f64> = (0..f.n_electrodes())
        .map(|m| {
            f.source(m)
                .iter()
                .zip(spikes)
                .map(|(x, &s)| x * (f64::from(s) - 0.5))
                .sum()
        })
        .collect();
    out.push(spikes.iter().map(|&s| f64::from(s) - 0.5).sum());
    out
}

/// Fixed inputs of one row update.
#[derive(Debug, Clone, Copy)]
pub struct RowInputs<'a> {
    pub target: usize,
    pub f: &'a FilteredRegressors,
    pub spikes: &'a [u8],
    /// Output of [`kappa_products`] for this target.
    pub kappa_products: &'a [f64],
    pub omega: &'a [f64],
    pub weight_prior: GaussianPrior,
    pub bias_prior: GaussianPrior,
    pub rho: f64,
    pub allow_self_edges: bool,
    pub scan: ScanOrder,
}

/// Lazily computed `omega`-weighted cross products of the regressors of one
/// row; index `n_src` stands for the constant regressor.
struct RowGram<'a> {
    inp: &'a RowInputs<'a>,
    n: usize,
    cache: Vec<f64>,
}

impl<'a> RowGram<'a> {
    fn new(inp: &'a RowInputs<'a>) -> Self {
        let n = inp.f.n_electrodes() + 1;
        RowGram {
            inp,
            n,
            cache: vec![f64::NAN; n * n],
        }
    }

    fn bias_index(&self) -> usize {
        self.n - 1
    }

    fn get(&mut self, i: usize, j: usize) -> f64 {
        let cached = self.cache[i * self.n + j];
        if !cached.is_nan() {
            return cached;
        }
        let b = self.bias_index();
        let omega = self.inp.omega;
        let v = match (i == b, j == b) {
            (true, true) => omega.iter().sum(),
            (true, false) | (false, true) => {
                let src = self.inp.f.source(if i == b { j } else { i });
                omega.iter().zip(src).map(|(o, x)| o * x).sum()
            }
            (false, false) => {
                let (fi, fj) = (self.inp.f.source(i), self.inp.f.source(j));
                omega
                    .iter()
                    .zip(fi)
                    .zip(fj)
                    .map(|((o, x), y)| o * x * y)
                    .sum()
            }
        };
        self.cache[i * self.n + j] = v;
        self.cache[j * self.n + i] = v;
        v
    }

    fn prior(&self, i: usize) -> GaussianPrior {
        if i == self.bias_index() {
            self.inp.bias_prior
        } else {
            self.inp.weight_prior
        }
    }

    /// Precision matrix and linear term of the Gaussian conditional of the
    /// coefficients in `set`.
    fn system(&mut self, set: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
        let k = set.len();
        let mut prec = DMatrix::<f64>::zeros(k, k);
        let mut lin = DVector::<f64>::zeros(k);
        for (a, &i) in set.iter().enumerate() {
            for (c, &j) in set.iter().enumerate().skip(a) {
                let v = self.get(i, j);
                prec[(a, c)] = v;
                prec[(c, a)] = v;
            }
            let p = self.prior(i);
            prec[(a, a)] += 1.0 / p.var;
            lin[a] = self.inp.kappa_products[i] + p.mean / p.var;
        }
        (prec, lin)
    }

    /// Precision and linear evidence of source `m` with the coefficients in
    /// `base` integrated out (a Schur complement of the joint system).
    fn marginal_stats(&mut self, base: &[usize], m: usize) -> Result<(f64, f64)> {
        let (prec, lin) = self.system(base);
        let chol = prec
            .cholesky()
            .ok_or_else(|| not_positive_definite(self.inp.target))?;
        let cross = DVector::from_iterator(base.len(), base.iter().map(|&j| self.get(j, m)));
        let eta = chol.solve(&lin);
        let u = chol
            .l()
            .solve_lower_triangular(&cross)
            .expect("Cholesky factor has a positive diagonal");
        let precision = (self.get(m, m) - u.norm_squared()).max(0.0);
        let linear = self.inp.kappa_products[m] - cross.dot(&eta);
        Ok((precision, linear))
    }
}

fn not_positive_definite(target: usize) -> Error {
    Error::Numerical {
        iteration: 0,
        reason: format!("posterior precision of target {target} is not positive definite"),
    }
}

/// One Gibbs update of target `n`'s incoming edges, weights and bias.
///
/// Each `A[m->n]` is drawn from its conditional given the other entries of
/// the column, with all weights into `n` and the bias integrated out. The
/// included weights and the bias are then drawn jointly from their Gaussian
/// conditional, and the weights of absent edges from the prior.
///
/// Fails only if a Gaussian conditional is not positive definite, which
/// positive prior variances and positive `omega` rule out.
pub fn resample_connections_row<R: Rng + ?Sized>(
    row: &mut RowState,
    inp: &RowInputs<'_>,
    rng: &mut R,
) -> Result<()> {
    let n_src = inp.f.n_electrodes();
    let mut gram = RowGram::new(inp);
    let bias = gram.bias_index();

    let mut order: Vec<usize> = (0..n_src).collect();
    if inp.scan == ScanOrder::Random {
        order.shuffle(rng);
    }
    let mut base = Vec::with_capacity(n_src + 1);
    for m in order {
        if m == inp.target && !inp.allow_self_edges {
            row.included[m] = false;
            continue;
        }
        if inp.rho >= 1.0 || inp.rho <= 0.0 {
            row.included[m] = inp.rho >= 1.0;
            continue;
        }
        base.clear();
        base.extend((0..n_src).filter(|&j| j != m && row.included[j]));
        base.push(bias);
        let (precision, linear) = gram.marginal_stats(&base, m)?;
        let log_odds = collapsed_log_odds(precision, linear, inp.weight_prior, inp.rho);
        row.included[m] = rng.random::<f64>() < firing_probability(log_odds);
    }

    let mut set: Vec<usize> = (0..n_src).filter(|&m| row.included[m]).collect();
    set.push(bias);
    let (prec, lin) = gram.system(&set);
    let chol = prec
        .cholesky()
        .ok_or_else(|| not_positive_definite(inp.target))?;
    let mean = chol.solve(&lin);
    let z = DVector::<f64>::from_fn(set.len(), |_, _| StandardNormal.sample(rng));
    // L^-T z has covariance (L L^T)^-1
    let noise = chol
        .l()
        .tr_solve_lower_triangular(&z)
        .expect("Cholesky factor has a positive diagonal");
    let beta = mean + noise;
    for (i, &m) in set.iter().enumerate() {
        if m == bias {
            row.bias = beta[i];
        } else {
            row.weights[m] = beta[i];
        }
    }
    for m in 0..n_src {
        if !row.included[m] {
            row.weights[m] = inp.weight_prior.sample(rng);
        }
    }
    row.refresh(inp.f, inp.spikes);
    Ok(())
}

/// Gibbs sampler that can be advanced one sweep at a time.
pub struct GibbsSampler {
    hp: HyperParams,
    cfg: SamplerConfig,
    f: FilteredRegressors,
    // spikes[n][t]
    spikes: Vec<Vec<u8>>,
    kappa_products: Vec<Vec<f64>>,
    rows: Vec<RowState>,
    omega: Vec<Vec<f64>>,
    hyper: HyperState,
    iteration: usize,
    pool: rayon::ThreadPool,
}

impl GibbsSampler {
    /// Initialize from the prior: `A ~ Bernoulli(rho)`, `W` from its prior,
    /// `b = mu_b`.
    pub fn new(train: &SpikeTrain, hp: &HyperParams, cfg: &SamplerConfig) -> Result<Self> {
        let n = train.n_electrodes();
        let hyper = HyperState::fixed(hp, n);
        let init: Vec<(Vec<bool>, Vec<f64>, f64)> = (0..n)
            .map(|target| {
                let mut rng = stream(cfg.seed, Purpose::Init, 0, target as u64);
                let prior = hyper.weight[target];
                let mut included = vec![false; n];
                let mut weights = vec![0.0; n];
                for m in 0..n {
                    let allowed = cfg.allow_self_edges || m != target;
                    included[m] = allowed && rng.random::<f64>() < hp.rho;
                    weights[m] = prior.sample(&mut rng);
                }
                (included, weights, hp.mu_b)
            })
            .collect();
        Self::build(train, hp, cfg, hyper, init)
    }

    /// Start from a given network instead of a prior draw.
    pub fn with_initial(
        train: &SpikeTrain,
        hp: &HyperParams,
        cfg: &SamplerConfig,
        init: &NetworkSample,
    ) -> Result<Self> {
        let n = train.n_electrodes();
        if init.n_electrodes() != n {
            return Err(Error::DimensionMismatch(format!(
                "initial network has {} electrodes, spike train has {n}",
                init.n_electrodes()
            )));
        }
        let rows = (0..n)
            .map(|target| {
                let included = (0..n)
                    .map(|m| init.has_edge(m, target) && (cfg.allow_self_edges || m != target))
                    .collect();
                let weights = (0..n).map(|m| init.weights[(m, target)]).collect();
                (included, weights, init.bias[target])
            })
            .collect();
        Self::build(train, hp, cfg, HyperState::fixed(hp, n), rows)
    }

    fn build(
        train: &SpikeTrain,
        hp: &HyperParams,
        cfg: &SamplerConfig,
        hyper: HyperState,
        init: Vec<(Vec<bool>, Vec<f64>, f64)>,
    ) -> Result<Self> {
        hp.validate()?;
        cfg.validate()?;
        let n = train.n_electrodes();
        if n == 0 {
            return Err(Error::InvalidTrain("no electrodes".into()));
        }
        let f = filter_spike_history(train, hp);
        let spikes: Vec<Vec<u8>> = (0..n).map(|e| train.electrode(e)).collect();
        let kappa_products = spikes.iter().map(|x| kappa_products(&f, x)).collect();
        let rows = init
            .into_iter()
            .enumerate()
            .map(|(e, (a, w, b))| RowState::new(a, w, b, &f, &spikes[e]))
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallel_width)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))?;
        Ok(GibbsSampler {
            hp: hp.clone(),
            cfg: cfg.clone(),
            omega: vec![vec![0.0; train.n_bins()]; n],
            f,
            spikes,
            kappa_products,
            rows,
            hyper,
            iteration: 0,
            pool,
        })
    }

    /// Number of completed sweeps.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn n_electrodes(&self) -> usize {
        self.rows.len()
    }

    /// Current hyperparameter values.
    pub fn hyper_state(&self) -> &HyperState {
        &self.hyper
    }

    /// Log-likelihood of the current state.
    pub fn loglik(&self) -> f64 {
        self.rows.iter().map(|r| r.loglik).sum()
    }

    /// Current state as a network.
    pub fn state(&self) -> NetworkSample {
        let n = self.rows.len();
        let mut adjacency = DMatrix::<u8>::zeros(n, n);
        let mut weights = DMatrix::<f64>::zeros(n, n);
        for (target, row) in self.rows.iter().enumerate() {
            for m in 0..n {
                adjacency[(m, target)] = u8::from(row.included[m]);
                weights[(m, target)] = row.weights[m];
            }
        }
        let bias = DVector::from_iterator(n, self.rows.iter().map(|r| r.bias));
        NetworkSample {
            adjacency,
            weights,
            bias,
        }
    }

    /// Run one full sweep and return the resulting log-likelihood.
    pub fn sweep(&mut self) -> Result<f64> {
        let it = self.iteration;
        let seed = self.cfg.seed;
        let method = self.cfg.pg_method;
        let GibbsSampler {
            hp,
            cfg,
            f,
            spikes,
            kappa_products,
            rows,
            omega,
            hyper,
            pool,
            ..
        } = self;

        pool.install(|| {
            omega
                .par_iter_mut()
                .zip(rows.par_iter())
                .enumerate()
                .for_each(|(n, (om, row))| draw_omega(&row.psi, om, seed, it as u64, n, method));

            rows.par_iter_mut()
                .enumerate()
                .map(|(n, row)| {
                    let inputs = RowInputs {
                        target: n,
                        f,
                        spikes: &spikes[n],
                        kappa_products: &kappa_products[n],
                        omega: &omega[n],
                        weight_prior: hyper.weight[n],
                        bias_prior: hyper.bias,
                        rho: hp.rho,
                        allow_self_edges: cfg.allow_self_edges,
                        scan: cfg.scan,
                    };
                    let mut rng = stream(seed, Purpose::Row, it as u64, n as u64);
                    resample_connections_row(row, &inputs, &mut rng)
                })
                .collect::<Result<Vec<()>>>()
        })
        .map_err(|e| match e {
            Error::Numerical { reason, .. } => Error::Numerical {
                iteration: it,
                reason,
            },
            other => other,
        })?;

        if cfg.resample_hypers {
            let included: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| {
                    r.included
                        .iter()
                        .zip(&r.weights)
                        .filter(|(&a, _)| a)
                        .map(|(_, &w)| w)
                        .collect()
                })
                .collect();
            let bias: Vec<f64> = rows.iter().map(|r| r.bias).collect();
            let mut rng = stream(seed, Purpose::Hyper, it as u64, 0);
            *hyper = resample_niw_hyperparameters(&included, &bias, hp, true, &mut rng);
        }

        let loglik: f64 = rows.iter().map(|r| r.loglik).sum();
        if !loglik.is_finite() {
            return Err(Error::Numerical {
                iteration: it,
                reason: "log-likelihood is not finite".into(),
            });
        }
        self.iteration += 1;
        Ok(loglik)
    }

    /// Run the configured number of sweeps and collect the retained samples.
    pub fn run(mut self, train: &SpikeTrain) -> Result<PosteriorChain> {
        let cfg = self.cfg.clone();
        let mut chain = PosteriorChain {
            samples: Vec::with_capacity(cfg.retained()),
            iterations: Vec::with_capacity(cfg.retained()),
            loglik_trace: Vec::with_capacity(cfg.retained()),
            sweep_loglik: Vec::with_capacity(cfg.n_iterations),
            config: cfg.clone(),
            hyper: self.hp.clone(),
            electrodes: (0..train.n_electrodes()).collect(),
            ids: train.ids().to_vec(),
        };
        while self.iteration < cfg.n_iterations {
            let it = self.iteration;
            let ll = self.sweep()?;
            chain.sweep_loglik.push(ll);
            if it >= cfg.burn_in && (it - cfg.burn_in).is_multiple_of(cfg.thin) {
                chain.samples.push(self.state());
                chain.iterations.push(it);
                chain.loglik_trace.push(ll);
            }
        }
        Ok(chain)
    }
}

/// Run the sampler from a prior draw.
pub fn run_gibbs(
    train: &SpikeTrain,
    hp: &HyperParams,
    cfg: &SamplerConfig,
) -> Result<PosteriorChain> {
    GibbsSampler::new(train, hp, cfg)?.run(train)
}

/// Run the sampler from a given initial network.
pub fn run_gibbs_from(
    train: &SpikeTrain,
    hp: &HyperParams,
    cfg: &SamplerConfig,
    init: &NetworkSample,
) -> Result<PosteriorChain> {
    GibbsSampler::with_initial(train, hp, cfg, init)?.run(train)
}
