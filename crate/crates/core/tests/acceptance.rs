//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Run everything with `cargo test --release --test acceptance`, or a subset
//! by naming criteria: `cargo test --release --test acceptance -- C4 C6`.
//! The process exits nonzero if any selected criterion fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use mea_netinfer::analysis::{
    cosine_similarity, graph_metrics, posterior_metric_distribution, summarize_chain,
    summarize_metrics, DiGraph, GraphMetrics, DEFAULT_THETA_A, DEFAULT_THETA_W,
};
use mea_netinfer::cli::{
    self, bench, CommandKind, RunConfig, Source, MANIFEST_FILE, RUN_CONFIG_FILE,
};
use mea_netinfer::hierarchy::{
    aggregate_regions, infer_hierarchical, merge_region_posteriors, plan_split,
};
use mea_netinfer::model::{
    sample_signed_network, simulate_spike_train, HyperParams, NetworkSample,
};
use mea_netinfer::sampler::{
    edge_log_odds, pg_mean, run_gibbs, sample_polya_gamma, GaussianPrior, PosteriorChain,
    SamplerConfig,
};
use mea_netinfer::spikedata::{linear_geometry, SpikeTrain};
use mea_netinfer::Result;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// C1 / C2: synthetic recovery
const RECOVERY_BINS: usize = 60_000;
const RECOVERY_ITERATIONS: usize = 1000;
const RECOVERY_BURN_IN: usize = 500;
const C1_MIN_COS_A: f64 = 0.95;
const C1_MIN_COS_W: f64 = 0.95;
const C2_MIN_COS_A: f64 = 0.90;
const C2_MIN_COS_W: f64 = 0.95;
const TRUTH_BIAS: f64 = -2.0;
const TRUTH_WEIGHT: f64 = 1.0;
const C2_TRUTH_EDGE_PROB: f64 = 0.2;
/// Truths whose simulated firing rates leave this band are redrawn: runaway
/// excitation or silenced electrodes leave edges unidentifiable.
const RATE_BAND: (f64, f64) = (0.02, 0.35);

// C3: split tables
const SPLIT_BINS: usize = 15_000;
const SPLIT_ITERATIONS: usize = 300;
const SPLIT_BURN_IN: usize = 150;
const SPLIT_TRUTH_EDGE_PROB: f64 = 0.3;
const SPLIT_TRUTH_MAX_IN_DEGREE: f64 = 1.2;
const SPLIT_TRUTH_WEIGHT: f64 = 0.5;
const C3_MIN_FRONT_BACK: f64 = 0.85;
const C3_MIN_W_OVERLAP: f64 = 0.88;

// C4: regional inference
const C4_RUNS: u64 = 100;
const C4_MIN_MATCHES: usize = 95;
const C4_BINS: usize = 20_000;
const C4_ITERATIONS: usize = 200;
const C4_BURN_IN: usize = 100;

// C5: scaling
const C5_SIZES: [usize; 4] = [16, 32, 64, 128];
const C5_BINS: usize = 3000;
const C5_WARMUP: usize = 60;
const C5_SWEEPS: usize = 10;
const C5_REGIONS: usize = 4;
const C5_SLOPE: (f64, f64) = (1.6, 2.4);
const C5_REGION_FACTOR: f64 = 2.0;

// C6: Polya-Gamma means
const C6_DRAWS: usize = 100_000;
const C6_TILTS: [f64; 4] = [0.0, 1.0, 2.0, 5.0];
const C6_MAX_SE: f64 = 3.0;

// C7: collapsed odds vs quadrature
const C7_INSTANCES: usize = 10;
const C7_REL_TOL: f64 = 0.01;
const C7_GRID: usize = 4000;

// C8: graph metrics
const C8_GRAPHS: usize = 50;

// C9: ablation
const C9_NODES: usize = 12;
const C9_BINS: usize = 60_000;
const C9_ITERATIONS: usize = 400;
const C9_BURN_IN: usize = 200;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

type Criterion = (&'static str, &'static str, fn() -> Result<Outcome>);

fn main() {
    let criteria: [Criterion; 10] = [
        ("C1", "synthetic recovery, 4 electrodes", c1_recovery_4),
        ("C2", "synthetic recovery, 10 electrodes", c2_recovery_10),
        (
            "C3",
            "split tables, front/back and overlap similarity",
            c3_split_tables,
        ),
        (
            "C4",
            "regional sign pattern over seeded runs",
            c4_regional_signs,
        ),
        (
            "C5",
            "sweep-time scaling and per-region speedup",
            c5_scaling,
        ),
        ("C6", "Polya-Gamma means", c6_pg_means),
        ("C7", "collapsed odds against quadrature", c7_quadrature),
        ("C8", "graph metrics against brute force", c8_graph_oracle),
        ("C9", "edge ablation shifts posterior topology", c9_ablation),
        ("C10", "manifest replay is bit-identical", c10_replay),
    ];
    let selected: BTreeSet<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .map(|a| a.to_uppercase())
        .collect();
    let mut failures = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(id) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "{} {id} {name}: {detail} [{secs:.1}s]",
            if pass { "PASS" } else { "FAIL" }
        );
    }
    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
}

fn sampler(iterations: usize, burn_in: usize, seed: u64) -> SamplerConfig {
    SamplerConfig {
        n_iterations: iterations,
        burn_in,
        seed,
        parallel_width: 1,
        ..SamplerConfig::default()
    }
}

fn rates_in_band(train: &SpikeTrain) -> bool {
    (0..train.n_electrodes()).all(|e| {
        let r = train.firing_rate(e);
        r >= RATE_BAND.0 && r <= RATE_BAND.1
    })
}

/// First truth from `draw(seed)`, `seed = start, start + 1, ...`, whose
/// simulated train keeps every rate inside [`RATE_BAND`].
fn admissible<F>(
    start: u64,
    bins: usize,
    hp: &HyperParams,
    mut draw: F,
) -> Result<(NetworkSample, SpikeTrain)>
where
    F: FnMut(u64) -> Result<Option<NetworkSample>>,
{
    for seed in start..start + 10_000 {
        let Some(truth) = draw(seed)? else { continue };
        let n = truth.n_electrodes();
        // cheap screen on a short prefix before the full simulation
        let probe = simulate_spike_train(
            &truth,
            bins.min(5000),
            1.0,
            hp,
            seed,
            Some(linear_geometry(n)),
        )?;
        if !rates_in_band(&probe) {
            continue;
        }
        let train = simulate_spike_train(&truth, bins, 1.0, hp, seed, Some(linear_geometry(n)))?;
        if rates_in_band(&train) {
            return Ok((truth, train));
        }
    }
    Err(mea_netinfer::Error::Undefined(
        "no admissible truth in 10000 draws".into(),
    ))
}

fn recovery(
    truth: &NetworkSample,
    train: &SpikeTrain,
    hp: &HyperParams,
    seed: u64,
) -> Result<(f64, f64)> {
    let chain = run_gibbs(
        train,
        hp,
        &sampler(RECOVERY_ITERATIONS, RECOVERY_BURN_IN, seed),
    )?;
    let s = summarize_chain(&chain)?;
    Ok((
        cosine_similarity(&s.edge_prob, &truth.adjacency_f64())?,
        cosine_similarity(&s.mean_weight, &truth.effective_weights())?,
    ))
}

fn c1_recovery_4() -> Result<Outcome> {
    let hp = HyperParams::synthetic();
    // signed ring with two chords
    let fixed = |seed: u64| -> Result<Option<NetworkSample>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = NetworkSample::empty(vec![TRUTH_BIAS; 4]);
        for (m, n) in [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (3, 1)] {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            t.set_edge(m, n, sign * TRUTH_WEIGHT);
        }
        Ok(Some(t))
    };
    let (truth, train) = admissible(1, RECOVERY_BINS, &hp, fixed)?;
    let (ca, cw) = recovery(&truth, &train, &hp, 1)?;
    outcome(
        ca >= C1_MIN_COS_A && cw >= C1_MIN_COS_W,
        format!("cos A = {ca:.4} (>= {C1_MIN_COS_A}), cos W = {cw:.4} (>= {C1_MIN_COS_W})"),
    )
}

fn c2_recovery_10() -> Result<Outcome> {
    let hp = HyperParams::synthetic();
    let (truth, train) = admissible(2, RECOVERY_BINS, &hp, |seed| {
        sample_signed_network(10, C2_TRUTH_EDGE_PROB, TRUTH_WEIGHT, TRUTH_BIAS, seed).map(Some)
    })?;
    let (ca, cw) = recovery(&truth, &train, &hp, 2)?;
    outcome(
        ca >= C2_MIN_COS_A && cw >= C2_MIN_COS_W,
        format!(
            "{} true edges; cos A = {ca:.4} (>= {C2_MIN_COS_A}), cos W = {cw:.4} (>= {C2_MIN_COS_W})",
            truth.edge_count()
        ),
    )
}

/// Block-diagonal truth: independent random signed networks on each block
/// of consecutive electrodes; `None` if some block has no edge. Larger blocks
/// get a lower edge probability so the expected in-degree stays at most
/// [`SPLIT_TRUTH_MAX_IN_DEGREE`].
fn block_truth(blocks: &[usize], seed: u64) -> Result<Option<NetworkSample>> {
    let n: usize = blocks.iter().sum();
    let mut truth = NetworkSample::empty(vec![TRUTH_BIAS; n]);
    let mut start = 0;
    for (b, &size) in blocks.iter().enumerate() {
        let edge_prob = SPLIT_TRUTH_EDGE_PROB
            .min(SPLIT_TRUTH_MAX_IN_DEGREE / size.saturating_sub(1).max(1) as f64);
        let block = sample_signed_network(
            size,
            edge_prob,
            SPLIT_TRUTH_WEIGHT,
            TRUTH_BIAS,
            seed * 7 + b as u64,
        )?;
        if block.edge_count() == 0 {
            return Ok(None);
        }
        for m in 0..size {
            for t in 0..size {
                if block.has_edge(m, t) {
                    truth.set_edge(start + m, start + t, block.weights[(m, t)]);
                }
            }
        }
        start += size;
    }
    Ok(Some(truth))
}

fn sub_block(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

struct SplitCase {
    n: usize,
    overlap: usize,
    s_w: f64,
    mu_b: f64,
    rho: f64,
}

/// Returns `(front/back similarities, W_o similarity if overlapping)`.
fn split_case(case: &SplitCase, seed: u64) -> Result<(Vec<f64>, Option<f64>)> {
    let hp = HyperParams {
        s_w: case.s_w,
        mu_b: case.mu_b,
        rho: case.rho,
        ..HyperParams::synthetic()
    };
    let half = case.n / 2;
    let o = case.overlap / 2;
    let blocks: Vec<usize> = if o == 0 {
        vec![half, case.n - half]
    } else {
        vec![half - o, 2 * o, case.n - half - o]
    };
    // truths are screened under the default prior; the prior only matters for inference
    let (_, train) = admissible(seed, SPLIT_BINS, &HyperParams::synthetic(), |s| {
        block_truth(&blocks, s)
    })?;
    let cfg = sampler(SPLIT_ITERATIONS, SPLIT_BURN_IN, seed);
    let full = summarize_chain(&run_gibbs(&train, &hp, &cfg)?)?;
    let layout = plan_split(train.geometry(), 2, case.overlap)?;
    let result = infer_hierarchical(&train, &layout, &hp, &cfg, 1)?;
    let mut sims = Vec::new();
    for (chain, region) in result.regions.iter().zip(&layout.regions) {
        let s = summarize_chain(chain)?;
        sims.push(cosine_similarity(
            &s.mean_weight,
            &sub_block(&full.mean_weight, region),
        )?);
        sims.push(cosine_similarity(
            &s.edge_prob,
            &sub_block(&full.edge_prob, region),
        )?);
    }
    let w_o = match layout.overlap_pairs.first() {
        Some((_, _, shared)) => {
            let merged = merge_region_posteriors(&result.regions, &layout, case.n)?;
            Some(cosine_similarity(
                &sub_block(&merged.mean_weight, shared),
                &sub_block(&full.mean_weight, shared),
            )?)
        }
        None => None,
    };
    Ok((sims, w_o))
}

fn c3_split_tables() -> Result<Outcome> {
    let case = |n, overlap, s_w, mu_b, rho| SplitCase {
        n,
        overlap,
        s_w,
        mu_b,
        rho,
    };
    let non_overlap = [
        case(10, 0, 1.0, 0.0, 0.5),
        case(10, 0, 1.0, 0.0, 1.0),
        case(10, 0, 1.0, 5.0, 0.5),
        case(10, 0, 2.0, 0.0, 0.5),
        case(20, 0, 1.0, 0.0, 0.5),
        case(30, 0, 1.0, 0.0, 0.5),
    ];
    let overlapping = [
        case(10, 2, 1.0, 0.0, 0.5),
        case(10, 2, 1.0, 0.0, 1.0),
        case(10, 2, 1.0, 5.0, 0.5),
        case(10, 4, 2.0, 0.0, 0.5),
        case(20, 4, 1.0, 0.0, 0.5),
        case(30, 4, 1.0, 0.0, 0.5),
    ];
    let mut pass = true;
    let mut worst_fb: f64 = 1.0;
    let mut worst_wo: f64 = 1.0;
    let mut rows = Vec::new();
    for (i, c) in non_overlap.iter().enumerate() {
        let (sims, _) = split_case(c, 300 + i as u64)?;
        let min = sims.iter().copied().fold(1.0, f64::min);
        worst_fb = worst_fb.min(min);
        pass &= min >= C3_MIN_FRONT_BACK;
        rows.push(format!(
            "N={} rho={} mu_b={} S_w={}: min {min:.3}",
            c.n, c.rho, c.mu_b, c.s_w
        ));
    }
    for (i, c) in overlapping.iter().enumerate() {
        let (_, w_o) = split_case(c, 400 + i as u64)?;
        let w_o = w_o.unwrap_or(f64::NAN);
        worst_wo = worst_wo.min(w_o);
        pass &= w_o >= C3_MIN_W_OVERLAP;
        rows.push(format!(
            "N={} N_o={} rho={} mu_b={} S_w={}: W_o {w_o:.3}",
            c.n, c.overlap, c.rho, c.mu_b, c.s_w
        ));
    }
    outcome(
        pass,
        format!(
            "worst front/back {worst_fb:.3} (>= {C3_MIN_FRONT_BACK}), worst W_o {worst_wo:.3} (>= {C3_MIN_W_OVERLAP}); {}",
            rows.join("; ")
        ),
    )
}

/// Front region {0, 1}, back region {2, 3}. Electrode 1 excites 0 and 2,
/// electrode 3 inhibits 0 and 2.
fn regional_truth() -> NetworkSample {
    let mut t = NetworkSample::empty(vec![TRUTH_BIAS; 4]);
    t.set_edge(1, 0, TRUTH_WEIGHT);
    t.set_edge(1, 2, TRUTH_WEIGHT);
    t.set_edge(3, 0, -TRUTH_WEIGHT);
    t.set_edge(3, 2, -TRUTH_WEIGHT);
    t
}

fn c4_regional_signs() -> Result<Outcome> {
    let hp = HyperParams::synthetic();
    let truth = regional_truth();
    let layout = plan_split(&linear_geometry(4), 2, 0)?;
    // sign of the summed true inter-region blocks
    let block_sum = |a: &[usize], b: &[usize]| -> f64 {
        a.iter()
            .flat_map(|&m| b.iter().map(move |&n| (m, n)))
            .map(|(m, n)| truth.effective_weights()[(m, n)])
            .sum()
    };
    let expected = [
        (
            0,
            1,
            block_sum(&layout.regions[0], &layout.regions[1]).signum(),
        ),
        (
            1,
            0,
            block_sum(&layout.regions[1], &layout.regions[0]).signum(),
        ),
    ];
    let mut matches = 0;
    for seed in 0..C4_RUNS {
        let train =
            simulate_spike_train(&truth, C4_BINS, 1.0, &hp, seed, Some(linear_geometry(4)))?;
        if !rates_in_band(&train) {
            return outcome(
                false,
                format!("seed {seed}: simulated rates leave {RATE_BAND:?}"),
            );
        }
        let regional = aggregate_regions(&train, &layout)?;
        let chain = run_gibbs(&regional, &hp, &sampler(C4_ITERATIONS, C4_BURN_IN, seed))?;
        let s = summarize_chain(&chain)?;
        if expected
            .iter()
            .all(|&(r, q, sign)| s.mean_weight[(r, q)].signum() == sign)
        {
            matches += 1;
        }
    }
    outcome(
        matches >= C4_MIN_MATCHES,
        format!("{matches}/{C4_RUNS} runs match (>= {C4_MIN_MATCHES})"),
    )
}

fn c5_scaling() -> Result<Outcome> {
    let settings = bench::BenchSettings {
        sizes: C5_SIZES.to_vec(),
        bins: C5_BINS,
        warmup: C5_WARMUP,
        sweeps: C5_SWEEPS,
        regions: C5_REGIONS,
        in_degree: 2,
        weight: 1.0,
        bias: -3.0,
    };
    let report = bench::run_bench(&settings, &HyperParams::real_data(), &sampler(1, 0, 5))?;
    let region = report
        .region
        .as_ref()
        .ok_or_else(|| mea_netinfer::Error::Undefined("no per-region timing".into()))?;
    let slope_ok = report.slope >= C5_SLOPE.0 && report.slope <= C5_SLOPE.1;
    let ratio = region.ratio_to_quadratic;
    let ratio_ok = (1.0 / C5_REGION_FACTOR..=C5_REGION_FACTOR).contains(&ratio);
    let times: Vec<String> = report
        .timings
        .iter()
        .map(|t| {
            format!(
                "N={}: {:.4}s ({} edges)",
                t.n_electrodes, t.mean_sweep_s, t.edges
            )
        })
        .collect();
    outcome(
        slope_ok && ratio_ok,
        format!(
            "slope {:.3} (in [{}, {}]), region/(full/k^2) = {ratio:.3} (within x{C5_REGION_FACTOR}); {}",
            report.slope,
            C5_SLOPE.0,
            C5_SLOPE.1,
            times.join(", ")
        ),
    )
}

fn c6_pg_means() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for c in C6_TILTS {
        let draws: Vec<f64> = (0..C6_DRAWS)
            .map(|_| sample_polya_gamma(c, &mut rng))
            .collect();
        let n = C6_DRAWS as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected = if c == 0.0 {
            0.25
        } else {
            (c / 2.0).tanh() / (2.0 * c)
        };
        let z = (mean - expected).abs() / (var / n).sqrt();
        worst = worst.max(z);
        parts.push(format!("c={c}: {mean:.5} vs {expected:.5} ({z:.2} SE)"));
        assert!((pg_mean(c) - expected).abs() < 1e-12);
    }
    outcome(
        worst <= C6_MAX_SE,
        format!("max {worst:.2} SE (<= {C6_MAX_SE}); {}", parts.join(", ")),
    )
}

/// Composite Simpson rule on `[a, b]` with an even number of panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut sum = f(a) + f(b);
    for i in 1..panels {
        sum += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

fn c7_quadrature() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..C7_INSTANCES {
        let t_len = rng.random_range(20..200);
        let regressor: Vec<f64> = (0..t_len).map(|_| rng.random_range(0.0..1.5)).collect();
        let omega: Vec<f64> = (0..t_len).map(|_| rng.random_range(0.05..0.3)).collect();
        let spikes: Vec<u8> = (0..t_len)
            .map(|_| u8::from(rng.random::<f64>() < 0.3))
            .collect();
        let offset: Vec<f64> = (0..t_len).map(|_| rng.random_range(-3.0..1.0)).collect();
        let prior = GaussianPrior::new(rng.random_range(-1.0..1.0), rng.random_range(0.3..3.0));
        let rho: f64 = rng.random_range(0.05..0.95);
        // augmented log likelihood of the target as a function of the edge weight
        let loglik = |w: f64| -> f64 {
            (0..t_len)
                .map(|t| {
                    let psi = offset[t] + w * regressor[t];
                    (f64::from(spikes[t]) - 0.5) * psi - 0.5 * omega[t] * psi * psi
                })
                .sum()
        };
        let base = loglik(0.0);
        let log_prior = |w: f64| {
            -0.5 * (w - prior.mean).powi(2) / prior.var
                - 0.5 * (2.0 * std::f64::consts::PI * prior.var).ln()
        };
        // locate the integrand's mode on a coarse grid, then integrate around it
        let span = 40.0;
        let mode = (0..=8000)
            .map(|i| -span + 2.0 * span * i as f64 / 8000.0)
            .max_by(|a, b| (loglik(*a) + log_prior(*a)).total_cmp(&(loglik(*b) + log_prior(*b))))
            .unwrap();
        let peak = loglik(mode) + log_prior(mode);
        let integral = simpson(
            |w| (loglik(w) + log_prior(w) - peak).exp(),
            mode - 15.0,
            mode + 15.0,
            C7_GRID,
        );
        let quad = (rho / (1.0 - rho)).ln() + integral.ln() + peak - base;
        let analytic = edge_log_odds(&regressor, &omega, &spikes, &offset, prior, rho);
        // relative error of the odds themselves
        let rel = (analytic - quad).exp_m1().abs();
        worst = worst.max(rel);
    }
    outcome(
        worst <= C7_REL_TOL,
        format!(
            "worst relative odds error {worst:.2e} over {C7_INSTANCES} instances (<= {C7_REL_TOL})"
        ),
    )
}

/// Floyd-Warshall distances and explicit triangle counts on the
/// symmetrized graph.
#[allow(clippy::needless_range_loop)]
fn brute_force_metrics(n: usize, edges: &[(usize, usize)]) -> GraphMetrics {
    let mut adj = vec![vec![false; n]; n];
    let mut directed = BTreeSet::new();
    for &(m, t) in edges {
        if m != t {
            adj[m][t] = true;
            adj[t][m] = true;
            directed.insert((m, t));
        }
    }
    const INF: usize = usize::MAX / 4;
    let mut d = vec![vec![INF; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for j in 0..n {
            if adj[i][j] {
                d[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    let mut total = 0;
    let mut count = 0;
    for i in 0..n {
        for j in 0..n {
            if i != j && d[i][j] < INF {
                total += d[i][j];
                count += 1;
            }
        }
    }
    let mut clustering = 0.0;
    for v in 0..n {
        let deg = (0..n).filter(|&u| adj[v][u]).count();
        if deg < 2 {
            continue;
        }
        let mut tri = 0;
        for a in 0..n {
            for b in a + 1..n {
                if adj[v][a] && adj[v][b] && adj[a][b] {
                    tri += 1;
                }
            }
        }
        clustering += tri as f64 / (deg * (deg - 1) / 2) as f64;
    }
    GraphMetrics {
        n_connections: directed.len(),
        avg_clustering: if n == 0 { 0.0 } else { clustering / n as f64 },
        avg_path_length: if count == 0 {
            0.0
        } else {
            total as f64 / count as f64
        },
        reachable_fraction: if n < 2 {
            0.0
        } else {
            count as f64 / (n * (n - 1)) as f64
        },
    }
}

fn c8_graph_oracle() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mismatches = 0;
    for _ in 0..C8_GRAPHS {
        let n = rng.random_range(1..=10);
        let p = rng.random_range(0.05..0.6);
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|m| (0..n).map(move |t| (m, t)))
            .filter(|_| rng.random::<f64>() < p)
            .collect();
        let fast = graph_metrics(&DiGraph::from_edges(n, &edges)?);
        let slow = brute_force_metrics(n, &edges);
        // both sides accumulate the same terms in the same order
        let same = fast.n_connections == slow.n_connections
            && fast.avg_clustering == slow.avg_clustering
            && fast.avg_path_length == slow.avg_path_length
            && fast.reachable_fraction == slow.reachable_fraction;
        if !same {
            mismatches += 1;
        }
    }
    let triangle = graph_metrics(&DiGraph::from_edges(3, &[(0, 1), (1, 2), (2, 0)])?);
    let star = graph_metrics(&DiGraph::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)])?);
    let triangle_ok = triangle.n_connections == 3
        && triangle.avg_clustering == 1.0
        && triangle.avg_path_length == 1.0;
    let star_ok =
        star.n_connections == 4 && star.avg_clustering == 0.0 && star.avg_path_length == 1.6;
    outcome(
        mismatches == 0 && triangle_ok && star_ok,
        format!(
            "{mismatches}/{C8_GRAPHS} random graphs differ; triangle {}, star {} (path length {})",
            if triangle_ok { "exact" } else { "WRONG" },
            if star_ok { "exact" } else { "WRONG" },
            star.avg_path_length
        ),
    )
}

/// Each node excites or inhibits its two nearest neighbors on either side.
fn ring_lattice(seed: u64) -> NetworkSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = C9_NODES;
    let mut t = NetworkSample::empty(vec![TRUTH_BIAS; n]);
    for m in 0..n {
        for d in [1, 2, n - 1, n - 2] {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            t.set_edge(m, (m + d) % n, sign * TRUTH_WEIGHT);
        }
    }
    t
}

/// Removes half of the connected electrode pairs, both directions of each.
fn ablate(net: &NetworkSample, seed: u64) -> NetworkSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_e = net.n_electrodes();
    let mut pairs: Vec<(usize, usize)> = (0..n_e)
        .flat_map(|m| (m + 1..n_e).map(move |n| (m, n)))
        .filter(|&(m, n)| net.has_edge(m, n) || net.has_edge(n, m))
        .collect();
    // Fisher-Yates; the first half is removed
    for i in (1..pairs.len()).rev() {
        pairs.swap(i, rng.random_range(0..=i));
    }
    let mut out = net.clone();
    for &(m, n) in &pairs[..pairs.len() / 2] {
        for (a, b) in [(m, n), (n, m)] {
            out.adjacency[(a, b)] = 0;
            out.weights[(a, b)] = 0.0;
        }
    }
    out
}

fn truth_metrics(net: &NetworkSample) -> Result<GraphMetrics> {
    let n = net.n_electrodes();
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|m| (0..n).map(move |k| (m, k)))
        .filter(|&(m, k)| net.has_edge(m, k))
        .collect();
    Ok(graph_metrics(&DiGraph::from_edges(n, &edges)?))
}

fn posterior_metrics(chain: &PosteriorChain) -> Result<mea_netinfer::analysis::MetricSummary> {
    summarize_metrics(&posterior_metric_distribution(
        chain,
        DEFAULT_THETA_W,
        DEFAULT_THETA_A,
    )?)
}

fn c9_ablation() -> Result<Outcome> {
    let hp = HyperParams::synthetic();
    let (control, control_train) = admissible(900, C9_BINS, &hp, |s| Ok(Some(ring_lattice(s))))?;
    // path lengths over all pairs need the ablated truth to stay connected
    let (ablated, ablated_train) = admissible(900, C9_BINS, &hp, |s| {
        let a = ablate(&control, s);
        Ok((truth_metrics(&a)?.reachable_fraction == 1.0).then_some(a))
    })?;
    let cfg = sampler(C9_ITERATIONS, C9_BURN_IN, 9);
    let c = posterior_metrics(&run_gibbs(&control_train, &hp, &cfg)?)?;
    let a = posterior_metrics(&run_gibbs(&ablated_train, &hp, &cfg)?)?;
    let fewer =
        a.n_connections.mean < c.n_connections.mean && a.n_connections.disjoint(&c.n_connections);
    let less_clustered = a.avg_clustering.mean < c.avg_clustering.mean
        && a.avg_clustering.disjoint(&c.avg_clustering);
    let longer = a.avg_path_length.mean > c.avg_path_length.mean
        && a.avg_path_length.disjoint(&c.avg_path_length);
    let show = |i: &mea_netinfer::analysis::Interval| {
        format!("{:.3} [{:.3}, {:.3}]", i.mean, i.lower, i.upper)
    };
    outcome(
        fewer && less_clustered && longer,
        format!(
            "true edges {} -> {}, true path length {:.3} -> {:.3}; connections {} -> {}; clustering {} -> {}; path length {} -> {}",
            control.edge_count(),
            ablated.edge_count(),
            truth_metrics(&control)?.avg_path_length,
            truth_metrics(&ablated)?.avg_path_length,
            show(&c.n_connections),
            show(&a.n_connections),
            show(&c.avg_clustering),
            show(&a.avg_clustering),
            show(&c.avg_path_length),
            show(&a.avg_path_length)
        ),
    )
}

fn read_outputs(dir: &Path, skip: &[&str]) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    let mut pending = vec![dir.to_path_buf()];
    while let Some(d) = pending.pop() {
        for entry in std::fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                pending.push(path);
                continue;
            }
            let rel = path
                .strip_prefix(dir)
                .unwrap()
                .to_string_lossy()
                .to_string();
            if rel != MANIFEST_FILE && rel != RUN_CONFIG_FILE && !skip.contains(&rel.as_str()) {
                files.push((rel, std::fs::read(&path)?));
            }
        }
    }
    files.sort();
    Ok(files)
}

/// Bench timings are wall-clock measurements; only the deterministic
/// columns (sizes and final edge counts) are compared.
fn bench_fingerprint(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let text = std::fs::read_to_string(dir.join("bench.csv"))?;
    let kept: String = text
        .lines()
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            format!("{},{}\n", cols[0], cols[cols.len() - 1])
        })
        .collect();
    Ok(vec![(
        "bench.csv[n_electrodes,edges]".to_string(),
        kept.into_bytes(),
    )])
}

fn run_command(kind: CommandKind, out: &Path, pairs: &[(&str, String)]) -> Result<()> {
    let mut cfg = RunConfig::default();
    cfg.set("out", &out.display().to_string(), Source::Flag)?;
    for (k, v) in pairs {
        cfg.set(k, v, Source::Flag)?;
    }
    cli::execute(kind, &cfg)
}

fn replay(manifest: &Path, out: &Path, threads: usize) -> Result<()> {
    let (kind, mut cfg) = cli::config_from_manifest(manifest)?;
    cfg.set("out", &out.display().to_string(), Source::Flag)?;
    cfg.set("threads", &threads.to_string(), Source::Flag)?;
    cli::execute(kind, &cfg)
}

/// Command, output directory name and configuration pairs.
type ReplayStep<'a> = (CommandKind, &'a str, Vec<(&'a str, String)>);

fn c10_replay() -> Result<Outcome> {
    let root = tempfile::tempdir()?;
    let p = |name: &str| root.path().join(name);
    let s = |v: &str| v.to_string();
    let gen = p("generate");
    let commands: Vec<ReplayStep> = vec![
        (
            CommandKind::Generate,
            "generate",
            vec![
                ("n_electrodes", s("6")),
                ("bins", s("3000")),
                ("seed", s("10")),
                ("geometry", s("linear")),
            ],
        ),
        (
            CommandKind::Infer,
            "infer",
            vec![
                ("input", gen.join(cli::TRAIN_FILE).display().to_string()),
                ("iterations", s("60")),
                ("burn_in", s("30")),
                ("seed", s("11")),
            ],
        ),
        (
            CommandKind::SplitInfer,
            "split",
            vec![
                ("input", gen.join(cli::TRAIN_FILE).display().to_string()),
                ("regions", s("2")),
                ("overlap", s("2")),
                ("iterations", s("40")),
                ("burn_in", s("20")),
                ("seed", s("12")),
            ],
        ),
        (
            CommandKind::Metrics,
            "metrics",
            vec![("chain", p("infer").display().to_string())],
        ),
        (
            CommandKind::Compare,
            "compare",
            vec![
                ("estimate", p("infer").display().to_string()),
                ("truth", gen.join(cli::TRUTH_DIR).display().to_string()),
            ],
        ),
        (
            CommandKind::Bench,
            "bench",
            vec![
                ("bench_sizes", s("4,8")),
                ("bench_bins", s("400")),
                ("bench_warmup", s("2")),
                ("bench_sweeps", s("2")),
                ("bench_regions", s("2")),
            ],
        ),
    ];
    let mut compared = 0;
    let mut differing = Vec::new();
    for (kind, name, pairs) in &commands {
        let original = p(name);
        run_command(*kind, &original, pairs)?;
        let fingerprint = |dir: &Path| {
            if *kind == CommandKind::Bench {
                bench_fingerprint(dir)
            } else {
                read_outputs(dir, &[])
            }
        };
        let reference = fingerprint(&original)?;
        for threads in [1, 24] {
            let again = p(&format!("{name}-replay-{threads}"));
            replay(&original.join(MANIFEST_FILE), &again, threads)?;
            compared += 1;
            if fingerprint(&again)? != reference {
                differing.push(format!("{name}@{threads}"));
            }
        }
    }
    outcome(
        differing.is_empty(),
        format!(
            "{compared} replays of {} commands at widths 1 and 24; differing: {}",
            commands.len(),
            if differing.is_empty() {
                "none".to_string()
            } else {
                differing.join(", ")
            }
        ),
    )
}
