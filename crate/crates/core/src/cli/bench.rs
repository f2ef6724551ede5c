//! Sweep-time benchmark over array sizes.
//!
//! Each size gets a sparse circulant truth (electrode `n` receives input
//! from `n + 3j mod N` for `j = 1..=in_degree`, alternating signs), a
//! simulated train, a number of untimed warm-up sweeps from the prior draw,
//! and then timed sweeps. Wall-clock times are inherently run-dependent; the
//! chain state after the timed sweeps is not.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hierarchy::plan_split;
use crate::model::{simulate_spike_train, HyperParams, NetworkSample};
use crate::sampler::{GibbsSampler, SamplerConfig};
use crate::spikedata::{default_grid, SpikeTrain};

/// Benchmark settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSettings {
    pub sizes: Vec<usize>,
    pub bins: usize,
    pub warmup: usize,
    pub sweeps: usize,
    pub regions: usize,
    pub in_degree: usize,
    pub weight: f64,
    pub bias: f64,
}

/// Timing of one array size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeTiming {
    pub n_electrodes: usize,
    pub mean_sweep_s: f64,
    /// Edges in the chain state after the timed sweeps.
    pub edges: usize,
}

/// Per-region timing at the largest size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionTiming {
    pub n_electrodes: usize,
    pub regions: usize,
    pub full_sweep_s: f64,
    pub region_sweep_s: Vec<f64>,
    pub mean_region_sweep_s: f64,
    /// `mean_region_sweep_s / (full_sweep_s / regions^2)`.
    pub ratio_to_quadratic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub settings: BenchSettings,
    pub timings: Vec<SizeTiming>,
    /// Least-squares slope of `ln(time)` against `ln(N)`.
    pub slope: f64,
    pub intercept: f64,
    pub region: Option<RegionTiming>,
}

/// Sparse circulant benchmark network.
pub fn bench_truth(n: usize, in_degree: usize, weight: f64, bias: f64) -> NetworkSample {
    let mut net = NetworkSample::empty(vec![bias; n]);
    for target in 0..n {
        for j in 1..=in_degree {
            let source = (target + 3 * j) % n;
            if source != target {
                let w = if j % 2 == 1 { weight } else { -weight };
                net.set_edge(source, target, w);
            }
        }
    }
    net
}

/// Least-squares fit `y = intercept + slope x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Undefined(
            "line fit needs at least two points".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Undefined("line fit needs distinct x values".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Mean wall time of `sweeps` sweeps after `warmup` untimed ones, and the
/// edge count afterwards.
pub fn time_sweeps(
    train: &SpikeTrain,
    hp: &HyperParams,
    cfg: &SamplerConfig,
    warmup: usize,
    sweeps: usize,
) -> Result<(f64, usize)> {
    let mut sampler = GibbsSampler::new(train, hp, cfg)?;
    for _ in 0..warmup {
        sampler.sweep()?;
    }
    let start = Instant::now();
    for _ in 0..sweeps {
        sampler.sweep()?;
    }
    let mean = start.elapsed().as_secs_f64() / sweeps.max(1) as f64;
    Ok((mean, sampler.state().edge_count()))
}

/// Run the benchmark.
pub fn run_bench(
    settings: &BenchSettings,
    hp: &HyperParams,
    cfg: &SamplerConfig,
) -> Result<BenchReport> {
    if settings.sizes.is_empty() || settings.sweeps == 0 {
        return Err(Error::Config(
            "bench needs at least one size and one timed sweep".into(),
        ));
    }
    let mut timings = Vec::with_capacity(settings.sizes.len());
    let mut largest: Option<(SpikeTrain, f64)> = None;
    for &n in &settings.sizes {
        let truth = bench_truth(n, settings.in_degree, settings.weight, settings.bias);
        let train = simulate_spike_train(
            &truth,
            settings.bins,
            1.0,
            hp,
            cfg.seed,
            Some(default_grid(n)),
        )?;
        let (mean, edges) = time_sweeps(&train, hp, cfg, settings.warmup, settings.sweeps)?;
        timings.push(SizeTiming {
            n_electrodes: n,
            mean_sweep_s: mean,
            edges,
        });
        if largest.as_ref().is_none_or(|(t, _)| t.n_electrodes() < n) {
            largest = Some((train, mean));
        }
    }
    let (slope, intercept) = if timings.len() >= 2 {
        let x: Vec<f64> = timings
            .iter()
            .map(|t| (t.n_electrodes as f64).ln())
            .collect();
        let y: Vec<f64> = timings.iter().map(|t| t.mean_sweep_s.ln()).collect();
        fit_line(&x, &y)?
    } else {
        (f64::NAN, f64::NAN)
    };
    let region = match largest {
        Some((train, full)) if settings.regions > 1 => {
            let layout = plan_split(train.geometry(), settings.regions, 0)?;
            let region_sweep_s = layout
                .regions
                .iter()
                .map(|r| {
                    let sub = train.subset(r)?;
                    Ok(time_sweeps(&sub, hp, cfg, settings.warmup, settings.sweeps)?.0)
                })
                .collect::<Result<Vec<f64>>>()?;
            let k = settings.regions as f64;
            let mean = region_sweep_s.iter().sum::<f64>() / k;
            Some(RegionTiming {
                n_electrodes: train.n_electrodes(),
                regions: settings.regions,
                full_sweep_s: full,
                mean_region_sweep_s: mean,
                ratio_to_quadratic: mean / (full / (k * k)),
                region_sweep_s,
            })
        }
        _ => None,
    };
    Ok(BenchReport {
        settings: settings.clone(),
        timings,
        slope,
        intercept,
        region,
    })
}
