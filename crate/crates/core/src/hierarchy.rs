//! Two-level inference for large arrays.
//!
//! The electrode grid is tiled into rectangular regions, optionally extended
//! so that adjacent regions share `N_o` electrodes along their common border.
//! Level 1 runs the sampler on each region's electrodes; level 2 collapses
//! each region into one super-electrode (binarizing the region's per-bin mean
//! firing) and infers the connectivity between regions. Per-region results
//! can be merged into one array-sized summary in which electrode pairs never
//! seen together by any region are masked.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::summarize_chain;
use crate::error::{Error, Result};
use crate::model::HyperParams;
use crate::sampler::{run_gibbs, PosteriorChain, SamplerConfig};
use crate::spikedata::{linear_geometry, GridPos, SpikeTrain};

/// How a region's per-bin mean firing becomes a binary super-electrode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Fires iff any member fires.
    #[default]
    AnySpike,
    /// Fires iff the share of firing members is at least the threshold.
    MeanThreshold(f64),
}

impl Aggregation {
    fn fires(&self, active: usize, size: usize) -> bool {
        match *self {
            Aggregation::AnySpike => active > 0,
            Aggregation::MeanThreshold(theta) => active as f64 / size as f64 >= theta,
        }
    }
}

/// Electrodes assigned to each region, plus the shared electrodes of every
/// overlapping pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionLayout {
    pub regions: Vec<Vec<usize>>,
    /// `(i, j, shared)`: regions `i < j` share the electrodes `shared`.
    #[serde(default)]
    pub overlap_pairs: Vec<(usize, usize, Vec<usize>)>,
    #[serde(default)]
    pub aggregation: Aggregation,
}

impl RegionLayout {
    /// A single region holding every electrode.
    pub fn single(n_electrodes: usize) -> Self {
        RegionLayout {
            regions: vec![(0..n_electrodes).collect()],
            overlap_pairs: Vec::new(),
            aggregation: Aggregation::AnySpike,
        }
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    /// Largest number of electrodes shared by an adjacent pair (0 without
    /// overlap).
    pub fn overlap_count(&self) -> usize {
        self.overlap_pairs
            .iter()
            .map(|p| p.2.len())
            .max()
            .unwrap_or(0)
    }

    /// Check the layout against an array of `n_electrodes`.
    pub fn validate(&self, n_electrodes: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Layout(msg));
        if self.regions.is_empty() {
            return bad("no regions".into());
        }
        if let Aggregation::MeanThreshold(theta) = self.aggregation {
            if !(theta > 0.0 && theta <= 1.0) {
                return bad(format!("mean threshold {theta} outside (0, 1]"));
            }
        }
        let mut covered = vec![false; n_electrodes];
        let mut sets = Vec::with_capacity(self.regions.len());
        for (r, region) in self.regions.iter().enumerate() {
            if region.is_empty() {
                return bad(format!("region {r} is empty"));
            }
            let set: BTreeSet<usize> = region.iter().copied().collect();
            if set.len() != region.len() {
                return bad(format!("region {r} lists an electrode twice"));
            }
            if let Some(&e) = set.iter().find(|&&e| e >= n_electrodes) {
                return bad(format!("region {r} names electrode {e} of {n_electrodes}"));
            }
            for &e in &set {
                covered[e] = true;
            }
            sets.push(set);
        }
        if let Some(e) = covered.iter().position(|c| !c) {
            return bad(format!("electrode {e} belongs to no region"));
        }
        let mut listed = BTreeSet::new();
        for (i, j, shared) in &self.overlap_pairs {
            let (i, j) = (*i, *j);
            if i >= j || j >= self.regions.len() {
                return bad(format!(
                    "overlap pair ({i}, {j}) is not an ordered pair of regions"
                ));
            }
            if !listed.insert((i, j)) {
                return bad(format!("overlap pair ({i}, {j}) listed twice"));
            }
            let expected: BTreeSet<usize> = sets[i].intersection(&sets[j]).copied().collect();
            let given: BTreeSet<usize> = shared.iter().copied().collect();
            if given != expected {
                return bad(format!(
                    "overlap of regions {i} and {j} lists {given:?} but they share {expected:?}"
                ));
            }
        }
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                if !listed.contains(&(i, j)) && sets[i].intersection(&sets[j]).next().is_some() {
                    return bad(format!(
                        "regions {i} and {j} share electrodes not declared as overlap"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Read a layout JSON file.
pub fn read_layout(path: &Path) -> Result<RegionLayout> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Layout(format!("{}: {e}", path.display())))
}

pub fn write_layout(path: &Path, layout: &RegionLayout) -> Result<()> {
    let mut text = serde_json::to_string_pretty(layout)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn grid_extent(geometry: &[GridPos]) -> (usize, usize) {
    let rows = geometry
        .iter()
        .map(|p| p.row as usize + 1)
        .max()
        .unwrap_or(0);
    let cols = geometry
        .iter()
        .map(|p| p.col as usize + 1)
        .max()
        .unwrap_or(0);
    (rows, cols)
}

/// Split into `k_regions` blocks, choosing the block grid whose blocks are
/// closest to square.
pub fn plan_split(geometry: &[GridPos], k_regions: usize, overlap: usize) -> Result<RegionLayout> {
    if k_regions == 0 {
        return Err(Error::Layout("need at least one region".into()));
    }
    if k_regions > geometry.len() {
        return Err(Error::Layout(format!(
            "{k_regions} regions for {} electrodes",
            geometry.len()
        )));
    }
    let (rows, cols) = grid_extent(geometry);
    let aspect = |kr: usize, kc: usize| {
        ((rows as f64 / kr as f64) / (cols as f64 / kc as f64))
            .ln()
            .abs()
    };
    let (kr, kc) = (1..=k_regions)
        .filter(|&kr| k_regions.is_multiple_of(kr))
        .map(|kr| (kr, k_regions / kr))
        .filter(|&(kr, kc)| kr <= rows && kc <= cols)
        .min_by(|a, b| aspect(a.0, a.1).total_cmp(&aspect(b.0, b.1)))
        .ok_or_else(|| {
            Error::Layout(format!(
                "cannot tile a {rows}x{cols} grid into {k_regions} blocks"
            ))
        })?;
    plan_grid_split(geometry, kr, kc, overlap)
}

/// Split into a `block_rows x block_cols` grid of contiguous rectangular
/// blocks; with `overlap > 0` every pair of side-adjacent blocks exchanges
/// the `overlap / 2` electrodes of each side nearest their common border.
pub fn plan_grid_split(
    geometry: &[GridPos],
    block_rows: usize,
    block_cols: usize,
    overlap: usize,
) -> Result<RegionLayout> {
    let n = geometry.len();
    let k = block_rows * block_cols;
    if k == 0 {
        return Err(Error::Layout("need at least one region".into()));
    }
    if k > n {
        return Err(Error::Layout(format!("{k} regions for {n} electrodes")));
    }
    if !overlap.is_multiple_of(2) {
        return Err(Error::Layout(format!("overlap {overlap} must be even")));
    }
    let (rows, cols) = grid_extent(geometry);
    if block_rows > rows || block_cols > cols {
        return Err(Error::Layout(format!(
            "cannot tile a {rows}x{cols} grid into {block_rows}x{block_cols} blocks"
        )));
    }
    let block_of = |p: &GridPos| {
        let br = p.row as usize * block_rows / rows;
        let bc = p.col as usize * block_cols / cols;
        (br, bc)
    };
    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (e, p) in geometry.iter().enumerate() {
        let (br, bc) = block_of(p);
        blocks[br * block_cols + bc].push(e);
    }
    if let Some(b) = blocks.iter().position(Vec::is_empty) {
        return Err(Error::Layout(format!("block {b} contains no electrode")));
    }
    let half = overlap / 2;
    if half > 0 {
        if let Some(smallest) = blocks.iter().map(Vec::len).min() {
            if half > smallest {
                return Err(Error::Layout(format!(
                    "overlap {overlap} needs {half} electrodes per side but a region has {smallest}"
                )));
            }
        }
    }

    let mut regions: Vec<BTreeSet<usize>> =
        blocks.iter().map(|b| b.iter().copied().collect()).collect();
    let mut shares: Vec<(usize, usize, Vec<usize>)> = Vec::new();
    if half > 0 {
        for br in 0..block_rows {
            for bc in 0..block_cols {
                let a = br * block_cols + bc;
                // right neighbor: border is vertical; vertical neighbor: horizontal
                if bc + 1 < block_cols {
                    let b = a + 1;
                    let pair = border_exchange(geometry, &blocks[a], &blocks[b], half, Axis::Col);
                    shares.push((a, b, pair));
                }
                if br + 1 < block_rows {
                    let b = a + block_cols;
                    let pair = border_exchange(geometry, &blocks[a], &blocks[b], half, Axis::Row);
                    shares.push((a, b, pair));
                }
            }
        }
        for (a, b, shared) in &shares {
            regions[*a].extend(shared.iter().copied());
            regions[*b].extend(shared.iter().copied());
        }
    }
    let regions: Vec<Vec<usize>> = regions
        .into_iter()
        .map(|r| r.into_iter().collect())
        .collect();
    let mut overlap_pairs = Vec::new();
    for i in 0..regions.len() {
        for j in i + 1..regions.len() {
            let shared: Vec<usize> = regions[i]
                .iter()
                .filter(|e| regions[j].binary_search(e).is_ok())
                .copied()
                .collect();
            if !shared.is_empty() {
                overlap_pairs.push((i, j, shared));
            }
        }
    }
    let layout = RegionLayout {
        regions,
        overlap_pairs,
        aggregation: Aggregation::AnySpike,
    };
    layout.validate(n)?;
    Ok(layout)
}

#[derive(Clone, Copy)]
enum Axis {
    Row,
    Col,
}

/// The `half` electrodes of `first` nearest its border with `second` (which
/// lies after it along `axis`) plus the `half` of `second` nearest the same
/// border. Ties go to electrodes nearer the middle of the border, then to
/// lower indices.
fn border_exchange(
    geometry: &[GridPos],
    first: &[usize],
    second: &[usize],
    half: usize,
    axis: Axis,
) -> Vec<usize> {
    let along = |e: usize| match axis {
        Axis::Col => geometry[e].col as f64,
        Axis::Row => geometry[e].row as f64,
    };
    let across = |e: usize| match axis {
        Axis::Col => geometry[e].row as f64,
        Axis::Row => geometry[e].col as f64,
    };
    let border_mid = {
        let all: Vec<f64> = first.iter().chain(second).map(|&e| across(e)).collect();
        let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    };
    let pick = |members: &[usize], toward_high: bool| -> Vec<usize> {
        let mut sorted = members.to_vec();
        sorted.sort_by(|&x, &y| {
            let (dx, dy) = if toward_high {
                (-along(x), -along(y))
            } else {
                (along(x), along(y))
            };
            dx.total_cmp(&dy)
                .then(
                    (across(x) - border_mid)
                        .abs()
                        .total_cmp(&(across(y) - border_mid).abs()),
                )
                .then(x.cmp(&y))
        });
        sorted.truncate(half);
        sorted
    };
    let mut shared = pick(first, true);
    shared.extend(pick(second, false));
    shared.sort_unstable();
    shared
}

/// One binary super-electrode per region, placed at the region centroid.
pub fn aggregate_regions(train: &SpikeTrain, layout: &RegionLayout) -> Result<SpikeTrain> {
    layout.validate(train.n_electrodes())?;
    let k = layout.n_regions();
    let n_bins = train.n_bins();
    let mut data = vec![0u8; n_bins * k];
    for t in 0..n_bins {
        let row = train.bin(t);
        for (r, region) in layout.regions.iter().enumerate() {
            let active = region.iter().filter(|&&e| row[e] != 0).count();
            data[t * k + r] = u8::from(layout.aggregation.fires(active, region.len()));
        }
    }
    let centroids: Vec<GridPos> = layout
        .regions
        .iter()
        .map(|region| {
            let len = region.len() as f64;
            let row = region
                .iter()
                .map(|&e| f64::from(train.geometry()[e].row))
                .sum::<f64>()
                / len;
            let col = region
                .iter()
                .map(|&e| f64::from(train.geometry()[e].col))
                .sum::<f64>()
                / len;
            GridPos::new(row.round() as u32, col.round() as u32)
        })
        .collect();
    let distinct: BTreeSet<GridPos> = centroids.iter().copied().collect();
    let geometry = if distinct.len() == k {
        centroids
    } else {
        linear_geometry(k)
    };
    let ids = (0..k).map(|r| format!("R{r}")).collect();
    SpikeTrain::from_dense(k, n_bins, train.bin_ms(), data, Some(geometry), Some(ids))
}

/// Output of a two-level run.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalResult {
    /// Level-1 chain of each region; `electrodes` holds the global indices.
    pub regions: Vec<PosteriorChain>,
    /// Level-2 chain over the super-electrodes.
    pub regional: PosteriorChain,
}

/// Run the sampler on every region (up to `jobs` at a time; 0 uses every
/// core) and on the aggregated super-electrodes.
pub fn infer_hierarchical(
    train: &SpikeTrain,
    layout: &RegionLayout,
    hp: &HyperParams,
    cfg: &SamplerConfig,
    jobs: usize,
) -> Result<HierarchicalResult> {
    layout.validate(train.n_electrodes())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))?;
    let regions = pool.install(|| {
        layout
            .regions
            .par_iter()
            .map(|region| {
                let sub = train.subset(region)?;
                let mut chain = run_gibbs(&sub, hp, cfg)?;
                chain.electrodes = region.clone();
                Ok(chain)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let aggregated = aggregate_regions(train, layout)?;
    let regional = run_gibbs(&aggregated, hp, cfg)?;
    Ok(HierarchicalResult { regions, regional })
}

/// Array-sized posterior summary assembled from per-region chains.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedSummary {
    pub edge_prob: DMatrix<f64>,
    pub mean_weight: DMatrix<f64>,
    pub mean_bias: DVector<f64>,
    /// `false` where no region contains both electrodes; those entries are 0
    /// in the matrices and are covered by the regional chain instead.
    pub estimated: DMatrix<bool>,
}

/// Average the per-region posterior means; pairs estimated by several
/// overlapping regions get the arithmetic mean of their estimates.
pub fn merge_region_posteriors(
    chains: &[PosteriorChain],
    layout: &RegionLayout,
    n_electrodes: usize,
) -> Result<MergedSummary> {
    layout.validate(n_electrodes)?;
    if chains.len() != layout.n_regions() {
        return Err(Error::Layout(format!(
            "{} chains for {} regions",
            chains.len(),
            layout.n_regions()
        )));
    }
    let mut prob = DMatrix::<f64>::zeros(n_electrodes, n_electrodes);
    let mut weight = DMatrix::<f64>::zeros(n_electrodes, n_electrodes);
    let mut count = DMatrix::<usize>::zeros(n_electrodes, n_electrodes);
    let mut bias = DVector::<f64>::zeros(n_electrodes);
    let mut bias_count = vec![0usize; n_electrodes];
    for (r, (chain, region)) in chains.iter().zip(&layout.regions).enumerate() {
        if &chain.electrodes != region {
            return Err(Error::Layout(format!(
                "chain {r} covers electrodes {:?} but region {r} is {:?}",
                chain.electrodes, region
            )));
        }
        let s = summarize_chain(chain)?;
        if s.edge_prob.nrows() != region.len() {
            return Err(Error::DimensionMismatch(format!(
                "chain {r} has {} electrodes, region has {}",
                s.edge_prob.nrows(),
                region.len()
            )));
        }
        for (i, &gi) in region.iter().enumerate() {
            for (j, &gj) in region.iter().enumerate() {
                prob[(gi, gj)] += s.edge_prob[(i, j)];
                weight[(gi, gj)] += s.mean_weight[(i, j)];
                count[(gi, gj)] += 1;
            }
            bias[gi] += s.mean_bias[i];
            bias_count[gi] += 1;
        }
    }
    let estimated = count.map(|c| c > 0);
    for idx in 0..count.len() {
        if count[idx] > 0 {
            prob[idx] /= count[idx] as f64;
            weight[idx] /= count[idx] as f64;
        }
    }
    for (b, &c) in bias.iter_mut().zip(&bias_count) {
        *b /= c as f64;
    }
    Ok(MergedSummary {
        edge_prob: prob,
        mean_weight: weight,
        mean_bias: bias,
        estimated,
    })
}
