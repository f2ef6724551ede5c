//! Binned binary spike trains and the `MEASPIKES` text format.
//!
//! A [`SpikeTrain`] holds one bit per (time bin, electrode): an electrode
//! fires at most once per bin, so several detected events of one electrode
//! inside a bin collapse to a single spike. Every train carries its electrode
//! geometry (grid row/column per electrode) because the region splitter needs
//! it; trains built without geometry get a synthesized grid that is flagged.
//!
//! `MEASPIKES` version 1 layout:
//!
//! ```text
//! MEASPIKES 1
//! <n_electrodes> <n_bins> <bin_ms>
//! GEOM <electrode_index> <row> <col> <id>     (one line per electrode)
//! <bin_index> <electrode_index>               (one line per spike, any order)
//! ```
//!
//! Lines starting with `#` are comments.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Default bin width: a 3-minute recording becomes 180,000 one-millisecond bins.
pub const DEFAULT_BIN_MS: f64 = 1.0;

const MAGIC: &str = "MEASPIKES";
const FORMAT_VERSION: u32 = 1;

/// Grid coordinates of one electrode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridPos {
    pub row: u32,
    pub col: u32,
}

impl GridPos {
    pub fn new(row: u32, col: u32) -> Self {
        GridPos { row, col }
    }
}

/// Row-major grid of the most square shape holding `n` electrodes.
///
/// Exact factorizations are preferred when the long side is at most twice
/// the short one (120 electrodes become 10 rows of 12); otherwise the grid
/// is `ceil(sqrt(n))` wide and the last row is partially filled.
pub fn default_grid(n: usize) -> Vec<GridPos> {
    if n == 0 {
        return Vec::new();
    }
    let root = (n as f64).sqrt().floor() as usize;
    let exact = (1..=root)
        .rev()
        .find(|&rows| n.is_multiple_of(rows) && n / rows <= 2 * rows);
    let cols = match exact {
        Some(rows) => n / rows,
        None => (n as f64).sqrt().ceil() as usize,
    };
    (0..n)
        .map(|i| GridPos::new((i / cols) as u32, (i % cols) as u32))
        .collect()
}

/// Electrodes laid out on a single row: electrode `i` sits at `(0, i)`.
pub fn linear_geometry(n: usize) -> Vec<GridPos> {
    (0..n).map(|i| GridPos::new(0, i as u32)).collect()
}

fn default_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("E{i}")).collect()
}

/// Binned binary firing matrix `X[t][n]` with electrode geometry.
///
/// Immutable once constructed. Equality compares dimensions, bin width,
/// spikes, geometry and ids; the synthesized-geometry flag is diagnostic
/// only and is not part of the file format.
#[derive(Debug, Clone)]
pub struct SpikeTrain {
    n_electrodes: usize,
    n_bins: usize,
    bin_ms: f64,
    // row-major: data[t * n_electrodes + n]
    data: Vec<u8>,
    geometry: Vec<GridPos>,
    ids: Vec<String>,
    geometry_synthesized: bool,
}

impl PartialEq for SpikeTrain {
    fn eq(&self, other: &Self) -> bool {
        self.n_electrodes == other.n_electrodes
            && self.n_bins == other.n_bins
            && self.bin_ms.to_bits() == other.bin_ms.to_bits()
            && self.data == other.data
            && self.geometry == other.geometry
            && self.ids == other.ids
    }
}

impl SpikeTrain {
    /// All-zero train. Missing geometry is synthesized with [`default_grid`],
    /// missing ids become `E0, E1, ...`.
    pub fn zeros(
        n_electrodes: usize,
        n_bins: usize,
        bin_ms: f64,
        geometry: Option<Vec<GridPos>>,
        ids: Option<Vec<String>>,
    ) -> Result<Self> {
        Self::from_dense(
            n_electrodes,
            n_bins,
            bin_ms,
            vec![0; n_electrodes * n_bins],
            geometry,
            ids,
        )
    }

    /// Build from a row-major `n_bins x n_electrodes` matrix of 0/1 values.
    pub fn from_dense(
        n_electrodes: usize,
        n_bins: usize,
        bin_ms: f64,
        data: Vec<u8>,
        geometry: Option<Vec<GridPos>>,
        ids: Option<Vec<String>>,
    ) -> Result<Self> {
        if n_electrodes == 0 {
            return Err(Error::InvalidTrain("no electrodes".into()));
        }
        if n_bins == 0 {
            return Err(Error::InvalidTrain("n_bins must be at least 1".into()));
        }
        if !(bin_ms.is_finite() && bin_ms > 0.0) {
            return Err(Error::InvalidTrain(format!(
                "bin_ms must be positive, got {bin_ms}"
            )));
        }
        if data.len() != n_electrodes * n_bins {
            return Err(Error::InvalidTrain(format!(
                "expected {} entries, got {}",
                n_electrodes * n_bins,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|&v| v > 1) {
            return Err(Error::InvalidTrain(format!(
                "entry at bin {} electrode {} is {} (must be 0 or 1)",
                pos / n_electrodes,
                pos % n_electrodes,
                data[pos]
            )));
        }
        let geometry_synthesized = geometry.is_none();
        let geometry = geometry.unwrap_or_else(|| default_grid(n_electrodes));
        validate_geometry(&geometry, n_electrodes)?;
        let ids = ids.unwrap_or_else(|| default_ids(n_electrodes));
        validate_ids(&ids, n_electrodes)?;
        Ok(SpikeTrain {
            n_electrodes,
            n_bins,
            bin_ms,
            data,
            geometry,
            ids,
            geometry_synthesized,
        })
    }

    /// Build from a list of `(bin, electrode)` spike coordinates; duplicates
    /// are collapsed.
    pub fn from_spikes<I>(
        n_electrodes: usize,
        n_bins: usize,
        bin_ms: f64,
        spikes: I,
        geometry: Option<Vec<GridPos>>,
        ids: Option<Vec<String>>,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut data = vec![0u8; n_electrodes * n_bins];
        for (t, n) in spikes {
            if t >= n_bins || n >= n_electrodes {
                return Err(Error::OutOfRange(format!(
                    "spike ({t}, {n}) outside {n_bins} bins x {n_electrodes} electrodes"
                )));
            }
            data[t * n_electrodes + n] = 1;
        }
        Self::from_dense(n_electrodes, n_bins, bin_ms, data, geometry, ids)
    }

    pub fn n_electrodes(&self) -> usize {
        self.n_electrodes
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn bin_ms(&self) -> f64 {
        self.bin_ms
    }

    pub fn geometry(&self) -> &[GridPos] {
        &self.geometry
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// True when the geometry was synthesized rather than supplied.
    pub fn geometry_synthesized(&self) -> bool {
        self.geometry_synthesized
    }

    #[inline]
    pub fn get(&self, t: usize, n: usize) -> bool {
        self.data[t * self.n_electrodes + n] != 0
    }

    /// Firing values of all electrodes in bin `t`.
    #[inline]
    pub fn bin(&self, t: usize) -> &[u8] {
        &self.data[t * self.n_electrodes..(t + 1) * self.n_electrodes]
    }

    /// Firing values of electrode `n` over time.
    pub fn electrode(&self, n: usize) -> Vec<u8> {
        (0..self.n_bins)
            .map(|t| self.data[t * self.n_electrodes + n])
            .collect()
    }

    /// Bins in which electrode `n` fired, ascending.
    pub fn spike_bins(&self, n: usize) -> Vec<usize> {
        (0..self.n_bins).filter(|&t| self.get(t, n)).collect()
    }

    /// All spikes as `(bin, electrode)`, in bin-major order.
    pub fn spikes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n_e = self.n_electrodes;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(move |(i, _)| (i / n_e, i % n_e))
    }

    pub fn spike_count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn electrode_spike_count(&self, n: usize) -> usize {
        (0..self.n_bins).filter(|&t| self.get(t, n)).count()
    }

    /// Fraction of bins in which electrode `n` fired.
    pub fn firing_rate(&self, n: usize) -> f64 {
        self.electrode_spike_count(n) as f64 / self.n_bins as f64
    }

    /// Restrict to the given electrodes (in the given order), keeping their
    /// geometry and ids.
    pub fn subset(&self, electrodes: &[usize]) -> Result<SpikeTrain> {
        if let Some(&bad) = electrodes.iter().find(|&&e| e >= self.n_electrodes) {
            return Err(Error::OutOfRange(format!(
                "electrode {bad} in subset of a {}-electrode train",
                self.n_electrodes
            )));
        }
        let k = electrodes.len();
        let mut data = vec![0u8; k * self.n_bins];
        for t in 0..self.n_bins {
            let row = self.bin(t);
            for (j, &e) in electrodes.iter().enumerate() {
                data[t * k + j] = row[e];
            }
        }
        let mut sub = SpikeTrain::from_dense(
            k,
            self.n_bins,
            self.bin_ms,
            data,
            Some(electrodes.iter().map(|&e| self.geometry[e]).collect()),
            Some(electrodes.iter().map(|&e| self.ids[e].clone()).collect()),
        )?;
        sub.geometry_synthesized = self.geometry_synthesized;
        Ok(sub)
    }

    /// One event per spike, placed at the center of its bin.
    pub fn to_events(&self) -> Vec<(f64, usize)> {
        self.spikes()
            .map(|(t, n)| ((t as f64 + 0.5) * self.bin_ms, n))
            .collect()
    }

    /// Recording duration covered by the bins.
    pub fn duration_ms(&self) -> f64 {
        self.n_bins as f64 * self.bin_ms
    }
}

fn validate_geometry(geometry: &[GridPos], n_electrodes: usize) -> Result<()> {
    if geometry.len() != n_electrodes {
        return Err(Error::InvalidTrain(format!(
            "geometry has {} entries for {} electrodes",
            geometry.len(),
            n_electrodes
        )));
    }
    let mut seen = HashSet::with_capacity(geometry.len());
    for (i, pos) in geometry.iter().enumerate() {
        if !seen.insert(*pos) {
            return Err(Error::InvalidTrain(format!(
                "electrode {i} duplicates grid position ({}, {})",
                pos.row, pos.col
            )));
        }
    }
    Ok(())
}

fn validate_ids(ids: &[String], n_electrodes: usize) -> Result<()> {
    if ids.len() != n_electrodes {
        return Err(Error::InvalidTrain(format!(
            "{} ids for {} electrodes",
            ids.len(),
            n_electrodes
        )));
    }
    if let Some(bad) = ids
        .iter()
        .find(|id| id.is_empty() || id.chars().any(char::is_whitespace))
    {
        return Err(Error::InvalidTrain(format!(
            "electrode id {bad:?} must be non-empty and contain no whitespace"
        )));
    }
    Ok(())
}

/// Result of binning raw events.
#[derive(Debug, Clone)]
pub struct BinnedTrain {
    pub train: SpikeTrain,
    /// Events dropped because their electrode already fired in that bin.
    pub collapsed_events: usize,
}

/// Number of bins needed to cover `duration_ms`, tolerating floating-point
/// noise in the ratio (e.g. `0.3 / 0.1`).
fn bins_for_duration(duration_ms: f64, bin_ms: f64) -> usize {
    let ratio = duration_ms / bin_ms;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Bin raw `(time_ms, electrode)` events into a binary spike train.
///
/// Event `i` lands in bin `floor(time / bin_ms)`; repeated events of one
/// electrode in one bin become a single spike and are counted in
/// [`BinnedTrain::collapsed_events`]. The train has
/// `ceil(duration_ms / bin_ms)` bins and a synthesized geometry.
pub fn bin_spike_events(
    events: &[(f64, usize)],
    n_electrodes: usize,
    bin_ms: f64,
    duration_ms: f64,
) -> Result<BinnedTrain> {
    if !(bin_ms.is_finite() && bin_ms > 0.0) {
        return Err(Error::InvalidTrain(format!(
            "bin_ms must be positive, got {bin_ms}"
        )));
    }
    if !(duration_ms.is_finite() && duration_ms > 0.0) {
        return Err(Error::InvalidTrain(format!(
            "duration_ms must be positive, got {duration_ms}"
        )));
    }
    let n_bins = bins_for_duration(duration_ms, bin_ms);
    let mut data = vec![0u8; n_bins * n_electrodes];
    let mut collapsed = 0;
    for (index, &(time, electrode)) in events.iter().enumerate() {
        if electrode >= n_electrodes {
            return Err(Error::InvalidEvent {
                index,
                reason: format!("electrode {electrode} out of range for {n_electrodes} electrodes"),
            });
        }
        if !time.is_finite() || time < 0.0 {
            return Err(Error::InvalidEvent {
                index,
                reason: format!("time {time} ms is negative or not finite"),
            });
        }
        if time >= duration_ms {
            return Err(Error::InvalidEvent {
                index,
                reason: format!("time {time} ms is past the {duration_ms} ms recording"),
            });
        }
        let t = ((time / bin_ms).floor() as usize).min(n_bins - 1);
        let cell = &mut data[t * n_electrodes + electrode];
        if *cell == 1 {
            collapsed += 1;
        } else {
            *cell = 1;
        }
    }
    let train = SpikeTrain::from_dense(n_electrodes, n_bins, bin_ms, data, None, None)?;
    Ok(BinnedTrain {
        train,
        collapsed_events: collapsed,
    })
}

/// Serialize in `MEASPIKES` version 1 format. Spikes are written in
/// bin-major order, so equal trains produce identical bytes.
pub fn write_spike_train<W: Write>(train: &SpikeTrain, sink: W) -> Result<()> {
    let mut out = std::io::BufWriter::new(sink);
    writeln!(out, "{MAGIC} {FORMAT_VERSION}")?;
    writeln!(
        out,
        "{} {} {}",
        train.n_electrodes, train.n_bins, train.bin_ms
    )?;
    for (i, (pos, id)) in train.geometry.iter().zip(&train.ids).enumerate() {
        writeln!(out, "GEOM {i} {} {} {id}", pos.row, pos.col)?;
    }
    for (t, n) in train.spikes() {
        writeln!(out, "{t} {n}")?;
    }
    out.flush()?;
    Ok(())
}

/// Parse a `MEASPIKES` version 1 stream. Errors name the offending line.
pub fn read_spike_train<R: BufRead>(source: R) -> Result<SpikeTrain> {
    let mut lines = source
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| match l {
            Ok(s) => {
                let s = s.trim_start();
                !(s.is_empty() || s.starts_with('#'))
            }
            Err(_) => true,
        });

    let mut next_line = |what: &str| -> Result<Option<(usize, String)>> {
        match lines.next() {
            None => Ok(None),
            Some((no, Ok(s))) => Ok(Some((no, s))),
            Some((no, Err(e))) => Err(Error::parse(no, format!("reading {what}: {e}"))),
        }
    };

    let (no, magic) = next_line("header")?.ok_or_else(|| Error::parse(1, "empty input"))?;
    let mut parts = magic.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(Error::parse(
            no,
            format!("expected `{MAGIC} {FORMAT_VERSION}`"),
        ));
    }
    match parts.next().map(str::parse::<u32>) {
        Some(Ok(FORMAT_VERSION)) if parts.next().is_none() => {}
        _ => {
            return Err(Error::parse(
                no,
                format!("unsupported header {magic:?}, expected `{MAGIC} {FORMAT_VERSION}`"),
            ))
        }
    }

    let (no, dims) =
        next_line("dimensions")?.ok_or_else(|| Error::parse(no + 1, "missing dimension line"))?;
    let fields: Vec<&str> = dims.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(Error::parse(
            no,
            "expected `<n_electrodes> <n_bins> <bin_ms>`",
        ));
    }
    let n_electrodes: usize = parse_field(fields[0], no, "n_electrodes")?;
    let n_bins: usize = parse_field(fields[1], no, "n_bins")?;
    let bin_ms: f64 = parse_field(fields[2], no, "bin_ms")?;
    if n_electrodes == 0 || n_bins == 0 {
        return Err(Error::parse(no, "n_electrodes and n_bins must be positive"));
    }
    if !(bin_ms.is_finite() && bin_ms > 0.0) {
        return Err(Error::parse(
            no,
            format!("bin_ms must be positive, got {bin_ms}"),
        ));
    }

    let mut geometry: Vec<Option<GridPos>> = vec![None; n_electrodes];
    let mut ids: Vec<String> = vec![String::new(); n_electrodes];
    let mut positions = HashSet::with_capacity(n_electrodes);
    let mut last_no = no;
    for _ in 0..n_electrodes {
        let (no, line) =
            next_line("geometry")?.ok_or_else(|| Error::parse(last_no + 1, "missing GEOM line"))?;
        last_no = no;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 || f[0] != "GEOM" {
            return Err(Error::parse(no, "expected `GEOM <index> <row> <col> <id>`"));
        }
        let idx: usize = parse_field(f[1], no, "electrode index")?;
        let row: u32 = parse_field(f[2], no, "row")?;
        let col: u32 = parse_field(f[3], no, "col")?;
        if idx >= n_electrodes {
            return Err(Error::parse(
                no,
                format!("electrode index {idx} out of range for {n_electrodes} electrodes"),
            ));
        }
        if geometry[idx].is_some() {
            return Err(Error::parse(
                no,
                format!("duplicate GEOM entry for electrode {idx}"),
            ));
        }
        let pos = GridPos::new(row, col);
        if !positions.insert(pos) {
            return Err(Error::parse(
                no,
                format!("duplicate grid position ({row}, {col})"),
            ));
        }
        geometry[idx] = Some(pos);
        ids[idx] = f[4].to_string();
    }
    let geometry: Vec<GridPos> = geometry.into_iter().map(Option::unwrap).collect();

    let mut data = vec![0u8; n_electrodes * n_bins];
    while let Some((no, line)) = next_line("spikes")? {
        let mut f = line.split_whitespace();
        let (Some(t), Some(n), None) = (f.next(), f.next(), f.next()) else {
            return Err(Error::parse(no, "expected `<bin_index> <electrode_index>`"));
        };
        let t: usize = parse_field(t, no, "bin index")?;
        let n: usize = parse_field(n, no, "electrode index")?;
        if t >= n_bins {
            return Err(Error::parse(
                no,
                format!("bin {t} out of range for {n_bins} bins"),
            ));
        }
        if n >= n_electrodes {
            return Err(Error::parse(
                no,
                format!("electrode {n} out of range for {n_electrodes} electrodes"),
            ));
        }
        data[t * n_electrodes + n] = 1;
    }

    SpikeTrain::from_dense(
        n_electrodes,
        n_bins,
        bin_ms,
        data,
        Some(geometry),
        Some(ids),
    )
    .map_err(|e| Error::parse(last_no, e.to_string()))
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} {s:?}")))
}
