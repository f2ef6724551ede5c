//! Network and matrix CSV files.
//!
//! A network is stored as `adjacency.csv`, `weights.csv` and `bias.csv` in one
//! directory. Each file starts with the header `# mea-netinfer network v1, N=<N>`;
//! matrices have one row per source electrode and one column per target,
//! the bias file one value per line. Floats are written in shortest
//! round-trip form, so reading a written network reproduces it exactly.
//! Masked matrix entries are written as `NA`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::NetworkSample;
use crate::error::{Error, Result};

pub const ADJACENCY_FILE: &str = "adjacency.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const BIAS_FILE: &str = "bias.csv";

fn header(n: usize) -> String {
    format!("# mea-netinfer network v1, N={n}")
}

/// Write an `n x n` matrix; `mask[(m, n)] == false` entries become `NA`.
pub fn write_matrix<W: Write>(
    sink: W,
    matrix: &DMatrix<f64>,
    mask: Option<&DMatrix<bool>>,
) -> Result<()> {
    let mut out = BufWriter::new(sink);
    writeln!(out, "{}", header(matrix.nrows()))?;
    {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(&mut out);
        for m in 0..matrix.nrows() {
            let row: Vec<String> = (0..matrix.ncols())
                .map(|n| match mask {
                    Some(mask) if !mask[(m, n)] => "NA".to_string(),
                    _ => matrix[(m, n)].to_string(),
                })
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

/// Read a square matrix written by [`write_matrix`]. `NA` entries read as NaN.
pub fn read_matrix<R: Read>(source: R) -> Result<DMatrix<f64>> {
    let rows = read_rows(source)?;
    let n = rows.len();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::parse(
                i + 2,
                format!("expected {n} columns, found {}", row.len()),
            ));
        }
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

fn read_rows<R: Read>(source: R) -> Result<Vec<Vec<f64>>> {
    let mut text = String::new();
    BufReader::new(source).read_to_string(&mut text)?;
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| Error::parse(1, "empty file"))?;
    let declared = first
        .strip_prefix("# mea-netinfer network v1, N=")
        .and_then(|s| s.trim().parse::<usize>().ok())
        .ok_or_else(|| Error::parse(1, "missing `# mea-netinfer network v1, N=<N>` header"))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        let row = rec
            .iter()
            .map(|f| {
                if f == "NA" {
                    Ok(f64::NAN)
                } else {
                    f.parse::<f64>()
                        .map_err(|_| Error::parse(line, format!("invalid number {f:?}")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.len() != declared {
        return Err(Error::parse(
            1,
            format!(
                "header declares N={declared} but {} rows follow",
                rows.len()
            ),
        ));
    }
    Ok(rows)
}

/// Write the three network files into `dir` (created if needed).
pub fn write_network(dir: &Path, net: &NetworkSample) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_matrix(
        File::create(dir.join(ADJACENCY_FILE))?,
        &net.adjacency_f64(),
        None,
    )?;
    write_matrix(File::create(dir.join(WEIGHTS_FILE))?, &net.weights, None)?;
    write_vector(File::create(dir.join(BIAS_FILE))?, &net.bias)
}

/// Write a per-electrode vector, one value per line.
pub fn write_vector<W: Write>(sink: W, values: &DVector<f64>) -> Result<()> {
    let mut out = BufWriter::new(sink);
    writeln!(out, "{}", header(values.len()))?;
    for v in values.iter() {
        writeln!(out, "{v}")?;
    }
    out.flush()?;
    Ok(())
}

/// Read a vector written by [`write_vector`].
pub fn read_vector<R: Read>(source: R) -> Result<DVector<f64>> {
    let rows = read_rows(source)?;
    if let Some(i) = rows.iter().position(|r| r.len() != 1) {
        return Err(Error::parse(i + 2, "expected one value per line"));
    }
    Ok(DVector::from_iterator(
        rows.len(),
        rows.iter().map(|r| r[0]),
    ))
}

/// Read a network written by [`write_network`].
pub fn read_network(dir: &Path) -> Result<NetworkSample> {
    let open = |name: &str| {
        let path = dir.join(name);
        File::open(&path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))
    };
    let adjacency = read_matrix(open(ADJACENCY_FILE)?)?;
    let weights = read_matrix(open(WEIGHTS_FILE)?)?;
    let bias = read_vector(open(BIAS_FILE)?)?;
    if adjacency.iter().any(|&a| a != 0.0 && a != 1.0) {
        return Err(Error::InvalidTrain(
            "adjacency entries must be 0 or 1".into(),
        ));
    }
    NetworkSample::new(adjacency.map(|a| a as u8), weights, bias)
}
