//! Vector dataset representation and file I/O.
//!
//! Datasets are immutable after construction; selection and quantization
//! work on index sets and never mutate point storage, so a dataset can be
//! read concurrently from many workers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GioError, Result};
use crate::rng::SeededRng;

/// On-disk layouts understood by [`load_dataset`] and [`save_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    /// One point per line, components separated by commas. No header.
    VectorsCsv,
    /// Tab-separated: first column is an id, middle columns are an opaque
    /// payload, final column is the vector as space-separated floats.
    TabularTsv,
}

impl FromStr for DataFormat {
    type Err = GioError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vectors-csv" => Ok(DataFormat::VectorsCsv),
            "tabular-tsv" => Ok(DataFormat::TabularTsv),
            other => Err(GioError::InvalidConfig(format!(
                "unknown format {other:?}; expected vectors-csv or tabular-tsv"
            ))),
        }
    }
}

/// An ordered, immutable collection of d-dimensional points with optional
/// per-point record ids and payloads. Components are stored as `f64`; the
/// estimators take logs of small distances and 32-bit storage drifts.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorDataset {
    data: Vec<f64>, // row-major, len * dim
    dim: usize,
    len: usize,
    ids: Option<Vec<String>>,
    payloads: Option<Vec<String>>,
}

impl VectorDataset {
    /// Build a dataset from row vectors. The dimension is taken from the
    /// first row; all rows must match it and every component must be finite.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        let len = rows.len();
        for (row_idx, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(GioError::DimMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            if row.iter().any(|c| !c.is_finite()) {
                return Err(GioError::NonFiniteComponent { row: row_idx });
            }
            data.extend_from_slice(&row);
        }
        Ok(Self {
            data,
            dim,
            len,
            ids: None,
            payloads: None,
        })
    }

    /// An empty dataset with a declared dimension.
    pub fn empty(dim: usize) -> Self {
        Self {
            data: Vec::new(),
            dim,
            len: 0,
            ids: None,
            payloads: None,
        }
    }

    /// Build from a flat row-major buffer. Components are not re-validated;
    /// callers are expected to pass data taken from existing datasets.
    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 && !data.is_empty() {
            return Err(GioError::InvalidConfig("dim 0 with nonempty data".into()));
        }
        if dim > 0 && data.len() % dim != 0 {
            return Err(GioError::DimMismatch {
                expected: dim,
                found: data.len() % dim,
            });
        }
        let len = if dim == 0 { 0 } else { data.len() / dim };
        Ok(Self {
            data,
            dim,
            len,
            ids: None,
            payloads: None,
        })
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.len {
            return Err(GioError::InvalidConfig(format!(
                "{} ids for {} points",
                ids.len(),
                self.len
            )));
        }
        self.ids = Some(ids);
        Ok(self)
    }

    pub fn with_payloads(mut self, payloads: Vec<String>) -> Result<Self> {
        if payloads.len() != self.len {
            return Err(GioError::InvalidConfig(format!(
                "{} payloads for {} points",
                payloads.len(),
                self.len
            )));
        }
        self.payloads = Some(payloads);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len).map(move |i| self.point(i))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    pub fn payloads(&self) -> Option<&[String]> {
        self.payloads.as_deref()
    }

    /// The record id of row `i`: the stored id if the source format carried
    /// one, otherwise the 0-based row index.
    pub fn id_of(&self, i: usize) -> String {
        match &self.ids {
            Some(ids) => ids[i].clone(),
            None => i.to_string(),
        }
    }

    /// Component-wise mean. Panics on an empty dataset.
    pub fn mean(&self) -> Vec<f64> {
        assert!(self.len > 0, "mean of empty dataset");
        let mut m = vec![0.0; self.dim];
        for p in self.points() {
            for (acc, c) in m.iter_mut().zip(p) {
                *acc += c;
            }
        }
        for acc in &mut m {
            *acc /= self.len as f64;
        }
        m
    }

    /// Copy of this dataset with one extra row appended. Ids and payloads
    /// are dropped; this exists for estimator evaluations of `D + {v}`.
    pub fn plus_row(&self, row: &[f64]) -> Result<Self> {
        let dim = if self.is_empty() && self.dim == 0 {
            row.len()
        } else {
            self.dim
        };
        if row.len() != dim {
            return Err(GioError::DimMismatch {
                expected: dim,
                found: row.len(),
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + dim);
        data.extend_from_slice(&self.data);
        data.extend_from_slice(row);
        Self::from_flat(data, dim)
    }

    /// New dataset holding the given rows (in the given order), carrying
    /// ids and payloads through.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len {
                return Err(GioError::ClusterIndexOutOfRange {
                    index: i,
                    k: self.len,
                });
            }
            data.extend_from_slice(self.point(i));
        }
        let pick = |src: &Option<Vec<String>>| {
            src.as_ref()
                .map(|v| indices.iter().map(|&i| v[i].clone()).collect())
        };
        Ok(Self {
            data,
            dim: self.dim,
            len: indices.len(),
            ids: pick(&self.ids),
            payloads: pick(&self.payloads),
        })
    }
}

/// Euclidean distance between two points of equal dimension.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Load a dataset from `path` under the given format. An empty file yields
/// an empty dataset; a malformed or dimension-inconsistent row is an error
/// naming the 1-based line.
pub fn load_dataset(path: &Path, format: DataFormat) -> Result<VectorDataset> {
    let text = fs::read_to_string(path).map_err(|source| GioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ids: Vec<String> = Vec::new();
    let mut payloads: Vec<String> = Vec::new();
    let mut dim: Option<usize> = None;

    for (line_no, line) in text.lines().enumerate() {
        let line_no = line_no + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row = match format {
            DataFormat::VectorsCsv => parse_components(path, line_no, line.split(','))?,
            DataFormat::TabularTsv => {
                let cols: Vec<&str> = line.split('\t').collect();
                if cols.len() < 2 {
                    return Err(GioError::ParseRow {
                        path: path.to_path_buf(),
                        line: line_no,
                        msg: "expected at least two tab-separated columns (id, vector)".into(),
                    });
                }
                ids.push(cols[0].to_string());
                payloads.push(cols[1..cols.len() - 1].join("\t"));
                parse_components(path, line_no, cols[cols.len() - 1].split_whitespace())?
            }
        };
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(GioError::RowDimMismatch {
                    path: path.to_path_buf(),
                    line: line_no,
                    expected: d,
                    found: row.len(),
                });
            }
            _ => {}
        }
        rows.push(row);
    }

    let ds = VectorDataset::from_rows(rows)?;
    match format {
        DataFormat::VectorsCsv => Ok(ds),
        DataFormat::TabularTsv => {
            if ds.is_empty() {
                Ok(ds)
            } else {
                ds.with_ids(ids)?.with_payloads(payloads)
            }
        }
    }
}

fn parse_components<'a>(
    path: &Path,
    line_no: usize,
    fields: impl Iterator<Item = &'a str>,
) -> Result<Vec<f64>> {
    let mut row = Vec::new();
    for field in fields {
        let field = field.trim();
        if field.is_empty() {
            continue;
        }
        let value: f64 = field.parse().map_err(|_| GioError::ParseRow {
            path: path.to_path_buf(),
            line: line_no,
            msg: format!("cannot parse {field:?} as a number"),
        })?;
        if !value.is_finite() {
            return Err(GioError::ParseRow {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("non-finite component {field:?}"),
            });
        }
        row.push(value);
    }
    if row.is_empty() {
        return Err(GioError::ParseRow {
            path: path.to_path_buf(),
            line: line_no,
            msg: "empty vector".into(),
        });
    }
    Ok(row)
}

/// Write a dataset to `path` under the given format. Floats are printed in
/// the shortest form that reparses to the identical value, so load - save -
/// load round-trips exactly.
pub fn save_dataset(ds: &VectorDataset, path: &Path, format: DataFormat) -> Result<()> {
    let mut out = String::new();
    for i in 0..ds.len() {
        match format {
            DataFormat::VectorsCsv => {
                push_joined(&mut out, ds.point(i), ",");
            }
            DataFormat::TabularTsv => {
                out.push_str(&ds.id_of(i));
                out.push('\t');
                if let Some(p) = ds.payloads() {
                    out.push_str(&p[i]);
                    out.push('\t');
                } else {
                    out.push('\t');
                }
                push_joined(&mut out, ds.point(i), " ");
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| GioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn push_joined(out: &mut String, comps: &[f64], sep: &str) {
    for (j, c) in comps.iter().enumerate() {
        if j > 0 {
            out.push_str(sep);
        }
        let _ = write!(out, "{c}");
    }
}

/// Project every row onto the unit sphere. Errors on a zero row.
pub fn normalize_rows(ds: &VectorDataset) -> Result<VectorDataset> {
    let mut data = Vec::with_capacity(ds.len() * ds.dim());
    for (i, p) in ds.points().enumerate() {
        let norm = p.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(GioError::ZeroVector { index: i });
        }
        data.extend(p.iter().map(|c| c / norm));
    }
    let mut out = VectorDataset::from_flat(data, ds.dim())?;
    out.ids = ds.ids.clone();
    out.payloads = ds.payloads.clone();
    Ok(out)
}

/// Split a dataset into `(chosen, rest)` where `chosen` holds
/// `round(fraction * len)` rows sampled without replacement. `chosen` is in
/// draw order, `rest` keeps the original order.
pub fn random_subset(
    ds: &VectorDataset,
    fraction: f64,
    rng: &mut SeededRng,
) -> Result<(VectorDataset, VectorDataset)> {
    let (chosen_idx, rest_idx) = random_subset_indices(ds.len(), fraction, rng)?;
    Ok((ds.select(&chosen_idx)?, ds.select(&rest_idx)?))
}

/// Index-level variant of [`random_subset`].
pub fn random_subset_indices(
    n: usize,
    fraction: f64,
    rng: &mut SeededRng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(GioError::InvalidConfig(format!(
            "fraction {fraction} outside [0, 1]"
        )));
    }
    let count = (fraction * n as f64).round() as usize;
    let chosen = rng.sample_indices(n, count.min(n));
    let mut in_chosen = vec![false; n];
    for &i in &chosen {
        in_chosen[i] = true;
    }
    let rest = (0..n).filter(|&i| !in_chosen[i]).collect();
    Ok((chosen, rest))
}
