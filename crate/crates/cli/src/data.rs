//! CSV ingestion and per-column standardization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{io_err, CliError, CliResult};

/// Numeric observations with their column names and optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub data: DMatrix<f64>,
    /// Raw values of the label column, if one was requested.
    pub labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    /// Label strings mapped to `1, 2, …` in order of first appearance.
    pub fn label_codes(&self) -> Option<Vec<usize>> {
        let labels = self.labels.as_ref()?;
        let mut seen: Vec<&str> = Vec::new();
        Some(
            labels
                .iter()
                .map(|l| match seen.iter().position(|s| *s == l) {
                    Some(k) => k + 1,
                    None => {
                        seen.push(l);
                        seen.len()
                    }
                })
                .collect(),
        )
    }
}

/// Reads a headed CSV. With `columns` empty, every column except the label
/// column is used.
pub fn load_csv(path: &Path, columns: &[String], label_column: Option<&str>) -> CliResult<Dataset> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| CliError::MissingColumn {
            name: name.to_owned(),
            available: headers.join(", "),
        })
    };
    let label_idx = label_column.map(find).transpose()?;
    let selected: Vec<usize> = if columns.is_empty() {
        (0..headers.len()).filter(|k| Some(*k) != label_idx).collect()
    } else {
        columns.iter().map(|c| find(c)).collect::<CliResult<_>>()?
    };
    if selected.is_empty() {
        return Err(CliError::EmptySelection);
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut bad = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        // header is line 1
        let line = k + 2;
        for &c in &selected {
            match record.get(c).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite()) {
                Some(v) => values.push(v),
                None => bad.push(format!("row {line} column `{}`", headers[c])),
            }
        }
        if let Some(l) = label_idx {
            labels.push(record.get(l).unwrap_or_default().to_owned());
        }
    }
    if !bad.is_empty() {
        return Err(CliError::BadCells(bad));
    }
    let n = values.len() / selected.len();
    Ok(Dataset {
        columns: selected.iter().map(|&c| headers[c].clone()).collect(),
        data: DMatrix::from_row_slice(n, selected.len(), &values),
        labels: label_idx.map(|_| labels),
    })
}

/// Per-column location and scale removed by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Scaling {
    pub fn identity(p: usize) -> Self {
        Self { mean: vec![0.0; p], sd: vec![1.0; p] }
    }

    /// Maps parameters fitted on standardized data back to original units:
    /// `μ ↦ m + Sμ`, `Σ ↦ SΣS`, `Λ ↦ SΛ`, with `S = diag(sd)`.
    pub fn to_original(&self, mu: &DVector<f64>, sigma: &DMatrix<f64>, lambda: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let s = DVector::from_column_slice(&self.sd);
        let m = DVector::from_column_slice(&self.mean);
        let mu = m + mu.component_mul(&s);
        let sigma = DMatrix::from_fn(sigma.nrows(), sigma.ncols(), |i, j| sigma[(i, j)] * s[i] * s[j]);
        let lambda = DMatrix::from_fn(lambda.nrows(), lambda.ncols(), |i, j| lambda[(i, j)] * s[i]);
        (mu, sigma, lambda)
    }
}

/// Centres each column and divides by its sample standard deviation.
pub fn standardize(d: &Dataset) -> CliResult<(Dataset, Scaling)> {
    let n = d.n();
    if n < 2 {
        return Err(CliError::Config(format!("need at least two rows to standardize, got {n}")));
    }
    let mut data = d.data.clone();
    let mut scaling = Scaling { mean: Vec::with_capacity(d.p()), sd: Vec::with_capacity(d.p()) };
    for (j, name) in d.columns.iter().enumerate() {
        let mut col = data.column_mut(j);
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / (n - 1) as f64).sqrt();
        if !(sd > 0.0) || sd <= 1e-12 * mean.abs() {
            return Err(CliError::ZeroVariance(name.clone()));
        }
        col /= sd;
        scaling.mean.push(mean);
        scaling.sd.push(sd);
    }
    Ok((Dataset { columns: d.columns.clone(), data, labels: d.labels.clone() }, scaling))
}
