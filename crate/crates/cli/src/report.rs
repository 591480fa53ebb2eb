//! JSON fit reports.

use hth_core::dist::HthParams;
use hth_core::em::FitResult;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Scaling;

/// One component's parameters with matrices as lists of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub index: f64,
    pub omega: f64,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(r: &[Vec<f64>]) -> DMatrix<f64> {
    let ncols = r.first().map_or(0, Vec::len);
    DMatrix::from_fn(r.len(), ncols, |i, j| r[i][j])
}

impl ComponentReport {
    pub fn scaled(c: &HthParams) -> Self {
        Self { mu: c.mu.iter().copied().collect(), sigma: rows(&c.sigma), lambda: rows(&c.lambda_mat), index: c.index, omega: c.omega }
    }

    pub fn original(c: &HthParams, scaling: &Scaling) -> Self {
        let (mu, sigma, lambda) = scaling.to_original(&c.mu, &c.sigma, &c.lambda_mat);
        Self { mu: mu.iter().copied().collect(), sigma: rows(&sigma), lambda: rows(&lambda), index: c.index, omega: c.omega }
    }

    pub fn to_params(&self) -> hth_core::Result<HthParams> {
        HthParams::new(
            nalgebra::DVector::from_column_slice(&self.mu),
            from_rows(&self.sigma),
            from_rows(&self.lambda),
            self.index,
            self.omega,
        )
    }
}

/// Everything written for one `(G, q)` fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub g: usize,
    pub q: usize,
    pub n: usize,
    pub columns: Vec<String>,
    pub scaled: bool,
    pub scaling: Scaling,
    pub weights: Vec<f64>,
    /// Parameters on the scale the model was fitted on.
    pub components_scaled: Vec<ComponentReport>,
    /// Parameters mapped back to the units of the input file.
    pub components_original: Vec<ComponentReport>,
    pub loglik: f64,
    pub bic: f64,
    pub converged: bool,
    pub n_iter: usize,
    pub start: usize,
    pub loglik_trace: Vec<f64>,
    pub anneal_trace: Vec<f64>,
    pub labels: Vec<usize>,
    pub ari: Option<f64>,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn new(fit: &FitResult, columns: &[String], scaling: Option<&Scaling>, ari: Option<f64>) -> Self {
        let p = fit.model.p();
        let identity = Scaling::identity(p);
        let sc = scaling.unwrap_or(&identity);
        Self {
            g: fit.model.g(),
            q: fit.model.q(),
            n: fit.labels.len(),
            columns: columns.to_vec(),
            scaled: scaling.is_some(),
            scaling: sc.clone(),
            weights: fit.model.weights.clone(),
            components_scaled: fit.model.components.iter().map(ComponentReport::scaled).collect(),
            components_original: fit.model.components.iter().map(|c| ComponentReport::original(c, sc)).collect(),
            loglik: fit.loglik,
            bic: fit.bic,
            converged: fit.converged,
            n_iter: fit.n_iter,
            start: fit.start,
            loglik_trace: fit.loglik_trace.clone(),
            anneal_trace: fit.anneal_trace.clone(),
            labels: fit.labels.clone(),
            ari,
            warnings: fit.warnings.clone(),
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}
