//! Fits over a `(G, q)` grid with per-fit reports and a summary table.

use hth_core::em::{ecm_fit, FitConfig};
use hth_core::metrics::ari_labels;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::PathBuf;

use crate::contour::{contour_grid, quasiconcavity_check, write_report};
use crate::data::{load_csv, standardize, Dataset, Scaling};
use crate::error::{io_err, CliError, CliResult};
use crate::report::FitReport;

/// Grid bounds and resolution for contour export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourRequest {
    /// `None` pads the data range by 10% on each side.
    pub bounds: Option<[[f64; 2]; 2]>,
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    /// Empty selects every column other than the label column.
    pub columns: Vec<String>,
    pub label_column: Option<String>,
    pub scale: bool,
    pub g_values: Vec<usize>,
    pub q_values: Vec<usize>,
    pub fit: FitConfig,
    pub out: PathBuf,
    pub contour: Option<ContourRequest>,
    /// Number of density levels for the convexity check, if requested.
    pub check_convexity: Option<usize>,
}

impl RunConfig {
    pub fn validate(&self, p: usize) -> CliResult<()> {
        if self.g_values.is_empty() || self.g_values.contains(&0) {
            return Err(CliError::Config("every G must be at least 1".into()));
        }
        if self.q_values.is_empty() || self.q_values.iter().any(|&q| q == 0 || q > p) {
            return Err(CliError::Config(format!("every q must lie in 1..={p}")));
        }
        self.fit.validate()?;
        Ok(())
    }
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub g: usize,
    pub q: usize,
    pub loglik: Option<f64>,
    pub bic: Option<f64>,
    pub converged: Option<bool>,
    pub n_iter: Option<usize>,
    pub ari: Option<f64>,
    pub error: Option<String>,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub rows: Vec<SummaryRow>,
    /// Reports of the successful fits, in grid order.
    pub reports: Vec<FitReport>,
}

impl RunSummary {
    pub fn best(&self) -> Option<&FitReport> {
        let row = self.rows.iter().find(|r| r.best)?;
        self.reports.iter().find(|f| f.g == row.g && f.q == row.q)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn table(&self) -> String {
        let fmt = |v: Option<f64>, prec: usize| v.map_or("-".to_owned(), |x| format!("{x:.prec$}"));
        let mut s = format!("{:>3} {:>3} {:>14} {:>14} {:>9} {:>6} {:>7}  \n", "G", "q", "loglik", "BIC", "converged", "iters", "ARI");
        for r in &self.rows {
            let mark = if r.best { "*" } else { "" };
            s += &format!(
                "{:>3} {:>3} {:>14} {:>14} {:>9} {:>6} {:>7} {mark}",
                r.g,
                r.q,
                fmt(r.loglik, 4),
                fmt(r.bic, 4),
                r.converged.map_or("-".into(), |c| c.to_string()),
                r.n_iter.map_or("-".into(), |c| c.to_string()),
                fmt(r.ari, 4),
            );
            if let Some(e) = &r.error {
                s += &format!(" failed: {e}");
            }
            s.push('\n');
        }
        s
    }
}

fn padded_bounds(d: &Dataset) -> [[f64; 2]; 2] {
    let mut b = [[0.0; 2]; 2];
    for (j, bj) in b.iter_mut().enumerate() {
        let col = d.data.column(j);
        let (lo, hi) = (col.min(), col.max());
        let pad = 0.1 * (hi - lo).max(1e-9);
        *bj = [lo - pad, hi + pad];
    }
    b
}

/// Loads the data, fits every `(G, q)` pair, and writes
/// `fit_G{g}_q{q}.json` per fit plus `summary.txt` into `config.out`.
/// A failed pair is recorded in the summary and does not stop the others.
pub fn run_fit(config: &RunConfig) -> CliResult<RunSummary> {
    let raw = load_csv(&config.input, &config.columns, config.label_column.as_deref())?;
    config.validate(raw.p())?;
    let (data, scaling): (Dataset, Option<Scaling>) = if config.scale {
        let (d, s) = standardize(&raw)?;
        (d, Some(s))
    } else {
        (raw.clone(), None)
    };
    std::fs::create_dir_all(&config.out).map_err(io_err(&config.out))?;
    let truth = data.label_codes();
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &g in &config.g_values {
        for &q in &config.q_values {
            log::info!("fitting G = {g}, q = {q}");
            match ecm_fit(&data.data, g, q, &config.fit) {
                Ok(fit) => {
                    let ari = truth.as_ref().map(|t| ari_labels(&fit.labels, t)).transpose()?;
                    let report = FitReport::new(&fit, &data.columns, scaling.as_ref(), ari);
                    let path = config.out.join(format!("fit_G{g}_q{q}.json"));
                    std::fs::write(&path, report.to_json()?).map_err(io_err(&path))?;
                    rows.push(SummaryRow {
                        g,
                        q,
                        loglik: Some(fit.loglik),
                        bic: Some(fit.bic),
                        converged: Some(fit.converged),
                        n_iter: Some(fit.n_iter),
                        ari,
                        error: None,
                        best: false,
                    });
                    reports.push(report);
                }
                Err(e) => {
                    log::warn!("G = {g}, q = {q} failed: {e}");
                    rows.push(SummaryRow { g, q, loglik: None, bic: None, converged: None, n_iter: None, ari: None, error: Some(e.to_string()), best: false });
                }
            }
        }
    }
    if let Some(k) = (0..rows.len()).filter(|&k| rows[k].bic.is_some()).max_by(|&a, &b| rows[a].bic.unwrap().total_cmp(&rows[b].bic.unwrap())) {
        rows[k].best = true;
    }
    let summary = RunSummary { rows, reports };
    let path = config.out.join("summary.txt");
    let mut f = std::fs::File::create(&path).map_err(io_err(&path))?;
    f.write_all(summary.table().as_bytes()).map_err(io_err(&path))?;

    if let Some(req) = &config.contour {
        if raw.p() != 2 {
            return Err(CliError::Config(format!("contours need two columns, got {}", raw.p())));
        }
        let bounds = req.bounds.unwrap_or_else(|| padded_bounds(&raw));
        for report in &summary.reports {
            for (k, comp) in report.components_original.iter().enumerate() {
                let grid = contour_grid(&comp.to_params()?, bounds, req.resolution)?;
                let stem = format!("contour_G{}_q{}_c{}", report.g, report.q, k + 1);
                grid.write_csv(&config.out.join(format!("{stem}.csv")))?;
                if let Some(levels) = config.check_convexity {
                    let check = quasiconcavity_check(&grid, levels);
                    log::info!("{stem}: {} convexity violations", check.total_violations());
                    write_report(&check, &config.out.join(format!("{stem}_convexity.json")))?;
                }
            }
        }
    }
    Ok(summary)
}
