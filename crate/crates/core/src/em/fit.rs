use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_data, e_step, kmeans_init, m_step, MixtureModel};
use crate::error::{Error, Result};
use crate::specfun::mvn::MvnSpec;
use crate::specfun::quadrature::QuadratureSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iter: usize,
    /// Stop when `|ℓ_t - ℓ_{t-1}| / (1 + |ℓ_t|)` falls below this at `d = 1`.
    pub loglik_rel_tol: f64,
    /// Annealing powers for the first iterations; `d = 1` afterwards.
    pub anneal_schedule: Vec<f64>,
    pub n_starts: usize,
    pub seed: u64,
    pub quad: QuadratureSpec,
    pub mvn: MvnSpec,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            loglik_rel_tol: 1e-6,
            anneal_schedule: (0..20).map(|k| 0.05 + 0.95 * k as f64 / 19.0).collect(),
            n_starts: 5,
            seed: 1,
            quad: QuadratureSpec::default(),
            mvn: MvnSpec::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || self.n_starts == 0 {
            return Err(Error::Config("max_iter and n_starts must be positive".into()));
        }
        if !(self.loglik_rel_tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.loglik_rel_tol)));
        }
        let s = &self.anneal_schedule;
        if s.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) || s.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("annealing schedule must be nondecreasing within (0, 1]".into()));
        }
        if s.last().is_some_and(|d| *d != 1.0) {
            return Err(Error::Config("annealing schedule must end at 1".into()));
        }
        self.quad.validate()?;
        self.mvn.validate()
    }

    fn power(&self, iter: usize) -> f64 {
        self.anneal_schedule.get(iter).copied().unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: MixtureModel,
    /// Observed log-likelihood at the start of every iteration.
    pub loglik_trace: Vec<f64>,
    /// Annealing power used in each iteration's E-step.
    pub anneal_trace: Vec<f64>,
    pub loglik: f64,
    pub bic: f64,
    /// MAP labels in `1..=G`.
    pub labels: Vec<usize>,
    pub converged: bool,
    pub n_iter: usize,
    /// Which start produced this result.
    pub start: usize,
    pub warnings: Vec<String>,
}

/// `(G - 1) + G[p + p(p+1)/2 + pq + 2]`.
pub fn count_free_params(g: usize, p: usize, q: usize) -> usize {
    (g - 1) + g * (p + p * (p + 1) / 2 + p * q + 2)
}

/// `2ℓ - ρ ln n`; larger is better.
pub fn bic(loglik: f64, rho: usize, n: usize) -> f64 {
    2.0 * loglik - rho as f64 * (n as f64).ln()
}

/// Runs the annealed ECM iterations from `init`.
pub fn fit_from(data: &DMatrix<f64>, init: MixtureModel, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    check_data(data)?;
    init.validate()?;
    let mut model = init;
    let mut trace = Vec::new();
    let mut powers = Vec::new();
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut n_iter = 0;
    let cache = loop {
        let d = config.power(n_iter);
        let cache = e_step(data, &model, d, &config.quad, &config.mvn)?;
        let l = cache.loglik;
        if let (Some(&prev), Some(&prev_d)) = (trace.last(), powers.last()) {
            if d == 1.0 && prev_d == 1.0 && (l - prev as f64).abs() / (1.0 + l.abs()) < config.loglik_rel_tol {
                converged = true;
            }
        }
        trace.push(l);
        powers.push(d);
        log::debug!("iter {n_iter}: d = {d:.3}, loglik = {l:.8}");
        if converged || n_iter == config.max_iter {
            break cache;
        }
        let (next, report) = m_step(data, &cache, &model)?;
        warnings.extend(report.warnings);
        model = next;
        n_iter += 1;
    };
    let cache = if cache.anneal_d == 1.0 { cache } else { e_step(data, &model, 1.0, &config.quad, &config.mvn)? };
    let rho = count_free_params(model.g(), model.p(), model.q());
    Ok(FitResult {
        labels: cache.labels(),
        loglik: cache.loglik,
        bic: bic(cache.loglik, rho, data.nrows()),
        model,
        loglik_trace: trace,
        anneal_trace: powers,
        converged,
        n_iter,
        start: 0,
        warnings,
    })
}

fn start_seed(seed: u64, start: usize) -> u64 {
    seed.wrapping_add((start as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Multi-start ECM; keeps the run with the largest final log-likelihood.
pub fn ecm_fit(data: &DMatrix<f64>, g: usize, q: usize, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    check_data(data)?;
    let mut best: Option<FitResult> = None;
    let mut causes = Vec::new();
    for s in 0..config.n_starts {
        let run = kmeans_init(data, g, q, start_seed(config.seed, s)).and_then(|init| fit_from(data, init, config));
        match run {
            Ok(mut r) => {
                r.start = s;
                log::info!("G={g} q={q} start {s}: loglik {:.6}, {} iterations", r.loglik, r.n_iter);
                if best.as_ref().is_none_or(|b| r.loglik > b.loglik) {
                    best = Some(r);
                }
            }
            Err(e) => {
                log::warn!("G={g} q={q} start {s} failed: {e}");
                causes.push(format!("start {s}: {e}"));
            }
        }
    }
    best.ok_or(Error::AllStartsFailed { n: config.n_starts, causes: causes.join("; ") })
}
