use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_data, MixtureModel};
use crate::dist::PreparedHth;
use crate::error::{Error, Result};
use crate::par;
use crate::specfun::mvn::MvnSpec;
use crate::specfun::quadrature::{integrate_log_scaled, QuadratureSpec};
use crate::trunc::{th_moments, ThParams};

/// Conditional expectations for one observation under one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expectations {
    /// `ln f_HTH(x)`.
    pub log_density: f64,
    /// `E[W | x]`.
    pub a: f64,
    /// `E[1/W | x]`.
    pub b: f64,
    /// `E[ln W | x]`.
    pub c: f64,
    /// `E[U/W | x]`.
    pub d: DVector<f64>,
    /// `E[UUᵀ/W | x]`.
    pub e: DMatrix<f64>,
}

impl Expectations {
    /// Integrates the joint density of `(X, W)` over `w` once, with
    /// multipliers `1, w, 1/w, ln w`, then takes the truncated moments of
    /// the skewing variable.
    pub fn compute(prep: &PreparedHth, x: &DVector<f64>, quad: &QuadratureSpec, mvn: &MvnSpec) -> Result<Self> {
        let (delta, r) = prep.distance_and_projection(x);
        let base = prep.posterior_w_base(delta);
        let (off, v) = integrate_log_scaled(
            |t| {
                let w = t.exp();
                let l = base.log_kernel_t(t) + prep.log_trunc_factor(w, &r);
                (l, [1.0, w, 1.0 / w, t])
            },
            base.log_window(40.0),
            quad,
        )?;
        let log_density = prep.log_joint_const() + off + v[0].ln();
        let (a, b, c) = (v[1] / v[0], v[2] / v[0], v[3] / v[0]);

        let om = prep.params.omega;
        let s = (1.0 + delta / om).sqrt();
        let th = ThParams::positive(r, &prep.delta * s, base.lambda - 1.0, om * s);
        let m = th_moments(&th, quad, mvn)?;
        Ok(Self { log_density, a, b, c, d: m.mean * b, e: m.second * b })
    }
}

/// E-step output for `n` observations and `G` components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EStepCache {
    /// n×G responsibilities.
    pub z: DMatrix<f64>,
    /// `expectations[g][i]`.
    pub expectations: Vec<Vec<Expectations>>,
    /// Observed log-likelihood at the parameters the step was run with.
    pub loglik: f64,
    pub anneal_d: f64,
}

impl EStepCache {
    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn a(&self, i: usize, g: usize) -> f64 {
        self.expectations[g][i].a
    }

    pub fn b(&self, i: usize, g: usize) -> f64 {
        self.expectations[g][i].b
    }

    pub fn c(&self, i: usize, g: usize) -> f64 {
        self.expectations[g][i].c
    }

    /// MAP labels in `1..=G`.
    pub fn labels(&self) -> Vec<usize> {
        (0..self.n())
            .map(|i| {
                let row = self.z.row(i);
                1 + (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap()
            })
            .collect()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Responsibilities `∝ (π_g f_g(x_i))^d` and all conditional expectations.
pub fn e_step(
    data: &DMatrix<f64>,
    model: &MixtureModel,
    anneal_d: f64,
    quad: &QuadratureSpec,
    mvn: &MvnSpec,
) -> Result<EStepCache> {
    check_data(data)?;
    if !(anneal_d > 0.0 && anneal_d <= 1.0) {
        return Err(Error::Config(format!("annealing power must lie in (0, 1], got {anneal_d}")));
    }
    if data.ncols() != model.p() {
        return Err(Error::Dimension(format!("data have {} columns, model has p = {}", data.ncols(), model.p())));
    }
    let preps = model.components.iter().map(|c| c.prepare(mvn)).collect::<Result<Vec<_>>>()?;
    let n = data.nrows();
    let g = model.g();
    let rows: Vec<Result<Vec<Expectations>>> = par::map_range(n, |i| {
        let x = data.row(i).transpose();
        preps.iter().map(|prep| Expectations::compute(prep, &x, quad, mvn)).collect()
    });
    let mut per_obs = Vec::with_capacity(n);
    for r in rows {
        per_obs.push(r?);
    }
    let ln_pi: Vec<f64> = model.weights.iter().map(|w| w.ln()).collect();
    let mut z = DMatrix::zeros(n, g);
    let mut loglik = 0.0;
    let mut joint = vec![0.0; g];
    for (i, obs) in per_obs.iter().enumerate() {
        for k in 0..g {
            joint[k] = ln_pi[k] + obs[k].log_density;
        }
        loglik += log_sum_exp(&joint);
        let tempered: Vec<f64> = joint.iter().map(|v| anneal_d * v).collect();
        let norm = log_sum_exp(&tempered);
        if !norm.is_finite() {
            return Err(Error::ZeroResponsibility(i));
        }
        for k in 0..g {
            z[(i, k)] = (tempered[k] - norm).exp();
        }
    }
    let mut expectations: Vec<Vec<Expectations>> = (0..g).map(|_| Vec::with_capacity(n)).collect();
    for obs in per_obs {
        for (k, e) in obs.into_iter().enumerate() {
            expectations[k].push(e);
        }
    }
    Ok(EStepCache { z, expectations, loglik, anneal_d })
}

/// `Σᵢ ln Σ_g π_g f_HTH(xᵢ | θ_g)`, with each density from its closed
/// form rather than from the E-step integral.
pub fn observed_loglik(data: &DMatrix<f64>, model: &MixtureModel, quad: &QuadratureSpec, mvn: &MvnSpec) -> Result<f64> {
    check_data(data)?;
    if data.ncols() != model.p() {
        return Err(Error::Dimension(format!("data have {} columns, model has p = {}", data.ncols(), model.p())));
    }
    let preps = model.components.iter().map(|c| c.prepare(mvn)).collect::<Result<Vec<_>>>()?;
    let rows: Vec<Result<f64>> = par::map_range(data.nrows(), |i| {
        let x = data.row(i).transpose();
        let terms = preps
            .iter()
            .zip(&model.weights)
            .map(|(c, w)| Ok(w.ln() + c.logpdf(&x, quad)?))
            .collect::<Result<Vec<f64>>>()?;
        Ok(log_sum_exp(&terms))
    });
    rows.into_iter().sum()
}
