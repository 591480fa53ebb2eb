use nalgebra::{DMatrix, DVector};

use super::{EStepCache, MixtureModel};
use crate::dist::HthParams;
use crate::error::{Error, Result};
use crate::specfun::bessel::{dln_k_darg, dln_k_dorder, ln_k};

pub(crate) const OMEGA_MIN: f64 = 0.01;
pub(crate) const OMEGA_MAX: f64 = 200.0;
pub(crate) const INDEX_MAX: f64 = 50.0;
const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MStepReport {
    pub warnings: Vec<String>,
}

/// `t(ω, λ) = -ln K_λ(ω) + (λ-1)c̄ - ω(ā+b̄)/2`, the part of the expected
/// complete-data log-likelihood that depends on `(ω, λ)`.
fn t_objective(omega: f64, index: f64, a_bar: f64, b_bar: f64, c_bar: f64) -> f64 {
    -ln_k(index, omega) + (index - 1.0) * c_bar - 0.5 * omega * (a_bar + b_bar)
}

/// Moves from `old` towards `cand` by step halving until `f` does not
/// decrease; `f` is concave so some step along an ascent direction works.
fn guarded(old: f64, cand: f64, f: impl Fn(f64) -> f64) -> f64 {
    let base = f(old);
    let mut step = cand - old;
    for _ in 0..40 {
        let x = old + step;
        if f(x) >= base {
            return x;
        }
        step *= 0.5;
    }
    old
}

fn update_omega(omega: f64, index: f64, a_bar: f64, b_bar: f64, c_bar: f64) -> f64 {
    let slope = |w: f64| -dln_k_darg(index, w) - 0.5 * (a_bar + b_bar);
    let h = 1e-5 * omega;
    let curv = (slope(omega + h) - slope(omega - h)) / (2.0 * h);
    let newton = omega - slope(omega) / curv;
    let cand = if curv < 0.0 && newton > OMEGA_MIN && newton < OMEGA_MAX {
        newton
    } else {
        // concave objective: bisect on the sign of the slope
        let (mut lo, mut hi) = (OMEGA_MIN, OMEGA_MAX);
        if slope(lo) <= 0.0 {
            lo
        } else if slope(hi) >= 0.0 {
            hi
        } else {
            for _ in 0..100 {
                let mid = (lo * hi).sqrt();
                if slope(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (lo * hi).sqrt()
        }
    };
    guarded(omega, cand, |w| t_objective(w, index, a_bar, b_bar, c_bar))
}

fn update_index(omega: f64, index: f64, a_bar: f64, b_bar: f64, c_bar: f64) -> f64 {
    let cand = (c_bar * index / dln_k_dorder(index, omega)).clamp(-INDEX_MAX, INDEX_MAX);
    if !cand.is_finite() {
        return index;
    }
    guarded(index, cand, |l| t_objective(omega, l, a_bar, b_bar, c_bar))
}

/// Conditional maximization of every component, in the order π, μ, Λ,
/// ω, λ, Σ, followed by canonical reordering.
pub fn m_step(data: &DMatrix<f64>, cache: &EStepCache, model: &MixtureModel) -> Result<(MixtureModel, MStepReport)> {
    let (n, p) = data.shape();
    if cache.n() != n || cache.z.ncols() != model.g() {
        return Err(Error::Dimension("E-step cache does not match data and model".into()));
    }
    let mut report = MStepReport::default();
    let mut weights = Vec::with_capacity(model.g());
    let mut components = Vec::with_capacity(model.g());
    for (g, comp) in model.components.iter().enumerate() {
        let ex = &cache.expectations[g];
        let q = comp.q();
        let z = cache.z.column(g);
        let n_g: f64 = z.sum();
        if !(n_g > 1e-10) {
            return Err(Error::Collapsed { component: g, reason: format!("total responsibility {n_g:.3e}") });
        }
        weights.push(n_g / n as f64);

        let mut sb = 0.0;
        let mut sbx = DVector::zeros(p);
        let mut sd = DVector::zeros(q);
        for i in 0..n {
            sb += z[i] * ex[i].b;
            sbx += data.row(i).transpose() * (z[i] * ex[i].b);
            sd += &ex[i].d * z[i];
        }
        let lambda_old = &comp.lambda_mat;
        let mu = (sbx - lambda_old * sd) / sb;

        let mut m1 = DMatrix::zeros(q, q);
        let mut m2 = DMatrix::zeros(q, p);
        let mut scatter = DMatrix::zeros(p, p);
        for i in 0..n {
            let r = data.row(i).transpose() - &mu;
            m1 += &ex[i].e * z[i];
            m2 += &ex[i].d * r.transpose() * z[i];
            scatter += &r * r.transpose() * (z[i] * ex[i].b);
        }
        let m1 = 0.5 * (&m1 + m1.transpose());
        let m1_inv = match m1.clone().cholesky() {
            Some(ch) => ch.inverse(),
            None => {
                report.warnings.push(format!("component {g}: M1 singular, ridge {RIDGE:e} added"));
                (&m1 + DMatrix::identity(q, q) * RIDGE)
                    .try_inverse()
                    .ok_or_else(|| Error::Collapsed { component: g, reason: "M1 not invertible".into() })?
            }
        };
        let lambda_mat = m2.transpose() * m1_inv;

        let (mut a_bar, mut b_bar, mut c_bar) = (0.0, 0.0, 0.0);
        for i in 0..n {
            a_bar += z[i] * ex[i].a;
            b_bar += z[i] * ex[i].b;
            c_bar += z[i] * ex[i].c;
        }
        a_bar /= n_g;
        b_bar /= n_g;
        c_bar /= n_g;
        let omega = update_omega(comp.omega, comp.index, a_bar, b_bar, c_bar);
        let index = update_index(omega, comp.index, a_bar, b_bar, c_bar);

        let cross = &lambda_mat * &m2;
        let sigma = (scatter + &lambda_mat * &m1 * lambda_mat.transpose() - cross.transpose() - cross) / n_g;
        let sigma = 0.5 * (&sigma + sigma.transpose());
        let params = HthParams { mu, sigma, lambda_mat, index, omega };
        params.validate().map_err(|e| Error::Collapsed { component: g, reason: e.to_string() })?;
        components.push(params);
    }
    let mut next = MixtureModel { weights, components };
    next.canonicalize();
    Ok((next, report))
}
