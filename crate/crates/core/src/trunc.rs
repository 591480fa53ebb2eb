//! Moments and orthant probabilities of the symmetric hyperbolic law
//! truncated to `[a₁, ∞) × ⋯ × [a_q, ∞)`.
//!
//! Every quantity is a one-dimensional integral over the GIG mixing
//! variable of a normal orthant probability. The `H_{q-1}` and `H_{q-2}`
//! factors are taken under the normal law conditional on the boundary
//! coordinates, so they stay exact for correlated scale matrices.
//! Results are formed from log-scale pieces so that deep truncation
//! (orthant mass far below `f64::MIN_POSITIVE`) still yields moments.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::gig::GigParams;
use crate::dist::hyperbolic::{log_density_from_distance, log_mixed_rect};
use crate::dist::{check_symmetric, SpdFactor};
use crate::error::{Error, Result};
use crate::specfun::bessel::ln_k;
use crate::specfun::mvn::{MvnSpec, NormalRectangle};
use crate::specfun::quadrature::QuadratureSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThParams {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub index: f64,
    pub omega: f64,
    /// Truncation points; `-∞` leaves a coordinate untruncated.
    pub lower: DVector<f64>,
}

impl ThParams {
    /// Truncation to the positive orthant.
    pub fn positive(mu: DVector<f64>, sigma: DMatrix<f64>, index: f64, omega: f64) -> Self {
        let q = mu.len();
        Self { mu, sigma, index, omega, lower: DVector::zeros(q) }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.dim();
        if q == 0 || self.sigma.nrows() != q || self.lower.len() != q {
            return Err(Error::Dimension(format!(
                "truncated law: mu has length {q}, sigma is {}x{}, lower has length {}",
                self.sigma.nrows(),
                self.sigma.ncols(),
                self.lower.len()
            )));
        }
        if self.mu.iter().any(|v| !v.is_finite()) || self.lower.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Domain("truncated law: bad location or truncation point".into()));
        }
        GigParams::symmetric(self.omega, self.index)?;
        check_symmetric(&self.sigma, "truncated-law scale")?;
        SpdFactor::new(&self.sigma, "truncated-law scale")?;
        Ok(())
    }
}

/// All moments at once, sharing the orthant probability and boundary terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThMoments {
    /// `ln c`, log of the untruncated mass of the region.
    pub log_prob: f64,
    pub mean: DVector<f64>,
    pub second: DMatrix<f64>,
}

/// Log of the upper orthant mass `P(Y ≥ a)` for `Y = m + √W Z`,
/// `Z ~ N(0, S)`, `W ~ gig`.
fn log_upper_orthant(
    m: &DVector<f64>,
    s: &DMatrix<f64>,
    a: &DVector<f64>,
    gig: &GigParams,
    quad: &QuadratureSpec,
    mvn: &MvnSpec,
) -> Result<f64> {
    if m.is_empty() {
        return Ok(0.0);
    }
    let lower: Vec<f64> = a.iter().zip(m.iter()).map(|(a, m)| a - m).collect();
    let upper = vec![f64::INFINITY; lower.len()];
    let rect = NormalRectangle::new(s, mvn)?;
    log_mixed_rect(&rect, &lower, &upper, gig, quad)
}

fn select(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

fn select2(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Boundary term for the coordinates `fixed` (one or two of them):
/// `ln[ h_k(a_I | μ_I, Σ_II, λ + shift) · H_{q-k}(a_J | conditional) ]`.
fn log_boundary_term(p: &ThParams, fixed: &[usize], shift: f64, quad: &QuadratureSpec, mvn: &MvnSpec) -> Result<f64> {
    let q = p.dim();
    let a_i = select(&p.lower, fixed);
    if a_i.iter().any(|v| *v == f64::NEG_INFINITY) {
        return Ok(f64::NEG_INFINITY);
    }
    let rest: Vec<usize> = (0..q).filter(|j| !fixed.contains(j)).collect();
    let s_ii = select2(&p.sigma, fixed, fixed);
    let f_ii = SpdFactor::new(&s_ii, "boundary block")?;
    let d_i = &a_i - select(&p.mu, fixed);
    let gamma = f_ii.quad_form(&d_i);
    let index = p.index + shift;
    let ln_h = log_density_from_distance(gamma, fixed.len(), f_ii.log_det, index, p.omega);
    if rest.is_empty() {
        return Ok(ln_h);
    }
    let s_ji = select2(&p.sigma, &rest, fixed);
    let coef = &s_ji * &f_ii.inverse;
    let m = select(&p.mu, &rest) + &coef * &d_i;
    let s = select2(&p.sigma, &rest, &rest) - &coef * s_ji.transpose();
    let s = 0.5 * (&s + s.transpose());
    // W given the boundary point: GIG(ω, ω + γ, λ + shift - k/2)
    let gig = GigParams { psi: p.omega, chi: p.omega + gamma, lambda: index - 0.5 * fixed.len() as f64 };
    Ok(ln_h + log_upper_orthant(&m, &s, &select(&p.lower, &rest), &gig, quad, mvn)?)
}

fn log_orthant(p: &ThParams, index: f64, quad: &QuadratureSpec, mvn: &MvnSpec) -> Result<f64> {
    let gig = GigParams { psi: p.omega, chi: p.omega, lambda: index };
    log_upper_orthant(&p.mu, &p.sigma, &p.lower, &gig, quad, mvn)
}

/// `c = P(Y ≥ a)` for the untruncated symmetric hyperbolic `Y`.
pub fn th_orthant_prob(p: &ThParams, quad: &QuadratureSpec, mvn: &MvnSpec) -> Result<f64> {
    p.validate()?;
    Ok(log_orthant(p, p.index, quad, mvn)?.exp())
}

fn log_ratio_k(index: f64, omega: f64, step: f64) -> f64 {
    ln_k(index + step, omega) - ln_k(index, omega)
}

/// `ε/c` together with `ln c`.
fn scaled_eps(p: &ThParams, quad: &QuadratureSpec, mvn: &MvnSpec) -> Result<(f64, DVector<f64>)> {
    let log_c = log_orthant(p, p.index, quad, mvn)?;
    if !log_c.is_finite() {
        return Err(Error::DegenerateTruncation(log_c.exp()));
    }
    let ln_r = log_ratio_k(p.index, p.omega, 1.0);
    let mut eps = DVector::zeros(p.dim());
    for r in 0..p.dim() {
        eps[r] = (ln_r + log_boundary_term(p, &[r], 1.0, quad, mvn)? - log_c).exp();
    }
    Ok((log_c, eps))
}

/// `E(Y) = μ + Σ ε / c`.
pub fn th_mean(p: &ThParams, quad: &QuadratureSpec, mvn: &MvnSpec) -> Result<DVector<f64>> {
    p.validate()?;
    if p.dim() == 1 {
        let (m1, _, _) = univariate(p.mu[0], p.sigma[(0, 0)], p.index, p.omega, p.lower[0], f64::INFINITY, quad)?;
        return Ok(DVector::from_element(1, m1));
    }
    let (_, eps) = scaled_eps(p, quad, mvn)?;
    Ok(&p.mu + &p.sigma * eps)
}

/// `E(YYᵀ)`.
pub fn th_second_moment(p: &ThParams, quad: &QuadratureSpec, mvn: &MvnSpec) -> Result<DMatrix<f64>> {
    Ok(th_moments(p, quad, mvn)?.second)
}

/// Orthant probability, mean and second moment together.
pub fn th_moments(p: &ThParams, quad: &QuadratureSpec, mvn: &MvnSpec) -> Result<ThMoments> {
    p.validate()?;
    let q = p.dim();
    if q == 1 {
        let (mu, s2, a) = (p.mu[0], p.sigma[(0, 0)], p.lower[0]);
        let (m1, m2, log_prob) = univariate(mu, s2, p.index, p.omega, a, f64::INFINITY, quad)?;
        return Ok(ThMoments {
            log_prob,
            mean: DVector::from_element(1, m1),
            second: DMatrix::from_element(1, 1, m2),
        });
    }
    let (log_c, eps) = scaled_eps(p, quad, mvn)?;
    let mean = &p.mu + &p.sigma * &eps;
    let ln_r = log_ratio_k(p.index, p.omega, 1.0);
    let k_over_c = (ln_r + log_orthant(p, p.index + 1.0, quad, mvn)? - log_c).exp();
    let ln_r2 = log_ratio_k(p.index, p.omega, 2.0);
    let mut h = DMatrix::zeros(q, q);
    for r in 0..q {
        for s in (r + 1)..q {
            let v = (ln_r2 + log_boundary_term(p, &[r, s], 2.0, quad, mvn)? - log_c).exp();
            h[(r, s)] = v;
            h[(s, r)] = v;
        }
    }
    let sh = &p.sigma * &h;
    let mut d = DMatrix::zeros(q, q);
    for r in 0..q {
        let boundary = if eps[r] == 0.0 { 0.0 } else { (p.lower[r] - p.mu[r]) * eps[r] };
        d[(r, r)] = (boundary - sh[(r, r)]) / p.sigma[(r, r)];
    }
    let mu_m = &p.mu * mean.transpose();
    let mut second = &mu_m + mu_m.transpose() - &p.mu * p.mu.transpose()
        + &p.sigma * k_over_c
        + &p.sigma * (h + d) * &p.sigma;
    second = 0.5 * (&second + second.transpose());
    Ok(ThMoments { log_prob: log_c, mean, second })
}

/// First and second moments of the univariate law truncated to `[l1, l2]`.
pub fn th_univariate_moments(
    mu: f64,
    sigma2: f64,
    index: f64,
    omega: f64,
    l1: f64,
    l2: f64,
    quad: &QuadratureSpec,
) -> Result<(f64, f64)> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() || !mu.is_finite() {
        return Err(Error::Domain(format!("univariate truncated law needs finite mu and sigma2 > 0, got {mu}, {sigma2}")));
    }
    if !(l1 < l2) {
        return Err(Error::Domain(format!("truncation interval [{l1}, {l2}] is empty")));
    }
    GigParams::symmetric(omega, index)?;
    let (m1, m2, _) = univariate(mu, sigma2, index, omega, l1, l2, quad)?;
    Ok((m1, m2))
}

/// `(E Y, E Y², ln P(l1 ≤ Y ≤ l2))`.
fn univariate(
    mu: f64,
    sigma2: f64,
    index: f64,
    omega: f64,
    l1: f64,
    l2: f64,
    quad: &QuadratureSpec,
) -> Result<(f64, f64, f64)> {
    let rect = NormalRectangle::new(&DMatrix::from_element(1, 1, sigma2), &MvnSpec::default())?;
    let mass = |lam: f64| {
        let gig = GigParams { psi: omega, chi: omega, lambda: lam };
        log_mixed_rect(&rect, &[l1 - mu], &[l2 - mu], &gig, quad)
    };
    let log_mass = mass(index)?;
    if !log_mass.is_finite() {
        return Err(Error::DegenerateTruncation(log_mass.exp()));
    }
    let ln_r = log_ratio_k(index, omega, 1.0);
    let log_sd2 = sigma2.ln();
    // h₁(l | λ+1) scaled by σ²R/ΔH_λ; zero at infinite ends
    let boundary = |l: f64| {
        if l.is_infinite() {
            0.0
        } else {
            let ln_h = log_density_from_distance((l - mu).powi(2) / sigma2, 1, log_sd2, index + 1.0, omega);
            (log_sd2 + ln_r + ln_h - log_mass).exp()
        }
    };
    let (b1, b2) = (boundary(l1), boundary(l2));
    let m1 = mu + b1 - b2;
    let shifted = (log_sd2 + ln_r + mass(index + 1.0)? - log_mass).exp();
    let end = |l: f64, b: f64| if b == 0.0 { 0.0 } else { (l + mu) * b };
    let m2 = mu * mu + shifted + end(l1, b1) - end(l2, b2);
    Ok((m1, m2, log_mass))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn untruncated_limits() {
        let quad = QuadratureSpec::default();
        let r = ln_k(1.3, 2.0);
        let r = (ln_k(2.3, 2.0) - r).exp();
        let (m1, m2) = th_univariate_moments(0.4, 2.0, 1.3, 2.0, f64::NEG_INFINITY, f64::INFINITY, &quad).unwrap();
        assert!((m1 - 0.4).abs() < 1e-14);
        assert!((m2 - (0.16 + 2.0 * r)).abs() < 1e-9);
    }

    #[test]
    fn half_line_mean_matches_general_path() {
        let quad = QuadratureSpec::default();
        let mvn = MvnSpec::default();
        let p = ThParams::positive(DVector::zeros(1), DMatrix::identity(1, 1), 1.0, 2.0);
        let m = th_mean(&p, &quad, &mvn).unwrap();
        let (m1, _) = th_univariate_moments(0.0, 1.0, 1.0, 2.0, 0.0, f64::INFINITY, &quad).unwrap();
        assert_eq!(m[0], m1);
        assert!((th_orthant_prob(&p, &quad, &mvn).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_interval_rejected() {
        let quad = QuadratureSpec::default();
        assert!(th_univariate_moments(0.0, 1.0, 1.0, 1.0, 2.0, 2.0, &quad).is_err());
    }
}
