//! Multivariate normal rectangle probabilities.
//!
//! Dimension 1 uses Φ directly and dimension 2 uses Genz's bivariate
//! algorithm. Dimension 3 integrates the bivariate routine against the
//! density of one conditioning coordinate. Higher dimensions use a
//! randomized-lattice separation-of-variables rule with Genz–Bretz
//! variable prioritization. The lattice rule is also exposed for every
//! dimension so that the deterministic paths can be cross-checked.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::normal::{log_norm_cdf, LN_SQRT_2PI, norm_cdf, norm_interval, norm_inv_cdf, norm_pdf, norm_sf};
use super::quadrature::{gl_rule, integrate_vec_best};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvnSpec {
    pub sample_budget: usize,
    pub error_target: f64,
    pub seed: u64,
}

impl Default for MvnSpec {
    fn default() -> Self {
        Self { sample_budget: 10_000, error_target: 1e-6, seed: 0x5eed_0f_cdf }
    }
}

impl MvnSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sample_budget < 100 {
            return Err(Error::Config("sample_budget must be at least 100".into()));
        }
        if !(self.error_target > 0.0) {
            return Err(Error::Config("error_target must be positive".into()));
        }
        Ok(())
    }
}

/// `P(X > h, Y > k)` for a standard bivariate normal with correlation `r`
/// (Genz, "Numerical computation of rectangular bivariate and trivariate
/// normal and t probabilities").
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return norm_sf(k);
    }
    if k == f64::NEG_INFINITY {
        return norm_sf(h);
    }
    let abs_r = r.abs();
    let (nodes, weights) = if abs_r < 0.3 {
        gl_rule(6)
    } else if abs_r < 0.75 {
        gl_rule(12)
    } else {
        gl_rule(20)
    };
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if abs_r < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = r.asin();
        for (x, w) in nodes.iter().zip(weights) {
            let sn = (0.5 * asr * (x + 1.0)).sin();
            bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        // the full rule covers both halves of Genz's symmetric sum
        bvn = bvn * asr / (4.0 * PI) + norm_sf(h) * norm_sf(k);
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if abs_r < 1.0 {
            let as_ = (1.0 - r) * (1.0 + r);
            let mut a = as_.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            bvn = a
                * (-0.5 * (bs / as_ + hk)).exp()
                * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
            if hk > -160.0 {
                let b = bs.sqrt();
                bvn -= (-0.5 * hk).exp()
                    * (2.0 * PI).sqrt()
                    * norm_cdf(-b / a)
                    * b
                    * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
            }
            a *= 0.5;
            for (x, w) in nodes.iter().zip(weights) {
                let xs = (a * (x + 1.0)).powi(2);
                let rs = (1.0 - xs).sqrt();
                let asr = -0.5 * (bs / xs + hk);
                if asr > -100.0 {
                    bvn += a
                        * w
                        * asr.exp()
                        * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs - (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
            bvn = -bvn / (2.0 * PI);
        }
        if r > 0.0 {
            bvn += norm_sf(h.max(k));
        } else {
            bvn = -bvn;
            if k > h {
                if h < 0.0 {
                    bvn += norm_cdf(k) - norm_cdf(h);
                } else {
                    bvn += norm_sf(h) - norm_sf(k);
                }
            }
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// Standard bivariate rectangle by inclusion–exclusion on upper orthants.
fn bvn_rectangle(l1: f64, u1: f64, l2: f64, u2: f64, r: f64) -> f64 {
    if l1 >= u1 || l2 >= u2 {
        return 0.0;
    }
    let mut p = bvn_upper(l1, l2, r);
    if u1 < f64::INFINITY {
        p -= bvn_upper(u1, l2, r);
    }
    if u2 < f64::INFINITY {
        p -= bvn_upper(l1, u2, r);
    }
    if u1 < f64::INFINITY && u2 < f64::INFINITY {
        p += bvn_upper(u1, u2, r);
    }
    p.clamp(0.0, 1.0)
}

#[derive(Debug, Clone)]
enum Method {
    Univariate,
    Bivariate { rho: f64 },
    Trivariate { order: [usize; 3], beta: [f64; 2], cond_sd: [f64; 2], cond_rho: f64 },
    Lattice { cov: DMatrix<f64> },
}

/// A centered normal law prepared for repeated rectangle queries.
#[derive(Debug, Clone)]
pub struct NormalRectangle {
    sd: Vec<f64>,
    method: Method,
    spec: MvnSpec,
}

impl NormalRectangle {
    pub fn new(cov: &DMatrix<f64>, spec: &MvnSpec) -> Result<Self> {
        Self::build(cov, spec, false)
    }

    /// Forces the lattice rule regardless of dimension.
    pub fn new_lattice(cov: &DMatrix<f64>, spec: &MvnSpec) -> Result<Self> {
        Self::build(cov, spec, true)
    }

    fn build(cov: &DMatrix<f64>, spec: &MvnSpec, force_lattice: bool) -> Result<Self> {
        let q = cov.nrows();
        if q == 0 || cov.ncols() != q {
            return Err(Error::Dimension(format!("covariance must be square and non-empty, got {}x{}", cov.nrows(), cov.ncols())));
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("covariance has non-finite entries".into()));
        }
        if cov.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("normal covariance".into()));
        }
        let sd: Vec<f64> = (0..q).map(|i| cov[(i, i)].sqrt()).collect();
        let corr = |i: usize, j: usize| cov[(i, j)] / (sd[i] * sd[j]);
        let method = if force_lattice {
            Method::Lattice { cov: cov.clone() }
        } else {
            match q {
                1 => Method::Univariate,
                2 => Method::Bivariate { rho: corr(0, 1) },
                3 => {
                    // condition on the coordinate least correlated with the others
                    let pivot = (0..3)
                        .min_by(|&a, &b| {
                            let ma = (0..3).filter(|&j| j != a).map(|j| corr(a, j).abs()).fold(0.0, f64::max);
                            let mb = (0..3).filter(|&j| j != b).map(|j| corr(b, j).abs()).fold(0.0, f64::max);
                            ma.partial_cmp(&mb).unwrap()
                        })
                        .unwrap();
                    let rest: Vec<usize> = (0..3).filter(|&j| j != pivot).collect();
                    let (i, j) = (rest[0], rest[1]);
                    let (ri, rj) = (corr(pivot, i), corr(pivot, j));
                    let si = (1.0 - ri * ri).sqrt();
                    let sj = (1.0 - rj * rj).sqrt();
                    let cond_rho = ((corr(i, j) - ri * rj) / (si * sj)).clamp(-1.0, 1.0);
                    Method::Trivariate { order: [pivot, i, j], beta: [ri, rj], cond_sd: [si, sj], cond_rho }
                }
                _ => Method::Lattice { cov: cov.clone() },
            }
        };
        Ok(Self { sd, method, spec: *spec })
    }

    pub fn dim(&self) -> usize {
        self.sd.len()
    }

    /// `P(lower ≤ X ≤ upper)` for `X ~ N(0, cov)`.
    pub fn prob(&self, lower: &[f64], upper: &[f64]) -> f64 {
        self.prob_with_error(lower, upper).0
    }

    /// Probability and an error estimate (zero for the deterministic paths).
    pub fn prob_with_error(&self, lower: &[f64], upper: &[f64]) -> (f64, f64) {
        let q = self.dim();
        debug_assert_eq!(lower.len(), q);
        debug_assert_eq!(upper.len(), q);
        if lower.iter().zip(upper).any(|(l, u)| l >= u) {
            return (0.0, 0.0);
        }
        match &self.method {
            Method::Univariate => (norm_interval(lower[0] / self.sd[0], upper[0] / self.sd[0]), 0.0),
            Method::Bivariate { rho } => (
                bvn_rectangle(
                    lower[0] / self.sd[0],
                    upper[0] / self.sd[0],
                    lower[1] / self.sd[1],
                    upper[1] / self.sd[1],
                    *rho,
                ),
                0.0,
            ),
            Method::Trivariate { order, beta, cond_sd, cond_rho } => {
                let z = |k: usize, v: f64| v / self.sd[order[k]];
                let lo = z(0, lower[order[0]]).max(-10.0);
                let hi = z(0, upper[order[0]]).min(10.0);
                if lo >= hi {
                    return (0.0, 0.0);
                }
                let (l1, u1) = (z(1, lower[order[1]]), z(1, upper[order[1]]));
                let (l2, u2) = (z(2, lower[order[2]]), z(2, upper[order[2]]));
                let out = integrate_vec_best(
                    |t| {
                        let m1 = beta[0] * t;
                        let m2 = beta[1] * t;
                        [norm_pdf(t)
                            * bvn_rectangle(
                                (l1 - m1) / cond_sd[0],
                                (u1 - m1) / cond_sd[0],
                                (l2 - m2) / cond_sd[1],
                                (u2 - m2) / cond_sd[1],
                                *cond_rho,
                            )]
                    },
                    lo,
                    hi,
                    1e-12,
                    64,
                );
                (out.value[0].clamp(0.0, 1.0), 0.0)
            }
            Method::Lattice { cov } => lattice_sov(lower, upper, cov, &self.spec),
        }
    }

    /// `ln P(lower ≤ X ≤ upper)`, accurate in the far tail for one-sided
    /// univariate queries.
    pub fn log_prob(&self, lower: &[f64], upper: &[f64]) -> f64 {
        if let Method::Univariate = self.method {
            let (l, u) = (lower[0] / self.sd[0], upper[0] / self.sd[0]);
            if l == f64::NEG_INFINITY {
                return log_norm_cdf(u);
            }
            if u == f64::INFINITY {
                return log_norm_cdf(-l);
            }
        }
        let p = self.prob(lower, upper);
        if p > LOG_TAIL_SWITCH {
            return p.ln();
        }
        if let Method::Bivariate { rho } = self.method {
            // one-sided in each coordinate: reflect to a lower orthant
            let mut sign = [1.0; 2];
            let mut b = [0.0; 2];
            for k in 0..2 {
                if lower[k] == f64::NEG_INFINITY {
                    b[k] = upper[k] / self.sd[k];
                } else if upper[k] == f64::INFINITY {
                    b[k] = -lower[k] / self.sd[k];
                    sign[k] = -1.0;
                } else {
                    return p.ln();
                }
            }
            return log_bvn_lower(b[0], b[1], rho * sign[0] * sign[1]).unwrap_or(p.ln());
        }
        p.ln()
    }

    /// `P(X ≤ point)`.
    pub fn cdf(&self, point: &[f64]) -> f64 {
        let lower = vec![f64::NEG_INFINITY; point.len()];
        self.prob(&lower, point)
    }
}

const LOG_TAIL_SWITCH: f64 = 1e-6;

/// `ln P(X ≤ a, Y ≤ b)` for a standard bivariate normal, keeping relative
/// accuracy deep in the lower tail.
///
/// Writes the probability as `∫₀^∞ φ(a-u) Φ((b-ρa+ρu)/s) du`. The log
/// integrand is concave with curvature at least one, so its mode is found
/// by Newton's method and a fixed Gauss–Legendre rule over the window
/// where it is within `LOG_TAIL_DROP` nats of the peak suffices.
fn log_bvn_lower(a: f64, b: f64, rho: f64) -> Result<f64> {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    if a == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if !a.is_finite() || b.is_nan() {
        return Err(Error::Domain("non-finite bivariate tail bound".into()));
    }
    let s = (1.0 - rho * rho).sqrt();
    let k = rho / s;
    let z0 = (b - rho * a) / s;
    let g = |u: f64| -0.5 * (a - u) * (a - u) + log_norm_cdf(z0 + k * u);
    let mills = |z: f64| (-0.5 * z * z - LN_SQRT_2PI - log_norm_cdf(z)).exp();
    let dg = |u: f64| (a - u) + k * mills(z0 + k * u);
    let mut mode = 0.0;
    if dg(0.0) > 0.0 {
        let mut lo = 0.0;
        let mut hi = 1.0;
        while dg(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            // Newton on the concave objective, bracketed by bisection
            let m = mills(z0 + k * mid);
            let z = z0 + k * mid;
            let d2 = -1.0 - k * k * m * (z + m);
            let newton = mid - dg(mid) / d2;
            let next = if newton > lo && newton < hi { newton } else { mid };
            if dg(next) > 0.0 {
                lo = next;
            } else {
                hi = next;
            }
            if hi - lo < 1e-12 * (1.0 + hi) {
                break;
            }
        }
        mode = 0.5 * (lo + hi);
    }
    let peak = g(mode);
    let reach = (2.0 * LOG_TAIL_DROP).sqrt();
    let edge = |limit: f64| {
        let (mut inside, mut outside) = (mode, limit);
        if peak - g(outside) <= LOG_TAIL_DROP {
            return outside;
        }
        for _ in 0..30 {
            let mid = 0.5 * (inside + outside);
            if peak - g(mid) > LOG_TAIL_DROP {
                outside = mid;
            } else {
                inside = mid;
            }
        }
        outside
    };
    let lo = edge((mode - reach).max(0.0));
    let hi = edge(mode + reach);
    let (nodes, weights) = gl_rule(20);
    let mut total = 0.0;
    let panels = 3;
    let h = (hi - lo) / panels as f64;
    for p in 0..panels {
        let c = lo + h * (p as f64 + 0.5);
        for (x, w) in nodes.iter().zip(weights) {
            total += w * (g(c + 0.5 * h * x) - peak).exp();
        }
    }
    Ok(peak - LN_SQRT_2PI + (0.5 * h * total).ln())
}

const LOG_TAIL_DROP: f64 = 40.0;

fn first_primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut c = 2u64;
    while out.len() < n {
        if (2..c).take_while(|d| d * d <= c).all(|d| c % d != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}

const LATTICE_SHIFTS: usize = 10;

/// Randomized Richtmyer-lattice separation of variables (Genz 1992) with
/// Genz–Bretz prioritization. Returns the estimate and three standard
/// errors across the random shifts.
fn lattice_sov(lower: &[f64], upper: &[f64], cov: &DMatrix<f64>, spec: &MvnSpec) -> (f64, f64) {
    let q = cov.nrows();
    let mut a = lower.to_vec();
    let mut b = upper.to_vec();
    let mut c = cov.clone();
    let mut l = DMatrix::<f64>::zeros(q, q);
    let mut y = vec![0.0; q];
    for i in 0..q {
        // pick the remaining coordinate with the smallest conditional mass
        let mut best = i;
        let mut best_p = f64::INFINITY;
        for j in i..q {
            let s: f64 = (0..i).map(|k| l[(j, k)] * y[k]).sum();
            let var = c[(j, j)] - (0..i).map(|k| l[(j, k)].powi(2)).sum::<f64>();
            let den = var.max(1e-300).sqrt();
            let p = norm_interval((a[j] - s) / den, (b[j] - s) / den);
            if p < best_p {
                best_p = p;
                best = j;
            }
        }
        if best != i {
            a.swap(i, best);
            b.swap(i, best);
            c.swap_rows(i, best);
            c.swap_columns(i, best);
            l.swap_rows(i, best);
        }
        let diag = (c[(i, i)] - (0..i).map(|k| l[(i, k)].powi(2)).sum::<f64>()).max(1e-300).sqrt();
        l[(i, i)] = diag;
        for m in (i + 1)..q {
            let s: f64 = (0..i).map(|k| l[(m, k)] * l[(i, k)]).sum();
            l[(m, i)] = (c[(m, i)] - s) / diag;
        }
        let s: f64 = (0..i).map(|k| l[(i, k)] * y[k]).sum();
        let (ta, tb) = ((a[i] - s) / diag, (b[i] - s) / diag);
        let p = norm_interval(ta, tb);
        y[i] = if p > 1e-300 {
            let pa = if ta.is_finite() { norm_pdf(ta) } else { 0.0 };
            let pb = if tb.is_finite() { norm_pdf(tb) } else { 0.0 };
            (pa - pb) / p
        } else if ta.is_finite() {
            ta
        } else {
            tb
        };
    }

    let dims = q.saturating_sub(1).max(1);
    let alpha: Vec<f64> = first_primes(dims).into_iter().map(|p| (p as f64).sqrt().fract()).collect();
    let per_shift = (spec.sample_budget / LATTICE_SHIFTS).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut estimates = [0.0; LATTICE_SHIFTS];
    let mut yy = vec![0.0; q];
    for est in estimates.iter_mut() {
        let shift: Vec<f64> = (0..dims).map(|_| rng.random::<f64>()).collect();
        let mut total = 0.0;
        for n in 1..=per_shift {
            let mut width = norm_interval(a[0] / l[(0, 0)], b[0] / l[(0, 0)]);
            let mut lo_cdf = norm_cdf(a[0] / l[(0, 0)]);
            let mut f = width;
            for i in 1..q {
                if f == 0.0 {
                    break;
                }
                let u = (n as f64 * alpha[i - 1] + shift[i - 1]).fract();
                let u = (2.0 * u - 1.0).abs();
                yy[i - 1] = norm_inv_cdf(lo_cdf + u * width);
                let s: f64 = (0..i).map(|k| l[(i, k)] * yy[k]).sum();
                let (ta, tb) = ((a[i] - s) / l[(i, i)], (b[i] - s) / l[(i, i)]);
                width = norm_interval(ta, tb);
                lo_cdf = norm_cdf(ta);
                f *= width;
            }
            total += f;
        }
        *est = total / per_shift as f64;
    }
    let mean = estimates.iter().sum::<f64>() / LATTICE_SHIFTS as f64;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / ((LATTICE_SHIFTS - 1) * LATTICE_SHIFTS) as f64;
    (mean.clamp(0.0, 1.0), 3.0 * var.sqrt())
}

/// Rectangle probability `P(lower ≤ X ≤ upper)` for `X ~ N(mean, cov)`.
pub fn mvn_rectangle_prob(
    lower: &[f64],
    upper: &[f64],
    mean: &[f64],
    cov: &DMatrix<f64>,
    spec: &MvnSpec,
) -> Result<f64> {
    let (lo, hi) = centered_bounds(lower, upper, mean, cov)?;
    Ok(NormalRectangle::new(cov, spec)?.prob(&lo, &hi))
}

/// Same as [`mvn_rectangle_prob`] but always through the lattice rule;
/// returns `(estimate, 3·standard error)`.
pub fn mvn_rectangle_prob_lattice(
    lower: &[f64],
    upper: &[f64],
    mean: &[f64],
    cov: &DMatrix<f64>,
    spec: &MvnSpec,
) -> Result<(f64, f64)> {
    spec.validate()?;
    let (lo, hi) = centered_bounds(lower, upper, mean, cov)?;
    Ok(NormalRectangle::new_lattice(cov, spec)?.prob_with_error(&lo, &hi))
}

fn centered_bounds(lower: &[f64], upper: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let q = mean.len();
    if lower.len() != q || upper.len() != q || cov.nrows() != q || cov.ncols() != q {
        return Err(Error::Dimension(format!(
            "lower {}, upper {}, mean {}, cov {}x{}",
            lower.len(),
            upper.len(),
            q,
            cov.nrows(),
            cov.ncols()
        )));
    }
    if lower.iter().chain(upper).any(|v| v.is_nan()) || mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("rectangle bounds and mean must not be NaN".into()));
    }
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        return Err(Error::Domain("lower bound exceeds upper bound".into()));
    }
    let lo = lower.iter().zip(mean).map(|(l, m)| l - m).collect();
    let hi = upper.iter().zip(mean).map(|(u, m)| u - m).collect();
    Ok((lo, hi))
}
