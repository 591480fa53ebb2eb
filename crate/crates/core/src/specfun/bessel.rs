//! Modified Bessel function of the third kind, `K_ν(x)`, for real order,
//! evaluated in log scale.
//!
//! The order is reduced to `μ ∈ [-1/2, 1/2]`; `K_μ` and `K_{μ+1}` come from
//! Temme's series for `x < 2` and Steed's continued fraction (CF2) above
//! that, both scaled by `eˣ`. Forward recurrence then runs on the ratio
//! `K_{ν+1}/K_ν`, accumulating logs, so neither large orders nor large
//! arguments overflow.

use std::f64::consts::PI;

use libm::lgamma as ln_gamma;

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[allow(clippy::excessive_precision)]
const G1_CHEB: [f64; 14] = [
    -1.14516408366268311786898152867,
    0.00636085311347084238122955495,
    0.00186245193007206848934643657,
    0.000152833085873453507081227824,
    0.000017017464011802038795324732,
    -6.4597502923347254354668326451e-07,
    -5.1819848432519380894104312968e-08,
    4.5189092894858183051123180797e-10,
    3.2433227371020873043666259180e-11,
    6.8309434024947522875432400828e-13,
    2.8353502755172101513119628130e-14,
    -7.9883905769323592875638087541e-16,
    -3.3726677300771949833341213457e-17,
    -3.6586334809210520744054437104e-20,
];

#[allow(clippy::excessive_precision)]
const G2_CHEB: [f64; 15] = [
    1.882645524949671835019616975350,
    -0.077490658396167518329547945212,
    -0.018256714847324929419579340950,
    0.0006338030209074895795923971731,
    0.0000762290543508729021194461175,
    -9.5501647561720443519853993526e-07,
    -8.8927268107886351912431512955e-08,
    -1.9521334772319613740511880132e-09,
    -9.4003052735885162111769579771e-11,
    4.6875133849532393179290879101e-12,
    2.2658535746925759582447545145e-13,
    -1.1725509698488015111878735251e-15,
    -7.0441338200245222530843155877e-17,
    -2.4377878310107693650659740228e-18,
    -7.5225243218253901727164675011e-20,
];

fn cheb_eval(c: &[f64], x: f64) -> f64 {
    // series on [-1, 1]
    let y2 = 2.0 * x;
    let mut d = 0.0;
    let mut dd = 0.0;
    for &cj in c[1..].iter().rev() {
        let tmp = d;
        d = y2 * d - dd + cj;
        dd = tmp;
    }
    x * d - dd + 0.5 * c[0]
}

/// Returns (1/Γ(1+ν), 1/Γ(1-ν), g1, g2) for |ν| ≤ 1/2.
fn temme_gamma(nu: f64) -> (f64, f64, f64, f64) {
    let x = 4.0 * nu.abs() - 1.0;
    let g1 = cheb_eval(&G1_CHEB, x);
    let g2 = cheb_eval(&G2_CHEB, x);
    let g_1mnu = 1.0 / (g2 + nu * g1);
    let g_1pnu = 1.0 / (g2 - nu * g1);
    (g_1pnu, g_1mnu, g1, g2)
}

/// Scaled `eˣK_μ(x)` and `eˣK_{μ+1}(x)` for `x < 2`, `|μ| ≤ 1/2`.
fn k_scaled_temme(mu: f64, x: f64) -> (f64, f64) {
    let half_x = 0.5 * x;
    let ln_half_x = half_x.ln();
    let half_x_nu = (mu * ln_half_x).exp();
    let pi_nu = PI * mu;
    let sigma = -mu * ln_half_x;
    let sinrat = if pi_nu.abs() < f64::EPSILON { 1.0 } else { pi_nu / pi_nu.sin() };
    let sinhrat = if sigma.abs() < f64::EPSILON { 1.0 } else { sigma.sinh() / sigma };
    let ex = x.exp();
    let (g_1pnu, g_1mnu, g1, g2) = temme_gamma(mu);

    let mut fk = sinrat * (sigma.cosh() * g1 - sinhrat * ln_half_x * g2);
    let mut pk = 0.5 / half_x_nu * g_1pnu;
    let mut qk = 0.5 * half_x_nu * g_1mnu;
    let mut ck = 1.0;
    let mut sum0 = fk;
    let mut sum1 = pk;
    for k in 1..15_000 {
        let k = k as f64;
        fk = (k * fk + pk + qk) / (k * k - mu * mu);
        ck *= half_x * half_x / k;
        pk /= k - mu;
        qk /= k + mu;
        let hk = -k * fk + pk;
        let del0 = ck * fk;
        sum0 += del0;
        sum1 += ck * hk;
        if del0.abs() < 0.5 * sum0.abs() * f64::EPSILON {
            break;
        }
    }
    (sum0 * ex, sum1 * 2.0 / x * ex)
}

/// Scaled `eˣK_μ(x)` and `eˣK_{μ+1}(x)` for `x ≥ 2` by Steed's CF2.
fn k_scaled_cf2(mu: f64, x: f64) -> (f64, f64) {
    let mut bi = 2.0 * (1.0 + x);
    let mut di = 1.0 / bi;
    let mut delhi = di;
    let mut hi = di;
    let mut qi = 0.0;
    let mut qip1 = 1.0;
    let mut ai = -(0.25 - mu * mu);
    let a1 = ai;
    let mut ci = -ai;
    let mut bqi = -ai;
    let mut s = 1.0 + bqi * delhi;
    for i in 2..10_000 {
        ai -= 2.0 * (i - 1) as f64;
        ci = -ai * ci / i as f64;
        let tmp = (qi - bi * qip1) / ai;
        qi = qip1;
        qip1 = tmp;
        bqi += ci * qip1;
        bi += 2.0;
        di = 1.0 / (bi + ai * di);
        delhi = (bi * di - 1.0) * delhi;
        hi += delhi;
        let dels = bqi * delhi;
        s += dels;
        if (dels / s).abs() < f64::EPSILON {
            break;
        }
    }
    hi *= -a1;
    let k_mu = (PI / (2.0 * x)).sqrt() / s;
    let k_mup1 = k_mu * (mu + x + 0.5 - hi) / x;
    (k_mu, k_mup1)
}

fn check(order: f64, arg: f64) -> Result<()> {
    if !order.is_finite() || !arg.is_finite() {
        return Err(Error::Domain(format!("non-finite Bessel input (order {order}, arg {arg})")));
    }
    if arg <= 0.0 {
        return Err(Error::Domain(format!("Bessel K requires a positive argument, got {arg}")));
    }
    Ok(())
}

/// `ln K_ν(x)` without input validation. Callers guarantee `x > 0`.
pub(crate) fn ln_k(order: f64, x: f64) -> f64 {
    let nu = order.abs();
    if x < 1e-150 {
        // leading small-argument behaviour
        return if nu > 0.0 {
            ln_gamma(nu) + (nu - 1.0) * std::f64::consts::LN_2 - nu * x.ln()
        } else {
            (-(0.5 * x).ln() - EULER_GAMMA).ln()
        };
    }
    let steps = (nu + 0.5).floor();
    let mu = nu - steps;
    let (k_mu, k_mup1) = if x < 2.0 { k_scaled_temme(mu, x) } else { k_scaled_cf2(mu, x) };
    let mut log_k = k_mu.ln();
    let mut ratio = k_mup1 / k_mu;
    for n in 0..steps as usize {
        log_k += ratio.ln();
        ratio = 2.0 * (mu + n as f64 + 1.0) / x + 1.0 / ratio;
    }
    log_k - x
}

/// `ln K_{ν+1}(x) - ln K_ν(x)` without validation; shares one recurrence.
pub(crate) fn ln_ratio(order: f64, x: f64) -> f64 {
    ln_k(order + 1.0, x) - ln_k(order, x)
}

/// Natural log of the modified Bessel function of the third kind.
pub fn log_bessel_k(order: f64, arg: f64) -> Result<f64> {
    check(order, arg)?;
    Ok(ln_k(order, arg))
}

/// `R_ν(x) = K_{ν+1}(x) / K_ν(x)`.
pub fn bessel_k_ratio(order: f64, arg: f64) -> Result<f64> {
    check(order, arg)?;
    Ok(ln_ratio(order, arg).exp())
}

/// Step used for the order derivative.
pub const ORDER_STEP: f64 = 1e-5;

pub(crate) fn dln_k_dorder(order: f64, x: f64) -> f64 {
    // odd in the order; evaluate on |ν| and restore the sign exactly
    let nu = order.abs();
    let d = (ln_k(nu + ORDER_STEP, x) - ln_k(nu - ORDER_STEP, x)) / (2.0 * ORDER_STEP);
    if order < 0.0 {
        -d
    } else {
        d
    }
}

/// `∂/∂ν ln K_ν(x)` by central difference with step [`ORDER_STEP`].
pub fn dlog_bessel_k_dorder(order: f64, arg: f64) -> Result<f64> {
    check(order, arg)?;
    Ok(dln_k_dorder(order, arg))
}

pub(crate) fn dln_k_darg(order: f64, x: f64) -> f64 {
    let base = ln_k(order, x);
    let below = (ln_k(order - 1.0, x) - base).exp();
    let above = (ln_k(order + 1.0, x) - base).exp();
    -0.5 * (below + above)
}

/// `K'_ν(x) / K_ν(x)` from `K'_ν = -(K_{ν-1} + K_{ν+1})/2`.
pub fn dlog_bessel_k_darg(order: f64, arg: f64) -> Result<f64> {
    check(order, arg)?;
    Ok(dln_k_darg(order, arg))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `K_ν(x) = ∫₀^∞ exp(-x cosh t) cosh(νt) dt`, by the trapezoid rule,
    /// which converges geometrically for this doubly-exponential integrand.
    fn k_integral(nu: f64, x: f64) -> f64 {
        let h = 1e-3;
        let mut sum = 0.5 * (-x).exp();
        let mut t: f64 = h;
        loop {
            let term = (-x * t.cosh()).exp() * (nu * t).cosh();
            sum += term;
            if t > 1.0 && term < 1e-300 {
                break;
            }
            t += h;
        }
        sum * h
    }

    #[test]
    fn half_order_closed_form() {
        let v = log_bessel_k(0.5, 2.0).unwrap();
        let exact = ((PI / 4.0).sqrt() * (-2.0f64).exp()).ln();
        assert!((v - exact).abs() < 1e-14, "{v} {exact}");
        assert!((v - -2.1208).abs() < 1e-4);
    }

    #[test]
    fn order_symmetry() {
        assert_eq!(log_bessel_k(-3.2, 1.7).unwrap(), log_bessel_k(3.2, 1.7).unwrap());
    }

    #[test]
    fn against_integral_oracle() {
        for &(nu, x) in &[(1.0, 1.0), (0.0, 0.3), (2.7, 0.05), (0.3, 5.0), (7.5, 12.0), (1.0, 1.999), (1.0, 2.0), (40.2, 3.0)] {
            let oracle = k_integral(nu, x).ln();
            let v = log_bessel_k(nu, x).unwrap();
            assert!((v - oracle).abs() < 1e-11 * oracle.abs().max(1.0), "nu={nu} x={x}: {v} vs {oracle}");
        }
    }

    #[test]
    fn ratio_examples() {
        assert!((bessel_k_ratio(0.5, 2.0).unwrap() - 1.5).abs() < 1e-14);
        assert!((bessel_k_ratio(-0.5, 3.7).unwrap() - 1.0).abs() < 1e-14);
        let oracle = k_integral(2.0, 1.0) / k_integral(1.0, 1.0);
        assert!((bessel_k_ratio(1.0, 1.0).unwrap() - oracle).abs() < 1e-11);
    }

    #[test]
    fn order_derivative() {
        assert_eq!(dlog_bessel_k_dorder(0.0, 2.0).unwrap(), 0.0);
        let h = 1e-6;
        let fd = (log_bessel_k(1.3 + h, 0.8).unwrap() - log_bessel_k(1.3 - h, 0.8).unwrap()) / (2.0 * h);
        assert!((dlog_bessel_k_dorder(1.3, 0.8).unwrap() - fd).abs() < 1e-6);
        assert!(dlog_bessel_k_dorder(2.0, 1.5).unwrap() > 0.0);
        assert_eq!(dlog_bessel_k_dorder(-1.7, 0.4).unwrap(), -dlog_bessel_k_dorder(1.7, 0.4).unwrap());
    }

    #[test]
    fn arg_derivative() {
        assert!((dlog_bessel_k_darg(0.5, 2.0).unwrap() + 1.25).abs() < 1e-14);
        let h = 1e-5;
        let fd = (log_bessel_k(1.0, 1.0 + h).unwrap() - log_bessel_k(1.0, 1.0 - h).unwrap()) / (2.0 * h);
        assert!((dlog_bessel_k_darg(1.0, 1.0).unwrap() - fd).abs() < 1e-6);
    }

    #[test]
    fn extreme_inputs_stay_finite() {
        for &(nu, x) in &[(500.0, 0.1), (500.0, 700.0), (0.0, 700.0), (-250.3, 1e-3), (0.2, 1e-200), (3.0, 1e-200)] {
            let v = log_bessel_k(nu, x).unwrap();
            assert!(v.is_finite(), "nu={nu} x={x}");
        }
        // large argument: K_ν(x) ~ sqrt(π/2x) e^{-x}
        let v = log_bessel_k(0.5, 700.0).unwrap();
        assert!((v - ((PI / 1400.0).sqrt().ln() - 700.0)).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(log_bessel_k(1.0, 0.0).is_err());
        assert!(log_bessel_k(1.0, -1.0).is_err());
        assert!(log_bessel_k(f64::NAN, 1.0).is_err());
        assert!(bessel_k_ratio(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn recurrence_grid() {
        let mut nu = -5.0;
        while nu <= 5.0 {
            for &x in &[0.1, 0.5, 1.0, 1.99, 2.0, 3.3, 10.0, 50.0] {
                let lhs = ln_k(nu + 1.0, x);
                let rhs_val = (ln_k(nu - 1.0, x) - lhs).exp() + 2.0 * nu / x * (ln_k(nu, x) - lhs).exp();
                assert!((rhs_val - 1.0).abs() < 1e-10, "nu={nu} x={x} rel={}", rhs_val - 1.0);
            }
            nu += 0.37;
        }
    }

    #[test]
    fn arg_derivative_bound() {
        for &nu in &[-3.0, -0.5, 0.0, 0.7, 2.0, 9.0] {
            for &x in &[0.05, 0.8, 2.5, 30.0] {
                let d = dlog_bessel_k_darg(nu, x).unwrap();
                assert!(d < -(1.0f64 + nu * nu / (x * x)).sqrt(), "nu={nu} x={x}");
            }
        }
    }
}
