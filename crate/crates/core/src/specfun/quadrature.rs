//! Adaptive Gauss–Kronrod integration, vector-valued so that several
//! moments can share one set of integrand evaluations, plus a log-scale
//! wrapper for integrals over a positive mixing variable.

use std::collections::BinaryHeap;
use std::cmp::Ordering;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Integrate over `t = ln w`.
    LogSubstitution,
    /// Integrate over `w` directly on the window found in log space.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub relative_tolerance: f64,
    pub max_subdivisions: usize,
    pub transform: Transform,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            relative_tolerance: 1e-8,
            max_subdivisions: 200,
            transform: Transform::LogSubstitution,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.relative_tolerance > 0.0) {
            return Err(Error::Config("relative_tolerance must be positive".into()));
        }
        if self.max_subdivisions < 1 {
            return Err(Error::Config("max_subdivisions must be at least 1".into()));
        }
        Ok(())
    }
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077958109831074,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

#[derive(Clone, Copy)]
struct Segment<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    abs: [f64; N],
    err: [f64; N],
    // largest err/abs ratio over components, used for heap ordering
    key: f64,
}

impl<const N: usize> PartialEq for Segment<N> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl<const N: usize> Eq for Segment<N> {}
impl<const N: usize> PartialOrd for Segment<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Segment<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .partial_cmp(&other.key)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.a.partial_cmp(&self.a).unwrap_or(Ordering::Equal))
    }
}

fn gk21<const N: usize, F>(f: &F, a: f64, b: f64, scale: &[f64; N]) -> Segment<N>
where
    F: Fn(f64) -> [f64; N],
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = [0.0; N];
    let mut gauss = [0.0; N];
    let mut abs = [0.0; N];
    let mut samples = [[0.0; N]; 21];
    samples[20] = fc;
    for k in 0..N {
        kron[k] = fc[k] * WGK[10];
        abs[k] = fc[k].abs() * WGK[10];
    }
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        samples[2 * j] = f1;
        samples[2 * j + 1] = f2;
        for k in 0..N {
            kron[k] += WGK[j] * (f1[k] + f2[k]);
            abs[k] += WGK[j] * (f1[k].abs() + f2[k].abs());
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * (f1[k] + f2[k]);
            }
        }
    }
    let mut value = [0.0; N];
    let mut err = [0.0; N];
    let mut key: f64 = 0.0;
    for k in 0..N {
        let mean = kron[k] * 0.5;
        let mut asc = WGK[10] * (fc[k] - mean).abs();
        for j in 0..10 {
            asc += WGK[j] * ((samples[2 * j][k] - mean).abs() + (samples[2 * j + 1][k] - mean).abs());
        }
        let resasc = asc * half.abs();
        let resabs = abs[k] * half.abs();
        let mut e = ((kron[k] - gauss[k]) * half).abs();
        if resasc != 0.0 && e != 0.0 {
            e = resasc * (200.0 * e / resasc).powf(1.5).min(1.0);
        }
        if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            e = e.max(50.0 * f64::EPSILON * resabs);
        }
        value[k] = kron[k] * half;
        abs[k] = resabs;
        err[k] = e;
        key = key.max(e / scale[k]);
    }
    Segment { a, b, value, abs, err, key }
}

/// Outcome of an adaptive run that is allowed to stop short of tolerance.
#[derive(Debug, Clone, Copy)]
pub struct Adaptive<const N: usize> {
    pub value: [f64; N],
    /// Largest error estimate relative to the component's absolute integral.
    pub relative_error: f64,
    pub subdivisions: usize,
    pub converged: bool,
}

/// Adaptive vector-valued integration of `f` over `[a, b]`, returning the
/// best estimate even when the subdivision budget runs out.
///
/// Converges when, for every component, the summed error estimate is at
/// most `rel_tol` times the integral of the component's absolute value.
pub fn integrate_vec_best<const N: usize, F>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    max_subdivisions: usize,
) -> Adaptive<N>
where
    F: Fn(f64) -> [f64; N],
{
    if a == b {
        return Adaptive { value: [0.0; N], relative_error: 0.0, subdivisions: 0, converged: true };
    }
    let mut first = gk21(&f, a, b, &[1.0; N]);
    // weight later segment errors by each component's overall magnitude
    let mut scale = [1.0; N];
    for k in 0..N {
        if first.abs[k] > 0.0 {
            scale[k] = first.abs[k];
        }
    }
    first.key = (0..N).map(|k| first.err[k] / scale[k]).fold(0.0, f64::max);
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut subdivisions = 1;
    loop {
        let mut total = [0.0; N];
        let mut abs = [0.0; N];
        let mut err = [0.0; N];
        for s in heap.iter() {
            for k in 0..N {
                total[k] += s.value[k];
                abs[k] += s.abs[k];
                err[k] += s.err[k];
            }
        }
        let mut worst: f64 = 0.0;
        let mut done = true;
        for k in 0..N {
            if err[k] > rel_tol * abs[k] && err[k] > f64::MIN_POSITIVE {
                done = false;
            }
            if abs[k] > 0.0 {
                worst = worst.max(err[k] / abs[k]);
            }
        }
        let stop = |converged| Adaptive { value: total, relative_error: worst, subdivisions, converged };
        if done {
            return stop(true);
        }
        if subdivisions >= max_subdivisions {
            return stop(false);
        }
        let seg = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            heap.push(seg);
            return stop(false);
        }
        heap.push(gk21(&f, seg.a, mid, &scale));
        heap.push(gk21(&f, mid, seg.b, &scale));
        subdivisions += 1;
    }
}

/// Adaptive vector-valued integration; errors if the tolerance is not met
/// within `max_subdivisions`.
pub fn integrate_vec<const N: usize, F>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    max_subdivisions: usize,
) -> Result<[f64; N]>
where
    F: Fn(f64) -> [f64; N],
{
    let out = integrate_vec_best(f, a, b, rel_tol, max_subdivisions);
    if out.converged {
        Ok(out.value)
    } else {
        Err(Error::Quadrature { achieved: out.relative_error, subdivisions: out.subdivisions })
    }
}

/// Scalar convenience wrapper over [`integrate_vec`].
pub fn integrate<F>(f: F, a: f64, b: f64, rel_tol: f64, max_subdivisions: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    integrate_vec(|x| [f(x)], a, b, rel_tol, max_subdivisions).map(|v| v[0])
}

/// Drop in log-integrand (nats) below the peak that is treated as zero.
const WINDOW_DROP: f64 = 46.0;
const WINDOW_GRID: usize = 13;

/// Integral of `exp(l(t)) * m(t)` over the real line, where `(l, m) = f(t)`
/// and `l` is a log-integrand concentrated near `hint`.
///
/// Returns `(offset, values)` with the integrals equal to
/// `exp(offset) * values[k]`; keeping the offset separate lets callers
/// work in log scale. The integration window is grown from `hint` until
/// both ends are `WINDOW_DROP` nats below the largest sampled value.
pub fn integrate_log_scaled<const N: usize, F>(
    f: F,
    hint: (f64, f64),
    spec: &QuadratureSpec,
) -> Result<(f64, [f64; N])>
where
    F: Fn(f64) -> (f64, [f64; N]),
{
    let (mut lo, mut hi) = hint;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Domain(format!("invalid integration window ({lo}, {hi})")));
    }
    let log_at = |t: f64| {
        let v = f(t).0;
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let mut grid = [0.0; WINDOW_GRID];
    let mut peak = f64::NEG_INFINITY;
    for _ in 0..40 {
        let step = (hi - lo) / (WINDOW_GRID - 1) as f64;
        peak = f64::NEG_INFINITY;
        for (i, g) in grid.iter_mut().enumerate() {
            *g = log_at(lo + step * i as f64);
            peak = peak.max(*g);
        }
        if !peak.is_finite() {
            // nothing visible yet; widen symmetrically
            let w = hi - lo;
            lo -= w;
            hi += w;
            continue;
        }
        let width = hi - lo;
        let mut grew = false;
        if grid[0] > peak - WINDOW_DROP {
            lo -= 0.5 * width;
            grew = true;
        }
        if grid[WINDOW_GRID - 1] > peak - WINDOW_DROP {
            hi += 0.5 * width;
            grew = true;
        }
        if !grew {
            break;
        }
    }
    if !peak.is_finite() {
        return Err(Error::Domain("integrand is zero everywhere on the search window".into()));
    }
    // trim to the grid cells that carry mass
    let step = (hi - lo) / (WINDOW_GRID - 1) as f64;
    let first = grid.iter().position(|&v| v > peak - WINDOW_DROP).unwrap_or(0);
    let last = grid.iter().rposition(|&v| v > peak - WINDOW_DROP).unwrap_or(WINDOW_GRID - 1);
    let a = lo + step * first.saturating_sub(1) as f64;
    let b = lo + step * (last + 1).min(WINDOW_GRID - 1) as f64;

    let values = match spec.transform {
        Transform::LogSubstitution => integrate_vec(
            |t| {
                let (l, m) = f(t);
                let s = if l.is_finite() { (l - peak).exp() } else { 0.0 };
                let mut out = [0.0; N];
                for k in 0..N {
                    out[k] = s * m[k];
                }
                out
            },
            a,
            b,
            spec.relative_tolerance,
            spec.max_subdivisions,
        )?,
        Transform::None => integrate_vec(
            |w: f64| {
                let t = w.ln();
                let (l, m) = f(t);
                // dt = dw / w
                let s = if l.is_finite() { (l - peak).exp() / w } else { 0.0 };
                let mut out = [0.0; N];
                for k in 0..N {
                    out[k] = s * m[k];
                }
                out
            },
            a.exp(),
            b.exp(),
            spec.relative_tolerance,
            spec.max_subdivisions,
        )?,
    };
    Ok((peak, values))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / dp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Cached 20-point rule, used by the bivariate normal and the nested
/// trivariate integration.
pub(crate) fn gl20() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(20))
}

pub(crate) fn gl_rule(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static R6: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static R12: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    match n {
        6 => R6.get_or_init(|| gauss_legendre(6)),
        12 => R12.get_or_init(|| gauss_legendre(12)),
        _ => gl20(),
    }
}
