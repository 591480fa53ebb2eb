//! Lloyd's k-means with k-means++ seeding, used to start the ECM runs.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_data, MixtureModel};
use crate::dist::HthParams;
use crate::error::{Error, Result};

const RESTARTS: usize = 25;
const MAX_RESEEDS: usize = 10;
const LLOYD_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    /// k×p.
    pub centers: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub inertia: f64,
}

fn sq_dist(data: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, k: usize) -> f64 {
    data.row(i).iter().zip(centers.row(k).iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn plus_plus<R: Rng>(data: &DMatrix<f64>, k: usize, rng: &mut R) -> DMatrix<f64> {
    let (n, p) = data.shape();
    let mut centers = DMatrix::zeros(k, p);
    centers.set_row(0, &data.row(rng.random_range(0..n)));
    let mut best: Vec<f64> = (0..n).map(|i| sq_dist(data, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, d) in best.iter().enumerate() {
                if u < *d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.set_row(c, &data.row(pick));
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(data, i, &centers, c));
        }
    }
    centers
}

/// One Lloyd run; `None` if a cluster empties.
fn lloyd(data: &DMatrix<f64>, mut centers: DMatrix<f64>) -> Option<KMeans> {
    let (n, p) = data.shape();
    let k = centers.nrows();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..LLOYD_ITERS {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let nearest = (0..k)
                .map(|c| (c, sq_dist(data, i, &centers, c)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0;
            if nearest != *label {
                *label = nearest;
                changed = true;
            }
        }
        let mut sums = DMatrix::zeros(k, p);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            let row = sums.row(l) + data.row(i);
            sums.set_row(l, &row);
        }
        if counts.contains(&0) {
            return None;
        }
        for c in 0..k {
            let row = sums.row(c) / counts[c] as f64;
            centers.set_row(c, &row);
        }
        if !changed {
            break;
        }
    }
    let inertia = labels.iter().enumerate().map(|(i, &l)| sq_dist(data, i, &centers, l)).sum();
    Some(KMeans { centers, labels, inertia })
}

/// Best of `restarts` seeded Lloyd runs by within-cluster sum of squares.
pub fn kmeans<R: Rng>(data: &DMatrix<f64>, k: usize, restarts: usize, rng: &mut R) -> Result<KMeans> {
    check_data(data)?;
    if k == 0 || k > data.nrows() {
        return Err(Error::Init(format!("cannot form {k} clusters from {} points", data.nrows())));
    }
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts.max(1) {
        let mut run = None;
        for _ in 0..=MAX_RESEEDS {
            run = lloyd(data, plus_plus(data, k, rng));
            if run.is_some() {
                break;
            }
        }
        let run = run.ok_or_else(|| Error::Init(format!("k-means left a cluster empty after {MAX_RESEEDS} reseeds")))?;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

fn weighted_moments(data: &DMatrix<f64>, members: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let p = data.ncols();
    let m = members.len() as f64;
    let mut mean = DVector::zeros(p);
    for &i in members {
        mean += data.row(i).transpose();
    }
    mean /= m;
    let mut cov = DMatrix::zeros(p, p);
    for &i in members {
        let d = data.row(i).transpose() - &mean;
        cov += &d * d.transpose();
    }
    (mean, cov / m)
}

/// Starting model: k-means partition, within-cluster mean and covariance,
/// standard normal skewness entries, `ω = λ = 1`.
pub fn kmeans_init(data: &DMatrix<f64>, g: usize, q: usize, seed: u64) -> Result<MixtureModel> {
    check_data(data)?;
    let (n, p) = data.shape();
    if q == 0 || q > p {
        return Err(Error::Config(format!("q must lie in 1..={p}, got {q}")));
    }
    if g == 0 || n <= g * (p + 1) {
        return Err(Error::Init(format!("need more than G(p+1) = {} observations, got {n}", g * (p + 1))));
    }
    let all: Vec<usize> = (0..n).collect();
    let (_, total_cov) = weighted_moments(data, &all);
    if total_cov.clone().cholesky().is_none() {
        return Err(Error::Init("sample covariance of the data is singular".into()));
    }
    let ridge = 1e-6 * total_cov.trace() / p as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let km = kmeans(data, g, RESTARTS, &mut rng)?;
    let mut weights = Vec::with_capacity(g);
    let mut components = Vec::with_capacity(g);
    for c in 0..g {
        let members: Vec<usize> = (0..n).filter(|&i| km.labels[i] == c).collect();
        let (mu, mut sigma) = weighted_moments(data, &members);
        if sigma.clone().cholesky().is_none() {
            sigma += DMatrix::identity(p, p) * ridge;
        }
        let lambda_mat = DMatrix::from_fn(p, q, |_, _| StandardNormal.sample(&mut rng));
        weights.push(members.len() as f64 / n as f64);
        components.push(HthParams::new(mu, sigma, lambda_mat, 1.0, 1.0)?);
    }
    MixtureModel::new(weights, components)
}
