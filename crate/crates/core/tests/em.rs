use hth_core::dist::{gig_logpdf, gig_moments, hth_logpdf, hth_sample, GigParams, HthParams};
use hth_core::em::*;
use hth_core::metrics::ari_labels;
use hth_core::specfun::quadrature::gauss_legendre;
use hth_core::specfun::{MvnSpec, QuadratureSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn quad() -> QuadratureSpec {
    QuadratureSpec::default()
}

fn mvn() -> MvnSpec {
    MvnSpec::default()
}

fn random_spd(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(p, p) * 0.3
}

fn random_component(rng: &mut ChaCha8Rng, p: usize, q: usize, skew: f64) -> HthParams {
    let mu = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
    let lam = DMatrix::from_fn(p, q, |_, _| skew * rng.sample::<f64, _>(StandardNormal));
    HthParams::new(mu, random_spd(rng, p), lam, rng.random_range(-2.0..2.0), rng.random_range(0.5..3.0)).unwrap()
}

fn appendix(q: usize, index: f64) -> HthParams {
    let lam = if q == 1 {
        DMatrix::from_vec(2, 1, vec![9.0, -5.0])
    } else {
        DMatrix::from_row_slice(2, 2, &[-1.0, 9.0, 3.0, 9.0])
    };
    let sigma = DMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 2.0]);
    HthParams::new(DVector::from_vec(vec![1.0, 1.0]), sigma, lam, index, 2.0).unwrap()
}

fn two_cluster_data(seed: u64, n: usize) -> (DMatrix<f64>, Vec<usize>) {
    let a = appendix(1, 1.0);
    let mut b = appendix(1, 0.5);
    b.mu = DVector::from_vec(vec![-14.0, -12.0]);
    let n1 = n * 3 / 5;
    let xa = hth_sample(&a, n1, seed).unwrap();
    let xb = hth_sample(&b, n - n1, seed + 1000).unwrap();
    let mut x = DMatrix::zeros(n, 2);
    x.view_mut((0, 0), (n1, 2)).copy_from(&xa);
    x.view_mut((n1, 0), (n - n1, 2)).copy_from(&xb);
    let labels = (0..n).map(|i| 1 + (i >= n1) as usize).collect();
    (x, labels)
}

#[test]
fn single_component_responsibilities_are_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = random_component(&mut rng, 2, 1, 1.0);
    let x = hth_sample(&c, 40, 2).unwrap();
    let model = MixtureModel::new(vec![1.0], vec![c.clone()]).unwrap();
    let cache = e_step(&x, &model, 1.0, &quad(), &mvn()).unwrap();
    assert!(cache.z.iter().all(|z| *z == 1.0));
    assert_eq!(cache.labels(), vec![1; 40]);
    let direct: f64 = (0..40).map(|i| hth_logpdf(&x.row(i).transpose(), &c, &quad(), &mvn()).unwrap()).sum();
    let ll = observed_loglik(&x, &model, &quad(), &mvn()).unwrap();
    assert!((ll - direct).abs() < 1e-10 * direct.abs());
    assert!((cache.loglik - ll).abs() < 1e-7 * ll.abs());
}

#[test]
fn zero_skewness_posterior_is_gig() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let p = rng.random_range(1..4);
        let mut c = random_component(&mut rng, p, 1, 0.0);
        c.lambda_mat.fill(0.0);
        let model = MixtureModel::new(vec![1.0], vec![c.clone()]).unwrap();
        let x = DMatrix::from_fn(10, p, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
        let cache = e_step(&x, &model, 1.0, &quad(), &mvn()).unwrap();
        let prec = c.sigma.clone().try_inverse().unwrap();
        for i in 0..10 {
            let dx = x.row(i).transpose() - &c.mu;
            let delta = (dx.transpose() * &prec * &dx)[0];
            let g = GigParams::new(c.omega, c.omega + delta, c.index - p as f64 / 2.0).unwrap();
            let m = gig_moments(&g).unwrap();
            let rel = |u: f64, v: f64| (u - v).abs() / v.abs().max(1.0);
            assert!(rel(cache.a(i, 0), m.mean) < 1e-6, "{} vs {}", cache.a(i, 0), m.mean);
            assert!(rel(cache.b(i, 0), m.inv_mean) < 1e-6);
            assert!(rel(cache.c(i, 0), m.log_mean) < 1e-6);
        }
    }
}

/// `a, b, c, d, E` by brute-force tensor quadrature over `(ln w, u)` of the
/// hierarchical joint density of `(X, U, W)` for `q = 1`.
fn brute_expectations(c: &HthParams, x: &DVector<f64>) -> [f64; 5] {
    let (nodes, weights) = gauss_legendre(12);
    let gig = GigParams::symmetric(c.omega, c.index).unwrap();
    let prec = c.sigma.clone().try_inverse().unwrap();
    let ln_det = c.sigma.determinant().ln();
    let p = c.p() as f64;
    let lam = c.lambda_mat.column(0).into_owned();
    let dx = x - &c.mu;
    let lpl = (lam.transpose() * &prec * &lam)[0];
    let lpx = (lam.transpose() * &prec * &dx)[0];
    let log_joint = |w: f64, u: f64| {
        let e = &dx - &lam * u;
        let qf = (e.transpose() * &prec * &e)[0];
        gig_logpdf(w, &gig).unwrap() + std::f64::consts::LN_2 - 0.5 * (2.0 * std::f64::consts::PI * w).ln()
            - u * u / (2.0 * w)
            - 0.5 * p * (2.0 * std::f64::consts::PI * w).ln()
            - 0.5 * ln_det
            - qf / (2.0 * w)
    };
    let (t_lo, t_hi, t_panels) = (-20.0, 15.0, 300);
    let mut pts = Vec::new();
    for k in 0..t_panels {
        let (a, b) = (t_lo + (t_hi - t_lo) * k as f64 / t_panels as f64, t_lo + (t_hi - t_lo) * (k + 1) as f64 / t_panels as f64);
        for (z, wt) in nodes.iter().zip(&weights) {
            let t = 0.5 * (a + b) + 0.5 * (b - a) * z;
            let w = t.exp();
            // conditional of U given (w, x) before truncation sets the u range
            let sd = (w / (1.0 + lpl)).sqrt();
            let centre = (lpx / (1.0 + lpl)).max(0.0);
            let u_hi = centre + 14.0 * sd;
            let u_panels = 40;
            for j in 0..u_panels {
                let (ua, ub) = (u_hi * j as f64 / u_panels as f64, u_hi * (j + 1) as f64 / u_panels as f64);
                for (y, wu) in nodes.iter().zip(&weights) {
                    let u = 0.5 * (ua + ub) + 0.5 * (ub - ua) * y;
                    let l = log_joint(w, u) + t + (0.5 * (b - a) * wt).ln() + (0.5 * (ub - ua) * wu).ln();
                    pts.push((l, w, u, t));
                }
            }
        }
    }
    let top = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let mut s = [0.0; 6];
    for (l, w, u, t) in pts {
        let e = (l - top).exp();
        s[0] += e;
        s[1] += e * w;
        s[2] += e / w;
        s[3] += e * t;
        s[4] += e * u / w;
        s[5] += e * u * u / w;
    }
    [s[1] / s[0], s[2] / s[0], s[3] / s[0], s[4] / s[0], s[5] / s[0]]
}

#[test]
fn expectations_match_joint_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    for k in 0..12 {
        let c = random_component(&mut rng, 2, 1, 2.0);
        let x = &c.mu + DVector::from_fn(2, |_, _| 2.0 * rng.sample::<f64, _>(StandardNormal));
        let prep = c.prepare(&mvn()).unwrap();
        let got = Expectations::compute(&prep, &x, &quad(), &mvn()).unwrap();
        let want = brute_expectations(&c, &x);
        let have = [got.a, got.b, got.c, got.d[0], got.e[(0, 0)]];
        for (j, (h, w)) in have.iter().zip(&want).enumerate() {
            let err = (h - w).abs() / w.abs().max(1.0);
            worst = worst.max(err);
            assert!(err < 1e-4, "pair {k} entry {j}: {h} vs {w}");
        }
    }
    assert!(worst < 1e-4);
}

#[test]
fn estep_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (p, q) in [(2, 1), (2, 2), (3, 2)] {
        let comps = vec![random_component(&mut rng, p, q, 1.5), random_component(&mut rng, p, q, 1.5)];
        let model = MixtureModel::new(vec![0.6, 0.4], comps.clone()).unwrap();
        let x = DMatrix::from_fn(30, p, |_, _| 2.0 * rng.sample::<f64, _>(StandardNormal));
        for d in [0.3, 1.0] {
            let cache = e_step(&x, &model, d, &quad(), &mvn()).unwrap();
            for i in 0..30 {
                let row: f64 = cache.z.row(i).sum();
                assert!((row - 1.0).abs() < 1e-12);
                for g in 0..2 {
                    let e = &cache.expectations[g][i];
                    assert!(e.a * e.b >= 1.0 - 1e-10);
                    assert!((&e.e - e.e.transpose()).amax() < 1e-12 * e.e.amax().max(1.0));
                    let gap = &e.e - &e.d * e.d.transpose() / e.b;
                    assert!(gap.symmetric_eigen().eigenvalues.min() > -1e-9);
                }
            }
        }
    }
}

#[test]
fn mstep_location_without_skewness_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (n, p, q) = (25, 2, 1);
    let c = random_component(&mut rng, p, q, 1.0);
    let model = MixtureModel::new(vec![1.0], vec![c.clone()]).unwrap();
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let cache = e_step(&x, &model, 1.0, &quad(), &mvn()).unwrap();
    let mut zeroed = cache.clone();
    for e in &mut zeroed.expectations[0] {
        e.d.fill(0.0);
        e.e = DMatrix::identity(q, q) * e.b;
    }
    let (next, _) = m_step(&x, &zeroed, &model).unwrap();
    let sb: f64 = (0..n).map(|i| zeroed.b(i, 0)).sum();
    let want = (0..n).fold(DVector::zeros(p), |acc, i| acc + x.row(i).transpose() * zeroed.b(i, 0)) / sb;
    assert!((&next.components[0].mu - want).amax() < 1e-12);
}

#[test]
fn mstep_scale_is_psd_for_random_caches() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..20 {
        let (n, p, q, g) = (15, 3, 2, 2);
        let comps: Vec<_> = (0..g).map(|_| random_component(&mut rng, p, q, 1.0)).collect();
        let model = MixtureModel::new(vec![0.5, 0.5], comps).unwrap();
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut z = DMatrix::from_fn(n, g, |_, _| rng.random_range(0.05..1.0));
        for i in 0..n {
            let s = z.row(i).sum();
            z.row_mut(i).scale_mut(1.0 / s);
        }
        let expectations = (0..g)
            .map(|_| {
                (0..n)
                    .map(|_| {
                        let a: f64 = rng.random_range(0.2..3.0);
                        let b = rng.random_range(1.0..2.0) / a;
                        let d = DVector::from_fn(q, |_, _| rng.random_range(0.0..2.0));
                        let extra = random_spd(&mut rng, q) * 0.2;
                        let e = &d * d.transpose() / b + extra;
                        Expectations { log_density: 0.0, a, b, c: a.ln() - 0.1, d, e }
                    })
                    .collect()
            })
            .collect();
        let cache = EStepCache { z, expectations, loglik: 0.0, anneal_d: 1.0 };
        let (next, _) = m_step(&x, &cache, &model).unwrap();
        for c in &next.components {
            let min = c.sigma.clone().symmetric_eigen().eigenvalues.min();
            assert!(min > -1e-10, "trial {trial}: {min}");
        }
    }
}

#[test]
fn em_step_never_decreases_loglik() {
    let (x, _) = two_cluster_data(40, 120);
    for start in 0..20u64 {
        let g = 1 + (start % 2) as usize;
        let mut model = kmeans_init(&x, g, 1, 500 + start).unwrap();
        let mut prev = observed_loglik(&x, &model, &quad(), &mvn()).unwrap();
        for it in 0..4 {
            let cache = e_step(&x, &model, 1.0, &quad(), &mvn()).unwrap();
            model = m_step(&x, &cache, &model).unwrap().0;
            let l = observed_loglik(&x, &model, &quad(), &mvn()).unwrap();
            assert!(l >= prev - 1e-8, "start {start} iteration {it}: {l} < {prev}");
            prev = l;
        }
    }
}

#[test]
fn loglik_invariances() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let comps = vec![random_component(&mut rng, 2, 2, 1.0), random_component(&mut rng, 2, 2, 1.0), random_component(&mut rng, 2, 2, 1.0)];
    let model = MixtureModel { weights: vec![0.5, 0.3, 0.2], components: comps.clone() };
    let x = DMatrix::from_fn(30, 2, |_, _| 2.0 * rng.sample::<f64, _>(StandardNormal));
    let ll = observed_loglik(&x, &model, &quad(), &mvn()).unwrap();
    let rev = DMatrix::from_fn(30, 2, |i, j| x[(29 - i, j)]);
    assert!((observed_loglik(&rev, &model, &quad(), &mvn()).unwrap() - ll).abs() < 1e-10 * ll.abs());
    let relabeled = MixtureModel { weights: vec![0.2, 0.5, 0.3], components: vec![comps[2].clone(), comps[0].clone(), comps[1].clone()] };
    assert!((observed_loglik(&x, &relabeled, &quad(), &mvn()).unwrap() - ll).abs() < 1e-10);
}

#[test]
fn canonical_form_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let comps = vec![random_component(&mut rng, 3, 2, 1.0), random_component(&mut rng, 3, 2, 1.0), random_component(&mut rng, 3, 2, 1.0)];
    let mut m = MixtureModel { weights: vec![0.2, 0.5, 0.3], components: comps };
    m.canonicalize();
    assert_eq!(m.weights, vec![0.5, 0.3, 0.2]);
    let once = m.clone();
    m.canonicalize();
    assert_eq!(m, once);
    for c in &m.components {
        assert!(c.lambda_mat.column(0).norm() >= c.lambda_mat.column(1).norm());
    }
}

#[test]
fn free_parameters_and_bic() {
    assert_eq!(count_free_params(1, 2, 1), 9);
    assert_eq!(count_free_params(2, 3, 2), 35);
    assert_eq!(count_free_params(1, 1, 1), 5);
    assert_eq!(bic(0.0, 0, 10), 0.0);
    assert!((bic(-100.0, 9, 250) - (-200.0 - 9.0 * 250f64.ln())).abs() < 1e-12);
    assert!((bic(-100.0, 9, 250) + 249.69).abs() < 5e-3);
}

#[test]
fn kmeans_start() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let x = DMatrix::from_fn(60, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
    let m = kmeans_init(&x, 1, 2, 4).unwrap();
    let mean = x.row_mean().transpose();
    let centered = DMatrix::from_fn(60, 3, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / 60.0;
    assert!((&m.components[0].mu - &mean).amax() < 1e-12);
    assert!((&m.components[0].sigma - &cov).amax() < 1e-12);
    assert_eq!(m.components[0].omega, 1.0);
    assert_eq!(m.components[0].index, 1.0);
    assert_eq!(kmeans_init(&x, 2, 2, 9).unwrap(), kmeans_init(&x, 2, 2, 9).unwrap());

    // two blobs ten standard deviations apart
    let mut truth = Vec::new();
    let blobs = DMatrix::from_fn(100, 2, |i, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z + if i < 50 { 0.0 } else { 10.0 }
    });
    for i in 0..100 {
        truth.push(1 + (i >= 50) as usize);
    }
    let km = kmeans(&blobs, 2, 25, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let labels: Vec<usize> = km.labels.iter().map(|l| l + 1).collect();
    assert_eq!(ari_labels(&labels, &truth).unwrap(), 1.0);
    assert!(kmeans_init(&blobs, 60, 1, 1).is_err());
}

#[test]
fn recovers_location_from_appendix_sample() {
    let truth = appendix(1, 1.0);
    let x = hth_sample(&truth, 250, 2024).unwrap();
    let config = FitConfig { n_starts: 2, seed: 3, ..Default::default() };
    let fit = ecm_fit(&x, 1, 1, &config).unwrap();
    assert!(fit.converged);
    assert_eq!(fit.labels, vec![1; 250]);
    for r in 0..2 {
        assert!((fit.model.components[0].mu[r] - truth.mu[r]).abs() < 0.5, "{:?}", fit.model.components[0].mu);
    }
    let rho = count_free_params(1, 2, 1);
    assert_eq!(fit.bic, bic(fit.loglik, rho, 250));
    for (l, d) in fit.loglik_trace.windows(2).zip(fit.anneal_trace.windows(2)) {
        if d[0] == 1.0 {
            assert!(l[1] >= l[0] - 1e-8);
        }
    }
}

#[test]
fn separates_two_clusters() {
    let (x, truth) = two_cluster_data(7, 150);
    let config = FitConfig { n_starts: 2, ..Default::default() };
    let fit = ecm_fit(&x, 2, 1, &config).unwrap();
    let score = ari_labels(&fit.labels, &truth).unwrap();
    assert!(score > 0.95, "{score}");
    assert!(fit.model.weights[0] >= fit.model.weights[1]);
}

#[test]
fn duplicated_observation_is_refused() {
    let x = DMatrix::from_fn(30, 2, |_, j| 1.0 + j as f64);
    match ecm_fit(&x, 1, 1, &FitConfig { n_starts: 2, ..Default::default() }) {
        Err(e) => assert!(e.to_string().contains("singular"), "{e}"),
        Ok(r) => assert!(!r.converged, "spurious fit {r:?}"),
    }
}

#[test]
fn reproducible_across_thread_counts() {
    let (x, _) = two_cluster_data(9, 80);
    let config = FitConfig { n_starts: 1, max_iter: 40, ..Default::default() };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| ecm_fit(&x, 2, 1, &config).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(1));
    let four = run(4);
    assert!((one.loglik - four.loglik).abs() < 1e-6);
}

#[test]
fn rejects_bad_configuration() {
    let x = DMatrix::from_fn(30, 2, |i, j| (i * (j + 1)) as f64);
    let bad = FitConfig { anneal_schedule: vec![0.5, 0.2, 1.0], ..Default::default() };
    assert!(ecm_fit(&x, 1, 1, &bad).is_err());
    assert!(ecm_fit(&x, 1, 3, &FitConfig::default()).is_err());
    let c = appendix(1, 1.0);
    let model = MixtureModel::new(vec![1.0], vec![c]).unwrap();
    assert!(e_step(&x, &model, 0.0, &quad(), &mvn()).is_err());
}
