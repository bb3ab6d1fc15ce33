use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use super::*;
use crate::data::{BinarySubject, TimeGrid};
use crate::randdist::ChainRng;
use crate::state::{ChainState, DrawsMeta, MeanModel, StoreOptions};

#[test]
fn rmse_special_cases() {
    let f = vec![vec![0.1, 0.5, -0.2], vec![1.0, 2.0, 3.0]];
    assert_eq!(rmse_signal(&[f.clone()], &f).unwrap(), vec![0.0]);
    let shifted: Vec<Vec<f64>> = f.iter().map(|r| r.iter().map(|v| v + 1.0).collect()).collect();
    let r = rmse_signal(&[shifted], &f).unwrap();
    assert!((r[0] - 1.0).abs() < 1e-15);
}

#[test]
fn rmse_matches_two_loop_oracle() {
    let mut rng = ChainRng::seed_from_u64(3);
    let truth: Vec<Vec<f64>> = (0..4).map(|_| (0..7).map(|_| rng.random::<f64>()).collect()).collect();
    let est: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|_| truth.iter().map(|r| r.iter().map(|v| v + rng.random::<f64>() - 0.5).collect()).collect())
        .collect();
    let got = rmse_signal(&est, &truth).unwrap();
    for (s, e) in est.iter().enumerate() {
        let mut outer = 0.0;
        for i in 0..4 {
            let mut inner = 0.0;
            for k in 0..7 {
                inner += (e[i][k] - truth[i][k]).powi(2);
            }
            outer += inner / 7.0;
        }
        assert!((got[s] - (outer / 4.0).sqrt()).abs() < 1e-15);
    }
}

#[test]
fn loss_for_perfect_and_coin_predictions() {
    let y = [1, 0, 1, 1, 0];
    let perfect: Vec<Vec<u8>> = y.iter().map(|&v| vec![v; 10]).collect();
    let l = predictive_loss_from_replicates(&y, &perfect).unwrap();
    assert_eq!((l.g, l.p), (0.0, 0.0));
    let coin: Vec<Vec<u8>> = y.iter().map(|_| vec![0, 1, 0, 1]).collect();
    let l = predictive_loss_from_replicates(&y, &coin).unwrap();
    assert_eq!(l.g, 5.0 * 0.25);
    assert_eq!(l.p, 5.0 * 0.25);
    assert_eq!(l.total, 2.5);
}

#[test]
fn loss_matches_naive_oracle_exactly() {
    let y = [1u8, 0, 0, 1, 1];
    let reps: Vec<Vec<u8>> = vec![
        vec![1, 1, 0, 1, 0, 1],
        vec![0, 0, 0, 1, 0, 0],
        vec![1, 1, 1, 1, 1, 1],
        vec![0, 1, 0, 1, 0, 1],
        vec![1, 0, 0, 0, 0, 0],
    ];
    let mut g = 0.0;
    let mut p = 0.0;
    for o in 0..5 {
        let mut m = 0.0;
        for r in 0..6 {
            m += reps[o][r] as f64;
        }
        m /= 6.0;
        let mut v = 0.0;
        for r in 0..6 {
            v += (reps[o][r] as f64 - m).powi(2);
        }
        g += (y[o] as f64 - m).powi(2);
        p += v / 6.0;
    }
    let l = predictive_loss_from_replicates(&y, &reps).unwrap();
    assert!((l.g - g).abs() < 1e-14 && (l.p - p).abs() < 1e-14);
}

fn crps_closed_form(p: f64, y: f64) -> f64 {
    p * (1.0 - y) + (1.0 - p) * y - p * (1.0 - p)
}

#[test]
fn crps_special_cases() {
    assert_eq!(crps_empirical(&[1.0; 10], 1.0), 0.0);
    assert!((crps_empirical(&[0.0, 1.0], 0.0) - 0.25).abs() < 1e-15);
    assert!((crps_empirical(&[0.0, 1.0], 1.0) - 0.25).abs() < 1e-15);
}

#[test]
fn crps_sorted_formula_matches_pairwise() {
    let mut rng = ChainRng::seed_from_u64(8);
    let xs: Vec<f64> = (0..40).map(|_| rng.random::<f64>() * 3.0).collect();
    let y = 1.2;
    let n = xs.len() as f64;
    let e1 = xs.iter().map(|x| (x - y).abs()).sum::<f64>() / n;
    let e2 = xs.iter().flat_map(|a| xs.iter().map(move |b| (a - b).abs())).sum::<f64>() / (n * n);
    assert!((crps_empirical(&xs, y) - (e1 - 0.5 * e2)).abs() < 1e-12);
}

#[test]
fn crps_converges_to_bernoulli_form() {
    let mut rng = ChainRng::seed_from_u64(9);
    for &p in &[0.1, 0.5, 0.83] {
        for y in [0.0, 1.0] {
            let xs: Vec<f64> = (0..100_000).map(|_| f64::from(u8::from(rng.random::<f64>() < p))).collect();
            assert!((crps_empirical(&xs, y) - crps_closed_form(p, y)).abs() < 1e-2);
        }
    }
}

fn meta() -> DrawsMeta {
    DrawsMeta {
        seed: 0,
        burn_in: 0,
        thinning: 1,
        total_iterations: 1,
        grid_size: 100,
        mean_model: MeanModel::Hierarchical,
        step_seconds: vec![0.0; 9],
        total_seconds: 0.0,
    }
}

#[test]
fn replicates_of_saturated_fit_are_perfect() {
    let subjects = vec![
        BinarySubject {
            id: "a".to_string(),
            grid: TimeGrid::new(vec![0.0, 1.0]).unwrap(),
            responses: vec![1, 0],
        },
        BinarySubject {
            id: "b".to_string(),
            grid: TimeGrid::new(vec![1.0]).unwrap(),
            responses: vec![1],
        },
    ];
    let ds = BinaryDataset::new(subjects).unwrap();
    let mut d = PosteriorDraws::new(
        meta(),
        vec!["a".into(), "b".into()],
        vec![TimeGrid::new(vec![0.0, 1.0]).unwrap(), TimeGrid::new(vec![1.0]).unwrap()],
        StoreOptions::default(),
    )
    .unwrap();
    d.push(&ChainState {
        latent_noisy: vec![],
        pg: vec![],
        signals: vec![DVector::from_vec(vec![1e3, -1e3]), DVector::from_vec(vec![0.0, 1e3])],
        mu: DVector::zeros(2),
        sigma: DMatrix::identity(2, 2),
        noise_var: 1e-6,
        mu0: 0.0,
        sigma2: 1.0,
        rho: 1.0,
        nu: 5.0,
    });
    let r = score(&d, &ds, 50, 1).unwrap();
    assert_eq!((r.g, r.p, r.total, r.crps), (0.0, 0.0, 0.0, 0.0));
    assert_eq!(r.observations, 3);
}

#[test]
fn pearson_and_tetrachoric_basics() {
    let x = [0.0, 1.0, 1.0, 0.0, 1.0];
    assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(pearson(&x, &[1.0; 5]), None);
    assert_eq!(tetrachoric([[5, 5], [0, 0]]), None);
    let r = tetrachoric([[25, 25], [25, 25]]).unwrap();
    assert!(r.abs() < 1e-10);
}

#[test]
fn independent_coins_have_small_correlations() {
    let mut rng = ChainRng::seed_from_u64(4);
    let a: Vec<Option<u8>> = (0..20_000).map(|_| Some(u8::from(rng.random::<bool>()))).collect();
    let b: Vec<Option<u8>> = (0..20_000).map(|_| Some(u8::from(rng.random::<bool>()))).collect();
    let c = pearson_and_tetrachoric(&[a, b]);
    assert!(c.pearson[0][1].unwrap().abs() < 0.03);
    assert!(c.tetrachoric[0][1].unwrap().abs() < 0.05);
    assert_eq!(c.pearson[0][0], Some(1.0));
}

/// `P(X ≤ h, Y ≤ k)` by Simpson's rule on `∫ φ(x) Φ((k − ρx)/√(1−ρ²)) dx`.
fn bvn_cdf_simpson(h: f64, k: f64, r: f64) -> f64 {
    bvn_cdf_simpson_n(h, k, r, 4000)
}

fn bvn_cdf_simpson_n(h: f64, k: f64, r: f64, n: usize) -> f64 {
    let lo = -9.0;
    let step = (h - lo) / n as f64;
    let s = (1.0 - r * r).sqrt();
    let g = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt() * norm_cdf((k - r * x) / s);
    let mut acc = g(lo) + g(h);
    for i in 1..n {
        acc += g(lo + i as f64 * step) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * step / 3.0
}

#[test]
fn bvn_cdf_matches_simpson() {
    for &(h, k, r) in &[(0.0, 0.0, 0.5), (0.3, -1.2, -0.7), (1.5, 0.8, 0.95), (-0.4, 0.2, 0.1)] {
        assert!((bvn_cdf(h, k, r) - bvn_cdf_simpson(h, k, r)).abs() < 1e-8, "{h} {k} {r}");
    }
    // Orthant probability 1/4 + asin(ρ)/(2π).
    let r: f64 = 0.6;
    assert!((bvn_cdf(0.0, 0.0, r) - (0.25 + r.asin() / (2.0 * std::f64::consts::PI))).abs() < 1e-12);
}

#[test]
fn tetrachoric_matches_likelihood_grid_search() {
    let t = [[40, 10], [10, 40]];
    let got = tetrachoric(t).unwrap();
    // Grid search of the bivariate-normal log-likelihood over (h, k, ρ).
    let mut best = (f64::NEG_INFINITY, 0.0);
    for hi in -2..=2 {
        for ki in -2..=2 {
            let (h, k) = (hi as f64 * 0.02, ki as f64 * 0.02);
            for ri in 0..200 {
                let r = -0.995 + ri as f64 * 0.01;
                let p00 = bvn_cdf_simpson_n(h, k, r, 400);
                let p0_ = norm_cdf(h);
                let p_0 = norm_cdf(k);
                let cells = [p00, p0_ - p00, p_0 - p00, 1.0 - p0_ - p_0 + p00];
                let counts = [40.0, 10.0, 10.0, 40.0];
                let ll: f64 = cells.iter().zip(counts).map(|(p, c)| c * p.max(1e-300).ln()).sum();
                if ll > best.0 {
                    best = (ll, r);
                }
            }
        }
    }
    assert!((got - best.1).abs() < 0.02, "{got} vs {}", best.1);
    // Symmetric margins: Φ₂(0, 0; ρ) = 1/4 + asin(ρ)/(2π) = 0.4.
    assert!((got - (std::f64::consts::FRAC_PI_2 * 0.6).sin()).abs() < 1e-8);
}

#[test]
fn wasserstein_closed_forms() {
    let m = DVector::from_vec(vec![0.3, -1.0]);
    let c = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    assert!(wasserstein2_gaussian(&m, &c, &m, &c).unwrap() < 1e-7);
    let v = DVector::from_vec(vec![3.0, 4.0]);
    let w = wasserstein2_gaussian(&m, &c, &(&m + &v), &c).unwrap();
    assert!((w - 5.0).abs() < 1e-7);
    let one = |mu: f64, s2: f64| (DVector::from_element(1, mu), DMatrix::from_element(1, 1, s2));
    let (ma, ca) = one(1.0, 4.0);
    let (mb, cb) = one(-0.5, 0.25);
    let want = (1.5f64.powi(2) + (2.0f64 - 0.5).powi(2)).sqrt();
    assert!((wasserstein2_gaussian(&ma, &ca, &mb, &cb).unwrap() - want).abs() < 1e-12);
    let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(wasserstein2_gaussian(&m, &bad, &m, &c).is_err());
}

fn spd(seed: u64) -> (DVector<f64>, DMatrix<f64>) {
    let mut rng = ChainRng::seed_from_u64(seed);
    let a = DMatrix::from_fn(3, 3, |_, _| rng.random::<f64>() - 0.5);
    let c = &a * a.transpose() + DMatrix::identity(3, 3) * 0.1;
    (DVector::from_fn(3, |_, _| rng.random::<f64>() * 2.0 - 1.0), c)
}

proptest! {
    #[test]
    fn wasserstein_is_a_metric(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
        let (a, ca) = spd(s1);
        let (b, cb) = spd(s2);
        let (c, cc) = spd(s3);
        let ab = wasserstein2_gaussian(&a, &ca, &b, &cb).unwrap();
        let ba = wasserstein2_gaussian(&b, &cb, &a, &ca).unwrap();
        let bc = wasserstein2_gaussian(&b, &cb, &c, &cc).unwrap();
        let ac = wasserstein2_gaussian(&a, &ca, &c, &cc).unwrap();
        prop_assert!((ab - ba).abs() < 1e-8);
        prop_assert!(ac <= ab + bc + 1e-8);
    }
}

#[test]
fn ess_white_noise_ar1_and_constant() {
    let mut rng = ChainRng::seed_from_u64(2);
    let n = 20_000;
    let x: Vec<f64> = (0..n).map(|_| crate::randdist::std_normal(&mut rng)).collect();
    let e = effective_sample_size(&x).unwrap();
    assert!((e / n as f64 - 1.0).abs() < 0.1, "{e}");
    let phi: f64 = 0.7;
    let mut ar = vec![0.0; n];
    for t in 1..n {
        ar[t] = phi * ar[t - 1] + crate::randdist::std_normal(&mut rng);
    }
    let e = effective_sample_size(&ar).unwrap();
    let want = n as f64 * (1.0 - phi) / (1.0 + phi);
    assert!((e / want - 1.0).abs() < 0.15, "{e} vs {want}");
    assert_eq!(effective_sample_size(&[2.0; 50]), None);
}

#[test]
fn elicitation() {
    let (a, b) = elicit_noise_prior(0.1, 10.0, 0.99).unwrap();
    assert_eq!(a, 5.0);
    assert!(b > 0.0);
    // The quoted IG(5, 0.001) corresponds to t = √50.
    let q = implied_coverage(0.1, 10.0, 0.001).unwrap();
    let (_, b2) = elicit_noise_prior(0.1, 10.0, q).unwrap();
    assert!((b2 - 0.001).abs() < 1e-10);
    assert!(q > 0.9999 && q < 1.0);
    assert!(elicit_noise_prior(0.1, 10.0, 1.0).is_err());
    assert!(elicit_noise_prior(0.0, 10.0, 0.9).is_err());
}
