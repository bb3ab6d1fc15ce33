use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use super::*;
use crate::data::{OrdinalSubject, TimeGrid};
use crate::gibbs::{log_joint_density, GibbsSampler};
use crate::randdist::{chain_rng, ChainRng};
use crate::state::{DrawsMeta, StoreOptions};

fn ordinal(c: u32, rows: &[(&[f64], &[u32])]) -> OrdinalDataset<f64> {
    let subjects = rows
        .iter()
        .enumerate()
        .map(|(i, (t, y))| OrdinalSubject {
            id: format!("s{i}"),
            grid: TimeGrid::new(t.to_vec()).unwrap(),
            responses: y.to_vec(),
        })
        .collect();
    OrdinalDataset::new(c, subjects).unwrap()
}

fn toy3() -> OrdinalDataset<f64> {
    ordinal(
        3,
        &[
            (&[0.0, 1.0, 2.0, 3.0], &[1, 2, 3, 2]),
            (&[0.0, 1.0, 2.0], &[3, 3, 1]),
            (&[1.0, 2.0, 3.0], &[2, 1, 3]),
        ],
    )
}

fn priors() -> PriorConfig<f64> {
    PriorConfig {
        a_mu: 0.0,
        b_mu: 1.0,
        a_sigma: 4.0,
        b_sigma: 4.0,
        a_rho: 1.0,
        b_rho: 3.0,
        a_nu: 4.0,
        b_nu: 30.0,
        a_eps: 6.0,
        b_eps: 1.5,
    }
}

#[test]
fn four_category_membership() {
    let ds = ordinal(4, &[(&[0.0, 1.0, 2.0], &[3, 1, 4])]);
    let dec = decompose(&ds).unwrap();
    assert_eq!(dec.parts.len(), 3);
    let vals = |j: usize| -> Vec<u8> { dec.parts[j].dataset.as_ref().unwrap().subjects()[0].responses.clone() };
    // Y = 3 at index 0: 0 in 𝒟₁, 0 in 𝒟₂, 1 in 𝒟₃. Y = 1 only in 𝒟₁.
    assert_eq!(dec.parts[0].observations, vec![vec![0, 1, 2]]);
    assert_eq!(vals(0), vec![0, 1, 0]);
    assert_eq!(dec.parts[1].observations, vec![vec![0, 2]]);
    assert_eq!(vals(1), vec![0, 0]);
    assert_eq!(dec.parts[2].observations, vec![vec![0, 2]]);
    assert_eq!(vals(2), vec![1, 0]);
    assert_eq!(dec.parts[2].index_map(), vec![(0, 0), (0, 2)]);
}

#[test]
fn two_categories_match_binary_encoding() {
    let ds = ordinal(2, &[(&[0.0, 1.0], &[1, 2]), (&[0.5], &[2])]);
    let dec = decompose(&ds).unwrap();
    let bin = dec.parts[0].dataset.as_ref().unwrap();
    assert_eq!(bin.subjects()[0].responses, vec![1, 0]);
    assert_eq!(bin.subjects()[1].responses, vec![0]);
    assert_eq!(bin.pooled().times(), ds.pooled().times());
}

#[test]
fn subjects_dropping_out_of_higher_categories() {
    let dec = decompose(&toy3()).unwrap();
    // Subject 1 has Y = 3, 3, 1: in 𝒟₂ only its first two observations.
    assert_eq!(dec.parts[1].subjects, vec![0, 1, 2]);
    assert_eq!(dec.parts[1].observations[1], vec![0, 1]);
    let bin2 = dec.parts[1].dataset.as_ref().unwrap();
    assert_eq!(bin2.pooled().times(), &[0.0, 1.0, 2.0, 3.0]);
}

#[test]
fn unreachable_category_is_reported() {
    let ds = ordinal(3, &[(&[0.0, 1.0], &[1, 1])]);
    let dec = decompose(&ds).unwrap();
    assert!(dec.parts[1].dataset.is_none());
    let r = fit_ordinal(&dec, &[priors(), priors()], &SamplerConfig::new(4, 2, 1, 1), false);
    assert!(matches!(r, Err(Error::CategoryUnreachable(2))));
}

fn arb_ordinal() -> impl Strategy<Value = OrdinalDataset<f64>> {
    (2u32..6).prop_flat_map(|c| {
        prop::collection::vec(prop::collection::vec(1..=c, 1..6), 1..5).prop_map(move |ys| {
            let subjects = ys
                .into_iter()
                .enumerate()
                .map(|(i, y)| OrdinalSubject {
                    id: format!("s{i}"),
                    grid: TimeGrid::new((0..y.len()).map(|t| t as f64 + 0.5 * i as f64).collect()).unwrap(),
                    responses: y,
                })
                .collect();
            OrdinalDataset::new(c, subjects).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn round_trip_and_nesting(ds in arb_ordinal()) {
        let dec = decompose(&ds).unwrap();
        let n_obs: Vec<usize> = ds.subjects().iter().map(|s| s.responses.len()).collect();
        let back = reconstruct(&dec, &n_obs).unwrap();
        let orig: Vec<Vec<u32>> = ds.subjects().iter().map(|s| s.responses.clone()).collect();
        prop_assert_eq!(back, orig);

        let sizes: Vec<usize> = dec.parts.iter().map(CategoryData::len).collect();
        prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        let maps: Vec<std::collections::HashSet<(usize, usize)>> =
            dec.parts.iter().map(|p| p.index_map().into_iter().collect()).collect();
        for w in maps.windows(2) {
            prop_assert!(w[1].is_subset(&w[0]));
        }
        let ones: usize = dec.parts.iter().filter_map(|p| p.dataset.as_ref())
            .map(|d| d.subjects().iter().flat_map(|s| &s.responses).filter(|&&v| v == 1).count())
            .sum();
        let top = orig_count(&ds, ds.categories());
        prop_assert_eq!(ones + top, ds.n_observations());
        for (jm1, m) in maps.iter().enumerate() {
            for (i, s) in ds.subjects().iter().enumerate() {
                for (t, &y) in s.responses.iter().enumerate() {
                    prop_assert_eq!(m.contains(&(i, t)), y as usize > jm1);
                }
            }
        }
    }
}

fn orig_count(ds: &OrdinalDataset<f64>, c: u32) -> usize {
    ds.subjects().iter().flat_map(|s| &s.responses).filter(|&&y| y == c).count()
}

#[test]
fn two_category_fit_matches_binary_fit() {
    let ds = ordinal(2, &[(&[0.0, 1.0, 2.0], &[1, 2, 1]), (&[1.0, 2.0], &[2, 2])]);
    let dec = decompose(&ds).unwrap();
    let mut cfg = SamplerConfig::new(40, 10, 2, 77);
    cfg.store_latents = true;
    let ord = fit_ordinal(&dec, &[priors()], &cfg, true).unwrap();
    let bin = run_chain(dec.parts[0].dataset.as_ref().unwrap(), &priors(), &cfg).unwrap();
    assert_eq!(ord[0].columns(), bin.columns());
}

#[test]
fn parallel_and_sequential_fits_agree() {
    let dec = decompose(&toy3()).unwrap();
    let cfg = SamplerConfig::new(40, 10, 1, 5);
    let pr = [priors(), priors()];
    let a = fit_ordinal(&dec, &pr, &cfg, true).unwrap();
    let b = fit_ordinal(&dec, &pr, &cfg, false).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.columns(), y.columns());
    }
    assert_ne!(a[0].columns(), a[1].columns());
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

/// One-subject fit on `times` holding `z` and `noise_var` in every draw.
fn fixed_fit(times: &[f64], z: &[f64], noise_var: f64, copies: usize) -> PosteriorDraws<f64> {
    let mut d = PosteriorDraws::new(
        meta(),
        vec!["a".into()],
        vec![TimeGrid::new(times.to_vec()).unwrap()],
        StoreOptions::default(),
    )
    .unwrap();
    let p = times.len();
    let st = ChainState {
        latent_noisy: vec![],
        pg: vec![],
        signals: vec![DVector::from_vec(z.to_vec())],
        mu: DVector::zeros(p),
        sigma: DMatrix::identity(p, p),
        noise_var,
        mu0: 0.0,
        sigma2: 1.0,
        rho: 2.0,
        nu: 6.0,
    };
    for _ in 0..copies {
        d.push(&st);
    }
    d
}

#[test]
fn zero_signals_give_halving_probabilities() {
    let t = [0.0, 1.0, 2.0];
    let fits: Vec<_> = (0..3).map(|_| fixed_fit(&t, &[0.0; 3], 0.0, 2)).collect();
    let curves = ordinal_probability_curves(&fits, &SubjectRef::Id("a".into()), &[], &CurveOptions::default()).unwrap();
    assert_eq!(curves.len(), 4);
    let want = [0.5, 0.25, 0.125, 0.125];
    for (c, w) in curves.iter().zip(want) {
        assert!(c.mean.iter().all(|&v| v == w));
    }
}

#[test]
fn curves_sum_to_one_per_draw() {
    let t = [0.0, 1.0, 2.0];
    let fits = vec![
        fixed_fit(&t, &[0.3, -1.0, 2.0], 0.4, 3),
        fixed_fit(&[0.0, 2.0], &[-0.5, 0.7], 0.2, 3),
        fixed_fit(&t, &[1.5, 0.0, -2.0], 0.1, 3),
    ];
    let opts = CurveOptions {
        mc_inner: 50,
        keep_draws: true,
        seed: 9,
        ..Default::default()
    };
    let curves = ordinal_probability_curves(&fits, &SubjectRef::Id("a".into()), &[0.5, 1.5], &opts).unwrap();
    assert_eq!(curves[0].times, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    for s in 0..3 {
        for k in 0..5 {
            let sum: f64 = curves.iter().map(|c| c.draws.as_ref().unwrap()[s][k]).sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(curves.iter().all(|c| c.draws.as_ref().unwrap()[s][k] >= 0.0));
        }
    }
}

#[test]
fn two_category_curves_complement() {
    let fits = vec![fixed_fit(&[0.0, 1.0], &[0.8, -0.4], 0.0, 1)];
    let c = ordinal_probability_curves(&fits, &SubjectRef::Id("a".into()), &[], &CurveOptions::default()).unwrap();
    assert_eq!(c[0].mean, vec![expit(0.8), expit(-0.4)]);
    for k in 0..2 {
        assert!((c[0].mean[k] + c[1].mean[k] - 1.0).abs() < 1e-15);
    }
}

#[test]
fn mismatched_draw_counts_are_rejected() {
    let fits = vec![fixed_fit(&[0.0], &[0.0], 0.0, 2), fixed_fit(&[0.0], &[0.0], 0.0, 3)];
    let r = ordinal_probability_curves(&fits, &SubjectRef::New, &[], &CurveOptions::default());
    assert!(matches!(r, Err(Error::DimensionMismatch(_))));
}

#[test]
fn deterministic_joint_equals_product_of_marginals() {
    // σε² = 0: the two responses are independent given Z.
    let t = [0.0, 1.0];
    let za = [0.4, -0.3];
    let zb = [-1.1, 0.9];
    let fits = vec![fixed_fit(&t, &za, 0.0, 1), fixed_fit(&t, &zb, 0.0, 1)];
    let p = |z1: f64, z2: f64| [expit(z1), (1.0 - expit(z1)) * expit(z2), (1.0 - expit(z1)) * (1.0 - expit(z2))];
    let p0 = p(za[0], zb[0]);
    let p1 = p(za[1], zb[1]);
    let who = SubjectRef::Id("a".into());
    for j in 1..=3 {
        for jp in 1..=3 {
            let v = ordinal_joint_probability(&fits, &who, (0.0, 1.0), (j, jp), &CurveOptions::default()).unwrap();
            assert!((v.mean - p0[j - 1] * p1[jp - 1]).abs() < 1e-14, "{j} {jp}");
            let same = ordinal_joint_probability(&fits, &who, (1.0, 1.0), (j, jp), &CurveOptions::default()).unwrap();
            assert!((same.mean - p1[j - 1] * p1[jp - 1]).abs() < 1e-14);
        }
    }
}

#[test]
fn joint_reduces_for_two_categories() {
    let fits = vec![fixed_fit(&[0.0, 1.0], &[0.4, -0.3], 0.0, 1)];
    let v = ordinal_joint_probability(&fits, &SubjectRef::Id("a".into()), (0.0, 1.0), (1, 1), &CurveOptions::default()).unwrap();
    assert!((v.mean - expit(0.4) * expit(-0.3)).abs() < 1e-15);
}

#[test]
fn joint_sums_to_one() {
    let t = [0.0, 1.0, 2.0];
    let fits = vec![
        fixed_fit(&t, &[0.3, -1.0, 2.0], 0.4, 2),
        fixed_fit(&t, &[-0.5, 0.1, 0.7], 0.2, 2),
        fixed_fit(&t, &[1.5, 0.0, -2.0], 0.3, 2),
    ];
    let opts = CurveOptions {
        mc_inner: 10_000,
        ..Default::default()
    };
    let table = ordinal_joint_table(&fits, &SubjectRef::Id("a".into()), (2.0, 0.0), &opts).unwrap();
    for m in &table {
        let total: f64 = (1..=4).flat_map(|j| (1..=4).map(move |jp| (j, jp))).map(|(j, jp)| joint_from_moments(m, j, jp)).sum();
        assert!((total - 1.0).abs() < 5e-3, "{total}");
    }
}

/// Simulates the sequential mechanism directly: at each category both
/// responses still in play draw their continuation outcome.
fn simulate_joint(za: &[f64], zb: &[f64], noise: &[f64], same_time: bool, n: usize, rng: &mut ChainRng) -> Vec<Vec<f64>> {
    let c = za.len() + 1;
    let mut counts = vec![vec![0.0; c]; c];
    for _ in 0..n {
        let (mut ya, mut yb) = (c, c);
        for k in 0..c - 1 {
            let ea = noise[k].sqrt() * crate::randdist::std_normal(rng);
            let eb = if same_time { ea } else { noise[k].sqrt() * crate::randdist::std_normal(rng) };
            if ya == c && rng.random::<f64>() < expit(za[k] + ea) {
                ya = k + 1;
            }
            if yb == c && rng.random::<f64>() < expit(zb[k] + eb) {
                yb = k + 1;
            }
        }
        counts[ya - 1][yb - 1] += 1.0;
    }
    counts.iter().map(|r| r.iter().map(|v| v / n as f64).collect()).collect()
}

#[test]
fn joint_matches_direct_simulation() {
    let za = [0.3, -0.5, 1.0];
    let zb = [-0.8, 0.4, 0.2];
    let noise = [0.5, 0.3, 0.8];
    let mut rng = ChainRng::seed_from_u64(12);
    for &same in &[false, true] {
        let zb = if same { za } else { zb };
        let moments: Vec<PairMoments> = (0..3).map(|k| pair_moments(za[k], zb[k], noise[k], same, 200_000, &mut rng)).collect();
        let sim = simulate_joint(&za, &zb, &noise, same, 400_000, &mut rng);
        for j in 1..=4 {
            for jp in 1..=4 {
                let got = joint_from_moments(&moments, j, jp);
                assert!((got - sim[j - 1][jp - 1]).abs() < 4e-3, "same={same} {j},{jp}: {got} vs {}", sim[j - 1][jp - 1]);
            }
        }
    }
}

#[test]
fn ordinal_posterior_is_sum_of_binary_posteriors() {
    let ds = ordinal(3, &[(&[0.0, 1.0, 2.0], &[2, 3, 1]), (&[0.5, 1.0], &[3, 2])]);
    let dec = decompose(&ds).unwrap();
    let pr = [priors(), priors()];
    let mut rng = chain_rng(4);
    let states: Vec<ChainState<f64>> = dec
        .parts
        .iter()
        .zip(&pr)
        .map(|(part, p)| {
            let g = GibbsSampler::new(part.dataset.as_ref().unwrap(), p, &SamplerConfig::new(10, 1, 1, 0)).unwrap();
            let mut st = g.init_state(&mut rng).unwrap();
            for _ in 0..3 {
                g.sweep(&mut st, &mut rng, None).unwrap();
            }
            st
        })
        .collect();
    let ord = ordinal_log_joint(&ds, &dec, &pr, &states, MeanModel::Hierarchical).unwrap();
    let sum: f64 = dec
        .parts
        .iter()
        .zip(&pr)
        .zip(&states)
        .map(|((part, p), st)| log_joint_density(part.dataset.as_ref().unwrap(), p, st, MeanModel::Hierarchical).unwrap())
        .sum();
    assert!(ord.is_finite());
    assert!((ord - sum).abs() < 1e-9 * sum.abs().max(1.0), "{ord} vs {sum}");
}
