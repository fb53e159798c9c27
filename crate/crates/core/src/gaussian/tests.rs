use super::*;
use crate::measure::{phi_entropy, Measure};
use crate::random;
use crate::sinkhorn::{marginal_even, marginal_odd, SinkhornState};
use proptest::prelude::*;

fn unit(tau: f64) -> GaussianEOTModel {
    GaussianEOTModel::scalar(0.0, 1.0, 0.0, 1.0, 0.0, 1.0, tau).unwrap()
}

fn s(x: f64) -> Mat {
    Mat::from_element(1, 1, x)
}

#[test]
fn ricc_scalar_values() {
    let r = ricc_map(&s(1.0), &s(1.0)).unwrap();
    assert!((r[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
    let w = random::spd(&mut random::rng(3), 3, 0.2);
    let zero = ricc_map(&w, &Mat::zeros(3, 3)).unwrap();
    let expect = spd_inv(&(Mat::identity(3, 3) + spd_inv(&w).unwrap())).unwrap();
    assert!((zero - expect).amax() < 1e-14);
}

#[test]
fn ricc_rejects_indefinite_input() {
    assert!(matches!(ricc_map(&s(1.0), &s(-0.5)), Err(Error::Domain(_))));
    assert!(matches!(ricc_map(&s(-1.0), &s(0.5)), Err(Error::Domain(_))));
}

#[test]
fn ricc_is_monotone() {
    let mut rng = random::rng(11);
    for k in 0..100 {
        let d = 1 + k % 4;
        let w = random::spd(&mut rng, d, 0.1);
        let v1 = random::spd(&mut rng, d, 0.0);
        let v2 = &v1 + random::spd(&mut rng, d, 0.0);
        let (r1, r2) = (ricc_map(&w, &v1).unwrap(), ricc_map(&w, &v2).unwrap());
        assert!(lambda_min(&(&r2 - &r1)) >= -1e-12);
        let ev = r1.symmetric_eigenvalues();
        assert!(ev.min() > 0.0 && ev.max() < 1.0);
    }
}

#[test]
fn scalar_upsilon_sequence() {
    let model = unit(1.0);
    let st = flow(&model, 2).unwrap();
    let ups: Vec<f64> = st.iter().map(|s| s.upsilon[(0, 0)]).collect();
    assert!((ups[0] - 1.0).abs() < 1e-15);
    assert!((ups[1] - 0.5).abs() < 1e-15);
    assert!((ups[2] - 2.0 / 3.0).abs() < 1e-15);
    let r = ricc_map(model.varpi(), &st[0].upsilon).unwrap();
    assert!((r[(0, 0)] - ups[2]).abs() < 1e-15);
    assert!(st[2].consistency.unwrap() < 1e-15);
}

#[test]
fn consistency_on_random_models() {
    let mut rng = random::rng(5);
    for k in 0..100 {
        let model = random::gaussian_model(&mut rng, 1 + k % 5);
        for st in flow(&model, 40).unwrap().iter().skip(2) {
            assert!(st.consistency.unwrap() <= 1e-12, "model {k} step {}: {:e}", st.n, st.consistency.unwrap());
        }
    }
}

#[test]
fn upsilon_converges_geometrically() {
    let model = random::gaussian_model(&mut random::rng(8), 3);
    let st = flow(&model, 80).unwrap();
    let gaps: Vec<f64> = (1..39).map(|p| (&st[2 * p + 2].upsilon - &st[2 * p].upsilon).amax()).collect();
    for w in gaps.windows(2).skip(1) {
        if w[0] > 1e-14 {
            assert!(w[1] < 0.9 * w[0], "{gaps:?}");
        }
    }
    assert!(gaps.last().unwrap() < &1e-14);
}

#[test]
fn initial_params_are_the_reference() {
    let model = random::gaussian_model(&mut random::rng(1), 3);
    let st = sinkhorn_params(&model, 0).unwrap();
    assert_eq!(&st.beta, model.beta());
    assert!((&st.tau - model.tau()).amax() < 1e-15);
    let m0 = model.alpha() + model.beta() * model.m();
    assert!((&st.mean - m0).amax() < 1e-15);
}

#[test]
fn centered_model_keeps_zero_means() {
    let d = 2;
    let z = Vector::zeros(d);
    let model = GaussianEOTModel::new(
        z.clone(),
        random::spd(&mut random::rng(2), d, 0.5),
        z.clone(),
        random::spd(&mut random::rng(3), d, 0.5),
        z,
        Mat::identity(d, d),
        random::spd(&mut random::rng(4), d, 0.5),
    )
    .unwrap();
    for st in flow(&model, 20).unwrap() {
        assert!(st.mean.amax() < 1e-15);
    }
}

#[test]
fn marginal_matching_identities() {
    // pi_{2n-1} S_{2n} = nu_V and pi_{2n} S_{2n+1} = lambda_U
    let mut rng = random::rng(21);
    for k in 0..20 {
        let model = random::gaussian_model(&mut rng, 1 + k % 4);
        let st = flow(&model, 12).unwrap();
        for w in st.windows(2) {
            let (prev, cur) = (&w[0], &w[1]);
            let (mean_target, cov_target) =
                if cur.n % 2 == 0 { (model.m_bar(), model.sigma_bar()) } else { (model.m(), model.sigma()) };
            let cov = &cur.beta * &prev.cov * cur.beta.transpose() + &cur.tau;
            assert!((cov - cov_target).amax() < 1e-10);
            // the intercept of S_n is fixed by the target mean
            let a = mean_target - &cur.beta * &prev.mean;
            let source_mean = if cur.n % 2 == 0 { model.m() } else { model.m_bar() };
            assert!((&a + &cur.beta * source_mean - &cur.mean).amax() < 1e-12);
        }
    }
}

#[test]
fn gibbs_loop_bounds_and_fixed_point() {
    let mut rng = random::rng(13);
    for k in 0..100 {
        let model = random::gaussian_model(&mut rng, 1 + k % 5);
        let loops = gibbs_loop_flow(&model, 30).unwrap();
        let states = flow(&model, 30).unwrap();
        for g in &loops {
            assert!(g.fixed_point_residual < 1e-10, "{:e}", g.fixed_point_residual);
            if g.n >= 2 {
                assert!(g.lowner_margin.unwrap() >= -LOWNER_SLACK);
                let m = model.lowner_margin(g.n, &states[g.n].tau).unwrap().unwrap();
                assert!(m >= -LOWNER_SLACK);
            }
        }
    }
}

#[test]
fn scalar_loop_beta_is_one_minus_upsilon() {
    let model = GaussianEOTModel::scalar(0.3, 1.0, -0.2, 1.0, 0.1, 1.0, 2.5).unwrap();
    let states = flow(&model, 20).unwrap();
    for g in gibbs_loop_flow(&model, 20).unwrap().iter().filter(|g| g.n % 2 == 0) {
        assert!((g.beta[(0, 0)] - (1.0 - states[g.n].upsilon[(0, 0)])).abs() < 1e-14);
    }
}

#[test]
fn loop_beta_similarity_identity() {
    // sigmabar^{-1/2} beta°_{2n} sigmabar^{1/2} = I - upsilon_{2n}
    let model = random::gaussian_model(&mut random::rng(17), 3);
    let states = flow(&model, 10).unwrap();
    let r = spd_sqrt(model.sigma_bar()).unwrap();
    let ri = spd_inv_sqrt(model.sigma_bar()).unwrap();
    for n in [2, 4, 6, 8, 10] {
        let g = gibbs_loop_params(&model, n).unwrap();
        let lhs = &ri * &g.beta * &r;
        assert!((lhs - (Mat::identity(3, 3) - &states[n].upsilon)).amax() < 1e-12);
    }
    assert!(gibbs_loop_params(&model, 0).is_err());
}

#[test]
fn scalar_theoretical_rate() {
    let r = theoretical_rate(&unit(1.0)).unwrap();
    assert!((r.delta[(0, 0)] - 1.618034).abs() < 1e-6);
    assert!((r.rho - 0.381966).abs() < 1e-6);
}

#[test]
fn delta_dominates_fixed_point_bound() {
    let mut rng = random::rng(19);
    for k in 0..100 {
        let model = random::gaussian_model(&mut rng, 1 + k % 5);
        let r = theoretical_rate(&model).unwrap();
        assert!(r.rho > 0.0 && r.rho < 1.0);
        let d = model.dim();
        let w = model.varpi();
        let bound = w + spd_inv(&(Mat::identity(d, d) + spd_inv(w).unwrap())).unwrap();
        assert!(lambda_min(&(&r.delta - bound)) >= -1e-10);
    }
}

#[test]
fn check_cc_examples() {
    let v = check_cc(&unit(5.0), 0.3).unwrap();
    assert!(v.satisfied);
    assert!((v.kernel_margin - 0.1).abs() < 1e-14 && (v.target_margin - 0.1).abs() < 1e-14);
    let v = check_cc(&unit(2.0), 0.4).unwrap();
    assert!(!v.satisfied);
    assert!((v.margin() + 0.1).abs() < 1e-14);
    for bad in [0.0, 1.0, -0.1, f64::NAN] {
        assert!(check_cc(&unit(5.0), bad).is_err());
    }
}

#[test]
fn scalar_band_matches_closed_form() {
    // satisfied iff 1/tau < delta < 1 - 1/tau, which is nonempty iff tau > 2
    for tau in [1.5, 2.0, 2.5, 4.0, 10.0] {
        let model = unit(tau);
        let any = (1..200).any(|i| check_cc(&model, i as f64 / 200.0).unwrap().satisfied);
        assert_eq!(any, tau > 2.0 + 1e-9, "tau {tau}");
        for i in 1..100 {
            let d = i as f64 / 100.0;
            let expect = 1.0 / tau < d.min(1.0 - d);
            if (1.0 / tau - d.min(1.0 - d)).abs() > 1e-9 {
                assert_eq!(check_cc(&model, d).unwrap().satisfied, expect);
            }
        }
    }
}

#[test]
fn validation_errors() {
    let e = GaussianEOTModel::scalar(0.0, 1.0, 0.0, 1.0, 0.0, 1.0, -1.0).unwrap_err();
    assert!(e.to_string().contains("Cholesky"), "{e}");
    assert!(GaussianEOTModel::scalar(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0).is_err());
    let d = 9;
    let z = Vector::zeros(d);
    let i = Mat::identity(d, d);
    assert!(GaussianEOTModel::new(z.clone(), i.clone(), z.clone(), i.clone(), z, i.clone(), i).is_err());
    let mut ns = Mat::identity(2, 2);
    ns[(0, 1)] = 0.5;
    let z = Vector::zeros(2);
    let i = Mat::identity(2, 2);
    assert!(GaussianEOTModel::new(z.clone(), ns, z.clone(), i.clone(), z, i.clone(), i).is_err());
}

#[test]
fn gaussian_tv_frozen_values() {
    // 40-digit quadrature split at the density crossings
    let cases = [
        ((0.0, 1.0, 0.0, 1.0), 0.0),
        ((0.0, 1.0, 1.0, 1.0), 0.382_924_922_548_026_2),
        ((0.3, 0.5, -0.2, 2.0), 0.357_448_908_097_758_1),
        ((0.0, 1.0, 0.0, 1.0001), 2.419_586_267_390_230e-5),
        ((1.0, 3.0, 1.2, 0.2), 0.573_846_910_249_657_0),
    ];
    for ((m1, v1, m2, v2), expect) in cases {
        let tv = gaussian_tv(m1, v1, m2, v2).unwrap();
        assert!((tv - expect).abs() < 1e-14 + 1e-12 * expect, "{m1} {v1} {m2} {v2}: {tv} vs {expect}");
        assert!((gaussian_tv(m2, v2, m1, v1).unwrap() - tv).abs() < 1e-14);
    }
}

#[test]
fn closed_forms_match_discretized_divergences() {
    let (m1, v1, m2, v2) = (0.4, 0.8, -0.1, 1.3);
    let model = GaussianEOTModel::scalar(m1, v1, m2, v2, 0.0, 1.0, 1.0).unwrap();
    let disc = discretize(&model, &GridSpec { points: 2001, k: 14.0 }).unwrap();
    // put both densities on the same grid
    let x = disc.model.x().clone();
    let xs = x.coords_1d();
    let pot = |m: f64, v: f64| -> Vec<f64> { xs.iter().map(|t| (t - m) * (t - m) / (2.0 * v)).collect() };
    let a = Measure::gibbs(x.clone(), &pot(m1, v1)).unwrap();
    let b = Measure::gibbs(x.clone(), &pot(m2, v2)).unwrap();
    let (vm1, vs1, vm2, vs2) = (Vector::from_element(1, m1), s(v1), Vector::from_element(1, m2), s(v2));
    let kl = gaussian_kl(&vm1, &vs1, &vm2, &vs2).unwrap();
    let h2 = gaussian_hellinger2(&vm1, &vs1, &vm2, &vs2).unwrap();
    let tv = gaussian_tv(m1, v1, m2, v2).unwrap();
    assert!((kl - phi_entropy(PhiSpec::Kl, &a, &b).unwrap()).abs() < 1e-9);
    assert!((h2 - phi_entropy(PhiSpec::Hellinger2, &a, &b).unwrap()).abs() < 1e-9);
    // the kinks of |p - q| cost the grid sum O(h^2)
    assert!((tv - phi_entropy(PhiSpec::Tv, &a, &b).unwrap()).abs() < 1e-4);
}


#[test]
fn discretize_grid_and_tails() {
    let d = discretize(&unit(3.0), &GridSpec::default()).unwrap();
    assert!(d.tail_mass < 1e-14);
    assert!(d.warning.is_none());
    assert_eq!(d.model.x().len(), 801);
    assert!((d.model.x().coord(0) + 8.0).abs() < 1e-12 && (d.model.x().coord(800) - 8.0).abs() < 1e-12);
    assert!((d.model.nu_v().mass() - 1.0).abs() < 1e-10);
    let narrow = discretize(&unit(3.0), &GridSpec { points: 101, k: 4.0 }).unwrap();
    assert!(narrow.warning.is_some());
    assert!(discretize(&unit(3.0), &GridSpec { points: 800, k: 8.0 }).is_err());
    let m2 = random::gaussian_model(&mut random::rng(0), 2);
    assert!(discretize(&m2, &GridSpec::default()).is_err());
}

#[test]
fn cross_validation_centered() {
    let cv = cross_validate(&unit(3.0), &GridSpec::default(), 11).unwrap();
    // pi_0 = N(0, 4) is cut at 4 sd by the [-8, 8] grid; later marginals approach N(0, 1)
    let (m0, v0) = cv.per_cycle[0];
    assert!(m0 < 1e-12 && v0 > 3e-3 && v0 < 5e-3, "{cv:?}");
    for &(m, v) in &cv.per_cycle[1..] {
        assert!(m < 1e-3 && v < 1e-4, "{cv:?}");
    }
    assert!(cv.max_tv_gap < 2e-3, "{cv:?}");
}

#[test]
fn cross_validation_with_shifts_and_scaling() {
    let model = GaussianEOTModel::scalar(0.5, 0.7, -0.4, 1.6, 0.3, 0.8, 1.5).unwrap();
    let cv = cross_validate(&model, &GridSpec::default(), 8).unwrap();
    assert!(cv.max_mean_error < 1e-6 && cv.max_var_error < 1e-6, "{cv:?}");
    assert!(cv.max_tv_gap < 1e-5, "{cv:?}");
}

#[test]
fn reversed_model_shifts_the_flow() {
    let mut rng = random::rng(31);
    for k in 0..10 {
        let model = random::gaussian_model(&mut rng, 1 + k % 3);
        let rev = model.reversed().unwrap();
        let a = flow(&model, 21).unwrap();
        let b = flow(&rev, 20).unwrap();
        for p in 0..10 {
            assert!((&a[2 * p + 1].mean - &b[2 * p].mean).amax() < 1e-10);
            assert!((&a[2 * p + 1].cov - &b[2 * p].cov).amax() < 1e-10);
        }
    }
}

#[test]
fn reversed_scalar_matches_discretized_odd_flow() {
    let model = GaussianEOTModel::scalar(0.2, 1.0, -0.3, 1.2, 0.0, 1.0, 2.0).unwrap();
    let rev = model.reversed().unwrap();
    let disc = discretize(&model, &GridSpec::default()).unwrap().model;
    let closed = flow(&rev, 6).unwrap();
    let mut st = SinkhornState::initial(&disc);
    for p in 0..4 {
        let (mean, var) = moments_1d(&marginal_odd(&disc, &st).unwrap());
        assert!((mean - closed[2 * p].mean[0]).abs() < 1e-5);
        assert!((var - closed[2 * p].cov[(0, 0)]).abs() < 1e-5);
        let _ = marginal_even(&disc, &st).unwrap();
        st = crate::sinkhorn::step(&disc, &st).unwrap();
    }
}

#[test]
fn closed_form_trace_shapes() {
    let t = closed_form_trace(&unit(1.0), 10, &default_metrics(1)).unwrap();
    assert_eq!(t.len(), 60);
    let tv = t.series("TV", Side::Even);
    assert!(tv.windows(2).all(|w| w[1].1 <= w[0].1));
    let m3 = random::gaussian_model(&mut random::rng(4), 3);
    assert!(closed_form_trace(&m3, 5, &[Metric::Phi(PhiSpec::Tv)]).is_err());
    assert_eq!(closed_form_trace(&m3, 5, &default_metrics(3)).unwrap().len(), 20);
}

#[test]
fn fitted_rate_below_theory_for_unit_model() {
    let model = unit(1.0);
    let t = closed_form_trace(&model, 30, &default_metrics(1)).unwrap();
    let (fit, _) = crate::diagnostics::fit_rate_adaptive(&t.series("TV", Side::Even), 5).unwrap();
    let rho = theoretical_rate(&model).unwrap().rho;
    assert!(fit.rate <= rho + 0.02, "{} vs {rho}", fit.rate);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalar_upsilon_stays_in_unit_interval(tau in 0.05f64..20.0, sigma in 0.1f64..5.0, sb in 0.1f64..5.0, beta in 0.2f64..3.0) {
        let model = GaussianEOTModel::scalar(0.0, sigma, 0.0, sb, 0.0, beta, tau).unwrap();
        for st in flow(&model, 12).unwrap().iter().skip(1) {
            let u = st.upsilon[(0, 0)];
            prop_assert!(u > 0.0 && u <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn kl_and_hellinger_vanish_only_on_equal_laws(m in -2.0f64..2.0, v in 0.2f64..4.0) {
        let a = Vector::from_element(1, m);
        let sv = s(v);
        prop_assert!(gaussian_kl(&a, &sv, &a, &sv).unwrap() < 1e-15);
        prop_assert!(gaussian_hellinger2(&a, &sv, &a, &sv).unwrap() < 1e-15);
        let b = Vector::from_element(1, m + 0.1);
        prop_assert!(gaussian_kl(&a, &sv, &b, &sv).unwrap() > 0.0);
    }
}
