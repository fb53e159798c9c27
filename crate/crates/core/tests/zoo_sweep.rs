use sinkstab::diagnostics::{fit_rate_adaptive, Metric, Side, AUDIT_FLOOR, DEFAULT_BURN_IN};
use sinkstab::measure::PhiSpec;
use sinkstab::sinkhorn::{run, RunOptions};
use sinkstab::zoo::{self, check_h_delta, default_deltas, diagnose, Params, Verdict, MODEL_NAMES};

#[test]
fn h_prime_never_satisfied_where_h_is_violated() {
    let deltas = default_deltas();
    for name in MODEL_NAMES {
        let z = zoo::build(name, &Params::new()).unwrap();
        for p in diagnose(&z, &deltas).unwrap() {
            assert!(
                !(p.h_prime.verdict == Verdict::Satisfied && p.h.verdict == Verdict::Violated),
                "{name} at delta {}: H' satisfied but H violated",
                p.delta
            );
        }
    }
}

#[test]
fn every_model_has_probability_marginals() {
    for name in MODEL_NAMES {
        let z = zoo::build(name, &Params::new()).unwrap();
        assert!(z.model.lambda_u().is_probability(1e-10), "{name}");
        assert!(z.model.nu_v().is_probability(1e-10), "{name}");
    }
}

#[test]
fn weighted_tv_decays_where_h_holds() {
    for (name, delta) in [("exponential", 0.3), ("gaussian", 0.5), ("triangular", 0.4)] {
        let z = zoo::build(name, &Params::new()).unwrap();
        assert_eq!(check_h_delta(&z, delta).unwrap().verdict, Verdict::Satisfied, "{name}");
        let metric = Metric::WeightedTv(delta);
        let out =
            run(&z.model, &RunOptions { maxiter: 40, stop_tol: None, metrics: vec![metric], label: name.to_string() })
                .unwrap();
        let (fit, _) = fit_rate_adaptive(&out.trace.series(&metric.to_string(), Side::Even), DEFAULT_BURN_IN).unwrap();
        assert!(fit.rate < 1.0, "{name}: fitted rate {}", fit.rate);
    }
}

#[test]
fn triangular_divergences_shrink_by_chi_squared_per_cycle() {
    let z = zoo::build("triangular", &Params::new()).unwrap();
    let metrics = vec![Metric::Phi(PhiSpec::Kl), Metric::Phi(PhiSpec::Hellinger2), Metric::Phi(PhiSpec::Tv), Metric::Chi];
    let out = run(&z.model, &RunOptions { maxiter: 30, stop_tol: None, metrics, label: "triangular".into() }).unwrap();
    let chi = out
        .trace
        .series("chi", Side::Even)
        .into_iter()
        .chain(out.trace.series("chi", Side::Odd))
        .map(|p| p.1)
        .fold(0.0, f64::max);
    assert!(chi < 1.0);
    for name in ["KL", "Hellinger2", "TV"] {
        let s = out.trace.series(name, Side::Even);
        for w in s.windows(2) {
            if w[0].1 * chi * chi < AUDIT_FLOOR {
                break;
            }
            assert!(w[1].1 <= chi * chi * w[0].1 * (1.0 + 1e-8), "{name} at n = {}", w[1].0);
        }
    }
}
