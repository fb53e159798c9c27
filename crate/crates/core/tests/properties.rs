use proptest::prelude::*;
use rand::Rng;
use sinkstab::diagnostics::{sandwich_audit, DivergenceTrace, Metric, Side};
use sinkstab::measure::{
    apply_kernel, birkhoff_coefficient, dobrushin_coefficient, hbar, hilbert_metric, jmath, total_variation, Measure,
    PhiSpec,
};
use sinkstab::random;
use sinkstab::sinkhorn::{run, RunOptions};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coefficient_chain(seed in 0u64..1_000_000, n in 1usize..9, m in 1usize..9, sparse in any::<bool>()) {
        let mut rng = random::rng(seed);
        let (x, y) = (random::space(&mut rng, n), random::space(&mut rng, m));
        let k = random::kernel(&mut rng, &x, &y, sparse);
        let eps = dobrushin_coefficient(&k).epsilon;
        let (j, h) = (jmath(&k), hbar(&k));
        prop_assert!(eps >= j - 1e-12, "eps {eps} < jmath {j}");
        prop_assert!(j >= h - 1e-12, "jmath {j} < hbar {h}");
        prop_assert!(h >= j * j - 1e-12, "hbar {h} < jmath^2 {}", j * j);
    }

    #[test]
    fn hilbert_dominates_total_variation(seed in 0u64..1_000_000, n in 1usize..12) {
        let mut rng = random::rng(seed);
        let x = random::space(&mut rng, n);
        let (a, b) = (random::probability(&mut rng, &x), random::probability(&mut rng, &x));
        let h = hilbert_metric(&a, &b).unwrap();
        let tv = total_variation(&a, &b).unwrap();
        prop_assert!(h >= 3f64.ln() * tv - 1e-12, "H {h} TV {tv}");
    }

    #[test]
    fn birkhoff_contraction(seed in 0u64..1_000_000, n in 2usize..8, m in 2usize..8) {
        let mut rng = random::rng(seed);
        let (x, y) = (random::space(&mut rng, n), random::space(&mut rng, m));
        let k = random::kernel(&mut rng, &x, &y, false);
        let c = birkhoff_coefficient(&k);
        for _ in 0..20 {
            let (a, b) = (random::probability(&mut rng, &x), random::probability(&mut rng, &x));
            let before = hilbert_metric(&a, &b).unwrap();
            let after = hilbert_metric(&apply_kernel(&a, &k).unwrap(), &apply_kernel(&b, &k).unwrap()).unwrap();
            prop_assert!(after <= c * before + 1e-10, "{after} > {c} * {before}");
        }
    }

    #[test]
    fn trace_csv_round_trip(values in proptest::collection::vec((0usize..3, any::<bool>(), 0.0f64..1e3, -300i32..300), 0..40)) {
        let mut trace = DivergenceTrace::new("random");
        let mut next = [[0usize; 2]; 3];
        for (metric, odd, mantissa, exp) in values {
            let side = if odd { Side::Odd } else { Side::Even };
            let n = &mut next[metric][odd as usize];
            let name = ["KL", "TV", "chi"][metric];
            trace.push(*n, side, name, mantissa * 10f64.powi(exp)).unwrap();
            *n += 1 + (mantissa as usize % 3);
        }
        let text = trace.to_csv_string();
        let back = DivergenceTrace::from_csv_str("random", &text).unwrap();
        prop_assert_eq!(back.records(), trace.records());
        prop_assert_eq!(back.to_csv_string(), text);
    }

    #[test]
    fn audit_catches_injected_violations(step in 0usize..10, factor in 1.05f64..3.0, outer in any::<bool>()) {
        // A trace with exact geometric decay at chi^2 per cycle sits on the bound; any
        // single-step excess of 5% or more must be flagged.
        let chi: f64 = 0.6;
        let mut even: Vec<f64> = (0..=11).map(|n| chi.powi(2 * n)).collect();
        let mut odd: Vec<f64> = (0..=11).map(|n| chi.powi(2 * n + 1)).collect();
        if outer {
            even[step + 1] = factor * chi * odd[step];
        } else {
            odd[step] = factor * chi * even[step];
        }
        let mut trace = DivergenceTrace::new("injected");
        for n in 0..=11 {
            trace.push(n, Side::Even, "KL", even[n]).unwrap();
            trace.push(n, Side::Odd, "KL", odd[n]).unwrap();
        }
        let audit = sandwich_audit(&trace, "KL", Some(chi)).unwrap();
        prop_assert!(!audit.passed());
        prop_assert!(audit.worst_ratio >= 1.05 - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn audit_passes_on_random_models(seed in 0u64..1_000_000, n in 2usize..10, m in 2usize..10) {
        let mut rng = random::rng(seed);
        let model = random::model(&mut rng, n, m, 4.0);
        let metrics = vec![
            Metric::Phi(PhiSpec::Kl),
            Metric::Phi(PhiSpec::Tv),
            Metric::Phi(PhiSpec::Hellinger2),
            Metric::Phi(PhiSpec::AlphaDiv(2.0)),
            Metric::Chi,
        ];
        let out = run(&model, &RunOptions { maxiter: 30, stop_tol: None, metrics, label: "random".into() }).unwrap();
        for name in ["KL", "TV", "Hellinger2", "alpha(2)"] {
            let audit = sandwich_audit(&out.trace, name, None).unwrap();
            prop_assert!(audit.chi < 1.0);
            prop_assert!(audit.passed(), "{name}: worst ratio {}", audit.worst_ratio);
        }
    }
}

/// Two-point measures on the pair of rows farthest apart in the projective sense.
fn two_point(x: &std::sync::Arc<sinkstab::measure::DiscreteSpace>, i: usize, j: usize, logit: f64) -> Measure {
    let p = 1.0 / (1.0 + (-logit).exp());
    let mut masses = vec![0.0; x.len()];
    masses[i] = p;
    masses[j] = 1.0 - p;
    Measure::from_masses(x.clone(), &masses).unwrap()
}

#[test]
fn birkhoff_coefficient_is_nearly_attained() {
    let mut rng = random::rng(17);
    for _ in 0..5 {
        let (x, y) = (random::space(&mut rng, 4), random::space(&mut rng, 5));
        let k = random::kernel(&mut rng, &x, &y, false);
        assert!(hbar(&k) > 0.0);
        let c = birkhoff_coefficient(&k);
        let mut best: f64 = 0.0;
        for _ in 0..10_000 {
            let i = rng.random_range(0..4);
            let j = (i + rng.random_range(1..4)) % 4;
            let s = rng.random_range(-8.0..8.0);
            let (a, b) = (two_point(&x, i, j, s), two_point(&x, i, j, s + 0.01));
            let before = hilbert_metric(&a, &b).unwrap();
            let after = hilbert_metric(&apply_kernel(&a, &k).unwrap(), &apply_kernel(&b, &k).unwrap()).unwrap();
            best = best.max(after / before);
        }
        assert!(best <= c + 1e-10 && best >= 0.95 * c, "sup {best} vs coefficient {c}");
    }
}
