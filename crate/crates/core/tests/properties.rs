use langevin_core::bounds::{
    relent_init_bound, sgld_second_moment_bound, spectral_gap_lower_bound, spectral_gap_lower_bound_direct,
    stability_bounds, w2_discretization_bound, BoundsInput, LambdaProvenance, Verdict,
};
use langevin_core::gibbs::{build_gibbs, Axis, GridConfig, GridMeasure};
use langevin_core::objectives::zoo::DoubleWell;
use langevin_core::sgld::{sgld_step, EmpiricalMeasure};
use langevin_core::transport::{w2_empirical, w2_grid_1d, w2_sorted_1d};
use langevin_core::{Dataset, RegularityConstants};
use proptest::prelude::*;

fn cloud(dim: usize, n: usize) -> impl Strategy<Value = EmpiricalMeasure> {
    prop::collection::vec(-3.0..3.0f64, n * dim).prop_map(move |v| EmpiricalMeasure::new(v, dim).unwrap())
}

fn w2(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> f64 {
    w2_empirical(a, b).unwrap().w2
}

fn constants() -> impl Strategy<Value = RegularityConstants> {
    (0.0..2.0f64, 0.0..2.0f64, 0.5..3.0f64, 0.1..1.0f64, 0.0..2.0f64)
        .prop_map(|(a, bg, mm, frac, b)| RegularityConstants::new(a, bg, mm, mm * frac, b).unwrap())
}

fn input(consts: RegularityConstants, d: usize, n: usize, beta: f64, delta: f64, kappa0: f64) -> BoundsInput {
    BoundsInput {
        consts,
        d,
        n,
        beta,
        delta,
        kappa0,
        log_p0_inf: 0.3,
        lambda_star: 0.5,
        lambda_provenance: LambdaProvenance::User,
        universal_c: 1.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn w2_is_a_metric_in_1d(a in cloud(1, 12), b in cloud(1, 12), c in cloud(1, 12)) {
        prop_assert_eq!(w2(&a, &a), 0.0);
        prop_assert!((w2(&a, &b) - w2(&b, &a)).abs() <= 1e-12);
        prop_assert!(w2(&a, &c) <= w2(&a, &b) + w2(&b, &c) + 1e-12);
    }

    #[test]
    fn w2_is_a_metric_in_2d(a in cloud(2, 9), b in cloud(2, 9), c in cloud(2, 9)) {
        prop_assert!(w2(&a, &a) <= 1e-12);
        prop_assert!((w2(&a, &b) - w2(&b, &a)).abs() <= 1e-9);
        prop_assert!(w2(&a, &c) <= w2(&a, &b) + w2(&b, &c) + 1e-9);
    }

    #[test]
    fn w2_of_a_translate_is_the_shift(a in cloud(2, 8), sx in -2.0..2.0f64, sy in -2.0..2.0f64) {
        let shifted: Vec<f64> = a.iter().flat_map(|p| [p[0] + sx, p[1] + sy]).collect();
        let b = EmpiricalMeasure::new(shifted, 2).unwrap();
        prop_assert!((w2(&a, &b) - (sx * sx + sy * sy).sqrt()).abs() <= 1e-9);
    }

    #[test]
    fn sorted_1d_handles_unequal_counts(mut a in prop::collection::vec(-3.0..3.0f64, 1..20), c in -1.0..1.0f64) {
        a.sort_by(f64::total_cmp);
        // Duplicating every point leaves the measure unchanged.
        let doubled: Vec<f64> = a.iter().flat_map(|&x| [x, x]).collect();
        prop_assert!(w2_sorted_1d(&a, &doubled) <= 1e-12);
        let moved: Vec<f64> = doubled.iter().map(|x| x + c).collect();
        prop_assert!((w2_sorted_1d(&a, &moved) - c.abs()).abs() <= 1e-9);
    }

    #[test]
    fn grid_w2_is_symmetric_and_zero_on_the_diagonal(s1 in 0.3..1.5f64, s2 in 0.3..1.5f64, m in -1.0..1.0f64) {
        let axis = Axis::symmetric(8.0, 801).unwrap();
        let (mu, _) = GridMeasure::from_fn(vec![axis], |w| -0.5 * (w[0] / s1).powi(2)).unwrap();
        let (nu, _) = GridMeasure::from_fn(vec![axis], |w| -0.5 * ((w[0] - m) / s2).powi(2)).unwrap();
        prop_assert!(w2_grid_1d(&mu, &mu).unwrap() <= 1e-9);
        let (ab, ba) = (w2_grid_1d(&mu, &nu).unwrap(), w2_grid_1d(&nu, &mu).unwrap());
        prop_assert!((ab - ba).abs() <= 1e-9);
        // Gaussians: W2^2 = (m1 - m2)^2 + (s1 - s2)^2.
        let exact = (m * m + (s1 - s2).powi(2)).sqrt();
        prop_assert!((ab - exact).abs() <= 1e-3, "grid {} exact {}", ab, exact);
    }

    #[test]
    fn verdicts_follow_their_definition(m in -10.0..10.0f64, pad in 0.0..5.0f64, b in -10.0..10.0f64) {
        let slack = 1e-12 * (m.abs() + b.abs());
        match Verdict::compare(m, pad, b) {
            Verdict::Holds => prop_assert!(m + pad <= b + slack),
            Verdict::Violated => prop_assert!(m - pad > b + slack),
            Verdict::Inconclusive => prop_assert!(m + pad > b + slack && m - pad <= b + slack),
            Verdict::NotApplicable => prop_assert!(false, "compare never declines"),
        }
        prop_assert_ne!(Verdict::compare(m, 0.0, b), Verdict::Inconclusive);
    }

    #[test]
    fn larger_bounds_and_smaller_pads_never_hurt(m in -10.0..10.0f64, pad in 0.0..5.0f64, b in -10.0..10.0f64, up in 0.0..5.0f64) {
        let rank = |v: Verdict| match v { Verdict::Holds => 0, Verdict::Inconclusive => 1, _ => 2 };
        prop_assert!(rank(Verdict::compare(m, pad, b + up)) <= rank(Verdict::compare(m, pad, b)));
        // A wider pad can only move a decided verdict to inconclusive.
        let wide = Verdict::compare(m, pad + up, b);
        let narrow = Verdict::compare(m, pad, b);
        prop_assert!(wide == narrow || wide == Verdict::Inconclusive);
    }

    #[test]
    fn bounds_are_pure_and_monotone(c in constants(), beta in 0.5..8.0f64, k0 in 0.0..2.0f64, n in 2usize..500) {
        let inp = input(c, 1, n, beta, 0.0, k0);
        prop_assert_eq!(relent_init_bound(&inp), relent_init_bound(&inp.clone()));
        prop_assert!(sgld_second_moment_bound(&c, k0, 1, 2.0 * beta) <= sgld_second_moment_bound(&c, k0, 1, beta));
        prop_assert!(sgld_second_moment_bound(&c, k0 + 1.0, 1, beta) > sgld_second_moment_bound(&c, k0, 1, beta));
        prop_assert!(relent_init_bound(&input(c, 1, n, beta, 0.0, k0 + 0.5)) >= relent_init_bound(&inp));

        let s = stability_bounds(&inp, 1.7);
        let s2 = stability_bounds(&input(c, 1, 2 * n, beta, 0.0, k0), 1.7);
        prop_assert!((s.w2_stability - 2.0 * s2.w2_stability).abs() <= 1e-12 * s.w2_stability);
        prop_assert!((s.uniform_stability * n as f64 - s.c3_tilde).abs() <= 1e-12 * s.c3_tilde);
    }

    #[test]
    fn discretization_bound_grows_with_time_and_noise(c in constants(), beta in 0.5..8.0f64, extra in 0u64..1000, delta in 0.0..0.5f64) {
        let eta = 0.5 * c.max_step_size();
        let k = (1.0 / eta).ceil() as u64 + extra;
        let lo = w2_discretization_bound(&input(c, 1, 10, beta, delta, 0.2), k, eta).unwrap();
        let hi = w2_discretization_bound(&input(c, 1, 10, beta, delta, 0.2), 2 * k, eta).unwrap();
        let noisy = w2_discretization_bound(&input(c, 1, 10, beta, delta + 0.25, 0.2), k, eta).unwrap();
        prop_assert!(lo >= 0.0 && hi >= lo && noisy >= lo);
        prop_assert!(w2_discretization_bound(&input(c, 1, 10, beta, delta, 0.2), k, 2.0 * c.max_step_size()).is_err());
    }

    #[test]
    fn gap_lower_bound_log_form_matches_direct(c in constants(), beta in 0.5..4.0f64) {
        let inp = input(c, 1, 10, beta, 0.0, 0.2);
        let direct = spectral_gap_lower_bound_direct(&inp);
        let lb = spectral_gap_lower_bound(&inp);
        prop_assume!(direct > 1e-300);
        prop_assert!((lb.lambda_lb / direct - 1.0).abs() <= 1e-9);
        prop_assert!((lb.log_inv_lambda_lb + direct.ln()).abs() <= 1e-9 * (1.0 + direct.ln().abs()));
    }

    #[test]
    fn grid_measures_are_normalized(coef in prop::collection::vec(-1.0..1.0f64, 4), scale in 0.1..50.0f64, res in 11usize..400) {
        let axis = Axis::symmetric(3.0, res).unwrap();
        let f = |w: &[f64]| scale * (coef[0] * w[0] + coef[1] * w[0].powi(2) + coef[2] * w[0].powi(3) - (1.0 + coef[3].abs()) * w[0].powi(4));
        let (g, _) = GridMeasure::from_fn(vec![axis], f).unwrap();
        let total: f64 = g.masses.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-10);
        prop_assert!(g.masses.iter().all(|m| *m >= 0.0));
    }

    #[test]
    fn gibbs_measures_are_normalized(gamma in 0.05..1.0f64, beta in 0.5..6.0f64, zs in prop::collection::vec(-1.0..1.0f64, 1..20)) {
        let obj = DoubleWell::new(gamma, 1.0, 1.25).unwrap();
        let data = Dataset::from_scalars(&zs).unwrap();
        let cfg = GridConfig { resolution: Some(257), check_resolution: false, ..GridConfig::default() };
        let g = build_gibbs(&obj, &data, beta, &cfg).unwrap();
        prop_assert!((g.grid.masses.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        prop_assert!(g.tail_mass_bound <= cfg.tail_tolerance);
    }

    #[test]
    fn sgld_step_is_affine(w in -5.0..5.0f64, g in -5.0..5.0f64, xi in -3.0..3.0f64, eta in 1e-4..0.1f64, beta in 0.1..10.0f64) {
        let out = sgld_step(&[w], &[g], &[xi], eta, beta).unwrap()[0];
        let expected = w - eta * g + (2.0 * eta / beta).sqrt() * xi;
        prop_assert!((out - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        prop_assert_eq!(sgld_step(&[w], &[0.0], &[0.0], eta, beta).unwrap()[0], w);
    }
}
