use avglemma_core::oscillatory::{corollary_bound, integrate};
use avglemma_core::sobolev::{chi, m0_eval, weighted_energy, ShellSpectrum};
use avglemma_core::sublevel::{measure, uniform_sum_cdf, SublevelQuery, SublevelSweep};
use avglemma_core::transport::rotate_velocity_frame;
use avglemma_core::{catalog, Amplitude, Complex64, Direction, OscillatorySpec, PhaseFunction, SphereSampler};
use proptest::prelude::*;

fn spectrum() -> impl Strategy<Value = (Vec<f64>, Vec<Complex64>)> {
    proptest::collection::vec((0.0f64..300.0, -1.0f64..1.0, -1.0f64..1.0), 1..60)
        .prop_map(|v| (v.iter().map(|t| t.0).collect(), v.iter().map(|t| Complex64::new(t.1, t.2)).collect()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn uniform_sum_cdf_is_a_symmetric_distribution(widths in proptest::collection::vec(0.01f64..2.0, 1..5), t in -3.0f64..3.0, dt in 0.0f64..1.0) {
        let p = uniform_sum_cdf(t, &widths);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(uniform_sum_cdf(t + dt, &widths) >= p - 1e-12);
        prop_assert!((p + uniform_sum_cdf(-t, &widths) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn interval_measure_grows_with_epsilon(c in proptest::collection::vec(-2.0f64..2.0, 2..5), e in 1e-4f64..0.5, f in 1.0f64..4.0) {
        let phi = PhaseFunction::polynomial(c, (-1.0, 1.0));
        let small = measure(&SublevelQuery::new(phi.clone(), e, -1.0, 1.0).unwrap()).unwrap();
        let large = measure(&SublevelQuery::new(phi, e * f, -1.0, 1.0).unwrap()).unwrap();
        prop_assert!((0.0..=2.0 + 1e-12).contains(&small));
        prop_assert!(large >= small - 1e-12);
    }

    #[test]
    fn linear_phase_measure_is_exact(c0 in -0.5f64..0.5, c1 in 0.5f64..3.0, e in 1e-5f64..0.2) {
        let phi = PhaseFunction::polynomial(vec![c0, c1], (-1.0, 1.0));
        let got = measure(&SublevelQuery::new(phi, e, -1.0, 1.0).unwrap()).unwrap();
        let lo = ((-e - c0) / c1).max(-1.0);
        let hi = ((e - c0) / c1).min(1.0);
        prop_assert!((got - (hi - lo).max(0.0)).abs() <= 1e-12);
    }

    #[test]
    fn sweep_measures_grow_with_epsilon(i in 0usize..64, e in 1e-4f64..0.3) {
        let (a, _) = catalog("identity", 2, 2).unwrap();
        let sweep = SublevelSweep::new(&*a, 1.0).unwrap();
        let sigma = &SphereSampler::new(3, 64).points()[i];
        let m = sweep.measures(sigma, &[e, 2.0 * e, 4.0 * e]);
        prop_assert!(m[0] <= m[1] + 1e-12 && m[1] <= m[2] + 1e-12);
        prop_assert!(m[2] <= 4.0 + 1e-12);
    }

    #[test]
    fn weighted_energy_grows_with_the_exponent((r, v) in spectrum(), s in 0.0f64..3.0, ds in 0.0f64..2.0) {
        let a = weighted_energy(&r, &v, s, 1.0).unwrap();
        let b = weighted_energy(&r, &v, s + ds, 1.0).unwrap();
        prop_assert!(b >= a * (1.0 - 1e-12));
        let plain: f64 = v.iter().map(|c| c.norm_sqr()).sum();
        prop_assert!(a >= plain * (1.0 - 1e-12));
    }

    #[test]
    fn shell_energies_add_up((r, v) in spectrum()) {
        let s = ShellSpectrum::new(&r, &v).unwrap();
        let sum: f64 = s.energies.iter().sum::<f64>() + s.core;
        prop_assert!((sum - s.total).abs() <= 1e-12 * s.total.max(1.0));
        prop_assert_eq!(s.counts.iter().sum::<usize>(), r.iter().filter(|&&x| x >= 1.0).count());
    }

    #[test]
    fn cutoff_and_multiplier_are_even(y in -3.0f64..3.0) {
        prop_assert!((0.0..=1.0).contains(&chi(y)));
        prop_assert_eq!(chi(y), chi(-y));
        prop_assert!((m0_eval(y) - m0_eval(-y)).norm() <= 1e-15 * m0_eval(y).norm().max(1.0));
        prop_assert!(m0_eval(y).re == 0.0);
    }

    #[test]
    fn normalized_directions_are_unit(c in proptest::collection::vec(-5.0f64..5.0, 2..6)) {
        prop_assume!(c.iter().map(|x| x * x).sum::<f64>() > 1e-6);
        let d = Direction::normalize(&c).unwrap();
        let n: f64 = d.components().iter().map(|x| x * x).sum();
        prop_assert!((n - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn frame_rotation_is_orthogonal_and_aligns_the_force(f in proptest::collection::vec(-3.0f64..3.0, 1..5)) {
        let norm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        let r = rotate_velocity_frame(&f).unwrap();
        let m = f.len();
        for i in 0..m {
            let img: f64 = (0..m).map(|j| r[i][j] * f[j]).sum();
            let want = if i == 0 { norm } else { 0.0 };
            prop_assert!((img - want).abs() <= 1e-12 * norm.max(1.0));
            for j in 0..m {
                let g: f64 = (0..m).map(|k| r[i][k] * r[j][k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((g - want).abs() <= 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn monomial_integrals_respect_the_decay_bound(k in 2usize..4, scale in 0.5f64..3.0, log_lambda in 0.0f64..4.0) {
        let lambda = 10f64.powf(log_lambda);
        let phi = PhaseFunction::monomial(k, scale, (0.0, 1.0));
        let spec = OscillatorySpec::new(Amplitude::constant(1.0), phi.clone(), (0.0, 1.0), lambda).unwrap();
        let value = integrate(&spec).unwrap().norm();
        let delta = scale * (1..=k).product::<usize>() as f64;
        let bound = corollary_bound(k, delta, (0.0, 1.0), lambda, &phi).unwrap();
        prop_assert!(value <= bound, "{value} > {bound}");
        prop_assert!(value <= 1.0 + 1e-9);
    }
}
