use avglemma_core::fields::RotatedField;
use avglemma_core::transport::{
    apply_operator,     characteristics_convergence, make_pair, manufactured_density, reconstruct_from_slice, rotate_field, rotate_velocity_frame,
    spectral_ode_residual, CharacteristicsOptions, FieldRole, PairMode,
};
use avglemma_core::{catalog, Complex64, Field, ForceField, SmoothForce, SpectralKineticField, TorusGrid};
use std::sync::Arc;

fn grid(n: usize, m: usize, n_v: usize) -> TorusGrid {
    TorusGrid::new(n, m, 1.0, 8, n_v, 3.0, 1.1).unwrap()
}

fn small_modes(g: &TorusGrid, r: i64) -> Vec<Vec<i64>> {
    g.full_modes().into_iter().filter(|k| k.iter().all(|c| c.abs() <= r)).collect()
}

#[test]
fn operator_matches_analytic_derivative() {
    let g = grid(2, 1, 128);
    let (a, _) = catalog("polynomial-curve", 2, 1).unwrap();
    let w = 0.15;
    let coef = |y: &[f64]| Complex64::from_polar((-y.iter().map(|c| c * c).sum::<f64>() / 4.0).exp(), 0.7 * y[0] - 0.2 * y[2]);
    let f = SpectralKineticField::from_fn(g, small_modes(&g, 2), FieldRole::Density, |y, v| coef(y) * (-v[0] * v[0] / (2.0 * w * w)).exp())
        .unwrap();
    let force = 0.8;
    let out = apply_operator(&f, &a, &ForceField::constant(vec![force]).unwrap()).unwrap();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for (mi, k) in f.modes.iter().enumerate() {
        let y = g.frequency(k);
        for (i, got) in out.block(mi).iter().enumerate() {
            let v = g.v_node(i);
            let b = [1.0, v, v * v];
            let by: f64 = b.iter().zip(&y).map(|(p, q)| p * q).sum();
            let fv = coef(&y) * (-v * v / (2.0 * w * w)).exp();
            let want = Complex64::new(0.0, by) * fv - fv * (force * v / (w * w));
            worst = worst.max((got - want).norm());
            scale = scale.max(want.norm());
        }
    }
    assert!(worst <= 1e-9 * scale, "{worst:e} vs {scale:e}");
}

#[test]
fn source_has_no_net_velocity_mass_at_the_zero_mode() {
    let g = grid(2, 1, 128);
    let (a, force) = catalog("polynomial-curve", 2, 1).unwrap();
    let f = manufactured_density(&g, 2, 0.2).unwrap();
    let pair = make_pair(PairMode::Manufactured(f), &a, &force, &g).unwrap();
    let zero = pair.g.modes.iter().position(|k| k.iter().all(|&c| c == 0)).unwrap();
    let mass: Complex64 = pair.g.block(zero).iter().sum::<Complex64>() * g.dv();
    let scale: f64 = pair.g.block(zero).iter().map(|c| c.norm()).sum::<f64>() * g.dv();
    assert!(mass.norm() <= 1e-10 * scale.max(1.0), "{mass}");
}

#[test]
fn manufactured_round_trip_in_two_velocity_dimensions() {
    let g = TorusGrid::new(2, 2, 1.0, 8, 64, 3.0, 1.1).unwrap();
    let (a, force) = catalog("identity", 2, 2).unwrap();
    let f = manufactured_density(&g, 1, 0.2).unwrap();
    let pair = make_pair(PairMode::Manufactured(f), &a, &force, &g).unwrap();
    let slice = pair.f.slice(pair.v1_index).unwrap();
    let rec = reconstruct_from_slice(&slice, &pair.g, &*a, &[1.0, 0.0]).unwrap();
    let err = rec.relative_l2_distance(&pair.f).unwrap();
    assert!(err <= 1e-6, "{err:e}");
}

#[test]
fn random_pairs_are_linear() {
    let g = grid(2, 1, 128);
    let (a, force) = catalog("polynomial-curve", 2, 1).unwrap();
    let p = make_pair(PairMode::Random { seed: 1, cutoff: 6.0 }, &a, &force, &g).unwrap();
    let q = make_pair(PairMode::Random { seed: 2, cutoff: 6.0 }, &a, &force, &g).unwrap();
    let two = Complex64::new(2.0, -0.5);
    let f = p.f.axpy(two, &q.f).unwrap();
    let h = p.g.axpy(two, &q.g).unwrap();
    let r = spectral_ode_residual(&f, &h, &*a, &[1.0], 64).unwrap();
    assert!(r.passed, "{}", r.relative);
    let slice = f.slice(p.v1_index).unwrap();
    let rec = reconstruct_from_slice(&slice, &h, &*a, &[1.0]).unwrap();
    assert!(rec.relative_l2_distance(&f).unwrap() <= 1e-9);
}

#[test]
fn residual_is_invariant_under_a_quarter_turn_of_the_frame() {
    let g = TorusGrid::new(2, 2, 1.0, 4, 32, 3.0, 1.1).unwrap();
    let (a, _) = catalog("identity", 2, 2).unwrap();
    let force = vec![0.0, -1.5];
    let f = manufactured_density(&g, 1, 0.2).unwrap();
    let h = apply_operator(&f, &a, &ForceField::constant(force.clone()).unwrap()).unwrap();
    let r = rotate_velocity_frame(&force).unwrap();
    let fr = rotate_field(&f, &r).unwrap();
    let hr = rotate_field(&h, &r).unwrap();
    let ar: Field = Arc::new(RotatedField::new(a, r).unwrap());
    let rep = spectral_ode_residual(&fr, &hr, &*ar, &[1.5, 0.0], 27).unwrap();
    assert!(rep.passed, "{:e}", rep.relative);
    assert!((fr.l2_norm() - f.l2_norm()).abs() <= 1e-6 * f.l2_norm());
}

#[test]
fn characteristics_converge_at_fourth_order_for_an_affine_force() {
    let (a, _) = catalog("identity", 1, 1).unwrap();
    let force = SmoothForce::affine(vec![0.5], vec![vec![0.0, 1.0]], vec![vec![-0.3]]).unwrap();
    let c = characteristics_convergence(a, force, 0.0, vec![0.1], vec![0.2], 0.2, &[4, 8, 16, 32], CharacteristicsOptions::default())
        .unwrap();
    assert!(c.observed_order >= 3.5, "{}", c.observed_order);
    assert!(c.reports.iter().all(|r| r.min_jacobian > 0.0));
}
