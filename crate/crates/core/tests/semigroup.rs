use oscillab::semigroup::{
    extension_residual, interior_window, poisson_extension, poisson_subordinated, square_function_field, Backend,
    OperatorOptions,
};
use oscillab::tent::half_space_energy;
use oscillab::{discretize, heat, poisson, Channel, Grid, GridFunction, Potential, TLadder};
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_op(halfwidth: f64, h: f64, backend: Backend) -> oscillab::SpectralOperator {
    let g = Grid::new(1, halfwidth, h).unwrap();
    discretize(&Potential::constant(1, 1.0).unwrap(), &g, &OperatorOptions { backend, ..Default::default() }).unwrap()
}

fn random_smooth(g: Grid, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<(f64, f64, f64)> =
        (0..5).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-4.0..4.0), rng.random_range(0.3..2.0))).collect();
    GridFunction::from_fn(g, |x| terms.iter().map(|&(a, c, w)| a * (-((x[0] - c) / w).powi(2)).exp()).sum()).unwrap()
}

fn l2(f: &GridFunction) -> f64 {
    f.values().iter().map(|v| v * v).sum::<f64>() * f.grid().cell_volume()
}

#[test]
fn eigenvectors_evolve_by_exponentials() {
    let op = unit_op(4.0, 1.0 / 16.0, Backend::Dense);
    for k in [0, 3, 10] {
        let e = op.eigenvector(k).unwrap();
        let lam = op.eigenvalues()[k];
        let u = poisson(&op, &e, 0.7).unwrap();
        let w = heat(&op, &e, 0.3).unwrap();
        assert!(u.max_abs_diff(&e.scale((-0.7 * lam.sqrt()).exp())) < 1e-12);
        assert!(w.max_abs_diff(&e.scale((-0.3 * lam).exp())) < 1e-12);
    }
}

#[test]
fn discrete_unit_potential_spectrum_is_known() {
    // Dirichlet Laplacian on m interior points: (4/h²) sin²(k pi / (2(m+1))) + 1.
    let op = unit_op(2.0, 0.25, Backend::Dense);
    let m = op.interior_len();
    let h = 0.25;
    for (k, &lam) in op.eigenvalues().iter().enumerate() {
        let th = (k + 1) as f64 * std::f64::consts::PI / (2.0 * (m + 1) as f64);
        let want = 4.0 / (h * h) * th.sin().powi(2) + 1.0;
        assert!((lam - want).abs() < 1e-10 * want, "{k}: {lam} vs {want}");
    }
}

#[test]
fn poisson_of_one_is_exponential_in_the_interior() {
    let op = unit_op(40.0, 1.0 / 8.0, Backend::Sine);
    let one = GridFunction::constant(*op.grid(), 1.0);
    let (lo, hi) = interior_window(op.grid(), 1.0 / 3.0);
    for t in [0.1, 0.5, 1.0, 2.0] {
        let u = poisson(&op, &one, t).unwrap();
        let want = (-t as f64).exp();
        let worst = (lo..=hi).map(|i| (u.values()[i] - want).abs() / want).fold(0.0, f64::max);
        assert!(worst <= 1e-3, "t = {t}: relative deviation {worst}");
    }
}

#[test]
fn zero_maps_to_zero() {
    let op = unit_op(4.0, 0.125, Backend::Auto);
    let z = GridFunction::zeros(*op.grid());
    let l = TLadder::geometric(0.125, 1.0, 8).unwrap();
    let u = poisson_extension(&op, &z, &l).unwrap();
    for c in u.channels() {
        assert!(u.block(*c).unwrap().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn extension_solves_the_half_space_equation() {
    let op = unit_op(8.0, 1.0 / 16.0, Backend::Dense);
    let f = random_smooth(*op.grid(), 3);
    let l = TLadder::geometric(0.25, 2.0, 200).unwrap();
    let r = extension_residual(&op, &f, &l).unwrap();
    assert!(r.max_residual < 1e-3 * r.max_operator_term.max(1.0), "{r:?}");
}

#[test]
fn square_function_bound_holds_on_random_functions() {
    // Wide box so the test functions vanish at the Dirichlet walls.
    let op = unit_op(14.0, 1.0 / 16.0, Backend::Dense);
    let l = TLadder::geometric(1e-4, 14.0, 32).unwrap();
    for seed in 0..10 {
        let f = random_smooth(*op.grid(), seed);
        let e = half_space_energy(&square_function_field(&op, &f, &l).unwrap()).unwrap();
        assert!(e <= 0.25 * 1.02 * l2(&f), "seed {seed}: {e} vs {}", 0.25 * l2(&f));
        assert!(e >= 0.25 * 0.98 * l2(&f));
    }
}

#[test]
fn half_space_channels_are_consistent() {
    let op = unit_op(4.0, 1.0 / 16.0, Backend::Dense);
    let f = random_smooth(*op.grid(), 11);
    let l = TLadder::geometric(0.1, 1.0, 8).unwrap();
    let u = poisson_extension(&op, &f, &l).unwrap();
    let q = square_function_field(&op, &f, &l).unwrap();
    // t du/dt = -t sqrt(L) e^{-t sqrt L} f.
    for j in 0..l.len() {
        let a = u.slice(Channel::TDtU, j).unwrap();
        let b = q.slice(Channel::Square, j).unwrap();
        assert!(a.iter().zip(b).all(|(x, y)| (x + y).abs() < 1e-13));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn semigroup_law_and_subordination(seed in any::<u64>(), s in 0.05f64..1.0, t in 0.05f64..1.0) {
        let op = unit_op(4.0, 1.0 / 16.0, Backend::Dense);
        let f = random_smooth(*op.grid(), seed);
        let lhs = poisson(&op, &poisson(&op, &f, s).unwrap(), t).unwrap();
        let rhs = poisson(&op, &f, s + t).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-10);
        let sub = poisson_subordinated(&op, &f, t).unwrap();
        prop_assert!(sub.max_abs_diff(&poisson(&op, &f, t).unwrap()) <= 1e-8);
    }

    #[test]
    fn heat_is_a_contraction(seed in any::<u64>(), t in 0.01f64..2.0) {
        let op = unit_op(4.0, 1.0 / 16.0, Backend::Sine);
        let f = random_smooth(*op.grid(), seed);
        let u = heat(&op, &f, t).unwrap();
        prop_assert!(l2(&u) <= l2(&f) * (-2.0 * t).exp() * (1.0 + 1e-12));
    }
}
