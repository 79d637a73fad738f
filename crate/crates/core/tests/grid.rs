use oscillab::grid::{in_rk, mean_oscillation, region_rk, DyadicCube};
use oscillab::{Ball, Grid, GridFunction, MomentTable};
use proptest::prelude::*;

fn naive_sum(f: &GridFunction, b: &Ball) -> (usize, f64) {
    let g = f.grid();
    let mut n = 0;
    let mut s = 0.0;
    for k in 0..g.len() {
        let p = g.point(k);
        if b.contains(&p[..g.dim()]) {
            n += 1;
            s += f.values()[k];
        }
    }
    (n, s)
}

#[test]
fn one_dimensional_grid_has_odd_point_count() {
    let g = Grid::new(1, 32.0, 1.0 / 32.0).unwrap();
    assert_eq!(g.points_per_axis(), 2049);
    assert_eq!(g.len(), 2049);
    assert_eq!(g.coord(1024), 0.0);
    assert_eq!(g.coord(0), -32.0);
}

#[test]
fn two_dimensional_grid_is_row_major() {
    let g = Grid::new(2, 1.0, 0.5).unwrap();
    assert_eq!(g.len(), 25);
    assert_eq!(g.point(1), [-0.5, -1.0]);
    assert_eq!(g.point(5), [-1.0, -0.5]);
    assert_eq!(g.flatten(2, 3), 17);
    assert_eq!(g.unflatten(17), [2, 3]);
}

#[test]
fn ball_region_counts_match_closed_forms() {
    // Open ball of aligned radius r = m h in 1D holds 2m - 1 points.
    let g = Grid::new(1, 8.0, 0.125).unwrap();
    let r = g.ball_region(&Ball::new(&[0.0], 1.0)).unwrap();
    assert_eq!(r.count, 15);
    // 2D open disc of radius 2 cells: 1 + 4 + 4 = 9 lattice points with |z|² < 4.
    let g2 = Grid::new(2, 2.0, 0.5).unwrap();
    let r2 = g2.ball_region(&Ball::new(&[0.0, 0.0], 1.0)).unwrap();
    assert_eq!(r2.count, 9);
}

#[test]
fn balls_outside_the_box_are_rejected() {
    let g = Grid::new(1, 4.0, 0.25).unwrap();
    assert!(g.ball_region(&Ball::new(&[3.5], 1.0)).is_err());
    assert!(g.ball_region(&Ball::new(&[0.0], 0.0)).is_err());
}

#[test]
fn constant_has_zero_oscillation_and_exact_average() {
    let g = Grid::new(2, 4.0, 0.25).unwrap();
    let f = GridFunction::constant(g, 2.5);
    let b = Ball::new(&[0.5, -0.75], 1.3);
    assert_eq!(mean_oscillation(&f, &b, 2.0).unwrap(), 0.0);
    let t = MomentTable::new(&f);
    let m = t.moments(&g.ball_region(&b).unwrap());
    assert_eq!(m.mean(), 2.5);
    assert_eq!(m.variance(), 0.0);
}

#[test]
fn rk_is_half_open() {
    assert!(in_rk(&[-1.0], 1, 0));
    assert!(!in_rk(&[1.0], 1, 0));
    assert!(in_rk(&[0.999, -1.0], 2, 0));
    let g = Grid::new(2, 4.0, 0.25).unwrap();
    let cubes = region_rk(&g, 1).unwrap();
    assert_eq!(cubes.len(), 4);
    let total: usize = cubes.iter().map(|q| g.cube_region(q).unwrap().count).sum();
    // [-2, 2) with h = 1/4 holds 16 points per axis.
    assert_eq!(total, 16 * 16);
    assert!(region_rk(&g, 2).is_err());
}

#[test]
fn dyadic_cube_contains_its_lower_corner_only() {
    let q = DyadicCube::containing(1, -1, &[0.7]);
    assert_eq!(q.lower()[0], 0.5);
    assert!(q.contains(&[0.5]));
    assert!(!q.contains(&[1.0]));
    let r = DyadicCube::containing(1, -1, &[1.2]);
    assert!(q.touches(&r));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prefix_sums_match_naive_ball_sums(
        seed in prop::collection::vec(-3.0f64..3.0, 1..40),
        cx in -2.0f64..2.0,
        cy in -2.0f64..2.0,
        r in 0.05f64..1.9,
        two_d in any::<bool>(),
    ) {
        let dim = if two_d { 2 } else { 1 };
        let g = Grid::new(dim, 4.0, 0.125).unwrap();
        let f = GridFunction::from_fn(g, |x| {
            let k = ((x[0] * 8.0).round() as i64).rem_euclid(seed.len() as i64) as usize;
            seed[k] * (1.0 + x[dim - 1])
        }).unwrap();
        let b = Ball::new(&[cx, cy][..dim], r);
        let (n, s) = naive_sum(&f, &b);
        match g.ball_region(&b) {
            Ok(region) => {
                prop_assert_eq!(region.count, n);
                let fast = MomentTable::new(&f).sum(&region).to_f64();
                prop_assert!((fast - s).abs() <= 1e-12 * (1.0 + s.abs()), "{} vs {}", fast, s);
            }
            Err(_) => prop_assert_eq!(n, 0),
        }
    }

    #[test]
    fn oscillation_ignores_constants_and_scales(
        a in -5.0f64..5.0,
        c in -10.0f64..10.0,
        x0 in -2.0f64..2.0,
        r in 0.2f64..1.5,
    ) {
        let g = Grid::new(1, 4.0, 1.0 / 16.0).unwrap();
        let f = GridFunction::from_fn(g, |x| (3.0 * x[0]).sin() + x[0] * x[0]).unwrap();
        let h = f.scale(a).map(|v| v + c);
        let b = Ball::new(&[x0], r);
        let m1 = mean_oscillation(&f, &b, 2.0).unwrap();
        let m2 = mean_oscillation(&h, &b, 2.0).unwrap();
        prop_assert!((m2 - a.abs() * m1).abs() <= 1e-10 * (1.0 + m2));
    }
}
