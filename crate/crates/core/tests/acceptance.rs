//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Tolerances are pinned here and
//! do not depend on the tolerances written in the configuration files. The
//! process exits with status 1 when any criterion fails.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use oscillab::approx::{
    approx_distance, assign_cubes, bump, choose_thresholds, mollify, p1_p2_check, uchiyama_average, CubeFamily,
    ThresholdConfig,
};
use oscillab::experiments::{run, Bundle, ExperimentConfig};
use oscillab::grid::{ball_average, mean_oscillation, region_rk};
use oscillab::oscillation::{gamma_curves, log_bound_check, tilde_bmo_l_norm};
use oscillab::potential::{almost_monotonicity_check, rh_constant, rh_ratio, slow_variation_fit, SlowVariationOptions};
use oscillab::semigroup::{
    heat_kernel_deficit, interior_window, poisson_extension, poisson_one_deficit, poisson_subordinated,
    square_function_field, Backend, OperatorOptions,
};
use oscillab::tent::{
    beta_curves, carleson_box, carleson_scan, cone_square_function, delta_k, eta_curves, exact_tent_box, half_space_energy, hmo_norm,
    key_inequality_ratio, reproducing_pairing_check, sigma_k, t2p_norm, TentExponent,
};
use oscillab::{
    bmo_l_norm, bmo_norm, bucketed_sup, critical_radius, discretize, heat, poisson, tilde_gamma_curves,
    vanishing_verdict, Ball, BallFamily, Channel, CriticalRadiusField, CurveMode, FamilyPolicy, Grid, GridFunction,
    HalfSpaceFunction, LimitCurve, Potential, RhoOptions, SpectralOperator, TLadder, Verdict,
};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<(bool, String), String>;

struct Suite {
    failed: usize,
}

impl Suite {
    fn criterion(&mut self, id: u32, title: &str, body: impl FnOnce() -> Outcome) {
        let t0 = Instant::now();
        let (pass, detail) = match body() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            self.failed += 1;
        }
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{tag} [{id:>2}] {title} ({:.1} s): {detail}", t0.elapsed().as_secs_f64());
    }
}

fn e<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Run the scenarios `ids` of a committed configuration file.
fn scenarios(file: &str, ids: &[&str]) -> Result<Bundle, String> {
    let text = e(std::fs::read_to_string(configs().join(file)))?;
    let mut cfg = e(ExperimentConfig::from_json(&text))?;
    cfg.scenarios.retain(|s| ids.iter().any(|id| s["id"] == *id));
    if cfg.scenarios.len() != ids.len() {
        return Err(format!("{file} lacks some of {ids:?}"));
    }
    e(run(&cfg))
}

fn summary<'a>(b: &'a Bundle, id: &str) -> &'a Value {
    &b.scenarios.iter().find(|s| s.id == id).expect("scenario ran").summary
}

fn unit_op(halfwidth: f64, h: f64, backend: Backend) -> Result<SpectralOperator, String> {
    let g = e(Grid::new(1, halfwidth, h))?;
    e(discretize(&e(Potential::constant(1, 1.0))?, &g, &OperatorOptions { backend, ..Default::default() }))
}

/// Sum of five random Gaussians.
fn random_smooth(g: Grid, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<(f64, f64, f64)> =
        (0..5).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-4.0..4.0), rng.random_range(0.3..2.0))).collect();
    GridFunction::from_fn(g, |x| terms.iter().map(|&(a, c, w)| a * (-((x[0] - c) / w).powi(2)).exp()).sum()).unwrap()
}

fn l2(f: &GridFunction) -> f64 {
    f.values().iter().map(|v| v * v).sum::<f64>() * f.grid().cell_volume()
}

fn within(elapsed: Duration, secs: f64) -> bool {
    elapsed.as_secs_f64() < secs
}

fn c1() -> Outcome {
    let t0 = Instant::now();
    let opts = RhoOptions::default();
    let r1 = e(critical_radius(&e(Potential::constant(1, 1.0))?, &[0.0], &opts))?.rho.finite().ok_or("rho infinite")?;
    let r2 =
        e(critical_radius(&e(Potential::constant(2, 1.0))?, &[0.0, 0.0], &opts))?.rho.finite().ok_or("rho infinite")?;
    let d1 = (r1 - 0.5f64.sqrt()).abs();
    let d2 = (r2 - 1.0 / PI.sqrt()).abs();
    let dt = t0.elapsed();
    Ok((d1 <= 1e-6 && d2 <= 1e-6 && within(dt, 1.0), format!("|n=1 error| {d1:.2e}, |n=2 error| {d2:.2e} (tol 1e-6)")))
}

fn c2() -> Outcome {
    let t0 = Instant::now();
    let b = scenarios("shen_rho.json", &["shen_n3", "shen_n1"])?;
    let mut ok = within(t0.elapsed(), 10.0);
    let mut parts = Vec::new();
    for id in ["shen_n3", "shen_n1"] {
        let s = summary(&b, id);
        let slope = s["slope"].as_f64().ok_or("no slope")?;
        let want = s["expected_slope"].as_f64().ok_or("no expected slope")?;
        let range = (s["r_range"][0].as_f64(), s["r_range"][1].as_f64());
        ok &= (slope - want).abs() <= 0.05 * want && range == (Some(1e2), Some(1e4));
        parts.push(format!("{id} slope {slope:.5} vs {want}"));
    }
    Ok((ok, format!("{} (tol 5%, |x| in [1e2, 1e4])", parts.join(", "))))
}

fn c3() -> Outcome {
    let t0 = Instant::now();
    let op = unit_op(32.0, 1.0 / 32.0, Backend::Dense)?;
    let (mut sub, mut law) = (0.0f64, 0.0f64);
    for seed in 0..5 {
        let f = random_smooth(*op.grid(), 100 + seed);
        for t in [0.1, 1.0] {
            let p = e(poisson(&op, &f, t))?;
            sub = sub.max(p.max_abs_diff(&e(poisson_subordinated(&op, &f, t))?));
            for s in [0.1, 1.0] {
                law = law.max(e(poisson(&op, &p, s))?.max_abs_diff(&e(poisson(&op, &f, s + t))?));
            }
        }
    }
    let dt = t0.elapsed();
    Ok((
        sub <= 1e-8 && law <= 1e-10 && within(dt, 30.0),
        format!("N = {}, subordination {sub:.2e} (tol 1e-8), semigroup law {law:.2e} (tol 1e-10)", op.grid().len()),
    ))
}

fn c4() -> Outcome {
    let op = unit_op(40.0, 1.0 / 8.0, Backend::Sine)?;
    let one = GridFunction::constant(*op.grid(), 1.0);
    let (lo, hi) = interior_window(op.grid(), 1.0 / 3.0);
    let mut worst = 0.0f64;
    for k in 0..=12 {
        let t = 0.1 * 20f64.powf(k as f64 / 12.0);
        let u = e(poisson(&op, &one, t))?;
        let want = (-t).exp();
        worst = worst.max((lo..=hi).map(|i| (u.values()[i] - want).abs() / want).fold(0.0, f64::max));
    }
    Ok((worst <= 1e-3, format!("max relative deviation {worst:.2e} on 13 times in [0.1, 2] (tol 1e-3)")))
}

fn c5() -> Outcome {
    let op = unit_op(14.0, 1.0 / 16.0, Backend::Dense)?;
    let l = e(TLadder::geometric(1e-4, 14.0, 32))?;
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let f = random_smooth(*op.grid(), 200 + seed);
        let energy = e(half_space_energy(&e(square_function_field(&op, &f, &l))?))?;
        worst = worst.max(energy / (0.25 * l2(&f)));
    }
    Ok((worst <= 1.02, format!("max ladder sum / (||f||²/4) = {worst:.5} over 10 functions (bound 1.02)")))
}

fn c6() -> Outcome {
    let b = scenarios("pairing.json", &["pairing_gaussian", "pairing_eigenvectors"])?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (id, tol) in [("pairing_gaussian", 0.02), ("pairing_eigenvectors", 0.01)] {
        for p in summary(&b, id)["pairs"].as_array().ok_or("no pairs")? {
            let err = p["report"]["error"].as_f64().ok_or("no error")?;
            ok &= err <= tol;
            parts.push(format!("{}/{} {err:.2e}", p["f"].as_str().unwrap_or("?"), p["g"].as_str().unwrap_or("?")));
        }
    }
    Ok((ok, format!("{} (tol 2% Gaussian, 1% eigenvectors)", parts.join(", "))))
}

fn c7() -> Outcome {
    let b = scenarios("corpus.json", &["theorem_b_corpus"])?;
    let members = summary(&b, "theorem_b_corpus")["members"].as_array().ok_or("no members")?.clone();
    let mut ratios = Vec::new();
    let mut ok = members.len() == 10;
    for m in &members {
        if m["bmo_l_norm"].as_f64() == Some(0.0) {
            continue;
        }
        match m["ratio"].as_f64() {
            Some(r) if r.is_finite() && r > 0.0 => ratios.push(r),
            _ => ok = false,
        }
    }
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    let span = (hi / lo).log10();
    ok &= span < 2.0;
    Ok((ok, format!("{} finite ratios in [{lo:.4}, {hi:.4}], span {span:.3} decades (bound 2)", ratios.len())))
}

fn c8() -> Outcome {
    let b = scenarios("key_inequality.json", &["key_inequality"])?;
    let s = summary(&b, "key_inequality");
    let (sup, fine) = (s["sup_ratio"].as_f64(), s["refined_sup_ratio"].as_f64());
    let (Some(sup), Some(fine)) = (sup, fine) else {
        return Ok((false, format!("sup ratio not finite: {} / {}", s["sup_ratio"], s["refined_sup_ratio"])));
    };
    let change = (fine / sup - 1.0).abs();
    let setup_ok = s["balls"] == 50 && s["k_max"] == 8;
    Ok((
        setup_ok && change <= 0.2,
        format!("sup {sup:.5} -> {fine:.5} under h -> h/2, change {change:.3} (bound 0.2), 50 balls, k_max 8"),
    ))
}

fn c9() -> Outcome {
    let t0 = Instant::now();
    let b = scenarios("remark44.json", &["remark44"])?;
    let dt = t0.elapsed();
    let s = summary(&b, "remark44");
    let v = s["verdicts"].as_array().ok_or("no verdicts")?;
    let verdict = |i: usize| v[i]["verdict"].as_str().unwrap_or("?").to_string();
    let norm = s["bmo_l_norm"].as_f64().ok_or("no norm")?;
    let tol_ok = v.iter().all(|c| (c["tolerance"].as_f64().unwrap_or(0.0) - 0.05 * norm).abs() <= 1e-12 * norm);
    let g3 = v[2]["terminal"].as_f64().unwrap_or(0.0);
    let floor = 0.3 * s["phi_mean_oscillation"].as_f64().ok_or("no phi oscillation")?;
    let balls = s["family_size"].as_u64().unwrap_or(0);
    let ok = verdict(0) == "VANISHING"
        && verdict(4) == "VANISHING"
        && verdict(2) == "NON_VANISHING"
        && g3 >= floor
        && tol_ok
        && s["k_max"] == 8
        && balls >= 100_000
        && within(dt, 120.0);
    let g5 = &v[4];
    Ok((
        ok,
        format!(
            "gamma~1 {}, gamma~3 {} (terminal {g3:.4} vs floor {floor:.4}), gamma~5 {} (first {:.4}, terminal {:.4}, tol {:.4}), {balls} balls",
            verdict(0),
            verdict(2),
            verdict(4),
            g5["first"].as_f64().unwrap_or(f64::NAN),
            g5["terminal"].as_f64().unwrap_or(f64::NAN),
            g5["tolerance"].as_f64().unwrap_or(f64::NAN),
        ),
    ))
}

fn c10() -> Outcome {
    let b = scenarios("uchiyama.json", &["uchiyama_narrow_bump"])?;
    let s = summary(&b, "uchiyama_narrow_bump");
    let eps = s["eps"].as_f64().ok_or("no eps")?;
    let norm = s["bmo_l_norm"].as_f64().ok_or("no norm")?;
    if (eps - 0.1 * norm).abs() > 1e-12 * norm {
        return Ok((false, format!("eps {eps} is not 0.1 ||f||_BMO_L = {}", 0.1 * norm)));
    }
    if let Some(m) = s["threshold_error"].as_str() {
        return Ok((false, format!("choose_thresholds failed: {m}")));
    }
    let p12 = s["p1_p2"]["p1_pass"] == true && s["p1_p2"]["p2_pass"] == true;
    let residual = s["bmo_residual"]["value"].as_f64().unwrap_or(f64::INFINITY);
    let pipe = s["pipeline"]["distance"]["bmo_part"]["value"].as_f64().unwrap_or(f64::INFINITY);
    let pipe = pipe.max(s["pipeline"]["distance"]["supercritical_part"]["value"].as_f64().unwrap_or(0.0));
    Ok((
        p12 && residual <= 25.0 * eps && pipe <= 25.0 * eps,
        format!("P1/P2 {p12}, residual {residual:.3e}, pipeline {pipe:.3e}, bound 25 eps = {:.3e}", 25.0 * eps),
    ))
}

fn c11() -> Outcome {
    let b = scenarios("corpus.json", &["mollifier_corpus"])?;
    let s = summary(&b, "mollifier_corpus");
    if s["scales"] != serde_json::json!([0.5, 0.25, 0.125, 0.0625]) {
        return Ok((false, format!("unexpected scales {}", s["scales"])));
    }
    let mut asserted = 0;
    let mut bad = Vec::new();
    for m in s["members"].as_array().ok_or("no members")? {
        if m["continuous_nonconstant"] != true {
            continue;
        }
        asserted += 1;
        let d: Vec<f64> = m["distances"].as_array().unwrap().iter().map(|r| r[1].as_f64().unwrap()).collect();
        let norm = m["bmo_norm"].as_f64().unwrap();
        if !(d.windows(2).all(|w| w[1] < w[0]) && d[d.len() - 1] <= 0.05 * norm) {
            bad.push(m["name"].as_str().unwrap().to_string());
        }
    }
    Ok((
        bad.is_empty() && asserted > 0,
        format!("{asserted} continuous members strictly decreasing with terminal <= 0.05 ||f||_BMO; failures {bad:?}"),
    ))
}

fn c12() -> Outcome {
    let b = scenarios("theorem_a.json", &["theorem_a_unambiguous"])?;
    let s = summary(&b, "theorem_a_unambiguous");
    let mut ok = true;
    let mut parts = Vec::new();
    let mut note = String::new();
    for m in s["members"].as_array().ok_or("no members")? {
        let name = m["name"].as_str().unwrap_or("?");
        let (bo, go) = (m["beta_overall"].as_str().unwrap_or("?"), m["gamma_tilde_overall"].as_str().unwrap_or("?"));
        let decided = |v: &str| v == "VANISHING" || v == "NON_VANISHING";
        ok &= bo == go && decided(bo);
        if m["bmo_l_norm"].as_f64().unwrap_or(0.0) > 0.0 {
            ok &= m["ratio"].as_f64().is_some_and(f64::is_finite);
        }
        parts.push(format!("{name} beta {bo} / gamma~ {go}"));
        if name.contains("bump") && bo != "VANISHING" {
            note = format!("; note: {name} is {bo} on both sides, not the VANISHING of the infinite-domain limit");
        }
    }
    Ok((ok, format!("{}; HMO_L/BMO_L ratios finite{note}", parts.join(", "))))
}

fn c13() -> Outcome {
    let mut checks: Vec<(&str, bool)> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(13);

    // Prefix-sum ball sums against a naive loop.
    let mut worst = 0.0f64;
    for dim in [1, 2] {
        let g = e(Grid::new(dim, 4.0, 1.0 / 16.0))?;
        let v: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = e(GridFunction::new(g, v))?;
        for _ in 0..40 {
            let r = rng.random_range(0.1..1.5);
            let c = [g.snap(rng.random_range(-2.0..2.0)), g.snap(rng.random_range(-2.0..2.0))];
            let b = Ball::new(&c[..dim], r);
            let (mut s, mut n) = (0.0, 0usize);
            for k in 0..g.len() {
                if b.contains(&g.point(k)[..dim]) {
                    s += f.values()[k];
                    n += 1;
                }
            }
            worst = worst.max((e(ball_average(&f, &b))? - s / n as f64).abs());
        }
    }
    checks.push(("prefix sums match naive sums", worst <= 1e-12));

    // Cylinder boxes dominate exact tents on nonnegative fields.
    let g = e(Grid::new(1, 8.0, 1.0 / 16.0))?;
    let l = e(TLadder::geometric(1.0 / 16.0, 4.0, 16))?;
    let mut dominated = true;
    for _ in 0..10 {
        let (a, w) = (rng.random_range(0.0..2.0), rng.random_range(0.5..3.0));
        let field = e(HalfSpaceFunction::from_fn(g, l.clone(), Channel::Custom(0), |x, t| a + (x[0] * w + t).sin().abs()))?;
        let b = Ball::new(&[g.snap(rng.random_range(-3.0..3.0))], g.snap(rng.random_range(0.25..4.0)).max(0.25));
        dominated &= e(carleson_box(&field, &b))? >= e(exact_tent_box(&field, &b))?;
    }
    checks.push(("cylinder >= exact tent", dominated));

    trivial_grid(&mut checks)?;
    trivial_potential(&mut checks)?;
    trivial_semigroup(&mut checks)?;
    trivial_oscillation(&mut checks)?;
    trivial_tent(&mut checks)?;
    trivial_approx(&mut checks)?;
    trivial_experiments(&mut checks)?;

    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Ok((failed.is_empty(), format!("{} of {} checks pass; failures {failed:?}", checks.len() - failed.len(), checks.len())))
}

fn trivial_grid(checks: &mut Vec<(&'static str, bool)>) -> Result<(), String> {
    let g = e(Grid::new(1, 4.0, 1.0 / 16.0))?;
    let five = GridFunction::constant(g, 5.0);
    checks.push(("ball_average of 5 is 5", e(ball_average(&five, &Ball::new(&[0.5], 1.25)))? == 5.0));
    let odd = e(GridFunction::from_fn(g, |x| x[0] * x[0] * x[0] - x[0].sin()))?;
    checks.push(("odd function averages to 0", e(ball_average(&odd, &Ball::new(&[0.0], 1.5)))?.abs() <= 1e-12));
    checks.push(("constant has zero oscillation", e(mean_oscillation(&five, &Ball::new(&[1.0], 2.0), 2.0))? == 0.0));

    let r0 = e(region_rk(&e(Grid::new(1, 2.0, 0.25))?, 0))?;
    let mut lows: Vec<f64> = r0.iter().map(|q| q.lower()[0]).collect();
    lows.sort_by(f64::total_cmp);
    checks.push(("R_0 is [-1, 0) and [0, 1)", lows == [-1.0, 0.0] && r0.iter().all(|q| q.side() == 1.0)));
    let r3 = e(region_rk(&e(Grid::new(1, 16.0, 0.25))?, 3))?;
    let lo = r3.iter().map(|q| q.lower()[0]).fold(f64::INFINITY, f64::min);
    checks.push(("R_3 has length 16", r3.iter().map(|q| q.side()).sum::<f64>() == 16.0 && lo == -8.0));

    let g8 = e(Grid::new(1, 8.0, 0.25))?;
    checks.push(("stride X gives one ball", e(BallFamily::new(&g8, &FamilyPolicy::list(8.0, vec![1.0])))?.len() == 1));
    checks.push(("radius above X/2 is rejected", BallFamily::new(&g8, &FamilyPolicy::list(1.0, vec![5.0])).is_err()));

    let fam = e(BallFamily::new(&g8, &FamilyPolicy::list(1.0, vec![1.0, 2.0]).with_ladder(vec![1.0, 2.0, 100.0])))?;
    let zeros = vec![0.0; fam.len()];
    let c = e(bucketed_sup(&zeros, &fam, CurveMode::SmallRadius, None))?;
    checks.push(("zero metric gives zero curve", c.values.iter().flatten().all(|&v| v == 0.0)));
    let far = e(bucketed_sup(&zeros, &fam, CurveMode::FarFromOrigin, None))?;
    checks.push(("far bucket beyond X is absent", far.values.last() == Some(&None)));
    Ok(())
}

fn trivial_potential(checks: &mut Vec<(&'static str, bool)>) -> Result<(), String> {
    let zero = e(Potential::zero(1))?;
    let one = e(Potential::constant(1, 1.0))?;
    checks.push((
        "V = 0 has zero mass",
        [0.1, 1.0, 10.0].iter().all(|&r| zero.normalized_mass(&[0.3], r).ok() == Some(0.0)),
    ));
    let b = Ball::new(&[0.5], 1.5);
    checks.push((
        "rh_ratio of V = 1 is 1",
        [1.5, 2.0, 4.0].iter().all(|&q| rh_ratio(&one, &b, q).is_ok_and(|v| (v - 1.0).abs() <= 1e-12)),
    ));
    checks.push(("rh_ratio of V = 0 is an error", rh_ratio(&zero, &b, 2.0).is_err()));
    let g = e(Grid::new(1, 8.0, 0.125))?;
    let fam = e(BallFamily::new(&g, &FamilyPolicy::geometric(0.5, 2.0, 2.0)))?;
    let c = e(rh_constant(&e(Potential::constant(1, 3.0))?, 2.0, &fam))?.value;
    checks.push(("rh_constant of V = 3 is 1", (c - 1.0).abs() <= 1e-12));
    let r = e(almost_monotonicity_check(&one, &[0.0], &[(1.0 - 1e-9, 1.0)], 2.0))?;
    checks.push(("almost monotonicity ratio -> 1", (r - 1.0).abs() <= 1e-6));

    let rho1 = e(CriticalRadiusField::compute(&one, &g, &RhoOptions::default()))?;
    let pairs: Vec<(usize, usize)> = (0..g.len()).step_by(7).map(|i| (i, (i * 5 + 3) % g.len())).collect();
    let fit = e(slow_variation_fit(&rho1, &pairs, &SlowVariationOptions::default()))?;
    checks.push(("constant rho fits c = 1, k0 = 1", fit.c <= 1.0 + 1e-6 && fit.k0 == 1));
    let gs = e(Grid::new(1, 64.0, 0.5))?;
    let rhos = e(CriticalRadiusField::compute(&e(Potential::shen(1, 1.5))?, &gs, &RhoOptions::default()))?;
    let diag: Vec<(usize, usize)> = (0..gs.len()).step_by(5).map(|i| (i, i)).collect();
    let fit = e(slow_variation_fit(&rhos, &diag, &SlowVariationOptions::default()))?;
    checks.push(("x = y pairs fit with c = 1", fit.c <= 1.0 + 1e-6));
    Ok(())
}

fn trivial_semigroup(checks: &mut Vec<(&'static str, bool)>) -> Result<(), String> {
    let g = e(Grid::new(1, 4.0, 1.0 / 16.0))?;
    let dense = OperatorOptions { backend: Backend::Dense, ..Default::default() };
    let op0 = e(discretize(&e(Potential::zero(1))?, &g, &dense))?;
    let op = e(discretize(&e(Potential::constant(1, 1.0))?, &g, &dense))?;
    let shift = op.eigenvalues().iter().zip(op0.eigenvalues()).all(|(a, b)| (a - b - 1.0).abs() <= 1e-9 * a);
    checks.push(("V = 1 shifts the spectrum by 1", shift));
    checks.push(("eigenvectors are orthonormal", op.orthonormality_defect() <= 1e-10));

    // The two wall points carry the Dirichlet condition, so f is compared on
    // the interior.
    let f = random_smooth(g, 7);
    let inner = |u: &GridFunction| {
        let n = g.len();
        u.values()[1..n - 1].iter().zip(&f.values()[1..n - 1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    checks.push(("psi = 1 reproduces f", inner(&e(op.apply_spectral(|_| 1.0, &f))?) <= 1e-10));
    checks.push(("psi = exp(-0 s) is the identity", inner(&e(op.apply_spectral(|s| (-0.0 * s).exp(), &f))?) <= 1e-10));
    checks.push(("heat at t = 0 is f", inner(&e(heat(&op, &f, 0.0))?) <= 1e-10));
    checks.push(("poisson at t = 0 is f", inner(&e(poisson(&op, &f, 0.0))?) <= 1e-10));
    let law = e(poisson(&op, &e(poisson(&op, &f, 0.3))?, 0.4))?.max_abs_diff(&e(poisson(&op, &f, 0.7))?);
    checks.push(("poisson semigroup law", law <= 1e-10));
    checks.push(("subordination at small t is f", inner(&e(poisson_subordinated(&op, &f, 1e-9))?) <= 1e-6));

    // Constants feel the walls through the Poisson tail, of size about
    // t / (pi d) at distance d; "walls far" means d > 1000 t here.
    let wide = e(Grid::new(1, 256.0, 1.0 / 8.0))?;
    let free = e(discretize(&e(Potential::zero(1))?, &wide, &OperatorOptions { backend: Backend::Sine, ..Default::default() }))?;
    let ladder = e(TLadder::geometric(0.01, 0.1, 8))?;
    let q = e(square_function_field(&free, &GridFunction::constant(wide, 1.0), &ladder))?;
    let (lo, hi) = interior_window(&wide, 1.0 / 3.0);
    let mut interior = 0.0f64;
    for j in 0..ladder.len() {
        let s = e(q.slice(Channel::Square, j))?;
        interior = interior.max(s[lo..=hi].iter().map(|v| v.abs()).fold(0.0, f64::max));
    }
    checks.push(("square function kills constants in the interior", interior <= 1e-3));

    let l = e(TLadder::geometric(0.1, 1.0, 8))?;
    let f2 = random_smooth(g, 8);
    let qa = e(square_function_field(&op, &f, &l))?;
    let qb = e(square_function_field(&op, &f2, &l))?;
    let qs = e(square_function_field(&op, &e(f.add(&f2.scale(-1.5)))?, &l))?;
    let lin = (0..l.len()).all(|j| {
        let (a, b, s) = (qa.slice(Channel::Square, j).unwrap(), qb.slice(Channel::Square, j).unwrap(), qs.slice(Channel::Square, j).unwrap());
        a.iter().zip(b).zip(s).all(|((a, b), s)| (a - 1.5 * b - s).abs() <= 1e-12)
    });
    checks.push(("square function is linear", lin));

    let k = 3;
    let ek = e(op.eigenvector(k))?;
    let u = e(poisson_extension(&op, &ek, &l))?;
    let lam = op.eigenvalues()[k];
    let eig = (0..l.len()).all(|j| {
        let want = ek.scale((-l.points()[j] * lam.sqrt()).exp());
        u.slice(Channel::U, j).unwrap().iter().zip(want.values()).all(|(a, b)| (a - b).abs() <= 1e-12)
    });
    checks.push(("eigenvector extension is exponential", eig));
    let uf = e(poisson_extension(&op, &f, &l))?;
    let chan = (0..l.len()).all(|j| {
        let (a, b) = (uf.slice(Channel::TDtU, j).unwrap(), qa.slice(Channel::Square, j).unwrap());
        a.iter().zip(b).all(|(x, y)| (x + y).abs() <= 1e-12)
    });
    checks.push(("t du/dt is minus the square function", chan));

    let rho0 = e(CriticalRadiusField::compute(&e(Potential::zero(1))?, &g, &RhoOptions::default()))?;
    let hk = e(heat_kernel_deficit(&op0, &rho0, 0.5, 2.0, 1.0 / 3.0, 8))?;
    checks.push(("V = 0 heat deficit is exactly 0", hk.free && hk.max_abs_deficit == 0.0));
    let shen = e(discretize(&e(Potential::shen(1, 1.5))?, &g, &dense))?;
    let rhos = e(CriticalRadiusField::compute(&e(Potential::shen(1, 1.5))?, &g, &RhoOptions::default()))?;
    let hk = e(heat_kernel_deficit(&shen, &rhos, 0.5, 2.0, 1.0 / 3.0, 8))?;
    checks.push(("heat kernel is dominated by the free kernel", hk.max_excess_over_discrete_free <= 1e-8));
    let rw = e(CriticalRadiusField::compute(&e(Potential::zero(1))?, &wide, &RhoOptions::default()))?;
    let pd = e(poisson_one_deficit(&free, &rw, &ladder, 1.0 / 3.0))?;
    checks.push(("V = 0 Poisson deficit vanishes in the interior", pd.per_t.iter().all(|&(_, d)| d <= 1e-3)));
    Ok(())
}

fn curve(vals: &[f64]) -> LimitCurve {
    LimitCurve {
        mode: CurveMode::LargeRadius,
        ladder: (0..vals.len()).map(|j| (j + 1) as f64).collect(),
        values: vals.iter().map(|&v| Some(v)).collect(),
        argsup: vec![None; vals.len()],
    }
}

fn all_zero(curves: &[LimitCurve]) -> bool {
    curves.iter().all(|c| c.values.iter().flatten().all(|&v| v == 0.0))
}

fn trivial_oscillation(checks: &mut Vec<(&'static str, bool)>) -> Result<(), String> {
    let g = e(Grid::new(1, 16.0, 1.0 / 16.0))?;
    let fam = e(BallFamily::new(&g, &FamilyPolicy::geometric(0.5, 2.0, 2.0).with_window(5.0)))?;
    let v = e(Potential::constant(1, 1.0))?;
    let rho = e(CriticalRadiusField::compute(&v, &g, &RhoOptions::default()))?;
    let op = e(discretize(&v, &g, &OperatorOptions::default()))?;
    let zero = GridFunction::zeros(g);
    let f = e(GridFunction::from_fn(g, |x| (-(x[0] * x[0])).exp() + 0.3 * x[0].sin()))?;

    checks.push(("bmo of a constant is 0", e(bmo_norm(&GridFunction::constant(g, 3.0), &fam, 2.0))?.value == 0.0));
    let a = e(bmo_norm(&f, &fam, 2.0))?.value;
    checks.push(("bmo is absolutely homogeneous", e(bmo_norm(&f.scale(-2.0), &fam, 2.0))?.value == 2.0 * a));
    checks.push(("bmo_L of 0 is 0", e(bmo_l_norm(&zero, &rho, &fam, 2.0))?.norm() == 0.0));
    checks.push(("semigroup bmo_L of 0 is 0", e(tilde_bmo_l_norm(&zero, &op, &fam))?.value == 0.0));
    checks.push(("gamma curves of 0 vanish", all_zero(&e(gamma_curves(&zero, &op, &fam))?)));
    checks.push(("gamma~ curves of 0 vanish", all_zero(&e(tilde_gamma_curves(&zero, &rho, &fam))?)));
    checks.push(("log bound of 0 is an error", log_bound_check(&zero, &rho, &fam, 2.0).is_err()));
    checks.push(("verdict {1, 0.2, 0.01}", e(vanishing_verdict(&curve(&[1.0, 0.2, 0.01]), 0.05, 4.0))? == Verdict::Vanishing));
    checks.push((
        "verdict {0.9, 0.91, 0.9}",
        e(vanishing_verdict(&curve(&[0.9, 0.91, 0.9]), 0.05, 4.0))? == Verdict::NonVanishing,
    ));
    checks.push((
        "verdict {0.2, 0.1, 0.08}",
        e(vanishing_verdict(&curve(&[0.2, 0.1, 0.08]), 0.05, 4.0))? == Verdict::Inconclusive,
    ));
    Ok(())
}

fn trivial_tent(checks: &mut Vec<(&'static str, bool)>) -> Result<(), String> {
    let g = e(Grid::new(1, 16.0, 1.0 / 16.0))?;
    let l = e(TLadder::geometric(1.0 / 16.0, 4.0, 16))?;
    let fam = e(BallFamily::new(&g, &FamilyPolicy::geometric(0.5, 4.0, 2.0).with_window(5.0)))?;
    let z = e(HalfSpaceFunction::from_fn(g, l.clone(), Channel::Square, |_, _| 0.0))?;
    let f = e(HalfSpaceFunction::from_fn(g, l.clone(), Channel::Square, |x, t| (x[0] + t).cos() + 0.5 * t))?;
    let b = Ball::new(&[1.0], 2.0);

    checks.push(("carleson box of 0 is 0", e(carleson_box(&z, &b))? == 0.0));
    let mut prev = 0.0;
    let mut mono = true;
    for r in [0.25, 0.5, 1.0, 2.0, 4.0] {
        // r^n times the box value is the box integral.
        let v = r * e(carleson_box(&f, &Ball::new(&[1.0], r)))?;
        mono &= v >= prev;
        prev = v;
    }
    checks.push(("box integral is monotone in r", mono));
    checks.push(("cone function of 0 is 0", e(cone_square_function(&z, &[0.0]))?.value == 0.0));
    let a = e(cone_square_function(&f, &[0.5]))?.value;
    checks.push(("cone function is homogeneous", e(cone_square_function(&f.scale(-2.0), &[0.5]))?.value == 2.0 * a));
    let mut zero_ok = true;
    let mut hom = true;
    for p in [TentExponent::One, TentExponent::Two, TentExponent::Infinity] {
        zero_ok &= e(t2p_norm(&z, p, Some(&fam)))?.value == 0.0;
        hom &= e(t2p_norm(&f.scale(-2.0), p, Some(&fam)))?.value == 2.0 * e(t2p_norm(&f, p, Some(&fam)))?.value;
    }
    checks.push(("tent norms of 0 are 0", zero_ok));
    checks.push(("tent norms are homogeneous", hom));
    checks.push(("eta curves of 0 vanish", all_zero(&e(eta_curves(&z, &fam))?)));

    let op = e(discretize(&e(Potential::constant(1, 1.0))?, &g, &OperatorOptions::default()))?;
    let n = l.len();
    let consts = e(HalfSpaceFunction::new(
        g,
        l.clone(),
        vec![Channel::U, Channel::TDtU, Channel::TGradX(0)],
        vec![vec![2.5; g.len() * n], vec![0.0; g.len() * n], vec![0.0; g.len() * n]],
    ))?;
    checks.push(("HMO of a constant field is 0", e(hmo_norm(&consts, &fam))?.sup == 0.0));
    let u = e(poisson_extension(&op, &random_smooth(g, 4), &l))?;
    let full = e(hmo_norm(&u, &fam))?.sup;
    let dropped = e(carleson_scan(&u, &fam, &[Channel::TDtU]))?.into_iter().fold(0.0, f64::max);
    checks.push(("dropping the x-gradient lowers HMO", dropped <= full));
    let u0 = e(poisson_extension(&op, &GridFunction::zeros(g), &l))?;
    checks.push(("beta curves of 0 vanish", all_zero(&e(beta_curves(&u0, &fam))?)));

    let zf = GridFunction::zeros(g);
    let bb = Ball::new(&[0.0], 0.5);
    checks.push(("delta_k of 0 is 0", (0..4).all(|k| delta_k(&zf, &op, &bb, k).is_ok_and(|v| v == 0.0))));
    let rf = random_smooth(g, 5);
    let ds: Vec<f64> = (0..4).map(|k| delta_k(&rf, &op, &bb, k).unwrap()).collect();
    checks.push(("delta_k is monotone in k", ds.windows(2).all(|w| w[1] >= w[0])));
    checks.push(("key ratio of 0 is degenerate", e(key_inequality_ratio(&zf, &op, &bb, 3))?.ratio.is_none()));
    // Dilates 4B, 16B, 64B of B(0, 0.0625) stay inside the box.
    let sb = Ball::new(&[0.0], 0.0625);
    checks.push(("sigma_k of a constant is 0", e(sigma_k(&GridFunction::constant(g, 2.0), &sb, 2))? == 0.0));
    let sig: Vec<f64> = (0..3).map(|k| sigma_k(&rf, &sb, k).unwrap()).collect();
    checks.push(("sigma_k is monotone in k", sig.windows(2).all(|w| w[1] >= w[0])));
    let sfam = e(BallFamily::from_balls(&g, &[sb.dilate(4.0), sb.dilate(16.0), sb.dilate(64.0)], None))?;
    checks.push(("sigma_k is below bmo with p = 1", e(sigma_k(&rf, &sb, 2))? <= e(bmo_norm(&rf, &sfam, 1.0))?.value));
    let pr = e(reproducing_pairing_check(&rf, &zf, &op, &l))?;
    checks.push(("pairing with 0 has both sides 0", pr.lhs == 0.0 && pr.rhs == 0.0));
    Ok(())
}

fn trivial_approx(checks: &mut Vec<(&'static str, bool)>) -> Result<(), String> {
    let g = e(Grid::new(1, 4.0, 1.0 / 64.0))?;
    let phi = e(bump(&g))?;
    checks.push(("bump has unit mass", (phi.integral() - 1.0).abs() <= 1e-14));
    let v = phi.values();
    checks.push(("bump is symmetric", (0..v.len()).all(|k| v[k] == v[v.len() - 1 - k])));
    let c = e(mollify(&GridFunction::constant(g, 1.75), 0.5))?;
    checks.push(("mollifier fixes constants", (0..g.len()).all(|k| !c.mask[k] || (c.values.values()[k] - 1.75).abs() <= 1e-14)));
    let line = e(GridFunction::from_fn(g, |x| 0.7 * x[0] - 0.2))?;
    let m = e(mollify(&line, 0.25))?;
    checks.push((
        "mollifier reproduces lines",
        (0..g.len()).all(|k| !m.mask[k] || (m.values.values()[k] - line.values()[k]).abs() <= 1e-10),
    ));
    let rf = e(GridFunction::from_fn(g, |x| (3.0 * x[0]).sin().signum() * (x[0] * 5.0).cos()))?;
    checks.push(("mollifier is a sup-norm contraction", e(mollify(&rf, 0.3))?.values.max_abs() <= rf.max_abs() + 1e-12));

    let g = e(Grid::new(1, 64.0, 1.0 / 16.0))?;
    let rho = e(CriticalRadiusField::compute(&e(Potential::constant(1, 1.0))?, &g, &RhoOptions::default()))?;
    let fam = e(BallFamily::new(&g, &FamilyPolicy::geometric(0.5, 8.0, 2.0).with_window(20.0)))?;
    let zero = GridFunction::zeros(g);
    let cfg = ThresholdConfig::default();
    let cubes = e(CubeFamily::new(&zero, &rho, -4, 3))?;
    let p = e(choose_thresholds(&zero, 0.1, &rho, &cubes, &cfg))?;
    checks.push(("f = 0 gets minimal thresholds", p.i == cfg.i_min && p.j == cfg.j_min));
    let asg = e(assign_cubes(&p, &g))?;
    let konst = GridFunction::constant(g, -0.75);
    checks.push(("dyadic average fixes constants", e(uchiyama_average(&konst, &asg))?.max_abs_diff(&konst) == 0.0));
    let f = e(GridFunction::from_fn(g, |x| (-(x[0] * x[0]) / 8.0).exp()))?;
    let a1 = e(uchiyama_average(&f, &asg))?;
    checks.push(("dyadic average is idempotent", e(uchiyama_average(&a1, &asg))? == a1));
    let r = e(p1_p2_check(&e(uchiyama_average(&zero, &asg))?, &asg))?;
    checks.push(("P1/P2 of 0 pass with zero sups", r.p1_sup == 0.0 && r.p2_sup == 0.0 && r.pass()));
    checks.push(("distance of f to itself is 0", e(approx_distance(&f, &f, &rho, &fam))?.norm() == 0.0));
    Ok(())
}

fn trivial_experiments(checks: &mut Vec<(&'static str, bool)>) -> Result<(), String> {
    let empty = e(run(&e(ExperimentConfig::from_json(r#"{"scenarios": []}"#))?))?;
    checks.push(("empty config gives empty bundle", empty.scenarios.is_empty() && empty.passed()));
    let unknown = run(&e(ExperimentConfig::from_json(r#"{"scenarios": [{"id": "x", "kind": "nope"}]}"#))?);
    checks.push(("unknown scenario is a config error", unknown.is_err_and(|e| e.is_config())));

    let text = r#"{"seed": 3, "scenarios": [
        {"id": "flat", "kind": "shen_rho", "dim": 1, "radial_potential": {"kind": "constant", "value": 1.0}, "samples": 9},
        {"id": "b", "kind": "theorem_b", "grid": {"halfwidth": 16, "spacing": 0.0625}, "functions": ["zero", "jittered_bumps"]},
        {"id": "a", "kind": "theorem_a", "grid": {"halfwidth": 16, "spacing": 0.0625}, "functions": ["zero"]}
    ]}"#;
    let cfg = e(ExperimentConfig::from_json(text))?;
    let one = e(run(&cfg))?;
    let two = e(run(&cfg))?;
    checks.push(("same config gives identical bundles", one.summary_json() == two.summary_json()));
    let slope = summary(&one, "flat")["slope"].as_f64().unwrap_or(f64::NAN);
    checks.push(("V = 1 slope is 0", slope.abs() <= 0.01));
    let zb = &summary(&one, "b")["members"][0];
    checks.push((
        "f = 0 is vanishing on both sides",
        zb["gamma_overall"] == "VANISHING" && zb["eta_overall"] == "VANISHING",
    ));
    let za = &summary(&one, "a")["members"][0];
    let zero_curves = za["beta_verdicts"].as_array().is_some_and(|v| v.iter().all(|c| c["first"] == 0.0 && c["terminal"] == 0.0));
    checks.push(("f = 0 extends to u = 0", za["hmo_norm"] == 0.0 && zero_curves));
    Ok(())
}

fn main() {
    // `cargo test` forwards harness flags; a filter that excludes this suite
    // skips it.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let mut s = Suite { failed: 0 };
    s.criterion(1, "rho closed forms", c1);
    s.criterion(2, "Shen slope", c2);
    s.criterion(3, "Poisson cross-oracle", c3);
    s.criterion(4, "constant eigenfunction", c4);
    s.criterion(5, "square-function bound", c5);
    s.criterion(6, "reproducing pairing", c6);
    s.criterion(7, "tent/BMO_L equivalence surrogate", c7);
    s.criterion(8, "key inequality", c8);
    s.criterion(9, "lacunary separation", c9);
    s.criterion(10, "Uchiyama pipeline", c10);
    s.criterion(11, "mollifier limit", c11);
    s.criterion(12, "harmonic-extension surrogate", c12);
    s.criterion(13, "oracle equivalences and trivial examples", c13);
    println!("acceptance: {} of 13 criteria pass", 13 - s.failed);
    if s.failed > 0 {
        std::process::exit(1);
    }
}
