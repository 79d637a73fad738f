//! Mollification and region-dependent dyadic averaging.
//!
//! Cubes stand in for balls here: a cube `Q` of side `l(Q)` plays the role of
//! a ball of radius `l(Q)`, and "supercritical" means `l(Q) >= rho(c_Q)`.

use crate::error::{Error, Result};
use crate::family::BallFamily;
use crate::grid::{in_rk, DyadicCube, Grid, GridFunction, MomentTable};
use crate::numeric::Dd;
use crate::oscillation::{bmo_l_norm, bmo_norm, NormReport, OscillationReport};
use crate::potential::{CriticalRadiusField, Rho, SlowVariationFit};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `exp(-1/(1-|x|²))` on the unit ball, zero outside.
fn raw_bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

/// Smooth radial bump supported in `B(0,1)` with unit discrete integral.
pub fn bump(grid: &Grid) -> Result<GridFunction> {
    if grid.spacing() >= 0.25 {
        return Err(Error::Config(format!("bump unresolved at h = {}", grid.spacing())));
    }
    if grid.halfwidth() < 1.0 {
        return Err(Error::Config("bump support does not fit in the box".into()));
    }
    let f = GridFunction::from_fn(*grid, |x| raw_bump(x.iter().map(|v| v * v).sum()))?;
    let mass = f.integral();
    Ok(f.scale(1.0 / mass))
}

/// Result of a discrete mollification.
#[derive(Debug, Clone, PartialEq)]
pub struct Mollified {
    pub values: GridFunction,
    /// `true` where the kernel support stays inside the box, so that zero
    /// padding has no effect.
    pub mask: Vec<bool>,
}

/// Discrete convolution with `phi_t(x) = t^-n phi(x/t)`, renormalized to unit
/// mass on the grid and zero-padded outside the box.
pub fn mollify(f: &GridFunction, t: f64) -> Result<Mollified> {
    let g = *f.grid();
    let h = g.spacing();
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Config(format!("mollifier scale must lie in (0, 1), got {t}")));
    }
    if t < 4.0 * h * (1.0 - 1e-12) {
        return Err(Error::Config(format!("mollifier scale {t} is below 4h = {}", 4.0 * h)));
    }
    let m = (t / h).floor() as i64;
    let dim = g.dim();
    let mut taps: Vec<(i64, i64, f64)> = Vec::new();
    for dj in if dim == 2 { -m..=m } else { 0..=0 } {
        for di in -m..=m {
            let r2 = ((di * di + dj * dj) as f64) * h * h / (t * t);
            let w = raw_bump(r2);
            if w > 0.0 {
                taps.push((di, dj, w));
            }
        }
    }
    let total = Dd::ZERO;
    let total = taps.iter().fold(total, |acc, &(_, _, w)| acc.add_f64(w)).to_f64();
    let taps: Vec<(i64, i64, f64)> = taps.into_iter().map(|(a, b, w)| (a, b, w / total)).collect();
    let n = g.points_per_axis() as i64;
    let v = f.values();
    let out: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|k| {
            let [i, j] = g.unflatten(k);
            let (i, j) = (i as i64, j as i64);
            let mut acc = Dd::ZERO;
            for &(di, dj, w) in &taps {
                let (a, b) = (i + di, j + dj);
                if a >= 0 && a < n && b >= 0 && (dim == 1 || b < n) {
                    acc += Dd::product(w, v[g.flatten(a as usize, b as usize)]);
                }
            }
            acc.to_f64()
        })
        .collect();
    let x = g.halfwidth();
    let mask = (0..g.len())
        .map(|k| g.point(k)[..dim].iter().all(|c| c.abs() + t <= x * (1.0 + 1e-12)))
        .collect();
    Ok(Mollified { values: GridFunction::new(g, out)?, mask })
}

/// Statistics of one dyadic cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubeStat {
    pub cube: DyadicCube,
    pub count: usize,
    /// `(mean |f - f_Q|²)^(1/2)`.
    pub osc: f64,
    /// `(mean |f|²)^(1/2)`.
    pub rms: f64,
    /// `l(Q) >= rho(c_Q)`.
    pub supercritical: bool,
}

/// Every dyadic cube inside the box with side `2^l`, `l_min <= l <= l_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeFamily {
    grid: Grid,
    pub l_min: i32,
    pub l_max: i32,
    pub cubes: Vec<CubeStat>,
}

impl CubeFamily {
    pub fn new(f: &GridFunction, rho: &CriticalRadiusField, l_min: i32, l_max: i32) -> Result<CubeFamily> {
        let g = *f.grid();
        if rho.grid() != &g {
            return Err(Error::Config("rho and f live on different grids".into()));
        }
        let l_min = l_min.max(g.spacing().log2().ceil() as i32);
        if l_min > l_max || 2f64.powi(l_max) > 2.0 * g.halfwidth() {
            return Err(Error::Config(format!("no dyadic levels between {l_min} and {l_max} fit the grid")));
        }
        let table = MomentTable::new(f);
        let x = g.halfwidth();
        let mut cubes = Vec::new();
        for l in l_min..=l_max {
            let s = 2f64.powi(l);
            let k0 = (-x / s).ceil() as i64;
            let k1 = (x / s).floor() as i64 - 1;
            if k1 < k0 {
                continue;
            }
            let rows: Vec<i64> = if g.dim() == 2 { (k0..=k1).collect() } else { vec![0] };
            let level: Vec<CubeStat> = rows
                .par_iter()
                .flat_map_iter(|&cy| {
                    let table = &table;
                    (k0..=k1).filter_map(move |cx| {
                        let cube = DyadicCube { dim: g.dim(), level: l, corner: [cx, cy] };
                        let region = g.cube_region(&cube).ok()?;
                        let m = table.moments(&region);
                        let c = cube.center();
                        let sup = rho.at_point(&c[..g.dim()]).map(|r| r.is_supercritical(s)).unwrap_or(false);
                        Some(CubeStat {
                            cube,
                            count: region.count,
                            osc: m.variance().sqrt(),
                            rms: m.mean_square().sqrt(),
                            supercritical: sup,
                        })
                    })
                })
                .collect();
            cubes.extend(level);
        }
        if cubes.is_empty() {
            return Err(Error::Config("cube family is empty".into()));
        }
        Ok(CubeFamily { grid: g, l_min, l_max, cubes })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn sup(&self, keep: impl Fn(&CubeStat) -> bool, metric: impl Fn(&CubeStat) -> f64) -> f64 {
        self.cubes.iter().filter(|c| keep(c)).map(metric).fold(0.0, f64::max)
    }
}

fn misses_rk(q: &DyadicCube, k: i32) -> bool {
    let s = 2f64.powi(k);
    let lo = q.lower();
    (0..q.dim).any(|a| lo[a] >= s || lo[a] + q.side() <= -s)
}

/// Bounds of the five sampled conditions and the search floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    /// Oscillation bound as a multiple of `eps`; `None` means `1/(5 4^n)`.
    pub oscillation_factor: Option<f64>,
    /// Bound on supercritical means as a multiple of `eps`.
    pub mean_factor: f64,
    pub i_min: i32,
    pub j_min: i32,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig { oscillation_factor: None, mean_factor: 0.5, i_min: 0, j_min: 0 }
    }
}

/// The sampled suprema of the five conditions at given `(I, J)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionValues {
    /// Oscillation over cubes with `l <= 2^-I`.
    pub small: f64,
    /// Oscillation over cubes with `l >= 2^J`.
    pub large: f64,
    /// Oscillation over cubes missing `R_J`.
    pub far: f64,
    /// Mean over cubes with `l >= max(2^J, rho(c_Q))`.
    pub large_supercritical: f64,
    /// Mean over cubes missing `R_J` with `l >= rho(c_Q)`.
    pub far_supercritical: f64,
}

pub fn condition_values(cubes: &CubeFamily, i: i32, j: i32) -> ConditionValues {
    ConditionValues {
        small: cubes.sup(|c| c.cube.level <= -i, |c| c.osc),
        large: cubes.sup(|c| c.cube.level >= j, |c| c.osc),
        far: cubes.sup(|c| misses_rk(&c.cube, j), |c| c.osc),
        large_supercritical: cubes.sup(|c| c.cube.level >= j && c.supercritical, |c| c.rms),
        far_supercritical: cubes.sup(|c| misses_rk(&c.cube, j) && c.supercritical, |c| c.rms),
    }
}

/// Thresholds of the dyadic construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UchiyamaParams {
    pub eps: f64,
    pub dim: usize,
    pub i: i32,
    pub j: i32,
    pub m: i32,
    /// `2^(-I-1) <= inf rho over R_(J+2)`.
    pub rho_compatible: bool,
    pub oscillation_bound: f64,
    pub mean_bound: f64,
    pub conditions: ConditionValues,
}

impl UchiyamaParams {
    /// Side of the assigned cube on `R_J` (`m = None`) or on `R_(m+1) \ R_m`.
    pub fn level(&self, m: Option<i32>) -> i32 {
        match m {
            None => -self.i - 2,
            Some(m) => m - self.i - self.j - 1,
        }
    }
}

/// Smallest `I`, then smallest `J`, satisfying the five sampled conditions;
/// `I` is then raised until `2^(-I-1) <= inf rho` on `R_(J+2)` when the grid
/// allows it, and `M` is the smallest `m >= J` such that every assigned cube
/// outside `R_m` has `(mean |f|²)^(1/2) < mean bound`.
pub fn choose_thresholds(
    f: &GridFunction,
    eps: f64,
    rho: &CriticalRadiusField,
    cubes: &CubeFamily,
    config: &ThresholdConfig,
) -> Result<UchiyamaParams> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    let g = *f.grid();
    if cubes.grid() != &g {
        return Err(Error::Config("cube family and f live on different grids".into()));
    }
    let n = g.dim() as i32;
    let osc_bound = eps * config.oscillation_factor.unwrap_or(1.0 / (5.0 * 4f64.powi(n)));
    let mean_bound = eps * config.mean_factor;
    // The finest assigned cube, of side 2^(-I-2), must hold a grid point.
    let i_max = -(g.spacing().log2().ceil() as i32) - 2;
    let i_max = i_max.min(-cubes.l_min);
    let i = (config.i_min..=i_max)
        .find(|&i| condition_values(cubes, i, cubes.l_max).small < osc_bound)
        .ok_or_else(|| {
            Error::ThresholdExhausted(format!(
                "no I in [{}, {i_max}] keeps small-cube oscillation below {osc_bound}",
                config.i_min
            ))
        })?;
    let j = (config.j_min..=cubes.l_max)
        .find(|&j| {
            let c = condition_values(cubes, i, j);
            c.large < osc_bound
                && c.far < osc_bound
                && c.large_supercritical < mean_bound
                && c.far_supercritical < mean_bound
        })
        .ok_or_else(|| {
            let c = condition_values(cubes, i, cubes.l_max);
            Error::ThresholdExhausted(format!(
                "no J in [{}, {}] satisfies the large/far conditions (at J = {}: large {:.3e}, far {:.3e}, \
                 large supercritical {:.3e}, far supercritical {:.3e}; bounds {osc_bound:.3e}, {mean_bound:.3e})",
                config.j_min, cubes.l_max, cubes.l_max, c.large, c.far, c.large_supercritical, c.far_supercritical
            ))
        })?;
    let k = j + 2;
    let rho_inf = rho.inf_where(|x| in_rk(x, g.dim(), k));
    let mut i = i;
    let mut rho_compatible = true;
    if let Rho::Finite(r) = rho_inf {
        while 2f64.powi(-i - 1) > r && i < i_max {
            i += 1;
        }
        rho_compatible = 2f64.powi(-i - 1) <= r;
    }
    let m = scan_m(f, i, j, mean_bound)?;
    Ok(UchiyamaParams {
        eps,
        dim: g.dim(),
        i,
        j,
        m,
        rho_compatible,
        oscillation_bound: osc_bound,
        mean_bound,
        conditions: condition_values(cubes, i, j),
    })
}

/// Largest `M` value the `(P1)` argument would need:
/// `(k0 + 1)(log2 C + I + J + 1)` with `C = c rho(0) (1 + 2 sqrt(n)/rho(0))^(k0/(k0+1))`.
pub fn closed_form_m(fit: &SlowVariationFit, rho0: f64, dim: usize, i: i32, j: i32) -> f64 {
    let k0 = fit.k0 as f64;
    let kappa = k0 / (k0 + 1.0);
    let c = fit.c * rho0 * (1.0 + 2.0 * (dim as f64).sqrt() / rho0).powf(kappa);
    (k0 + 1.0) * (c.log2() + (i + j + 1) as f64)
}

/// Shell index of a point: `None` inside `R_J`, else the `m >= J` with
/// `x` in `R_(m+1) \ R_m`.
fn shell(x: &[f64], dim: usize, j: i32) -> Option<i32> {
    if in_rk(x, dim, j) {
        return None;
    }
    let mut m = j;
    while !in_rk(x, dim, m + 1) {
        m += 1;
    }
    Some(m)
}

/// Point used to pick the cube: points on the upper wall go to the cube on
/// their left.
fn effective_point(g: &Grid, k: usize) -> [f64; 2] {
    let mut p = g.point(k);
    let x = g.halfwidth();
    for c in p.iter_mut().take(g.dim()) {
        if *c >= x * (1.0 - 1e-15) {
            *c = x - 0.5 * g.spacing();
        }
    }
    p
}

fn cube_of(g: &Grid, k: usize, i: i32, j: i32) -> (DyadicCube, Option<i32>) {
    let p = effective_point(g, k);
    let d = g.dim();
    let sh = shell(&p[..d], d, j);
    let level = match sh {
        None => -i - 2,
        Some(m) => m - i - j - 1,
    };
    (DyadicCube::containing(d, level, &p[..d]), sh)
}

/// Group grid points by their assigned cube; returns cube list, shells,
/// per-point cube index.
fn group(g: &Grid, i: i32, j: i32) -> (Vec<DyadicCube>, Vec<Option<i32>>, Vec<u32>) {
    let keyed: Vec<(DyadicCube, Option<i32>)> = (0..g.len()).into_par_iter().map(|k| cube_of(g, k, i, j)).collect();
    let mut order: Vec<usize> = (0..g.len()).collect();
    let key = |c: &DyadicCube| (c.level, c.corner[1], c.corner[0]);
    order.par_sort_by_key(|&k| key(&keyed[k].0));
    let mut cubes = Vec::new();
    let mut shells = Vec::new();
    let mut point_cube = vec![0u32; g.len()];
    for &k in &order {
        if cubes.last() != Some(&keyed[k].0) {
            cubes.push(keyed[k].0);
            shells.push(keyed[k].1);
        }
        point_cube[k] = (cubes.len() - 1) as u32;
    }
    (cubes, shells, point_cube)
}

fn cube_sums(values: &[f64], ncubes: usize, point_cube: &[u32]) -> (Vec<Dd>, Vec<Dd>, Vec<usize>) {
    let mut s = vec![Dd::ZERO; ncubes];
    let mut s2 = vec![Dd::ZERO; ncubes];
    let mut n = vec![0usize; ncubes];
    for (k, &c) in point_cube.iter().enumerate() {
        s[c as usize] = s[c as usize].add_f64(values[k]);
        s2[c as usize] += Dd::square(values[k]);
        n[c as usize] += 1;
    }
    (s, s2, n)
}

fn scan_m(f: &GridFunction, i: i32, j: i32, bound: f64) -> Result<i32> {
    let g = f.grid();
    let (cubes, shells, pc) = group(g, i, j);
    let (_, s2, n) = cube_sums(f.values(), cubes.len(), &pc);
    // Smallest m such that no failing cube lies in a shell >= m.
    let mut m = j;
    for (c, sh) in shells.iter().enumerate() {
        if let Some(sh) = *sh {
            if (s2[c].div_f64(n[c] as f64).to_f64()).sqrt() >= bound {
                m = m.max(sh + 1);
            }
        }
    }
    Ok(m)
}

/// The map `x -> Q_x` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicAssignment {
    grid: Grid,
    pub params: UchiyamaParams,
    pub cubes: Vec<DyadicCube>,
    point_cube: Vec<u32>,
}

/// Build the assignment and verify its invariants.
pub fn assign_cubes(params: &UchiyamaParams, grid: &Grid) -> Result<DyadicAssignment> {
    let x = grid.halfwidth();
    if 2f64.powi(params.m + 3) > x * (1.0 + 1e-12) {
        return Err(Error::OutOfDomain(format!(
            "construction needs half-width 2^(M+3) = {} but the box has {x}",
            2f64.powi(params.m + 3)
        )));
    }
    if params.i + params.j < 0 {
        return Err(Error::Config("thresholds need I + J >= 0".into()));
    }
    let (cubes, shells, point_cube) = group(grid, params.i, params.j);
    for (q, sh) in cubes.iter().zip(&shells) {
        if q.level != params.level(*sh) {
            return Err(Error::Config(format!("cube {q:?} breaks the sidelength rule")));
        }
        let lo = q.lower();
        for a in 0..grid.dim() {
            if lo[a] < -x * (1.0 + 1e-12) || lo[a] + q.side() > x * (1.0 + 1e-12) {
                return Err(Error::OutOfDomain(format!("assigned cube {q:?} crosses the wall")));
            }
        }
    }
    let asg = DyadicAssignment { grid: *grid, params: *params, cubes, point_cube };
    for (a, b) in asg.neighbour_pairs() {
        let (la, lb) = (asg.cube_at(a).level, asg.cube_at(b).level);
        if (la - lb).abs() > 1 {
            return Err(Error::Config(format!("neighbouring cubes at levels {la} and {lb}")));
        }
    }
    Ok(asg)
}

impl DyadicAssignment {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cube_at(&self, k: usize) -> DyadicCube {
        self.cubes[self.point_cube[k] as usize]
    }

    /// Index into `cubes` of the cube holding grid point `k`.
    pub fn cube_index(&self, k: usize) -> usize {
        self.point_cube[k] as usize
    }

    /// Grid-neighbour pairs, diagonals included, each listed once.
    pub fn neighbour_pairs(&self) -> Vec<(usize, usize)> {
        let g = &self.grid;
        let n = g.points_per_axis();
        let mut out = Vec::new();
        if g.dim() == 1 {
            out.extend((0..n - 1).map(|i| (i, i + 1)));
            return out;
        }
        for jj in 0..n {
            for ii in 0..n {
                let k = g.flatten(ii, jj);
                if ii + 1 < n {
                    out.push((k, g.flatten(ii + 1, jj)));
                }
                if jj + 1 < n {
                    out.push((k, g.flatten(ii, jj + 1)));
                    if ii + 1 < n {
                        out.push((k, g.flatten(ii + 1, jj + 1)));
                    }
                    if ii > 0 {
                        out.push((k, g.flatten(ii - 1, jj + 1)));
                    }
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,side,corner_x,corner_y,lower_x,lower_y\n");
        for q in &self.cubes {
            let lo = q.lower();
            s.push_str(&format!("{},{},{},{},{},{}\n", q.level, q.side(), q.corner[0], q.corner[1], lo[0], lo[1]));
        }
        s
    }
}

/// `A(f)(x) = mean of f over Q_x`.
pub fn uchiyama_average(f: &GridFunction, asg: &DyadicAssignment) -> Result<GridFunction> {
    if f.grid() != asg.grid() {
        return Err(Error::Config("assignment and f live on different grids".into()));
    }
    let (s, _, n) = cube_sums(f.values(), asg.cubes.len(), &asg.point_cube);
    let means: Vec<f64> = s.iter().zip(&n).map(|(s, &n)| s.div_f64(n as f64).to_f64()).collect();
    GridFunction::new(*f.grid(), asg.point_cube.iter().map(|&c| means[c as usize]).collect())
}

/// Sups entering `(P1)` and `(P2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P1P2Report {
    /// Sup of `|A(f)(x)|` over `x` outside `R_M`.
    pub p1_sup: f64,
    pub p1_bound: f64,
    pub p1_pass: bool,
    /// Sup of `|A(f)(x) - A(f)(y)|` over neighbouring points.
    pub p2_sup: f64,
    pub p2_bound: f64,
    pub p2_pass: bool,
}

impl P1P2Report {
    pub fn pass(&self) -> bool {
        self.p1_pass && self.p2_pass
    }
}

pub fn p1_p2_check(averaged: &GridFunction, asg: &DyadicAssignment) -> Result<P1P2Report> {
    let g = asg.grid();
    if averaged.grid() != g {
        return Err(Error::Config("assignment and function live on different grids".into()));
    }
    let p = &asg.params;
    let v = averaged.values();
    let mut p1 = 0.0f64;
    for k in 0..g.len() {
        let x = effective_point(g, k);
        if !in_rk(&x[..g.dim()], g.dim(), p.m) {
            p1 = p1.max(v[k].abs());
        }
    }
    let p2 = asg.neighbour_pairs().iter().map(|&(a, b)| (v[a] - v[b]).abs()).fold(0.0, f64::max);
    let (b1, b2) = (p.eps / 2.0, p.eps);
    Ok(P1P2Report { p1_sup: p1, p1_bound: b1, p1_pass: p1 < b1, p2_sup: p2, p2_bound: b2, p2_pass: p2 < b2 })
}

/// `||f - g||_{BMO_L}` on a ball family (`p = 2`).
pub fn approx_distance(
    f: &GridFunction,
    g: &GridFunction,
    rho: &CriticalRadiusField,
    family: &BallFamily,
) -> Result<OscillationReport> {
    bmo_l_norm(&f.sub(g)?, rho, family, 2.0)
}

/// Everything produced by the full approximation chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub params: UchiyamaParams,
    pub p1_p2: P1P2Report,
    /// `||f - A_eps(f)||_BMO` on the ball family.
    pub bmo_residual: NormReport,
    /// Mollifier scale used in the last step.
    pub t: f64,
    /// `||f - A_t(A_eps(f) 1_{R_(M+2)})||_{BMO_L}`.
    pub distance: OscillationReport,
}

/// Thresholds, dyadic averaging, truncation to `R_(M+2)` and mollification.
///
/// The mollifier scale is the largest `t` in `1/2, 1/4, ...` (down to `4h`)
/// whose BMO distance to the truncated average is below `eps`, or the
/// smallest admissible scale if none is.
pub fn uchiyama_pipeline(
    f: &GridFunction,
    eps: f64,
    rho: &CriticalRadiusField,
    cubes: &CubeFamily,
    family: &BallFamily,
    config: &ThresholdConfig,
) -> Result<PipelineReport> {
    let params = choose_thresholds(f, eps, rho, cubes, config)?;
    let asg = assign_cubes(&params, f.grid())?;
    let avg = uchiyama_average(f, &asg)?;
    let p1_p2 = p1_p2_check(&avg, &asg)?;
    let bmo_residual = bmo_norm(&f.sub(&avg)?, family, 2.0)?;
    let g = *f.grid();
    let d = g.dim();
    let truncated = GridFunction::new(
        g,
        (0..g.len())
            .map(|k| if in_rk(&effective_point(&g, k)[..d], d, params.m + 2) { avg.values()[k] } else { 0.0 })
            .collect(),
    )?;
    let mut t = 0.5;
    let mut chosen = None;
    while t >= 4.0 * g.spacing() * (1.0 - 1e-12) {
        let m = mollify(&truncated, t)?.values;
        chosen = Some((t, m.clone()));
        if bmo_norm(&m.sub(&truncated)?, family, 2.0)?.value < eps {
            break;
        }
        t /= 2.0;
    }
    let (t, smooth) = chosen.ok_or_else(|| Error::Config("grid too coarse for any mollifier scale".into()))?;
    let distance = approx_distance(f, &smooth, rho, family)?;
    Ok(PipelineReport { params, p1_p2, bmo_residual, t, distance })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_is_normalized_and_even() {
        let g = Grid::new(1, 2.0, 1.0 / 64.0).unwrap();
        let b = bump(&g).unwrap();
        assert!((b.integral() - 1.0).abs() < 1e-14);
        let v = b.values();
        for k in 0..v.len() {
            assert_eq!(v[k], v[v.len() - 1 - k]);
            if g.coord(k).abs() >= 1.0 {
                assert_eq!(v[k], 0.0);
            }
        }
        assert!(bump(&Grid::new(1, 2.0, 0.25).unwrap()).is_err());
    }

    #[test]
    fn mollifier_keeps_linear_functions_inside() {
        let g = Grid::new(1, 2.0, 1.0 / 64.0).unwrap();
        let f = GridFunction::from_fn(g, |x| 3.0 * x[0] - 1.0).unwrap();
        let m = mollify(&f, 0.25).unwrap();
        for k in 0..g.len() {
            if m.mask[k] {
                assert!((m.values.values()[k] - f.values()[k]).abs() < 1e-10);
            }
        }
        assert!(mollify(&f, 1.0 / 32.0).is_err());
    }

    #[test]
    fn shells_follow_rule() {
        assert_eq!(shell(&[0.5], 1, 0), None);
        assert_eq!(shell(&[1.0], 1, 0), Some(0));
        assert_eq!(shell(&[-2.0], 1, 0), Some(0));
        assert_eq!(shell(&[2.0], 1, 0), Some(1));
        assert_eq!(shell(&[-3.5], 1, 0), Some(1));
    }
}
