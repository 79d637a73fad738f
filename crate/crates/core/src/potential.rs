//! Nonnegative potentials, the critical radius `rho`, and reverse-Hölder
//! diagnostics.
//!
//! For a potential `V >= 0` on `R^n` the normalized mass of a ball is
//! `I_r(x) = r^(2-n) * integral of V over B(x, r)` and the critical radius is
//! `rho(x) = sup { r > 0 : I_r(x) <= 1 }`. Dimensions 1 and 2 are "formal":
//! the formula is evaluated as written even though the classical theory
//! assumes `n >= 3`.

use crate::error::{Error, Result};
use crate::family::BallFamily;
use crate::grid::{Ball, Grid, GridFunction};
use crate::numeric::{integrate, pairwise_sum_by, QuadOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Volume of the unit ball in dimension `n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => PI.powf(n as f64 / 2.0) / gamma_half_int(n + 2),
    }
}

/// Surface area of the unit sphere in dimension `n`.
pub fn unit_sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

// Gamma(k / 2) for integer k >= 1.
fn gamma_half_int(k: usize) -> f64 {
    if k == 1 {
        PI.sqrt()
    } else if k == 2 {
        1.0
    } else {
        (k as f64 / 2.0 - 1.0) * gamma_half_int(k - 2)
    }
}

/// A potential `V >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Zero { dim: usize },
    Constant { dim: usize, value: f64 },
    /// `V(x) = amplitude * |x|^(epsilon - 2)`.
    Shen { dim: usize, epsilon: f64, amplitude: f64 },
    Tabulated(GridFunction),
}

/// Serializable description of a potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Zero,
    Constant { value: f64 },
    Shen {
        epsilon: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl PotentialSpec {
    pub fn build(&self, dim: usize) -> Result<Potential> {
        match *self {
            PotentialSpec::Zero => Potential::zero(dim),
            PotentialSpec::Constant { value } => Potential::constant(dim, value),
            PotentialSpec::Shen { epsilon, amplitude } => Potential::shen_scaled(dim, epsilon, amplitude),
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if (1..=3).contains(&dim) {
        Ok(())
    } else {
        Err(Error::Config(format!("analytic potentials support n = 1, 2, 3; got {dim}")))
    }
}

impl Potential {
    pub fn zero(dim: usize) -> Result<Potential> {
        check_dim(dim)?;
        Ok(Potential::Zero { dim })
    }

    pub fn constant(dim: usize, value: f64) -> Result<Potential> {
        check_dim(dim)?;
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::Config(format!("constant potential must be finite and >= 0, got {value}")));
        }
        Ok(Potential::Constant { dim, value })
    }

    /// `|x|^(epsilon - 2)` with `0 < epsilon < 2` (and `epsilon > 1` when `n = 1`).
    pub fn shen(dim: usize, epsilon: f64) -> Result<Potential> {
        Potential::shen_scaled(dim, epsilon, 1.0)
    }

    pub fn shen_scaled(dim: usize, epsilon: f64, amplitude: f64) -> Result<Potential> {
        check_dim(dim)?;
        if !(epsilon > 0.0 && epsilon < 2.0) {
            return Err(Error::Config(format!("shen potential needs 0 < epsilon < 2, got {epsilon}")));
        }
        if dim == 1 && epsilon <= 1.0 {
            return Err(Error::Config(format!(
                "|x|^(epsilon-2) is not locally integrable on R for epsilon = {epsilon} <= 1"
            )));
        }
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::Config("shen amplitude must be positive".into()));
        }
        Ok(Potential::Shen { dim, epsilon, amplitude })
    }

    pub fn tabulated(values: GridFunction) -> Result<Potential> {
        if let Some(k) = values.values().iter().position(|&v| v < 0.0) {
            let p = values.grid().point(k);
            return Err(Error::Config(format!("negative potential sample at {:?}", &p[..values.grid().dim()])));
        }
        Ok(Potential::Tabulated(values))
    }

    pub fn dim(&self) -> usize {
        match self {
            Potential::Zero { dim } | Potential::Constant { dim, .. } | Potential::Shen { dim, .. } => *dim,
            Potential::Tabulated(g) => g.grid().dim(),
        }
    }

    /// Whether `V` vanishes identically (so `rho` is infinite).
    pub fn is_zero(&self) -> bool {
        match self {
            Potential::Zero { .. } => true,
            Potential::Constant { value, .. } => *value == 0.0,
            Potential::Shen { .. } => false,
            Potential::Tabulated(g) => g.values().iter().all(|&v| v == 0.0),
        }
    }

    /// Pointwise value; `+inf` at the origin for shen potentials.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Potential::Zero { .. } => 0.0,
            Potential::Constant { value, .. } => *value,
            Potential::Shen { epsilon, amplitude, .. } => amplitude * norm(x).powf(epsilon - 2.0),
            Potential::Tabulated(g) => g.grid().nearest_index(x).map_or(0.0, |k| g.values()[k]),
        }
    }

    /// Largest `q` for which `V` belongs to `RH_q`, if known in closed form.
    pub fn rh_threshold(&self) -> Option<f64> {
        match self {
            Potential::Shen { dim, epsilon, .. } => Some(*dim as f64 / (2.0 - epsilon)),
            Potential::Zero { .. } | Potential::Constant { .. } => Some(f64::INFINITY),
            Potential::Tabulated(_) => None,
        }
    }

    /// Reject `q` outside the reverse-Hölder range of an analytic potential.
    pub fn check_rh_exponent(&self, q: f64) -> Result<()> {
        if !(q > 1.0) {
            return Err(Error::Config(format!("reverse-Holder exponent must exceed 1, got {q}")));
        }
        if let Some(q0) = self.rh_threshold() {
            if q >= q0 {
                return Err(Error::Config(format!(
                    "this potential lies in RH_q only for q < q0 = {q0}; q = {q} is not admissible"
                )));
            }
        }
        Ok(())
    }

    /// Samples on a grid. The shen cell containing the origin holds the exact
    /// cell average of `|y|^(epsilon-2)` instead of the (infinite) point value.
    pub fn sample(&self, grid: &Grid) -> Result<GridFunction> {
        if grid.dim() != self.dim() {
            return Err(Error::Config("potential and grid dimensions differ".into()));
        }
        match self {
            Potential::Tabulated(g) => {
                if g.grid() != grid {
                    return Err(Error::Config("tabulated potential lives on another grid".into()));
                }
                Ok(g.clone())
            }
            Potential::Shen { dim, epsilon, amplitude } => {
                let mut f = GridFunction::from_fn(*grid, |x| {
                    let r = norm(x);
                    if r == 0.0 { 0.0 } else { amplitude * r.powf(epsilon - 2.0) }
                })?;
                let origin = grid.nearest_index(&[0.0, 0.0]).expect("origin is a grid point");
                f.values_mut()[origin] = amplitude * origin_cell_average(*dim, *epsilon, grid.spacing())?;
                Ok(f)
            }
            _ => GridFunction::from_fn(*grid, |x| self.value(x)),
        }
    }

    /// `integral over B(x, r) of V^power`.
    pub fn ball_integral(&self, x: &[f64], r: f64, power: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::DegenerateRegion(format!("radius {r}")));
        }
        let n = self.dim();
        match self {
            Potential::Zero { .. } => Ok(0.0),
            Potential::Constant { value, .. } => Ok(value.powf(power) * unit_ball_volume(n) * r.powi(n as i32)),
            Potential::Shen { epsilon, amplitude, .. } => {
                let a = power * (epsilon - 2.0);
                Ok(amplitude.powf(power) * radial_power_integral(n, a, norm(x), r)?)
            }
            Potential::Tabulated(g) => {
                let ball = Ball::new(x, r);
                let region = g.grid().ball_region(&ball)?;
                let idx: Vec<usize> = region.indices(g.grid()).collect();
                let v = g.values();
                Ok(pairwise_sum_by(0, idx.len(), &|k| v[idx[k]].powf(power)) * g.grid().cell_volume())
            }
        }
    }

    /// Volume of the ball in the measure used by [`Potential::ball_integral`].
    fn ball_volume(&self, x: &[f64], r: f64) -> Result<f64> {
        match self {
            Potential::Tabulated(g) => {
                Ok(g.grid().ball_region(&Ball::new(x, r))?.count as f64 * g.grid().cell_volume())
            }
            _ => Ok(unit_ball_volume(self.dim()) * r.powi(self.dim() as i32)),
        }
    }

    /// `I_r(x) = r^(2-n) * integral of V over B(x, r)`.
    pub fn normalized_mass(&self, x: &[f64], r: f64) -> Result<f64> {
        Ok(r.powi(2 - self.dim() as i32) * self.ball_integral(x, r, 1.0)?)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Mean of `|y|^(epsilon-2)` over the cell `[-h/2, h/2]^n`.
fn origin_cell_average(n: usize, epsilon: f64, h: f64) -> Result<f64> {
    let a = epsilon - 2.0;
    let s = h / 2.0;
    let integral = match n {
        1 => 2.0 * s.powf(a + 1.0) / (a + 1.0),
        2 => {
            // 8 * integral_0^{pi/4} integral_0^{s / cos t} r^(a+1) dr dt
            let ang = integrate(|t| t.cos().powf(-(a + 2.0)), 0.0, PI / 4.0, QuadOptions::default())?;
            8.0 * s.powf(a + 2.0) / (a + 2.0) * ang
        }
        _ => return Err(Error::Config("grids exist only in dimensions 1 and 2".into())),
    };
    Ok(integral / h.powi(n as i32))
}

/// Measure of the sphere `{|y| = s}` inside the open ball `B(x, r)`, `|x| = d`.
pub fn sphere_cap_measure(n: usize, s: f64, d: f64, r: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s + d <= r {
        return unit_sphere_area(n) * s.powi(n as i32 - 1);
    }
    if s >= r + d || s <= d - r {
        return 0.0;
    }
    let c = ((s * s + d * d - r * r) / (2.0 * s * d)).clamp(-1.0, 1.0);
    match n {
        1 => 1.0,
        2 => 2.0 * s * c.acos(),
        3 => 2.0 * PI * s * s * (1.0 - c),
        _ => f64::NAN,
    }
}

// Cap measure on the sphere of radius `s` given `1 - cos` of the cap angle.
fn cap_from_gap(n: usize, s: f64, one_minus_c: f64) -> f64 {
    match n {
        2 => 4.0 * s * (0.5 * one_minus_c).sqrt().asin(),
        3 => 2.0 * PI * s * s * one_minus_c,
        _ => f64::NAN,
    }
}

/// `integral over B(x, r) of |y|^a dy` with `|x| = d`.
///
/// Closed form in dimension 1; in higher dimensions the full-sphere part is
/// integrated exactly and the partial-sphere shell `[|r-d|, r+d]` by adaptive
/// quadrature against the cap measure.
pub fn radial_power_integral(n: usize, a: f64, d: f64, r: f64) -> Result<f64> {
    let contains_origin = d < r;
    if a + n as f64 <= 0.0 && d <= r {
        return Err(Error::DegeneratePotential(format!(
            "|y|^{a} is not integrable near the origin in dimension {n}"
        )));
    }
    if n == 1 {
        // Interval (d - r, d + r).
        let prim = |t: f64| t.signum() * t.abs().powf(a + 1.0) / (a + 1.0);
        if a == -1.0 {
            return Ok(((d + r) / (d - r)).ln());
        }
        return Ok(prim(d + r) - prim(d - r));
    }
    let mut total = 0.0;
    if contains_origin {
        total += unit_sphere_area(n) * (r - d).powf(a + n as f64) / (a + n as f64);
    }
    if d > 0.0 {
        let lo = (r - d).abs();
        let hi = r + d;
        let half = 0.5 * (hi - lo);
        // s = lo + half (1 - cos phi) clusters nodes at both square-root endpoints.
        let f = |phi: f64| {
            // u = s - lo without cancellation, so thin shells far out keep full precision.
            let u = 2.0 * half * (0.5 * phi).sin().powi(2);
            let s = lo + u;
            if s <= 0.0 {
                return 0.0;
            }
            // 1 - cos = (r - s + d)(r + s - d) / (2 s d), factored to avoid cancellation.
            let (p, q) = if d > r { (2.0 * r - u, u) } else { (2.0 * d - u, 2.0 * (r - d) + u) };
            let cap = cap_from_gap(n, s, (p * q / (2.0 * s * d)).clamp(0.0, 2.0));
            s.powf(a) * cap * half * phi.sin()
        };
        total += integrate(f, 0.0, PI, QuadOptions { abs_tol: 0.0, rel_tol: 1e-12, max_intervals: 4000 })?;
    }
    Ok(total)
}

/// Critical radius: finite, or infinite for the zero potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rho {
    Finite(f64),
    Infinite,
}

impl Rho {
    pub fn finite(self) -> Option<f64> {
        match self {
            Rho::Finite(v) => Some(v),
            Rho::Infinite => None,
        }
    }

    /// Whether a ball of radius `r` centred here is supercritical (`r >= rho`).
    /// Always false when `rho` is infinite.
    pub fn is_supercritical(self, r: f64) -> bool {
        match self {
            Rho::Finite(v) => r >= v,
            Rho::Infinite => false,
        }
    }
}

/// Scan/bisection parameters for [`critical_radius`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RhoOptions {
    pub r_min: f64,
    pub r_max: f64,
    #[serde(default = "default_scan_ratio")]
    pub scan_ratio: f64,
    #[serde(default = "default_bisections")]
    pub bisection_steps: u32,
}

fn default_scan_ratio() -> f64 {
    2f64.powf(0.25)
}
fn default_bisections() -> u32 {
    40
}

impl Default for RhoOptions {
    fn default() -> Self {
        RhoOptions { r_min: 1e-6, r_max: 1e8, scan_ratio: default_scan_ratio(), bisection_steps: 40 }
    }
}

/// Result of [`critical_radius`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoSolution {
    pub rho: Rho,
    /// `I_{r_max}(x) <= 1` for a nonzero potential: `rho` was capped at `r_max`.
    pub saturated: bool,
}

/// `sup { r : I_r(x) <= 1 }` by geometric scan and bisection.
///
/// Because `I_r` is only almost monotone the scan keeps the *last* admissible
/// radius before bisecting towards the next scan point.
pub fn critical_radius(v: &Potential, x: &[f64], opts: &RhoOptions) -> Result<RhoSolution> {
    if v.is_zero() {
        return Ok(RhoSolution { rho: Rho::Infinite, saturated: false });
    }
    if !(opts.r_min > 0.0 && opts.r_max > opts.r_min && opts.scan_ratio > 1.0) {
        return Err(Error::Config(format!("invalid rho bracket {opts:?}")));
    }
    let mut r_max = opts.r_max;
    if let Potential::Tabulated(g) = v {
        let wall = (0..g.grid().dim()).map(|a| g.grid().halfwidth() - x[a].abs()).fold(f64::INFINITY, f64::min);
        r_max = r_max.min(wall);
        if r_max <= opts.r_min {
            return Err(Error::OutOfDomain(format!("point {x:?} is within r_min of the wall")));
        }
    }
    let mass = |r: f64| v.normalized_mass(x, r);
    if mass(opts.r_min)? > 1.0 {
        return Err(Error::BracketTooCoarse(format!(
            "I_r(x) > 1 already at r_min = {} for x = {x:?}",
            opts.r_min
        )));
    }
    let mut last_ok = opts.r_min;
    let mut next_bad: Option<f64> = None;
    let mut r = opts.r_min;
    loop {
        let rn = (r * opts.scan_ratio).min(r_max);
        if mass(rn)? <= 1.0 {
            last_ok = rn;
            next_bad = None;
        } else if next_bad.is_none() {
            next_bad = Some(rn);
        }
        if rn >= r_max {
            break;
        }
        r = rn;
    }
    let Some(mut hi) = next_bad else {
        return Ok(RhoSolution { rho: Rho::Finite(r_max), saturated: true });
    };
    let mut lo = last_ok;
    for _ in 0..opts.bisection_steps {
        let mid = 0.5 * (lo + hi);
        if mass(mid)? <= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(RhoSolution { rho: Rho::Finite(lo), saturated: false })
}

/// `rho` at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalRadiusField {
    grid: Grid,
    values: Vec<Rho>,
    saturated: Vec<bool>,
    pub options: RhoOptions,
}

impl CriticalRadiusField {
    pub fn compute(v: &Potential, grid: &Grid, opts: &RhoOptions) -> Result<CriticalRadiusField> {
        if v.dim() != grid.dim() {
            return Err(Error::Config("potential and grid dimensions differ".into()));
        }
        let sols: Vec<RhoSolution> = (0..grid.len())
            .into_par_iter()
            .map(|k| critical_radius(v, &grid.point(k)[..grid.dim()], opts))
            .collect::<Result<_>>()?;
        Ok(CriticalRadiusField {
            grid: *grid,
            values: sols.iter().map(|s| s.rho).collect(),
            saturated: sols.iter().map(|s| s.saturated).collect(),
            options: *opts,
        })
    }

    /// Field from precomputed values.
    pub fn from_values(grid: Grid, values: Vec<Rho>, opts: RhoOptions) -> Result<CriticalRadiusField> {
        if values.len() != grid.len() {
            return Err(Error::Config("rho field length mismatch".into()));
        }
        if values.iter().any(|r| matches!(r, Rho::Finite(v) if !(*v > 0.0))) {
            return Err(Error::Config("rho must be positive".into()));
        }
        let saturated = vec![false; values.len()];
        Ok(CriticalRadiusField { grid, values, saturated, options: opts })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[Rho] {
        &self.values
    }
    pub fn saturated(&self) -> &[bool] {
        &self.saturated
    }
    pub fn at(&self, k: usize) -> Rho {
        self.values[k]
    }
    pub fn is_infinite(&self) -> bool {
        self.values.iter().all(|r| *r == Rho::Infinite)
    }

    /// Value at the grid point nearest to `x`.
    pub fn at_point(&self, x: &[f64]) -> Result<Rho> {
        self.grid
            .nearest_index(x)
            .map(|k| self.values[k])
            .ok_or_else(|| Error::OutOfDomain(format!("point {x:?} outside the rho grid")))
    }

    /// Supercritical flag of every ball in a family.
    pub fn supercritical_flags(&self, family: &BallFamily) -> Result<Vec<bool>> {
        (0..family.len())
            .map(|k| {
                let b = family.ball(k);
                Ok(self.at_point(&b.center[..self.grid.dim()])?.is_supercritical(b.radius))
            })
            .collect()
    }

    /// Smallest finite value over grid points satisfying `pred`.
    pub fn inf_where(&self, pred: impl Fn(&[f64]) -> bool) -> Rho {
        let mut best = Rho::Infinite;
        for k in 0..self.grid.len() {
            let p = self.grid.point(k);
            if pred(&p[..self.grid.dim()]) {
                if let Rho::Finite(v) = self.values[k] {
                    if best.finite().map_or(true, |b| v < b) {
                        best = Rho::Finite(v);
                    }
                }
            }
        }
        best
    }
}

/// `(mean of V^q over B)^(1/q) / (mean of V over B)`.
pub fn rh_ratio(v: &Potential, b: &Ball, q: f64) -> Result<f64> {
    if !matches!(v, Potential::Tabulated(_)) {
        v.check_rh_exponent(q)?;
    }
    let c = &b.center[..v.dim()];
    let m1 = v.ball_integral(c, b.radius, 1.0)?;
    if !(m1 > 0.0) {
        return Err(Error::DegeneratePotential(format!("V vanishes on {b:?}")));
    }
    let vol = v.ball_volume(c, b.radius)?;
    let mq = v.ball_integral(c, b.radius, q)?;
    Ok((mq / vol).powf(1.0 / q) / (m1 / vol))
}

/// Sup of [`rh_ratio`] over a family, with the maximizing ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhConstant {
    pub value: f64,
    pub argsup: Ball,
}

pub fn rh_constant(v: &Potential, q: f64, family: &BallFamily) -> Result<RhConstant> {
    if !matches!(v, Potential::Tabulated(_)) {
        v.check_rh_exponent(q)?;
    }
    let ratios: Vec<Option<f64>> = (0..family.len())
        .into_par_iter()
        .map(|k| match rh_ratio(v, &family.ball(k), q) {
            Ok(r) => Ok(Some(r)),
            Err(Error::DegeneratePotential(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(f64, usize)> = None;
    for (k, r) in ratios.iter().enumerate() {
        if let Some(r) = r {
            if best.map_or(true, |(b, _)| *r > b) {
                best = Some((*r, k));
            }
        }
    }
    let (value, k) = best.ok_or_else(|| Error::DegeneratePotential("V vanishes on every ball".into()))?;
    Ok(RhConstant { value, argsup: family.ball(k) })
}

/// Smallest `C` with `I_r(x) <= C (R/r)^(n/q - 2) I_R(x)` over the given
/// `(r, R)` pairs.
pub fn almost_monotonicity_check(v: &Potential, x: &[f64], pairs: &[(f64, f64)], q: f64) -> Result<f64> {
    let n = v.dim() as f64;
    let mut worst = 0.0f64;
    for &(r, big) in pairs {
        if !(r > 0.0 && r < big) {
            return Err(Error::Config(format!("pair ({r}, {big}) must satisfy 0 < r < R")));
        }
        let ib = v.normalized_mass(x, big)?;
        if !(ib > 0.0) {
            return Err(Error::DegeneratePotential(format!("I_R(x) = 0 at R = {big}")));
        }
        let ir = v.normalized_mass(x, r)?;
        worst = worst.max(ir / ((big / r).powf(n / q - 2.0) * ib));
    }
    Ok(worst)
}

/// Constants of the slow-variation estimate
/// `c^-1 (1 + |x-y|/rho(x))^(-k0) rho(x) <= rho(y) <= c (1 + |x-y|/rho(x))^(k0/(k0+1)) rho(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowVariationFit {
    pub c: f64,
    pub k0: u32,
    /// Max over pairs of the needed constant divided by `c`; at most 1.
    pub violation_ratio: f64,
    /// Max of `max(rho(x)/rho(y), rho(y)/rho(x)) / (c 2^k0)` over pairs with `|x-y| < rho(x)`.
    pub local_ratio: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowVariationOptions {
    pub k0_max: u32,
    /// Relative slack added to the minimal constant.
    pub tolerance: f64,
    pub c_max: f64,
}

impl Default for SlowVariationOptions {
    fn default() -> Self {
        SlowVariationOptions { k0_max: 8, tolerance: 1e-9, c_max: 1e6 }
    }
}

/// Fit the smallest `c` (for the smallest workable `k0`) on sampled index pairs.
pub fn slow_variation_fit(
    field: &CriticalRadiusField,
    pairs: &[(usize, usize)],
    opts: &SlowVariationOptions,
) -> Result<SlowVariationFit> {
    let grid = field.grid();
    let mut data = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let (Rho::Finite(rx), Rho::Finite(ry)) = (field.at(i), field.at(j)) else {
            return Err(Error::FitFailure("rho is infinite at a sampled point".into()));
        };
        let (px, py) = (grid.point(i), grid.point(j));
        let dist = (px[0] - py[0]).hypot(px[1] - py[1]);
        data.push((rx, ry, dist));
    }
    if data.is_empty() {
        return Err(Error::FitFailure("no sample pairs".into()));
    }
    let mut best: Option<(f64, u32)> = None;
    for k0 in 1..=opts.k0_max {
        let k = k0 as f64;
        let need = data
            .iter()
            .map(|&(rx, ry, d)| {
                let s = 1.0 + d / rx;
                let upper = ry / (rx * s.powf(k / (k + 1.0)));
                let lower = rx / (ry * s.powf(k));
                upper.max(lower)
            })
            .fold(1.0f64, f64::max);
        if best.map_or(true, |(c, _)| need < c * (1.0 - 1e-12)) {
            best = Some((need, k0));
        }
    }
    let (need, k0) = best.expect("k0_max >= 1");
    if need > opts.c_max {
        return Err(Error::FitFailure(format!("needed constant {need:.3e} exceeds c_max = {}", opts.c_max)));
    }
    let c = need * (1.0 + opts.tolerance);
    let local = data
        .iter()
        .filter(|&&(rx, _, d)| d < rx)
        .map(|&(rx, ry, _)| (rx / ry).max(ry / rx) / (c * 2f64.powi(k0 as i32)))
        .fold(0.0f64, f64::max);
    Ok(SlowVariationFit { c, k0, violation_ratio: need / c, local_ratio: local, pairs: data.len() })
}
