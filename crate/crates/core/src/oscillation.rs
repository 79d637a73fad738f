//! Mean-oscillation norms adapted to `L` and their limiting curves.

use crate::error::{Error, Result};
use crate::family::{bucketed_sup, BallFamily, CurveMode, LimitCurve};
use crate::grid::{region_mean_power, region_oscillation, Ball, GridFunction, Moments, MomentTable};
use crate::potential::{CriticalRadiusField, Rho};
use crate::semigroup::{poisson, SpectralOperator};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A sup over a family together with the ball attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub value: f64,
    pub argsup: Option<Ball>,
}

fn sup_of(values: &[f64], family: &BallFamily, keep: impl Fn(usize) -> bool) -> NormReport {
    let mut best: Option<(f64, usize)> = None;
    for (k, &v) in values.iter().enumerate() {
        if keep(k) && best.map_or(true, |(b, _)| v > b) {
            best = Some((v, k));
        }
    }
    match best {
        Some((value, k)) => NormReport { value, argsup: Some(family.ball(k)) },
        None => NormReport { value: 0.0, argsup: None },
    }
}

fn check_family(f: &GridFunction, family: &BallFamily) -> Result<()> {
    if family.is_empty() {
        return Err(Error::Config("empty ball family".into()));
    }
    if f.grid() != family.grid() {
        return Err(Error::Config("function and family live on different grids".into()));
    }
    Ok(())
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Config(format!("oscillation exponent must be in [1, inf), got {p}")));
    }
    Ok(())
}

/// Per-ball moments of `f` (count, sum, sum of squares).
pub fn family_moments(f: &GridFunction, family: &BallFamily) -> Vec<Moments> {
    let table = MomentTable::new(f);
    (0..family.len()).into_par_iter().map(|k| table.moments(&family.region(k))).collect()
}

/// `(mean over B of |f - f_B|^p)^(1/p)` for every ball of the family.
pub fn oscillations(f: &GridFunction, family: &BallFamily, p: f64) -> Result<Vec<f64>> {
    check_family(f, family)?;
    check_p(p)?;
    if p == 2.0 {
        return Ok(family_moments(f, family).iter().map(|m| m.variance().sqrt()).collect());
    }
    Ok(family.evaluate(|_, _, r| region_oscillation(f, r, p)))
}

/// `(mean over B of |f|^p)^(1/p)` for every ball of the family.
pub fn mean_powers(f: &GridFunction, family: &BallFamily, p: f64) -> Result<Vec<f64>> {
    check_family(f, family)?;
    check_p(p)?;
    if p == 2.0 {
        return Ok(family_moments(f, family).iter().map(|m| m.mean_square().sqrt()).collect());
    }
    Ok(family.evaluate(|_, _, r| region_mean_power(f, r, p)))
}

/// Sup over the family of the `p`-mean oscillation.
pub fn bmo_norm(f: &GridFunction, family: &BallFamily, p: f64) -> Result<NormReport> {
    let osc = oscillations(f, family, p)?;
    Ok(sup_of(&osc, family, |_| true))
}

/// The two parts of the BMO_L norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub p: f64,
    /// Sup of the oscillation over subcritical balls `r_B < rho(x_B)`.
    pub bmo_part: NormReport,
    /// Sup of `(mean |f|^p)^(1/p)` over supercritical balls; absent when
    /// `rho` is infinite everywhere.
    pub supercritical_part: Option<NormReport>,
    pub family_size: usize,
}

impl OscillationReport {
    pub fn norm(&self) -> f64 {
        self.bmo_part.value + self.supercritical_part.map_or(0.0, |s| s.value)
    }
}

/// BMO_L norm on a family, split into its oscillation and supercritical parts.
pub fn bmo_l_norm(f: &GridFunction, rho: &CriticalRadiusField, family: &BallFamily, p: f64) -> Result<OscillationReport> {
    check_family(f, family)?;
    let sup = rho.supercritical_flags(family)?;
    let osc = oscillations(f, family, p)?;
    let bmo_part = sup_of(&osc, family, |k| !sup[k]);
    let supercritical_part = if rho.is_infinite() {
        None
    } else {
        let mp = mean_powers(f, family, p)?;
        Some(sup_of(&mp, family, |k| sup[k]))
    };
    Ok(OscillationReport { p, bmo_part, supercritical_part, family_size: family.len() })
}

/// Moments of `f - exp(-r_B sqrt L) f` over each ball.
fn semigroup_residuals(f: &GridFunction, op: &SpectralOperator, family: &BallFamily) -> Result<Vec<Moments>> {
    check_family(f, family)?;
    if op.grid() != f.grid() {
        return Err(Error::Config("operator and function live on different grids".into()));
    }
    let x = op.grid().halfwidth();
    let radii = family.radii();
    if let Some(r) = radii.iter().find(|&&r| r > x) {
        return Err(Error::Config(format!("radius {r} is outside the semigroup time range (0, {x}]")));
    }
    let tables: Vec<MomentTable> = radii
        .par_iter()
        .map(|&r| Ok(MomentTable::new(&f.sub(&poisson(op, f, r)?)?)))
        .collect::<Result<_>>()?;
    Ok((0..family.len())
        .into_par_iter()
        .map(|k| tables[family.members()[k].radius_index].moments(&family.region(k)))
        .collect())
}

/// Sup over the family of `(mean over B of |f - exp(-r_B sqrt L) f|²)^(1/2)`.
pub fn tilde_bmo_l_norm(f: &GridFunction, op: &SpectralOperator, family: &BallFamily) -> Result<NormReport> {
    let m = semigroup_residuals(f, op, family)?;
    let v: Vec<f64> = m.iter().map(|m| m.mean_square().sqrt()).collect();
    Ok(sup_of(&v, family, |_| true))
}

/// Curves for `m(B) = (r_B^-n int_B |f - exp(-r_B sqrt L) f|²)^(1/2)` in the
/// small-radius, large-radius and far-from-origin modes.
pub fn gamma_curves(f: &GridFunction, op: &SpectralOperator, family: &BallFamily) -> Result<[LimitCurve; 3]> {
    let m = semigroup_residuals(f, op, family)?;
    let g = f.grid();
    let n = g.dim() as i32;
    let v: Vec<f64> = m
        .iter()
        .enumerate()
        .map(|(k, m)| (m.sum_sq.to_f64() * g.cell_volume() / family.ball(k).radius.powi(n)).sqrt())
        .collect();
    Ok([
        bucketed_sup(&v, family, CurveMode::SmallRadius, None)?,
        bucketed_sup(&v, family, CurveMode::LargeRadius, None)?,
        bucketed_sup(&v, family, CurveMode::FarFromOrigin, None)?,
    ])
}

/// The five curves: oscillation in the small-radius, large-radius and
/// far-from-origin modes, and the rms in the two supercritical modes.
pub fn tilde_gamma_curves(f: &GridFunction, rho: &CriticalRadiusField, family: &BallFamily) -> Result<[LimitCurve; 5]> {
    check_family(f, family)?;
    let m = family_moments(f, family);
    let osc: Vec<f64> = m.iter().map(|m| m.variance().sqrt()).collect();
    let rms: Vec<f64> = m.iter().map(|m| m.mean_square().sqrt()).collect();
    let sup = rho.supercritical_flags(family)?;
    Ok([
        bucketed_sup(&osc, family, CurveMode::SmallRadius, None)?,
        bucketed_sup(&osc, family, CurveMode::LargeRadius, None)?,
        bucketed_sup(&osc, family, CurveMode::FarFromOrigin, None)?,
        bucketed_sup(&rms, family, CurveMode::LargeSupercritical, Some(&sup))?,
        bucketed_sup(&rms, family, CurveMode::FarSupercritical, Some(&sup))?,
    ])
}

/// Smallest `C` with `|f_B| <= C (1 + log(rho(x_B)/r_B)) ||f||` over the
/// subcritical balls of the family, where `||f||` is the BMO_L norm.
pub fn log_bound_check(f: &GridFunction, rho: &CriticalRadiusField, family: &BallFamily, p: f64) -> Result<NormReport> {
    let norm = bmo_l_norm(f, rho, family, p)?.norm();
    if !(norm > 0.0) {
        return Err(Error::DegenerateNorm("BMO_L norm is zero".into()));
    }
    let m = family_moments(f, family);
    let mut best: Option<(f64, usize)> = None;
    for k in 0..family.len() {
        let b = family.ball(k);
        let Rho::Finite(r0) = rho.at_point(&b.center[..f.grid().dim()])? else { continue };
        if b.radius >= r0 {
            continue;
        }
        let ratio = m[k].mean().abs() / ((1.0 + (r0 / b.radius).ln()) * norm);
        if best.map_or(true, |(v, _)| ratio > v) {
            best = Some((ratio, k));
        }
    }
    Ok(match best {
        Some((value, k)) => NormReport { value, argsup: Some(family.ball(k)) },
        None => NormReport { value: 0.0, argsup: None },
    })
}

/// Outcome of a vanishing test on a limit curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Vanishing,
    NonVanishing,
    Inconclusive,
}

/// Default verdict parameters: tolerance relative to a reference norm and the
/// minimal decay factor.
pub const DEFAULT_TOL_FRACTION: f64 = 0.05;
pub const DEFAULT_DECAY_FACTOR: f64 = 4.0;

/// `Vanishing` iff the terminal value is at most `tol` and the curve decays
/// by at least `factor` from its first to its last present bucket;
/// `NonVanishing` iff the terminal value is at least `3 tol` and the decay is
/// below `factor`; `Inconclusive` otherwise.
pub fn vanishing_verdict(curve: &LimitCurve, tol: f64, factor: f64) -> Result<Verdict> {
    let pts = curve.in_limit_order();
    if pts.len() < 3 {
        return Err(Error::Config(format!("verdict needs 3 present buckets, curve has {}", pts.len())));
    }
    let first = pts[0].1;
    let last = pts[pts.len() - 1].1;
    let decays = first >= factor * last;
    Ok(if last <= tol && decays {
        Verdict::Vanishing
    } else if last >= 3.0 * tol && !decays {
        Verdict::NonVanishing
    } else {
        Verdict::Inconclusive
    })
}
