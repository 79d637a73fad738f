//! Tent-space and Carleson functionals on sampled half-space fields.
//!
//! The box over a ball `B` is the cylinder `B x (0, r_B]`. Integrals in `t`
//! use the log-trapezoid weights of the ladder truncated at the last node
//! `t_j <= r_B`; integrals in `x` are cell sums.

use crate::error::{Channel, Error, Result};
use crate::family::{bucketed_sup, BallFamily, CurveMode, LimitCurve};
use crate::grid::{mean_oscillation, Ball, GridFunction, MomentTable, Region};
use crate::numeric::{pairwise_sum, pairwise_sum_by, Dd};
use crate::semigroup::{poisson, square_function_field, HalfSpaceFunction, SpectralOperator, TLadder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Quadrature used for every box integral.
pub const QUADRATURE: &str = "x: cell sums; t: log-trapezoid on the ladder, truncated at r_B";

/// Per-ball box integrals over a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlesonReport {
    pub values: Vec<f64>,
    pub sup: f64,
    pub argsup: Option<Ball>,
    pub quadrature: String,
}

fn check_radius(ladder: &TLadder, r: f64) -> Result<()> {
    if r < ladder.t_min() * (1.0 - 1e-12) || r > ladder.t_max() * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "ball radius {r} is not covered by the ladder [{}, {}]",
            ladder.t_min(),
            ladder.t_max()
        )));
    }
    Ok(())
}

/// Gradient channels of a Poisson extension: `t du/dt` and every `t du/dx_i`.
pub fn gradient_channels(u: &HalfSpaceFunction) -> Result<Vec<Channel>> {
    if !u.has(Channel::TDtU) {
        return Err(Error::MissingChannel(Channel::TDtU));
    }
    let mut out = vec![Channel::TDtU];
    for a in 0..u.grid().dim() as u8 {
        if !u.has(Channel::TGradX(a)) {
            return Err(Error::MissingChannel(Channel::TGradX(a)));
        }
        out.push(Channel::TGradX(a));
    }
    Ok(out)
}

/// `r_B^-n sum_{t_j <= r_B} w_j sum_{x in B} |F(x, t_j)|² h^n`, summing the
/// squares of every channel of `F`.
pub fn carleson_box(field: &HalfSpaceFunction, ball: &Ball) -> Result<f64> {
    carleson_box_channels(field, ball, field.channels())
}

pub fn carleson_box_channels(field: &HalfSpaceFunction, ball: &Ball, channels: &[Channel]) -> Result<f64> {
    let g = field.grid();
    let ladder = field.ladder();
    check_radius(ladder, ball.radius)?;
    let region = g.ball_region(ball)?;
    let k = ladder.count_upto(ball.radius);
    let mut acc = Dd::ZERO;
    for j in 0..k {
        let e = field.energy_slice(channels, j)?;
        let s = pairwise_sum(&region.indices(g).map(|i| e[i]).collect::<Vec<_>>());
        acc += Dd::product(ladder.truncated_weight(j, k), s);
    }
    Ok(acc.to_f64() * g.cell_volume() / ball.radius.powi(g.dim() as i32))
}

/// Box integrals for every ball of a family, streaming one ladder slice at a
/// time through a prefix-sum table.
pub fn carleson_scan(field: &HalfSpaceFunction, family: &BallFamily, channels: &[Channel]) -> Result<Vec<f64>> {
    let g = field.grid();
    if g != family.grid() {
        return Err(Error::Config("field and family live on different grids".into()));
    }
    let ladder = field.ladder();
    let radii = family.radii();
    for &r in &radii {
        check_radius(ladder, r)?;
    }
    let counts: Vec<usize> = family.members().iter().map(|m| ladder.count_upto(radii[m.radius_index])).collect();
    let regions: Vec<Region> = (0..family.len()).into_par_iter().map(|k| family.region(k)).collect();
    let mut acc = vec![Dd::ZERO; family.len()];
    let kmax = counts.iter().copied().max().unwrap_or(0);
    for j in 0..kmax {
        let table = MomentTable::first_moment(*g, &field.energy_slice(channels, j)?);
        acc.par_iter_mut().enumerate().for_each(|(b, a)| {
            if j < counts[b] {
                *a += table.sum(&regions[b]).mul_f64(ladder.truncated_weight(j, counts[b]));
            }
        });
    }
    let n = g.dim() as i32;
    Ok(acc
        .iter()
        .zip(family.members())
        .map(|(a, m)| a.to_f64() * g.cell_volume() / radii[m.radius_index].powi(n))
        .collect())
}

fn report(values: Vec<f64>, family: &BallFamily) -> CarlesonReport {
    let mut best: Option<usize> = None;
    for (k, &v) in values.iter().enumerate() {
        if best.map_or(true, |b| v > values[b]) {
            best = Some(k);
        }
    }
    CarlesonReport {
        sup: best.map_or(0.0, |b| values[b]),
        argsup: best.map(|b| family.ball(b)),
        values,
        quadrature: QUADRATURE.to_string(),
    }
}

/// Carleson functional of every channel of `F` over a family.
pub fn carleson_norm(field: &HalfSpaceFunction, family: &BallFamily) -> Result<CarlesonReport> {
    if family.is_empty() {
        return Err(Error::Config("empty ball family".into()));
    }
    Ok(report(carleson_scan(field, family, field.channels())?, family))
}

/// Sup over the family of the box integral of `|t grad u|²`.
pub fn hmo_norm(u: &HalfSpaceFunction, family: &BallFamily) -> Result<CarlesonReport> {
    let ch = gradient_channels(u)?;
    if family.is_empty() {
        return Err(Error::Config("empty ball family".into()));
    }
    Ok(report(carleson_scan(u, family, &ch)?, family))
}

fn three_curves(values: &[f64], family: &BallFamily) -> Result<[LimitCurve; 3]> {
    let m: Vec<f64> = values.iter().map(|v| v.max(0.0).sqrt()).collect();
    Ok([
        bucketed_sup(&m, family, CurveMode::SmallRadius, None)?,
        bucketed_sup(&m, family, CurveMode::LargeRadius, None)?,
        bucketed_sup(&m, family, CurveMode::FarFromOrigin, None)?,
    ])
}

/// Curves of `carleson_box(F, B)^(1/2)` in the small-radius, large-radius
/// and far-from-origin modes.
pub fn eta_curves(field: &HalfSpaceFunction, family: &BallFamily) -> Result<[LimitCurve; 3]> {
    three_curves(&carleson_scan(field, family, field.channels())?, family)
}

/// Same curves as [`eta_curves`] for the gradient energy of an extension.
pub fn beta_curves(u: &HalfSpaceFunction, family: &BallFamily) -> Result<[LimitCurve; 3]> {
    let ch = gradient_channels(u)?;
    three_curves(&carleson_scan(u, family, &ch)?, family)
}

/// Box integral over the true tent `{(y, t): |y - x_B| < r_B - t}`, by
/// direct summation. Slow; used as an oracle for the cylinder.
pub fn exact_tent_box(field: &HalfSpaceFunction, ball: &Ball) -> Result<f64> {
    let g = field.grid();
    let ladder = field.ladder();
    check_radius(ladder, ball.radius)?;
    g.ball_region(ball)?;
    let k = ladder.count_upto(ball.radius);
    let mut acc = Dd::ZERO;
    for j in 0..k {
        let t = ladder.points()[j];
        if t >= ball.radius {
            continue;
        }
        let (region, _) = g.clipped_ball_region(&Ball { center: ball.center, radius: ball.radius - t });
        let e = field.energy_slice(field.channels(), j)?;
        let s = pairwise_sum(&region.indices(g).map(|i| e[i]).collect::<Vec<_>>());
        acc += Dd::product(ladder.truncated_weight(j, k), s);
    }
    Ok(acc.to_f64() * g.cell_volume() / ball.radius.powi(g.dim() as i32))
}

/// Conical square function at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeValue {
    pub value: f64,
    /// The cone left the box before `t_max`; the value only counts the part
    /// inside.
    pub truncated: bool,
}

/// `A(F)(x) = (sum_j w_j t_j^-n sum_{|y-x| < t_j} |F(y, t_j)|² h^n)^(1/2)`.
pub fn cone_square_function(field: &HalfSpaceFunction, x: &[f64]) -> Result<ConeValue> {
    let g = field.grid();
    if x.len() != g.dim() {
        return Err(Error::Config("point has the wrong dimension".into()));
    }
    let ladder = field.ladder();
    let n = g.dim() as i32;
    let mut acc = Dd::ZERO;
    let mut truncated = false;
    for (j, &t) in ladder.points().iter().enumerate() {
        let (region, clipped) = g.clipped_ball_region(&Ball::new(x, t));
        truncated |= clipped;
        let e = field.energy_slice(field.channels(), j)?;
        let s = pairwise_sum(&region.indices(g).map(|i| e[i]).collect::<Vec<_>>());
        acc += Dd::product(ladder.weights()[j] / t.powi(n), s);
    }
    Ok(ConeValue { value: (acc.to_f64() * g.cell_volume()).max(0.0).sqrt(), truncated })
}

/// Cone square function at every grid point.
pub fn cone_square_field(field: &HalfSpaceFunction) -> Result<Vec<ConeValue>> {
    let g = field.grid();
    let ladder = field.ladder();
    let n = g.dim() as i32;
    let mut acc = vec![Dd::ZERO; g.len()];
    let mut trunc = vec![false; g.len()];
    for (j, &t) in ladder.points().iter().enumerate() {
        let table = MomentTable::first_moment(*g, &field.energy_slice(field.channels(), j)?);
        let w = ladder.weights()[j] / t.powi(n);
        acc.par_iter_mut().zip(trunc.par_iter_mut()).enumerate().for_each(|(k, (a, tr))| {
            let p = g.point(k);
            let (region, clipped) = g.clipped_ball_region(&Ball { center: p, radius: t });
            *tr |= clipped;
            *a += table.sum(&region).mul_f64(w);
        });
    }
    Ok(acc
        .iter()
        .zip(trunc)
        .map(|(a, truncated)| ConeValue { value: (a.to_f64() * g.cell_volume()).max(0.0).sqrt(), truncated })
        .collect())
}

/// Exponent of a tent space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TentExponent {
    One,
    Two,
    Infinity,
}

/// Tent-space norm with the number of points whose cone was truncated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TentNorm {
    pub value: f64,
    pub truncated_points: usize,
}

/// `||F||_{T_2^p}`: the `L^p` norm of the cone function for `p` in {1, 2}
/// and the sup of `carleson_box^(1/2)` over the family for `p = inf`.
pub fn t2p_norm(field: &HalfSpaceFunction, p: TentExponent, family: Option<&BallFamily>) -> Result<TentNorm> {
    let hn = field.grid().cell_volume();
    match p {
        TentExponent::Infinity => {
            let fam = family.ok_or_else(|| Error::Config("the T_2^inf norm needs a ball family".into()))?;
            let r = carleson_norm(field, fam)?;
            Ok(TentNorm { value: r.sup.max(0.0).sqrt(), truncated_points: 0 })
        }
        TentExponent::One | TentExponent::Two => {
            let a = cone_square_field(field)?;
            let truncated_points = a.iter().filter(|c| c.truncated).count();
            let value = if p == TentExponent::One {
                pairwise_sum_by(0, a.len(), &|k| a[k].value) * hn
            } else {
                (pairwise_sum_by(0, a.len(), &|k| a[k].value * a[k].value) * hn).sqrt()
            };
            Ok(TentNorm { value, truncated_points })
        }
    }
}

/// `sum_j w_j sum_x |F(x, t_j)|² h^n`, the right side of the Fubini
/// identity `||F||_{T_2^2}² = |B(0,1)| int int |F|² dx dt/t`.
pub fn half_space_energy(field: &HalfSpaceFunction) -> Result<f64> {
    let g = field.grid();
    let mut acc = Dd::ZERO;
    for j in 0..field.ladder().len() {
        acc += Dd::product(field.ladder().weights()[j], pairwise_sum(&field.energy_slice(field.channels(), j)?));
    }
    Ok(acc.to_f64() * g.cell_volume())
}

/// Prefix-sum tables of `f - exp(-r sqrt L) f`, built on demand per radius.
pub struct ResidualTables<'a> {
    f: &'a GridFunction,
    op: &'a SpectralOperator,
    tables: BTreeMap<u64, MomentTable>,
}

impl<'a> ResidualTables<'a> {
    pub fn new(f: &'a GridFunction, op: &'a SpectralOperator) -> Result<Self> {
        if f.grid() != op.grid() {
            return Err(Error::Config("function and operator live on different grids".into()));
        }
        Ok(ResidualTables { f, op, tables: BTreeMap::new() })
    }

    pub fn table(&mut self, r: f64) -> Result<&MomentTable> {
        let key = r.to_bits();
        if !self.tables.contains_key(&key) {
            let g = self.f.sub(&poisson(self.op, self.f, r)?)?;
            self.tables.insert(key, MomentTable::new(&g));
        }
        Ok(&self.tables[&key])
    }

    /// `(mean over B of |f - exp(-r_B sqrt L) f|²)^(1/2)`.
    pub fn rms(&mut self, b: &Ball) -> Result<f64> {
        let region = self.op.grid().ball_region(b)?;
        Ok(self.table(b.radius)?.moments(&region).mean_square().sqrt())
    }
}

/// Sub-family used by `delta_k`: radii `r_B/2, r_B, 2 r_B`, centres on a
/// stride `r_B/4`, every ball inside `2^(k+2) B`.
pub fn delta_subfamily(ball: &Ball, k: u32, dim: usize) -> Vec<Ball> {
    let r = ball.radius;
    let big = r * 2f64.powi(k as i32 + 2);
    let s = r / 4.0;
    let mut out = Vec::new();
    for rp in [r / 2.0, r, 2.0 * r] {
        let reach = big - rp;
        let m = (reach / s + 1e-9).floor() as i64;
        let rows = if dim == 2 { -m..=m } else { 0..=0 };
        for dj in rows {
            for di in -m..=m {
                let d = [di as f64 * s, dj as f64 * s];
                if (d[0] * d[0] + d[1] * d[1]).sqrt() <= reach * (1.0 + 1e-12) {
                    out.push(Ball { center: [ball.center[0] + d[0], ball.center[1] + d[1]], radius: rp });
                }
            }
        }
    }
    out
}

/// `delta_k(f, B)`: sup over the sub-family of the semigroup residual rms.
pub fn delta_k(f: &GridFunction, op: &SpectralOperator, ball: &Ball, k: u32) -> Result<f64> {
    let mut t = ResidualTables::new(f, op)?;
    delta_k_with(&mut t, ball, k)
}

pub fn delta_k_with(tables: &mut ResidualTables<'_>, ball: &Ball, k: u32) -> Result<f64> {
    let g = *tables.op.grid();
    let outer = ball.dilate(2f64.powi(k as i32 + 2));
    g.ball_region(&outer).map_err(|e| match e {
        Error::OutOfDomain(m) => Error::OutOfDomain(format!("2^(k+2)B escapes the box: {m}")),
        e => e,
    })?;
    let balls = delta_subfamily(ball, k, g.dim());
    for r in [ball.radius / 2.0, ball.radius, 2.0 * ball.radius] {
        tables.table(r)?;
    }
    let tabs = &tables.tables;
    let vals: Vec<f64> = balls
        .par_iter()
        .map(|b| {
            let region = g.ball_region(b)?;
            Ok(tabs[&b.radius.to_bits()].moments(&region).mean_square().sqrt())
        })
        .collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// Both sides of the key local inequality for one ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyInequality {
    pub ball: Ball,
    /// `(|B|^-1 int_0^{r_B} int_B |t sqrt L exp(-t sqrt L) f|² dx dt/t)^(1/2)`.
    pub lhs: f64,
    /// `sum_{k <= k_max} 2^-k delta_k(f, B)`.
    pub rhs: f64,
    pub deltas: Vec<f64>,
    /// `lhs / rhs`; `None` when both sides vanish up to round-off.
    pub ratio: Option<f64>,
    /// `2^-k_max delta_{k_max}`: size of the omitted tail if the `delta_k`
    /// have saturated at `k_max`.
    pub tail_bound: f64,
}

/// Evaluator sharing the square-function field and the residual tables across
/// many balls.
pub struct KeyInequalityEvaluator<'a> {
    field: HalfSpaceFunction,
    tables: ResidualTables<'a>,
    /// Values below this are spectral round-off and count as zero.
    noise: f64,
}

impl<'a> KeyInequalityEvaluator<'a> {
    /// `ladder` must cover the radii of every ball that will be evaluated.
    pub fn new(f: &'a GridFunction, op: &'a SpectralOperator, ladder: &TLadder) -> Result<Self> {
        Ok(KeyInequalityEvaluator {
            field: square_function_field(op, f, ladder)?,
            tables: ResidualTables::new(f, op)?,
            noise: 64.0 * f64::EPSILON * f.max_abs(),
        })
    }

    pub fn evaluate(&mut self, ball: &Ball, k_max: u32) -> Result<KeyInequality> {
        let g = *self.field.grid();
        let region = g.ball_region(ball)?;
        let cb = carleson_box(&self.field, ball)?;
        let measure = region.count as f64 * g.cell_volume();
        let lhs = (cb * ball.radius.powi(g.dim() as i32) / measure).max(0.0).sqrt();
        let deltas = (0..=k_max).map(|k| delta_k_with(&mut self.tables, ball, k)).collect::<Result<Vec<_>>>()?;
        let rhs = pairwise_sum_by(0, deltas.len(), &|k| deltas[k] * 0.5f64.powi(k as i32));
        let ratio = if rhs > self.noise {
            Some(lhs / rhs)
        } else if lhs <= self.noise {
            None
        } else {
            Some(f64::INFINITY)
        };
        let tail_bound = 0.5f64.powi(k_max as i32) * deltas[k_max as usize];
        Ok(KeyInequality { ball: *ball, lhs, rhs, deltas, ratio, tail_bound })
    }
}

/// Key inequality for a single ball, with a ladder from `h` to `r_B`.
pub fn key_inequality_ratio(f: &GridFunction, op: &SpectralOperator, ball: &Ball, k_max: u32) -> Result<KeyInequality> {
    let h = op.grid().spacing();
    let ladder = TLadder::geometric(h.min(ball.radius / 2.0), ball.radius, 16)?;
    KeyInequalityEvaluator::new(f, op, &ladder)?.evaluate(ball, k_max)
}

/// `sigma_k(f, B) = max over j <= k of the mean |f - f_Q| over Q = 4^(j+1) B`.
pub fn sigma_k(f: &GridFunction, ball: &Ball, k: u32) -> Result<f64> {
    let mut best = 0.0f64;
    for j in 0..=k {
        best = best.max(mean_oscillation(f, &ball.dilate(4f64.powi(j as i32 + 1)), 1.0)?);
    }
    Ok(best)
}

/// The two sides of the reproducing identity
/// `int f g = 4 int_0^inf int (t sqrt L e^{-t sqrt L} f)(t sqrt L e^{-t sqrt L} g) dx dt/t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs - rhs| / |lhs|`, or the absolute error when `lhs = 0`.
    pub error: f64,
    pub relative: bool,
}

pub fn reproducing_pairing_check(
    f: &GridFunction,
    g: &GridFunction,
    op: &SpectralOperator,
    ladder: &TLadder,
) -> Result<PairingReport> {
    if f.grid() != g.grid() {
        return Err(Error::Config("f and g live on different grids".into()));
    }
    let hn = op.grid().cell_volume();
    let fv = f.values();
    let gv = g.values();
    let lhs = pairwise_sum_by(0, fv.len(), &|i| fv[i] * gv[i]) * hn;
    let qf = square_function_field(op, f, ladder)?;
    let qg = square_function_field(op, g, ladder)?;
    let per_t: Vec<f64> = (0..ladder.len())
        .into_par_iter()
        .map(|j| {
            let a = qf.slice(Channel::Square, j)?;
            let b = qg.slice(Channel::Square, j)?;
            Ok(pairwise_sum_by(0, a.len(), &|i| a[i] * b[i]))
        })
        .collect::<Result<_>>()?;
    let rhs = 4.0 * hn * pairwise_sum_by(0, per_t.len(), &|j| ladder.weights()[j] * per_t[j]);
    let relative = lhs != 0.0;
    let error = if relative { (lhs - rhs).abs() / lhs.abs() } else { (lhs - rhs).abs() };
    Ok(PairingReport { lhs, rhs, error, relative })
}
