//! Finite ball families on a grid and sup-over-bucket limit curves.

use crate::error::{Error, Result};
use crate::grid::{Ball, DiscStencil, Grid, Region};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// How the radii of a family are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusSpec {
    /// `min * ratio^k` up to `max`, snapped to multiples of `h`.
    /// `min` defaults to `4h`.
    Geometric { min: Option<f64>, max: f64, ratio: f64 },
    /// Explicit radii, each a multiple of `h`.
    List(Vec<f64>),
}

/// Parameters of a ball family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyPolicy {
    /// Centre spacing (rounded to a multiple of `h`).
    pub center_stride: f64,
    /// If set, balls of radius `r` use stride `max(center_stride, fraction * r)`.
    #[serde(default)]
    pub stride_fraction: Option<f64>,
    pub radii: RadiusSpec,
    /// Scale ladder used to tag balls; defaults to `r_min * 2^j` up to `2X`.
    #[serde(default)]
    pub ladder: Option<Vec<f64>>,
    /// Keep only centres with `max_i |x_i| <= window`.
    #[serde(default)]
    pub center_window: Option<f64>,
}

impl FamilyPolicy {
    pub fn geometric(center_stride: f64, max: f64, ratio: f64) -> FamilyPolicy {
        FamilyPolicy {
            center_stride,
            stride_fraction: None,
            radii: RadiusSpec::Geometric { min: None, max, ratio },
            ladder: None,
            center_window: None,
        }
    }

    pub fn list(center_stride: f64, radii: Vec<f64>) -> FamilyPolicy {
        FamilyPolicy {
            center_stride,
            stride_fraction: None,
            radii: RadiusSpec::List(radii),
            ladder: None,
            center_window: None,
        }
    }

    pub fn with_stride_fraction(mut self, fraction: f64) -> Self {
        self.stride_fraction = Some(fraction);
        self
    }

    pub fn with_ladder(mut self, ladder: Vec<f64>) -> Self {
        self.ladder = Some(ladder);
        self
    }

    pub fn with_window(mut self, window: f64) -> Self {
        self.center_window = Some(window);
        self
    }
}

/// One member of a family, stored in grid units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FamilyBall {
    /// Centre as integer multiples of `h`.
    pub offset: [i64; 2],
    /// Index into the family's radius list.
    pub radius_index: usize,
    /// Smallest ladder index `j` with `r <= a_j`.
    pub radius_bucket: Option<usize>,
    /// Largest ladder index `j` with `|x| - r >= a_j`.
    pub distance_bucket: Option<usize>,
}

/// A finite family of grid-aligned balls inside the box.
#[derive(Debug, Clone)]
pub struct BallFamily {
    grid: Grid,
    radii_steps: Vec<i64>,
    stencils: Vec<DiscStencil>,
    balls: Vec<FamilyBall>,
    ladder: Vec<f64>,
}

fn default_ladder(r_min: f64, x: f64) -> Vec<f64> {
    let mut out = vec![r_min];
    while *out.last().unwrap() * 2.0 <= 2.0 * x {
        out.push(out.last().unwrap() * 2.0);
    }
    out
}

impl BallFamily {
    /// Build the family prescribed by `policy`.
    pub fn new(grid: &Grid, policy: &FamilyPolicy) -> Result<BallFamily> {
        let h = grid.spacing();
        let x = grid.halfwidth();
        let radii: Vec<f64> = match &policy.radii {
            RadiusSpec::Geometric { min, max, ratio } => {
                if !(*ratio > 1.0) {
                    return Err(Error::Config(format!("radius ratio must exceed 1, got {ratio}")));
                }
                let min = min.unwrap_or(4.0 * h);
                if *max > x / 2.0 * (1.0 + 1e-12) {
                    return Err(Error::Config(format!("largest radius {max} exceeds X/2 = {}", x / 2.0)));
                }
                if min > *max {
                    return Err(Error::Config(format!("radius range [{min}, {max}] is empty")));
                }
                let mut out: Vec<f64> = Vec::new();
                let mut r = min;
                while r <= max * (1.0 + 1e-12) {
                    let s = grid.snap(r);
                    if s <= max * (1.0 + 1e-12) && out.last().map_or(true, |&l| s > l) {
                        out.push(s);
                    }
                    r *= ratio;
                }
                out
            }
            RadiusSpec::List(list) => {
                let mut out = Vec::new();
                for &r in list {
                    if !(r > 0.0) || !grid.is_aligned(r) {
                        return Err(Error::Config(format!("radius {r} is not a positive multiple of h = {h}")));
                    }
                    if r > x / 2.0 * (1.0 + 1e-12) {
                        return Err(Error::Config(format!("radius {r} exceeds X/2 = {}", x / 2.0)));
                    }
                    out.push(grid.snap(r));
                }
                out.sort_by(f64::total_cmp);
                out.dedup();
                out
            }
        };
        if radii.is_empty() {
            return Err(Error::Config("family has no radii".into()));
        }
        if !(policy.center_stride > 0.0) {
            return Err(Error::Config("centre stride must be positive".into()));
        }
        let ladder = match &policy.ladder {
            Some(l) => {
                if l.is_empty() || l.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config("scale ladder must be strictly increasing".into()));
                }
                l.clone()
            }
            None => default_ladder(radii[0], x),
        };
        let m = grid.steps() as i64;
        let window = policy.center_window.map(|w| (w / h + 1e-9).floor() as i64);
        let mut balls = Vec::new();
        let radii_steps: Vec<i64> = radii.iter().map(|r| (r / h).round() as i64).collect();
        for (ri, &rs) in radii_steps.iter().enumerate() {
            let r = radii[ri];
            let stride = policy.stride_fraction.map_or(policy.center_stride, |f| policy.center_stride.max(f * r));
            let ss = ((stride / h).round() as i64).max(1);
            let mut reach = m - rs;
            if let Some(w) = window {
                reach = reach.min(w);
            }
            if reach < 0 {
                continue;
            }
            let kmax = reach / ss;
            let ys: Vec<i64> = if grid.dim() == 2 { (-kmax..=kmax).collect() } else { vec![0] };
            for &ky in &ys {
                for kx in -kmax..=kmax {
                    balls.push(FamilyBall {
                        offset: [kx * ss, ky * ss],
                        radius_index: ri,
                        radius_bucket: None,
                        distance_bucket: None,
                    });
                }
            }
        }
        let mut fam = BallFamily {
            grid: *grid,
            stencils: radii_steps.iter().map(|&s| DiscStencil::new(grid.dim(), s)).collect(),
            radii_steps,
            balls,
            ladder,
        };
        fam.retag();
        Ok(fam)
    }

    /// Family made of explicit grid-aligned balls.
    pub fn from_balls(grid: &Grid, balls: &[Ball], ladder: Option<Vec<f64>>) -> Result<BallFamily> {
        let h = grid.spacing();
        let mut radii_steps: Vec<i64> = Vec::new();
        let mut members = Vec::with_capacity(balls.len());
        for b in balls {
            let aligned = grid.is_aligned(b.radius) && (0..grid.dim()).all(|a| grid.is_aligned(b.center[a]));
            if !aligned || b.radius <= 0.0 {
                return Err(Error::Config(format!("ball {b:?} is not aligned with the grid")));
            }
            grid.ball_region(b)?;
            let rs = (b.radius / h).round() as i64;
            let ri = match radii_steps.iter().position(|&s| s == rs) {
                Some(i) => i,
                None => {
                    radii_steps.push(rs);
                    radii_steps.len() - 1
                }
            };
            members.push(FamilyBall {
                offset: [(b.center[0] / h).round() as i64, (b.center[1] / h).round() as i64],
                radius_index: ri,
                radius_bucket: None,
                distance_bucket: None,
            });
        }
        if members.is_empty() {
            return Err(Error::Config("empty ball family".into()));
        }
        let rmin = radii_steps.iter().copied().min().unwrap() as f64 * h;
        let mut fam = BallFamily {
            grid: *grid,
            stencils: radii_steps.iter().map(|&s| DiscStencil::new(grid.dim(), s)).collect(),
            radii_steps,
            balls: members,
            ladder: ladder.unwrap_or_else(|| default_ladder(rmin, grid.halfwidth())),
        };
        fam.retag();
        Ok(fam)
    }

    fn retag(&mut self) {
        let h = self.grid.spacing();
        let ladder = self.ladder.clone();
        for b in &mut self.balls {
            let r = self.radii_steps[b.radius_index] as f64 * h;
            let d = (b.offset[0] as f64 * h).hypot(b.offset[1] as f64 * h) - r;
            b.radius_bucket = ladder.iter().position(|&a| r <= a * (1.0 + 1e-12));
            b.distance_bucket = ladder.iter().rposition(|&a| d >= a * (1.0 - 1e-12));
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn len(&self) -> usize {
        self.balls.len()
    }
    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }
    pub fn members(&self) -> &[FamilyBall] {
        &self.balls
    }
    pub fn ladder(&self) -> &[f64] {
        &self.ladder
    }
    /// Distinct radii, ascending.
    pub fn radii(&self) -> Vec<f64> {
        self.radii_steps.iter().map(|&s| s as f64 * self.grid.spacing()).collect()
    }

    pub fn ball(&self, k: usize) -> Ball {
        let b = &self.balls[k];
        let h = self.grid.spacing();
        Ball {
            center: [b.offset[0] as f64 * h, b.offset[1] as f64 * h],
            radius: self.radii_steps[b.radius_index] as f64 * h,
        }
    }

    pub fn region(&self, k: usize) -> Region {
        let b = &self.balls[k];
        self.stencils[b.radius_index].region(&self.grid, b.offset)
    }

    /// Evaluate `metric` on every ball in parallel.
    pub fn evaluate<F>(&self, metric: F) -> Vec<f64>
    where
        F: Fn(usize, &Ball, &Region) -> f64 + Sync,
    {
        (0..self.len())
            .into_par_iter()
            .map(|k| metric(k, &self.ball(k), &self.region(k)))
            .collect()
    }

    /// Fallible variant of [`BallFamily::evaluate`].
    pub fn try_evaluate<F>(&self, metric: F) -> Result<Vec<f64>>
    where
        F: Fn(usize, &Ball, &Region) -> Result<f64> + Sync,
    {
        (0..self.len())
            .into_par_iter()
            .map(|k| metric(k, &self.ball(k), &self.region(k)))
            .collect()
    }

    /// CSV listing: index, centre, radius and both bucket tags.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,center_x,center_y,radius,radius_bucket,distance_bucket\n");
        for k in 0..self.len() {
            let b = self.ball(k);
            let m = &self.balls[k];
            let tag = |t: Option<usize>| t.map_or(String::new(), |v| v.to_string());
            s.push_str(&format!(
                "{k},{},{},{},{},{}\n",
                b.center[0],
                b.center[1],
                b.radius,
                tag(m.radius_bucket),
                tag(m.distance_bucket)
            ));
        }
        s
    }
}

/// Which limit a curve tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMode {
    /// `sup { m(B) : r_B <= a }` as `a -> 0`.
    SmallRadius,
    /// `sup { m(B) : r_B >= a }` as `a -> inf`.
    LargeRadius,
    /// `sup { m(B) : B inside B(0, a)^c }` as `a -> inf`.
    FarFromOrigin,
    /// `sup { m(B) : r_B >= max(a, rho(x_B)) }` as `a -> inf`.
    LargeSupercritical,
    /// `sup { m(B) : B inside B(0, a)^c, r_B >= rho(x_B) }` as `a -> inf`.
    FarSupercritical,
}

impl CurveMode {
    pub fn needs_rho(self) -> bool {
        matches!(self, CurveMode::LargeSupercritical | CurveMode::FarSupercritical)
    }
    fn name(self) -> &'static str {
        match self {
            CurveMode::SmallRadius => "small_radius",
            CurveMode::LargeRadius => "large_radius",
            CurveMode::FarFromOrigin => "far_from_origin",
            CurveMode::LargeSupercritical => "large_supercritical",
            CurveMode::FarSupercritical => "far_supercritical",
        }
    }
}

/// Sup of a metric over the balls admitted at each ladder value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCurve {
    pub mode: CurveMode,
    pub ladder: Vec<f64>,
    /// `None` where no ball of the family is admitted.
    pub values: Vec<Option<f64>>,
    pub argsup: Vec<Option<Ball>>,
}

impl LimitCurve {
    /// `(a, s(a))` pairs ordered so the limit end comes last.
    pub fn in_limit_order(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> =
            self.ladder.iter().zip(&self.values).filter_map(|(&a, v)| v.map(|v| (a, v))).collect();
        if self.mode == CurveMode::SmallRadius {
            out.reverse();
        }
        out
    }

    /// Value at the limit end of the ladder.
    pub fn terminal(&self) -> Option<f64> {
        self.in_limit_order().last().map(|p| p.1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("mode,a,value,argsup_center_x,argsup_center_y,argsup_radius\n");
        for (j, &a) in self.ladder.iter().enumerate() {
            match (self.values[j], self.argsup[j]) {
                (Some(v), Some(b)) => s.push_str(&format!(
                    "{},{a},{v},{},{},{}\n",
                    self.mode.name(),
                    b.center[0],
                    b.center[1],
                    b.radius
                )),
                _ => s.push_str(&format!("{},{a},,,,\n", self.mode.name())),
            }
        }
        s
    }
}

/// Bucket the per-ball `values` into a limit curve.
///
/// `supercritical[k]` must say whether ball `k` satisfies `r_B >= rho(x_B)`;
/// it is required by the two supercritical modes and ignored otherwise.
pub fn bucketed_sup(
    values: &[f64],
    family: &BallFamily,
    mode: CurveMode,
    supercritical: Option<&[bool]>,
) -> Result<LimitCurve> {
    if values.len() != family.len() {
        return Err(Error::Config(format!(
            "{} metric values for a family of {} balls",
            values.len(),
            family.len()
        )));
    }
    let sup_flags = if mode.needs_rho() {
        let s = supercritical.ok_or_else(|| Error::Config(format!("mode {mode:?} needs the critical radius")))?;
        if s.len() != family.len() {
            return Err(Error::Config("supercritical flags do not match the family".into()));
        }
        Some(s)
    } else {
        None
    };
    let ladder = family.ladder().to_vec();
    let mut best: Vec<Option<(f64, usize)>> = vec![None; ladder.len()];
    for (k, &v) in values.iter().enumerate() {
        if v.is_nan() {
            return Err(Error::NonFinite(format!("metric of ball {k} is NaN")));
        }
        if let Some(s) = sup_flags {
            if !s[k] {
                continue;
            }
        }
        let b = family.ball(k);
        let dist = b.center_norm() - b.radius;
        for (j, &a) in ladder.iter().enumerate() {
            let admitted = match mode {
                CurveMode::SmallRadius => b.radius <= a * (1.0 + 1e-12),
                CurveMode::LargeRadius | CurveMode::LargeSupercritical => b.radius >= a * (1.0 - 1e-12),
                CurveMode::FarFromOrigin | CurveMode::FarSupercritical => dist >= a * (1.0 - 1e-12),
            };
            if admitted && best[j].map_or(true, |(bv, _)| v > bv) {
                best[j] = Some((v, k));
            }
        }
    }
    Ok(LimitCurve {
        mode,
        values: best.iter().map(|b| b.map(|p| p.0)).collect(),
        argsup: best.iter().map(|b| b.map(|p| family.ball(p.1))).collect(),
        ladder,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_count_closed_form() {
        let g = Grid::new(1, 8.0, 0.5).unwrap();
        let fam = BallFamily::new(&g, &FamilyPolicy::list(1.0, vec![1.0, 2.0, 4.0])).unwrap();
        assert_eq!(fam.len(), 15 + 13 + 9);
    }

    #[test]
    fn family_respects_the_box() {
        let g = Grid::new(2, 4.0, 0.25).unwrap();
        let fam = BallFamily::new(&g, &FamilyPolicy::geometric(0.5, 2.0, 2.0)).unwrap();
        assert_eq!(fam.radii(), vec![1.0, 2.0]);
        for k in 0..fam.len() {
            assert!(g.ball_region(&fam.ball(k)).is_ok());
        }
    }

    #[test]
    fn oversized_radius_is_a_config_error() {
        let g = Grid::new(1, 4.0, 0.25).unwrap();
        assert!(matches!(
            BallFamily::new(&g, &FamilyPolicy::list(1.0, vec![3.0])),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn curves_are_monotone_and_have_argsup() {
        let g = Grid::new(1, 16.0, 0.5).unwrap();
        let fam = BallFamily::new(&g, &FamilyPolicy::list(1.0, vec![0.5, 1.0, 2.0, 4.0])).unwrap();
        let vals = fam.evaluate(|_, b, _| b.radius + 0.01 * b.center[0].abs());
        let small = bucketed_sup(&vals, &fam, CurveMode::SmallRadius, None).unwrap();
        let pts = small.in_limit_order();
        assert!(pts.windows(2).all(|w| w[1].1 <= w[0].1));
        let far = bucketed_sup(&vals, &fam, CurveMode::FarFromOrigin, None).unwrap();
        for (j, v) in far.values.iter().enumerate() {
            if let (Some(v), Some(b)) = (v, far.argsup[j]) {
                assert_eq!(*v, b.radius + 0.01 * b.center[0].abs());
                assert!(b.center_norm() - b.radius >= far.ladder[j] - 1e-12);
            }
        }
        assert!(bucketed_sup(&vals, &fam, CurveMode::FarSupercritical, None).is_err());
    }
}
