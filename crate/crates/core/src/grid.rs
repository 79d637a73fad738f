//! Uniform grids on `[-X, X]^n`, balls, dyadic cubes and compensated
//! summed-area tables.

use crate::error::{Error, Result};
use crate::numeric::{pairwise_sum_by, Dd};
use serde::{Deserialize, Serialize};

const ALIGN_TOL: f64 = 1e-9;

/// Uniform grid with `2m + 1` points per axis, spacing `h`, half-width `X = m h`.
///
/// The origin is always a grid point. Flat indices are row-major with the
/// first coordinate varying fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    steps: usize,
    spacing: f64,
}

impl Grid {
    /// Grid of dimension 1 or 2 on `[-halfwidth, halfwidth]^dim`.
    ///
    /// `halfwidth` must be a whole multiple of `spacing`.
    pub fn new(dim: usize, halfwidth: f64, spacing: f64) -> Result<Grid> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::Config(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if !(spacing > 0.0 && spacing.is_finite() && halfwidth > 0.0 && halfwidth.is_finite()) {
            return Err(Error::Config("grid spacing and half-width must be positive".into()));
        }
        let m = (halfwidth / spacing).round();
        if m < 1.0 || (m * spacing - halfwidth).abs() > ALIGN_TOL * halfwidth {
            return Err(Error::Config(format!(
                "half-width {halfwidth} is not a multiple of spacing {spacing}"
            )));
        }
        Ok(Grid { dim, steps: m as usize, spacing })
    }

    /// Grid with `steps` intervals on each side of the origin.
    pub fn with_steps(dim: usize, steps: usize, spacing: f64) -> Result<Grid> {
        Grid::new(dim, steps as f64 * spacing, spacing)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    /// Number of intervals between the origin and the wall.
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn halfwidth(&self) -> f64 {
        self.steps as f64 * self.spacing
    }
    pub fn points_per_axis(&self) -> usize {
        2 * self.steps + 1
    }
    pub fn len(&self) -> usize {
        self.points_per_axis().pow(self.dim as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// Volume `h^n` of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Coordinate of axis index `i`.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - self.steps as f64) * self.spacing
    }

    #[inline]
    pub fn unflatten(&self, flat: usize) -> [usize; 2] {
        let n = self.points_per_axis();
        [flat % n, flat / n]
    }

    #[inline]
    pub fn flatten(&self, i: usize, j: usize) -> usize {
        j * self.points_per_axis() + i
    }

    /// Physical coordinates of a flat index; unused axes are zero.
    #[inline]
    pub fn point(&self, flat: usize) -> [f64; 2] {
        let [i, j] = self.unflatten(flat);
        if self.dim == 1 {
            [self.coord(i), 0.0]
        } else {
            [self.coord(i), self.coord(j)]
        }
    }

    /// Index of the grid point nearest to `x`, if `x` lies in the box.
    pub fn nearest_index(&self, x: &[f64]) -> Option<usize> {
        let mut idx = [0usize; 2];
        for a in 0..self.dim {
            let k = (x[a] / self.spacing).round() + self.steps as f64;
            if !(0.0..=(2 * self.steps) as f64).contains(&k) {
                return None;
            }
            idx[a] = k as usize;
        }
        Some(self.flatten(idx[0], idx[1]))
    }

    /// Whether `v` is a whole multiple of the spacing.
    pub fn is_aligned(&self, v: f64) -> bool {
        let q = v / self.spacing;
        (q - q.round()).abs() <= ALIGN_TOL * q.abs().max(1.0)
    }

    /// Round `v` to the nearest positive multiple of the spacing.
    pub fn snap(&self, v: f64) -> f64 {
        (v / self.spacing).round().max(1.0) * self.spacing
    }

    fn check_ball_inside(&self, b: &Ball) -> Result<()> {
        let x = self.halfwidth();
        for a in 0..self.dim {
            if b.center[a].abs() + b.radius > x * (1.0 + 1e-12) {
                return Err(Error::OutOfDomain(format!(
                    "ball centre {:?} radius {} exceeds box half-width {x}",
                    &b.center[..self.dim],
                    b.radius
                )));
            }
        }
        Ok(())
    }

    /// Grid points strictly inside the ball, as row spans.
    pub fn ball_region(&self, b: &Ball) -> Result<Region> {
        if !(b.radius > 0.0 && b.radius.is_finite()) {
            return Err(Error::DegenerateRegion(format!("ball radius {}", b.radius)));
        }
        self.check_ball_inside(b)?;
        let aligned = self.is_aligned(b.radius) && (0..self.dim).all(|a| self.is_aligned(b.center[a]));
        let region = if aligned {
            let m = (b.radius / self.spacing).round() as i64;
            let st = DiscStencil::new(self.dim, m);
            let c = [self.offset_of(b.center[0]), if self.dim == 2 { self.offset_of(b.center[1]) } else { 0 }];
            st.region(self, c)
        } else {
            self.float_ball_region(b)
        };
        if region.count == 0 {
            return Err(Error::DegenerateRegion(format!(
                "ball of radius {} contains no grid point",
                b.radius
            )));
        }
        Ok(region)
    }

    /// Grid points strictly inside the ball and inside the box, plus a flag
    /// telling whether the ball reaches the walls.
    pub fn clipped_ball_region(&self, b: &Ball) -> (Region, bool) {
        (self.float_ball_region(b), self.check_ball_inside(b).is_err())
    }

    fn offset_of(&self, v: f64) -> i64 {
        (v / self.spacing).round() as i64
    }

    fn float_ball_region(&self, b: &Ball) -> Region {
        let h = self.spacing;
        let last = 2 * self.steps;
        let col_range = |cx: f64, w: f64| -> Option<(usize, usize)> {
            let idx = |x: f64| x / h + self.steps as f64;
            let mut lo = idx(cx - w).floor().max(0.0) as usize;
            let mut hi = (idx(cx + w).ceil().min(last as f64)) as usize;
            while lo <= hi && (self.coord(lo) - cx).abs() >= w {
                lo += 1;
            }
            while hi >= lo && (self.coord(hi) - cx).abs() >= w {
                if hi == 0 {
                    return None;
                }
                hi -= 1;
            }
            (lo <= hi).then_some((lo, hi))
        };
        let mut spans = Vec::new();
        let r2 = b.radius * b.radius;
        if self.dim == 1 {
            if let Some((lo, hi)) = col_range(b.center[0], b.radius) {
                spans.push(Span { row: 0, lo, hi });
            }
        } else {
            for j in 0..=last {
                let dy = self.coord(j) - b.center[1];
                if dy * dy >= r2 {
                    continue;
                }
                // Strict inequality is enforced per point below.
                let w = (r2 - dy * dy).sqrt();
                if let Some((mut lo, mut hi)) = col_range(b.center[0], w) {
                    let inside = |i: usize| {
                        let dx = self.coord(i) - b.center[0];
                        dx * dx + dy * dy < r2
                    };
                    while lo <= hi && !inside(lo) {
                        lo += 1;
                    }
                    while hi > lo && !inside(hi) {
                        hi -= 1;
                    }
                    if lo <= hi && inside(lo) {
                        spans.push(Span { row: j, lo, hi });
                    }
                }
            }
        }
        Region::from_spans(spans)
    }

    /// Grid points in the half-open dyadic cube.
    pub fn cube_region(&self, q: &DyadicCube) -> Result<Region> {
        let lo = q.lower();
        let s = q.side();
        let x = self.halfwidth();
        for a in 0..self.dim {
            if lo[a] < -x * (1.0 + 1e-12) || lo[a] + s > x * (1.0 + 1e-12) {
                return Err(Error::OutOfDomain(format!("cube {q:?} leaves the box")));
            }
        }
        let range = |a: usize| -> Option<(usize, usize)> {
            let first = ((lo[a] + x) / self.spacing - ALIGN_TOL).ceil().max(0.0) as usize;
            let end = ((lo[a] + s + x) / self.spacing - ALIGN_TOL).ceil() as usize;
            let last = end.min(2 * self.steps + 1);
            (first < last).then(|| (first, last - 1))
        };
        let (i0, i1) = range(0).ok_or_else(|| Error::DegenerateRegion(format!("cube {q:?} holds no grid point")))?;
        let (j0, j1) = if self.dim == 2 {
            range(1).ok_or_else(|| Error::DegenerateRegion(format!("cube {q:?} holds no grid point")))?
        } else {
            (0, 0)
        };
        Ok(Region::rect(i0, i1, j0, j1))
    }
}

/// Open Euclidean ball. In dimension one the second coordinate is ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Ball {
    pub fn new(center: &[f64], radius: f64) -> Ball {
        let mut c = [0.0; 2];
        c[..center.len()].copy_from_slice(center);
        Ball { center: c, radius }
    }

    /// Same centre, radius scaled by `k`.
    pub fn dilate(&self, k: f64) -> Ball {
        Ball { center: self.center, radius: self.radius * k }
    }

    pub fn center_norm(&self) -> f64 {
        self.center[0].hypot(self.center[1])
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let dx = x[0] - self.center[0];
        let dy = if x.len() > 1 { x[1] - self.center[1] } else { 0.0 };
        dx * dx + dy * dy < self.radius * self.radius
    }
}

/// Half-open dyadic cube `prod_i [k_i 2^l, (k_i + 1) 2^l)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicCube {
    pub dim: usize,
    pub level: i32,
    pub corner: [i64; 2],
}

impl DyadicCube {
    /// The dyadic cube of side `2^level` containing `x`.
    pub fn containing(dim: usize, level: i32, x: &[f64]) -> DyadicCube {
        let s = 2f64.powi(level);
        let mut corner = [0i64; 2];
        for a in 0..dim {
            corner[a] = (x[a] / s).floor() as i64;
        }
        DyadicCube { dim, level, corner }
    }

    pub fn side(&self) -> f64 {
        2f64.powi(self.level)
    }

    pub fn lower(&self) -> [f64; 2] {
        let s = self.side();
        [self.corner[0] as f64 * s, self.corner[1] as f64 * s]
    }

    pub fn center(&self) -> [f64; 2] {
        let s = self.side();
        let lo = self.lower();
        if self.dim == 1 {
            [lo[0] + s / 2.0, 0.0]
        } else {
            [lo[0] + s / 2.0, lo[1] + s / 2.0]
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let s = self.side();
        let lo = self.lower();
        (0..self.dim).all(|a| lo[a] <= x[a] && x[a] < lo[a] + s)
    }

    /// Whether the closures of the two cubes meet.
    pub fn touches(&self, o: &DyadicCube) -> bool {
        let (a, b) = (self.lower(), o.lower());
        let (sa, sb) = (self.side(), o.side());
        (0..self.dim).all(|k| a[k] <= b[k] + sb && b[k] <= a[k] + sa)
    }
}

/// The cube `R_k = [-2^k, 2^k)^n` as its `2^n` dyadic children of side `2^k`.
pub fn region_rk(grid: &Grid, k: i32) -> Result<Vec<DyadicCube>> {
    if 2f64.powi(k + 1) > grid.halfwidth() * (1.0 + 1e-12) {
        return Err(Error::OutOfDomain(format!(
            "R_{k} needs half-width at least 2^{} but the box has {}",
            k + 1,
            grid.halfwidth()
        )));
    }
    let dim = grid.dim();
    let mut out = Vec::new();
    for cy in if dim == 2 { vec![-1, 0] } else { vec![0] } {
        for cx in [-1, 0] {
            out.push(DyadicCube { dim, level: k, corner: [cx, cy] });
        }
    }
    Ok(out)
}

/// Whether `x` lies in `R_k = [-2^k, 2^k)^n`.
pub fn in_rk(x: &[f64], dim: usize, k: i32) -> bool {
    let s = 2f64.powi(k);
    (0..dim).all(|a| -s <= x[a] && x[a] < s)
}

/// Contiguous run of grid points `lo..=hi` in one row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub row: usize,
    pub lo: usize,
    pub hi: usize,
}

/// A set of grid points stored as row spans.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub spans: Vec<Span>,
    pub count: usize,
    rect: Option<[usize; 4]>,
}

impl Region {
    pub fn from_spans(spans: Vec<Span>) -> Region {
        let count = spans.iter().map(|s| s.hi + 1 - s.lo).sum();
        Region { spans, count, rect: None }
    }

    pub fn rect(i0: usize, i1: usize, j0: usize, j1: usize) -> Region {
        let spans = (j0..=j1).map(|row| Span { row, lo: i0, hi: i1 }).collect();
        let mut r = Region::from_spans(spans);
        r.rect = Some([i0, i1, j0, j1]);
        r
    }

    /// Flat indices of every point, row by row.
    pub fn indices<'a>(&'a self, grid: &'a Grid) -> impl Iterator<Item = usize> + 'a {
        self.spans.iter().flat_map(move |s| (s.lo..=s.hi).map(move |i| grid.flatten(i, s.row)))
    }
}

/// Integer stencil of a grid-aligned ball of radius `m h`:
/// offsets `(k, d)` with `k^2 + d^2 < m^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscStencil {
    pub steps: i64,
    /// `(row offset, half-width)` pairs.
    pub rows: Vec<(i64, i64)>,
    pub count: usize,
}

impl DiscStencil {
    pub fn new(dim: usize, m: i64) -> DiscStencil {
        let rows: Vec<(i64, i64)> = if dim == 1 {
            vec![(0, m - 1)]
        } else {
            let mut rows = Vec::new();
            for d in -(m - 1)..=(m - 1) {
                let rem = m * m - d * d;
                // largest k with k^2 < rem
                let mut k = ((rem as f64).sqrt() as i64).max(0);
                while k * k >= rem {
                    k -= 1;
                }
                while (k + 1) * (k + 1) < rem {
                    k += 1;
                }
                rows.push((d, k));
            }
            rows
        };
        let count = rows.iter().map(|&(_, k)| (2 * k + 1) as usize).sum();
        DiscStencil { steps: m, rows, count }
    }

    /// Region of the stencil centred at integer offsets `c` from the origin.
    pub fn region(&self, grid: &Grid, c: [i64; 2]) -> Region {
        let m = grid.steps() as i64;
        let spans = self
            .rows
            .iter()
            .map(|&(d, k)| Span {
                row: (c[1] + d + if grid.dim() == 2 { m } else { 0 }) as usize,
                lo: (c[0] - k + m) as usize,
                hi: (c[0] + k + m) as usize,
            })
            .collect();
        Region::from_spans(spans)
    }
}

/// Real-valued samples on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<GridFunction> {
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sample {i} is {}", values[i])));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<GridFunction> {
        let values = (0..grid.len()).map(|k| f(&grid.point(k)[..grid.dim()])).collect();
        GridFunction::new(grid, values)
    }

    pub fn zeros(grid: Grid) -> GridFunction {
        GridFunction { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, c: f64) -> GridFunction {
        GridFunction { grid, values: vec![c; grid.len()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    fn zip(&self, o: &GridFunction, op: impl Fn(f64, f64) -> f64) -> Result<GridFunction> {
        if self.grid != o.grid {
            return Err(Error::Config("grid functions live on different grids".into()));
        }
        let values = self.values.iter().zip(&o.values).map(|(&a, &b)| op(a, b)).collect();
        Ok(GridFunction { grid: self.grid, values })
    }

    pub fn add(&self, o: &GridFunction) -> Result<GridFunction> {
        self.zip(o, |a, b| a + b)
    }
    pub fn sub(&self, o: &GridFunction) -> Result<GridFunction> {
        self.zip(o, |a, b| a - b)
    }
    pub fn mul(&self, o: &GridFunction) -> Result<GridFunction> {
        self.zip(o, |a, b| a * b)
    }
    pub fn scale(&self, c: f64) -> GridFunction {
        self.map(|v| c * v)
    }
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
    pub fn max_abs_diff(&self, o: &GridFunction) -> f64 {
        self.values.iter().zip(&o.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
    /// Riemann sum of the function over the box.
    pub fn integral(&self) -> f64 {
        pairwise_sum_by(0, self.values.len(), &|i| self.values[i]) * self.grid.cell_volume()
    }
}

/// Count, sum and sum of squares over a region.
#[derive(Debug, Clone, Copy)]
pub struct Moments {
    pub count: usize,
    pub sum: Dd,
    pub sum_sq: Dd,
}

impl Moments {
    pub fn mean(&self) -> f64 {
        self.sum.to_f64() / self.count as f64
    }
    pub fn mean_square(&self) -> f64 {
        self.sum_sq.to_f64() / self.count as f64
    }
    /// Population variance, evaluated in double-double.
    pub fn variance(&self) -> f64 {
        let c = self.count as f64;
        let num = self.sum_sq.mul_f64(c) - self.sum.mul(self.sum);
        (num.to_f64() / (c * c)).max(0.0)
    }
}

/// Summed-area table of values and (optionally) squares in double-double.
#[derive(Debug, Clone)]
pub struct MomentTable {
    grid: Grid,
    sum: Vec<Dd>,
    sum_sq: Option<Vec<Dd>>,
}

impl MomentTable {
    /// Table of values and their squares.
    pub fn new(f: &GridFunction) -> MomentTable {
        let g = *f.grid();
        MomentTable {
            grid: g,
            sum: sat(&g, |k| Dd::new(f.values()[k])),
            sum_sq: Some(sat(&g, |k| Dd::square(f.values()[k]))),
        }
    }

    /// Table of the raw values only.
    pub fn first_moment(grid: Grid, values: &[f64]) -> MomentTable {
        MomentTable { grid, sum: sat(&grid, |k| Dd::new(values[k])), sum_sq: None }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    fn rect(table: &[Dd], w: usize, i0: usize, i1: usize, j0: usize, j1: usize) -> Dd {
        let at = |i: usize, j: usize| table[j * w + i];
        at(i1 + 1, j1 + 1) - at(i0, j1 + 1) - at(i1 + 1, j0) + at(i0, j0)
    }

    fn sum_in(&self, table: &[Dd], r: &Region) -> Dd {
        let w = self.grid.points_per_axis() + 1;
        if self.grid.dim() == 1 {
            return r.spans.iter().fold(Dd::ZERO, |acc, s| acc + (table[s.hi + 1] - table[s.lo]));
        }
        if let Some([i0, i1, j0, j1]) = r.rect {
            return Self::rect(table, w, i0, i1, j0, j1);
        }
        r.spans
            .iter()
            .fold(Dd::ZERO, |acc, s| acc + Self::rect(table, w, s.lo, s.hi, s.row, s.row))
    }

    pub fn sum(&self, r: &Region) -> Dd {
        self.sum_in(&self.sum, r)
    }

    pub fn moments(&self, r: &Region) -> Moments {
        let sum_sq = self.sum_sq.as_ref().map(|t| self.sum_in(t, r)).unwrap_or(Dd::ZERO);
        Moments { count: r.count, sum: self.sum(r), sum_sq }
    }
}

fn sat(g: &Grid, v: impl Fn(usize) -> Dd) -> Vec<Dd> {
    let n = g.points_per_axis();
    if g.dim() == 1 {
        let mut out = Vec::with_capacity(n + 1);
        let mut acc = Dd::ZERO;
        out.push(acc);
        for k in 0..n {
            acc += v(k);
            out.push(acc);
        }
        return out;
    }
    let w = n + 1;
    let mut out = vec![Dd::ZERO; w * w];
    for j in 0..n {
        let mut row = Dd::ZERO;
        for i in 0..n {
            row += v(j * n + i);
            out[(j + 1) * w + i + 1] = out[j * w + i + 1] + row;
        }
    }
    out
}

/// Mean of `f` over the grid points of a ball, by direct summation.
pub fn ball_average(f: &GridFunction, b: &Ball) -> Result<f64> {
    let r = f.grid().ball_region(b)?;
    Ok(region_mean(f, &r))
}

fn region_mean(f: &GridFunction, r: &Region) -> f64 {
    let idx: Vec<usize> = r.indices(f.grid()).collect();
    pairwise_sum_by(0, idx.len(), &|k| f.values()[idx[k]]) / idx.len() as f64
}

/// `(mean |f - f_B|^p)^(1/p)` over a ball, by direct two-pass summation.
pub fn mean_oscillation(f: &GridFunction, b: &Ball, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Config(format!("oscillation exponent must be in [1, inf), got {p}")));
    }
    let r = f.grid().ball_region(b)?;
    Ok(region_oscillation(f, &r, p))
}

/// `(mean |f - f_R|^p)^(1/p)` over an arbitrary region.
pub fn region_oscillation(f: &GridFunction, r: &Region, p: f64) -> f64 {
    let idx: Vec<usize> = r.indices(f.grid()).collect();
    let v = f.values();
    let mean = pairwise_sum_by(0, idx.len(), &|k| v[idx[k]]) / idx.len() as f64;
    let s = pairwise_sum_by(0, idx.len(), &|k| (v[idx[k]] - mean).abs().powf(p));
    (s / idx.len() as f64).powf(1.0 / p)
}

/// `(mean |f|^p)^(1/p)` over an arbitrary region.
pub fn region_mean_power(f: &GridFunction, r: &Region, p: f64) -> f64 {
    let idx: Vec<usize> = r.indices(f.grid()).collect();
    let v = f.values();
    let s = pairwise_sum_by(0, idx.len(), &|k| v[idx[k]].abs().powf(p));
    (s / idx.len() as f64).powf(1.0 / p)
}
