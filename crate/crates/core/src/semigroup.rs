//! Spectral discretization of `L = -d²/dx² + V` on `[-X, X]` with Dirichlet
//! walls, and the heat and Poisson semigroups it generates.
//!
//! Functions of `L` are evaluated in the variable `sqrt(L)`: `psi(sqrt L) f`
//! is `sum_k psi(sqrt(lambda_k)) <f, e_k> e_k`. Wall samples are the Dirichlet
//! boundary values and are always zero on output.

use crate::error::{Channel, Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::numeric::{integrate_vec, pairwise_sum_by, QuadOptions};
use crate::potential::{CriticalRadiusField, Potential, Rho};
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::{Mat, Par};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Which eigenbasis to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Sine basis for constant potentials, dense otherwise.
    #[default]
    Auto,
    /// Dense symmetric eigendecomposition.
    Dense,
    /// Discrete sine transform; only valid for constant potentials.
    Sine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorOptions {
    /// Largest grid handled by the dense backend.
    pub dense_cap: usize,
    /// Largest grid handled by the sine backend.
    pub sine_cap: usize,
    pub backend: Backend,
}

impl Default for OperatorOptions {
    fn default() -> Self {
        OperatorOptions { dense_cap: 4096, sine_cap: 1 << 22, backend: Backend::Auto }
    }
}

#[derive(Clone)]
enum Basis {
    /// Column-major `m x m` eigenvector matrix.
    Dense(Vec<f64>),
    /// Orthonormal DST-I basis evaluated through an FFT of length `2(m+1)`.
    Sine(Arc<dyn Fft<f64>>),
}

/// Eigendecomposition of the finite-difference operator
/// `(L_h u)_i = (2u_i - u_{i-1} - u_{i+1}) / h² + V_i u_i` on interior points.
#[derive(Clone)]
pub struct SpectralOperator {
    grid: Grid,
    potential: Potential,
    diag: Vec<f64>,
    eigenvalues: Vec<f64>,
    basis: Basis,
}

impl std::fmt::Debug for SpectralOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralOperator")
            .field("grid", &self.grid)
            .field("interior", &self.eigenvalues.len())
            .field("sine_basis", &matches!(self.basis, Basis::Sine(_)))
            .finish()
    }
}

/// Build the operator for `V` on a one-dimensional grid.
pub fn discretize(v: &Potential, grid: &Grid, opts: &OperatorOptions) -> Result<SpectralOperator> {
    if grid.dim() != 1 || v.dim() != 1 {
        return Err(Error::Config("the spectral operator is one-dimensional".into()));
    }
    let n = grid.len();
    if n < 5 {
        return Err(Error::Config("grid too small for the operator".into()));
    }
    let constant = match v {
        Potential::Zero { .. } => Some(0.0),
        Potential::Constant { value, .. } => Some(*value),
        _ => None,
    };
    let sine = match (opts.backend, constant) {
        (Backend::Sine, None) => {
            return Err(Error::Config("the sine backend needs a constant potential".into()));
        }
        (Backend::Sine, Some(c)) | (Backend::Auto, Some(c)) => Some(c),
        _ => None,
    };
    let samples = v.sample(grid)?;
    let diag: Vec<f64> = samples.values()[1..n - 1].to_vec();
    if let Some(k) = diag.iter().position(|&x| x < 0.0) {
        return Err(Error::Config(format!("negative potential sample at interior index {}", k + 1)));
    }
    let m = n - 2;
    let h = grid.spacing();
    if let Some(c) = sine {
        if n > opts.sine_cap {
            return Err(Error::Config(format!("{n} grid points exceed the sine cap {}", opts.sine_cap)));
        }
        let eigenvalues = (1..=m)
            .map(|k| {
                let s = (std::f64::consts::PI * k as f64 / (2.0 * (m + 1) as f64)).sin();
                4.0 / (h * h) * s * s + c
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(2 * (m + 1));
        return Ok(SpectralOperator { grid: *grid, potential: v.clone(), diag, eigenvalues, basis: Basis::Sine(fft) });
    }
    if n > opts.dense_cap {
        return Err(Error::Config(format!(
            "{n} grid points exceed the dense operator cap {}",
            opts.dense_cap
        )));
    }
    let inv = 1.0 / (h * h);
    let a = Mat::<f64>::from_fn(m, m, |i, j| {
        if i == j {
            2.0 * inv + diag[i]
        } else if i.abs_diff(j) == 1 {
            -inv
        } else {
            0.0
        }
    });
    let mut u = Mat::<f64>::zeros(m, m);
    let mut s = faer::diag::Diag::<f64>::zeros(m);
    let par = Par::Seq;
    let scratch = faer::linalg::evd::self_adjoint_evd_scratch::<f64>(
        m,
        faer::linalg::evd::ComputeEigenvectors::Yes,
        par,
        Default::default(),
    );
    faer::linalg::evd::self_adjoint_evd(
        a.as_ref(),
        s.as_mut(),
        Some(u.as_mut()),
        par,
        MemStack::new(&mut MemBuffer::new(scratch)),
        Default::default(),
    )
    .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    if eigenvalues[0] <= 0.0 {
        return Err(Error::Eigen(format!("non-positive eigenvalue {}", eigenvalues[0])));
    }
    let mut vecs = vec![0.0; m * m];
    for (col, &k) in order.iter().enumerate() {
        let dst = &mut vecs[col * m..(col + 1) * m];
        for i in 0..m {
            dst[i] = u[(i, k)];
        }
        // Fix the sign so the first non-negligible entry is positive.
        if let Some(first) = dst.iter().find(|x| x.abs() > 1e-8) {
            if *first < 0.0 {
                dst.iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
    Ok(SpectralOperator { grid: *grid, potential: v.clone(), diag, eigenvalues, basis: Basis::Dense(vecs) })
}

impl SpectralOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn potential(&self) -> &Potential {
        &self.potential
    }
    /// Eigenvalues of `L_h`, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
    /// Number of interior unknowns.
    pub fn interior_len(&self) -> usize {
        self.eigenvalues.len()
    }
    pub fn is_sine(&self) -> bool {
        matches!(self.basis, Basis::Sine(_))
    }

    fn check_grid(&self, f: &GridFunction) -> Result<()> {
        if f.grid() != &self.grid {
            return Err(Error::Config("function and operator live on different grids".into()));
        }
        Ok(())
    }

    fn dst(&self, fft: &Arc<dyn Fft<f64>>, x: &[f64]) -> Vec<f64> {
        let m = x.len();
        let len = 2 * (m + 1);
        let mut buf = vec![Complex::new(0.0, 0.0); len];
        for (i, &v) in x.iter().enumerate() {
            buf[i + 1].re = v;
            buf[len - i - 1].re = -v;
        }
        fft.process(&mut buf);
        let scale = (2.0 / (m + 1) as f64).sqrt();
        (1..=m).map(|k| -0.5 * buf[k].im * scale).collect()
    }

    /// Coefficients `<f, e_k>` (unweighted sum over interior points).
    pub fn coefficients(&self, f: &GridFunction) -> Result<Vec<f64>> {
        self.check_grid(f)?;
        let x = &f.values()[1..self.grid.len() - 1];
        Ok(self.analyze(x))
    }

    fn analyze(&self, x: &[f64]) -> Vec<f64> {
        let m = x.len();
        match &self.basis {
            Basis::Sine(fft) => self.dst(fft, x),
            Basis::Dense(e) => (0..m)
                .into_par_iter()
                .map(|k| {
                    let col = &e[k * m..(k + 1) * m];
                    pairwise_sum_by(0, m, &|i| col[i] * x[i])
                })
                .collect(),
        }
    }

    /// Interior values of `sum_k c_k e_k`.
    fn combine(&self, c: &[f64]) -> Vec<f64> {
        let m = c.len();
        match &self.basis {
            Basis::Sine(fft) => self.dst(fft, c),
            Basis::Dense(e) => {
                const CHUNK: usize = 256;
                let mut out = vec![0.0; m];
                out.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, rows)| {
                    let i0 = ci * CHUNK;
                    for (k, &ck) in c.iter().enumerate() {
                        if ck == 0.0 {
                            continue;
                        }
                        let col = &e[k * m + i0..k * m + i0 + rows.len()];
                        for (r, &v) in rows.iter_mut().zip(col) {
                            *r += ck * v;
                        }
                    }
                });
                out
            }
        }
    }

    /// Grid function `sum_k c_k e_k` with zero walls.
    pub fn synthesize(&self, c: &[f64]) -> Result<GridFunction> {
        if c.len() != self.interior_len() {
            return Err(Error::Config("coefficient vector has the wrong length".into()));
        }
        let inner = self.combine(c);
        let mut v = Vec::with_capacity(self.grid.len());
        v.push(0.0);
        v.extend_from_slice(&inner);
        v.push(0.0);
        GridFunction::new(self.grid, v)
    }

    /// The `k`-th eigenvector (0-based) as a grid function.
    pub fn eigenvector(&self, k: usize) -> Result<GridFunction> {
        let mut c = vec![0.0; self.interior_len()];
        *c.get_mut(k).ok_or_else(|| Error::Config(format!("no eigenvector {k}")))? = 1.0;
        self.synthesize(&c)
    }

    /// Multiply coefficients by `psi(sqrt(lambda_k))`.
    pub fn scale_coefficients(&self, c: &[f64], psi: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
        c.iter()
            .zip(&self.eigenvalues)
            .map(|(&ck, &l)| {
                let m = psi(l.sqrt());
                if m.is_finite() {
                    Ok(ck * m)
                } else {
                    Err(Error::NonFinite(format!("spectral multiplier at sqrt(lambda) = {}", l.sqrt())))
                }
            })
            .collect()
    }

    /// `psi(sqrt L) f`.
    pub fn apply_spectral(&self, psi: impl Fn(f64) -> f64, f: &GridFunction) -> Result<GridFunction> {
        let c = self.coefficients(f)?;
        self.synthesize(&self.scale_coefficients(&c, psi)?)
    }

    /// Direct tridiagonal application of `L_h` (walls held at zero).
    pub fn apply_matrix(&self, f: &GridFunction) -> Result<GridFunction> {
        self.check_grid(f)?;
        let n = self.grid.len();
        let inv = 1.0 / (self.grid.spacing() * self.grid.spacing());
        let v = f.values();
        let mut out = vec![0.0; n];
        for i in 1..n - 1 {
            let left = if i > 1 { v[i - 1] } else { 0.0 };
            let right = if i < n - 2 { v[i + 1] } else { 0.0 };
            out[i] = (2.0 * v[i] - left - right) * inv + self.diag[i - 1] * v[i];
        }
        GridFunction::new(self.grid, out)
    }

    /// Max entry of `E^T E - I`.
    pub fn orthonormality_defect(&self) -> f64 {
        let m = self.interior_len();
        let cols: Vec<Vec<f64>> = (0..m).map(|k| self.column(k)).collect();
        (0..m)
            .into_par_iter()
            .map(|a| {
                (0..=a)
                    .map(|b| {
                        let d = pairwise_sum_by(0, m, &|i| cols[a][i] * cols[b][i]);
                        (d - if a == b { 1.0 } else { 0.0 }).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Max entry of `E diag(lambda) E^T - A` where `A` is the difference matrix.
    pub fn reconstruction_defect(&self) -> f64 {
        let m = self.interior_len();
        let cols: Vec<Vec<f64>> = (0..m).map(|k| self.column(k)).collect();
        let inv = 1.0 / (self.grid.spacing() * self.grid.spacing());
        (0..m)
            .into_par_iter()
            .map(|i| {
                (0..m)
                    .map(|j| {
                        let s = pairwise_sum_by(0, m, &|k| cols[k][i] * self.eigenvalues[k] * cols[k][j]);
                        let a = if i == j {
                            2.0 * inv + self.diag[i]
                        } else if i.abs_diff(j) == 1 {
                            -inv
                        } else {
                            0.0
                        };
                        (s - a).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    fn column(&self, k: usize) -> Vec<f64> {
        let m = self.interior_len();
        match &self.basis {
            Basis::Dense(e) => e[k * m..(k + 1) * m].to_vec(),
            Basis::Sine(_) => {
                let s = (2.0 / (m + 1) as f64).sqrt();
                (1..=m)
                    .map(|i| s * (std::f64::consts::PI * ((k + 1) * i) as f64 / (m + 1) as f64).sin())
                    .collect()
            }
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Config(format!("time must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// `exp(-t L) f`.
pub fn heat(op: &SpectralOperator, f: &GridFunction, t: f64) -> Result<GridFunction> {
    check_time(t)?;
    op.apply_spectral(|s| (-t * s * s).exp(), f)
}

/// `exp(-t sqrt(L)) f`.
pub fn poisson(op: &SpectralOperator, f: &GridFunction, t: f64) -> Result<GridFunction> {
    check_time(t)?;
    op.apply_spectral(|s| (-t * s).exp(), f)
}

/// `exp(-t sqrt(L)) f` through the subordination integral
/// `pi^(-1/2) int_0^inf e^(-u) u^(-1/2) exp(-(t²/4u) L) f du`.
///
/// The integral is taken in `sigma = ln u` over `[-60, ln 750]` (the neglected
/// tails are below `1e-13` relative) with adaptive Gauss-Kronrod on the whole
/// coefficient vector. Independent of [`poisson`] except for the eigenbasis.
pub fn poisson_subordinated(op: &SpectralOperator, f: &GridFunction, t: f64) -> Result<GridFunction> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Config(format!("subordination needs t > 0, got {t}")));
    }
    let c = op.coefficients(f)?;
    let lam = op.eigenvalues();
    let k = t * t / 4.0;
    let norm = std::f64::consts::PI.sqrt().recip();
    let integrand = |sigma: f64, out: &mut [f64]| {
        let u = sigma.exp();
        let w = norm * (0.5 * sigma - u).exp();
        let s = k / u;
        for i in 0..out.len() {
            out[i] = w * (-s * lam[i]).exp() * c[i];
        }
    };
    let opts = QuadOptions { abs_tol: 1e-300, rel_tol: 1e-11, max_intervals: 20_000 };
    let coeffs = integrate_vec(integrand, c.len(), -60.0, 750f64.ln(), opts)?;
    op.synthesize(&coeffs)
}

/// Geometric ladder of `t` values with log-trapezoid weights (in `dt/t`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TLadder {
    points: Vec<f64>,
    weights: Vec<f64>,
}

/// Serializable ladder description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderSpec {
    pub t_min: f64,
    pub t_max: f64,
    #[serde(default = "default_ppd")]
    pub per_decade: usize,
}

fn default_ppd() -> usize {
    16
}

impl LadderSpec {
    pub fn build(&self) -> Result<TLadder> {
        TLadder::geometric(self.t_min, self.t_max, self.per_decade)
    }
}

impl TLadder {
    /// `t_min * 10^(j / per_decade)` up to `t_max`, with `t_max` appended if
    /// it does not fall on the progression.
    pub fn geometric(t_min: f64, t_max: f64, per_decade: usize) -> Result<TLadder> {
        if !(t_min > 0.0 && t_max > t_min && per_decade > 0) {
            return Err(Error::Config(format!(
                "invalid ladder t_min = {t_min}, t_max = {t_max}, per decade = {per_decade}"
            )));
        }
        let mut pts = Vec::new();
        let mut j = 0;
        loop {
            let t = t_min * 10f64.powf(j as f64 / per_decade as f64);
            if t > t_max * (1.0 + 1e-12) {
                break;
            }
            pts.push(t);
            j += 1;
        }
        if *pts.last().unwrap() < t_max * (1.0 - 1e-9) {
            pts.push(t_max);
        }
        TLadder::from_points(pts)
    }

    /// Default ladder for a grid: `h` to `X/4`, 16 points per decade.
    pub fn default_for(grid: &Grid) -> Result<TLadder> {
        TLadder::geometric(grid.spacing(), grid.halfwidth() / 4.0, 16)
    }

    pub fn from_points(points: Vec<f64>) -> Result<TLadder> {
        if points.is_empty() || points[0] <= 0.0 || points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("ladder must be positive and strictly increasing".into()));
        }
        let s: Vec<f64> = points.iter().map(|t| t.ln()).collect();
        let n = s.len();
        let weights = (0..n)
            .map(|j| {
                let left = if j > 0 { s[j] - s[j - 1] } else { 0.0 };
                let right = if j + 1 < n { s[j + 1] - s[j] } else { 0.0 };
                0.5 * (left + right)
            })
            .collect();
        Ok(TLadder { points, weights })
    }

    /// Ladder with extra nodes merged in (duplicates within 1e-12 dropped).
    pub fn merged(&self, extra: &[f64]) -> Result<TLadder> {
        let mut pts = self.points.clone();
        pts.extend_from_slice(extra);
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
        TLadder::from_points(pts)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
    /// Trapezoid weights for `int g(t) dt/t` over the whole ladder.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn len(&self) -> usize {
        self.points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
    pub fn t_min(&self) -> f64 {
        self.points[0]
    }
    pub fn t_max(&self) -> f64 {
        *self.points.last().unwrap()
    }
    /// Number of nodes `t_j <= r`.
    pub fn count_upto(&self, r: f64) -> usize {
        self.points.partition_point(|&t| t <= r * (1.0 + 1e-12))
    }
    /// Weight of node `j` in the trapezoid rule restricted to the first `k` nodes.
    pub fn truncated_weight(&self, j: usize, k: usize) -> f64 {
        debug_assert!(j < k);
        if j + 1 == k {
            if k == 1 {
                0.0
            } else {
                0.5 * (self.points[j].ln() - self.points[j - 1].ln())
            }
        } else {
            self.weights[j]
        }
    }
}

/// Samples `F(x, t_j)` of one or more channels on grid x ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpaceFunction {
    grid: Grid,
    ladder: TLadder,
    channels: Vec<Channel>,
    /// Per channel, `len(ladder)` slices of `grid.len()` values.
    data: Vec<Vec<f64>>,
}

impl HalfSpaceFunction {
    pub fn new(grid: Grid, ladder: TLadder, channels: Vec<Channel>, data: Vec<Vec<f64>>) -> Result<Self> {
        if channels.len() != data.len() {
            return Err(Error::Config("one data block per channel".into()));
        }
        for d in &data {
            if d.len() != grid.len() * ladder.len() {
                return Err(Error::Config("channel block has the wrong size".into()));
            }
            if d.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("half-space sample".into()));
            }
        }
        Ok(HalfSpaceFunction { grid, ladder, channels, data })
    }

    /// Single-channel field from a closure `F(x, t)`.
    pub fn from_fn(grid: Grid, ladder: TLadder, channel: Channel, f: impl Fn(&[f64], f64) -> f64) -> Result<Self> {
        let mut d = Vec::with_capacity(grid.len() * ladder.len());
        for &t in ladder.points() {
            for k in 0..grid.len() {
                d.push(f(&grid.point(k)[..grid.dim()], t));
            }
        }
        HalfSpaceFunction::new(grid, ladder, vec![channel], vec![d])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn ladder(&self) -> &TLadder {
        &self.ladder
    }
    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn has(&self, c: Channel) -> bool {
        self.channels.contains(&c)
    }

    /// Values of channel `c` at ladder index `j`.
    pub fn slice(&self, c: Channel, j: usize) -> Result<&[f64]> {
        let ci = self.channels.iter().position(|&x| x == c).ok_or(Error::MissingChannel(c))?;
        let n = self.grid.len();
        Ok(&self.data[ci][j * n..(j + 1) * n])
    }

    /// `sum over channels of |F_c(x, t_j)|²`.
    pub fn energy_slice(&self, channels: &[Channel], j: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.grid.len()];
        for &c in channels {
            for (o, v) in out.iter_mut().zip(self.slice(c, j)?) {
                *o += v * v;
            }
        }
        Ok(out)
    }

    /// Copy without the given channel.
    pub fn without(&self, c: Channel) -> HalfSpaceFunction {
        let keep: Vec<usize> = (0..self.channels.len()).filter(|&i| self.channels[i] != c).collect();
        HalfSpaceFunction {
            grid: self.grid,
            ladder: self.ladder.clone(),
            channels: keep.iter().map(|&i| self.channels[i]).collect(),
            data: keep.iter().map(|&i| self.data[i].clone()).collect(),
        }
    }

    /// Multiply every channel by `s`.
    pub fn scale(&self, s: f64) -> HalfSpaceFunction {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|d| d.iter_mut().for_each(|v| *v *= s));
        out
    }

    /// Raw block of a channel (ladder-major).
    pub fn block(&self, c: Channel) -> Result<&[f64]> {
        let ci = self.channels.iter().position(|&x| x == c).ok_or(Error::MissingChannel(c))?;
        Ok(&self.data[ci])
    }
}

fn check_ladder(op: &SpectralOperator, ladder: &TLadder) -> Result<()> {
    if ladder.t_max() > op.grid().halfwidth() * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "ladder reaches t = {} beyond the box half-width {}",
            ladder.t_max(),
            op.grid().halfwidth()
        )));
    }
    Ok(())
}

fn field_from_coeffs(
    op: &SpectralOperator,
    c: &[f64],
    ladder: &TLadder,
    psi: impl Fn(f64, f64) -> f64 + Sync,
) -> Result<Vec<f64>> {
    let slices: Vec<GridFunction> = ladder
        .points()
        .par_iter()
        .map(|&t| op.synthesize(&op.scale_coefficients(c, |s| psi(t, s))?))
        .collect::<Result<_>>()?;
    Ok(slices.into_iter().flat_map(|g| g.into_values()).collect())
}

/// `t sqrt(L) exp(-t sqrt(L)) f` on every ladder point.
pub fn square_function_field(op: &SpectralOperator, f: &GridFunction, ladder: &TLadder) -> Result<HalfSpaceFunction> {
    check_ladder(op, ladder)?;
    let c = op.coefficients(f)?;
    let d = field_from_coeffs(op, &c, ladder, |t, s| t * s * (-t * s).exp())?;
    HalfSpaceFunction::new(*op.grid(), ladder.clone(), vec![Channel::Square], vec![d])
}

/// Fourth-order central derivative, second order next to and at the walls.
pub fn derivative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let v = values;
    (0..n)
        .map(|i| {
            if i == 0 {
                (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h)
            } else if i == 1 || i == n - 2 {
                (v[i + 1] - v[i - 1]) / (2.0 * h)
            } else {
                (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * h)
            }
        })
        .collect()
}

/// Poisson extension `u(x, t) = exp(-t sqrt L) f` with channels
/// `u`, `t du/dt` and `t du/dx`.
pub fn poisson_extension(op: &SpectralOperator, f: &GridFunction, ladder: &TLadder) -> Result<HalfSpaceFunction> {
    check_ladder(op, ladder)?;
    let c = op.coefficients(f)?;
    let u = field_from_coeffs(op, &c, ladder, |t, s| (-t * s).exp())?;
    let dt = field_from_coeffs(op, &c, ladder, |t, s| -t * s * (-t * s).exp())?;
    let n = op.grid().len();
    let h = op.grid().spacing();
    let dx: Vec<f64> = ladder
        .points()
        .iter()
        .enumerate()
        .flat_map(|(j, &t)| derivative(&u[j * n..(j + 1) * n], h).into_iter().map(move |d| t * d))
        .collect();
    HalfSpaceFunction::new(
        *op.grid(),
        ladder.clone(),
        vec![Channel::U, Channel::TDtU, Channel::TGradX(0)],
        vec![u, dt, dx],
    )
}

/// Consistency of the discrete extension with `-u_tt + L_h u = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Max of `|-u_tt + L_h u|` over the interior third and interior ladder nodes.
    pub max_residual: f64,
    /// Max of `|L_h u|` over the same set, for scale.
    pub max_operator_term: f64,
    /// Largest relative ladder spacing `ln(t_{j+1}/t_j)`.
    pub max_log_step: f64,
}

pub fn extension_residual(op: &SpectralOperator, f: &GridFunction, ladder: &TLadder) -> Result<ResidualReport> {
    let ext = poisson_extension(op, f, ladder)?;
    let n = op.grid().len();
    let (lo, hi) = interior_window(op.grid(), 1.0 / 3.0);
    let t = ladder.points();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for j in 1..t.len().saturating_sub(1) {
        let u0 = ext.slice(Channel::U, j - 1)?;
        let u1 = ext.slice(Channel::U, j)?;
        let u2 = ext.slice(Channel::U, j + 1)?;
        let lu = op.apply_matrix(&GridFunction::new(*op.grid(), u1.to_vec())?)?;
        let (d0, d1) = (t[j] - t[j - 1], t[j + 1] - t[j]);
        for i in lo..=hi.min(n - 2) {
            let utt = 2.0 * ((u2[i] - u1[i]) / d1 - (u1[i] - u0[i]) / d0) / (d0 + d1);
            worst = worst.max((lu.values()[i] - utt).abs());
            scale = scale.max(lu.values()[i].abs());
        }
    }
    let step = t.windows(2).map(|w| (w[1] / w[0]).ln()).fold(0.0, f64::max);
    Ok(ResidualReport { max_residual: worst, max_operator_term: scale, max_log_step: step })
}

/// Index range of the centred window covering `fraction` of the box.
pub fn interior_window(grid: &Grid, fraction: f64) -> (usize, usize) {
    let m = grid.steps() as f64;
    let half = (fraction * m).floor() as usize;
    (grid.steps() - half, grid.steps() + half)
}

/// Comparison of the heat kernel of `L` with the free Gaussian kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatKernelReport {
    pub t: f64,
    pub q: f64,
    /// Smallest `C` with `|h_t - K_t| (rho(x)/sqrt t)^(2-n/q) <= C phi_t(x-y)`
    /// on the sampled pairs, where `h_t` is the discrete free kernel on the
    /// same grid and `phi_t` is the Gaussian majorant
    /// `(4 pi t)^(-1/2) exp(-|z|²/(8t))`.
    pub constant: f64,
    /// `V = 0`: the deficit vanishes by definition and `constant` is 0.
    pub free: bool,
    /// Max of `|h_t - K_t|` over the sampled pairs, `h_t` as above.
    pub max_abs_deficit: f64,
    /// Max of `K_t - K_t^0` (discrete free kernel on the same grid).
    pub max_excess_over_discrete_free: f64,
    /// Max of `K_t - h_t` (continuum free kernel).
    pub max_excess_over_gaussian: f64,
    pub rows: usize,
}

/// Heat-kernel deficit on `rows` sample points of the interior window.
pub fn heat_kernel_deficit(
    op: &SpectralOperator,
    rho: &CriticalRadiusField,
    t: f64,
    q: f64,
    window: f64,
    rows: usize,
) -> Result<HeatKernelReport> {
    if !(t > 0.0) {
        return Err(Error::Config(format!("heat kernel needs t > 0, got {t}")));
    }
    let grid = *op.grid();
    if rho.grid() != &grid {
        return Err(Error::Config("rho field lives on another grid".into()));
    }
    let h = grid.spacing();
    let free = op.potential().is_zero();
    // For V = 0 the operator is its own free reference, so the deficit is 0.
    let free_op = if free {
        None
    } else {
        Some(discretize(&Potential::zero(1)?, &grid, &OperatorOptions { backend: Backend::Sine, ..Default::default() })?)
    };
    let (lo, hi) = interior_window(&grid, window);
    let rows = rows.max(1).min(hi - lo + 1);
    let picks: Vec<usize> = (0..rows)
        .map(|r| if rows == 1 { grid.steps() } else { lo + r * (hi - lo) / (rows - 1) })
        .collect();
    let exponent = 2.0 - 1.0 / q;
    let reach = 8.0 * t.sqrt();
    let results: Vec<(f64, f64, f64, f64)> = picks
        .par_iter()
        .map(|&i| {
            let mut delta = GridFunction::zeros(grid);
            delta.values_mut()[i] = 1.0 / h;
            let k = heat(op, &delta, t)?;
            let k0 = match &free_op {
                Some(f0) => heat(f0, &delta, t)?,
                None => k.clone(),
            };
            let xi = grid.coord(i);
            let scale = match rho.at(i) {
                Rho::Finite(r) => Some((r / t.sqrt()).powf(exponent)),
                Rho::Infinite => None,
            };
            let (mut c, mut dmax, mut ex0, mut exg) = (0.0f64, 0.0f64, f64::NEG_INFINITY, f64::NEG_INFINITY);
            for j in 1..grid.len() - 1 {
                let z = grid.coord(j) - xi;
                let kv = k.values()[j];
                let ht = (-z * z / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t).sqrt();
                ex0 = ex0.max(kv - k0.values()[j]);
                exg = exg.max(kv - ht);
                if z.abs() > reach {
                    continue;
                }
                let d = (k0.values()[j] - kv).abs();
                dmax = dmax.max(d);
                if let Some(s) = scale {
                    let phi = (-z * z / (8.0 * t)).exp() / (4.0 * std::f64::consts::PI * t).sqrt();
                    c = c.max(d * s / phi);
                }
            }
            Ok((c, dmax, ex0, exg))
        })
        .collect::<Result<_>>()?;
    let fold = |f: fn(&(f64, f64, f64, f64)) -> f64| results.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    Ok(HeatKernelReport {
        t,
        q,
        constant: if free { 0.0 } else { fold(|r| r.0) },
        free,
        max_abs_deficit: fold(|r| r.1),
        max_excess_over_discrete_free: fold(|r| r.2),
        max_excess_over_gaussian: fold(|r| r.3),
        rows,
    })
}

/// Deficit `|exp(-t sqrt L) 1 - 1|` on the interior window and a power-law fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonDeficitReport {
    /// `(t, max deficit over the window)` per ladder point.
    pub per_t: Vec<(f64, f64)>,
    /// Fitted exponent in `deficit ~ C (t/rho(x))^alpha` over `t <= rho(x)`;
    /// absent when `rho` is infinite.
    pub alpha: Option<f64>,
    pub c: Option<f64>,
    /// Deficit positive at every sample used in the fit.
    pub positive: bool,
    /// Window maximum nondecreasing in `t`.
    pub monotone: bool,
}

pub fn poisson_one_deficit(
    op: &SpectralOperator,
    rho: &CriticalRadiusField,
    ladder: &TLadder,
    window: f64,
) -> Result<PoissonDeficitReport> {
    let grid = *op.grid();
    let one = GridFunction::constant(grid, 1.0);
    let c = op.coefficients(&one)?;
    let (lo, hi) = interior_window(&grid, window);
    let slices: Vec<Vec<f64>> = ladder
        .points()
        .par_iter()
        .map(|&t| {
            let u = op.synthesize(&op.scale_coefficients(&c, |s| (-t * s).exp())?)?;
            Ok((lo..=hi).map(|i| (u.values()[i] - 1.0).abs()).collect())
        })
        .collect::<Result<_>>()?;
    let per_t: Vec<(f64, f64)> = ladder
        .points()
        .iter()
        .zip(&slices)
        .map(|(&t, s)| (t, s.iter().copied().fold(0.0, f64::max)))
        .collect();
    let monotone = per_t.windows(2).all(|w| w[1].1 >= w[0].1 * (1.0 - 1e-9));
    if rho.is_infinite() {
        return Ok(PoissonDeficitReport { per_t, alpha: None, c: None, positive: true, monotone });
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut used_t = std::collections::BTreeSet::new();
    let mut positive = true;
    for (j, &t) in ladder.points().iter().enumerate() {
        for (w, i) in (lo..=hi).enumerate() {
            let Rho::Finite(r) = rho.at(i) else { continue };
            if t > r {
                continue;
            }
            let d = slices[j][w];
            if !(d > 0.0) {
                positive = false;
                continue;
            }
            xs.push((t / r).ln());
            ys.push(d.ln());
            used_t.insert(j);
        }
    }
    if used_t.len() < 4 {
        return Err(Error::FitFailure(format!(
            "only {} ladder points lie below rho; need at least 4",
            used_t.len()
        )));
    }
    let (slope, icept) = least_squares(&xs, &ys);
    Ok(PoissonDeficitReport { per_t, alpha: Some(slope), c: Some(icept.exp()), positive, monotone })
}

/// Ordinary least squares `y = a x + b`; returns `(a, b)`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let a = sxy / sxx;
    (a, my - a * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(v: Potential, steps: usize, h: f64, backend: Backend) -> SpectralOperator {
        let g = Grid::with_steps(1, steps, h).unwrap();
        discretize(&v, &g, &OperatorOptions { backend, ..Default::default() }).unwrap()
    }

    #[test]
    fn dense_and_sine_bases_agree() {
        let v = Potential::constant(1, 1.0).unwrap();
        let d = op(v.clone(), 40, 0.1, Backend::Dense);
        let s = op(v, 40, 0.1, Backend::Sine);
        for (a, b) in d.eigenvalues().iter().zip(s.eigenvalues()) {
            assert!((a - b).abs() < 1e-9 * b);
        }
        let f = GridFunction::from_fn(*d.grid(), |x| (-x[0] * x[0]).exp() * (1.0 + x[0])).unwrap();
        let a = poisson(&d, &f, 0.3).unwrap();
        let b = poisson(&s, &f, 0.3).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-11);
        assert!(s.orthonormality_defect() < 1e-12);
        assert!(s.reconstruction_defect() < 1e-8);
    }

    #[test]
    fn sine_backend_rejects_variable_potentials() {
        let g = Grid::with_steps(1, 10, 0.1).unwrap();
        let v = Potential::shen(1, 1.5).unwrap();
        let o = OperatorOptions { backend: Backend::Sine, ..Default::default() };
        assert!(discretize(&v, &g, &o).is_err());
    }

    #[test]
    fn dense_cap_is_enforced() {
        let g = Grid::with_steps(1, 100, 0.1).unwrap();
        let o = OperatorOptions { dense_cap: 50, backend: Backend::Dense, ..Default::default() };
        assert!(matches!(discretize(&Potential::zero(1).unwrap(), &g, &o), Err(Error::Config(_))));
    }

    #[test]
    fn ladder_weights_integrate_log_uniform() {
        let l = TLadder::geometric(0.01, 10.0, 16).unwrap();
        let total: f64 = l.weights().iter().sum();
        assert!((total - 1000f64.ln()).abs() < 1e-12);
        let k = l.count_upto(1.0);
        let part: f64 = (0..k).map(|j| l.truncated_weight(j, k)).sum();
        assert!((part - 100f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn derivative_is_fourth_order() {
        let errs: Vec<f64> = [0.1, 0.05]
            .iter()
            .map(|&h| {
                let n = (2.0 / h) as usize + 1;
                let v: Vec<f64> = (0..n).map(|i| (-1.0 + i as f64 * h).sin()).collect();
                let d = derivative(&v, h);
                (2..n - 2).map(|i| (d[i] - (-1.0 + i as f64 * h).cos()).abs()).fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[0] / errs[1] > 14.0, "{errs:?}");
    }

    #[test]
    fn least_squares_recovers_a_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let (a, b) = least_squares(&x, &y);
        assert!((a - 2.5).abs() < 1e-14 && (b + 1.0).abs() < 1e-14);
    }
}
