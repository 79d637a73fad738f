//! Compensated arithmetic, deterministic summation and adaptive quadrature.

use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::{Add, AddAssign, Neg, Sub};

/// Unevaluated sum `hi + lo` carrying roughly 106 bits of precision.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    #[inline]
    pub fn new(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    /// Exact square of an `f64`.
    #[inline]
    pub fn square(x: f64) -> Dd {
        let (hi, lo) = two_prod(x, x);
        Dd { hi, lo }
    }

    /// Exact product of two `f64`s.
    #[inline]
    pub fn product(a: f64, b: f64) -> Dd {
        let (hi, lo) = two_prod(a, b);
        Dd { hi, lo }
    }

    #[inline]
    pub fn add_f64(self, b: f64) -> Dd {
        let (s, e) = two_sum(self.hi, b);
        let (hi, lo) = quick_two_sum(s, e + self.lo);
        Dd { hi, lo }
    }

    #[inline]
    pub fn mul_f64(self, b: f64) -> Dd {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Dd { hi, lo }
    }

    #[inline]
    pub fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let (hi, lo) = quick_two_sum(p, e + self.hi * b.lo + self.lo * b.hi);
        Dd { hi, lo }
    }

    /// Quotient by an `f64`, accurate to double-double precision.
    #[inline]
    pub fn div_f64(self, b: f64) -> Dd {
        let q1 = self.hi / b;
        let r = self - Dd::product(q1, b);
        let q2 = (r.hi + r.lo) / b;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl AddAssign for Dd {
    #[inline]
    fn add_assign(&mut self, b: Dd) {
        *self = *self + b;
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

const PAIRWISE_BLOCK: usize = 16;

/// Sum with a fixed binary tree, so the result depends only on the input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise sum of `f(i)` for `i` in `lo..hi`.
pub fn pairwise_sum_by(lo: usize, hi: usize, f: &impl Fn(usize) -> f64) -> f64 {
    if hi - lo <= PAIRWISE_BLOCK {
        return (lo..hi).map(f).sum();
    }
    let mid = lo + (hi - lo) / 2;
    pairwise_sum_by(lo, mid, f) + pairwise_sum_by(mid, hi, f)
}

/// Compensated sum, exact up to the final rounding for moderate lengths.
pub fn dd_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(Dd::ZERO, |acc, x| acc.add_f64(x)).to_f64()
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Options for adaptive Gauss-Kronrod integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 0.0, rel_tol: 1e-12, max_intervals: 4000 }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Segment {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

fn gk15_vec(f: &mut impl FnMut(f64, &mut [f64]), a: f64, b: f64, dim: usize, buf: &mut [f64]) -> Segment {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    f(c, buf);
    for k in 0..dim {
        kron[k] = WGK[7] * buf[k];
        gauss[k] = WG[3] * buf[k];
    }
    for j in 0..7 {
        for sign in [-1.0, 1.0] {
            f(c + sign * hl * XGK[j], buf);
            for k in 0..dim {
                kron[k] += WGK[j] * buf[k];
                if j % 2 == 1 {
                    gauss[k] += WG[j / 2] * buf[k];
                }
            }
        }
    }
    let mut err = 0.0f64;
    for k in 0..dim {
        kron[k] *= hl;
        gauss[k] *= hl;
        err = err.max((kron[k] - gauss[k]).abs());
    }
    Segment { a, b, value: kron, err }
}

/// Adaptive G7/K15 integration of a vector-valued integrand over `[a, b]`.
///
/// The error estimate is the max-norm of the Kronrod/Gauss difference, summed
/// over subintervals; refinement bisects the worst interval until the total
/// falls below `max(abs_tol, rel_tol * |result|_inf)`.
pub fn integrate_vec(
    mut f: impl FnMut(f64, &mut [f64]),
    dim: usize,
    a: f64,
    b: f64,
    opts: QuadOptions,
) -> Result<Vec<f64>> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Config("quadrature limits must be finite".into()));
    }
    let mut buf = vec![0.0; dim];
    let mut heap = BinaryHeap::new();
    heap.push(gk15_vec(&mut f, a, b, dim, &mut buf));
    loop {
        let mut total = vec![0.0; dim];
        let mut err = 0.0;
        for s in heap.iter() {
            err += s.err;
            for k in 0..dim {
                total[k] += s.value[k];
            }
        }
        let scale = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if err <= opts.abs_tol.max(opts.rel_tol * scale) {
            // Re-add in interval order so the result does not depend on heap layout.
            let mut segs: Vec<Segment> = heap.into_vec();
            segs.sort_by(|x, y| x.a.total_cmp(&y.a));
            let mut out = vec![0.0; dim];
            for s in &segs {
                for k in 0..dim {
                    out[k] += s.value[k];
                }
            }
            return Ok(out);
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature(format!(
                "error estimate {err:.3e} after {} intervals",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        heap.push(gk15_vec(&mut f, worst.a, mid, dim, &mut buf));
        heap.push(gk15_vec(&mut f, mid, worst.b, dim, &mut buf));
    }
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, opts: QuadOptions) -> Result<f64> {
    integrate_vec(|x, out| out[0] = f(x), 1, a, b, opts).map(|v| v[0])
}
