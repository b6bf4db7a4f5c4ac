//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! The rule never evaluates the interval endpoints, so integrable endpoint
//! singularities are handled by repeated bisection of the worst interval.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

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

/// Tolerances for [`integrate`].
#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_subdivisions: 1_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
}

struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> (f64, f64) {
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(centre);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let dx = half * x;
        let pair = f(centre - dx) + f(centre + dx);
        kron += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kron * half;
    let error = ((kron - gauss) * half).abs();
    (value, error)
}

/// Integrates `f` over the finite interval `[lo, hi]`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    opts: QuadOptions,
) -> Result<QuadResult> {
    if lo == hi {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            subdivisions: 0,
        });
    }
    let (value, error) = kronrod(&f, lo, hi);
    if !value.is_finite() {
        return Err(Error::Quadrature {
            lo,
            hi,
            estimate: value,
            error,
        });
    }
    let mut heap = BinaryHeap::new();
    heap.push(Segment {
        lo,
        hi,
        value,
        error,
    });
    let mut total = value;
    let mut total_err = error;
    let mut subdivisions = 1;
    let mut magnitude = value.abs();
    // Errors at the rounding level of Σ|segment values| cannot be reduced further.
    while total_err
        > opts
            .abs_tol
            .max(opts.rel_tol * total.abs())
            .max(1e3 * f64::EPSILON * magnitude)
    {
        if subdivisions >= opts.max_subdivisions {
            return Err(Error::Quadrature {
                lo,
                hi,
                estimate: total,
                error: total_err,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // Interval can no longer be split in floating point.
            return Err(Error::Quadrature {
                lo: worst.lo,
                hi: worst.hi,
                estimate: total,
                error: total_err,
            });
        }
        let (v1, e1) = kronrod(&f, worst.lo, mid);
        let (v2, e2) = kronrod(&f, mid, worst.hi);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment {
            lo: worst.lo,
            hi: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            lo: mid,
            hi: worst.hi,
            value: v2,
            error: e2,
        });
        subdivisions += 1;
        // Recompute sums periodically to keep cancellation error from drifting.
        if subdivisions % 64 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
            magnitude = heap.iter().map(|s| s.value.abs()).sum();
        }
    }
    let value: f64 = heap.iter().map(|s| s.value).sum();
    if !value.is_finite() {
        return Err(Error::Quadrature {
            lo,
            hi,
            estimate: value,
            error: total_err,
        });
    }
    Ok(QuadResult {
        value,
        error: total_err,
        subdivisions,
    })
}

/// Integrates `f` over `[lo, ∞)` with the substitution `y = lo / t`, `lo > 0`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    opts: QuadOptions,
) -> Result<QuadResult> {
    if lo <= 0.0 {
        return Err(Error::Numeric(format!(
            "semi-infinite quadrature needs a positive lower limit, got {lo}"
        )));
    }
    integrate(
        |t: f64| {
            let y = lo / t;
            f(y) * lo / (t * t)
        },
        0.0,
        1.0,
        opts,
    )
}
