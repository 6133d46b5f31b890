//! Adaptive Gauss–Kronrod quadrature.
//!
//! A 7-point Gauss / 15-point Kronrod pair with global bisection of the
//! interval carrying the largest error estimate.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

// Kronrod abscissae on [0, 1); odd indices are the Gauss nodes.
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
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

impl QuadResult {
    fn zero() -> Self {
        QuadResult {
            value: 0.0,
            error: 0.0,
            converged: true,
        }
    }
}

/// One Gauss–Kronrod 15 panel: `(kronrod, |kronrod - gauss|)`.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrates `f` over `[a, b]` until the estimated error drops below
/// `max(abs_tol, rel_tol * |value|)`.
///
/// Hitting the subdivision cap is not an error: the result is returned with
/// `converged = false`. Non-finite integrand values are.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult::zero());
    }
    if b < a {
        let r = integrate(f, b, a, abs_tol, rel_tol)?;
        return Ok(QuadResult {
            value: -r.value,
            ..r
        });
    }
    let (v0, e0) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Panel {
        a,
        b,
        value: v0,
        error: e0,
    });
    let mut value = v0;
    let mut error = e0;
    let mut count = 1;
    loop {
        if !value.is_finite() {
            return Err(Error::QuadratureFailure(format!(
                "non-finite integrand on [{a:e}, {b:e}]"
            )));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            break;
        }
        if count >= MAX_INTERVALS {
            return Ok(QuadResult {
                value,
                error,
                converged: false,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at machine resolution
            heap.push(Panel {
                error: 0.0,
                ..worst
            });
            error = heap.iter().map(|p| p.error).sum();
            if heap.iter().all(|p| p.error == 0.0) {
                break;
            }
            continue;
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        count += 1;
        // resum to avoid drift from incremental updates
        value = heap.iter().map(|p| p.value).sum();
        error = heap.iter().map(|p| p.error).sum();
    }
    Ok(QuadResult {
        value,
        error,
        converged: true,
    })
}

/// Integrates over consecutive panels `breaks[0]..breaks[1]..…`, each panel
/// adaptively. Kinks of the integrand should be placed on breakpoints.
pub fn integrate_breaks<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    let mut total = QuadResult::zero();
    let panels = breaks.len().saturating_sub(1).max(1) as f64;
    for w in breaks.windows(2) {
        let r = integrate(&f, w[0], w[1], abs_tol / panels, rel_tol)?;
        total.value += r.value;
        total.error += r.error;
        total.converged &= r.converged;
    }
    Ok(total)
}

/// Breakpoints splitting `[a, b]` (0 ≤ a < b) into geometrically growing
/// panels past radius 1, suited to radial integrands on long ranges.
pub fn geometric_breaks(a: f64, b: f64) -> Vec<f64> {
    let mut out = vec![a];
    let mut r = if a < 1.0 { 1.0 } else { 2.0 * a };
    while r < b {
        if r > a {
            out.push(r);
        }
        r *= 2.0;
    }
    out.push(b);
    out
}

/// Sorted, deduplicated breakpoints clipped to `[a, b]`.
pub fn breaks_within(a: f64, b: f64, extra: &[f64]) -> Vec<f64> {
    let mut pts: Vec<f64> = extra.iter().copied().filter(|&p| p > a && p < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (1.0 + y.abs()));
    pts
}
