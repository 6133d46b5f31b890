//! Closed-form criterion objects: envelopes of `e^{-V}`, the drift ratio,
//! the Poincaré threshold, `Φ`, and three-valued verdicts on finite radial
//! windows.
//!
//! Quantities that overflow easily (`Φ`, the ratio, `β`) are carried as
//! natural logarithms; the plain-valued wrappers simply exponentiate.

mod rate;
mod table;

pub use rate::{inverse_rate, log_beta_formula, psi_from_beta, semigroup_bound, RateFunction};
pub use table::{
    build_envelope_table, log_spaced, weak_pc_alpha, EnvelopeTable, WeakAlpha, WeakVariant,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, PotentialSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extremum {
    Inf,
    Sup,
}

const SCAN_POINTS: usize = 64;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Radius in `[a, b]` attaining the requested extremum of `e^{-V}`.
pub fn envelope_argext(p: &PotentialSpec, a: f64, b: f64, kind: Extremum) -> Result<f64> {
    if a > b {
        return Err(Error::EmptyAnnulus { a, b });
    }
    if a == b {
        return Ok(a);
    }
    if let Some(rm) = p.eventually_monotone_from() {
        if a >= rm {
            return Ok(match kind {
                Extremum::Inf => b,
                Extremum::Sup => a,
            });
        }
    }
    // maximize key: inf of e^{-V} is max of V
    let key = |r: f64| match kind {
        Extremum::Inf => p.radial(r),
        Extremum::Sup => -p.radial(r),
    };
    let mut best_r = a;
    let mut best = key(a);
    let consider = |r: f64, best_r: &mut f64, best: &mut f64| {
        let v = key(r);
        if v > *best {
            *best = v;
            *best_r = r;
        }
    };
    consider(b, &mut best_r, &mut best);
    for k in p.kinks() {
        if k > a && k < b {
            consider(k, &mut best_r, &mut best);
        }
    }
    let (mut lo, mut hi) = (a, b);
    for _ in 0..2 {
        let step = (hi - lo) / SCAN_POINTS as f64;
        let mut idx = 0;
        let mut local = f64::NEG_INFINITY;
        for i in 0..=SCAN_POINTS {
            let r = (lo + step * i as f64).min(hi);
            let v = key(r);
            if v > local {
                local = v;
                idx = i;
            }
            consider(r, &mut best_r, &mut best);
        }
        let c = lo + step * idx as f64;
        lo = (c - step).max(a);
        hi = (c + step).min(b);
    }
    let r = golden_max(&key, lo, hi);
    consider(r, &mut best_r, &mut best);
    Ok(best_r)
}

fn golden_max<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64) -> f64 {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if hi - lo <= 1e-14 * (1.0 + hi.abs()) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        x1
    } else {
        x2
    }
}

/// `log` of [`envelope_extremum`], i.e. `-V` at the extremal radius.
pub fn log_envelope(p: &PotentialSpec, a: f64, b: f64, kind: Extremum) -> Result<f64> {
    Ok(-p.radial(envelope_argext(p, a, b, kind)?))
}

/// Inf or sup of `e^{-V(z)}` over the annulus `a ≤ |z| ≤ b`.
pub fn envelope_extremum(p: &PotentialSpec, a: f64, b: f64, kind: Extremum) -> Result<f64> {
    Ok(log_envelope(p, a, b, kind)?.exp())
}

/// `log R(x)` for `|x| = x_abs`.
pub fn log_drift_ratio(p: &PotentialSpec, x_abs: f64) -> Result<f64> {
    if !(x_abs >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "drift ratio needs |x| >= 1, got {x_abs}"
        )));
    }
    let zi = envelope_argext(p, x_abs - 1.0, x_abs - 0.5, Extremum::Inf)?;
    let zs = envelope_argext(p, x_abs, x_abs + 1.0, Extremum::Sup)?;
    Ok(p.increment(zi, zs))
}

/// Ratio of the inf of `e^{-V}` on `[|x|-1, |x|-1/2]` to its sup on
/// `[|x|, |x|+1]`.
pub fn drift_ratio(p: &PotentialSpec, x_abs: f64) -> Result<f64> {
    Ok(log_drift_ratio(p, x_abs)?.exp())
}

/// `log(e^{V(x)} inf_{|x|-1 ≤ |z| ≤ |x|-1/2} e^{-V(z)})`, the quantity whose
/// tail infimum is `Φ`.
pub fn log_phi_inner(p: &PotentialSpec, x_abs: f64) -> Result<f64> {
    if !(x_abs >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "phi needs |x| >= 1, got {x_abs}"
        )));
    }
    let zi = envelope_argext(p, x_abs - 1.0, x_abs - 0.5, Extremum::Inf)?;
    Ok(p.increment(zi, x_abs))
}

pub fn poincare_threshold(d: usize, alpha: f64) -> f64 {
    let e = std::f64::consts::E;
    let pow = 2f64.powi(2 * d as i32 + 1);
    // (2^α - 1)/α without cancellation for small α
    let factor = (alpha * std::f64::consts::LN_2).exp_m1() / alpha;
    pow * (e + e.sqrt()) * factor
}

pub fn lambda0(d: usize, alpha: f64) -> f64 {
    2.0 * poincare_threshold(d, alpha).ln()
}

/// `e^{V(x)}/(1+|x|^{d+α})`.
pub fn weighted_pc_weight(p: &PotentialSpec, m: &ModelSpec, x: &[f64]) -> f64 {
    let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
    weighted_pc_weight_radial(p, m, r)
}

pub fn weighted_pc_weight_radial(p: &PotentialSpec, m: &ModelSpec, r: f64) -> f64 {
    (p.radial(r) - r.powf(m.d as f64 + m.alpha).ln_1p()).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionVerdict {
    pub criterion: String,
    pub verdict: Verdict,
    pub margin: f64,
    pub window: (f64, f64),
    /// Margin too small to trust either way.
    pub near_threshold: bool,
}

const NEAR: f64 = 0.05;

impl CriterionVerdict {
    fn new(criterion: &str, verdict: Verdict, margin: f64, window: (f64, f64)) -> Self {
        CriterionVerdict {
            criterion: criterion.to_string(),
            verdict,
            margin,
            window,
            near_threshold: margin.abs() < NEAR,
        }
    }
}

fn nondecreasing(y: &[f64]) -> bool {
    y.windows(2)
        .all(|w| w[1] >= w[0] - 1e-9 * (1.0 + w[0].abs()))
}

fn nonincreasing(y: &[f64]) -> bool {
    y.windows(2)
        .all(|w| w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs()))
}

/// Index of the first radius in the top decade of the window.
fn top_decade(radii: &[f64]) -> usize {
    let last = *radii.last().unwrap();
    let cut = radii[0].max(last / 10.0);
    radii
        .iter()
        .position(|&r| r >= cut)
        .unwrap_or(0)
        .min(radii.len() - 2)
}

fn check_grid(r: &[f64]) -> Result<()> {
    if r.len() < 2 || r.windows(2).any(|w| !(w[1] > w[0])) || !(r[0] >= 1.0) {
        return Err(Error::InvalidParameter(
            "radial grid must be increasing, start at >= 1 and have >= 2 points".into(),
        ));
    }
    Ok(())
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                b
            } else {
                a + (b - a) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Finite-window proxy for `liminf R(x) > threshold(d, α)`.
///
/// The margin is `min R / threshold - 1` over the sampled radii.
pub fn check_poincare_criterion(
    p: &PotentialSpec,
    m: &ModelSpec,
    r_min: f64,
    r_max: f64,
    n: usize,
) -> Result<CriterionVerdict> {
    if !(r_min >= 1.0 && r_max > r_min) || n < 2 {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= r_min < r_max and n >= 2 (got {r_min}, {r_max}, {n})"
        )));
    }
    let radii = linspace(r_min, r_max, n);
    let logs = radii
        .iter()
        .map(|&r| log_drift_ratio(p, r))
        .collect::<Result<Vec<_>>>()?;
    let log_thr = poincare_threshold(m.d, m.alpha).ln();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let margin = (lo - log_thr).exp_m1();
    let top = &logs[top_decade(&radii)..];
    let verdict = if margin > 0.0 && nondecreasing(top) {
        Verdict::Pass
    } else if hi < log_thr && nonincreasing(top) {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    };
    Ok(CriterionVerdict::new(
        "poincare",
        verdict,
        margin,
        (r_min, r_max),
    ))
}

/// Finite-window proxy for `liminf R(x) = ∞`.
///
/// Pass when `log R` is nondecreasing over the top decade and grows there by
/// at least 0.1; Fail when it is nonincreasing there. The margin is the top
/// decade growth of `log R`.
pub fn check_super_pc_criterion(p: &PotentialSpec, r_grid: &[f64]) -> Result<CriterionVerdict> {
    check_grid(r_grid)?;
    let logs = r_grid
        .iter()
        .map(|&r| log_drift_ratio(p, r))
        .collect::<Result<Vec<_>>>()?;
    let top = &logs[top_decade(r_grid)..];
    let growth = top[top.len() - 1] - top[0];
    let verdict = if nondecreasing(top) && growth >= 0.1 {
        Verdict::Pass
    } else if nonincreasing(top) {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    };
    let window = (r_grid[0], *r_grid.last().unwrap());
    Ok(CriterionVerdict::new(
        "super_poincare",
        verdict,
        growth,
        window,
    ))
}

/// Finite-window proxy for `liminf e^{V(x)}/|x|^{d+α} > 0`.
///
/// Uses the top-decade slope `σ` of `V(r) - (d+α) log r` against `log r`
/// as the margin: Pass when `σ > -0.05`, Fail when `σ ≤ -0.05` with a
/// nonincreasing trend.
pub fn check_weighted_pc_criterion(
    p: &PotentialSpec,
    m: &ModelSpec,
    r_grid: &[f64],
) -> Result<CriterionVerdict> {
    check_grid(r_grid)?;
    let q = m.d as f64 + m.alpha;
    let g: Vec<f64> = r_grid.iter().map(|&r| p.radial(r) - q * r.ln()).collect();
    let i0 = top_decade(r_grid);
    let last = r_grid.len() - 1;
    let sigma = (g[last] - g[i0]) / (r_grid[last].ln() - r_grid[i0].ln());
    let verdict = if sigma > -NEAR {
        Verdict::Pass
    } else if nonincreasing(&g[i0..]) {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    };
    Ok(CriterionVerdict::new(
        "weighted_poincare",
        verdict,
        sigma.min(f64::MAX),
        (r_grid[0], r_grid[last]),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiValue {
    pub log_value: f64,
    pub value: f64,
    pub argmin: f64,
    /// Whether the inner expression is nondecreasing near `r_cap`, so the
    /// search window captures the infimum over `[r, ∞)`.
    pub certified: bool,
}

/// `Φ(r)` searched over `[r, r_cap]`.
pub fn phi_function(p: &PotentialSpec, r: f64, r_cap: f64) -> Result<PhiValue> {
    if !(r >= 1.0 && r_cap > r) {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= r < r_cap (got {r}, {r_cap})"
        )));
    }
    const N: usize = 256;
    let radii = log_spaced(r, r_cap, N);
    let vals = radii
        .iter()
        .map(|&x| log_phi_inner(p, x))
        .collect::<Result<Vec<_>>>()?;
    let (mut idx, mut best) = (0, vals[0]);
    for (i, &v) in vals.iter().enumerate() {
        if v < best {
            best = v;
            idx = i;
        }
    }
    let lo = radii[idx.saturating_sub(1)];
    let hi = radii[(idx + 1).min(N - 1)];
    let f = |x: f64| -log_phi_inner(p, x).unwrap_or(f64::NEG_INFINITY);
    let x = golden_max(&f, lo, hi);
    let mut argmin = radii[idx];
    let v = -f(x);
    if v < best {
        best = v;
        argmin = x;
    }
    let certified = nondecreasing(&vals[N - N / 10..]);
    Ok(PhiValue {
        log_value: best,
        value: best.exp(),
        argmin,
        certified,
    })
}
