//! Exponential moments of `μ_V`, the moment transform `F`, and exponent
//! fits for super-Poincaré rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{radial_integral, sphere_surface, Family, Measure};
use crate::quad;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub lambda: f64,
    /// `μ_V(e^{λ|x|})`, `None` when it diverges.
    pub value: Option<f64>,
    pub diverges: bool,
    /// `log μ_V(e^{|x|})`, `None` when that moment diverges.
    pub c0: Option<f64>,
    pub quad_error: f64,
}

const MOMENT_TOL: f64 = 1e-10;

/// `(value, error)` of `μ_V(e^{λ|x|})`, `None` if the tail comparison fails.
fn moment(meas: &Measure, lambda: f64) -> Result<Option<(f64, f64)>> {
    let p = &meas.potential;
    if matches!(p.family, Family::Generic(_)) && lambda != 0.0 {
        return Err(Error::MissingTailBound);
    }
    let scale = meas.c_v * sphere_surface(p.dim);
    match radial_integral(p, p.dim as f64 - 1.0, lambda, 0.0, MOMENT_TOL, 0.0) {
        Ok(r) => Ok(Some((scale * r.value, scale * r.error))),
        Err(Error::NonIntegrable(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// `μ_V(e^{λ|x|})` by radial quadrature; divergence is decided from the
/// potential's tail growth, never from the quadrature.
pub fn exp_moment(meas: &Measure, lambda: f64) -> Result<MomentReport> {
    if !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda = {lambda}")));
    }
    let main = moment(meas, lambda)?;
    let c0 = moment(meas, 1.0)?.map(|(v, _)| v.ln());
    Ok(MomentReport {
        lambda,
        value: main.map(|m| m.0),
        diverges: main.is_none(),
        c0,
        quad_error: main.map_or(0.0, |m| m.1),
    })
}

/// `c₁ = ∫_{|z|≤1} |z|^{2-d-α} dz = dπ^{d/2}/((2-α)Γ(d/2+1))`.
pub fn c1_closed_form(d: usize, alpha: f64) -> f64 {
    sphere_surface(d) / (2.0 - alpha)
}

/// `c₁` by quadrature: the interval in `d = 1`, polar coordinates in the
/// plane, the radial reduction beyond. Panels are dyadic toward the origin.
pub fn c1_quadrature(d: usize, alpha: f64) -> Result<f64> {
    let mut breaks: Vec<f64> = (0..=80).rev().map(|k| 0.5f64.powi(k)).collect();
    breaks.insert(0, 0.0);
    let q = 1.0 - alpha;
    match d {
        1 => Ok(2.0 * quad::integrate_breaks(|z: f64| z.powf(q), &breaks, 1e-15, 1e-12)?.value),
        2 => {
            let radial = |r: f64| {
                quad::integrate(
                    |_t: f64| r * r.powf(-alpha),
                    0.0,
                    2.0 * std::f64::consts::PI,
                    1e-15,
                    1e-13,
                )
                .map(|v| v.value)
                .unwrap_or(f64::NAN)
            };
            Ok(quad::integrate_breaks(radial, &breaks, 1e-15, 1e-12)?.value)
        }
        _ => Ok(sphere_surface(d)
            * quad::integrate_breaks(|r: f64| r.powf(q), &breaks, 1e-15, 1e-12)?.value),
    }
}

/// `log 2β(1/(c₁s²e^{2s}))` from `log β` as a function of `log s`.
fn inner_log<L: Fn(f64) -> f64>(log_beta: &L, c1: f64, s: f64) -> f64 {
    std::f64::consts::LN_2 + log_beta(-c1.ln() - 2.0 * s.ln() - 2.0 * s)
}

fn inner_integral<L: Fn(f64) -> f64>(log_beta: &L, c1: f64, a: f64, b: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let f = |s: f64| inner_log(log_beta, c1, s) / (s * s);
    let v = quad::integrate(f, a, b, 1e-14, 1e-11)
        .map_err(|e| Error::InnerIntegralDiverges(format!("on [{a}, {b}]: {e}")))?;
    if !v.value.is_finite() {
        return Err(Error::InnerIntegralDiverges(format!(
            "non-finite on [{a}, {b}]"
        )));
    }
    Ok(v.value)
}

/// `log h(λ) = -(1+c₀)λ - λ∫₁^λ s^{-2} log[2β(1/(c₁s²e^{2s}))] ds`, with
/// `β` given as `log β` of `log s`.
pub fn log_h<L: Fn(f64) -> f64>(
    log_beta: &L,
    c0: f64,
    d: usize,
    alpha: f64,
    lambda: f64,
) -> Result<f64> {
    if !(lambda >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "h is defined for lambda >= 1, got {lambda}"
        )));
    }
    let c1 = c1_closed_form(d, alpha);
    Ok(-(1.0 + c0) * lambda - lambda * inner_integral(log_beta, c1, 1.0, lambda)?)
}

/// Outer integrals stop here; beyond it the transform is reported as
/// divergent.
pub const MAX_LAMBDA: f64 = 1e8;

/// `F(r) = ∫₁^∞ e^{rλ} h(λ) dλ` with `β` given in log form, `log β` as a
/// function of `log s` (so arguments far below `f64::MIN_POSITIVE` stay
/// representable). `None` when `F(r)` diverges or its integrand leaves the
/// float range.
///
/// For nonincreasing `β` the log-integrand is concave, so once its slope
/// turns negative the remaining tail is bounded by value over slope.
pub fn moment_transform_log<L: Fn(f64) -> f64>(
    log_beta: &L,
    c0: f64,
    d: usize,
    alpha: f64,
    r: f64,
) -> Result<Option<f64>> {
    if !(r >= 0.0) || !c0.is_finite() || !(alpha > 0.0 && alpha < 2.0) || d == 0 {
        return Err(Error::InvalidParameter(format!(
            "bad transform arguments r = {r}, c0 = {c0}, alpha = {alpha}"
        )));
    }
    let c1 = c1_closed_form(d, alpha);
    // integrate e^{ℓ(λ) - shift} to keep magnitudes in range
    let mut lam = 1.0;
    let mut inner = 0.0;
    let ell = |l: f64, inner_at: f64| (r - 1.0 - c0) * l - l * inner_at;
    let shift = ell(1.0, 0.0);
    let mut total = 0.0;
    while lam < MAX_LAMBDA {
        let next = 2.0 * lam;
        let next_inner = inner + inner_integral(log_beta, c1, lam, next)?;
        if ell(next, next_inner) - shift > 700.0 {
            return Ok(None);
        }
        let (base, base_inner) = (lam, inner);
        let g = |l: f64| {
            let i = base_inner + inner_integral(log_beta, c1, base, l).unwrap_or(f64::NAN);
            (ell(l, i) - shift).exp()
        };
        let panel = quad::integrate(g, lam, next, 0.0, 1e-11)?;
        if !panel.value.is_finite() {
            return Err(Error::InnerIntegralDiverges(format!(
                "outer integrand non-finite on [{lam}, {next}]"
            )));
        }
        total += panel.value;
        inner = next_inner;
        lam = next;
        let slope = r - 1.0 - c0 - inner - inner_log(log_beta, c1, lam) / lam;
        if slope < 0.0 {
            let tail = (ell(lam, inner) - shift).exp() / -slope;
            if tail <= 1e-12 * total {
                return Ok(Some((total + tail) * shift.exp()));
            }
        }
    }
    Ok(None)
}

/// [`moment_transform_log`] for a plain rate function `β(s)`.
pub fn moment_transform<B: Fn(f64) -> f64>(
    beta: &B,
    c0: f64,
    d: usize,
    alpha: f64,
    r: f64,
) -> Result<Option<f64>> {
    moment_transform_log(&|ls: f64| beta(ls.exp()).ln(), c0, d, alpha, r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitTransform {
    /// `log log β(s)` against `log log(1+1/s)`.
    LogVsLogLog,
    /// `log log log β(s)` against `log log(1+1/s)`.
    LogLogVsLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Least-squares exponent from samples `(s, log β(s))`. Needs at least 8
/// samples spanning 3 decades of `s`.
pub fn sharpness_exponent_fit(
    samples: &[(f64, f64)],
    transform: FitTransform,
) -> Result<ExponentFit> {
    if samples.len() < 8 {
        return Err(Error::InsufficientRange(format!(
            "{} samples, need 8",
            samples.len()
        )));
    }
    if samples.iter().any(|&(s, _)| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidParameter(
            "sample points s must be positive".into(),
        ));
    }
    let lo = samples.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|p| p.0).fold(0.0, f64::max);
    if (hi / lo).log10() < 3.0 - 1e-9 {
        return Err(Error::InsufficientRange(format!(
            "s spans [{lo:e}, {hi:e}], need 3 decades"
        )));
    }
    let mut x = Vec::with_capacity(samples.len());
    let mut y = Vec::with_capacity(samples.len());
    for &(s, lb) in samples {
        let yy = match transform {
            FitTransform::LogVsLogLog => lb.ln(),
            FitTransform::LogLogVsLog => lb.ln().ln(),
        };
        if !yy.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "log beta = {lb} at s = {s} is outside the transform's domain"
            )));
        }
        x.push((1.0 / s).ln_1p().ln());
        y.push(yy);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = x
        .iter()
        .zip(&y)
        .map(|(a, b)| b - intercept - slope * a)
        .collect();
    Ok(ExponentFit {
        slope,
        intercept,
        x,
        y,
        residuals,
    })
}
