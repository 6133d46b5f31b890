//! Generators applied to Lyapunov test functions by direct quadrature, and
//! the drift-inequality checks built on them.

use std::f64::consts::{E, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::log_phi_inner;
use crate::discretize::{dirichlet_form, generator_apply, FormMatrix};
use crate::error::{Error, Result};
use crate::model::{ball_volume, radial_integral, sphere_surface, ModelSpec, PotentialSpec};
use crate::quad;

/// Shipped Lyapunov functions, radial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LyapunovFn {
    /// `e^{|x|}` outside the unit ball, `1 + (e-1)|x|²` inside.
    ExpAbs,
    /// `1 + |x|^{α₀}` outside the unit ball, `1 + (α₀/2)|x|² + 1 - α₀/2`
    /// inside.
    PowerAbs { alpha0: f64 },
}

/// `φ(y) ≤ coef·(1 + |y|^degree)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub degree: f64,
    pub coef: f64,
}

impl LyapunovFn {
    pub fn eval_radial(&self, r: f64) -> f64 {
        match *self {
            LyapunovFn::ExpAbs => {
                if r > 1.0 {
                    r.exp()
                } else {
                    1.0 + (E - 1.0) * r * r
                }
            }
            LyapunovFn::PowerAbs { alpha0 } => {
                if r > 1.0 {
                    1.0 + r.powf(alpha0)
                } else {
                    1.0 + 0.5 * alpha0 * r * r + 1.0 - 0.5 * alpha0
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_radial(norm(x))
    }

    pub fn growth(&self) -> Option<Growth> {
        match *self {
            LyapunovFn::ExpAbs => None,
            LyapunovFn::PowerAbs { alpha0 } => Some(Growth {
                degree: alpha0,
                coef: 2.0,
            }),
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// `V(x) - V(y)` from radii, without cancellation.
fn v_diff(p: &PotentialSpec, rx: f64, ry: f64) -> f64 {
    if ry >= rx {
        -p.increment(rx, ry)
    } else {
        p.increment(ry, rx)
    }
}

/// `∫_{lo ≤ |z| ≤ hi} f(z) dz` for `d ∈ {1, 2}` (tensor radius × angle rule
/// in the plane), with radial breakpoints `breaks`.
fn annulus_integral<F: Fn(&[f64]) -> f64 + Sync>(
    d: usize,
    lo: f64,
    hi: f64,
    f: &F,
    breaks: &[f64],
    tol: f64,
) -> Result<f64> {
    match d {
        1 => {
            let pts = quad::breaks_within(lo, hi, breaks);
            let right = quad::integrate_breaks(|z| f(&[z]), &pts, tol, tol)?;
            let left = quad::integrate_breaks(|z| f(&[-z]), &pts, tol, tol)?;
            Ok(right.value + left.value)
        }
        2 => {
            let pts = quad::breaks_within(lo, hi, breaks);
            let angular = |rho: f64| {
                let g = |t: f64| f(&[rho * t.cos(), rho * t.sin()]);
                let panels: Vec<f64> = (0..=8).map(|k| k as f64 * PI / 4.0).collect();
                quad::integrate_breaks(g, &panels, tol * 1e-2, tol * 1e-1)
                    .map(|r| rho * r.value)
                    .unwrap_or(f64::NAN)
            };
            Ok(quad::integrate_breaks(angular, &pts, tol, tol)?.value)
        }
        _ => Err(Error::InvalidParameter(format!(
            "annulus quadrature supports d = 1, 2 (got {d})"
        ))),
    }
}

fn check_point(m: &ModelSpec, x: &[f64]) -> Result<()> {
    if x.len() != m.d {
        return Err(Error::DimensionMismatch {
            expected: m.d,
            got: x.len(),
        });
    }
    Ok(())
}

/// Truncated generator
/// `½∫_{1/2 ≤ |z| ≤ 1} (φ(x+z) - φ(x))(1 + e^{V(x)-V(x+z)}) |z|^{-d-α} dz`.
pub fn truncated_generator_apply<F: Fn(&[f64]) -> f64 + Sync>(
    p: &PotentialSpec,
    m: &ModelSpec,
    phi: &F,
    x: &[f64],
    quad_tol: f64,
) -> Result<f64> {
    Ok(truncated_parts(p, m, phi, x, quad_tol)?.0)
}

/// `(value, ∫|integrand|)`.
fn truncated_parts<F: Fn(&[f64]) -> f64 + Sync>(
    p: &PotentialSpec,
    m: &ModelSpec,
    phi: &F,
    x: &[f64],
    quad_tol: f64,
) -> Result<(f64, f64)> {
    check_point(m, x)?;
    let q = m.d as f64 + m.alpha;
    let rx = norm(x);
    let fx = phi(x);
    let integrand = |z: &[f64]| {
        let y: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + b).collect();
        let ry = norm(&y);
        0.5 * (phi(&y) - fx) * (1.0 + v_diff(p, rx, ry).exp()) * norm(z).powf(-q)
    };
    // kinks where x+z crosses the origin
    let breaks = [rx];
    let value = annulus_integral(m.d, 0.5, 1.0, &integrand, &breaks, quad_tol)?;
    let abs = annulus_integral(
        m.d,
        0.5,
        1.0,
        &|z: &[f64]| integrand(z).abs(),
        &breaks,
        quad_tol,
    )?;
    if !value.is_finite() {
        return Err(Error::QuadratureFailure(format!(
            "truncated generator at |x| = {rx}"
        )));
    }
    Ok((value, abs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpValue {
    pub value: f64,
    /// Bound on the neglected `|z| > r_cut` contribution.
    pub remainder: f64,
}

/// Large-jump generator
/// `½∫_{|z|>1} (φ(x+z) - φ(x))(e^{V(x)-V(x+z)} + 1) |z|^{-d-α} dz`,
/// integrated over `1 < |z| ≤ r_cut` with a bound on the rest.
///
/// The bound needs `φ(y) ≤ a(1+|y|^g)` with `g < α` (the `+1` part) and
/// `∫|y|^g e^{-V(y)} dy < ∞` (the other part).
pub fn large_jump_generator_apply<F: Fn(&[f64]) -> f64 + Sync>(
    p: &PotentialSpec,
    m: &ModelSpec,
    phi: &F,
    growth: Growth,
    x: &[f64],
    quad_tol: f64,
    r_cut: f64,
) -> Result<JumpValue> {
    check_point(m, x)?;
    let cut = m.range_cut;
    let rx = norm(x);
    if !(r_cut > cut.max(rx)) || !r_cut.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "r_cut = {r_cut} must exceed max(range_cut, |x|) = {}",
            cut.max(rx)
        )));
    }
    let (g, a) = (growth.degree, growth.coef);
    if !(g < m.alpha) {
        return Err(Error::TailBoundFails(format!(
            "growth degree {g} must be below alpha = {} for the jump tail to converge",
            m.alpha
        )));
    }
    let d = m.d;
    let q = d as f64 + m.alpha;
    let fx = phi(x);
    let integrand = |z: &[f64]| {
        let y: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + b).collect();
        let ry = norm(&y);
        0.5 * (phi(&y) - fx) * (v_diff(p, rx, ry).exp() + 1.0) * norm(z).powf(-q)
    };
    let mut breaks = quad::geometric_breaks(cut, r_cut);
    breaks.push(rx);
    let value = annulus_integral(d, cut, r_cut, &integrand, &breaks, quad_tol)?;
    if !value.is_finite() {
        return Err(Error::QuadratureFailure(format!(
            "large-jump generator at |x| = {rx}"
        )));
    }

    let s = sphere_surface(d);
    let al = m.alpha;
    let plus_one = 0.5
        * s
        * ((a + fx) * r_cut.powf(-al) / al + a * 2f64.powf(g) * r_cut.powf(g - al) / (al - g));
    let inner = r_cut - rx;
    let tail = |k: f64| {
        radial_integral(p, k, 0.0, inner, quad_tol, 0.0)
            .map(|r| r.value)
            .map_err(|e| {
                Error::TailBoundFails(format!(
                    "moment of order {} of e^(-V) unavailable: {e}",
                    k + 1.0 - d as f64
                ))
            })
    };
    let mass = tail(d as f64 - 1.0)?;
    let moment = tail(d as f64 - 1.0 + g)?;
    let weighted = 0.5 * (p.radial(rx) - q * r_cut.ln()).exp() * s * ((a + fx) * mass + a * moment);
    Ok(JumpValue {
        value,
        remainder: plus_one + weighted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub c1_fit: f64,
    pub b_fit: f64,
    pub r0_fit: f64,
    pub x_samples: Vec<f64>,
    /// `L̃φ/φ` per radius.
    pub lhs: Vec<f64>,
    /// `e^{V(x)} inf_{|x|-1 ≤ |z| ≤ |x|-1/2} e^{-V(z)}` per radius.
    pub envelope: Vec<f64>,
    /// `-c1_fit · envelope`.
    pub rhs_envelope: Vec<f64>,
    pub satisfied: Vec<bool>,
    /// A drift with `c1_fit > 0` was found.
    pub drift_holds: bool,
}

const NEG_TOL: f64 = 1e-8;

/// Evaluates the finite-range drift `L̃φ/φ` along a ray and fits the
/// largest `c₁` with `L̃φ/φ ≤ -c₁·envelope` beyond the radius where `L̃φ`
/// turns and stays negative.
///
/// "Negative" means below `-1e-8` times the integral of the integrand's
/// absolute value, so exact cancellations do not count as drift.
pub fn check_drift_finite_range(
    p: &PotentialSpec,
    m: &ModelSpec,
    x_grid: &[f64],
    phi_kind: LyapunovFn,
) -> Result<DriftReport> {
    if x_grid.is_empty()
        || x_grid.iter().any(|&r| !(r >= 2.0))
        || x_grid.windows(2).any(|w| !(w[1] > w[0]))
    {
        return Err(Error::InvalidParameter(
            "drift radii must be increasing and >= 2".into(),
        ));
    }
    let phi = |y: &[f64]| phi_kind.eval(y);
    let rows: Vec<(f64, f64, f64)> = x_grid
        .par_iter()
        .map(|&r| {
            let mut x = vec![0.0; m.d];
            x[0] = r;
            let (v, abs) = truncated_parts(p, m, &phi, &x, 1e-10)?;
            let fx = phi_kind.eval_radial(r);
            Ok((v / fx, abs / fx, log_phi_inner(p, r)?.exp()))
        })
        .collect::<Result<_>>()?;
    let lhs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let envelope: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let negative: Vec<bool> = rows.iter().map(|r| r.0 < -NEG_TOL * r.1).collect();
    let n = x_grid.len();
    let k = (0..=n)
        .rev()
        .take_while(|&i| i == n || negative[i])
        .last()
        .unwrap_or(n);
    if k == n {
        return Ok(DriftReport {
            c1_fit: 0.0,
            b_fit: f64::NAN,
            r0_fit: f64::NAN,
            x_samples: x_grid.to_vec(),
            rhs_envelope: vec![0.0; n],
            satisfied: vec![false; n],
            lhs,
            envelope,
            drift_holds: false,
        });
    }
    let c1 = (k..n)
        .map(|i| -lhs[i] / envelope[i])
        .fold(f64::INFINITY, f64::min);
    let b = (0..k)
        .map(|i| (lhs[i] + c1 * envelope[i]) * phi_kind.eval_radial(x_grid[i]))
        .fold(0.0, f64::max);
    let rhs_envelope: Vec<f64> = envelope.iter().map(|e| -c1 * e).collect();
    let satisfied = (0..n)
        .map(|i| i >= k || lhs[i] <= rhs_envelope[i] * (1.0 - 1e-12))
        .collect();
    Ok(DriftReport {
        c1_fit: c1,
        b_fit: b,
        r0_fit: x_grid[k],
        x_samples: x_grid.to_vec(),
        lhs,
        envelope,
        rhs_envelope,
        satisfied,
        drift_holds: c1 > 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftConstants {
    pub c1: f64,
    pub c2: f64,
    pub ratio: f64,
    /// `2^{2d+1} d/(1-e^{-1/2}) ∫_{1/2}^1 (e^r-1) r^{-1-α} dr`
    pub closed_form: f64,
    pub threshold: f64,
}

/// `c₁ = ∫_{1/2≤|z|≤1}(e^{|z|}-1)|z|^{-d-α}dz` by annulus quadrature
/// (radial reduction for `d ≥ 3`), `c₂ = (1-e^{-1/2})·|B(0,1/4)|`, and
/// their ratio `2c₁/c₂` against the radial closed form.
pub fn drift_constants(d: usize, alpha: f64) -> Result<DriftConstants> {
    ModelSpec::new(d, alpha, crate::model::KernelKind::FiniteRange)?;
    let q = d as f64 + alpha;
    let f = |z: &[f64]| {
        let r = norm(z);
        r.exp_m1() * r.powf(-q)
    };
    let radial = quad::integrate(
        |r: f64| r.exp_m1() * r.powf(-1.0 - alpha),
        0.5,
        1.0,
        1e-15,
        1e-14,
    )?
    .value;
    let c1 = if d <= 2 {
        annulus_integral(d, 0.5, 1.0, &f, &[], 1e-13)?
    } else {
        sphere_surface(d) * radial
    };
    let k = -(-0.5f64).exp_m1();
    let c2 = k * ball_volume(d) * 0.25f64.powi(d as i32);
    let closed_form = 2f64.powi(2 * d as i32 + 1) * d as f64 / k * radial;
    Ok(DriftConstants {
        c1,
        c2,
        ratio: 2.0 * c1 / c2,
        closed_form,
        threshold: crate::criteria::poincare_threshold(d, alpha),
    })
}

/// Discrete Lyapunov–Rayleigh pair `(-Σ f_i²(Gφ)_i/φ_i μ_i, 𝔈̃(f,f))` on the
/// part of `fm` with pair distances in `[1/2, 1]`. Forms without grid
/// geometry are used as given.
pub fn lyapunov_rayleigh_bound(fm: &FormMatrix, phi: &[f64], f: &[f64]) -> Result<(f64, f64)> {
    if let Some(i) = phi.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositivePhi(i));
    }
    let band;
    let form = if fm.grid.is_some() {
        band = fm.restricted_to_band(0.5, 1.0)?;
        &band
    } else {
        fm
    };
    let g = generator_apply(form, phi)?;
    if f.len() != form.n() {
        return Err(Error::DimensionMismatch {
            expected: form.n(),
            got: f.len(),
        });
    }
    let lhs: f64 = -(0..form.n())
        .map(|i| f[i] * f[i] * g[i] / phi[i] * form.mu[i])
        .sum::<f64>();
    Ok((lhs, dirichlet_form(form, f)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::KernelKind;

    fn m1(k: KernelKind) -> ModelSpec {
        ModelSpec::new(1, 1.0, k).unwrap()
    }

    #[test]
    fn constant_phi_gives_zero() {
        let p = PotentialSpec::linear(2.0, 1).unwrap();
        let one = |_: &[f64]| 3.0;
        assert_eq!(
            truncated_generator_apply(&p, &m1(KernelKind::FiniteRange), &one, &[4.0], 1e-10)
                .unwrap(),
            0.0
        );
        let g = Growth {
            degree: 0.0,
            coef: 3.0,
        };
        let v = large_jump_generator_apply(
            &p,
            &m1(KernelKind::LargeJump),
            &one,
            g,
            &[4.0],
            1e-10,
            100.0,
        )
        .unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn odd_phi_at_origin_vanishes() {
        let p = PotentialSpec::constant(0.0, 1).unwrap();
        let lin = |y: &[f64]| y[0];
        let v = truncated_generator_apply(&p, &m1(KernelKind::FiniteRange), &lin, &[0.0], 1e-12)
            .unwrap();
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn exp_phi_matches_trapezoid_oracle() {
        let p = PotentialSpec::constant(0.0, 1).unwrap();
        let phi = |y: &[f64]| y[0].abs().exp();
        let v = truncated_generator_apply(&p, &m1(KernelKind::FiniteRange), &phi, &[5.0], 1e-12)
            .unwrap();
        let g = |z: f64| ((5.0 + z).abs().exp() - 5f64.exp()) / (z * z);
        let n = 10_000;
        let trap = |a: f64, b: f64| {
            let h = (b - a) / n as f64;
            (0..=n)
                .map(|i| {
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    w * g(a + i as f64 * h)
                })
                .sum::<f64>()
                * h
        };
        let oracle = trap(-1.0, -0.5) + trap(0.5, 1.0);
        assert!((v - oracle).abs() < 1e-6 * oracle.abs(), "{v} vs {oracle}");
    }

    #[test]
    fn two_dimensional_annulus_area() {
        let one = |_: &[f64]| 1.0;
        let v = annulus_integral(2, 0.5, 1.0, &one, &[], 1e-12).unwrap();
        assert!((v - PI * 0.75).abs() < 1e-11);
    }

    #[test]
    fn growth_condition_is_checked() {
        let p = PotentialSpec::poly_tail(1.5, 1).unwrap();
        let m = ModelSpec::new(1, 0.5, KernelKind::LargeJump).unwrap();
        let phi = LyapunovFn::PowerAbs { alpha0: 0.7 };
        let e = large_jump_generator_apply(
            &p,
            &m,
            &|y: &[f64]| phi.eval(y),
            phi.growth().unwrap(),
            &[5.0],
            1e-8,
            1e3,
        )
        .unwrap_err();
        assert_eq!(e.name(), "TailBoundFails");
        // moment of order g must exist: PolyTail(ε=0.3) with g = 0.4 < α = 1
        let p = PotentialSpec::poly_tail(0.3, 1).unwrap();
        let m = m1(KernelKind::LargeJump);
        let phi = LyapunovFn::PowerAbs { alpha0: 0.4 };
        let e = large_jump_generator_apply(
            &p,
            &m,
            &|y: &[f64]| phi.eval(y),
            phi.growth().unwrap(),
            &[5.0],
            1e-8,
            1e3,
        )
        .unwrap_err();
        assert_eq!(e.name(), "TailBoundFails");
    }

    #[test]
    fn remainder_shrinks_with_cutoff() {
        let p = PotentialSpec::poly_tail(1.5, 1).unwrap();
        let m = m1(KernelKind::LargeJump);
        let phi = LyapunovFn::PowerAbs { alpha0: 0.5 };
        let f = |y: &[f64]| phi.eval(y);
        let a = large_jump_generator_apply(&p, &m, &f, phi.growth().unwrap(), &[10.0], 1e-9, 1e2)
            .unwrap();
        let b = large_jump_generator_apply(&p, &m, &f, phi.growth().unwrap(), &[10.0], 1e-9, 1e4)
            .unwrap();
        assert!(b.remainder < a.remainder);
        assert!((a.value - b.value).abs() <= a.remainder + 1e-8 * a.value.abs());
    }

    #[test]
    fn drift_constants_d1_values() {
        let l = drift_constants(1, 1.0).unwrap();
        assert!((l.c2 - 0.19673).abs() < 1e-5);
        assert!((l.ratio - l.closed_form).abs() < 1e-8 * l.ratio);
        assert!((l.ratio - 20.75).abs() < 0.1, "{}", l.ratio);
        assert!(l.ratio < l.threshold);
        let l2 = drift_constants(2, 1.0).unwrap();
        assert!((l2.ratio - l2.closed_form).abs() < 1e-8 * l2.ratio);
    }

    #[test]
    fn lyapunov_fn_continuity() {
        for f in [LyapunovFn::ExpAbs, LyapunovFn::PowerAbs { alpha0: 0.6 }] {
            let a = f.eval_radial(1.0);
            let b = f.eval_radial(1.0 + 1e-12);
            assert!((a - b).abs() < 1e-10);
            assert!(f.eval_radial(0.0) >= 1.0);
        }
    }

    #[test]
    fn drift_examples() {
        let m = m1(KernelKind::FiniteRange);
        let grid: Vec<f64> = (3..=30).map(|r| r as f64).collect();
        let ok = check_drift_finite_range(
            &PotentialSpec::linear(10.0, 1).unwrap(),
            &m,
            &grid,
            LyapunovFn::ExpAbs,
        )
        .unwrap();
        assert!(ok.drift_holds && ok.satisfied.iter().all(|&s| s));
        let bad = check_drift_finite_range(
            &PotentialSpec::linear(1.0, 1).unwrap(),
            &m,
            &grid,
            LyapunovFn::ExpAbs,
        )
        .unwrap();
        assert!(!bad.drift_holds);
        assert!(check_drift_finite_range(
            &PotentialSpec::linear(1.0, 1).unwrap(),
            &m,
            &[1.0],
            LyapunovFn::ExpAbs
        )
        .is_err());
    }

    #[test]
    fn nonpositive_phi_rejected() {
        let fm =
            FormMatrix::from_weights(m1(KernelKind::Full), &[1.0, 1.0], &[(0, 1, 1.0)]).unwrap();
        assert_eq!(
            lyapunov_rayleigh_bound(&fm, &[1.0, 0.0], &[1.0, 1.0]).unwrap_err(),
            Error::NonPositivePhi(1)
        );
        assert_eq!(
            lyapunov_rayleigh_bound(&fm, &[1.0, 1.0], &[0.0, 0.0]).unwrap(),
            (0.0, 0.0)
        );
    }
}
