//! Local super-Poincaré rates, local Poincaré constants, and the
//! compact-support bound behind the failure of super-Poincaré inequalities
//! for the large-jump form.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{log_beta_formula, log_envelope, Extremum};
use crate::discretize::{assemble_form, build_grid, dirichlet_form, mu_norm_sq, FormMatrix};
use crate::error::{Error, Result};
use crate::model::{
    normalizing_constant, sphere_surface, KernelKind, Measure, ModelSpec, PotentialSpec,
};
use crate::quad;

/// Largest node count for the dense local eigenproblem.
pub const LOCAL_DENSE_CAP: usize = 3000;

/// `log` of `k(r) = inf_{|x| ≤ r+1} e^{-V}` and `K(r) = sup_{|x| ≤ r} e^{-V}`.
pub fn local_envelopes(p: &PotentialSpec, r: f64) -> Result<(f64, f64)> {
    Ok((
        log_envelope(p, 0.0, r + 1.0, Extremum::Inf)?,
        log_envelope(p, 0.0, r, Extremum::Sup)?,
    ))
}

/// `log β_r(s)`.
pub fn log_local_super_pc_rate(
    p: &PotentialSpec,
    m: &ModelSpec,
    r: f64,
    s: f64,
    c2: f64,
) -> Result<f64> {
    if !(r > 1.0) || !(s > 0.0) || !(c2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need r > 1, s > 0, C2 > 0 (got {r}, {s}, {c2})"
        )));
    }
    let (lk, lbk) = local_envelopes(p, r)?;
    Ok(log_beta_formula(m.d, m.alpha, c2, r, lbk, lk, s))
}

/// `β_r(s) = C₂ r^{d+d²/α} K(r)^{1+d/α} k(r)^{-2-d/α} (1+s^{-d/α})`.
pub fn local_super_pc_rate(
    p: &PotentialSpec,
    m: &ModelSpec,
    r: f64,
    s: f64,
    c2: f64,
) -> Result<f64> {
    Ok(log_local_super_pc_rate(p, m, r, s, c2)?.exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalPcRow {
    pub r: f64,
    pub nodes: usize,
    pub gap: f64,
    pub constant: f64,
    /// `log` of `K(r) r^{3d}/k(r)` (finite range) or `K(r) r^{2d+α}/k(r)`
    /// (large jump).
    pub log_envelope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalPcTable {
    pub rows: Vec<LocalPcRow>,
    /// Least-squares slope of `log constant` against `log envelope`; `None`
    /// with fewer than two distinct envelope values.
    pub slope: Option<f64>,
}

/// Smallest nonzero eigenvalue of `A` against node masses `mu`, where `A`
/// annihilates constants.
fn dense_mass_gap(a: &DMatrix<f64>, mu: &[f64]) -> Result<f64> {
    let n = mu.len();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "local problem needs at least two nodes".into(),
        ));
    }
    let s: Vec<f64> = mu.iter().map(|v| v.sqrt()).collect();
    let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    let c: Vec<f64> = s.iter().map(|v| v / norm).collect();
    let mut m = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (s[i] * s[j]));
    // project out c on both sides
    let mc: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)] * c[j]).sum())
        .collect();
    let cmc: f64 = (0..n).map(|i| c[i] * mc[i]).sum();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] += -c[i] * mc[j] - mc[i] * c[j] + c[i] * c[j] * cmc;
        }
    }
    let eig = SymmetricEigen::new(m);
    let mut best = f64::INFINITY;
    for k in 0..n {
        let v = eig.eigenvectors.column(k);
        let overlap: f64 = (0..n).map(|i| v[i] * c[i]).sum::<f64>().abs();
        if overlap <= 0.5 {
            best = best.min(eig.eigenvalues[k]);
        }
    }
    Ok(best)
}

/// Local Poincaré gap: the form is censored to the ball `|x| ≤ r+1`, the
/// variance is taken over `|x| ≤ r` against the same (restricted) masses,
/// and the shell values are eliminated by energy minimization.
fn local_gap(fm: &FormMatrix, r: f64) -> Result<(usize, f64)> {
    let g = fm.grid.as_ref().expect("grid form");
    let eps = 1e-12 * (1.0 + r);
    let ball: Vec<usize> = (0..g.n)
        .filter(|&i| g.node_radius(i) <= r + 1.0 + eps)
        .collect();
    if ball.len() > LOCAL_DENSE_CAP {
        return Err(Error::TooLargeForDense {
            n: ball.len(),
            cap: LOCAL_DENSE_CAP,
        });
    }
    let mut index = vec![usize::MAX; g.n];
    for (k, &i) in ball.iter().enumerate() {
        index[i] = k;
    }
    let nb = ball.len();
    let mut a = DMatrix::<f64>::zeros(nb, nb);
    for (k, &i) in ball.iter().enumerate() {
        fm.for_each_neighbor(i, |j, kappa| {
            let l = index[j];
            if l != usize::MAX {
                let w = fm.sym_weight(i, j, kappa);
                a[(k, l)] -= w;
                a[(k, k)] += w;
            }
        });
    }
    let (inner, outer): (Vec<usize>, Vec<usize>) =
        (0..nb).partition(|&k| g.node_radius(ball[k]) <= r + eps);
    let pick = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
    };
    let mut schur = pick(&inner, &inner);
    if !outer.is_empty() {
        let a_oo = pick(&outer, &outer);
        let a_oi = pick(&outer, &inner);
        let chol = a_oo.cholesky().ok_or_else(|| {
            Error::InvalidParameter(format!(
                "shell nodes at r = {r} are not coupled to the inner ball"
            ))
        })?;
        schur -= a_oi.transpose() * chol.solve(&a_oi);
    }
    let mu: Vec<f64> = inner.iter().map(|&k| fm.mu[ball[k]]).collect();
    Ok((nb, dense_mass_gap(&schur, &mu)?))
}

fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 1e-24) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

/// Empirical local Poincaré constants on `B(0,r)` for each radius and
/// their growth against the local envelope.
pub fn local_pc_constant_empirical(
    p: &PotentialSpec,
    m: &ModelSpec,
    r_list: &[f64],
    h: f64,
) -> Result<LocalPcTable> {
    if r_list.is_empty() || r_list.windows(2).any(|w| !(w[1] > w[0])) || !(r_list[0] > 0.0) {
        return Err(Error::InvalidParameter(
            "r_list must be positive and increasing".into(),
        ));
    }
    if m.kernel == KernelKind::LargeJump && r_list[0] <= 3.0 {
        return Err(Error::InvalidParameter(format!(
            "large-jump local constants need r > 3 (got {})",
            r_list[0]
        )));
    }
    let d = m.d as f64;
    let power = if m.kernel == KernelKind::LargeJump {
        2.0 * d + m.alpha
    } else {
        3.0 * d
    };
    let rows: Vec<LocalPcRow> = r_list
        .par_iter()
        .map(|&r| {
            let g = build_grid(m.d, r + 1.0, h)?;
            let fm = assemble_form(&g, m, p)?;
            let (nodes, gap) = local_gap(&fm, r)?;
            let (lk, lbk) = local_envelopes(p, r)?;
            Ok(LocalPcRow {
                r,
                nodes,
                gap,
                constant: 1.0 / gap,
                log_envelope: lbk + power * r.ln() - lk,
            })
        })
        .collect::<Result<_>>()?;
    let x: Vec<f64> = rows.iter().map(|r| r.log_envelope).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.constant.ln()).collect();
    let slope = if rows.len() >= 2 {
        ls_slope(&x, &y)
    } else {
        None
    };
    Ok(LocalPcTable { rows, slope })
}

/// `C_{V,D} = 2[∫_{|z|>1}|z|^{-d-α}dz + C_V^{-1} sup_{|y| ≤ R} e^{V(y)}]`
/// for `D = B(0,R)`; large-jump kernel only.
pub fn compact_support_bound(p: &PotentialSpec, m: &ModelSpec, domain_radius: f64) -> Result<f64> {
    compact_support_bound_with(&normalizing_constant(p, 1e-10)?, m, domain_radius)
}

pub fn compact_support_bound_with(
    meas: &Measure,
    m: &ModelSpec,
    domain_radius: f64,
) -> Result<f64> {
    if m.kernel != KernelKind::LargeJump {
        return Err(Error::UnsupportedKernel(format!(
            "the compact-support bound needs a kernel vanishing near the diagonal, got {:?}",
            m.kernel
        )));
    }
    if !(domain_radius > 0.0) || !domain_radius.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "domain radius {domain_radius} must be positive"
        )));
    }
    let p = &meas.potential;
    let tail = sphere_surface(m.d) * m.range_cut.powf(-m.alpha) / m.alpha;
    let log_sup_ev = -log_envelope(p, 0.0, domain_radius, Extremum::Inf)?;
    Ok(2.0 * (tail + (log_sup_ev - meas.c_v.ln()).exp()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub domain_radius: f64,
    pub c_vd: f64,
    pub s_star: f64,
    pub beta_at_s_star: f64,
    pub mass_target: f64,
    pub ball_center: Vec<f64>,
    pub ball_radius: f64,
    pub ball_mass: f64,
    pub f0: String,
    /// `μ(f₀²)`.
    pub lhs_mu_f2: f64,
    /// `μ(|f₀|)`.
    pub mu_abs_f0: f64,
    /// `μ(f₀²)·μ(B)`, the Cauchy–Schwarz bound on `μ(|f₀|)²`.
    pub cauchy_schwarz_bound: f64,
    /// `2β(s*)μ(|f₀|)²`, what the inequality would force `μ(f₀²)` below.
    pub rhs_bound: f64,
    /// `rhs_bound / lhs_mu_f2`, at most 1/2.
    pub contradiction_factor: f64,
}

pub const MIN_BALL_RADIUS: f64 = 1e-150;

/// `∫_{|x|≤r₀} g(|x|/r₀) μ(dx)` for a radial profile `g` on `[0, 1]`.
fn ball_integral<G: Fn(f64) -> f64>(meas: &Measure, r0: f64, g: G) -> Result<f64> {
    let p = &meas.potential;
    let k = p.dim as i32 - 1;
    let f = |t: f64| g(t) * (-p.radial(r0 * t)).exp() * t.powi(k);
    let v = quad::integrate(f, 0.0, 1.0, 0.0, 1e-13)?.value;
    Ok(meas.c_v * sphere_surface(p.dim) * r0.powi(k + 1) * v)
}

/// Builds the witness that no rate `β` makes the super-Poincaré inequality
/// hold for the large-jump form: a ball of mass at most `1/(4β(s*))`
/// centred at the origin of `D = B(0, domain_radius)` and the bump
/// `f₀ = max(0, 1 - |x|²/r₀²)` on it.
pub fn super_pc_violation_certificate<B: Fn(f64) -> f64>(
    p: &PotentialSpec,
    m: &ModelSpec,
    beta: &B,
    domain_radius: f64,
) -> Result<Certificate> {
    let meas = normalizing_constant(p, 1e-12)?;
    let c_vd = compact_support_bound_with(&meas, m, domain_radius)?;
    let s_star = 1.0 / (2.0 * c_vd);
    let b = beta(s_star);
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "beta(s*) = {b} must be positive and finite"
        )));
    }
    let target = 1.0 / (4.0 * b);
    let mut r0 = domain_radius;
    let mut mass = meas.ball_mass(r0, 1e-13)?;
    while mass > target {
        r0 *= 0.5;
        if r0 < MIN_BALL_RADIUS {
            return Err(Error::BallSearchFailed {
                radius: r0,
                mass,
                target,
            });
        }
        mass = ball_integral(&meas, r0, |_| 1.0)?;
    }
    let mu_f2 = ball_integral(&meas, r0, |t| (1.0 - t * t).powi(2))?;
    let mu_abs = ball_integral(&meas, r0, |t| 1.0 - t * t)?;
    let rhs = 2.0 * b * mu_abs * mu_abs;
    Ok(Certificate {
        domain_radius,
        c_vd,
        s_star,
        beta_at_s_star: b,
        mass_target: target,
        ball_center: vec![0.0; m.d],
        ball_radius: r0,
        ball_mass: mass,
        f0: "max(0, 1 - |x - x0|^2 / r0^2)".into(),
        lhs_mu_f2: mu_f2,
        mu_abs_f0: mu_abs,
        cauchy_schwarz_bound: mu_f2 * mass,
        rhs_bound: rhs,
        contradiction_factor: rhs / mu_f2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub s: f64,
    /// `max_f (μ(f²) - s𝔈(f,f))/μ(|f|)²`.
    pub lower_bound: f64,
    pub best_index: usize,
}

/// Gaussian bumps `exp(-|x-c|²/(2w²))` on the grid of `fm`, one per
/// (center, width) pair.
pub fn gaussian_bumps(
    fm: &FormMatrix,
    centers: &[Vec<f64>],
    widths: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let g = fm
        .grid
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("bump family needs grid geometry".into()))?;
    let mut out = Vec::new();
    for c in centers {
        if c.len() != g.d {
            return Err(Error::DimensionMismatch {
                expected: g.d,
                got: c.len(),
            });
        }
        for &w in widths {
            if !(w > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "bump width {w} must be positive"
                )));
            }
            out.push(
                (0..g.n)
                    .map(|i| {
                        let x = g.node(i);
                        let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum();
                        (-r2 / (2.0 * w * w)).exp()
                    })
                    .collect(),
            );
        }
    }
    Ok(out)
}

/// Lower bounds on any admissible super-Poincaré rate at each `s`.
pub fn empirical_super_pc_probe(
    fm: &FormMatrix,
    s_list: &[f64],
    family: &[Vec<f64>],
) -> Result<Vec<ProbeRow>> {
    if family.is_empty() {
        return Err(Error::InvalidParameter("empty probe family".into()));
    }
    let stats: Vec<(f64, f64, f64)> = family
        .par_iter()
        .map(|f| {
            let e = dirichlet_form(fm, f)?;
            let l1: f64 = f.iter().zip(&fm.mu).map(|(v, m)| v.abs() * m).sum();
            if !(l1 > 0.0) {
                return Err(Error::InvalidParameter("probe function vanishes".into()));
            }
            Ok((mu_norm_sq(fm, f), e, l1 * l1))
        })
        .collect::<Result<_>>()?;
    s_list
        .iter()
        .map(|&s| {
            if !(s > 0.0) {
                return Err(Error::InvalidParameter(format!("s = {s} must be positive")));
            }
            let (best_index, lower_bound) = stats
                .iter()
                .map(|(f2, e, l1sq)| (f2 - s * e) / l1sq)
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            Ok(ProbeRow {
                s,
                lower_bound,
                best_index,
            })
        })
        .collect()
}
