use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{log_drift_ratio, log_envelope, log_phi_inner, Extremum};
use crate::error::{Error, Result};
use crate::model::{Measure, ModelSpec, PotentialSpec};

/// Envelopes sampled on a radial grid. Values that overflow are stored as
/// natural logarithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeTable {
    pub radii: Vec<f64>,
    /// `log k(r)`, `k(r) = inf_{|x| ≤ r+1} e^{-V}`
    pub log_k: Vec<f64>,
    /// `log K(r)`, `K(r) = sup_{|x| ≤ r} e^{-V}`
    pub log_big_k: Vec<f64>,
    pub log_phi: Vec<f64>,
    pub log_ratio: Vec<f64>,
    /// `μ_V(B(0,r)^c)`, present when a measure was supplied.
    pub tail_mass: Option<Vec<f64>>,
}

impl EnvelopeTable {
    pub fn k(&self, i: usize) -> f64 {
        self.log_k[i].exp()
    }

    #[allow(non_snake_case)]
    pub fn K(&self, i: usize) -> f64 {
        self.log_big_k[i].exp()
    }

    pub fn phi(&self, i: usize) -> f64 {
        self.log_phi[i].exp()
    }

    pub fn ratio(&self, i: usize) -> f64 {
        self.log_ratio[i].exp()
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }
}

pub fn log_spaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| match i {
            0 => a,
            _ if i == n - 1 => b,
            _ => (la + (lb - la) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

/// Minimum of the `Φ` inner expression over `[lo, hi]`.
pub(crate) fn inner_min(p: &PotentialSpec, lo: f64, hi: f64) -> Result<f64> {
    let a = log_phi_inner(p, lo)?;
    let b = log_phi_inner(p, hi)?;
    if hi <= lo {
        return Ok(a);
    }
    let f = |x: f64| -log_phi_inner(p, x).unwrap_or(f64::NEG_INFINITY);
    let x = super::golden_max(&f, lo, hi);
    Ok(a.min(b).min(-f(x)))
}

/// Tabulates `k`, `K`, `Φ`, `R` and (optionally) the tail mass on `radii`.
///
/// `Φ` at the last radius is the inner expression there, so the table only
/// certifies `Φ` where the inner expression has settled.
pub fn build_envelope_table(
    p: &PotentialSpec,
    meas: Option<&Measure>,
    radii: &[f64],
    tol: f64,
) -> Result<EnvelopeTable> {
    if radii.is_empty() || radii.windows(2).any(|w| !(w[1] > w[0])) || !(radii[0] >= 1.0) {
        return Err(Error::InvalidParameter(
            "table radii must be increasing and start at >= 1".into(),
        ));
    }
    let rows: Vec<(f64, f64, f64, f64)> = radii
        .par_iter()
        .map(|&r| {
            Ok((
                log_envelope(p, 0.0, r + 1.0, Extremum::Inf)?,
                log_envelope(p, 0.0, r, Extremum::Sup)?,
                log_drift_ratio(p, r)?,
                log_phi_inner(p, r)?,
            ))
        })
        .collect::<Result<_>>()?;
    let seg_min: Vec<f64> = radii
        .par_windows(2)
        .map(|w| inner_min(p, w[0], w[1]))
        .collect::<Result<_>>()?;
    let n = radii.len();
    let mut log_phi = vec![0.0; n];
    log_phi[n - 1] = rows[n - 1].3;
    for i in (0..n - 1).rev() {
        log_phi[i] = seg_min[i].min(log_phi[i + 1]);
    }
    let tail_mass = match meas {
        Some(m) => {
            let mut t: Vec<f64> = radii
                .par_iter()
                .map(|&r| m.tail_mass(r, tol))
                .collect::<Result<_>>()?;
            // enforce the monotone envelope against quadrature noise
            for i in 1..n {
                t[i] = t[i].min(t[i - 1]);
            }
            Some(t)
        }
        None => None,
    };
    Ok(EnvelopeTable {
        radii: radii.to_vec(),
        log_k: rows.iter().map(|r| r.0).collect(),
        log_big_k: rows.iter().map(|r| r.1).collect(),
        log_ratio: rows.iter().map(|r| r.2).collect(),
        log_phi,
        tail_mass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeakVariant {
    /// `r^{3d} K(r)/k(r)` over `r > 1`
    FiniteRange,
    /// `r^{2d+α} K(r)/k(r)` over `r > 3`
    LargeJump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakAlpha {
    pub log_value: f64,
    pub value: f64,
    /// Radius attaining the infimum.
    pub radius: f64,
    /// Smallest radius meeting the mass constraint.
    pub threshold_radius: f64,
}

fn weak_log_expr(p: &PotentialSpec, m: &ModelSpec, variant: WeakVariant, r: f64) -> Result<f64> {
    let d = m.d as f64;
    let power = match variant {
        WeakVariant::FiniteRange => 3.0 * d,
        WeakVariant::LargeJump => 2.0 * d + m.alpha,
    };
    Ok(power * r.ln() + log_envelope(p, 0.0, r, Extremum::Sup)?
        - log_envelope(p, 0.0, r + 1.0, Extremum::Inf)?)
}

/// Weak-Poincaré rate: infimum of the variant's expression over admissible
/// radii `r` with `μ_V(B(0,r)^c) ≤ s/(1+s)`.
///
/// The smallest admissible radius is located by bisection on the tail mass,
/// then the expression is minimized over it and the table radii beyond.
pub fn weak_pc_alpha(
    table: &EnvelopeTable,
    meas: &Measure,
    m: &ModelSpec,
    variant: WeakVariant,
    s: f64,
    tol: f64,
) -> Result<WeakAlpha> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("s = {s} must be > 0")));
    }
    let tails = table
        .tail_mass
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("table has no tail mass column".into()))?;
    let p = &meas.potential;
    let target = s / (1.0 + s);
    let r_min = match variant {
        WeakVariant::FiniteRange => 1.0,
        WeakVariant::LargeJump => 3.0,
    };
    let threshold = if meas.tail_mass(r_min, tol)? <= target {
        r_min
    } else {
        let i = (0..table.len())
            .find(|&i| table.radii[i] > r_min && tails[i] <= target)
            .ok_or(Error::TailTooHeavy { target })?;
        let mut lo = if i > 0 {
            table.radii[i - 1].max(r_min)
        } else {
            r_min
        };
        let mut hi = table.radii[i];
        for _ in 0..200 {
            if hi - lo <= 1e-13 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if meas.tail_mass(mid, tol)? <= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let mut best = (weak_log_expr(p, m, variant, threshold)?, threshold);
    for &r in table.radii.iter().filter(|&&r| r > threshold) {
        let v = weak_log_expr(p, m, variant, r)?;
        if v < best.0 {
            best = (v, r);
        }
    }
    Ok(WeakAlpha {
        log_value: best.0,
        value: best.0.exp(),
        radius: best.1,
        threshold_radius: threshold,
    })
}
