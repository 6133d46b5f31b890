use serde::{Deserialize, Serialize};

use super::table::{build_envelope_table, inner_min, EnvelopeTable};
use super::{log_envelope, Extremum};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, PotentialSpec};
use crate::quad;

fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// `log[C₂(1+s^{-d/α}) r^{d+d²/α} K^{1+d/α} k^{-2-d/α}]` from the logs of
/// the envelopes at `r`.
pub fn log_beta_formula(
    d: usize,
    alpha: f64,
    c2: f64,
    r: f64,
    log_big_k: f64,
    log_k: f64,
    s: f64,
) -> f64 {
    let q = d as f64 / alpha;
    let d = d as f64;
    c2.ln() + softplus(-q * s.ln()) + (d + d * q) * r.ln() + (1.0 + q) * log_big_k
        - (2.0 + q) * log_k
}

/// Super-Poincaré rate built from an envelope table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFunction {
    pub c2: f64,
    pub c3: f64,
    pub model: ModelSpec,
    pub potential: PotentialSpec,
    pub envelopes: EnvelopeTable,
}

impl RateFunction {
    pub fn new(p: &PotentialSpec, m: &ModelSpec, c2: f64, c3: f64, radii: &[f64]) -> Result<Self> {
        if !(c2 > 0.0 && c3 > 0.0) {
            return Err(Error::InvalidParameter(
                "rate constants must be positive".into(),
            ));
        }
        Ok(RateFunction {
            c2,
            c3,
            model: *m,
            potential: p.clone(),
            envelopes: build_envelope_table(p, None, radii, 1e-8)?,
        })
    }

    /// `log Φ(r)` for `r` inside the table window.
    pub fn log_phi_at(&self, r: f64) -> Result<f64> {
        let t = &self.envelopes;
        let n = t.len();
        if r >= t.radii[n - 1] {
            return Ok(t.log_phi[n - 1]);
        }
        let i = t.radii.partition_point(|&x| x <= r).max(1);
        Ok(inner_min(&self.potential, r.max(t.radii[0]), t.radii[i])?.min(t.log_phi[i]))
    }

    /// Generalized inverse `Φ^{-1}(y) = inf{r : Φ(r) ≥ y}` for `log y`.
    pub fn phi_inverse_log(&self, log_target: f64) -> Result<f64> {
        let t = &self.envelopes;
        let n = t.len();
        if t.log_phi[n - 1] < log_target {
            return Err(Error::PhiBounded {
                target: log_target.exp(),
                max: t.log_phi[n - 1].exp(),
            });
        }
        if t.log_phi[0] >= log_target {
            return Ok(t.radii[0]);
        }
        let i = t.log_phi.partition_point(|&v| v < log_target);
        let (mut lo, mut hi) = (t.radii[i - 1], t.radii[i]);
        for _ in 0..200 {
            if hi - lo <= 1e-14 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.log_phi_at(mid)? >= log_target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// `log β(s)`.
    pub fn log_rate(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::InvalidParameter(format!("s = {s} must be > 0")));
        }
        let r = self.phi_inverse_log(self.c3.ln() - s.ln())?;
        let p = &self.potential;
        let log_big_k = log_envelope(p, 0.0, r, Extremum::Sup)?;
        let log_k = log_envelope(p, 0.0, r + 1.0, Extremum::Inf)?;
        Ok(log_beta_formula(
            self.model.d,
            self.model.alpha,
            self.c2,
            r,
            log_big_k,
            log_k,
            s,
        ))
    }

    /// `β(s)`; overflows to infinity for small `s` on fast-growing
    /// potentials, use [`RateFunction::log_rate`] there.
    pub fn super_pc_rate(&self, s: f64) -> Result<f64> {
        Ok(self.log_rate(s)?.exp())
    }
}

const LOG_S_RANGE: f64 = 690.0;

/// `β^{-1}(r) = inf{s > 0 : β(s) ≤ r}` for nonincreasing `β`, by bisection
/// in `log s`. Returns 0 when `β ≤ r` everywhere and `∞` when never.
pub fn inverse_rate<B: Fn(f64) -> f64>(beta: &B, r: f64) -> f64 {
    if beta((-LOG_S_RANGE).exp()) <= r {
        return 0.0;
    }
    if beta(LOG_S_RANGE.exp()) > r {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (-LOG_S_RANGE, LOG_S_RANGE);
    for _ in 0..200 {
        if hi - lo <= 1e-13 * (1.0 + hi.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if beta(mid.exp()) <= r {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi.exp()
}

const MAX_LOG_R: f64 = 700.0;

/// `Ψ(t) = ∫_t^∞ β^{-1}(r)/r dr`, integrated in `u = log r`.
///
/// Panels double in `u` until the tail estimate `g(U)/|(log g)'(U)|` of
/// `g(u) = β^{-1}(e^u)` falls below `tol` of the running value; failing that
/// before `r = e^{700}` is reported as divergence.
pub fn psi_from_beta<B: Fn(f64) -> f64>(beta: &B, t: f64, tol: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be > 0")));
    }
    let g = |u: f64| inverse_rate(beta, u.exp());
    let mut u = t.ln();
    if g(u).is_infinite() {
        return Err(Error::PsiDiverges(format!(
            "beta^(-1) is infinite at r = {t:e}"
        )));
    }
    let mut total = 0.0;
    let mut width: f64 = 1.0;
    loop {
        let gu = g(u);
        if gu == 0.0 {
            return Ok(total);
        }
        let h = 1e-3 * (1.0 + u.abs());
        let gh = g(u + h);
        if gh > 0.0 && gh < gu {
            let slope = (gh.ln() - gu.ln()) / h;
            let tail = gu / -slope;
            if tail <= tol * total {
                return Ok(total + tail);
            }
        }
        if u >= MAX_LOG_R {
            return Err(Error::PsiDiverges(format!(
                "tail of the psi integral not controlled by r = e^{u:.0}"
            )));
        }
        let next = (u + width).min(MAX_LOG_R);
        let panel = quad::integrate(g, u, next, 0.0, tol)?;
        total += panel.value;
        u = next;
        width *= 2.0;
    }
}

/// `2Ψ^{-1}(t)` with `Ψ^{-1}(t) = inf{r : Ψ(r) ≤ t}`.
pub fn semigroup_bound<B: Fn(f64) -> f64>(beta: &B, t: f64, tol: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be > 0")));
    }
    // bracket in log r: Ψ decreases from +∞ near inf β to 0
    let floor = beta(LOG_S_RANGE.exp()).max(f64::MIN_POSITIVE);
    let psi = |lr: f64| psi_from_beta(beta, lr.exp(), tol);
    let mut lo = floor.ln();
    let mut hi = lo.max(0.0) + 1.0;
    while psi(hi)? > t {
        lo = hi;
        hi = 2.0 * hi + 1.0;
        if hi > MAX_LOG_R {
            return Err(Error::PsiDiverges(format!("psi stays above t = {t:e}")));
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-12 * (1.0 + hi.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let ok = match psi(mid) {
            Ok(v) => v <= t,
            Err(Error::PsiDiverges(_)) => false,
            Err(e) => return Err(e),
        };
        if ok {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(2.0 * hi.exp())
}
