//! Potentials, jump kernels and the reference probability measure
//! `μ_V(dx) = C_V e^{-V(x)} dx`.
//!
//! Every shipped potential is radial, so d-dimensional integrals reduce to
//! one-dimensional radial integrals weighted by the unit-sphere surface.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quad;

/// Which part of the stable-like jump kernel `r^{-d-α}` a form uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    /// Jumps of size at most `range_cut`.
    FiniteRange,
    /// Jumps of size strictly larger than `range_cut`.
    LargeJump,
    /// All jump sizes.
    Full,
    /// All jump sizes, damped by `e^{-δ r}`.
    Tempered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub d: usize,
    pub alpha: f64,
    pub kernel: KernelKind,
    /// Tempering rate; only read for [`KernelKind::Tempered`].
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "one")]
    pub range_cut: f64,
}

fn one() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn new(d: usize, alpha: f64, kernel: KernelKind) -> Result<Self> {
        let m = ModelSpec {
            d,
            alpha,
            kernel,
            delta: 0.0,
            range_cut: 1.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        self.delta = delta;
        self.validate()?;
        Ok(self)
    }

    pub fn with_range_cut(mut self, range_cut: f64) -> Result<Self> {
        self.range_cut = range_cut;
        self.validate()?;
        Ok(self)
    }

    pub fn with_kernel(mut self, kernel: KernelKind) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha = {} not in (0, 2)",
                self.alpha
            )));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "delta = {} must be >= 0",
                self.delta
            )));
        }
        if !(self.range_cut > 0.0) || !self.range_cut.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "range_cut = {} must be > 0",
                self.range_cut
            )));
        }
        Ok(())
    }
}

/// Radial jump density of the model at jump size `r > 0`.
pub fn kernel_density(m: &ModelSpec, r: f64) -> f64 {
    let base = r.powf(-(m.d as f64) - m.alpha);
    match m.kernel {
        KernelKind::FiniteRange => {
            if r <= m.range_cut {
                base
            } else {
                0.0
            }
        }
        KernelKind::LargeJump => {
            if r > m.range_cut {
                base
            } else {
                0.0
            }
        }
        KernelKind::Full => base,
        KernelKind::Tempered => base * (-m.delta * r).exp(),
    }
}

/// Surface measure of the unit sphere in ℝ^d, `dπ^{d/2}/Γ(d/2+1)`.
pub fn sphere_surface(d: usize) -> f64 {
    let d = d as f64;
    d * std::f64::consts::PI.powf(d / 2.0) / gamma(d / 2.0 + 1.0)
}

/// Volume of the unit ball in ℝ^d.
pub fn ball_volume(d: usize) -> f64 {
    sphere_surface(d) / d as f64
}

/// Tabulated radial potential, linearly interpolated and held flat outside
/// the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialTable {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Caller-supplied control of the mass beyond the table.
    #[serde(default)]
    pub tail: Option<TailBound>,
}

/// `mass_bound ≥ ∫_{|x| > r_tail} e^{-V(x)} dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailBound {
    pub r_tail: f64,
    pub mass_bound: f64,
}

impl RadialTable {
    fn eval(&self, r: f64) -> f64 {
        let rs = &self.radii;
        if r <= rs[0] {
            return self.values[0];
        }
        let last = rs.len() - 1;
        if r >= rs[last] {
            return self.values[last];
        }
        let i = rs.partition_point(|&x| x <= r) - 1;
        let t = (r - rs[i]) / (rs[i + 1] - rs[i]);
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }

    fn slope(&self, r: f64) -> f64 {
        let rs = &self.radii;
        let last = rs.len() - 1;
        if r < rs[0] || r >= rs[last] {
            return 0.0;
        }
        let i = (rs.partition_point(|&x| x <= r) - 1).min(last - 1);
        (self.values[i + 1] - self.values[i]) / (rs[i + 1] - rs[i])
    }
}

/// Analytic potential families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum Family {
    /// `V(x) = λ|x|`.
    Linear {
        lambda: f64,
    },
    /// `V(x) = 1 + coef·|x|^δ`.
    Power {
        delta: f64,
        #[serde(default = "one")]
        coef: f64,
    },
    /// `V(x) = |x| log^θ(1+|x|)`.
    LogWeighted {
        theta: f64,
    },
    /// `V(x) = (d+ε) log(1+|x|)`, i.e. `μ_V ∝ (1+|x|)^{-d-ε}`.
    PolyTail {
        eps: f64,
    },
    /// `V ≡ value`. Not normalizable; used for local computations.
    Constant {
        value: f64,
    },
    Generic(RadialTable),
}

/// A radial potential `x ↦ base(scale·|x|)` in dimension `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub family: Family,
    pub dim: usize,
    /// Argument dilation; see [`rescale_potential`].
    #[serde(default = "one")]
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TailMode {
    /// log-integrand concave in r
    Exponential,
    /// log-integrand concave in ln r
    Algebraic,
}

impl PotentialSpec {
    fn build(family: Family, dim: usize) -> Result<Self> {
        let p = PotentialSpec {
            family,
            dim,
            scale: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn linear(lambda: f64, dim: usize) -> Result<Self> {
        Self::build(Family::Linear { lambda }, dim)
    }

    pub fn power(delta: f64, dim: usize) -> Result<Self> {
        Self::build(Family::Power { delta, coef: 1.0 }, dim)
    }

    pub fn log_weighted(theta: f64, dim: usize) -> Result<Self> {
        Self::build(Family::LogWeighted { theta }, dim)
    }

    pub fn poly_tail(eps: f64, dim: usize) -> Result<Self> {
        Self::build(Family::PolyTail { eps }, dim)
    }

    pub fn constant(value: f64, dim: usize) -> Result<Self> {
        Self::build(Family::Constant { value }, dim)
    }

    pub fn generic(table: RadialTable, dim: usize) -> Result<Self> {
        Self::build(Family::Generic(table), dim)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.dim == 0 {
            return bad("potential dimension must be >= 1".into());
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return bad(format!("scale {} must be positive", self.scale));
        }
        match &self.family {
            Family::Linear { lambda } if !lambda.is_finite() => bad("lambda must be finite".into()),
            Family::Power { delta, coef }
                if !(*delta > 0.0) || !(*coef > 0.0) || !delta.is_finite() =>
            {
                bad(format!(
                    "power family needs delta > 0 and coef > 0 (got {delta}, {coef})"
                ))
            }
            // θ ≤ -1 makes V blow up at the origin: not locally bounded
            Family::LogWeighted { theta } if !(*theta > -1.0) || !theta.is_finite() => bad(
                format!("log-weighted family needs theta > -1 (got {theta})"),
            ),
            Family::PolyTail { eps } if !eps.is_finite() => bad("eps must be finite".into()),
            Family::Constant { value } if !value.is_finite() => {
                bad("constant must be finite".into())
            }
            Family::Generic(t) => {
                if t.radii.len() < 2 || t.radii.len() != t.values.len() {
                    return bad("generic table needs >= 2 matching radii/values".into());
                }
                if t.radii[0] < 0.0 || t.radii.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad("generic radii must be nonnegative and strictly increasing".into());
                }
                if t.values.iter().any(|v| !v.is_finite()) {
                    return bad("generic potential must be finite (locally bounded)".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn base(&self, t: f64) -> f64 {
        match &self.family {
            Family::Linear { lambda } => lambda * t,
            Family::Power { delta, coef } => 1.0 + coef * t.powf(*delta),
            Family::LogWeighted { theta } => {
                if t == 0.0 {
                    0.0
                } else {
                    t * t.ln_1p().powf(*theta)
                }
            }
            Family::PolyTail { eps } => (self.dim as f64 + eps) * t.ln_1p(),
            Family::Constant { value } => *value,
            Family::Generic(table) => table.eval(t),
        }
    }

    fn base_slope(&self, t: f64) -> f64 {
        match &self.family {
            Family::Linear { lambda } => *lambda,
            Family::Power { delta, coef } => coef * delta * t.powf(delta - 1.0),
            Family::LogWeighted { theta } => {
                let l = t.ln_1p();
                l.powf(*theta) + theta * t * l.powf(theta - 1.0) / (1.0 + t)
            }
            Family::PolyTail { eps } => (self.dim as f64 + eps) / (1.0 + t),
            Family::Constant { .. } => 0.0,
            Family::Generic(table) => table.slope(t),
        }
    }

    /// `V` at radius `r = |x|`.
    pub fn radial(&self, r: f64) -> f64 {
        self.base(self.scale * r)
    }

    /// Radial derivative `dV/dr`.
    pub fn radial_slope(&self, r: f64) -> f64 {
        self.scale * self.base_slope(self.scale * r)
    }

    /// `V(b) - V(a)` for radii `a ≤ b`, free of cancellation for the analytic
    /// families when `a` and `b` are large and close.
    pub fn increment(&self, a: f64, b: f64) -> f64 {
        let (ta, tb) = (self.scale * a, self.scale * b);
        match &self.family {
            Family::Linear { lambda } => lambda * (tb - ta),
            Family::Power { delta, coef } if ta > 0.0 => {
                coef * ta.powf(*delta) * (delta * ((tb - ta) / ta).ln_1p()).exp_m1()
            }
            Family::LogWeighted { theta } if ta > 0.0 => {
                let la = ta.ln_1p();
                let dl = ((tb - ta) / (1.0 + ta)).ln_1p();
                let lat = la.powf(*theta);
                (tb - ta) * lat + tb * lat * (theta * (dl / la).ln_1p()).exp_m1()
            }
            Family::PolyTail { eps } => (self.dim as f64 + eps) * ((tb - ta) / (1.0 + ta)).ln_1p(),
            Family::Constant { .. } => 0.0,
            _ => self.base(tb) - self.base(ta),
        }
    }

    /// Radius beyond which `V(|x|)` is nondecreasing, `None` if there is none.
    pub fn eventually_monotone_from(&self) -> Option<f64> {
        let from_base = |t: f64| t / self.scale;
        match &self.family {
            Family::Linear { lambda } => (*lambda >= 0.0).then_some(0.0),
            Family::Power { .. } => Some(0.0),
            // |θ| ≤ 1 is monotone from 0 since log(1+t) ≥ t/(1+t)
            Family::LogWeighted { .. } => Some(0.0),
            Family::PolyTail { eps } => (self.dim as f64 + eps >= 0.0).then_some(0.0),
            Family::Constant { .. } => Some(0.0),
            Family::Generic(table) => {
                let v = &table.values;
                let mut i = v.len() - 1;
                while i > 0 && v[i - 1] <= v[i] {
                    i -= 1;
                }
                Some(from_base(if i == 0 { 0.0 } else { table.radii[i] }))
            }
        }
    }

    /// Interior kinks of the radial profile (table knots of a generic
    /// potential), in radius units.
    pub(crate) fn kinks(&self) -> Vec<f64> {
        match &self.family {
            Family::Generic(t) => t.radii.iter().map(|r| r / self.scale).collect(),
            _ => Vec::new(),
        }
    }

    /// Classifies `∫^∞ r^k e^{λr - V(r)} dr`: `None` if it diverges,
    /// otherwise the concavity mode of the log-integrand and the radius from
    /// which that concavity is guaranteed.
    pub(crate) fn tail_regime(&self, k: f64, lambda: f64) -> Option<(TailMode, f64)> {
        use TailMode::*;
        let s = self.scale;
        match &self.family {
            Family::Linear { lambda: c } => (lambda < c * s).then_some((Exponential, 0.0)),
            Family::Power { delta, coef } => {
                if *delta > 1.0 {
                    Some((Exponential, 0.0))
                } else if *delta == 1.0 {
                    (lambda < coef * s).then_some((Exponential, 0.0))
                } else {
                    (lambda <= 0.0).then_some((Algebraic, 0.0))
                }
            }
            Family::LogWeighted { theta } => {
                if *theta >= 1.0 {
                    Some((Exponential, 0.0))
                } else if *theta > 0.0 {
                    // V'' ≥ 0 once log(1+t) ≥ 1
                    Some((Exponential, (std::f64::consts::E - 1.0) / s))
                } else if *theta == 0.0 {
                    (lambda < s).then_some((Exponential, 0.0))
                } else {
                    (lambda <= 0.0).then_some((Algebraic, (2.0 + 2.0 * theta.abs()).exp() / s))
                }
            }
            Family::PolyTail { eps } => {
                let q = self.dim as f64 + eps;
                if lambda < 0.0 || (lambda == 0.0 && k + 1.0 < q) {
                    Some((Algebraic, 0.0))
                } else {
                    None
                }
            }
            Family::Constant { .. } => (lambda < 0.0).then_some((Exponential, 0.0)),
            Family::Generic(_) => None,
        }
    }
}

/// `V(x)` for a point `x`; radial families only read `|x|`.
pub fn eval_potential(p: &PotentialSpec, x: &[f64]) -> f64 {
    let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
    p.radial(r)
}

/// The potential `x ↦ V(a·x)`.
///
/// Linear and power families absorb the factor into their parameters; the
/// others carry it in [`PotentialSpec::scale`].
pub fn rescale_potential(p: &PotentialSpec, a: f64) -> Result<PotentialSpec> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "rescale factor {a} must be positive"
        )));
    }
    let mut out = p.clone();
    match &mut out.family {
        Family::Linear { lambda } => *lambda *= a,
        Family::Power { delta, coef } => *coef *= a.powf(*delta),
        _ => out.scale *= a,
    }
    Ok(out)
}

/// The probability measure `μ_V = c_v e^{-V} dx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    pub potential: PotentialSpec,
    pub c_v: f64,
    /// Estimated absolute error of `c_v`.
    pub quad_error: f64,
    /// Radius at which the tail bound took over.
    pub r_tail: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialIntegral {
    pub value: f64,
    pub error: f64,
    pub r_tail: f64,
}

const MAX_DOUBLINGS: usize = 400;

/// `∫_a^∞ r^k e^{λr - V(r)} dr` with a certified tail beyond an adaptively
/// chosen cut, stopping once the tail bound is below `tol/10` of the value.
pub fn radial_integral(
    p: &PotentialSpec,
    k: f64,
    lambda: f64,
    a: f64,
    tol: f64,
    min_cut: f64,
) -> Result<RadialIntegral> {
    let log_integrand = |r: f64| {
        let lr = if k == 0.0 { 0.0 } else { k * r.ln() };
        lr + lambda * r - p.radial(r)
    };
    let integrand = |r: f64| {
        if r == 0.0 && k > 0.0 {
            0.0
        } else {
            log_integrand(r).exp()
        }
    };
    let inner_tol = tol / 10.0;

    if let Family::Generic(table) = &p.family {
        let tail = table.tail.ok_or(Error::MissingTailBound)?;
        if k != p.dim as f64 - 1.0 || lambda != 0.0 {
            return Err(Error::MissingTailBound);
        }
        let cut = tail.r_tail.max(a);
        let breaks = quad::breaks_within(a, cut, &p.kinks());
        let body = quad::integrate_breaks(integrand, &breaks, 0.0, inner_tol)?;
        let tail_radial = tail.mass_bound / sphere_surface(p.dim);
        return Ok(RadialIntegral {
            value: body.value + 0.5 * tail_radial,
            error: body.error + 0.5 * tail_radial,
            r_tail: cut,
        });
    }

    let (mode, r_concave) = p.tail_regime(k, lambda).ok_or_else(|| {
        Error::NonIntegrable(format!(
            "tail of r^{k} e^({lambda} r - V(r)) diverges for {:?}",
            p.family
        ))
    })?;

    let slope = |r: f64| k / r + lambda - p.radial_slope(r);
    let tail_bound = |r: f64| -> Option<f64> {
        match mode {
            TailMode::Exponential => {
                let s = slope(r);
                (s < 0.0).then(|| log_integrand(r).exp() / -s)
            }
            TailMode::Algebraic => {
                let sigma = r * slope(r) + 1.0;
                (sigma < 0.0).then(|| r * log_integrand(r).exp() / -sigma)
            }
        }
    };

    let mut cut = a.max(r_concave).max(min_cut).max(1.0);
    let breaks = quad::geometric_breaks(a, cut);
    let mut body = if cut > a {
        quad::integrate_breaks(integrand, &breaks, 0.0, inner_tol)?
    } else {
        quad::QuadResult {
            value: 0.0,
            error: 0.0,
            converged: true,
        }
    };
    for _ in 0..MAX_DOUBLINGS {
        if let Some(bound) = tail_bound(cut) {
            if bound <= inner_tol * body.value || (body.value == 0.0 && bound == 0.0) {
                return Ok(RadialIntegral {
                    value: body.value + 0.5 * bound,
                    error: body.error + 0.5 * bound,
                    r_tail: cut,
                });
            }
        }
        let next = 2.0 * cut;
        let panel = quad::integrate(integrand, cut, next, 0.0, inner_tol)?;
        body.value += panel.value;
        body.error += panel.error;
        cut = next;
    }
    Err(Error::TailNotResolved(format!(
        "tail bound not below {inner_tol:e} of the integral by r = {cut:e}"
    )))
}

/// `∫_a^b r^{d-1} e^{-V(r)} dr` on a bounded range.
pub(crate) fn radial_mass_raw(p: &PotentialSpec, a: f64, b: f64, tol: f64) -> Result<f64> {
    let k = p.dim as f64 - 1.0;
    let f = |r: f64| {
        if r == 0.0 {
            if k == 0.0 {
                (-p.radial(0.0)).exp()
            } else {
                0.0
            }
        } else {
            (k * r.ln() - p.radial(r)).exp()
        }
    };
    let mut extra = p.kinks();
    extra.extend(quad::geometric_breaks(a, b));
    let breaks = quad::breaks_within(a, b, &extra);
    Ok(quad::integrate_breaks(f, &breaks, 0.0, tol)?.value)
}

/// Computes `C_V = 1/∫e^{-V}dx` to relative accuracy `tol`.
pub fn normalizing_constant(p: &PotentialSpec, tol: f64) -> Result<Measure> {
    normalizing_constant_from(p, tol, 0.0)
}

/// As [`normalizing_constant`], with the tail cut starting no lower than
/// `min_r_tail`.
pub fn normalizing_constant_from(p: &PotentialSpec, tol: f64, min_r_tail: f64) -> Result<Measure> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol = {tol} must be > 0")));
    }
    p.validate()?;
    let radial = radial_integral(p, p.dim as f64 - 1.0, 0.0, 0.0, tol, min_r_tail)?;
    let surface = sphere_surface(p.dim);
    let z = surface * radial.value;
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::NonIntegrable(format!(
            "integral of e^(-V) evaluated to {z}"
        )));
    }
    let c_v = 1.0 / z;
    Ok(Measure {
        potential: p.clone(),
        c_v,
        quad_error: c_v * radial.error / radial.value,
        r_tail: radial.r_tail,
    })
}

impl Measure {
    /// `μ_V(B(0,r)^c)`.
    pub fn tail_mass(&self, r: f64, tol: f64) -> Result<f64> {
        let p = &self.potential;
        if matches!(p.family, Family::Generic(_)) {
            let inside = self.ball_mass(r, tol)?;
            return Ok((1.0 - inside).max(0.0));
        }
        let radial = radial_integral(p, p.dim as f64 - 1.0, 0.0, r, tol, 0.0)?;
        Ok((self.c_v * sphere_surface(p.dim) * radial.value).min(1.0))
    }

    /// `μ_V(B(0,r))`.
    pub fn ball_mass(&self, r: f64, tol: f64) -> Result<f64> {
        if r <= 0.0 {
            return Ok(0.0);
        }
        let p = &self.potential;
        Ok(self.c_v * sphere_surface(p.dim) * radial_mass_raw(p, 0.0, r, tol)?)
    }

    /// Density `c_v e^{-V}` at radius `r`.
    pub fn density(&self, r: f64) -> f64 {
        self.c_v * (-self.potential.radial(r)).exp()
    }
}
