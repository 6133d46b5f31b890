//! Spectral gaps of assembled forms.
//!
//! All solvers work with the symmetric matrix `S = D^{-1/2} A D^{-1/2}`,
//! where `A` is the form matrix and `D = diag(w_i μ_i)`, restricted to the
//! complement of `c ∝ (μ_i/w_i)^{1/2}` (the image of the μ-mean-zero
//! constraint). For `w ≡ 1`, `c` is the null vector of `S`.
//!
//! The Lanczos solver uses full reorthogonalization (twice per step, also
//! against `c`) and explicit restarts from the current smallest Ritz vector.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::{assemble_form, build_grid, FormMatrix};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, PotentialSpec};

pub const DEFAULT_DENSE_CAP: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub lambda1: f64,
    /// `1/lambda1`.
    pub poincare_constant: f64,
    pub method: Method,
    pub residual: f64,
    pub iterations: usize,
    pub weighted: bool,
    pub warning: Option<String>,
    /// Minimizer in node space, μ-mean zero, unit weighted norm.
    #[serde(skip)]
    pub eigenvector: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Solver {
    Dense {
        cap: usize,
    },
    Lanczos {
        tol: f64,
        max_iter: usize,
    },
    /// Dense up to `cap` nodes, Lanczos beyond.
    Auto {
        cap: usize,
        tol: f64,
        max_iter: usize,
    },
}

impl Default for Solver {
    fn default() -> Self {
        Solver::Auto {
            cap: DEFAULT_DENSE_CAP,
            tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

struct Scaled<'a> {
    fm: &'a FormMatrix,
    /// `(w_i μ_i)^{-1/2}`
    dinv: Vec<f64>,
    c: Vec<f64>,
}

impl<'a> Scaled<'a> {
    fn new(fm: &'a FormMatrix, w: Option<&[f64]>) -> Result<Self> {
        let n = fm.n();
        if let Some(w) = w {
            if w.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: w.len(),
                });
            }
            if w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(Error::InvalidParameter(
                    "weights must be positive and finite".into(),
                ));
            }
        }
        let wi = |i: usize| w.map_or(1.0, |w| w[i]);
        let dinv: Vec<f64> = (0..n).map(|i| 1.0 / (wi(i) * fm.mu[i]).sqrt()).collect();
        let mut c: Vec<f64> = (0..n).map(|i| (fm.mu[i] / wi(i)).sqrt()).collect();
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        c.iter_mut().for_each(|x| *x /= norm);
        Ok(Scaled { fm, dinv, c })
    }

    fn project(&self, x: &mut [f64]) {
        let dot: f64 = x.iter().zip(&self.c).map(|(a, b)| a * b).sum();
        x.iter_mut().zip(&self.c).for_each(|(a, b)| *a -= dot * b);
    }

    /// `P S P x`
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut xp = x.to_vec();
        self.project(&mut xp);
        let f: Vec<f64> = xp.iter().zip(&self.dinv).map(|(a, b)| a * b).collect();
        let af = self.fm.laplacian_apply(&f);
        let mut y: Vec<f64> = af.iter().zip(&self.dinv).map(|(a, b)| a * b).collect();
        self.project(&mut y);
        y
    }

    fn to_nodes(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.dinv).map(|(a, b)| a * b).collect()
    }
}

fn gap_warning(lambda1: f64, scale: f64) -> Option<String> {
    (lambda1 <= 1e-12 * scale.max(f64::MIN_POSITIVE))
        .then(|| "gap is zero to working precision: the weight graph is disconnected".to_string())
}

fn dense_impl(fm: &FormMatrix, w: Option<&[f64]>, cap: usize) -> Result<SpectralResult> {
    let n = fm.n();
    if n > cap {
        return Err(Error::TooLargeForDense { n, cap });
    }
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two nodes".into()));
    }
    let sc = Scaled::new(fm, w)?;
    let a = fm.dense_laplacian();
    let s = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * sc.dinv[i] * sc.dinv[j]);
    let c = DVector::from_column_slice(&sc.c);
    let sc_vec = &s * &c;
    let csc = c.dot(&sc_vec);
    // P S P = S - c (Sc)ᵀ - (Sc) cᵀ + (cᵀSc) c cᵀ
    let pm = &s - &c * sc_vec.transpose() - &sc_vec * c.transpose() + (&c * c.transpose()) * csc;
    let pm = (pm.clone() + pm.transpose()) * 0.5;
    let eig = SymmetricEigen::new(pm.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut dropped = false;
    let mut pick = None;
    for &k in &order {
        let v = eig.eigenvectors.column(k);
        if !dropped && v.dot(&c).abs() > 0.5 {
            dropped = true;
            continue;
        }
        pick = Some(k);
        break;
    }
    let k = pick.expect("n >= 2 leaves a non-constant mode");
    let lambda1 = eig.eigenvalues[k].max(0.0);
    let v = eig.eigenvectors.column(k).into_owned();
    let residual = (&pm * &v - &v * eig.eigenvalues[k]).norm();
    let scale = eig.eigenvalues.amax();
    Ok(SpectralResult {
        lambda1,
        poincare_constant: 1.0 / lambda1,
        method: Method::Dense,
        residual,
        iterations: 1,
        weighted: w.is_some(),
        warning: gap_warning(lambda1, scale),
        eigenvector: sc.to_nodes(v.as_slice()),
    })
}

/// Gap by full symmetric eigendecomposition.
pub fn spectral_gap_dense(fm: &FormMatrix) -> Result<SpectralResult> {
    dense_impl(fm, None, DEFAULT_DENSE_CAP)
}

pub fn spectral_gap_dense_capped(fm: &FormMatrix, cap: usize) -> Result<SpectralResult> {
    dense_impl(fm, None, cap)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(x: &mut [f64]) -> f64 {
    let n = dot(x, x).sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
    n
}

fn lanczos_impl(
    fm: &FormMatrix,
    w: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<SpectralResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol = {tol} must be > 0")));
    }
    let n = fm.n();
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two nodes".into()));
    }
    let sc = Scaled::new(fm, w)?;
    let dim = n - 1;
    let block = dim.min(120);
    let mut start: Vec<f64> = (0..n)
        .map(|i| ((i as f64 + 1.0) * 0.618_033_988_749_895).fract() - 0.5)
        .collect();
    sc.project(&mut start);
    normalize(&mut start);
    let mut total = 0;
    let mut best = (f64::INFINITY, f64::INFINITY, start.clone());
    loop {
        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let mut alphas = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        for j in 0..block {
            let mut wv = sc.apply(&basis[j]);
            total += 1;
            let a = dot(&basis[j], &wv);
            alphas.push(a);
            for _ in 0..2 {
                for b in &basis {
                    let h = dot(b, &wv);
                    wv.iter_mut().zip(b).for_each(|(x, y)| *x -= h * y);
                }
                sc.project(&mut wv);
            }
            let b = normalize(&mut wv);
            if j + 1 == block || b <= 1e-13 * a.abs().max(1.0) || total >= max_iter {
                break;
            }
            betas.push(b);
            basis.push(wv);
        }
        let k = alphas.len();
        let t = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alphas[i]
            } else if i + 1 == j {
                betas[i]
            } else if j + 1 == i {
                betas[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (mut imin, mut imax) = (0, 0);
        for i in 0..k {
            if eig.eigenvalues[i] < eig.eigenvalues[imin] {
                imin = i;
            }
            if eig.eigenvalues[i] > eig.eigenvalues[imax] {
                imax = i;
            }
        }
        let theta = eig.eigenvalues[imin];
        let scale = eig.eigenvalues[imax].abs().max(1.0);
        let y = eig.eigenvectors.column(imin);
        let mut x = vec![0.0; n];
        for (i, b) in basis.iter().enumerate().take(k) {
            x.iter_mut().zip(b).for_each(|(xv, bv)| *xv += y[i] * bv);
        }
        sc.project(&mut x);
        normalize(&mut x);
        let ax = sc.apply(&x);
        let rq = dot(&x, &ax);
        let residual = ax
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - rq * b).powi(2))
            .sum::<f64>()
            .sqrt();
        let _ = theta;
        if residual < best.1 {
            best = (rq, residual, x.clone());
        }
        if residual <= tol * scale || k >= dim {
            let lambda1 = rq.max(0.0);
            return Ok(SpectralResult {
                lambda1,
                poincare_constant: 1.0 / lambda1,
                method: Method::Lanczos,
                residual,
                iterations: total,
                weighted: w.is_some(),
                warning: gap_warning(lambda1, scale),
                eigenvector: sc.to_nodes(&x),
            });
        }
        if total >= max_iter {
            return Err(Error::NoConvergence {
                iterations: total,
                estimate: best.0,
                residual: best.1,
            });
        }
        start = x;
    }
}

/// Gap by restarted Lanczos; converged when `‖Sv - λv‖ ≤ tol·max(1, λ_max)`
/// with `λ_max` the largest Ritz value.
pub fn spectral_gap_lanczos(fm: &FormMatrix, tol: f64, max_iter: usize) -> Result<SpectralResult> {
    lanczos_impl(fm, None, tol, max_iter)
}

pub fn spectral_gap(fm: &FormMatrix, solver: Solver) -> Result<SpectralResult> {
    solve(fm, None, solver)
}

fn solve(fm: &FormMatrix, w: Option<&[f64]>, solver: Solver) -> Result<SpectralResult> {
    match solver {
        Solver::Dense { cap } => dense_impl(fm, w, cap),
        Solver::Lanczos { tol, max_iter } => lanczos_impl(fm, w, tol, max_iter),
        Solver::Auto { cap, tol, max_iter } => {
            if fm.n() <= cap {
                dense_impl(fm, w, cap)
            } else {
                lanczos_impl(fm, w, tol, max_iter)
            }
        }
    }
}

/// `inf_{f ⊥_μ 1} 𝔈(f,f)/Σ f_i² w_i μ_i`.
pub fn weighted_gap(fm: &FormMatrix, weight: &[f64]) -> Result<SpectralResult> {
    solve(fm, Some(weight), Solver::default())
}

pub fn weighted_gap_with(
    fm: &FormMatrix,
    weight: &[f64],
    solver: Solver,
) -> Result<SpectralResult> {
    solve(fm, Some(weight), solver)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StudyVerdict {
    Stabilizes,
    Decays,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub half_width: f64,
    pub n: usize,
    pub lambda1: f64,
    pub residual: f64,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapStudy {
    pub h: f64,
    pub rows: Vec<StudyRow>,
    pub verdict: StudyVerdict,
}

/// Classifies a gap sequence over growing boxes: Stabilizes when the last
/// two gaps differ by less than 10%, Decays when the gaps fall monotonically
/// by at least 2× overall.
pub fn classify_gaps(gaps: &[f64]) -> StudyVerdict {
    let k = gaps.len();
    if k >= 2 && (gaps[k - 1] / gaps[k - 2] - 1.0).abs() < 0.1 {
        StudyVerdict::Stabilizes
    } else if gaps.windows(2).all(|w| w[1] < w[0]) && gaps[0] >= 2.0 * gaps[k - 1] {
        StudyVerdict::Decays
    } else {
        StudyVerdict::Inconclusive
    }
}

/// Gaps of the censored form on `[-L, L]^d` for each `L` in `l_list`.
pub fn gap_stability_study(
    p: &PotentialSpec,
    m: &ModelSpec,
    l_list: &[f64],
    h: f64,
    solver: Solver,
) -> Result<GapStudy> {
    gap_study_weighted(p, m, l_list, h, solver, None::<fn(&[f64]) -> f64>)
}

/// As [`gap_stability_study`] with an optional node weight `w(x)`.
pub fn gap_study_weighted<W: Fn(&[f64]) -> f64 + Sync>(
    p: &PotentialSpec,
    m: &ModelSpec,
    l_list: &[f64],
    h: f64,
    solver: Solver,
    weight: Option<W>,
) -> Result<GapStudy> {
    if l_list.len() < 3 || l_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(
            "L_list must be increasing with >= 3 entries".into(),
        ));
    }
    let rows = l_list
        .par_iter()
        .map(|&l| {
            let g = build_grid(m.d, l, h)?;
            let fm = assemble_form(&g, m, p)?;
            let r = match &weight {
                Some(wf) => {
                    let w: Vec<f64> = (0..g.n).map(|i| wf(&g.node(i))).collect();
                    solve(&fm, Some(&w), solver)?
                }
                None => solve(&fm, None, solver)?,
            };
            Ok(StudyRow {
                half_width: l,
                n: g.n,
                lambda1: r.lambda1,
                residual: r.residual,
                method: r.method,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gaps: Vec<f64> = rows.iter().map(|r| r.lambda1).collect();
    Ok(GapStudy {
        h,
        verdict: classify_gaps(&gaps),
        rows,
    })
}
