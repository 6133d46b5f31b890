//! Censored discretization of the jump forms on a uniform cell-centred grid.
//!
//! Grid convention: with `m = ⌊L/h⌋` cells per half-axis, the axis nodes are
//! `(k - m + 1/2)h` for `k = 0..2m`, so `n = (2m)^d` and every node lies
//! strictly inside `[-L, L]^d`.
//!
//! Pair intensities `κ_ij` depend only on the integer displacement between
//! nodes, so grid-built forms store one `κ` per displacement rather than a
//! dense matrix. Pairs closer than `2h` use the kernel averaged over a small
//! displacement stencil; farther pairs use the midpoint value.
//!
//! The discrete form is `𝔈(f,f) = ½ Σ_{i≠j} (f_i-f_j)² κ_ij μ_i h^d`, which
//! equals `Σ_{i<j} (f_i-f_j)² W_ij` with the symmetric weight
//! `W_ij = κ_ij (μ_i+μ_j) h^d / 2`. The generator is
//! `G_ij = κ_ij (1 + μ_j/μ_i) h^d / 2`, so `μ_i G_ij = W_ij`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{kernel_density, KernelKind, ModelSpec, PotentialSpec};

pub const MAX_NODES_1D: usize = 200_000;
pub const MAX_NODES_2D: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub d: usize,
    pub half_width: f64,
    pub h: f64,
    /// Cells per half-axis.
    pub m: usize,
    pub n: usize,
}

impl Grid {
    pub fn per_axis(&self) -> usize {
        2 * self.m
    }

    pub fn axis_coord(&self, k: usize) -> f64 {
        (k as f64 - self.m as f64 + 0.5) * self.h
    }

    pub fn node(&self, i: usize) -> Vec<f64> {
        match self.d {
            1 => vec![self.axis_coord(i)],
            _ => {
                let a = self.per_axis();
                vec![self.axis_coord(i % a), self.axis_coord(i / a)]
            }
        }
    }

    pub fn node_radius(&self, i: usize) -> f64 {
        let x = self.node(i);
        x.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.d as i32)
    }
}

pub fn build_grid(d: usize, half_width: f64, h: f64) -> Result<Grid> {
    build_grid_capped(d, half_width, h, None)
}

/// As [`build_grid`] with an explicit node cap.
pub fn build_grid_capped(d: usize, half_width: f64, h: f64, cap: Option<usize>) -> Result<Grid> {
    if d == 0 || d > 2 {
        return Err(Error::InvalidParameter(format!(
            "grids support d = 1 or 2, got {d}"
        )));
    }
    if !(h > 0.0) || !h.is_finite() || !(half_width >= h) || !half_width.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need h > 0 and L >= h (got L = {half_width}, h = {h})"
        )));
    }
    let m = (half_width / h + 1e-9).floor() as usize;
    let cap = cap.unwrap_or(if d == 1 { MAX_NODES_1D } else { MAX_NODES_2D });
    let per = (2 * m) as u128;
    let n = per.pow(d as u32);
    if n > cap as u128 {
        return Err(Error::TooLarge {
            n: n.min(usize::MAX as u128) as usize,
            cap,
        });
    }
    Ok(Grid {
        d,
        half_width,
        h,
        m,
        n: n as usize,
    })
}

const STENCIL_1D: [f64; 5] = [0.0, 0.25, -0.25, 0.5, -0.5];
const STENCIL_2D: [(f64, f64); 5] = [(0.0, 0.0), (0.5, 0.0), (-0.5, 0.0), (0.0, 0.5), (0.0, -0.5)];

/// Pair intensity for the integer displacement `(dx, dy)`.
fn pair_kappa(m: &ModelSpec, h: f64, dx: i64, dy: i64) -> f64 {
    let sq = dx * dx + dy * dy;
    let (fx, fy) = (dx as f64, dy as f64);
    if sq >= 4 {
        return kernel_density(m, (fx * fx + fy * fy).sqrt() * h);
    }
    if m.d == 1 {
        STENCIL_1D
            .iter()
            .map(|t| kernel_density(m, (fx + t).abs() * h))
            .sum::<f64>()
            / 5.0
    } else {
        STENCIL_2D
            .iter()
            .map(|(tx, ty)| {
                let (a, b) = (fx + tx, fy + ty);
                kernel_density(m, (a * a + b * b).sqrt() * h)
            })
            .sum::<f64>()
            / 5.0
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Weights {
    /// Nonzero `(dx, dy, κ)` over all displacements.
    Displacement(Vec<(i64, i64, f64)>),
    /// Explicit rows `(j, κ_ij)`, symmetric.
    Rows(Vec<Vec<(usize, f64)>>),
}

/// Assembled discrete form.
#[derive(Debug, Clone, PartialEq)]
pub struct FormMatrix {
    pub grid: Option<Grid>,
    pub model: ModelSpec,
    pub mu: Vec<f64>,
    pub log_mu: Vec<f64>,
    /// `h^d` for grid forms, 1 for explicitly supplied weights.
    pub cell_volume: f64,
    weights: Weights,
}

fn normalized_log_weights(log_w: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::MeasureUnderflow(0));
    }
    let lse = top + log_w.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
    let log_mu: Vec<f64> = log_w.iter().map(|v| v - lse).collect();
    let mu: Vec<f64> = log_mu.iter().map(|v| v.exp()).collect();
    if let Some(i) = mu.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::MeasureUnderflow(i));
    }
    Ok((mu, log_mu))
}

/// Builds the censored form of `m` on `g` against `e^{-V}` restricted to the
/// grid and renormalized.
pub fn assemble_form(g: &Grid, m: &ModelSpec, p: &PotentialSpec) -> Result<FormMatrix> {
    m.validate()?;
    if m.d != g.d || p.dim != g.d {
        return Err(Error::DimensionMismatch {
            expected: g.d,
            got: m.d.max(p.dim),
        });
    }
    let log_w: Vec<f64> = (0..g.n)
        .into_par_iter()
        .map(|i| -p.radial(g.node_radius(i)))
        .collect();
    let (mu, log_mu) = normalized_log_weights(&log_w)?;
    let span = g.per_axis() as i64 - 1;
    let dys: Vec<i64> = if g.d == 1 {
        vec![0]
    } else {
        (-span..=span).collect()
    };
    let mut disp = Vec::new();
    for &dy in &dys {
        for dx in -span..=span {
            if dx == 0 && dy == 0 {
                continue;
            }
            let k = pair_kappa(m, g.h, dx, dy);
            if k > 0.0 {
                disp.push((dx, dy, k));
            }
        }
    }
    Ok(FormMatrix {
        grid: Some(g.clone()),
        model: *m,
        mu,
        log_mu,
        cell_volume: g.cell_volume(),
        weights: Weights::Displacement(disp),
    })
}

impl FormMatrix {
    /// Form from explicit symmetric intensities `(i, j, κ_ij)` (each
    /// unordered pair listed once) and positive node masses, with unit cell
    /// volume.
    pub fn from_weights(
        model: ModelSpec,
        mu: &[f64],
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let n = mu.len();
        if mu.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter(
                "node masses must be positive".into(),
            ));
        }
        let total: f64 = mu.iter().sum();
        let log_w: Vec<f64> = mu.iter().map(|v| (v / total).ln()).collect();
        let (mu, log_mu) = normalized_log_weights(&log_w)?;
        let mut rows = vec![Vec::new(); n];
        for &(i, j, k) in triplets {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: i.max(j) + 1,
                });
            }
            if i == j || !(k >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "bad weight ({i}, {j}, {k})"
                )));
            }
            rows[i].push((j, k));
            rows[j].push((i, k));
        }
        for r in rows.iter_mut() {
            r.sort_by_key(|e| e.0);
        }
        Ok(FormMatrix {
            grid: None,
            model,
            mu,
            log_mu,
            cell_volume: 1.0,
            weights: Weights::Rows(rows),
        })
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    /// Calls `f(j, κ_ij)` for every `j ≠ i` with `κ_ij > 0`, in increasing `j`
    /// for row storage and displacement order for grid storage.
    pub fn for_each_neighbor<F: FnMut(usize, f64)>(&self, i: usize, mut f: F) {
        match &self.weights {
            Weights::Rows(rows) => {
                for &(j, k) in &rows[i] {
                    f(j, k);
                }
            }
            Weights::Displacement(disp) => {
                let g = self
                    .grid
                    .as_ref()
                    .expect("displacement storage needs a grid");
                let a = g.per_axis() as i64;
                let (ix, iy) = ((i as i64) % a, (i as i64) / a);
                for &(dx, dy, k) in disp {
                    let (jx, jy) = (ix + dx, iy + dy);
                    if jx < 0 || jx >= a || jy < 0 || (g.d == 1 && dy != 0) || (g.d == 2 && jy >= a)
                    {
                        continue;
                    }
                    f((jy * a + jx) as usize, k);
                }
            }
        }
    }

    /// Generator entry `G_ij` given `κ_ij`.
    #[inline]
    pub fn generator_rate(&self, i: usize, j: usize, kappa: f64) -> f64 {
        0.5 * kappa * (1.0 + (self.log_mu[j] - self.log_mu[i]).exp()) * self.cell_volume
    }

    /// Symmetric weight `W_ij = μ_i G_ij`.
    #[inline]
    pub fn sym_weight(&self, i: usize, j: usize, kappa: f64) -> f64 {
        0.5 * kappa * (self.mu[i] + self.mu[j]) * self.cell_volume
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: f.len(),
            });
        }
        Ok(())
    }

    /// Same pairs, keeping only those at distance in `[lo, hi]`.
    pub fn restricted_to_band(&self, lo: f64, hi: f64) -> Result<FormMatrix> {
        let g = self.grid.as_ref().ok_or_else(|| {
            Error::InvalidParameter("band restriction needs grid geometry".into())
        })?;
        let disp = match &self.weights {
            Weights::Displacement(d) => d
                .iter()
                .copied()
                .filter(|&(dx, dy, _)| {
                    let r = ((dx * dx + dy * dy) as f64).sqrt() * g.h;
                    r >= lo && r <= hi
                })
                .collect(),
            Weights::Rows(_) => unreachable!("grid forms use displacement storage"),
        };
        Ok(FormMatrix {
            weights: Weights::Displacement(disp),
            ..self.clone()
        })
    }

    /// Explicit `(i, j, κ_ij)` for `i < j`.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n() {
            let mut row = Vec::new();
            self.for_each_neighbor(i, |j, k| {
                if j > i {
                    row.push((i, j, k));
                }
            });
            row.sort_by_key(|e| e.1);
            out.extend(row);
        }
        out
    }

    /// Dense symmetric matrix `A` with `fᵀAf = 𝔈(f,f)`.
    pub fn dense_laplacian(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n();
        let mut a = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            let mut diag = 0.0;
            self.for_each_neighbor(i, |j, k| {
                let w = self.sym_weight(i, j, k);
                a[(i, j)] = -w;
                diag += w;
            });
            a[(i, i)] = diag;
        }
        a
    }

    /// `A f` with `A` the symmetric form matrix. Rows run in parallel; each
    /// row sums sequentially so the result does not depend on threading.
    pub fn laplacian_apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.n())
            .into_par_iter()
            .map(|i| {
                let mut acc = 0.0;
                self.for_each_neighbor(i, |j, k| acc += self.sym_weight(i, j, k) * (f[i] - f[j]));
                acc
            })
            .collect()
    }

    /// Exports `(header, triplet text, μ text)`. Floats print in shortest
    /// round-trip form, so [`FormMatrix::import`] reloads bit-exactly.
    pub fn export(&self) -> (String, String) {
        let mut tri = String::new();
        let (l, h) = self
            .grid
            .as_ref()
            .map(|g| (g.half_width, g.h))
            .unwrap_or((f64::NAN, f64::NAN));
        let _ = writeln!(
            tri,
            "# d={} alpha={} kernel={:?} delta={} range_cut={} L={} h={} cell_volume={} n={}",
            self.model.d,
            self.model.alpha,
            self.model.kernel,
            self.model.delta,
            self.model.range_cut,
            l,
            h,
            self.cell_volume,
            self.n()
        );
        for (i, j, k) in self.triplets() {
            let _ = writeln!(tri, "{i} {j} {k:?}");
        }
        let mut mu = String::from("# log_mu\n");
        for v in &self.log_mu {
            let _ = writeln!(mu, "{v:?}");
        }
        (tri, mu)
    }

    /// Reads the output of [`FormMatrix::export`].
    pub fn import(triplets: &str, mu: &str) -> Result<FormMatrix> {
        let bad = |m: &str| Error::Parse(m.to_string());
        let mut lines = triplets.lines();
        let header = lines.next().ok_or_else(|| bad("empty triplet file"))?;
        let field = |key: &str| -> Result<&str> {
            header
                .split_whitespace()
                .find_map(|t| t.strip_prefix(&format!("{key}=")))
                .ok_or_else(|| bad(&format!("missing header field {key}")))
        };
        let num = |key: &str| -> Result<f64> {
            field(key)?.parse().map_err(|_| bad(&format!("bad {key}")))
        };
        let kernel = match field("kernel")? {
            "FiniteRange" => KernelKind::FiniteRange,
            "LargeJump" => KernelKind::LargeJump,
            "Full" => KernelKind::Full,
            "Tempered" => KernelKind::Tempered,
            k => return Err(bad(&format!("unknown kernel {k}"))),
        };
        let d: usize = field("d")?.parse().map_err(|_| bad("bad d"))?;
        let model = ModelSpec {
            d,
            alpha: num("alpha")?,
            kernel,
            delta: num("delta")?,
            range_cut: num("range_cut")?,
        };
        model.validate()?;
        let n: usize = field("n")?.parse().map_err(|_| bad("bad n"))?;
        let cell_volume = num("cell_volume")?;
        let (l, h) = (num("L")?, num("h")?);
        let log_mu: Vec<f64> = mu
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|_| bad("bad mu entry")))
            .collect::<Result<_>>()?;
        if log_mu.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: log_mu.len(),
            });
        }
        let mut rows = vec![Vec::new(); n];
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let mut it = line.split_whitespace();
            let mut next = || it.next().ok_or_else(|| bad("short triplet line"));
            let i: usize = next()?.parse().map_err(|_| bad("bad index"))?;
            let j: usize = next()?.parse().map_err(|_| bad("bad index"))?;
            let k: f64 = next()?.parse().map_err(|_| bad("bad weight"))?;
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: i.max(j) + 1,
                });
            }
            rows[i].push((j, k));
            rows[j].push((i, k));
        }
        for r in rows.iter_mut() {
            r.sort_by_key(|e| e.0);
        }
        let grid = if l.is_finite() && h.is_finite() {
            Some(build_grid_capped(d, l, h, Some(usize::MAX))?)
        } else {
            None
        };
        Ok(FormMatrix {
            grid,
            model,
            mu: log_mu.iter().map(|v| v.exp()).collect(),
            log_mu,
            cell_volume,
            weights: Weights::Rows(rows),
        })
    }
}

/// `½ Σ_{i≠j} (f_i-f_j)² κ_ij μ_i h^d`.
pub fn dirichlet_form(fm: &FormMatrix, f: &[f64]) -> Result<f64> {
    fm.check_len(f)?;
    let rows: Vec<f64> = (0..fm.n())
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            fm.for_each_neighbor(i, |j, k| {
                let d = f[i] - f[j];
                acc += d * d * k;
            });
            acc * fm.mu[i]
        })
        .collect();
    Ok(0.5 * fm.cell_volume * rows.iter().sum::<f64>())
}

/// `(Gf)_i = Σ_{j≠i} G_ij (f_j - f_i)`.
pub fn generator_apply(fm: &FormMatrix, f: &[f64]) -> Result<Vec<f64>> {
    fm.check_len(f)?;
    Ok((0..fm.n())
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            fm.for_each_neighbor(i, |j, k| acc += fm.generator_rate(i, j, k) * (f[j] - f[i]));
            acc
        })
        .collect())
}

/// `Σ_i f_i² μ_i`.
pub fn mu_norm_sq(fm: &FormMatrix, f: &[f64]) -> f64 {
    f.iter().zip(&fm.mu).map(|(x, m)| x * x * m).sum()
}

pub fn mu_mean(fm: &FormMatrix, f: &[f64]) -> f64 {
    f.iter().zip(&fm.mu).map(|(x, m)| x * m).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(kernel: KernelKind, alpha: f64) -> ModelSpec {
        ModelSpec::new(1, alpha, kernel).unwrap()
    }

    #[test]
    fn grid_examples() {
        let g = build_grid(1, 1.0, 0.5).unwrap();
        assert_eq!(g.n, 4);
        let xs: Vec<f64> = (0..4).map(|i| g.node(i)[0]).collect();
        assert_eq!(xs, vec![-0.75, -0.25, 0.25, 0.75]);
        assert_eq!(build_grid(2, 1.0, 0.5).unwrap().n, 16);
        let g = build_grid(1, 1.2, 0.6).unwrap();
        assert_eq!(g.n, 4);
        let g = build_grid(1, 1.0, 0.6).unwrap();
        assert_eq!(
            (0..g.n).map(|i| g.node(i)[0]).collect::<Vec<_>>(),
            vec![-0.3, 0.3]
        );
        assert!(build_grid(1, 0.5, 0.6).is_err());
        let g = build_grid(1, 1.5, 0.6).unwrap();
        let xs: Vec<f64> = (0..g.n).map(|i| g.node(i)[0]).collect();
        assert_eq!(g.m, 2);
        assert!(xs.iter().all(|x| x.abs() < 1.5));
        assert_eq!(
            build_grid(3, 1.0, 0.5).unwrap_err().name(),
            "InvalidParameter"
        );
        assert_eq!(build_grid(1, 1e6, 1e-3).unwrap_err().name(), "TooLarge");
        assert_eq!(build_grid(2, 100.0, 0.5).unwrap_err().name(), "TooLarge");
    }

    #[test]
    fn two_node_finite_range_hand_value() {
        // nodes ±0.25 at distance 0.5; V ≡ 0
        let g = build_grid(1, 0.5, 0.5).unwrap();
        let fm = assemble_form(
            &g,
            &m(KernelKind::FiniteRange, 1.0),
            &PotentialSpec::constant(0.0, 1).unwrap(),
        )
        .unwrap();
        // distance is h, so the stencil average applies
        let kappa = STENCIL_1D
            .iter()
            .map(|t: &f64| (1.0 + t).abs().powi(-2) * 4.0)
            .sum::<f64>()
            / 5.0;
        let f = [1.0, 3.0];
        let expect = 2.0 * 0.5 * 4.0 * kappa * 0.5 * 0.5;
        assert!((dirichlet_form(&fm, &f).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn far_pairs_use_midpoint_kernel() {
        let g = build_grid(1, 2.0, 0.25).unwrap();
        let mm = m(KernelKind::Full, 1.0);
        let fm = assemble_form(&g, &mm, &PotentialSpec::constant(0.0, 1).unwrap()).unwrap();
        let mut seen = 0;
        fm.for_each_neighbor(0, |j, k| {
            if j >= 2 {
                assert_eq!(k, kernel_density(&mm, j as f64 * 0.25));
                seen += 1;
            }
        });
        assert_eq!(seen, g.n - 2);
    }

    #[test]
    fn large_jump_on_tiny_grid_vanishes() {
        let g = build_grid(1, 0.4, 0.1).unwrap();
        let fm = assemble_form(
            &g,
            &m(KernelKind::LargeJump, 1.0),
            &PotentialSpec::constant(0.0, 1).unwrap(),
        )
        .unwrap();
        let f: Vec<f64> = (0..g.n).map(|i| (i * i) as f64).collect();
        assert_eq!(dirichlet_form(&fm, &f).unwrap(), 0.0);
    }

    #[test]
    fn form_matches_double_loop_and_generator_is_adjoint() {
        let g = build_grid(1, 2.5, 0.25).unwrap();
        let p = PotentialSpec::linear(1.3, 1).unwrap();
        let fm = assemble_form(&g, &m(KernelKind::Full, 1.2), &p).unwrap();
        let f: Vec<f64> = (0..g.n)
            .map(|i| ((i as f64) * 0.7).sin() + 0.1 * i as f64)
            .collect();
        let mut brute = 0.0;
        for i in 0..g.n {
            for j in 0..g.n {
                if i != j {
                    let k = pair_kappa(&fm.model, g.h, j as i64 - i as i64, 0);
                    brute += 0.5 * (f[i] - f[j]).powi(2) * k * fm.mu[i] * g.h;
                }
            }
        }
        let e = dirichlet_form(&fm, &f).unwrap();
        assert!((e - brute).abs() <= 1e-14 * brute, "{e} vs {brute}");
        let gf = generator_apply(&fm, &f).unwrap();
        let pairing: f64 = (0..g.n).map(|i| -f[i] * gf[i] * fm.mu[i]).sum();
        assert!((pairing - e).abs() <= 1e-10 * e);
        let c = vec![17.0; g.n];
        assert_eq!(dirichlet_form(&fm, &c).unwrap(), 0.0);
        assert!(generator_apply(&fm, &c).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn detailed_balance_entrywise() {
        let g = build_grid(1, 1.25, 0.25).unwrap();
        assert_eq!(g.n, 10);
        let fm = assemble_form(
            &g,
            &m(KernelKind::Full, 0.7),
            &PotentialSpec::power(2.0, 1).unwrap(),
        )
        .unwrap();
        for i in 0..g.n {
            fm.for_each_neighbor(i, |j, k| {
                let a = fm.mu[i] * fm.generator_rate(i, j, k);
                let b = fm.mu[j] * fm.generator_rate(j, i, k);
                assert!((a - b).abs() <= 1e-12 * a.abs());
            });
        }
    }

    #[test]
    fn dimension_mismatch() {
        let g = build_grid(1, 1.0, 0.5).unwrap();
        let fm = assemble_form(
            &g,
            &m(KernelKind::Full, 1.0),
            &PotentialSpec::constant(0.0, 1).unwrap(),
        )
        .unwrap();
        assert_eq!(
            dirichlet_form(&fm, &[1.0]).unwrap_err(),
            Error::DimensionMismatch {
                expected: 4,
                got: 1
            }
        );
        assert!(generator_apply(&fm, &[1.0; 5]).is_err());
    }

    #[test]
    fn measure_underflow_is_reported() {
        let g = build_grid(1, 50.0, 1.0).unwrap();
        let err = assemble_form(
            &g,
            &m(KernelKind::Full, 1.0),
            &PotentialSpec::power(4.0, 1).unwrap(),
        )
        .unwrap_err();
        assert_eq!(err.name(), "MeasureUnderflow");
    }

    #[test]
    fn two_dimensional_form_is_symmetric() {
        let g = build_grid(2, 1.0, 0.25).unwrap();
        let mm = ModelSpec::new(2, 1.0, KernelKind::FiniteRange).unwrap();
        let fm = assemble_form(&g, &mm, &PotentialSpec::power(2.0, 2).unwrap()).unwrap();
        let a = fm.dense_laplacian();
        assert!((a.clone() - a.transpose()).amax() == 0.0);
        let f: Vec<f64> = (0..g.n).map(|i| (i as f64 * 0.37).cos()).collect();
        let v = nalgebra::DVector::from_vec(f.clone());
        let quad = (v.transpose() * &a * &v)[(0, 0)];
        let e = dirichlet_form(&fm, &f).unwrap();
        assert!((quad - e).abs() < 1e-12 * e);
    }

    #[test]
    fn export_import_is_bit_exact() {
        let g = build_grid(1, 2.0, 0.2).unwrap();
        let fm = assemble_form(
            &g,
            &m(KernelKind::Tempered, 1.5).with_delta(0.3).unwrap(),
            &PotentialSpec::poly_tail(1.0, 1).unwrap(),
        )
        .unwrap();
        let (tri, mu) = fm.export();
        let back = FormMatrix::import(&tri, &mu).unwrap();
        assert_eq!(back.mu, fm.mu);
        assert_eq!(back.triplets(), fm.triplets());
        let f: Vec<f64> = (0..g.n).map(|i| (i as f64).sqrt()).collect();
        assert_eq!(
            dirichlet_form(&back, &f).unwrap().to_bits(),
            dirichlet_form(&fm, &f).unwrap().to_bits()
        );
        assert_eq!(back.export(), (tri, mu));
    }

    #[test]
    fn band_restriction_keeps_only_band_pairs() {
        let g = build_grid(1, 3.0, 0.1).unwrap();
        let fm = assemble_form(
            &g,
            &m(KernelKind::FiniteRange, 1.0),
            &PotentialSpec::constant(0.0, 1).unwrap(),
        )
        .unwrap();
        let band = fm.restricted_to_band(0.5, 1.0).unwrap();
        for (i, j, _) in band.triplets() {
            let r = (g.node(j)[0] - g.node(i)[0]).abs();
            assert!((0.5 - 1e-9..=1.0 + 1e-9).contains(&r));
        }
        assert!(!band.triplets().is_empty());
    }
}
