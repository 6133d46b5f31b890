//! Acceptance checks. Each test writes one `ACCEPTANCE <n> PASS|FAIL` line
//! to stderr (outside the harness capture) before asserting.

use std::io::Write;
use std::time::Instant;

use jumpform::concentration::{
    c1_closed_form, c1_quadrature, exp_moment, sharpness_exponent_fit, FitTransform,
};
use jumpform::criteria::{
    check_poincare_criterion, drift_ratio, lambda0, log_spaced, RateFunction, Verdict,
};
use jumpform::discretize::{
    assemble_form, build_grid, dirichlet_form, mu_mean, mu_norm_sq, FormMatrix,
};
use jumpform::lyapunov::{
    check_drift_finite_range, drift_constants, lyapunov_rayleigh_bound, LyapunovFn,
};
use jumpform::model::{normalizing_constant, KernelKind, ModelSpec, PotentialSpec};
use jumpform::spectral::{
    gap_stability_study, gap_study_weighted, spectral_gap_dense, spectral_gap_lanczos, Solver,
    StudyVerdict,
};
use jumpform::superpc::{compact_support_bound, super_pc_violation_certificate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, ok: bool, start: Instant, detail: &str) {
    let mut e = std::io::stderr().lock();
    let _ = writeln!(
        e,
        "ACCEPTANCE {n:>2} {} ({:.2}s): {detail}",
        if ok { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
}

fn model(d: usize, alpha: f64, k: KernelKind) -> ModelSpec {
    ModelSpec::new(d, alpha, k).unwrap()
}

#[test]
fn criterion_01_closed_form_constants() {
    let start = Instant::now();
    let mut c1_worst: f64 = 0.0;
    for d in [1, 2] {
        for a in [0.5, 1.0, 1.5] {
            let q = c1_quadrature(d, a).unwrap();
            let c = c1_closed_form(d, a);
            c1_worst = c1_worst.max((q - c).abs() / c);
        }
    }
    let c1_ok = c1_worst <= 1e-6
        && (c1_closed_form(1, 1.0) - 2.0).abs() < 1e-12
        && (c1_closed_form(2, 1.0) - 2.0 * std::f64::consts::PI).abs() < 1e-12;

    let mut violations = Vec::new();
    for d in [1, 2, 3] {
        for k in 1..=7 {
            let a = 0.25 * k as f64;
            let l = drift_constants(d, a).unwrap();
            if !(l.ratio < l.threshold) {
                violations.push(format!("d={d} a={a}: {:.1} >= {:.1}", l.ratio, l.threshold));
            }
        }
    }
    let l11 = drift_constants(1, 1.0).unwrap();
    let near = (l11.ratio - 20.8).abs() < 0.1 && (l11.threshold - 34.936).abs() < 1e-3;
    let ok = c1_ok && violations.is_empty() && near;
    report(
        1,
        ok,
        start,
        &format!(
            "c1 worst rel err {c1_worst:.1e}; d=1 a=1 ratio {:.3} vs threshold {:.3}; {} of 21 (d, alpha) pairs violate 2c1/c2 < threshold [{}]",
            l11.ratio,
            l11.threshold,
            violations.len(),
            violations.join("; ")
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_02_linear_threshold() {
    let start = Instant::now();
    let m = model(1, 1.0, KernelKind::FiniteRange);
    let l0 = lambda0(1, 1.0);
    let want = 2.0 * (8.0 * (std::f64::consts::E + 0.5f64.exp())).ln();
    let mut ok = (l0 - want).abs() < 1e-12 && (l0 - 7.107).abs() < 1e-3;
    let mut verdicts = Vec::new();
    for (lam, expect) in [
        (8.0, Verdict::Pass),
        (10.0, Verdict::Pass),
        (15.0, Verdict::Pass),
        (1.0, Verdict::Fail),
        (3.0, Verdict::Fail),
        (7.0, Verdict::Fail),
    ] {
        let p = PotentialSpec::linear(lam, 1).unwrap();
        let v = check_poincare_criterion(&p, &m, 2.0, 50.0, 49).unwrap();
        ok &= v.verdict == expect;
        verdicts.push(format!("{lam}:{:?}", v.verdict));
    }
    let mut worst: f64 = 0.0;
    for lam in [2.0, 8.0, 15.0] {
        let p = PotentialSpec::linear(lam, 1).unwrap();
        for r in log_spaced(1.0, 100.0, 20) {
            let v = drift_ratio(&p, r).unwrap();
            worst = worst.max((v / (lam / 2.0).exp() - 1.0).abs());
        }
    }
    ok &= worst <= 1e-10;
    report(
        2,
        ok,
        start,
        &format!(
            "lambda0 {l0:.4}; verdicts {}; drift ratio worst rel err {worst:.1e}",
            verdicts.join(" ")
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_03_sharpness_exponents() {
    let start = Instant::now();
    let radii = log_spaced(1.0, 1e15, 600);
    let s = log_spaced(1e-6, 1e-1, 25);
    let mut ok = true;
    let mut lines = Vec::new();
    let cases = [
        (
            PotentialSpec::power(2.0, 1).unwrap(),
            FitTransform::LogVsLogLog,
            2.0,
            0.1,
            "delta=2",
        ),
        (
            PotentialSpec::power(3.0, 1).unwrap(),
            FitTransform::LogVsLogLog,
            1.5,
            0.1,
            "delta=3",
        ),
        (
            PotentialSpec::log_weighted(1.0, 1).unwrap(),
            FitTransform::LogLogVsLog,
            1.0,
            0.1,
            "theta=1",
        ),
        (
            PotentialSpec::log_weighted(2.0, 1).unwrap(),
            FitTransform::LogLogVsLog,
            0.5,
            0.05,
            "theta=2",
        ),
    ];
    let m = model(1, 1.0, KernelKind::FiniteRange);
    for (p, tr, expect, tol, name) in cases {
        let rf = RateFunction::new(&p, &m, 1.0, 1.0, &radii).unwrap();
        let samples: Vec<(f64, f64)> = s.iter().map(|&s| (s, rf.log_rate(s).unwrap())).collect();
        let fit = sharpness_exponent_fit(&samples, tr).unwrap();
        let good = (fit.slope - expect).abs() <= tol;
        ok &= good;
        lines.push(format!(
            "{name} slope {:.3} (want {expect} +- {tol}){}",
            fit.slope,
            if good { "" } else { " MISS" }
        ));
    }
    report(3, ok, start, &lines.join("; "));
    assert!(ok);
}

fn spectral_forms() -> Vec<FormMatrix> {
    let mk = |d, a, k, p: PotentialSpec, l, h| {
        let g = build_grid(d, l, h).unwrap();
        assemble_form(&g, &model(d, a, k), &p).unwrap()
    };
    vec![
        mk(
            1,
            1.0,
            KernelKind::FiniteRange,
            PotentialSpec::linear(2.0, 1).unwrap(),
            5.0,
            0.05,
        ),
        mk(
            1,
            0.5,
            KernelKind::FiniteRange,
            PotentialSpec::power(2.0, 1).unwrap(),
            4.0,
            0.02,
        ),
        mk(
            1,
            1.5,
            KernelKind::LargeJump,
            PotentialSpec::poly_tail(1.5, 1).unwrap(),
            10.0,
            0.1,
        ),
        mk(
            1,
            1.0,
            KernelKind::Full,
            PotentialSpec::log_weighted(1.0, 1).unwrap(),
            6.0,
            0.05,
        ),
        mk(
            1,
            1.0,
            KernelKind::Tempered,
            PotentialSpec::linear(1.0, 1).unwrap(),
            8.0,
            0.1,
        ),
        mk(
            1,
            0.75,
            KernelKind::LargeJump,
            PotentialSpec::linear(1.0, 1).unwrap(),
            12.0,
            0.05,
        ),
        mk(
            2,
            1.0,
            KernelKind::FiniteRange,
            PotentialSpec::linear(2.0, 2).unwrap(),
            2.0,
            0.2,
        ),
        mk(
            2,
            1.0,
            KernelKind::Full,
            PotentialSpec::power(2.0, 2).unwrap(),
            2.0,
            0.25,
        ),
        mk(
            2,
            0.5,
            KernelKind::LargeJump,
            PotentialSpec::poly_tail(1.0, 2).unwrap(),
            5.0,
            0.5,
        ),
        mk(
            1,
            1.25,
            KernelKind::FiniteRange,
            PotentialSpec::constant(0.0, 1).unwrap(),
            3.0,
            0.02,
        ),
    ]
}

#[test]
fn criterion_04_spectral_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut gap_err: f64 = 0.0;
    let mut balance_err: f64 = 0.0;
    let mut const_ok = true;
    let mut rq_ok = true;
    let forms = spectral_forms();
    for fm in &forms {
        assert!(fm.n() <= 500, "n = {}", fm.n());
        let dense = spectral_gap_dense(fm).unwrap();
        let lan = spectral_gap_lanczos(fm, 1e-12, 20_000).unwrap();
        gap_err = gap_err.max((dense.lambda1 - lan.lambda1).abs() / dense.lambda1);
        for i in 0..fm.n() {
            fm.for_each_neighbor(i, |j, k| {
                let a = fm.mu[i] * fm.generator_rate(i, j, k);
                let b = fm.mu[j] * fm.generator_rate(j, i, k);
                balance_err = balance_err.max((a - b).abs() / a.abs().max(b.abs()));
            });
        }
        const_ok &= dirichlet_form(fm, &vec![1.0; fm.n()]).unwrap() == 0.0;
        for _ in 0..5 {
            let mut f: Vec<f64> = (0..fm.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean = mu_mean(fm, &f);
            f.iter_mut().for_each(|v| *v -= mean);
            let q = dirichlet_form(fm, &f).unwrap() / mu_norm_sq(fm, &f);
            rq_ok &= q >= dense.lambda1 * (1.0 - 1e-10);
        }
    }
    let ok = gap_err <= 1e-8 && balance_err <= 1e-12 && const_ok && rq_ok;
    report(
        4,
        ok,
        start,
        &format!(
            "{} forms; dense vs Lanczos worst rel {gap_err:.1e}; detailed balance worst rel {balance_err:.1e}; constants zero {const_ok}; 50 Rayleigh quotients above gap {rq_ok}",
            forms.len()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_05_kernel_additivity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut kappa_exact = true;
    let mut dominated = true;
    for (d, l, h) in [(1, 6.0, 0.05), (2, 2.5, 0.25)] {
        let p = PotentialSpec::linear(1.5, d).unwrap();
        let g = build_grid(d, l, h).unwrap();
        let form = |k, delta| {
            let m = model(d, 1.0, k).with_delta(delta).unwrap();
            assemble_form(&g, &m, &p).unwrap()
        };
        let (fr, lj, full) = (
            form(KernelKind::FiniteRange, 0.0),
            form(KernelKind::LargeJump, 0.0),
            form(KernelKind::Full, 0.0),
        );
        let temp: Vec<FormMatrix> = [0.1, 1.0, 5.0]
            .iter()
            .map(|&dl| form(KernelKind::Tempered, dl))
            .collect();
        let (tf, tr, tl) = (full.triplets(), fr.triplets(), lj.triplets());
        let mut merged: std::collections::HashMap<(usize, usize), f64> =
            std::collections::HashMap::new();
        for &(i, j, k) in tr.iter().chain(&tl) {
            *merged.entry((i, j)).or_default() += k;
        }
        kappa_exact &=
            merged.len() == tf.len() && tf.iter().all(|&(i, j, k)| merged.get(&(i, j)) == Some(&k));
        for _ in 0..50 {
            let f: Vec<f64> = (0..g.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let e_full = dirichlet_form(&full, &f).unwrap();
            let sum = dirichlet_form(&fr, &f).unwrap() + dirichlet_form(&lj, &f).unwrap();
            worst = worst.max((sum - e_full).abs() / e_full);
            for t in &temp {
                dominated &= dirichlet_form(t, &f).unwrap() <= e_full;
            }
        }
    }
    let ok = kappa_exact && worst <= 1e-12 && dominated;
    report(
        5,
        ok,
        start,
        &format!("pair intensities add exactly {kappa_exact}; 100 random f form sum worst rel {worst:.1e}; tempered below full {dominated}"),
    );
    assert!(ok);
}

#[test]
fn criterion_06_large_jump_dichotomy() {
    let start = Instant::now();
    let ls = [20.0, 30.0, 40.0];
    let a = gap_stability_study(
        &PotentialSpec::poly_tail(1.5, 1).unwrap(),
        &model(1, 0.5, KernelKind::LargeJump),
        &ls,
        0.1,
        Solver::default(),
    )
    .unwrap();
    let b = gap_stability_study(
        &PotentialSpec::poly_tail(0.5, 1).unwrap(),
        &model(1, 1.5, KernelKind::LargeJump),
        &ls,
        0.1,
        Solver::default(),
    )
    .unwrap();
    let gaps = |s: &jumpform::spectral::GapStudy| {
        s.rows
            .iter()
            .map(|r| format!("{:.4}", r.lambda1))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let drop = b.rows[0].lambda1 / b.rows[2].lambda1;
    let ok =
        a.verdict == StudyVerdict::Stabilizes && b.verdict == StudyVerdict::Decays && drop >= 2.0;
    report(
        6,
        ok,
        start,
        &format!(
            "alpha=0.5 eps=1.5 gaps [{}] {:?}; alpha=1.5 eps=0.5 gaps [{}] {:?}, drop {drop:.2}x",
            gaps(&a),
            a.verdict,
            gaps(&b),
            b.verdict
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_07_weighted_poincare() {
    let start = Instant::now();
    let p = PotentialSpec::poly_tail(1.5, 1).unwrap();
    let m = model(1, 1.0, KernelKind::LargeJump);
    let w = |x: &[f64]| jumpform::criteria::weighted_pc_weight(&p, &m, x);
    let s =
        gap_study_weighted(&p, &m, &[10.0, 20.0, 40.0], 0.1, Solver::default(), Some(w)).unwrap();
    let g: Vec<f64> = s.rows.iter().map(|r| r.lambda1).collect();
    let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = g.iter().copied().fold(0.0, f64::max);
    let variation = (hi - lo) / hi;
    let ok = lo > 0.0 && variation < 0.25;
    report(
        7,
        ok,
        start,
        &format!("weighted gaps {g:.4?}, variation {:.1}%", 100.0 * variation),
    );
    assert!(ok);
}

#[test]
fn criterion_08_impossibility_certificate() {
    let start = Instant::now();
    let p = PotentialSpec::linear(1.0, 1).unwrap();
    let m = model(1, 1.0, KernelKind::LargeJump);
    let mut ok = true;
    let mut lines = Vec::new();
    for (name, beta) in [
        ("1+1/s", &(|s: f64| 1.0 + 1.0 / s) as &dyn Fn(f64) -> f64),
        ("1e6", &|_: f64| 1e6),
    ] {
        let c = super_pc_violation_certificate(&p, &m, &beta, 1.0).unwrap();
        let good = c.ball_mass <= 1.0 / (4.0 * c.beta_at_s_star) * (1.0 + 1e-10)
            && c.mu_abs_f0.powi(2) <= c.cauchy_schwarz_bound * (1.0 + 1e-10)
            && c.cauchy_schwarz_bound <= c.lhs_mu_f2 / (4.0 * c.beta_at_s_star) * (1.0 + 1e-10)
            && c.contradiction_factor <= 0.5 + 1e-10
            && c.lhs_mu_f2 > c.rhs_bound;
        ok &= good;
        lines.push(format!(
            "beta={name}: r0 {:.3e}, mass {:.3e}, factor {:.4}",
            c.ball_radius, c.ball_mass, c.contradiction_factor
        ));
    }
    let cvd = compact_support_bound(&p, &m, 1.0).unwrap();
    ok &= (cvd - 2.0 * (2.0 + 2.0 * std::f64::consts::E)).abs() < 1e-8;

    let g = build_grid(1, 8.0, 0.05).unwrap();
    let fm = assemble_form(&g, &m, &p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let f: Vec<f64> = (0..g.n)
            .map(|i| {
                if g.node_radius(i) <= 1.0 {
                    rng.gen_range(-1.0..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        worst = worst.max(dirichlet_form(&fm, &f).unwrap() / mu_norm_sq(&fm, &f));
    }
    ok &= worst <= cvd;
    report(
        8,
        ok,
        start,
        &format!(
            "{}; C_VD {cvd:.4}; max ratio over 200 supported f {worst:.4}",
            lines.join("; ")
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_09_discrete_lyapunov_rayleigh() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let forms = [
        (
            PotentialSpec::linear(3.0, 1).unwrap(),
            build_grid(1, 6.0, 0.05).unwrap(),
        ),
        (
            PotentialSpec::power(2.0, 2).unwrap(),
            build_grid(2, 2.5, 0.25).unwrap(),
        ),
    ];
    let mut bad = 0;
    let mut count = 0;
    for (p, g) in &forms {
        let fm = assemble_form(g, &model(g.d, 1.0, KernelKind::FiniteRange), p).unwrap();
        for _ in 0..50 {
            let f: Vec<f64> = (0..g.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let phi: Vec<f64> = (0..g.n)
                .map(|_| rng.gen_range(-3.0f64..3.0).exp())
                .collect();
            let (lhs, rhs) = lyapunov_rayleigh_bound(&fm, &phi, &f).unwrap();
            if lhs > rhs + 1e-12 * rhs.abs() {
                bad += 1;
            }
            count += 1;
        }
    }
    let ok = bad == 0;
    report(
        9,
        ok,
        start,
        &format!("{bad} of {count} random (f, phi) pairs violate the bound"),
    );
    assert!(ok);
}

#[test]
fn criterion_10_exponential_moments() {
    let start = Instant::now();
    let meas = normalizing_constant(&PotentialSpec::linear(2.0, 1).unwrap(), 1e-12).unwrap();
    let mut worst: f64 = 0.0;
    for s in [0.2, 1.0, 1.8] {
        let v = exp_moment(&meas, s).unwrap().value.unwrap();
        worst = worst.max((v / (2.0 / (2.0 - s)) - 1.0).abs());
    }
    let div = exp_moment(&meas, 2.5).unwrap().diverges;
    let ok = worst <= 1e-6 && div;
    report(
        10,
        ok,
        start,
        &format!("worst rel err {worst:.1e}; s=2.5 diverges {div}"),
    );
    assert!(ok);
}

#[test]
fn criterion_11_drift() {
    let start = Instant::now();
    let m = model(1, 1.0, KernelKind::FiniteRange);
    let radii: Vec<f64> = (3..=30).map(|r| r as f64).collect();
    let run =
        |p: PotentialSpec| check_drift_finite_range(&p, &m, &radii, LyapunovFn::ExpAbs).unwrap();
    let a = run(PotentialSpec::linear(10.0, 1).unwrap());
    let b = run(PotentialSpec::power(2.0, 1).unwrap());
    let c = run(PotentialSpec::linear(1.0, 1).unwrap());
    let holds = |r: &jumpform::lyapunov::DriftReport| {
        r.drift_holds
            && r.x_samples
                .iter()
                .zip(&r.satisfied)
                .all(|(&x, &s)| x < r.r0_fit || s)
    };
    let ok = holds(&a) && holds(&b) && !c.drift_holds;
    report(
        11,
        ok,
        start,
        &format!(
            "linear 10: c1 {:.3e} from r0 {}; power 2: c1 {:.3e} from r0 {}; linear 1 drift found {}",
            a.c1_fit, a.r0_fit, b.c1_fit, b.r0_fit, c.drift_holds
        ),
    );
    assert!(ok);
}
