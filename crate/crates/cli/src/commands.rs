//! Pipelines behind each subcommand. Every reported number comes from a
//! library operation; this layer only arranges them into documents.

use jumpform::concentration::{
    c1_closed_form, c1_quadrature, exp_moment, moment_transform_log, sharpness_exponent_fit,
    FitTransform,
};
use jumpform::criteria::{
    build_envelope_table, check_poincare_criterion, check_super_pc_criterion,
    check_weighted_pc_criterion, lambda0, log_spaced, poincare_threshold, weak_pc_alpha,
    weighted_pc_weight, RateFunction, WeakVariant,
};
use jumpform::discretize::{assemble_form, build_grid};
use jumpform::lyapunov::{
    check_drift_finite_range, drift_constants, large_jump_generator_apply, LyapunovFn,
};
use jumpform::model::{normalizing_constant, Family, KernelKind, Measure};
use jumpform::spectral::{gap_stability_study, gap_study_weighted, Solver};
use jumpform::superpc::{
    compact_support_bound_with, empirical_super_pc_probe, gaussian_bumps,
    local_pc_constant_empirical, log_local_super_pc_rate, super_pc_violation_certificate,
};
use jumpform::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{BetaSpec, Command, RunConfig};

/// A CSV table; cells are already formatted.
pub struct Table {
    pub name: &'static str,
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

pub struct Outcome {
    pub json: Value,
    pub tables: Vec<Table>,
}

/// Shortest round-trip form, as in the JSON output.
fn num(v: f64) -> String {
    if v.is_finite() {
        serde_json::to_string(&v).expect("finite float")
    } else {
        format!("{v}")
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

pub fn error_value(e: &Error) -> Value {
    json!({ "error": e.name(), "message": e.to_string() })
}

/// Result as JSON, with failures recorded in place.
fn soft<T: Serialize>(r: Result<T>) -> Value {
    match r {
        Ok(v) => to_value(&v),
        Err(e) => error_value(&e),
    }
}

fn solver(cfg: &RunConfig) -> Solver {
    Solver::Auto {
        cap: cfg.numeric.dense_cap,
        tol: cfg.numeric.tol,
        max_iter: cfg.numeric.max_iter,
    }
}

fn measure(cfg: &RunConfig) -> Result<Measure> {
    normalizing_constant(&cfg.potential, cfg.numeric.tol.max(1e-12))
}

fn rate_function(cfg: &RunConfig) -> Result<RateFunction> {
    let n = &cfg.numeric;
    let radii = log_spaced(1.0, n.phi_table_max, n.phi_table_points);
    RateFunction::new(&cfg.potential, &cfg.model, n.c2, n.c3, &radii)
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    match cfg.numeric.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(|| dispatch(cfg)),
        None => dispatch(cfg),
    }
}

fn dispatch(cfg: &RunConfig) -> Result<Outcome> {
    let mut out = match cfg.command {
        Command::Criteria => criteria(cfg),
        Command::Gap => gap(cfg),
        Command::Lyapunov => lyapunov(cfg),
        Command::Superpc => superpc(cfg),
        Command::Concentration => concentration(cfg),
        Command::Report => report(cfg),
    }?;
    if let Value::Object(map) = &mut out.json {
        map.insert("command".into(), json!(cfg.command.name()));
        map.insert("config_hash".into(), json!(cfg.hash8()));
        map.insert("model".into(), to_value(&cfg.model));
        map.insert("potential".into(), to_value(&cfg.potential));
    }
    Ok(out)
}

fn criteria(cfg: &RunConfig) -> Result<Outcome> {
    let (p, m, n) = (&cfg.potential, &cfg.model, &cfg.numeric);
    let r = &n.r_grid;
    let poincare = check_poincare_criterion(p, m, r[0], r[r.len() - 1], r.len())?;
    let super_pc = check_super_pc_criterion(p, r)?;
    let weighted = check_weighted_pc_criterion(p, m, r)?;
    let meas = measure(cfg).ok();
    let table = build_envelope_table(p, meas.as_ref(), r, n.tol)?;

    let variant = match m.kernel {
        KernelKind::LargeJump => Some(WeakVariant::LargeJump),
        KernelKind::FiniteRange => Some(WeakVariant::FiniteRange),
        _ => None,
    };
    let weak: Vec<Value> = match (&meas, variant) {
        (Some(meas), Some(v)) => n
            .s_list
            .iter()
            .map(|&s| json!({ "s": s, "alpha": soft(weak_pc_alpha(&table, meas, m, v, s, n.tol)) }))
            .collect(),
        _ => Vec::new(),
    };

    let mut headers = vec!["r", "log_k", "log_K", "log_phi", "log_ratio"];
    if table.tail_mass.is_some() {
        headers.push("tail_mass");
    }
    let rows = (0..table.len())
        .map(|i| {
            let mut row = vec![
                num(table.radii[i]),
                num(table.log_k[i]),
                num(table.log_big_k[i]),
                num(table.log_phi[i]),
                num(table.log_ratio[i]),
            ];
            if let Some(t) = &table.tail_mass {
                row.push(num(t[i]));
            }
            row
        })
        .collect();
    Ok(Outcome {
        json: json!({
            "threshold": poincare_threshold(m.d, m.alpha),
            "lambda0": lambda0(m.d, m.alpha),
            "normalizing_constant": meas.as_ref().map(|x| x.c_v),
            "verdicts": [poincare, super_pc, weighted],
            "weak_poincare": weak,
        }),
        tables: vec![Table {
            name: "envelopes",
            headers,
            rows,
        }],
    })
}

fn gap(cfg: &RunConfig) -> Result<Outcome> {
    let (p, m, n) = (&cfg.potential, &cfg.model, &cfg.numeric);
    let study = gap_stability_study(p, m, &n.l_list, n.h, solver(cfg))?;
    let weighted = if m.kernel == KernelKind::LargeJump {
        let w = |x: &[f64]| weighted_pc_weight(p, m, x);
        Some(gap_study_weighted(
            p,
            m,
            &n.l_list,
            n.h,
            solver(cfg),
            Some(w),
        )?)
    } else {
        None
    };
    let mut headers = vec!["L", "n", "lambda1", "residual", "method"];
    if weighted.is_some() {
        headers.push("weighted_lambda1");
    }
    let rows = study
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = vec![
                num(r.half_width),
                r.n.to_string(),
                num(r.lambda1),
                num(r.residual),
                format!("{:?}", r.method),
            ];
            if let Some(w) = &weighted {
                row.push(num(w.rows[i].lambda1));
            }
            row
        })
        .collect();
    Ok(Outcome {
        json: json!({ "study": study, "weighted_study": weighted }),
        tables: vec![Table {
            name: "gaps",
            headers,
            rows,
        }],
    })
}

fn lyapunov(cfg: &RunConfig) -> Result<Outcome> {
    let (p, m, n) = (&cfg.potential, &cfg.model, &cfg.numeric);
    let constants = drift_constants(m.d, m.alpha)?;
    if m.kernel == KernelKind::LargeJump {
        let phi = LyapunovFn::PowerAbs {
            alpha0: n.alpha0.unwrap_or(0.5 * m.alpha),
        };
        let growth = phi
            .growth()
            .expect("power Lyapunov function has polynomial growth");
        let f = |y: &[f64]| phi.eval(y);
        let mut rows = Vec::new();
        let mut values = Vec::new();
        for &r in &n.r_grid {
            let mut x = vec![0.0; m.d];
            x[0] = r;
            let v = large_jump_generator_apply(
                p,
                m,
                &f,
                growth,
                &x,
                n.tol,
                n.jump_cutoff.max(2.0 * r),
            )?;
            let ratio = v.value / phi.eval_radial(r);
            rows.push(vec![num(r), num(v.value), num(v.remainder), num(ratio)]);
            values.push(
                json!({ "r": r, "value": v.value, "remainder": v.remainder, "ratio": ratio }),
            );
        }
        let negative_from = n
            .r_grid
            .iter()
            .zip(&values)
            .rev()
            .take_while(|(_, v)| {
                v["value"].as_f64().unwrap_or(0.0) + v["remainder"].as_f64().unwrap_or(0.0) < 0.0
            })
            .last()
            .map(|(r, _)| *r);
        return Ok(Outcome {
            json: json!({
                "drift_constants": constants,
                "lyapunov_function": phi,
                "large_jump_generator": values,
                "certified_negative_from": negative_from,
            }),
            tables: vec![Table {
                name: "generator",
                headers: vec!["r", "value", "remainder", "value_over_phi"],
                rows,
            }],
        });
    }
    let report = check_drift_finite_range(p, m, &n.r_grid, LyapunovFn::ExpAbs)?;
    let rows = (0..report.x_samples.len())
        .map(|i| {
            vec![
                num(report.x_samples[i]),
                num(report.lhs[i]),
                num(report.envelope[i]),
                num(report.rhs_envelope[i]),
                report.satisfied[i].to_string(),
            ]
        })
        .collect();
    Ok(Outcome {
        json: json!({ "drift_constants": constants, "drift": report }),
        tables: vec![Table {
            name: "drift",
            headers: vec!["r", "lhs", "envelope", "rhs_envelope", "satisfied"],
            rows,
        }],
    })
}

fn certificate(cfg: &RunConfig) -> Value {
    let n = &cfg.numeric;
    let beta = n.beta;
    soft(super_pc_violation_certificate(
        &cfg.potential,
        &cfg.model,
        &|s| beta.eval(s),
        n.domain_radius,
    ))
}

fn superpc(cfg: &RunConfig) -> Result<Outcome> {
    let (p, m, n) = (&cfg.potential, &cfg.model, &cfg.numeric);
    let mut tables = Vec::new();

    let rf = rate_function(cfg);
    let mut rate_rows = Vec::new();
    let rate: Value = match &rf {
        Ok(rf) => n
            .s_list
            .iter()
            .map(|&s| {
                let v = rf.log_rate(s);
                if let Ok(lb) = &v {
                    rate_rows.push(vec![num(s), num(*lb)]);
                }
                json!({ "s": s, "log_beta": soft(v) })
            })
            .collect(),
        Err(e) => error_value(e),
    };
    tables.push(Table {
        name: "rate",
        headers: vec!["s", "log_beta"],
        rows: rate_rows,
    });

    let mut local_rows = Vec::new();
    for &r in n.r_grid.iter().filter(|&&r| r > 1.0) {
        for &s in &n.s_list {
            local_rows.push(vec![
                num(r),
                num(s),
                num(log_local_super_pc_rate(p, m, r, s, n.c2)?),
            ]);
        }
    }
    tables.push(Table {
        name: "local-rate",
        headers: vec!["r", "s", "log_beta_r"],
        rows: local_rows,
    });

    let local_pc = if n.local_r.is_empty() {
        Value::Null
    } else {
        let t = local_pc_constant_empirical(p, m, &n.local_r, n.h)?;
        tables.push(Table {
            name: "local-pc",
            headers: vec!["r", "nodes", "gap", "constant", "log_envelope"],
            rows: t
                .rows
                .iter()
                .map(|r| {
                    vec![
                        num(r.r),
                        r.nodes.to_string(),
                        num(r.gap),
                        num(r.constant),
                        num(r.log_envelope),
                    ]
                })
                .collect(),
        });
        to_value(&t)
    };

    let probe = probe(cfg).map(|rows| {
        tables.push(Table {
            name: "probe",
            headers: vec!["s", "lower_bound", "best_index"],
            rows: rows
                .iter()
                .map(|r| vec![num(r.s), num(r.lower_bound), r.best_index.to_string()])
                .collect(),
        });
        rows
    });

    let (bound, cert) = if m.kernel == KernelKind::LargeJump {
        (
            soft(
                measure(cfg).and_then(|meas| compact_support_bound_with(&meas, m, n.domain_radius)),
            ),
            certificate(cfg),
        )
    } else {
        let e = error_value(&Error::UnsupportedKernel(format!("{:?}", m.kernel)));
        (e.clone(), e)
    };
    Ok(Outcome {
        json: json!({
            "rate": rate,
            "local_poincare": local_pc,
            "probe": soft(probe),
            "compact_support_bound": bound,
            "certificate": cert,
        }),
        tables,
    })
}

fn probe(cfg: &RunConfig) -> Result<Vec<jumpform::superpc::ProbeRow>> {
    let (p, m, n) = (&cfg.potential, &cfg.model, &cfg.numeric);
    let g = build_grid(m.d, n.l, n.h)?;
    let fm = assemble_form(&g, m, p)?;
    let centers: Vec<Vec<f64>> = [0.0, 0.25, 0.5]
        .iter()
        .map(|t| {
            let mut c = vec![0.0; m.d];
            c[0] = t * n.l;
            c
        })
        .collect();
    let widths = [n.h, 2.0 * n.h, 4.0 * n.h, 0.5, 1.0];
    let family = gaussian_bumps(&fm, &centers, &widths)?;
    empirical_super_pc_probe(&fm, &n.s_list, &family)
}

fn log_beta_of(beta: BetaSpec) -> impl Fn(f64) -> f64 {
    move |ls: f64| match beta {
        // log(1 + e^{-ls}) without overflow
        BetaSpec::OnePlusInverse => {
            if ls < 0.0 {
                -ls + ls.exp().ln_1p()
            } else {
                (-ls).exp().ln_1p()
            }
        }
        BetaSpec::Constant(c) => c.ln(),
    }
}

fn concentration(cfg: &RunConfig) -> Result<Outcome> {
    let (m, n) = (&cfg.model, &cfg.numeric);
    let meas = measure(cfg)?;
    let moments = n
        .moment_lambdas
        .iter()
        .map(|&l| exp_moment(&meas, l))
        .collect::<Result<Vec<_>>>()?;
    let c0 = exp_moment(&meas, 1.0)?.c0;
    let c1 = json!({
        "closed_form": c1_closed_form(m.d, m.alpha),
        "quadrature": soft(c1_quadrature(m.d, m.alpha)),
    });
    let transform: Value = match c0 {
        Some(c0) => [0.0, 0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&r| json!({ "r": r, "F": soft(moment_transform_log(&log_beta_of(n.beta), c0, m.d, m.alpha, r)) }))
            .collect(),
        None => json!({ "error": "Diverges", "message": "exponential moment of order 1 diverges, c0 undefined" }),
    };

    let (tr, expected) = match cfg.potential.family {
        Family::Power { delta, .. } if delta > 1.0 => {
            (FitTransform::LogVsLogLog, Some(delta / (delta - 1.0)))
        }
        Family::LogWeighted { theta } if theta > 0.0 => {
            (FitTransform::LogLogVsLog, Some(1.0 / theta))
        }
        _ => (FitTransform::LogVsLogLog, None),
    };
    let mut rows = Vec::new();
    let fit = rate_function(cfg).and_then(|rf| {
        let samples = n
            .s_list
            .iter()
            .map(|&s| Ok((s, rf.log_rate(s)?)))
            .collect::<Result<Vec<_>>>()?;
        let fit = sharpness_exponent_fit(&samples, tr)?;
        for (i, &(s, lb)) in samples.iter().enumerate() {
            rows.push(vec![
                num(s),
                num(lb),
                num(fit.x[i]),
                num(fit.y[i]),
                num(fit.residuals[i]),
            ]);
        }
        Ok(fit)
    });
    Ok(Outcome {
        json: json!({
            "normalizing_constant": meas.c_v,
            "moments": moments,
            "c0": c0,
            "c1": c1,
            "moment_transform": transform,
            "exponent_fit": {
                "transform": tr,
                "expected_slope": expected,
                "slope": fit.as_ref().ok().map(|f| f.slope),
                "intercept": fit.as_ref().ok().map(|f| f.intercept),
                "error": fit.as_ref().err().map(error_value),
            },
        }),
        tables: vec![Table {
            name: "fit",
            headers: vec!["s", "log_beta", "x", "y", "residual"],
            rows,
        }],
    })
}

fn report(cfg: &RunConfig) -> Result<Outcome> {
    let mut tables = Vec::new();
    let mut section = |r: Result<Outcome>| match r {
        Ok(o) => {
            tables.extend(o.tables);
            o.json
        }
        Err(e) => error_value(&e),
    };
    let criteria = section(criteria(cfg));
    let gap = section(gap(cfg));
    let drift = section(lyapunov(cfg));
    let cert = if cfg.model.kernel == KernelKind::LargeJump {
        certificate(cfg)
    } else {
        Value::Null
    };
    Ok(Outcome {
        json: json!({ "criteria": criteria, "gap": gap, "drift": drift, "certificate": cert }),
        tables,
    })
}

/// Builds the grid the gap command would use first, so oversize grids fail
/// before any work.
pub fn check_grids(cfg: &RunConfig) -> std::result::Result<(), String> {
    let (m, n) = (&cfg.model, &cfg.numeric);
    if matches!(cfg.command, Command::Gap | Command::Report) {
        for &l in &n.l_list {
            build_grid(m.d, l, n.h).map_err(|e| format!("grid for L = {l}: {e}"))?;
        }
    }
    Ok(())
}
