//! One handler per subcommand. Exit code convention: 0 success,
//! 2 mathematical failure with a certificate in the report, 1 usage or
//! format errors (raised before these handlers run).

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde_json::json;

use polyann::connection::{
    build_unipotent, canonical_gauge_1var, eta_convergence_check, iterated_gauge,
    taylor_cocycle_check, taylor_transport, LogConnection,
};
use polyann::padic::{Exp, NormExp, Prime, Rat};
use polyann::series::{gauss_norm, RadiusTuple, TruncatedSeries};
use polyann::tate::{norm_controlled_reduce, replay_trace, IdealBasis, TateError};
use polyann::unipotence::{
    dl_closed_form, dl_operator, extract_horizontal, horizontal_limit, unipotent_filtration,
    LimitStrategy, UnipotenceError,
};

use crate::problem::{build_connection, build_radius, build_series, build_tate, parse_exp, ProblemFile, ProblemKind};
use crate::report::{
    norm_exp_value, rat_matrix_value, rat_value, series_matrix_value, series_value, tate_value,
    Report,
};

pub struct Flags {
    pub prime: Option<u64>,
    pub trunc: Option<i64>,
    pub var: usize,
    pub eta_exp: Option<Exp>,
    pub rho_exp: Option<Exp>,
    pub radius_exp: Exp,
    pub budget: Option<usize>,
    pub order: usize,
    pub strategy: LimitStrategy,
    pub section: Option<String>,
}

pub enum CommandError {
    Usage(String),
}

type Outcome = Result<(Report, i32), CommandError>;

fn usage(msg: impl Into<String>) -> CommandError {
    CommandError::Usage(msg.into())
}

fn prime_of(file: &ProblemFile, flags: &Flags) -> Result<Prime, CommandError> {
    let p = flags.prime.unwrap_or(file.prime);
    Prime::new(p).map_err(|e| usage(format!("prime: {}", e)))
}

fn connection_of(
    file: &ProblemFile,
    flags: &Flags,
) -> Result<LogConnection, CommandError> {
    if file.kind != ProblemKind::Connection {
        return Err(usage("this command requires a connection problem"));
    }
    let spec = file
        .connection
        .as_ref()
        .ok_or_else(|| usage("missing connection payload"))?;
    build_connection(spec, flags.trunc).map_err(usage)
}

fn default_budget(conn: &LogConnection, flags: &Flags) -> usize {
    flags.budget.unwrap_or_else(|| {
        let t = conn
            .window()
            .upper()
            .iter()
            .copied()
            .max()
            .unwrap_or(0)
            .max(0) as usize;
        2 * (t + conn.rank())
    })
}

fn parse_section(
    conn: &LogConnection,
    flags: &Flags,
) -> Result<Option<Vec<TruncatedSeries>>, CommandError> {
    let Some(raw) = &flags.section else {
        return Ok(None);
    };
    let specs: Vec<Vec<crate::problem::TermSpec>> =
        serde_json::from_str(raw).map_err(|e| usage(format!("--section: {}", e)))?;
    if specs.len() != conn.rank() {
        return Err(usage(format!(
            "--section must list {} coordinate series",
            conn.rank()
        )));
    }
    let window = crate::problem::WindowSpec {
        lower: conn.window().lower().to_vec(),
        upper: conn.window().upper().to_vec(),
    };
    let mut out = Vec::with_capacity(specs.len());
    for terms in &specs {
        out.push(build_series(&window, terms, None).map_err(usage)?);
    }
    Ok(Some(out))
}

pub fn validate(file: &ProblemFile, flags: &Flags) -> Outcome {
    let p = prime_of(file, flags)?;
    let mut report = Report::new("validate");
    report.set("prime", json!(p.get()));
    match file.kind {
        ProblemKind::Connection => {
            let conn = connection_of(file, flags)?;
            report.set("rank", json!(conn.rank()));
            report.set("num_vars", json!(conn.num_vars()));
            let integ = conn.integrability_report(p);
            let pairs: Vec<_> = integ
                .pairs
                .iter()
                .map(|d| {
                    json!({
                        "left": d.left + 1,
                        "right": d.right + 1,
                        "defect_norm_exp": format!("{}", d.defect_norm_exp),
                        "vanishes": d.vanishes,
                    })
                })
                .collect();
            report.set("integrability_pairs", json!(pairs));
            report.set("integrable", json!(integ.pass));
            if let Some(eta) = flags.eta_exp {
                let radii = RadiusTuple::uniform(conn.num_vars(), flags.radius_exp);
                // each derivative order consumes one unit of a power-series
                // window, so the order budget is capped by the window
                let window_cap = conn
                    .window()
                    .upper()
                    .iter()
                    .zip(conn.window().lower())
                    .filter(|(_, &lo)| lo >= 0)
                    .map(|(&hi, _)| hi.max(0) as usize)
                    .min()
                    .unwrap_or(usize::MAX);
                let budget = default_budget(&conn, flags).min(window_cap).max(2);
                let certified = eta_check_on_basis(p, &conn, eta, &radii, budget)
                    .map_err(usage)?;
                report.set("eta_exp", json!(format!("{}", eta)));
                report.set("eta_budget", json!(budget));
                report.set("eta_certified", json!(certified));
            }
            if integ.pass {
                Ok((report, 0))
            } else {
                report.fail();
                Ok((report, 2))
            }
        }
        ProblemKind::Series => {
            let spec = file.series.as_ref().expect("validated payload");
            let s = build_series(&spec.window, &spec.terms, flags.trunc).map_err(usage)?;
            report.set("num_vars", json!(s.num_vars()));
            report.set("num_terms", json!(s.num_terms()));
            report.set("series", series_value(&s));
            if let Some(exps) = &spec.radius_exps {
                let radii = build_radius(exps).map_err(usage)?;
                report.set("gauss_norm_exp", norm_exp_value(gauss_norm(p, &s, &radii)));
            }
            Ok((report, 0))
        }
        ProblemKind::Division => {
            let spec = file.division.as_ref().expect("validated payload");
            report.set("num_vars", json!(spec.num_vars));
            report.set("num_generators", json!(spec.basis.len()));
            Ok((report, 0))
        }
    }
}

pub fn residues(file: &ProblemFile, flags: &Flags) -> Outcome {
    let p = prime_of(file, flags)?;
    let conn = connection_of(file, flags)?;
    let mut report = Report::new("residues");
    report.set("prime", json!(p.get()));
    let mut items = Vec::new();
    for var in 0..conn.num_vars() {
        match conn.residue(var) {
            Ok(res) => items.push(json!({
                "var": var + 1,
                "matrix": rat_matrix_value(&res.matrix),
                "nilpotency_index": res.nilpotency,
                "has_nonconstant_part": res.has_nonconstant_part,
            })),
            Err(e) => items.push(json!({ "var": var + 1, "error": format!("{}", e) })),
        }
    }
    report.set("residues", json!(items));
    Ok((report, 0))
}

pub fn nilpotency(file: &ProblemFile, flags: &Flags) -> Outcome {
    let p = prime_of(file, flags)?;
    let conn = connection_of(file, flags)?;
    let mut report = Report::new("nilpotency");
    report.set("prime", json!(p.get()));
    let mut all_ok = true;
    let mut items = Vec::new();
    for var in 0..conn.num_vars() {
        match conn.residue(var) {
            Ok(res) => {
                if !res.is_nilpotent() {
                    all_ok = false;
                    items.push(json!({
                        "var": var + 1,
                        "nilpotent": false,
                        "certificate": {
                            "residue": rat_matrix_value(&res.matrix),
                            "power_checked": conn.rank(),
                        },
                    }));
                } else {
                    items.push(json!({
                        "var": var + 1,
                        "nilpotent": true,
                        "nilpotency_index": res.nilpotency,
                    }));
                }
            }
            Err(e) => {
                all_ok = false;
                items.push(json!({ "var": var + 1, "error": format!("{}", e) }));
            }
        }
    }
    report.set("residues", json!(items));
    if all_ok {
        Ok((report, 0))
    } else {
        report.fail();
        Ok((report, 2))
    }
}

fn math_fail(mut report: Report, key: &str, value: serde_json::Value) -> Outcome {
    report.fail();
    report.set(key, value);
    Ok((report, 2))
}

fn unipotence_certificate(e: &UnipotenceError) -> serde_json::Value {
    match e {
        UnipotenceError::NotUnipotent { var, residue, power_checked } => json!({
            "kind": "NotUnipotent",
            "var": var + 1,
            "residue": rat_matrix_value(residue),
            "power_checked": power_checked,
        }),
        UnipotenceError::NoStabilization { budget } => json!({
            "kind": "NoStabilization",
            "budget": budget,
        }),
        other => json!({ "kind": "Error", "message": format!("{}", other) }),
    }
}

pub fn gauge(file: &ProblemFile, flags: &Flags) -> Outcome {
    let p = prime_of(file, flags)?;
    let conn = connection_of(file, flags)?;
    let radii = RadiusTuple::uniform(conn.num_vars(), flags.radius_exp);
    let mut report = Report::new("gauge");
    match iterated_gauge(p, &conn, &radii) {
        Ok((g, data)) => {
            report.set("certified_radius_exp", json!(format!("{}", g.certified_radius_exp())));
            let mats: Vec<_> = data.nilpotents().iter().map(rat_matrix_value).collect();
            report.set("constant_matrices", json!(mats));
            report.set("gauge_matrix", series_matrix_value(g.matrix()));
            Ok((report, 0))
        }
        Err(e) => {
            let cert = unipotence_certificate(&UnipotenceError::from(e));
            math_fail(report, "certificate", cert)
        }
    }
}

pub fn filtration(file: &ProblemFile, flags: &Flags) -> Outcome {
    let p = prime_of(file, flags)?;
    let conn = connection_of(file, flags)?;
    let radii = RadiusTuple::uniform(conn.num_vars(), flags.radius_exp);
    let mut report = Report::new("filtration");
    match unipotent_filtration(p, &conn, &radii) {
        Ok(f) => {
            report.set("ranks", json!(f.ranks));
            report.set("basis", rat_matrix_value(&f.basis));
            let mats: Vec<_> = f.data.nilpotents().iter().map(rat_matrix_value).collect();
            report.set("adapted_matrices", json!(mats));
            report.set("gauge_matrix", series_matrix_value(f.gauge.matrix()));
            report.set(
                "certified_radius_exp",
                json!(format!("{}", f.gauge.certified_radius_exp())),
            );
            Ok((report, 0))
        }
        Err(e) => {
            let cert = unipotence_certificate(&e);
            math_fail(report, "certificate", cert)
        }
    }
}

pub fn horizontal(file: &ProblemFile, flags: &Flags) -> Outcome {
    let p = prime_of(file, flags)?;
    let conn = connection_of(file, flags)?;
    let budget = default_budget(&conn, flags);
    let mut report = Report::new("horizontal");
    report.set("budget", json!(budget));
    let outcome = match parse_section(&conn, flags)? {
        Some(section) => horizontal_limit(p, &conn, &section, flags.strategy, budget),
        None => extract_horizontal(p, &conn, budget),
    };
    match outcome {
        Ok(Some(section)) => {
            let coords: Vec<_> = section.iter().map(series_value).collect();
            report.set("section", json!(coords));
            report.set("null", json!(false));
            Ok((report, 0))
        }
        Ok(None) => {
            report.set("null", json!(true));
            Ok((report, 0))
        }
        Err(e) => {
            let cert = unipotence_certificate(&e);
            math_fail(report, "certificate", cert)
        }
    }
}

pub fn radius(file: &ProblemFile, flags: &Flags) -> Outcome {
    let p = prime_of(file, flags)?;
    let conn = connection_of(file, flags)?;
    if flags.var >= conn.num_vars() {
        return Err(usage(format!(
            "--var {} out of range (connection has {} variables)",
            flags.var + 1,
            conn.num_vars()
        )));
    }
    let radii = RadiusTuple::uniform(conn.num_vars(), flags.radius_exp);
    let mut report = Report::new("radius");
    match canonical_gauge_1var(p, &conn, flags.var, &radii) {
        Ok((g, data)) => {
            let t_max = conn.window().upper()[flags.var];
            // radius-exponent estimates -v_p(M_i)/i, averaged over the
            // last quarter of the computed orders (zero coefficients skipped)
            let mut estimates = Vec::new();
            for i in 1..=t_max {
                let coeff = g.coefficient(flags.var, i);
                match coeff.norm_exp(p) {
                    NormExp::Finite(v) => {
                        // -v/i as an exact big rational
                        let est = Rat::new(
                            BigInt::from(-*v.numer()),
                            BigInt::from(*v.denom()) * BigInt::from(i),
                        );
                        estimates.push((i, Some(est)));
                    }
                    NormExp::Infinite => estimates.push((i, None)),
                }
            }
            let start = (3 * t_max) / 4;
            let mut sum = Rat::zero();
            let mut count = 0u32;
            for (i, est) in &estimates {
                if *i >= start.max(1) {
                    if let Some(e) = est {
                        sum += e.clone();
                        count += 1;
                    }
                }
            }
            if count > 0 {
                let avg = sum / Rat::from_integer(BigInt::from(count));
                report.set(
                    "estimated_radius_exp",
                    json!(polyann::padic::format_rat(&avg)),
                );
            } else {
                report.set("estimated_radius_exp", json!("0"));
            }
            report.set(
                "certified_radius_exp",
                json!(format!("{}", g.certified_radius_exp())),
            );
            report.set("orders_computed", json!(t_max));
            report.set("residue", rat_matrix_value(data.nilpotent(0)));
            Ok((report, 0))
        }
        Err(e) => {
            let cert = unipotence_certificate(&UnipotenceError::from(e));
            math_fail(report, "certificate", cert)
        }
    }
}

pub fn transport(file: &ProblemFile, flags: &Flags) -> Outcome {
    let p = prime_of(file, flags)?;
    let conn = connection_of(file, flags)?;
    let mut report = Report::new("transport");
    report.set("order", json!(flags.order));
    match taylor_transport(&conn, flags.order) {
        Ok(tr) => {
            report.set("num_coefficients", json!(tr.coeffs.len()));
            // decay view of the multisequence F_I / I! at radius 1
            let eta = flags.eta_exp.unwrap_or_else(|| Exp::new(1, 2));
            let unit = RadiusTuple::unit(conn.num_vars());
            let levels = tr.decay_levels(p, eta, &unit);
            let decay: Vec<_> = levels
                .iter()
                .enumerate()
                .map(|(d, n)| json!({ "degree": d, "shifted_exp": format!("{}", n) }))
                .collect();
            report.set("eta_exp", json!(format!("{}", eta)));
            report.set("decay_levels", json!(decay));
            report.set("decay_certified", json!(tr.decay_certified(p, eta, &unit)));
            let cocycle = taylor_cocycle_check(&conn, flags.order)
                .map_err(|e| usage(format!("cocycle check: {}", e)))?;
            report.set("cocycle_ok", json!(cocycle));
            if cocycle {
                Ok((report, 0))
            } else {
                math_fail(report, "certificate", json!({ "kind": "CocycleViolation" }))
            }
        }
        Err(e) => {
            let cert = unipotence_certificate(&UnipotenceError::from(e));
            math_fail(report, "certificate", cert)
        }
    }
}

pub fn dl_check(file: &ProblemFile, flags: &Flags) -> Outcome {
    let p = prime_of(file, flags)?;
    let conn = connection_of(file, flags)?;
    let radii = RadiusTuple::uniform(conn.num_vars(), flags.radius_exp);
    let mut report = Report::new("dl-check");
    let data = match iterated_gauge(p, &conn, &radii) {
        Ok((_, data)) => data,
        Err(e) => {
            let cert = unipotence_certificate(&UnipotenceError::from(e));
            return math_fail(report, "certificate", cert);
        }
    };
    // the two evaluation routes are compared on the constant model
    let model = build_unipotent(&data, conn.window()).map_err(|e| usage(format!("{}", e)))?;
    let m = data.shortest_filtration_length();
    let prefactor = polyann::unipotence::choose_prefactor(&data, m)
        .ok_or_else(|| usage("no nonzero product of the data matrices"))?;
    report.set("filtration_length", json!(m));
    report.set("prefactor", json!(prefactor.iter().map(|i| i + 1).collect::<Vec<_>>()));

    // expansion: constant basis plus one monomial per variable
    let mut expansion: BTreeMap<Vec<i64>, Vec<Rat>> = BTreeMap::new();
    let ones = vec![Rat::one(); conn.rank()];
    expansion.insert(vec![0; conn.num_vars()], ones.clone());
    for var in 0..conn.num_vars() {
        let hi = conn.window().upper()[var];
        if hi >= 1 {
            let mut idx = vec![0; conn.num_vars()];
            idx[var] = 1;
            expansion.insert(idx, ones.clone());
        }
    }
    let mut section = vec![TruncatedSeries::zero(conn.window().clone()); conn.rank()];
    for (idx, coords) in &expansion {
        for (r, c) in coords.iter().enumerate() {
            let mono = TruncatedSeries::new(conn.window().clone(), [(idx.clone(), c.clone())])
                .map_err(|e| usage(format!("{}", e)))?;
            section[r] = section[r].add(&mono).map_err(|e| usage(format!("{}", e)))?;
        }
    }

    let max_l = 5u64;
    let mut all_equal = true;
    for l in 1..=max_l {
        let lhs = dl_operator(&model, &section, l, m, &prefactor)
            .map_err(|e| usage(format!("{}", e)))?;
        let rhs = dl_closed_form(&data, &expansion, conn.window(), l, m, &prefactor)
            .map_err(|e| usage(format!("{}", e)))?;
        let equal = lhs
            .iter()
            .zip(&rhs)
            .all(|(a, b)| a.terms().eq(b.terms()));
        if !equal {
            all_equal = false;
        }
    }
    report.set("levels_checked", json!(max_l));
    report.set("equal", json!(all_equal));
    if all_equal {
        Ok((report, 0))
    } else {
        math_fail(report, "certificate", json!({ "kind": "ClosedFormMismatch" }))
    }
}

pub fn reduce(file: &ProblemFile, flags: &Flags) -> Outcome {
    let p = prime_of(file, flags)?;
    if file.kind != ProblemKind::Division {
        return Err(usage("this command requires a division problem"));
    }
    let spec = file
        .division
        .as_ref()
        .ok_or_else(|| usage("missing division payload"))?;
    let delta_exp = parse_exp(&spec.delta_exp).ok_or_else(|| usage("bad delta_exp"))?;
    let z = build_tate(&spec.z, spec.num_vars, delta_exp).map_err(usage)?;
    let y = build_tate(&spec.y, spec.num_vars, delta_exp).map_err(usage)?;
    let gens = spec
        .basis
        .iter()
        .map(|b| build_tate(b, spec.num_vars, delta_exp))
        .collect::<Result<Vec<_>, _>>()
        .map_err(usage)?;
    let budget = flags.budget.unwrap_or(10_000);
    let mut report = Report::new("reduce");

    let basis = if spec.saturate {
        match IdealBasis::saturate(p, gens, 12, budget) {
            Ok(b) => b,
            Err(e) => {
                return math_fail(
                    report,
                    "certificate",
                    json!({ "kind": "SaturationFailed", "message": format!("{}", e) }),
                )
            }
        }
    } else {
        IdealBasis::from_generators(gens)
    };
    report.set("num_generators", json!(basis.generators().len()));

    let rho_exp = match flags.rho_exp.or_else(|| spec.rho_exp.as_deref().and_then(parse_exp)) {
        Some(r) => r,
        None => {
            let s0 = if basis.is_empty() {
                -delta_exp
            } else {
                basis
                    .stability_threshold(p)
                    .map_err(|e| usage(format!("{}", e)))?
            };
            let half = s0 / Exp::from_integer(2);
            if half <= Exp::zero() {
                return Err(usage("provide --rho-exp: no positive default exists"));
            }
            half.min(-delta_exp)
        }
    };
    report.set("rho_exp", json!(format!("{}", rho_exp)));

    match norm_controlled_reduce(p, &z, &y, &basis, rho_exp, budget) {
        Ok(out) => {
            report.set("u", tate_value(&out.u));
            report.set("steps", json!(out.steps));
            let trace: Vec<_> = out
                .trace
                .iter()
                .map(|s| {
                    json!({
                        "generator": s.generator + 1,
                        "monomial_exps": s.monomial_exps,
                        "monomial_coeff": rat_value(&s.monomial_coeff),
                    })
                })
                .collect();
            report.set("trace", json!(trace));
            report.set("u_unit_norm_exp", norm_exp_value(out.u_unit_norm));
            report.set("y_unit_norm_exp", norm_exp_value(out.y_unit_norm));
            report.set("u_rho_norm_exp", norm_exp_value(out.u_rho_norm));
            report.set("z_rho_norm_exp", norm_exp_value(out.z_rho_norm));
            report.set("unit_norm_ok", json!(out.unit_norm_ok));
            report.set("rho_norm_ok", json!(out.rho_norm_ok));
            let replay = replay_trace(&z, &out.u, &basis, &out.trace)
                .map_err(|e| usage(format!("{}", e)))?;
            report.set("trace_replay_ok", json!(replay));
            if out.unit_norm_ok && out.rho_norm_ok && replay {
                Ok((report, 0))
            } else {
                math_fail(report, "certificate", json!({ "kind": "ContractViolation" }))
            }
        }
        Err(e @ (TateError::NotReducible { .. } | TateError::BudgetExceeded { .. } | TateError::StepInvariantViolated { .. })) => math_fail(
            report,
            "certificate",
            json!({ "kind": "ReductionFailed", "message": format!("{}", e) }),
        ),
        Err(e) => Err(usage(format!("{}", e))),
    }
}

/// Eta-convergence of the Taylor multisequence at the basis sections;
/// exposed on `validate` through --eta-exp via the `eta` report field.
pub fn eta_check_on_basis(
    p: Prime,
    conn: &LogConnection,
    eta_exp: Exp,
    radii: &RadiusTuple,
    budget: usize,
) -> Result<bool, String> {
    let mut all = true;
    for i in 0..conn.rank() {
        let coords: Vec<Rat> = (0..conn.rank())
            .map(|k| if k == i { Rat::one() } else { Rat::zero() })
            .collect();
        let section = polyann::connection::constant_section(conn.window(), &coords);
        let verdict = eta_convergence_check(p, conn, &section, eta_exp, radii, budget, None)
            .map_err(|e| format!("{}", e))?;
        if !verdict.certified {
            all = false;
        }
    }
    Ok(all)
}
