//! Problem file schema: versioned JSON with a prime, a problem kind, and
//! one payload. Unknown fields are rejected; all rationals travel as
//! "num/den" strings (denominator omitted when 1). Validation aggregates
//! schema errors with their JSON paths before any mathematics runs.

use std::fmt;

use serde::{Deserialize, Serialize};

use polyann::connection::LogConnection;
use polyann::padic::{parse_rat, Exp, Prime, Rat};
use polyann::series::{RadiusTuple, TruncatedSeries, Window};
use polyann::tate::TateElement;
use polyann::Matrix;

#[derive(Debug)]
pub struct SchemaIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for SchemaIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug)]
pub enum LoadError {
    Io(std::io::Error),
    Json(serde_json::Error),
    Schema(Vec<SchemaIssue>),
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadError::Io(e) => write!(f, "io error: {}", e),
            LoadError::Json(e) => write!(f, "json error: {}", e),
            LoadError::Schema(issues) => {
                writeln!(f, "schema errors:")?;
                for issue in issues {
                    writeln!(f, "  {}", issue)?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub version: String,
    pub prime: u64,
    pub kind: ProblemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connection: Option<ConnectionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<SeriesSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub division: Option<DivisionSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Connection,
    Series,
    Division,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub lower: Vec<i64>,
    pub upper: Vec<i64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub exps: Vec<i64>,
    pub coeff: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionSpec {
    pub rank: usize,
    pub num_vars: usize,
    pub window: WindowSpec,
    /// matrices[var][row][col] = list of series terms
    pub matrices: Vec<Vec<Vec<Vec<TermSpec>>>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSpec {
    pub window: WindowSpec,
    pub terms: Vec<TermSpec>,
    /// Optional radius exponents at which `validate` reports the norm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_exps: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TateTermSpec {
    pub exps: Vec<u64>,
    pub coeff: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TateSpec {
    pub terms: Vec<TateTermSpec>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DivisionSpec {
    pub num_vars: usize,
    pub delta_exp: String,
    pub z: TateSpec,
    pub y: TateSpec,
    pub basis: Vec<TateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_exp: Option<String>,
    /// Complete the basis before dividing (polynomial generators only).
    #[serde(default)]
    pub saturate: bool,
}

/// Parses an exponent-scale rational "a/b" into machine words.
pub fn parse_exp(s: &str) -> Option<Exp> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n: i64 = num.parse().ok()?;
    let d: i64 = den.parse().ok()?;
    if d == 0 {
        return None;
    }
    Some(Exp::new(n, d))
}

pub fn load(path: &str) -> Result<ProblemFile, LoadError> {
    let text = std::fs::read_to_string(path).map_err(LoadError::Io)?;
    let file: ProblemFile = serde_json::from_str(&text).map_err(LoadError::Json)?;
    let issues = validate(&file);
    if issues.is_empty() {
        Ok(file)
    } else {
        Err(LoadError::Schema(issues))
    }
}

fn check_rat(s: &str, path: String, issues: &mut Vec<SchemaIssue>) {
    if parse_rat(s).is_none() {
        issues.push(SchemaIssue {
            path,
            message: format!("invalid rational literal {:?}", s),
        });
    }
}

fn check_exp(s: &str, path: String, issues: &mut Vec<SchemaIssue>) {
    if parse_exp(s).is_none() {
        issues.push(SchemaIssue {
            path,
            message: format!("invalid exponent literal {:?}", s),
        });
    }
}

fn validate_window(w: &WindowSpec, num_vars: usize, path: &str, issues: &mut Vec<SchemaIssue>) {
    if w.lower.len() != num_vars || w.upper.len() != num_vars {
        issues.push(SchemaIssue {
            path: format!("{}.window", path),
            message: format!("window must list {} variables", num_vars),
        });
        return;
    }
    for (i, (&lo, &hi)) in w.lower.iter().zip(&w.upper).enumerate() {
        if lo > hi {
            issues.push(SchemaIssue {
                path: format!("{}.window.lower[{}]", path, i),
                message: format!("lower bound {} exceeds upper bound {}", lo, hi),
            });
        }
    }
}

fn validate_terms(
    terms: &[TermSpec],
    num_vars: usize,
    path: &str,
    issues: &mut Vec<SchemaIssue>,
) {
    for (k, term) in terms.iter().enumerate() {
        if term.exps.len() != num_vars {
            issues.push(SchemaIssue {
                path: format!("{}[{}].exps", path, k),
                message: format!("expected {} exponents, found {}", num_vars, term.exps.len()),
            });
        }
        check_rat(&term.coeff, format!("{}[{}].coeff", path, k), issues);
    }
}

pub fn validate(file: &ProblemFile) -> Vec<SchemaIssue> {
    let mut issues = Vec::new();
    if file.version != "1" {
        issues.push(SchemaIssue {
            path: "version".into(),
            message: format!("unsupported version {:?}", file.version),
        });
    }
    if let Err(e) = Prime::new(file.prime) {
        issues.push(SchemaIssue {
            path: "prime".into(),
            message: format!("{}", e),
        });
    }
    let expect = |present: bool, name: &str, wanted: bool, issues: &mut Vec<SchemaIssue>| {
        if wanted && !present {
            issues.push(SchemaIssue {
                path: name.into(),
                message: "payload required for this kind".into(),
            });
        }
        if !wanted && present {
            issues.push(SchemaIssue {
                path: name.into(),
                message: "payload does not match the declared kind".into(),
            });
        }
    };
    expect(
        file.connection.is_some(),
        "connection",
        file.kind == ProblemKind::Connection,
        &mut issues,
    );
    expect(
        file.series.is_some(),
        "series",
        file.kind == ProblemKind::Series,
        &mut issues,
    );
    expect(
        file.division.is_some(),
        "division",
        file.kind == ProblemKind::Division,
        &mut issues,
    );

    if let Some(conn) = &file.connection {
        if conn.rank == 0 {
            issues.push(SchemaIssue {
                path: "connection.rank".into(),
                message: "rank must be positive".into(),
            });
        }
        if conn.num_vars == 0 {
            issues.push(SchemaIssue {
                path: "connection.num_vars".into(),
                message: "num_vars must be positive".into(),
            });
        }
        validate_window(&conn.window, conn.num_vars, "connection", &mut issues);
        if conn.matrices.len() != conn.num_vars {
            issues.push(SchemaIssue {
                path: "connection.matrices".into(),
                message: format!(
                    "expected {} matrices, found {}",
                    conn.num_vars,
                    conn.matrices.len()
                ),
            });
        }
        for (v, m) in conn.matrices.iter().enumerate() {
            if m.len() != conn.rank {
                issues.push(SchemaIssue {
                    path: format!("connection.matrices[{}]", v),
                    message: format!("expected {} rows, found {}", conn.rank, m.len()),
                });
                continue;
            }
            for (r, row) in m.iter().enumerate() {
                if row.len() != conn.rank {
                    issues.push(SchemaIssue {
                        path: format!("connection.matrices[{}][{}]", v, r),
                        message: format!("expected {} columns, found {}", conn.rank, row.len()),
                    });
                    continue;
                }
                for (c, entry) in row.iter().enumerate() {
                    validate_terms(
                        entry,
                        conn.num_vars,
                        &format!("connection.matrices[{}][{}][{}]", v, r, c),
                        &mut issues,
                    );
                }
            }
        }
    }

    if let Some(series) = &file.series {
        let n = series.window.lower.len();
        validate_window(&series.window, n, "series", &mut issues);
        validate_terms(&series.terms, n, "series.terms", &mut issues);
        if let Some(exps) = &series.radius_exps {
            if exps.len() != n {
                issues.push(SchemaIssue {
                    path: "series.radius_exps".into(),
                    message: format!("expected {} radius exponents", n),
                });
            }
            for (i, e) in exps.iter().enumerate() {
                check_exp(e, format!("series.radius_exps[{}]", i), &mut issues);
            }
        }
    }

    if let Some(div) = &file.division {
        if div.num_vars == 0 {
            issues.push(SchemaIssue {
                path: "division.num_vars".into(),
                message: "num_vars must be positive".into(),
            });
        }
        check_exp(&div.delta_exp, "division.delta_exp".into(), &mut issues);
        if let Some(d) = parse_exp(&div.delta_exp) {
            if d > Exp::new(0, 1) {
                issues.push(SchemaIssue {
                    path: "division.delta_exp".into(),
                    message: "delta exponent must be <= 0".into(),
                });
            }
        }
        let check_tate = |spec: &TateSpec, path: &str, issues: &mut Vec<SchemaIssue>| {
            for (k, term) in spec.terms.iter().enumerate() {
                if term.exps.len() != div.num_vars {
                    issues.push(SchemaIssue {
                        path: format!("{}.terms[{}].exps", path, k),
                        message: format!("expected {} exponents", div.num_vars),
                    });
                }
                check_rat(&term.coeff, format!("{}.terms[{}].coeff", path, k), issues);
            }
        };
        check_tate(&div.z, "division.z", &mut issues);
        check_tate(&div.y, "division.y", &mut issues);
        for (i, b) in div.basis.iter().enumerate() {
            check_tate(b, &format!("division.basis[{}]", i), &mut issues);
        }
        if let Some(rho) = &div.rho_exp {
            check_exp(rho, "division.rho_exp".into(), &mut issues);
        }
    }

    issues
}

/// Builds the series over the window, clamping the upper bounds at
/// `trunc` when given (terms above it are dropped).
pub fn build_series(
    window: &WindowSpec,
    terms: &[TermSpec],
    trunc: Option<i64>,
) -> Result<TruncatedSeries, String> {
    let upper: Vec<i64> = window
        .upper
        .iter()
        .zip(&window.lower)
        .map(|(&hi, &lo)| trunc.map_or(hi, |t| hi.min(t).max(lo)))
        .collect();
    let w = Window::new(window.lower.clone(), upper).map_err(|e| e.to_string())?;
    let items: Vec<(Vec<i64>, Rat)> = terms
        .iter()
        .filter_map(|t| {
            let coeff = parse_rat(&t.coeff)?;
            if w.contains(&t.exps) {
                Some((t.exps.clone(), coeff))
            } else {
                None
            }
        })
        .collect();
    TruncatedSeries::new(w, items).map_err(|e| e.to_string())
}

pub fn build_connection(spec: &ConnectionSpec, trunc: Option<i64>) -> Result<LogConnection, String> {
    let mut matrices = Vec::with_capacity(spec.num_vars);
    let mut shared: Option<Window> = None;
    for m in &spec.matrices {
        let mut entries = Vec::with_capacity(spec.rank * spec.rank);
        for row in m {
            for entry in row {
                let s = build_series(&spec.window, entry, trunc)?;
                if shared.is_none() {
                    shared = Some(s.window().clone());
                }
                entries.push(s);
            }
        }
        matrices.push(Matrix::from_fn(spec.rank, spec.rank, |i, j| {
            entries[i * spec.rank + j].clone()
        }));
    }
    LogConnection::new(spec.rank, shared.expect("rank >= 1"), matrices).map_err(|e| e.to_string())
}

pub fn build_tate(spec: &TateSpec, num_vars: usize, delta_exp: Exp) -> Result<TateElement, String> {
    let terms: Vec<(Vec<u64>, Rat)> = spec
        .terms
        .iter()
        .map(|t| {
            let coeff = parse_rat(&t.coeff).ok_or_else(|| format!("bad coeff {:?}", t.coeff))?;
            Ok((t.exps.clone(), coeff))
        })
        .collect::<Result<_, String>>()?;
    TateElement::new(num_vars, delta_exp, terms).map_err(|e| e.to_string())
}

pub fn build_radius(exps: &[String]) -> Result<RadiusTuple, String> {
    let parsed: Vec<Exp> = exps
        .iter()
        .map(|s| parse_exp(s).ok_or_else(|| format!("bad exponent {:?}", s)))
        .collect::<Result<_, String>>()?;
    RadiusTuple::new(parsed).map_err(|e| e.to_string())
}
