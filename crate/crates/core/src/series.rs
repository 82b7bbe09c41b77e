//! Truncated multivariate Laurent/power series over exact rationals, with
//! Gauss norms at p-power radii.
//!
//! A series carries a per-variable exponent window [lower_i, upper_i]:
//! coefficients inside the window are exact, coefficients outside are
//! unknown. Arithmetic intersects windows (max of lowers, min of uppers)
//! and drops terms that fall outside, so truncation is tracked rather
//! than silent.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_traits::{One, Zero};

use crate::padic::{Exp, NormExp, Prime, Rat};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SeriesError {
    NumVarsMismatch { left: usize, right: usize },
    EmptyWindow { var: usize },
    DisjointWindows { var: usize },
    TermOutsideWindow { exps: Vec<i64> },
    BadRadius { var: usize },
    InvalidBracket(&'static str),
    NotInterior { var: usize },
    VarOutOfRange { var: usize, num_vars: usize },
    WindowExcludesOrigin { var: usize },
}

impl fmt::Display for SeriesError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeriesError::NumVarsMismatch { left, right } => {
                write!(f, "operands have {} and {} variables", left, right)
            }
            SeriesError::EmptyWindow { var } => write!(f, "window empty in variable {}", var),
            SeriesError::DisjointWindows { var } => {
                write!(f, "windows do not overlap in variable {}", var)
            }
            SeriesError::TermOutsideWindow { exps } => {
                write!(f, "term exponents {:?} fall outside the window", exps)
            }
            SeriesError::BadRadius { var } => {
                write!(f, "radius exponent for variable {} is negative", var)
            }
            SeriesError::InvalidBracket(msg) => write!(f, "invalid radius bracket: {}", msg),
            SeriesError::NotInterior { var } => {
                write!(f, "radius for variable {} is not strictly inside the bracket", var)
            }
            SeriesError::VarOutOfRange { var, num_vars } => {
                write!(f, "variable index {} out of range (n = {})", var, num_vars)
            }
            SeriesError::WindowExcludesOrigin { var } => {
                write!(f, "window of variable {} does not contain exponent 0", var)
            }
        }
    }
}

/// Per-variable exponent window: lower_i <= j_i <= upper_i for every
/// stored monomial. A power-series variable has lower_i = 0; a Laurent
/// variable has lower_i < 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Window {
    lower: Vec<i64>,
    upper: Vec<i64>,
}

impl Window {
    pub fn new(lower: Vec<i64>, upper: Vec<i64>) -> Result<Window, SeriesError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(SeriesError::NumVarsMismatch {
                left: lower.len(),
                right: upper.len(),
            });
        }
        for (i, (&lo, &hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if lo > hi {
                return Err(SeriesError::EmptyWindow { var: i });
            }
        }
        Ok(Window { lower, upper })
    }

    /// [0, t]^n power-series window.
    pub fn power(num_vars: usize, t: i64) -> Window {
        Window {
            lower: vec![0; num_vars],
            upper: vec![t; num_vars],
        }
    }

    /// [lo, hi]^n Laurent window.
    pub fn laurent(num_vars: usize, lo: i64, hi: i64) -> Window {
        Window {
            lower: vec![lo; num_vars],
            upper: vec![hi; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[i64] {
        &self.lower
    }

    pub fn upper(&self) -> &[i64] {
        &self.upper
    }

    pub fn contains(&self, exps: &[i64]) -> bool {
        exps.len() == self.num_vars()
            && exps
                .iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(&j, (&lo, &hi))| lo <= j && j <= hi)
    }

    /// Componentwise intersection: max of lowers, min of uppers.
    pub fn intersect(&self, other: &Window) -> Result<Window, SeriesError> {
        if self.num_vars() != other.num_vars() {
            return Err(SeriesError::NumVarsMismatch {
                left: self.num_vars(),
                right: other.num_vars(),
            });
        }
        let mut lower = Vec::with_capacity(self.num_vars());
        let mut upper = Vec::with_capacity(self.num_vars());
        for i in 0..self.num_vars() {
            let lo = self.lower[i].max(other.lower[i]);
            let hi = self.upper[i].min(other.upper[i]);
            if lo > hi {
                return Err(SeriesError::DisjointWindows { var: i });
            }
            lower.push(lo);
            upper.push(hi);
        }
        Ok(Window { lower, upper })
    }
}

/// A truncated series: finitely many exact coefficients indexed by
/// exponent tuples inside a window. Stored coefficients are nonzero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruncatedSeries {
    window: Window,
    terms: BTreeMap<Vec<i64>, Rat>,
}

impl TruncatedSeries {
    /// Builds a series, rejecting terms outside the window and dropping
    /// zero coefficients.
    pub fn new(
        window: Window,
        terms: impl IntoIterator<Item = (Vec<i64>, Rat)>,
    ) -> Result<TruncatedSeries, SeriesError> {
        let mut map = BTreeMap::new();
        for (exps, coeff) in terms {
            if !window.contains(&exps) {
                return Err(SeriesError::TermOutsideWindow { exps });
            }
            if !coeff.is_zero() {
                let entry = map.entry(exps).or_insert_with(Rat::zero);
                *entry += coeff;
            }
        }
        map.retain(|_, c: &mut Rat| !c.is_zero());
        Ok(TruncatedSeries { window, terms: map })
    }

    fn from_map_truncating(window: Window, map: BTreeMap<Vec<i64>, Rat>) -> TruncatedSeries {
        let terms = map
            .into_iter()
            .filter(|(exps, coeff)| window.contains(exps) && !coeff.is_zero())
            .collect();
        TruncatedSeries { window, terms }
    }

    pub fn zero(window: Window) -> TruncatedSeries {
        TruncatedSeries {
            window,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(window: Window, c: Rat) -> TruncatedSeries {
        let n = window.num_vars();
        TruncatedSeries::new(window, [(vec![0; n], c)]).expect("origin is inside every window")
    }

    pub fn one(window: Window) -> TruncatedSeries {
        TruncatedSeries::constant(window, Rat::one())
    }

    pub fn monomial(window: Window, exps: Vec<i64>, c: Rat) -> Result<TruncatedSeries, SeriesError> {
        TruncatedSeries::new(window, [(exps, c)])
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn num_vars(&self) -> usize {
        self.window.num_vars()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<i64>, &Rat)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, exps: &[i64]) -> Rat {
        self.terms.get(exps).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Constant term (coefficient at the origin).
    pub fn constant_term(&self) -> Rat {
        self.coeff(&vec![0; self.num_vars()])
    }

    /// True when the only stored term sits at the origin.
    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|j| j.iter().all(|&e| e == 0))
    }

    fn check_compatible(&self, other: &TruncatedSeries) -> Result<(), SeriesError> {
        if self.num_vars() != other.num_vars() {
            return Err(SeriesError::NumVarsMismatch {
                left: self.num_vars(),
                right: other.num_vars(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &TruncatedSeries) -> Result<TruncatedSeries, SeriesError> {
        self.check_compatible(other)?;
        let window = self.window.intersect(&other.window)?;
        let mut map = self.terms.clone();
        for (exps, coeff) in &other.terms {
            let entry = map.entry(exps.clone()).or_insert_with(Rat::zero);
            *entry += coeff.clone();
        }
        Ok(TruncatedSeries::from_map_truncating(window, map))
    }

    pub fn neg(&self) -> TruncatedSeries {
        let terms = self
            .terms
            .iter()
            .map(|(exps, coeff)| (exps.clone(), -coeff.clone()))
            .collect();
        TruncatedSeries {
            window: self.window.clone(),
            terms,
        }
    }

    pub fn sub(&self, other: &TruncatedSeries) -> Result<TruncatedSeries, SeriesError> {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &Rat) -> TruncatedSeries {
        if c.is_zero() {
            return TruncatedSeries::zero(self.window.clone());
        }
        let terms = self
            .terms
            .iter()
            .map(|(exps, coeff)| (exps.clone(), coeff.clone() * c.clone()))
            .collect();
        TruncatedSeries {
            window: self.window.clone(),
            terms,
        }
    }

    /// Exact convolution; product terms outside the intersected window are
    /// dropped (the window records the truncation).
    pub fn mul(&self, other: &TruncatedSeries) -> Result<TruncatedSeries, SeriesError> {
        self.check_compatible(other)?;
        let window = self.window.intersect(&other.window)?;
        let mut map: BTreeMap<Vec<i64>, Rat> = BTreeMap::new();
        for (ja, ca) in &self.terms {
            for (jb, cb) in &other.terms {
                let exps: Vec<i64> = ja.iter().zip(jb.iter()).map(|(a, b)| a + b).collect();
                if !window.contains(&exps) {
                    continue;
                }
                let entry = map.entry(exps).or_insert_with(Rat::zero);
                *entry += ca.clone() * cb.clone();
            }
        }
        map.retain(|_, c| !c.is_zero());
        Ok(TruncatedSeries { window, terms: map })
    }

    /// d/dt_var, termwise j c t^(j - e_var). The window upper bound drops
    /// by one (the top coefficient of the derivative would need an unknown
    /// input coefficient); a Laurent lower bound drops by one as well.
    pub fn partial_derivative(&self, var: usize) -> TruncatedSeries {
        let mut lower = self.window.lower.clone();
        let mut upper = self.window.upper.clone();
        lower[var] = if lower[var] < 0 { lower[var] - 1 } else { 0 };
        upper[var] = (upper[var] - 1).max(lower[var]);
        let window = Window { lower, upper };
        let mut map = BTreeMap::new();
        for (exps, coeff) in &self.terms {
            let j = exps[var];
            if j == 0 {
                continue;
            }
            let mut e = exps.clone();
            e[var] = j - 1;
            map.insert(e, coeff.clone() * Rat::from_integer(j.into()));
        }
        TruncatedSeries::from_map_truncating(window, map)
    }

    /// t_var d/dt_var, termwise j c t^j; window unchanged.
    pub fn log_derivative(&self, var: usize) -> TruncatedSeries {
        let mut map = BTreeMap::new();
        for (exps, coeff) in &self.terms {
            let j = exps[var];
            if j == 0 {
                continue;
            }
            map.insert(exps.clone(), coeff.clone() * Rat::from_integer(j.into()));
        }
        TruncatedSeries {
            window: self.window.clone(),
            terms: map,
        }
    }

    /// Multiplication by t_var^k; the window shifts with the terms.
    pub fn shift(&self, var: usize, k: i64) -> TruncatedSeries {
        let mut lower = self.window.lower.clone();
        let mut upper = self.window.upper.clone();
        lower[var] += k;
        upper[var] += k;
        let terms = self
            .terms
            .iter()
            .map(|(exps, coeff)| {
                let mut e = exps.clone();
                e[var] += k;
                (e, coeff.clone())
            })
            .collect();
        TruncatedSeries {
            window: Window { lower, upper },
            terms,
        }
    }

    /// Coefficient of t_var^k as a series in the remaining variables
    /// (the extracted variable's exponent is set to 0, window [0, 0]).
    pub fn extract_var_coeff(&self, var: usize, k: i64) -> TruncatedSeries {
        let mut lower = self.window.lower.clone();
        let mut upper = self.window.upper.clone();
        lower[var] = 0;
        upper[var] = 0;
        let terms = self
            .terms
            .iter()
            .filter(|(exps, _)| exps[var] == k)
            .map(|(exps, coeff)| {
                let mut e = exps.clone();
                e[var] = 0;
                (e, coeff.clone())
            })
            .collect();
        TruncatedSeries {
            window: Window { lower, upper },
            terms,
        }
    }

    /// Freezes every variable except `var` at exponent 0 (their windows
    /// collapse to [0, 0]); errors when a window excludes the origin.
    pub fn freeze_others(&self, var: usize) -> Result<TruncatedSeries, SeriesError> {
        for i in 0..self.num_vars() {
            if i != var && (self.window.lower[i] > 0 || self.window.upper[i] < 0) {
                return Err(SeriesError::WindowExcludesOrigin { var: i });
            }
        }
        let mut lower = vec![0; self.num_vars()];
        let mut upper = vec![0; self.num_vars()];
        lower[var] = self.window.lower[var];
        upper[var] = self.window.upper[var];
        let terms = self
            .terms
            .iter()
            .filter(|(exps, _)| {
                exps.iter()
                    .enumerate()
                    .all(|(i, &j)| i == var || j == 0)
            })
            .map(|(exps, coeff)| (exps.clone(), coeff.clone()))
            .collect();
        Ok(TruncatedSeries {
            window: Window { lower, upper },
            terms,
        })
    }

    /// Sub-series of terms with |j_i| >= l for every variable.
    pub fn tail(&self, l: i64) -> TruncatedSeries {
        let terms = self
            .terms
            .iter()
            .filter(|(exps, _)| exps.iter().all(|&j| j.abs() >= l))
            .map(|(exps, coeff)| (exps.clone(), coeff.clone()))
            .collect();
        TruncatedSeries {
            window: self.window.clone(),
            terms,
        }
    }
}

impl fmt::Display for TruncatedSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (exps, coeff) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{}", crate::padic::format_rat(coeff))?;
            for (i, &j) in exps.iter().enumerate() {
                if j != 0 {
                    write!(f, "*t{}^{}", i + 1, j)?;
                }
            }
        }
        Ok(())
    }
}

/// Radii r_i = p^(-e_i) with rational exponents e_i >= 0 (so r_i <= 1).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RadiusTuple {
    exps: Vec<Exp>,
}

impl RadiusTuple {
    pub fn new(exps: Vec<Exp>) -> Result<RadiusTuple, SeriesError> {
        for (i, e) in exps.iter().enumerate() {
            if *e < Exp::zero() {
                return Err(SeriesError::BadRadius { var: i });
            }
        }
        Ok(RadiusTuple { exps })
    }

    /// All radii equal to p^(-e).
    pub fn uniform(num_vars: usize, e: Exp) -> RadiusTuple {
        RadiusTuple {
            exps: vec![e; num_vars],
        }
    }

    /// Radius 1 in every variable.
    pub fn unit(num_vars: usize) -> RadiusTuple {
        RadiusTuple::uniform(num_vars, Exp::zero())
    }

    pub fn exps(&self) -> &[Exp] {
        &self.exps
    }

    pub fn num_vars(&self) -> usize {
        self.exps.len()
    }
}

/// Gauss norm |x|_R: sup over stored terms of |c_J| r^J. In exponent
/// scale this is the minimum of v_p(c_J) + sum_i j_i e_i; infinite for
/// the zero series.
pub fn gauss_norm(p: Prime, x: &TruncatedSeries, r: &RadiusTuple) -> NormExp {
    assert_eq!(
        x.num_vars(),
        r.num_vars(),
        "radius tuple must match the series variables"
    );
    let mut best = NormExp::Infinite;
    for (exps, coeff) in x.terms() {
        let mut e = match p.norm_exp(coeff) {
            NormExp::Finite(e) => e,
            NormExp::Infinite => continue,
        };
        for (j, re) in exps.iter().zip(r.exps()) {
            e += *re * Exp::from_integer(*j);
        }
        best = best.sup_value(NormExp::Finite(e));
    }
    best
}

/// Maximizes the Gauss norm over the box of radii [inner_i, outer_i]
/// (exponents: outer.e_i <= e_i <= inner.e_i): the maximum over the whole
/// box is attained at a corner, which is returned with its norm.
pub fn corner_maximum(
    p: Prime,
    x: &TruncatedSeries,
    inner: &RadiusTuple,
    outer: &RadiusTuple,
) -> Result<(RadiusTuple, NormExp), SeriesError> {
    let n = x.num_vars();
    if inner.num_vars() != n || outer.num_vars() != n {
        return Err(SeriesError::NumVarsMismatch {
            left: inner.num_vars(),
            right: outer.num_vars(),
        });
    }
    for i in 0..n {
        if inner.exps()[i] < outer.exps()[i] {
            return Err(SeriesError::InvalidBracket(
                "inner radius exceeds outer radius",
            ));
        }
    }
    let mut best: Option<(RadiusTuple, NormExp)> = None;
    for mask in 0..(1usize << n) {
        let exps: Vec<Exp> = (0..n)
            .map(|i| {
                if mask & (1 << i) != 0 {
                    inner.exps()[i]
                } else {
                    outer.exps()[i]
                }
            })
            .collect();
        let corner = RadiusTuple { exps };
        let norm = gauss_norm(p, x, &corner);
        let better = match &best {
            None => true,
            // larger value = smaller exponent
            Some((_, cur)) => norm < *cur,
        };
        if better {
            best = Some((corner, norm));
        }
    }
    Ok(best.expect("at least one corner"))
}

/// Open or half-open radius bracket (a, b) / [0, b) certifying tail decay:
/// `inner_exp = None` encodes inner radius 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RadiusBracket {
    pub inner_exp: Option<Exp>,
    pub outer_exp: Exp,
}

impl RadiusBracket {
    pub fn annulus(inner_exp: Exp, outer_exp: Exp) -> RadiusBracket {
        RadiusBracket {
            inner_exp: Some(inner_exp),
            outer_exp,
        }
    }

    pub fn disc(outer_exp: Exp) -> RadiusBracket {
        RadiusBracket {
            inner_exp: None,
            outer_exp,
        }
    }
}

/// Tail norms |x_l|_R together with a certified geometric decay rate.
#[derive(Clone, Debug)]
pub struct TailDecayWitness {
    /// eta = p^(eta_exp) > 1, so eta_exp > 0.
    pub eta_exp: Exp,
    /// |x_l|_R for l = 1..=len, where x_l keeps terms with all |j_i| >= l.
    pub norms: Vec<NormExp>,
    /// Exponent of the sup of |x| over the bracket corners.
    pub base_exp: NormExp,
    /// Exact check of exponent(|x_l|_R) >= l * eta_exp + base_exp for all l.
    pub certified: bool,
}

/// Certifies geometric tail decay for radii strictly inside the bracket:
/// every tail x_l (terms with all |j_i| >= l) satisfies
/// |x_l|_R <= eta^(-l) * sup_corner |x| with
/// eta = prod_i min(r_i/a, b/r_i) > 1 (or prod_i b/r_i for a = 0).
pub fn tail_decay_witness(
    p: Prime,
    x: &TruncatedSeries,
    r: &RadiusTuple,
    bracket: &RadiusBracket,
) -> Result<TailDecayWitness, SeriesError> {
    let n = x.num_vars();
    if r.num_vars() != n {
        return Err(SeriesError::NumVarsMismatch {
            left: r.num_vars(),
            right: n,
        });
    }
    if bracket.outer_exp < Exp::zero() {
        return Err(SeriesError::InvalidBracket("outer radius exceeds 1"));
    }
    if let Some(inner) = bracket.inner_exp {
        if inner <= bracket.outer_exp {
            return Err(SeriesError::InvalidBracket(
                "inner radius not smaller than outer radius",
            ));
        }
    } else if x.window().lower().iter().any(|&lo| lo < 0) {
        return Err(SeriesError::InvalidBracket(
            "Laurent window requires a nonzero inner radius",
        ));
    }
    let mut eta_exp = Exp::zero();
    for (i, &re) in r.exps().iter().enumerate() {
        // strict interiority at nonzero endpoints
        if re <= bracket.outer_exp {
            return Err(SeriesError::NotInterior { var: i });
        }
        let from_outer = re - bracket.outer_exp;
        let gap = match bracket.inner_exp {
            Some(inner) => {
                if re >= inner {
                    return Err(SeriesError::NotInterior { var: i });
                }
                from_outer.min(inner - re)
            }
            None => from_outer,
        };
        eta_exp += gap;
    }

    // sup of |x| over the bracket corners, in exponent scale (minimum)
    let inner_corner = bracket.inner_exp.unwrap_or(bracket.outer_exp);
    let inner_tuple = RadiusTuple::uniform(n, inner_corner);
    let outer_tuple = RadiusTuple::uniform(n, bracket.outer_exp);
    let (_, base_exp) = corner_maximum(p, x, &inner_tuple, &outer_tuple)?;

    let span = x
        .window()
        .lower()
        .iter()
        .chain(x.window().upper().iter())
        .map(|&j| j.abs())
        .max()
        .unwrap_or(0);
    let mut norms = Vec::new();
    let mut certified = true;
    for l in 1..=(span + 1) {
        let tail_norm = gauss_norm(p, &x.tail(l), r);
        let bound = base_exp + NormExp::Finite(eta_exp * Exp::from_integer(l));
        // value inequality |x_l| <= eta^(-l) sup |x| reads >= in exponents
        if tail_norm < bound {
            certified = false;
        }
        norms.push(tail_norm);
    }
    Ok(TailDecayWitness {
        eta_exp,
        norms,
        base_exp,
        certified,
    })
}
