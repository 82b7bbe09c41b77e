//! Weighted Tate algebra elements, leading terms under a
//! last-variable-dominant well-order, and norm-controlled division.
//!
//! Elements live on the polydisc |x_1|, ..., |x_{n-1}| <= 1,
//! |x_n| <= delta with delta = p^(-delta_exp) >= 1. Radii lambda between
//! 1 and delta are written as lambda = p^s with s > 0 in the "s scale";
//! a term c x^J then has |c x^J|_lambda = p^(-(v_p(c) - s j_n)).

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use num_traits::Zero;

use crate::padic::{Exp, NormExp, Prime, Rat};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TateError {
    NumVarsMismatch { left: usize, right: usize },
    DeltaPositive,
    ZeroElement,
    RhoOutOfRange,
    NotReducible { step: usize },
    StepInvariantViolated { step: usize },
    BudgetExceeded { budget: usize },
    DegreeCapExceeded { degree: usize, cap: usize },
    BadInterpolationWeight,
}

impl fmt::Display for TateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TateError::NumVarsMismatch { left, right } => {
                write!(f, "operands have {} and {} variables", left, right)
            }
            TateError::DeltaPositive => {
                write!(f, "delta exponent must be <= 0 (outer radius >= 1)")
            }
            TateError::ZeroElement => write!(f, "operation undefined on the zero element"),
            TateError::RhoOutOfRange => {
                write!(f, "rho exponent must lie in (0, -delta_exp]")
            }
            TateError::NotReducible { step } => {
                write!(f, "leading term not reducible by the basis at step {}", step)
            }
            TateError::StepInvariantViolated { step } => {
                write!(f, "rho-norm step invariant violated at step {}", step)
            }
            TateError::BudgetExceeded { budget } => {
                write!(f, "division did not terminate within {} steps", budget)
            }
            TateError::DegreeCapExceeded { degree, cap } => {
                write!(f, "saturation produced degree {} above the cap {}", degree, cap)
            }
            TateError::BadInterpolationWeight => {
                write!(f, "interpolation weight must lie strictly between 0 and 1")
            }
        }
    }
}

/// Compares exponent tuples: last component first, then lexicographic on
/// the remaining components. A well-order extending componentwise
/// divisibility.
pub fn monomial_cmp(a: &[u64], b: &[u64]) -> Ordering {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    match a[n - 1].cmp(&b[n - 1]) {
        Ordering::Equal => a[..n - 1].cmp(&b[..n - 1]),
        other => other,
    }
}

/// Element of the weighted Tate algebra with polynomial support.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TateElement {
    num_vars: usize,
    /// delta = p^(-delta_exp) >= 1 is the closed radius for the last
    /// variable, so delta_exp <= 0.
    delta_exp: Exp,
    terms: BTreeMap<Vec<u64>, Rat>,
}

impl TateElement {
    pub fn new(
        num_vars: usize,
        delta_exp: Exp,
        terms: impl IntoIterator<Item = (Vec<u64>, Rat)>,
    ) -> Result<TateElement, TateError> {
        if delta_exp > Exp::zero() {
            return Err(TateError::DeltaPositive);
        }
        let mut map: BTreeMap<Vec<u64>, Rat> = BTreeMap::new();
        for (exps, coeff) in terms {
            if exps.len() != num_vars {
                return Err(TateError::NumVarsMismatch {
                    left: exps.len(),
                    right: num_vars,
                });
            }
            if !coeff.is_zero() {
                let entry = map.entry(exps).or_insert_with(Rat::zero);
                *entry += coeff;
            }
        }
        map.retain(|_, c| !c.is_zero());
        Ok(TateElement {
            num_vars,
            delta_exp,
            terms: map,
        })
    }

    pub fn zero(num_vars: usize, delta_exp: Exp) -> TateElement {
        TateElement {
            num_vars,
            delta_exp,
            terms: BTreeMap::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn delta_exp(&self) -> Exp {
        self.delta_exp
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u64>, &Rat)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, exps: &[u64]) -> Rat {
        self.terms.get(exps).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Largest total degree of the support.
    pub fn total_degree(&self) -> u64 {
        self.terms
            .keys()
            .map(|j| j.iter().sum())
            .max()
            .unwrap_or(0)
    }

    fn check(&self, other: &TateElement) -> Result<(), TateError> {
        if self.num_vars != other.num_vars {
            return Err(TateError::NumVarsMismatch {
                left: self.num_vars,
                right: other.num_vars,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &TateElement) -> Result<TateElement, TateError> {
        self.check(other)?;
        let mut map = self.terms.clone();
        for (exps, coeff) in &other.terms {
            let entry = map.entry(exps.clone()).or_insert_with(Rat::zero);
            *entry += coeff.clone();
        }
        map.retain(|_, c| !c.is_zero());
        Ok(TateElement {
            num_vars: self.num_vars,
            delta_exp: self.delta_exp.min(other.delta_exp),
            terms: map,
        })
    }

    pub fn sub(&self, other: &TateElement) -> Result<TateElement, TateError> {
        self.add(&other.scale(&-Rat::from_integer(1.into())))
    }

    pub fn scale(&self, c: &Rat) -> TateElement {
        if c.is_zero() {
            return TateElement::zero(self.num_vars, self.delta_exp);
        }
        TateElement {
            num_vars: self.num_vars,
            delta_exp: self.delta_exp,
            terms: self
                .terms
                .iter()
                .map(|(e, x)| (e.clone(), x.clone() * c.clone()))
                .collect(),
        }
    }

    /// Multiplication by the monomial c x^J.
    pub fn mul_monomial(&self, exps: &[u64], c: &Rat) -> TateElement {
        if c.is_zero() {
            return TateElement::zero(self.num_vars, self.delta_exp);
        }
        TateElement {
            num_vars: self.num_vars,
            delta_exp: self.delta_exp,
            terms: self
                .terms
                .iter()
                .map(|(e, x)| {
                    let shifted: Vec<u64> = e.iter().zip(exps).map(|(a, b)| a + b).collect();
                    (shifted, x.clone() * c.clone())
                })
                .collect(),
        }
    }

    pub fn mul(&self, other: &TateElement) -> Result<TateElement, TateError> {
        self.check(other)?;
        let mut map: BTreeMap<Vec<u64>, Rat> = BTreeMap::new();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let exps: Vec<u64> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                let entry = map.entry(exps).or_insert_with(Rat::zero);
                *entry += ca.clone() * cb.clone();
            }
        }
        map.retain(|_, c| !c.is_zero());
        Ok(TateElement {
            num_vars: self.num_vars,
            delta_exp: self.delta_exp.min(other.delta_exp),
            terms: map,
        })
    }

    /// |y| at lambda = p^s: exponent-scale minimum of v_p(c_J) - s j_n.
    /// `s_exp = 0` is the unit polydisc norm; `s_exp = -delta_exp` the
    /// outer norm.
    pub fn norm_at(&self, p: Prime, s_exp: Exp) -> NormExp {
        let mut best = NormExp::Infinite;
        for (exps, coeff) in &self.terms {
            if let NormExp::Finite(v) = p.norm_exp(coeff) {
                let jn = exps[self.num_vars - 1] as i64;
                best = best.sup_value(NormExp::Finite(v - s_exp * Exp::from_integer(jn)));
            }
        }
        best
    }

    /// The lambda-leading term at lambda = p^s: among terms maximizing
    /// |c_J x^J|_lambda, the largest exponent tuple under the monomial
    /// order.
    pub fn leading_term(&self, p: Prime, s_exp: Exp) -> Result<LeadingTerm, TateError> {
        if self.is_zero() {
            return Err(TateError::ZeroElement);
        }
        let mut best: Option<(Vec<u64>, Rat, Exp)> = None;
        for (exps, coeff) in &self.terms {
            let v = match p.norm_exp(coeff) {
                NormExp::Finite(v) => v,
                NormExp::Infinite => continue,
            };
            let jn = exps[self.num_vars - 1] as i64;
            let key = v - s_exp * Exp::from_integer(jn);
            let replace = match &best {
                None => true,
                Some((be, _, bk)) => {
                    key < *bk || (key == *bk && monomial_cmp(exps, be) == Ordering::Greater)
                }
            };
            if replace {
                best = Some((exps.clone(), coeff.clone(), key));
            }
        }
        let (exps, coeff, key) = best.expect("nonzero element has terms");
        Ok(LeadingTerm {
            exps,
            coeff,
            norm_exp: NormExp::Finite(key),
        })
    }
}

impl fmt::Display for TateElement {
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
                    write!(f, "*x{}^{}", i + 1, j)?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeadingTerm {
    pub exps: Vec<u64>,
    pub coeff: Rat,
    pub norm_exp: NormExp,
}

/// Largest s0 > 0 such that the 1-leading term of `y` remains the
/// p^s-leading term for all rational 0 < s < s0 (and at s0 itself when
/// s0 = -delta_exp with no competing term). Capped at -delta_exp.
pub fn stability_threshold(p: Prime, y: &TateElement) -> Result<Exp, TateError> {
    let lead = y.leading_term(p, Exp::zero())?;
    let v_lead = match p.norm_exp(&lead.coeff) {
        NormExp::Finite(v) => v,
        NormExp::Infinite => unreachable!("leading coefficient is nonzero"),
    };
    let i_n = lead.exps[y.num_vars() - 1] as i64;
    let mut s0 = -y.delta_exp();
    for (exps, coeff) in y.terms() {
        let v = match p.norm_exp(coeff) {
            NormExp::Finite(v) => v,
            NormExp::Infinite => continue,
        };
        let j_n = exps[y.num_vars() - 1] as i64;
        // only strictly smaller terms that grow faster along x_n compete
        if v > v_lead && j_n > i_n {
            let crossover = (v - v_lead) / Exp::from_integer(j_n - i_n);
            s0 = s0.min(crossover);
        }
    }
    Ok(s0)
}

/// Generators whose unit-polydisc leading terms are meant to cover the
/// leading terms of the ideal they generate.
#[derive(Clone, Debug)]
pub struct IdealBasis {
    generators: Vec<TateElement>,
}

impl IdealBasis {
    /// Wraps user-supplied generators without completion; the division
    /// then verifies every reduction step against them.
    pub fn from_generators(generators: Vec<TateElement>) -> IdealBasis {
        IdealBasis { generators }
    }

    pub fn generators(&self) -> &[TateElement] {
        &self.generators
    }

    pub fn is_empty(&self) -> bool {
        self.generators.iter().all(TateElement::is_zero)
    }

    /// Smallest stability threshold of the generators; division radii
    /// must stay strictly below it.
    pub fn stability_threshold(&self, p: Prime) -> Result<Exp, TateError> {
        let mut s0: Option<Exp> = None;
        for g in &self.generators {
            if g.is_zero() {
                continue;
            }
            let t = stability_threshold(p, g)?;
            s0 = Some(match s0 {
                Some(cur) => cur.min(t),
                None => t,
            });
        }
        s0.ok_or(TateError::ZeroElement)
    }

    /// Buchberger-style completion of polynomial generators under the
    /// weighted leading-term rule, with a total degree cap and a pair
    /// budget. Inputs exceeding the caps are rejected with a diagnostic
    /// rather than silently truncated.
    pub fn saturate(
        p: Prime,
        generators: Vec<TateElement>,
        degree_cap: u64,
        pair_budget: usize,
    ) -> Result<IdealBasis, TateError> {
        let mut basis: Vec<TateElement> = generators
            .into_iter()
            .filter(|g| !g.is_zero())
            .collect();
        for g in &basis {
            if g.total_degree() > degree_cap {
                return Err(TateError::DegreeCapExceeded {
                    degree: g.total_degree() as usize,
                    cap: degree_cap as usize,
                });
            }
        }
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for i in 0..basis.len() {
            for j in (i + 1)..basis.len() {
                pairs.push((i, j));
            }
        }
        let mut spent = 0usize;
        while let Some((i, j)) = pairs.pop() {
            spent += 1;
            if spent > pair_budget {
                return Err(TateError::BudgetExceeded { budget: pair_budget });
            }
            let s = s_polynomial(p, &basis[i], &basis[j])?;
            let reduced = reduce_leading(p, s, &basis, pair_budget)?;
            if let Some(r) = reduced {
                if r.total_degree() > degree_cap {
                    return Err(TateError::DegreeCapExceeded {
                        degree: r.total_degree() as usize,
                        cap: degree_cap as usize,
                    });
                }
                let new_index = basis.len();
                for k in 0..new_index {
                    pairs.push((k, new_index));
                }
                basis.push(r);
            }
        }
        Ok(IdealBasis { generators: basis })
    }
}

fn s_polynomial(p: Prime, f: &TateElement, g: &TateElement) -> Result<TateElement, TateError> {
    let lf = f.leading_term(p, Exp::zero())?;
    let lg = g.leading_term(p, Exp::zero())?;
    let lcm: Vec<u64> = lf
        .exps
        .iter()
        .zip(&lg.exps)
        .map(|(a, b)| *a.max(b))
        .collect();
    let mf: Vec<u64> = lcm.iter().zip(&lf.exps).map(|(l, e)| l - e).collect();
    let mg: Vec<u64> = lcm.iter().zip(&lg.exps).map(|(l, e)| l - e).collect();
    let left = f.mul_monomial(&mf, &lg.coeff);
    let right = g.mul_monomial(&mg, &lf.coeff);
    left.sub(&right)
}

/// Reduces the leading term of `s` against the basis until it vanishes or
/// becomes irreducible; returns the irreducible remainder, if any.
fn reduce_leading(
    p: Prime,
    mut s: TateElement,
    basis: &[TateElement],
    budget: usize,
) -> Result<Option<TateElement>, TateError> {
    let mut steps = 0usize;
    'outer: loop {
        if s.is_zero() {
            return Ok(None);
        }
        steps += 1;
        if steps > budget {
            return Err(TateError::BudgetExceeded { budget });
        }
        let lead = s.leading_term(p, Exp::zero())?;
        for g in basis {
            if g.is_zero() {
                continue;
            }
            let lg = g.leading_term(p, Exp::zero())?;
            if divides(&lg.exps, &lead.exps) {
                let shift: Vec<u64> = lead
                    .exps
                    .iter()
                    .zip(&lg.exps)
                    .map(|(a, b)| a - b)
                    .collect();
                let c = lead.coeff.clone() / lg.coeff.clone();
                s = s.sub(&g.mul_monomial(&shift, &c))?;
                continue 'outer;
            }
        }
        return Ok(Some(s));
    }
}

fn divides(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// One recorded division step: subtract coeff * x^exps * generator.
#[derive(Clone, Debug)]
pub struct ReductionStep {
    pub monomial_exps: Vec<u64>,
    pub monomial_coeff: Rat,
    pub generator: usize,
}

#[derive(Clone, Debug)]
pub struct ReductionOutcome {
    pub u: TateElement,
    pub trace: Vec<ReductionStep>,
    pub steps: usize,
    /// |u|_1 <= |y|_1, checked exactly.
    pub unit_norm_ok: bool,
    /// |u|_rho <= |z|_rho, checked exactly.
    pub rho_norm_ok: bool,
    pub u_unit_norm: NormExp,
    pub y_unit_norm: NormExp,
    pub u_rho_norm: NormExp,
    pub z_rho_norm: NormExp,
}

/// Norm-controlled reduction: assuming y - z lies in the ideal spanned by
/// the basis, produces u with u - z in the ideal, |u|_1 <= |y|_1 and
/// |u|_rho <= |z|_rho for rho = p^(rho_exp), by cancelling unit-polydisc
/// leading terms of z_j - y against the basis. Each step's invariant
/// |z_j|_rho <= |z|_rho is asserted exactly.
pub fn norm_controlled_reduce(
    p: Prime,
    z: &TateElement,
    y: &TateElement,
    basis: &IdealBasis,
    rho_exp: Exp,
    budget: usize,
) -> Result<ReductionOutcome, TateError> {
    z.check(y)?;
    let domain = (-z.delta_exp()).min(-y.delta_exp());
    if rho_exp <= Exp::zero() || rho_exp > domain {
        return Err(TateError::RhoOutOfRange);
    }
    if !basis.is_empty() {
        let s0 = basis.stability_threshold(p)?;
        if rho_exp > s0 {
            return Err(TateError::RhoOutOfRange);
        }
    }
    let y_unit = y.norm_at(p, Exp::zero());
    let z_rho = z.norm_at(p, rho_exp);
    let mut current = z.clone();
    let mut trace = Vec::new();
    let mut steps = 0usize;
    let mut previous_lead: Option<LeadingTerm> = None;
    while !current.norm_at(p, Exp::zero()).value_le(y_unit) {
        steps += 1;
        if steps > budget {
            return Err(TateError::BudgetExceeded { budget });
        }
        let w = current.sub(y)?;
        let lead = w.leading_term(p, Exp::zero())?;
        // each step strictly decreases the leading term of z_j - y: the
        // norm level drops, or within a level the monomial drops
        if let Some(prev) = &previous_lead {
            let dropped = lead.norm_exp.value_lt(prev.norm_exp)
                || (lead.norm_exp == prev.norm_exp
                    && monomial_cmp(&lead.exps, &prev.exps) == Ordering::Less);
            if !dropped {
                return Err(TateError::StepInvariantViolated { step: steps });
            }
        }
        previous_lead = Some(lead.clone());
        let mut matched = None;
        for (gi, g) in basis.generators().iter().enumerate() {
            if g.is_zero() {
                continue;
            }
            let lg = g.leading_term(p, Exp::zero())?;
            if divides(&lg.exps, &lead.exps) {
                matched = Some((gi, lg));
                break;
            }
        }
        let (gi, lg) = matched.ok_or(TateError::NotReducible { step: steps })?;
        let shift: Vec<u64> = lead
            .exps
            .iter()
            .zip(&lg.exps)
            .map(|(a, b)| a - b)
            .collect();
        let c = lead.coeff.clone() / lg.coeff.clone();
        current = current.sub(&basis.generators()[gi].mul_monomial(&shift, &c))?;
        // the per-step invariant from the construction, checked exactly
        if !current.norm_at(p, rho_exp).value_le(z_rho) {
            return Err(TateError::StepInvariantViolated { step: steps });
        }
        trace.push(ReductionStep {
            monomial_exps: shift,
            monomial_coeff: c,
            generator: gi,
        });
    }
    let u = current;
    let u_unit = u.norm_at(p, Exp::zero());
    let u_rho = u.norm_at(p, rho_exp);
    Ok(ReductionOutcome {
        unit_norm_ok: u_unit.value_le(y_unit),
        rho_norm_ok: u_rho.value_le(z_rho),
        u,
        trace,
        steps,
        u_unit_norm: u_unit,
        y_unit_norm: y_unit,
        u_rho_norm: u_rho,
        z_rho_norm: z_rho,
    })
}

/// Replays a reduction trace: z - u must equal the traced combination.
pub fn replay_trace(
    z: &TateElement,
    u: &TateElement,
    basis: &IdealBasis,
    trace: &[ReductionStep],
) -> Result<bool, TateError> {
    let mut acc = TateElement::zero(z.num_vars(), z.delta_exp());
    for step in trace {
        let part = basis.generators()[step.generator]
            .mul_monomial(&step.monomial_exps, &step.monomial_coeff);
        acc = acc.add(&part)?;
    }
    Ok(z.sub(u)? == acc)
}

#[derive(Clone, Debug)]
pub struct HadamardCheck {
    /// Interpolated radius lambda = rho0^(1-c) in value-exponent scale
    /// (lambda = p^(-lambda_exp), so lambda_exp <= 0).
    pub lambda_exp: Exp,
    pub lhs_exp: NormExp,
    pub rhs_exp: NormExp,
    pub verified: bool,
}

/// Interpolation bound on the polydisc: with rho0 = p^(s0) the stability
/// threshold of g and lambda = rho0^(1-c),
///   |g|_lambda <= |g|_1^c |g|_delta^(1-c),
/// verified exactly in exponent scale.
pub fn polydisc_hadamard_check(
    p: Prime,
    g: &TateElement,
    c: Exp,
) -> Result<HadamardCheck, TateError> {
    if c <= Exp::zero() || c >= Exp::from_integer(1) {
        return Err(TateError::BadInterpolationWeight);
    }
    let s0 = stability_threshold(p, g)?;
    let one_minus_c = Exp::from_integer(1) - c;
    let lambda_s = s0 * one_minus_c;
    let lhs = g.norm_at(p, lambda_s);
    let at_one = g.norm_at(p, Exp::zero());
    let at_delta = g.norm_at(p, -g.delta_exp());
    let rhs = match (at_one, at_delta) {
        (NormExp::Finite(a), NormExp::Finite(b)) => NormExp::Finite(c * a + one_minus_c * b),
        _ => NormExp::Infinite,
    };
    // |lhs| <= |rhs| reads >= in exponent scale
    let verified = match (lhs, rhs) {
        (NormExp::Infinite, _) => true,
        (NormExp::Finite(l), NormExp::Finite(r)) => l >= r,
        (NormExp::Finite(_), NormExp::Infinite) => false,
    };
    Ok(HadamardCheck {
        lambda_exp: -lambda_s,
        lhs_exp: lhs,
        rhs_exp: rhs,
        verified,
    })
}
