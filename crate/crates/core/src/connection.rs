//! Logarithmic connections on polyannuli.
//!
//! A connection of rank r in n variables is given by n matrices of
//! truncated series describing the action of the log derivations
//! t_i d/dt_i on a fixed basis. This module provides residues, the
//! construction of connections with constant commuting nilpotent
//! matrices, the canonical gauge recursion that transforms a connection
//! with nilpotent residues back into that constant form, certified
//! convergence radii for the gauge, eta-convergence checks for Taylor
//! multisequences, and the Taylor transport series.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::linalg::{LinalgError, Matrix};
use crate::padic::{Exp, NormExp, Prime, Rat};
use crate::series::{gauss_norm, RadiusTuple, SeriesError, TruncatedSeries, Window};

#[derive(Clone, Debug)]
pub enum ConnectionError {
    Series(SeriesError),
    Linalg(LinalgError),
    ShapeMismatch(&'static str),
    LaurentResidue { var: usize },
    NonNilpotentResidue { var: usize, witness: Matrix<Rat> },
    NonCommuting { left: usize, right: usize },
    NotNilpotent { index: usize },
    NotIntegrable,
    DeltaAboveOne,
    InvalidBudget,
    Internal(&'static str),
}

impl fmt::Display for ConnectionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConnectionError::Series(e) => write!(f, "{}", e),
            ConnectionError::Linalg(e) => write!(f, "{}", e),
            ConnectionError::ShapeMismatch(msg) => write!(f, "shape mismatch: {}", msg),
            ConnectionError::LaurentResidue { var } => {
                write!(f, "residue along t_{} undefined: Laurent window", var + 1)
            }
            ConnectionError::NonNilpotentResidue { var, .. } => {
                write!(f, "residue along t_{} is not nilpotent", var + 1)
            }
            ConnectionError::NonCommuting { left, right } => {
                write!(f, "matrices {} and {} do not commute", left + 1, right + 1)
            }
            ConnectionError::NotNilpotent { index } => {
                write!(f, "matrix {} is not nilpotent", index + 1)
            }
            ConnectionError::NotIntegrable => write!(f, "connection is not integrable"),
            ConnectionError::DeltaAboveOne => {
                write!(f, "delta exponent must be <= 0 (delta >= 1)")
            }
            ConnectionError::InvalidBudget => write!(f, "budget too small for the check"),
            ConnectionError::Internal(msg) => write!(f, "internal invariant violated: {}", msg),
        }
    }
}

impl From<SeriesError> for ConnectionError {
    fn from(e: SeriesError) -> Self {
        ConnectionError::Series(e)
    }
}

impl From<LinalgError> for ConnectionError {
    fn from(e: LinalgError) -> Self {
        ConnectionError::Linalg(e)
    }
}

/// A section expressed as coordinates over the connection's basis.
pub type Section = Vec<TruncatedSeries>;

/// Builds the constant section with the given coordinates.
pub fn constant_section(window: &Window, coords: &[Rat]) -> Section {
    coords
        .iter()
        .map(|c| TruncatedSeries::constant(window.clone(), c.clone()))
        .collect()
}

pub fn section_is_zero(v: &[TruncatedSeries]) -> bool {
    v.iter().all(TruncatedSeries::is_zero)
}

/// Rank-r log-connection in n variables over a shared window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogConnection {
    rank: usize,
    window: Window,
    matrices: Vec<Matrix<TruncatedSeries>>,
}

impl LogConnection {
    pub fn new(
        rank: usize,
        window: Window,
        matrices: Vec<Matrix<TruncatedSeries>>,
    ) -> Result<LogConnection, ConnectionError> {
        if rank == 0 {
            return Err(ConnectionError::ShapeMismatch("rank must be positive"));
        }
        if matrices.len() != window.num_vars() {
            return Err(ConnectionError::ShapeMismatch(
                "one matrix per variable is required",
            ));
        }
        for m in &matrices {
            if m.rows() != rank || m.cols() != rank {
                return Err(ConnectionError::ShapeMismatch("matrix is not rank x rank"));
            }
            for i in 0..rank {
                for j in 0..rank {
                    if m.entry(i, j).window() != &window {
                        return Err(ConnectionError::ShapeMismatch(
                            "entry window differs from the shared window",
                        ));
                    }
                }
            }
        }
        Ok(LogConnection {
            rank,
            window,
            matrices,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn num_vars(&self) -> usize {
        self.matrices.len()
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn matrix(&self, var: usize) -> &Matrix<TruncatedSeries> {
        &self.matrices[var]
    }

    pub fn matrices(&self) -> &[Matrix<TruncatedSeries>] {
        &self.matrices
    }

    /// Action of t_var d/dt_var on section coordinates: t dv/dt + N v.
    pub fn apply_log(&self, var: usize, v: &[TruncatedSeries]) -> Result<Section, ConnectionError> {
        let nv = self.matrices[var].mul_section(v)?;
        let mut out = Vec::with_capacity(self.rank);
        for (vi, ni) in v.iter().zip(nv) {
            out.push(vi.log_derivative(var).add(&ni)?);
        }
        Ok(out)
    }

    /// Action of d/dt_var on section coordinates: dv/dt + t^(-1) N v.
    pub fn apply_partial(
        &self,
        var: usize,
        v: &[TruncatedSeries],
    ) -> Result<Section, ConnectionError> {
        let nv = self.matrices[var].mul_section(v)?;
        let mut out = Vec::with_capacity(self.rank);
        for (vi, ni) in v.iter().zip(nv) {
            out.push(vi.partial_derivative(var).add(&ni.shift(var, -1))?);
        }
        Ok(out)
    }

    /// Integrability defects d_i(N_j) - d_j(N_i) + [N_i, N_j] for all
    /// pairs i < j, with their norms at radius 1; passes only when every
    /// defect vanishes exactly to the window.
    pub fn integrability_report(&self, p: Prime) -> IntegrabilityReport {
        let n = self.num_vars();
        let unit = RadiusTuple::unit(n);
        let mut pairs = Vec::new();
        let mut pass = true;
        for i in 0..n {
            for j in (i + 1)..n {
                let defect = self.integrability_defect(i, j);
                let (norm, zero) = match defect {
                    Ok(d) => (d.norm_exp(p, &unit), d.is_zero()),
                    Err(_) => (NormExp::one_value(), false),
                };
                if !zero {
                    pass = false;
                }
                pairs.push(PairDefect {
                    left: i,
                    right: j,
                    defect_norm_exp: norm,
                    vanishes: zero,
                });
            }
        }
        IntegrabilityReport { pairs, pass }
    }

    fn integrability_defect(
        &self,
        i: usize,
        j: usize,
    ) -> Result<Matrix<TruncatedSeries>, ConnectionError> {
        let ni = &self.matrices[i];
        let nj = &self.matrices[j];
        let a = nj.log_derivative(i);
        let b = ni.log_derivative(j);
        let bracket = ni.mul(nj)?.sub(&nj.mul(ni)?)?;
        Ok(a.sub(&b)?.add(&bracket)?)
    }

    /// Exact integrability: every pairwise defect vanishes to the window.
    pub fn is_integrable(&self) -> bool {
        let n = self.num_vars();
        for i in 0..n {
            for j in (i + 1)..n {
                match self.integrability_defect(i, j) {
                    Ok(d) if d.is_zero() => {}
                    _ => return false,
                }
            }
        }
        true
    }

    /// Residue along t_var = 0: the t_var-constant part of the matrix,
    /// with the remaining variables restricted to their constant terms.
    pub fn residue(&self, var: usize) -> Result<ResidueMatrix, ConnectionError> {
        if self.window.lower()[var] < 0 {
            return Err(ConnectionError::LaurentResidue { var });
        }
        let slice = self.matrices[var].extract_var_coeff(var, 0);
        let matrix = slice.constant_part();
        let has_nonconstant_part = !slice.is_constant();
        let nilpotency = matrix.nilpotency_index(self.rank);
        Ok(ResidueMatrix {
            var,
            matrix,
            nilpotency,
            has_nonconstant_part,
        })
    }
}

#[derive(Clone, Debug)]
pub struct PairDefect {
    pub left: usize,
    pub right: usize,
    pub defect_norm_exp: NormExp,
    pub vanishes: bool,
}

#[derive(Clone, Debug)]
pub struct IntegrabilityReport {
    pub pairs: Vec<PairDefect>,
    pub pass: bool,
}

/// Residue matrix along one boundary divisor.
#[derive(Clone, Debug)]
pub struct ResidueMatrix {
    pub var: usize,
    pub matrix: Matrix<Rat>,
    /// Minimal e <= rank with matrix^e = 0, when nilpotent.
    pub nilpotency: Option<usize>,
    /// True when the t_var-constant slice still involves other variables.
    pub has_nonconstant_part: bool,
}

impl ResidueMatrix {
    pub fn is_nilpotent(&self) -> bool {
        self.nilpotency.is_some()
    }
}

/// A coefficient space with commuting nilpotent endomorphisms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonodromyData {
    rank: usize,
    nilpotents: Vec<Matrix<Rat>>,
}

impl MonodromyData {
    pub fn new(rank: usize, nilpotents: Vec<Matrix<Rat>>) -> Result<MonodromyData, ConnectionError> {
        for (idx, n) in nilpotents.iter().enumerate() {
            if n.rows() != rank || n.cols() != rank {
                return Err(ConnectionError::ShapeMismatch("nilpotent is not rank x rank"));
            }
            if n.nilpotency_index(rank).is_none() {
                return Err(ConnectionError::NotNilpotent { index: idx });
            }
        }
        for i in 0..nilpotents.len() {
            for j in (i + 1)..nilpotents.len() {
                if !nilpotents[i].commutes_with(&nilpotents[j])? {
                    return Err(ConnectionError::NonCommuting { left: i, right: j });
                }
            }
        }
        Ok(MonodromyData { rank, nilpotents })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn num_vars(&self) -> usize {
        self.nilpotents.len()
    }

    pub fn nilpotents(&self) -> &[Matrix<Rat>] {
        &self.nilpotents
    }

    pub fn nilpotent(&self, i: usize) -> &Matrix<Rat> {
        &self.nilpotents[i]
    }

    /// Basis of the joint kernel of all nilpotents.
    pub fn joint_kernel(&self) -> Vec<Vec<Rat>> {
        if self.nilpotents.is_empty() {
            // empty family: everything is horizontal
            return Matrix::zeros(1, self.rank).kernel_basis();
        }
        let stacked = Matrix::from_fn(self.rank * self.nilpotents.len(), self.rank, |i, j| {
            let which = i / self.rank;
            let row = i % self.rank;
            self.nilpotents[which].entry(row, j).clone()
        });
        stacked.kernel_basis()
    }

    /// Minimal m such that every product of m of the endomorphisms
    /// (with repetition) vanishes; the length of the shortest filtration
    /// with trivial induced action on the quotients.
    pub fn shortest_filtration_length(&self) -> usize {
        let n = self.nilpotents.len();
        if n == 0 || self.nilpotents.iter().all(|m| m.is_zero()) {
            return 1;
        }
        let cap = n * (self.rank - 1) + 1;
        for m in 1..=cap {
            if self.all_products_vanish(m) {
                return m;
            }
        }
        cap
    }

    fn all_products_vanish(&self, m: usize) -> bool {
        // commuting factors: only multiplicity vectors matter
        let n = self.nilpotents.len();
        let mut mults = vec![0usize; n];
        self.products_vanish_rec(m, 0, &mut mults)
    }

    fn products_vanish_rec(&self, remaining: usize, var: usize, mults: &mut Vec<usize>) -> bool {
        if var + 1 == mults.len() {
            mults[var] = remaining;
            let ok = self.product_of_powers(mults).is_zero();
            mults[var] = 0;
            return ok;
        }
        for take in 0..=remaining {
            mults[var] = take;
            if !self.products_vanish_rec(remaining - take, var + 1, mults) {
                mults[var] = 0;
                return false;
            }
        }
        mults[var] = 0;
        true
    }

    fn product_of_powers(&self, mults: &[usize]) -> Matrix<Rat> {
        let mut acc = Matrix::identity(self.rank);
        for (n, &m) in self.nilpotents.iter().zip(mults) {
            for _ in 0..m {
                acc = acc.mul(n).expect("square matrices");
            }
        }
        acc
    }

    /// Conjugates every endomorphism by the basis matrix b: b^(-1) N b.
    pub fn conjugate(&self, b: &Matrix<Rat>) -> Result<MonodromyData, ConnectionError> {
        let binv = b.inverse().ok_or(LinalgError::NotInvertible)?;
        let nilpotents = self
            .nilpotents
            .iter()
            .map(|n| binv.mul(n).and_then(|x| x.mul(b)))
            .collect::<Result<Vec<_>, _>>()?;
        MonodromyData::new(self.rank, nilpotents)
    }
}

/// The connection whose log-derivation matrices are the given constant
/// commuting nilpotents.
pub fn build_unipotent(
    m: &MonodromyData,
    window: &Window,
) -> Result<LogConnection, ConnectionError> {
    if window.num_vars() != m.num_vars() {
        return Err(ConnectionError::ShapeMismatch(
            "window variables must match the number of endomorphisms",
        ));
    }
    let matrices = m
        .nilpotents()
        .iter()
        .map(|n| Matrix::from_rat(n, window))
        .collect();
    LogConnection::new(m.rank(), window.clone(), matrices)
}

/// A gauge matrix M congruent to the identity modulo the variables,
/// with a certified convergence radius exponent for its entries.
#[derive(Clone, Debug)]
pub struct GaugeTransform {
    matrix: Matrix<TruncatedSeries>,
    certified_radius_exp: Exp,
}

impl GaugeTransform {
    fn new(
        matrix: Matrix<TruncatedSeries>,
        certified_radius_exp: Exp,
    ) -> Result<GaugeTransform, ConnectionError> {
        if matrix.constant_part() != Matrix::identity(matrix.rows()) {
            return Err(ConnectionError::Internal(
                "gauge is not congruent to the identity",
            ));
        }
        Ok(GaugeTransform {
            matrix,
            certified_radius_exp,
        })
    }

    pub fn matrix(&self) -> &Matrix<TruncatedSeries> {
        &self.matrix
    }

    /// Entries certifiably converge on radii p^(-b) with b strictly
    /// larger than this exponent.
    pub fn certified_radius_exp(&self) -> Exp {
        self.certified_radius_exp
    }

    /// Coefficient matrix of t_var^i, with remaining variables kept.
    pub fn coefficient(&self, var: usize, i: i64) -> Matrix<Rat> {
        self.matrix.extract_var_coeff(var, i).constant_part()
    }
}

/// Exponent threshold below which the canonical gauge is certified:
/// radii p^(-b) with b > 2e/(p-1) + a_exp - 2e * delta_exp converge,
/// where a = p^(-a_exp) is the outer radius, delta = p^(-delta_exp) =
/// max(1, |N|_a), and e is the nilpotency index of the residue.
pub fn convergence_radius_bound(
    p: Prime,
    a_exp: Exp,
    delta: NormExp,
    e: usize,
) -> Result<Exp, ConnectionError> {
    let delta_exp = match delta {
        NormExp::Finite(d) if d <= Exp::zero() => d,
        NormExp::Infinite => return Err(ConnectionError::DeltaAboveOne),
        _ => return Err(ConnectionError::DeltaAboveOne),
    };
    let two_e = Exp::from_integer(2 * e as i64);
    Ok(two_e / Exp::from_integer((p.get() - 1) as i64) + a_exp - two_e * delta_exp)
}

struct GaugeStep {
    gauge: Matrix<TruncatedSeries>,
    residue_series: Matrix<TruncatedSeries>,
    threshold_exp: Exp,
}

/// One variable of the canonical gauge recursion, with coefficients in
/// the series ring of the remaining variables. Solves
/// (i + ad_{N0}) M_i = -sum_{j<i} N_{i-j} M_j by the finite Neumann sum
/// M_i = sum_{k<2e} (-1)^k i^(-k-1) ad_{N0}^k(rhs), then verifies
/// N M + d_var(M) - M N0 = 0 exactly to the window.
fn gauge_step(
    p: Prime,
    conn: &LogConnection,
    var: usize,
    radii: &RadiusTuple,
) -> Result<GaugeStep, ConnectionError> {
    let window = conn.window().clone();
    if window.lower()[var] < 0 {
        return Err(ConnectionError::LaurentResidue { var });
    }
    let rank = conn.rank();
    let t_max = window.upper()[var];
    let n_mat = conn.matrix(var);

    let n0 = n_mat.extract_var_coeff(var, 0);
    // nilpotency of the residue as a series matrix; index <= rank since the
    // coefficients embed in a field of fractions
    let mut e = None;
    let mut power = n0.clone();
    for k in 1..=rank {
        if power.is_zero() {
            e = Some(k);
            break;
        }
        power = power.mul(&n0)?;
    }
    let e = e.ok_or_else(|| ConnectionError::NonNilpotentResidue {
        var,
        witness: n0.constant_part(),
    })?;

    // delta = max(1, |N|) at the given radii
    let delta = NormExp::one_value().sup_value(n_mat.norm_exp(p, radii));
    let threshold_exp = convergence_radius_bound(p, radii.exps()[var], delta, e)?;

    // t_var-degree parts of N, as matrices over the remaining variables
    let parts: Vec<Matrix<TruncatedSeries>> = (0..=t_max)
        .map(|i| n_mat.extract_var_coeff(var, i))
        .collect();
    let frozen = parts[0].entry(0, 0).window().clone();

    let ad = |x: &Matrix<TruncatedSeries>| -> Result<Matrix<TruncatedSeries>, ConnectionError> {
        Ok(n0.mul(x)?.sub(&x.mul(&n0)?)?)
    };

    let mut coeffs: Vec<Matrix<TruncatedSeries>> = Vec::with_capacity(t_max as usize + 1);
    coeffs.push(Matrix::identity_series(rank, &frozen));
    for i in 1..=t_max {
        let mut rhs = Matrix::zero_series(rank, rank, &frozen);
        for j in 0..i {
            let part = &parts[(i - j) as usize];
            rhs = rhs.sub(&part.mul(&coeffs[j as usize])?)?;
        }
        let mut m_i = Matrix::zero_series(rank, rank, &frozen);
        let mut iterate = rhs;
        let inv_i = Rat::new(BigInt::one(), BigInt::from(i));
        let mut scale = inv_i.clone();
        for k in 0..(2 * e - 1) {
            let sign = if k % 2 == 0 { Rat::one() } else { -Rat::one() };
            m_i = m_i.add(&iterate.scale_rat(&(sign * scale.clone())))?;
            if k + 1 < 2 * e - 1 {
                iterate = ad(&iterate)?;
                scale *= inv_i.clone();
            }
        }
        coeffs.push(m_i);
    }

    // assemble M = sum_i M_i t_var^i over the full window
    let mut entry_terms: Vec<Vec<(Vec<i64>, Rat)>> = vec![Vec::new(); rank * rank];
    for (i, m_i) in coeffs.iter().enumerate() {
        for r in 0..rank {
            for c in 0..rank {
                for (exps, coeff) in m_i.entry(r, c).terms() {
                    let mut e = exps.clone();
                    e[var] = i as i64;
                    entry_terms[r * rank + c].push((e, coeff.clone()));
                }
            }
        }
    }
    let mut assembled = Vec::with_capacity(rank * rank);
    for terms in entry_terms {
        assembled.push(TruncatedSeries::new(window.clone(), terms)?);
    }
    let gauge = Matrix::from_fn(rank, rank, |r, c| assembled[r * rank + c].clone());

    let n0_full = n0.rewindow(&window)?;
    let residual = n_mat
        .mul(&gauge)?
        .add(&gauge.log_derivative(var))?
        .sub(&gauge.mul(&n0_full)?)?;
    if !residual.is_zero() {
        return Err(ConnectionError::Internal("gauge residual does not vanish"));
    }

    Ok(GaugeStep {
        gauge,
        residue_series: n0_full,
        threshold_exp,
    })
}

impl Matrix<TruncatedSeries> {
    /// Reinterprets every entry over a larger window; fails when a stored
    /// term falls outside the target window.
    fn rewindow(&self, window: &Window) -> Result<Matrix<TruncatedSeries>, ConnectionError> {
        let mut data = Vec::new();
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                let s = self.entry(i, j);
                let rebuilt = TruncatedSeries::new(
                    window.clone(),
                    s.terms().map(|(e, c)| (e.clone(), c.clone())),
                )?;
                data.push(rebuilt);
            }
        }
        Ok(Matrix::from_fn(self.rows(), self.cols(), |i, j| {
            data[i * self.cols() + j].clone()
        }))
    }
}

/// Canonical gauge in a single variable, the others frozen at their
/// constant terms. Returns the gauge M (with M = I at the origin) and
/// the constant residue it conjugates the derivation onto.
pub fn canonical_gauge_1var(
    p: Prime,
    conn: &LogConnection,
    var: usize,
    radii: &RadiusTuple,
) -> Result<(GaugeTransform, MonodromyData), ConnectionError> {
    let rank = conn.rank();
    let frozen_mat = conn.matrix(var).map_result(|s| s.freeze_others(var))?;
    let window = frozen_mat.entry(0, 0).window().clone();
    let mut matrices = vec![Matrix::zero_series(rank, rank, &window); conn.num_vars()];
    matrices[var] = frozen_mat;
    let frozen_conn = LogConnection::new(rank, window, matrices)?;

    let step = gauge_step(p, &frozen_conn, var, radii)?;
    let n0 = step.residue_series.constant_part();
    if !step.residue_series.is_constant() {
        return Err(ConnectionError::Internal(
            "frozen residue still involves other variables",
        ));
    }
    let data = MonodromyData::new(rank, vec![n0])?;
    let gauge = GaugeTransform::new(step.gauge, step.threshold_exp)?;
    Ok((gauge, data))
}

impl Matrix<TruncatedSeries> {
    fn map_result(
        &self,
        mut f: impl FnMut(&TruncatedSeries) -> Result<TruncatedSeries, SeriesError>,
    ) -> Result<Matrix<TruncatedSeries>, ConnectionError> {
        let mut data = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                data.push(f(self.entry(i, j))?);
            }
        }
        Ok(Matrix::from_fn(self.rows(), self.cols(), |i, j| {
            data[i * self.cols() + j].clone()
        }))
    }
}

/// Full canonical gauge: processes the variables in order, verifying
/// after each step that integrability has removed the processed variable
/// from every matrix, and returns the composite gauge together with the
/// constant commuting nilpotent matrices it exposes.
pub fn iterated_gauge(
    p: Prime,
    conn: &LogConnection,
    radii: &RadiusTuple,
) -> Result<(GaugeTransform, MonodromyData), ConnectionError> {
    let n = conn.num_vars();
    let rank = conn.rank();
    let window = conn.window().clone();
    for var in 0..n {
        let res = conn.residue(var)?;
        if !res.is_nilpotent() {
            return Err(ConnectionError::NonNilpotentResidue {
                var,
                witness: res.matrix,
            });
        }
    }
    if n > 1 && !conn.is_integrable() {
        return Err(ConnectionError::NotIntegrable);
    }

    let mut current = conn.clone();
    let mut total = Matrix::identity_series(rank, &window);
    let mut threshold: Option<Exp> = None;
    for var in 0..n {
        let step = gauge_step(p, &current, var, radii)?;
        threshold = Some(match threshold {
            Some(t) => t.max(step.threshold_exp),
            None => step.threshold_exp,
        });
        let inv = step.gauge.inverse()?;
        let mut new_matrices = Vec::with_capacity(n);
        for i in 0..n {
            let transformed = inv.mul(
                &current
                    .matrix(i)
                    .mul(&step.gauge)?
                    .add(&step.gauge.log_derivative(i))?,
            )?;
            new_matrices.push(transformed);
        }
        // integrability forces the processed variable out of every matrix
        for m in &new_matrices {
            for i in 0..rank {
                for j in 0..rank {
                    if m.entry(i, j).terms().any(|(e, _)| e[var] != 0) {
                        return Err(ConnectionError::Internal(
                            "gauge step left terms in the processed variable",
                        ));
                    }
                }
            }
        }
        current = LogConnection::new(rank, window.clone(), new_matrices)?;
        total = total.mul(&step.gauge)?;
    }

    for m in current.matrices() {
        if !m.is_constant() {
            return Err(ConnectionError::Internal(
                "iterated gauge did not reach constant matrices",
            ));
        }
    }
    let constants: Vec<Matrix<Rat>> = current.matrices().iter().map(|m| m.constant_part()).collect();
    let data = MonodromyData::new(rank, constants.clone())?;

    // conjugation relation against the original connection, exactly
    for i in 0..n {
        let rhs = total.mul(&Matrix::from_rat(&constants[i], &window))?;
        let lhs = conn
            .matrix(i)
            .mul(&total)?
            .add(&total.log_derivative(i))?;
        if !lhs.sub(&rhs)?.is_zero() {
            return Err(ConnectionError::Internal(
                "composite gauge fails the conjugation relation",
            ));
        }
    }

    let gauge = GaugeTransform::new(total, threshold.unwrap_or_else(Exp::zero))?;
    Ok((gauge, data))
}

/// Outcome of an eta-convergence check, certified up to the budget only.
#[derive(Clone, Debug)]
pub struct EtaConvergenceVerdict {
    pub certified: bool,
    pub eta_exp: Exp,
    /// Worst (smallest) shifted exponent per total derivative order:
    /// min over |I| = d of exponent(|term_I|_R) + |I| * eta_exp.
    pub level_exps: Vec<NormExp>,
    pub settle_from: usize,
}

/// Checks that the multisequence (1/I!) (d/dt)^I v is eta-null at the
/// radii R, up to total order `budget`: the shifted exponents
/// exponent(|term_I|_R) + |I| eta_exp must grow. The verdict compares
/// the worst level of the first half of [settle_from, budget] with the
/// worst level of the second half; it certifies behavior only up to the
/// budget.
pub fn eta_convergence_check(
    p: Prime,
    conn: &LogConnection,
    v: &[TruncatedSeries],
    eta_exp: Exp,
    r: &RadiusTuple,
    budget: usize,
    settle_from: Option<usize>,
) -> Result<EtaConvergenceVerdict, ConnectionError> {
    if eta_exp <= Exp::zero() {
        return Err(ConnectionError::ShapeMismatch("eta exponent must be positive"));
    }
    let start = settle_from.unwrap_or(budget / 2);
    if budget < 2 || start + 1 > budget {
        return Err(ConnectionError::InvalidBudget);
    }
    let n = conn.num_vars();
    let mut level: BTreeMap<Vec<i64>, Section> = BTreeMap::new();
    level.insert(vec![0; n], v.to_vec());
    let mut level_exps = Vec::with_capacity(budget + 1);
    for d in 0..=budget {
        let mut worst = NormExp::Infinite;
        for (idx, term) in &level {
            let mut norm = term
                .iter()
                .map(|s| gauss_norm(p, s, r))
                .fold(NormExp::Infinite, NormExp::sup_value);
            if let NormExp::Finite(e) = norm {
                let total: i64 = idx.iter().sum();
                norm = NormExp::Finite(e + eta_exp * Exp::from_integer(total));
            }
            worst = worst.sup_value(norm);
        }
        level_exps.push(worst);
        if d == budget {
            break;
        }
        // next level: term_{I + e_k} = 1/(i_k + 1) d_k term_I for the first
        // variable k of the new index, so each index is built exactly once
        let mut next: BTreeMap<Vec<i64>, Section> = BTreeMap::new();
        for (idx, term) in &level {
            let first_nonzero = idx.iter().position(|&e| e > 0).unwrap_or(n);
            for k in 0..=first_nonzero.min(n - 1) {
                let mut new_idx = idx.clone();
                new_idx[k] += 1;
                let scale = Rat::new(BigInt::one(), BigInt::from(new_idx[k]));
                let derived = conn.apply_partial(k, term)?;
                let scaled: Section = derived.iter().map(|s| s.scale(&scale)).collect();
                next.insert(new_idx, scaled);
            }
        }
        level = next;
    }

    let mid = (start + budget) / 2;
    let first = level_exps[start..=mid]
        .iter()
        .fold(NormExp::Infinite, |acc, &x| acc.sup_value(x));
    let second = level_exps[mid + 1..=budget]
        .iter()
        .fold(NormExp::Infinite, |acc, &x| acc.sup_value(x));
    let certified = second == NormExp::Infinite || second > first;
    Ok(EtaConvergenceVerdict {
        certified,
        eta_exp,
        level_exps,
        settle_from: start,
    })
}

/// Taylor transport series: the coefficient of prod_j (u_j - 1)^(i_j)/i_j!
/// is the falling-factorial operator product prod_j prod_{l<i_j} (D_j - l)
/// applied to the basis, where D_j is the log derivation action.
#[derive(Clone, Debug)]
pub struct TaylorTransport {
    pub order: usize,
    pub rank: usize,
    pub coeffs: BTreeMap<Vec<i64>, Matrix<TruncatedSeries>>,
}

impl TaylorTransport {
    /// Coefficient matrix, zero when the index was not computed.
    pub fn coefficient(&self, idx: &[i64]) -> Option<&Matrix<TruncatedSeries>> {
        self.coeffs.get(idx)
    }

    /// Worst shifted exponent per total degree of the multisequence
    /// F_I / I!: min over |I| = d of exponent(|F_I/I!|_R) + d * eta_exp.
    pub fn decay_levels(&self, p: Prime, eta_exp: Exp, r: &RadiusTuple) -> Vec<NormExp> {
        let mut per_degree: BTreeMap<i64, NormExp> = BTreeMap::new();
        for d in 0..=(self.order as i64) {
            per_degree.insert(d, NormExp::Infinite);
        }
        for (idx, m) in &self.coeffs {
            let total: i64 = idx.iter().sum();
            let scaled = m.scale_rat(&(Rat::one() / multi_factorial(idx)));
            let mut norm = scaled.norm_exp(p, r);
            if let NormExp::Finite(e) = norm {
                norm = NormExp::Finite(e + eta_exp * Exp::from_integer(total));
            }
            let entry = per_degree.entry(total).or_insert(NormExp::Infinite);
            *entry = entry.sup_value(norm);
        }
        per_degree.into_values().collect()
    }

    /// Eta-null verdict on the coefficient decay: the worst level of the
    /// later half of the computed positive orders must exceed the worst
    /// level of the earlier half. Certified up to the computed order only.
    pub fn decay_certified(&self, p: Prime, eta_exp: Exp, r: &RadiusTuple) -> bool {
        let levels = self.decay_levels(p, eta_exp, r);
        if levels.len() < 3 {
            return true;
        }
        // degree 0 is the input itself; the decay claim concerns the tail
        let mid = (1 + levels.len()) / 2;
        let first = levels[1..mid]
            .iter()
            .fold(NormExp::Infinite, |acc, &x| acc.sup_value(x));
        let second = levels[mid..]
            .iter()
            .fold(NormExp::Infinite, |acc, &x| acc.sup_value(x));
        second == NormExp::Infinite || second > first
    }
}

/// Applies prod_j prod_{l<i_j} (D_j - l) to a section, factors ordered by
/// increasing l per variable.
pub fn falling_factorial_apply(
    conn: &LogConnection,
    idx: &[i64],
    v: &[TruncatedSeries],
) -> Result<Section, ConnectionError> {
    let mut out: Section = v.to_vec();
    for (var, &count) in idx.iter().enumerate() {
        for l in 0..count {
            let applied = conn.apply_log(var, &out)?;
            let l_rat = Rat::from_integer(BigInt::from(l));
            out = applied
                .iter()
                .zip(&out)
                .map(|(a, b)| a.sub(&b.scale(&l_rat)))
                .collect::<Result<_, _>>()?;
        }
    }
    Ok(out)
}

/// Computes the transport coefficients for all multi-indices of total
/// degree up to `order`. Requires nilpotent residues.
pub fn taylor_transport(
    conn: &LogConnection,
    order: usize,
) -> Result<TaylorTransport, ConnectionError> {
    let n = conn.num_vars();
    let rank = conn.rank();
    for var in 0..n {
        let res = conn.residue(var)?;
        if !res.is_nilpotent() {
            return Err(ConnectionError::NonNilpotentResidue {
                var,
                witness: res.matrix,
            });
        }
    }
    let window = conn.window().clone();
    let mut coeffs: BTreeMap<Vec<i64>, Matrix<TruncatedSeries>> = BTreeMap::new();
    coeffs.insert(vec![0; n], Matrix::identity_series(rank, &window));
    let mut frontier: Vec<Vec<i64>> = vec![vec![0; n]];
    for _ in 1..=order {
        let mut next_frontier = Vec::new();
        for idx in &frontier {
            let first_nonzero = idx.iter().position(|&e| e > 0).unwrap_or(n);
            for k in 0..=first_nonzero.min(n - 1) {
                let mut new_idx = idx.clone();
                new_idx[k] += 1;
                let l = new_idx[k] - 1;
                let prev = coeffs.get(idx).expect("previous level present");
                let mut columns = Vec::with_capacity(rank);
                for c in 0..rank {
                    let col: Section = prev.column(c);
                    let applied = conn.apply_log(k, &col)?;
                    let l_rat = Rat::from_integer(BigInt::from(l));
                    let col_new: Section = applied
                        .iter()
                        .zip(&col)
                        .map(|(a, b)| a.sub(&b.scale(&l_rat)))
                        .collect::<Result<_, _>>()?;
                    columns.push(col_new);
                }
                let mat = Matrix::from_fn(rank, rank, |i, j| columns[j][i].clone());
                coeffs.insert(new_idx.clone(), mat);
                next_frontier.push(new_idx);
            }
        }
        frontier = next_frontier;
    }
    Ok(TaylorTransport { order, rank, coeffs })
}

fn factorial(n: i64) -> Rat {
    let mut acc = BigInt::one();
    for k in 2..=n {
        acc *= BigInt::from(k);
    }
    Rat::from_integer(acc)
}

fn multi_factorial(idx: &[i64]) -> Rat {
    idx.iter().map(|&i| factorial(i)).product()
}

/// Checks the transport cocycle identity to the given total order: with
/// F_K the falling-factorial operators and u u' - 1 expanded as
/// v + w + v w per variable,
///   sum_{I,J} v^I w^J F_I F_J / (I! J!) = sum_K (v + w + v w)^K F_K / K!.
/// Requires an integrable connection with nilpotent residues.
pub fn taylor_cocycle_check(
    conn: &LogConnection,
    order: usize,
) -> Result<bool, ConnectionError> {
    let n = conn.num_vars();
    let rank = conn.rank();
    if n > 1 && !conn.is_integrable() {
        return Err(ConnectionError::NotIntegrable);
    }
    let transport = taylor_transport(conn, order)?;

    let indices: Vec<Vec<i64>> = transport.coeffs.keys().cloned().collect();
    for i_idx in &indices {
        let deg_i: i64 = i_idx.iter().sum();
        for j_idx in &indices {
            let deg_j: i64 = j_idx.iter().sum();
            if deg_i + deg_j > order as i64 {
                continue;
            }
            // left side: F_I applied to the columns of F_J, scaled by 1/(I! J!)
            let f_j = transport.coeffs.get(j_idx).expect("computed");
            let mut columns = Vec::with_capacity(rank);
            for c in 0..rank {
                let col = f_j.column(c);
                columns.push(falling_factorial_apply(conn, i_idx, &col)?);
            }
            let scale = Rat::one() / (multi_factorial(i_idx) * multi_factorial(j_idx));
            let lhs = Matrix::from_fn(rank, rank, |r, c| columns[c][r].clone()).scale_rat(&scale);

            // right side: sum over componentwise c <= min(I, J) of
            // F_{I+J-C} / prod_k c_k! (i_k - c_k)! (j_k - c_k)!
            let window = conn.window().clone();
            let mut rhs = Matrix::zero_series(rank, rank, &window);
            let maxima: Vec<i64> = i_idx
                .iter()
                .zip(j_idx)
                .map(|(&a, &b)| a.min(b))
                .collect();
            let mut c_idx = vec![0i64; n];
            loop {
                let k_idx: Vec<i64> = i_idx
                    .iter()
                    .zip(j_idx.iter().zip(&c_idx))
                    .map(|(&a, (&b, &c))| a + b - c)
                    .collect();
                let f_k = transport
                    .coeffs
                    .get(&k_idx)
                    .ok_or(ConnectionError::Internal("missing transport coefficient"))?;
                let mut denom = Rat::one();
                for k in 0..n {
                    denom = denom
                        * factorial(c_idx[k])
                        * factorial(i_idx[k] - c_idx[k])
                        * factorial(j_idx[k] - c_idx[k]);
                }
                rhs = rhs.add(&f_k.scale_rat(&(Rat::one() / denom)))?;
                // advance the componentwise counter
                let mut k = 0;
                loop {
                    if k == n {
                        break;
                    }
                    c_idx[k] += 1;
                    if c_idx[k] <= maxima[k] {
                        break;
                    }
                    c_idx[k] = 0;
                    k += 1;
                }
                if k == n {
                    break;
                }
            }

            if !lhs.sub(&rhs)?.is_zero() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
