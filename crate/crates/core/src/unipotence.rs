//! Limit-operator machinery: binomial operator polynomials, averaging
//! operators whose limits project onto horizontal sections, and the
//! construction of unipotent filtrations.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::connection::{
    iterated_gauge, ConnectionError, GaugeTransform, LogConnection,
    MonodromyData, Section,
};
use crate::linalg::{extend_basis, Matrix};
use crate::padic::{Prime, Rat};
use crate::series::{RadiusTuple, TruncatedSeries, Window};

#[derive(Clone, Debug)]
pub enum UnipotenceError {
    NotIntegerValued { binomial_index: usize },
    BadPrefactor { expected: usize, got: usize },
    NoStabilization { budget: usize },
    UnexpectedSupport { index: usize },
    NotUnipotent { var: usize, residue: Matrix<Rat>, power_checked: usize },
    Connection(ConnectionError),
}

impl fmt::Display for UnipotenceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnipotenceError::NotIntegerValued { binomial_index } => {
                write!(
                    f,
                    "polynomial is not integer-valued (binomial coefficient {} is fractional)",
                    binomial_index
                )
            }
            UnipotenceError::BadPrefactor { expected, got } => {
                write!(f, "prefactor list has length {}, expected {}", got, expected)
            }
            UnipotenceError::NoStabilization { budget } => {
                write!(f, "limit sequence did not stabilize within budget {}", budget)
            }
            UnipotenceError::UnexpectedSupport { index } => {
                write!(f, "difference polynomial has support below index {}", index)
            }
            UnipotenceError::NotUnipotent { var, power_checked, .. } => {
                write!(
                    f,
                    "module is not unipotent: residue along t_{} has nonzero power {}",
                    var + 1,
                    power_checked
                )
            }
            UnipotenceError::Connection(e) => write!(f, "{}", e),
        }
    }
}

impl From<ConnectionError> for UnipotenceError {
    fn from(e: ConnectionError) -> Self {
        match e {
            ConnectionError::NonNilpotentResidue { var, witness } => {
                let power = witness.rows();
                UnipotenceError::NotUnipotent {
                    var,
                    residue: witness,
                    power_checked: power,
                }
            }
            other => UnipotenceError::Connection(other),
        }
    }
}

/// A polynomial carrying the integers into the integers, stored by its
/// coordinates over the binomial basis P_j(x) = x(x-1)...(x-j+1)/j!.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntegerValuedPoly {
    coeffs: BTreeMap<usize, BigInt>,
}

impl IntegerValuedPoly {
    pub fn coeff(&self, j: usize) -> BigInt {
        self.coeffs.get(&j).cloned().unwrap_or_else(BigInt::zero)
    }

    pub fn support(&self) -> Vec<usize> {
        self.coeffs.keys().copied().collect()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Exact conversion back to monomial coefficients.
    pub fn to_monomial(&self) -> Vec<Rat> {
        let degree = self.coeffs.keys().max().copied().unwrap_or(0);
        let mut acc = vec![Rat::zero(); degree + 1];
        for (&j, c) in &self.coeffs {
            let pj = binomial_basis_poly(j);
            let cr = Rat::from_integer(c.clone());
            for (k, a) in pj.iter().enumerate() {
                acc[k] += a.clone() * cr.clone();
            }
        }
        acc
    }
}

/// Monomial coefficients of P_j(x) = x(x-1)...(x-j+1)/j!.
pub fn binomial_basis_poly(j: usize) -> Vec<Rat> {
    let mut poly = vec![Rat::one()];
    for l in 0..j {
        // multiply by (x - l) / (l + 1)
        let mut next = vec![Rat::zero(); poly.len() + 1];
        let l_rat = Rat::from_integer(BigInt::from(l));
        let div = Rat::from_integer(BigInt::from(l + 1));
        for (k, c) in poly.iter().enumerate() {
            next[k + 1] += c.clone() / div.clone();
            next[k] -= c.clone() * l_rat.clone() / div.clone();
        }
        poly = next;
    }
    poly
}

fn eval_poly(coeffs: &[Rat], x: &Rat) -> Rat {
    let mut acc = Rat::zero();
    for c in coeffs.iter().rev() {
        acc = acc * x.clone() + c.clone();
    }
    acc
}

/// Exact change of basis from monomial coefficients to the binomial
/// basis, via the finite difference table at 0, 1, 2, ...; errors when
/// some coordinate is fractional (the polynomial is not integer-valued).
pub fn binomial_decompose(monomial: &[Rat]) -> Result<IntegerValuedPoly, UnipotenceError> {
    let degree = monomial.len().saturating_sub(1);
    let mut values: Vec<Rat> = (0..=degree)
        .map(|k| eval_poly(monomial, &Rat::from_integer(BigInt::from(k))))
        .collect();
    let mut coeffs = BTreeMap::new();
    for j in 0..=degree {
        let c = values[0].clone();
        if !c.denom().is_one() && !c.is_zero() {
            return Err(UnipotenceError::NotIntegerValued { binomial_index: j });
        }
        if !c.is_zero() {
            if !c.denom().is_one() {
                return Err(UnipotenceError::NotIntegerValued { binomial_index: j });
            }
            coeffs.insert(j, c.numer().clone());
        }
        for k in 0..(values.len() - 1) {
            values[k] = values[k + 1].clone() - values[k].clone();
        }
        values.pop();
    }
    Ok(IntegerValuedPoly { coeffs })
}

/// Monomial coefficients of Q_j(x) = x^(d-1) ((1-x)(2-x)...(j-x)/j!)^d.
pub fn q_poly(j: u64, d: u64) -> Vec<Rat> {
    assert!(j >= 1 && d >= 1);
    // base = prod_{l=1..j} (l - x) / j!
    let mut base = vec![Rat::one()];
    for l in 1..=j {
        let mut next = vec![Rat::zero(); base.len() + 1];
        let l_rat = Rat::from_integer(BigInt::from(l));
        for (k, c) in base.iter().enumerate() {
            next[k] += c.clone() * l_rat.clone();
            next[k + 1] -= c.clone();
        }
        base = next;
    }
    let fact = Rat::from_integer((1..=j).map(BigInt::from).fold(BigInt::one(), |a, b| a * b));
    for c in base.iter_mut() {
        *c = c.clone() / fact.clone();
    }
    // raise to the d-th power
    let mut power = vec![Rat::one()];
    for _ in 0..d {
        power = poly_mul(&power, &base);
    }
    // multiply by x^(d-1)
    let mut out = vec![Rat::zero(); (d - 1) as usize];
    out.extend(power);
    out
}

fn poly_mul(a: &[Rat], b: &[Rat]) -> Vec<Rat> {
    let mut out = vec![Rat::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x.clone() * y.clone();
        }
    }
    out
}

fn poly_sub(a: &[Rat], b: &[Rat]) -> Vec<Rat> {
    let len = a.len().max(b.len());
    (0..len)
        .map(|k| {
            let x = a.get(k).cloned().unwrap_or_else(Rat::zero);
            let y = b.get(k).cloned().unwrap_or_else(Rat::zero);
            x - y
        })
        .collect()
}

/// The binomial-basis decomposition of Q_{j+1} - Q_j.
#[derive(Clone, Debug)]
pub struct QDifference {
    pub poly: IntegerValuedPoly,
    /// Smallest binomial index with nonzero coefficient.
    pub min_index: usize,
    /// Largest binomial index with nonzero coefficient.
    pub max_index: usize,
}

/// Decomposes Q_{j+1} - Q_j over the binomial basis, checking that every
/// coordinate is an integer and that the support starts above index j.
pub fn q_difference_support(j: u64, d: u64) -> Result<QDifference, UnipotenceError> {
    let diff = poly_sub(&q_poly(j + 1, d), &q_poly(j, d));
    let poly = binomial_decompose(&diff)?;
    let support = poly.support();
    let min_index = *support.first().ok_or(UnipotenceError::UnexpectedSupport { index: 0 })?;
    let max_index = *support.last().expect("nonempty support");
    if min_index <= j as usize {
        return Err(UnipotenceError::UnexpectedSupport { index: min_index });
    }
    Ok(QDifference {
        poly,
        min_index,
        max_index,
    })
}

/// Applies a polynomial in the log derivation of `var` to a section,
/// by operator Horner evaluation.
pub fn apply_operator_poly(
    conn: &LogConnection,
    var: usize,
    poly: &[Rat],
    v: &[TruncatedSeries],
) -> Result<Section, UnipotenceError> {
    let window = v[0].window().clone();
    let zero: Section = v.iter().map(|_| TruncatedSeries::zero(window.clone())).collect();
    let mut acc = zero;
    for c in poly.iter().rev() {
        let applied = conn.apply_log(var, &acc)?;
        acc = applied
            .iter()
            .zip(v)
            .map(|(a, b)| a.add(&b.scale(c)))
            .collect::<Result<_, _>>()
            .map_err(ConnectionError::from)?;
    }
    Ok(acc)
}

/// The averaging operator: a prefactor of log derivations followed by
/// prod_{i<=n} prod_{j<=l} (1 - D_i/j)^m (1 + D_i/j)^m applied through
/// the connection action, exactly on truncated series.
pub fn dl_operator(
    conn: &LogConnection,
    v: &[TruncatedSeries],
    l: u64,
    m: usize,
    prefactor: &[usize],
) -> Result<Section, UnipotenceError> {
    assert!(l >= 1, "l must be at least 1");
    if prefactor.len() + 1 != m {
        return Err(UnipotenceError::BadPrefactor {
            expected: m.saturating_sub(1),
            got: prefactor.len(),
        });
    }
    let mut w: Section = v.to_vec();
    for var in 0..conn.num_vars() {
        for j in 1..=l {
            let jj = Rat::from_integer(BigInt::from(j * j));
            for _ in 0..m {
                // (1 - D/j)(1 + D/j) = 1 - D^2/j^2
                let d1 = conn.apply_log(var, &w)?;
                let d2 = conn.apply_log(var, &d1)?;
                w = w
                    .iter()
                    .zip(&d2)
                    .map(|(a, b)| a.sub(&b.scale(&(Rat::one() / jj.clone()))))
                    .collect::<Result<_, _>>()
                    .map_err(ConnectionError::from)?;
            }
        }
    }
    for &var in prefactor {
        w = conn.apply_log(var, &w)?;
    }
    Ok(w)
}

/// Closed form of the averaging operator on a coefficient expansion over
/// the constant basis: the term at J becomes
/// t^J (j_{i_1}+N_{i_1}) ... prod_i prod_j (1 - (j_i+N_i)^2/j^2)^m v_J.
pub fn dl_closed_form(
    data: &MonodromyData,
    expansion: &BTreeMap<Vec<i64>, Vec<Rat>>,
    window: &Window,
    l: u64,
    m: usize,
    prefactor: &[usize],
) -> Result<Section, UnipotenceError> {
    assert!(l >= 1, "l must be at least 1");
    if prefactor.len() + 1 != m {
        return Err(UnipotenceError::BadPrefactor {
            expected: m.saturating_sub(1),
            got: prefactor.len(),
        });
    }
    let rank = data.rank();
    let mut out: Vec<BTreeMap<Vec<i64>, Rat>> = vec![BTreeMap::new(); rank];
    for (j_idx, coords) in expansion {
        let mut u = coords.clone();
        for (var, n) in data.nilpotents().iter().enumerate() {
            let shifted = n.add(&Matrix::identity(rank).scale(&Rat::from_integer(
                BigInt::from(j_idx[var]),
            )))
            .map_err(ConnectionError::from)?;
            for j in 1..=l {
                let jj = Rat::from_integer(BigInt::from(j * j));
                for _ in 0..m {
                    let b1 = shifted.mul_vec(&u).map_err(ConnectionError::from)?;
                    let b2 = shifted.mul_vec(&b1).map_err(ConnectionError::from)?;
                    u = u
                        .iter()
                        .zip(&b2)
                        .map(|(a, b)| a.clone() - b.clone() / jj.clone())
                        .collect();
                }
            }
        }
        for &var in prefactor {
            let shifted = data.nilpotent(var).add(&Matrix::identity(rank).scale(
                &Rat::from_integer(BigInt::from(j_idx[var])),
            ))
            .map_err(ConnectionError::from)?;
            u = shifted.mul_vec(&u).map_err(ConnectionError::from)?;
        }
        for (row, c) in u.into_iter().enumerate() {
            if !c.is_zero() {
                let entry = out[row].entry(j_idx.clone()).or_insert_with(Rat::zero);
                *entry += c;
            }
        }
    }
    let section = out
        .into_iter()
        .map(|terms| TruncatedSeries::new(window.clone(), terms))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| UnipotenceError::Connection(ConnectionError::Series(e)))?;
    Ok(section)
}

/// Which limit sequence to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LimitStrategy {
    /// Averaging operators over all variables with a derivation prefactor.
    DlSequence,
    /// Operator polynomials Q_j in the last variable's log derivation.
    QjSequence,
}

fn sections_equal(a: &[TruncatedSeries], b: &[TruncatedSeries]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.terms().eq(y.terms()))
}

/// Runs a limit sequence on `v` until two successive values agree exactly
/// to the truncation window, then verifies that the limit is killed by
/// every log derivation. Returns `None` when the limit is zero.
pub fn horizontal_limit(
    p: Prime,
    conn: &LogConnection,
    v: &[TruncatedSeries],
    strategy: LimitStrategy,
    budget: usize,
) -> Result<Option<Section>, UnipotenceError> {
    let (_, data) = iterated_gauge(p, conn, &RadiusTuple::unit(conn.num_vars()))?;
    horizontal_limit_with_data(conn, &data, v, strategy, budget)
}

/// As [`horizontal_limit`], but with the constant data already known.
pub fn horizontal_limit_with_data(
    conn: &LogConnection,
    data: &MonodromyData,
    v: &[TruncatedSeries],
    strategy: LimitStrategy,
    budget: usize,
) -> Result<Option<Section>, UnipotenceError> {
    let mut previous: Option<Section> = None;
    let mut stabilized: Option<Section> = None;
    match strategy {
        LimitStrategy::DlSequence => {
            let m = data.shortest_filtration_length();
            let prefactor = choose_prefactor(data, m)
                .ok_or(UnipotenceError::NoStabilization { budget })?;
            for l in 1..=(budget as u64) {
                let w = dl_operator(conn, v, l, m, &prefactor)?;
                if let Some(prev) = &previous {
                    if sections_equal(prev, &w) {
                        stabilized = Some(w);
                        break;
                    }
                }
                previous = Some(w);
            }
        }
        LimitStrategy::QjSequence => {
            let var = conn.num_vars() - 1;
            let d = data.nilpotent(var).nilpotency_index(data.rank()).ok_or(
                UnipotenceError::NotUnipotent {
                    var,
                    residue: data.nilpotent(var).clone(),
                    power_checked: data.rank(),
                },
            )?;
            for j in 1..=(budget as u64) {
                let w = apply_operator_poly(conn, var, &q_poly(j, d as u64), v)?;
                if let Some(prev) = &previous {
                    if sections_equal(prev, &w) {
                        stabilized = Some(w);
                        break;
                    }
                }
                previous = Some(w);
            }
        }
    }
    let w = stabilized.ok_or(UnipotenceError::NoStabilization { budget })?;
    // the limit must be horizontal: every log derivation kills it exactly
    for var in 0..conn.num_vars() {
        let dv = conn.apply_log(var, &w)?;
        if !crate::connection::section_is_zero(&dv) {
            return Err(UnipotenceError::Connection(ConnectionError::Internal(
                "stabilized limit is not horizontal",
            )));
        }
    }
    if crate::connection::section_is_zero(&w) {
        Ok(None)
    } else {
        Ok(Some(w))
    }
}

/// Lexicographically first tuple (i_1, ..., i_{m-1}) whose endomorphism
/// product is nonzero; all length-m products vanish by the choice of m.
pub fn choose_prefactor(data: &MonodromyData, m: usize) -> Option<Vec<usize>> {
    let n = data.num_vars();
    let len = m - 1;
    if len == 0 {
        return Some(Vec::new());
    }
    let mut tuple = vec![0usize; len];
    loop {
        let mut prod = Matrix::identity(data.rank());
        for &i in &tuple {
            prod = prod.mul(data.nilpotent(i)).expect("square");
        }
        if !prod.is_zero() {
            return Some(tuple);
        }
        // odometer advance, rightmost position fastest (lexicographic order)
        let mut pos = len;
        loop {
            if pos == 0 {
                return None;
            }
            pos -= 1;
            tuple[pos] += 1;
            if tuple[pos] < n {
                break;
            }
            tuple[pos] = 0;
        }
    }
}

/// Searches candidate sections t^J e_i for one whose limit is a nonzero
/// horizontal section.
pub fn extract_horizontal(
    p: Prime,
    conn: &LogConnection,
    budget: usize,
) -> Result<Option<Section>, UnipotenceError> {
    let (_, data) = iterated_gauge(p, conn, &RadiusTuple::unit(conn.num_vars()))?;
    let window = conn.window().clone();
    let rank = conn.rank();
    let mut candidates: Vec<Section> = Vec::new();
    for i in 0..rank {
        let coords: Vec<Rat> = (0..rank)
            .map(|k| if k == i { Rat::one() } else { Rat::zero() })
            .collect();
        candidates.push(crate::connection::constant_section(&window, &coords));
    }
    // monomial multiples widen the search when the basis candidates die
    let lows = window.lower().to_vec();
    let his = window.upper().to_vec();
    for i in 0..rank {
        for var in 0..conn.num_vars() {
            for e in [lows[var].max(-2), 1.min(his[var])] {
                if e == 0 {
                    continue;
                }
                let mut sec = candidates[i].clone();
                for s in sec.iter_mut() {
                    *s = s.shift(var, e);
                }
                candidates.push(sec);
            }
        }
    }
    for cand in candidates {
        match horizontal_limit_with_data(conn, &data, &cand, LimitStrategy::DlSequence, budget) {
            Ok(Some(w)) => return Ok(Some(w)),
            Ok(None) => continue,
            Err(UnipotenceError::NoStabilization { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

/// A unipotent filtration: the canonical gauge, the ranks of the steps,
/// the constant data in a basis adapted to the filtration, and that basis.
#[derive(Clone, Debug)]
pub struct FiltrationResult {
    pub gauge: GaugeTransform,
    pub ranks: Vec<usize>,
    pub data: MonodromyData,
    pub basis: Matrix<Rat>,
}

/// Builds the filtration by iterated joint kernels of the constant data
/// exposed by the canonical gauge. Fails with the offending residue when
/// some residue is not nilpotent.
pub fn unipotent_filtration(
    p: Prime,
    conn: &LogConnection,
    radii: &RadiusTuple,
) -> Result<FiltrationResult, UnipotenceError> {
    let (gauge, data) = iterated_gauge(p, conn, radii)?;
    let (ranks, basis) = filtration_of_data(&data)?;
    let adapted = data.conjugate(&basis)?;
    verify_block_structure(&adapted, &ranks)?;
    Ok(FiltrationResult {
        gauge,
        ranks,
        data: adapted,
        basis,
    })
}

/// Iterated joint kernels K_1 < K_2 < ... of commuting nilpotents,
/// returned as strictly increasing ranks and an adapted basis matrix
/// whose first r_s columns span K_s.
pub fn filtration_of_data(
    data: &MonodromyData,
) -> Result<(Vec<usize>, Matrix<Rat>), UnipotenceError> {
    let rank = data.rank();
    let mut basis: Vec<Vec<Rat>> = Vec::new();
    let mut ranks = Vec::new();
    while basis.len() < rank {
        let step_kernel = if basis.is_empty() {
            data.joint_kernel()
        } else {
            // v with N_i v inside the current span, for all i
            let annihilator = span_annihilator(&basis, rank);
            let mut rows: Vec<Vec<Rat>> = Vec::new();
            for n in data.nilpotents() {
                let composed = annihilator.mul(n).map_err(ConnectionError::from)?;
                for r in 0..composed.rows() {
                    rows.push((0..rank).map(|c| composed.entry(r, c).clone()).collect());
                }
            }
            if rows.is_empty() {
                // no constraints: everything belongs to the next step
                Matrix::zeros(1, rank).kernel_basis()
            } else {
                Matrix::from_rows(rows)
                    .map_err(ConnectionError::from)?
                    .kernel_basis()
            }
        };
        let before = basis.len();
        extend_basis(&mut basis, &step_kernel);
        if basis.len() == before {
            return Err(UnipotenceError::Connection(ConnectionError::Internal(
                "filtration stalled before exhausting the space",
            )));
        }
        ranks.push(basis.len());
    }
    let basis_matrix = Matrix::from_fn(rank, rank, |i, j| basis[j][i].clone());
    Ok((ranks, basis_matrix))
}

/// Rows spanning the functionals that vanish exactly on the span of
/// `basis`: v lies in the span if and only if (rows) v = 0.
fn span_annihilator(basis: &[Vec<Rat>], dim: usize) -> Matrix<Rat> {
    // kernel of the matrix whose rows are the basis vectors
    let bt = Matrix::from_fn(basis.len(), dim, |i, j| basis[i][j].clone());
    let ker = bt.kernel_basis();
    if ker.is_empty() {
        return Matrix::zeros(1, dim);
    }
    Matrix::from_fn(ker.len(), dim, |i, j| ker[i][j].clone())
}

fn verify_block_structure(
    adapted: &MonodromyData,
    ranks: &[usize],
) -> Result<(), UnipotenceError> {
    // column c in filtration step s must map into step s-1:
    // entries at rows >= ranks[s-1] (previous step size) vanish
    let block_of = |col: usize| ranks.iter().position(|&r| col < r).expect("within rank");
    for n in adapted.nilpotents() {
        for c in 0..adapted.rank() {
            let s = block_of(c);
            let floor = if s == 0 { 0 } else { ranks[s - 1] };
            for r in floor..adapted.rank() {
                if !n.entry(r, c).is_zero() {
                    return Err(UnipotenceError::Connection(ConnectionError::Internal(
                        "adapted data is not strictly block upper triangular",
                    )));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connection::build_unipotent;
    use crate::padic::parse_rat;

    fn rat(n: i64, d: i64) -> Rat {
        Rat::new(BigInt::from(n), BigInt::from(d))
    }

    fn jordan2() -> Matrix<Rat> {
        Matrix::from_rows(vec![
            vec![rat(0, 1), rat(1, 1)],
            vec![rat(0, 1), rat(0, 1)],
        ])
        .unwrap()
    }

    #[test]
    fn binomial_decompose_examples() {
        // x^2 = P_1 + 2 P_2
        let p = binomial_decompose(&[rat(0, 1), rat(0, 1), rat(1, 1)]).unwrap();
        assert_eq!(p.coeff(1), BigInt::from(1));
        assert_eq!(p.coeff(2), BigInt::from(2));
        assert_eq!(p.support(), vec![1, 2]);

        // x^3 = P_1 + 6 P_2 + 6 P_3
        let p = binomial_decompose(&[rat(0, 1), rat(0, 1), rat(0, 1), rat(1, 1)]).unwrap();
        assert_eq!(p.coeff(1), BigInt::from(1));
        assert_eq!(p.coeff(2), BigInt::from(6));
        assert_eq!(p.coeff(3), BigInt::from(6));

        // x/2 is not integer-valued
        assert!(binomial_decompose(&[rat(0, 1), rat(1, 2)]).is_err());
    }

    #[test]
    fn binomial_round_trip() {
        let poly = vec![rat(7, 1), rat(-3, 1), rat(5, 1), rat(1, 1)];
        // integer combination of binomials is integer-valued
        let combo: Vec<Rat> = {
            let mut acc = vec![Rat::zero(); 4];
            for (j, c) in poly.iter().enumerate() {
                for (k, a) in binomial_basis_poly(j).iter().enumerate() {
                    acc[k] += a.clone() * c.clone();
                }
            }
            acc
        };
        let decomposed = binomial_decompose(&combo).unwrap();
        for (j, c) in poly.iter().enumerate() {
            assert_eq!(Rat::from_integer(decomposed.coeff(j)), c.clone());
        }
        let back = decomposed.to_monomial();
        for (k, c) in combo.iter().enumerate() {
            assert_eq!(back.get(k).cloned().unwrap_or_else(Rat::zero), c.clone());
        }
    }

    #[test]
    fn q_poly_examples() {
        // d=1, j=1: 1 - x
        assert_eq!(q_poly(1, 1), vec![rat(1, 1), rat(-1, 1)]);
        // d=1, j=2: (x^2 - 3x + 2)/2
        assert_eq!(q_poly(2, 1), vec![rat(1, 1), rat(-3, 2), rat(1, 2)]);
        // d=2, j=1: x (1-x)^2
        assert_eq!(q_poly(1, 2), vec![rat(0, 1), rat(1, 1), rat(-2, 1), rat(1, 1)]);
    }

    #[test]
    fn q_poly_vanishing_pattern() {
        // d = 1: Q_j(0) = 1 and Q_j(i) = 0 for 1 <= i <= j
        for j in 1..=5u64 {
            let q = q_poly(j, 1);
            assert_eq!(eval_poly(&q, &rat(0, 1)), rat(1, 1));
            for i in 1..=j {
                assert!(eval_poly(&q, &rat(i as i64, 1)).is_zero());
            }
        }
    }

    #[test]
    fn q_difference_examples() {
        // d=1, j=1: exactly P_2
        let d = q_difference_support(1, 1).unwrap();
        assert_eq!(d.poly.support(), vec![2]);
        assert_eq!(d.poly.coeff(2), BigInt::from(1));

        // d=1, j=3: exactly P_4
        let d = q_difference_support(3, 1).unwrap();
        assert_eq!(d.poly.support(), vec![4]);
        assert_eq!(d.poly.coeff(4), BigInt::from(1));

        // d=2, j=1: integral, supported above index 1
        let d = q_difference_support(1, 2).unwrap();
        assert!(d.min_index >= 2);
    }

    #[test]
    fn dl_operator_trivial_module() {
        // constant connection with N = 0, v = v0 + t v1: D_1 kills degree 1
        let w = Window::power(1, 6);
        let data = MonodromyData::new(1, vec![Matrix::zeros(1, 1)]).unwrap();
        let c = build_unipotent(&data, &w).unwrap();
        let v = vec![TruncatedSeries::new(
            w.clone(),
            [(vec![0], rat(2, 1)), (vec![1], rat(5, 1))],
        )
        .unwrap()];
        let out = dl_operator(&c, &v, 1, 1, &[]).unwrap();
        assert_eq!(out[0].coeff(&[0]), rat(2, 1));
        assert!(out[0].coeff(&[1]).is_zero());

        // v = v0 + t v1 + t^3 v3: D_2 leaves v0 + 10 t^3 v3
        let v = vec![TruncatedSeries::new(
            w.clone(),
            [
                (vec![0], rat(1, 1)),
                (vec![1], rat(1, 1)),
                (vec![3], rat(1, 1)),
            ],
        )
        .unwrap()];
        let out = dl_operator(&c, &v, 2, 1, &[]).unwrap();
        assert_eq!(out[0].coeff(&[0]), rat(1, 1));
        assert!(out[0].coeff(&[1]).is_zero());
        assert_eq!(out[0].coeff(&[3]), rat(10, 1));
    }

    #[test]
    fn dl_closed_form_matches_operator() {
        let w = Window::power(1, 5);
        let data = MonodromyData::new(2, vec![jordan2()]).unwrap();
        let c = build_unipotent(&data, &w).unwrap();
        let mut expansion = BTreeMap::new();
        expansion.insert(vec![0i64], vec![rat(1, 1), rat(1, 1)]);
        expansion.insert(vec![2i64], vec![rat(0, 1), rat(3, 1)]);
        let v: Section = {
            let mut rows = vec![TruncatedSeries::zero(w.clone()), TruncatedSeries::zero(w.clone())];
            for (j, coords) in &expansion {
                for (r, coord) in coords.iter().enumerate() {
                    let m = TruncatedSeries::new(w.clone(), [(j.clone(), coord.clone())]).unwrap();
                    rows[r] = rows[r].add(&m).unwrap();
                }
            }
            rows
        };
        // m = 2 for a nonzero Jordan block; prefactor (0)
        for l in 1..=4u64 {
            let lhs = dl_operator(&c, &v, l, 2, &[0]).unwrap();
            let rhs = dl_closed_form(&data, &expansion, &w, l, 2, &[0]).unwrap();
            assert!(sections_equal(&lhs, &rhs), "l = {}", l);
        }
    }

    #[test]
    fn horizontal_limit_jordan() {
        let p = Prime::two();
        let w = Window::power(1, 8);
        let data = MonodromyData::new(2, vec![jordan2()]).unwrap();
        let c = build_unipotent(&data, &w).unwrap();
        // v = e2 with N e2 = e1 != 0: the limit is N v = e1
        let v = crate::connection::constant_section(&w, &[rat(0, 1), rat(1, 1)]);
        let out = horizontal_limit(p, &c, &v, LimitStrategy::DlSequence, 20)
            .unwrap()
            .expect("nonzero limit");
        assert_eq!(out[0].constant_term(), rat(1, 1));
        assert!(out[1].is_zero());

        // the Qj strategy also lands on the derivation-killed vector
        let out = horizontal_limit(p, &c, &v, LimitStrategy::QjSequence, 20)
            .unwrap()
            .expect("nonzero limit");
        assert_eq!(out[0].constant_term(), rat(1, 1));
        assert!(out[1].is_zero());

        // on a module with zero residue (d = 1), Qj fixes horizontal input
        let triv = MonodromyData::new(2, vec![Matrix::zeros(2, 2)]).unwrap();
        let ct = build_unipotent(&triv, &w).unwrap();
        let h = crate::connection::constant_section(&w, &[rat(1, 1), rat(0, 1)]);
        let out = horizontal_limit(p, &ct, &h, LimitStrategy::QjSequence, 20)
            .unwrap()
            .expect("nonzero limit");
        assert!(sections_equal(&out, &h));

        // rank-1 trivial module, v = t: the limit is null
        let data1 = MonodromyData::new(1, vec![Matrix::zeros(1, 1)]).unwrap();
        let c1 = build_unipotent(&data1, &w).unwrap();
        let t = vec![TruncatedSeries::monomial(w.clone(), vec![1], rat(1, 1)).unwrap()];
        let out = horizontal_limit(p, &c1, &t, LimitStrategy::DlSequence, 20).unwrap();
        assert!(out.is_none());
    }

    #[test]
    fn filtration_examples() {
        let p = Prime::two();
        let w = Window::power(1, 6);
        // trivial module: single step of full rank
        let data = MonodromyData::new(2, vec![Matrix::zeros(2, 2)]).unwrap();
        let c = build_unipotent(&data, &w).unwrap();
        let f = unipotent_filtration(p, &c, &RadiusTuple::unit(1)).unwrap();
        assert_eq!(f.ranks, vec![2]);

        // rank-2 Jordan block: ranks [1, 2]
        let data = MonodromyData::new(2, vec![jordan2()]).unwrap();
        let c = build_unipotent(&data, &w).unwrap();
        let f = unipotent_filtration(p, &c, &RadiusTuple::unit(1)).unwrap();
        assert_eq!(f.ranks, vec![1, 2]);

        // non-nilpotent residue fails with a certificate
        let n = Matrix::from_rows(vec![vec![parse_rat("3").unwrap()]]).unwrap();
        let c = LogConnection::new(
            1,
            w.clone(),
            vec![Matrix::from_rat(&n, &w)],
        )
        .unwrap();
        match unipotent_filtration(p, &c, &RadiusTuple::unit(1)) {
            Err(UnipotenceError::NotUnipotent { var: 0, residue, .. }) => {
                assert_eq!(residue, n);
            }
            other => panic!("expected NotUnipotent, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn prefactor_choice() {
        let data = MonodromyData::new(2, vec![jordan2()]).unwrap();
        let m = data.shortest_filtration_length();
        assert_eq!(m, 2);
        assert_eq!(choose_prefactor(&data, m), Some(vec![0]));

        let data = MonodromyData::new(2, vec![Matrix::zeros(2, 2)]).unwrap();
        assert_eq!(data.shortest_filtration_length(), 1);
        assert_eq!(choose_prefactor(&data, 1), Some(vec![]));
    }
}
