//! p-adic valuations on exact rationals and the exponent scale for
//! nonarchimedean norm values.
//!
//! Every norm value handled by this crate is a power p^(-e) of the working
//! prime; [`NormExp`] stores the rational exponent e instead of the value,
//! so a product of norms becomes an exact sum of exponents and a supremum
//! of norms becomes an exact minimum.

use core::cmp::Ordering;
use core::fmt;
use core::ops::Add;

use num_bigint::{BigInt, BigUint};
use num_rational::{BigRational, Ratio};
use num_traits::{Signed, Zero};

/// Exact coefficient scalar: an arbitrary-precision rational a/b with
/// b > 0 and gcd(a, b) = 1 (maintained by the representation).
pub type Rat = BigRational;

/// Exponent-scale rational: exponents of the prime, radii, thresholds.
pub type Exp = Ratio<i64>;

/// Shorthand for an exponent-scale rational n/d.
pub fn exp(n: i64, d: i64) -> Exp {
    Exp::new(n, d)
}

/// Largest prime accepted: trial division up to 10^6 certifies primality
/// for values up to 10^12.
const MAX_PRIME: u64 = 1_000_000_000_000;

/// The working prime, validated once at construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Prime {
    value: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PrimeError {
    TooSmall(u64),
    Composite { value: u64, divisor: u64 },
    TooLarge(u64),
}

impl fmt::Display for PrimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrimeError::TooSmall(p) => write!(f, "{} is smaller than 2", p),
            PrimeError::Composite { value, divisor } => {
                write!(f, "{} is not prime (divisible by {})", value, divisor)
            }
            PrimeError::TooLarge(p) => {
                write!(f, "{} exceeds the certifiable bound 10^12", p)
            }
        }
    }
}

impl Prime {
    /// Validates `p` by trial division (conclusive for p <= 10^12).
    pub fn new(p: u64) -> Result<Prime, PrimeError> {
        if p < 2 {
            return Err(PrimeError::TooSmall(p));
        }
        if p > MAX_PRIME {
            return Err(PrimeError::TooLarge(p));
        }
        if p != 2 && p % 2 == 0 {
            return Err(PrimeError::Composite { value: p, divisor: 2 });
        }
        let mut d: u64 = 3;
        while d <= 1_000_000 && d * d <= p {
            if p % d == 0 {
                return Err(PrimeError::Composite { value: p, divisor: d });
            }
            d += 2;
        }
        Ok(Prime { value: p })
    }

    /// The default working prime p = 2.
    pub fn two() -> Prime {
        Prime { value: 2 }
    }

    pub fn get(self) -> u64 {
        self.value
    }

    /// v_p of an integer; `Infinite` exactly for zero.
    pub fn int_valuation(self, n: &BigInt) -> Valuation {
        if n.is_zero() {
            return Valuation::Infinite;
        }
        let mut m: BigUint = n.abs().to_biguint().expect("abs is nonnegative");
        let p = BigUint::from(self.value);
        let mut val: i64 = 0;
        while (&m % &p).is_zero() {
            m /= &p;
            val += 1;
            // square the divisor while it still divides, halving the division count
            let mut power = &p * &p;
            let mut step: i64 = 2;
            while (&m % &power).is_zero() {
                m /= &power;
                val += step;
                step *= 2;
                power = &power * &power;
            }
        }
        Valuation::Finite(val)
    }

    /// v_p(a/b) = v_p(a) - v_p(b); `Infinite` exactly for zero.
    pub fn valuation(self, x: &Rat) -> Valuation {
        match self.int_valuation(x.numer()) {
            Valuation::Infinite => Valuation::Infinite,
            Valuation::Finite(vn) => {
                let vd = match self.int_valuation(x.denom()) {
                    Valuation::Finite(v) => v,
                    Valuation::Infinite => unreachable!("denominator is nonzero"),
                };
                Valuation::Finite(vn - vd)
            }
        }
    }

    /// |x| as an exponent-scale value: |x| = p^(-v_p(x)).
    pub fn norm_exp(self, x: &Rat) -> NormExp {
        self.valuation(x).into()
    }

    /// v_p(i!) by the floor sum i/p + i/p^2 + ...; satisfies
    /// v_p(i!) <= i/(p-1).
    pub fn factorial_valuation(self, i: u64) -> u64 {
        let mut total = 0u64;
        let mut q = i / self.value;
        while q > 0 {
            total += q;
            q /= self.value;
        }
        total
    }
}

/// An integer p-adic valuation, infinite exactly for zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Valuation {
    Finite(i64),
    Infinite,
}

impl Valuation {
    pub fn is_infinite(self) -> bool {
        matches!(self, Valuation::Infinite)
    }

    pub fn finite(self) -> Option<i64> {
        match self {
            Valuation::Finite(v) => Some(v),
            Valuation::Infinite => None,
        }
    }
}

/// A nonarchimedean norm value p^(-exponent), stored as the exponent.
/// `Infinite` encodes the value 0.
///
/// The derived order compares exponents, so `min` picks the *largest*
/// value and `max` the smallest; use the `value_*` helpers when a
/// comparison should read in the value scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormExp {
    Finite(Exp),
    Infinite,
}

impl NormExp {
    pub fn finite(e: Exp) -> NormExp {
        NormExp::Finite(e)
    }

    pub fn from_int(e: i64) -> NormExp {
        NormExp::Finite(Exp::from_integer(e))
    }

    /// The value 1 = p^0.
    pub fn one_value() -> NormExp {
        NormExp::from_int(0)
    }

    pub fn exponent(self) -> Option<Exp> {
        match self {
            NormExp::Finite(e) => Some(e),
            NormExp::Infinite => None,
        }
    }

    /// True exactly when the represented value is 0.
    pub fn is_zero_value(self) -> bool {
        matches!(self, NormExp::Infinite)
    }

    /// Supremum of the represented values = minimum of exponents.
    pub fn sup_value(self, other: NormExp) -> NormExp {
        self.min(other)
    }

    /// k-th power of the value: exponent scaled by k.
    pub fn pow(self, k: i64) -> NormExp {
        match self {
            NormExp::Finite(e) => NormExp::Finite(e * Exp::from_integer(k)),
            NormExp::Infinite => NormExp::Infinite,
        }
    }

    /// |self| <= |other| in the value scale (0 <= everything).
    pub fn value_le(self, other: NormExp) -> bool {
        match (self, other) {
            (NormExp::Infinite, _) => true,
            (NormExp::Finite(_), NormExp::Infinite) => false,
            (NormExp::Finite(a), NormExp::Finite(b)) => a >= b,
        }
    }

    pub fn value_lt(self, other: NormExp) -> bool {
        self.value_le(other) && self != other
    }
}

impl From<Valuation> for NormExp {
    fn from(v: Valuation) -> NormExp {
        match v {
            Valuation::Finite(e) => NormExp::from_int(e),
            Valuation::Infinite => NormExp::Infinite,
        }
    }
}

/// Multiplication of values: exponents add; zero absorbs.
impl Add for NormExp {
    type Output = NormExp;

    fn add(self, other: NormExp) -> NormExp {
        match (self, other) {
            (NormExp::Finite(a), NormExp::Finite(b)) => NormExp::Finite(a + b),
            _ => NormExp::Infinite,
        }
    }
}

impl PartialOrd for NormExp {
    fn partial_cmp(&self, other: &NormExp) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for NormExp {
    fn cmp(&self, other: &NormExp) -> Ordering {
        match (self, other) {
            (NormExp::Finite(a), NormExp::Finite(b)) => a.cmp(b),
            (NormExp::Finite(_), NormExp::Infinite) => Ordering::Less,
            (NormExp::Infinite, NormExp::Finite(_)) => Ordering::Greater,
            (NormExp::Infinite, NormExp::Infinite) => Ordering::Equal,
        }
    }
}

impl fmt::Display for NormExp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormExp::Finite(e) => write!(f, "{}", e),
            NormExp::Infinite => write!(f, "inf"),
        }
    }
}

/// Parses a rational literal "a/b" or "a" (b omitted when 1).
pub fn parse_rat(s: &str) -> Option<Rat> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n: BigInt = num.parse().ok()?;
    let d: BigInt = den.parse().ok()?;
    if d.is_zero() {
        return None;
    }
    Some(Rat::new(n, d))
}

/// Renders a rational as "a/b", omitting "/b" when b = 1.
pub fn format_rat(x: &Rat) -> alloc::string::String {
    use alloc::format;
    if x.denom() == &BigInt::from(1) {
        format!("{}", x.numer())
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}
