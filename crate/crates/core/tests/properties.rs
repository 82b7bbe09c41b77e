//! Property tests for the norm, series, order, and binomial invariants.

use num_bigint::BigInt;
use proptest::prelude::*;

use polyann::padic::{Exp, NormExp, Prime, Rat};
use polyann::series::{corner_maximum, gauss_norm, RadiusTuple, TruncatedSeries, Window};
use polyann::tate::monomial_cmp;
use polyann::unipotence::{binomial_basis_poly, binomial_decompose};

fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

fn arb_rat() -> impl Strategy<Value = Rat> {
    (-200i64..200, 1i64..40).prop_map(|(n, d)| rat(n, d))
}

fn arb_prime() -> impl Strategy<Value = Prime> {
    prop_oneof![Just(2u64), Just(3), Just(5), Just(7)].prop_map(|p| Prime::new(p).unwrap())
}

proptest! {
    #[test]
    fn scalar_ultrametric_and_multiplicativity(p in arb_prime(), x in arb_rat(), y in arb_rat()) {
        let nx = p.norm_exp(&x);
        let ny = p.norm_exp(&y);
        let sum = p.norm_exp(&(x.clone() + y.clone()));
        prop_assert!(sum >= nx.min(ny));
        if nx != ny {
            prop_assert_eq!(sum, nx.min(ny));
        }
        prop_assert_eq!(p.norm_exp(&(x * y)), nx + ny);
    }
}

fn arb_series(num_vars: usize) -> impl Strategy<Value = TruncatedSeries> {
    let window = Window::laurent(num_vars, -10, 10);
    proptest::collection::vec(
        (
            proptest::collection::vec(-10i64..=10, num_vars),
            arb_rat(),
        ),
        0..8,
    )
    .prop_map(move |terms| TruncatedSeries::new(window.clone(), terms).unwrap())
}

fn arb_radius(num_vars: usize) -> impl Strategy<Value = RadiusTuple> {
    proptest::collection::vec((0i64..8, 1i64..4), num_vars)
        .prop_map(|exps| RadiusTuple::new(exps.into_iter().map(|(n, d)| Exp::new(n, d)).collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Log-convexity: with r_i = a_i^c b_i^(1-c), the exponent of the norm
    /// at R dominates the convex combination of the exponents at A and B.
    #[test]
    fn gauss_norm_hadamard(
        p in arb_prime(),
        x in arb_series(2),
        a in arb_radius(2),
        b in arb_radius(2),
        c in prop_oneof![Just(Exp::new(1, 4)), Just(Exp::new(1, 2)), Just(Exp::new(3, 4))],
    ) {
        let mid: Vec<Exp> = a
            .exps()
            .iter()
            .zip(b.exps())
            .map(|(&ea, &eb)| c * ea + (Exp::from_integer(1) - c) * eb)
            .collect();
        let r = RadiusTuple::new(mid).unwrap();
        let lhs = gauss_norm(p, &x, &r);
        let at_a = gauss_norm(p, &x, &a);
        let at_b = gauss_norm(p, &x, &b);
        match (lhs, at_a, at_b) {
            (NormExp::Finite(l), NormExp::Finite(ea), NormExp::Finite(eb)) => {
                prop_assert!(l >= c * ea + (Exp::from_integer(1) - c) * eb);
            }
            (NormExp::Infinite, _, _) => {}
            _ => prop_assert!(x.is_zero()),
        }
    }

    /// On power-series windows the norm is monotone in each radius.
    #[test]
    fn gauss_norm_disc_monotone(
        p in arb_prime(),
        terms in proptest::collection::vec((proptest::collection::vec(0i64..=8, 2), arb_rat()), 0..8),
        small in arb_radius(2),
        grow in arb_radius(2),
    ) {
        let w = Window::power(2, 8);
        let x = TruncatedSeries::new(w, terms).unwrap();
        // bigger radius = smaller exponent componentwise
        let big = RadiusTuple::new(
            small.exps().iter().zip(grow.exps()).map(|(&s, &g)| s + g).collect(),
        )
        .unwrap();
        // |x| at the smaller radii (larger exponents `big`) is <= |x| at `small`
        prop_assert!(gauss_norm(p, &x, &big).value_le(gauss_norm(p, &x, &small)));
    }

    /// The norm is multiplicative when the product does not truncate.
    #[test]
    fn gauss_norm_multiplicative_on_exact_products(
        p in arb_prime(),
        aterms in proptest::collection::vec((proptest::collection::vec(-3i64..=3, 2), arb_rat()), 0..6),
        bterms in proptest::collection::vec((proptest::collection::vec(-3i64..=3, 2), arb_rat()), 0..6),
        r in arb_radius(2),
    ) {
        let w = Window::laurent(2, -8, 8);
        let a = TruncatedSeries::new(w.clone(), aterms).unwrap();
        let b = TruncatedSeries::new(w, bterms).unwrap();
        let prod = a.mul(&b).unwrap();
        prop_assert_eq!(
            gauss_norm(p, &prod, &r),
            gauss_norm(p, &a, &r) + gauss_norm(p, &b, &r)
        );
    }

    /// The maximum over a radius box is attained at the reported corner.
    #[test]
    fn corner_maximum_dominates_interior(
        p in arb_prime(),
        x in arb_series(2),
        outer in arb_radius(2),
        gap in arb_radius(2),
        c in prop_oneof![Just(Exp::new(1, 4)), Just(Exp::new(1, 2)), Just(Exp::new(3, 4))],
    ) {
        let inner = RadiusTuple::new(
            outer.exps().iter().zip(gap.exps()).map(|(&o, &g)| o + g).collect(),
        )
        .unwrap();
        let (_, best) = corner_maximum(p, &x, &inner, &outer).unwrap();
        // interior point on the diagonal of the box
        let mid: Vec<Exp> = inner
            .exps()
            .iter()
            .zip(outer.exps())
            .map(|(&ei, &eo)| c * ei + (Exp::from_integer(1) - c) * eo)
            .collect();
        let interior = gauss_norm(p, &x, &RadiusTuple::new(mid).unwrap());
        // corner value dominates: its exponent is the smaller one
        prop_assert!(interior.value_le(best));
    }

    /// Leibniz rule to the common truncation order.
    #[test]
    fn derivative_leibniz(
        aterms in proptest::collection::vec((proptest::collection::vec(0i64..=5, 1), arb_rat()), 0..6),
        bterms in proptest::collection::vec((proptest::collection::vec(0i64..=5, 1), arb_rat()), 0..6),
    ) {
        let w = Window::power(1, 12);
        let a = TruncatedSeries::new(w.clone(), aterms).unwrap();
        let b = TruncatedSeries::new(w, bterms).unwrap();
        let lhs = a.mul(&b).unwrap().partial_derivative(0);
        let rhs = a
            .partial_derivative(0)
            .mul(&b)
            .unwrap()
            .add(&a.mul(&b.partial_derivative(0)).unwrap())
            .unwrap();
        for (j, c) in lhs.terms() {
            prop_assert_eq!(rhs.coeff(j), c.clone());
        }
        for (j, c) in rhs.terms() {
            prop_assert_eq!(lhs.coeff(j), c.clone());
        }
    }

    /// Monomial order: total, antisymmetric, transitive, compatible with
    /// multiplication, extends componentwise comparison.
    #[test]
    fn monomial_order_axioms(
        a in proptest::collection::vec(0u64..20, 3),
        b in proptest::collection::vec(0u64..20, 3),
        c in proptest::collection::vec(0u64..20, 3),
    ) {
        use core::cmp::Ordering;
        let ab = monomial_cmp(&a, &b);
        let ba = monomial_cmp(&b, &a);
        prop_assert_eq!(ab, ba.reverse());
        if ab == Ordering::Equal {
            prop_assert_eq!(&a, &b);
        }
        // transitivity
        let bc = monomial_cmp(&b, &c);
        let ac = monomial_cmp(&a, &c);
        if ab != Ordering::Greater && bc != Ordering::Greater {
            prop_assert!(ac != Ordering::Greater);
        }
        // compatibility with monomial multiplication
        let ac_shift: Vec<u64> = a.iter().zip(&c).map(|(x, y)| x + y).collect();
        let bc_shift: Vec<u64> = b.iter().zip(&c).map(|(x, y)| x + y).collect();
        prop_assert_eq!(monomial_cmp(&ac_shift, &bc_shift), ab);
        // extends termwise comparison
        if a.iter().zip(&b).all(|(x, y)| x <= y) {
            prop_assert!(ab != Ordering::Greater);
        }
    }

    /// Binomial-basis round trip on integer combinations of degree <= 12.
    #[test]
    fn binomial_round_trip(coeffs in proptest::collection::vec(-50i64..50, 1..13)) {
        let mut monomial = vec![Rat::from_integer(BigInt::from(0)); coeffs.len()];
        for (j, &c) in coeffs.iter().enumerate() {
            for (k, a) in binomial_basis_poly(j).iter().enumerate() {
                monomial[k] += a.clone() * Rat::from_integer(BigInt::from(c));
            }
        }
        let decomposed = binomial_decompose(&monomial).unwrap();
        for (j, &c) in coeffs.iter().enumerate() {
            prop_assert_eq!(decomposed.coeff(j), BigInt::from(c));
        }
        let back = decomposed.to_monomial();
        for (k, c) in monomial.iter().enumerate() {
            let got = back.get(k).cloned().unwrap_or_else(|| Rat::from_integer(BigInt::from(0)));
            prop_assert_eq!(got, c.clone());
        }
    }
}
