use pdectl::polyjet::{monomials_up_to, random_poly, MultiPoly, SamplePoint};
use proptest::prelude::*;

/// Polynomials with small integer coefficients, so every coefficient operation is exact in f64.
fn int_poly(dims: usize, degree: usize) -> impl Strategy<Value = MultiPoly> {
    let n = monomials_up_to(dims, degree).len();
    prop::collection::vec(-8i32..=8, n).prop_map(move |cs| {
        let exps = monomials_up_to(dims, degree);
        MultiPoly::from_terms(dims, exps.into_iter().zip(cs.into_iter().map(f64::from))).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn mixed_partials_commute(p in int_poly(3, 4), i in 0usize..3, j in 0usize..3) {
        let a = p.differentiate(i).unwrap().differentiate(j).unwrap();
        let b = p.differentiate(j).unwrap().differentiate(i).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn leibniz_rule(p in int_poly(3, 3), q in int_poly(3, 3), i in 0usize..3) {
        let lhs = (&p * &q).differentiate(i).unwrap();
        let rhs = &(&p.differentiate(i).unwrap() * &q) + &(&p * &q.differentiate(i).unwrap());
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn evaluation_is_additive(
        s1 in any::<u64>(),
        s2 in any::<u64>(),
        pt in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let p = random_poly(3, 4, s1, (-1.0, 1.0)).unwrap();
        let q = random_poly(3, 4, s2, (-1.0, 1.0)).unwrap();
        let sum = (&p + &q).evaluate(&pt).unwrap();
        let parts = p.evaluate(&pt).unwrap() + q.evaluate(&pt).unwrap();
        let scale = p.evaluate(&pt).unwrap().abs().max(q.evaluate(&pt).unwrap().abs()).max(1.0);
        prop_assert!((sum - parts).abs() <= 1e-13 * scale);
    }

    #[test]
    fn derivative_lowers_degree(p in int_poly(2, 4), axis in 0usize..2) {
        let d = p.differentiate(axis).unwrap();
        if !d.is_zero() {
            prop_assert!(d.degree_in(axis).unwrap() < p.degree_in(axis).unwrap());
        }
        prop_assert!(d.terms().all(|(_, c)| c != 0.0));
    }
}

#[test]
fn horner_matches_term_summation() {
    let p = random_poly(3, 3, 1337, (-1.0, 1.0)).unwrap();
    let pt: [f64; 3] = [0.1, 0.2, 0.3];
    let brute: f64 = p
        .terms()
        .map(|(e, c)| {
            c * e
                .iter()
                .zip(&pt)
                .map(|(&k, x)| x.powi(k as i32))
                .product::<f64>()
        })
        .sum();
    let v = p.evaluate(&pt).unwrap();
    assert!((v - brute).abs() <= 1e-14 * brute.abs());
}

#[test]
fn random_poly_fills_every_monomial() {
    let p = random_poly(3, 3, 42, (-1.0, 1.0)).unwrap();
    let mut count = 0;
    for a in 0..=3u32 {
        for b in 0..=3 - a {
            for c in 0..=3 - a - b {
                count += 1;
                let v = p.coeff(&[a, b, c]);
                assert!(v != 0.0 && (-1.0..=1.0).contains(&v));
            }
        }
    }
    assert_eq!(count, 20);
    assert_eq!(p.len(), count);
}

#[test]
fn sample_points_reject_non_finite() {
    assert!(SamplePoint::new(vec![0.0, f64::NAN]).is_err());
    assert!(SamplePoint::new(vec![0.0, 1.0]).is_ok());
}

#[test]
fn zero_polynomial_evaluates_to_zero() {
    assert_eq!(MultiPoly::zero(2).evaluate(&[3.0, -1.0]).unwrap(), 0.0);
    let p = MultiPoly::from_text(2, "2 0 : 0\n0 1 : 0").unwrap();
    assert!(p.is_zero());
}
