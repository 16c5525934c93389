//! Property tests over randomized inputs: normalization bounds, exact serialization round
//! trips, quadrature exactness against closed-form moments, and operator identities.

use proptest::prelude::*;

use spherespec::harmonics::{legendre_eval, quadrature_rule, SphereDim};
use spherespec::kernels::{LegendreExpansion, Provenance};
use spherespec::real::Real;
use spherespec::spectra::{eigenvalue_blocks, hs_norm, j_operator, lb_derivative};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// |P_n^m(t)| <= 1 + 2^-(prec-20) on [-1, 1].
    #[test]
    fn legendre_stays_bounded(
        t in -1.0f64..=1.0,
        n in 0u64..60,
        m in 2u32..7,
    ) {
        let prec = 192;
        let sd = SphereDim::new(m).unwrap();
        let v = legendre_eval(n, sd, &Real::from_f64(t, prec), prec).unwrap();
        let bound = Real::one(prec).add(&Real::pow2(-(prec as i32 - 20), prec));
        prop_assert!(v.abs().cmp(&bound) != std::cmp::Ordering::Greater);
    }

    /// Decimal strings round-trip bit-exactly across the magnitude range.
    #[test]
    fn decimal_round_trip(seed in any::<f64>(), exp in -6000i32..6000) {
        prop_assume!(seed.is_finite() && seed != 0.0);
        for prec in [64usize, 192, 512] {
            let x = Real::from_f64(seed, prec).mul(&Real::pow2(exp, prec));
            let back = Real::parse_decimal(&x.to_decimal_string(), prec).unwrap();
            prop_assert!(back == x, "prec {prec}: {}", x.to_decimal_string());
        }
    }

    /// The rule of order Q integrates t^k exactly for k <= 2Q-1: even moments match the
    /// closed-form ratio M_2j / M_0 = prod (2i-1)/(2i+m-1), odd moments vanish.
    #[test]
    fn quadrature_matches_closed_form_moments(
        m in 2u32..6,
        order in 2usize..10,
        j in 0usize..6,
    ) {
        prop_assume!(2 * j < 2 * order - 1);
        let prec = 192;
        let sd = SphereDim::new(m).unwrap();
        let rule = quadrature_rule(sd, order, prec).unwrap();
        let mass = sd.projection_ratio(prec).recip();

        let even = rule.integrate(|x| x.powi(2 * j as u64));
        let mut want = mass.clone();
        for i in 1..=j as u64 {
            want = want
                .mul(&Real::from_u64(2 * i - 1, prec))
                .div(&Real::from_u64(2 * i + m as u64 - 1, prec));
        }
        let tol = Real::pow2(-(prec as i32 - 24), prec).mul(&mass);
        prop_assert!(
            even.sub(&want).abs().cmp(&tol) != std::cmp::Ordering::Greater,
            "even moment 2j={}: {} vs {}", 2 * j, even.to_f64(), want.to_f64()
        );

        let odd = rule.integrate(|x| x.powi(2 * j as u64 + 1));
        prop_assert!(odd.abs().cmp(&tol) != std::cmp::Ordering::Greater);
    }

    /// J^r inverts the r-th derivative exactly on levels >= 1 for arbitrary coefficients.
    #[test]
    fn j_inverts_derivative(
        coeffs in prop::collection::vec(-1.0f64..=1.0, 1..12),
        m in 2u32..7,
        r in 1u32..5,
    ) {
        let prec = 128;
        let sd = SphereDim::new(m).unwrap();
        let e = LegendreExpansion::new(
            sd,
            coeffs.iter().map(|&c| Real::from_f64(c, prec)).collect(),
            prec,
            Provenance::ClosedForm,
        )
        .unwrap();
        let round_trip = j_operator(&lb_derivative(&e, r), r);
        for n in 1..coeffs.len() {
            prop_assert!(round_trip.coeff(n) == e.coeff(n));
        }
        prop_assert!(round_trip.coeff(0).is_zero());
    }

    /// Parseval: hs_norm^2 equals the flat sum of value^2 over all blocks.
    #[test]
    fn parseval_for_random_expansions(
        coeffs in prop::collection::vec(-2.0f64..=2.0, 1..10),
        m in 2u32..6,
    ) {
        let prec = 192;
        let sd = SphereDim::new(m).unwrap();
        let e = LegendreExpansion::new(
            sd,
            coeffs.iter().map(|&c| Real::from_f64(c, prec)).collect(),
            prec,
            Provenance::ClosedForm,
        )
        .unwrap();
        let s = eigenvalue_blocks(&e);
        let mut flat = Real::zero(prec + 32);
        for b in s.blocks() {
            flat = flat.add(&b.value.square().mul(&Real::from_biguint(&b.multiplicity, prec + 32)));
        }
        let hs2 = hs_norm(&e).square();
        let diff = hs2.sub(&flat.round_to(prec)).abs();
        let tol = Real::pow2(-(prec as i32 - 24), prec).mul(&hs2.add(&Real::one(prec)));
        prop_assert!(diff.cmp(&tol) != std::cmp::Ordering::Greater);
    }
}
