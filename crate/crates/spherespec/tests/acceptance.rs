//! Acceptance suite: one test per criterion, each printing a pass line with its runtime and
//! enforcing the stated budgets. Everything is pinned here - tolerances, grids, precisions -
//! so a run of `cargo test --test acceptance` is the complete verification protocol.

use std::time::Instant;

use num_bigint::BigUint;

use spherespec::decay::{
    decay_envelope_check, index_inequality_threshold, series_eval, verify_lemma42, ExponentSpec,
    Verdict,
};
use spherespec::harmonics::{cum_dim_all, dim_harmonic, dim_harmonic_all, SphereDim};
use spherespec::kernels::{
    catalog_coefficients, expand, project_zonal, KernelSpec, LegendreExpansion, Provenance,
};
use spherespec::oracle::{assemble, build_grid, compare_spectra, eigs_symmetric};
use spherespec::real::{Decimal, Real};
use spherespec::spectra::{eigenvalue_blocks, hs_norm, j_operator, lb_derivative};

fn m2() -> SphereDim {
    SphereDim::new(2).unwrap()
}

fn rel_err(a: &Real, b: &Real) -> Real {
    a.sub(b).abs().div(&b.abs())
}

fn pass(name: &str, started: Instant, budget_s: Option<f64>) {
    let dt = started.elapsed().as_secs_f64();
    println!("{name}: PASS ({dt:.2} s)");
    if let Some(budget) = budget_s {
        assert!(
            dt < budget,
            "{name} exceeded the {budget} s budget: {dt:.2} s"
        );
    }
}

#[test]
fn criterion_01_dimension_suite() {
    let t0 = Instant::now();
    for m in 2..=6u32 {
        let sd = SphereDim::new(m).unwrap();
        let dims = dim_harmonic_all(1000, sd);
        let cums = cum_dim_all(1000, sd);
        let mut acc = BigUint::ZERO;
        for n in 0..=1000usize {
            acc += &dims[n];
            assert_eq!(cums[n], acc, "recurrence at m={m} n={n}");
            if m == 2 {
                assert_eq!(dims[n], BigUint::from(2 * n as u64 + 1), "d_n^2 at n={n}");
            }
            if n % 97 == 0 {
                // bind the ratio recurrence to the factorial formula
                assert_eq!(dims[n], dim_harmonic(n as u64, sd));
            }
        }
    }
    pass(
        "criterion 1 (dimension suite, m=2..6, n<=1000)",
        t0,
        Some(5.0),
    );
}

#[test]
fn criterion_02_projection_round_trip() {
    let t0 = Instant::now();
    let prec = 256;
    let spec = KernelSpec::Multiquadric {
        sigma: Decimal::new("1").unwrap(),
        delta: Decimal::new("0.5").unwrap(),
    };
    let closed = catalog_coefficients(&spec, m2(), 50, prec).unwrap();
    let profile = spec.pointwise(m2(), 50, prec).unwrap();
    let projected = project_zonal(&profile, m2(), 50, prec, 128).unwrap();
    let tol = Real::parse_decimal("1e-25", prec).unwrap();
    for n in 0..=50 {
        let err = rel_err(&projected.coeff(n), &closed.coeff(n));
        assert!(
            err.cmp(&tol) == std::cmp::Ordering::Less,
            "c_{n}: rel err {}",
            err.to_f64()
        );
    }
    pass(
        "criterion 2 (multiquadric projection round trip, N=50, 256-bit, order 128)",
        t0,
        Some(30.0),
    );
}

#[test]
fn criterion_03_gaussian_dual_path() {
    let t0 = Instant::now();
    let prec = 256;
    let spec = KernelSpec::Gaussian {
        r: Decimal::new("1").unwrap(),
    };
    let via_power = expand(&spec, m2(), 30, prec, None).unwrap();
    let profile = spec.pointwise(m2(), 30, prec).unwrap();
    let via_projection = project_zonal(&profile, m2(), 30, prec, 128).unwrap();
    let tol = Real::parse_decimal("1e-20", prec).unwrap();
    for n in 0..=30 {
        let err = rel_err(&via_power.coeff(n), &via_projection.coeff(n));
        assert!(
            err.cmp(&tol) == std::cmp::Ordering::Less,
            "c_{n}: rel err {}",
            err.to_f64()
        );
    }
    pass("criterion 3 (gaussian dual path, N=30)", t0, None);
}

#[test]
fn criterion_04_optimality_spectrum_exact() {
    let t0 = Instant::now();
    let prec = 512;
    let e = catalog_coefficients(&KernelSpec::Optimality, m2(), 40, prec).unwrap();
    let spectrum = eigenvalue_blocks(&e);
    let sorted = spectrum.sorted();
    // exact at working precision: a few ulp of slack on two correctly rounded divisions
    let tol = Real::pow2(-(prec as i32 - 8), prec);
    for n in 1..=40u64 {
        let flat = (n + 1) * (n + 1);
        let got = sorted.value_at(flat).unwrap();
        let want = Real::from_u64(n, prec).powi(2 * n + 1).recip();
        let err = rel_err(got, &want);
        assert!(
            err.cmp(&tol) == std::cmp::Ordering::Less,
            "flat {flat}: rel err {}",
            err.to_f64()
        );
    }
    pass(
        "criterion 4 (optimality sorted eigenvalue at (n+1)^2 = n^(-2n-1), n=1..40)",
        t0,
        None,
    );
}

#[test]
fn criterion_05_lemma_chain_exact_product() {
    let t0 = Instant::now();
    let prec = 512;
    let optimality = catalog_coefficients(&KernelSpec::Optimality, m2(), 40, prec).unwrap();
    let gaussian = expand(
        &KernelSpec::Gaussian {
            r: Decimal::new("1").unwrap(),
        },
        m2(),
        48,
        prec,
        None,
    )
    .unwrap();
    for (name, e) in [("optimality", &optimality), ("gaussian r=1", &gaussian)] {
        let s = eigenvalue_blocks(e);
        let report = verify_lemma42(&s, e, 30).unwrap();
        assert_eq!(report.rows.len(), 30);
        for row in &report.rows {
            assert!(
                row.holds,
                "{name}: chain fails at n={} (lhs {}, rhs {})",
                row.n,
                row.lhs.to_f64(),
                row.rhs_exact_product.to_f64()
            );
        }
    }
    pass(
        "criterion 5 (exact-product chain, optimality + gaussian, n=1..30, 512-bit)",
        t0,
        Some(60.0),
    );
}

#[test]
fn criterion_06_index_inequality() {
    let t0 = Instant::now();
    let expected_thresholds = [(2u32, 1u64), (3, 4), (4, 3), (5, 2), (6, 2)];
    for (m, want_n0) in expected_thresholds {
        let sd = SphereDim::new(m).unwrap();
        let n0 = index_inequality_threshold(sd, 10_000).unwrap();
        assert_eq!(n0, want_n0, "n0 for m={m}");
        let delta = sd.delta() as u64;
        let cums = cum_dim_all(10_000, sd);
        for n in 1..=10_000u64 {
            let holds = cums[n as usize] <= BigUint::from(delta * n).pow(m);
            assert_eq!(holds, n >= n0, "m={m} n={n}");
        }
        println!("  index inequality m={m}: n0 = {n0}");
    }
    pass(
        "criterion 6 (cum_dim(n,m) <= (delta n)^m exhaustive, n<=10^4, m=2..6)",
        t0,
        None,
    );
}

#[test]
fn criterion_07_series_engine() {
    let t0 = Instant::now();
    let prec = 512;
    let e = catalog_coefficients(&KernelSpec::Optimality, m2(), 99, prec).unwrap();
    let s = eigenvalue_blocks(&e);
    assert_eq!(s.flat_len(), BigUint::from(10_000u32));

    let converging = series_eval(&s, &ExponentSpec::Zero, &[100, 1000, 10_000], prec).unwrap();
    assert!(
        matches!(converging.verdict, Verdict::Converging),
        "alpha = 0 verdict: {:?}",
        converging.verdict
    );
    let sum = &converging.checkpoints.last().unwrap().partial_sum;
    let tail = converging.tail_estimate.as_ref().unwrap();
    let bound = sum.mul(&Real::parse_decimal("1e-30", prec).unwrap());
    assert!(
        tail.cmp(&bound) == std::cmp::Ordering::Less,
        "tail {} vs 1e-30 * sum {}",
        tail.to_f64(),
        bound.to_f64()
    );

    let diverging = series_eval(
        &s,
        &ExponentSpec::AutoDivergent {
            ell: Decimal::new("0.9").unwrap(),
        },
        &[16, 100, 1000, 10_000],
        prec,
    )
    .unwrap();
    assert!(
        matches!(diverging.verdict, Verdict::Diverging),
        "beta verdict: {:?}",
        diverging.verdict
    );
    let hit = diverging.first_term_above_one.as_ref().unwrap();
    assert!(hit.index <= 10_000, "first term above 1 at {}", hit.index);
    let one = Real::one(prec);
    assert!(
        diverging.checkpoints[0].term.cmp(&one) == std::cmp::Ordering::Greater,
        "checkpoint term should already exceed 1"
    );
    pass(
        "criterion 7 (series: alpha=0 converging with tail < 1e-30; beta(l=0.9) diverging)",
        t0,
        None,
    );
}

#[test]
fn criterion_08_decay_envelope() {
    let t0 = Instant::now();
    let prec = 512;
    let threshold = Real::parse_decimal("1e-30", prec).unwrap();
    let optimality = catalog_coefficients(&KernelSpec::Optimality, m2(), 99, prec).unwrap();
    let gaussian = expand(
        &KernelSpec::Gaussian {
            r: Decimal::new("1").unwrap(),
        },
        m2(),
        99,
        prec,
        None,
    )
    .unwrap();
    for (name, e) in [("optimality", &optimality), ("gaussian r=1", &gaussian)] {
        let s = eigenvalue_blocks(e);
        let boundaries: Vec<u64> = (1..=99u64).map(|n| (n + 1) * (n + 1)).collect();
        let rep = decay_envelope_check(&s, &boundaries, prec).unwrap();
        assert!(rep.monotone_beyond_window, "{name}: no monotone window");
        let w = rep.window_start.unwrap();
        println!("  envelope window for {name}: flat index {w}");
        assert!(w <= 100, "{name}: window {w}");
        let last = rep.points.last().unwrap();
        assert_eq!(last.index, 10_000);
        assert!(
            last.value.cmp(&threshold) == std::cmp::Ordering::Less,
            "{name}: value at 10^4 is {}",
            last.value.to_f64()
        );
    }
    pass(
        "criterion 8 (normalized decay envelope monotone and < 1e-30 by flat 10^4)",
        t0,
        None,
    );
}

#[test]
fn criterion_09_oracle_cross_check() {
    let t0 = Instant::now();
    let prec = 192;
    let spec = KernelSpec::Gaussian {
        r: Decimal::new("1").unwrap(),
    };
    let e = expand(&spec, m2(), 24, prec, None).unwrap();
    let s = eigenvalue_blocks(&e);
    let profile = spec.pointwise_f64(m2(), 24).unwrap();

    let grid = build_grid(40, 80).unwrap();
    let matrix = assemble(&profile, &grid);

    let trace_analytic: f64 = e.coeffs().iter().map(|c| c.to_f64()).sum();
    let trace_err = ((matrix.trace() - trace_analytic) / trace_analytic).abs();
    assert!(trace_err < 1e-8, "trace identity: {trace_err}");

    let hs = hs_norm(&e).to_f64();
    let frob_err = ((matrix.frobenius_norm() - hs) / hs).abs();
    assert!(frob_err < 1e-8, "Frobenius identity: {frob_err}");

    let eigenvalues = eigs_symmetric(&matrix, 1e-12).unwrap();
    assert!(
        *eigenvalues.last().unwrap() > -1e-10 * matrix.frobenius_norm(),
        "positivity: min eigenvalue {}",
        eigenvalues.last().unwrap()
    );

    let cmp = compare_spectra(&eigenvalues, &s, 16).unwrap();
    assert!(
        cmp.max_relative_error < 1e-8,
        "top-16 relative error {}",
        cmp.max_relative_error
    );
    assert_eq!(cmp.clusters, vec![1, 3, 5, 7]);
    assert!(cmp.clusters_match);
    pass(
        "criterion 9 (Nystrom 40x80 vs analytic: top-16 < 1e-8, clusters 1,3,5,7)",
        t0,
        Some(120.0),
    );
}

struct XorShift(u64);

impl XorShift {
    fn next(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    fn uniform(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }
}

#[test]
fn criterion_10_inverse_property() {
    let t0 = Instant::now();
    let prec = 192;
    let mut rng = XorShift(0x5EED_CAFE_F00D_D00D);
    for trial in 0..1000 {
        let m = SphereDim::new(2 + (rng.next() % 5) as u32).unwrap();
        let levels = (rng.next() % 33) as usize;
        let r = 1 + (rng.next() % 4) as u32;
        let coeffs: Vec<Real> = (0..=levels)
            .map(|_| Real::from_f64(2.0 * rng.uniform() - 1.0, prec))
            .collect();
        let e = LegendreExpansion::new(m, coeffs, prec, Provenance::ClosedForm).unwrap();
        let round_trip = j_operator(&lb_derivative(&e, r), r);
        for n in 1..=levels {
            assert!(
                round_trip.coeff(n) == e.coeff(n),
                "trial {trial}: m={} r={r} level {n} not recovered exactly",
                m.get()
            );
        }
        assert!(round_trip.coeff(0).is_zero());
    }
    pass(
        "criterion 10 (j_operator o lb_derivative identity on levels >= 1, 1000 trials)",
        t0,
        None,
    );
}
