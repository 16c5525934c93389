//! Spectra of zonal integral operators: block structure, the paper ordering and the sorted
//! ordering, Laplace-Beltrami multiplier operators, Hilbert-Schmidt norms, and growth-rate
//! estimation for derivative norms.
//!
//! The eigenvalues of the operator generated by K = sum c_n P_n^m come in blocks: level n
//! contributes the value c_n / d_n^m repeated d_n^m times. Flat indices are 1-based, so the
//! level-n block occupies flat positions cum_dim(n-1, m) + 1 ..= cum_dim(n, m).

use num_bigint::BigUint;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::harmonics::{self, SphereDim};
use crate::kernels::{schoenberg_check, LegendreExpansion};
use crate::real::Real;

#[derive(Clone, Debug)]
pub struct SpectrumBlock {
    pub level: u64,
    pub value: Real,
    pub multiplicity: BigUint,
}

/// Eigenvalue blocks of a zonal operator, with the two orderings the decay analysis needs.
#[derive(Clone, Debug)]
pub struct Spectrum {
    m: SphereDim,
    blocks: Vec<SpectrumBlock>,
}

impl Spectrum {
    pub fn m(&self) -> SphereDim {
        self.m
    }

    pub fn blocks(&self) -> &[SpectrumBlock] {
        &self.blocks
    }

    /// Total number of flat entries across all blocks.
    pub fn flat_len(&self) -> BigUint {
        self.blocks.iter().map(|b| &b.multiplicity).sum()
    }

    /// 1-based flat range (first, last) of the block at `level` in the paper's block order.
    pub fn block_range(&self, level: u64) -> Option<(BigUint, BigUint)> {
        let mut cum = BigUint::ZERO;
        for b in &self.blocks {
            let first = &cum + 1u32;
            cum += &b.multiplicity;
            if b.level == level {
                return Some((first, cum));
            }
        }
        None
    }

    /// Value at the 1-based flat index in block order.
    pub fn block_order_value(&self, k: u64) -> Option<&Real> {
        if k == 0 {
            return None;
        }
        let target = BigUint::from(k);
        let mut cum = BigUint::ZERO;
        for b in &self.blocks {
            cum += &b.multiplicity;
            if target <= cum {
                return Some(&b.value);
            }
        }
        None
    }

    /// Sorted view: non-increasing in |value|, ties broken by lower level first.
    pub fn sorted(&self) -> SortedSpectrum<'_> {
        let mut order: Vec<&SpectrumBlock> = self.blocks.iter().collect();
        order.sort_by(|a, b| {
            b.value
                .abs_cmp(&a.value)
                .then_with(|| a.level.cmp(&b.level))
        });
        let mut cum = Vec::with_capacity(order.len());
        let mut acc = BigUint::ZERO;
        for b in &order {
            acc += &b.multiplicity;
            cum.push(acc.clone());
        }
        SortedSpectrum { order, cum }
    }
}

/// Flat access into the non-increasing rearrangement of a spectrum.
pub struct SortedSpectrum<'a> {
    order: Vec<&'a SpectrumBlock>,
    cum: Vec<BigUint>,
}

impl<'a> SortedSpectrum<'a> {
    pub fn value_at(&self, k: u64) -> Option<&'a Real> {
        if k == 0 {
            return None;
        }
        let target = BigUint::from(k);
        let pos = self.cum.partition_point(|c| *c < target);
        self.order.get(pos).map(|b| &b.value)
    }

    pub fn block_at(&self, k: u64) -> Option<&'a SpectrumBlock> {
        if k == 0 {
            return None;
        }
        let target = BigUint::from(k);
        let pos = self.cum.partition_point(|c| *c < target);
        self.order.get(pos).copied()
    }

    pub fn flat_len(&self) -> &BigUint {
        self.cum.last().unwrap_or(&BigUint::ZERO)
    }

    /// (flat index, value) pairs for k = 1..=limit.
    pub fn iter_flat(&self, limit: u64) -> impl Iterator<Item = (u64, &'a Real)> + '_ {
        let mut block = 0usize;
        let mut upto = self
            .order
            .first()
            .map(|b| b.multiplicity.clone())
            .unwrap_or_default();
        (1..=limit).map_while(move |k| {
            let target = BigUint::from(k);
            while target > upto {
                block += 1;
                if block >= self.order.len() {
                    return None;
                }
                upto += &self.order[block].multiplicity;
            }
            Some((k, &self.order[block].value))
        })
    }
}

impl Serialize for Spectrum {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct WireBlock {
            level: u64,
            value: String,
            multiplicity: String,
        }
        #[derive(Serialize)]
        struct Wire {
            m: u32,
            blocks: Vec<WireBlock>,
        }
        Wire {
            m: self.m.get(),
            blocks: self
                .blocks
                .iter()
                .map(|b| WireBlock {
                    level: b.level,
                    value: b.value.to_decimal_string(),
                    multiplicity: b.multiplicity.to_string(),
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

/// Blocks (n, c_n / d_n^m, d_n^m) of the operator generated by the expansion.
pub fn eigenvalue_blocks(e: &LegendreExpansion) -> Spectrum {
    let m = e.m();
    let prec = e.precision();
    let dims = harmonics::dim_harmonic_all(e.truncation_level() as u64, m);
    let blocks = dims
        .iter()
        .enumerate()
        .map(|(n, d)| SpectrumBlock {
            level: n as u64,
            value: e.coeff(n).div(&Real::from_biguint(d, prec)),
            multiplicity: d.clone(),
        })
        .collect();
    Spectrum { m, blocks }
}

/// r-th Laplace-Beltrami derivative: multiplies c_n by (n(n+m-1)/m)^r and annihilates the
/// constant level. The multiplier is carried lazily so that `j_operator` inverts it exactly.
pub fn lb_derivative(e: &LegendreExpansion, r: u32) -> LegendreExpansion {
    let q = e.lb_power() + r as i64;
    e.clone().base_zeroed_level0().with_lb_power(q)
}

/// r-th Laplace-Beltrami integral operator: c_0 unchanged, c_n multiplied by (m/(n(n+m-1)))^r.
pub fn j_operator(e: &LegendreExpansion, r: u32) -> LegendreExpansion {
    let q = e.lb_power() - r as i64;
    e.clone().with_lb_power(q)
}

/// Hilbert-Schmidt norm sqrt(sum_n c_n^2 / d_n^m).
pub fn hs_norm(e: &LegendreExpansion) -> Real {
    let prec = e.precision();
    let wp = prec + 32;
    let dims = harmonics::dim_harmonic_all(e.truncation_level() as u64, e.m());
    let mut acc = Real::zero(wp);
    for (n, d) in dims.iter().enumerate() {
        let c = e.coeff(n);
        acc = acc.add(&c.square().div(&Real::from_biguint(d, wp)));
    }
    acc.sqrt().round_to(prec)
}

/// Derivative-norm growth diagnostic for a truncated expansion.
#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    pub r_max: u32,
    /// norms[r] = ||K_{0,r}||_2 for r = 0..=r_max (r = 0 is the kernel itself).
    pub norms: Vec<Real>,
    pub m_hat: Real,
    pub r_hat: Real,
    /// Whether the estimated ratio exceeds 1, as the norm-bound hypothesis posits.
    pub r_hat_above_one: bool,
    /// norms[r] <= m_hat * r_hat^r held for every computed r.
    pub satisfied: bool,
}

/// Estimates (M, R) with ||K_{0,r}||_2 <= M R^r from the derivative norms of a truncated
/// expansion: R_hat is the largest consecutive ratio over the trailing half of the range,
/// M_hat the smallest prefactor making the envelope hold.
pub fn growth_rate(e: &LegendreExpansion, r_max: u32) -> Result<GrowthReport> {
    if r_max < 2 {
        return Err(Error::param("r_max", "growth report needs r_max >= 2"));
    }
    let prec = e.precision();
    let mut norms = Vec::with_capacity(r_max as usize + 1);
    norms.push(hs_norm(e));
    for r in 1..=r_max {
        norms.push(hs_norm(&lb_derivative(e, r)));
    }

    let lo = (r_max / 2).max(1) as usize;
    let mut r_hat = Real::zero(prec);
    let mut any_ratio = false;
    for r in lo..r_max as usize {
        if norms[r].is_zero() || norms[r + 1].is_zero() {
            continue;
        }
        let ratio = norms[r + 1].div(&norms[r]);
        r_hat = if any_ratio { r_hat.max(&ratio) } else { ratio };
        any_ratio = true;
    }
    if !any_ratio {
        // derivatives vanish identically (a constant kernel)
        r_hat = Real::one(prec);
    }

    let mut m_hat = Real::zero(prec);
    let mut r_pow = Real::one(prec);
    for norm in &norms {
        if !r_pow.is_zero() {
            m_hat = m_hat.max(&norm.div(&r_pow));
        }
        r_pow = r_pow.mul(&r_hat);
    }

    // re-verify the envelope with a one-ulp-scale slack
    let slack = Real::one(prec).add(&Real::pow2(-(prec as i32 - 8), prec));
    let mut satisfied = true;
    let mut r_pow = Real::one(prec);
    for norm in &norms {
        if norm.cmp(&m_hat.mul(&r_pow).mul(&slack)) == std::cmp::Ordering::Greater {
            satisfied = false;
        }
        r_pow = r_pow.mul(&r_hat);
    }

    let r_hat_above_one = r_hat.cmp(&Real::one(prec)) == std::cmp::Ordering::Greater;
    Ok(GrowthReport {
        r_max,
        norms,
        m_hat,
        r_hat,
        r_hat_above_one,
        satisfied,
    })
}

/// Where the top singular value of the r-th derivative operator sits.
#[derive(Clone, Debug, Serialize)]
pub struct DerivativeTop {
    pub value: Real,
    pub level_attained: u64,
    /// Whether the maximum is attained at level 1 (independent of r), as the Mercer-coefficient
    /// identity asserts for L2-PD kernels.
    pub matches_level1: bool,
}

/// s_1(K_{0,r}) by enumeration over the available levels: the maximum of
/// (c_n/d_n^m) (n(n+m-1)/m)^r over n >= 1. Rejects non-PD expansions.
pub fn s1_of_derivative(e: &LegendreExpansion, r: u32) -> Result<DerivativeTop> {
    let check = schoenberg_check(e);
    if !check.positive_definite {
        return Err(Error::domain(format!(
            "expansion is not L2-positive definite (first negative coefficient at level {})",
            check.first_violation.unwrap_or(0)
        )));
    }
    if e.truncation_level() < 1 {
        // constant kernels: every derivative vanishes
        return Ok(DerivativeTop {
            value: Real::zero(e.precision()),
            level_attained: 0,
            matches_level1: false,
        });
    }
    let deriv = lb_derivative(e, r);
    let spectrum = eigenvalue_blocks(&deriv);
    let mut best: Option<(u64, Real)> = None;
    for b in spectrum.blocks().iter().skip(1) {
        match &best {
            Some((_, v)) if b.value.cmp(v) != std::cmp::Ordering::Greater => {}
            _ => best = Some((b.level, b.value.clone())),
        }
    }
    let (level_attained, value) = best.expect("at least one level");
    Ok(DerivativeTop {
        value,
        level_attained,
        matches_level1: level_attained == 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{catalog_coefficients, expand, KernelSpec, LegendreExpansion, Provenance};
    use crate::real::Decimal;

    fn m2() -> SphereDim {
        SphereDim::new(2).unwrap()
    }

    fn optimality(levels: usize, prec: usize) -> LegendreExpansion {
        catalog_coefficients(&KernelSpec::Optimality, m2(), levels, prec).unwrap()
    }

    fn explicit(coeffs: &[f64], m: u32, prec: usize) -> LegendreExpansion {
        LegendreExpansion::new(
            SphereDim::new(m).unwrap(),
            coeffs.iter().map(|&c| Real::from_f64(c, prec)).collect(),
            prec,
            Provenance::ClosedForm,
        )
        .unwrap()
    }

    #[test]
    fn optimality_block_two() {
        let s = eigenvalue_blocks(&optimality(10, 256));
        let b = &s.blocks()[2];
        assert_eq!(b.level, 2);
        assert_eq!(b.multiplicity, BigUint::from(5u32));
        // 2^-5 exactly
        assert_eq!(b.value, Real::pow2(-5, 256));
    }

    #[test]
    fn single_constant_block() {
        let s = eigenvalue_blocks(&explicit(&[1.0], 2, 128));
        assert_eq!(s.blocks().len(), 1);
        assert_eq!(s.blocks()[0].level, 0);
        assert_eq!(s.blocks()[0].value, Real::one(128));
        assert_eq!(s.blocks()[0].multiplicity, BigUint::from(1u32));
    }

    #[test]
    fn multiquadric_level_one_value() {
        let spec = KernelSpec::Multiquadric {
            sigma: Decimal::new("1").unwrap(),
            delta: Decimal::new("0.5").unwrap(),
        };
        let e = catalog_coefficients(&spec, m2(), 5, 256).unwrap();
        let s = eigenvalue_blocks(&e);
        let want = Real::from_f64(0.25, 256).div(&Real::from_u64(3, 256));
        assert_eq!(s.blocks()[1].value, want);
        assert_eq!(s.blocks()[1].multiplicity, BigUint::from(3u32));
    }

    #[test]
    fn flat_index_bookkeeping() {
        for m in [2u32, 3, 5] {
            let sd = SphereDim::new(m).unwrap();
            let e = catalog_coefficients(&KernelSpec::Optimality, sd, 50, 192).unwrap();
            let s = eigenvalue_blocks(&e);
            for n in 1..=50u64 {
                let (first, last) = s.block_range(n).unwrap();
                assert_eq!(first, harmonics::cum_dim(n - 1, sd) + 1u32, "m={m} n={n}");
                assert_eq!(last, harmonics::cum_dim(n, sd), "m={m} n={n}");
            }
        }
    }

    #[test]
    fn derivative_multipliers() {
        let prec = 256;
        // level 0 annihilated for any r
        let e = optimality(6, prec);
        let d = lb_derivative(&e, 3);
        assert!(d.coeff(0).is_zero());

        // n=1, m=2, r=1: multiplier 1*2/2 = 1
        let d1 = lb_derivative(&e, 1);
        assert_eq!(d1.coeff(1), e.coeff(1));

        // n=2, m=3, r=2: multiplier (2*4/3)^2 = 64/9
        let e3 = catalog_coefficients(&KernelSpec::Optimality, SphereDim::new(3).unwrap(), 4, prec)
            .unwrap();
        let d2 = lb_derivative(&e3, 2);
        let want = e3
            .coeff(2)
            .mul(&Real::from_u64(64, prec + 64))
            .div(&Real::from_u64(9, prec + 64))
            .round_to(prec);
        assert_eq!(d2.coeff(2), want);
    }

    #[test]
    fn j_multipliers() {
        let prec = 256;
        let e = optimality(6, prec);
        // J(1) = 1: level 0 unchanged
        let j = j_operator(&e, 2);
        assert_eq!(j.coeff(0), e.coeff(0));
        // n=1, m=2, r=1: multiplier 2/(1*2) = 1
        let j1 = j_operator(&e, 1);
        assert_eq!(j1.coeff(1), e.coeff(1));
    }

    #[test]
    fn j_inverts_derivative_exactly() {
        let e = optimality(12, 192);
        for r in [1u32, 2, 5] {
            let round_trip = j_operator(&lb_derivative(&e, r), r);
            assert_eq!(round_trip.lb_power(), 0);
            for n in 1..=12 {
                assert_eq!(round_trip.coeff(n), e.coeff(n), "r={r} n={n}");
            }
            assert!(round_trip.coeff(0).is_zero());
        }
    }

    #[test]
    fn hs_norm_cases() {
        let prec = 256;
        assert_eq!(hs_norm(&explicit(&[1.0], 2, prec)), Real::one(prec));

        // single level n=1, m=2, c_1 = 3a: norm = sqrt(3) * a
        let a = 0.25;
        let e = explicit(&[0.0, 3.0 * a], 2, prec);
        let want = Real::from_u64(3, prec).sqrt().mul(&Real::from_f64(a, prec));
        let got = hs_norm(&e);
        assert!(got.sub(&want).abs().div(&want).to_f64() < 1e-70);
    }

    #[test]
    fn parseval_consistency() {
        // hs^2 equals the flat sum of value^2 over the block order
        let e = optimality(20, 256);
        let s = eigenvalue_blocks(&e);
        let mut flat = Real::zero(256 + 32);
        for b in s.blocks() {
            flat = flat.add(
                &b.value
                    .square()
                    .mul(&Real::from_biguint(&b.multiplicity, 256 + 32)),
            );
        }
        let flat = flat.round_to(256);
        let hs2 = hs_norm(&e).square();
        let rel = hs2.sub(&flat).abs().div(&flat).to_f64();
        assert!(rel < 1e-70, "{rel}");
    }

    #[test]
    fn optimality_hs_partial_sums_converge() {
        let h20 = hs_norm(&optimality(20, 256));
        let h40 = hs_norm(&optimality(40, 256));
        assert!(h40.sub(&h20).abs().to_f64() < 1e-100);
        // 1 (level 0) + 3 (level 1, value 1, multiplicity 3) dominate: hs^2 ~ 4 + 5/2^10 + ...
        let hs2 = h40.square().to_f64();
        assert!((hs2 - 4.0).abs() < 5e-3, "{hs2}");
    }

    #[test]
    fn growth_constant_kernel() {
        let e = explicit(&[1.0], 2, 192);
        let g = growth_rate(&e, 4).unwrap();
        assert_eq!(g.r_hat, Real::one(192));
        assert_eq!(g.m_hat, Real::one(192));
        assert!(g.satisfied);
        assert!(!g.r_hat_above_one);
        for r in 1..=4 {
            assert!(g.norms[r].is_zero());
        }
    }

    #[test]
    fn growth_single_level_ratio_is_exact_multiplier() {
        // single level n=3, m=2: every consecutive norm ratio equals 3*4/2 = 6
        let e = explicit(&[0.0, 0.0, 0.0, 0.5], 2, 256);
        let g = growth_rate(&e, 6).unwrap();
        assert_eq!(g.r_hat, Real::from_u64(6, 256));
        assert!(g.satisfied);
        assert!(g.r_hat_above_one);
    }

    #[test]
    fn growth_optimality_satisfied() {
        let g = growth_rate(&optimality(40, 256), 10).unwrap();
        assert!(g.satisfied);
        assert!(g.r_hat_above_one);
        assert!(g.m_hat.is_positive());
    }

    #[test]
    fn growth_rejects_small_r_max() {
        assert!(growth_rate(&optimality(5, 128), 1).is_err());
    }

    #[test]
    fn derivative_top_single_level_one() {
        // only level 1 present: value c_1/(m+1), independent of r
        for m in [2u32, 4] {
            let e = explicit(&[0.0, 0.7], m, 192);
            let want = Real::from_f64(0.7, 192).div(&Real::from_u64(m as u64 + 1, 192));
            for r in [1u32, 3, 9] {
                let top = s1_of_derivative(&e, r).unwrap();
                assert_eq!(top.level_attained, 1);
                assert!(top.matches_level1);
                assert_eq!(top.value, want, "m={m} r={r}");
            }
        }
    }

    #[test]
    fn derivative_top_optimality() {
        // r=1: level 1 gives 1, level 2 gives 3/32, level 3 gives 6/3^7...
        let top = s1_of_derivative(&optimality(10, 256), 1).unwrap();
        assert_eq!(top.level_attained, 1);
        assert!(top.matches_level1);
        assert_eq!(top.value, Real::one(256));
    }

    #[test]
    fn derivative_top_heavy_tail_leaves_level_one() {
        // multiquadric delta = 0.9, r = 1: the supremum sits above level 1; the attained
        // level is pinned by a binary64 enumeration oracle over the same levels
        let spec = KernelSpec::Multiquadric {
            sigma: Decimal::new("1").unwrap(),
            delta: Decimal::new("0.9").unwrap(),
        };
        let e = catalog_coefficients(&spec, m2(), 40, 192).unwrap();
        let top = s1_of_derivative(&e, 1).unwrap();
        assert!(!top.matches_level1);

        let oracle_level = (1..=40u64)
            .max_by(|&a, &b| {
                let f = |n: u64| {
                    0.1 * 0.9f64.powi(n as i32) * (n * (n + 1)) as f64 / (2 * n + 1) as f64
                };
                f(a).partial_cmp(&f(b)).unwrap()
            })
            .unwrap();
        assert_eq!(top.level_attained, oracle_level);
    }

    #[test]
    fn derivative_top_rejects_non_pd() {
        let e = explicit(&[1.0, -0.5], 2, 128);
        assert!(s1_of_derivative(&e, 1).is_err());
    }

    #[test]
    fn j_multipliers_strictly_decreasing() {
        // m/(n(n+m-1)) decreasing in n <=> n(n+m-1) increasing, checked exactly
        for m in 2u64..=6 {
            let mut prev = 0u128;
            for n in 1u64..=1000 {
                let cur = (n as u128) * ((n + m - 1) as u128);
                assert!(cur > prev);
                prev = cur;
            }
        }
    }

    #[test]
    fn sorted_spectrum_ordering_and_ties() {
        // equal values at levels 1 and 3 (exact dyadic quotients): lower level comes first
        let e = explicit(&[0.5, 0.75, 0.3, 1.75], 2, 192);
        let s = eigenvalue_blocks(&e);
        // values: 0.5, 0.25, 0.06, 0.25
        let sorted = s.sorted();
        assert_eq!(sorted.value_at(1).unwrap(), &Real::from_f64(0.5, 192));
        let b2 = sorted.block_at(2).unwrap();
        assert_eq!(b2.level, 1, "tie broken by lower level");
        // the level-1 block occupies flat 2..=4, level 3 block 5..=11
        assert_eq!(sorted.block_at(4).unwrap().level, 1);
        assert_eq!(sorted.block_at(5).unwrap().level, 3);
        assert_eq!(sorted.block_at(11).unwrap().level, 3);
        assert_eq!(sorted.block_at(12).unwrap().level, 2);
        assert!(sorted.value_at(17).is_none());

        // iter_flat agrees with value_at
        for (k, v) in sorted.iter_flat(16) {
            assert_eq!(v, sorted.value_at(k).unwrap(), "k={k}");
        }
        assert_eq!(sorted.iter_flat(40).count(), 16);
    }

    #[test]
    fn spectrum_serialization_shape() {
        let s = eigenvalue_blocks(&optimality(3, 192));
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.starts_with("{\"m\":2,\"blocks\":[{\"level\":0,"));
        assert!(json.contains("\"multiplicity\":\"5\""));
    }

    #[test]
    fn gaussian_spectrum_is_sorted_in_block_order() {
        let e = expand(
            &KernelSpec::Gaussian {
                r: Decimal::new("1").unwrap(),
            },
            m2(),
            20,
            192,
            None,
        )
        .unwrap();
        let s = eigenvalue_blocks(&e);
        for w in s.blocks().windows(2) {
            assert!(w[0].value.cmp(&w[1].value) == std::cmp::Ordering::Greater);
        }
    }
}
