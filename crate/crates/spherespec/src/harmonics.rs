//! Exact harmonic combinatorics, Legendre polynomials for dimension m, and Gauss-Jacobi
//! quadrature for the zonal weight (1-t^2)^((m-2)/2).
//!
//! Conventions. `m >= 2` is the sphere dimension; `d_n^m` is the dimension of the space of
//! degree-n spherical harmonics on S^m, computed as
//!
//! ```text
//! d_n^m = (2n+m-1) (n+m-2)! / (n! (m-1)!)
//! ```
//!
//! (the recurrence d_n^{m+1} = sum_{k<=n} d_k^m pins this form; see the tests). `P_n^m` is the
//! degree-n Legendre/Gegenbauer polynomial for dimension m normalized so that P_n^m(1) = 1,
//! which keeps |P_n^m| <= 1 on [-1, 1] and makes the three-term recurrence
//!
//! ```text
//! (n+m-1) P_{n+1}^m(t) = (2n+m-1) t P_n^m(t) - n P_{n-1}^m(t)
//! ```
//!
//! stable at every precision.

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::real::Real;

/// Sphere dimension m >= 2 and the constants derived from it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SphereDim(u32);

impl SphereDim {
    pub fn new(m: u32) -> Result<Self> {
        if m < 2 {
            return Err(Error::param(
                "m",
                format!("sphere dimension must be >= 2, got {m}"),
            ));
        }
        Ok(SphereDim(m))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// The case split of the decay exponent: delta = 2 for m = 2, else 1.
    pub fn delta(self) -> u32 {
        if self.0 == 2 {
            2
        } else {
            1
        }
    }

    /// Surface area omega_m = 2 pi^((m+1)/2) / Gamma((m+1)/2).
    ///
    /// (m+1)/2 is an integer or a half-integer, so Gamma reduces to factorials and sqrt(pi).
    pub fn surface_area(self, prec: usize) -> Real {
        let m = self.0 as u64;
        let two = Real::from_u64(2, prec);
        let pi = Real::pi(prec);
        if m % 2 == 1 {
            // omega_m = 2 pi^k / (k-1)!,  k = (m+1)/2
            let k = m.div_ceil(2);
            two.mul(&pi.powi(k))
                .div(&Real::from_biguint(&factorial(k - 1), prec))
        } else {
            // omega_m = 2 pi^j 4^j j! / (2j)!,  j = m/2
            let j = m / 2;
            let num = two
                .mul(&pi.powi(j))
                .mul(&Real::from_u64(4, prec).powi(j))
                .mul(&Real::from_biguint(&factorial(j), prec));
            num.div(&Real::from_biguint(&factorial(2 * j), prec))
        }
    }

    /// The projection constant omega_{m-1} / omega_m used throughout the zonal calculus.
    pub fn projection_ratio(self, prec: usize) -> Real {
        let m = self.0 as u64;
        if m.is_multiple_of(2) {
            // (2j)! / (4^j j! (j-1)!),  j = m/2  (a rational number)
            let j = m / 2;
            let num = factorial(2 * j);
            let den = BigUint::from(4u32).pow(j as u32) * factorial(j) * factorial(j - 1);
            Real::from_biguint(&num, prec).div(&Real::from_biguint(&den, prec))
        } else {
            // 4^j (j!)^2 / (pi (2j)!),  j = (m-1)/2
            let j = (m - 1) / 2;
            let f = factorial(j);
            let num = BigUint::from(4u32).pow(j as u32) * (&f * &f);
            Real::from_biguint(&num, prec)
                .div(&Real::from_biguint(&factorial(2 * j), prec))
                .div(&Real::pi(prec))
        }
    }
}

pub fn factorial(n: u64) -> BigUint {
    let mut acc = BigUint::one();
    for k in 2..=n {
        acc *= k;
    }
    acc
}

/// d_n^m, exact.
pub fn dim_harmonic(n: u64, m: SphereDim) -> BigUint {
    let m = m.get() as u64;
    let num = BigUint::from(2 * n + m - 1) * factorial(n + m - 2);
    let den = factorial(n) * factorial(m - 1);
    debug_assert!((&num % &den).is_zero(), "d_n^m is an integer");
    num / den
}

/// d_0^m .. d_{n_max}^m in one pass via the term ratio
/// d_n = d_{n-1} (2n+m-1)(n+m-2) / ((2n+m-3) n), which keeps every intermediate small.
pub fn dim_harmonic_all(n_max: u64, m: SphereDim) -> Vec<BigUint> {
    let m = m.get() as u64;
    let mut out = Vec::with_capacity(n_max as usize + 1);
    let mut d = BigUint::one();
    out.push(d.clone());
    for n in 1..=n_max {
        let num = d * ((2 * n + m - 1) * (n + m - 2));
        let den = BigUint::from((2 * n + m - 3) * n);
        debug_assert!((&num % &den).is_zero());
        d = num / den;
        out.push(d.clone());
    }
    out
}

/// Cumulative dimension d_n^{m+1} = sum_{k=0}^{n} d_k^m: the flat index of the last entry of
/// the (n+1)-th eigenvalue block.
pub fn cum_dim(n: u64, m: SphereDim) -> BigUint {
    dim_harmonic(n, SphereDim(m.get() + 1))
}

/// Cumulative dimensions for n = 0..n_max in one pass.
pub fn cum_dim_all(n_max: u64, m: SphereDim) -> Vec<BigUint> {
    dim_harmonic_all(n_max, SphereDim(m.get() + 1))
}

/// P_n^m(t) with P_n^m(1) = 1. Errors outside [-1, 1].
pub fn legendre_eval(n: u64, m: SphereDim, t: &Real, prec: usize) -> Result<Real> {
    let one = Real::one(prec);
    if t.abs().cmp(&one) == std::cmp::Ordering::Greater {
        return Err(Error::domain(format!(
            "legendre argument |t| <= 1 required, got {}",
            t.to_f64()
        )));
    }
    Ok(legendre_all(n, m, t, prec).pop().expect("n+1 values"))
}

/// P_0^m(t) .. P_{n_max}^m(t) by the three-term recurrence.
pub fn legendre_all(n_max: u64, m: SphereDim, t: &Real, prec: usize) -> Vec<Real> {
    let m = m.get() as u64;
    let t = t.round_to(prec);
    let mut out = Vec::with_capacity(n_max as usize + 1);
    let mut prev = Real::one(prec);
    out.push(prev.clone());
    if n_max == 0 {
        return out;
    }
    let mut cur = t.clone();
    out.push(cur.clone());
    for k in 1..n_max {
        let a = Real::from_u64(2 * k + m - 1, prec);
        let b = Real::from_u64(k, prec);
        let c = Real::from_u64(k + m - 1, prec);
        let next = a.mul(&t).mul(&cur).sub(&b.mul(&prev)).div(&c);
        prev = cur;
        cur = next;
        out.push(cur.clone());
    }
    out
}

/// (P_n^m(t), d/dt P_n^m(t)) for the quadrature Newton iteration.
fn legendre_with_derivative(n: u64, m: u64, t: &Real, prec: usize) -> (Real, Real) {
    let one = Real::one(prec);
    let zero = Real::zero(prec);
    if n == 0 {
        return (one, zero);
    }
    let mut p_prev = one;
    let mut p_cur = t.round_to(prec);
    let mut d_prev = zero;
    let mut d_cur = Real::one(prec);
    for k in 1..n {
        let a = Real::from_u64(2 * k + m - 1, prec);
        let b = Real::from_u64(k, prec);
        let c = Real::from_u64(k + m - 1, prec);
        let p_next = a.mul(t).mul(&p_cur).sub(&b.mul(&p_prev)).div(&c);
        let d_next = a
            .mul(&p_cur.add(&t.mul(&d_cur)))
            .sub(&b.mul(&d_prev))
            .div(&c);
        p_prev = p_cur;
        p_cur = p_next;
        d_prev = d_cur;
        d_cur = d_next;
    }
    (p_cur, d_cur)
}

fn legendre_f64(n: u64, m: u64, t: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = t;
    for k in 1..n {
        let next = ((2 * k + m - 1) as f64 * t * cur - k as f64 * prev) / (k + m - 1) as f64;
        prev = cur;
        cur = next;
    }
    cur
}

/// Binary64 P_0^m(t) .. P_{n_max}^m(t) for the Nystrom oracle path.
pub fn legendre_all_f64(n_max: usize, m: SphereDim, t: f64) -> Vec<f64> {
    let m = m.get() as u64;
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(1.0);
    if n_max == 0 {
        return out;
    }
    out.push(t);
    for k in 1..n_max as u64 {
        let next = ((2 * k + m - 1) as f64 * t * out[k as usize] - k as f64 * out[k as usize - 1])
            / (k + m - 1) as f64;
        out.push(next);
    }
    out
}

/// Gauss-Jacobi rule for the weight (1-t^2)^((m-2)/2), exact on polynomials of degree
/// <= 2*order - 1.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub m: SphereDim,
    pub order: usize,
    pub nodes: Vec<Real>,
    pub weights: Vec<Real>,
    pub prec: usize,
}

impl QuadratureRule {
    /// Integrates f against the weight (1-t^2)^((m-2)/2) over [-1, 1], in node order.
    pub fn integrate(&self, mut f: impl FnMut(&Real) -> Real) -> Real {
        let mut acc = Real::zero(self.prec + 32);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc = acc.add(&w.mul(&f(x)));
        }
        acc.round_to(self.prec)
    }
}

/// Builds the rule: nodes are the roots of P_order^m located in binary64 and polished by a
/// Newton iteration with bisection fallback (tolerance 2^-(prec-10)); weights come from the
/// Christoffel function of the orthonormalized P_k^m, whose norms are known exactly:
/// integral of (P_k^m)^2 against the weight equals (omega_m/omega_{m-1}) / d_k^m.
pub fn quadrature_rule(m: SphereDim, order: usize, prec: usize) -> Result<QuadratureRule> {
    if order < 1 {
        return Err(Error::param("order", "quadrature order must be >= 1"));
    }
    let n = order as u64;
    let md = m.get() as u64;

    let seeds = locate_roots_f64(n, md, order)?;

    let tol = Real::pow2(-((prec as i32) - 10), prec);
    let mut nodes = Vec::with_capacity(order);
    for (idx, &(lo0, hi0, seed)) in seeds.iter().enumerate() {
        let mut lo = Real::from_f64(lo0, prec);
        let mut hi = Real::from_f64(hi0, prec);
        let sign_lo = legendre_f64(n, md, lo0) >= 0.0;
        let mut x = Real::from_f64(seed, prec);
        let half = Real::from_f64(0.5, prec);
        let mut converged = false;
        for _ in 0..200 {
            let (p, dp) = legendre_with_derivative(n, md, &x, prec);
            if p.is_zero() {
                converged = true;
                break;
            }
            // shrink the bracket with the sign of p
            if p.is_positive() == sign_lo {
                lo = x.clone();
            } else {
                hi = x.clone();
            }
            // Newton step, falling back to bisection only when it escapes the bracket
            let next = if dp.is_zero() {
                lo.add(&hi).mul(&half)
            } else {
                let cand = x.sub(&p.div(&dp));
                if cand.cmp(&lo) == std::cmp::Ordering::Less
                    || cand.cmp(&hi) == std::cmp::Ordering::Greater
                {
                    lo.add(&hi).mul(&half)
                } else {
                    cand
                }
            };
            let step = next.sub(&x).abs();
            x = next;
            if step.cmp(&tol) != std::cmp::Ordering::Greater {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                what: "quadrature node search".into(),
                index: idx,
            });
        }
        nodes.push(x);
    }

    for pair in nodes.windows(2) {
        if pair[0].cmp(&pair[1]) != std::cmp::Ordering::Less {
            return Err(Error::NonConvergence {
                what: "quadrature nodes are not strictly increasing".into(),
                index: 0,
            });
        }
    }

    // Christoffel weights: w_i = (omega_m/omega_{m-1}) / sum_{k<order} d_k^m P_k^m(x_i)^2.
    let wp = prec + 32;
    let mass = m.projection_ratio(wp).recip();
    let dims: Vec<Real> = dim_harmonic_all(n - 1, m)
        .iter()
        .map(|d| Real::from_biguint(d, wp))
        .collect();
    let mut weights = Vec::with_capacity(order);
    for (idx, x) in nodes.iter().enumerate() {
        let p = legendre_all(n - 1, m, x, wp);
        let mut s = Real::zero(wp);
        for (pk, dk) in p.iter().zip(&dims) {
            s = s.add(&dk.mul(&pk.square()));
        }
        let w = mass.div(&s).round_to(prec);
        if !w.is_positive() {
            return Err(Error::NonConvergence {
                what: "non-positive quadrature weight".into(),
                index: idx,
            });
        }
        weights.push(w);
    }

    Ok(QuadratureRule {
        m,
        order,
        nodes,
        weights,
        prec,
    })
}

/// Brackets the `order` roots of P_order^m in binary64 and bisects each bracket down to
/// binary64 accuracy. The normalized recurrence keeps |P| <= 1, so the scan is stable.
fn locate_roots_f64(n: u64, m: u64, order: usize) -> Result<Vec<(f64, f64, f64)>> {
    let mut grid_size = 8 * order.max(4);
    for _ in 0..3 {
        let mut ts: Vec<f64> = (0..grid_size)
            .map(|j| (std::f64::consts::PI * (j as f64 + 0.5) / grid_size as f64).cos())
            .collect();
        ts.reverse(); // ascending in t
        let vals: Vec<f64> = ts.iter().map(|&t| legendre_f64(n, m, t)).collect();
        let mut brackets = Vec::with_capacity(order);
        for j in 1..grid_size {
            if vals[j - 1] == 0.0 {
                brackets.push((ts[j - 1] - 1e-12, ts[j - 1] + 1e-12, ts[j - 1]));
            } else if (vals[j - 1] < 0.0) != (vals[j] < 0.0) {
                let (mut lo, mut hi) = (ts[j - 1], ts[j]);
                let neg_lo = vals[j - 1] < 0.0;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    let v = legendre_f64(n, m, mid);
                    if v == 0.0 {
                        lo = mid;
                        hi = mid;
                        break;
                    }
                    if (v < 0.0) == neg_lo {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                brackets.push((ts[j - 1], ts[j], 0.5 * (lo + hi)));
            }
        }
        if brackets.len() == order {
            return Ok(brackets);
        }
        grid_size *= 2;
    }
    Err(Error::NonConvergence {
        what: format!("root localization found fewer than {order} sign changes"),
        index: 0,
    })
}
