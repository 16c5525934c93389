//! Kernel catalog and condensed Legendre expansions.
//!
//! A zonal kernel K(x, y) = f(x.y) on S^m is represented by its condensed expansion
//! K = sum_n c_n P_n^m(x.y); the integral operator's level-n eigenvalue is then c_n / d_n^m
//! with multiplicity d_n^m. Catalog families carry closed-form coefficients; anything given
//! pointwise is projected with a Gauss-Jacobi rule; dot-product power series are converted by
//! exact polynomial projection.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::One;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::harmonics::{self, SphereDim};
use crate::real::{Decimal, Real};

type ZonalFn = dyn Fn(&Real, usize) -> Real + Send + Sync;

/// A pointwise zonal profile f on [-1, 1], evaluated at a caller-chosen precision.
#[derive(Clone)]
pub struct ZonalFunction {
    name: String,
    f: Arc<ZonalFn>,
}

impl ZonalFunction {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&Real, usize) -> Real + Send + Sync + 'static,
    ) -> Self {
        ZonalFunction {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, t: &Real, prec: usize) -> Real {
        (self.f)(t, prec)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Piecewise-linear interpolant of sorted (t, f(t)) samples covering [-1, 1].
    pub fn from_table(mut samples: Vec<(Real, Real)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::domain("zonal table needs at least two samples"));
        }
        samples.sort_by(|a, b| a.0.cmp(&b.0));
        for pair in samples.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::domain("zonal table has duplicate abscissae"));
            }
        }
        let prec0 = samples[0].0.prec();
        let one = Real::one(prec0);
        if samples[0].0.cmp(&one.neg()) == std::cmp::Ordering::Greater
            || samples[samples.len() - 1].0.cmp(&one) == std::cmp::Ordering::Less
        {
            return Err(Error::domain("zonal table must cover [-1, 1]"));
        }
        Ok(ZonalFunction::new("zonal-table", move |t, prec| {
            let pos = samples.partition_point(|(x, _)| x.cmp(t) == std::cmp::Ordering::Less);
            let hi = pos.clamp(1, samples.len() - 1);
            let (x0, y0) = &samples[hi - 1];
            let (x1, y1) = &samples[hi];
            let s = t.sub(x0).div(&x1.sub(x0));
            y0.add(&s.mul(&y1.sub(y0))).round_to(prec)
        }))
    }
}

impl fmt::Debug for ZonalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ZonalFunction")
            .field("name", &self.name)
            .finish()
    }
}

/// Symbolic description of a zonal kernel.
#[derive(Clone, Debug)]
pub enum KernelSpec {
    /// exp(2 t / r): the dot-product form of e^{2/r} exp(-|x-y|^2 / r), b_n = 2^n/(n! r^n).
    Gaussian { r: Decimal },
    /// sigma^2 (1-delta)^{m-1} (1 + delta^2 - 2 delta t)^{-(m-1)/2}.
    Multiquadric { sigma: Decimal, delta: Decimal },
    /// Spectral model family: c_n = sigma^2 / (1 + beta exp((n/alpha)^tau)).
    Moller {
        alpha: Decimal,
        beta: Decimal,
        tau: Decimal,
        sigma: Decimal,
    },
    /// c_0 = 1, c_n = d_n^m / n^{2n+m-1}: the sharpness witness for the decay rate.
    Optimality,
    /// sum_n b_n t^n with b_n > 0.
    DotProduct { coeffs: Vec<Decimal> },
    /// Condensed coefficients given directly.
    Explicit { coeffs: Vec<Decimal> },
    /// A pointwise zonal profile.
    Zonal(ZonalFunction),
    /// A pointwise profile tabulated in a file of (t, f(t)) rows.
    ZonalTable { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "closed-form")]
    ClosedForm,
    #[serde(rename = "projected")]
    Projected,
    #[serde(rename = "converted")]
    Converted,
}

/// Condensed coefficients c_0..c_N of K = sum c_n P_n^m, plus precision metadata.
///
/// Laplace-Beltrami derivative/integral powers are carried as a pending exponent `lb_power`
/// and applied on read, so a derivative and its inverse cancel exactly in coefficient space
/// (see the spectra module).
#[derive(Clone, Debug)]
pub struct LegendreExpansion {
    m: SphereDim,
    base: Vec<Real>,
    precision: usize,
    provenance: Provenance,
    lb_power: i64,
}

impl LegendreExpansion {
    pub fn new(
        m: SphereDim,
        coeffs: Vec<Real>,
        precision: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::domain(
                "expansion needs at least the level-0 coefficient",
            ));
        }
        let base = coeffs.into_iter().map(|c| c.round_to(precision)).collect();
        Ok(LegendreExpansion {
            m,
            base,
            precision,
            provenance,
            lb_power: 0,
        })
    }

    pub fn m(&self) -> SphereDim {
        self.m
    }

    pub fn precision(&self) -> usize {
        self.precision
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Truncation level N (the expansion holds levels 0..=N).
    pub fn truncation_level(&self) -> usize {
        self.base.len() - 1
    }

    pub fn lb_power(&self) -> i64 {
        self.lb_power
    }

    pub(crate) fn with_lb_power(mut self, lb_power: i64) -> Self {
        self.lb_power = lb_power;
        self
    }

    pub(crate) fn base_zeroed_level0(mut self) -> Self {
        self.base[0] = Real::zero(self.precision);
        self
    }

    /// Coefficient at level n with any pending Laplace-Beltrami multiplier applied.
    pub fn coeff(&self, n: usize) -> Real {
        let c = &self.base[n];
        if self.lb_power == 0 || n == 0 {
            return c.clone();
        }
        let m = self.m.get() as u64;
        let n64 = n as u64;
        let q = self.lb_power.unsigned_abs() as u32;
        let num = BigUint::from(n64 * (n64 + m - 1)).pow(q);
        let den = BigUint::from(m).pow(q);
        let (num, den) = if self.lb_power > 0 {
            (num, den)
        } else {
            (den, num)
        };
        let p = self.precision;
        c.mul(&Real::from_biguint(&num, p + 64))
            .div(&Real::from_biguint(&den, p + 64))
            .round_to(p)
    }

    /// All coefficients, materialized.
    pub fn coeffs(&self) -> Vec<Real> {
        (0..self.base.len()).map(|n| self.coeff(n)).collect()
    }

    /// Copy truncated to level `n_max` (no-op if already shorter).
    pub fn truncate(&self, n_max: usize) -> LegendreExpansion {
        let mut out = self.clone();
        out.base.truncate(n_max + 1);
        out
    }

    /// Pointwise reconstruction sum_{n<=N} c_n P_n^m(t).
    pub fn reconstruct(&self, t: &Real, prec: usize) -> Result<Real> {
        let wp = prec + 32;
        let one = Real::one(wp);
        if t.abs().cmp(&one) == std::cmp::Ordering::Greater {
            return Err(Error::domain("reconstruction argument |t| <= 1 required"));
        }
        let polys = harmonics::legendre_all(self.truncation_level() as u64, self.m, t, wp);
        let mut acc = Real::zero(wp);
        for (n, p) in polys.iter().enumerate() {
            acc = acc.add(&self.coeff(n).mul(p));
        }
        Ok(acc.round_to(prec))
    }

    /// sum_{n >= n_from} |c_n| over the stored levels: the reported reconstruction tail bound.
    pub fn tail_abs_sum(&self, n_from: usize) -> Real {
        let mut acc = Real::zero(self.precision);
        for n in n_from..=self.truncation_level() {
            acc = acc.add(&self.coeff(n).abs());
        }
        acc
    }
}

impl Serialize for LegendreExpansion {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire<'a> {
            m: u32,
            coeffs: Vec<String>,
            precision_bits: usize,
            provenance: &'a Provenance,
        }
        Wire {
            m: self.m.get(),
            coeffs: (0..self.base.len())
                .map(|n| self.coeff(n).to_decimal_string())
                .collect(),
            precision_bits: self.precision,
            provenance: &self.provenance,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LegendreExpansion {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            m: u32,
            coeffs: Vec<String>,
            precision_bits: usize,
            provenance: Provenance,
        }
        let w = Wire::deserialize(deserializer)?;
        let m = SphereDim::new(w.m).map_err(D::Error::custom)?;
        let coeffs = w
            .coeffs
            .iter()
            .map(|s| Real::parse_decimal(s, w.precision_bits))
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        LegendreExpansion::new(m, coeffs, w.precision_bits, w.provenance).map_err(D::Error::custom)
    }
}

fn positive(name: &str, d: &Decimal) -> Result<Real> {
    let v = d.to_real(128);
    if !v.is_positive() {
        return Err(Error::param(
            name,
            format!("must be > 0, got {}", d.as_str()),
        ));
    }
    Ok(v)
}

impl KernelSpec {
    /// Parameter-range validation with named diagnostics.
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Gaussian { r } => {
                positive("r", r)?;
            }
            KernelSpec::Multiquadric { sigma, delta } => {
                positive("sigma", sigma)?;
                let d = positive("delta", delta)?;
                if d.cmp(&Real::one(128)) != std::cmp::Ordering::Less {
                    return Err(Error::param(
                        "delta",
                        format!("must be in (0,1), got {}", delta.as_str()),
                    ));
                }
            }
            KernelSpec::Moller {
                alpha,
                beta,
                tau,
                sigma,
            } => {
                positive("alpha", alpha)?;
                positive("beta", beta)?;
                positive("tau", tau)?;
                positive("sigma", sigma)?;
            }
            KernelSpec::Optimality | KernelSpec::Zonal(_) | KernelSpec::ZonalTable { .. } => {}
            KernelSpec::DotProduct { coeffs } => {
                if coeffs.is_empty() {
                    return Err(Error::param("b", "dot-product kernel needs coefficients"));
                }
                for (n, b) in coeffs.iter().enumerate() {
                    let v = b.to_real(128);
                    if !v.is_positive() {
                        return Err(Error::param(
                            format!("b_{n}"),
                            format!("dot-product coefficients must be > 0, got {}", b.as_str()),
                        ));
                    }
                }
            }
            KernelSpec::Explicit { coeffs } => {
                if coeffs.is_empty() {
                    return Err(Error::param("c", "explicit kernel needs coefficients"));
                }
            }
        }
        Ok(())
    }
}

/// Closed-form condensed coefficients for the catalog families.
pub fn catalog_coefficients(
    spec: &KernelSpec,
    m: SphereDim,
    levels: usize,
    prec: usize,
) -> Result<LegendreExpansion> {
    spec.validate()?;
    let wp = prec + 32;
    let coeffs: Vec<Real> = match spec {
        KernelSpec::Multiquadric { sigma, delta } => {
            let sigma = sigma.to_real(wp);
            let delta = delta.to_real(wp);
            let md = m.get() as u64;
            let scale = sigma.square().mul(&Real::one(wp).sub(&delta).powi(md - 1));
            let mut delta_pow = Real::one(wp);
            (0..=levels as u64)
                .map(|n| {
                    let b = binomial(md + n - 2, n);
                    let c = scale.mul(&Real::from_biguint(&b, wp)).mul(&delta_pow);
                    delta_pow = delta_pow.mul(&delta);
                    c
                })
                .collect()
        }
        KernelSpec::Moller {
            alpha,
            beta,
            tau,
            sigma,
        } => {
            let alpha = alpha.to_real(wp);
            let beta = beta.to_real(wp);
            let tau = tau.to_real(wp);
            let s2 = sigma.to_real(wp).square();
            (0..=levels as u64)
                .map(|n| {
                    let gate = if n == 0 {
                        Real::one(wp)
                    } else {
                        // exp((n/alpha)^tau)
                        let base = Real::from_u64(n, wp).div(&alpha);
                        base.ln().mul(&tau).exp().exp()
                    };
                    s2.div(&Real::one(wp).add(&beta.mul(&gate)))
                })
                .collect()
        }
        KernelSpec::Optimality => {
            let md = m.get() as u64;
            let dims = harmonics::dim_harmonic_all(levels as u64, m);
            (0..=levels as u64)
                .map(|n| {
                    if n == 0 {
                        Real::one(wp)
                    } else {
                        let den = BigUint::from(n).pow((2 * n + md - 1) as u32);
                        Real::from_biguint(&dims[n as usize], wp).div(&Real::from_biguint(&den, wp))
                    }
                })
                .collect()
        }
        KernelSpec::Explicit { coeffs } => {
            let take = coeffs.len().min(levels + 1);
            coeffs[..take].iter().map(|d| d.to_real(prec)).collect()
        }
        other => {
            return Err(Error::domain(format!(
                "no closed-form coefficients for {other:?}; use project_zonal or power_to_condensed"
            )))
        }
    };
    LegendreExpansion::new(m, coeffs, prec, Provenance::ClosedForm)
}

fn binomial(a: u64, b: u64) -> BigUint {
    if b > a {
        return BigUint::ZERO;
    }
    let b = b.min(a - b);
    let mut num = BigUint::one();
    for i in 0..b {
        num *= a - i;
    }
    num / harmonics::factorial(b)
}

/// Funk-Hecke projection of a pointwise zonal profile:
/// c_n = d_n^m (omega_{m-1}/omega_m) sum_i w_i f(t_i) P_n^m(t_i), summed in node order.
pub fn project_zonal(
    f: &ZonalFunction,
    m: SphereDim,
    levels: usize,
    prec: usize,
    rule_order: usize,
) -> Result<LegendreExpansion> {
    if rule_order <= levels {
        return Err(Error::Aliasing {
            order: rule_order,
            level: levels,
        });
    }
    let wp = prec + 32;
    // node error is amplified by P_n' ~ n^2/2 near the endpoints; 64 guard bits keep that
    // noise below the coefficient rounding floor even for deep tail coefficients
    let rule = harmonics::quadrature_rule(m, rule_order, prec + 64)?;
    let mut sums = vec![Real::zero(wp); levels + 1];
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let fx = f.eval(x, wp).mul(w);
        let polys = harmonics::legendre_all(levels as u64, m, x, wp);
        for (acc, p) in sums.iter_mut().zip(&polys) {
            *acc = acc.add(&fx.mul(p));
        }
    }
    let ratio = m.projection_ratio(wp);
    let dims = harmonics::dim_harmonic_all(levels as u64, m);
    let coeffs: Vec<Real> = sums
        .into_iter()
        .enumerate()
        .map(|(n, s)| s.mul(&ratio).mul(&Real::from_biguint(&dims[n], wp)))
        .collect();
    LegendreExpansion::new(m, coeffs, prec, Provenance::Projected)
}

/// Condensed coefficients of the polynomial sum b_k t^k: an exact projection with a rule of
/// order len(b), which integrates every product t^k P_n^m (degree <= 2 len(b) - 2) exactly.
pub fn power_to_condensed(b: &[Real], m: SphereDim, prec: usize) -> Result<LegendreExpansion> {
    if b.is_empty() {
        return Err(Error::domain("power series needs at least one coefficient"));
    }
    let levels = b.len() - 1;
    let coeffs: Vec<Real> = b.iter().map(|x| x.round_to(prec + 32)).collect();
    let f = ZonalFunction::new("power-series", move |t, prec| {
        let mut acc = Real::zero(prec);
        for c in coeffs.iter().rev() {
            acc = acc.mul(t).add(c);
        }
        acc.round_to(prec)
    });
    let mut e = project_zonal(&f, m, levels, prec, levels + 1)?;
    e.provenance = Provenance::Converted;
    Ok(e)
}

/// b_n = 2^n / (n! r^n) for n = 0..=n_max.
pub fn gaussian_power_coefficients(r: &Decimal, n_max: usize, prec: usize) -> Result<Vec<Real>> {
    let wp = prec + 32;
    let r = positive("r", r)?.round_to(wp);
    let two = Real::from_u64(2, wp);
    let mut out = Vec::with_capacity(n_max + 1);
    let mut b = Real::one(wp);
    out.push(b.clone());
    for n in 1..=n_max as u64 {
        b = b.mul(&two).div(&Real::from_u64(n, wp).mul(&r));
        out.push(b.clone());
    }
    Ok(out)
}

/// Result of the dot-product ratio test lim b_{n+1}/b_n.
#[derive(Clone, Debug, Serialize)]
pub struct RatioTest {
    pub last: Real,
    pub extrapolated: Real,
    pub limit_below_one: bool,
}

/// Last-ratio and first-order Richardson estimate of lim b_{n+1}/b_n; flags whether the
/// extrapolated limit is strictly below 1.
pub fn ratio_test(spec: &KernelSpec, n_max: usize) -> Result<RatioTest> {
    if n_max < 2 {
        return Err(Error::param("n_max", "ratio test needs n_max >= 2"));
    }
    let prec = 192;
    let b: Vec<Real> = match spec {
        KernelSpec::Gaussian { r } => gaussian_power_coefficients(r, n_max, prec)?,
        KernelSpec::DotProduct { coeffs } => {
            spec.validate()?;
            if coeffs.len() < 3 {
                return Err(Error::param(
                    "b",
                    "ratio test needs at least three coefficients",
                ));
            }
            coeffs
                .iter()
                .take(n_max + 1)
                .map(|d| d.to_real(prec))
                .collect()
        }
        other => {
            return Err(Error::domain(format!(
                "ratio test applies to dot-product kernels, not {other:?}"
            )))
        }
    };
    for (n, v) in b.iter().enumerate() {
        if !v.is_positive() {
            return Err(Error::param(format!("b_{n}"), "must be > 0"));
        }
    }
    let q: Vec<Real> = b.windows(2).map(|w| w[1].div(&w[0])).collect();
    let last = q[q.len() - 1].clone();
    let prev = q[q.len() - 2].clone();
    let k = Real::from_u64(q.len() as u64 - 1, prec);
    let extrapolated = last.add(&k.mul(&last.sub(&prev)));
    let limit_below_one = extrapolated.cmp(&Real::one(prec)) == std::cmp::Ordering::Less;
    Ok(RatioTest {
        last,
        extrapolated,
        limit_below_one,
    })
}

/// Outcome of the coefficient-nonnegativity (Schoenberg) check.
#[derive(Clone, Debug, Serialize)]
pub struct SchoenbergReport {
    pub positive_definite: bool,
    pub first_violation: Option<usize>,
    pub tolerance: Real,
}

/// Positive definiteness on the sphere <=> all condensed coefficients nonnegative, up to
/// tolerance 2^-(prec-20) * max |c_n| for projected coefficients.
pub fn schoenberg_check(e: &LegendreExpansion) -> SchoenbergReport {
    let prec = e.precision();
    let coeffs = e.coeffs();
    let mut max_abs = Real::zero(prec);
    for c in &coeffs {
        max_abs = max_abs.max(&c.abs());
    }
    let tolerance = Real::pow2(-(prec as i32 - 20), prec).mul(&max_abs);
    let neg_tol = tolerance.neg();
    let first_violation = coeffs
        .iter()
        .position(|c| c.cmp(&neg_tol) == std::cmp::Ordering::Less);
    SchoenbergReport {
        positive_definite: first_violation.is_none(),
        first_violation,
        tolerance,
    }
}

impl KernelSpec {
    /// Pointwise zonal profile for this kernel. Coefficient-defined families are reconstructed
    /// from `levels` condensed terms (their tails decay fast enough for every catalog family).
    pub fn pointwise(&self, m: SphereDim, levels: usize, prec: usize) -> Result<ZonalFunction> {
        self.validate()?;
        match self {
            KernelSpec::Gaussian { r } => {
                let r = r.clone();
                Ok(ZonalFunction::new("gaussian", move |t, prec| {
                    let r = r.to_real(prec);
                    t.mul(&Real::from_u64(2, prec)).div(&r).exp()
                }))
            }
            KernelSpec::Multiquadric { sigma, delta } => {
                let sigma = sigma.clone();
                let delta = delta.clone();
                let md = m.get() as u64;
                Ok(ZonalFunction::new("multiquadric", move |t, prec| {
                    let sigma = sigma.to_real(prec);
                    let delta = delta.to_real(prec);
                    let one = Real::one(prec);
                    let base = one
                        .add(&delta.square())
                        .sub(&Real::from_u64(2, prec).mul(&delta).mul(t));
                    // base^{(m-1)/2}
                    let half_pow = if md % 2 == 1 {
                        base.powi((md - 1) / 2)
                    } else {
                        base.powi((md - 2) / 2).mul(&base.sqrt())
                    };
                    sigma
                        .square()
                        .mul(&one.sub(&delta).powi(md - 1))
                        .div(&half_pow)
                }))
            }
            KernelSpec::DotProduct { coeffs } => {
                let b: Vec<Decimal> = coeffs.clone();
                Ok(ZonalFunction::new("dot-product", move |t, prec| {
                    let mut acc = Real::zero(prec);
                    for c in b.iter().rev() {
                        acc = acc.mul(t).add(&c.to_real(prec));
                    }
                    acc
                }))
            }
            KernelSpec::Zonal(f) => Ok(f.clone()),
            KernelSpec::ZonalTable { path } => load_zonal_table(path, prec),
            KernelSpec::Optimality | KernelSpec::Moller { .. } | KernelSpec::Explicit { .. } => {
                let e = catalog_coefficients(self, m, levels, prec)?;
                Ok(ZonalFunction::new("reconstructed", move |t, prec| {
                    e.reconstruct(t, prec).expect("|t| <= 1")
                }))
            }
        }
    }
}

impl KernelSpec {
    /// Binary64 profile for the Nystrom oracle. Coefficient families are reconstructed from
    /// `levels` condensed terms; sub-1e-300 coefficients flush to zero harmlessly there.
    pub fn pointwise_f64(
        &self,
        m: SphereDim,
        levels: usize,
    ) -> Result<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
        self.validate()?;
        match self {
            KernelSpec::Gaussian { r } => {
                let r = r.to_real(64).to_f64();
                Ok(Box::new(move |t| (2.0 * t / r).exp()))
            }
            KernelSpec::Multiquadric { sigma, delta } => {
                let sigma = sigma.to_real(64).to_f64();
                let delta = delta.to_real(64).to_f64();
                let md = m.get() as i32;
                Ok(Box::new(move |t| {
                    let base = 1.0 + delta * delta - 2.0 * delta * t;
                    sigma * sigma * (1.0 - delta).powi(md - 1) / base.powf((md - 1) as f64 / 2.0)
                }))
            }
            KernelSpec::DotProduct { coeffs } => {
                let b: Vec<f64> = coeffs.iter().map(|d| d.to_real(64).to_f64()).collect();
                Ok(Box::new(move |t| {
                    b.iter().rev().fold(0.0, |acc, c| acc * t + c)
                }))
            }
            KernelSpec::Zonal(f) => {
                let f = f.clone();
                Ok(Box::new(move |t| {
                    f.eval(&Real::from_f64(t, 96), 96).to_f64()
                }))
            }
            KernelSpec::ZonalTable { path } => {
                let f = load_zonal_table(path, 96)?;
                Ok(Box::new(move |t| {
                    f.eval(&Real::from_f64(t, 96), 96).to_f64()
                }))
            }
            KernelSpec::Optimality | KernelSpec::Moller { .. } | KernelSpec::Explicit { .. } => {
                let e = catalog_coefficients(self, m, levels, 128)?;
                let c: Vec<f64> = e.coeffs().iter().map(|x| x.to_f64()).collect();
                Ok(Box::new(move |t| {
                    let polys = harmonics::legendre_all_f64(c.len() - 1, m, t);
                    c.iter().zip(&polys).map(|(ci, p)| ci * p).sum()
                }))
            }
        }
    }
}

/// Reads (t, f(t)) rows - whitespace or comma separated - for `zonal-table:` kernels.
pub fn load_zonal_table(path: &std::path::Path, prec: usize) -> Result<ZonalFunction> {
    let text = std::fs::read_to_string(path)?;
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if parts.len() != 2 {
            return Err(Error::Parse {
                pos: lineno + 1,
                msg: format!("expected `t value`, got `{line}`"),
            });
        }
        let t = Real::parse_decimal(parts[0], prec)?;
        let v = Real::parse_decimal(parts[1], prec)?;
        samples.push((t, v));
    }
    ZonalFunction::from_table(samples)
}

/// One entry point for every family: closed forms for the catalog, exact conversion for power
/// series, projection for pointwise profiles.
///
/// ```
/// use spherespec::harmonics::SphereDim;
/// use spherespec::kernels::{expand, KernelSpec};
///
/// let m = SphereDim::new(2).unwrap();
/// let spec: KernelSpec = "multiquadric(sigma=1,delta=0.5)".parse().unwrap();
/// let e = expand(&spec, m, 8, 256, None).unwrap();
/// assert_eq!(e.coeff(0).to_decimal_string()[..3].to_string(), "5.0");
/// ```
pub fn expand(
    spec: &KernelSpec,
    m: SphereDim,
    levels: usize,
    prec: usize,
    rule_order: Option<usize>,
) -> Result<LegendreExpansion> {
    spec.validate()?;
    match spec {
        KernelSpec::Multiquadric { .. }
        | KernelSpec::Moller { .. }
        | KernelSpec::Optimality
        | KernelSpec::Explicit { .. } => catalog_coefficients(spec, m, levels, prec),
        KernelSpec::Gaussian { r } => {
            let count = gaussian_series_length(r, levels, prec)?;
            let b = gaussian_power_coefficients(r, count, prec)?;
            Ok(power_to_condensed(&b, m, prec)?.truncate(levels))
        }
        KernelSpec::DotProduct { coeffs } => {
            let b: Vec<Real> = coeffs.iter().map(|d| d.to_real(prec + 32)).collect();
            Ok(power_to_condensed(&b, m, prec)?.truncate(levels))
        }
        KernelSpec::Zonal(_) | KernelSpec::ZonalTable { .. } => {
            let order = rule_order.unwrap_or(2 * (levels + 1));
            let f = spec.pointwise(m, levels, prec)?;
            project_zonal(&f, m, levels, prec, order)
        }
    }
}

/// Length at which the truncated Gaussian power series carries the full working precision:
/// extend until b_K < 2^-(prec+64) * max b_n and the term ratio has fallen below 1/2.
fn gaussian_series_length(r: &Decimal, levels: usize, prec: usize) -> Result<usize> {
    let wp = prec + 32;
    let rv = positive("r", r)?.round_to(wp);
    let two = Real::from_u64(2, wp);
    let floor = Real::pow2(-(prec as i32 + 64), wp);
    let half = Real::from_f64(0.5, wp);
    let mut b = Real::one(wp);
    let mut max_b = b.clone();
    let mut k = 0usize;
    loop {
        k += 1;
        let ratio = two.div(&Real::from_u64(k as u64, wp).mul(&rv));
        b = b.mul(&ratio);
        max_b = max_b.max(&b);
        let small = b.div(&max_b).cmp(&floor) == std::cmp::Ordering::Less;
        if k > levels && small && ratio.cmp(&half) == std::cmp::Ordering::Less {
            return Ok(k);
        }
        if k > 100_000 {
            return Err(Error::NonConvergence {
                what: "gaussian power series did not reach the precision floor".into(),
                index: k,
            });
        }
    }
}

// ---------------------------------------------------------------------------
// Kernel grammar: name(key=value,...), positional lists for explicit/dotproduct,
// and zonal-table:path.
// ---------------------------------------------------------------------------

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_kernel(s)
    }
}

pub fn parse_kernel(s: &str) -> Result<KernelSpec> {
    let trimmed = s.trim();
    let off = s.len() - s.trim_start().len();
    if let Some(path) = trimmed.strip_prefix("zonal-table:") {
        if path.is_empty() {
            return Err(Error::Parse {
                pos: off + 12,
                msg: "zonal-table: needs a file path".into(),
            });
        }
        return Ok(KernelSpec::ZonalTable {
            path: PathBuf::from(path),
        });
    }
    let (name, args, args_pos) = match trimmed.find('(') {
        None => (trimmed, "", off + trimmed.len()),
        Some(i) => {
            if !trimmed.ends_with(')') {
                return Err(Error::Parse {
                    pos: off + trimmed.len(),
                    msg: "expected closing `)`".into(),
                });
            }
            (
                &trimmed[..i],
                &trimmed[i + 1..trimmed.len() - 1],
                off + i + 1,
            )
        }
    };
    match name.trim() {
        "optimality" => {
            expect_no_args(args, args_pos)?;
            Ok(KernelSpec::Optimality)
        }
        "gaussian" => {
            let kv = parse_kv(args, args_pos, &["r"])?;
            Ok(KernelSpec::Gaussian { r: kv[0].clone() })
        }
        "multiquadric" => {
            let kv = parse_kv(args, args_pos, &["sigma", "delta"])?;
            Ok(KernelSpec::Multiquadric {
                sigma: kv[0].clone(),
                delta: kv[1].clone(),
            })
        }
        "moller" => {
            let kv = parse_kv(args, args_pos, &["alpha", "beta", "tau", "sigma"])?;
            Ok(KernelSpec::Moller {
                alpha: kv[0].clone(),
                beta: kv[1].clone(),
                tau: kv[2].clone(),
                sigma: kv[3].clone(),
            })
        }
        "explicit" => Ok(KernelSpec::Explicit {
            coeffs: parse_list(args, args_pos)?,
        }),
        "dotproduct" => Ok(KernelSpec::DotProduct {
            coeffs: parse_list(args, args_pos)?,
        }),
        other => Err(Error::Parse {
            pos: off,
            msg: format!(
                "unknown kernel `{other}`; expected gaussian, multiquadric, moller, optimality, dotproduct, explicit or zonal-table:path"
            ),
        }),
    }
}

fn expect_no_args(args: &str, pos: usize) -> Result<()> {
    if args.trim().is_empty() {
        Ok(())
    } else {
        Err(Error::Parse {
            pos,
            msg: "this kernel takes no parameters".into(),
        })
    }
}

fn parse_kv(args: &str, pos: usize, keys: &[&str]) -> Result<Vec<Decimal>> {
    let mut out: Vec<Option<Decimal>> = vec![None; keys.len()];
    let mut cursor = pos;
    for piece in args.split(',') {
        let piece_start = cursor;
        cursor += piece.len() + 1;
        let piece = piece.trim();
        if piece.is_empty() {
            return Err(Error::Parse {
                pos: piece_start,
                msg: "empty parameter".into(),
            });
        }
        let (k, v) = piece.split_once('=').ok_or_else(|| Error::Parse {
            pos: piece_start,
            msg: format!("expected key=value, got `{piece}`"),
        })?;
        let k = k.trim();
        let idx = keys
            .iter()
            .position(|name| *name == k)
            .ok_or_else(|| Error::Parse {
                pos: piece_start,
                msg: format!("unknown parameter `{k}`; expected one of {keys:?}"),
            })?;
        if out[idx].is_some() {
            return Err(Error::Parse {
                pos: piece_start,
                msg: format!("duplicate parameter `{k}`"),
            });
        }
        out[idx] = Some(Decimal::new(v.trim()).map_err(|e| match e {
            Error::Parse { pos: p, msg } => Error::Parse {
                pos: piece_start + p,
                msg,
            },
            other => other,
        })?);
    }
    let mut vals = Vec::with_capacity(keys.len());
    for (slot, key) in out.into_iter().zip(keys) {
        vals.push(slot.ok_or_else(|| Error::Parse {
            pos,
            msg: format!("missing parameter `{key}`"),
        })?);
    }
    Ok(vals)
}

fn parse_list(args: &str, pos: usize) -> Result<Vec<Decimal>> {
    if args.trim().is_empty() {
        return Err(Error::Parse {
            pos,
            msg: "expected a comma-separated list of values".into(),
        });
    }
    let mut out = Vec::new();
    let mut cursor = pos;
    for piece in args.split(',') {
        let piece_start = cursor;
        cursor += piece.len() + 1;
        out.push(Decimal::new(piece.trim()).map_err(|e| match e {
            Error::Parse { pos: p, msg } => Error::Parse {
                pos: piece_start + p,
                msg,
            },
            other => other,
        })?);
    }
    Ok(out)
}
