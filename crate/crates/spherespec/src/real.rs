//! Extended-precision real arithmetic.
//!
//! Thin wrapper around `astro_float::BigFloat` that carries the working precision with each
//! value, rounds to even everywhere, and keeps the per-thread constants cache out of sight.
//! Every operation is correctly rounded at the precision of its widest operand, so the
//! module-level tolerances of the form `2^-(precision-k)` hold with room to spare.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use astro_float::{BigFloat, Consts, Radix, RoundingMode, Sign};
use num_bigint::{BigInt, BigUint, Sign as IntSign};
use num_rational::BigRational;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default working precision in bits. Eigenvalues like n^(-2n-1) underflow binary64 long
/// before the scales the series engine visits; 512 bits keeps every report comfortably exact.
pub const DEFAULT_PRECISION: usize = 512;

/// Smallest accepted working precision.
pub const MIN_PRECISION: usize = 64;

const RM: RoundingMode = RoundingMode::ToEven;

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("constants cache"));
}

fn with_cc<T>(f: impl FnOnce(&mut Consts) -> T) -> T {
    CONSTS.with(|c| f(&mut c.borrow_mut()))
}

/// An immutable extended-precision real number.
#[derive(Clone, Debug)]
pub struct Real {
    v: BigFloat,
    prec: usize,
}

impl Real {
    fn wrap(v: BigFloat, prec: usize) -> Self {
        debug_assert!(!v.is_nan(), "extended-precision op produced NaN");
        Real { v, prec }
    }

    pub fn zero(prec: usize) -> Self {
        Real::wrap(BigFloat::from_u64(0, prec), prec)
    }

    pub fn one(prec: usize) -> Self {
        Real::wrap(BigFloat::from_u64(1, prec), prec)
    }

    pub fn from_u64(u: u64, prec: usize) -> Self {
        Real::wrap(BigFloat::from_u64(u, prec), prec)
    }

    pub fn from_i64(i: i64, prec: usize) -> Self {
        Real::wrap(BigFloat::from_i64(i, prec), prec)
    }

    pub fn from_f64(f: f64, prec: usize) -> Self {
        assert!(f.is_finite(), "cannot build Real from {f}");
        Real::wrap(BigFloat::from_f64(f, prec), prec)
    }

    /// Exact conversion of a big unsigned integer (precision is raised if needed).
    pub fn from_biguint(u: &BigUint, prec: usize) -> Self {
        let p = prec.max(u.bits() as usize + 1).max(MIN_PRECISION);
        let mut acc = BigFloat::from_u64(0, p);
        // Horner over the 64-bit digits, most significant first; every step is exact at p bits.
        let shift = BigFloat::from_u64(1 << 32, p).mul(&BigFloat::from_u64(1 << 32, p), p, RM);
        for d in u.to_u64_digits().iter().rev() {
            acc = acc
                .mul(&shift, p, RM)
                .add(&BigFloat::from_u64(*d, p), p, RM);
        }
        let mut r = Real::wrap(acc, p);
        if p > prec {
            // The caller's precision stays authoritative for follow-up arithmetic.
            r = r.round_to(prec.max(MIN_PRECISION));
        }
        r
    }

    pub fn from_bigint(i: &BigInt, prec: usize) -> Self {
        let mag = Real::from_biguint(i.magnitude(), prec);
        match i.sign() {
            IntSign::Minus => mag.neg(),
            _ => mag,
        }
    }

    /// Correctly rounded value of an exact rational.
    pub fn from_ratio(q: &BigRational, prec: usize) -> Self {
        let num = Real::from_bigint(q.numer(), prec + 64);
        let den = Real::from_bigint(q.denom(), prec + 64);
        Real::wrap(num.v.div(&den.v, prec, RM), prec)
    }

    /// 2^e, exact.
    pub fn pow2(e: i32, prec: usize) -> Self {
        let mut v = BigFloat::from_u64(1, prec);
        let exp = v.exponent().expect("finite");
        v.set_exponent(exp + e);
        Real::wrap(v, prec)
    }

    pub fn pi(prec: usize) -> Self {
        Real::wrap(with_cc(|cc| cc.pi(prec, RM)), prec)
    }

    /// Parses a decimal literal at the given precision.
    pub fn parse_decimal(s: &str, prec: usize) -> Result<Self> {
        validate_decimal(s)?;
        let v = with_cc(|cc| BigFloat::parse(s, Radix::Dec, prec, RM, cc));
        if v.is_nan() || v.is_inf() {
            return Err(Error::Parse {
                pos: 0,
                msg: format!("`{s}` is not a finite decimal"),
            });
        }
        Ok(Real::wrap(v, prec))
    }

    pub fn prec(&self) -> usize {
        self.prec
    }

    fn join(&self, rhs: &Real) -> usize {
        self.prec.max(rhs.prec)
    }

    pub fn add(&self, rhs: &Real) -> Real {
        let p = self.join(rhs);
        Real::wrap(self.v.add(&rhs.v, p, RM), p)
    }

    pub fn sub(&self, rhs: &Real) -> Real {
        let p = self.join(rhs);
        Real::wrap(self.v.sub(&rhs.v, p, RM), p)
    }

    pub fn mul(&self, rhs: &Real) -> Real {
        let p = self.join(rhs);
        Real::wrap(self.v.mul(&rhs.v, p, RM), p)
    }

    pub fn div(&self, rhs: &Real) -> Real {
        assert!(!rhs.is_zero(), "division by zero");
        let p = self.join(rhs);
        Real::wrap(self.v.div(&rhs.v, p, RM), p)
    }

    pub fn neg(&self) -> Real {
        Real::wrap(self.v.neg(), self.prec)
    }

    pub fn abs(&self) -> Real {
        let mut v = self.v.clone();
        v.set_sign(Sign::Pos);
        Real::wrap(v, self.prec)
    }

    pub fn recip(&self) -> Real {
        assert!(!self.is_zero(), "reciprocal of zero");
        Real::wrap(self.v.reciprocal(self.prec, RM), self.prec)
    }

    pub fn sqrt(&self) -> Real {
        assert!(!self.is_negative(), "sqrt of negative value");
        Real::wrap(self.v.sqrt(self.prec, RM), self.prec)
    }

    pub fn ln(&self) -> Real {
        assert!(self.is_positive(), "ln of non-positive value");
        Real::wrap(with_cc(|cc| self.v.ln(self.prec, RM, cc)), self.prec)
    }

    pub fn exp(&self) -> Real {
        Real::wrap(with_cc(|cc| self.v.exp(self.prec, RM, cc)), self.prec)
    }

    pub fn powi(&self, n: u64) -> Real {
        Real::wrap(self.v.powi(n as usize, self.prec, RM), self.prec)
    }

    /// Big-integer power, kept in the log domain when the exponent is large.
    pub fn pow_uint(&self, n: &BigUint) -> Real {
        if let Some(small) = to_u64(n) {
            return self.powi(small);
        }
        assert!(self.is_positive(), "pow_uint of non-positive base");
        let e = Real::from_biguint(n, self.prec);
        self.ln().mul(&e).exp()
    }

    pub fn square(&self) -> Real {
        self.mul(self)
    }

    pub fn round_to(&self, prec: usize) -> Real {
        let mut v = self.v.clone();
        v.set_precision(prec, RM).expect("set_precision");
        Real::wrap(v, prec)
    }

    pub fn is_zero(&self) -> bool {
        self.v.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.v.is_negative() && !self.v.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.v.is_positive() && !self.v.is_zero()
    }

    #[allow(clippy::should_implement_trait)] // total order over finite values only
    pub fn cmp(&self, rhs: &Real) -> Ordering {
        let c = self.v.cmp(&rhs.v).expect("comparison of finite values");
        c.cmp(&0)
    }

    pub fn abs_cmp(&self, rhs: &Real) -> Ordering {
        let c = self.v.abs_cmp(&rhs.v).expect("comparison of finite values");
        c.cmp(&0)
    }

    pub fn max(&self, rhs: &Real) -> Real {
        if self.cmp(rhs) == Ordering::Less {
            rhs.clone()
        } else {
            self.clone()
        }
    }

    pub fn min(&self, rhs: &Real) -> Real {
        if self.cmp(rhs) == Ordering::Greater {
            rhs.clone()
        } else {
            self.clone()
        }
    }

    /// Full-precision decimal string; parsing it back at the same precision recovers the value.
    ///
    /// Emits ceil(prec*log10(2)) + 2 significant digits, correctly rounded (half to even) via
    /// exact integer arithmetic, which is enough for binary -> decimal -> binary identity.
    pub fn to_decimal_string(&self) -> String {
        if self.v.is_zero() {
            return "0".to_string();
        }
        let (words, n_bits, sign, e, _) = self.v.as_raw_parts().expect("finite value");
        let mut mant = BigUint::ZERO;
        for w in words.iter().rev() {
            mant = (mant << 64) | BigUint::from(*w);
        }
        // value = mant * 2^bin_exp
        let bin_exp = e as i64 - (words.len() as i64) * 64;
        let digits = (n_bits as f64 * std::f64::consts::LOG10_2).ceil() as i64 + 2;

        // first guess for floor(log10 |value|), corrected exactly below
        let top_bits = mant.bits() as i64;
        let approx_log10 = (top_bits + bin_exp) as f64 * std::f64::consts::LOG10_2 - 0.1550; // log10(2^b) vs leading word slack
        let mut g = approx_log10.floor() as i64;

        let ten = BigUint::from(10u32);
        let (q, final_g) = loop {
            let k = digits - 1 - g;
            let mut num = mant.clone();
            let mut den = BigUint::from(1u32);
            if bin_exp >= 0 {
                num <<= bin_exp as u64;
            } else {
                den <<= (-bin_exp) as u64;
            }
            if k >= 0 {
                num *= ten.pow(k as u32);
            } else {
                den *= ten.pow((-k) as u32);
            }
            let mut q = &num / &den;
            let r = &num % &den;
            let twice = &r << 1;
            if twice > den || (twice == den && (&q % 2u32) == BigUint::from(1u32)) {
                q += 1u32;
            }
            let lo = ten.pow((digits - 1) as u32);
            let hi = ten.pow(digits as u32);
            if q >= hi {
                g += 1;
            } else if q < lo {
                g -= 1;
            } else {
                break (q, g);
            }
        };

        let digits_str = q.to_string();
        let mut out = String::with_capacity(digits_str.len() + 12);
        if sign == Sign::Neg {
            out.push('-');
        }
        out.push_str(&digits_str[..1]);
        out.push('.');
        out.push_str(&digits_str[1..]);
        out.push('e');
        if final_g >= 0 {
            out.push('+');
        }
        out.push_str(&final_g.to_string());
        out
    }

    /// Nearest binary64 value (saturating on exponent overflow).
    pub fn to_f64(&self) -> f64 {
        if self.v.is_zero() {
            return 0.0;
        }
        let (words, _len, sign, exp, _) = self.v.as_raw_parts().expect("finite value");
        let hi = *words.last().expect("non-empty mantissa") as f64;
        let lo = if words.len() > 1 {
            words[words.len() - 2] as f64
        } else {
            0.0
        };
        // mantissa interpreted as a binary fraction in [0.5, 1)
        let frac = hi / 2f64.powi(64) + lo / 2f64.powi(128);
        let mag = if exp > 1100 {
            f64::INFINITY
        } else if exp < -1100 {
            0.0
        } else {
            frac * 2f64.powi(exp)
        };
        match sign {
            Sign::Neg => -mag,
            Sign::Pos => mag,
        }
    }
}

fn to_u64(n: &BigUint) -> Option<u64> {
    let d = n.to_u64_digits();
    match d.len() {
        0 => Some(0),
        1 => Some(d[0]),
        _ => None,
    }
}

impl PartialEq for Real {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl PartialOrd for Real {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.v)
    }
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_decimal_string())
    }
}

/// A validated decimal literal used for kernel parameters.
///
/// Parameters live as text so a run at 512 bits sees the written constant (e.g. `0.9`) rounded
/// once at 512 bits, not a binary64 approximation smuggled in early.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Decimal(String);

impl Decimal {
    pub fn new(s: &str) -> Result<Self> {
        validate_decimal(s)?;
        Ok(Decimal(s.to_string()))
    }

    pub fn from_f64(f: f64) -> Result<Self> {
        if !f.is_finite() {
            return Err(Error::domain(format!("{f} is not a finite parameter")));
        }
        Ok(Decimal(format!("{f}")))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn to_real(&self, prec: usize) -> Real {
        Real::parse_decimal(&self.0, prec).expect("validated literal")
    }
}

impl FromStr for Decimal {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Decimal::new(s)
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn validate_decimal(s: &str) -> Result<()> {
    let bytes = s.as_bytes();
    let fail = |pos: usize, msg: &str| -> Result<()> {
        Err(Error::Parse {
            pos,
            msg: msg.to_string(),
        })
    };
    if bytes.is_empty() {
        return fail(0, "empty decimal literal");
    }
    let mut i = 0;
    if bytes[i] == b'+' || bytes[i] == b'-' {
        i += 1;
    }
    let int_digits = count_digits(bytes, &mut i);
    let mut frac_digits = 0;
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        frac_digits = count_digits(bytes, &mut i);
    }
    if int_digits == 0 && frac_digits == 0 {
        return fail(i, "expected digits");
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        i += 1;
        if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
            i += 1;
        }
        if count_digits(bytes, &mut i) == 0 {
            return fail(i, "expected exponent digits");
        }
    }
    if i != bytes.len() {
        return fail(i, "trailing characters in decimal literal");
    }
    Ok(())
}

fn count_digits(bytes: &[u8], i: &mut usize) -> usize {
    let start = *i;
    while *i < bytes.len() && bytes[*i].is_ascii_digit() {
        *i += 1;
    }
    *i - start
}
