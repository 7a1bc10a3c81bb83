//! Exact rational parameters (`"1/12"`) and the handful of real-valued helpers
//! the loop bounds need.

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{One, ToPrimitive, Zero};

/// Parses `"a/b"` or a plain integer into a reduced positive-denominator ratio.
pub fn parse_fraction(s: &str) -> Result<Rational64, String> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (s, "1"),
    };
    let num: i64 = num.parse().map_err(|_| format!("bad numerator in {s:?}"))?;
    let den: i64 = den.parse().map_err(|_| format!("bad denominator in {s:?}"))?;
    if den == 0 {
        return Err(format!("zero denominator in {s:?}"));
    }
    if num.checked_neg().is_none() || den.checked_neg().is_none() {
        return Err(format!("fraction {s:?} out of range"));
    }
    Ok(Rational64::new(num, den))
}

pub fn format_fraction(r: &Rational64) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn big(r: &Rational64) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

pub fn big_int(v: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// `base^k` exactly.
pub fn pow(base: &BigRational, k: u32) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..k {
        acc *= base;
    }
    acc
}

/// Smallest `k ≥ 0` with `base^k ≥ x`, for `base > 1`; exact.
pub fn ceil_log(base: &BigRational, x: &BigRational) -> u32 {
    assert!(*base > BigRational::one());
    let mut k = 0;
    let mut acc = BigRational::one();
    while acc < *x {
        acc *= base;
        k += 1;
    }
    k
}

pub fn ceil_to_u64(r: &BigRational) -> u64 {
    r.ceil().to_integer().to_u64().expect("nonnegative ceiling")
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
}

pub fn is_positive(r: &Rational64) -> bool {
    *r > Rational64::zero()
}

/// `⌈n^(1/k)⌉` computed on integers so it never suffers from float rounding.
pub fn ceil_root(n: u64, k: u32) -> u64 {
    let mut r = (n as f64).powf(1.0 / k as f64).floor() as u64;
    while r.checked_pow(k).is_some_and(|p| p > n) {
        r -= 1;
    }
    while r.checked_pow(k).is_some_and(|p| p < n) {
        r += 1;
    }
    r
}

pub fn ceil_log2(n: u64) -> u64 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros() as u64
    }
}

/// `⌈sqrt(n)⌉` on integers.
pub fn ceil_sqrt(n: u64) -> u64 {
    ceil_root(n, 2)
}
