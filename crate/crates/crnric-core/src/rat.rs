//! Exact rational scalars used throughout the library.
//!
//! Concentrations, fluxes and all reachability arithmetic are arbitrary
//! precision rationals; floating point appears only in the dynamics module.

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

pub type Rat = BigRational;

pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(num: i64) -> Rat {
    Rat::from(BigInt::from(num))
}

pub fn rat_zero() -> Rat {
    Rat::zero()
}

/// Parses `p`, `-p` or `p/q` with integer `p`, positive integer `q`.
pub fn parse_rat(text: &str) -> Result<Rat, String> {
    let text = text.trim();
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n.trim(), Some(d.trim())),
        None => (text, None),
    };
    let num: BigInt = num
        .parse()
        .map_err(|_| format!("invalid rational `{text}`"))?;
    let den: BigInt = match den {
        Some(d) => d.parse().map_err(|_| format!("invalid rational `{text}`"))?,
        None => BigInt::from(1),
    };
    if den.sign() != Sign::Plus {
        return Err(format!("denominator must be positive in `{text}`"));
    }
    Ok(Rat::new(num, den))
}

/// Prints `p/q`, omitting `/q` when the denominator is 1. Never floats.
pub fn format_rat(x: &Rat) -> String {
    if x.denom() == &BigInt::from(1) {
        format!("{}", x.numer())
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

pub fn rat_to_f64(x: &Rat) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Best rational approximation of `x` by continued-fraction convergents,
/// stopping once either the error drops below `max_err` or the denominator
/// exceeds `max_den`. Small denominators keep downstream LP solves fast.
pub fn rat_from_f64(x: f64, max_err: f64, max_den: u64) -> Rat {
    assert!(x.is_finite(), "cannot rationalize non-finite float");
    let neg = x < 0.0;
    let mut v = x.abs();
    // Convergents h_k / k_k of the continued fraction of |x|.
    let (mut h0, mut k0) = (BigInt::from(0), BigInt::from(1));
    let (mut h1, mut k1) = (BigInt::from(1), BigInt::from(0));
    let max_den = BigInt::from(max_den);
    for _ in 0..64 {
        let a = v.floor();
        if a > 1e18 {
            break;
        }
        let ai = BigInt::from(a as i64);
        let h2 = &ai * &h1 + &h0;
        let k2 = &ai * &k1 + &k0;
        if k2 > max_den && k1 > BigInt::zero() {
            break;
        }
        h0 = h1;
        k0 = k1;
        h1 = h2;
        k1 = k2;
        let cand = Rat::new(h1.clone(), k1.clone());
        if (rat_to_f64(&cand) - x.abs()).abs() <= max_err {
            break;
        }
        let frac = v - a;
        if frac <= f64::EPSILON * v.max(1.0) {
            break;
        }
        v = 1.0 / frac;
    }
    let r = Rat::new(h1, k1);
    if neg {
        -r
    } else {
        r
    }
}

/// Componentwise max-norm distance between two rational vectors.
pub fn max_norm_dist(a: &[Rat], b: &[Rat]) -> Rat {
    assert_eq!(a.len(), b.len());
    let mut best = Rat::zero();
    for (x, y) in a.iter().zip(b) {
        let d = (x - y).abs();
        if d > best {
            best = d;
        }
    }
    best
}
