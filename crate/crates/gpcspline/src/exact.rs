//! Exact rational weights.
//!
//! Every finite `f64` is a dyadic rational, so knot insertion coefficients
//! computed from `f64` knots are exact rationals and weight bookkeeping never
//! has to fall back to rounding.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt;
use std::str::FromStr;

pub fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite knot value")
}

/// Exact `min((k-r0)/(r3-r0), 1)` and `min((r4-k)/(r4-r1), 1)`.
pub fn split_coefficients(t: &[f64; 5], k: f64) -> (BigRational, BigRational) {
    let one = BigRational::one();
    let c1 = if t[3] > t[0] {
        let v = (rat(k) - rat(t[0])) / (rat(t[3]) - rat(t[0]));
        if v > one {
            one.clone()
        } else {
            v
        }
    } else {
        one.clone()
    };
    let c2 = if t[4] > t[1] {
        let v = (rat(t[4]) - rat(k)) / (rat(t[4]) - rat(t[1]));
        if v > one {
            one
        } else {
            v
        }
    } else {
        one
    };
    (c1, c2)
}

/// A blending-function weight held exactly, with a cached float value.
#[derive(Clone, PartialEq)]
pub struct Weight {
    exact: BigRational,
    value: f64,
}

impl Weight {
    pub fn one() -> Self {
        Self::from_rational(BigRational::one())
    }

    pub fn from_rational(exact: BigRational) -> Self {
        let value = exact.to_f64().unwrap_or(f64::NAN);
        Self { exact, value }
    }

    pub fn from_f64(x: f64) -> Self {
        Self::from_rational(rat(x))
    }

    pub fn from_ratio(p: i64, q: i64) -> Self {
        Self::from_rational(BigRational::new(BigInt::from(p), BigInt::from(q)))
    }

    pub fn exact(&self) -> &BigRational {
        &self.exact
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_one(&self) -> bool {
        self.exact.is_one()
    }

    pub fn is_zero(&self) -> bool {
        self.exact.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.exact.is_positive()
    }
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exact.denom().is_one() {
            write!(f, "{}", self.exact.numer())
        } else {
            write!(f, "{}/{}", self.exact.numer(), self.exact.denom())
        }
    }
}

impl FromStr for Weight {
    type Err = String;

    /// Accepts `p/q`, an integer, or a decimal float.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some((p, q)) = s.split_once('/') {
            let p = BigInt::from_str(p.trim()).map_err(|e| e.to_string())?;
            let q = BigInt::from_str(q.trim()).map_err(|e| e.to_string())?;
            if q.is_zero() {
                return Err("zero denominator".into());
            }
            return Ok(Self::from_rational(BigRational::new(p, q)));
        }
        if let Ok(p) = BigInt::from_str(s) {
            return Ok(Self::from_rational(BigRational::from_integer(p)));
        }
        let x: f64 = s.parse().map_err(|_| format!("bad weight '{s}'"))?;
        if !x.is_finite() {
            return Err(format!("bad weight '{s}'"));
        }
        Ok(Self::from_f64(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients_are_exact() {
        let (c1, c2) = split_coefficients(&[0.0, 1.0, 2.0, 3.0, 4.0], 2.0);
        assert_eq!(c1, BigRational::new(2.into(), 3.into()));
        assert_eq!(c2, BigRational::new(2.into(), 3.into()));
        let (c1, c2) = split_coefficients(&[0.0, 1.0, 2.0, 3.0, 4.0], 3.5);
        assert!(c1.is_one());
        assert_eq!(c2, BigRational::new(1.into(), 6.into()));
    }

    #[test]
    fn weight_text_round_trip() {
        for s in ["35/36", "1", "-3/4", "0.5"] {
            let w: Weight = s.parse().unwrap();
            let back: Weight = w.to_string().parse().unwrap();
            assert_eq!(w, back);
        }
        assert_eq!("2/4".parse::<Weight>().unwrap().to_string(), "1/2");
        assert!("1/0".parse::<Weight>().is_err());
    }
}
