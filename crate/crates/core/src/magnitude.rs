//! Positive magnitudes held as base-10 logarithms.
//!
//! Bit counts and operation rates in this crate routinely run to
//! `10^(10^29)` and beyond, so every such quantity is a [`LogQuantity`]:
//! multiplication adds exponents, powers scale them, and the linear value is
//! only ever produced on request when it fits in an `f64`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponents are compared with this absolute tolerance.
pub const CMP_TOLERANCE: f64 = 1e-9;

/// Above this exponent the linear value is never materialized.
pub const LINEAR_LIMIT: f64 = 300.0;

/// Log-sum-exp cutoff: a summand this many decades smaller is absorbed.
const ABSORB_DECADES: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Bits,
    OpsPerSec,
    /// Rate per bit of state information (the clock rate).
    OpsPerSecPerBit,
    Dimensionless,
    Meters,
    Seconds,
    Joules,
    Count,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Bits => "bits",
            Unit::OpsPerSec => "ops_per_sec",
            Unit::OpsPerSecPerBit => "ops_per_sec_per_bit",
            Unit::Dimensionless => "dimensionless",
            Unit::Meters => "meters",
            Unit::Seconds => "seconds",
            Unit::Joules => "joules",
            Unit::Count => "count",
        }
    }

    fn is_scalar(self) -> bool {
        matches!(self, Unit::Dimensionless | Unit::Count)
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A strictly positive quantity stored as `log10` plus a unit tag.
///
/// Unit algebra:
/// * `mul`: a scalar (`dimensionless` or `count`) takes the other operand's
///   tag; two `count`s give `count`; anything else is a unit error.
/// * `div`: dividing by a scalar keeps the numerator's tag, equal tags cancel
///   to `dimensionless`, and `ops_per_sec / bits` is `ops_per_sec_per_bit`.
/// * `pow`: only scalars may be raised to a power other than one; the tag is
///   kept.
/// * `add`: tags must match.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogQuantity {
    log10: f64,
    unit: Unit,
}

impl LogQuantity {
    pub fn from_linear(x: f64, unit: Unit) -> Result<Self> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::Domain(format!(
                "magnitude must be positive and finite, got {x}"
            )));
        }
        Ok(Self {
            log10: x.log10(),
            unit,
        })
    }

    pub fn from_log10(log10: f64, unit: Unit) -> Result<Self> {
        if !log10.is_finite() {
            return Err(Error::Domain(format!("non-finite exponent {log10}")));
        }
        Ok(Self { log10, unit })
    }

    /// `2^exp2` without materializing it.
    pub fn pow2(exp2: f64, unit: Unit) -> Result<Self> {
        Self::from_log10(exp2 * std::f64::consts::LOG10_2, unit)
    }

    pub fn log10(&self) -> f64 {
        self.log10
    }

    pub fn log2(&self) -> f64 {
        self.log10 * std::f64::consts::LOG2_10
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    /// Linear value, or `None` once the exponent passes [`LINEAR_LIMIT`].
    pub fn to_linear(&self) -> Option<f64> {
        (self.log10 <= LINEAR_LIMIT).then(|| 10f64.powf(self.log10))
    }

    pub fn with_unit(self, unit: Unit) -> Self {
        Self { unit, ..self }
    }

    pub fn mul(self, rhs: Self) -> Result<Self> {
        let unit = match (self.unit, rhs.unit) {
            (Unit::Dimensionless, b) => b,
            (a, Unit::Dimensionless) => a,
            (Unit::Count, b) => b,
            (a, Unit::Count) => a,
            (a, b) => return Err(unit_error("mul", a, b)),
        };
        Self::from_log10(self.log10 + rhs.log10, unit)
    }

    pub fn div(self, rhs: Self) -> Result<Self> {
        let unit = match (self.unit, rhs.unit) {
            (a, b) if a == b => Unit::Dimensionless,
            (a, b) if b.is_scalar() => a,
            (Unit::OpsPerSec, Unit::Bits) => Unit::OpsPerSecPerBit,
            (a, b) => return Err(unit_error("div", a, b)),
        };
        Self::from_log10(self.log10 - rhs.log10, unit)
    }

    pub fn pow(self, k: f64) -> Result<Self> {
        if k != 1.0 && !self.unit.is_scalar() {
            return Err(unit_error("pow", self.unit, Unit::Dimensionless));
        }
        Self::from_log10(self.log10 * k, self.unit)
    }

    /// Multiply by a plain positive factor.
    pub fn scale(self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::Domain(format!(
                "scale factor must be positive, got {factor}"
            )));
        }
        Self::from_log10(self.log10 + factor.log10(), self.unit)
    }

    /// Sum via log-sum-exp; an operand more than 30 decades below the other is
    /// dropped.
    pub fn add(self, rhs: Self) -> Result<Self> {
        if self.unit != rhs.unit {
            return Err(unit_error("add", self.unit, rhs.unit));
        }
        let (hi, lo) = if self.log10 >= rhs.log10 {
            (self.log10, rhs.log10)
        } else {
            (rhs.log10, self.log10)
        };
        if hi - lo > ABSORB_DECADES {
            return Self::from_log10(hi, self.unit);
        }
        Self::from_log10(hi + (1.0 + 10f64.powf(lo - hi)).log10(), self.unit)
    }

    /// Ordering with [`CMP_TOLERANCE`] on the exponent. Tags must match.
    pub fn cmp(&self, rhs: &Self) -> Result<Ordering> {
        if self.unit != rhs.unit {
            return Err(unit_error("cmp", self.unit, rhs.unit));
        }
        let d = self.log10 - rhs.log10;
        Ok(if d.abs() <= CMP_TOLERANCE {
            Ordering::Equal
        } else if d > 0.0 {
            Ordering::Greater
        } else {
            Ordering::Less
        })
    }
}

impl fmt::Display for LogQuantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_linear() {
            Some(v) if self.log10.abs() < 6.0 => write!(f, "{v:.6} {}", self.unit),
            Some(v) => write!(f, "{v:.4e} {}", self.unit),
            None if self.log10 < 1e15 => write!(f, "10^{:.4} {}", self.log10, self.unit),
            None => write!(f, "10^({:.4e}) {}", self.log10, self.unit),
        }
    }
}

fn unit_error(op: &'static str, lhs: Unit, rhs: Unit) -> Error {
    Error::Unit {
        op,
        lhs: lhs.as_str(),
        rhs: rhs.as_str(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lq(x: f64) -> LogQuantity {
        LogQuantity::from_linear(x, Unit::Dimensionless).unwrap()
    }

    fn exp10(e: f64) -> LogQuantity {
        LogQuantity::from_log10(e, Unit::Dimensionless).unwrap()
    }

    #[test]
    fn from_linear_examples() {
        assert_eq!(lq(1.0).log10(), 0.0);
        assert_eq!(lq(1e20).log10(), 20.0);
        assert!((lq(6.02e23).log10() - 23.779_596).abs() < 1e-6);
    }

    #[test]
    fn non_positive_is_domain_error() {
        assert!(matches!(
            LogQuantity::from_linear(0.0, Unit::Bits),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            LogQuantity::from_linear(-3.0, Unit::Bits),
            Err(Error::Domain(_))
        ));
        assert!(LogQuantity::from_linear(f64::NAN, Unit::Bits).is_err());
    }

    #[test]
    fn linear_round_trip() {
        for x in [1e-30, 0.5, 3.0, 7.25e11, 1.2e299] {
            let back = lq(x).to_linear().unwrap();
            assert!(((back - x) / x).abs() < 1e-12, "{x} -> {back}");
        }
        assert!(exp10(300.5).to_linear().is_none());
    }

    #[test]
    fn exponent_arithmetic() {
        let d = exp10(182.0);
        assert_eq!(d.pow(4.0 * 6e26).unwrap().log10(), 182.0 * 2.4e27);
        assert_eq!(d.mul(d).unwrap().log10(), 364.0);
        assert_eq!(exp10(10.0).div(exp10(4.0)).unwrap().log10(), 6.0);
    }

    #[test]
    fn cat_exceeds_universe_budget() {
        let cat = LogQuantity::from_log10(1.2e29, Unit::Bits).unwrap();
        let universe = LogQuantity::from_log10(120.0, Unit::Bits).unwrap();
        assert_eq!(cat.cmp(&universe).unwrap(), Ordering::Greater);
        assert_eq!(universe.cmp(&cat).unwrap(), Ordering::Less);
        let near = LogQuantity::from_log10(120.0 + 5e-10, Unit::Bits).unwrap();
        assert_eq!(universe.cmp(&near).unwrap(), Ordering::Equal);
    }

    #[test]
    fn unit_rules() {
        let bits = LogQuantity::from_linear(64.0, Unit::Bits).unwrap();
        let rate = LogQuantity::from_linear(1e30, Unit::OpsPerSec).unwrap();
        assert_eq!(bits.mul(lq(4.0)).unwrap().unit(), Unit::Bits);
        assert_eq!(lq(4.0).mul(bits).unwrap().unit(), Unit::Bits);
        assert_eq!(rate.div(bits).unwrap().unit(), Unit::OpsPerSecPerBit);
        assert_eq!(bits.div(bits).unwrap().unit(), Unit::Dimensionless);
        assert!(matches!(bits.mul(rate), Err(Error::Unit { .. })));
        assert!(matches!(bits.pow(2.0), Err(Error::Unit { .. })));
        assert!(bits.pow(1.0).is_ok());
        assert!(matches!(bits.add(rate), Err(Error::Unit { .. })));
        assert!(bits.cmp(&rate).is_err());
    }

    #[test]
    fn log_sum_exp_and_absorption() {
        let s = lq(3.0).add(lq(5.0)).unwrap();
        assert!((s.to_linear().unwrap() - 8.0).abs() < 1e-12);
        let big = exp10(1e5);
        assert_eq!(big.add(exp10(1e5 - 31.0)).unwrap().log10(), 1e5);
    }

    #[test]
    fn json_shape() {
        let v = LogQuantity::from_log10(2.5, Unit::OpsPerSec).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"{"log10":2.5,"unit":"ops_per_sec"}"#);
        let back: LogQuantity = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    proptest! {
        #[test]
        fn mul_commutes_and_associates(a in -200.0f64..200.0, b in -200.0f64..200.0, c in -200.0f64..200.0) {
            let (a, b, c) = (exp10(a), exp10(b), exp10(c));
            prop_assert!((a.mul(b).unwrap().log10() - b.mul(a).unwrap().log10()).abs() < 1e-9);
            let l = a.mul(b).unwrap().mul(c).unwrap().log10();
            let r = a.mul(b.mul(c).unwrap()).unwrap().log10();
            prop_assert!((l - r).abs() < 1e-9);
        }

        #[test]
        fn pow_composes(a in -50.0f64..50.0, p in -3.0f64..3.0, q in -3.0f64..3.0) {
            let a = exp10(a);
            let l = a.pow(p).unwrap().pow(q).unwrap().log10();
            let r = a.pow(p * q).unwrap().log10();
            prop_assert!((l - r).abs() < 1e-9);
        }

        #[test]
        fn agrees_with_linear_arithmetic(x in 1e-100f64..1e100, y in 1e-100f64..1e100) {
            let (a, b) = (lq(x), lq(y));
            let rel = |got: f64, want: f64| ((got - want) / want).abs();
            prop_assert!(rel(a.mul(b).unwrap().to_linear().unwrap(), x * y) < 1e-9);
            prop_assert!(rel(a.div(b).unwrap().to_linear().unwrap(), x / y) < 1e-9);
            prop_assert!(rel(a.add(b).unwrap().to_linear().unwrap(), x + y) < 1e-9);
            prop_assert!(rel(a.pow(1.5).unwrap().to_linear().unwrap(), x.powf(1.5)) < 1e-9);
        }
    }
}
