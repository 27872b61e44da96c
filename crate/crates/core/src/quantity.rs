//! Quantities of interest over type configurations.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::TypeConfiguration;

/// A named count or average of a type configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Never,
    /// Defiers; the individuals the intervention would kill.
    Defiers,
    /// Compliers; the individuals the intervention would save.
    Compliers,
    Always,
    /// Defiers plus compliers.
    Affected,
    /// `(compliers - defiers) / s`.
    AvgEffect,
}

impl Quantity {
    pub fn value(&self, theta: &TypeConfiguration) -> Ratio<i64> {
        let [t1, t2, t3, t4] = theta.counts().map(i64::from);
        match self {
            Quantity::Never => t1.into(),
            Quantity::Defiers => t2.into(),
            Quantity::Compliers => t3.into(),
            Quantity::Always => t4.into(),
            Quantity::Affected => (t2 + t3).into(),
            Quantity::AvgEffect => Ratio::new(t3 - t2, theta.total() as i64),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Quantity::Never => "never",
            Quantity::Defiers => "defiers",
            Quantity::Compliers => "compliers",
            Quantity::Always => "always",
            Quantity::Affected => "affected",
            Quantity::AvgEffect => "avg_effect",
        }
    }
}

impl FromStr for Quantity {
    type Err = Error;
    fn from_str(text: &str) -> Result<Self> {
        Ok(match text {
            "never" => Quantity::Never,
            "defiers" | "killed" => Quantity::Defiers,
            "compliers" | "saved" => Quantity::Compliers,
            "always" => Quantity::Always,
            "affected" => Quantity::Affected,
            "avg_effect" => Quantity::AvgEffect,
            other => return Err(invalid(format!("unknown quantity {other:?}"))),
        })
    }
}

/// A real value extended with infinities and an explicit "undefined".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Extended {
    NegInf,
    Finite(Ratio<i64>),
    PosInf,
    /// `0 / 0`; never satisfies a comparison.
    Undefined,
}

impl Extended {
    pub fn is_defined(&self) -> bool {
        !matches!(self, Extended::Undefined)
    }

    fn order_key(&self) -> (u8, Ratio<i64>) {
        match *self {
            Extended::NegInf => (0, Ratio::zero()),
            Extended::Finite(r) => (1, r),
            Extended::PosInf => (2, Ratio::zero()),
            Extended::Undefined => (3, Ratio::zero()),
        }
    }

    /// Ordering between defined values; `None` if either is undefined.
    pub fn compare(&self, other: &Extended) -> Option<Ordering> {
        if !self.is_defined() || !other.is_defined() {
            return None;
        }
        Some(self.order_key().cmp(&other.order_key()))
    }

    pub fn to_f64(&self) -> f64 {
        match *self {
            Extended::NegInf => f64::NEG_INFINITY,
            Extended::PosInf => f64::INFINITY,
            Extended::Undefined => f64::NAN,
            Extended::Finite(r) => *r.numer() as f64 / *r.denom() as f64,
        }
    }
}

/// Total order over defined values, undefined last; used for sorting ranges.
impl PartialOrd for Extended {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Extended {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order_key().cmp(&other.order_key())
    }
}

/// Writes a rational as an integer, a terminating decimal, or `a/b`.
pub(crate) fn format_ratio(r: &Ratio<i64>, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if r.is_integer() {
        return write!(f, "{}", r.numer());
    }
    let mut den = *r.denom();
    let (mut twos, mut fives) = (0u32, 0u32);
    while den % 2 == 0 {
        den /= 2;
        twos += 1;
    }
    while den % 5 == 0 {
        den /= 5;
        fives += 1;
    }
    if den != 1 {
        return write!(f, "{}/{}", r.numer(), r.denom());
    }
    let digits = twos.max(fives);
    let scale = 10i64.pow(digits);
    let scaled = r.numer() * (scale / r.denom());
    let sign = if scaled < 0 { "-" } else { "" };
    let a = scaled.abs();
    write!(f, "{sign}{}.{:0width$}", a / scale, a % scale, width = digits as usize)
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::NegInf => write!(f, "-inf"),
            Extended::PosInf => write!(f, "inf"),
            Extended::Undefined => write!(f, "undefined"),
            Extended::Finite(r) => format_ratio(r, f),
        }
    }
}

impl Serialize for Extended {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Extended::Finite(r) if r.is_integer() => ser.serialize_i64(*r.numer()),
            Extended::Finite(r) => ser.serialize_f64(*r.numer() as f64 / *r.denom() as f64),
            other => ser.serialize_str(&other.to_string()),
        }
    }
}

/// Left-hand side of a comparison: a quantity or a ratio of two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operand {
    Single(Quantity),
    Ratio(Quantity, Quantity),
}

impl Operand {
    pub fn eval(&self, theta: &TypeConfiguration) -> Extended {
        match self {
            Operand::Single(q) => Extended::Finite(q.value(theta)),
            Operand::Ratio(num, den) => {
                let (a, b) = (num.value(theta), den.value(theta));
                if !b.is_zero() {
                    Extended::Finite(a / b)
                } else if a.is_zero() {
                    Extended::Undefined
                } else if a.is_positive() {
                    Extended::PosInf
                } else {
                    Extended::NegInf
                }
            }
        }
    }
}

impl From<Quantity> for Operand {
    fn from(q: Quantity) -> Self {
        Operand::Single(q)
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Single(q) => write!(f, "{}", q.name()),
            Operand::Ratio(a, b) => write!(f, "{} / {}", a.name(), b.name()),
        }
    }
}

impl FromStr for Operand {
    type Err = Error;
    fn from_str(text: &str) -> Result<Self> {
        match text.split_once('/') {
            Some((a, b)) => Ok(Operand::Ratio(a.trim().parse()?, b.trim().parse()?)),
            None => Ok(Operand::Single(text.trim().parse()?)),
        }
    }
}

impl Serialize for Operand {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Operand {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(de)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}
