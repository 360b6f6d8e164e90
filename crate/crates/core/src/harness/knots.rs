//! Knot-count rules `N = floor(n^e)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An exponent in `(0, 1/2)`, kept exact when given as a ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Ratio { num: u32, den: u32 },
    Real(f64),
}

impl Exponent {
    pub fn value(self) -> f64 {
        match self {
            Exponent::Ratio { num, den } => num as f64 / den as f64,
            Exponent::Real(e) => e,
        }
    }

    /// Rejects exponents outside `(0, 1/2)`.
    pub fn validate(self) -> Result<(), String> {
        let ok = match self {
            Exponent::Ratio { num, den } => num > 0 && den > 0 && 2 * (num as u64) < den as u64,
            Exponent::Real(e) => e > 0.0 && e < 0.5,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("knot exponent {self} must lie in (0, 1/2)"))
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Ratio { num, den } => write!(f, "{num}/{den}"),
            Exponent::Real(e) => write!(f, "{e}"),
        }
    }
}

impl FromStr for Exponent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some((a, b)) = s.split_once('/') {
            let num = a
                .trim()
                .parse()
                .map_err(|_| format!("bad exponent '{s}'"))?;
            let den = b
                .trim()
                .parse()
                .map_err(|_| format!("bad exponent '{s}'"))?;
            if den == 0 {
                return Err(format!("bad exponent '{s}'"));
            }
            Ok(Exponent::Ratio { num, den })
        } else {
            s.parse::<f64>()
                .map(Exponent::Real)
                .map_err(|_| format!("bad exponent '{s}'"))
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Exponent::Ratio { .. } => s.serialize_str(&self.to_string()),
            Exponent::Real(e) => s.serialize_f64(*e),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::Number(e) => Ok(Exponent::Real(e)),
        }
    }
}

/// `floor(n^e)`.
///
/// For a ratio `a/b` the result is the largest `N` with `N^b ≤ n^a`, decided
/// in integer arithmetic whenever the powers fit in 128 bits.
pub fn knot_count(n: u64, exponent: Exponent) -> usize {
    let guess = (n as f64).powf(exponent.value()).floor().max(0.0) as u64;
    match exponent {
        Exponent::Ratio { num, den } => {
            let Some(target) = (n as u128).checked_pow(num) else {
                return guess as usize;
            };
            let within = |k: u64| (k as u128).checked_pow(den).is_some_and(|v| v <= target);
            let mut k = guess;
            while k > 0 && !within(k) {
                k -= 1;
            }
            while within(k + 1) {
                k += 1;
            }
            k as usize
        }
        Exponent::Real(_) => guess as usize,
    }
}
