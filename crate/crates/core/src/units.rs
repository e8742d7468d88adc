//! Quantities written as "<number> <unit>" strings in config files.
//!
//! Cyclic frequencies (Hz, kHz, MHz) become angular rad/s.

use std::fmt;
use std::marker::PhantomData;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

pub trait Dimension {
    const NAME: &'static str;
    /// (suffix, factor to the canonical unit)
    const UNITS: &'static [(&'static str, f64)];
}

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

macro_rules! dimension {
    ($ty:ident, $name:literal, [$(($u:literal, $f:expr)),+ $(,)?]) => {
        #[derive(Clone, Copy, Debug, PartialEq)]
        pub struct $ty;
        impl Dimension for $ty {
            const NAME: &'static str = $name;
            const UNITS: &'static [(&'static str, f64)] = &[$(($u, $f)),+];
        }
    };
}

// Canonical: rad/s.
dimension!(Frequency, "frequency", [
    ("MHz", TWO_PI * 1e6), ("kHz", TWO_PI * 1e3), ("Hz", TWO_PI),
    ("rad/us", 1e6), ("rad/s", 1.0),
]);
// Canonical: s.
dimension!(Time, "time", [("ns", 1e-9), ("us", 1e-6), ("ms", 1e-3), ("s", 1.0)]);
// Canonical: μm.
dimension!(Length, "length", [("nm", 1e-3), ("um", 1.0), ("mm", 1e3)]);
// Canonical: μK.
dimension!(Temperature, "temperature", [("uK", 1.0), ("mK", 1e3), ("K", 1e6)]);
// Canonical: degrees.
dimension!(Angle, "angle", [("deg", 1.0), ("rad", 180.0 / std::f64::consts::PI)]);
// Canonical: rad/μm.
dimension!(WaveNumber, "wave number", [("rad/um", 1.0), ("rad/nm", 1e3)]);
// Canonical: amu.
dimension!(Mass, "mass", [("amu", 1.0)]);

/// A value in the canonical unit of `D`, remembering the text it came from.
#[derive(Clone, Debug)]
pub struct Quantity<D: Dimension> {
    value: f64,
    number: f64,
    unit: &'static str,
    text: String,
    _dim: PhantomData<D>,
}

impl<D: Dimension> PartialEq for Quantity<D> {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl<D: Dimension> Quantity<D> {
    pub fn parse(s: &str) -> Result<Self, String> {
        let t = s.trim();
        let split = t
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
            .unwrap_or(t.len());
        let (num, unit) = t.split_at(split);
        let unit = unit.trim();
        let number: f64 = num
            .trim()
            .parse()
            .map_err(|_| format!("cannot read a number from `{s}`"))?;
        if !number.is_finite() {
            return Err(format!("`{s}` is not finite"));
        }
        let (unit, factor) = D::UNITS
            .iter()
            .find(|(u, _)| *u == unit)
            .copied()
            .ok_or_else(|| {
                let allowed: Vec<&str> = D::UNITS.iter().map(|(u, _)| *u).collect();
                if unit.is_empty() {
                    format!("`{s}` needs a {} unit ({})", D::NAME, allowed.join(", "))
                } else {
                    format!("unknown {} unit `{unit}` (expected one of {})", D::NAME, allowed.join(", "))
                }
            })?;
        Ok(Self {
            value: number * factor,
            number,
            unit,
            text: t.to_string(),
            _dim: PhantomData,
        })
    }

    /// Value in the canonical unit.
    pub fn value(&self) -> f64 {
        self.value
    }

    /// Value expressed in `unit`, exact when it matches the written unit.
    pub fn in_unit(&self, unit: &str) -> f64 {
        if unit == self.unit {
            return self.number;
        }
        let factor = D::UNITS
            .iter()
            .find(|(u, _)| *u == unit)
            .map(|(_, f)| *f)
            .unwrap_or_else(|| panic!("`{unit}` is not a {} unit", D::NAME));
        self.value / factor
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

impl<'de, D: Dimension> Deserialize<'de> for Quantity<D> {
    fn deserialize<De: Deserializer<'de>>(d: De) -> Result<Self, De::Error> {
        struct V<D>(PhantomData<D>);
        impl<D: Dimension> Visitor<'_> for V<D> {
            type Value = Quantity<D>;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a {} string such as \"1.5 {}\"", D::NAME, D::UNITS[0].0)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
                Quantity::parse(v).map_err(E::custom)
            }
        }
        d.deserialize_str(V(PhantomData))
    }
}

impl<D: Dimension> Serialize for Quantity<D> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_units() {
        let f = Quantity::<Frequency>::parse("610 MHz").unwrap();
        assert!((f.value() - TWO_PI * 610e6).abs() < 1e-3);
        assert!((Quantity::<Time>::parse("492ns").unwrap().value() - 492e-9).abs() < 1e-20);
        assert_eq!(Quantity::<Length>::parse("520 um").unwrap().value(), 520.0);
        assert_eq!(Quantity::<Length>::parse("795 nm").unwrap().value(), 0.795);
        assert_eq!(Quantity::<Temperature>::parse("150 uK").unwrap().value(), 150.0);
        assert_eq!(Quantity::<WaveNumber>::parse("7.38 rad/um").unwrap().value(), 7.38);
        assert!((Quantity::<Frequency>::parse("-206.656 MHz").unwrap().value() + TWO_PI * 206.656e6).abs() < 1e-3);
        assert!((Quantity::<Time>::parse("1e3 ns").unwrap().value() - 1e-6).abs() < 1e-18);
        assert_eq!(Quantity::<Time>::parse("1.6 us").unwrap().in_unit("us"), 1.6);
        assert!((Quantity::<Time>::parse("300 ns").unwrap().in_unit("us") - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Quantity::<Frequency>::parse("610").unwrap_err().contains("needs a frequency unit"));
        assert!(Quantity::<Frequency>::parse("610 GHz").unwrap_err().contains("unknown frequency unit"));
        assert!(Quantity::<Time>::parse("abc us").is_err());
        assert!(Quantity::<Length>::parse("5 MHz").is_err());
    }
}
