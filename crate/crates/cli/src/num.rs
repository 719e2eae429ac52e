//! Number formatting for reports.

use serde::{Serialize, Serializer};

/// Rounds to 6 significant digits.
pub fn sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Text form used in CSV tables.
pub fn fmt6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    format!("{}", sig6(x))
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt6).unwrap_or_default()
}

/// C99-style hexadecimal float, e.g. `0x1.8p+1` for 3.
pub fn hex_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let mantissa = bits & ((1u64 << 52) - 1);
    if exp == 0 && mantissa == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, e) = if exp == 0 { (0, -1022) } else { (1, exp - 1023) };
    let frac = format!("{mantissa:013x}");
    let frac = frac.trim_end_matches('0');
    let dot = if frac.is_empty() { String::new() } else { format!(".{frac}") };
    format!("{sign}0x{lead}{dot}p{e:+}")
}

/// A reported quantity: 6 significant digits plus the exact value in hex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Num", 2)?;
        if self.0.is_finite() {
            st.serialize_field("value", &sig6(self.0))?;
        } else {
            st.serialize_field("value", &Option::<f64>::None)?;
        }
        st.serialize_field("hex", &hex_float(self.0))?;
        st.end()
    }
}

impl From<f64> for Num {
    fn from(x: f64) -> Self {
        Self(x)
    }
}

/// `serialize_with` helpers for plain `f64` fields.
pub mod ser {
    use super::Num;
    use serde::{Serialize, Serializer};

    pub fn num<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        Num(*x).serialize(s)
    }

    pub fn opt<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        x.map(Num).serialize(s)
    }

    pub fn opt4<S: Serializer>(x: &Option<[f64; 4]>, s: S) -> Result<S::Ok, S::Error> {
        x.map(|a| a.map(Num)).serialize(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_digits() {
        assert_eq!(sig6(18f64.sqrt()), 4.24264);
        assert_eq!(fmt6(2.7600831), "2.76008");
        assert_eq!(fmt6(1234567.0), "1234570");
        assert_eq!(fmt6(0.0), "0");
    }

    #[test]
    fn hex_forms() {
        assert_eq!(hex_float(1.0), "0x1p+0");
        assert_eq!(hex_float(3.0), "0x1.8p+1");
        assert_eq!(hex_float(-0.5), "-0x1p-1");
        assert_eq!(hex_float(0.1), "0x1.999999999999ap-4");
        assert_eq!(hex_float(f64::MIN_POSITIVE / 2.0), "0x0.8p-1022");
        assert_eq!(hex_float(0.0), "0x0p+0");
    }

    #[test]
    fn num_json() {
        let s = serde_json::to_string(&Num(3.0)).unwrap();
        assert_eq!(s, r#"{"value":3.0,"hex":"0x1.8p+1"}"#);
    }
}
