//! Floating-point values in reports are written with 17 significant digits
//! so that identical runs produce byte-identical JSON.

use serde::ser::Error;
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

/// `{:.16e}` rendering; non-finite values become `null`.
pub fn format_f64(x: f64) -> Option<String> {
    x.is_finite().then(|| format!("{x:.16e}"))
}

pub fn fixed17<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    match format_f64(*x) {
        Some(text) => RawValue::from_string(text)
            .map_err(S::Error::custom)?
            .serialize(s),
        None => s.serialize_none(),
    }
}

pub fn fixed17_opt<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => fixed17(v, s),
        None => s.serialize_none(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Wrap(#[serde(serialize_with = "fixed17")] f64);

    #[test]
    fn seventeen_digits_and_valid_json() {
        let text = serde_json::to_string(&Wrap(0.1)).unwrap();
        assert_eq!(text, "1.0000000000000001e-1");
        let back: f64 = serde_json::from_str(&text).unwrap();
        assert_eq!(back, 0.1);
        assert_eq!(serde_json::to_string(&Wrap(f64::NAN)).unwrap(), "null");
        assert_eq!(serde_json::to_string(&Wrap(-3.0)).unwrap(), "-3.0000000000000000e0");
    }
}
