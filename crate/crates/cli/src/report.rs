//! Number formatting and JSON helpers shared by the artifact writers.
//!
//! Every float is written with 17 significant digits in scientific form
//! with a signed exponent (`1.2500000000000000e+0`), in CSV and JSON alike. Non-finite values become JSON
//! `null` and empty CSV cells.

use std::path::Path;

use riqs_core::linalg::C64;
use riqs_core::models::DensityMatrix;
use serde_json::{Map, Number, Value};

use crate::error::CliError;

pub fn fmt_f64(x: f64) -> String {
    if !x.is_finite() {
        return String::new();
    }
    let s = format!("{x:.16e}");
    // explicit exponent sign, as the JSON serializer also writes it
    match s.split_once('e') {
        Some((mantissa, exp)) if !exp.starts_with('-') => format!("{mantissa}e+{exp}"),
        _ => s,
    }
}

pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    // arbitrary_precision keeps the digits exactly as formatted
    Value::Number(fmt_f64(x).parse::<Number>().expect("formatted float is a JSON number"))
}

pub fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

pub fn complex(z: C64) -> Value {
    object([("re", num(z.re)), ("im", num(z.im))])
}

pub fn object<const N: usize>(entries: [(&str, Value); N]) -> Value {
    let mut map = Map::new();
    for (k, v) in entries {
        map.insert(k.to_string(), v);
    }
    Value::Object(map)
}

/// Populations and coherence of a qubit state.
pub fn qubit_state(rho: &DensityMatrix) -> Value {
    let m = rho.matrix();
    object([
        ("p0", num(m[(0, 0)].re)),
        ("p1", num(m[(1, 1)].re)),
        ("rho01", complex(m[(0, 1)])),
    ])
}

pub fn get_f64(v: &Value, path: &[&str]) -> Option<f64> {
    let mut cur = v;
    for key in path {
        cur = cur.get(key)?;
    }
    cur.as_f64()
}

pub fn get_complex(v: &Value, path: &[&str]) -> Option<C64> {
    let mut cur = v;
    for key in path {
        cur = cur.get(key)?;
    }
    Some(C64::new(cur.get("re")?.as_f64()?, cur.get("im")?.as_f64()?))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(12.5), "1.2500000000000000e+1");
        assert_eq!(num(12.5).to_string(), fmt_f64(12.5));
        assert_eq!(fmt_f64(f64::NAN), "");
        let v = num(1.0 / 3.0);
        assert_eq!(v.to_string(), "3.3333333333333331e-1");
        assert_eq!(v.as_f64(), Some(1.0 / 3.0));
        assert_eq!(num(f64::INFINITY), Value::Null);
    }

    #[test]
    fn round_trips_every_bit() {
        for x in [std::f64::consts::PI, -2.5e-300, 6.02214076e23, 0.817574476193644] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
