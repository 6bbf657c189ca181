//! Rendering helpers: fixed-precision decimal formatting and file/stdout
//! emission.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

/// Renders a float with 12 significant digits in plain decimal notation.
/// The format is fixed so identical inputs produce byte-identical files.
pub fn sig12(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let formatted = format!("{:.11e}", v);
    let (mantissa, exponent) = formatted.split_once('e').expect("exponent format");
    let exponent: i32 = exponent.parse().expect("numeric exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    debug_assert_eq!(digits.len(), 12);

    let mut out = String::new();
    if negative {
        out.push('-');
    }
    let point = exponent + 1; // digits before the decimal point
    if point <= 0 {
        out.push_str("0.");
        out.push_str(&"0".repeat(point.unsigned_abs() as usize));
        out.push_str(&digits);
    } else if point as usize >= digits.len() {
        out.push_str(&digits);
        out.push_str(&"0".repeat(point as usize - digits.len()));
    } else {
        out.push_str(&digits[..point as usize]);
        out.push('.');
        out.push_str(&digits[point as usize..]);
    }
    out
}

/// Optional value as a CSV cell; absent values render empty.
pub fn sig12_opt(v: Option<f64>) -> String {
    v.map(sig12).unwrap_or_default()
}

/// Writes to the given path, or to stdout when no path is given.
pub fn emit(out: Option<&Path>, content: &str) -> io::Result<()> {
    match out {
        Some(path) => fs::write(path, content),
        None => io::stdout().write_all(content.as_bytes()),
    }
}
