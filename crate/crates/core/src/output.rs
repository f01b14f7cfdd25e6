//! Text formatting shared by the CSV and report writers.

use std::io::Write;

/// `x` rounded to `digits` significant digits, in positional notation when
/// the decimal exponent lies in `-5..digits`, scientific otherwise.
/// The result never depends on the locale.
pub fn format_significant(x: f64, digits: usize) -> String {
    assert!(digits >= 1, "need at least one significant digit");
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return format!("{:.*}", digits - 1, 0.0);
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let exponent: i32 = sci[sci.find('e').expect("exponent marker") + 1..].parse().expect("integer exponent");
    if (-5..digits as i32).contains(&exponent) {
        format!("{:.*}", (digits as i32 - 1 - exponent) as usize, x)
    } else {
        sci
    }
}

/// Writes `# key=value` lines.
pub fn write_header<W: Write>(out: &mut W, header: &[(String, String)]) -> std::io::Result<()> {
    for (key, value) in header {
        writeln!(out, "# {key}={value}")?;
    }
    Ok(())
}
