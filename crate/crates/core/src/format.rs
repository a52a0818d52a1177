//! Locale-independent number formatting for CSV output.

/// Placeholder written where a metric is undefined (e.g. a delay with zero
/// throughput).
pub const UNDEFINED: &str = "undef";
/// Placeholder written where evaluating a grid point failed.
pub const FAILED: &str = "error";

const SIGNIFICANT: usize = 12;

/// Formats `x` with 12 significant digits in the style of C's `%.12g`.
pub fn sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", SIGNIFICANT - 1, x);
    let (mantissa, exponent) = sci.split_once('e').expect("exponent marker");
    let exponent: i32 = exponent.parse().expect("integer exponent");
    if (-5..SIGNIFICANT as i32).contains(&exponent) {
        let decimals = (SIGNIFICANT as i32 - 1 - exponent).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exponent < 0 { '-' } else { '+' };
        format!(
            "{}e{sign}{:02}",
            trim_zeros(mantissa.to_string()),
            exponent.abs()
        )
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(sig).unwrap_or_else(|| UNDEFINED.to_string())
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}
