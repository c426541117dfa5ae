//! Fixed number formatting so reports diff cleanly.

/// Significant digits kept in every written number.
pub const SIG_DIGITS: i32 = 12;

/// `v` rounded to [`SIG_DIGITS`] significant digits.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", (SIG_DIGITS - 1) as usize, v).parse().expect("formatted float parses")
}

/// Decimal text with [`SIG_DIGITS`] significant digits and no trailing zeros;
/// scientific notation outside `1e-6 ..= 1e15`.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-6..=15).contains(&exp) {
        let s = format!("{:.*e}", (SIG_DIGITS - 1) as usize, v);
        let (mantissa, e) = s.split_once('e').expect("scientific format");
        return format!("{}e{}", trim_zeros(mantissa), e);
    }
    let rounded = round_sig(v);
    let decimals = (SIG_DIGITS - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{rounded:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn json_num(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(round_sig(v)).map_or(serde_json::Value::Null, serde_json::Value::Number)
}

/// Rounds every float inside a JSON value.
pub fn round_value(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Number(n) if n.is_f64() => json_num(n.as_f64().expect("f64 number")),
        Value::Array(xs) => Value::Array(xs.into_iter().map(round_value).collect()),
        Value::Object(m) => Value::Object(m.into_iter().map(|(k, x)| (k, round_value(x))).collect()),
        other => other,
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json_text(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}
