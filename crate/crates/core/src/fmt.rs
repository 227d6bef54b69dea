//! Decimal rendering of floats at 17 significant digits, the precision at which
//! every finite `f64` survives a text round trip.

/// Renders `x` like C's `%.17g`: 17 significant digits, positional notation for
/// decimal exponents in `[-5, 17)`, scientific otherwise, trailing zeros removed.
///
/// Returns `None` for NaN and infinities, which have no JSON or TSV encoding here.
pub fn format_g17(x: f64) -> Option<String> {
    if !x.is_finite() {
        return None;
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        Some(strip_fraction_zeros(format!("{:.*}", decimals, x)))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        Some(format!(
            "{}e{}{:02}",
            strip_fraction_zeros(mantissa.to_string()),
            sign,
            exp.unsigned_abs()
        ))
    }
}

fn strip_fraction_zeros(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}
