/// Rounds to 9 significant digits so reports are stable across platforms
/// that differ in the last bits of libm results.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// Shortest decimal rendering of [`round_sig9`].
pub fn format_real(x: f64) -> String {
    let r = round_sig9(x);
    if r == r.trunc() && r.abs() < 1e15 {
        format!("{r:.1}")
    } else {
        format!("{r}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(round_sig9(0.123456789123), 0.123456789);
        assert_eq!(format_real(1.0), "1.0");
        assert_eq!(format_real(0.7666666666666), "0.766666667");
        assert_eq!(format_real(0.0), "0.0");
    }
}
