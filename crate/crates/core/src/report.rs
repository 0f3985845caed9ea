//! Small formatting helpers shared by the CSV writers.

/// Formats `v` with six significant digits, trimming trailing zeros.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".to_string()
        } else {
            s
        }
    } else {
        format!("{v:.5e}")
    }
}

#[cfg(test)]
mod tests {
    use super::fmt_sig;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig(-7.624373277), "-7.62437");
        assert_eq!(fmt_sig(8.9196), "8.9196");
        assert_eq!(fmt_sig(-2.5), "-2.5");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(123456.7), "123457");
        assert_eq!(fmt_sig(1234567.0), "1.23457e6");
        assert_eq!(fmt_sig(1e-9), "1.00000e-9");
        assert_eq!(fmt_sig(-0.0000001), "-1.00000e-7");
        assert_eq!(fmt_sig(12.0), "12");
    }
}
