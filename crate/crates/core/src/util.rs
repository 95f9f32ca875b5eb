/// `ceil(a / b)` for `b > 0`.
pub(crate) fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// `100 * num / den` rounded half-up to two decimals, using integer
/// arithmetic so that exact halves never fall the wrong way.
pub(crate) fn pct(num: u64, den: u64) -> Option<f64> {
    if den == 0 {
        return None;
    }
    let (num, den) = (num as u128, den as u128);
    let hundredths = (num * 20_000 + den) / (2 * den);
    Some(hundredths as f64 / 100.0)
}
