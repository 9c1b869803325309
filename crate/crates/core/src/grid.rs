use crate::error::{invalid, Result};

/// `count` values log-spaced over `[lo, hi]`, endpoints included.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(invalid("count", "grid must be non-empty"));
    }
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(invalid(
            "range",
            format!("need 0 < lo <= hi, got [{lo}, {hi}]"),
        ));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    let step = (b - a) / (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == count - 1 {
                hi
            } else {
                10f64.powf(a + step * i as f64)
            }
        })
        .collect())
}
