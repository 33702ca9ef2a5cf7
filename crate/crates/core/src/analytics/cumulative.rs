use super::AnalyticsError;

/// Accumulated return through each day: `Π (1 + r_k) − 1`, left to right.
pub fn cumulative_return(daily: &[f64]) -> Result<Vec<f64>, AnalyticsError> {
    let mut growth = 1.0;
    daily
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            if !(r > -1.0) || !r.is_finite() {
                return Err(AnalyticsError::InvalidReturn { index: i, value: r });
            }
            growth *= 1.0 + r;
            Ok(growth - 1.0)
        })
        .collect()
}

/// Accumulated return rebased to zero on the first day of the slice: the
/// first day's own return is not counted.
pub fn rebased_cumulative(daily: &[f64]) -> Result<Vec<f64>, AnalyticsError> {
    match daily.split_first() {
        None => Ok(Vec::new()),
        Some((_, rest)) => {
            let mut out = Vec::with_capacity(daily.len());
            out.push(0.0);
            out.extend(cumulative_return(rest).map_err(|e| e.shift_index(1))?);
            Ok(out)
        }
    }
}
