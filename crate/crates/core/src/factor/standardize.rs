use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use super::FactorError;
use crate::catalog::STYLE_FACTORS;

/// Cap-weighted centering and equal-weighted scaling of one day's raw exposures.
///
/// For every factor column the value-weighted mean is subtracted and the
/// result divided by the population standard deviation of the raw column.
/// The value-weighted mean of every output column is therefore zero.
///
/// `raw` is `stocks × factors`; the factor index selects the name reported
/// on a degenerate column.
pub fn standardize_exposures(
    raw: ArrayView2<'_, f64>,
    market_cap: ArrayView1<'_, f64>,
) -> Result<Array2<f64>, FactorError> {
    let (n, k) = raw.dim();
    if n < 2 {
        return Err(FactorError::TooFewStocks { got: n, need: 2 });
    }
    if market_cap.len() != n {
        return Err(FactorError::DimensionMismatch {
            what: "market_cap",
            expected: n,
            actual: market_cap.len(),
        });
    }
    if let Some(j) = market_cap.iter().position(|&c| !(c > 0.0) || !c.is_finite()) {
        return Err(FactorError::NonPositiveWeight { index: j, value: market_cap[j] });
    }
    let total_cap: f64 = market_cap.sum();

    let mut out = Array2::<f64>::zeros((n, k));
    for (s, column) in raw.axis_iter(Axis(1)).enumerate() {
        let vw_mean = column
            .iter()
            .zip(market_cap.iter())
            .map(|(x, c)| x * c)
            .sum::<f64>()
            / total_cap;
        let eq_mean = column.sum() / n as f64;
        let var = column.iter().map(|x| (x - eq_mean).powi(2)).sum::<f64>() / n as f64;
        let sigma = var.sqrt();
        let scale = column.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        if !(sigma > 16.0 * f64::EPSILON * scale) {
            return Err(FactorError::DegenerateFactor { factor: factor_label(s) });
        }
        for (o, x) in out.column_mut(s).iter_mut().zip(column.iter()) {
            *o = (x - vw_mean) / sigma;
        }
    }
    Ok(out)
}

fn factor_label(s: usize) -> &'static str {
    STYLE_FACTORS.get(s).copied().unwrap_or("unnamed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    #[test]
    fn two_stock_closed_form() {
        // size column {1, 3}, equal caps: vw mean 2, population sigma 1
        let mut raw = Array2::<f64>::ones((2, 10));
        raw.column_mut(2).assign(&array![1.0, 3.0]);
        for s in 0..10 {
            if s != 2 {
                raw[[0, s]] = 0.0;
            }
        }
        let out = standardize_exposures(raw.view(), array![5.0, 5.0].view()).unwrap();
        assert!((out[[0, 2]] + 1.0).abs() < 1e-15);
        assert!((out[[1, 2]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fixed_point() {
        // caps 1,1,2 give vw mean 0; dividing by sqrt(2/3) gives sigma 1
        let sigma = (2.0_f64 / 3.0).sqrt();
        let x = array![[1.0_f64], [-1.0], [0.0]].mapv(|v| v / sigma);
        let caps = array![1.0, 1.0, 2.0];
        let out = standardize_exposures(x.view(), caps.view()).unwrap();
        for (a, b) in out.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_is_degenerate() {
        let mut raw = Array2::<f64>::from_shape_fn((4, 10), |(j, s)| (j * 7 + s) as f64 * 0.3);
        raw.column_mut(8).fill(0.1);
        let err = standardize_exposures(raw.view(), Array1::ones(4).view()).unwrap_err();
        match err {
            FactorError::DegenerateFactor { factor } => assert_eq!(factor, "liquidity"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rejects_bad_caps() {
        let raw = Array2::<f64>::from_shape_fn((3, 2), |(j, s)| (j + s) as f64);
        assert!(standardize_exposures(raw.view(), array![1.0, 0.0, 1.0].view()).is_err());
        assert!(standardize_exposures(raw.view(), array![1.0, 1.0].view()).is_err());
        assert!(standardize_exposures(raw.slice(ndarray::s![0..1, ..]), array![1.0].view()).is_err());
    }
}
