use ndarray::{Array1, ArrayView1, ArrayView2};

use super::FactorError;
use crate::catalog::N_SECTORS;

/// Position values `shares × price` for each held stock.
pub fn position_values(
    holdings: &[(usize, f64)],
    prices: ArrayView1<'_, f64>,
) -> Result<Vec<(usize, f64)>, FactorError> {
    holdings
        .iter()
        .map(|&(j, shares)| {
            let price = *prices.get(j).ok_or(FactorError::UnknownStockIndex(j))?;
            if !(price > 0.0) || !price.is_finite() {
                return Err(FactorError::MissingData { stock: j, field: "price" });
            }
            Ok((j, shares * price))
        })
        .collect()
}

/// Value-weighted average of member exposures for positions given in value terms.
pub fn weighted_exposures(
    values: &[(usize, f64)],
    std_exposures: ArrayView2<'_, f64>,
) -> Result<Array1<f64>, FactorError> {
    let total: f64 = values.iter().map(|(_, v)| v).sum();
    if !(total > 0.0) {
        return Err(FactorError::EmptyPortfolio);
    }
    let mut out = Array1::<f64>::zeros(std_exposures.ncols());
    for &(j, v) in values {
        if j >= std_exposures.nrows() {
            return Err(FactorError::UnknownStockIndex(j));
        }
        let row = std_exposures.row(j);
        if row.iter().any(|x| !x.is_finite()) {
            return Err(FactorError::MissingData { stock: j, field: "exposure" });
        }
        out.scaled_add(v / total, &row);
    }
    Ok(out)
}

/// Portfolio exposure vector: the value-weighted average of member stock exposures.
/// Cash does not enter the weights.
pub fn aggregate_portfolio_exposures(
    holdings: &[(usize, f64)],
    prices: ArrayView1<'_, f64>,
    std_exposures: ArrayView2<'_, f64>,
) -> Result<Array1<f64>, FactorError> {
    let values = position_values(holdings, prices)?;
    weighted_exposures(&values, std_exposures)
}

/// Sector weights and cash fraction, each a share of total value including cash.
///
/// The returned vector has `N_SECTORS + 1` entries; the last is the cash
/// fraction and the entries sum to one.
pub fn aggregate_sector_positions(
    holdings: &[(usize, f64)],
    prices: ArrayView1<'_, f64>,
    sectors: &[usize],
    cash: f64,
) -> Result<Array1<f64>, FactorError> {
    if !(cash >= 0.0) {
        return Err(FactorError::NegativeCash(cash));
    }
    let values = position_values(holdings, prices)?;
    let stock_total: f64 = values.iter().map(|(_, v)| v).sum();
    if !(stock_total > 0.0) {
        return Err(FactorError::EmptyPortfolio);
    }
    let total = stock_total + cash;
    let mut out = Array1::<f64>::zeros(N_SECTORS + 1);
    for (j, v) in values {
        let sector = *sectors.get(j).ok_or(FactorError::UnknownStockIndex(j))?;
        out[sector] += v / total;
    }
    out[N_SECTORS] = cash / total;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn exposures(rows: &[[f64; 2]]) -> Array2<f64> {
        Array2::from_shape_fn((rows.len(), 2), |(j, s)| rows[j][s])
    }

    #[test]
    fn symmetric_pair_cancels() {
        let x = exposures(&[[1.0, 0.5], [-1.0, 0.5]]);
        let out = aggregate_portfolio_exposures(&[(0, 10.0), (1, 5.0)], array![1.0, 2.0].view(), x.view())
            .unwrap();
        assert_eq!(out[0], 0.0);
        assert!((out[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_stock_is_its_exposure() {
        let x = exposures(&[[0.3, -0.7], [2.0, 2.0]]);
        let out =
            aggregate_portfolio_exposures(&[(0, 3.0)], array![7.0, 1.0].view(), x.view()).unwrap();
        assert_eq!(out.to_vec(), vec![0.3, -0.7]);
    }

    #[test]
    fn weighted_momentum() {
        // values 100/200/700, exposures 0.1/0.2/0.3: 0.01 + 0.04 + 0.21 = 0.26
        let x = exposures(&[[0.1, 0.0], [0.2, 0.0], [0.3, 0.0]]);
        let out = aggregate_portfolio_exposures(
            &[(0, 10.0), (1, 20.0), (2, 70.0)],
            array![10.0, 10.0, 10.0].view(),
            x.view(),
        )
        .unwrap();
        assert!((out[0] - 0.26).abs() < 1e-15);
    }

    #[test]
    fn empty_portfolio() {
        let x = exposures(&[[0.1, 0.0]]);
        assert!(matches!(
            aggregate_portfolio_exposures(&[], array![1.0].view(), x.view()),
            Err(FactorError::EmptyPortfolio)
        ));
        assert!(matches!(
            aggregate_portfolio_exposures(&[(0, 0.0)], array![1.0].view(), x.view()),
            Err(FactorError::EmptyPortfolio)
        ));
    }

    #[test]
    fn missing_exposure_fails() {
        let x = exposures(&[[f64::NAN, 0.0]]);
        assert!(matches!(
            aggregate_portfolio_exposures(&[(0, 1.0)], array![1.0].view(), x.view()),
            Err(FactorError::MissingData { field: "exposure", .. })
        ));
    }

    #[test]
    fn sector_single_and_cash() {
        let sectors = vec![4, 4, 9];
        let prices = array![1.0, 1.0, 1.0];
        let out = aggregate_sector_positions(&[(0, 10.0), (1, 5.0)], prices.view(), &sectors, 0.0).unwrap();
        assert_eq!(out[4], 1.0);
        assert_eq!(out.sum(), 1.0);

        let out = aggregate_sector_positions(&[(0, 900.0)], prices.view(), &sectors, 100.0).unwrap();
        assert!((out[N_SECTORS] - 0.1).abs() < 1e-15);

        // 300 in sector 4, 500 in sector 9, cash 200
        let out =
            aggregate_sector_positions(&[(0, 300.0), (2, 500.0)], prices.view(), &sectors, 200.0).unwrap();
        assert!((out[4] - 0.3).abs() < 1e-15);
        assert!((out[9] - 0.5).abs() < 1e-15);
        assert!((out[N_SECTORS] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn negative_cash_rejected() {
        let out = aggregate_sector_positions(&[(0, 1.0)], array![1.0].view(), &[0], -1.0);
        assert!(matches!(out, Err(FactorError::NegativeCash(_))));
    }

    proptest! {
        #[test]
        fn merging_value_weights_exposures(
            a in proptest::collection::vec((0usize..6, 0.1f64..100.0), 1..5),
            b in proptest::collection::vec((0usize..6, 0.1f64..100.0), 1..5),
        ) {
            let x = Array2::from_shape_fn((6, 3), |(j, s)| ((j * 3 + s) as f64).sin());
            let prices = Array1::from_shape_fn(6, |j| 1.0 + j as f64);
            let va: f64 = a.iter().map(|(j, n)| n * prices[*j]).sum();
            let vb: f64 = b.iter().map(|(j, n)| n * prices[*j]).sum();
            let ea = aggregate_portfolio_exposures(&a, prices.view(), x.view()).unwrap();
            let eb = aggregate_portfolio_exposures(&b, prices.view(), x.view()).unwrap();
            let merged: Vec<_> = a.iter().chain(b.iter()).copied().collect();
            let em = aggregate_portfolio_exposures(&merged, prices.view(), x.view()).unwrap();
            for s in 0..3 {
                let expect = (va * ea[s] + vb * eb[s]) / (va + vb);
                prop_assert!((em[s] - expect).abs() < 1e-12);
            }
        }
    }
}
