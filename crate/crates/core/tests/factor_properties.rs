use factorscope_core::factor::{
    aggregate_portfolio_exposures, decompose, estimate_factor_returns, standardize_exposures, CrossSection,
};
use factorscope_core::N_FACTORS;
use chrono::NaiveDate;
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn caps(n: usize) -> impl Strategy<Value = Array1<f64>> {
    prop::collection::vec(1e6..1e10f64, n).prop_map(Array1::from)
}

fn day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, 1, 4).unwrap()
}

fn cross_section() -> impl Strategy<Value = (Array2<f64>, Array1<f64>, Array1<f64>)> {
    (N_FACTORS + 5..80usize).prop_flat_map(|n| {
        (matrix(n, N_FACTORS, -3.0, 3.0), prop::collection::vec(-0.1..0.1f64, n).prop_map(Array1::from), caps(n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardized_columns_have_zero_value_weighted_mean((raw, cap) in (3..60usize).prop_flat_map(|n| (matrix(n, N_FACTORS, -5.0, 5.0), caps(n)))) {
        let x = standardize_exposures(raw.view(), cap.view()).unwrap();
        let w = &cap / cap.sum();
        for s in 0..N_FACTORS {
            let m: f64 = x.column(s).iter().zip(w.iter()).map(|(a, b)| a * b).sum();
            prop_assert!(m.abs() < 1e-9, "factor {s}: {m}");
        }
    }

    #[test]
    fn standardization_is_idempotent((raw, cap) in (3..60usize).prop_flat_map(|n| (matrix(n, N_FACTORS, -5.0, 5.0), caps(n)))) {
        let once = standardize_exposures(raw.view(), cap.view()).unwrap();
        let twice = standardize_exposures(once.view(), cap.view()).unwrap();
        let worst = once.iter().zip(twice.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn ols_residuals_are_orthogonal_to_exposures((x, r, cap) in cross_section()) {
        let cs = CrossSection::new(day(), x.clone(), r, cap.view()).unwrap();
        let fit = estimate_factor_returns(&cs).unwrap();
        let xtu = x.t().dot(&fit.residuals);
        prop_assert!(xtu.iter().all(|v| v.abs() < 1e-8), "{xtu}");
    }

    #[test]
    fn merged_portfolios_value_weight_their_exposures(
        (x, prices, a, b) in (4..40usize).prop_flat_map(|n| (
            matrix(n, N_FACTORS, -3.0, 3.0),
            prop::collection::vec(1.0..100.0f64, n).prop_map(Array1::from),
            prop::collection::btree_map(0..n, 1.0..1e4f64, 1..n),
            prop::collection::btree_map(0..n, 1.0..1e4f64, 1..n),
        ))
    ) {
        let ha: Vec<(usize, f64)> = a.iter().map(|(&j, &s)| (j, s)).collect();
        let hb: Vec<(usize, f64)> = b.iter().map(|(&j, &s)| (j, s)).collect();
        let mut merged = a.clone();
        for (j, s) in &b {
            *merged.entry(*j).or_default() += s;
        }
        let hm: Vec<(usize, f64)> = merged.into_iter().collect();
        let value = |h: &[(usize, f64)]| h.iter().map(|&(j, s)| s * prices[j]).sum::<f64>();
        let (va, vb) = (value(&ha), value(&hb));
        let ea = aggregate_portfolio_exposures(&ha, prices.view(), x.view()).unwrap();
        let eb = aggregate_portfolio_exposures(&hb, prices.view(), x.view()).unwrap();
        let em = aggregate_portfolio_exposures(&hm, prices.view(), x.view()).unwrap();
        let expected = (&ea * va + &eb * vb) / (va + vb);
        for (m, e) in em.iter().zip(expected.iter()) {
            prop_assert!((m - e).abs() < 1e-12);
        }
    }

    #[test]
    fn decomposition_sums_to_the_observed_return(
        x in prop::collection::vec(-3.0..3.0f64, N_FACTORS),
        f in prop::collection::vec(-0.05..0.05f64, N_FACTORS),
        total in -0.2..0.2f64,
    ) {
        let d = decompose(Array1::from(x).view(), Array1::from(f).view(), total);
        let sum = d.contributions.iter().sum::<f64>() + d.residual;
        prop_assert!((sum - total).abs() < 1e-12);
        prop_assert_eq!(d.total, total);
    }
}

#[test]
fn planted_factor_returns_are_recovered() {
    use factorscope_core::factor::estimate_panel_factor_returns;
    use factorscope_core::synthetic::{generate_synthetic_market, SyntheticConfig};
    let cfg = SyntheticConfig { n_stocks: 80, n_days: 30, n_portfolios: 3, span_max: 25, residual_vol: 0.0, ..SyntheticConfig::default() };
    let m = generate_synthetic_market(&cfg).unwrap();
    let est = estimate_panel_factor_returns(&m.panel).unwrap();
    let truth = m.truth.factor_matrix();
    for (i, d) in est.days.iter().enumerate() {
        let t = m.truth.days.iter().position(|x| x == d).unwrap();
        for s in 0..N_FACTORS {
            assert!((est.returns[[i, s]] - truth[[t, s]]).abs() < 1e-10);
        }
    }
}
