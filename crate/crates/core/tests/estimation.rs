use gsdde_core::exprlang::Expr;
use gsdde_core::registry;
use gsdde_core::scenario::{build_volatility_grid, generate_ensemble, TimeGrid};
use gsdde_core::sublinear::{
    estimate_series, lower_expectation, upper_expectation, Functional, SampleArray,
};
use gsdde_core::{integrate_ensemble, validate_model};
use proptest::prelude::*;

#[test]
fn deterministic_model_has_no_ambiguity() {
    let grid = TimeGrid::new(2.0, 2000).unwrap();
    let (mut model, history) = registry::linear_ou(grid.dt());
    model.noise = Expr::Num(0.0);
    let v = validate_model(model, history, &grid).unwrap();
    let vol = build_volatility_grid(&v.vol, 3).unwrap();
    let paths = integrate_ensemble(&v, &generate_ensemble(&vol, 4, &grid, 9).unwrap()).unwrap();
    let s = estimate_series(&paths, &Functional::AbsPower(1.0)).unwrap();
    for (i, t) in s.times.iter().enumerate() {
        assert_eq!(s.upper[i], s.lower[i]);
        assert!((s.upper[i] - (1.0 - grid.dt()).powi(i as i32)).abs() < 1e-14);
        assert!((s.upper[i] - (-t).exp()).abs() <= grid.dt());
    }
    assert!(s.excluded.iter().all(|&e| e == 0));
}

#[test]
fn classical_limit_second_moment() {
    // σ_lower = σ_upper = 1, so every level is the same classical model;
    // 2 groups of 5000 paths give 10⁴ samples of X(T)².
    let grid = TimeGrid::new(1.0, 1000).unwrap();
    let dt = grid.dt();
    let (model, history) = registry::linear_ou(dt);
    let v = validate_model(model, history, &grid).unwrap();
    let vol = build_volatility_grid(&v.vol, 5000).unwrap();
    let paths = integrate_ensemble(&v, &generate_ensemble(&vol, 2, &grid, 2024).unwrap()).unwrap();

    let finals: Vec<f64> = paths
        .paths()
        .iter()
        .map(|p| p.at(1000).unwrap().powi(2))
        .collect();
    let n = finals.len() as f64;
    let mean = finals.iter().sum::<f64>() / n;
    let sd = (finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let exact = (0..1000).fold(1.0, |e, _| (1.0 - dt).powi(2) * e + dt);
    assert!(
        (mean - exact).abs() <= 3.0 * sd / n.sqrt(),
        "{mean} vs {exact}"
    );

    let s = estimate_series(&paths, &Functional::AbsPower(2.0)).unwrap();
    let gap = s.upper[1000] - s.lower[1000];
    assert!(gap < 3.0 * sd / 5000f64.sqrt(), "gap {gap}");
}

/// Values on the lattice `840 · 2⁻²⁰ ℤ`: with at most 8 entries per group
/// every partial sum and group mean is exactly representable, so the axioms
/// can be asserted without tolerance.
fn lattice_array() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let unit = 840.0 / 1_048_576.0;
    let max = (10.0 / unit) as i64;
    (1usize..=8, 1usize..=8).prop_flat_map(move |(m, n)| {
        let group = prop::collection::vec(-max..=max, m);
        let arr = prop::collection::vec(group, n);
        (arr.clone(), arr).prop_map(move |(a, b)| {
            let scale = |g: Vec<Vec<i64>>| {
                g.into_iter()
                    .map(|row| row.into_iter().map(|v| v as f64 * unit).collect())
                    .collect()
            };
            (scale(a), scale(b))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn sublinear_axioms_hold_exactly((a, b) in lattice_array(), k in 0u32..=32, c in -10i32..=10) {
        let a = SampleArray::from_groups(&a).unwrap();
        let b = SampleArray::from_groups(&b).unwrap();
        let ea = upper_expectation(&a);
        let eb = upper_expectation(&b);

        let hi = a.zip_with(&b, f64::max);
        prop_assert!(ea <= upper_expectation(&hi));

        let constant = a.map(|_| f64::from(c));
        prop_assert_eq!(upper_expectation(&constant), f64::from(c));

        let sum = a.zip_with(&b, |x, y| x + y);
        prop_assert!(upper_expectation(&sum) <= ea + eb);

        let lambda = f64::from(k) / 16.0;
        prop_assert_eq!(upper_expectation(&a.map(|x| lambda * x)), lambda * ea);

        prop_assert_eq!(lower_expectation(&a), -upper_expectation(&a.map(|x| -x)));
    }
}
