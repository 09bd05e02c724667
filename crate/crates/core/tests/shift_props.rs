use om_core::shift_density::{hellinger_1d, shift_density_generic};
use om_core::{
    kakutani_product, shepp_test, BesovParams, CauchyParams, Equivalence, McEstimate, Point,
    PowerGeometric, ProductMeasureSpec, ReferenceDensity, SeqExpr, WeightSeq,
};
use proptest::prelude::*;

fn scaled_cauchy(c: f64) -> ProductMeasureSpec {
    ProductMeasureSpec::cauchy(CauchyParams::new(WeightSeq::geometric(2.0 * c, 0.5).unwrap(), 1.0))
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Factors depend on `h_k/γ_k` only: rescaling γ and h together leaves
    /// the product unchanged.
    #[test]
    fn hellinger_factors_scale_invariant(
        h in prop::collection::vec((1usize..20, -2.0f64..2.0), 1..5),
        c in 0.1f64..10.0,
    ) {
        let h = SeqExpr::sparse(h);
        let a = kakutani_product(&scaled_cauchy(1.0), &h, 32);
        let b = kakutani_product(&scaled_cauchy(c), &h.scaled(c), 32);
        prop_assert!((a.log_product - b.log_product).abs() <= 1e-9 * a.log_product.abs().max(1.0));
    }

    #[test]
    fn hellinger_integral_in_unit_interval(v in -30.0f64..30.0, p in 1.0f64..=2.0) {
        for r in [ReferenceDensity::besov(p).unwrap(), ReferenceDensity::cauchy()] {
            let h = hellinger_1d(&r, v);
            prop_assert!(h > 0.0 && h <= 1.0 + 1e-12);
            prop_assert!((h - hellinger_1d(&r, -v)).abs() < 1e-9);
        }
    }
}

fn mean_shift_density(spec: &ProductMeasureSpec, h: &SeqExpr, k: usize, n: usize, seed: u64) -> McEstimate {
    let x = spec.sample(k, n, seed).unwrap();
    let vals: Vec<f64> = x
        .column_iter()
        .map(|col| {
            let p = Point::sparse(col.iter().enumerate().map(|(i, v)| (i + 1, *v)));
            shift_density_generic(spec, h, &p, k).unwrap().value()
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / n as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    McEstimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        n,
        seed,
    }
}

#[test]
fn shift_density_has_unit_mean() {
    let specs = [
        ProductMeasureSpec::besov(BesovParams::new(2.0, 1, 2.0, 1.0)).unwrap(),
        ProductMeasureSpec::besov(BesovParams::new(1.5, 1, 1.5, 1.0)).unwrap(),
        scaled_cauchy(1.0),
    ];
    let h = SeqExpr::sparse([(1, 0.4), (2, -0.1)]);
    for (i, spec) in specs.iter().enumerate() {
        let est = mean_shift_density(spec, &h, 3, 40_000, 100 + i as u64);
        let z = est.z_against(1.0);
        assert!(z.abs() <= 3.0, "{}: mean {} z {z}", spec.label(), est.mean);
    }
}

#[test]
fn zero_shift_density_is_one() {
    let spec = scaled_cauchy(1.0);
    let x = Point::sparse([(1, 0.3), (2, -4.0)]);
    assert_eq!(shift_density_generic(&spec, &SeqExpr::zero(), &x, 4).unwrap().value(), 1.0);
}

#[test]
fn quasi_invariance_exponent_boundary() {
    // γ_k = k^{-2}: h_k/γ_k = k^{-1/2} is not square summable, k^{-0.51} is.
    let spec = ProductMeasureSpec::besov(BesovParams::new(2.0, 1, 2.0, 1.0)).unwrap();
    let reject = SeqExpr::rule(PowerGeometric::power_law(1.0, -2.5));
    let accept = SeqExpr::rule(PowerGeometric::power_law(1.0, -2.51));
    assert_eq!(shepp_test(&spec, &reject, 1000).unwrap().verdict, Equivalence::Singular);
    assert_eq!(shepp_test(&spec, &accept, 1000).unwrap().verdict, Equivalence::Equivalent);
}
