use om_core::{BesovParams, CauchyParams, ProductMeasureSpec, ReferenceDensity, WeightSeq};
use proptest::prelude::*;

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn references() -> Vec<ReferenceDensity> {
    vec![
        ReferenceDensity::besov(1.0).unwrap(),
        ReferenceDensity::besov(1.5).unwrap(),
        ReferenceDensity::besov(2.0).unwrap(),
        ReferenceDensity::cauchy(),
    ]
}

fn specs() -> Vec<ProductMeasureSpec> {
    vec![
        ProductMeasureSpec::besov(BesovParams::new(1.0, 1, 1.0, 1.0)).unwrap(),
        ProductMeasureSpec::besov(BesovParams::new(2.0, 1, 2.0, 1.0)).unwrap(),
        ProductMeasureSpec::cauchy(CauchyParams::new(
            WeightSeq::geometric(2.0, 0.5).unwrap(),
            1.0,
        ))
        .unwrap(),
    ]
}

#[test]
fn neg_log_density_is_even_nonnegative_nondecreasing() {
    for r in references() {
        let grid: Vec<f64> = (0..1000).map(|i| i as f64 * 0.02).collect();
        let mut prev = 0.0;
        for u in grid {
            let q = r.neg_log(u);
            assert!(q >= 0.0, "{} at {u}", r.name());
            assert_eq!(q, r.neg_log(-u));
            assert!(q >= prev, "{} not monotone at {u}", r.name());
            prev = q;
        }
        assert_eq!(r.neg_log(0.0), 0.0);
    }
}

#[test]
fn scaled_marginals_match_reference_cdf() {
    let n = 20_000;
    let crit = 1.63 / (n as f64).sqrt();
    for spec in specs() {
        let x = spec.sample(24, n, 99).unwrap();
        for k in [1usize, 3, 7, 16, 24] {
            let (m, g) = (spec.shift().eval(k), spec.gamma().eval(k));
            let row: Vec<f64> = x.row(k - 1).iter().map(|v| (v - m) / g).collect();
            let d = ks_statistic(row, |u| spec.reference().cdf(u));
            assert!(d < crit, "{} k={k}: D={d}", spec.label());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn identical_seeds_give_identical_draws(seed in any::<u64>(), k in 1usize..6, n in 1usize..40_000) {
        for spec in specs() {
            let a = spec.sample(k, n, seed).unwrap();
            let b = spec.sample(k, n, seed).unwrap();
            prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn besov_gamma_summable_in_ambient(s in 0.5f64..4.0, p in 1.0f64..=2.0, eta in 0.05f64..2.0) {
        let spec = ProductMeasureSpec::besov(BesovParams::new(s, 1, p, eta)).unwrap();
        let g = spec.gamma_summability(1000);
        prop_assert_eq!(g.certificate.verdict, om_core::Verdict::Converges);
        // Σ k^{-(1+η)} ≤ 1 + 1/η
        let ub = g.certificate.upper_bound().unwrap();
        prop_assert!(ub <= 1.0 + 1.0 / eta + 1e-9);
        prop_assert!(g.certificate.partial > 1.0 - 1e-12);
    }

    #[test]
    fn besov_density_normalized(p in 1.0f64..=2.0) {
        let r = ReferenceDensity::besov(p).unwrap();
        let q = om_core::numerics::quad::Quadrature::default();
        let mass = q.integrate_real_line(|u| r.density(u), &[0.0]).value;
        prop_assert!((mass - 1.0).abs() < 1e-8);
    }
}
