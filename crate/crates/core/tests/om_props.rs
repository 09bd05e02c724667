use om_core::om_functional::box_inclusion_check;
use om_core::{
    formal_neg_log_density, om_besov, om_cauchy, sublevel_box, BesovParams, CauchyParams, Point,
    ProductMeasureSpec, SeqExpr, WeightSeq,
};
use proptest::prelude::*;

fn offsets() -> impl Strategy<Value = Vec<(usize, f64)>> {
    prop::collection::vec((1usize..30, -3.0f64..3.0), 1..8)
}

fn besov() -> impl Strategy<Value = BesovParams> {
    (
        0.5f64..3.0,
        1.0f64..=2.0,
        0.1f64..1.5,
        prop::collection::vec((1usize..10, -1.0f64..1.0), 0..3),
    )
        .prop_map(|(s, p, eta, m)| BesovParams::new(s, 1, p, eta).with_shift(Point::sparse(m)))
}

fn cauchy() -> impl Strategy<Value = CauchyParams> {
    (0.2f64..3.0, 0.2f64..0.9, prop::collection::vec((1usize..10, -1.0f64..1.0), 0..3))
        .prop_map(|(c, r, m)| {
            CauchyParams::new(WeightSeq::geometric(c, r).unwrap(), 1.0).with_shift(Point::sparse(m))
        })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn besov_closed_form_matches_generic(b in besov(), h in offsets(), shifted in any::<bool>()) {
        let spec = ProductMeasureSpec::besov(b.clone()).unwrap();
        let h = if shifted { Point::shifted_by(SeqExpr::sparse(h)) } else { Point::sparse(h) };
        let closed = om_besov(&b, &h, 30).unwrap().value;
        let generic = formal_neg_log_density(&spec, &h, 30).unwrap().value;
        prop_assert!(close(closed, generic), "{closed} vs {generic}");
    }

    #[test]
    fn cauchy_closed_form_matches_generic(c in cauchy(), h in offsets(), shifted in any::<bool>()) {
        let spec = ProductMeasureSpec::cauchy(c.clone()).unwrap();
        let h = if shifted { Point::shifted_by(SeqExpr::sparse(h)) } else { Point::sparse(h) };
        let closed = om_cauchy(&c, &h, 30).unwrap().value;
        let generic = formal_neg_log_density(&spec, &h, 30).unwrap().value;
        prop_assert!(close(closed, generic), "{closed} vs {generic}");
    }

    #[test]
    fn om_nondecreasing_along_rays(b in besov(), v in offsets(), use_cauchy in any::<bool>(), c in cauchy()) {
        let spec = if use_cauchy {
            ProductMeasureSpec::cauchy(c).unwrap()
        } else {
            ProductMeasureSpec::besov(b).unwrap()
        };
        let v = SeqExpr::sparse(v);
        let mut prev = -1.0;
        for i in 0..=60 {
            let t = i as f64 * 0.1;
            let val = formal_neg_log_density(&spec, &Point::shifted_by(v.scaled(t)), 30).unwrap().value;
            let neg = formal_neg_log_density(&spec, &Point::shifted_by(v.scaled(-t)), 30).unwrap().value;
            prop_assert!(val >= prev && neg >= prev);
            prev = val.min(neg);
        }
    }

    #[test]
    fn sublevel_box_contains_sublevel_points(b in besov(), c in cauchy(), t in 0.0f64..6.0, seed in any::<u64>()) {
        for spec in [ProductMeasureSpec::besov(b.clone()).unwrap(), ProductMeasureSpec::cauchy(c.clone()).unwrap()] {
            let res = box_inclusion_check(&spec, t, 500, 12, seed).unwrap();
            prop_assert_eq!(res.violations, 0);
            prop_assert!(res.max_ratio <= 1.0);
        }
    }
}

#[test]
fn box_inclusion_ten_thousand_points() {
    let specs = [
        ProductMeasureSpec::besov(BesovParams::new(1.0, 1, 1.0, 1.0)).unwrap(),
        ProductMeasureSpec::besov(BesovParams::new(2.0, 1, 2.0, 1.0)).unwrap(),
        ProductMeasureSpec::cauchy(CauchyParams::new(WeightSeq::geometric(2.0, 0.5).unwrap(), 1.0))
            .unwrap(),
    ];
    for spec in &specs {
        for t in [0.5, std::f64::consts::LN_2, 4.0] {
            let r = box_inclusion_check(spec, t, 10_000, 16, 17).unwrap();
            assert_eq!(r.violations, 0, "{} t={t}", spec.label());
            // boundary points are reached
            assert!(r.max_ratio > 0.9, "{} t={t}: {}", spec.label(), r.max_ratio);
        }
    }
}

#[test]
fn sublevel_radius_matches_inverse() {
    let cauchy = ProductMeasureSpec::cauchy(CauchyParams::new(WeightSeq::geometric(2.0, 0.5).unwrap(), 1.0))
        .unwrap();
    // log(1 + a²) = log 2 ⇒ a = 1
    let b = sublevel_box(&cauchy, std::f64::consts::LN_2).unwrap();
    assert!((b.a - 1.0).abs() < 1e-11);
    let l1 = ProductMeasureSpec::besov(BesovParams::new(1.0, 1, 1.0, 1.0)).unwrap();
    assert!((sublevel_box(&l1, 4.0).unwrap().a - 4.0).abs() < 1e-11);
}
