use om_core::weighted_spaces::{embedding_check, Embedding};
use om_core::{weighted_norm, SeqExpr, SpaceSpec, WeightSeq};
use proptest::prelude::*;

fn sparse_point() -> impl Strategy<Value = Vec<(usize, f64)>> {
    prop::collection::vec((1usize..40, -50.0f64..50.0), 1..12)
}

fn space() -> impl Strategy<Value = SpaceSpec> {
    (1.0f64..4.0, 0.1f64..3.0, -2.0f64..2.0).prop_map(|(p, c, e)| {
        SpaceSpec::new(p, WeightSeq::power_law(c, e).unwrap()).unwrap()
    })
}

const K: usize = 40;

fn norm(x: &SeqExpr, s: &SpaceSpec) -> f64 {
    weighted_norm(x, s, K).unwrap().partial_norm
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn norm_is_absolutely_homogeneous(x in sparse_point(), c in -20.0f64..20.0, s in space()) {
        let x = SeqExpr::sparse(x);
        let lhs = norm(&x.scaled(c), &s);
        let rhs = c.abs() * norm(&x, &s);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn triangle_inequality(x in sparse_point(), y in sparse_point(), s in space()) {
        let (x, y) = (SeqExpr::sparse(x), SeqExpr::sparse(y));
        let lhs = norm(&x.add(&y), &s);
        let rhs = norm(&x, &s) + norm(&y, &s);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }

    /// `‖x‖_{ℓ^p_α} ≤ ‖x‖_{ℓ^q_γ} ‖γ‖_{ℓ^{qp/(q−p)}_α}` on truncations.
    #[test]
    fn holder_embedding_bound(
        x in sparse_point(),
        p in 1.0f64..2.5,
        dq in 0.2f64..3.0,
        ge in -3.0f64..-0.5,
        ae in -0.5f64..0.5,
    ) {
        let q = p + dq;
        let gamma = WeightSeq::power_law(1.0, ge).unwrap();
        let alpha = WeightSeq::power_law(1.0, ae).unwrap();
        let Embedding::Embeds { exponent: Some(r), certificate: Some(_), .. } =
            embedding_check(q, &gamma, p, &alpha, K)
        else {
            return Ok(());
        };
        let x = SeqExpr::sparse(x);
        let lhs = norm(&x, &SpaceSpec::new(p, alpha.clone()).unwrap());
        let xq = norm(&x, &SpaceSpec::new(q, gamma.clone()).unwrap());
        let g_r: f64 = (1..=K)
            .map(|k| (gamma.eval(k) / alpha.eval(k)).powf(r))
            .sum::<f64>()
            .powf(1.0 / r);
        prop_assert!(lhs <= xq * g_r * (1.0 + 1e-12));
    }
}

#[test]
fn embedding_holds_for_summable_ratio() {
    // γ_k = k^{-2}, α ≡ 1, p = 1, q = 2: exponent 2, Σ k^{-4} converges.
    let e = embedding_check(
        2.0,
        &WeightSeq::power_law(1.0, -2.0).unwrap(),
        1.0,
        &WeightSeq::unit(),
        100,
    );
    match e {
        Embedding::Embeds { exponent, certificate, .. } => {
            assert_eq!(exponent, Some(2.0));
            let c = certificate.unwrap();
            // π^4/90
            let zeta4 = std::f64::consts::PI.powi(4) / 90.0;
            assert!(c.partial <= zeta4 && zeta4 <= c.upper_bound().unwrap());
        }
        other => panic!("{other:?}"),
    }
}
