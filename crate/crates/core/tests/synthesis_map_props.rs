use nalgebra::DMatrix;
use om_core::map_estimation::{solve_map_multistart, Objective};
use om_core::{
    posterior_objective, pushforward_om, solve_map, Basis, BesovParams, CauchyParams, Method, Point,
    Potential, ProductMeasureSpec, SolverOptions, WeightSeq,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn orthonormal(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5).qr().q()
}

fn vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn orthonormal_round_trip(x in vector(8)) {
        let b = Basis::orthonormal(orthonormal(8, 5)).unwrap();
        let back = b.coordinates(&b.synthesize(&x).unwrap()).unwrap();
        for (a, c) in back.iter().zip(&x) {
            prop_assert!((a - c).abs() <= 1e-12 * c.abs().max(1.0));
        }
    }

    #[test]
    fn embedded_round_trip(x in vector(5)) {
        let b = Basis::embedded(9, 5).unwrap();
        prop_assert_eq!(b.coordinates(&b.synthesize(&x).unwrap()).unwrap(), x);
    }

    #[test]
    fn om_invariant_under_isometric_pushforward(x in vector(6)) {
        let spec = ProductMeasureSpec::besov(BesovParams::new(1.0, 1, 2.0, 1.0)).unwrap();
        let om = move |c: &[f64]| -> f64 {
            let h = Point::sparse(c.iter().enumerate().map(|(i, v)| (i + 1, *v)));
            om_core::formal_neg_log_density(&spec, &h, c.len()).unwrap().value
        };
        let direct = om(&x);
        let b = Basis::orthonormal(orthonormal(6, 11)).unwrap();
        let pushed = pushforward_om(om, &b).unwrap();
        let via = pushed(&b.synthesize(&x).unwrap());
        prop_assert!((via - direct).abs() <= 1e-12 * direct.max(1.0));
    }
}

fn convex_cases() -> Vec<(Objective, Method)> {
    let p2 = ProductMeasureSpec::besov(BesovParams::new(1.5, 1, 2.0, 1.0).with_shift(Point::sparse([(1, 0.2)])))
        .unwrap();
    let p1 = ProductMeasureSpec::besov(BesovParams::new(1.0, 1, 1.0, 1.0)).unwrap();
    vec![
        (
            posterior_objective(&p2, Potential::random_linear_gaussian(6, 8, 0.2, 1).unwrap(), 8).unwrap(),
            Method::GradDescent,
        ),
        (
            posterior_objective(&p1, Potential::random_linear_gaussian(6, 8, 0.2, 2).unwrap(), 8).unwrap(),
            Method::ProxGrad,
        ),
        (
            posterior_objective(&p1, Potential::identity(vec![1.0, -0.3, 0.05, 2.0, 0.0, -1.0, 0.4, 0.2], 0.4).unwrap(), 8)
                .unwrap(),
            Method::ProxGrad,
        ),
    ]
}

#[test]
fn map_beats_random_probes() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (j, method) in convex_cases() {
        let r = solve_map(&j, method, &vec![0.0; j.k()], &SolverOptions::default()).unwrap();
        assert!(r.converged);
        for _ in 0..1000 {
            let x: Vec<f64> = r.argmin.iter().map(|a| a + 2.0 * rng.random::<f64>() - 1.0).collect();
            assert!(r.objective <= j.value(&x), "{method:?}");
            let near: Vec<f64> = r.argmin.iter().map(|a| a + 1e-6 * (rng.random::<f64>() - 0.5)).collect();
            assert!(r.objective <= j.value(&near), "{method:?} near");
        }
        assert!(r.objective <= j.value(j.shift()));
    }
}

#[test]
fn objective_trace_is_monotone() {
    for (j, method) in convex_cases() {
        let init = vec![3.0; j.k()];
        let r = solve_map(&j, method, &init, &SolverOptions::default()).unwrap();
        assert_eq!(r.trace[0], j.value(&init));
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]), "{method:?}");
        assert_eq!(*r.trace.last().unwrap(), r.objective);
    }
}

#[test]
fn gradient_matches_central_differences() {
    let specs = [
        ProductMeasureSpec::besov(BesovParams::new(1.5, 1, 2.0, 1.0)).unwrap(),
        ProductMeasureSpec::besov(BesovParams::new(1.5, 1, 1.5, 1.0)).unwrap(),
        ProductMeasureSpec::cauchy(CauchyParams::new(WeightSeq::geometric(2.0, 0.5).unwrap(), 1.0)).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for spec in &specs {
        let j = posterior_objective(spec, Potential::random_linear_gaussian(4, 6, 0.5, 4).unwrap(), 6).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..6).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let g = j.gradient(&x);
            let fd: Vec<f64> = (0..6)
                .map(|i| {
                    let h = 1e-6;
                    let (mut a, mut b) = (x.clone(), x.clone());
                    a[i] += h;
                    b[i] -= h;
                    (j.value(&a) - j.value(&b)) / (2.0 * h)
                })
                .collect();
            let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let err = fd.iter().zip(&g).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err / gmax < 1e-5, "{}: {fd:?} vs {g:?}", spec.label());
        }
    }
}

#[test]
fn best_of_starts_no_worse_than_single() {
    let spec = ProductMeasureSpec::cauchy(CauchyParams::new(WeightSeq::geometric(1.0, 0.5).unwrap(), 1.0)).unwrap();
    let phi = Potential::identity(vec![3.0, -2.5, 0.1, 1.0], 0.3).unwrap();
    let j = posterior_objective(&spec, phi, 4).unwrap();
    let inits = vec![vec![0.0; 4], vec![3.0, -2.5, 0.1, 1.0], vec![-1.0; 4]];
    let (best, runs) = solve_map_multistart(&j, Method::GradDescent, &inits, &SolverOptions::default()).unwrap();
    assert!(runs.iter().all(|r| best.objective <= r.objective));
}
