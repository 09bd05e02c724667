//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the verdict lines always
//! reach stdout. Exits non-zero if any criterion outside `KNOWN_RED` fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use om_core::map_estimation::{default_method, map_convergence_experiment, posterior_objective, solve_map};
use om_core::om_functional::{box_inclusion_check, gamma_probe};
use om_core::shift_density::{change_of_variables_check, kakutani_product, shepp_test, shift_density_generic};
use om_core::small_ball::{continuity_ratio_check, lemma_suite, mc_ball_masses, om_ratio_experiment, quad_ball_mass, quad_ratio};
use om_core::{
    BallSpec, BesovParams, CauchyParams, Equivalence, MeasureFamily, Method, Point, Potential, PowerGeometric,
    ProductMeasureSpec, SeqExpr, SolverOptions, TestFunctional, Trend, WeightSeq,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria expected to be red; see the README's acceptance section.
const KNOWN_RED: &[u32] = &[8, 11];

const R_GRID: [f64; 4] = [0.5, 0.25, 0.125, 0.0625];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn besov(s: f64, p: f64) -> ProductMeasureSpec {
    ProductMeasureSpec::besov(BesovParams::new(s, 1, p, 1.0)).unwrap()
}

/// Cauchy with `γ_k = 2^{1−k}`, so `γ_1 = 1`.
fn cauchy() -> ProductMeasureSpec {
    ProductMeasureSpec::cauchy(CauchyParams::new(WeightSeq::geometric(2.0, 0.5).unwrap(), 1.0)).unwrap()
}

fn c1_cauchy_ratio() -> Verdict {
    let t0 = Instant::now();
    let s = cauchy();
    let h = Point::sparse([(1, 1.0)]);
    let rows = om_ratio_experiment(&s, &h, &R_GRID, 1, 1_000_000, 11).unwrap();
    let mut worst_z: f64 = 0.0;
    let mut last_quad = f64::NAN;
    for row in &rows {
        let q = quad_ratio(&s, &h, &Point::at_shift(), row.r, 1).unwrap();
        worst_z = worst_z.max(((row.est - q) / row.stderr).abs());
        last_quad = q;
    }
    let secs = t0.elapsed().as_secs_f64();
    let quad_ok = (last_quad - 0.5).abs() <= 2e-3;
    verdict(
        quad_ok && worst_z <= 3.0 && secs < 60.0 && rows[0].predicted == 0.5,
        format!("quad(r=0.0625)={last_quad:.6} max|z| mc vs quad={worst_z:.2} time={secs:.1}s"),
    )
}

fn c2_besov_p1_ratio() -> Verdict {
    let s = besov(1.5, 1.0);
    let g = s.gamma().prefix(2);
    let rows = om_ratio_experiment(&s, &Point::sparse([(1, 0.5)]), &R_GRID, 2, 1_000_000, 12).unwrap();
    let target = (-0.5f64).exp();
    let last = rows.last().unwrap();
    let dev_first = (rows[0].est - target).abs();
    let dev_last = (last.est - target).abs();
    let tol = (3.0 * last.stderr).max(1e-2);
    verdict(
        (g[0] - 1.0).abs() < 1e-15 && (g[1] - 0.5).abs() < 1e-15 && dev_last <= tol && dev_last < dev_first,
        format!(
            "gamma=({}, {}) est {:.4} -> {:.4} target {target:.4} tol {tol:.4}",
            g[0], g[1], rows[0].est, last.est
        ),
    )
}

fn c3_property_m() -> Verdict {
    let cases = [
        ("besov p=1", besov(1.0, 1.0), 21.0),
        ("besov p=2", besov(2.0, 2.0), 5.0),
        ("cauchy", cauchy(), 3.0e4),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, (name, s, u)) in cases.into_iter().enumerate() {
        let g1 = s.gamma().eval(1);
        let h = Point::sparse([(1, u * g1)]);
        let q = om_core::formal_neg_log_density(&s, &h, 1).unwrap().value;
        let rows = om_ratio_experiment(&s, &h, &[0.0625], 1, 1_000_000, 30 + i as u64).unwrap();
        let est = rows[0].est;
        ok &= q > 20.0 && est < 1e-3;
        parts.push(format!("{name}: q={q:.1} ratio={est:.2e}"));
    }
    verdict(ok, parts.join("; "))
}

fn c4_dichotomy() -> Verdict {
    let gauss = besov(2.0, 2.0);
    let lap = besov(1.0, 1.0);
    let mid = besov(1.5, 1.5);
    let cau = cauchy();
    let rel = |s: &ProductMeasureSpec, r: PowerGeometric| s.gamma().times_rule(&r);
    let vectors: Vec<(&str, &ProductMeasureSpec, SeqExpr, Equivalence)> = vec![
        ("gauss h/g=2^-k", &gauss, rel(&gauss, PowerGeometric::geometric(1.0, 0.5)), Equivalence::Equivalent),
        ("gauss h/g=1/k", &gauss, rel(&gauss, PowerGeometric::power_law(1.0, -1.0)), Equivalence::Equivalent),
        ("gauss finite", &gauss, SeqExpr::sparse([(1, 0.5), (3, 0.01)]), Equivalence::Equivalent),
        ("laplace h/g=1/k", &lap, rel(&lap, PowerGeometric::power_law(1.0, -1.0)), Equivalence::Equivalent),
        ("cauchy finite", &cau, SeqExpr::sparse([(1, 1.0), (2, -0.5)]), Equivalence::Equivalent),
        ("cauchy h/g=2^-k", &cau, rel(&cau, PowerGeometric::geometric(1.0, 0.5)), Equivalence::Equivalent),
        ("gauss h/g=k^-1/2", &gauss, rel(&gauss, PowerGeometric::power_law(1.0, -0.5)), Equivalence::Singular),
        ("gauss h/g=1", &gauss, rel(&gauss, PowerGeometric::power_law(1.0, 0.0)), Equivalence::Singular),
        ("laplace h/g=k^-0.4", &lap, rel(&lap, PowerGeometric::power_law(1.0, -0.4)), Equivalence::Singular),
        ("p=1.5 h/g=k^1/2", &mid, rel(&mid, PowerGeometric::power_law(1.0, 0.5)), Equivalence::Singular),
        ("cauchy h/g=1/2", &cau, rel(&cau, PowerGeometric::power_law(0.5, 0.0)), Equivalence::Singular),
        ("cauchy h/g=k", &cau, rel(&cau, PowerGeometric::power_law(1.0, 1.0)), Equivalence::Singular),
    ];
    let k = 256;
    let mut ok = true;
    let mut bad = Vec::new();
    let mut gauss_err: f64 = 0.0;
    for (label, s, h, want) in &vectors {
        let shepp = shepp_test(s, h, k).unwrap().verdict;
        let kak = kakutani_product(s, h, k);
        let expect_trend = if *want == Equivalence::Equivalent {
            Trend::PositiveLimit
        } else {
            Trend::DecayingToZero
        };
        if shepp != *want || kak.trend != expect_trend {
            ok = false;
            bad.push(format!("{label}: {shepp:?}/{:?}", kak.trend));
        }
        if std::ptr::eq(*s, &gauss) {
            let sum: f64 = (1..=k).map(|i| (h.eval(i) / s.gamma().eval(i)).powi(2)).sum();
            gauss_err = gauss_err.max((kak.product - (-0.25 * sum).exp()).abs());
        }
    }
    ok &= gauss_err <= 1e-8;
    verdict(
        ok,
        format!(
            "{} vectors, gaussian product max err {gauss_err:.1e}{}",
            vectors.len(),
            if bad.is_empty() { String::new() } else { format!(", mismatches: {}", bad.join(", ")) }
        ),
    )
}

fn c5_change_of_variables() -> Verdict {
    let triples: Vec<(ProductMeasureSpec, SeqExpr, TestFunctional)> = vec![
        (
            besov(2.0, 2.0),
            SeqExpr::sparse([(1, 0.5)]),
            TestFunctional::SmoothBump { center: vec![0.2, 0.0], width: 0.7 },
        ),
        (
            besov(1.0, 1.0),
            SeqExpr::sparse([(1, 0.3), (2, -0.2)]),
            TestFunctional::BoxIndicator { lo: vec![-0.5, -0.4], hi: vec![0.8, 0.3] },
        ),
        (
            cauchy(),
            SeqExpr::sparse([(1, 1.0)]),
            TestFunctional::BoxIndicator { lo: vec![-1.0], hi: vec![2.0] },
        ),
        (
            besov(1.5, 1.5),
            SeqExpr::sparse([(2, 0.4)]),
            TestFunctional::SmoothBump { center: vec![0.0, 0.1, 0.0], width: 0.5 },
        ),
        (
            cauchy(),
            SeqExpr::sparse([(1, -0.5), (2, 0.25)]),
            TestFunctional::Constant { value: 1.0 },
        ),
    ];
    let mut worst: f64 = 0.0;
    for (i, (s, h, f)) in triples.iter().enumerate() {
        let c = change_of_variables_check(s, h, f, 4, 100_000, 50 + i as u64).unwrap();
        worst = worst.max(c.z.abs());
    }
    let mut identity = true;
    for (i, s) in triples.iter().map(|t| &t.0).enumerate() {
        for x in [Point::zero(), Point::sparse([(1, 0.7), (3, -2.0)]), Point::sparse([(2, 1e3)])] {
            identity &= shift_density_generic(s, &SeqExpr::zero(), &x, 8 + i).unwrap().value() == 1.0;
        }
    }
    verdict(worst <= 3.0 && identity, format!("5 triples max|z|={worst:.2}, r_0 == 1: {identity}"))
}

fn c6_continuity_ratio() -> Verdict {
    let s = cauchy();
    let rows =
        continuity_ratio_check(&s, &Point::zero(), &SeqExpr::unit(1, 1.0), &R_GRID, 1, 1_000_000, 60).unwrap();
    let last = rows.last().unwrap();
    let tol = (3.0 * last.stderr).max(1e-2);
    verdict(
        last.predicted == 0.5 && (last.est - last.predicted).abs() <= tol,
        format!("r_-h(0)={} est(r=0.0625)={:.4} tol {tol:.4}", last.predicted, last.est),
    )
}

fn c7_box_inclusion() -> Verdict {
    let specs = [("p=1", besov(1.0, 1.0)), ("p=2", besov(2.0, 2.0)), ("cauchy", cauchy())];
    let mut violations = 0;
    let mut points = 0;
    let mut max_ratio: f64 = 0.0;
    for (i, (_, s)) in specs.iter().enumerate() {
        for (j, t) in [0.5, std::f64::consts::LN_2, 4.0].into_iter().enumerate() {
            let b = box_inclusion_check(s, t, 10_000, 16, 70 + (3 * i + j) as u64).unwrap();
            violations += b.violations;
            points += b.points;
            max_ratio = max_ratio.max(b.max_ratio);
        }
    }
    verdict(
        violations == 0 && points == 90_000,
        format!("{points} points, {violations} outside the box, max |h-m|/(g a)={max_ratio:.4}"),
    )
}

fn c8_gamma_recovery() -> Verdict {
    let family = MeasureFamily::BesovSmoothness { base: BesovParams::new(2.0, 1, 2.0, 1.0) };
    let x = Point::sparse([(1, 0.5), (2, -0.3), (4, 0.2)]);
    let grid: Vec<usize> = (0..=8).map(|e| 1 << e).collect();
    let probe = gamma_probe(&family, &x, &grid, 64).unwrap();
    let gaps = probe.gaps();
    let strict = gaps.windows(2).all(|w| w[1] < w[0]);
    let last = *gaps.last().unwrap();
    let max_gap = gaps.iter().cloned().fold(0.0, f64::max);
    let cst = probe.constant_gaps();
    let cst_strict = cst.windows(2).all(|w| w[1] < w[0]);
    verdict(
        strict && last < 1e-3,
        format!(
            "recovery gap max {max_gap:.1e} (exact recovery, not strictly decreasing: {}); gap(256)={last:.1e}; \
             constant-sequence gap {:.3e} -> {:.3e} strictly decreasing: {cst_strict}",
            !strict,
            cst[0],
            cst.last().unwrap()
        ),
    )
}

/// `(AᵀA/σ² + diag(2/γ²)) x = Aᵀy/σ² + 2m/γ²` for the Gaussian prior.
fn normal_equations_oracle(s: &ProductMeasureSpec, a: &DMatrix<f64>, y: &DVector<f64>, sigma: f64, k: usize) -> Vec<f64> {
    let g = s.gamma().prefix(k);
    let m = s.shift().prefix(k);
    let s2 = sigma * sigma;
    let mut lhs = a.transpose() * a / s2;
    let mut rhs = a.transpose() * y / s2;
    for i in 0..k {
        lhs[(i, i)] += 2.0 / (g[i] * g[i]);
        rhs[i] += 2.0 * m[i] / (g[i] * g[i]);
    }
    lhs.cholesky().expect("SPD").solve(&rhs).iter().copied().collect()
}

fn c9_map() -> Verdict {
    let k = 32;
    let grid: Vec<usize> = (0..=8).map(|e| 1 << e).collect();
    let opts = SolverOptions {
        tol: 1e-13,
        max_iter: 100_000,
        ..SolverOptions::default()
    };
    let family = MeasureFamily::BesovSmoothness { base: BesovParams::new(2.0, 1, 2.0, 1.0) };
    let phi = Potential::random_linear_gaussian(16, k, 1.0, 7).unwrap();
    let Potential::LinearGaussian { a, y, sigma } = &phi else { unreachable!() };
    let method = default_method(&family.limit().unwrap());
    let conv = map_convergence_experiment(&family, &phi, k, &grid, method, &opts).unwrap();
    let mut oracle_err: f64 = 0.0;
    for (n, map) in grid.iter().zip(&conv.maps) {
        let s = family.member(*n).unwrap();
        let o = normal_equations_oracle(&s, a, y, *sigma, k);
        oracle_err = oracle_err.max(map.iter().zip(&o).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max));
    }
    let dists: Vec<f64> = conv.rows.iter().map(|r| r.dist).collect();
    let decreasing = dists.windows(2).all(|w| w[1] < w[0]);
    let last = *dists.last().unwrap();

    let l1 = MeasureFamily::BesovSmoothness { base: BesovParams::new(1.0, 1, 1.0, 1.0) };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let yv: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
    let sigma1 = 0.5;
    let mut soft_err: f64 = 0.0;
    for n in &grid {
        let s = l1.member(*n).unwrap();
        let j = posterior_objective(&s, Potential::identity(yv.clone(), sigma1).unwrap(), k).unwrap();
        let r = solve_map(&j, Method::ProxGrad, j.shift(), &opts).unwrap();
        let g = s.gamma().prefix(k);
        let m = s.shift().prefix(k);
        for i in 0..k {
            let d = yv[i] - m[i];
            let want = m[i] + d.signum() * (d.abs() - sigma1 * sigma1 / g[i]).max(0.0);
            soft_err = soft_err.max((r.argmin[i] - want).abs());
        }
    }
    verdict(
        oracle_err <= 1e-8 && decreasing && last < 1e-3 && soft_err <= 1e-12,
        format!(
            "p=2: max |map - normal eq|={oracle_err:.1e}, dist {:.2e} -> {last:.2e} decreasing: {decreasing}; \
             p=1 soft-threshold max err {soft_err:.1e}",
            dists[0]
        ),
    )
}

fn c10_lemmas() -> Verdict {
    let rows = lemma_suite(50, 100).unwrap();
    let count = |suite: &str| rows.iter().filter(|r| r.suite == suite).count();
    let failed = rows.iter().filter(|r| !r.pass).count();
    verdict(
        failed == 0 && count("lemma-1d") == 50 && count("besov-shift") == 50 && count("taylor") > 0,
        format!(
            "{} rows ({} 1d, {} besov-shift, {} taylor), {failed} failed",
            rows.len(),
            count("lemma-1d"),
            count("besov-shift"),
            count("taylor")
        ),
    )
}

fn c11_mc_vs_quadrature() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let mut worst = (0.0f64, 0u64);
    let mut cases = Vec::new();
    for case in 0..20u64 {
        let s = match rng.random_range(0..4) {
            0 => besov(1.0 + rng.random::<f64>(), 1.0),
            1 => besov(1.0 + rng.random::<f64>(), 1.5),
            2 => besov(1.0 + rng.random::<f64>(), 2.0),
            _ => cauchy(),
        };
        let k = rng.random_range(1..=2usize);
        let center = Point::sparse((1..=k).map(|i| (i, rng.random_range(-1.0..1.0))));
        let r = rng.random_range(0.2..1.5);
        let ball = BallSpec::new(center.clone(), r, s.ambient().clone(), k).unwrap();
        let q = quad_ball_mass(&s, &ball).unwrap();
        let z = |seed| mc_ball_masses(&s, &center, &[r], s.ambient(), k, 1_000_000, seed).unwrap()[0].z_against(q).abs();
        let z0 = z(1100 + case);
        if z0 > worst.0 {
            worst = (z0, case);
        }
        cases.push((s.clone(), center, r, k, q));
    }
    // Replicates of the worst case separate a biased oracle from a tail draw.
    let (s, center, r, k, q) = &cases[worst.1 as usize];
    let reps: Vec<f64> = (1..=5u64)
        .map(|t| mc_ball_masses(s, center, &[*r], s.ambient(), *k, 1_000_000, 1100 + worst.1 + 1000 * t).unwrap()[0]
            .z_against(*q)
            .abs())
        .collect();
    let rep_max = reps.iter().cloned().fold(0.0, f64::max);
    verdict(
        worst.0 <= 3.0,
        format!(
            "20 cases, max|z|={:.2} at case {}; 5 reseeded replicates of that case max|z|={rep_max:.2}",
            worst.0, worst.1
        ),
    )
}

const SUITE: [&str; 13] = [
    "validate",
    "sample",
    "om-eval",
    "shift-density",
    "dichotomy",
    "small-ball",
    "om-ratio",
    "continuity-ratio",
    "gamma-probe",
    "equicoercivity-box",
    "map",
    "map-converge",
    "lemma-checks",
];

fn run_suite(out: &Path, workers: &str) -> bool {
    let configs = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    SUITE.iter().all(|cmd| {
        let cfg = configs.join(format!("{}.json", cmd.replace('-', "_")));
        Command::new(env!("CARGO_BIN_EXE_omlab"))
            .args([*cmd, "--config", cfg.to_str().unwrap(), "--out"])
            .arg(out.join(cmd))
            .args(["--seed", "2024", "--workers", workers])
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false)
    })
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for cmd in SUITE {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir.join(cmd))
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        files.sort();
        out.extend(files);
    }
    out
}

fn c12_determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    if !run_suite(a.path(), "1") || !run_suite(b.path(), "4") {
        return verdict(false, "a suite command failed".into());
    }
    let fa = csv_files(a.path());
    let mut differ = Vec::new();
    for f in &fa {
        let rel = f.strip_prefix(a.path()).unwrap();
        if std::fs::read(f).ok() != std::fs::read(b.path().join(rel)).ok() {
            differ.push(rel.display().to_string());
        }
    }
    verdict(
        differ.is_empty() && fa.len() == csv_files(b.path()).len(),
        format!("{} csv files over {} commands, 1 vs 4 workers, differing: {:?}", fa.len(), SUITE.len(), differ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Verdict); 12] = [
        (1, "cauchy om ratio", c1_cauchy_ratio),
        (2, "besov p=1 om ratio", c2_besov_p1_ratio),
        (3, "property M", c3_property_m),
        (4, "feldman-hajek dichotomy", c4_dichotomy),
        (5, "change of variables", c5_change_of_variables),
        (6, "continuity ratio", c6_continuity_ratio),
        (7, "sublevel box inclusion", c7_box_inclusion),
        (8, "gamma recovery", c8_gamma_recovery),
        (9, "MAP convergence", c9_map),
        (10, "inequality suites", c10_lemmas),
        (11, "MC vs quadrature", c11_mc_vs_quadrature),
        (12, "determinism", c12_determinism),
    ];
    let mut unexpected = Vec::new();
    for (id, name, f) in criteria {
        let t0 = Instant::now();
        let v = f();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        let known = !v.pass && KNOWN_RED.contains(&id);
        println!(
            "{tag} criterion {id:>2} ({name}): {} [{:.1}s]{}",
            v.detail,
            t0.elapsed().as_secs_f64(),
            if known { " (known red)" } else { "" }
        );
        if !v.pass && !known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
