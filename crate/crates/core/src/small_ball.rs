//! Small-ball masses `μ(B(h, r))` by Monte Carlo and nested quadrature,
//! small-ball ratio experiments, and the one-dimensional integral
//! inequalities behind them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{run_blocks, McEstimate, PairedCounts};
use crate::numerics::quad::Quadrature;
use crate::om_functional::formal_neg_log_density;
use crate::product_measure::ProductMeasureSpec;
use crate::reference::{validate_assumptions, CheckStatus, ReferenceDensity};
use crate::shift_density::shift_density_generic;
use crate::weighted_spaces::{Point, SeqExpr, SpaceSpec};

/// Largest truncation handled by [`quad_ball_mass`].
pub const QUAD_MAX_K: usize = 3;
/// Absolute tolerance of [`quad_ball_mass`].
pub const BALL_QUAD_TOL: f64 = 1e-8;
/// Tolerance of the inequality checks.
pub const LEMMA_TOL: f64 = 1e-9;

/// Open ball `{y : Σ_{k≤K} |(y_k − c_k)/α_k|^p < r^p}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub center: Point,
    pub radius: f64,
    pub metric: SpaceSpec,
    pub k: usize,
}

impl BallSpec {
    pub fn new(center: Point, radius: f64, metric: SpaceSpec, k: usize) -> Result<Self> {
        let b = Self {
            center,
            radius,
            metric,
            k,
        };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::param("r", "radius must be finite and > 0"));
        }
        if self.k == 0 {
            return Err(Error::param("K", "truncation must be >= 1"));
        }
        self.center.validate()
    }
}

struct Geometry {
    m: Vec<f64>,
    g: Vec<f64>,
    alpha: Vec<f64>,
    p: f64,
}

impl Geometry {
    fn new(spec: &ProductMeasureSpec, metric: &SpaceSpec, k: usize) -> Self {
        Self {
            m: spec.shift().prefix(k),
            g: spec.gamma().prefix(k),
            alpha: metric.weights().prefix(k),
            p: metric.p(),
        }
    }

    fn dist_p(&self, x: &[f64], c: &[f64]) -> f64 {
        x.iter()
            .zip(c)
            .zip(&self.alpha)
            .map(|((a, b), w)| ((a - b) / w).abs().powf(self.p))
            .sum()
    }
}

/// Fraction of `n` draws of the first `K` coordinates inside the ball.
pub fn mc_ball_mass(spec: &ProductMeasureSpec, ball: &BallSpec, n: usize, seed: u64) -> Result<McEstimate> {
    Ok(mc_ball_masses(spec, &ball.center, &[ball.radius], &ball.metric, ball.k, n, seed)?[0])
}

/// Ball masses for several radii from one shared set of draws.
pub fn mc_ball_masses(
    spec: &ProductMeasureSpec,
    center: &Point,
    radii: &[f64],
    metric: &SpaceSpec,
    k: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    for r in radii {
        BallSpec::new(center.clone(), *r, metric.clone(), k)?;
    }
    if n == 0 {
        return Err(Error::param("n", "must be >= 1"));
    }
    let geo = Geometry::new(spec, metric, k);
    let c = spec.resolve(center).prefix(k);
    let rp: Vec<f64> = radii.iter().map(|r| r.powf(geo.p)).collect();
    let reference = spec.reference();
    let blocks = run_blocks(n, seed, |rng, _s, count| {
        let mut hits = vec![0usize; rp.len()];
        let mut x = vec![0.0; k];
        for _ in 0..count {
            for i in 0..k {
                x[i] = geo.m[i] + geo.g[i] * reference.sample(rng);
            }
            let d = geo.dist_p(&x, &c);
            for (j, r) in rp.iter().enumerate() {
                if d < *r {
                    hits[j] += 1;
                }
            }
        }
        hits
    });
    Ok((0..rp.len())
        .map(|j| {
            let h: usize = blocks.iter().map(|b| b[j]).sum();
            let mean = h as f64 / n as f64;
            McEstimate {
                mean,
                stderr: (mean * (1.0 - mean) / n as f64).sqrt(),
                n,
                seed,
            }
        })
        .collect())
}

/// Truncated ball mass by nested adaptive quadrature (`K ≤ 3`): each
/// coordinate integrates its marginal density against the mass of the
/// remaining coordinates in the ball of reduced radius
/// `(r^p − Σ|z_j/α_j|^p)^{1/p}`; the innermost level is a CDF difference.
pub fn quad_ball_mass(spec: &ProductMeasureSpec, ball: &BallSpec) -> Result<f64> {
    ball.validate()?;
    if ball.k > QUAD_MAX_K {
        return Err(Error::Unsupported(format!(
            "nested quadrature supports K <= {QUAD_MAX_K}, got {}",
            ball.k
        )));
    }
    let geo = Geometry::new(spec, &ball.metric, ball.k);
    let c = spec.resolve(&ball.center).prefix(ball.k);
    let v = nested_mass(spec.reference(), &geo, &c, 0, ball.radius.powf(geo.p));
    if !v.is_finite() {
        return Err(Error::Numerical("ball quadrature produced a non-finite value".into()));
    }
    Ok(v.clamp(0.0, 1.0))
}

fn nested_mass(r: &ReferenceDensity, geo: &Geometry, c: &[f64], level: usize, budget: f64) -> f64 {
    if budget <= 0.0 {
        return 0.0;
    }
    let half = geo.alpha[level] * budget.powf(1.0 / geo.p);
    let (lo, hi) = (c[level] - half, c[level] + half);
    let (m, g) = (geo.m[level], geo.g[level]);
    if level + 1 == c.len() {
        return r.interval_mass((lo - m) / g, (hi - m) / g);
    }
    // Integrate in the reference variable u = (z − m)/γ.
    let (ulo, uhi) = ((lo - m) / g, (hi - m) / g);
    let tol = BALL_QUAD_TOL * 1e-2 / (c.len() - level) as f64;
    let integrand = |u: f64| {
        let z = m + g * u;
        let used = ((z - c[level]) / geo.alpha[level]).abs().powf(geo.p);
        r.density(u) * nested_mass(r, geo, c, level + 1, budget - used)
    };
    let mut pts = vec![ulo, uhi, (c[level] - m) / g];
    if ulo < 0.0 && 0.0 < uhi {
        pts.push(0.0);
    }
    pts.sort_by(f64::total_cmp);
    Quadrature::with_abs_tol(tol).integrate_breaks(integrand, &pts).value
}

/// One row of a ratio experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub r: f64,
    pub k: usize,
    pub n: usize,
    /// `NaN` when no draw landed in the denominator ball.
    pub est: f64,
    pub stderr: f64,
    pub predicted: f64,
    pub z: f64,
}

/// Ratio `μ̂(B(a, r))/μ̂(B(b, r))` per radius with common draws.
fn paired_ratios(
    spec: &ProductMeasureSpec,
    num_center: &[f64],
    den_center: &[f64],
    r_grid: &[f64],
    k: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<PairedCounts>> {
    if r_grid.is_empty() || r_grid.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::param("rGrid", "radii must be finite and > 0"));
    }
    if n == 0 || k == 0 {
        return Err(Error::param("K, n", "must be >= 1"));
    }
    let geo = Geometry::new(spec, spec.ambient(), k);
    let rp: Vec<f64> = r_grid.iter().map(|r| r.powf(geo.p)).collect();
    let reference = spec.reference();
    let blocks = run_blocks(n, seed, |rng, _s, count| {
        let mut out = vec![PairedCounts::default(); rp.len()];
        let mut x = vec![0.0; k];
        for _ in 0..count {
            for i in 0..k {
                x[i] = geo.m[i] + geo.g[i] * reference.sample(rng);
            }
            let da = geo.dist_p(&x, num_center);
            let db = geo.dist_p(&x, den_center);
            for (j, r) in rp.iter().enumerate() {
                let (a, b) = (da < *r, db < *r);
                out[j].n += 1;
                out[j].num += usize::from(a);
                out[j].den += usize::from(b);
                out[j].both += usize::from(a && b);
            }
        }
        out
    });
    let mut total = vec![PairedCounts::default(); rp.len()];
    for b in &blocks {
        for (t, c) in total.iter_mut().zip(b) {
            t.merge(c);
        }
    }
    Ok(total)
}

fn rows_from_counts(counts: &[PairedCounts], r_grid: &[f64], k: usize, n: usize, predicted: f64) -> Vec<RatioRow> {
    counts
        .iter()
        .zip(r_grid)
        .map(|(c, r)| {
            let (est, stderr) = c.ratio().unwrap_or((f64::NAN, f64::NAN));
            let z = if stderr > 0.0 {
                (est - predicted) / stderr
            } else if est == predicted {
                0.0
            } else {
                f64::NAN
            };
            RatioRow {
                r: *r,
                k,
                n,
                est,
                stderr,
                predicted,
                z,
            }
        })
        .collect()
}

/// Small-ball ratios `μ̂(B(h, r))/μ̂(B(m, r))` in the ambient metric against
/// `exp(−𝔮_{γ,m}(h))`. Requires `h − m` of finite support.
pub fn om_ratio_experiment(
    spec: &ProductMeasureSpec,
    h: &Point,
    r_grid: &[f64],
    k: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<RatioRow>> {
    let d = spec.displacement(h);
    if !d.is_finite_support() {
        return Err(Error::Unsupported(
            "ratio experiments need h - m of finite support".into(),
        ));
    }
    if d.support_end() > k {
        return Err(Error::param("K", "truncation must cover the support of h - m"));
    }
    let predicted = (-formal_neg_log_density(spec, h, k)?.value).exp();
    let hc = spec.resolve(h).prefix(k);
    let mc = spec.shift().prefix(k);
    let counts = paired_ratios(spec, &hc, &mc, r_grid, k, n, seed)?;
    Ok(rows_from_counts(&counts, r_grid, k, n, predicted))
}

/// Ratios `μ̂(B(x* + h, ε))/μ̂(B(x*, ε))` against `r_{−h}(x*)`.
pub fn continuity_ratio_check(
    spec: &ProductMeasureSpec,
    x_star: &Point,
    h: &SeqExpr,
    r_grid: &[f64],
    k: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<RatioRow>> {
    let xs = spec.resolve(x_star);
    if !h.is_finite_support() || !xs.sub(spec.shift()).is_finite_support() {
        return Err(Error::Unsupported(
            "continuity ratios need finite-support x* and h".into(),
        ));
    }
    if h.support_end() > k {
        return Err(Error::param("K", "truncation must cover the support of h"));
    }
    let predicted = shift_density_generic(spec, &h.scaled(-1.0), x_star, k)?.value();
    let num = xs.add(h).prefix(k);
    let den = xs.prefix(k);
    let counts = paired_ratios(spec, &num, &den, r_grid, k, n, seed)?;
    Ok(rows_from_counts(&counts, r_grid, k, n, predicted))
}

/// `μ(B(a, r))/μ(B(b, r))` by nested quadrature.
pub fn quad_ratio(spec: &ProductMeasureSpec, a: &Point, b: &Point, r: f64, k: usize) -> Result<f64> {
    let metric = spec.ambient().clone();
    let na = quad_ball_mass(spec, &BallSpec::new(a.clone(), r, metric.clone(), k)?)?;
    let nb = quad_ball_mass(spec, &BallSpec::new(b.clone(), r, metric, k)?)?;
    Ok(na / nb)
}

/// Even functions that are nonincreasing on `ℝ≥0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SymmetricFn {
    Constant { value: f64 },
    Gaussian { scale: f64 },
    Laplace { scale: f64 },
    Cauchy { scale: f64 },
    Indicator { half_width: f64 },
}

impl SymmetricFn {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            SymmetricFn::Constant { value } => value,
            SymmetricFn::Gaussian { scale } => (-(u / scale).powi(2)).exp(),
            SymmetricFn::Laplace { scale } => (-(u / scale).abs()).exp(),
            SymmetricFn::Cauchy { scale } => 1.0 / (1.0 + (u / scale).powi(2)),
            SymmetricFn::Indicator { half_width } => {
                if u.abs() <= half_width {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Points where the function is not smooth.
    pub fn kinks(&self) -> Vec<f64> {
        match *self {
            SymmetricFn::Laplace { .. } => vec![0.0],
            SymmetricFn::Indicator { half_width } => vec![-half_width, half_width],
            _ => vec![],
        }
    }

    fn params_ok(&self) -> bool {
        match *self {
            SymmetricFn::Constant { value } => value >= 0.0 && value.is_finite(),
            SymmetricFn::Gaussian { scale }
            | SymmetricFn::Laplace { scale }
            | SymmetricFn::Cauchy { scale } => scale > 0.0 && scale.is_finite(),
            SymmetricFn::Indicator { half_width } => half_width > 0.0 && half_width.is_finite(),
        }
    }
}

/// Grid check of evenness and monotone decay on `[0, 20]`.
pub fn has_symmetric_decay(f: &SymmetricFn) -> bool {
    if !f.params_ok() {
        return false;
    }
    let grid: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.01).collect();
    grid.iter().all(|u| f.eval(*u) == f.eval(-*u) && f.eval(*u) >= 0.0)
        && grid.windows(2).all(|w| f.eval(w[1]) <= f.eval(w[0]))
}

/// Both sides of an integral inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

fn integrate_on(f: impl Fn(f64) -> f64, s: f64, extra: &[f64]) -> f64 {
    let mut pts = vec![-s, s];
    pts.extend(extra.iter().copied().filter(|x| x.abs() < s));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    Quadrature::with_abs_tol(LEMMA_TOL * 1e-3)
        .integrate_breaks(f, &pts)
        .value
}

/// `∫_{−s}^{s} f(u + v) g(u) du ≤ ∫_{−s}^{s} f(u) g(u) du` for `f`, `g`
/// with the symmetric decay property.
pub fn lemma_1d_inequality_check(f: &SymmetricFn, g: &SymmetricFn, s: f64, v: f64) -> Result<LemmaCheck> {
    if !has_symmetric_decay(f) || !has_symmetric_decay(g) {
        return Err(Error::hypothesis("f and g must be even and nonincreasing on [0, inf)"));
    }
    if !(s > 0.0 && s.is_finite() && v.is_finite()) {
        return Err(Error::param("s, v", "need finite s > 0 and finite v"));
    }
    let mut pts: Vec<f64> = g.kinks();
    pts.extend(f.kinks().iter().map(|k| k - v));
    pts.push(0.0);
    pts.push(-v);
    let lhs = integrate_on(|u| f.eval(u + v) * g.eval(u), s, &pts);
    let rhs = integrate_on(|u| f.eval(u) * g.eval(u), s, &pts);
    Ok(LemmaCheck {
        lhs,
        rhs,
        pass: lhs <= rhs + LEMMA_TOL,
    })
}

/// `∫_{−s}^{s} e^{−|u+v|^p} Λ(u) du ≥ e^{−|v|^p} ∫_{−s}^{s} e^{−|u|^p} Λ(u) du`.
/// `rhs` carries the `e^{−|v|^p}` factor.
pub fn besov_shift_inequality_check(p: f64, lambda: &SymmetricFn, s: f64, v: f64) -> Result<LemmaCheck> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::param("p", "must lie in [1, 2]"));
    }
    let grid_ok = lambda.params_ok()
        && (0..=2000).all(|i| {
            let u = i as f64 * 0.01;
            lambda.eval(u) == lambda.eval(-u) && lambda.eval(u) >= 0.0
        });
    if !grid_ok {
        return Err(Error::hypothesis("Lambda must be even and nonnegative"));
    }
    if !(s > 0.0 && s.is_finite() && v.is_finite()) {
        return Err(Error::param("s, v", "need finite s > 0 and finite v"));
    }
    let mut pts = lambda.kinks();
    pts.extend([0.0, -v]);
    let lhs = integrate_on(|u| (-(u + v).abs().powf(p)).exp() * lambda.eval(u), s, &pts);
    let base = integrate_on(|u| (-u.abs().powf(p)).exp() * lambda.eval(u), s, &pts);
    let rhs = (-v.abs().powf(p)).exp() * base;
    Ok(LemmaCheck {
        lhs,
        rhs,
        pass: lhs >= rhs - LEMMA_TOL,
    })
}

/// `ζ(v) = (F(v)/F(0) − 1)/v²` for `F(v) = ∫_{−s}^{s} ρ(u + v) Λ(u) du`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorTable {
    pub rows: Vec<(f64, f64)>,
    pub max_abs_zeta: f64,
    /// `M/2` with `M = sup_{|ξ|≤1} |∫ ρ″(u + ξ) Λ(u) du| / F(0)`.
    pub bound: f64,
    /// `F″(0)/(2F(0))` by a second difference with step `1e-2`.
    pub zeta_at_zero: f64,
    pub bounded: bool,
}

pub fn perturbation_taylor_check(
    r: &ReferenceDensity,
    lambda: &SymmetricFn,
    s: f64,
    v_grid: &[f64],
) -> Result<TaylorTable> {
    if validate_assumptions(r).a5 != CheckStatus::Pass {
        return Err(Error::hypothesis(format!(
            "reference '{}' does not pass the smoothness checks",
            r.name()
        )));
    }
    if !has_symmetric_decay(lambda) {
        return Err(Error::hypothesis("Lambda must be even and nonincreasing"));
    }
    if v_grid.iter().any(|v| v.abs() > 1.0) {
        return Err(Error::param("vGrid", "need |v| <= 1"));
    }
    let kinks = lambda.kinks();
    let f = |v: f64| {
        let mut pts = kinks.clone();
        pts.push(0.0);
        integrate_on(|u| r.density(u + v) * lambda.eval(u), s, &pts)
    };
    let f0 = f(0.0);
    let rows: Vec<(f64, f64)> = v_grid
        .iter()
        .filter(|v| **v != 0.0)
        .map(|v| (*v, (f(*v) / f0 - 1.0) / (v * v)))
        .collect();
    let max_abs_zeta = rows.iter().map(|(_, z)| z.abs()).fold(0.0, f64::max);
    let m_sup = (0..=400)
        .map(|i| {
            let xi = -1.0 + i as f64 * 0.005;
            let mut pts = kinks.clone();
            pts.push(0.0);
            integrate_on(|u| r.second_derivative(u + xi) * lambda.eval(u), s, &pts).abs()
        })
        .fold(0.0, f64::max)
        / f0;
    let bound = 0.5 * m_sup;
    let h = 1e-2;
    let zeta_at_zero = (f(h) - 2.0 * f0 + f(-h)) / (h * h) / (2.0 * f0);
    Ok(TaylorTable {
        bounded: max_abs_zeta <= bound * 1.01 + LEMMA_TOL,
        rows,
        max_abs_zeta,
        bound,
        zeta_at_zero,
    })
}

/// One row of [`lemma_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaRow {
    pub suite: String,
    pub case: usize,
    pub detail: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

fn random_symmetric<R: Rng + ?Sized>(rng: &mut R) -> SymmetricFn {
    let scale = 0.2 + 3.0 * rng.random::<f64>();
    match rng.random_range(0..5) {
        0 => SymmetricFn::Constant { value: 0.1 + rng.random::<f64>() },
        1 => SymmetricFn::Gaussian { scale },
        2 => SymmetricFn::Laplace { scale },
        3 => SymmetricFn::Cauchy { scale },
        _ => SymmetricFn::Indicator { half_width: scale },
    }
}

/// Randomized inequality suites from `seed`: `cases` shift-decrease cases,
/// `cases` Besov shift lower-bound cases over `p ∈ {1, 1.5, 2}`, and the
/// Taylor remainder table on a 41-point grid over `[−1, 1]` for the Cauchy
/// and Gaussian references.
pub fn lemma_suite(cases: usize, seed: u64) -> Result<Vec<LemmaRow>> {
    let mut rng = crate::mc::block_rng(seed, 0);
    let mut rows = Vec::new();
    for case in 0..cases {
        let (f, g) = (random_symmetric(&mut rng), random_symmetric(&mut rng));
        let s = 0.1 + 5.0 * rng.random::<f64>();
        let v = 6.0 * rng.random::<f64>() - 3.0;
        let c = lemma_1d_inequality_check(&f, &g, s, v)?;
        rows.push(LemmaRow {
            suite: "lemma-1d".into(),
            case,
            detail: format!("f={f:?} g={g:?} s={s:.6} v={v:.6}"),
            lhs: c.lhs,
            rhs: c.rhs,
            pass: c.pass,
        });
    }
    for case in 0..cases {
        let p = [1.0, 1.5, 2.0][case % 3];
        let lambda = random_symmetric(&mut rng);
        let s = 0.1 + 5.0 * rng.random::<f64>();
        let v = 6.0 * rng.random::<f64>() - 3.0;
        let c = besov_shift_inequality_check(p, &lambda, s, v)?;
        rows.push(LemmaRow {
            suite: "besov-shift".into(),
            case,
            detail: format!("p={p} lambda={lambda:?} s={s:.6} v={v:.6}"),
            lhs: c.lhs,
            rhs: c.rhs,
            pass: c.pass,
        });
    }
    let v_grid: Vec<f64> = (0..=40).map(|i| -1.0 + i as f64 * 0.05).collect();
    let lambda = SymmetricFn::Gaussian { scale: 1.0 };
    for (case, r) in [ReferenceDensity::cauchy(), ReferenceDensity::besov(2.0)?]
        .iter()
        .enumerate()
    {
        let t = perturbation_taylor_check(r, &lambda, 3.0, &v_grid)?;
        for (v, zeta) in &t.rows {
            rows.push(LemmaRow {
                suite: "taylor".into(),
                case,
                detail: format!("ref={} v={v:.2}", r.name()),
                lhs: zeta.abs(),
                rhs: t.bound,
                pass: t.bounded && zeta.abs() <= t.bound * 1.01 + LEMMA_TOL,
            });
        }
    }
    Ok(rows)
}
