//! Onsager–Machlup functionals of product measures: the formal negative
//! log-density `𝔮_{γ,m}(h) = Σ_k 𝔮((h_k − m_k)/γ_k)`, its closed forms for
//! Besov and Cauchy measures, sublevel boxes, and Γ-convergence probes.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::run_blocks;
use crate::numerics::{invert_increasing, KahanSum};
use crate::product_measure::{
    BesovParams, CauchyParams, MeasureConfig, ProductMeasureSpec,
};
use crate::weighted_spaces::{
    certify_series, weighted_norm, Point, PowerGeometric, SeqExpr, SpaceSpec, Verdict, WeightSeq,
};

/// Default truncation for rule-tailed inputs.
pub const DEFAULT_K: usize = 1000;

/// Three-valued membership in `E_{γ,m}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Membership {
    Yes,
    No,
    Unknown,
}

/// Value of an OM functional at one point.
///
/// For finite-support `h − m` the value is exact. With closed-form tails
/// `value` is the partial sum and the exact value lies in
/// `[value, value + tail_bound]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmEvaluation {
    pub value: f64,
    pub in_e: Membership,
    pub partial_sum: f64,
    pub tail_bound: Option<f64>,
    pub k: usize,
}

impl OmEvaluation {
    fn from_cert(partial: f64, tail: Option<f64>, verdict: Verdict, k: usize) -> Self {
        let (value, in_e) = match verdict {
            Verdict::Converges => (partial, Membership::Yes),
            Verdict::Diverges => (f64::INFINITY, Membership::No),
            Verdict::Unknown => (partial, Membership::Unknown),
        };
        Self {
            value,
            in_e,
            partial_sum: partial,
            tail_bound: tail,
            k,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.in_e == Membership::Yes && self.tail_bound == Some(0.0)
    }
}

fn effective_k(d: &SeqExpr, k: usize) -> usize {
    k.max(d.support_end()).max(1)
}

/// `𝔮_{γ,m}(h)` summed over `k ≤ max(K, last sparse index)` plus a tail
/// certificate from the reference's comparison with a power near zero.
pub fn formal_neg_log_density(spec: &ProductMeasureSpec, h: &Point, k: usize) -> Result<OmEvaluation> {
    h.validate()?;
    let d = spec.displacement(h);
    let kk = effective_k(&d, k);
    let r = spec.reference();
    let cert = certify_series(&d, spec.gamma(), |u| r.neg_log(u), r.tail_comparison(), kk);
    Ok(OmEvaluation::from_cert(cert.partial, cert.tail_bound, cert.verdict, kk))
}

/// `‖h − m‖^p_{ℓ^p_γ}`, the OM functional of a Besov measure (no `1/p`
/// prefactor).
pub fn om_besov(params: &BesovParams, h: &Point, k: usize) -> Result<OmEvaluation> {
    h.validate()?;
    let gamma = params.gamma()?;
    let d = h.displacement(&params.m.offset());
    let kk = effective_k(&d, k);
    let space = SpaceSpec::new(params.p, gamma)?;
    let rep = weighted_norm(&d, &space, kk)?;
    Ok(OmEvaluation::from_cert(
        rep.partial_norm.powf(params.p),
        rep.tail_bound,
        rep.verdict,
        kk,
    ))
}

/// `Σ log(1 + γ_k⁻²(h_k − m_k)²)`, finite iff `h − m ∈ ℓ²_γ`.
pub fn om_cauchy(params: &CauchyParams, h: &Point, k: usize) -> Result<OmEvaluation> {
    h.validate()?;
    let d = h.displacement(&params.m.offset());
    let kk = effective_k(&d, k);
    let partial: KahanSum = (1..=kk)
        .map(|i| {
            let u = d.eval(i) / params.gamma.eval(i);
            (u * u).ln_1p()
        })
        .collect();
    let space = SpaceSpec::new(2.0, params.gamma.clone())?;
    let rep = weighted_norm(&d, &space, kk)?;
    // log(1 + u²) ≤ u², so the ℓ²_γ tail bounds the remainder.
    Ok(OmEvaluation::from_cert(partial.value(), rep.tail_bound, rep.verdict, kk))
}

/// Coordinate box `[m_k − γ_k a, m_k + γ_k a]` containing the sublevel set
/// `{h : 𝔮_{γ,m}(h) ≤ t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SublevelBox {
    pub t: f64,
    /// `(𝔮|_{ℝ≥0})⁻¹(t)`, rounded up to the bisection bracket.
    pub a: f64,
    /// `t < 0`: the sublevel set is empty.
    pub empty: bool,
    pub center: SeqExpr,
    pub gamma: WeightSeq,
}

/// Bisection tolerance used when inverting `𝔮`.
pub const INVERSION_TOL: f64 = 1e-12;

impl SublevelBox {
    pub fn interval(&self, k: usize) -> (f64, f64) {
        let m = self.center.eval(k);
        let w = self.gamma.eval(k) * self.a;
        (m - w, m + w)
    }

    /// Whether every coordinate of `x` (given for `k = 1..`) lies in its
    /// interval.
    pub fn contains_prefix(&self, x: &[f64]) -> bool {
        if self.empty {
            return false;
        }
        x.iter().enumerate().all(|(i, v)| {
            let (lo, hi) = self.interval(i + 1);
            lo <= *v && *v <= hi
        })
    }
}

pub fn sublevel_box(spec: &ProductMeasureSpec, t: f64) -> Result<SublevelBox> {
    if t.is_nan() {
        return Err(Error::param("t", "must be a number"));
    }
    let (a, empty) = if t < 0.0 {
        (0.0, true)
    } else {
        let r = spec.reference();
        let a = invert_increasing(|u| r.neg_log(u), t, INVERSION_TOL)?;
        if a.is_infinite() {
            (a, false)
        } else {
            // Round up so that 𝔮(a) ≥ t holds in floating point.
            let mut a = if a > 0.0 { a + INVERSION_TOL } else { a };
            while r.neg_log(a) < t {
                a += INVERSION_TOL;
            }
            (a, false)
        }
    };
    Ok(SublevelBox {
        t,
        a,
        empty,
        center: spec.shift().clone(),
        gamma: spec.gamma().clone(),
    })
}

/// Outcome of [`box_inclusion_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxInclusion {
    pub t: f64,
    pub a: f64,
    pub points: usize,
    pub violations: usize,
    /// Largest `|h_k − m_k| / (γ_k a)` seen.
    pub max_ratio: f64,
}

/// Draw `n` finite-support points with `𝔮_{γ,m}(h) ≤ t` and count those
/// leaving [`SublevelBox`] in some coordinate.
///
/// Each point has a random support size `≤ K` and starts uniform in a cube of
/// half-width `1.5a` (or `10` when `a = ∞`) in `u = (h − m)/γ`; it is halved
/// toward `m` until it enters the sublevel set, so many points sit near its
/// boundary.
pub fn box_inclusion_check(
    spec: &ProductMeasureSpec,
    t: f64,
    n: usize,
    k: usize,
    seed: u64,
) -> Result<BoxInclusion> {
    if k == 0 {
        return Err(Error::param("K", "must be >= 1"));
    }
    let bx = sublevel_box(spec, t)?;
    if bx.empty {
        return Ok(BoxInclusion {
            t,
            a: bx.a,
            points: 0,
            violations: 0,
            max_ratio: 0.0,
        });
    }
    let r = spec.reference();
    let half = if bx.a.is_finite() { 1.5 * bx.a } else { 10.0 };
    let m = spec.shift().prefix(k);
    let g = spec.gamma().prefix(k);
    let blocks = run_blocks(n, seed, |rng, _s, count| {
        let (mut viol, mut worst) = (0usize, 0.0f64);
        let mut u = vec![0.0; k];
        for _ in 0..count {
            let dim = rng.random_range(1..=k);
            for v in u.iter_mut().take(dim) {
                *v = half * (2.0 * rng.random::<f64>() - 1.0);
            }
            let q = |u: &[f64]| -> f64 { u.iter().map(|v| r.neg_log(*v)).sum() };
            while q(&u[..dim]) > t {
                u[..dim].iter_mut().for_each(|v| *v *= 0.5);
            }
            let h: Vec<f64> = (0..dim).map(|i| m[i] + g[i] * u[i]).collect();
            if !bx.contains_prefix(&h) {
                viol += 1;
            }
            if bx.a.is_finite() && bx.a > 0.0 {
                for i in 0..dim {
                    worst = worst.max(((h[i] - m[i]) / (g[i] * bx.a)).abs());
                }
            }
        }
        (viol, worst)
    });
    Ok(BoxInclusion {
        t,
        a: bx.a,
        points: n,
        violations: blocks.iter().map(|b| b.0).sum(),
        max_ratio: blocks.iter().map(|b| b.1).fold(0.0, f64::max),
    })
}

/// `k ↦ d_k · num_k / den_k` for rule-based weights.
pub fn scale_by_weight_ratio(d: &SeqExpr, num: &WeightSeq, den: &WeightSeq) -> SeqExpr {
    let ratio = |k: usize| num.eval(k) / den.eval(k);
    let mut out = SeqExpr::sparse(d.delta.iter().map(|(k, v)| (*k, v * ratio(*k))));
    let tail_ratio = num.tail_form().over(&den.tail_form());
    let start = num.tail_start().max(den.tail_start());
    for t in &d.tail {
        out.tail.push(t.times(&tail_ratio));
        for k in 1..start {
            *out.delta.entry(k).or_insert(0.0) += t.eval(k) * (ratio(k) - tail_ratio.eval(k));
        }
    }
    out.normalized()
}

/// `x^{(n)}_k = m^{(n)}_k + (γ^{(n)}_k / γ^{(∞)}_k)(x_k − m^{(∞)}_k)`, in
/// absolute coordinates.
pub fn recovery_sequence(
    spec_n: &ProductMeasureSpec,
    spec_inf: &ProductMeasureSpec,
    x: &Point,
) -> Point {
    if spec_n == spec_inf {
        return Point::from_seq(spec_inf.resolve(x));
    }
    let d = spec_inf.displacement(x);
    let scaled = scale_by_weight_ratio(&d, spec_n.gamma(), spec_inf.gamma());
    Point::from_seq(spec_n.shift().add(&scaled))
}

/// An `n`-indexed family of measures with its limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeasureFamily {
    /// Besov measures with smoothness `s + 1/n`.
    BesovSmoothness { base: BesovParams },
    /// Cauchy measures with scales `(1 + 1/n) γ`.
    CauchyScale { base: CauchyParams },
    /// Besov measures with shift `m + (1/n) v`.
    BesovShift { base: BesovParams, direction: Point },
    /// The same measure for every `n`.
    Constant { measure: MeasureConfig },
}

impl MeasureFamily {
    pub fn member(&self, n: usize) -> Result<ProductMeasureSpec> {
        if n == 0 {
            return Err(Error::param("n", "family index starts at 1"));
        }
        let inv = 1.0 / n as f64;
        match self {
            MeasureFamily::BesovSmoothness { base } => {
                let mut b = base.clone();
                b.s += inv;
                ProductMeasureSpec::besov(b)
            }
            MeasureFamily::CauchyScale { base } => {
                let mut c = base.clone();
                c.gamma = c.gamma.scaled(1.0 + inv)?;
                ProductMeasureSpec::cauchy(c)
            }
            MeasureFamily::BesovShift { base, direction } => {
                let m = base.m.offset().add(&direction.offset().scaled(inv));
                ProductMeasureSpec::besov(base.clone().with_shift(Point::from_seq(m)))
            }
            MeasureFamily::Constant { measure } => measure.build(),
        }
    }

    pub fn limit(&self) -> Result<ProductMeasureSpec> {
        match self {
            MeasureFamily::BesovSmoothness { base } | MeasureFamily::BesovShift { base, .. } => {
                ProductMeasureSpec::besov(base.clone())
            }
            MeasureFamily::CauchyScale { base } => ProductMeasureSpec::cauchy(base.clone()),
            MeasureFamily::Constant { measure } => measure.build(),
        }
    }
}

/// Grid diagnostics for the Γ-convergence hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyHypotheses {
    pub n: Vec<usize>,
    /// `‖(m^{(n)} − m)_{1:K}‖` in the limit's ambient space.
    pub shift_distance: Vec<f64>,
    /// `max_{k≤K} |γ^{(n)}_k − γ_k|`.
    pub gamma_distance: Vec<f64>,
    /// `max_u 𝔮^{(n)}(u) − 𝔮^{(∞)}(u)` on a grid; must be `≤ 0`.
    pub q_excess: Vec<f64>,
    pub ok: bool,
    pub notes: Vec<String>,
}

fn decays_on_grid(v: &[f64]) -> bool {
    let first = v[0];
    let last = v[v.len() - 1];
    let monotone = v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-300);
    monotone && (first == 0.0 || v.len() < 2 || last < 0.5 * first)
}

/// Validate `m^{(n)} → m`, `γ^{(n)} → γ` and `𝔮^{(n)} ≤ 𝔮^{(∞)}` on the grid.
pub fn check_family(family: &MeasureFamily, n_grid: &[usize], k: usize) -> Result<FamilyHypotheses> {
    if n_grid.is_empty() {
        return Err(Error::param("nGrid", "must not be empty"));
    }
    let limit = family.limit()?;
    let u_grid: Vec<f64> = (0..=400).map(|i| i as f64 * 0.05).collect();
    let mut out = FamilyHypotheses {
        n: n_grid.to_vec(),
        shift_distance: vec![],
        gamma_distance: vec![],
        q_excess: vec![],
        ok: true,
        notes: vec![],
    };
    for n in n_grid {
        let s = family.member(*n)?;
        let dm = s.shift().sub(limit.shift());
        out.shift_distance
            .push(weighted_norm(&dm, limit.ambient(), k)?.partial_norm);
        let dg = (1..=k)
            .map(|i| (s.gamma().eval(i) - limit.gamma().eval(i)).abs())
            .fold(0.0, f64::max);
        out.gamma_distance.push(dg);
        let dq = u_grid
            .iter()
            .map(|u| s.reference().neg_log(*u) - limit.reference().neg_log(*u))
            .fold(f64::NEG_INFINITY, f64::max);
        out.q_excess.push(dq);
    }
    if !decays_on_grid(&out.shift_distance) {
        out.ok = false;
        out.notes.push("shifts do not converge on the grid".into());
    }
    if !decays_on_grid(&out.gamma_distance) {
        out.ok = false;
        out.notes.push("scales do not converge on the grid".into());
    }
    if out.q_excess.iter().any(|e| *e > 1e-12) {
        out.ok = false;
        out.notes.push("reference negative log-densities exceed the limit's".into());
    }
    Ok(out)
}

/// One row of a Γ-probe table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaRow {
    pub n: usize,
    /// `I^{(n)}(x^{(n)})` along the recovery sequence.
    pub i_n_recovery: f64,
    pub i_inf: f64,
    pub gap: f64,
    /// `I^{(n)}(x)` along the constant sequence.
    pub i_n_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaProbe {
    pub rows: Vec<GammaRow>,
    pub hypotheses: FamilyHypotheses,
}

impl GammaProbe {
    pub fn gaps(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.gap).collect()
    }

    /// `|I^{(n)}(x) − I^{(∞)}(x)|` along the constant sequence.
    pub fn constant_gaps(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| (r.i_n_constant - r.i_inf).abs())
            .collect()
    }
}

/// Evaluate the recovery and constant sequences at `x` over `n_grid`.
/// Refuses when the family fails [`check_family`].
pub fn gamma_probe(family: &MeasureFamily, x: &Point, n_grid: &[usize], k: usize) -> Result<GammaProbe> {
    let hypotheses = check_family(family, n_grid, k)?;
    if !hypotheses.ok {
        return Err(Error::hypothesis(format!(
            "family fails the convergence hypotheses: {}",
            hypotheses.notes.join("; ")
        )));
    }
    let limit = family.limit()?;
    let i_inf = formal_neg_log_density(&limit, x, k)?.value;
    let x_abs = Point::from_seq(limit.resolve(x));
    let rows = n_grid
        .par_iter()
        .map(|n| {
            let s = family.member(*n)?;
            let xn = recovery_sequence(&s, &limit, x);
            let rec = formal_neg_log_density(&s, &xn, k)?.value;
            let cst = formal_neg_log_density(&s, &x_abs, k)?.value;
            Ok(GammaRow {
                n: *n,
                i_n_recovery: rec,
                i_inf,
                gap: (rec - i_inf).abs(),
                i_n_constant: cst,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GammaProbe { rows, hypotheses })
}

/// Γ-liminf evidence: `I^{(n)}(x + v/n)` for a fixed direction `v`.
pub fn liminf_probe(
    family: &MeasureFamily,
    x: &Point,
    direction: &SeqExpr,
    n_grid: &[usize],
    k: usize,
) -> Result<Vec<(usize, f64)>> {
    let limit = family.limit()?;
    let base = limit.resolve(x);
    n_grid
        .iter()
        .map(|n| {
            let s = family.member(*n)?;
            let xn = Point::from_seq(base.add(&direction.scaled(1.0 / *n as f64)));
            Ok((*n, formal_neg_log_density(&s, &xn, k)?.value))
        })
        .collect()
}

/// `c · k^e` as a point offset relative to the shift.
pub fn power_offset(c: f64, e: f64) -> Point {
    Point::shifted_by(SeqExpr::rule(PowerGeometric::power_law(c, e)))
}
