//! Quasi-invariance of product measures under shifts: the Shepp criterion,
//! Hellinger integrals and Kakutani products, and shift densities `r_h`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{run_blocks, Moments};
use crate::numerics::quad::Quadrature;
use crate::numerics::KahanSum;
use crate::product_measure::{BesovParams, CauchyParams, ProductMeasureSpec};
use crate::reference::{fisher_information, ReferenceDensity};
use crate::weighted_spaces::{certify_series, Point, SeqExpr, TermComparison, Verdict};

/// Default truncation for Kakutani trends.
pub const KAKUTANI_K: usize = 256;
/// Absolute tolerance of [`hellinger_1d`].
pub const HELLINGER_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Equivalence {
    Equivalent,
    Singular,
    Undecided,
}

/// Outcome of [`shepp_test`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DichotomyVerdict {
    pub verdict: Equivalence,
    /// `Σ_{k≤K} (h_k/γ_k)²`.
    pub partial_sum: f64,
    pub tail_bound: Option<f64>,
    pub k: usize,
}

fn require_finite_fisher(r: &ReferenceDensity) -> Result<()> {
    if r.is_builtin() {
        return Ok(());
    }
    if fisher_information(r).finite {
        Ok(())
    } else {
        Err(Error::hypothesis(format!(
            "reference '{}' has infinite Fisher information",
            r.name()
        )))
    }
}

/// Decide `h ∈ ℓ²_γ` (equivalently `μ_h ∼ μ`).
pub fn shepp_test(spec: &ProductMeasureSpec, h: &SeqExpr, k: usize) -> Result<DichotomyVerdict> {
    require_finite_fisher(spec.reference())?;
    let kk = k.max(h.support_end()).max(1);
    let cmp = TermComparison {
        power: 2.0,
        upper: 1.0,
    };
    let cert = certify_series(h, spec.gamma(), |u| u * u, Some(cmp), kk);
    let verdict = match cert.verdict {
        Verdict::Converges => Equivalence::Equivalent,
        Verdict::Diverges => Equivalence::Singular,
        Verdict::Unknown => Equivalence::Undecided,
    };
    Ok(DichotomyVerdict {
        verdict,
        partial_sum: cert.partial,
        tail_bound: cert.tail_bound,
        k: kk,
    })
}

/// `1 − H = ½ ∫ (√ρ(u) − √ρ(u − shift))² du`, integrated in this form so
/// small shifts keep their relative accuracy.
pub fn hellinger_defect(r: &ReferenceDensity, shift: f64) -> f64 {
    if shift == 0.0 {
        return 0.0;
    }
    let f = |u: f64| {
        let (la, lb) = (r.log_density(u), r.log_density(u - shift));
        if la == f64::NEG_INFINITY && lb == f64::NEG_INFINITY {
            return 0.0;
        }
        // √a − √b = √a (1 − e^{(lb − la)/2}), evaluated from the larger side
        let (hi, lo) = if la >= lb { (la, lb) } else { (lb, la) };
        let d = (0.5 * hi).exp() * (-(0.5 * (lo - hi)).exp_m1());
        d * d
    };
    let scale = (shift * shift).min(1.0);
    let q = Quadrature {
        abs_tol: HELLINGER_TOL * 1e-2 * scale,
        rel_tol: 1e-12,
        ..Quadrature::default()
    };
    (0.5 * q.integrate_real_line(f, &[0.0, 0.5 * shift, shift]).value).clamp(0.0, 1.0)
}

fn hellinger_direct(r: &ReferenceDensity, shift: f64) -> f64 {
    let f = |u: f64| (0.5 * (r.log_density(u) + r.log_density(u - shift))).exp();
    let q = Quadrature {
        abs_tol: 0.0,
        rel_tol: 1e-10,
        ..Quadrature::default()
    };
    q.integrate_real_line(f, &[0.0, 0.5 * shift, shift]).value.clamp(0.0, 1.0)
}

/// `∫ √(ρ(u) ρ(u − shift)) du`.
pub fn hellinger_1d(r: &ReferenceDensity, shift: f64) -> f64 {
    let d = hellinger_defect(r, shift);
    if d < 0.5 {
        1.0 - d
    } else {
        hellinger_direct(r, shift)
    }
}

/// `−log H`, accurate at both ends.
fn neg_log_hellinger(r: &ReferenceDensity, shift: f64) -> f64 {
    let d = hellinger_defect(r, shift);
    if d < 0.5 {
        -(-d).ln_1p()
    } else {
        -hellinger_direct(r, shift).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trend {
    PositiveLimit,
    DecayingToZero,
    Undecided,
}

/// Partial Kakutani product and its trend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KakutaniReport {
    pub log_product: f64,
    pub product: f64,
    pub trend: Trend,
    pub k: usize,
    /// Ratios of successive dyadic block sums of `−log H_k`.
    pub block_ratios: Vec<f64>,
}

/// Block ratio at or below which the product is taken to converge.
pub const POSITIVE_RATIO: f64 = 0.9;
/// Block ratio at or above which the product is taken to vanish.
pub const DECAYING_RATIO: f64 = 0.995;

/// `∏_{k≤K} H(ρ, h_k/γ_k)` with a trend read off dyadic blocks of the
/// log-terms: block sums over `(2^b, 2^{b+1}]` shrinking geometrically point
/// to a positive limit, non-shrinking ones to zero.
pub fn kakutani_product(spec: &ProductMeasureSpec, h: &SeqExpr, k: usize) -> KakutaniReport {
    let k = k.max(1);
    let r = spec.reference();
    let neg_logs: Vec<f64> = (1..=k)
        .map(|i| {
            let u = h.eval(i) / spec.gamma().eval(i);
            neg_log_hellinger(r, u)
        })
        .collect();
    let total: KahanSum = neg_logs.iter().copied().collect();
    let log_product = -total.value();

    let mut blocks = Vec::new();
    let mut lo = 8;
    while 2 * lo <= k {
        let s: f64 = neg_logs[lo..2 * lo].iter().sum();
        blocks.push(s);
        lo *= 2;
    }
    let block_ratios: Vec<f64> = blocks
        .windows(2)
        .map(|w| if w[0] == 0.0 { if w[1] == 0.0 { 0.0 } else { f64::INFINITY } } else { w[1] / w[0] })
        .collect();
    let last: Vec<f64> = block_ratios.iter().rev().take(2).copied().collect();
    let trend = if log_product < -700.0 {
        Trend::DecayingToZero
    } else if last.is_empty() {
        Trend::Undecided
    } else if last.iter().all(|q| *q <= POSITIVE_RATIO) {
        Trend::PositiveLimit
    } else if last.iter().all(|q| *q >= DECAYING_RATIO) {
        Trend::DecayingToZero
    } else {
        Trend::Undecided
    };
    KakutaniReport {
        log_product,
        product: log_product.exp(),
        trend,
        k,
        block_ratios,
    }
}

/// Whether a Kakutani trend and a Shepp verdict agree.
pub fn dichotomy_agrees(shepp: Equivalence, trend: Trend) -> bool {
    matches!(
        (shepp, trend),
        (Equivalence::Equivalent, Trend::PositiveLimit) | (Equivalence::Singular, Trend::DecayingToZero)
    )
}

/// `log r_h(x)` with its summands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftDensityEval {
    pub log_value: f64,
    pub k: usize,
    pub per_term_log: Vec<f64>,
}

impl ShiftDensityEval {
    fn from_terms(per_term_log: Vec<f64>) -> Self {
        let s: KahanSum = per_term_log.iter().copied().collect();
        Self {
            log_value: s.value(),
            k: per_term_log.len(),
            per_term_log,
        }
    }

    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

fn density_inputs(
    spec: &ProductMeasureSpec,
    h: &SeqExpr,
    x: &Point,
    k: usize,
) -> Result<(usize, SeqExpr)> {
    let v = shepp_test(spec, h, k)?;
    if v.verdict != Equivalence::Equivalent {
        return Err(Error::hypothesis(
            "shift is not certified to lie in the quasi-invariance space",
        ));
    }
    x.validate()?;
    let kk = if h.is_finite_support() {
        k.max(h.support_end()).max(1)
    } else {
        k.max(1)
    };
    Ok((kk, spec.displacement(x)))
}

/// `log r_h(x) = Σ_k log ρ((x_k − m_k − h_k)/γ_k) − log ρ((x_k − m_k)/γ_k)`.
pub fn shift_density_generic(
    spec: &ProductMeasureSpec,
    h: &SeqExpr,
    x: &Point,
    k: usize,
) -> Result<ShiftDensityEval> {
    let (kk, d) = density_inputs(spec, h, x, k)?;
    let r = spec.reference();
    let terms = (1..=kk)
        .map(|i| {
            let g = spec.gamma().eval(i);
            let u = d.eval(i) / g;
            let v = (d.eval(i) - h.eval(i)) / g;
            r.neg_log(u) - r.neg_log(v)
        })
        .collect();
    Ok(ShiftDensityEval::from_terms(terms))
}

/// Besov closed form `Σ γ_k^{−p}(|x_k − m_k|^p − |x_k − m_k − h_k|^p)`.
pub fn shift_density_besov(
    params: &BesovParams,
    h: &SeqExpr,
    x: &Point,
    k: usize,
) -> Result<ShiftDensityEval> {
    let spec = ProductMeasureSpec::besov(params.clone())?;
    let (kk, d) = density_inputs(&spec, h, x, k)?;
    let p = params.p;
    let terms = (1..=kk)
        .map(|i| {
            let g = spec.gamma().eval(i);
            let a = d.eval(i);
            (a.abs().powf(p) - (a - h.eval(i)).abs().powf(p)) / g.powf(p)
        })
        .collect();
    Ok(ShiftDensityEval::from_terms(terms))
}

/// Cauchy closed form `Σ log(((x_k − m_k)² + γ_k²) / ((x_k − m_k − h_k)² + γ_k²))`.
pub fn shift_density_cauchy(
    params: &CauchyParams,
    h: &SeqExpr,
    x: &Point,
    k: usize,
) -> Result<ShiftDensityEval> {
    let spec = ProductMeasureSpec::cauchy(params.clone())?;
    let (kk, d) = density_inputs(&spec, h, x, k)?;
    let terms = (1..=kk)
        .map(|i| {
            let g2 = params.gamma.eval(i).powi(2);
            let a = d.eval(i);
            let b = a - h.eval(i);
            ((a * a + g2) / (b * b + g2)).ln()
        })
        .collect();
    Ok(ShiftDensityEval::from_terms(terms))
}

/// Bounded test functionals on the first coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunctional {
    Constant { value: f64 },
    /// Indicator of `∏_k [lo_k, hi_k]` over `k = 1..=lo.len()`.
    BoxIndicator { lo: Vec<f64>, hi: Vec<f64> },
    /// `exp(−Σ_k ((x_k − c_k)/width)²)`.
    SmoothBump { center: Vec<f64>, width: f64 },
}

impl TestFunctional {
    pub fn dimension(&self) -> usize {
        match self {
            TestFunctional::Constant { .. } => 0,
            TestFunctional::BoxIndicator { lo, .. } => lo.len(),
            TestFunctional::SmoothBump { center, .. } => center.len(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunctional::Constant { value } => *value,
            TestFunctional::BoxIndicator { lo, hi } => {
                let inside = lo
                    .iter()
                    .zip(hi)
                    .zip(x)
                    .all(|((a, b), v)| *a <= *v && *v <= *b);
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunctional::SmoothBump { center, width } => {
                let s: f64 = center
                    .iter()
                    .zip(x)
                    .map(|(c, v)| ((v - c) / width).powi(2))
                    .sum();
                (-s).exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            TestFunctional::BoxIndicator { lo, hi } if lo.len() != hi.len() => {
                Err(Error::param("f", "box bounds must have equal length"))
            }
            TestFunctional::SmoothBump { width, .. } if !(*width > 0.0) => {
                Err(Error::param("f", "width must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// `E[f(x) r_h(x)]` against `E[f(x + h)]` for `x ∼ μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeOfVariables {
    pub lhs: f64,
    pub rhs: f64,
    /// Standard error of the paired difference `f(x) r_h(x) − f(x + h)`.
    pub stderr: f64,
    pub z: f64,
    pub n: usize,
    pub seed: u64,
}

/// Monte Carlo check of `∫ f r_h dμ = ∫ f(· + h) dμ`, using the same draw
/// for both sides.
pub fn change_of_variables_check(
    spec: &ProductMeasureSpec,
    h: &SeqExpr,
    f: &TestFunctional,
    k: usize,
    n: usize,
    seed: u64,
) -> Result<ChangeOfVariables> {
    f.validate()?;
    if !h.is_finite_support() {
        return Err(Error::Unsupported(
            "change of variables needs a finite-support shift".into(),
        ));
    }
    let v = shepp_test(spec, h, k)?;
    if v.verdict != Equivalence::Equivalent {
        return Err(Error::hypothesis("shift is not in the quasi-invariance space"));
    }
    if n < 2 {
        return Err(Error::param("n", "need at least two draws"));
    }
    let kk = k.max(h.support_end()).max(f.dimension()).max(1);
    let m = spec.shift().prefix(kk);
    let g = spec.gamma().prefix(kk);
    let hp = h.prefix(kk);
    let r = spec.reference();
    let blocks = run_blocks(n, seed, |rng, _s, count| {
        let (mut lhs, mut rhs, mut diff) = (Moments::default(), Moments::default(), Moments::default());
        let mut x = vec![0.0; kk];
        let mut xh = vec![0.0; kk];
        for _ in 0..count {
            let mut log_r = 0.0;
            for i in 0..kk {
                let u = r.sample(rng);
                x[i] = m[i] + g[i] * u;
                xh[i] = x[i] + hp[i];
                if hp[i] != 0.0 {
                    log_r += r.neg_log(u) - r.neg_log(u - hp[i] / g[i]);
                }
            }
            let a = f.eval(&x) * log_r.exp();
            let b = f.eval(&xh);
            lhs.push(a);
            rhs.push(b);
            diff.push(a - b);
        }
        (lhs, rhs, diff)
    });
    let (mut lhs, mut rhs, mut diff) = (Moments::default(), Moments::default(), Moments::default());
    for (a, b, c) in &blocks {
        lhs.merge(a);
        rhs.merge(b);
        diff.merge(c);
    }
    let d = diff.estimate(seed);
    let z = if d.stderr > 0.0 {
        d.mean / d.stderr
    } else if d.mean == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(ChangeOfVariables {
        lhs: lhs.mean(),
        rhs: rhs.mean(),
        stderr: d.stderr,
        z,
        n,
        seed,
    })
}
