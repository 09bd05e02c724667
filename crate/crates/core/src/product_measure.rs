//! Product measures `μ = ⊗_k μ₀(γ_k⁻¹(· − m_k))` on a weighted sequence
//! space, with the Besov and Cauchy parameterizations.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::run_blocks;
use crate::reference::{validate_assumptions, RefSpec, ReferenceDensity};
use crate::weighted_spaces::{
    certify_series, power_term, weighted_norm, Base, Point, SeqExpr, SeriesCertificate, SpaceSpec,
    TermComparison, Verdict, WeightSeq,
};

/// Partial sums used by construction-time certificates.
pub const CERT_TERMS: usize = 1000;

/// Besov-p parameters: smoothness `s`, dimension `d`, integrability `p`,
/// support slack `η`, shift `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BesovParams {
    pub s: f64,
    pub d: u32,
    pub p: f64,
    pub eta: f64,
    #[serde(default)]
    pub m: Point,
}

impl BesovParams {
    pub fn new(s: f64, d: u32, p: f64, eta: f64) -> Self {
        Self {
            s,
            d,
            p,
            eta,
            m: Point::zero(),
        }
    }

    pub fn with_shift(mut self, m: Point) -> Self {
        self.m = m;
        self
    }

    /// `τ = (s/d + 1/2)⁻¹`; only meaningful when `s/d + 1/2 > 0`.
    pub fn tau(&self) -> f64 {
        1.0 / (self.s / self.d as f64 + 0.5)
    }

    /// `t = s − d(1 + η)/p`.
    pub fn t(&self) -> f64 {
        self.s - self.d as f64 * (1.0 + self.eta) / self.p
    }

    fn check(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::param("d", "must be a positive integer"));
        }
        if !(self.s.is_finite() && self.s / self.d as f64 + 0.5 > 0.0) {
            return Err(Error::param(
                "s",
                format!("tau = (s/d + 1/2)^-1 must be positive (s={}, d={})", self.s, self.d),
            ));
        }
        if !(1.0..=2.0).contains(&self.p) {
            return Err(Error::param("p", format!("must lie in [1, 2], got {}", self.p)));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::param("eta", format!("must be > 0, got {}", self.eta)));
        }
        self.m.validate()
    }

    /// `γ_k = k^{−1/τ + 1/p}`.
    pub fn gamma(&self) -> Result<WeightSeq> {
        self.check()?;
        WeightSeq::power_law(1.0, -1.0 / self.tau() + 1.0 / self.p)
    }

    /// `δ_k = k^{−1/τ + (2+η)/p}`.
    pub fn delta(&self) -> Result<WeightSeq> {
        self.check()?;
        WeightSeq::power_law(1.0, -1.0 / self.tau() + (2.0 + self.eta) / self.p)
    }
}

/// Cauchy parameters: shift `m`, scales `γ ∈ ℓ¹`, ambient `ℓ^q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CauchyParams {
    #[serde(default)]
    pub m: Point,
    pub gamma: WeightSeq,
    pub q: f64,
}

impl CauchyParams {
    pub fn new(gamma: WeightSeq, q: f64) -> Self {
        Self {
            m: Point::zero(),
            gamma,
            q,
        }
    }

    pub fn with_shift(mut self, m: Point) -> Self {
        self.m = m;
        self
    }
}

/// Which parameterization produced a spec.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Besov(BesovParams),
    Cauchy(CauchyParams),
    Generic,
}

/// `μ = ⊗_k μ₀(γ_k⁻¹(· − m_k))` on the ambient space `ℓ^p_α`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductMeasureSpec {
    reference: ReferenceDensity,
    gamma: WeightSeq,
    shift: SeqExpr,
    ambient: SpaceSpec,
    label: String,
    family: Family,
    warnings: Vec<String>,
}

/// `Σ|γ_k/α_k|^p` with its certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSummability {
    pub certificate: SeriesCertificate,
    /// Set when the series is certified or suspected divergent.
    pub warning: Option<String>,
}

/// Check the necessary condition `γ ∈ ℓ^p_α` on the first `k` terms plus tail.
pub fn gamma_summability(gamma: &WeightSeq, ambient: &SpaceSpec, k: usize) -> GammaSummability {
    let (term, cmp) = power_term(ambient.p());
    let certificate = certify_series(&gamma.to_seq(), ambient.weights(), term, Some(cmp), k.max(1));
    let warning = match certificate.verdict {
        Verdict::Converges => None,
        Verdict::Diverges => Some(format!(
            "sum |gamma_k/alpha_k|^{} diverges: gamma is not in the ambient space",
            ambient.p()
        )),
        Verdict::Unknown => Some("summability of gamma in the ambient space is undecided".into()),
    };
    GammaSummability {
        certificate,
        warning,
    }
}

impl ProductMeasureSpec {
    /// Assemble a spec. Custom references must pass the assumption validator,
    /// and `m` must be certified to lie in the ambient space. A failed
    /// `γ ∈ ℓ^p_α` check is recorded as a warning.
    pub fn new(
        reference: ReferenceDensity,
        gamma: WeightSeq,
        m: &Point,
        ambient: SpaceSpec,
        label: impl Into<String>,
    ) -> Result<Self> {
        if !reference.is_builtin() {
            let report = validate_assumptions(&reference);
            if !report.admissible() {
                return Err(Error::hypothesis(format!(
                    "reference '{}' fails assumption checks: {}",
                    reference.name(),
                    report.notes.join("; ")
                )));
            }
        }
        m.validate()?;
        if m.base != Base::Zero {
            return Err(Error::param("m", "the shift must be given relative to zero"));
        }
        let shift = m.offset();
        let norm = weighted_norm(&shift, &ambient, CERT_TERMS)?;
        if norm.verdict != Verdict::Converges {
            return Err(Error::hypothesis(
                "shift m is not certified to lie in the ambient space",
            ));
        }
        let mut warnings = Vec::new();
        if let Some(w) = gamma_summability(&gamma, &ambient, CERT_TERMS).warning {
            warnings.push(w);
        }
        Ok(Self {
            reference,
            gamma,
            shift,
            ambient,
            label: label.into(),
            family: Family::Generic,
            warnings,
        })
    }

    /// Besov-p measure on `ℓ^p_δ`.
    pub fn besov(params: BesovParams) -> Result<Self> {
        let gamma = params.gamma()?;
        let ambient = SpaceSpec::new(params.p, params.delta()?)?;
        let label = format!(
            "besov(s={}, d={}, p={}, eta={}, m={})",
            params.s,
            params.d,
            params.p,
            params.eta,
            describe_point(&params.m)
        );
        let mut spec = Self::new(
            ReferenceDensity::besov(params.p)?,
            gamma,
            &params.m,
            ambient,
            label,
        )?;
        spec.family = Family::Besov(params);
        Ok(spec)
    }

    /// Cauchy measure on `ℓ^q`; requires `γ ∈ ℓ¹`, and `Σ|γ_k log γ_k| < ∞`
    /// when `q = 1`.
    pub fn cauchy(params: CauchyParams) -> Result<Self> {
        if !(params.q >= 1.0 && params.q.is_finite()) {
            return Err(Error::param("q", format!("must be >= 1, got {}", params.q)));
        }
        let l1 = cauchy_gamma_l1(&params.gamma);
        if l1.verdict != Verdict::Converges {
            return Err(Error::hypothesis("gamma is not certified to lie in l^1"));
        }
        if params.q == 1.0 && cauchy_log_condition(&params.gamma).verdict != Verdict::Converges {
            return Err(Error::hypothesis(
                "q = 1 needs sum |gamma_k log gamma_k| < inf, which could not be certified",
            ));
        }
        let label = format!(
            "cauchy(q={}, gamma={:?}, m={})",
            params.q,
            params.gamma.rule(),
            describe_point(&params.m)
        );
        let mut spec = Self::new(
            ReferenceDensity::cauchy(),
            params.gamma.clone(),
            &params.m,
            SpaceSpec::lp(params.q)?,
            label,
        )?;
        spec.family = Family::Cauchy(params);
        Ok(spec)
    }

    pub fn reference(&self) -> &ReferenceDensity {
        &self.reference
    }

    pub fn gamma(&self) -> &WeightSeq {
        &self.gamma
    }

    /// The shift `m` in absolute coordinates.
    pub fn shift(&self) -> &SeqExpr {
        &self.shift
    }

    pub fn ambient(&self) -> &SpaceSpec {
        &self.ambient
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Same measure with a different shift.
    pub fn with_shift(&self, m: &Point) -> Result<Self> {
        let mut out = Self::new(
            self.reference.clone(),
            self.gamma.clone(),
            m,
            self.ambient.clone(),
            self.label.clone(),
        )?;
        out.family = match &self.family {
            Family::Besov(b) => Family::Besov(b.clone().with_shift(m.clone())),
            Family::Cauchy(c) => Family::Cauchy(c.clone().with_shift(m.clone())),
            Family::Generic => Family::Generic,
        };
        Ok(out)
    }

    /// Same measure with different scales `γ`; the result is generic.
    pub fn with_gamma(&self, gamma: WeightSeq) -> Result<Self> {
        let m = Point::from_seq(self.shift.clone());
        Self::new(
            self.reference.clone(),
            gamma,
            &m,
            self.ambient.clone(),
            format!("{} [rescaled]", self.label),
        )
    }

    pub fn gamma_summability(&self, k: usize) -> GammaSummability {
        gamma_summability(&self.gamma, &self.ambient, k)
    }

    /// `x − m` for a point given in either base.
    pub fn displacement(&self, x: &Point) -> SeqExpr {
        x.displacement(&self.shift)
    }

    /// Absolute coordinates of a point.
    pub fn resolve(&self, x: &Point) -> SeqExpr {
        x.resolve(&self.shift)
    }

    /// `n` draws of the first `k` coordinates as a `k × n` matrix (column
    /// `j` is draw `j`). Deterministic in `(seed, k, n)`.
    pub fn sample(&self, k: usize, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        if k == 0 || n == 0 {
            return Err(Error::param("K, n", "must be >= 1"));
        }
        let m = self.shift.prefix(k);
        let g = self.gamma.prefix(k);
        let blocks = run_blocks(n, seed, |rng, _start, count| {
            let mut out = Vec::with_capacity(count * k);
            for _ in 0..count {
                for i in 0..k {
                    out.push(m[i] + g[i] * self.reference.sample(rng));
                }
            }
            out
        });
        Ok(DMatrix::from_vec(k, n, blocks.concat()))
    }
}

fn describe_point(p: &Point) -> String {
    if p.delta.is_empty() && p.tail.is_empty() {
        "0".into()
    } else {
        format!("{:?}+{:?}", p.delta, p.tail)
    }
}

/// Certificate for `Σ γ_k < ∞`.
pub fn cauchy_gamma_l1(gamma: &WeightSeq) -> SeriesCertificate {
    let (term, cmp) = power_term(1.0);
    certify_series(&gamma.to_seq(), &WeightSeq::unit(), term, Some(cmp), CERT_TERMS)
}

/// Certificate for `Σ |γ_k log γ_k| < ∞`.
///
/// Uses `u |log u| ≤ u^{1−ε} / (eε)` on `(0, 1]`: the condition holds as soon
/// as `γ ∈ ℓ^{1−ε}` for some `ε ∈ (0, 1)`. The partial sum is of the actual
/// series; the tail bound comes from the comparison.
pub fn cauchy_log_condition(gamma: &WeightSeq) -> SeriesCertificate {
    let term = |u: f64| if u == 0.0 { 0.0 } else { (u * u.ln()).abs() };
    let partial: f64 = (1..=CERT_TERMS).map(|k| term(gamma.eval(k))).sum();
    let seq = gamma.to_seq();
    let unit = WeightSeq::unit();
    for eps in [0.5, 0.25, 0.1, 0.01, 0.001] {
        let pw = 1.0 - eps;
        let cmp = TermComparison {
            power: pw,
            upper: 1.0,
        };
        let cert = certify_series(&seq, &unit, |u: f64| u.abs().powf(pw), Some(cmp), CERT_TERMS);
        // The comparison needs γ_k ≤ 1 beyond the partial sum.
        let small = (CERT_TERMS + 1..=CERT_TERMS + 64).all(|k| gamma.eval(k) <= 1.0)
            && gamma.tail_form().decays();
        if cert.verdict == Verdict::Converges && small {
            let c = 1.0 / (std::f64::consts::E * eps);
            return SeriesCertificate {
                partial,
                terms: CERT_TERMS,
                tail_bound: cert.tail_bound.map(|t| c * t),
                verdict: Verdict::Converges,
            };
        }
    }
    let tail = gamma.tail_form();
    let verdict = if !tail.decays() || !tail.p_summable(1.0) {
        Verdict::Diverges
    } else {
        Verdict::Unknown
    };
    SeriesCertificate {
        partial,
        terms: CERT_TERMS,
        tail_bound: None,
        verdict,
    }
}

/// Measure description as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum MeasureConfig {
    Besov(BesovParams),
    Cauchy(CauchyParams),
    /// Any builtin reference with explicit scales and ambient space.
    Product {
        #[serde(rename = "ref")]
        reference: RefSpec,
        gamma: WeightSeq,
        #[serde(default)]
        m: Point,
        ambient: SpaceSpec,
        #[serde(default)]
        label: Option<String>,
    },
}

impl MeasureConfig {
    pub fn build(&self) -> Result<ProductMeasureSpec> {
        match self {
            MeasureConfig::Besov(b) => ProductMeasureSpec::besov(b.clone()),
            MeasureConfig::Cauchy(c) => ProductMeasureSpec::cauchy(c.clone()),
            MeasureConfig::Product {
                reference,
                gamma,
                m,
                ambient,
                label,
            } => ProductMeasureSpec::new(
                ReferenceDensity::from_spec(*reference)?,
                gamma.clone(),
                m,
                ambient.clone(),
                label.clone().unwrap_or_else(|| "product".into()),
            ),
        }
    }
}

/// Distribution summary of partial norms at one truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportRow {
    pub k: usize,
    pub mean: f64,
    pub median: f64,
    pub q90: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportTrend {
    Stabilizes,
    Grows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportTable {
    pub rows: Vec<SupportRow>,
    pub trend: SupportTrend,
}

/// Relative growth of the median between the last two truncations above
/// which partial norms count as growing.
pub const STABLE_GROWTH: f64 = 0.05;

/// Empirical partial norms `‖x_{1:K}‖` (or `‖(x − m)_{1:K}‖` when `centered`)
/// in `metric` for each `K` of the grid, from `n` draws.
pub fn support_diagnostic(
    spec: &ProductMeasureSpec,
    metric: &SpaceSpec,
    k_grid: &[usize],
    n: usize,
    seed: u64,
    centered: bool,
) -> Result<SupportTable> {
    let mut grid = k_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() || grid[0] == 0 || n == 0 {
        return Err(Error::param("K-grid, n", "need a non-empty grid of K >= 1 and n >= 1"));
    }
    let kmax = grid[grid.len() - 1];
    let m = spec.shift.prefix(kmax);
    let g = spec.gamma.prefix(kmax);
    let w = metric.weights().prefix(kmax);
    let p = metric.p();
    let per_block = run_blocks(n, seed, |rng, _start, count| {
        let mut out = vec![Vec::with_capacity(count); grid.len()];
        for _ in 0..count {
            let mut acc = 0.0;
            let mut gi = 0;
            for i in 0..kmax {
                let u = spec.reference.sample(rng);
                let x = if centered { g[i] * u } else { m[i] + g[i] * u };
                acc += (x / w[i]).abs().powf(p);
                if i + 1 == grid[gi] {
                    out[gi].push(acc.powf(1.0 / p));
                    gi += 1;
                }
            }
        }
        out
    });
    let mut rows = Vec::with_capacity(grid.len());
    for (gi, k) in grid.iter().enumerate() {
        let mut v: Vec<f64> = per_block.iter().flat_map(|b| b[gi].iter().copied()).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.sort_by(f64::total_cmp);
        let q = |f: f64| v[((v.len() - 1) as f64 * f).round() as usize];
        rows.push(SupportRow {
            k: *k,
            mean,
            median: q(0.5),
            q90: q(0.9),
            max: v[v.len() - 1],
        });
    }
    let trend = if rows.len() >= 2 {
        let (a, b) = (rows[rows.len() - 2].median, rows[rows.len() - 1].median);
        if b > a * (1.0 + STABLE_GROWTH) {
            SupportTrend::Grows
        } else {
            SupportTrend::Stabilizes
        }
    } else {
        SupportTrend::Stabilizes
    };
    Ok(SupportTable { rows, trend })
}
