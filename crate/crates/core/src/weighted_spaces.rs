//! Weighted sequence spaces ℓ^p_α, rule-based sequences, and summability
//! certificates.
//!
//! Every infinite sequence handled by the crate is a finite sparse part plus
//! a finite list of closed-form tails `k ↦ c·k^e·r^k`
//! ([`PowerGeometric`]). That class is closed under the coordinate-wise
//! quotients `x_k / α_k` that all norms and log-density sums are built from,
//! which is what makes tail bounds and divergence certificates possible.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::KahanSum;

const RATIO_EPS: f64 = 1e-15;

/// Sparse maps arrive with string keys when buffered by tagged enums.
mod sparse_keys {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer};

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<usize, f64>, D::Error> {
        let raw: BTreeMap<String, f64> = BTreeMap::deserialize(d)?;
        let mut out = BTreeMap::new();
        for (k, v) in raw {
            let idx: usize = k
                .trim()
                .parse()
                .map_err(|_| D::Error::custom(format!("sequence index '{k}' is not a positive integer")))?;
            if idx == 0 {
                return Err(D::Error::custom("sequence indices are 1-based"));
            }
            out.insert(idx, v);
        }
        Ok(out)
    }
}

fn one() -> f64 {
    1.0
}

/// The closed-form sequence `k ↦ scale · k^exponent · ratio^k` (k ≥ 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerGeometric {
    pub scale: f64,
    #[serde(default)]
    pub exponent: f64,
    #[serde(default = "one")]
    pub ratio: f64,
}

impl PowerGeometric {
    pub fn new(scale: f64, exponent: f64, ratio: f64) -> Self {
        Self {
            scale,
            exponent,
            ratio,
        }
    }

    pub fn power_law(scale: f64, exponent: f64) -> Self {
        Self::new(scale, exponent, 1.0)
    }

    pub fn geometric(scale: f64, ratio: f64) -> Self {
        Self::new(scale, 0.0, ratio)
    }

    pub fn eval(&self, k: usize) -> f64 {
        let k = k as f64;
        // Work in log space so large k with small ratios underflow cleanly.
        if self.scale == 0.0 {
            return 0.0;
        }
        let log_mag = self.exponent * k.ln() + k * self.ratio.ln();
        self.scale * log_mag.exp()
    }

    pub fn times(&self, other: &PowerGeometric) -> PowerGeometric {
        PowerGeometric::new(
            self.scale * other.scale,
            self.exponent + other.exponent,
            self.ratio * other.ratio,
        )
    }

    pub fn over(&self, other: &PowerGeometric) -> PowerGeometric {
        PowerGeometric::new(
            self.scale / other.scale,
            self.exponent - other.exponent,
            self.ratio / other.ratio,
        )
    }

    pub fn scaled(&self, c: f64) -> PowerGeometric {
        PowerGeometric::new(self.scale * c, self.exponent, self.ratio)
    }

    fn unit_ratio(&self) -> bool {
        (self.ratio - 1.0).abs() <= RATIO_EPS
    }

    /// Whether `|term_k| → 0`.
    pub fn decays(&self) -> bool {
        if self.scale == 0.0 {
            return true;
        }
        if self.unit_ratio() {
            self.exponent < 0.0
        } else {
            self.ratio < 1.0
        }
    }

    /// Whether `Σ_k |term_k|^p < ∞`.
    pub fn p_summable(&self, p: f64) -> bool {
        if self.scale == 0.0 {
            return true;
        }
        if self.unit_ratio() {
            self.exponent * p < -1.0
        } else {
            self.ratio < 1.0
        }
    }

    /// Rigorous upper bound on `Σ_{k > after} |term_k|^p`, or `None` when no
    /// bound is available at this cut-off.
    pub fn p_tail_bound(&self, p: f64, after: usize) -> Option<f64> {
        if self.scale == 0.0 {
            return Some(0.0);
        }
        if !self.p_summable(p) {
            return None;
        }
        let c = self.scale.abs().powf(p);
        let e = self.exponent * p;
        let kk = after as f64;
        if self.unit_ratio() {
            // Σ_{k>K} k^e ≤ ∫_K^∞ t^e dt for decreasing k^e, valid for K ≥ 1.
            if after == 0 {
                return Some(c * (1.0 + 1.0 / (-e - 1.0)));
            }
            return Some(c * kk.powf(e + 1.0) / (-e - 1.0));
        }
        let r = self.ratio.powf(p);
        let first = c * ((kk + 1.0).ln() * e + (kk + 1.0) * r.ln()).exp();
        if e <= 0.0 {
            // term_k ≤ c (K+1)^e r^k for k > K.
            return Some(first / (1.0 - r));
        }
        let q = ((kk + 2.0) / (kk + 1.0)).powf(e) * r;
        if q < 1.0 {
            Some(first / (1.0 - q))
        } else {
            None
        }
    }

    /// Upper bound on `sup_{k > after} |term_k|` when the sequence is bounded.
    pub fn sup_after(&self, after: usize) -> Option<f64> {
        if self.scale == 0.0 {
            return Some(0.0);
        }
        let first = after + 1;
        if self.unit_ratio() {
            return if self.exponent <= 0.0 {
                Some(self.eval(first).abs())
            } else {
                None
            };
        }
        if self.ratio > 1.0 {
            return None;
        }
        if self.exponent <= 0.0 {
            return Some(self.eval(first).abs());
        }
        // c k^e r^k peaks at k* = -e / ln r.
        let kstar = -self.exponent / self.ratio.ln();
        let mut best = self.eval(first).abs();
        for k in [kstar.floor(), kstar.ceil()] {
            if k >= first as f64 {
                best = best.max(self.eval(k as usize).abs());
            }
        }
        Some(best)
    }
}

/// A finite sparse part plus closed-form tails: `k ↦ delta[k] + Σ_j tail_j(k)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeqExpr {
    #[serde(default, deserialize_with = "sparse_keys::deserialize")]
    pub delta: BTreeMap<usize, f64>,
    #[serde(default)]
    pub tail: Vec<PowerGeometric>,
}

impl SeqExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn sparse(entries: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut delta = BTreeMap::new();
        for (k, v) in entries {
            assert!(k >= 1, "sequence indices are 1-based");
            *delta.entry(k).or_insert(0.0) += v;
        }
        Self {
            delta,
            tail: Vec::new(),
        }
    }

    /// `c · e_k`.
    pub fn unit(k: usize, c: f64) -> Self {
        Self::sparse([(k, c)])
    }

    pub fn from_prefix(values: &[f64]) -> Self {
        Self::sparse(values.iter().enumerate().map(|(i, v)| (i + 1, *v)))
    }

    pub fn rule(tail: PowerGeometric) -> Self {
        Self {
            delta: BTreeMap::new(),
            tail: vec![tail],
        }
    }

    pub fn eval(&self, k: usize) -> f64 {
        let mut v = self.delta.get(&k).copied().unwrap_or(0.0);
        for t in &self.tail {
            v += t.eval(k);
        }
        v
    }

    pub fn prefix(&self, k: usize) -> Vec<f64> {
        (1..=k).map(|i| self.eval(i)).collect()
    }

    /// Largest index carrying a sparse entry (0 if none).
    pub fn support_end(&self) -> usize {
        self.delta.keys().next_back().copied().unwrap_or(0)
    }

    pub fn has_tail(&self) -> bool {
        self.tail.iter().any(|t| t.scale != 0.0)
    }

    pub fn is_finite_support(&self) -> bool {
        !self.has_tail()
    }

    pub fn add(&self, other: &SeqExpr) -> SeqExpr {
        let mut out = self.clone();
        for (k, v) in &other.delta {
            *out.delta.entry(*k).or_insert(0.0) += v;
        }
        out.tail.extend(other.tail.iter().copied());
        out.normalized()
    }

    pub fn sub(&self, other: &SeqExpr) -> SeqExpr {
        self.add(&other.scaled(-1.0))
    }

    pub fn scaled(&self, c: f64) -> SeqExpr {
        SeqExpr {
            delta: self.delta.iter().map(|(k, v)| (*k, c * v)).collect(),
            tail: self.tail.iter().map(|t| t.scaled(c)).collect(),
        }
    }

    /// Merge tails with identical exponent and ratio and drop zero terms.
    pub fn normalized(mut self) -> SeqExpr {
        let mut merged: Vec<PowerGeometric> = Vec::new();
        for t in self.tail.drain(..) {
            match merged
                .iter_mut()
                .find(|m| m.exponent == t.exponent && (m.ratio - t.ratio).abs() <= RATIO_EPS)
            {
                Some(m) => m.scale += t.scale,
                None => merged.push(t),
            }
        }
        merged.retain(|t| t.scale != 0.0);
        self.tail = merged;
        self.delta.retain(|_, v| *v != 0.0);
        self
    }
}

/// Positive weight rule `k ↦ w_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum WeightRule {
    Constant {
        value: f64,
    },
    PowerLaw {
        scale: f64,
        exponent: f64,
    },
    Geometric {
        scale: f64,
        ratio: f64,
    },
    /// Explicit `w_1..w_n` followed by `scale · k^exponent` for `k > n`.
    ExplicitPrefixWithPowerTail {
        prefix: Vec<f64>,
        scale: f64,
        exponent: f64,
    },
}

/// A validated positive weight sequence (1-indexed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightRule", into = "WeightRule")]
pub struct WeightSeq {
    rule: WeightRule,
}

impl TryFrom<WeightRule> for WeightSeq {
    type Error = Error;

    fn try_from(rule: WeightRule) -> Result<Self> {
        WeightSeq::new(rule)
    }
}

impl From<WeightSeq> for WeightRule {
    fn from(w: WeightSeq) -> Self {
        w.rule
    }
}

fn positive(name: &'static str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and > 0, got {x}")))
    }
}

impl WeightSeq {
    pub fn new(rule: WeightRule) -> Result<Self> {
        match &rule {
            WeightRule::Constant { value } => positive("value", *value)?,
            WeightRule::PowerLaw { scale, exponent } => {
                positive("scale", *scale)?;
                if !exponent.is_finite() {
                    return Err(Error::param("exponent", "must be finite"));
                }
            }
            WeightRule::Geometric { scale, ratio } => {
                positive("scale", *scale)?;
                positive("ratio", *ratio)?;
            }
            WeightRule::ExplicitPrefixWithPowerTail {
                prefix,
                scale,
                exponent,
            } => {
                for w in prefix {
                    positive("prefix", *w)?;
                }
                positive("scale", *scale)?;
                if !exponent.is_finite() {
                    return Err(Error::param("exponent", "must be finite"));
                }
            }
        }
        Ok(Self { rule })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(WeightRule::Constant { value })
    }

    pub fn unit() -> Self {
        Self {
            rule: WeightRule::Constant { value: 1.0 },
        }
    }

    pub fn power_law(scale: f64, exponent: f64) -> Result<Self> {
        Self::new(WeightRule::PowerLaw { scale, exponent })
    }

    pub fn geometric(scale: f64, ratio: f64) -> Result<Self> {
        Self::new(WeightRule::Geometric { scale, ratio })
    }

    pub fn prefix_with_power_tail(prefix: Vec<f64>, scale: f64, exponent: f64) -> Result<Self> {
        Self::new(WeightRule::ExplicitPrefixWithPowerTail {
            prefix,
            scale,
            exponent,
        })
    }

    pub fn rule(&self) -> &WeightRule {
        &self.rule
    }

    pub fn eval(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        match &self.rule {
            WeightRule::ExplicitPrefixWithPowerTail { prefix, .. } if k <= prefix.len() => {
                prefix[k - 1]
            }
            _ => self.tail_form().eval(k),
        }
    }

    pub fn prefix(&self, k: usize) -> Vec<f64> {
        (1..=k).map(|i| self.eval(i)).collect()
    }

    /// First index from which `eval` agrees with [`Self::tail_form`].
    pub fn tail_start(&self) -> usize {
        match &self.rule {
            WeightRule::ExplicitPrefixWithPowerTail { prefix, .. } => prefix.len() + 1,
            _ => 1,
        }
    }

    pub fn tail_form(&self) -> PowerGeometric {
        match &self.rule {
            WeightRule::Constant { value } => PowerGeometric::power_law(*value, 0.0),
            WeightRule::PowerLaw { scale, exponent } => PowerGeometric::power_law(*scale, *exponent),
            WeightRule::Geometric { scale, ratio } => PowerGeometric::geometric(*scale, *ratio),
            WeightRule::ExplicitPrefixWithPowerTail {
                scale, exponent, ..
            } => PowerGeometric::power_law(*scale, *exponent),
        }
    }

    /// The weights themselves as a sequence expression.
    pub fn to_seq(&self) -> SeqExpr {
        self.times_rule(&PowerGeometric::power_law(1.0, 0.0))
    }

    /// The sequence `k ↦ w_k · rule(k)`.
    pub fn times_rule(&self, rule: &PowerGeometric) -> SeqExpr {
        let start = self.tail_start();
        let delta = (1..start)
            .map(|k| (k, self.eval(k) * rule.eval(k)))
            .collect();
        let tail = self.tail_form().times(rule);
        if start == 1 {
            return SeqExpr::rule(tail);
        }
        // Tail form applies from `start`; cancel its contribution on the prefix.
        let correction: BTreeMap<usize, f64> = (1..start).map(|k| (k, -tail.eval(k))).collect();
        SeqExpr {
            delta,
            tail: vec![tail],
        }
        .add(&SeqExpr {
            delta: correction,
            tail: vec![],
        })
    }

    /// The weights `c · w_k`.
    pub fn scaled(&self, c: f64) -> Result<WeightSeq> {
        let rule = match &self.rule {
            WeightRule::Constant { value } => WeightRule::Constant { value: c * value },
            WeightRule::PowerLaw { scale, exponent } => WeightRule::PowerLaw {
                scale: c * scale,
                exponent: *exponent,
            },
            WeightRule::Geometric { scale, ratio } => WeightRule::Geometric {
                scale: c * scale,
                ratio: *ratio,
            },
            WeightRule::ExplicitPrefixWithPowerTail {
                prefix,
                scale,
                exponent,
            } => WeightRule::ExplicitPrefixWithPowerTail {
                prefix: prefix.iter().map(|w| c * w).collect(),
                scale: c * scale,
                exponent: *exponent,
            },
        };
        WeightSeq::new(rule)
    }
}

/// The ambient space ℓ^p_α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceRepr", into = "SpaceRepr")]
pub struct SpaceSpec {
    p: f64,
    weights: WeightSeq,
}

#[derive(Serialize, Deserialize)]
struct SpaceRepr {
    p: f64,
    weights: WeightSeq,
}

impl TryFrom<SpaceRepr> for SpaceSpec {
    type Error = Error;
    fn try_from(r: SpaceRepr) -> Result<Self> {
        SpaceSpec::new(r.p, r.weights)
    }
}

impl From<SpaceSpec> for SpaceRepr {
    fn from(s: SpaceSpec) -> Self {
        SpaceRepr {
            p: s.p,
            weights: s.weights,
        }
    }
}

impl SpaceSpec {
    pub fn new(p: f64, weights: WeightSeq) -> Result<Self> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::param("p", format!("need 1 <= p < inf, got {p}")));
        }
        Ok(Self { p, weights })
    }

    /// Unweighted ℓ^p.
    pub fn lp(p: f64) -> Result<Self> {
        Self::new(p, WeightSeq::unit())
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn weights(&self) -> &WeightSeq {
        &self.weights
    }

    /// `(Σ_{k ≤ K} |x_k / α_k|^p)^{1/p}` on an explicit prefix.
    pub fn prefix_norm(&self, x: &[f64]) -> f64 {
        let s: KahanSum = x
            .iter()
            .enumerate()
            .map(|(i, v)| (v / self.weights.eval(i + 1)).abs().powf(self.p))
            .collect();
        s.value().powf(1.0 / self.p)
    }
}

/// Where a [`Point`] is anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Base {
    #[default]
    Zero,
    /// Coordinates are measured relative to the shift `m` of the measure the
    /// point is used with.
    ShiftOfMeasure,
}

/// An element of ℝ^ℕ: a base (zero or the measure's shift) plus a sparse
/// perturbation and optional closed-form tails.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    #[serde(default)]
    pub base: Base,
    #[serde(default, deserialize_with = "sparse_keys::deserialize")]
    pub delta: BTreeMap<usize, f64>,
    #[serde(default)]
    pub tail: Vec<PowerGeometric>,
}

impl Point {
    pub fn zero() -> Self {
        Self::default()
    }

    /// The point `m` itself.
    pub fn at_shift() -> Self {
        Self {
            base: Base::ShiftOfMeasure,
            ..Self::default()
        }
    }

    pub fn from_seq(seq: SeqExpr) -> Self {
        Self {
            base: Base::Zero,
            delta: seq.delta,
            tail: seq.tail,
        }
    }

    /// `m + seq`.
    pub fn shifted_by(seq: SeqExpr) -> Self {
        Self {
            base: Base::ShiftOfMeasure,
            delta: seq.delta,
            tail: seq.tail,
        }
    }

    pub fn sparse(entries: impl IntoIterator<Item = (usize, f64)>) -> Self {
        Self::from_seq(SeqExpr::sparse(entries))
    }

    pub fn offset(&self) -> SeqExpr {
        SeqExpr {
            delta: self.delta.clone(),
            tail: self.tail.clone(),
        }
        .normalized()
    }

    /// Absolute coordinates, given the measure's shift `m` (itself zero-based).
    pub fn resolve(&self, shift: &SeqExpr) -> SeqExpr {
        match self.base {
            Base::Zero => self.offset(),
            Base::ShiftOfMeasure => shift.add(&self.offset()),
        }
    }

    /// `self − m` as a sequence expression; exact when `self` is shift-based.
    pub fn displacement(&self, shift: &SeqExpr) -> SeqExpr {
        match self.base {
            Base::Zero => self.offset().sub(shift),
            Base::ShiftOfMeasure => self.offset(),
        }
    }

    pub fn is_finite_support_offset(&self) -> bool {
        self.offset().is_finite_support()
    }

    /// Indices are 1-based and tail ratios positive.
    pub fn validate(&self) -> Result<()> {
        if self.delta.contains_key(&0) {
            return Err(Error::param("delta", "indices are 1-based"));
        }
        if self.delta.values().any(|v| !v.is_finite()) {
            return Err(Error::param("delta", "entries must be finite"));
        }
        for t in &self.tail {
            if !(t.ratio > 0.0 && t.ratio.is_finite() && t.scale.is_finite() && t.exponent.is_finite()) {
                return Err(Error::param(
                    "tail",
                    "rules need finite scale/exponent and ratio > 0",
                ));
            }
        }
        Ok(())
    }
}

/// Three-valued convergence verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Converges,
    Diverges,
    Unknown,
}

/// Comparison `term(u) ≤ upper · |u|^power` everywhere and
/// `term(u) ≳ |u|^power` near zero, with `term` even, nondecreasing on ℝ≥0
/// and positive off zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermComparison {
    pub power: f64,
    pub upper: f64,
}

/// Partial sum over `k ≤ terms` plus a certified bound for the remainder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesCertificate {
    pub partial: f64,
    pub terms: usize,
    pub tail_bound: Option<f64>,
    pub verdict: Verdict,
}

impl SeriesCertificate {
    pub fn upper_bound(&self) -> Option<f64> {
        self.tail_bound.map(|t| self.partial + t)
    }
}

/// Certify `Σ_k term(seq_k / w_k)`.
///
/// The partial sum runs over `k ≤ k_partial`. Beyond that, terms up to the
/// first index where both the weights and `seq` are pure closed forms are
/// summed exactly into the tail bound; the remainder is bounded through
/// `comparison` and Minkowski's inequality over the individual tail
/// components. Divergence is certified when the dominant tail quotient does
/// not decay, or decays too slowly for the comparison power.
pub fn certify_series(
    seq: &SeqExpr,
    weights: &WeightSeq,
    term: impl Fn(f64) -> f64,
    comparison: Option<TermComparison>,
    k_partial: usize,
) -> SeriesCertificate {
    let seq = seq.clone().normalized();
    let partial: KahanSum = (1..=k_partial)
        .map(|k| term(seq.eval(k) / weights.eval(k)))
        .collect();

    let start = k_partial.max(weights.tail_start() - 1);
    let middle: KahanSum = (k_partial + 1..=start)
        .map(|k| term(seq.eval(k) / weights.eval(k)))
        .collect();

    let wtail = weights.tail_form();
    let quotients: Vec<PowerGeometric> = seq.tail.iter().map(|t| t.over(&wtail)).collect();
    let sparse_beyond: Vec<(usize, f64)> = seq
        .delta
        .range(start + 1..)
        .map(|(k, v)| (*k, *v / weights.eval(*k)))
        .collect();

    let finish = |tail_bound: Option<f64>, verdict| SeriesCertificate {
        partial: partial.value(),
        terms: k_partial,
        tail_bound,
        verdict,
    };

    if quotients.is_empty() {
        let rest: KahanSum = sparse_beyond.iter().map(|(_, u)| term(*u)).collect();
        return finish(Some(middle.value() + rest.value()), Verdict::Converges);
    }

    let dominant = quotients
        .iter()
        .copied()
        .max_by(|a, b| {
            a.ratio
                .total_cmp(&b.ratio)
                .then(a.exponent.total_cmp(&b.exponent))
        })
        .expect("non-empty");
    if !dominant.decays() {
        return finish(None, Verdict::Diverges);
    }
    let Some(cmp) = comparison else {
        return finish(None, Verdict::Unknown);
    };
    if !dominant.p_summable(cmp.power) {
        return finish(None, Verdict::Diverges);
    }

    let n_components = quotients.len() + usize::from(!sparse_beyond.is_empty());
    let minkowski = (n_components as f64).powf((cmp.power - 1.0).max(0.0));
    let mut comp = KahanSum::new();
    for (_, u) in &sparse_beyond {
        comp.add(u.abs().powf(cmp.power));
    }
    let mut bounded = true;
    for q in &quotients {
        match q.p_tail_bound(cmp.power, start) {
            Some(b) => comp.add(b),
            None => bounded = false,
        }
    }
    let tail = bounded.then(|| middle.value() + cmp.upper * minkowski * comp.value());
    finish(tail, Verdict::Converges)
}

/// `|u|^p` with the matching comparison.
pub fn power_term(p: f64) -> (impl Fn(f64) -> f64, TermComparison) {
    (
        move |u: f64| u.abs().powf(p),
        TermComparison {
            power: p,
            upper: 1.0,
        },
    )
}

/// Result of [`weighted_norm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub partial_norm: f64,
    /// Bound on `Σ_{k>K} |x_k/α_k|^p`; `None` when unknown.
    pub tail_bound: Option<f64>,
    pub verdict: Verdict,
}

impl NormReport {
    /// Upper bound on the full norm when the tail is certified.
    pub fn norm_upper(&self, p: f64) -> Option<f64> {
        self.tail_bound
            .map(|t| (self.partial_norm.powf(p) + t).powf(1.0 / p))
    }
}

/// Partial ℓ^p_α norm over `k ≤ K` with a certified tail bound.
pub fn weighted_norm(x: &SeqExpr, space: &SpaceSpec, k: usize) -> Result<NormReport> {
    if k == 0 {
        return Err(Error::param("K", "must be >= 1"));
    }
    let (term, cmp) = power_term(space.p);
    let cert = certify_series(x, &space.weights, term, Some(cmp), k);
    Ok(NormReport {
        partial_norm: cert.partial.powf(1.0 / space.p),
        tail_bound: cert.tail_bound,
        verdict: cert.verdict,
    })
}

/// Outcome of [`embedding_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Embedding {
    /// `ℓ^q_γ ⊆ ℓ^p_α`. For `p < q` the certificate is the
    /// `ℓ^{qp/(q−p)}_α` series of γ; for `p ≥ q` it is a bound on `sup γ_k/α_k`.
    Embeds {
        exponent: Option<f64>,
        certificate: Option<SeriesCertificate>,
        sup_bound: Option<f64>,
    },
    Unknown {
        reason: String,
    },
}

/// One-directional test of `ℓ^q_γ ⊆ ℓ^p_α`.
pub fn embedding_check(q: f64, gamma: &WeightSeq, p: f64, alpha: &WeightSeq, k: usize) -> Embedding {
    if !(p >= 1.0 && q >= 1.0) {
        return Embedding::Unknown {
            reason: format!("need p, q >= 1 (p={p}, q={q})"),
        };
    }
    let ratio = gamma.to_seq();
    if p < q {
        let r = q * p / (q - p);
        let (term, cmp) = power_term(r);
        let cert = certify_series(&ratio, alpha, term, Some(cmp), k.max(1));
        return match cert.verdict {
            Verdict::Converges => Embedding::Embeds {
                exponent: Some(r),
                certificate: Some(cert),
                sup_bound: None,
            },
            _ => Embedding::Unknown {
                reason: format!("could not certify gamma in l^{r}_alpha"),
            },
        };
    }
    // p ≥ q: need sup_k γ_k / α_k < ∞.
    let start = k.max(gamma.tail_start().max(alpha.tail_start()) - 1);
    let head = (1..=start)
        .map(|i| gamma.eval(i) / alpha.eval(i))
        .fold(0.0, f64::max);
    let q_tail = gamma.tail_form().over(&alpha.tail_form());
    match q_tail.sup_after(start) {
        Some(s) => Embedding::Embeds {
            exponent: None,
            certificate: None,
            sup_bound: Some(head.max(s)),
        },
        None => Embedding::Unknown {
            reason: "gamma/alpha is unbounded, so gamma is not in l^inf_alpha".into(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_point_norm() {
        let space = SpaceSpec::lp(2.0).unwrap();
        let r = weighted_norm(&SeqExpr::zero(), &space, 10).unwrap();
        assert_eq!(r.partial_norm, 0.0);
        assert_eq!(r.tail_bound, Some(0.0));
    }

    #[test]
    fn identity_scaling_norm() {
        let alpha = WeightSeq::power_law(1.0, -1.5).unwrap();
        let x = SeqExpr::from_prefix(&alpha.prefix(3));
        let space = SpaceSpec::new(2.0, alpha).unwrap();
        let r = weighted_norm(&x, &space, 3).unwrap();
        assert_relative_eq!(r.partial_norm, 3f64.sqrt(), max_relative = 1e-15);
        assert_eq!(r.tail_bound, Some(0.0));
    }

    #[test]
    fn inverse_square_with_integral_tail() {
        let x = SeqExpr::rule(PowerGeometric::power_law(1.0, -2.0));
        let space = SpaceSpec::lp(1.0).unwrap();
        let r = weighted_norm(&x, &space, 100).unwrap();
        let oracle: f64 = (1..=100).map(|k| 1.0 / (k as f64 * k as f64)).sum();
        assert_relative_eq!(r.partial_norm, oracle, max_relative = 1e-14);
        let tb = r.tail_bound.unwrap();
        assert!(tb <= 0.01 + 1e-15);
        // the true tail ζ(2) − partial must sit under the bound
        let zeta2 = std::f64::consts::PI.powi(2) / 6.0;
        assert!(zeta2 - oracle <= tb);
    }

    #[test]
    fn non_positive_weights_rejected() {
        assert!(WeightSeq::constant(0.0).is_err());
        assert!(WeightSeq::power_law(-1.0, 1.0).is_err());
        assert!(WeightSeq::prefix_with_power_tail(vec![1.0, -2.0], 1.0, 0.0).is_err());
        let bad = serde_json::json!({"kind": "constant", "params": {"value": -1.0}});
        assert!(serde_json::from_value::<WeightSeq>(bad).is_err());
    }

    #[test]
    fn weight_json_shape() {
        let w = WeightSeq::power_law(1.0, -2.0).unwrap();
        let v = serde_json::to_value(&w).unwrap();
        assert_eq!(v["kind"], "power-law");
        assert_eq!(v["params"]["exponent"], -2.0);
        let back: WeightSeq = serde_json::from_value(v).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn prefix_weights_and_times_rule() {
        let w = WeightSeq::prefix_with_power_tail(vec![3.0, 5.0], 1.0, -1.0).unwrap();
        assert_eq!(w.eval(1), 3.0);
        assert_eq!(w.eval(2), 5.0);
        assert_relative_eq!(w.eval(4), 0.25);
        let s = w.times_rule(&PowerGeometric::geometric(1.0, 0.5));
        for k in 1..10 {
            assert_relative_eq!(s.eval(k), w.eval(k) * 0.5f64.powi(k as i32), max_relative = 1e-14);
        }
    }

    #[test]
    fn embedding_examples() {
        let one = WeightSeq::unit();
        let g = WeightSeq::power_law(1.0, -2.0).unwrap();
        assert!(matches!(
            embedding_check(2.0, &g, 1.0, &one, 50),
            Embedding::Embeds { .. }
        ));
        assert!(matches!(
            embedding_check(2.0, &one, 2.0, &one, 50),
            Embedding::Embeds { .. }
        ));
        let grow = WeightSeq::power_law(1.0, 1.0).unwrap();
        assert!(matches!(
            embedding_check(1.0, &grow, 2.0, &one, 50),
            Embedding::Unknown { .. }
        ));
    }

    #[test]
    fn geometric_series_tail() {
        let x = SeqExpr::rule(PowerGeometric::geometric(1.0, 0.5));
        let c = certify_series(&x, &WeightSeq::unit(), |u| u.abs(), Some(TermComparison { power: 1.0, upper: 1.0 }), 30);
        assert_eq!(c.verdict, Verdict::Converges);
        assert!((c.partial + c.tail_bound.unwrap() - 1.0).abs() < 1e-9);
        assert!(c.partial <= 1.0);
    }

    #[test]
    fn divergent_constant_ratio() {
        let x = WeightSeq::unit().to_seq();
        let c = certify_series(&x, &WeightSeq::unit(), |u| u.abs(), Some(TermComparison { power: 1.0, upper: 1.0 }), 30);
        assert_eq!(c.verdict, Verdict::Diverges);
        assert_relative_eq!(c.partial, 30.0);
    }

    #[test]
    fn cancelling_tails_merge() {
        let t = PowerGeometric::power_law(1.0, -0.1);
        let s = SeqExpr::rule(t).sub(&SeqExpr::rule(t));
        assert!(s.is_finite_support());
    }

    #[test]
    fn mixed_tails_dominant_decides() {
        // k^{-0.4} + k^{-2}: Σ|·|^2 diverges (2·0.4 < 1).
        let s = SeqExpr::rule(PowerGeometric::power_law(1.0, -0.4))
            .add(&SeqExpr::rule(PowerGeometric::power_law(1.0, -2.0)));
        let (term, cmp) = power_term(2.0);
        let c = certify_series(&s, &WeightSeq::unit(), term, Some(cmp), 10);
        assert_eq!(c.verdict, Verdict::Diverges);
        // k^{-0.6} + k^{-2}: converges, bound must exceed the true tail.
        let s = SeqExpr::rule(PowerGeometric::power_law(1.0, -0.6))
            .add(&SeqExpr::rule(PowerGeometric::power_law(1.0, -2.0)));
        let (term, cmp) = power_term(2.0);
        let c = certify_series(&s, &WeightSeq::unit(), &term, Some(cmp), 10);
        assert_eq!(c.verdict, Verdict::Converges);
        let far: f64 = (11..2_000_000).map(|k| term(s.eval(k))).sum();
        assert!(far <= c.tail_bound.unwrap());
    }
}
