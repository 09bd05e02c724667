//! One-dimensional reference densities ρ and their negative log-densities
//! 𝔮(u) = log ρ(0) − log ρ(u), plus numerical validators for the regularity
//! assumptions the product-measure theorems rely on.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::numerics::quad::Quadrature;
use crate::weighted_spaces::TermComparison;

/// Step for central first differences of ρ.
pub const FD_STEP: f64 = 1e-5;
/// Half-width of the puncture around a kink at zero.
pub const PUNCTURE: f64 = 1e-6;
/// Absolute tolerance for validator quadratures.
pub const VALIDATOR_TOL: f64 = 1e-10;

/// Config-level description of a builtin reference density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum RefSpec {
    Besov { p: f64 },
    Cauchy,
}

type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type SamplerFn = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Family {
    Besov { p: f64, gamma: Option<Gamma<f64>> },
    Cauchy,
    Custom { density: DensityFn, sampler: SamplerFn },
}

/// A symmetric reference density with its sampler.
#[derive(Clone)]
pub struct ReferenceDensity {
    name: String,
    family: Family,
    log_rho0: f64,
}

impl fmt::Debug for ReferenceDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReferenceDensity")
            .field("name", &self.name)
            .field("log_rho0", &self.log_rho0)
            .finish()
    }
}

impl PartialEq for ReferenceDensity {
    fn eq(&self, other: &Self) -> bool {
        match (&self.family, &other.family) {
            (Family::Besov { p: a, .. }, Family::Besov { p: b, .. }) => a == b,
            (Family::Cauchy, Family::Cauchy) => true,
            (Family::Custom { density: a, .. }, Family::Custom { density: b, .. }) => {
                Arc::ptr_eq(a, b)
            }
            _ => false,
        }
    }
}

/// Regularity flags known in closed form for builtins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Smoothness {
    pub c2: bool,
    pub rho_second_l1: bool,
}

impl ReferenceDensity {
    /// ρ_p(u) = exp(−|u|^p) / (2Γ(1 + 1/p)) for 1 ≤ p ≤ 2.
    pub fn besov(p: f64) -> Result<Self> {
        if !(1.0..=2.0).contains(&p) {
            return Err(Error::param("p", format!("Besov reference needs 1 <= p <= 2, got {p}")));
        }
        let gamma = if p == 1.0 {
            None
        } else {
            Some(Gamma::new(1.0 / p, 1.0).map_err(|e| Error::param("p", e.to_string()))?)
        };
        Ok(Self {
            name: format!("besov(p={p})"),
            family: Family::Besov { p, gamma },
            log_rho0: -(2.0f64.ln() + ln_gamma(1.0 + 1.0 / p)),
        })
    }

    /// ρ(u) = 1 / (π(1 + u²)).
    pub fn cauchy() -> Self {
        Self {
            name: "cauchy".into(),
            family: Family::Cauchy,
            log_rho0: -PI.ln(),
        }
    }

    /// A user-supplied density. It must pass [`validate_assumptions`] before a
    /// product measure will accept it.
    pub fn custom(
        name: impl Into<String>,
        density: impl Fn(f64) -> f64 + Send + Sync + 'static,
        sampler: impl Fn(&mut dyn RngCore) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let rho0 = density(0.0);
        if !(rho0.is_finite() && rho0 > 0.0) {
            return Err(Error::param("density", "rho(0) must be finite and positive"));
        }
        Ok(Self {
            name: name.into(),
            family: Family::Custom {
                density: Arc::new(density),
                sampler: Arc::new(sampler),
            },
            log_rho0: rho0.ln(),
        })
    }

    pub fn from_spec(spec: RefSpec) -> Result<Self> {
        match spec {
            RefSpec::Besov { p } => Self::besov(p),
            RefSpec::Cauchy => Ok(Self::cauchy()),
        }
    }

    pub fn spec(&self) -> Option<RefSpec> {
        match self.family {
            Family::Besov { p, .. } => Some(RefSpec::Besov { p }),
            Family::Cauchy => Some(RefSpec::Cauchy),
            Family::Custom { .. } => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self.family, Family::Custom { .. })
    }

    pub fn besov_p(&self) -> Option<f64> {
        match self.family {
            Family::Besov { p, .. } => Some(p),
            _ => None,
        }
    }

    pub fn is_cauchy(&self) -> bool {
        matches!(self.family, Family::Cauchy)
    }

    pub fn density(&self, u: f64) -> f64 {
        match &self.family {
            Family::Custom { density, .. } => density(u),
            _ => (self.log_rho0 - self.neg_log(u)).exp(),
        }
    }

    pub fn log_density(&self, u: f64) -> f64 {
        self.log_rho0 - self.neg_log(u)
    }

    /// 𝔮(u) = log ρ(0) − log ρ(u).
    pub fn neg_log(&self, u: f64) -> f64 {
        match &self.family {
            Family::Besov { p, .. } => u.abs().powf(*p),
            Family::Cauchy => (u * u).ln_1p(),
            Family::Custom { density, .. } => self.log_rho0 - density(u).ln(),
        }
    }

    /// 𝔮′(u); at a kink the value 0 is returned (a valid subgradient).
    pub fn neg_log_derivative(&self, u: f64) -> f64 {
        match &self.family {
            Family::Besov { p, .. } => {
                if u == 0.0 {
                    0.0
                } else {
                    p * u.abs().powf(p - 1.0) * u.signum()
                }
            }
            Family::Cauchy => 2.0 * u / (1.0 + u * u),
            Family::Custom { .. } => {
                (self.neg_log(u + FD_STEP) - self.neg_log(u - FD_STEP)) / (2.0 * FD_STEP)
            }
        }
    }

    /// ρ″(u): closed form for smooth builtins, central differences otherwise.
    pub fn second_derivative(&self, u: f64) -> f64 {
        match &self.family {
            Family::Besov { p, .. } if *p == 2.0 => (4.0 * u * u - 2.0) * self.density(u),
            Family::Cauchy => {
                let s = 1.0 + u * u;
                (6.0 * u * u - 2.0) / (PI * s * s * s)
            }
            _ => {
                let h = 1e-4;
                (self.density(u + h) - 2.0 * self.density(u) + self.density(u - h)) / (h * h)
            }
        }
    }

    pub fn cdf(&self, u: f64) -> f64 {
        match &self.family {
            Family::Besov { p, .. } => {
                if u == 0.0 {
                    return 0.5;
                }
                let a = u.abs();
                // P(|U| ≤ a)
                let inner = if *p == 1.0 {
                    -(-a).exp_m1()
                } else {
                    gamma_lr(1.0 / p, a.powf(*p))
                };
                0.5 + 0.5 * u.signum() * inner
            }
            Family::Cauchy => 0.5 + u.atan() / PI,
            Family::Custom { .. } => {
                let q = Quadrature::with_abs_tol(1e-12);
                if u <= 0.0 {
                    q.integrate(|x| self.density(x), f64::NEG_INFINITY, u).value
                } else {
                    0.5 + q.integrate(|x| self.density(x), 0.0, u).value
                }
            }
        }
    }

    /// Mass of `[a, b]`.
    pub fn interval_mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        // Use the tail on the side away from the median to limit cancellation.
        if a >= 0.0 {
            self.cdf(-a) - self.cdf(-b)
        } else {
            self.cdf(b) - self.cdf(a)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.family {
            Family::Besov { gamma: None, .. } => {
                // two-sided exponential by inverse CDF
                let v: f64 = rng.random::<f64>() - 0.5;
                -v.signum() * (1.0 - 2.0 * v.abs()).ln()
            }
            Family::Besov {
                p,
                gamma: Some(g),
            } => {
                let mag = g.sample(rng).powf(1.0 / p);
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
            Family::Cauchy => (PI * (rng.random::<f64>() - 0.5)).tan(),
            Family::Custom { sampler, .. } => {
                let mut adapter = DynRng(rng);
                sampler(&mut adapter)
            }
        }
    }

    pub fn fisher_closed_form(&self) -> Option<f64> {
        match self.family {
            // p² E|U|^{2p−2} = p² Γ(2 − 1/p) / Γ(1/p)
            Family::Besov { p, .. } => Some(p * p * (ln_gamma(2.0 - 1.0 / p) - ln_gamma(1.0 / p)).exp()),
            Family::Cauchy => Some(0.5),
            Family::Custom { .. } => None,
        }
    }

    /// Comparison of 𝔮 with a power near zero, used for tail bounds.
    pub fn tail_comparison(&self) -> Option<TermComparison> {
        match self.family {
            Family::Besov { p, .. } => Some(TermComparison {
                power: p,
                upper: 1.0,
            }),
            // log(1 + u²) ≤ u² everywhere and ≥ u²/2 on |u| ≤ 1
            Family::Cauchy => Some(TermComparison {
                power: 2.0,
                upper: 1.0,
            }),
            Family::Custom { .. } => None,
        }
    }

    pub fn smoothness(&self) -> Option<Smoothness> {
        match self.family {
            Family::Besov { p, .. } => Some(Smoothness {
                c2: p == 2.0,
                rho_second_l1: p == 2.0,
            }),
            Family::Cauchy => Some(Smoothness {
                c2: true,
                rho_second_l1: true,
            }),
            Family::Custom { .. } => None,
        }
    }

    /// Points where ρ may fail to be smooth (quadrature breakpoints).
    pub fn kinks(&self) -> &'static [f64] {
        &[0.0]
    }

    /// Effective support radius: |u| beyond this carries < 1e-16 mass for
    /// light-tailed builtins, +∞ for heavy tails.
    pub fn light_tail_radius(&self) -> f64 {
        match self.family {
            Family::Besov { p, .. } => 40f64.powf(1.0 / p),
            _ => f64::INFINITY,
        }
    }
}

struct DynRng<'a, R: Rng + ?Sized>(&'a mut R);

impl<R: Rng + ?Sized> RngCore for DynRng<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
}

/// Fisher information `∫ (ρ′)²/ρ` with a quadrature error estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherInfo {
    /// The closed form when registered, otherwise the quadrature value.
    pub value: f64,
    pub quadrature: f64,
    pub error: f64,
    pub closed_form: Option<f64>,
    pub finite: bool,
    pub punctured: bool,
}

fn has_kink_at_zero(r: &ReferenceDensity) -> bool {
    let rho0 = r.density(0.0);
    let slope = |h: f64| (rho0 - r.density(h)) / h;
    let fine = slope(1e-8);
    let coarse = slope(1e-6);
    fine > 1e-6 * rho0 && fine / coarse >= 0.99
}

/// Symmetric breakpoints `0, ±1, ±4, ±16, …` up to `±window`.
fn geometric_breaks(window: f64, zero: bool) -> Vec<f64> {
    let mut pos = vec![1.0];
    while pos[pos.len() - 1] * 4.0 < window.min(8192.0) {
        pos.push(pos[pos.len() - 1] * 4.0);
    }
    pos.push(window);
    let mut out: Vec<f64> = pos.iter().rev().map(|x| -x).collect();
    if zero {
        out.push(0.0);
    }
    out.extend(pos);
    out
}

fn fisher_quadrature(r: &ReferenceDensity, window: f64, punctured: bool) -> (f64, f64) {
    let integrand = |u: f64| {
        let rho = r.density(u);
        if rho < 1e-300 {
            return 0.0;
        }
        let d = (r.density(u + FD_STEP) - r.density(u - FD_STEP)) / (2.0 * FD_STEP);
        d * d / rho
    };
    let q = Quadrature::with_abs_tol(VALIDATOR_TOL);
    let res = if punctured {
        let br = geometric_breaks(window, false);
        let half = br.len() / 2;
        let mut neg = br[..half].to_vec();
        neg.push(-PUNCTURE);
        let mut pos = vec![PUNCTURE];
        pos.extend_from_slice(&br[half..]);
        let a = q.integrate_breaks(&integrand, &neg);
        let b = q.integrate_breaks(&integrand, &pos);
        (a.value + b.value, a.error + b.error)
    } else {
        let r = q.integrate_breaks(&integrand, &geometric_breaks(window, true));
        (r.value, r.error)
    };
    res
}

/// Fisher information of `ρ`; `finite = false` signals growth without bound
/// as the integration window expands.
pub fn fisher_information(r: &ReferenceDensity) -> FisherInfo {
    let punctured = has_kink_at_zero(r);
    let windows = [16.0, 64.0, 256.0, 1024.0, f64::INFINITY];
    let vals: Vec<(f64, f64)> = windows
        .iter()
        .map(|w| fisher_quadrature(r, *w, punctured))
        .collect();
    let (quad, err) = vals[vals.len() - 1];
    let incs: Vec<f64> = vals.windows(2).map(|w| (w[1].0 - w[0].0).abs()).collect();
    let settled = incs[incs.len() - 1] <= 1e-6 * quad.abs().max(1.0);
    let finite = quad.is_finite() && (settled || incs.windows(2).all(|w| w[1] < 0.5 * w[0]));
    let closed = r.fisher_closed_form();
    FisherInfo {
        value: closed.unwrap_or(quad),
        quadrature: quad,
        error: err,
        closed_form: closed,
        finite: closed.map(|c| c.is_finite()).unwrap_or(finite),
        punctured,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Passes with a caveat recorded in the notes.
    Flagged,
}

/// Numerical assumption report for a reference density.
///
/// Verdicts are "numerically consistent with" the assumptions on the grids
/// and windows used; they are not proofs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub reference: String,
    /// Continuous, symmetric, normalized, strictly decreasing on ℝ≥0.
    pub a2: CheckStatus,
    /// Finite Fisher information.
    pub a4: CheckStatus,
    /// ρ ∈ C² and ρ″ ∈ L¹.
    pub a5: CheckStatus,
    /// Besov p ∈ [1, 2] branch available in place of the smoothness assumption.
    pub a6_branch: bool,
    pub normalization: f64,
    pub fisher: FisherInfo,
    pub notes: Vec<String>,
}

impl AssumptionReport {
    /// Whether the density may be used inside a product measure.
    pub fn admissible(&self) -> bool {
        self.a2 == CheckStatus::Pass && self.a4 != CheckStatus::Fail
    }
}

/// Grid and quadrature checks of the reference-density assumptions.
pub fn validate_assumptions(r: &ReferenceDensity) -> AssumptionReport {
    let mut notes = Vec::new();
    let rho0 = r.density(0.0);

    // A2
    let grid: Vec<f64> = (0..=1000).map(|i| 10.0 * i as f64 / 1000.0).collect();
    let symmetric = grid
        .iter()
        .all(|u| (r.density(*u) - r.density(-*u)).abs() <= 1e-12 * rho0);
    let decreasing = grid
        .windows(2)
        .all(|w| r.density(w[1]) < r.density(w[0]) || r.density(w[0]) < 1e-290);
    let q = Quadrature::with_abs_tol(1e-12);
    let normalization = q.integrate_real_line(|u| r.density(u), r.kinks()).value;
    let normalized = (normalization - 1.0).abs() <= 1e-8;
    if !symmetric {
        notes.push("density is not symmetric on the test grid".into());
    }
    if !decreasing {
        notes.push("density is not strictly decreasing on [0, 10]".into());
    }
    if !normalized {
        notes.push(format!("density integrates to {normalization}"));
    }
    let a2 = if symmetric && decreasing && normalized {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };

    // A4
    let fisher = fisher_information(r);
    let a4 = if !fisher.finite {
        notes.push("Fisher information diverges as the window grows".into());
        CheckStatus::Fail
    } else if fisher.punctured {
        notes.push("density has a kink at 0; Fisher quadrature punctured there".into());
        CheckStatus::Flagged
    } else {
        CheckStatus::Pass
    };

    // A5: FD second derivative must be resolution-independent at 0 and on a grid.
    let d2_at_zero = |h: f64| 2.0 * (r.density(h) - rho0) / (h * h);
    let coarse = d2_at_zero(1e-2);
    let fine = d2_at_zero(1e-5);
    let smooth_at_zero = (fine - coarse).abs() <= 1e-3 * coarse.abs().max(1e-12);
    let d2 = |u: f64, h: f64| (r.density(u + h) - 2.0 * r.density(u) + r.density(u - h)) / (h * h);
    let smooth_on_grid = grid.iter().skip(5).all(|u| {
        let a = d2(*u, 1e-3);
        let b = d2(*u, 1e-4);
        (a - b).abs() <= 1e-3 * a.abs() + 1e-7
    });
    let l1 = |w: f64| {
        Quadrature::with_abs_tol(1e-9)
            .integrate_breaks(|u| r.second_derivative(u).abs(), &geometric_breaks(w, true))
            .value
    };
    let (l1_a, l1_b) = (l1(256.0), l1(4096.0));
    let l1_finite = l1_b.is_finite() && (l1_b - l1_a).abs() <= 1e-4 * l1_b.max(1.0);
    if !smooth_at_zero {
        notes.push("second derivative does not settle at 0 (not C^2 there)".into());
    }
    if !smooth_on_grid {
        notes.push("second derivative unstable on the grid".into());
    }
    if smooth_at_zero && !l1_finite {
        notes.push("rho'' not integrable on expanding windows".into());
    }
    let a5 = if smooth_at_zero && smooth_on_grid && l1_finite {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };

    let a6_branch = r.besov_p().is_some();
    if a5 == CheckStatus::Fail && a6_branch {
        notes.push("smoothness fails; Besov branch (1 <= p <= 2) applies instead".into());
    }

    AssumptionReport {
        reference: r.name().to_string(),
        a2,
        a4,
        a5,
        a6_branch,
        normalization,
        fisher,
        notes,
    }
}
