//! Toy Bayesian inverse problems: posterior objective `J = 𝔮_{γ,m} + Φ` on
//! the first `K` coordinates, MAP solvers, and MAP convergence under
//! converging priors.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::om_functional::{check_family, MeasureFamily};
use crate::product_measure::ProductMeasureSpec;
use crate::reference::ReferenceDensity;
use crate::synthesis::Basis;
use crate::weighted_spaces::SpaceSpec;

type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Data misfit `Φ`.
#[derive(Clone)]
pub enum Potential {
    Zero,
    /// `Φ(h) = |A h − y|² / (2σ²)`.
    LinearGaussian {
        a: DMatrix<f64>,
        y: DVector<f64>,
        sigma: f64,
    },
    Custom {
        eval: EvalFn,
        grad: GradFn,
    },
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Zero => write!(f, "Zero"),
            Potential::LinearGaussian { a, sigma, .. } => {
                write!(f, "LinearGaussian({}x{}, sigma={sigma})", a.nrows(), a.ncols())
            }
            Potential::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl Potential {
    pub fn linear_gaussian(a: DMatrix<f64>, y: DVector<f64>, sigma: f64) -> Result<Self> {
        if a.nrows() != y.len() {
            return Err(Error::param("y", "length must match the rows of A"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param("sigma", "must be finite and > 0"));
        }
        Ok(Potential::LinearGaussian { a, y, sigma })
    }

    /// `A` with i.i.d. `N(0, 1/M)` entries and `y = A x† + σ ε` where
    /// `x†_k = k^{-2}` and `ε` is standard normal, all from `seed`.
    pub fn random_linear_gaussian(m: usize, k: usize, sigma: f64, seed: u64) -> Result<Self> {
        if m == 0 || k == 0 {
            return Err(Error::param("M, K", "must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (m as f64).sqrt();
        let a = DMatrix::from_fn(m, k, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        });
        let truth = DVector::from_fn(k, |i, _| ((i + 1) as f64).powi(-2));
        let noise = DVector::from_fn(m, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        });
        let y = &a * truth + noise;
        Self::linear_gaussian(a, y, sigma)
    }

    pub fn identity(y: Vec<f64>, sigma: f64) -> Result<Self> {
        let k = y.len();
        Self::linear_gaussian(DMatrix::identity(k, k), DVector::from_vec(y), sigma)
    }

    fn check_dim(&self, k: usize) -> Result<()> {
        match self {
            Potential::LinearGaussian { a, .. } if a.ncols() != k => Err(Error::param(
                "A",
                format!("has {} columns but K = {k}", a.ncols()),
            )),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::LinearGaussian { a, y, sigma } => {
                let r = a * DVector::from_column_slice(x) - y;
                r.norm_squared() / (2.0 * sigma * sigma)
            }
            Potential::Custom { eval, .. } => eval(x),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Potential::Zero => vec![0.0; x.len()],
            Potential::LinearGaussian { a, y, sigma } => {
                let r = a * DVector::from_column_slice(x) - y;
                (a.transpose() * r / (sigma * sigma)).as_slice().to_vec()
            }
            Potential::Custom { grad, .. } => grad(x),
        }
    }

    /// Lipschitz constant of the gradient (`‖A‖²/σ²` for linear-Gaussian).
    fn lipschitz(&self) -> Option<f64> {
        match self {
            Potential::Zero => Some(0.0),
            Potential::LinearGaussian { a, sigma, .. } => {
                let ata = a.transpose() * a;
                let top = ata.symmetric_eigenvalues().max();
                Some(top / (sigma * sigma))
            }
            Potential::Custom { .. } => None,
        }
    }

    /// Diagonal of the Hessian where known.
    fn hessian_diagonal(&self, k: usize) -> Vec<f64> {
        match self {
            Potential::LinearGaussian { a, sigma, .. } => (0..k)
                .map(|j| a.column(j).norm_squared() / (sigma * sigma))
                .collect(),
            _ => vec![0.0; k],
        }
    }
}

/// Potential description in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", rename_all_fields = "camelCase", deny_unknown_fields)]
pub enum PotentialConfig {
    Zero,
    LinearGaussian {
        a: Vec<Vec<f64>>,
        y: Vec<f64>,
        sigma: f64,
    },
    /// `A` and `y` read from comma-separated files (`y` one column or one row).
    LinearGaussianCsv {
        a_file: String,
        y_file: String,
        sigma: f64,
    },
    /// `A = I`.
    Identity { y: Vec<f64>, sigma: f64 },
    RandomLinearGaussian {
        m: usize,
        k: usize,
        sigma: f64,
        seed: u64,
    },
}

impl PotentialConfig {
    pub fn build(&self) -> Result<Potential> {
        match self {
            PotentialConfig::Zero => Ok(Potential::Zero),
            PotentialConfig::LinearGaussian { a, y, sigma } => {
                let rows = a.len();
                let cols = a.first().map_or(0, |r| r.len());
                if rows == 0 || a.iter().any(|r| r.len() != cols) {
                    return Err(Error::param("A", "ragged or empty matrix"));
                }
                let m = DMatrix::from_fn(rows, cols, |i, j| a[i][j]);
                Potential::linear_gaussian(m, DVector::from_column_slice(y), *sigma)
            }
            PotentialConfig::LinearGaussianCsv { a_file, y_file, sigma } => {
                let read = |path: &str| {
                    std::fs::read_to_string(path)
                        .map_err(|e| Error::param("potential", format!("cannot read {path}: {e}")))
                };
                let a = Basis::parse_csv(&read(a_file)?)?;
                let y = Basis::parse_csv(&read(y_file)?)?;
                if y.nrows() != 1 && y.ncols() != 1 {
                    return Err(Error::param("yFile", "must hold a single row or column"));
                }
                Potential::linear_gaussian(a, DVector::from_iterator(y.len(), y.iter().copied()), *sigma)
            }
            PotentialConfig::Identity { y, sigma } => Potential::identity(y.clone(), *sigma),
            PotentialConfig::RandomLinearGaussian { m, k, sigma, seed } => {
                Potential::random_linear_gaussian(*m, *k, *sigma, *seed)
            }
        }
    }
}

/// `J(h) = Σ_{k≤K} 𝔮((h_k − m_k)/γ_k) + Φ(h_{1:K})`.
#[derive(Clone, Debug)]
pub struct Objective {
    reference: ReferenceDensity,
    m: Vec<f64>,
    gamma: Vec<f64>,
    phi: Potential,
}

pub fn posterior_objective(spec: &ProductMeasureSpec, phi: Potential, k: usize) -> Result<Objective> {
    if k == 0 {
        return Err(Error::param("K", "must be >= 1"));
    }
    phi.check_dim(k)?;
    Ok(Objective {
        reference: spec.reference().clone(),
        m: spec.shift().prefix(k),
        gamma: spec.gamma().prefix(k),
        phi,
    })
}

impl Objective {
    pub fn k(&self) -> usize {
        self.m.len()
    }

    pub fn shift(&self) -> &[f64] {
        &self.m
    }

    pub fn prior(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.m)
            .zip(&self.gamma)
            .map(|((x, m), g)| self.reference.neg_log((x - m) / g))
            .sum()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.prior(x) + self.phi.eval(x)
    }

    /// Gradient (a subgradient where `𝔮` has a kink).
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.phi.gradient(x);
        for i in 0..x.len() {
            g[i] += self.reference.neg_log_derivative((x[i] - self.m[i]) / self.gamma[i]) / self.gamma[i];
        }
        g
    }

    fn l1_prior(&self) -> bool {
        self.reference.besov_p() == Some(1.0)
    }

    /// Gaussian-prior normal equations `(2Γ⁻² + AᵀA/σ²) h = 2Γ⁻² m + Aᵀy/σ²`.
    pub fn normal_equations(&self) -> Result<Vec<f64>> {
        if self.reference.besov_p() != Some(2.0) {
            return Err(Error::Unsupported("normal equations need a p = 2 prior".into()));
        }
        let k = self.k();
        let d = DVector::from_fn(k, |i, _| 2.0 / (self.gamma[i] * self.gamma[i]));
        let (mut h, mut rhs) = (DMatrix::from_diagonal(&d), d.component_mul(&DVector::from_column_slice(&self.m)));
        match &self.phi {
            Potential::Zero => {}
            Potential::LinearGaussian { a, y, sigma } => {
                let s2 = sigma * sigma;
                h += a.transpose() * a / s2;
                rhs += a.transpose() * y / s2;
            }
            Potential::Custom { .. } => {
                return Err(Error::Unsupported("normal equations need a linear-Gaussian potential".into()))
            }
        }
        let x = h
            .cholesky()
            .ok_or_else(|| Error::Numerical("normal matrix not positive definite".into()))?
            .solve(&rhs);
        Ok(x.as_slice().to_vec())
    }

    /// Coordinate-wise closed form for a `p = 1` prior with `A = I`:
    /// `m_k + soft(y_k − m_k, σ²/γ_k)`.
    pub fn soft_threshold_solution(&self) -> Result<Vec<f64>> {
        let Potential::LinearGaussian { a, y, sigma } = &self.phi else {
            return Err(Error::Unsupported("closed form needs A = I".into()));
        };
        if !self.l1_prior() || *a != DMatrix::identity(self.k(), self.k()) {
            return Err(Error::Unsupported("closed form needs a p = 1 prior and A = I".into()));
        }
        Ok((0..self.k())
            .map(|i| self.m[i] + soft(y[i] - self.m[i], sigma * sigma / self.gamma[i]))
            .collect())
    }
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Monotone FISTA with the exact soft-threshold prox (p = 1 priors).
    ProxGrad,
    /// Preconditioned nonlinear conjugate gradients with a secant step and
    /// step halving (smooth priors).
    GradDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct SolverOptions {
    /// Initial step multiplier.
    pub step: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            step: 1.0,
            max_iter: 10_000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    pub argmin: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub k: usize,
    pub method: Method,
    /// Objective at the initial point and after each accepted iteration.
    pub trace: Vec<f64>,
}

/// Minimize `J` from `init`.
pub fn solve_map(j: &Objective, method: Method, init: &[f64], opts: &SolverOptions) -> Result<MapResult> {
    if init.len() != j.k() {
        return Err(Error::param("init", format!("expected length {}", j.k())));
    }
    if !(opts.tol > 0.0 && opts.step > 0.0) {
        return Err(Error::param("opts", "tol and step must be > 0"));
    }
    match method {
        Method::ProxGrad => {
            if !j.l1_prior() {
                return Err(Error::Unsupported("prox-grad handles p = 1 priors only".into()));
            }
            prox_grad(j, init, opts)
        }
        Method::GradDescent => {
            if j.l1_prior() {
                return Err(Error::Unsupported(
                    "grad-descent needs a differentiable prior; use prox-grad for p = 1".into(),
                ));
            }
            nonlinear_cg(j, init, opts)
        }
    }
}

/// The method matching the prior.
pub fn default_method(spec: &ProductMeasureSpec) -> Method {
    if spec.reference().besov_p() == Some(1.0) {
        Method::ProxGrad
    } else {
        Method::GradDescent
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn nonlinear_cg(j: &Objective, init: &[f64], opts: &SolverOptions) -> Result<MapResult> {
    let k = j.k();
    // Jacobi preconditioner from 𝔮″(0)/γ² plus the potential's diagonal.
    let q2 = {
        let h = 1e-4;
        let r = &j.reference;
        ((r.neg_log(h) - 2.0 * r.neg_log(0.0) + r.neg_log(-h)) / (h * h)).max(1e-12)
    };
    let phi_diag = j.phi.hessian_diagonal(k);
    let precond: Vec<f64> = (0..k)
        .map(|i| 1.0 / (q2 / (j.gamma[i] * j.gamma[i]) + phi_diag[i]))
        .collect();

    let mut x = init.to_vec();
    let mut fx = j.value(&x);
    let mut trace = vec![fx];
    let mut g = j.gradient(&x);
    let mut z: Vec<f64> = g.iter().zip(&precond).map(|(a, p)| a * p).collect();
    let mut d: Vec<f64> = z.iter().map(|v| -v).collect();
    let mut gz = dot(&g, &z);
    let scale = |x: &[f64], fx: f64| opts.tol * (1.0 + fx.abs()) / (1.0 + max_abs(x));
    let mut converged = max_abs(&g) <= scale(&x, fx) || gz.sqrt() <= opts.tol;
    let mut iters = 0;
    while !converged && iters < opts.max_iter {
        iters += 1;
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            // restart along the preconditioned steepest descent
            d = z.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        // secant estimate of the curvature along d
        let eps = 1e-7 * (1.0 + max_abs(&x)) / max_abs(&d).max(1e-300);
        let gp = j.gradient(&axpy(&x, eps, &d));
        let curv = (dot(&gp, &d) - slope) / eps;
        let mut t = if curv > 0.0 { -slope / curv } else { opts.step };
        let mut accepted = None;
        for _ in 0..60 {
            let xn = axpy(&x, t, &d);
            let fxn = j.value(&xn);
            if fxn <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fxn));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fxn)) = accepted else {
            // No decrease along d: stationary to working precision.
            let gnorm = gz.sqrt();
            converged = gnorm <= 1e-6 * (1.0 + fx.abs());
            break;
        };
        let gn = j.gradient(&xn);
        let zn: Vec<f64> = gn.iter().zip(&precond).map(|(a, p)| a * p).collect();
        let gzn = dot(&gn, &zn);
        let beta = ((gzn - dot(&gn, &z)) / gz).max(0.0);
        d = zn.iter().zip(&d).map(|(a, b)| -a + beta * b).collect();
        let step = max_abs(&axpy(&xn, -1.0, &x));
        let decrease = fx - fxn;
        x = xn;
        fx = fxn;
        trace.push(fx);
        g = gn;
        z = zn;
        gz = gzn;
        converged = max_abs(&g) <= scale(&x, fx)
            || gz.sqrt() <= opts.tol
            || (step <= 1e-15 * (1.0 + max_abs(&x)) && decrease <= 1e-15 * (1.0 + fx.abs()));
    }
    if !fx.is_finite() {
        return Err(Error::Numerical("objective became non-finite".into()));
    }
    Ok(MapResult {
        argmin: x,
        objective: fx,
        iterations: iters,
        converged,
        k,
        method: Method::GradDescent,
        trace,
    })
}

fn prox_grad(j: &Objective, init: &[f64], opts: &SolverOptions) -> Result<MapResult> {
    let k = j.k();
    let lip = j
        .phi
        .lipschitz()
        .ok_or_else(|| Error::Unsupported("prox-grad needs a known Lipschitz constant".into()))?;
    if lip == 0.0 {
        let x = j.m.clone();
        let f = j.value(&x);
        return Ok(MapResult {
            objective: f,
            argmin: x,
            iterations: 0,
            converged: true,
            k,
            method: Method::ProxGrad,
            trace: vec![j.value(init), f],
        });
    }
    let t = opts.step / lip;
    let prox = |v: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|i| j.m[i] + soft(v[i] - j.m[i], t / j.gamma[i]))
            .collect()
    };
    let mut x = init.to_vec();
    let mut fx = j.value(&x);
    let mut trace = vec![fx];
    let mut yk = x.clone();
    let mut tk = 1.0f64;
    let mut converged = false;
    let mut iters = 0;
    while iters < opts.max_iter {
        iters += 1;
        let g = j.phi.gradient(&yk);
        let z = prox(&axpy(&yk, -t, &g));
        let fz = j.value(&z);
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        let (xn, fxn) = if fz <= fx { (z.clone(), fz) } else { (x.clone(), fx) };
        yk = (0..k)
            .map(|i| xn[i] + (tk / tn) * (z[i] - xn[i]) + ((tk - 1.0) / tn) * (xn[i] - x[i]))
            .collect();
        let step = max_abs(&axpy(&xn, -1.0, &x));
        // generalized gradient at the prox point
        let gen = max_abs(&axpy(&z, -1.0, &prox(&axpy(&z, -t, &j.phi.gradient(&z))))) / t;
        x = xn;
        fx = fxn;
        tk = tn;
        trace.push(fx);
        if gen <= opts.tol * (1.0 + fx.abs()) || (step == 0.0 && fz >= fx && gen <= 1e-8) {
            converged = true;
            if fz <= fx {
                x = z;
                fx = fz;
                trace.push(fx);
            }
            break;
        }
    }
    Ok(MapResult {
        argmin: x,
        objective: fx,
        iterations: iters,
        converged,
        k,
        method: Method::ProxGrad,
        trace,
    })
}

/// Best of several starts (for nonconvex priors).
pub fn solve_map_multistart(
    j: &Objective,
    method: Method,
    inits: &[Vec<f64>],
    opts: &SolverOptions,
) -> Result<(MapResult, Vec<MapResult>)> {
    let runs: Vec<MapResult> = inits
        .iter()
        .map(|s| solve_map(j, method, s, opts))
        .collect::<Result<_>>()?;
    let best = runs
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .cloned()
        .ok_or_else(|| Error::param("inits", "need at least one start"))?;
    Ok((best, runs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapRow {
    pub n: usize,
    /// `‖MAP^{(n)} − MAP^{(∞)}‖` in the limit's ambient space on `K` coordinates.
    pub dist: f64,
    pub obj: f64,
    pub iters: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapConvergence {
    pub rows: Vec<MapRow>,
    pub limit: MapResult,
    pub maps: Vec<Vec<f64>>,
}

/// MAP points of each family member against the limit's MAP, all from the
/// limit's shift as initial point.
pub fn map_convergence_experiment(
    family: &MeasureFamily,
    phi: &Potential,
    k: usize,
    n_grid: &[usize],
    method: Method,
    opts: &SolverOptions,
) -> Result<MapConvergence> {
    let hyp = check_family(family, n_grid, k)?;
    if !hyp.ok {
        return Err(Error::hypothesis(format!(
            "family fails the convergence hypotheses: {}",
            hyp.notes.join("; ")
        )));
    }
    let limit_spec = family.limit()?;
    let metric: SpaceSpec = limit_spec.ambient().clone();
    let jl = posterior_objective(&limit_spec, phi.clone(), k)?;
    let limit = solve_map(&jl, method, jl.shift(), opts)?;
    let results: Vec<(MapRow, Vec<f64>)> = n_grid
        .par_iter()
        .map(|n| {
            let spec = family.member(*n)?;
            let jn = posterior_objective(&spec, phi.clone(), k)?;
            let r = solve_map(&jn, method, jl.shift(), opts)?;
            let diff: Vec<f64> = r.argmin.iter().zip(&limit.argmin).map(|(a, b)| a - b).collect();
            Ok((
                MapRow {
                    n: *n,
                    dist: metric.prefix_norm(&diff),
                    obj: r.objective,
                    iters: r.iterations,
                    converged: r.converged,
                },
                r.argmin,
            ))
        })
        .collect::<Result<_>>()?;
    let (rows, maps) = results.into_iter().unzip();
    Ok(MapConvergence { rows, limit, maps })
}
