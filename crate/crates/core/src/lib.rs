//! Product measures on weighted sequence spaces.
//!
//! Reference densities, product measures of the form `⊗ μ₀(γ_k⁻¹(· − m_k))`,
//! Onsager–Machlup functionals, shift densities and the small-ball
//! experiments that connect them.

pub mod error;
pub mod map_estimation;
pub mod mc;
pub mod numerics;
pub mod om_functional;
pub mod product_measure;
pub mod reference;
pub mod shift_density;
pub mod small_ball;
pub mod synthesis;
pub mod weighted_spaces;

pub use error::{Error, Result};
pub use map_estimation::{
    map_convergence_experiment, posterior_objective, solve_map, MapResult, Method, Potential,
    PotentialConfig, SolverOptions,
};
pub use mc::McEstimate;
pub use om_functional::{
    formal_neg_log_density, gamma_probe, om_besov, om_cauchy, sublevel_box, MeasureFamily,
    OmEvaluation,
};
pub use product_measure::{BesovParams, CauchyParams, MeasureConfig, ProductMeasureSpec};
pub use shift_density::{kakutani_product, shepp_test, Equivalence, TestFunctional, Trend};
pub use small_ball::{BallSpec, SymmetricFn};
pub use synthesis::{pushforward_om, Basis};
pub use reference::{ReferenceDensity, RefSpec};
pub use weighted_spaces::{
    certify_series, weighted_norm, Base, Point, PowerGeometric, SeqExpr, SpaceSpec, Verdict,
    WeightRule, WeightSeq,
};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
