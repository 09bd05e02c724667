//! Fixtures shared by the kernel benchmarks.

use om_core::map_estimation::{posterior_objective, Objective};
use om_core::{BesovParams, CauchyParams, Potential, ProductMeasureSpec, WeightSeq};

pub fn besov(p: f64) -> ProductMeasureSpec {
    ProductMeasureSpec::besov(BesovParams::new(2.0, 1, p, 1.0)).expect("valid Besov parameters")
}

pub fn cauchy() -> ProductMeasureSpec {
    let gamma = WeightSeq::geometric(2.0, 0.5).expect("valid weights");
    ProductMeasureSpec::cauchy(CauchyParams::new(gamma, 1.0)).expect("valid Cauchy parameters")
}

/// Gaussian prior with a random `16 x k` forward map.
pub fn gaussian_posterior(k: usize) -> Objective {
    let phi = Potential::random_linear_gaussian(16, k, 1.0, 7).expect("valid potential");
    posterior_objective(&besov(2.0), phi, k).expect("valid objective")
}
