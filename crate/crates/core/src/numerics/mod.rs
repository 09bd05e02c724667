//! Small numerical kernels shared by the measure-theoretic modules.

pub mod quad;
mod roots;
mod sum;

pub use roots::invert_increasing;
pub use sum::KahanSum;
