//! Embedded matrix manifolds with the Euclidean metric.

pub mod normal;
pub mod stiefel;

pub use normal::{FixedRankPoint, GrassmannPoint, NormalBasis, ProductPoint, PsdFixedRankPoint};
pub use stiefel::{feasibility_residual, NormalCoords, PolarStep, StiefelPoint, TangentCoords, TangentVector};
