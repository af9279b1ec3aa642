//! Concrete spaces shipped with the library.

mod euclidean;
mod funk;
mod minkowski;
mod randers;
mod tangent;

pub use euclidean::Euclidean;
pub use funk::FunkBall;
pub use minkowski::{Minkowski, MinkowskiNorm};
pub use randers::Randers;
pub use tangent::{
    descending_gradient, dual_norm_by_search, duality_map_jp, duality_set_jp, duality_set_jp_inv,
    funk_reversibility_profile, gradient, legendre_consistency_check, numeric_legendre_inv, TangentStructure,
};
