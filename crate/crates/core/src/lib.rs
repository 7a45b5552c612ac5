//! Numerical toolkit for operator-valued dyadic shifts and paraproducts on
//! truncated product grids: Haar calculus, shift and paraproduct operators,
//! mixed-norm functionals, randomized estimators, and stopping-time families.

pub mod dyadic;
pub mod error;
pub mod lattice;
pub mod layout;
pub mod matrix;
pub mod model;
pub mod norm_tree;
pub mod norms;
pub mod operator;
pub mod paraproduct;
pub mod randomized;
pub mod rng;
pub mod shift;
pub mod stopping;

pub use dyadic::{AxisId, DiscreteField, DyadicCube, GridAxis, HaarIndex};
pub use error::{Error, Result};
pub use lattice::{LatticeSpec, MixedNormSpec};
pub use matrix::Matrix;
pub use operator::{FieldShape, LinearOp};
