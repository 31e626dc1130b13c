//! Higher-order unfitted space-time finite elements for coupled bulk-surface
//! convection-diffusion on moving domains described by a level set.
//!
//! Each time slab uses a piecewise linear (in space) level set, cut
//! quadrature on the resulting polygons, and a time-dependent isoparametric
//! mapping that lifts the geometry to order `q`. Bulk and surface unknowns
//! live in discontinuous-in-time Lagrange spaces on the active background
//! elements, stabilised by ghost penalty and normal-gradient terms.

pub mod basis;
pub mod cut_quadrature;
pub mod error;
pub mod forms;
pub mod isoparam;
pub mod levelset;
pub mod mesh;
pub mod model;
pub mod postprocess;
pub mod problem;
pub mod quadrature;
pub mod scalar;
pub mod slab;
pub mod solver;
pub mod space;
pub mod study;
pub mod timestepping;
pub mod verify;

pub use error::{Error, Result};
pub use model::{ExactSolution, ModelData, ModelParams};

/// Scalar type of the assembly, mapping and solver layers.
pub type Scalar = f64;
