//! Conic optimization: an interior-point solver for LP/SDP cones and a
//! modeling layer over complex Hermitian matrix variables.

pub mod cone;
pub mod model;
pub mod solver;

pub use model::{AffExpr, ConeTag, ConicProblem, ModelSolution, Var};
pub use solver::{SolveStatus, SolverSettings, SolverStats};
