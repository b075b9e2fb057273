//! Deciding, certifying and reconstructing pairs of affine-equivalent
//! bar-and-joint frameworks with prescribed bar lengths.
//!
//! The crate is organized around Cayley-Menger determinants of squared
//! distances:
//!
//! - [`cm`]: determinants, simplex volumes, Menger's embeddability test,
//!   quadratic slices and the side classification they induce.
//! - [`embed`]: coordinates from distances and back.
//! - [`system`]: the polynomial system over `(z, z', α)` and its checker.
//! - [`reconstruct`]: frameworks and the affine map from a checked assignment.
//! - [`solver`]: YES / NO / UNKNOWN decisions with certificates or witnesses.
//! - [`smt`]: export of the system as quantifier-free nonlinear real
//!   arithmetic.
//!
//! The numeric core is generic over [`Scalar`]; `f64` runs with relative
//! tolerances and [`Rational`] runs exactly.

pub mod cm;
pub mod embed;
pub mod error;
pub mod linalg;
mod lm;
pub mod poly;
pub mod reconstruct;
pub mod scalar;
pub mod smt;
pub mod solver;
pub mod system;

pub use cm::{
    cmd, menger_check, normalized_cmd, quadratic_slice, side_classify, simplex_volume_sq, EmbeddabilityReport,
    IndexSet, MengerCondition, QuadraticSlice, SideClass, SquaredDistanceMatrix,
};
pub use embed::{distances_of, embed, Configuration, Embedding};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use reconstruct::{affine_from_simplex, reconstruct, verify_frameworks, AffineMap, FrameworkReport, Reconstruction};
pub use scalar::{parse_rational, Real, Scalar, Tolerance};
pub use solver::{
    line_oracle, random_instance, search, solve, solve_fixed_left, Certificate, NoWitness, Obstruction, Planted,
    SearchBudget, Verdict, VerdictKind,
};
pub use system::{
    build_system, check_assignment, estimate_alpha, find_base_simplex, Assignment, Condition, ConditionEntry,
    ConditionReport, Edge, Instance, Side, SystemDescription,
};

/// Exact rational scalar.
pub type Rational = num_rational::BigRational;

pub type Distances = SquaredDistanceMatrix<f64>;
pub type ExactDistances = SquaredDistanceMatrix<Rational>;
pub type Points = Configuration<f64>;
pub type ExactPoints = Configuration<Rational>;
pub type FloatInstance = Instance<f64>;
pub type ExactInstance = Instance<Rational>;
pub type FloatAssignment = Assignment<f64>;
pub type ExactAssignment = Assignment<Rational>;
pub type Affine = AffineMap<f64>;
