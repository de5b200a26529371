//! Bounds and Lyapunov-type stability certificates for the joint spectral
//! radius of finite sets of small real matrices.

pub mod conic;
pub mod error;
pub mod families;
pub mod jsr;
pub mod linalg;
mod lp;
pub mod polytope;
pub mod quadratic;
pub mod sos;

pub use error::{Error, Result};
pub use linalg::{Matrix, MatrixSet, ProductWord};

/// Seed for the random points used by certificate validation.
pub const DEFAULT_SEED: u64 = 42;
/// Number of random unit vectors each pointwise validation samples.
pub const VALIDATION_SAMPLES: usize = 1000;

/// Outcome of a certificate search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Feasible,
    Infeasible,
    /// The solver could not decide (iteration limit, breakdown, or a margin
    /// too close to zero).
    Undetermined,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Feasible => "feasible",
            Status::Infeasible => "infeasible",
            Status::Undetermined => "undetermined",
        })
    }
}
