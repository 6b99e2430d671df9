//! Covariant (fibration-free) Lagrange field theory on Kawaguchi manifolds.
//!
//! A Kawaguchi manifold `(M, K)` carries an areal metric `K(x, dx)`: a function of a
//! point `x` and the Plücker components `dx^{μ0…μn}` of an (n+1)-multivector,
//! positively 1-homogeneous in `dx`. `K` measures the hyperarea of oriented
//! (n+1)-dimensional submanifolds, and every classical field Lagrangian lifts to such
//! a `K` on the extended configuration space (spacetime × field values). Extremal
//! surfaces of the area functional reproduce the field equations, with no distinction
//! between "spacetime" and "field" coordinates.
//!
//! The crate provides, numerically and at desk scale:
//!
//! - [`multivector`]: sorted multi-index bookkeeping and Plücker coordinates from
//!   parameterization Jacobians;
//! - [`expr`]: a small expression DSL over coordinates `x0…xN` and Plücker symbols
//!   `d[i,…,j]`, with exact forward-mode first derivatives;
//! - [`kform`]: the Kawaguchi form itself — homogeneity and Euler-identity checks,
//!   momenta, the Hilbert–Carathéodory contraction, and the Lagrangian lift;
//! - [`surface`]: discretized parameterized surfaces on rectangular grids, pullbacks,
//!   the discrete action and a discrete exterior derivative with exact Stokes;
//! - [`variational`]: covariant Euler-Lagrange residuals (direct and expanded forms),
//!   the exact discrete action gradient and a damped Newton–Krylov boundary-value solver;
//! - [`noether`]: Lie derivatives along (generalized) vector fields, Killing checks,
//!   covariant Nöther currents and conservation diagnostics;
//! - [`catalog`]: ready-made models (free particle, Nambu-Goto string, complex scalar,
//!   Maxwell) with their Killing vectors, reference currents and exact test solutions;
//! - [`model_file`]: the plain-text model format used by the CLI.

pub mod catalog;
pub mod expr;
pub mod kform;
pub mod model_file;
pub mod multivector;
pub mod noether;
pub mod report;
pub mod surface;
pub mod variational;

pub use expr::{EvalError, EvalPoint, Expression, ParseError};
pub use kform::KawaguchiForm;
pub use multivector::{Dims, MultiIndex, PluckerVector};
pub use surface::{GridNForm, Surface};

/// Crate-wide error type; variants carry enough context to locate the failure.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular cell {cell:?}: {reason}")]
    SingularCell { cell: Vec<usize>, reason: String },
    #[error("singular face (direction {dir}, index {face:?}): {reason}")]
    SingularFace {
        dir: usize,
        face: Vec<usize>,
        reason: String,
    },
    #[error("solver diverged: {0}")]
    SolverDiverged(String),
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("bad model parameter: {0}")]
    BadParameter(String),
    #[error("model file error: {0}")]
    ModelFile(String),
    #[error("surface file error: {0}")]
    SurfaceFile(String),
    #[error("index out of range: {0}")]
    IndexRange(String),
}

pub type Result<T> = std::result::Result<T, Error>;
