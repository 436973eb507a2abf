//! # renyi
//!
//! Dense numerical toolkit for quantum Rényi divergences and the mutual-information
//! measures built from them, at exact-diagonalization scale (Hilbert dimensions up
//! to ~2^10).
//!
//! ## What lives where
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`linalg`] | Hermitian spectral engine: eigendecompositions, matrix functions, partial traces, tensor products, norms |
//! | [`divergence`] | Rényi entropies; Umegaki, Petz, sandwiched, geometric, maximal and measured divergences; mutual-information variants |
//! | [`hamiltonian`] | Local lattice Hamiltonians, A/B/interaction splits, Gibbs states, interaction-dressing operators |
//! | [`arealaw`] | Numeric area-law certificates comparing computed mutual information against its upper bounds |
//! | [`ising`] | Transfer-matrix Rényi mutual information of the classical Ising ring in the thermodynamic limit |
//! | [`pure`] | Schmidt decomposition and the pure-state divergence identities |
//! | [`correlations`] | Connected correlators, Pinsker-type lower bounds, correlation-function bounds |
//! | [`random`] | Seeded generators for states, channels, observables and Hamiltonians |
//!
//! All operations are pure functions on immutable inputs and safe to call from
//! multiple threads.

use thiserror::Error;

pub mod arealaw;
pub mod correlations;
pub mod divergence;
pub mod hamiltonian;
pub mod ising;
pub mod linalg;
pub mod pure;
pub mod random;

pub use divergence::{classical_renyi, mutual_information, DivergenceValue, MiVariant};
pub use hamiltonian::{Bipartition, LatticeHamiltonian, LocalTerm};
pub use linalg::{CMatrix, CVector, DensityOperator, HermitianOperator, SpectralDecomposition};

/// Error type shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),

    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),

    #[error("not hermitian: relative deviation {dev:.3e} exceeds {tol:.3e}")]
    NotHermitian { dev: f64, tol: f64 },

    #[error("not positive semidefinite: min eigenvalue {min_eig:.3e} (tolerance {tol:.3e})")]
    NotPsd { min_eig: f64, tol: f64 },

    #[error("trace must be 1 within {tol:.1e}, got {trace}")]
    BadTrace { trace: f64, tol: f64 },

    #[error("tensor factors {dims:?} do not multiply to dimension {dim}")]
    BadFactorDims { dims: Vec<usize>, dim: usize },

    #[error("eigensolver did not converge: dim {dim}, norm {norm:.3e}")]
    EigFailed { dim: usize, norm: f64 },

    #[error("spectral function not finite on in-support eigenvalue {eigenvalue}")]
    NonFiniteSpectralFn { eigenvalue: f64 },

    #[error("empty subsystem selection; the full contraction is the scalar trace")]
    EmptyKeep,

    #[error("subsystem index {index} out of range for {count} tensor factors")]
    BadFactorIndex { index: usize, count: usize },

    #[error("alpha = {alpha} outside the valid range {range} of the {family} family")]
    InvalidAlpha {
        family: &'static str,
        alpha: f64,
        range: &'static str,
    },

    #[error("invalid probability vector: {0}")]
    BadProbability(String),

    #[error("state vector not normalized: norm {0}")]
    NotNormalized(f64),

    #[error("requested rank {rank} exceeds dimension {dim}")]
    BadRank { rank: usize, dim: usize },

    #[error("hamiltonian: {0}")]
    Hamiltonian(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("transfer matrix: {0}")]
    Transfer(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
