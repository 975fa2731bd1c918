//! States, operators and bipartite entanglement entropies for systems of
//! non-Abelian anyons in explicit fusion-tree bases.
//!
//! The crate works with multiplicity-free unitary braided tensor categories
//! (anyon models): a charge set with fusion rules, quantum dimensions,
//! F-symbols and R-symbols. On top of the category data it provides
//!
//! - enumeration of fusion-tree labellings and the elementary unitaries on
//!   them (F-moves, adjacent braids) in [`tree`],
//! - states, operators and density matrices on a genus-0 system, together
//!   with the basis bookkeeping that distinguishes identical-looking trees
//!   with different projections onto the manifold, in [`ops`],
//! - reduced density matrices for arbitrary bipartitions, including regions
//!   that are disjoint on the manifold, in [`reduce`],
//! - von Neumann and Renyi entropies of the reduced spectra in [`entropy`],
//! - brute-force verifiers of the defining reduction property and a qudit
//!   reference for Abelian models in [`oracle`].
//!
//! # Conventions
//!
//! All conventions are fixed once here and relied upon throughout.
//!
//! - **Trees.** The canonical tree is the left-combed caterpillar: leaf 1
//!   fuses with leaf 2, the product fuses with leaf 3, and so on. Other
//!   shapes exist only transiently inside recoupling computations.
//! - **F-symbols.** `[F^{abc}_d]_{ef}` relates the two fusion orders of
//!   `a, b, c -> d` via `|(a(bc)_f)_d> = sum_e [F^{abc}_d]_{ef} |((ab)_e c)_d>`.
//!   Coefficient vectors therefore transform left-to-right-associated by
//!   the adjoint of the F-matrix.
//! - **Braids.** The positive generator `sigma_i` exchanges leaves `i` and
//!   `i+1` counterclockwise (leaf `i` passes in front of leaf `i+1`); on a
//!   pair fused into `c` it acts as the phase `R(a,b->c)`.
//! - **Quantum trace.** In the orthonormal labelling basis the quantum trace
//!   of an operator is the charge-sector trace weighted by the quantum
//!   dimension of the sector: `qTr(X) = sum_c d_c Tr(X_c)` (a product of
//!   section root dimensions for operators on disjoint regions).
//! - **Entropies.** Reduced density matrices are converted to ordinary
//!   matrices by absorbing one factor of the sector quantum dimension, so
//!   that matrix trace equals quantum trace; eigenvalues of all sectors are
//!   pooled into a single probability distribution. Entropies are in bits
//!   (base-2 logarithms), with `S_1 = -sum p log2 p >= 0`.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod entropy;
pub mod linalg;
pub mod math;
pub mod model;
pub mod ops;
pub mod oracle;
pub mod reduce;
pub mod tree;

pub use num_complex::Complex64 as C64;

/// Tolerance accepted for axiom residuals of a model (pentagon, hexagon,
/// quantum-dimension consistency, F-unitarity).
pub const AXIOM_TOL: f64 = 1e-10;

/// Tolerance below which stored operator coefficients are pruned to zero.
pub const PRUNE_TOL: f64 = 1e-14;

/// Tolerance used when validating density matrices (trace, positivity).
pub const DENSITY_TOL: f64 = 1e-10;
