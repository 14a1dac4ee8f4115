//! Riccati equations of the social control problem.
//!
//! The finite-horizon system (P, K, Π = P + K, s) is integrated backward
//! from zero terminal data; the discounted algebraic equations are solved
//! through the stable invariant subspace of the Hamiltonian.

mod are;
mod dre;

pub use are::{
    algebraic_pair, are_residual, classify_solution, hamiltonian, maximal_solution, scalar_are_roots, solve_are,
    solve_are_antistabilizing, AlgebraicSolution, AreCoefficients, Classification,
    IMAGINARY_AXIS_TOL,
};
pub use dre::{
    integrate_dre, solve_dre, FiniteRiccatiPath, BLOWUP_THRESHOLD, REFINEMENT_TOL,
};
pub(crate) use dre::{offset_rhs, pi_rhs};
