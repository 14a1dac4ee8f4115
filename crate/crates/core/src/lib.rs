//! Mean-field linear-quadratic social control.
//!
//! Riccati solvers for the finite and discounted infinite horizon,
//! stabilization certificates, decentralized control laws, closed-form
//! social costs and an Euler–Maruyama Monte Carlo simulator for the
//! N-agent system.

pub mod cli;
pub mod control;
pub mod cost;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod meanfield;
pub mod model;
pub mod output;
pub mod riccati;
pub mod scenario;
pub mod simulator;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use model::{ProblemData, Signal};
