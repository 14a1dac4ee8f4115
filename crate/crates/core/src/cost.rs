//! Closed-form social costs.
//!
//! The value of the decentralized law splits into an initial-state term, the
//! per-agent constant q (finite or infinite horizon) and the gap ε. Two
//! further terms are reported separately: the discounted tracking constant
//! ∫e^{−ρt}‖η‖²_Q, and a noise correction. The correction accounts for the
//! deviations x_i − x^(N) seeing only (N−1)/N of each agent's noise, while
//! x^(N) sees 1/N of it.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{simpson, TimeGrid};
use crate::linalg;
use crate::meanfield::MeanFieldPath;
use crate::model::ProblemData;
use crate::riccati::{solve_are_antistabilizing, AlgebraicSolution, AreCoefficients, FiniteRiccatiPath};

#[derive(Debug, Clone, Serialize)]
pub struct CostBreakdown {
    pub agents: usize,
    /// E Σ_i ‖x_i0 − x^(N)(0)‖²_P + N‖x^(N)(0)‖²_Π + 2N sᵀ(0)x^(N)(0)
    pub initial_term: f64,
    pub q_term: f64,
    pub epsilon_term: f64,
    /// N ∫e^{−ρt}‖η‖²_Q dt
    pub tracking_term: f64,
    /// −∫e^{−ρt}(‖σ‖²_P + (N−1)‖σ‖²_Π) dt
    pub noise_correction: f64,
    pub total: f64,
}

/// Per-agent limit of the social cost.
#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticValue {
    /// tr(PΣ₀) + ‖x̄₀‖²_Π + 2sᵀ(0)x̄₀ + q_∞
    pub as_printed: f64,
    /// as_printed plus ∫e^{−ρt}‖η‖²_Q − ∫e^{−ρt}‖σ‖²_Π
    pub value: f64,
    /// Whether both Riccati equations admit negative definite solutions.
    pub hypothesis_verified: bool,
}

fn sigma_norm(sigma: &DVector<f64>, x: &DMatrix<f64>) -> f64 {
    linalg::quad_form(sigma, x)
}

/// ‖σ‖²_P + ‖σ‖²_Π − ‖Bᵀs‖²_{R⁻¹} + 2sᵀf at one instant.
fn q_integrand(p: &ProblemData, own: &DMatrix<f64>, pi: &DMatrix<f64>, s: &DVector<f64>, t: f64) -> f64 {
    let sigma = p.sigma().at(t);
    sigma_norm(&sigma, own) + sigma_norm(&sigma, pi) - linalg::quad_form(s, p.control_weight())
        + 2.0 * s.dot(&p.f().at(t))
}

fn discounted(grid: &TimeGrid, rho: f64, f: impl Fn(usize, f64) -> f64) -> f64 {
    let vals: Vec<f64> = grid
        .times()
        .enumerate()
        .map(|(k, t)| (-rho * t).exp() * f(k, t))
        .collect();
    simpson(&vals, grid.step())
}

/// ∫₀^∞ e^{−ρt} c(t) dt for an integrand that is constant from the end of
/// `grid` on.
fn discounted_with_tail(grid: &TimeGrid, rho: f64, f: impl Fn(usize, f64) -> f64) -> f64 {
    let last = grid.steps();
    let tail = (-rho * grid.horizon()).exp() * f(last, grid.horizon()) / rho;
    discounted(grid, rho, f) + tail
}

/// q_T by Simpson quadrature on the Riccati grid.
pub fn q_finite(p: &ProblemData, path: &FiniteRiccatiPath) -> f64 {
    discounted(&path.grid, p.rho(), |k, t| q_integrand(p, &path.p[k], &path.pi[k], &path.s[k], t))
}

fn settled_on(p: &ProblemData, grid: &TimeGrid) -> Result<()> {
    let settle = p.f().settle_time().max(p.sigma().settle_time()).max(p.eta().settle_time());
    if grid.horizon() < settle {
        return Err(Error::InvalidArgument(format!(
            "grid ends at {} before the signals settle at {settle}",
            grid.horizon()
        )));
    }
    Ok(())
}

fn all_constant(p: &ProblemData) -> bool {
    p.f().is_constant() && p.sigma().is_constant() && p.eta().is_constant()
}

/// q_∞: closed form c/ρ for constant signals, otherwise quadrature on the
/// mean-field grid plus the exact tail past its end.
pub fn q_infinite(p: &ProblemData, own: &AlgebraicSolution, pi: &AlgebraicSolution, mf: &MeanFieldPath) -> Result<f64> {
    if all_constant(p) {
        return Ok(q_integrand(p, &own.x, &pi.x, &mf.s0, 0.0) / p.rho());
    }
    settled_on(p, &mf.grid)?;
    Ok(discounted_with_tail(&mf.grid, p.rho(), |k, t| q_integrand(p, &own.x, &pi.x, &mf.s[k], t)))
}

/// (N−1)tr(PΣ₀) + tr(ΠΣ₀) + N‖x̄₀‖²_Π + 2N sᵀx̄₀ for iid initial states.
fn initial_term(p: &ProblemData, own: &DMatrix<f64>, pi: &DMatrix<f64>, s: &DVector<f64>, agents: usize) -> f64 {
    let n = agents as f64;
    let cov = p.init_cov();
    let m = p.init_mean();
    (n - 1.0) * (own * cov).trace() + (pi * cov).trace() + n * linalg::quad_form(m, pi) + 2.0 * n * s.dot(m)
}

/// Exact expected social cost of the decentralized finite-horizon law for
/// `agents` agents with iid initial states; `epsilon` is ε_T, from
/// simulation or 0 in the deterministic regime.
pub fn analytic_social_cost(p: &ProblemData, path: &FiniteRiccatiPath, agents: usize, epsilon: f64) -> Result<CostBreakdown> {
    if agents == 0 {
        return Err(Error::InvalidArgument("agents must be at least 1".into()));
    }
    let n = agents as f64;
    let rho = p.rho();
    let initial = initial_term(p, path.p0(), path.pi0(), path.s0(), agents);
    let q = q_finite(p, path);
    let tracking = n * discounted(&path.grid, rho, |_, t| linalg::quad_form(&p.eta().at(t), p.q()));
    let noise = -discounted(&path.grid, rho, |k, t| {
        let sigma = p.sigma().at(t);
        sigma_norm(&sigma, &path.p[k]) + (n - 1.0) * sigma_norm(&sigma, &path.pi[k])
    });
    Ok(CostBreakdown {
        agents,
        initial_term: initial,
        q_term: q,
        epsilon_term: epsilon,
        tracking_term: tracking,
        noise_correction: noise,
        total: initial + n * q + n * epsilon + tracking + noise,
    })
}

fn negative_definite_solution_exists(c: &AreCoefficients) -> bool {
    match solve_are_antistabilizing(c) {
        Ok(sol) => {
            let scale = sol.x.norm().max(f64::MIN_POSITIVE);
            -linalg::min_sym_eigenvalue(&-&sol.x) < -1e-9 * scale
        }
        Err(_) => false,
    }
}

/// lim (1/N) J_soc of the infinite-horizon decentralized law.
pub fn asymptotic_average_optimum(
    p: &ProblemData,
    own: &AlgebraicSolution,
    pi: &AlgebraicSolution,
    mf: &MeanFieldPath,
) -> Result<AsymptoticValue> {
    let m = p.init_mean();
    let q = q_infinite(p, own, pi, mf)?;
    let as_printed = (&own.x * p.init_cov()).trace() + linalg::quad_form(m, &pi.x) + 2.0 * mf.s0.dot(m) + q;
    let rho = p.rho();
    let extra = |t: f64| linalg::quad_form(&p.eta().at(t), p.q()) - sigma_norm(&p.sigma().at(t), &pi.x);
    let correction = if all_constant(p) {
        extra(0.0) / rho
    } else {
        settled_on(p, &mf.grid)?;
        discounted_with_tail(&mf.grid, rho, |_, t| extra(t))
    };
    let hypothesis_verified = negative_definite_solution_exists(&AreCoefficients::own(p))
        && negative_definite_solution_exists(&AreCoefficients::aggregate(p));
    Ok(AsymptoticValue {
        as_printed,
        value: as_printed + correction,
        hypothesis_verified,
    })
}
