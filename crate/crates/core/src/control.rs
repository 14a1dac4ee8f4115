//! Control laws as gain tables on the simulation grid.
//!
//! Every law has the shape u_i = L(t) x_i + H(t) z(t) + v(t), where z is
//! either a precomputed deterministic path (decentralized laws) or the live
//! empirical average x^(N) (centralized law).

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::meanfield::{stationary_offset_path, Coupling, MeanFieldPath};
use crate::model::{derived_weights, ProblemData};
use crate::riccati::{solve_are, AlgebraicSolution, AreCoefficients, FiniteRiccatiPath};
use crate::simulator::{simulate_replication, SimulationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    DecentralizedFinite,
    DecentralizedInfinite,
    CentralizedFinite,
    LegacyFeedback,
}

/// What the aggregate gain multiplies.
#[derive(Debug, Clone)]
pub enum Aggregate {
    /// A deterministic path fixed before the run.
    Path(Vec<DVector<f64>>),
    /// The empirical average of all agents at the current step.
    Empirical,
}

/// Time-indexed matrices; a single entry stands for a constant.
#[derive(Debug, Clone)]
pub struct GainPath(Vec<DMatrix<f64>>);

impl GainPath {
    pub fn constant(m: DMatrix<f64>) -> Self {
        GainPath(vec![m])
    }

    pub fn at(&self, k: usize) -> &DMatrix<f64> {
        if self.0.len() == 1 {
            &self.0[0]
        } else {
            &self.0[k]
        }
    }
}

#[derive(Debug, Clone)]
pub struct ControlLaw {
    pub kind: LawKind,
    pub grid: TimeGrid,
    /// −R⁻¹BᵀP
    pub own_gain: GainPath,
    /// −R⁻¹Bᵀ times K, Π − P or K̄
    pub aggregate_gain: GainPath,
    /// −R⁻¹Bᵀs (or −R⁻¹Bᵀφ)
    pub offset: Vec<DVector<f64>>,
    pub aggregates_on: Aggregate,
    /// Mean-field reference x̄ used for diagnostics (consistency, ε).
    pub reference: Vec<DVector<f64>>,
    /// K(t) (or Π − P) entering the gap ε; the identity when absent is not
    /// assumed, ε is simply not computed.
    pub gap_weight: Option<GainPath>,
}

impl ControlLaw {
    fn offset_at(&self, k: usize) -> &DVector<f64> {
        if self.offset.len() == 1 {
            &self.offset[0]
        } else {
            &self.offset[k]
        }
    }

    pub fn is_decentralized(&self) -> bool {
        matches!(self.aggregates_on, Aggregate::Path(_))
    }

    /// Control of an agent under a decentralized law; reads nothing but the
    /// agent's own state.
    pub fn decentralized(&self, k: usize, x_own: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.aggregates_on {
            Aggregate::Path(z) => Ok(self.own_gain.at(k) * x_own
                + self.aggregate_gain.at(k) * &z[k]
                + self.offset_at(k)),
            Aggregate::Empirical => Err(Error::InvalidArgument(
                "law aggregates on the empirical average".into(),
            )),
        }
    }

    /// Control of an agent under the centralized law.
    pub fn centralized(&self, k: usize, x_own: &DVector<f64>, x_avg: &DVector<f64>) -> DVector<f64> {
        self.own_gain.at(k) * x_own + self.aggregate_gain.at(k) * x_avg + self.offset_at(k)
    }

    pub(crate) fn flatten(&self) -> FlatLaw {
        let (r, n) = self.own_gain.at(0).shape();
        let len = self.grid.len();
        let mut own = Vec::with_capacity(len * r * n);
        let mut agg = Vec::with_capacity(len * r * n);
        let mut bias = Vec::with_capacity(len * r);
        for k in 0..len {
            own.extend(self.own_gain.at(k).transpose().iter());
            let h = self.aggregate_gain.at(k);
            agg.extend(h.transpose().iter());
            let b = match &self.aggregates_on {
                Aggregate::Path(z) => h * &z[k] + self.offset_at(k),
                Aggregate::Empirical => self.offset_at(k).clone(),
            };
            bias.extend(b.iter());
        }
        FlatLaw {
            n,
            r,
            own,
            agg,
            bias,
            live: matches!(self.aggregates_on, Aggregate::Empirical),
        }
    }
}

/// Row-major gain tables for the simulator's inner loop.
pub(crate) struct FlatLaw {
    pub n: usize,
    pub r: usize,
    pub own: Vec<f64>,
    pub agg: Vec<f64>,
    pub bias: Vec<f64>,
    pub live: bool,
}

fn gains_along(p: &ProblemData, xs: &[DMatrix<f64>]) -> GainPath {
    GainPath(xs.iter().map(|x| p.gain_of(x)).collect())
}

fn offsets_along(p: &ProblemData, s: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let g = -(p.r_inv() * p.b().transpose());
    s.iter().map(|v| &g * v).collect()
}

/// û_i = −R⁻¹Bᵀ(P x_i + K x̄ + s) on the Riccati grid.
pub fn decentralized_law_finite(
    p: &ProblemData,
    path: &FiniteRiccatiPath,
    mf: &MeanFieldPath,
) -> Result<ControlLaw> {
    mf.grid.ensure_same(&path.grid, "mean-field path vs Riccati path")?;
    Ok(ControlLaw {
        kind: LawKind::DecentralizedFinite,
        grid: path.grid,
        own_gain: gains_along(p, &path.p),
        aggregate_gain: gains_along(p, &path.k),
        offset: offsets_along(p, &path.s),
        aggregates_on: Aggregate::Path(mf.xbar.clone()),
        reference: mf.xbar.clone(),
        gap_weight: Some(GainPath(path.k.clone())),
    })
}

/// ǔ_i = −R⁻¹Bᵀ(P x_i + K x^(N) + s), the centralized optimum.
pub fn centralized_law_finite(
    p: &ProblemData,
    path: &FiniteRiccatiPath,
    mf: &MeanFieldPath,
) -> Result<ControlLaw> {
    mf.grid.ensure_same(&path.grid, "mean-field path vs Riccati path")?;
    Ok(ControlLaw {
        kind: LawKind::CentralizedFinite,
        grid: path.grid,
        own_gain: gains_along(p, &path.p),
        aggregate_gain: gains_along(p, &path.k),
        offset: offsets_along(p, &path.s),
        aggregates_on: Aggregate::Empirical,
        reference: mf.xbar.clone(),
        gap_weight: Some(GainPath(path.k.clone())),
    })
}

/// û_i = −R⁻¹Bᵀ(P x_i + (Π − P) x̄ + s) with the algebraic solutions.
pub fn decentralized_law_infinite(
    p: &ProblemData,
    own: &AlgebraicSolution,
    agg: &AlgebraicSolution,
    mf: &MeanFieldPath,
) -> Result<ControlLaw> {
    for (sol, name) in [(own, "P"), (agg, "Pi")] {
        if !sol.is_rho_stabilizing {
            return Err(Error::NotStabilizing(name.into()));
        }
    }
    let k = &agg.x - &own.x;
    Ok(ControlLaw {
        kind: LawKind::DecentralizedInfinite,
        grid: mf.grid,
        own_gain: GainPath::constant(p.gain_of(&own.x)),
        aggregate_gain: GainPath::constant(p.gain_of(&k)),
        offset: offsets_along(p, &mf.s),
        aggregates_on: Aggregate::Path(mf.xbar.clone()),
        reference: mf.xbar.clone(),
        gap_weight: Some(GainPath::constant(k)),
    })
}

/// Ingredients of the legacy fixed-point law ŭ_i = −R⁻¹Bᵀ(P x_i + K̄x† + φ).
#[derive(Debug, Clone)]
pub struct LegacyParts {
    pub kbar: AlgebraicSolution,
    pub x_dagger: Vec<DVector<f64>>,
    pub phi: Vec<DVector<f64>>,
}

/// Solves ρK̄ = ĀᵀK̄ + K̄Ā − K̄SK̄ − Ξ with Ā = A − SP.
pub fn legacy_kbar(p: &ProblemData, own: &AlgebraicSolution) -> Result<AlgebraicSolution> {
    let a_bar = p.a() - p.control_weight() * &own.x;
    solve_are(&AreCoefficients {
        a_eff: a_bar,
        s: p.control_weight().clone(),
        q_eff: -derived_weights(p).xi,
        rho: p.rho(),
    })
}

type Series = Vec<DVector<f64>>;

/// φ and x† for a given K̄ on `grid`:
///   dφ/dt = −[A − S(P + K̄) − ρI]ᵀφ + η̄, φ ∈ C_{ρ/2}
///   dx†/dt = Āx† − S(K̄x† + φ), x†(0) = x̄₀.
pub fn legacy_paths(
    p: &ProblemData,
    own: &AlgebraicSolution,
    kbar: &DMatrix<f64>,
    grid: &TimeGrid,
) -> Result<(Series, Series)> {
    let s_w = p.control_weight();
    let m = p.a() - s_w * (&own.x + kbar);
    let forcing = derived_weights(p).eta_bar.map_linear(&-DMatrix::<f64>::identity(p.state_dim(), p.state_dim()));
    let phi = stationary_offset_path(p.rho(), &m, &forcing, grid)?;

    // with G = 0 and f = 0 this is the x̄ equation with Π replaced by P + K̄
    let pi_equiv = &own.x + kbar;
    let coupling = Coupling::stationary(p, &pi_equiv, grid, phi.clone());
    let x_dagger = crate::meanfield::forward_mean_field(p, &coupling, grid)?;
    Ok((phi, x_dagger))
}

fn check_regime(p: &ProblemData) -> Result<()> {
    if p.g().amax() != 0.0 {
        return Err(Error::RegimeViolation("G must vanish".into()));
    }
    if p.f().max_norm() != 0.0 {
        return Err(Error::RegimeViolation("f must vanish".into()));
    }
    Ok(())
}

/// The legacy law with K̄ from its Riccati equation.
pub fn legacy_law(p: &ProblemData, own: &AlgebraicSolution, grid: &TimeGrid) -> Result<(ControlLaw, LegacyParts)> {
    check_regime(p)?;
    let kbar = legacy_kbar(p, own)?;
    let law = legacy_law_with(p, own, &kbar.x, grid)?;
    let (phi, x_dagger) = legacy_paths(p, own, &kbar.x, grid)?;
    Ok((law, LegacyParts { kbar, x_dagger, phi }))
}

/// The legacy law for an arbitrary K̄ (used to probe mismatch detection).
pub fn legacy_law_with(
    p: &ProblemData,
    own: &AlgebraicSolution,
    kbar: &DMatrix<f64>,
    grid: &TimeGrid,
) -> Result<ControlLaw> {
    check_regime(p)?;
    let (phi, x_dagger) = legacy_paths(p, own, kbar, grid)?;
    Ok(ControlLaw {
        kind: LawKind::LegacyFeedback,
        grid: *grid,
        own_gain: GainPath::constant(p.gain_of(&own.x)),
        aggregate_gain: GainPath::constant(p.gain_of(kbar)),
        offset: offsets_along(p, &phi),
        aggregates_on: Aggregate::Path(x_dagger.clone()),
        reference: x_dagger,
        gap_weight: Some(GainPath::constant(kbar.clone())),
    })
}

pub const REPRESENTATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct RepresentationReport {
    pub max_state_deviation: f64,
    pub cost_a: f64,
    pub cost_b: f64,
    pub relative_cost_difference: f64,
    pub passed: bool,
}

/// Co-simulates two laws on identical initial states and noise.
pub fn representation_check(
    law_a: &ControlLaw,
    law_b: &ControlLaw,
    p: &ProblemData,
    cfg: &SimulationConfig,
) -> Result<RepresentationReport> {
    law_a.grid.ensure_same(&law_b.grid, "representation check")?;
    let mut max_dev = 0.0f64;
    let (mut cost_a, mut cost_b) = (0.0, 0.0);
    for rep in 0..cfg.replications {
        let a = simulate_replication(p, law_a, cfg, rep, true)?;
        let b = simulate_replication(p, law_b, cfg, rep, true)?;
        let (ta, tb) = (a.trajectories.unwrap(), b.trajectories.unwrap());
        for (x, y) in ta.states.iter().zip(&tb.states) {
            max_dev = max_dev.max((x - y).abs());
        }
        cost_a += a.cost;
        cost_b += b.cost;
    }
    let reps = cfg.replications as f64;
    let (cost_a, cost_b) = (cost_a / reps, cost_b / reps);
    let rel = (cost_a - cost_b).abs() / cost_a.abs().max(cost_b.abs()).max(f64::MIN_POSITIVE);
    let rel = if cost_a == cost_b { 0.0 } else { rel };
    Ok(RepresentationReport {
        max_state_deviation: max_dev,
        cost_a,
        cost_b,
        relative_cost_difference: rel,
        passed: max_dev < REPRESENTATION_TOL && rel < REPRESENTATION_TOL,
    })
}
