//! Stabilizability, observability and Hamiltonian checks, and the
//! uniform-stabilization verdict built from them.
//!
//! Three sufficient settings are recognized, tried in this order:
//! observability of both weighted pairs (Q ⪰ 0), detectability of both
//! (Q ⪰ 0), and imaginary-axis freedom of both Hamiltonians (Q indefinite
//! allowed). Outside all three the report is `Unclassified` and carries no
//! verdict.

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::error::Result;
use crate::linalg;
use crate::model::ProblemData;
use crate::riccati::{hamiltonian, maximal_solution, AlgebraicSolution, AreCoefficients};

/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-9;
/// Eigenvalues with Re λ ≥ −EIG_TOL are tested by the PBH criteria.
pub const EIG_TOL: f64 = 1e-9;
/// Relative threshold for definiteness of Riccati solutions.
pub const DEFINITENESS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct TestedMode {
    pub re: f64,
    pub im: f64,
    /// Smallest singular value of the PBH pencil at this eigenvalue.
    pub sigma_min: f64,
    /// Largest singular value, the scale of the rank decision.
    pub sigma_max: f64,
    pub full_rank: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PbhCertificate {
    pub holds: bool,
    pub tested: Vec<TestedMode>,
}

impl PbhCertificate {
    /// Re-derives `holds` from the stored singular values.
    pub fn recheck(&self) -> bool {
        self.tested
            .iter()
            .all(|m| m.sigma_min > RANK_TOL * m.sigma_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PbhMode {
    Observable,
    Detectable,
}

fn complex(m: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    m.map(|v| Complex::new(v, 0.0))
}

fn shifted(a: &DMatrix<f64>, rho: f64) -> DMatrix<f64> {
    let n = a.nrows();
    a - DMatrix::identity(n, n) * (0.5 * rho)
}

/// Rank test of `pencil(λ)` at the eigenvalues of `a` that `select` keeps;
/// `stack_right` picks [λI − A, X] (true) or [λI − A; X] (false).
fn pbh(a: &DMatrix<f64>, x: &DMatrix<f64>, stack_right: bool, select: impl Fn(&Complex<f64>) -> bool) -> PbhCertificate {
    let n = a.nrows();
    let ac = complex(a);
    let xc = complex(x);
    let mut tested = Vec::new();
    for lambda in linalg::eigenvalues(a).into_iter().filter(|l| select(l)) {
        let block = DMatrix::<Complex<f64>>::identity(n, n) * lambda - &ac;
        let pencil = if stack_right {
            let mut m = DMatrix::zeros(n, n + xc.ncols());
            m.view_mut((0, 0), (n, n)).copy_from(&block);
            m.view_mut((0, n), (n, xc.ncols())).copy_from(&xc);
            m
        } else {
            let mut m = DMatrix::zeros(n + xc.nrows(), n);
            m.view_mut((0, 0), (n, n)).copy_from(&block);
            m.view_mut((n, 0), (xc.nrows(), n)).copy_from(&xc);
            m
        };
        let sv = pencil.singular_values();
        // rank n needs the n-th largest singular value
        let mut vals: Vec<f64> = sv.iter().copied().collect();
        vals.sort_by(|p, q| q.total_cmp(p));
        let sigma_max = vals.first().copied().unwrap_or(0.0);
        let sigma_min = vals.get(n - 1).copied().unwrap_or(0.0);
        tested.push(TestedMode {
            re: lambda.re,
            im: lambda.im,
            sigma_min,
            sigma_max,
            full_rank: sigma_min > RANK_TOL * sigma_max,
        });
    }
    PbhCertificate {
        holds: tested.iter().all(|m| m.full_rank),
        tested,
    }
}

/// Stabilizability of (A_eff − (ρ/2)I, B).
pub fn pbh_stabilizable(a_eff: &DMatrix<f64>, b: &DMatrix<f64>, rho: f64) -> PbhCertificate {
    pbh(&shifted(a_eff, rho), b, true, |l| l.re >= -EIG_TOL)
}

/// Observability or detectability of (A_eff − (ρ/2)I, C).
pub fn pbh_observable(a_eff: &DMatrix<f64>, c: &DMatrix<f64>, rho: f64, mode: PbhMode) -> PbhCertificate {
    match mode {
        PbhMode::Observable => pbh(&shifted(a_eff, rho), c, false, |_| true),
        PbhMode::Detectable => pbh(&shifted(a_eff, rho), c, false, |l| l.re >= -EIG_TOL),
    }
}

/// (M1, M2) for the own-state and aggregate Riccati equations.
pub fn hamiltonian_matrices(p: &ProblemData) -> (DMatrix<f64>, DMatrix<f64>) {
    (
        hamiltonian(&AreCoefficients::own(p)),
        hamiltonian(&AreCoefficients::aggregate(p)),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct AxisCheck {
    pub free: bool,
    pub min_abs_real: f64,
    pub threshold: f64,
    /// (Re, Im) pairs.
    pub eigenvalues: Vec<(f64, f64)>,
}

/// No eigenvalue with |Re λ| ≤ tol · max(1, ‖M‖₂).
pub fn imaginary_axis_free(m: &DMatrix<f64>, tol: f64) -> AxisCheck {
    let eig = linalg::eigenvalues(m);
    let threshold = tol * linalg::norm2(m).max(1.0);
    let min_abs_real = eig.iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min);
    AxisCheck {
        free: min_abs_real > threshold,
        min_abs_real,
        threshold,
        eigenvalues: eig.iter().map(|z| (z.re, z.im)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseTag {
    Observable,
    Detectable,
    Hamiltonian,
    Unclassified,
}

/// Outcome of one Riccati solve; failures are kept, not mapped to verdicts.
#[derive(Debug, Clone, Serialize)]
pub struct AreOutcome {
    pub solution: Option<Vec<Vec<f64>>>,
    pub residual: Option<f64>,
    pub rho_stabilizing: Option<bool>,
    pub min_eigenvalue: Option<f64>,
    pub failure: Option<String>,
}

impl AreOutcome {
    fn from(res: &Result<AlgebraicSolution>) -> Self {
        match res {
            Ok(sol) => AreOutcome {
                solution: Some(sol.x.row_iter().map(|r| r.iter().copied().collect()).collect()),
                residual: Some(sol.residual),
                rho_stabilizing: Some(sol.is_rho_stabilizing),
                min_eigenvalue: Some(linalg::min_sym_eigenvalue(&sol.x)),
                failure: None,
            },
            Err(e) => AreOutcome {
                solution: None,
                residual: None,
                rho_stabilizing: None,
                min_eigenvalue: None,
                failure: Some(format!("{}: {e}", e.kind())),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct A3Certificates {
    pub q_psd: bool,
    pub observable_own: PbhCertificate,
    pub observable_aggregate: PbhCertificate,
    pub detectable_own: PbhCertificate,
    pub detectable_aggregate: PbhCertificate,
    pub hamiltonian_own: AxisCheck,
    pub hamiltonian_aggregate: AxisCheck,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilizationReport {
    pub case_tag: CaseTag,
    pub a2_holds: bool,
    pub stabilizable_own: PbhCertificate,
    pub stabilizable_aggregate: PbhCertificate,
    pub a3_variant_holds: bool,
    pub a3: A3Certificates,
    pub are_p: AreOutcome,
    pub are_pi: AreOutcome,
    /// Spectral abscissa of Ā + G − (ρ/2)I with Ā = A − BR⁻¹BᵀP; absent
    /// when P could not be computed.
    pub abar_plus_g_shift: Option<f64>,
    pub abar_plus_g_hurwitz: bool,
    /// Riccati characterization of uniform stabilization.
    pub condition_ii: Option<bool>,
    /// Stabilizability characterization of uniform stabilization.
    pub condition_iii: bool,
    /// Uniformly stabilizing; absent when unclassified.
    pub verdict: Option<bool>,
}

fn definite(res: &Result<AlgebraicSolution>, strict: bool) -> bool {
    match res {
        Ok(sol) => {
            let min = linalg::min_sym_eigenvalue(&sol.x);
            let scale = DEFINITENESS_TOL * sol.x.norm().max(1.0);
            if strict {
                min > scale
            } else {
                min > -scale
            }
        }
        Err(_) => false,
    }
}

pub fn stabilization_report(p: &ProblemData) -> Result<StabilizationReport> {
    let rho = p.rho();
    let a = p.a();
    let a_g = p.a_plus_g();
    let n = p.state_dim();

    let stabilizable_own = pbh_stabilizable(a, p.b(), rho);
    let stabilizable_aggregate = pbh_stabilizable(&a_g, p.b(), rho);

    let q_psd = linalg::min_sym_eigenvalue(p.q()) >= -1e-10;
    let (c_own, c_agg) = if q_psd {
        let root = linalg::psd_sqrt(p.q(), "Q")?;
        let c_agg = &root * (DMatrix::<f64>::identity(n, n) - p.gamma());
        (root, c_agg)
    } else {
        // unused: the observability cases need Q ⪰ 0
        (DMatrix::zeros(n, n), DMatrix::zeros(n, n))
    };
    let (m1, m2) = hamiltonian_matrices(p);
    let a3 = A3Certificates {
        q_psd,
        observable_own: pbh_observable(a, &c_own, rho, PbhMode::Observable),
        observable_aggregate: pbh_observable(&a_g, &c_agg, rho, PbhMode::Observable),
        detectable_own: pbh_observable(a, &c_own, rho, PbhMode::Detectable),
        detectable_aggregate: pbh_observable(&a_g, &c_agg, rho, PbhMode::Detectable),
        hamiltonian_own: imaginary_axis_free(&m1, crate::riccati::IMAGINARY_AXIS_TOL),
        hamiltonian_aggregate: imaginary_axis_free(&m2, crate::riccati::IMAGINARY_AXIS_TOL),
    };
    let case_tag = if q_psd && a3.observable_own.holds && a3.observable_aggregate.holds {
        CaseTag::Observable
    } else if q_psd && a3.detectable_own.holds && a3.detectable_aggregate.holds {
        CaseTag::Detectable
    } else if a3.hamiltonian_own.free && a3.hamiltonian_aggregate.free {
        CaseTag::Hamiltonian
    } else {
        CaseTag::Unclassified
    };

    let own = maximal_solution(&AreCoefficients::own(p));
    let agg = maximal_solution(&AreCoefficients::aggregate(p));
    let abar_plus_g_shift = own.as_ref().ok().map(|sol| {
        let m = &a_g - p.control_weight() * &sol.x;
        linalg::spectral_abscissa(&shifted(&m, rho))
    });
    let abar_plus_g_hurwitz = abar_plus_g_shift.is_some_and(|s| s < 0.0);

    let a2_holds = stabilizable_own.holds && stabilizable_aggregate.holds && abar_plus_g_hurwitz;
    let condition_iii = a2_holds;
    let stabilizing = |r: &Result<AlgebraicSolution>| r.as_ref().is_ok_and(|s| s.is_rho_stabilizing);
    let condition_ii = match case_tag {
        CaseTag::Observable => Some(definite(&own, true) && definite(&agg, true)),
        CaseTag::Detectable => Some(definite(&own, false) && definite(&agg, false)),
        CaseTag::Hamiltonian => Some(stabilizing(&own) && stabilizing(&agg)),
        CaseTag::Unclassified => None,
    }
    .map(|riccati| riccati && abar_plus_g_hurwitz);

    Ok(StabilizationReport {
        case_tag,
        a2_holds,
        stabilizable_own,
        stabilizable_aggregate,
        a3_variant_holds: case_tag != CaseTag::Unclassified,
        are_p: AreOutcome::from(&own),
        are_pi: AreOutcome::from(&agg),
        abar_plus_g_shift,
        abar_plus_g_hurwitz,
        condition_ii,
        condition_iii,
        verdict: (case_tag != CaseTag::Unclassified).then_some(condition_iii),
        a3,
    })
}
