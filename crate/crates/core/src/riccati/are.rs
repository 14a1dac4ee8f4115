use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{derived_weights, ProblemData};

/// Eigenvalues with |Re λ| ≤ IMAGINARY_AXIS_TOL · max(1, ‖M‖₂) count as
/// lying on the imaginary axis.
pub const IMAGINARY_AXIS_TOL: f64 = 1e-8;

const ASYMMETRY_TOL: f64 = 1e-7;
const GRAPH_RANK_TOL: f64 = 1e-10;

/// Data of ρX = A_effᵀX + XA_eff − XSX + Q_eff.
#[derive(Debug, Clone)]
pub struct AreCoefficients {
    pub a_eff: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub q_eff: DMatrix<f64>,
    pub rho: f64,
}

impl AreCoefficients {
    /// ρP = AᵀP + PA − PSP + Q.
    pub fn own(p: &ProblemData) -> Self {
        AreCoefficients {
            a_eff: p.a().clone(),
            s: p.control_weight().clone(),
            q_eff: p.q().clone(),
            rho: p.rho(),
        }
    }

    /// ρΠ = (A+G)ᵀΠ + Π(A+G) − ΠSΠ + Q − Ξ.
    pub fn aggregate(p: &ProblemData) -> Self {
        AreCoefficients {
            a_eff: p.a_plus_g(),
            s: p.control_weight().clone(),
            q_eff: derived_weights(p).q_bar,
            rho: p.rho(),
        }
    }

    pub fn dim(&self) -> usize {
        self.a_eff.nrows()
    }

    fn shifted(&self) -> DMatrix<f64> {
        let n = self.dim();
        &self.a_eff - DMatrix::identity(n, n) * (0.5 * self.rho)
    }
}

#[derive(Debug, Clone)]
pub struct AlgebraicSolution {
    pub x: DMatrix<f64>,
    /// A_eff − S X, unshifted.
    pub closed_loop: DMatrix<f64>,
    pub residual: f64,
    pub is_rho_stabilizing: bool,
    pub spectral_abscissa: f64,
}

impl AlgebraicSolution {
    pub fn from_candidate(c: &AreCoefficients, x: DMatrix<f64>) -> Self {
        let closed_loop = &c.a_eff - &c.s * &x;
        let spectral_abscissa = linalg::spectral_abscissa(&closed_loop);
        AlgebraicSolution {
            residual: are_residual(&x, &c.a_eff, &c.s, &c.q_eff, c.rho),
            is_rho_stabilizing: spectral_abscissa < 0.5 * c.rho,
            spectral_abscissa,
            closed_loop,
            x,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Classification {
    pub is_rho_stabilizing: bool,
    pub spectral_abscissa: f64,
    /// Only decided for n = 1, by comparison with every real root.
    pub maximal: Option<bool>,
    pub roots: Vec<f64>,
}

/// ‖ρX − A_effᵀX − XA_eff + XSX − Q_eff‖_F.
pub fn are_residual(
    x: &DMatrix<f64>,
    a_eff: &DMatrix<f64>,
    s: &DMatrix<f64>,
    q_eff: &DMatrix<f64>,
    rho: f64,
) -> f64 {
    (x * rho - a_eff.transpose() * x - x * a_eff + x * s * x - q_eff).norm()
}

/// [[A_eff − (ρ/2)I, S], [Q_eff, −A_effᵀ + (ρ/2)I]].
pub fn hamiltonian(c: &AreCoefficients) -> DMatrix<f64> {
    let n = c.dim();
    let a = c.shifted();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&a);
    m.view_mut((0, n), (n, n)).copy_from(&c.s);
    m.view_mut((n, 0), (n, n)).copy_from(&c.q_eff);
    m.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    m
}

fn check_axis(m: &DMatrix<f64>) -> Result<()> {
    let threshold = IMAGINARY_AXIS_TOL * linalg::norm2(m).max(1.0);
    let min_abs_real = linalg::eigenvalues(m)
        .iter()
        .map(|z| z.re.abs())
        .fold(f64::INFINITY, f64::min);
    if min_abs_real <= threshold {
        return Err(Error::ImaginaryAxisEigenvalue {
            min_abs_real,
            threshold,
        });
    }
    Ok(())
}

// With Ã = A_eff − (ρ/2)I the equation reads ÃᵀX + XÃ − XSX + Q = 0, and
//   M [I; −X] = [Ã − SX; Q + ÃᵀX] = [I; −X](Ã − SX)
// exactly when X solves it. So [I; −X] spans an invariant subspace of M
// carrying the spectrum of the shifted closed loop. With W = sign(M) the
// stable subspace is ker(W + I), the unstable one ker(W − I); writing
// (W + sI)[I; −X] = 0 blockwise gives [W12; W22 + sI] X = [W11 + sI; W21].
fn subspace_solution(c: &AreCoefficients, side: f64) -> Result<AlgebraicSolution> {
    let n = c.dim();
    let m = hamiltonian(c);
    check_axis(&m)?;
    let w = linalg::matrix_sign(&m).ok_or(Error::SubspaceNotGraph)?;
    let eye = DMatrix::<f64>::identity(n, n);

    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(w.view((n, n), (n, n)) + &eye * side));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&(w.view((0, 0), (n, n)) + &eye * side));
    rhs.view_mut((n, 0), (n, n)).copy_from(&w.view((n, 0), (n, n)));

    let svd = lhs.svd(true, true);
    let sv_max = svd.singular_values.max();
    let sv_min = svd.singular_values.min();
    if sv_min.is_nan() || sv_min <= GRAPH_RANK_TOL * sv_max.max(1.0) {
        return Err(Error::SubspaceNotGraph);
    }
    let x = svd
        .solve(&rhs, 0.0)
        .map_err(|_| Error::SubspaceNotGraph)?;

    let asym = linalg::relative_asymmetry(&x);
    if asym > ASYMMETRY_TOL {
        return Err(Error::AsymmetricResult(asym));
    }
    let mut x = linalg::symmetrize(&x);

    // one Newton–Kleinman defect correction
    let a = c.shifted();
    let res = a.transpose() * &x + &x * &a - &x * &c.s * &x + &c.q_eff;
    let acl = &a - &c.s * &x;
    if let Some(delta) = linalg::solve_lyapunov(&acl, &(-&res)) {
        let candidate = linalg::symmetrize(&(&x + delta));
        let before = are_residual(&x, &c.a_eff, &c.s, &c.q_eff, c.rho);
        let after = are_residual(&candidate, &c.a_eff, &c.s, &c.q_eff, c.rho);
        if after < before {
            x = candidate;
        }
    }
    Ok(AlgebraicSolution::from_candidate(c, x))
}

/// ρ-stabilizing solution from the stable invariant subspace of the
/// Hamiltonian. Under imaginary-axis freedom and stabilizability this is
/// also the maximal solution.
pub fn solve_are(c: &AreCoefficients) -> Result<AlgebraicSolution> {
    subspace_solution(c, 1.0)
}

/// Solution attached to the unstable invariant subspace (the minimal one
/// when it exists).
pub fn solve_are_antistabilizing(c: &AreCoefficients) -> Result<AlgebraicSolution> {
    subspace_solution(c, -1.0)
}

/// Real roots of s x² − (2a − ρ) x − q = 0, ascending.
pub fn scalar_are_roots(a: f64, s: f64, q: f64, rho: f64) -> Vec<f64> {
    let lin = 2.0 * a - rho;
    if s == 0.0 {
        return if lin != 0.0 { vec![-q / lin] } else if q == 0.0 { vec![0.0] } else { vec![] };
    }
    let disc = lin * lin + 4.0 * s * q;
    if disc < 0.0 {
        return vec![];
    }
    let sq = disc.sqrt();
    // stable form of the quadratic formula
    let big = if lin >= 0.0 { 0.5 * (lin + sq) } else { 0.5 * (lin - sq) };
    let mut roots = if big == 0.0 {
        vec![0.0, 0.0]
    } else {
        vec![big / s, -q / big]
    };
    roots.sort_by(f64::total_cmp);
    roots
}

/// The Hamiltonian solution when it exists; for n = 1 a failure of
/// imaginary-axis freedom falls back to the largest real root.
pub fn maximal_solution(c: &AreCoefficients) -> Result<AlgebraicSolution> {
    match solve_are(c) {
        Ok(sol) => Ok(sol),
        Err(e) if c.dim() == 1 => {
            let roots = scalar_are_roots(c.a_eff[(0, 0)], c.s[(0, 0)], c.q_eff[(0, 0)], c.rho);
            match roots.last() {
                Some(&x) => Ok(AlgebraicSolution::from_candidate(
                    c,
                    DMatrix::from_element(1, 1, x),
                )),
                None => Err(e),
            }
        }
        Err(e) => Err(e),
    }
}

/// Maximal solutions of the P and Π equations.
pub fn algebraic_pair(p: &ProblemData) -> Result<(AlgebraicSolution, AlgebraicSolution)> {
    Ok((
        maximal_solution(&AreCoefficients::own(p))?,
        maximal_solution(&AreCoefficients::aggregate(p))?,
    ))
}

pub fn classify_solution(sol: &AlgebraicSolution, c: &AreCoefficients) -> Classification {
    let spectral_abscissa = linalg::spectral_abscissa(&sol.closed_loop);
    let (maximal, roots) = if c.dim() == 1 {
        let roots = scalar_are_roots(c.a_eff[(0, 0)], c.s[(0, 0)], c.q_eff[(0, 0)], c.rho);
        let x = sol.x[(0, 0)];
        let tol = 1e-9 * (1.0 + x.abs());
        (Some(roots.iter().all(|r| x >= r - tol)), roots)
    } else {
        (None, Vec::new())
    };
    Classification {
        is_rho_stabilizing: spectral_abscissa < 0.5 * c.rho,
        spectral_abscissa,
        maximal,
        roots,
    }
}
