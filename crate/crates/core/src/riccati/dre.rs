use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg;
use crate::model::{derived_weights, DerivedWeights, ProblemData};

/// Entry magnitude beyond which a backward Riccati solve is declared to
/// have escaped.
pub const BLOWUP_THRESHOLD: f64 = 1e12;

/// Maximum relative change of P(0) when the step count is halved.
pub const REFINEMENT_TOL: f64 = 1e-6;

/// Backward solution of the finite-horizon Riccati system on a uniform grid.
///
/// `k` is stored as Π − P; the coupled K equation is integrated alongside
/// and its distance to Π − P is kept in `k_identity_defect`.
#[derive(Debug, Clone)]
pub struct FiniteRiccatiPath {
    pub grid: TimeGrid,
    pub p: Vec<DMatrix<f64>>,
    pub k: Vec<DMatrix<f64>>,
    pub pi: Vec<DMatrix<f64>>,
    pub s: Vec<DVector<f64>>,
    /// max over the grid of ‖Π − P − K‖_F with K from its own equation.
    pub k_identity_defect: f64,
    /// Time of the first grid point where the solution exceeded
    /// [`BLOWUP_THRESHOLD`]; entries before it are NaN.
    pub blowup: Option<f64>,
    /// Relative change of P(0) under step halving, when checked.
    pub refinement_change: Option<f64>,
}

impl FiniteRiccatiPath {
    pub fn p0(&self) -> &DMatrix<f64> {
        &self.p[0]
    }

    pub fn pi0(&self) -> &DMatrix<f64> {
        &self.pi[0]
    }

    pub fn s0(&self) -> &DVector<f64> {
        &self.s[0]
    }
}

struct Coefficients<'a> {
    p: &'a ProblemData,
    w: DerivedWeights,
    a_g: DMatrix<f64>,
}

/// dΠ/dt for the Π equation (forward-time derivative).
pub(crate) fn pi_rhs(p: &ProblemData, w: &DerivedWeights, pi: &DMatrix<f64>) -> DMatrix<f64> {
    let a_g = p.a_plus_g();
    let s = p.control_weight();
    pi * p.rho() - a_g.transpose() * pi - pi * &a_g - &w.q_bar + pi * s * pi
}

/// ds/dt for the offset equation at time t, given Π(t).
pub(crate) fn offset_rhs(
    p: &ProblemData,
    w: &DerivedWeights,
    pi: &DMatrix<f64>,
    s_vec: &DVector<f64>,
    t: f64,
) -> DVector<f64> {
    let closed = p.a_plus_g() - p.control_weight() * pi;
    s_vec * p.rho() - closed.transpose() * s_vec - pi * p.f().at(t) + w.eta_bar.at(t)
}

#[derive(Clone)]
struct State {
    p: DMatrix<f64>,
    k: DMatrix<f64>,
    pi: DMatrix<f64>,
    s: DVector<f64>,
}

impl State {
    fn zeros(n: usize) -> Self {
        State {
            p: DMatrix::zeros(n, n),
            k: DMatrix::zeros(n, n),
            pi: DMatrix::zeros(n, n),
            s: DVector::zeros(n),
        }
    }

    fn axpy(&self, h: f64, d: &State) -> State {
        State {
            p: &self.p + &d.p * h,
            k: &self.k + &d.k * h,
            pi: &self.pi + &d.pi * h,
            s: &self.s + &d.s * h,
        }
    }

    fn max_abs(&self) -> f64 {
        self.p
            .iter()
            .chain(self.k.iter())
            .chain(self.pi.iter())
            .chain(self.s.iter())
            .fold(0.0f64, |m, v| if v.is_nan() { f64::INFINITY } else { m.max(v.abs()) })
    }
}

impl Coefficients<'_> {
    fn rhs(&self, y: &State, t: f64) -> State {
        let p = self.p;
        let rho = p.rho();
        let (a, g, s) = (p.a(), p.g(), p.control_weight());
        let a_g = &self.a_g;

        let psp = &y.p * s * &y.p;
        let dp = &y.p * rho - a.transpose() * &y.p - &y.p * a - p.q() + &psp;

        let pk = &y.p + &y.k;
        let dk = &y.k * rho - a_g.transpose() * &y.k - &y.k * a_g - g.transpose() * &y.p
            - &y.p * g
            + &pk * s * &pk
            - &psp
            + &self.w.xi;

        let dpi = pi_rhs(p, &self.w, &y.pi);
        let ds = offset_rhs(p, &self.w, &y.pi, &y.s, t);
        State {
            p: dp,
            k: dk,
            pi: dpi,
            s: ds,
        }
    }

    /// One classical RK4 step from t to t + dt (dt < 0 when marching back).
    fn rk4(&self, y: &State, t: f64, dt: f64) -> State {
        let k1 = self.rhs(y, t);
        let k2 = self.rhs(&y.axpy(0.5 * dt, &k1), t + 0.5 * dt);
        let k3 = self.rhs(&y.axpy(0.5 * dt, &k2), t + 0.5 * dt);
        let k4 = self.rhs(&y.axpy(dt, &k3), t + dt);
        let mut next = State {
            p: &y.p + (&k1.p + &k2.p * 2.0 + &k3.p * 2.0 + &k4.p) * (dt / 6.0),
            k: &y.k + (&k1.k + &k2.k * 2.0 + &k3.k * 2.0 + &k4.k) * (dt / 6.0),
            pi: &y.pi + (&k1.pi + &k2.pi * 2.0 + &k3.pi * 2.0 + &k4.pi) * (dt / 6.0),
            s: &y.s + (&k1.s + &k2.s * 2.0 + &k3.s * 2.0 + &k4.s) * (dt / 6.0),
        };
        next.p = linalg::symmetrize(&next.p);
        next.k = linalg::symmetrize(&next.k);
        next.pi = linalg::symmetrize(&next.pi);
        next
    }
}

/// Backward RK4 integration of (P, K, Π, s) from zero terminal data,
/// without the step-refinement check.
pub fn integrate_dre(p: &ProblemData, horizon: f64, steps: usize) -> Result<FiniteRiccatiPath> {
    let grid = TimeGrid::new(horizon, steps)?;
    let n = p.state_dim();
    let coeffs = Coefficients {
        p,
        w: derived_weights(p),
        a_g: p.a_plus_g(),
    };

    let nan_m = DMatrix::from_element(n, n, f64::NAN);
    let nan_v = DVector::from_element(n, f64::NAN);
    let mut path = FiniteRiccatiPath {
        grid,
        p: vec![nan_m.clone(); grid.len()],
        k: vec![nan_m.clone(); grid.len()],
        pi: vec![nan_m; grid.len()],
        s: vec![nan_v; grid.len()],
        k_identity_defect: 0.0,
        blowup: None,
        refinement_change: None,
    };

    let mut y = State::zeros(n);
    let mut defect = 0.0f64;
    let h = grid.step();
    for idx in (0..grid.len()).rev() {
        if idx < steps {
            y = coeffs.rk4(&y, grid.t(idx + 1), -h);
            if y.max_abs() > BLOWUP_THRESHOLD {
                path.blowup = Some(grid.t(idx));
                path.k_identity_defect = defect;
                return Err(Error::BlowUp {
                    time: grid.t(idx),
                    partial: Box::new(path),
                });
            }
        }
        defect = defect.max((&y.pi - &y.p - &y.k).norm());
        path.k[idx] = &y.pi - &y.p;
        path.p[idx] = y.p.clone();
        path.pi[idx] = y.pi.clone();
        path.s[idx] = y.s.clone();
    }
    path.k_identity_defect = defect;
    Ok(path)
}

/// Solves the finite-horizon Riccati system on `steps` uniform steps and
/// checks that halving the step count moves P(0) by at most
/// [`REFINEMENT_TOL`] (relative).
pub fn solve_dre(p: &ProblemData, horizon: f64, steps: usize) -> Result<FiniteRiccatiPath> {
    let mut fine = integrate_dre(p, horizon, steps)?;
    let coarse = match integrate_dre(p, horizon, (steps / 2).max(2)) {
        Ok(c) => c,
        Err(Error::BlowUp { .. }) => {
            return Err(Error::StepTooCoarse {
                relative_change: f64::INFINITY,
            })
        }
        Err(e) => return Err(e),
    };
    let diff = (fine.p0() - coarse.p0()).norm();
    let scale = fine.p0().norm();
    let change = if diff == 0.0 { 0.0 } else { diff / scale.max(f64::MIN_POSITIVE) };
    fine.refinement_change = Some(change);
    if diff > 1e-14 && change > REFINEMENT_TOL {
        return Err(Error::StepTooCoarse {
            relative_change: change,
        });
    }
    Ok(fine)
}
