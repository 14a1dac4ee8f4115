//! Problem coefficients, forcing signals and derived cost weights.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative asymmetry below which Q, R and the initial covariance are
/// silently symmetrized.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// A vector-valued time signal.
///
/// Tables interpolate linearly between knots and hold the end values
/// outside the knot range.
#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    Constant(DVector<f64>),
    Table {
        knots: Vec<f64>,
        values: Vec<DVector<f64>>,
    },
}

impl Signal {
    pub fn constant(v: &[f64]) -> Self {
        Signal::Constant(DVector::from_column_slice(v))
    }

    pub fn zeros(n: usize) -> Self {
        Signal::Constant(DVector::zeros(n))
    }

    pub fn table(knots: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(Error::InvalidSignal(format!(
                "{} knots but {} values",
                knots.len(),
                values.len()
            )));
        }
        if knots.iter().any(|t| !t.is_finite()) || knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSignal(
                "knots must be finite and strictly increasing".into(),
            ));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidSignal(
                "table values differ in dimension".into(),
            ));
        }
        Ok(Signal::Table { knots, values })
    }

    pub fn dim(&self) -> usize {
        match self {
            Signal::Constant(v) => v.len(),
            Signal::Table { values, .. } => values[0].len(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Signal::Constant(_))
    }

    /// Value the signal settles to for large t.
    pub fn terminal_value(&self) -> &DVector<f64> {
        match self {
            Signal::Constant(v) => v,
            Signal::Table { values, .. } => values.last().expect("non-empty table"),
        }
    }

    /// Time after which the signal is constant.
    pub fn settle_time(&self) -> f64 {
        match self {
            Signal::Constant(_) => 0.0,
            Signal::Table { knots, .. } => knots.last().copied().unwrap_or(0.0).max(0.0),
        }
    }

    pub fn eval(&self, t: f64) -> Result<DVector<f64>> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeTime(t));
        }
        Ok(self.at(t))
    }

    /// Evaluation without the sign check, for internal grids that start at 0.
    pub(crate) fn at(&self, t: f64) -> DVector<f64> {
        match self {
            Signal::Constant(v) => v.clone(),
            Signal::Table { knots, values } => {
                let idx = knots.partition_point(|&k| k <= t);
                if idx == 0 {
                    values[0].clone()
                } else if idx == knots.len() {
                    values[idx - 1].clone()
                } else {
                    let (t0, t1) = (knots[idx - 1], knots[idx]);
                    let w = (t - t0) / (t1 - t0);
                    &values[idx - 1] * (1.0 - w) + &values[idx] * w
                }
            }
        }
    }

    /// Applies a fixed linear map to every value.
    pub fn map_linear(&self, m: &DMatrix<f64>) -> Signal {
        match self {
            Signal::Constant(v) => Signal::Constant(m * v),
            Signal::Table { knots, values } => Signal::Table {
                knots: knots.clone(),
                values: values.iter().map(|v| m * v).collect(),
            },
        }
    }

    /// Pointwise a·self + b·other. Knot sets are merged; both signals are
    /// piecewise linear, so the result is exact.
    pub fn combine(&self, a: f64, other: &Signal, b: f64) -> Signal {
        match (self, other) {
            (Signal::Constant(x), Signal::Constant(y)) => Signal::Constant(x * a + y * b),
            _ => {
                let mut knots: Vec<f64> = self.knots().into_iter().chain(other.knots()).collect();
                knots.sort_by(|p, q| p.partial_cmp(q).expect("finite knots"));
                knots.dedup();
                let values = knots
                    .iter()
                    .map(|&t| self.at(t) * a + other.at(t) * b)
                    .collect();
                Signal::Table { knots, values }
            }
        }
    }

    fn knots(&self) -> Vec<f64> {
        match self {
            Signal::Constant(_) => Vec::new(),
            Signal::Table { knots, .. } => knots.clone(),
        }
    }

    pub fn max_norm(&self) -> f64 {
        match self {
            Signal::Constant(v) => v.norm(),
            Signal::Table { values, .. } => values.iter().map(|v| v.norm()).fold(0.0, f64::max),
        }
    }

    pub fn to_spec(&self) -> SignalSpec {
        match self {
            Signal::Constant(v) => SignalSpec::Constant(v.iter().cloned().collect()),
            Signal::Table { knots, values } => SignalSpec::Table {
                knots: knots.clone(),
                values: values.iter().map(|v| v.iter().cloned().collect()).collect(),
            },
        }
    }
}

/// Serialized signal: a bare array is a constant, an object is a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignalSpec {
    Constant(Vec<f64>),
    Table {
        knots: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

impl SignalSpec {
    pub fn build(&self) -> Result<Signal> {
        match self {
            SignalSpec::Constant(v) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidSignal("non-finite constant".into()));
                }
                Ok(Signal::constant(v))
            }
            SignalSpec::Table { knots, values } => {
                if values.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidSignal("non-finite table value".into()));
                }
                Signal::table(
                    knots.clone(),
                    values.iter().map(|v| DVector::from_column_slice(v)).collect(),
                )
            }
        }
    }
}

/// Serialized problem coefficients. Matrices are lists of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "Gamma")]
    pub gamma: Vec<Vec<f64>>,
    pub rho: f64,
    pub f: SignalSpec,
    pub sigma: SignalSpec,
    pub eta: SignalSpec,
    pub init_mean: Vec<f64>,
    pub init_cov: Vec<Vec<f64>>,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(Error::DimensionMismatch {
            what: what.to_string(),
            expected: "non-empty matrix".into(),
            found: "empty".into(),
        });
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch {
            what: format!("{what} rows"),
            expected: ncols.to_string(),
            found: bad.len().to_string(),
        });
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} has non-finite entries")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

/// Unvalidated coefficients; turn into [`ProblemData`] with `validate`.
#[derive(Debug, Clone)]
pub struct ProblemParts {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub rho: f64,
    pub f: Signal,
    pub sigma: Signal,
    pub eta: Signal,
    pub init_mean: DVector<f64>,
    pub init_cov: DMatrix<f64>,
}

impl ProblemParts {
    /// Scalar model (n = r = 1) with constant signals and Gaussian initial
    /// states of the given variance.
    pub fn scalar(coeffs: ScalarCoefficients) -> Self {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        ProblemParts {
            a: m(coeffs.a),
            b: m(coeffs.b),
            g: m(coeffs.g),
            q: m(coeffs.q),
            r: m(coeffs.r),
            gamma: m(coeffs.gamma),
            rho: coeffs.rho,
            f: Signal::constant(&[coeffs.f]),
            sigma: Signal::constant(&[coeffs.sigma]),
            eta: Signal::constant(&[coeffs.eta]),
            init_mean: DVector::from_element(1, coeffs.init_mean),
            init_cov: m(coeffs.init_var),
        }
    }

    pub fn validate(self) -> Result<ProblemData> {
        ProblemData::new(self)
    }
}

/// Coefficients of a scalar model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarCoefficients {
    pub a: f64,
    pub b: f64,
    pub g: f64,
    pub q: f64,
    pub r: f64,
    pub gamma: f64,
    pub rho: f64,
    pub f: f64,
    pub sigma: f64,
    pub eta: f64,
    pub init_mean: f64,
    pub init_var: f64,
}

impl Default for ScalarCoefficients {
    fn default() -> Self {
        ScalarCoefficients {
            a: 0.0,
            b: 1.0,
            g: 0.0,
            q: 1.0,
            r: 1.0,
            gamma: 0.0,
            rho: 1.0,
            f: 0.0,
            sigma: 0.0,
            eta: 0.0,
            init_mean: 0.0,
            init_var: 0.0,
        }
    }
}

/// Validated model coefficients. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ProblemData {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    g: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    gamma: DMatrix<f64>,
    rho: f64,
    f: Signal,
    sigma: Signal,
    eta: Signal,
    init_mean: DVector<f64>,
    init_cov: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    // B R⁻¹ Bᵀ
    s: DMatrix<f64>,
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let asym = linalg::relative_asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric {
            what: what.to_string(),
            asymmetry: asym,
        });
    }
    Ok(linalg::symmetrize(m))
}

impl ProblemData {
    pub fn new(parts: ProblemParts) -> Result<Self> {
        let ProblemParts {
            a,
            b,
            g,
            q,
            r,
            gamma,
            rho,
            f,
            sigma,
            eta,
            init_mean,
            init_cov,
        } = parts;

        let n = a.nrows();
        if a.ncols() != n || n == 0 {
            return Err(Error::dims("A", (n, n), a.shape()));
        }
        let m = b.ncols();
        if b.nrows() != n || m == 0 {
            return Err(Error::dims("B", (n, m.max(1)), b.shape()));
        }
        for (name, mat) in [("G", &g), ("Q", &q), ("Gamma", &gamma), ("init_cov", &init_cov)] {
            if mat.shape() != (n, n) {
                return Err(Error::dims(name, (n, n), mat.shape()));
            }
        }
        if r.shape() != (m, m) {
            return Err(Error::dims("R", (m, m), r.shape()));
        }
        if init_mean.len() != n {
            return Err(Error::dims("init_mean", (n, 1), (init_mean.len(), 1)));
        }
        for (name, sig) in [("f", &f), ("sigma", &sigma), ("eta", &eta)] {
            if sig.dim() != n {
                return Err(Error::dims(name, (n, 1), (sig.dim(), 1)));
            }
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::NonPositiveRho(rho));
        }

        let q = check_symmetric(&q, "Q")?;
        let r = check_symmetric(&r, "R")?;
        let min_r = linalg::min_sym_eigenvalue(&r);
        if min_r <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                what: "R".into(),
                min_eigenvalue: min_r,
            });
        }
        let init_cov = check_symmetric(&init_cov, "init_cov")?;
        let min_cov = linalg::min_sym_eigenvalue(&init_cov);
        if min_cov < -1e-10 * init_cov.norm().max(1.0) {
            return Err(Error::NotPsd {
                what: "init_cov".into(),
                min_eigenvalue: min_cov,
            });
        }

        let r_inv = r
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NotPositiveDefinite {
                what: "R".into(),
                min_eigenvalue: min_r,
            })?;
        let r_inv = linalg::symmetrize(&r_inv);
        let s = linalg::symmetrize(&(&b * &r_inv * b.transpose()));

        Ok(ProblemData {
            a,
            b,
            g,
            q,
            r,
            gamma,
            rho,
            f,
            sigma,
            eta,
            init_mean,
            init_cov,
            r_inv,
            s,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }
    pub fn r_inv(&self) -> &DMatrix<f64> {
        &self.r_inv
    }
    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn f(&self) -> &Signal {
        &self.f
    }
    pub fn sigma(&self) -> &Signal {
        &self.sigma
    }
    pub fn eta(&self) -> &Signal {
        &self.eta
    }
    pub fn init_mean(&self) -> &DVector<f64> {
        &self.init_mean
    }
    pub fn init_cov(&self) -> &DMatrix<f64> {
        &self.init_cov
    }
    /// B R⁻¹ Bᵀ.
    pub fn control_weight(&self) -> &DMatrix<f64> {
        &self.s
    }
    /// A + G.
    pub fn a_plus_g(&self) -> DMatrix<f64> {
        &self.a + &self.g
    }
    /// −R⁻¹Bᵀ X, the feedback gain induced by a cost-to-go matrix X.
    pub fn gain_of(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        -(&self.r_inv * self.b.transpose() * x)
    }

    pub fn to_parts(&self) -> ProblemParts {
        ProblemParts {
            a: self.a.clone(),
            b: self.b.clone(),
            g: self.g.clone(),
            q: self.q.clone(),
            r: self.r.clone(),
            gamma: self.gamma.clone(),
            rho: self.rho,
            f: self.f.clone(),
            sigma: self.sigma.clone(),
            eta: self.eta.clone(),
            init_mean: self.init_mean.clone(),
            init_cov: self.init_cov.clone(),
        }
    }

    pub fn to_spec(&self) -> ProblemSpec {
        ProblemSpec {
            a: matrix_to_rows(&self.a),
            b: matrix_to_rows(&self.b),
            g: matrix_to_rows(&self.g),
            q: matrix_to_rows(&self.q),
            r: matrix_to_rows(&self.r),
            gamma: matrix_to_rows(&self.gamma),
            rho: self.rho,
            f: self.f.to_spec(),
            sigma: self.sigma.to_spec(),
            eta: self.eta.to_spec(),
            init_mean: self.init_mean.iter().cloned().collect(),
            init_cov: matrix_to_rows(&self.init_cov),
        }
    }
}

/// Validates a serialized problem.
pub fn build_problem(spec: &ProblemSpec) -> Result<ProblemData> {
    let parts = ProblemParts {
        a: matrix_from_rows(&spec.a, "A")?,
        b: matrix_from_rows(&spec.b, "B")?,
        g: matrix_from_rows(&spec.g, "G")?,
        q: matrix_from_rows(&spec.q, "Q")?,
        r: matrix_from_rows(&spec.r, "R")?,
        gamma: matrix_from_rows(&spec.gamma, "Gamma")?,
        rho: spec.rho,
        f: spec.f.build()?,
        sigma: spec.sigma.build()?,
        eta: spec.eta.build()?,
        init_mean: DVector::from_column_slice(&spec.init_mean),
        init_cov: matrix_from_rows(&spec.init_cov, "init_cov")?,
    };
    ProblemData::new(parts)
}

/// Weights that arise once the coupling Γ is expanded in the social cost.
#[derive(Debug, Clone)]
pub struct DerivedWeights {
    /// ΓᵀQ + QΓ − ΓᵀQΓ
    pub xi: DMatrix<f64>,
    /// (I − Γ)ᵀ Q η
    pub eta_bar: Signal,
    /// Q − Ξ = (I − Γ)ᵀ Q (I − Γ)
    pub q_bar: DMatrix<f64>,
}

pub fn derived_weights(p: &ProblemData) -> DerivedWeights {
    let q = p.q();
    let gamma = p.gamma();
    let n = p.state_dim();
    let xi = gamma.transpose() * q + q * gamma - gamma.transpose() * q * gamma;
    let xi = linalg::symmetrize(&xi);
    let i_minus_gamma = DMatrix::<f64>::identity(n, n) - gamma;
    let q_bar = linalg::symmetrize(&(i_minus_gamma.transpose() * q * &i_minus_gamma));
    let eta_bar = p.eta().map_linear(&(i_minus_gamma.transpose() * q));
    DerivedWeights { xi, eta_bar, q_bar }
}

/// Built-in benchmark problems used by the regression tests and the bundled
/// scenario files.
pub mod benchmarks {
    use super::*;

    /// Scalar benchmark: A = 0.8, B = R = 1, G = −0.2, Q = −0.1, Γ = 0.2,
    /// η = 5, f = 1, σ = 0.2, ρ = 0.6, x(0) ~ N(5, 0.3).
    pub fn scalar_coefficients() -> ScalarCoefficients {
        ScalarCoefficients {
            a: 0.8,
            b: 1.0,
            g: -0.2,
            q: -0.1,
            r: 1.0,
            gamma: 0.2,
            rho: 0.6,
            f: 1.0,
            sigma: 0.2,
            eta: 5.0,
            init_mean: 5.0,
            init_var: 0.3,
        }
    }

    pub fn scalar() -> ProblemData {
        ProblemParts::scalar(scalar_coefficients())
            .validate()
            .expect("scalar benchmark is valid")
    }

    /// Two-state, single-input benchmark with identity Q and a lower
    /// triangular coupling Γ.
    pub fn planar() -> ProblemData {
        let m = |r: usize, c: usize, v: &[f64]| DMatrix::from_row_slice(r, c, v);
        ProblemParts {
            a: m(2, 2, &[0.1, 0.0, -1.0, 0.2]),
            b: m(2, 1, &[1.0, 1.0]),
            g: m(2, 2, &[-0.5, 0.0, 0.0, -0.3]),
            q: DMatrix::identity(2, 2),
            r: DMatrix::identity(1, 1),
            gamma: m(2, 2, &[1.0, 0.0, 1.0, 1.0]),
            rho: 0.6,
            f: Signal::constant(&[1.0, 1.0]),
            sigma: Signal::constant(&[0.5, 0.5]),
            eta: Signal::constant(&[0.0, 0.5]),
            init_mean: DVector::from_vec(vec![5.0, 5.0]),
            init_cov: DMatrix::identity(2, 2) * 0.5,
        }
        .validate()
        .expect("planar benchmark is valid")
    }
}
