#![allow(dead_code)]

use mflq::model::{benchmarks, ProblemData, ProblemParts, ScalarCoefficients, Signal};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// P(t) for ρP = ... from zero terminal data, via the exponential of the
/// 2n×2n Hamiltonian built here from raw coefficients:
/// P(t) = (E₂₂)⁻¹E₂₁ with E = exp(H τ), τ = T − t,
/// H = [[A − ρ/2, BR⁻¹Bᵀ], [Q, −Aᵀ + ρ/2]].
pub fn dre_by_exponential(a: &DMatrix<f64>, b: &DMatrix<f64>, r: &DMatrix<f64>, q: &DMatrix<f64>, rho: f64, tau: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let s = b * r.clone().try_inverse().unwrap() * b.transpose();
    let shift = DMatrix::<f64>::identity(n, n) * (0.5 * rho);
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&(a - &shift));
    h.view_mut((0, n), (n, n)).copy_from(&s);
    h.view_mut((n, 0), (n, n)).copy_from(q);
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose() + &shift));
    let e = (h * tau).exp();
    let e21 = e.view((n, 0), (n, n)).into_owned();
    let e22 = e.view((n, n), (n, n)).into_owned();
    e22.try_inverse().unwrap() * e21
}

/// Largest root of s p² − (2a − ρ) p − q = 0 by the quadratic formula,
/// in the form without cancellation.
pub fn max_root(a: f64, s: f64, q: f64, rho: f64) -> f64 {
    let lin = 2.0 * a - rho;
    let root_disc = (lin * lin + 4.0 * s * q).sqrt();
    if lin >= 0.0 {
        (lin + root_disc) / (2.0 * s)
    } else {
        -2.0 * q / (lin - root_disc)
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

/// Random 2-D problem with Q = LLᵀ ⪰ 0.
pub fn random_planar(seed: u64) -> ProblemData {
    let mut g = rng(seed);
    let l = random_matrix(&mut g, 2, 2, 1.0);
    ProblemParts {
        a: random_matrix(&mut g, 2, 2, 1.0),
        b: random_matrix(&mut g, 2, 1, 1.0),
        g: random_matrix(&mut g, 2, 2, 0.3),
        q: &l * l.transpose(),
        r: DMatrix::identity(1, 1),
        gamma: random_matrix(&mut g, 2, 2, 0.3),
        rho: 0.5,
        f: Signal::constant(&[0.3, -0.2]),
        sigma: Signal::constant(&[0.2, 0.1]),
        eta: Signal::constant(&[1.0, 0.0]),
        init_mean: DVector::from_vec(vec![1.0, -1.0]),
        init_cov: DMatrix::identity(2, 2) * 0.2,
    }
    .validate()
    .unwrap()
}

/// Singular aggregate case: a + g = ρ/2, γ = 1, f = 1.
pub fn marginal_problem(x0: f64) -> ProblemData {
    ProblemParts::scalar(ScalarCoefficients {
        a: 0.5,
        b: 1.0,
        g: -0.2,
        q: 1.0,
        r: 1.0,
        gamma: 1.0,
        rho: 0.6,
        f: 1.0,
        sigma: 0.0,
        eta: 2.0,
        init_mean: x0,
        init_var: 0.0,
    })
    .validate()
    .unwrap()
}

/// f = 0, G = 0 comparison regime, q = 1, γ = 0.5.
pub fn legacy_problem() -> ProblemData {
    let mut c = benchmarks::scalar_coefficients();
    c.f = 0.0;
    c.g = 0.0;
    c.q = 1.0;
    c.gamma = 0.5;
    ProblemParts::scalar(c).validate().unwrap()
}

/// Least-squares slope of log y on log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Random scalar problem; the sign of q cycles with `k` through
/// positive, zero and negative. One in ten draws has b = 0.
pub fn random_scalar(g: &mut ChaCha8Rng, k: usize) -> ProblemData {
    let q = match k % 3 {
        0 => g.random_range(0.05..2.0),
        1 => 0.0,
        _ => g.random_range(-1.0..-0.01),
    };
    let b = if g.random_range(0..10) == 0 { 0.0 } else { g.random_range(0.2..1.5) };
    ProblemParts::scalar(ScalarCoefficients {
        a: g.random_range(-1.5..1.5),
        b,
        g: g.random_range(-1.0..1.0),
        q,
        r: g.random_range(0.3..3.0),
        gamma: g.random_range(-1.0..1.0),
        rho: g.random_range(0.1..1.5),
        f: 1.0,
        sigma: 0.1,
        eta: 1.0,
        init_mean: 1.0,
        init_var: 0.1,
    })
    .validate()
    .unwrap()
}
