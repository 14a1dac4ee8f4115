//! Small dense linear-algebra helpers on top of nalgebra.
//!
//! Everything here works on `DMatrix<f64>`; state dimensions in this crate
//! are small (a handful of states), so Kronecker-product solves are fine.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// (M + Mᵀ)/2.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// ‖M − Mᵀ‖_F / max(1, ‖M‖_F).
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).norm() / m.norm().max(1.0)
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric square root of a positive-semidefinite matrix.
///
/// Eigenvalues down to `-1e-10` are clamped to zero; anything more negative
/// is rejected.
pub fn psd_sqrt(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let eig = symmetrize(m).symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-10 {
        return Err(Error::NotPsd {
            what: what.to_string(),
            min_eigenvalue: min,
        });
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// Spectrum of a general square matrix.
///
/// Goes through faer: nalgebra's Francis iteration has no exceptional
/// shifts and never returns on some Hamiltonians with a ±a±bi quadruple.
/// Non-finite input or a failed decomposition gives all-NaN eigenvalues.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let n = m.nrows();
    let nan = || vec![Complex::new(f64::NAN, f64::NAN); n];
    if n == 0 {
        return Vec::new();
    }
    if m.iter().any(|v| !v.is_finite()) {
        return nan();
    }
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    match fm.eigenvalues() {
        Ok(ev) => ev.into_iter().map(|z| Complex::new(z.re, z.im)).collect(),
        Err(_) => nan(),
    }
}

/// Largest real part over the spectrum of `m`; NaN if the spectrum is.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    let ev = eigenvalues(m);
    if ev.iter().any(|z| z.re.is_nan()) {
        return f64::NAN;
    }
    ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Spectral norm (largest singular value).
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

pub fn quad_form(x: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    x.dot(&(m * x))
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// Solves Aᵀ X + X A = C for X by vectorization.
pub fn solve_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let op = kron(&eye, &at) + kron(&at, &eye);
    let rhs = DVector::from_column_slice(c.as_slice());
    let sol = op.lu().solve(&rhs)?;
    Some(DMatrix::from_column_slice(n, n, sol.as_slice()))
}

/// Matrix sign function by scaled Newton iteration.
///
/// Requires `m` to have no eigenvalues on the imaginary axis; returns `None`
/// if an iterate becomes singular or the iteration fails to settle.
pub fn matrix_sign(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let dim = m.nrows();
    let mut z = m.clone();
    let mut scaling = true;
    for _ in 0..200 {
        let lu = z.clone().lu();
        let inv = lu.try_inverse()?;
        let c = if scaling {
            // |det Z|^(-1/dim) through the LU diagonal, in log space
            let log_det: f64 = z
                .clone()
                .lu()
                .u()
                .diagonal()
                .iter()
                .map(|u| u.abs().ln())
                .sum();
            (-log_det / dim as f64).exp()
        } else {
            1.0
        };
        if !c.is_finite() {
            return None;
        }
        let next = (&z * c + inv / c) * 0.5;
        let change = (&next - &z).norm() / next.norm().max(1.0);
        z = next;
        if change < 1e-2 {
            scaling = false;
        }
        if change < 1e-14 {
            return Some(z);
        }
        if !z.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    // Rounding can stall the last digit; accept if the iterate is an involution.
    let dev = (&z * &z - DMatrix::identity(dim, dim)).norm();
    (dev < 1e-8).then_some(z)
}

pub fn is_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}
