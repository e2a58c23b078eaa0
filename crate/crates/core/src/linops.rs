//! Dense complex linear algebra used throughout the toolkit.
//!
//! Every routine here is a pure function of its inputs. Decompositions go
//! through nalgebra's deterministic Householder/QR-iteration based SVD and
//! Hermitian eigen-solvers, so repeated calls on the same input give
//! bit-identical results.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense complex matrix, row/column layout owned by nalgebra.
pub type CMat = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Numerical thresholds shared by the kernel, validation and spectral code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative slack for positive semi-definiteness, scaled by the spectral norm.
    pub psd_tol: f64,
    /// Singular values below `rank_rel_tol * sigma_max` count as zero.
    pub rank_rel_tol: f64,
    pub unitary_tol: f64,
    /// Acceptance level for "numerically singular" (relative to `1 + norm`).
    pub singular_accept: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            psd_tol: 1e-10,
            rank_rel_tol: 1e-12,
            unitary_tol: 1e-8,
            singular_accept: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn check(&self) -> Result<()> {
        let all = [
            self.psd_tol,
            self.rank_rel_tol,
            self.unitary_tol,
            self.singular_accept,
        ];
        if all.iter().all(|t| t.is_finite() && *t >= 0.0) {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "tolerances must be finite and nonnegative: {self:?}"
            )))
        }
    }
}

fn require_square(m: &CMat) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

/// Builds a matrix from row-major entries.
pub fn from_rows(rows: usize, cols: usize, entries: &[Complex64]) -> Result<CMat> {
    if rows * cols != entries.len() {
        return Err(Error::DimensionMismatch(format!(
            "{rows}x{cols} matrix needs {} entries, got {}",
            rows * cols,
            entries.len()
        )));
    }
    if entries.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::Parse("matrix entries must be finite".into()));
    }
    Ok(DMatrix::from_row_slice(rows, cols, entries))
}

pub fn real_diag(values: &[f64]) -> CMat {
    let d = DVector::from_iterator(values.len(), values.iter().map(|&v| Complex64::new(v, 0.0)));
    DMatrix::from_diagonal(&d)
}

pub fn complex_diag(values: &[Complex64]) -> CMat {
    DMatrix::from_diagonal(&DVector::from_column_slice(values))
}

pub fn identity(n: usize) -> CMat {
    DMatrix::identity(n, n)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|c| c.re.is_finite() && c.im.is_finite())
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let svd = SVD::new(m.clone(), false, false);
    svd.singular_values.iter().copied().collect()
}

/// Largest singular value; zero for an empty matrix.
pub fn spectral_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Eigenvalues of the Hermitian part `(M + M*)/2`, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Result<Vec<f64>> {
    require_square(m)?;
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Entrywise Hermitian test: `max|M - M*| <= tol * (1 + max|M|)`.
pub fn is_hermitian(m: &CMat, tol: f64) -> Result<bool> {
    require_square(m)?;
    Ok(hermitian_defect(m) <= tol * (1.0 + max_abs(m)))
}

fn hermitian_defect(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// PSD test on the Hermitian part. Rejects inputs that are not Hermitian
/// within `tol`.
pub fn is_psd(m: &CMat, tol: f64) -> Result<bool> {
    if !is_hermitian(m, tol)? {
        return Err(Error::NotHermitian {
            asymmetry: hermitian_defect(m),
        });
    }
    if m.is_empty() {
        return Ok(true);
    }
    let ev = hermitian_eigenvalues(m)?;
    let norm = ev.iter().map(|v| v.abs()).fold(0.0, f64::max);
    Ok(ev[0] >= -tol * (1.0 + norm))
}

/// Hermitian PSD square root via eigen-decomposition with negative
/// eigenvalues clamped to zero.
pub fn psd_sqrt(m: &CMat) -> Result<CMat> {
    psd_sqrt_tol(m, Tolerances::default().psd_tol)
}

pub fn psd_sqrt_tol(m: &CMat, psd_tol: f64) -> Result<CMat> {
    require_square(m)?;
    if !is_psd(m, psd_tol)? {
        return Err(Error::NotPsd {
            min_eigenvalue: hermitian_eigenvalues(m)?[0],
        });
    }
    Ok(hermitian_function(m, |l| l.max(0.0).sqrt()))
}

/// Applies a real function to the spectrum of the Hermitian part of `m`.
pub fn hermitian_function(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let d = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| Complex64::new(f(l), 0.0)),
    );
    let v = &eig.eigenvectors;
    let r = v * DMatrix::from_diagonal(&d) * v.adjoint();
    (&r + r.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Inverse square root of a Hermitian positive definite matrix.
pub fn hpd_inv_sqrt(m: &CMat, rank_rel_tol: f64) -> Result<CMat> {
    require_square(m)?;
    let ev = hermitian_eigenvalues(m)?;
    let top = ev.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if ev.is_empty() || ev[0] <= rank_rel_tol * top || top == 0.0 {
        return Err(Error::NotPsd {
            min_eigenvalue: ev.first().copied().unwrap_or(0.0),
        });
    }
    Ok(hermitian_function(m, |l| 1.0 / l.sqrt()))
}

/// Moore–Penrose pseudoinverse. Singular values below
/// `rank_rel_tol * sigma_max` are treated as zero.
pub fn pinv(m: &CMat, rank_rel_tol: f64) -> CMat {
    let (rows, cols) = m.shape();
    if m.is_empty() {
        return DMatrix::zeros(cols, rows);
    }
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values[0];
    let cut = rank_rel_tol * smax;
    let mut out = DMatrix::zeros(cols, rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut && s > 0.0 {
            let vk = vt.row(k).adjoint();
            let uk = u.column(k).adjoint();
            out += (vk * uk) * Complex64::new(1.0 / s, 0.0);
        }
    }
    out
}

/// Smallest singular value (over `min(rows, cols)` values).
pub fn sigma_min(m: &CMat) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// `||MM* - I|| <= tol` and `||M*M - I|| <= tol` in spectral norm.
pub fn is_unitary(m: &CMat, tol: f64) -> Result<bool> {
    Ok(unitary_defect(m)? <= tol)
}

pub fn unitary_defect(m: &CMat) -> Result<f64> {
    require_square(m)?;
    let id = identity(m.nrows());
    let a = spectral_norm(&(m * m.adjoint() - &id));
    let b = spectral_norm(&(m.adjoint() * m - &id));
    Ok(a.max(b))
}

/// Numerical rank with the relative cut `rank_rel_tol * sigma_max`.
pub fn rank(m: &CMat, rank_rel_tol: f64) -> usize {
    let sv = singular_values(m);
    let Some(&smax) = sv.first() else { return 0 };
    sv.iter().filter(|&&s| s > rank_rel_tol * smax && s > 0.0).count()
}

/// `dim ker M - dim ker M*` for the finite matrix. Square inputs always give
/// zero: at finite truncation the index pair of a de Branges operator is
/// `(0, 0)` by rank–nullity.
pub fn fredholm_index(m: &CMat, rank_rel_tol: f64) -> i64 {
    let r = rank(m, rank_rel_tol) as i64;
    (m.ncols() as i64 - r) - (m.nrows() as i64 - r)
}

/// Solves `A X = B` for square `A`, failing when `A` is numerically singular
/// (`sigma_min < singular_accept * sigma_max`).
pub fn solve(a: &CMat, b: &CMat, z: Complex64, singular_accept: f64) -> Result<CMat> {
    require_square(a)?;
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "solve: lhs {}x{}, rhs {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    check_invertible(a, z, singular_accept)?;
    a.clone().lu().solve(b).ok_or(Error::Singularity {
        z,
        sigma_min: 0.0,
        sigma_max: spectral_norm(a),
    })
}

pub fn inverse(a: &CMat, z: Complex64, singular_accept: f64) -> Result<CMat> {
    solve(a, &identity(a.nrows()), z, singular_accept)
}

pub fn check_invertible(a: &CMat, z: Complex64, singular_accept: f64) -> Result<()> {
    let sv = singular_values(a);
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    if !(smin > singular_accept * smax) || smax == 0.0 {
        return Err(Error::Singularity {
            z,
            sigma_min: smin,
            sigma_max: smax,
        });
    }
    Ok(())
}

/// Right singular vectors whose singular values are at most `threshold`,
/// ordered by increasing singular value. At least one vector (the one for
/// `sigma_min`) is always returned for a nonempty square input.
pub fn near_null_space(m: &CMat, threshold: f64) -> (Vec<CVec>, Vec<f64>) {
    let n = m.ncols();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let svd = SVD::new(m.clone(), false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let mut vecs = Vec::new();
    let mut sig = Vec::new();
    for (rank, &k) in order.iter().enumerate() {
        let s = svd.singular_values[k];
        if rank == 0 || s <= threshold {
            vecs.push(vt.row(k).adjoint());
            sig.push(s);
        }
    }
    (vecs, sig)
}

/// Eigenvalues of a general square matrix from its complex Schur form.
pub fn eigenvalues(m: &CMat) -> Result<Vec<Complex64>> {
    require_square(m)?;
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let (_, t) = nalgebra::Schur::new(m.clone()).unpack();
    Ok(t.diagonal().iter().copied().collect())
}

pub fn spectral_radius(m: &CMat) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max))
}

/// Orthogonal projector onto the span of eigenvectors of the Hermitian
/// matrix `m` whose eigenvalues exceed `rank_rel_tol * max(|eig|)`.
pub fn range_projector(m: &CMat, rank_rel_tol: f64) -> CMat {
    let n = m.nrows();
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let top = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut p = DMatrix::zeros(n, n);
    if top == 0.0 {
        return p;
    }
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > rank_rel_tol.max(1e-14) * top.max(1.0) {
            let v = eig.eigenvectors.column(k);
            p += v * v.adjoint();
        }
    }
    p
}

pub fn cdot(u: &CVec, v: &CVec) -> Complex64 {
    // <u, v> linear in the first argument
    v.dotc(u)
}
