//! Contractive generators on the disc and the Schur/inner membership test.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::OperatorFunction;
use crate::error::{Error, Result};
use crate::io::serde_cmat;
use crate::linops::{self, CMat};

const NORM_SLACK: f64 = 1e-12;

/// `(I - M)^{1/2}` for Hermitian `M <= I`, clamping round-off negatives.
fn defect(m: &CMat) -> CMat {
    let n = m.nrows();
    linops::hermitian_function(&(linops::identity(n) - m), |l| l.max(0.0).sqrt())
}

fn check_contraction(a: &CMat) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::NonSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let norm = linops::spectral_norm(a);
    if norm > 1.0 + NORM_SLACK {
        return Err(Error::Precondition(format!(
            "contraction required: ||A|| = {norm:.6e} > 1"
        )));
    }
    Ok(())
}

fn check_closed_disc(w: Complex64) -> Result<()> {
    if w.norm() > 1.0 + NORM_SLACK || !w.re.is_finite() || !w.im.is_finite() {
        return Err(Error::Domain {
            z: w,
            reason: "point outside the closed unit disc".into(),
        });
    }
    Ok(())
}

fn check_potapov(a: &CMat, w: Complex64) -> Result<()> {
    check_contraction(a)?;
    check_closed_disc(w)?;
    let r = linops::spectral_radius(a)?;
    if r >= 1.0 - NORM_SLACK {
        return Err(Error::Precondition(format!(
            "spectral radius r(A) = {r:.6e} must be < 1"
        )));
    }
    let n = a.nrows();
    let co = linops::spectral_norm(&(a * a.adjoint() - linops::identity(n)));
    if co <= NORM_SLACK {
        return Err(Error::Precondition(format!(
            "AA* must differ from I: ||AA* - I|| = {co:.3e}"
        )));
    }
    Ok(())
}

/// `V_A(w) = -A* + w (I - A*A)^{1/2} (I - wA)^{-1} (I - AA*)^{1/2}`.
pub fn potapov(a: &CMat, w: Complex64) -> Result<CMat> {
    check_potapov(a, w)?;
    let n = a.nrows();
    let d_a = defect(&(a.adjoint() * a));
    let d_as = defect(&(a * a.adjoint()));
    let resolvent = linops::inverse(&(linops::identity(n) - a * w), w, 1e-14)?;
    Ok(-a.adjoint() + d_a * resolvent * d_as * w)
}

/// `dV_A/dw = (I - A*A)^{1/2} (I - wA)^{-2} (I - AA*)^{1/2}`.
pub fn potapov_derivative(a: &CMat, w: Complex64) -> Result<CMat> {
    check_potapov(a, w)?;
    let n = a.nrows();
    let d_a = defect(&(a.adjoint() * a));
    let d_as = defect(&(a * a.adjoint()));
    let resolvent = linops::inverse(&(linops::identity(n) - a * w), w, 1e-14)?;
    Ok(d_a * &resolvent * &resolvent * d_as)
}

/// Characteristic function value on the full space plus the projectors onto
/// the two defect spaces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharacteristicValue {
    #[serde(with = "serde_cmat")]
    pub value: CMat,
    /// Projector onto the closure of rng (I - A*A)^{1/2}.
    #[serde(with = "serde_cmat")]
    pub defect: CMat,
    /// Projector onto the closure of rng (I - AA*)^{1/2}.
    #[serde(with = "serde_cmat")]
    pub defect_star: CMat,
    /// The defect space is trivial (A is an isometry), so the restricted
    /// function acts on the zero space.
    pub degenerate: bool,
}

impl CharacteristicValue {
    /// `P_{D_{A*}} C_A P_{D_A}`
    pub fn restricted(&self) -> CMat {
        &self.defect_star * &self.value * &self.defect
    }
}

/// `C_A(w) = -A + w (I - AA*)^{1/2} (I - wA*)^{-1} (I - A*A)^{1/2}`.
pub fn characteristic_function(a: &CMat, w: Complex64) -> Result<CharacteristicValue> {
    check_contraction(a)?;
    check_closed_disc(w)?;
    let n = a.nrows();
    let a_star_a = a.adjoint() * a;
    let a_a_star = a * a.adjoint();
    let d_a = defect(&a_star_a);
    let d_as = defect(&a_a_star);
    let resolvent = linops::inverse(&(linops::identity(n) - a.adjoint() * w), w, 1e-14)?;
    let value = -a + &d_as * resolvent * &d_a * w;
    let id = linops::identity(n);
    let defect_proj = linops::range_projector(&(&id - a_star_a), 1e-12);
    let defect_star = linops::range_projector(&(&id - a_a_star), 1e-12);
    let degenerate = defect_proj.norm() < 0.5;
    Ok(CharacteristicValue {
        value,
        defect: defect_proj,
        defect_star,
        degenerate,
    })
}

pub(crate) fn characteristic_derivative(a: &CMat, w: Complex64) -> Result<CMat> {
    check_contraction(a)?;
    check_closed_disc(w)?;
    let n = a.nrows();
    let d_a = defect(&(a.adjoint() * a));
    let d_as = defect(&(a * a.adjoint()));
    let resolvent = linops::inverse(&(linops::identity(n) - a.adjoint() * w), w, 1e-14)?;
    Ok(d_as * &resolvent * &resolvent * d_a)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointFailure {
    #[serde(with = "crate::io::serde_c64")]
    pub z: Complex64,
    pub message: String,
}

/// Schur-class and inner/*-inner membership measured on sample grids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InnerReport {
    /// max over the upper grid of `lambda_max(F*F) - 1`
    pub schur_excess: f64,
    /// max over the real grid of `||F*F - I||`
    pub isometry_defect: f64,
    /// max over the real grid of `||FF* - I||`
    pub coisometry_defect: f64,
    pub upper_evaluated: usize,
    pub real_evaluated: usize,
    pub failures: Vec<PointFailure>,
    pub tol: f64,
    pub in_schur_class: bool,
    pub inner: bool,
    pub star_inner: bool,
}

impl InnerReport {
    pub fn inner_both_sides(&self) -> bool {
        self.inner && self.star_inner
    }
}

/// Samples `F` on points of the upper half-plane and of the real line.
/// Evaluation failures are recorded per point.
pub fn inner_check(
    f: &dyn OperatorFunction,
    upper_grid: &[Complex64],
    real_grid: &[f64],
    tol: f64,
) -> Result<InnerReport> {
    if upper_grid.is_empty() || real_grid.is_empty() {
        return Err(Error::Precondition("inner_check needs nonempty grids".into()));
    }
    let n = f.dim();
    let id = linops::identity(n);
    let mut failures = Vec::new();
    let mut schur_excess = f64::NEG_INFINITY;
    let mut upper_evaluated = 0;
    for &z in upper_grid {
        match f.eval(z) {
            Ok(v) => {
                let s = linops::spectral_norm(&v);
                schur_excess = schur_excess.max(s * s - 1.0);
                upper_evaluated += 1;
            }
            Err(e) => failures.push(PointFailure {
                z,
                message: e.to_string(),
            }),
        }
    }
    let mut iso: f64 = 0.0;
    let mut coiso: f64 = 0.0;
    let mut real_evaluated = 0;
    for &x in real_grid {
        let z = Complex64::new(x, 0.0);
        match f.eval(z) {
            Ok(v) => {
                iso = iso.max(linops::spectral_norm(&(v.adjoint() * &v - &id)));
                coiso = coiso.max(linops::spectral_norm(&(&v * v.adjoint() - &id)));
                real_evaluated += 1;
            }
            Err(e) => failures.push(PointFailure {
                z,
                message: e.to_string(),
            }),
        }
    }
    let in_schur = upper_evaluated > 0 && schur_excess <= tol;
    let real_ok = real_evaluated > 0;
    Ok(InnerReport {
        schur_excess,
        isometry_defect: iso,
        coisometry_defect: coiso,
        upper_evaluated,
        real_evaluated,
        failures,
        tol,
        in_schur_class: in_schur,
        inner: in_schur && real_ok && iso <= tol,
        star_inner: in_schur && real_ok && coiso <= tol,
    })
}
