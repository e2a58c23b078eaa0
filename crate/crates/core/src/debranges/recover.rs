//! Recovering a pair `(E-, E+)` from a kernel, the kernel of `H(F)`, and the
//! isometry test for the multiplication operator.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{pair_kernel, pair_kernel_dz, rho, DeBrangesOperator, ReproducingKernel, DIAGONAL_SWITCH};
use crate::csys::Component;
use crate::efun::OperatorFunction;
use crate::error::{Error, Result};
use crate::io::{self, serde_c64};
use crate::linops::{self, CMat, CVec};

struct Normalization {
    kernel: Arc<dyn ReproducingKernel>,
    beta: Complex64,
    /// `rho_beta(beta)^{-1/2} = (4 pi Im beta)^{-1/2}`
    scale: f64,
    /// `K_beta(beta)^{-1/2}`
    plus_norm: CMat,
    /// `K_{conj beta}(conj beta)^{-1/2}`
    minus_norm: CMat,
}

/// One component of a recovered pair.
#[derive(Clone)]
pub struct RecoveredComponent {
    data: Arc<Normalization>,
    component: Component,
}

impl RecoveredComponent {
    /// `(center, sign, normalizer)` with `E(z) = sign * rho_center(z) * scale * K_center(z) * normalizer`.
    fn parts(&self) -> (Complex64, f64, &CMat) {
        match self.component {
            Component::Plus => (self.data.beta, 1.0, &self.data.plus_norm),
            Component::Minus => (self.data.beta.conj(), -1.0, &self.data.minus_norm),
        }
    }
}

impl OperatorFunction for RecoveredComponent {
    fn dim(&self) -> usize {
        self.data.kernel.dim()
    }

    fn eval(&self, z: Complex64) -> Result<CMat> {
        let (center, sign, norm) = self.parts();
        let k = self.data.kernel.kernel(center, z)?;
        Ok(k * norm * (rho(center, z) * sign * self.data.scale))
    }

    fn derivative(&self, z: Complex64) -> Result<CMat> {
        let (center, sign, norm) = self.parts();
        let k = self.data.kernel.kernel(center, z)?;
        let dk = self.data.kernel.kernel_dz(center, z)?;
        let drho = Complex64::new(0.0, -2.0 * PI);
        Ok((k * drho + dk * rho(center, z)) * norm * Complex64::new(sign * self.data.scale, 0.0))
    }
}

/// `E+(z) = rho_beta(z) rho_beta(beta)^{-1/2} K_beta(z) K_beta(beta)^{-1/2}` and
/// `E-(z) = -rho_{conj beta}(z) rho_beta(beta)^{-1/2} K_{conj beta}(z) K_{conj beta}(conj beta)^{-1/2}`.
#[derive(Clone)]
pub struct RecoveredPair {
    pub minus: RecoveredComponent,
    pub plus: RecoveredComponent,
}

impl RecoveredPair {
    pub fn beta(&self) -> Complex64 {
        self.plus.data.beta
    }
}

impl ReproducingKernel for RecoveredPair {
    fn dim(&self) -> usize {
        self.plus.dim()
    }
    fn kernel(&self, xi: Complex64, z: Complex64) -> Result<CMat> {
        pair_kernel(&self.minus, &self.plus, xi, z)
    }
    fn kernel_dz(&self, xi: Complex64, z: Complex64) -> Result<CMat> {
        pair_kernel_dz(&self.minus, &self.plus, xi, z)
    }
}

fn inv_sqrt_at(k: &dyn ReproducingKernel, point: Complex64, rank_rel_tol: f64) -> Result<CMat> {
    let m = k.kernel(point, point)?;
    linops::hpd_inv_sqrt(&m, rank_rel_tol).map_err(|_| {
        let s = linops::singular_values(&m);
        Error::Singularity {
            z: point,
            sigma_min: s.last().copied().unwrap_or(0.0),
            sigma_max: s.first().copied().unwrap_or(0.0),
        }
    })
}

/// Rebuilds a de Branges pair from the kernel alone, normalized at
/// `beta` in the open upper half-plane.
pub fn recover_e(kernel: Arc<dyn ReproducingKernel>, beta: Complex64, rank_rel_tol: f64) -> Result<RecoveredPair> {
    if !(beta.im > 0.0) {
        return Err(Error::Domain {
            z: beta,
            reason: "normalization point must lie in the open upper half-plane".into(),
        });
    }
    let plus_norm = inv_sqrt_at(kernel.as_ref(), beta, rank_rel_tol)?;
    let minus_norm = inv_sqrt_at(kernel.as_ref(), beta.conj(), rank_rel_tol)?;
    let data = Arc::new(Normalization {
        kernel,
        beta,
        scale: 1.0 / (4.0 * PI * beta.im).sqrt(),
        plus_norm,
        minus_norm,
    });
    Ok(RecoveredPair {
        minus: RecoveredComponent {
            data: Arc::clone(&data),
            component: Component::Minus,
        },
        plus: RecoveredComponent {
            data,
            component: Component::Plus,
        },
    })
}

/// `K^F_xi(z) = (I - F(z) F(xi)*) / rho_xi(z)`, with the limit
/// `F'(conj xi) F(xi)* / (2 pi i)` on the diagonal. `F` must be evaluable
/// at both points (pass an extended or ratio evaluator off the upper
/// half-plane).
pub fn hf_kernel(f: &dyn OperatorFunction, xi: Complex64, z: Complex64) -> Result<CMat> {
    let f_xi = f.eval(xi)?.adjoint();
    let d = z - xi.conj();
    if d.norm() <= DIAGONAL_SWITCH {
        return Ok(f.derivative(xi.conj())? * f_xi / Complex64::new(0.0, 2.0 * PI));
    }
    let id = linops::identity(f.dim());
    Ok((id - f.eval(z)? * f_xi) / rho(xi, z))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsometryReport {
    #[serde(with = "serde_c64")]
    pub beta: Complex64,
    #[serde(with = "serde_c64")]
    pub w: Complex64,
    pub u: Vec<[f64; 2]>,
    /// `||K^beta_w u||^2`
    pub norm_f_sq: f64,
    /// `||h||^2` for `h = ((conj w - conj beta)/(conj w - beta)) K^{conj beta}_w u`
    pub norm_h_sq: f64,
    pub difference: f64,
    pub tol: f64,
    pub passed: bool,
}

fn require_invertible(k: &CMat, at: Complex64, rank_rel_tol: f64) -> Result<()> {
    let s = linops::singular_values(k);
    let (smax, smin) = (s[0], s[s.len() - 1]);
    if !(smin > rank_rel_tol * smax) || smax == 0.0 {
        return Err(Error::Singularity {
            z: at,
            sigma_min: smin,
            sigma_max: smax,
        });
    }
    Ok(())
}

/// Compares `||K^beta_w u||` with the norm of its image under the
/// reflection that swaps the subspaces vanishing at `beta` and `conj beta`.
pub fn isometry_check(
    db: &DeBrangesOperator,
    beta: Complex64,
    w: Complex64,
    u: &CVec,
    rank_rel_tol: f64,
    tol: f64,
) -> Result<IsometryReport> {
    db.require_validated("isometry_check")?;
    if !(beta.im > 0.0) {
        return Err(Error::Domain {
            z: beta,
            reason: "beta must lie in the open upper half-plane".into(),
        });
    }
    if u.len() != db.dim() {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} for dimension {}",
            u.len(),
            db.dim()
        )));
    }
    require_invertible(&db.kernel(beta, beta)?, beta, rank_rel_tol)?;
    require_invertible(&db.kernel(beta.conj(), beta.conj())?, beta.conj(), rank_rel_tol)?;
    let den = w.conj() - beta;
    if den.norm() == 0.0 {
        return Err(Error::Precondition("w = conj(beta) has no reflected counterpart".into()));
    }
    let c = (w.conj() - beta.conj()) / den;
    let kf = super::subspace_kernel(db, beta, w, w, rank_rel_tol)?;
    let kh = super::subspace_kernel(db, beta.conj(), w, w, rank_rel_tol)?;
    let norm_f_sq = linops::cdot(u, &(kf * u)).re;
    let norm_h_sq = c.norm_sqr() * linops::cdot(u, &(kh * u)).re;
    let difference = (norm_h_sq - norm_f_sq).abs();
    Ok(IsometryReport {
        beta,
        w,
        u: io::cvec_to_pairs(u),
        norm_f_sq,
        norm_h_sq,
        difference,
        tol,
        passed: difference <= tol,
    })
}
