//! de Branges operators `(E-, E+)` and their reproducing kernels.
//!
//! The kernel is
//! `K_xi(z) = (E+(z) E+(xi)* - E-(z) E-(xi)*) / rho_xi(z)` with
//! `rho_xi(z) = -2 pi i (z - conj xi)`. Within [`DIAGONAL_SWITCH`] of
//! `z = conj xi` the quotient is replaced by its limit
//! `(E+'(conj xi) E+(xi)* - E-'(conj xi) E-(xi)*) / (-2 pi i)`.

mod recover;
mod space;

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::csys::ProvisoReport;
use crate::efun::{inner_check, EFun, InnerReport, OperatorFunction, Ratio};
use crate::error::{Error, Result};
use crate::io::serde_c64;
use crate::linops::{self, CMat, Tolerances, I};

pub use recover::{hf_kernel, isometry_check, recover_e, IsometryReport, RecoveredComponent, RecoveredPair};
pub use space::{
    backward_shift_eval, bnorm_line_quadrature, gram, gram_norm, gram_norm_sq, inner_product,
    project_orthocomplement, subspace_kernel, verify_positivity, FnVector, KernelCombo,
    KernelComboData, PositivityReport, PositivitySampler, QuadratureReport, VectorFunction,
};

/// Below this distance between `z` and `conj xi` the kernel uses its
/// derivative branch.
pub const DIAGONAL_SWITCH: f64 = 1e-8;

/// `z`-derivatives of the kernel switch to a contour integral of this
/// radius when `|z - conj xi|` is below half of it.
const CONTOUR_RADIUS: f64 = 0.2;
const CONTOUR_NODES: usize = 32;

/// `rho_xi(z) = -2 pi i (z - conj xi)`
pub fn rho(xi: Complex64, z: Complex64) -> Complex64 {
    Complex64::new(0.0, -2.0 * PI) * (z - xi.conj())
}

/// Anything with an operator-valued positive kernel on `C x C`.
pub trait ReproducingKernel: Send + Sync {
    fn dim(&self) -> usize;
    /// `K_xi(z)`
    fn kernel(&self, xi: Complex64, z: Complex64) -> Result<CMat>;
    /// `d/dz K_xi(z)`
    fn kernel_dz(&self, xi: Complex64, z: Complex64) -> Result<CMat>;
}

impl<T: ReproducingKernel + ?Sized> ReproducingKernel for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn kernel(&self, xi: Complex64, z: Complex64) -> Result<CMat> {
        (**self).kernel(xi, z)
    }
    fn kernel_dz(&self, xi: Complex64, z: Complex64) -> Result<CMat> {
        (**self).kernel_dz(xi, z)
    }
}

impl<T: ReproducingKernel + ?Sized> ReproducingKernel for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn kernel(&self, xi: Complex64, z: Complex64) -> Result<CMat> {
        (**self).kernel(xi, z)
    }
    fn kernel_dz(&self, xi: Complex64, z: Complex64) -> Result<CMat> {
        (**self).kernel_dz(xi, z)
    }
}

/// The de Branges kernel of an arbitrary pair of operator functions.
pub fn pair_kernel(
    minus: &dyn OperatorFunction,
    plus: &dyn OperatorFunction,
    xi: Complex64,
    z: Complex64,
) -> Result<CMat> {
    let ep_xi = plus.eval(xi)?.adjoint();
    let em_xi = minus.eval(xi)?.adjoint();
    let d = z - xi.conj();
    if d.norm() <= DIAGONAL_SWITCH {
        let w = xi.conj();
        let num = plus.derivative(w)? * ep_xi - minus.derivative(w)? * em_xi;
        return Ok(num / Complex64::new(0.0, -2.0 * PI));
    }
    let num = plus.eval(z)? * ep_xi - minus.eval(z)? * em_xi;
    Ok(num / rho(xi, z))
}

/// `d/dz` of [`pair_kernel`]. Away from the diagonal this is
/// `(N'(z) + 2 pi i K_xi(z)) / rho_xi(z)`; near it, a trapezoidal Cauchy
/// integral over a circle that stays clear of `conj xi`.
pub fn pair_kernel_dz(
    minus: &dyn OperatorFunction,
    plus: &dyn OperatorFunction,
    xi: Complex64,
    z: Complex64,
) -> Result<CMat> {
    let d = z - xi.conj();
    if d.norm() < 0.5 * CONTOUR_RADIUS {
        return contour_derivative(|w| pair_kernel(minus, plus, xi, w), z, CONTOUR_RADIUS, CONTOUR_NODES);
    }
    let ep_xi = plus.eval(xi)?.adjoint();
    let em_xi = minus.eval(xi)?.adjoint();
    let r = rho(xi, z);
    let k = (plus.eval(z)? * &ep_xi - minus.eval(z)? * &em_xi) / r;
    let dn = plus.derivative(z)? * ep_xi - minus.derivative(z)? * em_xi;
    Ok((dn + k * Complex64::new(0.0, 2.0 * PI)) / r)
}

/// `f'(z) = (1/M) sum_k f(z + r e^{i t_k}) e^{-i t_k} / r` for entire `f`.
pub(crate) fn contour_derivative(
    f: impl Fn(Complex64) -> Result<CMat>,
    z: Complex64,
    radius: f64,
    nodes: usize,
) -> Result<CMat> {
    let mut acc: Option<CMat> = None;
    for k in 0..nodes {
        let t = 2.0 * PI * k as f64 / nodes as f64;
        let e = Complex64::from_polar(1.0, t);
        let term = f(z + e * radius)? * (e.conj() / (radius * nodes as f64));
        acc = Some(match acc {
            Some(a) => a + term,
            None => term,
        });
    }
    Ok(acc.expect("at least one contour node"))
}

/// Kernel of `(E-, E+)` without any validation attached.
pub struct PairKernel<M, P> {
    pub minus: M,
    pub plus: P,
}

impl<M: OperatorFunction, P: OperatorFunction> ReproducingKernel for PairKernel<M, P> {
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

/// Grids and thresholds used by [`DeBrangesOperator::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    /// The factorization identity is checked on an `identity_count^2`
    /// grid covering `[-w, w] x [-w, w]`.
    pub identity_half_width: f64,
    pub identity_count: usize,
    /// Bound on the relative identity residual.
    pub identity_tol: f64,
    /// Number of upper half-plane sample points for the inner check.
    pub upper_count: usize,
    pub real_half_width: f64,
    pub real_count: usize,
    /// Slack for contractivity and boundary unitarity of `E+^{-1} E-`.
    pub inner_tol: f64,
    /// Preferred invertibility witness, tried before the built-in list.
    pub witness: Option<[f64; 2]>,
    pub tolerances: Tolerances,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            identity_half_width: 3.0,
            identity_count: 11,
            identity_tol: 1e-10,
            upper_count: 64,
            real_half_width: 10.0,
            real_count: 64,
            inner_tol: 1e-8,
            witness: None,
            tolerances: Tolerances::default(),
        }
    }
}

impl ValidationConfig {
    pub fn check(&self) -> Result<()> {
        self.tolerances.check()?;
        let positive = [
            self.identity_half_width,
            self.identity_tol,
            self.real_half_width,
            self.inner_tol,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            || self.identity_count == 0
            || self.upper_count == 0
            || self.real_count == 0
        {
            return Err(Error::Precondition(format!("invalid validation config: {self:?}")));
        }
        Ok(())
    }

    pub fn identity_grid(&self) -> Vec<Complex64> {
        let xs = linspace(-self.identity_half_width, self.identity_half_width, self.identity_count);
        let mut out = Vec::with_capacity(xs.len() * xs.len());
        for &y in &xs {
            for &x in &xs {
                out.push(Complex64::new(x, y));
            }
        }
        out
    }

    /// Deterministic points in the open upper half-plane: real parts evenly
    /// spread over `[-4, 4]`, imaginary parts geometric in `[0.05, 3]`.
    pub fn upper_grid(&self) -> Vec<Complex64> {
        let side = (self.upper_count as f64).sqrt().ceil() as usize;
        let xs = linspace(-4.0, 4.0, side);
        let ys: Vec<f64> = if side == 1 {
            vec![1.0]
        } else {
            (0..side)
                .map(|k| 0.05 * (3.0f64 / 0.05).powf(k as f64 / (side - 1) as f64))
                .collect()
        };
        let mut out = Vec::with_capacity(side * side);
        for &y in &ys {
            for &x in &xs {
                out.push(Complex64::new(x, y));
            }
        }
        out.truncate(self.upper_count);
        out
    }

    pub fn real_grid(&self) -> Vec<f64> {
        linspace(-self.real_half_width, self.real_half_width, self.real_count)
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..count)
            .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// A point where one component is numerically invertible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub component: String,
    #[serde(with = "serde_c64")]
    pub z: Complex64,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    /// max over the grid of `||E+(z)E+(conj z)* - E-(z)E-(conj z)*||`
    /// divided by `1 + ||E+(z)|| ||E+(conj z)|| + ||E-(z)|| ||E-(conj z)||`
    pub identity12_residual: f64,
    /// the same maximum without normalization
    pub identity12_abs_residual: f64,
    pub identity12_points: usize,
    pub inner_report: Option<InnerReport>,
    pub invertibility_points: Vec<Witness>,
    pub index_pair: (i64, i64),
    /// largest relative size of `K_xi(xi)` over a few sample points
    pub kernel_diagonal_scale: f64,
    /// set when the kernel vanishes numerically
    pub degenerate_kernel: bool,
    pub provisos: Option<ProvisoReport>,
    pub checks: Vec<CheckOutcome>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn first_failure(&self) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| !c.passed)
    }
}

/// A pair `(E-, E+)` of entire operator functions.
#[derive(Debug, Clone, Serialize)]
pub struct DeBrangesOperator {
    pub label: String,
    #[serde(rename = "eminus")]
    minus: EFun,
    #[serde(rename = "eplus")]
    plus: EFun,
    dim: usize,
    report: Option<ValidationReport>,
}

/// Builds and validates in one step.
pub fn validate(minus: EFun, plus: EFun, config: &ValidationConfig) -> Result<DeBrangesOperator> {
    DeBrangesOperator::new(minus, plus)?.validate(config)
}

impl DeBrangesOperator {
    /// Structural checks only. The result is not validated.
    pub fn new(minus: EFun, plus: EFun) -> Result<Self> {
        minus.check()?;
        plus.check()?;
        for (name, f) in [("E-", &minus), ("E+", &plus)] {
            if !f.is_entire() {
                return Err(Error::Precondition(format!(
                    "{name} ({}) is not entire",
                    f.variant_name()
                )));
            }
        }
        if minus.dim() != plus.dim() {
            return Err(Error::DimensionMismatch(format!(
                "E- has dimension {}, E+ has {}",
                minus.dim(),
                plus.dim()
            )));
        }
        let dim = plus.dim();
        Ok(DeBrangesOperator {
            label: format!("{}/{}", minus.variant_name(), plus.variant_name()),
            minus,
            plus,
            dim,
            report: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn minus(&self) -> &EFun {
        &self.minus
    }

    pub fn plus(&self) -> &EFun {
        &self.plus
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn report(&self) -> Option<&ValidationReport> {
        self.report.as_ref()
    }

    pub fn is_validated(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.passed)
    }

    pub fn require_validated(&self, operation: &str) -> Result<&ValidationReport> {
        match &self.report {
            Some(r) if r.passed => Ok(r),
            _ => Err(Error::Precondition(format!(
                "{operation} needs a validated de Branges operator"
            ))),
        }
    }

    /// `F = E+^{-1} E-` as a meromorphic operator function.
    pub fn ratio(&self, singular_accept: f64) -> Ratio<&EFun, &EFun> {
        Ratio {
            plus: &self.plus,
            minus: &self.minus,
            singular_accept,
        }
    }

    pub fn validate(self, config: &ValidationConfig) -> Result<Self> {
        let report = self.run_validation(config)?;
        self.finish_validation(report)
    }

    /// Attaches `report`; fails with the first failing check.
    pub fn finish_validation(mut self, report: ValidationReport) -> Result<Self> {
        if let Some(first) = report.first_failure() {
            return Err(Error::ValidationFailure {
                check: first.name.clone(),
                report: Box::new(report),
            });
        }
        self.report = Some(report);
        Ok(self)
    }

    /// Runs every check and collects the outcomes without failing.
    pub fn run_validation(&self, config: &ValidationConfig) -> Result<ValidationReport> {
        config.check()?;
        let tol = &config.tolerances;
        let mut checks = Vec::new();

        let (rel, abs, points) = self.identity_residual(&config.identity_grid())?;
        checks.push(CheckOutcome {
            name: "identity12".into(),
            passed: rel <= config.identity_tol,
            detail: format!("relative residual {rel:.3e} (abs {abs:.3e}) over {points} points"),
        });

        let ratio = self.ratio(tol.singular_accept);
        let inner = inner_check(&ratio, &config.upper_grid(), &config.real_grid(), config.inner_tol)?;
        let inner_ok = inner.inner_both_sides() && inner.failures.is_empty();
        checks.push(CheckOutcome {
            name: "inner".into(),
            passed: inner_ok,
            detail: format!(
                "schur excess {:.3e}, isometry defect {:.3e}, coisometry defect {:.3e}, {} failed points",
                inner.schur_excess,
                inner.isometry_defect,
                inner.coisometry_defect,
                inner.failures.len()
            ),
        });

        let mut witnesses = Vec::new();
        let mut index = [0i64; 2];
        let mut witness_ok = true;
        for (k, (name, f)) in [("minus", &self.minus), ("plus", &self.plus)].into_iter().enumerate() {
            match find_witness(f, config) {
                Some((z, m, smin, smax)) => {
                    index[k] = linops::fredholm_index(&m, tol.rank_rel_tol);
                    witnesses.push(Witness {
                        component: name.into(),
                        z,
                        sigma_min: smin,
                        sigma_max: smax,
                    });
                }
                None => witness_ok = false,
            }
        }
        checks.push(CheckOutcome {
            name: "invertibility".into(),
            passed: witness_ok,
            detail: format!("{} of 2 components have an invertibility witness", witnesses.len()),
        });
        checks.push(CheckOutcome {
            name: "index".into(),
            passed: index == [0, 0],
            detail: format!("index pair ({}, {})", index[0], index[1]),
        });

        let scale = self.kernel_diagonal_scale()?;
        let passed = checks.iter().all(|c| c.passed);
        Ok(ValidationReport {
            identity12_residual: rel,
            identity12_abs_residual: abs,
            identity12_points: points,
            inner_report: Some(inner),
            invertibility_points: witnesses,
            index_pair: (index[0], index[1]),
            kernel_diagonal_scale: scale,
            degenerate_kernel: scale <= tol.psd_tol,
            provisos: None,
            checks,
            passed,
        })
    }

    fn identity_residual(&self, grid: &[Complex64]) -> Result<(f64, f64, usize)> {
        let mut rel: f64 = 0.0;
        let mut abs: f64 = 0.0;
        for &z in grid {
            let (pz, pc) = (self.plus.eval(z)?, self.plus.eval(z.conj())?);
            let (mz, mc) = (self.minus.eval(z)?, self.minus.eval(z.conj())?);
            let r = linops::spectral_norm(&(&pz * pc.adjoint() - &mz * mc.adjoint()));
            let scale = 1.0
                + linops::spectral_norm(&pz) * linops::spectral_norm(&pc)
                + linops::spectral_norm(&mz) * linops::spectral_norm(&mc);
            abs = abs.max(r);
            rel = rel.max(r / scale);
        }
        Ok((rel, abs, grid.len()))
    }

    /// `max ||K_xi(xi)|| / (1 + ||E+(xi)||^2 + ||E-(xi)||^2)` over a few points.
    fn kernel_diagonal_scale(&self) -> Result<f64> {
        let samples = [
            Complex64::new(0.0, 1.0),
            Complex64::new(1.0, 0.5),
            Complex64::new(-1.0, 0.5),
            Complex64::new(0.0, 2.0),
            Complex64::new(0.5, 0.0),
        ];
        let mut worst: f64 = 0.0;
        for xi in samples {
            let k = self.kernel(xi, xi)?;
            let s = 1.0
                + linops::spectral_norm(&self.plus.eval(xi)?).powi(2)
                + linops::spectral_norm(&self.minus.eval(xi)?).powi(2);
            worst = worst.max(linops::spectral_norm(&k) / s);
        }
        Ok(worst)
    }

    pub fn eval_pair(&self, z: Complex64) -> Result<(CMat, CMat)> {
        Ok((self.minus.eval(z)?, self.plus.eval(z)?))
    }

    pub fn kernel(&self, xi: Complex64, z: Complex64) -> Result<CMat> {
        pair_kernel(&self.minus, &self.plus, xi, z)
    }

    pub fn kernel_dz(&self, xi: Complex64, z: Complex64) -> Result<CMat> {
        pair_kernel_dz(&self.minus, &self.plus, xi, z)
    }
}

impl ReproducingKernel for DeBrangesOperator {
    fn dim(&self) -> usize {
        self.dim
    }
    fn kernel(&self, xi: Complex64, z: Complex64) -> Result<CMat> {
        DeBrangesOperator::kernel(self, xi, z)
    }
    fn kernel_dz(&self, xi: Complex64, z: Complex64) -> Result<CMat> {
        DeBrangesOperator::kernel_dz(self, xi, z)
    }
}

const WITNESS_CANDIDATES: [(f64, f64); 9] = [
    (0.0, 1.0),
    (0.0, 0.5),
    (1.0, 1.0),
    (-1.0, 1.0),
    (0.0, 2.0),
    (0.3, 0.0),
    (0.0, 0.0),
    (0.0, -1.0),
    (2.5, 0.7),
];

fn find_witness(f: &EFun, config: &ValidationConfig) -> Option<(Complex64, CMat, f64, f64)> {
    let user = config.witness.map(|p| Complex64::new(p[0], p[1]));
    let candidates = user
        .into_iter()
        .chain(WITNESS_CANDIDATES.iter().map(|&(x, y)| Complex64::new(x, y)));
    for z in candidates {
        let Ok(m) = f.eval(z) else { continue };
        let s = linops::singular_values(&m);
        let (smax, smin) = (s[0], s[s.len() - 1]);
        if smin > config.tolerances.singular_accept * (1.0 + smax) {
            return Some((z, m, smin, smax));
        }
    }
    None
}

/// Maximum entry-wise deviation `|K(xi, z)* - K(z, xi)|` over point pairs.
pub fn hermitian_symmetry_defect(k: &dyn ReproducingKernel, pairs: &[(Complex64, Complex64)]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &(xi, z) in pairs {
        let d = k.kernel(xi, z)?.adjoint() - k.kernel(z, xi)?;
        worst = worst.max(linops::max_abs(&d));
    }
    Ok(worst)
}

/// `max ||K(xi, z) - E+(z) K^F_xi(z) E+(xi)*||` over point pairs where
/// `E+` is invertible.
pub fn factorization_defect(db: &DeBrangesOperator, pairs: &[(Complex64, Complex64)], singular_accept: f64) -> Result<f64> {
    let f = db.ratio(singular_accept);
    let mut worst: f64 = 0.0;
    for &(xi, z) in pairs {
        let k = db.kernel(xi, z)?;
        let hf = hf_kernel(&f, xi, z)?;
        let rebuilt = db.plus().eval(z)? * hf * db.plus().eval(xi)?.adjoint();
        worst = worst.max(linops::spectral_norm(&(k - rebuilt)));
    }
    Ok(worst)
}

/// Shorthand used by tests and examples: `(e^{iaz} I, e^{-iaz} I)`.
pub fn exponential_pair(a: f64, n: usize) -> (EFun, EFun) {
    (
        EFun::scalar_exponential(I * a, n),
        EFun::scalar_exponential(-I * a, n),
    )
}
