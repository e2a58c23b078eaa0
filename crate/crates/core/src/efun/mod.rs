//! Operator-valued functions `z -> E(z)` and the maps built on them.
//!
//! [`EFun`] is the serializable representation used to build de Branges
//! pairs. Anything that can be evaluated together with its analytic
//! derivative implements [`OperatorFunction`]; the kernel machinery only
//! talks to that trait.

mod inner;

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::csys::{CanonicalSystem, Component};
use crate::error::{Error, Result};
use crate::io::{serde_c64, serde_cmat, serde_cmat_vec};
use crate::linops::{self, CMat, ONE};

pub use inner::{
    characteristic_function, inner_check, potapov, potapov_derivative, CharacteristicValue,
    InnerReport, PointFailure,
};

/// A matrix-valued function with an analytic derivative.
pub trait OperatorFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, z: Complex64) -> Result<CMat>;
    fn derivative(&self, z: Complex64) -> Result<CMat>;
    /// Entire functions may be used as components of a de Branges pair.
    fn is_entire(&self) -> bool {
        true
    }
}

impl<T: OperatorFunction + ?Sized> OperatorFunction for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, z: Complex64) -> Result<CMat> {
        (**self).eval(z)
    }
    fn derivative(&self, z: Complex64) -> Result<CMat> {
        (**self).derivative(z)
    }
    fn is_entire(&self) -> bool {
        (**self).is_entire()
    }
}

impl<T: OperatorFunction + ?Sized> OperatorFunction for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, z: Complex64) -> Result<CMat> {
        (**self).eval(z)
    }
    fn derivative(&self, z: Complex64) -> Result<CMat> {
        (**self).derivative(z)
    }
    fn is_entire(&self) -> bool {
        (**self).is_entire()
    }
}

/// Representable operator-valued functions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EFun {
    /// `z -> exp(rate * z) * coeff`
    Exponential {
        #[serde(with = "serde_c64")]
        rate: Complex64,
        #[serde(with = "serde_cmat")]
        coeff: CMat,
    },
    /// `z -> sum_k exp(rates[k] * z) * coeffs[k]`
    ExponentialSum {
        #[serde(with = "crate::io::serde_c64_vec")]
        rates: Vec<Complex64>,
        #[serde(with = "serde_cmat_vec")]
        coeffs: Vec<CMat>,
    },
    /// `z -> a - z b`
    Pencil {
        #[serde(with = "serde_cmat")]
        a: CMat,
        #[serde(with = "serde_cmat")]
        b: CMat,
    },
    /// `z -> sum_k coeffs[k] z^k`
    Polynomial {
        #[serde(with = "serde_cmat_vec")]
        coeffs: Vec<CMat>,
    },
    /// One block of the canonical-system solution at `endpoint`.
    CanonicalBacked {
        system: Arc<CanonicalSystem>,
        endpoint: f64,
        component: Component,
    },
    /// Potapov inner function pulled back to the upper half-plane.
    PotapovHalfPlane {
        #[serde(with = "serde_cmat")]
        a: CMat,
    },
    /// Characteristic function of a contraction on the upper half-plane.
    CharacteristicHalfPlane {
        #[serde(with = "serde_cmat")]
        a: CMat,
    },
}

impl EFun {
    pub fn exponential(rate: Complex64, coeff: CMat) -> Self {
        EFun::Exponential { rate, coeff }
    }

    /// `z -> exp(rate * z) I_n`
    pub fn scalar_exponential(rate: Complex64, n: usize) -> Self {
        EFun::Exponential {
            rate,
            coeff: linops::identity(n),
        }
    }

    /// `z -> diag(exp(rates[k] * z))`
    pub fn diagonal_exponential(rates: &[Complex64]) -> Self {
        let n = rates.len();
        let coeffs = (0..n)
            .map(|k| {
                let mut m = DMatrix::zeros(n, n);
                m[(k, k)] = ONE;
                m
            })
            .collect();
        EFun::ExponentialSum {
            rates: rates.to_vec(),
            coeffs,
        }
    }

    pub fn pencil(a: CMat, b: CMat) -> Self {
        EFun::Pencil { a, b }
    }

    pub fn polynomial(coeffs: Vec<CMat>) -> Self {
        EFun::Polynomial { coeffs }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            EFun::Exponential { .. } => "exponential",
            EFun::ExponentialSum { .. } => "exponential_sum",
            EFun::Pencil { .. } => "pencil",
            EFun::Polynomial { .. } => "polynomial",
            EFun::CanonicalBacked { .. } => "canonical_backed",
            EFun::PotapovHalfPlane { .. } => "potapov_half_plane",
            EFun::CharacteristicHalfPlane { .. } => "characteristic_half_plane",
        }
    }

    /// Structural checks: square matrices of one common dimension.
    pub fn check(&self) -> Result<()> {
        let mats: Vec<&CMat> = match self {
            EFun::Exponential { coeff, .. } => vec![coeff],
            EFun::ExponentialSum { rates, coeffs } => {
                if coeffs.is_empty() || rates.len() != coeffs.len() {
                    return Err(Error::Precondition(
                        "exponential sum needs one coefficient per rate and at least one term".into(),
                    ));
                }
                coeffs.iter().collect()
            }
            EFun::Pencil { a, b } => vec![a, b],
            EFun::Polynomial { coeffs } => {
                if coeffs.is_empty() {
                    return Err(Error::Precondition("polynomial needs at least one coefficient".into()));
                }
                coeffs.iter().collect()
            }
            EFun::CanonicalBacked {
                system, endpoint, ..
            } => {
                system.spec().check()?;
                if !(0.0..=system.spec().a).contains(endpoint) {
                    return Err(Error::Precondition(format!(
                        "canonical endpoint {endpoint} outside [0, {}]",
                        system.spec().a
                    )));
                }
                return Ok(());
            }
            EFun::PotapovHalfPlane { a } | EFun::CharacteristicHalfPlane { a } => vec![a],
        };
        let n = mats[0].nrows();
        for m in mats {
            if m.nrows() != m.ncols() {
                return Err(Error::NonSquare {
                    rows: m.nrows(),
                    cols: m.ncols(),
                });
            }
            if m.nrows() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} variant mixes dimensions {} and {}",
                    self.variant_name(),
                    n,
                    m.nrows()
                )));
            }
            if !linops::is_finite(m) {
                return Err(Error::Precondition("non-finite matrix entry".into()));
            }
        }
        Ok(())
    }

    fn require_upper(&self, z: Complex64) -> Result<()> {
        if z.im < 0.0 || !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::Domain {
                z,
                reason: format!(
                    "{} is defined on the closed upper half-plane",
                    self.variant_name()
                ),
            });
        }
        Ok(())
    }
}

impl OperatorFunction for EFun {
    fn dim(&self) -> usize {
        match self {
            EFun::Exponential { coeff, .. } => coeff.nrows(),
            EFun::ExponentialSum { coeffs, .. } => coeffs.first().map_or(0, |c| c.nrows()),
            EFun::Pencil { a, .. } => a.nrows(),
            EFun::Polynomial { coeffs } => coeffs.first().map_or(0, |c| c.nrows()),
            EFun::CanonicalBacked { system, .. } => system.spec().n,
            EFun::PotapovHalfPlane { a } | EFun::CharacteristicHalfPlane { a } => a.nrows(),
        }
    }

    fn eval(&self, z: Complex64) -> Result<CMat> {
        match self {
            EFun::Exponential { rate, coeff } => Ok(coeff * (rate * z).exp()),
            EFun::ExponentialSum { rates, coeffs } => Ok(rates
                .iter()
                .zip(coeffs)
                .fold(DMatrix::zeros(self.dim(), self.dim()), |acc, (r, c)| acc + c * (r * z).exp())),
            EFun::Pencil { a, b } => Ok(a - b * z),
            EFun::Polynomial { coeffs } => {
                let n = coeffs[0].nrows();
                let mut acc = DMatrix::zeros(n, n);
                for c in coeffs.iter().rev() {
                    acc = acc * z + c;
                }
                Ok(acc)
            }
            EFun::CanonicalBacked {
                system,
                endpoint,
                component,
            } => Ok(system.value(*endpoint, z)?.component(*component).clone()),
            EFun::PotapovHalfPlane { a } => {
                self.require_upper(z)?;
                potapov(a, cayley_to_disc(z)?)
            }
            EFun::CharacteristicHalfPlane { a } => {
                self.require_upper(z)?;
                Ok(characteristic_function(a, cayley_to_disc(z)?)?.value)
            }
        }
    }

    fn derivative(&self, z: Complex64) -> Result<CMat> {
        match self {
            EFun::Exponential { rate, coeff } => Ok(coeff * (rate * (rate * z).exp())),
            EFun::ExponentialSum { rates, coeffs } => Ok(rates
                .iter()
                .zip(coeffs)
                .fold(DMatrix::zeros(self.dim(), self.dim()), |acc, (r, c)| {
                    acc + c * (r * (r * z).exp())
                })),
            EFun::Pencil { b, .. } => Ok(-b.clone()),
            EFun::Polynomial { coeffs } => {
                let n = coeffs[0].nrows();
                let mut acc = DMatrix::zeros(n, n);
                for (k, c) in coeffs.iter().enumerate().skip(1).rev() {
                    acc = acc * z + c * Complex64::new(k as f64, 0.0);
                }
                Ok(acc)
            }
            EFun::CanonicalBacked {
                system,
                endpoint,
                component,
            } => Ok(system
                .value_with_zderiv(*endpoint, z)?
                .1
                .component(*component)
                .clone()),
            EFun::PotapovHalfPlane { a } => {
                self.require_upper(z)?;
                let w = cayley_to_disc(z)?;
                Ok(potapov_derivative(a, w)? * cayley_derivative(z))
            }
            EFun::CharacteristicHalfPlane { a } => {
                self.require_upper(z)?;
                let w = cayley_to_disc(z)?;
                Ok(inner::characteristic_derivative(a, w)? * cayley_derivative(z))
            }
        }
    }

    fn is_entire(&self) -> bool {
        !matches!(
            self,
            EFun::PotapovHalfPlane { .. } | EFun::CharacteristicHalfPlane { .. }
        )
    }
}

/// Wraps a pair of closures as an [`OperatorFunction`].
pub struct FnOperator<F, G> {
    dim: usize,
    eval: F,
    deriv: G,
    entire: bool,
}

impl<F, G> FnOperator<F, G>
where
    F: Fn(Complex64) -> Result<CMat> + Send + Sync,
    G: Fn(Complex64) -> Result<CMat> + Send + Sync,
{
    pub fn new(dim: usize, eval: F, deriv: G) -> Self {
        FnOperator {
            dim,
            eval,
            deriv,
            entire: false,
        }
    }

    pub fn entire(mut self) -> Self {
        self.entire = true;
        self
    }
}

impl<F, G> OperatorFunction for FnOperator<F, G>
where
    F: Fn(Complex64) -> Result<CMat> + Send + Sync,
    G: Fn(Complex64) -> Result<CMat> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, z: Complex64) -> Result<CMat> {
        (self.eval)(z)
    }
    fn derivative(&self, z: Complex64) -> Result<CMat> {
        (self.deriv)(z)
    }
    fn is_entire(&self) -> bool {
        self.entire
    }
}

/// Solves `E+(z) X = E-(z)`, i.e. evaluates `F = E+^{-1} E-`.
pub fn ratio_evaluate(
    e_plus: &dyn OperatorFunction,
    e_minus: &dyn OperatorFunction,
    z: Complex64,
    singular_accept: f64,
) -> Result<CMat> {
    if e_plus.dim() != e_minus.dim() {
        return Err(Error::DimensionMismatch(format!(
            "E+ has dimension {}, E- has {}",
            e_plus.dim(),
            e_minus.dim()
        )));
    }
    linops::solve(&e_plus.eval(z)?, &e_minus.eval(z)?, z, singular_accept)
}

/// `F = E+^{-1} E-` as an operator function, meromorphic on the plane.
pub struct Ratio<P, M> {
    pub plus: P,
    pub minus: M,
    pub singular_accept: f64,
}

impl<P: OperatorFunction, M: OperatorFunction> OperatorFunction for Ratio<P, M> {
    fn dim(&self) -> usize {
        self.plus.dim()
    }

    fn eval(&self, z: Complex64) -> Result<CMat> {
        ratio_evaluate(&self.plus, &self.minus, z, self.singular_accept)
    }

    fn derivative(&self, z: Complex64) -> Result<CMat> {
        // F' = E+^{-1} (E-' - E+' F)
        let ep = self.plus.eval(z)?;
        let f = linops::solve(&ep, &self.minus.eval(z)?, z, self.singular_accept)?;
        let rhs = self.minus.derivative(z)? - self.plus.derivative(z)? * &f;
        linops::solve(&ep, &rhs, z, self.singular_accept)
    }

    fn is_entire(&self) -> bool {
        false
    }
}

/// Continuation of an inner-from-both-sides function to the lower
/// half-plane: `F(z) = (F(conj z)^*)^{-1}` for `Im z < 0`.
pub fn extend_inner(f: &dyn OperatorFunction, z: Complex64, singular_accept: f64) -> Result<CMat> {
    if z.im >= 0.0 {
        return Err(Error::Domain {
            z,
            reason: "reflection extension needs Im z < 0".into(),
        });
    }
    let reflected = f.eval(z.conj())?.adjoint();
    linops::inverse(&reflected, z, singular_accept)
}

/// An inner function on the closed upper half-plane together with its
/// reflection into the lower half-plane.
pub struct ExtendedInner<F> {
    pub inner: F,
    pub singular_accept: f64,
}

impl<F: OperatorFunction> ExtendedInner<F> {
    pub fn new(inner: F, singular_accept: f64) -> Self {
        ExtendedInner {
            inner,
            singular_accept,
        }
    }
}

impl<F: OperatorFunction> OperatorFunction for ExtendedInner<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, z: Complex64) -> Result<CMat> {
        if z.im >= 0.0 {
            self.inner.eval(z)
        } else {
            extend_inner(&self.inner, z, self.singular_accept)
        }
    }

    fn derivative(&self, z: Complex64) -> Result<CMat> {
        if z.im >= 0.0 {
            return self.inner.derivative(z);
        }
        // G(z) = (F(z̄)^*)^{-1},  G' = -G F'(z̄)^* G
        let g = extend_inner(&self.inner, z, self.singular_accept)?;
        let dfa = self.inner.derivative(z.conj())?.adjoint();
        Ok(-(&g * dfa * &g))
    }

    fn is_entire(&self) -> bool {
        false
    }
}

/// `C(z) = (z - i)/(z + i)`, mapping the upper half-plane onto the disc.
pub fn cayley_to_disc(z: Complex64) -> Result<Complex64> {
    let den = z + linops::I;
    if den.norm() == 0.0 {
        return Err(Error::Domain {
            z,
            reason: "Cayley map has a pole at -i".into(),
        });
    }
    Ok((z - linops::I) / den)
}

/// Inverse Cayley map `w -> i (1 + w)/(1 - w)`.
pub fn cayley_to_halfplane(w: Complex64) -> Result<Complex64> {
    let den = ONE - w;
    if den.norm() == 0.0 {
        return Err(Error::Domain {
            z: w,
            reason: "inverse Cayley map has a pole at 1".into(),
        });
    }
    Ok(linops::I * (ONE + w) / den)
}

fn cayley_derivative(z: Complex64) -> Complex64 {
    let s = z + linops::I;
    Complex64::new(0.0, 2.0) / (s * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{identity, I, ZERO};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn exponential_value_and_derivative() {
        let a = 1.7;
        let f = EFun::scalar_exponential(c(0.0, -a), 2);
        let z = c(0.4, -0.3);
        let v = f.eval(z).unwrap();
        assert!((v - identity(2) * (c(0.0, -a) * z).exp()).norm() < 1e-15);
        let d = f.derivative(ZERO).unwrap();
        assert!((d - identity(2) * c(0.0, -a)).norm() < 1e-15);
    }

    #[test]
    fn pencil_and_polynomial() {
        let a = linops::from_rows(2, 2, &[c(1., 0.), c(2., 1.), c(0., 0.), c(-1., 0.)]).unwrap();
        let b = linops::real_diag(&[0.5, 3.0]);
        let p = EFun::pencil(a.clone(), b.clone());
        assert_eq!(p.eval(ZERO).unwrap(), a);
        assert_eq!(p.derivative(c(3.0, 1.0)).unwrap(), -b.clone());

        let k = linops::from_rows(2, 2, &[c(1., 1.), c(0., 2.), c(3., 0.), c(0., 0.)]).unwrap();
        let constant = EFun::polynomial(vec![k.clone()]);
        assert_eq!(constant.eval(c(5.0, -2.0)).unwrap(), k);

        // 1 + 2z + 3z^2 at z = i: 1 + 2i - 3
        let q = EFun::polynomial(vec![identity(1), identity(1) * c(2.0, 0.0), identity(1) * c(3.0, 0.0)]);
        assert!((q.eval(I).unwrap()[(0, 0)] - c(-2.0, 2.0)).norm() < 1e-15);
        // 2 + 6z at z = i
        assert!((q.derivative(I).unwrap()[(0, 0)] - c(2.0, 6.0)).norm() < 1e-15);
    }

    #[test]
    fn ratio_examples() {
        let a = 0.8;
        let plus = EFun::scalar_exponential(c(0.0, -a), 1);
        let minus = EFun::scalar_exponential(c(0.0, a), 1);
        let z = c(0.3, 0.9);
        let x = ratio_evaluate(&plus, &minus, z, 1e-14).unwrap();
        assert!((x[(0, 0)] - (c(0.0, 2.0 * a) * z).exp()).norm() < 1e-14);

        let same = ratio_evaluate(&plus, &plus, z, 1e-14).unwrap();
        assert!((same - identity(1)).norm() < 1e-14);

        let ident = EFun::pencil(identity(2), CMat::zeros(2, 2));
        let em = EFun::pencil(linops::real_diag(&[2.0, -1.0]), identity(2));
        let x = ratio_evaluate(&ident, &em, z, 1e-14).unwrap();
        assert!((x - em.eval(z).unwrap()).norm() < 1e-15);

        let singular = EFun::pencil(CMat::zeros(1, 1), identity(1));
        assert!(matches!(
            ratio_evaluate(&singular, &plus, ZERO, 1e-12),
            Err(Error::Singularity { .. })
        ));
    }

    #[test]
    fn extension_examples() {
        let a = 0.6;
        let f = Ratio {
            plus: EFun::scalar_exponential(c(0.0, -a), 1),
            minus: EFun::scalar_exponential(c(0.0, a), 1),
            singular_accept: 1e-14,
        };
        let v = extend_inner(&f, c(0.0, -1.0), 1e-14).unwrap();
        assert!((v[(0, 0)] - c((2.0 * a).exp(), 0.0)).norm() < 1e-13);

        let u = linops::from_rows(2, 2, &[c(0., 1.), ZERO, ZERO, c(-1., 0.)]).unwrap();
        let uc = u.clone();
        let constant = FnOperator::new(2, move |_| Ok(uc.clone()), |_| Ok(CMat::zeros(2, 2)));
        let v = extend_inner(&constant, c(0.3, -2.0), 1e-14).unwrap();
        assert!((v - u).norm() < 1e-15);

        // (z - i)/(z + i) at -2i: reflect to 2i -> 1/3, conjugate, invert -> 3
        let blaschke = FnOperator::new(
            1,
            |z: Complex64| Ok(identity(1) * ((z - I) / (z + I))),
            |z: Complex64| Ok(identity(1) * (2.0 * I / ((z + I) * (z + I)))),
        );
        let v = extend_inner(&blaschke, c(0.0, -2.0), 1e-14).unwrap();
        assert!((v[(0, 0)] - c(3.0, 0.0)).norm() < 1e-14);

        assert!(matches!(
            extend_inner(&blaschke, I, 1e-14),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn extended_inner_derivative_matches_reflection() {
        let blaschke = FnOperator::new(
            1,
            |z: Complex64| Ok(identity(1) * ((z - I) / (z + I))),
            |z: Complex64| Ok(identity(1) * (2.0 * I / ((z + I) * (z + I)))),
        );
        let ext = ExtendedInner::new(&blaschke, 1e-14);
        // The Blaschke factor is its own continuation, so both agree below the axis.
        for z in [c(0.5, -0.5), c(-1.0, -3.0)] {
            let direct = (z - I) / (z + I);
            assert!((ext.eval(z).unwrap()[(0, 0)] - direct).norm() < 1e-13);
            let dd = 2.0 * I / ((z + I) * (z + I));
            assert!((ext.derivative(z).unwrap()[(0, 0)] - dd).norm() < 1e-12);
        }
    }

    #[test]
    fn cayley_examples() {
        assert!(cayley_to_disc(I).unwrap().norm() < 1e-16);
        assert!((cayley_to_disc(ZERO).unwrap() - c(-1.0, 0.0)).norm() < 1e-16);
        assert!((cayley_to_halfplane(ZERO).unwrap() - I).norm() < 1e-16);
        assert!(cayley_to_disc(-I).is_err());
        assert!(cayley_to_halfplane(c(1.0, 0.0)).is_err());
    }

    #[test]
    fn half_plane_variants_reject_lower_points() {
        let f = EFun::PotapovHalfPlane {
            a: linops::real_diag(&[0.5]),
        };
        assert!(!f.is_entire());
        assert!(matches!(f.eval(c(0.0, -1.0)), Err(Error::Domain { .. })));
        assert!(f.eval(c(0.2, 1.0)).is_ok());
    }

    #[test]
    fn check_rejects_mixed_dimensions() {
        let p = EFun::pencil(identity(2), identity(3));
        assert!(matches!(p.check(), Err(Error::DimensionMismatch(_))));
        assert!(EFun::polynomial(vec![]).check().is_err());
    }

    #[test]
    fn json_round_trip() {
        let f = EFun::scalar_exponential(c(0.0, -2.0), 2);
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.starts_with(r#"{"kind":"exponential","rate":[0.0,-2.0]"#));
        let back: EFun = serde_json::from_str(&s).unwrap();
        assert_eq!(back.eval(c(0.1, 0.2)).unwrap(), f.eval(c(0.1, 0.2)).unwrap());
    }
}
