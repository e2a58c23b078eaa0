//! Self-adjoint extensions `T_V` of multiplication by `z`.
//!
//! A real `mu` is an eigenvalue of `T_V` exactly when `E+(mu) - E-(mu) V`
//! is singular; the eigenfunctions are `K_mu (E+(mu)*)^{-1} u` for `u` in
//! that null space. Distinct eigenvalues give orthogonal eigenfunctions,
//! which is what the Kramer sampling expansion rests on.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::debranges::{linspace, DeBrangesOperator, KernelCombo, VectorFunction};
use crate::efun::OperatorFunction as _;
use crate::error::{Error, Result};
use crate::io::{self, serde_cmat, Csv};
use crate::linops::{self, CMat, CVec, Tolerances};

/// `V_mu = E-(mu)^{-1} E+(mu)`, unitary for a de Branges operator.
pub fn v_mu(db: &DeBrangesOperator, mu: f64, singular_accept: f64) -> Result<CMat> {
    let z = Complex64::new(mu, 0.0);
    linops::solve(&db.minus().eval(z)?, &db.plus().eval(z)?, z, singular_accept)
}

/// `E+(mu) - E-(mu) V`
pub fn boundary_matrix(db: &DeBrangesOperator, v: &CMat, mu: f64) -> Result<CMat> {
    let z = Complex64::new(mu, 0.0);
    Ok(db.plus().eval(z)? - db.minus().eval(z)? * v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    pub grid_count: usize,
    pub refine_iters: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            grid_count: 2000,
            refine_iters: 80,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtensionSpectrum {
    #[serde(with = "serde_cmat")]
    pub v: CMat,
    pub interval: [f64; 2],
    /// strictly increasing
    pub nodes: Vec<f64>,
    /// `sigma_min(E+(mu) - E-(mu) V)` at each node
    pub residuals: Vec<f64>,
    /// orthonormal near-null vectors per node
    #[serde(with = "nullspace_serde")]
    pub nullspaces: Vec<Vec<CVec>>,
    /// `(mu, sigma_min)` on the scan grid
    pub sigma_profile: Vec<[f64; 2]>,
}

mod nullspace_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec<CVec>], s: S) -> std::result::Result<S::Ok, S::Error> {
        v.iter()
            .map(|b| b.iter().map(io::cvec_to_pairs).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<CVec>>, D::Error> {
        Ok(Vec::<Vec<Vec<[f64; 2]>>>::deserialize(d)?
            .iter()
            .map(|b| b.iter().map(|p| io::pairs_to_cvec(p)).collect())
            .collect())
    }
}

impl ExtensionSpectrum {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        self.nullspaces.iter().map(Vec::len).collect()
    }

    /// `node,multiplicity,sigma_residual`
    pub fn nodes_csv(&self) -> String {
        let mut csv = Csv::new(&["node", "multiplicity", "sigma_residual"]);
        for ((mu, basis), s) in self.nodes.iter().zip(&self.nullspaces).zip(&self.residuals) {
            csv.row(&[*mu, basis.len() as f64, *s]);
        }
        csv.finish()
    }

    /// `mu,sigma_min`
    pub fn profile_csv(&self) -> String {
        let mut csv = Csv::new(&["mu", "sigma_min"]);
        for p in &self.sigma_profile {
            csv.row(p);
        }
        csv.finish()
    }

    /// The sub-spectrum made of the `count` nodes nearest `center`.
    pub fn nearest(&self, center: f64, count: usize) -> ExtensionSpectrum {
        let mut idx: Vec<usize> = (0..self.nodes.len()).collect();
        idx.sort_by(|&a, &b| {
            (self.nodes[a] - center)
                .abs()
                .total_cmp(&(self.nodes[b] - center).abs())
                .then(a.cmp(&b))
        });
        idx.truncate(count);
        idx.sort_unstable();
        ExtensionSpectrum {
            v: self.v.clone(),
            interval: self.interval,
            nodes: idx.iter().map(|&k| self.nodes[k]).collect(),
            residuals: idx.iter().map(|&k| self.residuals[k]).collect(),
            nullspaces: idx.iter().map(|&k| self.nullspaces[k].clone()).collect(),
            sigma_profile: Vec::new(),
        }
    }
}

fn golden_min(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
        if hi - lo <= f64::EPSILON * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

/// Locates the eigenvalues of `T_V` in `interval` by scanning
/// `sigma_min(E+(mu) - E-(mu) V)`, refining each local minimum by golden
/// section, and accepting nodes with
/// `sigma <= singular_accept (1 + ||E+(mu)||)`. No nodes is a valid
/// outcome; inspect `sigma_profile` in that case.
pub fn spectrum(
    db: &DeBrangesOperator,
    v: &CMat,
    interval: [f64; 2],
    scan: &ScanConfig,
    tol: &Tolerances,
) -> Result<ExtensionSpectrum> {
    db.require_validated("spectrum")?;
    if v.nrows() != db.dim() || v.ncols() != db.dim() {
        return Err(Error::DimensionMismatch(format!(
            "V is {}x{}, operator dimension is {}",
            v.nrows(),
            v.ncols(),
            db.dim()
        )));
    }
    let defect = linops::unitary_defect(v)?;
    if defect > tol.unitary_tol {
        return Err(Error::Precondition(format!("V is not unitary (defect {defect:.3e})")));
    }
    let [lo, hi] = interval;
    if !(lo < hi) || scan.grid_count < 3 {
        return Err(Error::Precondition("spectrum needs lo < hi and grid_count >= 3".into()));
    }
    let sigma = |mu: f64| -> f64 {
        boundary_matrix(db, v, mu).map_or(f64::INFINITY, |m| linops::sigma_min(&m))
    };
    let grid = linspace(lo, hi, scan.grid_count);
    let profile: Vec<f64> = grid.par_iter().map(|&mu| sigma(mu)).collect();
    let step = grid[1] - grid[0];

    let last = grid.len() - 1;
    let mut found: Vec<(f64, f64)> = Vec::new();
    for k in 0..=last {
        let left = if k == 0 { f64::INFINITY } else { profile[k - 1] };
        let right = if k == last { f64::INFINITY } else { profile[k + 1] };
        if !(profile[k] <= left && profile[k] <= right) {
            continue;
        }
        let a = grid[k.saturating_sub(1)];
        let b = grid[(k + 1).min(last)];
        let mu = golden_min(&sigma, a, b, scan.refine_iters);
        let s = sigma(mu);
        let (mu, s) = if s <= profile[k] { (mu, s) } else { (grid[k], profile[k]) };
        let scale = 1.0 + linops::spectral_norm(&db.plus().eval(Complex64::new(mu, 0.0))?);
        if s <= tol.singular_accept * scale && (lo..=hi).contains(&mu) {
            found.push((mu, s));
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (mu, s) in found {
        match merged.last_mut() {
            Some(prev) if mu - prev.0 <= step => {
                if s < prev.1 {
                    *prev = (mu, s);
                }
            }
            _ => merged.push((mu, s)),
        }
    }

    let mut nullspaces = Vec::with_capacity(merged.len());
    for &(mu, _) in &merged {
        let z = Complex64::new(mu, 0.0);
        let threshold = tol.singular_accept * (1.0 + linops::spectral_norm(&db.plus().eval(z)?));
        let (basis, _) = linops::near_null_space(&boundary_matrix(db, v, mu)?, threshold);
        nullspaces.push(basis);
    }
    Ok(ExtensionSpectrum {
        v: v.clone(),
        interval,
        nodes: merged.iter().map(|p| p.0).collect(),
        residuals: merged.iter().map(|p| p.1).collect(),
        nullspaces,
        sigma_profile: grid.iter().zip(&profile).map(|(&m, &s)| [m, s]).collect(),
    })
}

/// `(E+(mu)*)^{-1} u`
fn lifted(db: &DeBrangesOperator, mu: f64, u: &CVec, singular_accept: f64) -> Result<CVec> {
    let z = Complex64::new(mu, 0.0);
    let ep = db.plus().eval(z)?.adjoint();
    let col = linops::solve(&ep, &CMat::from_column_slice(u.len(), 1, u.as_slice()), z, singular_accept)?;
    Ok(col.column(0).into_owned())
}

/// The eigenfunction `K_mu (E+(mu)*)^{-1} u` (normalization `lambda = 1`).
pub fn eigenfunction(db: &Arc<DeBrangesOperator>, mu: f64, u: &CVec, singular_accept: f64) -> Result<KernelCombo> {
    if u.len() != db.dim() {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} for dimension {}",
            u.len(),
            db.dim()
        )));
    }
    let c = lifted(db, mu, u, singular_accept)?;
    KernelCombo::single(Arc::clone(db), Complex64::new(mu, 0.0), c)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrthogonalityReport {
    pub nodes: usize,
    /// `max |<K(mu_j, mu_i) u_j, u_i>|` over `i != j` and basis vectors
    pub max_offdiagonal: f64,
    pub worst_pair: Option<(usize, usize)>,
    /// largest diagonal entry `<K(mu_i, mu_i) u_i, u_i>`
    pub scale: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Eigenfunctions at distinct nodes must be orthogonal.
pub fn orthogonality_check(
    db: &DeBrangesOperator,
    spectrum: &ExtensionSpectrum,
    tol: f64,
    singular_accept: f64,
) -> Result<OrthogonalityReport> {
    let mut lifts: Vec<Vec<CVec>> = Vec::with_capacity(spectrum.nodes.len());
    for (mu, basis) in spectrum.nodes.iter().zip(&spectrum.nullspaces) {
        lifts.push(
            basis
                .iter()
                .map(|u| lifted(db, *mu, u, singular_accept))
                .collect::<Result<_>>()?,
        );
    }
    let at = |mu: f64| Complex64::new(mu, 0.0);
    let mut scale: f64 = 0.0;
    let mut worst: f64 = 0.0;
    let mut worst_pair = None;
    for (i, &mi) in spectrum.nodes.iter().enumerate() {
        for (j, &mj) in spectrum.nodes.iter().enumerate() {
            let k = db.kernel(at(mj), at(mi))?;
            for ui in &lifts[i] {
                for uj in &lifts[j] {
                    let v = linops::cdot(ui, &(&k * uj)).norm();
                    if i == j {
                        scale = scale.max(v);
                    } else if v > worst {
                        worst = v;
                        worst_pair = Some((i, j));
                    }
                }
            }
        }
    }
    Ok(OrthogonalityReport {
        nodes: spectrum.nodes.len(),
        max_offdiagonal: worst,
        worst_pair,
        scale,
        tol,
        passed: worst <= tol * scale.max(f64::MIN_POSITIVE),
    })
}

/// Per-node coefficient maps of the sampling expansion
/// `f(z) = sum_i K_{mu_i}(z) P_i f(mu_i)` with
/// `P_i = U (U* K_{mu_i}(mu_i) U)^{-1} U*`, where the columns of `U` are the
/// lifted null vectors `(E+(mu_i)*)^{-1} u`. When the null space is all of
/// the fiber, `P_i = K_{mu_i}(mu_i)^{-1}`.
pub struct KramerBasis {
    base: Arc<DeBrangesOperator>,
    nodes: Vec<f64>,
    maps: Vec<CMat>,
}

impl KramerBasis {
    pub fn new(db: &Arc<DeBrangesOperator>, spectrum: &ExtensionSpectrum, tol: &Tolerances) -> Result<Self> {
        let mut maps = Vec::with_capacity(spectrum.nodes.len());
        for (mu, basis) in spectrum.nodes.iter().zip(&spectrum.nullspaces) {
            let z = Complex64::new(*mu, 0.0);
            let cols: Vec<CVec> = basis
                .iter()
                .map(|u| lifted(db, *mu, u, tol.singular_accept))
                .collect::<Result<_>>()?;
            let u = CMat::from_columns(&cols);
            let small = u.adjoint() * db.kernel(z, z)? * &u;
            let s = linops::singular_values(&small);
            let (smax, smin) = (s[0], s[s.len() - 1]);
            if !(smin > tol.rank_rel_tol * smax) || smax == 0.0 {
                return Err(Error::Singularity {
                    z,
                    sigma_min: smin,
                    sigma_max: smax,
                });
            }
            let inv = linops::inverse(&small, z, tol.singular_accept)?;
            maps.push(&u * inv * u.adjoint());
        }
        Ok(KramerBasis {
            base: Arc::clone(db),
            nodes: spectrum.nodes.clone(),
            maps,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// The expansion as a kernel combination.
    pub fn combination(&self, samples: &[CVec]) -> Result<KernelCombo> {
        if samples.len() != self.nodes.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for {} nodes",
                samples.len(),
                self.nodes.len()
            )));
        }
        let coeffs: Vec<CVec> = self.maps.iter().zip(samples).map(|(p, f)| p * f).collect();
        let points = self.nodes.iter().map(|&m| Complex64::new(m, 0.0)).collect();
        KernelCombo::new(Arc::clone(&self.base), points, coeffs)
    }

    pub fn reconstruct(&self, samples: &[CVec], z: Complex64) -> Result<CVec> {
        self.combination(samples)?.eval(z)
    }
}

/// Truncated Kramer expansion of the samples `f(mu_i)` evaluated at `z`.
pub fn kramer_reconstruct(
    db: &Arc<DeBrangesOperator>,
    spectrum: &ExtensionSpectrum,
    samples: &[CVec],
    z: Complex64,
    tol: &Tolerances,
) -> Result<CVec> {
    KramerBasis::new(db, spectrum, tol)?.reconstruct(samples, z)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceLevel {
    pub nodes: usize,
    pub sup_error: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub levels: Vec<ConvergenceLevel>,
    /// errors non-increasing in the truncation level
    pub monotone: bool,
}

impl ConvergenceReport {
    pub fn csv(&self) -> String {
        let mut csv = Csv::new(&["nodes", "sup_error", "relative_error"]);
        for l in &self.levels {
            csv.row(&[l.nodes as f64, l.sup_error, l.relative_error]);
        }
        csv.finish()
    }
}

/// Sup-norm reconstruction error on `eval_grid` when only the `N` nodes
/// closest to the grid center are used, for each `N` in `levels`.
pub fn sampling_convergence(
    db: &Arc<DeBrangesOperator>,
    spectrum: &ExtensionSpectrum,
    f: &dyn VectorFunction,
    eval_grid: &[Complex64],
    levels: &[usize],
    tol: &Tolerances,
) -> Result<ConvergenceReport> {
    if eval_grid.is_empty() {
        return Ok(ConvergenceReport {
            levels: Vec::new(),
            monotone: true,
        });
    }
    let center = eval_grid.iter().map(|z| z.re).sum::<f64>() / eval_grid.len() as f64;
    let exact: Vec<CVec> = eval_grid.iter().map(|&z| f.eval(z)).collect::<Result<_>>()?;
    let fmax = exact.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut out = Vec::with_capacity(levels.len());
    for &n in levels {
        let sub = spectrum.nearest(center, n);
        let basis = KramerBasis::new(db, &sub, tol)?;
        let samples: Vec<CVec> = sub
            .nodes
            .iter()
            .map(|&m| f.eval(Complex64::new(m, 0.0)))
            .collect::<Result<_>>()?;
        let combo = basis.combination(&samples)?;
        let mut err: f64 = 0.0;
        for (z, fz) in eval_grid.iter().zip(&exact) {
            err = err.max((combo.eval(*z)? - fz).norm());
        }
        out.push(ConvergenceLevel {
            nodes: sub.nodes.len(),
            sup_error: err,
            relative_error: if fmax > 0.0 { err / fmax } else { err },
        });
    }
    let monotone = out.windows(2).all(|w| w[1].sup_error <= w[0].sup_error);
    Ok(ConvergenceReport { levels: out, monotone })
}

/// `diag(x_k)` padded helper for tests and configs: the identity scaled by `s`.
pub fn scalar_parameter(n: usize, s: Complex64) -> CMat {
    DMatrix::identity(n, n) * s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::debranges::{exponential_pair, gram_norm, validate, ValidationConfig};
    use crate::efun::EFun;
    use crate::linops::{ONE, I};
    use std::f64::consts::PI;

    fn pw(a: f64) -> Arc<DeBrangesOperator> {
        let (m, p) = exponential_pair(a, 1);
        Arc::new(validate(m, p, &ValidationConfig::default()).unwrap())
    }

    fn one() -> CVec {
        CVec::from_element(1, ONE)
    }

    #[test]
    fn v_mu_examples() {
        let a = 1.7;
        let db = pw(a);
        assert!((v_mu(&db, 0.0, 1e-8).unwrap()[(0, 0)] - ONE).norm() < 1e-15);
        let mu = PI / (4.0 * a);
        let v = v_mu(&db, mu, 1e-8).unwrap()[(0, 0)];
        assert!((v - (-I * 2.0 * a * mu).exp()).norm() < 1e-15);
        assert!((v - Complex64::new(0.0, -1.0)).norm() < 1e-14);
    }

    #[test]
    fn integer_and_half_integer_spectra() {
        let db = pw(PI);
        let t = Tolerances::default();
        let s = spectrum(&db, &scalar_parameter(1, ONE), [-3.5, 3.5], &ScanConfig::default(), &t).unwrap();
        assert_eq!(s.nodes.len(), 7);
        for (k, mu) in s.nodes.iter().enumerate() {
            assert!((mu - (k as f64 - 3.0)).abs() <= 1e-8);
        }
        let s = spectrum(&db, &scalar_parameter(1, -ONE), [-3.0, 3.0], &ScanConfig::default(), &t).unwrap();
        let expect = [-2.5, -1.5, -0.5, 0.5, 1.5, 2.5];
        assert_eq!(s.nodes.len(), 6);
        for (mu, e) in s.nodes.iter().zip(expect) {
            assert!((mu - e).abs() <= 1e-8);
        }
        assert!(s.nodes_csv().lines().count() == 7);
    }

    #[test]
    fn empty_spectrum_is_returned() {
        let db = pw(PI);
        let s = spectrum(&db, &scalar_parameter(1, ONE), [0.2, 0.8], &ScanConfig::default(), &Tolerances::default()).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.sigma_profile.len(), 2000);
    }

    #[test]
    fn block_diagonal_union() {
        let (a, b) = (PI, 2.0 * PI);
        let minus = EFun::diagonal_exponential(&[I * a, I * b]);
        let plus = EFun::diagonal_exponential(&[-I * a, -I * b]);
        let db = validate(minus, plus, &ValidationConfig::default()).unwrap();
        let s = spectrum(&db, &scalar_parameter(2, ONE), [-1.75, 1.75], &ScanConfig::default(), &Tolerances::default()).unwrap();
        let expect = [-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5];
        assert_eq!(s.nodes.len(), expect.len());
        for ((mu, e), basis) in s.nodes.iter().zip(expect).zip(&s.nullspaces) {
            assert!((mu - e).abs() <= 1e-8);
            let mult = if e.fract() == 0.0 { 2 } else { 1 };
            assert_eq!(basis.len(), mult, "node {e}");
        }
    }

    #[test]
    fn eigenfunction_and_orthogonality() {
        let db = pw(PI);
        let f = eigenfunction(&db, 1.0, &one(), 1e-8).unwrap();
        let c = f.coeffs()[0][0];
        assert!((c - (Complex64::new(0.0, PI)).exp().conj().inv()).norm() < 1e-14);
        assert!(gram_norm(&f).unwrap() > 0.0);
        let g = eigenfunction(&db, 1.0, &(one() * Complex64::new(2.0, 1.0)), 1e-8).unwrap();
        assert!((g.coeffs()[0][0] - c * Complex64::new(2.0, 1.0)).norm() < 1e-14);

        let t = Tolerances::default();
        let mut s = spectrum(&db, &scalar_parameter(1, ONE), [-3.5, 3.5], &ScanConfig::default(), &t).unwrap();
        let r = orthogonality_check(&db, &s, 1e-12, 1e-8).unwrap();
        assert!(r.passed, "{r:?}");
        let single = s.nearest(0.0, 1);
        assert!(orthogonality_check(&db, &single, 1e-12, 1e-8).unwrap().passed);
        s.nodes[3] += 0.1;
        assert!(!orthogonality_check(&db, &s, 1e-8, 1e-8).unwrap().passed);
    }

    #[test]
    fn kramer_exact_on_nodes_and_linear() {
        let db = pw(PI);
        let t = Tolerances::default();
        let s = spectrum(&db, &scalar_parameter(1, ONE), [-5.5, 5.5], &ScanConfig::default(), &t).unwrap();
        let f = KernelCombo::new(db.clone(), vec![Complex64::new(2.0, 0.0)], vec![one() * Complex64::new(0.5, -1.0)]).unwrap();
        let samples: Vec<CVec> = s.nodes.iter().map(|&m| f.eval(Complex64::new(m, 0.0)).unwrap()).collect();
        let basis = KramerBasis::new(&db, &s, &t).unwrap();
        for z in [Complex64::new(0.3, 0.0), Complex64::new(-1.7, 0.4)] {
            assert!((basis.reconstruct(&samples, z).unwrap() - f.eval(z).unwrap()).norm() < 1e-12);
        }
        let zeros = vec![CVec::zeros(1); s.nodes.len()];
        assert_eq!(basis.reconstruct(&zeros, ONE).unwrap().norm(), 0.0);
        let other: Vec<CVec> = s.nodes.iter().map(|m| one() * Complex64::new(m.cos(), 0.2)).collect();
        let sum: Vec<CVec> = samples.iter().zip(&other).map(|(a, b)| a + b).collect();
        let z = Complex64::new(0.77, 0.1);
        let lhs = basis.reconstruct(&sum, z).unwrap();
        let rhs = basis.reconstruct(&samples, z).unwrap() + basis.reconstruct(&other, z).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn shannon_series() {
        let db = pw(PI);
        let t = Tolerances::default();
        let s = spectrum(&db, &scalar_parameter(1, ONE), [-4.5, 4.5], &ScanConfig::default(), &t).unwrap();
        let samples: Vec<CVec> = s.nodes.iter().map(|m| one() * Complex64::new(1.0 + m * m, -m)).collect();
        let z = Complex64::new(0.37, 0.2);
        let got = kramer_reconstruct(&db, &s, &samples, z, &t).unwrap()[0];
        let sinc = |w: Complex64| if w.norm() == 0.0 { ONE } else { (w * PI).sin() / (w * PI) };
        let expect: Complex64 = s.nodes.iter().zip(&samples).map(|(m, f)| f[0] * sinc(z - m)).sum();
        assert!((got - expect).norm() < 1e-12);
    }

    /// Orthogonal projection onto `span{K_{mu_i} e}` for the listed
    /// `(node, direction)` pairs, by solving the Gram system directly.
    fn gram_projection(db: &DeBrangesOperator, atoms: &[(f64, CVec)], f: &KernelCombo, z: Complex64) -> CVec {
        let m = atoms.len();
        let at = |x: f64| Complex64::new(x, 0.0);
        let g = CMat::from_fn(m, m, |i, j| {
            let k = db.kernel(at(atoms[j].0), at(atoms[i].0)).unwrap();
            linops::cdot(&(k * &atoms[j].1), &atoms[i].1)
        });
        let b = CVec::from_fn(m, |i, _| linops::cdot(&f.eval(at(atoms[i].0)).unwrap(), &atoms[i].1));
        let c = g.lu().solve(&b).unwrap();
        let mut out = CVec::zeros(db.dim());
        for (j, (mu, e)) in atoms.iter().enumerate() {
            out += db.kernel(at(*mu), z).unwrap() * e * c[j];
        }
        out
    }

    #[test]
    fn kramer_matches_gram_projection_on_five_nodes() {
        let t = Tolerances::default();
        let e = |n: usize, k: usize| CVec::from_fn(n, |i, _| if i == k { ONE } else { Complex64::new(0.0, 0.0) });
        let z = Complex64::new(0.41, 0.3);

        let db = pw(PI);
        let s = spectrum(&db, &scalar_parameter(1, ONE), [-2.5, 2.5], &ScanConfig::default(), &t).unwrap();
        assert_eq!(s.nodes.len(), 5);
        let f = KernelCombo::new(
            db.clone(),
            vec![Complex64::new(0.37, 0.0), Complex64::new(-1.6, 0.4)],
            vec![one() * Complex64::new(1.0, -0.5), one() * Complex64::new(-0.3, 0.8)],
        )
        .unwrap();
        let samples: Vec<CVec> = s.nodes.iter().map(|&m| f.eval(Complex64::new(m, 0.0)).unwrap()).collect();
        let atoms: Vec<(f64, CVec)> = s.nodes.iter().map(|&m| (m, e(1, 0))).collect();
        let got = kramer_reconstruct(&db, &s, &samples, z, &t).unwrap();
        assert!((got - gram_projection(&db, &atoms, &f, z)).norm() < 1e-12);

        // block case: integers carry both directions, other half-integers only the second
        let minus = EFun::diagonal_exponential(&[I * PI, I * (2.0 * PI)]);
        let plus = EFun::diagonal_exponential(&[-I * PI, -I * (2.0 * PI)]);
        let db = Arc::new(validate(minus, plus, &ValidationConfig::default()).unwrap());
        let s = spectrum(&db, &scalar_parameter(2, ONE), [-1.25, 0.25], &ScanConfig::default(), &t).unwrap();
        assert_eq!(s.nodes.len(), 3);
        let f = KernelCombo::new(
            db.clone(),
            vec![Complex64::new(0.2, 0.1), Complex64::new(-0.7, -0.2)],
            vec![
                CVec::from_vec(vec![Complex64::new(1.0, 0.3), Complex64::new(-0.4, 0.9)]),
                CVec::from_vec(vec![Complex64::new(0.5, -1.0), Complex64::new(0.2, 0.1)]),
            ],
        )
        .unwrap();
        let mut atoms = Vec::new();
        for &m in &s.nodes {
            if (m - m.round()).abs() < 1e-6 {
                atoms.push((m, e(2, 0)));
            }
            atoms.push((m, e(2, 1)));
        }
        assert_eq!(atoms.len(), 5);
        let samples: Vec<CVec> = s.nodes.iter().map(|&m| f.eval(Complex64::new(m, 0.0)).unwrap()).collect();
        let got = kramer_reconstruct(&db, &s, &samples, z, &t).unwrap();
        assert!((got - gram_projection(&db, &atoms, &f, z)).norm() < 1e-12);
    }

    #[test]
    fn convergence_report_edge_cases() {
        let db = pw(PI);
        let t = Tolerances::default();
        let s = spectrum(&db, &scalar_parameter(1, ONE), [-6.5, 6.5], &ScanConfig::default(), &t).unwrap();
        let f = KernelCombo::new(db.clone(), vec![Complex64::new(1.0, 0.0), Complex64::new(-2.0, 0.0)], vec![one(), one()]).unwrap();
        let r = sampling_convergence(&db, &s, &f, &[], &[5], &t).unwrap();
        assert!(r.levels.is_empty());
        let grid: Vec<Complex64> = linspace(-3.0, 3.0, 31).into_iter().map(|x| Complex64::new(x, 0.0)).collect();
        let r = sampling_convergence(&db, &s, &f, &grid, &[4, 13], &t).unwrap();
        assert!(r.levels[1].sup_error <= 1e-10);
    }
}
