//! Elements of the de Branges space: finite kernel combinations, Gram
//! matrices, norms, projections and the line-integral norm.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DeBrangesOperator, ReproducingKernel, DIAGONAL_SWITCH};
use crate::efun::OperatorFunction as _;
use crate::error::{Error, Result};
use crate::io::{serde_c64_vec, serde_cvec_vec};
use crate::linops::{self, CMat, CVec};

/// Scalar-form Gram matrix `G[l, m] = <K_{xi_m}(xi_l) u_m, u_l>`.
pub fn gram(k: &dyn ReproducingKernel, points: &[Complex64], vectors: &[CVec]) -> Result<CMat> {
    if points.len() != vectors.len() || points.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "gram needs matching nonempty point/vector lists, got {} and {}",
            points.len(),
            vectors.len()
        )));
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != k.dim()) {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} for kernel of dimension {}",
            v.len(),
            k.dim()
        )));
    }
    let m = points.len();
    let mut g = DMatrix::zeros(m, m);
    for col in 0..m {
        for row in 0..m {
            let kv = k.kernel(points[col], points[row])? * &vectors[col];
            g[(row, col)] = linops::cdot(&vectors[row], &kv);
        }
    }
    Ok(g)
}

/// Random Gram draws in a rectangle of the complex plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivitySampler {
    pub draws: usize,
    /// Upper bound on (point, vector) pairs per draw.
    pub max_pairs: usize,
    /// Use exactly `max_pairs` pairs in every draw.
    #[serde(default)]
    pub fixed_size: bool,
    pub re: [f64; 2],
    pub im: [f64; 2],
    pub seed: u64,
}

impl PositivitySampler {
    pub fn new(draws: usize, max_pairs: usize, half_width: f64, seed: u64) -> Self {
        PositivitySampler {
            draws,
            max_pairs,
            fixed_size: false,
            re: [-half_width, half_width],
            im: [-half_width, half_width],
            seed,
        }
    }

    pub fn fixed(mut self) -> Self {
        self.fixed_size = true;
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PositivityReport {
    pub draws: usize,
    /// smallest eigenvalue seen, over all draws
    pub worst_min_eigenvalue: f64,
    /// `min_eig / (1 + ||G||)` of the worst draw
    pub worst_relative: f64,
    pub worst_draw: usize,
    pub worst_size: usize,
    pub failed_draws: usize,
    pub tol: f64,
    pub passed: bool,
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| Complex64::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)))
}

/// Checks `lambda_min(G) >= -tol (1 + ||G||)` on seeded random Gram draws.
pub fn verify_positivity(k: &dyn ReproducingKernel, sampler: &PositivitySampler, tol: f64) -> Result<PositivityReport> {
    if sampler.draws == 0 || sampler.max_pairs == 0 {
        return Err(Error::Precondition("positivity sampler needs draws >= 1 and max_pairs >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let mut worst = (f64::INFINITY, f64::INFINITY, 0, 0);
    let mut failed = 0;
    for draw in 0..sampler.draws {
        let m = if sampler.fixed_size {
            sampler.max_pairs
        } else {
            rng.gen_range(1..=sampler.max_pairs)
        };
        let points: Vec<Complex64> = (0..m)
            .map(|_| {
                Complex64::new(
                    rng.gen_range(sampler.re[0]..=sampler.re[1]),
                    rng.gen_range(sampler.im[0]..=sampler.im[1]),
                )
            })
            .collect();
        let vectors: Vec<CVec> = (0..m).map(|_| random_vector(&mut rng, k.dim())).collect();
        let g = gram(k, &points, &vectors)?;
        let ev = linops::hermitian_eigenvalues(&g)?;
        let norm = ev.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let rel = ev[0] / (1.0 + norm);
        if rel < -tol {
            failed += 1;
        }
        if rel < worst.1 {
            worst = (ev[0], rel, draw, m);
        }
    }
    Ok(PositivityReport {
        draws: sampler.draws,
        worst_min_eigenvalue: worst.0,
        worst_relative: worst.1,
        worst_draw: worst.2,
        worst_size: worst.3,
        failed_draws: failed,
        tol,
        passed: failed == 0,
    })
}

/// Kernel of the subspace `{f : f(beta) = 0}`:
/// `K_xi(z) - K_beta(z) K_beta(beta)^+ K_xi(beta)`.
pub fn subspace_kernel(
    k: &dyn ReproducingKernel,
    beta: Complex64,
    xi: Complex64,
    z: Complex64,
    rank_rel_tol: f64,
) -> Result<CMat> {
    let kbb = linops::pinv(&k.kernel(beta, beta)?, rank_rel_tol);
    Ok(k.kernel(xi, z)? - k.kernel(beta, z)? * kbb * k.kernel(xi, beta)?)
}

/// A vector-valued function `C -> C^n` with an analytic derivative.
pub trait VectorFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, z: Complex64) -> Result<CVec>;
    fn derivative(&self, z: Complex64) -> Result<CVec>;
    /// Whether `||E+(x)^{-1} f(x)||^2 = O(1/x^2)` on the real line may be
    /// assumed (true for finite kernel combinations).
    fn kernel_decay(&self) -> bool {
        false
    }
}

/// Closure-backed [`VectorFunction`].
pub struct FnVector<F, G> {
    pub dim: usize,
    pub eval: F,
    pub deriv: G,
}

impl<F, G> VectorFunction for FnVector<F, G>
where
    F: Fn(Complex64) -> Result<CVec> + Send + Sync,
    G: Fn(Complex64) -> Result<CVec> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, z: Complex64) -> Result<CVec> {
        (self.eval)(z)
    }
    fn derivative(&self, z: Complex64) -> Result<CVec> {
        (self.deriv)(z)
    }
}

/// `f = sum_j K_{w_j} c_j`. An empty combination is the zero function.
#[derive(Clone)]
pub struct KernelCombo {
    base: Arc<DeBrangesOperator>,
    points: Vec<Complex64>,
    coeffs: Vec<CVec>,
}

/// Serialized form of a [`KernelCombo`]; the base operator is referenced
/// by label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelComboData {
    pub base: String,
    #[serde(with = "serde_c64_vec")]
    pub points: Vec<Complex64>,
    #[serde(with = "serde_cvec_vec")]
    pub coeffs: Vec<CVec>,
}

impl KernelCombo {
    pub fn new(base: Arc<DeBrangesOperator>, points: Vec<Complex64>, coeffs: Vec<CVec>) -> Result<Self> {
        if points.len() != coeffs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} points but {} coefficients",
                points.len(),
                coeffs.len()
            )));
        }
        if let Some(c) = coeffs.iter().find(|c| c.len() != base.dim()) {
            return Err(Error::DimensionMismatch(format!(
                "coefficient of length {} for dimension {}",
                c.len(),
                base.dim()
            )));
        }
        Ok(KernelCombo { base, points, coeffs })
    }

    pub fn zero(base: Arc<DeBrangesOperator>) -> Self {
        KernelCombo {
            base,
            points: Vec::new(),
            coeffs: Vec::new(),
        }
    }

    pub fn single(base: Arc<DeBrangesOperator>, w: Complex64, c: CVec) -> Result<Self> {
        Self::new(base, vec![w], vec![c])
    }

    pub fn base(&self) -> &Arc<DeBrangesOperator> {
        &self.base
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn coeffs(&self) -> &[CVec] {
        &self.coeffs
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn scaled(&self, lambda: Complex64) -> Self {
        KernelCombo {
            base: Arc::clone(&self.base),
            points: self.points.clone(),
            coeffs: self.coeffs.iter().map(|c| c * lambda).collect(),
        }
    }

    /// Concatenation, i.e. the sum of the two functions.
    pub fn plus(&self, other: &KernelCombo) -> Result<Self> {
        self.same_base(other)?;
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let mut coeffs = self.coeffs.clone();
        coeffs.extend(other.coeffs.iter().cloned());
        Ok(KernelCombo {
            base: Arc::clone(&self.base),
            points,
            coeffs,
        })
    }

    pub fn minus(&self, other: &KernelCombo) -> Result<Self> {
        self.plus(&other.scaled(Complex64::new(-1.0, 0.0)))
    }

    fn same_base(&self, other: &KernelCombo) -> Result<()> {
        if Arc::ptr_eq(&self.base, &other.base) {
            Ok(())
        } else {
            Err(Error::Precondition("kernel combinations over different operators".into()))
        }
    }

    pub fn to_data(&self) -> KernelComboData {
        KernelComboData {
            base: self.base.label.clone(),
            points: self.points.clone(),
            coeffs: self.coeffs.clone(),
        }
    }

    pub fn from_data(base: Arc<DeBrangesOperator>, data: KernelComboData) -> Result<Self> {
        if data.base != base.label {
            return Err(Error::Precondition(format!(
                "combination refers to `{}`, operator is `{}`",
                data.base, base.label
            )));
        }
        Self::new(base, data.points, data.coeffs)
    }
}

impl fmt::Debug for KernelCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelCombo")
            .field("base", &self.base.label)
            .field("points", &self.points)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl VectorFunction for KernelCombo {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&self, z: Complex64) -> Result<CVec> {
        let mut acc = CVec::zeros(self.dim());
        for (w, c) in self.points.iter().zip(&self.coeffs) {
            acc += self.base.kernel(*w, z)? * c;
        }
        Ok(acc)
    }

    fn derivative(&self, z: Complex64) -> Result<CVec> {
        let mut acc = CVec::zeros(self.dim());
        for (w, c) in self.points.iter().zip(&self.coeffs) {
            acc += self.base.kernel_dz(*w, z)? * c;
        }
        Ok(acc)
    }

    fn kernel_decay(&self) -> bool {
        true
    }
}

/// `||f||^2 = sum_{l,m} <K_{w_m}(w_l) c_m, c_l>`, clamped at zero.
pub fn gram_norm_sq(f: &KernelCombo) -> Result<f64> {
    Ok(inner_product(f, f)?.re.max(0.0))
}

pub fn gram_norm(f: &KernelCombo) -> Result<f64> {
    Ok(gram_norm_sq(f)?.sqrt())
}

/// `<f, g> = sum_l <f(v_l), d_l>` for `g = sum_l K_{v_l} d_l`.
pub fn inner_product(f: &KernelCombo, g: &KernelCombo) -> Result<Complex64> {
    f.same_base(g)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for (v, d) in g.points.iter().zip(&g.coeffs) {
        acc += linops::cdot(d, &f.eval(*v)?);
    }
    Ok(acc)
}

/// Orthogonal projection onto the closed span of `{K_beta u}`:
/// `K_beta K_beta(beta)^+ f(beta)`.
pub fn project_orthocomplement(f: &KernelCombo, beta: Complex64, rank_rel_tol: f64) -> Result<KernelCombo> {
    let kbb = f.base.kernel(beta, beta)?;
    let c = linops::pinv(&kbb, rank_rel_tol) * f.eval(beta)?;
    KernelCombo::single(Arc::clone(&f.base), beta, c)
}

/// `(f(xi) - f(z0)) / (xi - z0)`, or `f'(z0)` when the points coincide
/// to within the diagonal switch.
pub fn backward_shift_eval(f: &dyn VectorFunction, z0: Complex64, xi: Complex64) -> Result<CVec> {
    let d = xi - z0;
    if d.norm() <= DIAGONAL_SWITCH {
        return f.derivative(z0);
    }
    Ok((f.eval(xi)? - f.eval(z0)?) / d)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureReport {
    /// Simpson value of `int_{-T}^{T} ||E+(x)^{-1} f(x)||^2 dx`
    pub value: f64,
    /// Bound on the omitted tails, when the decay model applies.
    pub tail_bound: Option<f64>,
    pub tail_model: String,
    pub half_width: f64,
    pub steps: usize,
    /// Grid points where `E+(x)` was numerically singular.
    pub skipped: Vec<f64>,
}

/// The norm of `f` as a weighted line integral. The tail bound assumes
/// `g(x) = ||E+(x)^{-1} f(x)||^2 <= C / x^2` beyond `T`, with `C` taken
/// as the largest sampled `g(x) x^2` on `0.8 T <= |x| <= T`.
pub fn bnorm_line_quadrature(
    db: &DeBrangesOperator,
    f: &dyn VectorFunction,
    half_width: f64,
    steps: usize,
    singular_accept: f64,
) -> Result<QuadratureReport> {
    db.require_validated("bnorm_line_quadrature")?;
    if !(half_width > 0.0) || steps == 0 {
        return Err(Error::Precondition("quadrature needs T > 0 and steps >= 1".into()));
    }
    if f.dim() != db.dim() {
        return Err(Error::DimensionMismatch(format!(
            "function of dimension {} for operator of dimension {}",
            f.dim(),
            db.dim()
        )));
    }
    let steps = steps + steps % 2;
    let h = 2.0 * half_width / steps as f64;
    let mut value = 0.0;
    let mut skipped = Vec::new();
    let (mut c_pos, mut c_neg): (f64, f64) = (0.0, 0.0);
    for k in 0..=steps {
        let x = -half_width + k as f64 * h;
        let z = Complex64::new(x, 0.0);
        let fx = f.eval(z)?;
        let g = match linops::solve(&db.plus().eval(z)?, &CMat::from_column_slice(fx.len(), 1, fx.as_slice()), z, singular_accept) {
            Ok(y) => y.norm_squared(),
            Err(Error::Singularity { .. }) => {
                skipped.push(x);
                continue;
            }
            Err(e) => return Err(e),
        };
        let w = if k == 0 || k == steps {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        value += w * g;
        if x.abs() >= 0.8 * half_width {
            if x > 0.0 {
                c_pos = c_pos.max(g * x * x);
            } else {
                c_neg = c_neg.max(g * x * x);
            }
        }
    }
    value *= h / 3.0;
    let (tail_bound, tail_model) = if f.kernel_decay() {
        (Some((c_pos + c_neg) / half_width), "inverse_square".to_string())
    } else {
        (None, "unknown".to_string())
    };
    Ok(QuadratureReport {
        value,
        tail_bound,
        tail_model,
        half_width,
        steps,
        skipped,
    })
}
