//! Canonical systems `dF_r/dr = i z F_r j + F_r Q(r)`, `F_0 = [I I]`.
//!
//! The state `F_r(z)` is an `n x 2n` matrix whose left and right blocks are
//! `E-^r(z)` and `E+^r(z)`; `j = diag(I, -I)` and
//! `Q(r) = [[0, q(r)], [q(r)*, 0]]`. Integration is classical fixed-step RK4
//! on a uniform grid so that stored states line up with the Simpson
//! quadrature of the integral identity.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::debranges::{DeBrangesOperator, ValidationConfig};
use crate::efun::EFun;
use crate::error::{Error, Result};
use crate::io::{self, Csv};
use crate::linops::{self, CMat, I};

/// Which block of `F_r = [E-^r  E+^r]` an evaluator exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Minus,
    Plus,
}

/// The potential `q(r)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Zero,
    /// `q(r) = c I`
    Scalar(Complex64),
    Constant(CMat),
    /// Samples on a uniform grid, linearly interpolated.
    Samples { r: Vec<f64>, values: Vec<CMat> },
}

impl Potential {
    pub fn at(&self, r: f64, n: usize) -> CMat {
        match self {
            Potential::Zero => DMatrix::zeros(n, n),
            Potential::Scalar(c) => linops::identity(n) * *c,
            Potential::Constant(m) => m.clone(),
            Potential::Samples { r: grid, values } => {
                let last = grid.len() - 1;
                if r <= grid[0] {
                    return values[0].clone();
                }
                if r >= grid[last] {
                    return values[last].clone();
                }
                let h = (grid[last] - grid[0]) / last as f64;
                let k = (((r - grid[0]) / h).floor() as usize).min(last - 1);
                let t = (r - grid[k]) / (grid[k + 1] - grid[k]);
                &values[k] * Complex64::new(1.0 - t, 0.0) + &values[k + 1] * Complex64::new(t, 0.0)
            }
        }
    }

    fn check(&self, n: usize, a: f64) -> Result<()> {
        match self {
            Potential::Zero => Ok(()),
            Potential::Scalar(c) => {
                if c.re.is_finite() && c.im.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Precondition("non-finite scalar potential".into()))
                }
            }
            Potential::Constant(m) => check_block(m, n),
            Potential::Samples { r, values } => {
                if r.len() < 2 || r.len() != values.len() {
                    return Err(Error::Precondition(
                        "sampled potential needs >= 2 grid points and one matrix per point".into(),
                    ));
                }
                let h = (r[r.len() - 1] - r[0]) / (r.len() - 1) as f64;
                let uniform = r
                    .windows(2)
                    .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1.0));
                if !(h > 0.0) || !uniform {
                    return Err(Error::Precondition("potential grid must be uniform and increasing".into()));
                }
                if r[0] > 1e-12 || r[r.len() - 1] < a - 1e-9 * a.max(1.0) {
                    return Err(Error::Precondition(format!(
                        "potential samples must cover [0, {a}], got [{}, {}]",
                        r[0],
                        r[r.len() - 1]
                    )));
                }
                values.iter().try_for_each(|m| check_block(m, n))
            }
        }
    }

    /// Parses the CSV potential format: one row per grid point,
    /// `r` followed by the `n^2` entries (row-major) as `re,im` pairs.
    /// A header row is skipped when its first field is not numeric.
    pub fn from_csv(text: &str) -> Result<Potential> {
        let mut r = Vec::new();
        let mut values = Vec::new();
        let mut n = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let nums: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            let nums = match nums {
                Ok(v) => v,
                Err(_) if lineno == 0 => continue,
                Err(e) => return Err(Error::Parse(format!("potential csv line {}: {e}", lineno + 1))),
            };
            let pairs = (nums.len().saturating_sub(1)) / 2;
            let dim = (pairs as f64).sqrt().round() as usize;
            if nums.len() < 3 || dim * dim != pairs || 1 + 2 * pairs != nums.len() {
                return Err(Error::Parse(format!(
                    "potential csv line {}: expected r plus n^2 re/im pairs, got {} fields",
                    lineno + 1,
                    nums.len()
                )));
            }
            if *n.get_or_insert(dim) != dim {
                return Err(Error::Parse(format!("potential csv line {}: dimension changed", lineno + 1)));
            }
            let entries: Vec<Complex64> = nums[1..]
                .chunks(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect();
            r.push(nums[0]);
            values.push(linops::from_rows(dim, dim, &entries)?);
        }
        if r.is_empty() {
            return Err(Error::Parse("empty potential csv".into()));
        }
        Ok(Potential::Samples { r, values })
    }
}

fn check_block(m: &CMat, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "potential block is {}x{}, system dimension is {n}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !linops::is_finite(m) {
        return Err(Error::Precondition("non-finite potential entry".into()));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PotentialRepr {
    Named(String),
    Constant {
        #[serde(with = "io::serde_cmat")]
        constant: CMat,
    },
    Samples {
        samples: SamplesRepr,
    },
}

#[derive(Serialize, Deserialize)]
struct SamplesRepr {
    r: Vec<f64>,
    #[serde(with = "io::serde_cmat_vec")]
    values: Vec<CMat>,
}

fn parse_named(name: &str) -> std::result::Result<Potential, String> {
    if name == "zero" {
        return Ok(Potential::Zero);
    }
    if let Some(rest) = name.strip_prefix("constant:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("bad constant potential `{name}`: {e}"));
        return match parts.as_slice() {
            [re] => Ok(Potential::Scalar(Complex64::new(parse(re)?, 0.0))),
            [re, im] => Ok(Potential::Scalar(Complex64::new(parse(re)?, parse(im)?))),
            _ => Err(format!("bad constant potential `{name}`")),
        };
    }
    Err(format!("unknown potential `{name}` (expected `zero` or `constant:<re>[:<im>]`)"))
}

impl Serialize for Potential {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match self {
            Potential::Zero => PotentialRepr::Named("zero".into()),
            Potential::Scalar(c) if c.im == 0.0 => PotentialRepr::Named(format!("constant:{:?}", c.re)),
            Potential::Scalar(c) => PotentialRepr::Named(format!("constant:{:?}:{:?}", c.re, c.im)),
            Potential::Constant(m) => PotentialRepr::Constant { constant: m.clone() },
            Potential::Samples { r, values } => PotentialRepr::Samples {
                samples: SamplesRepr {
                    r: r.clone(),
                    values: values.clone(),
                },
            },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Potential {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match PotentialRepr::deserialize(d)? {
            PotentialRepr::Named(name) => parse_named(&name).map_err(D::Error::custom),
            PotentialRepr::Constant { constant } => Ok(Potential::Constant(constant)),
            PotentialRepr::Samples { samples } => Ok(Potential::Samples {
                r: samples.r,
                values: samples.values,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalSystemSpec {
    /// Dimension of `H`.
    pub n: usize,
    /// Right endpoint of the interval `[0, a]`.
    pub a: f64,
    pub potential: Potential,
    /// Integration step `h`.
    pub step: f64,
}

impl CanonicalSystemSpec {
    /// A spec with the default step `a / 1000`.
    pub fn new(n: usize, a: f64, potential: Potential) -> Self {
        CanonicalSystemSpec {
            n,
            a,
            potential,
            step: a / 1000.0,
        }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Precondition("canonical system dimension must be positive".into()));
        }
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(Error::Precondition(format!("endpoint a = {} must be > 0", self.a)));
        }
        if !(self.step > 0.0) || self.step > self.a {
            return Err(Error::Precondition(format!(
                "step h = {} must lie in (0, a]",
                self.step
            )));
        }
        let ratio = self.a / self.step;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Precondition(format!(
                "step h = {} does not divide a = {}",
                self.step, self.a
            )));
        }
        self.potential.check(self.n, self.a)
    }

    fn check_endpoint(&self, r: f64) -> Result<()> {
        if !(0.0..=self.a * (1.0 + 1e-12)).contains(&r) {
            return Err(Error::Precondition(format!("r = {r} outside [0, {}]", self.a)));
        }
        Ok(())
    }

    /// Number of steps and actual step length used to reach `r`.
    pub fn grid(&self, r: f64) -> (usize, f64) {
        if r <= 0.0 {
            return (0, 0.0);
        }
        let steps = ((r / self.step) - 1e-9).ceil().max(1.0) as usize;
        (steps, r / steps as f64)
    }

    fn generator(&self, s: f64, z: Complex64) -> CMat {
        let n = self.n;
        let q = self.potential.at(s, n);
        let mut g = DMatrix::zeros(2 * n, 2 * n);
        for k in 0..n {
            g[(k, k)] = I * z;
            g[(n + k, n + k)] = -I * z;
        }
        g.view_mut((0, n), (n, n)).copy_from(&q);
        g.view_mut((n, 0), (n, n)).copy_from(&q.adjoint());
        g
    }

    fn signature(&self) -> CMat {
        let n = self.n;
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        for k in 0..n {
            j[(k, k)] = linops::ONE;
            j[(n + k, n + k)] = -linops::ONE;
        }
        j
    }

    fn initial(&self) -> CMat {
        let n = self.n;
        let mut f = DMatrix::zeros(n, 2 * n);
        for k in 0..n {
            f[(k, k)] = linops::ONE;
            f[(k, n + k)] = linops::ONE;
        }
        f
    }
}

/// `F_r(z)` split into its two blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    pub minus: CMat,
    pub plus: CMat,
}

impl Blocks {
    fn split(f: &CMat, n: usize) -> Self {
        Blocks {
            minus: f.columns(0, n).into_owned(),
            plus: f.columns(n, n).into_owned(),
        }
    }

    pub fn component(&self, c: Component) -> &CMat {
        match c {
            Component::Minus => &self.minus,
            Component::Plus => &self.plus,
        }
    }
}

fn check_state(f: &CMat, s: f64, step: usize) -> Result<()> {
    if linops::is_finite(f) {
        Ok(())
    } else {
        Err(Error::NonFinite { r: s, step })
    }
}

/// RK4 states `F_{kh}(z)` for `k = 0..=N`.
pub fn trajectory(spec: &CanonicalSystemSpec, r: f64, z: Complex64) -> Result<(Vec<CMat>, f64)> {
    spec.check()?;
    spec.check_endpoint(r)?;
    let (steps, h) = spec.grid(r);
    let mut f = spec.initial();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(f.clone());
    let hc = Complex64::new(h, 0.0);
    for k in 0..steps {
        let s = k as f64 * h;
        let g0 = spec.generator(s, z);
        let gm = spec.generator(s + 0.5 * h, z);
        let g1 = spec.generator(s + h, z);
        let k1 = &f * &g0;
        let k2 = (&f + &k1 * (hc * 0.5)) * &gm;
        let k3 = (&f + &k2 * (hc * 0.5)) * &gm;
        let k4 = (&f + &k3 * hc) * &g1;
        f += (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * (hc / 6.0);
        check_state(&f, s + h, k + 1)?;
        out.push(f.clone());
    }
    Ok((out, h))
}

/// `(E-^r(z), E+^r(z))` by fixed-step RK4.
pub fn solve(spec: &CanonicalSystemSpec, r: f64, z: Complex64) -> Result<Blocks> {
    let (states, _) = trajectory(spec, r, z)?;
    Ok(Blocks::split(states.last().expect("initial state"), spec.n))
}

/// `F_r(z)` and `dF_r/dz` from one co-integrated pass of the augmented
/// system `G' = i F j + G (i z j + Q)`, `G_0 = 0`.
pub fn solve_with_zderiv(spec: &CanonicalSystemSpec, r: f64, z: Complex64) -> Result<(Blocks, Blocks)> {
    spec.check()?;
    spec.check_endpoint(r)?;
    let (steps, h) = spec.grid(r);
    let ij = spec.signature() * I;
    let mut f = spec.initial();
    let mut g = DMatrix::zeros(spec.n, 2 * spec.n);
    let hc = Complex64::new(h, 0.0);
    let rhs = |f: &CMat, g: &CMat, gen: &CMat| (f * gen, f * &ij + g * gen);
    for k in 0..steps {
        let s = k as f64 * h;
        let g0 = spec.generator(s, z);
        let gm = spec.generator(s + 0.5 * h, z);
        let g1 = spec.generator(s + h, z);
        let (a1, b1) = rhs(&f, &g, &g0);
        let (a2, b2) = rhs(&(&f + &a1 * (hc * 0.5)), &(&g + &b1 * (hc * 0.5)), &gm);
        let (a3, b3) = rhs(&(&f + &a2 * (hc * 0.5)), &(&g + &b2 * (hc * 0.5)), &gm);
        let (a4, b4) = rhs(&(&f + &a3 * hc), &(&g + &b3 * hc), &g1);
        f += (a1 + (a2 + a3) * Complex64::new(2.0, 0.0) + a4) * (hc / 6.0);
        g += (b1 + (b2 + b3) * Complex64::new(2.0, 0.0) + b4) * (hc / 6.0);
        check_state(&f, s + h, k + 1)?;
        check_state(&g, s + h, k + 1)?;
    }
    Ok((Blocks::split(&f, spec.n), Blocks::split(&g, spec.n)))
}

/// Composite Simpson weights on `N` equal intervals (3/8 rule on the last
/// three intervals when `N` is odd, trapezoid for `N = 1`).
fn simpson_weights(intervals: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; intervals + 1];
    match intervals {
        0 => {}
        1 => {
            w[0] = h / 2.0;
            w[1] = h / 2.0;
        }
        _ => {
            let (simpson_end, tail) = if intervals.is_multiple_of(2) {
                (intervals, false)
            } else {
                (intervals - 3, true)
            };
            let mut k = 0;
            while k + 2 <= simpson_end {
                w[k] += h / 3.0;
                w[k + 1] += 4.0 * h / 3.0;
                w[k + 2] += h / 3.0;
                k += 2;
            }
            if tail {
                let s = simpson_end;
                let c = 3.0 * h / 8.0;
                w[s] += c;
                w[s + 1] += 3.0 * c;
                w[s + 2] += 3.0 * c;
                w[s + 3] += c;
            }
        }
    }
    w
}

/// `int_0^r F_s(z) F_s(xi)* ds` by Simpson on the solver grid.
pub fn state_gram(spec: &CanonicalSystemSpec, r: f64, z: Complex64, xi: Complex64) -> Result<CMat> {
    let (fz, h) = trajectory(spec, r, z)?;
    let fx = if xi == z { fz.clone() } else { trajectory(spec, r, xi)?.0 };
    let weights = simpson_weights(fz.len() - 1, h);
    let mut acc = DMatrix::zeros(spec.n, spec.n);
    for ((a, b), w) in fz.iter().zip(&fx).zip(weights) {
        acc += a * b.adjoint() * Complex64::new(w, 0.0);
    }
    Ok(acc)
}

/// `|| F_r(z) j F_r(xi)* - i (z - conj xi) int_0^r F_s(z) F_s(xi)* ds ||`.
pub fn integral_identity_residual(spec: &CanonicalSystemSpec, r: f64, z: Complex64, xi: Complex64) -> Result<f64> {
    let (fz, _) = trajectory(spec, r, z)?;
    let (fx, _) = trajectory(spec, r, xi)?;
    let lhs = fz.last().unwrap() * spec.signature() * fx.last().unwrap().adjoint();
    let integral = state_gram(spec, r, z, xi)?;
    let rhs = integral * (I * (z - xi.conj()));
    Ok(linops::spectral_norm(&(lhs - rhs)))
}

/// `(r, ||F_r(z)||)` along the integration grid.
pub fn solver_trace(spec: &CanonicalSystemSpec, r: f64, z: Complex64) -> Result<Vec<(f64, f64)>> {
    let (states, h) = trajectory(spec, r, z)?;
    Ok(states
        .iter()
        .enumerate()
        .map(|(k, f)| (k as f64 * h, linops::spectral_norm(f)))
        .collect())
}

pub fn solver_trace_csv(trace: &[(f64, f64)]) -> String {
    let mut csv = Csv::new(&["r", "norm_f"]);
    for &(r, v) in trace {
        csv.row(&[r, v]);
    }
    csv.finish()
}

type CacheKey = (u64, u64, u64);

fn key(r: f64, z: Complex64) -> CacheKey {
    (r.to_bits(), z.re.to_bits(), z.im.to_bits())
}

/// A canonical system with per-instance memoization of solutions, keyed by
/// the exact bits of `(r, z)`.
pub struct CanonicalSystem {
    spec: CanonicalSystemSpec,
    values: RwLock<HashMap<CacheKey, Blocks>>,
    derivs: RwLock<HashMap<CacheKey, (Blocks, Blocks)>>,
}

impl CanonicalSystem {
    pub fn new(spec: CanonicalSystemSpec) -> Result<Self> {
        spec.check()?;
        Ok(CanonicalSystem {
            spec,
            values: RwLock::default(),
            derivs: RwLock::default(),
        })
    }

    pub fn spec(&self) -> &CanonicalSystemSpec {
        &self.spec
    }

    pub fn value(&self, r: f64, z: Complex64) -> Result<Blocks> {
        let k = key(r, z);
        if let Some(b) = self.values.read().expect("cache lock").get(&k) {
            return Ok(b.clone());
        }
        if let Some((b, _)) = self.derivs.read().expect("cache lock").get(&k) {
            return Ok(b.clone());
        }
        let b = solve(&self.spec, r, z)?;
        self.values.write().expect("cache lock").insert(k, b.clone());
        Ok(b)
    }

    pub fn value_with_zderiv(&self, r: f64, z: Complex64) -> Result<(Blocks, Blocks)> {
        let k = key(r, z);
        if let Some(b) = self.derivs.read().expect("cache lock").get(&k) {
            return Ok(b.clone());
        }
        let b = solve_with_zderiv(&self.spec, r, z)?;
        self.derivs.write().expect("cache lock").insert(k, b.clone());
        Ok(b)
    }

    pub fn cached_points(&self) -> usize {
        self.values.read().expect("cache lock").len() + self.derivs.read().expect("cache lock").len()
    }

    /// The pair `(E-^r, E+^r)` as entire operator functions.
    pub fn components(self: &Arc<Self>, r: f64) -> (EFun, EFun) {
        let make = |component| EFun::CanonicalBacked {
            system: Arc::clone(self),
            endpoint: r,
            component,
        };
        (make(Component::Minus), make(Component::Plus))
    }
}

impl fmt::Debug for CanonicalSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CanonicalSystem")
            .field("spec", &self.spec)
            .finish_non_exhaustive()
    }
}

impl Serialize for CanonicalSystem {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.spec.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CanonicalSystem {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let spec = CanonicalSystemSpec::deserialize(d)?;
        CanonicalSystem::new(spec).map_err(D::Error::custom)
    }
}

/// Spot checks of the side conditions under which the solution blocks form
/// a de Branges pair. These are witnessed at one point, never proven.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProvisoReport {
    #[serde(with = "io::serde_c64")]
    pub xi0: Complex64,
    /// smallest eigenvalue of `int F_s(xi0) F_s(xi0)* ds`
    pub gram_min_eig_xi0: f64,
    /// smallest eigenvalue of the same integral at `conj(xi0)`
    pub gram_min_eig_conj_xi0: f64,
    pub witnessed_gram_positive: bool,
    /// `max |E+(xi0) - E+(xi0)*|`
    pub eplus_asymmetry: f64,
    /// `max |E-(conj xi0) - E-(conj xi0)*|`
    pub eminus_asymmetry: f64,
    pub witnessed_selfadjoint: bool,
}

pub fn check_provisos(spec: &CanonicalSystemSpec, r: f64, xi0: Complex64, tol: f64) -> Result<ProvisoReport> {
    if xi0.im <= 0.0 {
        return Err(Error::Precondition("xi0 must lie in the open upper half-plane".into()));
    }
    let g_up = state_gram(spec, r, xi0, xi0)?;
    let g_down = state_gram(spec, r, xi0.conj(), xi0.conj())?;
    let e_up = linops::hermitian_eigenvalues(&g_up)?;
    let e_down = linops::hermitian_eigenvalues(&g_down)?;
    let positive = |ev: &[f64]| {
        let top = ev.iter().map(|v| v.abs()).fold(0.0, f64::max);
        ev[0] > tol * top && top > 0.0
    };
    let plus = solve(spec, r, xi0)?.plus;
    let minus = solve(spec, r, xi0.conj())?.minus;
    let asym = |m: &CMat| linops::max_abs(&(m - m.adjoint()));
    let (ap, am) = (asym(&plus), asym(&minus));
    let sa_tol = 1e-8;
    Ok(ProvisoReport {
        xi0,
        gram_min_eig_xi0: e_up[0],
        gram_min_eig_conj_xi0: e_down[0],
        witnessed_gram_positive: positive(&e_up) && positive(&e_down),
        eplus_asymmetry: ap,
        eminus_asymmetry: am,
        witnessed_selfadjoint: ap <= sa_tol * (1.0 + linops::max_abs(&plus))
            && am <= sa_tol * (1.0 + linops::max_abs(&minus)),
    })
}

/// Wraps the solution blocks at `r` as a de Branges pair and validates it.
/// The proviso spot checks at `xi0` are attached to the report.
pub fn to_debranges(
    system: &Arc<CanonicalSystem>,
    r: f64,
    config: &ValidationConfig,
    xi0: Complex64,
) -> Result<DeBrangesOperator> {
    if !(r > 0.0) {
        return Err(Error::Precondition(format!("to_debranges needs r > 0, got {r}")));
    }
    system.spec().check_endpoint(r)?;
    let provisos = check_provisos(system.spec(), r, xi0, config.tolerances.psd_tol)?;
    let (minus, plus) = system.components(r);
    let db = DeBrangesOperator::new(minus, plus)?.with_label(format!("canonical(r={r})"));
    let mut report = db.run_validation(config)?;
    report.provisos = Some(provisos);
    db.finish_validation(report)
}
