//! Batch front end: one JSON run configuration, one named command per
//! process, a JSON summary plus CSV tables in the output directory.
//!
//! Exit codes: 0 when the command's checks pass, 2 on a validation or
//! property failure (the report is still written), 1 on usage errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::csys::{self, CanonicalSystem, CanonicalSystemSpec};
use crate::debranges::{
    exponential_pair, isometry_check, recover_e, subspace_kernel, verify_positivity, DeBrangesOperator,
    KernelCombo, PositivitySampler, ReproducingKernel, ValidationConfig, ValidationReport, VectorFunction,
};
use crate::efun::{inner_check, EFun};
use crate::error::{Error, Result};
use crate::io::{self, serde_c64, Csv};
use crate::linops::{self, CMat, CVec, Tolerances, ONE};
use crate::specext::{self, KramerBasis, ScanConfig};

pub const SCHEMA_VERSION: u32 = 1;
pub const OUTPUT_DIR_ENV: &str = "DEBRANGES_OUTPUT_DIR";
pub const EXIT_PASS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAIL: i32 = 2;

type Pair = [f64; 2];

fn c(p: Pair) -> Complex64 {
    io::pair_to_c64(p)
}

/// How the de Branges pair is built. Exactly one per run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Construction {
    Pair {
        minus: EFun,
        plus: EFun,
        #[serde(default)]
        label: Option<String>,
    },
    /// `(exp(iaz) I_n, exp(-iaz) I_n)`
    Exponential { a: f64, n: usize },
    /// Solution blocks of a canonical system at `r`; `xi0` is where the
    /// side conditions are spot-checked.
    Canonical {
        system: CanonicalSystemSpec,
        r: f64,
        #[serde(default = "default_xi0", with = "serde_c64")]
        xi0: Complex64,
    },
}

fn default_xi0() -> Complex64 {
    Complex64::new(0.0, 1.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub construction: Construction,
    /// Grids for the validation pass. Its `tolerances` are replaced by the
    /// top-level ones.
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Required by every command that samples.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub commands: CommandParams,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.tolerances.check()?;
        Ok(cfg)
    }

    pub fn validation_config(&self) -> ValidationConfig {
        ValidationConfig {
            tolerances: self.tolerances,
            ..self.validation.clone()
        }
    }

    /// The configured pair, not yet validated.
    pub fn operator(&self) -> Result<Arc<DeBrangesOperator>> {
        Ok(build(self)?.op)
    }

    /// The configured pair after a passing validation.
    pub fn validated_operator(&self) -> Result<Arc<DeBrangesOperator>> {
        let built = build(self)?;
        let report = full_validation(self, &built)?;
        Ok(Arc::new((*built.op).clone().finish_validation(report)?))
    }

    fn seed(&self, command: &str) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Precondition(format!("command `{command}` samples randomly and needs `seed`")))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommandParams {
    pub kernel_eval: KernelEvalParams,
    pub gram: GramParams,
    pub positivity: PositivityParams,
    pub subspace_kernel: SubspaceKernelParams,
    pub recover_e: RecoverParams,
    pub spectrum: SpectrumParams,
    pub eigenfunctions: EigenfunctionParams,
    pub reconstruct: ReconstructParams,
    pub canonical_identity: CanonicalIdentityParams,
    pub isometry_check: IsometryParams,
}

fn default_point_pairs() -> Vec<[Pair; 2]> {
    vec![
        [[0.0, 0.0], [0.0, 0.0]],
        [[0.5, 0.2], [1.0, -0.3]],
        [[-1.0, 1.0], [2.0, 0.5]],
        [[0.3, -0.4], [-0.7, 0.9]],
    ]
}

/// `(xi, z)` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelEvalParams {
    pub pairs: Vec<[Pair; 2]>,
}

impl Default for KernelEvalParams {
    fn default() -> Self {
        KernelEvalParams {
            pairs: default_point_pairs(),
        }
    }
}

/// Gram matrix of `K_{w_j} u_j`; vectors default to all ones.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GramParams {
    pub points: Vec<Pair>,
    pub vectors: Option<Vec<Vec<Pair>>>,
}

impl Default for GramParams {
    fn default() -> Self {
        GramParams {
            points: vec![[0.0, 0.0], [1.0, 0.5], [-1.0, 0.5], [0.5, -0.3]],
            vectors: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PositivityParams {
    pub draws: usize,
    pub max_pairs: usize,
    pub half_width: f64,
}

impl Default for PositivityParams {
    fn default() -> Self {
        PositivityParams {
            draws: 200,
            max_pairs: 10,
            half_width: 3.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubspaceKernelParams {
    pub beta: Pair,
    pub pairs: Vec<[Pair; 2]>,
    /// Bound on `||K^beta_xi(beta)|| / (1 + ||K_xi(beta)||)`.
    pub tol: f64,
}

impl Default for SubspaceKernelParams {
    fn default() -> Self {
        SubspaceKernelParams {
            beta: [0.0, 1.0],
            pairs: default_point_pairs(),
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoverParams {
    pub beta: Pair,
    pub samples: usize,
    pub half_width: f64,
    /// Relative to `1 + max ||K(xi, z)||` over the samples.
    pub tol: f64,
}

impl Default for RecoverParams {
    fn default() -> Self {
        RecoverParams {
            beta: [0.0, 1.0],
            samples: 50,
            half_width: 3.0,
            tol: 1e-8,
        }
    }
}

/// Shared by `spectrum`, `eigenfunctions` and `reconstruct`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumParams {
    /// Unitary parameter as `[re, im]` rows; identity when absent.
    pub v: Option<Vec<Vec<Pair>>>,
    pub interval: Pair,
    pub scan: ScanConfig,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        SpectrumParams {
            v: None,
            interval: [-3.5, 3.5],
            scan: ScanConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenfunctionParams {
    /// Orthogonality bound relative to the largest diagonal term.
    pub tol: f64,
}

impl Default for EigenfunctionParams {
    fn default() -> Self {
        EigenfunctionParams { tol: 1e-8 }
    }
}

/// The target `f = sum_j K_{w_j} c_j`; coefficients default to all ones.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructParams {
    pub points: Vec<Pair>,
    pub coeffs: Option<Vec<Vec<Pair>>>,
    pub eval_interval: Pair,
    pub eval_count: usize,
    /// Truncation levels; all nodes when empty.
    pub levels: Vec<usize>,
    /// Bound on the relative sup error at the last level.
    pub max_relative_error: f64,
}

impl Default for ReconstructParams {
    fn default() -> Self {
        ReconstructParams {
            points: vec![[0.3, 0.0], [-1.2, 0.0]],
            coeffs: None,
            eval_interval: [-2.0, 2.0],
            eval_count: 81,
            levels: Vec::new(),
            max_relative_error: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CanonicalIdentityParams {
    /// `(z, xi)` pairs.
    pub pairs: Vec<[Pair; 2]>,
    pub tol: f64,
}

impl Default for CanonicalIdentityParams {
    fn default() -> Self {
        CanonicalIdentityParams {
            pairs: vec![
                [[1.0, 0.5], [0.3, -0.2]],
                [[-0.5, 0.0], [2.0, 1.0]],
                [[0.0, 1.0], [0.0, 1.0]],
            ],
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsometryParams {
    pub samples: usize,
    pub half_width: f64,
    /// Range of `Im beta`.
    pub beta_im: Pair,
    pub tol: f64,
}

impl Default for IsometryParams {
    fn default() -> Self {
        IsometryParams {
            samples: 20,
            half_width: 2.0,
            beta_im: [0.2, 2.0],
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandName {
    Validate,
    KernelEval,
    Gram,
    Positivity,
    SubspaceKernel,
    RecoverE,
    Spectrum,
    Eigenfunctions,
    Reconstruct,
    CanonicalIdentity,
    InnerCheck,
    IsometryCheck,
}

impl CommandName {
    pub const ALL: [CommandName; 12] = [
        CommandName::Validate,
        CommandName::KernelEval,
        CommandName::Gram,
        CommandName::Positivity,
        CommandName::SubspaceKernel,
        CommandName::RecoverE,
        CommandName::Spectrum,
        CommandName::Eigenfunctions,
        CommandName::Reconstruct,
        CommandName::CanonicalIdentity,
        CommandName::InnerCheck,
        CommandName::IsometryCheck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CommandName::Validate => "validate",
            CommandName::KernelEval => "kernel-eval",
            CommandName::Gram => "gram",
            CommandName::Positivity => "positivity",
            CommandName::SubspaceKernel => "subspace-kernel",
            CommandName::RecoverE => "recover-e",
            CommandName::Spectrum => "spectrum",
            CommandName::Eigenfunctions => "eigenfunctions",
            CommandName::Reconstruct => "reconstruct",
            CommandName::CanonicalIdentity => "canonical-identity",
            CommandName::InnerCheck => "inner-check",
            CommandName::IsometryCheck => "isometry-check",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == name)
    }

    /// Commands that operate on the raw pair; the rest need it validated.
    fn needs_validation(self) -> bool {
        !matches!(
            self,
            CommandName::Validate
                | CommandName::KernelEval
                | CommandName::Gram
                | CommandName::Positivity
                | CommandName::InnerCheck
                | CommandName::CanonicalIdentity
        )
    }
}

/// One written report.
#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub toolkit_version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub label: String,
    pub passed: bool,
    pub error: Option<String>,
    pub files: Vec<String>,
    pub result: Value,
}

pub struct Outcome {
    pub exit_code: i32,
    pub report_path: PathBuf,
    pub report: Report,
}

pub fn config_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Errors that stem from the request rather than from the numerics.
fn is_usage_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Precondition(_) | Error::DimensionMismatch(_) | Error::Parse(_) | Error::Io(_) | Error::Json(_)
    )
}

struct Built {
    op: Arc<DeBrangesOperator>,
    system: Option<(Arc<CanonicalSystem>, f64, Complex64)>,
}

fn build(cfg: &RunConfig) -> Result<Built> {
    match &cfg.construction {
        Construction::Pair { minus, plus, label } => {
            let db = DeBrangesOperator::new(minus.clone(), plus.clone())?;
            let db = match label {
                Some(l) => db.with_label(l.clone()),
                None => db,
            };
            Ok(Built {
                op: Arc::new(db),
                system: None,
            })
        }
        Construction::Exponential { a, n } => {
            if !(*a > 0.0) || *n == 0 {
                return Err(Error::Precondition("exponential pair needs a > 0 and n >= 1".into()));
            }
            let (m, p) = exponential_pair(*a, *n);
            Ok(Built {
                op: Arc::new(DeBrangesOperator::new(m, p)?.with_label(format!("exponential(a={a}, n={n})"))),
                system: None,
            })
        }
        Construction::Canonical { system, r, xi0 } => {
            if !(*r > 0.0) {
                return Err(Error::Precondition(format!("canonical construction needs r > 0, got {r}")));
            }
            let sys = Arc::new(CanonicalSystem::new(system.clone())?);
            let (m, p) = sys.components(*r);
            let db = DeBrangesOperator::new(m, p)?.with_label(format!("canonical(r={r})"));
            Ok(Built {
                op: Arc::new(db),
                system: Some((sys, *r, *xi0)),
            })
        }
    }
}

fn full_validation(cfg: &RunConfig, built: &Built) -> Result<ValidationReport> {
    let mut report = built.op.run_validation(&cfg.validation_config())?;
    if let Some((sys, r, xi0)) = &built.system {
        report.provisos = Some(csys::check_provisos(sys.spec(), *r, *xi0, cfg.tolerances.psd_tol)?);
    }
    Ok(report)
}

/// What a command produced before it is wrapped in a [`Report`].
struct CommandOutput {
    passed: bool,
    result: Value,
    tables: Vec<(String, String)>,
}

impl CommandOutput {
    fn new(passed: bool, result: Value) -> Self {
        CommandOutput {
            passed,
            result,
            tables: Vec::new(),
        }
    }

    fn table(mut self, suffix: &str, csv: String) -> Self {
        self.tables.push((suffix.to_string(), csv));
        self
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn matrix_param(rows: &Option<Vec<Vec<Pair>>>, n: usize) -> Result<CMat> {
    match rows {
        None => Ok(linops::identity(n)),
        Some(r) => io::rows_to_cmat(r).map_err(Error::Parse),
    }
}

fn vector_list(list: &Option<Vec<Vec<Pair>>>, count: usize, n: usize) -> Result<Vec<CVec>> {
    match list {
        None => Ok(vec![CVec::from_element(n, ONE); count]),
        Some(v) => {
            if v.len() != count {
                return Err(Error::DimensionMismatch(format!("{} vectors for {count} points", v.len())));
            }
            Ok(v.iter().map(|p| io::pairs_to_cvec(p)).collect())
        }
    }
}

fn random_c(rng: &mut ChaCha8Rng, re: Pair, im: Pair) -> Complex64 {
    Complex64::new(rng.gen_range(re[0]..=re[1]), rng.gen_range(im[0]..=im[1]))
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> CVec {
    let v = CVec::from_fn(n, |_, _| random_c(rng, [-1.0, 1.0], [-1.0, 1.0]));
    let norm = v.norm();
    v / Complex64::new(norm, 0.0)
}

fn point_header(names: &[&str], rows: usize, cols: usize) -> Vec<String> {
    let mut h: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    h.extend(io::matrix_header(rows, cols));
    h
}

fn cmd_validate(cfg: &RunConfig, built: &Built) -> Result<CommandOutput> {
    let report = full_validation(cfg, built)?;
    let mut csv = Csv::new(&["check_index", "passed"]);
    for (k, check) in report.checks.iter().enumerate() {
        csv.row(&[k as f64, if check.passed { 1.0 } else { 0.0 }]);
    }
    Ok(CommandOutput::new(report.passed, to_value(&report)?).table("checks", csv.finish()))
}

fn cmd_kernel_eval(cfg: &RunConfig, op: &DeBrangesOperator) -> Result<CommandOutput> {
    let n = op.dim();
    let mut csv = Csv::new(&point_header(&["xi_re", "xi_im", "z_re", "z_im"], n, n));
    let mut finite = true;
    for [xi, z] in &cfg.commands.kernel_eval.pairs {
        let k = op.kernel(c(*xi), c(*z))?;
        finite &= linops::is_finite(&k);
        let mut row = vec![xi[0], xi[1], z[0], z[1]];
        row.extend(io::matrix_entries(&k));
        csv.row(&row);
    }
    let result = json!({ "pairs": cfg.commands.kernel_eval.pairs.len(), "finite": finite });
    Ok(CommandOutput::new(finite, result).table("", csv.finish()))
}

fn cmd_gram(cfg: &RunConfig, op: &DeBrangesOperator) -> Result<CommandOutput> {
    let p = &cfg.commands.gram;
    let points: Vec<Complex64> = p.points.iter().map(|&q| c(q)).collect();
    let vectors = vector_list(&p.vectors, points.len(), op.dim())?;
    let g = crate::debranges::gram(op, &points, &vectors)?;
    let eig = linops::hermitian_eigenvalues(&g)?;
    let norm = linops::spectral_norm(&g);
    let min = eig.first().copied().unwrap_or(0.0);
    let hermitian_defect = linops::max_abs(&(&g - g.adjoint()));
    let tol = cfg.tolerances.psd_tol * (1.0 + norm);
    let result = json!({
        "size": points.len(),
        "min_eigenvalue": min,
        "spectral_norm": norm,
        "hermitian_defect": hermitian_defect,
        "threshold": tol,
        "eigenvalues": eig,
    });
    Ok(CommandOutput::new(min >= -tol && hermitian_defect <= tol, result).table("", io::matrix_csv(&g)))
}

fn cmd_positivity(cfg: &RunConfig, op: &DeBrangesOperator) -> Result<CommandOutput> {
    let p = &cfg.commands.positivity;
    let sampler = PositivitySampler::new(p.draws, p.max_pairs, p.half_width, cfg.seed("positivity")?);
    let report = verify_positivity(op, &sampler, cfg.tolerances.psd_tol)?;
    Ok(CommandOutput::new(report.passed, json!({ "sampler": sampler, "report": report })))
}

fn cmd_subspace_kernel(cfg: &RunConfig, op: &DeBrangesOperator) -> Result<CommandOutput> {
    let p = &cfg.commands.subspace_kernel;
    let beta = c(p.beta);
    let n = op.dim();
    let rtol = cfg.tolerances.rank_rel_tol;
    let mut csv = Csv::new(&point_header(&["xi_re", "xi_im", "z_re", "z_im"], n, n));
    let mut vanishing: f64 = 0.0;
    for [xi, z] in &p.pairs {
        let k = subspace_kernel(op, beta, c(*xi), c(*z), rtol)?;
        let mut row = vec![xi[0], xi[1], z[0], z[1]];
        row.extend(io::matrix_entries(&k));
        csv.row(&row);
        let at_beta = subspace_kernel(op, beta, c(*xi), beta, rtol)?;
        let scale = 1.0 + linops::spectral_norm(&op.kernel(c(*xi), beta)?);
        vanishing = vanishing.max(linops::spectral_norm(&at_beta) / scale);
    }
    let result = json!({ "beta": p.beta, "vanishing_at_beta": vanishing, "tol": p.tol });
    Ok(CommandOutput::new(vanishing <= p.tol, result).table("", csv.finish()))
}

fn cmd_recover_e(cfg: &RunConfig, op: &Arc<DeBrangesOperator>) -> Result<CommandOutput> {
    let p = &cfg.commands.recover_e;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed("recover-e")?);
    let kernel: Arc<dyn ReproducingKernel> = op.clone();
    let rec = recover_e(kernel, c(p.beta), cfg.tolerances.rank_rel_tol)?;
    let w = [-p.half_width, p.half_width];
    let mut csv = Csv::new(&["xi_re", "xi_im", "z_re", "z_im", "error", "kernel_norm"]);
    let (mut worst, mut scale): (f64, f64) = (0.0, 0.0);
    for _ in 0..p.samples {
        let (xi, z) = (random_c(&mut rng, w, w), random_c(&mut rng, w, w));
        let k = op.kernel(xi, z)?;
        let err = linops::spectral_norm(&(rec.kernel(xi, z)? - &k));
        let kn = linops::spectral_norm(&k);
        worst = worst.max(err);
        scale = scale.max(kn);
        csv.row(&[xi.re, xi.im, z.re, z.im, err, kn]);
    }
    let bound = p.tol * (1.0 + scale);
    let result = json!({
        "beta": p.beta,
        "samples": p.samples,
        "max_error": worst,
        "max_kernel_norm": scale,
        "bound": bound,
    });
    Ok(CommandOutput::new(worst <= bound, result).table("", csv.finish()))
}

fn run_spectrum(cfg: &RunConfig, op: &DeBrangesOperator) -> Result<specext::ExtensionSpectrum> {
    let p = &cfg.commands.spectrum;
    let v = matrix_param(&p.v, op.dim())?;
    specext::spectrum(op, &v, p.interval, &p.scan, &cfg.tolerances)
}

fn cmd_spectrum(cfg: &RunConfig, op: &DeBrangesOperator) -> Result<CommandOutput> {
    let s = run_spectrum(cfg, op)?;
    let result = json!({
        "interval": s.interval,
        "count": s.nodes.len(),
        "nodes": s.nodes,
        "multiplicities": s.multiplicities(),
        "residuals": s.residuals,
    });
    Ok(CommandOutput::new(true, result)
        .table("", s.nodes_csv())
        .table("sigma_profile", s.profile_csv()))
}

fn cmd_eigenfunctions(cfg: &RunConfig, op: &Arc<DeBrangesOperator>) -> Result<CommandOutput> {
    let s = run_spectrum(cfg, op)?;
    let sa = cfg.tolerances.singular_accept;
    let n = op.dim();
    let mut header = vec!["node".to_string(), "basis_index".to_string()];
    for k in 0..n {
        header.push(format!("c{k}_re"));
        header.push(format!("c{k}_im"));
    }
    let mut csv = Csv::new(&header);
    for (mu, basis) in s.nodes.iter().zip(&s.nullspaces) {
        for (j, u) in basis.iter().enumerate() {
            let f = specext::eigenfunction(op, *mu, u, sa)?;
            let mut row = vec![*mu, j as f64];
            row.extend(f.coeffs()[0].iter().flat_map(|z| [z.re, z.im]));
            csv.row(&row);
        }
    }
    let orth = specext::orthogonality_check(op, &s, cfg.commands.eigenfunctions.tol, sa)?;
    let result = json!({ "nodes": s.nodes, "orthogonality": orth });
    Ok(CommandOutput::new(orth.passed, result).table("", csv.finish()))
}

fn cmd_reconstruct(cfg: &RunConfig, op: &Arc<DeBrangesOperator>) -> Result<CommandOutput> {
    let p = &cfg.commands.reconstruct;
    let s = run_spectrum(cfg, op)?;
    let points: Vec<Complex64> = p.points.iter().map(|&q| c(q)).collect();
    let coeffs = vector_list(&p.coeffs, points.len(), op.dim())?;
    let f = KernelCombo::new(op.clone(), points, coeffs)?;
    let grid: Vec<Complex64> = crate::debranges::linspace(p.eval_interval[0], p.eval_interval[1], p.eval_count.max(2))
        .into_iter()
        .map(|x| Complex64::new(x, 0.0))
        .collect();
    let levels = if p.levels.is_empty() { vec![s.nodes.len()] } else { p.levels.clone() };
    let report = specext::sampling_convergence(op, &s, &f, &grid, &levels, &cfg.tolerances)?;
    let last = report.levels.last().map_or(f64::INFINITY, |l| l.relative_error);

    let basis = KramerBasis::new(op, &s, &cfg.tolerances)?;
    let samples: Vec<CVec> = s
        .nodes
        .iter()
        .map(|&m| f.eval(Complex64::new(m, 0.0)))
        .collect::<Result<_>>()?;
    let rec = basis.combination(&samples)?;
    let mut values = Csv::new(&["x", "f_re", "f_im", "reconstruction_re", "reconstruction_im"]);
    for z in &grid {
        let (a, b) = (f.eval(*z)?[0], rec.eval(*z)?[0]);
        values.row(&[z.re, a.re, a.im, b.re, b.im]);
    }
    let csv = report.csv();
    let passed = last <= p.max_relative_error && !s.nodes.is_empty();
    let result = json!({ "nodes": s.nodes.len(), "convergence": report, "max_relative_error": p.max_relative_error });
    Ok(CommandOutput::new(passed, result).table("", csv).table("values", values.finish()))
}

fn cmd_canonical_identity(cfg: &RunConfig, built: &Built) -> Result<CommandOutput> {
    let Some((sys, r, _)) = &built.system else {
        return Err(Error::Precondition("canonical-identity needs a canonical construction".into()));
    };
    let p = &cfg.commands.canonical_identity;
    let spec = sys.spec();
    let mut csv = Csv::new(&["z_re", "z_im", "xi_re", "xi_im", "residual"]);
    let mut worst: f64 = 0.0;
    for [z, xi] in &p.pairs {
        let res = csys::integral_identity_residual(spec, *r, c(*z), c(*xi))?;
        worst = worst.max(res);
        csv.row(&[z[0], z[1], xi[0], xi[1], res]);
    }
    let mut out = CommandOutput::new(worst <= p.tol, json!({ "r": r, "max_residual": worst, "tol": p.tol }))
        .table("", csv.finish());
    if let Some([z, _]) = p.pairs.first() {
        out = out.table("trace", csys::solver_trace_csv(&csys::solver_trace(spec, *r, c(*z))?));
    }
    Ok(out)
}

fn cmd_inner_check(cfg: &RunConfig, op: &DeBrangesOperator) -> Result<CommandOutput> {
    let v = cfg.validation_config();
    let ratio = op.ratio(cfg.tolerances.singular_accept);
    let report = inner_check(&ratio, &v.upper_grid(), &v.real_grid(), v.inner_tol)?;
    let passed = report.inner_both_sides() && report.failures.is_empty();
    Ok(CommandOutput::new(passed, to_value(&report)?))
}

fn cmd_isometry(cfg: &RunConfig, op: &DeBrangesOperator) -> Result<CommandOutput> {
    let p = &cfg.commands.isometry_check;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed("isometry-check")?);
    let w = [-p.half_width, p.half_width];
    let mut csv = Csv::new(&["beta_re", "beta_im", "w_re", "w_im", "norm_f_sq", "norm_h_sq", "difference"]);
    let mut worst: f64 = 0.0;
    for _ in 0..p.samples {
        let beta = random_c(&mut rng, w, p.beta_im);
        let wpt = random_c(&mut rng, w, w);
        let u = random_unit(&mut rng, op.dim());
        let r = isometry_check(op, beta, wpt, &u, cfg.tolerances.rank_rel_tol, p.tol)?;
        worst = worst.max(r.difference);
        csv.row(&[beta.re, beta.im, wpt.re, wpt.im, r.norm_f_sq, r.norm_h_sq, r.difference]);
    }
    let result = json!({ "samples": p.samples, "max_difference": worst, "tol": p.tol });
    Ok(CommandOutput::new(worst <= p.tol, result).table("", csv.finish()))
}

fn execute(cfg: &RunConfig, command: CommandName, built: &Built) -> Result<CommandOutput> {
    let op = &built.op;
    match command {
        CommandName::Validate => cmd_validate(cfg, built),
        CommandName::KernelEval => cmd_kernel_eval(cfg, op),
        CommandName::Gram => cmd_gram(cfg, op),
        CommandName::Positivity => cmd_positivity(cfg, op),
        CommandName::SubspaceKernel => cmd_subspace_kernel(cfg, op),
        CommandName::RecoverE => cmd_recover_e(cfg, op),
        CommandName::Spectrum => cmd_spectrum(cfg, op),
        CommandName::Eigenfunctions => cmd_eigenfunctions(cfg, op),
        CommandName::Reconstruct => cmd_reconstruct(cfg, op),
        CommandName::CanonicalIdentity => cmd_canonical_identity(cfg, built),
        CommandName::InnerCheck => cmd_inner_check(cfg, op),
        CommandName::IsometryCheck => cmd_isometry(cfg, op),
    }
}

/// Runs `command` and writes `<command>.json` plus any `<command>*.csv`
/// into `output_dir`. Usage errors are returned; numeric failures end up
/// in the report with exit code 2.
pub fn run(cfg: &RunConfig, config_bytes: &[u8], command: CommandName, output_dir: &Path) -> Result<Outcome> {
    let name = command.as_str();
    let built = build(cfg)?;
    let label = built.op.label.clone();

    let output = if command.needs_validation() {
        let report = full_validation(cfg, &built)?;
        if report.passed {
            let op = (*built.op).clone().finish_validation(report)?;
            let validated = Built {
                op: Arc::new(op),
                system: built.system.clone(),
            };
            execute(cfg, command, &validated)
        } else {
            let check = report.first_failure().map_or("unknown".to_string(), |c| c.name.clone());
            Err(Error::ValidationFailure {
                check,
                report: Box::new(report),
            })
        }
    } else {
        execute(cfg, command, &built)
    };

    let (passed, error, result, tables) = match output {
        Ok(o) => (o.passed, None, o.result, o.tables),
        Err(e) if is_usage_error(&e) => return Err(e),
        Err(Error::ValidationFailure { check, report }) => (
            false,
            Some(format!("de Branges validation failed at check `{check}`")),
            json!({ "validation": to_value(&*report)? }),
            Vec::new(),
        ),
        Err(e) => (false, Some(e.to_string()), Value::Null, Vec::new()),
    };

    fs::create_dir_all(output_dir)?;
    let mut files = Vec::new();
    for (suffix, body) in &tables {
        let file = if suffix.is_empty() { format!("{name}.csv") } else { format!("{name}_{suffix}.csv") };
        fs::write(output_dir.join(&file), body)?;
        files.push(file);
    }
    let report = Report {
        schema_version: SCHEMA_VERSION,
        toolkit_version: env!("CARGO_PKG_VERSION"),
        command: name,
        config_sha256: config_hash(config_bytes),
        seed: cfg.seed,
        label,
        passed,
        error,
        files,
        result,
    };
    let report_path = output_dir.join(format!("{name}.json"));
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&report_path, text)?;
    Ok(Outcome {
        exit_code: if passed { EXIT_PASS } else { EXIT_FAIL },
        report_path,
        report,
    })
}

#[derive(Debug, Parser)]
#[command(name = "debranges", version, about = "Kernels, extensions and sampling for vector-valued de Branges spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory; falls back to the config, then to $DEBRANGES_OUTPUT_DIR, then to `.`
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Identity, inner-function, invertibility and index checks
    Validate(Common),
    /// Kernel values at (xi, z) pairs
    KernelEval(Common),
    /// Gram matrix of kernel sections
    Gram(Common),
    /// Seeded random Gram positivity draws
    Positivity(Common),
    /// Kernel of the subspace vanishing at beta
    SubspaceKernel(Common),
    /// Rebuild the pair from its kernel and compare kernels
    RecoverE(Common),
    /// Eigenvalues of a self-adjoint extension
    Spectrum(Common),
    /// Eigenfunctions and their orthogonality
    Eigenfunctions(Common),
    /// Sampling reconstruction and its convergence
    Reconstruct(Common),
    /// Integral identity of a canonical system
    CanonicalIdentity(Common),
    /// Inner-function check of E+^{-1} E-
    InnerCheck(Common),
    /// Seeded isometry checks of the reflection between subspaces
    IsometryCheck(Common),
}

impl Command {
    fn split(self) -> (CommandName, Common) {
        match self {
            Command::Validate(c) => (CommandName::Validate, c),
            Command::KernelEval(c) => (CommandName::KernelEval, c),
            Command::Gram(c) => (CommandName::Gram, c),
            Command::Positivity(c) => (CommandName::Positivity, c),
            Command::SubspaceKernel(c) => (CommandName::SubspaceKernel, c),
            Command::RecoverE(c) => (CommandName::RecoverE, c),
            Command::Spectrum(c) => (CommandName::Spectrum, c),
            Command::Eigenfunctions(c) => (CommandName::Eigenfunctions, c),
            Command::Reconstruct(c) => (CommandName::Reconstruct, c),
            Command::CanonicalIdentity(c) => (CommandName::CanonicalIdentity, c),
            Command::InnerCheck(c) => (CommandName::InnerCheck, c),
            Command::IsometryCheck(c) => (CommandName::IsometryCheck, c),
        }
    }
}

/// Process entry point; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let (command, common) = cli.command.split();
    let bytes = match fs::read(&common.config) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", common.config.display());
            return EXIT_USAGE;
        }
    };
    let cfg = match std::str::from_utf8(&bytes)
        .map_err(|e| Error::Parse(e.to_string()))
        .and_then(RunConfig::from_json)
    {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: invalid config {}: {e}", common.config.display());
            return EXIT_USAGE;
        }
    };
    let out = common
        .output_dir
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    match run(&cfg, &bytes, command, &out) {
        Ok(o) => {
            let status = if o.report.passed { "pass" } else { "FAIL" };
            match &o.report.error {
                Some(err) => eprintln!("{}: {status} ({err})", command.as_str()),
                None => eprintln!("{}: {status}", command.as_str()),
            }
            println!("{}", o.report_path.display());
            o.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
