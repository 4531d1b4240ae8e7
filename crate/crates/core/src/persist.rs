//! Experiment configuration, the Bessel-zero cache, and the runners behind the CLI.
//! Every output file is written to a temporary sibling and renamed into place.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::branch::{self, Branch, BranchPoint, Solver, SolverOptions, TraceOptions};
use crate::error::{Error, Result};
use crate::extension::{self, CutoffSpec, ExtensionField, VerticalQuad};
use crate::nonlinearity::Nonlinearity;
use crate::regularity::{self, RegularityReport};
use crate::specfun::{self, BesselOrder};
use crate::spectral::BallBasis;

/// Environment variable naming the zero-cache file.
pub const CACHE_ENV: &str = "FRAC_GELFAND_CACHE";

/// Names of all checks run by [`run_verify`], in report order.
pub const CHECKS: [&str; 12] = [
    "flux_constant",
    "energy_identity",
    "max_principle",
    "orthonormality",
    "riesz_bound",
    "lemma_a_grid",
    "boundary_rate",
    "radial_monotonicity",
    "weighted_key_estimate",
    "stability_weighted_inequality",
    "exp_decay_y",
    "phi1_identity",
];

/// Checks that go through the cylinder extension and so need `s < 1`.
const EXTENSION_CHECKS: [&str; 4] =
    ["energy_identity", "weighted_key_estimate", "stability_weighted_inequality", "exp_decay_y"];

const KEYS: [&str; 20] = [
    "n",
    "s",
    "f",
    "modes",
    "quad_order",
    "t_max",
    "t_steps",
    "out_dir",
    "seed",
    "checks",
    "newton_tol",
    "newton_max_iter",
    "monotone_tol",
    "monotone_max_iter",
    "blowup",
    "eig_tol",
    "bracket_tol",
    "filter_order",
    "perturb_mu2",
    "riesz_points",
];

/// One experiment. Parsed from flat `key=value` text; see [`parse_config`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub s: f64,
    pub f_spec: String,
    pub modes: usize,
    pub quad_order: usize,
    pub t_max: f64,
    pub t_steps: usize,
    pub tolerances: SolverOptions,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Checks for `verify`; `None` means all of [`CHECKS`].
    pub checks: Option<Vec<String>>,
    /// Test hook: relative perturbation of `μ_2` applied to the verification basis.
    pub perturb_mu2: f64,
    /// Radii per branch point in the Riesz check.
    pub riesz_points: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 3,
            s: 0.5,
            f_spec: "exp".into(),
            modes: 256,
            quad_order: 1024,
            t_max: 3.0,
            t_steps: 61,
            tolerances: SolverOptions::default(),
            out_dir: PathBuf::from("out"),
            seed: 0,
            checks: None,
            perturb_mu2: 0.0,
            riesz_points: 20,
        }
    }
}

impl ExperimentConfig {
    pub fn nonlinearity(&self) -> Result<Nonlinearity> {
        Nonlinearity::parse(&self.f_spec).map_err(|e| field("f", e.to_string()))
    }

    /// Equispaced amplitudes `0, …, t_max`.
    pub fn t_grid(&self) -> Vec<f64> {
        let m = (self.t_steps - 1) as f64;
        (0..self.t_steps).map(|i| self.t_max * i as f64 / m).collect()
    }

    /// The checks `verify` runs.
    pub fn check_list(&self) -> Vec<String> {
        match &self.checks {
            Some(c) => c.clone(),
            None => CHECKS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(field("n", format!("{} is outside the admissible range n >= 2", self.n)));
        }
        if !(self.s > 0.0 && self.s <= 1.0) {
            return Err(field("s", format!("{} is outside the admissible range (0, 1]", self.s)));
        }
        if self.modes < 8 {
            return Err(field("modes", format!("{} is outside the admissible range modes >= 8", self.modes)));
        }
        if self.quad_order < self.modes {
            return Err(field("quad_order", format!("{} is below modes = {}", self.quad_order, self.modes)));
        }
        if self.t_steps < 2 {
            return Err(field("t_steps", format!("{} is outside the admissible range t_steps >= 2", self.t_steps)));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(field("t_max", format!("{} is outside the admissible range t_max > 0", self.t_max)));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("newton_tol", t.newton_tol),
            ("monotone_tol", t.monotone_tol),
            ("blowup", t.blowup),
            ("eig_tol", t.eig_tol),
            ("bracket_tol", t.bracket_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(field(name, format!("{v} must be positive")));
            }
        }
        if t.newton_max_iter == 0 || t.monotone_max_iter == 0 {
            return Err(field("newton_max_iter", "iteration limits must be positive".into()));
        }
        if let Some(bad) = self.checks.iter().flatten().find(|c| !CHECKS.contains(&c.as_str())) {
            return Err(field("checks", format!("unknown check `{bad}` (known: {})", CHECKS.join(", "))));
        }
        if !(self.perturb_mu2 > -1.0 && self.perturb_mu2.is_finite()) {
            return Err(field("perturb_mu2", format!("{} must exceed -1", self.perturb_mu2)));
        }
        if self.riesz_points == 0 {
            return Err(field("riesz_points", "must be positive".into()));
        }
        self.nonlinearity()?;
        Ok(())
    }
}

fn field(name: &str, msg: String) -> Error {
    Error::ConfigField { field: name.into(), msg }
}

/// Collects `key=value` settings from files and flags; later settings win.
#[derive(Debug, Clone, Default)]
pub struct ConfigBuilder {
    values: BTreeMap<String, String>,
}

impl ConfigBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reads `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<&mut Self> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::ConfigParse { line: i + 1, msg: format!("expected key=value, got `{line}`") });
            };
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(Error::ConfigParse { line: i + 1, msg: format!("unknown key `{key}`") });
            }
            self.values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(self)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<&mut Self> {
        if !KEYS.contains(&key) {
            return Err(field(key, "unknown key".into()));
        }
        self.values.insert(key.to_string(), value.into());
        Ok(self)
    }

    /// Fills defaults, converts values and checks the invariants.
    pub fn build(&self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::default();
        let v = &self.values;
        if let Some(x) = v.get("n") {
            c.n = num("n", x)?;
        }
        if let Some(x) = v.get("s") {
            c.s = num("s", x)?;
        }
        if let Some(x) = v.get("f") {
            c.f_spec = x.clone();
        }
        if let Some(x) = v.get("modes") {
            c.modes = num("modes", x)?;
        }
        c.quad_order = match v.get("quad_order") {
            Some(x) => num("quad_order", x)?,
            None => 4 * c.modes,
        };
        if let Some(x) = v.get("t_max") {
            c.t_max = num("t_max", x)?;
        }
        if let Some(x) = v.get("t_steps") {
            c.t_steps = num("t_steps", x)?;
        }
        if let Some(x) = v.get("out_dir") {
            c.out_dir = PathBuf::from(x);
        }
        if let Some(x) = v.get("seed") {
            c.seed = num("seed", x)?;
        }
        if let Some(x) = v.get("checks") {
            c.checks = Some(x.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect());
        }
        if let Some(x) = v.get("perturb_mu2") {
            c.perturb_mu2 = num("perturb_mu2", x)?;
        }
        if let Some(x) = v.get("riesz_points") {
            c.riesz_points = num("riesz_points", x)?;
        }
        let t = &mut c.tolerances;
        for (key, slot) in [
            ("newton_tol", &mut t.newton_tol),
            ("monotone_tol", &mut t.monotone_tol),
            ("blowup", &mut t.blowup),
            ("eig_tol", &mut t.eig_tol),
            ("bracket_tol", &mut t.bracket_tol),
        ] {
            if let Some(x) = v.get(key) {
                *slot = num(key, x)?;
            }
        }
        if let Some(x) = v.get("newton_max_iter") {
            t.newton_max_iter = num("newton_max_iter", x)?;
        }
        if let Some(x) = v.get("monotone_max_iter") {
            t.monotone_max_iter = num("monotone_max_iter", x)?;
        }
        if let Some(x) = v.get("filter_order") {
            t.filter_order = num("filter_order", x)?;
        }
        c.validate()?;
        Ok(c)
    }
}

fn num<T: std::str::FromStr>(key: &str, text: &str) -> Result<T> {
    text.parse().map_err(|_| field(key, format!("cannot parse `{text}` as {}", std::any::type_name::<T>())))
}

/// Parses flat `key=value` text and fills defaults (`modes=256`, `quad_order=4·modes`).
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    ConfigBuilder::new().apply_text(text)?.build()
}

/// Persistent `(ν, k, j_{ν,k})` table.
///
/// Entries are revalidated with one Newton step when loaded; an order with any entry
/// that moves is dropped and recomputed on the next lookup. Unreadable files are
/// replaced on [`ZeroCache::save`].
#[derive(Debug, Default)]
pub struct ZeroCache {
    path: Option<PathBuf>,
    zeros: BTreeMap<u64, Vec<f64>>,
    computations: usize,
    dirty: bool,
}

impl ZeroCache {
    /// A cache that never touches the disk.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path` if it exists.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut cache = Self { path: Some(path.clone()), ..Self::default() };
        match fs::read_to_string(&path) {
            Ok(text) => match parse_zero_csv(&text) {
                Some(table) => {
                    for (bits, zs) in table {
                        match revalidate(f64::from_bits(bits), &zs) {
                            Some(v) => {
                                cache.zeros.insert(bits, v);
                            }
                            None => cache.dirty = true,
                        }
                    }
                }
                None => cache.dirty = true,
            },
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        Ok(cache)
    }

    /// Opens the file named by `FRAC_GELFAND_CACHE`, or an in-memory cache.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(CACHE_ENV) {
            Some(p) if !p.is_empty() => Self::open(PathBuf::from(p)),
            _ => Ok(Self::in_memory()),
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Number of zero-finding runs since the cache was opened.
    pub fn computations(&self) -> usize {
        self.computations
    }

    /// Cached zeros of `J_ν`, if at least `count` are stored.
    pub fn lookup(&self, nu: f64, count: usize) -> Option<&[f64]> {
        self.zeros.get(&nu.to_bits()).filter(|z| z.len() >= count).map(|z| &z[..count])
    }

    /// The first `count` zeros of `J_ν`, computing and storing them on a miss.
    pub fn zeros(&mut self, nu: f64, count: usize) -> Result<Vec<f64>> {
        if let Some(z) = self.lookup(nu, count) {
            return Ok(z.to_vec());
        }
        let z = specfun::bessel_j_zeros(BesselOrder::new(nu)?, count)?;
        self.computations += 1;
        self.zeros.insert(nu.to_bits(), z.clone());
        self.dirty = true;
        Ok(z)
    }

    /// Radial basis built from cached zeros.
    pub fn basis(&mut self, n: usize, s: f64, modes: usize, quad_order: usize) -> Result<BallBasis> {
        let nu = BesselOrder::<f64>::radial(n)?.value();
        let zeros = self.zeros(nu, modes)?;
        BallBasis::from_zeros(n, s, zeros, quad_order)
    }

    /// Writes the table if it changed since loading.
    pub fn save(&mut self) -> Result<()> {
        let Some(path) = &self.path else { return Ok(()) };
        if !self.dirty {
            return Ok(());
        }
        let mut text = String::from("nu,k,zero\n");
        for (bits, zs) in &self.zeros {
            for (k, z) in zs.iter().enumerate() {
                writeln!(text, "{},{},{}", fmt17(f64::from_bits(*bits)), k + 1, fmt17(*z)).unwrap();
            }
        }
        write_atomic(path, text.as_bytes())?;
        self.dirty = false;
        Ok(())
    }
}

/// `None` when the file is not a well-formed table with contiguous indices.
fn parse_zero_csv(text: &str) -> Option<BTreeMap<u64, Vec<f64>>> {
    let mut lines = text.lines();
    if lines.next()?.trim() != "nu,k,zero" {
        return None;
    }
    let mut table: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let nu: f64 = parts.next()?.parse().ok()?;
        let k: usize = parts.next()?.parse().ok()?;
        let z: f64 = parts.next()?.parse().ok()?;
        if parts.next().is_some() || !(nu >= 0.0) || !z.is_finite() {
            return None;
        }
        let list = table.entry(nu.to_bits()).or_default();
        if k != list.len() + 1 {
            return None;
        }
        list.push(z);
    }
    Some(table)
}

/// One Newton step per zero; `None` if any zero moves by more than `1e-12` relative or
/// the list is not increasing.
fn revalidate(nu: f64, zeros: &[f64]) -> Option<Vec<f64>> {
    let order = BesselOrder::new(nu).ok()?;
    if zeros.first().is_some_and(|&z| !(z > 0.0)) || zeros.windows(2).any(|w| !(w[1] > w[0])) {
        return None;
    }
    zeros
        .iter()
        .map(|&z| {
            let next = specfun::newton_step_zero(order, z);
            ((next - z).abs() <= 1e-12 * z).then_some(z)
        })
        .collect()
}

/// Scientific notation with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Basis of the config, built through the cache and with the fault hook applied.
pub fn config_basis(cfg: &ExperimentConfig, cache: &mut ZeroCache) -> Result<BallBasis> {
    let basis = cache.basis(cfg.n, cfg.s, cfg.modes, cfg.quad_order)?;
    if cfg.perturb_mu2 != 0.0 {
        return basis.with_perturbed_eigenvalue(2, cfg.perturb_mu2);
    }
    Ok(basis)
}

/// CSV table of branch points: `t, lambda, u0, nu1, h_norm, residual`.
pub fn branch_csv(basis: &BallBasis, branch: &Branch) -> String {
    let mut text = String::from("t,lambda,u0,nu1,h_norm,residual\n");
    for p in &branch.points {
        let row = [p.t, p.lambda, basis.eval_origin(&p.u), p.nu1, basis.h_norm(&p.u), p.residual];
        let cells: Vec<String> = row.iter().map(|&x| fmt17(x)).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    text
}

fn opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, |v| json!(v))
}

/// Result of [`run_branch`].
#[derive(Debug)]
pub struct BranchRun {
    pub branch: Branch,
    pub summary: Value,
    pub files: Vec<PathBuf>,
}

/// Continues the branch over the config's amplitude grid, brackets `λ*`, and writes
/// `branch.csv` and `summary.json` to `out_dir`.
pub fn run_branch(cfg: &ExperimentConfig, cache: &mut ZeroCache) -> Result<BranchRun> {
    let basis = config_basis(cfg, cache)?;
    cache.save()?;
    let f = cfg.nonlinearity()?;
    let solver = Solver::new(&basis, &f, cfg.tolerances);
    let mut failures = Vec::new();
    let branch = match solver.continue_branch(&cfg.t_grid()) {
        Ok(b) => b,
        Err(e) => {
            failures.push(format!("continuation: {e}"));
            Branch::default()
        }
    };
    if let Some(msg) = &branch.failure {
        failures.push(format!("continuation: {msg}"));
    }
    // no hint from the branch, so the bracket is independent of the fold
    let bracket = match solver.bisect_lambda_star(None) {
        Ok(b) => Some(b),
        Err(e) => {
            failures.push(format!("bisection: {e}"));
            None
        }
    };
    let fold = branch.fold.as_ref();
    let summary = json!({
        "lambda_star_lo": opt(bracket.map(|b| b.0)),
        "lambda_star_hi": opt(bracket.map(|b| b.1)),
        "fold_t": opt(fold.map(|p| p.t)),
        "fold_lambda": opt(fold.map(|p| p.lambda)),
        "extremal_u0": opt(fold.map(|p| basis.eval_origin(&p.u))),
        "critical_dim": regularity::critical_dimension(cfg.s),
        "decay_bound": regularity::decay_exponent_bound(cfg.n, cfg.s),
        "n": cfg.n,
        "s": cfg.s,
        "f_spec": cfg.f_spec,
        "modes": cfg.modes,
        "points": branch.points.len(),
        "failures": failures,
    });
    let csv_path = cfg.out_dir.join("branch.csv");
    let json_path = cfg.out_dir.join("summary.json");
    write_atomic(&csv_path, branch_csv(&basis, &branch).as_bytes())?;
    write_json(&json_path, &summary)?;
    Ok(BranchRun { branch, summary, files: vec![csv_path, json_path] })
}

/// Result of one named check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    /// `pass`, `fail` or `skipped`.
    pub status: String,
    /// Distance to the threshold; nonnegative on success.
    pub margin: Option<f64>,
    pub detail: String,
}

impl CheckOutcome {
    /// Passed or skipped.
    pub fn passed(&self) -> bool {
        self.status != "fail"
    }
}

/// Result of [`run_verify`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
    pub all_passed: bool,
}

/// Lazily traced branch shared by the branch-based checks.
struct BranchContext<'a> {
    basis: &'a BallBasis,
    f: &'a Nonlinearity,
    opts: SolverOptions,
    branch: Option<std::result::Result<Branch, String>>,
}

impl BranchContext<'_> {
    fn branch(&mut self) -> Result<&Branch> {
        if self.branch.is_none() {
            let solver = Solver::new(self.basis, self.f, self.opts);
            self.branch = Some(solver.trace_to_fold(&TraceOptions::default()).map_err(|e| e.to_string()));
        }
        match self.branch.as_ref().unwrap() {
            Ok(b) => Ok(b),
            Err(e) => Err(Error::NoConvergence { what: "branch trace", detail: e.clone() }),
        }
    }

    /// Branch points with `t > 0`.
    fn nontrivial(&mut self) -> Result<Vec<BranchPoint>> {
        Ok(self.branch()?.points.iter().filter(|p| p.t > 0.0).cloned().collect())
    }
}

/// Runs the configured checks and writes `verify.json`. Failing checks do not stop the
/// suite; the report says which ones failed.
pub fn run_verify(cfg: &ExperimentConfig, cache: &mut ZeroCache) -> Result<VerifyReport> {
    let names = cfg.check_list();
    let mut checks = Vec::with_capacity(names.len());
    if !names.is_empty() {
        let basis = config_basis(cfg, cache)?;
        cache.save()?;
        let f = cfg.nonlinearity()?;
        let mut ctx = BranchContext { basis: &basis, f: &f, opts: cfg.tolerances, branch: None };
        for name in &names {
            if cfg.s >= 1.0 && EXTENSION_CHECKS.contains(&name.as_str()) {
                checks.push(CheckOutcome {
                    name: name.clone(),
                    status: "skipped".into(),
                    margin: None,
                    detail: "the extension needs s < 1".into(),
                });
                continue;
            }
            let outcome = match run_check(name, cfg, cache, &mut ctx) {
                Ok((margin, detail)) => CheckOutcome {
                    name: name.clone(),
                    status: if margin >= 0.0 { "pass" } else { "fail" }.into(),
                    margin: Some(margin),
                    detail,
                },
                Err(e) => CheckOutcome { name: name.clone(), status: "fail".into(), margin: None, detail: e.to_string() },
            };
            checks.push(outcome);
        }
        cache.save()?;
    }
    let all_passed = checks.iter().all(CheckOutcome::passed);
    let report = VerifyReport { checks, all_passed };
    write_json(&cfg.out_dir.join("verify.json"), &report)?;
    Ok(report)
}

/// `(margin, detail)` for one check.
fn run_check(name: &str, cfg: &ExperimentConfig, cache: &mut ZeroCache, ctx: &mut BranchContext) -> Result<(f64, String)> {
    let basis = ctx.basis;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    match name {
        "flux_constant" => {
            let mut worst: f64 = 0.0;
            for s in [0.25, 0.5, 0.75] {
                let exact = extension::flux_constant(s)?;
                for k in [0, 1, 4] {
                    let est = extension::flux_limit(s, basis.eigenvalues()[k])?;
                    worst = worst.max((est.value - exact).abs() / exact);
                }
            }
            Ok((1e-5 - worst, format!("max relative error {worst:.3e} (tolerance 1e-5)")))
        }
        "energy_identity" => {
            let c = extension::flux_constant(basis.order())?;
            let mut worst: f64 = 0.0;
            for _ in 0..3 {
                let mut coeffs = vec![0.0; basis.modes()];
                for x in coeffs.iter_mut().take(8) {
                    *x = rng.gen_range(-1.0..1.0);
                }
                let u = basis.coeffs(coeffs)?;
                let energy = ExtensionField::new(basis, u.clone())?.energy(&VerticalQuad::default())?;
                let want = c * basis.h_norm(&u).powi(2);
                worst = worst.max((energy - want).abs() / want);
            }
            Ok((1e-4 - worst, format!("max relative error {worst:.3e} (tolerance 1e-4)")))
        }
        "max_principle" => {
            let mut lowest = f64::INFINITY;
            for _ in 0..20 {
                let bumps: Vec<(f64, f64, f64)> = (0..3)
                    .map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.05..0.5)))
                    .collect();
                let h = basis.analyze(|r| bumps.iter().map(|(a, c, w)| a * (-((r - c) / w).powi(2)).exp()).sum());
                let u = basis.inv_frac_laplacian(&h);
                for i in 0..200 {
                    lowest = lowest.min(basis.eval(&u, i as f64 / 199.0));
                }
            }
            Ok((lowest + 1e-8, format!("minimum {lowest:.3e} over 20 right-hand sides (floor -1e-8)")))
        }
        "orthonormality" => {
            let g = basis.gram_matrix();
            let k = basis.modes();
            let err = (0..k)
                .flat_map(|i| (0..k).map(move |j| (i, j)))
                .map(|(i, j)| (g[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
                .fold(0.0, f64::max);
            Ok((1e-8 - err, format!("max |G - I| = {err:.3e} (tolerance 1e-8)")))
        }
        "riesz_bound" => {
            let points = ctx.nontrivial()?;
            let mut worst = f64::NEG_INFINITY;
            for p in &points {
                let check = regularity::riesz_check(basis, &p.u, p.lambda, ctx.f, cfg.riesz_points, 1e-3)?;
                worst = worst.max(check.max_ratio);
            }
            Ok((1.0 + 1e-3 - worst, format!("max ratio {worst:.6} over {} points (limit 1.001)", points.len())))
        }
        "lemma_a_grid" => {
            let mut margin = f64::INFINITY;
            let mut err: f64 = 0.0;
            for r in regularity::lemma_a_grid(&[2, 3, 5, 10], &[0.25, 0.5, 0.75]) {
                let r = r?;
                margin = margin.min(r.margin);
                err = err.max(r.a.relative_error());
            }
            Ok((
                margin.min(1e-4 - err),
                format!("smallest margin {margin:.6}, largest A relative error {err:.3e} (tolerance 1e-4)"),
            ))
        }
        "boundary_rate" => {
            let mut margin = f64::INFINITY;
            let mut detail = Vec::new();
            for s in [0.25, 0.5, 0.75] {
                let b = cache.basis(basis.dim(), s, basis.modes(), basis.quadrature().nodes.len())?;
                let rate = regularity::boundary_decay_rate(&b, &b.torsion())?;
                let floor = (2.0 * s).min(1.0) - 0.05;
                margin = margin.min(rate - floor);
                detail.push(format!("s={s}: {rate:.4} (floor {floor:.2})"));
            }
            Ok((margin, detail.join(", ")))
        }
        "radial_monotonicity" => {
            let branch = ctx.branch()?;
            let slope = branch
                .points
                .iter()
                .map(|p| branch::max_radial_slope(basis, &p.u, 100))
                .fold(f64::NEG_INFINITY, f64::max);
            Ok((1e-8 - slope, format!("max du/drho {slope:.3e} (limit 1e-8)")))
        }
        "weighted_key_estimate" => {
            let (a, b) = nearest_to_fold(ctx.branch()?)?;
            let spec = CutoffSpec { alpha: CutoffSpec::alpha_limit(basis.dim()) - 0.1, epsilon: 0.01, r: 2.0 };
            let q = VerticalQuad::default();
            let ia = ExtensionField::new(basis, a.u.clone())?.weighted_vrho_integral(&spec, &q)?;
            let ib = ExtensionField::new(basis, b.u.clone())?.weighted_vrho_integral(&spec, &q)?;
            let ratio = ia.max(ib) / ia.min(ib);
            Ok((2.0 - ratio, format!("growth factor {ratio:.4} between t={:.4} and t={:.4} (limit 2)", a.t, b.t)))
        }
        "stability_weighted_inequality" => {
            let stable: Vec<BranchPoint> = ctx.nontrivial()?.into_iter().filter(|p| p.nu1 > 0.0).collect();
            let picks = sample_evenly(&stable, 5);
            if picks.is_empty() {
                return Err(Error::Domain("no stable branch points".into()));
            }
            let spec = CutoffSpec { alpha: 1.0, epsilon: 0.05, r: 2.0 };
            let mut worst = f64::INFINITY;
            for p in &picks {
                let (lhs, rhs) = ExtensionField::new(basis, p.u.clone())?
                    .stability_weighted_inequality(&spec, &VerticalQuad::default())?;
                worst = worst.min((lhs - rhs) / rhs.abs().max(f64::MIN_POSITIVE));
            }
            Ok((worst + 1e-6, format!("smallest relative margin {worst:.4e} at {} stable points (floor -1e-6)", picks.len())))
        }
        "exp_decay_y" => {
            let floor = 0.9 * basis.eigenvalues()[0].sqrt();
            let mut lowest = f64::INFINITY;
            for p in ctx.nontrivial()? {
                lowest = lowest.min(ExtensionField::new(basis, p.u.clone())?.axis_decay_rate(1.0, 10.0)?);
            }
            Ok((lowest - floor, format!("slowest axis decay rate {lowest:.4} (floor {floor:.4})")))
        }
        "phi1_identity" => {
            let solver = Solver::new(basis, ctx.f, ctx.opts);
            let worst = ctx.nontrivial()?.iter().map(|p| solver.phi1_identity_defect(p)).fold(0.0, f64::max);
            Ok((1e-8 - worst, format!("max relative defect {worst:.3e} (tolerance 1e-8)")))
        }
        other => Err(field("checks", format!("unknown check `{other}`"))),
    }
}

/// The two grid points whose `λ` is closest to the fold value.
fn nearest_to_fold(branch: &Branch) -> Result<(&BranchPoint, &BranchPoint)> {
    let star = branch::extremal_solution(branch)?.lambda;
    let mut idx: Vec<usize> = (0..branch.points.len()).collect();
    idx.sort_by(|&i, &j| {
        let di = (branch.points[i].lambda - star).abs();
        let dj = (branch.points[j].lambda - star).abs();
        di.total_cmp(&dj)
    });
    if idx.len() < 2 {
        return Err(Error::NoFold);
    }
    Ok((&branch.points[idx[0]], &branch.points[idx[1]]))
}

/// Up to `count` entries at evenly spread indices.
fn sample_evenly<T: Clone>(items: &[T], count: usize) -> Vec<T> {
    if items.len() <= count {
        return items.to_vec();
    }
    (0..count).map(|i| items[i * (items.len() - 1) / (count - 1)].clone()).collect()
}

/// Traces the branch to its fold and brackets `λ*` both ways; writes `lambda_star.json`.
pub fn run_lambda_star(cfg: &ExperimentConfig, cache: &mut ZeroCache) -> Result<Value> {
    let basis = config_basis(cfg, cache)?;
    cache.save()?;
    let f = cfg.nonlinearity()?;
    let solver = Solver::new(&basis, &f, cfg.tolerances);
    let est = solver.estimate_lambda_star(&TraceOptions::default())?;
    let out = json!({
        "n": cfg.n,
        "s": cfg.s,
        "f_spec": cfg.f_spec,
        "modes": cfg.modes,
        "lambda_star_lo": est.lo,
        "lambda_star_hi": est.hi,
        "fold_lambda": est.fold_lambda,
        "fold_t": est.fold_t,
        "consistent": est.consistent(cfg.tolerances.bracket_tol),
    });
    write_json(&cfg.out_dir.join("lambda_star.json"), &out)?;
    Ok(out)
}

/// `critical_dimension` and `decay_exponent_bound` over `n ∈ 2..=20`, `s ∈ {0.1, …, 1}`,
/// written to `table.csv` and returned as text.
pub fn run_table(cfg: &ExperimentConfig) -> Result<String> {
    let mut text = String::from("n,s,critical_dim,decay_bound,supercritical\n");
    for n in 2..=20usize {
        for i in 1..=10 {
            let s = i as f64 / 10.0;
            let crit = regularity::critical_dimension(s);
            let bound = regularity::decay_exponent_bound(n, s);
            writeln!(text, "{n},{},{},{},{}", fmt17(s), fmt17(crit), fmt17(bound), n as f64 >= crit).unwrap();
        }
    }
    write_atomic(&cfg.out_dir.join("table.csv"), text.as_bytes())?;
    Ok(text)
}

/// Traces to the fold, refines `u*(0)` under `K → 2K`, and writes `extremal.json` with
/// the regularity report and `extremal_profile.csv` with `ρ, u*(ρ)`.
pub fn run_extremal(cfg: &ExperimentConfig, cache: &mut ZeroCache) -> Result<Value> {
    let basis = config_basis(cfg, cache)?;
    cache.save()?;
    let f = cfg.nonlinearity()?;
    let solver = Solver::new(&basis, &f, cfg.tolerances);
    let branch = solver.trace_to_fold(&TraceOptions::default())?;
    let star = branch::extremal_solution(&branch)?;
    let fine_basis = cache.basis(cfg.n, cfg.s, 2 * cfg.modes, 2 * cfg.quad_order)?;
    cache.save()?;
    let fine_solver = Solver::new(&fine_basis, &f, cfg.tolerances);
    let fine_branch = fine_solver.trace_to_fold(&TraceOptions::default())?;
    let fine = branch::extremal_solution(&fine_branch)?;
    let report = RegularityReport::build(&basis, &star.u, star.lambda, &f, 0)?;
    let mu = regularity::decay_exponent_bound(cfg.n, cfg.s) - 0.1;
    let envelope = (mu > 0.0).then(|| {
        let c = regularity::decay_envelope(|r| basis.eval(&star.u, r), mu, 1e-3, 0.3);
        let c_fine = regularity::decay_envelope(|r| fine_basis.eval(&fine.u, r), mu, 1e-3, 0.3);
        json!({ "mu": mu, "c": c, "c_fine": c_fine })
    });
    let out = json!({
        "n": cfg.n,
        "s": cfg.s,
        "f_spec": cfg.f_spec,
        "modes": cfg.modes,
        "lambda_star": star.lambda,
        "extremal_u0": basis.eval_origin(&star.u),
        "extremal_u0_fine": fine_basis.eval_origin(&fine.u),
        "lambda_star_fine": fine.lambda,
        "relative_change": (fine.t - star.t).abs() / fine.t.abs(),
        "decay_envelope": envelope.unwrap_or(Value::Null),
        "report": serde_json::to_value(&report)?,
    });
    let mut csv = String::from("rho,u\n");
    for i in 0..=400 {
        let r = i as f64 / 400.0;
        writeln!(csv, "{},{}", fmt17(r), fmt17(basis.eval(&star.u, r))).unwrap();
    }
    write_atomic(&cfg.out_dir.join("extremal_profile.csv"), csv.as_bytes())?;
    write_json(&cfg.out_dir.join("extremal.json"), &out)?;
    Ok(out)
}
