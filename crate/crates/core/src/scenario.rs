//! Scenario configuration and orchestration.
//!
//! A scenario is a TOML file naming one [`ScenarioKind`] plus the sections it
//! needs. [`run_scenario`] writes CSV series and a JSON report into an output
//! directory. Reports contain only deterministic quantities; wall-clock
//! timings go to a separate `timings.json`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bkw::{bkw_derivative_distribution, bkw_distribution, bkw_fourth_moment, fourth_moment};
use crate::dvm::{enumerate_collisions, Lattice};
use crate::error::{Error, Result};
use crate::euler::{evolve_euler, gamma_for_dim, ExactRiemann, FluidState, Primitive};
use crate::grid::{
    compute_moments, conservative_maxwellian, dealiasing_ratio, entropy_with_tolerance, Distribution, Moments,
    VelocityGrid,
};
use crate::integrators::{
    ap_diagnostic, equilibrium_distance, BgkOperator, CollisionOperator, DvmOperator, PenaltyRule, StiffProblem,
    Stepper,
};
use crate::spectral::{
    collide_direct, collision_quadrature_oracle, compute_kernel_modes, compute_kernel_modes_cached,
    decompose_kernel, forward_transform, rank_for_tolerance, CollisionKernel, FastCollision, KernelModes,
    SpectralCoefficients, ORACLE_MAX_N,
};
use crate::transport::{advect, l1_distance, relative_l1, split_step, write_profile_csv, Boundary, KineticField, SpatialMesh};

/// Kernel tables larger than this need `force`.
pub const KERNEL_TABLE_BYTES_LIMIT: usize = 1 << 30;

/// Negative values down to this fraction of `max |f|` are read as zero when
/// recording entropy; spectral solutions undershoot slightly in the tails.
pub const DEFAULT_ENTROPY_NEGATIVE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    HomogeneousRelaxation,
    BkwVerification,
    SodKinetic,
    KernelModeBuild,
    ConvergenceStudy,
    ApSweep,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    #[serde(default)]
    pub seed: u64,
    pub grid: GridConfig,
    #[serde(default = "default_kernel")]
    pub kernel: CollisionKernel,
    #[serde(default)]
    pub collision: CollisionConfig,
    pub time: Option<TimeConfig>,
    pub initial: Option<InitialConfig>,
    pub space: Option<SpaceConfig>,
    pub bkw: Option<BkwConfig>,
    pub convergence: Option<ConvergenceConfig>,
    pub ap: Option<ApConfig>,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_kernel() -> CollisionKernel {
    CollisionKernel::Maxwell
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub n_per_dim: usize,
    pub half_width: f64,
    /// `R` in mapped units. Mutually exclusive with `trunc_ratio`.
    pub trunc_radius: Option<f64>,
    /// `R = trunc_ratio * pi`.
    pub trunc_ratio: Option<f64>,
}

fn default_dim() -> usize {
    2
}

impl GridConfig {
    fn radius(&self) -> Result<f64> {
        match (self.trunc_radius, self.trunc_ratio) {
            (Some(_), Some(_)) => Err(cfg_err("grid.trunc_radius", "give either trunc_radius or trunc_ratio, not both")),
            (Some(r), None) => Ok(r),
            (None, Some(q)) => Ok(q * PI),
            (None, None) => Ok(dealiasing_ratio() * PI),
        }
    }

    fn with_n(&self, n: usize, field: &str) -> Result<VelocityGrid> {
        VelocityGrid::new(self.dim, n, self.half_width, self.radius()?).map_err(|e| field_err(field, e))
    }

    pub fn build(&self) -> Result<VelocityGrid> {
        self.with_n(self.n_per_dim, "grid.n_per_dim")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CollisionMethod {
    #[default]
    Direct,
    Fast,
    Dvm,
    Bgk,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollisionConfig {
    #[serde(default)]
    pub method: CollisionMethod,
    /// Separation rank for `fast`; defaults to the rank meeting `rank_tolerance`.
    pub rank: Option<usize>,
    #[serde(default = "default_rank_tolerance")]
    pub rank_tolerance: f64,
    /// DVM cross section `S`.
    #[serde(default = "one")]
    pub cross_section: f64,
    /// BGK surrogate penalty (method `bgk`).
    #[serde(default)]
    pub bgk_penalty: PenaltyRule,
    /// Angular refinement level of the kernel-mode quadrature.
    pub level: Option<u32>,
    /// Directory for the kernel-mode cache; no caching when absent.
    pub cache_dir: Option<PathBuf>,
}

impl Default for CollisionConfig {
    fn default() -> Self {
        Self {
            method: CollisionMethod::Direct,
            rank: None,
            rank_tolerance: default_rank_tolerance(),
            cross_section: 1.0,
            bgk_penalty: PenaltyRule::default(),
            level: None,
            cache_dir: None,
        }
    }
}

fn default_rank_tolerance() -> f64 {
    1e-10
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub stepper: Stepper,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one")]
    pub epsilon: f64,
    #[serde(default)]
    pub penalty: PenaltyRule,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    /// `rho` times a product of 1D Gaussians with per-axis temperatures.
    AnisotropicGaussian {
        #[serde(default = "one")]
        density: f64,
        #[serde(default)]
        velocity: Vec<f64>,
        temperature: Vec<f64>,
    },
    /// The BKW profile at time `t0`.
    Bkw {
        #[serde(default)]
        t0: f64,
    },
    /// Unit Maxwellian times `1 + amplitude * p(v)`, `p` a seeded random
    /// combination of `exp(-|v|^2/4)`-damped low-order monomials with
    /// `|p| <= 1`.
    PerturbedMaxwellian { amplitude: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidStateConfig {
    pub rho: f64,
    #[serde(default)]
    pub w: f64,
    pub p: f64,
}

impl From<&FluidStateConfig> for Primitive {
    fn from(s: &FluidStateConfig) -> Self {
        Primitive { rho: s.rho, w: s.w, p: s.p }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub n_cells: usize,
    #[serde(default)]
    pub x_min: f64,
    #[serde(default = "one")]
    pub x_max: f64,
    #[serde(default = "free_outflow")]
    pub boundary: Boundary,
    #[serde(default = "half")]
    pub discontinuity: f64,
    pub left: FluidStateConfig,
    pub right: FluidStateConfig,
    /// Fraction of the transport CFL limit used per step.
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Cells of the fine Euler run compared against the exact solution.
    #[serde(default = "default_reference_cells")]
    pub euler_reference_cells: usize,
}

fn free_outflow() -> Boundary {
    Boundary::FreeOutflow
}

fn half() -> f64 {
    0.5
}

fn default_cfl() -> f64 {
    0.9
}

fn default_reference_cells() -> usize {
    400
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BkwConfig {
    /// Grid size of the quadrature-oracle gate at `t = 0`.
    #[serde(default = "default_gate_n")]
    pub gate_n_per_dim: usize,
    #[serde(default = "default_gate_angles")]
    pub gate_n_angle: usize,
}

impl Default for BkwConfig {
    fn default() -> Self {
        Self { gate_n_per_dim: default_gate_n(), gate_n_angle: default_gate_angles() }
    }
}

fn default_gate_n() -> usize {
    24
}

fn default_gate_angles() -> usize {
    96
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// Grid sizes of the spectral self-convergence study.
    pub sizes: Vec<usize>,
    /// Reference grid size (finest).
    pub reference: usize,
    /// Anisotropic Gaussian temperatures of the test state.
    #[serde(default = "default_conv_temperature")]
    pub temperature: Vec<f64>,
    /// DVM grid sizes compared against the spectral operator (VHS `alpha = 1`).
    #[serde(default)]
    pub dvm_sizes: Vec<usize>,
    /// Cell counts of the upwind-transport refinement study.
    #[serde(default)]
    pub transport_cells: Vec<usize>,
}

fn default_conv_temperature() -> Vec<f64> {
    vec![1.0, 0.5]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApConfig {
    pub epsilons: Vec<f64>,
    #[serde(default = "one_step")]
    pub steps: usize,
    #[serde(default = "default_ap_steppers")]
    pub steppers: Vec<Stepper>,
}

fn one_step() -> usize {
    1
}

fn default_ap_steppers() -> Vec<Stepper> {
    vec![Stepper::PenalizedImex, Stepper::Rk4]
}

/// Optional pass/fail thresholds recorded in the report.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    pub max_fourth_moment_error: Option<f64>,
    pub max_gate_residual: Option<f64>,
    /// Largest per-step entropy increase relative to `|H|`.
    pub max_entropy_increase: Option<f64>,
    pub max_final_equilibrium_distance: Option<f64>,
    pub max_kinetic_euler_l1: Option<f64>,
    pub max_euler_exact_l1: Option<f64>,
    /// Equilibrium distance after one stiff step at the smallest `eps`.
    pub max_stiff_equilibrium_distance: Option<f64>,
    /// Require the explicit stepper to be flagged unstable at the smallest `eps`.
    pub expect_explicit_blowup: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Series cadence in steps.
    #[serde(default = "one_step")]
    pub every: usize,
    /// Output directory; the `--out-dir` flag takes precedence.
    pub dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub write_final: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { every: 1, dir: None, write_final: true }
    }
}

fn yes() -> bool {
    true
}

fn cfg_err(field: &str, reason: impl Into<String>) -> Error {
    Error::Config { field: field.to_string(), reason: reason.into() }
}

fn field_err(field: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { reason, .. } => cfg_err(field, reason),
        other => cfg_err(field, other.to_string()),
    }
}

fn need<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T> {
    section.as_ref().ok_or_else(|| cfg_err(name, "section is required for this scenario kind"))
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(cfg_err(field, format!("must be positive, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = msg
                .strip_prefix("unknown field `")
                .and_then(|r| r.split('`').next())
                .map_or_else(|| "config".to_string(), String::from);
            cfg_err(&field, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Checks every parameter against the preconditions of the module that
    /// will consume it, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid.build()?;
        self.kernel.validate().map_err(|e| field_err("kernel", e))?;
        positive("collision.cross_section", self.collision.cross_section)?;
        positive("collision.rank_tolerance", self.collision.rank_tolerance)?;
        self.collision.bgk_penalty.validate().map_err(|e| field_err("collision.bgk_penalty", e))?;
        if self.collision.rank == Some(0) {
            return Err(cfg_err("collision.rank", "must be at least 1"));
        }
        if self.output.every == 0 {
            return Err(cfg_err("output.every", "must be at least 1"));
        }
        if let Some(t) = &self.time {
            positive("time.dt", t.dt)?;
            positive("time.epsilon", t.epsilon)?;
            if !(t.t_end >= 0.0 && t.t_end.is_finite()) {
                return Err(cfg_err("time.t_end", format!("must be finite and >= 0, got {}", t.t_end)));
            }
            t.penalty.validate().map_err(|e| field_err("time.penalty", e))?;
        }
        if let Some(InitialConfig::AnisotropicGaussian { density, velocity, temperature }) = &self.initial {
            positive("initial.density", *density)?;
            if temperature.len() != grid.dim() || temperature.iter().any(|t| !(*t > 0.0)) {
                return Err(cfg_err("initial.temperature", format!("need {} positive entries", grid.dim())));
            }
            if !velocity.is_empty() && velocity.len() != grid.dim() {
                return Err(cfg_err("initial.velocity", format!("need {} entries", grid.dim())));
            }
        }
        if let Some(InitialConfig::PerturbedMaxwellian { amplitude }) = &self.initial {
            if !(0.0..1.0).contains(amplitude) {
                return Err(cfg_err("initial.amplitude", "must lie in [0, 1)"));
            }
        }
        if let Some(s) = &self.space {
            SpatialMesh::new(s.n_cells, s.x_min, s.x_max, s.boundary).map_err(|e| field_err("space.n_cells", e))?;
            if !(s.cfl > 0.0 && s.cfl <= 1.0) {
                return Err(cfg_err("space.cfl", "must lie in (0, 1]"));
            }
            for (name, st) in [("space.left", &s.left), ("space.right", &s.right)] {
                if !(st.rho > 0.0 && st.p > 0.0) {
                    return Err(cfg_err(name, "density and pressure must be positive"));
                }
            }
            if s.euler_reference_cells < 2 {
                return Err(cfg_err("space.euler_reference_cells", "must be >= 2"));
            }
        }
        if let Some(b) = &self.bkw {
            self.grid.with_n(b.gate_n_per_dim, "bkw.gate_n_per_dim")?;
            if b.gate_n_angle < 2 {
                return Err(cfg_err("bkw.gate_n_angle", "must be >= 2"));
            }
        }
        if let Some(c) = &self.convergence {
            if c.sizes.is_empty() {
                return Err(cfg_err("convergence.sizes", "must not be empty"));
            }
            for n in c.sizes.iter().chain(&c.dvm_sizes).chain(std::iter::once(&c.reference)) {
                self.grid.with_n(*n, "convergence.sizes")?;
            }
            if c.sizes.windows(2).any(|w| w[1] <= w[0]) || c.sizes.iter().any(|&n| n >= c.reference) {
                return Err(cfg_err("convergence.sizes", "must increase strictly and stay below reference"));
            }
            if c.transport_cells.iter().any(|&n| n < 2) {
                return Err(cfg_err("convergence.transport_cells", "each entry must be >= 2"));
            }
        }
        if let Some(a) = &self.ap {
            if a.epsilons.is_empty() || a.epsilons.iter().any(|e| !(*e > 0.0)) {
                return Err(cfg_err("ap.epsilons", "need at least one positive value"));
            }
            if a.steps == 0 {
                return Err(cfg_err("ap.steps", "must be >= 1"));
            }
        }
        match self.kind {
            ScenarioKind::HomogeneousRelaxation => {
                need(&self.time, "time")?;
                need(&self.initial, "initial")?;
            }
            ScenarioKind::BkwVerification => {
                need(&self.time, "time")?;
                if grid.dim() != 2 {
                    return Err(cfg_err("grid.dim", "BKW solution is two-dimensional"));
                }
            }
            ScenarioKind::SodKinetic => {
                need(&self.time, "time")?;
                need(&self.space, "space")?;
            }
            ScenarioKind::KernelModeBuild => {}
            ScenarioKind::ConvergenceStudy => {
                need(&self.convergence, "convergence")?;
            }
            ScenarioKind::ApSweep => {
                need(&self.time, "time")?;
                need(&self.ap, "ap")?;
                need(&self.initial, "initial")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Overrides resource guards (oracle size, kernel-table memory).
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.to_string(), value, limit, passed: value <= limit }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub results: Value,
    pub checks: Vec<Check>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// One row of an error-versus-resolution table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub error: f64,
    /// `log(e_prev / e) / log(n / n_prev)`; absent on the first row.
    pub order: Option<f64>,
}

/// Attaches observed orders to `(n, error)` pairs.
pub fn convergence_report(ns: &[usize], errors: &[f64]) -> Vec<ConvergenceRow> {
    ns.iter()
        .zip(errors)
        .enumerate()
        .map(|(i, (&n, &error))| {
            let order = (i > 0).then(|| (errors[i - 1] / error).ln() / (n as f64 / ns[i - 1] as f64).ln());
            ConvergenceRow { n, error, order }
        })
        .collect()
}

struct Outputs {
    dir: PathBuf,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn create(&self, name: &str) -> Result<(BufWriter<File>, PathBuf)> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok((BufWriter::new(file), path))
    }

    fn json(&self, name: &str, value: &impl Serialize) -> Result<()> {
        let (mut w, path) = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))
    }

    fn csv(&self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let (mut w, path) = self.create(name)?;
        let io = |e| Error::io(&path, e);
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for r in rows {
            let line: Vec<String> = r.iter().map(|x| format!("{x:.17e}")).collect();
            writeln!(w, "{}", line.join(",")).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

struct Timings(Vec<(String, f64)>);

impl Timings {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f()?;
        self.0.push((name.to_string(), t.elapsed().as_secs_f64()));
        Ok(out)
    }

    fn to_json(&self) -> Value {
        Value::Object(self.0.iter().map(|(k, v)| (k.clone(), json!(v))).collect())
    }
}

fn kernel_modes(cfg: &ScenarioConfig, grid: &VelocityGrid, kernel: CollisionKernel, opts: RunOptions) -> Result<KernelModes> {
    let width = 2 * grid.max_mode() + 1;
    let m = width.pow(grid.dim() as u32);
    let bytes = m.saturating_mul(m).saturating_mul(8);
    if bytes > KERNEL_TABLE_BYTES_LIMIT && !opts.force {
        return Err(Error::ResourceGuard(format!(
            "kernel-mode table for n_per_dim = {} needs {} MiB",
            grid.n_per_dim(),
            bytes >> 20
        )));
    }
    match &cfg.collision.cache_dir {
        Some(dir) => compute_kernel_modes_cached(grid, kernel, cfg.collision.level, dir),
        None => compute_kernel_modes(grid, kernel, cfg.collision.level),
    }
}

fn build_operator(
    cfg: &ScenarioConfig,
    grid: &VelocityGrid,
    opts: RunOptions,
) -> Result<(Box<dyn CollisionOperator>, Value)> {
    Ok(match cfg.collision.method {
        CollisionMethod::Direct => {
            let km = kernel_modes(cfg, grid, cfg.kernel, opts)?;
            let info = json!({ "method": "direct", "level": km.level(), "level_check": km.level_check() });
            (Box::new(km), info)
        }
        CollisionMethod::Fast => {
            let km = kernel_modes(cfg, grid, cfg.kernel, opts)?;
            let rank = match cfg.collision.rank {
                Some(r) => r,
                None => rank_for_tolerance(&km, cfg.collision.rank_tolerance)?,
            };
            let sk = decompose_kernel(&km, rank).map_err(|e| field_err("collision.rank", e))?;
            let info = json!({
                "method": "fast",
                "level": km.level(),
                "rank": rank,
                "reconstruction_error": sk.reconstruction_error(),
            });
            (Box::new(FastCollision::new(sk)), info)
        }
        CollisionMethod::Dvm => {
            let lattice = Lattice::from_grid(grid)?;
            let table = enumerate_collisions(&lattice, cfg.collision.cross_section)?;
            let info = json!({ "method": "dvm", "quadruples": table.quadruples().len() });
            (Box::new(DvmOperator::new(table)?), info)
        }
        CollisionMethod::Bgk => {
            let info = json!({ "method": "bgk", "penalty": cfg.collision.bgk_penalty });
            (Box::new(BgkOperator { grid: *grid, penalty: cfg.collision.bgk_penalty }), info)
        }
    })
}

fn initial_state(cfg: &ScenarioConfig, grid: &VelocityGrid) -> Result<Distribution> {
    let init = need(&cfg.initial, "initial")?;
    let d = grid.dim();
    match init {
        InitialConfig::AnisotropicGaussian { density, velocity, temperature } => {
            let u = if velocity.is_empty() { vec![0.0; d] } else { velocity.clone() };
            let norm = density / temperature.iter().map(|t| 2.0 * PI * t).product::<f64>().sqrt();
            Ok(Distribution::from_fn(*grid, |v| {
                norm * (0..d).map(|a| (-(v[a] - u[a]).powi(2) / (2.0 * temperature[a])).exp()).product::<f64>()
            }))
        }
        InitialConfig::Bkw { t0 } => bkw_distribution(grid, *t0).map_err(|e| field_err("initial.t0", e)),
        InitialConfig::PerturbedMaxwellian { amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            // Monomials up to degree 2 in each coordinate.
            let coeffs: Vec<f64> = (0..3usize.pow(d as u32)).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let basis = |v: &[f64; 3]| -> f64 {
                let damp = (-(0..d).map(|a| v[a] * v[a]).sum::<f64>() / 4.0).exp();
                let mut s = 0.0;
                for (idx, c) in coeffs.iter().enumerate() {
                    let mut term = *c;
                    let mut k = idx;
                    for a in 0..d {
                        term *= (v[a] / 2.0).powi((k % 3) as i32);
                        k /= 3;
                    }
                    s += term;
                }
                (s * damp).tanh()
            };
            let m = conservative_maxwellian(&Moments::new(d, 1.0, &vec![0.0; d], 1.0), grid)?;
            let mut f = m.clone();
            for (j, (x, v)) in f.values_mut().iter_mut().zip(grid.nodes()).enumerate() {
                *x = m.values()[j] * (1.0 + amplitude * basis(&v));
            }
            Ok(f)
        }
    }
}

/// Step counts and last-step length for `t_end` in steps of `dt`.
fn schedule(t_end: f64, dt: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut t = 0.0;
    while t < t_end * (1.0 - 1e-12) {
        let h = dt.min(t_end - t);
        out.push(h);
        t += h;
    }
    out
}

fn entropy_or_nan(f: &Distribution) -> f64 {
    entropy_with_tolerance(f, DEFAULT_ENTROPY_NEGATIVE_TOL * f.max_abs()).unwrap_or(f64::NAN)
}

struct HomogeneousRun {
    rows: Vec<Vec<f64>>,
    final_state: Distribution,
    initial_equilibrium_distance: f64,
    max_entropy_increase: f64,
    entropy_undefined: usize,
    max_density_drift: f64,
    max_energy_drift: f64,
    max_fourth_moment_error: Option<f64>,
}

fn evolve_homogeneous(
    f0: &Distribution,
    op: &dyn CollisionOperator,
    time: &TimeConfig,
    every: usize,
    analytic_m4: Option<&dyn Fn(f64) -> f64>,
) -> Result<HomogeneousRun> {
    let p = StiffProblem::new(time.epsilon, op, time.penalty)?;
    let c0 = f0.conserved();
    let mut f = f0.clone();
    let mut t = 0.0;
    let mut h_prev = entropy_or_nan(&f);
    let mut run = HomogeneousRun {
        rows: Vec::new(),
        final_state: f0.clone(),
        initial_equilibrium_distance: equilibrium_distance(f0),
        max_entropy_increase: f64::NEG_INFINITY,
        entropy_undefined: 0,
        max_density_drift: 0.0,
        max_energy_drift: 0.0,
        max_fourth_moment_error: analytic_m4.map(|_| 0.0),
    };
    let record = |run: &mut HomogeneousRun, t: f64, f: &Distribution, h: f64| {
        let c = f.conserved();
        let m4 = fourth_moment(f);
        let mut row = vec![t, c.density];
        row.extend_from_slice(&c.momentum[..f.grid().dim()]);
        row.extend([c.energy, h, equilibrium_distance(f), m4, f.min_value()]);
        if let Some(exact) = analytic_m4 {
            let e = exact(t);
            let err = (m4 - e).abs() / e.abs();
            row.extend([e, err]);
            run.max_fourth_moment_error = run.max_fourth_moment_error.map(|m| m.max(err));
        }
        run.rows.push(row);
    };
    record(&mut run, 0.0, &f, h_prev);
    for (s, dt) in schedule(time.t_end, time.dt).into_iter().enumerate() {
        f = time.stepper.step(&f, dt, &p)?;
        if !f.is_finite() {
            return Err(Error::InvalidMoments(format!("non-finite state after step {} ({:?})", s + 1, time.stepper)));
        }
        t += dt;
        let h = entropy_or_nan(&f);
        if h.is_nan() {
            run.entropy_undefined += 1;
        } else if !h_prev.is_nan() {
            run.max_entropy_increase = run.max_entropy_increase.max((h - h_prev) / h.abs().max(f64::MIN_POSITIVE));
        }
        h_prev = h;
        let c = f.conserved();
        run.max_density_drift = run.max_density_drift.max((c.density - c0.density).abs() / c0.density.abs());
        run.max_energy_drift = run.max_energy_drift.max((c.energy - c0.energy).abs() / c0.energy.abs());
        if (s + 1) % every == 0 {
            record(&mut run, t, &f, h);
        } else if let Some(exact) = analytic_m4 {
            // The moment error is tracked at every step, not only at records.
            let e = exact(t);
            let err = (fourth_moment(&f) - e).abs() / e.abs();
            run.max_fourth_moment_error = run.max_fourth_moment_error.map(|m| m.max(err));
        }
    }
    if run.rows.last().map(|r| r[0]) != Some(t) {
        let h = entropy_or_nan(&f);
        record(&mut run, t, &f, h);
    }
    run.final_state = f;
    Ok(run)
}

fn series_header(dim: usize, analytic: bool) -> Vec<&'static str> {
    let mut h = vec!["t", "density"];
    h.extend(["momentum_1", "momentum_2", "momentum_3"].iter().take(dim));
    h.extend(["energy", "entropy", "equilibrium_distance", "fourth_moment", "min_f"]);
    if analytic {
        h.extend(["fourth_moment_exact", "fourth_moment_rel_error"]);
    }
    h
}

fn write_final(out: &Outputs, cfg: &ScenarioConfig, f: &Distribution) -> Result<()> {
    if cfg.output.write_final {
        f.save_binary(&out.dir.join("final.kdst"))?;
        f.save_csv(&out.dir.join("final.csv"))?;
    }
    Ok(())
}

fn entropy_checks(checks: &mut Vec<Check>, cfg: &ScenarioConfig, run: &HomogeneousRun) {
    if let Some(limit) = cfg.checks.max_entropy_increase {
        // An undefined entropy value counts as a failure.
        let value = if run.entropy_undefined > 0 { f64::INFINITY } else { run.max_entropy_increase };
        checks.push(Check::at_most("entropy_increase", value, limit));
    }
}

fn homogeneous_results(run: &HomogeneousRun) -> Value {
    let last = run.rows.last().expect("at least the initial record");
    json!({
        "steps_recorded": run.rows.len(),
        "max_entropy_increase": run.max_entropy_increase,
        "entropy_nonincreasing": run.max_entropy_increase <= 0.0 && run.entropy_undefined == 0,
        "entropy_undefined_steps": run.entropy_undefined,
        "max_density_drift": run.max_density_drift,
        "max_energy_drift": run.max_energy_drift,
        "initial_equilibrium_distance": run.initial_equilibrium_distance,
        "final_equilibrium_distance": equilibrium_distance(&run.final_state),
        "final_time": last[0],
        "final_fourth_moment": fourth_moment(&run.final_state),
        "max_fourth_moment_error": run.max_fourth_moment_error,
    })
}

fn run_homogeneous(cfg: &ScenarioConfig, out: &Outputs, opts: RunOptions, tm: &mut Timings) -> Result<(Value, Vec<Check>)> {
    let grid = cfg.grid.build()?;
    let time = need(&cfg.time, "time")?;
    let (op, info) = tm.time("operator", || build_operator(cfg, &grid, opts))?;
    let f0 = initial_state(cfg, &grid)?;
    let run = tm.time("evolve", || evolve_homogeneous(&f0, op.as_ref(), time, cfg.output.every, None))?;
    out.csv("series.csv", &series_header(grid.dim(), false), &run.rows)?;
    write_final(out, cfg, &run.final_state)?;
    let mut checks = Vec::new();
    entropy_checks(&mut checks, cfg, &run);
    if let Some(limit) = cfg.checks.max_final_equilibrium_distance {
        checks.push(Check::at_most("final_equilibrium_distance", equilibrium_distance(&run.final_state), limit));
    }
    Ok((json!({ "operator": info, "run": homogeneous_results(&run) }), checks))
}

/// Relative L2 distance `||a - b|| / ||b||` of nodal values.
fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn run_bkw(cfg: &ScenarioConfig, out: &Outputs, opts: RunOptions, tm: &mut Timings) -> Result<(Value, Vec<Check>)> {
    let grid = cfg.grid.build()?;
    let time = need(&cfg.time, "time")?;
    let bkw = cfg.bkw.clone().unwrap_or_default();
    if cfg.kernel != CollisionKernel::Maxwell {
        return Err(cfg_err("kernel", "the BKW solution requires the Maxwell kernel"));
    }

    // Gate: the analytic time derivative must be a near-zero residual of the
    // independent quadrature oracle at t = 0.
    let gate_grid = cfg.grid.with_n(bkw.gate_n_per_dim, "bkw.gate_n_per_dim")?;
    let gate = tm.time("gate", || {
        let f = bkw_distribution(&gate_grid, 0.0)?;
        let d = bkw_derivative_distribution(&gate_grid, 0.0)?;
        if gate_grid.n_per_dim() > ORACLE_MAX_N && !opts.force {
            return Err(Error::ResourceGuard(format!(
                "oracle gate at n_per_dim = {} exceeds {ORACLE_MAX_N}; pass force",
                gate_grid.n_per_dim()
            )));
        }
        let q = collision_quadrature_oracle(&f, cfg.kernel, bkw.gate_n_angle, opts.force)?;
        Ok(rel_l2(q.values(), d.values()))
    })?;

    let (op, info) = tm.time("operator", || build_operator(cfg, &grid, opts))?;
    let t_start = match cfg.initial {
        Some(InitialConfig::Bkw { t0 }) => t0,
        None => 0.0,
        _ => return Err(cfg_err("initial", "bkw-verification starts from the BKW profile")),
    };
    let f0 = bkw_distribution(&grid, t_start)?;
    let exact = move |t: f64| bkw_fourth_moment(t + t_start);
    let run = tm.time("evolve", || evolve_homogeneous(&f0, op.as_ref(), time, cfg.output.every, Some(&exact)))?;
    out.csv("series.csv", &series_header(grid.dim(), true), &run.rows)?;
    write_final(out, cfg, &run.final_state)?;

    let m4_err = run.max_fourth_moment_error.unwrap_or(f64::NAN);
    let mut checks = Vec::new();
    if let Some(limit) = cfg.checks.max_gate_residual {
        checks.push(Check::at_most("gate_residual", gate, limit));
    }
    if let Some(limit) = cfg.checks.max_fourth_moment_error {
        checks.push(Check::at_most("fourth_moment_error", m4_err, limit));
    }
    entropy_checks(&mut checks, cfg, &run);
    let results = json!({
        "operator": info,
        "gate": { "n_per_dim": gate_grid.n_per_dim(), "n_angle": bkw.gate_n_angle, "relative_residual": gate },
        "run": homogeneous_results(&run),
    });
    Ok((results, checks))
}

fn write_profiles(out: &Outputs, name: &str, frames: &[(f64, Vec<Primitive>)], mesh: &SpatialMesh) -> Result<()> {
    let (mut w, path) = out.create(name)?;
    for (i, (t, states)) in frames.iter().enumerate() {
        write_profile_csv(&mut w, i == 0, *t, mesh, states).map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

fn run_sod(cfg: &ScenarioConfig, out: &Outputs, opts: RunOptions, tm: &mut Timings) -> Result<(Value, Vec<Check>)> {
    let grid = cfg.grid.build()?;
    let time = need(&cfg.time, "time")?;
    let space = need(&cfg.space, "space")?;
    let gamma = gamma_for_dim(grid.dim());
    let (left, right) = (Primitive::from(&space.left), Primitive::from(&space.right));
    let mesh = SpatialMesh::new(space.n_cells, space.x_min, space.x_max, space.boundary)?;
    let initial = |mesh: &SpatialMesh| -> Vec<Primitive> {
        mesh.centers().iter().map(|&x| if x < space.discontinuity { left } else { right }).collect()
    };

    let (op, info) = tm.time("operator", || build_operator(cfg, &grid, opts))?;
    let problem = StiffProblem::new(time.epsilon, op.as_ref(), time.penalty)?;
    let v_max = grid.axis_coords().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dt = time.dt.min(space.cfl * mesh.dx() / v_max);

    let mut field = KineticField::from_fluid(mesh, grid, &initial(&mesh))?;
    let mass0 = field.total_mass();
    let mut frames = vec![(0.0, field.fluid_profile()?)];
    let steps = schedule(time.t_end, dt);
    let n_steps = steps.len();
    tm.time("kinetic", || {
        let mut t = 0.0;
        for (s, h) in steps.into_iter().enumerate() {
            field = split_step(&field, h, &problem, time.stepper)?;
            t += h;
            if (s + 1) % cfg.output.every == 0 && s + 1 < n_steps {
                frames.push((t, field.fluid_profile()?));
            }
        }
        frames.push((t, field.fluid_profile()?));
        Ok(())
    })?;
    let kinetic = field.fluid_profile()?;
    write_profiles(out, "kinetic_profile.csv", &frames, &mesh)?;

    let euler = tm.time("euler", || {
        let s0 = FluidState::from_primitive(gamma, &initial(&mesh))?;
        evolve_euler(&s0, time.t_end, space.cfl, &mesh)
    })?;
    let euler_states = euler.primitives();
    write_profiles(out, "euler_profile.csv", &[(time.t_end, euler_states.clone())], &mesh)?;

    let fine = SpatialMesh::new(space.euler_reference_cells, space.x_min, space.x_max, space.boundary)?;
    let (euler_fine, exact) = tm.time("euler_reference", || {
        let s0 = FluidState::from_primitive(gamma, &initial(&fine))?;
        let s = evolve_euler(&s0, time.t_end, space.cfl, &fine)?;
        let exact = ExactRiemann::new(left, right, gamma)?.profile(&fine, space.discontinuity, time.t_end);
        Ok((s, exact))
    })?;
    write_profiles(out, "exact_profile.csv", &[(time.t_end, exact.clone())], &fine)?;

    let rho = |s: &[Primitive]| s.iter().map(|p| p.rho).collect::<Vec<_>>();
    let w = |s: &[Primitive]| s.iter().map(|p| p.w).collect::<Vec<_>>();
    let pr = |s: &[Primitive]| s.iter().map(|p| p.p).collect::<Vec<_>>();
    let kin_euler = relative_l1(&rho(&kinetic), &rho(&euler_states));
    let euler_exact = relative_l1(&euler_fine.densities(), &rho(&exact));

    let mut checks = Vec::new();
    if let Some(limit) = cfg.checks.max_kinetic_euler_l1 {
        checks.push(Check::at_most("kinetic_euler_density_relative_l1", kin_euler, limit));
    }
    if let Some(limit) = cfg.checks.max_euler_exact_l1 {
        checks.push(Check::at_most("euler_exact_density_relative_l1", euler_exact, limit));
    }
    let results = json!({
        "operator": info,
        "gamma": gamma,
        "dt": dt,
        "steps": n_steps,
        "cfl": field.cfl(dt),
        "mass_drift": (field.total_mass() - mass0).abs() / mass0,
        "kinetic_vs_euler": {
            "density_relative_l1": kin_euler,
            "velocity_l1": l1_distance(&w(&kinetic), &w(&euler_states), &mesh),
            "pressure_relative_l1": relative_l1(&pr(&kinetic), &pr(&euler_states)),
        },
        "euler_vs_exact": {
            "cells": space.euler_reference_cells,
            "density_relative_l1": euler_exact,
            "density_l1": l1_distance(&euler_fine.densities(), &rho(&exact), &fine),
        },
    });
    Ok((results, checks))
}

fn run_kernel_build(cfg: &ScenarioConfig, out: &Outputs, opts: RunOptions, tm: &mut Timings) -> Result<(Value, Vec<Check>)> {
    let grid = cfg.grid.build()?;
    let mut local = cfg.clone();
    if local.collision.cache_dir.is_none() {
        local.collision.cache_dir = Some(out.dir.join("kernel-cache"));
    }
    let km = tm.time("kernel_modes", || kernel_modes(&local, &grid, cfg.kernel, opts))?;
    let rank = match cfg.collision.rank {
        Some(r) => r,
        None => rank_for_tolerance(&km, cfg.collision.rank_tolerance)?,
    };
    let sk = tm.time("decomposition", || decompose_kernel(&km, rank).map_err(|e| field_err("collision.rank", e)))?;
    let mut ranks = Vec::new();
    let mut r = 1;
    while r <= km.n_modes() {
        ranks.push(r);
        r *= 2;
    }
    let sweep: Vec<Value> = ranks
        .iter()
        .map(|&r| {
            decompose_kernel(&km, r).map(|s| json!({ "rank": r, "reconstruction_error": s.reconstruction_error() }))
        })
        .collect::<Result<_>>()?;
    let sv: Vec<f64> = sk.singular_values().iter().take(64).copied().collect();
    let results = json!({
        "n_per_dim": grid.n_per_dim(),
        "trunc_radius": grid.trunc_radius(),
        "kernel": cfg.kernel,
        "n_modes": km.n_modes(),
        "level": km.level(),
        "level_check": km.level_check(),
        "rank": rank,
        "reconstruction_error": sk.reconstruction_error(),
        "rank_sweep": sweep,
        "leading_singular_values": sv,
        "cache_dir": local.collision.cache_dir,
    });
    Ok((results, Vec::new()))
}

fn gaussian_state(grid: &VelocityGrid, temperature: &[f64]) -> Distribution {
    let d = grid.dim();
    let norm = 1.0 / temperature.iter().map(|t| 2.0 * PI * t).product::<f64>().sqrt();
    Distribution::from_fn(*grid, |v| norm * (0..d).map(|a| (-v[a] * v[a] / (2.0 * temperature[a])).exp()).product::<f64>())
}

/// Relative L2 distance of two coefficient sets over the modes of `coarse`;
/// by Parseval this is the continuous L2 error of the trigonometric
/// interpolant restricted to the resolved band, plus the unresolved energy
/// of the reference.
fn coefficient_error(coarse: &SpectralCoefficients, reference: &SpectralCoefficients) -> f64 {
    let lc = coarse.layout();
    let lr = reference.layout();
    let mut num = 0.0;
    let mut den = 0.0;
    for idx in 0..lr.len() {
        let k = lr.mode(idx);
        let kk = &k[..reference.grid().dim()];
        let r = reference.get(kk);
        den += r.norm_sqr();
        num += match lc.index(kk) {
            Some(_) => (coarse.get(kk) - r).norm_sqr(),
            None => r.norm_sqr(),
        };
    }
    (num / den).sqrt()
}

fn run_convergence(cfg: &ScenarioConfig, out: &Outputs, opts: RunOptions, tm: &mut Timings) -> Result<(Value, Vec<Check>)> {
    let conv = need(&cfg.convergence, "convergence")?;
    if conv.temperature.len() != cfg.grid.dim {
        return Err(cfg_err("convergence.temperature", format!("need {} entries", cfg.grid.dim)));
    }

    // Spectral self-convergence of Q against the finest grid. Coefficients
    // are compared per mode; all grids share L and R, so a mode index means
    // the same frequency on every grid.
    let spectral = tm.time("spectral", || {
        let q_of = |n: usize| -> Result<SpectralCoefficients> {
            let g = cfg.grid.with_n(n, "convergence.sizes")?;
            let km = kernel_modes(cfg, &g, cfg.kernel, opts)?;
            let q = collide_direct(&gaussian_state(&g, &conv.temperature), &km)?;
            forward_transform(&q)
        };
        let reference = q_of(conv.reference)?;
        let errors = conv.sizes.iter().map(|&n| Ok(coefficient_error(&q_of(n)?, &reference))).collect::<Result<Vec<_>>>()?;
        Ok(convergence_report(&conv.sizes, &errors))
    })?;

    // DVM against the spectral operator on the same nodes, hard spheres in
    // 2D (VHS alpha = 1). A lattice pair with |C_ij| outputs spreads the
    // collision over the circle of radius |g|/2; S = 2 pi c h^2 matches the
    // angular integral of B = c |g| to leading order.
    let dvm = tm.time("dvm", || {
        let mut rows = Vec::new();
        for &n in &conv.dvm_sizes {
            let g = cfg.grid.with_n(n, "convergence.dvm_sizes")?;
            let c = 1.0 / (2.0 * PI);
            let kernel = CollisionKernel::Vhs { alpha: 1.0, c_alpha: c };
            let f = gaussian_state(&g, &conv.temperature);
            let q_spec = collide_direct(&f, &kernel_modes(cfg, &g, kernel, opts)?)?;
            let lattice = Lattice::from_grid(&g)?;
            let s = 2.0 * PI * c * g.spacing().powi(2);
            let table = enumerate_collisions(&lattice, s)?;
            let q_dvm = table.apply(f.values())?;
            let mass_defect = q_dvm.iter().sum::<f64>().abs() * g.cell_volume();
            // Least-squares scale of the DVM output onto the spectral one:
            // trivial outputs dilute the DVM collision frequency.
            let dot: f64 = q_dvm.iter().zip(q_spec.values()).map(|(a, b)| a * b).sum();
            let scale = dot / q_dvm.iter().map(|a| a * a).sum::<f64>();
            let scaled: Vec<f64> = q_dvm.iter().map(|a| a * scale).collect();
            rows.push(json!({
                "n": n,
                "quadruples": table.quadruples().len(),
                "relative_l2_vs_spectral": rel_l2(&q_dvm, q_spec.values()),
                "best_fit_scale": scale,
                "relative_l2_after_scale": rel_l2(&scaled, q_spec.values()),
                "mass_defect": mass_defect,
            }));
        }
        Ok(rows)
    })?;

    let transport = tm.time("transport", || transport_study(&conv.transport_cells))?;

    let spectral_rows: Vec<Vec<f64>> =
        spectral.iter().map(|r| vec![r.n as f64, r.error, r.order.unwrap_or(f64::NAN)]).collect();
    out.csv("spectral_convergence.csv", &["n", "error", "order"], &spectral_rows)?;
    let transport_rows: Vec<Vec<f64>> =
        transport.iter().map(|r| vec![r.n as f64, r.error, r.order.unwrap_or(f64::NAN)]).collect();
    out.csv("transport_convergence.csv", &["n_cells", "error", "order"], &transport_rows)?;

    let results = json!({
        "spectral": { "reference": conv.reference, "temperature": conv.temperature, "rows": spectral },
        "dvm_vs_spectral": dvm,
        "transport": transport,
    });
    Ok((results, Vec::new()))
}

/// Upwind transport of `1 + sin(2 pi x) / 2` on the periodic unit interval,
/// every node against the exact cell averages at `t = 1/4`.
fn transport_study(cells: &[usize]) -> Result<Vec<ConvergenceRow>> {
    let grid = VelocityGrid::with_default_radius(1, 4, 1.0)?;
    let t_end = 0.25;
    let exact_avg = |a: f64, b: f64, v: f64| {
        let tau = 2.0 * PI;
        1.0 + 0.5 * ((tau * (a - v * t_end)).cos() - (tau * (b - v * t_end)).cos()) / (tau * (b - a))
    };
    let mut errors = Vec::with_capacity(cells.len());
    for &n in cells {
        let mesh = SpatialMesh::new(n, 0.0, 1.0, Boundary::Periodic)?;
        let dx = mesh.dx();
        let avg = |i: usize, v: f64| exact_avg(i as f64 * dx, (i + 1) as f64 * dx, v);
        let cells0 = (0..n)
            .map(|i| Distribution::new(grid, vec![avg(i, 0.0); grid.len()]))
            .collect::<Result<Vec<_>>>()?;
        let mut field = KineticField::new(mesh, cells0)?;
        for h in schedule(t_end, 0.5 * dx) {
            field = advect(&field, h)?;
        }
        let mut err = 0.0;
        let mut norm = 0.0;
        for (i, c) in field.cells().iter().enumerate() {
            for (v, x) in grid.nodes().zip(c.values()) {
                let e = avg(i, v[0]);
                err += (x - e).abs();
                norm += e.abs();
            }
        }
        errors.push(err / norm);
    }
    Ok(convergence_report(cells, &errors))
}

fn run_ap(cfg: &ScenarioConfig, out: &Outputs, opts: RunOptions, tm: &mut Timings) -> Result<(Value, Vec<Check>)> {
    let grid = cfg.grid.build()?;
    let time = need(&cfg.time, "time")?;
    let ap = need(&cfg.ap, "ap")?;
    let (op, info) = tm.time("operator", || build_operator(cfg, &grid, opts))?;
    let f0 = initial_state(cfg, &grid)?;
    let mut records = Vec::new();
    tm.time("sweep", || {
        for &stepper in &ap.steppers {
            records.extend(ap_diagnostic(&f0, op.as_ref(), time.penalty, stepper, time.dt, ap.steps, &ap.epsilons)?);
        }
        Ok(())
    })?;
    let rows: Vec<Vec<f64>> = records
        .iter()
        .map(|r| {
            let code = ap.steppers.iter().position(|s| *s == r.stepper).unwrap_or(0) as f64;
            vec![
                r.epsilon,
                code,
                f64::from(u8::from(r.stable)),
                r.first_step_equilibrium_distance,
                r.final_equilibrium_distance,
                r.moment_drift,
            ]
        })
        .collect();
    out.csv(
        "ap_sweep.csv",
        &["epsilon", "stepper_index", "stable", "first_step_equilibrium_distance", "final_equilibrium_distance", "moment_drift"],
        &rows,
    )?;

    let eps_min = ap.epsilons.iter().copied().fold(f64::INFINITY, f64::min);
    let at_min = |pred: fn(Stepper) -> bool| records.iter().filter(move |r| r.epsilon == eps_min && pred(r.stepper));
    let mut checks = Vec::new();
    if let Some(limit) = cfg.checks.max_stiff_equilibrium_distance {
        for r in at_min(|s| !s.is_explicit()) {
            checks.push(Check::at_most(
                &format!("{}_first_step_equilibrium_distance", stepper_name(r.stepper)),
                r.first_step_equilibrium_distance,
                limit,
            ));
        }
    }
    if cfg.checks.expect_explicit_blowup == Some(true) {
        for r in at_min(|s| s.is_explicit()) {
            let flagged = !r.stable;
            checks.push(Check {
                name: format!("{}_flagged_unstable", stepper_name(r.stepper)),
                value: f64::from(u8::from(flagged)),
                limit: 1.0,
                passed: flagged,
            });
        }
    }
    let results = json!({
        "operator": info,
        "dt": time.dt,
        "steppers": ap.steppers,
        "records": records,
        "initial_equilibrium_distance": equilibrium_distance(&f0),
        "initial_moments": compute_moments(&f0)?,
    });
    Ok((results, checks))
}

fn stepper_name(s: Stepper) -> String {
    serde_json::to_value(s).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

/// Runs a validated scenario, writing `report.json`, `timings.json` and the
/// kind-specific series into `out_dir`.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path, opts: RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    let out = Outputs::new(out_dir)?;
    let mut tm = Timings(Vec::new());
    let t0 = Instant::now();
    let (results, checks) = match cfg.kind {
        ScenarioKind::HomogeneousRelaxation => run_homogeneous(cfg, &out, opts, &mut tm)?,
        ScenarioKind::BkwVerification => run_bkw(cfg, &out, opts, &mut tm)?,
        ScenarioKind::SodKinetic => run_sod(cfg, &out, opts, &mut tm)?,
        ScenarioKind::KernelModeBuild => run_kernel_build(cfg, &out, opts, &mut tm)?,
        ScenarioKind::ConvergenceStudy => run_convergence(cfg, &out, opts, &mut tm)?,
        ScenarioKind::ApSweep => run_ap(cfg, &out, opts, &mut tm)?,
    };
    tm.0.push(("total".to_string(), t0.elapsed().as_secs_f64()));
    let report = RunReport { kind: cfg.kind, seed: cfg.seed, results, checks };
    out.json("report.json", &json!({ "config": cfg, "report": report }))?;
    out.json("timings.json", &tm.to_json())?;
    log::info!("{:?} finished in {:.2}s", cfg.kind, t0.elapsed().as_secs_f64());
    Ok(report)
}
