//! Time stepping for the homogeneous problem `df/dt = Q(f, f) / eps`.
//!
//! The stiff steppers split `Q = (Q - L) + L` with the relaxation penalty
//! `L(f) = mu (M[f] - f)`. `M[f]` is the grid Maxwellian with the discrete
//! moments of `f`; since both `Q` and `L` conserve those moments, `M` is
//! frozen over a step and the implicit part has a closed form.
//!
//! With `z = mu dt / eps` and `D = Q(f, f) - L(f)`:
//!
//! ```text
//! imex:        f' = (f + z M + (dt / eps) D / (1 + z)) / (1 + z)
//! exponential: f' = e^{-z} f + (1 - e^{-z}) (M + g(z) D / mu),  g(z) = (1 - e^{-z}) / z
//! ```
//!
//! Both reduce to `f + dt Q / eps + O(dt^2)` for small `z`, are exact (in the
//! implicit-Euler and exponential sense respectively) when `Q = L`, and tend
//! to `M[f]` as `eps -> 0` for any `f`. The damping of `D` by `1 / (1 + z)` is
//! what makes the limit `M` rather than `f + Q / mu`.

use serde::{Deserialize, Serialize};

use crate::dvm::CollisionTable;
use crate::error::{Error, Result};
use crate::grid::{compute_moments, equilibrium_of, Distribution, VelocityGrid};
use crate::spectral::{collide_direct, collide_fast, FastCollision, KernelModes};

/// Smallest penalization used when a rule resolves to (near) zero.
pub const MU_FLOOR: f64 = 1e-12;

/// Growth of `max |f|` over one step beyond which a step is flagged unstable.
pub const BLOWUP_FACTOR: f64 = 10.0;

pub trait CollisionOperator: Sync {
    fn grid(&self) -> &VelocityGrid;
    fn collide(&self, f: &Distribution) -> Result<Distribution>;
}

impl CollisionOperator for KernelModes {
    fn grid(&self) -> &VelocityGrid {
        KernelModes::grid(self)
    }

    fn collide(&self, f: &Distribution) -> Result<Distribution> {
        collide_direct(f, self)
    }
}

impl CollisionOperator for FastCollision {
    fn grid(&self) -> &VelocityGrid {
        self.kernel().grid()
    }

    fn collide(&self, f: &Distribution) -> Result<Distribution> {
        collide_fast(f, self)
    }
}

/// DVM tables built on a velocity grid act on distributions of that grid.
pub struct DvmOperator {
    table: CollisionTable,
    grid: VelocityGrid,
}

impl DvmOperator {
    pub fn new(table: CollisionTable) -> Result<Self> {
        let grid = *table
            .lattice()
            .grid()
            .ok_or_else(|| Error::GridMismatch("DVM lattice is not attached to a velocity grid".into()))?;
        Ok(Self { table, grid })
    }

    pub fn table(&self) -> &CollisionTable {
        &self.table
    }
}

impl CollisionOperator for DvmOperator {
    fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    fn collide(&self, f: &Distribution) -> Result<Distribution> {
        crate::dvm::dvm_collision(f, &self.table)
    }
}

/// `Q(f) = mu (M[f] - f)`, the relaxation surrogate.
pub struct BgkOperator {
    pub grid: VelocityGrid,
    pub penalty: PenaltyRule,
}

impl CollisionOperator for BgkOperator {
    fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    fn collide(&self, f: &Distribution) -> Result<Distribution> {
        let mu = self.penalty.resolve(f)?;
        equilibrium_of(f)?.axpy(-1.0, f).map(|d| d.scaled(mu))
    }
}

/// `Q = 0`.
pub struct ZeroOperator {
    pub grid: VelocityGrid,
}

impl CollisionOperator for ZeroOperator {
    fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    fn collide(&self, f: &Distribution) -> Result<Distribution> {
        Ok(Distribution::zeros(*f.grid()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PenaltyRule {
    Constant { mu: f64 },
    /// `mu = c rho`.
    DensityScaled { c: f64 },
}

impl Default for PenaltyRule {
    fn default() -> Self {
        PenaltyRule::DensityScaled { c: 1.0 }
    }
}

impl PenaltyRule {
    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            PenaltyRule::Constant { mu } => mu,
            PenaltyRule::DensityScaled { c } => c,
        };
        if v >= 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid("penalty", format!("must be finite and >= 0, got {v}")))
        }
    }

    /// `mu` for the current state, floored at [`MU_FLOOR`].
    pub fn resolve(&self, f: &Distribution) -> Result<f64> {
        let mu = match *self {
            PenaltyRule::Constant { mu } => mu,
            PenaltyRule::DensityScaled { c } => c * compute_moments(f)?.density,
        };
        Ok(mu.max(MU_FLOOR))
    }
}

pub struct StiffProblem<'a> {
    epsilon: f64,
    operator: &'a dyn CollisionOperator,
    penalty: PenaltyRule,
}

impl<'a> StiffProblem<'a> {
    pub fn new(epsilon: f64, operator: &'a dyn CollisionOperator, penalty: PenaltyRule) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid("epsilon", format!("must be positive, got {epsilon}")));
        }
        penalty.validate()?;
        Ok(Self { epsilon, operator, penalty })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn operator(&self) -> &dyn CollisionOperator {
        self.operator
    }

    pub fn penalty(&self) -> PenaltyRule {
        self.penalty
    }

    fn rhs(&self, f: &Distribution) -> Result<Distribution> {
        Ok(self.operator.collide(f)?.scaled(1.0 / self.epsilon))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stepper {
    ForwardEuler,
    Rk4,
    PenalizedImex,
    Exponential,
}

impl Stepper {
    pub fn step(self, f: &Distribution, dt: f64, p: &StiffProblem<'_>) -> Result<Distribution> {
        match self {
            Stepper::ForwardEuler | Stepper::Rk4 => step_explicit(f, dt, p, self),
            Stepper::PenalizedImex => step_penalized_imex(f, dt, p),
            Stepper::Exponential => step_exponential(f, dt, p),
        }
    }

    pub fn is_explicit(self) -> bool {
        matches!(self, Stepper::ForwardEuler | Stepper::Rk4)
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("dt", format!("must be positive, got {dt}")))
    }
}

/// Forward Euler or classical RK4. `scheme` must be an explicit [`Stepper`].
/// Stable only for `dt` of order `eps`; nothing is checked.
pub fn step_explicit(f: &Distribution, dt: f64, p: &StiffProblem<'_>, scheme: Stepper) -> Result<Distribution> {
    check_dt(dt)?;
    match scheme {
        Stepper::ForwardEuler => f.axpy(dt, &p.rhs(f)?),
        Stepper::Rk4 => {
            let k1 = p.rhs(f)?;
            let k2 = p.rhs(&f.axpy(0.5 * dt, &k1)?)?;
            let k3 = p.rhs(&f.axpy(0.5 * dt, &k2)?)?;
            let k4 = p.rhs(&f.axpy(dt, &k3)?)?;
            let mut out = f.clone();
            for (i, o) in out.values_mut().iter_mut().enumerate() {
                *o += dt / 6.0 * (k1.values()[i] + 2.0 * k2.values()[i] + 2.0 * k3.values()[i] + k4.values()[i]);
            }
            Ok(out)
        }
        other => Err(Error::invalid("scheme", format!("{other:?} is not an explicit scheme"))),
    }
}

/// Frozen-equilibrium pieces shared by the stiff steppers: `(M, D, mu)`.
fn split(f: &Distribution, p: &StiffProblem<'_>) -> Result<(Distribution, Distribution, f64)> {
    let m = equilibrium_of(f)?;
    let mu = p.penalty.resolve(f)?;
    let q = p.operator.collide(f)?;
    // D = Q - mu (M - f)
    let d = q.axpy(-mu, &m)?.axpy(mu, f)?;
    Ok((m, d, mu))
}

pub fn step_penalized_imex(f: &Distribution, dt: f64, p: &StiffProblem<'_>) -> Result<Distribution> {
    check_dt(dt)?;
    let (m, d, mu) = split(f, p)?;
    let z = mu * dt / p.epsilon;
    let inv = 1.0 / (1.0 + z);
    // (dt / eps) / (1 + z), written to stay finite as eps -> 0
    let cd = z / (mu * (1.0 + z));
    let mut out = f.clone();
    for (i, o) in out.values_mut().iter_mut().enumerate() {
        *o = (f.values()[i] + z * m.values()[i] + cd * d.values()[i]) * inv;
    }
    Ok(out)
}

pub fn step_exponential(f: &Distribution, dt: f64, p: &StiffProblem<'_>) -> Result<Distribution> {
    check_dt(dt)?;
    let (m, d, mu) = split(f, p)?;
    let z = mu * dt / p.epsilon;
    let decay = (-z).exp();
    let one_minus = -(-z).exp_m1();
    let g = if z < 1e-12 { 1.0 - 0.5 * z } else { one_minus / z };
    let cd = one_minus * g / mu;
    let mut out = f.clone();
    for (i, o) in out.values_mut().iter_mut().enumerate() {
        *o = decay * f.values()[i] + one_minus * m.values()[i] + cd * d.values()[i];
    }
    Ok(out)
}

/// `true` when a step produced non-finite values or grew `max |f|` by more
/// than [`BLOWUP_FACTOR`].
pub fn blew_up(before: &Distribution, after: &Distribution) -> bool {
    !after.is_finite() || after.max_abs() > BLOWUP_FACTOR * before.max_abs()
}

/// `||f - M[f]||_1 / rho`; infinite when `f` has no usable moments.
pub fn equilibrium_distance(f: &Distribution) -> f64 {
    let rho = match compute_moments(f) {
        Ok(m) => m.density,
        Err(_) => return f64::INFINITY,
    };
    match equilibrium_of(f) {
        Ok(m) => f.l1_distance(&m).map_or(f64::INFINITY, |d| d / rho),
        Err(_) => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ApRecord {
    pub epsilon: f64,
    pub stepper: Stepper,
    pub steps: usize,
    pub stable: bool,
    /// Distance from equilibrium after the first step.
    pub first_step_equilibrium_distance: f64,
    pub final_equilibrium_distance: f64,
    /// Largest relative drift of density and energy over the run.
    pub moment_drift: f64,
}

/// Runs the same `dt` over each `eps` and records stability and relaxation.
/// Runtime errors inside a run (e.g. moments destroyed by a blowup) mark the
/// run unstable instead of aborting the sweep.
pub fn ap_diagnostic(
    f0: &Distribution,
    operator: &dyn CollisionOperator,
    penalty: PenaltyRule,
    stepper: Stepper,
    dt: f64,
    steps: usize,
    epsilons: &[f64],
) -> Result<Vec<ApRecord>> {
    check_dt(dt)?;
    let m0 = compute_moments(f0)?;
    let mut out = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let p = StiffProblem::new(eps, operator, penalty)?;
        let mut f = f0.clone();
        let mut stable = true;
        let mut first = f64::NAN;
        let mut drift = 0.0f64;
        for s in 0..steps {
            let next = match stepper.step(&f, dt, &p) {
                Ok(n) => n,
                Err(_) => {
                    stable = false;
                    break;
                }
            };
            if blew_up(&f, &next) {
                stable = false;
                f = next;
                break;
            }
            f = next;
            if s == 0 {
                first = equilibrium_distance(&f);
            }
            let c = f.conserved();
            drift = drift
                .max((c.density - m0.density).abs() / m0.density)
                .max((c.energy - m0.energy).abs() / m0.energy);
        }
        let last = if stable { equilibrium_distance(&f) } else { f64::INFINITY };
        out.push(ApRecord {
            epsilon: eps,
            stepper,
            steps,
            stable,
            first_step_equilibrium_distance: if stable { first } else { f64::INFINITY },
            final_equilibrium_distance: last,
            moment_drift: if stable { drift } else { f64::INFINITY },
        });
    }
    Ok(out)
}
