//! One space dimension, full velocity grid: first-order upwind transport of
//! `v_1 df/dx` and Lie splitting with a homogeneous collision stepper.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::euler::Primitive;
use crate::grid::{compute_moments, conservative_maxwellian, Distribution, Moments, VelocityGrid};
use crate::integrators::{StiffProblem, Stepper};

/// Slack on the CFL bound so that a step chosen at exactly unit CFL passes.
const CFL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Periodic,
    /// Zero-gradient ghost cells.
    FreeOutflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialMesh {
    n_cells: usize,
    x_min: f64,
    x_max: f64,
    boundary: Boundary,
}

impl SpatialMesh {
    pub fn new(n_cells: usize, x_min: f64, x_max: f64, boundary: Boundary) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::invalid("n_cells", format!("must be >= 2, got {n_cells}")));
        }
        if !(x_max > x_min && x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::invalid("x_max", format!("must exceed x_min, got [{x_min}, {x_max}]")));
        }
        Ok(Self { n_cells, x_min, x_max, boundary })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }

    /// Neighbour indices `(i - 1, i + 1)` after applying the boundary rule.
    pub(crate) fn neighbours(&self, i: usize) -> (usize, usize) {
        let n = self.n_cells;
        match self.boundary {
            Boundary::Periodic => ((i + n - 1) % n, (i + 1) % n),
            Boundary::FreeOutflow => (i.saturating_sub(1), (i + 1).min(n - 1)),
        }
    }
}

/// A distribution on the same velocity grid in every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticField {
    mesh: SpatialMesh,
    grid: VelocityGrid,
    cells: Vec<Distribution>,
}

impl KineticField {
    pub fn new(mesh: SpatialMesh, cells: Vec<Distribution>) -> Result<Self> {
        if cells.len() != mesh.n_cells() {
            return Err(Error::GridMismatch(format!("{} cells for a {}-cell mesh", cells.len(), mesh.n_cells())));
        }
        let grid = *cells[0].grid();
        for c in &cells[1..] {
            grid.check_same(c.grid())?;
        }
        Ok(Self { mesh, grid, cells })
    }

    /// Per-cell grid Maxwellians of the fluid state `(rho, w, p)`, with
    /// `w` along the spatial axis and `T = p / rho`.
    pub fn from_fluid(mesh: SpatialMesh, grid: VelocityGrid, states: &[Primitive]) -> Result<Self> {
        let cells = states
            .iter()
            .map(|s| {
                let mut u = vec![0.0; grid.dim()];
                u[0] = s.w;
                conservative_maxwellian(&Moments::new(grid.dim(), s.rho, &u, s.p / s.rho), &grid)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(mesh, cells)
    }

    pub fn mesh(&self) -> &SpatialMesh {
        &self.mesh
    }

    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    pub fn cells(&self) -> &[Distribution] {
        &self.cells
    }

    pub fn moments(&self) -> Result<Vec<Moments>> {
        self.cells.iter().map(compute_moments).collect()
    }

    /// Moments as a 1D fluid profile (`w` = first velocity component).
    pub fn fluid_profile(&self) -> Result<Vec<Primitive>> {
        Ok(self
            .moments()?
            .iter()
            .map(|m| Primitive { rho: m.density, w: m.velocity[0], p: m.density * m.temperature })
            .collect())
    }

    /// Sum over cells of `rho dx`.
    pub fn total_mass(&self) -> f64 {
        self.cells.iter().map(|c| c.conserved().density).sum::<f64>() * self.mesh.dx()
    }

    /// `dt max |v_1| / dx`.
    pub fn cfl(&self, dt: f64) -> f64 {
        dt * max_axial_speed(&self.grid) / self.mesh.dx()
    }
}

fn max_axial_speed(grid: &VelocityGrid) -> f64 {
    grid.axis_coords().iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Upwind update of every velocity node.
pub fn advect(field: &KineticField, dt: f64) -> Result<KineticField> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
    }
    let cfl = field.cfl(dt);
    if cfl > 1.0 + CFL_SLACK {
        return Err(Error::CflViolation { cfl, limit: 1.0 });
    }
    let grid = field.grid;
    let mesh = field.mesh;
    let speeds: Vec<f64> = grid.nodes().map(|v| v[0] * dt / mesh.dx()).collect();
    let cells: Vec<Distribution> = (0..mesh.n_cells())
        .into_par_iter()
        .map(|i| {
            let (left, right) = mesh.neighbours(i);
            let (fl, fc, fr) = (field.cells[left].values(), field.cells[i].values(), field.cells[right].values());
            let values = speeds
                .iter()
                .enumerate()
                .map(|(j, &nu)| {
                    if nu > 0.0 {
                        fc[j] - nu * (fc[j] - fl[j])
                    } else {
                        fc[j] - nu * (fr[j] - fc[j])
                    }
                })
                .collect();
            Distribution::new(grid, values)
        })
        .collect::<Result<_>>()?;
    Ok(KineticField { mesh, grid, cells })
}

/// Lie splitting: transport over `dt`, then one collision step per cell.
pub fn split_step(field: &KineticField, dt: f64, problem: &StiffProblem<'_>, stepper: Stepper) -> Result<KineticField> {
    field.grid.check_same(problem.operator().grid())?;
    let moved = advect(field, dt)?;
    let cells = moved
        .cells
        .par_iter()
        .map(|c| stepper.step(c, dt, problem))
        .collect::<Result<Vec<_>>>()?;
    Ok(KineticField { cells, ..moved })
}

/// `sum |a - b| / sum |b|` over cells.
pub fn relative_l1(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    let den: f64 = b.iter().map(|y| y.abs()).sum();
    num / den
}

/// `sum |a - b| dx`, the L1 distance of two cell profiles.
pub fn l1_distance(a: &[f64], b: &[f64], mesh: &SpatialMesh) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * mesh.dx()
}

/// Appends rows `t, x, rho, w, T, p`; writes the header when `header` is set.
pub fn write_profile_csv<W: Write>(
    mut w: W,
    header: bool,
    t: f64,
    mesh: &SpatialMesh,
    states: &[Primitive],
) -> std::io::Result<()> {
    if header {
        writeln!(w, "t,x,rho,w,T,p")?;
    }
    for (i, s) in states.iter().enumerate() {
        writeln!(w, "{t:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", mesh.center(i), s.rho, s.w, s.p / s.rho, s.p)?;
    }
    Ok(())
}
