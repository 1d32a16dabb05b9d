//! Velocity-space discretization shared by every collision operator.
//!
//! The velocity domain is the half-open cube `[-L, L)^d`, sampled at
//! `n_per_dim` equispaced nodes per axis. The `+L` endpoint is dropped so the
//! node set is exactly one period of the periodized domain; consequently the
//! node set is closed under `v -> -v` except for the nodes that carry a `-L`
//! coordinate, whose mirror image would be the dropped `+L` endpoint.
//!
//! Spectral operators view the same cube through the map `v -> v * pi / L`
//! onto `[-pi, pi)^d`; the truncation radius `R` stored on the grid lives in
//! those mapped units.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest velocity dimension the grid supports. Spectral kernels are only
/// implemented for `d = 2`; `d = 1` and `d = 3` exist for DVM lattices.
pub const MAX_DIM: usize = 3;

/// A velocity vector padded with zeros beyond the grid dimension.
pub type Velocity = [f64; MAX_DIM];

/// Default density floor below which mean velocity and temperature are not
/// defined.
pub const DEFAULT_DENSITY_FLOOR: f64 = 1e-12;

/// Relative tolerance (against `max |f|`) for negative values accepted by
/// [`entropy`]; values in `[-tol, 0)` are treated as zero.
pub const DEFAULT_NEGATIVE_TOL: f64 = 1e-8;

/// Dealiasing ratio `2 / (3 + sqrt 2)`: a distribution supported in the ball
/// of radius `lambda * pi` does not alias when the quadratic collision term is
/// computed on `[-pi, pi)^d`.
pub fn dealiasing_ratio() -> f64 {
    2.0 / (3.0 + std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityGrid {
    dim: usize,
    n_per_dim: usize,
    half_width: f64,
    trunc_radius: f64,
}

impl VelocityGrid {
    /// Builds a grid with `n_per_dim^dim` nodes on `[-half_width, half_width)^dim`.
    ///
    /// `trunc_radius` is expressed in mapped units and must lie in `(0, pi]`.
    pub fn new(dim: usize, n_per_dim: usize, half_width: f64, trunc_radius: f64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::invalid("dim", format!("must be in 1..={MAX_DIM}, got {dim}")));
        }
        if n_per_dim < 4 || n_per_dim % 2 != 0 {
            return Err(Error::invalid(
                "n_per_dim",
                format!("must be even and >= 4, got {n_per_dim}"),
            ));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::invalid("half_width", format!("must be positive, got {half_width}")));
        }
        if !(trunc_radius > 0.0 && trunc_radius <= PI) {
            return Err(Error::invalid(
                "trunc_radius",
                format!("must lie in (0, pi] in mapped units, got {trunc_radius}"),
            ));
        }
        Ok(Self { dim, n_per_dim, half_width, trunc_radius })
    }

    /// Grid with the default truncation radius `R = lambda * pi`.
    pub fn with_default_radius(dim: usize, n_per_dim: usize, half_width: f64) -> Result<Self> {
        Self::new(dim, n_per_dim, half_width, dealiasing_ratio() * PI)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_per_dim(&self) -> usize {
        self.n_per_dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Truncation radius in mapped (`[-pi, pi)`) units.
    pub fn trunc_radius(&self) -> f64 {
        self.trunc_radius
    }

    /// Truncation radius in physical velocity units.
    pub fn physical_trunc_radius(&self) -> f64 {
        self.trunc_radius * self.half_width / PI
    }

    pub fn with_trunc_radius(&self, trunc_radius: f64) -> Result<Self> {
        Self::new(self.dim, self.n_per_dim, self.half_width, trunc_radius)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n_per_dim as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Number of nodes, `n_per_dim^dim`.
    pub fn len(&self) -> usize {
        self.n_per_dim.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Highest retained Fourier mode `N = n_per_dim / 2 - 1`.
    pub fn max_mode(&self) -> usize {
        self.n_per_dim / 2 - 1
    }

    /// Physical coordinate of the `i`-th node along one axis.
    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn axis_coords(&self) -> Vec<f64> {
        (0..self.n_per_dim).map(|i| self.axis_coord(i)).collect()
    }

    /// Per-axis indices of the flat node index `j` (first axis slowest).
    pub fn multi_index(&self, mut j: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        for a in (0..self.dim).rev() {
            idx[a] = j % self.n_per_dim;
            j /= self.n_per_dim;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx[..self.dim].iter().fold(0, |acc, &i| acc * self.n_per_dim + i)
    }

    pub fn node(&self, j: usize) -> Velocity {
        let idx = self.multi_index(j);
        let mut v = [0.0; MAX_DIM];
        for a in 0..self.dim {
            v[a] = self.axis_coord(idx[a]);
        }
        v
    }

    pub fn nodes(&self) -> impl Iterator<Item = Velocity> + '_ {
        (0..self.len()).map(move |j| self.node(j))
    }

    /// Index of the mirrored node `-v_j`, or `None` when `v_j` has a `-L`
    /// coordinate (its mirror is the dropped `+L` endpoint).
    pub fn mirror(&self, j: usize) -> Option<usize> {
        let idx = self.multi_index(j);
        let mut out = [0; MAX_DIM];
        for a in 0..self.dim {
            if idx[a] == 0 {
                return None;
            }
            out[a] = self.n_per_dim - idx[a];
        }
        Some(self.flat_index(&out))
    }

    pub fn check_same(&self, other: &VelocityGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// Samples of a distribution function at the nodes of a [`VelocityGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    grid: VelocityGrid,
    values: Vec<f64>,
}

impl Distribution {
    pub fn new(grid: VelocityGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("values", format!("non-finite value at node {j}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: VelocityGrid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: VelocityGrid, mut f: impl FnMut(&Velocity) -> f64) -> Self {
        let values = grid.nodes().map(|v| f(&v)).collect();
        Self { grid, values }
    }

    pub(crate) fn from_raw(grid: VelocityGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|v| c * v).collect())
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Distribution) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect();
        Ok(Self::from_raw(self.grid, values))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Quadrature of `|f|`, the continuous `L^1` norm.
    pub fn l1_norm(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Quadrature of `|f - g|`.
    pub fn l1_distance(&self, other: &Distribution) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum();
        Ok(self.grid.cell_volume() * s)
    }

    /// Total mass carried by negative samples; a diagnostic for spectral
    /// representations, which may undershoot in the tails.
    pub fn negative_mass(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().filter(|v| **v < 0.0).map(|v| -v).sum::<f64>()
    }

    /// Conserved vector `(rho, rho u, E)`, always defined.
    pub fn conserved(&self) -> ConservedMoments {
        let w = self.grid.cell_volume();
        let mut out = ConservedMoments { density: 0.0, momentum: [0.0; MAX_DIM], energy: 0.0 };
        for (j, f) in self.values.iter().enumerate() {
            let v = self.grid.node(j);
            out.density += f;
            let mut v2 = 0.0;
            for a in 0..self.grid.dim {
                out.momentum[a] += f * v[a];
                v2 += v[a] * v[a];
            }
            out.energy += 0.5 * f * v2;
        }
        out.density *= w;
        out.energy *= w;
        for m in &mut out.momentum {
            *m *= w;
        }
        out
    }

    /// Writes the binary layout: magic `KDST`, then little-endian
    /// `u32 version, u32 dim, u32 n_per_dim, f64 half_width, f64 trunc_radius,
    /// u64 count`, followed by `count` row-major `f64` values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(DIST_MAGIC)?;
        w.write_all(&DIST_VERSION.to_le_bytes())?;
        w.write_all(&(self.grid.dim as u32).to_le_bytes())?;
        w.write_all(&(self.grid.n_per_dim as u32).to_le_bytes())?;
        w.write_all(&self.grid.half_width.to_le_bytes())?;
        w.write_all(&self.grid.trunc_radius.to_le_bytes())?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != DIST_MAGIC {
            return Err(Error::Format("not a distribution file (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != DIST_VERSION {
            return Err(Error::Format(format!("unsupported distribution format version {version}")));
        }
        let dim = read_u32(&mut r)? as usize;
        let n = read_u32(&mut r)? as usize;
        let half_width = read_f64(&mut r)?;
        let trunc_radius = read_f64(&mut r)?;
        let grid = VelocityGrid::new(dim, n, half_width, trunc_radius)?;
        let count = read_u64(&mut r)? as usize;
        if count != grid.len() {
            return Err(Error::Format(format!("value count {count} does not match grid")));
        }
        let values = (0..count).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        Distribution::new(grid, values)
    }

    /// CSV layout: a header row `dim,n_per_dim,half_width,trunc_radius`, its
    /// values, then a `v_1,...,v_d,f` header and one row-major row per node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "dim,n_per_dim,half_width,trunc_radius")?;
        let g = &self.grid;
        writeln!(w, "{},{},{},{}", g.dim, g.n_per_dim, g.half_width, g.trunc_radius)?;
        let cols: Vec<String> = (1..=g.dim).map(|a| format!("v_{a}")).collect();
        writeln!(w, "{},f", cols.join(","))?;
        for (j, f) in self.values.iter().enumerate() {
            let v = g.node(j);
            for x in &v[..g.dim] {
                write!(w, "{x},")?;
            }
            writeln!(w, "{f}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Format("unexpected end of CSV".into()))?
                .map_err(|e| Error::io("<csv>", e))
        };
        next()?;
        let header = next()?;
        let parts: Vec<&str> = header.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::Format(format!("bad grid header `{header}`")));
        }
        let p = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("`{s}`: {e}")));
        let grid = VelocityGrid::new(p(parts[0])? as usize, p(parts[1])? as usize, p(parts[2])?, p(parts[3])?)?;
        next()?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let line = next()?;
            let last = line.rsplit(',').next().unwrap_or_default();
            values.push(p(last.trim())?);
        }
        Distribution::new(grid, values)
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_binary(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }
}

const DIST_MAGIC: &[u8; 4] = b"KDST";
const DIST_VERSION: u32 = 1;

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| Error::Format(format!("truncated input: {e}")))
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Density, momentum and energy: linear in `f`, defined for any input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservedMoments {
    pub density: f64,
    pub momentum: Velocity,
    pub energy: f64,
}

impl ConservedMoments {
    pub fn as_vec(&self, dim: usize) -> Vec<f64> {
        let mut v = vec![self.density];
        v.extend_from_slice(&self.momentum[..dim]);
        v.push(self.energy);
        v
    }
}

/// Macroscopic state `(rho, u, T)` with derived energy
/// `E = d rho T / 2 + rho |u|^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub dim: usize,
    pub density: f64,
    pub velocity: Velocity,
    pub temperature: f64,
    pub energy: f64,
}

impl Moments {
    pub fn new(dim: usize, density: f64, velocity: &[f64], temperature: f64) -> Self {
        let mut u = [0.0; MAX_DIM];
        u[..dim].copy_from_slice(&velocity[..dim]);
        let u2: f64 = u.iter().map(|x| x * x).sum();
        let energy = 0.5 * dim as f64 * density * temperature + 0.5 * density * u2;
        Self { dim, density, velocity: u, temperature, energy }
    }

    pub fn conserved(&self) -> ConservedMoments {
        let mut momentum = [0.0; MAX_DIM];
        for a in 0..self.dim {
            momentum[a] = self.density * self.velocity[a];
        }
        ConservedMoments { density: self.density, momentum, energy: self.energy }
    }

    /// Recovers `(rho, u, T)` from a conserved vector.
    pub fn from_conserved(dim: usize, c: &ConservedMoments, floor: f64) -> Result<Self> {
        if c.density <= floor {
            return Err(Error::DegenerateDensity { density: c.density, floor });
        }
        let mut u = [0.0; MAX_DIM];
        let mut u2 = 0.0;
        for a in 0..dim {
            u[a] = c.momentum[a] / c.density;
            u2 += u[a] * u[a];
        }
        let temperature = (2.0 * c.energy - c.density * u2) / (dim as f64 * c.density);
        Ok(Self { dim, density: c.density, velocity: u, temperature, energy: c.energy })
    }
}

/// Moments of `f` by the uniform midpoint rule, with the default density floor.
pub fn compute_moments(f: &Distribution) -> Result<Moments> {
    compute_moments_with_floor(f, DEFAULT_DENSITY_FLOOR)
}

pub fn compute_moments_with_floor(f: &Distribution, floor: f64) -> Result<Moments> {
    Moments::from_conserved(f.grid.dim, &f.conserved(), floor)
}

/// Samples the Maxwellian `rho / (2 pi T)^{d/2} exp(-|v - u|^2 / 2T)` at the
/// grid nodes.
pub fn maxwellian(m: &Moments, grid: &VelocityGrid) -> Result<Distribution> {
    if !(m.density > 0.0) || !(m.temperature > 0.0) {
        return Err(Error::InvalidMoments(format!(
            "Maxwellian needs rho > 0 and T > 0, got rho = {}, T = {}",
            m.density, m.temperature
        )));
    }
    if m.dim != grid.dim {
        return Err(Error::GridMismatch(format!("moments of dim {} on a {}-d grid", m.dim, grid.dim)));
    }
    let t = m.temperature;
    let norm = m.density / (2.0 * PI * t).powf(grid.dim as f64 / 2.0);
    Ok(Distribution::from_fn(*grid, |v| {
        let d2: f64 = (0..grid.dim).map(|a| (v[a] - m.velocity[a]).powi(2)).sum();
        norm * (-d2 / (2.0 * t)).exp()
    }))
}

/// Newton iterations allowed in [`conservative_maxwellian`].
const MATCH_MAX_ITER: usize = 50;

/// Relative moment mismatch accepted by [`conservative_maxwellian`].
const MATCH_TOL: f64 = 1e-14;

/// Grid Maxwellian whose *discrete* moments equal those of `m` to rounding.
///
/// The pointwise samples of [`maxwellian`] carry quadrature and tail
/// truncation errors in their moments. Here the parameters `(rho', u', T')`
/// are adjusted by Newton's method until the midpoint-rule moments hit the
/// target, which makes `f -> M[f]` an exact projection and keeps relaxation
/// steps conservative.
pub fn conservative_maxwellian(m: &Moments, grid: &VelocityGrid) -> Result<Distribution> {
    let d = grid.dim;
    let target = m.conserved().as_vec(d);
    let scale: Vec<f64> =
        target.iter().enumerate().map(|(i, t)| if i == 0 || i == d + 1 { t.abs() } else { m.density }).collect();
    let mut p = *m;
    let mut f = maxwellian(&p, grid)?;
    for _ in 0..MATCH_MAX_ITER {
        let got = f.conserved().as_vec(d);
        let resid: Vec<f64> = got.iter().zip(&target).map(|(g, t)| g - t).collect();
        if resid.iter().zip(&scale).all(|(r, s)| r.abs() <= MATCH_TOL * s) {
            return Ok(f);
        }
        // Jacobian of the discrete moments with respect to (rho, u, T).
        let w = grid.cell_volume();
        let mut jac = nalgebra::DMatrix::<f64>::zeros(d + 2, d + 2);
        for (v, &fv) in grid.nodes().zip(f.values()) {
            let mut c = [0.0; MAX_DIM];
            let mut c2 = 0.0;
            for a in 0..d {
                c[a] = v[a] - p.velocity[a];
                c2 += c[a] * c[a];
            }
            let mut dm = vec![fv / p.density];
            dm.extend((0..d).map(|a| fv * c[a] / p.temperature));
            dm.push(fv * (c2 / (2.0 * p.temperature.powi(2)) - d as f64 / (2.0 * p.temperature)));
            let v2: f64 = (0..d).map(|a| v[a] * v[a]).sum();
            let mut phi = vec![1.0];
            phi.extend((0..d).map(|a| v[a]));
            phi.push(0.5 * v2);
            for (i, pi) in phi.iter().enumerate() {
                for (j, dj) in dm.iter().enumerate() {
                    jac[(i, j)] += w * pi * dj;
                }
            }
        }
        let step = jac
            .lu()
            .solve(&nalgebra::DVector::from_vec(resid))
            .ok_or_else(|| Error::InvalidMoments("moment matching Jacobian is singular".into()))?;
        p.density -= step[0];
        for a in 0..d {
            p.velocity[a] -= step[1 + a];
        }
        p.temperature -= step[d + 1];
        if !(p.density > 0.0 && p.temperature > 0.0 && p.temperature.is_finite()) {
            break;
        }
        f = maxwellian(&p, grid)?;
    }
    Err(Error::InvalidMoments(format!(
        "no grid Maxwellian matches rho = {}, T = {}; the grid does not resolve this state",
        m.density, m.temperature
    )))
}

/// `M[f]`: the grid Maxwellian with exactly the discrete moments of `f`.
pub fn equilibrium_of(f: &Distribution) -> Result<Distribution> {
    conservative_maxwellian(&compute_moments(f)?, f.grid())
}

/// Discrete H functional `sum_j w f_j log f_j` with `0 log 0 = 0`.
pub fn entropy(f: &Distribution) -> Result<f64> {
    entropy_with_tolerance(f, DEFAULT_NEGATIVE_TOL * f.max_abs())
}

pub fn entropy_with_tolerance(f: &Distribution, tol_neg: f64) -> Result<f64> {
    let mut h = 0.0;
    for (index, &value) in f.values.iter().enumerate() {
        if value < -tol_neg {
            return Err(Error::NegativeValue { index, value, tol: tol_neg });
        }
        if value > 0.0 {
            h += value * value.ln();
        }
    }
    Ok(h * f.grid.cell_volume())
}
