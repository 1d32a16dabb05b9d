//! Kernel modes of the truncated collision operator in two velocity
//! dimensions.
//!
//! In the Carleman form the operator integrates over `x, y` in the ball
//! `B_R` with the singular weight `delta(x . y)`. Writing `x = r e_theta`,
//! the support of the delta is the line `y = t e_theta^perp` and the Jacobian
//! is `1 / |x|`, which cancels the polar weight:
//!
//! ```text
//! beta(l, m) = int_0^{2pi} dtheta int_0^R dr int_{-R}^{R} dt
//!              Bt(r, t) exp(i r l.e_theta) exp(i t m.e_theta^perp)
//! ```
//!
//! Pairing `theta` with `theta + pi` makes the table real. For a constant
//! `Bt` the two line integrals are `phi(s) = 2R sinc(R s)` and
//!
//! ```text
//! beta(l, m) = Bt int_0^pi phi(l.e_theta) phi(m.e_theta^perp) dtheta,
//! ```
//!
//! evaluated with the periodic trapezoidal rule. Variable hard spheres use
//! `Bt = 2 C |x + y|^alpha = 2 C (r^2 + t^2)^{alpha/2}` and a Gauss-Legendre
//! rule on the `(r, t)` square. Both quadratures are sums of rank-one terms,
//! so the table is stored together with its quadrature factors
//! `beta = left * right^T`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::transform::ModeLayout;
use crate::error::{Error, Result};
use crate::grid::{read_f64, read_u32, read_u64, VelocityGrid};

/// Collision kernel `B(cos theta, |v - v_*|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CollisionKernel {
    /// Maxwell molecules in 2D, `B = 1 / (2 pi)`.
    Maxwell,
    /// Variable hard spheres, `B = c_alpha |v - v_*|^alpha`.
    Vhs { alpha: f64, c_alpha: f64 },
}

impl CollisionKernel {
    pub fn alpha(&self) -> f64 {
        match self {
            CollisionKernel::Maxwell => 0.0,
            CollisionKernel::Vhs { alpha, .. } => *alpha,
        }
    }

    pub fn constant(&self) -> f64 {
        match self {
            CollisionKernel::Maxwell => 1.0 / (2.0 * PI),
            CollisionKernel::Vhs { c_alpha, .. } => *c_alpha,
        }
    }

    /// `B` at relative speed `g` (physical units).
    pub fn eval(&self, g: f64) -> f64 {
        match self {
            CollisionKernel::Maxwell => 1.0 / (2.0 * PI),
            CollisionKernel::Vhs { alpha, c_alpha } => c_alpha * g.powf(*alpha),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let CollisionKernel::Vhs { alpha, c_alpha } = self {
            if !(0.0..=1.0).contains(alpha) {
                return Err(Error::invalid("alpha", format!("must lie in [0, 1], got {alpha}")));
            }
            if !(*c_alpha > 0.0) {
                return Err(Error::invalid("c_alpha", format!("must be positive, got {c_alpha}")));
            }
        }
        Ok(())
    }

    fn descriptor(&self) -> (u32, f64, f64) {
        match self {
            CollisionKernel::Maxwell => (0, 0.0, 1.0 / (2.0 * PI)),
            CollisionKernel::Vhs { alpha, c_alpha } => (1, *alpha, *c_alpha),
        }
    }
}

/// Threshold on the level-refinement self-check above which a warning is
/// logged, relative to `beta(0, 0)`.
pub const LEVEL_CHECK_TOL: f64 = 1e-6;

/// Kernel-mode table `beta(l, m)` over the retained modes, with the diagonal
/// `beta(m, m)` kept for the loss term `beta_hat = beta(l, m) - beta(m, m)`.
#[derive(Debug, Clone)]
pub struct KernelModes {
    grid: VelocityGrid,
    kernel: CollisionKernel,
    level: u32,
    layout: ModeLayout,
    /// Row-major `M x M`, entry `l * M + m`.
    table: Vec<f64>,
    diag: Vec<f64>,
    scale: f64,
    factors: Option<(DMatrix<f64>, DMatrix<f64>)>,
    level_check: Option<f64>,
}

impl KernelModes {
    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    pub fn kernel(&self) -> CollisionKernel {
        self.kernel
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn layout(&self) -> ModeLayout {
        self.layout
    }

    pub fn n_modes(&self) -> usize {
        self.layout.len()
    }

    /// `beta(l, m)` by flat mode indices.
    pub fn beta(&self, l: usize, m: usize) -> f64 {
        self.table[l * self.n_modes() + m]
    }

    /// `beta_hat(l, m) = beta(l, m) - beta(m, m)`.
    pub fn beta_hat(&self, l: usize, m: usize) -> f64 {
        self.beta(l, m) - self.diag[m]
    }

    pub fn beta_at(&self, l: &[i64], m: &[i64]) -> Option<f64> {
        Some(self.beta(self.layout.index(l)?, self.layout.index(m)?))
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// Factor converting mapped-unit collision sums to physical units,
    /// `(L / pi)^{d + alpha}`.
    pub fn physical_scale(&self) -> f64 {
        self.scale
    }

    /// Quadrature factors `(left, right)` with `table = left * right^T`.
    pub fn factors(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        self.factors.as_ref().map(|(a, b)| (a, b))
    }

    /// Largest change of sampled entries when the quadrature level is raised
    /// by one, relative to `beta(0, 0)`. `None` when the check was skipped.
    pub fn level_check(&self) -> Option<f64> {
        self.level_check
    }
}

/// Smallest quadrature level whose angular rule resolves the highest
/// harmonic `R (|l| + |m|)` of the integrand with a safety margin.
pub fn auto_level(grid: &VelocityGrid) -> u32 {
    let n = grid.max_mode() as f64;
    let needed = grid.trunc_radius() * std::f64::consts::SQRT_2 * n + 32.0;
    let mut level = 0;
    while angle_points(level) < needed.ceil() as usize {
        level += 1;
    }
    level
}

fn angle_points(level: u32) -> usize {
    32 << level
}

fn radial_points(level: u32) -> usize {
    12 << level
}

/// `phi(s) = int_{-R}^{R} exp(i t s) dt = 2R sinc(R s)`, even in `s`.
pub(crate) fn slice_integral(r: f64, s: f64) -> f64 {
    let z = r * s.abs();
    if z < 1e-8 {
        2.0 * r * (1.0 - z * z / 6.0)
    } else {
        2.0 * z.sin() / s.abs()
    }
}

/// Gauss-Legendre nodes and weights on `[a, b]`.
pub(crate) fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        nodes[i] = mid - half * x;
        nodes[n - 1 - i] = mid + half * x;
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    (nodes, weights)
}

struct Quadrature {
    left: DMatrix<f64>,
    right: DMatrix<f64>,
}

fn quadrature_factors(layout: ModeLayout, radius: f64, kernel: CollisionKernel, level: u32) -> Quadrature {
    let m_len = layout.len();
    let n_theta = angle_points(level);
    let bt = 2.0 * kernel.constant();
    let dtheta = PI / n_theta as f64;
    let modes: Vec<[i64; 3]> = (0..m_len).map(|i| layout.mode(i)).collect();
    let alpha = kernel.alpha();
    if alpha == 0.0 && matches!(kernel, CollisionKernel::Maxwell) {
        let mut left = DMatrix::zeros(m_len, n_theta);
        let mut right = DMatrix::zeros(m_len, n_theta);
        for t in 0..n_theta {
            let (s, c) = (t as f64 * dtheta).sin_cos();
            for (i, k) in modes.iter().enumerate() {
                let along = k[0] as f64 * c + k[1] as f64 * s;
                let across = -(k[0] as f64) * s + k[1] as f64 * c;
                left[(i, t)] = bt * dtheta * slice_integral(radius, along);
                right[(i, t)] = slice_integral(radius, across);
            }
        }
        return Quadrature { left, right };
    }
    // Even integrand on [-R, R]^2: integrate the cosine parts over [0, R]^2.
    let n_r = radial_points(level);
    let (nodes, weights) = gauss_legendre(n_r, 0.0, radius);
    let q = n_theta * n_r;
    let mut left = DMatrix::zeros(m_len, q);
    let mut right = DMatrix::zeros(m_len, q);
    let weight: Vec<f64> = (0..n_r * n_r)
        .map(|ab| {
            let (x, y) = (nodes[ab / n_r], nodes[ab % n_r]);
            (x * x + y * y).powf(0.5 * alpha)
        })
        .collect();
    let mut cos_r = vec![0.0; n_r];
    for t in 0..n_theta {
        let (s, c) = (t as f64 * dtheta).sin_cos();
        for (i, k) in modes.iter().enumerate() {
            let along = k[0] as f64 * c + k[1] as f64 * s;
            let across = -(k[0] as f64) * s + k[1] as f64 * c;
            for (a, x) in nodes.iter().enumerate() {
                cos_r[a] = weights[a] * (x * along).cos();
            }
            for (b, y) in nodes.iter().enumerate() {
                let col = t * n_r + b;
                let mut acc = 0.0;
                for a in 0..n_r {
                    acc += cos_r[a] * weight[a * n_r + b];
                }
                left[(i, col)] = 4.0 * bt * dtheta * acc;
                right[(i, col)] = weights[b] * (y * across).cos();
            }
        }
    }
    Quadrature { left, right }
}

fn assemble(left: &DMatrix<f64>, right: &DMatrix<f64>) -> Vec<f64> {
    let m_len = left.nrows();
    const BLOCK: usize = 64;
    let blocks: Vec<Vec<f64>> = (0..m_len.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let rows = BLOCK.min(m_len - start);
            let chunk = left.rows(start, rows) * right.transpose();
            let mut out = Vec::with_capacity(rows * m_len);
            for i in 0..rows {
                out.extend(chunk.row(i).iter().copied());
            }
            out
        })
        .collect();
    blocks.concat()
}

/// Single entry from the raw quadrature, used for the level self-check.
fn entry(l: [i64; 3], m: [i64; 3], radius: f64, kernel: CollisionKernel, level: u32) -> f64 {
    let left = quadrature_column(&l, radius, kernel, level, true);
    let right = quadrature_column(&m, radius, kernel, level, false);
    left.iter().zip(&right).map(|(a, b)| a * b).sum()
}

/// One row of the left or right quadrature factor for mode `k`.
fn quadrature_column(k: &[i64; 3], radius: f64, kernel: CollisionKernel, level: u32, left: bool) -> Vec<f64> {
    let n_theta = angle_points(level);
    let dtheta = PI / n_theta as f64;
    let bt = 2.0 * kernel.constant();
    let alpha = kernel.alpha();
    let maxwell = matches!(kernel, CollisionKernel::Maxwell);
    let (nodes, weights) = gauss_legendre(radial_points(level), 0.0, radius);
    let mut out = Vec::new();
    for t in 0..n_theta {
        let (s, c) = (t as f64 * dtheta).sin_cos();
        let along = k[0] as f64 * c + k[1] as f64 * s;
        let across = -(k[0] as f64) * s + k[1] as f64 * c;
        if maxwell {
            out.push(if left { bt * dtheta * slice_integral(radius, along) } else { slice_integral(radius, across) });
            continue;
        }
        for (b, y) in nodes.iter().enumerate() {
            if left {
                let acc: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(x, w)| w * (x * along).cos() * (x * x + y * y).powf(0.5 * alpha))
                    .sum();
                out.push(4.0 * bt * dtheta * acc);
            } else {
                out.push(weights[b] * (y * across).cos());
            }
        }
    }
    out
}

/// Builds the kernel-mode table for a 2D grid at the given quadrature level
/// (`None` selects [`auto_level`]).
pub fn compute_kernel_modes(
    grid: &VelocityGrid,
    kernel: CollisionKernel,
    level: Option<u32>,
) -> Result<KernelModes> {
    if grid.dim() != 2 {
        return Err(Error::UnsupportedDimension(grid.dim()));
    }
    kernel.validate()?;
    let level = level.unwrap_or_else(|| auto_level(grid));
    let layout = ModeLayout::of(grid);
    let radius = grid.trunc_radius();
    let quad = quadrature_factors(layout, radius, kernel, level);
    let table = assemble(&quad.left, &quad.right);
    let m_len = layout.len();
    let diag = (0..m_len).map(|m| table[m * m_len + m]).collect();
    let scale = (grid.half_width() / PI).powf(2.0 + kernel.alpha());

    let n = grid.max_mode() as i64;
    let samples = [
        ([0, 0, 0], [0, 0, 0]),
        ([n, n, 0], [n, -n, 0]),
        ([n, 0, 0], [0, n, 0]),
        ([-n, n, 0], [n, n, 0]),
        ([1, -n, 0], [n, 2.min(n), 0]),
        ([n, n, 0], [n, n, 0]),
    ];
    let reference = table[layout.index(&[0, 0]).unwrap() * m_len + layout.index(&[0, 0]).unwrap()].abs().max(1e-300);
    let check = samples
        .par_iter()
        .map(|(l, m)| {
            let fine = entry(*l, *m, radius, kernel, level + 1);
            let coarse = table[layout.index(l).unwrap() * m_len + layout.index(m).unwrap()];
            (fine - coarse).abs() / reference
        })
        .reduce(|| 0.0, f64::max);
    if check > LEVEL_CHECK_TOL {
        log::warn!(
            "kernel-mode quadrature level {level} may be too low: refinement changes entries by {check:e} (relative)"
        );
    }

    Ok(KernelModes {
        grid: *grid,
        kernel,
        level,
        layout,
        table,
        diag,
        scale,
        factors: Some((quad.left, quad.right)),
        level_check: Some(check),
    })
}

const CACHE_MAGIC: &[u8; 4] = b"KMOD";
const CACHE_VERSION: u32 = 1;

/// Content-addressed cache path for `(grid, kernel, level)`.
pub fn cache_path(dir: &Path, grid: &VelocityGrid, kernel: CollisionKernel, level: u32) -> PathBuf {
    let (tag, alpha, c) = kernel.descriptor();
    let mut h = Sha256::new();
    h.update(CACHE_VERSION.to_le_bytes());
    h.update((grid.dim() as u32).to_le_bytes());
    h.update((grid.n_per_dim() as u32).to_le_bytes());
    h.update(grid.half_width().to_le_bytes());
    h.update(grid.trunc_radius().to_le_bytes());
    h.update(tag.to_le_bytes());
    h.update(alpha.to_le_bytes());
    h.update(c.to_le_bytes());
    h.update(level.to_le_bytes());
    let digest = hex::encode(&h.finalize()[..12]);
    dir.join(format!("kernel-modes-{digest}.bin"))
}

/// [`compute_kernel_modes`] backed by an on-disk cache in `dir`.
pub fn compute_kernel_modes_cached(
    grid: &VelocityGrid,
    kernel: CollisionKernel,
    level: Option<u32>,
    dir: &Path,
) -> Result<KernelModes> {
    let level = level.unwrap_or_else(|| auto_level(grid));
    let path = cache_path(dir, grid, kernel, level);
    if path.exists() {
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        match KernelModes::read_from(std::io::BufReader::new(file)) {
            Ok(km) if km.grid == *grid && km.kernel == kernel && km.level == level => return Ok(km),
            Ok(_) => log::warn!("cache file {} does not match its key; rebuilding", path.display()),
            Err(e) => log::warn!("unreadable cache file {}: {e}; rebuilding", path.display()),
        }
    }
    let km = compute_kernel_modes(grid, kernel, Some(level))?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = path.with_extension("tmp");
    {
        let file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = std::io::BufWriter::new(file);
        km.write_to(&mut w).map_err(|e| Error::io(&tmp, e))?;
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(km)
}

impl KernelModes {
    /// Cache layout, all little-endian: magic `KMOD`, `u32 version`,
    /// `u32 dim`, `u32 N`, `f64 R`, `u32 kernel tag` (0 Maxwell, 1 VHS),
    /// `f64 alpha`, `f64 c_alpha`, `u32 level`, `f64 half_width`, `u64 M`,
    /// then `M*M` table entries row-major, then `u64 q` and the `M x q`
    /// left and right quadrature factors column-major (`q = 0` if absent).
    /// The table is real for every supported kernel, so entries are `f64`.
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let (tag, alpha, c) = self.kernel.descriptor();
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&(self.grid.dim() as u32).to_le_bytes())?;
        w.write_all(&(self.grid.max_mode() as u32).to_le_bytes())?;
        w.write_all(&self.grid.trunc_radius().to_le_bytes())?;
        w.write_all(&tag.to_le_bytes())?;
        w.write_all(&alpha.to_le_bytes())?;
        w.write_all(&c.to_le_bytes())?;
        w.write_all(&self.level.to_le_bytes())?;
        w.write_all(&self.grid.half_width().to_le_bytes())?;
        w.write_all(&(self.n_modes() as u64).to_le_bytes())?;
        for v in &self.table {
            w.write_all(&v.to_le_bytes())?;
        }
        match &self.factors {
            Some((left, right)) => {
                w.write_all(&(left.ncols() as u64).to_le_bytes())?;
                for v in left.iter().chain(right.iter()) {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            None => w.write_all(&0u64.to_le_bytes())?,
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| Error::Format(e.to_string()))?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Format("not a kernel-mode file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CACHE_VERSION {
            return Err(Error::Format(format!("unsupported kernel-mode format version {version}")));
        }
        let dim = read_u32(&mut r)? as usize;
        let max_mode = read_u32(&mut r)? as usize;
        let radius = read_f64(&mut r)?;
        let tag = read_u32(&mut r)?;
        let alpha = read_f64(&mut r)?;
        let c_alpha = read_f64(&mut r)?;
        let level = read_u32(&mut r)?;
        let half_width = read_f64(&mut r)?;
        let kernel = match tag {
            0 => CollisionKernel::Maxwell,
            1 => CollisionKernel::Vhs { alpha, c_alpha },
            t => return Err(Error::Format(format!("unknown kernel tag {t}"))),
        };
        let grid = VelocityGrid::new(dim, 2 * (max_mode + 1), half_width, radius)?;
        let layout = ModeLayout::of(&grid);
        let m_len = read_u64(&mut r)? as usize;
        if m_len != layout.len() {
            return Err(Error::Format(format!("table size {m_len} does not match header")));
        }
        let table = (0..m_len * m_len).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let q = read_u64(&mut r)? as usize;
        let factors = if q > 0 {
            let mut read_matrix = || -> Result<DMatrix<f64>> {
                let data = (0..m_len * q).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
                Ok(DMatrix::from_vec(m_len, q, data))
            };
            let left = read_matrix()?;
            let right = read_matrix()?;
            Some((left, right))
        } else {
            None
        };
        let diag = (0..m_len).map(|m| table[m * m_len + m]).collect();
        let scale = (half_width / PI).powf(2.0 + kernel.alpha());
        Ok(KernelModes { grid, kernel, level, layout, table, diag, scale, factors, level_check: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> VelocityGrid {
        VelocityGrid::with_default_radius(2, n, 6.0).unwrap()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7, 0.0, 2.0);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((integral - 2f64.powi(13) / 13.0).abs() < 1e-10);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_mode_closed_form() {
        // Bt = 1/pi: int_{B_R} (2R / |x|) dx / pi = 4 pi R^2 / pi.
        let g = grid(8);
        let km = compute_kernel_modes(&g, CollisionKernel::Maxwell, None).unwrap();
        let r = g.trunc_radius();
        let b00 = km.beta_at(&[0, 0], &[0, 0]).unwrap();
        assert!((b00 - 4.0 * r * r).abs() < 1e-12);
        let vhs = compute_kernel_modes(&g, CollisionKernel::Vhs { alpha: 0.0, c_alpha: 1.0 / (2.0 * PI) }, Some(2)).unwrap();
        let diff = km.table().iter().zip(vhs.table()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff < 1e-8, "analytic slices vs Gauss-Legendre quadrature: {diff:e}");
    }

    #[test]
    fn maxwell_table_symmetries() {
        let g = grid(8);
        let km = compute_kernel_modes(&g, CollisionKernel::Maxwell, None).unwrap();
        let layout = km.layout();
        let scale = km.beta(layout.index(&[0, 0]).unwrap(), layout.index(&[0, 0]).unwrap());
        for l in 0..km.n_modes() {
            for m in 0..km.n_modes() {
                let (kl, km_) = (layout.mode(l), layout.mode(m));
                let neg = km.beta_at(&[-kl[0], -kl[1]], &[-km_[0], -km_[1]]).unwrap();
                assert!((km.beta(l, m) - neg).abs() <= 1e-14 * scale);
                assert!((km.beta(l, m) - km.beta(m, l)).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn level_check_is_small_at_auto_level() {
        let g = grid(16);
        let km = compute_kernel_modes(&g, CollisionKernel::Maxwell, None).unwrap();
        assert!(km.level_check().unwrap() < LEVEL_CHECK_TOL);
    }

    #[test]
    fn rejects_three_dimensions() {
        let g = VelocityGrid::with_default_radius(3, 8, 6.0).unwrap();
        assert!(matches!(
            compute_kernel_modes(&g, CollisionKernel::Maxwell, None),
            Err(Error::UnsupportedDimension(3))
        ));
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = grid(8);
        let a = compute_kernel_modes_cached(&g, CollisionKernel::Maxwell, Some(0), dir.path()).unwrap();
        let path = cache_path(dir.path(), &g, CollisionKernel::Maxwell, 0);
        assert!(path.exists());
        let b = compute_kernel_modes_cached(&g, CollisionKernel::Maxwell, Some(0), dir.path()).unwrap();
        assert_eq!(a.table(), b.table());
        assert_eq!(a.factors().unwrap().0, b.factors().unwrap().0);
        assert!(b.level_check().is_none());
    }
}
