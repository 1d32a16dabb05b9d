//! Brute-force quadrature of the collision integral, independent of the
//! Fourier machinery.
//!
//! For each node `v`, the outer sum runs over grid nodes `v_*` (relative
//! velocity taken as the periodic minimum image, matching the periodized
//! domain of the spectral operator) and the inner sum over `n_angle` uniform
//! directions `sigma` on the unit circle. Post-collisional values come from
//! either the truncated trigonometric series of the samples (default) or
//! periodic bilinear interpolation. Bilinear interpolation is cheap but its
//! O(h^2) error in the gain term survives the gain/loss cancellation, so it is
//! only useful as a smoke check.
//!
//! Truncation follows the Carleman variables of the kernel modes: a
//! collision contributes when both `x = v' - v` and `y = v'_* - v` lie in the
//! ball of physical radius `R`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::collision::require_2d;
use super::transform::{forward_transform, inverse_transform, SpectralCoefficients};
use super::kernel::CollisionKernel;
use crate::error::{Error, Result};
use crate::grid::Distribution;

/// Largest `n_per_dim` the oracle accepts without `force`.
pub const ORACLE_MAX_N: usize = 24;

/// How off-grid values `f(v')`, `f(v'_*)` are reconstructed from samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    /// Periodic bilinear interpolation of the grid samples.
    Bilinear,
    /// The truncated trigonometric series `f_N` (modes `|k_a| <= N`), summed
    /// directly at each point. All values, on and off the grid, come from
    /// `f_N`.
    #[default]
    Trigonometric,
}

/// Quadrature oracle with the default [`Interpolation`].
pub fn collision_quadrature_oracle(
    f: &Distribution,
    kernel: CollisionKernel,
    n_angle: usize,
    force: bool,
) -> Result<Distribution> {
    collision_quadrature_oracle_with(f, kernel, n_angle, Interpolation::default(), force)
}

struct TrigSeries {
    max_mode: i64,
    /// Row-major `(2N+1)^2` coefficients, `k_1` slowest.
    coeffs: Vec<Complex64>,
    scale: f64,
}

impl TrigSeries {
    fn new(c: &SpectralCoefficients, half_width: f64) -> Self {
        let max_mode = c.grid().max_mode() as i64;
        Self { max_mode, coeffs: c.truncated(), scale: PI / half_width }
    }

    fn eval(&self, x: f64, y: f64, ex: &mut [Complex64], ey: &mut [Complex64]) -> f64 {
        let n = self.max_mode;
        let w = (2 * n + 1) as usize;
        let (bx, by) = (Complex64::from_polar(1.0, x * self.scale), Complex64::from_polar(1.0, y * self.scale));
        ex[n as usize] = Complex64::new(1.0, 0.0);
        ey[n as usize] = Complex64::new(1.0, 0.0);
        for k in 1..=n as usize {
            ex[n as usize + k] = ex[n as usize + k - 1] * bx;
            ey[n as usize + k] = ey[n as usize + k - 1] * by;
            ex[n as usize - k] = ex[n as usize + k].conj();
            ey[n as usize - k] = ey[n as usize + k].conj();
        }
        let mut total = Complex64::new(0.0, 0.0);
        for (k1, row) in self.coeffs.chunks_exact(w).enumerate() {
            let inner: Complex64 = row.iter().zip(ey.iter()).map(|(c, e)| c * e).sum();
            total += inner * ex[k1];
        }
        total.re
    }
}

pub fn collision_quadrature_oracle_with(
    f: &Distribution,
    kernel: CollisionKernel,
    n_angle: usize,
    interpolation: Interpolation,
    force: bool,
) -> Result<Distribution> {
    let grid = *f.grid();
    require_2d(&grid)?;
    kernel.validate()?;
    if grid.n_per_dim() > ORACLE_MAX_N && !force {
        return Err(Error::ResourceGuard(format!(
            "quadrature oracle costs Theta(n^4 n_angle); n_per_dim = {} exceeds {ORACLE_MAX_N}",
            grid.n_per_dim()
        )));
    }
    if n_angle < 2 {
        return Err(Error::invalid("n_angle", "need at least 2 directions"));
    }
    let n = grid.n_per_dim();
    let h = grid.spacing();
    let width = 2.0 * grid.half_width();
    let r2 = grid.physical_trunc_radius().powi(2);
    let (series, projected) = match interpolation {
        Interpolation::Bilinear => (None, None),
        Interpolation::Trigonometric => {
            let full = forward_transform(f)?;
            let truncated = SpectralCoefficients::from_truncated(grid, &full.truncated());
            let samples = inverse_transform(&truncated);
            (Some(TrigSeries::new(&truncated, grid.half_width())), Some(samples))
        }
    };
    let values = projected.as_ref().map_or(f.values(), |p| p.values());
    let dirs: Vec<(f64, f64)> = (0..n_angle)
        .map(|s| {
            let (sin, cos) = (2.0 * PI * s as f64 / n_angle as f64).sin_cos();
            (cos, sin)
        })
        .collect();
    let dsigma = 2.0 * PI / n_angle as f64;
    let weight = h * h * dsigma;

    let bilinear = |x: f64, y: f64| -> f64 {
        let gx = (x + grid.half_width()) / h;
        let gy = (y + grid.half_width()) / h;
        let (fx, fy) = (gx.floor(), gy.floor());
        let (tx, ty) = (gx - fx, gy - fy);
        let i0 = (fx as i64).rem_euclid(n as i64) as usize;
        let j0 = (fy as i64).rem_euclid(n as i64) as usize;
        let (i1, j1) = ((i0 + 1) % n, (j0 + 1) % n);
        let at = |i: usize, j: usize| values[i * n + j];
        (1.0 - tx) * ((1.0 - ty) * at(i0, j0) + ty * at(i0, j1)) + tx * ((1.0 - ty) * at(i1, j0) + ty * at(i1, j1))
    };
    let wrap = |d: f64| d - width * (d / width + 0.5).floor();

    let out: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map_init(
            || vec![Complex64::new(0.0, 0.0); 2 * grid.max_mode() + 1],
            |ex, i| {
            let mut ey = ex.clone();
            let mut interp = |x: f64, y: f64| -> f64 {
                match &series {
                    Some(s) => s.eval(x, y, ex, &mut ey),
                    None => bilinear(x, y),
                }
            };
            let v = grid.node(i);
            let mut q = 0.0;
            for (j, &fj) in values.iter().enumerate() {
                let w = grid.node(j);
                let (gx, gy) = (wrap(v[0] - w[0]), wrap(v[1] - w[1]));
                let g2 = gx * gx + gy * gy;
                if g2 == 0.0 {
                    continue;
                }
                let g = g2.sqrt();
                let b = kernel.eval(g);
                let (cx, cy) = (v[0] - 0.5 * gx, v[1] - 0.5 * gy);
                for &(sx, sy) in &dirs {
                    // x = (|g| sigma - g) / 2, y = -(|g| sigma + g) / 2
                    let (xx, xy) = (0.5 * (g * sx - gx), 0.5 * (g * sy - gy));
                    let (yx, yy) = (-0.5 * (g * sx + gx), -0.5 * (g * sy + gy));
                    if xx * xx + xy * xy > r2 || yx * yx + yy * yy > r2 {
                        continue;
                    }
                    let gain = interp(cx + 0.5 * g * sx, cy + 0.5 * g * sy)
                        * interp(cx - 0.5 * g * sx, cy - 0.5 * g * sy);
                    q += b * (gain - values[i] * fj);
                }
            }
            q * weight
        })
        .collect();
    Ok(Distribution::from_raw(grid, out))
}
