//! Discrete Fourier coefficients of grid samples in mapped `[-pi, pi)` units.
//!
//! A grid of `n` points per axis carries the modes `k in [-n/2, n/2 - 1]^d`.
//! The collision operators only use the symmetric block `|k_a| <= N` with
//! `N = n/2 - 1`; the extra `-n/2` layer is kept here so the transform pair is
//! an exact identity on arbitrary grid samples.

use num_complex::Complex64;

use super::fft::fft_nd;
use crate::error::Result;
use crate::grid::{Distribution, VelocityGrid};

/// Imaginary residue above which [`inverse_transform`] logs a warning.
pub const IMAG_RESIDUE_WARN: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoefficients {
    grid: VelocityGrid,
    /// Row-major over `k + n/2`, first axis slowest.
    coeffs: Vec<Complex64>,
}

/// Flattening of the retained block `[-N, N]^d` used by kernel tables and the
/// collision sums: `idx = sum_a (k_a + N) (2N+1)^{d-1-a}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeLayout {
    pub dim: usize,
    pub max_mode: usize,
}

impl ModeLayout {
    pub fn of(grid: &VelocityGrid) -> Self {
        Self { dim: grid.dim(), max_mode: grid.max_mode() }
    }

    pub fn width(&self) -> usize {
        2 * self.max_mode + 1
    }

    pub fn len(&self) -> usize {
        self.width().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, k: &[i64]) -> Option<usize> {
        let n = self.max_mode as i64;
        let w = self.width();
        let mut idx = 0;
        for &ka in &k[..self.dim] {
            if ka.abs() > n {
                return None;
            }
            idx = idx * w + (ka + n) as usize;
        }
        Some(idx)
    }

    pub fn mode(&self, mut idx: usize) -> [i64; 3] {
        let w = self.width();
        let mut k = [0i64; 3];
        for a in (0..self.dim).rev() {
            k[a] = (idx % w) as i64 - self.max_mode as i64;
            idx /= w;
        }
        k
    }
}

impl SpectralCoefficients {
    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    pub fn zeros(grid: VelocityGrid) -> Self {
        Self { grid, coeffs: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn layout(&self) -> ModeLayout {
        ModeLayout::of(&self.grid)
    }

    /// All `n^d` coefficients, ordered by `k + n/2`.
    pub fn raw(&self) -> &[Complex64] {
        &self.coeffs
    }

    fn position(&self, k: &[i64]) -> Option<usize> {
        let half = (self.grid.n_per_dim() / 2) as i64;
        let n = self.grid.n_per_dim();
        let mut p = 0;
        for &ka in &k[..self.grid.dim()] {
            if ka < -half || ka >= half {
                return None;
            }
            p = p * n + (ka + half) as usize;
        }
        Some(p)
    }

    /// Coefficient of mode `k`; zero outside `[-n/2, n/2 - 1]^d`.
    pub fn get(&self, k: &[i64]) -> Complex64 {
        self.position(k).map_or(Complex64::new(0.0, 0.0), |p| self.coeffs[p])
    }

    pub fn set(&mut self, k: &[i64], value: Complex64) {
        if let Some(p) = self.position(k) {
            self.coeffs[p] = value;
        }
    }

    /// Retained block `|k_a| <= N` in [`ModeLayout`] order.
    pub fn truncated(&self) -> Vec<Complex64> {
        let layout = self.layout();
        (0..layout.len()).map(|i| self.get(&layout.mode(i))).collect()
    }

    /// Coefficients equal to `values` on the retained block and zero on the
    /// `-n/2` layer.
    pub fn from_truncated(grid: VelocityGrid, values: &[Complex64]) -> Self {
        let mut out = Self::zeros(grid);
        let layout = ModeLayout::of(&grid);
        debug_assert_eq!(values.len(), layout.len());
        for (i, v) in values.iter().enumerate() {
            out.set(&layout.mode(i), *v);
        }
        out
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { grid: self.grid, coeffs: self.coeffs.iter().map(|z| z * c).collect() }
    }

    /// `sum |f_k|` over the retained block.
    pub fn l1_norm(&self) -> f64 {
        self.truncated().iter().map(|z| z.norm()).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    /// `max_k |c(-k) - conj c(k)|` over the retained block.
    pub fn hermitian_defect(&self) -> f64 {
        let layout = self.layout();
        (0..layout.len())
            .map(|i| {
                let k = layout.mode(i);
                let neg = [-k[0], -k[1], -k[2]];
                (self.get(&neg) - self.get(&k).conj()).norm()
            })
            .fold(0.0, f64::max)
    }
}

fn sign_of(k: &[i64]) -> f64 {
    if k.iter().sum::<i64>().rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `f_k = n^{-d} sum_j f_j e^{-i k . xi_j}` with `xi_j = -pi + 2 pi j / n`.
pub fn forward_transform(f: &Distribution) -> Result<SpectralCoefficients> {
    let grid = *f.grid();
    let (n, d) = (grid.n_per_dim(), grid.dim());
    let mut data: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut data, n, d, false);
    let norm = 1.0 / grid.len() as f64;
    let mut out = SpectralCoefficients::zeros(grid);
    let half = (n / 2) as i64;
    for (q, x) in data.iter().enumerate() {
        let idx = grid.multi_index(q);
        let mut k = [0i64; 3];
        for a in 0..d {
            let i = idx[a] as i64;
            k[a] = if i >= half { i - n as i64 } else { i };
        }
        out.set(&k, x * (norm * sign_of(&k[..d])));
    }
    Ok(out)
}

/// Complex samples `sum_k c_k e^{i k . xi_j}` at the grid nodes.
pub fn inverse_transform_complex(c: &SpectralCoefficients) -> Vec<Complex64> {
    let grid = c.grid;
    let (n, d) = (grid.n_per_dim(), grid.dim());
    let half = (n / 2) as i64;
    let mut data = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (q, x) in data.iter_mut().enumerate() {
        let idx = grid.multi_index(q);
        let mut k = [0i64; 3];
        for a in 0..d {
            let i = idx[a] as i64;
            k[a] = if i >= half { i - n as i64 } else { i };
        }
        *x = c.get(&k) * sign_of(&k[..d]);
    }
    fft_nd(&mut data, n, d, true);
    data
}

/// Real part of [`inverse_transform_complex`]; warns when the discarded
/// imaginary residue exceeds [`IMAG_RESIDUE_WARN`] relative to the output.
pub fn inverse_transform(c: &SpectralCoefficients) -> Distribution {
    let data = inverse_transform_complex(c);
    let scale = data.iter().fold(1.0f64, |m, z| m.max(z.re.abs()));
    let imag = data.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    if imag > IMAG_RESIDUE_WARN * scale {
        log::warn!("inverse transform discards imaginary residue {imag:e} (input not Hermitian)");
    }
    Distribution::from_raw(c.grid, data.into_iter().map(|z| z.re).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VelocityGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid(n: usize, l: f64) -> VelocityGrid {
        VelocityGrid::with_default_radius(2, n, l).unwrap()
    }

    #[test]
    fn constant_has_only_mean_mode() {
        let g = grid(8, 3.0);
        let c = forward_transform(&Distribution::from_fn(g, |_| 2.5)).unwrap();
        for (i, z) in c.raw().iter().enumerate() {
            let expected = if i == c.position(&[0, 0]).unwrap() { 2.5 } else { 0.0 };
            assert!((z - Complex64::new(expected, 0.0)).norm() < 1e-14);
        }
        let back = inverse_transform(&c);
        assert!(back.values().iter().all(|v| (v - 2.5).abs() < 1e-14));
    }

    #[test]
    fn cosine_splits_into_two_modes() {
        let g = grid(8, 5.0);
        let f = Distribution::from_fn(g, |v| (v[0] * PI / 5.0).cos());
        let c = forward_transform(&f).unwrap();
        assert!((c.get(&[1, 0]) - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        assert!((c.get(&[-1, 0]) - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        let others: f64 = c.raw().iter().map(|z| z.norm()).sum::<f64>() - 1.0;
        assert!(others.abs() < 1e-13);
        let back = inverse_transform(&c);
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn random_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &n in &[4usize, 8, 16] {
            let g = grid(n, 4.0);
            let f = Distribution::from_fn(g, |_| rng.gen_range(-1.0..1.0));
            let c = forward_transform(&f).unwrap();
            let back = inverse_transform(&c);
            let err = back.values().iter().zip(f.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-12);
            assert!(c.hermitian_defect() < 1e-14);
        }
    }

    #[test]
    fn layout_round_trip() {
        let layout = ModeLayout { dim: 2, max_mode: 3 };
        for i in 0..layout.len() {
            assert_eq!(layout.index(&layout.mode(i)), Some(i));
        }
        assert_eq!(layout.index(&[4, 0, 0]), None);
    }
}
