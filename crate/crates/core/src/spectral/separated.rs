//! Rank-`A` separated approximation `beta(l, m) ~ sum_p alpha_p(l) alpha'_p(m)`.
//!
//! The factorization is the optimal (in the spectral norm) rank-`A`
//! truncation of the `M x M` table viewed as a matrix over flattened mode
//! indices. When the table carries quadrature factors of inner dimension
//! `q < M`, the truncation is computed from thin QR factors of both sides and
//! an SVD of the `q x q` core; otherwise from a full SVD of the table. Both
//! routes work per parity block, so each factor is even or odd in `l`.
//! The diagonal `beta(m, m)` of the loss term is kept exact.

use nalgebra::{DMatrix, SVD};
use rayon::prelude::*;

use super::kernel::KernelModes;
use super::transform::ModeLayout;
use crate::error::{Error, Result};
use crate::grid::VelocityGrid;

#[derive(Debug, Clone)]
pub struct SeparatedKernel {
    grid: VelocityGrid,
    layout: ModeLayout,
    rank: usize,
    /// `alpha_p(l)`, one vector of length `M` per term.
    left: Vec<Vec<f64>>,
    /// `alpha'_p(m)`.
    right: Vec<Vec<f64>>,
    diag: Vec<f64>,
    scale: f64,
    singular_values: Vec<f64>,
    reconstruction_error: f64,
}

impl SeparatedKernel {
    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    pub fn layout(&self) -> ModeLayout {
        self.layout
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn left(&self, p: usize) -> &[f64] {
        &self.left[p]
    }

    pub fn right(&self, p: usize) -> &[f64] {
        &self.right[p]
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn physical_scale(&self) -> f64 {
        self.scale
    }

    /// Singular values of the full table, descending (length is the numerical
    /// rank bound: `min(M, q)`).
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// `max_{l,m} |beta(l, m) - sum_p alpha_p(l) alpha'_p(m)|`, in mapped units.
    pub fn reconstruction_error(&self) -> f64 {
        self.reconstruction_error
    }

    /// Separated kernel from caller-supplied factors, e.g. for grids whose
    /// full table is too large to build. Carries no certificate: the
    /// reconstruction error is infinite and no singular values are known.
    /// Factors are taken in physical units.
    pub fn from_factors(grid: VelocityGrid, left: Vec<Vec<f64>>, right: Vec<Vec<f64>>, diag: Vec<f64>) -> Result<Self> {
        if grid.dim() != 2 {
            return Err(Error::UnsupportedDimension(grid.dim()));
        }
        let layout = ModeLayout::of(&grid);
        let m_len = layout.len();
        if left.is_empty() || left.len() != right.len() {
            return Err(Error::invalid("left", "need a matching, nonempty set of left and right factors"));
        }
        if left.iter().chain(&right).chain(std::iter::once(&diag)).any(|v| v.len() != m_len) {
            return Err(Error::GridMismatch(format!("factors must have one entry per mode ({m_len})")));
        }
        Ok(Self {
            grid,
            layout,
            rank: left.len(),
            left,
            right,
            diag,
            scale: 1.0,
            singular_values: Vec::new(),
            reconstruction_error: f64::INFINITY,
        })
    }

    pub fn approx(&self, l: usize, m: usize) -> f64 {
        (0..self.rank).map(|p| self.left[p][l] * self.right[p][m]).sum()
    }
}

struct Factorization {
    /// `M x r` with columns scaled by the singular values.
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    sigma: Vec<f64>,
}

fn sorted_svd(m: DMatrix<f64>) -> Factorization {
    let svd = SVD::new(m, true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut us = DMatrix::zeros(u.nrows(), order.len());
    let mut vs = DMatrix::zeros(vt.ncols(), order.len());
    for (c, &i) in order.iter().enumerate() {
        us.set_column(c, &(u.column(i) * sigma[c]));
        vs.set_column(c, &vt.row(i).transpose());
    }
    Factorization { u: us, v: vs, sigma }
}

/// Even (`sign = 1`) or odd (`sign = -1`) part of every column under
/// `l -> -l`, which in the mode layout is the row reversal `i -> M - 1 - i`.
/// The result is exactly symmetric or antisymmetric in floating point.
fn parity_part(m: &DMatrix<f64>, sign: f64) -> DMatrix<f64> {
    let r = m.nrows();
    DMatrix::from_fn(r, m.ncols(), |i, j| 0.5 * (m[(i, j)] + sign * m[(r - 1 - i, j)]))
}

/// Isotropic kernels satisfy `beta(-l, -m) = beta(l, m)`, so the table is the
/// sum of its even-even and odd-odd parity blocks. Each block is factorized
/// on its own, which makes every factor purely even or odd; the fast path
/// exploits this. Any asymmetry of the table shows up in the certified
/// reconstruction error.
fn factorize(km: &KernelModes) -> Factorization {
    let m_len = km.n_modes();
    let mut parts = Vec::new();
    let mut bound = m_len;
    for sign in [1.0, -1.0] {
        let f = match km.factors() {
            Some((left, right)) if left.ncols() < m_len => {
                bound = left.ncols().min(m_len);
                let ql = parity_part(left, sign).qr();
                let qr = parity_part(right, sign).qr();
                let core = ql.r() * qr.r().transpose();
                let f = sorted_svd(core);
                Factorization { u: ql.q() * f.u, v: qr.q() * f.v, sigma: f.sigma }
            }
            _ => {
                let table = DMatrix::from_row_slice(m_len, m_len, km.table());
                let block = parity_part(&parity_part(&table, sign).transpose(), sign).transpose();
                sorted_svd(block)
            }
        };
        for c in 0..f.sigma.len() {
            let u = parity_part(&f.u.columns(c, 1).into_owned(), sign);
            let v = parity_part(&f.v.columns(c, 1).into_owned(), sign);
            parts.push((f.sigma[c], u, v));
        }
    }
    // Stable: ties keep even terms first.
    parts.sort_by(|a, b| b.0.total_cmp(&a.0));
    parts.truncate(bound);
    let mut u = DMatrix::zeros(m_len, parts.len());
    let mut v = DMatrix::zeros(m_len, parts.len());
    for (c, (_, pu, pv)) in parts.iter().enumerate() {
        u.set_column(c, &pu.column(0));
        v.set_column(c, &pv.column(0));
    }
    Factorization { u, v, sigma: parts.into_iter().map(|p| p.0).collect() }
}

/// Rank-`rank` separated approximation of `km`, with its certified max-norm
/// reconstruction error.
pub fn decompose_kernel(km: &KernelModes, rank: usize) -> Result<SeparatedKernel> {
    let m_len = km.n_modes();
    if rank == 0 {
        return Err(Error::invalid("rank", "must be at least 1"));
    }
    if rank > m_len {
        return Err(Error::RankExceedsTable { requested: rank, max: m_len });
    }
    let f = factorize(km);
    let available = f.sigma.len();
    let mut left = Vec::with_capacity(rank);
    let mut right = Vec::with_capacity(rank);
    for p in 0..rank {
        if p < available {
            left.push(f.u.column(p).iter().copied().collect());
            right.push(f.v.column(p).iter().copied().collect());
        } else {
            left.push(vec![0.0; m_len]);
            right.push(vec![0.0; m_len]);
        }
    }
    let mut sk = SeparatedKernel {
        grid: *km.grid(),
        layout: km.layout(),
        rank,
        left,
        right,
        diag: km.diag().to_vec(),
        scale: km.physical_scale(),
        singular_values: f.sigma,
        reconstruction_error: 0.0,
    };
    sk.reconstruction_error = max_residual(km, &sk);
    Ok(sk)
}

fn max_residual(km: &KernelModes, sk: &SeparatedKernel) -> f64 {
    let m_len = km.n_modes();
    (0..m_len)
        .into_par_iter()
        .map(|l| {
            let coeffs: Vec<f64> = (0..sk.rank).map(|p| sk.left[p][l]).collect();
            let mut worst = 0.0f64;
            for m in 0..m_len {
                let mut approx = 0.0;
                for (p, c) in coeffs.iter().enumerate() {
                    approx += c * sk.right[p][m];
                }
                worst = worst.max((km.beta(l, m) - approx).abs());
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

/// Smallest rank whose reconstruction error is at most `rel_tol * max|beta|`.
pub fn rank_for_tolerance(km: &KernelModes, rel_tol: f64) -> Result<usize> {
    let scale = km.table().iter().fold(0.0f64, |m, b| m.max(b.abs()));
    let f = factorize(km);
    // The spectral-norm tail bounds the max-norm residual from above.
    let mut tail = f.sigma.iter().sum::<f64>();
    let mut candidate = f.sigma.len();
    for (p, s) in f.sigma.iter().enumerate() {
        if tail <= rel_tol * scale {
            candidate = p.max(1);
            break;
        }
        tail -= s;
    }
    // Walk down to the first rank that meets the tolerance exactly.
    let mut best = candidate.min(km.n_modes());
    let mut lo = 1;
    while lo < best {
        let mid = (lo + best) / 2;
        if decompose_kernel(km, mid)?.reconstruction_error() <= rel_tol * scale {
            best = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::kernel::{compute_kernel_modes, CollisionKernel};

    fn modes(n: usize) -> KernelModes {
        let g = VelocityGrid::with_default_radius(2, n, 6.0).unwrap();
        compute_kernel_modes(&g, CollisionKernel::Maxwell, None).unwrap()
    }

    #[test]
    fn full_rank_is_exact() {
        let km = modes(8);
        let sk = decompose_kernel(&km, km.n_modes()).unwrap();
        assert!(sk.reconstruction_error() <= 1e-10, "{:e}", sk.reconstruction_error());
    }

    #[test]
    fn error_shrinks_with_rank() {
        let km = modes(8);
        let errs: Vec<f64> = [1, 2, 4, 8, 16, 32, 49]
            .iter()
            .map(|&a| decompose_kernel(&km, a).unwrap().reconstruction_error())
            .collect();
        for w in errs.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{errs:?}");
        }
    }

    #[test]
    fn rejects_excess_rank() {
        let km = modes(8);
        assert!(matches!(decompose_kernel(&km, 50), Err(Error::RankExceedsTable { requested: 50, max: 49 })));
        assert!(decompose_kernel(&km, 0).is_err());
    }

    #[test]
    fn factors_have_definite_parity() {
        let km = modes(8);
        let sk = decompose_kernel(&km, 20).unwrap();
        let m = km.n_modes();
        for p in 0..sk.rank() {
            let (l, r) = (sk.left(p), sk.right(p));
            let even = (0..m).all(|i| l[i] == l[m - 1 - i] && r[i] == r[m - 1 - i]);
            let odd = (0..m).all(|i| l[i] == -l[m - 1 - i] && r[i] == -r[m - 1 - i]);
            assert!(even || odd, "term {p}");
        }
    }

    #[test]
    fn dense_and_factored_routes_agree() {
        let km = modes(16);
        assert!(km.factors().unwrap().0.ncols() < km.n_modes());
        let dense = {
            let m_len = km.n_modes();
            sorted_svd(DMatrix::from_row_slice(m_len, m_len, km.table())).sigma
        };
        let sk = decompose_kernel(&km, 4).unwrap();
        for (a, b) in sk.singular_values().iter().zip(&dense) {
            assert!((a - b).abs() <= 1e-10 * dense[0]);
        }
    }
}
