//! Evaluation of the spectral collision sum
//! `Q_k = sum_{l + m = k} beta_hat(l, m) f_l f_m` over the retained modes.

use num_complex::Complex64;
use rayon::prelude::*;

use super::fft::Fft2;
use super::kernel::KernelModes;
use super::separated::SeparatedKernel;
use super::transform::{forward_transform, inverse_transform, ModeLayout, SpectralCoefficients};
use crate::error::{Error, Result};
use crate::grid::{Distribution, VelocityGrid};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn check_grid(c: &SpectralCoefficients, grid: &VelocityGrid) -> Result<()> {
    c.grid().check_same(grid)
}

/// Direct double sum over `l + m = k`; `Theta(N^{2d})` work. The result is in
/// physical units.
pub fn spectral_collision_direct(c: &SpectralCoefficients, km: &KernelModes) -> Result<SpectralCoefficients> {
    check_grid(c, km.grid())?;
    let layout = km.layout();
    let f = c.truncated();
    let q = direct_sum(&f, layout, km.table(), km.diag(), km.physical_scale());
    Ok(SpectralCoefficients::from_truncated(*c.grid(), &q))
}

fn direct_sum(f: &[Complex64], layout: ModeLayout, table: &[f64], diag: &[f64], scale: f64) -> Vec<Complex64> {
    let n = layout.max_mode as i64;
    let w = layout.width();
    let m_len = layout.len();
    (0..m_len)
        .into_par_iter()
        .map(|k_idx| {
            let k1 = (k_idx / w) as i64 - n;
            let k2 = (k_idx % w) as i64 - n;
            let mut acc = ZERO;
            for l1 in (k1 - n).max(-n)..=(k1 + n).min(n) {
                let m1 = k1 - l1;
                for l2 in (k2 - n).max(-n)..=(k2 + n).min(n) {
                    let m2 = k2 - l2;
                    let l = (l1 + n) as usize * w + (l2 + n) as usize;
                    let m = (m1 + n) as usize * w + (m2 + n) as usize;
                    let weight = table[l * m_len + m] - diag[m];
                    acc += f[l] * f[m] * weight;
                }
            }
            acc * scale
        })
        .collect()
}

/// Separated terms per accumulation chunk of the fast path.
const TERM_CHUNK: usize = 4;

/// Smallest `2^a 3^b >= n`.
fn smooth_size(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut three = 1;
    while three < best {
        let candidate = three * (n.div_ceil(three)).next_power_of_two();
        best = best.min(candidate);
        three *= 3;
    }
    best
}

/// Parity of a factor under `l -> -l` (row reversal in the mode layout),
/// or `None` if it has none. The zero vector counts as even.
fn parity(v: &[f64]) -> Option<Complex64> {
    let m = v.len();
    if (0..m).all(|i| v[i] == v[m - 1 - i]) {
        Some(Complex64::new(1.0, 0.0))
    } else if (0..m).all(|i| v[i] == -v[m - 1 - i]) {
        Some(Complex64::new(0.0, 1.0))
    } else {
        None
    }
}

/// One product `sign * T(a f) T(b f)` of the convolution sum, `T` being the
/// padded transform.
///
/// For Hermitian `f` and a factor of definite parity, `rho T(a f)` is a real
/// field with `rho = 1` (even) or `i` (odd). One transform of
/// `f (rho_a a + i rho_b b)` then carries both real fields as its real and
/// imaginary parts, and the product is `packed_factor * Re * Im`.
struct Term {
    a: Vec<f64>,
    b: Vec<f64>,
    sign: f64,
    packed: Option<(Vec<Complex64>, Complex64)>,
}

impl Term {
    fn new(a: Vec<f64>, b: Vec<f64>, sign: f64) -> Self {
        let i = Complex64::new(0.0, 1.0);
        let packed = match (parity(&a), parity(&b)) {
            (Some(ra), Some(rb)) => {
                let weight = a.iter().zip(&b).map(|(&x, &y)| ra * x + i * rb * y).collect();
                Some((weight, sign / (ra * rb)))
            }
            _ => None,
        };
        Self { a, b, sign, packed }
    }
}

/// Hermitian projection `(f_l + conj f_{-l}) / 2` when `f` is Hermitian to
/// rounding, as for the transform of a real distribution.
fn hermitian_part(f: &[Complex64]) -> Option<Vec<Complex64>> {
    let m = f.len();
    let scale = f.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let defect = (0..m).map(|i| (f[i] - f[m - 1 - i].conj()).norm()).fold(0.0, f64::max);
    (defect <= 1e-13 * scale).then(|| (0..m).map(|i| (f[i] + f[m - 1 - i].conj()) * 0.5).collect())
}

/// Fast evaluation through `A + 1` zero-padded FFT convolutions.
///
/// Holds the FFT plans so repeated evaluations on the same kernel skip
/// planning. Inputs occupy `2N + 1` slots per axis and the linear
/// convolution spans `4N + 1`; with a padded size `P >= 3N + 1` the
/// wrapped-around part lands only on discarded positions, so every retained
/// mode `|k| <= N` is the exact sum over `l + m = k`. Real distributions with
/// parity-definite factors take one transform per term instead of two.
pub struct FastCollision {
    kernel: SeparatedKernel,
    fft: Fft2,
    terms: Vec<Term>,
}

impl FastCollision {
    pub fn new(kernel: SeparatedKernel) -> Self {
        let n = kernel.layout().max_mode;
        let fft = Fft2::new(smooth_size(3 * n + 1), n);
        let mut terms: Vec<Term> =
            (0..kernel.rank()).map(|p| Term::new(kernel.left(p).to_vec(), kernel.right(p).to_vec(), 1.0)).collect();
        terms.push(Term::new(vec![1.0; kernel.layout().len()], kernel.diag().to_vec(), -1.0));
        Self { kernel, fft, terms }
    }

    pub fn kernel(&self) -> &SeparatedKernel {
        &self.kernel
    }

    pub fn padded_len(&self) -> usize {
        self.fft.len()
    }

    /// Number of terms, loss included, eligible for the packed transform.
    pub fn packed_terms(&self) -> usize {
        self.terms.iter().filter(|t| t.packed.is_some()).count()
    }

    pub fn apply(&self, c: &SpectralCoefficients) -> Result<SpectralCoefficients> {
        check_grid(c, self.kernel.grid())?;
        let f = c.truncated();
        let q = self.apply_truncated(&f);
        Ok(SpectralCoefficients::from_truncated(*c.grid(), &q))
    }

    fn spectrum(
        &self,
        value: impl Fn(usize) -> Complex64,
        rows: &mut [Complex64],
        out: &mut [Complex64],
        scratch: &mut [Complex64],
    ) {
        let p = self.fft.len();
        let w = self.kernel.layout().width();
        for (r, line) in rows.chunks_exact_mut(p).enumerate() {
            self.fft.place(line, (r * w..(r + 1) * w).map(&value));
        }
        self.fft.forward_transposed(rows, out, scratch);
    }

    fn apply_truncated(&self, f: &[Complex64]) -> Vec<Complex64> {
        let sk = &self.kernel;
        let p = self.fft.len();
        let layout = sk.layout();
        let (n, w) = (layout.max_mode, layout.width());
        let hermitian = hermitian_part(f);
        let f = hermitian.as_deref().unwrap_or(f);

        // Terms are summed in fixed chunks, then chunk sums in order, so the
        // result does not depend on the thread count.
        let partials: Vec<Vec<Complex64>> = self
            .terms
            .par_chunks(TERM_CHUNK)
            .map(|chunk| {
                let mut scratch = self.fft.scratch();
                let mut rows = vec![ZERO; w * p];
                let mut a = vec![ZERO; p * p];
                let mut b = vec![ZERO; p * p];
                let mut acc = vec![ZERO; p * p];
                for t in chunk {
                    match (&t.packed, hermitian.is_some()) {
                        (Some((weight, factor)), true) => {
                            self.spectrum(|i| f[i] * weight[i], &mut rows, &mut a, &mut scratch);
                            for (s, z) in acc.iter_mut().zip(&a) {
                                let g = z.re * z.im;
                                s.re += factor.re * g;
                                s.im += factor.im * g;
                            }
                        }
                        _ => {
                            self.spectrum(|i| f[i] * t.a[i], &mut rows, &mut a, &mut scratch);
                            self.spectrum(|i| f[i] * t.b[i], &mut rows, &mut b, &mut scratch);
                            for ((s, x), y) in acc.iter_mut().zip(&a).zip(&b) {
                                *s += x * y * t.sign;
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        let mut partials = partials.into_iter();
        let mut acc = partials.next().expect("at least the loss term");
        for part in partials {
            for (a, t) in acc.iter_mut().zip(&part) {
                *a += t;
            }
        }
        let mut scratch = self.fft.scratch();
        let mut out = vec![ZERO; w * p];
        self.fft.inverse_from_transposed(&mut acc, &mut out, &mut scratch);
        let norm = sk.physical_scale() / (p * p) as f64;
        let mut q = vec![ZERO; layout.len()];
        for r in 0..w {
            for c in 0..w {
                let pos = if c < n { p - n + c } else { c - n };
                q[r * w + c] = out[r * p + pos] * norm;
            }
        }
        q
    }
}

/// One-shot fast evaluation; see [`FastCollision`] to reuse plans.
pub fn spectral_collision_fast(c: &SpectralCoefficients, sk: &SeparatedKernel) -> Result<SpectralCoefficients> {
    FastCollision::new(sk.clone()).apply(c)
}

/// Physical-space wrapper around [`spectral_collision_direct`].
pub fn collide_direct(f: &Distribution, km: &KernelModes) -> Result<Distribution> {
    Ok(inverse_transform(&spectral_collision_direct(&forward_transform(f)?, km)?))
}

/// Physical-space wrapper around [`FastCollision`].
pub fn collide_fast(f: &Distribution, fast: &FastCollision) -> Result<Distribution> {
    Ok(inverse_transform(&fast.apply(&forward_transform(f)?)?))
}

pub(crate) fn require_2d(grid: &VelocityGrid) -> Result<()> {
    if grid.dim() == 2 {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(grid.dim()))
    }
}
