//! Thin multidimensional FFT helpers over `rustfft` for cubic arrays.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// In-place unnormalized DFT over every axis of a row-major `[n; dim]` array.
pub(crate) fn fft_nd(data: &mut [Complex64], n: usize, dim: usize, inverse: bool) {
    debug_assert_eq!(data.len(), n.pow(dim as u32));
    let mut planner = FftPlanner::new();
    let plan = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        if stride == 1 {
            plan.process_with_scratch(data, &mut scratch);
            continue;
        }
        let block = stride * n;
        for outer in (0..data.len()).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (i, x) in line.iter_mut().enumerate() {
                    *x = data[base + i * stride];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for (i, x) in line.iter().enumerate() {
                    data[base + i * stride] = *x;
                }
            }
        }
    }
}

/// Planned square 2D transforms used by the convolution path.
///
/// Arrays hold `2h + 1` modes `-h..=h` per axis in wrapped placement, mode
/// `l` at position `l mod n`, so a Hermitian input has a real transform.
/// Compact arrays list the modes in increasing order. Spectra are kept in
/// transposed layout, which is harmless for pointwise products and saves one
/// transpose per direction.
pub(crate) struct Fft2 {
    n: usize,
    half: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl Fft2 {
    pub(crate) fn new(n: usize, half: usize) -> Self {
        assert!(2 * half < n, "modes must fit the transform length");
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Self { n, half, forward, inverse, scratch_len }
    }

    pub(crate) fn len(&self) -> usize {
        self.n
    }

    pub(crate) fn scratch(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.scratch_len]
    }

    /// Places compact values `src` (modes `-h..=h`) into a length-`n` line.
    pub(crate) fn place(&self, line: &mut [Complex64], src: impl ExactSizeIterator<Item = Complex64>) {
        let (n, h) = (self.n, self.half);
        debug_assert_eq!(src.len(), 2 * h + 1);
        for (r, v) in src.enumerate() {
            line[if r < h { n - h + r } else { r - h }] = v;
        }
        line[h + 1..n - h].fill(Complex64::new(0.0, 0.0));
    }

    /// Forward transform of an `n x n` array whose nonzero rows are given
    /// compactly as `rows` (`(2h + 1) x n`, overwritten). The transposed
    /// spectrum is written to `out`.
    pub(crate) fn forward_transposed(&self, rows: &mut [Complex64], out: &mut [Complex64], scratch: &mut [Complex64]) {
        let n = self.n;
        let k = rows.len() / n;
        self.forward.process_with_scratch(rows, scratch);
        for (i, line) in out.chunks_exact_mut(n).enumerate() {
            self.place(line, (0..k).map(|r| rows[r * n + i]));
        }
        self.forward.process_with_scratch(out, scratch);
    }

    /// Inverse of [`Self::forward_transposed`] (unnormalized), restricted to
    /// the rows of modes `-h..=h`, which are written compactly to `out`
    /// (`(2h + 1) x n`). `data` is overwritten.
    pub(crate) fn inverse_from_transposed(&self, data: &mut [Complex64], out: &mut [Complex64], scratch: &mut [Complex64]) {
        let (n, h) = (self.n, self.half);
        self.inverse.process_with_scratch(data, scratch);
        for (r, line) in out.chunks_exact_mut(n).enumerate() {
            let pos = if r < h { n - h + r } else { r - h };
            for (j, x) in line.iter_mut().enumerate() {
                *x = data[j * n + pos];
            }
        }
        self.inverse.process_with_scratch(out, scratch);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft2(x: &[Complex64], n: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for k1 in 0..n {
            for k2 in 0..n {
                let mut s = Complex64::new(0.0, 0.0);
                for j1 in 0..n {
                    for j2 in 0..n {
                        let ph = -2.0 * std::f64::consts::PI * ((k1 * j1 + k2 * j2) % n) as f64 / n as f64;
                        s += x[j1 * n + j2] * Complex64::from_polar(1.0, ph);
                    }
                }
                out[k1 * n + k2] = s;
            }
        }
        out
    }

    #[test]
    fn nd_matches_naive_dft() {
        let n = 6;
        let x: Vec<Complex64> =
            (0..n * n).map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let mut y = x.clone();
        fft_nd(&mut y, n, 2, false);
        let z = naive_dft2(&x, n);
        for (a, b) in y.iter().zip(&z) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn transposed_round_trip() {
        let (n, h) = (8, 2);
        let plan = Fft2::new(n, h);
        let mut scratch = plan.scratch();
        let wrap = |l: usize| if l < h { n - h + l } else { l - h };
        let value = |r: usize, c: usize| Complex64::new((r * 7 + c) as f64, -(c as f64));
        let mut full_input = vec![Complex64::new(0.0, 0.0); n * n];
        let mut rows = vec![Complex64::new(0.0, 0.0); (2 * h + 1) * n];
        for r in 0..=2 * h {
            for c in 0..n {
                full_input[wrap(r) * n + c] = value(r, c);
                rows[r * n + c] = value(r, c);
            }
        }
        let expected = naive_dft2(&full_input, n);
        let mut spec = vec![Complex64::new(0.0, 0.0); n * n];
        plan.forward_transposed(&mut rows, &mut spec, &mut scratch);
        for i in 0..n {
            for j in 0..n {
                assert!((spec[j * n + i] - expected[i * n + j]).norm() < 1e-10);
            }
        }
        let mut back = vec![Complex64::new(0.0, 0.0); (2 * h + 1) * n];
        plan.inverse_from_transposed(&mut spec, &mut back, &mut scratch);
        for r in 0..=2 * h {
            for c in 0..n {
                assert!((back[r * n + c] / (n * n) as f64 - value(r, c)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn hermitian_input_has_real_transform() {
        let (n, h) = (12, 3);
        let plan = Fft2::new(n, h);
        let w = 2 * h + 1;
        let mut scratch = plan.scratch();
        let mut modes = vec![Complex64::new(0.0, 0.0); w * w];
        for i in 0..w * w {
            let j = w * w - 1 - i;
            let v = Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos());
            if i < j {
                modes[i] = v;
                modes[j] = v.conj();
            } else if i == j {
                modes[i] = Complex64::new(v.re, 0.0);
            }
        }
        let mut rows = vec![Complex64::new(0.0, 0.0); w * n];
        for r in 0..w {
            plan.place(&mut rows[r * n..(r + 1) * n], modes[r * w..(r + 1) * w].iter().copied());
        }
        let mut spec = vec![Complex64::new(0.0, 0.0); n * n];
        plan.forward_transposed(&mut rows, &mut spec, &mut scratch);
        assert!(spec.iter().all(|z| z.im.abs() < 1e-12));
    }
}
