//! Fast cosine and Fourier transforms backing the direct elliptic solvers.
//!
//! The cell-centered Neumann Laplacian diagonalizes in the DCT-II basis
//! `cos(pi k (2n+1) / (2N))` with eigenvalues `-(4/h^2) sin^2(pi k / (2N))`;
//! the periodic Laplacian diagonalizes in the DFT basis with eigenvalues
//! `-(4/h^2) sin^2(pi k / N)`. Both transforms are computed through a
//! length-2N (resp. N) complex FFT, so any grid size works.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// One-dimensional DCT-II / DCT-III pair of a fixed length.
pub struct CosineTransform {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    // e^{-i pi k / (2N)} twiddles shared by both directions
    twiddle: Vec<Complex64>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl CosineTransform {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(2 * n);
        let ifft = planner.plan_fft_inverse(2 * n);
        let scratch_len = fft
            .get_inplace_scratch_len()
            .max(ifft.get_inplace_scratch_len());
        let twiddle = (0..n)
            .map(|k| Complex64::from_polar(1.0, -PI * k as f64 / (2.0 * n as f64)))
            .collect();
        Self {
            n,
            fft,
            twiddle,
            buf: vec![Complex64::default(); 2 * n],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    /// Unnormalized DCT-II: `out[k] = sum_n in[n] cos(pi k (2n+1) / (2N))`.
    pub fn forward(&mut self, input: &[f64], output: &mut [f64]) {
        let n = self.n;
        assert_eq!(input.len(), n);
        assert_eq!(output.len(), n);
        for i in 0..n {
            self.buf[i] = Complex64::new(input[i], 0.0);
            self.buf[2 * n - 1 - i] = Complex64::new(input[i], 0.0);
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        for k in 0..n {
            output[k] = 0.5 * (self.twiddle[k] * self.buf[k]).re;
        }
    }

    /// Unnormalized DCT-III: `out[n] = sum_k in[k] cos(pi k (2n+1) / (2N))`.
    ///
    /// `forward` followed by `inverse` multiplies by `N/2` and adds `N/2 * mean`
    /// through the k = 0 term; the Poisson solvers fold the normalization into
    /// their eigenvalue division.
    pub fn inverse(&mut self, input: &[f64], output: &mut [f64]) {
        let n = self.n;
        assert_eq!(input.len(), n);
        assert_eq!(output.len(), n);
        for k in 0..n {
            // b_k = in[k] e^{+i pi k / (2N)}; then out[n] = Re IFFT_{2N}(b)[n]
            self.buf[k] = self.twiddle[k].conj() * input[k];
        }
        for k in n..2 * n {
            self.buf[k] = Complex64::default();
        }
        // Inverse transform of the forward plan: conjugate trick keeps one plan.
        for v in self.buf.iter_mut() {
            *v = v.conj();
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        for i in 0..n {
            output[i] = self.buf[i].conj().re;
        }
    }
}

/// Direct solver for the cell-centered five-point Laplacian with homogeneous
/// Neumann walls on an `nx` x `ny` grid: `div grad p = rhs`, mean-zero `p`.
pub struct NeumannPoisson {
    nx: usize,
    ny: usize,
    dct_x: CosineTransform,
    dct_y: CosineTransform,
    // -(4/h^2) sin^2(pi k / (2N)) per axis
    eig_x: Vec<f64>,
    eig_y: Vec<f64>,
    work: Vec<f64>,
    line: Vec<f64>,
    line_out: Vec<f64>,
}

impl NeumannPoisson {
    pub fn new(nx: usize, ny: usize, hx: f64, hy: f64) -> Self {
        let eig = |n: usize, h: f64| -> Vec<f64> {
            (0..n)
                .map(|k| {
                    let s = (PI * k as f64 / (2.0 * n as f64)).sin();
                    -4.0 / (h * h) * s * s
                })
                .collect()
        };
        Self {
            nx,
            ny,
            dct_x: CosineTransform::new(nx),
            dct_y: CosineTransform::new(ny),
            eig_x: eig(nx, hx),
            eig_y: eig(ny, hy),
            work: vec![0.0; nx * ny],
            line: vec![0.0; nx.max(ny)],
            line_out: vec![0.0; nx.max(ny)],
        }
    }

    /// Solves in place; `field` is row-major with `y` as the slow index.
    /// The (0,0) mode is dropped, so the result has exactly zero mean and the
    /// right-hand side is implicitly projected onto mean-zero data.
    pub fn solve(&mut self, field: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        assert_eq!(field.len(), nx * ny);

        for j in 0..ny {
            self.dct_x
                .forward(&field[j * nx..(j + 1) * nx], &mut self.work[j * nx..(j + 1) * nx]);
        }
        for i in 0..nx {
            for j in 0..ny {
                self.line[j] = self.work[j * nx + i];
            }
            self.dct_y.forward(&self.line[..ny], &mut self.line_out[..ny]);
            for j in 0..ny {
                self.work[j * nx + i] = self.line_out[j];
            }
        }

        // forward->inverse gains nx/2 * ny/2 except on the k=0 lines (factor 2 each)
        for j in 0..ny {
            for i in 0..nx {
                let lam = self.eig_x[i] + self.eig_y[j];
                let mut scale = (nx as f64 / 2.0) * (ny as f64 / 2.0);
                if i == 0 {
                    scale *= 2.0;
                }
                if j == 0 {
                    scale *= 2.0;
                }
                let idx = j * nx + i;
                if i == 0 && j == 0 {
                    self.work[idx] = 0.0;
                } else {
                    self.work[idx] /= lam * scale;
                }
            }
        }

        for i in 0..nx {
            for j in 0..ny {
                self.line[j] = self.work[j * nx + i];
            }
            self.dct_y.inverse(&self.line[..ny], &mut self.line_out[..ny]);
            for j in 0..ny {
                self.work[j * nx + i] = self.line_out[j];
            }
        }
        for j in 0..ny {
            self.dct_x
                .inverse(&self.work[j * nx..(j + 1) * nx], &mut field[j * nx..(j + 1) * nx]);
        }
    }
}

/// Direct solver for `-c div grad p = rhs` on the fully periodic unit cell,
/// used as the conjugate-gradient preconditioner of the cell problem.
pub struct PeriodicPoisson {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    symbol: Vec<f64>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
    line: Vec<Complex64>,
}

impl PeriodicPoisson {
    /// `n` x `n` grid of spacing `h = 1/n`; `c` is the constant coefficient.
    pub fn new(n: usize, c: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let scratch_len = fft
            .get_inplace_scratch_len()
            .max(ifft.get_inplace_scratch_len());
        let h = 1.0 / n as f64;
        let lam1d: Vec<f64> = (0..n)
            .map(|k| {
                let s = (PI * k as f64 / n as f64).sin();
                4.0 / (h * h) * s * s
            })
            .collect();
        let mut symbol = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                symbol[j * n + i] = c * (lam1d[i] + lam1d[j]);
            }
        }
        Self {
            n,
            fft,
            ifft,
            symbol,
            buf: vec![Complex64::default(); n * n],
            scratch: vec![Complex64::default(); scratch_len],
            line: vec![Complex64::default(); n],
        }
    }

    /// Applies the inverse of `-c div grad` with the zero mode removed.
    pub fn apply_inverse(&mut self, rhs: &[f64], out: &mut [f64]) {
        let n = self.n;
        assert_eq!(rhs.len(), n * n);
        assert_eq!(out.len(), n * n);
        for (b, &r) in self.buf.iter_mut().zip(rhs) {
            *b = Complex64::new(r, 0.0);
        }
        for j in 0..n {
            self.fft
                .process_with_scratch(&mut self.buf[j * n..(j + 1) * n], &mut self.scratch);
        }
        for i in 0..n {
            for j in 0..n {
                self.line[j] = self.buf[j * n + i];
            }
            self.fft.process_with_scratch(&mut self.line, &mut self.scratch);
            for j in 0..n {
                self.buf[j * n + i] = self.line[j];
            }
        }
        for (b, &s) in self.buf.iter_mut().zip(&self.symbol) {
            *b = if s == 0.0 { Complex64::default() } else { *b / s };
        }
        for i in 0..n {
            for j in 0..n {
                self.line[j] = self.buf[j * n + i];
            }
            self.ifft.process_with_scratch(&mut self.line, &mut self.scratch);
            for j in 0..n {
                self.buf[j * n + i] = self.line[j];
            }
        }
        let norm = 1.0 / (n * n) as f64;
        for j in 0..n {
            self.ifft
                .process_with_scratch(&mut self.buf[j * n..(j + 1) * n], &mut self.scratch);
            for i in 0..n {
                out[j * n + i] = self.buf[j * n + i].re * norm;
            }
        }
    }
}

/// Leray projection of a collocated periodic vector field through its
/// Fourier symbol: every nonzero mode loses its component along the
/// wavevector. Orthogonal in l2, so constrained minimization by projected
/// conjugate gradients stays symmetric.
pub struct PeriodicProjector {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    /// signed wavenumbers in FFT layout
    wave: Vec<f64>,
    buf1: Vec<Complex64>,
    buf2: Vec<Complex64>,
    scratch: Vec<Complex64>,
    line: Vec<Complex64>,
}

impl PeriodicProjector {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let scratch_len = fft
            .get_inplace_scratch_len()
            .max(ifft.get_inplace_scratch_len());
        // Nyquist wavenumber zeroed (real-signal derivative convention);
        // otherwise the kx*ky coupling breaks conjugate symmetry and the
        // real-part extraction stops being a projection.
        let wave = (0..n)
            .map(|k| {
                let kk = if 2 * k < n {
                    k as f64
                } else if 2 * k == n {
                    0.0
                } else {
                    k as f64 - n as f64
                };
                2.0 * PI * kk
            })
            .collect();
        PeriodicProjector {
            n,
            fft,
            ifft,
            wave,
            buf1: vec![Complex64::default(); n * n],
            buf2: vec![Complex64::default(); n * n],
            scratch: vec![Complex64::default(); scratch_len],
            line: vec![Complex64::default(); n],
        }
    }

    fn fft2(&mut self, which: usize, forward: bool) {
        let n = self.n;
        let plan = if forward { &self.fft } else { &self.ifft };
        let buf = if which == 0 { &mut self.buf1 } else { &mut self.buf2 };
        for j in 0..n {
            plan.process_with_scratch(&mut buf[j * n..(j + 1) * n], &mut self.scratch);
        }
        for i in 0..n {
            for j in 0..n {
                self.line[j] = buf[j * n + i];
            }
            plan.process_with_scratch(&mut self.line, &mut self.scratch);
            for j in 0..n {
                buf[j * n + i] = self.line[j];
            }
        }
    }

    /// Projects (w1, w2) in place onto the spectrally divergence-free
    /// subspace; the zero mode is left untouched.
    pub fn project(&mut self, w1: &mut [f64], w2: &mut [f64]) {
        let n = self.n;
        assert_eq!(w1.len(), n * n);
        assert_eq!(w2.len(), n * n);
        for i in 0..n * n {
            self.buf1[i] = Complex64::new(w1[i], 0.0);
            self.buf2[i] = Complex64::new(w2[i], 0.0);
        }
        self.fft2(0, true);
        self.fft2(1, true);
        for j in 0..n {
            for i in 0..n {
                let (kx, ky) = (self.wave[i], self.wave[j]);
                let k2 = kx * kx + ky * ky;
                if k2 == 0.0 {
                    continue;
                }
                let idx = j * n + i;
                let dot = (kx * self.buf1[idx] + ky * self.buf2[idx]) / k2;
                self.buf1[idx] -= kx * dot;
                self.buf2[idx] -= ky * dot;
            }
        }
        self.fft2(0, false);
        self.fft2(1, false);
        let norm = 1.0 / (n * n) as f64;
        for i in 0..n * n {
            w1[i] = self.buf1[i].re * norm;
            w2[i] = self.buf2[i].re * norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dct2_naive(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                (0..n)
                    .map(|m| x[m] * (PI * k as f64 * (2 * m + 1) as f64 / (2.0 * n as f64)).cos())
                    .sum()
            })
            .collect()
    }

    #[test]
    fn dct_matches_naive_definition() {
        for n in [4usize, 7, 8, 12] {
            let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7 + 0.3).sin()).collect();
            let mut ct = CosineTransform::new(n);
            let mut out = vec![0.0; n];
            ct.forward(&x, &mut out);
            let want = dct2_naive(&x);
            for (a, b) in out.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn dct_roundtrip_recovers_input() {
        let n = 10;
        let x: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let mut ct = CosineTransform::new(n);
        let mut spec = vec![0.0; n];
        let mut back = vec![0.0; n];
        ct.forward(&x, &mut spec);
        // orthogonality: forward o inverse = diag(N, N/2, ..., N/2)
        spec[0] /= n as f64;
        for v in spec.iter_mut().skip(1) {
            *v /= n as f64 / 2.0;
        }
        ct.inverse(&spec, &mut back);
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn neumann_poisson_solves_cosine_mode() {
        // rhs = cos(pi k x) cos(pi l y) sampled at cell centers is an exact
        // eigenvector of the discrete operator.
        let (nx, ny) = (24, 16);
        let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
        let (k, l) = (3usize, 2usize);
        let mut rhs = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let x = (i as f64 + 0.5) * hx;
                let y = (j as f64 + 0.5) * hy;
                rhs[j * nx + i] = (PI * k as f64 * x).cos() * (PI * l as f64 * y).cos();
            }
        }
        let lam = -4.0 / (hx * hx) * (PI * k as f64 / (2.0 * nx as f64)).sin().powi(2)
            - 4.0 / (hy * hy) * (PI * l as f64 / (2.0 * ny as f64)).sin().powi(2);
        let mut sol = rhs.clone();
        let mut solver = NeumannPoisson::new(nx, ny, hx, hy);
        solver.solve(&mut sol);
        for (s, r) in sol.iter().zip(&rhs) {
            assert!((s - r / lam).abs() < 1e-12);
        }
    }

    #[test]
    fn projector_fixes_divfree_and_kills_gradients() {
        let n = 24;
        let h = 1.0 / n as f64;
        let at = |i: usize| (i as f64 + 0.5) * h;
        // div-free field from a stream function: (d psi/dy, -d psi/dx)
        let mut w1 = vec![0.0; n * n];
        let mut w2 = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                let (x, y) = (at(i), at(j));
                w1[j * n + i] = (2.0 * PI * y).cos() * (4.0 * PI * x).sin() * 2.0 * PI;
                w2[j * n + i] = -(2.0 * PI * y).sin() * (4.0 * PI * x).cos() * 4.0 * PI;
            }
        }
        let (a, b) = (w1.clone(), w2.clone());
        let mut p = PeriodicProjector::new(n);
        p.project(&mut w1, &mut w2);
        for i in 0..n * n {
            assert!((w1[i] - a[i]).abs() < 1e-10);
            assert!((w2[i] - b[i]).abs() < 1e-10);
        }
        // gradient field: projected to (almost) zero
        for j in 0..n {
            for i in 0..n {
                let (x, y) = (at(i), at(j));
                w1[j * n + i] = (2.0 * PI * x).cos() * (2.0 * PI * y).cos();
                w2[j * n + i] = -(2.0 * PI * x).sin() * (2.0 * PI * y).sin();
            }
        }
        p.project(&mut w1, &mut w2);
        for v in w1.iter().chain(w2.iter()) {
            assert!(v.abs() < 1e-10, "{v}");
        }
    }

    #[test]
    fn periodic_poisson_inverts_fourier_mode() {
        let n = 32;
        let h = 1.0 / n as f64;
        let c = 2.5;
        let (k, l) = (5usize, 9usize);
        let mut rhs = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                let x = (i as f64 + 0.5) * h;
                let y = (j as f64 + 0.5) * h;
                rhs[j * n + i] = (2.0 * PI * k as f64 * x).cos() * (2.0 * PI * l as f64 * y).sin();
            }
        }
        let lam = c
            * (4.0 / (h * h))
            * ((PI * k as f64 / n as f64).sin().powi(2) + (PI * l as f64 / n as f64).sin().powi(2));
        let mut out = vec![0.0; n * n];
        let mut solver = PeriodicPoisson::new(n, c);
        solver.apply_inverse(&rhs, &mut out);
        for (o, r) in out.iter().zip(&rhs) {
            assert!((o - r / lam).abs() < 1e-11);
        }
    }
}
