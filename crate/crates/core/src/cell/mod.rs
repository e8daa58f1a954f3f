//! Periodic cell problem: correctors and the homogenized diffusion tensor.
//!
//! For each direction `i` and each tau-slice, the corrector `eta_i` is the
//! zero-mean periodic solution of
//!
//! ```text
//!   div_y( a(y, tau) (grad_y eta_i - e_i) ) = 0
//! ```
//!
//! so the constant-equivalent flux of problem `j` recovers the effective
//! tensor entries
//!
//! ```text
//!   abar_ij = int a_ij dy dtau  -  int sum_m a_im  d eta_j / d y_m  dy dtau
//!           = -mean of the i-th flux component of problem j,
//! ```
//!
//! evaluated here as the face average of the discrete flux, which is exact
//! for grid-aligned layered media and second order for smooth coefficients.
//! Discretization: five-point flux form with harmonic face averages for the
//! diagonal entries, node-collocated symmetric coupling for `a12`, and
//! conjugate gradients preconditioned by a constant-coefficient FFT solve.

mod families;
mod force;
pub mod oscc;

pub use families::CoefficientFamily;
pub use force::{average_force, AveragedForce, OscillatingForce, SaturationKind};

use crate::error::{Error, Result};
use crate::spectral::{PeriodicPoisson, PeriodicProjector};
use rayon::prelude::*;

pub const DEFAULT_CELL_RTOL: f64 = 1e-10;
pub const SYMMETRY_TOL: f64 = 1e-12;
/// zero-mean tolerance per tau-slice, relative to the unit cell area
pub const MEAN_TOL: f64 = 1e-12;

/// Sampled space-time periodic symmetric coefficient on the unit cell
/// `(-1/2, 1/2)^2 x (-1/2, 1/2)`, cell-centered samples, full 2x2 storage
/// (a11, a12, a21, a22) so asymmetric inputs are caught by validation.
#[derive(Debug, Clone)]
pub struct CellCoefficient {
    pub n: usize,
    pub n_tau: usize,
    /// slice-major: `samples[s * n * n + j * n + i]`
    pub samples: Vec<[f64; 4]>,
    /// validated ellipticity estimate (min eigenvalue over samples)
    pub kappa: f64,
}

impl CellCoefficient {
    /// Samples `a(y1, y2, tau)` at cell centers of an `n x n x n_tau` grid.
    pub fn from_sampler(
        n: usize,
        n_tau: usize,
        mut a: impl FnMut(f64, f64, f64) -> [[f64; 2]; 2],
    ) -> Self {
        assert!(n >= 2 && n_tau >= 2, "grid sizes must be >= 2 in each axis");
        let mut samples = Vec::with_capacity(n * n * n_tau);
        for s in 0..n_tau {
            let tau = -0.5 + (s as f64 + 0.5) / n_tau as f64;
            for j in 0..n {
                let y2 = -0.5 + (j as f64 + 0.5) / n as f64;
                for i in 0..n {
                    let y1 = -0.5 + (i as f64 + 0.5) / n as f64;
                    let m = a(y1, y2, tau);
                    samples.push([m[0][0], m[0][1], m[1][0], m[1][1]]);
                }
            }
        }
        CellCoefficient {
            n,
            n_tau,
            samples,
            kappa: f64::NAN,
        }
    }

    #[inline]
    fn at(&self, s: usize, i: usize, j: usize) -> &[f64; 4] {
        &self.samples[s * self.n * self.n + j * self.n + i]
    }

    /// Periodic wrap in all three axes.
    #[inline]
    pub fn at_wrapped(&self, s: isize, i: isize, j: isize) -> &[f64; 4] {
        let n = self.n as isize;
        let nt = self.n_tau as isize;
        let iw = i.rem_euclid(n) as usize;
        let jw = j.rem_euclid(n) as usize;
        let sw = s.rem_euclid(nt) as usize;
        self.at(sw, iw, jw)
    }

    /// Bilinear-in-y, linear-in-tau periodic interpolation of (a11, a12, a22)
    /// at an arbitrary point of the unit cell (coordinates taken mod 1).
    pub fn sample_periodic(&self, y1: f64, y2: f64, tau: f64) -> [f64; 3] {
        let n = self.n as f64;
        let nt = self.n_tau as f64;
        // sample k sits at coordinate -1/2 + (k + 0.5)/n; queries wrap mod 1
        let fx = (y1 + 0.5).rem_euclid(1.0) * n - 0.5;
        let fy = (y2 + 0.5).rem_euclid(1.0) * n - 0.5;
        let ft = (tau + 0.5).rem_euclid(1.0) * nt - 0.5;
        let (i0, wx) = (fx.floor() as isize, fx - fx.floor());
        let (j0, wy) = (fy.floor() as isize, fy - fy.floor());
        let (s0, wt) = (ft.floor() as isize, ft - ft.floor());
        let mut out = [0.0; 3];
        for (ds, wtau) in [(0, 1.0 - wt), (1, wt)] {
            for (dj, wyy) in [(0, 1.0 - wy), (1, wy)] {
                for (di, wxx) in [(0, 1.0 - wx), (1, wx)] {
                    let m = self.at_wrapped(s0 + ds, i0 + di, j0 + dj);
                    let w = wtau * wyy * wxx;
                    out[0] += w * m[0];
                    out[1] += w * 0.5 * (m[1] + m[2]);
                    out[2] += w * m[3];
                }
            }
        }
        out
    }

    /// 90-degree rotation of the coefficient field: `a'(y) = R a(R^T y) R^T`.
    pub fn rotate90(&self) -> CellCoefficient {
        let (n, nt) = (self.n, self.n_tau);
        let mut samples = vec![[0.0; 4]; n * n * nt];
        for s in 0..nt {
            for j in 0..n {
                for i in 0..n {
                    // center (i,j) corresponds to pre-image (j, n-1-i)
                    let m = self.at(s, j, n - 1 - i);
                    samples[s * n * n + j * n + i] = [m[3], -m[2], -m[1], m[0]];
                }
            }
        }
        CellCoefficient {
            n,
            n_tau: nt,
            samples,
            kappa: self.kappa,
        }
    }
}

/// Ellipticity estimate: the minimum over samples of the smallest eigenvalue.
/// Fails on asymmetry above 1e-12 or a nonpositive estimate.
pub fn validate_coefficient(c: &CellCoefficient) -> Result<f64> {
    let mut max_asym = 0.0f64;
    let mut kappa = f64::INFINITY;
    for m in &c.samples {
        max_asym = max_asym.max((m[1] - m[2]).abs());
        let off = 0.5 * (m[1] + m[2]);
        let half = 0.5 * (m[0] + m[3]);
        let rad = (0.25 * (m[0] - m[3]).powi(2) + off * off).sqrt();
        kappa = kappa.min(half - rad);
    }
    if max_asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric {
            max_asymmetry: max_asym,
        });
    }
    if !(kappa > 0.0) {
        return Err(Error::NotElliptic { kappa });
    }
    Ok(kappa)
}

/// Corrector fields for both directions with per-slice residuals.
#[derive(Debug, Clone)]
pub struct CorrectorSet {
    pub n: usize,
    pub n_tau: usize,
    /// `eta[dir][s * n * n + j * n + i]`, zero mean in y per slice
    pub eta: [Vec<f64>; 2],
    /// relative residual of the discrete cell equation per slice
    pub residual_norm: [Vec<f64>; 2],
    /// cell-centered corrector gradient per direction, `[d/dy1, d/dy2]`
    pub eta_grad: [Vec<[f64; 2]>; 2],
}

impl CorrectorSet {
    /// Periodic interpolation of `grad_y eta_dir` at a unit-cell point.
    pub fn sample_grad_periodic(&self, dir: usize, y1: f64, y2: f64, tau: f64) -> [f64; 2] {
        let n = self.n as f64;
        let nt = self.n_tau as f64;
        let fx = (y1 + 0.5).rem_euclid(1.0) * n - 0.5;
        let fy = (y2 + 0.5).rem_euclid(1.0) * n - 0.5;
        let ft = (tau + 0.5).rem_euclid(1.0) * nt - 0.5;
        let (i0, wx) = (fx.floor() as isize, fx - fx.floor());
        let (j0, wy) = (fy.floor() as isize, fy - fy.floor());
        let (s0, wt) = (ft.floor() as isize, ft - ft.floor());
        let nn = self.n as isize;
        let ntau = self.n_tau as isize;
        let g = &self.eta_grad[dir];
        let mut out = [0.0; 2];
        for (ds, wtau) in [(0, 1.0 - wt), (1, wt)] {
            let sw = (s0 + ds).rem_euclid(ntau) as usize;
            for (dj, wyy) in [(0, 1.0 - wy), (1, wy)] {
                let jw = (j0 + dj).rem_euclid(nn) as usize;
                for (di, wxx) in [(0, 1.0 - wx), (1, wx)] {
                    let iw = (i0 + di).rem_euclid(nn) as usize;
                    let v = g[sw * self.n * self.n + jw * self.n + iw];
                    let w = wtau * wyy * wxx;
                    out[0] += w * v[0];
                    out[1] += w * v[1];
                }
            }
        }
        out
    }
}

/// Constant homogenized matrix with its own ellipticity estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveTensor {
    pub a_bar: [[f64; 2]; 2],
    pub kappa_eff: f64,
}

impl EffectiveTensor {
    pub fn min_eigenvalue(m: &[[f64; 2]; 2]) -> f64 {
        let half = 0.5 * (m[0][0] + m[1][1]);
        let rad = (0.25 * (m[0][0] - m[1][1]).powi(2) + m[0][1] * m[1][0]).sqrt();
        half - rad
    }
}

/// Quadrature means used by the Voigt-Reuss bracket: the arithmetic mean of
/// `a` and the inverse of the mean of `a^{-1}`.
pub fn mean_matrices(c: &CellCoefficient) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    let mut arith = [[0.0; 2]; 2];
    let mut inv_mean = [[0.0; 2]; 2];
    for m in &c.samples {
        let (a11, a12, a22) = (m[0], 0.5 * (m[1] + m[2]), m[3]);
        arith[0][0] += a11;
        arith[0][1] += a12;
        arith[1][1] += a22;
        let det = a11 * a22 - a12 * a12;
        inv_mean[0][0] += a22 / det;
        inv_mean[0][1] += -a12 / det;
        inv_mean[1][1] += a11 / det;
    }
    let k = 1.0 / c.samples.len() as f64;
    for m in [&mut arith, &mut inv_mean] {
        m[0][0] *= k;
        m[0][1] *= k;
        m[1][1] *= k;
        m[1][0] = m[0][1];
    }
    let det = inv_mean[0][0] * inv_mean[1][1] - inv_mean[0][1] * inv_mean[1][0];
    let harmonic = [
        [inv_mean[1][1] / det, -inv_mean[0][1] / det],
        [-inv_mean[1][0] / det, inv_mean[0][0] / det],
    ];
    (harmonic, arith)
}

/// Per-slice coefficient views at the grid locations the flux form needs.
struct SliceOperator {
    n: usize,
    h: f64,
    /// harmonic a11 at x-faces (face i couples cells i and i+1 mod n)
    a11_xf: Vec<f64>,
    /// harmonic a22 at y-faces
    a22_yf: Vec<f64>,
    /// arithmetic a12 at nodes
    a12_n: Vec<f64>,
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

impl SliceOperator {
    fn new(c: &CellCoefficient, s: usize) -> Self {
        let n = c.n;
        let h = 1.0 / n as f64;
        let mut a11_xf = vec![0.0; n * n];
        let mut a22_yf = vec![0.0; n * n];
        let mut a12_n = vec![0.0; n * n];
        let sym12 = |m: &[f64; 4]| 0.5 * (m[1] + m[2]);
        for j in 0..n {
            for i in 0..n {
                let here = c.at(s, i, j);
                let right = c.at(s, (i + 1) % n, j);
                let up = c.at(s, i, (j + 1) % n);
                a11_xf[j * n + i] = harmonic(here[0], right[0]);
                a22_yf[j * n + i] = harmonic(here[3], up[3]);
                // node (i, j) touches cells (i-1, j-1), (i, j-1), (i-1, j), (i, j)
                let im = (i + n - 1) % n;
                let jm = (j + n - 1) % n;
                a12_n[j * n + i] = 0.25
                    * (sym12(c.at(s, im, jm))
                        + sym12(c.at(s, i, jm))
                        + sym12(c.at(s, im, j))
                        + sym12(c.at(s, i, j)));
            }
        }
        SliceOperator {
            n,
            h,
            a11_xf,
            a22_yf,
            a12_n,
        }
    }

    /// Fluxes of a gradient field given by its face components
    /// (`g1` at x-faces, `g2` at y-faces). Returns (F1 at x-faces, F2 at
    /// y-faces). Linear, so the flux of `grad eta - e_dir` is the difference
    /// of two calls.
    fn flux(&self, g1: &[f64], g2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        // node-collocated gradient components
        let mut g1_n = vec![0.0; n * n];
        let mut g2_n = vec![0.0; n * n];
        for j in 0..n {
            let jm = (j + n - 1) % n;
            for i in 0..n {
                let im = (i + n - 1) % n;
                // node (i,j): x-faces at (i-1? ...) -- x-face k couples cells k,k+1,
                // the two faces meeting node (i,j) vertically are (i-1, j-1) and (i-1, j)
                g1_n[j * n + i] = 0.5 * (g1[jm * n + im] + g1[j * n + im]);
                g2_n[j * n + i] = 0.5 * (g2[jm * n + im] + g2[jm * n + i]);
            }
        }
        let mut f1 = vec![0.0; n * n];
        let mut f2 = vec![0.0; n * n];
        for j in 0..n {
            let jp = (j + 1) % n;
            for i in 0..n {
                let ip = (i + 1) % n;
                // x-face (i,j) sits between nodes (i+1, j) and (i+1, j+1)
                let q = 0.5
                    * (self.a12_n[j * n + ip] * g2_n[j * n + ip]
                        + self.a12_n[jp * n + ip] * g2_n[jp * n + ip]);
                f1[j * n + i] = self.a11_xf[j * n + i] * g1[j * n + i] + q;
                // y-face (i,j) sits between nodes (i, j+1) and (i+1, j+1)
                let q = 0.5
                    * (self.a12_n[jp * n + i] * g1_n[jp * n + i]
                        + self.a12_n[jp * n + ip] * g1_n[jp * n + ip]);
                f2[j * n + i] = self.a22_yf[j * n + i] * g2[j * n + i] + q;
            }
        }
        (f1, f2)
    }

    fn gradients(&self, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut g1 = vec![0.0; n * n];
        let mut g2 = vec![0.0; n * n];
        for j in 0..n {
            let jp = (j + 1) % n;
            for i in 0..n {
                let ip = (i + 1) % n;
                g1[j * n + i] = (w[j * n + ip] - w[j * n + i]) / self.h;
                g2[j * n + i] = (w[jp * n + i] - w[j * n + i]) / self.h;
            }
        }
        (g1, g2)
    }

    /// `A w = -div(a grad w)` on the periodic slice.
    fn apply(&self, w: &[f64], out: &mut [f64]) {
        let n = self.n;
        let (g1, g2) = self.gradients(w);
        let (f1, f2) = self.flux(&g1, &g2);
        for j in 0..n {
            let jm = (j + n - 1) % n;
            for i in 0..n {
                let im = (i + n - 1) % n;
                out[j * n + i] = -((f1[j * n + i] - f1[j * n + im]) / self.h
                    + (f2[j * n + i] - f2[jm * n + i]) / self.h);
            }
        }
    }

    /// Right-hand side `-div(a e_dir)` assembled from the same flux form, so
    /// that `A eta = rhs` makes the total flux `a (grad eta - e_dir)`
    /// divergence-free.
    fn rhs(&self, dir: usize) -> Vec<f64> {
        let n = self.n;
        let ones = vec![1.0; n * n];
        let zeros = vec![0.0; n * n];
        let (f1, f2) = if dir == 0 {
            self.flux(&ones, &zeros)
        } else {
            self.flux(&zeros, &ones)
        };
        let mut b = vec![0.0; n * n];
        for j in 0..n {
            let jm = (j + n - 1) % n;
            for i in 0..n {
                let im = (i + n - 1) % n;
                b[j * n + i] = -((f1[j * n + i] - f1[j * n + im]) / self.h
                    + (f2[j * n + i] - f2[jm * n + i]) / self.h);
            }
        }
        b
    }
}

fn project_zero_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Per-slice preconditioned CG. Returns (eta, relative residual).
fn solve_slice(
    op: &SliceOperator,
    b: &[f64],
    precond: &mut PeriodicPoisson,
    rtol: f64,
    max_iter: usize,
) -> std::result::Result<(Vec<f64>, f64), (usize, f64)> {
    let n2 = b.len();
    let bnorm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut x = vec![0.0; n2];
    if bnorm == 0.0 {
        return Ok((x, 0.0));
    }
    let mut r = b.to_vec();
    project_zero_mean(&mut r);
    let mut z = vec![0.0; n2];
    precond.apply_inverse(&r, &mut z);
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut p = z.clone();
    let mut ap = vec![0.0; n2];
    for iter in 1..=max_iter {
        op.apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rz / pap;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += alpha * pi;
        }
        for (ri, api) in r.iter_mut().zip(&ap) {
            *ri -= alpha * api;
        }
        project_zero_mean(&mut r);
        let rnorm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if rnorm <= rtol * bnorm {
            project_zero_mean(&mut x);
            return Ok((x, rnorm / bnorm));
        }
        if iter == max_iter {
            return Err((iter, rnorm / bnorm));
        }
        precond.apply_inverse(&r, &mut z);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    unreachable!()
}

/// Solves the cell problem in one direction on every tau-slice.
/// Slices are independent and run in parallel.
pub fn solve_cell_direction(
    c: &CellCoefficient,
    dir: usize,
    rtol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    assert!(dir < 2);
    let n2 = c.n * c.n;
    let mean_coeff = c
        .samples
        .iter()
        .map(|m| 0.5 * (m[0] + m[3]))
        .sum::<f64>()
        / c.samples.len() as f64;
    let results: Vec<std::result::Result<(Vec<f64>, f64), (usize, f64)>> = (0..c.n_tau)
        .into_par_iter()
        .map(|s| {
            let op = SliceOperator::new(c, s);
            let b = op.rhs(dir);
            let mut precond = PeriodicPoisson::new(c.n, mean_coeff);
            solve_slice(&op, &b, &mut precond, rtol, max_iter)
        })
        .collect();
    let mut eta = vec![0.0; n2 * c.n_tau];
    let mut residuals = vec![0.0; c.n_tau];
    for (s, r) in results.into_iter().enumerate() {
        match r {
            Ok((field, res)) => {
                eta[s * n2..(s + 1) * n2].copy_from_slice(&field);
                residuals[s] = res;
            }
            Err((iterations, residual)) => {
                return Err(Error::SolverDiverged {
                    direction: dir,
                    slice: s,
                    iterations,
                    residual,
                })
            }
        }
    }
    Ok((eta, residuals))
}

/// Both directions; the coefficient must validate first.
pub fn solve_cell_problem(c: &CellCoefficient, rtol: f64, max_iter: usize) -> Result<CorrectorSet> {
    let (e0, r0) = solve_cell_direction(c, 0, rtol, max_iter)?;
    let (e1, r1) = solve_cell_direction(c, 1, rtol, max_iter)?;
    let grad = |eta: &[f64]| -> Vec<[f64; 2]> {
        let n = c.n;
        let h = 1.0 / n as f64;
        let mut g = vec![[0.0; 2]; n * n * c.n_tau];
        for s in 0..c.n_tau {
            let sl = &eta[s * n * n..(s + 1) * n * n];
            for j in 0..n {
                let (jp, jm) = ((j + 1) % n, (j + n - 1) % n);
                for i in 0..n {
                    let (ip, im) = ((i + 1) % n, (i + n - 1) % n);
                    g[s * n * n + j * n + i] = [
                        (sl[j * n + ip] - sl[j * n + im]) / (2.0 * h),
                        (sl[jp * n + i] - sl[jm * n + i]) / (2.0 * h),
                    ];
                }
            }
        }
        g
    };
    let eta_grad = [grad(&e0), grad(&e1)];
    Ok(CorrectorSet {
        n: c.n,
        n_tau: c.n_tau,
        eta: [e0, e1],
        residual_norm: [r0, r1],
        eta_grad,
    })
}

/// Assembles the homogenized tensor from the solved correctors by averaging
/// the discrete fluxes of `grad eta_j - e_j` over faces and slices; output
/// symmetrized. Errors only propagate from validation upstream.
pub fn effective_tensor(c: &CellCoefficient, eta: &CorrectorSet) -> EffectiveTensor {
    let n = c.n;
    let n2 = n * n;
    let mut a_bar = [[0.0; 2]; 2];
    for s in 0..c.n_tau {
        let op = SliceOperator::new(c, s);
        for dir in 0..2 {
            let slice = &eta.eta[dir][s * n2..(s + 1) * n2];
            let (mut g1, mut g2) = op.gradients(slice);
            // flux of (grad eta - e_dir)
            if dir == 0 {
                g1.iter_mut().for_each(|v| *v -= 1.0);
            } else {
                g2.iter_mut().for_each(|v| *v -= 1.0);
            }
            let (f1, f2) = op.flux(&g1, &g2);
            let m1 = f1.iter().sum::<f64>() / n2 as f64;
            let m2 = f2.iter().sum::<f64>() / n2 as f64;
            a_bar[0][dir] -= m1;
            a_bar[1][dir] -= m2;
        }
    }
    let k = 1.0 / c.n_tau as f64;
    for row in a_bar.iter_mut() {
        row[0] *= k;
        row[1] *= k;
    }
    let off = 0.5 * (a_bar[0][1] + a_bar[1][0]);
    let sym = [[a_bar[0][0], off], [off, a_bar[1][1]]];
    EffectiveTensor {
        a_bar: sym,
        kappa_eff: EffectiveTensor::min_eigenvalue(&sym),
    }
}

/// Convenience: validate, solve, and assemble in one call.
pub fn homogenize(c: &mut CellCoefficient, rtol: f64, max_iter: usize) -> Result<(CorrectorSet, EffectiveTensor)> {
    c.kappa = validate_coefficient(c)?;
    let eta = solve_cell_problem(c, rtol, max_iter)?;
    let bar = effective_tensor(c, &eta);
    Ok((eta, bar))
}

/// Vector correctors of the divergence-constrained cell problem: for each
/// forcing direction `i` and component `k`, the zero-mean periodic
/// divergence-free vector field solving
///
/// ```text
///   P ( -div_y(a grad_y eta_{i,k}) ) = P ( -div_y(a e_i) e_k )
/// ```
///
/// per tau-slice, with `P` the periodic Leray projector. These are the
/// objects entering the gradient corrector of an incompressible flow: the
/// oscillating normal stress is carried by the cell pressure, so only the
/// solenoidal part of the decoupled corrector survives. Stored as sampled
/// gradients `d eta^l_{i,k} / d y_j` at cell centers.
#[derive(Debug, Clone)]
pub struct VectorCorrectorSet {
    pub n: usize,
    pub n_tau: usize,
    /// `eta[i][k][s * n * n + j * n + i]` holds the two components of the
    /// vector corrector for forcing direction i and component k
    pub eta: [[Vec<[f64; 2]>; 2]; 2],
    /// `grad[i][k][...]` holds
    /// `[d eta^1/d y1, d eta^1/d y2, d eta^2/d y1, d eta^2/d y2]`
    pub grad: [[Vec<[f64; 4]>; 2]; 2],
    /// relative residual of the projected equation per (i, k, slice)
    pub residual_norm: [[Vec<f64>; 2]; 2],
}

impl VectorCorrectorSet {
    /// Periodic interpolation of the vector value of `eta_{i,k}`.
    pub fn sample_value_periodic(
        &self,
        dir: usize,
        comp: usize,
        y1: f64,
        y2: f64,
        tau: f64,
    ) -> [f64; 2] {
        let n = self.n as f64;
        let nt = self.n_tau as f64;
        let fx = (y1 + 0.5).rem_euclid(1.0) * n - 0.5;
        let fy = (y2 + 0.5).rem_euclid(1.0) * n - 0.5;
        let ft = (tau + 0.5).rem_euclid(1.0) * nt - 0.5;
        let (i0, wx) = (fx.floor() as isize, fx - fx.floor());
        let (j0, wy) = (fy.floor() as isize, fy - fy.floor());
        let (s0, wt) = (ft.floor() as isize, ft - ft.floor());
        let nn = self.n as isize;
        let ntau = self.n_tau as isize;
        let g = &self.eta[dir][comp];
        let mut out = [0.0; 2];
        for (ds, wtau) in [(0, 1.0 - wt), (1, wt)] {
            let sw = (s0 + ds).rem_euclid(ntau) as usize;
            for (dj, wyy) in [(0, 1.0 - wy), (1, wy)] {
                let jw = (j0 + dj).rem_euclid(nn) as usize;
                for (di, wxx) in [(0, 1.0 - wx), (1, wx)] {
                    let iw = (i0 + di).rem_euclid(nn) as usize;
                    let v = g[sw * self.n * self.n + jw * self.n + iw];
                    let w = wtau * wyy * wxx;
                    out[0] += w * v[0];
                    out[1] += w * v[1];
                }
            }
        }
        out
    }

    /// Periodic interpolation of the full gradient of `eta_{i,k}`.
    pub fn sample_grad_periodic(
        &self,
        dir: usize,
        comp: usize,
        y1: f64,
        y2: f64,
        tau: f64,
    ) -> [f64; 4] {
        let n = self.n as f64;
        let nt = self.n_tau as f64;
        let fx = (y1 + 0.5).rem_euclid(1.0) * n - 0.5;
        let fy = (y2 + 0.5).rem_euclid(1.0) * n - 0.5;
        let ft = (tau + 0.5).rem_euclid(1.0) * nt - 0.5;
        let (i0, wx) = (fx.floor() as isize, fx - fx.floor());
        let (j0, wy) = (fy.floor() as isize, fy - fy.floor());
        let (s0, wt) = (ft.floor() as isize, ft - ft.floor());
        let nn = self.n as isize;
        let ntau = self.n_tau as isize;
        let g = &self.grad[dir][comp];
        let mut out = [0.0; 4];
        for (ds, wtau) in [(0, 1.0 - wt), (1, wt)] {
            let sw = (s0 + ds).rem_euclid(ntau) as usize;
            for (dj, wyy) in [(0, 1.0 - wy), (1, wy)] {
                let jw = (j0 + dj).rem_euclid(nn) as usize;
                for (di, wxx) in [(0, 1.0 - wx), (1, wx)] {
                    let iw = (i0 + di).rem_euclid(nn) as usize;
                    let v = g[sw * self.n * self.n + jw * self.n + iw];
                    let w = wtau * wyy * wxx;
                    for c in 0..4 {
                        out[c] += w * v[c];
                    }
                }
            }
        }
        out
    }
}

/// Projected preconditioned CG for one (slice, direction, component).
/// Returns the two components of eta and the relative residual.
fn solve_stokes_slice(
    op: &SliceOperator,
    b1: &[f64],
    b2: &[f64],
    precond: &mut PeriodicPoisson,
    projector: &mut PeriodicProjector,
    rtol: f64,
    max_iter: usize,
) -> std::result::Result<(Vec<f64>, Vec<f64>, f64), (usize, f64)> {
    let n2 = b1.len();
    let dot = |a1: &[f64], a2: &[f64], c1: &[f64], c2: &[f64]| -> f64 {
        a1.iter().zip(c1).map(|(x, y)| x * y).sum::<f64>()
            + a2.iter().zip(c2).map(|(x, y)| x * y).sum::<f64>()
    };
    let mut r1 = b1.to_vec();
    let mut r2 = b2.to_vec();
    projector.project(&mut r1, &mut r2);
    project_zero_mean(&mut r1);
    project_zero_mean(&mut r2);
    let bnorm = dot(&r1, &r2, &r1, &r2).sqrt();
    let mut x1 = vec![0.0; n2];
    let mut x2 = vec![0.0; n2];
    if bnorm == 0.0 {
        return Ok((x1, x2, 0.0));
    }
    let apply_prec = |r1: &[f64],
                      r2: &[f64],
                      precond: &mut PeriodicPoisson,
                      projector: &mut PeriodicProjector|
     -> (Vec<f64>, Vec<f64>) {
        let mut z1 = vec![0.0; n2];
        let mut z2 = vec![0.0; n2];
        precond.apply_inverse(r1, &mut z1);
        precond.apply_inverse(r2, &mut z2);
        projector.project(&mut z1, &mut z2);
        project_zero_mean(&mut z1);
        project_zero_mean(&mut z2);
        (z1, z2)
    };
    let (mut z1, mut z2) = apply_prec(&r1, &r2, precond, projector);
    let mut rz = dot(&r1, &r2, &z1, &z2);
    let mut p1 = z1.clone();
    let mut p2 = z2.clone();
    let mut ap1 = vec![0.0; n2];
    let mut ap2 = vec![0.0; n2];
    for iter in 1..=max_iter {
        op.apply(&p1, &mut ap1);
        op.apply(&p2, &mut ap2);
        projector.project(&mut ap1, &mut ap2);
        project_zero_mean(&mut ap1);
        project_zero_mean(&mut ap2);
        let pap = dot(&p1, &p2, &ap1, &ap2);
        let alpha = rz / pap;
        for i in 0..n2 {
            x1[i] += alpha * p1[i];
            x2[i] += alpha * p2[i];
            r1[i] -= alpha * ap1[i];
            r2[i] -= alpha * ap2[i];
        }
        let rnorm = dot(&r1, &r2, &r1, &r2).sqrt();
        if rnorm <= rtol * bnorm {
            return Ok((x1, x2, rnorm / bnorm));
        }
        if iter == max_iter {
            return Err((iter, rnorm / bnorm));
        }
        let zz = apply_prec(&r1, &r2, precond, projector);
        z1 = zz.0;
        z2 = zz.1;
        let rz_new = dot(&r1, &r2, &z1, &z2);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n2 {
            p1[i] = z1[i] + beta * p1[i];
            p2[i] = z2[i] + beta * p2[i];
        }
    }
    unreachable!()
}

/// Solves the divergence-constrained cell problem for all four (direction,
/// component) pairs on every slice.
pub fn solve_divfree_correctors(
    c: &CellCoefficient,
    rtol: f64,
    max_iter: usize,
) -> Result<VectorCorrectorSet> {
    let n = c.n;
    let n2 = n * n;
    let mean_coeff = c
        .samples
        .iter()
        .map(|m| 0.5 * (m[0] + m[3]))
        .sum::<f64>()
        / c.samples.len() as f64;
    let h = 1.0 / n as f64;

    let mut eta_store: [[Vec<[f64; 2]>; 2]; 2] = [
        [vec![[0.0; 2]; n2 * c.n_tau], vec![[0.0; 2]; n2 * c.n_tau]],
        [vec![[0.0; 2]; n2 * c.n_tau], vec![[0.0; 2]; n2 * c.n_tau]],
    ];
    let mut grad: [[Vec<[f64; 4]>; 2]; 2] = [
        [vec![[0.0; 4]; n2 * c.n_tau], vec![[0.0; 4]; n2 * c.n_tau]],
        [vec![[0.0; 4]; n2 * c.n_tau], vec![[0.0; 4]; n2 * c.n_tau]],
    ];
    let mut residual_norm: [[Vec<f64>; 2]; 2] = [
        [vec![0.0; c.n_tau], vec![0.0; c.n_tau]],
        [vec![0.0; c.n_tau], vec![0.0; c.n_tau]],
    ];

    type SliceOut = Vec<((usize, usize), std::result::Result<(Vec<f64>, Vec<f64>, f64), (usize, f64)>)>;
    let per_slice: Vec<SliceOut> = (0..c.n_tau)
        .into_par_iter()
        .map(|s| {
            let op = SliceOperator::new(c, s);
            let mut precond = PeriodicPoisson::new(n, mean_coeff);
            let mut projector = PeriodicProjector::new(n);
            let mut out = Vec::new();
            for dir in 0..2 {
                let f = op.rhs(dir);
                for comp in 0..2 {
                    let zero = vec![0.0; n2];
                    let (b1, b2) = if comp == 0 { (&f, &zero) } else { (&zero, &f) };
                    let r = solve_stokes_slice(
                        &op, b1, b2, &mut precond, &mut projector, rtol, max_iter,
                    );
                    out.push(((dir, comp), r));
                }
            }
            out
        })
        .collect();

    for (s, slice_out) in per_slice.into_iter().enumerate() {
        for ((dir, comp), r) in slice_out {
            match r {
                Ok((e1, e2, res)) => {
                    residual_norm[dir][comp][s] = res;
                    let vslice = &mut eta_store[dir][comp][s * n2..(s + 1) * n2];
                    for (idx, v) in vslice.iter_mut().enumerate() {
                        *v = [e1[idx], e2[idx]];
                    }
                    let gslice = &mut grad[dir][comp][s * n2..(s + 1) * n2];
                    for j in 0..n {
                        let (jp, jm) = ((j + 1) % n, (j + n - 1) % n);
                        for i in 0..n {
                            let (ip, im) = ((i + 1) % n, (i + n - 1) % n);
                            gslice[j * n + i] = [
                                (e1[j * n + ip] - e1[j * n + im]) / (2.0 * h),
                                (e1[jp * n + i] - e1[jm * n + i]) / (2.0 * h),
                                (e2[j * n + ip] - e2[j * n + im]) / (2.0 * h),
                                (e2[jp * n + i] - e2[jm * n + i]) / (2.0 * h),
                            ];
                        }
                    }
                }
                Err((iterations, residual)) => {
                    return Err(Error::SolverDiverged {
                        direction: dir,
                        slice: s,
                        iterations,
                        residual,
                    })
                }
            }
        }
    }
    Ok(VectorCorrectorSet {
        n,
        n_tau: c.n_tau,
        eta: eta_store,
        grad,
        residual_norm,
    })
}
