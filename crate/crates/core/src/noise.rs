//! Truncated cylindrical Wiener increments and the multiplicative noise
//! operator.
//!
//! The driving process is `W(t) = sum_k sqrt(lambda_k) psi_k W_k(t)` with
//! `lambda_k = lambda0 k^{-2 gamma}` (trace class for gamma > 1/2) and mode
//! shapes `psi_k` obtained as curls of `sin(j pi x) sin(l pi y)` stream
//! functions: discretely divergence-free with zero wall-normal component.
//! Every increment is produced by a counter-based generator keyed on
//! (seed, mode, step), so any sub-path regenerates independently and
//! bit-exactly across processes and thread counts.

use crate::error::{Error, Result};
use crate::mac_grid::{divergence, Grid2D, PoissonSolver, StaggeredVelocity};
use std::io::{Read, Write};

/// splitmix64 finalizer
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Uniform in (0, 1], never exactly zero (safe under log).
#[inline]
fn unit_open(h: u64) -> f64 {
    ((h >> 11) as f64 + 1.0) / (1u64 << 53) as f64
}

/// Standard normal keyed by (seed, mode, step): Box-Muller on two
/// counter-hashed uniforms.
#[inline]
pub fn gaussian(seed: u64, mode: u64, step: u64) -> f64 {
    let base = mix(
        seed ^ mode.wrapping_mul(0x9e3779b97f4a7c15) ^ step.wrapping_mul(0xd1b54a32d192ed03),
    );
    let u1 = unit_open(mix(base ^ 0x2545f4914f6cdd1d));
    let u2 = unit_open(mix(base.wrapping_add(0x6a09e667f3bcc909)));
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Truncated covariance spectrum plus grid-sampled mode shapes.
#[derive(Debug, Clone)]
pub struct NoiseSpec {
    pub grid: Grid2D,
    pub n_modes: usize,
    pub gamma: f64,
    pub lambda0: f64,
    pub seed: u64,
    /// lambda_k = lambda0 * k^{-2 gamma}, k = 1..=n_modes
    pub lambda: Vec<f64>,
    /// unit-normalized divergence-free shapes
    pub mode_shapes: Vec<StaggeredVelocity>,
}

impl NoiseSpec {
    pub fn new(grid: Grid2D, n_modes: usize, gamma: f64, lambda0: f64, seed: u64) -> Self {
        assert!(gamma > 0.5, "need gamma > 1/2 for a trace-class covariance");
        assert!(lambda0 > 0.0 && n_modes >= 1);
        // enumerate stream wavenumbers (j, l) by increasing j^2 + l^2
        let mut freqs: Vec<(usize, usize)> = (1..=n_modes + 8)
            .flat_map(|j| (1..=n_modes + 8).map(move |l| (j, l)))
            .collect();
        freqs.sort_by_key(|&(j, l)| (j * j + l * l, j, l));
        freqs.truncate(n_modes);

        let mut mode_shapes = Vec::with_capacity(n_modes);
        for &(j, l) in &freqs {
            let mut psi = vec![0.0; (grid.nx + 1) * (grid.ny + 1)];
            for jj in 0..=grid.ny {
                for ii in 0..=grid.nx {
                    let x = ii as f64 * grid.hx;
                    let y = jj as f64 * grid.hy;
                    psi[jj * (grid.nx + 1) + ii] = (j as f64 * std::f64::consts::PI * x).sin()
                        * (l as f64 * std::f64::consts::PI * y).sin();
                }
            }
            let mut shape = StaggeredVelocity::from_stream(grid, &psi);
            let norm = shape.norm_l2();
            shape.scale(1.0 / norm);
            debug_assert!(divergence(&shape).norm_inf() <= 1e-9);
            mode_shapes.push(shape);
        }
        let lambda = (1..=n_modes)
            .map(|k| lambda0 * (k as f64).powf(-2.0 * gamma))
            .collect();
        NoiseSpec {
            grid,
            n_modes,
            gamma,
            lambda0,
            seed,
            lambda,
            mode_shapes,
        }
    }

    pub fn trace(&self) -> f64 {
        self.lambda.iter().sum()
    }

    /// Stable identifier of (spectrum, seed, grid) for shared-path receipts.
    pub fn hash(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        let mut put = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x100000001b3);
        };
        put(self.seed);
        put(self.n_modes as u64);
        put(self.gamma.to_bits());
        put(self.lambda0.to_bits());
        put(self.grid.nx as u64);
        put(self.grid.ny as u64);
        h
    }
}

/// Gaussian increments `dW_k^n ~ N(0, dt)`, step-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub n_modes: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub spec_hash: u64,
    /// increments[n * n_modes + k]
    pub increments: Vec<f64>,
}

impl NoisePath {
    pub fn step(&self, n: usize) -> &[f64] {
        &self.increments[n * self.n_modes..(n + 1) * self.n_modes]
    }

    /// Content hash used to prove two runs consumed the same path.
    pub fn hash(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64 ^ self.spec_hash;
        for v in &self.increments {
            h ^= v.to_bits();
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

/// K x n_steps increments from the counter-based generator; any (mode, step)
/// cell is reproducible in isolation.
pub fn sample_path(spec: &NoiseSpec, n_steps: usize, dt: f64) -> NoisePath {
    assert!(dt > 0.0);
    let k = spec.n_modes;
    let sqrt_dt = dt.sqrt();
    let mut increments = vec![0.0; n_steps * k];
    for n in 0..n_steps {
        for m in 0..k {
            increments[n * k + m] = sqrt_dt * gaussian(spec.seed, m as u64, n as u64);
        }
    }
    NoisePath {
        n_modes: k,
        n_steps,
        dt,
        seed: spec.seed,
        spec_hash: spec.hash(),
        increments,
    }
}

/// Aggregates increments over windows of `m` steps; distributionally equal to
/// sampling directly at `m * dt`.
pub fn coarsen_path(path: &NoisePath, factor: usize) -> Result<NoisePath> {
    assert!(factor >= 1);
    if path.n_steps % factor != 0 {
        return Err(Error::IndivisibleSteps {
            n_steps: path.n_steps,
            factor,
        });
    }
    let k = path.n_modes;
    let n_coarse = path.n_steps / factor;
    let mut increments = vec![0.0; n_coarse * k];
    for n in 0..n_coarse {
        for s in 0..factor {
            let fine = path.step(n * factor + s);
            for m in 0..k {
                increments[n * k + m] += fine[m];
            }
        }
    }
    Ok(NoisePath {
        n_modes: k,
        n_steps: n_coarse,
        dt: path.dt * factor as f64,
        seed: path.seed,
        spec_hash: path.spec_hash,
        increments,
    })
}

/// Noise intensity operator `g`; constants c3 (Lipschitz) and c4 (growth)
/// are computed from the spectrum at construction.
#[derive(Debug, Clone)]
pub enum GOperator {
    /// g = 0: deterministic runs
    Off,
    /// g_k(u) = psi_k
    Additive,
    /// g_k(u)(x) = psi_k(x) * sigma * u(x) / (1 + |u(x)|), componentwise
    Multiplicative { sigma: f64 },
}

impl GOperator {
    pub fn is_off(&self) -> bool {
        matches!(self, GOperator::Off)
    }

    /// Declared Lipschitz constant for
    /// `||g(u1) - g(u2)||^2 <= c3 ||u1 - u2||^2`.
    pub fn c3(&self, spec: &NoiseSpec) -> f64 {
        match self {
            GOperator::Off | GOperator::Additive => 0.0,
            GOperator::Multiplicative { sigma } => {
                let m: f64 = spec
                    .lambda
                    .iter()
                    .zip(&spec.mode_shapes)
                    .map(|(l, psi)| {
                        let inf = psi
                            .u
                            .iter()
                            .chain(psi.v.iter())
                            .fold(0.0f64, |a, v| a.max(v.abs()));
                        l * inf * inf
                    })
                    .sum();
                sigma * sigma * m
            }
        }
    }

    /// Declared growth constant for `||g(u)||^2 <= c4 (1 + ||u||^2)`.
    pub fn c4(&self, spec: &NoiseSpec) -> f64 {
        match self {
            GOperator::Off => 0.0,
            // unit-normalized shapes: ||g||^2 = sum lambda_k exactly
            GOperator::Additive => spec.trace(),
            // saturation bounded by sigma pointwise
            GOperator::Multiplicative { sigma } => self
                .c3(spec)
                .max(sigma * sigma * spec.trace()),
        }
    }

    /// The k-th component field `g_k(u)`.
    pub fn mode_field(&self, spec: &NoiseSpec, k: usize, u: &StaggeredVelocity) -> StaggeredVelocity {
        let psi = &spec.mode_shapes[k];
        match self {
            GOperator::Off => StaggeredVelocity::zeros(spec.grid),
            GOperator::Additive => psi.clone(),
            GOperator::Multiplicative { sigma } => {
                let sat = |x: f64| sigma * x / (1.0 + x.abs());
                let mut out = psi.clone();
                for (o, ui) in out.u.iter_mut().zip(&u.u) {
                    *o *= sat(*ui);
                }
                for (o, vi) in out.v.iter_mut().zip(&u.v) {
                    *o *= sat(*vi);
                }
                out
            }
        }
    }

    /// `sum_k ||g_k(u)||^2 lambda_k`: the squared covariance-weighted norm
    /// entering the growth bound and the Ito correction.
    pub fn squared_norm(&self, spec: &NoiseSpec, u: &StaggeredVelocity) -> f64 {
        match self {
            GOperator::Off => 0.0,
            _ => spec
                .lambda
                .iter()
                .enumerate()
                .map(|(k, l)| {
                    let f = self.mode_field(spec, k, u);
                    let n = f.norm_l2();
                    l * n * n
                })
                .sum(),
        }
    }
}

/// Unprojected noise field `sum_k sqrt(lambda_k) g_k(u) dW_k`.
pub fn noise_sum(g: &GOperator, spec: &NoiseSpec, u: &StaggeredVelocity, dw: &[f64]) -> StaggeredVelocity {
    assert_eq!(dw.len(), spec.n_modes);
    let mut acc = StaggeredVelocity::zeros(spec.grid);
    if g.is_off() {
        return acc;
    }
    for k in 0..spec.n_modes {
        if dw[k] == 0.0 {
            continue;
        }
        let f = g.mode_field(spec, k, u);
        acc.axpy(spec.lambda[k].sqrt() * dw[k], &f);
    }
    acc
}

/// `sum_k sqrt(lambda_k) g_k(u) dW_k`, Leray-projected.
pub fn apply_noise(
    g: &GOperator,
    spec: &NoiseSpec,
    u: &StaggeredVelocity,
    dw: &[f64],
    solver: &mut PoissonSolver,
) -> Result<StaggeredVelocity> {
    let raw = noise_sum(g, spec, u, dw);
    solver.leray_project(&raw)
}

// ---- OSCW path files -------------------------------------------------------

pub const MAGIC: &[u8; 4] = b"OSCW";

pub fn write_path(w: &mut impl Write, p: &NoisePath) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&p.spec_hash.to_le_bytes())?;
    w.write_all(&(p.n_modes as u32).to_le_bytes())?;
    w.write_all(&(p.n_steps as u32).to_le_bytes())?;
    w.write_all(&p.dt.to_le_bytes())?;
    w.write_all(&p.seed.to_le_bytes())?;
    for v in &p.increments {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_path(r: &mut impl Read) -> Result<NoisePath> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::BadSnapshot("bad magic, expected OSCW".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let spec_hash = u64::from_le_bytes(b8);
    r.read_exact(&mut b4)?;
    let n_modes = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let n_steps = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8)?;
    let dt = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let seed = u64::from_le_bytes(b8);
    let mut increments = vec![0.0; n_modes * n_steps];
    for v in increments.iter_mut() {
        r.read_exact(&mut b8)?;
        *v = f64::from_le_bytes(b8);
    }
    Ok(NoisePath {
        n_modes,
        n_steps,
        dt,
        seed,
        spec_hash,
        increments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> NoiseSpec {
        NoiseSpec::new(Grid2D::new(32, 32), 4, 1.5, 0.01, 42)
    }

    #[test]
    fn same_seed_reproduces_bit_exactly() {
        let s = spec();
        let a = sample_path(&s, 16, 1e-3);
        let b = sample_path(&s, 16, 1e-3);
        assert_eq!(a.increments, b.increments);
        // sub-path independence: step 7 regenerates in isolation
        let one = gaussian(s.seed, 2, 7) * (1e-3f64).sqrt();
        assert_eq!(a.step(7)[2], one);
    }

    #[test]
    fn increments_have_unit_scaled_variance() {
        let s = spec();
        let n = 100_000;
        let dt = 0.5f64;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for i in 0..n {
            let z = (dt).sqrt() * gaussian(s.seed, 0, i as u64);
            sum += z;
            sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 3.0 * (dt / n as f64).sqrt(), "mean {mean}");
        assert!(var > 0.99 * dt && var < 1.01 * dt, "var {var}");
    }

    #[test]
    fn coarsened_variance_doubles() {
        let s = spec();
        let p = sample_path(&s, 40_000, 1e-2);
        let c = coarsen_path(&p, 2).unwrap();
        assert_eq!(c.n_steps, 20_000);
        assert_eq!(c.dt, 2e-2);
        let var = c
            .increments
            .iter()
            .step_by(c.n_modes)
            .map(|v| v * v)
            .sum::<f64>()
            / c.n_steps as f64;
        assert!((var - 2e-2).abs() < 2e-3, "var {var}");
        // factor 1 is the identity; full factor leaves one total increment
        assert_eq!(coarsen_path(&p, 1).unwrap().increments, p.increments);
        let total = coarsen_path(&p, p.n_steps).unwrap();
        let direct: f64 = p.increments.iter().step_by(p.n_modes).sum();
        assert!((total.step(0)[0] - direct).abs() < 1e-12);
    }

    #[test]
    fn indivisible_coarsening_rejected() {
        let p = sample_path(&spec(), 10, 1e-3);
        assert!(matches!(
            coarsen_path(&p, 3),
            Err(Error::IndivisibleSteps { .. })
        ));
    }

    #[test]
    fn mode_shapes_divergence_free_unit_norm() {
        let s = spec();
        for psi in &s.mode_shapes {
            assert!(divergence(psi).norm_inf() <= 1e-9);
            assert!((psi.norm_l2() - 1.0).abs() < 1e-12);
            assert!(psi.boundary_normals_are_zero());
        }
        for w in s.lambda.windows(2) {
            assert!(w[0] > w[1] && w[1] > 0.0);
        }
    }

    #[test]
    fn additive_single_mode_is_linear_in_increment() {
        let s = NoiseSpec::new(Grid2D::new(16, 16), 1, 1.5, 0.04, 7);
        let u = StaggeredVelocity::zeros(s.grid);
        let out = noise_sum(&GOperator::Additive, &s, &u, &[0.3]);
        let mut want = s.mode_shapes[0].clone();
        want.scale(0.04f64.sqrt() * 0.3);
        let mut diff = out.clone();
        diff.axpy(-1.0, &want);
        assert!(diff.norm_l2() < 1e-14);
        // zero increments give the zero field
        let z = noise_sum(&GOperator::Additive, &s, &u, &[0.0]);
        assert_eq!(z.norm_l2(), 0.0);
    }

    #[test]
    fn growth_bound_holds_for_multiplicative_default() {
        let s = spec();
        let gop = GOperator::Multiplicative { sigma: 0.5 };
        let c4 = gop.c4(&s);
        let mut worst = 0.0f64;
        for t in 0..20 {
            let amp = 0.3 * t as f64;
            let u = StaggeredVelocity::from_fn(s.grid, |x, y| amp * (x - y), |x, y| amp * x * y);
            let n2 = gop.squared_norm(&s, &u);
            let un = u.norm_l2();
            worst = worst.max(n2 / (1.0 + un * un));
        }
        assert!(worst <= c4 * (1.0 + 1e-12), "{worst} vs {c4}");
    }

    #[test]
    fn lipschitz_bound_certified_on_random_pairs() {
        let s = spec();
        let gop = GOperator::Multiplicative { sigma: 0.7 };
        let c3 = gop.c3(&s);
        let mut state = 99u64;
        let mut nextf = move || {
            state = mix(state.wrapping_add(0x9e3779b97f4a7c15));
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..100 {
            let (a1, b1, a2, b2) = (nextf(), nextf(), nextf(), nextf());
            let u1 = StaggeredVelocity::from_fn(s.grid, |x, y| a1 * x + b1 * y, |x, y| b1 * x - a1 * y);
            let u2 = StaggeredVelocity::from_fn(s.grid, |_, y| a2 * y - b2, |x, y| a2 * x + b2 * y);
            let mut num = 0.0;
            for k in 0..s.n_modes {
                let f1 = gop.mode_field(&s, k, &u1);
                let mut f2 = gop.mode_field(&s, k, &u2);
                f2.axpy(-1.0, &f1);
                let n = f2.norm_l2();
                num += s.lambda[k] * n * n;
            }
            let mut du = u1.clone();
            du.axpy(-1.0, &u2);
            let dn = du.norm_l2();
            assert!(num <= c3 * dn * dn * (1.0 + 1e-9) + 1e-30);
        }
    }

    #[test]
    fn projected_noise_is_divergence_free() {
        let s = spec();
        let gop = GOperator::Multiplicative { sigma: 1.0 };
        let u = StaggeredVelocity::from_fn(s.grid, |x, y| (x * 9.0).sin() * y, |x, y| x - y * y);
        let mut solver = PoissonSolver::new(s.grid);
        let path = sample_path(&s, 1, 1e-2);
        let out = apply_noise(&gop, &s, &u, path.step(0), &mut solver).unwrap();
        assert!(divergence(&out).norm_inf() <= 1e-9);
    }

    #[test]
    fn path_file_roundtrip() {
        let p = sample_path(&spec(), 12, 2e-3);
        let mut buf = Vec::new();
        write_path(&mut buf, &p).unwrap();
        let back = read_path(&mut std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.hash(), p.hash());
    }
}
