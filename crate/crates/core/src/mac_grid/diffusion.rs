//! Variable-coefficient diffusion and upwinded momentum advection on the
//! staggered grid.
//!
//! The diffusion operator is `A w = -div(a grad w)` applied componentwise,
//! assembled in flux form. In-line coefficients are harmonic face averages,
//! the mixed `a12` terms use coefficient-inside averaging so the assembled
//! operator stays symmetric; no-slip walls are embedded through ghost
//! reflection of tangential values.

use super::{Grid2D, ScalarField, StaggeredVelocity};
use crate::error::{Error, Result};

/// Symmetric 2x2 coefficient (a11, a12, a22) sampled at every velocity face.
#[derive(Debug, Clone)]
pub struct FaceTensorField {
    pub grid: Grid2D,
    /// per u-face, (nx+1) x ny
    pub u: Vec<[f64; 3]>,
    /// per v-face, nx x (ny+1)
    pub v: Vec<[f64; 3]>,
}

impl FaceTensorField {
    pub fn from_fn(grid: Grid2D, mut a: impl FnMut(f64, f64) -> [f64; 3]) -> Self {
        let (nx, ny) = (grid.nx, grid.ny);
        let mut u = vec![[0.0; 3]; (nx + 1) * ny];
        let mut v = vec![[0.0; 3]; nx * (ny + 1)];
        for j in 0..ny {
            for i in 0..=nx {
                let (x, y) = grid.u_face(i, j);
                u[j * (nx + 1) + i] = a(x, y);
            }
        }
        for j in 0..=ny {
            for i in 0..nx {
                let (x, y) = grid.v_face(i, j);
                v[j * nx + i] = a(x, y);
            }
        }
        FaceTensorField { grid, u, v }
    }

    pub fn identity(grid: Grid2D) -> Self {
        Self::from_fn(grid, |_, _| [1.0, 0.0, 1.0])
    }

    /// Smallest eigenvalue over all faces.
    pub fn min_eigenvalue(&self) -> f64 {
        let lam = |m: &[f64; 3]| {
            let half = 0.5 * (m[0] + m[2]);
            let rad = (0.25 * (m[0] - m[2]).powi(2) + m[1] * m[1]).sqrt();
            half - rad
        };
        self.u
            .iter()
            .chain(self.v.iter())
            .map(lam)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn check_elliptic(&self) -> Result<f64> {
        let kappa = self.min_eigenvalue();
        if kappa <= 0.0 {
            return Err(Error::NotElliptic { kappa });
        }
        Ok(kappa)
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// One velocity component viewed on its own sub-grid, with the coefficient
/// entries it needs at gradient locations. `n_long` runs along the component
/// direction (faces 0..=n_long), `n_tr` across it.
struct ComponentStencil {
    n_long: usize,
    n_tr: usize,
    h_long: f64,
    h_tr: f64,
    /// in-line coefficient at the (n_long x n_tr) "center" points
    a_ll: Vec<f64>,
    /// cross coefficient at the ((n_long+1) x (n_tr+1)) "node" points
    a_tt: Vec<f64>,
    /// mixed coefficient at node points
    a_lt: Vec<f64>,
    // scratch reused across applies
    d_long: Vec<f64>,
    d_tr: Vec<f64>,
    f_long: Vec<f64>,
    f_tr: Vec<f64>,
}

impl ComponentStencil {
    /// For the u component: long = x, transverse = y. Face samples are the
    /// u-face entries of `a`; center/node values reduce adjacent face samples
    /// (harmonic for the elliptic diagonal, arithmetic for the signed a12).
    fn for_u(a: &FaceTensorField) -> Self {
        let g = a.grid;
        let (nx, ny) = (g.nx, g.ny);
        let at = |i: usize, j: usize| a.u[j * (nx + 1) + i];
        let mut a_ll = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                a_ll[j * nx + i] = harmonic(at(i, j)[0], at(i + 1, j)[0]);
            }
        }
        let mut a_tt = vec![0.0; (nx + 1) * (ny + 1)];
        let mut a_lt = vec![0.0; (nx + 1) * (ny + 1)];
        for j in 0..=ny {
            for i in 0..=nx {
                let lo = at(i, j.saturating_sub(1).min(ny - 1));
                let hi = at(i, j.min(ny - 1));
                let k = j * (nx + 1) + i;
                if j == 0 || j == ny {
                    a_tt[k] = if j == 0 { at(i, 0)[2] } else { at(i, ny - 1)[2] };
                    a_lt[k] = if j == 0 { at(i, 0)[1] } else { at(i, ny - 1)[1] };
                } else {
                    a_tt[k] = harmonic(lo[2], hi[2]);
                    a_lt[k] = 0.5 * (lo[1] + hi[1]);
                }
            }
        }
        ComponentStencil {
            n_long: nx,
            n_tr: ny,
            h_long: g.hx,
            h_tr: g.hy,
            a_ll,
            a_tt,
            a_lt,
            d_long: vec![0.0; nx * ny],
            d_tr: vec![0.0; (nx + 1) * (ny + 1)],
            f_long: vec![0.0; nx * ny],
            f_tr: vec![0.0; (nx + 1) * (ny + 1)],
        }
    }

    /// For the v component: long = y, transverse = x (mirrored layout; the
    /// component array is re-indexed so that `long` is the fast index).
    fn for_v(a: &FaceTensorField) -> Self {
        let g = a.grid;
        let (nx, ny) = (g.nx, g.ny);
        let at = |i: usize, j: usize| a.v[j * nx + i];
        let mut a_ll = vec![0.0; ny * nx]; // indexed [i * ny + j]
        for i in 0..nx {
            for j in 0..ny {
                a_ll[i * ny + j] = harmonic(at(i, j)[2], at(i, j + 1)[2]);
            }
        }
        let mut a_tt = vec![0.0; (ny + 1) * (nx + 1)]; // [i * (ny+1) + j]
        let mut a_lt = vec![0.0; (ny + 1) * (nx + 1)];
        for i in 0..=nx {
            for j in 0..=ny {
                let lo = at(i.saturating_sub(1).min(nx - 1), j);
                let hi = at(i.min(nx - 1), j);
                let k = i * (ny + 1) + j;
                if i == 0 || i == nx {
                    a_tt[k] = if i == 0 { at(0, j)[0] } else { at(nx - 1, j)[0] };
                    a_lt[k] = if i == 0 { at(0, j)[1] } else { at(nx - 1, j)[1] };
                } else {
                    a_tt[k] = harmonic(lo[0], hi[0]);
                    a_lt[k] = 0.5 * (lo[1] + hi[1]);
                }
            }
        }
        ComponentStencil {
            n_long: ny,
            n_tr: nx,
            h_long: g.hy,
            h_tr: g.hx,
            a_ll,
            a_tt,
            a_lt,
            d_long: vec![0.0; ny * nx],
            d_tr: vec![0.0; (ny + 1) * (nx + 1)],
            f_long: vec![0.0; ny * nx],
            f_tr: vec![0.0; (ny + 1) * (nx + 1)],
        }
    }

    /// Applies `-div(a grad w)` to one component stored as
    /// `w[t * (n_long + 1) + l]`, Dirichlet at l = 0, n_long, ghost-reflected
    /// across t walls. `out` has the same layout; Dirichlet entries get 0.
    /// Returns the energy `<A w, w> * cell_volume` as a by-product.
    fn apply(&mut self, w: &[f64], out: &mut [f64]) -> f64 {
        let (nl, nt) = (self.n_long, self.n_tr);
        let (hl, ht) = (self.h_long, self.h_tr);
        let wat = |l: isize, t: isize| -> f64 {
            // ghost reflection across transverse walls (no-slip)
            let (l, t) = (l as usize, t);
            if t < 0 {
                -w[0 * (nl + 1) + l]
            } else if t >= nt as isize {
                -w[(nt - 1) * (nl + 1) + l]
            } else {
                w[t as usize * (nl + 1) + l]
            }
        };

        // gradient pieces (center + node scratch reused across applies)
        let d_long = &mut self.d_long;
        for t in 0..nt {
            for l in 0..nl {
                d_long[t * nl + l] = (w[t * (nl + 1) + l + 1] - w[t * (nl + 1) + l]) / hl;
            }
        }
        let d_tr = &mut self.d_tr;
        for t in 0..=nt {
            for l in 0..=nl {
                d_tr[t * (nl + 1) + l] = (wat(l as isize, t as isize) - wat(l as isize, t as isize - 1)) / ht;
            }
        }
        // Mixed (a12) coupling: the energy pairs the node-collocated d_tr with
        // the average of the adjacent cells' d_long (truncated at walls, fixed
        // weight 1/4, wall node rows carrying the half weight of their
        // reflected half-cell). Both fluxes below are exact derivatives of
        // that symmetric energy, so the assembled operator is symmetric.
        let node_weight = |t: usize| if t == 0 || t == nt { 0.5 } else { 1.0 };

        // fluxes
        let f_long = &mut self.f_long;
        for t in 0..nt {
            for l in 0..nl {
                let q = |ll: usize, tt: usize| {
                    node_weight(tt) * self.a_lt[tt * (nl + 1) + ll] * d_tr[tt * (nl + 1) + ll]
                };
                let mixed = 0.25 * (q(l, t) + q(l + 1, t) + q(l, t + 1) + q(l + 1, t + 1));
                f_long[t * nl + l] = self.a_ll[t * nl + l] * d_long[t * nl + l] + mixed;
            }
        }
        let f_tr = &mut self.f_tr;
        for t in 0..=nt {
            for l in 0..=nl {
                let ti = t as isize;
                // truncated average: half-cells beyond the wall hold no dof
                let d_long_at = |l: usize, t: isize| -> f64 {
                    if t < 0 || t >= nt as isize {
                        0.0
                    } else {
                        d_long[t as usize * nl + l]
                    }
                };
                let mixed_avg = if l == 0 || l == nl {
                    0.0 // Dirichlet column: paired gradient is identically zero
                } else {
                    0.25 * (d_long_at(l - 1, ti - 1)
                        + d_long_at(l, ti - 1)
                        + d_long_at(l - 1, ti)
                        + d_long_at(l, ti))
                };
                let k = t * (nl + 1) + l;
                f_tr[k] = self.a_tt[k] * d_tr[k] + self.a_lt[k] * mixed_avg;
            }
        }

        // energy of the bilinear form
        let mut energy = 0.0;
        for t in 0..nt {
            for l in 0..nl {
                energy += f_long[t * nl + l] * d_long[t * nl + l];
            }
        }
        for t in 0..=nt {
            for l in 0..=nl {
                let wall = t == 0 || t == nt;
                let scale = if wall { 0.5 } else { 1.0 };
                // wall rows represent half-cells of the reflected extension
                energy += scale * f_tr[t * (nl + 1) + l] * d_tr[t * (nl + 1) + l];
            }
        }

        // out = -div(flux); Dirichlet entries zeroed
        for t in 0..nt {
            out[t * (nl + 1)] = 0.0;
            out[t * (nl + 1) + nl] = 0.0;
            for l in 1..nl {
                let dfl = (f_long[t * nl + l] - f_long[t * nl + l - 1]) / hl;
                let dft = (f_tr[(t + 1) * (nl + 1) + l] - f_tr[t * (nl + 1) + l]) / ht;
                out[t * (nl + 1) + l] = -(dfl + dft);
            }
        }
        energy * hl * ht
    }
}

/// Reusable `A = -div(a grad .)` with per-component stencils and scratch.
pub struct DiffusionOperator {
    grid: Grid2D,
    su: ComponentStencil,
    sv: ComponentStencil,
    vbuf_in: Vec<f64>,
    vbuf_out: Vec<f64>,
}

impl DiffusionOperator {
    pub fn new(a: &FaceTensorField) -> Self {
        let g = a.grid;
        DiffusionOperator {
            grid: g,
            su: ComponentStencil::for_u(a),
            sv: ComponentStencil::for_v(a),
            vbuf_in: vec![0.0; g.nx * (g.ny + 1)],
            vbuf_out: vec![0.0; g.nx * (g.ny + 1)],
        }
    }

    /// `out = A w`; returns `<A w, w> * cell_volume` as a by-product.
    pub fn apply(&mut self, w: &StaggeredVelocity, out: &mut StaggeredVelocity) -> f64 {
        let g = self.grid;
        let eu = self.su.apply(&w.u, &mut out.u);
        // v component is re-indexed so its own (long) direction is fast
        for j in 0..=g.ny {
            for i in 0..g.nx {
                self.vbuf_in[i * (g.ny + 1) + j] = w.v[j * g.nx + i];
            }
        }
        let vin = std::mem::take(&mut self.vbuf_in);
        let ev = self.sv.apply(&vin, &mut self.vbuf_out);
        self.vbuf_in = vin;
        for j in 0..=g.ny {
            for i in 0..g.nx {
                out.v[j * g.nx + i] = self.vbuf_out[i * (g.ny + 1) + j];
            }
        }
        eu + ev
    }

    /// Diagonal of `rho_f/dt + A` for Jacobi preconditioning.
    pub fn helmholtz_diagonal(&self, rho_over_dt: &StaggeredVelocity) -> StaggeredVelocity {
        let g = self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let mut d = StaggeredVelocity::zeros(g);
        for j in 0..ny {
            for i in 1..nx {
                let all_r = self.su.a_ll[j * nx + i];
                let all_l = self.su.a_ll[j * nx + i - 1];
                let att_t = self.su.a_tt[(j + 1) * (nx + 1) + i];
                let att_b = self.su.a_tt[j * (nx + 1) + i];
                d.u[j * (nx + 1) + i] = rho_over_dt.u[j * (nx + 1) + i]
                    + (all_r + all_l) / (g.hx * g.hx)
                    + (att_t + att_b) / (g.hy * g.hy);
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                let all_t = self.sv.a_ll[i * ny + j];
                let all_b = self.sv.a_ll[i * ny + j - 1];
                let att_r = self.sv.a_tt[(i + 1) * (ny + 1) + j];
                let att_l = self.sv.a_tt[i * (ny + 1) + j];
                d.v[j * nx + i] = rho_over_dt.v[j * nx + i]
                    + (all_t + all_b) / (g.hy * g.hy)
                    + (att_r + att_l) / (g.hx * g.hx);
            }
        }
        d
    }
}

/// `A w = -div(a grad w)` per component; flux form with face-harmonic
/// in-line coefficients. Errors if `a` is not elliptic.
pub fn variable_diffusion_apply(w: &StaggeredVelocity, a: &FaceTensorField) -> Result<StaggeredVelocity> {
    a.check_elliptic()?;
    Ok(apply_diffusion_unchecked(w, a).0)
}

/// Same operator without the ellipticity sweep, plus the quadratic form
/// `<A w, w>` (the discrete `int a grad w : grad w`).
pub fn apply_diffusion_unchecked(w: &StaggeredVelocity, a: &FaceTensorField) -> (StaggeredVelocity, f64) {
    let mut op = DiffusionOperator::new(a);
    let mut out = StaggeredVelocity::zeros(w.grid);
    let e = op.apply(w, &mut out);
    (out, e)
}

/// Discrete `int a grad w : grad w` (both components).
pub fn diffusion_form(w: &StaggeredVelocity, a: &FaceTensorField) -> f64 {
    apply_diffusion_unchecked(w, a).1
}

/// Solves `(rho_f/dt) w + A w = rhs` by Jacobi-preconditioned CG over the
/// interior faces. `rho_over_dt` is the face density divided by dt.
pub fn solve_helmholtz(
    rho_over_dt: &StaggeredVelocity,
    op: &mut DiffusionOperator,
    rhs: &StaggeredVelocity,
    rtol: f64,
    max_iter: usize,
) -> Result<StaggeredVelocity> {
    let g = op.grid;
    let diag = op.helmholtz_diagonal(rho_over_dt);
    let mut aw = StaggeredVelocity::zeros(g);
    let apply = |w: &StaggeredVelocity, op: &mut DiffusionOperator, aw: &mut StaggeredVelocity| {
        op.apply(w, aw);
        for (o, (r, wi)) in aw.u.iter_mut().zip(rho_over_dt.u.iter().zip(&w.u)) {
            *o += r * wi;
        }
        for (o, (r, wi)) in aw.v.iter_mut().zip(rho_over_dt.v.iter().zip(&w.v)) {
            *o += r * wi;
        }
        zero_boundary_normals(g, aw);
    };
    let precond = |r: &StaggeredVelocity| -> StaggeredVelocity {
        let mut z = r.clone();
        for (zi, di) in z.u.iter_mut().zip(&diag.u) {
            if *di != 0.0 {
                *zi /= di;
            }
        }
        for (zi, di) in z.v.iter_mut().zip(&diag.v) {
            if *di != 0.0 {
                *zi /= di;
            }
        }
        z
    };

    let mut b = rhs.clone();
    zero_boundary_normals(g, &mut b);
    let bnorm = b.dot(&b).sqrt();
    let mut x = StaggeredVelocity::zeros(g);
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b;
    let mut z = precond(&r);
    let mut rz = r.dot(&z);
    let mut p = z.clone();
    for iter in 1..=max_iter {
        apply(&p, op, &mut aw);
        let alpha = rz / p.dot(&aw);
        x.axpy(alpha, &p);
        r.axpy(-alpha, &aw);
        let rnorm = r.dot(&r).sqrt();
        if rnorm <= rtol * bnorm {
            return Ok(x);
        }
        if iter == max_iter {
            return Err(Error::DiffusionSolveDiverged {
                iterations: iter,
                residual: rnorm / bnorm,
            });
        }
        z = precond(&r);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.scale(beta);
        p.axpy(1.0, &z);
    }
    unreachable!()
}

fn zero_boundary_normals(g: Grid2D, w: &mut StaggeredVelocity) {
    for j in 0..g.ny {
        w.u[j * (g.nx + 1)] = 0.0;
        w.u[j * (g.nx + 1) + g.nx] = 0.0;
    }
    for i in 0..g.nx {
        w.v[i] = 0.0;
        w.v[g.ny * g.nx + i] = 0.0;
    }
}

/// Slope limiter retained in the reconstruction of advected values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvectionScheme {
    /// donor-cell upwind
    Upwind,
    /// upwind with minmod-limited linear reconstruction
    MusclMinmod,
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Conservative upwinded `div(rho u (x) u)` evaluated at velocity faces.
/// Density is face-interpolated; wall fluxes vanish with the normal velocity.
pub fn momentum_advection(
    rho: &ScalarField,
    w: &StaggeredVelocity,
    scheme: AdvectionScheme,
) -> StaggeredVelocity {
    let g = w.grid;
    let (nx, ny) = (g.nx, g.ny);
    let limited = scheme == AdvectionScheme::MusclMinmod;
    let mut out = StaggeredVelocity::zeros(g);

    let upwind = |donor: f64, behind: Option<f64>, ahead: f64| -> f64 {
        // linear reconstruction at the downwind side of the donor value
        match (limited, behind) {
            (true, Some(b)) => donor + 0.5 * minmod(donor - b, ahead - donor),
            _ => donor,
        }
    };

    // ---- u component ----
    // x-fluxes at cell centers: rho_c * ubar * u_upwind
    let mut fx = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let ubar = 0.5 * (w.u_at(i, j) + w.u_at(i + 1, j));
            let uadv = if ubar >= 0.0 {
                let behind = if i >= 1 { Some(w.u_at(i - 1, j)) } else { None };
                upwind(w.u_at(i, j), behind, w.u_at(i + 1, j))
            } else {
                let behind = if i + 2 <= nx { Some(w.u_at(i + 2, j)) } else { None };
                upwind(w.u_at(i + 1, j), behind, w.u_at(i, j))
            };
            fx[j * nx + i] = rho.at(i, j) * ubar * uadv;
        }
    }
    // y-fluxes at nodes: rho_n * vbar * u_upwind
    let mut fy = vec![0.0; (nx + 1) * (ny + 1)];
    for j in 1..ny {
        for i in 1..nx {
            let vbar = 0.5 * (w.v_at(i - 1, j) + w.v_at(i, j));
            let rho_n = 0.25 * (rho.at(i - 1, j - 1) + rho.at(i, j - 1) + rho.at(i - 1, j) + rho.at(i, j));
            let uadv = if vbar >= 0.0 {
                let behind = if j >= 2 { Some(w.u_at(i, j - 2)) } else { None };
                upwind(w.u_at(i, j - 1), behind, w.u_at(i, j))
            } else {
                let behind = if j + 1 < ny { Some(w.u_at(i, j + 1)) } else { None };
                upwind(w.u_at(i, j), behind, w.u_at(i, j - 1))
            };
            fy[j * (nx + 1) + i] = rho_n * vbar * uadv;
        }
    }
    for j in 0..ny {
        for i in 1..nx {
            out.u[j * (nx + 1) + i] = (fx[j * nx + i] - fx[j * nx + i - 1]) / g.hx
                + (fy[(j + 1) * (nx + 1) + i] - fy[j * (nx + 1) + i]) / g.hy;
        }
    }

    // ---- v component ----
    let mut gy = vec![0.0; nx * ny]; // y-fluxes at cell centers
    for j in 0..ny {
        for i in 0..nx {
            let vbar = 0.5 * (w.v_at(i, j) + w.v_at(i, j + 1));
            let vadv = if vbar >= 0.0 {
                let behind = if j >= 1 { Some(w.v_at(i, j - 1)) } else { None };
                upwind(w.v_at(i, j), behind, w.v_at(i, j + 1))
            } else {
                let behind = if j + 2 <= ny { Some(w.v_at(i, j + 2)) } else { None };
                upwind(w.v_at(i, j + 1), behind, w.v_at(i, j))
            };
            gy[j * nx + i] = rho.at(i, j) * vbar * vadv;
        }
    }
    let mut gx = vec![0.0; (nx + 1) * (ny + 1)]; // x-fluxes at nodes
    for j in 1..ny {
        for i in 1..nx {
            let ubar = 0.5 * (w.u_at(i, j - 1) + w.u_at(i, j));
            let rho_n = 0.25 * (rho.at(i - 1, j - 1) + rho.at(i, j - 1) + rho.at(i - 1, j) + rho.at(i, j));
            let vadv = if ubar >= 0.0 {
                let behind = if i >= 2 { Some(w.v_at(i - 2, j)) } else { None };
                upwind(w.v_at(i - 1, j), behind, w.v_at(i, j))
            } else {
                let behind = if i + 1 < nx { Some(w.v_at(i + 1, j)) } else { None };
                upwind(w.v_at(i, j), behind, w.v_at(i - 1, j))
            };
            gx[j * (nx + 1) + i] = rho_n * ubar * vadv;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            out.v[j * nx + i] = (gx[j * (nx + 1) + i + 1] - gx[j * (nx + 1) + i]) / g.hx
                + (gy[j * nx + i] - gy[(j - 1) * nx + i]) / g.hy;
        }
    }

    out
}

/// All four velocity-gradient components interpolated to cell centers,
/// with no-slip ghost reflection across walls.
/// Order: du/dx, du/dy, dv/dx, dv/dy.
pub fn gradient_at_centers(w: &StaggeredVelocity) -> [ScalarField; 4] {
    gradient_at_centers_ghost(w, true)
}

/// Same stencils with copy (zero-derivative) ghosts, for sampled fields that
/// do not satisfy the wall condition (e.g. composed fast-cell fields).
pub fn gradient_at_centers_freeslip(w: &StaggeredVelocity) -> [ScalarField; 4] {
    gradient_at_centers_ghost(w, false)
}

fn gradient_at_centers_ghost(w: &StaggeredVelocity, reflect: bool) -> [ScalarField; 4] {
    let g = w.grid;
    let (nx, ny) = (g.nx, g.ny);
    let mut dudx = ScalarField::zeros(g);
    let mut dudy = ScalarField::zeros(g);
    let mut dvdx = ScalarField::zeros(g);
    let mut dvdy = ScalarField::zeros(g);

    let sgn = if reflect { -1.0 } else { 1.0 };
    let u_ghost = |i: usize, j: isize| -> f64 {
        if j < 0 {
            sgn * w.u_at(i, 0)
        } else if j >= ny as isize {
            sgn * w.u_at(i, ny - 1)
        } else {
            w.u_at(i, j as usize)
        }
    };
    let v_ghost = |i: isize, j: usize| -> f64 {
        if i < 0 {
            sgn * w.v_at(0, j)
        } else if i >= nx as isize {
            sgn * w.v_at(nx - 1, j)
        } else {
            w.v_at(i as usize, j)
        }
    };

    for j in 0..ny {
        for i in 0..nx {
            *dudx.at_mut(i, j) = (w.u_at(i + 1, j) - w.u_at(i, j)) / g.hx;
            *dvdy.at_mut(i, j) = (w.v_at(i, j + 1) - w.v_at(i, j)) / g.hy;
            let jj = j as isize;
            let du_n = |ii: usize, tj: isize| (u_ghost(ii, tj) - u_ghost(ii, tj - 1)) / g.hy;
            *dudy.at_mut(i, j) =
                0.25 * (du_n(i, jj) + du_n(i + 1, jj) + du_n(i, jj + 1) + du_n(i + 1, jj + 1));
            let ii = i as isize;
            let dv_n = |ti: isize, jj2: usize| (v_ghost(ti, jj2) - v_ghost(ti - 1, jj2)) / g.hx;
            *dvdx.at_mut(i, j) =
                0.25 * (dv_n(ii, j) + dv_n(ii + 1, j) + dv_n(ii, j + 1) + dv_n(ii + 1, j + 1));
        }
    }
    [dudx, dudy, dvdx, dvdy]
}
