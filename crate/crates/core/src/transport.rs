//! Conservative bound-preserving advance of the continuity equation
//! `d rho / dt + div(rho u) = 0`.
//!
//! The default flux is donor-cell upwind: with a discretely divergence-free
//! velocity and the per-cell outflow Courant number at or below 0.9, the
//! update is a convex combination of neighbor values, so the initial bounds
//! `m <= rho <= M` and the total mass are preserved exactly (up to roundoff).
//! A minmod-limited reconstruction is available where the hard bound proof
//! is not required.

use crate::error::{Error, Result};
use crate::mac_grid::{divergence, AdvectionScheme, ScalarField, StaggeredVelocity};

pub const CFL_LIMIT: f64 = 0.9;
pub const DIV_FREE_TOL: f64 = 1e-8;
/// roundoff allowance on the post-update bound check
pub const BOUND_ROUNDOFF: f64 = 1e-10;

/// Cell-centered density with its declared invariant bounds.
#[derive(Debug, Clone)]
pub struct DensityField {
    pub field: ScalarField,
    /// (m, M): every value stays inside for every admissible step
    pub bounds: (f64, f64),
}

impl DensityField {
    pub fn new(field: ScalarField, m: f64, big_m: f64) -> Result<Self> {
        assert!(m > 0.0 && m <= big_m, "need 0 < m <= M");
        let lo = field.data.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = field.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if lo < m || hi > big_m {
            return Err(Error::BoundViolation {
                min: lo,
                max: hi,
                lo: m,
                hi: big_m,
            });
        }
        Ok(DensityField {
            field,
            bounds: (m, big_m),
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.field.data.iter().sum::<f64>() * self.field.grid.cell_volume()
    }

    pub fn min_max(&self) -> (f64, f64) {
        let lo = self.field.data.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.field.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Largest per-cell outflow Courant number `dt * sum(outgoing face speeds) / h`
/// together with the per-direction number from the face speeds. The convex
/// combination argument needs the outflow form; for unidirectional flow the
/// two coincide.
pub fn courant_numbers(u: &StaggeredVelocity, dt: f64) -> (f64, f64) {
    let g = u.grid;
    let (umax, vmax) = u.max_speed();
    let directional = dt * (umax / g.hx).max(vmax / g.hy);
    let mut outflow = 0.0f64;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let out = (u.u_at(i + 1, j).max(0.0) - u.u_at(i, j).min(0.0)) / g.hx
                + (u.v_at(i, j + 1).max(0.0) - u.v_at(i, j).min(0.0)) / g.hy;
            outflow = outflow.max(dt * out);
        }
    }
    (outflow, directional)
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

/// One conservative finite-volume step. Preconditions: the Courant numbers
/// stay at or below 0.9 (else `CflViolation`) and `u` is discretely
/// divergence-free (asserted; the solvers guarantee it structurally).
pub fn advance_density(
    rho: &DensityField,
    u: &StaggeredVelocity,
    dt: f64,
    scheme: AdvectionScheme,
) -> Result<DensityField> {
    let g = rho.field.grid;
    assert_eq!(u.grid, g);
    let divu = divergence(u).norm_inf();
    assert!(
        divu <= DIV_FREE_TOL,
        "advance_density needs a divergence-free velocity, got ||div u||_inf = {divu:e}"
    );
    let (outflow, directional) = courant_numbers(u, dt);
    let courant = outflow.max(directional);
    if courant > CFL_LIMIT {
        return Err(Error::CflViolation {
            courant,
            limit: CFL_LIMIT,
        });
    }

    let (nx, ny) = (g.nx, g.ny);
    let r = &rho.field;
    let limited = scheme == AdvectionScheme::MusclMinmod;

    // upwind face value with optional minmod reconstruction; slope falls back
    // to zero against a wall
    let face_value = |donor: f64, behind: Option<f64>, ahead: f64| -> f64 {
        match (limited, behind) {
            (true, Some(b)) => donor + 0.5 * minmod(donor - b, ahead - donor),
            _ => donor,
        }
    };

    // x-fluxes at u-faces; wall faces carry exactly zero
    let mut fx = vec![0.0; (nx + 1) * ny];
    for j in 0..ny {
        for i in 1..nx {
            let uf = u.u_at(i, j);
            let val = if uf >= 0.0 {
                let behind = if i >= 2 { Some(r.at(i - 2, j)) } else { None };
                face_value(r.at(i - 1, j), behind, r.at(i, j))
            } else {
                let behind = if i + 1 < nx { Some(r.at(i + 1, j)) } else { None };
                face_value(r.at(i, j), behind, r.at(i - 1, j))
            };
            fx[j * (nx + 1) + i] = uf * val;
        }
    }
    let mut fy = vec![0.0; nx * (ny + 1)];
    for j in 1..ny {
        for i in 0..nx {
            let vf = u.v_at(i, j);
            let val = if vf >= 0.0 {
                let behind = if j >= 2 { Some(r.at(i, j - 2)) } else { None };
                face_value(r.at(i, j - 1), behind, r.at(i, j))
            } else {
                let behind = if j + 1 < ny { Some(r.at(i, j + 1)) } else { None };
                face_value(r.at(i, j), behind, r.at(i, j - 1))
            };
            fy[j * nx + i] = vf * val;
        }
    }

    let mut out = ScalarField::zeros(g);
    for j in 0..ny {
        for i in 0..nx {
            out.data[j * nx + i] = r.at(i, j)
                - dt * ((fx[j * (nx + 1) + i + 1] - fx[j * (nx + 1) + i]) / g.hx
                    + (fy[(j + 1) * nx + i] - fy[j * nx + i]) / g.hy);
        }
    }

    let (m, big_m) = rho.bounds;
    let span = (big_m - m).max(m.abs()).max(1.0);
    let lo = out.data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = out.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo < m - BOUND_ROUNDOFF * span || hi > big_m + BOUND_ROUNDOFF * span {
        return Err(Error::BoundViolation {
            min: lo,
            max: hi,
            lo: m,
            hi: big_m,
        });
    }
    Ok(DensityField {
        field: out,
        bounds: rho.bounds,
    })
}
