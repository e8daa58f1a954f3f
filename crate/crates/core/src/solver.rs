//! Semi-implicit time stepping of the stochastic variable-density momentum
//! equation, with either rapidly oscillating coefficients or their
//! homogenized constants.
//!
//! One step, from `(rho^n, u^n)`:
//!
//! 1. transport the density conservatively;
//! 2. assemble explicit advection `div(rho^n u^n (x) u^n)`, forcing, and the
//!    noise increment `sum_k sqrt(lambda_k) g_k(u^n) dW_k`;
//! 3. solve the implicit diffusion system
//!    `(rho^{n+1}/dt) u* - div(a grad u*) = rho^n u^n / dt - adv + f + noise/dt`;
//! 4. project with the density-weighted Leray projection, so the momentum
//!    increment is a discrete pressure gradient and the weighted kinetic
//!    energy cannot grow during projection.
//!
//! Diffusion coefficients are sampled at `(x/eps, t^n/eps)` explicitly in
//! time; the implicit matrix is refreshed per step only when the coefficient
//! actually depends on the fast time.

use crate::cell::{AveragedForce, CellCoefficient, EffectiveTensor, OscillatingForce};
use crate::error::{Error, Result};
use crate::mac_grid::{
    divergence, face_density, gradient_at_centers, momentum_advection, solve_helmholtz,
    weighted_energy, AdvectionScheme, DiffusionOperator, FaceTensorField, Grid2D, PoissonSolver,
    ScalarField, StaggeredVelocity,
};
use crate::noise::{noise_sum, GOperator, NoisePath, NoiseSpec};
use crate::transport::{advance_density, DensityField};
use std::sync::Arc;

pub const DIV_TOL: f64 = 1e-8;
pub const MIN_EPS_CELLS: f64 = 8.0;

/// Diffusion coefficient source: the sampled oscillating field at scale
/// `eps`, or the constant homogenized tensor.
#[derive(Clone)]
pub enum CoefficientSource {
    Oscillating {
        cell: Arc<CellCoefficient>,
        eps: f64,
        /// fast-time dependence: refresh the operator every step and enforce
        /// `dt <= eps / 8`
        time_dependent: bool,
    },
    Homogenized { tensor: EffectiveTensor },
}

impl std::fmt::Debug for CoefficientSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CoefficientSource::Oscillating { eps, time_dependent, .. } => f
                .debug_struct("Oscillating")
                .field("eps", eps)
                .field("time_dependent", time_dependent)
                .finish(),
            CoefficientSource::Homogenized { tensor } => {
                f.debug_struct("Homogenized").field("a_bar", &tensor.a_bar).finish()
            }
        }
    }
}

/// Forcing source mirrored on the coefficient choice, plus a direct
/// space-time field for manufactured solutions.
#[derive(Clone)]
pub enum ForceSource {
    NoForce,
    Oscillating { force: OscillatingForce, eps: f64 },
    Averaged { fbar: AveragedForce },
    Direct(Arc<dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync>),
}

impl std::fmt::Debug for ForceSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ForceSource::NoForce => write!(f, "NoForce"),
            ForceSource::Oscillating { force, eps } => {
                write!(f, "Oscillating({force:?}, eps={eps})")
            }
            ForceSource::Averaged { .. } => write!(f, "Averaged"),
            ForceSource::Direct(_) => write!(f, "Direct"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub grid: Grid2D,
    pub dt: f64,
    pub n_steps: usize,
    pub coefficient: CoefficientSource,
    pub force: ForceSource,
    pub noise: Option<NoiseSpec>,
    pub g: GOperator,
    /// None disables advection (Stokes runs)
    pub advection: Option<AdvectionScheme>,
    pub transport: AdvectionScheme,
    pub diffusion_rtol: f64,
    pub projection_rtol: f64,
    pub max_iter: usize,
    pub snapshot_stride: usize,
}

impl SolverConfig {
    pub fn new(grid: Grid2D, dt: f64, n_steps: usize, coefficient: CoefficientSource) -> Self {
        SolverConfig {
            grid,
            dt,
            n_steps,
            coefficient,
            force: ForceSource::NoForce,
            noise: None,
            g: GOperator::Off,
            advection: Some(AdvectionScheme::MusclMinmod),
            transport: AdvectionScheme::Upwind,
            diffusion_rtol: 1e-10,
            projection_rtol: 1e-12,
            max_iter: 20_000,
            snapshot_stride: 0,
        }
    }

    /// Spatial and temporal resolution constraints for oscillating sources.
    pub fn validate(&self) -> Result<()> {
        let h = self.grid.hx.max(self.grid.hy);
        let dt = self.dt;
        let check_eps = |eps: f64, needs_dt: bool| -> Result<()> {
            let ratio = eps / h;
            if ratio < MIN_EPS_CELLS {
                return Err(Error::ResolutionViolation { eps, h, ratio });
            }
            if needs_dt && dt > eps / 8.0 {
                return Err(Error::TimeResolutionViolation { eps, dt });
            }
            Ok(())
        };
        if let CoefficientSource::Oscillating { eps, time_dependent, .. } = &self.coefficient {
            check_eps(*eps, *time_dependent)?;
        }
        if let ForceSource::Oscillating { eps, .. } = &self.force {
            check_eps(*eps, true)?;
        }
        Ok(())
    }
}

/// One time level of the flow.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub rho: DensityField,
    pub u: StaggeredVelocity,
    /// face-interpolated rho times u
    pub momentum: StaggeredVelocity,
    pub pi: ScalarField,
    pub t: f64,
}

impl FlowState {
    pub fn new(rho: DensityField, u: StaggeredVelocity) -> Self {
        let momentum = momentum_of(&rho.field, &u);
        let pi = ScalarField::zeros(u.grid);
        FlowState {
            rho,
            u,
            momentum,
            pi,
            t: 0.0,
        }
    }

    pub fn kinetic_energy(&self) -> f64 {
        weighted_energy(&self.rho.field, &self.u)
    }

    pub fn check_invariants(&self) -> Result<()> {
        let div = divergence(&self.u).norm_inf();
        if div > DIV_TOL {
            return Err(Error::DiffusionSolveDiverged {
                iterations: 0,
                residual: div,
            });
        }
        if !(self.u.u.iter().chain(self.u.v.iter()).all(|v| v.is_finite())) || !self.pi.is_finite()
        {
            return Err(Error::BadSnapshot("non-finite state".into()));
        }
        let (lo, hi) = self.rho.min_max();
        let (m, big_m) = self.rho.bounds;
        let span = (big_m - m).max(1.0);
        if lo < m - 1e-10 * span || hi > big_m + 1e-10 * span {
            return Err(Error::BoundViolation {
                min: lo,
                max: hi,
                lo: m,
                hi: big_m,
            });
        }
        // momentum cache stays consistent with (rho, u)
        let want = momentum_of(&self.rho.field, &self.u);
        let drift = self
            .momentum
            .u
            .iter()
            .zip(&want.u)
            .chain(self.momentum.v.iter().zip(&want.v))
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if drift > 1e-12 * big_m {
            return Err(Error::BadSnapshot(format!(
                "momentum cache out of sync by {drift:e}"
            )));
        }
        Ok(())
    }
}

fn momentum_of(rho: &ScalarField, u: &StaggeredVelocity) -> StaggeredVelocity {
    let rf = face_density(rho);
    let mut m = u.clone();
    for (a, b) in m.u.iter_mut().zip(&rf.u) {
        *a *= b;
    }
    for (a, b) in m.v.iter_mut().zip(&rf.v) {
        *a *= b;
    }
    m
}

/// Cumulative energy bookkeeping; `residual` is per step.
#[derive(Debug, Clone, Default)]
pub struct EnergyRow {
    pub step: usize,
    pub time: f64,
    pub kinetic: f64,
    pub dissipation: f64,
    pub force_work: f64,
    pub noise_work: f64,
    pub ito: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EnergyReport {
    pub rows: Vec<EnergyRow>,
}

impl EnergyReport {
    /// Per-step residuals of the discrete Ito balance
    /// `dKE + 2 dissipation - 2 force work - ito - 2 noise work`.
    pub fn residuals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.residual).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s =
            String::from("step,time,kinetic,dissipation,force_work,noise_work,ito,residual\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                r.step, r.time, r.kinetic, r.dissipation, r.force_work, r.noise_work, r.ito,
                r.residual
            ));
        }
        s
    }
}

/// Explicit moment envelope from the energy estimate chain: with
/// `2 (f, u) <= c2 (1 + 3 ||u||^2)`, `||g||^2 <= c4 (1 + ||u||^2)`,
/// `||u||^2 <= ||sqrt(rho) u||^2 / m`, and the Davis bound
/// `E sup |int (u, g dW)| <= 3 E <M>^{1/2}` split by Young's inequality,
/// Gronwall gives `E sup_t ||sqrt(rho) u||^2 <= (2 KE0 + 2 alpha T) e^{2 beta T}`.
pub fn gronwall_envelope(m: f64, c2: f64, c4: f64, t_end: f64, ke0: f64) -> f64 {
    const C_BDG: f64 = 3.0;
    let alpha = c2 + c4 + 2.0 * C_BDG * C_BDG * c4 / m;
    let beta = (3.0 * c2 + c4) / m + 2.0 * C_BDG * C_BDG * c4 / (m * m);
    (2.0 * ke0 + 2.0 * alpha * t_end) * (2.0 * beta * t_end).exp()
}

pub struct Solver {
    pub cfg: SolverConfig,
    state: FlowState,
    poisson: PoissonSolver,
    cached_coeff: Option<FaceTensorField>,
    cached_op: Option<DiffusionOperator>,
    pub energy: EnergyReport,
    step_index: usize,
    acc_dissipation: f64,
    acc_force: f64,
    acc_noise: f64,
    acc_ito: f64,
}

impl Solver {
    /// Validates the configuration and projects the initial velocity onto the
    /// divergence-free subspace (weighted by the initial density).
    pub fn new(cfg: SolverConfig, rho0: DensityField, u0: StaggeredVelocity) -> Result<Self> {
        cfg.validate()?;
        assert_eq!(u0.grid, cfg.grid);
        assert!(u0.boundary_normals_are_zero());
        let mut poisson = PoissonSolver::new(cfg.grid);
        let (u0p, _) =
            poisson.project_weighted(&u0, &rho0.field, cfg.projection_rtol, cfg.max_iter)?;
        let cached_coeff = match &cfg.coefficient {
            CoefficientSource::Homogenized { tensor } => {
                let t = *tensor;
                Some(FaceTensorField::from_fn(cfg.grid, |_, _| {
                    [t.a_bar[0][0], t.a_bar[0][1], t.a_bar[1][1]]
                }))
            }
            CoefficientSource::Oscillating {
                cell,
                eps,
                time_dependent: false,
            } => {
                let (c, e) = (cell.clone(), *eps);
                Some(FaceTensorField::from_fn(cfg.grid, |x, y| {
                    let s = c.sample_periodic(x / e, y / e, 0.0);
                    [s[0], s[1], s[2]]
                }))
            }
            _ => None,
        };
        if let Some(fc) = &cached_coeff {
            fc.check_elliptic()?;
        }
        let cached_op = cached_coeff.as_ref().map(DiffusionOperator::new);
        let state = FlowState::new(rho0, u0p);
        Ok(Solver {
            cfg,
            state,
            poisson,
            cached_coeff,
            cached_op,
            energy: EnergyReport::default(),
            step_index: 0,
            acc_dissipation: 0.0,
            acc_force: 0.0,
            acc_noise: 0.0,
            acc_ito: 0.0,
        })
    }

    pub fn state(&self) -> &FlowState {
        &self.state
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    /// The coefficient field at t, and whether it was freshly sampled (the
    /// operator must then be rebuilt).
    fn coefficient_at(&self, t: f64) -> Option<FaceTensorField> {
        match (&self.cached_coeff, &self.cfg.coefficient) {
            (Some(_), _) => None,
            (None, CoefficientSource::Oscillating { cell, eps, .. }) => {
                let (c, e) = (cell.clone(), *eps);
                Some(FaceTensorField::from_fn(self.cfg.grid, move |x, y| {
                    let s = c.sample_periodic(x / e, y / e, t / e);
                    [s[0], s[1], s[2]]
                }))
            }
            (None, CoefficientSource::Homogenized { .. }) => unreachable!("always cached"),
        }
    }

    /// Forcing sampled at face centers; the velocity argument pairs the
    /// face's own component with a 4-point interpolation of the other one.
    fn force_field(&self, t: f64, u: &StaggeredVelocity) -> StaggeredVelocity {
        let g = self.cfg.grid;
        let mut f = StaggeredVelocity::zeros(g);
        if matches!(self.cfg.force, ForceSource::NoForce) {
            return f;
        }
        let eval = |x: f64, y: f64, xi: [f64; 2]| -> [f64; 2] {
            match &self.cfg.force {
                ForceSource::NoForce => [0.0, 0.0],
                ForceSource::Oscillating { force, eps } => {
                    force.eval([x / eps, y / eps], t / eps, xi)
                }
                ForceSource::Averaged { fbar } => fbar.eval(xi),
                ForceSource::Direct(func) => func(x, y, t),
            }
        };
        for j in 0..g.ny {
            for i in 1..g.nx {
                let (x, y) = g.u_face(i, j);
                let vbar = 0.25
                    * (u.v_at(i - 1, j) + u.v_at(i, j) + u.v_at(i - 1, j + 1) + u.v_at(i, j + 1));
                f.u[j * (g.nx + 1) + i] = eval(x, y, [u.u_at(i, j), vbar])[0];
            }
        }
        for j in 1..g.ny {
            for i in 0..g.nx {
                let (x, y) = g.v_face(i, j);
                let ubar = 0.25
                    * (u.u_at(i, j - 1) + u.u_at(i + 1, j - 1) + u.u_at(i, j) + u.u_at(i + 1, j));
                f.v[j * g.nx + i] = eval(x, y, [ubar, u.v_at(i, j)])[1];
            }
        }
        f
    }

    /// One semi-implicit Euler-Maruyama step. `dw` carries this step's
    /// per-mode increments (required when noise is configured).
    pub fn advance(&mut self, dw: Option<&[f64]>) -> Result<()> {
        let dt = self.cfg.dt;
        let t_n = self.state.t;
        let g = self.cfg.grid;

        // (1) density transport
        let rho_next = advance_density(&self.state.rho, &self.state.u, dt, self.cfg.transport)?;

        // (2) explicit terms at t^n
        let adv = match self.cfg.advection {
            Some(scheme) => momentum_advection(&self.state.rho.field, &self.state.u, scheme),
            None => StaggeredVelocity::zeros(g),
        };
        let force = self.force_field(t_n, &self.state.u);
        let noise = match (&self.cfg.noise, &self.cfg.g) {
            (Some(spec), gop) if !gop.is_off() => {
                let inc = dw.expect("noise configured but no increments supplied");
                noise_sum(gop, spec, &self.state.u, inc)
            }
            _ => StaggeredVelocity::zeros(g),
        };
        let ito_inc = match (&self.cfg.noise, &self.cfg.g) {
            (Some(spec), gop) if !gop.is_off() => gop.squared_norm(spec, &self.state.u) * dt,
            _ => 0.0,
        };

        // (3) implicit diffusion: (rho^{n+1}/dt) u* + A u* = rhs
        let fresh = self.coefficient_at(t_n);
        let mut fresh_op = fresh.as_ref().map(DiffusionOperator::new);
        let a_op = fresh_op
            .as_mut()
            .or(self.cached_op.as_mut())
            .expect("diffusion operator available");
        let rho_face_next = face_density(&rho_next.field);
        let mut rho_over_dt = rho_face_next;
        rho_over_dt.scale(1.0 / dt);

        let mut rhs = momentum_of(&self.state.rho.field, &self.state.u);
        rhs.scale(1.0 / dt);
        rhs.axpy(-1.0, &adv);
        rhs.axpy(1.0, &force);
        rhs.axpy(1.0 / dt, &noise);
        let u_star = solve_helmholtz(
            &rho_over_dt,
            a_op,
            &rhs,
            self.cfg.diffusion_rtol,
            self.cfg.max_iter,
        )?;

        // (4) density-weighted projection and pressure update
        let (u_next, p) = self.poisson.project_weighted(
            &u_star,
            &rho_next.field,
            self.cfg.projection_rtol,
            self.cfg.max_iter,
        )?;
        let mut pi = p;
        pi.data.iter_mut().for_each(|v| *v /= dt);

        // energy bookkeeping: weighted norms, implicit dissipation at u*
        let ke_old = self.state.kinetic_energy();
        let a_op = fresh_op.as_mut().or(self.cached_op.as_mut()).unwrap();
        let mut scratch = StaggeredVelocity::zeros(g);
        let dissip_inc = dt * a_op.apply(&u_star, &mut scratch);
        let force_inc = dt * force.dot(&u_star);
        let noise_inc = noise.dot(&self.state.u);
        let momentum = momentum_of(&rho_next.field, &u_next);
        let next = FlowState {
            rho: rho_next,
            u: u_next,
            momentum,
            pi,
            t: t_n + dt,
        };
        let ke_new = next.kinetic_energy();
        self.acc_dissipation += dissip_inc;
        self.acc_force += force_inc;
        self.acc_noise += noise_inc;
        self.acc_ito += ito_inc;
        let residual =
            (ke_new - ke_old) + 2.0 * dissip_inc - 2.0 * force_inc - ito_inc - 2.0 * noise_inc;
        self.step_index += 1;
        self.energy.rows.push(EnergyRow {
            step: self.step_index,
            time: next.t,
            kinetic: ke_new,
            dissipation: self.acc_dissipation,
            force_work: self.acc_force,
            noise_work: self.acc_noise,
            ito: self.acc_ito,
            residual,
        });
        self.state = next;
        self.state.check_invariants()
    }
}

/// Stored trajectory sample.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub state: FlowState,
}

#[derive(Debug)]
pub struct RunResult {
    pub final_state: FlowState,
    pub energy: EnergyReport,
    pub snapshots: Vec<Snapshot>,
    /// hash of the consumed noise path, if any
    pub path_hash: Option<u64>,
}

/// Runs `cfg.n_steps` steps from the given initial data, consuming the path's
/// increments step by step. Snapshots are taken every `snapshot_stride` steps
/// (0 keeps only the initial and final states).
pub fn run(
    cfg: SolverConfig,
    rho0: DensityField,
    u0: StaggeredVelocity,
    path: Option<&NoisePath>,
) -> Result<RunResult> {
    if let (Some(p), Some(spec)) = (path, &cfg.noise) {
        assert_eq!(p.n_modes, spec.n_modes, "path/spec mode mismatch");
        assert!(p.n_steps >= cfg.n_steps, "path shorter than the run");
        assert!(
            (p.dt - cfg.dt).abs() <= 1e-12 * cfg.dt,
            "path dt {} does not match solver dt {}",
            p.dt,
            cfg.dt
        );
    }
    let n_steps = cfg.n_steps;
    let stride = cfg.snapshot_stride;
    let mut solver = Solver::new(cfg, rho0, u0)?;
    let mut snapshots = vec![Snapshot {
        step: 0,
        state: solver.state().clone(),
    }];
    for n in 0..n_steps {
        let dw = path.map(|p| p.step(n));
        solver.advance(dw)?;
        if (stride > 0 && (n + 1) % stride == 0) || n + 1 == n_steps {
            snapshots.push(Snapshot {
                step: n + 1,
                state: solver.state().clone(),
            });
        }
    }
    Ok(RunResult {
        final_state: solver.state.clone(),
        energy: solver.energy,
        snapshots,
        path_hash: path.map(|p| p.hash()),
    })
}

/// Smooth single-eddy initial velocity: `amp * curl(sin^2(pi x) sin^2(pi y))`.
pub fn eddy_velocity(grid: Grid2D, amp: f64) -> StaggeredVelocity {
    let mut psi = vec![0.0; (grid.nx + 1) * (grid.ny + 1)];
    for j in 0..=grid.ny {
        for i in 0..=grid.nx {
            let x = i as f64 * grid.hx;
            let y = j as f64 * grid.hy;
            psi[j * (grid.nx + 1) + i] = amp
                * (std::f64::consts::PI * x).sin().powi(2)
                * (std::f64::consts::PI * y).sin().powi(2);
        }
    }
    StaggeredVelocity::from_stream(grid, &psi)
}

/// Gradients of both velocity components at cell centers (shared by the
/// corrector metric).
pub fn center_gradients(u: &StaggeredVelocity) -> [ScalarField; 4] {
    gradient_at_centers(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_source() -> CoefficientSource {
        CoefficientSource::Homogenized {
            tensor: EffectiveTensor {
                a_bar: [[1.0, 0.0], [0.0, 1.0]],
                kappa_eff: 1.0,
            },
        }
    }

    fn uniform_density(g: Grid2D) -> DensityField {
        DensityField::new(ScalarField::from_fn(g, |_, _| 1.0), 0.5, 2.0).unwrap()
    }

    #[test]
    fn rest_state_stays_at_rest() {
        let g = Grid2D::new(16, 16);
        let cfg = SolverConfig::new(g, 1e-3, 5, identity_source());
        let res = run(cfg, uniform_density(g), StaggeredVelocity::zeros(g), None).unwrap();
        assert_eq!(res.final_state.u.norm_l2(), 0.0);
        assert!(res
            .energy
            .rows
            .iter()
            .all(|r| r.kinetic == 0.0 && r.residual == 0.0));
    }

    #[test]
    fn deterministic_energy_is_non_increasing() {
        let g = Grid2D::new(32, 32);
        let cfg = SolverConfig::new(g, 1e-3, 40, identity_source());
        let rho = DensityField::new(
            ScalarField::from_fn(g, |x, y| 1.25 + 0.5 * (std::f64::consts::PI * x).sin() * y),
            1.0,
            2.0,
        )
        .unwrap();
        let res = run(cfg, rho, eddy_velocity(g, 1.0), None).unwrap();
        let mut prev = f64::INFINITY;
        for r in &res.energy.rows {
            assert!(r.kinetic <= prev, "step {}: {} > {}", r.step, r.kinetic, prev);
            prev = r.kinetic;
        }
        assert!(divergence(&res.final_state.u).norm_inf() <= DIV_TOL);
    }

    #[test]
    fn deterministic_residual_is_dissipative_and_small() {
        let g = Grid2D::new(32, 32);
        let cfg = SolverConfig::new(g, 1e-3, 20, identity_source());
        let res = run(cfg, uniform_density(g), eddy_velocity(g, 1.0), None).unwrap();
        for r in &res.energy.rows {
            assert!(r.residual <= 1e-12, "step {}: residual {}", r.step, r.residual);
        }
    }

    #[test]
    fn resolution_guards_fire() {
        let g = Grid2D::new(16, 16); // h = 1/16, eps/h = 1.6 < 8
        let cell = Arc::new(
            crate::cell::CoefficientFamily::Sinusoidal { base: 2.0, amp: 1.0 }.sample(16, 2),
        );
        let cfg = SolverConfig::new(
            g,
            1e-3,
            1,
            CoefficientSource::Oscillating {
                cell,
                eps: 0.1,
                time_dependent: false,
            },
        );
        assert!(matches!(
            cfg.validate(),
            Err(Error::ResolutionViolation { .. })
        ));

        let g = Grid2D::new(128, 128);
        let cell = Arc::new(
            crate::cell::CoefficientFamily::TimeOnly { base: 2.0, amp: 1.0 }.sample(8, 8),
        );
        let cfg = SolverConfig::new(
            g,
            0.1,
            1,
            CoefficientSource::Oscillating {
                cell,
                eps: 0.25,
                time_dependent: true,
            },
        );
        assert!(matches!(
            cfg.validate(),
            Err(Error::TimeResolutionViolation { .. })
        ));
    }

    #[test]
    fn stochastic_run_keeps_invariants_and_is_deterministic() {
        let g = Grid2D::new(32, 32);
        let spec = NoiseSpec::new(g, 4, 1.5, 0.02, 11);
        let mut cfg = SolverConfig::new(g, 1e-3, 20, identity_source());
        cfg.noise = Some(spec.clone());
        cfg.g = GOperator::Multiplicative { sigma: 1.0 };
        let path = crate::noise::sample_path(&spec, 20, 1e-3);
        let rho =
            DensityField::new(ScalarField::from_fn(g, |x, _| 1.0 + 0.5 * x), 0.9, 1.6).unwrap();
        let r1 = run(cfg.clone(), rho.clone(), eddy_velocity(g, 0.5), Some(&path)).unwrap();
        let r2 = run(cfg, rho, eddy_velocity(g, 0.5), Some(&path)).unwrap();
        assert_eq!(r1.final_state.u.u, r2.final_state.u.u);
        assert_eq!(r1.path_hash, r2.path_hash);
        assert!(divergence(&r1.final_state.u).norm_inf() <= DIV_TOL);
        let (lo, hi) = r1.final_state.rho.min_max();
        assert!(lo >= 0.9 - 1e-10 && hi <= 1.6 + 1e-10);
    }

    #[test]
    fn gronwall_envelope_is_positive_and_monotone_in_t() {
        let a = gronwall_envelope(1.0, 0.5, 0.2, 0.1, 1.0);
        let b = gronwall_envelope(1.0, 0.5, 0.2, 0.5, 1.0);
        assert!(a > 0.0 && b > a);
    }
}
