//! Epsilon-ladder experiments: the oscillating and homogenized systems are
//! advanced in lockstep under one shared noise path per sample, and the
//! distance between them is measured as
//!
//! * `err_strong`   — `E int_0^T || u_eps - u ||_{L2}^2 dt`,
//! * `err_corrector` — `E int || grad u_eps - grad u - G ||^2`, with the
//!   corrector gradient `G_{kj}(x,t) = - sum_i du_k/dx_i (x,t)
//!   d eta_i / d y_j (x/eps, t/eps)`,
//! * `err_plain`    — the same with the corrector term dropped,
//! * weak two-scale pairings of the density and momentum against separable
//!   test functions, compared to the pairing of the limit fields.
//!
//! Paired sampling (one master path per sample feeding every run) keeps the
//! variance of the differences small; metric reduction is index-ordered, so
//! reports are identical in serial and parallel modes.

use crate::cell::{CellCoefficient, CorrectorSet, EffectiveTensor, OscillatingForce, VectorCorrectorSet};
use crate::error::{Error, Result};
use crate::mac_grid::{gradient_at_centers, gradient_at_centers_freeslip, ScalarField, StaggeredVelocity};
use crate::noise::{sample_path, NoiseSpec};
use crate::solver::{CoefficientSource, ForceSource, Solver, SolverConfig};
use crate::transport::DensityField;
use rayon::prelude::*;
use std::sync::Arc;

// ---- separable test functions for weak two-scale pairings ------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlowFactor {
    One,
    /// w(x, y) = x
    X1,
    /// w(x, y) = sin(pi x) sin(pi y)
    Bump,
}

impl SlowFactor {
    pub fn eval(self, x: f64, y: f64) -> f64 {
        match self {
            SlowFactor::One => 1.0,
            SlowFactor::X1 => x,
            SlowFactor::Bump => (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FastFactor {
    One,
    /// sin(2 pi y1): zero cell mean
    SinY1,
}

impl FastFactor {
    pub fn eval(self, y1: f64, _y2: f64, _tau: f64) -> f64 {
        match self {
            FastFactor::One => 1.0,
            FastFactor::SinY1 => (2.0 * std::f64::consts::PI * y1).sin(),
        }
    }

    /// `int_{D_tau} phi dy dtau`
    pub fn cell_mean(self) -> f64 {
        match self {
            FastFactor::One => 1.0,
            FastFactor::SinY1 => 0.0,
        }
    }
}

/// `psi(x, t, y, tau) = slow(x) * fast(y, tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeparableTest {
    pub slow: SlowFactor,
    pub fast: FastFactor,
}

/// Midpoint-in-space, uniform-trapezoid-in-time quadrature of
/// `int field(x,t) psi(x, t, x/eps, t/eps) dx dt` over snapshots taken at
/// uniformly spaced times.
pub fn weak_sigma_pairing(snapshots: &[(f64, &ScalarField)], psi: SeparableTest, eps: f64) -> f64 {
    assert!(snapshots.len() >= 2, "need at least two time levels");
    let dt = snapshots[1].0 - snapshots[0].0;
    let mut total = 0.0;
    for (idx, (t, field)) in snapshots.iter().enumerate() {
        let g = field.grid;
        let mut space = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (x, y) = g.center(i, j);
                space +=
                    field.at(i, j) * psi.slow.eval(x, y) * psi.fast.eval(x / eps, y / eps, t / eps);
            }
        }
        let w = if idx == 0 || idx == snapshots.len() - 1 { 0.5 } else { 1.0 };
        total += w * space * g.cell_volume() * dt;
    }
    total
}

/// Companion quadrature of the two-scale limit pairing
/// `int limit(x,t) slow(x) dx dt * int fast dy dtau` for a limit field that
/// does not depend on the fast variables.
pub fn two_scale_limit_pairing(snapshots: &[(f64, &ScalarField)], psi: SeparableTest) -> f64 {
    assert!(snapshots.len() >= 2);
    let dt = snapshots[1].0 - snapshots[0].0;
    let mut total = 0.0;
    for (idx, (_t, field)) in snapshots.iter().enumerate() {
        let g = field.grid;
        let mut space = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (x, y) = g.center(i, j);
                space += field.at(i, j) * psi.slow.eval(x, y);
            }
        }
        let w = if idx == 0 || idx == snapshots.len() - 1 { 0.5 } else { 1.0 };
        total += w * space * g.cell_volume() * dt;
    }
    total * psi.fast.cell_mean()
}

// ---- corrector evaluation ---------------------------------------------------

/// Corrector gradient `grad_y ubar` at cell centers, evaluated at the fast
/// point `(x/eps, t/eps)`:
/// `G[k][j](x) = - sum_i du_k/dx_i (x) * d eta_i / d y_j (x/eps, t/eps)`.
/// `grads` are the homogenized velocity gradients in the order
/// `[du/dx, du/dy, dv/dx, dv/dy]`; the output uses the same layout.
pub fn corrector_field(
    grads: &[ScalarField; 4],
    eta: &CorrectorSet,
    eps: f64,
    t: f64,
) -> [ScalarField; 4] {
    let g = grads[0].grid;
    let mut out = [
        ScalarField::zeros(g),
        ScalarField::zeros(g),
        ScalarField::zeros(g),
        ScalarField::zeros(g),
    ];
    let tau = t / eps;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let (x, y) = g.center(i, j);
            let g1 = eta.sample_grad_periodic(0, x / eps, y / eps, tau);
            let g2 = eta.sample_grad_periodic(1, x / eps, y / eps, tau);
            let idx = j * g.nx + i;
            // component k = u: -(du/dx * grad eta_1 + du/dy * grad eta_2)
            out[0].data[idx] = -(grads[0].data[idx] * g1[0] + grads[1].data[idx] * g2[0]);
            out[1].data[idx] = -(grads[0].data[idx] * g1[1] + grads[1].data[idx] * g2[1]);
            // component k = v
            out[2].data[idx] = -(grads[2].data[idx] * g1[0] + grads[3].data[idx] * g2[0]);
            out[3].data[idx] = -(grads[2].data[idx] * g1[1] + grads[3].data[idx] * g2[1]);
        }
    }
    out
}

/// Corrector gradient built from the divergence-constrained cell solutions
/// `eta_{i,k}`: `G[k][j](x) = - sum_{i,m} du_m/dx_i (x)
/// d eta^k_{i,m} / d y_j (x/eps, t/eps)`. This is the corrector an
/// incompressible flow actually exhibits: the diagonal normal-stress
/// response lives in the cell pressure, not the velocity.
pub fn corrector_field_divfree(
    grads: &[ScalarField; 4],
    eta: &VectorCorrectorSet,
    eps: f64,
    t: f64,
) -> [ScalarField; 4] {
    let g = grads[0].grid;
    let mut out = [
        ScalarField::zeros(g),
        ScalarField::zeros(g),
        ScalarField::zeros(g),
        ScalarField::zeros(g),
    ];
    let tau = t / eps;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let (x, y) = g.center(i, j);
            let idx = j * g.nx + i;
            // du_m/dx_i in grads: m = 0 rows [0], [1]; m = 1 rows [2], [3]
            for (dir, comp, coeff) in [
                (0usize, 0usize, grads[0].data[idx]), // du1/dx1 * eta_{1,1}
                (1, 0, grads[1].data[idx]),           // du1/dx2 * eta_{2,1}
                (0, 1, grads[2].data[idx]),           // du2/dx1 * eta_{1,2}
                (1, 1, grads[3].data[idx]),           // du2/dx2 * eta_{2,2}
            ] {
                if coeff == 0.0 {
                    continue;
                }
                let gr = eta.sample_grad_periodic(dir, comp, x / eps, y / eps, tau);
                // gr = [d eta^1/dy1, d eta^1/dy2, d eta^2/dy1, d eta^2/dy2]
                out[0].data[idx] -= coeff * gr[0];
                out[1].data[idx] -= coeff * gr[1];
                out[2].data[idx] -= coeff * gr[2];
                out[3].data[idx] -= coeff * gr[3];
            }
        }
    }
    out
}

/// `grad_y ubar` evaluated compatibly with the flow-grid stencils: for each
/// cell pair (i, m) the fast field `eps eta_{i,m}(x/eps, t/eps)` is sampled
/// on the staggered faces and differenced with the same center-gradient
/// stencils applied to the velocities, then weighted pointwise by the slow
/// factors `-du_m/dx_i`. The fast oscillation thus carries the identical
/// discrete attenuation as `grad u_eps`, which keeps the comparison
/// consistent at finite `h/eps`.
pub fn corrector_gradient_consistent(
    grads: &[ScalarField; 4],
    eta: &VectorCorrectorSet,
    eps: f64,
    t: f64,
) -> [ScalarField; 4] {
    let g = grads[0].grid;
    let mut out = [
        ScalarField::zeros(g),
        ScalarField::zeros(g),
        ScalarField::zeros(g),
        ScalarField::zeros(g),
    ];
    let tau = t / eps;
    for (dir, comp, slow) in [
        (0usize, 0usize, &grads[0]), // du1/dx1 pairs with eta_{1,1}
        (1, 0, &grads[1]),           // du1/dx2 pairs with eta_{2,1}
        (0, 1, &grads[2]),           // du2/dx1 pairs with eta_{1,2}
        (1, 1, &grads[3]),           // du2/dx2 pairs with eta_{2,2}
    ] {
        let peak = eta.eta[dir][comp]
            .iter()
            .fold(0.0f64, |m, v| m.max(v[0].abs()).max(v[1].abs()));
        if peak < 1e-13 {
            continue;
        }
        // fast staggered field eps * eta(x/eps)
        let mut fast = StaggeredVelocity::zeros(g);
        for j in 0..g.ny {
            for i in 0..=g.nx {
                let (x, y) = g.u_face(i, j);
                fast.u[j * (g.nx + 1) + i] =
                    eps * eta.sample_value_periodic(dir, comp, x / eps, y / eps, tau)[0];
            }
        }
        for j in 0..=g.ny {
            for i in 0..g.nx {
                let (x, y) = g.v_face(i, j);
                fast.v[j * g.nx + i] =
                    eps * eta.sample_value_periodic(dir, comp, x / eps, y / eps, tau)[1];
            }
        }
        let fast_grad = gradient_at_centers_freeslip(&fast);
        for l in 0..4 {
            for (o, (c, f)) in out[l]
                .data
                .iter_mut()
                .zip(slow.data.iter().zip(&fast_grad[l].data))
            {
                *o -= c * f;
            }
        }
    }
    out
}

// ---- rate fitting -----------------------------------------------------------

/// Least-squares slope of `log err` against `log eps` with its R^2.
pub fn fit_rate(eps: &[f64], errors: &[f64]) -> Result<(f64, f64)> {
    if eps.len() != errors.len() || eps.len() < 3 {
        return Err(Error::DegenerateInput {
            reason: format!("{} ladder points", errors.len().min(eps.len())),
        });
    }
    if errors.iter().any(|&e| !(e > 0.0)) || eps.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::DegenerateInput {
            reason: "nonpositive error or eps".into(),
        });
    }
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((slope, r2))
}

// ---- ladder experiment ------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    /// strictly decreasing scale parameters
    pub eps_ladder: Vec<f64>,
    pub n_samples: usize,
    /// template configuration; its coefficient/force slots are overridden
    pub base: SolverConfig,
    pub cell: Arc<CellCoefficient>,
    pub coeff_time_dependent: bool,
    pub tensor: EffectiveTensor,
    /// scalar correctors (effective-tensor side, kept for reference output)
    pub correctors: Arc<CorrectorSet>,
    /// divergence-constrained correctors driving the gradient metric
    pub correctors_divfree: Arc<VectorCorrectorSet>,
    /// oscillating force; `None` runs force-free
    pub force: Option<OscillatingForce>,
    pub rho0: DensityField,
    pub u0: StaggeredVelocity,
    pub master_seed: u64,
    /// worker threads (1 = serial)
    pub jobs: usize,
    pub rho_test: SeparableTest,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.eps_ladder.is_empty() {
            return Err(Error::PlanInfeasible {
                reason: "empty epsilon ladder".into(),
            });
        }
        for w in self.eps_ladder.windows(2) {
            if w[1] >= w[0] {
                return Err(Error::PlanInfeasible {
                    reason: format!("ladder not strictly decreasing: {} -> {}", w[0], w[1]),
                });
            }
        }
        for &eps in &self.eps_ladder {
            let cfg = self.config_for(Some(eps));
            cfg.validate().map_err(|e| Error::PlanInfeasible {
                reason: format!("eps = {eps}: {e}"),
            })?;
        }
        if self.n_samples == 0 {
            return Err(Error::PlanInfeasible {
                reason: "need at least one sample".into(),
            });
        }
        Ok(())
    }

    /// Solver configuration for one run; `None` selects the homogenized side.
    fn config_for(&self, eps: Option<f64>) -> SolverConfig {
        let mut cfg = self.base.clone();
        match eps {
            Some(e) => {
                cfg.coefficient = CoefficientSource::Oscillating {
                    cell: self.cell.clone(),
                    eps: e,
                    time_dependent: self.coeff_time_dependent,
                };
                cfg.force = match &self.force {
                    Some(f) => ForceSource::Oscillating {
                        force: f.clone(),
                        eps: e,
                    },
                    None => ForceSource::NoForce,
                };
            }
            None => {
                cfg.coefficient = CoefficientSource::Homogenized { tensor: self.tensor };
                cfg.force = match &self.force {
                    Some(f) => ForceSource::Averaged {
                        fbar: f.analytic_average(),
                    },
                    None => ForceSource::NoForce,
                };
            }
        }
        cfg
    }

    fn spec_for_sample(&self, sample: usize) -> Option<NoiseSpec> {
        self.base.noise.as_ref().map(|spec| {
            let mut s = spec.clone();
            // counter-keyed per-sample seed
            s.seed = spec
                .seed
                .wrapping_add((sample as u64).wrapping_mul(0x9e3779b97f4a7c15))
                ^ self.master_seed;
            s
        })
    }
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricStats {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MetricStats {
    pub fn from_samples(v: &[f64]) -> Self {
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        MetricStats { mean, stderr, n }
    }
}

#[derive(Debug, Clone)]
pub struct LadderRow {
    pub eps: f64,
    pub err_strong: MetricStats,
    pub err_corrector: MetricStats,
    pub err_plain: MetricStats,
    /// |pairing(rho_eps) - limit pairing| for the configured test function
    pub rho_pairing_gap: MetricStats,
    /// same for the x-momentum
    pub momentum_pairing_gap: MetricStats,
    pub path_hashes: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub rows: Vec<LadderRow>,
    pub n_samples: usize,
    /// per-sample hash of the shared master path (0 when noise is off)
    pub master_hashes: Vec<u64>,
    /// every run of a sample consumed the same master path
    pub paths_shared: bool,
    /// (metric, slope, r2) fitted when the ladder has >= 3 points
    pub slopes: Vec<(String, f64, f64)>,
    /// per-(eps, sample) metrics backing the table, index-ordered
    pub raw: Vec<RawSample>,
}

impl ConvergenceReport {
    /// Reduces raw per-sample metrics into the report tables; `report`
    /// re-rendering and `run_ladder` share this path, so both emit
    /// identical tables for the same raw data.
    pub fn from_raw(eps_ladder: &[f64], n_samples: usize, raw: Vec<RawSample>) -> ConvergenceReport {
        let n_eps = eps_ladder.len();
        assert_eq!(raw.len(), n_eps * n_samples);
        let mut rows = Vec::with_capacity(n_eps);
        for (e, &eps) in eps_ladder.iter().enumerate() {
            let ms: Vec<&RawSample> = raw[e * n_samples..(e + 1) * n_samples].iter().collect();
            let pick = |f: fn(&RawSample) -> f64| -> MetricStats {
                MetricStats::from_samples(&ms.iter().map(|m| f(m)).collect::<Vec<_>>())
            };
            rows.push(LadderRow {
                eps,
                err_strong: pick(|m| m.err_strong),
                err_corrector: pick(|m| m.err_corrector),
                err_plain: pick(|m| m.err_plain),
                rho_pairing_gap: pick(|m| m.rho_gap),
                momentum_pairing_gap: pick(|m| m.momentum_gap),
                path_hashes: ms.iter().map(|m| m.path_hash).collect(),
            });
        }
        let master_hashes: Vec<u64> = (0..n_samples).map(|s| rows[0].path_hashes[s]).collect();
        let paths_shared = rows.iter().all(|r| r.path_hashes == master_hashes);
        let mut slopes = Vec::new();
        if n_eps >= 3 {
            for (name, vals) in [
                (
                    "err_strong",
                    rows.iter().map(|r| r.err_strong.mean).collect::<Vec<_>>(),
                ),
                (
                    "err_corrector",
                    rows.iter().map(|r| r.err_corrector.mean).collect::<Vec<_>>(),
                ),
            ] {
                if let Ok((slope, r2)) = fit_rate(eps_ladder, &vals) {
                    slopes.push((name.to_string(), slope, r2));
                }
            }
        }
        ConvergenceReport {
            rows,
            n_samples,
            master_hashes,
            paths_shared,
            slopes,
            raw,
        }
    }

    pub fn raw_csv(&self) -> String {
        let mut s = String::from(
            "epsilon,sample,err_strong,err_corrector,err_plain,rho_pairing_gap,momentum_pairing_gap,path_hash\n",
        );
        for r in &self.raw {
            s.push_str(&format!(
                "{:e},{},{:e},{:e},{:e},{:e},{:e},{}\n",
                r.eps, r.sample, r.err_strong, r.err_corrector, r.err_plain, r.rho_gap,
                r.momentum_gap, r.path_hash
            ));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,metric,mean,stderr,n_samples\n");
        for row in &self.rows {
            for (name, st) in [
                ("err_strong", row.err_strong),
                ("err_corrector", row.err_corrector),
                ("err_plain", row.err_plain),
                ("rho_pairing_gap", row.rho_pairing_gap),
                ("momentum_pairing_gap", row.momentum_pairing_gap),
            ] {
                s.push_str(&format!(
                    "{:e},{},{:e},{:e},{}\n",
                    row.eps, name, st.mean, st.stderr, st.n
                ));
            }
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "samples per run: {}; shared-path discipline: {}\n",
            self.n_samples,
            if self.paths_shared { "ok" } else { "VIOLATED" }
        ));
        for (name, slope, r2) in &self.slopes {
            s.push_str(&format!("slope[{name}] = {slope:.3} (R^2 = {r2:.4})\n"));
        }
        s
    }
}

/// Metrics of one paired (oscillating, homogenized) trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RawSample {
    pub eps: f64,
    pub sample: usize,
    pub err_strong: f64,
    pub err_corrector: f64,
    pub err_plain: f64,
    pub rho_gap: f64,
    pub momentum_gap: f64,
    pub path_hash: u64,
}

#[derive(Default)]
struct PairAccumulator {
    err_strong: f64,
    err_corrector: f64,
    err_plain: f64,
    rho_pair_osc: f64,
    rho_pair_lim: f64,
    mom_pair_osc: f64,
    mom_pair_lim: f64,
}

fn momentum_x_at_centers(m: &StaggeredVelocity) -> ScalarField {
    let g = m.grid;
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            out.data[j * g.nx + i] = 0.5 * (m.u_at(i, j) + m.u_at(i + 1, j));
        }
    }
    out
}

fn measure_pair(
    acc: &mut PairAccumulator,
    plan: &ExperimentPlan,
    osc: &Solver,
    hom: &Solver,
    eps: f64,
    weight: f64,
) {
    let su = osc.state();
    let sh = hom.state();
    let t = su.t;
    let dt = plan.base.dt;
    let g = plan.base.grid;
    let vol = g.cell_volume();

    let mut du = su.u.clone();
    du.axpy(-1.0, &sh.u);
    let d = du.norm_l2();
    acc.err_strong += weight * dt * d * d;

    let go = gradient_at_centers(&su.u);
    let gh = gradient_at_centers(&sh.u);
    let corr = corrector_gradient_consistent(&gh, &plan.correctors_divfree, eps, t);
    let mut e_corr = 0.0;
    let mut e_plain = 0.0;
    for c in 0..4 {
        for (idx, (a, b)) in go[c].data.iter().zip(&gh[c].data).enumerate() {
            let plain = a - b;
            let with_corr = plain - corr[c].data[idx];
            e_plain += plain * plain;
            e_corr += with_corr * with_corr;
        }
    }
    acc.err_corrector += weight * dt * e_corr * vol;
    acc.err_plain += weight * dt * e_plain * vol;

    let psi = plan.rho_test;
    let mut p_osc = 0.0;
    let mut p_lim = 0.0;
    let mo = momentum_x_at_centers(&su.momentum);
    let mh = momentum_x_at_centers(&sh.momentum);
    let mut q_osc = 0.0;
    let mut q_lim = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let (x, y) = g.center(i, j);
            let slow = psi.slow.eval(x, y);
            let fast = psi.fast.eval(x / eps, y / eps, t / eps);
            p_osc += su.rho.field.at(i, j) * slow * fast;
            p_lim += sh.rho.field.at(i, j) * slow;
            q_osc += mo.at(i, j) * slow * fast;
            q_lim += mh.at(i, j) * slow;
        }
    }
    acc.rho_pair_osc += weight * dt * p_osc * vol;
    acc.rho_pair_lim += weight * dt * p_lim * vol * psi.fast.cell_mean();
    acc.mom_pair_osc += weight * dt * q_osc * vol;
    acc.mom_pair_lim += weight * dt * q_lim * vol * psi.fast.cell_mean();
}

/// Advances the eps-run and the homogenized run under the same increments and
/// accumulates all ladder metrics by uniform trapezoid in time.
fn paired_run(plan: &ExperimentPlan, eps: f64, sample: usize) -> Result<RawSample> {
    let spec = plan.spec_for_sample(sample);
    let n_steps = plan.base.n_steps;
    let path = spec.as_ref().map(|s| sample_path(s, n_steps, plan.base.dt));

    let mut cfg_osc = plan.config_for(Some(eps));
    let mut cfg_hom = plan.config_for(None);
    cfg_osc.noise = spec.clone();
    cfg_hom.noise = spec;

    let mut osc = Solver::new(cfg_osc, plan.rho0.clone(), plan.u0.clone())?;
    let mut hom = Solver::new(cfg_hom, plan.rho0.clone(), plan.u0.clone())?;

    let mut acc = PairAccumulator::default();
    measure_pair(&mut acc, plan, &osc, &hom, eps, 0.5);
    for n in 0..n_steps {
        let dw = path.as_ref().map(|p| p.step(n));
        osc.advance(dw)?;
        hom.advance(dw)?;
        let w = if n + 1 == n_steps { 0.5 } else { 1.0 };
        measure_pair(&mut acc, plan, &osc, &hom, eps, w);
    }
    Ok(RawSample {
        eps,
        sample,
        err_strong: acc.err_strong,
        err_corrector: acc.err_corrector,
        err_plain: acc.err_plain,
        rho_gap: (acc.rho_pair_osc - acc.rho_pair_lim).abs(),
        momentum_gap: (acc.mom_pair_osc - acc.mom_pair_lim).abs(),
        path_hash: path.as_ref().map(|p| p.hash()).unwrap_or(0),
    })
}

/// Runs every (eps, sample) pair and reduces in index order.
pub fn run_ladder(plan: &ExperimentPlan) -> Result<ConvergenceReport> {
    plan.validate()?;
    let n_eps = plan.eps_ladder.len();
    let n_samples = plan.n_samples;
    let tasks: Vec<(usize, usize)> = (0..n_eps)
        .flat_map(|e| (0..n_samples).map(move |s| (e, s)))
        .collect();

    let results: Vec<Result<RawSample>> = if plan.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(plan.jobs)
            .build()
            .expect("thread pool");
        pool.install(|| {
            tasks
                .par_iter()
                .map(|&(e, s)| paired_run(plan, plan.eps_ladder[e], s))
                .collect()
        })
    } else {
        tasks
            .iter()
            .map(|&(e, s)| paired_run(plan, plan.eps_ladder[e], s))
            .collect()
    };
    let mut raw = Vec::with_capacity(tasks.len());
    for r in results {
        raw.push(r?);
    }
    Ok(ConvergenceReport::from_raw(
        &plan.eps_ladder,
        n_samples,
        raw,
    ))
}
