//! Flat INI-style experiment configuration.
//!
//! Sections with typed `key = value` entries, `#` comments. Unknown keys and
//! malformed values are schema errors carrying the file path and line; all
//! declared constants must be positive and the initial density must respect
//! its declared bounds before any run starts.

use crate::cell::{CellCoefficient, CoefficientFamily, OscillatingForce, SaturationKind};
use crate::convergence::{FastFactor, SeparableTest, SlowFactor};
use crate::error::{Error, Result};
use crate::mac_grid::{AdvectionScheme, Grid2D, ScalarField, StaggeredVelocity};
use crate::noise::{GOperator, NoiseSpec};
use crate::solver::{eddy_velocity, CoefficientSource, ForceSource, SolverConfig};
use crate::transport::DensityField;
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
    used: std::cell::Cell<bool>,
}

/// Parsed key-value store with line tracking; `section.key` addressing.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    pub path: String,
    entries: BTreeMap<String, Entry>,
}

impl RawConfig {
    pub fn parse(path: &str, text: &str) -> Result<RawConfig> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(p) => &raw_line[..p],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_lowercase();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config {
                    path: path.into(),
                    line: line_no,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let full = if section.is_empty() {
                key.trim().to_lowercase()
            } else {
                format!("{section}.{}", key.trim().to_lowercase())
            };
            if entries
                .insert(
                    full.clone(),
                    Entry {
                        value: value.trim().to_string(),
                        line: line_no,
                        used: std::cell::Cell::new(false),
                    },
                )
                .is_some()
            {
                return Err(Error::Config {
                    path: path.into(),
                    line: line_no,
                    message: format!("duplicate key `{full}`"),
                });
            }
        }
        Ok(RawConfig {
            path: path.into(),
            entries,
        })
    }

    fn err(&self, line: usize, message: String) -> Error {
        Error::Config {
            path: self.path.clone(),
            line,
            message,
        }
    }

    fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key).inspect(|e| e.used.set(true))
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        match self.get(key) {
            Some(e) => Ok(&e.value),
            None => Err(self.err(0, format!("missing required key `{key}`"))),
        }
    }

    pub fn string(&self, key: &str, default: &str) -> String {
        self.get(key)
            .map(|e| e.value.clone())
            .unwrap_or_else(|| default.to_string())
    }

    /// f64 with fraction support (`1/4`).
    fn parse_f64(&self, key: &str, raw: &str, line: usize) -> Result<f64> {
        let parse_one = |s: &str| s.trim().parse::<f64>().ok();
        let v = if let Some((num, den)) = raw.split_once('/') {
            match (parse_one(num), parse_one(den)) {
                (Some(a), Some(b)) if b != 0.0 => Some(a / b),
                _ => None,
            }
        } else {
            parse_one(raw)
        };
        v.ok_or_else(|| self.err(line, format!("key `{key}`: cannot parse `{raw}` as a number")))
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            Some(e) => self.parse_f64(key, &e.value.clone(), e.line),
            None => Ok(default),
        }
    }

    pub fn f64_required(&self, key: &str) -> Result<f64> {
        match self.get(key) {
            Some(e) => self.parse_f64(key, &e.value.clone(), e.line),
            None => Err(self.err(0, format!("missing required key `{key}`"))),
        }
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            Some(e) => e.value.parse::<usize>().map_err(|_| {
                self.err(e.line, format!("key `{key}`: cannot parse `{}` as an integer", e.value))
            }),
            None => Ok(default),
        }
    }

    pub fn u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            Some(e) => e.value.parse::<u64>().map_err(|_| {
                self.err(e.line, format!("key `{key}`: cannot parse `{}` as an integer", e.value))
            }),
            None => Ok(default),
        }
    }

    pub fn bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            Some(e) => match e.value.to_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                other => Err(self.err(e.line, format!("key `{key}`: expected a boolean, got `{other}`"))),
            },
            None => Ok(default),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(e) => {
                let mut out = Vec::new();
                for part in e.value.split(',') {
                    out.push(self.parse_f64(key, part.trim(), e.line)?);
                }
                Ok(Some(out))
            }
        }
    }

    pub fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map(|e| e.line).unwrap_or(0)
    }

    /// Every key must belong to the schema; called after building.
    pub fn reject_unknown(&self) -> Result<()> {
        for (k, e) in &self.entries {
            if !e.used.get() {
                return Err(self.err(e.line, format!("unknown key `{k}`")));
            }
        }
        Ok(())
    }
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub grid: Grid2D,
    pub dt: f64,
    pub t_end: f64,
    pub n_steps: usize,

    pub coeff_family: CoefficientFamily,
    /// when set, samples are loaded from this OSCC file instead
    pub coeff_file: Option<String>,
    pub declared_kappa: f64,
    pub kappa_line: usize,
    pub cell_n: usize,
    pub cell_n_tau: usize,
    pub cell_rtol: f64,

    pub force: Option<OscillatingForce>,
    pub c1: f64,
    pub c2: f64,

    pub noise_enabled: bool,
    pub n_modes: usize,
    pub gamma: f64,
    pub lambda0: f64,
    pub seed: u64,
    pub g_kind: String,
    pub sigma: f64,

    pub rho_family: String,
    pub m_lo: f64,
    pub m_hi: f64,
    pub u_family: String,
    pub u_amp: f64,

    pub advection: Option<AdvectionScheme>,
    pub transport: AdvectionScheme,
    pub diffusion_rtol: f64,
    pub projection_rtol: f64,
    pub snapshot_stride: usize,

    pub eps_ladder: Vec<f64>,
    pub n_samples: usize,
    pub jobs: usize,
    pub test_slow: SlowFactor,
    pub test_fast: FastFactor,

    pub out_dir: String,
}

impl ExperimentConfig {
    pub fn from_text(path: &str, text: &str) -> Result<ExperimentConfig> {
        let raw = RawConfig::parse(path, text)?;
        let cfg = Self::build(&raw)?;
        raw.reject_unknown()?;
        cfg.validate(&raw)?;
        Ok(cfg)
    }

    fn build(raw: &RawConfig) -> Result<ExperimentConfig> {
        let nx = raw.usize("grid.nx", 128)?;
        let ny = raw.usize("grid.ny", nx)?;
        if nx < 8 || ny < 8 {
            return Err(raw.err(
                raw.line_of("grid.nx").max(raw.line_of("grid.ny")),
                format!("grid must be at least 8x8, got {nx}x{ny}"),
            ));
        }
        let grid = Grid2D::new(nx, ny);
        let dt = raw.f64("time.dt", 1e-3)?;
        let t_end = raw.f64("time.t_end", 0.25)?;
        let n_steps = raw.usize("time.n_steps", (t_end / dt).round().max(1.0) as usize)?;

        let fam_name = raw.string("coefficient.family", "");
        if fam_name.is_empty() {
            return Err(raw.err(0, "missing required key `coefficient.family`".into()));
        }
        let mut coeff_file = None;
        let coeff_family = match fam_name.as_str() {
            "file" => {
                coeff_file = Some(raw.require("coefficient.path")?.to_string());
                // placeholder; samples come from the file
                CoefficientFamily::Constant { a11: 1.0, a12: 0.0, a22: 1.0 }
            }
            "constant" => CoefficientFamily::Constant {
                a11: raw.f64("coefficient.a11", 1.0)?,
                a12: raw.f64("coefficient.a12", 0.0)?,
                a22: raw.f64("coefficient.a22", 1.0)?,
            },
            "layered" => CoefficientFamily::Layered {
                alpha: raw.f64("coefficient.alpha", 1.0)?,
                beta: raw.f64("coefficient.beta", 4.0)?,
            },
            "sinusoidal" => CoefficientFamily::Sinusoidal {
                base: raw.f64("coefficient.base", 2.0)?,
                amp: raw.f64("coefficient.amp", 1.0)?,
            },
            "checkerboard" => CoefficientFamily::Checkerboard {
                alpha: raw.f64("coefficient.alpha", 1.0)?,
                beta: raw.f64("coefficient.beta", 4.0)?,
            },
            "time_modulated" => CoefficientFamily::TimeModulated {
                base_y: raw.f64("coefficient.base_y", 2.0)?,
                amp_y: raw.f64("coefficient.amp_y", 1.0)?,
                base_t: raw.f64("coefficient.base_t", 2.0)?,
                amp_t: raw.f64("coefficient.amp_t", 0.5)?,
            },
            "time_only" => CoefficientFamily::TimeOnly {
                base: raw.f64("coefficient.base", 2.0)?,
                amp: raw.f64("coefficient.amp", 1.0)?,
            },
            other => {
                return Err(raw.err(
                    raw.line_of("coefficient.family"),
                    format!("unknown coefficient family `{other}`"),
                ))
            }
        };
        let declared_kappa = raw.f64_required("coefficient.kappa")?;
        let kappa_line = raw.line_of("coefficient.kappa");
        let cell_n = raw.usize("coefficient.n_y", 128)?;
        let default_n_tau = if coeff_family.is_time_dependent() { 32 } else { 2 };
        let cell_n_tau = raw.usize("coefficient.n_tau", default_n_tau)?;
        let cell_rtol = raw.f64("coefficient.rtol", 1e-10)?;

        let force = match raw.string("force.family", "zero").as_str() {
            "zero" => None,
            "constant" => Some(OscillatingForce::Constant {
                value: [raw.f64("force.f1", 0.0)?, raw.f64("force.f2", 0.0)?],
            }),
            "modulated_saturation" => Some(OscillatingForce::ModulatedSaturation {
                base: raw.f64("force.base", 1.0)?,
                amp: raw.f64("force.amp", 0.5)?,
                amp_t: raw.f64("force.amp_t", 0.0)?,
                sat: match raw.string("force.saturation", "tanh").as_str() {
                    "tanh" => SaturationKind::Tanh,
                    "rational" => SaturationKind::Rational,
                    "identity" => SaturationKind::Identity,
                    other => {
                        return Err(raw.err(
                            raw.line_of("force.saturation"),
                            format!("unknown saturation `{other}`"),
                        ))
                    }
                },
            }),
            "oscillation_only" => Some(OscillatingForce::OscillationOnly {
                amp: raw.f64("force.amp", 1.0)?,
            }),
            other => {
                return Err(raw.err(
                    raw.line_of("force.family"),
                    format!("unknown force family `{other}`"),
                ))
            }
        };
        let default_c1 = force.as_ref().map(|f| f.lipschitz()).unwrap_or(0.0);
        let default_c2 = force.as_ref().map(|f| f.growth()).unwrap_or(0.0);
        let c1 = raw.f64("force.c1", default_c1)?;
        let c2 = raw.f64("force.c2", default_c2)?;

        let noise_enabled = raw.bool("noise.enabled", false)?;
        let n_modes = raw.usize("noise.modes", 16)?;
        let gamma = raw.f64("noise.gamma", 1.5)?;
        let lambda0 = raw.f64("noise.lambda0", 0.01)?;
        let seed = raw.u64("noise.seed", 1)?;
        let g_kind = raw.string("noise.g", "multiplicative");
        let sigma = raw.f64("noise.sigma", 1.0)?;
        if !matches!(g_kind.as_str(), "multiplicative" | "additive" | "off") {
            return Err(raw.err(
                raw.line_of("noise.g"),
                format!("unknown g-operator `{g_kind}`"),
            ));
        }

        let rho_family = raw.string("initial.rho", "uniform");
        let m_lo = raw.f64("initial.m", 1.0)?;
        let m_hi = raw.f64("initial.big_m", 2.0)?;
        let u_family = raw.string("initial.u", "eddy");
        let u_amp = raw.f64("initial.amplitude", 1.0)?;

        let advection = match raw.string("solver.advection", "muscl").as_str() {
            "muscl" => Some(AdvectionScheme::MusclMinmod),
            "upwind" => Some(AdvectionScheme::Upwind),
            "off" => None,
            other => {
                return Err(raw.err(
                    raw.line_of("solver.advection"),
                    format!("unknown advection scheme `{other}`"),
                ))
            }
        };
        let transport = match raw.string("solver.transport", "upwind").as_str() {
            "muscl" => AdvectionScheme::MusclMinmod,
            "upwind" => AdvectionScheme::Upwind,
            other => {
                return Err(raw.err(
                    raw.line_of("solver.transport"),
                    format!("unknown transport scheme `{other}`"),
                ))
            }
        };
        let diffusion_rtol = raw.f64("solver.diffusion_rtol", 1e-10)?;
        let projection_rtol = raw.f64("solver.projection_rtol", 1e-12)?;
        let snapshot_stride = raw.usize("solver.snapshot_stride", 0)?;

        let eps_ladder = raw
            .f64_list("plan.eps")?
            .unwrap_or_else(|| vec![0.25, 0.125, 0.0625]);
        let n_samples = raw.usize("plan.samples", 1)?;
        let jobs = raw.usize("plan.jobs", 1)?;
        let test_slow = match raw.string("plan.test_slow", "bump").as_str() {
            "one" => SlowFactor::One,
            "x1" => SlowFactor::X1,
            "bump" => SlowFactor::Bump,
            other => {
                return Err(raw.err(
                    raw.line_of("plan.test_slow"),
                    format!("unknown slow factor `{other}`"),
                ))
            }
        };
        let test_fast = match raw.string("plan.test_fast", "sin_y1").as_str() {
            "one" => FastFactor::One,
            "sin_y1" => FastFactor::SinY1,
            other => {
                return Err(raw.err(
                    raw.line_of("plan.test_fast"),
                    format!("unknown fast factor `{other}`"),
                ))
            }
        };

        let out_dir = raw.string(
            "output.dir",
            &std::env::var("OSCILAB_OUT").unwrap_or_else(|_| "out".into()),
        );

        Ok(ExperimentConfig {
            grid,
            dt,
            t_end,
            n_steps,
            coeff_family,
            coeff_file,
            declared_kappa,
            kappa_line,
            cell_n,
            cell_n_tau,
            cell_rtol,
            force,
            c1,
            c2,
            noise_enabled,
            n_modes,
            gamma,
            lambda0,
            seed,
            g_kind,
            sigma,
            rho_family,
            m_lo,
            m_hi,
            u_family,
            u_amp,
            advection,
            transport,
            diffusion_rtol,
            projection_rtol,
            snapshot_stride,
            eps_ladder,
            n_samples,
            jobs,
            test_slow,
            test_fast,
            out_dir,
        })
    }

    fn validate(&self, raw: &RawConfig) -> Result<()> {
        let positive = [
            ("time.dt", self.dt),
            ("time.t_end", self.t_end),
            ("coefficient.kappa", self.declared_kappa),
            ("noise.gamma", self.gamma),
            ("noise.lambda0", self.lambda0),
            ("noise.sigma", self.sigma),
            ("initial.m", self.m_lo),
            ("initial.big_m", self.m_hi),
            ("coefficient.rtol", self.cell_rtol),
            ("solver.diffusion_rtol", self.diffusion_rtol),
            ("solver.projection_rtol", self.projection_rtol),
        ];
        for (key, v) in positive {
            if !(v > 0.0) {
                return Err(raw.err(raw.line_of(key), format!("`{key}` must be positive, got {v}")));
            }
        }
        if self.m_lo > self.m_hi {
            return Err(raw.err(
                raw.line_of("initial.m"),
                format!("need m <= M, got m = {}, M = {}", self.m_lo, self.m_hi),
            ));
        }
        if self.c1 < 0.0 || self.c2 < 0.0 {
            return Err(raw.err(raw.line_of("force.c1"), "force constants must be nonnegative".into()));
        }
        if let Some(f) = &self.force {
            if self.c1 + 1e-12 < f.lipschitz() {
                return Err(raw.err(
                    raw.line_of("force.c1"),
                    format!(
                        "declared c1 = {} is below the family's Lipschitz constant {}",
                        self.c1,
                        f.lipschitz()
                    ),
                ));
            }
        }
        if self.gamma <= 0.5 {
            return Err(raw.err(
                raw.line_of("noise.gamma"),
                format!("gamma must exceed 1/2 for a trace-class covariance, got {}", self.gamma),
            ));
        }
        Ok(())
    }

    /// Samples the coefficient on its cell grid, or loads it from the
    /// configured OSCC file. Returns the field together with its fast-time
    /// dependence (file-loaded fields count as time-dependent when they
    /// carry more than two tau-slices).
    pub fn load_coefficient(&self) -> Result<(CellCoefficient, bool)> {
        match &self.coeff_file {
            None => Ok((
                self.coeff_family.sample(self.cell_n, self.cell_n_tau),
                self.coeff_family.is_time_dependent(),
            )),
            Some(path) => {
                let mut f = std::fs::File::open(path)?;
                let c = crate::cell::oscc::read_coefficient(&mut f)?;
                let time_dep = c.n_tau > 2;
                Ok((c, time_dep))
            }
        }
    }

    pub fn initial_density(&self) -> Result<DensityField> {
        let (lo, hi) = (self.m_lo, self.m_hi);
        let field = match self.rho_family.as_str() {
            "uniform" => ScalarField::from_fn(self.grid, |_, _| 0.5 * (lo + hi)),
            "gradient" => ScalarField::from_fn(self.grid, |x, _| lo + (hi - lo) * x),
            "blob" => ScalarField::from_fn(self.grid, |x, y| {
                let r2 = (x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5);
                lo + (hi - lo) * (-r2 / 0.05).exp()
            }),
            other => {
                return Err(Error::Config {
                    path: String::new(),
                    line: 0,
                    message: format!("unknown initial density family `{other}`"),
                })
            }
        };
        DensityField::new(field, lo, hi)
    }

    pub fn initial_velocity(&self) -> Result<StaggeredVelocity> {
        match self.u_family.as_str() {
            "zero" => Ok(StaggeredVelocity::zeros(self.grid)),
            "eddy" => Ok(eddy_velocity(self.grid, self.u_amp)),
            other => Err(Error::Config {
                path: String::new(),
                line: 0,
                message: format!("unknown initial velocity family `{other}`"),
            }),
        }
    }

    pub fn noise_spec(&self) -> Option<NoiseSpec> {
        if !self.noise_enabled {
            return None;
        }
        Some(NoiseSpec::new(
            self.grid,
            self.n_modes,
            self.gamma,
            self.lambda0,
            self.seed,
        ))
    }

    pub fn g_operator(&self) -> GOperator {
        if !self.noise_enabled {
            return GOperator::Off;
        }
        match self.g_kind.as_str() {
            "additive" => GOperator::Additive,
            "off" => GOperator::Off,
            _ => GOperator::Multiplicative { sigma: self.sigma },
        }
    }

    /// Solver configuration for one run; the coefficient slot is filled by
    /// the caller (`eps` oscillating or homogenized tensor).
    pub fn solver_config(&self, coefficient: CoefficientSource) -> SolverConfig {
        let mut cfg = SolverConfig::new(self.grid, self.dt, self.n_steps, coefficient);
        cfg.advection = self.advection;
        cfg.transport = self.transport;
        cfg.diffusion_rtol = self.diffusion_rtol;
        cfg.projection_rtol = self.projection_rtol;
        cfg.snapshot_stride = self.snapshot_stride;
        cfg.noise = self.noise_spec();
        cfg.g = self.g_operator();
        cfg
    }

    pub fn force_source(&self, eps: Option<f64>) -> ForceSource {
        match (&self.force, eps) {
            (None, _) => ForceSource::NoForce,
            (Some(f), Some(e)) => ForceSource::Oscillating {
                force: f.clone(),
                eps: e,
            },
            (Some(f), None) => ForceSource::Averaged {
                fbar: f.analytic_average(),
            },
        }
    }

    pub fn oscillating_source(
        &self,
        cell: Arc<CellCoefficient>,
        eps: f64,
        time_dependent: bool,
    ) -> CoefficientSource {
        CoefficientSource::Oscillating {
            cell,
            eps,
            time_dependent,
        }
    }

    /// Audit print of the fully resolved configuration, defaults included.
    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        s.push_str("[grid]\n");
        s.push_str(&format!("nx = {}\nny = {}\n", self.grid.nx, self.grid.ny));
        s.push_str("\n[time]\n");
        s.push_str(&format!(
            "dt = {:e}\nt_end = {:e}\nn_steps = {}\n",
            self.dt, self.t_end, self.n_steps
        ));
        s.push_str("\n[coefficient]\n");
        match &self.coeff_file {
            Some(p) => s.push_str(&format!("family = file\npath = {p}\n")),
            None => s.push_str(&format!("family = {:?}\n", self.coeff_family)),
        }
        s.push_str(&format!(
            "kappa = {}\nn_y = {}\nn_tau = {}\nrtol = {:e}\n",
            self.declared_kappa, self.cell_n, self.cell_n_tau, self.cell_rtol
        ));
        s.push_str("\n[force]\n");
        s.push_str(&format!(
            "family = {:?}\nc1 = {}\nc2 = {}\n",
            self.force, self.c1, self.c2
        ));
        s.push_str("\n[noise]\n");
        s.push_str(&format!(
            "enabled = {}\nmodes = {}\ngamma = {}\nlambda0 = {}\nseed = {}\ng = {}\nsigma = {}\n",
            self.noise_enabled, self.n_modes, self.gamma, self.lambda0, self.seed, self.g_kind, self.sigma
        ));
        s.push_str("\n[initial]\n");
        s.push_str(&format!(
            "rho = {}\nm = {}\nbig_m = {}\nu = {}\namplitude = {}\n",
            self.rho_family, self.m_lo, self.m_hi, self.u_family, self.u_amp
        ));
        s.push_str("\n[solver]\n");
        s.push_str(&format!(
            "advection = {:?}\ntransport = {:?}\ndiffusion_rtol = {:e}\nprojection_rtol = {:e}\nsnapshot_stride = {}\n",
            self.advection, self.transport, self.diffusion_rtol, self.projection_rtol, self.snapshot_stride
        ));
        s.push_str("\n[plan]\n");
        s.push_str(&format!(
            "eps = {:?}\nsamples = {}\njobs = {}\ntest_slow = {:?}\ntest_fast = {:?}\n",
            self.eps_ladder, self.n_samples, self.jobs, self.test_slow, self.test_fast
        ));
        s.push_str("\n[output]\n");
        s.push_str(&format!("dir = {}\n", self.out_dir));
        s
    }

    /// FNV hash of the resolved text; names run directories and the manifest.
    pub fn hash(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        for b in self.resolved_text().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    pub fn separable_test(&self) -> SeparableTest {
        SeparableTest {
            slow: self.test_slow,
            fast: self.test_fast,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "
[grid]
nx = 32
ny = 32

[time]
dt = 1e-3
t_end = 0.02

[coefficient]
family = layered
alpha = 1.0
beta = 4.0
kappa = 1.0
n_y = 32
n_tau = 2

[force]
family = zero

[noise]
enabled = true
modes = 4
seed = 7

[initial]
rho = gradient
m = 1.0
big_m = 2.0

[plan]
eps = 1/4, 1/8
samples = 2
";

    #[test]
    fn parses_complete_config() {
        let cfg = ExperimentConfig::from_text("test.ini", GOOD).unwrap();
        assert_eq!(cfg.grid.nx, 32);
        assert_eq!(cfg.n_steps, 20);
        assert_eq!(cfg.eps_ladder, vec![0.25, 0.125]);
        assert!(matches!(cfg.coeff_family, CoefficientFamily::Layered { .. }));
        assert!(cfg.noise_enabled);
        assert_eq!(cfg.seed, 7);
        // defaults resolved
        assert_eq!(cfg.n_modes, 4);
        assert_eq!(cfg.gamma, 1.5);
        let text = cfg.resolved_text();
        assert!(text.contains("gamma = 1.5"));
    }

    #[test]
    fn missing_kappa_names_the_key() {
        let text = GOOD.replace("kappa = 1.0", "");
        let err = ExperimentConfig::from_text("test.ini", &text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("coefficient.kappa"), "{msg}");
    }

    #[test]
    fn unknown_key_is_line_precise() {
        let text = format!("{GOOD}\n[plan]\nbogus_key = 3\n");
        let err = ExperimentConfig::from_text("test.ini", &text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus_key"), "{msg}");
        assert!(msg.contains("test.ini:"), "{msg}");
    }

    #[test]
    fn bad_number_is_rejected_with_line() {
        let text = GOOD.replace("dt = 1e-3", "dt = fast");
        let err = ExperimentConfig::from_text("t.ini", &text).unwrap_err();
        assert!(err.to_string().contains("cannot parse"));
        assert!(matches!(err, Error::Config { line, .. } if line > 0));
    }

    #[test]
    fn nonpositive_constants_rejected() {
        let text = GOOD.replace("kappa = 1.0", "kappa = -2.0");
        let err = ExperimentConfig::from_text("t.ini", &text).unwrap_err();
        assert!(err.to_string().contains("positive"));
    }

    #[test]
    fn density_respects_declared_bounds() {
        let cfg = ExperimentConfig::from_text("t.ini", GOOD).unwrap();
        let rho = cfg.initial_density().unwrap();
        let (lo, hi) = rho.min_max();
        assert!(lo >= 1.0 && hi <= 2.0);
    }

    #[test]
    fn duplicate_key_rejected() {
        let text = format!("{GOOD}\n[grid]\nnx = 64\n");
        assert!(ExperimentConfig::from_text("t.ini", &text).is_err());
    }

    #[test]
    fn file_backed_coefficient_roundtrips() {
        let dir = std::env::temp_dir().join(format!("oscilab-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("field.oscc");
        let c = CoefficientFamily::Layered { alpha: 1.0, beta: 4.0 }.sample(16, 2);
        let mut f = std::fs::File::create(&path).unwrap();
        crate::cell::oscc::write_coefficient(&mut f, &c).unwrap();
        let text = GOOD.replace(
            "family = layered\nalpha = 1.0\nbeta = 4.0\n",
            &format!("family = file\npath = {}\n", path.display()),
        );
        let cfg = ExperimentConfig::from_text("t.ini", &text).unwrap();
        let (loaded, time_dep) = cfg.load_coefficient().unwrap();
        assert_eq!(loaded.n, 16);
        assert!(!time_dep);
        assert_eq!(loaded.samples[0][0], c.samples[0][0]);
        assert!(cfg.resolved_text().contains("family = file"));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::from_text("t.ini", GOOD).unwrap();
        let b = ExperimentConfig::from_text("t.ini", GOOD).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c =
            ExperimentConfig::from_text("t.ini", &GOOD.replace("seed = 7", "seed = 8")).unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
