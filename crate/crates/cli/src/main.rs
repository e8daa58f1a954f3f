//! Experiment driver: `cell`, `run`, `converge`, `report`.
//!
//! Every command reads one INI configuration, prints the fully resolved
//! configuration for audit, and writes its outputs under a run directory
//! stamped by the configuration hash and seed, together with a manifest.
//! Exit codes: 0 success, 1 runtime/solver failure, 2 invalid configuration
//! or usage.

use oscilab::cell::{homogenize, mean_matrices, oscc, solve_divfree_correctors};
use oscilab::config::ExperimentConfig;
use oscilab::convergence::{run_ladder, ConvergenceReport, ExperimentPlan, RawSample};
use oscilab::error::{Error, Result};
use oscilab::mac_grid::snapshot::{self, Record, Role};
use oscilab::solver::{run, CoefficientSource, RunResult};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn usage() -> ! {
    eprintln!(
        "usage: oscilab <command> <config.ini> [options]\n\
         \n\
         commands:\n\
         \x20 cell <config>                       solve the cell problem, write the effective tensor\n\
         \x20 run <config> --eps <v>|--homogenized [--seed N]\n\
         \x20                                      advance one system, write trajectory + energy\n\
         \x20 converge <config> [--jobs N] [--seed N]\n\
         \x20                                      run the epsilon ladder, write convergence report\n\
         \x20 report <run-dir>                     re-render tables from stored raw metrics\n\
         \n\
         The default output root is ./out, overridden by OSCILAB_OUT or [output] dir."
    );
    std::process::exit(2);
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 2 {
        usage();
    }
    let cmd = args[0].as_str();
    let result = match cmd {
        "cell" => cmd_cell(&args[1..]),
        "run" => cmd_run(&args[1..]),
        "converge" => cmd_converge(&args[1..]),
        "report" => cmd_report(&args[1..]),
        _ => usage(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(path: &str) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_text(path, &text)
}

/// Run directory named by config hash and seed; contents are deterministic
/// for a fixed (config, seed).
fn run_dir(cfg: &ExperimentConfig, command: &str, seed: u64) -> Result<PathBuf> {
    let dir = Path::new(&cfg.out_dir).join(format!("{command}-{:016x}-s{seed}", cfg.hash()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_manifest(dir: &Path, cfg: &ExperimentConfig, seed: u64) -> Result<()> {
    let manifest = format!(
        "config_hash = {:016x}\nseed = {}\nversion = {}\n",
        cfg.hash(),
        seed,
        VERSION
    );
    std::fs::write(dir.join("manifest.txt"), manifest)?;
    std::fs::write(dir.join("resolved.ini"), cfg.resolved_text())?;
    Ok(())
}

fn matrix_row(m: &[[f64; 2]; 2]) -> String {
    format!("{:e},{:e},{:e}", m[0][0], m[0][1], m[1][1])
}

fn cmd_cell(args: &[String]) -> Result<()> {
    let cfg = load_config(&args[0])?;
    print!("{}", cfg.resolved_text());
    let dir = run_dir(&cfg, "cell", cfg.seed)?;

    let (mut cell, _) = cfg.load_coefficient()?;
    let (eta, bar) = homogenize(&mut cell, cfg.cell_rtol, 20_000)?;
    if cell.kappa + 1e-12 < cfg.declared_kappa {
        return Err(Error::Config {
            path: args[0].clone(),
            line: cfg.kappa_line,
            message: format!(
                "declared kappa = {} exceeds the computed ellipticity {:.6e}",
                cfg.declared_kappa, cell.kappa
            ),
        });
    }
    let (harm, arith) = mean_matrices(&cell);

    let mut table = String::from("quantity,a11,a12,a22\n");
    table.push_str(&format!("a_bar,{}\n", matrix_row(&bar.a_bar)));
    table.push_str(&format!("harmonic_mean,{}\n", matrix_row(&harm)));
    table.push_str(&format!("arithmetic_mean,{}\n", matrix_row(&arith)));
    table.push_str(&format!("kappa_eff,{:e},,\n", bar.kappa_eff));
    table.push_str(&format!("kappa_samples,{:e},,\n", cell.kappa));
    std::fs::write(dir.join("effective_tensor.csv"), &table)?;

    let mut res = String::from("direction,slice,residual\n");
    for dir_i in 0..2 {
        for (s, r) in eta.residual_norm[dir_i].iter().enumerate() {
            res.push_str(&format!("{dir_i},{s},{r:e}\n"));
        }
    }
    std::fs::write(dir.join("corrector_residuals.csv"), &res)?;

    // corrector snapshots: one record per direction and slice
    let mut f = std::fs::File::create(dir.join("correctors.oscf"))?;
    let n = cell.n;
    for dir_i in 0..2 {
        for s in 0..cell.n_tau {
            let rec = Record {
                role: Role::Generic,
                nx: n as u32,
                ny: n as u32,
                time: s as f64 / cell.n_tau as f64,
                data: eta.eta[dir_i][s * n * n..(s + 1) * n * n].to_vec(),
            };
            snapshot::write_record(&mut f, &rec)?;
        }
    }
    let mut cf = std::fs::File::create(dir.join("coefficient.oscc"))?;
    oscc::write_coefficient(&mut cf, &cell)?;
    write_manifest(&dir, &cfg, cfg.seed)?;

    println!("a_bar = [[{:.6e}, {:.6e}], [.., {:.6e}]]", bar.a_bar[0][0], bar.a_bar[0][1], bar.a_bar[1][1]);
    println!("kappa_eff = {:.6e}", bar.kappa_eff);
    println!("wrote {}", dir.display());
    Ok(())
}

fn parse_flag(args: &[String], name: &str) -> Option<String> {
    args.iter()
        .position(|a| a == name)
        .and_then(|i| args.get(i + 1).cloned())
}

fn cmd_run(args: &[String]) -> Result<()> {
    let mut cfg = load_config(&args[0])?;
    let homogenized = args.iter().any(|a| a == "--homogenized");
    let eps = parse_flag(args, "--eps")
        .map(|v| parse_eps(&v))
        .transpose()?;
    if homogenized == eps.is_some() {
        eprintln!("run needs exactly one of --eps <v> or --homogenized");
        std::process::exit(2);
    }
    if let Some(seed) = parse_flag(args, "--seed") {
        cfg.seed = seed.parse().map_err(|_| Error::Config {
            path: "--seed".into(),
            line: 0,
            message: format!("cannot parse seed `{seed}`"),
        })?;
    }
    print!("{}", cfg.resolved_text());
    let dir = run_dir(&cfg, "run", cfg.seed)?;

    let (mut cell, time_dep) = cfg.load_coefficient()?;
    let (_, tensor) = homogenize(&mut cell, cfg.cell_rtol, 20_000)?;
    let source = match eps {
        Some(e) => cfg.oscillating_source(Arc::new(cell), e, time_dep),
        None => CoefficientSource::Homogenized { tensor },
    };
    let mut solver_cfg = cfg.solver_config(source);
    solver_cfg.force = cfg.force_source(eps);
    if solver_cfg.snapshot_stride == 0 {
        solver_cfg.snapshot_stride = (cfg.n_steps / 10).max(1);
    }

    let rho0 = cfg.initial_density()?;
    let u0 = cfg.initial_velocity()?;
    let path = cfg
        .noise_spec()
        .map(|spec| oscilab::noise::sample_path(&spec, cfg.n_steps, cfg.dt));
    let out: RunResult = run(solver_cfg, rho0, u0, path.as_ref())?;

    let mut traj = std::fs::File::create(dir.join("trajectory.oscf"))?;
    for snap in &out.snapshots {
        let st = &snap.state;
        snapshot::write_record(&mut traj, &snapshot::scalar_record(&st.rho.field, Role::Density, st.t))?;
        snapshot::write_velocity(&mut traj, &st.u, st.t)?;
        snapshot::write_record(&mut traj, &snapshot::scalar_record(&st.pi, Role::Pressure, st.t))?;
    }
    std::fs::write(dir.join("energy.csv"), out.energy.to_csv())?;
    if let Some(p) = &path {
        let mut pf = std::fs::File::create(dir.join("path.oscw"))?;
        oscilab::noise::write_path(&mut pf, p)?;
    }
    write_manifest(&dir, &cfg, cfg.seed)?;
    println!(
        "final kinetic energy {:.6e}; wrote {}",
        out.final_state.kinetic_energy(),
        dir.display()
    );
    Ok(())
}

fn parse_eps(v: &str) -> Result<f64> {
    let parse = |s: &str| s.trim().parse::<f64>().ok();
    let val = if let Some((a, b)) = v.split_once('/') {
        match (parse(a), parse(b)) {
            (Some(x), Some(y)) if y != 0.0 => Some(x / y),
            _ => None,
        }
    } else {
        parse(v)
    };
    val.filter(|e| *e > 0.0 && *e <= 1.0).ok_or(Error::Config {
        path: "--eps".into(),
        line: 0,
        message: format!("cannot parse eps `{v}` (expect a value in (0, 1])"),
    })
}

fn cmd_converge(args: &[String]) -> Result<()> {
    let mut cfg = load_config(&args[0])?;
    if let Some(seed) = parse_flag(args, "--seed") {
        cfg.seed = seed.parse().map_err(|_| Error::Config {
            path: "--seed".into(),
            line: 0,
            message: format!("cannot parse seed `{seed}`"),
        })?;
    }
    if let Some(jobs) = parse_flag(args, "--jobs") {
        cfg.jobs = jobs.parse().map_err(|_| Error::Config {
            path: "--jobs".into(),
            line: 0,
            message: format!("cannot parse jobs `{jobs}`"),
        })?;
    }
    print!("{}", cfg.resolved_text());
    if cfg.eps_ladder.len() < 3 {
        return Err(Error::DegenerateInput {
            reason: format!("{} ladder points (rate fit needs 3)", cfg.eps_ladder.len()),
        });
    }
    let dir = run_dir(&cfg, "converge", cfg.seed)?;

    let (mut cell, time_dep) = cfg.load_coefficient()?;
    let (eta, tensor) = homogenize(&mut cell, cfg.cell_rtol, 20_000)?;
    let eta_div = solve_divfree_correctors(&cell, cfg.cell_rtol, 20_000)?;
    let base = cfg.solver_config(CoefficientSource::Homogenized { tensor });
    let plan = ExperimentPlan {
        eps_ladder: cfg.eps_ladder.clone(),
        n_samples: if cfg.noise_enabled { cfg.n_samples } else { 1 },
        base,
        cell: Arc::new(cell),
        coeff_time_dependent: time_dep,
        tensor,
        correctors: Arc::new(eta),
        correctors_divfree: Arc::new(eta_div),
        force: cfg.force.clone(),
        rho0: cfg.initial_density()?,
        u0: cfg.initial_velocity()?,
        master_seed: cfg.seed,
        jobs: cfg.jobs,
        rho_test: cfg.separable_test(),
    };
    let report = run_ladder(&plan)?;

    std::fs::write(dir.join("report.csv"), report.to_csv())?;
    std::fs::write(dir.join("raw_metrics.csv"), report.raw_csv())?;
    std::fs::write(dir.join("summary.txt"), report.summary())?;
    write_manifest(&dir, &cfg, cfg.seed)?;
    print!("{}", report.summary());
    for row in &report.rows {
        println!(
            "eps {:>8.5}: err_strong {:.4e} (se {:.1e})  err_corrector {:.4e}  err_plain {:.4e}",
            row.eps,
            row.err_strong.mean,
            row.err_strong.stderr,
            row.err_corrector.mean,
            row.err_plain.mean
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_report(args: &[String]) -> Result<()> {
    let dir = PathBuf::from(&args[0]);
    let raw_text = std::fs::read_to_string(dir.join("raw_metrics.csv"))?;
    let mut raw = Vec::new();
    for (i, line) in raw_text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 8 {
            return Err(Error::Config {
                path: dir.join("raw_metrics.csv").display().to_string(),
                line: i + 1,
                message: format!("expected 8 columns, got {}", parts.len()),
            });
        }
        let f = |k: usize| -> Result<f64> {
            parts[k].parse().map_err(|_| Error::Config {
                path: "raw_metrics.csv".into(),
                line: i + 1,
                message: format!("bad number `{}`", parts[k]),
            })
        };
        raw.push(RawSample {
            eps: f(0)?,
            sample: parts[1].parse().unwrap_or(0),
            err_strong: f(2)?,
            err_corrector: f(3)?,
            err_plain: f(4)?,
            rho_gap: f(5)?,
            momentum_gap: f(6)?,
            path_hash: parts[7].trim().parse().unwrap_or(0),
        });
    }
    if raw.is_empty() {
        return Err(Error::Config {
            path: "raw_metrics.csv".into(),
            line: 1,
            message: "no raw metric rows".into(),
        });
    }
    let mut eps_ladder: Vec<f64> = Vec::new();
    for r in &raw {
        if !eps_ladder.contains(&r.eps) {
            eps_ladder.push(r.eps);
        }
    }
    let n_samples = raw.len() / eps_ladder.len();
    let report = ConvergenceReport::from_raw(&eps_ladder, n_samples, raw);
    std::fs::write(dir.join("report.csv"), report.to_csv())?;
    std::fs::write(dir.join("summary.txt"), report.summary())?;
    print!("{}", report.summary());
    print!("{}", report.to_csv());
    Ok(())
}
