//! Property tests for the scheme invariants that must hold for *any*
//! admissible input, not just the curated benchmarks.

use oscilab::mac_grid::{divergence, AdvectionScheme, Grid2D, PoissonSolver, ScalarField, StaggeredVelocity};
use oscilab::noise::{coarsen_path, sample_path, NoiseSpec};
use oscilab::transport::{advance_density, courant_numbers, DensityField, CFL_LIMIT};
use proptest::prelude::*;

fn hashed_unit(seed: u64, k: u64) -> f64 {
    let mut z = seed ^ k.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    (z ^ (z >> 31)) as f64 / u64::MAX as f64
}

fn random_divfree(g: Grid2D, seed: u64) -> StaggeredVelocity {
    let mut psi = vec![0.0; (g.nx + 1) * (g.ny + 1)];
    for j in 1..g.ny {
        for i in 1..g.nx {
            psi[j * (g.nx + 1) + i] = hashed_unit(seed, (j * (g.nx + 1) + i) as u64) - 0.5;
        }
    }
    StaggeredVelocity::from_stream(g, &psi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transport_preserves_bounds_and_mass(
        field_seed in 0u64..1_000_000,
        rho_seed in 0u64..1_000_000,
        cfl_frac in 0.05f64..0.98,
        steps in 1usize..6,
    ) {
        let g = Grid2D::new(24, 24);
        let (m, big_m) = (0.5, 1.5);
        let rho0 = ScalarField::from_fn(g, |x, y| {
            let s = (7.0 * x + hashed_unit(rho_seed, 1) * 5.0).sin()
                * (3.0 * y + hashed_unit(rho_seed, 2)).cos();
            m + (big_m - m) * 0.5 * (1.0 + s)
        });
        let mut rho = DensityField::new(rho0, m, big_m).unwrap();
        let mass0 = rho.total_mass();
        for s in 0..steps {
            let u = random_divfree(g, field_seed.wrapping_add(s as u64));
            let (outflow, directional) = courant_numbers(&u, 1.0);
            let dt = cfl_frac * CFL_LIMIT / outflow.max(directional);
            rho = advance_density(&rho, &u, dt, AdvectionScheme::Upwind).unwrap();
            let (lo, hi) = rho.min_max();
            prop_assert!(lo >= m - 1e-12 && hi <= big_m + 1e-12, "bounds [{lo}, {hi}]");
        }
        let drift = (rho.total_mass() - mass0).abs() / mass0;
        prop_assert!(drift <= 1e-13, "mass drift {drift:e}");
    }

    #[test]
    fn noise_paths_reproducible_and_coarsening_consistent(
        seed in 0u64..1_000_000,
        factor in 1usize..5,
        blocks in 2usize..6,
    ) {
        let g = Grid2D::new(8, 8);
        let spec = NoiseSpec::new(g, 3, 1.5, 0.1, seed);
        let n_steps = factor * blocks;
        let a = sample_path(&spec, n_steps, 1e-2);
        let b = sample_path(&spec, n_steps, 1e-2);
        prop_assert_eq!(&a.increments, &b.increments);
        let c = coarsen_path(&a, factor).unwrap();
        // coarse increments are exactly the window sums
        for n in 0..blocks {
            for k in 0..spec.n_modes {
                let mut sum = 0.0;
                for s in 0..factor {
                    sum += a.step(n * factor + s)[k];
                }
                prop_assert!((c.step(n)[k] - sum).abs() <= 1e-15 * sum.abs().max(1.0));
            }
        }
    }

    #[test]
    fn projection_annihilates_divergence_and_is_idempotent(
        seed in 0u64..1_000_000,
        gradient_weight in 0.0f64..2.0,
    ) {
        let g = Grid2D::new(16, 16);
        let mut w = random_divfree(g, seed);
        let phi = ScalarField::from_fn(g, |x, y| {
            (hashed_unit(seed, 77) * 6.0 * x).cos() * (hashed_unit(seed, 78) * 4.0 * y).sin()
        });
        w.axpy(gradient_weight, &oscilab::mac_grid::gradient(&phi));
        let mut ps = PoissonSolver::new(g);
        let p1 = ps.leray_project(&w).unwrap();
        prop_assert!(divergence(&p1).norm_inf() <= 1e-9 * w.norm_l2().max(1.0));
        let p2 = ps.leray_project(&p1).unwrap();
        let mut d = p2.clone();
        d.axpy(-1.0, &p1);
        prop_assert!(d.norm_l2() <= 1e-10 * p1.norm_l2().max(1e-300));
    }
}
