//! Property tests for the module invariants.

use num_complex::Complex64;
use proptest::prelude::*;
use svqlab::action::{self, DiscreteTrajectory};
use svqlab::entropy::{self, DensityPair};
use svqlab::fieldlattice;
use svqlab::madelung::{self, MadelungPair};
use svqlab::noether::{self, Observable};
use svqlab::numerics::{self, Boundary, Field, Grid1D, RealField};
use svqlab::schrodinger::{self, PhysicalParams, PotentialSpec, Wavefunction};
use svqlab::stochastic::{self, NoiseParams};

fn boundary() -> impl Strategy<Value = Boundary> {
    prop_oneof![Just(Boundary::Periodic), Just(Boundary::Clamped)]
}

fn fourier_field(grid: Grid1D, coeffs: &[(f64, f64)]) -> RealField {
    let l = grid.length();
    let x0 = grid.x_min();
    Field::from_fn(grid, |x: f64| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, (a, b))| {
                let arg = 2.0 * std::f64::consts::PI * (k + 1) as f64 * (x - x0) / l;
                a * arg.cos() + b * arg.sin()
            })
            .sum()
    })
}

/// Random periodic wavefunction with |ψ| bounded away from zero.
fn smooth_state(n: usize, modulus: &[f64], phase: &[f64]) -> Wavefunction {
    let grid = Grid1D::periodic(-std::f64::consts::PI, std::f64::consts::PI, n).unwrap();
    let values = (0..n)
        .map(|i| {
            let x = grid.point(i);
            let r = 1.0 + 0.5 * modulus.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * x).cos()).sum::<f64>() / modulus.len() as f64;
            let th = phase.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * x).sin()).sum::<f64>();
            Complex64::from_polar(r, th)
        })
        .collect();
    Wavefunction::normalized(Field::new(grid, values).unwrap(), 0.0).unwrap()
}

fn nelson() -> PhysicalParams {
    PhysicalParams::nelson(1.0, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derivatives_annihilate_constants(n in 8usize..80, c in -1e3f64..1e3, b in boundary()) {
        let grid = Grid1D::new(-1.5, 2.5, n, b).unwrap();
        let f = Field::constant(grid, c);
        prop_assert!(numerics::gradient(&f).unwrap().max_abs() <= 1e-12 * c.abs().max(1.0));
        prop_assert!(numerics::laplacian(&f).unwrap().max_abs() <= 1e-10 * c.abs().max(1.0));
    }

    #[test]
    fn periodic_gradient_integrates_to_zero(
        n in 8usize..128,
        coeffs in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..6),
        noise in prop::collection::vec(-1.0f64..1.0, 128),
    ) {
        let grid = Grid1D::periodic(0.0, 3.0, n).unwrap();
        let mut f = fourier_field(grid, &coeffs);
        for (v, e) in f.values_mut().iter_mut().zip(&noise) {
            *v += e;
        }
        let total = numerics::integrate(&numerics::gradient(&f).unwrap()).unwrap();
        prop_assert!(total.abs() <= 1e-12);
    }

    #[test]
    fn l1_distance_is_a_metric(
        a in prop::collection::vec(-5.0f64..5.0, 16),
        b in prop::collection::vec(-5.0f64..5.0, 16),
        b2 in boundary(),
    ) {
        let grid = Grid1D::new(0.0, 1.0, 16, b2).unwrap();
        let f = Field::new(grid, a).unwrap();
        let g = Field::new(grid, b).unwrap();
        let d = numerics::l1_distance(&f, &g).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d, numerics::l1_distance(&g, &f).unwrap());
        prop_assert_eq!(numerics::l1_distance(&f, &f).unwrap(), 0.0);
    }

    #[test]
    fn constraint_identity_holds(m in 0.1f64..10.0, alpha in 0.05f64..5.0, nu in 0.05f64..5.0) {
        let kappa = 4.0 * alpha * nu * m;
        let p = PhysicalParams::new(m, kappa, alpha, nu).unwrap();
        let lhs = p.internal_energy_coefficient();
        let rhs = p.kinetic_coefficient();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
    }

    #[test]
    fn crank_nicolson_step_is_unitary(
        x0 in -2.0f64..2.0, p0 in -3.0f64..3.0, sigma in 0.5f64..1.5, omega in 0.2f64..2.0,
    ) {
        let p = nelson();
        let grid = Grid1D::periodic(-10.0, 10.0, 128).unwrap();
        let psi = schrodinger::gaussian_packet(grid, x0, sigma, p0, &p).unwrap();
        let v = PotentialSpec::Harmonic { omega };
        let states = schrodinger::evolve(&psi, &v, &p, 0.01, 20, 1).unwrap();
        for w in states.windows(2) {
            prop_assert!((w[1].norm_sq() - w[0].norm_sq()).abs() <= 1e-12);
        }
    }

    #[test]
    fn consistency_condition_is_exact(
        modulus in prop::collection::vec(-1.0f64..1.0, 1..5),
        phase in prop::collection::vec(-2.0f64..2.0, 1..5),
        n in 16usize..96,
    ) {
        let psi = smooth_state(n, &modulus, &phase);
        let mp = madelung::decompose(&psi).unwrap();
        let p = nelson();
        let d = madelung::drifts(&mp, &p).unwrap();
        let defect = madelung::consistency_defect(&mp, &d, &p).unwrap();
        prop_assert!(defect <= 1e-12 * d.u_relative.max_abs().max(1.0));
    }

    #[test]
    fn compose_inverts_decompose_up_to_global_phase(
        modulus in prop::collection::vec(-1.0f64..1.0, 1..5),
        phase in prop::collection::vec(-3.0f64..3.0, 1..5),
        theta in -3.0f64..3.0,
    ) {
        let psi = smooth_state(64, &modulus, &phase);
        let rotated = Wavefunction::new(psi.psi().map(|z| z * Complex64::from_polar(1.0, theta)), 0.0).unwrap();
        let back = madelung::compose(&madelung::decompose(&rotated).unwrap()).unwrap();
        let overlap = back.inner(psi.psi()).unwrap();
        let g = overlap / overlap.norm();
        for (a, b) in back.values().iter().zip(psi.values()) {
            prop_assert!((a * g - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn entropy_is_invariant_under_relabeling(
        raw in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.05f64..1.0), 2..12),
        shuffle in any::<u64>(),
    ) {
        let n = raw.len();
        let w: Vec<f64> = raw.iter().map(|r| r.2).collect();
        let norm = |xs: Vec<f64>| -> Vec<f64> {
            let s: f64 = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>().max(1e-300);
            xs.iter().map(|x| x / s).collect()
        };
        prop_assume!(raw.iter().map(|r| r.0).sum::<f64>() > 1e-3 && raw.iter().map(|r| r.1).sum::<f64>() > 1e-3);
        let dp = DensityPair::new(w.clone(), norm(raw.iter().map(|r| r.0).collect()), norm(raw.iter().map(|r| r.1).collect())).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = shuffle;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let a = entropy::entropy(&dp);
        let b = entropy::entropy(&dp.permuted(&perm));
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn equal_densities_have_zero_ratio_spread(
        raw in prop::collection::vec((0.01f64..1.0, 0.05f64..1.0), 2..12),
    ) {
        let w: Vec<f64> = raw.iter().map(|r| r.1).collect();
        let s: f64 = raw.iter().map(|r| r.0 * r.1).sum();
        let rho: Vec<f64> = raw.iter().map(|r| r.0 / s).collect();
        let dp = DensityPair::new(w, rho.clone(), rho).unwrap();
        prop_assert_eq!(entropy::stationarity_residual(&dp).unwrap().ratio_spread, 0.0);
    }

    #[test]
    fn charge_paths_agree_and_variances_are_nonnegative(
        modulus in prop::collection::vec(-1.0f64..1.0, 1..5),
        phase in prop::collection::vec(-2.0f64..2.0, 1..5),
        omega in 0.1f64..2.0,
    ) {
        let p = nelson();
        let psi = smooth_state(64, &modulus, &phase);
        let mp = madelung::decompose(&psi).unwrap();
        let v = PotentialSpec::Harmonic { omega };
        let ph = noether::momentum_hydro(&mp, &p);
        let eh = noether::energy_hydro(&mp, &p, &v).unwrap();
        prop_assert!((ph - noether::momentum_op(&psi, &p).unwrap()).abs() <= 1e-8);
        prop_assert!((eh - noether::energy_op(&psi, &p, &v).unwrap()).abs() <= 1e-8 * eh.abs().max(1.0));
        prop_assert!(noether::variance(&psi, Observable::Momentum, &p, &v).unwrap() >= 0.0);
        prop_assert!(noether::variance(&psi, Observable::Energy, &p, &v).unwrap() >= 0.0);
    }

    #[test]
    fn lattice_modes_follow_fourier(n in 1usize..12, dx in 0.2f64..2.0, c in 0.3f64..3.0, mu in 0.1f64..3.0) {
        let sys = fieldlattice::build_system(n, dx, c, 1.0, mu).unwrap();
        let got = fieldlattice::normal_modes(&sys);
        let mut want: Vec<f64> = (0..n).map(|k| {
            let s = (std::f64::consts::PI * k as f64 / n as f64).sin();
            let lap = if n > 1 { 4.0 * s * s / (dx * dx) } else { 0.0 };
            c * (mu * mu + lap).sqrt()
        }).collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-10 * b);
        }
    }

    #[test]
    fn ground_covariance_is_translation_invariant(n in 2usize..10, mu in 0.2f64..3.0) {
        let sys = fieldlattice::build_system(n, 1.0, 1.0, 1.0, mu).unwrap();
        let cov = fieldlattice::ground_state(&sys).unwrap().covariance().unwrap();
        for i in 0..n {
            for j in 0..n {
                let shifted = cov[((i + 1) % n, (j + 1) % n)];
                prop_assert!((cov[(i, j)] - shifted).abs() <= 1e-12 * cov[(0, 0)]);
            }
        }
    }

    #[test]
    fn local_energy_is_flat_on_the_ground_state(
        n in 1usize..8,
        mu in 0.3f64..2.0,
        phi in prop::collection::vec(-3.0f64..3.0, 8),
    ) {
        let sys = fieldlattice::build_system(n, 1.0, 1.0, 1.0, mu).unwrap();
        let gs = fieldlattice::ground_state(&sys).unwrap();
        let v = nalgebra::DVector::from_column_slice(&phi[..n]);
        let e = fieldlattice::local_energy(&gs, &v, &sys);
        prop_assert!((e - gs.e0).abs() <= 1e-10 * gs.e0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn analytic_action_gradient_matches_finite_differences(
        n in 8usize..14,
        snaps in 3usize..5,
        rho in prop::collection::vec(0.2f64..1.0, 64),
        lam in prop::collection::vec(-1.0f64..1.0, 64),
        periodic in any::<bool>(),
    ) {
        let p = nelson();
        let grid = if periodic {
            Grid1D::periodic(0.0, 2.0, n).unwrap()
        } else {
            Grid1D::clamped(0.0, 2.0, n).unwrap()
        };
        let snapshots: Vec<MadelungPair> = (0..snaps)
            .map(|t| {
                let r = Field::new(grid, (0..n).map(|i| rho[(t * n + i) % 64]).collect()).unwrap();
                let total = numerics::integrate(&r).unwrap();
                let l: Vec<f64> = (0..n).map(|i| lam[(t * 7 + i) % 64]).collect();
                MadelungPair::new(r.map(|x| x / total), Field::new(grid, l).unwrap(), 0.1 * t as f64).unwrap()
            })
            .collect();
        let traj = DiscreteTrajectory::new(snapshots, p, PotentialSpec::Harmonic { omega: 0.7 }).unwrap();
        let analytic = action::action_gradient(&traj).unwrap();
        let fd = action::finite_difference_gradient(&traj, 1e-5).unwrap();
        let scale = fd.max_abs();
        for (a, b) in analytic.d_rho.iter().chain(&analytic.d_lam).zip(fd.d_rho.iter().chain(&fd.d_lam)) {
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() <= 1e-6 * scale, "{} vs {} (scale {})", x, y, scale);
            }
        }
    }

    #[test]
    fn ensembles_do_not_depend_on_thread_count(seed in any::<u64>(), count in 10usize..2000) {
        let grid = Grid1D::periodic(-5.0, 5.0, 64).unwrap();
        let rho = Field::from_fn(grid, |x: f64| (-x * x).exp());
        let u = stochastic::DriftInterpolant::stationary(Field::from_fn(grid, |x: f64| -x)).unwrap();
        let noise = NoiseParams::new(0.5, seed).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
                let mut e = stochastic::sample_initial(&rho, count, &noise, 0.0).unwrap();
                for _ in 0..5 {
                    e = stochastic::step_forward(e, &u, 0.01, &noise).unwrap();
                }
                e.positions().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            })
        };
        prop_assert_eq!(run(1), run(3));
    }
}
