use super::*;
use crate::coeffs::{BetaLaw, CoefficientModel, DensityDrift, DriftField};
use crate::distance::{ks_one_sample, wasserstein1};
use crate::fpe::{linearize, solve_porous_media, SchemeConfig};
use crate::grid::make_grid;
use crate::stats::{median, Estimate};
use statrs::distribution::{ContinuousCDF, Normal};

fn point(n: usize, x: f64) -> ParticleEnsemble<f64> {
    ParticleEnsemble::new(0.0, vec![x; n]).unwrap()
}

#[test]
fn frozen_dynamics_do_not_move() {
    let mut ens = sample_initial(&InitialLaw::Gaussian { mean: 0.0, var: 1.0 }, 100, 1, 0).unwrap();
    let before = ens.positions().to_vec();
    let mut rngs = particle_streams(1, 0, 100, Purpose::Diffusion);
    let frozen = CoefficientModel::Constant { a: 0.0, b: 0.0 };
    for _ in 0..10 {
        em_step(&mut ens, &frozen, 0.1, &mut rngs).unwrap();
    }
    assert_eq!(ens.positions(), &before[..]);
}

#[test]
fn ou_moments_after_unit_time() {
    let n = 100_000;
    let cfg = SimConfig::new(n, 1e-3, 1.0, 11).recording_every(1000);
    let paths = simulate_paths(&CoefficientModel::ou(), &point(n, 2.0), &cfg).unwrap();
    let xs = paths.marginal(1).positions().to_vec();
    let m = Estimate::from_samples(&xs);
    assert!((m.mean - 2.0 * (-1.0f64).exp()).abs() <= 3.0 * m.stderr);
    let var_exact = (1.0 - (-2.0f64).exp()) / 2.0;
    let sq: Vec<f64> = xs.iter().map(|x| (x - m.mean) * (x - m.mean)).collect();
    let v = Estimate::from_samples(&sq);
    assert!((v.mean - var_exact).abs() <= 3.0 * v.stderr, "{} vs {var_exact}", v.mean);
}

#[test]
fn single_particle_recomputes_bit_exactly() {
    let ou = CoefficientModel::ou();
    let cfg = SimConfig::new(1, 0.01, 0.5, 99);
    let paths = simulate_paths(&ou, &point(1, 0.7), &cfg).unwrap();
    let mut rng = RngStream::particle(99, 0, 0, Purpose::Diffusion).rng();
    let mut x: f64 = 0.7;
    for k in 0..50 {
        x = x + (-x) * 0.01 + (1.0f64 * 0.01).sqrt() * normal(&mut rng);
        assert_eq!(paths.state(0, k + 1, 0), x);
    }
}

#[test]
fn em_step_loop_matches_path_simulator() {
    let model = CoefficientModel::TimeDependent(crate::coeffs::TimeLaw::OuSinDrift);
    let init = sample_initial(&InitialLaw::Uniform { a: -1.0, b: 1.0 }, 64, 3, 0).unwrap();
    let cfg = SimConfig::new(64, 0.02, 1.0, 5);
    let paths = simulate_paths(&model, &init, &cfg).unwrap();
    let mut ens = init.clone();
    let mut rngs = particle_streams(5, 0, 64, Purpose::Diffusion);
    for k in 1..=50 {
        em_step(&mut ens, &model, 0.02, &mut rngs).unwrap();
        assert_eq!(ens.clock(), k as f64 * 0.02);
        for p in 0..64 {
            assert_eq!(ens.x(p), paths.state(p, k, 0));
        }
    }
}

#[test]
fn clock_is_uniform_motion() {
    let mut ens = ParticleEnsemble::new(0.25, vec![0.0; 4]).unwrap();
    let mut rngs = particle_streams(0, 0, 4, Purpose::Diffusion);
    for k in 1..=400 {
        em_step(&mut ens, &CoefficientModel::heat(), 2.5e-3, &mut rngs).unwrap();
        assert_eq!(ens.clock(), 0.25 + k as f64 * 2.5e-3);
    }
}

#[test]
fn negative_diffusion_is_reported() {
    let bad = CoefficientModel::Constant { a: -1.0, b: 0.0 };
    let mut ens = point(3, 0.0);
    let mut rngs = particle_streams(0, 0, 3, Purpose::Diffusion);
    assert!(matches!(
        em_step(&mut ens, &bad, 0.1, &mut rngs),
        Err(Error::NegativeDiffusion { .. })
    ));
}

#[test]
fn weak_error_of_the_mean_is_first_order() {
    // The Euler mean of a linear drift does not depend on a, so a = 0 gives
    // the mean without sampling noise.
    let ou = CoefficientModel::OrnsteinUhlenbeck { a: 0.0, theta: 1.0 };
    let exact = 2.0 * (-1.0f64).exp();
    let bias = |dt: f64| {
        let cfg = SimConfig::new(1, dt, 1.0, 0).recording_at(&[]);
        let p = simulate_paths(&ou, &point(1, 2.0), &cfg).unwrap();
        (p.state(0, p.steps(), 0) - exact).abs()
    };
    let (b4, b2, b1) = (bias(4e-3), bias(2e-3), bias(1e-3));
    for r in [b4 / b2, b2 / b1] {
        assert!((1.5..=2.5).contains(&r), "ratio {r}");
    }
}

#[test]
fn gaussian_initial_law() {
    let n = 100_000;
    let ens = sample_initial(&InitialLaw::Gaussian { mean: 0.0, var: 0.25 }, n, 4, 0).unwrap();
    assert!(ens.mean().abs() <= 3.0 * 0.5 / (n as f64).sqrt());
    let again = sample_initial(&InitialLaw::Gaussian { mean: 0.0, var: 0.25 }, n, 4, 0).unwrap();
    assert_eq!(ens, again);
}

#[test]
fn point_mass_cell_and_uniform_laws() {
    let g = make_grid(-1.0, 1.0, 40).unwrap();
    let mut v = vec![0.0; 40];
    v[27] = 1.0 / g.dx();
    let cell = Slice::new(g, v).unwrap();
    let ens = sample_initial(&InitialLaw::GridDensity(cell), 1000, 2, 0).unwrap();
    for &x in ens.positions() {
        assert!((x - g.center(27)).abs() <= g.dx());
    }
    let ens = sample_initial(&InitialLaw::Uniform { a: 0.0, b: 1.0 }, 10_000, 2, 0).unwrap();
    assert!(ens.positions().iter().all(|&x| (0.0..=1.0).contains(&x)));
}

#[test]
fn two_dimensional_ou_is_componentwise() {
    let n = 20_000;
    let law = InitialLaw::Gaussian { mean: 1.0, var: 0.01 };
    let init = sample_initial_dim(&law, n, 2, 0.0, 8, 0).unwrap();
    let cfg = SimConfig::new(n, 1e-2, 1.0, 8).recording_every(100);
    let paths = simulate_paths(&CoefficientModel::ou(), &init, &cfg).unwrap();
    for c in 0..2 {
        let xs: Vec<f64> = (0..n).map(|p| paths.state(p, 1, c)).collect();
        let m = Estimate::from_samples(&xs);
        assert!((m.mean - (-1.0f64).exp()).abs() <= 3.0 * m.stderr + 5e-3);
    }
    let mut csv = Vec::new();
    paths.write_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("path_id,step,t,x,y\n"));
}

#[test]
fn linearized_needs_a_long_enough_trajectory() {
    let g = make_grid(-4.0, 4.0, 200).unwrap();
    let u0 = crate::density::gaussian_density(&g, 0.0, 0.25).unwrap();
    let traj = crate::fpe::solve_linear_fpe(&u0, &CoefficientModel::heat(), 0.1, &SchemeConfig::implicit(1e-2)).unwrap();
    let cfg = SimConfig::new(10, 1e-2, 0.2, 0);
    assert!(matches!(
        simulate_linearized(&traj, &CoefficientModel::heat(), &cfg),
        Err(Error::TrajectoryTooShort { .. })
    ));
}

#[test]
fn linearized_constant_model_is_plain_simulation() {
    let g = make_grid(-4.0, 4.0, 200).unwrap();
    let u0 = crate::density::gaussian_density(&g, 0.0, 0.25).unwrap();
    let heat = CoefficientModel::heat();
    let traj = crate::fpe::solve_linear_fpe(&u0, &heat, 0.5, &SchemeConfig::implicit(1e-2)).unwrap();
    let cfg = SimConfig::new(500, 1e-2, 0.5, 21);
    let a = simulate_linearized(&traj, &heat, &cfg).unwrap();
    let init = sample_initial(&InitialLaw::GridDensity(u0), 500, 21, 0).unwrap();
    let b = simulate_paths(&heat, &init, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn linear_porous_particles_spread_like_a_two() {
    let g = make_grid(-6.0, 6.0, 600).unwrap();
    let u0 = crate::density::gaussian_density(&g, 0.0, 0.25).unwrap();
    let porous = PorousMedia::new(BetaLaw::Linear, DriftField::Zero, DensityDrift::One);
    let traj = solve_porous_media(&u0, &porous, 0.5, &SchemeConfig::implicit(1e-2)).unwrap();
    let model = linearize(&traj, &porous);
    let n = 50_000;
    let cfg = SimConfig::new(n, 1e-2, 0.5, 6).recording_every(50);
    let paths = simulate_linearized(&traj, &model, &cfg).unwrap();
    let x0: Vec<f64> = (0..n).map(|p| paths.state(p, 0, 0)).collect();
    let x1: Vec<f64> = (0..n).map(|p| paths.state(p, 1, 0)).collect();
    // The increment is independent of the start with variance 2 T.
    let inc: Vec<f64> = x0.iter().zip(&x1).map(|(a, b)| (b - a) * (b - a)).collect();
    let growth = Estimate::from_samples(&inc);
    assert!((growth.mean - 1.0).abs() <= 3.0 * growth.stderr);
}

#[test]
fn small_self_consistent_run_warns() {
    let g = make_grid(-4.0, 4.0, 200).unwrap();
    let porous = PorousMedia::new(BetaLaw::Cubic, DriftField::Zero, DensityDrift::One);
    let cfg = SimConfig::new(10, 1e-2, 0.1, 0);
    let run = simulate_self_consistent(&porous, &InitialLaw::Gaussian { mean: 0.0, var: 0.25 }, &g, &cfg).unwrap();
    assert_eq!(run.warnings.len(), 1);
    assert_eq!(run.paths.n_paths(), 10);
    assert_eq!(run.density.t_end(), run.paths.clock_at(run.paths.steps()));
}

#[test]
fn linear_beta_self_consistent_is_brownian() {
    let g = make_grid(-6.0, 6.0, 600).unwrap();
    let porous = PorousMedia::new(BetaLaw::Linear, DriftField::Zero, DensityDrift::One);
    let law = InitialLaw::Gaussian { mean: 0.0, var: 0.25 };
    let n = 20_000;
    let two = CoefficientModel::Constant { a: 2.0, b: 0.0 };
    let exact = Normal::new(0.0, (0.25f64 + 2.0 * 0.25).sqrt()).unwrap();
    let mut ks = Vec::new();
    for rep in 0..20 {
        let cfg = SimConfig::new(n, 1e-2, 0.25, 77).replicate(rep).recording_at(&[]);
        let run = simulate_self_consistent(&porous, &law, &g, &cfg).unwrap();
        let fin = run.paths.marginal(run.paths.steps()).positions().to_vec();
        ks.push(ks_one_sample(&fin, |x| exact.cdf(x)));
        if rep == 0 {
            // Same streams, density-independent coefficients: same paths.
            let init = sample_initial(&law, n, 77, 0).unwrap();
            let plain = simulate_paths(&two, &init, &cfg).unwrap();
            assert_eq!(plain.marginal(plain.steps()).positions(), &fin[..]);
        }
    }
    assert!(median(&ks) <= 0.02, "median KS {}", median(&ks));
}

#[test]
fn cubic_self_consistent_tracks_the_pde() {
    let g = make_grid(-4.0, 4.0, 800).unwrap();
    let porous = PorousMedia::new(BetaLaw::Cubic, DriftField::Zero, DensityDrift::One);
    let law = InitialLaw::Gaussian { mean: 0.0, var: 0.25 };
    let u0 = law.density(&g).unwrap();
    let pde = solve_porous_media(&u0, &porous, 0.25, &SchemeConfig::implicit(1e-3)).unwrap();
    let cfg = SimConfig::new(100_000, 1e-3, 0.25, 31).recording_at(&[]);
    let run = simulate_self_consistent(&porous, &law, &g, &cfg).unwrap();
    let w = wasserstein1(&run.density.last(), &pde.last()).unwrap();
    assert!(w <= 0.05, "W1 {w}");
}
