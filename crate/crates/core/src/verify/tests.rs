use super::*;
use crate::coeffs::CoefficientModel;
use crate::density::gaussian_density;
use crate::ensemble::ParticleEnsemble;
use crate::grid::make_grid;
use crate::sde::InitialLaw;

fn heat_setup(n: usize, b: f64) -> (DensityTrajectory<f64>, PathBundle<f64>) {
    let grid = make_grid(-8.0f64, 8.0, 800).unwrap();
    let u0 = gaussian_density(&grid, 0.0, 0.25).unwrap();
    let scheme = SchemeConfig::implicit(1e-3).recording_every(100);
    let traj = solve_linear_fpe(&u0, &CoefficientModel::heat(), 1.0, &scheme).unwrap();
    let init = sample_initial_dim(&InitialLaw::GridDensity(u0), n, 1, 0.0, 7, 0).unwrap();
    let model = CoefficientModel::Constant { a: 1.0, b };
    let cfg = SimConfig::new(n, 1e-3, 1.0, 7).recording_at(&[0.5]);
    (traj, simulate_paths(&model, &init, &cfg).unwrap())
}

#[test]
fn heat_marginals_superpose() {
    let (traj, paths) = heat_setup(20_000, 0.0);
    let rows = check_superposition(&traj, &paths, &[0.0, 0.5, 1.0], 0.0, 3).unwrap();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn mismatched_drift_is_detected() {
    let (traj, paths) = heat_setup(20_000, 1.0);
    let rows = check_superposition(&traj, &paths, &[1.0], 0.0, 3).unwrap();
    assert!(!rows[0].pass);
    assert!((rows[0].statistic - 1.0).abs() < 0.1, "{}", rows[0].statistic);
}

#[test]
fn checkpoint_outside_paths() {
    let (traj, paths) = heat_setup(100, 0.0);
    let err = check_superposition(&traj, &paths, &[0.3], 0.0, 3).unwrap_err();
    assert!(matches!(err, Error::CheckpointOutsideTrajectory(_)));
    let err = check_superposition(&traj, &paths, &[2.0], 0.0, 3).unwrap_err();
    assert!(matches!(err, Error::CheckpointOutsideTrajectory(_)));
}

#[test]
fn bootstrap_spread_shrinks_with_sample_size() {
    let grid = make_grid(-6.0f64, 6.0, 600).unwrap();
    let target = gaussian_density(&grid, 0.0, 1.0).unwrap();
    let spread_at = |n: usize| {
        let xs = sample_initial_dim(&InitialLaw::Gaussian { mean: 0.0, var: 1.0 }, n, 1, 0.0, 1, 0)
            .unwrap()
            .first_coordinates();
        marginal_distance(&xs, &target, 0.0, 1, 0).unwrap().stderr
    };
    let (small, large) = (spread_at(1_000), spread_at(16_000));
    assert!(large < 0.5 * small, "{small} {large}");
}

#[test]
fn flow_property_holds_for_ou() {
    let grid = make_grid(-6.0f64, 6.0, 600).unwrap();
    let setup = FlowSetup {
        s: 0.0,
        r: 0.3,
        t: 0.4,
        n: 20_000,
        dt: 1e-3,
        bandwidth: 0.0,
        seed: 21,
    };
    let law = InitialLaw::Gaussian { mean: 1.0, var: 0.5 };
    let rep = check_flow_property(&CoefficientModel::ou(), &law, &grid, &setup).unwrap();
    assert!(rep.pass, "{rep:?}");

    let control = FlowSetup { r: 0.0, ..setup };
    let rep = check_flow_property(&CoefficientModel::ou(), &law, &grid, &control).unwrap();
    assert!(rep.w1 <= rep.noise_floor, "{rep:?}");
}

#[test]
fn flow_restart_clock_follows_first_leg() {
    // Time-dependent drift: restarting at the wrong clock would shift the mean.
    let grid = make_grid(-8.0f64, 8.0, 800).unwrap();
    let setup = FlowSetup {
        s: 0.5,
        r: 0.5,
        t: 1.0,
        n: 20_000,
        dt: 1e-3,
        bandwidth: 0.0,
        seed: 4,
    };
    let model = CoefficientModel::TimeDependent(crate::coeffs::TimeLaw::SinDrift);
    let law = InitialLaw::Gaussian { mean: 0.0, var: 0.25 };
    let rep = check_flow_property(&model, &law, &grid, &setup).unwrap();
    assert!(rep.pass, "{rep:?}");
}

#[test]
fn domination_persists_under_heat_flow() {
    let grid = make_grid(-8.0f64, 8.0, 800).unwrap();
    let nu0 = gaussian_density(&grid, 0.0, 0.5).unwrap();
    let mu0 = gaussian_density(&grid, 0.0, 1.0).unwrap();
    // sup nu/mu = sqrt(2) for these variances.
    let c = 2.0f64.sqrt();
    let scheme = SchemeConfig::implicit(1e-3).recording_every(100);
    let model = CoefficientModel::ou();
    let rows = check_domination(&nu0, c, &mu0, &model, &[0.0, 0.5, 1.0], &scheme).unwrap();
    for r in &rows {
        assert!(r.pass, "{r:?}");
    }
    let err = check_domination(&nu0, 1.0, &mu0, &model, &[1.0], &scheme).unwrap_err();
    assert!(matches!(err, Error::InitialDominationFails { .. }));
}

#[test]
fn gaussian_sqrt_energy_is_quarter_fisher_information() {
    // |d/dx sqrt(u)|^2 integrates to 1 / (4 var) for a centred Gaussian.
    let grid = make_grid(-10.0f64, 10.0, 2000).unwrap();
    let var = 0.5;
    let u = gaussian_density(&grid, 0.0, var).unwrap();
    let traj = DensityTrajectory::new(grid, vec![0.0, 2.0], vec![u.values().to_vec(); 2]).unwrap();
    let h = Bump::new(0.0, 20.0, 1.0).unwrap();
    let e = sqrt_energy(&traj, &h);
    assert!((e - 2.0 / (4.0 * var)).abs() < 1e-3, "{e}");
}

#[test]
fn heat_energy_refinement_is_bounded() {
    let grid = make_grid(-6.0f64, 6.0, 150).unwrap();
    let scheme = SchemeConfig::implicit(4e-3).recording_every(5);
    let h = Bump::new(0.0, 2.0, 1.0).unwrap();
    let series = energy_series(&grid, &scheme, 3, &h, |g, cfg| {
        let u0 = gaussian_density(g, 0.0, 0.5)?;
        solve_linear_fpe(&u0, &CoefficientModel::heat(), 1.0, cfg)
    })
    .unwrap();
    assert_eq!(series.values.len(), 3);
    assert!(series.bounded(), "{:?}", series.values);
    for r in series.ratios() {
        assert!((r - 1.0).abs() < 0.05, "{r}");
    }
}

#[test]
fn verdict_csv_header() {
    let rows = [VerdictRow {
        check: "superposition".into(),
        checkpoint: 0.5,
        statistic: 0.01,
        threshold: 0.02,
        pass: true,
    }];
    let mut out = Vec::new();
    write_verdicts(&rows, &mut out).unwrap();
    let s = String::from_utf8(out).unwrap();
    assert!(s.starts_with("check,checkpoint,statistic,threshold,verdict\nsuperposition,0.5,"));
    assert!(s.trim_end().ends_with("PASS"));
}

#[test]
fn empty_restart_ensemble_rejected() {
    assert!(ParticleEnsemble::<f64>::new(0.0, vec![]).is_err());
}
