use super::*;
use crate::catalog::{PsiFn, TestFn};
use crate::coeffs::CoefficientModel;
use crate::distance::{ks_one_sample, ks_p_value};
use crate::ensemble::ParticleEnsemble;
use crate::error::Error;
use crate::fpe::SchemeConfig;
use crate::grid::make_grid;
use crate::sde::{sample_initial, simulate_paths, InitialLaw, McConfig, SimConfig};
use crate::stats::{mean, median, variance};

fn frozen() -> CoefficientModel<f64> {
    CoefficientModel::Constant { a: 0.0, b: 0.0 }
}

fn at(n: usize, x: f64) -> ParticleEnsemble<f64> {
    ParticleEnsemble::new(0.0, vec![x; n]).unwrap()
}

#[test]
fn zero_kernel_reproduces_plain_paths() {
    let init = sample_initial(&InitialLaw::Gaussian { mean: 0.0, var: 1.0 }, 200, 2, 0).unwrap();
    let cfg = SimConfig::new(200, 0.01, 1.0, 9).recording_every(5);
    let plain = simulate_paths(&CoefficientModel::ou(), &init, &cfg).unwrap();
    let jumped = simulate_jump_process(&CoefficientModel::ou(), &JumpKernel::zero(), &init, &cfg).unwrap();
    assert_eq!(plain, jumped);
    assert!(jumped.events().is_empty());
}

#[test]
fn constant_rate_counts_are_poisson() {
    let n = 20_000;
    let k = JumpKernel::new(RateLaw::Constant(2.0), Displacement::point(0.5)).unwrap();
    let cfg = SimConfig::new(n, 0.01, 1.0, 3).recording_every(100);
    let paths = simulate_jump_process(&frozen(), &k, &at(n, 0.0), &cfg).unwrap();
    let counts: Vec<f64> = events_per_path(&paths).iter().map(|&c| c as f64).collect();
    let m = mean(&counts);
    assert!((m - 2.0).abs() <= 3.0 * (2.0 / n as f64).sqrt(), "{m}");
    assert!((variance(&counts) - 2.0).abs() < 0.1);
    for (p, &c) in counts.iter().enumerate() {
        assert_eq!(paths.state(p, 1, 0), 0.5 * c);
    }
    for e in paths.events() {
        assert!(e.t > 0.0 && e.t <= 1.0);
        assert_eq!(e.x_post - e.x_pre, 0.5);
    }
}

#[test]
fn waiting_times_are_exponential() {
    let n = 2_000;
    let k = JumpKernel::new(RateLaw::Constant(2.0), Displacement::Gaussian { mean: 0.0, var: 1.0 }).unwrap();
    let ps: Vec<f64> = (0..20)
        .map(|rep| {
            let cfg = SimConfig::new(n, 0.01, 5.0, 17).replicate(rep).recording_every(500);
            let paths = simulate_jump_process(&frozen(), &k, &at(n, 0.0), &cfg).unwrap();
            let mut first = vec![f64::INFINITY; n];
            for e in paths.events() {
                first[e.path] = first[e.path].min(e.t);
            }
            let d = ks_one_sample(&first, |t| 1.0 - (-2.0 * t).exp());
            ks_p_value(d, n)
        })
        .collect();
    assert!(median(&ps) > 0.01, "{ps:?}");
}

#[test]
fn thinning_bound_must_dominate() {
    let k = JumpKernel::with_bound(RateLaw::Constant(2.0), Displacement::point(1.0), 1.0).unwrap();
    let cfg = SimConfig::new(100, 0.01, 1.0, 1);
    let err = simulate_jump_process(&frozen(), &k, &at(100, 0.0), &cfg).unwrap_err();
    assert!(matches!(err, Error::DominationViolated { .. }));
    let window = make_grid(-1.0f64, 1.0, 20).unwrap();
    let err = simulate_jump_process(&frozen(), &k, &at(1, 0.0), &cfg.clone().within(window)).unwrap_err();
    assert!(matches!(err, Error::DominationViolated { .. }));
}

#[test]
fn compensator_identity_for_all_marks() {
    let n = 10_000;
    let k = JumpKernel::new(RateLaw::Bump { peak: 1.5 }, Displacement::Gaussian { mean: 0.3, var: 0.2 }).unwrap();
    let init = sample_initial(&InitialLaw::Gaussian { mean: 0.0, var: 0.5 }, n, 4, 0).unwrap();
    let cfg = SimConfig::new(n, 1e-3, 1.0, 4).recording_every(5);
    let paths = simulate_jump_process(&CoefficientModel::ou(), &k, &init, &cfg).unwrap();
    for psi in PsiFn::ALL {
        for t in [0.5, 1.0] {
            let r = check_jump_compensator(&paths, &k, psi, t).unwrap();
            assert!(r.pass, "{r:?}");
            assert!(r.lhs.mean > 0.0);
        }
    }
    let doubled = JumpKernel::new(RateLaw::Bump { peak: 3.0 }, k.displacement).unwrap();
    let r = check_jump_compensator(&paths, &doubled, PsiFn::Indicator, 1.0).unwrap();
    assert!(!r.pass, "{r:?}");
    assert!(matches!(
        check_jump_compensator(&paths, &k, PsiFn::Indicator, 2.0),
        Err(Error::CheckpointOutsideTrajectory(_))
    ));
}

#[test]
fn resolvent_without_jumps_is_exact() {
    let mc = McConfig::new(50, 1e-3, 5);
    let r = check_resolvent_identity(&CoefficientModel::heat(), &JumpKernel::zero(), TestFn::One, 50.0, (0.0, 0.0), 1.0, &mc)
        .unwrap();
    let exact = (1.0 - (-50.0f64).exp()) / 50.0;
    assert!((r.direct.mean - exact).abs() < 1e-12);
    assert!((r.rhs.mean - exact).abs() < 1e-12);
    assert_eq!(r.nested.mean, 0.0);
    assert!(r.pass, "{r:?}");
}

#[test]
fn resolvent_identity_with_ou_and_jumps() {
    let k = JumpKernel::new(RateLaw::Bump { peak: 2.0 }, Displacement::Gaussian { mean: 0.5, var: 0.25 }).unwrap();
    let mc = McConfig::new(4_000, 1e-2, 12);
    let r = check_resolvent_identity(&CoefficientModel::ou(), &k, TestFn::Gauss, 1.0, (0.0, 0.2), 8.0, &mc).unwrap();
    assert!(r.pass, "{r:?}");
    assert!(r.nested.mean > 0.05, "{r:?}");
    assert!(r.truncation_budget < 1e-3);
}

#[test]
fn pure_jump_marginals_match_forward_equation() {
    let grid = make_grid(-6.0f64, 10.0, 800).unwrap();
    let k = JumpKernel::new(RateLaw::Constant(1.0), Displacement::Gaussian { mean: 0.5, var: 0.1 }).unwrap();
    let law = InitialLaw::Gaussian { mean: 0.0, var: 0.5 };
    let scheme = SchemeConfig::implicit(1e-3).recording_every(100);
    let cfg = SimConfig::new(20_000, 1e-3, 1.0, 6);
    let rows = verify_jump_fpe_marginals(&frozen(), &k, &law, &grid, &[0.5, 1.0], &scheme, &cfg).unwrap();
    for r in &rows {
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn ou_jump_marginals_match_forward_equation() {
    let grid = make_grid(-6.0f64, 8.0, 700).unwrap();
    let k = JumpKernel::new(RateLaw::Bump { peak: 2.0 }, Displacement::Uniform { lo: 0.0, hi: 1.5 }).unwrap();
    let law = InitialLaw::Gaussian { mean: 0.0, var: 0.5 };
    let scheme = SchemeConfig::implicit(1e-3).recording_every(100);
    let cfg = SimConfig::new(20_000, 1e-3, 1.0, 8);
    let rows = verify_jump_fpe_marginals(&CoefficientModel::ou(), &k, &law, &grid, &[0.5, 1.0], &scheme, &cfg).unwrap();
    for r in &rows {
        assert!(r.pass, "{r:?}");
    }
}
