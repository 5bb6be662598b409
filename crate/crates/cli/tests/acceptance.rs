//! End-to-end acceptance checks. Each test prints one PASS/FAIL line (run
//! with `--nocapture` to see them) and asserts the same verdict.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::time::Instant;

use suplab::catalog::{Bump, LyapunovFn, PsiFn, TerminalFn, TestFn};
use suplab::coeffs::{BetaLaw, DensityDrift, DriftField, TimeLaw};
use suplab::fpe::{solve_linear_fpe, solve_porous_media, Domain, SchemeConfig};
use suplab::jumps::{
    check_jump_compensator, check_resolvent_identity, events_per_path, simulate_jump_process,
    verify_jump_fpe_marginals, Displacement, JumpKernel, RateLaw,
};
use suplab::potential::{
    check_generator_bound, check_supermartingale, dirichlet_consistency, estimate_capacities,
    estimate_tail_bound, verify_representation, LyapunovSpec, OpenSet,
};
use suplab::sde::{sample_initial, InitialLaw, McConfig, SimConfig};
use suplab::stats::combined_stderr;
use suplab::verify::{check_flow_property, energy_series, sqrt_energy, FlowSetup};
use suplab::{gaussian_density, l1_distance, make_grid, Density, Grid, Model, PorousMedia, Trajectory};
use suplab_cli::{execute, Command, ScenarioFile};

fn verdict(name: &str, pass: bool, detail: String) {
    println!("{name}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

#[test]
fn heat_kernel_exactness() {
    const L1_TOL: f64 = 1e-2;
    const MAX_SECONDS: f64 = 60.0;
    let grid = make_grid(-6.0, 6.0, 2400).unwrap();
    let u0 = gaussian_density(&grid, 0.0, 0.25).unwrap();
    let start = Instant::now();
    let traj = solve_linear_fpe(&u0, &Model::heat(), 0.5, &SchemeConfig::explicit(1e-5).recording_every(usize::MAX)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let l1 = l1_distance(&traj.last(), &gaussian_density(&grid, 0.0, 0.75).unwrap()).unwrap();
    verdict(
        "heat kernel",
        l1 <= L1_TOL && secs <= MAX_SECONDS,
        format!("l1={l1:.3e} (tol {L1_TOL}) runtime={secs:.1}s (limit {MAX_SECONDS}s)"),
    );
}

/// Averages a solution on a grid refined by 2 back onto the coarse cells.
fn coarsen(fine: &Density, coarse: &Grid) -> Density {
    let v: Vec<f64> = fine.values().chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect();
    Density::new(*coarse, v).unwrap()
}

#[test]
fn ou_stationarity_and_self_convergence() {
    const L1_TOL: f64 = 1e-2;
    const MIN_RATIO: f64 = 1.7;
    let ou = Model::ou();
    let solve = |n: usize, dt: f64| {
        let g = make_grid(-5.0, 5.0, n).unwrap();
        let u0 = gaussian_density(&g, 1.0, 0.25).unwrap();
        solve_linear_fpe(&u0, &ou, 6.0, &SchemeConfig::implicit(dt).recording_every(usize::MAX))
            .unwrap()
            .last()
    };
    let levels: Vec<Density> = [(250, 8e-3), (500, 4e-3), (1000, 2e-3)]
        .iter()
        .map(|&(n, dt)| solve(n, dt))
        .collect();
    let finest = &levels[2];
    let stationary = gaussian_density(finest.grid(), 0.0, 0.5).unwrap();
    let l1 = l1_distance(finest, &stationary).unwrap();
    let e0 = l1_distance(&levels[0], &coarsen(&levels[1], levels[0].grid())).unwrap();
    let e1 = l1_distance(&levels[1], &coarsen(&levels[2], levels[1].grid())).unwrap();
    let ratio = e0 / e1;
    verdict(
        "OU stationarity",
        l1 <= L1_TOL && ratio >= MIN_RATIO,
        format!("l1={l1:.3e} (tol {L1_TOL}) self-convergence ratio={ratio:.3} (min {MIN_RATIO})"),
    );
}

fn run_cli(cmd: Command, scenario: &str) -> String {
    let text = fs::read_to_string(bundled(scenario)).unwrap();
    let file = ScenarioFile::parse(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    execute(cmd, &file, dir.path()).unwrap().to_string()
}

#[test]
fn superposition_heat_and_porous() {
    // Both scenarios use N = 1e5 particles and checkpoints {0.25, 0.5}.
    let mut all = true;
    let mut detail = Vec::new();
    for sc in ["heat.scenario", "porous.scenario"] {
        let report = run_cli(Command::Superposition, sc);
        let lines: Vec<&str> = report.lines().collect();
        for t in ["0.25", "0.5"] {
            let main = lines.iter().any(|l| l.starts_with(&format!("superposition t={t} PASS")));
            let control = lines.iter().any(|l| l.starts_with(&format!("superposition control t={t} PASS")));
            all &= main && control;
            detail.push(format!("{sc} t={t}: match={main} control_detected={control}"));
        }
        print!("{report}");
    }
    verdict("superposition", all, detail.join("; "));
}

#[test]
fn flow_property() {
    const BANDWIDTH: f64 = 0.05;
    let grid = make_grid(-8.0, 8.0, 800).unwrap();
    let law = InitialLaw::Gaussian { mean: 0.0, var: 0.25 };
    let setup = FlowSetup {
        s: 0.0,
        r: 0.3,
        t: 0.4,
        n: 50_000,
        dt: 1e-3,
        bandwidth: BANDWIDTH,
        seed: 41,
    };
    let cases = [
        ("heat", Model::heat(), setup),
        ("sin drift", Model::TimeDependent(TimeLaw::SinDrift), FlowSetup { s: 0.5, ..setup }),
    ];
    let mut all = true;
    let mut detail = Vec::new();
    for (name, model, setup) in cases {
        let main = check_flow_property(&model, &law, &grid, &setup).unwrap();
        let control = check_flow_property(&model, &law, &grid, &FlowSetup { r: 0.0, ..setup }).unwrap();
        let ok = main.pass && control.w1 <= control.noise_floor;
        all &= ok;
        detail.push(format!(
            "{name}: w1={:.3e} tol={:.3e}, r=0 w1={:.3e} floor={:.3e}",
            main.w1, main.threshold, control.w1, control.noise_floor
        ));
    }
    verdict("flow property", all, detail.join("; "));
}

#[test]
fn dirichlet_and_representation() {
    const BIAS: f64 = 0.01;
    let grid = make_grid(-3.0, 3.0, 600).unwrap();
    let domain = Domain::Interval { left: -1.0, right: 1.0 };
    let probes: Vec<(f64, f64)> = [0.0, 0.2, 0.4]
        .iter()
        .flat_map(|&s| [-0.5, 0.0, 0.5].map(|x| (s, x)))
        .collect();
    let rows = dirichlet_consistency(
        TerminalFn::Square,
        &Model::ou(),
        domain,
        0.5,
        &probes,
        &grid,
        &SchemeConfig::implicit(1e-4),
        &McConfig::new(100_000, 1e-4, 51),
        BIAS,
    )
    .unwrap();
    let worst = rows
        .iter()
        .map(|r| (r.monte_carlo.mean - r.pde).abs() - r.tolerance)
        .fold(f64::NEG_INFINITY, f64::max);
    let probes_ok = rows.iter().all(|r| r.pass);

    let wide = make_grid(-6.0, 6.0, 1200).unwrap();
    let mu0 = gaussian_density(&wide, 0.3, 0.25).unwrap();
    let rep = verify_representation(
        TerminalFn::Square,
        &Model::ou(),
        0.5,
        &mu0,
        &SchemeConfig::implicit(1e-3),
        &McConfig::new(100_000, 1e-3, 52),
    )
    .unwrap();
    verdict(
        "Dirichlet",
        probes_ok && rep.pass,
        format!(
            "{} probes, worst gap minus tolerance={worst:.3e} (tol 3se+{BIAS}); representation mc={:.4} pde={:.4} tol={:.3e}",
            rows.len(),
            rep.monte_carlo.mean,
            rep.pde,
            rep.tolerance
        ),
    );
}

#[test]
fn lyapunov_bounds() {
    const REPLICATES: u64 = 20;
    let grid = make_grid(-6.0, 6.0, 1200).unwrap();
    let spec = LyapunovSpec {
        v: LyapunovFn::Log1pSqPlusOne,
        delta: 1.0,
        eps: 5.0,
    };
    let ou = Model::ou();
    let mesh: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
    let gen = check_generator_bound(&spec, &ou, &grid, &mesh);
    let mut tail_ok = true;
    let mut worst_ratio = 0.0f64;
    for rep in 0..REPLICATES {
        let mc = McConfig::new(10_000, 1e-3, 61).replicate(rep);
        let t = estimate_tail_bound(&spec, &ou, (0.0, 1.0), 1.0, &mc, &grid).unwrap();
        tail_ok &= t.pass;
        worst_ratio = worst_ratio.max(t.upper / t.bound);
    }
    let sm = check_supermartingale(&spec, &ou, (0.0, 2.0), &[0.25, 0.5, 0.75, 1.0], &McConfig::new(20_000, 1e-3, 62), &grid)
        .unwrap();
    verdict(
        "Lyapunov",
        gen.pass && tail_ok && sm.pass,
        format!(
            "generator worst={:.3e} (<= 0), tail worst upper/bound={worst_ratio:.3e} over {REPLICATES} replicates, \
             supermartingale worst excess={:.3e}",
            gen.worst_residual, sm.worst_excess
        ),
    );
}

#[test]
fn jump_identities() {
    let mut parts = Vec::new();
    let mut all = true;
    let frozen = Model::Constant { a: 0.0, b: 0.0 };

    // Poisson counts at c = 2, t = 1.
    let n = 20_000;
    let poisson = JumpKernel::new(RateLaw::Constant(2.0), Displacement::point(0.5)).unwrap();
    let origin = suplab::Ensemble::new(0.0, vec![0.0; n]).unwrap();
    let paths = simulate_jump_process(&frozen, &poisson, &origin, &SimConfig::new(n, 1e-2, 1.0, 71).recording_every(100)).unwrap();
    let counts: Vec<f64> = events_per_path(&paths).iter().map(|&c| c as f64).collect();
    let mean = counts.iter().sum::<f64>() / n as f64;
    let tol = 3.0 * (2.0 / n as f64).sqrt();
    all &= (mean - 2.0).abs() <= tol;
    parts.push(format!("poisson mean={mean:.4} (2 +- {tol:.3e})"));

    // Compensator for all three marks.
    let k = JumpKernel::new(RateLaw::Bump { peak: 1.5 }, Displacement::Gaussian { mean: 0.3, var: 0.2 }).unwrap();
    let init = sample_initial(&InitialLaw::Gaussian { mean: 0.0, var: 0.5 }, n, 72, 0).unwrap();
    let paths = simulate_jump_process(&Model::ou(), &k, &init, &SimConfig::new(n, 1e-3, 1.0, 72).recording_every(5)).unwrap();
    for psi in PsiFn::ALL {
        let c = check_jump_compensator(&paths, &k, psi, 1.0).unwrap();
        all &= c.pass;
        parts.push(format!("{} lhs={:.4} rhs={:.4} tol={:.3e}", psi.id(), c.lhs.mean, c.rhs.mean, 3.0 * c.stderr));
    }

    // Resolvent identity: no jumps, large alpha, OU with jumps.
    let jumpy = JumpKernel::new(RateLaw::Bump { peak: 2.0 }, Displacement::Gaussian { mean: 0.5, var: 0.25 }).unwrap();
    let cases = [
        ("K=0", JumpKernel::zero(), 1.0, 10.0),
        ("alpha=50", jumpy, 50.0, 1.0),
        ("OU+jumps", jumpy, 1.0, 10.0),
    ];
    for (name, kernel, alpha, t_max) in cases {
        let r = check_resolvent_identity(&Model::ou(), &kernel, TestFn::Gauss, alpha, (0.0, 0.2), t_max, &McConfig::new(10_000, 1e-2, 73))
            .unwrap();
        all &= r.pass;
        parts.push(format!(
            "resolvent {name} direct={:.4} rhs={:.4} tol={:.3e}",
            r.direct.mean, r.rhs.mean, r.tolerance
        ));
    }

    // Marginals against the perturbed forward equation.
    let grid = make_grid(-6.0, 8.0, 700).unwrap();
    let law = InitialLaw::Gaussian { mean: 0.0, var: 0.5 };
    let scheme = SchemeConfig::implicit(1e-3).recording_every(100);
    for (name, model, kernel) in [
        ("pure jump", frozen.clone(), JumpKernel::new(RateLaw::Constant(1.0), Displacement::Gaussian { mean: 0.5, var: 0.1 }).unwrap()),
        ("OU+jumps", Model::ou(), JumpKernel::new(RateLaw::Bump { peak: 2.0 }, Displacement::Uniform { lo: 0.0, hi: 1.5 }).unwrap()),
    ] {
        let rows = verify_jump_fpe_marginals(&model, &kernel, &law, &grid, &[0.5, 1.0], &scheme, &SimConfig::new(50_000, 1e-3, 1.0, 74))
            .unwrap();
        for r in &rows {
            all &= r.pass;
            parts.push(format!("marginal {name} t={} w1={:.3e} tol={:.3e}", r.checkpoint, r.statistic, r.threshold));
        }
    }
    verdict("jumps", all, parts.join("; "));
}

#[test]
fn capacity_properties() {
    let heat = Model::heat();
    let mc = McConfig::new(20_000, 1e-2, 81);
    let uniform = InitialLaw::Uniform { a: -1.0, b: 1.0 };
    let cover = estimate_capacities(&[OpenSet::interval(-2.0, 2.0).unwrap()], 1.0, &heat, &uniform, 5.0, &mc).unwrap();
    let exact_one = cover[0].estimate.mean == 1.0 && cover[0].estimate.stderr == 0.0;

    let start = InitialLaw::Gaussian { mean: 0.0, var: 0.04 };
    let a = OpenSet::interval(0.5, 1.5).unwrap();
    let b = OpenSet::interval(-1.5, -0.5).unwrap();
    let family = [
        a.clone(),
        OpenSet::interval(0.3, 1.7).unwrap(),
        OpenSet::interval(0.1, 1.9).unwrap(),
        b.clone(),
        a.union(&b),
    ];
    let est = estimate_capacities(&family, 1.0, &heat, &start, 8.0, &mc).unwrap();
    let cap = |i: usize| est[i].estimate.mean;
    let se = |i: usize| est[i].estimate.stderr;
    let monotone = (0..2).all(|i| cap(i) <= cap(i + 1) + 3.0 * combined_stderr(se(i), se(i + 1)));
    let sub_tol = 3.0 * (se(0).powi(2) + se(3).powi(2) + se(4).powi(2)).sqrt();
    let subadditive = cap(4) <= cap(0) + cap(3) + sub_tol;
    verdict(
        "capacity",
        exact_one && monotone && subadditive,
        format!(
            "covering cap={} ; nested {:.4} <= {:.4} <= {:.4} ; cap(A u B)={:.4} <= {:.4} + {:.4} (+{sub_tol:.3e})",
            cover[0].estimate.mean,
            cap(0),
            cap(1),
            cap(2),
            cap(4),
            cap(0),
            cap(3)
        ),
    );
}

#[test]
fn regularity_energy() {
    const REL_TOL: f64 = 0.05;
    const MAX_RATIO: f64 = 1.25;
    let grid = make_grid(-6.0, 6.0, 1200).unwrap();
    let wide = Bump::new(0.0, 5.3, 0.6).unwrap();

    // Frozen Gaussian over [0, T].
    let (var, horizon) = (0.5, 1.0);
    let u = gaussian_density(&grid, 0.0, var).unwrap();
    let frozen = Trajectory::new(grid, vec![0.0, horizon], vec![u.values().to_vec(); 2]).unwrap();
    let e_frozen = sqrt_energy(&frozen, &wide);
    let exact_frozen = horizon / (4.0 * var);
    let rel_frozen = (e_frozen - exact_frozen).abs() / exact_frozen;

    // Heat flow from N(0, 0.25) to T = 0.5: integral of 1 / (4 (0.25 + t)).
    let u0 = gaussian_density(&grid, 0.0, 0.25).unwrap();
    let heat = solve_linear_fpe(&u0, &Model::heat(), 0.5, &SchemeConfig::implicit(1e-3).recording_every(5)).unwrap();
    let e_heat = sqrt_energy(&heat, &wide);
    let exact_heat = 0.25 * 3.0f64.ln();
    let rel_heat = (e_heat - exact_heat).abs() / exact_heat;

    // Porous refinement series.
    let porous = PorousMedia::new(BetaLaw::Cubic, DriftField::Zero, DensityDrift::One);
    let coarse = make_grid(-6.0, 6.0, 300).unwrap();
    let series = energy_series(&coarse, &SchemeConfig::implicit(4e-3).recording_every(5), 3, &Bump::new(0.0, 3.0, 1.0).unwrap(), |g, cfg| {
        solve_porous_media(&gaussian_density(g, 0.0, 0.25)?, &porous, 0.5, cfg)
    })
    .unwrap();
    let worst = series.ratios().into_iter().fold(f64::NEG_INFINITY, f64::max);
    verdict(
        "energy",
        rel_frozen <= REL_TOL && rel_heat <= REL_TOL && worst <= MAX_RATIO,
        format!(
            "frozen {e_frozen:.5} vs {exact_frozen:.5} ; heat {e_heat:.5} vs {exact_heat:.5} (rel tol {REL_TOL}) ; \
             porous ratios worst={worst:.4} (max {MAX_RATIO})"
        ),
    );
}

/// Scenario text with existing keys overridden, so the full `all` suite stays small.
fn reduced(name: &str, overrides: &[(&str, &str)]) -> String {
    let text = fs::read_to_string(bundled(name)).unwrap();
    let out: Vec<String> = text
        .lines()
        .map(|l| {
            let key = l.split('=').next().map(str::trim);
            match overrides.iter().find(|(k, _)| key == Some(*k)) {
                Some((k, v)) => format!("{k} = {v}"),
                None => l.to_string(),
            }
        })
        .collect();
    out.join("\n") + "\n"
}

fn run_binary(scenario: &Path, out: &Path, threads: usize) -> i32 {
    Process::new(env!("CARGO_BIN_EXE_suplab"))
        .arg("all")
        .arg(scenario)
        .arg(out)
        .env("SUPLAB_THREADS", threads.to_string())
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn determinism_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let small = [
        ("sde.n_particles", "4000"),
        ("checks.flow_n", "2000"),
        ("dirichlet.n_paths", "500"),
        ("lyapunov.n_paths", "500"),
        ("lyapunov.seeds", "2"),
        ("jumps.n_paths", "1000"),
        ("jumps.t_max", "3"),
        ("capacity.n_paths", "500"),
    ];
    let mut mismatches = Vec::new();
    let mut files = 0;
    for name in ["heat.scenario", "porous.scenario"] {
        let sc = dir.path().join(name);
        fs::write(&sc, reduced(name, &small)).unwrap();
        let (a, b) = (dir.path().join(format!("{name}.1")), dir.path().join(format!("{name}.8")));
        let codes = (run_binary(&sc, &a, 1), run_binary(&sc, &b, 8));
        if codes.0 != codes.1 || codes.0 == 2 {
            mismatches.push(format!("{name}: exit codes {codes:?}"));
        }
        let Ok(listing) = fs::read_dir(&a) else {
            mismatches.push(format!("{name}: no output"));
            continue;
        };
        let mut entries: Vec<_> = listing.map(|e| e.unwrap().file_name()).collect();
        entries.sort();
        for f in entries {
            files += 1;
            if fs::read(a.join(&f)).unwrap() != fs::read(b.join(&f)).unwrap() {
                mismatches.push(format!("{name}/{}", f.to_string_lossy()));
            }
        }
    }
    verdict(
        "determinism",
        mismatches.is_empty() && files > 10,
        format!("{files} files compared at 1 and 8 threads; mismatches: {mismatches:?}"),
    );
}
