use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use suplab::catalog::{Bump, PsiFn, TerminalFn};
use suplab::fpe::{
    linearize, solve_linear_fpe, solve_linear_fpe_from, solve_porous_media, solve_porous_media_with_stats,
    SchemeConfig, Theta,
};
use suplab::jumps::{
    check_jump_compensator, check_resolvent_identity, events_per_path, simulate_jump_process,
    verify_jump_fpe_marginals, JumpKernel, RateLaw,
};
use suplab::potential::{
    check_generator_bound, check_supermartingale, dirichlet_consistency, estimate_capacities,
    estimate_tail_bound, verify_representation, write_estimates, EstimateRow, LyapunovSpec, OpenSet,
};
use suplab::scenario::{validate_scenario, Dynamics, Scenario};
use suplab::sde::{sample_initial, simulate_paths, simulate_linearized, simulate_self_consistent, InitialLaw, McConfig, SimConfig};
use suplab::stats::{combined_stderr, Estimate};
use suplab::verify::{
    check_domination, check_flow_property, check_superposition, energy_series, write_verdicts,
    FlowSetup, VerdictRow,
};
use suplab::{gaussian_density, l1_distance, Coefficients, Error, Grid, Model, Trajectory};

use crate::config::{ConfigError, ScenarioFile};
use crate::report::Report;

/// Any failure that prevents a run from producing verdicts.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{key}: {message}")]
    Validation { key: String, message: String },
    #[error(transparent)]
    Core(#[from] Error),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

type Result<T> = std::result::Result<T, RunError>;

/// Tolerance on `|mass - 1|` reported by the deterministic solves.
const MASS_TOL: f64 = 1e-10;
/// l1 tolerance against closed-form Gaussian marginals.
const L1_TOL: f64 = 1e-2;
/// Relative tolerance of the closed-form energy reference.
const ENERGY_REL_TOL: f64 = 0.05;
/// Drift offset of the superposition control.
const CONTROL_SHIFT: f64 = 1.0;

pub(crate) struct Ctx<'a> {
    pub file: &'a ScenarioFile,
    pub out: &'a Path,
}

impl Ctx<'_> {
    fn sc(&self) -> &Scenario {
        &self.file.scenario
    }

    fn seed(&self) -> u64 {
        self.sc().estimator.seed
    }

    fn write(&self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.out.join(name))?);
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }

    fn linear_only(&self, what: &str) -> Result<&Model> {
        match &self.sc().dynamics {
            Dynamics::Linear(m) => Ok(m),
            Dynamics::Porous(_) => Err(ConfigError::new("coeffs.model", format!("{what} needs linear coefficients")).into()),
        }
    }

    /// Linear coefficients and their density trajectory; porous dynamics are
    /// linearized along the porous solution.
    fn linear_coeffs(&self, scheme: &SchemeConfig<f64>) -> Result<(Model, Trajectory)> {
        let sc = self.sc();
        let u0 = sc.init.density(&sc.grid)?;
        Ok(match &sc.dynamics {
            Dynamics::Linear(m) => (m.clone(), solve_linear_fpe(&u0, m, sc.horizon, scheme)?),
            Dynamics::Porous(p) => {
                let traj = solve_porous_media(&u0, p, sc.horizon, scheme)?;
                (linearize(&traj, p), traj)
            }
        })
    }

    /// Solver configuration storing every checkpoint.
    fn checkpoint_scheme(&self) -> SchemeConfig<f64> {
        let sc = self.sc();
        let mut g = 0usize;
        for &t in sc.checkpoints.iter().chain([sc.horizon].iter()) {
            g = gcd(g, (t / sc.dt).round() as usize);
        }
        sc.scheme().recording_every(g.max(1))
    }

    /// Solver configuration storing about 200 slices.
    fn dense_scheme(&self) -> SchemeConfig<f64> {
        let sc = self.sc();
        let steps = (sc.horizon / sc.dt).round() as usize;
        sc.scheme().recording_every((steps / 200).max(1))
    }

    fn sim_cfg(&self, n: usize, horizon: f64) -> SimConfig {
        let e = &self.sc().estimator;
        SimConfig::new(n, e.dt, horizon, e.seed)
            .bandwidth(e.bandwidth)
            .refreshing_every(e.kde_refresh)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn sci(x: f64) -> String {
    format!("{x:.6e}")
}

/// Closed-form `(mean, var)` at time `t` for Gaussian initial laws.
fn gaussian_reference(model: &Model, law: &InitialLaw, t: f64) -> Option<(f64, f64)> {
    use suplab::coeffs::TimeLaw;
    let InitialLaw::Gaussian { mean: m, var: v } = *law else { return None };
    let ou = |a: f64, th: f64| v * (-2.0 * th * t).exp() + a * (1.0 - (-2.0 * th * t).exp()) / (2.0 * th);
    match *model {
        Model::Constant { a, b } => Some((m + b * t, v + a * t)),
        Model::OrnsteinUhlenbeck { a, theta } => Some((m * (-theta * t).exp(), ou(a, theta))),
        Model::TimeDependent(TimeLaw::SinDrift) => Some((m + 1.0 - t.cos(), v + t)),
        Model::TimeDependent(TimeLaw::OuSinDrift) => Some((
            m * (-t).exp() + 0.5 * (t.sin() - t.cos() + (-t).exp()),
            ou(1.0, 1.0),
        )),
        _ => None,
    }
}

/// Spot-checks the scenario; any failure is a configuration error except a
/// degenerate diffusion that the scenario explicitly allows.
pub(crate) fn validate(ctx: &Ctx) -> Result<()> {
    let sc = ctx.sc();
    let report = validate_scenario(sc);
    ctx.write("validation.txt", |w| {
        for c in &report.checks {
            writeln!(w, "{c}")?;
        }
        Ok(())
    })?;
    for c in report.failures() {
        if c.name == "T1" && sc.allow_degenerate {
            eprintln!("warning: {c} (allowed by coeffs.allow_degenerate)");
            continue;
        }
        return Err(RunError::Validation {
            key: c.key.to_string(),
            message: c.to_string(),
        });
    }
    Ok(())
}

pub(crate) fn solve_fpe(ctx: &Ctx) -> Result<Report> {
    let sc = ctx.sc();
    let model = ctx.linear_only("solve-fpe")?;
    let u0 = sc.init.density(&sc.grid)?;
    let (traj, stats) = solve_linear_fpe_from(&u0, model, 0.0, sc.horizon, &ctx.checkpoint_scheme())?;
    ctx.write("density.csv", |w| traj.write_csv(w))?;
    let mut r = Report::default();
    deterministic_lines(&mut r, "solve-fpe", &traj, stats.max_mass_error, ctx.seed());
    if let Some((m, v)) = gaussian_reference(model, &sc.init, sc.horizon) {
        let l1 = l1_distance(&traj.last(), &gaussian_density(&sc.grid, m, v)?)?;
        r.push(
            format!("solve-fpe reference t={}", sc.horizon),
            l1 <= L1_TOL,
            format!("l1={} tol={L1_TOL} seed={}", sci(l1), ctx.seed()),
        );
    }
    Ok(r)
}

fn deterministic_lines(r: &mut Report, name: &str, traj: &Trajectory, mass_err: f64, seed: u64) {
    r.push(
        format!("{name} mass"),
        mass_err <= MASS_TOL,
        format!("max_error={} tol={} seed={seed}", sci(mass_err), sci(MASS_TOL)),
    );
    let min = traj.min_value();
    r.push(
        format!("{name} positivity"),
        min >= 0.0,
        format!("min={} tol=0 seed={seed}", sci(min)),
    );
}

pub(crate) fn solve_porous(ctx: &Ctx) -> Result<Report> {
    let sc = ctx.sc();
    let Dynamics::Porous(p) = &sc.dynamics else {
        return Err(ConfigError::new("coeffs.model", "solve-porous needs `coeffs.model = porous`").into());
    };
    let u0 = sc.init.density(&sc.grid)?;
    let (traj, stats) = solve_porous_media_with_stats(&u0, p, sc.horizon, &ctx.checkpoint_scheme())?;
    ctx.write("density.csv", |w| traj.write_csv(w))?;
    let mut r = Report::default();
    deterministic_lines(&mut r, "solve-porous", &traj, stats.max_mass_error, ctx.seed());
    let linear = Model::Constant { a: 2.0, b: 0.0 };
    let heat_like = p.beta == suplab::coeffs::BetaLaw::Linear && p.d == suplab::coeffs::DriftField::Zero;
    if let (true, Some((m, v))) = (heat_like, gaussian_reference(&linear, &sc.init, sc.horizon)) {
        let l1 = l1_distance(&traj.last(), &gaussian_density(&sc.grid, m, v)?)?;
        r.push(
            format!("solve-porous reference t={}", sc.horizon),
            l1 <= L1_TOL,
            format!("l1={} tol={L1_TOL} seed={}", sci(l1), ctx.seed()),
        );
    }
    Ok(r)
}

pub(crate) fn simulate(ctx: &Ctx) -> Result<Report> {
    let sc = ctx.sc();
    let n = sc.estimator.n_particles;
    let cfg = ctx.sim_cfg(n, sc.horizon).within(sc.grid).recording_at(&sc.checkpoints);
    let mut r = Report::default();
    let paths = match &sc.dynamics {
        Dynamics::Linear(m) => {
            let init = sample_initial(&sc.init, n, ctx.seed(), 0)?;
            let paths = simulate_paths(m, &init, &cfg)?;
            if let Some((mean, var)) = gaussian_reference(m, &sc.init, sc.horizon) {
                let xs = paths.marginal(paths.steps()).first_coordinates();
                let est = Estimate::from_samples(&xs);
                let tol = 3.0 * est.stderr + sc.estimator.dt;
                r.push(
                    format!("simulate mean t={}", sc.horizon),
                    (est.mean - mean).abs() <= tol,
                    format!("mean={} exact={} tol={} seed={}", sci(est.mean), sci(mean), sci(tol), ctx.seed()),
                );
                let sq: Vec<f64> = xs.iter().map(|x| (x - est.mean).powi(2)).collect();
                let v = Estimate::from_samples(&sq);
                let tol = 3.0 * v.stderr + sc.estimator.dt;
                r.push(
                    format!("simulate variance t={}", sc.horizon),
                    (v.mean - var).abs() <= tol,
                    format!("var={} exact={} tol={} seed={}", sci(v.mean), sci(var), sci(tol), ctx.seed()),
                );
            }
            paths
        }
        Dynamics::Porous(p) => {
            let run = simulate_self_consistent(p, &sc.init, &sc.grid, &cfg)?;
            for w in &run.warnings {
                eprintln!("warning: {w}");
            }
            let stride = (run.density.len() / 50).max(1);
            ctx.write("kde.csv", |w| run.density.thinned(stride).write_csv(w))?;
            let u0 = sc.init.density(&sc.grid)?;
            let pde = solve_porous_media(&u0, p, sc.horizon, &ctx.checkpoint_scheme())?;
            let rows = check_superposition(&pde, &run.paths, &sc.checkpoints, sc.estimator.bandwidth, ctx.seed())?;
            for row in rows.iter().filter(|row| row.checkpoint > 0.0) {
                r.push(
                    format!("self-consistent t={}", row.checkpoint),
                    row.pass,
                    format!("w1={} tol={} seed={}", sci(row.statistic), sci(row.threshold), ctx.seed()),
                );
            }
            run.paths
        }
    };
    ctx.write("paths.csv", |w| paths.write_csv(w))?;
    r.push(
        "simulate window",
        paths.escaped() == 0,
        format!("escaped={} of {n} tol=0 seed={}", paths.escaped(), ctx.seed()),
    );
    Ok(r)
}

/// Coefficients with the drift shifted by a constant.
struct Shifted<'a> {
    inner: &'a Model,
    by: f64,
}

impl Coefficients<f64> for Shifted<'_> {
    fn diffusion(&self, t: f64, x: f64) -> f64 {
        self.inner.diffusion(t, x)
    }

    fn drift(&self, t: f64, x: f64) -> f64 {
        self.inner.drift(t, x) + self.by
    }
}

fn verdict_lines(r: &mut Report, name: &str, rows: &[VerdictRow], seed: u64) {
    for row in rows {
        r.push(
            format!("{name} t={}", row.checkpoint),
            row.pass,
            format!("statistic={} tol={} seed={seed}", sci(row.statistic), sci(row.threshold)),
        );
    }
}

pub(crate) fn superposition(ctx: &Ctx) -> Result<Report> {
    let sc = ctx.sc();
    let (coeffs, traj) = ctx.linear_coeffs(&ctx.checkpoint_scheme())?;
    let cfg = ctx.sim_cfg(sc.estimator.n_particles, sc.horizon).recording_at(&sc.checkpoints);
    let paths = simulate_linearized(&traj, &coeffs, &cfg)?;
    let bw = sc.estimator.bandwidth;
    let mut rows = check_superposition(&traj, &paths, &sc.checkpoints, bw, ctx.seed())?;
    let mut r = Report::default();
    verdict_lines(&mut r, "superposition", &rows, ctx.seed());
    if ctx.file.checks.control {
        let shifted = Shifted {
            inner: &coeffs,
            by: CONTROL_SHIFT,
        };
        let paths = simulate_linearized(&traj, &shifted, &cfg)?;
        let late: Vec<f64> = sc.checkpoints.iter().copied().filter(|&t| t > 0.0).collect();
        let control = check_superposition(&traj, &paths, &late, bw, ctx.seed())?;
        for row in &control {
            r.push(
                format!("superposition control t={}", row.checkpoint),
                !row.pass,
                format!(
                    "drift+{CONTROL_SHIFT} detected={} statistic={} tol={} seed={}",
                    !row.pass,
                    sci(row.statistic),
                    sci(row.threshold),
                    ctx.seed()
                ),
            );
        }
        rows.extend(control.into_iter().map(|row| VerdictRow {
            check: "superposition_control".into(),
            ..row
        }));
    }
    ctx.write("superposition.csv", |w| write_verdicts(&rows, w))?;
    Ok(r)
}

pub(crate) fn flow(ctx: &Ctx) -> Result<Report> {
    let sc = ctx.sc();
    let ch = &ctx.file.checks;
    if let Dynamics::Porous(_) = sc.dynamics {
        if ch.flow_s + ch.flow_r + ch.flow_t > sc.horizon * (1.0 + 1e-12) {
            return Err(ConfigError::new("checks.flow_t", "s + r + t must not exceed time.horizon").into());
        }
    }
    let (coeffs, _) = ctx.linear_coeffs(&ctx.dense_scheme())?;
    let setup = FlowSetup {
        s: ch.flow_s,
        r: ch.flow_r,
        t: ch.flow_t,
        n: ch.flow_n,
        dt: sc.estimator.dt,
        bandwidth: sc.estimator.bandwidth,
        seed: ctx.seed(),
    };
    let mut r = Report::default();
    let mut rows = Vec::new();
    let main = check_flow_property(&coeffs, &sc.init, &sc.grid, &setup)?;
    r.push(
        format!("flow s={} r={} t={}", setup.s, setup.r, setup.t),
        main.pass,
        format!("w1={} tol={} seed={}", sci(main.w1), sci(main.threshold), ctx.seed()),
    );
    let control = check_flow_property(&coeffs, &sc.init, &sc.grid, &FlowSetup { r: 0.0, ..setup })?;
    let pass = control.w1 <= control.noise_floor;
    r.push(
        "flow control r=0",
        pass,
        format!("w1={} tol={} seed={}", sci(control.w1), sci(control.noise_floor), ctx.seed()),
    );
    rows.push(VerdictRow {
        check: "flow".into(),
        checkpoint: setup.t,
        statistic: main.w1,
        threshold: main.threshold,
        pass: main.pass,
    });
    rows.push(VerdictRow {
        check: "flow_control_r0".into(),
        checkpoint: setup.t,
        statistic: control.w1,
        threshold: control.noise_floor,
        pass,
    });
    ctx.write("flow.csv", |w| write_verdicts(&rows, w))?;
    Ok(r)
}

pub(crate) fn domination(ctx: &Ctx) -> Result<Report> {
    let sc = ctx.sc();
    let ch = &ctx.file.checks;
    let scheme = ctx.checkpoint_scheme();
    let (coeffs, _) = ctx.linear_coeffs(&scheme)?;
    let nu0 = gaussian_density(&sc.grid, ch.nu_mean, ch.nu_var)?;
    let mu0 = sc.init.density(&sc.grid)?;
    let c = match ch.domination_c {
        Some(c) => c,
        None => nu0
            .values()
            .iter()
            .zip(mu0.values())
            .filter(|(&n, _)| n > 0.0)
            .map(|(&n, &m)| n / m)
            .fold(0.0, f64::max),
    };
    if !c.is_finite() {
        return Err(ConfigError::new("checks.nu_var", "nu_0 is not dominated by a multiple of the initial law").into());
    }
    let rows = check_domination(&nu0, c, &mu0, &coeffs, &sc.checkpoints, &scheme)?;
    let mut r = Report::default();
    verdict_lines(&mut r, &format!("domination c={}", sci(c)), &rows, ctx.seed());
    ctx.write("domination.csv", |w| write_verdicts(&rows, w))?;
    Ok(r)
}

fn mc(n: usize, dt: f64, seed: u64) -> McConfig {
    McConfig::new(n, dt, seed)
}

pub(crate) fn dirichlet(ctx: &Ctx) -> Result<Report> {
    let sc = ctx.sc();
    let d = sc
        .dirichlet
        .as_ref()
        .ok_or_else(|| ConfigError::new("dirichlet", "section missing"))?;
    let (coeffs, _) = ctx.linear_coeffs(&ctx.dense_scheme())?;
    let probes: Vec<(f64, f64)> = d
        .probe_s
        .iter()
        .flat_map(|&s| d.probe_x.iter().map(move |&x| (s, x)))
        .collect();
    let res = dirichlet_consistency(
        d.terminal,
        &coeffs,
        d.domain,
        sc.horizon,
        &probes,
        &sc.grid,
        &sc.scheme(),
        &mc(d.n_paths, d.dt, ctx.seed()),
        d.bias_budget,
    )?;
    let mut r = Report::default();
    let mut rows = Vec::new();
    for p in &res {
        r.push(
            format!("dirichlet s={} x={}", p.s, p.x),
            p.pass,
            format!(
                "mc={} pde={} stderr={} tol={} seed={}",
                sci(p.monte_carlo.mean),
                sci(p.pde),
                sci(p.monte_carlo.stderr),
                sci(p.tolerance),
                ctx.seed()
            ),
        );
        rows.push(EstimateRow {
            quantity: format!("rho({};{})", p.s, p.x),
            estimate: p.monte_carlo.mean,
            stderr: p.monte_carlo.stderr,
            bound: p.pde,
            pass: p.pass,
        });
    }
    ctx.write("dirichlet.csv", |w| write_estimates(&rows, w))?;
    Ok(r)
}

pub(crate) fn represent(ctx: &Ctx) -> Result<Report> {
    let sc = ctx.sc();
    let (f, n, dt) = match &sc.dirichlet {
        Some(d) => (d.terminal, d.n_paths, d.dt),
        None => (TerminalFn::Square, sc.estimator.n_particles, sc.estimator.dt),
    };
    let (coeffs, _) = ctx.linear_coeffs(&ctx.dense_scheme())?;
    let mu0 = sc.init.density(&sc.grid)?;
    let rep = verify_representation(f, &coeffs, sc.horizon, &mu0, &sc.scheme(), &mc(n, dt, ctx.seed()))?;
    let mut r = Report::default();
    r.push(
        format!("representation F={}", f.id()),
        rep.pass,
        format!(
            "mc={} pde={} stderr={} tol={} seed={}",
            sci(rep.monte_carlo.mean),
            sci(rep.pde),
            sci(rep.monte_carlo.stderr),
            sci(rep.tolerance),
            ctx.seed()
        ),
    );
    let rows = [EstimateRow {
        quantity: format!("int_{}_dmu_T", f.id()),
        estimate: rep.monte_carlo.mean,
        stderr: rep.monte_carlo.stderr,
        bound: rep.pde,
        pass: rep.pass,
    }];
    ctx.write("represent.csv", |w| write_estimates(&rows, w))?;
    Ok(r)
}

pub(crate) fn lyapunov(ctx: &Ctx) -> Result<Report> {
    let sc = ctx.sc();
    let l = sc
        .lyapunov
        .as_ref()
        .ok_or_else(|| ConfigError::new("lyapunov", "section missing"))?;
    let (coeffs, _) = ctx.linear_coeffs(&ctx.dense_scheme())?;
    let spec = LyapunovSpec {
        v: l.v,
        delta: l.delta,
        eps: l.eps,
    };
    let seed = ctx.seed();
    let mut r = Report::default();
    let mut rows = Vec::new();
    let gen = check_generator_bound(&spec, &coeffs, &sc.grid, &sc.time_mesh());
    r.push(
        format!("lyapunov generator V={}", l.v.id()),
        gen.pass,
        format!("worst={} at=({};{}) tol=1e-12 seed={seed}", sci(gen.worst_residual), gen.t, gen.x),
    );
    if !gen.pass {
        return Ok(r);
    }
    let mut worst: Option<(f64, f64)> = None;
    let mut all = true;
    for rep in 0..l.seeds as u64 {
        let mc = mc(l.n_paths, l.dt, seed).replicate(rep);
        let t = estimate_tail_bound(&spec, &coeffs, (0.0, l.x0), sc.horizon, &mc, &sc.grid)?;
        all &= t.pass;
        if worst.is_none_or(|(u, _)| t.upper > u) {
            worst = Some((t.upper, t.bound));
        }
        rows.push(EstimateRow {
            quantity: format!("tail_rep{rep}"),
            estimate: t.p_hat,
            stderr: (t.p_hat * (1.0 - t.p_hat) / t.n as f64).sqrt(),
            bound: t.bound,
            pass: t.pass,
        });
    }
    if let Some((upper, bound)) = worst {
        r.push(
            format!("lyapunov tail replicates={}", l.seeds),
            all,
            format!("worst_upper={} tol={} seed={seed}", sci(upper), sci(bound)),
        );
    }
    let sm = check_supermartingale(&spec, &coeffs, (0.0, l.x0), &sc.checkpoints, &mc(l.n_paths, l.dt, seed), &sc.grid)?;
    r.push(
        "lyapunov supermartingale",
        sm.pass,
        format!("worst_excess={} tol=0 seed={seed}", sci(sm.worst_excess)),
    );
    for (t, v) in sm.times.iter().zip(&sm.values) {
        rows.push(EstimateRow {
            quantity: format!("discounted_V_t{t}"),
            estimate: v.mean,
            stderr: v.stderr,
            bound: f64::NAN,
            pass: sm.pass,
        });
    }
    ctx.write("lyapunov.csv", |w| write_estimates(&rows, w))?;
    Ok(r)
}

/// Largest divisor of `steps` not exceeding `steps / 200`, at least 1.
fn record_stride(steps: usize) -> usize {
    (1..=(steps / 200).max(1)).rev().find(|&k| steps.is_multiple_of(k)).unwrap_or(1)
}

pub(crate) fn jumps(ctx: &Ctx) -> Result<Report> {
    let sc = ctx.sc();
    let j = sc.jumps.as_ref().ok_or_else(|| ConfigError::new("jumps", "section missing"))?;
    let (coeffs, _) = ctx.linear_coeffs(&ctx.dense_scheme())?;
    let seed = ctx.seed();
    let steps = (sc.horizon / sc.estimator.dt).round() as usize;
    let init = sample_initial(&sc.init, j.n_paths, seed, 0)?;
    let cfg = ctx.sim_cfg(j.n_paths, sc.horizon).recording_every(record_stride(steps));
    let paths = simulate_jump_process(&coeffs, &j.kernel, &init, &cfg)?;
    ctx.write("events.csv", |w| paths.write_events_csv(w))?;
    let mut r = Report::default();
    if let RateLaw::Constant(c) = j.kernel.rate {
        let counts: Vec<f64> = if j.t >= sc.horizon {
            events_per_path(&paths).iter().map(|&k| k as f64).collect()
        } else {
            let mut k = vec![0.0; paths.n_paths()];
            for e in paths.events().iter().filter(|e| e.t <= j.t) {
                k[e.path] += 1.0;
            }
            k
        };
        let est = Estimate::from_samples(&counts);
        let tol = 3.0 * (c * j.t / counts.len() as f64).sqrt();
        r.push(
            format!("jumps poisson t={}", j.t),
            (est.mean - c * j.t).abs() <= tol,
            format!("mean={} exact={} tol={} seed={seed}", sci(est.mean), sci(c * j.t), sci(tol)),
        );
    }
    let mut rows = Vec::new();
    for psi in PsiFn::ALL {
        let c = check_jump_compensator(&paths, &j.kernel, psi, j.t)?;
        let tol = 3.0 * c.stderr;
        r.push(
            format!("jumps compensator psi={} t={}", psi.id(), j.t),
            c.pass,
            format!("lhs={} rhs={} tol={} seed={seed}", sci(c.lhs.mean), sci(c.rhs.mean), sci(tol)),
        );
        rows.push(EstimateRow {
            quantity: format!("compensator_{}", psi.id()),
            estimate: c.lhs.mean,
            stderr: c.stderr,
            bound: c.rhs.mean,
            pass: c.pass,
        });
    }
    ctx.write("compensator.csv", |w| write_estimates(&rows, w))?;
    let mcfg = ctx.sim_cfg(j.n_paths, sc.horizon);
    let marg = verify_jump_fpe_marginals(&coeffs, &j.kernel, &sc.init, &sc.grid, &sc.checkpoints, &ctx.checkpoint_scheme(), &mcfg)?;
    verdict_lines(&mut r, "jumps marginal", &marg, seed);
    ctx.write("jump_marginals.csv", |w| write_verdicts(&marg, w))?;
    Ok(r)
}

pub(crate) fn resolvent(ctx: &Ctx) -> Result<Report> {
    let sc = ctx.sc();
    let j = sc.jumps.as_ref().ok_or_else(|| ConfigError::new("jumps", "section missing"))?;
    let model = ctx.linear_only("resolvent")?;
    let seed = ctx.seed();
    let mc = mc(j.n_paths, sc.estimator.dt, seed);
    let mut r = Report::default();
    let mut rows = Vec::new();
    for (name, kernel) in [("resolvent", j.kernel), ("resolvent K=0", JumpKernel::zero())] {
        let rep = check_resolvent_identity(model, &kernel, j.f, j.alpha, (0.0, j.x0), j.t_max, &mc)?;
        r.push(
            format!("{name} f={} alpha={}", j.f.id(), j.alpha),
            rep.pass,
            format!(
                "direct={} rhs={} tol={} truncation={} seed={seed}",
                sci(rep.direct.mean),
                sci(rep.rhs.mean),
                sci(rep.tolerance),
                sci(rep.truncation_budget)
            ),
        );
        rows.push(EstimateRow {
            quantity: name.replace(' ', "_"),
            estimate: rep.direct.mean,
            stderr: combined_stderr(rep.direct.stderr, rep.rhs.stderr),
            bound: rep.rhs.mean,
            pass: rep.pass,
        });
    }
    ctx.write("resolvent.csv", |w| write_estimates(&rows, w))?;
    Ok(r)
}

pub(crate) fn capacity(ctx: &Ctx) -> Result<Report> {
    let sc = ctx.sc();
    let c = sc.capacity.as_ref().ok_or_else(|| ConfigError::new("capacity", "section missing"))?;
    let model = ctx.linear_only("capacity")?;
    let seed = ctx.seed();
    let pieces: Vec<OpenSet> = c
        .set
        .intervals()
        .iter()
        .map(|&(l, r)| OpenSet::interval(l, r))
        .collect::<std::result::Result<_, _>>()?;
    let mut sets = vec![c.set.clone()];
    sets.extend(pieces.iter().cloned());
    let est = estimate_capacities(&sets, c.alpha, model, &sc.init, c.t_max, &mc(c.n_paths, c.dt, seed))?;
    let whole = &est[0];
    let mut r = Report::default();
    let v = whole.estimate.mean;
    r.push(
        "capacity range",
        (0.0..=1.0).contains(&v),
        format!(
            "cap={} stderr={} truncation={} tol=0 seed={seed}",
            sci(v),
            sci(whole.estimate.stderr),
            sci(whole.truncation_bias)
        ),
    );
    let mut rows = vec![EstimateRow {
        quantity: "cap_G".into(),
        estimate: v,
        stderr: whole.estimate.stderr,
        bound: 1.0,
        pass: (0.0..=1.0).contains(&v),
    }];
    if pieces.len() > 1 {
        for (k, e) in est[1..].iter().enumerate() {
            let tol = 3.0 * combined_stderr(e.estimate.stderr, whole.estimate.stderr);
            let pass = e.estimate.mean <= v + tol;
            r.push(
                format!("capacity monotone piece={k}"),
                pass,
                format!("cap_piece={} cap_G={} tol={} seed={seed}", sci(e.estimate.mean), sci(v), sci(tol)),
            );
            rows.push(EstimateRow {
                quantity: format!("cap_piece{k}"),
                estimate: e.estimate.mean,
                stderr: e.estimate.stderr,
                bound: v,
                pass,
            });
        }
        let sum: f64 = est[1..].iter().map(|e| e.estimate.mean).sum();
        let se = est.iter().map(|e| e.estimate.stderr.powi(2)).sum::<f64>().sqrt();
        let tol = 3.0 * se;
        r.push(
            "capacity subadditive",
            v <= sum + tol,
            format!("cap_G={} sum={} tol={} seed={seed}", sci(v), sci(sum), sci(tol)),
        );
    }
    ctx.write("capacity.csv", |w| write_estimates(&rows, w))?;
    Ok(r)
}

pub(crate) fn energy(ctx: &Ctx) -> Result<Report> {
    let sc = ctx.sc();
    let ch = &ctx.file.checks;
    let h = Bump::new(ch.energy_center, ch.energy_plateau, ch.energy_ramp)?;
    let scheme = ctx.dense_scheme();
    let seed = ctx.seed();
    let mut r = Report::default();
    let solve = |g: &Grid, cfg: &SchemeConfig<f64>| -> suplab::Result<Trajectory> {
        let u0 = sc.init.density(g)?;
        match &sc.dynamics {
            Dynamics::Linear(m) => solve_linear_fpe(&u0, m, sc.horizon, cfg),
            Dynamics::Porous(p) => solve_porous_media(&u0, p, sc.horizon, cfg),
        }
    };
    let mut series_scheme = scheme;
    if sc.theta == Theta::Explicit {
        // Halving dx quarters the explicit bound; the implicit scheme keeps the series stable.
        series_scheme = SchemeConfig::implicit(sc.dt).recording_every(scheme.record_every);
    }
    let series = energy_series(&sc.grid, &series_scheme, ch.energy_levels, &h, solve)?;
    if let Dynamics::Linear(m @ Model::Constant { a, .. }) = &sc.dynamics {
        if let (Some((m0, v0)), Some((m1, v1))) = (
            gaussian_reference(m, &sc.init, 0.0),
            gaussian_reference(m, &sc.init, sc.horizon),
        ) {
            let reach = 6.0 * v1.sqrt();
            let covered = (m0.min(m1) - reach - h.center).abs().max((m0.max(m1) + reach - h.center).abs()) <= h.plateau;
            if covered && *a > 0.0 {
                let exact = (v1 / v0).ln() / (4.0 * a);
                let e = series.values[0];
                let rel = (e - exact).abs() / exact;
                r.push(
                    "energy reference",
                    rel <= ENERGY_REL_TOL,
                    format!("energy={} exact={} rel={} tol={ENERGY_REL_TOL} seed={seed}", sci(e), sci(exact), sci(rel)),
                );
            }
        }
    }
    let ratios = series.ratios();
    let worst = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    r.push(
        format!("energy refinement levels={}", series.values.len()),
        series.bounded(),
        format!("worst_ratio={} tol=1.25 seed={seed}", sci(worst)),
    );
    ctx.write("energy.csv", |w| {
        writeln!(w, "level,n_cells,dt,energy")?;
        for (l, e) in series.values.iter().enumerate() {
            writeln!(
                w,
                "{l},{},{:.16e},{:.16e}",
                sc.grid.n_cells() << l,
                series_scheme.dt / (1u64 << l) as f64,
                e
            )?;
        }
        Ok(())
    })?;
    Ok(r)
}
