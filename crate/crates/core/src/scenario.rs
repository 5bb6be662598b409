//! Typed experiment description and spot-check validation of the standing
//! hypotheses (ellipticity, monotone nonlinearity, step-size stability,
//! window size, jump domination).

use std::fmt;

use crate::catalog::{LyapunovFn, TerminalFn, TestFn};
use crate::coeffs::{Coefficients, CoefficientModel, PorousMedia};
use crate::fpe::{Domain, SchemeConfig, Theta};
use crate::grid::SpatialGrid;
use crate::jumps::JumpKernel;
use crate::potential::OpenSet;
use crate::sde::InitialLaw;

/// Linear coefficients or a porous-media triple.
#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    Linear(CoefficientModel<f64>),
    Porous(PorousMedia),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimator {
    pub n_particles: usize,
    pub dt: f64,
    /// 0 selects Silverman's rule.
    pub bandwidth: f64,
    pub seed: u64,
    pub kde_refresh: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletBlock {
    pub domain: Domain,
    pub terminal: TerminalFn,
    pub probe_s: Vec<f64>,
    pub probe_x: Vec<f64>,
    pub n_paths: usize,
    pub dt: f64,
    pub bias_budget: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovBlock {
    pub v: LyapunovFn,
    pub delta: f64,
    pub eps: f64,
    pub x0: f64,
    pub seeds: usize,
    pub n_paths: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpBlock {
    pub kernel: JumpKernel,
    /// Compensator checkpoint.
    pub t: f64,
    pub f: TestFn,
    pub alpha: f64,
    pub t_max: f64,
    pub x0: f64,
    pub n_paths: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityBlock {
    pub set: OpenSet,
    pub alpha: f64,
    pub t_max: f64,
    pub n_paths: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: SpatialGrid<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub theta: Theta,
    pub dynamics: Dynamics,
    pub allow_degenerate: bool,
    pub init: InitialLaw,
    pub estimator: Estimator,
    /// Elapsed times at which marginals are compared.
    pub checkpoints: Vec<f64>,
    pub dirichlet: Option<DirichletBlock>,
    pub lyapunov: Option<LyapunovBlock>,
    pub jumps: Option<JumpBlock>,
    pub capacity: Option<CapacityBlock>,
}

impl Scenario {
    pub fn scheme(&self) -> SchemeConfig<f64> {
        match self.theta {
            Theta::Explicit => SchemeConfig::explicit(self.dt),
            Theta::Implicit => SchemeConfig::implicit(self.dt),
        }
    }

    /// Time mesh of 11 points over `[0, T]` used for spot checks.
    pub fn time_mesh(&self) -> Vec<f64> {
        (0..=10).map(|k| self.horizon * k as f64 / 10.0).collect()
    }
}

/// Outcome of one spot check.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionCheck {
    pub name: &'static str,
    /// Scenario key the check is attributed to.
    pub key: &'static str,
    pub pass: bool,
    pub value: f64,
    /// Worst sample point `(t, x)`, when meaningful.
    pub worst: Option<(f64, f64)>,
    pub detail: String,
}

impl fmt::Display for ConditionCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} [{}] value={}",
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.key,
            self.value
        )?;
        if let Some((t, x)) = self.worst {
            write!(f, " worst=(t={t}, x={x})")?;
        }
        if !self.detail.is_empty() {
            write!(f, " {}", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<ConditionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Cell centers and edges.
fn sample_points(grid: &SpatialGrid<f64>) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..=grid.n_cells()).map(|i| grid.edge(i)).collect();
    xs.extend(grid.centers());
    xs
}

/// Smallest value of `g(t, x)` over the mesh and the grid sample points.
fn sampled_min(times: &[f64], grid: &SpatialGrid<f64>, g: impl Fn(f64, f64) -> f64) -> (f64, (f64, f64)) {
    let mut worst = (f64::INFINITY, (0.0, 0.0));
    for &t in times {
        for x in sample_points(grid) {
            let v = g(t, x);
            if !(v >= worst.0) {
                worst = (v, (t, x));
            }
        }
    }
    worst
}

fn ellipticity<C: Coefficients<f64> + ?Sized>(c: &C, sc: &Scenario) -> ConditionCheck {
    let (min_a, at) = sampled_min(&sc.time_mesh(), &sc.grid, |t, x| c.diffusion(t, x));
    let pass = min_a > 0.0;
    ConditionCheck {
        name: "T1",
        key: "coeffs.model",
        pass,
        value: min_a,
        worst: Some(at),
        detail: if pass {
            format!("C={}", 1.0 / min_a)
        } else {
            "diffusion degenerates".into()
        },
    }
}

/// Density levels `r` at which the porous nonlinearity is sampled.
fn density_levels(sc: &Scenario) -> Vec<f64> {
    let top = sc
        .init
        .density(&sc.grid)
        .map(|u| u.values().iter().copied().fold(0.0, f64::max))
        .unwrap_or(1.0);
    (0..=20).map(|k| top * k as f64 / 20.0).collect()
}

fn monotone_beta(p: &PorousMedia, sc: &Scenario) -> ConditionCheck {
    let levels = density_levels(sc);
    let (min_br, at) = sampled_min(&levels, &sc.grid, |r, x| p.beta.beta_r(x, r));
    let at_zero = sc
        .grid
        .centers()
        .into_iter()
        .map(|x| p.beta.beta(x, 0.0).abs())
        .fold(0.0, f64::max);
    ConditionCheck {
        name: "H_beta_1",
        key: "coeffs.beta",
        pass: min_br > 0.0 && at_zero == 0.0,
        value: min_br,
        worst: None,
        detail: format!("r in [0, {}] at x={}, |beta(x,0)|<={at_zero}", levels[levels.len() - 1], at.1),
    }
}

fn stability(sc: &Scenario) -> ConditionCheck {
    let times = sc.time_mesh();
    let (max_a, max_b) = match &sc.dynamics {
        Dynamics::Linear(m) => times.iter().fold((0.0f64, 0.0f64), |(a, b), &t| {
            let (ma, mb) = m.bounds_on_grid(t, &sc.grid);
            (a.max(ma), b.max(mb))
        }),
        Dynamics::Porous(p) => {
            let mut acc = (0.0f64, 0.0f64);
            for r in density_levels(sc) {
                for x in sc.grid.centers() {
                    acc.0 = acc.0.max(p.diffusion_at(x, r));
                    acc.1 = acc.1.max(p.drift_at(x, r).abs());
                }
            }
            acc
        }
    };
    let bound = sc.scheme().stability_bound(max_a, max_b, sc.grid.dx());
    ConditionCheck {
        name: "CFL",
        key: "time.dt",
        pass: sc.dt <= bound,
        value: sc.dt,
        worst: None,
        detail: format!("bound={bound}"),
    }
}

fn window(sc: &Scenario) -> ConditionCheck {
    let res = sc.init.density(&sc.grid);
    ConditionCheck {
        name: "init_window",
        key: "init.law",
        pass: res.is_ok(),
        value: sc.grid.x_max() - sc.grid.x_min(),
        worst: None,
        detail: res.err().map(|e| e.to_string()).unwrap_or_default(),
    }
}

fn checkpoints(sc: &Scenario) -> ConditionCheck {
    let bad = sc
        .checkpoints
        .iter()
        .copied()
        .find(|&t| !(0.0..=sc.horizon * (1.0 + 1e-12)).contains(&t));
    ConditionCheck {
        name: "checkpoints",
        key: "checks.checkpoints",
        pass: bad.is_none(),
        value: bad.unwrap_or(0.0),
        worst: None,
        detail: String::new(),
    }
}

fn jump_checks(j: &JumpBlock, sc: &Scenario) -> Vec<ConditionCheck> {
    let (max_c, at) = sampled_min(&sc.time_mesh(), &sc.grid, |t, x| -j.kernel.rate(t, x));
    let lambda = j.kernel.bound();
    vec![
        ConditionCheck {
            name: "jump_domination",
            key: "jumps.bound",
            pass: -max_c <= lambda,
            value: -max_c,
            worst: Some(at),
            detail: format!("lambda={lambda}"),
        },
        ConditionCheck {
            name: "jump_step",
            key: "time.dt",
            pass: sc.dt * j.kernel.rate.sup() <= 1.0,
            value: sc.dt * j.kernel.rate.sup(),
            worst: None,
            detail: "dt * sup c <= 1".into(),
        },
    ]
}

fn dirichlet_domain(d: &DirichletBlock, sc: &Scenario) -> ConditionCheck {
    let (ok, value) = match d.domain {
        Domain::FullWindow => (true, 0.0),
        Domain::Interval { left, right } => (
            left < right && left >= sc.grid.x_min() && right <= sc.grid.x_max(),
            right - left,
        ),
    };
    let probes_ok = d.probe_x.iter().all(|&x| d.domain.contains(x))
        && d.probe_s.iter().all(|&s| (0.0..sc.horizon).contains(&s));
    ConditionCheck {
        name: "dirichlet_domain",
        key: "dirichlet.left",
        pass: ok && probes_ok,
        value,
        worst: None,
        detail: if probes_ok { String::new() } else { "probe outside (0,T) x D".into() },
    }
}

/// Spot-checks the standing hypotheses of a scenario. Never errors; failures
/// are carried in the report.
pub fn validate_scenario(sc: &Scenario) -> ValidationReport {
    let mut checks = Vec::new();
    match &sc.dynamics {
        Dynamics::Linear(m) => checks.push(ellipticity(m, sc)),
        Dynamics::Porous(p) => checks.push(monotone_beta(p, sc)),
    }
    checks.push(stability(sc));
    checks.push(window(sc));
    checks.push(checkpoints(sc));
    if let Some(j) = &sc.jumps {
        checks.extend(jump_checks(j, sc));
    }
    if let Some(d) = &sc.dirichlet {
        checks.push(dirichlet_domain(d, sc));
    }
    if let Some(c) = &sc.capacity {
        checks.push(ConditionCheck {
            name: "capacity_alpha",
            key: "capacity.alpha",
            pass: c.alpha > 0.0,
            value: c.alpha,
            worst: None,
            detail: String::new(),
        });
    }
    ValidationReport { checks }
}
