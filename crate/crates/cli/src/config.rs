//! Plain-text scenario files: one `section.key = value` per line, `#` starts
//! a comment. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use suplab::catalog::{LyapunovFn, TerminalFn, TestFn};
use suplab::coeffs::{BetaLaw, DensityDrift, DriftField, TimeLaw};
use suplab::fpe::{Domain, Theta};
use suplab::jumps::{Displacement, JumpKernel, RateLaw};
use suplab::potential::OpenSet;
use suplab::scenario::{
    CapacityBlock, DirichletBlock, Dynamics, Estimator, JumpBlock, LyapunovBlock, Scenario,
};
use suplab::sde::InitialLaw;
use suplab::{make_grid, Model, PorousMedia};

/// A configuration problem attributed to a key.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            key: key.into(),
            message: message.into(),
        }
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

const KEYS: &[&str] = &[
    "grid.x_min",
    "grid.x_max",
    "grid.n_cells",
    "time.horizon",
    "time.dt",
    "time.scheme",
    "coeffs.model",
    "coeffs.a",
    "coeffs.b",
    "coeffs.theta",
    "coeffs.beta",
    "coeffs.D",
    "coeffs.b_u",
    "coeffs.allow_degenerate",
    "init.law",
    "init.mean",
    "init.var",
    "init.a",
    "init.b",
    "sde.n_particles",
    "sde.dt",
    "sde.bandwidth",
    "sde.seed",
    "sde.refresh",
    "checks.checkpoints",
    "checks.control",
    "checks.flow_s",
    "checks.flow_r",
    "checks.flow_t",
    "checks.flow_n",
    "checks.nu_mean",
    "checks.nu_var",
    "checks.domination_c",
    "checks.energy_center",
    "checks.energy_plateau",
    "checks.energy_ramp",
    "checks.energy_levels",
    "dirichlet.left",
    "dirichlet.right",
    "dirichlet.F",
    "dirichlet.probe_s",
    "dirichlet.probe_x",
    "dirichlet.n_paths",
    "dirichlet.dt",
    "dirichlet.bias",
    "lyapunov.V",
    "lyapunov.delta",
    "lyapunov.eps",
    "lyapunov.x0",
    "lyapunov.seeds",
    "lyapunov.n_paths",
    "lyapunov.dt",
    "jumps.rate",
    "jumps.displacement",
    "jumps.bound",
    "jumps.t",
    "jumps.f",
    "jumps.alpha",
    "jumps.t_max",
    "jumps.x0",
    "jumps.n_paths",
    "capacity.set",
    "capacity.alpha",
    "capacity.t_max",
    "capacity.n_paths",
    "capacity.dt",
];

/// Settings of the command-line checks that are not part of [`Scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct Checks {
    /// Run the mismatched-drift control next to the superposition check.
    pub control: bool,
    pub flow_s: f64,
    pub flow_r: f64,
    pub flow_t: f64,
    pub flow_n: usize,
    pub nu_mean: f64,
    pub nu_var: f64,
    /// `None`: smallest constant dominating at time 0.
    pub domination_c: Option<f64>,
    pub energy_center: f64,
    pub energy_plateau: f64,
    pub energy_ramp: f64,
    pub energy_levels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub scenario: Scenario,
    pub checks: Checks,
}

struct Raw(BTreeMap<String, String>);

impl Raw {
    fn parse(text: &str) -> Result<Raw> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::new(format!("line {}", n + 1), "expected `section.key = value`"))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(ConfigError::new(k, "unknown key"));
            }
            if map.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(ConfigError::new(k, "duplicate key"));
            }
        }
        Ok(Raw(map))
    }

    fn has_section(&self, s: &str) -> bool {
        self.0.keys().any(|k| k.split('.').next() == Some(s))
    }

    fn str(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn req<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.str(key).ok_or_else(|| ConfigError::new(key, "missing required key"))?;
        v.parse().map_err(|_| ConfigError::new(key, format!("cannot parse `{v}`")))
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.str(key) {
            Some(_) => self.req(key),
            None => Ok(default),
        }
    }

    fn list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.str(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|x| x.trim().parse().map_err(|_| ConfigError::new(key, format!("cannot parse `{x}`"))))
                .collect(),
        }
    }

    fn id<T: FromStr>(&self, key: &str, default: &str) -> Result<T> {
        let v = self.str(key).unwrap_or(default);
        v.parse().map_err(|_| ConfigError::new(key, format!("unknown catalog id `{v}`")))
    }
}

fn parse_set(key: &str, v: &str) -> Result<OpenSet> {
    let bad = || ConfigError::new(key, format!("expected `l..r, l..r`, got `{v}`"));
    let intervals = v
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (l, r) = p.split_once("..").ok_or_else(bad)?;
            Ok((l.trim().parse().map_err(|_| bad())?, r.trim().parse().map_err(|_| bad())?))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    OpenSet::new(intervals).map_err(|e| ConfigError::new(key, e.to_string()))
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(key, format!("must be positive, got {v}")))
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        let raw = Raw::parse(text)?;
        let grid = make_grid(raw.req("grid.x_min")?, raw.req("grid.x_max")?, raw.req("grid.n_cells")?)
            .map_err(|e| ConfigError::new("grid.n_cells", e.to_string()))?;
        let horizon = positive("time.horizon", raw.req("time.horizon")?)?;
        let dt = positive("time.dt", raw.req("time.dt")?)?;
        let theta = match raw.str("time.scheme").unwrap_or("implicit") {
            "implicit" => Theta::Implicit,
            "explicit" => Theta::Explicit,
            other => return Err(ConfigError::new("time.scheme", format!("unknown scheme `{other}`"))),
        };

        let model: String = raw.req("coeffs.model")?;
        let dynamics = match model.as_str() {
            "heat" => Dynamics::Linear(Model::heat()),
            "constant" => Dynamics::Linear(Model::Constant {
                a: raw.or("coeffs.a", 1.0)?,
                b: raw.or("coeffs.b", 0.0)?,
            }),
            "ou" => Dynamics::Linear(Model::OrnsteinUhlenbeck {
                a: raw.or("coeffs.a", 1.0)?,
                theta: raw.or("coeffs.theta", 1.0)?,
            }),
            "porous" => Dynamics::Porous(PorousMedia::new(
                raw.id::<BetaLaw>("coeffs.beta", "linear")?,
                raw.id::<DriftField>("coeffs.D", "zero")?,
                raw.id::<DensityDrift>("coeffs.b_u", "one")?,
            )),
            other => Dynamics::Linear(Model::TimeDependent(
                TimeLaw::from_str(other).map_err(|_| ConfigError::new("coeffs.model", format!("unknown model `{other}`")))?,
            )),
        };
        let allow_degenerate = raw.or("coeffs.allow_degenerate", false)?;

        let init = match raw.str("init.law").unwrap_or("gaussian") {
            "gaussian" => InitialLaw::Gaussian {
                mean: raw.or("init.mean", 0.0)?,
                var: positive("init.var", raw.or("init.var", 0.25)?)?,
            },
            "uniform" => InitialLaw::Uniform {
                a: raw.or("init.a", -1.0)?,
                b: raw.or("init.b", 1.0)?,
            },
            other => return Err(ConfigError::new("init.law", format!("unknown law `{other}`"))),
        };

        let estimator = Estimator {
            n_particles: raw.or("sde.n_particles", 10_000)?,
            dt: positive("sde.dt", raw.or("sde.dt", dt)?)?,
            bandwidth: raw.or("sde.bandwidth", 0.0)?,
            seed: raw.or("sde.seed", 1)?,
            kde_refresh: raw.or("sde.refresh", suplab::sde::DEFAULT_KDE_REFRESH)?,
        };
        let checkpoints = raw.list("checks.checkpoints", &[horizon / 2.0, horizon])?;

        let checks = Checks {
            control: raw.or("checks.control", true)?,
            flow_s: raw.or("checks.flow_s", 0.0)?,
            flow_r: raw.or("checks.flow_r", horizon / 2.0)?,
            flow_t: raw.or("checks.flow_t", horizon / 2.0)?,
            flow_n: raw.or("checks.flow_n", estimator.n_particles)?,
            nu_mean: raw.or("checks.nu_mean", 0.0)?,
            nu_var: positive("checks.nu_var", raw.or("checks.nu_var", 0.5)?)?,
            domination_c: match raw.str("checks.domination_c") {
                None | Some("auto") => None,
                Some(_) => Some(raw.req("checks.domination_c")?),
            },
            energy_center: raw.or("checks.energy_center", 0.5 * (grid.x_min() + grid.x_max()))?,
            energy_plateau: raw.or("checks.energy_plateau", 0.25 * (grid.x_max() - grid.x_min()))?,
            energy_ramp: positive("checks.energy_ramp", raw.or("checks.energy_ramp", 0.2 * (grid.x_max() - grid.x_min()))?)?,
            energy_levels: raw.or("checks.energy_levels", 3)?,
        };

        let dirichlet = if raw.has_section("dirichlet") {
            let (left, right) = (raw.req("dirichlet.left")?, raw.req("dirichlet.right")?);
            Some(DirichletBlock {
                domain: Domain::Interval { left, right },
                terminal: raw.id::<TerminalFn>("dirichlet.F", "square")?,
                probe_s: raw.list("dirichlet.probe_s", &[0.0])?,
                probe_x: raw.list("dirichlet.probe_x", &[0.5 * (left + right)])?,
                n_paths: raw.or("dirichlet.n_paths", estimator.n_particles)?,
                dt: positive("dirichlet.dt", raw.or("dirichlet.dt", estimator.dt)?)?,
                bias_budget: raw.or("dirichlet.bias", 0.01)?,
            })
        } else {
            None
        };

        let lyapunov = if raw.has_section("lyapunov") {
            Some(LyapunovBlock {
                v: raw.id::<LyapunovFn>("lyapunov.V", "log1p_sq_plus_one")?,
                delta: raw.or("lyapunov.delta", 1.0)?,
                eps: positive("lyapunov.eps", raw.or("lyapunov.eps", 10.0)?)?,
                x0: raw.or("lyapunov.x0", 0.0)?,
                seeds: raw.or("lyapunov.seeds", 20)?,
                n_paths: raw.or("lyapunov.n_paths", estimator.n_particles)?,
                dt: positive("lyapunov.dt", raw.or("lyapunov.dt", estimator.dt)?)?,
            })
        } else {
            None
        };

        let jumps = if raw.has_section("jumps") {
            let rate: RateLaw = raw.id("jumps.rate", "constant:1")?;
            let displacement: Displacement = raw.id("jumps.displacement", "gaussian:0,1")?;
            let bound = raw.or("jumps.bound", rate.sup())?;
            let kernel = JumpKernel::with_bound(rate, displacement, bound)
                .map_err(|e| ConfigError::new("jumps.rate", e.to_string()))?;
            Some(JumpBlock {
                kernel,
                t: raw.or("jumps.t", horizon)?,
                f: raw.id::<TestFn>("jumps.f", "gauss")?,
                alpha: positive("jumps.alpha", raw.or("jumps.alpha", 1.0)?)?,
                t_max: positive("jumps.t_max", raw.or("jumps.t_max", 10.0)?)?,
                x0: raw.or("jumps.x0", 0.0)?,
                n_paths: raw.or("jumps.n_paths", estimator.n_particles)?,
            })
        } else {
            None
        };

        let capacity = if raw.has_section("capacity") {
            Some(CapacityBlock {
                set: parse_set("capacity.set", raw.str("capacity.set").unwrap_or(""))?,
                alpha: raw.or("capacity.alpha", 1.0)?,
                t_max: positive("capacity.t_max", raw.or("capacity.t_max", 10.0)?)?,
                n_paths: raw.or("capacity.n_paths", estimator.n_particles)?,
                dt: positive("capacity.dt", raw.or("capacity.dt", estimator.dt)?)?,
            })
        } else {
            None
        };

        Ok(ScenarioFile {
            scenario: Scenario {
                grid,
                horizon,
                dt,
                theta,
                dynamics,
                allow_degenerate,
                init,
                estimator,
                checkpoints,
                dirichlet,
                lyapunov,
                jumps,
                capacity,
            },
            checks,
        })
    }

    /// The effective configuration with every default spelled out; parsing
    /// it gives back `self`.
    pub fn to_text(&self) -> String {
        let mut w = Writer(String::new());
        let sc = &self.scenario;
        let ch = &self.checks;
        w.kv("grid.x_min", sc.grid.x_min());
        w.kv("grid.x_max", sc.grid.x_max());
        w.kv("grid.n_cells", sc.grid.n_cells());
        w.kv("time.horizon", sc.horizon);
        w.kv("time.dt", sc.dt);
        w.kv("time.scheme", if sc.theta == Theta::Implicit { "implicit" } else { "explicit" });
        match &sc.dynamics {
            Dynamics::Linear(Model::Constant { a, b }) if (*a, *b) == (1.0, 0.0) => w.kv("coeffs.model", "heat"),
            Dynamics::Linear(Model::Constant { a, b }) => {
                w.kv("coeffs.model", "constant");
                w.kv("coeffs.a", a);
                w.kv("coeffs.b", b);
            }
            Dynamics::Linear(Model::OrnsteinUhlenbeck { a, theta }) => {
                w.kv("coeffs.model", "ou");
                w.kv("coeffs.a", a);
                w.kv("coeffs.theta", theta);
            }
            Dynamics::Linear(Model::TimeDependent(law)) => w.kv("coeffs.model", law.id()),
            Dynamics::Linear(Model::Linearized(_)) => unreachable!("not expressible in a scenario file"),
            Dynamics::Porous(p) => {
                w.kv("coeffs.model", "porous");
                w.kv("coeffs.beta", p.beta.id());
                w.kv("coeffs.D", p.d.id());
                w.kv("coeffs.b_u", p.b.id());
            }
        }
        w.kv("coeffs.allow_degenerate", sc.allow_degenerate);
        match &sc.init {
            InitialLaw::Gaussian { mean, var } => {
                w.kv("init.law", "gaussian");
                w.kv("init.mean", mean);
                w.kv("init.var", var);
            }
            InitialLaw::Uniform { a, b } => {
                w.kv("init.law", "uniform");
                w.kv("init.a", a);
                w.kv("init.b", b);
            }
            InitialLaw::GridDensity(_) => unreachable!("not expressible in a scenario file"),
        }
        let e = &sc.estimator;
        w.kv("sde.n_particles", e.n_particles);
        w.kv("sde.dt", e.dt);
        w.kv("sde.bandwidth", e.bandwidth);
        w.kv("sde.seed", e.seed);
        w.kv("sde.refresh", e.kde_refresh);
        w.list("checks.checkpoints", &sc.checkpoints);
        w.kv("checks.control", ch.control);
        w.kv("checks.flow_s", ch.flow_s);
        w.kv("checks.flow_r", ch.flow_r);
        w.kv("checks.flow_t", ch.flow_t);
        w.kv("checks.flow_n", ch.flow_n);
        w.kv("checks.nu_mean", ch.nu_mean);
        w.kv("checks.nu_var", ch.nu_var);
        match ch.domination_c {
            Some(c) => w.kv("checks.domination_c", c),
            None => w.kv("checks.domination_c", "auto"),
        }
        w.kv("checks.energy_center", ch.energy_center);
        w.kv("checks.energy_plateau", ch.energy_plateau);
        w.kv("checks.energy_ramp", ch.energy_ramp);
        w.kv("checks.energy_levels", ch.energy_levels);
        if let Some(d) = &sc.dirichlet {
            if let Domain::Interval { left, right } = d.domain {
                w.kv("dirichlet.left", left);
                w.kv("dirichlet.right", right);
            }
            w.kv("dirichlet.F", d.terminal.id());
            w.list("dirichlet.probe_s", &d.probe_s);
            w.list("dirichlet.probe_x", &d.probe_x);
            w.kv("dirichlet.n_paths", d.n_paths);
            w.kv("dirichlet.dt", d.dt);
            w.kv("dirichlet.bias", d.bias_budget);
        }
        if let Some(l) = &sc.lyapunov {
            w.kv("lyapunov.V", l.v.id());
            w.kv("lyapunov.delta", l.delta);
            w.kv("lyapunov.eps", l.eps);
            w.kv("lyapunov.x0", l.x0);
            w.kv("lyapunov.seeds", l.seeds);
            w.kv("lyapunov.n_paths", l.n_paths);
            w.kv("lyapunov.dt", l.dt);
        }
        if let Some(j) = &sc.jumps {
            w.kv("jumps.rate", j.kernel.rate);
            w.kv("jumps.displacement", j.kernel.displacement);
            w.kv("jumps.bound", j.kernel.bound());
            w.kv("jumps.t", j.t);
            w.kv("jumps.f", j.f.id());
            w.kv("jumps.alpha", j.alpha);
            w.kv("jumps.t_max", j.t_max);
            w.kv("jumps.x0", j.x0);
            w.kv("jumps.n_paths", j.n_paths);
        }
        if let Some(c) = &sc.capacity {
            let set: Vec<String> = c.set.intervals().iter().map(|(l, r)| format!("{l}..{r}")).collect();
            w.kv("capacity.set", set.join(", "));
            w.kv("capacity.alpha", c.alpha);
            w.kv("capacity.t_max", c.t_max);
            w.kv("capacity.n_paths", c.n_paths);
            w.kv("capacity.dt", c.dt);
        }
        w.0
    }
}

struct Writer(String);

impl Writer {
    fn kv(&mut self, key: &str, v: impl fmt::Display) {
        writeln!(self.0, "{key} = {v}").expect("writing to a string");
    }

    fn list(&mut self, key: &str, v: &[f64]) {
        let s: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        self.kv(key, s.join(", "));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAT: &str = "grid.x_min = -6\ngrid.x_max = 6\ngrid.n_cells = 1200\ntime.horizon = 0.5\ntime.dt = 1e-3\ncoeffs.model = heat\n";

    #[test]
    fn defaults_and_round_trip() {
        let f = ScenarioFile::parse(HEAT).unwrap();
        assert_eq!(f.scenario.checkpoints, vec![0.25, 0.5]);
        assert_eq!(f.scenario.estimator.dt, 1e-3);
        assert!(f.scenario.dirichlet.is_none());
        let text = f.to_text();
        let again = ScenarioFile::parse(&text).unwrap();
        assert_eq!(again, f);
        assert_eq!(again.to_text(), text);
    }

    #[test]
    fn optional_blocks_round_trip() {
        let text = format!(
            "{HEAT}dirichlet.left = -1\ndirichlet.right = 1\nlyapunov.delta = 0.5\njumps.rate = bump:2\n\
             jumps.displacement = point:0.5\ncapacity.set = -1..-0.5, 0.5..1\n"
        );
        let f = ScenarioFile::parse(&text).unwrap();
        assert_eq!(f.scenario.capacity.as_ref().unwrap().set.intervals().len(), 2);
        assert_eq!(f.scenario.jumps.as_ref().unwrap().kernel.bound(), 2.0);
        let again = ScenarioFile::parse(&f.to_text()).unwrap();
        assert_eq!(again, f);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ScenarioFile::parse(&format!("{HEAT}sde.particles = 5\n")).unwrap_err();
        assert_eq!(err.key, "sde.particles");
        let err = ScenarioFile::parse(&format!("{HEAT}coeffs.beta = quartic\n")).unwrap();
        // Porous-only keys are ignored for linear models.
        assert!(matches!(err.scenario.dynamics, Dynamics::Linear(_)));
        let err = ScenarioFile::parse(&HEAT.replace("heat", "porous").replace("\ncoeffs", "\ncoeffs.beta = quartic\ncoeffs"))
            .unwrap_err();
        assert_eq!(err.key, "coeffs.beta");
    }

    #[test]
    fn missing_and_malformed_values() {
        let err = ScenarioFile::parse(&HEAT.replace("time.dt = 1e-3\n", "")).unwrap_err();
        assert_eq!(err.key, "time.dt");
        let err = ScenarioFile::parse(&HEAT.replace("1200", "many")).unwrap_err();
        assert_eq!(err.key, "grid.n_cells");
        let err = ScenarioFile::parse("grid.x_min -6\n").unwrap_err();
        assert_eq!(err.key, "line 1");
    }
}
