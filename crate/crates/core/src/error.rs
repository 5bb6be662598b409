use thiserror::Error;

/// Failure modes of the solvers, simulators and estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("window too small: tail mass {tail_mass:e} outside the grid exceeds 1e-6")]
    WindowTooSmall { tail_mass: f64 },
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("slice is not normalized (mass {mass})")]
    NotNormalized { mass: f64 },
    #[error("ensemble has no particles")]
    EmptyEnsemble,
    #[error("CFL violation: dt = {dt:e} exceeds stability bound {bound:e}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("mass drift {drift:e} at t = {t} exceeds tolerance")]
    MassDrift { t: f64, drift: f64 },
    #[error("negative density {value:e} at t = {t}, x = {x}")]
    NegativeDensity { t: f64, x: f64, value: f64 },
    #[error("beta is not strictly increasing: beta_r = {beta_r} at r = {r}")]
    NonmonotoneBeta { r: f64, beta_r: f64 },
    #[error("jump kernel rate is unbounded on the grid ({0})")]
    KernelUnbounded(String),
    #[error("negative diffusion coefficient a = {a} at t = {t}, x = {x}")]
    NegativeDiffusion { t: f64, x: f64, a: f64 },
    #[error("trajectory ends at t = {available}, but t = {required} is required")]
    TrajectoryTooShort { required: f64, available: f64 },
    #[error("start point (s = {s}, x = {x}) lies outside the space-time domain")]
    StartOutsideDomain { s: f64, x: f64 },
    #[error("generator bound fails: worst residual {residual:e} at t = {t}, x = {x}")]
    GeneratorBoundFailed { residual: f64, t: f64, x: f64 },
    #[error("jump rate {rate} exceeds the thinning bound {bound} at t = {t}, x = {x}")]
    DominationViolated { rate: f64, bound: f64, t: f64, x: f64 },
    #[error("unknown psi function `{0}`")]
    UnknownPsi(String),
    #[error("checkpoint t = {0} lies outside the trajectory")]
    CheckpointOutsideTrajectory(f64),
    #[error("initial domination fails: excess {excess:e} at x = {x}")]
    InitialDominationFails { x: f64, excess: f64 },
    #[error("unknown catalog id `{0}`")]
    UnknownCatalogId(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
