//! Kernel-perturbed diffusions: thinning simulation, compensator and
//! resolvent identities, and the marginal cross-check against the perturbed
//! forward equation.

mod identities;
mod kernel;
mod simulate;

pub use identities::{
    check_jump_compensator, check_resolvent_identity, verify_jump_fpe_marginals, CompensatorReport,
    ResolventReport, RESOLVENT_DEPTH,
};
pub use kernel::{Displacement, JumpKernel, RateLaw};
pub use simulate::{events_per_path, simulate_jump_process};

#[cfg(test)]
mod tests;
