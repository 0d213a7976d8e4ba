//! Solver for the local counterpart system, used as the vanishing-support
//! reference in the kernel-radius studies.
//!
//! The local model replaces the downstream average by the point value:
//! `u_t + (u g(u) nu(u))_x = R(u, u)`. Rather than a separate upwind
//! discretization, the local solution is produced by the same marching
//! scheme with a one-cell kernel: `N_eta = 1` gives `zeta_0 = 1`, so
//! `c_{i+1/2} = u_{i+1}` and `c_i = (u_i + u_{i+1}) / 2`, a consistent
//! Lax-Friedrichs-type discretization of the local system. Sharing the
//! discretization removes scheme-difference confounders from the limit
//! study: a nonlocal run with support `eta = dx` *is* the local run, bit
//! for bit.

use crate::config::RunConfig;
use crate::error::Result;
use crate::scheme::{run, RunOutput};

/// Runs the local counterpart of a configuration: the same setup with the
/// kernel support collapsed to one cell.
pub fn local_run(config: &RunConfig) -> Result<RunOutput> {
    run(&config.clone().with_local_kernel())
}
