//! Source-splitting integrator: convection and lane exchange advanced
//! separately within each step.
//!
//! The split construction evolves the convective part and the exchange ODE
//! on half-intervals at doubled rates; only the values at the step
//! endpoints enter any comparison, and there the construction reduces to
//! the plain composition
//!
//! ```text
//!   u^{n+1} = S_source(dt) . S_conv(dt) u^n,
//! ```
//!
//! which is what [`split_step`] computes (identical grid-point values, half
//! the bookkeeping). The source ODE uses forward Euler, matching the
//! unsplit scheme's source treatment, so the split-versus-unsplit gap is a
//! pure splitting error of order `dt`.

use crate::error::Result;
use crate::kernel::KernelWeights;
use crate::model::SystemSpec;
use crate::scheme::{advance, GridSpec, StepOptions, StepWorkspace, SystemState};

/// One convection-only step: the marching formula with the exchange term
/// dropped.
pub fn convective_substep(
    state: &SystemState,
    w: &KernelWeights,
    spec: &SystemSpec,
    grid: &GridSpec,
    dt: f64,
) -> Result<SystemState> {
    convective_substep_with(state, w, spec, grid, dt, &StepOptions::default())
}

pub fn convective_substep_with(
    state: &SystemState,
    w: &KernelWeights,
    spec: &SystemSpec,
    grid: &GridSpec,
    dt: f64,
    opts: &StepOptions,
) -> Result<SystemState> {
    let mut ws = StepWorkspace::new(state.n_lanes(), state.n_cells(), w.n_eta);
    let mut next = state.clone();
    advance(state, &mut next, w, spec, grid, dt, false, opts, &mut ws)?;
    Ok(next)
}

/// One forward-Euler step of the exchange ODE, `u_i += dt R_i`, with the
/// convolved fields taken from the current state. Requires
/// `dt |S|_Lip < 1/2` so the Euler step preserves positivity.
pub fn source_substep(
    state: &SystemState,
    w: &KernelWeights,
    spec: &SystemSpec,
    grid: &GridSpec,
    dt: f64,
) -> Result<SystemState> {
    source_substep_with(state, w, spec, grid, dt, &StepOptions::default())
}

pub fn source_substep_with(
    state: &SystemState,
    w: &KernelWeights,
    spec: &SystemSpec,
    grid: &GridSpec,
    dt: f64,
    opts: &StepOptions,
) -> Result<SystemState> {
    debug_assert!(
        dt * spec.source_lipschitz < 0.5,
        "Euler source step too large: dt |S|_Lip = {}",
        dt * spec.source_lipschitz
    );
    let n = state.n_cells();
    let n_lanes = state.n_lanes();
    let mut next = state.clone();
    next.t = state.t + dt;
    if n_lanes <= 1 {
        return Ok(next);
    }

    let mut ws = StepWorkspace::new(n_lanes, n, w.n_eta);
    ws.refresh_convolutions(state, w, opts);

    let mut exch = vec![0.0; n_lanes + 1];
    for i in 0..n {
        let x = grid.x_center(i);
        for k in 1..n_lanes {
            exch[k] = crate::model::source_exchange(
                spec,
                k,
                x,
                state.u[k - 1][i],
                state.u[k][i],
                ws.c_center[k - 1][i],
                ws.c_center[k][i],
            );
        }
        for k in 0..n_lanes {
            next.u[k][i] = state.u[k][i] + dt * (exch[k] - exch[k + 1]);
        }
    }
    Ok(next)
}

/// One Lie (Godunov) splitting step: convection, then exchange.
pub fn split_step(
    state: &SystemState,
    w: &KernelWeights,
    spec: &SystemSpec,
    grid: &GridSpec,
    dt: f64,
) -> Result<SystemState> {
    split_step_with(state, w, spec, grid, dt, &StepOptions::default())
}

pub fn split_step_with(
    state: &SystemState,
    w: &KernelWeights,
    spec: &SystemSpec,
    grid: &GridSpec,
    dt: f64,
    opts: &StepOptions,
) -> Result<SystemState> {
    let mid = convective_substep_with(state, w, spec, grid, dt, opts)?;
    let mut out = source_substep_with(&mid, w, spec, grid, dt, opts)?;
    out.t = state.t + dt;
    Ok(out)
}

/// The half-interval construction evaluated at the step endpoint: the
/// convective solution is advanced at doubled rate over the first half
/// interval and the exchange at doubled rate over the second. At `t + dt`
/// this is exactly one doubled-rate half-step of each operator, i.e. the
/// same two-map composition as [`split_step`].
pub fn half_interval_endpoint(
    state: &SystemState,
    w: &KernelWeights,
    spec: &SystemSpec,
    grid: &GridSpec,
    dt: f64,
) -> Result<SystemState> {
    // doubled rate over dt/2 advances the convective solution by dt
    let half = 0.5 * dt;
    let mid = convective_substep(state, w, spec, grid, 2.0 * half)?;
    let mut out = source_substep(&mid, w, spec, grid, 2.0 * half)?;
    out.t = state.t + dt;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::discretize;
    use crate::model::{KernelSpec, LaneModel, SystemSpec};
    use crate::scheme::step;

    fn toy_grid(n: usize, dx: f64, lambda: f64) -> GridSpec {
        GridSpec::new(0.0, n as f64 * dx, n, 1.0 / 3.0, 1.0)
            .unwrap()
            .with_lambda(lambda)
            .unwrap()
    }

    fn bump(n: usize, lo: usize, hi: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut u = vec![0.0; n];
        for (i, v) in u.iter_mut().enumerate().take(hi).skip(lo) {
            *v = f(i);
        }
        u
    }

    #[test]
    fn constant_interior_state_is_unchanged_by_convection() {
        let spec = SystemSpec::single_lane_lwr(1.5, 0.2);
        let grid = toy_grid(50, 0.1, 0.05);
        let w = discretize(&spec.kernel, grid.dx, 2).unwrap();
        let u = bump(50, 10, 40, |_| 0.4);
        let state = SystemState::new(0.0, vec![u]);
        let next = convective_substep(&state, &w, &spec, &grid, grid.dt).unwrap();
        for i in 15..35 {
            assert_eq!(next.u[0][i], 0.4);
        }
    }

    #[test]
    fn convective_substep_is_bit_identical_to_single_lane_step() {
        // for one lane the exchange vanishes structurally, so the unsplit
        // step and the convective substep must agree exactly
        let spec = SystemSpec::single_lane_lwr(1.5, 0.3);
        let grid = toy_grid(60, 0.1, 0.05);
        let w = discretize(&spec.kernel, grid.dx, 3).unwrap();
        let u = bump(60, 12, 48, |i| 0.4 + 0.4 * ((i as f64) * 0.61).sin().powi(2));
        let state = SystemState::new(0.0, vec![u]);
        let unsplit = step(&state, &w, &spec, &grid).unwrap();
        let conv = convective_substep(&state, &w, &spec, &grid, grid.dt).unwrap();
        assert_eq!(unsplit.u, conv.u);
    }

    #[test]
    fn source_substep_keeps_identical_lanes_unchanged() {
        let spec = SystemSpec::new(
            vec![LaneModel::lwr(2.0), LaneModel::lwr(2.0)],
            KernelSpec::linear(0.2),
        );
        let grid = toy_grid(40, 0.1, 0.05);
        let w = discretize(&spec.kernel, grid.dx, 2).unwrap();
        let u = bump(40, 10, 30, |i| 0.2 + 0.01 * (i as f64));
        let state = SystemState::new(0.0, vec![u.clone(), u.clone()]);
        let next = source_substep(&state, &w, &spec, &grid, grid.dt).unwrap();
        assert_eq!(next.u[0], u);
        assert_eq!(next.u[1], u);
    }

    #[test]
    fn source_substep_moves_mass_between_lanes_at_exchange_rate() {
        // uniform plateaus u1 = 0.5, u2 = 0.2: on the plateau interior the
        // convolved values equal the densities and S = 0.6125
        let spec = SystemSpec::two_lane_lwr(0.2);
        let grid = toy_grid(60, 0.1, 0.05);
        let w = discretize(&spec.kernel, grid.dx, 2).unwrap();
        let u1 = bump(60, 10, 50, |_| 0.5);
        let u2 = bump(60, 10, 50, |_| 0.2);
        let state = SystemState::new(0.0, vec![u1, u2]);
        let dt = grid.dt;
        let next = source_substep(&state, &w, &spec, &grid, dt).unwrap();
        for i in 20..40 {
            assert!((next.u[0][i] - (0.5 - dt * 0.6125)).abs() < 1e-15);
            assert!((next.u[1][i] - (0.2 + dt * 0.6125)).abs() < 1e-15);
            // pointwise mass exchange balances exactly
            let total = next.u[0][i] + next.u[1][i];
            assert!((total - 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn single_lane_source_substep_is_identity() {
        let spec = SystemSpec::single_lane_lwr(2.0, 0.2);
        let grid = toy_grid(30, 0.1, 0.05);
        let w = discretize(&spec.kernel, grid.dx, 2).unwrap();
        let u = bump(30, 5, 25, |i| (i as f64) / 30.0);
        let state = SystemState::new(0.0, vec![u.clone()]);
        let next = source_substep(&state, &w, &spec, &grid, grid.dt).unwrap();
        assert_eq!(next.u[0], u);
    }

    #[test]
    fn split_step_reduces_to_convection_without_source() {
        let spec = SystemSpec::single_lane_lwr(1.5, 0.2);
        let grid = toy_grid(50, 0.1, 0.05);
        let w = discretize(&spec.kernel, grid.dx, 2).unwrap();
        let u = bump(50, 10, 40, |i| 0.6 * ((i as f64) * 0.37).sin().powi(2));
        let state = SystemState::new(0.0, vec![u]);
        let split = split_step(&state, &w, &spec, &grid, grid.dt).unwrap();
        let conv = convective_substep(&state, &w, &spec, &grid, grid.dt).unwrap();
        assert_eq!(split.u, conv.u);
    }

    #[test]
    fn split_step_reduces_to_source_where_flux_vanishes() {
        // on a plateau interior both f-jumps and u-jumps vanish, so the
        // convective substep is the identity there and the split step
        // reduces to the exchange update alone
        let spec = SystemSpec::two_lane_lwr(0.2);
        let grid = toy_grid(40, 0.1, 0.05);
        let w = discretize(&spec.kernel, grid.dx, 2).unwrap();
        let u1 = bump(40, 8, 32, |_| 0.5);
        let u2 = bump(40, 8, 32, |_| 0.1);
        let state = SystemState::new(0.0, vec![u1, u2]);
        let split = split_step(&state, &w, &spec, &grid, grid.dt).unwrap();
        let src = source_substep(&state, &w, &spec, &grid, grid.dt).unwrap();
        for k in 0..2 {
            // stay clear of the plateau edges by the kernel reach
            for i in 12..28 {
                assert_eq!(split.u[k][i], src.u[k][i], "lane {k} cell {i}");
            }
        }
    }

    #[test]
    fn half_interval_endpoint_equals_lie_composition() {
        let spec = SystemSpec::two_lane_linear_flux(0.2);
        let grid = toy_grid(50, 0.1, 0.05);
        let w = discretize(&spec.kernel, grid.dx, 2).unwrap();
        let u1 = bump(50, 10, 40, |i| 0.5 * ((i as f64) * 0.45).sin().powi(2));
        let u2 = bump(50, 10, 40, |i| 0.4 * ((i as f64) * 0.29).cos().powi(2));
        let state = SystemState::new(0.0, vec![u1, u2]);
        let a = split_step(&state, &w, &spec, &grid, grid.dt).unwrap();
        let b = half_interval_endpoint(&state, &w, &spec, &grid, grid.dt).unwrap();
        for k in 0..2 {
            for i in 0..50 {
                assert!(
                    (a.u[k][i] - b.u[k][i]).abs() <= 1e-13,
                    "lane {k} cell {i}: {} vs {}",
                    a.u[k][i],
                    b.u[k][i]
                );
            }
        }
    }

    #[test]
    fn substeps_conserve_mass_separately() {
        let spec = SystemSpec::two_lane_lwr(0.2);
        let grid = toy_grid(60, 0.1, 0.05);
        let w = discretize(&spec.kernel, grid.dx, 2).unwrap();
        let u1 = bump(60, 10, 45, |i| 0.7 * ((i as f64) * 0.53).sin().powi(2));
        let u2 = bump(60, 10, 45, |i| 0.6 * ((i as f64) * 0.31).cos().powi(2));
        let state = SystemState::new(0.0, vec![u1, u2]);
        let mass = |s: &SystemState| -> f64 {
            s.u.iter().map(|lane| lane.iter().sum::<f64>()).sum::<f64>() * grid.dx
        };
        let m0 = mass(&state);
        let conv = convective_substep(&state, &w, &spec, &grid, grid.dt).unwrap();
        assert!((mass(&conv) - m0).abs() <= 1e-13 * m0);
        let src = source_substep(&state, &w, &spec, &grid, grid.dt).unwrap();
        assert!((mass(&src) - m0).abs() <= 1e-13 * m0);
        // and both substeps preserve the invariant region
        for s in [&conv, &src] {
            assert!(s.min_density() >= -1e-12 && s.max_density() <= 1.0 + 1e-12);
        }
    }
}
