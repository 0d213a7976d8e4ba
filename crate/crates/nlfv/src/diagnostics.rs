//! Measured counterparts of the scheme's proven discrete properties:
//! conservation, total variation, the discrete entropy inequality, the
//! monotonicity of the update map, and nested-grid L1 distances.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::kernel::KernelWeights;
use crate::model::SystemSpec;
use crate::scheme::{lf_flux, update_cell, GridSpec, StepOptions, StepWorkspace, SystemState};

/// One row of the per-step diagnostics log.
#[derive(Clone, Debug)]
pub struct DiagRow {
    pub step: usize,
    pub t: f64,
    pub mass_total: f64,
    pub mass_per_lane: Vec<f64>,
    pub tv_per_lane: Vec<f64>,
    pub min_u: f64,
    pub max_u: f64,
}

pub(crate) fn diag_row(step: usize, state: &SystemState, grid: &GridSpec) -> DiagRow {
    let (mass_per_lane, mass_total) = total_mass(state, grid.dx);
    DiagRow {
        step,
        t: state.t,
        mass_total,
        mass_per_lane,
        tv_per_lane: total_variation(state),
        min_u: state.min_density(),
        max_u: state.max_density(),
    }
}

/// Per-lane masses `dx * sum_i u_i` plus their total, summed left to right
/// for reproducibility.
pub fn total_mass(state: &SystemState, dx: f64) -> (Vec<f64>, f64) {
    let per_lane: Vec<f64> = state
        .u
        .iter()
        .map(|lane| lane.iter().sum::<f64>() * dx)
        .collect();
    let total = per_lane.iter().sum();
    (per_lane, total)
}

/// Per-lane total variation including the boundary jumps to the zero
/// exterior.
pub fn total_variation(state: &SystemState) -> Vec<f64> {
    state
        .u
        .iter()
        .map(|lane| {
            if lane.is_empty() {
                return 0.0;
            }
            let mut tv = lane[0].abs();
            for i in 1..lane.len() {
                tv += (lane[i] - lane[i - 1]).abs();
            }
            tv + lane[lane.len() - 1].abs()
        })
        .collect()
}

/// Kruzkov sign convention: `sgn(0) = 0`.
#[inline]
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Per-cell residuals of the discrete entropy inequality for one entropy
/// level `alpha`; non-positive (up to rounding) whenever `state_next` was
/// produced from `state` by one step under the CFL bound.
///
/// With `G_{i+1/2}(a, b) = F_{i+1/2}(a v alpha, b v alpha)
/// - F_{i+1/2}(a ^ alpha, b ^ alpha)` the residual of cell `i` is
///
/// ```text
///   |u_i' - alpha| - |u_i - alpha|
///   + lambda (G_{i+1/2} - G_{i-1/2})
///   + lambda sgn(u_i' - alpha) f(alpha) (nu_{i+1/2} - nu_{i-1/2})
///   - dt sgn(u_i' - alpha) R_i.
/// ```
pub fn entropy_residual(
    state: &SystemState,
    state_next: &SystemState,
    alpha: f64,
    w: &KernelWeights,
    spec: &SystemSpec,
    grid: &GridSpec,
) -> Vec<Vec<f64>> {
    entropy_residual_with(state, state_next, alpha, w, spec, grid, &StepOptions::default())
}

pub fn entropy_residual_with(
    state: &SystemState,
    state_next: &SystemState,
    alpha: f64,
    w: &KernelWeights,
    spec: &SystemSpec,
    grid: &GridSpec,
    opts: &StepOptions,
) -> Vec<Vec<f64>> {
    let n = state.n_cells();
    let n_lanes = state.n_lanes();
    let dt = state_next.t - state.t;
    let lambda = dt / grid.dx;

    let mut ws = StepWorkspace::new(n_lanes, n, w.n_eta);
    ws.refresh_convolutions(state, w, opts);

    let mut out = vec![vec![0.0; n]; n_lanes];
    for k in 0..n_lanes {
        let lane = &spec.lanes[k];
        let u = &state.u[k];
        let up = &state_next.u[k];
        let c_half = &ws.c_half[k];
        let f_alpha = lane.f(alpha);
        let at = |i: isize| -> f64 {
            if i < 0 || i as usize >= n {
                0.0
            } else {
                u[i as usize]
            }
        };
        for i in 0..n {
            let x_l = grid.x_interface(i);
            let x_r = grid.x_interface(i + 1);
            let nu_l = lane.nu(x_l, c_half[i]);
            let nu_r = lane.nu(x_r, c_half[i + 1]);
            let (um, ui, upp) = (at(i as isize - 1), u[i], at(i as isize + 1));

            let g_num = |a: f64, b: f64, nu_if: f64| -> f64 {
                lf_flux(lane, a.max(alpha), b.max(alpha), nu_if, grid.beta, lambda)
                    - lf_flux(lane, a.min(alpha), b.min(alpha), nu_if, grid.beta, lambda)
            };
            let g_r = g_num(ui, upp, nu_r);
            let g_l = g_num(um, ui, nu_l);

            let u_cell: Vec<f64> = (0..n_lanes).map(|kk| state.u[kk][i]).collect();
            let c_cell: Vec<f64> = (0..n_lanes).map(|kk| ws.c_center[kk][i]).collect();
            let r = crate::model::source_net_inflow(spec, k + 1, grid.x_center(i), &u_cell, &c_cell);

            let s = sgn(up[i] - alpha);
            out[k][i] = (up[i] - alpha).abs() - (ui - alpha).abs()
                + lambda * (g_r - g_l)
                + lambda * s * f_alpha * (nu_r - nu_l)
                - dt * s * r;
        }
    }
    out
}

/// The entropy levels checked by default: a coarse grid on `[0, 1]` plus
/// the extreme data values of the run.
pub fn alpha_samples(min_u: f64, max_u: f64) -> Vec<f64> {
    let mut alphas: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    alphas.push(min_u);
    alphas.push(max_u);
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    alphas
}

/// Outcome of the finite-difference monotonicity probe.
#[derive(Clone, Debug)]
pub struct ProbeReport {
    pub trials: usize,
    /// `(trial, lane, argument index, drop)` for each detected decrease
    /// beyond tolerance; argument order is `u_{i-1}, u_i, u_{i+1},
    /// u_i^{k-1}, u_i^{k+1}`.
    pub violations: Vec<(usize, usize, usize, f64)>,
}

impl ProbeReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Probes monotonicity of the update map `H` in its five state arguments
/// with the convolved fields frozen: each argument is perturbed by `+1e-7`
/// (clamped to `[0, 1]`) on random admissible states and the updated value
/// must not decrease by more than `1e-12`.
pub fn monotonicity_probe(
    spec: &SystemSpec,
    grid: &GridSpec,
    trials: usize,
    seed: u64,
) -> ProbeReport {
    let n_lanes = spec.lanes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-7;
    let mut violations = Vec::new();

    for trial in 0..trials {
        // random admissible cell neighborhood: stencil densities plus frozen
        // convolved fields
        let x_l = grid.x_interface(0);
        let x_r = grid.x_interface(1);
        let x_c = grid.x_center(0);
        let c_left: f64 = rng.gen();
        let c_right: f64 = rng.gen();
        let u_left: f64 = rng.gen();
        let u_right: f64 = rng.gen();
        let u_cell: Vec<f64> = (0..n_lanes).map(|_| rng.gen()).collect();
        let c_cell: Vec<f64> = (0..n_lanes).map(|_| rng.gen()).collect();

        for k in 0..n_lanes {
            let eval = |u_l: f64, u_c: f64, u_r: f64, cells: &[f64]| -> f64 {
                update_cell(
                    spec, k, x_l, x_r, x_c, c_left, c_right, u_l, u_c, u_r, cells, &c_cell,
                    grid.beta, grid.lambda, grid.dt,
                )
            };
            let base = eval(u_left, u_cell[k], u_right, &u_cell);

            for arg in 0..5 {
                let mut ul = u_left;
                let mut ur = u_right;
                let mut cells = u_cell.clone();
                match arg {
                    0 => ul = (ul + h).min(1.0),
                    1 => cells[k] = (cells[k] + h).min(1.0),
                    2 => ur = (ur + h).min(1.0),
                    3 => {
                        if k == 0 {
                            continue;
                        }
                        cells[k - 1] = (cells[k - 1] + h).min(1.0);
                    }
                    4 => {
                        if k + 1 >= n_lanes {
                            continue;
                        }
                        cells[k + 1] = (cells[k + 1] + h).min(1.0);
                    }
                    _ => unreachable!(),
                }
                let perturbed = eval(ul, cells[k], ur, &cells);
                if perturbed < base - 1e-12 {
                    violations.push((trial, k, arg, base - perturbed));
                }
            }
        }
    }

    ProbeReport { trials, violations }
}

/// Largest per-cell magnitude of the lane sum of the exchange term,
/// normalized by the largest exchange rate at the same cell; zero up to a
/// rounding per lane since the exchange telescopes.
pub fn source_telescoping_max(
    state: &SystemState,
    w: &KernelWeights,
    spec: &SystemSpec,
    grid: &GridSpec,
    opts: &StepOptions,
) -> f64 {
    let n = state.n_cells();
    let n_lanes = state.n_lanes();
    if n_lanes < 2 {
        return 0.0;
    }
    let mut ws = StepWorkspace::new(n_lanes, n, w.n_eta);
    ws.refresh_convolutions(state, w, opts);

    let mut worst: f64 = 0.0;
    let mut exch = vec![0.0; n_lanes + 1];
    for i in 0..n {
        let x = grid.x_center(i);
        let mut s_max: f64 = 0.0;
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
            s_max = s_max.max(exch[k].abs());
        }
        let mut total = 0.0;
        for k in 0..n_lanes {
            total += exch[k] - exch[k + 1];
        }
        if s_max > 0.0 {
            worst = worst.max(total.abs() / s_max);
        } else {
            worst = worst.max(total.abs());
        }
    }
    worst
}

/// One detected violation of the discrete entropy inequality.
#[derive(Clone, Debug)]
pub struct EntropyViolation {
    pub step: usize,
    pub lane: usize,
    pub cell: usize,
    pub alpha: f64,
    pub residual: f64,
}

/// Result of the verification pass over a full run.
#[derive(Debug)]
pub struct CheckReport {
    pub steps: usize,
    /// Largest entropy residual over all steps, cells and sampled levels.
    pub max_entropy_residual: f64,
    /// Residuals above the tolerance, if any.
    pub entropy_violations: Vec<EntropyViolation>,
    /// Largest per-cell source telescoping defect over the run.
    pub max_telescoping: f64,
    pub mass_drift_rel: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub probe: ProbeReport,
}

/// Tolerance on entropy residuals (rounding headroom on an inequality that
/// holds exactly in real arithmetic).
pub const ENTROPY_TOL: f64 = 1e-12;

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.entropy_violations.is_empty()
            && self.max_telescoping <= 1e-15
            && self.mass_drift_rel.abs() <= 1e-10
            && self.min_u >= -1e-12
            && self.max_u <= 1.0 + 1e-12
            && self.probe.passed()
    }
}

/// Runs a configuration while verifying the discrete entropy inequality,
/// the per-cell source telescoping, mass conservation, the invariant
/// region, and the monotonicity probe.
pub fn check_run(config: &RunConfig, probe_trials: usize, seed: u64) -> Result<CheckReport> {
    let mut config = config.clone();
    config.diagnostics = true;
    let (grid, weights) = crate::scheme::resolve(&config)?;
    let spec = config.spec.clone();
    let opts = StepOptions {
        center: config.center,
        kahan: config.kahan,
    };

    let mut max_residual = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    let mut max_telescoping: f64 = 0.0;
    let mut step_idx = 0usize;
    let out = crate::scheme::run_with_observer(&config, |prev, next| {
        step_idx += 1;
        max_telescoping =
            max_telescoping.max(source_telescoping_max(prev, &weights, &spec, &grid, &opts));
        for alpha in alpha_samples(prev.min_density(), prev.max_density()) {
            let res = entropy_residual_with(prev, next, alpha, &weights, &spec, &grid, &opts);
            for (k, lane) in res.iter().enumerate() {
                for (i, &r) in lane.iter().enumerate() {
                    if r > max_residual {
                        max_residual = r;
                    }
                    if r > ENTROPY_TOL {
                        violations.push(EntropyViolation {
                            step: step_idx,
                            lane: k,
                            cell: i,
                            alpha,
                            residual: r,
                        });
                    }
                }
            }
        }
    })?;

    let first = out.diagnostics.first().expect("diagnostics enabled");
    let last = out.diagnostics.last().expect("diagnostics enabled");
    let mass_drift_rel = if first.mass_total != 0.0 {
        (last.mass_total - first.mass_total) / first.mass_total
    } else {
        last.mass_total
    };
    let min_u = out.diagnostics.iter().map(|r| r.min_u).fold(f64::INFINITY, f64::min);
    let max_u = out
        .diagnostics
        .iter()
        .map(|r| r.max_u)
        .fold(f64::NEG_INFINITY, f64::max);

    Ok(CheckReport {
        steps: out.steps,
        max_entropy_residual: if max_residual.is_finite() { max_residual } else { 0.0 },
        entropy_violations: violations,
        max_telescoping,
        mass_drift_rel,
        min_u,
        max_u,
        probe: monotonicity_probe(&spec, &grid, probe_trials, seed),
    })
}

/// Per-lane L1 distance of two states on identical or 2:1 nested grids.
///
/// The coarse solution is injected piecewise-constantly onto the fine grid
/// and the distance is `dx_fine * sum_i |difference|`.
pub fn l1_distance(
    a: &SystemState,
    grid_a: &GridSpec,
    b: &SystemState,
    grid_b: &GridSpec,
) -> Result<Vec<f64>> {
    if a.n_lanes() != b.n_lanes() {
        return Err(Error::NonNestedGrids {
            dx_a: grid_a.dx,
            dx_b: grid_b.dx,
        });
    }
    let same_domain = (grid_a.x_min - grid_b.x_min).abs() <= 1e-12
        && (grid_a.x_max - grid_b.x_max).abs() <= 1e-12;
    if !same_domain {
        return Err(Error::NonNestedGrids {
            dx_a: grid_a.dx,
            dx_b: grid_b.dx,
        });
    }

    // orient so that `coarse` has the larger cells
    let (coarse, fine, swap) = if grid_a.n_cells <= grid_b.n_cells {
        ((a, grid_a), (b, grid_b), false)
    } else {
        ((b, grid_b), (a, grid_a), true)
    };
    let _ = swap;
    let ratio = fine.1.n_cells / coarse.1.n_cells;
    if coarse.1.n_cells * ratio != fine.1.n_cells || !(ratio == 1 || ratio == 2) {
        return Err(Error::NonNestedGrids {
            dx_a: grid_a.dx,
            dx_b: grid_b.dx,
        });
    }

    let dx_fine = fine.1.dx;
    let mut out = Vec::with_capacity(a.n_lanes());
    for k in 0..a.n_lanes() {
        let uc = &coarse.0.u[k];
        let uf = &fine.0.u[k];
        let mut acc = 0.0;
        for (i, &vf) in uf.iter().enumerate() {
            acc += (uc[i / ratio] - vf).abs();
        }
        out.push(acc * dx_fine);
    }
    Ok(out)
}
