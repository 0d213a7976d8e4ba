//! The marching scheme: CFL time-step selection, Lax-Friedrichs-type
//! nonlocal flux, lane-exchange source, and the time loop.
//!
//! One explicit step of lane `k` reads
//!
//! ```text
//!   u_i' = u_i - lambda (F_{i+1/2} - F_{i-1/2}) + dt R_i,
//!   F_{i+1/2}(a, b) = 1/2 nu(x_{i+1/2}, c_{i+1/2}) (f(a) + f(b))
//!                     - beta / (2 lambda) (b - a),
//! ```
//!
//! with all convolved fields `c` evaluated on the pre-step state. Under the
//! CFL bound produced by [`cfl_time_step`] the update is monotone in the
//! five state arguments, densities stay in `[0, 1]`, and total mass over all
//! lanes is conserved exactly up to rounding.
//!
//! The problem is posed on the whole line with compactly supported data; we
//! solve on `[x_min, x_max]` with a zero ghost zone and fail loudly
//! ([`Error::SupportOverflow`]) when the solution support reaches the padded
//! edge, rather than silently reflecting or absorbing mass.

use crate::config::{Integrator, LambdaPolicy, RunConfig};
use crate::diagnostics::{self, DiagRow};
use crate::error::{Error, Result};
use crate::kernel::{self, CenterConvention, KernelWeights};
use crate::model::{LaneModel, SystemSpec};
use crate::splitting;

/// Threshold above which a density near the domain edge is considered part
/// of the solution support (rather than round-off halo).
const SUPPORT_TOL: f64 = 1e-10;

/// Matching tolerance for event times in the run loop.
const TIME_TOL: f64 = 1e-12;

/// Uniform 1-D mesh and time-stepping parameters of one run.
#[derive(Clone, Debug)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    pub n_cells: usize,
    /// Ratio `dt / dx`; zero until a lambda is attached.
    pub lambda: f64,
    /// Time step, always exactly `lambda * dx`.
    pub dt: f64,
    pub t_final: f64,
    /// Numerical viscosity parameter, in `(0, 2/3)`.
    pub beta: f64,
}

impl GridSpec {
    /// Grid geometry without a time step; attach one with
    /// [`GridSpec::with_lambda`] or [`GridSpec::with_cfl_lambda`].
    pub fn new(x_min: f64, x_max: f64, n_cells: usize, beta: f64, t_final: f64) -> Result<Self> {
        let span = x_max - x_min;
        if !(span > 0.0) || n_cells == 0 {
            return Err(Error::InvalidParameter(format!(
                "invalid domain [{x_min}, {x_max}] with {n_cells} cells"
            )));
        }
        let dx = span / n_cells as f64;
        if ((n_cells as f64) * dx - span).abs() > 1e-12 * span.abs() {
            return Err(Error::InvalidParameter(format!(
                "n_cells * dx = {} does not match the domain span {span}",
                n_cells as f64 * dx
            )));
        }
        if !(beta > 0.0 && beta < 2.0 / 3.0) {
            return Err(Error::InvalidParameter(format!("beta = {beta} outside (0, 2/3)")));
        }
        if !(t_final >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "t_final = {t_final} must be non-negative"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            dx,
            n_cells,
            lambda: 0.0,
            dt: 0.0,
            t_final,
            beta,
        })
    }

    /// Same geometry, constructed from a target cell width.
    pub fn from_dx(x_min: f64, x_max: f64, dx: f64, beta: f64, t_final: f64) -> Result<Self> {
        let n = ((x_max - x_min) / dx).round() as usize;
        let grid = Self::new(x_min, x_max, n, beta, t_final)?;
        if (grid.dx - dx).abs() > 1e-12 * dx.abs() {
            return Err(Error::InvalidParameter(format!(
                "dx = {dx} does not divide the domain [{x_min}, {x_max}]"
            )));
        }
        Ok(grid)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::NonPositiveCfl { lambda });
        }
        self.lambda = lambda;
        self.dt = lambda * self.dx;
        Ok(self)
    }

    pub fn with_cfl_lambda(self, spec: &SystemSpec) -> Result<Self> {
        let (lambda, _) = cfl_time_step(&self, spec)?;
        self.with_lambda(lambda)
    }

    /// Center of cell `i`.
    #[inline]
    pub fn x_center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx
    }

    /// Position of interface `j` (left edge of cell `j`).
    #[inline]
    pub fn x_interface(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx
    }
}

/// Piecewise-constant densities of all lanes at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub t: f64,
    /// `u[k][i]`: lane `k`, cell `i`.
    pub u: Vec<Vec<f64>>,
}

impl SystemState {
    pub fn new(t: f64, u: Vec<Vec<f64>>) -> Self {
        Self { t, u }
    }

    pub fn zeros(n_lanes: usize, n_cells: usize) -> Self {
        Self {
            t: 0.0,
            u: vec![vec![0.0; n_cells]; n_lanes],
        }
    }

    pub fn n_lanes(&self) -> usize {
        self.u.len()
    }

    pub fn n_cells(&self) -> usize {
        self.u.first().map_or(0, Vec::len)
    }

    pub fn min_density(&self) -> f64 {
        self.u
            .iter()
            .flat_map(|lane| lane.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_density(&self) -> f64 {
        self.u
            .iter()
            .flat_map(|lane| lane.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Initial datum of one lane.
#[derive(Clone)]
pub enum InitialData {
    Zero,
    Constant(f64),
    /// `sin^2(pi x / 2)` on `(-2, 2)`, zero elsewhere.
    SinSquaredBump,
    /// `cos^2(pi x / 4)` on `(-2, 2)`, zero elsewhere.
    CosSquaredBump,
    /// `height` on `(lo, hi)`, zero elsewhere.
    Indicator { lo: f64, hi: f64, height: f64 },
    /// Arbitrary function, projected with 5-point Gauss-Legendre per cell.
    Custom(std::sync::Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for InitialData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitialData::Zero => write!(f, "Zero"),
            InitialData::Constant(c) => write!(f, "Constant({c})"),
            InitialData::SinSquaredBump => write!(f, "SinSquaredBump"),
            InitialData::CosSquaredBump => write!(f, "CosSquaredBump"),
            InitialData::Indicator { lo, hi, height } => {
                write!(f, "Indicator({height} on ({lo}, {hi}))")
            }
            InitialData::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl InitialData {
    /// Cell average over `[a, b]`. Flat data averages to its exact value on
    /// fully covered cells, so projected plateaus are bitwise constant.
    fn average(&self, a: f64, b: f64) -> f64 {
        use std::f64::consts::PI;
        let width = b - a;
        match self {
            InitialData::Zero => 0.0,
            InitialData::Constant(c) => *c,
            InitialData::SinSquaredBump => {
                // antiderivative of sin^2(pi x / 2) is x/2 - sin(pi x) / (2 pi)
                let anti = |x: f64| 0.5 * x - (PI * x).sin() / (2.0 * PI);
                let (lo, hi) = (a.max(-2.0), b.min(2.0));
                if hi > lo {
                    (anti(hi) - anti(lo)) / width
                } else {
                    0.0
                }
            }
            InitialData::CosSquaredBump => {
                // antiderivative of cos^2(pi x / 4) is x/2 + sin(pi x / 2) / pi
                let anti = |x: f64| 0.5 * x + (0.5 * PI * x).sin() / PI;
                let (lo, hi) = (a.max(-2.0), b.min(2.0));
                if hi > lo {
                    (anti(hi) - anti(lo)) / width
                } else {
                    0.0
                }
            }
            InitialData::Indicator { lo, hi, height } => {
                if a >= *lo && b <= *hi {
                    *height
                } else {
                    let overlap = (b.min(*hi) - a.max(*lo)).max(0.0);
                    height * overlap / width
                }
            }
            InitialData::Custom(f) => gauss5(a, b, |x| f(x)) / width,
        }
    }
}

fn gauss5(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    const X: [f64; 5] = [
        -0.906179845938663992797626878299,
        -0.538469310105683091036314420700,
        0.0,
        0.538469310105683091036314420700,
        0.906179845938663992797626878299,
    ];
    const W: [f64; 5] = [
        0.236926885056189087514264040720,
        0.478628670499366468041291514836,
        0.568888888888888888888888888889,
        0.478628670499366468041291514836,
        0.236926885056189087514264040720,
    ];
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for i in 0..5 {
        acc += W[i] * f(mid + half * X[i]);
    }
    acc * half
}

/// Projects the initial data onto cell averages,
/// `u_i = (1/dx) * integral of u0 over cell i`.
pub fn project_initial_data(u0: &[InitialData], grid: &GridSpec) -> Result<SystemState> {
    let mut state = SystemState::zeros(u0.len(), grid.n_cells);
    for (k, datum) in u0.iter().enumerate() {
        for i in 0..grid.n_cells {
            let a = grid.x_min + i as f64 * grid.dx;
            let b = a + grid.dx;
            let avg = datum.average(a, b);
            if !(-1e-12..=1.0 + 1e-12).contains(&avg) {
                return Err(Error::RangeViolation {
                    lane: k,
                    cell: i,
                    value: avg,
                });
            }
            state.u[k][i] = avg;
        }
    }
    Ok(state)
}

/// Admissible time-step ratio from the CFL condition,
///
/// ```text
///   lambda <= min(1, 4 - 6 beta, 6 beta, 1 - 2 dt |S|_Lip)
///             / (1 + 6 max_k lip_f_k nu_sup_k).
/// ```
///
/// The implicit `dt` on the right is resolved with one fixed-point pass:
/// compute `lambda_0` ignoring the source, set `dt_0 = lambda_0 dx`,
/// recompute once, and return the smaller ratio together with its `dt`.
pub fn cfl_time_step(grid: &GridSpec, spec: &SystemSpec) -> Result<(f64, f64)> {
    let beta = grid.beta;
    let denom = 1.0 + 6.0 * spec.max_lip_f_nu_sup();
    let base = 1.0f64.min(4.0 - 6.0 * beta).min(6.0 * beta);
    let lambda0 = base / denom;
    let dt0 = lambda0 * grid.dx;
    let lambda1 = base.min(1.0 - 2.0 * dt0 * spec.source_lipschitz) / denom;
    let lambda = lambda0.min(lambda1);
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::NonPositiveCfl { lambda });
    }
    Ok((lambda, lambda * grid.dx))
}

/// Lax-Friedrichs-type interface flux for one lane.
#[inline]
pub fn lf_flux(lane: &LaneModel, u_l: f64, u_r: f64, nu_iface: f64, beta: f64, lambda: f64) -> f64 {
    0.5 * nu_iface * (lane.f(u_l) + lane.f(u_r)) - beta / (2.0 * lambda) * (u_r - u_l)
}

/// Options shared by the stepping entry points.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepOptions {
    pub center: CenterConvention,
    /// Compensated summation in the convolution accumulator.
    pub kahan: bool,
}

/// Scratch buffers reused across steps of one run.
pub(crate) struct StepWorkspace {
    /// Interior densities followed by `n_eta + 1` zero ghost cells, per lane.
    padded: Vec<Vec<f64>>,
    /// Interface averages, `n + 2` per lane.
    pub(crate) c_half: Vec<Vec<f64>>,
    /// Cell averages, `n` per lane.
    pub(crate) c_center: Vec<Vec<f64>>,
    /// `f(u_i)` of the lane currently being fluxed.
    fvals: Vec<f64>,
    /// `nu` at the interfaces of the lane currently being fluxed.
    nu_iface: Vec<f64>,
    /// Interface fluxes, `n + 1` per lane.
    flux: Vec<Vec<f64>>,
    /// `g(u_i)` per lane (source precomputation).
    gvals: Vec<Vec<f64>>,
    /// `nu(x_i, c_i)` per lane (source precomputation).
    nu_center: Vec<Vec<f64>>,
    /// Exchange rates `S^k`, one row per interior lane boundary.
    exch_rows: Vec<Vec<f64>>,
}

impl StepWorkspace {
    pub(crate) fn new(n_lanes: usize, n_cells: usize, n_eta: usize) -> Self {
        Self {
            padded: vec![vec![0.0; n_cells + n_eta + 1]; n_lanes],
            c_half: vec![vec![0.0; n_cells + 2]; n_lanes],
            c_center: vec![vec![0.0; n_cells]; n_lanes],
            fvals: vec![0.0; n_cells],
            nu_iface: vec![0.0; n_cells + 1],
            flux: vec![vec![0.0; n_cells + 1]; n_lanes],
            gvals: vec![vec![0.0; n_cells]; n_lanes],
            nu_center: vec![vec![0.0; n_cells]; n_lanes],
            exch_rows: vec![vec![0.0; n_cells]; n_lanes.saturating_sub(1)],
        }
    }

    /// Convolved fields of `state`, refreshed in place.
    pub(crate) fn refresh_convolutions(
        &mut self,
        state: &SystemState,
        w: &KernelWeights,
        opts: &StepOptions,
    ) {
        let n = state.n_cells();
        for (k, lane_u) in state.u.iter().enumerate() {
            self.padded[k][..n].copy_from_slice(lane_u);
            // ghost cells stay zero
            kernel::convolve_into(&mut self.c_half[k], &self.padded[k], &w.zeta, opts.kahan);
            let c_half = &self.c_half[k];
            let centers = &mut self.c_center[k];
            match opts.center {
                CenterConvention::Symmetric => {
                    for (i, c) in centers.iter_mut().enumerate() {
                        *c = 0.5 * (c_half[i] + c_half[i + 1]);
                    }
                }
                CenterConvention::Downwind => {
                    for (i, c) in centers.iter_mut().enumerate() {
                        *c = 0.5 * (c_half[i + 1] + c_half[i + 2]);
                    }
                }
            }
        }
    }
}

/// `out[i] = f(u_i) = u_i g(u_i)`, dispatch hoisted out of the loop.
fn eval_f_into(lane: &LaneModel, u: &[f64], out: &mut [f64]) {
    use crate::model::FluxFactor;
    match &lane.g {
        FluxFactor::Lwr => {
            for (o, &x) in out.iter_mut().zip(u) {
                *o = x * (1.0 - x);
            }
        }
        FluxFactor::Constant => out[..u.len()].copy_from_slice(u),
        FluxFactor::Custom { .. } => {
            for (o, &x) in out.iter_mut().zip(u) {
                *o = lane.f(x);
            }
        }
    }
}

/// `out[i] = g(u_i)`.
fn eval_g_into(lane: &LaneModel, u: &[f64], out: &mut [f64]) {
    use crate::model::FluxFactor;
    match &lane.g {
        FluxFactor::Lwr => {
            for (o, &x) in out.iter_mut().zip(u) {
                *o = 1.0 - x;
            }
        }
        FluxFactor::Constant => out[..u.len()].fill(1.0),
        FluxFactor::Custom { .. } => {
            for (o, &x) in out.iter_mut().zip(u) {
                *o = lane.g(x);
            }
        }
    }
}

/// `out[i] = nu(x(i), c_i)`; `x_of` is only consulted on the generic path
/// (the built-in spatial factor is constant).
fn eval_nu_into(lane: &LaneModel, c: &[f64], out: &mut [f64], x_of: impl Fn(usize) -> f64) {
    use crate::model::{SpatialFactor, VelocityShape};
    let m = c.len();
    match (&lane.eta_factor, &lane.shape) {
        (SpatialFactor::One, VelocityShape::Lwr) => {
            let v = lane.v_scale;
            for (o, &ci) in out[..m].iter_mut().zip(c) {
                *o = v * (1.0 - ci);
            }
        }
        (SpatialFactor::One, VelocityShape::Constant) => out[..m].fill(lane.v_scale),
        _ => {
            for (i, (o, &ci)) in out[..m].iter_mut().zip(c).enumerate() {
                *o = lane.nu(x_of(i), ci);
            }
        }
    }
}

/// One explicit step. Fails with [`Error::SupportOverflow`] when the
/// current state carries mass at the outermost cells (the zero-ghost
/// assumption would silently lose mass past that point).
pub fn step(
    state: &SystemState,
    w: &KernelWeights,
    spec: &SystemSpec,
    grid: &GridSpec,
) -> Result<SystemState> {
    step_with(state, w, spec, grid, &StepOptions::default())
}

/// [`step`] with explicit numerical options.
pub fn step_with(
    state: &SystemState,
    w: &KernelWeights,
    spec: &SystemSpec,
    grid: &GridSpec,
    opts: &StepOptions,
) -> Result<SystemState> {
    let mut ws = StepWorkspace::new(state.n_lanes(), state.n_cells(), w.n_eta);
    let mut next = state.clone();
    advance(state, &mut next, w, spec, grid, grid.dt, true, opts, &mut ws)?;
    Ok(next)
}

/// Core update, written into `next`; `with_source = false` drops the
/// exchange term entirely (used by the splitting integrator's convective
/// substep).
#[allow(clippy::too_many_arguments)]
pub(crate) fn advance(
    state: &SystemState,
    next: &mut SystemState,
    w: &KernelWeights,
    spec: &SystemSpec,
    grid: &GridSpec,
    dt: f64,
    with_source: bool,
    opts: &StepOptions,
    ws: &mut StepWorkspace,
) -> Result<()> {
    let n = grid.n_cells;
    let n_lanes = spec.lanes.len();
    debug_assert_eq!(state.n_lanes(), n_lanes);
    debug_assert_eq!(state.n_cells(), n);
    if spec.per_lane_kernels.is_some() {
        return Err(Error::PerLaneKernelsUnsupported);
    }
    if !(dt > 0.0) {
        return Err(Error::NonPositiveCfl { lambda: dt / grid.dx });
    }

    // Support must stay clear of the padded edges: one cell on the inflow
    // side, the outermost cell on the outflow side.
    for (k, lane_u) in state.u.iter().enumerate() {
        if lane_u[0].abs() > SUPPORT_TOL {
            return Err(Error::SupportOverflow {
                lane: k,
                cell: 0,
                value: lane_u[0],
                t: state.t,
            });
        }
        if lane_u[n - 1].abs() > SUPPORT_TOL {
            return Err(Error::SupportOverflow {
                lane: k,
                cell: n - 1,
                value: lane_u[n - 1],
                t: state.t,
            });
        }
    }

    let lambda = dt / grid.dx;
    let visc = grid.beta / (2.0 * lambda);

    ws.refresh_convolutions(state, w, opts);

    // All interface fluxes of all lanes, from the pre-step state.
    for k in 0..n_lanes {
        let lane = &spec.lanes[k];
        let u = &state.u[k];
        eval_f_into(lane, u, &mut ws.fvals);
        eval_nu_into(lane, &ws.c_half[k][..n + 1], &mut ws.nu_iface, |j| {
            grid.x_interface(j)
        });
        let fvals = &ws.fvals;
        let nu_if = &ws.nu_iface;
        let flux = &mut ws.flux[k];
        flux[0] = 0.5 * nu_if[0] * fvals[0] - visc * u[0];
        for j in 1..n {
            flux[j] = 0.5 * nu_if[j] * (fvals[j - 1] + fvals[j]) - visc * (u[j] - u[j - 1]);
        }
        flux[n] = 0.5 * nu_if[n] * fvals[n - 1] + visc * u[n - 1];
    }

    // Combine: convective update plus the telescoping exchange. Each
    // exchange rate is computed once per cell and reused with both signs, so
    // the per-cell lane sum of the source cancels exactly.
    next.t = state.t + dt;
    if with_source && n_lanes > 1 {
        for k in 0..n_lanes {
            let lane = &spec.lanes[k];
            eval_g_into(lane, &state.u[k], &mut ws.gvals[k]);
            eval_nu_into(lane, &ws.c_center[k], &mut ws.nu_center[k], |i| {
                grid.x_center(i)
            });
        }
        // rate across the boundary between lanes k-1 and k (one-based k):
        // dv = g^{k+1}(b) nu^{k+1}(B) - g^k(a) nu^k(A), S = dv^+ a - dv^- b
        for k in 1..n_lanes {
            let (lo, hi) = (k - 1, k);
            let row = &mut ws.exch_rows[k - 1];
            for i in 0..n {
                let dv = ws.gvals[hi][i] * ws.nu_center[hi][i]
                    - ws.gvals[lo][i] * ws.nu_center[lo][i];
                row[i] = if dv >= 0.0 {
                    dv * state.u[lo][i]
                } else {
                    dv * state.u[hi][i]
                };
            }
        }
        for k in 0..n_lanes {
            let u = &state.u[k];
            let flux = &ws.flux[k];
            let out = &mut next.u[k];
            match (k > 0, k + 1 < n_lanes) {
                (true, true) => {
                    let (head, tail) = ws.exch_rows.split_at(k);
                    let (s_in, s_out) = (&head[k - 1], &tail[0]);
                    for i in 0..n {
                        out[i] = u[i] - lambda * (flux[i + 1] - flux[i])
                            + dt * (s_in[i] - s_out[i]);
                    }
                }
                (false, true) => {
                    let s_out = &ws.exch_rows[0];
                    for i in 0..n {
                        out[i] =
                            u[i] - lambda * (flux[i + 1] - flux[i]) + dt * (0.0 - s_out[i]);
                    }
                }
                (true, false) => {
                    let s_in = &ws.exch_rows[k - 1];
                    for i in 0..n {
                        out[i] = u[i] - lambda * (flux[i + 1] - flux[i]) + dt * (s_in[i] - 0.0);
                    }
                }
                (false, false) => unreachable!("single lane handled by the source-free path"),
            }
        }
    } else {
        for k in 0..n_lanes {
            let u = &state.u[k];
            let flux = &ws.flux[k];
            let out = &mut next.u[k];
            for i in 0..n {
                out[i] = u[i] - lambda * (flux[i + 1] - flux[i]);
            }
        }
    }

    Ok(())
}

/// The full update map of one cell with the convolved fields frozen:
/// `H = u_i - lambda (F_{i+1/2} - F_{i-1/2}) + dt R_i`. Used by the
/// monotonicity probe; `u_cell`/`c_cell` carry the per-lane values at the
/// cell and `u_cell[k]` must equal `u_center`.
#[allow(clippy::too_many_arguments)]
pub fn update_cell(
    spec: &SystemSpec,
    k: usize,
    x_left: f64,
    x_right: f64,
    x_cell: f64,
    c_left: f64,
    c_right: f64,
    u_left: f64,
    u_center: f64,
    u_right: f64,
    u_cell: &[f64],
    c_cell: &[f64],
    beta: f64,
    lambda: f64,
    dt: f64,
) -> f64 {
    let lane = &spec.lanes[k];
    let f_l = lf_flux(lane, u_left, u_center, lane.nu(x_left, c_left), beta, lambda);
    let f_r = lf_flux(lane, u_center, u_right, lane.nu(x_right, c_right), beta, lambda);
    let r = crate::model::source_net_inflow(spec, k + 1, x_cell, u_cell, c_cell);
    u_center - lambda * (f_r - f_l) + dt * r
}

/// Output of [`run`]: snapshots at the requested times plus the optional
/// per-step diagnostics log.
#[derive(Debug)]
pub struct RunOutput {
    pub grid: GridSpec,
    pub lambda: f64,
    pub snapshots: Vec<SystemState>,
    pub diagnostics: Vec<DiagRow>,
    pub steps: usize,
}

impl RunOutput {
    /// The state at `t_final`.
    pub fn final_state(&self) -> &SystemState {
        self.snapshots.last().expect("run always records the final state")
    }
}

/// Resolves a configuration into its grid (with the time step attached) and
/// kernel weights.
pub fn resolve(config: &RunConfig) -> Result<(GridSpec, KernelWeights)> {
    let grid = config.build_grid()?;
    let spec = &config.spec;
    let n_eta = (spec.kernel.eta / grid.dx).round() as usize;
    let weights = kernel::discretize(&spec.kernel, grid.dx, n_eta)?;

    let lambda = match config.lambda {
        LambdaPolicy::Cfl => cfl_time_step(&grid, spec)?.0,
        LambdaPolicy::Fixed(l) => {
            let (bound, _) = cfl_time_step(&grid, spec)?;
            if l > bound {
                log::warn!(
                    "explicit lambda = {l} exceeds the computed CFL bound {bound}; using it verbatim"
                );
            }
            l
        }
    };
    Ok((grid.with_lambda(lambda)?, weights))
}

/// Runs a configuration to its final time.
///
/// Snapshot times (and the final time) are hit exactly by truncating the
/// step that would overshoot them; the truncated step still satisfies the
/// CFL bound. Identical configurations produce bit-identical trajectories.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    run_with_observer(config, |_, _| {})
}

/// [`run`] with a per-step callback receiving the pre- and post-step states;
/// used by the verification pass to check per-step inequalities.
pub fn run_with_observer(
    config: &RunConfig,
    mut observe: impl FnMut(&SystemState, &SystemState),
) -> Result<RunOutput> {
    let (grid, weights) = resolve(config)?;
    let spec = &config.spec;
    let lambda = grid.lambda;

    let opts = StepOptions {
        center: config.center,
        kahan: config.kahan,
    };

    let mut snapshot_times: Vec<f64> = config
        .snapshot_times
        .iter()
        .copied()
        .filter(|&t| t <= grid.t_final + TIME_TOL)
        .collect();
    snapshot_times.sort_by(f64::total_cmp);
    snapshot_times.dedup();
    let mut events = snapshot_times.clone();
    if !events.iter().any(|&t| (t - grid.t_final).abs() <= TIME_TOL) {
        events.push(grid.t_final);
    }

    let mut state = project_initial_data(&config.initial, &grid)?;
    let mut next = state.clone();
    let mut ws = StepWorkspace::new(state.n_lanes(), state.n_cells(), weights.n_eta);

    let mut snapshots = Vec::new();
    let mut diagnostics = Vec::new();
    if snapshot_times.first().is_some_and(|&t| t <= TIME_TOL) {
        snapshots.push(state.clone());
    }
    if config.diagnostics {
        diagnostics.push(diagnostics::diag_row(0, &state, &grid));
    }

    let mut steps = 0usize;
    for &event in &events {
        if event <= state.t + TIME_TOL {
            continue;
        }
        while state.t < event - TIME_TOL {
            let remaining = event - state.t;
            let (dt_step, truncated) = if remaining < grid.dt * (1.0 - 1e-12) {
                (remaining, true)
            } else {
                (grid.dt, false)
            };
            match config.integrator {
                Integrator::Unsplit => {
                    advance(
                        &state, &mut next, &weights, spec, &grid, dt_step, true, &opts, &mut ws,
                    )?;
                    std::mem::swap(&mut state, &mut next);
                }
                Integrator::Split => {
                    let out =
                        splitting::split_step_with(&state, &weights, spec, &grid, dt_step, &opts)?;
                    next = std::mem::replace(&mut state, out);
                }
            }
            if truncated {
                state.t = event;
            }
            steps += 1;
            // `next` now holds the pre-step state
            observe(&next, &state);
            if config.diagnostics {
                diagnostics.push(diagnostics::diag_row(steps, &state, &grid));
            }
        }
        state.t = event;
        if snapshot_times.iter().any(|&t| (t - event).abs() <= TIME_TOL) {
            snapshots.push(state.clone());
        }
    }

    if snapshots
        .last()
        .is_none_or(|s| (s.t - grid.t_final).abs() > TIME_TOL)
    {
        state.t = grid.t_final;
        snapshots.push(state.clone());
    }

    Ok(RunOutput {
        grid,
        lambda,
        snapshots,
        diagnostics,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::discretize;
    use crate::model::KernelSpec;

    fn toy_grid(n: usize, dx: f64, beta: f64, lambda: f64) -> GridSpec {
        GridSpec::new(0.0, n as f64 * dx, n, beta, 1.0)
            .unwrap()
            .with_lambda(lambda)
            .unwrap()
    }

    #[test]
    fn grid_rejects_bad_beta() {
        assert!(GridSpec::new(0.0, 1.0, 10, 0.7, 1.0).is_err());
        assert!(GridSpec::new(0.0, 1.0, 10, 0.0, 1.0).is_err());
    }

    #[test]
    fn projection_of_constant_is_constant() {
        let grid = GridSpec::new(-1.0, 1.0, 16, 1.0 / 3.0, 1.0).unwrap();
        let state = project_initial_data(&[InitialData::Constant(0.5)], &grid).unwrap();
        assert!(state.u[0].iter().all(|&v| v == 0.5));
    }

    #[test]
    fn projection_rejects_out_of_range_data() {
        let grid = GridSpec::new(-1.0, 1.0, 4, 1.0 / 3.0, 1.0).unwrap();
        let err = project_initial_data(&[InitialData::Constant(1.5)], &grid).unwrap_err();
        assert!(matches!(err, Error::RangeViolation { .. }));
    }

    #[test]
    fn sin_bump_cell_average_matches_riemann_oracle() {
        // cell [0, 0.00625): exact antiderivative vs 1e4-point midpoint sum
        let grid = GridSpec::from_dx(-4.0, 4.0, 0.00625, 1.0 / 3.0, 0.5).unwrap();
        let state = project_initial_data(&[InitialData::SinSquaredBump], &grid).unwrap();
        let i = (4.0 / 0.00625) as usize; // cell starting at x = 0
        let m = 10_000;
        let h = 0.00625 / m as f64;
        let mut riemann = 0.0;
        for j in 0..m {
            let x = (j as f64 + 0.5) * h;
            riemann += (0.5 * std::f64::consts::PI * x).sin().powi(2);
        }
        riemann *= h / 0.00625;
        assert!(
            (state.u[0][i] - riemann).abs() < 1e-11,
            "exact {} vs riemann {riemann}",
            state.u[0][i]
        );
    }

    #[test]
    fn indicator_straddling_cell_gets_overlap_fraction() {
        // cells of width 0.75 starting at -2.25: the cell [-2.25, -1.5)
        // overlaps (-2, 2) on [-2, -1.5), two thirds of its width
        let grid = GridSpec::new(-2.25, 2.25, 6, 1.0 / 3.0, 1.0).unwrap();
        let state = project_initial_data(
            &[InitialData::Indicator {
                lo: -2.0,
                hi: 2.0,
                height: 0.9,
            }],
            &grid,
        )
        .unwrap();
        assert!((state.u[0][0] - 0.9 * 2.0 / 3.0).abs() < 1e-15);
        assert!((state.u[0][1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn cfl_single_lane_unit_constants() {
        // beta = 1/3, lip_f = 1, nu_sup = 1, no source: min(1,2,2,1)/7
        let spec = crate::model::SystemSpec::single_lane_lwr(1.0, 0.1);
        let grid = GridSpec::new(-1.0, 1.0, 20, 1.0 / 3.0, 1.0).unwrap();
        let (lambda, dt) = cfl_time_step(&grid, &spec).unwrap();
        assert!((lambda - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(dt, lambda * grid.dx);
    }

    #[test]
    fn cfl_two_lane_source_free() {
        let spec = crate::model::SystemSpec::two_lane_lwr(0.0625).with_source_lipschitz(0.0);
        let grid = GridSpec::from_dx(-4.0, 4.0, 0.00625, 1.0 / 3.0, 0.5).unwrap();
        let (lambda, _) = cfl_time_step(&grid, &spec).unwrap();
        assert_eq!(lambda, 0.0625, "min(1,2,2,1)/16");
    }

    #[test]
    fn cfl_vanishes_with_beta() {
        let spec = crate::model::SystemSpec::single_lane_lwr(1.0, 0.1);
        let grid = GridSpec::new(-1.0, 1.0, 20, 1e-9, 1.0).unwrap();
        let (lambda, _) = cfl_time_step(&grid, &spec).unwrap();
        assert!(lambda < 1e-8, "6 beta term dominates: {lambda}");
    }

    #[test]
    fn cfl_two_pass_accounts_for_source() {
        let spec = crate::model::SystemSpec::two_lane_lwr(0.0625);
        let grid = GridSpec::from_dx(-4.0, 4.0, 0.00625, 0.3333, 0.5).unwrap();
        let (lambda, _) = cfl_time_step(&grid, &spec).unwrap();
        // lambda_0 = 1/16; second pass shaves 2 dt_0 |S|_Lip off the numerator
        let expected = (1.0 - 2.0 * (0.0625 * 0.00625) * 5.0) / 16.0;
        assert!((lambda - expected).abs() < 1e-15, "{lambda} vs {expected}");
    }

    #[test]
    fn flux_vanishes_on_constant_extremes() {
        let lane = LaneModel::lwr(1.5);
        for u in [0.0, 1.0] {
            let f = lf_flux(&lane, u, u, 1.2, 1.0 / 3.0, 0.1);
            assert_eq!(f, 0.0, "f({u}) = 0 and no jump");
        }
    }

    #[test]
    fn flux_matches_hand_value() {
        // 1/2 * 1.05 * (f(0.2) + f(0.4)) - (beta / 2 lambda) * 0.2
        let lane = LaneModel::lwr(1.0);
        let f = lf_flux(&lane, 0.2, 0.4, 1.05, 1.0 / 3.0, 1.0 / 16.0);
        let expected = 0.5 * 1.05 * (0.2 * 0.8 + 0.4 * 0.6) - (1.0 / 3.0) * 8.0 * 0.2;
        assert!((f - expected).abs() < 1e-15);
        assert!((f + 0.323333333333333).abs() < 1e-12);
    }

    #[test]
    fn constant_plateau_interior_is_invariant() {
        let spec = crate::model::SystemSpec::single_lane_lwr(1.5, 0.4);
        let n_eta = 4;
        let grid = toy_grid(60, 0.1, 1.0 / 3.0, 0.05);
        let w = discretize(&spec.kernel, grid.dx, n_eta).unwrap();
        let mut u = vec![0.0; 60];
        for v in u.iter_mut().take(45).skip(15) {
            *v = 0.3;
        }
        let state = SystemState::new(0.0, vec![u]);
        let next = step(&state, &w, &spec, &grid).unwrap();
        // cells whose full stencil plus kernel window sit inside the plateau
        for i in 20..38 {
            assert_eq!(next.u[0][i], 0.3, "cell {i} changed");
        }
        assert_eq!(next.t, grid.dt);
    }

    #[test]
    fn identical_lanes_evolve_identically() {
        let spec = crate::model::SystemSpec::new(
            vec![LaneModel::lwr(2.0), LaneModel::lwr(2.0)],
            KernelSpec::linear(0.2),
        );
        let grid = toy_grid(40, 0.1, 1.0 / 3.0, 0.05);
        let w = discretize(&spec.kernel, grid.dx, 2).unwrap();
        let mut u = vec![0.0; 40];
        for (i, v) in u.iter_mut().enumerate().take(30).skip(10) {
            *v = 0.2 + 0.5 * ((i as f64) * 0.4).sin().powi(2);
        }
        let state = SystemState::new(0.0, vec![u.clone(), u]);
        let next = step(&state, &w, &spec, &grid).unwrap();
        assert_eq!(next.u[0], next.u[1], "symmetry broken");
    }

    #[test]
    fn three_cell_toy_step_matches_hand_computation() {
        // u = (0, 1, 0), constant kernel with one-cell support, nu = 1,
        // beta = 1/3, lambda = 1/16: one step gives (1/6, 2/3, 1/6).
        let spec = crate::model::SystemSpec::new(
            vec![LaneModel::new(
                1.0,
                crate::model::FluxFactor::Lwr,
                crate::model::VelocityShape::Constant,
            )],
            KernelSpec::constant(1.0),
        );
        let grid = toy_grid(3, 1.0, 1.0 / 3.0, 1.0 / 16.0);
        let w = discretize(&spec.kernel, 1.0, 1).unwrap();
        let state = SystemState::new(0.0, vec![vec![0.0, 1.0, 0.0]]);
        let next = step(&state, &w, &spec, &grid).unwrap();
        assert!((next.u[0][0] - 1.0 / 6.0).abs() < 1e-15);
        assert!((next.u[0][1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((next.u[0][2] - 1.0 / 6.0).abs() < 1e-15);
        let mass: f64 = next.u[0].iter().sum();
        assert!((mass - 1.0).abs() < 1e-15, "mass conserved");
    }

    #[test]
    fn support_overflow_is_detected() {
        let spec = crate::model::SystemSpec::single_lane_lwr(1.5, 0.2);
        let grid = toy_grid(20, 0.1, 1.0 / 3.0, 0.05);
        let w = discretize(&spec.kernel, grid.dx, 2).unwrap();
        let mut u = vec![0.0; 20];
        u[19] = 1e-6;
        let state = SystemState::new(0.0, vec![u]);
        assert!(matches!(
            step(&state, &w, &spec, &grid),
            Err(Error::SupportOverflow { cell: 19, .. })
        ));
        // inflow side too
        let mut u = vec![0.0; 20];
        u[0] = 1e-6;
        let state = SystemState::new(0.0, vec![u]);
        assert!(matches!(
            step(&state, &w, &spec, &grid),
            Err(Error::SupportOverflow { cell: 0, .. })
        ));
    }

    #[test]
    fn per_lane_kernels_are_rejected_by_the_stepper() {
        let mut spec = crate::model::SystemSpec::two_lane_lwr(0.2);
        spec.per_lane_kernels = Some(vec![
            KernelSpec::linear(0.2),
            KernelSpec::linear(0.2),
        ]);
        let grid = toy_grid(20, 0.1, 1.0 / 3.0, 0.05);
        let w = discretize(&spec.kernel, grid.dx, 2).unwrap();
        let state = SystemState::zeros(2, 20);
        assert!(matches!(
            step(&state, &w, &spec, &grid),
            Err(Error::PerLaneKernelsUnsupported)
        ));
    }

    #[test]
    fn step_matches_cellwise_update_map() {
        // the fused loop must agree with the reference per-cell update H
        let spec = crate::model::SystemSpec::two_lane_lwr(0.3);
        let grid = toy_grid(30, 0.1, 0.3333, 0.05);
        let w = discretize(&spec.kernel, grid.dx, 3).unwrap();
        let mut u0 = vec![0.0; 30];
        let mut u1 = vec![0.0; 30];
        for i in 8..22 {
            u0[i] = 0.3 + 0.3 * ((i as f64) * 0.7).sin().powi(2);
            u1[i] = 0.6 - 0.4 * ((i as f64) * 0.3).cos().powi(2);
        }
        let state = SystemState::new(0.0, vec![u0, u1]);
        let next = step(&state, &w, &spec, &grid).unwrap();

        let opts = StepOptions::default();
        let mut ws = StepWorkspace::new(2, 30, 3);
        ws.refresh_convolutions(&state, &w, &opts);
        for k in 0..2 {
            for i in 1..29 {
                let u_cell = [state.u[0][i], state.u[1][i]];
                let c_cell = [ws.c_center[0][i], ws.c_center[1][i]];
                let h = update_cell(
                    &spec,
                    k,
                    grid.x_interface(i),
                    grid.x_interface(i + 1),
                    grid.x_center(i),
                    ws.c_half[k][i],
                    ws.c_half[k][i + 1],
                    state.u[k][i - 1],
                    state.u[k][i],
                    state.u[k][i + 1],
                    &u_cell,
                    &c_cell,
                    grid.beta,
                    grid.lambda,
                    grid.dt,
                );
                assert!(
                    (h - next.u[k][i]).abs() < 1e-15,
                    "lane {k} cell {i}: {h} vs {}",
                    next.u[k][i]
                );
            }
        }
    }
}
