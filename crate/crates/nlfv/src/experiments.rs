//! Study harnesses: the two-lane scenario, the refinement-rate table, the
//! vanishing-kernel-support comparison against the local solver, and the
//! split-versus-unsplit integrator comparison.

use rayon::prelude::*;

use crate::config::{Integrator, LambdaPolicy, RunConfig};
use crate::diagnostics::l1_distance;
use crate::error::{Error, Result};
use crate::local::local_run;
use crate::model::SystemSpec;
use crate::scheme::{run, InitialData, RunOutput};

/// Snapshot times of the two-lane scenario.
pub const SCENARIO_SNAPSHOT_TIMES: [f64; 4] = [0.0, 0.017, 0.33, 0.5];

/// Final time of all built-in studies.
pub const SCENARIO_T_FINAL: f64 = 0.5;

/// Numerical viscosity parameter of the built-in studies.
pub const SCENARIO_BETA: f64 = 0.3333;

/// The fixed step ratio used by the reference runs (selected via
/// `--paper-lambda`); exceeds the computed CFL bound of roughly `1/16`.
pub const REFERENCE_LAMBDA: f64 = 0.1286;

/// Configuration of the two-lane scenario on `[-4, 4]`: LWR lanes with
/// velocity scales 1.5 and 2.5, a linear kernel of support `eta`, and the
/// squared-sine / squared-cosine humps on `(-2, 2)` as initial data.
pub fn two_lane_config(dx: f64, eta: f64) -> RunConfig {
    RunConfig::new(
        SystemSpec::two_lane_lwr(eta),
        vec![InitialData::SinSquaredBump, InitialData::CosSquaredBump],
        -4.0,
        4.0,
        dx,
        SCENARIO_BETA,
        SCENARIO_T_FINAL,
    )
    .with_snapshots(SCENARIO_SNAPSHOT_TIMES.to_vec())
    .with_diagnostics(true)
}

/// Runs the two-lane scenario, recording snapshots at
/// [`SCENARIO_SNAPSHOT_TIMES`] and the per-step diagnostics log.
pub fn two_lane_scenario(dx: f64, eta: f64, lambda_override: Option<f64>) -> Result<RunOutput> {
    let mut config = two_lane_config(dx, eta);
    if let Some(lambda) = lambda_override {
        config.lambda = LambdaPolicy::Fixed(lambda);
    }
    run(&config)
}

/// One row of the refinement-rate table.
#[derive(Clone, Debug)]
pub struct RateTableRow {
    pub dx: f64,
    /// Inter-resolution L1 error, summed over lanes:
    /// `e = sum_k || u_dx - u_{dx/2} ||_{L1}` at the final time.
    pub e: f64,
    /// Observed order `log2(e_dx / e_{dx/2})`; absent on the last row.
    pub alpha: Option<f64>,
}

/// Refinement study of the two-lane scenario: runs resolutions `dx_coarsest
/// / 2^j` for `j = 0 ..= levels` and tabulates the L1 differences of
/// consecutive resolutions at the final time. The kernel support stays
/// fixed across levels.
///
/// `levels` is the number of table rows; `levels + 1` runs are needed.
pub fn convergence_study(
    dx_coarsest: f64,
    levels: usize,
    eta: f64,
    lambda_override: Option<f64>,
) -> Result<Vec<RateTableRow>> {
    let dxs: Vec<f64> = (0..=levels).map(|j| dx_coarsest / (1u64 << j) as f64).collect();
    convergence_study_at(&dxs, eta, lambda_override)
}

/// [`convergence_study`] over an explicit resolution ladder; consecutive
/// entries must be 2:1 nested.
pub fn convergence_study_at(
    dxs: &[f64],
    eta: f64,
    lambda_override: Option<f64>,
) -> Result<Vec<RateTableRow>> {
    if dxs.len() < 2 {
        return Err(Error::DegenerateStudy(format!(
            "need at least two resolutions, got {}",
            dxs.len()
        )));
    }

    let outputs: Vec<Result<RunOutput>> = dxs
        .par_iter()
        .map(|&dx| {
            let mut config = two_lane_config(dx, eta)
                .with_snapshots(vec![SCENARIO_T_FINAL])
                .with_diagnostics(false);
            if let Some(lambda) = lambda_override {
                config.lambda = LambdaPolicy::Fixed(lambda);
            }
            log::info!("convergence level dx = {dx}");
            run(&config)
        })
        .collect();
    let outputs: Vec<RunOutput> = outputs.into_iter().collect::<Result<_>>()?;

    let mut es = Vec::with_capacity(dxs.len() - 1);
    for pair in outputs.windows(2) {
        let per_lane = l1_distance(
            pair[0].final_state(),
            &pair[0].grid,
            pair[1].final_state(),
            &pair[1].grid,
        )?;
        let e: f64 = per_lane.iter().sum();
        if e == 0.0 {
            return Err(Error::DegenerateStudy(
                "identical solutions on consecutive levels".into(),
            ));
        }
        es.push(e);
    }

    Ok(es
        .iter()
        .enumerate()
        .map(|(j, &e)| RateTableRow {
            dx: dxs[j],
            e,
            alpha: es.get(j + 1).map(|&e_next| (e / e_next).log2()),
        })
        .collect())
}

/// One row of the kernel-support limit study.
#[derive(Clone, Debug)]
pub struct LimitRow {
    pub eta: f64,
    /// `sum_k || u_eta(T) - u_local(T) ||_{L1}` on the shared grid.
    pub distance: f64,
}

/// Output of [`nonlocal_to_local_study`]: distances per kernel support plus
/// the underlying runs for plotting.
pub struct LimitStudy {
    pub rows: Vec<LimitRow>,
    pub nonlocal_runs: Vec<RunOutput>,
    pub local: RunOutput,
}

/// Runs the two-lane scenario at decreasing kernel supports and compares
/// each against the local solver (`eta = dx`) on the same grid at the final
/// time. Snapshots are recorded at `t = 0.33` and `t = 0.5`.
pub fn nonlocal_to_local_study(dx: f64, etas: &[f64]) -> Result<LimitStudy> {
    let snapshots = vec![0.33, SCENARIO_T_FINAL];
    let base = two_lane_config(dx, dx)
        .with_snapshots(snapshots.clone())
        .with_diagnostics(false);
    let local = local_run(&base)?;

    let nonlocal_runs: Vec<Result<RunOutput>> = etas
        .par_iter()
        .map(|&eta| {
            log::info!("limit study eta = {eta}");
            let config = two_lane_config(dx, eta)
                .with_snapshots(snapshots.clone())
                .with_diagnostics(false);
            run(&config)
        })
        .collect();
    let nonlocal_runs: Vec<RunOutput> = nonlocal_runs.into_iter().collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(etas.len());
    for (j, &eta) in etas.iter().enumerate() {
        let per_lane = l1_distance(
            nonlocal_runs[j].final_state(),
            &nonlocal_runs[j].grid,
            local.final_state(),
            &local.grid,
        )?;
        rows.push(LimitRow {
            eta,
            distance: per_lane.iter().sum(),
        });
    }

    Ok(LimitStudy {
        rows,
        nonlocal_runs,
        local,
    })
}

/// One row of the split-versus-unsplit comparison.
#[derive(Clone, Debug)]
pub struct SplitCompareRow {
    pub dx: f64,
    pub dt: f64,
    /// `sum_k || split(T) - unsplit(T) ||_{L1}` on the shared grid.
    pub distance: f64,
}

/// Result of [`splitting_order_study`].
#[derive(Clone, Debug)]
pub struct SplitCompare {
    pub rows: Vec<SplitCompareRow>,
    /// Least-squares slope of `log2(distance)` against the refinement level;
    /// near one for a first-order splitting error.
    pub fitted_order: f64,
}

/// Compares the split and unsplit integrators on a dyadic ladder: at each
/// level both integrators run on the same grid with the same steps, and the
/// L1 gap at the final time isolates the splitting error. The step ratio is
/// fixed across levels so `dt` halves with `dx`.
///
/// The domain is explicit because the round-off halo ahead of the front
/// spans a roughly resolution-independent number of cells; coarse ladders
/// need more room on the outflow side.
#[allow(clippy::too_many_arguments)]
pub fn splitting_order_study(
    spec: &SystemSpec,
    initial: &[InitialData],
    x_min: f64,
    x_max: f64,
    dx_coarsest: f64,
    levels: usize,
    t_final: f64,
) -> Result<SplitCompare> {
    if levels < 2 {
        return Err(Error::DegenerateStudy(
            "need at least two levels to fit an order".into(),
        ));
    }
    let base = RunConfig::new(
        spec.clone(),
        initial.to_vec(),
        x_min,
        x_max,
        dx_coarsest,
        SCENARIO_BETA,
        t_final,
    );
    // fix lambda at the coarsest level's bound so dt scales exactly with dx
    let grid0 = base.build_grid()?;
    let (lambda, _) = crate::scheme::cfl_time_step(&grid0, spec)?;

    let rows: Vec<Result<SplitCompareRow>> = (0..levels)
        .into_par_iter()
        .map(|j| {
            let dx = dx_coarsest / (1u64 << j) as f64;
            let mut config = base.clone();
            config.dx = dx;
            config.lambda = LambdaPolicy::Fixed(lambda);
            config.snapshot_times = vec![t_final];
            let unsplit = run(&config)?;
            config.integrator = Integrator::Split;
            let split = run(&config)?;
            let per_lane = l1_distance(
                split.final_state(),
                &split.grid,
                unsplit.final_state(),
                &unsplit.grid,
            )?;
            Ok(SplitCompareRow {
                dx,
                dt: lambda * dx,
                distance: per_lane.iter().sum(),
            })
        })
        .collect();
    let rows: Vec<SplitCompareRow> = rows.into_iter().collect::<Result<_>>()?;

    // least-squares slope of log2(distance) vs level index, sign flipped so
    // first order reads as +1
    let ys: Vec<f64> = rows.iter().map(|r| r.distance.log2()).collect();
    let n = ys.len() as f64;
    let x_mean = (ys.len() - 1) as f64 / 2.0;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, &y) in ys.iter().enumerate() {
        let dxj = j as f64 - x_mean;
        num += dxj * (y - y_mean);
        den += dxj * dxj;
    }
    let fitted_order = -num / den;

    Ok(SplitCompare { rows, fitted_order })
}

/// Initial data of the linear-flux splitting scenario, scaled to keep the
/// densities comfortably inside `[0, 1]` (the linear flux lacks the
/// saturating factor that would otherwise cap them).
pub fn scaled_bumps(s1: f64, s2: f64) -> Vec<InitialData> {
    use std::f64::consts::PI;
    vec![
        InitialData::Custom(std::sync::Arc::new(move |x: f64| {
            if (-2.0..2.0).contains(&x) {
                s1 * (0.5 * PI * x).sin().powi(2)
            } else {
                0.0
            }
        })),
        InitialData::Custom(std::sync::Arc::new(move |x: f64| {
            if (-2.0..2.0).contains(&x) {
                s2 * (0.25 * PI * x).cos().powi(2)
            } else {
                0.0
            }
        })),
    ]
}
