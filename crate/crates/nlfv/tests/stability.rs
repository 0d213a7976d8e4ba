//! Run-scale stability properties: Lipschitz continuity in time of the
//! discrete solution, the exponential total-variation envelope, and the
//! first-order decay of the splitting error on the standard scenario.

use nlfv::diagnostics::total_mass;
use nlfv::experiments::{
    splitting_order_study, two_lane_config, SCENARIO_BETA,
};
use nlfv::scheme::run_with_observer;
use nlfv::{InitialData, RunConfig, SystemSpec};

/// Largest per-step rate `dx sum_i |u' - u| / dt`; an upper bound for the
/// Lipschitz-in-time constant over all step pairs by the triangle
/// inequality.
fn max_step_rate(config: &RunConfig) -> f64 {
    let grid = config.build_grid().unwrap();
    let mut worst: f64 = 0.0;
    run_with_observer(config, |prev, next| {
        let dt = next.t - prev.t;
        for k in 0..prev.n_lanes() {
            let l1: f64 = prev.u[k]
                .iter()
                .zip(&next.u[k])
                .map(|(a, b)| (a - b).abs())
                .sum();
            worst = worst.max(grid.dx * l1 / dt);
        }
    })
    .unwrap();
    worst
}

fn wide_config(dx: f64) -> RunConfig {
    RunConfig::new(
        SystemSpec::two_lane_lwr(0.1),
        vec![InitialData::SinSquaredBump, InitialData::CosSquaredBump],
        -4.0,
        12.0,
        dx,
        SCENARIO_BETA,
        0.5,
    )
}

#[test]
fn lipschitz_in_time_constant_is_stable_under_refinement() {
    let coarse = max_step_rate(&wide_config(0.025));
    let fine = max_step_rate(&wide_config(0.0125));
    assert!(coarse.is_finite() && fine.is_finite());
    assert!(
        fine <= 1.5 * coarse,
        "Lipschitz rate grew under refinement: {coarse} -> {fine}"
    );
}

#[test]
fn total_variation_respects_exponential_envelope() {
    let mut config = two_lane_config(0.00625, 0.0625);
    config.diagnostics = true;
    let out = nlfv::run(&config).unwrap();

    let tv_total = |row: &nlfv::diagnostics::DiagRow| -> f64 { row.tv_per_lane.iter().sum() };
    let rows = &out.diagnostics;
    let tv0 = tv_total(&rows[0]);

    // fit the envelope rate on the first ten steps
    let mut k_fit: f64 = 0.0;
    for row in rows.iter().take(11).skip(1) {
        let rate = ((tv_total(row) + 1.0) / (tv0 + 1.0)).ln() / row.t;
        k_fit = k_fit.max(rate);
    }
    for row in rows.iter() {
        let bound = 2.0 * ((k_fit * row.t).exp() * (tv0 + 1.0) - 1.0);
        assert!(
            tv_total(row) <= bound,
            "TV {} exceeds envelope {} at t = {}",
            tv_total(row),
            bound,
            row.t
        );
    }
}

#[test]
fn mass_is_conserved_per_lane_totals_only_globally() {
    // lanes trade mass through the exchange but the total is conserved
    let mut config = two_lane_config(0.0125, 0.0625);
    config.t_final = 0.25;
    config.snapshot_times = vec![0.0, 0.25];
    let out = nlfv::run(&config).unwrap();
    let (per0, total0) = total_mass(&out.snapshots[0], out.grid.dx);
    let (per1, total1) = total_mass(out.final_state(), out.grid.dx);
    assert!(((total1 - total0) / total0).abs() <= 1e-10);
    // the slow lane loses vehicles to the fast lane in this scenario
    assert!(
        (per0[0] - per1[0]).abs() > 1e-3,
        "expected visible lane exchange, got {per0:?} -> {per1:?}"
    );
}

#[test]
fn splitting_error_decays_at_first_order_on_the_standard_scenario() {
    let spec = SystemSpec::two_lane_lwr(0.0625);
    let initial = vec![InitialData::SinSquaredBump, InitialData::CosSquaredBump];
    let study = splitting_order_study(&spec, &initial, -4.0, 6.0, 0.0125, 3, 0.5).unwrap();
    assert!(
        study.fitted_order >= 0.9,
        "fitted order {} below 0.9 (gaps {:?})",
        study.fitted_order,
        study.rows
    );
}

#[test]
fn single_lane_support_limit_shows_the_same_monotone_trend() {
    // source-free variant of the shrinking-support study: the distance to
    // the local solution still decreases monotonically with the support
    let dx = 0.00625;
    let distance_to_local = |eta: f64| -> f64 {
        let config = RunConfig::new(
            SystemSpec::single_lane_lwr(2.5, eta),
            vec![InitialData::SinSquaredBump],
            -4.0,
            4.0,
            dx,
            SCENARIO_BETA,
            0.5,
        );
        let nonlocal = nlfv::run(&config).unwrap();
        let local = nlfv::local::local_run(&config).unwrap();
        nlfv::diagnostics::l1_distance(
            nonlocal.final_state(),
            &nonlocal.grid,
            local.final_state(),
            &local.grid,
        )
        .unwrap()[0]
    };
    let d100 = distance_to_local(100.0 * dx);
    let d50 = distance_to_local(50.0 * dx);
    let d10 = distance_to_local(10.0 * dx);
    assert!(
        d100 > d50 && d50 > d10 && d10 > 0.0,
        "expected monotone decrease, got {d100:.4e}, {d50:.4e}, {d10:.4e}"
    );
}
