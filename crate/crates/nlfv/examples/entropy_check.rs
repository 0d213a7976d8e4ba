//! Verification pass over a full run: discrete entropy inequality,
//! per-cell source telescoping, conservation, invariant region, and the
//! update-map monotonicity probe.
//!
//! ```text
//! cargo run --release -p nlfv --example entropy_check
//! ```

use nlfv::diagnostics::check_run;
use nlfv::experiments::SCENARIO_BETA;
use nlfv::{InitialData, RunConfig, SystemSpec};

fn main() -> nlfv::Result<()> {
    // coarse grid on a widened domain (the round-off halo ahead of the
    // front needs room at this resolution)
    let config = RunConfig::new(
        SystemSpec::two_lane_lwr(0.1),
        vec![InitialData::SinSquaredBump, InitialData::CosSquaredBump],
        -4.0,
        12.0,
        0.025,
        SCENARIO_BETA,
        0.5,
    );
    let report = check_run(&config, 500, 7)?;

    println!("steps:                {}", report.steps);
    println!("max entropy residual: {:.3e} (tolerance 1e-12)", report.max_entropy_residual);
    println!("entropy violations:   {}", report.entropy_violations.len());
    println!("max telescoping:      {:.3e}", report.max_telescoping);
    println!("relative mass drift:  {:.3e}", report.mass_drift_rel);
    println!("density range:        [{:.3e}, {:.8}]", report.min_u, report.max_u);
    println!(
        "monotonicity probe:   {} violations in {} trials",
        report.probe.violations.len(),
        report.probe.trials
    );
    println!("verdict: {}", if report.passed() { "PASS" } else { "FAIL" });
    Ok(())
}
