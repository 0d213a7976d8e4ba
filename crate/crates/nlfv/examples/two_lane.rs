//! The two-lane scenario: a slow and a fast LWR lane coupled by
//! velocity-difference lane changing, each convecting with its downstream
//! average density.
//!
//! Writes snapshot and diagnostics CSVs (and an SVG profile plot) to
//! `out/two_lane/`.
//!
//! ```text
//! cargo run --release -p nlfv --example two_lane
//! ```

use nlfv::diagnostics::total_mass;
use nlfv::experiments;
use nlfv::output;

fn main() -> nlfv::Result<()> {
    let dx = 0.00625;
    let eta = 100.0 * dx;
    let out = experiments::two_lane_scenario(dx, eta, None)?;

    println!(
        "dx = {dx}, eta = {eta} ({} cells of look-ahead), lambda = {:.6}, {} steps",
        (eta / dx).round(),
        out.lambda,
        out.steps
    );
    for state in &out.snapshots {
        let (per_lane, total) = total_mass(state, out.grid.dx);
        println!(
            "t = {:>5.3}: mass = {total:.12} (lane 1: {:.6}, lane 2: {:.6}), range [{:.3e}, {:.6}]",
            state.t,
            per_lane[0],
            per_lane[1],
            state.min_density(),
            state.max_density()
        );
    }

    output::write_text(
        "out/two_lane/snapshots.csv",
        &output::snapshot_csv(&out.snapshots, &out.grid),
    )?;
    output::write_text(
        "out/two_lane/diagnostics.csv",
        &output::diagnostics_csv(&out.diagnostics),
    )?;
    output::write_text(
        "out/two_lane/snapshots.svg",
        &output::snapshot_svg(&out.snapshots, &out.grid, "two-lane scenario"),
    )?;
    println!("wrote out/two_lane/{{snapshots.csv,diagnostics.csv,snapshots.svg}}");
    Ok(())
}
