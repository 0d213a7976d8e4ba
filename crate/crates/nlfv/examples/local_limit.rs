//! Vanishing kernel support: as the look-ahead radius shrinks, the nonlocal
//! solution approaches the local multilane model (solved here by the same
//! scheme with a one-cell kernel).
//!
//! ```text
//! cargo run --release -p nlfv --example local_limit
//! ```

use nlfv::experiments::nonlocal_to_local_study;
use nlfv::output::{self, Series};

fn main() -> nlfv::Result<()> {
    let dx = 0.00625;
    let cells = [100usize, 50, 10, 1];
    let etas: Vec<f64> = cells.iter().map(|&m| m as f64 * dx).collect();
    let study = nonlocal_to_local_study(dx, &etas)?;

    let mut csv = String::from("eta,distance\n");
    for (row, m) in study.rows.iter().zip(cells) {
        println!(
            "eta = {:>8.5} ({m:>3} cells): || u_eta(T) - u_local(T) ||_L1 = {:.6e}",
            row.eta, row.distance
        );
        csv.push_str(&format!(
            "{},{}\n",
            output::fmt_f64(row.eta),
            output::fmt_f64(row.distance)
        ));
    }
    output::write_text("out/local_limit/nl2l.csv", &csv)?;

    // overlay the final lane-1 profiles
    let mut labels: Vec<String> = cells.iter().map(|m| format!("eta = {m} dx")).collect();
    labels.push("local".into());
    let mut series: Vec<Series> = Vec::new();
    for (j, run) in study.nonlocal_runs.iter().enumerate() {
        let state = run.final_state();
        series.push(Series {
            label: &labels[j],
            points: state.u[0]
                .iter()
                .enumerate()
                .map(|(i, &u)| (run.grid.x_center(i), u))
                .collect(),
        });
    }
    let local_state = study.local.final_state();
    series.push(Series {
        label: labels.last().unwrap(),
        points: local_state.u[0]
            .iter()
            .enumerate()
            .map(|(i, &u)| (study.local.grid.x_center(i), u))
            .collect(),
    });
    output::write_text(
        "out/local_limit/lane1.svg",
        &output::line_plot_svg("shrinking look-ahead radius, lane 1 at T = 0.5", "x", "u", &series),
    )?;
    println!("wrote out/local_limit/{{nl2l.csv,lane1.svg}}");
    Ok(())
}
