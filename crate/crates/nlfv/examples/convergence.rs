//! Refinement-rate study of the two-lane scenario: inter-resolution L1
//! errors and observed orders on a dyadic ladder, with the kernel support
//! held fixed.
//!
//! ```text
//! cargo run --release -p nlfv --example convergence            # 3 quick rows
//! cargo run --release -p nlfv --example convergence -- 5      # full ladder, slow
//! ```

use nlfv::experiments::convergence_study;
use nlfv::output;

fn main() -> nlfv::Result<()> {
    let levels: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(3);

    let rows = convergence_study(0.00625, levels, 0.0625, None)?;
    println!("{:>12} {:>16} {:>8}", "dx", "e (L1)", "alpha");
    let mut csv = String::from("dx,e,alpha\n");
    for row in &rows {
        println!(
            "{:>12.8} {:>16.8e} {:>8}",
            row.dx,
            row.e,
            row.alpha.map(|a| format!("{a:.4}")).unwrap_or_default()
        );
        csv.push_str(&format!(
            "{},{},{}\n",
            output::fmt_f64(row.dx),
            output::fmt_f64(row.e),
            row.alpha.map(output::fmt_f64).unwrap_or_default()
        ));
    }
    output::write_text("out/convergence/rate_table.csv", &csv)?;
    println!("wrote out/convergence/rate_table.csv");
    Ok(())
}
