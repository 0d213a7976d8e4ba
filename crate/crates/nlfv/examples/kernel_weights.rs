//! Kernel discretization: exact cell integrals of the look-ahead kernel
//! and the downstream averages they produce.
//!
//! ```text
//! cargo run --release -p nlfv --example kernel_weights
//! ```

use nlfv::{convolve_interfaces, discretize, output, KernelSpec};

fn main() -> nlfv::Result<()> {
    let eta = 0.0625;
    let n_eta = 10;
    let dx = eta / n_eta as f64;

    println!("linear kernel, eta = {eta}, {n_eta} cells:");
    let linear = discretize(&KernelSpec::linear(eta), dx, n_eta)?;
    for (p, z) in linear.zeta.iter().enumerate() {
        println!("  zeta[{p}] = {z:.6}");
    }
    println!("  sum = {:.17}", linear.zeta.iter().sum::<f64>());

    let constant = discretize(&KernelSpec::constant(eta), dx, n_eta)?;
    println!("constant kernel: every weight {:.6}", constant.zeta[0]);

    // tabulated shape: samples of a truncated quadratic, renormalized
    let samples: Vec<f64> = (0..41)
        .map(|j| {
            let s = eta * j as f64 / 40.0;
            (1.0 - s / eta).powi(2)
        })
        .collect();
    let tabulated = discretize(&KernelSpec::tabulated(eta, samples), dx, n_eta)?;
    println!(
        "tabulated quadratic: zeta[0] = {:.6}, zeta[{}] = {:.6e}, sum = {:.17}",
        tabulated.zeta[0],
        n_eta - 1,
        tabulated.zeta[n_eta - 1],
        tabulated.zeta.iter().sum::<f64>()
    );

    // downstream average of a step profile: the averages ramp up ahead of
    // the jump as the window starts to see it
    let mut u = vec![0.0; 30 + n_eta];
    for v in u.iter_mut().take(15) {
        *v = 0.8;
    }
    let c = convolve_interfaces(&u, &linear)?;
    println!("step profile averages around the jump:");
    for j in 10..20 {
        println!("  c[{j}] = {:.6}", c[j]);
    }

    output::write_text("out/kernel_weights/weights.csv", &output::weights_csv(&linear.zeta))?;
    println!("wrote out/kernel_weights/weights.csv");
    Ok(())
}
