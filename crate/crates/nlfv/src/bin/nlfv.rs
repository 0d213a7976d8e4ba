//! Command-line front end. Thin: parses arguments, calls the library,
//! writes CSV/SVG artifacts.
//!
//! Exit codes: 0 on success, 1 on a diagnostic/assertion failure or runtime
//! error, 2 on a configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nlfv::experiments::{self, REFERENCE_LAMBDA};
use nlfv::output::{self, Series};
use nlfv::{diagnostics, CenterConvention, Error, LambdaPolicy};

#[derive(Parser)]
#[command(name = "nlfv", version, about = "Nonlocal multilane finite-volume solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Directory for output artifacts.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Use the fixed step ratio lambda = 0.1286 instead of the computed
    /// CFL bound.
    #[arg(long)]
    paper_lambda: bool,
    /// Also emit SVG line plots.
    #[arg(long)]
    svg: bool,
    /// Compensated summation in the convolution accumulator.
    #[arg(long)]
    kahan: bool,
    /// Which interface pair defines the cell-centered convolved value.
    #[arg(long, value_parser = parse_center, default_value = "symmetric")]
    center_convention: CenterConvention,
}

fn parse_center(s: &str) -> Result<CenterConvention, String> {
    CenterConvention::parse(s).ok_or_else(|| format!("expected `symmetric` or `paper-proof`, got `{s}`"))
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file and write snapshot/diagnostics CSVs.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Refinement-rate study of the two-lane scenario.
    Converge {
        /// Coarsest cell width; each level halves it.
        #[arg(long, default_value_t = 0.00625)]
        dx_coarsest: f64,
        /// Number of table rows (one extra run is needed).
        #[arg(long, default_value_t = 5)]
        levels: usize,
        /// Kernel support, fixed across levels.
        #[arg(long, default_value_t = 0.0625)]
        eta: f64,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Vanishing-kernel-support comparison against the local solver.
    Nl2l {
        #[arg(long, default_value_t = 0.00625)]
        dx: f64,
        /// Kernel supports in cells, comma separated.
        #[arg(long, default_value = "100,50,10", value_delimiter = ',')]
        eta_cells: Vec<usize>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run a config file while verifying the discrete properties
    /// (entropy inequality, telescoping, conservation, invariant region,
    /// monotonicity probe).
    Check {
        config: PathBuf,
        /// Random states probed for update-map monotonicity.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Dump the kernel quadrature weights to CSV.
        #[arg(long)]
        dump_weights: bool,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Split-versus-unsplit integrator comparison on a dyadic ladder.
    SplitCompare {
        #[arg(long, default_value_t = 0.0125)]
        dx_coarsest: f64,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long, default_value_t = 0.5)]
        t_final: f64,
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();

    if let Ok(threads) = std::env::var("NLFV_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => log::warn!("ignoring invalid NLFV_THREADS = {threads}"),
        }
    }

    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Parse { .. } | Error::Validation(_) | Error::InvalidParameter(_) => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            }
        }
    }
}

fn apply_common(config: &mut nlfv::RunConfig, common: &CommonOpts) {
    if common.paper_lambda {
        config.lambda = LambdaPolicy::Fixed(REFERENCE_LAMBDA);
    }
    config.kahan = common.kahan;
    config.center = common.center_convention;
}

fn dispatch(command: Command) -> nlfv::Result<ExitCode> {
    match command {
        Command::Run { config, common } => {
            let mut config = nlfv::parse_config(&config)?;
            apply_common(&mut config, &common);
            let out = nlfv::run(&config)?;
            let dir = &common.out_dir;
            output::write_text(dir.join("snapshots.csv"), &output::snapshot_csv(&out.snapshots, &out.grid))?;
            if config.diagnostics {
                output::write_text(dir.join("diagnostics.csv"), &output::diagnostics_csv(&out.diagnostics))?;
            }
            if common.svg {
                output::write_text(
                    dir.join("snapshots.svg"),
                    &output::snapshot_svg(&out.snapshots, &out.grid, "density snapshots"),
                )?;
            }
            println!(
                "run finished: {} steps, lambda = {}, outputs in {}",
                out.steps,
                out.lambda,
                dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Converge {
            dx_coarsest,
            levels,
            eta,
            common,
        } => {
            let lambda = common.paper_lambda.then_some(REFERENCE_LAMBDA);
            let rows = experiments::convergence_study(dx_coarsest, levels, eta, lambda)?;
            let mut csv = String::from("dx,e,alpha\n");
            println!("{:>12} {:>24} {:>10}", "dx", "e", "alpha");
            for row in &rows {
                let alpha = row.alpha.map(output::fmt_f64).unwrap_or_default();
                csv.push_str(&format!(
                    "{},{},{}\n",
                    output::fmt_f64(row.dx),
                    output::fmt_f64(row.e),
                    alpha
                ));
                println!(
                    "{:>12.8} {:>24.16e} {:>10}",
                    row.dx,
                    row.e,
                    row.alpha.map(|a| format!("{a:.4}")).unwrap_or_default()
                );
            }
            output::write_text(common.out_dir.join("rate_table.csv"), &csv)?;
            if common.svg {
                let points: Vec<(f64, f64)> =
                    rows.iter().map(|r| (r.dx.log2(), r.e.log2())).collect();
                let slope_half: Vec<(f64, f64)> = points
                    .iter()
                    .map(|&(x, _)| (x, points[0].1 + 0.5 * (x - points[0].0)))
                    .collect();
                let fitted = fit_slope(&points);
                let slope_fit: Vec<(f64, f64)> = points
                    .iter()
                    .map(|&(x, _)| (x, points[0].1 + fitted * (x - points[0].0)))
                    .collect();
                let fit_label = format!("slope {fitted:.2}");
                let svg = output::line_plot_svg(
                    "refinement study",
                    "log2 dx",
                    "log2 e",
                    &[
                        Series { label: "observed", points },
                        Series { label: "slope 0.5", points: slope_half },
                        Series { label: &fit_label, points: slope_fit },
                    ],
                );
                output::write_text(common.out_dir.join("rate_table.svg"), &svg)?;
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Nl2l {
            dx,
            eta_cells,
            common,
        } => {
            let etas: Vec<f64> = eta_cells.iter().map(|&m| m as f64 * dx).collect();
            let study = experiments::nonlocal_to_local_study(dx, &etas)?;
            let mut csv = String::from("eta,distance\n");
            for row in &study.rows {
                csv.push_str(&format!(
                    "{},{}\n",
                    output::fmt_f64(row.eta),
                    output::fmt_f64(row.distance)
                ));
                println!("eta = {:>10.6}: distance = {:.6e}", row.eta, row.distance);
            }
            output::write_text(common.out_dir.join("nl2l.csv"), &csv)?;
            for (j, run) in study.nonlocal_runs.iter().enumerate() {
                output::write_text(
                    common.out_dir.join(format!("nl2l_eta{}.csv", eta_cells[j])),
                    &output::snapshot_csv(&run.snapshots, &run.grid),
                )?;
            }
            output::write_text(
                common.out_dir.join("nl2l_local.csv"),
                &output::snapshot_csv(&study.local.snapshots, &study.local.grid),
            )?;
            if common.svg {
                let mut labels: Vec<String> =
                    eta_cells.iter().map(|m| format!("eta = {m} dx")).collect();
                labels.push("local".into());
                let mut series = Vec::new();
                for (j, run) in study.nonlocal_runs.iter().enumerate() {
                    series.push(Series {
                        label: &labels[j],
                        points: lane_profile(run, 0),
                    });
                }
                series.push(Series {
                    label: labels.last().unwrap(),
                    points: lane_profile(&study.local, 0),
                });
                output::write_text(
                    common.out_dir.join("nl2l_lane1.svg"),
                    &output::line_plot_svg("kernel-support limit, lane 1", "x", "u", &series),
                )?;
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Check {
            config,
            trials,
            dump_weights,
            common,
        } => {
            let mut config = nlfv::parse_config(&config)?;
            apply_common(&mut config, &common);
            if dump_weights {
                let (_, weights) = nlfv::scheme::resolve(&config)?;
                output::write_text(common.out_dir.join("weights.csv"), &output::weights_csv(&weights.zeta))?;
            }
            let report = diagnostics::check_run(&config, trials, 0x6e6c6676)?;
            println!("steps:                 {}", report.steps);
            println!("max entropy residual:  {:.3e}", report.max_entropy_residual);
            println!("max telescoping:       {:.3e}", report.max_telescoping);
            println!("relative mass drift:   {:.3e}", report.mass_drift_rel);
            println!("density range:         [{:.3e}, {:.8}]", report.min_u, report.max_u);
            println!(
                "monotonicity probe:    {}/{} trials clean",
                report.probe.trials - report.probe.violations.len().min(report.probe.trials),
                report.probe.trials
            );
            if !report.entropy_violations.is_empty() {
                let mut csv = String::from("step,lane,cell,alpha,residual\n");
                for v in &report.entropy_violations {
                    csv.push_str(&format!(
                        "{},{},{},{},{}\n",
                        v.step,
                        v.lane + 1,
                        v.cell,
                        output::fmt_f64(v.alpha),
                        output::fmt_f64(v.residual)
                    ));
                }
                output::write_text(common.out_dir.join("entropy_violations.csv"), &csv)?;
            }
            if report.passed() {
                println!("check: PASS");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("check: FAIL");
                Ok(ExitCode::from(1))
            }
        }

        Command::SplitCompare {
            dx_coarsest,
            levels,
            t_final,
            common,
        } => {
            let spec = nlfv::SystemSpec::two_lane_linear_flux(
                (0.0625 / dx_coarsest).round() * dx_coarsest,
            );
            let initial = experiments::scaled_bumps(0.5, 0.4);
            let study = experiments::splitting_order_study(
                &spec, &initial, -4.0, 6.0, dx_coarsest, levels, t_final,
            )?;
            let mut csv = String::from("dx,dt,distance\n");
            for row in &study.rows {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    output::fmt_f64(row.dx),
                    output::fmt_f64(row.dt),
                    output::fmt_f64(row.distance)
                ));
                println!(
                    "dx = {:>10.6} dt = {:>12.6e}: |split - unsplit| = {:.6e}",
                    row.dx, row.dt, row.distance
                );
            }
            println!("fitted order: {:.4}", study.fitted_order);
            output::write_text(common.out_dir.join("split_compare.csv"), &csv)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn lane_profile(run: &nlfv::RunOutput, lane: usize) -> Vec<(f64, f64)> {
    let state = run.final_state();
    state.u[lane]
        .iter()
        .enumerate()
        .map(|(i, &u)| (run.grid.x_center(i), u))
        .collect()
}

fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xm = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(x, y) in points {
        num += (x - xm) * (y - ym);
        den += (x - xm) * (x - xm);
    }
    num / den
}
