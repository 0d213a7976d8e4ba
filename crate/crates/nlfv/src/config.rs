//! Run configuration and the flat key-value config format.
//!
//! Configs are diffable text files, one dotted key per line:
//!
//! ```text
//! # two-lane setup
//! grid.x_min = -4
//! grid.x_max = 4
//! grid.dx = 0.00625
//! run.beta = 0.3333
//! run.lambda = cfl
//! run.t_final = 0.5
//! kernel.shape = linear
//! kernel.eta = 0.625
//! lanes.0.v_scale = 1.5
//! lanes.0.g = lwr
//! lanes.0.shape = lwr
//! lanes.0.u0 = sin2
//! lanes.1.v_scale = 2.5
//! lanes.1.u0 = cos2
//! integrator = unsplit
//! outputs.snapshot_times = 0, 0.017, 0.33, 0.5
//! outputs.diagnostics = true
//! ```
//!
//! Unknown keys are rejected; omitted keys fall back to logged defaults.
//! `kernel.eta = dx` selects the one-cell kernel, i.e. the local model.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kernel::CenterConvention;
use crate::model::{validate_system, FluxFactor, KernelSpec, LaneModel, SystemSpec, VelocityShape};
use crate::scheme::{GridSpec, InitialData};

/// Time integrator selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Integrator {
    #[default]
    Unsplit,
    Split,
}

/// How the time-step ratio is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum LambdaPolicy {
    /// The computed CFL bound.
    #[default]
    Cfl,
    /// A fixed ratio, used verbatim (with a logged warning if it exceeds
    /// the bound).
    Fixed(f64),
}

/// Everything needed to reproduce one run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub spec: SystemSpec,
    pub initial: Vec<InitialData>,
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    pub beta: f64,
    pub t_final: f64,
    pub lambda: LambdaPolicy,
    pub integrator: Integrator,
    /// Times at which states are recorded, hit exactly by step truncation.
    pub snapshot_times: Vec<f64>,
    /// Record the per-step diagnostics log.
    pub diagnostics: bool,
    /// Compensated summation in the convolution.
    pub kahan: bool,
    pub center: CenterConvention,
}

impl RunConfig {
    pub fn new(
        spec: SystemSpec,
        initial: Vec<InitialData>,
        x_min: f64,
        x_max: f64,
        dx: f64,
        beta: f64,
        t_final: f64,
    ) -> Self {
        Self {
            spec,
            initial,
            x_min,
            x_max,
            dx,
            beta,
            t_final,
            lambda: LambdaPolicy::Cfl,
            integrator: Integrator::Unsplit,
            snapshot_times: vec![t_final],
            diagnostics: false,
            kahan: false,
            center: CenterConvention::Symmetric,
        }
    }

    pub fn with_lambda(mut self, lambda: LambdaPolicy) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    pub fn with_diagnostics(mut self, on: bool) -> Self {
        self.diagnostics = on;
        self
    }

    /// Collapses the kernel support to one cell, turning the run into its
    /// local counterpart.
    pub fn with_local_kernel(mut self) -> Self {
        self.spec.kernel.eta = self.dx;
        self
    }

    /// Grid geometry of this configuration, without a time step attached.
    pub fn build_grid(&self) -> Result<GridSpec> {
        GridSpec::from_dx(self.x_min, self.x_max, self.dx, self.beta, self.t_final)
    }
}

/// Parses and validates a config file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

/// [`parse_config`] on an in-memory string.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut keys: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if keys.insert(key.clone(), (line_no, value)).is_some() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("duplicate key `{key}`"),
            });
        }
    }

    let mut parser = Parser { keys };
    let config = parser.build()?;
    parser.reject_unknown()?;

    let violations = validate_system(&config.spec);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(config)
}

struct Parser {
    keys: BTreeMap<String, (usize, String)>,
}

impl Parser {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.keys.remove(key)
    }

    fn take_f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            Some((line, v)) => v.parse::<f64>().map_err(|_| Error::Parse {
                line,
                msg: format!("key `{key}`: expected a number, got `{v}`"),
            }),
            None => {
                log::info!("config: `{key}` defaulted to {default}");
                Ok(default)
            }
        }
    }

    fn take_bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            Some((line, v)) => match v.as_str() {
                "true" | "yes" | "on" => Ok(true),
                "false" | "no" | "off" => Ok(false),
                other => Err(Error::Parse {
                    line,
                    msg: format!("key `{key}`: expected a boolean, got `{other}`"),
                }),
            },
            None => {
                log::info!("config: `{key}` defaulted to {default}");
                Ok(default)
            }
        }
    }

    fn build(&mut self) -> Result<RunConfig> {
        let x_min = self.take_f64("grid.x_min", -4.0)?;
        let x_max = self.take_f64("grid.x_max", 4.0)?;
        let dx = match self.take("grid.dx") {
            Some((line, v)) => v.parse::<f64>().map_err(|_| Error::Parse {
                line,
                msg: format!("key `grid.dx`: expected a number, got `{v}`"),
            })?,
            None => {
                return Err(Error::Parse {
                    line: 0,
                    msg: "missing required key `grid.dx`".into(),
                })
            }
        };
        let beta = self.take_f64("run.beta", 0.3333)?;
        if !(beta > 0.0 && beta < 2.0 / 3.0) {
            return Err(Error::Parse {
                line: 0,
                msg: format!("run.beta = {beta} outside (0, 2/3)"),
            });
        }
        let t_final = self.take_f64("run.t_final", 0.5)?;
        let lambda = match self.take("run.lambda") {
            None => {
                log::info!("config: `run.lambda` defaulted to cfl");
                LambdaPolicy::Cfl
            }
            Some((_, v)) if v == "cfl" => LambdaPolicy::Cfl,
            Some((line, v)) => {
                let l = v.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("key `run.lambda`: expected `cfl` or a number, got `{v}`"),
                })?;
                LambdaPolicy::Fixed(l)
            }
        };

        let kernel_eta = match self.take("kernel.eta") {
            None => {
                log::info!("config: `kernel.eta` defaulted to dx (local model)");
                dx
            }
            Some((_, v)) if v == "dx" => dx,
            Some((line, v)) => v.parse::<f64>().map_err(|_| Error::Parse {
                line,
                msg: format!("key `kernel.eta`: expected `dx` or a number, got `{v}`"),
            })?,
        };
        let kernel = match self.take("kernel.shape") {
            None => {
                log::info!("config: `kernel.shape` defaulted to linear");
                KernelSpec::linear(kernel_eta)
            }
            Some((_, v)) if v == "linear" => KernelSpec::linear(kernel_eta),
            Some((_, v)) if v == "constant" => KernelSpec::constant(kernel_eta),
            Some((line, v)) => {
                return Err(Error::Parse {
                    line,
                    msg: format!("key `kernel.shape`: expected `linear` or `constant`, got `{v}`"),
                })
            }
        };

        // lanes.<k>.<field>, contiguous from zero
        let mut lanes = Vec::new();
        let mut initial = Vec::new();
        for k in 0.. {
            let prefix = format!("lanes.{k}.");
            let any = self.keys.keys().any(|key| key.starts_with(&prefix));
            if !any {
                break;
            }
            let v_scale = match self.take(&format!("lanes.{k}.v_scale")) {
                Some((line, v)) => v.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("key `lanes.{k}.v_scale`: expected a number, got `{v}`"),
                })?,
                None => {
                    return Err(Error::Parse {
                        line: 0,
                        msg: format!("missing required key `lanes.{k}.v_scale`"),
                    })
                }
            };
            let g = match self.take(&format!("lanes.{k}.g")) {
                None => {
                    log::info!("config: `lanes.{k}.g` defaulted to lwr");
                    FluxFactor::Lwr
                }
                Some((_, v)) if v == "lwr" => FluxFactor::Lwr,
                Some((_, v)) if v == "constant" => FluxFactor::Constant,
                Some((line, v)) => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("key `lanes.{k}.g`: expected `lwr` or `constant`, got `{v}`"),
                    })
                }
            };
            let shape = match self.take(&format!("lanes.{k}.shape")) {
                None => {
                    log::info!("config: `lanes.{k}.shape` defaulted to lwr");
                    VelocityShape::Lwr
                }
                Some((_, v)) if v == "lwr" => VelocityShape::Lwr,
                Some((_, v)) if v == "constant" => VelocityShape::Constant,
                Some((line, v)) => {
                    return Err(Error::Parse {
                        line,
                        msg: format!(
                            "key `lanes.{k}.shape`: expected `lwr` or `constant`, got `{v}`"
                        ),
                    })
                }
            };
            let u0 = match self.take(&format!("lanes.{k}.u0")) {
                None => {
                    log::info!("config: `lanes.{k}.u0` defaulted to zero");
                    InitialData::Zero
                }
                Some((line, v)) => parse_initial(&v, line)?,
            };
            lanes.push(LaneModel::new(v_scale, g, shape));
            initial.push(u0);
        }
        if lanes.is_empty() {
            return Err(Error::Parse {
                line: 0,
                msg: "no lanes configured (need at least `lanes.0.v_scale`)".into(),
            });
        }

        let mut spec = SystemSpec::new(lanes, kernel);
        match self.take("source_lipschitz") {
            None => log::info!(
                "config: `source_lipschitz` defaulted to {} (auto)",
                spec.source_lipschitz
            ),
            Some((_, v)) if v == "auto" => {}
            Some((line, v)) => {
                let bound = v.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("key `source_lipschitz`: expected `auto` or a number, got `{v}`"),
                })?;
                spec = spec.with_source_lipschitz(bound);
            }
        }

        let integrator = match self.take("integrator") {
            None => {
                log::info!("config: `integrator` defaulted to unsplit");
                Integrator::Unsplit
            }
            Some((_, v)) if v == "unsplit" => Integrator::Unsplit,
            Some((_, v)) if v == "split" => Integrator::Split,
            Some((line, v)) => {
                return Err(Error::Parse {
                    line,
                    msg: format!("key `integrator`: expected `unsplit` or `split`, got `{v}`"),
                })
            }
        };

        let snapshot_times = match self.take("outputs.snapshot_times") {
            None => {
                log::info!("config: `outputs.snapshot_times` defaulted to t_final");
                vec![t_final]
            }
            Some((line, v)) => {
                let mut times = Vec::new();
                for part in v.split(',') {
                    let t = part.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        msg: format!("key `outputs.snapshot_times`: bad entry `{part}`"),
                    })?;
                    times.push(t);
                }
                times
            }
        };
        let diagnostics = self.take_bool("outputs.diagnostics", false)?;
        let kahan = self.take_bool("numerics.kahan", false)?;
        let center = match self.take("numerics.center_convention") {
            None => {
                log::info!("config: `numerics.center_convention` defaulted to symmetric");
                CenterConvention::Symmetric
            }
            Some((line, v)) => CenterConvention::parse(&v).ok_or_else(|| Error::Parse {
                line,
                msg: format!(
                    "key `numerics.center_convention`: expected `symmetric` or `paper-proof`, got `{v}`"
                ),
            })?,
        };

        Ok(RunConfig {
            spec,
            initial,
            x_min,
            x_max,
            dx,
            beta,
            t_final,
            lambda,
            integrator,
            snapshot_times,
            diagnostics,
            kahan,
            center,
        })
    }

    fn reject_unknown(&self) -> Result<()> {
        if let Some((key, (line, _))) = self.keys.iter().next() {
            return Err(Error::Parse {
                line: *line,
                msg: format!("unknown key `{key}`"),
            });
        }
        Ok(())
    }
}

fn parse_initial(value: &str, line: usize) -> Result<InitialData> {
    if value == "zero" {
        return Ok(InitialData::Zero);
    }
    if value == "sin2" {
        return Ok(InitialData::SinSquaredBump);
    }
    if value == "cos2" {
        return Ok(InitialData::CosSquaredBump);
    }
    if let Some(rest) = value.strip_prefix("const:") {
        let c = rest.trim().parse::<f64>().map_err(|_| Error::Parse {
            line,
            msg: format!("bad constant initial datum `{value}`"),
        })?;
        return Ok(InitialData::Constant(c));
    }
    if let Some(rest) = value.strip_prefix("indicator:") {
        let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
        if parts.len() == 3 {
            let lo = parts[0].parse::<f64>();
            let hi = parts[1].parse::<f64>();
            let height = parts[2].parse::<f64>();
            if let (Ok(lo), Ok(hi), Ok(height)) = (lo, hi, height) {
                return Ok(InitialData::Indicator { lo, hi, height });
            }
        }
        return Err(Error::Parse {
            line,
            msg: format!("bad indicator initial datum `{value}`, expected `indicator:lo,hi,height`"),
        });
    }
    Err(Error::Parse {
        line,
        msg: format!(
            "unknown initial datum `{value}` (expected zero, sin2, cos2, const:<v>, indicator:lo,hi,h)"
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_LANE: &str = "\
# two-lane scenario
grid.x_min = -4
grid.x_max = 4
grid.dx = 0.00625
run.beta = 0.3333
run.t_final = 0.5
kernel.shape = linear
kernel.eta = 0.0625
lanes.0.v_scale = 1.5
lanes.0.g = lwr
lanes.0.shape = lwr
lanes.0.u0 = sin2
lanes.1.v_scale = 2.5
lanes.1.g = lwr
lanes.1.shape = lwr
lanes.1.u0 = cos2
outputs.snapshot_times = 0, 0.017, 0.33, 0.5
outputs.diagnostics = true
";

    #[test]
    fn two_lane_config_parses_to_scenario_setup() {
        let config = parse_config_str(TWO_LANE).unwrap();
        assert_eq!(config.spec.n_lanes(), 2);
        assert_eq!(config.spec.lanes[0].v_scale, 1.5);
        assert_eq!(config.spec.lanes[1].v_scale, 2.5);
        assert_eq!(config.spec.kernel.eta, 0.0625);
        assert_eq!(config.dx, 0.00625);
        assert_eq!(config.snapshot_times, vec![0.0, 0.017, 0.33, 0.5]);
        assert!(config.diagnostics);
        assert_eq!(config.lambda, LambdaPolicy::Cfl);
        let grid = config.build_grid().unwrap();
        assert_eq!(grid.n_cells, 1280);
    }

    #[test]
    fn minimal_single_lane_config_applies_defaults() {
        let config = parse_config_str("grid.dx = 0.1\nlanes.0.v_scale = 1.0\n").unwrap();
        assert_eq!(config.spec.n_lanes(), 1);
        assert_eq!(config.x_min, -4.0);
        assert_eq!(config.x_max, 4.0);
        assert_eq!(config.beta, 0.3333);
        assert_eq!(config.t_final, 0.5);
        // eta defaults to dx: the local model
        assert_eq!(config.spec.kernel.eta, 0.1);
        assert_eq!(config.integrator, Integrator::Unsplit);
        assert!(!config.kahan);
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let err = parse_config_str("grid.dx = 0.1\nlanes.0.v_scale = 1\nbogus.key = 3\n")
            .unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("bogus.key"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_beta_is_rejected() {
        let err =
            parse_config_str("grid.dx = 0.1\nrun.beta = 0.7\nlanes.0.v_scale = 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
    }

    #[test]
    fn a1_violating_model_is_rejected_by_validation() {
        let err = parse_config_str("grid.dx = 0.1\nlanes.0.v_scale = 1\nlanes.0.g = constant\n")
            .unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let err = parse_config_str("grid.dx = 0.1\ngrid.dx = 0.2\nlanes.0.v_scale = 1\n")
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn local_sentinel_resolves_to_dx() {
        let config =
            parse_config_str("grid.dx = 0.05\nkernel.eta = dx\nlanes.0.v_scale = 1.0\n").unwrap();
        assert_eq!(config.spec.kernel.eta, 0.05);
    }
}
