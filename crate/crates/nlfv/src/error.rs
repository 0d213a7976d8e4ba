//! Crate-wide error type.

use crate::model::Violation;

/// Errors produced by grid construction, kernel discretization, time
/// stepping and the study harnesses.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Kernel support is not an integer number of cells.
    #[error("kernel support mismatch: eta = {eta} but n_eta * dx = {n_eta} * {dx}")]
    MismatchedSupport { eta: f64, n_eta: usize, dx: f64 },

    /// Tabulated kernel data integrated to a negative cell weight.
    #[error("negative kernel weight zeta[{index}] = {value}")]
    NegativeWeight { index: usize, value: f64 },

    /// Convolution input does not carry enough trailing ghost cells.
    #[error("ghost zone too small: need {needed} cells, got {got}")]
    GhostZoneTooSmall { needed: usize, got: usize },

    /// Projected initial data left the admissible density range `[0, 1]`.
    #[error("initial datum out of range: lane {lane}, cell {cell}, value {value}")]
    RangeViolation { lane: usize, cell: usize, value: f64 },

    /// The CFL formula produced a non-positive time-step ratio.
    #[error("CFL condition yields non-positive lambda ({lambda})")]
    NonPositiveCfl { lambda: f64 },

    /// The solution support reached the padded edge of the domain; results
    /// past this point would silently lose mass. Enlarge the domain.
    #[error(
        "solution support reached the domain edge: lane {lane}, cell {cell}, \
         u = {value:e} at t = {t}"
    )]
    SupportOverflow { lane: usize, cell: usize, value: f64, t: f64 },

    /// L1 comparison of states on grids that are neither identical nor
    /// nested with a 2:1 ratio.
    #[error("grids are not nested: dx_a = {dx_a}, dx_b = {dx_b}")]
    NonNestedGrids { dx_a: f64, dx_b: f64 },

    /// A refinement study with fewer than two distinct resolutions, or with
    /// an exactly zero inter-resolution error.
    #[error("degenerate study: {0}")]
    DegenerateStudy(String),

    /// Per-lane kernels are accepted by the data model but not by the solver.
    #[error("per-lane kernels are not supported by the time stepper")]
    PerLaneKernelsUnsupported,

    /// Invalid grid or run parameter supplied programmatically.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Configuration file syntax or key error.
    #[error("config parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// The model violates one of its structural assumptions.
    #[error("model validation failed: {}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(list: &[Violation]) -> String {
    list.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
