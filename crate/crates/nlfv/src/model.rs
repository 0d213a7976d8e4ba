//! Traffic system definition: per-lane flux factors and velocities, the
//! look-ahead kernel, and the lane-exchange source term.
//!
//! A system of `N` lanes evolves densities `u^k` under
//!
//! ```text
//!   d/dt u^k + d/dx ( f^k(u^k) nu^k(x, u^k * w) ) = R^k,      k = 1..N,
//!   f^k(u) = u g^k(u),
//!   R^k    = S^{k-1}(x, u^{k-1}, u^k, c^{k-1}, c^k)
//!          - S^k  (x, u^k, u^{k+1}, c^k, c^{k+1}),
//! ```
//!
//! where `c^k = u^k * w` is the downstream average of lane `k` and `S^k` is
//! the rate at which vehicles leave lane `k` for lane `k+1`, driven by the
//! velocity difference of the two lanes. `S^0 = S^N = 0`: vehicles cannot
//! cross the boundary lanes, so the exchange telescopes and total mass is
//! conserved.
//!
//! The structural assumptions are checked by [`validate_system`]:
//!
//! * A1 — `g^k` is Lipschitz, non-increasing, and `g^k(1) = 0`;
//! * A2 — `nu^k` is bounded on the domain times `[0, 1]`;
//! * A3 — the spatial dependence of `nu^k` has bounded variation;
//! * A4 — the kernel is non-negative, non-increasing and normalized.

use std::fmt;
use std::sync::Arc;

/// Number of equispaced samples used when checking monotonicity of `g` and
/// when bounding `|f|_Lip` for custom flux factors.
const SAMPLES: usize = 1001;

/// Step used by the central finite-difference fallback for `g'`.
const FD_STEP: f64 = 1e-6;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Flux reduction factor `g(u)` on `[0, 1]`.
#[derive(Clone)]
pub enum FluxFactor {
    /// `g(u) = 1 - u` (the LWR choice).
    Lwr,
    /// `g(u) = 1`; linear flux `f(u) = u`. Violates A1 (`g(1) != 0`) but is
    /// accepted by the solver for splitting and limit studies.
    Constant,
    /// User-supplied factor with an optional closed-form derivative.
    Custom {
        g: ScalarFn,
        g_prime: Option<ScalarFn>,
    },
}

impl fmt::Debug for FluxFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FluxFactor::Lwr => write!(f, "Lwr"),
            FluxFactor::Constant => write!(f, "Constant"),
            FluxFactor::Custom { .. } => write!(f, "Custom"),
        }
    }
}

/// Dependence of the lane velocity on the convolved density.
#[derive(Clone)]
pub enum VelocityShape {
    /// `shape(c) = 1 - c`: drivers slow down in dense downstream traffic.
    Lwr,
    /// `shape(c) = 1`: constant-velocity lane.
    Constant,
    /// User-supplied shape on `[0, 1]`.
    Custom(ScalarFn),
}

impl fmt::Debug for VelocityShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VelocityShape::Lwr => write!(f, "Lwr"),
            VelocityShape::Constant => write!(f, "Constant"),
            VelocityShape::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Multiplicative spatial factor of the velocity, `nu(x, c) = v_scale *
/// eta_factor(x) * shape(c)`. Models changing road conditions; the built-in
/// scenarios are space-homogeneous.
#[derive(Clone)]
pub enum SpatialFactor {
    One,
    /// Custom factor together with its supremum over the domain.
    Custom { f: ScalarFn, sup: f64 },
}

impl fmt::Debug for SpatialFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpatialFactor::One => write!(f, "One"),
            SpatialFactor::Custom { sup, .. } => write!(f, "Custom(sup={sup})"),
        }
    }
}

/// One lane of the system: flux factor, velocity and the Lipschitz/bound
/// metadata consumed by the CFL condition.
#[derive(Clone, Debug)]
pub struct LaneModel {
    pub v_scale: f64,
    pub g: FluxFactor,
    pub shape: VelocityShape,
    pub eta_factor: SpatialFactor,
    /// Lipschitz constant of `f(u) = u g(u)` on `[0, 1]`.
    pub lip_f: f64,
    /// Supremum of `|nu|` over the domain times `[0, 1]`.
    pub nu_sup: f64,
}

impl LaneModel {
    pub fn new(v_scale: f64, g: FluxFactor, shape: VelocityShape) -> Self {
        Self::with_spatial_factor(v_scale, g, shape, SpatialFactor::One)
    }

    pub fn with_spatial_factor(
        v_scale: f64,
        g: FluxFactor,
        shape: VelocityShape,
        eta_factor: SpatialFactor,
    ) -> Self {
        let mut lane = Self {
            v_scale,
            g,
            shape,
            eta_factor,
            lip_f: 0.0,
            nu_sup: 0.0,
        };
        lane.lip_f = lane.compute_lip_f();
        lane.nu_sup = lane.compute_nu_sup();
        lane
    }

    /// The LWR lane of the two-lane scenario: `g(u) = 1 - u`,
    /// `nu(x, c) = v_scale * (1 - c)`.
    pub fn lwr(v_scale: f64) -> Self {
        Self::new(v_scale, FluxFactor::Lwr, VelocityShape::Lwr)
    }

    #[inline]
    pub fn g(&self, u: f64) -> f64 {
        match &self.g {
            FluxFactor::Lwr => 1.0 - u,
            FluxFactor::Constant => 1.0,
            FluxFactor::Custom { g, .. } => g(u),
        }
    }

    /// `g'(u)`; central finite differences when no closed form is supplied.
    #[inline]
    pub fn g_prime(&self, u: f64) -> f64 {
        match &self.g {
            FluxFactor::Lwr => -1.0,
            FluxFactor::Constant => 0.0,
            FluxFactor::Custom { g, g_prime } => match g_prime {
                Some(dg) => dg(u),
                None => (g(u + FD_STEP) - g(u - FD_STEP)) / (2.0 * FD_STEP),
            },
        }
    }

    /// `f(u) = u g(u)`.
    #[inline]
    pub fn f(&self, u: f64) -> f64 {
        u * self.g(u)
    }

    #[inline]
    pub fn shape(&self, c: f64) -> f64 {
        match &self.shape {
            VelocityShape::Lwr => 1.0 - c,
            VelocityShape::Constant => 1.0,
            VelocityShape::Custom(s) => s(c),
        }
    }

    #[inline]
    pub fn eta_factor(&self, x: f64) -> f64 {
        match &self.eta_factor {
            SpatialFactor::One => 1.0,
            SpatialFactor::Custom { f, .. } => f(x),
        }
    }

    /// Lane velocity `nu(x, c) = v_scale * eta_factor(x) * shape(c)`.
    #[inline]
    pub fn nu(&self, x: f64, c: f64) -> f64 {
        self.v_scale * self.eta_factor(x) * self.shape(c)
    }

    fn compute_lip_f(&self) -> f64 {
        match &self.g {
            // |f'(u)| = |g(u) + u g'(u)| = |1 - 2u| <= 1 on [0, 1].
            FluxFactor::Lwr => 1.0,
            FluxFactor::Constant => 1.0,
            FluxFactor::Custom { .. } => {
                let mut sup: f64 = 0.0;
                for i in 0..SAMPLES {
                    let u = i as f64 / (SAMPLES - 1) as f64;
                    sup = sup.max((self.g(u) + u * self.g_prime(u)).abs());
                }
                // headroom for the sampling gap
                sup * (1.0 + 1e-3)
            }
        }
    }

    fn compute_nu_sup(&self) -> f64 {
        let shape_sup = match &self.shape {
            VelocityShape::Lwr | VelocityShape::Constant => 1.0,
            VelocityShape::Custom(s) => {
                let mut sup: f64 = 0.0;
                for i in 0..SAMPLES {
                    let c = i as f64 / (SAMPLES - 1) as f64;
                    sup = sup.max(s(c).abs());
                }
                sup
            }
        };
        let spatial_sup = match &self.eta_factor {
            SpatialFactor::One => 1.0,
            SpatialFactor::Custom { sup, .. } => *sup,
        };
        self.v_scale.abs() * spatial_sup * shape_sup
    }

    /// Largest `|g'|` over `[0, 1]`, used by the default source Lipschitz
    /// bound.
    fn g_prime_sup(&self) -> f64 {
        match &self.g {
            FluxFactor::Lwr => 1.0,
            FluxFactor::Constant => 0.0,
            FluxFactor::Custom { .. } => {
                let mut sup: f64 = 0.0;
                for i in 0..SAMPLES {
                    let u = i as f64 / (SAMPLES - 1) as f64;
                    sup = sup.max(self.g_prime(u).abs());
                }
                sup
            }
        }
    }
}

/// Analytic or tabulated kernel shape on `[0, eta]`.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelShape {
    /// `w(s) = 2 (eta - s) / eta^2`: linear, decreasing to zero at `s = eta`.
    /// Drivers weight nearby downstream vehicles the most.
    LinearDecreasing,
    /// `w(s) = 1 / eta`: uniform downstream average.
    Constant,
    /// Values of `w` at equispaced samples `s_j = j eta / (M - 1)`,
    /// interpreted as a piecewise-linear function.
    Tabulated(Vec<f64>),
}

/// Look-ahead kernel specification.
#[derive(Clone, Debug)]
pub struct KernelSpec {
    pub shape: KernelShape,
    /// Support length; the kernel vanishes outside `[0, eta]`.
    pub eta: f64,
    /// Caller claims the kernel already integrates to one; skips the final
    /// renormalization when the claim holds within tolerance.
    pub pre_normalized: bool,
}

impl KernelSpec {
    pub fn linear(eta: f64) -> Self {
        Self {
            shape: KernelShape::LinearDecreasing,
            eta,
            pre_normalized: true,
        }
    }

    pub fn constant(eta: f64) -> Self {
        Self {
            shape: KernelShape::Constant,
            eta,
            pre_normalized: true,
        }
    }

    pub fn tabulated(eta: f64, samples: Vec<f64>) -> Self {
        Self {
            shape: KernelShape::Tabulated(samples),
            eta,
            pre_normalized: false,
        }
    }
}

/// The full coupled system: lanes, shared kernel and the source Lipschitz
/// bound that enters the CFL condition.
#[derive(Clone, Debug)]
pub struct SystemSpec {
    pub lanes: Vec<LaneModel>,
    /// One kernel shared by the convective and source terms.
    pub kernel: KernelSpec,
    /// Per-lane kernels are representable for forward compatibility but the
    /// time stepper rejects them.
    pub per_lane_kernels: Option<Vec<KernelSpec>>,
    /// Lipschitz bound of the exchange rate `S` on `[0, 1]^4`.
    pub source_lipschitz: f64,
}

impl SystemSpec {
    /// Builds a spec with the default source Lipschitz bound
    /// `2 * max_k v_scale_k * max(1, sup |g'|)`, which vanishes for a single
    /// lane (the source is identically zero there).
    pub fn new(lanes: Vec<LaneModel>, kernel: KernelSpec) -> Self {
        let source_lipschitz = default_source_lipschitz(&lanes);
        Self {
            lanes,
            kernel,
            per_lane_kernels: None,
            source_lipschitz,
        }
    }

    pub fn with_source_lipschitz(mut self, bound: f64) -> Self {
        self.source_lipschitz = bound;
        self
    }

    /// The two-lane scenario: `g(u) = 1 - u`, `nu^1 = 1.5 (1 - c)`,
    /// `nu^2 = 2.5 (1 - c)`, linear kernel of support `eta`.
    pub fn two_lane_lwr(eta: f64) -> Self {
        Self::new(
            vec![LaneModel::lwr(1.5), LaneModel::lwr(2.5)],
            KernelSpec::linear(eta),
        )
    }

    /// Two-lane variant with linear flux `f(u) = u` and the same velocities;
    /// the subclass used by the splitting-order study.
    pub fn two_lane_linear_flux(eta: f64) -> Self {
        Self::new(
            vec![
                LaneModel::new(1.5, FluxFactor::Constant, VelocityShape::Lwr),
                LaneModel::new(2.5, FluxFactor::Constant, VelocityShape::Lwr),
            ],
            KernelSpec::linear(eta),
        )
    }

    /// Single LWR lane; the source vanishes identically.
    pub fn single_lane_lwr(v_scale: f64, eta: f64) -> Self {
        Self::new(vec![LaneModel::lwr(v_scale)], KernelSpec::linear(eta))
    }

    pub fn n_lanes(&self) -> usize {
        self.lanes.len()
    }

    /// Largest `lip_f * nu_sup` over lanes; denominator of the CFL bound.
    pub fn max_lip_f_nu_sup(&self) -> f64 {
        self.lanes
            .iter()
            .map(|l| l.lip_f * l.nu_sup)
            .fold(0.0, f64::max)
    }
}

fn default_source_lipschitz(lanes: &[LaneModel]) -> f64 {
    if lanes.len() <= 1 {
        return 0.0;
    }
    let v_max = lanes.iter().map(|l| l.v_scale.abs()).fold(0.0, f64::max);
    let dg_max = lanes.iter().map(|l| l.g_prime_sup()).fold(0.0, f64::max);
    2.0 * v_max * dg_max.max(1.0)
}

/// Structural assumption labels reported by [`validate_system`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assumption {
    /// Flux factor: Lipschitz, non-increasing, `g(1) = 0`.
    A1,
    /// Velocity boundedness.
    A2,
    /// Bounded-variation spatial dependence of the velocity.
    A3,
    /// Kernel admissibility: non-negative, non-increasing, unit mass.
    A4,
    /// Basic system shape (at least one lane, consistent per-lane kernels).
    Shape,
}

/// One violated assumption together with the witnessing sample point.
#[derive(Clone, Debug)]
pub struct Violation {
    pub assumption: Assumption,
    /// Lane index for per-lane assumptions.
    pub lane: Option<usize>,
    /// Sample point (density, convolved value, or kernel abscissa).
    pub witness: Option<f64>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.assumption)?;
        if let Some(lane) = self.lane {
            write!(f, "[lane {lane}]")?;
        }
        write!(f, ": {}", self.detail)?;
        if let Some(w) = self.witness {
            write!(f, " (at {w})")?;
        }
        Ok(())
    }
}

const G_ZERO_TOL: f64 = 1e-12;
const MONOTONE_TOL: f64 = 1e-12;
const NORMALIZATION_TOL_ANALYTIC: f64 = 1e-14;
const NORMALIZATION_TOL_TABULATED: f64 = 1e-10;

/// Checks a system against the structural assumptions A1-A4 and returns
/// every violation found. Violations are data, not errors; an admissible
/// spec returns an empty list.
pub fn validate_system(spec: &SystemSpec) -> Vec<Violation> {
    let mut out = Vec::new();

    if spec.lanes.is_empty() {
        out.push(Violation {
            assumption: Assumption::Shape,
            lane: None,
            witness: None,
            detail: "system must have at least one lane".into(),
        });
    }
    if let Some(ks) = &spec.per_lane_kernels {
        if ks.len() != spec.lanes.len() {
            out.push(Violation {
                assumption: Assumption::Shape,
                lane: None,
                witness: None,
                detail: format!(
                    "per-lane kernel list has {} entries for {} lanes",
                    ks.len(),
                    spec.lanes.len()
                ),
            });
        }
    }

    for (k, lane) in spec.lanes.iter().enumerate() {
        validate_lane(k, lane, &mut out);
    }

    validate_kernel(&spec.kernel, None, &mut out);
    if let Some(ks) = &spec.per_lane_kernels {
        for (k, kernel) in ks.iter().enumerate() {
            validate_kernel(kernel, Some(k), &mut out);
        }
    }

    out
}

fn validate_lane(k: usize, lane: &LaneModel, out: &mut Vec<Violation>) {
    // A1: g(1) = 0.
    let g1 = lane.g(1.0);
    if g1.abs() > G_ZERO_TOL {
        out.push(Violation {
            assumption: Assumption::A1,
            lane: Some(k),
            witness: Some(1.0),
            detail: format!("g(1) = {g1}, expected 0"),
        });
    }
    // A1: g non-increasing, sampled on an equispaced grid.
    let mut prev = lane.g(0.0);
    for i in 1..SAMPLES {
        let u = i as f64 / (SAMPLES - 1) as f64;
        let cur = lane.g(u);
        if cur > prev + MONOTONE_TOL {
            out.push(Violation {
                assumption: Assumption::A1,
                lane: Some(k),
                witness: Some(u),
                detail: format!("g increases: g({u}) = {cur} > {prev}"),
            });
            break;
        }
        prev = cur;
    }
    // A1/A2: finite evaluations.
    if !lane.lip_f.is_finite() {
        out.push(Violation {
            assumption: Assumption::A1,
            lane: Some(k),
            witness: None,
            detail: "Lipschitz constant of f is not finite".into(),
        });
    }
    // A2: nu bounded on domain x [0,1].
    if !(lane.nu_sup.is_finite() && lane.v_scale.is_finite() && lane.v_scale > 0.0) {
        out.push(Violation {
            assumption: Assumption::A2,
            lane: Some(k),
            witness: None,
            detail: format!(
                "velocity bound not finite/positive: v_scale = {}, nu_sup = {}",
                lane.v_scale, lane.nu_sup
            ),
        });
    }
    // A3: the spatial factor must come with a finite supremum; the built-in
    // factor is constant and trivially of bounded variation.
    if let SpatialFactor::Custom { sup, .. } = &lane.eta_factor {
        if !sup.is_finite() {
            out.push(Violation {
                assumption: Assumption::A3,
                lane: Some(k),
                witness: None,
                detail: "spatial factor supremum is not finite".into(),
            });
        }
    }
}

fn validate_kernel(kernel: &KernelSpec, lane: Option<usize>, out: &mut Vec<Violation>) {
    if !(kernel.eta.is_finite() && kernel.eta > 0.0) {
        out.push(Violation {
            assumption: Assumption::A4,
            lane,
            witness: Some(kernel.eta),
            detail: "kernel support must be positive and finite".into(),
        });
        return;
    }
    match &kernel.shape {
        // Closed forms are non-negative, non-increasing and normalized by
        // construction.
        KernelShape::LinearDecreasing | KernelShape::Constant => {}
        KernelShape::Tabulated(samples) => {
            if samples.len() < 2 {
                out.push(Violation {
                    assumption: Assumption::A4,
                    lane,
                    witness: None,
                    detail: "tabulated kernel needs at least two samples".into(),
                });
                return;
            }
            let ds = kernel.eta / (samples.len() - 1) as f64;
            for (j, &w) in samples.iter().enumerate() {
                if !(w.is_finite() && w >= 0.0) {
                    out.push(Violation {
                        assumption: Assumption::A4,
                        lane,
                        witness: Some(j as f64 * ds),
                        detail: format!("kernel sample {j} is negative or not finite: {w}"),
                    });
                    break;
                }
            }
            for j in 1..samples.len() {
                if samples[j] > samples[j - 1] + MONOTONE_TOL {
                    out.push(Violation {
                        assumption: Assumption::A4,
                        lane,
                        witness: Some(j as f64 * ds),
                        detail: format!(
                            "kernel increases between samples {} and {}: {} -> {}",
                            j - 1,
                            j,
                            samples[j - 1],
                            samples[j]
                        ),
                    });
                    break;
                }
            }
            if kernel.pre_normalized {
                // trapezoid rule is exact for the piecewise-linear shape
                let mut mass = 0.0;
                for j in 1..samples.len() {
                    mass += 0.5 * (samples[j - 1] + samples[j]) * ds;
                }
                if (mass - 1.0).abs() > NORMALIZATION_TOL_TABULATED {
                    out.push(Violation {
                        assumption: Assumption::A4,
                        lane,
                        witness: None,
                        detail: format!("kernel claims unit mass but integrates to {mass}"),
                    });
                }
            }
        }
    }
}

/// Tolerance check used by kernel discretization for analytic shapes.
pub(crate) fn analytic_normalization_tol() -> f64 {
    NORMALIZATION_TOL_ANALYTIC
}

/// Lane-exchange rate `S^k`: the flow from lane `k` into lane `k+1`
/// (one-based lane indices; `k = 0` and `k = N` are the solid outer walls).
///
/// `a`, `b` are the densities of lanes `k` and `k+1`; `A`, `B` their
/// convolved values at the same position. With
/// `dv = g^{k+1}(b) nu^{k+1}(x, B) - g^k(a) nu^k(x, A)`,
///
/// ```text
///   S^k = dv^+ a - dv^- b,
/// ```
///
/// so vehicles move toward the lane that is currently faster, at a rate
/// weighted by the density of the lane they leave.
#[inline]
pub fn source_exchange(
    spec: &SystemSpec,
    k: usize,
    x: f64,
    a: f64,
    b: f64,
    big_a: f64,
    big_b: f64,
) -> f64 {
    let n = spec.lanes.len();
    if k == 0 || k >= n {
        return 0.0;
    }
    let lane_k = &spec.lanes[k - 1];
    let lane_kp1 = &spec.lanes[k];
    let dv = lane_kp1.g(b) * lane_kp1.nu(x, big_b) - lane_k.g(a) * lane_k.nu(x, big_a);
    if dv >= 0.0 {
        dv * a
    } else {
        dv * b
    }
}

/// Net inflow `R^k` into one-based lane `k` at position `x`, given the
/// densities `u` and convolved values `c` of all lanes at that position.
#[inline]
pub fn source_net_inflow(spec: &SystemSpec, k: usize, x: f64, u: &[f64], c: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), spec.lanes.len());
    let n = spec.lanes.len();
    let incoming = if k >= 2 {
        source_exchange(spec, k - 1, x, u[k - 2], u[k - 1], c[k - 2], c[k - 1])
    } else {
        0.0
    };
    let outgoing = if k < n {
        source_exchange(spec, k, x, u[k - 1], u[k], c[k - 1], c[k])
    } else {
        0.0
    };
    incoming - outgoing
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_lane() -> SystemSpec {
        SystemSpec::two_lane_lwr(0.0625)
    }

    #[test]
    fn builtin_two_lane_is_admissible() {
        assert!(validate_system(&two_lane()).is_empty());
    }

    #[test]
    fn builtin_flux_vanishes_exactly_at_the_extremes() {
        let lane = LaneModel::lwr(2.5);
        assert_eq!(lane.f(0.0), 0.0);
        assert_eq!(lane.f(1.0), 0.0);
        assert_eq!(lane.lip_f, 1.0);
        assert_eq!(lane.nu_sup, 2.5);
    }

    #[test]
    fn constant_g_violates_a1() {
        let spec = SystemSpec::two_lane_linear_flux(0.0625);
        let report = validate_system(&spec);
        assert!(report.iter().any(|v| v.assumption == Assumption::A1));
    }

    #[test]
    fn increasing_tabulated_kernel_violates_a4() {
        let mut spec = two_lane();
        spec.kernel = KernelSpec::tabulated(0.0625, vec![1.0, 0.5, 0.8, 0.2]);
        let report = validate_system(&spec);
        assert!(report.iter().any(|v| v.assumption == Assumption::A4));
    }

    #[test]
    fn negative_tabulated_kernel_violates_a4() {
        let mut spec = two_lane();
        spec.kernel = KernelSpec::tabulated(0.0625, vec![1.0, 0.5, -0.1]);
        let report = validate_system(&spec);
        assert!(report.iter().any(|v| v.assumption == Assumption::A4));
    }

    #[test]
    fn exchange_vanishes_at_boundary_lanes() {
        let spec = two_lane();
        assert_eq!(source_exchange(&spec, 0, 0.3, 0.9, 0.1, 0.5, 0.5), 0.0);
        assert_eq!(source_exchange(&spec, 2, -1.0, 0.9, 0.1, 0.5, 0.5), 0.0);
    }

    #[test]
    fn exchange_vanishes_for_identical_lanes_and_states() {
        let spec = SystemSpec::new(
            vec![LaneModel::lwr(2.0), LaneModel::lwr(2.0)],
            KernelSpec::linear(0.0625),
        );
        let s = source_exchange(&spec, 1, 0.0, 0.4, 0.4, 0.7, 0.7);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn exchange_matches_hand_value() {
        // dv = 0.8 * 2.5 * 0.8 - 0.5 * 1.5 * 0.5 = 1.225 > 0, S = 1.225 * 0.5.
        let spec = two_lane();
        let s = source_exchange(&spec, 1, 3.14, 0.5, 0.2, 0.5, 0.2);
        assert!((s - 0.6125).abs() < 1e-15, "S = {s}");
    }

    #[test]
    fn exchange_is_zero_at_full_density_identical_lanes() {
        let spec = SystemSpec::new(
            vec![LaneModel::lwr(2.0), LaneModel::lwr(2.0)],
            KernelSpec::linear(0.0625),
        );
        // g(1) = 0 kills both velocity terms.
        assert_eq!(source_exchange(&spec, 1, 0.0, 1.0, 1.0, 0.3, 0.9), 0.0);
    }

    #[test]
    fn no_positive_part_contribution_without_donors() {
        let spec = two_lane();
        // a = 0: whatever dv^+ is, the outflow term vanishes.
        for &b in &[0.0, 0.3, 1.0] {
            let s = source_exchange(&spec, 1, 0.0, 0.0, b, 0.2, 0.9);
            assert!(s <= 0.0, "S = {s} should have no positive part with a = 0");
        }
    }

    #[test]
    fn telescoping_sum_is_zero() {
        // Three lanes; per-cell sum of net inflows must cancel exactly up to
        // one rounding of each shared exchange term.
        let spec = SystemSpec::new(
            vec![LaneModel::lwr(1.0), LaneModel::lwr(1.7), LaneModel::lwr(2.5)],
            KernelSpec::linear(0.0625),
        );
        let mut rng = 0x243f6a8885a308d3u64;
        let mut next = || {
            // xorshift is plenty for test data
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let u = [next(), next(), next()];
            let c = [next(), next(), next()];
            let r: Vec<f64> = (1..=3)
                .map(|k| source_net_inflow(&spec, k, 0.0, &u, &c))
                .collect();
            let total: f64 = r.iter().sum();
            let s_max = (1..3)
                .map(|k| source_exchange(&spec, k, 0.0, u[k - 1], u[k], c[k - 1], c[k]).abs())
                .fold(0.0, f64::max);
            assert!(
                total.abs() <= 1e-15 * s_max.max(1e-300),
                "sum {total} vs scale {s_max}"
            );
        }
    }

    #[test]
    fn exchange_sign_structure() {
        // S^k non-decreasing in a, non-increasing in b (finite differences).
        let spec = two_lane();
        let mut rng = 0x13198a2e03707344u64;
        let mut next = || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64
        };
        let h = 1e-7;
        for _ in 0..1000 {
            let (a, b, aa, bb) = (next(), next(), next(), next());
            let s0 = source_exchange(&spec, 1, 0.0, a, b, aa, bb);
            let sa = source_exchange(&spec, 1, 0.0, (a + h).min(1.0), b, aa, bb);
            let sb = source_exchange(&spec, 1, 0.0, a, (b + h).min(1.0), aa, bb);
            assert!(sa >= s0 - 1e-12, "S not non-decreasing in a: {sa} < {s0}");
            assert!(sb <= s0 + 1e-12, "S not non-increasing in b: {sb} > {s0}");
        }
    }

    #[test]
    fn default_source_lipschitz_matches_formula() {
        let spec = two_lane();
        assert!((spec.source_lipschitz - 5.0).abs() < 1e-15);
        let single = SystemSpec::single_lane_lwr(2.0, 0.1);
        assert_eq!(single.source_lipschitz, 0.0);
    }

    #[test]
    fn custom_g_uses_finite_difference_fallback() {
        let g = FluxFactor::Custom {
            g: Arc::new(|u: f64| (1.0 - u) * (1.0 - u)),
            g_prime: None,
        };
        let lane = LaneModel::new(1.0, g, VelocityShape::Constant);
        // g'(0.25) = -2 (1 - 0.25) = -1.5
        assert!((lane.g_prime(0.25) + 1.5).abs() < 1e-5);
        // lip_f >= sampled |g + u g'|; at u = 0 that is 1.
        assert!(lane.lip_f >= 1.0);
    }
}
