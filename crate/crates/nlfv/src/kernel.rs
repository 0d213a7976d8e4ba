//! Kernel discretization and the sliding-window convolution.
//!
//! The look-ahead kernel `w` on `[0, eta]` is reduced to exact cell
//! integrals
//!
//! ```text
//!   zeta_p = integral of w over [p dx, (p+1) dx],     p = 0 .. N_eta - 1,
//! ```
//!
//! with `eta = N_eta * dx`. Interface values of the downstream average are
//! then plain window sums over the `N_eta` cells to the right,
//!
//! ```text
//!   c_{i+1/2} = sum_p zeta_p u_{i+p+1},
//! ```
//!
//! and cell values are interface means. Evaluation is `O(N_eta)` per
//! interface with a fixed accumulation order (`p` ascending), so results are
//! reproducible bit for bit; an optional compensated summation mode exists
//! for diagnostics. No FFT path: supports stay small in practice and
//! determinism wins.

use crate::error::{Error, Result};
use crate::model::{analytic_normalization_tol, KernelShape, KernelSpec};

/// Relative tolerance for `eta = n_eta * dx`.
const SUPPORT_REL_TOL: f64 = 1e-12;

/// Exact per-cell integrals of the kernel.
#[derive(Clone, Debug)]
pub struct KernelWeights {
    /// `zeta_p`, non-negative, non-increasing, summing to one.
    pub zeta: Vec<f64>,
    pub eta: f64,
    pub n_eta: usize,
}

/// Which interface pair defines the cell value `c_i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CenterConvention {
    /// `c_i = (c_{i-1/2} + c_{i+1/2}) / 2`.
    #[default]
    Symmetric,
    /// `c_i = (c_{i+1/2} + c_{i+3/2}) / 2`; shifted one interface downstream.
    /// Kept selectable for sensitivity checks.
    Downwind,
}

impl CenterConvention {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "symmetric" => Some(Self::Symmetric),
            "paper-proof" | "downwind" => Some(Self::Downwind),
            _ => None,
        }
    }
}

/// Interface and cell values of the downstream averages, one row per lane.
#[derive(Clone, Debug)]
pub struct ConvolvedField {
    /// `c_half[k][j]` is the average seen from interface `x_min + j dx`,
    /// `j = 0 ..= n_cells + 1` (one extra interface for the downwind cell
    /// convention).
    pub c_half: Vec<Vec<f64>>,
    /// `c_center[k][i]`, `i = 0 .. n_cells`.
    pub c_center: Vec<Vec<f64>>,
}

/// Integrates the kernel into per-cell weights.
///
/// Closed forms for the analytic shapes; tabulated shapes use 5-point
/// Gauss-Legendre per cell on the piecewise-linear interpolant. Weights are
/// renormalized to unit sum unless the spec is flagged `pre_normalized` and
/// already within tolerance.
pub fn discretize(kernel: &KernelSpec, dx: f64, n_eta: usize) -> Result<KernelWeights> {
    if n_eta == 0 || !(dx > 0.0) {
        return Err(Error::MismatchedSupport {
            eta: kernel.eta,
            n_eta,
            dx,
        });
    }
    let support = n_eta as f64 * dx;
    if (kernel.eta - support).abs() > SUPPORT_REL_TOL * kernel.eta.abs().max(support.abs()) {
        return Err(Error::MismatchedSupport {
            eta: kernel.eta,
            n_eta,
            dx,
        });
    }

    let n = n_eta as f64;
    let mut zeta: Vec<f64> = match &kernel.shape {
        // integral of 2 (eta - s) / eta^2 over cell p
        KernelShape::LinearDecreasing => (0..n_eta)
            .map(|p| (2.0 / (n * n)) * (n - p as f64 - 0.5))
            .collect(),
        KernelShape::Constant => (0..n_eta).map(|_| 1.0 / n).collect(),
        KernelShape::Tabulated(samples) => {
            let w = PiecewiseLinear::new(samples, kernel.eta);
            let mut zeta = Vec::with_capacity(n_eta);
            for p in 0..n_eta {
                let value = gauss5(p as f64 * dx, (p + 1) as f64 * dx, |s| w.eval(s));
                if value < 0.0 {
                    return Err(Error::NegativeWeight { index: p, value });
                }
                zeta.push(value);
            }
            zeta
        }
    };

    let sum: f64 = zeta.iter().sum();
    let tol = match kernel.shape {
        KernelShape::Tabulated(_) => 1e-10,
        _ => analytic_normalization_tol(),
    };
    if !(kernel.pre_normalized && (sum - 1.0).abs() <= tol) {
        for z in &mut zeta {
            *z /= sum;
        }
    }

    Ok(KernelWeights {
        zeta,
        eta: kernel.eta,
        n_eta,
    })
}

struct PiecewiseLinear<'a> {
    samples: &'a [f64],
    eta: f64,
}

impl<'a> PiecewiseLinear<'a> {
    fn new(samples: &'a [f64], eta: f64) -> Self {
        Self { samples, eta }
    }

    fn eval(&self, s: f64) -> f64 {
        let m = self.samples.len();
        if m == 1 {
            return self.samples[0];
        }
        let pos = (s / self.eta) * (m - 1) as f64;
        let j = (pos.floor() as usize).min(m - 2);
        let frac = pos - j as f64;
        self.samples[j] * (1.0 - frac) + self.samples[j + 1] * frac
    }
}

/// 5-point Gauss-Legendre quadrature on `[a, b]`.
fn gauss5(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    const X: [f64; 5] = [
        -0.906179845938663992797626878299,
        -0.538469310105683091036314420700,
        0.0,
        0.538469310105683091036314420700,
        0.906179845938663992797626878299,
    ];
    const W: [f64; 5] = [
        0.236926885056189087514264040720,
        0.478628670499366468041291514836,
        0.568888888888888888888888888889,
        0.478628670499366468041291514836,
        0.236926885056189087514264040720,
    ];
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for i in 0..5 {
        acc += W[i] * f(mid + half * X[i]);
    }
    acc * half
}

/// Interface averages of one lane.
///
/// `u` holds the interior densities followed by a right ghost zone of at
/// least `n_eta` cells (the support of the data must be compact, so the
/// ghosts are zeros). Returns one value per interior interface:
/// `out[j] = sum_p zeta_p u[j + p]`, `j = 0 ..= n_interior`.
pub fn convolve_interfaces(u: &[f64], w: &KernelWeights) -> Result<Vec<f64>> {
    if u.len() < w.n_eta {
        return Err(Error::GhostZoneTooSmall {
            needed: w.n_eta,
            got: u.len(),
        });
    }
    let n_interior = u.len() - w.n_eta;
    let mut out = vec![0.0; n_interior + 1];
    convolve_into(&mut out, u, &w.zeta, false);
    Ok(out)
}

/// Output elements per tile of the window sum; sized so a tile of the
/// accumulator and its input window stay in L1 across all kernel passes.
const CONV_TILE: usize = 2048;

/// Low-level window sum: `out[j] = sum_p zeta[p] * u[j + p]` for every `j`,
/// accumulated in ascending `p` for each output element.
///
/// The loop is ordered with `p` outermost so the inner update is a
/// vectorizable axpy, and tiled over the output for cache locality; per
/// output element the addition order is identical to the scalar
/// `p`-ascending dot product, so results match it bit for bit.
pub(crate) fn convolve_into(out: &mut [f64], u: &[f64], zeta: &[f64], kahan: bool) {
    let m = out.len();
    assert!(u.len() + 1 >= m + zeta.len(), "input too short for window sum");
    out.fill(0.0);
    if kahan {
        let mut comp = vec![0.0; m];
        for (p, &z) in zeta.iter().enumerate() {
            let src = &u[p..p + m];
            for ((o, c), &s) in out.iter_mut().zip(comp.iter_mut()).zip(src) {
                let term = z * s - *c;
                let t = *o + term;
                *c = (t - *o) - term;
                *o = t;
            }
        }
    } else {
        let mut start = 0;
        while start < m {
            let end = (start + CONV_TILE).min(m);
            let tile = &mut out[start..end];
            for (p, &z) in zeta.iter().enumerate() {
                let src = &u[start + p..end + p];
                for (o, &s) in tile.iter_mut().zip(src) {
                    *o += z * s;
                }
            }
            start = end;
        }
    }
}

/// Cell values from interface values: means of adjacent interfaces under the
/// selected convention. `c_half` carries `n + 2` interface values; the
/// output has `n` cells.
pub fn center_values(c_half: &[f64], convention: CenterConvention) -> Vec<f64> {
    debug_assert!(c_half.len() >= 2);
    let n = c_half.len() - 2;
    match convention {
        CenterConvention::Symmetric => (0..n)
            .map(|i| 0.5 * (c_half[i] + c_half[i + 1]))
            .collect(),
        CenterConvention::Downwind => (0..n)
            .map(|i| 0.5 * (c_half[i + 1] + c_half[i + 2]))
            .collect(),
    }
}
