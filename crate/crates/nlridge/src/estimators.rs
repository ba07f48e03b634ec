//! Group-weight estimation: Step-1 minimizers of the unbiased risk
//! estimate and Step-2 risk minimizers with the pilot substituted for the
//! clean image, under the four constraint regimes, plus the value
//! functions used as test oracles and the aggregation weights.
//!
//! Both steps minimize the same kind of quadratic: with `Q̃ = Q + α²n·I`
//! and `D̃ = D + α²n·I` (the "noisier" regularization; `α = 0` when
//! disabled), the minimizer is `I − Q̃⁻¹D̃` unconstrained, its
//! column-sum-one projection under the affine constraint, and a
//! per-column cone program otherwise. Step 1 uses `Q = YᵀY, D = D₁`;
//! Step 2 uses `Q = X̂ᵀX̂ + D₂, D = D₂`.

use crate::linalg::{cholesky_factor, CholeskyFactor, DiagMatrix, SymMatrix};
use crate::qp::{scd_minimize, ConeKind, QuadProgram};
use ndarray::{Array1, Array2, ArrayView2};

/// Default number of coordinate-descent sweeps for the cone regimes.
pub const DEFAULT_SCD_SWEEPS: usize = 100;

/// Aggregation weight assigned to an all-zero weight column (its estimate
/// is the zero patch with zero variance; the cap avoids an infinity).
pub const AGGREGATION_WEIGHT_CAP: f64 = 1e6;

/// Relative fallback ridge used when the Gram matrix is rank deficient:
/// `α² = 1e-6 · tr(Q)/(n·k)`, i.e. a millionth of the mean squared entry.
const FALLBACK_ALPHA_SQ_REL: f64 = 1e-6;

/// Constraint regime for the weight matrix columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// Unconstrained linear combinations.
    Linear,
    /// Column sums pinned to 1 (`Θᵀ1 = 1`).
    Affine,
    /// Nonnegative weights.
    Conical,
    /// Nonnegative weights with column sums 1 (convex combinations).
    Convex,
}

impl ConstraintKind {
    fn cone(self) -> Option<ConeKind> {
        match self {
            ConstraintKind::Linear | ConstraintKind::Affine => None,
            ConstraintKind::Conical => Some(ConeKind::Conical),
            ConstraintKind::Convex => Some(ConeKind::Convex),
        }
    }
}

/// Configuration shared by both weight-estimation steps.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub constraint: ConstraintKind,
    /// Noisier-risk regularization strength; 0 disables it (a data-scaled
    /// fallback is still applied automatically on rank deficiency).
    pub noisier_alpha: f64,
    /// Coordinate-descent sweeps for the cone regimes.
    pub scd_iters: usize,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            constraint: ConstraintKind::Linear,
            noisier_alpha: 0.0,
            scd_iters: DEFAULT_SCD_SWEEPS,
            seed: 0,
        }
    }
}

// ============================================================================
// Value functions
// ============================================================================

/// Unbiased risk estimate of the weights on a noisy group:
/// `‖YΘ − Y‖²_F + 2·tr(D₁Θ) − tr(D₁)`.
pub fn ure_value(theta: ArrayView2<f64>, y: ArrayView2<f64>, d1: &DiagMatrix) -> f64 {
    let residual = y.dot(&theta) - &y;
    let fro: f64 = residual.iter().map(|v| v * v).sum();
    let trace_d_theta: f64 = (0..d1.order()).map(|j| d1.get(j) * theta[(j, j)]).sum();
    fro + 2.0 * trace_d_theta - d1.trace()
}

/// Exact quadratic risk of the weights on a clean (or pilot) group:
/// `‖XΘ − X‖²_F + tr(ΘᵀD₂Θ)`.
pub fn risk_value(theta: ArrayView2<f64>, x: ArrayView2<f64>, d2: &DiagMatrix) -> f64 {
    let residual = x.dot(&theta) - &x;
    let fro: f64 = residual.iter().map(|v| v * v).sum();
    let penalty: f64 = theta
        .indexed_iter()
        .map(|((i, _), v)| d2.get(i) * v * v)
        .sum();
    fro + penalty
}

// ============================================================================
// Weight minimizers
// ============================================================================

/// Step-1 weights: the URE minimizer for the noisy group `Y` with its
/// variance summary `D₁`.
pub fn step1_weights(y: ArrayView2<f64>, d1: &DiagMatrix, cfg: &EstimatorConfig) -> Array2<f64> {
    let q = SymMatrix::gram(y);
    minimize_quadratic(&q, d1, y.nrows(), cfg)
}

/// Step-2 weights: the closed-form risk minimizer with the pilot group
/// `X̂` substituted for the clean image (`Q₂ = X̂ᵀX̂ + D₂`).
///
/// A zero column sum in `D₂` (a Poisson pilot group with an all-zero
/// column) makes the problem degenerate; the whole group falls back to
/// `Θ̂ = I` and is passed through unchanged.
pub fn step2_weights(
    xhat: ArrayView2<f64>,
    d2: &DiagMatrix,
    cfg: &EstimatorConfig,
) -> Array2<f64> {
    let k = xhat.ncols();
    if d2.values().iter().any(|&v| v == 0.0) {
        return Array2::<f64>::eye(k);
    }
    let mut q = SymMatrix::gram(xhat);
    for j in 0..k {
        let v = q.get(j, j) + d2.get(j);
        q.set(j, j, v);
    }
    minimize_quadratic(&q, d2, xhat.nrows(), cfg)
}

/// Shared four-regime minimizer of `tr(ΘᵀQΘ)/2·2 + …` — concretely, of
/// `‖·‖` objectives whose stationarity reads `Q̃Θ = Q̃ − D̃`. Retries with
/// the data-scaled fallback ridge when `Q` is rank deficient and `α = 0`;
/// a group that stays degenerate is passed through unchanged (`Θ = I`).
fn minimize_quadratic(
    q: &SymMatrix,
    d: &DiagMatrix,
    n_rows: usize,
    cfg: &EstimatorConfig,
) -> Array2<f64> {
    let k = q.order();
    let configured_sq = cfg.noisier_alpha * cfg.noisier_alpha;
    let fallback_sq = FALLBACK_ALPHA_SQ_REL * q.trace() / (n_rows * k) as f64;
    let attempts: &[f64] = if configured_sq > 0.0 {
        &[configured_sq]
    } else {
        &[0.0, fallback_sq]
    };
    for &alpha_sq in attempts {
        let ridge = alpha_sq * n_rows as f64;
        let mut q_t = q.clone();
        let mut d_t = d.clone();
        q_t.add_diagonal(ridge);
        d_t.add_scalar(ridge);
        let Ok(factor) = cholesky_factor(&q_t) else {
            continue;
        };
        return match cfg.constraint.cone() {
            None => closed_form_minimizer(&factor, &d_t, cfg.constraint == ConstraintKind::Affine),
            Some(kind) => cone_minimizer(&q_t, &d_t, kind, cfg),
        };
    }
    Array2::<f64>::eye(k)
}

/// `Θ = I − Q̃⁻¹D̃`, with the rank-one affine correction
/// `Q̃⁻¹1(Q̃⁻¹1)ᵀ/(1ᵀQ̃⁻¹1)·D̃` added back when requested.
fn closed_form_minimizer(factor: &CholeskyFactor, d: &DiagMatrix, affine: bool) -> Array2<f64> {
    let k = factor.order();
    let d_dense = Array2::from_diag(d.values());
    let solved = factor
        .solve_matrix(d_dense.view())
        .expect("square right-hand side");
    let mut theta = Array2::<f64>::eye(k) - solved;
    if affine {
        let u = factor.solve_vec(&Array1::ones(k));
        let s = u.sum();
        for i in 0..k {
            for j in 0..k {
                theta[(i, j)] += u[i] * u[j] * d.get(j) / s;
            }
        }
    }
    theta
}

/// Column-wise cone programs: column `j` of `Θ` minimizes
/// `½θᵀQ̃θ + c_jᵀθ` with `c_j` the j-th column of `C = D̃ − Q̃`.
fn cone_minimizer(
    q: &SymMatrix,
    d: &DiagMatrix,
    kind: ConeKind,
    cfg: &EstimatorConfig,
) -> Array2<f64> {
    let k = q.order();
    let mut theta = Array2::zeros((k, k));
    for j in 0..k {
        let c = Array1::from_shape_fn(k, |i| {
            let diag = if i == j { d.get(j) } else { 0.0 };
            diag - q.get(i, j)
        });
        let program = QuadProgram::new(q.clone(), c);
        let column = scd_minimize(&program, kind, cfg.scd_iters, column_seed(cfg.seed, j));
        theta.column_mut(j).assign(&column);
    }
    theta
}

/// Decorrelates the per-column partner draws while keeping them a pure
/// function of (config seed, column).
fn column_seed(seed: u64, column: usize) -> u64 {
    (column as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(seed)
}

// ============================================================================
// Aggregation weights
// ============================================================================

/// Per-column aggregation weights `w_j = 1/‖Θ_{·,j}‖₂²`, capped at
/// [`AGGREGATION_WEIGHT_CAP`] (an all-zero column hits the cap).
pub fn aggregation_weights(theta: ArrayView2<f64>) -> Array1<f64> {
    Array1::from_shape_fn(theta.ncols(), |j| {
        let norm_sq = theta.column(j).dot(&theta.column(j));
        (1.0 / norm_sq).min(AGGREGATION_WEIGHT_CAP)
    })
}
