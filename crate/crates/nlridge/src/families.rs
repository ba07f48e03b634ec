//! Alternate per-group denoiser families under homoscedastic Gaussian
//! noise: affine row-space maps (NL-Bayes style) and transform-domain
//! shrinkage (BM3D style), each in a step-1 form computable from the
//! noisy group alone and a step-2 form computed from a pilot group.
//!
//! Both families share the two-step structure of the ridge weights: the
//! step-1 operator minimizes an unbiased risk estimate, the step-2
//! operator minimizes the exact quadratic risk with the pilot standing
//! in for the clean group.

use crate::linalg::{cholesky_factor, OrthoTransform, SymMatrix};
use crate::linalg::{separable_inverse, separable_transform};
use ndarray::{Array1, Array2, ArrayView2};
use std::fmt;

/// Hard-threshold factor implied by the unbiased risk estimate: a
/// transform coefficient survives iff `|coef| > √2·σ`.
pub const HARD_THRESHOLD_FACTOR: f64 = std::f64::consts::SQRT_2;

/// Threshold factor used by production hard-thresholding pipelines.
/// More aggressive than the risk-estimate-optimal √2: it cancels all
/// but ~0.7% of pure-noise coefficients instead of ~16%, which is what
/// makes the hard-thresholded pilot clean enough for the Wiener step.
pub const PRODUCTION_THRESHOLD_FACTOR: f64 = 2.7;

/// Errors raised by the family estimators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FamilyError {
    /// The empirical group covariance admits no Cholesky factor (always
    /// the case when the group holds fewer than n+1 patches).
    SingularCovariance,
    /// Weight/group shapes disagree.
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
}

impl fmt::Display for FamilyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyError::SingularCovariance => {
                write!(f, "empirical group covariance is singular")
            }
            FamilyError::DimensionMismatch { expected, got } => {
                write!(
                    f,
                    "dimension mismatch: expected {}x{}, got {}x{}",
                    expected.0, expected.1, got.0, got.1
                )
            }
        }
    }
}

impl std::error::Error for FamilyError {}

/// Empirical first and second moments of a patch group.
#[derive(Debug, Clone)]
pub struct GroupStatistics {
    /// Patch-space mean `μ = Z·1/k`.
    pub mean: Array1<f64>,
    /// Patch-space covariance `C = (Z − μ1ᵀ)(Z − μ1ᵀ)ᵀ/k`.
    pub covariance: SymMatrix,
}

impl GroupStatistics {
    pub fn from_group(z: ArrayView2<f64>) -> Self {
        let k = z.ncols();
        let mean = z.sum_axis(ndarray::Axis(1)) / k as f64;
        let centered = &z - &mean.view().insert_axis(ndarray::Axis(1));
        let covariance = SymMatrix::scaled_scatter(centered.view(), 1.0 / k as f64);
        GroupStatistics { mean, covariance }
    }
}

/// Affine patch-space map `f(Y) = ΘY + β1ᵀ`.
#[derive(Debug, Clone)]
pub struct AffineWeights {
    pub theta: Array2<f64>,
    pub beta: Array1<f64>,
}

impl AffineWeights {
    /// Flat-group fallback: every patch is replaced by the group mean
    /// (`Θ = 0`, `β = μ`). Used when the covariance is singular.
    pub fn pure_mean(y: ArrayView2<f64>) -> Self {
        let stats = GroupStatistics::from_group(y);
        AffineWeights {
            theta: Array2::zeros((y.nrows(), y.nrows())),
            beta: stats.mean,
        }
    }

    /// Evaluates `ΘY + β1ᵀ`.
    pub fn apply(&self, y: ArrayView2<f64>) -> Result<Array2<f64>, FamilyError> {
        let n = self.theta.nrows();
        if y.nrows() != n {
            return Err(FamilyError::DimensionMismatch {
                expected: (n, y.ncols()),
                got: (y.nrows(), y.ncols()),
            });
        }
        let mut out = self.theta.dot(&y);
        for mut column in out.columns_mut() {
            column += &self.beta;
        }
        Ok(out)
    }
}

/// Entrywise transform-domain factors `f(Y) = Pᵀ(Θ ⊙ (PYQ))Qᵀ`.
#[derive(Debug, Clone)]
pub struct ShrinkageMask {
    pub theta: Array2<f64>,
    /// True for the {0,1}-constrained hard-threshold variant.
    pub binary: bool,
}

impl ShrinkageMask {
    /// Evaluates the mask through the orthonormal patch/group transforms.
    pub fn apply(
        &self,
        y: ArrayView2<f64>,
        patch: &OrthoTransform,
        group: &OrthoTransform,
    ) -> Result<Array2<f64>, FamilyError> {
        if y.dim() != self.theta.dim() {
            return Err(FamilyError::DimensionMismatch {
                expected: self.theta.dim(),
                got: y.dim(),
            });
        }
        let coeffs = separable_transform(y, patch, group)
            .map_err(|_| FamilyError::DimensionMismatch {
                expected: (patch.order() * patch.order(), group.order()),
                got: y.dim(),
            })?;
        let masked = &coeffs * &self.theta;
        separable_inverse(masked.view(), patch, group).map_err(|_| {
            FamilyError::DimensionMismatch {
                expected: (patch.order() * patch.order(), group.order()),
                got: y.dim(),
            }
        })
    }
}

// ============================================================================
// NL-Bayes style affine maps
// ============================================================================

/// Step-1 affine weights from the noisy group alone:
/// `Θ̂ = (C_Y − σ²I)C_Y⁻¹`, `β̂ = (I − Θ̂)μ_Y`.
///
/// Fails with [`FamilyError::SingularCovariance`] when `C_Y` has no
/// Cholesky factor; callers fall back to [`AffineWeights::pure_mean`].
pub fn nlbayes_step1(y: ArrayView2<f64>, sigma: f64) -> Result<AffineWeights, FamilyError> {
    let n = y.nrows();
    let stats = GroupStatistics::from_group(y);
    let factor =
        cholesky_factor(&stats.covariance).map_err(|_| FamilyError::SingularCovariance)?;
    let inverse = factor
        .solve_matrix(Array2::<f64>::eye(n).view())
        .expect("identity right-hand side");
    let theta = Array2::<f64>::eye(n) - inverse * (sigma * sigma);
    let beta = &stats.mean - &theta.dot(&stats.mean);
    Ok(AffineWeights { theta, beta })
}

/// Step-2 affine weights with the pilot group standing in for the clean
/// one: `Θ̂ = C_X̂(C_X̂ + σ²I)⁻¹`, `β̂ = (I − Θ̂)μ_X̂`. The regularized
/// covariance is positive definite for any σ > 0, so this cannot fail on
/// valid configurations; a degenerate factorization (σ indistinguishable
/// from 0 at the data's scale) degrades to the identity map.
pub fn nlbayes_step2(xhat: ArrayView2<f64>, sigma: f64) -> AffineWeights {
    let n = xhat.nrows();
    let stats = GroupStatistics::from_group(xhat);
    let mut regularized = stats.covariance.clone();
    regularized.add_diagonal(sigma * sigma);
    let Ok(factor) = cholesky_factor(&regularized) else {
        return AffineWeights {
            theta: Array2::<f64>::eye(n),
            beta: Array1::zeros(n),
        };
    };
    let inverse = factor
        .solve_matrix(Array2::<f64>::eye(n).view())
        .expect("identity right-hand side");
    let theta = Array2::<f64>::eye(n) - inverse * (sigma * sigma);
    let beta = &stats.mean - &theta.dot(&stats.mean);
    AffineWeights { theta, beta }
}

// ============================================================================
// BM3D style transform-domain masks
// ============================================================================

/// Step-1 shrinkage factors from the noisy transform coefficients.
///
/// The continuous variant is `θ = 1 − σ²/coef²` (a zero coefficient
/// shrinks fully to 0); the binary variant keeps exactly the
/// coefficients with `|coef| > √2·σ`, i.e. hard thresholding.
pub fn bm3d_step1_mask(coeffs: ArrayView2<f64>, sigma: f64, binary: bool) -> ShrinkageMask {
    if binary {
        bm3d_step1_mask_with_threshold(coeffs, sigma, HARD_THRESHOLD_FACTOR)
    } else {
        let theta = coeffs.mapv(|c| {
            if c == 0.0 {
                0.0
            } else {
                1.0 - sigma * sigma / (c * c)
            }
        });
        ShrinkageMask {
            theta,
            binary: false,
        }
    }
}

/// Binary step-1 mask with an explicit threshold factor: coefficients
/// with `|coef| ≤ factor·σ` are canceled. The risk-estimate-optimal
/// factor is √2; production hard-thresholding codecs traditionally use
/// larger values such as 2.7.
pub fn bm3d_step1_mask_with_threshold(
    coeffs: ArrayView2<f64>,
    sigma: f64,
    factor: f64,
) -> ShrinkageMask {
    let threshold = factor * sigma;
    let theta = coeffs.mapv(|c| if c.abs() > threshold { 1.0 } else { 0.0 });
    ShrinkageMask {
        theta,
        binary: true,
    }
}

/// Step-2 Wiener factors from the pilot's transform coefficients:
/// `θ = coef²/(σ² + coef²)`.
pub fn bm3d_step2_mask(pilot_coeffs: ArrayView2<f64>, sigma: f64) -> ShrinkageMask {
    let s2 = sigma * sigma;
    let theta = pilot_coeffs.mapv(|c| {
        if c == 0.0 {
            0.0
        } else {
            c * c / (s2 + c * c)
        }
    });
    ShrinkageMask {
        theta,
        binary: false,
    }
}
