//! Two-step non-local image denoising built on unbiased risk
//! estimation.
//!
//! The method groups similar patches into similarity matrices, estimates
//! per-group combination weights by minimizing an unbiased estimate of
//! the quadratic risk (step 1), then re-estimates the weights with the
//! step-1 output standing in for the unknown clean image (step 2,
//! "internal adaptation"). The same machinery hosts two classic local
//! denoisers as alternate per-group families: affine patch-space maps
//! and transform-domain shrinkage.
//!
//! Quick start:
//!
//! ```
//! use nlridge::{corrupt, default_params, denoise, psnr, BitDepth, Image, NoiseModel};
//!
//! let clean = Image::new(
//!     ndarray::Array2::from_shape_fn((32, 32), |(r, c)| ((r * 7 + c * 13) % 256) as f64),
//!     BitDepth::Eight,
//! );
//! let model = NoiseModel::GaussianHomo { sigma: 10.0 };
//! let noisy = corrupt(&clean, &model, 0).unwrap();
//! let params = default_params(&model).unwrap();
//! let (pilot, denoised) = denoise(&noisy, &model, &params).unwrap();
//! assert!(psnr(&denoised, &clean, 255.0).unwrap() > psnr(&noisy, &clean, 255.0).unwrap());
//! assert_eq!(pilot.data().dim(), (32, 32));
//! ```

pub mod estimators;
pub mod families;
pub mod image;
pub mod linalg;
pub mod noise;
pub mod patches;
pub mod pipeline;
pub mod qp;

pub use crate::estimators::{
    aggregation_weights, risk_value, step1_weights, step2_weights, ure_value, ConstraintKind,
    EstimatorConfig,
};
pub use crate::families::{
    bm3d_step1_mask, bm3d_step1_mask_with_threshold, bm3d_step2_mask, nlbayes_step1,
    nlbayes_step2, AffineWeights, FamilyError, GroupStatistics, ShrinkageMask,
    HARD_THRESHOLD_FACTOR, PRODUCTION_THRESHOLD_FACTOR,
};
pub use crate::image::{psnr, read_image, write_image, BitDepth, Image, ImageError};
pub use crate::linalg::{
    cholesky_factor, separable_inverse, separable_transform, CholeskyFactor, DiagMatrix,
    LinalgError, OrthoTransform, SymMatrix,
};
pub use crate::noise::{corrupt, d1_matrix, d2_matrix, NoiseError, NoiseModel};
pub use crate::patches::{
    block_match, extract_group, reference_positions, PatchError, PatchGeometry, PatchGroup,
    PixelAccumulator,
};
pub use crate::pipeline::{
    default_params, default_params_for_family, denoise, denoise_step1, denoise_step2, FamilyKind,
    PipelineError, PipelineParams,
};
pub use crate::qp::{active_set_oracle, scd_minimize, scd_minimize_traced, ConeKind, QuadProgram};
