//! Noise models, synthetic corruption, and the diagonal variance
//! summaries `D₁`/`D₂` that the risk estimators consume.
//!
//! Corrupted images stay in floating point and are never clipped here:
//! the unbiased risk estimates assume the exact noise law, and clipping
//! would bias the variance summaries.

use crate::image::Image;
use crate::linalg::DiagMatrix;
use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use std::fmt;

/// Observation model for a single grayscale image.
#[derive(Debug, Clone)]
pub enum NoiseModel {
    /// Additive white Gaussian noise with one standard deviation everywhere.
    GaussianHomo { sigma: f64 },
    /// Additive Gaussian noise with a per-pixel variance map.
    GaussianHetero { noisemap: Image },
    /// Pure photon-counting noise: each pixel is drawn from P(clean value).
    Poisson,
    /// Mixed Poisson-Gaussian: `gain·P(x/gain) + N(0, var)`.
    MixedPg { gain: f64, var: f64 },
}

impl NoiseModel {
    /// Short human-readable tag used in benchmark reports.
    pub fn describe(&self) -> String {
        match self {
            NoiseModel::GaussianHomo { sigma } => format!("gaussian(sigma={sigma})"),
            NoiseModel::GaussianHetero { .. } => "gaussian-hetero".to_string(),
            NoiseModel::Poisson => "poisson".to_string(),
            // Comma-free so the description can sit in a CSV field verbatim.
            NoiseModel::MixedPg { gain, var } => format!("mixed-pg(a={gain};b={var})"),
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        match self {
            NoiseModel::GaussianHomo { sigma } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(NoiseError::InvalidParameter(format!(
                        "sigma must be positive, got {sigma}"
                    )));
                }
            }
            NoiseModel::GaussianHetero { noisemap } => {
                if noisemap.data().iter().any(|&v| !(v.is_finite() && v > 0.0)) {
                    return Err(NoiseError::InvalidParameter(
                        "noisemap entries must be positive variances".to_string(),
                    ));
                }
            }
            NoiseModel::Poisson => {}
            NoiseModel::MixedPg { gain, var } => {
                if !(gain.is_finite() && *gain > 0.0) {
                    return Err(NoiseError::InvalidParameter(format!(
                        "mixed-PG gain must be positive, got {gain}"
                    )));
                }
                if !(var.is_finite() && *var >= 0.0) {
                    return Err(NoiseError::InvalidParameter(format!(
                        "mixed-PG Gaussian variance must be nonnegative, got {var}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Errors from corruption sampling and variance-summary construction.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseError {
    /// Poisson-type models need nonnegative clean intensities.
    NegativeIntensity { row: usize, col: usize, value: f64 },
    /// The noisemap (or its group restriction) does not match the data shape.
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    /// A heteroscedastic model was used without its variance columns.
    MissingNoisemap,
    InvalidParameter(String),
}

impl fmt::Display for NoiseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseError::NegativeIntensity { row, col, value } => write!(
                f,
                "negative intensity {value} at ({row}, {col}) is invalid for a counting model"
            ),
            NoiseError::ShapeMismatch { expected, got } => write!(
                f,
                "noisemap shape mismatch: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            NoiseError::MissingNoisemap => {
                write!(f, "heteroscedastic Gaussian model requires noisemap columns")
            }
            NoiseError::InvalidParameter(msg) => write!(f, "invalid noise parameter: {msg}"),
        }
    }
}

impl std::error::Error for NoiseError {}

// ============================================================================
// Corruption sampling
// ============================================================================

/// Draws one corrupted copy of `clean` under `model`. Sampling is
/// sequential over pixels from a single seeded stream, so a given
/// `(clean, model, seed)` triple reproduces bit-identically within one
/// build of this crate.
pub fn corrupt(clean: &Image, model: &NoiseModel, seed: u64) -> Result<Image, NoiseError> {
    model.validate()?;
    if let NoiseModel::GaussianHetero { noisemap } = model {
        if noisemap.data().dim() != clean.data().dim() {
            return Err(NoiseError::ShapeMismatch {
                expected: clean.data().dim(),
                got: noisemap.data().dim(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = clean.data().clone();
    for ((row, col), value) in out.indexed_iter_mut() {
        *value = match model {
            NoiseModel::GaussianHomo { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                *value + sigma * z
            }
            NoiseModel::GaussianHetero { noisemap } => {
                let z: f64 = rng.sample(StandardNormal);
                *value + noisemap.data()[(row, col)].sqrt() * z
            }
            NoiseModel::Poisson => sample_poisson(&mut rng, *value)
                .ok_or(NoiseError::NegativeIntensity {
                    row,
                    col,
                    value: *value,
                })?,
            NoiseModel::MixedPg { gain, var } => {
                let counts = sample_poisson(&mut rng, *value / gain).ok_or(
                    NoiseError::NegativeIntensity {
                        row,
                        col,
                        value: *value,
                    },
                )?;
                let z: f64 = rng.sample(StandardNormal);
                gain * counts + var.sqrt() * z
            }
        };
    }
    Ok(clean.with_data(out))
}

/// Poisson draw with the zero-mean point mass handled explicitly;
/// `None` signals a negative mean.
fn sample_poisson(rng: &mut ChaCha8Rng, mean: f64) -> Option<f64> {
    if mean < 0.0 {
        None
    } else if mean == 0.0 {
        Some(0.0)
    } else {
        let dist = Poisson::new(mean).expect("positive finite mean");
        Some(dist.sample(rng))
    }
}

// ============================================================================
// Variance summaries
// ============================================================================

/// Diagonal of the Step-1 matrix `D₁` for a noisy group `Y`:
/// `nσ²·I` (homoscedastic Gaussian), `Vᵀ1ₙ` (heteroscedastic, from the
/// group's noisemap columns), `Yᵀ1ₙ` (Poisson), `(aY+b)ᵀ1ₙ` (mixed PG).
pub fn d1_matrix(
    y: ArrayView2<f64>,
    model: &NoiseModel,
    noisemap_cols: Option<ArrayView2<f64>>,
) -> Result<DiagMatrix, NoiseError> {
    variance_column_sums(y, model, noisemap_cols)
}

/// Diagonal of the Step-2 matrix `D₂`, same formulas as [`d1_matrix`]
/// with the pilot group substituted for the noisy group.
pub fn d2_matrix(
    xhat: ArrayView2<f64>,
    model: &NoiseModel,
    noisemap_cols: Option<ArrayView2<f64>>,
) -> Result<DiagMatrix, NoiseError> {
    variance_column_sums(xhat, model, noisemap_cols)
}

fn variance_column_sums(
    z: ArrayView2<f64>,
    model: &NoiseModel,
    noisemap_cols: Option<ArrayView2<f64>>,
) -> Result<DiagMatrix, NoiseError> {
    model.validate()?;
    let n = z.nrows();
    let k = z.ncols();
    let diag = match model {
        NoiseModel::GaussianHomo { sigma } => {
            return Ok(DiagMatrix::constant(k, n as f64 * sigma * sigma));
        }
        NoiseModel::GaussianHetero { .. } => {
            let cols = noisemap_cols.ok_or(NoiseError::MissingNoisemap)?;
            if cols.dim() != z.dim() {
                return Err(NoiseError::ShapeMismatch {
                    expected: z.dim(),
                    got: cols.dim(),
                });
            }
            (0..k).map(|j| cols.column(j).sum()).collect()
        }
        NoiseModel::Poisson => (0..k).map(|j| z.column(j).sum()).collect(),
        NoiseModel::MixedPg { gain, var } => (0..k)
            .map(|j| gain * z.column(j).sum() + n as f64 * var)
            .collect(),
    };
    Ok(DiagMatrix::from_vec(diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::BitDepth;
    use ndarray::{array, Array2};

    fn small_clean() -> Image {
        let data = Array2::from_shape_vec(
            (2, 4),
            vec![5.0, 20.0, 60.0, 128.0, 10.0, 35.0, 90.0, 200.0],
        )
        .unwrap();
        Image::new(data, BitDepth::Eight)
    }

    /// Per-pixel model variance, used as the Monte-Carlo reference.
    fn model_variance(model: &NoiseModel, clean: f64, row: usize, col: usize) -> f64 {
        match model {
            NoiseModel::GaussianHomo { sigma } => sigma * sigma,
            NoiseModel::GaussianHetero { noisemap } => noisemap.data()[(row, col)],
            NoiseModel::Poisson => clean,
            NoiseModel::MixedPg { gain, var } => gain * clean + var,
        }
    }

    #[test]
    fn corrupt_is_deterministic_per_seed() {
        let clean = small_clean();
        let model = NoiseModel::MixedPg { gain: 2.0, var: 4.0 };
        let a = corrupt(&clean, &model, 99).unwrap();
        let b = corrupt(&clean, &model, 99).unwrap();
        assert_eq!(a.data(), b.data());
        let c = corrupt(&clean, &model, 100).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn vanishing_gaussian_noise_is_identity() {
        let clean = small_clean();
        let model = NoiseModel::GaussianHomo { sigma: 1e-9 };
        let noisy = corrupt(&clean, &model, 1).unwrap();
        for (a, b) in noisy.data().iter().zip(clean.data().iter()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn poisson_on_zero_image_stays_zero() {
        let clean = Image::constant(3, 3, 0.0, BitDepth::Eight);
        let noisy = corrupt(&clean, &NoiseModel::Poisson, 5).unwrap();
        assert!(noisy.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn poisson_rejects_negative_intensity() {
        let mut clean = small_clean();
        clean.data_mut()[(1, 2)] = -3.0;
        match corrupt(&clean, &NoiseModel::Poisson, 5) {
            Err(NoiseError::NegativeIntensity { row: 1, col: 2, .. }) => {}
            other => panic!("expected NegativeIntensity, got {other:?}"),
        }
    }

    #[test]
    fn corruption_matches_mean_and_variance_laws() {
        let clean = small_clean();
        let noisemap = Image::new(
            Array2::from_shape_vec(
                (2, 4),
                vec![4.0, 30.0, 100.0, 625.0, 12.0, 55.0, 300.0, 900.0],
            )
            .unwrap(),
            BitDepth::Eight,
        );
        let models = [
            NoiseModel::GaussianHomo { sigma: 25.0 },
            NoiseModel::GaussianHetero { noisemap },
            NoiseModel::Poisson,
            NoiseModel::MixedPg { gain: 2.0, var: 9.0 },
        ];
        let draws = 100_000usize;
        for (mi, model) in models.iter().enumerate() {
            let px = clean.height() * clean.width();
            let mut sum = vec![0.0f64; px];
            let mut sum_sq = vec![0.0f64; px];
            for d in 0..draws {
                let noisy = corrupt(&clean, model, (mi * draws + d) as u64).unwrap();
                for (i, &v) in noisy.data().iter().enumerate() {
                    sum[i] += v;
                    sum_sq[i] += v * v;
                }
            }
            for (i, ((row, col), &x)) in clean.data().indexed_iter().enumerate() {
                let mean = sum[i] / draws as f64;
                let var = sum_sq[i] / draws as f64 - mean * mean;
                let true_var = model_variance(model, x, row, col);
                // Mean within 4 standard errors of the clean value.
                let se = (true_var / draws as f64).sqrt();
                assert!(
                    (mean - x).abs() <= 4.0 * se,
                    "{}: pixel ({row},{col}) mean {mean} vs {x} (se {se})",
                    model.describe()
                );
                // Variance law within 5% relative for intensities >= 10.
                if x >= 10.0 {
                    assert!(
                        (var - true_var).abs() <= 0.05 * true_var,
                        "{}: pixel ({row},{col}) variance {var} vs {true_var}",
                        model.describe()
                    );
                }
            }
        }
    }

    #[test]
    fn d1_gaussian_homo_is_scaled_identity() {
        let y = Array2::<f64>::zeros((4, 3));
        let d = d1_matrix(y.view(), &NoiseModel::GaussianHomo { sigma: 2.0 }, None).unwrap();
        assert_eq!(d.values().to_vec(), vec![16.0, 16.0, 16.0]);
    }

    #[test]
    fn d1_poisson_is_column_sums() {
        let y = array![[1.0, 2.0], [3.0, 4.0]];
        let d = d1_matrix(y.view(), &NoiseModel::Poisson, None).unwrap();
        assert_eq!(d.values().to_vec(), vec![4.0, 6.0]);
    }

    #[test]
    fn d1_mixed_pg_affine_in_column_sums() {
        let y = array![[1.0, 2.0], [3.0, 4.0]];
        let model = NoiseModel::MixedPg { gain: 2.0, var: 1.0 };
        let d = d1_matrix(y.view(), &model, None).unwrap();
        assert_eq!(d.values().to_vec(), vec![10.0, 14.0]);
    }

    #[test]
    fn d1_hetero_requires_noisemap_columns() {
        let y = array![[1.0, 2.0], [3.0, 4.0]];
        let map = Image::constant(2, 2, 1.0, BitDepth::Eight);
        let model = NoiseModel::GaussianHetero { noisemap: map };
        assert_eq!(
            d1_matrix(y.view(), &model, None).unwrap_err(),
            NoiseError::MissingNoisemap
        );
        let cols = array![[2.0, 3.0], [4.0, 5.0]];
        let d = d1_matrix(y.view(), &model, Some(cols.view())).unwrap();
        assert_eq!(d.values().to_vec(), vec![6.0, 8.0]);
    }

    #[test]
    fn d2_zero_poisson_pilot_gives_zero_diagonal() {
        let pilot = Array2::<f64>::zeros((9, 4));
        let d = d2_matrix(pilot.view(), &NoiseModel::Poisson, None).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn d_matrices_are_linear_in_the_group() {
        let y = array![[1.0, 2.0], [3.0, 4.0]];
        let z = array![[0.5, -1.0], [2.0, 0.25]];
        let combined = &y * 2.0 + &z * 3.0;
        for model in [NoiseModel::Poisson, NoiseModel::MixedPg { gain: 1.5, var: 0.0 }] {
            let dy = d1_matrix(y.view(), &model, None).unwrap();
            let dz = d1_matrix(z.view(), &model, None).unwrap();
            let dc = d1_matrix(combined.view(), &model, None).unwrap();
            // MixedPG with b=0 and Poisson are exactly linear in the group.
            for j in 0..2 {
                let expected = 2.0 * dy.get(j) + 3.0 * dz.get(j);
                assert!((dc.get(j) - expected).abs() <= 1e-12 * expected.abs().max(1.0));
            }
        }
    }
}
