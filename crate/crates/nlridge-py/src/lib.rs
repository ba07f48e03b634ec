//! Python bindings for the nlridge denoiser.
//!
//! Thin numpy-centric wrappers over the library: images travel as 2-D
//! float64 arrays, noise models are selected with keyword arguments
//! mirroring the CLI flags, and library errors surface as `ValueError`.

use numpy::{IntoPyArray, PyArray2, PyReadonlyArray2};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nlridge::{
    corrupt, default_params_for_family, BitDepth, ConstraintKind, EstimatorConfig, FamilyKind,
    Image, NoiseModel, PipelineParams,
};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_image(array: &PyReadonlyArray2<'_, f64>) -> Image {
    // Bit depth only matters when quantizing to a file, which the
    // bindings never do; arrays stay in float.
    Image::new(array.as_array().to_owned(), BitDepth::Eight)
}

fn build_model(
    sigma: Option<f64>,
    noisemap: Option<&PyReadonlyArray2<'_, f64>>,
    poisson: bool,
    mixed_pg: Option<(f64, f64)>,
) -> PyResult<NoiseModel> {
    let chosen =
        usize::from(sigma.is_some()) + usize::from(noisemap.is_some()) + usize::from(poisson)
            + usize::from(mixed_pg.is_some());
    if chosen != 1 {
        return Err(PyValueError::new_err(
            "pick exactly one of sigma=, noisemap=, poisson=True, mixed_pg=",
        ));
    }
    let model = if let Some(sigma) = sigma {
        NoiseModel::GaussianHomo { sigma }
    } else if let Some(map) = noisemap {
        NoiseModel::GaussianHetero {
            noisemap: to_image(map),
        }
    } else if poisson {
        NoiseModel::Poisson
    } else {
        let (gain, var) = mixed_pg.expect("counted above");
        NoiseModel::MixedPg { gain, var }
    };
    model.validate().map_err(value_error)?;
    Ok(model)
}

fn parse_constraint(name: &str) -> PyResult<ConstraintKind> {
    match name {
        "linear" => Ok(ConstraintKind::Linear),
        "affine" => Ok(ConstraintKind::Affine),
        "conical" => Ok(ConstraintKind::Conical),
        "convex" => Ok(ConstraintKind::Convex),
        _ => Err(PyValueError::new_err(format!(
            "unknown constraint {name:?} (expected linear|affine|conical|convex)"
        ))),
    }
}

fn parse_family(name: &str) -> PyResult<FamilyKind> {
    match name {
        "nlridge" => Ok(FamilyKind::NlRidge),
        "nlbayes" => Ok(FamilyKind::NlBayes),
        "bm3d" => Ok(FamilyKind::Bm3d),
        _ => Err(PyValueError::new_err(format!(
            "unknown family {name:?} (expected nlridge|nlbayes|bm3d)"
        ))),
    }
}

/// Calibrated defaults plus keyword overrides, same resolution rule as
/// the CLI: give all of patch1/patch2/k1/k2 to bypass the table.
#[allow(clippy::too_many_arguments)]
fn build_params(
    model: &NoiseModel,
    constraint: &str,
    family: &str,
    alpha: Option<f64>,
    scd_iters: Option<usize>,
    patch1: Option<usize>,
    patch2: Option<usize>,
    k1: Option<usize>,
    k2: Option<usize>,
    window: Option<usize>,
    stride: Option<usize>,
    seed: u64,
) -> PyResult<PipelineParams> {
    let family = parse_family(family)?;
    let fully_explicit =
        patch1.is_some() && patch2.is_some() && k1.is_some() && k2.is_some();
    let mut params = if fully_explicit {
        PipelineParams {
            n1: 0, // all four overridden below
            n2: 0,
            k1: 0,
            k2: 0,
            kappa: 37,
            delta: 4,
            constraint: ConstraintKind::Linear,
            family,
            noisier_alpha: 0.0,
            scd_iters: EstimatorConfig::default().scd_iters,
            seed: 0,
        }
    } else {
        default_params_for_family(family, model).map_err(|e| {
            PyValueError::new_err(format!("{e}; pass patch1/patch2/k1/k2 explicitly"))
        })?
    };
    if let Some(side) = patch1 {
        params.n1 = side * side;
    }
    if let Some(side) = patch2 {
        params.n2 = side * side;
    }
    if let Some(k) = k1 {
        params.k1 = k;
    }
    if let Some(k) = k2 {
        params.k2 = k;
    }
    if let Some(w) = window {
        params.kappa = w;
    }
    if let Some(s) = stride {
        params.delta = s;
    }
    if let Some(a) = alpha {
        params.noisier_alpha = a;
    }
    if let Some(t) = scd_iters {
        params.scd_iters = t;
    }
    params.constraint = parse_constraint(constraint)?;
    params.seed = seed;
    params.validate().map_err(value_error)?;
    Ok(params)
}

/// Two-step denoising. Returns `(pilot, final)` as float64 arrays.
#[pyfunction]
#[pyo3(signature = (y, *, sigma=None, noisemap=None, poisson=false, mixed_pg=None,
       constraint="linear", family="nlridge", alpha=None, scd_iters=None,
       patch1=None, patch2=None, k1=None, k2=None, window=None, stride=None, seed=0))]
#[allow(clippy::too_many_arguments)]
fn denoise<'py>(
    py: Python<'py>,
    y: PyReadonlyArray2<'py, f64>,
    sigma: Option<f64>,
    noisemap: Option<PyReadonlyArray2<'py, f64>>,
    poisson: bool,
    mixed_pg: Option<(f64, f64)>,
    constraint: &str,
    family: &str,
    alpha: Option<f64>,
    scd_iters: Option<usize>,
    patch1: Option<usize>,
    patch2: Option<usize>,
    k1: Option<usize>,
    k2: Option<usize>,
    window: Option<usize>,
    stride: Option<usize>,
    seed: u64,
) -> PyResult<(Bound<'py, PyArray2<f64>>, Bound<'py, PyArray2<f64>>)> {
    let image = to_image(&y);
    let model = build_model(sigma, noisemap.as_ref(), poisson, mixed_pg)?;
    let params = build_params(
        &model, constraint, family, alpha, scd_iters, patch1, patch2, k1, k2, window, stride,
        seed,
    )?;
    let (pilot, second) = py
        .allow_threads(|| nlridge::denoise(&image, &model, &params))
        .map_err(value_error)?;
    Ok((
        pilot.data().to_owned().into_pyarray(py),
        second.data().to_owned().into_pyarray(py),
    ))
}

/// Corrupts a clean image under the chosen noise model.
#[pyfunction]
#[pyo3(signature = (x, *, sigma=None, noisemap=None, poisson=false, mixed_pg=None, seed=0))]
fn add_noise<'py>(
    py: Python<'py>,
    x: PyReadonlyArray2<'py, f64>,
    sigma: Option<f64>,
    noisemap: Option<PyReadonlyArray2<'py, f64>>,
    poisson: bool,
    mixed_pg: Option<(f64, f64)>,
    seed: u64,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let image = to_image(&x);
    let model = build_model(sigma, noisemap.as_ref(), poisson, mixed_pg)?;
    let noisy = corrupt(&image, &model, seed).map_err(value_error)?;
    Ok(noisy.data().to_owned().into_pyarray(py))
}

/// Peak signal-to-noise ratio in dB; `inf` for identical arrays.
#[pyfunction]
#[pyo3(signature = (a, b, peak=255.0))]
fn psnr(
    a: PyReadonlyArray2<'_, f64>,
    b: PyReadonlyArray2<'_, f64>,
    peak: f64,
) -> PyResult<f64> {
    nlridge::psnr(&to_image(&a), &to_image(&b), peak).map_err(value_error)
}

/// The calibrated parameter table as a dict of CLI-style settings.
#[pyfunction]
#[pyo3(signature = (sigma, family="nlridge"))]
fn default_params<'py>(
    py: Python<'py>,
    sigma: f64,
    family: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let model = NoiseModel::GaussianHomo { sigma };
    let params =
        default_params_for_family(parse_family(family)?, &model).map_err(value_error)?;
    let dict = PyDict::new(py);
    dict.set_item("patch1", params.side1())?;
    dict.set_item("patch2", params.side2())?;
    dict.set_item("k1", params.k1)?;
    dict.set_item("k2", params.k2)?;
    dict.set_item("window", params.kappa)?;
    dict.set_item("stride", params.delta)?;
    Ok(dict)
}

#[pymodule]
fn nlridge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(denoise, m)?)?;
    m.add_function(wrap_pyfunction!(add_noise, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(default_params, m)?)?;
    Ok(())
}
