//! End-to-end camera model `I = g(h(S))`, `S = sum(l * r * omega)`, and the estimators that
//! recover the spectral sensitivity `omega`, response `g` and gamut map `h` of a camera from
//! images of known reflectances under known illuminants.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below fix the
//! scalar for the common cases.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod forward;
pub mod gamut;
pub mod io;
pub mod pipeline;
pub mod response;
pub mod scalar;
pub mod sensitivity;
pub mod spectral;
pub mod synthetic;

pub use error::{Error, ErrorReport, Result};
pub use forward::{
    apply_response, classify_saturation, invert_response, simulate_pixel, CameraModel, ExposureSetting, ExposureStage,
    PixelTriplet, ResponseCurve, Saturation, SaturationFlags, SaturationThresholds, SensitivityMatrix, CHANNELS,
};
pub use gamut::{
    apply_gamut_map, fit_gamut_map, partition_gamut, rgb_to_xy, ChromaticityPoint, GamutMap, GamutPartition,
    RawTristimulus, RbfConfig, RbfGamutMap,
};

pub use pipeline::{
    combined_stack, evaluate, evaluate_with, gamut_training_pairs, generate_synthetic_dataset, render_calibration_input,
    run_two_stage, sensitivity_measurements, CalibrationInput, EstimatedCamera, EvaluationReport, PipelineConfig,
};
pub use response::{check_exposure_reciprocity, estimate_response, ExposureStack, ReciprocityReport, ResponseFitConfig};
pub use scalar::Real;
pub use sensitivity::{
    build_basis, cross_validate, estimate_constrained, estimate_pinv, CrossValidationReport, MeasurementSet,
    SensitivityBasis, SensitivityDatabase, SensitivityFit,
};
pub use spectral::{integrate_sensitivity, spectral_product, CurveKind, SpectralCurve, SpectralGrid};

pub type SpectralCurve64 = SpectralCurve<f64>;
pub type SensitivityMatrix64 = SensitivityMatrix<f64>;
pub type ResponseCurve64 = ResponseCurve<f64>;
pub type CameraModel64 = CameraModel<f64>;
pub type ExposureStack64 = ExposureStack<f64>;
pub type MeasurementSet64 = MeasurementSet<f64>;
pub type SensitivityDatabase64 = SensitivityDatabase<f64>;
pub type RbfGamutMap64 = RbfGamutMap<f64>;
pub type CalibrationInput64 = CalibrationInput<f64>;
pub type EstimatedCamera64 = EstimatedCamera<f64>;

pub type SpectralCurve32 = SpectralCurve<f32>;
pub type SensitivityMatrix32 = SensitivityMatrix<f32>;
pub type ResponseCurve32 = ResponseCurve<f32>;
pub type CameraModel32 = CameraModel<f32>;
pub type ExposureStack32 = ExposureStack<f32>;
pub type MeasurementSet32 = MeasurementSet<f32>;
