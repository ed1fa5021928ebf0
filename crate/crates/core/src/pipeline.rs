//! Two-stage estimation of a complete camera model and its evaluation.
//!
//! Stage 1 works on inner-gamut observations only, where the gamut map is close to identity:
//! it recovers the response `g` and then the sensitivity `omega`. Stage 2 fits the gamut map `h`
//! on all unsaturated observations from the stage-1 estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{
    CameraModel, ExposureSetting, ExposureStage, PixelTriplet, ResponseCurve, SaturationThresholds, SensitivityMatrix,
    CHANNELS,
};
use crate::gamut::{fit_gamut_map, partition_gamut, GamutMap, GamutPartition, RawTristimulus, RbfConfig};
use crate::response::{estimate_response_masked, ExposureStack, ResponseFitConfig};
use crate::scalar::Real;
use crate::sensitivity::{
    build_basis, cross_validate, estimate_all_constrained, CrossValidationReport, MeasurementSet, SensitivityDatabase,
    SensitivityFit,
};
use crate::spectral::{spectral_product, SpectralCurve, SpectralGrid};
use crate::synthetic;

/// Illuminants, patch reflectances and one exposure stack per illuminant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CalibrationInput<T: Real> {
    pub grid: SpectralGrid,
    pub illuminants: Vec<SpectralCurve<T>>,
    pub reflectances: Vec<SpectralCurve<T>>,
    /// `stacks[u]` holds every reflectance (as patch `j`) under illuminant `u`.
    pub stacks: Vec<ExposureStack<T>>,
}

impl<T: Real> CalibrationInput<T> {
    pub fn new(
        grid: SpectralGrid,
        illuminants: Vec<SpectralCurve<T>>,
        reflectances: Vec<SpectralCurve<T>>,
        stacks: Vec<ExposureStack<T>>,
    ) -> Result<Self> {
        let input = CalibrationInput { grid, illuminants, reflectances, stacks };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<()> {
        for c in self.illuminants.iter().chain(&self.reflectances) {
            c.validate()?;
            self.grid.ensure_same(c.grid(), "calibration spectra")?;
        }
        if self.stacks.len() != self.illuminants.len() {
            return Err(Error::invariant(
                "stack_per_illuminant",
                format!("{} stacks for {} illuminants", self.stacks.len(), self.illuminants.len()),
            ));
        }
        for (u, s) in self.stacks.iter().enumerate() {
            s.validate()?;
            if s.n_patches() != self.reflectances.len() {
                return Err(Error::invariant(
                    "patch_per_reflectance",
                    format!("stack {u} has {} patches for {} reflectances", s.n_patches(), self.reflectances.len()),
                ));
            }
        }
        if let Some(first) = self.stacks.first() {
            if self.stacks.iter().any(|s| s.bit_depth() != first.bit_depth() || s.thresholds() != first.thresholds()) {
                return Err(Error::invariant("uniform_quantization", "stacks disagree on bit depth or thresholds"));
            }
        }
        Ok(())
    }

    pub fn bit_depth(&self) -> Option<u32> {
        self.stacks.first().map(|s| s.bit_depth())
    }

    pub fn thresholds(&self) -> Option<SaturationThresholds> {
        self.stacks.first().map(|s| s.thresholds())
    }

    /// Every `(illuminant, patch, exposure)` cell.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.stacks.iter().enumerate().flat_map(|(u, s)| {
            (0..s.n_patches()).flat_map(move |j| (0..s.exposures().len()).map(move |i| Cell { illuminant: u, patch: j, exposure: i }))
        })
    }

    pub fn radiance(&self, illuminant: usize, patch: usize) -> Result<SpectralCurve<T>> {
        spectral_product(&self.illuminants[illuminant], &self.reflectances[patch])
    }

    /// Subset keeping the listed illuminants.
    pub fn select_illuminants(&self, keep: &[usize]) -> Self {
        CalibrationInput {
            grid: self.grid,
            illuminants: keep.iter().map(|&u| self.illuminants[u].clone()).collect(),
            reflectances: self.reflectances.clone(),
            stacks: keep.iter().map(|&u| self.stacks[u].clone()).collect(),
        }
    }

    /// Copy with every spectrum linearly resampled onto `grid`.
    pub fn resampled(&self, grid: &SpectralGrid) -> Result<Self> {
        CalibrationInput::new(
            *grid,
            self.illuminants.iter().map(|c| c.resample(grid)).collect(),
            self.reflectances.iter().map(|c| c.resample(grid)).collect(),
            self.stacks.clone(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub illuminant: usize,
    pub patch: usize,
    pub exposure: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub grid: SpectralGrid,
    /// Inner-gamut triangle scale about the white point.
    pub alpha: f64,
    pub basis_dim: usize,
    pub folds: usize,
    pub response: ResponseFitConfig,
    pub rbf: RbfConfig,
    /// Bit depth and saturation thresholds applied when reading stack CSVs.
    pub bit_depth: u32,
    pub sat_lo: u32,
    pub sat_hi: u32,
    pub seed: u64,
    pub min_inner: usize,
    pub exposure_stage: ExposureStage,
    /// Gamma of the provisional response used to bootstrap the first partition.
    pub provisional_gamma: f64,
}

impl PipelineConfig {
    pub fn thresholds(&self) -> Result<SaturationThresholds> {
        SaturationThresholds::new(self.sat_lo, self.sat_hi, self.bit_depth)
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            grid: SpectralGrid::visible(),
            alpha: 0.6,
            basis_dim: 6,
            folds: 10,
            response: ResponseFitConfig::default(),
            rbf: RbfConfig::default(),
            bit_depth: 8,
            sat_lo: 10,
            sat_hi: 230,
            seed: 0,
            min_inner: 20,
            exposure_stage: ExposureStage::AfterGamut,
            provisional_gamma: 2.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Stage1Diagnostics<T: Real> {
    pub alpha: f64,
    /// Inner count of the bootstrap partition (provisional response).
    pub provisional_inner_count: usize,
    pub inner_count: usize,
    pub outer_count: usize,
    /// Observations `(illuminant, patch)` in the final partition, indexed as in `partition`.
    pub observations: Vec<(usize, usize)>,
    pub partition: GamutPartition,
    pub response_residual_rms: [f64; CHANNELS],
    pub sensitivity_rows: usize,
    pub sensitivity_fits: Vec<SensitivityFit<T>>,
    pub basis_captured_variance: [f64; CHANNELS],
    pub cross_validation: Option<CrossValidationReport<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Diagnostics {
    pub samples: usize,
    pub centers: usize,
    pub training_rms: f64,
    pub training_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EstimatedCamera<T: Real> {
    pub camera: CameraModel<T>,
    pub stage1: Stage1Diagnostics<T>,
    pub stage2: Stage2Diagnostics,
}

/// One `(illuminant, patch)` observation with at least one unsaturated exposure.
struct Observation {
    illuminant: usize,
    patch: usize,
    /// unsaturated exposure indices
    exposures: Vec<usize>,
}

fn observations<T: Real>(input: &CalibrationInput<T>) -> Vec<Observation> {
    let mut out = Vec::new();
    for (u, stack) in input.stacks.iter().enumerate() {
        for j in 0..stack.n_patches() {
            let exposures: Vec<usize> =
                (0..stack.exposures().len()).filter(|&i| !stack.flags(j, i).any_saturated()).collect();
            if !exposures.is_empty() {
                out.push(Observation { illuminant: u, patch: j, exposures });
            }
        }
    }
    out
}

fn invert_triplet<T: Real>(curve: &ResponseCurve<T>, px: PixelTriplet) -> Result<[T; CHANNELS]> {
    Ok([curve.invert(px.get(0), 0)?, curve.invert(px.get(1), 1)?, curve.invert(px.get(2), 2)?])
}

/// Exposure-normalized linear intensity of one observation, averaged over its unsaturated
/// exposures.
fn linearized<T: Real>(input: &CalibrationInput<T>, obs: &Observation, curve: &ResponseCurve<T>) -> Result<[T; CHANNELS]> {
    let stack = &input.stacks[obs.illuminant];
    let mut acc = [T::zero(); CHANNELS];
    for &i in &obs.exposures {
        let e = stack.exposures()[i].seconds();
        let lin = invert_triplet(curve, stack.sample(obs.patch, i))?;
        for (a, v) in acc.iter_mut().zip(lin) {
            *a += v / e;
        }
    }
    let n = T::from_usize_lossy(obs.exposures.len());
    Ok(acc.map(|v| v / n))
}

fn partition_observations<T: Real>(
    input: &CalibrationInput<T>,
    obs: &[Observation],
    curve: &ResponseCurve<T>,
    alpha: f64,
) -> Result<GamutPartition> {
    let proxies = obs
        .iter()
        .map(|o| linearized(input, o, curve).map(RawTristimulus::from_array_unchecked))
        .collect::<Result<Vec<_>>>()?;
    partition_gamut(&proxies, alpha)
}

/// One sensitivity-fit row per unsaturated exposure of each `(illuminant, patch)` pair:
/// the radiance and the exposure-normalized intensity `g^-1(I) / e`. `only` restricts the pairs.
pub fn sensitivity_measurements<T: Real>(
    input: &CalibrationInput<T>,
    response: &ResponseCurve<T>,
    only: Option<&[(usize, usize)]>,
) -> Result<MeasurementSet<T>> {
    let obs = observations(input);
    let keep = |o: &Observation| only.is_none_or(|list| list.contains(&(o.illuminant, o.patch)));
    let mut radiance = Vec::new();
    let mut intensities = Vec::new();
    for o in obs.iter().filter(|o| keep(o)) {
        let p = input.radiance(o.illuminant, o.patch)?;
        let stack = &input.stacks[o.illuminant];
        for &i in &o.exposures {
            let e = stack.exposures()[i].seconds();
            intensities.push(invert_triplet(response, stack.sample(o.patch, i))?.map(|v| v / e));
            radiance.push(p.values().to_vec());
        }
    }
    let valid = vec![true; radiance.len()];
    MeasurementSet::new(input.grid, radiance, intensities, valid)
}

/// Raw tristimuli and the linearized codes they map to.
pub type GamutPairs<T> = (Vec<RawTristimulus<T>>, Vec<[T; CHANNELS]>);

/// Inputs `S = omega^T p` and linearized targets for fitting `h` on every unsaturated pair.
/// With [`ExposureStage::AfterGamut`] exposures are averaged out of the targets; otherwise each
/// exposure is a separate `(S e, g^-1(I))` pair.
pub fn gamut_training_pairs<T: Real>(
    input: &CalibrationInput<T>,
    omega: &SensitivityMatrix<T>,
    response: &ResponseCurve<T>,
    stage: ExposureStage,
) -> Result<GamutPairs<T>> {
    input.grid.ensure_same(omega.grid(), "calibration input vs sensitivity")?;
    let mut samples = Vec::new();
    let mut targets = Vec::new();
    for o in &observations(input) {
        let p = input.radiance(o.illuminant, o.patch)?;
        let s = crate::spectral::integrate_sensitivity(&p, omega)?;
        match stage {
            ExposureStage::AfterGamut => {
                samples.push(s);
                targets.push(linearized(input, o, response)?);
            }
            ExposureStage::BeforeGamut => {
                let stack = &input.stacks[o.illuminant];
                for &i in &o.exposures {
                    let e = stack.exposures()[i].seconds();
                    samples.push(RawTristimulus::from_array_unchecked(s.values().map(|v| v * e)));
                    targets.push(invert_triplet(response, stack.sample(o.patch, i))?);
                }
            }
        }
    }
    Ok((samples, targets))
}

/// Combined stack over all `(illuminant, patch)` pairs; requires a common exposure list.
pub fn combined_stack<T: Real>(input: &CalibrationInput<T>) -> Result<ExposureStack<T>> {
    let first = input.stacks.first().ok_or_else(|| Error::precondition("non_empty_input", "no stacks"))?;
    let same_exposures = input.stacks.iter().all(|s| s.exposures() == first.exposures());
    if !same_exposures {
        return Err(Error::precondition("shared_exposures", "all illuminants must use the same exposure list"));
    }
    let mut ids = Vec::new();
    let mut samples = Vec::new();
    for (u, s) in input.stacks.iter().enumerate() {
        for j in 0..s.n_patches() {
            ids.push(format!("{u}:{}", s.patch_ids()[j]));
            samples.push(s.samples()[j].clone());
        }
    }
    ExposureStack::new(first.exposures().to_vec(), ids, samples, first.bit_depth(), first.thresholds())
}

/// Estimates `omega`, `g` and `h` of the camera that produced `input`.
pub fn run_two_stage<T: Real>(
    input: &CalibrationInput<T>,
    db: &SensitivityDatabase<T>,
    cfg: &PipelineConfig,
) -> Result<EstimatedCamera<T>> {
    input.validate()?;
    input.grid.ensure_same(db.grid(), "calibration input vs sensitivity database")?;
    let bit_depth = input.bit_depth().ok_or_else(|| Error::precondition("non_empty_input", "no stacks"))?;
    let thresholds = input.thresholds().expect("stacks present");
    let obs = observations(input);
    let combined = combined_stack(input).map_err(|e| e.in_stage("stage 1"))?;
    let patches_per_illum = input.reflectances.len();
    let combined_index = |o: &Observation| o.illuminant * patches_per_illum + o.patch;

    // stage 1a: bootstrap partition with a provisional response
    let provisional = ResponseCurve::gamma(bit_depth, cfg.provisional_gamma)?;
    let first = partition_observations(input, &obs, &provisional, cfg.alpha).map_err(|e| e.in_stage("stage 1"))?;
    let check_inner = |p: &GamutPartition| -> Result<()> {
        if p.inner_indices.len() < cfg.min_inner {
            Err(Error::TooFewInner { found: p.inner_indices.len(), required: cfg.min_inner }.in_stage("stage 1"))
        } else {
            Ok(())
        }
    };
    check_inner(&first)?;

    let fit_on = |p: &GamutPartition| {
        let mut include = vec![false; combined.n_patches()];
        for &idx in &p.inner_indices {
            include[combined_index(&obs[idx])] = true;
        }
        estimate_response_masked(&combined, &cfg.response, |j, _| include[j]).map_err(|e| e.in_stage("stage 1"))
    };
    let provisional_fit = fit_on(&first)?;

    // stage 1b: one re-partition pass with the fitted response, then refit
    let partition = partition_observations(input, &obs, &provisional_fit.curve, cfg.alpha).map_err(|e| e.in_stage("stage 1"))?;
    check_inner(&partition)?;
    let response_fit = fit_on(&partition)?;
    let response = response_fit.curve.clone();

    // stage 1c: sensitivity from inner-gamut rows
    let inner: Vec<(usize, usize)> = partition.inner_indices.iter().map(|&i| (obs[i].illuminant, obs[i].patch)).collect();
    let measurements = sensitivity_measurements(input, &response, Some(&inner))?;
    let basis = build_basis(db, cfg.basis_dim).map_err(|e| e.in_stage("stage 1"))?;
    let (fits, omega_hat) = estimate_all_constrained(&measurements, &basis).map_err(|e| e.in_stage("stage 1"))?;
    let cross_validation = if measurements.valid_count() >= cfg.folds && cfg.folds >= 2 {
        Some(cross_validate(&measurements, &basis, cfg.folds, cfg.seed).map_err(|e| e.in_stage("stage 1"))?)
    } else {
        None
    };

    // stage 2: gamut map over every unsaturated observation
    let (samples, targets) = gamut_training_pairs(input, &omega_hat, &response, cfg.exposure_stage)?;
    let gamut = fit_gamut_map(&samples, &targets, &cfg.rbf).map_err(|e| e.in_stage("stage 2"))?;
    let stage2 = Stage2Diagnostics {
        samples: samples.len(),
        centers: gamut.centers.len(),
        training_rms: gamut.training_rms.to_f64_lossy(),
        training_max: gamut.training_max.to_f64_lossy(),
    };

    let camera = CameraModel {
        grid: input.grid,
        omega: omega_hat,
        response,
        gamut: GamutMap::Rbf(gamut),
        bit_depth,
        sat_lo: thresholds.lo,
        sat_hi: thresholds.hi,
        exposure_stage: cfg.exposure_stage,
    };
    camera.validate()?;

    let stage1 = Stage1Diagnostics {
        alpha: cfg.alpha,
        provisional_inner_count: first.inner_indices.len(),
        inner_count: partition.inner_indices.len(),
        outer_count: partition.outer_indices.len(),
        observations: obs.iter().map(|o| (o.illuminant, o.patch)).collect(),
        partition,
        response_residual_rms: response_fit.residual_rms,
        sensitivity_rows: measurements.len(),
        sensitivity_fits: fits.to_vec(),
        basis_captured_variance: std::array::from_fn(|k| basis.channel(k).captured_variance),
        cross_validation,
    };
    Ok(EstimatedCamera { camera, stage1, stage2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub rmse: f64,
    pub max_error: f64,
}

impl ErrorStats {
    fn from_errors(errors: &[f64]) -> Option<Self> {
        if errors.is_empty() {
            return None;
        }
        let sum_sq: f64 = errors.iter().map(|e| e * e).sum();
        Some(ErrorStats {
            count: errors.len(),
            rmse: (sum_sq / errors.len() as f64).sqrt(),
            max_error: errors.iter().fold(0.0, |m, e| m.max(e.abs())),
        })
    }
}

/// Error statistics of one channel; a split with no samples is absent rather than zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelEvaluation {
    pub unsaturated: Option<ErrorStats>,
    pub saturated: Option<ErrorStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub channel: usize,
    pub illuminant: usize,
    pub patch: usize,
    pub exposure: usize,
    pub measured: u32,
    pub predicted: u32,
    /// Saturation flag of the measured triplet.
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub channels: [ChannelEvaluation; CHANNELS],
    pub samples: usize,
    /// Whether the caller asserted the validation data is disjoint from training data.
    pub validation_disjoint: Option<bool>,
    pub scatter: Vec<ScatterRow>,
}

/// Compares `cam`'s predictions with the measured codes of `validation`.
pub fn evaluate<T: Real>(cam: &CameraModel<T>, validation: &CalibrationInput<T>) -> Result<EvaluationReport> {
    evaluate_with(cam, validation, None)
}

pub fn evaluate_with<T: Real>(
    cam: &CameraModel<T>,
    validation: &CalibrationInput<T>,
    validation_disjoint: Option<bool>,
) -> Result<EvaluationReport> {
    validation.validate()?;
    cam.grid.ensure_same(&validation.grid, "camera vs validation data")?;
    let mut unsat: [Vec<f64>; CHANNELS] = Default::default();
    let mut sat: [Vec<f64>; CHANNELS] = Default::default();
    let mut scatter = Vec::new();
    let mut samples = 0;
    let raw: Vec<Vec<RawTristimulus<T>>> = (0..validation.illuminants.len())
        .map(|u| {
            (0..validation.reflectances.len())
                .map(|j| cam.raw_tristimulus(&validation.illuminants[u], &validation.reflectances[j]))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    for cell in validation.cells() {
        let stack = &validation.stacks[cell.illuminant];
        let measured = stack.sample(cell.patch, cell.exposure);
        let saturated = stack.flags(cell.patch, cell.exposure).any_saturated();
        let predicted = cam.render(&raw[cell.illuminant][cell.patch], stack.exposures()[cell.exposure]);
        samples += 1;
        for k in 0..CHANNELS {
            let err = predicted.get(k) as f64 - measured.get(k) as f64;
            if saturated { &mut sat[k] } else { &mut unsat[k] }.push(err);
            scatter.push(ScatterRow {
                channel: k,
                illuminant: cell.illuminant,
                patch: cell.patch,
                exposure: cell.exposure,
                measured: measured.get(k),
                predicted: predicted.get(k),
                saturated,
            });
        }
    }
    let channels = std::array::from_fn(|k| ChannelEvaluation {
        unsaturated: ErrorStats::from_errors(&unsat[k]),
        saturated: ErrorStats::from_errors(&sat[k]),
    });
    Ok(EvaluationReport { channels, samples, validation_disjoint, scatter })
}

/// Deterministic synthetic calibration data rendered through `truth`.
pub fn generate_synthetic_dataset<T: Real>(
    truth: &CameraModel<T>,
    n_illuminants: usize,
    n_patches: usize,
    exposures: &[T],
    seed: u64,
) -> Result<(CalibrationInput<T>, CameraModel<T>)> {
    if n_illuminants == 0 || n_patches == 0 || exposures.is_empty() {
        return Err(Error::precondition(
            "positive_dataset_size",
            format!("{n_illuminants} illuminants, {n_patches} patches, {} exposures", exposures.len()),
        ));
    }
    let grid = truth.grid;
    let mut rng = synthetic::rng(seed);
    let illuminants = (0..n_illuminants).map(|_| synthetic::random_illuminant(&grid, &mut rng)).collect::<Result<Vec<_>>>()?;
    let reflectances = (0..n_patches).map(|_| synthetic::random_reflectance(&grid, &mut rng)).collect::<Result<Vec<_>>>()?;
    let input = render_calibration_input(truth, illuminants, reflectances, exposures)?;
    Ok((input, truth.clone()))
}

/// Renders every (illuminant, patch, exposure) cell through `truth`.
pub fn render_calibration_input<T: Real>(
    truth: &CameraModel<T>,
    illuminants: Vec<SpectralCurve<T>>,
    reflectances: Vec<SpectralCurve<T>>,
    exposures: &[T],
) -> Result<CalibrationInput<T>> {
    let n_patches = reflectances.len();
    let exposures = exposures.iter().map(|&e| ExposureSetting::new(e)).collect::<Result<Vec<_>>>()?;
    let patch_ids: Vec<String> = (0..n_patches).map(|j| format!("P{j:02}")).collect();
    let stacks = illuminants
        .iter()
        .map(|l| {
            let samples = reflectances
                .iter()
                .map(|r| {
                    let s = truth.raw_tristimulus(l, r)?;
                    Ok(exposures.iter().map(|&e| truth.render(&s, e)).collect::<Vec<PixelTriplet>>())
                })
                .collect::<Result<Vec<_>>>()?;
            ExposureStack::new(exposures.clone(), patch_ids.clone(), samples, truth.bit_depth, truth.thresholds())
        })
        .collect::<Result<Vec<_>>>()?;
    CalibrationInput::new(truth.grid, illuminants, reflectances, stacks)
}
