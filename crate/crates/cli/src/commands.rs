use std::path::{Path, PathBuf};

use camspec::io::{self, RunManifest, SpectralTable};
use camspec::pipeline::Stage1Diagnostics;
use camspec::response::estimate_response_masked;
use camspec::sensitivity::{estimate_all_constrained, SensitivityFit};
use camspec::synthetic;
use camspec::{
    build_basis, combined_stack, cross_validate, estimate_pinv, evaluate_with, fit_gamut_map, gamut_training_pairs,
    partition_gamut, render_calibration_input, run_two_stage, sensitivity_measurements, CalibrationInput64, CameraModel64,
    CrossValidationReport, CurveKind, Error, ExposureStack64, GamutMap, PipelineConfig, ResponseCurve, Result,
    SpectralCurve64, CHANNELS,
};
use serde::{Deserialize, Serialize};

use crate::{Cli, Command, Estimator, GamutKind};

/// Collects output paths so the manifest can digest them.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    fn extend(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.written.extend(paths);
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.common.config {
        Some(path) => io::read_json::<PipelineConfig>(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    cfg.thresholds()?;
    Ok(cfg)
}

fn dataset_manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(io::DATASET_MANIFEST)
    } else {
        path.to_path_buf()
    }
}

fn load_dataset(path: &Path, cfg: &PipelineConfig) -> Result<CalibrationInput64> {
    let input: CalibrationInput64 = io::load_dataset(&dataset_manifest_path(path), cfg.bit_depth, cfg.thresholds()?)?;
    if input.grid.same_as(&cfg.grid) {
        Ok(input)
    } else {
        input.resampled(&cfg.grid)
    }
}

/// The manifest of a dataset or database followed by every file it lists.
fn dataset_files(path: &Path) -> Result<Vec<PathBuf>> {
    let manifest_path = dataset_manifest_path(path);
    let m: io::DatasetManifest = io::read_versioned(&manifest_path)?;
    let mut files = vec![manifest_path.clone()];
    files.extend(io::dataset_files(&manifest_path, &m));
    ensure_present(files)
}

fn database_files(manifest: &Path) -> Result<Vec<PathBuf>> {
    let m: io::DatabaseManifest = io::read_versioned(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new(""));
    let mut files = vec![manifest.to_path_buf()];
    files.extend(m.entries.iter().map(|e| if e.file.is_absolute() { e.file.clone() } else { base.join(&e.file) }));
    ensure_present(files)
}

/// Files listed by a manifest must exist before they are hashed, so that a dangling entry is
/// reported as missing rather than as an unreadable file.
fn ensure_present(files: Vec<PathBuf>) -> Result<Vec<PathBuf>> {
    let missing: Vec<String> = files.iter().filter(|f| !f.is_file()).map(|f| f.display().to_string()).collect();
    if missing.is_empty() {
        Ok(files)
    } else {
        Err(Error::MissingEntry { missing })
    }
}

/// Every file the command will read, for the run manifest.
fn input_files(cli: &Cli) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = cli.common.config.iter().cloned().collect();
    match &cli.command {
        Command::Synth { .. } => {}
        Command::Simulate { camera, scene } => {
            let s: Scene = io::read_versioned(scene)?;
            let base = scene.parent().unwrap_or(Path::new(""));
            files.extend([camera.clone(), scene.clone(), base.join(&s.illuminant), base.join(&s.reflectances)]);
        }
        Command::FitResponse { dataset, stack } => {
            if let Some(d) = dataset {
                files.extend(dataset_files(d)?);
            }
            files.extend(stack.iter().cloned());
        }
        Command::FitSensitivity { dataset, response, database, .. } => {
            files.extend(dataset_files(dataset)?);
            files.push(response.clone());
            if let Some(db) = database {
                files.extend(database_files(db)?);
            }
        }
        Command::FitGamut { dataset, camera } | Command::Evaluate { dataset, camera, .. } | Command::ExportChromaticity { dataset, camera } => {
            files.extend(dataset_files(dataset)?);
            files.push(camera.clone());
        }
        Command::Pipeline { dataset, database } => {
            files.extend(dataset_files(dataset)?);
            files.extend(database_files(database)?);
        }
    }
    Ok(files)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let mut out = Outputs { dir: cli.common.out.clone(), written: Vec::new() };
    let inputs = input_files(cli)?;
    let mut manifest = match &cli.command {
        Command::Synth { .. } => RunManifest::start(cli.command.name(), &(&cfg, &cli.command), cfg.seed, &inputs)?,
        _ => RunManifest::start(cli.command.name(), &cfg, cfg.seed, &inputs)?,
    };
    match &cli.command {
        Command::Synth { illuminants, patches, validation_patches, exposures, gamut, beta, database_entries, gamma } => {
            let params = SynthParams {
                illuminants: *illuminants,
                patches: *patches,
                validation_patches: *validation_patches,
                exposures,
                gamut: *gamut,
                beta: *beta,
                database_entries: *database_entries,
                gamma: *gamma,
            };
            synth(&cfg, &params, &mut out)?
        }
        Command::Simulate { camera, scene } => simulate(camera, scene, &mut out)?,
        Command::FitResponse { dataset, stack } => fit_response(&cfg, dataset.as_deref(), stack, &mut out)?,
        Command::FitSensitivity { dataset, response, database, estimator } => {
            fit_sensitivity(&cfg, dataset, response, database.as_deref(), *estimator, &mut out)?
        }
        Command::FitGamut { dataset, camera } => fit_gamut(&cfg, dataset, camera, &mut out)?,
        Command::Pipeline { dataset, database } => pipeline(&cfg, dataset, database, &mut out)?,
        Command::Evaluate { camera, dataset, disjoint } => evaluate(&cfg, camera, dataset, *disjoint, &mut out)?,
        Command::ExportChromaticity { camera, dataset } => export_chromaticity(&cfg, camera, dataset, &mut out)?,
    }
    manifest.finish(&out.written)?;
    io::write_json(&out.dir.join("manifest.json"), &manifest)
}

struct SynthParams<'a> {
    illuminants: usize,
    patches: usize,
    validation_patches: usize,
    exposures: &'a [f64],
    gamut: GamutKind,
    beta: f64,
    database_entries: usize,
    gamma: f64,
}

/// Extent of the raw-tristimulus cube the synthetic gamut maps are fitted over.
const SYNTH_GAMUT_EXTENT: f64 = 1.2;
/// Chroma ratio where the knee map starts to act.
const SYNTH_KNEE: f64 = 1.0;

fn synth(cfg: &PipelineConfig, params: &SynthParams, out: &mut Outputs) -> Result<()> {
    let grid = cfg.grid;
    let gamut = match params.gamut {
        GamutKind::Identity => GamutMap::Identity,
        GamutKind::Knee => GamutMap::Rbf(synthetic::knee_gamut_map(params.beta, SYNTH_KNEE, SYNTH_GAMUT_EXTENT)?),
        GamutKind::Boost => GamutMap::Rbf(synthetic::boost_gamut_map(params.beta, SYNTH_GAMUT_EXTENT)?),
    };
    let omega = synthetic::synthetic_sensitivity(&grid, cfg.seed)?;
    let response = ResponseCurve::gamma(cfg.bit_depth, params.gamma)?;
    let mut truth = CameraModel64::new(omega, response, gamut)?;
    truth.sat_lo = cfg.sat_lo;
    truth.sat_hi = cfg.sat_hi;
    truth.exposure_stage = cfg.exposure_stage;
    truth.validate()?;

    let (train, _) =
        camspec::generate_synthetic_dataset(&truth, params.illuminants, params.patches, params.exposures, cfg.seed.wrapping_add(1))?;
    let mut rng = synthetic::rng(cfg.seed.wrapping_add(2));
    let held_out = (0..params.validation_patches)
        .map(|_| synthetic::random_reflectance(&grid, &mut rng))
        .collect::<Result<Vec<SpectralCurve64>>>()?;
    let db = synthetic::synthetic_database::<f64>(&grid, params.database_entries, cfg.seed.wrapping_add(3))?;

    let camera_path = out.path("truth_camera.json");
    io::save_camera(&camera_path, &truth)?;
    out.extend(dataset_files(&io::save_dataset(&out.dir.join("dataset"), &train)?)?);
    if params.validation_patches > 0 {
        let validation = render_calibration_input(&truth, train.illuminants.clone(), held_out, params.exposures)?;
        out.extend(dataset_files(&io::save_dataset(&out.dir.join("validation"), &validation)?)?);
    }
    out.extend(database_files(&io::write_database(&out.dir.join("database"), &db)?)?);
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Scene {
    #[allow(dead_code)]
    schema: u64,
    /// Spectral CSV with one illuminant column.
    illuminant: PathBuf,
    /// Spectral CSV with one column per patch; column names become patch ids.
    reflectances: PathBuf,
    exposures: Vec<f64>,
}

fn simulate(camera: &Path, scene_path: &Path, out: &mut Outputs) -> Result<()> {
    let cam: CameraModel64 = io::load_camera(camera)?;
    let scene: Scene = io::read_versioned(scene_path)?;
    let base = scene_path.parent().unwrap_or(Path::new(""));
    let illum_table = io::read_spectral_csv::<f64>(&base.join(&scene.illuminant))?;
    if illum_table.columns.len() != 1 {
        return Err(Error::Precondition {
            precondition: "single_illuminant",
            detail: format!("{} has {} columns", scene.illuminant.display(), illum_table.columns.len()),
        });
    }
    let refl_table = io::read_spectral_csv::<f64>(&base.join(&scene.reflectances))?;
    let illuminant = illum_table.curves(CurveKind::Illuminant)?.remove(0).resample(&cam.grid);
    let reflectances: Vec<SpectralCurve64> =
        refl_table.curves(CurveKind::Reflectance)?.iter().map(|c| c.resample(&cam.grid)).collect();
    let input = render_calibration_input(&cam, vec![illuminant], reflectances, &scene.exposures)?;
    let stack = &input.stacks[0];
    let renamed = ExposureStack64::new(
        stack.exposures().to_vec(),
        refl_table.names.clone(),
        stack.samples().to_vec(),
        stack.bit_depth(),
        stack.thresholds(),
    )?;
    io::write_stack_csv(&out.path("pixels.csv"), &renamed)
}

#[derive(Debug, Serialize)]
struct ResponseReport {
    residual_rms: [f64; CHANNELS],
    samples_used: usize,
    projected: [bool; CHANNELS],
    smoothness_lambda: f64,
}

fn fit_response(cfg: &PipelineConfig, dataset: Option<&Path>, stacks: &[PathBuf], out: &mut Outputs) -> Result<()> {
    let stack = match dataset {
        Some(d) => combined_stack(&load_dataset(d, cfg)?)?,
        None => {
            let loaded = stacks
                .iter()
                .map(|p| io::read_stack_csv::<f64>(p, cfg.bit_depth, cfg.thresholds()?))
                .collect::<Result<Vec<_>>>()?;
            pool_stacks(&loaded)?
        }
    };
    let fit = estimate_response_masked(&stack, &cfg.response, |_, _| true)?;
    io::save_response(&out.path("response.json"), &fit.curve)?;
    io::write_response_csv(&out.path("response.csv"), &fit.curve)?;
    let report = ResponseReport {
        residual_rms: fit.residual_rms,
        samples_used: fit.samples_used,
        projected: fit.projected,
        smoothness_lambda: cfg.response.smoothness_lambda,
    };
    io::write_json(&out.path("response_report.json"), &report)
}

fn pool_stacks(stacks: &[ExposureStack64]) -> Result<ExposureStack64> {
    let first = stacks.first().ok_or_else(|| Error::Precondition { precondition: "non_empty_input", detail: "no stacks".into() })?;
    let mut pooled = first.clone();
    for (u, s) in stacks.iter().enumerate().skip(1) {
        if s.exposures() != first.exposures() {
            return Err(Error::Precondition {
                precondition: "shared_exposures",
                detail: "all stacks must use the same exposure list".into(),
            });
        }
        for (j, id) in s.patch_ids().iter().enumerate() {
            pooled = pooled.with_patch(format!("{u}:{id}"), s.samples()[j].clone())?;
        }
    }
    Ok(pooled)
}

#[derive(Debug, Serialize)]
struct SensitivityReport {
    estimator: &'static str,
    rows: usize,
    basis_dim: Option<usize>,
    fits: Option<Vec<SensitivityFit<f64>>>,
    cross_validation: Option<CrossValidationReport<f64>>,
}

fn fit_sensitivity(
    cfg: &PipelineConfig,
    dataset: &Path,
    response: &Path,
    database: Option<&Path>,
    estimator: Estimator,
    out: &mut Outputs,
) -> Result<()> {
    let input = load_dataset(dataset, cfg)?;
    let curve: ResponseCurve<f64> = io::load_response(response)?;
    let m = sensitivity_measurements(&input, &curve, None)?;
    match estimator {
        Estimator::Pinv => {
            let channels = (0..CHANNELS).map(|k| estimate_pinv(&m, k)).collect::<Result<Vec<_>>>()?;
            let table = SpectralTable {
                grid: input.grid,
                names: io::DATABASE_HEADER[1..].iter().map(|s| s.to_string()).collect(),
                columns: channels,
            };
            io::write_spectral_csv(&out.path("sensitivity.csv"), &table)?;
            let report =
                SensitivityReport { estimator: "pinv", rows: m.valid_count(), basis_dim: None, fits: None, cross_validation: None };
            io::write_json(&out.path("sensitivity_report.json"), &report)
        }
        Estimator::Constrained => {
            let db_path = database.ok_or_else(|| Error::Precondition {
                precondition: "database_for_constrained_estimator",
                detail: "--database is required with --estimator constrained".into(),
            })?;
            let db = io::read_database::<f64>(db_path)?;
            let basis = build_basis(&db, cfg.basis_dim)?;
            let (fits, omega) = estimate_all_constrained(&m, &basis)?;
            let cv = if cfg.folds >= 2 && m.valid_count() >= cfg.folds {
                Some(cross_validate(&m, &basis, cfg.folds, cfg.seed)?)
            } else {
                None
            };
            io::write_sensitivity_csv(&out.path("sensitivity.csv"), &omega)?;
            if let Some(cv) = &cv {
                io::write_cross_validation_csv(&out.path("cross_validation.csv"), cv)?;
            }
            let report = SensitivityReport {
                estimator: "constrained",
                rows: m.valid_count(),
                basis_dim: Some(cfg.basis_dim),
                fits: Some(fits.to_vec()),
                cross_validation: cv,
            };
            io::write_json(&out.path("sensitivity_report.json"), &report)
        }
    }
}

#[derive(Debug, Serialize)]
struct GamutReport {
    samples: usize,
    centers: usize,
    kernel_width: f64,
    training_rms: f64,
    training_max: f64,
}

fn fit_gamut(cfg: &PipelineConfig, dataset: &Path, camera: &Path, out: &mut Outputs) -> Result<()> {
    let input = load_dataset(dataset, cfg)?;
    let mut cam: CameraModel64 = io::load_camera(camera)?;
    let (samples, targets) = gamut_training_pairs(&input, &cam.omega, &cam.response, cam.exposure_stage)?;
    let map = fit_gamut_map(&samples, &targets, &cfg.rbf)?;
    let report = GamutReport {
        samples: samples.len(),
        centers: map.centers.len(),
        kernel_width: map.kernel_width,
        training_rms: map.training_rms,
        training_max: map.training_max,
    };
    cam.gamut = GamutMap::Rbf(map);
    cam.validate()?;
    io::save_camera(&out.path("camera.json"), &cam)?;
    io::write_json(&out.path("gamut_report.json"), &report)
}

#[derive(Debug, Serialize)]
struct PipelineReport<'a> {
    stage1: &'a Stage1Diagnostics<f64>,
    stage2: &'a camspec::pipeline::Stage2Diagnostics,
}

fn pipeline(cfg: &PipelineConfig, dataset: &Path, database: &Path, out: &mut Outputs) -> Result<()> {
    let input = load_dataset(dataset, cfg)?;
    let db = io::read_database::<f64>(database)?;
    let est = run_two_stage(&input, &db, cfg)?;
    io::save_camera(&out.path("camera.json"), &est.camera)?;
    io::write_json(&out.path("report.json"), &PipelineReport { stage1: &est.stage1, stage2: &est.stage2 })?;
    io::write_response_csv(&out.path("response.csv"), &est.camera.response)?;
    io::write_sensitivity_csv(&out.path("sensitivity.csv"), &est.camera.omega)?;
    if let Some(cv) = &est.stage1.cross_validation {
        io::write_cross_validation_csv(&out.path("cross_validation.csv"), cv)?;
    }
    Ok(())
}

fn evaluate(cfg: &PipelineConfig, camera: &Path, dataset: &Path, disjoint: bool, out: &mut Outputs) -> Result<()> {
    let cam: CameraModel64 = io::load_camera(camera)?;
    let input = load_dataset(dataset, cfg)?;
    let input = if input.grid.same_as(&cam.grid) { input } else { input.resampled(&cam.grid)? };
    let report = evaluate_with(&cam, &input, Some(disjoint))?;
    io::write_scatter_csv(&out.path("scatter.csv"), &report)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        channels: &'a [camspec::pipeline::ChannelEvaluation; CHANNELS],
        samples: usize,
        validation_disjoint: Option<bool>,
    }
    io::write_json(
        &out.path("evaluation.json"),
        &Summary { channels: &report.channels, samples: report.samples, validation_disjoint: report.validation_disjoint },
    )
}

fn export_chromaticity(cfg: &PipelineConfig, camera: &Path, dataset: &Path, out: &mut Outputs) -> Result<()> {
    let cam: CameraModel64 = io::load_camera(camera)?;
    let input = load_dataset(dataset, cfg)?;
    let input = if input.grid.same_as(&cam.grid) { input } else { input.resampled(&cam.grid)? };
    let mut points = Vec::new();
    for u in 0..input.illuminants.len() {
        for j in 0..input.reflectances.len() {
            points.push(cam.raw_tristimulus(&input.illuminants[u], &input.reflectances[j])?);
        }
    }
    let partition = partition_gamut(&points, cfg.alpha)?;
    let rows = io::chromaticity_rows(&points, &partition)?;
    io::write_chromaticity_csv(&out.path("chromaticity.csv"), &rows)
}
