//! On-disk formats.
//!
//! Tabular data is CSV, structured models are JSON carrying `"schema": 1`. Readers report
//! malformed input as [`Error::Parse`] with a 1-based line and column; a well-formed file that
//! describes an invalid object fails with the violated invariant instead.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forward::{CameraModel, ExposureSetting, PixelTriplet, ResponseCurve, SaturationThresholds, SensitivityMatrix, CHANNELS};
use crate::gamut::{xy_of_values, GamutPartition, RawTristimulus, SRGB_TO_XYZ};
use crate::pipeline::{CalibrationInput, EvaluationReport};
use crate::response::ExposureStack;
use crate::scalar::Real;
use crate::sensitivity::{CrossValidationReport, DatabaseEntry, SensitivityDatabase};
use crate::spectral::{CurveKind, SpectralCurve, SpectralGrid};

pub const SCHEMA_VERSION: u64 = 1;

pub const STACK_HEADER: [&str; 5] = ["patch_id", "exposure_s", "I_r", "I_g", "I_b"];
pub const DATABASE_HEADER: [&str; 4] = ["wavelength_nm", "omega_r", "omega_g", "omega_b"];
const CHANNEL_SUFFIX: [&str; CHANNELS] = ["r", "g", "b"];

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn parse_error(path: &Path, line: u64, column: u64, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, column, message: message.into() }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_error(path, source),
        other => parse_error(path, line, 0, format!("{other:?}")),
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| io_error(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(file))
}

fn create_csv(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(file))
}

fn finish_csv(path: &Path, mut w: csv::Writer<fs::File>) -> Result<()> {
    w.flush().map_err(|e| io_error(path, e))
}

/// Rows of a CSV file with their 1-based line numbers; the first row is the header.
fn read_rows(path: &Path) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut reader = open_csv(path)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push((line, rec));
    }
    if rows.is_empty() {
        return Err(parse_error(path, 1, 1, "empty file: expected a header row"));
    }
    Ok(rows)
}

fn field<'r>(path: &Path, line: u64, rec: &'r csv::StringRecord, col: usize, expected: usize) -> Result<&'r str> {
    if rec.len() != expected {
        return Err(parse_error(path, line, (rec.len().min(expected) + 1) as u64, format!("expected {expected} fields, found {}", rec.len())));
    }
    Ok(&rec[col])
}

fn parse_real(path: &Path, line: u64, col: usize, text: &str) -> Result<f64> {
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(parse_error(path, line, col as u64 + 1, format!("`{text}` is not a finite number"))),
    }
}

fn parse_code(path: &Path, line: u64, col: usize, text: &str) -> Result<u32> {
    text.parse::<u32>()
        .map_err(|_| parse_error(path, line, col as u64 + 1, format!("`{text}` is not a nonnegative integer code")))
}

fn check_header(path: &Path, header: &csv::StringRecord, line: u64, expected: &[&str]) -> Result<()> {
    for (i, name) in expected.iter().enumerate() {
        match header.get(i) {
            Some(h) if h == *name => {}
            found => {
                return Err(parse_error(
                    path,
                    line,
                    i as u64 + 1,
                    format!("expected header `{}`, found `{}`", expected.join(","), found.unwrap_or("")),
                ))
            }
        }
    }
    if header.len() != expected.len() {
        return Err(parse_error(path, line, expected.len() as u64 + 1, format!("expected header `{}`", expected.join(","))));
    }
    Ok(())
}

fn fmt<T: Real>(v: T) -> String {
    format!("{v}")
}

/// Named columns sampled on a common wavelength grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTable<T: Real> {
    pub grid: SpectralGrid,
    pub names: Vec<String>,
    pub columns: Vec<Vec<T>>,
}

impl<T: Real> SpectralTable<T> {
    pub fn curves(&self, kind: CurveKind) -> Result<Vec<SpectralCurve<T>>> {
        self.columns.iter().map(|c| SpectralCurve::new(self.grid, c.clone(), kind)).collect()
    }

    pub fn from_curves(names: Vec<String>, curves: &[SpectralCurve<T>]) -> Result<Self> {
        let grid = *curves
            .first()
            .ok_or_else(|| Error::precondition("at_least_one_curve", "nothing to write"))?
            .grid();
        for c in curves {
            grid.ensure_same(c.grid(), "spectral table columns")?;
        }
        if names.len() != curves.len() {
            return Err(Error::precondition("one_name_per_curve", format!("{} names, {} curves", names.len(), curves.len())));
        }
        Ok(SpectralTable { grid, names, columns: curves.iter().map(|c| c.values().to_vec()).collect() })
    }
}

/// Reads `wavelength_nm,value` or `wavelength_nm,v1,v2,...`; wavelengths must strictly increase
/// on a uniform step.
pub fn read_spectral_csv<T: Real>(path: &Path) -> Result<SpectralTable<T>> {
    let rows = read_rows(path)?;
    let (hline, header) = &rows[0];
    if header.get(0) != Some("wavelength_nm") || header.len() < 2 {
        return Err(parse_error(path, *hline, 1, "expected header `wavelength_nm,<column>[,<column>...]`"));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let width = header.len();
    let mut wavelengths = Vec::with_capacity(rows.len() - 1);
    let mut columns = vec![Vec::with_capacity(rows.len() - 1); names.len()];
    for (line, rec) in &rows[1..] {
        let wl = parse_real(path, *line, 0, field(path, *line, rec, 0, width)?)?;
        if let Some(&prev) = wavelengths.last() {
            if wl <= prev {
                return Err(parse_error(
                    path,
                    *line,
                    1,
                    format!("rule `strictly_increasing_wavelength` violated: {wl} nm follows {prev} nm"),
                ));
            }
        }
        wavelengths.push(wl);
        for (c, col) in columns.iter_mut().enumerate() {
            col.push(T::lit(parse_real(path, *line, c + 1, &rec[c + 1])?));
        }
    }
    if wavelengths.len() < 2 {
        return Err(parse_error(path, rows.last().map(|r| r.0).unwrap_or(1), 1, "need at least two wavelength rows"));
    }
    let grid = SpectralGrid::from_wavelengths(&wavelengths).map_err(|e| parse_error(path, rows[1].0, 1, e.to_string()))?;
    Ok(SpectralTable { grid, names, columns })
}

pub fn write_spectral_csv<T: Real>(path: &Path, table: &SpectralTable<T>) -> Result<()> {
    let mut w = create_csv(path)?;
    let mut header = vec!["wavelength_nm".to_string()];
    header.extend(table.names.iter().cloned());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for i in 0..table.grid.count() {
        let mut row = vec![format!("{}", table.grid.wavelength(i))];
        row.extend(table.columns.iter().map(|c| fmt(c[i])));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    finish_csv(path, w)
}

/// Reads a `patch_id,exposure_s,I_r,I_g,I_b` file. Patches and exposures keep their order of
/// first appearance; every patch must appear exactly once at every exposure.
pub fn read_stack_csv<T: Real>(path: &Path, bit_depth: u32, thresholds: SaturationThresholds) -> Result<ExposureStack<T>> {
    let rows = read_rows(path)?;
    check_header(path, &rows[0].1, rows[0].0, &STACK_HEADER)?;
    let mut patch_ids: Vec<String> = Vec::new();
    let mut patch_index: HashMap<String, usize> = HashMap::new();
    let mut exposures: Vec<f64> = Vec::new();
    let mut cells: HashMap<(usize, usize), PixelTriplet> = HashMap::new();
    for (line, rec) in &rows[1..] {
        let id = field(path, *line, rec, 0, STACK_HEADER.len())?.to_string();
        let e = parse_real(path, *line, 1, &rec[1])?;
        if e <= 0.0 {
            return Err(parse_error(path, *line, 2, format!("rule `positive_exposure` violated: {e}")));
        }
        let mut codes = [0u32; CHANNELS];
        for k in 0..CHANNELS {
            codes[k] = parse_code(path, *line, 2 + k, &rec[2 + k])?;
        }
        let px = PixelTriplet::new(codes, bit_depth).map_err(|err| parse_error(path, *line, 3, err.to_string()))?;
        let j = *patch_index.entry(id.clone()).or_insert_with(|| {
            patch_ids.push(id.clone());
            patch_ids.len() - 1
        });
        let i = match exposures.iter().position(|&x| x == e) {
            Some(i) => i,
            None => {
                exposures.push(e);
                exposures.len() - 1
            }
        };
        if cells.insert((j, i), px).is_some() {
            return Err(parse_error(path, *line, 1, format!("duplicate row for patch `{id}` at exposure {e}")));
        }
    }
    if patch_ids.is_empty() {
        return Err(parse_error(path, rows[0].0, 1, "no data rows"));
    }
    let mut missing = Vec::new();
    let mut samples = Vec::with_capacity(patch_ids.len());
    for (j, id) in patch_ids.iter().enumerate() {
        let mut row = Vec::with_capacity(exposures.len());
        for (i, e) in exposures.iter().enumerate() {
            match cells.get(&(j, i)) {
                Some(&px) => row.push(px),
                None => missing.push(format!("{}: patch {id} at exposure {e}", path.display())),
            }
        }
        samples.push(row);
    }
    if !missing.is_empty() {
        return Err(Error::MissingEntry { missing });
    }
    let exposures = exposures.into_iter().map(|e| ExposureSetting::new(T::lit(e))).collect::<Result<Vec<_>>>()?;
    ExposureStack::new(exposures, patch_ids, samples, bit_depth, thresholds)
}

pub fn write_stack_csv<T: Real>(path: &Path, stack: &ExposureStack<T>) -> Result<()> {
    let mut w = create_csv(path)?;
    w.write_record(STACK_HEADER).map_err(|e| csv_error(path, e))?;
    for (j, id) in stack.patch_ids().iter().enumerate() {
        for (i, e) in stack.exposures().iter().enumerate() {
            let px = stack.sample(j, i);
            w.write_record([id.clone(), fmt(e.seconds()), px.0[0].to_string(), px.0[1].to_string(), px.0[2].to_string()])
                .map_err(|e| csv_error(path, e))?;
        }
    }
    finish_csv(path, w)
}

/// Reads a `wavelength_nm,omega_r,omega_g,omega_b` file.
pub fn read_sensitivity_csv<T: Real>(path: &Path) -> Result<SensitivityMatrix<T>> {
    let rows = read_rows(path)?;
    check_header(path, &rows[0].1, rows[0].0, &DATABASE_HEADER)?;
    let table = read_spectral_csv::<T>(path)?;
    let [r, g, b]: [Vec<T>; CHANNELS] = table.columns.try_into().expect("header checked");
    SensitivityMatrix::new(table.grid, [r, g, b])
}

pub fn write_sensitivity_csv<T: Real>(path: &Path, omega: &SensitivityMatrix<T>) -> Result<()> {
    write_spectral_csv(
        path,
        &SpectralTable {
            grid: *omega.grid(),
            names: DATABASE_HEADER[1..].iter().map(|s| s.to_string()).collect(),
            columns: omega.channels().to_vec(),
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatabaseManifest {
    pub schema: u64,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    /// Path of the entry's CSV, relative to the manifest.
    pub file: PathBuf,
}

fn resolve(base: &Path, file: &Path) -> PathBuf {
    if file.is_absolute() {
        file.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new("")).join(file)
    }
}

/// Loads every camera listed in a database manifest. Reports all missing files at once.
pub fn read_database<T: Real>(manifest_path: &Path) -> Result<SensitivityDatabase<T>> {
    let manifest: DatabaseManifest = read_versioned(manifest_path)?;
    let missing: Vec<String> = manifest
        .entries
        .iter()
        .filter(|e| !resolve(manifest_path, &e.file).is_file())
        .map(|e| format!("{} ({})", e.name, resolve(manifest_path, &e.file).display()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingEntry { missing });
    }
    let entries = manifest
        .entries
        .iter()
        .map(|e| Ok(DatabaseEntry { name: e.name.clone(), omega: read_sensitivity_csv(&resolve(manifest_path, &e.file))? }))
        .collect::<Result<Vec<_>>>()?;
    SensitivityDatabase::new(entries)
}

/// Writes `manifest.json` and one CSV per entry into `dir`; returns the manifest path.
pub fn write_database<T: Real>(dir: &Path, db: &SensitivityDatabase<T>) -> Result<PathBuf> {
    let mut entries = Vec::with_capacity(db.len());
    for e in db.entries() {
        let file = PathBuf::from(format!("{}.csv", e.name));
        write_sensitivity_csv(&dir.join(&file), &e.omega)?;
        entries.push(ManifestEntry { name: e.name.clone(), file });
    }
    let path = dir.join("manifest.json");
    write_json(&path, &DatabaseManifest { schema: SCHEMA_VERSION, entries })?;
    Ok(path)
}

fn json_parse_error(path: &Path, e: serde_json::Error) -> Error {
    if e.is_io() {
        return io_error(path, e.into());
    }
    parse_error(path, e.line() as u64, e.column() as u64, e.to_string())
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| json_parse_error(path, e))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| json_parse_error(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

#[derive(Deserialize)]
struct SchemaProbe {
    schema: Option<u64>,
}

/// Reads a JSON document whose `schema` field must equal [`SCHEMA_VERSION`]. The version is
/// checked before the body so that a newer file fails as a version mismatch.
pub fn read_versioned<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let probe: SchemaProbe = serde_json::from_str(&text).map_err(|e| json_parse_error(path, e))?;
    match probe.schema {
        Some(SCHEMA_VERSION) => serde_json::from_str(&text).map_err(|e| json_parse_error(path, e)),
        found => Err(Error::SchemaVersion { path: path.to_path_buf(), found: found.unwrap_or(0), expected: SCHEMA_VERSION }),
    }
}

#[derive(Serialize)]
struct VersionedRef<'a, S: Serialize> {
    schema: u64,
    #[serde(flatten)]
    body: &'a S,
}

#[derive(Deserialize)]
#[serde(bound = "S: DeserializeOwned")]
struct Versioned<S> {
    #[allow(dead_code)]
    schema: u64,
    #[serde(flatten)]
    body: S,
}

pub fn write_versioned<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    write_json(path, &VersionedRef { schema: SCHEMA_VERSION, body: value })
}

pub fn save_camera<T: Real>(path: &Path, cam: &CameraModel<T>) -> Result<()> {
    write_versioned(path, cam)
}

pub fn load_camera<T: Real>(path: &Path) -> Result<CameraModel<T>> {
    let cam: Versioned<CameraModel<T>> = read_versioned(path)?;
    cam.body.validate()?;
    Ok(cam.body)
}

pub fn save_response<T: Real>(path: &Path, curve: &ResponseCurve<T>) -> Result<()> {
    write_versioned(path, curve)
}

pub fn load_response<T: Real>(path: &Path) -> Result<ResponseCurve<T>> {
    let curve: Versioned<ResponseCurve<T>> = read_versioned(path)?;
    curve.body.validate()?;
    Ok(curve.body)
}

/// `code,ln_E_r,ln_E_g,ln_E_b`, one row per code.
pub fn write_response_csv<T: Real>(path: &Path, curve: &ResponseCurve<T>) -> Result<()> {
    let mut w = create_csv(path)?;
    w.write_record(["code", "ln_E_r", "ln_E_g", "ln_E_b"]).map_err(|e| csv_error(path, e))?;
    for z in 0..curve.levels() {
        let row: Vec<String> = std::iter::once(z.to_string()).chain((0..CHANNELS).map(|k| fmt(curve.ln_table(k)[z]))).collect();
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    finish_csv(path, w)
}

/// `wavelength_nm,mu_r,mu_g,mu_b,sigma_r,sigma_g,sigma_b`.
pub fn write_cross_validation_csv<T: Real>(path: &Path, cv: &CrossValidationReport<T>) -> Result<()> {
    let mut names: Vec<String> = CHANNEL_SUFFIX.iter().map(|c| format!("mu_{c}")).collect();
    names.extend(CHANNEL_SUFFIX.iter().map(|c| format!("sigma_{c}")));
    let mut columns = cv.mu.channels().to_vec();
    columns.extend(cv.sigma.iter().cloned());
    write_spectral_csv(path, &SpectralTable { grid: *cv.mu.grid(), names, columns })
}

/// `channel,I,I_hat,saturated`, one row per channel of every evaluated sample.
pub fn write_scatter_csv(path: &Path, report: &EvaluationReport) -> Result<()> {
    let mut w = create_csv(path)?;
    w.write_record(["channel", "I", "I_hat", "saturated"]).map_err(|e| csv_error(path, e))?;
    for row in &report.scatter {
        w.write_record([
            CHANNEL_SUFFIX[row.channel].to_string(),
            row.measured.to_string(),
            row.predicted.to_string(),
            row.saturated.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    finish_csv(path, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChromaticityRow {
    pub x: f64,
    pub y: f64,
    pub inner: bool,
    /// `X + Y + Z` of the point, the factor removed by the projection.
    pub magnitude: f64,
}

/// Chromaticity and region of every point of a partition.
pub fn chromaticity_rows<T: Real>(points: &[RawTristimulus<T>], partition: &GamutPartition) -> Result<Vec<ChromaticityRow>> {
    let mut inner = vec![false; points.len()];
    for &i in &partition.inner_indices {
        inner[i] = true;
    }
    points
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let v = s.values();
            let xy = xy_of_values(v).map_err(|_| Error::UndefinedChromaticity { index: Some(i) })?;
            let magnitude: T = (0..3).flat_map(|r| (0..3).map(move |c| (r, c))).fold(T::zero(), |acc, (r, c)| acc + T::lit(SRGB_TO_XYZ[r][c]) * v[c]);
            Ok(ChromaticityRow { x: xy.x.to_f64_lossy(), y: xy.y.to_f64_lossy(), inner: inner[i], magnitude: magnitude.to_f64_lossy() })
        })
        .collect()
}

/// `x,y,region,magnitude` with region `inner` or `outer`.
pub fn write_chromaticity_csv(path: &Path, rows: &[ChromaticityRow]) -> Result<()> {
    let mut w = create_csv(path)?;
    w.write_record(["x", "y", "region", "magnitude"]).map_err(|e| csv_error(path, e))?;
    for r in rows {
        let region = if r.inner { "inner" } else { "outer" };
        w.write_record([r.x.to_string(), r.y.to_string(), region.to_string(), r.magnitude.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    finish_csv(path, w)
}

/// `dataset.json`: spectra files plus one stack CSV per illuminant column, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema: u64,
    pub illuminants: PathBuf,
    pub reflectances: PathBuf,
    pub stacks: Vec<PathBuf>,
}

pub const DATASET_MANIFEST: &str = "dataset.json";

/// Writes `dir/dataset.json`, `illuminants.csv`, `reflectances.csv` and `stack_XX.csv`.
/// Reflectance columns are named after the patch ids of the first stack.
pub fn save_dataset<T: Real>(dir: &Path, input: &CalibrationInput<T>) -> Result<PathBuf> {
    input.validate()?;
    let illum_names = (0..input.illuminants.len()).map(|u| format!("L{u:02}")).collect();
    let patch_names = match input.stacks.first() {
        Some(s) => s.patch_ids().to_vec(),
        None => (0..input.reflectances.len()).map(|j| format!("P{j:02}")).collect(),
    };
    write_spectral_csv(&dir.join("illuminants.csv"), &SpectralTable::from_curves(illum_names, &input.illuminants)?)?;
    write_spectral_csv(&dir.join("reflectances.csv"), &SpectralTable::from_curves(patch_names, &input.reflectances)?)?;
    let mut stacks = Vec::with_capacity(input.stacks.len());
    for (u, s) in input.stacks.iter().enumerate() {
        let file = PathBuf::from(format!("stack_{u:02}.csv"));
        write_stack_csv(&dir.join(&file), s)?;
        stacks.push(file);
    }
    let manifest = DatasetManifest {
        schema: SCHEMA_VERSION,
        illuminants: "illuminants.csv".into(),
        reflectances: "reflectances.csv".into(),
        stacks,
    };
    let path = dir.join(DATASET_MANIFEST);
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Loads a dataset directory (or its `dataset.json`). Stack codes are classified with
/// `thresholds`.
pub fn load_dataset<T: Real>(path: &Path, bit_depth: u32, thresholds: SaturationThresholds) -> Result<CalibrationInput<T>> {
    let manifest_path = if path.is_dir() { path.join(DATASET_MANIFEST) } else { path.to_path_buf() };
    let manifest: DatasetManifest = read_versioned(&manifest_path)?;
    let files = dataset_files(&manifest_path, &manifest);
    let missing: Vec<String> = files.iter().filter(|f| !f.is_file()).map(|f| f.display().to_string()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingEntry { missing });
    }
    let illuminants = read_spectral_csv::<T>(&files[0])?.curves(CurveKind::Illuminant)?;
    let reflectances = read_spectral_csv::<T>(&files[1])?.curves(CurveKind::Reflectance)?;
    let stacks = files[2..].iter().map(|f| read_stack_csv(f, bit_depth, thresholds)).collect::<Result<Vec<_>>>()?;
    let grid = *illuminants
        .first()
        .ok_or_else(|| parse_error(&files[0], 1, 2, "no illuminant columns"))?
        .grid();
    CalibrationInput::new(grid, illuminants, reflectances, stacks)
}

/// Every file a dataset manifest refers to: illuminants, reflectances, then stacks.
pub fn dataset_files(manifest_path: &Path, manifest: &DatasetManifest) -> Vec<PathBuf> {
    let mut files = vec![resolve(manifest_path, &manifest.illuminants), resolve(manifest_path, &manifest.reflectances)];
    files.extend(manifest.stacks.iter().map(|s| resolve(manifest_path, s)));
    files
}

/// Lowercase hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(FileDigest { path: path.to_path_buf(), sha256: sha256_file(path)? })
    }
}

/// Provenance record written next to every command's artifacts. Timestamps are the only
/// run-dependent fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub version: String,
    pub seed: u64,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
}

pub fn unix_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl RunManifest {
    /// Manifest for `command` with digests of `inputs` taken now.
    pub fn start<C: Serialize>(command: &str, config: &C, seed: u64, inputs: &[PathBuf]) -> Result<Self> {
        let mut digests = inputs.iter().map(|p| FileDigest::of(p)).collect::<Result<Vec<_>>>()?;
        digests.sort_by(|a, b| a.path.cmp(&b.path));
        digests.dedup();
        Ok(RunManifest {
            command: command.to_string(),
            config: serde_json::to_value(config).map_err(|e| Error::invariant("serializable_config", e.to_string()))?,
            inputs: digests,
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            started_unix_ms: unix_ms(),
            finished_unix_ms: 0,
        })
    }

    /// Records digests of `outputs` and the finish time.
    pub fn finish(&mut self, outputs: &[PathBuf]) -> Result<()> {
        self.outputs = outputs.iter().map(|p| FileDigest::of(p)).collect::<Result<Vec<_>>>()?;
        self.finished_unix_ms = unix_ms();
        Ok(())
    }

    /// Paths whose current contents no longer match the recorded digests.
    pub fn stale_inputs(&self) -> Result<Vec<PathBuf>> {
        let mut stale = Vec::new();
        for d in &self.inputs {
            if sha256_file(&d.path)? != d.sha256 {
                stale.push(d.path.clone());
            }
        }
        Ok(stale)
    }
}
