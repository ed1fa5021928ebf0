use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (unknown subcommand or flag, bad flag value)
  3  file could not be read or written
  4  malformed input file (message carries line and column)
  5  unsupported schema version
  6  manifest refers to missing files or entries
  7  input violates a documented invariant or precondition
  8  numerical failure (rank deficiency, non-convergence, too few inner-gamut samples)

On failure a JSON object {kind, rule?, stage?, message} is printed to stderr and, when
--out is usable, written to <out>/error.json.";

/// Camera spectral model: simulate I = g(h(S)) and estimate omega, g and h from calibration data.
#[derive(Debug, Parser)]
#[command(name = "camspec", version, after_help = EXIT_CODES)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Seed for every random choice; overrides the config's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Pipeline config JSON (defaults apply to missing fields).
    #[arg(long, global = true, env = "CAMSPEC_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory; created if needed.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GamutKind {
    Identity,
    /// Chroma expansion beyond a knee; identity on near-neutral colors.
    Knee,
    /// Chroma-proportional saturation boost everywhere off the neutral axis.
    Boost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Constrained,
    Pinv,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic truth camera, sensitivity database and calibration/validation datasets.
    Synth {
        #[arg(long, default_value_t = 8)]
        illuminants: usize,
        #[arg(long, default_value_t = 24)]
        patches: usize,
        /// Held-out patches rendered under the same illuminants.
        #[arg(long, default_value_t = 24)]
        validation_patches: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1")]
        exposures: Vec<f64>,
        #[arg(long, value_enum, default_value_t = GamutKind::Knee)]
        gamut: GamutKind,
        /// Strength of the nonlinear gamut map.
        #[arg(long, default_value_t = 0.3)]
        beta: f64,
        #[arg(long, default_value_t = 24)]
        database_entries: usize,
        /// Response gamma of the truth camera.
        #[arg(long, default_value_t = 2.2)]
        gamma: f64,
    },
    /// Render a scene file through a camera model into a stack CSV.
    Simulate {
        #[arg(long)]
        camera: PathBuf,
        /// Scene JSON: {"schema":1,"illuminant":<csv>,"reflectances":<csv>,"exposures":[...]}.
        #[arg(long)]
        scene: PathBuf,
    },
    /// Recover the response curve from exposure stacks.
    FitResponse {
        /// Dataset directory; all of its stacks are pooled.
        #[arg(long, conflicts_with = "stack", required_unless_present = "stack")]
        dataset: Option<PathBuf>,
        /// Individual stack CSVs.
        #[arg(long)]
        stack: Vec<PathBuf>,
    },
    /// Estimate spectral sensitivity from a dataset linearized by a response curve.
    FitSensitivity {
        #[arg(long)]
        dataset: PathBuf,
        /// Response JSON from fit-response.
        #[arg(long)]
        response: PathBuf,
        /// Sensitivity database manifest (needed by the constrained estimator).
        #[arg(long)]
        database: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Estimator::Constrained)]
        estimator: Estimator,
    },
    /// Fit the gamut map of a camera whose sensitivity and response are known.
    FitGamut {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        camera: PathBuf,
    },
    /// Run two-stage estimation and write the estimated camera.
    Pipeline {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        database: PathBuf,
    },
    /// Compare a camera's predictions with measured codes.
    Evaluate {
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Assert that the dataset was not used for estimation.
        #[arg(long)]
        disjoint: bool,
    },
    /// Write chromaticities and the inner/outer split of a dataset's raw tristimuli.
    ExportChromaticity {
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Simulate { .. } => "simulate",
            Command::FitResponse { .. } => "fit-response",
            Command::FitSensitivity { .. } => "fit-sensitivity",
            Command::FitGamut { .. } => "fit-gamut",
            Command::Pipeline { .. } => "pipeline",
            Command::Evaluate { .. } => "evaluate",
            Command::ExportChromaticity { .. } => "export-chromaticity",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let report = serde_json::json!({ "kind": "usage", "message": e.to_string().trim() });
            eprintln!("{report}");
            return ExitCode::from(2);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let report = err.report();
            let text = serde_json::to_string(&report).expect("error report serializes");
            eprintln!("{text}");
            if std::fs::create_dir_all(&cli.common.out).is_ok() {
                let _ = std::fs::write(cli.common.out.join("error.json"), format!("{text}\n"));
            }
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &camspec::Error) -> u8 {
    match err.kind() {
        "io" => 3,
        "parse" => 4,
        "schema_version" => 5,
        "missing_entry" => 6,
        "invariant" | "precondition" | "invalid_grid" | "grid_mismatch" | "saturated_input" | "undefined_chromaticity" => 7,
        _ => 8,
    }
}
