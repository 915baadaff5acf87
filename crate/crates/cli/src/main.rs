use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use qcorr::ml::{
    generate_dataset, generate_sampled_dataset, reference_overlap, select_top_k, shap_for_rows, train_mlp, Hyper,
    Target,
};
use qcorr::multicopy::{calibrate_wiring, default_validation_states, CalibrationOptions, MulticopyError};
use qcorr::resources::resource_report;
use qcorr::ConfigName;
use qcorr_cli::*;

const DESK_ROWS: usize = 50_000;
const FULL_ROWS: usize = 500_000;
const DESK_TRIALS: usize = 100;
const FULL_TRIALS: usize = 100_000;

#[derive(Parser)]
#[command(name = "qcorr", version, about = "Entanglement and Bell nonlocality from multicopy singlet projections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search qubit wirings for the thirteen projection configurations.
    Calibrate {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        max_copies: usize,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
    },
    /// Estimate N and B along a state family.
    Sweep(SweepArgs),
    /// Generate random states with projection features and oracle labels.
    Dataset {
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long, default_value_t = 0)]
        shots: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Train the ReLU regressor for one target.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "n")]
        target: Target,
        /// Comma-separated feature names (default: all thirteen).
        #[arg(long, value_delimiter = ',')]
        features: Vec<ConfigName>,
        /// Take the top-5 features from a SHAP report instead.
        #[arg(long, conflicts_with = "features")]
        features_from: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-5)]
        lr: f64,
        #[arg(long, default_value_t = 1e-5)]
        l2: f64,
        #[arg(long, default_value_t = 2000)]
        max_iter: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact Shapley attributions of a trained model on test rows.
    Shap {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Test-split metrics, linear baseline and family sweep errors.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        wiring: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spread of the estimates as a function of shot count.
    ShotsStudy {
        #[arg(long, default_value = "werner")]
        family: Family,
        #[arg(long, default_value = "mce")]
        method: Method,
        #[arg(long, default_value_t = 0.8)]
        p: f64,
        /// Comma-separated shot counts.
        #[arg(long, value_delimiter = ',', default_value = "1000,4000,16000")]
        shots: Vec<u64>,
        #[arg(long, default_value_t = DESK_TRIALS)]
        trials: usize,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        models: Models,
    },
    /// Settings and gate accounting.
    Resources {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long)]
    wiring: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Full-size runs (5×10⁵ dataset rows, 10⁵ trials).
    #[arg(long)]
    full_scale: bool,
}

#[derive(Args)]
struct Models {
    #[arg(long)]
    model_n: Option<PathBuf>,
    #[arg(long)]
    model_b: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value = "werner")]
    family: Family,
    #[arg(long, default_value = "mce")]
    method: Method,
    #[arg(long, default_value_t = 0.0)]
    p_start: f64,
    #[arg(long, default_value_t = 1.0)]
    p_stop: f64,
    #[arg(long, default_value_t = 21)]
    p_points: usize,
    /// Shots per setting; 0 evaluates exact probabilities.
    #[arg(long, default_value_t = 0)]
    shots: u64,
    #[arg(long)]
    trials: Option<usize>,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    models: Models,
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn emit_csv<T: Serialize>(out: Option<&Path>, rows: &[T]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    emit(out, &buf)
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    emit(out, text.as_bytes())
}

fn estimator(method: Method, common: &Common, models: &Models) -> Result<Estimator, CliError> {
    let mut est = Estimator::new(method, load_noise(common.noise.as_deref())?);
    if method.needs_wiring() {
        est.wiring = Some(load_wiring(common.wiring.as_deref())?);
    }
    est.model_n = models.model_n.as_deref().map(load_model).transpose()?;
    est.model_b = models.model_b.as_deref().map(load_model).transpose()?;
    Ok(est)
}

#[derive(Serialize)]
struct RankedFeature {
    feature: String,
    mean_abs_phi: f64,
}

#[derive(Serialize)]
struct ShapSummary {
    target: Target,
    samples: usize,
    background: usize,
    base_value: f64,
    efficiency_residual: f64,
    ranking: Vec<RankedFeature>,
    top5: Vec<String>,
    reference_overlap: usize,
}

fn top5_from(path: &Path) -> Result<Vec<ConfigName>, CliError> {
    let value: serde_json::Value =
        serde_json::from_str(&read_file(path, "SHAP report")?).map_err(|e| CliError::Usage(e.to_string()))?;
    value["top5"]
        .as_array()
        .ok_or_else(|| CliError::Usage("SHAP report has no top5 list".into()))?
        .iter()
        .map(|v| {
            v.as_str()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| CliError::Usage(format!("bad feature {v}")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Calibrate { out, max_copies, tolerance } => {
            let options = CalibrationOptions { max_copies, tolerance };
            let wiring = calibrate_wiring(&default_validation_states(), &options).map_err(|e| match e {
                MulticopyError::NoConsistentWiring { .. } => CliError::Numerical(e.to_string()),
                other => CliError::Usage(other.to_string()),
            })?;
            eprintln!("wiring residual {:e}", wiring.residual);
            let mut text = wiring.to_json();
            text.push('\n');
            emit(out.as_deref(), text.as_bytes())
        }
        Command::Sweep(args) => {
            let est = estimator(args.method, &args.common, &args.models)?;
            let default_trials = if args.common.full_scale { FULL_TRIALS } else { DESK_TRIALS };
            let spec = SweepSpec {
                family: args.family,
                p_start: args.p_start,
                p_stop: args.p_stop,
                p_points: args.p_points,
                shots: args.shots,
                trials: args.trials.unwrap_or(default_trials),
                seed: args.common.seed,
            };
            emit_csv(args.common.out.as_deref(), &run_sweep(&spec, &est)?)
        }
        Command::Dataset { rows, shots, common } => {
            let wiring = load_wiring(common.wiring.as_deref())?;
            let n = rows.unwrap_or(if common.full_scale { FULL_ROWS } else { DESK_ROWS });
            let data = if shots == 0 {
                generate_dataset(n, common.seed, &wiring)
            } else {
                generate_sampled_dataset(n, common.seed, &wiring, shots, &load_noise(common.noise.as_deref())?)?
            };
            let mut buf = Vec::new();
            data.write_csv(&mut buf)?;
            emit(common.out.as_deref(), &buf)
        }
        Command::Train { data, target, features, features_from, lr, l2, max_iter, seed, out } => {
            let data = load_dataset(&data)?;
            let features = match (features_from, features.is_empty()) {
                (Some(path), _) => top5_from(&path)?,
                (None, true) => ConfigName::ALL.to_vec(),
                (None, false) => features,
            };
            let hyper = Hyper { lr, l2, max_iter, seed, ..Hyper::default() };
            let model = train_mlp(&data, target, &features, &hyper)?;
            let log = &model.training_log;
            eprintln!("loss {:e} -> {:e} over {} epochs", log[0], log[log.len() - 1], log.len() - 1);
            let mut text = model.to_json();
            text.push('\n');
            emit(out.as_deref(), text.as_bytes())
        }
        Command::Shap { model, data, samples, out } => {
            let model = load_model(&model)?;
            let data = load_dataset(&data)?;
            let test = data.test();
            let background = data.background();
            if test.is_empty() || background.is_empty() {
                return Err(CliError::Usage("dataset needs both train and test rows".into()));
            }
            let explained = &test[..samples.min(test.len())];
            let report = shap_for_rows(&model, explained, &background)?;
            let top5 = select_top_k(&report, 5);
            let summary = ShapSummary {
                target: model.target,
                samples: explained.len(),
                background: background.len(),
                base_value: report.base_value,
                efficiency_residual: report.efficiency_residual(),
                ranking: report
                    .ranking()
                    .into_iter()
                    .map(|(f, v)| RankedFeature { feature: f.to_string(), mean_abs_phi: v })
                    .collect(),
                reference_overlap: reference_overlap(&top5),
                top5: top5.iter().map(|f| f.to_string()).collect(),
            };
            emit_json(out.as_deref(), &summary)
        }
        Command::Eval { model, data, wiring, out } => {
            let model = load_model(&model)?;
            let data = load_dataset(&data)?;
            let wiring = wiring.as_deref().map(|p| load_wiring(Some(p))).transpose()?;
            emit_json(out.as_deref(), &evaluate(&model, &data, wiring.as_ref())?)
        }
        Command::ShotsStudy { family, method, p, shots, trials, common, models } => {
            let est = estimator(method, &common, &models)?;
            let trials = if common.full_scale { trials.max(FULL_TRIALS) } else { trials };
            emit_csv(common.out.as_deref(), &shots_study(family, p, &shots, trials, common.seed, &est)?)
        }
        Command::Resources { out } => emit_json(out.as_deref(), &resource_report()),
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("QCORR_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .map_err(|_| CliError::Usage(format!("QCORR_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
