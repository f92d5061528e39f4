use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use tvbma::crossval::{
    calibrate_f_prepared, default_f_grid, run_loocv_prepared, CalibrationParts, ExperimentConfig,
    Method, PreparedEnsemble,
};
use tvbma::dataset::{dataset_files, load_dataset, write_dataset, EnsembleDataset};
use tvbma::decompose::decompose;
use tvbma::diagnostics::{independence_diagnostic, spectrum_envelope_check, Correlation};
use tvbma::presets::{preset, Preset, PresetName};
use tvbma::project::{sample_projection, ProjectionInputs, ProjectionVariant};
use tvbma::report::{emit_report, ProjectionReport, Report, ReportFormat, RunManifest};
use tvbma::rng::{derive_seed, tag};
use tvbma::synthetic::{generate_synthetic_ensemble, SyntheticEnsembleSpec};
use tvbma::weights::WeightVector;
use tvbma::{Error, ErrorKind};

#[derive(Parser, Debug)]
#[command(name = "tvbma", version, about = "Trend and variability weighting of climate model ensembles")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON experiment configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, global = true, value_enum)]
    variant: Option<VariantArg>,
    /// Error expansion factor.
    #[arg(long, global = true)]
    f: Option<f64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Start from a bundled experiment preset (its synthetic ensemble is used
    /// when no dataset is given).
    #[arg(long, global = true)]
    preset: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Trend,
    Trendvar,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Boot,
    Ar1,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split calibration output into trends and anomalies.
    Decompose(DataArgs),
    /// Trend, variability and combined weights for one set of observations.
    Weigh {
        #[command(flatten)]
        data: DataArgs,
        /// Model used as pseudo-observations; defaults to the dataset's
        /// observations.
        #[arg(long)]
        truth: Option<String>,
    },
    /// Weighted projection of the change.
    Project {
        #[command(flatten)]
        data: DataArgs,
        /// Model held out as pseudo-truth; defaults to the dataset's
        /// observations.
        #[arg(long)]
        truth: Option<String>,
    },
    /// Leave-one-out cross-validation at a fixed f.
    Loocv(DataArgs),
    /// Search an f grid for calibrated coverage.
    CalibrateF {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.9)]
        target: f64,
        /// Comma-separated increasing f values.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Independence and AR(1) spectral adequacy checks.
    Diagnose {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 1000)]
        realizations: usize,
        #[arg(long)]
        spearman: bool,
    },
    /// Write a synthetic dataset.
    Synth {
        /// JSON synthetic ensemble specification.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        coupling: Option<f64>,
    },
}

enum Failure {
    Core(Error),
    Calibration(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CliResult<T> = Result<T, Failure>;

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

fn read_json(path: &Path) -> CliResult<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| {
        Failure::Core(Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    })
}

fn load_preset(global: &Global) -> CliResult<Option<Preset>> {
    Ok(match &global.preset {
        Some(name) => Some(preset(name.parse::<PresetName>()?)),
        None => None,
    })
}

/// Defaults, then preset, then config file, then flags.
fn resolve_config(global: &Global, preset: Option<&Preset>) -> CliResult<ExperimentConfig> {
    let base = preset.map(|p| p.config.clone()).unwrap_or_default();
    let mut value = serde_json::to_value(&base).map_err(Error::from)?;
    if let Some(path) = &global.config {
        merge(&mut value, read_json(path)?);
    }
    let mut config: ExperimentConfig = serde_json::from_value(value).map_err(Error::from)?;
    if let Some(m) = global.method {
        config.method = match m {
            MethodArg::Trend => Method::Trend,
            MethodArg::Trendvar => Method::TrendVar,
        };
        if let (Some(p), None) = (preset, global.f) {
            config.f = p.f_for(config.method);
        }
    }
    if let Some(v) = global.variant {
        config.variant = match v {
            VariantArg::Boot => ProjectionVariant::Boot,
            VariantArg::Ar1 => ProjectionVariant::Ar1,
        };
    }
    if let Some(f) = global.f {
        config.f = f;
    }
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

/// Loads the dataset, or generates the preset's synthetic ensemble.
fn resolve_dataset(data: &DataArgs, preset: Option<&Preset>) -> CliResult<(EnsembleDataset, Vec<PathBuf>)> {
    if let Some(path) = &data.dataset {
        let ds = load_dataset(path)?;
        return Ok((ds, dataset_files(path)?));
    }
    match preset {
        Some(p) => Ok((generate_synthetic_ensemble(&p.synthetic)?.dataset, Vec::new())),
        None => Err(Error::InvalidInput("give --dataset or --preset".into()).into()),
    }
}

fn format(global: &Global) -> ReportFormat {
    match global.format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Csv => ReportFormat::Csv,
    }
}

fn write_out(dir: &Path, name: &str, contents: String) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(path)
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json values serialize") + "\n"
}

fn manifest(
    global: &Global,
    command: &str,
    config: &Value,
    seeds: Vec<u64>,
    inputs: &[PathBuf],
) -> CliResult<()> {
    let m = RunManifest::new(command, config, seeds, inputs)?;
    m.write(&global.out_dir)?;
    Ok(())
}

/// Observed calibration parts: a named model or the dataset's observations.
fn observed_parts(
    prepared: &PreparedEnsemble,
    dataset: &EnsembleDataset,
    config: &ExperimentConfig,
    truth: Option<&str>,
) -> CliResult<(String, Option<usize>, CalibrationParts)> {
    match truth {
        Some(id) => {
            let i = prepared
                .model_ids
                .iter()
                .position(|m| m == id)
                .ok_or_else(|| Error::InvalidInput(format!("no model `{id}` in dataset")))?;
            Ok((id.to_string(), Some(i), prepared.calibration[i].clone()))
        }
        None => {
            if dataset.observations.is_none() {
                return Err(Error::InvalidInput("dataset has no observations; pass --truth".into()).into());
            }
            let mut obs_config = config.clone();
            obs_config.observational = true;
            let with_obs = PreparedEnsemble::new(dataset, &obs_config)?;
            let obs = with_obs.observations.expect("observational prepare keeps observations");
            Ok(("observations".into(), None, obs.calibration))
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let global = &cli.global;
    let preset = load_preset(global)?;
    let fmt = format(global);
    let out = &global.out_dir;
    match &cli.command {
        Command::Decompose(data) => {
            let config = resolve_config(global, preset.as_ref())?;
            let (ds, inputs) = resolve_dataset(data, preset.as_ref())?;
            let periods = config.periods(&ds);
            let mut rows = Vec::new();
            let mut csv = String::from("model_id,time,value,trend,anomaly\n");
            for m in &ds.models {
                let cal = m.calibration.slice(&periods.calibration)?;
                let d = decompose(&cal, &config.smoother, config.mode)?;
                for (i, t) in cal.times().iter().enumerate() {
                    let _ = writeln!(csv, "{},{t},{},{},{}", m.id, cal.values()[i], d.trend[i], d.anomalies[i]);
                }
                rows.push(json!({"id": m.id, "times": cal.times(), "trend": d.trend, "anomalies": d.anomalies}));
            }
            let path = match fmt {
                ReportFormat::Json => write_out(
                    out,
                    "decomposition.json",
                    pretty(&json!({"version": tvbma::report::REPORT_VERSION, "mode": config.mode, "models": rows})),
                )?,
                ReportFormat::Csv => write_out(out, "decomposition.csv", csv)?,
            };
            manifest(global, "decompose", &json!(config), vec![], &inputs)?;
            println!("wrote {}", path.display());
        }
        Command::Weigh { data, truth } => {
            let config = resolve_config(global, preset.as_ref())?;
            println!("seed: {}", config.seed);
            let (ds, inputs) = resolve_dataset(data, preset.as_ref())?;
            let prepared = PreparedEnsemble::new(&ds, &config)?;
            let (name, _, observed) = observed_parts(&prepared, &ds, &config, truth.as_deref())?;
            let seed = derive_seed(config.seed, &[tag::OBSERVATION]);
            let lt = prepared.trend_log_weights(&observed, &config, config.f, seed)?;
            let lv = prepared.var_log_weights(&observed, &config, config.f, seed)?;
            let trend = WeightVector::from_log(&lt)?;
            let var = WeightVector::from_log(&lv)?;
            let combined = tvbma::combine::combine_weights(&trend, &var)?;
            let path = match fmt {
                ReportFormat::Json => write_out(
                    out,
                    "weights.json",
                    pretty(&json!({
                        "version": tvbma::report::REPORT_VERSION,
                        "observed": name,
                        "f": config.f,
                        "model_ids": prepared.model_ids,
                        "trend": trend,
                        "var": var,
                        "combined": combined,
                    })),
                )?,
                ReportFormat::Csv => {
                    let mut s = String::from("model_id,trend,var,combined\n");
                    for (i, id) in prepared.model_ids.iter().enumerate() {
                        let _ = writeln!(s, "{id},{},{},{}", trend[i], var[i], combined[i]);
                    }
                    write_out(out, "weights.csv", s)?
                }
            };
            manifest(global, "weigh", &json!(config), vec![config.seed], &inputs)?;
            println!("wrote {}", path.display());
        }
        Command::Project { data, truth } => {
            let config = resolve_config(global, preset.as_ref())?;
            println!("seed: {}", config.seed);
            let (ds, inputs) = resolve_dataset(data, preset.as_ref())?;
            let prepared = PreparedEnsemble::new(&ds, &config)?;
            let (_, held_out, observed) = observed_parts(&prepared, &ds, &config, truth.as_deref())?;
            let seed = derive_seed(config.seed, &[tag::OBSERVATION]);
            let mut log_w = prepared.method_log_weights(&observed, &config, config.f, seed)?;
            if let Some(i) = held_out {
                log_w[i] = f64::NEG_INFINITY;
            }
            let weights = WeightVector::from_log(&log_w)?;
            let members: Vec<usize> = (0..prepared.k()).filter(|i| Some(*i) != held_out).collect();
            let bias_scale = prepared.bias_scale(&members)?;
            let inputs_p = ProjectionInputs {
                models: prepared.futures.clone(),
                weights: weights.clone(),
                bias_scale,
                f: config.f,
                variant: config.variant,
                n_draws: config.proj_draws,
            };
            let result = sample_projection(&inputs_p, seed)?;
            let report = ProjectionReport {
                model_ids: prepared.model_ids.clone(),
                weights: weights.into_inner(),
                bias_scale,
                f: config.f,
                n_draws: config.proj_draws,
                summary: result.summary,
                per_model_draw_counts: result.per_model_draw_counts.clone(),
            };
            emit_report(Report::Projection { report: &report, result: &result }, fmt, out)?;
            manifest(global, "project", &json!(config), vec![config.seed], &inputs)?;
            let s = result.summary;
            println!(
                "change: mean {:.4}, median {:.4}, mode {:.4}, 90% interval [{:.4}, {:.4}]",
                s.mean, s.median, s.mode, s.ci90.0, s.ci90.1
            );
        }
        Command::Loocv(data) => {
            let config = resolve_config(global, preset.as_ref())?;
            println!("seed: {}", config.seed);
            let (ds, inputs) = resolve_dataset(data, preset.as_ref())?;
            let prepared = PreparedEnsemble::new(&ds, &config)?;
            let report = run_loocv_prepared(&prepared, &config, config.f)?;
            emit_report(Report::CrossVal(&report), fmt, out)?;
            manifest(global, "loocv", &json!(config), vec![config.seed], &inputs)?;
            println!(
                "coverage {:.3}, mciw {:.4}, mab {:.4} (f = {})",
                report.coverage, report.mciw, report.mab, report.f
            );
        }
        Command::CalibrateF { data, target, grid } => {
            let config = resolve_config(global, preset.as_ref())?;
            println!("seed: {}", config.seed);
            let (ds, inputs) = resolve_dataset(data, preset.as_ref())?;
            let prepared = PreparedEnsemble::new(&ds, &config)?;
            let grid = grid.clone().unwrap_or_else(default_f_grid);
            let cal = calibrate_f_prepared(&prepared, &config, *target, &grid)?;
            emit_report(Report::Calibration(&cal), fmt, out)?;
            manifest(global, "calibrate-f", &json!(config), vec![config.seed], &inputs)?;
            match (cal.f_star, &cal.failure) {
                (Some(f), _) => println!("f* = {f}"),
                (None, Some(msg)) => return Err(Failure::Calibration(msg.clone())),
                (None, None) => unreachable!("calibration without f* reports a failure"),
            }
        }
        Command::Diagnose {
            data,
            realizations,
            spearman,
        } => {
            let config = resolve_config(global, preset.as_ref())?;
            println!("seed: {}", config.seed);
            let (ds, inputs) = resolve_dataset(data, preset.as_ref())?;
            let prepared = PreparedEnsemble::new(&ds, &config)?;
            let mut rows = Vec::with_capacity(prepared.k());
            for (i, observed) in prepared.calibration.iter().enumerate() {
                let seed = derive_seed(config.seed, &[tag::TRUTH_ROUND, i as u64]);
                let lt = prepared.trend_log_weights(observed, &config, config.f, seed)?;
                rows.push(WeightVector::from_log(&lt)?.into_inner());
            }
            let method = if *spearman { Correlation::Spearman } else { Correlation::Pearson };
            let independence = independence_diagnostic(&rows, &prepared.var_summaries, method)?;
            let mut envelopes = Vec::with_capacity(prepared.k());
            let mut csv = String::from("model_id,frequency,observed,lower,upper\n");
            for (i, parts) in prepared.calibration.iter().enumerate() {
                let id = &prepared.model_ids[i];
                let seed = derive_seed(config.seed, &[tag::ENVELOPE, i as u64]);
                let e = spectrum_envelope_check(&parts.anomalies, *realizations, seed)
                    .map_err(|e| Error::Model { model: id.clone(), source: Box::new(e) })?;
                for j in 0..e.frequencies.len() {
                    let _ = writeln!(csv, "{id},{},{},{},{}", e.frequencies[j], e.observed[j], e.lower[j], e.upper[j]);
                }
                envelopes.push(json!({"model_id": id, "fraction_inside": e.fraction_inside, "params": e.params}));
            }
            let path = write_out(
                out,
                "diagnostics.json",
                pretty(&json!({
                    "version": tvbma::report::REPORT_VERSION,
                    "model_ids": prepared.model_ids,
                    "trend_weights": rows,
                    "independence": independence,
                    "spectra": envelopes,
                })),
            )?;
            write_out(out, "spectrum_envelopes.csv", csv)?;
            manifest(global, "diagnose", &json!(config), vec![config.seed], &inputs)?;
            println!(
                "independence flag: {}; wrote {}",
                independence.flagged,
                path.display()
            );
        }
        Command::Synth { spec, k, coupling } => {
            let mut s = preset.as_ref().map(|p| p.synthetic.clone()).unwrap_or_default();
            if let Some(path) = spec {
                let mut value = serde_json::to_value(&s).map_err(Error::from)?;
                merge(&mut value, read_json(path)?);
                s = serde_json::from_value::<SyntheticEnsembleSpec>(value).map_err(Error::from)?;
            }
            if let Some(k) = k {
                s.k = *k;
            }
            if let Some(c) = coupling {
                s.coupling = *c;
            }
            s.seed = global.seed.unwrap_or(s.seed);
            println!("seed: {}", s.seed);
            let ens = generate_synthetic_ensemble(&s)?;
            let path = write_dataset(out, &ens.dataset)?;
            write_out(out, "truth.json", pretty(&json!({"spec": s, "truth": ens.truth})))?;
            manifest(global, "synth", &json!(s), vec![s.seed], &[])?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Input => 2,
                ErrorKind::Numerical => 3,
            })
        }
        Err(Failure::Calibration(msg)) => {
            eprintln!("calibration failed: {msg}");
            ExitCode::from(4)
        }
    }
}
