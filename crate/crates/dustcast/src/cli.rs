//! Thin command-line front end over the library, one subcommand per
//! pipeline stage: `synth`, `check`, `train`, `eval`, `predict`, `plot`.
//!
//! Every command takes its randomness from an explicit `--seed` and prints a
//! single machine-readable JSON summary line on success. Exit codes: 0
//! success, 2 bad arguments, 3 data errors, 4 training divergence.

use std::ffi::OsString;
use std::path::PathBuf;

use chrono::{NaiveDate, NaiveDateTime};
use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::eval::{emit_plot, evaluate, predict_series, render_table, EvalReport, SeriesExport};
use crate::features::{make_windows, split_dataset, Scaler};
use crate::ingest::{
    align_hourly, hour_range, impute_missing, parse_climate_csv, parse_pollutant_csv,
    shift_timestamps, write_climate_csv, write_pollutant_csv, ObservationTable,
};
use crate::net::LstmModel;
use crate::synth::{generate, inject_gaps, SynthConfig};
use crate::train::{train_all, ModelRegistry, OptimizerKind, TrainConfig};

#[derive(Debug, Parser)]
#[command(
    name = "dustcast",
    version,
    about = "Hourly PM10/PM2.5 forecasting over a multi-station sensor grid"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic hourly dataset as pollutant + climate CSVs.
    Synth(SynthArgs),
    /// Parse, align and impute a dataset, reporting its health.
    Check(CheckArgs),
    /// Train one model per target station and write a registry.
    Train(TrainArgs),
    /// Evaluate registry models on their test split and print the MSE table.
    Eval(EvalArgs),
    /// Roll one day of one-step-ahead predictions for one station.
    Predict(PredictArgs),
    /// Render a predicted-vs-truth series CSV as a two-panel SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Hours of data to generate.
    #[arg(long, default_value_t = 2000)]
    pub hours: usize,
    /// Generator seed; identical seeds give byte-identical files.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Number of pollutant stations (the full pipeline expects 39).
    #[arg(long, default_value_t = 39)]
    pub stations: usize,
    /// First hour of the series.
    #[arg(long, default_value = "2017-01-01T00:00", value_parser = parse_hour_arg)]
    pub start: NaiveDateTime,
    /// Noise level multiplier; 0 produces exact processes.
    #[arg(long, default_value_t = 1.0)]
    pub noise_std: f64,
    /// Ozone response to lagged sunlight.
    #[arg(long, default_value_t = 0.02)]
    pub o3_coupling: f64,
    /// PM build-up under calm wind.
    #[arg(long, default_value_t = 2.0)]
    pub pm_wind_coupling: f64,
    /// Fraction of value cells to blank (exercises imputation), in [0, 0.5).
    #[arg(long, default_value_t = 0.0)]
    pub gap_fraction: f64,
    /// Directory for pollutants.csv and climate.csv.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Pollutant CSV path.
    #[arg(long)]
    pub pollutants: PathBuf,
    /// Climate CSV path.
    #[arg(long)]
    pub climate: PathBuf,
    /// Hours to add to source timestamps to reach UTC (for local-time data).
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub utc_offset: i64,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Target stations, e.g. `1,6,20` or `0-24`.
    #[arg(long, default_value = "0-24", value_parser = parse_station_list)]
    pub stations: StationList,
    /// Flat key-value config file; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for checkpoints, scalers and registry.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Parallel training jobs.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// `adam` or `sgd`.
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Epochs without validation improvement before stopping; 0 disables.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Input window length in hours.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long)]
    pub val_frac: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Registry manifest written by `train`.
    #[arg(long)]
    pub registry: PathBuf,
    /// Config file used at training time (keeps window/split consistent).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long)]
    pub val_frac: Option<f64>,
    /// Also write the table's CSV rendering here.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Registry manifest written by `train`.
    #[arg(long)]
    pub registry: PathBuf,
    /// Station to predict.
    #[arg(long)]
    pub station: usize,
    /// Day to predict, e.g. `2017-03-17`.
    #[arg(long, value_parser = parse_day_arg)]
    pub day: NaiveDate,
    /// Input window length in hours.
    #[arg(long, default_value_t = 48)]
    pub window: usize,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Series CSV produced by `predict`.
    #[arg(long)]
    pub series: PathBuf,
    /// Output SVG path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct StationList(pub Vec<usize>);

fn parse_station_list(s: &str) -> std::result::Result<StationList, String> {
    let mut stations = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        if let Some((lo, hi)) = part.split_once('-') {
            let lo: usize = lo.trim().parse().map_err(|_| format!("bad station `{lo}`"))?;
            let hi: usize = hi.trim().parse().map_err(|_| format!("bad station `{hi}`"))?;
            if hi < lo {
                return Err(format!("inverted range `{part}`"));
            }
            stations.extend(lo..=hi);
        } else {
            stations.push(part.parse().map_err(|_| format!("bad station `{part}`"))?);
        }
    }
    if stations.is_empty() {
        return Err("no stations given".into());
    }
    Ok(StationList(stations))
}

fn parse_hour_arg(s: &str) -> std::result::Result<NaiveDateTime, String> {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M")
        .map_err(|_| format!("`{s}` is not a YYYY-MM-DDTHH:MM timestamp"))
}

fn parse_day_arg(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| format!("`{s}` is not a YYYY-MM-DD date"))
}

/// Parse `argv` and run the selected command, returning the process exit
/// code. Errors print one categorized line to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(err) => {
            eprintln!("error[{}]: {err}", err.category());
            err.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<String> {
    match command {
        Command::Synth(args) => run_synth(args),
        Command::Check(args) => run_check(args),
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::Predict(args) => run_predict(args),
        Command::Plot(args) => run_plot(args),
    }
}

fn load_table(data: &DataArgs) -> Result<ObservationTable> {
    let mut pollutants = parse_pollutant_csv(&data.pollutants)?;
    let mut climate = parse_climate_csv(&data.climate)?;
    if data.utc_offset != 0 {
        shift_timestamps(&mut pollutants, &mut climate, data.utc_offset);
    }
    let (start, end) = hour_range(&pollutants, &climate).ok_or(Error::NoDataInRange)?;
    let aligned = align_hourly(&pollutants, &climate, start, end)?;
    impute_missing(&aligned)
}

fn run_synth(args: SynthArgs) -> Result<String> {
    let config = SynthConfig {
        n_hours: args.hours,
        seed: args.seed,
        n_stations: args.stations,
        start: args.start,
        noise_std: args.noise_std,
        o3_sunlight_coupling: args.o3_coupling,
        pm_wind_coupling: args.pm_wind_coupling,
        ..SynthConfig::default()
    };
    let (mut pollutants, mut climate) = generate(&config)?;
    let blanked = inject_gaps(&mut pollutants, &mut climate, args.gap_fraction, args.seed)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let pollutants_path = args.out_dir.join("pollutants.csv");
    let climate_path = args.out_dir.join("climate.csv");
    write_pollutant_csv(&pollutants_path, &pollutants)?;
    write_climate_csv(&climate_path, &climate)?;
    Ok(serde_json::json!({
        "command": "synth",
        "hours": args.hours,
        "stations": args.stations,
        "seed": args.seed,
        "blanked_cells": blanked,
        "pollutants": pollutants_path,
        "climate": climate_path,
    })
    .to_string())
}

fn run_check(args: CheckArgs) -> Result<String> {
    let mut pollutants = parse_pollutant_csv(&args.data.pollutants)?;
    let mut climate = parse_climate_csv(&args.data.climate)?;
    if args.data.utc_offset != 0 {
        shift_timestamps(&mut pollutants, &mut climate, args.data.utc_offset);
    }
    let (start, end) = hour_range(&pollutants, &climate).ok_or(Error::NoDataInRange)?;
    let aligned = align_hourly(&pollutants, &climate, start, end)?;
    let missing = aligned.missing_cells();
    let table = impute_missing(&aligned)?;
    Ok(serde_json::json!({
        "command": "check",
        "rows": table.n_hours(),
        "columns": crate::FEATURE_DIM,
        "start": start.format("%Y-%m-%dT%H:%M").to_string(),
        "end": end.format("%Y-%m-%dT%H:%M").to_string(),
        "missing_cells": missing,
        "imputed_cells": table.imputed_cells(),
    })
    .to_string())
}

fn build_config(
    config_path: Option<&PathBuf>,
    apply: impl FnOnce(&mut TrainConfig),
) -> Result<TrainConfig> {
    let mut config = match config_path {
        Some(path) => TrainConfig::from_file(path)?,
        None => TrainConfig::default(),
    };
    apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn run_train(args: TrainArgs) -> Result<String> {
    let config = build_config(args.config.as_ref(), |cfg| {
        if let Some(v) = args.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = args.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = args.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = args.optimizer {
            cfg.optimizer = v;
        }
        if let Some(v) = args.seed {
            cfg.seed = v;
        }
        if let Some(v) = args.patience {
            cfg.early_stop_patience = v;
        }
        if let Some(v) = args.window {
            cfg.window = v;
        }
        if let Some(v) = args.train_frac {
            cfg.train_frac = v;
        }
        if let Some(v) = args.val_frac {
            cfg.val_frac = v;
        }
    })?;
    let table = load_table(&args.data)?;
    let mut registry = train_all(&table, &args.stations.0, &config, &args.out_dir, args.jobs)?;
    if registry.entries.is_empty() {
        // Nothing trained: surface the first failure with its own category.
        if let Some(station) = registry.failures.keys().next().copied() {
            return Err(registry.failures.remove(&station).expect("present"));
        }
        return Err(Error::NoReports);
    }
    let manifest = args.out_dir.join("registry.jsonl");
    registry.save_manifest(&manifest)?;
    for (station, report) in registry.entries.values().map(|e| (e.station_id, &e.report)) {
        eprintln!(
            "station {station}: best val mse {:.6e} at epoch {} ({} epochs, {:.1}s)",
            report.best_val_mse, report.best_epoch, report.epochs_run, report.wall_secs
        );
    }
    for (station, err) in &registry.failures {
        eprintln!("station {station}: FAILED: {err}");
    }
    Ok(serde_json::json!({
        "command": "train",
        "stations_trained": registry.entries.len(),
        "stations_failed": registry.failures.len(),
        "registry": manifest,
        "seed": config.seed,
    })
    .to_string())
}

/// Rebuild a station's splits with its stored scaler and evaluate the test
/// partition.
fn eval_station(
    table: &ObservationTable,
    registry_dir: &std::path::Path,
    record: &crate::train::ManifestRecord,
    config: &TrainConfig,
) -> Result<EvalReport> {
    let model = LstmModel::load(registry_dir.join(&record.checkpoint))?;
    let scaler = Scaler::load(registry_dir.join(&record.scaler))?;
    let features = scaler.transform(table);
    let ds = make_windows(features, table, record.station_id, config.window)?;
    let splits = split_dataset(&ds, config.train_frac, config.val_frac)?;
    evaluate(&model, &scaler, &splits.test)
}

fn run_eval(args: EvalArgs) -> Result<String> {
    let config = build_config(args.config.as_ref(), |cfg| {
        if let Some(v) = args.window {
            cfg.window = v;
        }
        if let Some(v) = args.train_frac {
            cfg.train_frac = v;
        }
        if let Some(v) = args.val_frac {
            cfg.val_frac = v;
        }
    })?;
    let records = ModelRegistry::load_manifest(&args.registry)?;
    if records.is_empty() {
        return Err(Error::NoReports);
    }
    let registry_dir = args
        .registry
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."));
    let table = load_table(&args.data)?;
    let mut reports = Vec::with_capacity(records.len());
    for record in &records {
        reports.push(eval_station(&table, &registry_dir, record, &config)?);
    }
    let rendering = render_table(&reports)?;
    print!("{}", rendering.text);
    if let Some(path) = &args.out_csv {
        std::fs::write(path, &rendering.csv).map_err(|e| Error::io(path, e))?;
    }
    Ok(serde_json::json!({
        "command": "eval",
        "stations": reports.len(),
        "mean_mse": reports.iter().map(|r| r.test_mse).sum::<f64>() / reports.len() as f64,
        "table_csv": args.out_csv,
    })
    .to_string())
}

fn run_predict(args: PredictArgs) -> Result<String> {
    let records = ModelRegistry::load_manifest(&args.registry)?;
    let record = records
        .iter()
        .find(|r| r.station_id == args.station)
        .ok_or(Error::StationNotInRegistry {
            station: args.station,
        })?;
    let registry_dir = args
        .registry
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."));
    let model = LstmModel::load(registry_dir.join(&record.checkpoint))?;
    let scaler = Scaler::load(registry_dir.join(&record.scaler))?;
    let table = load_table(&args.data)?;
    let series = predict_series(&model, &scaler, &table, args.station, args.day, args.window)?;
    series.write_csv(&args.out)?;
    Ok(serde_json::json!({
        "command": "predict",
        "station": args.station,
        "day": args.day.to_string(),
        "rows": series.rows.len(),
        "out": args.out,
    })
    .to_string())
}

fn run_plot(args: PlotArgs) -> Result<String> {
    let series = SeriesExport::read_csv(&args.series)?;
    emit_plot(&series, &args.out)?;
    Ok(serde_json::json!({
        "command": "plot",
        "rows": series.rows.len(),
        "out": args.out,
    })
    .to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn parser_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_lists_every_flag() {
        let mut root = Cli::command();
        for sub in root.get_subcommands_mut() {
            let help = sub.render_long_help().to_string();
            let args: Vec<String> = sub
                .get_arguments()
                .filter(|a| !a.is_hide_set())
                .filter_map(|a| a.get_long().map(|l| format!("--{l}")))
                .collect();
            for flag in args {
                assert!(
                    help.contains(&flag),
                    "help for `{}` is missing `{flag}`",
                    sub.get_name()
                );
            }
        }
    }

    #[test]
    fn station_list_parsing() {
        assert_eq!(parse_station_list("1,6,20").unwrap().0, vec![1, 6, 20]);
        assert_eq!(parse_station_list("0-3").unwrap().0, vec![0, 1, 2, 3]);
        assert_eq!(
            parse_station_list("0-2,9").unwrap().0,
            vec![0, 1, 2, 9]
        );
        assert!(parse_station_list("").is_err());
        assert!(parse_station_list("3-1").is_err());
        assert!(parse_station_list("x").is_err());
    }

    #[test]
    fn unknown_flags_are_rejected() {
        let code = run(["dustcast", "synth", "--no-such-flag"]);
        assert_eq!(code, 2);
        let code = run(["dustcast", "no-such-command"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(["dustcast", "--help"]), 0);
        assert_eq!(run(["dustcast", "train", "--help"]), 0);
    }

    #[test]
    fn missing_input_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let code = run([
            "dustcast",
            "check",
            "--pollutants",
            dir.path().join("absent.csv").to_str().unwrap(),
            "--climate",
            dir.path().join("absent2.csv").to_str().unwrap(),
        ]);
        assert_eq!(code, 3);
    }
}
