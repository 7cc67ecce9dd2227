//! End-to-end runs of the `dustcast` binary: synth -> check -> train ->
//! eval -> predict -> plot, exit-code contracts, and CLI-level
//! reproducibility.

mod common;

use std::path::Path;
use std::process::{Command, Output};

fn dustcast_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dustcast"))
}

fn run_ok(args: &[&str]) -> serde_json::Value {
    let output = dustcast_bin().args(args).output().expect("spawn dustcast");
    summary_of(&output, args)
}

fn summary_of(output: &Output, args: &[&str]) -> serde_json::Value {
    let stdout = String::from_utf8_lossy(&output.stdout);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        output.status.success(),
        "dustcast {args:?} failed\nstdout: {stdout}\nstderr: {stderr}"
    );
    let last = stdout.lines().last().expect("summary line");
    serde_json::from_str(last).expect("machine-readable summary")
}

fn run_code(args: &[&str]) -> i32 {
    dustcast_bin()
        .args(args)
        .output()
        .expect("spawn dustcast")
        .status
        .code()
        .expect("exit code")
}

fn s(path: &Path) -> String {
    path.to_str().unwrap().to_string()
}

#[test]
fn full_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");

    let summary = run_ok(&[
        "synth",
        "--hours",
        "160",
        "--seed",
        "3",
        "--gap-fraction",
        "0.05",
        "--out-dir",
        &s(&data),
    ]);
    assert_eq!(summary["command"], "synth");
    assert_eq!(summary["hours"], 160);
    assert!(summary["blanked_cells"].as_u64().unwrap() > 0);
    let pollutants = data.join("pollutants.csv");
    let climate = data.join("climate.csv");
    assert!(pollutants.exists() && climate.exists());

    let summary = run_ok(&[
        "check",
        "--pollutants",
        &s(&pollutants),
        "--climate",
        &s(&climate),
    ]);
    assert_eq!(summary["rows"], 160);
    assert_eq!(summary["columns"], 243);
    assert_eq!(summary["missing_cells"], summary["imputed_cells"]);
    assert!(summary["imputed_cells"].as_u64().unwrap() > 0);

    let summary = run_ok(&[
        "train",
        "--pollutants",
        &s(&pollutants),
        "--climate",
        &s(&climate),
        "--stations",
        "1,6",
        "--epochs",
        "2",
        "--batch-size",
        "16",
        "--seed",
        "4",
        "--out-dir",
        &s(&run),
    ]);
    assert_eq!(summary["stations_trained"], 2);
    assert_eq!(summary["stations_failed"], 0);
    let registry = run.join("registry.jsonl");
    assert!(registry.exists());
    assert!(run.join("station_01.ckpt").exists());
    assert!(run.join("station_06.scaler").exists());

    let table_csv = dir.path().join("table.csv");
    let summary = run_ok(&[
        "eval",
        "--registry",
        &s(&registry),
        "--pollutants",
        &s(&pollutants),
        "--climate",
        &s(&climate),
        "--out-csv",
        &s(&table_csv),
    ]);
    assert_eq!(summary["stations"], 2);
    let table_text = std::fs::read_to_string(&table_csv).unwrap();
    assert!(table_text.starts_with("station,mse_1e5\n"));
    assert_eq!(table_text.lines().count(), 3);

    // Hours start 2017-01-01T00:00; day 4 of the run has 72h of history.
    let series_csv = dir.path().join("series.csv");
    let summary = run_ok(&[
        "predict",
        "--registry",
        &s(&registry),
        "--pollutants",
        &s(&pollutants),
        "--climate",
        &s(&climate),
        "--station",
        "6",
        "--day",
        "2017-01-04",
        "--out",
        &s(&series_csv),
    ]);
    assert_eq!(summary["rows"], 24);
    let series_text = std::fs::read_to_string(&series_csv).unwrap();
    assert_eq!(series_text.lines().count(), 25);

    let plot_svg = dir.path().join("plot.svg");
    let summary = run_ok(&[
        "plot",
        "--series",
        &s(&series_csv),
        "--out",
        &s(&plot_svg),
    ]);
    assert_eq!(summary["rows"], 24);
    let svg = std::fs::read_to_string(&plot_svg).unwrap();
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("<polyline").count(), 4);
}

#[test]
fn cli_runs_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (data_a, data_b) = (dir.path().join("a"), dir.path().join("b"));
    for data in [&data_a, &data_b] {
        run_ok(&[
            "synth",
            "--hours",
            "100",
            "--seed",
            "11",
            "--out-dir",
            &s(data),
        ]);
    }
    for name in ["pollutants.csv", "climate.csv"] {
        assert_eq!(
            std::fs::read(data_a.join(name)).unwrap(),
            std::fs::read(data_b.join(name)).unwrap(),
            "synth output differs for {name}"
        );
    }

    let (run_a, run_b) = (dir.path().join("run_a"), dir.path().join("run_b"));
    for run in [&run_a, &run_b] {
        run_ok(&[
            "train",
            "--pollutants",
            &s(&data_a.join("pollutants.csv")),
            "--climate",
            &s(&data_a.join("climate.csv")),
            "--stations",
            "2",
            "--epochs",
            "1",
            "--batch-size",
            "16",
            "--seed",
            "11",
            "--out-dir",
            &s(run),
        ]);
    }
    for name in ["registry.jsonl", "station_02.ckpt", "station_02.scaler"] {
        assert_eq!(
            std::fs::read(run_a.join(name)).unwrap(),
            std::fs::read(run_b.join(name)).unwrap(),
            "train output differs for {name}"
        );
    }

    let (series_a, series_b) = (dir.path().join("s_a.csv"), dir.path().join("s_b.csv"));
    for series in [&series_a, &series_b] {
        run_ok(&[
            "predict",
            "--registry",
            &s(&run_a.join("registry.jsonl")),
            "--pollutants",
            &s(&data_a.join("pollutants.csv")),
            "--climate",
            &s(&data_a.join("climate.csv")),
            "--station",
            "2",
            "--day",
            "2017-01-04",
            "--out",
            &s(series),
        ]);
    }
    assert_eq!(
        std::fs::read(&series_a).unwrap(),
        std::fs::read(&series_b).unwrap()
    );

    let (plot_a, plot_b) = (dir.path().join("p_a.svg"), dir.path().join("p_b.svg"));
    for (series, plot) in [(&series_a, &plot_a), (&series_b, &plot_b)] {
        run_ok(&["plot", "--series", &s(series), "--out", &s(plot)]);
    }
    assert_eq!(
        std::fs::read(&plot_a).unwrap(),
        std::fs::read(&plot_b).unwrap()
    );
}

#[test]
fn exit_codes_are_categorized() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    run_ok(&[
        "synth",
        "--hours",
        "72",
        "--seed",
        "2",
        "--out-dir",
        &s(&data),
    ]);
    let pollutants = s(&data.join("pollutants.csv"));
    let climate = s(&data.join("climate.csv"));

    // Bad arguments: 2.
    assert_eq!(run_code(&["train", "--no-such-flag"]), 2);
    assert_eq!(run_code(&["synth", "--gap-fraction", "abc"]), 2);

    // Data errors: 3.
    assert_eq!(
        run_code(&["check", "--pollutants", "/absent.csv", "--climate", "/absent2.csv"]),
        3
    );
    let run_dir = dir.path().join("none");
    assert_eq!(
        run_code(&[
            "train",
            "--pollutants",
            &pollutants,
            "--climate",
            &climate,
            "--stations",
            "50",
            "--out-dir",
            &s(&run_dir),
        ]),
        3,
        "a station with no data cannot train"
    );

    // Training divergence: 4. Runaway SGD explodes the loss to non-finite
    // within a few dozen single-sample steps.
    let run_dir = dir.path().join("diverge");
    assert_eq!(
        run_code(&[
            "train",
            "--pollutants",
            &pollutants,
            "--climate",
            &climate,
            "--stations",
            "0",
            "--epochs",
            "5",
            "--batch-size",
            "1",
            "--optimizer",
            "sgd",
            "--learning-rate",
            "1e12",
            "--out-dir",
            &s(&run_dir),
        ]),
        4
    );
}

#[test]
fn partial_station_failures_do_not_abort_the_rest() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    run_ok(&[
        "synth",
        "--hours",
        "90",
        "--seed",
        "6",
        "--out-dir",
        &s(&data),
    ]);
    let run_dir = dir.path().join("run");
    let summary = run_ok(&[
        "train",
        "--pollutants",
        &s(&data.join("pollutants.csv")),
        "--climate",
        &s(&data.join("climate.csv")),
        "--stations",
        "3,50",
        "--epochs",
        "1",
        "--batch-size",
        "16",
        "--out-dir",
        &s(&run_dir),
    ]);
    assert_eq!(summary["stations_trained"], 1);
    assert_eq!(summary["stations_failed"], 1);
    assert!(run_dir.join("station_03.ckpt").exists());
}

#[test]
fn utc_offset_shifts_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    run_ok(&[
        "synth",
        "--hours",
        "72",
        "--seed",
        "8",
        "--out-dir",
        &s(&data),
    ]);
    let args_base = [
        "check",
        "--pollutants",
        &s(&data.join("pollutants.csv")),
        "--climate",
        &s(&data.join("climate.csv")),
    ]
    .map(String::from);
    let plain = run_ok(&args_base.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(plain["start"], "2017-01-01T00:00");

    let mut shifted_args: Vec<String> = args_base.to_vec();
    shifted_args.push("--utc-offset".into());
    shifted_args.push("-9".into());
    let shifted = run_ok(&shifted_args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(shifted["start"], "2016-12-31T15:00");
    assert_eq!(shifted["rows"], plain["rows"]);
}

#[test]
fn gappy_synthetic_data_survives_the_whole_ingest_path() {
    // Library-level spot check that the gap injector and the imputer
    // compose: no missing cells afterwards, mask counts the fills.
    let table = common::synth_table_with_gaps(120, 19, 0.15);
    assert_eq!(table.missing_cells(), 0);
    assert!(table.imputed_cells() > 0);
    assert_eq!(table.n_hours(), 120);
}
