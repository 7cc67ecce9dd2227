//! Train a station model, roll one-step-ahead predictions over a full day
//! (each hour fed the 48 true preceding hours), and export the series as
//! CSV plus a two-panel SVG plot.
//!
//! ```bash
//! cargo run --release --example predict_day
//! ```

use chrono::NaiveDate;
use dustcast::eval::{emit_plot, predict_series};
use dustcast::features::prepare_station_dataset;
use dustcast::ingest::table_from_records;
use dustcast::synth::{generate, SynthConfig};
use dustcast::train::{train_station, TrainConfig};

fn main() -> dustcast::Result<()> {
    let out_dir = std::path::Path::new("target/example-output/predict_day");
    std::fs::create_dir_all(out_dir).map_err(|e| dustcast::Error::io(out_dir, e))?;

    let synth = SynthConfig {
        n_hours: 400,
        seed: 17,
        ..SynthConfig::default()
    };
    let (pollutants, climate) = generate(&synth)?;
    let table = table_from_records(&pollutants, &climate)?;

    let station = 6;
    let config = TrainConfig {
        epochs: 4,
        batch_size: 16,
        learning_rate: 5e-3,
        seed: 17,
        ..TrainConfig::default()
    };
    let (scaler, splits) = prepare_station_dataset(
        &table,
        station,
        config.window,
        config.train_frac,
        config.val_frac,
    )?;
    let (model, _) = train_station(&splits, station, &config)?;

    // Day 13 falls inside the test partition of a 400-hour run.
    let day = NaiveDate::from_ymd_opt(2017, 1, 13).expect("valid date");
    let series = predict_series(&model, &scaler, &table, station, day, config.window)?;
    println!(
        "{} hourly predictions for station {station} on {day}",
        series.rows.len()
    );
    for row in series.rows.iter().step_by(6) {
        println!(
            "{}: pm10 pred {:.1} true {:.1} ug/m3, pm25 pred {:.1} true {:.1} ug/m3",
            row.timestamp.format("%H:%M"),
            row.pm10_pred_ugm3,
            row.pm10_true_ugm3,
            row.pm25_pred_ugm3,
            row.pm25_true_ugm3
        );
    }

    let csv_path = out_dir.join("series.csv");
    let svg_path = out_dir.join("day.svg");
    series.write_csv(&csv_path)?;
    emit_plot(&series, &svg_path)?;
    println!("wrote {} and {}", csv_path.display(), svg_path.display());
    Ok(())
}
