//! Train a few stations, evaluate their test splits, and render the
//! per-station MSE table in the 1e-5 unit format.
//!
//! ```bash
//! cargo run --release --example evaluate_and_report
//! ```

use dustcast::eval::{evaluate, render_table};
use dustcast::features::prepare_station_dataset;
use dustcast::ingest::table_from_records;
use dustcast::synth::{generate, SynthConfig};
use dustcast::train::{train_station, TrainConfig};

fn main() -> dustcast::Result<()> {
    let synth = SynthConfig {
        n_hours: 400,
        seed: 9,
        ..SynthConfig::default()
    };
    let (pollutants, climate) = generate(&synth)?;
    let table = table_from_records(&pollutants, &climate)?;

    let config = TrainConfig {
        epochs: 3,
        batch_size: 16,
        learning_rate: 5e-3,
        seed: 9,
        ..TrainConfig::default()
    };

    let mut reports = Vec::new();
    for station in [1, 6, 20] {
        let (scaler, splits) = prepare_station_dataset(
            &table,
            station,
            config.window,
            config.train_frac,
            config.val_frac,
        )?;
        let (model, train_report) = train_station(&splits, station, &config)?;
        let report = evaluate(&model, &scaler, &splits.test)?;
        println!(
            "station {station}: test mse {:.4e} over {} samples (best val {:.4e}), rmse {:.1} ug/m3 pm10",
            report.test_mse, report.n_samples, train_report.best_val_mse, report.pm10_rmse_ugm3
        );
        reports.push(report);
    }

    let rendering = render_table(&reports)?;
    println!("\n{}", rendering.text);
    println!("csv form:\n{}", rendering.csv);
    Ok(())
}
