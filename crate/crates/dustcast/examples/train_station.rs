//! Train one station's model on synthetic data and watch the loss curve.
//!
//! ```bash
//! cargo run --release --example train_station
//! ```

use dustcast::features::prepare_station_dataset;
use dustcast::ingest::table_from_records;
use dustcast::synth::{generate, SynthConfig};
use dustcast::train::{train_station, TrainConfig};

fn main() -> dustcast::Result<()> {
    let out_dir = std::path::Path::new("target/example-output/train_station");
    std::fs::create_dir_all(out_dir).map_err(|e| dustcast::Error::io(out_dir, e))?;

    let synth = SynthConfig {
        n_hours: 400,
        seed: 42,
        ..SynthConfig::default()
    };
    let (pollutants, climate) = generate(&synth)?;
    let table = table_from_records(&pollutants, &climate)?;

    let station = 6;
    let config = TrainConfig {
        epochs: 4,
        batch_size: 16,
        learning_rate: 5e-3,
        seed: 42,
        ..TrainConfig::default()
    };
    let (scaler, splits) = prepare_station_dataset(
        &table,
        station,
        config.window,
        config.train_frac,
        config.val_frac,
    )?;
    println!(
        "station {station}: {} train / {} val / {} test windows of {} hours",
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        config.window
    );

    let (model, report) = train_station(&splits, station, &config)?;
    for (epoch, (train, val)) in report
        .train_losses
        .iter()
        .zip(&report.val_losses)
        .enumerate()
    {
        println!("epoch {epoch}: train {train:.5} val {val:.5}");
    }
    println!(
        "best validation mse {:.5e} at epoch {} ({:.1}s)",
        report.best_val_mse, report.best_epoch, report.wall_secs
    );

    let ckpt = out_dir.join("station_06.ckpt");
    let scaler_path = out_dir.join("station_06.scaler");
    model.save(&ckpt)?;
    scaler.save(&scaler_path)?;
    println!("saved {} and {}", ckpt.display(), scaler_path.display());
    println!("rerunning with the same seed reproduces the checkpoint byte-for-byte");
    Ok(())
}
