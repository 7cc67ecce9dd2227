//! Generate a deterministic synthetic dataset and write it as the two
//! ingest CSV files, with a share of cells blanked to exercise imputation.
//!
//! ```bash
//! cargo run --release --example synthesize_dataset
//! ```

use dustcast::ingest::{write_climate_csv, write_pollutant_csv};
use dustcast::synth::{generate, inject_gaps, SynthConfig};

fn main() -> dustcast::Result<()> {
    let out_dir = std::path::Path::new("target/example-output/synthesize_dataset");
    std::fs::create_dir_all(out_dir).map_err(|e| dustcast::Error::io(out_dir, e))?;

    let config = SynthConfig {
        n_hours: 1000,
        seed: 42,
        ..SynthConfig::default()
    };
    let (mut pollutants, mut climate) = generate(&config)?;
    println!(
        "generated {} pollutant rows across {} stations and {} climate rows",
        pollutants.len(),
        config.n_stations,
        climate.len()
    );

    let blanked = inject_gaps(&mut pollutants, &mut climate, 0.08, config.seed)?;
    println!("blanked {blanked} cells (8% uniform, never a whole column)");

    let p_path = out_dir.join("pollutants.csv");
    let c_path = out_dir.join("climate.csv");
    write_pollutant_csv(&p_path, &pollutants)?;
    write_climate_csv(&c_path, &climate)?;
    println!("wrote {} and {}", p_path.display(), c_path.display());
    println!("same seed always reproduces these files byte-for-byte");
    Ok(())
}
