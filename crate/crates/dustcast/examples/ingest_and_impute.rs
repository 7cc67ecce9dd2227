//! Parse pollutant/climate CSVs, align them onto a gap-free hourly grid,
//! and fill the holes by linear interpolation.
//!
//! ```bash
//! cargo run --release --example ingest_and_impute
//! ```

use dustcast::ingest::{
    align_hourly, hour_range, impute_missing, parse_climate_csv, parse_pollutant_csv,
    write_climate_csv, write_pollutant_csv,
};
use dustcast::synth::{generate, inject_gaps, SynthConfig};

fn main() -> dustcast::Result<()> {
    let out_dir = std::path::Path::new("target/example-output/ingest_and_impute");
    std::fs::create_dir_all(out_dir).map_err(|e| dustcast::Error::io(out_dir, e))?;

    // Stage some gappy input files.
    let config = SynthConfig {
        n_hours: 300,
        seed: 7,
        ..SynthConfig::default()
    };
    let (mut pollutants, mut climate) = generate(&config)?;
    inject_gaps(&mut pollutants, &mut climate, 0.12, 1)?;
    let p_path = out_dir.join("pollutants.csv");
    let c_path = out_dir.join("climate.csv");
    write_pollutant_csv(&p_path, &pollutants)?;
    write_climate_csv(&c_path, &climate)?;

    // The actual ingest path: parse, align, impute.
    let pollutants = parse_pollutant_csv(&p_path)?;
    let climate = parse_climate_csv(&c_path)?;
    let (start, end) = hour_range(&pollutants, &climate).expect("non-empty input");
    let aligned = align_hourly(&pollutants, &climate, start, end)?;
    println!(
        "aligned {} hours x {} columns, {} cells missing",
        aligned.n_hours(),
        dustcast::FEATURE_DIM,
        aligned.missing_cells()
    );

    let table = impute_missing(&aligned)?;
    println!(
        "imputed {} cells; none missing now ({} remain flagged in the mask)",
        table.imputed_cells(),
        table.imputed_cells()
    );

    // Observed cells are untouched by imputation.
    let sample = (0..table.n_hours())
        .flat_map(|r| (0..dustcast::FEATURE_DIM).map(move |c| (r, c)))
        .find(|&(r, c)| !table.is_imputed(r, c))
        .expect("some observed cell");
    println!(
        "spot check row {} col {}: observed value {} carried over exactly",
        sample.0,
        sample.1,
        table.value(sample.0, sample.1)
    );
    Ok(())
}
