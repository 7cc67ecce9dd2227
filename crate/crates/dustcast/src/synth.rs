//! Deterministic synthetic dataset generator.
//!
//! The real monitoring data is not distributable, so desk-scale verification
//! runs on generated series that keep the domain's key structure: sunlight
//! follows a 24-hour half-sine, ozone tracks lagged sunlight (the secondary
//! pollutant), the primary gases are AR(1) processes with station-specific
//! means, and the PM targets are weighted sums of the primaries plus a
//! calm-wind accumulation term plus noise. Processes are deliberately simple
//! so tests can reason about them in closed form.

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::ingest::{ClimateRecord, PollutantRecord};
use crate::{CLIMATE_VARS, POLLUTANTS_PER_STATION, POLLUTANT_STATIONS};

/// Knobs for the generator; defaults give a learnable Seoul-sized grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_hours: usize,
    pub seed: u64,
    /// Pollutant station count; the full pipeline expects 39.
    pub n_stations: usize,
    pub start: NaiveDateTime,
    /// Multiplier on every process's noise scale; 0 makes the data exact.
    pub noise_std: f64,
    /// Strength of the ozone response to lagged sunlight.
    pub o3_sunlight_coupling: f64,
    /// Strength of the PM build-up under calm wind.
    pub pm_wind_coupling: f64,
    pub o3_lag_hours: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_hours: 2000,
            seed: 42,
            n_stations: POLLUTANT_STATIONS,
            start: NaiveDate::from_ymd_opt(2017, 1, 1)
                .expect("valid date")
                .and_hms_opt(0, 0, 0)
                .expect("valid time"),
            noise_std: 1.0,
            o3_sunlight_coupling: 0.02,
            pm_wind_coupling: 2.0,
            o3_lag_hours: 2,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_hours < 72 {
            return Err(Error::BadSynthConfig(format!(
                "n_hours must be >= 72, got {}",
                self.n_hours
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::BadSynthConfig(format!(
                "noise_std must be >= 0, got {}",
                self.noise_std
            )));
        }
        if self.n_stations == 0 || self.n_stations > POLLUTANT_STATIONS {
            return Err(Error::BadSynthConfig(format!(
                "n_stations must lie in 1..={POLLUTANT_STATIONS}, got {}",
                self.n_stations
            )));
        }
        if self.o3_lag_hours >= 24 {
            return Err(Error::BadSynthConfig(format!(
                "o3_lag_hours must be < 24, got {}",
                self.o3_lag_hours
            )));
        }
        Ok(())
    }
}

/// Fraction of sunshine within the hour: a half-sine over 06:00-18:00.
pub fn sunlight_at(start: NaiveDateTime, hour: i64) -> f64 {
    use chrono::Timelike;
    let hod = (start + TimeDelta::hours(hour)).hour() as f64;
    if (6.0..18.0).contains(&hod) {
        (std::f64::consts::PI * (hod - 6.0) / 12.0).sin()
    } else {
        0.0
    }
}

struct StationLevels {
    so2_mean: f64,
    co_mean: f64,
    no2_mean: f64,
    o3_base: f64,
    pm_base: f64,
}

struct Ar1 {
    value: f64,
    mean: f64,
    phi: f64,
    sigma: f64,
}

impl Ar1 {
    fn new(mean: f64, phi: f64, sigma: f64) -> Ar1 {
        Ar1 {
            value: mean,
            mean,
            phi,
            sigma,
        }
    }

    fn step(&mut self, rng: &mut ChaCha20Rng, unit: &Normal<f64>) -> f64 {
        let noise = self.sigma * unit.sample(rng);
        self.value = self.mean + self.phi * (self.value - self.mean) + noise;
        self.value
    }
}

/// Generate `n_hours` of records for every station, fully determined by the
/// seed. Noise draws happen in a fixed order (climate first, then stations
/// in id order), so output never depends on iteration accidents.
pub fn generate(config: &SynthConfig) -> Result<(Vec<PollutantRecord>, Vec<ClimateRecord>)> {
    config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let ns = config.noise_std;

    let levels: Vec<StationLevels> = (0..config.n_stations)
        .map(|_| StationLevels {
            so2_mean: rng.random_range(0.003..0.006),
            co_mean: rng.random_range(0.4..0.7),
            no2_mean: rng.random_range(0.02..0.04),
            o3_base: rng.random_range(0.010..0.020),
            pm_base: rng.random_range(5.0..15.0),
        })
        .collect();

    let mut wind = Ar1::new(3.0, 0.85, 0.5 * ns);
    let mut humidity = Ar1::new(60.0, 0.9, 3.0 * ns);
    let mut vapor = Ar1::new(10.0, 0.9, 0.4 * ns);
    let mut dew = Ar1::new(5.0, 0.9, 0.8 * ns);
    let mut pressure = Ar1::new(1013.0, 0.95, 1.0 * ns);
    let mut visibility = Ar1::new(12_000.0, 0.8, 800.0 * ns);
    let mut temp_anomaly = Ar1::new(0.0, 0.9, 0.7 * ns);
    let mut wind_dir: i64 = 0;

    let mut so2: Vec<Ar1> = levels
        .iter()
        .map(|l| Ar1::new(l.so2_mean, 0.9, 0.0005 * ns))
        .collect();
    let mut co: Vec<Ar1> = levels
        .iter()
        .map(|l| Ar1::new(l.co_mean, 0.9, 0.02 * ns))
        .collect();
    let mut no2: Vec<Ar1> = levels
        .iter()
        .map(|l| Ar1::new(l.no2_mean, 0.9, 0.002 * ns))
        .collect();

    let mut pollutants = Vec::with_capacity(config.n_hours * config.n_stations);
    let mut climate = Vec::with_capacity(config.n_hours);

    for t in 0..config.n_hours as i64 {
        let ts = config.start + TimeDelta::hours(t);
        use chrono::Timelike;
        let hod = ts.hour() as f64;

        let wind_now = wind.step(&mut rng, &unit).max(0.0);
        wind_dir = (wind_dir + rng.random_range(-1..=1)).rem_euclid(16);
        let humidity_now = humidity.step(&mut rng, &unit).clamp(0.0, 100.0);
        let vapor_now = vapor.step(&mut rng, &unit).max(0.0);
        let dew_now = dew.step(&mut rng, &unit);
        let pressure_now = pressure.step(&mut rng, &unit);
        let sun_now = sunlight_at(config.start, t);
        let visibility_now = visibility.step(&mut rng, &unit).max(0.0);
        let temp_now =
            8.0 + 5.0 * (std::f64::consts::TAU * (hod - 9.0) / 24.0).sin() + temp_anomaly.step(&mut rng, &unit);

        climate.push(ClimateRecord {
            timestamp: ts,
            wind_speed: Some(wind_now),
            wind_direction: Some(wind_dir as u8),
            humidity: Some(humidity_now),
            vapor_pressure: Some(vapor_now),
            dew_point: Some(dew_now),
            surface_pressure: Some(pressure_now),
            sunlight: Some(sun_now),
            visibility: Some(visibility_now),
            surface_temp: Some(temp_now),
        });

        let lagged_sun = sunlight_at(config.start, t - config.o3_lag_hours as i64);
        let calm = (4.0 - wind_now).max(0.0);

        for (s, level) in levels.iter().enumerate() {
            let so2_now = so2[s].step(&mut rng, &unit).max(0.0);
            let co_now = co[s].step(&mut rng, &unit).max(0.0);
            let no2_now = no2[s].step(&mut rng, &unit).max(0.0);
            let o3_now = (level.o3_base
                + config.o3_sunlight_coupling * lagged_sun
                + 0.002 * ns * unit.sample(&mut rng))
            .max(0.0);
            let pm10_now = (level.pm_base
                + 3000.0 * so2_now
                + 20.0 * co_now
                + 300.0 * no2_now
                + config.pm_wind_coupling * calm
                + 1.5 * ns * unit.sample(&mut rng))
            .max(0.0);
            let pm25_now = (0.55 * pm10_now + 1.0 + 0.8 * ns * unit.sample(&mut rng)).max(0.0);

            pollutants.push(PollutantRecord {
                station_id: s,
                timestamp: ts,
                so2: Some(so2_now),
                co: Some(co_now),
                no2: Some(no2_now),
                o3: Some(o3_now),
                pm10: Some(pm10_now),
                pm25: Some(pm25_now),
            });
        }
    }
    Ok((pollutants, climate))
}

fn pollutant_cell(r: &mut PollutantRecord, elem: usize) -> &mut Option<f64> {
    match elem {
        0 => &mut r.so2,
        1 => &mut r.co,
        2 => &mut r.no2,
        3 => &mut r.o3,
        4 => &mut r.pm10,
        _ => &mut r.pm25,
    }
}

fn blank_climate_cell(r: &mut ClimateRecord, var: usize) -> bool {
    macro_rules! take {
        ($field:ident) => {{
            let was = r.$field.is_some();
            r.$field = None;
            was
        }};
    }
    match var {
        0 => take!(wind_speed),
        1 => take!(wind_direction),
        2 => take!(humidity),
        3 => take!(vapor_pressure),
        4 => take!(dew_point),
        5 => take!(surface_pressure),
        6 => take!(sunlight),
        7 => take!(visibility),
        _ => take!(surface_temp),
    }
}

fn climate_present(r: &ClimateRecord, var: usize) -> bool {
    r.values()[var].is_some()
}

/// Blank a uniform random share of value cells so the imputation path gets
/// exercised. Never empties a whole column: each (station, element) and
/// climate-variable series keeps at least one present value.
///
/// Returns the number of cells blanked.
pub fn inject_gaps(
    pollutants: &mut [PollutantRecord],
    climate: &mut [ClimateRecord],
    gap_fraction: f64,
    seed: u64,
) -> Result<usize> {
    if !(0.0..0.5).contains(&gap_fraction) {
        return Err(Error::BadGapFraction(gap_fraction));
    }
    if gap_fraction == 0.0 {
        return Ok(0);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let pollutant_columns = POLLUTANT_STATIONS * POLLUTANTS_PER_STATION;
    let mut present = vec![0usize; pollutant_columns + CLIMATE_VARS];
    for r in pollutants.iter() {
        for (elem, v) in r.values().into_iter().enumerate() {
            if v.is_some() {
                present[r.station_id * POLLUTANTS_PER_STATION + elem] += 1;
            }
        }
    }
    for r in climate.iter() {
        for (var, v) in r.values().into_iter().enumerate() {
            if v.is_some() {
                present[pollutant_columns + var] += 1;
            }
        }
    }

    let mut blanked = 0usize;
    for r in pollutants.iter_mut() {
        for elem in 0..POLLUTANTS_PER_STATION {
            let col = r.station_id * POLLUTANTS_PER_STATION + elem;
            let cell = pollutant_cell(r, elem);
            if cell.is_some() && rng.random::<f64>() < gap_fraction && present[col] > 1 {
                *cell = None;
                present[col] -= 1;
                blanked += 1;
            }
        }
    }
    for r in climate.iter_mut() {
        for var in 0..CLIMATE_VARS {
            let col = pollutant_columns + var;
            if climate_present(r, var) && rng.random::<f64>() < gap_fraction && present[col] > 1 {
                blank_climate_cell(r, var);
                present[col] -= 1;
                blanked += 1;
            }
        }
    }
    Ok(blanked)
}
